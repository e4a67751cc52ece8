//! Small semidefinite program solved with the built-in interior-point method:
//! minimize the trace of a 2x2 PSD matrix whose entries are partly pinned.

use multicast_sr::conic::{kkt_residual, solve, BlockKind, ConicProblem, Sense, DEFAULT_TOL};

fn main() -> multicast_sr::Result<()> {
    let mut p = ConicProblem::new();
    let x = p.add_block(BlockKind::Psd(2));
    p.add_objective(x.entry(0, 0), 1.0);
    p.add_objective(x.entry(1, 1), 1.0);
    // X_01 = 1 forces X_00 * X_11 >= 1, so the optimum is the all-ones matrix.
    p.add_constraint(vec![(x.entry(0, 1), 1.0)], Sense::Eq, 1.0);
    p.add_constraint(vec![(x.entry(0, 0), 1.0)], Sense::Ge, 0.5);

    let out = solve(&p, DEFAULT_TOL)?;
    println!("status     {:?}", out.status);
    println!("objective  {:.9}", out.objective);
    println!("dual bound {:.9}", out.dual_objective);
    println!("X = {}", out.block(x).matrix().expect("matrix block"));
    println!("KKT residual {:.2e} after {} iterations", kkt_residual(&p, &out.candidate()), out.report.iterations);
    Ok(())
}
