//! Small dense conic programs (SDP, LP, convex QP) behind one interface.
//!
//! [`ConicProblem`] describes the program, [`solve`] runs a primal-dual
//! interior-point method on it and [`kkt_residual`] scores any candidate
//! point independently of the solver.

mod dump;
mod embed;
mod ipm;
mod problem;

pub use dump::{read_dump, write_dump};
pub use embed::{embed_hermitian, HermitianEmbedding};
pub use problem::{BlockId, BlockKind, BlockValue, Candidate, ConicProblem, Constraint, Sense, Var};

use crate::error::Result;

pub const DEFAULT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyReport {
    /// Largest constraint violation, relative to `1 + |rhs|`.
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub relative_gap: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    /// One value per block, in the order the blocks were added.
    pub blocks: Vec<BlockValue>,
    /// One multiplier per constraint (Lagrangian `f - sum y_i (a_i x - b_i)`).
    pub duals: Vec<f64>,
    pub objective: f64,
    pub dual_objective: f64,
    pub report: AccuracyReport,
}

impl SolveOutcome {
    pub(crate) fn without_solution(problem: &ConicProblem, status: SolveStatus, iterations: usize) -> Self {
        Self {
            status,
            blocks: problem.blocks.iter().map(BlockValue::zeros).collect(),
            duals: vec![0.0; problem.constraints.len()],
            objective: f64::NAN,
            dual_objective: f64::NAN,
            report: AccuracyReport {
                primal_residual: f64::NAN,
                dual_residual: f64::NAN,
                relative_gap: f64::NAN,
                iterations,
            },
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    pub fn block(&self, id: BlockId) -> &BlockValue {
        &self.blocks[id.0]
    }

    pub fn candidate(&self) -> Candidate {
        Candidate {
            blocks: self.blocks.clone(),
            duals: Some(self.duals.clone()),
        }
    }
}

/// Solves `problem` to relative accuracy `tol`. Deterministic; infeasible and
/// unbounded programs are reported through the status, not as errors.
pub fn solve(problem: &ConicProblem, tol: f64) -> Result<SolveOutcome> {
    problem.validate()?;
    Ok(ipm::solve(problem, tol))
}

/// Max of primal infeasibility (row violations and cone violations) and, when
/// multipliers are supplied, the complementary-slackness residual. Zero at an
/// exact optimum.
pub fn kkt_residual(problem: &ConicProblem, candidate: &Candidate) -> f64 {
    let x = &candidate.blocks;
    let mut worst = 0.0f64;
    let mut row_slack = Vec::with_capacity(problem.constraints.len());
    for c in &problem.constraints {
        let v = problem.row_value(c, x) - c.rhs;
        let viol = match c.sense {
            Sense::Eq => v.abs(),
            Sense::Le => v.max(0.0),
            Sense::Ge => (-v).max(0.0),
        };
        worst = worst.max(viol);
        row_slack.push(v);
    }
    for (kind, val) in problem.blocks.iter().zip(x) {
        let viol = match (kind, val) {
            (BlockKind::Psd(_), BlockValue::Matrix(m)) => {
                let sym = (m + m.transpose()) * 0.5;
                (-sym.symmetric_eigenvalues().min()).max(0.0)
            }
            (BlockKind::Nonneg(_), BlockValue::Vector(v)) => (-v.min()).max(0.0),
            _ => 0.0,
        };
        worst = worst.max(viol);
    }
    let Some(y) = &candidate.duals else {
        return worst;
    };

    for ((c, slack), yi) in problem.constraints.iter().zip(&row_slack).zip(y) {
        if c.sense != Sense::Eq {
            worst = worst.max((yi * slack).abs());
        }
    }
    // Dual slack of every cone block: gradient of the objective minus the
    // multiplier-weighted rows.
    let mut grad: Vec<BlockValue> = problem.blocks.iter().map(BlockValue::zeros).collect();
    let add = |g: &mut Vec<BlockValue>, v: &Var, coef: f64| match &mut g[v.block] {
        BlockValue::Matrix(m) => {
            if v.row == v.col {
                m[(v.row, v.row)] += coef;
            } else {
                m[(v.row, v.col)] += 0.5 * coef;
                m[(v.col, v.row)] += 0.5 * coef;
            }
        }
        BlockValue::Vector(vec) => vec[v.row] += coef,
    };
    for (v, coef) in &problem.objective {
        add(&mut grad, v, *coef);
    }
    for (a, b, coef) in &problem.quadratic {
        add(&mut grad, a, coef * x[b.block].get(b));
        add(&mut grad, b, coef * x[a.block].get(a));
    }
    for (c, yi) in problem.constraints.iter().zip(y) {
        for (v, coef) in &c.terms {
            add(&mut grad, v, -coef * yi);
        }
    }
    for ((kind, g), val) in problem.blocks.iter().zip(&grad).zip(x) {
        let comp = match (kind, g, val) {
            (BlockKind::Psd(_), BlockValue::Matrix(s), BlockValue::Matrix(m)) => s.dot(m).abs(),
            (BlockKind::Nonneg(_), BlockValue::Vector(s), BlockValue::Vector(v)) => {
                s.iter().zip(v.iter()).map(|(a, b)| (a * b).abs()).sum()
            }
            _ => 0.0,
        };
        worst = worst.max(comp);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::Rng;

    use crate::model::substream;

    fn lp_bound() -> (ConicProblem, BlockId) {
        let mut p = ConicProblem::new();
        let x = p.add_block(BlockKind::Nonneg(1));
        p.add_objective(x.at(0), 1.0);
        p.add_constraint(vec![(x.at(0), 1.0)], Sense::Ge, 3.0);
        (p, x)
    }

    fn sdp_trace() -> (ConicProblem, BlockId) {
        let mut p = ConicProblem::new();
        let x = p.add_block(BlockKind::Psd(2));
        p.add_objective(x.entry(0, 0), 1.0);
        p.add_objective(x.entry(1, 1), 1.0);
        p.add_constraint(vec![(x.entry(0, 0), 1.0)], Sense::Ge, 2.0);
        (p, x)
    }

    /// `min ||p - target||^2` over `0 <= p <= upper`.
    fn box_qp(target: [f64; 2], upper: [f64; 2]) -> (ConicProblem, BlockId) {
        let mut p = ConicProblem::new();
        let x = p.add_block(BlockKind::Nonneg(2));
        for i in 0..2 {
            p.add_quadratic(x.at(i), x.at(i), 1.0);
            p.add_objective(x.at(i), -2.0 * target[i]);
            p.add_constraint(vec![(x.at(i), 1.0)], Sense::Le, upper[i]);
        }
        (p, x)
    }

    #[test]
    fn lp_example() {
        let (p, x) = lp_bound();
        let out = solve(&p, DEFAULT_TOL).unwrap();
        assert_eq!(out.status, SolveStatus::Optimal);
        let v = out.block(x).vector().unwrap()[0];
        assert!((v - 3.0).abs() < 1e-7, "{v}");
        assert!(kkt_residual(&p, &out.candidate()) <= 1e-7);
    }

    #[test]
    fn sdp_example() {
        let (p, x) = sdp_trace();
        let out = solve(&p, DEFAULT_TOL).unwrap();
        assert_eq!(out.status, SolveStatus::Optimal);
        let m = out.block(x).matrix().unwrap();
        assert!((m.trace() - 2.0).abs() < 1e-7);
        assert!((m[(0, 0)] - 2.0).abs() < 1e-7);
        assert!(m[(1, 1)].abs() < 1e-6 && m[(0, 1)].abs() < 1e-6);
        assert!(kkt_residual(&p, &out.candidate()) <= 1e-7);
    }

    #[test]
    fn qp_box_projection_example() {
        let (p, x) = box_qp([2.0, 0.5], [1.0, 1.0]);
        let out = solve(&p, DEFAULT_TOL).unwrap();
        assert_eq!(out.status, SolveStatus::Optimal);
        let v = out.block(x).vector().unwrap();
        assert!((v[0] - 1.0).abs() < 1e-7 && (v[1] - 0.5).abs() < 1e-7, "{v}");
        assert!(kkt_residual(&p, &out.candidate()) <= 1e-7);
    }

    #[test]
    fn exact_optima_have_zero_residual() {
        let (p, _) = box_qp([2.0, 0.5], [1.0, 1.0]);
        let exact = Candidate {
            blocks: vec![BlockValue::Vector(DVector::from_vec(vec![1.0, 0.5]))],
            duals: Some(vec![-2.0, 0.0]),
        };
        assert!(kkt_residual(&p, &exact) <= 1e-12);

        let infeasible = Candidate {
            blocks: vec![BlockValue::Vector(DVector::from_vec(vec![2.0, 2.0]))],
            duals: None,
        };
        assert!((kkt_residual(&p, &infeasible) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn perturbing_an_optimum_increases_the_residual() {
        let (p, _) = box_qp([2.0, 0.5], [1.0, 1.0]);
        let base = vec![1.0, 0.5];
        let mut rng = substream(11, 0);
        for _ in 0..50 {
            let d: Vec<f64> = (0..2).map(|_| rng.random_range(-0.1..0.1)).collect();
            let cand = Candidate {
                blocks: vec![BlockValue::Vector(DVector::from_vec(vec![base[0] + d[0], base[1] + d[1]]))],
                duals: Some(vec![-2.0, 0.0]),
            };
            let r = kkt_residual(&p, &cand);
            assert!(r >= 0.9 * d[0].abs().min(0.1), "residual {r} for step {d:?}");
            assert!(r > 0.0);
        }
    }

    #[test]
    fn reports_infeasible_lp() {
        let mut p = ConicProblem::new();
        let x = p.add_block(BlockKind::Nonneg(2));
        p.add_objective(x.at(0), 1.0);
        // x0 >= x1 + 1 and x1 >= x0 + 1
        p.add_constraint(vec![(x.at(0), 1.0), (x.at(1), -1.0)], Sense::Ge, 1.0);
        p.add_constraint(vec![(x.at(1), 1.0), (x.at(0), -1.0)], Sense::Ge, 1.0);
        let out = solve(&p, DEFAULT_TOL).unwrap();
        assert_eq!(out.status, SolveStatus::Infeasible);
    }

    #[test]
    fn reports_unbounded_lp() {
        let mut p = ConicProblem::new();
        let x = p.add_block(BlockKind::Nonneg(1));
        p.add_objective(x.at(0), -1.0);
        p.add_constraint(vec![(x.at(0), 1.0)], Sense::Ge, 1.0);
        let out = solve(&p, DEFAULT_TOL).unwrap();
        assert_eq!(out.status, SolveStatus::Unbounded);
    }

    #[test]
    fn reports_infeasible_sdp() {
        // X psd with X00 <= -1.
        let mut p = ConicProblem::new();
        let x = p.add_block(BlockKind::Psd(2));
        p.add_objective(x.entry(1, 1), 1.0);
        p.add_constraint(vec![(x.entry(0, 0), 1.0)], Sense::Le, -1.0);
        let out = solve(&p, DEFAULT_TOL).unwrap();
        assert_eq!(out.status, SolveStatus::Infeasible);
    }

    #[test]
    fn free_variables_and_equalities() {
        // min (u - 3)^2 + v  s.t. u + v = 1, v >= 0, u free  -> u = 1, v = 0
        let mut p = ConicProblem::new();
        let u = p.add_block(BlockKind::Free(1));
        let v = p.add_block(BlockKind::Nonneg(1));
        p.add_quadratic(u.at(0), u.at(0), 1.0);
        p.add_objective(u.at(0), -6.0);
        p.add_objective(v.at(0), 1.0);
        p.add_constraint(vec![(u.at(0), 1.0), (v.at(0), 1.0)], Sense::Eq, 1.0);
        let out = solve(&p, DEFAULT_TOL).unwrap();
        assert_eq!(out.status, SolveStatus::Optimal);
        // Eliminating u gives (v + 2)^2 + v, increasing on v >= 0.
        let uu = out.block(u).vector().unwrap()[0];
        let vv = out.block(v).vector().unwrap()[0];
        assert!((uu - 1.0).abs() < 1e-6 && vv.abs() < 1e-6, "u={uu} v={vv}");
        assert!(kkt_residual(&p, &out.candidate()) <= 1e-6);
    }

    #[test]
    fn rejects_bad_problems() {
        let mut p = ConicProblem::new();
        let x = p.add_block(BlockKind::Nonneg(1));
        p.add_constraint(vec![(x.at(3), 1.0)], Sense::Ge, 1.0);
        assert!(solve(&p, DEFAULT_TOL).is_err());

        let mut p = ConicProblem::new();
        let x = p.add_block(BlockKind::Nonneg(1));
        p.add_quadratic(x.at(0), x.at(0), -1.0);
        assert!(solve(&p, DEFAULT_TOL).is_err());
    }

    #[test]
    fn weak_duality_on_random_sdps() {
        let mut rng = substream(5, 0);
        for _ in 0..20 {
            let c = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
            let c = &c + c.transpose();
            let mut p = ConicProblem::new();
            let x = p.add_block(BlockKind::Psd(3));
            for i in 0..3 {
                for j in i..3 {
                    let coef = if i == j { c[(i, i)] } else { 2.0 * c[(i, j)] };
                    p.add_objective(x.entry(i, j), coef);
                }
            }
            p.add_constraint((0..3).map(|i| (x.entry(i, i), 1.0)).collect(), Sense::Eq, 1.0);
            let out = solve(&p, DEFAULT_TOL).unwrap();
            assert!(out.is_optimal());
            // Optimum of min <C,X> over the spectraplex is lambda_min(C).
            let lmin = c.symmetric_eigenvalues().min();
            assert!((out.objective - lmin).abs() < 1e-6, "{} vs {lmin}", out.objective);
            assert!((out.dual_objective - out.objective).abs() <= 1e-6 * (1.0 + lmin.abs()));
        }
    }
}
