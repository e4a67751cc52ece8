//! Per-antenna QoS power minimization by semidefinite relaxation and
//! Gaussian randomization.
//!
//! The relaxation lifts every beam to `X_k = w_k w_k^H` and drops the rank
//! constraint. Candidate beam directions are then drawn from the relaxed
//! covariances; for each candidate set the power-control problem
//!
//! ```text
//! min r  s.t.  p_k g_ik >= gamma_i (sum_{l != k} p_l g_il + sigma_i^2),
//!              sum_k p_k |v_k[n]|^2 <= r P_n,   p >= 0
//! ```
//!
//! is solved exactly (see [`mmpc_lp`]) and the best candidate is kept.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::conic::{self, embed_hermitian, BlockId, BlockKind, ConicProblem, HermitianEmbedding, Sense};
use crate::error::{Error, Result};
use crate::metrics::PrecodingMatrix;
use crate::model::{ChannelMatrix, GroupAssignment, NoiseProfile, PacVector, C64};

/// Per-user linear SINR targets.
#[derive(Debug, Clone, PartialEq)]
pub struct SinrTargets(Vec<f64>);

impl SinrTargets {
    pub fn new(g: Vec<f64>) -> Result<Self> {
        if g.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument("SINR targets must be finite and >= 0".into()));
        }
        Ok(Self(g))
    }

    /// Every member of group `k` gets `per_group[k]`.
    pub fn per_group(groups: &GroupAssignment, per_group: &[f64]) -> Result<Self> {
        if per_group.len() != groups.n_groups() {
            return Err(Error::Dimension("one target per group required".into()));
        }
        Self::new((0..groups.n_users()).map(|i| per_group[groups.group_of(i)]).collect())
    }

    pub fn uniform(n_users: usize, target: f64) -> Result<Self> {
        Self::new(vec![target; n_users])
    }

    pub fn get(&self, user: usize) -> f64 {
        self.0[user]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    fn group_active(&self, groups: &GroupAssignment, k: usize) -> bool {
        groups.members(k).iter().any(|&i| self.0[i] > 0.0)
    }
}

/// Relaxed beam covariances, one Hermitian PSD `N_t x N_t` matrix per group.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSet(Vec<DMatrix<C64>>);

impl CovarianceSet {
    pub fn new(x: Vec<DMatrix<C64>>) -> Self {
        Self(x)
    }

    pub fn matrices(&self) -> &[DMatrix<C64>] {
        &self.0
    }

    pub fn get(&self, k: usize) -> &DMatrix<C64> {
        &self.0[k]
    }
}

#[derive(Debug, Clone)]
pub struct QSolution {
    /// Objective of the returned precoder: worst per-antenna utilization, or
    /// total power for the sum-power variant.
    pub r_star: f64,
    pub precoder: PrecodingMatrix,
    /// Optimal value of the relaxation.
    pub r_lb: f64,
    pub n_feasible_candidates: usize,
}

/// Power budget a QoS problem minimizes.
#[derive(Debug, Clone, Copy)]
pub enum Budget<'a> {
    /// Worst per-antenna utilization `max_n [W W^H]_nn / P_n`.
    PerAntenna(&'a PacVector),
    /// Total radiated power `Tr(W W^H)`.
    SumPower,
}

impl Budget<'_> {
    fn value(&self, directions: &[DVector<C64>], p: &[f64]) -> f64 {
        match self {
            Budget::PerAntenna(pac) => (0..pac.len())
                .map(|n| {
                    let load: f64 = directions
                        .iter()
                        .zip(p)
                        .map(|(v, pk)| pk * v[n].norm_sqr())
                        .sum();
                    load / pac.limit(n)
                })
                .fold(0.0, f64::max),
            Budget::SumPower => directions
                .iter()
                .zip(p)
                .map(|(v, pk)| pk * v.norm_squared())
                .sum(),
        }
    }
}

/// Relaxed QoS problem ready for the conic solver.
#[derive(Debug, Clone)]
pub struct RelaxedQ {
    pub problem: ConicProblem,
    /// Real embedded block of each group; `None` for groups with no positive target.
    pub blocks: Vec<Option<BlockId>>,
    /// Utilization variable (per-antenna budget only).
    pub r: Option<BlockId>,
    embedding: HermitianEmbedding,
}

fn check_instance(
    h: &ChannelMatrix,
    groups: &GroupAssignment,
    targets: &SinrTargets,
    noise: &NoiseProfile,
    budget: &Budget,
) -> Result<()> {
    if groups.n_users() != h.n_users() || targets.0.len() != h.n_users() || noise.len() != h.n_users() {
        return Err(Error::Dimension("users disagree across channel/groups/targets/noise".into()));
    }
    if let Budget::PerAntenna(pac) = budget {
        if pac.len() != h.n_antennas() {
            return Err(Error::Dimension("one per-antenna limit per antenna required".into()));
        }
    }
    Ok(())
}

/// Relaxed per-antenna QoS problem: `min r` over `X_k psd` and `r >= 0`.
pub fn build_relaxed_q(
    h: &ChannelMatrix,
    groups: &GroupAssignment,
    targets: &SinrTargets,
    noise: &NoiseProfile,
    pac: &PacVector,
) -> Result<RelaxedQ> {
    build_relaxed(h, groups, targets, noise, Budget::PerAntenna(pac))
}

pub fn build_relaxed(
    h: &ChannelMatrix,
    groups: &GroupAssignment,
    targets: &SinrTargets,
    noise: &NoiseProfile,
    budget: Budget,
) -> Result<RelaxedQ> {
    check_instance(h, groups, targets, noise, &budget)?;
    let nt = h.n_antennas();
    let emb = embed_hermitian(nt);
    let mut p = ConicProblem::new();
    let blocks: Vec<Option<BlockId>> = (0..groups.n_groups())
        .map(|k| {
            targets
                .group_active(groups, k)
                .then(|| p.add_block(BlockKind::Psd(emb.real_dim())))
        })
        .collect();
    if blocks.iter().all(Option::is_none) {
        return Ok(RelaxedQ {
            problem: p,
            blocks,
            r: None,
            embedding: emb,
        });
    }

    for (k, members) in groups.iter().enumerate() {
        let Some(own) = blocks[k] else { continue };
        for &i in members {
            let gamma = targets.get(i);
            if gamma <= 0.0 {
                continue;
            }
            let hi = h.user_channel(i);
            let outer = &hi * hi.adjoint();
            let mut terms = emb.functional(own, &outer);
            for (l, other) in blocks.iter().enumerate() {
                if let (true, Some(b)) = (l != k, other) {
                    terms.extend(emb.functional(*b, &outer).into_iter().map(|(v, c)| (v, -gamma * c)));
                }
            }
            p.add_constraint(terms, Sense::Ge, gamma * noise.variance(i));
        }
    }

    let r = match budget {
        Budget::PerAntenna(pac) => {
            let r = p.add_block(BlockKind::Nonneg(1));
            p.add_objective(r.at(0), 1.0);
            for n in 0..nt {
                let mut terms: Vec<_> = blocks.iter().flatten().flat_map(|b| emb.diagonal(*b, n)).collect();
                terms.push((r.at(0), -pac.limit(n)));
                p.add_constraint(terms, Sense::Le, 0.0);
            }
            Some(r)
        }
        Budget::SumPower => {
            for b in blocks.iter().flatten() {
                for (v, c) in emb.trace(*b) {
                    p.add_objective(v, c);
                }
            }
            None
        }
    };
    Ok(RelaxedQ {
        problem: p,
        blocks,
        r,
        embedding: emb,
    })
}

/// Hermitian part with eigenvalues clipped at zero.
fn clip_psd(x: &DMatrix<C64>) -> DMatrix<C64> {
    let herm = (x + x.adjoint()) * C64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(herm);
    let vals = eig.eigenvalues.map(|l| C64::new(l.max(0.0), 0.0));
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.adjoint()
}

/// Solves the relaxation; returns its optimal value and the covariances.
/// Statuses other than optimal surface as [`Error::Solver`].
pub fn solve_relaxed_q(q: &RelaxedQ, tol: f64) -> Result<(f64, CovarianceSet)> {
    let nt = q.embedding.dim();
    if q.blocks.iter().all(Option::is_none) {
        return Ok((0.0, CovarianceSet(vec![DMatrix::zeros(nt, nt); q.blocks.len()])));
    }
    let out = conic::solve(&q.problem, tol)?;
    if !out.is_optimal() {
        return Err(Error::Solver { status: out.status });
    }
    let cov = q
        .blocks
        .iter()
        .map(|b| match b {
            Some(b) => clip_psd(&q.embedding.extract(out.block(*b).matrix().expect("psd block"))),
            None => DMatrix::zeros(nt, nt),
        })
        .collect();
    // The dual objective certifies a lower bound on the relaxation.
    let bound = if out.dual_objective.is_finite() {
        out.dual_objective.min(out.objective)
    } else {
        out.objective
    };
    Ok((bound.max(0.0), CovarianceSet(cov)))
}

/// Result of power control for fixed directions.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerControl {
    pub r: f64,
    pub p: Vec<f64>,
}

/// Minimum-budget group powers for fixed unit-norm (or zero) directions.
///
/// The SINR constraints read `p >= T(p)` with `T_k(p) = max_i gamma_i
/// (sum_{l != k} g_il p_l + sigma_i^2) / g_ik`, a monotone map. Both budgets
/// are monotone in `p`, so the optimum of the LP is the least fixed point of
/// `T`, which policy iteration finds exactly: fix the binding user of each
/// group, solve the resulting linear system, re-select the binding users at
/// the new point and repeat. Iterates increase monotonically towards the
/// least fixed point; a policy whose linear system has no positive solution
/// proves that no nonnegative power vector meets the targets.
///
/// Groups with a zero direction or only zero targets get zero power.
/// Returns `Ok(None)` when the targets are unachievable.
pub fn mmpc_lp(
    directions: &[DVector<C64>],
    h: &ChannelMatrix,
    groups: &GroupAssignment,
    targets: &SinrTargets,
    noise: &NoiseProfile,
    budget: Budget,
) -> Result<Option<PowerControl>> {
    check_instance(h, groups, targets, noise, &budget)?;
    if directions.len() != groups.n_groups() {
        return Err(Error::Dimension("one direction per group required".into()));
    }
    for v in directions {
        if v.len() != h.n_antennas() {
            return Err(Error::Dimension("direction length differs from antenna count".into()));
        }
        let norm = v.norm();
        if norm != 0.0 && (norm - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidArgument(format!("direction norm {norm} is not 1")));
        }
    }
    let g_count = groups.n_groups();
    let mut p = vec![0.0; g_count];
    let active: Vec<usize> = (0..g_count)
        .filter(|&k| targets.group_active(groups, k))
        .collect();
    if active.is_empty() {
        return Ok(Some(PowerControl { r: 0.0, p }));
    }
    if active.iter().any(|&k| directions[k].norm() == 0.0) {
        return Ok(None);
    }

    // gains[i][a] = |v_{active[a]}^H h_i|^2
    let users: Vec<Vec<usize>> = active
        .iter()
        .map(|&k| groups.members(k).iter().copied().filter(|&i| targets.get(i) > 0.0).collect())
        .collect();
    let gains: Vec<Vec<f64>> = (0..h.n_users())
        .map(|i| active.iter().map(|&k| h.gain(i, &directions[k])).collect())
        .collect();
    for (a, us) in users.iter().enumerate() {
        if us.iter().any(|&i| gains[i][a] <= f64::MIN_POSITIVE) {
            return Ok(None);
        }
    }
    let na = active.len();
    let interference_map = |i: usize, a: usize, q: &[f64]| -> f64 {
        let gamma = targets.get(i);
        let interf: f64 = (0..na).filter(|&l| l != a).map(|l| gains[i][l] * q[l]).sum();
        gamma * (interf + noise.variance(i)) / gains[i][a]
    };

    let zeros = vec![0.0; na];
    let mut policy: Vec<usize> = users
        .iter()
        .enumerate()
        .map(|(a, us)| argmax_first(us.iter().map(|&i| interference_map(i, a, &zeros))))
        .collect();
    let mut q = zeros;
    let mut converged = false;
    for _ in 0..(4 * h.n_users() + 16) {
        let mut lhs = DMatrix::<f64>::identity(na, na);
        let mut rhs = DVector::<f64>::zeros(na);
        for a in 0..na {
            let i = users[a][policy[a]];
            let gamma = targets.get(i);
            for l in 0..na {
                if l != a {
                    lhs[(a, l)] = -gamma * gains[i][l] / gains[i][a];
                }
            }
            rhs[a] = gamma * noise.variance(i) / gains[i][a];
        }
        let Some(sol) = lhs.lu().solve(&rhs) else {
            return Ok(None);
        };
        if sol.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Ok(None);
        }
        q = sol.iter().copied().collect();
        let mut changed = false;
        for a in 0..na {
            let current = interference_map(users[a][policy[a]], a, &q);
            let values: Vec<f64> = users[a].iter().map(|&i| interference_map(i, a, &q)).collect();
            let best = argmax_first(values.iter().copied());
            if values[best] > current * (1.0 + 1e-12) {
                policy[a] = best;
                changed = true;
            }
        }
        if !changed {
            converged = true;
            break;
        }
    }
    if !converged {
        return Ok(None);
    }
    for (a, &k) in active.iter().enumerate() {
        p[k] = q[a];
    }
    Ok(Some(PowerControl {
        r: budget.value(directions, &p),
        p,
    }))
}

fn argmax_first(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (idx, v) in values.enumerate() {
        if v > best.1 {
            best = (idx, v);
        }
    }
    best.0
}

/// Draw and power-control parameters shared by [`randomize`] and
/// [`randomize_with`].
pub struct Instance<'a> {
    pub h: &'a ChannelMatrix,
    pub groups: &'a GroupAssignment,
    pub targets: &'a SinrTargets,
    pub noise: &'a NoiseProfile,
    pub budget: Budget<'a>,
}

/// Recovers a rank-one precoder from the relaxation: the principal
/// eigenvector of each covariance is tried first, then `n_rand` Gaussian
/// draws; the feasible candidate with the smallest budget wins (earliest on
/// ties).
pub fn randomize<R: Rng + ?Sized>(
    cov: &CovarianceSet,
    inst: &Instance,
    r_lb: f64,
    n_rand: usize,
    rng: &mut R,
) -> Result<QSolution> {
    randomize_with(cov, inst, r_lb, n_rand, rng, &[])
}

/// [`randomize`] with extra direction sets evaluated after the eigenvector
/// candidate and before the random draws.
pub fn randomize_with<R: Rng + ?Sized>(
    cov: &CovarianceSet,
    inst: &Instance,
    r_lb: f64,
    n_rand: usize,
    rng: &mut R,
    extra: &[Vec<DVector<C64>>],
) -> Result<QSolution> {
    let nt = inst.h.n_antennas();
    let g_count = inst.groups.n_groups();
    if cov.0.len() != g_count {
        return Err(Error::Dimension("one covariance per group required".into()));
    }
    let total_trace: f64 = cov.0.iter().map(|x| x.trace().re).sum();
    let active: Vec<bool> = (0..g_count)
        .map(|k| {
            inst.targets.group_active(inst.groups, k)
                && cov.0[k].trace().re > 1e-14 * total_trace.max(f64::MIN_POSITIVE)
        })
        .collect();
    if active.iter().all(|a| !a) {
        let all_zero = inst.targets.0.iter().all(|&t| t == 0.0);
        if all_zero {
            return Ok(QSolution {
                r_star: 0.0,
                precoder: PrecodingMatrix::zeros(nt, g_count),
                r_lb,
                n_feasible_candidates: 1,
            });
        }
    }

    let eig: Vec<Option<SymmetricEigen<C64, nalgebra::Dyn>>> = cov
        .0
        .iter()
        .zip(&active)
        .map(|(x, &a)| a.then(|| SymmetricEigen::new((x + x.adjoint()) * C64::new(0.5, 0.0))))
        .collect();
    let principal: Vec<DVector<C64>> = eig
        .iter()
        .map(|e| match e {
            Some(e) => {
                let idx = e.eigenvalues.imax();
                e.eigenvectors.column(idx).into_owned()
            }
            None => DVector::zeros(nt),
        })
        .collect();
    let sqrt_cov: Vec<Option<DMatrix<C64>>> = eig
        .iter()
        .map(|e| {
            e.as_ref().map(|e| {
                let d = e.eigenvalues.map(|l| C64::new(l.max(0.0).sqrt(), 0.0));
                &e.eigenvectors * DMatrix::from_diagonal(&d) * e.eigenvectors.adjoint()
            })
        })
        .collect();

    let mut best: Option<(f64, Vec<DVector<C64>>, Vec<f64>)> = None;
    let mut feasible = 0usize;
    let mut consider = |dirs: Vec<DVector<C64>>| -> Result<()> {
        if let Some(pc) = mmpc_lp(&dirs, inst.h, inst.groups, inst.targets, inst.noise, inst.budget)? {
            feasible += 1;
            if best.as_ref().is_none_or(|(r, _, _)| pc.r < *r) {
                best = Some((pc.r, dirs, pc.p));
            }
        }
        Ok(())
    };

    consider(principal)?;
    for dirs in extra {
        let normalized = dirs
            .iter()
            .map(|v| {
                let n = v.norm();
                if n > 0.0 {
                    v / C64::new(n, 0.0)
                } else {
                    v.clone()
                }
            })
            .collect();
        consider(normalized)?;
    }
    let half = std::f64::consts::FRAC_1_SQRT_2;
    for _ in 0..n_rand {
        let dirs: Vec<DVector<C64>> = sqrt_cov
            .iter()
            .map(|s| match s {
                Some(s) => {
                    let z = DVector::from_fn(nt, |_, _| {
                        let re: f64 = rng.sample(StandardNormal);
                        let im: f64 = rng.sample(StandardNormal);
                        C64::new(half * re, half * im)
                    });
                    let xi = s * z;
                    let n = xi.norm();
                    if n > 0.0 {
                        xi / C64::new(n, 0.0)
                    } else {
                        xi
                    }
                }
                None => DVector::zeros(nt),
            })
            .collect();
        consider(dirs)?;
    }

    let Some((r_star, dirs, p)) = best else {
        return Err(Error::NoFeasibleCandidate { draws: n_rand });
    };
    let columns: Vec<DVector<C64>> = dirs
        .iter()
        .zip(&p)
        .map(|(v, pk)| v * C64::new(pk.sqrt(), 0.0))
        .collect();
    Ok(QSolution {
        r_star,
        precoder: PrecodingMatrix::from_columns(&columns)?,
        r_lb,
        n_feasible_candidates: feasible,
    })
}

/// Build, solve and randomize in one call.
pub fn solve_q<R: Rng + ?Sized>(
    inst: &Instance,
    n_rand: usize,
    solver_tol: f64,
    rng: &mut R,
) -> Result<QSolution> {
    solve_q_with(inst, n_rand, solver_tol, rng, &[])
}

pub fn solve_q_with<R: Rng + ?Sized>(
    inst: &Instance,
    n_rand: usize,
    solver_tol: f64,
    rng: &mut R,
    extra: &[Vec<DVector<C64>>],
) -> Result<QSolution> {
    let q = build_relaxed(inst.h, inst.groups, inst.targets, inst.noise, inst.budget)?;
    let (r_lb, cov) = solve_relaxed_q(&q, solver_tol)?;
    randomize_with(&cov, inst, r_lb, n_rand, rng, extra)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{antenna_powers, user_sinrs};
    use crate::model::{gen_rayleigh, substream};
    use crate::conic::SolveStatus;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn orthogonal_pair() -> (ChannelMatrix, GroupAssignment, NoiseProfile, PacVector) {
        let h = ChannelMatrix::new(DMatrix::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(1.0)])).unwrap();
        (
            h,
            GroupAssignment::new(vec![vec![0], vec![1]]).unwrap(),
            NoiseProfile::uniform(2, 1.0).unwrap(),
            PacVector::new(vec![1.0, 1.0]).unwrap(),
        )
    }

    fn e(n: usize, k: usize) -> DVector<C64> {
        DVector::from_fn(n, |i, _| if i == k { c(1.0) } else { c(0.0) })
    }

    /// The power-control LP posed directly for the conic solver.
    fn mmpc_conic(
        dirs: &[DVector<C64>],
        h: &ChannelMatrix,
        groups: &GroupAssignment,
        targets: &SinrTargets,
        noise: &NoiseProfile,
        pac: &PacVector,
    ) -> Option<(f64, Vec<f64>)> {
        let g = groups.n_groups();
        let mut p = ConicProblem::new();
        let pw = p.add_block(BlockKind::Nonneg(g));
        let r = p.add_block(BlockKind::Nonneg(1));
        p.add_objective(r.at(0), 1.0);
        for (k, members) in groups.iter().enumerate() {
            for &i in members {
                let gamma = targets.get(i);
                let terms = (0..g)
                    .map(|l| {
                        let gain = h.gain(i, &dirs[l]);
                        (pw.at(l), if l == k { gain } else { -gamma * gain })
                    })
                    .collect();
                p.add_constraint(terms, Sense::Ge, gamma * noise.variance(i));
            }
        }
        for n in 0..h.n_antennas() {
            let mut terms: Vec<_> = (0..g).map(|k| (pw.at(k), dirs[k][n].norm_sqr())).collect();
            terms.push((r.at(0), -pac.limit(n)));
            p.add_constraint(terms, Sense::Le, 0.0);
        }
        let out = conic::solve(&p, 1e-10).unwrap();
        match out.status {
            SolveStatus::Optimal => Some((out.objective, out.block(pw).vector().unwrap().iter().copied().collect())),
            SolveStatus::Infeasible => None,
            s => panic!("oracle failed: {s:?}"),
        }
    }

    fn random_instance(seed: u64, nt: usize, nu: usize, g: usize) -> (ChannelMatrix, GroupAssignment, NoiseProfile, PacVector) {
        let mut rng = substream(seed, 0);
        (
            gen_rayleigh(nu, nt, &mut rng).unwrap(),
            crate::model::uniform_groups(nu, g).unwrap(),
            NoiseProfile::uniform(nu, 1.0).unwrap(),
            PacVector::equal_split(nt, nt as f64).unwrap(),
        )
    }

    fn random_directions(seed: u64, nt: usize, g: usize) -> Vec<DVector<C64>> {
        let mut rng = substream(seed, 1);
        (0..g)
            .map(|_| {
                let v = DVector::from_fn(nt, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
                let n = v.norm();
                v / c(n)
            })
            .collect()
    }

    #[test]
    fn scalar_relaxation() {
        let h = ChannelMatrix::new(DMatrix::from_element(1, 1, c(3.0))).unwrap();
        let groups = GroupAssignment::new(vec![vec![0]]).unwrap();
        let q = build_relaxed_q(
            &h,
            &groups,
            &SinrTargets::new(vec![2.0]).unwrap(),
            &NoiseProfile::uniform(1, 1.0).unwrap(),
            &PacVector::new(vec![1.0]).unwrap(),
        )
        .unwrap();
        let (r, cov) = solve_relaxed_q(&q, 1e-9).unwrap();
        assert!((r - 2.0 / 9.0).abs() < 1e-7, "{r}");
        assert!((cov.get(0)[(0, 0)].re - 2.0 / 9.0).abs() < 1e-7);
    }

    #[test]
    fn zero_targets_relax_to_zero() {
        let (h, groups, noise, pac) = random_instance(3, 3, 4, 2);
        let targets = SinrTargets::uniform(4, 0.0).unwrap();
        let q = build_relaxed_q(&h, &groups, &targets, &noise, &pac).unwrap();
        let (r, cov) = solve_relaxed_q(&q, 1e-8).unwrap();
        assert_eq!(r, 0.0);
        assert!(cov.matrices().iter().all(|x| x.norm() == 0.0));

        let inst = Instance { h: &h, groups: &groups, targets: &targets, noise: &noise, budget: Budget::PerAntenna(&pac) };
        let sol = randomize(&cov, &inst, r, 10, &mut substream(0, 0)).unwrap();
        assert_eq!(sol.r_star, 0.0);
        assert_eq!(sol.precoder.matrix().norm(), 0.0);
    }

    #[test]
    fn orthogonal_pair_relaxation() {
        let (h, groups, noise, pac) = orthogonal_pair();
        let targets = SinrTargets::uniform(2, 1.0).unwrap();
        let q = build_relaxed_q(&h, &groups, &targets, &noise, &pac).unwrap();
        let (r, cov) = solve_relaxed_q(&q, 1e-9).unwrap();
        assert!((r - 1.0).abs() < 1e-6, "{r}");
        for k in 0..2 {
            let want = e(2, k) * e(2, k).adjoint();
            assert!((cov.get(k) - want).norm() < 1e-5, "{}", cov.get(k));
        }
        // Brute-force oracle over diagonal covariances p_k e_k e_k^H.
        let mut best = f64::INFINITY;
        for a in 0..=400 {
            for b in 0..=400 {
                let (p1, p2) = (a as f64 * 0.01, b as f64 * 0.01);
                if p1 >= 1.0 && p2 >= 1.0 {
                    best = best.min(p1.max(p2));
                }
            }
        }
        assert!((best - r).abs() < 1e-6);

        let inst = Instance { h: &h, groups: &groups, targets: &targets, noise: &noise, budget: Budget::PerAntenna(&pac) };
        let sol = randomize(&cov, &inst, r, 20, &mut substream(1, 0)).unwrap();
        assert!((sol.r_star - 1.0).abs() < 1e-4);
    }

    #[test]
    fn power_control_examples() {
        let (h, groups, noise, pac) = orthogonal_pair();
        let dirs = vec![e(2, 0), e(2, 1)];
        let one = SinrTargets::uniform(2, 1.0).unwrap();
        let pc = mmpc_lp(&dirs, &h, &groups, &one, &noise, Budget::PerAntenna(&pac)).unwrap().unwrap();
        assert!((pc.r - 1.0).abs() < 1e-12);
        assert!((pc.p[0] - 1.0).abs() < 1e-12 && (pc.p[1] - 1.0).abs() < 1e-12);

        let zero = SinrTargets::uniform(2, 0.0).unwrap();
        let pc = mmpc_lp(&dirs, &h, &groups, &zero, &noise, Budget::PerAntenna(&pac)).unwrap().unwrap();
        assert_eq!(pc, PowerControl { r: 0.0, p: vec![0.0, 0.0] });

        let co = ChannelMatrix::new(DMatrix::from_row_slice(2, 2, &[c(1.0), c(0.0), c(1.0), c(0.0)])).unwrap();
        let same = vec![e(2, 0), e(2, 0)];
        assert!(mmpc_lp(&same, &co, &groups, &one, &noise, Budget::PerAntenna(&pac)).unwrap().is_none());
        assert!(mmpc_conic(&same, &co, &groups, &one, &noise, &pac).is_none());
    }

    #[test]
    fn power_control_rejects_non_unit_directions() {
        let (h, groups, noise, pac) = orthogonal_pair();
        let dirs = vec![e(2, 0) * c(2.0), e(2, 1)];
        let t = SinrTargets::uniform(2, 1.0).unwrap();
        assert!(mmpc_lp(&dirs, &h, &groups, &t, &noise, Budget::PerAntenna(&pac)).is_err());
    }

    #[test]
    fn power_control_matches_conic_lp() {
        let mut feasible = 0;
        for seed in 0..60 {
            let (h, groups, noise, pac) = random_instance(seed, 4, 6, 3);
            let dirs = random_directions(seed, 4, 3);
            let mut rng = substream(seed, 2);
            let t: Vec<f64> = (0..6).map(|_| rng.random_range(0.05..0.6)).collect();
            let targets = SinrTargets::new(t).unwrap();
            let fast = mmpc_lp(&dirs, &h, &groups, &targets, &noise, Budget::PerAntenna(&pac)).unwrap();
            let slow = mmpc_conic(&dirs, &h, &groups, &targets, &noise, &pac);
            match (fast, slow) {
                (Some(f), Some((r, p))) => {
                    feasible += 1;
                    assert!((f.r - r).abs() <= 1e-6 * r.max(1.0), "seed {seed}: {} vs {r}", f.r);
                    for (a, b) in f.p.iter().zip(&p) {
                        assert!((a - b).abs() <= 1e-5 * b.max(1.0), "seed {seed}: {:?} vs {p:?}", f.p);
                    }
                }
                (None, None) => {}
                (f, s) => panic!("seed {seed}: {f:?} vs {s:?}"),
            }
        }
        assert!(feasible > 10 && feasible < 60, "{feasible}");
    }

    #[test]
    fn single_group_relaxation_is_tight() {
        for seed in 0..8 {
            let (h, groups, noise, pac) = random_instance(100 + seed, 2, 2, 1);
            let targets = SinrTargets::uniform(2, 1.0).unwrap();
            let inst = Instance { h: &h, groups: &groups, targets: &targets, noise: &noise, budget: Budget::PerAntenna(&pac) };
            let sol = solve_q(&inst, 0, 1e-9, &mut substream(seed, 3)).unwrap();
            assert!(sol.r_star - sol.r_lb <= 1e-5, "seed {seed}: {} vs {}", sol.r_star, sol.r_lb);

            // Phase-grid oracle: w = (cos a, sin a e^{j phi}) scaled to meet the targets.
            let mut grid = f64::INFINITY;
            let steps = 600;
            for ia in 0..=steps {
                let a = ia as f64 / steps as f64 * std::f64::consts::FRAC_PI_2;
                for ip in 0..steps {
                    let phi = ip as f64 / steps as f64 * std::f64::consts::TAU;
                    let v = DVector::from_vec(vec![c(a.cos()), C64::from_polar(a.sin(), phi)]);
                    let need = (0..2).map(|i| 1.0 / h.gain(i, &v)).fold(0.0, f64::max);
                    let r = need * (a.cos().powi(2) / pac.limit(0)).max(a.sin().powi(2) / pac.limit(1));
                    grid = grid.min(r);
                }
            }
            assert!(sol.r_star <= grid * (1.0 + 1e-5), "seed {seed}: {} vs grid {grid}", sol.r_star);
            assert!(grid >= sol.r_lb - 1e-7);
        }
    }

    #[test]
    fn solutions_are_feasible_and_sandwiched() {
        for seed in 0..10 {
            let (h, groups, noise, pac) = random_instance(200 + seed, 4, 8, 4);
            let targets = SinrTargets::uniform(8, 0.3).unwrap();
            let inst = Instance { h: &h, groups: &groups, targets: &targets, noise: &noise, budget: Budget::PerAntenna(&pac) };
            let sol = solve_q(&inst, 30, 1e-8, &mut substream(seed, 4)).unwrap();
            assert!(sol.r_lb <= sol.r_star + 1e-7);
            assert!(sol.n_feasible_candidates >= 1);
            let sinrs = user_sinrs(&h, &sol.precoder, &groups, &noise).unwrap();
            for (i, s) in sinrs.iter().enumerate() {
                assert!(*s >= targets.get(i) * (1.0 - 1e-6), "seed {seed} user {i}: {s}");
            }
            let ap = antenna_powers(&sol.precoder);
            for n in 0..4 {
                assert!(ap[n] <= sol.r_star * pac.limit(n) * (1.0 + 1e-9));
            }
        }
    }

    #[test]
    fn relaxation_bound_grows_with_targets() {
        let (h, groups, noise, pac) = random_instance(7, 4, 8, 4);
        let mut last = 0.0;
        for t in [0.1, 0.2, 0.4, 0.8] {
            let targets = SinrTargets::uniform(8, t).unwrap();
            let q = build_relaxed_q(&h, &groups, &targets, &noise, &pac).unwrap();
            let (r, _) = solve_relaxed_q(&q, 1e-9).unwrap();
            assert!(r >= last - 1e-9, "{r} < {last}");
            last = r;
        }
    }

    #[test]
    fn unachievable_targets_are_reported() {
        let co = ChannelMatrix::new(DMatrix::from_row_slice(2, 2, &[c(1.0), c(0.0), c(1.0), c(0.0)])).unwrap();
        let groups = GroupAssignment::new(vec![vec![0], vec![1]]).unwrap();
        let q = build_relaxed_q(
            &co,
            &groups,
            &SinrTargets::uniform(2, 1.0).unwrap(),
            &NoiseProfile::uniform(2, 1.0).unwrap(),
            &PacVector::new(vec![1.0, 1.0]).unwrap(),
        )
        .unwrap();
        match solve_relaxed_q(&q, 1e-8) {
            Err(Error::Solver { status }) => assert_eq!(status, SolveStatus::Infeasible),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sum_power_budget() {
        let (h, groups, noise, _) = orthogonal_pair();
        let targets = SinrTargets::uniform(2, 2.0).unwrap();
        let inst = Instance { h: &h, groups: &groups, targets: &targets, noise: &noise, budget: Budget::SumPower };
        let sol = solve_q(&inst, 5, 1e-9, &mut substream(0, 5)).unwrap();
        assert!((sol.r_star - 4.0).abs() < 1e-6);
        assert!((sol.r_lb - 4.0).abs() < 1e-6);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let (h, groups, noise, _) = orthogonal_pair();
        let pac = PacVector::new(vec![1.0, 1.0, 1.0]).unwrap();
        let t = SinrTargets::uniform(2, 1.0).unwrap();
        assert!(matches!(build_relaxed_q(&h, &groups, &t, &noise, &pac), Err(Error::Dimension(_))));
    }
}
