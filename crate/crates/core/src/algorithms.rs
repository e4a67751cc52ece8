//! Sum-rate maximization under per-antenna constraints and its baselines.
//!
//! [`max_sr_pac`] alternates two stages. Stage one fixes the current
//! worst-user SINR of every group as a target and re-solves the per-antenna
//! QoS problem, which returns beams reaching the same rates with no more
//! power. Stage two freezes the beam directions and reallocates group powers
//! with projected sub-gradient steps. [`max_sr_spc`] runs the same loop under
//! a single sum-power budget; [`max_min_fair_pac`] is the fairness baseline.

use nalgebra::DVector;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::{antenna_powers, group_min_sinr, max_pac_ratio, sum_rate, total_power, PrecodingMatrix};
use crate::model::{ChannelMatrix, GroupAssignment, NoiseProfile, PacVector, RunConfig, C64};
use crate::power::{decouple, recompose, step_with, PacPolyhedron, PowerState};
use crate::sdr::{build_relaxed_q, mmpc_lp, randomize, solve_q_with, solve_relaxed_q, Budget, Instance, SinrTargets};

/// Targets below this are treated as a group switched off.
pub const SHUTDOWN_TARGET: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    /// Worst-user SINR per group handed to the QoS stage.
    pub targets: Vec<f64>,
    /// Budget of the QoS solution (utilization for PACs, watts for the sum-power loop).
    pub r_star: f64,
    pub powers: Vec<f64>,
    pub sum_rate: f64,
    pub off: Vec<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SolveTrace {
    pub records: Vec<IterationRecord>,
    pub best: Option<usize>,
}

impl SolveTrace {
    pub fn best_sum_rate(&self) -> Option<f64> {
        self.best.map(|i| self.records[i].sum_rate)
    }

    /// Best sum rate seen up to and including each iteration.
    pub fn best_so_far(&self) -> Vec<f64> {
        self.records
            .iter()
            .scan(f64::NEG_INFINITY, |acc, r| {
                *acc = acc.max(r.sum_rate);
                Some(*acc)
            })
            .collect()
    }
}

/// A failed solve together with everything recorded before the failure.
#[derive(Debug)]
pub struct Failure {
    pub error: Error,
    pub trace: SolveTrace,
}

impl From<Failure> for Error {
    fn from(f: Failure) -> Self {
        f.error
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} after {} iterations", self.error, self.trace.records.len())
    }
}

impl std::error::Error for Failure {}

pub type Outcome = std::result::Result<(PrecodingMatrix, SolveTrace), Failure>;

#[derive(Debug, Clone, Copy)]
enum Limit<'a> {
    Pac(&'a PacVector),
    Spc(f64),
}

impl Limit<'_> {
    fn budget(&self) -> Budget<'_> {
        match self {
            Limit::Pac(pac) => Budget::PerAntenna(pac),
            Limit::Spc(_) => Budget::SumPower,
        }
    }

    fn total(&self) -> f64 {
        match self {
            Limit::Pac(pac) => pac.total(),
            Limit::Spc(p) => *p,
        }
    }

    /// Common scaling that makes the budget bind.
    fn fill(&self, w: &PrecodingMatrix) -> PrecodingMatrix {
        let used = match self {
            Limit::Pac(pac) => max_pac_ratio(w, pac.limits()),
            Limit::Spc(p) => total_power(w) / p,
        };
        if used > 0.0 {
            w.scaled(used.sqrt().recip())
        } else {
            w.clone()
        }
    }

    fn polyhedron(&self, state: &PowerState) -> Result<PacPolyhedron> {
        match self {
            Limit::Pac(pac) => PacPolyhedron::for_state(state, pac),
            Limit::Spc(p) => PacPolyhedron::sum_power(state.n_groups(), *p),
        }
    }
}

fn check(h: &ChannelMatrix, groups: &GroupAssignment, noise: &NoiseProfile, cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    if groups.n_users() != h.n_users() || noise.len() != h.n_users() {
        return Err(Error::Dimension("channel, groups and noise disagree on users".into()));
    }
    Ok(())
}

/// Sum-rate maximizing precoder under per-antenna power limits.
///
/// Returns the best iterate and the per-iteration trace.
pub fn max_sr_pac<R: Rng + ?Sized>(
    h: &ChannelMatrix,
    groups: &GroupAssignment,
    pac: &PacVector,
    noise: &NoiseProfile,
    cfg: &RunConfig,
    rng: &mut R,
) -> Outcome {
    let fail = |error| Failure { error, trace: SolveTrace::default() };
    check(h, groups, noise, cfg).map_err(fail)?;
    if pac.len() != h.n_antennas() {
        return Err(fail(Error::Dimension("one limit per antenna required".into())));
    }
    alternate(h, groups, noise, Limit::Pac(pac), cfg, rng)
}

/// Same two-stage loop under a single sum-power budget `p_tot`.
pub fn max_sr_spc<R: Rng + ?Sized>(
    h: &ChannelMatrix,
    groups: &GroupAssignment,
    p_tot: f64,
    noise: &NoiseProfile,
    cfg: &RunConfig,
    rng: &mut R,
) -> Outcome {
    let fail = |error| Failure { error, trace: SolveTrace::default() };
    check(h, groups, noise, cfg).map_err(fail)?;
    if !(p_tot > 0.0 && p_tot.is_finite()) {
        return Err(fail(Error::InvalidArgument(format!("total power {p_tot} must be positive"))));
    }
    alternate(h, groups, noise, Limit::Spc(p_tot), cfg, rng)
}

fn initial_precoder(nt: usize, g: usize, limit: Limit) -> PrecodingMatrix {
    let amp = (limit.total() / (g * nt) as f64).sqrt();
    let w = PrecodingMatrix::new(nalgebra::DMatrix::from_element(nt, g, C64::new(amp, 0.0))).expect("finite");
    match limit {
        Limit::Pac(pac) => rescale_to_pac(&w, pac),
        Limit::Spc(_) => w,
    }
}

fn alternate<R: Rng + ?Sized>(
    h: &ChannelMatrix,
    groups: &GroupAssignment,
    noise: &NoiseProfile,
    limit: Limit,
    cfg: &RunConfig,
    rng: &mut R,
) -> Outcome {
    let g = groups.n_groups();
    let nt = h.n_antennas();
    let floor = cfg.floor_for(limit.total());
    let mut trace = SolveTrace::default();
    let mut w = initial_precoder(nt, g, limit);
    let mut best: Option<PrecodingMatrix> = None;
    let mut previous_dirs: Option<Vec<DVector<C64>>> = None;

    macro_rules! attempt {
        ($e:expr) => {
            match $e {
                Ok(v) => v,
                Err(error) => return Err(Failure { error, trace }),
            }
        };
    }

    for _ in 0..cfg.outer_max {
        let mins = attempt!(group_min_sinr(h, &w, groups, noise));
        let clamped: Vec<f64> = mins.iter().map(|&t| if t < SHUTDOWN_TARGET { 0.0 } else { t }).collect();
        if clamped.iter().all(|&t| t == 0.0) {
            // Nothing can be served: the zero precoder is as good as any.
            let zero = PrecodingMatrix::zeros(nt, g);
            let sr = attempt!(sum_rate(h, &zero, groups, noise));
            trace.records.push(IterationRecord {
                targets: clamped,
                r_star: 0.0,
                powers: vec![0.0; g],
                sum_rate: sr,
                off: vec![true; g],
            });
            if trace.best.is_none_or(|b| sr > trace.records[b].sum_rate) {
                trace.best = Some(trace.records.len() - 1);
                best = Some(zero);
            }
            break;
        }

        // Step 1: same rates, least power.
        let targets = attempt!(SinrTargets::per_group(groups, &clamped));
        let incumbent: Vec<DVector<C64>> = (0..g).map(|k| w.column(k)).collect();
        let inst = Instance { h, groups, targets: &targets, noise, budget: limit.budget() };
        let q = attempt!(solve_q_with(&inst, cfg.n_rand, cfg.solver_tol, rng, &[incumbent]));

        let wq = if cfg.fill_budget { limit.fill(&q.precoder) } else { q.precoder.clone() };

        // Step 2: directions and powers. Switched-off groups keep their last direction.
        let mut state = attempt!(decouple(&wq, floor));
        if let Some(prev) = &previous_dirs {
            let zero_cols: Vec<usize> = (0..g).filter(|&k| wq.column(k).norm() == 0.0).collect();
            if !zero_cols.is_empty() {
                let mut dirs = state.directions().to_vec();
                for k in zero_cols {
                    dirs[k] = prev[k].clone();
                }
                state = attempt!(PowerState::new(dirs, state.powers().to_vec(), floor));
            }
        }

        // Step 3: power reallocation.
        let poly = attempt!(limit.polyhedron(&state));
        for _ in 0..cfg.l_max {
            state = attempt!(step_with(&state, h, groups, noise, &poly, cfg.delta, floor, cfg.projection));
        }

        // Step 4: recompose and score.
        w = recompose(&state);
        let sr = attempt!(sum_rate(h, &w, groups, noise));
        previous_dirs = Some(state.directions().to_vec());
        let last = trace.records.last().map(|r| r.sum_rate);
        trace.records.push(IterationRecord {
            targets: clamped,
            r_star: q.r_star,
            powers: state.powers().to_vec(),
            sum_rate: sr,
            off: state.off_mask().to_vec(),
        });
        if trace.best.is_none_or(|b| sr > trace.records[b].sum_rate) {
            trace.best = Some(trace.records.len() - 1);
            best = Some(w.clone());
        }
        if let Some(last) = last {
            if (sr - last).abs() <= cfg.sr_tol * last.abs().max(f64::MIN_POSITIVE) {
                break;
            }
        }
    }
    let best = best.expect("at least one iteration runs");
    Ok((best, trace))
}

/// Equal-weight max–min fair precoder under per-antenna limits.
///
/// Bisects the common SINR target on the relaxation, draws beam directions
/// at the last feasible target and finally re-solves the powers for those
/// directions, so the returned precoder meets the limits and balances the
/// worst-user SINR of every group.
pub fn max_min_fair_pac<R: Rng + ?Sized>(
    h: &ChannelMatrix,
    groups: &GroupAssignment,
    pac: &PacVector,
    noise: &NoiseProfile,
    cfg: &RunConfig,
    rng: &mut R,
) -> Result<PrecodingMatrix> {
    check(h, groups, noise, cfg)?;
    if pac.len() != h.n_antennas() {
        return Err(Error::Dimension("one limit per antenna required".into()));
    }
    let nu = h.n_users();
    let mut hi = (0..nu)
        .map(|i| pac.total() * h.user_channel(i).norm_squared() / noise.variance(i))
        .fold(0.0, f64::max);
    if hi == 0.0 {
        return Ok(PrecodingMatrix::zeros(h.n_antennas(), groups.n_groups()));
    }
    let mut lo = 0.0;
    let feasible = |t: f64| -> Result<bool> {
        let targets = SinrTargets::uniform(nu, t)?;
        let q = build_relaxed_q(h, groups, &targets, noise, pac)?;
        match solve_relaxed_q(&q, cfg.solver_tol) {
            Ok((r, _)) => Ok(r <= 1.0),
            Err(Error::Solver { status: crate::conic::SolveStatus::Infeasible }) => Ok(false),
            Err(e) => Err(e),
        }
    };
    while hi - lo > 1e-4 * hi {
        let mid = 0.5 * (lo + hi);
        if feasible(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if lo == 0.0 {
        return Ok(PrecodingMatrix::zeros(h.n_antennas(), groups.n_groups()));
    }

    let targets = SinrTargets::uniform(nu, lo)?;
    let q = build_relaxed_q(h, groups, &targets, noise, pac)?;
    let (r_lb, cov) = solve_relaxed_q(&q, cfg.solver_tol)?;
    // Only the directions are kept, so when no candidate reaches the relaxed
    // target they are ranked at a lower one instead.
    let mut target = lo;
    let sol = loop {
        let targets = SinrTargets::uniform(nu, target)?;
        let inst = Instance { h, groups, targets: &targets, noise, budget: Budget::PerAntenna(pac) };
        match randomize(&cov, &inst, r_lb, cfg.n_rand, rng) {
            Err(Error::NoFeasibleCandidate { .. }) if target > 1e-9 * lo => target *= 0.5,
            res => break res?,
        }
    };
    let dirs: Vec<DVector<C64>> = (0..groups.n_groups())
        .map(|k| {
            let c = sol.precoder.column(k);
            let n = c.norm();
            c / C64::new(n, 0.0)
        })
        .collect();
    balance_powers(&dirs, h, groups, noise, pac)
}

/// Largest common target the fixed directions support within the limits,
/// with the matching least powers.
fn balance_powers(
    dirs: &[DVector<C64>],
    h: &ChannelMatrix,
    groups: &GroupAssignment,
    noise: &NoiseProfile,
    pac: &PacVector,
) -> Result<PrecodingMatrix> {
    let nu = h.n_users();
    let solve = |t: f64| -> Result<Option<Vec<f64>>> {
        let targets = SinrTargets::uniform(nu, t)?;
        Ok(mmpc_lp(dirs, h, groups, &targets, noise, Budget::PerAntenna(pac))?
            .filter(|pc| pc.r <= 1.0)
            .map(|pc| pc.p))
    };
    let mut lo = 0.0;
    let mut hi = 1.0;
    while solve(hi)?.is_some() {
        lo = hi;
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::InvalidArgument("unbounded common SINR".into()));
        }
    }
    let mut p = vec![0.0; dirs.len()];
    if lo > 0.0 {
        p = solve(lo)?.expect("checked feasible");
    }
    while hi - lo > 1e-12 * hi {
        let mid = 0.5 * (lo + hi);
        match solve(mid)? {
            Some(pm) => {
                lo = mid;
                p = pm;
            }
            None => hi = mid,
        }
    }
    let cols: Vec<DVector<C64>> = dirs
        .iter()
        .zip(&p)
        .map(|(v, pk)| v * C64::new(pk.sqrt(), 0.0))
        .collect();
    PrecodingMatrix::from_columns(&cols)
}

/// How a sum-power solution is brought inside per-antenna limits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RescaleMode {
    /// Scale down each violating antenna row to its limit.
    #[default]
    RowWise,
    /// One common factor, `min_n sqrt(P_n / [W W^H]_nn)`.
    Global,
}

pub fn rescale_to_pac(w: &PrecodingMatrix, pac: &PacVector) -> PrecodingMatrix {
    rescale_to_pac_with(w, pac, RescaleMode::RowWise)
}

pub fn rescale_to_pac_with(w: &PrecodingMatrix, pac: &PacVector, mode: RescaleMode) -> PrecodingMatrix {
    assert_eq!(w.n_antennas(), pac.len(), "precoder and limits disagree on antennas");
    let ap = antenna_powers(w);
    let mut out = w.clone();
    match mode {
        RescaleMode::RowWise => {
            let m = out.matrix_mut();
            for n in 0..pac.len() {
                if ap[n] > pac.limit(n) {
                    let f = (pac.limit(n) / ap[n]).sqrt();
                    m.row_mut(n).iter_mut().for_each(|z| *z *= f);
                }
            }
            out
        }
        RescaleMode::Global => {
            let f = (0..pac.len())
                .filter(|&n| ap[n] > 0.0)
                .map(|n| (pac.limit(n) / ap[n]).sqrt())
                .fold(f64::INFINITY, f64::min);
            if f.is_finite() {
                out.scaled(f)
            } else {
                out
            }
        }
    }
}
