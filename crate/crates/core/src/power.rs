//! Power reallocation with fixed beam directions.
//!
//! A precoder is split into unit directions and group powers, `w_k = sqrt(p_k) v_k`.
//! With directions frozen, the sum rate is pushed uphill by a projected
//! sub-gradient step in logarithmic power `s = log p`, followed by a
//! projection onto the per-antenna polyhedron
//! `{p >= 0 : sum_k p_k |v_k[n]|^2 <= P_n}`.

use std::f64::consts::LN_2;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::PrecodingMatrix;
use crate::model::{ChannelMatrix, GroupAssignment, NoiseProfile, PacVector, C64};

#[derive(Debug, Clone, PartialEq)]
pub struct PowerState {
    directions: Vec<DVector<C64>>,
    p: Vec<f64>,
    s: Vec<f64>,
    off: Vec<bool>,
}

impl PowerState {
    /// `p` is clamped at `floor`; groups at the floor are marked off.
    pub fn new(directions: Vec<DVector<C64>>, p: Vec<f64>, floor: f64) -> Result<Self> {
        if directions.len() != p.len() || directions.is_empty() {
            return Err(Error::Dimension("one power per direction required".into()));
        }
        let nt = directions[0].len();
        for v in &directions {
            if v.len() != nt {
                return Err(Error::Dimension("directions differ in length".into()));
            }
            if (v.norm() - 1.0).abs() > 1e-10 {
                return Err(Error::InvalidArgument("directions must have unit norm".into()));
            }
        }
        if !(floor > 0.0) || p.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::InvalidArgument("powers must be finite and >= 0, floor > 0".into()));
        }
        let p: Vec<f64> = p.into_iter().map(|x| x.max(floor)).collect();
        let off = p.iter().map(|&x| x <= floor * (1.0 + 1e-9)).collect();
        let s = p.iter().map(|x| x.ln()).collect();
        Ok(Self { directions, p, s, off })
    }

    pub fn directions(&self) -> &[DVector<C64>] {
        &self.directions
    }

    pub fn powers(&self) -> &[f64] {
        &self.p
    }

    pub fn log_powers(&self) -> &[f64] {
        &self.s
    }

    /// Groups sitting at the power floor.
    pub fn off_mask(&self) -> &[bool] {
        &self.off
    }

    pub fn n_groups(&self) -> usize {
        self.p.len()
    }

    pub fn n_antennas(&self) -> usize {
        self.directions[0].len()
    }

    fn with_powers(&self, p: Vec<f64>, floor: f64) -> Self {
        Self::new(self.directions.clone(), p, floor).expect("directions already validated")
    }
}

/// Splits `W` into directions and powers. Zero (or sub-floor) columns get
/// power `floor`; a zero column gets direction `e_0`.
pub fn decouple(w: &PrecodingMatrix, floor: f64) -> Result<PowerState> {
    let nt = w.n_antennas();
    let mut dirs = Vec::with_capacity(w.n_groups());
    let mut p = Vec::with_capacity(w.n_groups());
    for k in 0..w.n_groups() {
        let col = w.column(k);
        let norm = col.norm();
        if norm > 0.0 {
            dirs.push(&col / C64::new(norm, 0.0));
        } else {
            dirs.push(DVector::from_fn(nt, |i, _| if i == 0 { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) }));
        }
        p.push(norm * norm);
    }
    PowerState::new(dirs, p, floor)
}

pub fn recompose(state: &PowerState) -> PrecodingMatrix {
    let cols: Vec<DVector<C64>> = state
        .directions
        .iter()
        .zip(&state.p)
        .map(|(v, p)| v * C64::new(p.sqrt(), 0.0))
        .collect();
    PrecodingMatrix::from_columns(&cols).expect("state columns share a length")
}

/// Feasible set `{p >= 0 : A p <= b}` with nonnegative `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct PacPolyhedron {
    coefficients: DMatrix<f64>,
    limits: DVector<f64>,
}

impl PacPolyhedron {
    pub fn new(coefficients: DMatrix<f64>, limits: DVector<f64>) -> Result<Self> {
        if coefficients.nrows() != limits.len() {
            return Err(Error::Dimension("one limit per polyhedron row required".into()));
        }
        if coefficients.iter().any(|a| !(a.is_finite() && *a >= 0.0)) || limits.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return Err(Error::InvalidArgument("coefficients must be >= 0 and limits > 0".into()));
        }
        Ok(Self { coefficients, limits })
    }

    /// Per-antenna polyhedron, `A[n, k] = |v_k[n]|^2`.
    pub fn from_directions(directions: &[DVector<C64>], pac: &PacVector) -> Result<Self> {
        if directions.iter().any(|v| v.len() != pac.len()) {
            return Err(Error::Dimension("direction length differs from antenna count".into()));
        }
        let a = DMatrix::from_fn(pac.len(), directions.len(), |n, k| directions[k][n].norm_sqr());
        Self::new(a, pac.limits().clone())
    }

    pub fn for_state(state: &PowerState, pac: &PacVector) -> Result<Self> {
        Self::from_directions(state.directions(), pac)
    }

    /// Simplex `{p >= 0 : sum p <= total}`.
    pub fn sum_power(n_groups: usize, total: f64) -> Result<Self> {
        Self::new(DMatrix::from_element(1, n_groups, 1.0), DVector::from_element(1, total))
    }

    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.coefficients
    }

    pub fn limits(&self) -> &DVector<f64> {
        &self.limits
    }

    pub fn n_groups(&self) -> usize {
        self.coefficients.ncols()
    }

    /// Largest violation of `A p <= b` or `p >= 0`.
    pub fn violation(&self, p: &DVector<f64>) -> f64 {
        let rows = (&self.coefficients * p - &self.limits).max().max(0.0);
        rows.max((-p.min()).max(0.0))
    }
}

/// Worst-SINR user of every group at `state`, lowest index on ties.
pub fn worst_users(state: &PowerState, h: &ChannelMatrix, groups: &GroupAssignment, noise: &NoiseProfile) -> Result<Vec<usize>> {
    check(state, h, groups, noise)?;
    Ok(groups
        .iter()
        .enumerate()
        .map(|(k, members)| {
            let mut best = (members[0], f64::INFINITY);
            for &i in members {
                let g = user_sinr(state, h, noise, i, k, &state.p);
                if g < best.1 {
                    best = (i, g);
                }
            }
            best.0
        })
        .collect())
}

fn check(state: &PowerState, h: &ChannelMatrix, groups: &GroupAssignment, noise: &NoiseProfile) -> Result<()> {
    if state.n_groups() != groups.n_groups() || state.n_antennas() != h.n_antennas() || groups.n_users() != h.n_users() || noise.len() != h.n_users() {
        return Err(Error::Dimension("state, channel, groups and noise disagree".into()));
    }
    Ok(())
}

fn user_sinr(state: &PowerState, h: &ChannelMatrix, noise: &NoiseProfile, user: usize, group: usize, p: &[f64]) -> f64 {
    let mut signal = 0.0;
    let mut interference = noise.variance(user);
    for (l, v) in state.directions.iter().enumerate() {
        let term = p[l] * h.gain(user, v);
        if l == group {
            signal = term;
        } else {
            interference += term;
        }
    }
    signal / interference
}

/// `F_e(s) = sum_m log2(1 + gamma_m)` with each group's rate taken at the
/// fixed user `users[m]`, evaluated at log-powers `s`.
pub fn fe_value(state: &PowerState, h: &ChannelMatrix, noise: &NoiseProfile, users: &[usize], s: &[f64]) -> f64 {
    let p: Vec<f64> = s.iter().map(|x| x.exp()).collect();
    users
        .iter()
        .enumerate()
        .map(|(m, &u)| (1.0 + user_sinr(state, h, noise, u, m, &p)).log2())
        .sum()
}

/// Negative gradient of `F_e` in `s`, worst users held fixed. The update
/// `s - delta * r` therefore ascends the sum rate.
pub fn subgradient(state: &PowerState, h: &ChannelMatrix, groups: &GroupAssignment, noise: &NoiseProfile) -> Result<DVector<f64>> {
    let users = worst_users(state, h, groups, noise)?;
    let g_count = state.n_groups();
    // gains[(m, l)] = |v_l^H h_{u(m)}|^2
    let gains = DMatrix::from_fn(g_count, g_count, |m, l| h.gain(users[m], &state.directions[l]));
    for m in 0..g_count {
        if gains[(m, m)] == 0.0 {
            return Err(Error::DegenerateGain { group: m });
        }
    }
    let p = &state.p;
    let gamma: Vec<f64> = (0..g_count).map(|m| user_sinr(state, h, noise, users[m], m, p)).collect();
    Ok(DVector::from_fn(g_count, |k, _| {
        let own = gamma[k] / (1.0 + gamma[k]);
        let cross: f64 = (0..g_count)
            .filter(|&m| m != k)
            .map(|m| gamma[m] * gamma[m] / (1.0 + gamma[m]) * (p[k] * gains[(m, k)]) / (p[m] * gains[(m, m)]))
            .sum();
        -(own - cross) / LN_2
    }))
}

/// Euclidean projection of `x` onto `poly`:
/// `argmin ||p - x||^2  s.t.  A p <= b, p >= 0`.
///
/// Primal active-set method started from the feasible point `p = 0`. The
/// Hessian is the identity, so each equality-constrained subproblem is a
/// projection onto the null space of the working constraints.
pub fn project_pac(x: &DVector<f64>, poly: &PacPolyhedron) -> DVector<f64> {
    let g = poly.n_groups();
    assert_eq!(x.len(), g, "projection point has the wrong length");
    let m = poly.limits.len();
    // Constraint j < m: row j of A. Constraint m + k: -p_k <= 0.
    let row = |j: usize| -> DVector<f64> {
        if j < m {
            poly.coefficients.row(j).transpose()
        } else {
            let mut e = DVector::zeros(g);
            e[j - m] = -1.0;
            e
        }
    };
    let rhs = |j: usize| if j < m { poly.limits[j] } else { 0.0 };
    let scale = 1.0 + x.amax() + poly.limits.amax();

    let mut p = DVector::zeros(g);
    let mut working: Vec<usize> = Vec::new();
    for _ in 0..(50 * (m + g) + 100) {
        // p lies on the working face, so its minimizer is p + d with d the
        // part of x - p orthogonal to the working rows, and the multipliers
        // solve C^T mu = x - p - d. Both come from one SVD of C, which stays
        // accurate when working rows are nearly parallel.
        let resid = x - &p;
        let (d, mu) = if working.is_empty() {
            (resid, DVector::zeros(0))
        } else {
            let c = DMatrix::from_fn(working.len(), g, |r, col| row(working[r])[col]);
            let svd = c.svd(true, true);
            let (u, v_t) = (svd.u.as_ref().expect("u"), svd.v_t.as_ref().expect("v_t"));
            let tol = 1e-10 * svd.singular_values.max();
            let mut d = resid.clone();
            let mut mu = DVector::zeros(working.len());
            for (i, &sv) in svd.singular_values.iter().enumerate() {
                if sv > tol {
                    let coord = v_t.row(i).transpose().dot(&resid);
                    d -= v_t.row(i).transpose() * coord;
                    mu += u.column(i) * (coord / sv);
                }
            }
            (d, mu)
        };
        let target = &p + &d;
        // A tiny step counts as none: near-duplicate rows would otherwise
        // block it and cycle.
        if d.amax() <= 1e-10 * scale {
            // Drop the working constraint with the most negative multiplier.
            let worst = mu.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1));
            match worst {
                Some((idx, &v)) if v < -1e-12 * scale => {
                    working.remove(idx);
                }
                _ => return p.map(|v| v.max(0.0)),
            }
            continue;
        }
        let mut alpha = 1.0;
        let mut blocking = None;
        for j in 0..(m + g) {
            if working.contains(&j) {
                continue;
            }
            let a = row(j);
            let ad = a.dot(&d);
            // Rows in the span of the working set cannot block.
            if ad > 1e-12 * a.norm() * d.norm() {
                let t = ((rhs(j) - a.dot(&p)) / ad).max(0.0);
                if t < alpha {
                    alpha = t;
                    blocking = Some(j);
                }
            }
        }
        match blocking {
            Some(j) => {
                p += &d * alpha;
                working.push(j);
            }
            None => p = target,
        }
    }
    // Every iterate is feasible, so the last one is a safe answer.
    log::warn!("power projection hit its iteration cap");
    p.map(|v| v.max(0.0))
}

/// One projected sub-gradient step. Powers are kept at or above `floor`
/// by projecting onto the polyhedron shifted by the floor, so the floored
/// result still satisfies `A p <= b`.
pub fn step(
    state: &PowerState,
    h: &ChannelMatrix,
    groups: &GroupAssignment,
    noise: &NoiseProfile,
    poly: &PacPolyhedron,
    delta: f64,
    floor: f64,
) -> Result<PowerState> {
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("step size {delta} must be positive")));
    }
    if poly.n_groups() != state.n_groups() {
        return Err(Error::Dimension("polyhedron and state disagree on groups".into()));
    }
    step_with(state, h, groups, noise, poly, delta, floor, Metric::Euclidean)
}

/// Distance used when projecting the exponentiated step back onto the
/// polyhedron.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Plain `||p - x||^2`.
    #[default]
    Euclidean,
    /// `sum_k ((p_k - x_k) / p_k)^2` with `p` the powers before the step.
    /// Fixed points are then the KKT points of the sum rate over the
    /// polyhedron, while the plain metric drains groups holding little power.
    /// Groups that should switch off only decay like `1/t`, though.
    Relative,
}

/// [`step`] with a choice of projection metric.
#[allow(clippy::too_many_arguments)]
pub fn step_with(
    state: &PowerState,
    h: &ChannelMatrix,
    groups: &GroupAssignment,
    noise: &NoiseProfile,
    poly: &PacPolyhedron,
    delta: f64,
    floor: f64,
    metric: Metric,
) -> Result<PowerState> {
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("step size {delta} must be positive")));
    }
    if poly.n_groups() != state.n_groups() {
        return Err(Error::Dimension("polyhedron and state disagree on groups".into()));
    }
    let g = state.n_groups();
    let r = subgradient(state, h, groups, noise)?;
    let x = DVector::from_fn(g, |k, _| (state.s[k] - delta * r[k]).exp());
    let p = match metric {
        Metric::Euclidean => project_above(&x, poly, &DVector::from_element(g, floor)),
        Metric::Relative => {
            // q = p / p_old turns the weighted problem into a plain one.
            let scale = DVector::from_vec(state.p.clone());
            let scaled = PacPolyhedron {
                coefficients: DMatrix::from_fn(poly.limits.len(), g, |n, k| poly.coefficients[(n, k)] * scale[k]),
                limits: poly.limits.clone(),
            };
            let q = project_above(&x.component_div(&scale), &scaled, &DVector::from_fn(g, |k, _| floor / scale[k]));
            q.component_mul(&scale)
        }
    };
    Ok(state.with_powers(p.iter().copied().collect(), floor))
}

/// Projection onto the polyhedron intersected with `p >= lower`, when that
/// set is nonempty; otherwise onto the polyhedron alone.
fn project_above(x: &DVector<f64>, poly: &PacPolyhedron, lower: &DVector<f64>) -> DVector<f64> {
    let shifted_limits = &poly.limits - &poly.coefficients * lower;
    if shifted_limits.iter().all(|b| *b > 0.0) {
        let shifted = PacPolyhedron {
            coefficients: poly.coefficients.clone(),
            limits: shifted_limits,
        };
        project_pac(&(x - lower), &shifted) + lower
    } else {
        project_pac(x, poly)
    }
}
