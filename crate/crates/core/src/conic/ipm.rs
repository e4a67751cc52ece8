//! Infeasible-start primal-dual path-following method with the HKM search
//! direction and Mehrotra predictor-corrector, for small dense problems in
//! standard form
//!
//! ```text
//! min  sum_b <C_b, X_b> + c^T x + 1/2 x^T Q x
//! s.t. sum_b <A_ib, X_b> + a_i^T x = b_i,   X_b psd,  x >= 0.
//! ```
//!
//! Free variables are split into differences of nonnegative pairs and
//! inequality rows receive a nonnegative slack. Each row is scaled to unit
//! norm before iterating; multipliers are mapped back afterwards.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::problem::{BlockKind, BlockValue, ConicProblem, Sense};
use super::{AccuracyReport, SolveOutcome, SolveStatus};

const MAX_ITER: usize = 120;
const STALL_FACTOR: f64 = 1e3;
const STEP_FRACTION: f64 = 0.98;
const INFEASIBILITY_TOL: f64 = 1e-8;

struct PsdData {
    n: usize,
    c: DMatrix<f64>,
    /// `(row, A_row)` for every row touching this block.
    a: Vec<(usize, DMatrix<f64>)>,
}

struct StdForm {
    m: usize,
    b: DVector<f64>,
    psd: Vec<PsdData>,
    nv: usize,
    cv: DVector<f64>,
    av: DMatrix<f64>,
    qv: Option<DMatrix<f64>>,
    /// Scale applied to each standard-form row.
    row_scale: DVector<f64>,
    /// Standard-form row of each user constraint (`None` when dropped).
    row_of: Vec<Option<usize>>,
    /// Per user block: index into `psd`, or the stacked offsets of the
    /// positive part and (for free blocks) the negative part.
    block_map: Vec<BlockMap>,
}

enum BlockMap {
    Psd(usize),
    Nonneg(usize),
    Free(usize, usize),
}

enum Prepared {
    Ready(StdForm),
    Infeasible,
}

fn sym_coeff(mat: &mut DMatrix<f64>, i: usize, j: usize, v: f64) {
    if i == j {
        mat[(i, i)] += v;
    } else {
        mat[(i, j)] += 0.5 * v;
        mat[(j, i)] += 0.5 * v;
    }
}

fn prepare(p: &ConicProblem) -> Prepared {
    let mut block_map = Vec::with_capacity(p.blocks.len());
    let mut psd = Vec::new();
    let mut nv = 0usize;
    for kind in &p.blocks {
        match *kind {
            BlockKind::Psd(n) => {
                block_map.push(BlockMap::Psd(psd.len()));
                psd.push(PsdData {
                    n,
                    c: DMatrix::zeros(n, n),
                    a: Vec::new(),
                });
            }
            BlockKind::Nonneg(n) => {
                block_map.push(BlockMap::Nonneg(nv));
                nv += n;
            }
            BlockKind::Free(n) => {
                block_map.push(BlockMap::Free(nv, nv + n));
                nv += 2 * n;
            }
        }
    }
    let n_slack = p.constraints.iter().filter(|c| c.sense != Sense::Eq).count();
    let slack_base = nv;
    nv += n_slack;

    let mut cv = DVector::zeros(nv);
    for (v, coef) in &p.objective {
        match block_map[v.block] {
            BlockMap::Psd(k) => sym_coeff(&mut psd[k].c, v.row, v.col, *coef),
            BlockMap::Nonneg(o) => cv[o + v.row] += coef,
            BlockMap::Free(pos, neg) => {
                cv[pos + v.row] += coef;
                cv[neg + v.row] -= coef;
            }
        }
    }

    let qv = if p.quadratic.is_empty() {
        None
    } else {
        let q_user = p.quadratic_matrix();
        // user stacked index -> standard positions with sign
        let mut images: Vec<Vec<(usize, f64)>> = Vec::new();
        for (kind, map) in p.blocks.iter().zip(&block_map) {
            match (kind, map) {
                (BlockKind::Nonneg(n), BlockMap::Nonneg(o)) => {
                    images.extend((0..*n).map(|i| vec![(o + i, 1.0)]))
                }
                (BlockKind::Free(n), BlockMap::Free(pos, neg)) => {
                    images.extend((0..*n).map(|i| vec![(pos + i, 1.0), (neg + i, -1.0)]))
                }
                _ => {}
            }
        }
        let mut q = DMatrix::zeros(nv, nv);
        for a in 0..q_user.nrows() {
            for b in 0..q_user.ncols() {
                let v = q_user[(a, b)];
                if v == 0.0 {
                    continue;
                }
                for &(ia, sa) in &images[a] {
                    for &(ib, sb) in &images[b] {
                        q[(ia, ib)] += sa * sb * v;
                    }
                }
            }
        }
        Some(q)
    };

    // Assemble rows, then drop empty equalities.
    let mut rows_psd: Vec<Vec<(usize, DMatrix<f64>)>> = Vec::new();
    let mut rows_v: Vec<DVector<f64>> = Vec::new();
    let mut rows_b: Vec<f64> = Vec::new();
    let mut scales: Vec<f64> = Vec::new();
    let mut row_of = Vec::with_capacity(p.constraints.len());
    let mut slack = slack_base;
    for c in &p.constraints {
        let mut blocks: Vec<(usize, DMatrix<f64>)> = Vec::new();
        let mut av = DVector::zeros(nv);
        for (v, coef) in &c.terms {
            if *coef == 0.0 {
                continue;
            }
            match block_map[v.block] {
                BlockMap::Psd(k) => {
                    let pos = match blocks.iter().position(|(kk, _)| *kk == k) {
                        Some(pos) => pos,
                        None => {
                            blocks.push((k, DMatrix::zeros(psd[k].n, psd[k].n)));
                            blocks.len() - 1
                        }
                    };
                    sym_coeff(&mut blocks[pos].1, v.row, v.col, *coef);
                }
                BlockMap::Nonneg(o) => av[o + v.row] += coef,
                BlockMap::Free(pos, neg) => {
                    av[pos + v.row] += coef;
                    av[neg + v.row] -= coef;
                }
            }
        }
        match c.sense {
            Sense::Eq => {}
            Sense::Le => {
                av[slack] = 1.0;
                slack += 1;
            }
            Sense::Ge => {
                av[slack] = -1.0;
                slack += 1;
            }
        }
        let norm2: f64 = av.norm_squared()
            + blocks.iter().map(|(_, m)| m.norm_squared()).sum::<f64>();
        if norm2 == 0.0 {
            if c.rhs.abs() > 1e-12 {
                return Prepared::Infeasible;
            }
            row_of.push(None);
            continue;
        }
        let scale = 1.0 / norm2.sqrt();
        row_of.push(Some(rows_b.len()));
        rows_psd.push(blocks.into_iter().map(|(k, m)| (k, m * scale)).collect());
        rows_v.push(av * scale);
        rows_b.push(c.rhs * scale);
        scales.push(scale);
    }

    let m = rows_b.len();
    let mut av = DMatrix::zeros(m, nv);
    for (r, row) in rows_v.iter().enumerate() {
        av.set_row(r, &row.transpose());
    }
    for (r, blocks) in rows_psd.into_iter().enumerate() {
        for (k, mat) in blocks {
            psd[k].a.push((r, mat));
        }
    }

    Prepared::Ready(StdForm {
        m,
        b: DVector::from_vec(rows_b),
        psd,
        nv,
        cv,
        av,
        qv,
        row_scale: DVector::from_vec(scales),
        row_of,
        block_map,
    })
}

#[derive(Clone)]
struct Iterate {
    xs: Vec<DMatrix<f64>>,
    zs: Vec<DMatrix<f64>>,
    x: DVector<f64>,
    z: DVector<f64>,
    y: DVector<f64>,
}

struct Direction {
    dxs: Vec<DMatrix<f64>>,
    dzs: Vec<DMatrix<f64>>,
    dx: DVector<f64>,
    dz: DVector<f64>,
    dy: DVector<f64>,
}

impl StdForm {
    fn apply_a(&self, xs: &[DMatrix<f64>], x: &DVector<f64>) -> DVector<f64> {
        let mut out = &self.av * x;
        for (blk, xb) in self.psd.iter().zip(xs) {
            for (r, a) in &blk.a {
                out[*r] += a.dot(xb);
            }
        }
        out
    }

    fn apply_at_psd(&self, y: &DVector<f64>) -> Vec<DMatrix<f64>> {
        self.psd
            .iter()
            .map(|blk| {
                let mut acc = DMatrix::zeros(blk.n, blk.n);
                for (r, a) in &blk.a {
                    acc += a * y[*r];
                }
                acc
            })
            .collect()
    }

    fn quad(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.qv {
            Some(q) => q * x,
            None => DVector::zeros(self.nv),
        }
    }

    fn nu(&self) -> f64 {
        (self.psd.iter().map(|b| b.n).sum::<usize>() + self.nv) as f64
    }

    fn c_norm(&self) -> f64 {
        (self.cv.norm_squared() + self.psd.iter().map(|b| b.c.norm_squared()).sum::<f64>()).sqrt()
    }

    fn initial_point(&self) -> Iterate {
        let b_max = self.b.amax();
        let c_norm = self.c_norm();
        let xs = self
            .psd
            .iter()
            .map(|blk| {
                let n = blk.n as f64;
                let xi = 10f64.max(n.sqrt()).max(n * (1.0 + b_max));
                DMatrix::identity(blk.n, blk.n) * xi
            })
            .collect();
        let zs = self
            .psd
            .iter()
            .map(|blk| {
                let n = blk.n as f64;
                let eta = 10f64.max(n.sqrt()).max(blk.c.norm()).max(c_norm);
                DMatrix::identity(blk.n, blk.n) * eta
            })
            .collect();
        let nv = self.nv.max(1) as f64;
        let xi = 10f64.max(nv.sqrt()).max(1.0 + b_max);
        let eta = 10f64.max(nv.sqrt()).max(c_norm);
        Iterate {
            xs,
            zs,
            x: DVector::from_element(self.nv, xi),
            z: DVector::from_element(self.nv, eta),
            y: DVector::zeros(self.m),
        }
    }
}

fn max_step_psd(x: &DMatrix<f64>, dx: &DMatrix<f64>) -> Option<f64> {
    let chol = Cholesky::new(x.clone())?;
    let l = chol.l();
    let t = l.solve_lower_triangular(dx)?;
    let s = l.solve_lower_triangular(&t.transpose())?;
    let s = (&s + s.transpose()) * 0.5;
    let lmin = s.symmetric_eigenvalues().min();
    Some(if lmin < 0.0 { -1.0 / lmin } else { f64::INFINITY })
}

fn max_step_vec(x: &DVector<f64>, dx: &DVector<f64>) -> f64 {
    x.iter()
        .zip(dx.iter())
        .filter(|(_, d)| **d < 0.0)
        .map(|(v, d)| -v / d)
        .fold(f64::INFINITY, f64::min)
}

struct Residuals {
    rp: DVector<f64>,
    rd: Vec<DMatrix<f64>>,
    rdv: DVector<f64>,
    mu: f64,
    pobj: f64,
    dobj: f64,
    rel_p: f64,
    rel_d: f64,
    gap: f64,
}

fn residuals(sf: &StdForm, it: &Iterate) -> Residuals {
    let rp = &sf.b - sf.apply_a(&it.xs, &it.x);
    let aty = sf.apply_at_psd(&it.y);
    let rd: Vec<DMatrix<f64>> = sf
        .psd
        .iter()
        .zip(&it.zs)
        .zip(&aty)
        .map(|((blk, z), a)| &blk.c - z - a)
        .collect();
    let qx = sf.quad(&it.x);
    let rdv = &qx + &sf.cv - sf.av.transpose() * &it.y - &it.z;
    let comp: f64 = it.xs.iter().zip(&it.zs).map(|(x, z)| x.dot(z)).sum::<f64>() + it.x.dot(&it.z);
    let mu = comp / sf.nu();
    let xqx = it.x.dot(&qx);
    let pobj = sf.psd.iter().zip(&it.xs).map(|(b, x)| b.c.dot(x)).sum::<f64>()
        + sf.cv.dot(&it.x)
        + 0.5 * xqx;
    let dobj = sf.b.dot(&it.y) - 0.5 * xqx;
    let rel_p = rp.norm() / (1.0 + sf.b.norm());
    let rd_norm = (rd.iter().map(|m| m.norm_squared()).sum::<f64>() + rdv.norm_squared()).sqrt();
    let rel_d = rd_norm / (1.0 + sf.c_norm());
    let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
    Residuals {
        rp,
        rd,
        rdv,
        mu,
        pobj,
        dobj,
        rel_p,
        rel_d,
        gap,
    }
}

/// Factored Newton system for one iterate.
struct Newton<'a> {
    sf: &'a StdForm,
    zinv: Vec<DMatrix<f64>>,
    /// `G_j = X A_j Z^{-1}` per block, aligned with `PsdData::a`.
    g: Vec<Vec<DMatrix<f64>>>,
    h: Cholesky<f64, Dyn>,
    m: MFactor,
}

enum MFactor {
    Chol(Cholesky<f64, Dyn>),
    Lu(nalgebra::LU<f64, Dyn, Dyn>),
}

impl MFactor {
    fn solve(&self, rhs: &DVector<f64>) -> Option<DVector<f64>> {
        match self {
            MFactor::Chol(c) => Some(c.solve(rhs)),
            MFactor::Lu(lu) => lu.solve(rhs),
        }
    }
}

impl<'a> Newton<'a> {
    fn new(sf: &'a StdForm, it: &Iterate) -> Option<Self> {
        let mut zinv = Vec::with_capacity(sf.psd.len());
        for z in &it.zs {
            zinv.push(Cholesky::new(z.clone())?.inverse());
        }
        let mut g = Vec::with_capacity(sf.psd.len());
        let mut m = DMatrix::zeros(sf.m, sf.m);
        for ((blk, x), zi) in sf.psd.iter().zip(&it.xs).zip(&zinv) {
            let gb: Vec<DMatrix<f64>> = blk.a.iter().map(|(_, a)| x * a * zi).collect();
            for (ri, ai) in &blk.a {
                for (gj, (rj, _)) in gb.iter().zip(&blk.a) {
                    m[(*ri, *rj)] += ai.dot(gj);
                }
            }
            g.push(gb);
        }
        let mut hmat = match &sf.qv {
            Some(q) => q.clone(),
            None => DMatrix::zeros(sf.nv, sf.nv),
        };
        for i in 0..sf.nv {
            hmat[(i, i)] += it.z[i] / it.x[i];
        }
        let h = Cholesky::new(hmat)?;
        if sf.nv > 0 {
            let hinv_at = h.solve(&sf.av.transpose());
            m += &sf.av * hinv_at;
        }
        let m = (&m + m.transpose()) * 0.5;
        let factor = match Cholesky::new(m.clone()) {
            Some(c) => MFactor::Chol(c),
            None => {
                let reg = 1e-14 * m.diagonal().amax().max(1e-300);
                let mut mr = m;
                for i in 0..sf.m {
                    mr[(i, i)] += reg;
                }
                MFactor::Lu(mr.lu())
            }
        };
        Some(Self {
            sf,
            zinv,
            g,
            h,
            m: factor,
        })
    }

    /// Solves the Newton system for complementarity targets `rc` (per PSD
    /// block) and `rcv` (vector part).
    fn direction(
        &self,
        it: &Iterate,
        res: &Residuals,
        rc: &[DMatrix<f64>],
        rcv: &DVector<f64>,
    ) -> Option<Direction> {
        let sf = self.sf;
        let mut rhs = res.rp.clone();
        let mut rb = Vec::with_capacity(sf.psd.len());
        for (k, blk) in sf.psd.iter().enumerate() {
            let r = (&rc[k] - &it.xs[k] * &res.rd[k]) * &self.zinv[k];
            for (row, a) in &blk.a {
                rhs[*row] -= a.dot(&r);
            }
            rb.push(r);
        }
        let gv = rcv.component_div(&it.x) - &res.rdv;
        if sf.nv > 0 {
            rhs -= &sf.av * self.h.solve(&gv);
        }
        let dy = self.m.solve(&rhs)?;
        if dy.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let mut dxs = Vec::with_capacity(sf.psd.len());
        let mut dzs = Vec::with_capacity(sf.psd.len());
        for (k, blk) in sf.psd.iter().enumerate() {
            let mut dz = res.rd[k].clone();
            let mut dx = rb[k].clone();
            for ((row, a), g) in blk.a.iter().zip(&self.g[k]) {
                dz -= a * dy[*row];
                dx += g * dy[*row];
            }
            dxs.push((&dx + dx.transpose()) * 0.5);
            dzs.push(dz);
        }
        let dx = self.h.solve(&(sf.av.transpose() * &dy + &gv));
        let dz = (rcv - it.z.component_mul(&dx)).component_div(&it.x);
        Some(Direction {
            dxs,
            dzs,
            dx,
            dz,
            dy,
        })
    }
}

fn step_lengths(it: &Iterate, d: &Direction) -> Option<(f64, f64)> {
    let mut ap = max_step_vec(&it.x, &d.dx);
    let mut ad = max_step_vec(&it.z, &d.dz);
    for (x, dx) in it.xs.iter().zip(&d.dxs) {
        ap = ap.min(max_step_psd(x, dx)?);
    }
    for (z, dz) in it.zs.iter().zip(&d.dzs) {
        ad = ad.min(max_step_psd(z, dz)?);
    }
    Some((ap, ad))
}

fn complementarity_after(it: &Iterate, d: &Direction, ap: f64, ad: f64, nu: f64) -> f64 {
    let mut s = 0.0;
    for k in 0..it.xs.len() {
        s += (&it.xs[k] + &d.dxs[k] * ap).dot(&(&it.zs[k] + &d.dzs[k] * ad));
    }
    s += (&it.x + &d.dx * ap).dot(&(&it.z + &d.dz * ad));
    s / nu
}

pub(super) fn solve(problem: &ConicProblem, tol: f64) -> SolveOutcome {
    let sf = match prepare(problem) {
        Prepared::Ready(sf) => sf,
        Prepared::Infeasible => {
            return SolveOutcome::without_solution(problem, SolveStatus::Infeasible, 0);
        }
    };
    let nu = sf.nu();
    let has_q = sf.qv.is_some();
    let mut it = sf.initial_point();
    let mut status = SolveStatus::NumericalFailure;
    let mut iterations = 0;
    // Best iterate by worst of the three stopping measures.
    let mut best: Option<(f64, Iterate)> = None;

    for iter in 0..MAX_ITER {
        iterations = iter;
        let res = residuals(&sf, &it);
        if !(res.mu.is_finite() && res.pobj.is_finite() && res.dobj.is_finite()) {
            break;
        }
        if res.rel_p <= tol && res.rel_d <= tol && res.gap <= tol {
            status = SolveStatus::Optimal;
            break;
        }
        let merit = res.rel_p.max(res.rel_d).max(res.gap);
        if best.as_ref().is_none_or(|(m, _)| merit < *m) {
            best = Some((merit, it.clone()));
        }
        if let Some(s) = infeasibility(&sf, &it, &res, has_q) {
            status = s;
            break;
        }

        let Some(newton) = Newton::new(&sf, &it) else {
            break;
        };

        // Predictor.
        let rc_aff: Vec<DMatrix<f64>> = it.xs.iter().zip(&it.zs).map(|(x, z)| -(x * z)).collect();
        let rcv_aff = -it.x.component_mul(&it.z);
        let Some(aff) = newton.direction(&it, &res, &rc_aff, &rcv_aff) else {
            break;
        };
        let Some((ap, ad)) = step_lengths(&it, &aff) else {
            break;
        };
        let (ap, ad) = (ap.min(1.0), ad.min(1.0));
        let (ap, ad) = if has_q { (ap.min(ad), ap.min(ad)) } else { (ap, ad) };
        let mu_aff = complementarity_after(&it, &aff, ap, ad, nu);
        let sigma = (mu_aff / res.mu).clamp(0.0, 1.0).powi(3);

        // Corrector.
        let target = sigma * res.mu;
        let rc: Vec<DMatrix<f64>> = (0..it.xs.len())
            .map(|k| {
                let n = it.xs[k].nrows();
                DMatrix::identity(n, n) * target - &it.xs[k] * &it.zs[k] - &aff.dxs[k] * &aff.dzs[k]
            })
            .collect();
        let rcv = DVector::from_element(sf.nv, target)
            - it.x.component_mul(&it.z)
            - aff.dx.component_mul(&aff.dz);
        let Some(dir) = newton.direction(&it, &res, &rc, &rcv) else {
            break;
        };
        let Some((ap, ad)) = step_lengths(&it, &dir) else {
            break;
        };
        let (mut ap, mut ad) = ((STEP_FRACTION * ap).min(1.0), (STEP_FRACTION * ad).min(1.0));
        if has_q {
            ap = ap.min(ad);
            ad = ap;
        }
        if ap < 1e-12 && ad < 1e-12 {
            break;
        }

        for k in 0..it.xs.len() {
            it.xs[k] += &dir.dxs[k] * ap;
            it.xs[k] = (&it.xs[k] + it.xs[k].transpose()) * 0.5;
            it.zs[k] += &dir.dzs[k] * ad;
            it.zs[k] = (&it.zs[k] + it.zs[k].transpose()) * 0.5;
        }
        it.x += &dir.dx * ap;
        it.z += &dir.dz * ad;
        it.y += &dir.dy * ad;
    }
    if status == SolveStatus::NumericalFailure {
        // Stalled short of `tol`: fall back to the best iterate and accept it
        // when it is within a small multiple of the requested accuracy.
        if let Some((merit, b)) = best {
            it = b;
            if merit <= STALL_FACTOR * tol {
                status = SolveStatus::Optimal;
            }
        }
    }
    let res = residuals(&sf, &it);
    finish(problem, &sf, &it, status, iterations, &res)
}

fn infeasibility(sf: &StdForm, it: &Iterate, res: &Residuals, has_q: bool) -> Option<SolveStatus> {
    let by = sf.b.dot(&it.y);
    if by > 0.0 && res.rel_p > INFEASIBILITY_TOL {
        // y / by certifies primal infeasibility once A^T y + z is negligible.
        let aty = sf.apply_at_psd(&it.y);
        let mut n2 = (sf.av.transpose() * &it.y + &it.z).norm_squared();
        for (a, z) in aty.iter().zip(&it.zs) {
            n2 += (a + z).norm_squared();
        }
        if n2.sqrt() <= INFEASIBILITY_TOL * by {
            return Some(SolveStatus::Infeasible);
        }
    }
    if !has_q {
        let cx = res.pobj;
        if cx < 0.0 && res.rel_d > INFEASIBILITY_TOL {
            let ax = sf.apply_a(&it.xs, &it.x);
            if ax.norm() <= INFEASIBILITY_TOL * (-cx) {
                return Some(SolveStatus::Unbounded);
            }
        }
    }
    None
}

fn finish(
    problem: &ConicProblem,
    sf: &StdForm,
    it: &Iterate,
    status: SolveStatus,
    iterations: usize,
    res: &Residuals,
) -> SolveOutcome {
    let blocks: Vec<BlockValue> = problem
        .blocks
        .iter()
        .zip(&sf.block_map)
        .map(|(kind, map)| match (kind, map) {
            (_, BlockMap::Psd(k)) => BlockValue::Matrix(it.xs[*k].clone()),
            (BlockKind::Nonneg(n), BlockMap::Nonneg(o)) => {
                BlockValue::Vector(DVector::from_fn(*n, |i, _| it.x[o + i]))
            }
            (BlockKind::Free(n), BlockMap::Free(pos, neg)) => {
                BlockValue::Vector(DVector::from_fn(*n, |i, _| it.x[pos + i] - it.x[neg + i]))
            }
            _ => unreachable!("block map mismatch"),
        })
        .collect();
    let duals: Vec<f64> = sf
        .row_of
        .iter()
        .map(|r| r.map_or(0.0, |r| it.y[r] * sf.row_scale[r]))
        .collect();
    let objective = problem.objective_value(&blocks);
    let primal_residual = problem
        .constraints
        .iter()
        .map(|c| {
            let v = problem.row_value(c, &blocks) - c.rhs;
            let viol = match c.sense {
                Sense::Eq => v.abs(),
                Sense::Le => v.max(0.0),
                Sense::Ge => (-v).max(0.0),
            };
            viol / (1.0 + c.rhs.abs())
        })
        .fold(0.0, f64::max);
    SolveOutcome {
        status,
        blocks,
        duals,
        objective,
        dual_objective: res.dobj,
        report: AccuracyReport {
            primal_residual,
            dual_residual: res.rel_d,
            relative_gap: res.gap,
            iterations,
        },
    }
}
