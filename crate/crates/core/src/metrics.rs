//! SINR, rate and power evaluation of a fixed precoder.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{ula_steering, ChannelMatrix, GroupAssignment, NoiseProfile, C64};

/// `N_t x G` precoder; column `k` serves group `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecodingMatrix {
    w: DMatrix<C64>,
}

impl PrecodingMatrix {
    pub fn new(w: DMatrix<C64>) -> Result<Self> {
        if w.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidArgument("precoder has non-finite entries".into()));
        }
        Ok(Self { w })
    }

    pub fn zeros(n_antennas: usize, n_groups: usize) -> Self {
        Self {
            w: DMatrix::zeros(n_antennas, n_groups),
        }
    }

    pub fn from_columns(columns: &[DVector<C64>]) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::Dimension("precoder needs at least one column".into()));
        }
        Self::new(DMatrix::from_columns(columns))
    }

    pub fn n_antennas(&self) -> usize {
        self.w.nrows()
    }

    pub fn n_groups(&self) -> usize {
        self.w.ncols()
    }

    pub fn column(&self, k: usize) -> DVector<C64> {
        self.w.column(k).into_owned()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.w
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            w: self.w.map(|z| z * factor),
        }
    }

    pub(crate) fn matrix_mut(&mut self) -> &mut DMatrix<C64> {
        &mut self.w
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub sinr_per_user: Vec<f64>,
    pub rate_per_user: Vec<f64>,
    pub group_min_sinr: Vec<f64>,
    pub sum_rate: f64,
    pub antenna_power: Vec<f64>,
    pub total_power: f64,
}

fn check_dims(
    h: &ChannelMatrix,
    w: &PrecodingMatrix,
    groups: &GroupAssignment,
    noise: &NoiseProfile,
) -> Result<()> {
    if h.n_antennas() != w.n_antennas() {
        return Err(Error::Dimension(format!(
            "channel has {} antennas, precoder {}",
            h.n_antennas(),
            w.n_antennas()
        )));
    }
    if groups.n_groups() != w.n_groups() {
        return Err(Error::Dimension(format!(
            "{} groups but {} precoder columns",
            groups.n_groups(),
            w.n_groups()
        )));
    }
    if groups.n_users() != h.n_users() || noise.len() != h.n_users() {
        return Err(Error::Dimension(format!(
            "{} channel rows, {} grouped users, {} noise entries",
            h.n_users(),
            groups.n_users(),
            noise.len()
        )));
    }
    Ok(())
}

/// Received power of every beam at every user, `gains[(i, k)] = |w_k^H h_i|^2`.
fn beam_gains(h: &ChannelMatrix, w: &PrecodingMatrix) -> DMatrix<f64> {
    (h.entries() * w.matrix()).map(|z| z.norm_sqr())
}

fn sinr_from_gains(gains: &DMatrix<f64>, k: usize, user: usize, noise: f64) -> f64 {
    let total: f64 = gains.row(user).sum();
    let signal = gains[(user, k)];
    signal / ((total - signal).max(0.0) + noise)
}

pub fn sinr(
    h: &ChannelMatrix,
    w: &PrecodingMatrix,
    groups: &GroupAssignment,
    noise: &NoiseProfile,
    user: usize,
) -> Result<f64> {
    check_dims(h, w, groups, noise)?;
    if user >= h.n_users() {
        return Err(Error::Dimension(format!("user {user} out of range")));
    }
    let gains = beam_gains(h, w);
    Ok(sinr_from_gains(&gains, groups.group_of(user), user, noise.variance(user)))
}

pub fn user_sinrs(
    h: &ChannelMatrix,
    w: &PrecodingMatrix,
    groups: &GroupAssignment,
    noise: &NoiseProfile,
) -> Result<Vec<f64>> {
    check_dims(h, w, groups, noise)?;
    let gains = beam_gains(h, w);
    Ok((0..h.n_users())
        .map(|i| sinr_from_gains(&gains, groups.group_of(i), i, noise.variance(i)))
        .collect())
}

fn min_per_group(sinrs: &[f64], groups: &GroupAssignment) -> Vec<f64> {
    groups
        .iter()
        .map(|m| m.iter().map(|&i| sinrs[i]).fold(f64::INFINITY, f64::min))
        .collect()
}

/// Worst SINR inside each group.
pub fn group_min_sinr(
    h: &ChannelMatrix,
    w: &PrecodingMatrix,
    groups: &GroupAssignment,
    noise: &NoiseProfile,
) -> Result<Vec<f64>> {
    Ok(min_per_group(&user_sinrs(h, w, groups, noise)?, groups))
}

/// Sum over users of `log2(1 + gamma)`, where every user gets its group's
/// minimum SINR.
pub fn sum_rate(
    h: &ChannelMatrix,
    w: &PrecodingMatrix,
    groups: &GroupAssignment,
    noise: &NoiseProfile,
) -> Result<f64> {
    let mins = group_min_sinr(h, w, groups, noise)?;
    Ok(sum_rate_from_group_min(&mins, groups))
}

pub fn sum_rate_from_group_min(group_min: &[f64], groups: &GroupAssignment) -> f64 {
    groups
        .iter()
        .zip(group_min)
        .map(|(m, g)| m.len() as f64 * (1.0 + g).log2())
        .sum()
}

/// `[W W^H]_{nn}` for every antenna.
pub fn antenna_powers(w: &PrecodingMatrix) -> DVector<f64> {
    DVector::from_iterator(
        w.n_antennas(),
        w.matrix().row_iter().map(|r| r.iter().map(|z| z.norm_sqr()).sum()),
    )
}

pub fn total_power(w: &PrecodingMatrix) -> f64 {
    w.matrix().iter().map(|z| z.norm_sqr()).sum()
}

/// Largest `[W W^H]_{nn} / P_n`.
pub fn max_pac_ratio(w: &PrecodingMatrix, limits: &DVector<f64>) -> f64 {
    antenna_powers(w)
        .iter()
        .zip(limits.iter())
        .map(|(p, l)| p / l)
        .fold(0.0, f64::max)
}

/// Linear-scale beam pattern, entry `(t, k) = |a(theta_t)^H w_k|^2`.
pub fn pattern(w: &PrecodingMatrix, theta_grid_deg: &[f64], n_antennas: usize) -> Result<DMatrix<f64>> {
    if n_antennas != w.n_antennas() {
        return Err(Error::Dimension("pattern antenna count differs from precoder".into()));
    }
    let mut out = DMatrix::zeros(theta_grid_deg.len(), w.n_groups());
    for (t, &theta) in theta_grid_deg.iter().enumerate() {
        let a = ula_steering(theta, n_antennas)?;
        for k in 0..w.n_groups() {
            out[(t, k)] = a.dotc(&w.matrix().column(k)).norm_sqr();
        }
    }
    Ok(out)
}

pub fn evaluate(
    h: &ChannelMatrix,
    w: &PrecodingMatrix,
    groups: &GroupAssignment,
    noise: &NoiseProfile,
) -> Result<EvaluationReport> {
    let sinrs = user_sinrs(h, w, groups, noise)?;
    let group_min = min_per_group(&sinrs, groups);
    let rate_per_user = (0..h.n_users())
        .map(|i| (1.0 + group_min[groups.group_of(i)]).log2())
        .collect::<Vec<_>>();
    let antenna_power: Vec<f64> = antenna_powers(w).iter().copied().collect();
    Ok(EvaluationReport {
        sum_rate: rate_per_user.iter().sum(),
        total_power: antenna_power.iter().sum(),
        sinr_per_user: sinrs,
        rate_per_user,
        group_min_sinr: group_min,
        antenna_power,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{gen_rayleigh, substream, uniform_groups};
    use proptest::prelude::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn two_user_setup(h1: [f64; 2]) -> (ChannelMatrix, PrecodingMatrix, GroupAssignment, NoiseProfile) {
        let h = ChannelMatrix::new(DMatrix::from_row_slice(
            2,
            2,
            &[c(h1[0]), c(h1[1]), c(0.0), c(1.0)],
        ))
        .unwrap();
        let w = PrecodingMatrix::new(DMatrix::identity(2, 2)).unwrap();
        let g = GroupAssignment::new(vec![vec![0], vec![1]]).unwrap();
        (h, w, g, NoiseProfile::uniform(2, 1.0).unwrap())
    }

    #[test]
    fn sinr_examples() {
        let (h, w, g, n) = two_user_setup([1.0, 0.0]);
        assert!((sinr(&h, &w, &g, &n, 0).unwrap() - 1.0).abs() < 1e-15);
        let (h, w, g, n) = two_user_setup([1.0, 1.0]);
        assert!((sinr(&h, &w, &g, &n, 0).unwrap() - 0.5).abs() < 1e-15);
        let zero = PrecodingMatrix::zeros(2, 2);
        assert_eq!(sinr(&h, &zero, &g, &n, 0).unwrap(), 0.0);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let (h, _, g, n) = two_user_setup([1.0, 0.0]);
        let w = PrecodingMatrix::zeros(3, 2);
        assert!(matches!(sinr(&h, &w, &g, &n, 0), Err(Error::Dimension(_))));
        let w = PrecodingMatrix::zeros(2, 3);
        assert!(sum_rate(&h, &w, &g, &n).is_err());
    }

    #[test]
    fn group_minimum() {
        // One group holding users with SINR 1.0 and 0.5.
        let h = ChannelMatrix::new(DMatrix::from_row_slice(2, 1, &[c(1.0), c(0.5f64.sqrt())])).unwrap();
        let w = PrecodingMatrix::new(DMatrix::from_element(1, 1, c(1.0))).unwrap();
        let g = GroupAssignment::new(vec![vec![0, 1]]).unwrap();
        let n = NoiseProfile::uniform(2, 1.0).unwrap();
        let m = group_min_sinr(&h, &w, &g, &n).unwrap();
        assert!((m[0] - 0.5).abs() < 1e-12);

        let (h, w, g, n) = two_user_setup([1.0, 0.0]);
        let per_user = user_sinrs(&h, &w, &g, &n).unwrap();
        assert_eq!(group_min_sinr(&h, &w, &g, &n).unwrap(), per_user);
    }

    #[test]
    fn sum_rate_examples() {
        let g = uniform_groups(8, 4).unwrap();
        // Common rate 0.83 bps/Hz for every one of the 8 users.
        let gamma = 2f64.powf(0.83) - 1.0;
        let sr = sum_rate_from_group_min(&[gamma; 4], &g);
        assert!((sr - 6.64).abs() < 1e-12);

        // Two active users at SNR 4, the other group dark.
        let g = uniform_groups(4, 2).unwrap();
        let sr = sum_rate_from_group_min(&[4.0, 0.0], &g);
        assert!((sr - 2.0 * 5f64.log2()).abs() < 1e-12);
        assert!(sr > 4.6);

        let (h, _, g, n) = two_user_setup([1.0, 1.0]);
        assert_eq!(sum_rate(&h, &PrecodingMatrix::zeros(2, 2), &g, &n).unwrap(), 0.0);
    }

    #[test]
    fn antenna_power_examples() {
        let w = PrecodingMatrix::new(DMatrix::identity(2, 2)).unwrap();
        assert_eq!(antenna_powers(&w).as_slice(), &[1.0, 1.0]);
        assert_eq!(total_power(&w), 2.0);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let w = PrecodingMatrix::new(DMatrix::from_row_slice(2, 2, &[c(s), c(s), c(s), c(-s)])).unwrap();
        let p = antenna_powers(&w);
        assert!((p[0] - 1.0).abs() < 1e-15 && (p[1] - 1.0).abs() < 1e-15);
        let w = PrecodingMatrix::new(DMatrix::from_column_slice(2, 1, &[c(2.0), c(0.0)])).unwrap();
        assert_eq!(antenna_powers(&w).as_slice(), &[4.0, 0.0]);
        assert_eq!(total_power(&PrecodingMatrix::zeros(3, 2)), 0.0);
    }

    #[test]
    fn pattern_examples() {
        let a = ula_steering(90.0, 4).unwrap() * c(0.5);
        let w = PrecodingMatrix::from_columns(&[a]).unwrap();
        let p = pattern(&w, &[90.0, 60.0], 4).unwrap();
        assert!((p[(0, 0)] - 4.0).abs() < 1e-12);
        assert!(p[(1, 0)].abs() < 1e-12);
        let p = pattern(&PrecodingMatrix::zeros(4, 2), &[0.0, 45.0, 180.0], 4).unwrap();
        assert!(p.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn report_is_consistent() {
        let mut rng = substream(3, 0);
        let h = gen_rayleigh(6, 3, &mut rng).unwrap();
        let w = PrecodingMatrix::new(gen_rayleigh(3, 2, &mut rng).unwrap().entries().clone()).unwrap();
        let g = uniform_groups(6, 2).unwrap();
        let n = NoiseProfile::uniform(6, 1.0).unwrap();
        let r = evaluate(&h, &w, &g, &n).unwrap();
        assert!((r.sum_rate - sum_rate(&h, &w, &g, &n).unwrap()).abs() < 1e-12);
        let s: f64 = r.antenna_power.iter().sum();
        assert!((s - r.total_power).abs() <= 1e-12 * r.total_power);
        assert!((r.total_power - total_power(&w)).abs() <= 1e-12 * r.total_power);
    }

    fn random_instance(seed: u64) -> (ChannelMatrix, PrecodingMatrix, GroupAssignment) {
        let mut rng = substream(seed, 0);
        let h = gen_rayleigh(4, 3, &mut rng).unwrap();
        let w = PrecodingMatrix::new(gen_rayleigh(3, 2, &mut rng).unwrap().entries().clone()).unwrap();
        (h, w, uniform_groups(4, 2).unwrap())
    }

    proptest! {
        #[test]
        fn scaling_behaviour(seed in 0u64..1000) {
            let (h, w, g) = random_instance(seed);
            let w2 = w.scaled(2.0);
            let p1 = antenna_powers(&w);
            let p2 = antenna_powers(&w2);
            for n in 0..p1.len() {
                prop_assert!((p2[n] - 4.0 * p1[n]).abs() <= 1e-12 * p2[n].max(1.0));
            }
            prop_assert!((total_power(&w2) - 4.0 * total_power(&w)).abs() <= 1e-12 * total_power(&w2));

            // Interference-limited SINR (sigma^2 ~ 0) is scale invariant.
            let quiet = NoiseProfile::uniform(4, 1e-300).unwrap();
            let a = user_sinrs(&h, &w, &g, &quiet).unwrap();
            let b = user_sinrs(&h, &w2, &g, &quiet).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-9 * x.max(1e-12));
            }
            // With noise, more power helps and more noise hurts.
            let unit = NoiseProfile::uniform(4, 1.0).unwrap();
            let louder = NoiseProfile::uniform(4, 2.0).unwrap();
            let a = user_sinrs(&h, &w, &g, &unit).unwrap();
            let b = user_sinrs(&h, &w2, &g, &unit).unwrap();
            let c = user_sinrs(&h, &w, &g, &louder).unwrap();
            for i in 0..4 {
                if a[i] > 0.0 {
                    prop_assert!(b[i] > a[i]);
                    prop_assert!(c[i] < a[i]);
                }
            }
        }

        #[test]
        fn sum_rate_monotone_in_group_min(
            base in proptest::collection::vec(0.0f64..10.0, 3),
            k in 0usize..3,
            bump in 0.0f64..5.0,
        ) {
            let g = uniform_groups(6, 3).unwrap();
            let mut raised = base.clone();
            raised[k] += bump;
            prop_assert!(sum_rate_from_group_min(&raised, &g) >= sum_rate_from_group_min(&base, &g));
        }
    }
}
