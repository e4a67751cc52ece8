//! Problem data: channels, multicast groups, noise, per-antenna limits and
//! run parameters, plus the two channel generators used by the experiments.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::power::Metric;

pub type C64 = Complex64;

/// Generator used for every random draw in the crate.
pub type SimRng = ChaCha8Rng;

/// Independent, reproducible stream `stream` of the generator seeded with `seed`.
///
/// ChaCha streams do not overlap, so trial `t` can draw its channel and its
/// randomizations from distinct streams regardless of scheduling order.
pub fn substream(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Row `i` holds `h_i^H`, the conjugated channel of user `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    entries: DMatrix<C64>,
}

impl ChannelMatrix {
    pub fn new(entries: DMatrix<C64>) -> Result<Self> {
        if entries.nrows() == 0 || entries.ncols() == 0 {
            return Err(Error::Dimension("channel matrix must be at least 1x1".into()));
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidArgument("channel matrix has non-finite entries".into()));
        }
        Ok(Self { entries })
    }

    /// Builds the matrix from user channel vectors `h_i` (not conjugated).
    pub fn from_user_channels(channels: &[DVector<C64>]) -> Result<Self> {
        let Some(first) = channels.first() else {
            return Err(Error::Dimension("no user channels".into()));
        };
        let nt = first.len();
        if channels.iter().any(|h| h.len() != nt) {
            return Err(Error::Dimension("user channels differ in length".into()));
        }
        let entries = DMatrix::from_fn(channels.len(), nt, |i, n| channels[i][n].conj());
        Self::new(entries)
    }

    pub fn zeros(n_users: usize, n_antennas: usize) -> Result<Self> {
        Self::new(DMatrix::zeros(n_users, n_antennas))
    }

    pub fn n_users(&self) -> usize {
        self.entries.nrows()
    }

    pub fn n_antennas(&self) -> usize {
        self.entries.ncols()
    }

    pub fn entries(&self) -> &DMatrix<C64> {
        &self.entries
    }

    /// `h_i` as a column vector.
    pub fn user_channel(&self, user: usize) -> DVector<C64> {
        DVector::from_iterator(
            self.n_antennas(),
            self.entries.row(user).iter().map(|z| z.conj()),
        )
    }

    /// `|w^H h_i|^2`.
    pub fn gain(&self, user: usize, w: &DVector<C64>) -> f64 {
        self.entries
            .row(user)
            .iter()
            .zip(w.iter())
            .map(|(a, b)| a * b)
            .sum::<C64>()
            .norm_sqr()
    }
}

/// Partition of users into disjoint, nonempty multicast groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<usize>>", into = "Vec<Vec<usize>>")]
pub struct GroupAssignment {
    groups: Vec<Vec<usize>>,
    group_of: Vec<usize>,
}

impl GroupAssignment {
    /// `groups[k]` lists the (0-based) users of group `k`.
    pub fn new(groups: Vec<Vec<usize>>) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::InvalidArgument("at least one group required".into()));
        }
        let n_users: usize = groups.iter().map(Vec::len).sum();
        let mut group_of = vec![usize::MAX; n_users];
        for (k, members) in groups.iter().enumerate() {
            if members.is_empty() {
                return Err(Error::InvalidArgument(format!("group {k} is empty")));
            }
            for &u in members {
                if u >= n_users || group_of[u] != usize::MAX {
                    return Err(Error::InvalidArgument(format!(
                        "groups do not partition 0..{n_users} (user {u})"
                    )));
                }
                group_of[u] = k;
            }
        }
        Ok(Self { groups, group_of })
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn n_users(&self) -> usize {
        self.group_of.len()
    }

    pub fn members(&self, group: usize) -> &[usize] {
        &self.groups[group]
    }

    pub fn group_of(&self, user: usize) -> usize {
        self.group_of[user]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[usize]> {
        self.groups.iter().map(Vec::as_slice)
    }
}

impl TryFrom<Vec<Vec<usize>>> for GroupAssignment {
    type Error = Error;
    fn try_from(groups: Vec<Vec<usize>>) -> Result<Self> {
        Self::new(groups)
    }
}

impl From<GroupAssignment> for Vec<Vec<usize>> {
    fn from(g: GroupAssignment) -> Self {
        g.groups
    }
}

/// Receiver noise variances `sigma_i^2` in watts.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseProfile(Vec<f64>);

impl NoiseProfile {
    pub fn new(variances: Vec<f64>) -> Result<Self> {
        if variances.is_empty() || variances.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument("noise variances must be positive".into()));
        }
        Ok(Self(variances))
    }

    pub fn uniform(n_users: usize, variance: f64) -> Result<Self> {
        Self::new(vec![variance; n_users])
    }

    pub fn variance(&self, user: usize) -> f64 {
        self.0[user]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Per-antenna power limits `P_n` in watts.
#[derive(Debug, Clone, PartialEq)]
pub struct PacVector(DVector<f64>);

impl PacVector {
    pub fn new(limits: Vec<f64>) -> Result<Self> {
        if limits.is_empty() || limits.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument("per-antenna limits must be positive".into()));
        }
        Ok(Self(DVector::from_vec(limits)))
    }

    /// Splits `total` watts equally over `n_antennas`.
    pub fn equal_split(n_antennas: usize, total: f64) -> Result<Self> {
        Self::new(vec![total / n_antennas as f64; n_antennas])
    }

    pub fn limits(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn limit(&self, antenna: usize) -> f64 {
        self.0[antenna]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.0.sum()
    }
}

/// Algorithm parameters. Defaults reproduce the reference setup
/// (100 randomizations, step 0.4, one sub-gradient step per outer iteration).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub n_rand: usize,
    pub delta: f64,
    pub l_max: usize,
    pub outer_max: usize,
    /// Relative sum-rate change that ends the outer loop.
    pub sr_tol: f64,
    pub solver_tol: f64,
    pub seed: u64,
    /// Smallest group power, as a fraction of the total per-antenna budget.
    pub power_floor: f64,
    /// Scale each QoS solution up to the power budget before reallocating.
    pub fill_budget: bool,
    /// Metric of the power projection.
    pub projection: Metric,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n_rand: 100,
            delta: 0.4,
            l_max: 1,
            outer_max: 50,
            sr_tol: 1e-3,
            solver_tol: 1e-8,
            seed: 0,
            power_floor: 1e-10,
            fill_budget: true,
            projection: Metric::Euclidean,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("run config: {what}")));
        if self.n_rand < 1 {
            return bad("n_rand must be >= 1");
        }
        if !(self.delta > 0.0) {
            return bad("delta must be > 0");
        }
        if self.l_max < 1 {
            return bad("l_max must be >= 1");
        }
        if self.outer_max < 1 {
            return bad("outer_max must be >= 1");
        }
        if !(self.sr_tol > 0.0) || !(self.solver_tol > 0.0) || !(self.power_floor > 0.0) {
            return bad("tolerances and power floor must be > 0");
        }
        Ok(())
    }

    /// Absolute power floor for a budget of `total` watts.
    pub fn floor_for(&self, total: f64) -> f64 {
        self.power_floor * total
    }
}

/// I.i.d. CN(0, 1) channel entries.
pub fn gen_rayleigh<R: Rng + ?Sized>(
    n_users: usize,
    n_antennas: usize,
    rng: &mut R,
) -> Result<ChannelMatrix> {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let entries = DMatrix::from_fn(n_users, n_antennas, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(scale * re, scale * im)
    });
    ChannelMatrix::new(entries)
}

/// Half-wavelength ULA response `[a(theta)]_n = exp(j pi n cos theta)`,
/// phase referenced to element 0; broadside (90 deg) is the all-ones vector.
pub fn ula_steering(theta_deg: f64, n_antennas: usize) -> Result<DVector<C64>> {
    if !(0.0..=180.0).contains(&theta_deg) {
        return Err(Error::AngleOutOfRange(theta_deg));
    }
    let phase = std::f64::consts::PI * theta_deg.to_radians().cos();
    Ok(DVector::from_fn(n_antennas, |n, _| {
        C64::from_polar(1.0, phase * n as f64)
    }))
}

/// Far-field line-of-sight channels for users at `angles_deg`.
pub fn gen_ula_channels(angles_deg: &[f64], n_antennas: usize) -> Result<ChannelMatrix> {
    let steering = angles_deg
        .iter()
        .map(|&a| ula_steering(a, n_antennas))
        .collect::<Result<Vec<_>>>()?;
    ChannelMatrix::from_user_channels(&steering)
}

/// Contiguous blocks of `n_users / n_groups` users.
pub fn uniform_groups(n_users: usize, n_groups: usize) -> Result<GroupAssignment> {
    if n_groups == 0 || n_users == 0 || n_users % n_groups != 0 {
        return Err(Error::UnevenGroups {
            users: n_users,
            groups: n_groups,
        });
    }
    let per = n_users / n_groups;
    GroupAssignment::new((0..n_groups).map(|k| (k * per..(k + 1) * per).collect()).collect())
}

/// Watts from dBW.
pub fn dbw_to_watts(dbw: f64) -> f64 {
    10f64.powf(dbw / 10.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: C64, b: C64) -> bool {
        (a - b).norm() < 1e-12
    }

    #[test]
    fn steering_examples() {
        let j = C64::i();
        let one = C64::new(1.0, 0.0);
        let a = ula_steering(90.0, 4).unwrap();
        assert!(a.iter().all(|z| close(*z, one)));
        let a = ula_steering(60.0, 4).unwrap();
        for (z, e) in a.iter().zip([one, j, -one, -j]) {
            assert!(close(*z, e), "{z} vs {e}");
        }
        let a = ula_steering(0.0, 2).unwrap();
        assert!(close(a[0], one) && close(a[1], -one));
    }

    #[test]
    fn steering_rejects_out_of_range() {
        assert!(matches!(ula_steering(-1.0, 4), Err(Error::AngleOutOfRange(_))));
        assert!(matches!(ula_steering(180.5, 4), Err(Error::AngleOutOfRange(_))));
        assert!(gen_ula_channels(&[90.0, 200.0], 4).is_err());
    }

    #[test]
    fn ula_rows_are_conjugated_steering() {
        let h = gen_ula_channels(&[90.0], 4).unwrap();
        assert!(h.entries().iter().all(|z| close(*z, C64::new(1.0, 0.0))));
        let h = gen_ula_channels(&[90.0, 90.0], 4).unwrap();
        assert_eq!(h.entries().row(0), h.entries().row(1));
        let h = gen_ula_channels(&[37.0], 3).unwrap();
        let a = ula_steering(37.0, 3).unwrap();
        for n in 0..3 {
            assert!(close(h.entries()[(0, n)], a[n].conj()));
        }
    }

    #[test]
    fn broadside_and_sixty_degrees_are_orthogonal() {
        // Geometric series sum_{n<4} exp(j pi n / 2) = (1 - j^4) / (1 - j) = 0.
        let mut oracle = C64::new(0.0, 0.0);
        for n in 0..4 {
            oracle += C64::from_polar(1.0, std::f64::consts::FRAC_PI_2 * n as f64);
        }
        assert!(oracle.norm() < 1e-12);
        let a = ula_steering(90.0, 4).unwrap();
        let b = ula_steering(60.0, 4).unwrap();
        assert!(a.dotc(&b).norm() < 1e-12);
    }

    #[test]
    fn uniform_groups_examples() {
        let g = uniform_groups(8, 4).unwrap();
        let expect: Vec<Vec<usize>> = vec![vec![0, 1], vec![2, 3], vec![4, 5], vec![6, 7]];
        assert_eq!(Vec::<Vec<usize>>::from(g), expect);
        let g = uniform_groups(4, 4).unwrap();
        assert!(g.iter().all(|m| m.len() == 1));
        let g = uniform_groups(4, 2).unwrap();
        assert_eq!(g.members(0), &[0, 1]);
        assert_eq!(g.members(1), &[2, 3]);
        assert!(matches!(uniform_groups(5, 2), Err(Error::UnevenGroups { .. })));
    }

    #[test]
    fn group_assignment_rejects_bad_partitions() {
        assert!(GroupAssignment::new(vec![vec![0, 1], vec![1]]).is_err());
        assert!(GroupAssignment::new(vec![vec![0], vec![]]).is_err());
        assert!(GroupAssignment::new(vec![vec![0, 2]]).is_err());
        assert!(GroupAssignment::new(vec![]).is_err());
    }

    #[test]
    fn rayleigh_is_deterministic() {
        let a = gen_rayleigh(1, 1, &mut substream(42, 0)).unwrap();
        let b = gen_rayleigh(1, 1, &mut substream(42, 0)).unwrap();
        assert_eq!(a, b);
        let c = gen_rayleigh(1, 1, &mut substream(42, 1)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rayleigh_moments() {
        let mut rng = substream(7, 0);
        let h = gen_rayleigh(100_000, 1, &mut rng).unwrap();
        let n = h.n_users() as f64;
        let power = h.entries().iter().map(|z| z.norm_sqr()).sum::<f64>() / n;
        let mean: C64 = h.entries().iter().sum::<C64>() / n;
        assert!((power - 1.0).abs() < 0.02, "E|h|^2 = {power}");
        assert!(mean.re.abs() < 0.02 && mean.im.abs() < 0.02, "E h = {mean}");
    }

    #[test]
    fn run_config_defaults_are_valid() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.n_rand, 100);
        assert_eq!(cfg.l_max, 1);
        assert!((cfg.delta - 0.4).abs() < 1e-15);
        let bad = RunConfig { delta: 0.0, ..RunConfig::default() };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn steering_has_unit_entries(theta in 0.0f64..=180.0, n in 1usize..9) {
            let a = ula_steering(theta, n).unwrap();
            for z in a.iter() {
                prop_assert!((z.norm() - 1.0).abs() < 1e-12);
            }
            prop_assert!((a.dotc(&a).norm() - n as f64).abs() < 1e-12);
        }

        #[test]
        fn uniform_groups_partition(g in 1usize..6, per in 1usize..5) {
            let groups = uniform_groups(g * per, g).unwrap();
            let mut seen = vec![0usize; g * per];
            for (k, m) in groups.iter().enumerate() {
                for &u in m {
                    seen[u] += 1;
                    prop_assert_eq!(groups.group_of(u), k);
                }
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
        }
    }
}
