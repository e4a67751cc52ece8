use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::algorithms::RescaleMode;
use crate::error::{Error, Result};
use crate::model::RunConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    PowerSweep,
    UsersPerGroup,
    UlaPattern,
    UlaSeparation,
    Paradigm,
    Single,
}

impl ExperimentKind {
    fn default_name(self) -> &'static str {
        match self {
            Self::PowerSweep => "fig2",
            Self::UsersPerGroup => "fig3",
            Self::UlaPattern => "fig4",
            Self::UlaSeparation => "fig5",
            Self::Paradigm => "paradigm",
            Self::Single => "single",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "maxsr_pac")]
    MaxSrPac,
    #[serde(rename = "maxsr_spc_rescaled")]
    MaxSrSpcRescaled,
    #[serde(rename = "maxmin_fair_pac")]
    MaxMinFairPac,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::MaxSrPac, Method::MaxSrSpcRescaled, Method::MaxMinFairPac];

    pub fn name(self) -> &'static str {
        match self {
            Method::MaxSrPac => "maxsr_pac",
            Method::MaxSrSpcRescaled => "maxsr_spc_rescaled",
            Method::MaxMinFairPac => "maxmin_fair_pac",
        }
    }

    pub(crate) fn index(self) -> u64 {
        self as u64
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Fully resolved experiment description.
///
/// Per-antenna limits are always `P_tot / n_antennas` and the noise variance
/// is shared by all users. Fields that a kind does not use are kept at their
/// defaults and ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub name: String,
    pub n_antennas: usize,
    pub n_users: usize,
    pub n_groups: usize,
    /// Total transmit power grid in dBW.
    pub power_dbw: Vec<f64>,
    pub trials: usize,
    /// Users-per-group ratios swept by `users_per_group`.
    pub users_per_group: Vec<usize>,
    /// User angles for `ula_pattern`, and for `single` when nonempty (empty
    /// means Rayleigh). Users are grouped contiguously.
    pub user_angles_deg: Vec<f64>,
    /// Co-group separations swept by `ula_separation`.
    pub separations_deg: Vec<f64>,
    pub pattern_step_deg: f64,
    pub noise_variance: f64,
    pub rescale: RescaleMode,
    pub methods: Vec<Method>,
    pub config: RunConfig,
    pub output: Option<PathBuf>,
}

/// On-disk form: only `kind` is required, everything else falls back to the
/// defaults of that kind.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    kind: ExperimentKind,
    name: Option<String>,
    n_antennas: Option<usize>,
    n_users: Option<usize>,
    n_groups: Option<usize>,
    power_dbw: Option<Vec<f64>>,
    trials: Option<usize>,
    users_per_group: Option<Vec<usize>>,
    user_angles_deg: Option<Vec<f64>>,
    separations_deg: Option<Vec<f64>>,
    pattern_step_deg: Option<f64>,
    noise_variance: Option<f64>,
    rescale: Option<RescaleMode>,
    methods: Option<Vec<Method>>,
    config: Option<RunConfig>,
    output: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn defaults(kind: ExperimentKind) -> Self {
        let mut spec = Self {
            kind,
            name: kind.default_name().into(),
            n_antennas: 4,
            n_users: 8,
            n_groups: 4,
            power_dbw: vec![20.0],
            trials: 1,
            users_per_group: Vec::new(),
            user_angles_deg: Vec::new(),
            separations_deg: Vec::new(),
            pattern_step_deg: 0.5,
            noise_variance: 1.0,
            rescale: RescaleMode::RowWise,
            methods: Method::ALL.to_vec(),
            config: RunConfig::default(),
            output: None,
        };
        match kind {
            ExperimentKind::PowerSweep => {
                spec.power_dbw = (0..=8).map(|i| -20.0 + 5.0 * i as f64).collect();
                spec.trials = 100;
            }
            ExperimentKind::UsersPerGroup => {
                spec.trials = 50;
                spec.users_per_group = vec![1, 2, 3];
            }
            ExperimentKind::UlaPattern => {
                spec.n_users = 4;
                spec.n_groups = 2;
                spec.power_dbw = vec![0.0];
                spec.user_angles_deg = vec![85.0, 90.0, 92.5, 137.5];
            }
            ExperimentKind::UlaSeparation => {
                spec.n_users = 4;
                spec.n_groups = 2;
                spec.power_dbw = vec![0.0];
                spec.separations_deg = (0..=9).map(|i| 5.0 * i as f64).collect();
            }
            ExperimentKind::Paradigm => {
                spec.power_dbw = vec![0.0];
                spec.trials = 50;
                spec.methods = vec![Method::MaxSrPac, Method::MaxMinFairPac];
            }
            ExperimentKind::Single => {
                spec.methods = vec![Method::MaxSrPac];
            }
        }
        spec
    }

    /// Parses a JSON spec. Errors carry the line and column of the problem.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: SpecFile = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut s = Self::defaults(file.kind);
        macro_rules! take {
            ($($f:ident),*) => { $(if let Some(v) = file.$f { s.$f = v; })* };
        }
        take!(
            name,
            n_antennas,
            n_users,
            n_groups,
            power_dbw,
            trials,
            users_per_group,
            user_angles_deg,
            separations_deg,
            pattern_step_deg,
            noise_variance,
            rescale,
            methods,
            config
        );
        s.output = file.output;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        self.config.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return bad(format!("name `{}` is not a plain file stem", self.name));
        }
        if self.n_antennas == 0 || self.n_groups == 0 {
            return bad("n_antennas and n_groups must be >= 1".into());
        }
        if self.trials == 0 {
            return bad("trials must be >= 1".into());
        }
        let watts_ok = |p: f64| {
            let w = crate::model::dbw_to_watts(p);
            w > 0.0 && w.is_finite()
        };
        if self.power_dbw.is_empty() || !self.power_dbw.iter().all(|&p| watts_ok(p)) {
            return bad("power_dbw must be a nonempty list of powers that are positive and finite in watts".into());
        }
        if !(self.noise_variance > 0.0 && self.noise_variance.is_finite()) {
            return bad("noise_variance must be > 0".into());
        }
        if self.methods.is_empty() {
            return bad("methods must not be empty".into());
        }
        let mut sorted = self.methods.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.methods.len() {
            return bad("methods must not repeat".into());
        }
        if self.user_angles_deg.iter().any(|a| !(0.0..=180.0).contains(a)) {
            return bad("user angles must lie in [0, 180] degrees".into());
        }
        let single_power = |what: &str| -> Result<()> {
            if self.power_dbw.len() != 1 {
                return bad(format!("{what} takes exactly one power_dbw value"));
            }
            Ok(())
        };
        let even = |users: usize| -> Result<()> {
            if users == 0 || users % self.n_groups != 0 {
                return bad(format!("{users} users cannot be split evenly into {} groups", self.n_groups));
            }
            Ok(())
        };
        match self.kind {
            ExperimentKind::PowerSweep => even(self.n_users)?,
            ExperimentKind::UsersPerGroup => {
                single_power("users_per_group")?;
                if self.users_per_group.is_empty() || self.users_per_group.contains(&0) {
                    return bad("users_per_group must be a nonempty list of positive ratios".into());
                }
            }
            ExperimentKind::UlaPattern => {
                single_power("ula_pattern")?;
                if self.user_angles_deg.len() != self.n_users {
                    return bad(format!("need {} user angles, got {}", self.n_users, self.user_angles_deg.len()));
                }
                even(self.n_users)?;
                if !(self.pattern_step_deg > 0.0 && self.pattern_step_deg <= 180.0) {
                    return bad("pattern_step_deg must lie in (0, 180]".into());
                }
            }
            ExperimentKind::UlaSeparation => {
                single_power("ula_separation")?;
                if self.n_users != 4 || self.n_groups != 2 {
                    return bad("ula_separation uses 4 users in 2 groups".into());
                }
                if self.separations_deg.is_empty() || self.separations_deg.iter().any(|t| !(0.0..=90.0).contains(t)) {
                    return bad("separations_deg must be a nonempty list within [0, 90]".into());
                }
            }
            ExperimentKind::Paradigm => {
                single_power("paradigm")?;
                even(self.n_users)?;
                if self.n_groups < 2 {
                    return bad("paradigm needs at least 2 groups".into());
                }
            }
            ExperimentKind::Single => {
                single_power("single")?;
                even(self.n_users)?;
                if !self.user_angles_deg.is_empty() && self.user_angles_deg.len() != self.n_users {
                    return bad(format!("need {} user angles, got {}", self.n_users, self.user_angles_deg.len()));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        for kind in [
            ExperimentKind::PowerSweep,
            ExperimentKind::UsersPerGroup,
            ExperimentKind::UlaPattern,
            ExperimentKind::UlaSeparation,
            ExperimentKind::Paradigm,
            ExperimentKind::Single,
        ] {
            ExperimentSpec::defaults(kind).validate().unwrap();
        }
    }

    #[test]
    fn serialize_parse_identity() {
        let mut spec = ExperimentSpec::defaults(ExperimentKind::UlaSeparation);
        spec.output = Some("out".into());
        spec.config.delta = 0.1 + 0.2;
        let back = ExperimentSpec::from_json(&spec.to_json().unwrap()).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn partial_file_takes_kind_defaults() {
        let s = ExperimentSpec::from_json(r#"{"kind": "power_sweep", "trials": 3, "config": {"n_rand": 7}}"#).unwrap();
        assert_eq!(s.trials, 3);
        assert_eq!(s.power_dbw.len(), 9);
        assert_eq!(s.config.n_rand, 7);
        assert_eq!(s.config.delta, 0.4);
    }

    #[test]
    fn errors_name_the_problem() {
        let e = ExperimentSpec::from_json(r#"{"trials": 3}"#).unwrap_err().to_string();
        assert!(e.contains("missing field `kind`"), "{e}");
        let e = ExperimentSpec::from_json("{\n  \"kind\": \"single\",\n  \"trails\": 3\n}").unwrap_err().to_string();
        assert!(e.contains("unknown field `trails`") && e.contains("line 3"), "{e}");
        let e = ExperimentSpec::from_json(r#"{"kind": "single", "methods": ["fastest"]}"#).unwrap_err().to_string();
        assert!(e.contains("fastest"), "{e}");
        let e = ExperimentSpec::from_json(r#"{"kind": "power_sweep", "trials": 0}"#).unwrap_err().to_string();
        assert!(e.contains("trials"), "{e}");
        let e = ExperimentSpec::from_json(r#"{"kind": "ula_pattern", "user_angles_deg": [1, 2]}"#).unwrap_err().to_string();
        assert!(e.contains("user angles"), "{e}");
    }
}
