use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::spec::{ExperimentKind, ExperimentSpec, Method};
use super::{encode_precoder, join, ExperimentOutput, ResultRow, Table, TrialFailure};
use crate::algorithms::{max_min_fair_pac, max_sr_pac, max_sr_spc, rescale_to_pac_with, SolveTrace};
use crate::error::{Error, Result};
use crate::metrics::{antenna_powers, evaluate, group_min_sinr, max_pac_ratio, pattern, sum_rate, EvaluationReport, PrecodingMatrix};
use crate::model::{
    dbw_to_watts, gen_rayleigh, gen_ula_channels, substream, uniform_groups, ChannelMatrix, GroupAssignment,
    NoiseProfile, PacVector, SimRng,
};

/// Largest accepted `max_n [W W^H]_nn / P_n` on an emitted row.
const PAC_AUDIT: f64 = 1.0 + 1e-6;

/// One channel realization with its limits.
#[derive(Debug, Clone)]
pub struct Instance {
    pub h: ChannelMatrix,
    pub groups: GroupAssignment,
    pub noise: NoiseProfile,
    pub pac: PacVector,
    pub p_tot: f64,
    /// User angles for line-of-sight channels.
    pub angles: Option<Vec<f64>>,
}

impl Instance {
    fn new(h: ChannelMatrix, spec: &ExperimentSpec, power_dbw: f64, angles: Option<Vec<f64>>) -> Result<Self> {
        let p_tot = dbw_to_watts(power_dbw);
        Ok(Self {
            groups: uniform_groups(h.n_users(), spec.n_groups)?,
            noise: NoiseProfile::uniform(h.n_users(), spec.noise_variance)?,
            pac: PacVector::equal_split(spec.n_antennas, p_tot)?,
            p_tot,
            angles,
            h,
        })
    }
}

/// The Rayleigh instance that trial `trial` of `spec` sees with `n_users`
/// users at `power_dbw`. Every grid point of a trial shares the channel.
pub fn trial_instance(spec: &ExperimentSpec, trial: usize, n_users: usize, power_dbw: f64) -> Result<Instance> {
    let mut rng = substream(spec.config.seed, trial as u64);
    let h = gen_rayleigh(n_users, spec.n_antennas, &mut rng)?;
    Instance::new(h, spec, power_dbw, None)
}

fn ula_instance(spec: &ExperimentSpec, angles: Vec<f64>, power_dbw: f64) -> Result<Instance> {
    let h = gen_ula_channels(&angles, spec.n_antennas)?;
    Instance::new(h, spec, power_dbw, Some(angles))
}

/// Stream for the randomizations of `method` at (`trial`, `point`), disjoint
/// from the channel streams `0..trials`.
fn method_stream(trial: usize, point: usize, method: Method) -> u64 {
    (1 << 60) | ((point as u64) << 32) | ((trial as u64) << 4) | method.index()
}

struct Solved {
    w: PrecodingMatrix,
    iterations: usize,
    trace: Option<SolveTrace>,
}

fn solve(method: Method, inst: &Instance, spec: &ExperimentSpec, rng: &mut SimRng) -> Result<Solved> {
    let cfg = &spec.config;
    match method {
        Method::MaxSrPac => {
            let (w, trace) = max_sr_pac(&inst.h, &inst.groups, &inst.pac, &inst.noise, cfg, rng)?;
            Ok(Solved { w, iterations: trace.records.len(), trace: Some(trace) })
        }
        Method::MaxSrSpcRescaled => {
            let (w, trace) = max_sr_spc(&inst.h, &inst.groups, inst.p_tot, &inst.noise, cfg, rng)?;
            let w = rescale_to_pac_with(&w, &inst.pac, spec.rescale);
            Ok(Solved { w, iterations: trace.records.len(), trace: Some(trace) })
        }
        Method::MaxMinFairPac => {
            let w = max_min_fair_pac(&inst.h, &inst.groups, &inst.pac, &inst.noise, cfg, rng)?;
            Ok(Solved { w, iterations: 0, trace: None })
        }
    }
}

/// Everything one unit of work contributes, merged in index order.
#[derive(Default)]
struct Chunk {
    rows: Vec<ResultRow>,
    records: Vec<(usize, Vec<String>)>,
    failures: Vec<TrialFailure>,
}

struct Point<'a> {
    spec: &'a ExperimentSpec,
    trial: usize,
    index: usize,
    x: f64,
}

impl Point<'_> {
    /// Runs every method of the spec. A failing method drops the whole
    /// point, so every kept point compares all methods on the same channel.
    fn solve_all(&self, inst: &Instance, chunk: &mut Chunk) -> Option<Vec<(Method, Solved)>> {
        let mut out = Vec::new();
        for &method in &self.spec.methods {
            let mut rng = substream(self.spec.config.seed, method_stream(self.trial, self.index, method));
            let result = solve(method, inst, self.spec, &mut rng).and_then(|s| {
                let ratio = max_pac_ratio(&s.w, inst.pac.limits());
                if ratio > PAC_AUDIT {
                    return Err(Error::InvalidArgument(format!("per-antenna limits exceeded by factor {ratio}")));
                }
                Ok(s)
            });
            match result {
                Ok(s) => out.push((method, s)),
                Err(e) => {
                    log::warn!("{} trial {} x={} {}: {e}", self.spec.name, self.trial, self.x, method);
                    chunk.failures.push(TrialFailure { trial: self.trial, x: self.x, method, error: e.to_string() });
                }
            }
        }
        (out.len() == self.spec.methods.len()).then_some(out)
    }

    fn row(&self, inst: &Instance, method: Method, s: &Solved) -> Result<ResultRow> {
        let gmin = group_min_sinr(&inst.h, &s.w, &inst.groups, &inst.noise)?;
        Ok(ResultRow {
            experiment: self.spec.name.clone(),
            trial: self.trial,
            seed: self.spec.config.seed,
            method,
            x: self.x,
            sum_rate: sum_rate(&inst.h, &s.w, &inst.groups, &inst.noise)?,
            min_group_sinr: gmin.iter().copied().fold(f64::INFINITY, f64::min),
            group_powers: join((0..s.w.n_groups()).map(|k| s.w.column(k).norm_squared())),
            antenna_powers: join(antenna_powers(&s.w).iter().copied()),
            max_pac_ratio: max_pac_ratio(&s.w, inst.pac.limits()),
            iterations: s.iterations,
            precoder: encode_precoder(&s.w),
        })
    }

    /// Solves, emits rows and hands the solutions back for side tables.
    fn run(&self, inst: &Instance, chunk: &mut Chunk) -> Result<Option<Vec<(Method, Solved)>>> {
        let Some(solved) = self.solve_all(inst, chunk) else {
            return Ok(None);
        };
        for (method, s) in &solved {
            chunk.rows.push(self.row(inst, *method, s)?);
        }
        Ok(Some(solved))
    }
}

fn par_chunks<F>(jobs: usize, n: usize, f: F) -> Result<Vec<Chunk>>
where
    F: Fn(usize) -> Result<Chunk> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;
    pool.install(|| (0..n).into_par_iter().map(f).collect())
}

fn assemble(spec: &ExperimentSpec, chunks: Vec<Chunk>, mut tables: Vec<Table>, started: Instant) -> ExperimentOutput {
    let mut out = ExperimentOutput {
        spec: spec.clone(),
        rows: Vec::new(),
        tables: Vec::new(),
        failures: Vec::new(),
        wall_time_s: 0.0,
    };
    for c in chunks {
        out.rows.extend(c.rows);
        out.failures.extend(c.failures);
        for (t, rec) in c.records {
            tables[t].records.push(rec);
        }
    }
    out.tables = tables;
    out.wall_time_s = started.elapsed().as_secs_f64();
    out
}

fn table(name: &str, header: &[&str]) -> Table {
    Table {
        name: name.into(),
        header: header.iter().map(|s| s.to_string()).collect(),
        records: Vec::new(),
    }
}

fn expect_kind(spec: &ExperimentSpec, kind: ExperimentKind) -> Result<()> {
    spec.validate()?;
    if spec.kind != kind {
        return Err(Error::Config(format!("spec `{}` has kind {:?}, expected {:?}", spec.name, spec.kind, kind)));
    }
    Ok(())
}

/// Dispatches on `spec.kind`. `jobs = 0` uses one worker per core.
pub fn run(spec: &ExperimentSpec, jobs: usize) -> Result<ExperimentOutput> {
    match spec.kind {
        ExperimentKind::PowerSweep => run_power_sweep(spec, jobs),
        ExperimentKind::UsersPerGroup => run_users_per_group(spec, jobs),
        ExperimentKind::UlaPattern => run_ula_pattern(spec),
        ExperimentKind::UlaSeparation => run_ula_separation(spec, jobs),
        ExperimentKind::Paradigm => run_paradigm(spec, jobs),
        ExperimentKind::Single => Ok(run_single_spec(spec)?.output),
    }
}

/// Rayleigh trials over the total-power grid; `x` is the power in dBW.
pub fn run_power_sweep(spec: &ExperimentSpec, jobs: usize) -> Result<ExperimentOutput> {
    expect_kind(spec, ExperimentKind::PowerSweep)?;
    let started = Instant::now();
    let np = spec.power_dbw.len();
    let chunks = par_chunks(jobs, spec.trials * np, |i| {
        let (trial, index) = (i / np, i % np);
        let x = spec.power_dbw[index];
        let inst = trial_instance(spec, trial, spec.n_users, x)?;
        let mut chunk = Chunk::default();
        Point { spec, trial, index, x }.run(&inst, &mut chunk)?;
        Ok(chunk)
    })?;
    Ok(assemble(spec, chunks, Vec::new(), started))
}

/// Rayleigh trials with `rho * n_groups` users; `x` is `rho`.
pub fn run_users_per_group(spec: &ExperimentSpec, jobs: usize) -> Result<ExperimentOutput> {
    expect_kind(spec, ExperimentKind::UsersPerGroup)?;
    let started = Instant::now();
    let nr = spec.users_per_group.len();
    let chunks = par_chunks(jobs, spec.trials * nr, |i| {
        let (trial, index) = (i / nr, i % nr);
        let rho = spec.users_per_group[index];
        let inst = trial_instance(spec, trial, rho * spec.n_groups, spec.power_dbw[0])?;
        let mut chunk = Chunk::default();
        Point { spec, trial, index, x: rho as f64 }.run(&inst, &mut chunk)?;
        Ok(chunk)
    })?;
    Ok(assemble(spec, chunks, Vec::new(), started))
}

fn user_records(inst: &Instance, method: Method, w: &PrecodingMatrix, trial: Option<usize>) -> Result<Vec<Vec<String>>> {
    let report = evaluate(&inst.h, w, &inst.groups, &inst.noise)?;
    Ok((0..inst.h.n_users())
        .map(|u| {
            let mut r = Vec::new();
            if let Some(t) = trial {
                r.push(t.to_string());
            }
            r.extend([
                method.to_string(),
                u.to_string(),
                inst.groups.group_of(u).to_string(),
                inst.angles.as_ref().map_or(String::new(), |a| format!("{:?}", a[u])),
                format!("{:?}", report.sinr_per_user[u]),
                format!("{:?}", report.rate_per_user[u]),
            ]);
            r
        })
        .collect())
}

const USER_HEADER: [&str; 6] = ["method", "user", "group", "angle_deg", "sinr", "rate"];

/// Fixed line-of-sight geometry. Emits the linear beam pattern of every
/// method (`pattern` table) and per-user SINRs and rates (`users` table).
pub fn run_ula_pattern(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    expect_kind(spec, ExperimentKind::UlaPattern)?;
    let started = Instant::now();
    let x = spec.power_dbw[0];
    let inst = ula_instance(spec, spec.user_angles_deg.clone(), x)?;
    let steps = (180.0 / spec.pattern_step_deg).round() as usize;
    let grid: Vec<f64> = (0..=steps).map(|t| (t as f64 * spec.pattern_step_deg).min(180.0)).collect();
    let mut chunk = Chunk::default();
    if let Some(solved) = (Point { spec, trial: 0, index: 0, x }).run(&inst, &mut chunk)? {
        for (method, s) in &solved {
            let gains = pattern(&s.w, &grid, spec.n_antennas)?;
            for (t, theta) in grid.iter().enumerate() {
                for k in 0..s.w.n_groups() {
                    chunk.records.push((
                        0,
                        vec![method.to_string(), format!("{theta:?}"), k.to_string(), format!("{:?}", gains[(t, k)])],
                    ));
                }
            }
            for rec in user_records(&inst, *method, &s.w, None)? {
                chunk.records.push((1, rec));
            }
        }
    }
    let tables = vec![table("pattern", &["method", "theta_deg", "group", "gain"]), table("users", &USER_HEADER)];
    Ok(assemble(spec, vec![chunk], tables, started))
}

/// Groups `{90, 90 - theta}` and `{45, 45 + theta}`; `x` is `theta`.
pub fn run_ula_separation(spec: &ExperimentSpec, jobs: usize) -> Result<ExperimentOutput> {
    expect_kind(spec, ExperimentKind::UlaSeparation)?;
    let started = Instant::now();
    let chunks = par_chunks(jobs, spec.separations_deg.len(), |index| {
        let theta = spec.separations_deg[index];
        let inst = ula_instance(spec, vec![90.0, 90.0 - theta, 45.0, 45.0 + theta], spec.power_dbw[0])?;
        let mut chunk = Chunk::default();
        Point { spec, trial: 0, index, x: theta }.run(&inst, &mut chunk)?;
        Ok(chunk)
    })?;
    Ok(assemble(spec, chunks, Vec::new(), started))
}

/// User angles for a paradigm instance with `n_groups` groups of
/// `per_group` users.
///
/// Group `k` is centred in the `k`-th of `n_groups` equal sectors of
/// `[0, 180]` degrees. Group `n_groups / 2` spreads its users 25 to 40
/// degrees either side of its centre, into the neighbouring sectors. The
/// last group (the first if that is the wide one) is nearly collocated,
/// within 1 degree. The rest spread 1 to 4 degrees.
pub fn paradigm_angles<R: Rng + ?Sized>(n_groups: usize, per_group: usize, rng: &mut R) -> Vec<f64> {
    let width = 180.0 / n_groups as f64;
    let wide = n_groups / 2;
    let tight = if n_groups - 1 != wide { n_groups - 1 } else { 0 };
    let mut angles = Vec::with_capacity(n_groups * per_group);
    for k in 0..n_groups {
        let centre = (k as f64 + 0.5) * width;
        let half = if k == wide {
            rng.random_range(25.0..40.0)
        } else if k == tight {
            rng.random_range(0.0..0.5)
        } else {
            rng.random_range(0.5..2.0)
        };
        for u in 0..per_group {
            let pos = if per_group == 1 { 0.0 } else { 2.0 * u as f64 / (per_group - 1) as f64 - 1.0 };
            angles.push((centre + pos * half).clamp(0.0, 180.0));
        }
    }
    angles
}

/// Seeded line-of-sight instances with one wide and one collocated group.
/// Emits per-user rates (`rates` table); `x` is the power in dBW.
pub fn run_paradigm(spec: &ExperimentSpec, jobs: usize) -> Result<ExperimentOutput> {
    expect_kind(spec, ExperimentKind::Paradigm)?;
    let started = Instant::now();
    let x = spec.power_dbw[0];
    let chunks = par_chunks(jobs, spec.trials, |trial| {
        let mut rng = substream(spec.config.seed, trial as u64);
        let angles = paradigm_angles(spec.n_groups, spec.n_users / spec.n_groups, &mut rng);
        let inst = ula_instance(spec, angles, x)?;
        let mut chunk = Chunk::default();
        if let Some(solved) = (Point { spec, trial, index: 0, x }).run(&inst, &mut chunk)? {
            for (method, s) in &solved {
                for rec in user_records(&inst, *method, &s.w, Some(trial))? {
                    chunk.records.push((0, rec));
                }
            }
        }
        Ok(chunk)
    })?;
    let mut header = vec!["trial"];
    header.extend(USER_HEADER);
    Ok(assemble(spec, chunks, vec![table("rates", &header)], started))
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodReport {
    pub method: Method,
    pub max_pac_ratio: f64,
    pub evaluation: EvaluationReport,
}

/// Result of a `single` run: the usual rows plus full per-method reports,
/// iteration traces and precoders.
#[derive(Debug, Clone)]
pub struct SingleReport {
    pub output: ExperimentOutput,
    pub reports: Vec<MethodReport>,
    pub traces: Vec<(Method, SolveTrace)>,
    pub precoders: Vec<(Method, PrecodingMatrix)>,
}

impl SingleReport {
    /// Writes the experiment files plus `<name>_report.json`,
    /// `<name>_trace.json` and `<name>_precoder.csv`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut written = self.output.write(dir)?;
        let name = &self.output.spec.name;
        let report = dir.join(format!("{name}_report.json"));
        fs::write(&report, serde_json::to_string_pretty(&self.reports)?)?;
        written.push(report);

        #[derive(Serialize)]
        struct TraceEntry<'a> {
            method: Method,
            trace: &'a SolveTrace,
        }
        let traces: Vec<_> = self.traces.iter().map(|(method, trace)| TraceEntry { method: *method, trace }).collect();
        let trace = dir.join(format!("{name}_trace.json"));
        fs::write(&trace, serde_json::to_string_pretty(&traces)?)?;
        written.push(trace);

        let path = dir.join(format!("{name}_precoder.csv"));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["method", "antenna", "group", "re", "im"])?;
        for (method, p) in &self.precoders {
            for k in 0..p.n_groups() {
                for n in 0..p.n_antennas() {
                    let z = p.matrix()[(n, k)];
                    w.write_record([method.to_string(), n.to_string(), k.to_string(), format!("{:?}", z.re), format!("{:?}", z.im)])?;
                }
            }
        }
        w.flush()?;
        written.push(path);
        Ok(written)
    }
}

/// Loads a `single` spec from JSON and solves its one instance.
pub fn run_single(path: &Path) -> Result<SingleReport> {
    run_single_spec(&ExperimentSpec::load(path)?)
}

/// Rayleigh channel from the seed, or line of sight when user angles are
/// given. Emits a `users` table with per-user SINRs and rates.
pub fn run_single_spec(spec: &ExperimentSpec) -> Result<SingleReport> {
    expect_kind(spec, ExperimentKind::Single)?;
    let started = Instant::now();
    let x = spec.power_dbw[0];
    let inst = if spec.user_angles_deg.is_empty() {
        trial_instance(spec, 0, spec.n_users, x)?
    } else {
        ula_instance(spec, spec.user_angles_deg.clone(), x)?
    };
    let mut chunk = Chunk::default();
    let mut reports = Vec::new();
    let mut traces = Vec::new();
    let mut precoders = Vec::new();
    if let Some(solved) = (Point { spec, trial: 0, index: 0, x }).run(&inst, &mut chunk)? {
        for (method, s) in solved {
            for rec in user_records(&inst, method, &s.w, None)? {
                chunk.records.push((0, rec));
            }
            reports.push(MethodReport {
                method,
                max_pac_ratio: max_pac_ratio(&s.w, inst.pac.limits()),
                evaluation: evaluate(&inst.h, &s.w, &inst.groups, &inst.noise)?,
            });
            if let Some(t) = s.trace {
                traces.push((method, t));
            }
            precoders.push((method, s.w));
        }
    }
    let output = assemble(spec, vec![chunk], vec![table("users", &USER_HEADER)], started);
    Ok(SingleReport { output, reports, traces, precoders })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RunConfig;

    fn quick(kind: ExperimentKind) -> ExperimentSpec {
        let mut s = ExperimentSpec::defaults(kind);
        s.config = RunConfig { n_rand: 10, outer_max: 5, ..RunConfig::default() };
        s
    }

    #[test]
    fn streams_are_distinct() {
        let mut seen = std::collections::HashSet::new();
        for t in 0..50 {
            assert!(seen.insert(t as u64));
            for p in 0..10 {
                for m in Method::ALL {
                    assert!(seen.insert(method_stream(t, p, m)));
                }
            }
        }
    }

    #[test]
    fn paradigm_geometry() {
        let mut rng = substream(3, 0);
        for _ in 0..20 {
            let a = paradigm_angles(4, 2, &mut rng);
            assert_eq!(a.len(), 8);
            assert!(a.iter().all(|x| (0.0..=180.0).contains(x)));
            let spread = |k: usize| a[2 * k + 1] - a[2 * k];
            assert!((50.0..80.0).contains(&spread(2)));
            assert!(spread(3) < 1.0);
            assert!((1.0..4.0).contains(&spread(0)) && (1.0..4.0).contains(&spread(1)));
        }
    }

    #[test]
    fn sweep_rows_are_ordered_and_complete() {
        let mut s = quick(ExperimentKind::PowerSweep);
        s.trials = 2;
        s.power_dbw = vec![0.0, 10.0];
        let out = run_power_sweep(&s, 2).unwrap();
        assert!(out.failures.is_empty());
        let keys: Vec<_> = out.rows.iter().map(|r| (r.trial, r.x, r.method)).collect();
        let mut expected = Vec::new();
        for t in 0..2 {
            for x in [0.0, 10.0] {
                for m in Method::ALL {
                    expected.push((t, x, m));
                }
            }
        }
        assert_eq!(keys, expected);
    }

    #[test]
    fn kind_mismatch_is_a_config_error() {
        let s = quick(ExperimentKind::Paradigm);
        assert!(matches!(run_power_sweep(&s, 1), Err(Error::Config(_))));
    }
}
