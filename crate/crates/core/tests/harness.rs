use multicast_sr::harness::{self, ExperimentKind, ExperimentOutput, ExperimentSpec, Method, ResultRow};
use multicast_sr::metrics::{evaluate, max_pac_ratio};
use multicast_sr::model::{dbw_to_watts, PacVector, RunConfig};

fn quick(kind: ExperimentKind) -> ExperimentSpec {
    let mut s = ExperimentSpec::defaults(kind);
    s.config = RunConfig { n_rand: 20, outer_max: 10, ..RunConfig::default() };
    s
}

fn sweep() -> ExperimentOutput {
    let mut s = quick(ExperimentKind::PowerSweep);
    s.trials = 3;
    s.power_dbw = vec![-10.0, 10.0];
    harness::run(&s, 2).unwrap()
}

#[test]
fn rows_survive_a_csv_round_trip() {
    let out = sweep();
    let bytes = out.results_csv().unwrap();
    let back: Vec<ResultRow> = csv::Reader::from_reader(bytes.as_slice()).deserialize().map(Result::unwrap).collect();
    assert_eq!(back, out.rows);
}

#[test]
fn row_fields_agree_with_their_precoders() {
    let out = sweep();
    assert!(out.failures.is_empty());
    assert_eq!(out.rows.len(), 3 * 2 * 3);
    for row in &out.rows {
        let w = row.precoder_matrix(4, 4).unwrap();
        let inst = harness::trial_instance(&out.spec, row.trial, 8, row.x).unwrap();
        let e = evaluate(&inst.h, &w, &inst.groups, &inst.noise).unwrap();
        assert!((e.sum_rate - row.sum_rate).abs() <= 1e-12 * e.sum_rate.max(1.0));
        let pac = PacVector::equal_split(4, dbw_to_watts(row.x)).unwrap();
        let ratio = max_pac_ratio(&w, pac.limits());
        assert!(ratio <= 1.0 + 1e-6, "{ratio}");
        assert!((ratio - row.max_pac_ratio).abs() <= 1e-12);
        let ap = row.antenna_power_values().unwrap();
        assert!((ap.iter().sum::<f64>() - row.group_power_values().unwrap().iter().sum::<f64>()).abs() <= 1e-9 * dbw_to_watts(row.x));
    }
}

#[test]
fn fair_rows_balance_group_minima() {
    let out = sweep();
    for row in out.rows.iter().filter(|r| r.method == Method::MaxMinFairPac) {
        let w = row.precoder_matrix(4, 4).unwrap();
        let inst = harness::trial_instance(&out.spec, row.trial, 8, row.x).unwrap();
        let g = evaluate(&inst.h, &w, &inst.groups, &inst.noise).unwrap().group_min_sinr;
        let lo = g.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = g.iter().cloned().fold(0.0, f64::max);
        assert!((hi - lo) / lo <= 0.05, "{g:?}");
    }
}

#[test]
fn pattern_peaks_follow_the_served_users() {
    let mut s = quick(ExperimentKind::UlaPattern);
    s.pattern_step_deg = 0.5;
    let out = harness::run(&s, 1).unwrap();
    let pattern = out.table("pattern").unwrap();
    assert_eq!(pattern.records.len(), s.methods.len() * 361 * 2);
    // Group 1 (users at 85 and 90 degrees) peaks near them under max-SR.
    let (theta, _) = pattern
        .records
        .iter()
        .filter(|r| r[0] == "maxsr_pac" && r[2] == "0")
        .map(|r| (r[1].parse::<f64>().unwrap(), r[3].parse::<f64>().unwrap()))
        .fold((0.0, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best });
    assert!((80.0..=95.0).contains(&theta), "{theta}");
    let users = out.table("users").unwrap();
    assert_eq!(users.records.len(), s.methods.len() * 4);
}

#[test]
fn separation_sweep_covers_the_grid() {
    let s = quick(ExperimentKind::UlaSeparation);
    let out = harness::run(&s, 0).unwrap();
    let xs: Vec<f64> = out.rows.iter().filter(|r| r.method == Method::MaxSrPac).map(|r| r.x).collect();
    assert_eq!(xs, s.separations_deg);
}

#[test]
fn example_config_loads() {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/configs/single_demo.json");
    let spec = ExperimentSpec::load(&path).unwrap();
    assert_eq!(spec.kind, ExperimentKind::Single);
    assert_eq!(spec.config.seed, 11);
    assert_eq!(spec.methods, Method::ALL.to_vec());
    spec.validate().unwrap();
}
