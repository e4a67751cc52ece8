//! A reduced power sweep through the experiment harness, written to a
//! directory as CSV plus a JSON metadata sidecar.
//!
//! `cargo run --release --example experiment_sweep -- [out_dir]`

use multicast_sr::harness::{run, ExperimentKind, ExperimentSpec, Method};

fn main() -> multicast_sr::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "results/example".into());
    let mut spec = ExperimentSpec::defaults(ExperimentKind::PowerSweep);
    spec.name = "sweep_demo".into();
    spec.trials = 5;
    spec.power_dbw = vec![-10.0, 0.0, 10.0, 20.0];
    spec.validate()?;

    let out = run(&spec, 0)?;
    println!("{:>6} {:>10} {:>10} {:>10}", "dBW", "PAC", "SPC resc.", "fair");
    for &x in &spec.power_dbw {
        let m = |method| out.mean_sum_rate(method, x).unwrap_or(f64::NAN);
        println!(
            "{x:6.1} {:10.4} {:10.4} {:10.4}",
            m(Method::MaxSrPac),
            m(Method::MaxSrSpcRescaled),
            m(Method::MaxMinFairPac)
        );
    }
    for path in out.write(dir.as_ref())? {
        println!("wrote {}", path.display());
    }
    Ok(())
}
