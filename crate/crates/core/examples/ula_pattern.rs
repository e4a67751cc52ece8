//! Radiation patterns of the max-SR and fair precoders for four users on a
//! uniform linear array, drawn as a coarse text plot. Group 1 has users at
//! 85 and 90 degrees, group 2 at 92.5 and 137.5 degrees, so its beam cannot
//! serve both members without hurting group 1.

use multicast_sr::harness::{run_ula_pattern, ExperimentKind, ExperimentSpec};

fn main() -> multicast_sr::Result<()> {
    let mut spec = ExperimentSpec::defaults(ExperimentKind::UlaPattern);
    spec.pattern_step_deg = 5.0;
    let out = run_ula_pattern(&spec)?;

    for row in &out.rows {
        println!("{:<20} SR {:.3}  group powers {}", row.method.name(), row.sum_rate, row.group_powers);
    }
    let pattern = out.table("pattern").expect("pattern table");
    let peak = pattern.records.iter().map(|r| r[3].parse::<f64>().unwrap()).fold(0.0, f64::max);
    for method in &spec.methods {
        println!("\n{} (# group 1, o group 2)", method.name());
        for r in pattern.records.iter().filter(|r| r[0] == method.name() && r[2] == "0") {
            let theta = &r[1];
            let bar = |group: &str, c: char| {
                let gain: f64 = pattern
                    .records
                    .iter()
                    .find(|q| q[0] == method.name() && &q[1] == theta && q[2] == group)
                    .map(|q| q[3].parse().unwrap())
                    .unwrap_or(0.0);
                c.to_string().repeat((30.0 * gain / peak).round() as usize)
            };
            println!("{theta:>6} |{:<30}|{}", bar("0", '#'), bar("1", 'o'));
        }
    }
    Ok(())
}
