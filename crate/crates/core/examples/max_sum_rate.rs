//! The three precoders on one Rayleigh instance: sum-rate maximization under
//! per-antenna limits, the sum-power design rescaled into those limits, and
//! the max-min fair design.

use multicast_sr::algorithms::{max_min_fair_pac, max_sr_pac, max_sr_spc, rescale_to_pac};
use multicast_sr::metrics::{evaluate, max_pac_ratio, PrecodingMatrix};
use multicast_sr::model::{dbw_to_watts, gen_rayleigh, substream, uniform_groups, NoiseProfile, PacVector, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (nt, nu, g) = (4, 8, 4);
    let p_tot = dbw_to_watts(10.0);
    let cfg = RunConfig::default();
    let h = gen_rayleigh(nu, nt, &mut substream(cfg.seed, 0))?;
    let groups = uniform_groups(nu, g)?;
    let noise = NoiseProfile::uniform(nu, 1.0)?;
    let pac = PacVector::equal_split(nt, p_tot)?;
    let mut rng = substream(cfg.seed, 1 << 40);

    let (w_pac, trace) = max_sr_pac(&h, &groups, &pac, &noise, &cfg, &mut rng).map_err(|f| f.error)?;
    println!("max-SR under PACs, {} outer iterations:", trace.records.len());
    for (i, r) in trace.records.iter().enumerate() {
        println!("  {i:2}  SR {:.4}  group powers {:.3?}", r.sum_rate, r.powers);
    }
    let (w_spc, _) = max_sr_spc(&h, &groups, p_tot, &noise, &cfg, &mut rng).map_err(|f| f.error)?;
    let w_resc = rescale_to_pac(&w_spc, &pac);
    let w_fair = max_min_fair_pac(&h, &groups, &pac, &noise, &cfg, &mut rng)?;

    let show = |name: &str, w: &PrecodingMatrix| -> multicast_sr::Result<()> {
        let e = evaluate(&h, w, &groups, &noise)?;
        println!(
            "{name:<22} SR {:7.4}  group-min SINR {:.3?}  max PAC ratio {:.4}",
            e.sum_rate,
            e.group_min_sinr,
            max_pac_ratio(w, pac.limits())
        );
        Ok(())
    };
    show("max-SR (PAC)", &w_pac)?;
    show("max-SR (SPC, rescaled)", &w_resc)?;
    show("max-min fair (PAC)", &w_fair)?;
    Ok(())
}
