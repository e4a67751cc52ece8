//! Projected sub-gradient power reallocation with the beam directions held
//! fixed. Each line is one step; the sum rate climbs while every antenna
//! stays within its limit.

use multicast_sr::metrics::{max_pac_ratio, sum_rate, PrecodingMatrix};
use multicast_sr::model::{gen_rayleigh, substream, uniform_groups, NoiseProfile, PacVector, C64};
use multicast_sr::power::{decouple, recompose, step_with, Metric, PacPolyhedron};
use nalgebra::DMatrix;

fn main() -> multicast_sr::Result<()> {
    let (nt, nu, g) = (4, 8, 4);
    let mut rng = substream(3, 0);
    let h = gen_rayleigh(nu, nt, &mut rng)?;
    let groups = uniform_groups(nu, g)?;
    let noise = NoiseProfile::uniform(nu, 1.0)?;
    let pac = PacVector::equal_split(nt, 10.0)?;

    // Matched-filter directions for the first user of each group, equal powers.
    let w = DMatrix::from_fn(nt, g, |n, k| h.entries()[(groups.members(k)[0], n)].conj() * C64::new(0.3, 0.0));
    let floor = 1e-10 * pac.total();
    let mut state = decouple(&PrecodingMatrix::new(w)?, floor)?;
    let poly = PacPolyhedron::for_state(&state, &pac)?;
    for it in 0..15 {
        let w = recompose(&state);
        println!(
            "{it:2}  SR {:.4}  powers {:.3?}  max PAC ratio {:.4}",
            sum_rate(&h, &w, &groups, &noise)?,
            state.powers(),
            max_pac_ratio(&w, pac.limits())
        );
        state = step_with(&state, &h, &groups, &noise, &poly, 0.4, floor, Metric::Relative)?;
    }
    Ok(())
}
