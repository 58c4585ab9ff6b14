//! Exact output statistics: the two-photon HOM dip on a balanced coupler,
//! bosonic versus classical statistics on a small looped network, and
//! scattershot input draws.

use memboson::network::{build_scattering_matrix, LayeredNetwork};
use memboson::sampling::{
    draw_samples, full_distribution, scattershot_inputs, Distribution, OccupancyPattern, Statistics,
};
use memboson::{ComplexMatrix, RandomSeed, C64};

fn main() -> memboson::Result<()> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let bs = ComplexMatrix::new(2, 2, vec![C64::new(h, 0.0), C64::new(h, 0.0), C64::new(h, 0.0), C64::new(-h, 0.0)])?;
    let input: OccupancyPattern = "1-1".parse()?;
    for stats in [Statistics::Indistinguishable, Statistics::Distinguishable] {
        let d = full_distribution(&bs, &input, stats, false)?;
        let line: Vec<String> = d.iter().map(|(p, q)| format!("{p}:{q:.3}")).collect();
        println!("{stats:?}: {}", line.join(" "));
    }

    let net = LayeredNetwork::haar(2, 3, 0.5, RandomSeed(9))?;
    let u = build_scattering_matrix(&net);
    let input = OccupancyPattern::from_modes(6, &[0, 3])?;
    let ind = full_distribution(&u, &input, Statistics::Indistinguishable, true)?;
    let dis = full_distribution(&u, &input, Statistics::Distinguishable, true)?;
    println!("TV(indistinguishable, distinguishable) = {:.4}", ind.total_variation(&dis));

    let samples = draw_samples(&ind, 5000, RandomSeed(10));
    let emp = Distribution::empirical(&samples)?;
    println!("TV(exact, 5000 samples) = {:.4}", ind.total_variation(&emp));

    // draws where both heralds fire
    let inputs = scattershot_inputs(4, 3, 2, 0.8, 200, RandomSeed(11))?;
    println!("{} of 200 scattershot draws kept", inputs.len());
    for s in inputs.iter().take(4) {
        println!("  {s}");
    }
    Ok(())
}
