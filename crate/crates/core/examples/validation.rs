//! Likelihood-ratio counter: samples from the bosonic model drive it up,
//! samples from the classical model drive it down.

use memboson::analysis::likelihood_ratio_validate;
use memboson::matrix::haar_random_unitary;
use memboson::sampling::{draw_samples, full_distribution, OccupancyPattern, Statistics};
use memboson::svg::trace_plot;
use memboson::RandomSeed;

fn main() -> memboson::Result<()> {
    let u = haar_random_unitary(6, RandomSeed(110))?;
    let input: OccupancyPattern = "1-1-1-0-0-0".parse()?;
    let p = full_distribution(&u, &input, Statistics::Indistinguishable, true)?;
    let q = full_distribution(&u, &input, Statistics::Distinguishable, true)?;

    let from_p = draw_samples(&p, 300, RandomSeed(1));
    let from_q = draw_samples(&q, 300, RandomSeed(2));
    let up = likelihood_ratio_validate(&from_p, &p, &q, 0.9, 1.5)?;
    let down = likelihood_ratio_validate(&from_q, &p, &q, 0.9, 1.5)?;
    println!("bosonic samples:   counter ends at {}", up.final_value());
    println!("classical samples: counter ends at {}", down.final_value());

    let path = std::env::temp_dir().join("memboson_validation.svg");
    std::fs::write(&path, trace_plot("counter", &[("bosonic", &up.counter), ("classical", &down.counter)]))?;
    println!("plot written to {}", path.display());
    Ok(())
}
