//! Rebuilds a distribution from event timestamps with each estimator and
//! scores it by fidelity against the exact distribution.

use memboson::analysis::{fidelity, reconstruct_from_timestamps, Estimator};
use memboson::eventstream::{generate_stream, ChannelMap, ClockModel, NoiseModel, Source, StreamConfig};
use memboson::network::{build_scattering_matrix, LayeredNetwork};
use memboson::pipeline::{extract_coincidences, satisfies_causality, CalibrationTable, ExtractParams};
use memboson::sampling::{full_distribution, OccupancyPattern, Statistics};
use memboson::RandomSeed;

fn main() -> memboson::Result<()> {
    let (layers, modes) = (2, 4);
    let net = LayeredNetwork::haar(layers, modes, 0.5, RandomSeed(40))?;
    let input = OccupancyPattern::from_modes(layers * modes, &[1, modes + 2])?;
    let exact = full_distribution(&build_scattering_matrix(&net), &input, Statistics::Indistinguishable, true)?
        .restrict(|out| satisfies_causality(&input, out, modes))?;
    let noise = NoiseModel {
        jitter_sigma_ps: 20.0,
        ..NoiseModel::default()
    };
    let stream = generate_stream(
        &net,
        Source::Patterns { input: &input, dist: &exact, fire_probability: 0.5 },
        &ClockModel::default(),
        &noise,
        &StreamConfig::new(100_000),
        RandomSeed(41),
    )?;
    let events = extract_coincidences(
        &stream.records,
        &ChannelMap::default(),
        &CalibrationTable::default(),
        &ExtractParams::new(2, layers, modes),
    )?;
    println!("{} events over {} patterns", events.len(), exact.patterns().len());

    let origin = stream.records[0].tick;
    for est in [Estimator::Counts, Estimator::MeanInterval, Estimator::FirstOccurrence] {
        let r = reconstruct_from_timestamps(&events, layers * modes, est, origin, exact.patterns())?;
        println!(
            "{est:?}: fidelity {:.4}, {} patterns never seen",
            fidelity(&r.distribution, &exact)?,
            r.excluded.len()
        );
    }
    Ok(())
}
