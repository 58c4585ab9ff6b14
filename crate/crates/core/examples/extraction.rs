//! Delay calibration, drift fitting and multi-layer coincidence extraction
//! on synthetic data, checked against the generator's ground truth.

use memboson::eventstream::{
    encode_stream, generate_drift_probes, generate_stream, ChannelMap, ClockModel, NoiseModel, Source, StreamConfig,
};
use memboson::network::{build_scattering_matrix, LayeredNetwork};
use memboson::pipeline::{
    calibrate_delays, extract_coincidences, fit_drift, process_bytes_chunked, satisfies_causality, ExtractParams,
};
use memboson::sampling::{full_distribution, Distribution, OccupancyPattern, Statistics};
use memboson::RandomSeed;

fn main() -> memboson::Result<()> {
    let (layers, modes) = (3, 4);
    let map = ChannelMap::default();
    let clock = ClockModel::with_published_drift();
    let mut noise = NoiseModel {
        jitter_sigma_ps: 20.0,
        ..NoiseModel::default()
    };
    noise.delay_ns[2] = 4.0;
    noise.delay_ns[17] = -1.5;

    let cal_net = LayeredNetwork::haar(1, modes, 0.0, RandomSeed(30))?;
    let all: OccupancyPattern = "1-1-1-1".parse()?;
    let cal = generate_stream(
        &cal_net,
        Source::Patterns { input: &all, dist: &Distribution::point_mass(all.clone()), fire_probability: 0.5 },
        &clock,
        &noise,
        &StreamConfig::new(20_000),
        RandomSeed(31),
    )?;
    let mut table = calibrate_delays(&cal.records, &map, &clock, 16)?;
    println!("offsets: ch2 {} ns, ch17 {} ns", table.offsets_ns[2], table.offsets_ns[17]);

    let probes = generate_drift_probes(&clock, &noise, 1000, 2000, 16, 0, RandomSeed(32))?;
    let fit = fit_drift(&probes.records, &map, &clock, 1000)?;
    table.signal_drift = fit.signal;
    table.trigger_drift = fit.trigger;
    println!("signal drift {:?}", fit.signal);
    println!("trigger drift {:?}", fit.trigger);

    let net = LayeredNetwork::haar(layers, modes, 0.5, RandomSeed(33))?;
    let input = OccupancyPattern::from_modes(layers * modes, &[0, modes, 2 * modes + 1])?;
    let dist = full_distribution(&build_scattering_matrix(&net), &input, Statistics::Indistinguishable, true)?
        .restrict(|out| satisfies_causality(&input, out, modes))?;
    let stream = generate_stream(
        &net,
        Source::Patterns { input: &input, dist: &dist, fire_probability: 0.5 },
        &clock,
        &noise,
        &StreamConfig::new(30_000),
        RandomSeed(34),
    )?;
    let params = ExtractParams::new(3, layers, modes);
    let events = extract_coincidences(&stream.records, &map, &table, &params)?;
    let hits = events
        .iter()
        .zip(&stream.truth)
        .filter(|(e, t)| e.output_pattern(layers * modes).ok().as_ref() == Some(&t.output))
        .count();
    println!("{} events extracted, {} generated, {hits} matching", events.len(), stream.truth.len());

    let mut bytes = Vec::new();
    encode_stream(&stream.records, &mut bytes)?;
    let (chunked, stats) = process_bytes_chunked(&bytes, &map, &table, &params, 4, None)?;
    assert_eq!(chunked, events);
    println!("chunked pass: {stats:?}");
    if let Some(e) = events.first() {
        println!("first event: triggers at layers {:?}, signals {:?}", e.trigger_layers, e.signal_globals);
    }
    Ok(())
}
