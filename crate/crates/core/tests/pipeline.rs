use std::collections::HashMap;

use memboson::eventstream::{
    encode_stream, generate_drift_probes, generate_stream, ChannelMap, ClockModel, NoiseModel, Source, StreamConfig,
    PULSE_PERIOD_NS, TICK_NS,
};
use memboson::network::{build_scattering_matrix, LayeredNetwork};
use memboson::pipeline::{
    extract_coincidences, fit_drift, process_bytes_chunked, satisfies_causality, write_events_csv,
    CalibrationTable, CoincidenceEvent, ExtractParams,
};
use memboson::sampling::{full_distribution, Distribution, OccupancyPattern, Statistics};
use memboson::RandomSeed;

const LAYERS: usize = 2;
const MODES: usize = 4;

fn setup() -> (LayeredNetwork, OccupancyPattern, Distribution) {
    let net = LayeredNetwork::haar(LAYERS, MODES, 0.5, RandomSeed(7)).unwrap();
    let input = OccupancyPattern::from_modes(LAYERS * MODES, &[0, MODES]).unwrap();
    let dist = full_distribution(&build_scattering_matrix(&net), &input, Statistics::Indistinguishable, true)
        .unwrap()
        .restrict(|out| satisfies_causality(&input, out, MODES))
        .unwrap();
    (net, input, dist)
}

/// Dark counts on signal and trigger channels; reserved channels stay silent.
fn mapped_rates(hz: f64) -> Vec<f64> {
    (0..32).map(|c| if c < 24 { hz } else { 0.0 }).collect()
}

/// Fraction of extracted events that match a clean generated event, located
/// through the pulse of their last trigger.
fn precision(events: &[CoincidenceEvent], truth: &HashMap<u64, (OccupancyPattern, bool)>, start_tick: u64) -> f64 {
    let good = events
        .iter()
        .filter(|e| {
            let ns = (e.timestamp_tick - start_tick) as f64 * TICK_NS;
            let pulse = (ns / PULSE_PERIOD_NS).round() as u64;
            let last_layer = *e.trigger_layers.iter().max().unwrap() as u64;
            let Some(first) = pulse.checked_sub(last_layer - 1) else { return false };
            truth.get(&first).is_some_and(|(out, contaminated)| {
                !contaminated && *out == e.output_pattern(LAYERS * MODES).unwrap()
            })
        })
        .count();
    good as f64 / events.len() as f64
}

fn noisy_precision(dark: f64, extra: f64) -> f64 {
    let (net, input, dist) = setup();
    let map = ChannelMap::default();
    {
        let noise = NoiseModel {
            dark_rate_hz: mapped_rates(dark),
            jitter_sigma_ps: 20.0,
            extra_pair_probability: extra,
            ..NoiseModel::default()
        };
        let stream = generate_stream(
            &net,
            Source::Patterns { input: &input, dist: &dist, fire_probability: 0.5 },
            &ClockModel::default(),
            &noise,
            &StreamConfig::new(400_000),
            RandomSeed(11),
        )
        .unwrap();
        let truth: HashMap<u64, (OccupancyPattern, bool)> = stream
            .truth
            .iter()
            .map(|t| (t.first_pulse, (t.output.clone(), t.contaminated)))
            .collect();
        let events =
            extract_coincidences(&stream.records, &map, &CalibrationTable::default(), &ExtractParams::new(2, LAYERS, MODES))
                .unwrap();
        assert!(events.len() > 40_000, "only {} events", events.len());
        let clean = stream.truth.iter().filter(|t| t.complete && !t.contaminated).count();
        assert!(events.len() <= clean + clean / 20);
        precision(&events, &truth, stream.start_tick)
    }
}

#[test]
fn precision_with_dark_counts() {
    for dark in [10.0, 100.0] {
        let p = noisy_precision(dark, 0.0);
        assert!(p >= 0.99, "precision {p} at dark {dark} Hz");
    }
}

// A stray pair can open a later window that holds exactly the right number
// of clicks; such windows are indistinguishable from real events.
#[test]
fn precision_with_extra_pairs() {
    let p = noisy_precision(100.0, 0.05);
    assert!(p >= 0.98, "precision {p} with 5% extra pairs");
}

#[test]
fn replay_is_byte_identical() {
    let (net, input, dist) = setup();
    let noise = NoiseModel { dark_rate_hz: mapped_rates(1e4), jitter_sigma_ps: 30.0, ..NoiseModel::default() };
    let run = || {
        let stream = generate_stream(
            &net,
            Source::Patterns { input: &input, dist: &dist, fire_probability: 0.3 },
            &ClockModel::default(),
            &noise,
            &StreamConfig::new(50_000),
            RandomSeed(99),
        )
        .unwrap();
        let mut raw = Vec::new();
        encode_stream(&stream.records, &mut raw).unwrap();
        let params = ExtractParams::new(2, LAYERS, MODES);
        let (events, _) =
            process_bytes_chunked(&raw, &ChannelMap::default(), &CalibrationTable::default(), &params, 4, None).unwrap();
        let mut csv = Vec::new();
        write_events_csv(&events, &mut csv).unwrap();
        (raw, csv)
    };
    let (a_raw, a_csv) = run();
    let (b_raw, b_csv) = run();
    assert_eq!(a_raw, b_raw);
    assert_eq!(a_csv, b_csv);
    assert!(a_csv.len() > 1000);
}

#[test]
fn fitted_drift_recovers_long_interval_events() {
    let layers = 400;
    let modes = 2;
    let clock = ClockModel::with_published_drift();
    let noise = NoiseModel { jitter_sigma_ps: 20.0, ..NoiseModel::default() };
    let map = ChannelMap::default();
    let net = LayeredNetwork::haar(layers, modes, 0.5, RandomSeed(3)).unwrap();
    let last = (layers - 1) * modes;
    let input = OccupancyPattern::from_modes(layers * modes, &[0, last]).unwrap();
    let dist = Distribution::point_mass(input.clone());
    let stream = generate_stream(
        &net,
        Source::Patterns { input: &input, dist: &dist, fire_probability: 1.0 },
        &clock,
        &noise,
        &StreamConfig::new(100_000),
        RandomSeed(4),
    )
    .unwrap();
    assert!(stream.truth.len() >= 100);
    let params = ExtractParams::new(2, layers, modes);

    let nominal = extract_coincidences(&stream.records, &map, &CalibrationTable::default(), &params).unwrap();
    assert!(nominal.is_empty(), "{} events survived without drift correction", nominal.len());

    let probes = generate_drift_probes(&clock, &noise, 1000, 3000, 16, 0, RandomSeed(5)).unwrap();
    let fit = fit_drift(&probes.records, &map, &clock, 1000).unwrap();
    let table = CalibrationTable {
        signal_drift: fit.signal,
        trigger_drift: fit.trigger,
        ..CalibrationTable::default()
    };
    let events = extract_coincidences(&stream.records, &map, &table, &params).unwrap();
    assert_eq!(events.len(), stream.truth.len());
    for e in &events {
        assert_eq!(e.signal_globals, vec![0, last]);
        assert_eq!(e.trigger_layers, vec![1, layers]);
    }
}
