//! Generates a small MBS1 stream with dark counts and jitter, writes it to a
//! temporary file and reads it back.

use memboson::eventstream::{
    generate_stream, read_stream, write_stream, ChannelMap, ChannelRole, ClockModel, NoiseModel, Source, StreamConfig,
    CHANNELS,
};
use memboson::network::{build_scattering_matrix, LayeredNetwork};
use memboson::sampling::{full_distribution, OccupancyPattern, Statistics};
use memboson::RandomSeed;

fn main() -> memboson::Result<()> {
    let net = LayeredNetwork::haar(2, 4, 0.5, RandomSeed(20))?;
    let input = OccupancyPattern::from_modes(8, &[0, 4])?;
    let dist = full_distribution(&build_scattering_matrix(&net), &input, Statistics::Indistinguishable, true)?;
    let map = ChannelMap::default();
    let mut noise = NoiseModel {
        jitter_sigma_ps: 25.0,
        ..NoiseModel::default()
    };
    for c in map.channels_with(ChannelRole::Signal).chain(map.channels_with(ChannelRole::Trigger)) {
        noise.dark_rate_hz[c as usize] = 1e4;
    }
    let stream = generate_stream(
        &net,
        Source::Patterns { input: &input, dist: &dist, fire_probability: 0.2 },
        &ClockModel::default(),
        &noise,
        &StreamConfig::new(10_000),
        RandomSeed(21),
    )?;
    println!("{} records, {} generated events", stream.records.len(), stream.truth.len());
    for r in &stream.records[..8] {
        println!("  ch {:2}  tick {:8}  {:10.3} ns", r.channel, r.tick, r.time_ns());
    }

    let path = std::env::temp_dir().join("memboson_example.mbs");
    write_stream(&path, &stream.records)?;
    let back = read_stream(&path)?;
    assert_eq!(back, stream.records);
    let mut per_channel = vec![0usize; CHANNELS];
    for r in &back {
        per_channel[r.channel as usize] += 1;
    }
    println!("{} bytes on disk; clicks per channel {:?}", std::fs::metadata(&path)?.len(), &per_channel[..24]);
    std::fs::remove_file(path)?;
    Ok(())
}
