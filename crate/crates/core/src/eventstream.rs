//! Time-tagged detector records and a synthetic stream generator.
//!
//! Records are `(channel, tick)` pairs with 64 ps ticks, matching a 32-channel
//! time-of-flight module. On disk a stream is
//!
//! ```text
//! b"MBS1" | record count: u64 LE | count x (channel: u8, tick: u64 LE)
//! ```
//!
//! The generator reproduces the heralded timeline: every photon pair fires a
//! trigger on its pulse and its signal leaves the chip 5 ns later, possibly
//! several pulse periods later when it rode the loop. Pulse spacing drifts
//! linearly with the layer interval, separately for signal and trigger
//! channels.

use std::io::{BufRead, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution as _, Geometric, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::LayeredNetwork;
use crate::sampling::{Distribution, OccupancyPattern, Sampler};
use crate::RandomSeed;

pub const TICK_NS: f64 = 0.064;
pub const CHANNELS: usize = 32;
pub const MAGIC: [u8; 4] = *b"MBS1";
pub const HEADER_LEN: usize = 12;
pub const RECORD_LEN: usize = 9;
/// 5 ns signal lag rounded to whole ticks (78.125 -> 78).
pub const SIGNAL_LAG_TICKS: u64 = 78;
pub const PULSE_PERIOD_NS: f64 = 12.5;
pub const SIGNAL_LAG_NS: f64 = 5.0;

/// Time origin of generated streams, leaving room for negative channel delays.
const ORIGIN_NS: f64 = 100.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EventRecord {
    pub tick: u64,
    pub channel: u8,
}

impl EventRecord {
    pub fn new(channel: u8, tick: u64) -> Self {
        EventRecord { tick, channel }
    }

    pub fn time_ns(&self) -> f64 {
        self.tick as f64 * TICK_NS
    }
}

pub fn ns_to_ticks(ns: f64) -> i64 {
    (ns / TICK_NS).round() as i64
}

fn check_sorted(records: &[EventRecord]) -> Result<()> {
    for (i, w) in records.windows(2).enumerate() {
        if w[1].tick < w[0].tick {
            return Err(Error::UnsortedTicks {
                index: i + 1,
                previous: w[0].tick,
                tick: w[1].tick,
            });
        }
    }
    Ok(())
}

pub fn encode_stream<W: Write>(records: &[EventRecord], mut w: W) -> Result<()> {
    check_sorted(records)?;
    if let Some(r) = records.iter().find(|r| r.channel as usize >= CHANNELS) {
        return Err(Error::ChannelRange(r.channel));
    }
    w.write_all(&MAGIC)?;
    w.write_all(&(records.len() as u64).to_le_bytes())?;
    let mut buf = [0u8; RECORD_LEN];
    for r in records {
        buf[0] = r.channel;
        buf[1..].copy_from_slice(&r.tick.to_le_bytes());
        w.write_all(&buf)?;
    }
    Ok(())
}

/// Validates the header and returns the declared record count.
pub fn decode_header(bytes: &[u8]) -> Result<u64> {
    if bytes.len() < HEADER_LEN {
        if bytes.len() >= 4 && bytes[..4] != MAGIC {
            return Err(Error::BadMagic(bytes[..4].try_into().expect("4 bytes")));
        }
        return Err(Error::Truncated {
            declared: 0,
            available: 0,
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
    if magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let count = u64::from_le_bytes(bytes[4..12].try_into().expect("8 bytes"));
    let available = ((bytes.len() - HEADER_LEN) / RECORD_LEN) as u64;
    let exact = (bytes.len() - HEADER_LEN).is_multiple_of(RECORD_LEN);
    if available < count || (available == count && !exact) {
        return Err(Error::Truncated {
            declared: count,
            available,
        });
    }
    if available > count || !exact {
        return Err(Error::Parse {
            line: 0,
            message: format!(
                "{} trailing bytes after {count} declared records",
                bytes.len() - HEADER_LEN - count as usize * RECORD_LEN
            ),
        });
    }
    Ok(count)
}

/// Decodes records `range` of an already validated stream image.
pub fn decode_records(bytes: &[u8], range: std::ops::Range<usize>) -> Result<Vec<EventRecord>> {
    let mut out = Vec::with_capacity(range.len());
    for i in range {
        let at = HEADER_LEN + i * RECORD_LEN;
        let rec = &bytes[at..at + RECORD_LEN];
        if rec[0] as usize >= CHANNELS {
            return Err(Error::ChannelRange(rec[0]));
        }
        out.push(EventRecord {
            channel: rec[0],
            tick: u64::from_le_bytes(rec[1..].try_into().expect("8 bytes")),
        });
    }
    Ok(out)
}

pub fn decode_stream(bytes: &[u8]) -> Result<Vec<EventRecord>> {
    let count = decode_header(bytes)? as usize;
    let records = decode_records(bytes, 0..count)?;
    check_sorted(&records)?;
    Ok(records)
}

pub fn write_stream(path: impl AsRef<Path>, records: &[EventRecord]) -> Result<()> {
    let mut w = std::io::BufWriter::new(crate::error::create_file(path)?);
    encode_stream(records, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_stream(path: impl AsRef<Path>) -> Result<Vec<EventRecord>> {
    let mut bytes = Vec::new();
    crate::error::open_file(path)?.read_to_end(&mut bytes)?;
    decode_stream(&bytes)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelRole {
    Signal,
    Trigger,
    Reserved,
}

impl FromStr for ChannelRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "signal" => Ok(ChannelRole::Signal),
            "trigger" => Ok(ChannelRole::Trigger),
            "reserved" => Ok(ChannelRole::Reserved),
            _ => Err(Error::Config(format!("unknown channel role {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelInfo {
    pub role: ChannelRole,
    pub layer_capable: bool,
    /// Chip output mode (signals) or chip input mode (triggers).
    pub mode: usize,
}

/// Which detector channel carries which chip port.
///
/// Chip modes are assigned in channel order within each role, so with the
/// default wiring channels 0-15 are chip outputs 0-15 and channels 16-23
/// herald chip inputs 0-7.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelMap {
    channels: Vec<ChannelInfo>,
}

impl Default for ChannelMap {
    fn default() -> Self {
        let roles = (0..CHANNELS as u8).map(|c| match c {
            0..=15 => (c, ChannelRole::Signal, true),
            16..=23 => (c, ChannelRole::Trigger, true),
            _ => (c, ChannelRole::Reserved, false),
        });
        Self::from_roles(roles)
    }
}

impl ChannelMap {
    fn from_roles(entries: impl IntoIterator<Item = (u8, ChannelRole, bool)>) -> Self {
        let mut channels = vec![
            ChannelInfo {
                role: ChannelRole::Reserved,
                layer_capable: false,
                mode: 0,
            };
            CHANNELS
        ];
        for (c, role, layer_capable) in entries {
            channels[c as usize] = ChannelInfo {
                role,
                layer_capable,
                mode: 0,
            };
        }
        let (mut sig, mut trig) = (0, 0);
        for info in channels.iter_mut() {
            match info.role {
                ChannelRole::Signal => {
                    info.mode = sig;
                    sig += 1;
                }
                ChannelRole::Trigger => {
                    info.mode = trig;
                    trig += 1;
                }
                ChannelRole::Reserved => {}
            }
        }
        ChannelMap { channels }
    }

    /// Parses `channel role layer-capable` lines; `#` starts a comment.
    /// Channels that are not listed are reserved.
    pub fn parse<R: BufRead>(r: R) -> Result<Self> {
        let mut entries = Vec::new();
        let mut seen = [false; CHANNELS];
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse { line: i + 1, message };
            let toks: Vec<&str> = line.split_whitespace().collect();
            let [ch, role, capable] = toks[..] else {
                return Err(err(format!("expected `channel role layer-capable`, got {line:?}")));
            };
            let ch: u8 = ch.parse().map_err(|e| err(format!("bad channel {ch:?}: {e}")))?;
            if ch as usize >= CHANNELS {
                return Err(Error::ChannelRange(ch));
            }
            if std::mem::replace(&mut seen[ch as usize], true) {
                return Err(err(format!("channel {ch} listed twice")));
            }
            let capable = match capable.to_ascii_lowercase().as_str() {
                "yes" | "true" | "1" => true,
                "no" | "false" | "0" => false,
                other => return Err(err(format!("bad layer-capable flag {other:?}"))),
            };
            entries.push((ch, role.parse()?, capable));
        }
        Ok(Self::from_roles(entries))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(std::io::BufReader::new(crate::error::open_file(path)?))
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        for (c, info) in self.channels.iter().enumerate() {
            let role = match info.role {
                ChannelRole::Signal => "signal",
                ChannelRole::Trigger => "trigger",
                ChannelRole::Reserved => "reserved",
            };
            writeln!(w, "{c} {role} {}", if info.layer_capable { "yes" } else { "no" })?;
        }
        Ok(())
    }

    pub fn info(&self, channel: u8) -> ChannelInfo {
        self.channels[channel as usize]
    }

    pub fn role(&self, channel: u8) -> ChannelRole {
        self.channels[channel as usize].role
    }

    fn channel_for(&self, role: ChannelRole, mode: usize) -> Option<u8> {
        self.channels
            .iter()
            .position(|i| i.role == role && i.mode == mode)
            .map(|c| c as u8)
    }

    pub fn signal_channel(&self, chip_output: usize) -> Option<u8> {
        self.channel_for(ChannelRole::Signal, chip_output)
    }

    pub fn trigger_channel(&self, chip_input: usize) -> Option<u8> {
        self.channel_for(ChannelRole::Trigger, chip_input)
    }

    pub fn channels_with(&self, role: ChannelRole) -> impl Iterator<Item = u8> + '_ {
        (0..CHANNELS as u8).filter(move |&c| self.role(c) == role)
    }
}

/// Deviation of the real pulse spacing from nominal after `L` layer intervals:
/// `slope * L + intercept` for `L >= 1`, zero at `L = 0`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LinearDrift {
    pub slope_ns: f64,
    pub intercept_ns: f64,
}

impl LinearDrift {
    pub const SIGNAL_PUBLISHED: LinearDrift = LinearDrift {
        slope_ns: 0.008744,
        intercept_ns: -0.2105,
    };
    pub const TRIGGER_PUBLISHED: LinearDrift = LinearDrift {
        slope_ns: 0.008358,
        intercept_ns: -0.2764,
    };

    pub fn at(&self, layer_interval: u64) -> f64 {
        if layer_interval == 0 {
            0.0
        } else {
            self.slope_ns * layer_interval as f64 + self.intercept_ns
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClockModel {
    pub pulse_period_ns: f64,
    pub signal_lag_ns: f64,
    pub signal_drift: LinearDrift,
    pub trigger_drift: LinearDrift,
}

impl Default for ClockModel {
    fn default() -> Self {
        ClockModel {
            pulse_period_ns: PULSE_PERIOD_NS,
            signal_lag_ns: SIGNAL_LAG_NS,
            signal_drift: LinearDrift::default(),
            trigger_drift: LinearDrift::default(),
        }
    }
}

impl ClockModel {
    /// Nominal 80 MHz clock with the published signal/trigger drift fits.
    pub fn with_published_drift() -> Self {
        ClockModel {
            signal_drift: LinearDrift::SIGNAL_PUBLISHED,
            trigger_drift: LinearDrift::TRIGGER_PUBLISHED,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.pulse_period_ns,
            self.signal_lag_ns,
            self.signal_drift.slope_ns,
            self.signal_drift.intercept_ns,
            self.trigger_drift.slope_ns,
            self.trigger_drift.intercept_ns,
        ]
        .iter()
        .all(|x| x.is_finite());
        if !finite || self.pulse_period_ns <= 0.0 {
            return Err(Error::InvalidArgument(format!("invalid clock model {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub dark_rate_hz: Vec<f64>,
    pub efficiency: Vec<f64>,
    pub jitter_sigma_ps: f64,
    /// Electronic delay added to every record of a channel.
    pub delay_ns: Vec<f64>,
    /// Probability that an event carries one extra photon pair.
    pub extra_pair_probability: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            dark_rate_hz: vec![0.0; CHANNELS],
            efficiency: vec![1.0; CHANNELS],
            jitter_sigma_ps: 0.0,
            delay_ns: vec![0.0; CHANNELS],
            extra_pair_probability: 0.0,
        }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        let sized = [&self.dark_rate_hz, &self.efficiency, &self.delay_ns]
            .iter()
            .all(|v| v.len() == CHANNELS);
        if !sized {
            return Err(Error::InvalidArgument("noise model needs 32 entries per channel table".into()));
        }
        if self.dark_rate_hz.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::InvalidArgument("dark rates must be finite and >= 0".into()));
        }
        if self.efficiency.iter().any(|e| !(*e > 0.0 && *e <= 1.0)) {
            return Err(Error::InvalidArgument("efficiencies must lie in (0, 1]".into()));
        }
        if !(self.jitter_sigma_ps.is_finite() && self.jitter_sigma_ps >= 0.0)
            || self.delay_ns.iter().any(|d| !d.is_finite())
            || !(0.0..=1.0).contains(&self.extra_pair_probability)
        {
            return Err(Error::InvalidArgument("invalid jitter, delay or extra-pair setting".into()));
        }
        Ok(())
    }
}

/// What feeds the chip.
#[derive(Clone, Copy, Debug)]
pub enum Source<'a> {
    /// Heralded multi-photon events: each event injects `input` and draws its
    /// output pattern from `dist`. Events start on a pulse with probability
    /// `fire_probability` once the previous event has cleared.
    Patterns {
        input: &'a OccupancyPattern,
        dist: &'a Distribution,
        fire_probability: f64,
    },
    /// Independent heralded pairs: every listed chip input emits a pair on a
    /// pulse with probability `pair_probability`. Each signal takes
    /// `L >= 0` loop round trips with probability `(1 - p^2) p^(2L)` and exits
    /// from a chip output drawn from the squared moduli of its block row.
    Pairs {
        input_modes: &'a [usize],
        pair_probability: f64,
    },
}

#[derive(Clone, Debug)]
pub struct StreamConfig {
    pub duration_pulses: u64,
    /// Minimum pulse distance between consecutive event starts;
    /// `None` means twice the layer count.
    pub min_spacing_pulses: Option<u64>,
    pub channel_map: ChannelMap,
}

impl StreamConfig {
    pub fn new(duration_pulses: u64) -> Self {
        StreamConfig {
            duration_pulses,
            min_spacing_pulses: None,
            channel_map: ChannelMap::default(),
        }
    }
}

/// Ground truth for one generated multi-photon event.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TruthEvent {
    pub first_pulse: u64,
    pub input: OccupancyPattern,
    pub output: OccupancyPattern,
    /// Every herald and every signal click survived detection.
    pub complete: bool,
    /// An extra photon pair was added on top of the event.
    pub contaminated: bool,
}

#[derive(Clone, Debug)]
pub struct GeneratedStream {
    pub records: Vec<EventRecord>,
    pub truth: Vec<TruthEvent>,
    /// Tick of pulse 0 and of the pulse just past the run.
    pub start_tick: u64,
    pub end_tick: u64,
}

struct Emitter<'a> {
    clock: &'a ClockModel,
    noise: &'a NoiseModel,
    jitter: Option<Normal<f64>>,
    records: Vec<EventRecord>,
}

impl Emitter<'_> {
    fn pulse_tick(&self, pulse: u64) -> i64 {
        ns_to_ticks(ORIGIN_NS + pulse as f64 * self.clock.pulse_period_ns)
    }

    /// Emits one click `rel_ns` after the nominal time of `base_pulse`.
    /// Returns whether the detector registered it.
    fn click<R: Rng>(&mut self, rng: &mut R, channel: u8, base_pulse: u64, rel_ns: f64) -> bool {
        let c = channel as usize;
        if self.noise.efficiency[c] < 1.0 && rng.random::<f64>() >= self.noise.efficiency[c] {
            return false;
        }
        let jitter = self.jitter.map_or(0.0, |j| j.sample(rng));
        let tick = self.pulse_tick(base_pulse) + ns_to_ticks(rel_ns + self.noise.delay_ns[c] + jitter);
        self.records.push(EventRecord::new(channel, tick.max(0) as u64));
        true
    }

    fn trigger_offset(&self, interval: u64) -> f64 {
        interval as f64 * self.clock.pulse_period_ns + self.clock.trigger_drift.at(interval)
    }

    fn signal_offset(&self, interval: u64) -> f64 {
        interval as f64 * self.clock.pulse_period_ns + self.clock.signal_lag_ns + self.clock.signal_drift.at(interval)
    }
}

fn missing_channel(role: &str, mode: usize) -> Error {
    Error::Config(format!("channel map has no {role} channel for chip mode {mode}"))
}

/// Generates a synthetic detector stream; deterministic per seed.
pub fn generate_stream(
    net: &LayeredNetwork,
    source: Source<'_>,
    clock: &ClockModel,
    noise: &NoiseModel,
    config: &StreamConfig,
    seed: RandomSeed,
) -> Result<GeneratedStream> {
    clock.validate()?;
    noise.validate()?;
    let mut rng = seed.rng();
    let jitter = (noise.jitter_sigma_ps > 0.0)
        .then(|| Normal::new(0.0, noise.jitter_sigma_ps * 1e-3).expect("positive sigma"));
    let mut em = Emitter {
        clock,
        noise,
        jitter,
        records: Vec::new(),
    };
    let map = &config.channel_map;
    let (m, layers) = (net.modes(), net.layers());
    let mut truth = Vec::new();

    match source {
        Source::Patterns {
            input,
            dist,
            fire_probability,
        } => {
            if input.len() != layers * m || dist.patterns().iter().any(|p| p.len() != layers * m) {
                return Err(Error::InvalidPattern(format!(
                    "patterns must span {} global modes",
                    layers * m
                )));
            }
            if !(fire_probability > 0.0 && fire_probability <= 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "fire probability must lie in (0, 1], got {fire_probability}"
                )));
            }
            let in_modes = input.modes();
            let first_layer = in_modes
                .first()
                .map(|g| g / m)
                .ok_or_else(|| Error::InvalidPattern("input carries no photons".into()))?;
            for &g in &in_modes {
                map.trigger_channel(g % m).ok_or_else(|| missing_channel("trigger", g % m))?;
            }
            for p in dist.patterns() {
                for g in p.modes() {
                    map.signal_channel(g % m).ok_or_else(|| missing_channel("signal", g % m))?;
                }
            }
            let spacing = config.min_spacing_pulses.unwrap_or(2 * layers as u64).max(1);
            let wait = Geometric::new(fire_probability).expect("valid probability");
            let sampler = Sampler::new(dist);
            let extra = noise.extra_pair_probability;
            let mut pulse = 0u64;
            loop {
                pulse += wait.sample(&mut rng);
                if pulse + layers as u64 > config.duration_pulses {
                    break;
                }
                let output = dist.patterns()[sampler.sample_index(&mut rng)].clone();
                let base = pulse + first_layer as u64;
                let mut complete = true;
                // threshold detectors: one click per occupied mode
                let mut trig_modes = in_modes.clone();
                trig_modes.dedup();
                for g in trig_modes {
                    let ch = map.trigger_channel(g % m).expect("checked above");
                    let interval = (g / m - first_layer) as u64;
                    complete &= em.click(&mut rng, ch, base, em.trigger_offset(interval));
                }
                let mut out_modes = output.modes();
                out_modes.dedup();
                for g in out_modes {
                    let ch = map.signal_channel(g % m).expect("checked above");
                    let layer = g / m;
                    let rel = if layer >= first_layer {
                        em.signal_offset((layer - first_layer) as u64)
                    } else {
                        clock.signal_lag_ns - ((first_layer - layer) as f64) * clock.pulse_period_ns
                    };
                    complete &= em.click(&mut rng, ch, base, rel);
                }
                let contaminated = extra > 0.0 && rng.random::<f64>() < extra;
                if contaminated {
                    let layer = rng.random_range(first_layer..layers);
                    let interval = (layer - first_layer) as u64;
                    let t = map.trigger_channel(rng.random_range(0..m)).unwrap_or(map.trigger_channel(0).expect("a trigger channel"));
                    let s = map.signal_channel(rng.random_range(0..m)).expect("checked above");
                    em.click(&mut rng, t, base, em.trigger_offset(interval));
                    em.click(&mut rng, s, base, em.signal_offset(interval));
                }
                truth.push(TruthEvent {
                    first_pulse: pulse,
                    input: input.clone(),
                    output,
                    complete,
                    contaminated,
                });
                pulse += spacing;
            }
        }
        Source::Pairs {
            input_modes,
            pair_probability,
        } => {
            if !(0.0..=1.0).contains(&pair_probability) {
                return Err(Error::InvalidArgument(format!(
                    "pair probability must lie in [0, 1], got {pair_probability}"
                )));
            }
            let p2 = net.transition() * net.transition();
            let loops = (p2 > 0.0).then(|| Geometric::new(1.0 - p2).expect("p < 1"));
            // per (layer block, input mode) cumulative output weights
            let rows: Vec<Vec<Sampler>> = net
                .blocks()
                .iter()
                .map(|b| {
                    (0..m)
                        .map(|k| {
                            let w: Vec<f64> = b.row(k).iter().map(|z| z.norm_sqr()).collect();
                            let pats = (0..m).map(|t| OccupancyPattern::new(vec![t as u32])).collect();
                            Sampler::new(&Distribution::from_weights(pats, w).expect("unitary row"))
                        })
                        .collect()
                })
                .collect();
            for &k in input_modes {
                if k >= m {
                    return Err(Error::InvalidArgument(format!("input mode {k} outside 0..{m}")));
                }
                map.trigger_channel(k).ok_or_else(|| missing_channel("trigger", k))?;
            }
            for t in 0..m {
                map.signal_channel(t).ok_or_else(|| missing_channel("signal", t))?;
            }
            if pair_probability > 0.0 {
                let wait = Geometric::new(pair_probability).expect("valid probability");
                for &k in input_modes {
                    let trig = map.trigger_channel(k).expect("checked above");
                    let mut pulse = wait.sample(&mut rng);
                    while pulse < config.duration_pulses {
                        em.click(&mut rng, trig, pulse, 0.0);
                        let l = loops.map_or(0, |g| g.sample(&mut rng));
                        let block = ((pulse + l) % layers as u64) as usize;
                        let t = rows[block][k].sample_index(&mut rng);
                        let ch = map.signal_channel(t).expect("checked above");
                        em.click(&mut rng, ch, pulse, em.signal_offset(l));
                        pulse += 1 + wait.sample(&mut rng);
                    }
                }
            }
        }
    }

    let start_tick = em.pulse_tick(0).max(0) as u64;
    let end_tick = em.pulse_tick(config.duration_pulses).max(0) as u64;
    add_dark_counts(&mut em.records, noise, start_tick, end_tick, &mut rng);
    em.records.sort_unstable();
    Ok(GeneratedStream {
        records: em.records,
        truth,
        start_tick,
        end_tick,
    })
}

fn add_dark_counts<R: Rng>(records: &mut Vec<EventRecord>, noise: &NoiseModel, start: u64, end: u64, rng: &mut R) {
    let span_s = (end - start) as f64 * TICK_NS * 1e-9;
    for (c, &rate) in noise.dark_rate_hz.iter().enumerate() {
        let mean = rate * span_s;
        if mean <= 0.0 || end <= start {
            continue;
        }
        let n = Poisson::new(mean).expect("positive mean").sample(rng) as u64;
        for _ in 0..n {
            records.push(EventRecord::new(c as u8, rng.random_range(start..end)));
        }
    }
}

/// Isolated pairs of clicks `L` layer intervals apart on one trigger and one
/// signal channel, `L` uniform in `1..=max_interval`. Used to measure drift.
pub fn generate_drift_probes(
    clock: &ClockModel,
    noise: &NoiseModel,
    max_interval: u64,
    probes: usize,
    trigger_channel: u8,
    signal_channel: u8,
    seed: RandomSeed,
) -> Result<GeneratedStream> {
    clock.validate()?;
    noise.validate()?;
    if max_interval == 0 {
        return Err(Error::InvalidArgument("max interval must be >= 1".into()));
    }
    let mut rng = seed.rng();
    let jitter = (noise.jitter_sigma_ps > 0.0)
        .then(|| Normal::new(0.0, noise.jitter_sigma_ps * 1e-3).expect("positive sigma"));
    let mut em = Emitter {
        clock,
        noise,
        jitter,
        records: Vec::new(),
    };
    let spacing = 2 * (max_interval + 2);
    let mut pulse = 0u64;
    for _ in 0..probes {
        let l = rng.random_range(1..=max_interval);
        em.click(&mut rng, trigger_channel, pulse, 0.0);
        em.click(&mut rng, signal_channel, pulse, clock.signal_lag_ns);
        em.click(&mut rng, trigger_channel, pulse, em.trigger_offset(l));
        em.click(&mut rng, signal_channel, pulse, em.signal_offset(l));
        pulse += spacing;
    }
    let start_tick = em.pulse_tick(0).max(0) as u64;
    let end_tick = em.pulse_tick(pulse).max(0) as u64;
    add_dark_counts(&mut em.records, noise, start_tick, end_tick, &mut rng);
    em.records.sort_unstable();
    Ok(GeneratedStream {
        records: em.records,
        truth: Vec::new(),
        start_tick,
        end_tick,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::ComplexMatrix;

    fn encode(records: &[EventRecord]) -> Vec<u8> {
        let mut buf = Vec::new();
        encode_stream(records, &mut buf).unwrap();
        buf
    }

    #[test]
    fn empty_stream_is_twelve_bytes() {
        let buf = encode(&[]);
        assert_eq!(buf.len(), 12);
        assert_eq!(&buf[..4], b"MBS1");
        assert!(decode_stream(&buf).unwrap().is_empty());
    }

    #[test]
    fn single_record_layout() {
        let buf = encode(&[EventRecord::new(3, 195)]);
        assert_eq!(buf.len(), 21);
        assert_eq!(&buf[4..12], &1u64.to_le_bytes());
        assert_eq!(buf[12], 3);
        assert_eq!(&buf[13..], &195u64.to_le_bytes());
        assert_eq!(decode_stream(&buf).unwrap(), vec![EventRecord::new(3, 195)]);
    }

    #[test]
    fn parse_errors_are_distinct() {
        let mut bad = encode(&[EventRecord::new(1, 5)]);
        bad[0] = b'X';
        assert!(matches!(decode_stream(&bad), Err(Error::BadMagic(_))));

        let good = encode(&[EventRecord::new(1, 5), EventRecord::new(2, 9)]);
        assert!(matches!(decode_stream(&good[..good.len() - 3]), Err(Error::Truncated { .. })));
        assert!(matches!(decode_stream(&good[..8]), Err(Error::Truncated { .. })));

        let mut unsorted = good.clone();
        unsorted[13..21].copy_from_slice(&50u64.to_le_bytes());
        assert!(matches!(decode_stream(&unsorted), Err(Error::UnsortedTicks { index: 1, .. })));

        let mut chan = good;
        chan[12] = 40;
        assert!(matches!(decode_stream(&chan), Err(Error::ChannelRange(40))));

        let r = encode_stream(&[EventRecord::new(0, 9), EventRecord::new(0, 2)], Vec::new());
        assert!(matches!(r, Err(Error::UnsortedTicks { .. })));
    }

    #[test]
    fn channel_map_default_and_parse() {
        let d = ChannelMap::default();
        assert_eq!(d.signal_channel(3), Some(3));
        assert_eq!(d.trigger_channel(0), Some(16));
        assert_eq!(d.trigger_channel(8), None);
        assert_eq!(d.role(30), ChannelRole::Reserved);

        let text = "# custom wiring\n5 signal yes\n2 signal no\n9 trigger yes\n";
        let m = ChannelMap::parse(text.as_bytes()).unwrap();
        assert_eq!(m.signal_channel(0), Some(2));
        assert_eq!(m.signal_channel(1), Some(5));
        assert_eq!(m.trigger_channel(0), Some(9));
        assert!(!m.info(2).layer_capable);
        assert_eq!(m.role(0), ChannelRole::Reserved);

        assert!(ChannelMap::parse("40 signal yes".as_bytes()).is_err());
        assert!(ChannelMap::parse("1 photon yes".as_bytes()).is_err());
        assert!(ChannelMap::parse("1 signal maybe".as_bytes()).is_err());
        assert!(ChannelMap::parse("1 signal yes\n1 trigger yes".as_bytes()).is_err());

        let mut buf = Vec::new();
        d.write(&mut buf).unwrap();
        assert_eq!(ChannelMap::parse(&buf[..]).unwrap(), d);
    }

    #[test]
    fn published_drift_at_seven_hundred() {
        let dt = LinearDrift::SIGNAL_PUBLISHED.at(700);
        assert!((dt - 5.91).abs() < 0.01, "{dt}");
        assert_eq!(LinearDrift::SIGNAL_PUBLISHED.at(0), 0.0);
    }

    fn one_layer(m: usize) -> LayeredNetwork {
        LayeredNetwork::new(vec![ComplexMatrix::identity(m)], 0.0, 0).unwrap()
    }

    #[test]
    fn clean_signal_trails_trigger_by_78_ticks() {
        let net = one_layer(2);
        let input: OccupancyPattern = "1-0".parse().unwrap();
        let dist = Distribution::point_mass(input.clone());
        let src = Source::Patterns {
            input: &input,
            dist: &dist,
            fire_probability: 0.3,
        };
        let s = generate_stream(&net, src, &ClockModel::default(), &NoiseModel::default(), &StreamConfig::new(10_000), RandomSeed(1)).unwrap();
        assert!(s.truth.len() > 1000);
        assert_eq!(s.records.len(), 2 * s.truth.len());
        for pair in s.records.chunks(2) {
            assert_eq!(pair[0].channel, 16);
            assert_eq!(pair[1].channel, 0);
            assert_eq!(pair[1].tick - pair[0].tick, SIGNAL_LAG_TICKS);
        }
    }

    #[test]
    fn detection_efficiency_thins_signals() {
        let net = one_layer(2);
        let input: OccupancyPattern = "1-0".parse().unwrap();
        let dist = Distribution::uniform(vec!["1-0".parse().unwrap(), "0-1".parse().unwrap()]).unwrap();
        let mut noise = NoiseModel::default();
        for c in 0..16 {
            noise.efficiency[c] = 0.5;
        }
        let cfg = StreamConfig {
            min_spacing_pulses: Some(1),
            ..StreamConfig::new(100_000)
        };
        let src = Source::Patterns {
            input: &input,
            dist: &dist,
            fire_probability: 1.0,
        };
        let s = generate_stream(&net, src, &ClockModel::default(), &noise, &cfg, RandomSeed(2)).unwrap();
        let trig = s.records.iter().filter(|r| r.channel == 16).count();
        let sig = s.records.iter().filter(|r| r.channel < 16).count();
        assert_eq!(trig, 100_000);
        let ratio = sig as f64 / trig as f64;
        assert!((ratio - 0.5).abs() < 0.02, "{ratio}");
    }

    #[test]
    fn generation_is_deterministic_and_sorted() {
        let net = LayeredNetwork::haar(2, 3, 0.5, RandomSeed(3)).unwrap();
        let noise = NoiseModel {
            jitter_sigma_ps: 50.0,
            dark_rate_hz: vec![1e4; CHANNELS],
            ..NoiseModel::default()
        };
        let modes = [0usize, 1];
        let src = Source::Pairs {
            input_modes: &modes,
            pair_probability: 0.01,
        };
        let cfg = StreamConfig::new(200_000);
        let a = generate_stream(&net, src, &ClockModel::with_published_drift(), &noise, &cfg, RandomSeed(4)).unwrap();
        let b = generate_stream(&net, src, &ClockModel::with_published_drift(), &noise, &cfg, RandomSeed(4)).unwrap();
        assert_eq!(a.records, b.records);
        assert!(a.records.windows(2).all(|w| w[0].tick <= w[1].tick));
        let trig = a.records.iter().filter(|r| r.channel == 16 || r.channel == 17).count();
        // 2 inputs x 200k pulses x 1% plus a handful of dark counts
        assert!((3_600..4_400).contains(&trig), "{trig}");
    }

    #[test]
    fn stream_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.mbs");
        let records: Vec<_> = (0..1000u64).map(|i| EventRecord::new((i % 32) as u8, i * 7)).collect();
        write_stream(&path, &records).unwrap();
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 12 + 9 * 1000);
        assert_eq!(read_stream(&path).unwrap(), records);
    }

    #[test]
    fn rejects_bad_models() {
        let mut n = NoiseModel::default();
        n.efficiency[3] = 0.0;
        assert!(n.validate().is_err());
        let c = ClockModel {
            pulse_period_ns: 0.0,
            ..ClockModel::default()
        };
        assert!(c.validate().is_err());
    }
}
