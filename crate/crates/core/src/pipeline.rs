//! Calibration and multi-layer coincidence extraction.
//!
//! The extraction works on calibrated times `t + offset(channel)`. Every
//! trigger opens a candidate event at its corrected time `t0` and gathers
//! all records in `[t0, t0 + gather]`. A candidate becomes an event when
//!
//! 1. the gather window holds exactly the required number of triggers and
//!    exactly `fold` signals (anything more is suspicious),
//! 2. after assigning each record to its nearest section `k` (expected
//!    offset `k * shift + dt(k)`, plus the 5 ns lag for signals) all residuals
//!    fit inside one closed coincidence window,
//! 3. every section prefix carries at least as many triggers as signals, and
//! 4. no channel fires twice in the same section.
//!
//! Surviving records are renumbered to global modes `section * m + chip mode`.

use std::collections::BTreeMap;
use std::io::{BufRead, Read, Write};
use std::ops::Range;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eventstream::{
    decode_header, decode_records, ChannelMap, ChannelRole, ClockModel, EventRecord, LinearDrift, CHANNELS,
    HEADER_LEN, RECORD_LEN, TICK_NS,
};
use crate::sampling::OccupancyPattern;

pub const DELAY_SCAN_NS: f64 = 37.5;
pub const DELAY_STEP_NS: f64 = 0.5;
pub const CALIBRATION_WINDOW_NS: f64 = 2.0;
/// Shortest drift lever arm accepted by [`fit_drift`].
pub const MIN_DRIFT_SPAN: u64 = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTable {
    pub reference_channel: u8,
    /// Delay added to every record of a channel, in ns (0.5 ns grid).
    pub offsets_ns: Vec<f64>,
    /// Channels whose offset was measured rather than defaulted.
    pub calibrated: Vec<u8>,
    pub signal_drift: Option<LinearDrift>,
    pub trigger_drift: Option<LinearDrift>,
}

impl Default for CalibrationTable {
    fn default() -> Self {
        CalibrationTable {
            reference_channel: 16,
            offsets_ns: vec![0.0; CHANNELS],
            calibrated: Vec::new(),
            signal_drift: None,
            trigger_drift: None,
        }
    }
}

impl CalibrationTable {
    pub fn validate(&self) -> Result<()> {
        if self.offsets_ns.len() != CHANNELS {
            return Err(Error::Config(format!(
                "calibration table needs {CHANNELS} offsets, got {}",
                self.offsets_ns.len()
            )));
        }
        for (c, &o) in self.offsets_ns.iter().enumerate() {
            let on_grid = ((o / DELAY_STEP_NS).round() * DELAY_STEP_NS - o).abs() < 1e-9;
            if !o.is_finite() || o.abs() > DELAY_SCAN_NS + 1e-9 || !on_grid {
                return Err(Error::Config(format!(
                    "channel {c} offset {o} ns is off the 0.5 ns grid or outside +/-37.5 ns"
                )));
            }
        }
        for d in [self.signal_drift, self.trigger_drift].into_iter().flatten() {
            if !d.slope_ns.is_finite() || !d.intercept_ns.is_finite() {
                return Err(Error::Config("drift fit must be finite".into()));
            }
        }
        Ok(())
    }

    pub fn offset_ticks(&self, channel: u8) -> i64 {
        crate::eventstream::ns_to_ticks(self.offsets_ns[channel as usize])
    }

    pub fn drift(&self, role: ChannelRole) -> LinearDrift {
        match role {
            ChannelRole::Signal => self.signal_drift.unwrap_or_default(),
            _ => self.trigger_drift.unwrap_or_default(),
        }
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let t: CalibrationTable = serde_json::from_str(&crate::error::read_text(path)?)?;
        t.validate()?;
        Ok(t)
    }
}

fn check_sorted(records: &[EventRecord], base: usize) -> Result<()> {
    match records.windows(2).position(|w| w[1].tick < w[0].tick) {
        Some(i) => Err(Error::UnsortedTicks {
            index: base + i + 1,
            previous: records[i].tick,
            tick: records[i + 1].tick,
        }),
        None => Ok(()),
    }
}

fn check_channels(records: &[EventRecord], map: &ChannelMap) -> Result<()> {
    for r in records {
        if r.channel as usize >= CHANNELS {
            return Err(Error::ChannelRange(r.channel));
        }
        if map.role(r.channel) == ChannelRole::Reserved {
            return Err(Error::Config(format!("record on reserved or unmapped channel {}", r.channel)));
        }
    }
    Ok(())
}

/// Scans each channel's delay against `reference_channel`.
///
/// For a candidate offset `o` a record on channel `c` coincides with a
/// reference record when `|t_c + o - t_ref - lag| <= 1 ns`, where `lag` is the
/// signal delay for signal channels and zero for triggers. The offset with
/// the most coincidences wins; ties go to the smaller mean residual and then
/// to the smaller `|o|`.
pub fn calibrate_delays(
    records: &[EventRecord],
    map: &ChannelMap,
    clock: &ClockModel,
    reference_channel: u8,
) -> Result<CalibrationTable> {
    check_sorted(records, 0)?;
    check_channels(records, map)?;
    if map.role(reference_channel) == ChannelRole::Reserved {
        return Err(Error::Config(format!("reference channel {reference_channel} is not mapped")));
    }
    let steps = (DELAY_SCAN_NS / DELAY_STEP_NS).round() as i64;
    let half = CALIBRATION_WINDOW_NS / 2.0;
    let reference: Vec<f64> = records
        .iter()
        .filter(|r| r.channel == reference_channel)
        .map(EventRecord::time_ns)
        .collect();

    let mut table = CalibrationTable {
        reference_channel,
        ..CalibrationTable::default()
    };
    let mut failed = Vec::new();
    for c in 0..CHANNELS as u8 {
        if c == reference_channel {
            if !reference.is_empty() {
                table.calibrated.push(c);
            }
            continue;
        }
        let lag = if map.role(c) == ChannelRole::Signal {
            clock.signal_lag_ns
        } else {
            0.0
        };
        let times: Vec<f64> = records.iter().filter(|r| r.channel == c).map(EventRecord::time_ns).collect();
        if times.is_empty() {
            continue;
        }
        let slots = (2 * steps + 1) as usize;
        let mut counts = vec![0u64; slots];
        let mut resid = vec![0.0f64; slots];
        let reach = DELAY_SCAN_NS + half;
        let mut lo = 0;
        for &t in &times {
            // offsets near d = t_ref + lag - t can match this record
            while lo < reference.len() && reference[lo] + lag - t < -reach {
                lo += 1;
            }
            for &tr in reference[lo..].iter().take_while(|&&tr| tr + lag - t <= reach) {
                let d = tr + lag - t;
                let first = ((d - half) / DELAY_STEP_NS).ceil().max(-steps as f64) as i64;
                let last = ((d + half) / DELAY_STEP_NS).floor().min(steps as f64) as i64;
                for s in first..=last {
                    let r = (s as f64 * DELAY_STEP_NS - d).abs();
                    if r <= half + 1e-9 {
                        counts[(s + steps) as usize] += 1;
                        resid[(s + steps) as usize] += r;
                    }
                }
            }
        }
        let best = (0..slots).filter(|&i| counts[i] > 0).min_by(|&a, &b| {
            let ma = resid[a] / counts[a] as f64;
            let mb = resid[b] / counts[b] as f64;
            counts[b]
                .cmp(&counts[a])
                .then(ma.total_cmp(&mb))
                .then((a as i64 - steps).abs().cmp(&(b as i64 - steps).abs()))
        });
        match best {
            Some(i) => {
                table.offsets_ns[c as usize] = (i as i64 - steps) as f64 * DELAY_STEP_NS;
                table.calibrated.push(c);
            }
            None => failed.push(c),
        }
    }
    if !failed.is_empty() {
        return Err(Error::Uncalibratable(failed));
    }
    Ok(table)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftFit {
    pub signal: Option<LinearDrift>,
    pub trigger: Option<LinearDrift>,
    pub signal_pairs: usize,
    pub trigger_pairs: usize,
}

fn least_squares(points: &[(f64, f64)]) -> Option<LinearDrift> {
    let n = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(a, b), &(x, y)| (a + x, b + y));
    let (mx, my) = (sx / n, sy / n);
    let (sxx, sxy) = points
        .iter()
        .fold((0.0, 0.0), |(a, b), &(x, y)| (a + (x - mx) * (x - mx), b + (x - mx) * (y - my)));
    if points.len() < 2 || sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some(LinearDrift {
        slope_ns: slope,
        intercept_ns: my - slope * mx,
    })
}

/// Fits `dt(L) = slope * L + intercept` per channel class.
///
/// Consecutive records on one channel closer than `max_interval + 1/2`
/// periods form a pair; their separation minus `L` nominal periods is the
/// deviation at interval `L`. Intervals up to 100 are unwrapped against the
/// nominal period, the rest against the first fit.
pub fn fit_drift(records: &[EventRecord], map: &ChannelMap, clock: &ClockModel, max_interval: u64) -> Result<DriftFit> {
    if max_interval < MIN_DRIFT_SPAN {
        return Err(Error::InsufficientSpan(format!(
            "drift fit needs intervals up to at least {MIN_DRIFT_SPAN}, got {max_interval}"
        )));
    }
    check_sorted(records, 0)?;
    check_channels(records, map)?;
    let period = clock.pulse_period_ns;
    let limit = (max_interval as f64 + 0.5) * period;
    let mut deltas: BTreeMap<bool, Vec<f64>> = BTreeMap::new();
    for c in 0..CHANNELS as u8 {
        let times: Vec<f64> = records.iter().filter(|r| r.channel == c).map(EventRecord::time_ns).collect();
        let is_signal = map.role(c) == ChannelRole::Signal;
        let mut i = 0;
        while i + 1 < times.len() {
            let d = times[i + 1] - times[i];
            if d <= limit {
                deltas.entry(is_signal).or_default().push(d);
                i += 2;
            } else {
                i += 1;
            }
        }
    }
    let fit_class = |ds: &[f64]| -> Option<LinearDrift> {
        let near: Vec<(f64, f64)> = ds
            .iter()
            .filter(|&&d| d <= MIN_DRIFT_SPAN as f64 * period)
            .map(|&d| {
                let l = (d / period).round();
                (l, d - l * period)
            })
            .filter(|&(l, _)| l >= 1.0)
            .collect();
        let first = least_squares(&near)?;
        let all: Vec<(f64, f64)> = ds
            .iter()
            .map(|&d| {
                let l = ((d - first.intercept_ns) / (period + first.slope_ns)).round();
                (l, d - l * period)
            })
            .filter(|&(l, _)| l >= 1.0)
            .collect();
        least_squares(&all)
    };
    let sig = deltas.get(&true).map(Vec::as_slice).unwrap_or(&[]);
    let trig = deltas.get(&false).map(Vec::as_slice).unwrap_or(&[]);
    let fit = DriftFit {
        signal: fit_class(sig),
        trigger: fit_class(trig),
        signal_pairs: sig.len(),
        trigger_pairs: trig.len(),
    };
    if fit.signal.is_none() && fit.trigger.is_none() {
        return Err(Error::InsufficientSpan("no same-channel record pairs to fit drift".into()));
    }
    Ok(fit)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractParams {
    /// Number of signal photons `n'`.
    pub fold: usize,
    /// Required trigger multiplicity; `None` means one trigger per signal.
    pub triggers: Option<usize>,
    /// Number of sections (layers) `N` spanned by one event.
    pub layers: usize,
    /// Chip modes `m` used for global renumbering.
    pub modes: usize,
    pub window_ns: f64,
    /// `None` means `(N - 1) * shift + 8.5` ns, widened by the fitted drift.
    pub gather_ns: Option<f64>,
    pub section_shift_ns: f64,
    pub signal_lag_ns: f64,
}

impl ExtractParams {
    pub fn new(fold: usize, layers: usize, modes: usize) -> Self {
        ExtractParams {
            fold,
            triggers: None,
            layers,
            modes,
            window_ns: 2.0,
            gather_ns: None,
            section_shift_ns: 12.5,
            signal_lag_ns: 5.0,
        }
    }

    pub fn trigger_count(&self) -> usize {
        self.triggers.unwrap_or(self.fold)
    }

    pub fn validate(&self) -> Result<()> {
        if self.fold < 2 {
            return Err(Error::Config(format!("fold must be >= 2, got {}", self.fold)));
        }
        if self.layers == 0 || self.modes == 0 || self.trigger_count() == 0 {
            return Err(Error::Config("layers, modes and trigger count must be positive".into()));
        }
        let ok = |x: f64| x.is_finite() && x >= 0.0;
        if !(ok(self.window_ns) && ok(self.section_shift_ns) && ok(self.signal_lag_ns))
            || self.section_shift_ns == 0.0
            || self.gather_ns.is_some_and(|g| !ok(g))
        {
            return Err(Error::Config("window, gather, shift and lag must be finite and >= 0".into()));
        }
        Ok(())
    }

    pub fn effective_gather_ns(&self, table: &CalibrationTable) -> f64 {
        self.gather_ns.unwrap_or_else(|| {
            let last = self.layers as u64 - 1;
            let drift = [table.signal_drift, table.trigger_drift]
                .into_iter()
                .flatten()
                .map(|d| d.at(last))
                .fold(0.0, f64::max);
            last as f64 * self.section_shift_ns + 8.5 + drift
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoincidenceEvent {
    /// Raw tick of the last-arriving trigger.
    pub timestamp_tick: u64,
    pub fold: usize,
    /// 1-based layer of each trigger, ascending.
    pub trigger_layers: Vec<usize>,
    pub trigger_globals: Vec<usize>,
    pub signal_globals: Vec<usize>,
    /// Stream index of the trigger that opened the event.
    pub anchor_record: usize,
}

impl CoincidenceEvent {
    pub fn output_pattern(&self, global_modes: usize) -> Result<OccupancyPattern> {
        OccupancyPattern::from_modes(global_modes, &self.signal_globals)
    }

    pub fn input_pattern(&self, global_modes: usize) -> Result<OccupancyPattern> {
        OccupancyPattern::from_modes(global_modes, &self.trigger_globals)
    }
}

/// Every prefix of layers holds at least as many input photons as output
/// photons: no signal leaves the chip before its photon entered.
pub fn satisfies_causality(input: &OccupancyPattern, output: &OccupancyPattern, modes: usize) -> bool {
    if input.len() != output.len() || modes == 0 {
        return false;
    }
    let (mut ins, mut outs) = (0u32, 0u32);
    for (a, b) in input.occupancies().chunks(modes).zip(output.occupancies().chunks(modes)) {
        ins += a.iter().sum::<u32>();
        outs += b.iter().sum::<u32>();
        if outs > ins {
            return false;
        }
    }
    true
}

struct Extractor<'a> {
    map: &'a ChannelMap,
    params: &'a ExtractParams,
    offsets: [i64; CHANNELS],
    max_offset: i64,
    gather_ticks: i64,
    signal_drift: LinearDrift,
    trigger_drift: LinearDrift,
}

impl<'a> Extractor<'a> {
    fn new(map: &'a ChannelMap, table: &CalibrationTable, params: &'a ExtractParams) -> Result<Self> {
        params.validate()?;
        table.validate()?;
        let mut offsets = [0i64; CHANNELS];
        for (c, o) in offsets.iter_mut().enumerate() {
            *o = table.offset_ticks(c as u8);
        }
        Ok(Extractor {
            map,
            params,
            max_offset: offsets.iter().map(|o| o.abs()).max().unwrap_or(0),
            offsets,
            gather_ticks: (params.effective_gather_ns(table) / TICK_NS).floor() as i64,
            signal_drift: table.drift(ChannelRole::Signal),
            trigger_drift: table.drift(ChannelRole::Trigger),
        })
    }

    /// Raw ticks that can hold members of any event anchored in a range.
    fn reach_ticks(&self) -> i64 {
        self.gather_ticks + 2 * self.max_offset
    }

    fn corrected(&self, r: &EventRecord) -> i64 {
        r.tick as i64 + self.offsets[r.channel as usize]
    }

    fn section(&self, rel_ns: f64, drift: &LinearDrift) -> (usize, f64) {
        let shift = self.params.section_shift_ns;
        let last = self.params.layers as i64 - 1;
        let guess = ((rel_ns - drift.intercept_ns) / (shift + drift.slope_ns)).round() as i64;
        let mut best = (0usize, f64::INFINITY);
        for k in (guess - 1).max(0)..=(guess + 1).clamp(0, last) {
            let r = rel_ns - (k as f64 * shift + drift.at(k as u64));
            if r.abs() < best.1.abs() {
                best = (k as usize, r);
            }
        }
        best
    }

    /// Events anchored at local indices `owned` of `records`, whose first
    /// element sits at stream index `base`.
    fn extract(&self, records: &[EventRecord], base: usize, owned: Range<usize>) -> Vec<CoincidenceEvent> {
        let p = self.params;
        let triggers_needed = p.trigger_count();
        let mut out = Vec::new();
        let mut members: Vec<(usize, &EventRecord)> = Vec::new();
        for i in owned {
            let anchor = &records[i];
            if self.map.role(anchor.channel) != ChannelRole::Trigger {
                continue;
            }
            let t0 = self.corrected(anchor);
            let lo_tick = anchor.tick as i64 - 2 * self.max_offset;
            let hi_tick = anchor.tick as i64 + self.gather_ticks + 2 * self.max_offset;
            let lo = records.partition_point(|r| (r.tick as i64) < lo_tick);
            members.clear();
            let (mut nt, mut ns) = (0, 0);
            let mut overfull = false;
            for (j, r) in records.iter().enumerate().skip(lo) {
                if r.tick as i64 > hi_tick {
                    break;
                }
                let ct = self.corrected(r);
                if ct < t0 || (ct == t0 && j < i) || ct - t0 > self.gather_ticks {
                    continue;
                }
                match self.map.role(r.channel) {
                    ChannelRole::Trigger => nt += 1,
                    ChannelRole::Signal => ns += 1,
                    ChannelRole::Reserved => {}
                }
                if nt > triggers_needed || ns > p.fold {
                    overfull = true;
                    break;
                }
                members.push((j, r));
            }
            if overfull || nt != triggers_needed || ns != p.fold {
                continue;
            }
            if let Some(ev) = self.assemble(t0, base + i, &members) {
                out.push(ev);
            }
        }
        out
    }

    fn assemble(&self, t0: i64, anchor_record: usize, members: &[(usize, &EventRecord)]) -> Option<CoincidenceEvent> {
        let p = self.params;
        let mut lo_res = f64::INFINITY;
        let mut hi_res = f64::NEG_INFINITY;
        let mut trig_per_section = vec![0usize; p.layers];
        let mut sig_per_section = vec![0usize; p.layers];
        let mut seen = std::collections::HashSet::new();
        let mut trigger_layers = Vec::new();
        let mut trigger_globals = Vec::new();
        let mut signal_globals = Vec::new();
        let mut last_trigger = (i64::MIN, 0usize, 0u64);
        for &(j, r) in members {
            let info = self.map.info(r.channel);
            let ct = self.corrected(r);
            let is_signal = info.role == ChannelRole::Signal;
            let mut rel = (ct - t0) as f64 * TICK_NS;
            let drift = if is_signal {
                rel -= p.signal_lag_ns;
                &self.signal_drift
            } else {
                &self.trigger_drift
            };
            let (k, res) = self.section(rel, drift);
            lo_res = lo_res.min(res);
            hi_res = hi_res.max(res);
            if !seen.insert((r.channel, k)) || (k > 0 && !info.layer_capable) || info.mode >= p.modes {
                return None;
            }
            let global = k * p.modes + info.mode;
            if is_signal {
                sig_per_section[k] += 1;
                signal_globals.push(global);
            } else {
                trig_per_section[k] += 1;
                trigger_layers.push(k + 1);
                trigger_globals.push(global);
                if (ct, j) > (last_trigger.0, last_trigger.1) {
                    last_trigger = (ct, j, r.tick);
                }
            }
        }
        if hi_res - lo_res > p.window_ns + 1e-9 {
            return None;
        }
        let (mut t, mut s) = (0, 0);
        for k in 0..p.layers {
            t += trig_per_section[k];
            s += sig_per_section[k];
            if s > t {
                return None;
            }
        }
        trigger_layers.sort_unstable();
        trigger_globals.sort_unstable();
        signal_globals.sort_unstable();
        Some(CoincidenceEvent {
            timestamp_tick: last_trigger.2,
            fold: p.fold,
            trigger_layers,
            trigger_globals,
            signal_globals,
            anchor_record,
        })
    }
}

/// Single-pass extraction; events come out in anchor stream order.
pub fn extract_coincidences(
    records: &[EventRecord],
    map: &ChannelMap,
    table: &CalibrationTable,
    params: &ExtractParams,
) -> Result<Vec<CoincidenceEvent>> {
    let ex = Extractor::new(map, table, params)?;
    check_sorted(records, 0)?;
    check_channels(records, map)?;
    Ok(ex.extract(records, 0, 0..records.len()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ChunkStats {
    pub records: u64,
    pub events: usize,
    pub workers: usize,
    pub seconds: f64,
    pub records_per_second: f64,
}

fn tick_at(bytes: &[u8], i: usize) -> u64 {
    let at = HEADER_LEN + i * RECORD_LEN + 1;
    u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"))
}

/// First index in `range` whose tick fails `below`.
fn partition_ticks(bytes: &[u8], range: Range<usize>, below: impl Fn(u64) -> bool) -> usize {
    let (mut lo, mut hi) = (range.start, range.end);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if below(tick_at(bytes, mid)) {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Chunk-parallel extraction over an in-memory `MBS1` image.
///
/// Each worker owns a contiguous range of anchor indices and decodes it
/// together with `overlap_ns` of neighbouring records on both sides. The
/// overlap must cover the gather window plus twice the largest delay
/// offset; `None` picks exactly that. Output equals
/// [`extract_coincidences`] for any worker count.
pub fn process_bytes_chunked(
    bytes: &[u8],
    map: &ChannelMap,
    table: &CalibrationTable,
    params: &ExtractParams,
    workers: usize,
    overlap_ns: Option<f64>,
) -> Result<(Vec<CoincidenceEvent>, ChunkStats)> {
    let start = Instant::now();
    let ex = Extractor::new(map, table, params)?;
    if workers == 0 {
        return Err(Error::Config("workers must be >= 1".into()));
    }
    let needed = ex.reach_ticks();
    let overlap = match overlap_ns {
        Some(o) => {
            let o_ticks = (o / TICK_NS).floor() as i64;
            if !o.is_finite() || o_ticks < needed {
                return Err(Error::Config(format!(
                    "chunk overlap {o} ns is shorter than the {:.3} ns an event can span",
                    needed as f64 * TICK_NS
                )));
            }
            o_ticks
        }
        None => needed,
    };
    let n = decode_header(bytes)? as usize;
    let workers = workers.min(n.max(1));
    let ranges: Vec<Range<usize>> = (0..workers).map(|w| n * w / workers..n * (w + 1) / workers).collect();

    let run = |range: &Range<usize>| -> Result<(Vec<CoincidenceEvent>, Result<()>)> {
        // order check on pairs ending inside this range
        let first = range.start.max(1);
        let own = decode_records(bytes, first - 1..range.end.max(first - 1))?;
        if let Err(e) = check_sorted(&own, first - 1) {
            return Ok((Vec::new(), Err(e)));
        }
        if range.is_empty() {
            return Ok((Vec::new(), Ok(())));
        }
        if let Err(e) = check_channels(&own[range.start + 1 - first..], map) {
            return Ok((Vec::new(), Err(e)));
        }
        let lo_tick = tick_at(bytes, range.start) as i64 - overlap;
        let hi_tick = tick_at(bytes, range.end - 1) as i64 + overlap;
        let lo = partition_ticks(bytes, 0..range.start, |t| (t as i64) < lo_tick);
        let hi = partition_ticks(bytes, range.end..n, |t| t as i64 <= hi_tick);
        let slice = decode_records(bytes, lo..hi)?;
        Ok((ex.extract(&slice, lo, range.start - lo..range.end - lo), Ok(())))
    };

    let results: Vec<Result<(Vec<CoincidenceEvent>, Result<()>)>> = if workers <= 1 {
        ranges.iter().map(run).collect()
    } else {
        std::thread::scope(|s| {
            let handles: Vec<_> = ranges.iter().map(|r| s.spawn(move || run(r))).collect();
            handles.into_iter().map(|h| h.join().expect("extraction worker panicked")).collect()
        })
    };
    let mut parts = Vec::with_capacity(results.len());
    let mut order_error = None;
    let mut channel_error = None;
    for r in results {
        let (events, status) = r?;
        match status {
            Err(e @ Error::UnsortedTicks { .. }) => {
                order_error.get_or_insert(e);
            }
            Err(e) => {
                channel_error.get_or_insert(e);
            }
            Ok(()) => parts.push(events),
        }
    }
    if let Some(e) = order_error.or(channel_error) {
        return Err(e);
    }
    let events: Vec<CoincidenceEvent> = parts.into_iter().flatten().collect();
    let seconds = start.elapsed().as_secs_f64();
    let stats = ChunkStats {
        records: n as u64,
        events: events.len(),
        workers,
        seconds,
        records_per_second: if seconds > 0.0 { n as f64 / seconds } else { f64::INFINITY },
    };
    Ok((events, stats))
}

/// [`process_bytes_chunked`] on an `MBS1` file.
pub fn process_chunked(
    path: impl AsRef<Path>,
    map: &ChannelMap,
    table: &CalibrationTable,
    params: &ExtractParams,
    workers: usize,
    overlap_ns: Option<f64>,
) -> Result<(Vec<CoincidenceEvent>, ChunkStats)> {
    let mut bytes = Vec::new();
    crate::error::open_file(path)?.read_to_end(&mut bytes)?;
    process_bytes_chunked(&bytes, map, table, params, workers, overlap_ns)
}

pub const EVENT_CSV_HEADER: &str =
    "event_timestamp_tick,fold,trigger_layers,signal_global_channels,trigger_global_channels";

fn join(xs: &[usize]) -> String {
    xs.iter().map(usize::to_string).collect::<Vec<_>>().join("-")
}

pub fn write_events_csv<W: Write>(events: &[CoincidenceEvent], mut w: W) -> Result<()> {
    writeln!(w, "{EVENT_CSV_HEADER}")?;
    for e in events {
        writeln!(
            w,
            "{},{},{},{},{}",
            e.timestamp_tick,
            e.fold,
            join(&e.trigger_layers),
            join(&e.signal_globals),
            join(&e.trigger_globals)
        )?;
    }
    Ok(())
}

/// Reads an event CSV; `anchor_record` is not stored and comes back as the
/// row number.
pub fn read_events_csv<R: BufRead>(r: R) -> Result<Vec<CoincidenceEvent>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let err = |message: String| Error::Parse { line: i + 1, message };
        if i == 0 {
            if !line.starts_with("event_timestamp_tick,fold") {
                return Err(err("missing event CSV header".into()));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 && fields.len() != 5 {
            return Err(err(format!("expected 4 or 5 fields, got {}", fields.len())));
        }
        let list = |s: &str| -> Result<Vec<usize>> {
            if s.is_empty() {
                return Ok(Vec::new());
            }
            s.split('-')
                .map(|x| x.parse().map_err(|e| err(format!("bad index {x:?}: {e}"))))
                .collect()
        };
        out.push(CoincidenceEvent {
            timestamp_tick: fields[0].parse().map_err(|e| err(format!("bad tick: {e}")))?,
            fold: fields[1].parse().map_err(|e| err(format!("bad fold: {e}")))?,
            trigger_layers: list(fields[2])?,
            signal_globals: list(fields[3])?,
            trigger_globals: fields.get(4).map_or(Ok(Vec::new()), |f| list(f))?,
            anchor_record: out.len(),
        });
    }
    Ok(out)
}
