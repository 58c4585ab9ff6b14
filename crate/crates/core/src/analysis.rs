//! Statistics on extracted events.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::eventstream::{generate_stream, ChannelMap, ClockModel, NoiseModel, Source, StreamConfig};
use crate::network::LayeredNetwork;
use crate::pipeline::{extract_coincidences, CalibrationTable, CoincidenceEvent, ExtractParams};
use crate::sampling::{Distribution, OccupancyPattern};
use crate::RandomSeed;

const NORM_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// `p_i ∝ 1 / T_i` with `T_i` the first timestamp of pattern `i`.
    FirstOccurrence,
    /// `p_i ∝ 1 / mean inter-arrival time = k_i / (t_last_i - origin)`.
    MeanInterval,
    /// Plain relative frequencies.
    Counts,
}

impl std::str::FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "first_occurrence" => Ok(Estimator::FirstOccurrence),
            "mean_interval" => Ok(Estimator::MeanInterval),
            "counts" => Ok(Estimator::Counts),
            _ => Err(Error::InvalidArgument(format!("unknown estimator {s:?}"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub distribution: Distribution,
    pub counts: Vec<(OccupancyPattern, usize)>,
    /// Expected patterns that never occurred.
    pub excluded: Vec<OccupancyPattern>,
}

/// Rebuilds output probabilities from event timestamps.
///
/// Times are measured from `origin_tick`, normally the first record of the
/// run. A first occurrence at the origin itself is treated as one tick.
pub fn reconstruct_from_timestamps(
    events: &[CoincidenceEvent],
    global_modes: usize,
    estimator: Estimator,
    origin_tick: u64,
    expected: &[OccupancyPattern],
) -> Result<Reconstruction> {
    let mut seen: BTreeMap<OccupancyPattern, (usize, u64, u64)> = BTreeMap::new();
    for e in events {
        let pat = e.output_pattern(global_modes)?;
        let t = e.timestamp_tick.saturating_sub(origin_tick).max(1);
        let entry = seen.entry(pat).or_insert((0, t, t));
        entry.0 += 1;
        entry.1 = entry.1.min(t);
        entry.2 = entry.2.max(t);
    }
    if seen.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "reconstruction needs at least 2 distinct patterns, got {}",
            seen.len()
        )));
    }
    let (patterns, weights): (Vec<_>, Vec<_>) = seen
        .iter()
        .map(|(p, &(k, first, last))| {
            let w = match estimator {
                Estimator::FirstOccurrence => 1.0 / first as f64,
                Estimator::MeanInterval => k as f64 / last as f64,
                Estimator::Counts => k as f64,
            };
            (p.clone(), w)
        })
        .unzip();
    Ok(Reconstruction {
        distribution: Distribution::from_weights(patterns, weights)?,
        counts: seen.iter().map(|(p, v)| (p.clone(), v.0)).collect(),
        excluded: expected.iter().filter(|p| !seen.contains_key(p)).cloned().collect(),
    })
}

fn check_normalized(d: &Distribution) -> Result<()> {
    let total: f64 = d.probs().iter().sum();
    if (total - 1.0).abs() > NORM_TOL || d.probs().iter().any(|p| *p < 0.0 || !p.is_finite()) {
        return Err(Error::Unnormalized(total));
    }
    Ok(())
}

/// Bhattacharyya coefficient `sum_i sqrt(s_i t_i)` over the union support.
pub fn fidelity(s: &Distribution, t: &Distribution) -> Result<f64> {
    check_normalized(s)?;
    check_normalized(t)?;
    let f: f64 = s.iter().map(|(p, a)| (a * t.prob(p)).sqrt()).sum();
    Ok(f.clamp(0.0, 1.0))
}

/// Counter step for one likelihood ratio. The bands are symmetric under
/// `L -> 1/L`:
///
/// | ratio                   | step |
/// |-------------------------|------|
/// | `L >= a2`               | +2   |
/// | `1/a1 <= L < a2`        | +1   |
/// | `a1 < L < 1/a1`         | 0    |
/// | `1/a2 < L <= a1`        | -1   |
/// | `L <= 1/a2`             | -2   |
pub fn counter_step(ratio: f64, a1: f64, a2: f64) -> i64 {
    if ratio >= a2 {
        2
    } else if ratio >= 1.0 / a1 {
        1
    } else if ratio > a1 {
        0
    } else if ratio > 1.0 / a2 {
        -1
    } else {
        -2
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationTrace {
    pub a1: f64,
    pub a2: f64,
    pub ratios: Vec<f64>,
    /// Counter value after each event; starts implicitly at 0.
    pub counter: Vec<i64>,
}

impl ValidationTrace {
    pub fn final_value(&self) -> i64 {
        self.counter.last().copied().unwrap_or(0)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "event,ratio,counter")?;
        for (i, (r, c)) in self.ratios.iter().zip(&self.counter).enumerate() {
            writeln!(w, "{},{:.17e},{}", i + 1, r, c)?;
        }
        Ok(())
    }
}

fn check_thresholds(a1: f64, a2: f64) -> Result<()> {
    if !(a1 > 0.0 && a1 < 1.0) || !(a2 > 1.0 && a2.is_finite()) || 1.0 / a1 > a2 {
        return Err(Error::InvalidArgument(format!(
            "thresholds need 0 < a1 < 1 < 1/a1 <= a2, got a1 = {a1}, a2 = {a2}"
        )));
    }
    Ok(())
}

pub fn validate_ratios(ratios: &[f64], a1: f64, a2: f64) -> Result<ValidationTrace> {
    check_thresholds(a1, a2)?;
    let mut c = 0;
    let counter = ratios
        .iter()
        .map(|&l| {
            c += counter_step(l, a1, a2);
            c
        })
        .collect();
    Ok(ValidationTrace {
        a1,
        a2,
        ratios: ratios.to_vec(),
        counter,
    })
}

/// Runs the counter over `events` with `L_k = p_ind(k) / q_dis(k)`.
/// A pattern with zero probability under either model aborts the run.
pub fn likelihood_ratio_validate(
    events: &[OccupancyPattern],
    p_ind: &Distribution,
    q_dis: &Distribution,
    a1: f64,
    a2: f64,
) -> Result<ValidationTrace> {
    check_thresholds(a1, a2)?;
    let ratios = events
        .iter()
        .map(|e| {
            let (p, q) = (p_ind.prob(e), q_dis.prob(e));
            if p > 0.0 && q > 0.0 {
                Ok(p / q)
            } else {
                Err(Error::UndefinedRatio(e.to_string()))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    validate_ratios(&ratios, a1, a2)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexityMetrics {
    pub layers: usize,
    pub modes: usize,
    pub fold: usize,
    pub log10_combinations: f64,
    /// Collision-free output space of `fold` photons in `layers * modes` modes.
    pub log10_hilbert: f64,
}

pub fn log10_binomial(n: u64, k: u64) -> Result<f64> {
    if k > n {
        return Err(Error::InvalidArgument(format!("cannot choose {k} of {n}")));
    }
    if k == 0 || k == n {
        return Ok(0.0);
    }
    let ln = ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0);
    Ok(ln / std::f64::consts::LN_10)
}

pub fn complexity_metrics(layers: usize, modes: usize, fold: usize) -> Result<ComplexityMetrics> {
    if layers == 0 || modes == 0 || fold == 0 {
        return Err(Error::InvalidArgument("layers, modes and fold must be positive".into()));
    }
    let total = (layers as u64)
        .checked_mul(modes as u64)
        .ok_or_else(|| Error::InvalidArgument("layers * modes overflows".into()))?;
    let v = log10_binomial(total, fold as u64)?;
    Ok(ComplexityMetrics {
        layers,
        modes,
        fold,
        log10_combinations: v,
        log10_hilbert: v,
    })
}

/// Metrics over a `layers x fold` grid; infeasible points are skipped.
pub fn complexity_surface(layers: &[usize], modes: usize, folds: &[usize]) -> Result<Vec<ComplexityMetrics>> {
    let mut out = Vec::new();
    for &n in layers {
        for &f in folds {
            if f <= n * modes {
                out.push(complexity_metrics(n, modes, f)?);
            }
        }
    }
    Ok(out)
}

pub fn write_complexity_csv<W: Write>(rows: &[ComplexityMetrics], mut w: W) -> Result<()> {
    writeln!(w, "layers,modes,fold,log10_combinations,log10_hilbert")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{:.9},{:.9}",
            r.layers, r.modes, r.fold, r.log10_combinations, r.log10_hilbert
        )?;
    }
    Ok(())
}

/// Stream and grid for a layer/fold scaling study.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScalingConfig {
    pub modes: usize,
    pub transition: f64,
    pub input_modes: Vec<usize>,
    /// Pair probability per pulse for each pumped input.
    pub pair_probability: f64,
    pub duration_pulses: u64,
    pub partitions: usize,
    pub layer_values: Vec<usize>,
    pub fold_values: Vec<usize>,
    pub seed: RandomSeed,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        ScalingConfig {
            modes: 8,
            transition: 0.5,
            input_modes: (0..8).collect(),
            pair_probability: 0.002 / 8.0,
            duration_pulses: 500_000_000,
            partitions: 10,
            layer_values: (1..=10).map(|k| 100 * k).collect(),
            fold_values: (5..=10).collect(),
            seed: RandomSeed(2024),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub layers: usize,
    pub fold: usize,
    pub counts: Vec<u64>,
    pub mean: f64,
    pub std: f64,
}

fn mean_std(xs: &[u64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<u64>() as f64 / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Counts `fold`-fold events for every `(layers, fold)` pair on one
/// fixed-duration stream of independent heralded pairs, split into equal
/// time partitions by the tick of each event's opening trigger.
pub fn scaling_study(cfg: &ScalingConfig) -> Result<Vec<ScalingRow>> {
    if cfg.partitions == 0 || cfg.layer_values.is_empty() || cfg.fold_values.is_empty() {
        return Err(Error::InvalidArgument("scaling study needs partitions, layers and folds".into()));
    }
    let max_layers = *cfg.layer_values.iter().max().expect("non-empty") as u64;
    if cfg.duration_pulses < cfg.partitions as u64 * max_layers * 2 {
        return Err(Error::TooShort(format!(
            "{} pulses cannot hold {} partitions of {max_layers}-layer events",
            cfg.duration_pulses, cfg.partitions
        )));
    }
    let net = LayeredNetwork::haar(1, cfg.modes, cfg.transition, cfg.seed.derive(1))?;
    let stream = generate_stream(
        &net,
        Source::Pairs {
            input_modes: &cfg.input_modes,
            pair_probability: cfg.pair_probability,
        },
        &ClockModel::default(),
        &NoiseModel::default(),
        &StreamConfig::new(cfg.duration_pulses),
        cfg.seed.derive(2),
    )?;
    let map = ChannelMap::default();
    let table = CalibrationTable::default();
    let span = (stream.end_tick - stream.start_tick).max(1);
    let parts = cfg.partitions as u64;
    let grid: Vec<(usize, usize)> = cfg
        .layer_values
        .iter()
        .flat_map(|&n| cfg.fold_values.iter().map(move |&f| (n, f)))
        .collect();
    grid.par_iter()
        .map(|&(layers, fold)| {
            let params = ExtractParams::new(fold, layers, cfg.modes);
            let events = extract_coincidences(&stream.records, &map, &table, &params)?;
            let mut counts = vec![0u64; cfg.partitions];
            for e in &events {
                let t = stream.records[e.anchor_record].tick.saturating_sub(stream.start_tick);
                counts[((t * parts / span) as usize).min(cfg.partitions - 1)] += 1;
            }
            let (mean, std) = mean_std(&counts);
            Ok(ScalingRow {
                layers,
                fold,
                counts,
                mean,
                std,
            })
        })
        .collect()
}

pub fn write_scaling_csv<W: Write>(rows: &[ScalingRow], mut w: W) -> Result<()> {
    writeln!(w, "layers,fold,mean,std,partition_counts")?;
    for r in rows {
        let counts: Vec<String> = r.counts.iter().map(u64::to_string).collect();
        writeln!(w, "{},{},{:.6},{:.6},{}", r.layers, r.fold, r.mean, r.std, counts.join("-"))?;
    }
    Ok(())
}
