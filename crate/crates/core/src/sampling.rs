//! Exact output-pattern statistics over a scattering matrix.
//!
//! A pattern probability is a permanent of the submatrix obtained by
//! repeating rows per input occupancy and columns per output occupancy.
//! Rows of the scattering matrix are inputs (see [`crate::network`]).
//! The looped matrix is not unitary, so weights are renormalized over the
//! enumerated (post-selected) outcome set.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{submatrix, ComplexMatrix};
use crate::permanent::permanent_ryser;
use crate::RandomSeed;

pub const MAX_PHOTONS: usize = 10;
pub const MAX_PATTERNS: u128 = 10_000_000;

/// Photon occupation numbers over global modes (`layer * m + mode`).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OccupancyPattern(Vec<u32>);

impl OccupancyPattern {
    pub fn new(occupancies: Vec<u32>) -> Self {
        OccupancyPattern(occupancies)
    }

    /// Pattern of length `len` with one photon per listed mode (repeats add up).
    pub fn from_modes(len: usize, modes: &[usize]) -> Result<Self> {
        let mut occ = vec![0u32; len];
        for &m in modes {
            *occ.get_mut(m).ok_or_else(|| {
                Error::InvalidPattern(format!("mode {m} outside pattern of length {len}"))
            })? += 1;
        }
        Ok(OccupancyPattern(occ))
    }

    pub fn occupancies(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> usize {
        self.0.iter().map(|&k| k as usize).sum()
    }

    pub fn is_collision_free(&self) -> bool {
        self.0.iter().all(|&k| k <= 1)
    }

    /// Occupied modes, each repeated by its occupancy.
    pub fn modes(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .flat_map(|(i, &k)| std::iter::repeat_n(i, k as usize))
            .collect()
    }

    fn multiplicities(&self) -> Vec<usize> {
        self.0.iter().map(|&k| k as usize).collect()
    }

    fn factorial_product(&self) -> f64 {
        self.0.iter().map(|&k| (1..=k).map(f64::from).product::<f64>()).product()
    }
}

impl fmt::Display for OccupancyPattern {
    /// Hyphen-separated counts, e.g. `1-0-1`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, k) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("-")?;
            }
            write!(f, "{k}")?;
        }
        Ok(())
    }
}

impl FromStr for OccupancyPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.trim()
            .split('-')
            .map(|t| {
                t.trim()
                    .parse::<u32>()
                    .map_err(|e| Error::InvalidPattern(format!("{s:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()
            .map(OccupancyPattern)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistics {
    Indistinguishable,
    Distinguishable,
}

impl FromStr for Statistics {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "indistinguishable" | "ind" | "boson" => Ok(Statistics::Indistinguishable),
            "distinguishable" | "dis" | "classical" => Ok(Statistics::Distinguishable),
            _ => Err(Error::InvalidArgument(format!("unknown statistics {s:?}"))),
        }
    }
}

/// Normalized probabilities over distinct patterns.
#[derive(Clone, Debug)]
pub struct Distribution {
    patterns: Vec<OccupancyPattern>,
    probs: Vec<f64>,
    index: HashMap<OccupancyPattern, usize>,
}

impl PartialEq for Distribution {
    fn eq(&self, other: &Self) -> bool {
        self.patterns == other.patterns && self.probs == other.probs
    }
}

impl Distribution {
    pub fn new(patterns: Vec<OccupancyPattern>, probs: Vec<f64>) -> Result<Self> {
        if patterns.len() != probs.len() {
            return Err(Error::Shape(format!(
                "{} patterns but {} probabilities",
                patterns.len(),
                probs.len()
            )));
        }
        if patterns.is_empty() {
            return Err(Error::InvalidArgument("empty distribution".into()));
        }
        if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::InvalidArgument(format!("invalid probability {p}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Unnormalized(total));
        }
        let mut index = HashMap::with_capacity(patterns.len());
        for (i, p) in patterns.iter().enumerate() {
            if index.insert(p.clone(), i).is_some() {
                return Err(Error::InvalidPattern(format!("duplicate pattern {p}")));
            }
        }
        Ok(Distribution { patterns, probs, index })
    }

    /// Normalizes non-negative weights.
    pub fn from_weights(patterns: Vec<OccupancyPattern>, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "weights must have positive finite mass, got {total}"
            )));
        }
        Self::new(patterns, weights.into_iter().map(|w| w / total).collect())
    }

    pub fn uniform(patterns: Vec<OccupancyPattern>) -> Result<Self> {
        let n = patterns.len();
        Self::from_weights(patterns, vec![1.0; n])
    }

    pub fn point_mass(pattern: OccupancyPattern) -> Self {
        Self::new(vec![pattern], vec![1.0]).expect("single pattern")
    }

    pub fn patterns(&self) -> &[OccupancyPattern] {
        &self.patterns
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&OccupancyPattern, f64)> {
        self.patterns.iter().zip(self.probs.iter().copied())
    }

    /// Probability of `pattern`, zero when absent.
    pub fn prob(&self, pattern: &OccupancyPattern) -> f64 {
        self.index.get(pattern).map_or(0.0, |&i| self.probs[i])
    }

    pub fn contains(&self, pattern: &OccupancyPattern) -> bool {
        self.index.contains_key(pattern)
    }

    /// Keeps the patterns accepted by `keep` and renormalizes.
    pub fn restrict(&self, keep: impl Fn(&OccupancyPattern) -> bool) -> Result<Self> {
        let (pats, ws): (Vec<_>, Vec<_>) = self
            .iter()
            .filter(|(p, _)| keep(p))
            .map(|(p, w)| (p.clone(), w))
            .unzip();
        Self::from_weights(pats, ws)
    }

    /// Total variation distance over the union of supports.
    pub fn total_variation(&self, other: &Distribution) -> f64 {
        let mut d: f64 = self.iter().map(|(p, a)| (a - other.prob(p)).abs()).sum();
        d += other
            .iter()
            .filter(|(p, _)| !self.contains(p))
            .map(|(_, b)| b)
            .sum::<f64>();
        0.5 * d
    }

    /// Empirical distribution of a sample list.
    pub fn empirical(samples: &[OccupancyPattern]) -> Result<Self> {
        let mut counts: HashMap<&OccupancyPattern, usize> = HashMap::new();
        for s in samples {
            *counts.entry(s).or_default() += 1;
        }
        let mut entries: Vec<_> = counts.into_iter().collect();
        entries.sort();
        let (pats, ws): (Vec<_>, Vec<_>) = entries.into_iter().map(|(p, c)| (p.clone(), c as f64)).unzip();
        Self::from_weights(pats, ws)
    }

    /// CSV with a `pattern,probability` header, one row per pattern.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "pattern,probability")?;
        for (p, prob) in self.iter() {
            writeln!(w, "{p},{prob:.17e}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut pats = Vec::new();
        let mut probs = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || (i == 0 && line.starts_with("pattern")) {
                continue;
            }
            let (p, prob) = line.split_once(',').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("expected `pattern,probability`, got {line:?}"),
            })?;
            pats.push(p.parse()?);
            probs.push(prob.trim().parse::<f64>().map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?);
        }
        Self::new(pats, probs)
    }
}

/// Unnormalized weight of `output` given `input`.
///
/// Indistinguishable photons: `|Perm(U_ST)|^2 / (prod s_i! prod t_j!)`.
/// Distinguishable photons: `Perm(|U_ST|^2) / prod t_j!`, since labelled
/// photons sharing an input mode are still distinct particles.
pub fn pattern_weight(
    u: &ComplexMatrix,
    input: &OccupancyPattern,
    output: &OccupancyPattern,
    stats: Statistics,
) -> Result<f64> {
    if !u.is_square() || input.len() != u.rows() || output.len() != u.cols() {
        return Err(Error::Shape(format!(
            "patterns of length ({}, {}) against {}x{} matrix",
            input.len(),
            output.len(),
            u.rows(),
            u.cols()
        )));
    }
    let n = input.total();
    if n != output.total() {
        return Err(Error::InvalidPattern(format!(
            "input carries {n} photons, output {}",
            output.total()
        )));
    }
    if n > MAX_PHOTONS {
        return Err(Error::SizeLimit {
            what: "photon number",
            limit: MAX_PHOTONS as u128,
            actual: n as u128,
        });
    }
    if n == 0 {
        return Ok(1.0);
    }
    let sub = submatrix(u, &input.multiplicities(), &output.multiplicities())?;
    let w = match stats {
        Statistics::Indistinguishable => {
            permanent_ryser(&sub)?.norm_sqr() / (input.factorial_product() * output.factorial_product())
        }
        Statistics::Distinguishable => {
            let moduli = sub.map(|z| crate::C64::new(z.norm_sqr(), 0.0));
            permanent_ryser(&moduli)?.re / output.factorial_product()
        }
    };
    // Ryser sums can leave a tiny negative residue for an exact zero.
    Ok(w.max(0.0))
}

fn binomial(n: u128, k: u128) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul(n - i)? / (i + 1);
    }
    Some(acc)
}

/// Number of output patterns of `photons` over `modes`.
pub fn pattern_count(modes: usize, photons: usize, collision_free: bool) -> Option<u128> {
    if collision_free {
        binomial(modes as u128, photons as u128)
    } else {
        binomial((modes + photons) as u128 - 1, photons as u128)
    }
}

/// All output patterns in lexicographic order of their sorted mode lists.
pub fn enumerate_patterns(modes: usize, photons: usize, collision_free: bool) -> Result<Vec<OccupancyPattern>> {
    let count = pattern_count(modes, photons, collision_free).unwrap_or(u128::MAX);
    if count > MAX_PATTERNS {
        return Err(Error::SizeLimit {
            what: "pattern enumeration",
            limit: MAX_PATTERNS,
            actual: count,
        });
    }
    let mut out = Vec::with_capacity(count as usize);
    if photons == 0 {
        out.push(OccupancyPattern(vec![0; modes]));
        return Ok(out);
    }
    let step = usize::from(collision_free);
    // `idx` is a non-decreasing (strictly increasing when collision-free) mode list.
    let mut idx: Vec<usize> = (0..photons).map(|i| i * step).collect();
    if idx.last().is_some_and(|&l| l >= modes) {
        return Ok(out);
    }
    loop {
        let mut occ = vec![0u32; modes];
        for &i in &idx {
            occ[i] += 1;
        }
        out.push(OccupancyPattern(occ));
        // advance
        let mut pos = photons;
        loop {
            if pos == 0 {
                return Ok(out);
            }
            pos -= 1;
            let limit = modes - (photons - 1 - pos) * step;
            if idx[pos] + 1 < limit {
                idx[pos] += 1;
                for j in pos + 1..photons {
                    idx[j] = idx[j - 1] + step;
                }
                break;
            }
        }
    }
}

/// Weights of every output pattern before normalization.
pub fn output_weights(
    u: &ComplexMatrix,
    input: &OccupancyPattern,
    stats: Statistics,
    collision_free: bool,
) -> Result<Vec<(OccupancyPattern, f64)>> {
    if input.total() > MAX_PHOTONS {
        return Err(Error::SizeLimit {
            what: "photon number",
            limit: MAX_PHOTONS as u128,
            actual: input.total() as u128,
        });
    }
    let patterns = enumerate_patterns(u.cols(), input.total(), collision_free)?;
    patterns
        .into_par_iter()
        .map(|out| pattern_weight(u, input, &out, stats).map(|w| (out, w)))
        .collect()
}

pub fn full_distribution(
    u: &ComplexMatrix,
    input: &OccupancyPattern,
    stats: Statistics,
    collision_free: bool,
) -> Result<Distribution> {
    let (pats, ws): (Vec<_>, Vec<_>) = output_weights(u, input, stats, collision_free)?.into_iter().unzip();
    Distribution::from_weights(pats, ws)
}

/// Inverse-CDF sampler over a distribution's pattern indices.
#[derive(Clone, Debug)]
pub struct Sampler {
    cdf: Vec<f64>,
}

impl Sampler {
    pub fn new(dist: &Distribution) -> Self {
        let mut acc = 0.0;
        let cdf = dist
            .probs()
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Sampler { cdf }
    }

    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cdf.last().expect("non-empty distribution");
        let u: f64 = rng.random::<f64>() * total;
        self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1)
    }
}

pub fn draw_samples(dist: &Distribution, count: usize, seed: RandomSeed) -> Vec<OccupancyPattern> {
    let sampler = Sampler::new(dist);
    let mut rng = seed.rng();
    (0..count)
        .map(|_| dist.patterns()[sampler.sample_index(&mut rng)].clone())
        .collect()
}

/// Random collision-free inputs of `n_prime` heralded photons over
/// `layers * modes` global modes.
///
/// Each of `draws` attempts picks a uniform `n_prime`-subset; every photon is
/// heralded with probability `heralding_efficiency` and attempts with a
/// missing herald are dropped, as a post-selected experiment would.
pub fn scattershot_inputs(
    layers: usize,
    modes: usize,
    n_prime: usize,
    heralding_efficiency: f64,
    draws: usize,
    seed: RandomSeed,
) -> Result<Vec<OccupancyPattern>> {
    let total = layers * modes;
    if n_prime > total {
        return Err(Error::InvalidArgument(format!(
            "{n_prime} photons do not fit in {total} modes"
        )));
    }
    if !(heralding_efficiency > 0.0 && heralding_efficiency <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "heralding efficiency must lie in (0, 1], got {heralding_efficiency}"
        )));
    }
    let mut rng = seed.rng();
    let mut out = Vec::with_capacity(draws);
    for _ in 0..draws {
        let chosen = index::sample(&mut rng, total, n_prime);
        let heralded = heralding_efficiency >= 1.0
            || (0..n_prime).all(|_| rng.random::<f64>() < heralding_efficiency);
        if heralded {
            let mut occ = vec![0u32; total];
            for i in chosen {
                occ[i] = 1;
            }
            out.push(OccupancyPattern(occ));
        }
    }
    Ok(out)
}
