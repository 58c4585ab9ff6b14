//! The looped multi-layer scattering matrix.
//!
//! `N` temporal layers each carry an `m`-mode chip unitary. A loop channel
//! feeds photons of one layer into later ones with amplitude scale `p` per
//! traversal, so block `(i, j)` of the global matrix is
//! `p^((j - i) mod N) * blocks[j]`. With `p = 0` the matrix is the plain
//! direct sum of the layer blocks.
//!
//! Convention: entry `U[s][t]` is the amplitude for a photon entering global
//! mode `s` to leave from global mode `t` (rows are inputs). Under this
//! reading the first-row blocks `p^1, p^2, ...` describe photons moving
//! forward in time and the lower-left blocks are the cyclic wrap-around.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{direct_sum, unitarity_deviation, ComplexMatrix, C64};

/// Exponent of `p` applied to block `(i, j)` (0-based) of an `N`-layer matrix.
pub type ExponentFn = Arc<dyn Fn(usize, usize, usize) -> u32 + Send + Sync>;

#[derive(Clone, Default)]
pub enum ExponentLaw {
    /// `(j - i) mod N`, the passive single-loop law.
    #[default]
    Cyclic,
    /// Hook for other loop architectures (active or multiple loops).
    Custom(ExponentFn),
}

impl std::fmt::Debug for ExponentLaw {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExponentLaw::Cyclic => f.write_str("Cyclic"),
            ExponentLaw::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl ExponentLaw {
    fn exponent(&self, i: usize, j: usize, layers: usize) -> u32 {
        match self {
            ExponentLaw::Cyclic => ((j + layers - i) % layers) as u32,
            ExponentLaw::Custom(f) => f(i, j, layers),
        }
    }
}

#[derive(Clone, Debug)]
pub struct LayeredNetwork {
    modes: usize,
    transition: f64,
    blocks: Vec<ComplexMatrix>,
    loop_mode: usize,
    law: ExponentLaw,
}

impl LayeredNetwork {
    pub fn new(blocks: Vec<ComplexMatrix>, transition: f64, loop_mode: usize) -> Result<Self> {
        let first = blocks
            .first()
            .ok_or_else(|| Error::InvalidArgument("network needs at least one layer".into()))?;
        let modes = first.rows();
        if !(0.0..1.0).contains(&transition) {
            return Err(Error::InvalidArgument(format!(
                "transition probability must lie in [0, 1), got {transition}"
            )));
        }
        for (i, b) in blocks.iter().enumerate() {
            if b.rows() != modes || b.cols() != modes {
                return Err(Error::Shape(format!(
                    "block {} is {}x{}, expected {modes}x{modes}",
                    i + 1,
                    b.rows(),
                    b.cols()
                )));
            }
            let dev = unitarity_deviation(b)?;
            if dev > 1e-8 {
                return Err(Error::InvalidArgument(format!(
                    "block {} is not unitary (deviation {dev:e})",
                    i + 1
                )));
            }
        }
        if loop_mode >= modes {
            return Err(Error::InvalidArgument(format!(
                "loop mode {loop_mode} outside 0..{modes}"
            )));
        }
        Ok(LayeredNetwork {
            modes,
            transition,
            blocks,
            loop_mode,
            law: ExponentLaw::Cyclic,
        })
    }

    /// `layers` independent Haar blocks drawn from consecutive derived seeds.
    pub fn haar(layers: usize, modes: usize, transition: f64, seed: crate::RandomSeed) -> Result<Self> {
        if layers == 0 {
            return Err(Error::InvalidArgument("network needs at least one layer".into()));
        }
        let blocks = (0..layers)
            .map(|l| crate::matrix::haar_random_unitary(modes, seed.derive(l as u64)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(blocks, transition, modes - 1)
    }

    pub fn with_exponent_law(mut self, law: ExponentLaw) -> Self {
        self.law = law;
        self
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn layers(&self) -> usize {
        self.blocks.len()
    }

    pub fn transition(&self) -> f64 {
        self.transition
    }

    pub fn loop_mode(&self) -> usize {
        self.loop_mode
    }

    pub fn blocks(&self) -> &[ComplexMatrix] {
        &self.blocks
    }

    pub fn global_modes(&self) -> usize {
        self.modes * self.blocks.len()
    }

    fn exponent0(&self, i: usize, j: usize) -> u32 {
        self.law.exponent(i, j, self.layers())
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let doc = NetworkDoc {
            modes: self.modes,
            layers: self.layers(),
            transition: self.transition,
            loop_mode: self.loop_mode,
            blocks: self
                .blocks
                .iter()
                .map(|b| (0..b.rows()).map(|r| b.row(r).iter().map(|z| [z.re, z.im]).collect()).collect())
                .collect(),
        };
        let mut w = std::io::BufWriter::new(crate::error::create_file(path)?);
        serde_json::to_writer_pretty(&mut w, &doc)?;
        w.flush()?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let doc: NetworkDoc = serde_json::from_reader(std::io::BufReader::new(crate::error::open_file(path)?))?;
        let blocks = doc
            .blocks
            .iter()
            .map(|rows| {
                let n = rows.len();
                let data = rows.iter().flatten().map(|&[re, im]| C64::new(re, im)).collect();
                ComplexMatrix::new(n, rows.first().map_or(0, Vec::len), data)
            })
            .collect::<Result<Vec<_>>>()?;
        if blocks.len() != doc.layers {
            return Err(Error::Config(format!(
                "network file declares {} layers but holds {} blocks",
                doc.layers,
                blocks.len()
            )));
        }
        let net = Self::new(blocks, doc.transition, doc.loop_mode)?;
        if net.modes != doc.modes {
            return Err(Error::Config(format!(
                "network file declares {} modes, blocks are {}x{}",
                doc.modes, net.modes, net.modes
            )));
        }
        Ok(net)
    }
}

#[derive(Serialize, Deserialize)]
struct NetworkDoc {
    modes: usize,
    layers: usize,
    transition: f64,
    loop_mode: usize,
    blocks: Vec<Vec<Vec<[f64; 2]>>>,
}

/// Exponent of `p` on block `(i, j)` for 1-based layer indices.
pub fn block_exponent(i: usize, j: usize, layers: usize) -> Result<usize> {
    if layers == 0 || !(1..=layers).contains(&i) || !(1..=layers).contains(&j) {
        return Err(Error::InvalidArgument(format!(
            "block ({i}, {j}) outside 1..={layers}"
        )));
    }
    Ok((j + layers - i) % layers)
}

pub fn build_scattering_matrix(net: &LayeredNetwork) -> ComplexMatrix {
    let (m, n) = (net.modes(), net.layers());
    if net.transition == 0.0 && matches!(net.law, ExponentLaw::Cyclic) {
        return direct_sum(&net.blocks).expect("non-empty block list");
    }
    let mut u = ComplexMatrix::zeros(n * m, n * m);
    for i in 0..n {
        for j in 0..n {
            let e = net.exponent0(i, j);
            // powi(0) is 1 even for p = 0
            let scale = net.transition.powi(e as i32);
            if scale == 0.0 {
                continue;
            }
            let block = &net.blocks[j];
            for r in 0..m {
                for c in 0..m {
                    u[(i * m + r, j * m + c)] = block[(r, c)] * scale;
                }
            }
        }
    }
    u
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub source: usize,
    pub target: usize,
    pub weight: f64,
}

/// Directed layer graph; nodes are 1-based layer numbers. Only edges with a
/// non-zero weight are stored, self-edges (weight 1) are implicit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerGraph {
    pub nodes: usize,
    pub edges: Vec<Edge>,
}

impl LayerGraph {
    pub fn weight(&self, source: usize, target: usize) -> f64 {
        if source == target {
            return 1.0;
        }
        self.edges
            .iter()
            .find(|e| e.source == source && e.target == target)
            .map_or(0.0, |e| e.weight)
    }

    /// `i j weight` per line.
    pub fn write_edge_list<W: Write>(&self, mut w: W) -> Result<()> {
        for e in &self.edges {
            writeln!(w, "{} {} {:.17e}", e.source, e.target, e.weight)?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        let n = self.nodes;
        let adjacency: Vec<Vec<f64>> = (1..=n)
            .map(|i| (1..=n).map(|j| self.weight(i, j)).collect())
            .collect();
        serde_json::json!({
            "nodes": (1..=n).collect::<Vec<_>>(),
            "edges": self.edges,
            "adjacency": adjacency,
        })
    }
}

pub fn layer_graph(net: &LayeredNetwork) -> LayerGraph {
    let n = net.layers();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let w = net.transition.powi(net.exponent0(i, j) as i32);
            if w > 0.0 {
                edges.push(Edge {
                    source: i + 1,
                    target: j + 1,
                    weight: w,
                });
            }
        }
    }
    LayerGraph { nodes: n, edges }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::haar_random_unitary;
    use crate::RandomSeed;

    fn ones(n: usize, p: f64) -> LayeredNetwork {
        LayeredNetwork::new(vec![ComplexMatrix::identity(1); n], p, 0).unwrap()
    }

    #[test]
    fn exponents_follow_printed_rows() {
        assert_eq!(block_exponent(1, 1, 4).unwrap(), 0);
        assert_eq!(block_exponent(1, 2, 4).unwrap(), 1);
        assert_eq!(block_exponent(1, 4, 4).unwrap(), 3);
        assert_eq!(block_exponent(4, 1, 4).unwrap(), 1);
        assert_eq!(block_exponent(4, 4, 4).unwrap(), 0);
        assert!(block_exponent(0, 1, 4).is_err());
        assert!(block_exponent(1, 5, 4).is_err());
    }

    #[test]
    fn two_layer_scalar_network() {
        let u = build_scattering_matrix(&ones(2, 0.5));
        let expect = ComplexMatrix::from_real_rows(&[&[1.0, 0.5], &[0.5, 1.0]]).unwrap();
        assert_eq!(u, expect);
    }

    #[test]
    fn zero_transition_is_identity_for_scalar_blocks() {
        assert_eq!(build_scattering_matrix(&ones(3, 0.0)), ComplexMatrix::identity(3));
    }

    #[test]
    fn zero_transition_equals_direct_sum_with_custom_law() {
        let net = LayeredNetwork::haar(3, 2, 0.0, RandomSeed(5))
            .unwrap()
            .with_exponent_law(ExponentLaw::Custom(Arc::new(|i, j, n| ((j + n - i) % n) as u32)));
        let u = build_scattering_matrix(&net);
        assert_eq!(u, direct_sum(net.blocks()).unwrap());
    }

    #[test]
    fn block_two_four_is_scaled_layer_four() {
        let net = LayeredNetwork::haar(4, 2, 0.3, RandomSeed(9)).unwrap();
        let u = build_scattering_matrix(&net);
        let block = u.block(2, 6, 2, 2).unwrap();
        let expect = net.blocks()[3].scaled(C64::new(0.09, 0.0));
        assert!(block.max_abs_diff(&expect).unwrap() <= 1e-12);
    }

    #[test]
    fn scattering_matrix_is_not_unitary_for_positive_p() {
        let net = LayeredNetwork::haar(3, 2, 0.4, RandomSeed(2)).unwrap();
        let u = build_scattering_matrix(&net);
        assert!(unitarity_deviation(&u).unwrap() > 1e-3);
        // Each column carries norm^2 = sum_k p^(2k) over the layers.
        let expect: f64 = (0..3).map(|k| 0.4f64.powi(2 * k)).sum();
        for c in 0..u.cols() {
            let n2: f64 = (0..u.rows()).map(|r| u[(r, c)].norm_sqr()).sum();
            assert!((n2 - expect).abs() < 1e-10);
        }
    }

    #[test]
    fn custom_law_changes_off_diagonal_blocks() {
        // Only nearest-forward coupling, no wrap-around.
        let law = ExponentLaw::Custom(Arc::new(|i, j, _| if j == i + 1 { 1 } else if i == j { 0 } else { 60 }));
        let net = ones(3, 0.5).with_exponent_law(law);
        let u = build_scattering_matrix(&net);
        assert_eq!(u[(0, 1)], C64::new(0.5, 0.0));
        assert!(u[(1, 0)].norm() < 1e-15);
    }

    #[test]
    fn rejects_invalid_networks() {
        assert!(LayeredNetwork::new(vec![], 0.1, 0).is_err());
        assert!(LayeredNetwork::new(vec![ComplexMatrix::identity(2)], 1.0, 0).is_err());
        assert!(LayeredNetwork::new(vec![ComplexMatrix::identity(2)], -0.1, 0).is_err());
        assert!(LayeredNetwork::new(vec![ComplexMatrix::identity(2), ComplexMatrix::identity(3)], 0.1, 0).is_err());
        let bad = ComplexMatrix::identity(2).scaled(C64::new(1.1, 0.0));
        assert!(LayeredNetwork::new(vec![bad], 0.1, 0).is_err());
        assert!(LayeredNetwork::new(vec![ComplexMatrix::identity(2)], 0.1, 2).is_err());
    }

    #[test]
    fn graph_edges() {
        let g = layer_graph(&ones(2, 0.5));
        assert_eq!(
            g.edges,
            vec![
                Edge { source: 1, target: 2, weight: 0.5 },
                Edge { source: 2, target: 1, weight: 0.5 }
            ]
        );
        assert!(layer_graph(&ones(5, 0.0)).edges.is_empty());
        let g20 = layer_graph(&ones(20, 0.5));
        assert_eq!(g20.nodes, 20);
        assert_eq!(g20.edges.len(), 380);
        assert_eq!(g20.weight(3, 3), 1.0);
        // weights shrink with forward distance
        for d in 1..19 {
            assert!(g20.weight(1, 1 + d) > g20.weight(1, 2 + d));
        }
    }

    #[test]
    fn graph_exports() {
        let g = layer_graph(&ones(3, 0.5));
        let mut buf = Vec::new();
        g.write_edge_list(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 6);
        assert!(text.starts_with("1 2 5.0"));
        let json = g.to_json();
        assert_eq!(json["nodes"].as_array().unwrap().len(), 3);
        assert_eq!(json["adjacency"][0][1].as_f64().unwrap(), 0.5);
        assert_eq!(json["adjacency"][0][2].as_f64().unwrap(), 0.25);
    }

    #[test]
    fn json_round_trip() {
        let net = LayeredNetwork::haar(2, 3, 0.25, RandomSeed(1)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        net.save_json(&path).unwrap();
        let back = LayeredNetwork::load_json(&path).unwrap();
        assert_eq!(back.blocks(), net.blocks());
        assert_eq!(back.transition(), 0.25);
        assert_eq!(back.loop_mode(), net.loop_mode());
    }

    #[test]
    fn haar_blocks_are_distinct() {
        let net = LayeredNetwork::haar(2, 3, 0.1, RandomSeed(4)).unwrap();
        assert_ne!(net.blocks()[0], net.blocks()[1]);
        assert_eq!(net.blocks()[0], haar_random_unitary(3, RandomSeed(4).derive(0)).unwrap());
    }
}
