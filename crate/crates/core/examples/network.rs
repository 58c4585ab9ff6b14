//! Builds a three-layer looped network from Haar blocks and prints its
//! block structure and layer graph.

use memboson::matrix::unitarity_deviation;
use memboson::network::{build_scattering_matrix, layer_graph, LayeredNetwork};
use memboson::RandomSeed;

fn main() -> memboson::Result<()> {
    let net = LayeredNetwork::haar(3, 4, 0.5, RandomSeed(1))?;
    for (i, b) in net.blocks().iter().enumerate() {
        println!("block {i}: unitarity deviation {:.2e}", unitarity_deviation(b)?);
    }

    let u = build_scattering_matrix(&net);
    println!("scattering matrix {}x{}", u.rows(), u.cols());
    // mean |U|^2 per layer block
    let m = net.modes();
    for i in 0..net.layers() {
        let row: Vec<String> = (0..net.layers())
            .map(|j| {
                let mut s = 0.0;
                for r in 0..m {
                    for c in 0..m {
                        s += u[(i * m + r, j * m + c)].norm_sqr();
                    }
                }
                format!("{:.3}", s / m as f64)
            })
            .collect();
        println!("  {}", row.join(" "));
    }

    let graph = layer_graph(&net);
    graph.write_edge_list(std::io::stdout().lock())?;
    Ok(())
}
