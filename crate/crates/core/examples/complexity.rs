//! Size of the configuration space for a few layer counts and folds.

use memboson::analysis::{complexity_metrics, complexity_surface, write_complexity_csv};

fn main() -> memboson::Result<()> {
    let big = complexity_metrics(50_000, 15, 56)?;
    println!("N=50000, m=15, n'=56: log10 C = {:.2}", big.log10_combinations);

    let rows = complexity_surface(&[10, 100, 1000, 10_000], 15, &[2, 10, 30, 60])?;
    write_complexity_csv(&rows, std::io::stdout().lock())?;
    Ok(())
}
