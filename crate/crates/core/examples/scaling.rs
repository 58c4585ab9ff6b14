//! Coincidence counts versus layer count and fold from independent heralded
//! pairs, on a reduced grid.

use memboson::analysis::{scaling_study, write_scaling_csv, ScalingConfig};

fn main() -> memboson::Result<()> {
    let cfg = ScalingConfig {
        duration_pulses: 20_000_000,
        partitions: 4,
        layer_values: vec![100, 400, 1000],
        fold_values: vec![3, 4, 5],
        ..ScalingConfig::default()
    };
    let rows = scaling_study(&cfg)?;
    write_scaling_csv(&rows, std::io::stdout().lock())?;
    Ok(())
}
