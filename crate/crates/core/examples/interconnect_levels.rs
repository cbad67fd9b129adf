// Per-level connection counts, resistance and the current each level can
// carry within its usage cap, for the reference 500 mm² die.

use pdnx::dataset::Datasets;
use pdnx::interconnect::{allotted_power_connections, connection_count, level_loss, per_connection_resistance};

pub fn run_example() -> anyhow::Result<()> {
    let data = Datasets::builtin()?;
    let policy = &data.calibration.policy;
    println!(
        "{:<7} {:>11} {:>12} {:>9} {:>10} {:>12}",
        "level", "sites", "R/conn mOhm", "cap", "max A", "loss@1kA W"
    );
    for name in ["bga", "c4", "tsv", "ubump", "cu_pad"] {
        let level = data.interconnect.level(name)?;
        let limits = policy.limits(name);
        let power = allotted_power_connections(&level, limits.max_usage_fraction, 0.5);
        println!(
            "{:<7} {:>11} {:>12.4} {:>8.0}% {:>10.1} {:>12.4}",
            name,
            connection_count(&level),
            1e3 * per_connection_resistance(&level),
            100.0 * limits.max_usage_fraction,
            power as f64 * limits.ampacity_a,
            level_loss(&level, 1000.0, power)?
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
