// Smallest die whose vertical stack carries 1 kA at 1 V within the usage
// caps, and how that area moves with the demand.

use pdnx::architecture::{min_die_area_for_current, preset_spec, Preset, PresetOptions};
use pdnx::dataset::Datasets;

pub fn run_example() -> anyhow::Result<()> {
    let data = Datasets::builtin()?;
    let reference = data.interconnect.reference_die_area_mm2;
    let a0 = preset_spec(Preset::A0, "DSCH", &data, &PresetOptions::default())?;
    for demand in [250.0, 500.0, 1000.0, 1500.0] {
        let r = min_die_area_for_current(demand, &data.calibration.policy, &a0.stack, reference, 1.0)?;
        println!(
            "{demand:>6} A: {:>6} mm2 ({:.2} A/mm2), limited by {}",
            r.die_area_mm2,
            r.density_a_per_mm2,
            r.binding_level.as_deref().unwrap_or("nothing")
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
