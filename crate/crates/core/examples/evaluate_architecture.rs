// Full loss breakdown of the periphery architecture with DSCH converters.

use pdnx::architecture::{evaluate, preset_spec, EvalSettings, Preset, PresetOptions};
use pdnx::dataset::Datasets;

pub fn run_example() -> anyhow::Result<()> {
    let data = Datasets::builtin()?;
    let spec = preset_spec(Preset::A1, "DSCH", &data, &PresetOptions::default())?;
    let b = evaluate(&spec, &data.calibration, &EvalSettings::default())?;

    println!("{} with {}: {:.2}% loss, efficiency {:.1}%", b.architecture, b.topology, b.total_loss_pct, 100.0 * b.efficiency);
    println!("source {:.1} W at {} V ({:.2} A)", b.source_power_w, b.source_voltage_v, b.source_current_a);
    for l in &b.vertical {
        println!("  {:<7} {:>6} V {:>8.2} A {:>8.4} W", l.level, l.domain_voltage_v, l.current_a, l.loss_w);
    }
    for p in &b.horizontal {
        println!("  {:<12} {:>8.2} W", p.name, p.loss_w);
    }
    for s in &b.stages {
        println!(
            "  {} x{} {:?}: {:.2} W, {:.2}-{:.2} A per VR",
            s.converter, s.vr_count, s.placement, s.loss_w, s.spread.min_a, s.spread.max_a
        );
    }
    for c in &b.feasibility {
        println!("  [{:?}] {} {}", c.status, c.check, c.detail);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
