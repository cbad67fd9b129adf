// Compare the reference and proposed architectures across converter
// topologies, one row per cell.

use pdnx::architecture::{compare, preset_grid, CellResult, EvalSettings, Preset, PresetOptions};
use pdnx::dataset::Datasets;

pub fn run_example() -> anyhow::Result<()> {
    let data = Datasets::builtin()?;
    let topologies = vec!["DSCH".to_string(), "DPMIH".to_string(), "3LHD".to_string()];
    let specs = preset_grid(&Preset::ALL, &topologies, &data, &PresetOptions::default())?;
    let table = compare(&specs, &data.calibration, &EvalSettings::default());

    println!(
        "{:<8} {:<6} {:>8} {:>8} {:>8} {:>10} {:>9}",
        "arch", "topo", "total%", "ppdn%", "conv%", "horiz W", "VR A"
    );
    for cell in &table.cells {
        match &cell.result {
            CellResult::Reported(b) => {
                let s = &b.stages.last().unwrap().spread;
                println!(
                    "{:<8} {:<6} {:>8.2} {:>8.2} {:>8.2} {:>10.2} {:>4.1}-{:<4.1}",
                    cell.architecture,
                    cell.topology,
                    b.total_loss_pct,
                    b.ppdn_loss_pct,
                    b.converter_loss_pct,
                    b.horizontal_loss_w,
                    s.min_a,
                    s.max_a
                );
            }
            CellResult::NotReported { reason, .. } => {
                println!("{:<8} {:<6} not reported: {reason}", cell.architecture, cell.topology);
            }
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
