// Plane loss of the periphery and under-die arrangements as the plane's
// sheet resistance varies.

use pdnx::architecture::{compare, preset_grid, CellResult, EvalSettings, Preset, PresetOptions};
use pdnx::dataset::Datasets;

pub fn run_example() -> anyhow::Result<()> {
    let data = Datasets::builtin()?;
    let specs = preset_grid(&[Preset::A1, Preset::A2], &["DSCH".to_string()], &data, &PresetOptions::default())?;
    println!("{:>8} {:>10} {:>10}", "scale", "A1 plane W", "A2 plane W");
    for scale in [0.25, 0.5, 1.0, 2.0, 4.0] {
        let mut cal = data.calibration.clone();
        cal.sheet_resistance_ohm_sq *= scale;
        let table = compare(&specs, &cal, &EvalSettings::default());
        let plane: Vec<String> = table
            .cells
            .iter()
            .map(|c| match &c.result {
                CellResult::Reported(b) => format!("{:>10.2}", b.horizontal_loss_w - b.horizontal[0].loss_w),
                CellResult::NotReported { .. } => format!("{:>10}", "n/r"),
            })
            .collect();
        println!("{scale:>8} {}", plane.join(" "));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
