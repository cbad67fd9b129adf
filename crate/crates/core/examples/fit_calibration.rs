// Fit the model parameters to the reference figures and print the result.
//
// `cargo run --example fit_calibration -- data/calibration-default.json`
// rewrites the shipped calibration.

use pdnx::architecture::PresetOptions;
use pdnx::calibration::{calibrate, Calibration, CalibrationTargets};
use pdnx::dataset::Datasets;

pub fn fitted_defaults() -> anyhow::Result<Calibration> {
    let data = Datasets::builtin()?;
    let targets = CalibrationTargets::reference();
    let mut cal = calibrate(&data, &Calibration::uncalibrated(), &targets, &PresetOptions::default())?;
    cal.name = "calibration-default".into();
    cal.description = "fitted to the reference loss, current-spread, utilization and die-area figures".into();
    Ok(cal)
}

pub fn run_example() -> anyhow::Result<()> {
    let cal = fitted_defaults()?;
    println!(
        "sheet {:.4e} ohm/sq, access {:.3} sq, board lateral {:.4e} ohm",
        cal.sheet_resistance_ohm_sq, cal.vr_access_squares, cal.pcb_lateral_resistance_ohm
    );
    for (name, r) in &cal.residuals {
        println!("{name:<22} target {:>10.4} achieved {:>10.4} ({:+.2}%)", r.target, r.achieved, 100.0 * r.relative_error);
    }
    if let Some(path) = std::env::args().nth(1) {
        std::fs::write(&path, serde_json::to_string_pretty(&cal)? + "\n")?;
        println!("wrote {path}");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
