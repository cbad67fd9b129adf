// DC solve of the die plane fed by periphery VRs, with the spread of VR
// currents and the plane loss.

use pdnx::converter::vr_footprint_area;
use pdnx::dataset::Datasets;
use pdnx::pdn_grid::{build_problem, current_spread, solve_dc, write_voltage_csv, DemandProfile, GridLoad, GridSettings};
use pdnx::placement::{place_periphery, DieFloorplan};

pub fn run_example() -> anyhow::Result<()> {
    let data = Datasets::builtin()?;
    let cal = &data.calibration;
    let plan = DieFloorplan::new(500.0);
    let sites = place_periphery(&plan, 48, vr_footprint_area(data.converters.topology("DSCH")?))?;
    let settings = GridSettings {
        resolution: cal.grid_resolution,
        sheet_resistance_ohm_sq: cal.sheet_resistance_ohm_sq,
        access_squares: cal.vr_access_squares,
        solver: Default::default(),
    };

    for (label, profile) in [("uniform", DemandProfile::Uniform), ("calibrated", cal.demand_profile)] {
        let load = GridLoad::Pol { demand_a: 1000.0, profile };
        let problem = build_problem(&plan, &sites, 1.0, load, &settings)?;
        let solution = solve_dc(&problem)?;
        let spread = current_spread(&solution);
        let v_min = solution.node_voltages.iter().copied().fold(f64::INFINITY, f64::min);
        println!(
            "{label:<10} {}x{} nodes: VR currents {:.2}-{:.2} A, plane loss {:.2} W, lowest node {:.4} V",
            problem.grid.nx, problem.grid.ny, spread.min_a, spread.max_a, solution.horizontal_loss_w, v_min
        );
        if let Some(path) = std::env::args().nth(1) {
            let file = std::fs::File::create(format!("{path}-{label}.csv"))?;
            write_voltage_csv(&problem.grid, &solution, file)?;
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
