//! Every example runs to completion; the calibration example reproduces the
//! shipped dataset.

macro_rules! example {
    ($name:ident) => {
        mod $name {
            include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/", stringify!($name), ".rs"));
        }
    };
}

example!(interconnect_levels);
example!(converter_efficiency);
example!(vr_placement);
example!(grid_solve);
example!(evaluate_architecture);
example!(compare_architectures);
example!(feasibility_die_area);
example!(sweep_sheet_resistance);
example!(fit_calibration);
example!(cli_config);

#[test]
fn interconnect_levels_runs() {
    interconnect_levels::run_example().unwrap();
}

#[test]
fn converter_efficiency_runs() {
    converter_efficiency::run_example().unwrap();
}

#[test]
fn vr_placement_runs() {
    vr_placement::run_example().unwrap();
}

#[test]
fn grid_solve_runs() {
    grid_solve::run_example().unwrap();
}

#[test]
fn evaluate_architecture_runs() {
    evaluate_architecture::run_example().unwrap();
}

#[test]
fn compare_architectures_runs() {
    compare_architectures::run_example().unwrap();
}

#[test]
fn feasibility_die_area_runs() {
    feasibility_die_area::run_example().unwrap();
}

#[test]
fn sweep_sheet_resistance_runs() {
    sweep_sheet_resistance::run_example().unwrap();
}

#[test]
fn cli_config_runs() {
    cli_config::run_example().unwrap();
}

#[test]
fn refitting_reproduces_shipped_calibration() {
    let fitted = fit_calibration::fitted_defaults().unwrap();
    let shipped = pdnx::dataset::builtin_calibration().unwrap();
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * b.abs().max(1e-300);
    assert!(close(fitted.sheet_resistance_ohm_sq, shipped.sheet_resistance_ohm_sq));
    assert!(close(fitted.pcb_lateral_resistance_ohm, shipped.pcb_lateral_resistance_ohm));
    assert!(close(fitted.vr_access_squares, shipped.vr_access_squares));
    assert_eq!(fitted.demand_profile, shipped.demand_profile);
    assert_eq!(fitted.grid_resolution, shipped.grid_resolution);
    for (name, l) in &shipped.policy.levels {
        let f = fitted.policy.limits(name);
        assert!(close(f.ampacity_a, l.ampacity_a), "{name}");
        assert_eq!(f.max_usage_fraction, l.max_usage_fraction, "{name}");
    }
}
