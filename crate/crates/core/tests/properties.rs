use proptest::prelude::*;

use pdnx::architecture::{evaluate, preset_spec, EvalSettings, Preset, PresetOptions};
use pdnx::converter::StageConverter;
use pdnx::dataset::Datasets;
use pdnx::pdn_grid::{solve_dc, solve_dc_with, GridProblem, ResistiveGrid, SinkNode, SolverKind, SourceNode};

fn data() -> Datasets {
    Datasets::builtin().unwrap()
}

/// Dense nodal oracle: Gaussian elimination with partial pivoting on the
/// full Laplacian plus access conductances.
fn dense_voltages(p: &GridProblem) -> Vec<f64> {
    let n = p.grid.node_count();
    let g = 1.0 / p.grid.sheet_resistance_ohm_sq;
    let mut a = vec![vec![0.0; n]; n];
    let mut b = vec![0.0; n];
    for (u, w) in p.grid.edges() {
        a[u][u] += g;
        a[w][w] += g;
        a[u][w] -= g;
        a[w][u] -= g;
    }
    for s in &p.sources {
        a[s.node][s.node] += 1.0 / s.access_resistance_ohm;
        b[s.node] += s.voltage_v / s.access_resistance_ohm;
    }
    for k in &p.sinks {
        b[k.node] -= k.current_a;
    }
    for k in 0..n {
        let piv = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
        a.swap(k, piv);
        b.swap(k, piv);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x
}

/// A random grid with distinct source nodes and loads on the rest.
fn grid_problem(max_side: usize) -> impl Strategy<Value = GridProblem> {
    (2..=max_side, 2..=max_side, 1e-4..1e-1f64, 0.1..10.0f64).prop_flat_map(|(nx, ny, sheet, access_sq)| {
        let n = nx * ny;
        (
            proptest::sample::subsequence((0..n).collect::<Vec<_>>(), 1..n),
            proptest::collection::vec(0.0..5.0f64, n),
        )
            .prop_map(move |(src, loads)| {
                let grid = ResistiveGrid::new(nx, ny, 1.0, sheet).unwrap();
                let sources: Vec<SourceNode> = src
                    .iter()
                    .map(|&node| SourceNode {
                        node,
                        voltage_v: 1.0,
                        access_resistance_ohm: access_sq * sheet,
                    })
                    .collect();
                let sinks = (0..n)
                    .filter(|node| !src.contains(node))
                    .map(|node| SinkNode {
                        node,
                        current_a: loads[node],
                    })
                    .collect();
                GridProblem { grid, sources, sinks }
            })
    })
}

fn scaled_sheet(p: &GridProblem, k: f64) -> GridProblem {
    let mut q = p.clone();
    q.grid.sheet_resistance_ohm_sq *= k;
    for s in &mut q.sources {
        s.access_resistance_ohm *= k;
    }
    q
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matches_dense_oracle(p in grid_problem(4)) {
        let s = solve_dc(&p).unwrap();
        let v = dense_voltages(&p);
        let scale = v.iter().map(|x| (1.0 - x).abs()).fold(1e-300, f64::max);
        for (a, b) in s.node_voltages.iter().zip(&v) {
            prop_assert!((a - b).abs() <= 1e-12 * scale.max(1e-3), "{a} vs {b}");
        }
    }

    #[test]
    fn kirchhoff_conservation(p in grid_problem(8)) {
        let s = solve_dc(&p).unwrap();
        let demand = p.total_sink_current();
        let supplied: f64 = s.vr_currents.iter().sum();
        prop_assert!((supplied - demand).abs() <= 1e-8 * demand.max(1e-12));
    }

    #[test]
    fn maximum_principle(p in grid_problem(8)) {
        let s = solve_dc(&p).unwrap();
        for &v in &s.node_voltages {
            prop_assert!(v <= 1.0 + 1e-12);
        }
        // every VR sources current when all loads draw
        for &i in &s.vr_currents {
            prop_assert!(i >= -1e-9);
        }
    }

    #[test]
    fn sheet_resistance_scaling(p in grid_problem(6), k in 0.1..10.0f64) {
        let a = solve_dc(&p).unwrap();
        let b = solve_dc(&scaled_sheet(&p, k)).unwrap();
        prop_assert!((b.horizontal_loss_w - k * a.horizontal_loss_w).abs() <= 1e-12 * (k * a.horizontal_loss_w).max(1e-300));
        for (x, y) in a.vr_currents.iter().zip(&b.vr_currents) {
            prop_assert!((x - y).abs() <= 1e-10 * x.abs().max(1.0));
        }
    }

    #[test]
    fn superposition(p in grid_problem(6)) {
        let full = solve_dc(&p).unwrap();
        let mut half = p.clone();
        for k in &mut half.sinks {
            k.current_a *= 0.5;
        }
        let h = solve_dc(&half).unwrap();
        for (x, y) in full.vr_currents.iter().zip(&h.vr_currents) {
            prop_assert!((x - 2.0 * y).abs() <= 1e-9 * x.abs().max(1.0));
        }
    }

    #[test]
    fn solvers_agree(p in grid_problem(8)) {
        let a = solve_dc_with(&p, SolverKind::BandedCholesky).unwrap();
        let b = solve_dc_with(&p, SolverKind::ConjugateGradient).unwrap();
        for (x, y) in a.node_voltages.iter().zip(&b.node_voltages) {
            prop_assert!((x - y).abs() <= 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn energy_balance(area in 400.0..900.0f64, power in 500.0..1000.0f64, proposed in any::<bool>()) {
        let d = data();
        let opts = PresetOptions { die_area_mm2: area, total_power_w: power, ..Default::default() };
        let preset = if proposed { Preset::A2 } else { Preset::A1 };
        let spec = preset_spec(preset, "DSCH", &d, &opts).unwrap();
        let b = evaluate(&spec, &d.calibration, &EvalSettings::default()).unwrap();
        let pol = power;
        prop_assert!((b.source_power_w - (pol + b.total_loss_w)).abs() <= 1e-9 * b.source_power_w);
        prop_assert!((b.source_power_w - b.source_voltage_v * b.source_current_a).abs() <= 1e-9 * b.source_power_w);
    }

    #[test]
    fn resistivity_never_lowers_loss(level in 0usize..4, factor in 1.0..20.0f64, preset in 0usize..3) {
        let d = data();
        let p = [Preset::A0, Preset::A1, Preset::A2][preset];
        let spec = preset_spec(p, "DSCH", &d, &PresetOptions::default()).unwrap();
        let mut worse = spec.clone();
        let l = &mut worse.stack.levels[level].level;
        l.resistivity_ohm_m = Some(l.resistivity() * factor);
        let s = EvalSettings::default();
        let a = evaluate(&spec, &d.calibration, &s).unwrap();
        let b = evaluate(&worse, &d.calibration, &s).unwrap();
        prop_assert!(b.total_loss_w >= a.total_loss_w - 1e-9 * a.total_loss_w);
    }

    #[test]
    fn efficiency_never_raises_loss(gain in 0.0..0.08f64, preset in 0usize..4) {
        let d = data();
        let p = [Preset::A1, Preset::A2, Preset::A3At12V, Preset::A3At6V][preset];
        let spec = preset_spec(p, "DSCH", &d, &PresetOptions::default()).unwrap();
        let mut better = spec.clone();
        for stage in &mut better.stages {
            if let StageConverter::Calibrated(t) = &mut stage.converter {
                t.eta_peak = (t.eta_peak + gain).min(1.0);
            }
        }
        let s = EvalSettings::default();
        let a = evaluate(&spec, &d.calibration, &s).unwrap();
        let b = evaluate(&better, &d.calibration, &s).unwrap();
        prop_assert!(b.total_loss_w <= a.total_loss_w + 1e-9 * a.total_loss_w);
    }
}

#[test]
fn grid_refinement_converges() {
    let d = data();
    let mut fine = d.calibration.clone();
    fine.grid_resolution = 2 * d.calibration.grid_resolution;
    for p in [Preset::A1, Preset::A2] {
        let spec = preset_spec(p, "DSCH", &d, &PresetOptions::default()).unwrap();
        let s = EvalSettings::default();
        let a = evaluate(&spec, &d.calibration, &s).unwrap().horizontal_loss_w;
        let b = evaluate(&spec, &fine, &s).unwrap().horizontal_loss_w;
        assert!((a - b).abs() / a < 0.05, "{}: {a} W at default resolution, {b} W refined", p.name());
    }
}

#[test]
fn ideal_converters_scale_domain_current() {
    let d = data();
    let mut cal = d.calibration.clone();
    cal.sheet_resistance_ohm_sq = 0.0;
    cal.pcb_lateral_resistance_ohm = 0.0;
    let mut spec = preset_spec(Preset::A3At12V, "DSCH", &d, &PresetOptions::default()).unwrap();
    for stage in &mut spec.stages {
        if let StageConverter::Calibrated(t) = &mut stage.converter {
            t.eta_peak = 1.0;
        }
    }
    for s in &mut spec.stack.levels {
        s.level.resistivity_ohm_m = Some(0.0);
    }
    let b = evaluate(&spec, &cal, &EvalSettings::default()).unwrap();
    assert!((b.source_current_a - 1000.0 / 48.0).abs() < 1e-9);
    for l in &b.vertical {
        assert!((l.current_a * l.domain_voltage_v - 1000.0).abs() < 1e-9, "{}", l.level);
    }
}
