//! Model parameters that no datasheet provides, and the search that fits
//! them to observed system-level figures.
//!
//! The fit proceeds in a fixed order, each step holding the earlier results:
//! 1. VR access resistance and demand profile from the per-VR current
//!    spreads (a fixed search grid; currents do not depend on the plane's
//!    sheet resistance because access resistance is counted in squares),
//! 2. sheet resistance and board lateral resistance from the total losses
//!    of the proposed and reference architectures (bisection),
//! 3. per-connection ampacities from connection utilizations,
//! 4. the die-attach ampacity from the reference minimum die area.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::architecture::{
    evaluate, min_die_area_for_current, preset_spec, stage_layout, EvalSettings, LossBreakdown, Preset,
    PresetOptions,
};
use crate::dataset::Datasets;
use crate::error::{Error, Result};
use crate::interconnect::{connection_count, LevelLimits, UtilizationPolicy};
use crate::pdn_grid::{build_problem, CurrentSpread, DcSolver, DemandProfile, GridLoad, GridSettings, SolverKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub target: f64,
    pub achieved: f64,
    pub relative_error: f64,
}

impl Residual {
    fn new(target: f64, achieved: f64) -> Self {
        Residual {
            target,
            achieved,
            relative_error: if target == 0.0 {
                achieved
            } else {
                (achieved - target) / target
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// Per plane; the ground plane mirrors it.
    pub sheet_resistance_ohm_sq: f64,
    /// VR-to-plane access resistance, in squares of the plane.
    pub vr_access_squares: f64,
    pub demand_profile: DemandProfile,
    /// Round-trip board trace resistance ahead of the package.
    pub pcb_lateral_resistance_ohm: f64,
    pub grid_resolution: usize,
    pub policy: UtilizationPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub targets: Option<CalibrationTargets>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub residuals: BTreeMap<String, Residual>,
}

impl Calibration {
    /// Starting point of a fit: usage caps only, unit ampacities, uniform
    /// demand, no board resistance.
    pub fn uncalibrated() -> Self {
        let mut policy = UtilizationPolicy::default();
        for (name, cap) in [("bga", 0.6), ("c4", 0.85), ("tsv", 1.0), ("ubump", 1.0), ("cu_pad", 1.0)] {
            policy.levels.insert(
                name.into(),
                LevelLimits {
                    max_usage_fraction: cap,
                    ampacity_a: 1.0,
                },
            );
        }
        Calibration {
            name: "uncalibrated".into(),
            description: String::new(),
            sheet_resistance_ohm_sq: 1e-3,
            vr_access_squares: 0.0,
            demand_profile: DemandProfile::Uniform,
            pcb_lateral_resistance_ohm: 0.0,
            grid_resolution: GridSettings::DEFAULT_RESOLUTION,
            policy,
            targets: None,
            residuals: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sheet_resistance_ohm_sq >= 0.0 && self.sheet_resistance_ohm_sq.is_finite()) {
            return Err(Error::invalid("calibration", "sheet_resistance_ohm_sq must be >= 0"));
        }
        if !(self.vr_access_squares >= 0.0) {
            return Err(Error::invalid("calibration", "vr_access_squares must be >= 0"));
        }
        if !(self.pcb_lateral_resistance_ohm >= 0.0) {
            return Err(Error::invalid("calibration", "pcb_lateral_resistance_ohm must be >= 0"));
        }
        if self.grid_resolution < 2 {
            return Err(Error::invalid("calibration", "grid_resolution must be >= 2"));
        }
        self.demand_profile.validate()?;
        self.policy.validate()
    }
}

/// Observed figures to fit. Absent entries are not fitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationTargets {
    /// Reference architecture total loss, % of total power.
    pub a0_loss_pct: Option<f64>,
    /// Periphery architecture total loss, % of total power.
    pub a1_loss_pct: Option<f64>,
    /// Per-VR current range [min, max] of the periphery architecture, A.
    pub a1_spread: Option<[f64; 2]>,
    /// Per-VR current range of the under-die architecture, A.
    pub a2_spread: Option<[f64; 2]>,
    /// Per-level connection utilization of the periphery architecture.
    pub utilizations: BTreeMap<String, f64>,
    /// Reference architecture minimum die area, mm².
    pub min_die_area_mm2: Option<f64>,
    /// Converter used in the fitted architectures.
    pub topology: String,
    /// Die-attach level whose ampacity sets the minimum die area.
    pub min_die_level: String,
}

impl Default for CalibrationTargets {
    fn default() -> Self {
        CalibrationTargets {
            a0_loss_pct: None,
            a1_loss_pct: None,
            a1_spread: None,
            a2_spread: None,
            utilizations: BTreeMap::new(),
            min_die_area_mm2: None,
            topology: "DSCH".into(),
            min_die_level: "ubump".into(),
        }
    }
}

impl CalibrationTargets {
    /// Figures the shipped calibration is fitted to.
    pub fn reference() -> Self {
        CalibrationTargets {
            a0_loss_pct: Some(42.0),
            a1_loss_pct: Some(20.0),
            a1_spread: Some([16.0, 27.0]),
            a2_spread: Some([10.0, 93.0]),
            utilizations: [("bga", 0.01), ("c4", 0.02), ("tsv", 0.10), ("cu_pad", 0.15)]
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
            min_die_area_mm2: Some(1200.0),
            ..Default::default()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.a0_loss_pct.is_none()
            && self.a1_loss_pct.is_none()
            && self.a1_spread.is_none()
            && self.a2_spread.is_none()
            && self.utilizations.is_empty()
            && self.min_die_area_mm2.is_none()
    }
}

/// Fixed grid for the access-resistance and demand-profile search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpreadSearch {
    pub access_squares: Vec<f64>,
    pub sigma_fracs: Vec<f64>,
    pub peak_ratios: Vec<f64>,
}

impl Default for SpreadSearch {
    fn default() -> Self {
        SpreadSearch {
            access_squares: (0..30).map(|k| 0.5 * 1.1_f64.powi(k)).collect(),
            sigma_fracs: vec![0.15, 0.2, 0.25, 0.3],
            peak_ratios: vec![1.0, 2.0, 4.0, 8.0, 16.0, 32.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpreadCandidate {
    pub access_squares: f64,
    pub profile: DemandProfile,
    pub a1: CurrentSpread,
    pub a2: CurrentSpread,
    pub objective: f64,
}

fn range_error(spread: &CurrentSpread, target: [f64; 2]) -> f64 {
    (spread.min_a - target[0]).abs() / target[0] + (spread.max_a - target[1]).abs() / target[1]
}

/// Search the spread grid. With an under-die target, candidates must keep
/// every under-die VR within its rating and produce a wider spread than the
/// periphery arrangement; the under-die range then only contributes to the
/// objective.
pub fn fit_spreads(
    data: &Datasets,
    base: &Calibration,
    targets: &CalibrationTargets,
    opts: &PresetOptions,
    search: &SpreadSearch,
) -> Result<SpreadCandidate> {
    let a1 = preset_spec(Preset::A1, &targets.topology, data, opts)?;
    let a2 = preset_spec(Preset::A2, &targets.topology, data, opts)?;
    let rating = data.converters.topology(&targets.topology)?.i_max_a;
    let sites1 = stage_layout(&a1, 0, 1.0)?.sites;
    let sites2 = stage_layout(&a2, 0, 1.0)?.sites;
    let demand = a1.pol_current();

    let mut best: Option<SpreadCandidate> = None;
    for &access in &search.access_squares {
        let settings = GridSettings {
            resolution: base.grid_resolution,
            sheet_resistance_ohm_sq: 1e-3,
            access_squares: access,
            solver: SolverKind::BandedCholesky,
        };
        let uniform = GridLoad::Pol {
            demand_a: demand,
            profile: DemandProfile::Uniform,
        };
        let p1 = build_problem(&a1.die, &sites1, 1.0, uniform, &settings)?;
        let p2 = build_problem(&a2.die, &sites2, 1.0, uniform, &settings)?;
        let s1 = DcSolver::new(&p1, SolverKind::BandedCholesky)?;
        let s2 = DcSolver::new(&p2, SolverKind::BandedCholesky)?;
        for &sigma in &search.sigma_fracs {
            for &peak in &search.peak_ratios {
                let profile = if peak == 1.0 {
                    DemandProfile::Uniform
                } else {
                    DemandProfile::CenterPeaked {
                        peak_ratio: peak,
                        sigma_frac: sigma,
                    }
                };
                let load = GridLoad::Pol {
                    demand_a: demand,
                    profile,
                };
                let q1 = build_problem(&a1.die, &sites1, 1.0, load, &settings)?;
                let q2 = build_problem(&a2.die, &sites2, 1.0, load, &settings)?;
                let c1 = CurrentSpread::of(&s1.solve(&q1.sinks)?.vr_currents);
                let c2 = CurrentSpread::of(&s2.solve(&q2.sinks)?.vr_currents);
                let mut objective = 0.0;
                if let Some(t) = targets.a1_spread {
                    objective += range_error(&c1, t);
                }
                if let Some(t) = targets.a2_spread {
                    if c2.max_a > rating || c2.width() <= c1.width() {
                        continue;
                    }
                    objective += range_error(&c2, t);
                }
                if best.is_none_or(|b| objective < b.objective) {
                    best = Some(SpreadCandidate {
                        access_squares: access,
                        profile,
                        a1: c1,
                        a2: c2,
                        objective,
                    });
                }
            }
        }
    }
    best.ok_or_else(|| Error::TargetUnreachable {
        target: "a2_spread".into(),
        detail: "no candidate keeps the under-die VRs within rating with a wider spread".into(),
    })
}

/// Bisection for `f(x) = target` on an increasing `f`; log-spaced when
/// `log` is set.
fn bisect(
    name: &str,
    target: f64,
    mut lo: f64,
    mut hi: f64,
    log: bool,
    mut f: impl FnMut(f64) -> Result<f64>,
) -> Result<f64> {
    let (flo, fhi) = (f(lo)?, f(hi)?);
    if !(flo <= target && target <= fhi) {
        return Err(Error::TargetUnreachable {
            target: name.into(),
            detail: format!("target {target} outside the reachable range [{flo:.4}, {fhi:.4}]"),
        });
    }
    for _ in 0..100 {
        let mid = if log { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
        if f(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) <= 1e-12 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn eval_preset(data: &Datasets, cal: &Calibration, preset: Preset, topology: &str, opts: &PresetOptions) -> Result<LossBreakdown> {
    let spec = preset_spec(preset, topology, data, opts)?;
    evaluate(&spec, cal, &EvalSettings::default())
}

/// Fit `base` to `targets`. Empty targets return `base` unchanged.
pub fn calibrate(
    data: &Datasets,
    base: &Calibration,
    targets: &CalibrationTargets,
    opts: &PresetOptions,
) -> Result<Calibration> {
    if targets.is_empty() {
        return Ok(base.clone());
    }
    base.validate()?;
    let mut cal = base.clone();
    cal.name = "calibration-user".into();
    cal.targets = Some(targets.clone());
    cal.residuals.clear();
    let topo = targets.topology.as_str();

    if targets.a1_spread.is_some() || targets.a2_spread.is_some() {
        let best = fit_spreads(data, &cal, targets, opts, &SpreadSearch::default())?;
        cal.vr_access_squares = best.access_squares;
        cal.demand_profile = best.profile;
    }

    // the two losses interact only weakly through the supply rail
    for _ in 0..3 {
        if let Some(t) = targets.a1_loss_pct {
            cal.sheet_resistance_ohm_sq = bisect("a1_loss_pct", t, 1e-7, 1e-1, true, |r| {
                let c = Calibration {
                    sheet_resistance_ohm_sq: r,
                    ..cal.clone()
                };
                Ok(eval_preset(data, &c, Preset::A1, topo, opts)?.total_loss_pct)
            })?;
        }
        if let Some(t) = targets.a0_loss_pct {
            cal.pcb_lateral_resistance_ohm = bisect("a0_loss_pct", t, 0.0, 1e-2, false, |r| {
                let c = Calibration {
                    pcb_lateral_resistance_ohm: r,
                    ..cal.clone()
                };
                Ok(eval_preset(data, &c, Preset::A0, topo, opts)?.total_loss_pct)
            })?;
        }
    }

    if !targets.utilizations.is_empty() {
        let a1 = eval_preset(data, &cal, Preset::A1, topo, opts)?;
        for (level, &target) in &targets.utilizations {
            let l = a1.vertical.iter().find(|l| &l.level == level).ok_or_else(|| Error::TargetUnreachable {
                target: format!("utilizations.{level}"),
                detail: "level is not part of the periphery architecture".into(),
            })?;
            let per_net = (target * l.available_connections as f64 / 2.0).round().max(1.0);
            let limits = cal.policy.levels.entry(level.clone()).or_default();
            // ceil(I / a) lands exactly on per_net
            limits.ampacity_a = l.current_a / (per_net - 0.5);
        }
    }

    if let Some(area) = targets.min_die_area_mm2 {
        let level = data
            .interconnect
            .level_for_die(&targets.min_die_level, area)?;
        let limits = cal.policy.limits(&targets.min_die_level);
        let per_net = (limits.max_usage_fraction * connection_count(&level) as f64 / 2.0).floor();
        if per_net < 1.0 {
            return Err(Error::TargetUnreachable {
                target: "min_die_area_mm2".into(),
                detail: format!("`{}` has no usable connections at {area} mm2", targets.min_die_level),
            });
        }
        let demand = opts.total_power_w / opts.pol_voltage_v;
        cal.policy
            .levels
            .entry(targets.min_die_level.clone())
            .or_default()
            .ampacity_a = demand / (per_net - 0.5);
    }

    record_residuals(data, &mut cal, targets, opts)?;
    Ok(cal)
}

/// Evaluate the fitted figures and store target-versus-achieved pairs.
pub fn record_residuals(
    data: &Datasets,
    cal: &mut Calibration,
    targets: &CalibrationTargets,
    opts: &PresetOptions,
) -> Result<()> {
    let topo = targets.topology.as_str();
    let a0 = eval_preset(data, cal, Preset::A0, topo, opts)?;
    let a1 = eval_preset(data, cal, Preset::A1, topo, opts)?;
    let a2 = eval_preset(data, cal, Preset::A2, topo, opts)?;
    let mut r = BTreeMap::new();
    if let Some(t) = targets.a0_loss_pct {
        r.insert("a0_loss_pct".into(), Residual::new(t, a0.total_loss_pct));
    }
    if let Some(t) = targets.a1_loss_pct {
        r.insert("a1_loss_pct".into(), Residual::new(t, a1.total_loss_pct));
    }
    for (key, t, b) in [("a1_spread", targets.a1_spread, &a1), ("a2_spread", targets.a2_spread, &a2)] {
        if let Some([lo, hi]) = t {
            let s = &b.stages.last().unwrap().spread;
            r.insert(format!("{key}.min_a"), Residual::new(lo, s.min_a));
            r.insert(format!("{key}.max_a"), Residual::new(hi, s.max_a));
        }
    }
    for (level, &t) in &targets.utilizations {
        if let Some(l) = a1.vertical.iter().find(|l| &l.level == level) {
            r.insert(format!("utilization.{level}"), Residual::new(t, l.utilization));
        }
    }
    if let Some(t) = targets.min_die_area_mm2 {
        let spec = preset_spec(Preset::A0, topo, data, &PresetOptions {
            die_area_mm2: data.interconnect.reference_die_area_mm2,
            ..opts.clone()
        })?;
        let found = min_die_area_for_current(
            spec.pol_current(),
            &cal.policy,
            &spec.stack,
            data.interconnect.reference_die_area_mm2,
            1.0,
        )?;
        r.insert("min_die_area_mm2".into(), Residual::new(t, found.die_area_mm2));
    }
    cal.residuals = r;
    Ok(())
}
