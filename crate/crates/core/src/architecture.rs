//! End-to-end evaluation of a power delivery architecture.
//!
//! An architecture is a chain of conversion stages between the board supply
//! and the die, plus the vertical interconnect stack with each level
//! assigned to the voltage domain it carries. Voltage domain 0 is the supply
//! rail; domain `k` is the output rail of stage `k - 1`, so the last domain
//! is the point-of-load rail.
//!
//! Evaluation walks from the die back to the supply. Each domain's loads
//! (the die, or the next stage's VRs) are fed through the plane of the
//! stage that drives it, and the stage's converter losses follow from the
//! per-VR currents the plane solve produces.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::Calibration;
use crate::converter::{
    calibrate, required_vr_count, stage_loss_unchecked, vr_footprint_area, ConverterTopology, FlatConverter,
    StageConverter,
};
use crate::dataset::Datasets;
use crate::error::{Error, Result};
use crate::interconnect::{
    allotted_power_connections, connection_count, effective_level_resistance, required_connections,
    InterconnectStack, UtilizationPolicy,
};
use crate::pdn_grid::{
    build_problem, CurrentSpread, DcSolver, GridLoad, GridSettings, PointLoad, SolverKind,
};
use crate::placement::{place_periphery, place_under_die, DieFloorplan, VrSite, UNDER_DIE_OCCUPANCY_GUIDE};

/// Relative change at which the supply-current iteration stops.
pub const FIXED_POINT_TOLERANCE: f64 = 1e-9;
pub const MAX_ITERATIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    Pcb,
    InterposerPeriphery,
    InInterposer,
    PowerDie,
}

impl Placement {
    pub fn as_str(self) -> &'static str {
        match self {
            Placement::Pcb => "pcb",
            Placement::InterposerPeriphery => "interposer_periphery",
            Placement::InInterposer => "in_interposer",
            Placement::PowerDie => "power_die",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSpec {
    pub converter: StageConverter,
    pub placement: Placement,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vr_count_override: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub name: String,
    pub stages: Vec<StageSpec>,
    pub stack: InterconnectStack,
    /// Voltage domain of each stack level, in stack order.
    pub level_domains: Vec<usize>,
    /// Domain carried by the board-level lateral path.
    pub pcb_lateral_domain: usize,
    pub die: DieFloorplan,
    pub total_power_w: f64,
    pub pol_voltage_v: f64,
}

fn rel_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs())
}

impl ArchitectureSpec {
    pub fn validate(&self) -> Result<()> {
        let what = || format!("architecture `{}`", self.name);
        if self.stages.is_empty() {
            return Err(Error::invalid(what(), "needs at least one conversion stage"));
        }
        for w in self.stages.windows(2) {
            if !rel_eq(w[0].converter.v_out(), w[1].converter.v_in()) {
                return Err(Error::invalid(what(), "stage output and next stage input voltages differ"));
            }
        }
        if !rel_eq(self.stages.last().unwrap().converter.v_out(), self.pol_voltage_v) {
            return Err(Error::invalid(what(), "last stage must deliver the point-of-load voltage"));
        }
        for s in &self.stages {
            match &s.converter {
                StageConverter::Calibrated(t) => t.validate()?,
                StageConverter::Flat(f) => {
                    if !(f.efficiency > 0.0 && f.efficiency <= 1.0) {
                        return Err(Error::invalid(what(), "flat converter efficiency must lie in (0, 1]"));
                    }
                    if s.placement != Placement::Pcb {
                        return Err(Error::invalid(what(), "flat converters are board-level only"));
                    }
                }
            }
            if s.vr_count_override == Some(0) {
                return Err(Error::invalid(what(), "vr_count_override must be >= 1"));
            }
        }
        for w in self.stages.windows(2) {
            if w[0].placement != Placement::Pcb && w[1].placement == Placement::Pcb {
                return Err(Error::invalid(what(), "a board-level stage cannot follow an on-package stage"));
            }
        }
        self.stack.validate()?;
        if self.level_domains.len() != self.stack.levels.len() {
            return Err(Error::invalid(what(), "every stack level needs exactly one voltage domain"));
        }
        let n = self.stages.len();
        if self.level_domains.iter().any(|&d| d > n) || self.pcb_lateral_domain > n {
            return Err(Error::invalid(what(), "voltage domain index out of range"));
        }
        self.die.validate()?;
        if !(self.total_power_w > 0.0 && self.pol_voltage_v > 0.0) {
            return Err(Error::invalid(what(), "total power and POL voltage must be > 0"));
        }
        Ok(())
    }

    pub fn domain_voltage(&self, domain: usize) -> f64 {
        if domain == 0 {
            self.stages[0].converter.v_in()
        } else {
            self.stages[domain - 1].converter.v_out()
        }
    }

    pub fn pol_current(&self) -> f64 {
        self.total_power_w / self.pol_voltage_v
    }

    /// Topology of the stage closest to the die.
    pub fn final_topology(&self) -> &str {
        self.stages.last().unwrap().converter.name()
    }
}

/// Knobs that are not part of the architecture itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    /// Rating and cap violations become errors.
    pub strict: bool,
    /// Idle VRs stop switching.
    pub idle_shutdown: bool,
    /// Fraction of the rating used when deriving VR counts.
    pub derating: f64,
    pub solver: SolverKind,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            strict: false,
            idle_shutdown: false,
            derating: 1.0,
            solver: SolverKind::BandedCholesky,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Warn,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityCheck {
    pub check: String,
    pub status: CheckStatus,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub level: String,
    pub domain_voltage_v: f64,
    pub current_a: f64,
    pub power_connections: u64,
    pub loss_w: f64,
    /// Connections needed at the level's ampacity (power plus ground).
    pub required_connections: u64,
    pub available_connections: u64,
    pub utilization: f64,
    pub cap: f64,
    pub max_current_a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneReport {
    pub name: String,
    pub domain_voltage_v: f64,
    pub current_a: f64,
    pub loss_w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub converter: String,
    pub placement: Placement,
    pub v_in_v: f64,
    pub v_out_v: f64,
    pub vr_count: usize,
    pub vr_count_overridden: bool,
    pub output_power_w: f64,
    pub input_power_w: f64,
    pub loss_w: f64,
    pub vr_currents_a: Vec<f64>,
    pub spread: CurrentSpread,
    pub rating_a: Option<f64>,
    pub occupancy: Option<f64>,
    pub rings: Option<usize>,
}

/// Loss breakdown of one evaluated architecture. Percentages are relative to
/// the nominal total power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub architecture: String,
    pub topology: String,
    pub total_power_w: f64,
    pub pol_voltage_v: f64,
    pub source_voltage_v: f64,
    pub source_current_a: f64,
    pub source_power_w: f64,
    pub vertical: Vec<LevelReport>,
    pub horizontal: Vec<PlaneReport>,
    pub stages: Vec<StageReport>,
    pub vertical_loss_w: f64,
    pub horizontal_loss_w: f64,
    pub ppdn_loss_w: f64,
    pub converter_loss_w: f64,
    pub total_loss_w: f64,
    pub vertical_loss_pct: f64,
    pub horizontal_loss_pct: f64,
    pub ppdn_loss_pct: f64,
    pub converter_loss_pct: f64,
    pub total_loss_pct: f64,
    pub efficiency: f64,
    /// Per-VR currents of the stage feeding the die.
    pub per_vr_currents_a: Vec<f64>,
    pub feasibility: Vec<FeasibilityCheck>,
    pub assumptions: Vec<String>,
    pub iterations: usize,
}

impl LossBreakdown {
    pub fn has_failures(&self) -> bool {
        self.feasibility.iter().any(|c| c.status == CheckStatus::Fail)
    }

    pub fn rating_violated(&self) -> bool {
        self.feasibility
            .iter()
            .any(|c| c.status == CheckStatus::Fail && c.check.starts_with("rating:"))
    }
}

/// VR sites of a stage; empty for board-level stages.
#[derive(Debug, Clone, PartialEq)]
pub struct StageLayout {
    pub vr_count: usize,
    pub overridden: bool,
    pub sites: Vec<VrSite>,
    pub occupancy: Option<f64>,
}

pub fn stage_layout(spec: &ArchitectureSpec, stage: usize, derating: f64) -> Result<StageLayout> {
    let s = &spec.stages[stage];
    let topology = match (&s.converter, s.placement) {
        (_, Placement::Pcb) | (StageConverter::Flat(_), _) => {
            return Ok(StageLayout {
                vr_count: s.vr_count_override.unwrap_or(1),
                overridden: s.vr_count_override.is_some(),
                sites: Vec::new(),
                occupancy: None,
            })
        }
        (StageConverter::Calibrated(t), _) => t,
    };
    let out_current = spec.total_power_w / topology.v_out_v;
    let n = required_vr_count(topology, out_current, derating, s.vr_count_override)?;
    let fp = vr_footprint_area(topology);
    let (sites, occupancy) = match s.placement {
        Placement::InterposerPeriphery => (place_periphery(&spec.die, n, fp)?, None),
        _ => {
            let u = place_under_die(&spec.die, n, fp)?;
            (u.sites, Some(u.occupancy))
        }
    };
    Ok(StageLayout {
        vr_count: n,
        overridden: s.vr_count_override.is_some(),
        sites,
        occupancy,
    })
}

pub fn grid_settings(cal: &Calibration, solver: SolverKind) -> GridSettings {
    GridSettings {
        resolution: cal.grid_resolution,
        sheet_resistance_ohm_sq: cal.sheet_resistance_ohm_sq,
        access_squares: cal.vr_access_squares,
        solver,
    }
}

/// Per-VR output currents and plane loss for a sited stage feeding `load`.
/// A zero sheet resistance stands for an ideal plane with equal sharing.
fn solve_plane(
    spec: &ArchitectureSpec,
    sites: &[VrSite],
    rail_v: f64,
    load: GridLoad<'_>,
    cal: &Calibration,
    solver: SolverKind,
) -> Result<(Vec<f64>, f64)> {
    if cal.sheet_resistance_ohm_sq == 0.0 {
        let total = match load {
            GridLoad::Pol { demand_a, .. } => demand_a,
            GridLoad::Points(p) => p.iter().map(|p| p.current_a).sum(),
        };
        return Ok((vec![total / sites.len() as f64; sites.len()], 0.0));
    }
    let problem = build_problem(&spec.die, sites, rail_v, load, &grid_settings(cal, solver))?;
    let sol = DcSolver::new(&problem, solver)?.solve(&problem.sinks)?;
    Ok((sol.vr_currents, sol.horizontal_loss_w))
}

/// Solve V·I = P + R·I² for the smaller root by fixed-point iteration.
fn supply_current(v: f64, p: f64, r: f64) -> Result<(f64, usize)> {
    let mut i = p / v;
    if r == 0.0 || p == 0.0 {
        return Ok((i, 1));
    }
    let mut damping = 1.0;
    let mut last_step = 0.0_f64;
    for k in 1..=MAX_ITERATIONS {
        let next = (p + r * i * i) / v;
        let step = next - i;
        if step * last_step < 0.0 {
            damping = 0.5;
        }
        let updated = i + damping * step;
        let change = (updated - i).abs() / updated.abs().max(f64::MIN_POSITIVE);
        i = updated;
        last_step = step;
        if !i.is_finite() {
            break;
        }
        if change < FIXED_POINT_TOLERANCE {
            return Ok((i, k));
        }
    }
    Err(Error::NoConvergence {
        iterations: MAX_ITERATIONS,
        last_change: ((p + r * i * i) / v - i).abs() / i.abs(),
    })
}

struct DomainLoss {
    levels: Vec<LevelReport>,
    lateral: Option<PlaneReport>,
    series_r: f64,
}

fn domain_levels(spec: &ArchitectureSpec, cal: &Calibration, domain: usize) -> Result<DomainLoss> {
    let mut levels = Vec::new();
    let mut series_r = 0.0;
    for (s, &d) in spec.stack.levels.iter().zip(&spec.level_domains) {
        if d != domain {
            continue;
        }
        let limits = cal.policy.limits(&s.level.name);
        let n = allotted_power_connections(&s.level, limits.max_usage_fraction, s.power_fraction);
        let r = 2.0 * effective_level_resistance(&s.level, n)?;
        series_r += r;
        levels.push(LevelReport {
            level: s.level.name.clone(),
            domain_voltage_v: spec.domain_voltage(domain),
            current_a: 0.0,
            power_connections: n,
            loss_w: r,
            required_connections: 0,
            available_connections: connection_count(&s.level),
            utilization: 0.0,
            cap: limits.max_usage_fraction,
            max_current_a: 0.0,
        });
    }
    let lateral = (spec.pcb_lateral_domain == domain).then(|| {
        series_r += cal.pcb_lateral_resistance_ohm;
        PlaneReport {
            name: "pcb_lateral".into(),
            domain_voltage_v: spec.domain_voltage(domain),
            current_a: 0.0,
            loss_w: cal.pcb_lateral_resistance_ohm,
        }
    });
    Ok(DomainLoss {
        levels,
        lateral,
        series_r,
    })
}

/// Fill in currents and losses; `loss_w` held the round-trip resistance.
fn finish_domain(
    spec: &ArchitectureSpec,
    cal: &Calibration,
    dl: &mut DomainLoss,
    current: f64,
    strict: bool,
    checks: &mut Vec<FeasibilityCheck>,
) -> Result<f64> {
    let mut total = 0.0;
    for l in &mut dl.levels {
        l.current_a = current;
        l.loss_w *= current * current;
        total += l.loss_w;
        let level = &spec
            .stack
            .levels
            .iter()
            .find(|s| s.level.name == l.level)
            .unwrap()
            .level;
        let req = required_connections(level, current, &cal.policy, strict)?;
        l.required_connections = req.count;
        l.utilization = req.utilization;
        l.max_current_a = req.max_current_a;
        checks.push(FeasibilityCheck {
            check: format!("utilization:{}", l.level),
            status: if req.violation { CheckStatus::Fail } else { CheckStatus::Pass },
            detail: format!(
                "{:.2}% of {} connections used, cap {:.0}%",
                100.0 * req.utilization,
                l.available_connections,
                100.0 * req.cap
            ),
        });
    }
    if let Some(p) = &mut dl.lateral {
        p.current_a = current;
        p.loss_w *= current * current;
        total += p.loss_w;
    }
    Ok(total)
}

/// Evaluate one architecture.
pub fn evaluate(spec: &ArchitectureSpec, cal: &Calibration, settings: &EvalSettings) -> Result<LossBreakdown> {
    spec.validate()?;
    cal.validate()?;
    let n = spec.stages.len();
    let layouts: Vec<StageLayout> = (0..n)
        .map(|k| stage_layout(spec, k, settings.derating))
        .collect::<Result<_>>()?;

    let mut checks = Vec::new();
    let mut assumptions = Vec::new();
    let mut stage_reports: Vec<Option<StageReport>> = vec![None; n];
    let mut level_reports = Vec::new();
    let mut planes = Vec::new();

    // power leaving domain d towards the die, and the point loads it feeds
    let pol_current = spec.pol_current();
    let mut downstream_power = spec.total_power_w;
    let mut next_inputs: Option<Vec<PointLoad>> = None;
    let mut iterations = 0;

    for d in (1..=n).rev() {
        let stage = &spec.stages[d - 1];
        let layout = &layouts[d - 1];
        let v = spec.domain_voltage(d);

        let mut dl = domain_levels(spec, cal, d)?;
        let current = if d == n {
            pol_current
        } else {
            let (i, k) = supply_current(v, downstream_power, dl.series_r)?;
            iterations = iterations.max(k);
            i
        };
        let series_loss = finish_domain(spec, cal, &mut dl, current, settings.strict, &mut checks)?;
        level_reports.splice(0..0, dl.levels);
        if let Some(p) = dl.lateral {
            planes.push(p);
        }

        // plane of the stage driving this domain
        let (vr_currents, plane_loss) = if layout.sites.is_empty() {
            (vec![current / layout.vr_count as f64; layout.vr_count], 0.0)
        } else {
            let load = match &next_inputs {
                None => GridLoad::Pol {
                    demand_a: current,
                    profile: cal.demand_profile,
                },
                Some(points) => GridLoad::Points(points),
            };
            solve_plane(spec, &layout.sites, v, load, cal, settings.solver)?
        };
        if plane_loss > 0.0 || !layout.sites.is_empty() {
            planes.push(PlaneReport {
                name: format!("plane@{}", fmt_v(v)),
                domain_voltage_v: v,
                current_a: vr_currents.iter().sum(),
                loss_w: plane_loss,
            });
        }

        let output_power = downstream_power + series_loss + plane_loss;
        let total_current: f64 = vr_currents.iter().sum();
        let (per_vr_loss, rating) = match &stage.converter {
            StageConverter::Calibrated(t) => {
                let model = calibrate(t)?;
                let sl = stage_loss_unchecked(&model, t, &vr_currents, settings.idle_shutdown)?;
                if let Some((index, &load_a)) = vr_currents
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .filter(|(_, &l)| l > t.i_max_a)
                {
                    let detail = format!(
                        "VR {index} carries {load_a:.3} A, rating {:.3} A ({} of {} VRs above rating)",
                        t.i_max_a,
                        vr_currents.iter().filter(|&&l| l > t.i_max_a).count(),
                        vr_currents.len()
                    );
                    if settings.strict {
                        return Err(Error::RatingViolation {
                            stage: t.name.clone(),
                            detail,
                        });
                    }
                    checks.push(FeasibilityCheck {
                        check: format!("rating:{}", t.name),
                        status: CheckStatus::Fail,
                        detail,
                    });
                } else {
                    checks.push(FeasibilityCheck {
                        check: format!("rating:{}", t.name),
                        status: CheckStatus::Pass,
                        detail: format!(
                            "max VR load {:.3} A within {:.3} A",
                            vr_currents.iter().copied().fold(0.0, f64::max),
                            t.i_max_a
                        ),
                    });
                }
                if t.name.contains('@') {
                    assumptions.push(format!(
                        "{} reuses the 48V-to-1V datasheet curve of its family with losses scaled by output voltage",
                        t.name
                    ));
                }
                (sl.per_vr_loss_w, Some(t.i_max_a))
            }
            StageConverter::Flat(f) => {
                let loss = f.loss(output_power);
                assumptions.push(format!(
                    "{} is a flat {:.0}% efficient board-level conversion chain",
                    f.name,
                    100.0 * f.efficiency
                ));
                let per = loss / layout.vr_count as f64;
                (vec![per; layout.vr_count], None)
            }
        };

        if let Some(occ) = layout.occupancy {
            checks.push(FeasibilityCheck {
                check: format!("occupancy:{}", stage.converter.name()),
                status: if occ > UNDER_DIE_OCCUPANCY_GUIDE {
                    CheckStatus::Warn
                } else {
                    CheckStatus::Pass
                },
                detail: format!("{:.1}% of the die shadow", 100.0 * occ),
            });
        }

        // per-VR input power; output shared in proportion to current
        let mut inputs = Vec::with_capacity(vr_currents.len());
        let mut input_power = 0.0;
        for (k, &i_k) in vr_currents.iter().enumerate() {
            let share = if total_current > 0.0 {
                output_power * i_k / total_current
            } else {
                output_power / vr_currents.len() as f64
            };
            let p_in = share + per_vr_loss[k];
            input_power += p_in;
            if let Some(site) = layout.sites.get(k) {
                inputs.push(PointLoad {
                    x_mm: site.x_mm,
                    y_mm: site.y_mm,
                    current_a: p_in / stage.converter.v_in(),
                });
            }
        }
        let stage_loss: f64 = per_vr_loss.iter().sum();
        let rings = (stage.placement == Placement::InterposerPeriphery)
            .then(|| crate::placement::ring_count(&layout.sites));
        stage_reports[d - 1] = Some(StageReport {
            converter: stage.converter.name().to_string(),
            placement: stage.placement,
            v_in_v: stage.converter.v_in(),
            v_out_v: stage.converter.v_out(),
            vr_count: layout.vr_count,
            vr_count_overridden: layout.overridden,
            output_power_w: output_power,
            input_power_w: input_power,
            loss_w: stage_loss,
            spread: CurrentSpread::of(&vr_currents),
            vr_currents_a: vr_currents,
            rating_a: rating,
            occupancy: layout.occupancy,
            rings,
        });

        downstream_power = input_power;
        next_inputs = if inputs.is_empty() { None } else { Some(inputs) };
        if next_inputs.is_none() && d > 1 && spec.stages[d - 2].placement != Placement::Pcb {
            return Err(Error::invalid(
                format!("architecture `{}`", spec.name),
                "an on-package stage must feed a sited stage or the die",
            ));
        }
    }

    // supply domain
    let v0 = spec.domain_voltage(0);
    let mut dl = domain_levels(spec, cal, 0)?;
    let (i0, k) = supply_current(v0, downstream_power, dl.series_r)?;
    iterations = iterations.max(k);
    finish_domain(spec, cal, &mut dl, i0, settings.strict, &mut checks)?;
    level_reports.splice(0..0, dl.levels);
    if let Some(p) = dl.lateral {
        planes.push(p);
    }
    let source_power = v0 * i0;

    // level reports in stack order
    let order: BTreeMap<&str, usize> = spec
        .stack
        .levels
        .iter()
        .enumerate()
        .map(|(i, s)| (s.level.name.as_str(), i))
        .collect();
    level_reports.sort_by_key(|l| order[l.level.as_str()]);
    planes.reverse();

    let stages: Vec<StageReport> = stage_reports.into_iter().map(Option::unwrap).collect();
    let vertical_loss_w: f64 = level_reports.iter().map(|l| l.loss_w).sum();
    let horizontal_loss_w: f64 = planes.iter().map(|p| p.loss_w).sum();
    let converter_loss_w: f64 = stages.iter().map(|s| s.loss_w).sum();
    let total_loss_w = vertical_loss_w + horizontal_loss_w + converter_loss_w;
    let pct = |w: f64| 100.0 * w / spec.total_power_w;
    checks.sort_by(|a, b| a.check.cmp(&b.check));

    Ok(LossBreakdown {
        architecture: spec.name.clone(),
        topology: spec.final_topology().to_string(),
        total_power_w: spec.total_power_w,
        pol_voltage_v: spec.pol_voltage_v,
        source_voltage_v: v0,
        source_current_a: i0,
        source_power_w: source_power,
        per_vr_currents_a: stages.last().unwrap().vr_currents_a.clone(),
        vertical: level_reports,
        horizontal: planes,
        stages,
        vertical_loss_w,
        horizontal_loss_w,
        ppdn_loss_w: vertical_loss_w + horizontal_loss_w,
        converter_loss_w,
        total_loss_w,
        vertical_loss_pct: pct(vertical_loss_w),
        horizontal_loss_pct: pct(horizontal_loss_w),
        ppdn_loss_pct: pct(vertical_loss_w + horizontal_loss_w),
        converter_loss_pct: pct(converter_loss_w),
        total_loss_pct: pct(total_loss_w),
        efficiency: spec.total_power_w / source_power,
        feasibility: checks,
        assumptions,
        iterations,
    })
}

fn fmt_v(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{}V", v as i64)
    } else {
        format!("{v}V")
    }
}

/// The reference architecture and the four proposed ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Preset {
    A0,
    A1,
    A2,
    #[serde(rename = "A3@12V")]
    A3At12V,
    #[serde(rename = "A3@6V")]
    A3At6V,
}

impl Preset {
    pub const ALL: [Preset; 5] = [Preset::A0, Preset::A1, Preset::A2, Preset::A3At12V, Preset::A3At6V];

    pub fn name(self) -> &'static str {
        match self {
            Preset::A0 => "A0",
            Preset::A1 => "A1",
            Preset::A2 => "A2",
            Preset::A3At12V => "A3@12V",
            Preset::A3At6V => "A3@6V",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Unknown {
                kind: "architecture",
                name: name.to_string(),
            })
    }

    pub fn intermediate_voltage(self) -> Option<f64> {
        match self {
            Preset::A3At12V => Some(12.0),
            Preset::A3At6V => Some(6.0),
            _ => None,
        }
    }
}

/// Operating point and package choices shared by the presets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PresetOptions {
    pub die_area_mm2: f64,
    pub total_power_w: f64,
    pub pol_voltage_v: f64,
    pub source_voltage_v: f64,
    pub interposer_margin_mm: f64,
    pub site_spacing_mm: f64,
    /// First stage of the two-stage architectures.
    pub first_stage_topology: String,
    /// Die attach level of the board-converter reference.
    pub reference_die_attach: String,
    /// Die attach level of the proposed architectures.
    pub proposed_die_attach: String,
    pub power_fraction: f64,
}

impl Default for PresetOptions {
    fn default() -> Self {
        PresetOptions {
            die_area_mm2: 500.0,
            total_power_w: 1000.0,
            pol_voltage_v: 1.0,
            source_voltage_v: 48.0,
            interposer_margin_mm: DieFloorplan::DEFAULT_MARGIN_MM,
            site_spacing_mm: 0.0,
            first_stage_topology: "DPMIH".into(),
            reference_die_attach: "ubump".into(),
            proposed_die_attach: "cu_pad".into(),
            power_fraction: 0.5,
        }
    }
}

/// Build a preset around the converter `topology` (ignored by A0).
pub fn preset_spec(preset: Preset, topology: &str, data: &Datasets, opts: &PresetOptions) -> Result<ArchitectureSpec> {
    let table = &data.interconnect;
    let level = |name: &str| table.level_for_die(name, opts.die_area_mm2);
    let die = DieFloorplan {
        die_area_mm2: opts.die_area_mm2,
        interposer_margin_mm: opts.interposer_margin_mm,
        site_spacing_mm: opts.site_spacing_mm,
    };
    let (v0, vp) = (opts.source_voltage_v, opts.pol_voltage_v);
    let selected = data.converters.topology(topology)?;

    let (stages, names, domains, lateral): (Vec<StageSpec>, Vec<&str>, Vec<usize>, usize) = match preset {
        Preset::A0 => (
            vec![StageSpec {
                converter: StageConverter::Flat(FlatConverter::board_reference(v0, vp)),
                placement: Placement::Pcb,
                vr_count_override: None,
            }],
            vec!["bga", "c4", "tsv", &opts.reference_die_attach],
            vec![1, 1, 1, 1],
            1,
        ),
        Preset::A1 | Preset::A2 => {
            let (placement, count) = if preset == Preset::A1 {
                (Placement::InterposerPeriphery, selected.vrs_periphery)
            } else {
                (Placement::InInterposer, selected.vrs_under_die)
            };
            (
                vec![StageSpec {
                    converter: StageConverter::Calibrated(selected.retargeted(v0, vp)),
                    placement,
                    vr_count_override: count,
                }],
                vec!["bga", "c4", "tsv", &opts.proposed_die_attach],
                vec![0, 0, 1, 1],
                0,
            )
        }
        Preset::A3At12V | Preset::A3At6V => {
            let vi = preset.intermediate_voltage().unwrap();
            let first: &ConverterTopology = data.converters.topology(&opts.first_stage_topology)?;
            (
                vec![
                    StageSpec {
                        converter: StageConverter::Calibrated(first.retargeted(v0, vi)),
                        placement: Placement::InterposerPeriphery,
                        vr_count_override: first.vrs_periphery,
                    },
                    StageSpec {
                        converter: StageConverter::Calibrated(selected.retargeted(vi, vp)),
                        placement: Placement::PowerDie,
                        vr_count_override: selected.vrs_under_die,
                    },
                ],
                vec!["bga", "c4", "tsv", &opts.proposed_die_attach],
                vec![0, 0, 1, 2],
                0,
            )
        }
    };

    let mut stack = InterconnectStack::new(names.iter().map(|n| level(n)).collect::<Result<_>>()?)?;
    for s in &mut stack.levels {
        s.power_fraction = opts.power_fraction;
    }
    let spec = ArchitectureSpec {
        name: preset.name().to_string(),
        stages,
        stack,
        level_domains: domains,
        pcb_lateral_domain: lateral,
        die,
        total_power_w: opts.total_power_w,
        pol_voltage_v: vp,
    };
    spec.validate()?;
    Ok(spec)
}

/// One cell of a comparison: a numeric breakdown or a "not reported" marker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CellResult {
    Reported(Box<LossBreakdown>),
    NotReported {
        reason: String,
        /// Set when the cell failed in the solver rather than on its inputs.
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        numerical: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonCell {
    pub architecture: String,
    pub topology: String,
    pub result: CellResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub cells: Vec<ComparisonCell>,
}

impl ComparisonTable {
    pub fn cell(&self, architecture: &str, topology: &str) -> Option<&ComparisonCell> {
        self.cells
            .iter()
            .find(|c| c.architecture == architecture && c.topology == topology)
    }
}

/// Evaluate every (architecture, topology) pair; cells run concurrently and
/// come back in input order. Rating violations and per-cell errors become
/// "not reported" markers.
pub fn compare(
    specs: &[(ArchitectureSpec, String)],
    cal: &Calibration,
    settings: &EvalSettings,
) -> ComparisonTable {
    let cells = specs
        .par_iter()
        .map(|(spec, topology)| {
            let result = match evaluate(spec, cal, settings) {
                Ok(b) if b.rating_violated() => CellResult::NotReported {
                    reason: b
                        .feasibility
                        .iter()
                        .find(|c| c.status == CheckStatus::Fail && c.check.starts_with("rating:"))
                        .map(|c| c.detail.clone())
                        .unwrap_or_default(),
                    numerical: false,
                },
                Ok(b) => CellResult::Reported(Box::new(b)),
                Err(e) => CellResult::NotReported {
                    reason: e.to_string(),
                    numerical: e.is_numerical(),
                },
            };
            ComparisonCell {
                architecture: spec.name.clone(),
                topology: topology.clone(),
                result,
            }
        })
        .collect();
    ComparisonTable { cells }
}

/// Preset grid: every preset × every topology name.
pub fn preset_grid(
    presets: &[Preset],
    topologies: &[String],
    data: &Datasets,
    opts: &PresetOptions,
) -> Result<Vec<(ArchitectureSpec, String)>> {
    let mut out = Vec::new();
    for &p in presets {
        for t in topologies {
            out.push((preset_spec(p, t, data, opts)?, t.clone()));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DieAreaResult {
    pub die_area_mm2: f64,
    pub density_a_per_mm2: f64,
    /// Level that rules out the next smaller area.
    pub binding_level: Option<String>,
}

/// Smallest whole-mm² die whose scaled vertical stack carries `demand_a`
/// on every level within its usage cap. `stack` holds the levels at
/// `reference_area_mm2`; platform areas scale with the die.
pub fn min_die_area_for_current(
    demand_a: f64,
    policy: &UtilizationPolicy,
    stack: &InterconnectStack,
    reference_area_mm2: f64,
    lower_bound_mm2: f64,
) -> Result<DieAreaResult> {
    const MAX_AREA: f64 = 10_000.0;
    if !(demand_a >= 0.0) {
        return Err(Error::invalid("demand", "must be >= 0"));
    }
    policy.validate()?;
    stack.validate()?;
    let failing = |area: f64| -> Result<Option<String>> {
        let scaled = stack.scaled(area / reference_area_mm2);
        for s in &scaled.levels {
            if required_connections(&s.level, demand_a, policy, false)?.violation {
                return Ok(Some(s.level.name.clone()));
            }
        }
        Ok(None)
    };
    let mut lo = lower_bound_mm2.max(1.0).ceil();
    if failing(MAX_AREA)?.is_some() {
        return Err(Error::Unsatisfiable { max_area_mm2: MAX_AREA });
    }
    let result = |area: f64, binding| DieAreaResult {
        die_area_mm2: area,
        density_a_per_mm2: demand_a / area,
        binding_level: binding,
    };
    if failing(lo)?.is_none() {
        return Ok(result(lo, None));
    }
    let mut hi = MAX_AREA;
    // failing(lo) and !failing(hi)
    while hi - lo > 1.0 {
        let mid = ((lo + hi) / 2.0).floor();
        if failing(mid)?.is_some() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(result(hi, failing(lo)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelUtilization {
    pub level: String,
    pub domain_voltage_v: f64,
    pub current_a: f64,
    pub used: u64,
    pub available: u64,
    pub utilization: f64,
    pub cap: f64,
    pub violation: bool,
}

/// Per-level utilization of an evaluated architecture.
pub fn utilization_report(report: &LossBreakdown) -> Vec<LevelUtilization> {
    report
        .vertical
        .iter()
        .map(|l| LevelUtilization {
            level: l.level.clone(),
            domain_voltage_v: l.domain_voltage_v,
            current_a: l.current_a,
            used: l.required_connections,
            available: l.available_connections,
            utilization: l.utilization,
            cap: l.cap,
            violation: l.utilization > l.cap,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data() -> Datasets {
        Datasets::builtin().unwrap()
    }

    fn ideal(cal: &Calibration) -> Calibration {
        Calibration {
            sheet_resistance_ohm_sq: 0.0,
            pcb_lateral_resistance_ohm: 0.0,
            ..cal.clone()
        }
    }

    fn zero_resistance(spec: &mut ArchitectureSpec) {
        for s in &mut spec.stack.levels {
            s.level.resistivity_ohm_m = Some(0.0);
        }
    }

    #[test]
    fn supply_current_root() {
        let (i, _) = supply_current(1.0, 1000.0, 0.1e-3).unwrap();
        let exact = (1.0 - (1.0 - 4.0 * 0.1e-3 * 1000.0_f64).sqrt()) / (2.0 * 0.1e-3);
        assert!((i - exact).abs() / exact < 1e-8);
        assert!(matches!(
            supply_current(1.0, 1000.0, 1e-3),
            Err(Error::NoConvergence { .. })
        ));
    }

    #[test]
    fn ideal_chain_is_lossless() {
        let d = data();
        let mut spec = preset_spec(Preset::A1, "DSCH", &d, &PresetOptions::default()).unwrap();
        zero_resistance(&mut spec);
        if let StageConverter::Calibrated(t) = &mut spec.stages[0].converter {
            t.eta_peak = 1.0;
        }
        let r = evaluate(&spec, &ideal(&d.calibration), &EvalSettings::default()).unwrap();
        assert_eq!(r.total_loss_w, 0.0);
        assert!((r.source_current_a - 1000.0 / 48.0).abs() < 1e-12);
        assert!(r.per_vr_currents_a.iter().all(|&i| (i - 1000.0 / 48.0).abs() < 1e-12));
    }

    #[test]
    fn ideal_two_stage_currents_scale_by_ratio() {
        let d = data();
        let mut spec = preset_spec(Preset::A3At12V, "DSCH", &d, &PresetOptions::default()).unwrap();
        zero_resistance(&mut spec);
        for s in &mut spec.stages {
            if let StageConverter::Calibrated(t) = &mut s.converter {
                t.eta_peak = 1.0;
            }
        }
        let r = evaluate(&spec, &ideal(&d.calibration), &EvalSettings::default()).unwrap();
        let tsv = r.vertical.iter().find(|l| l.level == "tsv").unwrap();
        assert!((tsv.current_a - 1000.0 / 12.0).abs() < 1e-9);
        assert!((r.source_current_a - 1000.0 / 48.0).abs() < 1e-12);
        assert_eq!(r.total_loss_w, 0.0);
    }

    #[test]
    fn energy_balances() {
        let d = data();
        let opts = PresetOptions::default();
        for p in Preset::ALL {
            let spec = preset_spec(p, "DSCH", &d, &opts).unwrap();
            let r = evaluate(&spec, &d.calibration, &EvalSettings::default()).unwrap();
            let lhs = r.source_power_w;
            let rhs = r.total_power_w + r.total_loss_w;
            assert!((lhs - rhs).abs() <= 1e-9 * lhs, "{}: {lhs} vs {rhs}", p.name());
        }
    }

    #[test]
    fn strict_rating_violation_errors() {
        let d = data();
        let spec = preset_spec(Preset::A2, "3LHD", &d, &PresetOptions::default()).unwrap();
        let lax = evaluate(&spec, &d.calibration, &EvalSettings::default()).unwrap();
        assert!(lax.rating_violated());
        let strict = EvalSettings {
            strict: true,
            ..EvalSettings::default()
        };
        assert!(matches!(
            evaluate(&spec, &d.calibration, &strict),
            Err(Error::RatingViolation { .. })
        ));
    }

    #[test]
    fn single_cell_comparison_matches_evaluate() {
        let d = data();
        let spec = preset_spec(Preset::A1, "DSCH", &d, &PresetOptions::default()).unwrap();
        let cal = ideal(&d.calibration);
        let direct = evaluate(&spec, &cal, &EvalSettings::default()).unwrap();
        let table = compare(&[(spec, "DSCH".into())], &cal, &EvalSettings::default());
        assert_eq!(table.cells.len(), 1);
        assert_eq!(table.cells[0].result, CellResult::Reported(Box::new(direct)));
    }

    #[test]
    fn preset_names_round_trip() {
        for p in Preset::ALL {
            assert_eq!(Preset::parse(p.name()).unwrap(), p);
            let json = serde_json::to_string(&p).unwrap();
            assert_eq!(json, format!("\"{}\"", p.name()));
        }
        assert!(Preset::parse("A4").is_err());
    }

    #[test]
    fn die_area_search() {
        let d = data();
        let spec = preset_spec(Preset::A0, "DSCH", &d, &PresetOptions::default()).unwrap();
        let r = min_die_area_for_current(0.0, &d.calibration.policy, &spec.stack, 500.0, 1.0).unwrap();
        assert_eq!(r.die_area_mm2, 1.0);
        let r = min_die_area_for_current(1000.0, &d.calibration.policy, &spec.stack, 500.0, 1.0).unwrap();
        assert!(r.binding_level.is_some());
        let below = min_die_area_for_current(1000.0, &d.calibration.policy, &spec.stack, 500.0, r.die_area_mm2 - 1.0)
            .unwrap();
        assert_eq!(below.die_area_mm2, r.die_area_mm2);
        assert!(matches!(
            min_die_area_for_current(1e9, &d.calibration.policy, &spec.stack, 500.0, 1.0),
            Err(Error::Unsatisfiable { .. })
        ));
    }
}
