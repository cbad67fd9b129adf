//! Converter topologies as load-dependent loss curves.
//!
//! Each topology is reduced to a fixed (switching/driving) loss and an
//! effective conduction resistance, fitted so that the efficiency curve
//! peaks at the reported operating point.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Datasheet characteristics of one converter family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConverterTopology {
    pub name: String,
    pub v_in_v: f64,
    pub v_out_v: f64,
    pub i_max_a: f64,
    pub eta_peak: f64,
    pub i_at_peak_a: f64,
    pub n_switches: u32,
    pub switches_per_mm2: f64,
    #[serde(default)]
    pub n_inductors: u32,
    #[serde(default)]
    pub total_inductance_uh: f64,
    #[serde(default)]
    pub n_capacitors: u32,
    #[serde(default)]
    pub total_capacitance_uf: f64,
    /// VR counts reported for periphery and under-die arrangements.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vrs_periphery: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vrs_under_die: Option<usize>,
}

impl ConverterTopology {
    pub fn validate(&self) -> Result<()> {
        let what = || format!("converter topology `{}`", self.name);
        if !(self.v_out_v > 0.0 && self.v_out_v < self.v_in_v) {
            return Err(Error::invalid(what(), "requires 0 < v_out < v_in"));
        }
        if !(self.i_at_peak_a > 0.0 && self.i_at_peak_a <= self.i_max_a) {
            return Err(Error::invalid(what(), "requires 0 < i_at_peak <= i_max"));
        }
        if !(self.eta_peak > 0.0 && self.eta_peak <= 1.0) {
            return Err(Error::invalid(what(), "requires 0 < eta_peak <= 1"));
        }
        if !(self.switches_per_mm2 > 0.0) {
            return Err(Error::invalid(what(), "requires switches_per_mm2 > 0"));
        }
        Ok(())
    }

    /// Same datasheet points re-targeted to another conversion ratio. The
    /// efficiency-versus-output-current curve is kept, so fixed and
    /// conduction losses scale with the output voltage.
    pub fn retargeted(&self, v_in_v: f64, v_out_v: f64) -> Self {
        let mut t = self.clone();
        if v_in_v != self.v_in_v || v_out_v != self.v_out_v {
            t.name = format!("{}@{}V-{}V", self.name, fmt_volts(v_in_v), fmt_volts(v_out_v));
        }
        t.v_in_v = v_in_v;
        t.v_out_v = v_out_v;
        t
    }
}

fn fmt_volts(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// P(I) = p_fixed + r_conduction·I².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibratedLossModel {
    pub p_fixed_w: f64,
    pub r_conduction_ohm: f64,
}

impl CalibratedLossModel {
    pub fn loss(&self, load_a: f64) -> f64 {
        self.p_fixed_w + self.r_conduction_ohm * load_a * load_a
    }
}

/// Fit the two-term loss curve so that η peaks at `i_at_peak` with value
/// `eta_peak`. An ideal converter (η = 1) yields zero losses.
pub fn calibrate(topology: &ConverterTopology) -> Result<CalibratedLossModel> {
    topology.validate()?;
    if topology.eta_peak >= 1.0 {
        return Ok(CalibratedLossModel {
            p_fixed_w: 0.0,
            r_conduction_ohm: 0.0,
        });
    }
    let i_pk = topology.i_at_peak_a;
    let p_fixed = topology.v_out_v * i_pk * (1.0 - topology.eta_peak) / (2.0 * topology.eta_peak);
    Ok(CalibratedLossModel {
        p_fixed_w: p_fixed,
        r_conduction_ohm: p_fixed / (i_pk * i_pk),
    })
}

/// η(I) without the rating check.
pub fn efficiency_unchecked(model: &CalibratedLossModel, topology: &ConverterTopology, load_a: f64) -> f64 {
    let p_out = topology.v_out_v * load_a;
    if p_out <= 0.0 {
        return 0.0;
    }
    p_out / (p_out + model.loss(load_a))
}

pub fn efficiency_at(model: &CalibratedLossModel, topology: &ConverterTopology, load_a: f64) -> Result<f64> {
    if !(load_a > 0.0) {
        return Err(Error::invalid("converter load", "must be > 0"));
    }
    if load_a > topology.i_max_a {
        return Err(Error::LoadExceedsRating {
            topology: topology.name.clone(),
            index: 0,
            load_a,
            rating_a: topology.i_max_a,
        });
    }
    Ok(efficiency_unchecked(model, topology, load_a))
}

/// Board area of one VR; passives are assumed to fit under the switches.
pub fn vr_footprint_area(topology: &ConverterTopology) -> f64 {
    topology.n_switches as f64 / topology.switches_per_mm2
}

pub fn required_vr_count(
    topology: &ConverterTopology,
    total_current_a: f64,
    derating: f64,
    vr_count_override: Option<usize>,
) -> Result<usize> {
    if let Some(n) = vr_count_override {
        if n == 0 {
            return Err(Error::invalid("vr_count_override", "must be >= 1"));
        }
        return Ok(n);
    }
    if !(total_current_a > 0.0) {
        return Err(Error::invalid("total current", "must be > 0"));
    }
    if !(derating > 0.0 && derating <= 1.0) {
        return Err(Error::invalid("derating", "must lie in (0, 1]"));
    }
    let per_vr = derating * topology.i_max_a;
    // tolerate representation error at exact multiples of the rating
    Ok(((total_current_a / per_vr) * (1.0 - 1e-12)).ceil().max(1.0) as usize)
}

/// On-time fraction of the high-side switch. `internal_stepdown` is the
/// ratio of any capacitive pre-division ahead of the inductor stage.
pub fn duty_cycle(v_in_v: f64, v_out_v: f64, internal_stepdown: f64) -> Result<f64> {
    if !(v_out_v > 0.0 && v_out_v <= v_in_v) {
        return Err(Error::invalid("duty cycle", "requires 0 < v_out <= v_in"));
    }
    if !(internal_stepdown >= 1.0) {
        return Err(Error::invalid("duty cycle", "internal_stepdown must be >= 1"));
    }
    Ok(v_out_v * internal_stepdown / v_in_v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageLoss {
    pub total_loss_w: f64,
    pub per_vr_loss_w: Vec<f64>,
    pub per_vr_efficiency: Vec<f64>,
}

/// Losses of a bank of identical VRs. Idle VRs keep switching unless
/// `idle_shutdown` is set. Loads above the rating are rejected.
pub fn stage_loss(
    model: &CalibratedLossModel,
    topology: &ConverterTopology,
    vr_loads_a: &[f64],
    idle_shutdown: bool,
) -> Result<StageLoss> {
    if let Some((index, &load_a)) = vr_loads_a
        .iter()
        .enumerate()
        .find(|(_, &l)| l > topology.i_max_a)
    {
        return Err(Error::LoadExceedsRating {
            topology: topology.name.clone(),
            index,
            load_a,
            rating_a: topology.i_max_a,
        });
    }
    stage_loss_unchecked(model, topology, vr_loads_a, idle_shutdown)
}

/// [`stage_loss`] extrapolating the curve beyond the rating.
pub fn stage_loss_unchecked(
    model: &CalibratedLossModel,
    topology: &ConverterTopology,
    vr_loads_a: &[f64],
    idle_shutdown: bool,
) -> Result<StageLoss> {
    let mut per_vr_loss_w = Vec::with_capacity(vr_loads_a.len());
    let mut per_vr_efficiency = Vec::with_capacity(vr_loads_a.len());
    for &load in vr_loads_a {
        if !(load >= 0.0) {
            return Err(Error::invalid("VR load", "must be >= 0"));
        }
        let loss = if load == 0.0 && idle_shutdown {
            0.0
        } else {
            model.loss(load)
        };
        per_vr_loss_w.push(loss);
        per_vr_efficiency.push(efficiency_unchecked(model, topology, load));
    }
    Ok(StageLoss {
        total_loss_w: per_vr_loss_w.iter().sum(),
        per_vr_loss_w,
        per_vr_efficiency,
    })
}

/// Load-independent efficiency, used for the board-level reference chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatConverter {
    pub name: String,
    pub v_in_v: f64,
    pub v_out_v: f64,
    pub efficiency: f64,
}

impl FlatConverter {
    /// Transformer first stage plus multiphase buck, lumped at 90 %.
    pub fn board_reference(v_in_v: f64, v_out_v: f64) -> Self {
        FlatConverter {
            name: "PCB-90".into(),
            v_in_v,
            v_out_v,
            efficiency: 0.9,
        }
    }

    pub fn loss(&self, p_out_w: f64) -> f64 {
        p_out_w * (1.0 / self.efficiency - 1.0)
    }
}

/// Converter model attached to a conversion stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StageConverter {
    Calibrated(ConverterTopology),
    Flat(FlatConverter),
}

impl StageConverter {
    pub fn name(&self) -> &str {
        match self {
            StageConverter::Calibrated(t) => &t.name,
            StageConverter::Flat(f) => &f.name,
        }
    }

    pub fn v_in(&self) -> f64 {
        match self {
            StageConverter::Calibrated(t) => t.v_in_v,
            StageConverter::Flat(f) => f.v_in_v,
        }
    }

    pub fn v_out(&self) -> f64 {
        match self {
            StageConverter::Calibrated(t) => t.v_out_v,
            StageConverter::Flat(f) => f.v_out_v,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table2(name: &str) -> ConverterTopology {
        crate::dataset::builtin_topologies()
            .unwrap()
            .get(name)
            .unwrap()
            .clone()
    }

    #[test]
    fn closed_form_calibration() {
        let dsch = calibrate(&table2("DSCH")).unwrap();
        assert!((dsch.p_fixed_w - 0.4645).abs() < 1e-4);
        assert!((dsch.r_conduction_ohm - 4.645e-3).abs() < 1e-6);
        let lhd = calibrate(&table2("3LHD")).unwrap();
        assert!((lhd.p_fixed_w - 0.1593).abs() < 1e-4);
        assert!((lhd.r_conduction_ohm - 17.7e-3).abs() < 1e-4);
    }

    #[test]
    fn ideal_converter_is_lossless() {
        let mut t = table2("DSCH");
        t.eta_peak = 1.0;
        let m = calibrate(&t).unwrap();
        assert_eq!(m.p_fixed_w, 0.0);
        assert_eq!(m.r_conduction_ohm, 0.0);
        assert_eq!(efficiency_at(&m, &t, 7.0).unwrap(), 1.0);
    }

    #[test]
    fn efficiency_points() {
        let t = table2("DSCH");
        let m = calibrate(&t).unwrap();
        assert!((efficiency_at(&m, &t, 10.0).unwrap() - 0.915).abs() < 1e-12);
        let expected = 30.0 / (30.0 + m.p_fixed_w + m.r_conduction_ohm * 900.0);
        assert!((efficiency_at(&m, &t, 30.0).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.866).abs() < 5e-4);

        let lhd = table2("3LHD");
        let m = calibrate(&lhd).unwrap();
        assert!(matches!(
            efficiency_at(&m, &lhd, 20.0),
            Err(Error::LoadExceedsRating { .. })
        ));
    }

    #[test]
    fn footprints() {
        assert!((vr_footprint_area(&table2("DPMIH")) - 53.333).abs() < 1e-3);
        assert!((vr_footprint_area(&table2("DSCH")) - 7.246).abs() < 1e-3);
        assert!((vr_footprint_area(&table2("3LHD")) - 9.016).abs() < 1e-3);
    }

    #[test]
    fn vr_counts() {
        let dsch = table2("DSCH");
        assert_eq!(required_vr_count(&dsch, 1000.0, 1.0, None).unwrap(), 34);
        assert_eq!(required_vr_count(&dsch, 1000.0, 1.0, Some(48)).unwrap(), 48);
        assert_eq!(required_vr_count(&table2("DPMIH"), 100.0, 1.0, None).unwrap(), 1);
        assert!(required_vr_count(&dsch, 1000.0, 1.0, Some(0)).is_err());
    }

    #[test]
    fn duty_cycles() {
        assert!((duty_cycle(48.0, 1.0, 1.0).unwrap() - 0.020_833_333).abs() < 1e-9);
        assert!((duty_cycle(48.0, 1.0, 10.0).unwrap() - 0.208_333_333).abs() < 1e-9);
        assert_eq!(duty_cycle(5.0, 5.0, 1.0).unwrap(), 1.0);
        assert!(duty_cycle(1.0, 2.0, 1.0).is_err());
    }

    #[test]
    fn bank_losses() {
        let t = table2("DSCH");
        let m = calibrate(&t).unwrap();
        let idle = stage_loss(&m, &t, &[0.0], true).unwrap();
        assert_eq!(idle.total_loss_w, 0.0);
        let idle = stage_loss(&m, &t, &[0.0], false).unwrap();
        assert_eq!(idle.total_loss_w, m.p_fixed_w);

        let loads = vec![1000.0 / 48.0; 48];
        let bank = stage_loss(&m, &t, &loads, false).unwrap();
        assert!((bank.total_loss_w - 119.0).abs() < 0.1);

        match stage_loss(&m, &t, &[10.0, 31.0], false) {
            Err(Error::LoadExceedsRating { index, .. }) => assert_eq!(index, 1),
            other => panic!("expected rating error, got {other:?}"),
        }
        let single = stage_loss(&m, &t, &[17.0], false).unwrap();
        assert_eq!(single.total_loss_w, m.loss(17.0));
    }

    #[test]
    fn retargeting_scales_losses_with_output_voltage() {
        let t = table2("DPMIH");
        let base = calibrate(&t).unwrap();
        let t12 = t.retargeted(48.0, 12.0);
        let m12 = calibrate(&t12).unwrap();
        assert!((m12.p_fixed_w / base.p_fixed_w - 12.0).abs() < 1e-12);
        let a = efficiency_at(&base, &t, 11.0).unwrap();
        let b = efficiency_at(&m12, &t12, 11.0).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert_eq!(t12.name, "DPMIH@48V-12V");
    }
}
