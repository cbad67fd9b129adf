//! Vertical interconnect levels: connection counting, via-field resistance,
//! DC loss and utilization against usage caps.
//!
//! Lengths follow the datasheet conventions: platform areas in mm², via
//! geometry in µm, resistivity in Ω·m. Everything is converted to SI at the
//! point of use.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MM2_TO_UM2: f64 = 1e6;
const UM_TO_M: f64 = 1e-6;
const UM2_TO_M2: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Material {
    Solder,
    Copper,
}

impl Material {
    pub fn as_str(self) -> &'static str {
        match self {
            Material::Solder => "solder",
            Material::Copper => "copper",
        }
    }
}

/// Default bulk resistivities (Ω·m).
pub const SOLDER_RESISTIVITY: f64 = 1.4e-7;
pub const COPPER_RESISTIVITY: f64 = 1.68e-8;

/// One vertical packaging level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterconnectLevel {
    pub name: String,
    #[serde(default)]
    pub packaging_level: String,
    #[serde(default)]
    pub kind: String,
    pub material: Material,
    /// Resolved from the material table when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resistivity_ohm_m: Option<f64>,
    pub platform_area_mm2: f64,
    /// Informational only; `cross_area_um2` is authoritative.
    #[serde(default)]
    pub diameter_um: Option<f64>,
    pub cross_area_um2: f64,
    pub height_um: f64,
    pub pitch_um: f64,
}

impl InterconnectLevel {
    pub fn validate(&self) -> Result<()> {
        let what = || format!("interconnect level `{}`", self.name);
        if !(self.platform_area_mm2 > 0.0) {
            return Err(Error::invalid(what(), "platform_area_mm2 must be > 0"));
        }
        if !(self.cross_area_um2 > 0.0) {
            return Err(Error::invalid(what(), "cross_area_um2 must be > 0"));
        }
        if !(self.height_um >= 0.0) {
            return Err(Error::invalid(what(), "height_um must be >= 0"));
        }
        if !(self.pitch_um > 0.0) {
            return Err(Error::invalid(what(), "pitch_um must be > 0"));
        }
        match self.resistivity_ohm_m {
            Some(r) if !(r >= 0.0) => Err(Error::invalid(what(), "resistivity must be >= 0")),
            _ => Ok(()),
        }
    }

    /// Non-fatal observations, e.g. a via wider than its pitch.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.pitch_um * self.pitch_um < self.cross_area_um2 {
            out.push(format!(
                "{}: cross-sectional area {} um2 exceeds pitch cell {} um2",
                self.name,
                self.cross_area_um2,
                self.pitch_um * self.pitch_um
            ));
        }
        out
    }

    pub fn resistivity(&self) -> f64 {
        self.resistivity_ohm_m.unwrap_or(match self.material {
            Material::Solder => SOLDER_RESISTIVITY,
            Material::Copper => COPPER_RESISTIVITY,
        })
    }

    /// Copy with the platform area multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        InterconnectLevel {
            platform_area_mm2: self.platform_area_mm2 * factor,
            ..self.clone()
        }
    }
}

/// Number of connection sites on a square grid: floor(area / pitch²).
pub fn connection_count(level: &InterconnectLevel) -> u64 {
    let sites = level.platform_area_mm2 * MM2_TO_UM2 / (level.pitch_um * level.pitch_um);
    // absorb representation error so that exact multiples do not round down
    (sites * (1.0 + 1e-12)).floor() as u64
}

/// R = ρ·l/A for a single connection, in Ω.
pub fn per_connection_resistance(level: &InterconnectLevel) -> f64 {
    level.resistivity() * (level.height_um * UM_TO_M) / (level.cross_area_um2 * UM2_TO_M2)
}

/// Parallel combination of `used_power_connections` identical connections
/// on one net.
pub fn effective_level_resistance(level: &InterconnectLevel, used_power_connections: u64) -> Result<f64> {
    if used_power_connections == 0 {
        return Err(Error::ZeroConnections {
            level: level.name.clone(),
        });
    }
    Ok(per_connection_resistance(level) / used_power_connections as f64)
}

/// I²R loss of a level, power net plus an identical ground return.
pub fn level_loss(level: &InterconnectLevel, current_a: f64, used_power_connections: u64) -> Result<f64> {
    let r_net = effective_level_resistance(level, used_power_connections)?;
    Ok(current_a * current_a * 2.0 * r_net)
}

/// Usage cap and per-connection current limit for one level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelLimits {
    pub max_usage_fraction: f64,
    pub ampacity_a: f64,
}

impl Default for LevelLimits {
    fn default() -> Self {
        LevelLimits {
            max_usage_fraction: 1.0,
            ampacity_a: 1.0,
        }
    }
}

/// Per-level limits, keyed by level name.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UtilizationPolicy {
    pub levels: BTreeMap<String, LevelLimits>,
}

impl UtilizationPolicy {
    pub fn limits(&self, level: &str) -> LevelLimits {
        self.levels.get(level).copied().unwrap_or_default()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, l) in &self.levels {
            if !(l.max_usage_fraction > 0.0 && l.max_usage_fraction <= 1.0) {
                return Err(Error::invalid(
                    format!("utilization policy `{name}`"),
                    "max_usage_fraction must lie in (0, 1]",
                ));
            }
            if !(l.ampacity_a > 0.0) {
                return Err(Error::invalid(
                    format!("utilization policy `{name}`"),
                    "ampacity_a must be > 0",
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConnectionRequirement {
    /// Power plus ground connections.
    pub count: u64,
    pub utilization: f64,
    pub cap: f64,
    pub violation: bool,
    /// Largest current the level carries without exceeding its cap.
    pub max_current_a: f64,
}

/// Connections needed to carry `current_a` at the level's ampacity, on both
/// the power and the ground net. In strict mode a cap violation is an error.
pub fn required_connections(
    level: &InterconnectLevel,
    current_a: f64,
    policy: &UtilizationPolicy,
    strict: bool,
) -> Result<ConnectionRequirement> {
    let limits = policy.limits(&level.name);
    let per_net = if current_a > 0.0 {
        (current_a / limits.ampacity_a).ceil() as u64
    } else {
        0
    };
    let count = 2 * per_net;
    let available = connection_count(level);
    let utilization = if available == 0 {
        if count == 0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        count as f64 / available as f64
    };
    let per_net_cap = (limits.max_usage_fraction * available as f64 / 2.0).floor();
    let req = ConnectionRequirement {
        count,
        utilization,
        cap: limits.max_usage_fraction,
        violation: utilization > limits.max_usage_fraction,
        max_current_a: per_net_cap * limits.ampacity_a,
    };
    if req.violation && strict {
        return Err(Error::CapExceeded {
            level: level.name.clone(),
            utilization,
            cap: limits.max_usage_fraction,
            max_current_a: req.max_current_a,
        });
    }
    Ok(req)
}

/// Power connections allotted to a level: the capped share of its sites
/// assigned to the power net.
pub fn allotted_power_connections(level: &InterconnectLevel, cap: f64, power_fraction: f64) -> u64 {
    (connection_count(level) as f64 * cap * power_fraction).floor() as u64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackLevel {
    pub level: InterconnectLevel,
    pub power_fraction: f64,
}

/// Levels ordered from the PCB side to the die side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterconnectStack {
    pub levels: Vec<StackLevel>,
}

impl InterconnectStack {
    pub fn new(levels: Vec<InterconnectLevel>) -> Result<Self> {
        let stack = InterconnectStack {
            levels: levels
                .into_iter()
                .map(|level| StackLevel {
                    level,
                    power_fraction: 0.5,
                })
                .collect(),
        };
        stack.validate()?;
        Ok(stack)
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::invalid("interconnect stack", "must not be empty"));
        }
        for s in &self.levels {
            s.level.validate()?;
            if !(s.power_fraction > 0.0 && s.power_fraction < 1.0) {
                return Err(Error::invalid(
                    format!("stack level `{}`", s.level.name),
                    "power_fraction must lie in (0, 1)",
                ));
            }
        }
        Ok(())
    }

    /// Series resistance of the whole stack for a round trip (power and
    /// ground) given per-level power connection counts.
    pub fn series_resistance(&self, used: &[u64]) -> Result<f64> {
        let mut total = 0.0;
        for (s, &n) in self.levels.iter().zip(used) {
            total += 2.0 * effective_level_resistance(&s.level, n)?;
        }
        Ok(total)
    }

    /// Copy with every platform area multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        InterconnectStack {
            levels: self
                .levels
                .iter()
                .map(|s| StackLevel {
                    level: s.level.scaled(factor),
                    power_fraction: s.power_fraction,
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn level(material: Material, area: f64, cross: f64, height: f64, pitch: f64) -> InterconnectLevel {
        InterconnectLevel {
            name: "x".into(),
            packaging_level: String::new(),
            kind: String::new(),
            material,
            resistivity_ohm_m: None,
            platform_area_mm2: area,
            diameter_um: None,
            cross_area_um2: cross,
            height_um: height,
            pitch_um: pitch,
        }
    }

    #[test]
    fn counts_follow_square_packing() {
        assert_eq!(connection_count(&level(Material::Solder, 1800.0, 125_664.0, 300.0, 800.0)), 2812);
        assert_eq!(connection_count(&level(Material::Copper, 1200.0, 20.0, 50.0, 10.0)), 12_000_000);
        // one site exactly
        assert_eq!(connection_count(&level(Material::Copper, 1.0, 20.0, 50.0, 1000.0)), 1);
    }

    #[test]
    fn rho_l_over_a() {
        let tsv = level(Material::Copper, 1200.0, 20.0, 50.0, 10.0);
        assert!((per_connection_resistance(&tsv) - 0.042).abs() < 1e-15);
        let bga = level(Material::Solder, 1800.0, 125_664.0, 300.0, 800.0);
        assert!((per_connection_resistance(&bga) * 1e3 - 0.334).abs() < 5e-4);
        let flat = level(Material::Copper, 1.0, 20.0, 0.0, 10.0);
        assert_eq!(per_connection_resistance(&flat), 0.0);
    }

    #[test]
    fn parallel_combination() {
        let tsv = level(Material::Copper, 1200.0, 20.0, 50.0, 10.0);
        let r = effective_level_resistance(&tsv, 12_000).unwrap();
        assert!((r - 3.5e-6).abs() < 1e-18);
        assert_eq!(effective_level_resistance(&tsv, 1).unwrap(), per_connection_resistance(&tsv));
        assert_eq!(
            effective_level_resistance(&tsv, 0),
            Err(Error::ZeroConnections { level: "x".into() })
        );
    }

    #[test]
    fn loss_counts_ground_return() {
        // 0.5 uOhm per net from a 50 mOhm via across 100 000 connections
        let mut l = level(Material::Copper, 1200.0, 20.0, 50.0, 10.0);
        l.resistivity_ohm_m = Some(0.05 * 20e-12 / 50e-6);
        let loss = level_loss(&l, 1000.0, 100_000).unwrap();
        assert!((loss - 1.0).abs() < 1e-12);
        assert_eq!(level_loss(&l, 0.0, 1).unwrap(), 0.0);
        let loss = level_loss(&l, 20.8, 5_000).unwrap();
        assert!((loss - 2.0 * 20.8 * 20.8 * 1e-5).abs() < 1e-15);
    }

    #[test]
    fn requirement_and_cap() {
        let bga = level(Material::Solder, 1800.0, 125_664.0, 300.0, 800.0);
        let mut policy = UtilizationPolicy::default();
        policy.levels.insert(
            "x".into(),
            LevelLimits {
                max_usage_fraction: 0.6,
                ampacity_a: 0.5,
            },
        );
        let zero = required_connections(&bga, 0.0, &policy, true).unwrap();
        assert_eq!(zero.count, 0);
        assert_eq!(zero.utilization, 0.0);

        let big = required_connections(&bga, 1000.0, &policy, false).unwrap();
        assert_eq!(big.count, 4000);
        assert!(big.violation);
        // floor(0.6 * 2812 / 2) = 843 connections per net
        assert!((big.max_current_a - 421.5).abs() < 1e-12);
        match required_connections(&bga, 1000.0, &policy, true) {
            Err(Error::CapExceeded { max_current_a, .. }) => assert!((max_current_a - 421.5).abs() < 1e-12),
            other => panic!("expected CapExceeded, got {other:?}"),
        }
    }

    #[test]
    fn stack_rejects_bad_power_fraction() {
        let mut stack = InterconnectStack::new(vec![level(Material::Copper, 1.0, 1.0, 1.0, 1.0)]).unwrap();
        stack.levels[0].power_fraction = 1.0;
        assert!(stack.validate().is_err());
        assert!(InterconnectStack::new(vec![]).is_err());
    }

    #[test]
    fn oversized_via_only_warns() {
        let l = level(Material::Copper, 1.0, 200.0, 1.0, 10.0);
        assert!(l.validate().is_ok());
        assert_eq!(l.warnings().len(), 1);
    }
}
