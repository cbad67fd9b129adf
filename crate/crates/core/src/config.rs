//! Run configuration, accepted as JSON or as the equivalent TOML tables.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::architecture::{EvalSettings, Preset, PresetOptions};
use crate::calibration::CalibrationTargets;
use crate::dataset::{DatasetOverrides, Datasets, CONVERTER_DATASET, DEFAULT_CALIBRATION, INTERCONNECT_DATASET};
use crate::error::{Error, Result};
use crate::pdn_grid::SolverKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    #[serde(alias = "text")]
    Txt,
}

impl Format {
    pub const ALL: [Format; 3] = [Format::Json, Format::Csv, Format::Txt];

    pub fn extension(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
            Format::Txt => "txt",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            "txt" | "text" => Ok(Format::Txt),
            _ => Err(Error::Unknown {
                kind: "output format",
                name: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    pub formats: Vec<Format>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub parameter: String,
    #[serde(default)]
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateConfig {
    /// Reference figures when absent; an empty table fits nothing.
    pub targets: Option<CalibrationTargets>,
    /// Start from the unfitted parameters instead of the loaded calibration.
    pub from_scratch: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeasibilityConfig {
    /// Die current for the minimum-area search; defaults to the POL current.
    pub demand_a: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Datasets the run relies on; each must exist.
    pub datasets: Vec<String>,
    pub calibration: String,
    pub overrides: DatasetOverrides,

    /// Single cell for `evaluate` and the default for `sweep`.
    pub architecture: String,
    pub topology: String,
    /// Cells for `compare`, `feasibility` and multi-cell sweeps.
    pub architectures: Vec<String>,
    pub topologies: Vec<String>,

    pub total_power_w: f64,
    pub pol_voltage_v: f64,
    pub source_voltage_v: f64,
    pub die_area_mm2: f64,
    pub interposer_margin_mm: f64,
    pub site_spacing_mm: f64,
    pub first_stage_topology: String,
    pub reference_die_attach: String,
    pub proposed_die_attach: String,

    pub strict: bool,
    pub idle_shutdown: bool,
    pub derating: f64,
    pub solver: SolverKind,

    pub output: OutputConfig,
    pub sweep: Option<SweepConfig>,
    pub calibrate: CalibrateConfig,
    pub feasibility: FeasibilityConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = PresetOptions::default();
        RunConfig {
            datasets: Vec::new(),
            calibration: DEFAULT_CALIBRATION.into(),
            overrides: DatasetOverrides::default(),
            architecture: "A1".into(),
            topology: "DSCH".into(),
            architectures: Vec::new(),
            topologies: Vec::new(),
            total_power_w: p.total_power_w,
            pol_voltage_v: p.pol_voltage_v,
            source_voltage_v: p.source_voltage_v,
            die_area_mm2: p.die_area_mm2,
            interposer_margin_mm: p.interposer_margin_mm,
            site_spacing_mm: p.site_spacing_mm,
            first_stage_topology: p.first_stage_topology,
            reference_die_attach: p.reference_die_attach,
            proposed_die_attach: p.proposed_die_attach,
            strict: false,
            idle_shutdown: false,
            derating: 1.0,
            solver: SolverKind::default(),
            output: OutputConfig::default(),
            sweep: None,
            calibrate: CalibrateConfig::default(),
            feasibility: FeasibilityConfig::default(),
        }
    }
}

/// Where a parse failed: `line:column` when known plus the field path.
fn parse_error(source: &str, path: String, inner: String) -> Error {
    Error::invalid(format!("config {source}"), format!("{inner} (at `{path}`)"))
}

impl RunConfig {
    pub fn from_json(text: &str, source: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| parse_error(source, e.path().to_string(), e.inner().to_string()))
    }

    pub fn from_toml(text: &str, source: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| parse_error(source, ".".into(), e.to_string()))?;
        serde_path_to_error::deserialize(de).map_err(|e| {
            let inner = e.inner().to_string();
            parse_error(source, e.path().to_string(), inner.trim_end().to_string())
        })
    }

    /// Parse by extension: `.toml` is TOML, anything else JSON.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::invalid(format!("config {}", path.display()), e.to_string()))?;
        let source = path.display().to_string();
        let cfg = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml")) {
            Self::from_toml(&text, &source)?
        } else {
            Self::from_json(&text, &source)?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for name in &self.datasets {
            if ![INTERCONNECT_DATASET, CONVERTER_DATASET, self.calibration.as_str()].contains(&name.as_str()) {
                return Err(Error::Unknown {
                    kind: "dataset",
                    name: name.clone(),
                });
            }
        }
        Preset::parse(&self.architecture)?;
        for a in &self.architectures {
            Preset::parse(a)?;
        }
        for (what, v) in [
            ("total_power_w", self.total_power_w),
            ("pol_voltage_v", self.pol_voltage_v),
            ("source_voltage_v", self.source_voltage_v),
            ("die_area_mm2", self.die_area_mm2),
        ] {
            if !(v > 0.0) {
                return Err(Error::invalid("config", format!("{what} must be > 0")));
            }
        }
        if !(self.derating > 0.0 && self.derating <= 1.0) {
            return Err(Error::invalid("config", "derating must lie in (0, 1]"));
        }
        Ok(())
    }

    /// Load datasets from `PDNX_DATA_DIR` (or built-ins) with the config's
    /// overrides, and check that every referenced topology exists.
    pub fn datasets(&self) -> Result<Datasets> {
        let dir = crate::dataset::data_dir_from_env();
        let data = Datasets::load_with_calibration(dir.as_deref(), &self.calibration, &self.overrides)?;
        for t in self.topology_list(false).iter().chain([&self.topology, &self.first_stage_topology]) {
            data.converters.topology(t)?;
        }
        Ok(data)
    }

    pub fn preset_options(&self) -> PresetOptions {
        PresetOptions {
            die_area_mm2: self.die_area_mm2,
            total_power_w: self.total_power_w,
            pol_voltage_v: self.pol_voltage_v,
            source_voltage_v: self.source_voltage_v,
            interposer_margin_mm: self.interposer_margin_mm,
            site_spacing_mm: self.site_spacing_mm,
            first_stage_topology: self.first_stage_topology.clone(),
            reference_die_attach: self.reference_die_attach.clone(),
            proposed_die_attach: self.proposed_die_attach.clone(),
            power_fraction: 0.5,
        }
    }

    pub fn eval_settings(&self) -> EvalSettings {
        EvalSettings {
            strict: self.strict,
            idle_shutdown: self.idle_shutdown,
            derating: self.derating,
            solver: self.solver,
        }
    }

    /// Architectures of a multi-cell run; all presets unless listed, or the
    /// single `architecture` when `single` is set.
    pub fn preset_list(&self, single: bool) -> Vec<Preset> {
        if !self.architectures.is_empty() {
            self.architectures.iter().map(|a| Preset::parse(a).unwrap()).collect()
        } else if single {
            vec![Preset::parse(&self.architecture).unwrap()]
        } else {
            Preset::ALL.to_vec()
        }
    }

    /// Topologies of a multi-cell run; DSCH and DPMIH unless listed, or the
    /// single `topology` when `single` is set.
    pub fn topology_list(&self, single: bool) -> Vec<String> {
        if !self.topologies.is_empty() {
            self.topologies.clone()
        } else if single {
            vec![self.topology.clone()]
        } else {
            vec!["DSCH".into(), "DPMIH".into()]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_and_toml_agree() {
        let json = r#"{
            "architecture": "A2",
            "topology": "DSCH",
            "die_area_mm2": 600,
            "output": {"formats": ["json", "csv"]},
            "overrides": {"levels": {"bga": {"pitch_um": 900}}},
            "sweep": {"parameter": "die_area_mm2", "values": [500, 600]}
        }"#;
        let toml = r#"
            architecture = "A2"
            topology = "DSCH"
            die_area_mm2 = 600.0

            [output]
            formats = ["json", "csv"]

            [overrides.levels.bga]
            pitch_um = 900

            [sweep]
            parameter = "die_area_mm2"
            values = [500.0, 600.0]
        "#;
        let a = RunConfig::from_json(json, "a.json").unwrap();
        let b = RunConfig::from_toml(toml, "b.toml").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.die_area_mm2, 600.0);
        assert_eq!(a.calibration, "calibration-default");
    }

    #[test]
    fn diagnostics_name_the_field() {
        let err = RunConfig::from_json(r#"{"output": {"formats": ["pdf"]}}"#, "c.json").unwrap_err();
        assert!(err.to_string().contains("output.formats"), "{err}");
        let err = RunConfig::from_json("{\n  \"die_area_mm\": 5\n}", "c.json").unwrap_err();
        assert!(err.to_string().contains("die_area_mm"), "{err}");
        assert!(err.to_string().contains("line 2"), "{err}");
        let err = RunConfig::from_toml("die_area_mm2 = \"big\"\n", "c.toml").unwrap_err();
        assert!(err.to_string().contains("die_area_mm2"), "{err}");
    }

    #[test]
    fn unknown_names_are_rejected() {
        let cfg = RunConfig {
            datasets: vec!["table9".into()],
            ..Default::default()
        };
        assert_eq!(
            cfg.validate(),
            Err(Error::Unknown {
                kind: "dataset",
                name: "table9".into()
            })
        );
        let cfg = RunConfig {
            topology: "BUCK".into(),
            ..Default::default()
        };
        assert!(matches!(cfg.datasets(), Err(Error::Unknown { .. })));
    }
}
