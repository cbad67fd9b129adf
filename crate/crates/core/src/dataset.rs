//! Built-in datasets and user overrides.
//!
//! Three datasets ship with the crate: the vertical interconnect table, the
//! converter table and the default calibration. Setting `PDNX_DATA_DIR`
//! points the loader at a directory whose `<name>.json` files replace the
//! built-in copies. Config overrides are merged field by field on top.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::calibration::Calibration;
use crate::converter::ConverterTopology;
use crate::error::{Error, Result};
use crate::interconnect::{InterconnectLevel, Material};

pub const DATA_DIR_ENV: &str = "PDNX_DATA_DIR";

pub const INTERCONNECT_DATASET: &str = "table1";
pub const CONVERTER_DATASET: &str = "table2";
pub const DEFAULT_CALIBRATION: &str = "calibration-default";

const TABLE1_JSON: &str = include_str!("../data/table1.json");
const TABLE2_JSON: &str = include_str!("../data/table2.json");
const CALIBRATION_JSON: &str = include_str!("../data/calibration-default.json");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resistivities {
    pub solder: f64,
    pub copper: f64,
}

/// Vertical interconnect levels characterized for a reference die.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterconnectTable {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub reference_die_area_mm2: f64,
    pub resistivity_ohm_m: Resistivities,
    pub levels: Vec<InterconnectLevel>,
}

impl InterconnectTable {
    pub fn validate(&self) -> Result<()> {
        if !(self.reference_die_area_mm2 > 0.0) {
            return Err(Error::invalid("interconnect table", "reference_die_area_mm2 must be > 0"));
        }
        if !(self.resistivity_ohm_m.solder >= 0.0 && self.resistivity_ohm_m.copper >= 0.0) {
            return Err(Error::invalid("interconnect table", "resistivities must be >= 0"));
        }
        for l in &self.levels {
            l.validate()?;
        }
        Ok(())
    }

    /// Level by name, with its resistivity resolved from the material table.
    pub fn level(&self, name: &str) -> Result<InterconnectLevel> {
        let l = self.levels.iter().find(|l| l.name == name).ok_or_else(|| Error::Unknown {
            kind: "interconnect level",
            name: name.to_string(),
        })?;
        let mut l = l.clone();
        if l.resistivity_ohm_m.is_none() {
            l.resistivity_ohm_m = Some(match l.material {
                Material::Solder => self.resistivity_ohm_m.solder,
                Material::Copper => self.resistivity_ohm_m.copper,
            });
        }
        Ok(l)
    }

    /// Level resized for another die, keeping its platform-to-die ratio.
    pub fn level_for_die(&self, name: &str, die_area_mm2: f64) -> Result<InterconnectLevel> {
        Ok(self.level(name)?.scaled(die_area_mm2 / self.reference_die_area_mm2))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyTable {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub topologies: Vec<ConverterTopology>,
}

impl TopologyTable {
    pub fn get(&self, name: &str) -> Option<&ConverterTopology> {
        self.topologies.iter().find(|t| t.name == name)
    }

    pub fn topology(&self, name: &str) -> Result<&ConverterTopology> {
        self.get(name).ok_or_else(|| Error::Unknown {
            kind: "converter topology",
            name: name.to_string(),
        })
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.topologies.iter().map(|t| t.name.as_str())
    }

    pub fn validate(&self) -> Result<()> {
        for t in &self.topologies {
            t.validate()?;
        }
        Ok(())
    }
}

/// Where a dataset was loaded from and which fields were overridden.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub name: String,
    pub origin: String,
    pub provenance: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub overridden_fields: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Datasets {
    pub interconnect: InterconnectTable,
    pub converters: TopologyTable,
    pub calibration: Calibration,
    pub info: Vec<DatasetInfo>,
}

fn parse<T: serde::de::DeserializeOwned>(name: &str, text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| Error::Dataset {
        source_name: name.to_string(),
        reason: format!("{} at `{}`", e.inner(), e.path()),
    })
}

pub fn builtin_interconnect() -> Result<InterconnectTable> {
    parse(INTERCONNECT_DATASET, TABLE1_JSON)
}

pub fn builtin_topologies() -> Result<TopologyTable> {
    parse(CONVERTER_DATASET, TABLE2_JSON)
}

pub fn builtin_calibration() -> Result<Calibration> {
    parse(DEFAULT_CALIBRATION, CALIBRATION_JSON)
}

fn provenance(name: &str) -> &'static str {
    match name {
        INTERCONNECT_DATASET => "vertical interconnect geometry and materials for a 500 mm2, 1 kA die",
        CONVERTER_DATASET => "datasheet points of compact high-current 48V-to-1V converters",
        DEFAULT_CALIBRATION => "fitted plane resistance, access resistance, demand profile, ampacities",
        _ => "user supplied",
    }
}

/// Data directory from `PDNX_DATA_DIR`, if set and non-empty.
pub fn data_dir_from_env() -> Option<PathBuf> {
    std::env::var_os(DATA_DIR_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
}

/// Raw JSON text of a dataset: `<dir>/<name>.json` when present, else the
/// built-in copy.
fn load_text(name: &str, dir: Option<&Path>) -> Result<(String, String)> {
    if let Some(dir) = dir {
        let path = dir.join(format!("{name}.json"));
        if path.is_file() {
            let text = std::fs::read_to_string(&path).map_err(|e| Error::Dataset {
                source_name: name.to_string(),
                reason: format!("{}: {e}", path.display()),
            })?;
            return Ok((text, path.display().to_string()));
        }
    }
    let text = match name {
        INTERCONNECT_DATASET => TABLE1_JSON,
        CONVERTER_DATASET => TABLE2_JSON,
        DEFAULT_CALIBRATION => CALIBRATION_JSON,
        _ => {
            return Err(Error::Unknown {
                kind: "dataset",
                name: name.to_string(),
            })
        }
    };
    Ok((text.to_string(), "built-in".to_string()))
}

/// Field-wise overrides applied on top of the loaded datasets.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetOverrides {
    /// Per level name: fields of [`InterconnectLevel`]. Unknown names add a
    /// level, which then needs every required field.
    #[serde(default)]
    pub levels: BTreeMap<String, Map<String, Value>>,
    #[serde(default)]
    pub resistivity_ohm_m: Map<String, Value>,
    /// Per topology name: fields of [`ConverterTopology`].
    #[serde(default)]
    pub topologies: BTreeMap<String, Map<String, Value>>,
    /// Fields of [`Calibration`], e.g. `sheet_resistance_ohm_sq` or
    /// `policy.<level>.ampacity_a`.
    #[serde(default)]
    pub calibration: Map<String, Value>,
}

impl DatasetOverrides {
    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
            && self.resistivity_ohm_m.is_empty()
            && self.topologies.is_empty()
            && self.calibration.is_empty()
    }
}

/// Recursively merge `patch` into `base`; records dotted paths of changed
/// leaves.
fn merge(base: &mut Value, patch: &Map<String, Value>, prefix: &str, changed: &mut Vec<String>) {
    if !base.is_object() {
        *base = Value::Object(Map::new());
    }
    let obj = base.as_object_mut().unwrap();
    for (k, v) in patch {
        let path = format!("{prefix}.{k}");
        match (obj.get_mut(k), v) {
            (Some(existing @ Value::Object(_)), Value::Object(p)) => merge(existing, p, &path, changed),
            (Some(existing), _) => {
                if existing != v {
                    *existing = v.clone();
                    changed.push(path);
                }
            }
            (None, _) => {
                obj.insert(k.clone(), v.clone());
                changed.push(path);
            }
        }
    }
}

fn merge_named(list: &mut Value, key: &str, name: &str, patch: &Map<String, Value>, prefix: &str, changed: &mut Vec<String>) {
    let items = list
        .get_mut(key)
        .and_then(Value::as_array_mut)
        .expect("dataset list field");
    let path = format!("{prefix}.{name}");
    match items.iter_mut().find(|it| it.get("name").and_then(Value::as_str) == Some(name)) {
        Some(item) => merge(item, patch, &path, changed),
        None => {
            let mut item = Value::Object(Map::new());
            item["name"] = Value::String(name.to_string());
            merge(&mut item, patch, &path, changed);
            items.push(item);
        }
    }
}

impl Datasets {
    /// Built-in datasets only.
    pub fn builtin() -> Result<Self> {
        Self::load(None, &DatasetOverrides::default())
    }

    /// Datasets from `PDNX_DATA_DIR` (falling back to built-ins) with
    /// overrides applied.
    pub fn from_env(overrides: &DatasetOverrides) -> Result<Self> {
        Self::load(data_dir_from_env().as_deref(), overrides)
    }

    pub fn load(dir: Option<&Path>, overrides: &DatasetOverrides) -> Result<Self> {
        Self::load_with_calibration(dir, DEFAULT_CALIBRATION, overrides)
    }

    /// As [`Datasets::load`] with a named calibration (`<dir>/<name>.json`).
    pub fn load_with_calibration(dir: Option<&Path>, calibration: &str, overrides: &DatasetOverrides) -> Result<Self> {
        let mut info = Vec::new();

        let (text, origin) = load_text(INTERCONNECT_DATASET, dir)?;
        let mut table1: Value = parse(INTERCONNECT_DATASET, &text)?;
        let mut changed = Vec::new();
        if !overrides.resistivity_ohm_m.is_empty() {
            let r = table1.get_mut("resistivity_ohm_m").expect("resistivity table");
            merge(r, &overrides.resistivity_ohm_m, "resistivity_ohm_m", &mut changed);
        }
        for (name, patch) in &overrides.levels {
            merge_named(&mut table1, "levels", name, patch, "levels", &mut changed);
        }
        let interconnect: InterconnectTable = parse(INTERCONNECT_DATASET, &table1.to_string())?;
        interconnect.validate()?;
        info.push(DatasetInfo {
            name: INTERCONNECT_DATASET.into(),
            origin,
            provenance: provenance(INTERCONNECT_DATASET).into(),
            overridden_fields: changed,
        });

        let (text, origin) = load_text(CONVERTER_DATASET, dir)?;
        let mut table2: Value = parse(CONVERTER_DATASET, &text)?;
        let mut changed = Vec::new();
        for (name, patch) in &overrides.topologies {
            merge_named(&mut table2, "topologies", name, patch, "topologies", &mut changed);
        }
        let converters: TopologyTable = parse(CONVERTER_DATASET, &table2.to_string())?;
        converters.validate()?;
        info.push(DatasetInfo {
            name: CONVERTER_DATASET.into(),
            origin,
            provenance: provenance(CONVERTER_DATASET).into(),
            overridden_fields: changed,
        });

        let (text, origin) = load_text(calibration, dir)?;
        let mut cal: Value = parse(calibration, &text)?;
        let mut changed = Vec::new();
        if !overrides.calibration.is_empty() {
            merge(&mut cal, &overrides.calibration, "calibration", &mut changed);
        }
        let calibration_data: Calibration = parse(calibration, &cal.to_string())?;
        calibration_data.validate()?;
        info.push(DatasetInfo {
            name: calibration.into(),
            origin,
            provenance: provenance(calibration).into(),
            overridden_fields: changed,
        });

        Ok(Datasets {
            interconnect,
            converters,
            calibration: calibration_data,
            info,
        })
    }
}
