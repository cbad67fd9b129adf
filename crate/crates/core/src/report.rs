//! Serialization of results: JSON for machines, CSV for plotting and
//! aligned text for people. CSV uses a header row, commas and `.` decimals.

use serde::Serialize;

use crate::architecture::{CellResult, ComparisonTable, DieAreaResult, LevelUtilization, LossBreakdown};
use crate::calibration::Calibration;
use crate::dataset::Datasets;

pub fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report types serialize") + "\n"
}

fn csv_from_rows(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

/// Columns padded to equal width; the first column left-aligned.
pub fn aligned(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: Vec<&str>| {
        let mut s = String::new();
        for (i, (c, w)) in cells.iter().zip(&widths).enumerate() {
            if i > 0 {
                s.push_str("  ");
            }
            if i == 0 {
                s.push_str(&format!("{c:<w$}"));
            } else {
                s.push_str(&format!("{c:>w$}"));
            }
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = line(header.to_vec());
    out.push_str(&line(widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>().iter().map(String::as_str).collect()));
    for r in rows {
        out.push_str(&line(r.iter().map(String::as_str).collect()));
    }
    out
}

fn f(v: f64) -> String {
    v.to_string()
}

fn f2(v: f64) -> String {
    format!("{v:.2}")
}

const BREAKDOWN_HEADER: [&str; 6] = ["category", "item", "domain_voltage_v", "current_a", "loss_w", "loss_pct"];

fn breakdown_rows(b: &LossBreakdown, fmt: fn(f64) -> String) -> Vec<Vec<String>> {
    let pct = |w: f64| 100.0 * w / b.total_power_w;
    let mut rows = Vec::new();
    for l in &b.vertical {
        rows.push(vec![
            "vertical".into(),
            l.level.clone(),
            fmt(l.domain_voltage_v),
            fmt(l.current_a),
            fmt(l.loss_w),
            fmt(pct(l.loss_w)),
        ]);
    }
    for p in &b.horizontal {
        rows.push(vec![
            "horizontal".into(),
            p.name.clone(),
            fmt(p.domain_voltage_v),
            fmt(p.current_a),
            fmt(p.loss_w),
            fmt(pct(p.loss_w)),
        ]);
    }
    for s in &b.stages {
        rows.push(vec![
            "converter".into(),
            s.converter.clone(),
            fmt(s.v_out_v),
            fmt(s.vr_currents_a.iter().sum()),
            fmt(s.loss_w),
            fmt(pct(s.loss_w)),
        ]);
    }
    for (item, w, p) in [
        ("vertical", b.vertical_loss_w, b.vertical_loss_pct),
        ("horizontal", b.horizontal_loss_w, b.horizontal_loss_pct),
        ("ppdn", b.ppdn_loss_w, b.ppdn_loss_pct),
        ("converter", b.converter_loss_w, b.converter_loss_pct),
        ("total", b.total_loss_w, b.total_loss_pct),
    ] {
        rows.push(vec!["total".into(), item.into(), String::new(), String::new(), fmt(w), fmt(p)]);
    }
    rows
}

/// One evaluated cell as CSV: loss rows, or a single status row.
pub fn cell_csv(cell: &CellResult) -> String {
    match cell {
        CellResult::Reported(b) => csv_from_rows(&BREAKDOWN_HEADER, &breakdown_rows(b, f)),
        CellResult::NotReported { reason, .. } => csv_from_rows(
            &BREAKDOWN_HEADER,
            &[vec!["status".into(), "not_reported".into(), String::new(), String::new(), String::new(), reason.clone()]],
        ),
    }
}

pub fn cell_text(architecture: &str, topology: &str, cell: &CellResult) -> String {
    let mut out = format!("{architecture} with {topology}\n\n");
    match cell {
        CellResult::NotReported { reason, .. } => out.push_str(&format!("not reported: {reason}\n")),
        CellResult::Reported(b) => {
            out.push_str(&aligned(&BREAKDOWN_HEADER, &breakdown_rows(b, f2)));
            out.push('\n');
            let vr_rows: Vec<Vec<String>> = b
                .stages
                .iter()
                .map(|s| {
                    vec![
                        s.converter.clone(),
                        s.placement.as_str().into(),
                        s.vr_count.to_string(),
                        f2(s.spread.min_a),
                        f2(s.spread.mean_a),
                        f2(s.spread.max_a),
                    ]
                })
                .collect();
            out.push_str(&aligned(&["stage", "placement", "vrs", "min_a", "mean_a", "max_a"], &vr_rows));
            out.push('\n');
            let checks: Vec<Vec<String>> = b
                .feasibility
                .iter()
                .map(|c| vec![c.check.clone(), format!("{:?}", c.status).to_lowercase(), c.detail.clone()])
                .collect();
            out.push_str(&aligned(&["check", "status", "detail"], &checks));
            if !b.assumptions.is_empty() {
                out.push('\n');
                for a in &b.assumptions {
                    out.push_str(&format!("assumption: {a}\n"));
                }
            }
        }
    }
    out
}

/// Per-VR currents of every stage.
pub fn vr_currents_csv(b: &LossBreakdown) -> String {
    let mut rows = Vec::new();
    for (k, s) in b.stages.iter().enumerate() {
        for (i, c) in s.vr_currents_a.iter().enumerate() {
            rows.push(vec![k.to_string(), s.converter.clone(), i.to_string(), f(*c)]);
        }
    }
    csv_from_rows(&["stage", "converter", "vr", "current_a"], &rows)
}

const COMPARISON_HEADER: [&str; 13] = [
    "architecture",
    "topology",
    "status",
    "total_loss_pct",
    "ppdn_loss_pct",
    "converter_loss_pct",
    "vertical_loss_w",
    "horizontal_loss_w",
    "converter_loss_w",
    "total_loss_w",
    "vr_current_min_a",
    "vr_current_max_a",
    "note",
];

fn comparison_rows(t: &ComparisonTable, fmt: fn(f64) -> String) -> Vec<Vec<String>> {
    t.cells
        .iter()
        .map(|c| {
            let mut row = vec![c.architecture.clone(), c.topology.clone()];
            match &c.result {
                CellResult::Reported(b) => {
                    let s = &b.stages.last().unwrap().spread;
                    row.push("reported".into());
                    for v in [
                        b.total_loss_pct,
                        b.ppdn_loss_pct,
                        b.converter_loss_pct,
                        b.vertical_loss_w,
                        b.horizontal_loss_w,
                        b.converter_loss_w,
                        b.total_loss_w,
                        s.min_a,
                        s.max_a,
                    ] {
                        row.push(fmt(v));
                    }
                    row.push(if b.has_failures() { "infeasible".into() } else { String::new() });
                }
                CellResult::NotReported { reason, .. } => {
                    row.push("not_reported".into());
                    row.extend(std::iter::repeat_n(String::new(), 9));
                    row.push(reason.clone());
                }
            }
            row
        })
        .collect()
}

pub fn comparison_csv(t: &ComparisonTable) -> String {
    csv_from_rows(&COMPARISON_HEADER, &comparison_rows(t, f))
}

pub fn comparison_text(t: &ComparisonTable) -> String {
    let header: Vec<&str> = COMPARISON_HEADER[..12].to_vec();
    let rows: Vec<Vec<String>> = comparison_rows(t, f2)
        .into_iter()
        .map(|mut r| {
            if r[2] == "not_reported" {
                r[3] = "n/r".into();
            }
            r.truncate(12);
            r
        })
        .collect();
    let mut out = aligned(&header, &rows);
    let notes: Vec<String> = t
        .cells
        .iter()
        .filter_map(|c| match &c.result {
            CellResult::NotReported { reason, .. } => Some(format!("  {} with {}: {reason}\n", c.architecture, c.topology)),
            CellResult::Reported(_) => None,
        })
        .collect();
    if !notes.is_empty() {
        out.push_str("\nn/r = not reported:\n");
        out.extend(notes);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub parameter: String,
    pub value: f64,
    pub architecture: String,
    pub topology: String,
    pub status: String,
    pub total_loss_pct: Option<f64>,
    pub vertical_loss_w: Option<f64>,
    pub horizontal_loss_w: Option<f64>,
    pub converter_loss_w: Option<f64>,
    pub feasible: bool,
}

const SWEEP_HEADER: [&str; 10] = [
    "parameter",
    "value",
    "architecture",
    "topology",
    "status",
    "total_loss_pct",
    "vertical_loss_w",
    "horizontal_loss_w",
    "converter_loss_w",
    "feasible",
];

fn sweep_rows(rows: &[SweepRow], fmt: fn(f64) -> String) -> Vec<Vec<String>> {
    let opt = |v: Option<f64>| v.map(fmt).unwrap_or_default();
    rows.iter()
        .map(|r| {
            vec![
                r.parameter.clone(),
                f(r.value),
                r.architecture.clone(),
                r.topology.clone(),
                r.status.clone(),
                opt(r.total_loss_pct),
                opt(r.vertical_loss_w),
                opt(r.horizontal_loss_w),
                opt(r.converter_loss_w),
                r.feasible.to_string(),
            ]
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    csv_from_rows(&SWEEP_HEADER, &sweep_rows(rows, f))
}

pub fn sweep_text(rows: &[SweepRow]) -> String {
    aligned(&SWEEP_HEADER, &sweep_rows(rows, f2))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UtilizationEntry {
    pub architecture: String,
    pub topology: String,
    pub levels: Vec<LevelUtilization>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub demand_a: f64,
    pub min_die_area: Option<DieAreaResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_die_area_error: Option<String>,
    pub utilization: Vec<UtilizationEntry>,
}

impl FeasibilityReport {
    pub fn has_failures(&self) -> bool {
        self.min_die_area.is_none() || self.utilization.iter().flat_map(|u| &u.levels).any(|l| l.violation)
    }
}

const UTILIZATION_HEADER: [&str; 10] = [
    "architecture",
    "topology",
    "level",
    "domain_voltage_v",
    "current_a",
    "used",
    "available",
    "utilization",
    "cap",
    "violation",
];

fn utilization_rows(r: &FeasibilityReport, human: bool) -> Vec<Vec<String>> {
    let fmt = if human { f2 } else { f };
    let mut rows = Vec::new();
    for u in &r.utilization {
        for l in &u.levels {
            rows.push(vec![
                u.architecture.clone(),
                u.topology.clone(),
                l.level.clone(),
                fmt(l.domain_voltage_v),
                fmt(l.current_a),
                l.used.to_string(),
                l.available.to_string(),
                if human {
                    format!("{:.2}%", 100.0 * l.utilization)
                } else {
                    f(l.utilization)
                },
                fmt(l.cap),
                l.violation.to_string(),
            ]);
        }
    }
    rows
}

pub fn feasibility_csv(r: &FeasibilityReport) -> String {
    csv_from_rows(&UTILIZATION_HEADER, &utilization_rows(r, false))
}

pub fn feasibility_text(r: &FeasibilityReport) -> String {
    let mut out = match (&r.min_die_area, &r.min_die_area_error) {
        (Some(a), _) => format!(
            "minimum die area for {} A: {} mm2 ({:.1} A/mm2{})\n\n",
            r.demand_a,
            a.die_area_mm2,
            a.density_a_per_mm2,
            a.binding_level
                .as_ref()
                .map(|l| format!(", limited by {l}"))
                .unwrap_or_default()
        ),
        (None, Some(e)) => format!("minimum die area for {} A: {e}\n\n", r.demand_a),
        (None, None) => String::new(),
    };
    out.push_str(&aligned(&UTILIZATION_HEADER, &utilization_rows(r, true)));
    out
}

pub fn calibration_text(c: &Calibration) -> String {
    let mut out = format!(
        "{}\nsheet resistance     {:.6e} ohm/sq\nVR access            {:.4} sq\nboard lateral        {:.6e} ohm\ndemand profile       {:?}\n\n",
        c.name, c.sheet_resistance_ohm_sq, c.vr_access_squares, c.pcb_lateral_resistance_ohm, c.demand_profile
    );
    let rows: Vec<Vec<String>> = c
        .residuals
        .iter()
        .map(|(k, r)| {
            vec![
                k.clone(),
                format!("{:.4}", r.target),
                format!("{:.4}", r.achieved),
                format!("{:+.2}%", 100.0 * r.relative_error),
            ]
        })
        .collect();
    out.push_str(&aligned(&["target", "wanted", "achieved", "error"], &rows));
    out
}

pub fn datasets_text(d: &Datasets) -> String {
    let mut out = String::new();
    for i in &d.info {
        out.push_str(&format!("{:<20} {}  [{}]\n", i.name, i.provenance, i.origin));
        for f in &i.overridden_fields {
            out.push_str(&format!("  overridden: {f}\n"));
        }
    }
    out.push_str(&format!(
        "\nlevels:     {}\ntopologies: {}\n",
        d.interconnect.levels.iter().map(|l| l.name.as_str()).collect::<Vec<_>>().join(", "),
        d.converters.names().collect::<Vec<_>>().join(", ")
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aligned_columns() {
        let t = aligned(&["a", "bb"], &[vec!["xyz".into(), "1".into()]]);
        assert_eq!(t, "a    bb\n---  --\nxyz   1\n");
    }

    #[test]
    fn csv_quotes_commas() {
        let s = csv_from_rows(&["x"], &[vec!["a,b".into()]]);
        assert_eq!(s, "x\n\"a,b\"\n");
    }
}
