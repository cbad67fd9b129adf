//! Batch front-end behind the `pdnx` binary.
//!
//! Exit codes: 0 success, 2 config or usage error, 3 feasibility failure in
//! strict mode, 4 numerical failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::architecture::{
    compare, min_die_area_for_current, preset_grid, preset_spec, utilization_report, CellResult, ComparisonCell,
    PresetOptions, Preset,
};
use crate::calibration::{calibrate, Calibration, CalibrationTargets};
use crate::config::{Format, RunConfig};
use crate::dataset::{Datasets, DatasetOverrides};
use crate::error::Error;
use crate::report::{self, FeasibilityReport, SweepRow, UtilizationEntry};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "pdnx", version, about = "Vertical power delivery design-space exploration")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List the datasets in use, flagging overridden fields.
    Datasets(RunArgs),
    /// Loss breakdown of one architecture and topology.
    Evaluate(RunArgs),
    /// Every architecture against every topology.
    Compare(RunArgs),
    /// One evaluation per value of a numeric parameter.
    Sweep(RunArgs),
    /// Fit the model parameters to target figures.
    Calibrate(RunArgs),
    /// Minimum die area and connection utilization.
    Feasibility(RunArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSON or TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated output formats: json, csv, txt.
    #[arg(long, value_delimiter = ',')]
    pub format: Vec<String>,
    /// Treat failed feasibility checks as errors.
    #[arg(long)]
    pub strict: bool,
    /// Add a generation timestamp to text reports.
    #[arg(long)]
    pub stamp: bool,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_numerical() {
            EXIT_NUMERICAL
        } else {
            match e {
                Error::CapExceeded { .. }
                | Error::RatingViolation { .. }
                | Error::LoadExceedsRating { .. }
                | Error::Unsatisfiable { .. } => EXIT_INFEASIBLE,
                _ => EXIT_CONFIG,
            }
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        message: format!("{}: {e}", path.display()),
    }
}

/// Write through a temporary file in the same directory, then rename.
pub fn write_atomic(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, Failure> {
    std::fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    let path = dir.join(name);
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    std::fs::write(&tmp, contents).map_err(|e| io_failure(&tmp, e))?;
    std::fs::rename(&tmp, &path).map_err(|e| io_failure(&path, e))?;
    Ok(path)
}

struct Context {
    cfg: RunConfig,
    data: Datasets,
    out: PathBuf,
    formats: Vec<Format>,
    strict: bool,
    stamp: bool,
}

impl Context {
    fn new(args: &RunArgs, require_config: bool) -> Result<Self, Failure> {
        let cfg = match &args.config {
            Some(p) => RunConfig::load(p)?,
            None if require_config => {
                return Err(Failure {
                    code: EXIT_CONFIG,
                    message: "--config <file> is required".into(),
                })
            }
            None => RunConfig::default(),
        };
        let data = cfg.datasets()?;
        let formats = if !args.format.is_empty() {
            args.format.iter().map(|f| Format::parse(f)).collect::<Result<Vec<_>, _>>()?
        } else if !cfg.output.formats.is_empty() {
            cfg.output.formats.clone()
        } else {
            Format::ALL.to_vec()
        };
        let out = args
            .out
            .clone()
            .or_else(|| cfg.output.dir.clone())
            .unwrap_or_else(|| PathBuf::from("pdnx-out"));
        Ok(Context {
            strict: args.strict || cfg.strict,
            stamp: args.stamp,
            cfg,
            data,
            out,
            formats,
        })
    }

    fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }

    fn text(&self, body: String) -> String {
        if self.stamp {
            let secs = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            format!("generated: {secs} (unix seconds)\n\n{body}")
        } else {
            body
        }
    }

    fn write(&self, name: &str, contents: &str, log: &mut dyn Write) -> Result<(), Failure> {
        let path = write_atomic(&self.out, name, contents)?;
        let _ = writeln!(log, "wrote {}", path.display());
        Ok(())
    }
}

/// Parse arguments and run; returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK {
                write!(stdout, "{text}")
            } else {
                write!(stderr, "{text}")
            };
            return code;
        }
    };
    match dispatch(&cli.command, stdout) {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            f.code
        }
    }
}

fn dispatch(cmd: &Command, out: &mut dyn Write) -> Result<i32, Failure> {
    match cmd {
        Command::Datasets(a) => cmd_datasets(a, out),
        Command::Evaluate(a) => cmd_evaluate(&Context::new(a, true)?, out),
        Command::Compare(a) => cmd_compare(&Context::new(a, true)?, out),
        Command::Sweep(a) => cmd_sweep(&Context::new(a, true)?, out),
        Command::Calibrate(a) => cmd_calibrate(&Context::new(a, true)?, out),
        Command::Feasibility(a) => cmd_feasibility(&Context::new(a, true)?, out),
    }
}

fn cmd_datasets(args: &RunArgs, log: &mut dyn Write) -> Result<i32, Failure> {
    let ctx = Context::new(args, false)?;
    let _ = write!(log, "{}", report::datasets_text(&ctx.data));
    if args.out.is_some() {
        if ctx.wants(Format::Json) {
            ctx.write("datasets.json", &report::to_json(&ctx.data.info), log)?;
        }
        if ctx.wants(Format::Txt) {
            ctx.write("datasets.txt", &ctx.text(report::datasets_text(&ctx.data)), log)?;
        }
    }
    Ok(EXIT_OK)
}

fn cell_failed(cell: &CellResult) -> bool {
    match cell {
        CellResult::Reported(b) => b.has_failures(),
        CellResult::NotReported { .. } => true,
    }
}

/// Numerical errors abort the run instead of becoming cell markers.
fn check_numerical(cells: &[ComparisonCell]) -> Result<(), Failure> {
    for c in cells {
        if let CellResult::NotReported { reason, numerical: true } = &c.result {
            return Err(Failure {
                code: EXIT_NUMERICAL,
                message: format!("{} with {}: {reason}", c.architecture, c.topology),
            });
        }
    }
    Ok(())
}

fn cmd_evaluate(ctx: &Context, log: &mut dyn Write) -> Result<i32, Failure> {
    let preset = Preset::parse(&ctx.cfg.architecture)?;
    let spec = preset_spec(preset, &ctx.cfg.topology, &ctx.data, &ctx.cfg.preset_options())?;
    let table = compare(&[(spec, ctx.cfg.topology.clone())], &ctx.data.calibration, &ctx.cfg.eval_settings());
    check_numerical(&table.cells)?;
    let cell = &table.cells[0];
    if ctx.wants(Format::Json) {
        ctx.write("breakdown.json", &report::to_json(cell), log)?;
    }
    if ctx.wants(Format::Csv) {
        ctx.write("breakdown.csv", &report::cell_csv(&cell.result), log)?;
        if let CellResult::Reported(b) = &cell.result {
            ctx.write("vr_currents.csv", &report::vr_currents_csv(b), log)?;
        }
    }
    if ctx.wants(Format::Txt) {
        ctx.write(
            "breakdown.txt",
            &ctx.text(report::cell_text(&cell.architecture, &cell.topology, &cell.result)),
            log,
        )?;
    }
    Ok(if ctx.strict && cell_failed(&cell.result) {
        EXIT_INFEASIBLE
    } else {
        EXIT_OK
    })
}

fn cmd_compare(ctx: &Context, log: &mut dyn Write) -> Result<i32, Failure> {
    let specs = preset_grid(
        &ctx.cfg.preset_list(false),
        &ctx.cfg.topology_list(false),
        &ctx.data,
        &ctx.cfg.preset_options(),
    )?;
    let table = compare(&specs, &ctx.data.calibration, &ctx.cfg.eval_settings());
    check_numerical(&table.cells)?;
    if ctx.wants(Format::Json) {
        ctx.write("comparison.json", &report::to_json(&table), log)?;
    }
    if ctx.wants(Format::Csv) {
        ctx.write("comparison.csv", &report::comparison_csv(&table), log)?;
    }
    if ctx.wants(Format::Txt) {
        ctx.write("comparison.txt", &ctx.text(report::comparison_text(&table)), log)?;
    }
    let failed = table
        .cells
        .iter()
        .any(|c| matches!(&c.result, CellResult::Reported(b) if b.has_failures()));
    Ok(if ctx.strict && failed { EXIT_INFEASIBLE } else { EXIT_OK })
}

/// Numeric knobs accepted by `sweep`.
pub const SWEEP_PARAMETERS: [&str; 8] = [
    "sheet_resistance_ohm_sq",
    "sheet_resistance_scale",
    "vr_access_squares",
    "pcb_lateral_resistance_ohm",
    "die_area_mm2",
    "total_power_w",
    "derating",
    "grid_resolution",
];

fn apply_sweep(parameter: &str, value: f64, cal: &mut Calibration, opts: &mut PresetOptions, derating: &mut f64) -> Result<(), Error> {
    match parameter {
        "sheet_resistance_ohm_sq" => cal.sheet_resistance_ohm_sq = value,
        "sheet_resistance_scale" => cal.sheet_resistance_ohm_sq *= value,
        "vr_access_squares" => cal.vr_access_squares = value,
        "pcb_lateral_resistance_ohm" => cal.pcb_lateral_resistance_ohm = value,
        "die_area_mm2" => opts.die_area_mm2 = value,
        "total_power_w" => opts.total_power_w = value,
        "derating" => *derating = value,
        "grid_resolution" => cal.grid_resolution = value as usize,
        _ => {
            return Err(Error::Unknown {
                kind: "sweep parameter",
                name: parameter.to_string(),
            })
        }
    }
    Ok(())
}

fn cmd_sweep(ctx: &Context, log: &mut dyn Write) -> Result<i32, Failure> {
    let sweep = ctx.cfg.sweep.clone().ok_or_else(|| Failure {
        code: EXIT_CONFIG,
        message: "config has no `sweep` section".into(),
    })?;
    // reject unknown parameters even for an empty range
    apply_sweep(
        &sweep.parameter,
        1.0,
        &mut ctx.data.calibration.clone(),
        &mut ctx.cfg.preset_options(),
        &mut 1.0,
    )?;
    let presets = ctx.cfg.preset_list(true);
    let topologies = ctx.cfg.topology_list(true);
    let per_value: Vec<Result<Vec<SweepRow>, Error>> = sweep
        .values
        .par_iter()
        .map(|&value| {
            let mut cal = ctx.data.calibration.clone();
            let mut opts = ctx.cfg.preset_options();
            let mut settings = ctx.cfg.eval_settings();
            apply_sweep(&sweep.parameter, value, &mut cal, &mut opts, &mut settings.derating)?;
            let specs = preset_grid(&presets, &topologies, &ctx.data, &opts)?;
            let table = compare(&specs, &cal, &settings);
            Ok(table
                .cells
                .into_iter()
                .map(|c| {
                    let b = match &c.result {
                        CellResult::Reported(b) => Some(b),
                        CellResult::NotReported { .. } => None,
                    };
                    SweepRow {
                        parameter: sweep.parameter.clone(),
                        value,
                        architecture: c.architecture.clone(),
                        topology: c.topology.clone(),
                        status: if b.is_some() { "reported" } else { "not_reported" }.into(),
                        total_loss_pct: b.map(|b| b.total_loss_pct),
                        vertical_loss_w: b.map(|b| b.vertical_loss_w),
                        horizontal_loss_w: b.map(|b| b.horizontal_loss_w),
                        converter_loss_w: b.map(|b| b.converter_loss_w),
                        feasible: b.is_some_and(|b| !b.has_failures()),
                    }
                })
                .collect())
        })
        .collect();
    let mut rows = Vec::new();
    for r in per_value {
        rows.extend(r?);
    }
    if ctx.wants(Format::Json) {
        ctx.write("sweep.json", &report::to_json(&rows), log)?;
    }
    if ctx.wants(Format::Csv) {
        ctx.write("sweep.csv", &report::sweep_csv(&rows), log)?;
    }
    if ctx.wants(Format::Txt) {
        ctx.write("sweep.txt", &ctx.text(report::sweep_text(&rows)), log)?;
    }
    Ok(if ctx.strict && rows.iter().any(|r| !r.feasible) {
        EXIT_INFEASIBLE
    } else {
        EXIT_OK
    })
}

fn cmd_calibrate(ctx: &Context, log: &mut dyn Write) -> Result<i32, Failure> {
    let targets = ctx
        .cfg
        .calibrate
        .targets
        .clone()
        .unwrap_or_else(CalibrationTargets::reference);
    let base = if ctx.cfg.calibrate.from_scratch {
        Calibration::uncalibrated()
    } else {
        ctx.data.calibration.clone()
    };
    let cal = calibrate(&ctx.data, &base, &targets, &ctx.cfg.preset_options())?;
    // the fitted dataset is always JSON so that it can be loaded back
    ctx.write("calibration-user.json", &report::to_json(&cal), log)?;
    if ctx.wants(Format::Txt) {
        ctx.write("calibration-user.txt", &ctx.text(report::calibration_text(&cal)), log)?;
    }
    Ok(EXIT_OK)
}

fn cmd_feasibility(ctx: &Context, log: &mut dyn Write) -> Result<i32, Failure> {
    let opts = ctx.cfg.preset_options();
    let demand = ctx
        .cfg
        .feasibility
        .demand_a
        .unwrap_or(opts.total_power_w / opts.pol_voltage_v);
    let reference_area = ctx.data.interconnect.reference_die_area_mm2;
    let reference = preset_spec(
        Preset::A0,
        &ctx.cfg.topology,
        &ctx.data,
        &PresetOptions {
            die_area_mm2: reference_area,
            ..opts.clone()
        },
    )?;
    let (min_die_area, min_die_area_error) =
        match min_die_area_for_current(demand, &ctx.data.calibration.policy, &reference.stack, reference_area, 1.0) {
            Ok(r) => (Some(r), None),
            Err(e @ Error::Unsatisfiable { .. }) => (None, Some(e.to_string())),
            Err(e) => return Err(e.into()),
        };
    let specs = preset_grid(&ctx.cfg.preset_list(false), &ctx.cfg.topology_list(true), &ctx.data, &opts)?;
    let table = compare(&specs, &ctx.data.calibration, &ctx.cfg.eval_settings());
    check_numerical(&table.cells)?;
    let utilization = table
        .cells
        .iter()
        .filter_map(|c| match &c.result {
            CellResult::Reported(b) => Some(UtilizationEntry {
                architecture: c.architecture.clone(),
                topology: c.topology.clone(),
                levels: utilization_report(b),
            }),
            CellResult::NotReported { .. } => None,
        })
        .collect();
    let rep = FeasibilityReport {
        demand_a: demand,
        min_die_area,
        min_die_area_error,
        utilization,
    };
    if ctx.wants(Format::Json) {
        ctx.write("feasibility.json", &report::to_json(&rep), log)?;
    }
    if ctx.wants(Format::Csv) {
        ctx.write("feasibility.csv", &report::feasibility_csv(&rep), log)?;
    }
    if ctx.wants(Format::Txt) {
        ctx.write("feasibility.txt", &ctx.text(report::feasibility_text(&rep)), log)?;
    }
    Ok(if ctx.strict && rep.has_failures() {
        EXIT_INFEASIBLE
    } else {
        EXIT_OK
    })
}

/// Overrides that only touch datasets, for callers building configs in code.
pub fn overrides_only(overrides: DatasetOverrides) -> RunConfig {
    RunConfig {
        overrides,
        ..RunConfig::default()
    }
}
