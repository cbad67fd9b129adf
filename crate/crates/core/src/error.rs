use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failures raised by the modeling pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid {what}: {reason}")]
    Invalid { what: String, reason: String },

    #[error("level `{level}` has zero power connections")]
    ZeroConnections { level: String },

    #[error("level `{level}` exceeds usage cap ({utilization:.4} > {cap:.4}); max current {max_current_a:.3} A")]
    CapExceeded {
        level: String,
        utilization: f64,
        cap: f64,
        max_current_a: f64,
    },

    #[error("converter `{topology}` VR {index} load {load_a:.3} A exceeds rating {rating_a:.3} A")]
    LoadExceedsRating {
        topology: String,
        index: usize,
        load_a: f64,
        rating_a: f64,
    },

    #[error("periphery placement needs {needed_mm:.3} mm of margin, only {margin_mm:.3} mm available")]
    MarginExceeded { needed_mm: f64, margin_mm: f64 },

    #[error("under-die occupancy {occupancy:.4} exceeds the die area")]
    AreaExceeded { occupancy: f64 },

    #[error("degenerate grid: {reason}")]
    DegenerateGrid { reason: String },

    #[error("singular nodal system: {reason}")]
    SingularSystem { reason: String },

    #[error("stage `{stage}` violates its converter rating: {detail}")]
    RatingViolation { stage: String, detail: String },

    #[error("fixed-point iteration did not converge after {iterations} iterations (last change {last_change:.3e})")]
    NoConvergence { iterations: usize, last_change: f64 },

    #[error("no die area up to {max_area_mm2} mm2 satisfies the usage caps")]
    Unsatisfiable { max_area_mm2: f64 },

    #[error("calibration target `{target}` unreachable: {detail}")]
    TargetUnreachable { target: String, detail: String },

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },

    #[error("dataset `{source_name}`: {reason}")]
    Dataset { source_name: String, reason: String },
}

impl Error {
    pub(crate) fn invalid(what: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            what: what.into(),
            reason: reason.into(),
        }
    }

    /// True for failures of the numerical machinery rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularSystem { .. }
                | Error::NoConvergence { .. }
                | Error::DegenerateGrid { .. }
                | Error::TargetUnreachable { .. }
        )
    }
}
