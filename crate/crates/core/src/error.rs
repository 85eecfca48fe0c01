//! Error taxonomy shared by every module.
//!
//! Errors split into three classes which the CLI maps onto process exit
//! codes: bad inputs (`Validation`, exit 2), violated mathematical
//! guarantees that are supposed to hold by theorem (`Assertion`, exit 3),
//! and plumbing failures (`Io`, exit 1).

use thiserror::Error;

/// Coarse classification used for exit codes and FFI status mapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Assertion,
    Io,
}

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("empty input: {0}")]
    EmptySet(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite coordinate in point {index}")]
    NonFinite { index: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("metric is not symmetric at ({i},{j}): {dij} vs {dji}")]
    MetricAsymmetry {
        i: usize,
        j: usize,
        dij: f64,
        dji: f64,
    },

    #[error("metric has nonzero diagonal at {i}: {value}")]
    MetricDiagonal { i: usize, value: f64 },

    #[error("metric has negative entry at ({i},{j}): {value}")]
    MetricNegative { i: usize, j: usize, value: f64 },

    #[error("triangle inequality fails for ({i},{j},{k}): d({i},{k}) = {lhs} > {rhs} = d({i},{j}) + d({j},{k})")]
    TriangleViolation {
        i: usize,
        j: usize,
        k: usize,
        lhs: f64,
        rhs: f64,
    },

    #[error("no scale separation: all r/rho ratios in the grid are equal")]
    NoScaleSeparation,

    #[error("scale grid too small: need at least 3 (r, rho) pairs spanning 2 dyadic octaves, got {detail}")]
    ScaleGridTooSmall { detail: String },

    #[error("normal vector must have unit Euclidean length (|a|_2 = {norm})")]
    NonUnitNormal { norm: f64 },

    #[error("quadrature did not converge: achieved {achieved:e}, requested {requested:e}")]
    QuadratureNoConvergence { achieved: f64, requested: f64 },

    #[error("chain guarantee violated ({lemma}) at layer {layer}: {detail}")]
    ChainInequality {
        lemma: &'static str,
        layer: i32,
        detail: String,
    },

    #[error("net soundness violated at layer {layer}: {detail}")]
    NetSoundness { layer: i32, detail: String },

    #[error("probe mode {mode} requires {condition}; got s_decay = {s_decay}")]
    DecayTooSlow {
        mode: &'static str,
        condition: &'static str,
        s_decay: f64,
    },

    #[error("chain kind does not match probe mode: {0}")]
    ChainModeMismatch(&'static str),

    #[error("embedding fails injectivity at layer {layer}: a layer point is mapped to 0")]
    InjectivityFailure { layer: i32 },

    #[error("final lower bound violated at layer {layer}: {detail}")]
    FinalConstantViolation { layer: i32, detail: String },

    #[error("fit needs at least {need} layers with data, got {got}")]
    TooFewLayers { need: usize, got: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl EmbedError {
    pub fn class(&self) -> ErrorClass {
        use EmbedError::*;
        match self {
            ChainInequality { .. }
            | NetSoundness { .. }
            | InjectivityFailure { .. }
            | FinalConstantViolation { .. } => ErrorClass::Assertion,
            Io(_) => ErrorClass::Io,
            _ => ErrorClass::Validation,
        }
    }

    /// Process exit code the CLI should use for this error.
    pub fn exit_code(&self) -> i32 {
        match self.class() {
            ErrorClass::Validation => 2,
            ErrorClass::Assertion => 3,
            ErrorClass::Io => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, EmbedError>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classes_map_to_exit_codes() {
        assert_eq!(EmbedError::EmptySet("x").exit_code(), 2);
        assert_eq!(
            EmbedError::ChainInequality {
                lemma: "projection",
                layer: 3,
                detail: String::new()
            }
            .exit_code(),
            3
        );
        let io = EmbedError::Io(std::io::Error::other("x"));
        assert_eq!(io.exit_code(), 1);
    }
}
