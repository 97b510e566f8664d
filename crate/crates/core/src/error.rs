use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Errors raised by the copula, sampling and estimation routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{what} = {value} is outside its domain {domain}")]
    Domain {
        what: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("derivative order {order} exceeds the supported maximum {max}")]
    UnsupportedOrder { order: usize, max: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("level {z} is not attained on the curve (upper bound {bound})")]
    NoSolution { z: f64, bound: f64 },

    #[error("{0}: root bracketing failed")]
    Bracketing(&'static str),

    #[error("{what} did not reach tolerance {tolerance} (residual {residual})")]
    Tolerance {
        what: &'static str,
        tolerance: f64,
        residual: f64,
    },

    #[error("rejection sampling gave up after {attempts} attempts")]
    AttemptsExhausted { attempts: u64 },

    #[error("non-finite value while evaluating {0}")]
    NonFinite(&'static str),

    #[error("invalid model structure: {}", DisplayList(.0))]
    Structure(Vec<StructureError>),

    #[error("column {0} is constant")]
    ConstantColumn(usize),

    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = core::result::Result<T, Error>;

/// A single structural violation of a hierarchical model, naming the node path involved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StructureError {
    /// A variable appears in more than one leaf.
    Overlap { variable: usize, paths: Vec<String> },
    /// A variable is not covered by any leaf.
    Gap { variable: usize },
    /// A leaf references a variable index that does not exist.
    OutOfRange {
        path: String,
        variable: usize,
        n_vars: usize,
    },
    /// Copula dimension differs from the number of inputs the node receives.
    Dimension {
        path: String,
        copula_dim: usize,
        inputs: usize,
    },
    /// A node has neither columns nor children.
    Empty { path: String },
    /// A non-root node is missing its Kendall function.
    MissingKendall { path: String },
    /// The Kendall function does not belong to the node copula.
    KendallMismatch { path: String, reason: String },
    /// Level widths are not non-increasing from the leaves towards the root.
    WidthOrder {
        level: usize,
        width: usize,
        previous: usize,
    },
}

impl fmt::Display for StructureError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StructureError::Overlap { variable, paths } => {
                write!(f, "variable {variable} appears in several leaves (")?;
                for (i, p) in paths.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    f.write_str(p)?;
                }
                f.write_str(")")
            }
            StructureError::Gap { variable } => write!(f, "variable {variable} is not in any leaf"),
            StructureError::OutOfRange {
                path,
                variable,
                n_vars,
            } => write!(f, "{path}: variable {variable} out of range (n = {n_vars})"),
            StructureError::Dimension {
                path,
                copula_dim,
                inputs,
            } => write!(
                f,
                "{path}: copula has dimension {copula_dim} but the node has {inputs} inputs"
            ),
            StructureError::Empty { path } => write!(f, "{path}: node has no inputs"),
            StructureError::MissingKendall { path } => {
                write!(f, "{path}: nested node requires a Kendall function")
            }
            StructureError::KendallMismatch { path, reason } => write!(f, "{path}: {reason}"),
            StructureError::WidthOrder {
                level,
                width,
                previous,
            } => write!(
                f,
                "level {level} has width {width}, wider than the level below ({previous})"
            ),
        }
    }
}

struct DisplayList<'a>(&'a [StructureError]);

impl fmt::Display for DisplayList<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

pub(crate) fn domain(what: &'static str, value: f64, domain: &'static str) -> Error {
    Error::Domain {
        what,
        value,
        domain,
    }
}
