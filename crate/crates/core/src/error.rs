// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

/// Errors produced while building or solving a discrete problem.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its admissible range; `field` names it.
    #[error("configuration error in `{field}`: {reason}")]
    Config { field: String, reason: String },

    /// The kernel was asked for a value it does not define (e.g. at x = y).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("node index {index} out of range for {len} nodes")]
    IndexOutOfRange { index: usize, len: usize },

    /// Every node of the mask was removed (f = +inf there), so w_f(A) = +inf.
    #[error("w_f(A) = +inf: no admissible node remains (infimum over the empty set)")]
    EmptyAdmissibleSet,

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config { field: field.into(), reason: reason.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
