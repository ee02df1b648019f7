// SPDX-License-Identifier: Apache-2.0

pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod fields;
pub mod geometry;
pub mod kernel;
pub mod qp;
pub mod quad;
pub mod scenario;
pub mod solvers;

pub use error::{Error, Result};
