//! Parallel mean curvature surfaces in products of space forms and constant
//! mean curvature surfaces in `M²(ε)×ℝ`: explicit families, a numerical
//! verification engine for their invariants, and the correspondence between
//! the two kinds of surfaces through their Frenet data.

pub mod ambient;
pub mod cli;
pub mod correspondence;
pub mod curves;
pub mod diffgeo;
pub mod elliptic;
pub mod error;
pub mod families;
pub mod io;
pub mod jet;
pub mod par;
pub mod profile;

pub use error::{Error, Result};
