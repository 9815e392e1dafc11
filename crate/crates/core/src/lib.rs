//! Preisach hysteresis operators and an implicit time discretization of the
//! degenerate diffusion equation `G[u]_t − Δu = h` with Robin boundary data.

pub mod error;
pub mod par;
pub mod play;

pub use error::{Error, Result};
pub use play::{Branch, Direction, MemoryCurve, PlayUpdateReport};
pub mod density;
pub mod preisach;
pub mod convexify;
pub mod banded;
pub mod elliptic;
pub mod grid;
pub mod io;
pub mod scheme;
pub mod config;
pub mod driver;
