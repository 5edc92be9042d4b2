//! Weak-coupling reduced dynamics of open quantum systems.

pub mod bath;
pub mod bipartite;
pub mod channels;
pub mod error;
pub mod generators;
pub mod linalg;
pub mod ode;
pub mod oracle;
pub mod policy;
pub mod quad;
pub mod sampling;
pub mod spline;

pub use error::{Error, Result};
