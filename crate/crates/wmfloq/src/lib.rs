//! Weakly measured honeycomb Floquet code as a Gaussian Majorana circuit in a
//! spacetime Z2 gauge background.

pub mod binning;
pub mod circuit;
pub mod error;
pub mod gaussian;
pub mod kitaev;
pub mod lattice;
pub mod observables;
pub mod oracle;
pub mod sampler;

pub use error::{Error, Result};
