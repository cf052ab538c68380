//! Desk-scale emulation of RIS-assisted wireless links in indoor-factory
//! environments: deployment-scenario validation, stochastic channel
//! generation, a practical RIS reflection model, and discrete phase-shift
//! optimization with an exhaustive-search oracle.

pub mod channel;
pub mod geom;
pub mod optimizer;
pub mod ris;
pub mod scenario;

pub use num_complex::Complex64;
