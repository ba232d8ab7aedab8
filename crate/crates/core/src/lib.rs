//! Distributional policy evaluation on finite MDPs at the level of cumulative
//! distribution functions, measured in the Cramér (L² between CDFs) metric.
//!
//! The crate is organised bottom-up:
//!
//! * [`distributions`]: exact atomic laws and grid CDFs, Cramér distances.
//! * [`mdp`]: finite MDPs, policies, return fields and classical oracles.
//! * [`bellman`]: the CDF-level Bellman operator and its fixed-point driver.
//! * [`quadrature`]: Gauss–Legendre panel integration used as an oracle.
//! * [`spectral`]: characteristic functions, the regularised spectral
//!   geometry, transports between CDF and spectral coordinates.
//! * [`verify`]: executable checks of the contraction, isometry,
//!   intertwining, recovery and fixed-point properties.
//! * [`io`]: JSON/CSV persistence.

pub mod bellman;
pub mod distributions;
pub mod error;
pub mod io;
pub mod mdp;
pub mod quadrature;
pub mod random;
pub mod spectral;
pub mod verify;

pub use bellman::{Backend, BellmanConfig, EvaluationResult, GridSpec, TraceRow};
pub use distributions::{AtomicDistribution, CentredCdf, GridCdf, ReturnLaw};
pub use error::{Error, Result};
pub use mdp::{FiniteMdp, Policy, ReturnField, Support};
pub use spectral::{EpsGeometry, QuadratureSpec, SignedExpSum, SpectralField};
pub use verify::CheckReport;
