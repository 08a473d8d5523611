//! Robust aggregation for federated learning at desk scale.
//!
//! The crate detects malfunctioning clients from the geometry of their
//! updates: cosine-distance reachability densities yield per-client outlier
//! factors, and the largest gap in the sorted factors separates clients to
//! exclude, with no threshold tuning and no assumed attacker count. Multi-Krum,
//! spectral filtering, and cosine bipartition are included for comparison,
//! along with malfunction injectors (additive noise, sign flipping, label
//! corruption), a seeded federated simulation on a synthetic blob task, and a
//! harness that sweeps seeds and writes CSV/JSON results.

pub mod asmr;
pub mod attacks;
pub mod baselines;
pub mod defense;
pub mod error;
pub mod fedsim;
pub mod geometry;
pub mod harness;
pub mod seeding;

pub use asmr::{detect, ClientScore, DetectionVerdict, OutlierScores};
pub use defense::Defense;
pub use error::{Error, Result};
pub use geometry::{ClientId, UpdateVector};
