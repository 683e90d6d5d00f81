//! Privacy amplification via Poisson importance sampling.
//!
//! The crate is organised bottom-up:
//!
//! - [`privacy`]: budgets, points, distinguishability profiles and the
//!   amplification calculus for subsampled mechanisms.
//! - [`optimal`]: privacy-optimal importance weights via bracketed bisection.
//! - [`sampler`]: Poisson importance samplers (uniform, coreset-style,
//!   privacy-optimal, full) and the inverse-probability objective estimator.
//! - [`kmeans`]: weighted DP-Lloyd, its distinguishability profile, noise
//!   allocation and the closed-form guarantee for the coreset-style sampler.
//! - [`audit`]: independent numerical checks of the privacy and statistical
//!   claims made by the other modules.
//! - [`harness`]: data ingestion, preprocessing and the experiment driver.

pub mod audit;
pub mod error;
pub mod harness;
pub mod kmeans;
pub mod numeric;
pub mod optimal;
pub mod privacy;
pub mod sampler;

pub use error::{Error, Result};
pub use privacy::{
    amplified_profile, improvement_impossible, improvement_possible, subsample_amplify,
    AmplifiedProfile, DataPoint, FnProfile, PrivacyBudget, Profile, WeightedDataset,
    WeightedPoint, WeightedProfile,
};
