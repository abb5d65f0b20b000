//! User-level differentially private histogram release with adaptive clipping.
//!
//! Each user contributes a histogram of item counts with no a-priori bound on
//! its norm. The crate provides:
//!
//! * contribution clipping plus Laplace/Gaussian release ([`clip`]),
//! * clipping-threshold selection, both exact (non-private) and under a
//!   dedicated privacy budget ([`threshold`]),
//! * bias correction for clipped Poisson-distributed counts ([`debias`]),
//! * synthetic data generators and dataset I/O ([`data`]),
//! * a reproducible experiment harness ([`experiment`]).
//!
//! Privacy is accounted at the *user* level: neighboring datasets differ by
//! replacing one user's entire histogram.

// Parameter guards are written `!(x > 0.0)` so that NaN fails validation;
// the suggested `x <= 0.0` rewrite would wave NaN through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clip;
pub mod data;
pub mod debias;
mod error;
pub mod experiment;
pub mod model;
pub mod noise;
pub mod threshold;

pub use data::{FileFormat, GeneratorKind, SizeLaw, SyntheticSpec};
pub use debias::{ClippingGapReport, DebiasEstimate, PoissonClipModel};
pub use error::{Error, Result};
pub use experiment::{
    BudgetConfig, BudgetLedger, CountExperimentConfig, DataSource, ExperimentConfig, SummaryRow,
    TrialResult,
};
pub use model::{BudgetSplit, Dataset, NoiseKind, NoisyEstimate, PrivacyParams, UserHistogram};
pub use noise::RandomSource;
pub use threshold::{ThresholdEstimate, ThresholdMethod};
