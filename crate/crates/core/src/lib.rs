//! Power-normalized (p-max) extreme value laws, generalized log-Pareto
//! distributions, and rates of convergence of power-normalized maxima.

// `!(x > 0.0)` is used on purpose so that NaN parameters are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod distances;
pub mod distribution;
pub mod error;
pub mod experiments;
pub mod glogpd;
pub mod laws;
pub mod models;
pub mod quadrature;

pub use distances::{BoundReport, DistanceKind, DistanceReport, McOptions};
pub use distribution::{Density, Distribution, SupportInterval, Uniform01};
pub use error::{Error, Result};
pub use experiments::{
    rate_experiment, report_emit, ExperimentConfig, RateFit, RateResults, RateRow, ReportFormat,
};
pub use glogpd::{Branch, GLogPareto, VonMises};
pub use laws::{Family, NormingConstants, NormingSource, PMaxLaw};
pub use models::{
    build_perturbed, ExactMaxLaw, Normalization, NormalizedOrderStat, Perturbation, PerturbedDensity,
    PerturbedSpec, SigmaModel,
};
pub use quadrature::{integrate, integrate_with, IntegrationResult, QuadOptions};
