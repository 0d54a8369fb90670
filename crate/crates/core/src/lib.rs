//! Risk-averse certification of stochastic (Bayesian) neural networks.
//!
//! The crate turns Monte Carlo samples of a network with a Gaussian weight
//! posterior into certificates:
//!
//! * a template-polytope over-approximation of the output set with a
//!   scenario-theoretic violation guarantee ([`support`]),
//! * certified CVaR intervals from Wasserstein concentration ([`risk`]),
//! * distributionally robust bounds on expected performance over
//!   Wasserstein balls restricted to the fitted support ([`dro`]).
//!
//! Everything is deterministic given a root seed ([`rng`]).

pub mod certificate;
pub mod dro;
pub mod error;
pub mod input;
pub mod model;
pub mod perf;
pub mod risk;
pub mod rng;
pub mod sampling;
pub mod support;
pub mod wasserstein;

mod conic;
mod linalg;

pub use certificate::{Certificate, CertificateKind, Guarantee};
pub use dro::{
    certify_perf_bounds, certify_perf_bounds_with, dro_brute_force, dro_inf_convex,
    dro_sup_concave, zeta, AmbiguityBall, DroSolution, PerfBounds, PerfRadii,
};
pub use error::{Error, Result};
pub use input::{adjust_contrast, rotate_image, BoxRadius, Image, InputDistribution};
pub use model::{synth_model, Activation, BnnModel, LayerSpec, WeightSample};
pub use perf::{AffinePiece, PerfFn};
pub use risk::{
    calibrate_scale, cvar_alpha, cvar_certified_interval, gamma_robustness, plan_cvar_samples,
    var_alpha, RiskSpec,
};
pub use sampling::{
    collect_outputs, monte_carlo_perf, perf_samples, EmpiricalDistribution, OutputSamples,
    SampleMetadata,
};
pub use support::{
    fit_support, make_template, scenario_confidence, scenario_sample_size, FittedSupport,
    Template, TemplateKind,
};
pub use wasserstein::{w1_exact_1d, w1_exact_matching, w1_radius, RadiusParams};
