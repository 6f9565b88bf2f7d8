//! Compute accounting, allocation laws and scaling-law fitting for
//! Mixture-of-Experts Transformers.
//!
//! The crate is organized bottom-up: [`flops`] counts exact training FLOPs
//! for a config, [`alloc`] turns a compute budget into the optimal
//! expert-to-attention ratio, [`scaling`] evaluates loss laws, [`fit`]
//! estimates their coefficients from runs, and [`planner`] searches for an
//! architecture that realizes a target ratio.

pub mod alloc;
pub mod error;
pub mod fit;
pub mod flops;
pub mod io;
pub mod planner;
pub mod scaling;

pub use alloc::{
    efficiency_term, elasticity_closed_form, numeric_optimal_ratio, optimal_ratio, sparsity_coefficients,
    AllocationLaw, ElasticityParams, Provenance, SparsityLaw,
};
pub use error::{Error, Result};
pub use fit::{
    extract_rstar, fit_loss_law, fit_power_law, fit_sparsity_laws, FitOptions, FitReport, PowerLawFit,
    RStarObservation, SweepGroup,
};
pub use flops::{flops_ratio, total_flops, FlopsBreakdown, FlopsRatio, ModelConfig, SparsityLevel};
pub use planner::{plan, preset, synth, LawStore, PlanRequest, PlanResult, SizePreset, SynthGrid};
pub use scaling::{
    predict_loss, LawCoefficients, LawVariant, LossLawCoefficients, RTermMode, RunRecord,
};
