//! Estimation pipeline: r* extraction from ratio sweeps, log-log power-law
//! regression, and multi-start fitting of the loss laws.

mod lbfgs;
mod loss_fit;
mod model;
mod powerlaw;
mod rstar;

pub use lbfgs::{minimize, Bounds, MinimizeOptions, Minimum, StopReason};
pub use loss_fit::{
    fit_loss_law, huber, huber_objective, predict_vs_observed, select_starts, FitOptions, FitReport, HeldOut,
    PredictionRow, PredictionTable, FIT_REPORT_SCHEMA_VERSION,
};
pub use model::{start_grid, LawModel, StartGrid};
pub use powerlaw::{fit_power_law, fit_sparsity_laws, PowerLawFit, SparsityObservation};
pub use rstar::{
    extract_rstar, extract_rstar_with, RStarObservation, Selection, SweepGroup, DEFAULT_FLUCTUATION_TOLERANCE,
};
