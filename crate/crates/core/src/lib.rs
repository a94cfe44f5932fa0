//! Monte Carlo diagnostics for the no-arbitrage properties of discretized
//! continuous semimartingale market models.
//!
//! A model `S = S₀ + M + A` is specified through densities against a clock
//! `F`: `dA = g dF` and `d⟨M,M⟩ = v dF`. The crate simulates such models on a
//! time grid and then
//!
//! * solves the structure condition `g = vλ` cellwise ([`structure`]),
//!   building an explicit bounded-variation arbitrage when it fails,
//! * accumulates the mean-variance trade-off `K = ∫ λ′vλ dF` and probes it
//!   for blow-up under grid refinement ([`mvt`]),
//! * builds the candidate density `Z = E(−∫λ′ dM)` started at a stopping time
//!   and tests its (super)martingale behaviour ([`density`]),
//! * combines everything into a single market classification ([`diagnose`]).

pub mod array;
pub mod config;
pub mod density;
pub mod diagnose;
pub mod error;
pub mod export;
pub mod grid;
pub mod linalg;
pub mod model;
pub mod mvt;
pub mod report;
pub mod sim;
pub mod stats;
pub mod structure;
pub mod wealth;

pub use array::PathArray;
pub use density::{
    doleans_exponential, first_zero_time, martingale_classification,
    supermartingale_density_test, DensityProcess, MartingaleClassification, MartingaleVerdict,
    SupermartingaleTestReport,
};
pub use diagnose::{classify_market, Classification, DiagnoseConfig, DiagnosticsReport};
pub use error::{Error, Result};
pub use grid::{make_grid, GridScheme, TimeGrid};
pub use model::{builtin_model, ModelParams, ModelSpec};
pub use mvt::{compute_mvt, detect_explosion, tau_level, ExplosionConfig, ExplosionVerdict, MvtProcess};
pub use report::{emit_report, ReportFormat};
pub use sim::{simulate, simulate_range, PathBundle};
pub use structure::{check_structure, construct_bv_arbitrage, solve_lambda, LambdaField, StructureReport};
pub use wealth::{
    classify_admissibility, first_deviation, integrate, shift, AdmissibilityClass,
    StoppingTimeField, Strategy, WealthPath,
};
