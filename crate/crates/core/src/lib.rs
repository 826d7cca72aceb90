//! splitgeo: numerics for bi-Hermitian metrics of split type on complex
//! surfaces.
//!
//! The crate realises the split-coordinate calculus on three chart
//! backends (4-torus, reduced Hopf cylinder, local Inoue strip): the box
//! operator and bracket pairing, Bismut Ricci curvature, Gauduchon and
//! Chern-Poisson solves, a unified twisted Monge-Ampere solver with a
//! continuity path, bracket-based class coordinates, and the special
//! metric families (Streets-Ustinovskiy solitons, Tricerri metrics)
//! together with their desk-checkable identities.

pub mod backend;
pub mod cohomology;
pub mod curvature;
pub mod elliptic;
pub mod error;
pub mod forms;
pub mod grid;
pub mod hopf;
pub mod linalg;
mod spectral;
pub mod tma;

pub mod checks;

pub use backend::{flat_torus_metric, tricerri_metric, weight_potentials};
pub use error::{GeomError, GeomResult, SolveError, SolveResult};
pub use forms::{
    box_op, boxclosed_residual, bracket, involution, is_positive, pi_ddbar, pluriclosed_residual,
    BracketValue, SplitForm,
};
pub use grid::{
    hopf_default_half_width, mixed_cross, random_smooth_field, second_minus, second_plus, Grid,
    GridSpec, ScalarField,
};
pub use curvature::{bismut_ricci, bundle_flatness_residual, chern_laplacian, MixedResidual};
pub use elliptic::{chern_poisson_solve, gauduchon_factor};
pub use tma::{
    estimates_report, flatten_bundle, prescribe_bismut_ricci, solve_linear, solve_nonlinear,
    Signs, SolveOptions, SolveReport, TmaProblem,
};
pub use cohomology::{cone_coordinates, conformal_family, decompose, realize_proportional};
pub use hopf::{hopf_bracket_constants, k_profile, project_to_su, su_metric, su_prime, KProfile};
