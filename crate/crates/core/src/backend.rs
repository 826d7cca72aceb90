//! Chart reference data and named metric fixtures.
//!
//! Each backend fixes reference forms Theta_+/Theta_- and their log-densities
//! W_pm against the coordinate frames i dz^dzbar, i dw^dwbar:
//!
//! * Torus4D:      Theta_+ = i dz^dzbar,                 W_+ = 0
//! * HopfCylinder: Theta_+ = i dz^dzbar / (alpha^2|z|^2), W_+ = -log alpha^2 - alpha mu
//!                 Theta_- = i dw^dwbar / (beta^2|w|^2),  W_- = -log beta^2 - beta nu
//! * InoueStrip:   Theta_+ = i dz^dzbar,                 W_+ = 0
//!
//! The weights are affine in the chart coordinates (mu, nu); all their pure
//! second derivatives vanish identically, which is what lets curvature
//! computations work on raw frame components.

use std::sync::Arc;

use crate::error::{GeomError, GeomResult};
use crate::forms::SplitForm;
use crate::grid::{Grid, GridSpec, ScalarField};

/// Affine chart weight W = offset + slope * c, where c is mu for the plus
/// side and nu for the minus side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightAffine {
    pub offset: f64,
    pub slope: f64,
}

impl WeightAffine {
    pub const ZERO: WeightAffine = WeightAffine {
        offset: 0.0,
        slope: 0.0,
    };
}

/// Affine descriptors (W_+, W_-) of the reference-form densities.
pub fn weight_descriptors(grid: &Grid) -> (WeightAffine, WeightAffine) {
    match grid.spec() {
        GridSpec::Torus4D { .. } | GridSpec::InoueStrip { .. } => {
            (WeightAffine::ZERO, WeightAffine::ZERO)
        }
        GridSpec::HopfCylinder { alpha, beta, .. } => (
            WeightAffine {
                offset: -(alpha * alpha).ln(),
                slope: -alpha,
            },
            WeightAffine {
                offset: -(beta * beta).ln(),
                slope: -beta,
            },
        ),
    }
}

/// The chart coordinate mu = s + x/2 on the Hopf cylinder (zero elsewhere).
pub fn mu_field(grid: &Arc<Grid>) -> ScalarField {
    match grid.spec() {
        GridSpec::HopfCylinder { .. } => {
            let x = grid.coord_field(0);
            let s = grid.coord_field(1);
            s.add(&x.scale(0.5))
        }
        _ => ScalarField::zeros(grid),
    }
}

/// The chart coordinate nu = s - x/2 on the Hopf cylinder (zero elsewhere).
pub fn nu_field(grid: &Arc<Grid>) -> ScalarField {
    match grid.spec() {
        GridSpec::HopfCylinder { .. } => {
            let x = grid.coord_field(0);
            let s = grid.coord_field(1);
            s.sub(&x.scale(0.5))
        }
        _ => ScalarField::zeros(grid),
    }
}

/// Weight potentials (W_+, W_-) evaluated as fields. Note that on the Hopf
/// cylinder these are samples of a function that is only quasi-periodic in
/// s; combinations fed to grid differentiation must eliminate the
/// s-dependence first (see `weight_combination`).
pub fn weight_potentials(grid: &Arc<Grid>) -> (ScalarField, ScalarField) {
    let (wp, wm) = weight_descriptors(grid);
    let w_plus = mu_field(grid).scale(wp.slope).shift(wp.offset);
    let w_minus = nu_field(grid).scale(wm.slope).shift(wm.offset);
    (w_plus, w_minus)
}

/// The combination p W_+ + q W_- as a single-valued chart field.
///
/// On the Hopf cylinder the combination equals
/// (p b_+ + q b_-) s + (p b_+ - q b_-) x/2 + const; it descends to the
/// cylinder only when the s coefficient vanishes. Returns the x-only field,
/// or an error carrying the offending quasi-period coefficient.
pub fn weight_combination(
    grid: &Arc<Grid>,
    p: f64,
    q: f64,
) -> Result<ScalarField, crate::error::SolveError> {
    let (wp, wm) = weight_descriptors(grid.as_ref());
    let s_coeff = p * wp.slope + q * wm.slope;
    let tol = 1e-12 * (p.abs() * wp.slope.abs() + q.abs() * wm.slope.abs()).max(1.0);
    if s_coeff.abs() > tol {
        return Err(crate::error::SolveError::NonGlobalField { coeff: s_coeff });
    }
    let x_coeff = 0.5 * (p * wp.slope - q * wm.slope);
    let offset = p * wp.offset + q * wm.offset;
    match grid.spec() {
        GridSpec::HopfCylinder { .. } => Ok(grid.coord_field(0).scale(x_coeff).shift(offset)),
        _ => Ok(ScalarField::constant(grid, offset)),
    }
}

/// Flat Kaehler product metric on the 4-torus: components (1, 1).
pub fn flat_torus_metric(grid: &Arc<Grid>) -> GeomResult<SplitForm> {
    match grid.spec() {
        GridSpec::Torus4D { .. } => Ok(SplitForm {
            plus: ScalarField::constant(grid, 1.0),
            minus: ScalarField::constant(grid, 1.0),
        }),
        other => Err(GeomError::WrongBackend {
            expected: "Torus4D".into(),
            got: other.kind_name().into(),
        }),
    }
}

/// Tricerri metric on the Inoue strip:
/// omega_{a,b} = a i dz^dzbar / y^2 + b y i dw^dwbar, components (a/y^2, b y).
pub fn tricerri_metric(grid: &Arc<Grid>, a: f64, b: f64) -> GeomResult<SplitForm> {
    if !(a > 0.0) || !(b > 0.0) {
        return Err(GeomError::InvalidParameter(format!(
            "Tricerri coefficients must be positive, got a={a}, b={b}"
        )));
    }
    match grid.spec() {
        GridSpec::InoueStrip { .. } => {
            let y = grid.coord_field(0);
            Ok(SplitForm {
                plus: y.map(|v| a / (v * v)),
                minus: y.scale(b),
            })
        }
        other => Err(GeomError::WrongBackend {
            expected: "InoueStrip".into(),
            got: other.kind_name().into(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::{boxclosed_residual, is_positive, pluriclosed_residual};

    #[test]
    fn torus_weights_vanish() {
        let grid = Grid::unit_torus(4).unwrap();
        let (wp, wm) = weight_potentials(&grid);
        assert_eq!(wp.sup_norm(), 0.0);
        assert_eq!(wm.sup_norm(), 0.0);
    }

    #[test]
    fn hopf_weights_at_origin() {
        // alpha = beta = 1: W_+ = -alpha mu vanishes at mu = 0, i.e. at
        // (x, s) = (0, 0).
        let grid = Grid::hopf(1.0, 1.0, 10.0, 129, 8).unwrap();
        let (wp, wm) = weight_potentials(&grid);
        let origin = 64 * 8; // x index 64 (x = 0), s index 0
        assert!(wp.data()[origin].abs() < 1e-12);
        assert!(wm.data()[origin].abs() < 1e-12);
    }

    #[test]
    fn hopf_weight_identity_is_constant() {
        // beta W_+ - alpha W_- + alpha beta x == -beta log alpha^2 + alpha log beta^2
        let (alpha, beta) = (1.0, 2.0);
        let grid = Grid::hopf(alpha, beta, 10.0, 65, 8).unwrap();
        let (wp, wm) = weight_potentials(&grid);
        let x = grid.coord_field(0);
        let field = wp
            .scale(beta)
            .sub(&wm.scale(alpha))
            .add(&x.scale(alpha * beta));
        let expected = -beta * (alpha * alpha).ln() + alpha * (beta * beta).ln();
        assert!(field.shift(-expected).sup_norm() < 1e-12);
    }

    #[test]
    fn weight_combination_guards_quasi_periodicity() {
        let grid = Grid::hopf(1.0, 2.0, 10.0, 65, 8).unwrap();
        // (p, q) = (beta, -alpha) is single-valued ...
        let w = weight_combination(&grid, 2.0, -1.0).unwrap();
        // ... and is an affine function of x alone: all grid second
        // derivatives vanish (finite differences are exact on linears).
        assert!(crate::grid::second_plus(&w).sup_norm() < 1e-10);
        assert!(crate::grid::second_minus(&w).sup_norm() < 1e-10);
        assert!(crate::grid::mixed_cross(&w).sup_norm() < 1e-10);
        // A generic combination is quasi-periodic in s and rejected.
        assert!(matches!(
            weight_combination(&grid, 1.0, 1.0),
            Err(crate::error::SolveError::NonGlobalField { .. })
        ));
    }

    #[test]
    fn flat_torus_fixture() {
        let grid = Grid::unit_torus(8).unwrap();
        let omega = flat_torus_metric(&grid).unwrap();
        assert_eq!(omega.plus.data()[0], 1.0);
        assert_eq!(omega.minus.data()[0], 1.0);
        assert!(pluriclosed_residual(&omega) < 1e-12);
        assert!(is_positive(&omega, 0.0));
        let bad = Grid::inoue(1.0, 2.0, 8).unwrap();
        assert!(flat_torus_metric(&bad).is_err());
    }

    #[test]
    fn tricerri_fixture_values() {
        // y in [1, 3] with 41 nodes puts y = 2 at index 20.
        let grid = Grid::inoue(1.0, 3.0, 41).unwrap();
        let omega = tricerri_metric(&grid, 1.0, 1.0).unwrap();
        assert!((omega.plus.data()[20] - 0.25).abs() < 1e-14);
        assert!((omega.minus.data()[20] - 2.0).abs() < 1e-14);
        assert!(is_positive(&omega, 0.0));
        assert!(pluriclosed_residual(&omega) < 1e-12);
        assert!(boxclosed_residual(&omega) < 1e-12);
        assert!(tricerri_metric(&grid, -1.0, 1.0).is_err());
        let torus = Grid::unit_torus(4).unwrap();
        assert!(tricerri_metric(&torus, 1.0, 1.0).is_err());
    }
}
