//! Algebra of split-type (1,1) forms.
//!
//! A split form is stored as two real component fields (f_+, f_-) against
//! the backend reference frames Theta_+/Theta_-, i.e. the form is
//! f_+ Theta_+ + f_- Theta_-. The box operator, the projected i ddbar, the
//! involution, the bracket pairing and the closedness residuals all live
//! here.

use crate::error::{GeomError, GeomResult};
use crate::grid::{second_minus, second_plus, ScalarField};

/// Split-type (1,1) form: f_+ Theta_+ + f_- Theta_-.
#[derive(Debug, Clone)]
pub struct SplitForm {
    pub plus: ScalarField,
    pub minus: ScalarField,
}

impl SplitForm {
    pub fn new(plus: ScalarField, minus: ScalarField) -> GeomResult<Self> {
        plus.same_grid(&minus)?;
        Ok(SplitForm { plus, minus })
    }

    pub fn grid(&self) -> &std::sync::Arc<crate::grid::Grid> {
        self.plus.grid()
    }

    pub fn same_grid(&self, other: &SplitForm) -> GeomResult<()> {
        self.plus.same_grid(&other.plus)
    }

    pub fn add(&self, other: &SplitForm) -> SplitForm {
        SplitForm {
            plus: self.plus.add(&other.plus),
            minus: self.minus.add(&other.minus),
        }
    }

    pub fn sub(&self, other: &SplitForm) -> SplitForm {
        SplitForm {
            plus: self.plus.sub(&other.plus),
            minus: self.minus.sub(&other.minus),
        }
    }

    pub fn scale(&self, c: f64) -> SplitForm {
        SplitForm {
            plus: self.plus.scale(c),
            minus: self.minus.scale(c),
        }
    }

    /// Conformal rescaling e^g * omega with a scalar exponent field.
    pub fn conformal(&self, g: &ScalarField) -> SplitForm {
        let e = g.exp();
        SplitForm {
            plus: self.plus.mul(&e),
            minus: self.minus.mul(&e),
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.plus.sup_norm().max(self.minus.sup_norm())
    }

    pub fn interior_sup_norm(&self) -> f64 {
        self.plus
            .interior_sup_norm()
            .max(self.minus.interior_sup_norm())
    }

    /// Total volume integral of omega^2 = 2 f_+ f_- Theta_+ ^ Theta_-.
    pub fn volume(&self) -> f64 {
        self.plus.mul(&self.minus).scale(2.0).integrate()
    }

    /// Wedge density against another split form: omega ^ gamma =
    /// (f_+ g_- + f_- g_+) Theta_+ ^ Theta_-.
    pub fn wedge_density(&self, other: &SplitForm) -> ScalarField {
        self.plus
            .mul(&other.minus)
            .add(&self.minus.mul(&other.plus))
    }
}

/// Box operator on functions: box(u) = i(d_+ dbar_+ - d_- dbar_-) u,
/// components (second_plus(u), -second_minus(u)).
pub fn box_op(u: &ScalarField) -> SplitForm {
    SplitForm {
        plus: second_plus(u),
        minus: second_minus(u).scale(-1.0),
    }
}

/// Split projection of i ddbar u: components (second_plus(u), second_minus(u)).
pub fn pi_ddbar(u: &ScalarField) -> SplitForm {
    SplitForm {
        plus: second_plus(u),
        minus: second_minus(u),
    }
}

/// The involution iota(eta^+ + eta^-) = eta^+ - eta^-.
pub fn involution(eta: &SplitForm) -> SplitForm {
    SplitForm {
        plus: eta.plus.clone(),
        minus: eta.minus.scale(-1.0),
    }
}

/// Bracket pairing value together with a quadrature error estimate
/// (difference between full-grid and coarsened-grid quadrature).
#[derive(Debug, Clone, Copy)]
pub struct BracketValue {
    pub value: f64,
    pub quad_error: f64,
}

/// Antisymmetric bracket {eta, gamma} = int iota(eta) ^ gamma
/// = int (eta_+ gamma_- - eta_- gamma_+) Theta_+ ^ Theta_-.
pub fn bracket(eta: &SplitForm, gamma: &SplitForm) -> GeomResult<BracketValue> {
    eta.same_grid(gamma)?;
    let integrand = eta
        .plus
        .mul(&gamma.minus)
        .sub(&eta.minus.mul(&gamma.plus));
    let value = integrand.integrate();
    let coarse = integrand.integrate_coarse();
    Ok(BracketValue {
        value,
        quad_error: (value - coarse).abs(),
    })
}

/// Pointwise residual field of the pluriclosed condition i ddbar omega = 0.
///
/// On split forms only the cross second derivatives survive; measured on the
/// true metric densities f_pm e^{W_pm} and expressed against the
/// Theta_+ ^ Theta_- frame this reduces to
/// second_minus(f_+) + second_plus(f_-) on every supported chart, because
/// the weight W_+ is constant along nu and W_- along mu.
pub fn pluriclosed_residual_field(omega: &SplitForm) -> ScalarField {
    second_minus(&omega.plus).add(&second_plus(&omega.minus))
}

/// Interior sup norm of the pluriclosed residual.
pub fn pluriclosed_residual(omega: &SplitForm) -> f64 {
    pluriclosed_residual_field(omega).interior_sup_norm()
}

/// Pointwise residual field of box omega = 0 (same reduction as above).
pub fn boxclosed_residual_field(omega: &SplitForm) -> ScalarField {
    second_plus(&omega.minus).sub(&second_minus(&omega.plus))
}

/// Interior sup norm of the box-closedness residual.
pub fn boxclosed_residual(omega: &SplitForm) -> f64 {
    boxclosed_residual_field(omega).interior_sup_norm()
}

/// Pointwise positivity of both components above a floor.
pub fn is_positive(omega: &SplitForm, floor: f64) -> bool {
    assert!(floor >= 0.0, "floor must be nonnegative");
    omega.plus.min_value() > floor && omega.minus.min_value() > floor
}

/// Minimum over both components, used in positivity error reports.
pub fn min_component(omega: &SplitForm) -> f64 {
    omega.plus.min_value().min(omega.minus.min_value())
}

pub(crate) fn require_positive(omega: &SplitForm) -> GeomResult<()> {
    if is_positive(omega, 0.0) {
        Ok(())
    } else {
        Err(GeomError::NotPositive {
            min: min_component(omega),
        })
    }
}

/// Reject forms whose pluriclosed residual exceeds tol * scale; brackets
/// and class operations only descend to cohomology for pluriclosed forms.
pub fn require_pluriclosed(omega: &SplitForm, tol: f64) -> GeomResult<()> {
    let scale = omega.sup_norm().max(1.0);
    let residual = pluriclosed_residual(omega);
    if residual <= tol * scale {
        Ok(())
    } else {
        Err(GeomError::NotPluriclosed {
            residual,
            tol: tol * scale,
        })
    }
}

pub fn require_boxclosed(omega: &SplitForm, tol: f64) -> GeomResult<()> {
    let scale = omega.sup_norm().max(1.0);
    let residual = boxclosed_residual(omega);
    if residual <= tol * scale {
        Ok(())
    } else {
        Err(GeomError::NotBoxClosed {
            residual,
            tol: tol * scale,
        })
    }
}

/// Default relative gate used by class operations.
pub const PLURICLOSED_GATE: f64 = 1e-6;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::flat_torus_metric;
    use crate::grid::{random_smooth_field, Grid};

    const TAU: f64 = 2.0 * std::f64::consts::PI;
    const PI2: f64 = std::f64::consts::PI * std::f64::consts::PI;

    fn torus(n: usize) -> std::sync::Arc<Grid> {
        Grid::unit_torus(n).unwrap()
    }

    #[test]
    fn box_component_signs() {
        let grid = torus(16);
        let u1 = ScalarField::from_fn(&grid, |c| (TAU * c[0]).cos());
        let b1 = box_op(&u1);
        assert!(b1.plus.sub(&u1.scale(-PI2)).sup_norm() < 1e-9);
        assert!(b1.minus.sup_norm() < 1e-9);
        let u3 = ScalarField::from_fn(&grid, |c| (TAU * c[2]).cos());
        let b3 = box_op(&u3);
        assert!(b3.plus.sup_norm() < 1e-9);
        assert!(b3.minus.sub(&u3.scale(PI2)).sup_norm() < 1e-9);
        // pi(i ddbar) flips the minus sign
        let p3 = pi_ddbar(&u3);
        assert!(p3.minus.sub(&u3.scale(-PI2)).sup_norm() < 1e-9);
    }

    #[test]
    fn involution_properties() {
        let grid = torus(6);
        let eta = SplitForm {
            plus: random_smooth_field(&grid, 5, 1.0, 0.5),
            minus: random_smooth_field(&grid, 6, 1.0, 0.5),
        };
        let twice = involution(&involution(&eta));
        assert_eq!(twice.plus.data(), eta.plus.data());
        assert_eq!(twice.minus.data(), eta.minus.data());
        let u = random_smooth_field(&grid, 7, 1.0, 0.5);
        let a = involution(&box_op(&u));
        let b = pi_ddbar(&u);
        assert_eq!(a.plus.data(), b.plus.data());
        assert_eq!(a.minus.data(), b.minus.data());
        let one = SplitForm {
            plus: ScalarField::constant(&grid, 1.0),
            minus: ScalarField::constant(&grid, 1.0),
        };
        assert_eq!(involution(&one).minus.data()[0], -1.0);
    }

    #[test]
    fn bracket_antisymmetry_and_closed_form() {
        let grid = torus(8);
        for t in [0.4f64, 1.3] {
            let eta = SplitForm {
                plus: ScalarField::constant(&grid, 1.0),
                minus: ScalarField::constant(&grid, 1.0),
            };
            let gamma = SplitForm {
                plus: ScalarField::constant(&grid, t.exp()),
                minus: ScalarField::constant(&grid, (-t).exp()),
            };
            let b = bracket(&eta, &gamma).unwrap();
            let expected = -8.0 * f64::sinh(t);
            assert!((b.value - expected).abs() < 1e-12 * expected.abs());
            let rev = bracket(&gamma, &eta).unwrap();
            assert_eq!(b.value, -rev.value);
            assert_eq!(bracket(&eta, &eta).unwrap().value, 0.0);
        }
    }

    #[test]
    fn bracket_is_bilinear() {
        let grid = torus(6);
        let mk = |s1, s2| SplitForm {
            plus: random_smooth_field(&grid, s1, 1.0, 0.5),
            minus: random_smooth_field(&grid, s2, 1.0, 0.5),
        };
        let a = mk(1, 2);
        let b = mk(3, 4);
        let g = mk(5, 6);
        let lhs = bracket(&a.scale(2.0).add(&b.scale(-0.5)), &g).unwrap().value;
        let rhs = 2.0 * bracket(&a, &g).unwrap().value - 0.5 * bracket(&b, &g).unwrap().value;
        assert!((lhs - rhs).abs() < 1e-12 * (lhs.abs().max(1.0)));
    }

    #[test]
    fn bracket_descends_past_box_images() {
        // {box u, gamma} = 0 for pluriclosed gamma.
        let grid = torus(8);
        let u = random_smooth_field(&grid, 11, 1.0, 0.5);
        let v = random_smooth_field(&grid, 12, 0.1, 0.5);
        let gamma = flat_torus_metric(&grid).unwrap().add(&box_op(&v));
        assert!(pluriclosed_residual(&gamma) < 1e-9);
        let b = bracket(&box_op(&u), &gamma).unwrap();
        assert!(b.value.abs() < 1e-9, "{}", b.value);
    }

    #[test]
    fn pluriclosed_residual_pinned_value() {
        let grid = torus(16);
        let omega = SplitForm {
            plus: ScalarField::from_fn(&grid, |c| 1.0 + 0.5 * (TAU * c[2]).cos()),
            minus: ScalarField::constant(&grid, 1.0),
        };
        // residual field = second_minus(0.5 cos(2 pi x3)) -> sup = pi^2 / 2
        let r = pluriclosed_residual(&omega);
        assert!((r - PI2 / 2.0).abs() < 1e-9, "{r}");
        let flat = flat_torus_metric(&grid).unwrap();
        assert!(pluriclosed_residual(&flat) < 1e-12);
    }

    #[test]
    fn boxclosed_residual_pinned_value() {
        let grid = torus(16);
        let omega = SplitForm {
            plus: ScalarField::constant(&grid, 1.0),
            minus: ScalarField::from_fn(&grid, |c| 1.0 + 0.5 * (TAU * c[0]).cos()),
        };
        let r = boxclosed_residual(&omega);
        assert!((r - PI2 / 2.0).abs() < 1e-9, "{r}");
    }

    #[test]
    fn positivity_checks() {
        let grid = torus(4);
        let flat = flat_torus_metric(&grid).unwrap();
        assert!(is_positive(&flat, 0.0));
        assert!(!is_positive(&flat, 1.5));
        let bad = SplitForm {
            plus: ScalarField::constant(&grid, 1.0),
            minus: ScalarField::constant(&grid, -1.0),
        };
        assert!(!is_positive(&bad, 0.0));
        assert!(require_positive(&bad).is_err());
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let a = flat_torus_metric(&torus(4)).unwrap();
        let b = flat_torus_metric(&torus(6)).unwrap();
        assert!(bracket(&a, &b).is_err());
    }

    #[test]
    fn quad_error_estimate_is_nonnegative() {
        let grid = torus(8);
        let eta = SplitForm {
            plus: random_smooth_field(&grid, 21, 1.0, 0.4),
            minus: random_smooth_field(&grid, 22, 1.0, 0.4),
        };
        let gamma = flat_torus_metric(&grid).unwrap();
        assert!(bracket(&eta, &gamma).unwrap().quad_error >= 0.0);
    }
}
