//! Bismut Ricci curvature, the Chern Laplacian and line-bundle flatness
//! residuals for split metrics.

use crate::backend::weight_combination;
use crate::error::{GeomResult, SolveError};
use crate::forms::{box_op, require_positive, SplitForm};
use crate::grid::{mixed_cross, second_minus, second_plus, ComplexField, ScalarField};

/// All components of i ddbar phi for a scalar potential phi: the two split
/// (diagonal) coefficients and the mixed dz^dwbar coefficient.
#[derive(Debug, Clone)]
pub struct MixedResidual {
    pub diag_plus: ScalarField,
    pub diag_minus: ScalarField,
    pub cross: ComplexField,
    pub sup_norm: f64,
}

impl MixedResidual {
    pub fn of_potential(phi: &ScalarField) -> MixedResidual {
        let diag_plus = second_plus(phi);
        let diag_minus = second_minus(phi);
        let cross = mixed_cross(phi);
        let sup_norm = diag_plus
            .interior_sup_norm()
            .max(diag_minus.interior_sup_norm())
            .max(cross.interior_sup_norm());
        MixedResidual {
            diag_plus,
            diag_minus,
            cross,
            sup_norm,
        }
    }
}

/// The (1,1) part of the Bismut Ricci form of a positive split metric:
/// Ric = -box(log h^+ - log h^-) with h^pm = f_pm e^{W_pm}.
///
/// The chart weights W_pm are affine in (mu, nu), so box(W_+ - W_-) vanishes
/// identically (asserted once per backend in tests) and the computation
/// reduces to the frame components.
pub fn bismut_ricci(omega: &SplitForm) -> GeomResult<SplitForm> {
    require_positive(omega)?;
    let g = omega.plus.ln().sub(&omega.minus.ln());
    Ok(box_op(&g).scale(-1.0))
}

/// Chern Laplacian of u with respect to a positive split metric:
/// Delta_omega u = (i ddbar u ^ omega) / omega^2
///              = [second_plus(u) f_- + second_minus(u) f_+] / (2 f_+ f_-).
pub fn chern_laplacian(omega: &SplitForm, u: &ScalarField) -> GeomResult<ScalarField> {
    require_positive(omega)?;
    u.same_grid(&omega.plus)?;
    let num = second_plus(u)
        .mul(&omega.minus)
        .add(&second_minus(u).mul(&omega.plus));
    let den = omega.plus.mul(&omega.minus).scale(2.0);
    Ok(num.zip(&den, |n, d| n / d))
}

/// Full i ddbar residual of the induced line-bundle log-norm
/// phi = p log(f_+ e^{W_+}) + q log(f_- e^{W_-}).
///
/// The weight part is kept as the single-valued chart combination (on the
/// Hopf cylinder this requires p b_+ + q b_- = 0, which holds for the
/// (beta, -alpha) flat real bundle); its grid derivatives vanish for affine
/// data, which the returned residual confirms rather than assumes.
pub fn bundle_flatness_residual(
    omega: &SplitForm,
    p: f64,
    q: f64,
) -> Result<MixedResidual, SolveError> {
    require_positive(omega)?;
    let phi = bundle_log_norm(omega, p, q)?;
    Ok(MixedResidual::of_potential(&phi))
}

/// The log-norm potential phi = p log h^+ + q log h^- as a chart field.
pub fn bundle_log_norm(omega: &SplitForm, p: f64, q: f64) -> Result<ScalarField, SolveError> {
    require_positive(omega)?;
    let weights = weight_combination(omega.grid(), p, q)?;
    Ok(omega
        .plus
        .ln()
        .scale(p)
        .add(&omega.minus.ln().scale(q))
        .add(&weights))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{flat_torus_metric, tricerri_metric};
    use crate::grid::{random_smooth_field, Grid, ScalarField};

    const TAU: f64 = 2.0 * std::f64::consts::PI;

    #[test]
    fn flat_torus_is_ricci_flat() {
        let grid = Grid::unit_torus(8).unwrap();
        let omega = flat_torus_metric(&grid).unwrap();
        let ric = bismut_ricci(&omega).unwrap();
        assert!(ric.sup_norm() < 1e-12);
    }

    #[test]
    fn tricerri_ricci_closed_form() {
        // log f+ - log f- = log(a/b) - 3 log y, so Ric = (-3/(4 y^2), 0).
        let grid = Grid::inoue(1.0, 3.0, 201).unwrap();
        let omega = tricerri_metric(&grid, 2.0, 0.7).unwrap();
        let ric = bismut_ricci(&omega).unwrap();
        let y = grid.coord_field(0);
        let expected = y.map(|v| -3.0 / (4.0 * v * v));
        assert!(ric.plus.sub(&expected).interior_sup_norm() < 1e-7);
        assert!(ric.minus.sup_norm() < 1e-12);
    }

    #[test]
    fn ricci_is_conformally_covariant_for_constants() {
        let grid = Grid::unit_torus(8).unwrap();
        let v = random_smooth_field(&grid, 3, 2e-3, 0.8);
        let omega = flat_torus_metric(&grid).unwrap().add(&crate::forms::box_op(&v));
        let ric = bismut_ricci(&omega).unwrap();
        let ric_scaled = bismut_ricci(&omega.scale(std::f64::consts::E)).unwrap();
        assert!(ric.sub(&ric_scaled).sup_norm() < 1e-10);
    }

    #[test]
    fn ricci_difference_is_box_exact() {
        // Ric(omega_u) - Ric(omega) = -box(log lambda - log eta).
        let grid = Grid::unit_torus(8).unwrap();
        let omega = flat_torus_metric(&grid).unwrap();
        let v = random_smooth_field(&grid, 4, 2e-3, 0.8);
        let omega_u = omega.add(&crate::forms::box_op(&v));
        let lambda = omega_u.plus.zip(&omega.plus, |a, b| a / b);
        let eta = omega_u.minus.zip(&omega.minus, |a, b| a / b);
        let lhs = bismut_ricci(&omega_u).unwrap().sub(&bismut_ricci(&omega).unwrap());
        let rhs = crate::forms::box_op(&lambda.ln().sub(&eta.ln())).scale(-1.0);
        assert!(lhs.sub(&rhs).sup_norm() < 1e-9);
    }

    #[test]
    fn chern_laplacian_flat_cosine() {
        let grid = Grid::unit_torus(16).unwrap();
        let omega = flat_torus_metric(&grid).unwrap();
        let u = ScalarField::from_fn(&grid, |c| (TAU * c[0]).cos());
        let lap = chern_laplacian(&omega, &u).unwrap();
        let expected = u.scale(-std::f64::consts::PI.powi(2) / 2.0);
        assert!(lap.sub(&expected).sup_norm() < 1e-9);
        let c = ScalarField::constant(&grid, 3.0);
        assert!(chern_laplacian(&omega, &c).unwrap().sup_norm() < 1e-10);
    }

    #[test]
    fn chern_laplacian_max_principle_sampled() {
        let grid = Grid::unit_torus(8).unwrap();
        let base = flat_torus_metric(&grid).unwrap();
        let w = random_smooth_field(&grid, 77, 2e-3, 0.8);
        let omega = base.add(&crate::forms::box_op(&w));
        assert!(crate::forms::is_positive(&omega, 0.0));
        for seed in 0..20 {
            let u = random_smooth_field(&grid, 1000 + seed, 1.0, 0.6);
            let lap = chern_laplacian(&omega, &u).unwrap();
            let argmax = u
                .data()
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            assert!(
                lap.data()[argmax] <= 1e-9 * lap.sup_norm().max(1.0),
                "seed {seed}: positive Laplacian at discrete max"
            );
        }
    }

    #[test]
    fn tricerri_bundle_is_flat_for_one_two() {
        let grid = Grid::inoue(1.0, 3.0, 101).unwrap();
        for (a, b) in [(1.0, 1.0), (2.0, 0.5)] {
            let omega = tricerri_metric(&grid, a, b).unwrap();
            let res = bundle_flatness_residual(&omega, 1.0, 2.0).unwrap();
            assert!(res.sup_norm < 1e-12, "(a,b)=({a},{b}): {}", res.sup_norm);
            let phi = bundle_log_norm(&omega, 1.0, 2.0).unwrap();
            assert!(phi.shift(-(a * b * b).ln()).sup_norm() < 1e-12);
        }
    }

    #[test]
    fn flat_torus_bundle_is_flat_for_all_exponents() {
        let grid = Grid::unit_torus(6).unwrap();
        let omega = flat_torus_metric(&grid).unwrap();
        for (p, q) in [(1.0, 2.0), (2.0, -1.0), (0.3, 0.7)] {
            let res = bundle_flatness_residual(&omega, p, q).unwrap();
            assert!(res.sup_norm < 1e-10);
        }
    }

    #[test]
    fn hopf_su_bundle_residual_matches_symbolic_oracle() {
        // phi = beta log k - alpha log(1-k) - alpha beta x + const for the
        // soliton metric with (p, q) = (beta, -alpha); its pure second
        // derivative along the chart is
        //   phi'' = beta k' [(beta-alpha)(1-2k) - alpha]
        //         + alpha k' [2 (beta-alpha) k + alpha].
        let (alpha, beta) = (1.0, 2.0);
        let grid = Grid::hopf(alpha, beta, 10.0, 1025, 8).unwrap();
        let profile = crate::hopf::k_profile(alpha, beta, &grid).unwrap();
        let omega = crate::hopf::su_metric(&profile, 0.0).unwrap();
        let res = bundle_flatness_residual(&omega, beta, -alpha).unwrap();
        assert!(res.sup_norm > 1e-3, "generic soliton metric is not bundle-flat");
        let k = profile.k_nodes();
        let n_s = grid.axes()[1].n;
        let mut worst = 0.0f64;
        for (ix, &kv) in k.iter().enumerate().skip(4).take(k.len() - 8) {
            let kp = profile.rhs(kv);
            let oracle = beta * kp * ((beta - alpha) * (1.0 - 2.0 * kv) - alpha)
                + alpha * kp * (2.0 * (beta - alpha) * kv + alpha);
            let got = res.diag_plus.data()[ix * n_s];
            worst = worst.max((got - oracle).abs());
            // diag_minus equals diag_plus and the mixed part its negative
            // for x-only potentials.
            worst = worst.max((res.diag_minus.data()[ix * n_s] - oracle).abs());
            worst = worst.max((res.cross.re.data()[ix * n_s] + oracle).abs());
        }
        assert!(worst < 5e-6, "oracle mismatch {worst}");
    }

    #[test]
    fn nonpositive_metric_is_rejected() {
        let grid = Grid::unit_torus(4).unwrap();
        let omega = crate::forms::SplitForm {
            plus: ScalarField::constant(&grid, 1.0),
            minus: ScalarField::constant(&grid, -0.5),
        };
        assert!(bismut_ricci(&omega).is_err());
        assert!(chern_laplacian(&omega, &ScalarField::zeros(&grid)).is_err());
        assert!(bundle_flatness_residual(&omega, 1.0, 1.0).is_err());
    }
}
