//! Linear elliptic machinery: the Gauduchon conformal factor and the
//! Chern-Poisson equation.

use crate::error::{SolveError, SolveResult};
use crate::forms::{require_positive, SplitForm};
use crate::grid::{second_minus_with, second_plus_with, Closure, ScalarField};
use crate::linalg::{gmres, CoeffSide, LinOp, SplitPrecond};

/// Convergence report of the Gauduchon solve.
#[derive(Debug, Clone, serde::Serialize)]
pub struct GauduchonReport {
    pub iterations: usize,
    pub residuals: Vec<f64>,
}

pub const GAUDUCHON_RTOL: f64 = 1e-10;
const GAUDUCHON_MAX_NEWTON: usize = 40;

/// Pluriclosedness defect of e^f omega, computed with solver-side stencils.
fn gauduchon_residual(omega: &SplitForm, f: &ScalarField) -> ScalarField {
    let e = f.exp();
    let gp = omega.plus.mul(&e);
    let gm = omega.minus.mul(&e);
    second_minus_with(&gp, Closure::Neumann).add(&second_plus_with(&gm, Closure::Neumann))
}

struct GauduchonJacobian<'a> {
    g_plus: &'a ScalarField,
    g_minus: &'a ScalarField,
}

impl LinOp for GauduchonJacobian<'_> {
    fn dim(&self) -> usize {
        self.g_plus.data().len()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let grid = self.g_plus.grid();
        let xf = ScalarField::from_data(grid, x.to_vec()).expect("krylov iterate not finite");
        let out = second_minus_with(&self.g_plus.mul(&xf), Closure::Neumann)
            .add(&second_plus_with(&self.g_minus.mul(&xf), Closure::Neumann));
        y.copy_from_slice(out.data());
    }
}

/// Unique conformal exponent f with e^f omega pluriclosed and
/// int e^{2f} omega^2 = int omega^2, found by damped Newton from f = 0 with
/// the constant-coefficient split-Laplace inverse as preconditioner.
pub fn gauduchon_factor(omega: &SplitForm) -> SolveResult<(ScalarField, GauduchonReport)> {
    gauduchon_factor_from(omega, None)
}

/// Same solve warm-started from a previous factor.
pub(crate) fn gauduchon_factor_from(
    omega: &SplitForm,
    warm: Option<&ScalarField>,
) -> SolveResult<(ScalarField, GauduchonReport)> {
    require_positive(omega)?;
    let grid = omega.grid().clone();
    let target_volume = omega.volume();
    let mut f = warm
        .cloned()
        .unwrap_or_else(|| ScalarField::zeros(&grid));
    normalize(&mut f, omega, target_volume);

    let scale = omega.sup_norm().max(1.0);
    let mut residuals = Vec::new();
    let mut res_field = gauduchon_residual(omega, &f);
    let mut res = res_field.sup_norm();
    residuals.push(res);
    let tol = GAUDUCHON_RTOL * scale * curvature_scale(&grid) + 1e-13 * res_scale(&res_field);

    for iter in 0..GAUDUCHON_MAX_NEWTON {
        if res <= tol {
            return Ok((
                f,
                GauduchonReport {
                    iterations: iter,
                    residuals,
                },
            ));
        }
        let e = f.exp();
        let g_plus = omega.plus.mul(&e);
        let g_minus = omega.minus.mul(&e);
        // The mu-mu derivative acts on the minus component and vice versa.
        let pre = SplitPrecond::build(&grid, &g_minus, &g_plus, CoeffSide::Inside)?;
        let jac = GauduchonJacobian {
            g_plus: &g_plus,
            g_minus: &g_minus,
        };
        let mut rhs: Vec<f64> = res_field.data().iter().map(|&v| -v).collect();
        let mean = rhs.iter().sum::<f64>() / rhs.len() as f64;
        for v in rhs.iter_mut() {
            *v -= mean;
        }
        let sol = gmres(&jac, &pre, &rhs, None, 1e-10, 600, 60)?;
        let mut delta = ScalarField::from_data(&grid, sol.x)
            .map_err(SolveError::Geometry)?;
        let dmean = delta.mean();
        delta = delta.shift(-dmean);

        // Damped update with residual decrease.
        let mut tau = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let mut cand = f.add(&delta.scale(tau));
            normalize(&mut cand, omega, target_volume);
            let cand_res_field = gauduchon_residual(omega, &cand);
            let cand_res = cand_res_field.sup_norm();
            if cand_res <= res * (1.0 - 0.1 * tau) || cand_res <= tol {
                f = cand;
                res_field = cand_res_field;
                res = cand_res;
                accepted = true;
                break;
            }
            tau *= 0.5;
        }
        residuals.push(res);
        if !accepted {
            return Err(SolveError::NewtonDiverged {
                iterations: iter + 1,
                t: 1.0,
                residual: res,
                history: residuals,
            });
        }
    }
    if res <= tol {
        Ok((
            f,
            GauduchonReport {
                iterations: GAUDUCHON_MAX_NEWTON,
                residuals,
            },
        ))
    } else {
        Err(SolveError::NewtonDiverged {
            iterations: GAUDUCHON_MAX_NEWTON,
            t: 1.0,
            residual: res,
            history: residuals,
        })
    }
}

/// Exact volume normalisation: shifting f by c scales int e^{2f} omega^2 by
/// e^{2c}.
fn normalize(f: &mut ScalarField, omega: &SplitForm, target: f64) {
    let vol = omega.conformal(f).volume();
    let c = 0.5 * (target / vol).ln();
    *f = f.shift(c);
}

/// Rough magnitude of second derivatives resolvable on the grid, used to set
/// absolute residual floors.
fn curvature_scale(grid: &std::sync::Arc<crate::grid::Grid>) -> f64 {
    grid.axes()
        .iter()
        .map(|a| 1.0 / (a.spacing() * a.spacing()))
        .fold(1.0f64, f64::max)
}

fn res_scale(r: &ScalarField) -> f64 {
    r.sup_norm().max(1.0)
}

// ---------------------------------------------------------------------------
// Chern-Poisson
// ---------------------------------------------------------------------------

/// Relative compatibility tolerance: |int v e^f omega^2| <= tol * ||v|| * vol.
pub const COMPAT_RTOL: f64 = 1e-8;
const CP_KRYLOV_TOL: f64 = 1e-12;
const CP_KRYLOV_MAX: usize = 2000;

struct CpOperator<'a> {
    omega: &'a SplitForm,
}

impl LinOp for CpOperator<'_> {
    fn dim(&self) -> usize {
        self.omega.plus.data().len()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let grid = self.omega.grid();
        let u = ScalarField::from_data(grid, x.to_vec()).expect("krylov iterate not finite");
        let out = second_plus_with(&u, Closure::Neumann)
            .mul(&self.omega.minus)
            .add(&second_minus_with(&u, Closure::Neumann).mul(&self.omega.plus));
        y.copy_from_slice(out.data());
    }
}

/// Solve Delta_omega u = v for a positive metric omega. Solvable if and only
/// if int v e^f omega^2 = 0 with f the Gauduchon factor of omega; data
/// violating this beyond `COMPAT_RTOL` is rejected with the integral value.
/// The solution is gauged to quadrature mean zero.
pub fn chern_poisson_solve(omega: &SplitForm, v: &ScalarField) -> SolveResult<ScalarField> {
    let (f, _) = gauduchon_factor(omega)?;
    chern_poisson_solve_with_factor(omega, v, &f)
}

pub(crate) fn chern_poisson_solve_with_factor(
    omega: &SplitForm,
    v: &ScalarField,
    gauduchon: &ScalarField,
) -> SolveResult<ScalarField> {
    let ef = gauduchon.exp();
    let vol_density = omega.plus.mul(&omega.minus).scale(2.0);
    let compat = v.mul(&ef).mul(&vol_density).integrate();
    let vol = ef.mul(&vol_density).integrate();
    let tol = COMPAT_RTOL * v.sup_norm().max(f64::MIN_POSITIVE) * vol;
    if compat.abs() > tol {
        return Err(SolveError::IncompatibleData {
            integral: compat,
            tol,
        });
    }
    chern_poisson_projected(omega, v, gauduchon)
}

/// Chern-Poisson solve without the compatibility gate: the right side is
/// projected onto the discrete range regardless. Used by class operations
/// that vet their data through bracket pairings instead.
pub(crate) fn chern_poisson_projected(
    omega: &SplitForm,
    v: &ScalarField,
    gauduchon: &ScalarField,
) -> SolveResult<ScalarField> {
    require_positive(omega)?;
    v.same_grid(&omega.plus).map_err(SolveError::Geometry)?;
    let grid = omega.grid().clone();
    let ef = gauduchon.exp();
    let vol_density = omega.plus.mul(&omega.minus).scale(2.0);

    // Scaled form: second_plus(u) f_- + second_minus(u) f_+ = 2 f_+ f_- v,
    // with the right side projected onto the discrete range along e^f.
    let mut rhs_field = vol_density.mul(v);
    let num = rhs_field.mul(&ef).integrate();
    let den = ef.mul(&ef).integrate();
    rhs_field = rhs_field.sub(&ef.scale(num / den));

    let op = CpOperator { omega };
    let pre = SplitPrecond::build(&grid, &omega.minus, &omega.plus, CoeffSide::Outside)?;
    let sol = gmres(
        &op,
        &pre,
        rhs_field.data(),
        None,
        CP_KRYLOV_TOL,
        CP_KRYLOV_MAX,
        60,
    )?;
    let u = ScalarField::from_data(&grid, sol.x).map_err(SolveError::Geometry)?;
    let mean = u.weighted_mean();
    Ok(u.shift(-mean))
}
