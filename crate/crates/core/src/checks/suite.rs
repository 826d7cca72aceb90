//! The twelve named verification experiments.

use std::time::Instant;

use crate::backend::{flat_torus_metric, tricerri_metric};
use crate::checks::CheckResult;
use crate::cohomology::{conformal_family, decompose};
use crate::curvature::{bismut_ricci, bundle_flatness_residual};
use crate::elliptic::gauduchon_factor;
use crate::error::SolveResult;
use crate::forms::{box_op, boxclosed_residual, pluriclosed_residual, SplitForm};
use crate::grid::{random_smooth_field, Grid, ScalarField};
use crate::hopf::{
    hopf_bracket_constants, k_profile, project_to_su, soliton_residual, su_metric,
};
use crate::tma::{
    estimates_report, flatten_bundle, prescribe_bismut_ricci, solve_linear, solve_nonlinear,
    Signs, SolveOptions, TmaProblem,
};

fn torus(n: usize) -> (std::sync::Arc<Grid>, SplitForm) {
    let grid = Grid::unit_torus(n).expect("valid torus grid");
    let base = flat_torus_metric(&grid).expect("flat metric");
    (grid, base)
}

fn cos_product(grid: &std::sync::Arc<Grid>, amplitude: f64, axes: &[usize]) -> ScalarField {
    let axes = axes.to_vec();
    ScalarField::from_fn(grid, move |c| {
        let mut v = amplitude;
        for &ax in &axes {
            v *= (2.0 * std::f64::consts::PI * c[ax]).cos();
        }
        v
    })
}

/// Manufactured right side F = p log lambda(u*) - q log eta(u*).
fn manufactured_rhs(problem: &TmaProblem, u_star: &ScalarField) -> ScalarField {
    let (lambda, eta) = problem.ratios(u_star);
    lambda
        .ln()
        .scale(problem.p)
        .sub(&eta.ln().scale(problem.q))
}

/// A1: manufactured-solution recovery for the fully nonlinear solver.
pub fn mms_nonlinear() -> SolveResult<CheckResult> {
    let start = Instant::now();
    let (grid, base) = torus(12);
    let u_star = cos_product(&grid, 0.05, &[0, 2]);
    let probe = TmaProblem::new(base.clone(), ScalarField::zeros(&grid), 0.5, 1.0, Signs::BOX)?;
    let rhs = manufactured_rhs(&probe, &u_star);
    let problem = TmaProblem::new(base, rhs, 0.5, 1.0, Signs::BOX)?;
    let report = solve_nonlinear(&problem, &SolveOptions::default())?;
    let expected = u_star.shift(-u_star.min_value());
    let mut check = CheckResult::new("A1", "mms-nonlinear-solve");
    check.le(
        "potential error sup",
        report.u.sub(&expected).sup_norm(),
        1e-6,
    );
    check.le("|xi|", report.xi.abs(), 1e-8);
    check.le("runtime seconds", start.elapsed().as_secs_f64(), 120.0);
    Ok(check)
}

pub(crate) const XI_BOUND_SEEDS: u64 = 20;

fn random_nonlinear_solve(
    seed: u64,
    beta: f64,
) -> SolveResult<(TmaProblem, crate::tma::SolveReport)> {
    let (grid, base) = torus(8);
    let rhs = random_smooth_field(&grid, seed, 0.5, 1.0);
    let problem = TmaProblem::new(base, rhs, beta, 1.0, Signs::BOX)?;
    let opts = SolveOptions {
        path_steps: 4,
        ..SolveOptions::default()
    };
    let report = solve_nonlinear(&problem, &opts)?;
    Ok((problem, report))
}

/// A2: |xi| <= ||F||_inf + 1e-8 over the seeded random sample.
pub fn xi_parameter_bound() -> SolveResult<CheckResult> {
    let mut worst = f64::NEG_INFINITY;
    for seed in 0..XI_BOUND_SEEDS {
        let (problem, report) = random_nonlinear_solve(seed, 0.5)?;
        worst = worst.max(report.xi.abs() - problem.rhs.sup_norm());
    }
    let mut check = CheckResult::new("A2", "xi-sup-norm-bound");
    check.le("max |xi| - ||F|| over 20 seeds", worst, 1e-8);
    Ok(check)
}

/// A3: bisection and Newton routes agree for p = q = 1.
pub fn linear_path_equivalence() -> SolveResult<CheckResult> {
    let (grid, base) = torus(8);
    let rhs = random_smooth_field(&grid, 7, 0.4, 1.0);
    let linear = solve_linear(&base, &rhs, &SolveOptions::default())?;
    let problem = TmaProblem::new(base, rhs, 1.0, 1.0, Signs::BOX)?;
    let newton = solve_nonlinear(&problem, &SolveOptions::default())?;
    let mut check = CheckResult::new("A3", "linear-path-equivalence");
    check.le(
        "potential difference sup",
        linear.u.sub(&newton.u).sup_norm(),
        1e-6,
    );
    check.le("|xi difference|", (linear.xi - newton.xi).abs(), 1e-8);
    Ok(check)
}

/// A4: conformal-Kaehler Gauduchon factor closed form and idempotence.
pub fn gauduchon_closed_form() -> SolveResult<CheckResult> {
    let (grid, base) = torus(8);
    let phi = cos_product(&grid, 0.3, &[0]);
    let omega = base.conformal(&phi);
    let (f, _) = gauduchon_factor(&omega)?;
    // e^{f+phi} must be the constant fixed by volume preservation.
    let e2phi_mean = phi.map(|v| (2.0 * v).exp()).weighted_mean();
    let expected = phi.scale(-1.0).shift(0.5 * e2phi_mean.ln());
    let mut check = CheckResult::new("A4", "gauduchon-closed-form");
    check.le("factor error sup", f.sub(&expected).sup_norm(), 1e-8);
    let (f2, _) = gauduchon_factor(&omega.conformal(&f))?;
    check.le("idempotence residual", f2.sup_norm(), 1e-10);
    Ok(check)
}

/// A5: bracket constants of the soliton family at (alpha, beta) = (1, 2).
pub fn hopf_bracket_constants_check() -> SolveResult<CheckResult> {
    let start = Instant::now();
    let grid = Grid::hopf(1.0, 2.0, 12.0, 1024, 32)?;
    let profile = k_profile(1.0, 2.0, &grid)?;
    let constants = hopf_bracket_constants(&profile, &[-1.0, 0.5, 2.0])?;
    let mut check = CheckResult::new("A5", "hopf-bracket-constants");
    for bc in &constants.translate {
        check.le(
            &format!("translate pairing rel error, t = {}", bc.t),
            bc.rel_error,
            1e-3,
        );
    }
    for bc in &constants.velocity {
        check.le(
            &format!("velocity pairing rel error, t = {}", bc.t),
            bc.rel_error,
            1e-3,
        );
    }
    check.le("runtime seconds", start.elapsed().as_secs_f64(), 30.0);
    Ok(check)
}

/// A6: the soliton identity with the documented global sign, and
/// Bismut-Ricci flatness in the regular case.
pub fn soliton_identity() -> SolveResult<CheckResult> {
    let grid = Grid::hopf(1.0, 2.0, 10.0, 1024, 8)?;
    let profile = k_profile(1.0, 2.0, &grid)?;
    let mut check = CheckResult::new("A6", "soliton-identity");
    check.le(
        "soliton residual (1,2), t=0",
        soliton_residual(&profile, 0.0)?,
        1e-6,
    );
    let grid_reg = Grid::hopf(1.0, 1.0, 10.0, 512, 8)?;
    let profile_reg = k_profile(1.0, 1.0, &grid_reg)?;
    check.le(
        "Ricci-flat residual (1,1)",
        soliton_residual(&profile_reg, 0.0)?,
        1e-7,
    );
    Ok(check)
}

/// A7: Tricerri fixtures are pluriclosed, box-closed, and bundle-flat for
/// (p, q) = (1, 2) with the exact constant.
pub fn tricerri_fixtures() -> SolveResult<CheckResult> {
    let grid = Grid::inoue(1.0, 3.0, 401)?;
    let mut check = CheckResult::new("A7", "tricerri-fixtures");
    for (a, b) in [(1.0, 1.0), (2.0, 0.5)] {
        let omega = tricerri_metric(&grid, a, b)?;
        check.le(
            &format!("pluriclosed residual (a,b)=({a},{b})"),
            pluriclosed_residual(&omega),
            1e-10,
        );
        check.le(
            &format!("box-closed residual (a,b)=({a},{b})"),
            boxclosed_residual(&omega),
            1e-10,
        );
        let report = flatten_bundle(&omega, 1.0, 2.0, &SolveOptions::default())?;
        check.le(
            &format!("bundle flatness (a,b)=({a},{b})"),
            report.diagnostics["flatness_residual"],
            1e-12,
        );
        check.le(
            &format!("|xi - log(a b^2)| (a,b)=({a},{b})"),
            (report.xi - (a * b * b).ln()).abs(),
            1e-10,
        );
    }
    Ok(check)
}

/// A8: decomposition round trip over random class elements.
pub fn dim_two_round_trip() -> SolveResult<CheckResult> {
    let (grid, basis_a) = torus(8);
    let basis_b = conformal_family(&basis_a, 1.0)?;
    let mut worst_coord = 0.0f64;
    let mut worst_recon = 0.0f64;
    for seed in 0..20 {
        let r_a = 0.5 + 1.5 * ((seed * 7 + 3) % 11) as f64 / 11.0;
        let r_b = 0.5 + 1.5 * ((seed * 5 + 1) % 13) as f64 / 13.0;
        let v = random_smooth_field(&grid, 100 + seed, 0.02, 1.0);
        let omega = basis_a
            .scale(r_a)
            .add(&basis_b.scale(r_b))
            .add(&box_op(&v));
        let dec = decompose(&omega, &basis_a, &basis_b)?;
        worst_coord = worst_coord
            .max((dec.r_a - r_a).abs())
            .max((dec.r_b - r_b).abs());
        worst_recon = worst_recon.max(dec.reconstruction);
    }
    let mut check = CheckResult::new("A8", "class-decomposition-round-trip");
    check.le("max coordinate error over 20 forms", worst_coord, 1e-6);
    check.le("max reconstruction sup", worst_recon, 1e-6);
    Ok(check)
}

/// A9: uniformization projection recovers scale and translation.
pub fn uniformization() -> SolveResult<CheckResult> {
    let grid = Grid::hopf(1.0, 2.0, 12.0, 512, 16)?;
    let profile = k_profile(1.0, 2.0, &grid)?;
    let target = su_metric(&profile, 0.8)?;
    let v = ScalarField::from_fn(&grid, |c| {
        let (x, s) = (c[0], c[1]);
        1e-3 * (-(x / 3.0) * (x / 3.0)).exp()
            * (1.0 + 0.5 * (std::f64::consts::PI * s).cos())
    });
    let omega = target.scale(1.7).add(&box_op(&v));
    let projection = project_to_su(&omega, &profile)?;
    let mut check = CheckResult::new("A9", "hopf-uniformization");
    check.le("|s - 1.7|", (projection.s - 1.7).abs(), 1e-3);
    check.le("|t - 0.8|", (projection.t - 0.8).abs(), 1e-3);
    check.le("realization residual", projection.residual, 1e-5);
    Ok(check)
}

/// A10: flat real-bundle metric on the Hopf surface via the fully
/// nonlinear solver.
pub fn hopf_flat_bundle() -> SolveResult<CheckResult> {
    let grid = Grid::hopf(1.0, 2.0, 10.0, 384, 8)?;
    let profile = k_profile(1.0, 2.0, &grid)?;
    let base = su_metric(&profile, 0.0)?;
    let report = flatten_bundle(&base, 2.0, -1.0, &SolveOptions::default())?;
    let mut check = CheckResult::new("A10", "hopf-flat-bundle");
    check.le(
        "bundle flatness residual",
        report.diagnostics["flatness_residual"],
        1e-6,
    );
    Ok(check)
}

/// A11: a priori estimate identities at converged solutions.
pub fn estimate_identities() -> SolveResult<CheckResult> {
    let mut check = CheckResult::new("A11", "estimate-identities");
    let mut worst_lu = 0.0f64;
    let mut laplacian_violations = 0usize;
    let mut min_path_floor = f64::INFINITY;
    for seed in 0..XI_BOUND_SEEDS {
        let (problem, report) = random_nonlinear_solve(seed, 0.5)?;
        let verdicts = estimates_report(&problem, &report);
        for c in &verdicts.checks {
            match c.name.as_str() {
                "lu-identity" => worst_lu = worst_lu.max(c.measured),
                "laplacian-lower-bound" => {
                    if !c.pass {
                        laplacian_violations += 1;
                    }
                }
                "path-positivity" => min_path_floor = min_path_floor.min(c.measured),
                _ => {}
            }
        }
    }
    for (seed, beta) in [(3u64, 0.3), (4, 0.9)] {
        let (problem, report) = random_nonlinear_solve(seed, beta)?;
        let verdicts = estimates_report(&problem, &report);
        for c in &verdicts.checks {
            if c.name == "lu-identity" {
                worst_lu = worst_lu.max(c.measured);
            }
        }
    }
    check.le("worst -Lu identity residual", worst_lu, 1e-8);
    check.le(
        "Laplacian lower-bound violations",
        laplacian_violations as f64,
        0.0,
    );
    check.ge("min lambda/eta along paths", min_path_floor, f64::MIN_POSITIVE);
    Ok(check)
}

/// A12: prescribing Bismut Ricci on the flat torus.
pub fn prescribed_ricci() -> SolveResult<CheckResult> {
    let (grid, base) = torus(12);
    let g = cos_product(&grid, 0.1, &[0]);
    let report = prescribe_bismut_ricci(&base, &g, &SolveOptions::default())?;
    // rho = Ric(omega_0) + box(G) with Ric(omega_0) = 0 on the flat metric.
    let ric = bismut_ricci(&report.metric)?;
    let defect = ric.sub(&box_op(&g)).interior_sup_norm();
    let mut check = CheckResult::new("A12", "prescribed-bismut-ricci");
    check.le("||Ric(omega_u) - box G|| sup", defect, 1e-7);
    check.le(
        "front-end recorded residual",
        report.diagnostics["ricci_residual"],
        1e-7,
    );
    Ok(check)
}

/// Continuity-in-beta data record (no acceptance claim): solves the same
/// random problem across a beta sweep and reports (beta, xi, sup u).
pub fn beta_sweep(seeds: &[u64]) -> SolveResult<Vec<(f64, u64, f64, f64)>> {
    let (grid, base) = torus(8);
    let mut rows = Vec::new();
    for &beta in &[0.5, 0.9, 1.0, 1.1, 2.0] {
        for &seed in seeds {
            let rhs = random_smooth_field(&grid, seed, 0.3, 1.0);
            let problem = TmaProblem::new(base.clone(), rhs, beta, 1.0, Signs::BOX)?;
            let report = solve_nonlinear(&problem, &SolveOptions::default())?;
            rows.push((beta, seed, report.xi, report.u.max_value()));
        }
    }
    Ok(rows)
}

/// Flat-bundle residual of an arbitrary Hopf metric before flattening,
/// used by the CLI diagnostics.
pub fn hopf_bundle_residual_before(alpha: f64, beta: f64) -> SolveResult<f64> {
    let grid = Grid::hopf(alpha, beta, 10.0, 256, 8)?;
    let profile = k_profile(alpha, beta, &grid)?;
    let base = su_metric(&profile, 0.0)?;
    Ok(bundle_flatness_residual(&base, beta, -alpha)?.sup_norm)
}
