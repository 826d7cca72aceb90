//! Bracket-based class coordinates: constructive proportionality within a
//! class, the two-dimensional decomposition, conformal families and cone
//! membership.

use crate::elliptic::{chern_poisson_projected, gauduchon_factor, gauduchon_factor_from};
use crate::error::{SolveError, SolveResult};
use crate::forms::{
    box_op, bracket, require_pluriclosed, require_positive, SplitForm, PLURICLOSED_GATE,
};
use crate::grid::ScalarField;

/// Outcome of realising omega_1 + box(u) = c omega_2.
#[derive(Debug, Clone)]
pub struct Realization {
    pub u: ScalarField,
    pub c: f64,
    /// sup |ratio_+ - ratio_-| over interior nodes (componentwise
    /// proportionality defect).
    pub constancy: f64,
    /// The class pairing {omega_1, omega_2} that gated the solve.
    pub bracket: f64,
}

/// Absolute bracket gate: |{omega_1, omega_2}| below this scale-relative
/// tolerance is treated as class-proportional.
fn bracket_gate(omega1: &SplitForm, omega2: &SplitForm, rel: f64) -> f64 {
    let vol = omega1.grid().volume();
    rel * vol * omega1.sup_norm().max(1e-300) * omega2.sup_norm().max(1e-300)
}

pub const BRACKET_GATE_REL: f64 = 1e-4;

/// Solve i ddbar u ^ omega_2 = omega_2^+ ^ omega_1^- - omega_2^- ^ omega_1^+
/// and extract the proportionality constant. Requires omega_2 positive and
/// pluriclosed and the bracket {omega_1, omega_2} to vanish to tolerance.
pub fn realize_proportional(
    omega1: &SplitForm,
    omega2: &SplitForm,
) -> SolveResult<Realization> {
    realize_proportional_gated(omega1, omega2, BRACKET_GATE_REL)
}

pub fn realize_proportional_gated(
    omega1: &SplitForm,
    omega2: &SplitForm,
    gate_rel: f64,
) -> SolveResult<Realization> {
    omega1.same_grid(omega2).map_err(SolveError::Geometry)?;
    require_positive(omega2)?;
    require_pluriclosed(omega2, PLURICLOSED_GATE)?;
    require_pluriclosed(omega1, PLURICLOSED_GATE)?;
    let br = bracket(omega1, omega2).map_err(SolveError::Geometry)?;
    let tol = bracket_gate(omega1, omega2, gate_rel).max(16.0 * br.quad_error);
    if br.value.abs() > tol {
        return Err(SolveError::IncompatibleClass {
            bracket: br.value,
            tol,
        });
    }

    // Scaled Chern-Poisson right side for the metric omega_2.
    let rhs = omega2
        .plus
        .mul(&omega1.minus)
        .sub(&omega2.minus.mul(&omega1.plus));
    let den = omega2.plus.mul(&omega2.minus).scale(2.0);
    let v = rhs.zip(&den, |r, d| r / d);
    let (f, _) = gauduchon_factor(omega2)?;
    let u = chern_poisson_projected(omega2, &v, &f)?;

    let deformed = omega1.add(&box_op(&u));
    let ratio_plus = deformed.plus.zip(&omega2.plus, |a, b| a / b);
    let ratio_minus = deformed.minus.zip(&omega2.minus, |a, b| a / b);
    let c = 0.5 * (ratio_plus.weighted_mean() + ratio_minus.weighted_mean());
    let constancy = ratio_plus.sub(&ratio_minus).interior_sup_norm();
    Ok(Realization {
        u,
        c,
        constancy,
        bracket: br.value,
    })
}

/// Coordinates of omega in the two-dimensional class space spanned by the
/// basis pair, with the box-exact remainder realised explicitly.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub r_a: f64,
    pub r_b: f64,
    pub u: ScalarField,
    /// Interior sup norm of omega - r_a A - r_b B - box(u).
    pub reconstruction: f64,
}

const DEGENERATE_REL: f64 = 1e-10;

/// Bracket linear algebra: {omega, A} = r_b {B, A}, {omega, B} = r_a {A, B}.
pub fn decompose(
    omega: &SplitForm,
    basis_a: &SplitForm,
    basis_b: &SplitForm,
) -> SolveResult<Decomposition> {
    omega.same_grid(basis_a).map_err(SolveError::Geometry)?;
    omega.same_grid(basis_b).map_err(SolveError::Geometry)?;
    for f in [omega, basis_a, basis_b] {
        require_pluriclosed(f, PLURICLOSED_GATE)?;
    }
    require_positive(basis_a)?;
    let d = bracket(basis_a, basis_b).map_err(SolveError::Geometry)?;
    let scale = bracket_gate(basis_a, basis_b, DEGENERATE_REL);
    if d.value.abs() <= scale {
        return Err(SolveError::DegenerateBasis { bracket: d.value });
    }
    let wa = bracket(omega, basis_a).map_err(SolveError::Geometry)?.value;
    let wb = bracket(omega, basis_b).map_err(SolveError::Geometry)?.value;
    let r_b = wa / -d.value;
    let r_a = wb / d.value;

    // Realise the box-exact remainder against the positive basis element.
    let remainder = omega
        .sub(&basis_a.scale(r_a))
        .sub(&basis_b.scale(r_b));
    let shifted = remainder.add(basis_a);
    let real = realize_proportional(&shifted, basis_a)?;
    let u = real.u.scale(-1.0);
    let reconstruction = remainder
        .add(&box_op(&u).scale(-1.0))
        .interior_sup_norm();
    Ok(Decomposition {
        r_a,
        r_b,
        u,
        reconstruction,
    })
}

/// The conformal family: scale the split components by e^{+t}/e^{-t},
/// restore pluriclosedness with the Gauduchon factor, and normalise the
/// total volume to 1.
pub fn conformal_family(omega0: &SplitForm, t: f64) -> SolveResult<SplitForm> {
    require_positive(omega0)?;
    require_pluriclosed(omega0, PLURICLOSED_GATE)?;
    let tilted = SplitForm {
        plus: omega0.plus.scale(t.exp()),
        minus: omega0.minus.scale((-t).exp()),
    };
    let (f, _) = gauduchon_factor_from(&tilted, None)?;
    let metric = tilted.conformal(&f);
    let vol = metric.volume();
    Ok(metric.scale(1.0 / vol.sqrt()))
}

/// Class coordinates of Omega in span{[omega_ref], [omega_prime]} from
/// bracket ratios; the positive-cone verdict is p > 0.
#[derive(Debug, Clone, Copy)]
pub struct ConeCoordinates {
    pub p: f64,
    pub q: f64,
    pub in_cone: bool,
}

pub fn cone_coordinates(
    omega: &SplitForm,
    omega_ref: &SplitForm,
    omega_prime: &SplitForm,
) -> SolveResult<ConeCoordinates> {
    omega.same_grid(omega_ref).map_err(SolveError::Geometry)?;
    omega.same_grid(omega_prime).map_err(SolveError::Geometry)?;
    for f in [omega, omega_ref, omega_prime] {
        require_pluriclosed(f, PLURICLOSED_GATE)?;
    }
    let d = bracket(omega_ref, omega_prime).map_err(SolveError::Geometry)?;
    let scale = bracket_gate(omega_ref, omega_prime, DEGENERATE_REL);
    if d.value.abs() <= scale {
        return Err(SolveError::DegenerateBasis { bracket: d.value });
    }
    let p = bracket(omega, omega_prime).map_err(SolveError::Geometry)?.value / d.value;
    let q = -bracket(omega, omega_ref).map_err(SolveError::Geometry)?.value / d.value;
    Ok(ConeCoordinates {
        p,
        q,
        in_cone: p > 0.0,
    })
}
