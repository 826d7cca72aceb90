//! Chart grids, scalar fields, differentiation and quadrature.
//!
//! Three chart backends are supported, each realising a local holomorphic
//! split coordinate (z, w):
//!
//! * `Torus4D` — a real 4-torus with z = x1 + i x2, w = x3 + i x4 and
//!   rectangular periods. All four axes are periodic; derivatives are
//!   computed by Fourier collocation.
//! * `HopfCylinder` — the torus-invariant reduction of a diagonal Hopf
//!   surface. Fields live on (x, s) with x = mu - nu truncated to
//!   [-X, X] and s = (mu + nu)/2 periodic with period 2, where
//!   mu = log|z|^2 / alpha and nu = log|w|^2 / beta. The x axis uses
//!   4th-order finite differences, the s axis Fourier collocation.
//! * `InoueStrip` — a one-dimensional slice in y = Im(z) of the local
//!   chart of an Inoue surface of type S_M; everything tested on this
//!   backend is pointwise in y.
//!
//! Conventions fixed here and consumed by every other module:
//!
//! * Pure second derivatives are reported against the backend reference
//!   frames Theta_+/Theta_-: `second_plus(u)` returns `a` with
//!   i dd_+ u = a Theta_+, and similarly for the minus direction.
//! * The volume pairing is Theta_+ ^ Theta_- = 4 dV on Torus4D and
//!   InoueStrip (unit transverse normalisation), and carries the angular
//!   factor 4 pi^2/(alpha beta) on the Hopf cylinder.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{GeomError, GeomResult};
use crate::spectral;

/// Spacing/extent description of one grid axis.
#[derive(Debug, Clone, PartialEq)]
pub enum AxisKind {
    /// Uniform samples x_j = j * period / n, endpoint excluded.
    Periodic { period: f64 },
    /// Uniform samples on [lo, hi], endpoints included.
    Truncated { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub n: usize,
    pub kind: AxisKind,
}

impl Axis {
    pub fn spacing(&self) -> f64 {
        match self.kind {
            AxisKind::Periodic { period } => period / self.n as f64,
            AxisKind::Truncated { lo, hi } => (hi - lo) / (self.n - 1) as f64,
        }
    }

    pub fn coord(&self, j: usize) -> f64 {
        match self.kind {
            AxisKind::Periodic { period } => j as f64 * period / self.n as f64,
            AxisKind::Truncated { lo, .. } => lo + j as f64 * self.spacing(),
        }
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self.kind, AxisKind::Periodic { .. })
    }

    /// Trapezoid weight of node j (exact Fourier quadrature on periodic axes).
    pub fn quad_weight(&self, j: usize) -> f64 {
        match self.kind {
            AxisKind::Periodic { period } => period / self.n as f64,
            AxisKind::Truncated { .. } => {
                let h = self.spacing();
                if j == 0 || j == self.n - 1 {
                    0.5 * h
                } else {
                    h
                }
            }
        }
    }
}

/// Chart descriptor. Carries the backend kind, resolutions and geometry
/// parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum GridSpec {
    Torus4D {
        n: [usize; 4],
        /// Axis periods (L1, L2) for z and (L3, L4) for w.
        periods: [f64; 4],
    },
    HopfCylinder {
        alpha: f64,
        beta: f64,
        /// Truncation half-width X of the x = mu - nu axis.
        half_width: f64,
        n_x: usize,
        n_s: usize,
    },
    InoueStrip {
        y_lo: f64,
        y_hi: f64,
        n_y: usize,
    },
}

impl GridSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            GridSpec::Torus4D { .. } => "Torus4D",
            GridSpec::HopfCylinder { .. } => "HopfCylinder",
            GridSpec::InoueStrip { .. } => "InoueStrip",
        }
    }
}

/// A realised grid: spec plus axis layout. Fields store row-major data in
/// axis order. Grids are immutable and shared through `Arc`.
#[derive(Debug)]
pub struct Grid {
    spec: GridSpec,
    axes: Vec<Axis>,
    len: usize,
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
    }
}

pub const MIN_AXIS_SAMPLES: usize = 4;

/// Default Hopf truncation half-width 10 / min(alpha, beta, 1).
pub fn hopf_default_half_width(alpha: f64, beta: f64) -> f64 {
    10.0 / alpha.min(beta).min(1.0)
}

impl Grid {
    pub fn new(spec: GridSpec) -> GeomResult<Arc<Grid>> {
        let axes = match &spec {
            GridSpec::Torus4D { n, periods } => {
                for (&ni, &li) in n.iter().zip(periods) {
                    if ni < MIN_AXIS_SAMPLES {
                        return Err(GeomError::InvalidGrid(format!(
                            "axis needs at least {MIN_AXIS_SAMPLES} samples, got {ni}"
                        )));
                    }
                    if !(li > 0.0) {
                        return Err(GeomError::InvalidGrid(format!("period {li} must be > 0")));
                    }
                }
                n.iter()
                    .zip(periods)
                    .map(|(&ni, &li)| Axis {
                        n: ni,
                        kind: AxisKind::Periodic { period: li },
                    })
                    .collect()
            }
            GridSpec::HopfCylinder {
                alpha,
                beta,
                half_width,
                n_x,
                n_s,
            } => {
                if !(*alpha > 0.0) || !(*beta > 0.0) {
                    return Err(GeomError::InvalidGrid(format!(
                        "Hopf parameters must be positive: alpha={alpha}, beta={beta}"
                    )));
                }
                if !(*half_width > 0.0) {
                    return Err(GeomError::InvalidGrid(format!(
                        "truncation half-width must be positive, got {half_width}"
                    )));
                }
                if *n_x < MIN_AXIS_SAMPLES || *n_s < MIN_AXIS_SAMPLES {
                    return Err(GeomError::InvalidGrid(format!(
                        "axis needs at least {MIN_AXIS_SAMPLES} samples, got ({n_x}, {n_s})"
                    )));
                }
                vec![
                    Axis {
                        n: *n_x,
                        kind: AxisKind::Truncated {
                            lo: -half_width,
                            hi: *half_width,
                        },
                    },
                    Axis {
                        n: *n_s,
                        kind: AxisKind::Periodic { period: 2.0 },
                    },
                ]
            }
            GridSpec::InoueStrip { y_lo, y_hi, n_y } => {
                if !(*y_lo > 0.0) || !(*y_hi > *y_lo) {
                    return Err(GeomError::InvalidGrid(format!(
                        "Inoue strip needs 0 < y_lo < y_hi, got [{y_lo}, {y_hi}]"
                    )));
                }
                if *n_y < MIN_AXIS_SAMPLES {
                    return Err(GeomError::InvalidGrid(format!(
                        "axis needs at least {MIN_AXIS_SAMPLES} samples, got {n_y}"
                    )));
                }
                vec![Axis {
                    n: *n_y,
                    kind: AxisKind::Truncated {
                        lo: *y_lo,
                        hi: *y_hi,
                    },
                }]
            }
        };
        let len = axes.iter().map(|a| a.n).product();
        Ok(Arc::new(Grid { spec, axes, len }))
    }

    /// Unit-period square torus, the default Torus4D geometry.
    pub fn unit_torus(n: usize) -> GeomResult<Arc<Grid>> {
        Grid::new(GridSpec::Torus4D {
            n: [n; 4],
            periods: [1.0; 4],
        })
    }

    pub fn hopf(alpha: f64, beta: f64, half_width: f64, n_x: usize, n_s: usize) -> GeomResult<Arc<Grid>> {
        Grid::new(GridSpec::HopfCylinder {
            alpha,
            beta,
            half_width,
            n_x,
            n_s,
        })
    }

    pub fn inoue(y_lo: f64, y_hi: f64, n_y: usize) -> GeomResult<Arc<Grid>> {
        Grid::new(GridSpec::InoueStrip { y_lo, y_hi, n_y })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dims(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.n).collect()
    }

    /// Multi-index of a flat index, axis-major (last axis fastest).
    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0usize; self.axes.len()];
        for k in (0..self.axes.len()).rev() {
            idx[k] = flat % self.axes[k].n;
            flat /= self.axes[k].n;
        }
        idx
    }

    /// Coordinate field of one axis.
    pub fn coord_field(self: &Arc<Self>, axis: usize) -> ScalarField {
        let mut f = ScalarField::zeros(self);
        for (flat, v) in f.data.iter_mut().enumerate() {
            let idx = self.multi_index(flat);
            *v = self.axes[axis].coord(idx[axis]);
        }
        f
    }

    /// Geometry-wide volume factor multiplying the plain iterated quadrature,
    /// fixing the Theta_+ ^ Theta_- wedge density once for everyone.
    pub fn volume_factor(&self) -> f64 {
        match &self.spec {
            GridSpec::Torus4D { .. } => 4.0,
            GridSpec::HopfCylinder { alpha, beta, .. } => {
                4.0 * std::f64::consts::PI.powi(2) / (alpha * beta)
            }
            GridSpec::InoueStrip { .. } => 4.0,
        }
    }

    /// Total Theta_+ ^ Theta_- volume of the chart.
    pub fn volume(self: &Arc<Self>) -> f64 {
        ScalarField::constant(self, 1.0).integrate()
    }

    /// True if every axis is periodic (no truncation boundary).
    pub fn fully_periodic(&self) -> bool {
        self.axes.iter().all(|a| a.is_periodic())
    }

    /// Indices at least `margin` nodes away from every truncation end.
    pub fn interior_mask(&self, margin: usize) -> Vec<bool> {
        let mut mask = vec![true; self.len];
        for (k, axis) in self.axes.iter().enumerate() {
            if axis.is_periodic() {
                continue;
            }
            for (flat, m) in mask.iter_mut().enumerate() {
                let idx = self.multi_index(flat);
                if idx[k] < margin || idx[k] + margin >= axis.n {
                    *m = false;
                }
            }
        }
        mask
    }
}

/// Margin (in nodes) excluded from sup norms near truncation ends, where
/// one-sided stencils pollute pointwise identities.
pub const INTERIOR_MARGIN: usize = 3;

/// Real scalar samples on a grid. Immutable by convention: operations
/// return new fields.
#[derive(Debug, Clone)]
pub struct ScalarField {
    grid: Arc<Grid>,
    data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        ScalarField {
            grid: grid.clone(),
            data: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: &Arc<Grid>, c: f64) -> Self {
        ScalarField {
            grid: grid.clone(),
            data: vec![c; grid.len()],
        }
    }

    pub fn from_data(grid: &Arc<Grid>, data: Vec<f64>) -> GeomResult<Self> {
        if data.len() != grid.len() {
            return Err(GeomError::InvalidGrid(format!(
                "field length {} does not match grid size {}",
                data.len(),
                grid.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(GeomError::InvalidGrid("field contains non-finite values".into()));
        }
        Ok(ScalarField {
            grid: grid.clone(),
            data,
        })
    }

    /// Evaluate a coordinate function pointwise.
    pub fn from_fn(grid: &Arc<Grid>, mut f: impl FnMut(&[f64]) -> f64) -> Self {
        let mut out = ScalarField::zeros(grid);
        let mut coords = vec![0.0; grid.axes().len()];
        for (flat, v) in out.data.iter_mut().enumerate() {
            let idx = grid.multi_index(flat);
            for (k, &j) in idx.iter().enumerate() {
                coords[k] = grid.axes()[k].coord(j);
            }
            *v = f(&coords);
        }
        out
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn same_grid(&self, other: &ScalarField) -> GeomResult<()> {
        if self.grid.as_ref() == other.grid.as_ref() {
            Ok(())
        } else {
            Err(GeomError::GridMismatch)
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            grid: self.grid.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        debug_assert_eq!(self.grid.as_ref(), other.grid.as_ref());
        ScalarField {
            grid: self.grid.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn add(&self, other: &ScalarField) -> ScalarField {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ScalarField) -> ScalarField {
        self.zip(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &ScalarField) -> ScalarField {
        self.zip(other, |a, b| a * b)
    }

    pub fn scale(&self, c: f64) -> ScalarField {
        self.map(|v| c * v)
    }

    pub fn shift(&self, c: f64) -> ScalarField {
        self.map(|v| v + c)
    }

    pub fn exp(&self) -> ScalarField {
        self.map(f64::exp)
    }

    pub fn ln(&self) -> ScalarField {
        self.map(f64::ln)
    }

    pub fn min_value(&self) -> f64 {
        self.data.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
    }

    /// Sup norm over nodes at least `INTERIOR_MARGIN` away from truncation
    /// ends (identical to `sup_norm` on fully periodic grids).
    pub fn interior_sup_norm(&self) -> f64 {
        if self.grid.fully_periodic() {
            return self.sup_norm();
        }
        let mask = self.grid.interior_mask(INTERIOR_MARGIN);
        self.data
            .iter()
            .zip(&mask)
            .filter(|(_, &m)| m)
            .fold(0.0, |acc, (&v, _)| acc.max(v.abs()))
    }

    /// Plain arithmetic mean over nodes.
    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Chart integral of v against the Theta_+ ^ Theta_- volume form,
    /// including the backend volume factor.
    pub fn integrate(&self) -> f64 {
        self.grid.volume_factor() * self.weighted_sum(1)
    }

    /// Quadrature estimate on the coarsened grid (every `stride`-th node per
    /// axis where the count allows), used for quadrature error estimates.
    pub(crate) fn integrate_coarse(&self) -> f64 {
        self.grid.volume_factor() * self.weighted_sum(2)
    }

    fn weighted_sum(&self, stride: usize) -> f64 {
        // Iterated trapezoid with per-axis decimation. A periodic axis is
        // decimated only when its count divides evenly; a truncated axis only
        // when the endpoints survive (odd count).
        let axes = self.grid.axes();
        let keep: Vec<Vec<usize>> = axes
            .iter()
            .map(|a| {
                let ok = if a.is_periodic() {
                    stride > 1 && a.n % stride == 0
                } else {
                    stride > 1 && (a.n - 1) % stride == 0
                };
                let step = if ok { stride } else { 1 };
                (0..a.n).step_by(step).collect()
            })
            .collect();
        let weights: Vec<Vec<f64>> = axes
            .iter()
            .zip(&keep)
            .map(|(a, ks)| {
                let scale = (a.n as f64 - if a.is_periodic() { 0.0 } else { 1.0 })
                    / (ks.len() as f64 - if a.is_periodic() { 0.0 } else { 1.0 });
                ks.iter()
                    .enumerate()
                    .map(|(pos, _)| {
                        let w = match a.kind {
                            AxisKind::Periodic { period } => period / ks.len() as f64,
                            AxisKind::Truncated { .. } => {
                                let h = a.spacing() * scale;
                                if pos == 0 || pos == ks.len() - 1 {
                                    0.5 * h
                                } else {
                                    h
                                }
                            }
                        };
                        w
                    })
                    .collect()
            })
            .collect();
        let mut total = 0.0;
        let mut idx = vec![0usize; axes.len()];
        loop {
            let mut w = 1.0;
            let mut flat = 0;
            for k in 0..axes.len() {
                w *= weights[k][idx[k]];
                flat = flat * axes[k].n + keep[k][idx[k]];
            }
            total += w * self.data[flat];
            // advance multi-index over kept nodes
            let mut k = axes.len();
            loop {
                if k == 0 {
                    return total;
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < keep[k].len() {
                    break;
                }
                idx[k] = 0;
            }
        }
    }

    /// Quadrature-weighted mean (integral divided by chart volume).
    pub fn weighted_mean(&self) -> f64 {
        self.integrate() / self.grid.volume()
    }
}

/// Paired real fields representing one complex-valued coefficient field.
#[derive(Debug, Clone)]
pub struct ComplexField {
    pub re: ScalarField,
    pub im: ScalarField,
}

impl ComplexField {
    pub fn sup_norm(&self) -> f64 {
        self.re
            .data()
            .iter()
            .zip(self.im.data())
            .fold(0.0f64, |m, (&a, &b)| m.max((a * a + b * b).sqrt()))
    }

    pub fn interior_sup_norm(&self) -> f64 {
        let modulus = self.re.zip(&self.im, |a, b| (a * a + b * b).sqrt());
        modulus.interior_sup_norm()
    }
}

/// Boundary treatment of finite-difference stencils on truncated axes.
///
/// `OneSided` makes no assumption on the field (measurement operators);
/// `Neumann` folds ghost nodes by even reflection, imposing a homogeneous
/// Neumann end condition (solver operators).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Closure {
    OneSided,
    Neumann,
}

// ---------------------------------------------------------------------------
// Differentiation
// ---------------------------------------------------------------------------

/// Apply an axis derivative of given order (1 or 2) along `axis`.
pub(crate) fn d_axis(u: &ScalarField, axis: usize, order: usize, closure: Closure) -> ScalarField {
    let grid = u.grid().clone();
    let ax = &grid.axes()[axis];
    let mut out = vec![0.0; u.data().len()];
    if ax.is_periodic() {
        spectral::spectral_derivative_axis(u.data(), &mut out, &grid, axis, order);
    } else {
        fd_derivative_axis(u.data(), &mut out, &grid, axis, order, closure);
    }
    ScalarField {
        grid,
        data: out,
    }
}

/// Fornberg weights for the m-th derivative at evaluation point `x0` given
/// stencil nodes `xs`.
pub(crate) fn fornberg_weights(x0: f64, xs: &[f64], m: usize) -> Vec<f64> {
    let n = xs.len();
    let mut c = vec![vec![0.0; m + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = xs[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - x0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.iter().map(|row| row[m]).collect()
}

/// Stencil table for one truncated axis: centred interior row plus edge rows.
#[derive(Debug, Clone)]
pub(crate) struct FdStencils {
    /// (offsets, weights) used at interior nodes.
    pub centered: (Vec<isize>, Vec<f64>),
    /// Rows for nodes 0 and 1 (absolute node indices referenced).
    pub lo_rows: Vec<(Vec<usize>, Vec<f64>)>,
    /// Rows for nodes n-2 and n-1.
    pub hi_rows: Vec<(Vec<usize>, Vec<f64>)>,
}

pub(crate) const FD_HALF_WIDTH: usize = 2;
const FD_EDGE_POINTS: usize = 6;

pub(crate) fn fd_stencils(n: usize, h: f64, order: usize, closure: Closure) -> FdStencils {
    let offs: Vec<isize> = (-(FD_HALF_WIDTH as isize)..=FD_HALF_WIDTH as isize).collect();
    let xs: Vec<f64> = offs.iter().map(|&o| o as f64 * h).collect();
    let centered_w = fornberg_weights(0.0, &xs, order);
    let mut lo_rows = Vec::new();
    let mut hi_rows = Vec::new();
    for row in 0..FD_HALF_WIDTH {
        match closure {
            Closure::OneSided => {
                let m = FD_EDGE_POINTS.min(n);
                let nodes: Vec<usize> = (0..m).collect();
                let xs: Vec<f64> = nodes.iter().map(|&j| j as f64 * h).collect();
                let w = fornberg_weights(row as f64 * h, &xs, order);
                lo_rows.push((nodes.clone(), w.clone()));
                let hi_nodes: Vec<usize> = nodes.iter().map(|&j| n - 1 - j).collect();
                // Mirror flips the sign of odd derivatives.
                let sign = if order % 2 == 0 { 1.0 } else { -1.0 };
                hi_rows.push((hi_nodes, w.iter().map(|&c| sign * c).collect()));
            }
            Closure::Neumann => {
                // Even reflection about the boundary node: ghost -j maps to +j.
                let mut nodes = Vec::new();
                let mut w = Vec::new();
                for (&o, &c) in offs.iter().zip(&centered_w) {
                    let j = row as isize + o;
                    let j = if j < 0 { (-j) as usize } else { j as usize };
                    if let Some(pos) = nodes.iter().position(|&x| x == j) {
                        let wj: &mut f64 = &mut w[pos];
                        *wj += c;
                    } else {
                        nodes.push(j);
                        w.push(c);
                    }
                }
                lo_rows.push((nodes.clone(), w.clone()));
                let hi_nodes: Vec<usize> = nodes.iter().map(|&j| n - 1 - j).collect();
                let sign = if order % 2 == 0 { 1.0 } else { -1.0 };
                hi_rows.push((hi_nodes, w.iter().map(|&c| sign * c).collect()));
            }
        }
    }
    FdStencils {
        centered: (offs, centered_w),
        lo_rows,
        hi_rows,
    }
}

fn fd_derivative_axis(
    data: &[f64],
    out: &mut [f64],
    grid: &Grid,
    axis: usize,
    order: usize,
    closure: Closure,
) {
    let dims = grid.dims();
    let n = dims[axis];
    let h = grid.axes()[axis].spacing();
    let st = fd_stencils(n, h, order, closure);
    let mut line = vec![0.0; n];
    let mut dline = vec![0.0; n];
    for_each_line(&dims, axis, |offset, stride| {
        for j in 0..n {
            line[j] = data[offset + j * stride];
        }
        apply_fd_line(&line, &mut dline, &st);
        for j in 0..n {
            out[offset + j * stride] = dline[j];
        }
    });
}

/// Apply the stencil table to one line in difference form (exact on
/// constants regardless of rounding in the weights).
pub(crate) fn apply_fd_line(line: &[f64], out: &mut [f64], st: &FdStencils) {
    let n = line.len();
    let (offs, w) = &st.centered;
    for i in FD_HALF_WIDTH..n - FD_HALF_WIDTH {
        let ui = line[i];
        let mut acc = 0.0;
        for (&o, &c) in offs.iter().zip(w) {
            acc += c * (line[(i as isize + o) as usize] - ui);
        }
        out[i] = acc;
    }
    for (row, (nodes, w)) in st.lo_rows.iter().enumerate() {
        let ui = line[row];
        out[row] = nodes
            .iter()
            .zip(w)
            .map(|(&j, &c)| c * (line[j] - ui))
            .sum();
    }
    for (row, (nodes, w)) in st.hi_rows.iter().enumerate() {
        let i = n - 1 - row;
        let ui = line[i];
        out[i] = nodes
            .iter()
            .zip(w)
            .map(|(&j, &c)| c * (line[j] - ui))
            .sum();
    }
}

/// Visit every 1-d line of a row-major array along `axis` as
/// (start offset, stride).
pub fn for_each_line(dims: &[usize], axis: usize, mut f: impl FnMut(usize, usize)) {
    let n = dims[axis];
    let stride: usize = dims[axis + 1..].iter().product();
    let outer: usize = dims[..axis].iter().product();
    let inner = stride;
    for o in 0..outer {
        for i in 0..inner {
            f(o * n * stride + i, stride);
        }
    }
}

// ---------------------------------------------------------------------------
// Split-frame second derivatives
// ---------------------------------------------------------------------------

/// i dd_+ u = second_plus(u) Theta_+ in the backend frame.
pub fn second_plus(u: &ScalarField) -> ScalarField {
    second_plus_with(u, Closure::OneSided)
}

/// i dd_- u = second_minus(u) Theta_- in the backend frame.
pub fn second_minus(u: &ScalarField) -> ScalarField {
    second_minus_with(u, Closure::OneSided)
}

pub(crate) fn second_plus_with(u: &ScalarField, closure: Closure) -> ScalarField {
    match u.grid().spec() {
        GridSpec::Torus4D { .. } => {
            // z = x1 + i x2: dz dzbar = (d11 + d22)/4
            let d11 = d_axis(u, 0, 2, closure);
            let d22 = d_axis(u, 1, 2, closure);
            d11.add(&d22).scale(0.25)
        }
        GridSpec::HopfCylinder { .. } => {
            // d/dmu = d/dx + (1/2) d/ds on (x, s)
            let dxx = d_axis(u, 0, 2, closure);
            let dss = d_axis(u, 1, 2, closure);
            let dxs = d_axis(&d_axis(u, 1, 1, closure), 0, 1, closure);
            dxx.add(&dss.scale(0.25)).add(&dxs)
        }
        GridSpec::InoueStrip { .. } => d_axis(u, 0, 2, closure).scale(0.25),
    }
}

pub(crate) fn second_minus_with(u: &ScalarField, closure: Closure) -> ScalarField {
    match u.grid().spec() {
        GridSpec::Torus4D { .. } => {
            let d33 = d_axis(u, 2, 2, closure);
            let d44 = d_axis(u, 3, 2, closure);
            d33.add(&d44).scale(0.25)
        }
        GridSpec::HopfCylinder { .. } => {
            // d/dnu = -d/dx + (1/2) d/ds
            let dxx = d_axis(u, 0, 2, closure);
            let dss = d_axis(u, 1, 2, closure);
            let dxs = d_axis(&d_axis(u, 1, 1, closure), 0, 1, closure);
            dxx.add(&dss.scale(0.25)).sub(&dxs)
        }
        GridSpec::InoueStrip { .. } => ScalarField::zeros(u.grid()),
    }
}

/// Mixed dz dwbar coefficient of i ddbar u against the backend's mixed
/// reference frame; returned as paired real fields.
pub fn mixed_cross(u: &ScalarField) -> ComplexField {
    let closure = Closure::OneSided;
    match u.grid().spec() {
        GridSpec::Torus4D { .. } => {
            // (d1 - i d2)(d3 + i d4)/4
            let d1 = d_axis(u, 0, 1, closure);
            let d2 = d_axis(u, 1, 1, closure);
            let d13 = d_axis(&d1, 2, 1, closure);
            let d14 = d_axis(&d1, 3, 1, closure);
            let d23 = d_axis(&d2, 2, 1, closure);
            let d24 = d_axis(&d2, 3, 1, closure);
            ComplexField {
                re: d13.add(&d24).scale(0.25),
                im: d14.sub(&d23).scale(0.25),
            }
        }
        GridSpec::HopfCylinder { .. } => {
            // d/dmu d/dnu = (1/4) dss - dxx
            let dxx = d_axis(u, 0, 2, closure);
            let dss = d_axis(u, 1, 2, closure);
            ComplexField {
                re: dss.scale(0.25).sub(&dxx),
                im: ScalarField::zeros(u.grid()),
            }
        }
        GridSpec::InoueStrip { .. } => ComplexField {
            re: ScalarField::zeros(u.grid()),
            im: ScalarField::zeros(u.grid()),
        },
    }
}

// ---------------------------------------------------------------------------
// Random smooth fields
// ---------------------------------------------------------------------------

const RANDOM_MODE_CUTOFF: usize = 3;

/// Deterministic band-limited random field: low-mode coefficients with
/// standard deviation exp(-decay |mode| / 2), zero quadrature mean,
/// rescaled so the sup norm equals `amplitude`. Identical (seed, grid)
/// pairs give bitwise-identical data.
pub fn random_smooth_field(grid: &Arc<Grid>, seed: u64, amplitude: f64, decay: f64) -> ScalarField {
    assert!(amplitude >= 0.0, "amplitude must be nonnegative");
    assert!(decay > 0.0, "decay must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let axes: Vec<Axis> = grid.axes().to_vec();
    let naxes = axes.len();
    // Per-axis admissible mode numbers.
    let per_axis: Vec<Vec<usize>> = axes
        .iter()
        .map(|a| {
            let cutoff = RANDOM_MODE_CUTOFF.min(if a.is_periodic() { a.n / 2 - 1 } else { a.n - 2 });
            (0..=cutoff).collect()
        })
        .collect();
    let mut field = ScalarField::zeros(grid);
    let mut mode = vec![0usize; naxes];
    loop {
        let norm2: usize = mode.iter().map(|&m| m * m).sum();
        if norm2 > 0 {
            let norm = (norm2 as f64).sqrt();
            let std = (-decay * norm / 2.0).exp();
            // Box-Muller from two uniform draws keeps the stream layout simple.
            let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
            let u2: f64 = rng.gen::<f64>();
            let coeff = std * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
            let phases: Vec<f64> = (0..naxes)
                .map(|k| {
                    if axes[k].is_periodic() && mode[k] > 0 {
                        rng.gen::<f64>() * 2.0 * std::f64::consts::PI
                    } else {
                        0.0
                    }
                })
                .collect();
            let toadd = ScalarField::from_fn(grid, |coords| {
                let mut v = coeff;
                for k in 0..naxes {
                    if mode[k] == 0 {
                        continue;
                    }
                    v *= match axes[k].kind {
                        AxisKind::Periodic { period } => {
                            (2.0 * std::f64::consts::PI * mode[k] as f64 * coords[k] / period
                                + phases[k])
                                .cos()
                        }
                        AxisKind::Truncated { lo, hi } => {
                            (std::f64::consts::PI * mode[k] as f64 * (coords[k] - lo) / (hi - lo))
                                .cos()
                        }
                    };
                }
                v
            });
            field = field.add(&toadd);
        }
        // advance mode multi-index
        let mut k = naxes;
        loop {
            if k == 0 {
                // done iterating all modes
                let mean = field.weighted_mean();
                let centered = field.map(|v| v - mean);
                let sup = centered.sup_norm();
                if sup == 0.0 {
                    return centered;
                }
                return centered.scale(amplitude / sup);
            }
            k -= 1;
            mode[k] += 1;
            if mode[k] < per_axis[k].len() {
                break;
            }
            mode[k] = 0;
        }
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    const TAU: f64 = 2.0 * std::f64::consts::PI;

    fn torus(n: usize) -> Arc<Grid> {
        Grid::unit_torus(n).unwrap()
    }

    fn hopf_small() -> Arc<Grid> {
        Grid::hopf(1.0, 2.0, 10.0, 129, 8).unwrap()
    }

    #[test]
    fn constants_are_annihilated() {
        for grid in [
            torus(6),
            hopf_small(),
            Grid::inoue(1.0, 3.0, 41).unwrap(),
        ] {
            let u = ScalarField::constant(&grid, 7.0);
            assert!(second_plus(&u).sup_norm() < 1e-10);
            assert!(second_minus(&u).sup_norm() < 1e-10);
            assert!(mixed_cross(&u).sup_norm() < 1e-10);
        }
    }

    #[test]
    fn torus_cosine_second_plus() {
        let grid = torus(16);
        let u = ScalarField::from_fn(&grid, |c| (TAU * c[0]).cos());
        let a = second_plus(&u);
        let expected = u.scale(-std::f64::consts::PI.powi(2));
        assert!(a.sub(&expected).sup_norm() < 1e-10);
        assert!(second_minus(&u).sup_norm() < 1e-10);
    }

    /// Second-order centred finite differences as an independent oracle for
    /// the spectral derivative.
    #[test]
    fn torus_cosine_matches_fd_oracle() {
        let n = 64;
        let grid = torus(n);
        let u = ScalarField::from_fn(&grid, |c| (TAU * c[0]).cos());
        let a = second_plus(&u);
        let h = 1.0 / n as f64;
        let mut worst = 0.0f64;
        for j in 0..n {
            let x = j as f64 * h;
            let fd = ((TAU * (x + h)).cos() - 2.0 * (TAU * x).cos() + (TAU * (x - h)).cos())
                / (h * h);
            let idx = j * n * n * n; // vary x1 only, others at 0
            worst = worst.max((0.25 * fd - a.data()[idx]).abs());
        }
        assert!(worst < 2e-2, "fd oracle disagrees: {worst}");
    }

    #[test]
    fn torus_cosine_second_minus() {
        let grid = torus(16);
        let u = ScalarField::from_fn(&grid, |c| (TAU * c[2]).cos());
        let b = second_minus(&u);
        let expected = u.scale(-std::f64::consts::PI.powi(2));
        assert!(b.sub(&expected).sup_norm() < 1e-10);
        assert!(second_plus(&u).sup_norm() < 1e-10);
    }

    #[test]
    fn hopf_quadratic_chart_derivatives() {
        // u = x^2 with x = mu - nu: second derivatives in the chart frame
        // are exactly 2, 2 and the mixed coefficient -2; finite differences
        // are exact on quadratics including the one-sided edge rows.
        let grid = hopf_small();
        let u = ScalarField::from_fn(&grid, |c| c[0] * c[0]);
        let a = second_plus(&u);
        let b = second_minus(&u);
        let m = mixed_cross(&u);
        assert!(a.shift(-2.0).sup_norm() < 1e-9, "{}", a.shift(-2.0).sup_norm());
        assert!(b.shift(-2.0).sup_norm() < 1e-9);
        assert!(m.re.shift(2.0).sup_norm() < 1e-9);
        assert!(m.im.sup_norm() < 1e-12);
    }

    #[test]
    fn torus_mixed_cross_product_mode() {
        let grid = torus(16);
        let u = ScalarField::from_fn(&grid, |c| (TAU * c[0]).cos() * (TAU * c[2]).cos());
        let m = mixed_cross(&u);
        // (1/4) d1 d3 of cos cos = (pi^2) sin sin; imaginary part vanishes.
        let expected = ScalarField::from_fn(&grid, |c| {
            std::f64::consts::PI.powi(2) * (TAU * c[0]).sin() * (TAU * c[2]).sin()
        });
        assert!(m.re.sub(&expected).sup_norm() < 1e-9);
        assert!(m.im.sup_norm() < 1e-9);
    }

    #[test]
    fn separable_sums_have_no_cross_term() {
        let grid = torus(8);
        let u = ScalarField::from_fn(&grid, |c| (TAU * c[0]).cos() + (TAU * c[3]).sin());
        assert!(mixed_cross(&u).sup_norm() < 1e-10);
    }

    #[test]
    fn differentiation_is_linear() {
        let grid = hopf_small();
        let u = random_smooth_field(&grid, 1, 1.0, 0.8);
        let v = random_smooth_field(&grid, 2, 1.0, 0.8);
        let lhs = second_plus(&u.scale(2.5).add(&v.scale(-1.25)));
        let rhs = second_plus(&u).scale(2.5).add(&second_plus(&v).scale(-1.25));
        let scale = rhs.sup_norm().max(1.0);
        assert!(lhs.sub(&rhs).sup_norm() < 1e-11 * scale);
    }

    #[test]
    fn four_torus_laplacian_decomposition() {
        let grid = torus(12);
        let u = ScalarField::from_fn(&grid, |c| (TAU * c[0]).cos() * (TAU * c[3]).cos());
        let total = second_plus(&u).add(&second_minus(&u)).scale(4.0);
        let expected = u.scale(-2.0 * TAU * TAU);
        assert!(total.sub(&expected).sup_norm() < 1e-9);
    }

    #[test]
    fn quadrature_constants() {
        let t = torus(8);
        assert!((ScalarField::constant(&t, 1.0).integrate() - 4.0).abs() < 1e-13);
        let h = hopf_small();
        let expected = 4.0 * std::f64::consts::PI.powi(2) / 2.0 * 4.0 * 10.0;
        assert!((ScalarField::constant(&h, 1.0).integrate() - expected).abs() < 1e-10 * expected);
        let i = Grid::inoue(1.0, 3.0, 41).unwrap();
        assert!((ScalarField::constant(&i, 1.0).integrate() - 8.0).abs() < 1e-13);
    }

    #[test]
    fn quadrature_kills_pure_modes_and_odd_fields() {
        let grid = torus(8);
        let mode = ScalarField::from_fn(&grid, |c| (TAU * c[0]).cos());
        assert!(mode.integrate().abs() < 1e-13);
        let odd = ScalarField::from_fn(&grid, |c| (TAU * c[0]).sin());
        assert!(odd.integrate().abs() < 1e-13);
    }

    #[test]
    fn second_derivatives_integrate_to_zero_on_torus() {
        let grid = torus(8);
        let u = random_smooth_field(&grid, 9, 1.0, 0.7);
        assert!(second_plus(&u).integrate().abs() < 1e-10);
        assert!(second_minus(&u).integrate().abs() < 1e-10);
    }

    #[test]
    fn random_fields_are_deterministic() {
        let grid = torus(6);
        let a = random_smooth_field(&grid, 42, 0.5, 1.0);
        let b = random_smooth_field(&grid, 42, 0.5, 1.0);
        assert_eq!(a.data(), b.data());
        let c = random_smooth_field(&grid, 43, 0.5, 1.0);
        assert!(a.sub(&c).sup_norm() > 0.0);
        let z = random_smooth_field(&grid, 42, 0.0, 1.0);
        assert_eq!(z.sup_norm(), 0.0);
        assert!(a.weighted_mean().abs() < 1e-12);
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::unit_torus(3).is_err());
        assert!(Grid::hopf(-1.0, 1.0, 10.0, 16, 8).is_err());
        assert!(Grid::hopf(1.0, 1.0, 0.0, 16, 8).is_err());
        assert!(Grid::inoue(0.0, 1.0, 16).is_err());
        assert!(Grid::inoue(2.0, 1.0, 16).is_err());
    }

    #[test]
    fn field_validation() {
        let grid = torus(4);
        assert!(ScalarField::from_data(&grid, vec![0.0; 3]).is_err());
        assert!(ScalarField::from_data(&grid, vec![f64::NAN; 256]).is_err());
    }

    #[test]
    fn neumann_closure_matches_interior_and_kills_linear_gradient() {
        // On even-extendable data the two closures agree; the Neumann fold
        // zeroes the first derivative at the ends.
        let grid = Grid::inoue(1.0, 3.0, 41).unwrap();
        let u = ScalarField::from_fn(&grid, |c| {
            (std::f64::consts::PI * (c[0] - 1.0) / 2.0).cos()
        });
        let one = d_axis(&u, 0, 1, Closure::Neumann);
        assert!(one.data()[0].abs() < 1e-14);
        assert!(one.data()[40].abs() < 1e-14);
        let a = d_axis(&u, 0, 2, Closure::OneSided);
        let b = d_axis(&u, 0, 2, Closure::Neumann);
        let interior = a.sub(&b).interior_sup_norm();
        assert!(interior < 1e-12, "{interior}");
    }

    #[test]
    fn default_hopf_half_width() {
        assert_eq!(hopf_default_half_width(1.0, 2.0), 10.0);
        assert_eq!(hopf_default_half_width(0.5, 2.0), 20.0);
    }
}
