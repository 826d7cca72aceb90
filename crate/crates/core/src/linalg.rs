//! Matrix-free Krylov iteration and the structured preconditioners used by
//! every elliptic solve in the crate.
//!
//! The elliptic operators all have the shape
//!
//!   L u = c_+ . Dplus(u) + c_- . Dminus(u)        (coefficients outside)
//!   L u = Dplus(c_+ u) + Dminus(c_- u)            (coefficients inside)
//!
//! with positive coefficient fields. The preconditioner replaces the
//! coefficients by their means (Torus4D) or s-averaged x-profiles
//! (HopfCylinder, InoueStrip) and inverts the resulting operator exactly:
//! diagonally in Fourier space on the torus, by per-s-mode banded complex
//! LU factorisations on charts with one truncated axis.

use rustfft::num_complex::Complex64;

use crate::error::SolveError;
use crate::grid::{fd_stencils, Closure, Grid, GridSpec, ScalarField, FD_HALF_WIDTH};
use crate::spectral::{fft_axis, wavenumber};
use std::sync::Arc;

// ---------------------------------------------------------------------------
// Banded complex LU with partial pivoting
// ---------------------------------------------------------------------------

/// Banded complex matrix with `kl` sub-diagonals and `ku + kl` stored
/// super-diagonals (the extra `kl` hold pivoting fill-in).
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<Complex64>,
    pivots: Vec<usize>,
    factored: bool,
}

impl BandMatrix {
    pub fn new(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        BandMatrix {
            n,
            kl,
            ku: ku + kl,
            width,
            data: vec![Complex64::new(0.0, 0.0); n * width],
            pivots: vec![0; n],
            factored: false,
        }
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let lo = i.saturating_sub(self.kl);
        if j < lo || j > i + self.ku || j >= self.n {
            return None;
        }
        Some(i * self.width + (j + self.kl - i))
    }

    pub fn add(&mut self, i: usize, j: usize, v: Complex64) {
        assert!(!self.factored);
        let s = self
            .slot(i, j)
            .unwrap_or_else(|| panic!("entry ({i},{j}) outside band kl={} ku={}", self.kl, self.ku));
        self.data[s] += v;
    }

    fn get(&self, i: usize, j: usize) -> Complex64 {
        self.slot(i, j)
            .map(|s| self.data[s])
            .unwrap_or(Complex64::new(0.0, 0.0))
    }

    fn set(&mut self, i: usize, j: usize, v: Complex64) {
        let s = self.slot(i, j).expect("entry outside band");
        self.data[s] = v;
    }

    /// Replace row i by the identity row (used to pin the constant mode of
    /// singular zero-frequency blocks).
    pub fn pin_row(&mut self, i: usize) {
        assert!(!self.factored);
        let lo = i.saturating_sub(self.kl);
        let hi = (i + self.ku).min(self.n - 1);
        for j in lo..=hi {
            let s = self.slot(i, j).unwrap();
            self.data[s] = Complex64::new(if i == j { 1.0 } else { 0.0 }, 0.0);
        }
    }

    /// LU factorisation with partial pivoting confined to the band.
    pub fn factor(&mut self) -> Result<(), SolveError> {
        assert!(!self.factored);
        let n = self.n;
        for k in 0..n {
            let imax = (k + self.kl).min(n - 1);
            let mut p = k;
            let mut best = self.get(k, k).norm_sqr();
            for i in k + 1..=imax {
                let v = self.get(i, k).norm_sqr();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 {
                return Err(SolveError::KrylovStagnation {
                    residual: f64::INFINITY,
                    iterations: 0,
                    tol: 0.0,
                });
            }
            self.pivots[k] = p;
            if p != k {
                let hij = (k + self.ku).min(n - 1);
                for j in k..=hij {
                    let a = self.get(k, j);
                    let b = self.get(p, j);
                    self.set(k, j, b);
                    self.set(p, j, a);
                }
            }
            let diag = self.get(k, k);
            let imax = (k + self.kl).min(n - 1);
            for i in k + 1..=imax {
                let m = self.get(i, k) / diag;
                self.set(i, k, m);
                let hij = (k + self.ku).min(n - 1);
                for j in k + 1..=hij {
                    let v = self.get(i, j) - m * self.get(k, j);
                    self.set(i, j, v);
                }
            }
        }
        self.factored = true;
        Ok(())
    }

    pub fn solve(&self, b: &mut [Complex64]) {
        assert!(self.factored);
        let n = self.n;
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                b.swap(p, k);
            }
            let imax = (k + self.kl).min(n - 1);
            for i in k + 1..=imax {
                let m = self.get(i, k);
                let bk = b[k];
                b[i] -= m * bk;
            }
        }
        for k in (0..n).rev() {
            let hij = (k + self.ku).min(n - 1);
            let mut acc = b[k];
            for j in k + 1..=hij {
                acc -= self.get(k, j) * b[j];
            }
            b[k] = acc / self.get(k, k);
        }
    }
}

// ---------------------------------------------------------------------------
// GMRES
// ---------------------------------------------------------------------------

/// Matrix-free real linear operator.
pub trait LinOp {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

/// Right preconditioner.
pub trait Precond {
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

/// Identity preconditioner.
pub struct NoPrecond;

impl Precond for NoPrecond {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub struct GmresOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Restarted GMRES with right preconditioning. Converges on the true
/// (unpreconditioned) residual ||b - A x|| <= tol_rel * ||b||.
pub fn gmres(
    op: &dyn LinOp,
    pre: &dyn Precond,
    b: &[f64],
    x0: Option<&[f64]>,
    tol_rel: f64,
    max_iter: usize,
    restart: usize,
) -> Result<GmresOutcome, SolveError> {
    let n = op.dim();
    let bnorm = norm(b);
    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![0.0; n]);
    if bnorm == 0.0 {
        return Ok(GmresOutcome {
            x: vec![0.0; n],
            iterations: 0,
            residual: 0.0,
        });
    }
    let target = tol_rel * bnorm;
    let mut total_iters = 0usize;
    let mut scratch = vec![0.0; n];
    let mut r = vec![0.0; n];
    loop {
        op.apply(&x, &mut r);
        for i in 0..n {
            r[i] = b[i] - r[i];
        }
        let beta = norm(&r);
        if beta <= target {
            return Ok(GmresOutcome {
                x,
                iterations: total_iters,
                residual: beta,
            });
        }
        if total_iters >= max_iter {
            return Err(SolveError::KrylovStagnation {
                residual: beta,
                iterations: total_iters,
                tol: target,
            });
        }
        let m = restart.min(max_iter - total_iters);
        let mut v: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        v.push(r.iter().map(|&w| w / beta).collect());
        let mut h = vec![vec![0.0f64; m]; m + 1];
        let mut cs = vec![0.0f64; m];
        let mut sn = vec![0.0f64; m];
        let mut g = vec![0.0f64; m + 1];
        g[0] = beta;
        let mut k_done = 0;
        for k in 0..m {
            // w = A M^-1 v_k
            pre.apply(&v[k], &mut scratch);
            let mut w = vec![0.0; n];
            op.apply(&scratch, &mut w);
            for j in 0..=k {
                h[j][k] = dot(&w, &v[j]);
                for i in 0..n {
                    w[i] -= h[j][k] * v[j][i];
                }
            }
            h[k + 1][k] = norm(&w);
            if h[k + 1][k] > 0.0 {
                v.push(w.iter().map(|&y| y / h[k + 1][k]).collect());
            } else {
                v.push(vec![0.0; n]);
            }
            // Givens rotations
            for j in 0..k {
                let t = cs[j] * h[j][k] + sn[j] * h[j + 1][k];
                h[j + 1][k] = -sn[j] * h[j][k] + cs[j] * h[j + 1][k];
                h[j][k] = t;
            }
            let denom = (h[k][k] * h[k][k] + h[k + 1][k] * h[k + 1][k]).sqrt();
            if denom == 0.0 {
                cs[k] = 1.0;
                sn[k] = 0.0;
            } else {
                cs[k] = h[k][k] / denom;
                sn[k] = h[k + 1][k] / denom;
            }
            h[k][k] = cs[k] * h[k][k] + sn[k] * h[k + 1][k];
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_done = k + 1;
            total_iters += 1;
            if g[k + 1].abs() <= target || total_iters >= max_iter {
                break;
            }
        }
        // back substitution for y, then x += M^-1 (V y)
        let mut y = vec![0.0f64; k_done];
        for i in (0..k_done).rev() {
            let mut acc = g[i];
            for j in i + 1..k_done {
                acc -= h[i][j] * y[j];
            }
            y[i] = acc / h[i][i];
        }
        let mut update = vec![0.0; n];
        for (j, yj) in y.iter().enumerate() {
            for i in 0..n {
                update[i] += yj * v[j][i];
            }
        }
        pre.apply(&update, &mut scratch);
        for i in 0..n {
            x[i] += scratch[i];
        }
    }
}

// ---------------------------------------------------------------------------
// Structured split-Laplace preconditioner
// ---------------------------------------------------------------------------

/// Whether the coefficient fields multiply the derivative output or the
/// argument of the derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoeffSide {
    Outside,
    Inside,
}

enum PrecondKind {
    /// Fourier symbol inverse on the fully periodic torus.
    TorusSymbol { dims: Vec<usize>, symbol: Vec<f64> },
    /// Per-s-mode banded LU on the Hopf cylinder.
    HopfModes {
        n_x: usize,
        n_s: usize,
        blocks: Vec<BandMatrix>,
    },
    /// Single banded LU on the Inoue strip.
    Strip { block: BandMatrix },
}

pub struct SplitPrecond {
    kind: PrecondKind,
}

impl SplitPrecond {
    /// Build from the coefficient fields pairing with the mu-mu and nu-nu
    /// derivatives respectively.
    pub fn build(
        grid: &Arc<Grid>,
        coeff_plus: &ScalarField,
        coeff_minus: &ScalarField,
        side: CoeffSide,
    ) -> Result<SplitPrecond, SolveError> {
        match grid.spec() {
            GridSpec::Torus4D { n, periods } => {
                let cp = coeff_plus.weighted_mean();
                let cm = coeff_minus.weighted_mean();
                let dims = grid.dims();
                let mut symbol = vec![0.0f64; grid.len()];
                for (flat, s) in symbol.iter_mut().enumerate() {
                    let idx = grid.multi_index(flat);
                    let k1 = wavenumber(idx[0], n[0], periods[0]);
                    let k2 = wavenumber(idx[1], n[1], periods[1]);
                    let k3 = wavenumber(idx[2], n[2], periods[2]);
                    let k4 = wavenumber(idx[3], n[3], periods[3]);
                    *s = -0.25 * cp * (k1 * k1 + k2 * k2) - 0.25 * cm * (k3 * k3 + k4 * k4);
                }
                Ok(SplitPrecond {
                    kind: PrecondKind::TorusSymbol { dims, symbol },
                })
            }
            GridSpec::HopfCylinder { n_x, n_s, .. } => {
                let (cp_prof, cm_prof) =
                    s_profiles(grid, coeff_plus, coeff_minus, *n_x, *n_s);
                let h = grid.axes()[0].spacing();
                let mut blocks = Vec::with_capacity(*n_s);
                for m in 0..*n_s {
                    let k = if 2 * m == *n_s {
                        // Odd first derivative of the Nyquist mode is zeroed
                        // by the spectral transform; match that here.
                        0.0
                    } else {
                        wavenumber(m, *n_s, 2.0)
                    };
                    let k2 = wavenumber(m, *n_s, 2.0).powi(2);
                    let mut mat = assemble_hopf_mode(*n_x, h, k, k2, &cp_prof, &cm_prof, side);
                    if m == 0 {
                        mat.pin_row(0);
                    }
                    mat.factor()?;
                    blocks.push(mat);
                }
                Ok(SplitPrecond {
                    kind: PrecondKind::HopfModes {
                        n_x: *n_x,
                        n_s: *n_s,
                        blocks,
                    },
                })
            }
            GridSpec::InoueStrip { n_y, .. } => {
                let h = grid.axes()[0].spacing();
                let st2 = fd_stencils(*n_y, h, 2, Closure::Neumann);
                let mut mat = BandMatrix::new(*n_y, FD_HALF_WIDTH, FD_HALF_WIDTH);
                let cp = coeff_plus.data();
                for (i, nodes, weights) in stencil_rows(*n_y, &st2) {
                    for (&j, &w) in nodes.iter().zip(weights.iter()) {
                        let c = match side {
                            CoeffSide::Outside => cp[i],
                            CoeffSide::Inside => cp[j],
                        };
                        mat.add(i, j, Complex64::new(0.25 * w * c, 0.0));
                    }
                }
                mat.pin_row(0);
                mat.factor()?;
                Ok(SplitPrecond {
                    kind: PrecondKind::Strip { block: mat },
                })
            }
        }
    }

    /// Approximate inverse application; the output is mean-free in the
    /// constant direction (the gauge direction of all our solves).
    pub fn solve(&self, r: &[f64], out: &mut [f64]) {
        match &self.kind {
            PrecondKind::TorusSymbol { dims, symbol } => {
                let mut buf: Vec<Complex64> =
                    r.iter().map(|&v| Complex64::new(v, 0.0)).collect();
                for ax in 0..dims.len() {
                    fft_axis(&mut buf, dims, ax, false);
                }
                for (v, &s) in buf.iter_mut().zip(symbol.iter()) {
                    if s != 0.0 {
                        *v /= s;
                    } else {
                        *v = Complex64::new(0.0, 0.0);
                    }
                }
                for ax in 0..dims.len() {
                    fft_axis(&mut buf, dims, ax, true);
                }
                let scale = 1.0 / r.len() as f64;
                for (o, v) in out.iter_mut().zip(buf.iter()) {
                    *o = v.re * scale;
                }
            }
            PrecondKind::HopfModes { n_x, n_s, blocks } => {
                let dims = [*n_x, *n_s];
                let mut buf: Vec<Complex64> =
                    r.iter().map(|&v| Complex64::new(v, 0.0)).collect();
                fft_axis(&mut buf, &dims, 1, false);
                let mut line = vec![Complex64::new(0.0, 0.0); *n_x];
                for m in 0..*n_s {
                    for ix in 0..*n_x {
                        line[ix] = buf[ix * n_s + m];
                    }
                    blocks[m].solve(&mut line);
                    if m == 0 {
                        let mean: Complex64 =
                            line.iter().sum::<Complex64>() / *n_x as f64;
                        for v in line.iter_mut() {
                            *v -= mean;
                        }
                    }
                    for ix in 0..*n_x {
                        buf[ix * n_s + m] = line[ix];
                    }
                }
                fft_axis(&mut buf, &dims, 1, true);
                let scale = 1.0 / *n_s as f64;
                for (o, v) in out.iter_mut().zip(buf.iter()) {
                    *o = v.re * scale;
                }
            }
            PrecondKind::Strip { block } => {
                let mut line: Vec<Complex64> =
                    r.iter().map(|&v| Complex64::new(v, 0.0)).collect();
                block.solve(&mut line);
                let mean: Complex64 = line.iter().sum::<Complex64>() / line.len() as f64;
                for (o, v) in out.iter_mut().zip(line.iter()) {
                    *o = (v - mean).re;
                }
            }
        }
    }
}

impl Precond for SplitPrecond {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        self.solve(r, z);
    }
}

/// s-averaged x-profiles of the two coefficient fields.
fn s_profiles(
    _grid: &Arc<Grid>,
    coeff_plus: &ScalarField,
    coeff_minus: &ScalarField,
    n_x: usize,
    n_s: usize,
) -> (Vec<f64>, Vec<f64>) {
    let mut cp = vec![0.0; n_x];
    let mut cm = vec![0.0; n_x];
    for ix in 0..n_x {
        for is in 0..n_s {
            cp[ix] += coeff_plus.data()[ix * n_s + is];
            cm[ix] += coeff_minus.data()[ix * n_s + is];
        }
        cp[ix] /= n_s as f64;
        cm[ix] /= n_s as f64;
    }
    (cp, cm)
}

/// Iterate matrix rows of a stencil table as (row, nodes, weights).
fn stencil_rows<'a>(
    n: usize,
    st: &'a crate::grid::FdStencils,
) -> Vec<(usize, Vec<usize>, Vec<f64>)> {
    let mut rows = Vec::with_capacity(n);
    for (row, (nodes, w)) in st.lo_rows.iter().enumerate() {
        rows.push((row, nodes.clone(), diffform_row(row, nodes, w)));
    }
    let (offs, w) = &st.centered;
    for i in FD_HALF_WIDTH..n - FD_HALF_WIDTH {
        let nodes: Vec<usize> = offs.iter().map(|&o| (i as isize + o) as usize).collect();
        rows.push((i, nodes.clone(), diffform_row(i, &nodes, w)));
    }
    for (row, (nodes, w)) in st.hi_rows.iter().enumerate() {
        let i = n - 1 - row;
        rows.push((i, nodes.clone(), diffform_row(i, nodes, w)));
    }
    rows
}

/// Convert a stencil row to difference form (exactly zero row sum), matching
/// how `apply_fd_line` evaluates derivatives.
fn diffform_row(center: usize, nodes: &[usize], w: &[f64]) -> Vec<f64> {
    let total: f64 = w.iter().sum();
    nodes
        .iter()
        .zip(w)
        .map(|(&j, &c)| if j == center { c - total } else { c })
        .collect()
}

fn assemble_hopf_mode(
    n_x: usize,
    h: f64,
    k: f64,
    k2: f64,
    cp_prof: &[f64],
    cm_prof: &[f64],
    side: CoeffSide,
) -> BandMatrix {
    // d^2/dmu^2 = Dxx + i k Dx - k^2/4, d^2/dnu^2 = Dxx - i k Dx - k^2/4
    // (acting on the m-th s-mode).
    let st2 = fd_stencils(n_x, h, 2, Closure::Neumann);
    let st1 = fd_stencils(n_x, h, 1, Closure::Neumann);
    let mut mat = BandMatrix::new(n_x, FD_HALF_WIDTH, FD_HALF_WIDTH);
    let coeff = |i: usize, j: usize, prof: &[f64]| -> f64 {
        match side {
            CoeffSide::Outside => prof[i],
            CoeffSide::Inside => prof[j],
        }
    };
    for (i, nodes, weights) in stencil_rows(n_x, &st2) {
        for (&j, &w) in nodes.iter().zip(weights.iter()) {
            let c = coeff(i, j, cp_prof) + coeff(i, j, cm_prof);
            mat.add(i, j, Complex64::new(w * c, 0.0));
        }
    }
    for (i, nodes, weights) in stencil_rows(n_x, &st1) {
        for (&j, &w) in nodes.iter().zip(weights.iter()) {
            let c = coeff(i, j, cp_prof) - coeff(i, j, cm_prof);
            mat.add(i, j, Complex64::new(0.0, k * w * c));
        }
    }
    // diagonal -k^2/4 (cp + cm)
    for i in 0..n_x {
        let c = cp_prof[i] + cm_prof[i];
        mat.add(i, i, Complex64::new(-0.25 * k2 * c, 0.0));
    }
    mat
}
