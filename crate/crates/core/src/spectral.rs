//! Fourier collocation along periodic axes.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::grid::{for_each_line, Grid};

thread_local! {
    static PLANS: RefCell<HashMap<(usize, bool), Arc<dyn Fft<f64>>>> = RefCell::new(HashMap::new());
}

pub(crate) fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANS.with(|cell| {
        cell.borrow_mut()
            .entry((len, inverse))
            .or_insert_with(|| {
                let mut planner = FftPlanner::new();
                if inverse {
                    planner.plan_fft_inverse(len)
                } else {
                    planner.plan_fft_forward(len)
                }
            })
            .clone()
    })
}

/// Signed wavenumber of Fourier mode m on a grid of n points with the given
/// period: k_m = 2 pi m~ / period with m~ in (-n/2, n/2].
pub(crate) fn wavenumber(m: usize, n: usize, period: f64) -> f64 {
    let m_signed = if m <= n / 2 {
        m as isize
    } else {
        m as isize - n as isize
    };
    2.0 * std::f64::consts::PI * m_signed as f64 / period
}

/// Differentiate `data` along a periodic `axis` (order 1 or 2) writing into
/// `out`. For odd orders the Nyquist mode is zeroed.
pub(crate) fn spectral_derivative_axis(
    data: &[f64],
    out: &mut [f64],
    grid: &Grid,
    axis: usize,
    order: usize,
) {
    let dims = grid.dims();
    let n = dims[axis];
    let period = match grid.axes()[axis].kind {
        crate::grid::AxisKind::Periodic { period } => period,
        _ => unreachable!("spectral derivative requested on a truncated axis"),
    };
    let fwd = plan(n, false);
    let inv = plan(n, true);
    // Precompute the multiplier (i k)^order per mode.
    let mult: Vec<Complex64> = (0..n)
        .map(|m| {
            let k = wavenumber(m, n, period);
            if order % 2 == 1 && n % 2 == 0 && m == n / 2 {
                return Complex64::new(0.0, 0.0);
            }
            let ik = Complex64::new(0.0, k);
            ik.powu(order as u32)
        })
        .collect();
    let mut line = vec![Complex64::new(0.0, 0.0); n];
    for_each_line(&dims, axis, |offset, stride| {
        for j in 0..n {
            line[j] = Complex64::new(data[offset + j * stride], 0.0);
        }
        fwd.process(&mut line);
        for (v, m) in line.iter_mut().zip(&mult) {
            *v *= m;
        }
        inv.process(&mut line);
        let scale = 1.0 / n as f64;
        for j in 0..n {
            out[offset + j * stride] = line[j].re * scale;
        }
    });
}

/// Forward FFT along one axis of a complex array (in place), unnormalised.
pub(crate) fn fft_axis(data: &mut [Complex64], dims: &[usize], axis: usize, inverse: bool) {
    let n = dims[axis];
    let p = plan(n, inverse);
    let mut line = vec![Complex64::new(0.0, 0.0); n];
    for_each_line(dims, axis, |offset, stride| {
        for j in 0..n {
            line[j] = data[offset + j * stride];
        }
        p.process(&mut line);
        for j in 0..n {
            data[offset + j * stride] = line[j];
        }
    });
}
