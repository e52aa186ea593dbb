//! Separable discrete convolution on zero-padded grids.
//!
//! Every homogeneous kernel used here factors over axes, so a d-dimensional
//! convolution is d passes of one-dimensional convolutions along grid lines.
//! An axis table stores the kernel at offsets `(j - (N-1)) h`, `j = 0..2N-1`.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::geometry::{GProfile, Weight};
use crate::grid::{weighted_lp_norm, Grid, GridField};

/// Largest tolerated kernel mass outside the offset table.
pub const TAIL_THRESHOLD: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Direct,
    Fft,
    /// FFT for `N >= 64`, direct summation below.
    Auto,
}

/// Kernel offsets `(j - (N-1)) h` for `j = 0..2N-1`.
pub fn axis_offsets(grid: &Grid) -> Vec<f64> {
    let n = grid.points_per_axis() as i64;
    let h = grid.spacing();
    (0..2 * n - 1).map(|j| (j - (n - 1)) as f64 * h).collect()
}

/// A product kernel `k(u) = prod_i k_i(u_i)` tabulated per axis.
#[derive(Clone, Debug)]
pub struct SeparableKernel {
    axes: Vec<Vec<f64>>,
}

impl SeparableKernel {
    pub fn new(grid: &Grid, axes: Vec<Vec<f64>>) -> Result<Self> {
        if axes.len() != grid.dim() {
            return Err(Error::Dimension { expected: grid.dim(), got: axes.len() });
        }
        let want = 2 * grid.points_per_axis() - 1;
        for a in &axes {
            if a.len() != want {
                return Err(Error::Dimension { expected: want, got: a.len() });
            }
        }
        Ok(SeparableKernel { axes })
    }

    pub fn from_fn(grid: &Grid, k: impl Fn(usize, f64) -> f64) -> Self {
        let offs = axis_offsets(grid);
        let axes = (0..grid.dim()).map(|a| offs.iter().map(|&u| k(a, u)).collect()).collect();
        SeparableKernel { axes }
    }

    pub fn axis(&self, a: usize) -> &[f64] {
        &self.axes[a]
    }

    /// Riemann mass of one axis table.
    pub fn axis_mass(&self, a: usize, h: f64) -> f64 {
        self.axes[a].iter().sum::<f64>() * h
    }

    /// Kernel value at lattice offset `x - y` given in grid steps.
    pub fn at(&self, offset: &[i64]) -> f64 {
        let n = (self.axes[0].len() + 1) / 2;
        offset
            .iter()
            .zip(&self.axes)
            .map(|(&o, a)| {
                let j = o + n as i64 - 1;
                if j < 0 || j as usize >= a.len() {
                    0.0
                } else {
                    a[j as usize]
                }
            })
            .product()
    }
}

/// `(k * f)(x_i) = sum_j k(x_i - x_j) f(x_j) h^d`.
pub fn convolve(f: &GridField, k: &SeparableKernel, method: Method) -> GridField {
    let grid = f.grid();
    let n = grid.points_per_axis();
    let use_fft = match method {
        Method::Direct => false,
        Method::Fft => true,
        Method::Auto => n >= 64,
    };
    let mut values = f.values().to_vec();
    let mut engine = if use_fft { Some(FftEngine::new(n)) } else { None };
    for axis in 0..grid.dim() {
        let table = k.axis(axis);
        let spectrum = engine.as_mut().map(|e| e.spectrum(table));
        let stride = grid.stride(axis);
        let mut line = vec![0.0; n];
        let mut out = vec![0.0; n];
        for start in line_starts(grid, axis) {
            for (i, v) in line.iter_mut().enumerate() {
                *v = values[start + i * stride];
            }
            if line.iter().all(|&v| v == 0.0) {
                continue;
            }
            match (&mut engine, &spectrum) {
                (Some(e), Some(s)) => e.convolve_line(&line, s, &mut out),
                _ => direct_line(&line, table, &mut out),
            }
            for (i, v) in out.iter().enumerate() {
                values[start + i * stride] = v * grid.spacing();
            }
        }
    }
    GridField::from_raw(grid, values, f.kind())
}

fn line_starts(grid: &Grid, axis: usize) -> Vec<usize> {
    let stride = grid.stride(axis);
    let n = grid.points_per_axis();
    (0..grid.len()).filter(|&i| (i / stride) % n == 0).collect()
}

fn direct_line(f: &[f64], table: &[f64], out: &mut [f64]) {
    let n = f.len();
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (j, &fj) in f.iter().enumerate() {
            if fj != 0.0 {
                acc += table[i + n - 1 - j] * fj;
            }
        }
        *o = acc;
    }
}

struct FftEngine {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    buf: Vec<Complex<f64>>,
    scratch: Vec<Complex<f64>>,
}

impl FftEngine {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(2 * n);
        let inverse = planner.plan_fft_inverse(2 * n);
        let scratch_len = forward.get_inplace_scratch_len().max(inverse.get_inplace_scratch_len());
        FftEngine {
            n,
            forward,
            inverse,
            buf: vec![Complex::new(0.0, 0.0); 2 * n],
            scratch: vec![Complex::new(0.0, 0.0); scratch_len],
        }
    }

    /// Transform of the table laid out circularly: offset `k` sits at `k mod 2N`.
    fn spectrum(&mut self, table: &[f64]) -> Vec<Complex<f64>> {
        let n = self.n;
        let mut s = vec![Complex::new(0.0, 0.0); 2 * n];
        for (j, &v) in table.iter().enumerate() {
            let k = j as i64 - (n as i64 - 1);
            s[k.rem_euclid(2 * n as i64) as usize] = Complex::new(v, 0.0);
        }
        self.forward.process_with_scratch(&mut s, &mut self.scratch);
        s
    }

    fn convolve_line(&mut self, f: &[f64], spectrum: &[Complex<f64>], out: &mut [f64]) {
        let n = self.n;
        for (i, b) in self.buf.iter_mut().enumerate() {
            *b = Complex::new(if i < n { f[i] } else { 0.0 }, 0.0);
        }
        self.forward.process_with_scratch(&mut self.buf, &mut self.scratch);
        for (b, s) in self.buf.iter_mut().zip(spectrum) {
            *b *= s;
        }
        self.inverse.process_with_scratch(&mut self.buf, &mut self.scratch);
        let norm = 1.0 / (2 * n) as f64;
        for (o, b) in out.iter_mut().zip(&self.buf) {
            *o = b.re * norm;
        }
    }
}

/// Fails when a symmetric one-dimensional kernel `f` of characteristic `width`
/// carries more than [`TAIL_THRESHOLD`] of its mass beyond `|u| = reach`.
pub(crate) fn check_tail(f: impl Fn(f64) -> f64, reach: f64, width: f64, t: f64) -> Result<()> {
    let step = width / 100.0;
    let (total, outside) = abs_mass_split(&f, reach, step);
    let mass = outside / total;
    if mass > TAIL_THRESHOLD {
        return Err(Error::Truncation { mass, threshold: TAIL_THRESHOLD, t });
    }
    Ok(())
}

/// Trapezoid masses of `|f|` over the whole line and over `|u| > reach`, assuming symmetry.
fn abs_mass_split(f: &impl Fn(f64) -> f64, reach: f64, step: f64) -> (f64, f64) {
    let f0 = f(0.0).abs();
    let mut total = 0.5 * f0;
    let mut outside = 0.0;
    let mut peak = f0;
    let mut u = step;
    loop {
        let v = f(u).abs();
        peak = peak.max(v);
        total += v;
        if u > reach {
            outside += v;
        }
        if (u > reach && v < 1e-22 * peak) || u > reach + 5e3 * step {
            break;
        }
        u += step;
    }
    (2.0 * total * step, 2.0 * outside * step)
}

/// `G_t * f` on the grid, after checking that `G_t` fits in the padded box.
pub fn convolve_profile(g: &GProfile, t: f64, f: &GridField) -> Result<GridField> {
    if !(t > 0.0) {
        return Err(Error::domain(format!("convolution time must be positive, got {t}")));
    }
    let grid = f.grid();
    if g.scaling() != grid.scaling() {
        return Err(Error::structural("profile scaling differs from the grid scaling"));
    }
    let kernel = profile_kernel(g, t, grid)?;
    Ok(convolve(f, &kernel, Method::Auto))
}

pub(crate) fn profile_kernel(g: &GProfile, t: f64, grid: &Grid) -> Result<SeparableKernel> {
    let ell = g.scaling().ell();
    let s = g.scaling().s().to_vec();
    let kernel = SeparableKernel::from_fn(grid, |a, u| {
        let sc = t.powf(-s[a] / ell);
        sc * g.axis_factor(a, sc * u)
    });
    let reach = 2.0 * grid.half_width() - grid.spacing();
    for (a, &sa) in s.iter().enumerate() {
        let sc = t.powf(-sa / ell);
        check_tail(|u| sc * g.axis_factor(a, sc * u), reach, 1.0 / sc, t)?;
    }
    Ok(kernel)
}

#[derive(Clone, Debug)]
pub struct YoungReport {
    /// Kernel exponent with `1 + 1/q = 1/r + 1/p`.
    pub r: f64,
    /// `||G_t * f||_{L^q}`.
    pub lhs: f64,
    /// `||G_t||_{L^r}` over the offset table.
    pub kernel_norm: f64,
    /// `||G_t||_{L^r} ||f||_{L^p}`.
    pub rhs: f64,
    pub holds: bool,
}

/// Discrete Young inequality for `G_t * f` with flat weights, `p <= q`.
pub fn young_check(g: &GProfile, t: f64, f: &GridField, p: f64, q: f64) -> Result<YoungReport> {
    let inv = |v: f64| if v.is_infinite() { 0.0 } else { 1.0 / v };
    if !(p >= 1.0 && q >= p) {
        return Err(Error::domain(format!("Young needs 1 <= p <= q, got p = {p}, q = {q}")));
    }
    let inv_r = 1.0 + inv(q) - inv(p);
    let r = if inv_r == 0.0 { f64::INFINITY } else { 1.0 / inv_r };
    let grid = f.grid();
    let kernel = profile_kernel(g, t, grid)?;
    let h = grid.spacing();
    let kernel_norm: f64 = (0..grid.dim())
        .map(|a| {
            let ax = kernel.axis(a);
            if r.is_infinite() {
                ax.iter().fold(0.0f64, |m, v| m.max(v.abs()))
            } else {
                (ax.iter().map(|v| v.abs().powf(r)).sum::<f64>() * h).powf(1.0 / r)
            }
        })
        .product();
    let flat = Weight::flat();
    let lhs = weighted_lp_norm(&convolve(f, &kernel, Method::Auto), q, &flat)?;
    let rhs = kernel_norm * weighted_lp_norm(f, p, &flat)?;
    Ok(YoungReport { r, lhs, kernel_norm, rhs, holds: lhs <= rhs * (1.0 + 1e-12) + 1e-12 })
}
