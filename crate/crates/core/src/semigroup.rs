//! Concrete G-type semigroups and an a-posteriori checker for their axioms.
//!
//! Three backends: the exact heat kernel, the `d = 2` kernel of
//! `d_{x1}^2 - d_{x2}^4` (heat in `x1` times a biharmonic factor in `x2`), and
//! the fundamental solution of `d_x(a(x) d_x)` in `d = 1` obtained by time stepping.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::conv::{axis_offsets, check_tail, convolve, Method, SeparableKernel};
use crate::error::{Error, Result};
use crate::geometry::{binomial, GProfile, Scaling};
use crate::grid::{FieldKind, Grid, GridField, Window};

/// A bounded, positive diffusion coefficient `a(x)` in `d = 1`.
#[derive(Clone)]
pub struct Coefficient {
    label: String,
    a: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Coefficient({})", self.label)
    }
}

impl Coefficient {
    pub fn constant(c: f64) -> Self {
        Coefficient { label: format!("const-{c}"), a: Arc::new(move |_| c) }
    }

    /// `1 + amplitude sin(x)`.
    pub fn sinusoidal(amplitude: f64) -> Self {
        Coefficient { label: format!("1+{amplitude}sin"), a: Arc::new(move |x: f64| 1.0 + amplitude * x.sin()) }
    }

    pub fn custom(label: impl Into<String>, a: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Coefficient { label: label.into(), a: Arc::new(a) }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.a)(x)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stepper {
    /// Crank-Nicolson with four implicit Euler half steps at the start.
    CrankNicolson,
    ExplicitEuler,
}

#[derive(Clone, Debug)]
struct Parabolic {
    /// `a` at the half nodes `x_{i+1/2}`, `i = -1..N-1`; both ends are zero (no flux).
    a_half: Vec<f64>,
    a_min: f64,
    a_max: f64,
    dt: f64,
    stepper: Stepper,
}

#[derive(Clone, Debug)]
enum Backend {
    Heat,
    Anisotropic,
    Parabolic(Parabolic),
}

#[derive(Clone, Debug)]
pub struct Semigroup {
    label: String,
    grid: Grid,
    profile: GProfile,
    backend: Backend,
    c1: Option<f64>,
    c2: Option<f64>,
}

/// `n`-th physicists' Hermite polynomial.
pub(crate) fn hermite(n: usize, z: f64) -> f64 {
    let (mut h0, mut h1) = (1.0, 2.0 * z);
    if n == 0 {
        return h0;
    }
    for k in 1..n {
        let h2 = 2.0 * z * h1 - 2.0 * k as f64 * h0;
        h0 = h1;
        h1 = h2;
    }
    h1
}

/// `d_u^k` of the one-dimensional heat kernel `(4 pi t)^{-1/2} exp(-u^2 / 4t)`.
pub fn heat_kernel_1d(t: f64, u: f64, k: usize) -> f64 {
    let s = (4.0 * t).sqrt();
    let z = u / s;
    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
    sign * s.powi(-(k as i32)) * hermite(k, z) * (-z * z).exp() / (PI * 4.0 * t).sqrt()
}

/// `d_u^k` of the kernel of `exp(-t d_u^4)`, i.e. `t^{-1/4} B(u t^{-1/4})` with
/// `B(v) = (1/pi) int_0^inf exp(-xi^4) cos(xi v) d xi`.
pub fn biharmonic_kernel_1d(t: f64, u: f64, k: usize) -> f64 {
    let sc = t.powf(-0.25);
    let v = u * sc;
    let step = PI / (v.abs() + 20.0);
    let n = (3.2 / step).ceil() as usize;
    let phase = k as f64 * PI / 2.0;
    let mut acc = 0.5 * if k == 0 { phase.cos() } else { 0.0 };
    for j in 1..=n {
        let xi = j as f64 * step;
        acc += xi.powi(k as i32) * (-xi.powi(4)).exp() * (xi * v + phase).cos();
    }
    acc * step / PI * sc.powi(k as i32 + 1)
}

impl Semigroup {
    /// The heat semigroup `e^{t Delta}` on an isotropic grid with `ell = 2`.
    pub fn heat(grid: &Grid) -> Result<Self> {
        let sc = grid.scaling();
        if !sc.is_isotropic() || sc.ell() != 2.0 {
            return Err(Error::domain("the heat semigroup needs s = (1,...,1) and ell = 2"));
        }
        Ok(Semigroup {
            label: "heat".into(),
            grid: grid.clone(),
            profile: GProfile::gaussian(sc.clone(), 0.25)?,
            backend: Backend::Heat,
            c1: None,
            c2: None,
        })
    }

    /// The semigroup of `d_{x1}^2 - d_{x2}^4` with `s = (2, 1)`, `ell = 4`.
    pub fn anisotropic(grid: &Grid) -> Result<Self> {
        if grid.dim() < 2 {
            return Err(Error::domain("the anisotropic semigroup needs d >= 2"));
        }
        if grid.dim() > 2 {
            return Err(Error::domain("the anisotropic semigroup is implemented for d = 2 only"));
        }
        let want = Scaling::new(vec![2.0, 1.0], 4.0)?;
        if grid.scaling() != &want {
            return Err(Error::domain("the anisotropic semigroup needs s = (2, 1) and ell = 4"));
        }
        Ok(Semigroup {
            label: "anisotropic".into(),
            grid: grid.clone(),
            profile: GProfile::anisotropic(want, 0.2)?,
            backend: Backend::Anisotropic,
            c1: None,
            c2: None,
        })
    }

    /// Fundamental solution of `d_t = d_x(a d_x)` on a `d = 1` grid, zero flux at `x = +-L`.
    pub fn parabolic(coef: Coefficient, grid: &Grid, dt: f64, stepper: Stepper) -> Result<Self> {
        if grid.dim() != 1 {
            return Err(Error::domain("the parabolic backend is implemented for d = 1 only"));
        }
        let sc = grid.scaling();
        if sc.s() != [1.0] || sc.ell() != 2.0 {
            return Err(Error::domain("the parabolic backend needs s = 1 and ell = 2"));
        }
        if !(dt > 0.0) {
            return Err(Error::domain(format!("time step must be positive, got {dt}")));
        }
        let n = grid.points_per_axis();
        let h = grid.spacing();
        let mut a_half = vec![0.0; n + 1];
        for (i, a) in a_half.iter_mut().enumerate().take(n).skip(1) {
            *a = coef.eval(grid.coord(i) - 0.5 * h);
        }
        let interior = &a_half[1..n];
        if interior.iter().any(|a| !a.is_finite()) {
            return Err(Error::Model(format!("coefficient {} is not bounded on the grid", coef.label())));
        }
        let a_min = interior.iter().cloned().fold(f64::INFINITY, f64::min);
        let a_max = interior.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if a_min <= 0.0 {
            return Err(Error::Model(format!(
                "ellipticity fails for {}: min a = {a_min} on the sampled half nodes",
                coef.label()
            )));
        }
        let profile = GProfile::gaussian(sc.clone(), 0.9 / (4.0 * a_max))?;
        Ok(Semigroup {
            label: format!("parabolic[{}]", coef.label()),
            grid: grid.clone(),
            profile,
            backend: Backend::Parabolic(Parabolic { a_half, a_min, a_max, dt, stepper }),
            c1: None,
            c2: None,
        })
    }

    /// Replaces the decay constant of the profile.
    pub fn with_decay_constant(mut self, c: f64) -> Result<Self> {
        let sc = self.profile.scaling().clone();
        self.profile = match self.backend {
            Backend::Anisotropic => GProfile::anisotropic(sc, c)?,
            _ => GProfile::gaussian(sc, c)?,
        };
        Ok(self)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn scaling(&self) -> &Scaling {
        self.grid.scaling()
    }

    pub fn profile(&self) -> &GProfile {
        &self.profile
    }

    pub fn homogeneous(&self) -> bool {
        !matches!(self.backend, Backend::Parabolic(_))
    }

    /// Measured upper-bound constant, once [`Semigroup::calibrate`] has run.
    pub fn c1(&self) -> Option<f64> {
        self.c1
    }

    pub fn c2(&self) -> Option<f64> {
        self.c2
    }

    /// Runs the axiom checker and stores the measured `C1`, `C2`.
    pub fn calibrate(&mut self, sample: &AxiomSample) -> Result<AxiomReport> {
        let r = check_semigroup_axioms(self, sample)?;
        self.c1 = Some(r.c1);
        self.c2 = Some(r.c2);
        Ok(r)
    }

    /// Smallest time the grid resolves: every axis width `t^{s_i/ell}` is at least `h/sqrt 2`.
    pub fn min_time(&self) -> f64 {
        let h = self.grid.spacing();
        match &self.backend {
            Backend::Parabolic(p) => h * h / (2.0 * p.a_min),
            _ => {
                let ell = self.scaling().ell();
                self.scaling()
                    .s()
                    .iter()
                    .map(|s| (h / 2f64.sqrt()).powf(ell / s))
                    .fold(0.0, f64::max)
            }
        }
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::domain(format!("semigroup time must be positive, got {t}")));
        }
        let floor = self.min_time();
        if t < floor * (1.0 - 1e-12) {
            return Err(Error::domain(format!("t = {t} is below the grid resolution floor {floor}")));
        }
        Ok(())
    }

    /// One-dimensional factor `d_u^k q_axis(t, u)` of a homogeneous kernel.
    fn axis_value(&self, axis: usize, t: f64, u: f64, k: usize) -> f64 {
        match self.backend {
            Backend::Anisotropic if axis == 1 => biharmonic_kernel_1d(t, u, k),
            _ => heat_kernel_1d(t, u, k),
        }
    }

    fn axis_width(&self, axis: usize, t: f64) -> f64 {
        let s = self.scaling().s()[axis];
        t.powf(s / self.scaling().ell())
    }

    /// Kernel `u -> d^k q_t(u) (-u)^m`, tabulated and tail-checked.
    fn table(&self, t: f64, k: &[usize], m: &[usize]) -> Result<SeparableKernel> {
        self.check_time(t)?;
        let reach = 2.0 * self.grid.half_width() - self.grid.spacing();
        let offs = axis_offsets(&self.grid);
        let mut axes = Vec::with_capacity(self.grid.dim());
        for axis in 0..self.grid.dim() {
            let f = |u: f64| self.axis_value(axis, t, u, k[axis]) * (-u).powi(m[axis] as i32);
            check_tail(f, reach, self.axis_width(axis, t), t)?;
            axes.push(offs.iter().map(|&u| f(u)).collect());
        }
        SeparableKernel::new(&self.grid, axes)
    }

    fn check_multi(&self, k: &[usize]) -> Result<()> {
        if k.len() != self.grid.dim() {
            return Err(Error::Dimension { expected: self.grid.dim(), got: k.len() });
        }
        Ok(())
    }

    /// `Q_t f`.
    pub fn apply(&self, t: f64, f: &GridField) -> Result<GridField> {
        let zero = vec![0; self.grid.dim()];
        self.apply_general(t, &zero, &zero, Some(f))
    }

    /// `Q_t f` at each of the given times, which must be positive.
    pub fn apply_levels(&self, times: &[f64], f: &GridField) -> Result<Vec<GridField>> {
        match &self.backend {
            Backend::Parabolic(p) => {
                let mut order: Vec<usize> = (0..times.len()).collect();
                order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
                let mut out = vec![None; times.len()];
                let mut state = f.values().to_vec();
                let mut now = 0.0;
                for &i in &order {
                    self.check_time(times[i])?;
                    if times[i] > now {
                        state = p.evolve(&self.grid, state, times[i] - now, now == 0.0)?;
                        now = times[i];
                    }
                    out[i] = Some(GridField::from_raw(&self.grid, state.clone(), FieldKind::Function));
                }
                Ok(out.into_iter().map(|v| v.expect("every time visited")).collect())
            }
            _ => times.iter().map(|&t| self.apply(t, f)).collect(),
        }
    }

    /// `x -> int d_x^k Q_t(x, z) (z - x)^m g(z) dz`, with `g = 1` when `None`.
    ///
    /// The derivative acts on the kernel only, not on the monomial.
    pub fn apply_general(&self, t: f64, k: &[usize], m: &[usize], g: Option<&GridField>) -> Result<GridField> {
        self.check_multi(k)?;
        self.check_multi(m)?;
        if let Some(g) = g {
            if g.grid() != &self.grid {
                return Err(Error::structural("field grid differs from the semigroup grid"));
            }
        }
        match &self.backend {
            Backend::Parabolic(p) => {
                self.check_time(t)?;
                let (k, m) = (k[0], m[0]);
                if k > 2 {
                    return Err(Error::domain("tabulated kernels support derivatives of order <= 2"));
                }
                let n = self.grid.points_per_axis();
                let base = g.map_or_else(|| vec![1.0; n], |g| g.values().to_vec());
                let mut acc = vec![0.0; n];
                for j in 0..=m {
                    let weighted: Vec<f64> =
                        base.iter().enumerate().map(|(i, v)| v * self.grid.coord(i).powi(j as i32)).collect();
                    let evolved = finite_difference(&p.evolve(&self.grid, weighted, t, true)?, k, self.grid.spacing());
                    let c = binomial(&[m], &[j]);
                    for (i, a) in acc.iter_mut().enumerate() {
                        *a += c * (-self.grid.coord(i)).powi((m - j) as i32) * evolved[i];
                    }
                }
                Ok(GridField::from_raw(&self.grid, acc, FieldKind::Function))
            }
            _ => {
                let table = self.table(t, k, m)?;
                match g {
                    Some(g) => Ok(convolve(&g.clone().with_kind(FieldKind::Function), &table, Method::Auto)),
                    None => {
                        let h = self.grid.spacing();
                        let c: f64 = (0..self.grid.dim()).map(|a| table.axis_mass(a, h)).product();
                        Ok(GridField::constant(&self.grid, c))
                    }
                }
            }
        }
    }

    /// `d_x^k Q_t f`.
    pub fn apply_derivative(&self, t: f64, k: &[usize], f: &GridField) -> Result<GridField> {
        let zero = vec![0; self.grid.dim()];
        self.apply_general(t, k, &zero, Some(f))
    }

    /// `x -> Q_t(x, y_j)` for the grid node `j`.
    pub fn kernel_column(&self, t: f64, j: usize) -> Result<GridField> {
        self.check_time(t)?;
        match &self.backend {
            Backend::Parabolic(p) => {
                let mut v = vec![0.0; self.grid.len()];
                v[j] = 1.0 / self.grid.spacing();
                Ok(GridField::from_raw(&self.grid, p.evolve(&self.grid, v, t, true)?, FieldKind::Function))
            }
            _ => {
                let n = self.grid.points_per_axis() as i64;
                let h = self.grid.spacing();
                let factors: Vec<Vec<f64>> = (0..self.grid.dim())
                    .map(|a| (-(n - 1)..n).map(|o| self.axis_value(a, t, o as f64 * h, 0)).collect())
                    .collect();
                let yj = self.grid.multi(j);
                let values = (0..self.grid.len())
                    .map(|i| {
                        let xi = self.grid.multi(i);
                        (0..self.grid.dim())
                            .map(|a| factors[a][(xi[a] as i64 - yj[a] as i64 + n - 1) as usize])
                            .product()
                    })
                    .collect();
                Ok(GridField::from_raw(&self.grid, values, FieldKind::Function))
            }
        }
    }

    /// `d_x^k Q_t(x, y)` at arbitrary points; homogeneous kernels only.
    pub fn kernel_point(&self, t: f64, x: &[f64], y: &[f64], k: &[usize]) -> Result<f64> {
        self.check_multi(k)?;
        if !(t > 0.0) {
            return Err(Error::domain(format!("semigroup time must be positive, got {t}")));
        }
        if !self.homogeneous() {
            return Err(Error::domain("pointwise kernel values are only available for homogeneous kernels"));
        }
        Ok((0..self.grid.dim()).map(|a| self.axis_value(a, t, x[a] - y[a], k[a])).product())
    }
}

/// Centered differences of order `k <= 2` with one-sided ends.
fn finite_difference(v: &[f64], k: usize, h: f64) -> Vec<f64> {
    let n = v.len();
    match k {
        0 => v.to_vec(),
        1 => (0..n)
            .map(|i| {
                let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
                (v[b] - v[a]) / ((b - a) as f64 * h)
            })
            .collect(),
        _ => (0..n)
            .map(|i| {
                let c = i.clamp(1, n - 2);
                (v[c + 1] - 2.0 * v[c] + v[c - 1]) / (h * h)
            })
            .collect(),
    }
}

impl Parabolic {
    /// Solves `(I - theta L) u = rhs` for the tridiagonal flux-form operator `L`.
    fn solve(&self, h: f64, theta: f64, rhs: &[f64]) -> Vec<f64> {
        let n = rhs.len();
        let inv = theta / (h * h);
        let mut c_prime = vec![0.0; n];
        let mut d_prime = vec![0.0; n];
        for i in 0..n {
            let lo = self.a_half[i] * inv;
            let up = self.a_half[i + 1] * inv;
            let diag = 1.0 + lo + up;
            let denom = if i == 0 { diag } else { diag + lo * c_prime[i - 1] };
            c_prime[i] = -up / denom;
            d_prime[i] = (rhs[i] + if i == 0 { 0.0 } else { lo * d_prime[i - 1] }) / denom;
        }
        let mut out = vec![0.0; n];
        out[n - 1] = d_prime[n - 1];
        for i in (0..n - 1).rev() {
            out[i] = d_prime[i] - c_prime[i] * out[i + 1];
        }
        out
    }

    /// `L u = d_x(a d_x u)` in flux form.
    fn operator(&self, h: f64, u: &[f64]) -> Vec<f64> {
        let n = u.len();
        (0..n)
            .map(|i| {
                let right = if i + 1 < n { self.a_half[i + 1] * (u[i + 1] - u[i]) } else { 0.0 };
                let left = if i > 0 { self.a_half[i] * (u[i] - u[i - 1]) } else { 0.0 };
                (right - left) / (h * h)
            })
            .collect()
    }

    fn evolve(&self, grid: &Grid, mut u: Vec<f64>, t: f64, fresh: bool) -> Result<Vec<f64>> {
        let h = grid.spacing();
        let steps = ((t / self.dt).ceil() as usize).max(16);
        let dt = t / steps as f64;
        let start_max = u.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let blown = |u: &[f64]| u.iter().any(|v| !v.is_finite() || v.abs() > 1e6 * start_max);
        match self.stepper {
            Stepper::ExplicitEuler => {
                for _ in 0..steps {
                    let lu = self.operator(h, &u);
                    for (a, b) in u.iter_mut().zip(lu) {
                        *a += dt * b;
                    }
                    if blown(&u) {
                        return Err(Error::Numerical(format!(
                            "explicit stepping blew up (dt = {dt}, stability needs dt <= {})",
                            h * h / (2.0 * self.a_max)
                        )));
                    }
                }
            }
            Stepper::CrankNicolson => {
                let mut done = 0;
                if fresh {
                    for _ in 0..4 {
                        u = self.solve(h, 0.5 * dt, &u);
                    }
                    done = 2;
                }
                for _ in done..steps {
                    let lu = self.operator(h, &u);
                    let rhs: Vec<f64> = u.iter().zip(lu).map(|(a, b)| a + 0.5 * dt * b).collect();
                    u = self.solve(h, 0.5 * dt, &rhs);
                }
                if blown(&u) {
                    return Err(Error::Numerical("Crank-Nicolson produced non-finite values".into()));
                }
            }
        }
        Ok(u)
    }
}

/// Max over `columns` of `sup |Q_t(., y) - P_t(., y)| / sup |P_t(., y)|`.
pub fn kernel_discrepancy(q: &Semigroup, oracle: &Semigroup, t: f64, columns: &[usize]) -> Result<f64> {
    if q.grid() != oracle.grid() {
        return Err(Error::domain("kernels live on different grids"));
    }
    let mut worst = 0.0f64;
    for &j in columns {
        let a = q.kernel_column(t, j)?;
        let b = oracle.kernel_column(t, j)?;
        let peak = b.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let err = a.values().iter().zip(b.values()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        worst = worst.max(err / peak);
    }
    Ok(worst)
}

/// Sample design for [`check_semigroup_axioms`].
#[derive(Clone, Debug)]
pub struct AxiomSample {
    /// `(s, t)` with `0 < s < t` for the composition law.
    pub pairs: Vec<(f64, f64)>,
    /// Base nodes `y` whose kernel columns are examined.
    pub columns: Vec<usize>,
    /// Times at which conservativity is measured.
    pub small_times: Vec<f64>,
    /// Times at which the upper and time-derivative bounds are measured.
    pub bound_times: Vec<f64>,
    pub window: Window,
}

impl AxiomSample {
    /// Columns at the origin and at `+-L/4` along the first axis; dyadic times.
    pub fn standard(grid: &Grid) -> Self {
        let o = grid.origin();
        let q = grid.points_per_axis() / 8;
        let stride = grid.stride(0);
        AxiomSample {
            pairs: vec![(0.1, 0.2)],
            columns: vec![o, o - q * stride, o + q * stride],
            small_times: vec![0.25, 0.125, 0.0625],
            bound_times: vec![1.0, 0.5, 0.25, 0.125, 0.0625],
            window: Window::interior(0.5 * grid.half_width()),
        }
    }
}

#[derive(Clone, Debug)]
pub struct AxiomReport {
    /// Max over pairs and columns of `sup |Q_{t-s} Q_s(., y) - Q_t(., y)| / sup |Q_t(., y)|`.
    pub composition: f64,
    /// Max over small times of `sup |Q_t 1 - 1|` in the window, per time.
    pub conservativity: Vec<(f64, f64)>,
    pub c1: f64,
    pub c2: f64,
    /// Max `|Q_t(x, y) - Q_t(y, x)|` over column pairs, relative to the column maximum.
    pub symmetry: f64,
}

impl AxiomReport {
    pub fn max_conservativity(&self) -> f64 {
        self.conservativity.iter().map(|c| c.1).fold(0.0, f64::max)
    }
}

/// Measures residuals of axioms (i)-(iv) on a sample.
pub fn check_semigroup_axioms(q: &Semigroup, sample: &AxiomSample) -> Result<AxiomReport> {
    let grid = q.grid();
    let window = sample.window;
    let inside: Vec<usize> = (0..grid.len()).filter(|&i| window.contains(grid, i)).collect();
    let sup = |v: &[f64]| inside.iter().fold(0.0f64, |m, &i| m.max(v[i].abs()));

    let mut composition = 0.0f64;
    for &(s, t) in &sample.pairs {
        if !(0.0 < s && s < t) {
            return Err(Error::precondition(format!("composition needs 0 < s < t, got s = {s}, t = {t}")));
        }
        for &j in &sample.columns {
            let direct = q.kernel_column(t, j)?;
            let composed = q.apply(t - s, &q.kernel_column(s, j)?)?;
            let diff = composed.sub(&direct)?;
            composition = composition.max(sup(diff.values()) / sup(direct.values()));
        }
    }

    let one = GridField::constant(grid, 1.0);
    let mut conservativity = Vec::new();
    for &t in &sample.small_times {
        let qt = q.apply(t, &one)?;
        conservativity.push((t, inside.iter().fold(0.0f64, |m, &i| m.max((qt.values()[i] - 1.0).abs()))));
    }

    let g = q.profile();
    let (mut c1, mut c2) = (0.0f64, 0.0f64);
    for &t in &sample.bound_times {
        let dt = t / 100.0;
        for &j in &sample.columns {
            let col = q.kernel_column(t, j)?;
            let plus = q.kernel_column(t + dt, j)?;
            let minus = q.kernel_column(t - dt, j)?;
            let y = grid.point(j);
            let gt0 = g.dilated(t, &vec![0.0; grid.dim()])?;
            for &i in &inside {
                let x = grid.point(i);
                let diff: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
                let gt = g.dilated(t, &diff)?;
                if gt < 1e-10 * gt0 {
                    continue;
                }
                c1 = c1.max(col.values()[i].abs() / gt);
                let dq = (plus.values()[i] - minus.values()[i]) / (2.0 * dt);
                c2 = c2.max(dq.abs() * t / gt);
            }
        }
    }

    let mut symmetry = 0.0f64;
    if let Some(&t) = sample.bound_times.first() {
        let cols: Vec<GridField> = sample.columns.iter().map(|&j| q.kernel_column(t, j)).collect::<Result<_>>()?;
        let scale = cols.iter().map(|c| sup(c.values())).fold(0.0, f64::max);
        for (a, &ja) in sample.columns.iter().enumerate() {
            for (b, &jb) in sample.columns.iter().enumerate() {
                let r = (cols[a].values()[jb] - cols[b].values()[ja]).abs() / scale;
                symmetry = symmetry.max(r);
            }
        }
    }

    Ok(AxiomReport { composition, conservativity, c1, c2, symmetry })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn heat1() -> Semigroup {
        let g = Grid::new(1, 8.0, 1024, Scaling::isotropic(1)).unwrap();
        Semigroup::heat(&g).unwrap()
    }

    #[test]
    fn heat_value_at_unit_time() {
        let q = heat1();
        let v = q.kernel_point(1.0, &[0.3], &[0.3], &[0]).unwrap();
        assert!((v - 0.28209479177387814).abs() < 1e-12);
    }

    #[test]
    fn hermite_derivatives_match_differences() {
        for k in 0..4 {
            for &u in &[-1.3, 0.0, 0.4, 2.0] {
                let e = 1e-4;
                let fd = (heat_kernel_1d(0.3, u + e, k) - heat_kernel_1d(0.3, u - e, k)) / (2.0 * e);
                assert!((fd - heat_kernel_1d(0.3, u, k + 1)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn biharmonic_factor_has_unit_mass_and_scales() {
        let step = 0.01;
        let mass: f64 = (-3000..=3000).map(|j| biharmonic_kernel_1d(1.0, j as f64 * step, 0)).sum::<f64>() * step;
        assert!((mass - 1.0).abs() < 1e-8);
        let a = biharmonic_kernel_1d(16.0, 2.0, 0);
        let b = biharmonic_kernel_1d(1.0, 1.0, 0) / 2.0;
        assert!((a - b).abs() < 1e-12);
        let e = 1e-4;
        let fd = (biharmonic_kernel_1d(0.5, 0.7 + e, 1) - biharmonic_kernel_1d(0.5, 0.7 - e, 1)) / (2.0 * e);
        assert!((fd - biharmonic_kernel_1d(0.5, 0.7, 2)).abs() < 1e-6);
    }

    #[test]
    fn heat_conserves_and_composes() {
        let q = heat1();
        let r = check_semigroup_axioms(&q, &AxiomSample::standard(q.grid())).unwrap();
        assert!(r.composition < 1e-3);
        assert!(r.max_conservativity() < 1e-6);
        assert!(r.c1.is_finite() && r.c2.is_finite());
        assert!(r.symmetry < 1e-14);
    }

    #[test]
    fn degenerate_pair_is_rejected() {
        let q = heat1();
        let mut s = AxiomSample::standard(q.grid());
        s.pairs = vec![(0.2, 0.2)];
        assert!(matches!(check_semigroup_axioms(&q, &s), Err(Error::Precondition(_))));
    }

    #[test]
    fn heat_rejects_anisotropic_scaling() {
        let g = Grid::new(2, 8.0, 16, Scaling::new(vec![2.0, 1.0], 4.0).unwrap()).unwrap();
        assert!(Semigroup::heat(&g).is_err());
        let g1 = Grid::new(1, 8.0, 16, Scaling::isotropic(1)).unwrap();
        assert!(Semigroup::anisotropic(&g1).is_err());
    }

    #[test]
    fn monomial_moments_of_heat() {
        let q = heat1();
        let t = 0.3;
        let m0 = q.apply_general(t, &[0], &[0], None).unwrap().values()[0];
        let m1 = q.apply_general(t, &[0], &[1], None).unwrap().values()[0];
        let m2 = q.apply_general(t, &[0], &[2], None).unwrap().values()[0];
        assert!((m0 - 1.0).abs() < 1e-12);
        assert!(m1.abs() < 1e-12);
        assert!((m2 - 2.0 * t).abs() < 1e-12);
    }

    #[test]
    fn parabolic_constant_coefficient_matches_heat() {
        let grid = Grid::new(1, 8.0, 1024, Scaling::isotropic(1)).unwrap();
        let p = Semigroup::parabolic(Coefficient::constant(1.0), &grid, 5e-4, Stepper::CrankNicolson).unwrap();
        let heat = Semigroup::heat(&grid).unwrap();
        let err = kernel_discrepancy(&p, &heat, 0.5, &[grid.origin()]).unwrap();
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn parabolic_rejects_degenerate_coefficient() {
        let grid = Grid::new(1, 8.0, 64, Scaling::isotropic(1)).unwrap();
        let e = Semigroup::parabolic(Coefficient::sinusoidal(1.5), &grid, 1e-3, Stepper::CrankNicolson).unwrap_err();
        assert!(matches!(e, Error::Model(_)));
    }

    #[test]
    fn explicit_stepper_blows_up_beyond_stability() {
        let grid = Grid::new(1, 8.0, 256, Scaling::isotropic(1)).unwrap();
        let p = Semigroup::parabolic(Coefficient::constant(1.0), &grid, 1e-2, Stepper::ExplicitEuler).unwrap();
        let e = p.kernel_column(1.0, grid.origin()).unwrap_err();
        assert!(matches!(e, Error::Numerical(_)));
    }

    #[test]
    fn small_time_recovers_smooth_input() {
        let grid = Grid::new(1, 8.0, 1024, Scaling::isotropic(1)).unwrap();
        let p = Semigroup::parabolic(Coefficient::sinusoidal(0.3), &grid, 5e-4, Stepper::CrankNicolson).unwrap();
        let f = GridField::from_fn(&grid, |x| (-x[0] * x[0] / 4.0).exp());
        let qf = p.apply(1e-3, &f).unwrap();
        let w = Window::interior(4.0);
        let err = (0..grid.len())
            .filter(|&i| w.contains(&grid, i))
            .fold(0.0f64, |m, i| m.max((qf.values()[i] - f.values()[i]).abs()));
        assert!(err < 1e-3);
    }
}
