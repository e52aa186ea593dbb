//! Anisotropic scaling, profiles `G`, and weights with their moderators.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Per-axis exponents `s_i >= 1` together with the order `ell`.
#[derive(Clone, Debug, PartialEq)]
pub struct Scaling {
    s: Vec<f64>,
    ell: f64,
    homogeneity: f64,
}

impl Scaling {
    pub fn new(s: Vec<f64>, ell: f64) -> Result<Self> {
        if s.is_empty() {
            return Err(Error::domain("scaling needs at least one axis"));
        }
        if s.iter().any(|&si| !(si >= 1.0) || !si.is_finite()) {
            return Err(Error::domain(format!("scaling components must be >= 1, got {s:?}")));
        }
        if !(ell > 0.0) || !ell.is_finite() {
            return Err(Error::domain(format!("order ell must be positive, got {ell}")));
        }
        let homogeneity = s.iter().sum();
        Ok(Scaling { s, ell, homogeneity })
    }

    /// The parabolic heat scaling `(1,...,1)` with `ell = 2`.
    pub fn isotropic(d: usize) -> Self {
        Scaling::new(vec![1.0; d], 2.0).expect("isotropic scaling is valid")
    }

    pub fn dim(&self) -> usize {
        self.s.len()
    }

    pub fn s(&self) -> &[f64] {
        &self.s
    }

    pub fn ell(&self) -> f64 {
        self.ell
    }

    /// `|s| = sum s_i`.
    pub fn homogeneity(&self) -> f64 {
        self.homogeneity
    }

    pub fn is_isotropic(&self) -> bool {
        self.s.iter().all(|&si| si == 1.0)
    }

    /// Weighted length `|k|_s = sum s_i k_i` of a multiindex.
    pub fn weighted_length(&self, k: &[usize]) -> f64 {
        self.s.iter().zip(k).map(|(si, &ki)| si * ki as f64).sum()
    }

    /// The dilation `t^{s/ell} x`.
    pub fn dilate(&self, t: f64, x: &[f64]) -> Vec<f64> {
        self.s
            .iter()
            .zip(x)
            .map(|(si, xi)| t.powf(si / self.ell) * xi)
            .collect()
    }

    /// True when `value` lies in `N[s]` up to `1e-9`.
    pub fn in_weighted_lengths(&self, value: f64) -> bool {
        if value < -1e-9 {
            return false;
        }
        monomial_index_set(self, value + 1e-6)
            .values
            .iter()
            .any(|v| (v - value).abs() < 1e-9)
    }
}

/// `||x||_s = sum |x_i|^{1/s_i}`.
pub fn anisotropic_norm(x: &[f64], scaling: &Scaling) -> Result<f64> {
    if x.len() != scaling.dim() {
        return Err(Error::Dimension { expected: scaling.dim(), got: x.len() });
    }
    Ok(norm_unchecked(x, scaling.s()))
}

pub(crate) fn norm_unchecked(x: &[f64], s: &[f64]) -> f64 {
    x.iter()
        .zip(s)
        .map(|(xi, si)| if *si == 1.0 { xi.abs() } else { xi.abs().powf(1.0 / si) })
        .sum()
}

/// Multiindices `k` with `|k|_s < cutoff`, plus the sorted value set `N[s] ∩ [0, cutoff)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MonomialSet {
    pub indices: Vec<Vec<usize>>,
    pub values: Vec<f64>,
}

pub fn monomial_index_set(scaling: &Scaling, cutoff: f64) -> MonomialSet {
    let d = scaling.dim();
    let mut indices = Vec::new();
    if cutoff > 0.0 {
        let mut k = vec![0usize; d];
        collect_indices(scaling, cutoff, 0, &mut k, &mut indices);
    }
    let mut values: Vec<f64> = indices.iter().map(|k| scaling.weighted_length(k)).collect();
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    values.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    MonomialSet { indices, values }
}

fn collect_indices(scaling: &Scaling, cutoff: f64, axis: usize, k: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if axis == k.len() {
        if scaling.weighted_length(k) < cutoff {
            out.push(k.clone());
        }
        return;
    }
    let bound = (cutoff / scaling.s()[axis]).floor() as usize;
    for ki in 0..=bound {
        k[axis] = ki;
        collect_indices(scaling, cutoff, axis + 1, k, out);
    }
    k[axis] = 0;
}

pub fn factorial(k: &[usize]) -> f64 {
    k.iter().map(|&ki| (1..=ki).map(|j| j as f64).product::<f64>()).product()
}

/// Multi-binomial `C(k, l)`; zero unless `l <= k` componentwise.
pub fn binomial(k: &[usize], l: &[usize]) -> f64 {
    if !leq(l, k) {
        return 0.0;
    }
    k.iter()
        .zip(l)
        .map(|(&ki, &li)| {
            let mut c = 1.0;
            for j in 0..li {
                c = c * (ki - j) as f64 / (j + 1) as f64;
            }
            c
        })
        .product()
}

pub fn leq(l: &[usize], k: &[usize]) -> bool {
    l.iter().zip(k).all(|(a, b)| a <= b)
}

/// `prod x_i^{k_i}`.
pub fn monomial(x: &[f64], k: &[usize]) -> f64 {
    x.iter().zip(k).map(|(xi, &ki)| xi.powi(ki as i32)).product()
}

type PointFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A weight `w` with its moderator `w*`, both in closed form.
#[derive(Clone)]
pub struct Weight {
    label: String,
    eval: PointFn,
    star: PointFn,
    flat: bool,
}

impl fmt::Debug for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Weight({})", self.label)
    }
}

impl Weight {
    pub fn flat() -> Self {
        Weight { label: "flat".into(), eval: Arc::new(|_| 1.0), star: Arc::new(|_| 1.0), flat: true }
    }

    /// `w = exp(-a ||x||_s)`, `w* = exp(a ||x||_s)`.
    pub fn exponential(a: f64, scaling: &Scaling) -> Result<Self> {
        if !(a >= 0.0) {
            return Err(Error::domain(format!("exponential weight needs a >= 0, got {a}")));
        }
        let s1 = scaling.s().to_vec();
        let s2 = s1.clone();
        Ok(Weight {
            label: format!("exp-{a}"),
            eval: Arc::new(move |x| (-a * norm_unchecked(x, &s1)).exp()),
            star: Arc::new(move |x| (a * norm_unchecked(x, &s2)).exp()),
            flat: a == 0.0,
        })
    }

    pub fn custom(
        label: impl Into<String>,
        eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        star: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Weight { label: label.into(), eval: Arc::new(eval), star: Arc::new(star), flat: false }
    }

    /// Pointwise product `w1 w2` with moderator `w1* w2*`.
    pub fn product(&self, other: &Weight) -> Weight {
        if self.flat {
            return other.clone();
        }
        if other.flat {
            return self.clone();
        }
        let (e1, e2, s1, s2) = (self.eval.clone(), other.eval.clone(), self.star.clone(), other.star.clone());
        Weight {
            label: format!("{}*{}", self.label, other.label),
            eval: Arc::new(move |x| e1(x) * e2(x)),
            star: Arc::new(move |x| s1(x) * s2(x)),
            flat: false,
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn is_flat(&self) -> bool {
        self.flat
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }

    pub fn star(&self, x: &[f64]) -> f64 {
        (self.star)(x)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ProfileKind {
    /// `exp(-c |x|^2)`.
    Gaussian,
    /// `exp(-c sum |x_i|^{ell/(ell - s_i)})`.
    Anisotropic,
}

/// The profile `G` bounding a semigroup kernel.
#[derive(Clone, Debug)]
pub struct GProfile {
    kind: ProfileKind,
    scaling: Scaling,
    decay_constant: f64,
}

impl GProfile {
    pub fn gaussian(scaling: Scaling, c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::domain(format!("decay constant must be positive, got {c}")));
        }
        Ok(GProfile { kind: ProfileKind::Gaussian, scaling, decay_constant: c })
    }

    pub fn anisotropic(scaling: Scaling, c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::domain(format!("decay constant must be positive, got {c}")));
        }
        let smax = scaling.s().iter().cloned().fold(f64::MIN, f64::max);
        if !(scaling.ell() > smax) {
            return Err(Error::domain(format!(
                "anisotropic profile needs ell > max s_i, got ell = {} and max s_i = {smax}",
                scaling.ell()
            )));
        }
        Ok(GProfile { kind: ProfileKind::Anisotropic, scaling, decay_constant: c })
    }

    pub fn kind(&self) -> ProfileKind {
        self.kind
    }

    pub fn scaling(&self) -> &Scaling {
        &self.scaling
    }

    pub fn decay_constant(&self) -> f64 {
        self.decay_constant
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let c = self.decay_constant;
        match self.kind {
            ProfileKind::Gaussian => (-c * x.iter().map(|v| v * v).sum::<f64>()).exp(),
            ProfileKind::Anisotropic => {
                let ell = self.scaling.ell();
                let e: f64 = x
                    .iter()
                    .zip(self.scaling.s())
                    .map(|(xi, si)| xi.abs().powf(ell / (ell - si)))
                    .sum();
                (-c * e).exp()
            }
        }
    }

    /// One-dimensional factor along `axis`; `eval` is the product of these.
    pub(crate) fn axis_factor(&self, axis: usize, u: f64) -> f64 {
        let c = self.decay_constant;
        match self.kind {
            ProfileKind::Gaussian => (-c * u * u).exp(),
            ProfileKind::Anisotropic => {
                let ell = self.scaling.ell();
                let si = self.scaling.s()[axis];
                (-c * u.abs().powf(ell / (ell - si))).exp()
            }
        }
    }

    /// `G_t(x) = t^{-|s|/ell} G(t^{-s/ell} x)`.
    pub fn dilated(&self, t: f64, x: &[f64]) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::domain(format!("dilation time must be positive, got {t}")));
        }
        if x.len() != self.scaling.dim() {
            return Err(Error::Dimension { expected: self.scaling.dim(), got: x.len() });
        }
        let y = self.scaling.dilate(1.0 / t, x);
        Ok(t.powf(-self.scaling.homogeneity() / self.scaling.ell()) * self.eval(&y))
    }
}

/// Free-function form of [`GProfile::dilated`].
pub fn dilated_profile(g: &GProfile, t: f64, x: &[f64]) -> Result<f64> {
    g.dilated(t, x)
}

#[derive(Clone, Debug)]
pub struct WeightReport {
    /// `max ||x||_s^n w*(t^{s/ell} x) G(x)` for `n = 0..=n_max`.
    pub max_by_n: Vec<f64>,
    /// `max (w(x+y) - w*(x) w(y))`; nonpositive for a moderate weight.
    pub moderateness_residual: f64,
    pub cap: f64,
    pub passed: bool,
}

/// Samples the G-controlled integrand and the moderateness inequality.
pub fn check_weight_controlled(
    w: &Weight,
    g: &GProfile,
    samples: &[(f64, Vec<f64>)],
    pairs: &[(Vec<f64>, Vec<f64>)],
    n_max: usize,
    cap: f64,
) -> Result<WeightReport> {
    let scaling = g.scaling();
    let mut max_by_n = vec![0.0f64; n_max + 1];
    for (t, x) in samples {
        if !(*t > 0.0) {
            return Err(Error::domain(format!("sample time must be positive, got {t}")));
        }
        let nx = anisotropic_norm(x, scaling)?;
        let base = w.star(&scaling.dilate(*t, x)) * g.eval(x);
        for (n, m) in max_by_n.iter_mut().enumerate() {
            let v = nx.powi(n as i32) * base;
            if v > *m || v.is_nan() {
                *m = v;
            }
        }
    }
    let mut moderateness_residual = f64::NEG_INFINITY;
    for (x, y) in pairs {
        if x.len() != y.len() {
            return Err(Error::Dimension { expected: x.len(), got: y.len() });
        }
        let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a + b).collect();
        let r = w.eval(&xy) - w.star(x) * w.eval(y);
        moderateness_residual = moderateness_residual.max(r);
    }
    let finite = max_by_n.iter().all(|v| v.is_finite() && *v <= cap);
    let passed = finite && moderateness_residual <= 1e-12;
    Ok(WeightReport { max_by_n, moderateness_residual, cap, passed })
}
