//! Regularizing kernels `K_t = sum_j b_j(x) d^j Q_t` and the operator `K = int_0^1 K_t dt`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::besov::{fit_rate, DyadicTimes, Jet, RateReport};
use crate::error::{Error, Result};
use crate::geometry::{binomial, factorial, monomial, monomial_index_set, norm_unchecked};
use crate::grid::{Grid, GridField, Measure};
use crate::model::{lower_multi, Pairing};
use crate::semigroup::Semigroup;

/// Coefficient `b_j(x)` of one derivative term.
#[derive(Clone, Debug)]
pub enum KernelCoef {
    Const(f64),
    /// `b` and its derivatives on the grid.
    Smooth(Jet),
}

#[derive(Clone, Debug)]
pub struct RegularizingKernel {
    q: Semigroup,
    terms: Vec<(Vec<usize>, KernelCoef)>,
    beta_bar: f64,
    delta: f64,
    ck: Option<f64>,
}

/// `K_t(x, y) = sum_j b_j(x) d_x^j Q_t(x, y)` with `|j|_s <= ell1`; regularizing order `ell - ell1`.
pub fn kernel_from_semigroup(q: &Semigroup, terms: Vec<(Vec<usize>, KernelCoef)>, ell1: f64) -> Result<RegularizingKernel> {
    let sc = q.scaling().clone();
    if !(ell1 >= 0.0 && ell1 < sc.ell()) {
        return Err(Error::domain(format!("ell1 must lie in [0, {}), got {ell1}", sc.ell())));
    }
    if terms.is_empty() {
        return Err(Error::domain("a kernel needs at least one term"));
    }
    let mut delta = f64::INFINITY;
    for (j, b) in &terms {
        if j.len() != sc.dim() {
            return Err(Error::Dimension { expected: sc.dim(), got: j.len() });
        }
        if sc.weighted_length(j) > ell1 + 1e-12 {
            return Err(Error::domain(format!("term d^{j:?} exceeds ell1 = {ell1}")));
        }
        if let KernelCoef::Smooth(jet) = b {
            // Derivatives of K need derivatives of b; the jet bounds the usable order.
            let top = jet.fields.keys().map(|k| sc.weighted_length(k)).fold(0.0, f64::max);
            delta = delta.min(top + 1.0);
            if jet.get(&vec![0; sc.dim()])?.grid() != q.grid() {
                return Err(Error::structural("coefficient lives on a different grid"));
            }
        }
    }
    if !q.homogeneous() {
        // Tabulated kernels differentiate by centred differences up to order 2.
        let top = terms.iter().map(|(j, _)| sc.weighted_length(j)).fold(0.0, f64::max);
        delta = delta.min(3.0 - top);
    }
    Ok(RegularizingKernel { q: q.clone(), terms, beta_bar: sc.ell() - ell1, delta, ck: None })
}

impl RegularizingKernel {
    /// `K_t = -Q_t`.
    pub fn negative_semigroup(q: &Semigroup) -> Result<Self> {
        kernel_from_semigroup(q, vec![(vec![0; q.grid().dim()], KernelCoef::Const(-1.0))], 0.0)
    }

    pub fn semigroup(&self) -> &Semigroup {
        &self.q
    }

    pub fn grid(&self) -> &Grid {
        self.q.grid()
    }

    pub fn beta_bar(&self) -> f64 {
        self.beta_bar
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn ck(&self) -> Option<f64> {
        self.ck
    }

    fn constant_terms(&self) -> Option<Vec<(Vec<usize>, f64)>> {
        self.terms
            .iter()
            .map(|(j, b)| match b {
                KernelCoef::Const(c) => Some((j.clone(), *c)),
                KernelCoef::Smooth(_) => None,
            })
            .collect()
    }

    /// Homogeneous `Q` with constant coefficients.
    pub fn homogeneous(&self) -> bool {
        self.q.homogeneous() && self.constant_terms().is_some()
    }

    /// `d_x^k K_t(x, y)` at arbitrary points; homogeneous kernels only.
    pub fn kernel_point(&self, t: f64, x: &[f64], y: &[f64], k: &[usize]) -> Result<f64> {
        let terms = self
            .constant_terms()
            .filter(|_| self.q.homogeneous())
            .ok_or_else(|| Error::domain("pointwise kernel values need a homogeneous kernel"))?;
        let mut v = 0.0;
        for (j, c) in terms {
            let kj: Vec<usize> = k.iter().zip(&j).map(|(a, b)| a + b).collect();
            v += c * self.q.kernel_point(t, x, y, &kj)?;
        }
        Ok(v)
    }

    /// `d^k K_t f`, computed as `d^k K_{t/2}` applied to `Q_{t/2} f`.
    pub fn apply_t(&self, t: f64, k: &[usize], f: &GridField) -> Result<GridField> {
        let half = self.q.apply(t / 2.0, f)?;
        self.general(t / 2.0, k, &vec![0; k.len()], Some(&half))
    }

    /// Empirical `C_K`: max of `|d^k K_t(x, y)| / (t^{(beta_bar - |k|)/ell - 1} G_t(x - y))`
    /// over sampled times and offsets where `G_t >= 1e-10 G_t(0)`.
    pub fn measure_ck(&mut self, ks: &[Vec<usize>], times: &[f64], offsets_per_axis: usize) -> Result<f64> {
        let sc = self.q.scaling().clone();
        let g = self.q.profile().clone();
        let d = sc.dim();
        let origin = vec![0.0; d];
        let mut best = 0.0f64;
        for &t in times {
            let g0 = g.dilated(t, &origin)?;
            let reach: Vec<f64> = (0..d).map(|a| 6.0 * t.powf(sc.s()[a] / sc.ell()) + 1.0).collect();
            let mut idx = vec![0usize; d];
            loop {
                let u: Vec<f64> = (0..d)
                    .map(|a| -reach[a] + 2.0 * reach[a] * idx[a] as f64 / (offsets_per_axis - 1).max(1) as f64)
                    .collect();
                let gt = g.dilated(t, &u)?;
                if gt >= 1e-10 * g0 {
                    for k in ks {
                        let v = self.kernel_point(t, &u, &origin, k)?;
                        let scale = t.powf((self.beta_bar - sc.weighted_length(k)) / sc.ell() - 1.0) * gt;
                        best = best.max(v.abs() / scale);
                    }
                }
                let mut a = 0;
                while a < d {
                    idx[a] += 1;
                    if idx[a] < offsets_per_axis {
                        break;
                    }
                    idx[a] = 0;
                    a += 1;
                }
                if a == d {
                    break;
                }
            }
        }
        self.ck = Some(best);
        Ok(best)
    }
}

impl Pairing for RegularizingKernel {
    fn pairing_grid(&self) -> &Grid {
        self.q.grid()
    }

    /// `sum_j sum_{l <= k} C(k, l) d^l b_j(x) int d_x^{k - l + j} Q_t(x, z) (z - x)^m g(z) dz`.
    fn general(&self, t: f64, k: &[usize], m: &[usize], g: Option<&GridField>) -> Result<GridField> {
        let grid = self.q.grid();
        let mut out = GridField::zeros(grid);
        for (j, b) in &self.terms {
            match b {
                KernelCoef::Const(c) => {
                    let kj: Vec<usize> = k.iter().zip(j).map(|(a, b)| a + b).collect();
                    out.axpy(*c, &self.q.apply_general(t, &kj, m, g)?)?;
                }
                KernelCoef::Smooth(jet) => {
                    for l in lower_multi(k) {
                        let kl: Vec<usize> = k.iter().zip(&l).zip(j).map(|((a, b), c)| a - b + c).collect();
                        let part = self.q.apply_general(t, &kl, m, g)?.mul(jet.get(&l)?)?;
                        out.axpy(binomial(k, &l), &part)?;
                    }
                }
            }
        }
        Ok(out)
    }
}

const GL_NODES: [f64; 4] = [-0.861_136_311_594_052_6, -0.339_981_043_584_856_3, 0.339_981_043_584_856_3, 0.861_136_311_594_052_6];
const GL_WEIGHTS: [f64; 4] = [0.347_854_845_137_453_9, 0.652_145_154_862_546_1, 0.652_145_154_862_546_1, 0.347_854_845_137_453_9];

/// `int_0^1` of a field-valued integrand.
#[derive(Clone, Debug)]
pub struct TimeIntegral {
    pub values: Vec<GridField>,
    /// Per output: `(octave upper end, sup |octave contribution| on the central half)`, coarse to fine.
    pub octaves: Vec<Vec<(f64, f64)>>,
    /// Per output: sup of the tail added for `(0, t_min)`.
    pub tails: Vec<f64>,
}

/// Integrates over `[t_min, 1]` by 4-point Gauss-Legendre on each octave `[2^{-n-1}, 2^{-n}]`,
/// then closes `(0, t_min)` with a copy of the last octave, i.e. a bounded integrand halving per
/// octave. A fixed ratio keeps the result linear in the integrand.
///
/// Three consecutive growing octave contributions above `floor` raise a divergence error.
pub fn integrate_time(
    times: &DyadicTimes,
    outputs: usize,
    floor: f64,
    mut integrand: impl FnMut(f64) -> Result<Vec<GridField>>,
) -> Result<TimeIntegral> {
    let n_oct = times.n_max();
    if n_oct < 2 {
        return Err(Error::domain("time integration needs at least two octaves"));
    }
    let mut values: Vec<Option<GridField>> = vec![None; outputs];
    let mut octaves = vec![Vec::new(); outputs];
    let mut last: Vec<Option<GridField>> = vec![None; outputs];
    for n in 0..n_oct {
        let hi = 2f64.powi(-(n as i32));
        let lo = hi / 2.0;
        let mut oct: Vec<Option<GridField>> = vec![None; outputs];
        for (node, w) in GL_NODES.iter().zip(GL_WEIGHTS) {
            let t = lo + (hi - lo) * (node + 1.0) / 2.0;
            let vals = integrand(t)?;
            if vals.len() != outputs {
                return Err(Error::Dimension { expected: outputs, got: vals.len() });
            }
            for (o, v) in oct.iter_mut().zip(vals) {
                let wv = v.scale(w * (hi - lo) / 2.0);
                match o {
                    Some(acc) => acc.axpy(1.0, &wv)?,
                    None => *o = Some(wv),
                }
            }
        }
        for (i, o) in oct.into_iter().enumerate() {
            let o = o.expect("four nodes per octave");
            let mag = sup_interior(&o);
            octaves[i].push((hi, mag));
            check_growth(&octaves[i], i, floor)?;
            match &mut values[i] {
                Some(acc) => acc.axpy(1.0, &o)?,
                None => values[i] = Some(o.clone()),
            }
            last[i] = Some(o);
        }
    }
    let mut tails = Vec::with_capacity(outputs);
    let mut out = Vec::with_capacity(outputs);
    for i in 0..outputs {
        let mut v = values[i].take().expect("at least one octave");
        v.axpy(1.0, last[i].as_ref().expect("at least one octave"))?;
        tails.push(octaves[i].last().map_or(0.0, |o| o.1));
        out.push(v);
    }
    Ok(TimeIntegral { values: out, octaves, tails })
}

/// Sup over the nodes with every coordinate in `[-L/2, L/2]`, away from zero-padding artifacts.
fn sup_interior(f: &GridField) -> f64 {
    let g = f.grid();
    let half = g.half_width() / 2.0;
    f.values()
        .iter()
        .enumerate()
        .filter(|(i, _)| g.point(*i).iter().all(|x| x.abs() <= half))
        .fold(0.0, |m, (_, v)| m.max(v.abs()))
}

pub(crate) fn sup(f: &GridField) -> f64 {
    f.values().iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn check_growth(oct: &[(f64, f64)], output: usize, floor: f64) -> Result<()> {
    let n = oct.len();
    if n < 4 || oct[n - 1].1 <= floor {
        return Ok(());
    }
    let tail = &oct[n - 4..];
    if tail.windows(2).all(|w| w[1].1 > w[0].1 * (1.0 + 1e-9)) {
        return Err(Error::Divergence(format!(
            "time integral of output {output} grows toward t = 0 (octave at {:e}: {:e})",
            tail[3].0, tail[3].1
        )));
    }
    Ok(())
}

/// `d^k K f = int_0^1 d^k K_t f dt`.
pub fn apply_k(kernel: &RegularizingKernel, f: &GridField, times: &DyadicTimes, k: &[usize]) -> Result<GridField> {
    check_derivative(kernel, k)?;
    if f.is_zero() {
        return Ok(GridField::zeros(f.grid()));
    }
    let r = integrate_time(times, 1, 1e-12 * sup(f), |t| Ok(vec![kernel.apply_t(t, k, f)?]))?;
    Ok(r.values.into_iter().next().expect("one output"))
}

/// `K f` and its derivatives `d^k K f` for `|k|_s < order`, as a jet.
pub fn apply_k_jet(kernel: &RegularizingKernel, f: &GridField, times: &DyadicTimes, order: f64) -> Result<Jet> {
    let set = monomial_index_set(kernel.q.scaling(), order);
    for k in &set.indices {
        check_derivative(kernel, k)?;
    }
    let r = integrate_time(times, set.indices.len(), 1e-12 * sup(f), |t| {
        let half = kernel.q.apply(t / 2.0, f)?;
        set.indices.iter().map(|k| kernel.general(t / 2.0, k, &vec![0; k.len()], Some(&half))).collect()
    })?;
    let mut jet = Jet::new();
    for (k, v) in set.indices.into_iter().zip(r.values) {
        jet.insert(k, v);
    }
    Ok(jet)
}

fn check_derivative(kernel: &RegularizingKernel, k: &[usize]) -> Result<()> {
    let len = kernel.q.scaling().weighted_length(k);
    if len >= kernel.delta {
        return Err(Error::domain(format!("derivative order {len} is not below delta = {}", kernel.delta)));
    }
    Ok(())
}

/// One sample `(t, x, y, h)` for the Holder check.
#[derive(Clone, Debug)]
pub struct HolderSample {
    pub t: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub h: Vec<f64>,
}

/// Random samples with `||h||_s <= t^{1/ell}` and `G_t(x - y)` within ten decades of its peak.
pub fn holder_samples(kernel: &RegularizingKernel, n: usize, seed: u64) -> Result<Vec<HolderSample>> {
    let sc = kernel.q.scaling().clone();
    let g = kernel.q.profile().clone();
    let d = sc.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let t = 2f64.powf(-rng.gen_range(0.0..8.0));
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..d).map(|a| x[a] - rng.gen_range(-4.0..4.0) * t.powf(sc.s()[a] / sc.ell())).collect();
        let dir: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let frac = rng.gen_range(0.0f64..1.0);
        // ||lambda^{s} . dir||_s = lambda ||dir||_s, so this scales h onto the ball of radius frac t^{1/ell}.
        let nd = norm_unchecked(&dir, sc.s());
        if nd == 0.0 {
            continue;
        }
        let lam = frac * t.powf(1.0 / sc.ell()) / nd;
        let h: Vec<f64> = (0..d).map(|a| lam.powf(sc.s()[a]) * dir[a]).collect();
        let u: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        if g.dilated(t, &u)? >= 1e-10 * g.dilated(t, &vec![0.0; d])? {
            out.push(HolderSample { t, x, y, h });
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct KernelHolderReport {
    pub eps: f64,
    /// Largest normalized Taylor remainder over accepted samples.
    pub max_ratio: f64,
    pub accepted: usize,
    /// Samples with `||h||_s > t^{1/ell}`.
    pub rejected: usize,
}

/// Taylor remainder of `d^k K_t(., y)` at order `eps`, normalized by `||h||^{eps - |k|} t^{(beta_bar - eps)/ell - 1} G_t(x - y)`.
pub fn check_kernel_holder(
    kernel: &RegularizingKernel,
    k: &[usize],
    eps: f64,
    samples: &[HolderSample],
) -> Result<KernelHolderReport> {
    let sc = kernel.q.scaling().clone();
    if !(eps > 0.0 && eps <= kernel.delta) {
        return Err(Error::domain(format!("eps must lie in (0, {}], got {eps}", kernel.delta)));
    }
    let klen = sc.weighted_length(k);
    if klen >= eps {
        return Err(Error::domain(format!("need |k|_s < eps, got {klen} >= {eps}")));
    }
    let orders = monomial_index_set(&sc, eps - klen);
    let mut rep = KernelHolderReport { eps, max_ratio: 0.0, accepted: 0, rejected: 0 };
    for s in samples {
        let hn = norm_unchecked(&s.h, sc.s());
        if hn > s.t.powf(1.0 / sc.ell()) * (1.0 + 1e-12) {
            rep.rejected += 1;
            continue;
        }
        rep.accepted += 1;
        if hn == 0.0 {
            continue;
        }
        let xh: Vec<f64> = s.x.iter().zip(&s.h).map(|(a, b)| a + b).collect();
        let mut rem = kernel.kernel_point(s.t, &xh, &s.y, k)?;
        for l in &orders.indices {
            let kl: Vec<usize> = k.iter().zip(l).map(|(a, b)| a + b).collect();
            rem -= monomial(&s.h, l) / factorial(l) * kernel.kernel_point(s.t, &s.x, &s.y, &kl)?;
        }
        let u: Vec<f64> = s.x.iter().zip(&s.y).map(|(a, b)| a - b).collect();
        let scale = hn.powf(eps - klen)
            * s.t.powf((kernel.beta_bar - eps) / sc.ell() - 1.0)
            * kernel.q.profile().dilated(s.t, &u)?;
        rep.max_ratio = rep.max_ratio.max(rem.abs() / scale);
    }
    Ok(rep)
}

#[derive(Clone, Debug)]
pub struct CommuteReport {
    /// `max |int Q_{t-s}(x, z) K_s(z, y) dz - K_t(x, y)| / max |K_t|` over sampled columns.
    pub identity_residual: f64,
    /// `||Q_t K f||` against `t`; flat for any input in a positive-regularity space.
    pub norm_rate: RateReport,
    /// `||Q_t K f - Q_{2t} K f||` against `t` (order 1), the quantity decaying like `t^{(alpha + beta_bar)/ell}`.
    pub increment_rate: RateReport,
}

/// The opposite convolution identity on kernel columns and the decay of the dyadic increments of `Q_t K f`.
pub fn check_kq_commute(
    kernel: &RegularizingKernel,
    f: &GridField,
    p: f64,
    measure: &Measure,
    times: &DyadicTimes,
) -> Result<CommuteReport> {
    if !kernel.homogeneous() {
        return Err(Error::domain("the opposite convolution check applies to homogeneous kernels only"));
    }
    let q = &kernel.q;
    let grid = q.grid();
    let zero = vec![0; grid.dim()];
    let mut identity_residual = 0.0f64;
    for &(s, t) in &[(0.1, 0.2), (0.05, 0.25), (0.25, 1.0)] {
        let delta = GridField::delta(grid, grid.origin());
        let ks = kernel.general(s, &zero, &zero, Some(&delta))?;
        let lhs = q.apply(t - s, &ks)?;
        let rhs = kernel.general(t, &zero, &zero, Some(&delta))?;
        let scale = sup(&rhs).max(f64::MIN_POSITIVE);
        identity_residual = identity_residual.max(measure.norm(&lhs.sub(&rhs)?, f64::INFINITY)? / scale);
    }
    let kf = apply_k(kernel, f, times, &zero)?;
    let levels = times.times();
    let smoothed = q.apply_levels(&levels, &kf)?;
    let mut norms = Vec::new();
    let mut incs = Vec::new();
    for (&t, g) in levels.iter().zip(&smoothed) {
        norms.push((t, measure.norm(g, p)?));
        if let Some(j) = levels.iter().position(|&s| (s - 2.0 * t).abs() < 1e-12 * t) {
            incs.push((t, measure.norm(&g.sub(&smoothed[j])?, p)?));
        }
    }
    Ok(CommuteReport {
        identity_residual,
        norm_rate: fit_rate(&norms, 1.0, (2, 2))?,
        // Coarse increments still carry the low-frequency part, which decays like t.
        increment_rate: fit_rate(&incs, 1.0, (4, 1))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Scaling, Weight};
    use crate::grid::Window;

    fn setup() -> (Grid, Semigroup, Measure) {
        let g = Grid::new(1, 8.0, 1024, Scaling::isotropic(1)).unwrap();
        let q = Semigroup::heat(&g).unwrap();
        (g, q, Measure::new(Weight::flat(), Window::interior(4.0)))
    }

    #[test]
    fn eigenfunction_identity() {
        let (g, q, meas) = setup();
        let k = RegularizingKernel::negative_semigroup(&q).unwrap();
        assert_eq!(k.beta_bar(), 2.0);
        let sin = GridField::from_fn(&g, |x| x[0].sin());
        let kf = apply_k(&k, &sin, &DyadicTimes::new(10), &[0]).unwrap();
        let want = sin.scale(-(1.0 - (-1.0f64).exp()));
        let err = meas.norm(&kf.sub(&want).unwrap(), f64::INFINITY).unwrap();
        assert!(err < 1e-3, "{err}");
        // Away from the zero-padded edge the quadrature error is what remains.
        let deep = Measure::new(Weight::flat(), Window::interior(6.5));
        let err = deep.norm(&kf.sub(&want).unwrap(), f64::INFINITY).unwrap();
        assert!(err < 1e-5, "{err}");
        assert!(apply_k(&k, &GridField::zeros(&g), &DyadicTimes::new(10), &[0]).unwrap().is_zero());
    }

    #[test]
    fn ell1_validation() {
        let (_, q, _) = setup();
        assert!(kernel_from_semigroup(&q, vec![(vec![0], KernelCoef::Const(1.0))], 2.0).is_err());
        assert!(kernel_from_semigroup(&q, vec![(vec![2], KernelCoef::Const(1.0))], 1.0).is_err());
        let d = kernel_from_semigroup(&q, vec![(vec![1], KernelCoef::Const(1.0))], 1.0).unwrap();
        assert_eq!(d.beta_bar(), 1.0);
    }

    #[test]
    fn constant_kernel_bound_matches_c1_form() {
        let (_, q, _) = setup();
        let mut k = RegularizingKernel::negative_semigroup(&q).unwrap();
        let ck = k.measure_ck(&[vec![0]], &[1.0, 0.25, 0.0625], 201).unwrap();
        // |Q_t| / G_t = (4 pi)^{-1/2} exactly when the profile is the heat kernel profile.
        assert!((ck - 1.0 / (4.0 * std::f64::consts::PI).sqrt()).abs() < 1e-9, "{ck}");
        let mut dk = kernel_from_semigroup(&q, vec![(vec![1], KernelCoef::Const(1.0))], 1.0).unwrap();
        let c = dk.measure_ck(&[vec![0]], &[1.0, 0.25, 0.0625], 201).unwrap();
        assert!(c.is_finite() && c > 0.0);
    }

    #[test]
    fn holder_ratio_finite() {
        let (_, q, _) = setup();
        let k = RegularizingKernel::negative_semigroup(&q).unwrap();
        let samples = holder_samples(&k, 2000, 5).unwrap();
        let rep = check_kernel_holder(&k, &[0], 2.0, &samples).unwrap();
        assert_eq!(rep.rejected, 0);
        assert!(rep.max_ratio.is_finite() && rep.max_ratio > 0.0);
        let zero_h = vec![HolderSample { t: 0.5, x: vec![0.1], y: vec![0.0], h: vec![0.0] }];
        assert_eq!(check_kernel_holder(&k, &[0], 2.0, &zero_h).unwrap().max_ratio, 0.0);
        let far = vec![HolderSample { t: 0.01, x: vec![0.0], y: vec![0.0], h: vec![0.5] }];
        assert_eq!(check_kernel_holder(&k, &[0], 2.0, &far).unwrap().rejected, 1);
    }

    #[test]
    fn commute_with_white_noise() {
        let (g, q, meas) = setup();
        let k = RegularizingKernel::negative_semigroup(&q).unwrap();
        let xi = GridField::white_noise(&g, 11, 4.0);
        let rep = check_kq_commute(&k, &xi, 2.0, &meas, &DyadicTimes::new(10)).unwrap();
        assert!(rep.identity_residual < 1e-3, "{}", rep.identity_residual);
        assert!((rep.increment_rate.slope - 0.75).abs() < 0.15, "{:?}", rep.increment_rate.samples);
        let sin = GridField::from_fn(&g, |x| x[0].sin());
        let smooth = check_kq_commute(&k, &sin, f64::INFINITY, &meas, &DyadicTimes::new(10)).unwrap();
        assert!(smooth.norm_rate.slope.abs() < 0.1, "{}", smooth.norm_rate.summary());
        assert!((smooth.increment_rate.slope - 1.0).abs() < 0.05, "{}", smooth.increment_rate.summary());
    }

    #[test]
    fn divergent_integral_detected() {
        let (g, q, _) = setup();
        let k = RegularizingKernel::negative_semigroup(&q).unwrap();
        let delta = GridField::delta(&g, g.origin());
        assert!(matches!(apply_k(&k, &delta, &DyadicTimes::new(10), &[2]), Err(Error::Divergence(_))));
    }
}
