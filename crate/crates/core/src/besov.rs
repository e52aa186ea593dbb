//! Semigroup Besov norms for `alpha <= 0`, the Taylor-remainder space for
//! `alpha > 0`, and log-log rate estimation.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::{factorial, monomial, monomial_index_set};
use crate::grid::{check_exponent, Grid, GridField, Measure};
use crate::semigroup::Semigroup;

/// Times `2^{-n}`, `n = 0..=n_max`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DyadicTimes {
    n_max: usize,
}

impl DyadicTimes {
    pub fn new(n_max: usize) -> Self {
        DyadicTimes { n_max }
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_max).map(|n| 2f64.powi(-(n as i32))).collect()
    }

    pub fn finest(&self) -> f64 {
        2f64.powi(-(self.n_max as i32))
    }
}

/// Least-squares fit of `log value` against `log t`.
#[derive(Clone, Debug)]
pub struct RateReport {
    /// Fitted slope times the order used for the fit.
    pub exponent_hat: f64,
    pub slope: f64,
    pub intercept: f64,
    /// Largest deviation of a retained sample from the fit line, in log space.
    pub residual: f64,
    pub t_range: (f64, f64),
    /// Every sample, retained or not.
    pub samples: Vec<(f64, f64)>,
    /// The fitted decay is flat (`|slope| < 0.05`).
    pub saturated: bool,
}

impl RateReport {
    /// `t,value` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,value\n");
        for (t, v) in &self.samples {
            let _ = writeln!(out, "{t:e},{v:e}");
        }
        out
    }

    pub fn summary(&self) -> String {
        format!("{{exponent_hat: {:.6}, residual: {:.6}}}", self.exponent_hat, self.residual)
    }
}

/// Fits `log v = slope log t + c` over samples with positive values after
/// dropping `trim.0` samples at the largest `t` and `trim.1` at the smallest.
pub fn fit_rate(samples: &[(f64, f64)], order: f64, trim: (usize, usize)) -> Result<RateReport> {
    let mut sorted: Vec<(f64, f64)> = samples.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let end = sorted.len().saturating_sub(trim.1);
    let kept: Vec<(f64, f64)> = sorted
        .get(trim.0.min(end)..end)
        .unwrap_or(&[])
        .iter()
        .filter(|(t, v)| *t > 0.0 && *v > 0.0 && v.is_finite())
        .map(|&(t, v)| (t.ln(), v.ln()))
        .collect();
    if kept.len() < 2 {
        return Err(Error::Degenerate(format!("need two positive samples to fit a rate, have {}", kept.len())));
    }
    let n = kept.len() as f64;
    let mx = kept.iter().map(|p| p.0).sum::<f64>() / n;
    let my = kept.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = kept.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = kept.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate("all retained samples share one abscissa".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = kept.iter().map(|p| (p.1 - slope * p.0 - intercept).abs()).fold(0.0, f64::max);
    let lo = kept.iter().map(|p| p.0).fold(f64::INFINITY, f64::min).exp();
    let hi = kept.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max).exp();
    Ok(RateReport {
        exponent_hat: slope * order,
        slope,
        intercept,
        residual,
        t_range: (lo, hi),
        samples: samples.to_vec(),
        saturated: slope.abs() < 0.05,
    })
}

/// Report for a series that vanishes to round-off: every finite exponent is attained.
pub fn exact_report(samples: &[(f64, f64)]) -> RateReport {
    let lo = samples.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let hi = samples.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
    RateReport {
        exponent_hat: f64::INFINITY,
        slope: f64::INFINITY,
        intercept: f64::NEG_INFINITY,
        residual: 0.0,
        t_range: (lo, hi),
        samples: samples.to_vec(),
        saturated: false,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SumIndex {
    One,
    Infinity,
}

impl SumIndex {
    pub fn from_exponent(q: f64) -> Result<Self> {
        if q == 1.0 {
            Ok(SumIndex::One)
        } else if q.is_infinite() && q > 0.0 {
            Ok(SumIndex::Infinity)
        } else {
            Err(Error::domain(format!("only q in {{1, inf}} is supported, got {q}")))
        }
    }
}

/// `(t, ||Q_t f||_{L^p(w)})` over the dyadic times.
pub fn level_norms(f: &GridField, p: f64, m: &Measure, q: &Semigroup, times: &DyadicTimes) -> Result<Vec<(f64, f64)>> {
    check_exponent(p)?;
    let ts = times.times();
    let fields = q.apply_levels(&ts, f)?;
    ts.iter().zip(&fields).map(|(&t, qf)| Ok((t, m.norm(qf, p)?))).collect()
}

/// Combines per-level norms into the Besov norm; the `t = 1` entry supplies `||Q_1 f||`.
pub fn besov_norm_from_levels(levels: &[(f64, f64)], alpha: f64, sum: SumIndex, ell: f64) -> f64 {
    let at_one = levels.iter().find(|(t, _)| (*t - 1.0).abs() < 1e-12).map_or(0.0, |l| l.1);
    let terms = levels.iter().map(|&(t, v)| t.powf(-alpha / ell) * v);
    let tail = match sum {
        SumIndex::Infinity => terms.fold(0.0, f64::max),
        SumIndex::One => terms.sum::<f64>() * std::f64::consts::LN_2,
    };
    at_one + tail
}

fn check_nonpositive(alpha: f64) -> Result<()> {
    if alpha > 0.0 {
        return Err(Error::domain(format!(
            "semigroup Besov norms need alpha <= 0, got {alpha}; use holder_space_check"
        )));
    }
    Ok(())
}

/// `||f||_{B^{alpha,Q}_{p,q}(w)}` on the dyadic grid of times.
pub fn besov_norm(
    f: &GridField,
    alpha: f64,
    p: f64,
    q_index: f64,
    m: &Measure,
    q: &Semigroup,
    times: &DyadicTimes,
) -> Result<f64> {
    check_nonpositive(alpha)?;
    let sum = SumIndex::from_exponent(q_index)?;
    let levels = level_norms(f, p, m, q, times)?;
    Ok(besov_norm_from_levels(&levels, alpha, sum, q.scaling().ell()))
}

/// Fits the decay of `||Q_t f||` over the dyadic range, dropping two levels at each end.
pub fn regularity_slope(f: &GridField, p: f64, m: &Measure, q: &Semigroup, times: &DyadicTimes) -> Result<RateReport> {
    if f.is_zero() {
        return Err(Error::Degenerate("regularity of the zero field is undefined".into()));
    }
    let levels = level_norms(f, p, m, q, times)?;
    fit_rate(&levels, q.scaling().ell(), (2, 2))
}

/// One inequality `lhs <= C rhs` with its empirical constant.
#[derive(Clone, Debug)]
pub struct Comparison {
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs / rhs`, zero when both vanish and infinite when only `rhs` does.
    pub constant: f64,
}

impl Comparison {
    fn new(lhs: f64, rhs: f64) -> Self {
        let constant = if lhs == 0.0 {
            0.0
        } else if rhs == 0.0 {
            f64::INFINITY
        } else {
            lhs / rhs
        };
        Comparison { lhs, rhs, constant }
    }

    pub fn holds(&self, cap: f64) -> bool {
        self.constant <= cap
    }
}

#[derive(Clone, Debug)]
pub struct InterchangeReport {
    /// `||f||_{q=1, alpha-eps}` against `||f||_{q=inf, alpha}`.
    pub lower: Comparison,
    /// `||f||_{q=inf, alpha}` against `||f||_{q=1, alpha}`.
    pub upper: Comparison,
}

/// Evaluates both directions of the `q = 1` / `q = inf` comparison with `eps = 0.1`.
pub fn check_q_interchange(
    f: &GridField,
    alpha: f64,
    p: f64,
    m: &Measure,
    q: &Semigroup,
    times: &DyadicTimes,
) -> Result<InterchangeReport> {
    check_nonpositive(alpha)?;
    let eps = 0.1;
    let ell = q.scaling().ell();
    let levels = level_norms(f, p, m, q, times)?;
    let one_shifted = besov_norm_from_levels(&levels, alpha - eps, SumIndex::One, ell);
    let inf = besov_norm_from_levels(&levels, alpha, SumIndex::Infinity, ell);
    let one = besov_norm_from_levels(&levels, alpha, SumIndex::One, ell);
    Ok(InterchangeReport { lower: Comparison::new(one_shifted, inf), upper: Comparison::new(inf, one) })
}

/// `||f||_{B_r^{alpha - |s|(1/p - 1/r)}}` against `||f||_{B_p^alpha}`, both with `q = inf`.
pub fn check_besov_embedding(
    f: &GridField,
    alpha: f64,
    p: f64,
    r: f64,
    m: &Measure,
    q: &Semigroup,
    times: &DyadicTimes,
) -> Result<Comparison> {
    check_nonpositive(alpha)?;
    check_exponent(p)?;
    check_exponent(r)?;
    if r < p {
        return Err(Error::domain(format!("embedding needs p <= r, got p = {p}, r = {r}")));
    }
    let loss = q.scaling().homogeneity() * (1.0 / p - 1.0 / r);
    let lhs = besov_norm(f, alpha - loss, r, f64::INFINITY, m, q, times)?;
    let rhs = besov_norm(f, alpha, p, f64::INFINITY, m, q, times)?;
    Ok(Comparison::new(lhs, rhs))
}

/// Fits the decay in `tau` of `||(Q_tau - id) f||_{B^{alpha-eps}_{p,inf}}` over the dyadic times.
pub fn check_time_continuity(
    f: &GridField,
    alpha: f64,
    p: f64,
    eps: f64,
    m: &Measure,
    q: &Semigroup,
    times: &DyadicTimes,
) -> Result<RateReport> {
    check_nonpositive(alpha)?;
    let ell = q.scaling().ell();
    if !(0.0..=ell).contains(&eps) {
        return Err(Error::domain(format!("eps must lie in [0, ell], got {eps}")));
    }
    let mut samples = Vec::new();
    for tau in times.times() {
        let g = q.apply(tau, f)?.sub(f)?;
        samples.push((tau, besov_norm(&g, alpha - eps, p, f64::INFINITY, m, q, times)?));
    }
    fit_rate(&samples, ell, (2, 2))
}

/// A field together with its derivatives `d^k f`, keyed by multiindex.
#[derive(Clone, Debug, Default)]
pub struct Jet {
    pub fields: BTreeMap<Vec<usize>, GridField>,
}

impl Jet {
    pub fn new() -> Self {
        Jet::default()
    }

    pub fn insert(&mut self, k: Vec<usize>, f: GridField) {
        self.fields.insert(k, f);
    }

    pub fn get(&self, k: &[usize]) -> Result<&GridField> {
        self.fields.get(k).ok_or_else(|| Error::structural(format!("missing derivative field for k = {k:?}")))
    }
}

/// Axis-aligned lattice shifts with `||h||_s` near `2^{-j} L`, `j = 1..=j_max`.
pub fn shift_ladder(grid: &Grid, axis: usize, j_max: usize) -> Vec<Vec<i64>> {
    let s = grid.scaling().s()[axis];
    let mut out: Vec<Vec<i64>> = Vec::new();
    for j in 1..=j_max {
        let target = (2f64.powi(-(j as i32)) * grid.half_width()).powf(s);
        let steps = (target / grid.spacing()).round() as i64;
        if steps == 0 || steps >= grid.points_per_axis() as i64 {
            continue;
        }
        let mut v = vec![0; grid.dim()];
        v[axis] = steps;
        if !out.contains(&v) {
            out.push(v);
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct HolderSpaceReport {
    pub alpha: f64,
    /// Per derivative `k`: the rate fit in `||h||_s` and the required exponent `alpha - |k|_s`.
    pub per_k: Vec<(Vec<usize>, RateReport, f64)>,
    pub tolerance: f64,
    pub passed: bool,
}

/// Taylor remainders `d^k f(x - h) - sum_l (-h)^l / l! d^{k+l} f(x)` against `||h||_s`.
///
/// Only points with `x - h` on the grid enter the norm. Fits drop `trim.0`
/// of the largest and `trim.1` of the smallest shifts.
pub fn holder_space_check(
    jet: &Jet,
    alpha: f64,
    p: f64,
    m: &Measure,
    shifts: &[Vec<i64>],
    trim: (usize, usize),
) -> Result<HolderSpaceReport> {
    if !(alpha > 0.0) {
        return Err(Error::domain(format!("holder_space_check needs alpha > 0, got {alpha}")));
    }
    let base = jet.get(&vec![0; jet.fields.keys().next().map_or(1, |k| k.len())])?;
    let grid = base.grid().clone();
    let scaling = grid.scaling().clone();
    let levels = monomial_index_set(&scaling, alpha);
    let tolerance = 0.15;
    let mut per_k = Vec::new();
    let mut passed = true;
    for (k, &kval) in levels.indices.iter().zip(&levels.values) {
        let fk = jet.get(k)?;
        let orders = monomial_index_set(&scaling, alpha - kval);
        let higher: Vec<(&Vec<usize>, &GridField)> = orders
            .indices
            .iter()
            .map(|l| {
                let kl: Vec<usize> = k.iter().zip(l).map(|(a, b)| a + b).collect();
                jet.get(&kl).map(|f| (l, f))
            })
            .collect::<Result<_>>()?;
        let mut samples = Vec::new();
        for shift in shifts {
            let hv = grid.shift_vector(shift);
            let neg: Vec<i64> = shift.iter().map(|s| -s).collect();
            let coeffs: Vec<f64> = higher
                .iter()
                .map(|(l, _)| {
                    let mh: Vec<f64> = hv.iter().map(|v| -v).collect();
                    monomial(&mh, l) / factorial(l)
                })
                .collect();
            let mut rem = vec![0.0; grid.len()];
            let mut valid = vec![false; grid.len()];
            for (i, r) in rem.iter_mut().enumerate() {
                if let Some(src) = grid.shifted(i, &neg) {
                    valid[i] = true;
                    let mut v = fk.values()[src];
                    for (c, (_, f)) in coeffs.iter().zip(&higher) {
                        v -= c * f.values()[i];
                    }
                    *r = v;
                }
            }
            let norm = m.norm_where(&grid, &rem, p, |i| valid[i])?;
            samples.push((crate::geometry::norm_unchecked(&hv, scaling.s()), norm));
        }
        let need = alpha - kval;
        let scale = m.norm(fk, p)?.max(f64::MIN_POSITIVE);
        let rate = if samples.iter().all(|s| s.1 <= 1e-12 * scale) {
            exact_report(&samples)
        } else {
            fit_rate(&samples, 1.0, trim)?
        };
        if rate.exponent_hat < need - tolerance {
            passed = false;
        }
        per_k.push((k.clone(), rate, need));
    }
    Ok(HolderSpaceReport { alpha, per_k, tolerance, passed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Scaling, Weight};
    use crate::grid::Window;

    fn setup() -> (Grid, Semigroup) {
        let g = Grid::new(1, 8.0, 1024, Scaling::isotropic(1)).unwrap();
        let q = Semigroup::heat(&g).unwrap();
        (g, q)
    }

    #[test]
    fn zero_field_has_zero_norm() {
        let (g, q) = setup();
        let n = besov_norm(&GridField::zeros(&g), -0.5, 2.0, 1.0, &Measure::flat(), &q, &DyadicTimes::new(6)).unwrap();
        assert_eq!(n, 0.0);
    }

    #[test]
    fn delta_norm_closed_form() {
        let (g, q) = setup();
        let d = GridField::delta(&g, g.origin());
        let n = besov_norm(&d, -1.0, f64::INFINITY, f64::INFINITY, &Measure::flat(), &q, &DyadicTimes::new(10)).unwrap();
        let want = 2.0 / (4.0 * std::f64::consts::PI).sqrt();
        assert!((n - want).abs() < 1e-3);
    }

    #[test]
    fn positive_alpha_is_rejected() {
        let (g, q) = setup();
        let e = besov_norm(&GridField::zeros(&g), 0.5, 2.0, 1.0, &Measure::flat(), &q, &DyadicTimes::new(4));
        assert!(matches!(e, Err(Error::Domain(_))));
        let e = besov_norm(&GridField::zeros(&g), -0.5, 2.0, 2.0, &Measure::flat(), &q, &DyadicTimes::new(4));
        assert!(matches!(e, Err(Error::Domain(_))));
    }

    #[test]
    fn delta_slope() {
        let (g, q) = setup();
        let d = GridField::delta(&g, g.origin());
        let r = regularity_slope(&d, f64::INFINITY, &Measure::flat(), &q, &DyadicTimes::new(10)).unwrap();
        assert!((r.exponent_hat + 1.0).abs() < 0.05);
    }

    #[test]
    fn smoothed_field_saturates() {
        let (g, q) = setup();
        let f = q.apply(1.0, &GridField::delta(&g, g.origin())).unwrap();
        let m = Measure::new(Weight::flat(), Window::interior(4.0));
        let r = regularity_slope(&f, f64::INFINITY, &m, &q, &DyadicTimes::new(10)).unwrap();
        assert!(r.saturated);
    }

    #[test]
    fn zero_field_slope_is_degenerate() {
        let (g, q) = setup();
        let e = regularity_slope(&GridField::zeros(&g), 2.0, &Measure::flat(), &q, &DyadicTimes::new(6));
        assert!(matches!(e, Err(Error::Degenerate(_))));
    }

    #[test]
    fn equal_exponents_embed_with_constant_one() {
        let (g, q) = setup();
        let f = GridField::from_fn(&g, |x| (-x[0] * x[0]).exp() * (3.0 * x[0]).cos());
        let c = check_besov_embedding(&f, -0.5, 2.0, 2.0, &Measure::flat(), &q, &DyadicTimes::new(6)).unwrap();
        assert!((c.constant - 1.0).abs() < 1e-14);
        assert!(check_besov_embedding(&f, -0.5, 2.0, 1.0, &Measure::flat(), &q, &DyadicTimes::new(6)).is_err());
    }

    #[test]
    fn time_continuity_of_smooth_field() {
        let (g, q) = setup();
        let f = GridField::from_fn(&g, |x| (-x[0] * x[0] / 2.0).exp());
        let m = Measure::new(Weight::flat(), Window::interior(4.0));
        let r = check_time_continuity(&f, 0.0, f64::INFINITY, 2.0, &m, &q, &DyadicTimes::new(8)).unwrap();
        assert!((r.slope - 1.0).abs() < 0.15, "{}", r.slope);
        let samples: Vec<f64> = r.samples.iter().map(|s| s.1).collect();
        assert!(samples.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn polynomial_remainders_vanish() {
        let g = Grid::new(1, 8.0, 256, Scaling::isotropic(1)).unwrap();
        let mut jet = Jet::new();
        jet.insert(vec![0], GridField::from_fn(&g, |x| 1.0 + 2.0 * x[0]));
        jet.insert(vec![1], GridField::constant(&g, 2.0));
        let mut shifts = shift_ladder(&g, 0, 6);
        shifts.push(vec![0]);
        let r = holder_space_check(&jet, 1.5, f64::INFINITY, &Measure::flat(), &shifts, (0, 0)).unwrap();
        assert!(r.passed);
        for (_, rate, _) in &r.per_k {
            assert!(rate.samples.iter().all(|s| s.1 < 1e-12));
        }
    }

    #[test]
    fn power_function_has_its_exponent() {
        let g = Grid::new(1, 8.0, 4096, Scaling::isotropic(1)).unwrap();
        let mut jet = Jet::new();
        jet.insert(vec![0], GridField::from_fn(&g, |x| x[0].abs().powf(1.5)));
        jet.insert(vec![1], GridField::from_fn(&g, |x| 1.5 * x[0].signum() * x[0].abs().sqrt()));
        let shifts = shift_ladder(&g, 0, 10);
        let m = Measure::new(Weight::flat(), Window::interior(4.0));
        let r = holder_space_check(&jet, 1.5, f64::INFINITY, &m, &shifts, (2, 0)).unwrap();
        for (k, rate, need) in &r.per_k {
            assert!((rate.exponent_hat - need).abs() < 0.15, "{k:?} {}", rate.exponent_hat);
        }
        assert!(r.passed);
    }

    #[test]
    fn missing_derivative_is_structural() {
        let g = Grid::new(1, 8.0, 64, Scaling::isotropic(1)).unwrap();
        let mut jet = Jet::new();
        jet.insert(vec![0], GridField::zeros(&g));
        let e = holder_space_check(&jet, 1.5, 2.0, &Measure::flat(), &shift_ladder(&g, 0, 4), (0, 0));
        assert!(matches!(e, Err(Error::Structural(_))));
    }
}
