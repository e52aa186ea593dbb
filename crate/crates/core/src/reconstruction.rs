//! The reconstruction cascade `R_s^t f -> R_0^t f`, its defect, and uniqueness checks.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::besov::{besov_norm_from_levels, exact_report, fit_rate, DyadicTimes, RateReport, SumIndex};
use crate::error::{Error, Result};
use crate::grid::{GridField, Measure};
use crate::model::{Model, ModelledDistribution};
use crate::semigroup::Semigroup;

/// `y -> Q_s(y, Pi_y f(y))`.
pub fn germ(f: &ModelledDistribution, m: &Model, q: &Semigroup, s: f64) -> Result<GridField> {
    let zero = vec![0; m.grid().dim()];
    Ok(f.pair_diag(&m.pairings(q, s, &zero)?))
}

/// `R_s^t f`: `Q_{t-s}` applied to the germ at `s`, or the germ itself when `s = t`.
pub fn germ_stage(f: &ModelledDistribution, m: &Model, q: &Semigroup, t: f64, s: f64) -> Result<GridField> {
    if !(s > 0.0 && s <= t.min(1.0)) {
        return Err(Error::domain(format!("germ stage needs 0 < s <= min(t, 1), got s = {s}, t = {t}")));
    }
    let g = germ(f, m, q, s)?;
    if s == t {
        Ok(g)
    } else {
        q.apply(t - s, &g)
    }
}

/// `||Q_t(x - h, Pi_{x-h}(Gamma_{(x-h)x} f(x) - f(x - h)))||_{L^{i(c)}}` over nodes with `x - h` on the grid.
pub fn coherence_defect(
    f: &ModelledDistribution,
    m: &Model,
    q: &Semigroup,
    t: f64,
    shift: &[i64],
    measure: &Measure,
) -> Result<f64> {
    if shift.iter().all(|&v| v == 0) {
        return Ok(0.0);
    }
    let grid = m.grid();
    let zero = vec![0; grid.dim()];
    let g = m.pairings(q, t, &zero)?;
    let neg: Vec<i64> = shift.iter().map(|v| -v).collect();
    let delta = f.delta_gamma(m, shift);
    let vals: Vec<f64> = delta
        .iter()
        .enumerate()
        .map(|(x, d)| match (d, grid.shifted(x, &neg)) {
            (Some(d), Some(xh)) => d.iter().zip(&g).map(|(dj, gj)| dj * gj.values()[xh]).sum(),
            _ => 0.0,
        })
        .collect();
    measure.norm_where(grid, &vals, f.c().i, |x| delta[x].is_some())
}

/// Least-squares fit `log v = a log t + b log ||h|| + c`.
#[derive(Clone, Debug)]
pub struct JointFit {
    pub t_exponent: f64,
    pub h_exponent: f64,
    pub intercept: f64,
    pub residual: f64,
}

/// Fits `(t, ||h||_s, value)` samples with positive values.
pub fn fit_joint(samples: &[(f64, f64, f64)]) -> Result<JointFit> {
    let rows: Vec<[f64; 3]> = samples
        .iter()
        .filter(|s| s.0 > 0.0 && s.1 > 0.0 && s.2 > 0.0 && s.2.is_finite())
        .map(|s| [s.0.ln(), s.1.ln(), s.2.ln()])
        .collect();
    if rows.len() < 3 {
        return Err(Error::Degenerate(format!("joint fit needs three positive samples, have {}", rows.len())));
    }
    let mut a = [[0.0f64; 3]; 3];
    let mut b = [0.0f64; 3];
    for r in &rows {
        let x = [r[0], r[1], 1.0];
        for i in 0..3 {
            for j in 0..3 {
                a[i][j] += x[i] * x[j];
            }
            b[i] += x[i] * r[2];
        }
    }
    let sol = solve3(a, b).ok_or_else(|| Error::Degenerate("joint fit design is singular".into()))?;
    let residual = rows.iter().map(|r| (r[2] - sol[0] * r[0] - sol[1] * r[1] - sol[2]).abs()).fold(0.0, f64::max);
    Ok(JointFit { t_exponent: sol[0], h_exponent: sol[1], intercept: sol[2], residual })
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..3 {
            let factor = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let s: f64 = (row + 1..3).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// `Q_t Lambda` at each dyadic time.
#[derive(Clone, Debug)]
pub struct SmoothedFamily {
    pub levels: Vec<(f64, GridField)>,
}

impl SmoothedFamily {
    pub fn from_field(lambda: &GridField, q: &Semigroup, times: &DyadicTimes) -> Result<Self> {
        let ts = times.times();
        let fields = q.apply_levels(&ts, lambda)?;
        Ok(SmoothedFamily { levels: ts.into_iter().zip(fields).collect() })
    }

    /// Adds `Q_t g` level by level.
    pub fn plus_field(&self, g: &GridField, q: &Semigroup) -> Result<Self> {
        let levels = self
            .levels
            .iter()
            .map(|(t, f)| Ok((*t, f.add(&q.apply(*t, g)?)?)))
            .collect::<Result<_>>()?;
        Ok(SmoothedFamily { levels })
    }

    /// Adds a constant, which every `Q_t` preserves.
    pub fn plus_constant(&self, c: f64) -> Self {
        SmoothedFamily { levels: self.levels.iter().map(|(t, f)| (*t, f.map(|v| v + c))).collect() }
    }

    pub fn sub(&self, other: &SmoothedFamily) -> Result<Self> {
        if self.levels.len() != other.levels.len() {
            return Err(Error::structural("smoothed families have different time grids"));
        }
        let levels = self.levels.iter().zip(&other.levels).map(|((t, a), (_, b))| Ok((*t, a.sub(b)?))).collect::<Result<_>>()?;
        Ok(SmoothedFamily { levels })
    }

    pub fn at(&self, t: f64) -> Option<&GridField> {
        self.levels.iter().find(|(s, _)| (s - t).abs() <= 1e-12 * t).map(|(_, f)| f)
    }

    /// `Q_u Lambda` for any `u` at or above the finest level, as `Q_{u - s}` of the level `s` below `u`.
    pub fn at_time(&self, q: &Semigroup, u: f64) -> Result<GridField> {
        if let Some(f) = self.at(u) {
            return Ok(f.clone());
        }
        let below = self
            .levels
            .iter()
            .filter(|(s, _)| *s < u && u - s >= q.min_time())
            .max_by(|a, b| a.0.total_cmp(&b.0))
            .ok_or_else(|| {
                Error::domain(format!("no level of the smoothed family lies far enough below t = {u:e}"))
            })?;
        q.apply(u - below.0, &below.1)
    }

    pub fn finest(&self) -> f64 {
        self.levels.iter().map(|l| l.0).fold(f64::INFINITY, f64::min)
    }
}

#[derive(Clone, Debug)]
pub struct ReconstructionResult {
    /// `Q_{t_min} R f`.
    pub field: GridField,
    /// `R_0^t f` per dyadic `t`.
    pub family: SmoothedFamily,
    /// `(t, t^{-r(c)/ell} ||R_0^t f - Q_t(x, Pi_x f(x))||)`.
    pub defect_series: Vec<(f64, f64)>,
    /// Raw-defect fit against `t`.
    pub rates: RateReport,
    /// `(s, ||R_{s/2}^t - R_s^t||)` at `t = 1`.
    pub cauchy_series: Vec<(f64, f64)>,
    /// Cauchy increments for every `t`.
    pub cauchy_by_t: BTreeMap<u64, Vec<(f64, f64)>>,
    /// Fit of the `t = 1` increments against `s`.
    pub cauchy_rate: RateReport,
    /// `max ||Q_t R_0^t - R_0^{2t}|| / ||R_0^{2t}||` in sup norm.
    pub consistency: f64,
    /// `sup_t t^{-alpha0/ell} ||R_0^t f||`.
    pub besov_bound: f64,
    pub depth: usize,
}

impl ReconstructionResult {
    /// Writes one field file per level plus `defect.csv` and `cauchy.csv`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (n, (_, f)) in self.family.levels.iter().enumerate() {
            f.write_csv(&dir.join(format!("level_{n:02}.csv")))?;
        }
        std::fs::write(dir.join("defect.csv"), series_csv("t,defect", &self.defect_series))?;
        std::fs::write(dir.join("cauchy.csv"), series_csv("s,increment", &self.cauchy_series))?;
        Ok(())
    }
}

pub(crate) fn series_csv(header: &str, rows: &[(f64, f64)]) -> String {
    let mut out = format!("{header}\n");
    for (a, b) in rows {
        let _ = writeln!(out, "{a:e},{b:e}");
    }
    out
}

/// Smallest `s` used by the cascade: four times the resolution floor.
pub fn s_floor(q: &Semigroup) -> f64 {
    4.0 * q.min_time()
}

/// Runs the cascade along `s = t 2^{-m}`, `m <= depth`, for every dyadic `t`.
///
/// The finest stage above `s_floor` stands in for `R_0^t f`.
pub fn reconstruct(
    f: &ModelledDistribution,
    m: &Model,
    q: &Semigroup,
    times: &DyadicTimes,
    measure: &Measure,
    depth: usize,
) -> Result<ReconstructionResult> {
    let c = f.c();
    if !(c.r > 0.0) {
        return Err(Error::precondition(format!("reconstruction needs r(c) > 0, got {c}")));
    }
    let ell = q.scaling().ell();
    let floor = s_floor(q);
    let mut germs: BTreeMap<u64, GridField> = BTreeMap::new();
    let mut germ_at = |s: f64| -> Result<GridField> {
        let key = s.to_bits();
        if let Some(g) = germs.get(&key) {
            return Ok(g.clone());
        }
        let g = germ(f, m, q, s)?;
        germs.insert(key, g.clone());
        Ok(g)
    };
    let mut levels = Vec::new();
    let mut defect_series = Vec::new();
    let mut raw_defect = Vec::new();
    let mut cauchy_by_t = BTreeMap::new();
    for t in times.times() {
        let g_t = germ_at(t)?;
        let scale = measure.norm(&g_t, c.i)?.max(f64::MIN_POSITIVE);
        let mut stage = g_t.clone();
        let mut incs: Vec<(f64, f64)> = Vec::new();
        let mut s = t;
        for _ in 0..depth {
            let next_s = s / 2.0;
            if next_s < floor {
                break;
            }
            let next = q.apply(t - next_s, &germ_at(next_s)?)?;
            let inc = measure.norm(&next.sub(&stage)?, c.i)?;
            incs.push((s, inc));
            stage = next;
            s = next_s;
            check_divergence(&incs, scale, t)?;
        }
        let defect = measure.norm(&stage.sub(&g_t)?, c.i)?;
        raw_defect.push((t, defect));
        defect_series.push((t, t.powf(-c.r / ell) * defect));
        cauchy_by_t.insert(t.to_bits(), incs);
        levels.push((t, stage));
    }
    let family = SmoothedFamily { levels };
    let mut consistency = 0.0f64;
    for (t, r) in &family.levels {
        if let Some(r2) = family.at(2.0 * t) {
            let lhs = q.apply(*t, r)?;
            let sc = r2.values().iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
            let diff = measure.norm(&lhs.sub(r2)?, f64::INFINITY)?;
            consistency = consistency.max(diff / sc);
        }
    }
    let alpha0 = m.structure().alpha0();
    let mut besov_bound = 0.0f64;
    for (t, r) in &family.levels {
        besov_bound = besov_bound.max(t.powf(-alpha0 / ell) * measure.norm(r, c.i)?);
    }
    let cauchy_series = cauchy_by_t.get(&1f64.to_bits()).cloned().unwrap_or_default();
    let cauchy_rate = rate_or_exact(&cauchy_series, (0, 0))?;
    let rates = rate_or_exact(&raw_defect, (2, 2))?;
    let field = family.levels.last().map(|l| l.1.clone()).expect("dyadic times are never empty");
    Ok(ReconstructionResult {
        field,
        family,
        defect_series,
        rates,
        cauchy_series,
        cauchy_by_t,
        cauchy_rate,
        consistency,
        besov_bound,
        depth,
    })
}

/// Three consecutive non-decreasing increments above round-off signal divergence.
fn check_divergence(incs: &[(f64, f64)], scale: f64, t: f64) -> Result<()> {
    let n = incs.len();
    if n < 4 {
        return Ok(());
    }
    let tail = &incs[n - 4..];
    if tail.iter().all(|i| i.1 > 1e-10 * scale) && tail.windows(2).all(|w| w[1].1 >= w[0].1) {
        return Err(Error::Divergence(format!(
            "Cauchy increments stopped decaying at t = {t} (s = {:e}: {:e})",
            tail[3].0, tail[3].1
        )));
    }
    Ok(())
}

fn rate_or_exact(samples: &[(f64, f64)], trim: (usize, usize)) -> Result<RateReport> {
    let peak = samples.iter().map(|s| s.1).fold(0.0, f64::max);
    if peak <= 1e-13 {
        return Ok(exact_report(samples));
    }
    match fit_rate(samples, 1.0, trim) {
        Err(Error::Degenerate(_)) => fit_rate(samples, 1.0, (0, 0)),
        other => other,
    }
}

/// `max_t ||family(t) - Q_t g|| / ||Q_t g||` over the levels of `family`.
pub fn family_residual(family: &SmoothedFamily, g: &GridField, q: &Semigroup, measure: &Measure, p: f64) -> Result<f64> {
    let mut worst = 0.0f64;
    for (t, lvl) in &family.levels {
        let want = q.apply(*t, g)?;
        let scale = measure.norm(&want, p)?;
        let err = measure.norm(&lvl.sub(&want)?, p)?;
        worst = worst.max(if scale > 0.0 { err / scale } else { err });
    }
    Ok(worst)
}

#[derive(Clone, Debug)]
pub struct DefectReport {
    /// `(t, ||Q_t Lambda - Q_t(x, Pi_x f(x))||)`, un-normalized.
    pub raw: Vec<(f64, f64)>,
    /// Same, times `t^{-r(c)/ell}`; its sup is the defect seminorm.
    pub normalized: Vec<(f64, f64)>,
    pub seminorm: f64,
    pub rate: RateReport,
    pub required: f64,
    pub passed: bool,
}

/// Defect of `Lambda` against the germ of `f`; passes when the raw exponent reaches `r(c)/ell - 0.15`.
pub fn reconstruction_defect(
    lambda: &SmoothedFamily,
    f: &ModelledDistribution,
    m: &Model,
    q: &Semigroup,
    measure: &Measure,
) -> Result<DefectReport> {
    let c = f.c();
    let ell = q.scaling().ell();
    let mut raw = Vec::new();
    for (t, ql) in &lambda.levels {
        let d = ql.sub(&germ(f, m, q, *t)?)?;
        raw.push((*t, measure.norm(&d, c.i)?));
    }
    let normalized: Vec<(f64, f64)> = raw.iter().map(|&(t, v)| (t, t.powf(-c.r / ell) * v)).collect();
    let seminorm = normalized.iter().map(|v| v.1).fold(0.0, f64::max);
    let rate = rate_or_exact(&raw, (2, 2))?;
    let required = c.r / ell;
    let passed = rate.exponent_hat >= required - 0.15;
    Ok(DefectReport { raw, normalized, seminorm, rate, required, passed })
}

#[derive(Clone, Debug)]
pub struct UniquenessReport {
    /// `||Lambda1 - Lambda2||_{B^{alpha0 - eps}}`.
    pub gap: f64,
    /// `||Lambda1||_{B^{alpha0 - eps}}`.
    pub reference: f64,
    pub relative: f64,
    /// Both candidates passed the defect test; otherwise the gap is reported but not judged.
    pub preconditions_met: bool,
    pub passed: bool,
}

/// Besov distance of two candidate reconstructions at regularity `alpha0 - 0.1`, `q = inf`.
#[allow(clippy::too_many_arguments)]
pub fn uniqueness_gap(
    lambda1: &SmoothedFamily,
    lambda2: &SmoothedFamily,
    f: &ModelledDistribution,
    m: &Model,
    q: &Semigroup,
    measure: &Measure,
) -> Result<UniquenessReport> {
    let c = f.c();
    let ell = q.scaling().ell();
    let alpha = m.structure().alpha0() - 0.1;
    let d1 = reconstruction_defect(lambda1, f, m, q, measure)?;
    let d2 = reconstruction_defect(lambda2, f, m, q, measure)?;
    let diff = lambda1.sub(lambda2)?;
    let norms = |fam: &SmoothedFamily| -> Result<Vec<(f64, f64)>> {
        fam.levels.iter().map(|(t, g)| Ok((*t, measure.norm(g, c.i)?))).collect()
    };
    let gap = besov_norm_from_levels(&norms(&diff)?, alpha, SumIndex::Infinity, ell);
    let reference = besov_norm_from_levels(&norms(lambda1)?, alpha, SumIndex::Infinity, ell);
    let relative = if reference > 0.0 { gap / reference } else if gap == 0.0 { 0.0 } else { f64::INFINITY };
    let preconditions_met = d1.passed && d2.passed;
    Ok(UniquenessReport { gap, reference, relative, preconditions_met, passed: preconditions_met && relative <= 1e-3 })
}
