//! Models `(Pi, Gamma)` on a finite structure, modelled distributions, and their norms.

use crate::besov::DyadicTimes;
use crate::error::{Error, Result};
use crate::geometry::{binomial, factorial, leq, monomial, norm_unchecked};
use crate::grid::{Grid, GridField, Measure};
use crate::semigroup::Semigroup;
use crate::structure::{RIIndex, RIStructure, Sector, Symbol, SymbolKind};

/// Integral operators `x -> int d_x^k A_t(x, z) (z - x)^m g(z) dz` (`g = 1` when `None`).
pub trait Pairing {
    fn pairing_grid(&self) -> &Grid;
    fn general(&self, t: f64, k: &[usize], m: &[usize], g: Option<&GridField>) -> Result<GridField>;
}

impl Pairing for Semigroup {
    fn pairing_grid(&self) -> &Grid {
        self.grid()
    }

    fn general(&self, t: f64, k: &[usize], m: &[usize], g: Option<&GridField>) -> Result<GridField> {
        self.apply_general(t, k, m, g)
    }
}

/// How `Pi_x` acts on one basis vector.
#[derive(Clone, Debug)]
pub enum Realization {
    /// `(z - x)^k`.
    Monomial(Vec<usize>),
    /// A distribution independent of `x`.
    Field(GridField),
    /// `base(z) - sum_k (z - x)^k / k! * jet_k(x)`.
    Recentred { base: GridField, jet: Vec<(Vec<usize>, GridField)> },
}

/// Dense square matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Matrix { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n + col]
    }

    fn add_to(&mut self, row: usize, col: usize, v: f64) {
        self.data[row * self.n + col] += v;
    }

    pub fn mul(&self, other: &Matrix) -> Matrix {
        let n = self.n;
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                if a != 0.0 {
                    for j in 0..n {
                        out.data[i * n + j] += a * other.get(k, j);
                    }
                }
            }
        }
        out
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| (0..self.n).map(|j| self.get(i, j) * v[j]).sum()).collect()
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        Matrix { n: self.n, data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Max column sum of the block mapping `cols` into `rows`.
    pub fn block_norm(&self, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> f64 {
        cols.map(|j| rows.clone().map(|i| self.get(i, j).abs()).sum::<f64>()).fold(0.0, f64::max)
    }
}

/// A model on a grid: one realization per basis vector of the structure.
#[derive(Clone, Debug)]
pub struct Model {
    structure: RIStructure,
    grid: Grid,
    pi: Vec<Realization>,
}

impl Model {
    /// `pi` is indexed by the structure's global coordinates.
    pub fn new(structure: RIStructure, grid: &Grid, pi: Vec<Realization>) -> Result<Self> {
        if pi.len() != structure.dim() {
            return Err(Error::Dimension { expected: structure.dim(), got: pi.len() });
        }
        let d = grid.dim();
        for (sym, real) in structure.symbols().into_iter().zip(&pi) {
            match (&sym.kind, real) {
                (SymbolKind::Monomial(k), Realization::Monomial(m)) if k == m && k.len() == d => {}
                (SymbolKind::Monomial(_), _) | (_, Realization::Monomial(_)) => {
                    return Err(Error::structural(format!("symbol {} needs a matching monomial realization", sym.name)));
                }
                (_, Realization::Field(f)) => same_grid(grid, f)?,
                (_, Realization::Recentred { base, jet }) => {
                    same_grid(grid, base)?;
                    for (k, c) in jet {
                        same_grid(grid, c)?;
                        for j in lower_multi(k) {
                            if structure.monomial_coord(&j).is_none() {
                                return Err(Error::structural(format!(
                                    "symbol {} recentres with X^{k:?} but X^{j:?} is not in the structure",
                                    sym.name
                                )));
                            }
                        }
                    }
                }
            }
            if let SymbolKind::Monomial(k) = &sym.kind {
                for j in lower_multi(k) {
                    if structure.monomial_coord(&j).is_none() {
                        return Err(Error::structural(format!("monomials are not closed below X^{k:?}")));
                    }
                }
            }
        }
        Ok(Model { structure, grid: grid.clone(), pi })
    }

    /// Builds the structure from `(symbol, index, realization)` entries; the regularity is the least `r`.
    pub fn assemble(grid: &Grid, entries: Vec<(Symbol, RIIndex, Realization)>) -> Result<Self> {
        let alpha0 = entries.iter().map(|e| e.1.r).fold(f64::INFINITY, f64::min);
        let sectors = entries.iter().map(|(s, a, _)| Sector { index: *a, basis: vec![s.clone()] }).collect();
        let structure = RIStructure::new(sectors, alpha0.min(0.0))?;
        let mut pi = Vec::with_capacity(entries.len());
        for sym in structure.symbols() {
            let (_, _, r) = entries.iter().find(|e| e.0.name == sym.name).expect("every symbol came from an entry");
            pi.push(r.clone());
        }
        Model::new(structure, grid, pi)
    }

    pub fn structure(&self) -> &RIStructure {
        &self.structure
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn realizations(&self) -> &[Realization] {
        &self.pi
    }

    pub fn dim(&self) -> usize {
        self.pi.len()
    }

    /// `Gamma_{xy}` at grid nodes `x`, `y`, as a matrix on global coordinates.
    ///
    /// Determined by `Pi_x Gamma_{xy} = Pi_y` for each kind of realization.
    pub fn gamma(&self, x: usize, y: usize) -> Matrix {
        let n = self.dim();
        let mut m = Matrix::zeros(n);
        if x == y {
            return Matrix::identity(n);
        }
        let px = self.grid.point(x);
        let py = self.grid.point(y);
        let xy: Vec<f64> = px.iter().zip(&py).map(|(a, b)| a - b).collect();
        for (col, real) in self.pi.iter().enumerate() {
            match real {
                Realization::Field(_) => m.add_to(col, col, 1.0),
                Realization::Monomial(k) => {
                    // (z - y)^k = sum_l C(k, l) (x - y)^l (z - x)^{k - l}
                    for l in lower_multi(k) {
                        let kl: Vec<usize> = k.iter().zip(&l).map(|(a, b)| a - b).collect();
                        let row = self.structure.monomial_coord(&kl).expect("checked at construction");
                        m.add_to(row, col, binomial(k, &l) * monomial(&xy, &l));
                    }
                }
                Realization::Recentred { jet, .. } => {
                    m.add_to(col, col, 1.0);
                    for (k, c) in jet {
                        let cx = c.values()[x] / factorial(k);
                        let cy = c.values()[y] / factorial(k);
                        let row = self.structure.monomial_coord(k).expect("checked at construction");
                        m.add_to(row, col, cx);
                        for j in lower_multi(k) {
                            let kj: Vec<usize> = k.iter().zip(&j).map(|(a, b)| a - b).collect();
                            let row = self.structure.monomial_coord(&j).expect("checked at construction");
                            m.add_to(row, col, -cy * binomial(k, &j) * monomial(&xy, &kj));
                        }
                    }
                }
            }
        }
        m
    }

    /// `Pi_x v` as a field in `z`.
    pub fn realize(&self, x: usize, v: &[f64]) -> GridField {
        let px = self.grid.point(x);
        let mut out = GridField::zeros(&self.grid);
        for (coef, real) in v.iter().zip(&self.pi) {
            if *coef == 0.0 {
                continue;
            }
            let vals = out.values_mut();
            match real {
                Realization::Monomial(k) => {
                    for (i, o) in vals.iter_mut().enumerate() {
                        let z = self.grid.point(i);
                        let zx: Vec<f64> = z.iter().zip(&px).map(|(a, b)| a - b).collect();
                        *o += coef * monomial(&zx, k);
                    }
                }
                Realization::Field(f) => {
                    for (o, fv) in vals.iter_mut().zip(f.values()) {
                        *o += coef * fv;
                    }
                }
                Realization::Recentred { base, jet } => {
                    for (i, o) in vals.iter_mut().enumerate() {
                        let z = self.grid.point(i);
                        let zx: Vec<f64> = z.iter().zip(&px).map(|(a, b)| a - b).collect();
                        let mut v = base.values()[i];
                        for (k, c) in jet {
                            v -= monomial(&zx, k) / factorial(k) * c.values()[x];
                        }
                        *o += coef * v;
                    }
                }
            }
        }
        out
    }

    /// `y -> d^k A_t(y, Pi_y e_j)` for every basis vector `e_j`.
    pub fn pairings(&self, op: &dyn Pairing, t: f64, k: &[usize]) -> Result<Vec<GridField>> {
        if op.pairing_grid() != &self.grid {
            return Err(Error::structural("operator grid differs from the model grid"));
        }
        let zero = vec![0; self.grid.dim()];
        self.pi
            .iter()
            .map(|real| match real {
                Realization::Monomial(m) => op.general(t, k, m, None),
                Realization::Field(f) => op.general(t, k, &zero, Some(f)),
                Realization::Recentred { base, jet } => {
                    let mut out = op.general(t, k, &zero, Some(base))?;
                    for (j, c) in jet {
                        let mom = op.general(t, k, j, None)?;
                        let fj = factorial(j);
                        for ((o, m), cv) in out.values_mut().iter_mut().zip(mom.values()).zip(c.values()) {
                            *o -= cv / fj * m;
                        }
                    }
                    Ok(out)
                }
            })
            .collect()
    }
}

fn same_grid(grid: &Grid, f: &GridField) -> Result<()> {
    if f.grid() != grid {
        return Err(Error::structural("realization field lives on a different grid"));
    }
    Ok(())
}

/// All multiindices `l <= k`.
pub(crate) fn lower_multi(k: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &ki in k {
        out = out
            .into_iter()
            .flat_map(|p: Vec<usize>| {
                (0..=ki).map(move |v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    out.retain(|l| leq(l, k));
    out
}

/// Polynomial structure below `gamma_cut` with `Pi_x X^k = (. - x)^k`.
pub fn polynomial_model(gamma_cut: f64, grid: &Grid) -> Result<(RIStructure, Model)> {
    let structure = RIStructure::polynomial(grid.scaling(), gamma_cut)?;
    let pi = monomial_realizations(&structure);
    let model = Model::new(structure.clone(), grid, pi)?;
    Ok((structure, model))
}

fn monomial_realizations(s: &RIStructure) -> Vec<Realization> {
    s.symbols()
        .iter()
        .map(|sym| match &sym.kind {
            SymbolKind::Monomial(k) => Realization::Monomial(k.clone()),
            _ => unreachable!("polynomial structures hold monomials only"),
        })
        .collect()
}

/// One-symbol model `Pi_x Xi = xi`, `Gamma = id`, with index `(alpha_xi, p_xi)`.
pub fn noise_model(xi: &GridField, alpha_xi: f64, p_xi: f64, grid: &Grid) -> Result<(RIStructure, Model)> {
    noise_model_mixed(vec![("Xi".to_string(), xi.clone(), RIIndex::new(alpha_xi, p_xi)?)], grid, None)
}

/// Several `x`-independent symbols, optionally with polynomial sectors below `gamma_cut`.
pub fn noise_model_mixed(
    symbols: Vec<(String, GridField, RIIndex)>,
    grid: &Grid,
    gamma_cut: Option<f64>,
) -> Result<(RIStructure, Model)> {
    let mut entries: Vec<(Symbol, RIIndex, Realization)> =
        symbols.into_iter().map(|(n, f, a)| (Symbol::noise(n), a, Realization::Field(f))).collect();
    if let Some(cut) = gamma_cut {
        let poly = RIStructure::polynomial(grid.scaling(), cut)?;
        for sec in poly.sectors() {
            for sym in &sec.basis {
                if let SymbolKind::Monomial(k) = &sym.kind {
                    entries.push((sym.clone(), sec.index, Realization::Monomial(k.clone())));
                }
            }
        }
    }
    let model = Model::assemble(grid, entries)?;
    Ok((model.structure.clone(), model))
}

fn ell(grid: &Grid) -> f64 {
    grid.scaling().ell()
}

fn check_same(m1: &Model, m2: &Model) -> Result<()> {
    if m1.structure != m2.structure || m1.grid != m2.grid {
        return Err(Error::structural("models live on different structures or grids"));
    }
    Ok(())
}

fn pi_norm_core(
    m: &Model,
    c: &RIIndex,
    measure: &Measure,
    times: &DyadicTimes,
    pairings: impl Fn(f64) -> Result<Vec<GridField>>,
) -> Result<f64> {
    let s = &m.structure;
    let below = s.below(c);
    let mut best = 0.0f64;
    for t in times.times() {
        let g = pairings(t)?;
        for &a in &below {
            let idx = s.sectors()[a].index;
            let range = s.range(a);
            let vals: Vec<f64> =
                (0..m.grid.len()).map(|x| range.clone().map(|j| g[j].values()[x].abs()).fold(0.0, f64::max)).collect();
            let n = measure.norm_values(&m.grid, &vals, idx.i)?;
            best = best.max(t.powf(-idx.r / ell(&m.grid)) * n);
        }
    }
    Ok(best)
}

/// `||Pi||_{c,w}`: max over `a < c` and dyadic `t` of `t^{-r(a)/ell} || max_tau |Q_t(x, Pi_x tau)| ||_{L^{i(a)}}`.
pub fn model_pi_norm(m: &Model, c: &RIIndex, measure: &Measure, q: &Semigroup, times: &DyadicTimes) -> Result<f64> {
    let zero = vec![0; m.grid.dim()];
    pi_norm_core(m, c, measure, times, |t| m.pairings(q, t, &zero))
}

fn gamma_norm_core(
    m: &Model,
    c: &RIIndex,
    measure: &Measure,
    shifts: &[Vec<i64>],
    gamma: impl Fn(usize, usize) -> Matrix,
) -> Result<f64> {
    let s = &m.structure;
    let grid = &m.grid;
    let below = s.below(c);
    let mut pairs = Vec::new();
    for &a in &below {
        for &b in &below {
            if s.sectors()[b].index.prec(&s.sectors()[a].index) {
                pairs.push((a, b));
            }
        }
    }
    let mut best = 0.0f64;
    for shift in shifts {
        if shift.iter().all(|&v| v == 0) {
            return Err(Error::domain("gamma norm needs nonzero shifts"));
        }
        let hv = grid.shift_vector(shift);
        let hnorm = norm_unchecked(&hv, grid.scaling().s());
        let valid: Vec<Option<usize>> = (0..grid.len()).map(|x| grid.shifted(x, shift)).collect();
        let mats: Vec<Option<Matrix>> = valid.iter().enumerate().map(|(x, xh)| xh.map(|xh| gamma(xh, x))).collect();
        for &(a, b) in &pairs {
            let ia = s.sectors()[a].index;
            let ib = s.sectors()[b].index;
            let ab = ia.ominus(&ib)?;
            let vals: Vec<f64> = mats
                .iter()
                .map(|mm| mm.as_ref().map_or(0.0, |mm| mm.block_norm(s.range(b), s.range(a))))
                .collect();
            let n = measure.norm_where(grid, &vals, ab.i, |x| valid[x].is_some())?;
            best = best.max(n / (measure.weight.star(&hv) * hnorm.powf(ab.r)));
        }
    }
    Ok(best)
}

/// `||Gamma||_{c,w}` over `b < a < c` and the given shifts.
pub fn model_gamma_norm(m: &Model, c: &RIIndex, measure: &Measure, shifts: &[Vec<i64>]) -> Result<f64> {
    gamma_norm_core(m, c, measure, shifts, |x, y| m.gamma(x, y))
}

/// `||Pi1 - Pi2||_{c,w} + ||Gamma1 - Gamma2||_{c,w}`.
pub fn model_distance(
    m1: &Model,
    m2: &Model,
    c: &RIIndex,
    measure: &Measure,
    q: &Semigroup,
    times: &DyadicTimes,
    shifts: &[Vec<i64>],
) -> Result<f64> {
    check_same(m1, m2)?;
    let zero = vec![0; m1.grid.dim()];
    let pi = pi_norm_core(m1, c, measure, times, |t| {
        let a = m1.pairings(q, t, &zero)?;
        let b = m2.pairings(q, t, &zero)?;
        a.iter().zip(&b).map(|(a, b)| a.sub(b)).collect()
    })?;
    let gamma = gamma_norm_core(m1, c, measure, shifts, |x, y| m1.gamma(x, y).sub(&m2.gamma(x, y)))?;
    Ok(pi + gamma)
}

/// Sampled residuals of the algebraic model conditions.
#[derive(Clone, Debug)]
pub struct AlgebraReport {
    /// `max |Gamma_xx - id|`.
    pub identity: f64,
    /// `max |Gamma_xy Gamma_yz - Gamma_xz|`.
    pub composition: f64,
    /// `max |Pi_x Gamma_xy e_j - Pi_y e_j|` over the measure window, relative to `max |Pi_y e_j|`.
    pub realization: f64,
    /// Same after smoothing both sides with `Q_t`.
    pub smoothed_realization: f64,
    /// `(Gamma - id)` maps each sector only into strictly lower sectors.
    pub triangular: bool,
}

/// Checks the algebraic conditions on sampled `(x, y, z)` node triples.
pub fn check_model_algebra(
    m: &Model,
    triples: &[(usize, usize, usize)],
    q: &Semigroup,
    t: f64,
    measure: &Measure,
) -> Result<AlgebraReport> {
    let s = &m.structure;
    let n = m.dim();
    let mut rep = AlgebraReport { identity: 0.0, composition: 0.0, realization: 0.0, smoothed_realization: 0.0, triangular: true };
    for &(x, y, z) in triples {
        rep.identity = rep.identity.max(m.gamma(x, x).sub(&Matrix::identity(n)).max_abs());
        let lhs = m.gamma(x, y).mul(&m.gamma(y, z));
        rep.composition = rep.composition.max(lhs.sub(&m.gamma(x, z)).max_abs());
        let gxy = m.gamma(x, y);
        let off = gxy.sub(&Matrix::identity(n));
        for col in 0..n {
            for row in 0..n {
                if off.get(row, col) != 0.0 {
                    let a = s.sectors()[s.sector_of(col)].index;
                    let b = s.sectors()[s.sector_of(row)].index;
                    if !b.prec(&a) {
                        rep.triangular = false;
                    }
                }
            }
            let mut e = vec![0.0; n];
            e[col] = 1.0;
            let left = m.realize(x, &gxy.apply(&e));
            let right = m.realize(y, &e);
            let diff = left.sub(&right)?;
            let scale = measure.norm(&right, f64::INFINITY)?.max(1e-300);
            rep.realization = rep.realization.max(measure.norm(&diff, f64::INFINITY)? / scale);
            let qd = q.apply(t, &diff)?;
            let qs = measure.norm(&q.apply(t, &right)?, f64::INFINITY)?.max(1e-300);
            rep.smoothed_realization = rep.smoothed_realization.max(measure.norm(&qd, f64::INFINITY)? / qs);
        }
    }
    Ok(rep)
}

/// Coefficient fields of a function `x -> T_{<c}`, one per global coordinate.
#[derive(Clone, Debug)]
pub struct ModelledDistribution {
    c: RIIndex,
    coeffs: Vec<GridField>,
}

impl ModelledDistribution {
    /// Rejects non-finite coefficients and support on sectors not below `c`.
    pub fn new(structure: &RIStructure, c: RIIndex, coeffs: Vec<GridField>) -> Result<Self> {
        if coeffs.len() != structure.dim() {
            return Err(Error::Dimension { expected: structure.dim(), got: coeffs.len() });
        }
        if let Some(first) = coeffs.first() {
            if coeffs.iter().any(|f| f.grid() != first.grid()) {
                return Err(Error::structural("coefficient fields live on different grids"));
            }
        }
        for (j, f) in coeffs.iter().enumerate() {
            if f.values().iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!("coefficient {j} is not finite")));
            }
            let a = structure.sectors()[structure.sector_of(j)].index;
            if !a.prec(&c) && !f.is_zero() {
                return Err(Error::structural(format!("coefficient on sector {a} which is not below {c}")));
            }
        }
        Ok(ModelledDistribution { c, coeffs })
    }

    pub fn zero(structure: &RIStructure, grid: &Grid, c: RIIndex) -> Self {
        ModelledDistribution { c, coeffs: vec![GridField::zeros(grid); structure.dim()] }
    }

    /// `f(x) = value * tau` for the named symbol.
    pub fn constant(structure: &RIStructure, grid: &Grid, c: RIIndex, name: &str, value: f64) -> Result<Self> {
        let j = structure.find(name).ok_or_else(|| Error::structural(format!("no symbol named {name}")))?;
        let mut coeffs = vec![GridField::zeros(grid); structure.dim()];
        coeffs[j] = GridField::constant(grid, value);
        ModelledDistribution::new(structure, c, coeffs)
    }

    /// `f(x) = sum_{X^k < c} d^k F(x) / k! X^k`.
    pub fn taylor_lift(structure: &RIStructure, c: RIIndex, jet: &crate::besov::Jet) -> Result<Self> {
        let grid = jet.get(&vec![0; structure_dim_hint(jet)])?.grid().clone();
        let mut coeffs = vec![GridField::zeros(&grid); structure.dim()];
        for (j, sym) in structure.symbols().iter().enumerate() {
            if let SymbolKind::Monomial(k) = &sym.kind {
                if structure.sectors()[structure.sector_of(j)].index.prec(&c) {
                    coeffs[j] = jet.get(k)?.scale(1.0 / factorial(k));
                }
            }
        }
        ModelledDistribution::new(structure, c, coeffs)
    }

    pub fn c(&self) -> RIIndex {
        self.c
    }

    pub fn coeffs(&self) -> &[GridField] {
        &self.coeffs
    }

    pub fn grid(&self) -> &Grid {
        self.coeffs[0].grid()
    }

    /// Coefficient vector at node `x`.
    pub fn at(&self, x: usize) -> Vec<f64> {
        self.coeffs.iter().map(|f| f.values()[x]).collect()
    }

    pub fn add(&self, other: &ModelledDistribution) -> Result<Self> {
        if self.c != other.c || self.coeffs.len() != other.coeffs.len() {
            return Err(Error::structural("modelled distributions differ in target index or structure"));
        }
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a.add(b)).collect::<Result<_>>()?;
        Ok(ModelledDistribution { c: self.c, coeffs })
    }

    pub fn scale(&self, s: f64) -> Self {
        ModelledDistribution { c: self.c, coeffs: self.coeffs.iter().map(|f| f.scale(s)).collect() }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|f| f.is_zero())
    }

    /// `y -> sum_j f_j(y) g_j(y)` for pairing fields `g_j`.
    pub fn pair_diag(&self, g: &[GridField]) -> GridField {
        pair_coeffs(&self.coeffs, g)
    }

    /// `Delta_{x;h} f = f(x - h) - Gamma_{(x-h)x} f(x)`; `None` where `x - h` is off the grid.
    pub fn delta_gamma(&self, m: &Model, shift: &[i64]) -> Vec<Option<Vec<f64>>> {
        let grid = m.grid();
        let neg: Vec<i64> = shift.iter().map(|v| -v).collect();
        (0..grid.len())
            .map(|x| {
                grid.shifted(x, &neg).map(|xh| {
                    let moved = m.gamma(xh, x).apply(&self.at(x));
                    self.at(xh).iter().zip(&moved).map(|(a, b)| a - b).collect()
                })
            })
            .collect()
    }
}

fn structure_dim_hint(jet: &crate::besov::Jet) -> usize {
    jet.fields.keys().next().map_or(1, |k| k.len())
}

pub(crate) fn pair_coeffs(coeffs: &[GridField], g: &[GridField]) -> GridField {
    let grid = coeffs[0].grid();
    let mut out = vec![0.0; grid.len()];
    for (f, gj) in coeffs.iter().zip(g) {
        if f.is_zero() {
            continue;
        }
        for ((o, a), b) in out.iter_mut().zip(f.values()).zip(gj.values()) {
            *o += a * b;
        }
    }
    GridField::from_raw(grid, out, crate::grid::FieldKind::Function)
}

/// Per-sector data behind `md_norms`.
#[derive(Clone, Debug)]
pub struct SectorSeries {
    pub sector: RIIndex,
    /// `c (-) a`: the integrability of the norm and the Holder exponent.
    pub gap: RIIndex,
    pub local: f64,
    /// `(||h||_s, ||Delta_{x;h} f||_{L^{i(c-a)}(v; T_a)})`.
    pub increments: Vec<(f64, f64)>,
}

#[derive(Clone, Debug)]
pub struct MdNorms {
    pub local: f64,
    pub holder: f64,
    pub sectors: Vec<SectorSeries>,
    /// Shifts that were zero or left the grid.
    pub skipped: Vec<Vec<i64>>,
}

/// Local and `Gamma`-Holder norms of a modelled distribution.
pub fn md_norms(f: &ModelledDistribution, m: &Model, measure: &Measure, shifts: &[Vec<i64>]) -> Result<MdNorms> {
    let s = m.structure();
    let grid = m.grid();
    let c = f.c();
    let below = s.below(&c);
    let mut out = MdNorms { local: 0.0, holder: 0.0, sectors: Vec::new(), skipped: Vec::new() };
    for &a in &below {
        let ia = s.sectors()[a].index;
        let gap = c.ominus(&ia)?;
        let vals: Vec<f64> = (0..grid.len()).map(|x| s.range(a).map(|j| f.coeffs[j].values()[x].abs()).sum()).collect();
        let local = measure.norm_values(grid, &vals, gap.i)?;
        out.local = out.local.max(local);
        out.sectors.push(SectorSeries { sector: ia, gap, local, increments: Vec::new() });
    }
    let n = grid.points_per_axis() as i64;
    for shift in shifts {
        if shift.iter().all(|&v| v == 0) || shift.iter().any(|v| v.abs() >= n) {
            out.skipped.push(shift.clone());
            continue;
        }
        let hv = grid.shift_vector(shift);
        let hnorm = norm_unchecked(&hv, grid.scaling().s());
        let delta = f.delta_gamma(m, shift);
        for (series, &a) in out.sectors.iter_mut().zip(&below) {
            let vals: Vec<f64> =
                delta.iter().map(|d| d.as_ref().map_or(0.0, |d| s.range(a).map(|j| d[j].abs()).sum())).collect();
            let norm = measure.norm_where(grid, &vals, series.gap.i, |x| delta[x].is_some())?;
            series.increments.push((hnorm, norm));
            out.holder = out.holder.max(norm / (measure.weight.star(&hv) * hnorm.powf(series.gap.r)));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::besov::{shift_ladder, Jet};
    use crate::geometry::Scaling;
    use crate::grid::Window;

    fn grid() -> Grid {
        Grid::new(1, 8.0, 256, Scaling::isotropic(1)).unwrap()
    }

    #[test]
    fn polynomial_gamma_is_binomial() {
        let g = grid();
        let (s, m) = polynomial_model(3.0, &g).unwrap();
        let (x, y) = (100, 140);
        let yx = g.coord(y) - g.coord(x);
        let gm = m.gamma(y, x);
        let c2 = s.monomial_coord(&[2]).unwrap();
        let c1 = s.monomial_coord(&[1]).unwrap();
        let c0 = s.monomial_coord(&[0]).unwrap();
        assert_eq!(gm.get(c2, c2), 1.0);
        assert!((gm.get(c1, c2) - 2.0 * yx).abs() < 1e-14);
        assert!((gm.get(c0, c2) - yx * yx).abs() < 1e-14);
        assert_eq!(gm.get(c0, c0), 1.0);
        assert_eq!(gm.get(c1, c0), 0.0);
    }

    #[test]
    fn polynomial_algebra_exact() {
        let g = grid();
        let (_, m) = polynomial_model(3.0, &g).unwrap();
        let q = Semigroup::heat(&g).unwrap();
        let meas = Measure::new(crate::geometry::Weight::flat(), Window::interior(4.0));
        let rep = check_model_algebra(&m, &[(120, 130, 140), (128, 100, 150)], &q, 0.1, &meas).unwrap();
        assert_eq!(rep.identity, 0.0);
        assert!(rep.composition < 1e-12);
        assert!(rep.realization < 1e-12);
        assert!(rep.smoothed_realization < 1e-8);
        assert!(rep.triangular);
    }

    #[test]
    fn polynomial_pi_norm_sector_values() {
        let g = grid();
        let (_, m) = polynomial_model(2.0, &g).unwrap();
        let q = Semigroup::heat(&g).unwrap();
        let meas = Measure::new(crate::geometry::Weight::flat(), Window::interior(4.0));
        let times = DyadicTimes::new(6);
        let only_one = model_pi_norm(&m, &RIIndex::smooth(0.5), &meas, &q, &times).unwrap();
        assert!((only_one - 1.0).abs() < 1e-8);
        let pairs = m.pairings(&q, 0.25, &[0]).unwrap();
        assert!(meas.norm(&pairs[1], f64::INFINITY).unwrap() < 1e-12);
    }

    #[test]
    fn polynomial_gamma_ratio_is_one() {
        let g = grid();
        let (_, m) = polynomial_model(2.0, &g).unwrap();
        let meas = Measure::new(crate::geometry::Weight::flat(), Window::interior(4.0));
        let v = model_gamma_norm(&m, &RIIndex::smooth(2.0), &meas, &shift_ladder(&g, 0, 5)).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noise_model_identity_gamma() {
        let g = grid();
        let xi = GridField::white_noise(&g, 3, 8.0);
        let (s, m) = noise_model(&xi, -0.55, f64::INFINITY, &g).unwrap();
        assert_eq!(m.gamma(10, 200), Matrix::identity(1));
        let meas = Measure::new(crate::geometry::Weight::flat(), Window::interior(4.0));
        let c = RIIndex::smooth(1.0);
        assert_eq!(model_gamma_norm(&m, &c, &meas, &shift_ladder(&g, 0, 4)).unwrap(), 0.0);
        let q = Semigroup::heat(&g).unwrap();
        let v = model_pi_norm(&m, &c, &meas, &q, &DyadicTimes::new(8)).unwrap();
        assert!(v.is_finite() && v > 0.0);
        let f = ModelledDistribution::constant(&s, &g, c, "Xi", 1.0).unwrap();
        let n = md_norms(&f, &m, &meas, &shift_ladder(&g, 0, 4)).unwrap();
        assert_eq!(n.holder, 0.0);
        assert_eq!(n.local, 1.0);
    }

    #[test]
    fn distance_properties() {
        let g = grid();
        let xi = GridField::white_noise(&g, 3, 8.0);
        let eta = GridField::white_noise(&g, 4, 8.0);
        let eps = 0.01;
        let (_, m1) = noise_model(&xi, -0.55, f64::INFINITY, &g).unwrap();
        let (_, m2) = noise_model(&xi.add(&eta.scale(eps)).unwrap(), -0.55, f64::INFINITY, &g).unwrap();
        let (_, me) = noise_model(&eta, -0.55, f64::INFINITY, &g).unwrap();
        let q = Semigroup::heat(&g).unwrap();
        let meas = Measure::new(crate::geometry::Weight::flat(), Window::interior(4.0));
        let c = RIIndex::smooth(1.0);
        let t = DyadicTimes::new(8);
        let sh = shift_ladder(&g, 0, 4);
        assert_eq!(model_distance(&m1, &m1, &c, &meas, &q, &t, &sh).unwrap(), 0.0);
        let d12 = model_distance(&m1, &m2, &c, &meas, &q, &t, &sh).unwrap();
        let d21 = model_distance(&m2, &m1, &c, &meas, &q, &t, &sh).unwrap();
        assert!((d12 - d21).abs() < 1e-12 * d12);
        let pe = model_pi_norm(&me, &c, &meas, &q, &t).unwrap();
        assert!(d12 <= eps * pe * (1.0 + 1e-9));
        let (_, other) = polynomial_model(1.0, &g).unwrap();
        assert!(model_distance(&m1, &other, &c, &meas, &q, &t, &sh).is_err());
    }

    #[test]
    fn taylor_lift_of_sine() {
        let g = Grid::new(1, 8.0, 1024, Scaling::isotropic(1)).unwrap();
        let (s, m) = polynomial_model(2.0, &g).unwrap();
        let mut jet = Jet::new();
        jet.insert(vec![0], GridField::from_fn(&g, |x| x[0].sin()));
        jet.insert(vec![1], GridField::from_fn(&g, |x| x[0].cos()));
        let f = ModelledDistribution::taylor_lift(&s, RIIndex::smooth(2.0), &jet).unwrap();
        let meas = Measure::new(crate::geometry::Weight::flat(), Window::interior(4.0));
        let n = md_norms(&f, &m, &meas, &shift_ladder(&g, 0, 8)).unwrap();
        // The X sector dominates: |cos(x - h) - cos x| / h <= sup |sin| = 1.
        assert!(n.holder <= 1.0 + 1e-9 && n.holder > 0.95, "{}", n.holder);
        let zero_sector = &n.sectors[0];
        let (h, v) = zero_sector.increments[zero_sector.increments.len() - 1];
        assert!(v / (h * h) <= 0.5 + 1e-9 && v / (h * h) > 0.45);
        assert!((n.local - 1.0).abs() < 1e-3);
        let z = ModelledDistribution::zero(&s, &g, RIIndex::smooth(2.0));
        let nz = md_norms(&z, &m, &meas, &shift_ladder(&g, 0, 8)).unwrap();
        assert_eq!((nz.local, nz.holder), (0.0, 0.0));
        let skipped = md_norms(&z, &m, &meas, &[vec![0], vec![2000]]).unwrap();
        assert_eq!(skipped.skipped.len(), 2);
    }

    #[test]
    fn support_outside_target_rejected() {
        let g = grid();
        let (s, _) = polynomial_model(3.0, &g).unwrap();
        let mut coeffs = vec![GridField::zeros(&g); 3];
        coeffs[2] = GridField::constant(&g, 1.0);
        assert!(ModelledDistribution::new(&s, RIIndex::smooth(2.0), coeffs.clone()).is_err());
        assert!(ModelledDistribution::new(&s, RIIndex::smooth(2.5), coeffs).is_ok());
    }

    #[test]
    fn recentred_realization_is_consistent() {
        let g = grid();
        let q = Semigroup::heat(&g).unwrap();
        let base = GridField::from_fn(&g, |x| (0.7 * x[0]).sin());
        let c0 = base.clone();
        let c1 = GridField::from_fn(&g, |x| 0.7 * (0.7 * x[0]).cos());
        let mut entries = vec![(
            Symbol::integrated("Xi"),
            RIIndex::smooth(1.45),
            Realization::Recentred { base, jet: vec![(vec![0], c0), (vec![1], c1)] },
        )];
        for k in 0..2usize {
            entries.push((Symbol::monomial(&[k]), RIIndex::smooth(k as f64), Realization::Monomial(vec![k])));
        }
        let m = Model::assemble(&g, entries).unwrap();
        let meas = Measure::new(crate::geometry::Weight::flat(), Window::interior(4.0));
        let rep = check_model_algebra(&m, &[(120, 130, 140), (128, 100, 150)], &q, 0.1, &meas).unwrap();
        assert!(rep.composition < 1e-12 && rep.realization < 1e-12 && rep.triangular);
    }

    #[test]
    fn lower_multi_enumerates() {
        assert_eq!(lower_multi(&[1, 2]).len(), 6);
        assert_eq!(lower_multi(&[0]), vec![vec![0]]);
    }
}
