//! Uniform truncated grids on `[-L, L]^d`, sampled fields, and weighted `L^p` norms.
//!
//! Node `i` along an axis sits at `-L + i h` with `h = 2L/N`, so the origin is a
//! node when `N` is even. Integrals are midpoint Riemann sums over these nodes.

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geometry::{Scaling, Weight};

#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    d: usize,
    l: f64,
    n: usize,
    h: f64,
    scaling: Scaling,
}

impl Grid {
    pub fn new(d: usize, l: f64, n: usize, scaling: Scaling) -> Result<Self> {
        if d == 0 {
            return Err(Error::domain("grid dimension must be positive"));
        }
        if scaling.dim() != d {
            return Err(Error::Dimension { expected: d, got: scaling.dim() });
        }
        if n < 8 {
            return Err(Error::domain(format!("need at least 8 points per axis, got {n}")));
        }
        if !(l > 0.0) || !l.is_finite() {
            return Err(Error::domain(format!("half-width L must be positive, got {l}")));
        }
        Ok(Grid { d, l, n, h: 2.0 * l / n as f64, scaling })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn half_width(&self) -> f64 {
        self.l
    }

    pub fn points_per_axis(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn scaling(&self) -> &Scaling {
        &self.scaling
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.d as i32)
    }

    pub fn coord(&self, i: usize) -> f64 {
        -self.l + i as f64 * self.h
    }

    /// Index of the node nearest to `x` along one axis, if inside the grid.
    pub fn axis_index(&self, x: f64) -> Option<usize> {
        let r = ((x + self.l) / self.h).round();
        if r < 0.0 || r >= self.n as f64 {
            None
        } else {
            Some(r as usize)
        }
    }

    /// Flat index of the node at the origin.
    pub fn origin(&self) -> usize {
        self.flat(&vec![self.n / 2; self.d])
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.n.pow((self.d - 1 - axis) as u32)
    }

    pub fn flat(&self, multi: &[usize]) -> usize {
        multi.iter().fold(0, |acc, &i| acc * self.n + i)
    }

    pub fn multi(&self, mut flat: usize) -> Vec<usize> {
        let mut m = vec![0; self.d];
        for axis in (0..self.d).rev() {
            m[axis] = flat % self.n;
            flat /= self.n;
        }
        m
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.multi(flat).into_iter().map(|i| self.coord(i)).collect()
    }

    /// Flat index of `flat` moved by `shift` lattice steps, if it stays on the grid.
    pub fn shifted(&self, flat: usize, shift: &[i64]) -> Option<usize> {
        let m = self.multi(flat);
        let mut out = 0usize;
        for (axis, (&i, &s)) in m.iter().zip(shift).enumerate() {
            let j = i as i64 + s;
            if j < 0 || j >= self.n as i64 {
                return None;
            }
            out += j as usize * self.stride(axis);
        }
        Some(out)
    }

    /// Converts a physical shift into lattice steps; errors unless every component is a multiple of `h`.
    pub fn lattice_shift(&self, shift: &[f64]) -> Result<Vec<i64>> {
        if shift.len() != self.d {
            return Err(Error::Dimension { expected: self.d, got: shift.len() });
        }
        shift
            .iter()
            .map(|&s| {
                let k = s / self.h;
                if (k - k.round()).abs() > 1e-9 * k.abs().max(1.0) {
                    Err(Error::domain(format!("shift {s} is not a multiple of h = {}", self.h)))
                } else {
                    Ok(k.round() as i64)
                }
            })
            .collect()
    }

    pub fn shift_vector(&self, shift: &[i64]) -> Vec<f64> {
        shift.iter().map(|&k| k as f64 * self.h).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldKind {
    Function,
    DistributionSample,
}

impl FieldKind {
    fn tag(self) -> &'static str {
        match self {
            FieldKind::Function => "function",
            FieldKind::DistributionSample => "distribution-sample",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    grid: Grid,
    values: Vec<f64>,
    kind: FieldKind,
}

impl GridField {
    pub fn new(grid: Grid, values: Vec<f64>, kind: FieldKind) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Dimension { expected: grid.len(), got: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("field contains non-finite values".into()));
        }
        Ok(GridField { grid, values, kind })
    }

    pub(crate) fn from_raw(grid: &Grid, values: Vec<f64>, kind: FieldKind) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        GridField { grid: grid.clone(), values, kind }
    }

    pub fn zeros(grid: &Grid) -> Self {
        GridField { grid: grid.clone(), values: vec![0.0; grid.len()], kind: FieldKind::Function }
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        GridField { grid: grid.clone(), values: vec![c; grid.len()], kind: FieldKind::Function }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.point(i))).collect();
        GridField { grid: grid.clone(), values, kind: FieldKind::Function }
    }

    /// Discrete delta: `1/h^d` at node `at`, zero elsewhere.
    pub fn delta(grid: &Grid, at: usize) -> Self {
        let mut values = vec![0.0; grid.len()];
        values[at] = 1.0 / grid.cell_volume();
        GridField { grid: grid.clone(), values, kind: FieldKind::DistributionSample }
    }

    /// Independent `N(0, 1/h^d)` samples on the nodes with `|x_i| <= radius`, zero elsewhere.
    pub fn white_noise(grid: &Grid, seed: u64, radius: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, grid.cell_volume().powf(-0.5)).expect("positive variance");
        let values = (0..grid.len())
            .map(|i| {
                let v = normal.sample(&mut rng);
                if grid.point(i).iter().all(|x| x.abs() <= radius + 1e-12) {
                    v
                } else {
                    0.0
                }
            })
            .collect();
        GridField { grid: grid.clone(), values, kind: FieldKind::DistributionSample }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn with_kind(mut self, kind: FieldKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    fn check_same_grid(&self, other: &GridField) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::structural("fields live on different grids"));
        }
        Ok(())
    }

    pub fn add(&self, other: &GridField) -> Result<GridField> {
        self.check_same_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Ok(GridField { grid: self.grid.clone(), values, kind: self.kind })
    }

    pub fn sub(&self, other: &GridField) -> Result<GridField> {
        self.check_same_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(GridField { grid: self.grid.clone(), values, kind: self.kind })
    }

    pub fn mul(&self, other: &GridField) -> Result<GridField> {
        self.check_same_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect();
        Ok(GridField { grid: self.grid.clone(), values, kind: self.kind })
    }

    pub fn scale(&self, c: f64) -> GridField {
        GridField { grid: self.grid.clone(), values: self.values.iter().map(|v| c * v).collect(), kind: self.kind }
    }

    /// `self += c * other`.
    pub fn axpy(&mut self, c: f64, other: &GridField) -> Result<()> {
        self.check_same_grid(other)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += c * b;
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridField {
        GridField { grid: self.grid.clone(), values: self.values.iter().map(|&v| f(v)).collect(), kind: self.kind }
    }

    /// Writes the field as CSV with a `#` header recording d, L, N and the scaling.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let g = &self.grid;
        let s: Vec<String> = g.scaling.s().iter().map(|v| format!("{v}")).collect();
        let mut out = format!(
            "# d={} L={} N={} s={} ell={} kind={}\nindex,value\n",
            g.d,
            g.l,
            g.n,
            s.join(":"),
            g.scaling.ell(),
            self.kind.tag()
        );
        for (i, v) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{i},{v:e}");
        }
        out
    }

    pub fn read_csv(path: &Path) -> Result<GridField> {
        let text = std::fs::read_to_string(path)?;
        GridField::from_csv(&text)
    }

    pub fn from_csv(text: &str) -> Result<GridField> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::structural("empty field file"))?;
        let header = header.strip_prefix('#').ok_or_else(|| Error::structural("missing field header"))?;
        let mut d = None;
        let mut l = None;
        let mut n = None;
        let mut s = None;
        let mut ell = None;
        let mut kind = FieldKind::Function;
        for tok in header.split_whitespace() {
            let (k, v) = tok.split_once('=').ok_or_else(|| Error::structural(format!("bad header token {tok}")))?;
            let bad = |_| Error::structural(format!("bad header value {tok}"));
            match k {
                "d" => d = Some(v.parse::<usize>().map_err(|e| bad(e.to_string()))?),
                "L" => l = Some(v.parse::<f64>().map_err(|e| bad(e.to_string()))?),
                "N" => n = Some(v.parse::<usize>().map_err(|e| bad(e.to_string()))?),
                "ell" => ell = Some(v.parse::<f64>().map_err(|e| bad(e.to_string()))?),
                "s" => {
                    s = Some(
                        v.split(':')
                            .map(|x| x.parse::<f64>())
                            .collect::<std::result::Result<Vec<_>, _>>()
                            .map_err(|e| bad(e.to_string()))?,
                    )
                }
                "kind" => {
                    kind = match v {
                        "function" => FieldKind::Function,
                        "distribution-sample" => FieldKind::DistributionSample,
                        _ => return Err(Error::structural(format!("unknown field kind {v}"))),
                    }
                }
                _ => {}
            }
        }
        let missing = |what: &str| Error::structural(format!("field header lacks {what}"));
        let scaling = Scaling::new(s.ok_or_else(|| missing("s"))?, ell.ok_or_else(|| missing("ell"))?)?;
        let grid = Grid::new(
            d.ok_or_else(|| missing("d"))?,
            l.ok_or_else(|| missing("L"))?,
            n.ok_or_else(|| missing("N"))?,
            scaling,
        )?;
        let mut values = vec![0.0; grid.len()];
        let mut seen = 0usize;
        for line in lines {
            if line.starts_with("index") || line.trim().is_empty() {
                continue;
            }
            let (i, v) = line.split_once(',').ok_or_else(|| Error::structural(format!("bad row {line}")))?;
            let i: usize = i.trim().parse().map_err(|_| Error::structural(format!("bad index in {line}")))?;
            let v: f64 = v.trim().parse().map_err(|_| Error::structural(format!("bad value in {line}")))?;
            *values.get_mut(i).ok_or_else(|| Error::structural(format!("index {i} out of range")))? = v;
            seen += 1;
        }
        if seen != grid.len() {
            return Err(Error::structural(format!("expected {} rows, found {seen}", grid.len())));
        }
        GridField::new(grid, values, kind)
    }
}

/// Restricts norm evaluation to nodes at distance at least `margin` from the box boundary.
///
/// Zero padding makes every convolution wrong within a few kernel widths of
/// `|x_i| = L`; diagnostics look only at the interior.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Window {
    margin: f64,
}

impl Window {
    pub fn full() -> Self {
        Window { margin: 0.0 }
    }

    pub fn interior(margin: f64) -> Self {
        Window { margin: margin.max(0.0) }
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    pub fn contains(&self, grid: &Grid, flat: usize) -> bool {
        if self.margin == 0.0 {
            return true;
        }
        let lim = grid.half_width() - self.margin + 1e-12;
        grid.multi(flat).into_iter().all(|i| grid.coord(i).abs() <= lim)
    }
}

/// A weight together with the evaluation window; the `L^p(w)` measure of every diagnostic.
#[derive(Clone, Debug)]
pub struct Measure {
    pub weight: Weight,
    pub window: Window,
}

impl Measure {
    pub fn new(weight: Weight, window: Window) -> Self {
        Measure { weight, window }
    }

    pub fn flat() -> Self {
        Measure { weight: Weight::flat(), window: Window::full() }
    }

    pub fn product(&self, other: &Measure) -> Measure {
        Measure {
            weight: self.weight.product(&other.weight),
            window: Window::interior(self.window.margin.max(other.window.margin)),
        }
    }

    pub fn norm(&self, f: &GridField, p: f64) -> Result<f64> {
        masked_norm(f.grid(), f.values(), p, &self.weight, |i| self.window.contains(f.grid(), i))
    }

    pub fn norm_values(&self, grid: &Grid, values: &[f64], p: f64) -> Result<f64> {
        masked_norm(grid, values, p, &self.weight, |i| self.window.contains(grid, i))
    }

    /// Norm over window nodes that also satisfy `keep`.
    pub fn norm_where(&self, grid: &Grid, values: &[f64], p: f64, keep: impl Fn(usize) -> bool) -> Result<f64> {
        masked_norm(grid, values, p, &self.weight, |i| self.window.contains(grid, i) && keep(i))
    }
}

pub(crate) fn check_exponent(p: f64) -> Result<()> {
    if !(p >= 1.0) {
        return Err(Error::domain(format!("integrability exponent must lie in [1, inf], got {p}")));
    }
    Ok(())
}

pub(crate) fn masked_norm(
    grid: &Grid,
    values: &[f64],
    p: f64,
    w: &Weight,
    keep: impl Fn(usize) -> bool,
) -> Result<f64> {
    check_exponent(p)?;
    let vol = grid.cell_volume();
    let flat = w.is_flat();
    let mut acc = 0.0f64;
    for (i, &v) in values.iter().enumerate() {
        if v == 0.0 || !keep(i) {
            continue;
        }
        let wv = if flat { v.abs() } else { (v * w.eval(&grid.point(i))).abs() };
        if p.is_infinite() {
            acc = acc.max(wv);
        } else if p == 1.0 {
            acc += wv * vol;
        } else if p == 2.0 {
            acc += wv * wv * vol;
        } else {
            acc += wv.powf(p) * vol;
        }
    }
    Ok(if p.is_infinite() || p == 1.0 {
        acc
    } else if p == 2.0 {
        acc.sqrt()
    } else {
        acc.powf(1.0 / p)
    })
}

/// `||f||_{L^p(w)}` over every grid node.
pub fn weighted_lp_norm(f: &GridField, p: f64, w: &Weight) -> Result<f64> {
    masked_norm(f.grid(), f.values(), p, w, |_| true)
}

/// `f(. - shift h)` with zero fill.
pub fn translate(f: &GridField, shift: &[i64]) -> Result<GridField> {
    let grid = f.grid();
    if shift.len() != grid.dim() {
        return Err(Error::Dimension { expected: grid.dim(), got: shift.len() });
    }
    let neg: Vec<i64> = shift.iter().map(|s| -s).collect();
    let values = (0..grid.len())
        .map(|i| grid.shifted(i, &neg).map_or(0.0, |j| f.values()[j]))
        .collect();
    Ok(GridField::from_raw(grid, values, f.kind()))
}

/// Translation by a physical vector; errors unless it is a lattice vector.
pub fn translate_by(f: &GridField, shift: &[f64]) -> Result<GridField> {
    let k = f.grid().lattice_shift(shift)?;
    translate(f, &k)
}

#[derive(Clone, Debug)]
pub struct HolderReport {
    pub r: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Checks `||fg||_{L^r(w1 w2)} <= ||f||_{L^p(w1)} ||g||_{L^q(w2)}` with `1/r = 1/p + 1/q`.
pub fn holder_product_check(
    f: &GridField,
    g: &GridField,
    p: f64,
    q: f64,
    w1: &Weight,
    w2: &Weight,
) -> Result<HolderReport> {
    check_exponent(p)?;
    check_exponent(q)?;
    let inv_r = 1.0 / p + 1.0 / q;
    if inv_r > 1.0 + 1e-12 {
        return Err(Error::domain(format!("1/p + 1/q = {inv_r} exceeds 1, so r < 1")));
    }
    let r = if inv_r == 0.0 { f64::INFINITY } else { 1.0 / inv_r };
    let fg = f.mul(g)?;
    let lhs = weighted_lp_norm(&fg, r, &w1.product(w2))?;
    let rhs = weighted_lp_norm(f, p, w1)? * weighted_lp_norm(g, q, w2)?;
    Ok(HolderReport { r, lhs, rhs, holds: lhs <= rhs * (1.0 + 1e-12) + 1e-12 })
}
