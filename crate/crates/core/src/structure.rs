//! Regularity-integrability indices and finite structures with explicit bases.

use std::fmt;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::geometry::{monomial_index_set, Scaling};

/// `(r, i)` with `i` in `[1, inf]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RIIndex {
    pub r: f64,
    pub i: f64,
}

fn inv(p: f64) -> f64 {
    if p.is_infinite() {
        0.0
    } else {
        1.0 / p
    }
}

fn from_inv(q: f64) -> f64 {
    if q == 0.0 {
        f64::INFINITY
    } else {
        1.0 / q
    }
}

impl RIIndex {
    pub fn new(r: f64, i: f64) -> Result<Self> {
        if !(i >= 1.0) || r.is_nan() {
            return Err(Error::domain(format!("index needs i in [1, inf], got ({r}, {i})")));
        }
        Ok(RIIndex { r, i })
    }

    /// `(r, inf)`.
    pub fn smooth(r: f64) -> Self {
        RIIndex { r, i: f64::INFINITY }
    }

    /// `self < other`: strictly lower regularity and no lower integrability.
    pub fn prec(&self, other: &RIIndex) -> bool {
        self.r < other.r && self.i >= other.i
    }

    pub fn preceq(&self, other: &RIIndex) -> bool {
        self.r <= other.r && self.i >= other.i
    }

    /// `self (-) b`; requires `b <= self`.
    pub fn ominus(&self, b: &RIIndex) -> Result<RIIndex> {
        if !b.preceq(self) {
            return Err(Error::domain(format!("{b} is not below {self}")));
        }
        Ok(RIIndex { r: self.r - b.r, i: from_inv(inv(self.i) - inv(b.i)) })
    }

    pub fn oplus_beta(&self, beta: f64) -> RIIndex {
        RIIndex { r: self.r + beta, i: self.i }
    }

    pub fn ominus_beta(&self, beta: f64) -> RIIndex {
        RIIndex { r: self.r - beta, i: self.i }
    }

    fn same(&self, other: &RIIndex) -> bool {
        (self.r - other.r).abs() < 1e-12 && self.i == other.i
    }
}

impl fmt::Display for RIIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.i.is_infinite() {
            write!(f, "({}, inf)", self.r)
        } else {
            write!(f, "({}, {})", self.r, self.i)
        }
    }
}

/// Role of a basis vector.
#[derive(Clone, Debug, PartialEq)]
pub enum SymbolKind {
    /// `X^k`.
    Monomial(Vec<usize>),
    /// A symbol realized by a fixed distribution (noise and similar).
    Noise,
    /// `I tau` for the named symbol `tau`.
    Integrated(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Symbol {
    pub name: String,
    pub kind: SymbolKind,
}

impl Symbol {
    pub fn monomial(k: &[usize]) -> Self {
        let name = if k.iter().all(|&v| v == 0) {
            "1".to_string()
        } else {
            let parts: Vec<String> = k.iter().map(|v| v.to_string()).collect();
            format!("X^{}", parts.join(","))
        };
        Symbol { name, kind: SymbolKind::Monomial(k.to_vec()) }
    }

    pub fn noise(name: impl Into<String>) -> Self {
        Symbol { name: name.into(), kind: SymbolKind::Noise }
    }

    pub fn integrated(of: &str) -> Self {
        Symbol { name: format!("I[{of}]"), kind: SymbolKind::Integrated(of.to_string()) }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sector {
    pub index: RIIndex,
    pub basis: Vec<Symbol>,
}

/// A finite structure `A`, sectors `T_a` with bases, and a regularity `alpha0`.
///
/// Coordinates of `T` concatenate the sector bases in sector order.
#[derive(Clone, Debug, PartialEq)]
pub struct RIStructure {
    sectors: Vec<Sector>,
    alpha0: f64,
}

impl RIStructure {
    /// Merges sectors with equal index; `alpha0` must not exceed any `r(a)`.
    pub fn new(sectors: Vec<Sector>, alpha0: f64) -> Result<Self> {
        let mut merged: Vec<Sector> = Vec::new();
        for s in sectors {
            if s.basis.is_empty() {
                return Err(Error::structural(format!("sector {} has an empty basis", s.index)));
            }
            match merged.iter_mut().find(|m| m.index.same(&s.index)) {
                Some(m) => m.basis.extend(s.basis),
                None => merged.push(s),
            }
        }
        merged.sort_by(|a, b| a.index.r.total_cmp(&b.index.r).then(b.index.i.total_cmp(&a.index.i)));
        let mut names: Vec<&str> = merged.iter().flat_map(|s| s.basis.iter().map(|b| b.name.as_str())).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::structural("basis symbol names must be unique"));
        }
        if let Some(bad) = merged.iter().find(|s| s.index.r < alpha0) {
            return Err(Error::structural(format!("regularity {alpha0} exceeds r of sector {}", bad.index)));
        }
        Ok(RIStructure { sectors: merged, alpha0 })
    }

    /// Sectors `(|k|_s, inf)` spanned by `X^k` for `|k|_s < gamma_cut`.
    pub fn polynomial(scaling: &Scaling, gamma_cut: f64) -> Result<Self> {
        if !(gamma_cut > 0.0) {
            return Err(Error::domain(format!("polynomial cut must be positive, got {gamma_cut}")));
        }
        RIStructure::new(polynomial_sectors(scaling, gamma_cut), 0.0)
    }

    pub fn sectors(&self) -> &[Sector] {
        &self.sectors
    }

    pub fn alpha0(&self) -> f64 {
        self.alpha0
    }

    pub fn dim(&self) -> usize {
        self.sectors.iter().map(|s| s.basis.len()).sum()
    }

    /// Global coordinate range of sector `a`.
    pub fn range(&self, a: usize) -> std::ops::Range<usize> {
        let start: usize = self.sectors[..a].iter().map(|s| s.basis.len()).sum();
        start..start + self.sectors[a].basis.len()
    }

    /// Sector number of each global coordinate.
    pub fn sector_of(&self, coord: usize) -> usize {
        let mut acc = 0;
        for (a, s) in self.sectors.iter().enumerate() {
            acc += s.basis.len();
            if coord < acc {
                return a;
            }
        }
        panic!("coordinate {coord} outside a structure of dimension {}", self.dim())
    }

    pub fn symbols(&self) -> Vec<&Symbol> {
        self.sectors.iter().flat_map(|s| s.basis.iter()).collect()
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.symbols().iter().position(|s| s.name == name)
    }

    /// Coordinate of `X^k`, if present.
    pub fn monomial_coord(&self, k: &[usize]) -> Option<usize> {
        self.symbols().iter().position(|s| s.kind == SymbolKind::Monomial(k.to_vec()))
    }

    /// Sectors `a` with `a < c`.
    pub fn below(&self, c: &RIIndex) -> Vec<usize> {
        (0..self.sectors.len()).filter(|&a| self.sectors[a].index.prec(c)).collect()
    }

    /// Each bounded lower set `{b : b < a}` is finite; always true here, checked for the record.
    pub fn check_finite_lower_sets(&self) -> bool {
        self.sectors.iter().all(|a| self.sectors.iter().filter(|b| b.index.prec(&a.index)).count() < self.sectors.len())
    }

    /// Values `r(a) + shift` over all sectors that collide with `N[s]`.
    pub fn collisions(&self, scaling: &Scaling, shift: f64) -> Vec<(RIIndex, f64)> {
        self.sectors
            .iter()
            .map(|s| (s.index, s.index.r + shift))
            .filter(|(_, v)| scaling.in_weighted_lengths(*v))
            .collect()
    }

    /// Loads a structure description (TOML, see `configs/structures/`).
    pub fn from_file(path: &Path) -> Result<(Self, StructureFile)> {
        let text = std::fs::read_to_string(path)?;
        let file: StructureFile = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok((file.to_structure()?, file))
    }
}

pub(crate) fn polynomial_sectors(scaling: &Scaling, gamma_cut: f64) -> Vec<Sector> {
    let set = monomial_index_set(scaling, gamma_cut);
    set.indices
        .iter()
        .map(|k| Sector { index: RIIndex::smooth(scaling.weighted_length(k)), basis: vec![Symbol::monomial(k)] })
        .collect()
}

/// On-disk structure description.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructureFile {
    /// `polynomial`, `noise`, or `noise+polynomial`.
    pub model: String,
    /// Cut for the polynomial sectors.
    #[serde(default)]
    pub gamma_cut: Option<f64>,
    #[serde(default)]
    pub symbol: Vec<SymbolEntry>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymbolEntry {
    pub name: String,
    pub r: f64,
    /// Integrability; `inf` is accepted.
    pub i: f64,
    /// `white-noise` or `delta`.
    pub field: String,
}

impl StructureFile {
    pub fn to_structure(&self) -> Result<RIStructure> {
        let mut sectors = Vec::new();
        for s in &self.symbol {
            sectors.push(Sector { index: RIIndex::new(s.r, s.i)?, basis: vec![Symbol::noise(&s.name)] });
        }
        let alpha0 = self.symbol.iter().map(|s| s.r).fold(0.0, f64::min);
        match self.model.as_str() {
            "polynomial" | "noise+polynomial" => {
                let cut = self.gamma_cut.ok_or_else(|| Error::Config("polynomial sectors need gamma_cut".into()))?;
                if self.model == "polynomial" && !self.symbol.is_empty() {
                    return Err(Error::Config("a polynomial structure takes no symbols".into()));
                }
                // Scaling enters only through N[s]; the file format covers d = 1.
                sectors.extend(polynomial_sectors(&Scaling::isotropic(1), cut));
            }
            "noise" => {}
            other => return Err(Error::Config(format!("unknown model kind {other}"))),
        }
        if sectors.is_empty() {
            return Err(Error::Config("structure has no sectors".into()));
        }
        RIStructure::new(sectors, alpha0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_examples() {
        let a = RIIndex::new(1.0, 2.0).unwrap();
        let b = RIIndex::smooth(0.0);
        assert!(b.prec(&a));
        assert_eq!(a.ominus(&b).unwrap(), RIIndex::new(1.0, 2.0).unwrap());
        let b2 = RIIndex::new(0.0, 2.0).unwrap();
        assert_eq!(a.ominus(&b2).unwrap(), RIIndex::smooth(1.0));
        assert!(!a.prec(&a) && a.preceq(&a));
        assert_eq!(a.ominus(&a).unwrap(), RIIndex::smooth(0.0));
        assert!(b.ominus(&a).is_err());
        assert!(RIIndex::new(0.0, 0.5).is_err());
    }

    #[test]
    fn polynomial_structure_levels() {
        let s = RIStructure::polynomial(&Scaling::isotropic(1), 3.0).unwrap();
        assert_eq!(s.dim(), 3);
        assert_eq!(s.alpha0(), 0.0);
        let rs: Vec<f64> = s.sectors().iter().map(|s| s.index.r).collect();
        assert_eq!(rs, vec![0.0, 1.0, 2.0]);
        assert_eq!(s.below(&RIIndex::smooth(2.0)), vec![0, 1]);
        let s2 = RIStructure::polynomial(&Scaling::new(vec![2.0, 1.0], 4.0).unwrap(), 2.5).unwrap();
        assert_eq!(s2.dim(), 4);
        assert_eq!(s2.sectors()[2].basis.len(), 2);
    }

    #[test]
    fn structure_validation() {
        let xi = Sector { index: RIIndex::smooth(-0.55), basis: vec![Symbol::noise("Xi")] };
        assert!(RIStructure::new(vec![xi.clone()], 0.0).is_err());
        let s = RIStructure::new(vec![xi.clone()], -0.55).unwrap();
        assert!(s.check_finite_lower_sets());
        assert!(RIStructure::new(vec![xi.clone(), xi], -1.0).is_err());
    }

    #[test]
    fn collisions_with_weighted_lengths() {
        let sc = Scaling::isotropic(1);
        let bad = RIStructure::new(vec![Sector { index: RIIndex::smooth(-1.0), basis: vec![Symbol::noise("Xi")] }], -1.0).unwrap();
        assert_eq!(bad.collisions(&sc, 2.0).len(), 1);
        let good = RIStructure::new(vec![Sector { index: RIIndex::smooth(-0.55), basis: vec![Symbol::noise("Xi")] }], -0.55).unwrap();
        assert!(good.collisions(&sc, 2.0).is_empty());
    }

    #[test]
    fn structure_file_parses() {
        let text = "model = \"noise+polynomial\"\ngamma_cut = 2.0\n[[symbol]]\nname = \"Xi\"\nr = -0.55\ni = inf\nfield = \"white-noise\"\n";
        let f: StructureFile = toml::from_str(text).unwrap();
        let s = f.to_structure().unwrap();
        assert_eq!(s.dim(), 3);
        assert_eq!(s.alpha0(), -0.55);
        assert!(s.find("Xi").is_some());
    }
}
