//! Batch runner behind the `semireg` binary: config loading, the five stock
//! experiments, and the `report`/`plot` views of a results directory.
//!
//! Column layout of every file written here is documented in `docs/csv-schema.md`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::besov::{fit_rate, regularity_slope, shift_ladder, DyadicTimes, Jet};
use crate::error::{Error, Result};
use crate::geometry::{Scaling, Weight};
use crate::grid::{Grid, GridField, Measure, Window};
use crate::kernel::RegularizingKernel;
use crate::model::{md_norms, noise_model_mixed, polynomial_model, Model, ModelledDistribution};
use crate::reconstruction::{family_residual, reconstruct, uniqueness_gap, SmoothedFamily};
use crate::schauder::{admissibility_and_commutation, decomposition_identity, lift_k, lift_model, lift_preconditions};
use crate::semigroup::{check_semigroup_axioms, kernel_discrepancy, AxiomSample, Coefficient, Semigroup, Stepper};
use crate::structure::{RIIndex, RIStructure, StructureFile, SymbolKind};

/// Environment variable naming the results root; defaults to `results`.
pub const RESULTS_ENV: &str = "SEMIREG_RESULTS";

pub const EXPERIMENTS: [&str; 5] = ["semigroup-axioms", "besov-slope", "reconstruct", "schauder-lift", "commutation"];

/// Flat key schema of a run configuration.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub experiment: String,
    #[serde(default = "default_d")]
    pub d: usize,
    #[serde(rename = "L", default = "default_l")]
    pub l: f64,
    #[serde(rename = "N", default = "default_n")]
    pub n: usize,
    /// Per-axis scaling `s`; isotropic when absent.
    #[serde(default)]
    pub scaling: Option<Vec<f64>>,
    #[serde(default)]
    pub ell: Option<f64>,
    /// `heat`, `anisotropic` or `parabolic`.
    #[serde(default = "default_semigroup")]
    pub semigroup: String,
    /// `constant` or `sinusoidal`, parabolic only.
    #[serde(default)]
    pub coefficient: Option<String>,
    #[serde(default)]
    pub amplitude: Option<f64>,
    #[serde(default)]
    pub dt: Option<f64>,
    /// `flat` or `exponential`.
    #[serde(default = "default_weight")]
    pub weight: String,
    #[serde(default)]
    pub weight_a: Option<f64>,
    /// Structure description, relative to the config file.
    #[serde(default)]
    pub structure: Option<PathBuf>,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// `delta`, `white-noise` or `sine`.
    #[serde(default)]
    pub input: Option<String>,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default)]
    pub c_r: Option<f64>,
    #[serde(default)]
    pub c_i: Option<f64>,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default = "default_depth")]
    pub depth: usize,
    /// Noise regularity expected to collide, checked by `schauder-lift`.
    #[serde(default)]
    pub collision_r: Option<f64>,
    #[serde(default)]
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub residual_tolerance: Option<f64>,
}

fn default_d() -> usize {
    1
}
fn default_l() -> f64 {
    8.0
}
fn default_n() -> usize {
    1024
}
fn default_semigroup() -> String {
    "heat".into()
}
fn default_weight() -> String {
    "flat".into()
}
fn default_n_max() -> usize {
    10
}
fn default_seeds() -> Vec<u64> {
    vec![1]
}
fn default_p() -> f64 {
    f64::INFINITY
}
fn default_depth() -> usize {
    20
}

impl ExperimentConfig {
    /// Parses and validates; a relative `structure` path is resolved against the config's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: ExperimentConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let Some(s) = &cfg.structure {
            if s.is_relative() {
                cfg.structure = Some(path.parent().unwrap_or(Path::new(".")).join(s));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) || self.name.starts_with('.') {
            return Err(Error::Config(format!("invalid run name {:?}", self.name)));
        }
        if !EXPERIMENTS.contains(&self.experiment.as_str()) {
            return Err(Error::Config(format!("unknown experiment {}", self.experiment)));
        }
        for (key, v) in [("tolerance", self.tolerance), ("residual_tolerance", self.residual_tolerance)] {
            if let Some(v) = v {
                if !(v > 0.0) {
                    return Err(Error::Config(format!("{key} must be positive, got {v}")));
                }
            }
        }
        if let Some(s) = &self.structure {
            if !s.is_file() {
                return Err(Error::Config(format!("structure file {} does not exist", s.display())));
            }
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        Ok(())
    }

    fn structure_path(&self) -> Result<&Path> {
        self.structure.as_deref().ok_or_else(|| Error::Config(format!("{} needs a structure file", self.experiment)))
    }

    fn c(&self) -> Result<RIIndex> {
        let r = self.c_r.ok_or_else(|| Error::Config(format!("{} needs c_r", self.experiment)))?;
        RIIndex::new(r, self.c_i.unwrap_or(f64::INFINITY))
    }
}

/// One line of `summary.csv` and `verdict.txt`.
#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub experiment: String,
    pub quantity: String,
    pub predicted: String,
    pub fitted: String,
    pub tolerance: String,
    pub passed: bool,
}

/// Fixed formatting so reruns are byte-identical.
pub fn fmt_num(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else if v.is_nan() {
        "nan".into()
    } else if v == 0.0 || (1e-3..1e4).contains(&v.abs()) {
        format!("{v:.6}")
    } else {
        format!("{v:.3e}")
    }
}

struct Rows {
    experiment: String,
    rows: Vec<Row>,
}

impl Rows {
    fn push(&mut self, quantity: &str, predicted: String, fitted: String, tolerance: String, passed: bool) {
        self.rows.push(Row {
            experiment: self.experiment.clone(),
            quantity: quantity.to_string(),
            predicted,
            fitted,
            tolerance,
            passed,
        });
    }

    fn within(&mut self, quantity: &str, predicted: f64, fitted: f64, tol: f64) {
        let ok = (fitted - predicted).abs() <= tol;
        self.push(quantity, fmt_num(predicted), fmt_num(fitted), fmt_num(tol), ok);
    }

    /// Passes when `fitted >= predicted - tol`.
    fn at_least(&mut self, quantity: &str, predicted: f64, fitted: f64, tol: f64) {
        let ok = fitted >= predicted - tol;
        self.push(quantity, format!(">={}", fmt_num(predicted)), fmt_num(fitted), fmt_num(tol), ok);
    }

    fn at_most(&mut self, quantity: &str, fitted: f64, bound: f64) {
        self.push(quantity, fmt_num(0.0), fmt_num(fitted), fmt_num(bound), fitted <= bound);
    }

    fn flag(&mut self, quantity: &str, expected: &str, observed: String, ok: bool) {
        self.push(quantity, expected.to_string(), observed, "-".into(), ok);
    }
}

/// Output of [`run`].
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub rows: Vec<Row>,
}

impl RunOutcome {
    pub fn all_passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }
}

/// Exit status for an error: 2 for configuration and I/O, 3 for everything numerical.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Io(_) => 2,
        _ => 3,
    }
}

pub fn results_root() -> PathBuf {
    std::env::var_os(RESULTS_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("results"))
}

/// Loads `config`, runs it, and writes `results_root/<name>/`.
pub fn run(config: &Path, results_root: &Path) -> Result<RunOutcome> {
    let cfg = ExperimentConfig::load(config)?;
    run_config(&cfg, results_root)
}

pub fn run_config(cfg: &ExperimentConfig, results_root: &Path) -> Result<RunOutcome> {
    let ctx = Context::new(cfg)?;
    let dir = results_root.join(&cfg.name);
    if dir.exists() {
        std::fs::remove_dir_all(&dir)?;
    }
    std::fs::create_dir_all(&dir)?;
    let mut rows = Rows { experiment: cfg.experiment.clone(), rows: Vec::new() };
    match cfg.experiment.as_str() {
        "semigroup-axioms" => semigroup_axioms(&ctx, cfg, &dir, &mut rows)?,
        "besov-slope" => besov_slope(&ctx, cfg, &dir, &mut rows)?,
        "reconstruct" => reconstruct_experiment(&ctx, cfg, &dir, &mut rows)?,
        "schauder-lift" => schauder_lift(&ctx, cfg, &dir, &mut rows)?,
        "commutation" => commutation(&ctx, cfg, &dir, &mut rows)?,
        other => return Err(Error::Config(format!("unknown experiment {other}"))),
    }
    std::fs::write(dir.join("summary.csv"), summary_csv(&rows.rows))?;
    std::fs::write(dir.join("verdict.txt"), verdict_text(&rows.rows))?;
    Ok(RunOutcome { dir, rows: rows.rows })
}

pub const SUMMARY_HEADER: &str = "experiment,quantity,predicted,fitted,tolerance,verdict";

fn verdict(ok: bool) -> &'static str {
    if ok { "PASS" } else { "FAIL" }
}

pub fn summary_csv(rows: &[Row]) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.experiment,
            r.quantity,
            r.predicted,
            r.fitted,
            r.tolerance,
            verdict(r.passed)
        );
    }
    out
}

fn verdict_text(rows: &[Row]) -> String {
    let mut out = String::new();
    for r in rows {
        let _ = writeln!(
            out,
            "{} {}: fitted {} vs {} tol {}",
            verdict(r.passed),
            r.quantity,
            r.fitted,
            r.predicted,
            r.tolerance
        );
    }
    out
}

/// Reads `summary.csv` back; any deviation from the schema is a config error.
pub fn read_summary(dir: &Path) -> Result<Vec<Row>> {
    let path = dir.join("summary.csv");
    if !path.is_file() {
        return Err(Error::Config(format!("{} is not a results directory (no summary.csv)", dir.display())));
    }
    let text = std::fs::read_to_string(&path)?;
    let mut lines = text.lines();
    if lines.next() != Some(SUMMARY_HEADER) {
        return Err(Error::Config(format!("{}: unexpected header", path.display())));
    }
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        let passed = match cols.as_slice() {
            [_, _, _, _, _, "PASS"] => true,
            [_, _, _, _, _, "FAIL"] => false,
            _ => return Err(Error::Config(format!("{}: malformed row {}", path.display(), n + 2))),
        };
        rows.push(Row {
            experiment: cols[0].into(),
            quantity: cols[1].into(),
            predicted: cols[2].into(),
            fitted: cols[3].into(),
            tolerance: cols[4].into(),
            passed,
        });
    }
    if rows.is_empty() {
        return Err(Error::Config(format!("{}: no rows", path.display())));
    }
    Ok(rows)
}

/// Aligned table of the rows in `dir/summary.csv`.
pub fn report(dir: &Path) -> Result<String> {
    let rows = read_summary(dir)?;
    let head = ["experiment", "quantity", "predicted", "fitted", "tolerance", "verdict"];
    let cells: Vec<[String; 6]> = rows
        .iter()
        .map(|r| {
            [
                r.experiment.clone(),
                r.quantity.clone(),
                r.predicted.clone(),
                r.fitted.clone(),
                r.tolerance.clone(),
                verdict(r.passed).to_string(),
            ]
        })
        .collect();
    let mut width = head.map(|h| h.chars().count());
    for c in &cells {
        for (w, s) in width.iter_mut().zip(c) {
            *w = (*w).max(s.chars().count());
        }
    }
    let line = |c: &[String]| -> String {
        let parts: Vec<String> = c.iter().zip(&width).map(|(s, w)| format!("{s:<w$}")).collect();
        parts.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(&head.map(String::from));
    for c in &cells {
        out.push_str(&line(c));
    }
    Ok(out)
}

/// Writes `plot/<stem>.dat` (`ln t ln value`) and `plot/<stem>.fit.dat` for each two-column series CSV.
///
/// Returns one warning per empty series.
pub fn plot(dir: &Path) -> Result<Vec<String>> {
    if !dir.is_dir() {
        return Err(Error::Config(format!("{} is not a directory", dir.display())));
    }
    let out_dir = dir.join("plot");
    std::fs::create_dir_all(&out_dir)?;
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    entries.sort();
    let mut warnings = Vec::new();
    for path in entries {
        let text = std::fs::read_to_string(&path)?;
        let mut lines = text.lines();
        let Some(header) = lines.next() else { continue };
        // Field dumps start with a `#` grid header and the summary has six columns.
        if header.starts_with('#') || header.split(',').count() != 2 {
            continue;
        }
        let stem = path.file_stem().unwrap_or_default().to_string_lossy().to_string();
        let mut samples = Vec::new();
        for line in lines {
            let mut it = line.split(',').map(|s| s.trim().parse::<f64>());
            if let (Some(Ok(t)), Some(Ok(v))) = (it.next(), it.next()) {
                if t > 0.0 && v > 0.0 && t.is_finite() && v.is_finite() {
                    samples.push((t, v));
                }
            }
        }
        let mut data = String::new();
        for (t, v) in &samples {
            let _ = writeln!(data, "{:e} {:e}", t.ln(), v.ln());
        }
        std::fs::write(out_dir.join(format!("{stem}.dat")), &data)?;
        if samples.is_empty() {
            warnings.push(format!("{stem}: empty series"));
        }
        let mut fit = String::new();
        if let Ok(r) = fit_rate(&samples, 1.0, (0, 0)) {
            for t in [r.t_range.0, r.t_range.1] {
                let _ = writeln!(fit, "{:e} {:e}", t.ln(), r.intercept + r.slope * t.ln());
            }
        }
        std::fs::write(out_dir.join(format!("{stem}.fit.dat")), fit)?;
    }
    Ok(warnings)
}

struct Context {
    grid: Grid,
    q: Semigroup,
    measure: Measure,
    times: DyadicTimes,
}

impl Context {
    fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let scaling = match &cfg.scaling {
            Some(s) => Scaling::new(s.clone(), cfg.ell.unwrap_or(2.0))?,
            None => Scaling::isotropic(cfg.d),
        };
        let grid = Grid::new(cfg.d, cfg.l, cfg.n, scaling)?;
        let q = match cfg.semigroup.as_str() {
            "heat" => Semigroup::heat(&grid)?,
            "anisotropic" => Semigroup::anisotropic(&grid)?,
            "parabolic" => {
                let coef = match cfg.coefficient.as_deref().unwrap_or("constant") {
                    "constant" => Coefficient::constant(cfg.amplitude.unwrap_or(1.0)),
                    "sinusoidal" => Coefficient::sinusoidal(cfg.amplitude.unwrap_or(0.3)),
                    other => return Err(Error::Config(format!("unknown coefficient {other}"))),
                };
                Semigroup::parabolic(coef, &grid, cfg.dt.unwrap_or(5e-4), Stepper::CrankNicolson)?
            }
            other => return Err(Error::Config(format!("unknown semigroup {other}"))),
        };
        let weight = match cfg.weight.as_str() {
            "flat" => Weight::flat(),
            "exponential" => Weight::exponential(cfg.weight_a.unwrap_or(0.5), grid.scaling())?,
            other => return Err(Error::Config(format!("unknown weight {other}"))),
        };
        let measure = Measure::new(weight, Window::interior(0.5 * cfg.l));
        Ok(Context { grid, q, measure, times: DyadicTimes::new(cfg.n_max) })
    }

    /// Family levels reach two dyadic steps below the lift's finest time.
    fn lambda_times(&self) -> DyadicTimes {
        DyadicTimes::new(self.times.n_max() + 2)
    }
}

/// A model built from a structure file, with the noise fields drawn for `seed`.
struct LoadedModel {
    structure: RIStructure,
    model: Model,
    file: StructureFile,
    fields: Vec<(String, GridField)>,
}

fn load_model(path: &Path, grid: &Grid, seed: u64, override_r: Option<f64>) -> Result<LoadedModel> {
    let (_, file) = RIStructure::from_file(path)?;
    if file.model == "polynomial" {
        let cut = file.gamma_cut.ok_or_else(|| Error::Config("polynomial sectors need gamma_cut".into()))?;
        let (structure, model) = polynomial_model(cut, grid)?;
        return Ok(LoadedModel { structure, model, file, fields: Vec::new() });
    }
    let mut fields = Vec::new();
    let mut symbols = Vec::new();
    for s in &file.symbol {
        let f = match s.field.as_str() {
            "white-noise" => GridField::white_noise(grid, seed, 0.5 * grid.half_width()),
            "delta" => GridField::delta(grid, grid.origin()),
            other => return Err(Error::Config(format!("unknown field {other} for symbol {}", s.name))),
        };
        symbols.push((s.name.clone(), f.clone(), RIIndex::new(override_r.unwrap_or(s.r), s.i)?));
        fields.push((s.name.clone(), f));
    }
    let cut = if file.model == "noise+polynomial" { file.gamma_cut } else { None };
    let (structure, model) = noise_model_mixed(symbols, grid, cut)?;
    Ok(LoadedModel { structure, model, file, fields })
}

/// Jet of `sin` with derivatives of every order below `order`, `d = 1`.
fn sine_jet(grid: &Grid, order: f64) -> Result<Jet> {
    if grid.dim() != 1 {
        return Err(Error::Config("the sine input is defined for d = 1".into()));
    }
    let mut jet = Jet::new();
    let mut k = 0usize;
    while (k as f64) < order.max(1.0) {
        let phase = k as f64 * std::f64::consts::FRAC_PI_2;
        jet.insert(vec![k], GridField::from_fn(grid, |x| (x[0] + phase).sin()));
        k += 1;
    }
    Ok(jet)
}

fn sine(grid: &Grid) -> GridField {
    GridField::from_fn(grid, |x| x[0].sin())
}

fn seed_label(cfg: &ExperimentConfig, seed: u64) -> String {
    if cfg.seeds.len() > 1 { format!(" (seed {seed})") } else { String::new() }
}

fn series_csv(header: &str, rows: &[(f64, f64)]) -> String {
    let mut out = format!("{header}\n");
    for (a, b) in rows {
        let _ = writeln!(out, "{a:e},{b:e}");
    }
    out
}

fn semigroup_axioms(ctx: &Context, cfg: &ExperimentConfig, dir: &Path, rows: &mut Rows) -> Result<()> {
    let sample = AxiomSample::standard(&ctx.grid);
    let rep = check_semigroup_axioms(&ctx.q, &sample)?;
    rows.at_most("composition residual", rep.composition, cfg.tolerance.unwrap_or(1e-3));
    rows.at_most("conservativity", rep.max_conservativity(), cfg.residual_tolerance.unwrap_or(1e-6));
    rows.flag("C1", "finite", fmt_num(rep.c1), rep.c1.is_finite());
    rows.flag("C2", "finite", fmt_num(rep.c2), rep.c2.is_finite());
    let constant_unit = cfg.coefficient.as_deref().unwrap_or("constant") == "constant" && cfg.amplitude.unwrap_or(1.0) == 1.0;
    if cfg.semigroup == "parabolic" && constant_unit {
        let heat = Semigroup::heat(&ctx.grid)?;
        let err = kernel_discrepancy(&ctx.q, &heat, 0.5, &sample.columns)?;
        rows.at_most("heat oracle discrepancy", err, cfg.tolerance.unwrap_or(1e-3));
    }
    std::fs::write(dir.join("conservativity.csv"), series_csv("t,residual", &rep.conservativity))?;
    Ok(())
}

fn besov_slope(ctx: &Context, cfg: &ExperimentConfig, dir: &Path, rows: &mut Rows) -> Result<()> {
    let hom = ctx.grid.scaling().homogeneity();
    let p = cfg.p;
    let input = cfg.input.as_deref().unwrap_or("delta");
    match input {
        "delta" => {
            let f = GridField::delta(&ctx.grid, ctx.grid.origin());
            let r = regularity_slope(&f, p, &ctx.measure, &ctx.q, &ctx.times)?;
            std::fs::write(dir.join("levels.csv"), r.to_csv())?;
            rows.within("alpha_hat delta", -hom * (1.0 - 1.0 / p), r.exponent_hat, cfg.tolerance.unwrap_or(0.05));
        }
        "white-noise" => {
            let mut sum = 0.0;
            for &seed in &cfg.seeds {
                let f = GridField::white_noise(&ctx.grid, seed, 0.5 * cfg.l);
                let r = regularity_slope(&f, p, &ctx.measure, &ctx.q, &ctx.times)?;
                std::fs::write(dir.join(format!("levels_seed{seed}.csv")), r.to_csv())?;
                sum += r.exponent_hat;
            }
            let mean = sum / cfg.seeds.len() as f64;
            let q = format!("alpha_hat white noise (mean of {} seeds)", cfg.seeds.len());
            rows.within(&q, -hom / 2.0, mean, cfg.tolerance.unwrap_or(0.1));
        }
        other => return Err(Error::Config(format!("besov-slope input must be delta or white-noise, got {other}"))),
    }
    Ok(())
}

fn reconstruct_experiment(ctx: &Context, cfg: &ExperimentConfig, dir: &Path, rows: &mut Rows) -> Result<()> {
    let path = cfg.structure_path()?;
    let c = cfg.c()?;
    let ell = ctx.grid.scaling().ell();
    let inf = f64::INFINITY;
    for (n, &seed) in cfg.seeds.iter().enumerate() {
        let lm = load_model(path, &ctx.grid, seed, None)?;
        let tag = seed_label(cfg, seed);
        if lm.file.model == "polynomial" {
            let f = ModelledDistribution::taylor_lift(&lm.structure, c, &sine_jet(&ctx.grid, c.r)?)?;
            let r = reconstruct(&f, &lm.model, &ctx.q, &ctx.times, &ctx.measure, cfg.depth)?;
            let want = ctx.q.apply(ctx.times.finest(), &sine(&ctx.grid))?;
            let err = ctx.measure.norm(&r.field.sub(&want)?, inf)?;
            rows.at_most("sup error at t_min", err, cfg.tolerance.unwrap_or(1e-3));
            rows.within("defect exponent", c.r / ell, r.rates.exponent_hat, 0.15);
            rows.at_least("Cauchy increment exponent", c.r / ell, r.cauchy_rate.exponent_hat, 0.15);
            r.write_dir(dir)?;
            // Deterministic input: one pass suffices.
            break;
        }
        let (name, xi) = lm.fields.first().ok_or_else(|| Error::Config("noise structure has no symbols".into()))?;
        let f = ModelledDistribution::constant(&lm.structure, &ctx.grid, c, name, 1.0)?;
        let deep = reconstruct(&f, &lm.model, &ctx.q, &ctx.times, &ctx.measure, cfg.depth)?;
        let shallow = reconstruct(&f, &lm.model, &ctx.q, &ctx.times, &ctx.measure, cfg.depth.saturating_sub(8).max(1))?;
        let res = family_residual(&deep.family, xi, &ctx.q, &ctx.measure, inf)?;
        rows.at_most(&format!("per-level residual{tag}"), res, cfg.residual_tolerance.unwrap_or(1e-6));
        let u = uniqueness_gap(&deep.family, &shallow.family, &f, &lm.model, &ctx.q, &ctx.measure)?;
        rows.at_most(&format!("uniqueness gap{tag}"), u.relative, cfg.tolerance.unwrap_or(1e-3));
        rows.flag(&format!("uniqueness preconditions{tag}"), "met", u.preconditions_met.to_string(), u.preconditions_met);
        if n == 0 {
            deep.write_dir(dir)?;
        }
    }
    Ok(())
}

fn poly_cut(c: &RIIndex, beta: f64) -> f64 {
    (c.r + beta).floor() + 1.0
}

fn schauder_lift(ctx: &Context, cfg: &ExperimentConfig, dir: &Path, rows: &mut Rows) -> Result<()> {
    let path = cfg.structure_path()?;
    let c = cfg.c()?;
    let kernel = RegularizingKernel::negative_semigroup(&ctx.q)?;
    let beta = cfg.beta.unwrap_or(kernel.beta_bar());
    let phi = GridField::from_fn(&ctx.grid, |x| 1.0 + 0.5 * x[0].sin());
    for &seed in &cfg.seeds {
        let tag = seed_label(cfg, seed);
        let lm = load_model(path, &ctx.grid, seed, None)?;
        lift_preconditions(&lm.model, &kernel, beta, &c)?;
        let pair = lift_model(&lm.model, &kernel, beta, &ctx.times, poly_cut(&c, beta))?;
        let coeffs: Vec<GridField> = lm
            .structure
            .symbols()
            .iter()
            .map(|s| match s.kind {
                SymbolKind::Monomial(_) => GridField::zeros(&ctx.grid),
                _ => phi.clone(),
            })
            .collect();
        let f = ModelledDistribution::new(&lm.structure, c, coeffs)?;
        let mut lambda_field = GridField::zeros(&ctx.grid);
        for (_, xi) in &lm.fields {
            lambda_field.axpy(1.0, &phi.mul(xi)?)?;
        }
        let lambda = SmoothedFamily::from_field(&lambda_field, &ctx.q, &ctx.lambda_times())?;
        let kf = lift_k(&f, &lm.model, &pair, &kernel, &lambda, &ctx.times)?;

        let norms = md_norms(&kf, &pair.model, &ctx.measure, &shift_ladder(&ctx.grid, 0, 9))?;
        rows.flag(&format!("md norms finite{tag}"), "finite", fmt_num(norms.local.max(norms.holder)),
            norms.local.is_finite() && norms.holder.is_finite());
        for (n, series) in norms.sectors.iter().enumerate() {
            std::fs::write(dir.join(format!("sector{n}_seed{seed}.csv")), series_csv("h,increment", &series.increments))?;
            let peak = series.increments.iter().map(|v| v.1).fold(0.0, f64::max);
            if peak <= 1e-12 {
                continue;
            }
            let rate = fit_rate(&series.increments, 1.0, (2, 2))?;
            let q = format!("Holder fit sector r={}{tag}", fmt_num(series.sector.r));
            rows.at_least(&q, series.gap.r, rate.exponent_hat, cfg.tolerance.unwrap_or(0.2));
        }
        for (j, k, rate, predicted) in pair.j_rates(&lm.structure, &kernel)? {
            std::fs::write(dir.join(format!("j{j}_k{}_seed{seed}.csv", k[0])), rate.to_csv())?;
            rows.within(&format!("J rate symbol {j} k={k:?}{tag}").replace(',', ";"), predicted, rate.exponent_hat, 0.15);
        }
        let dec = decomposition_identity(&f, &lm.model, &kernel, beta, &lambda, &[0], &[8], &ctx.times)?;
        let mut csv = String::from("t,b,c,identity_residual\n");
        for s in &dec.samples {
            let _ = writeln!(csv, "{:e},{:e},{:e},{:e}", s.t, s.b, s.c, s.identity_residual);
        }
        std::fs::write(dir.join(format!("decomposition_seed{seed}.csv")), csv)?;
        rows.at_most(&format!("decomposition identity{tag}"), dec.max_identity_residual, cfg.residual_tolerance.unwrap_or(1e-10));

        if let Some(r) = cfg.collision_r {
            let bad = load_model(path, &ctx.grid, seed, Some(r))?;
            let outcome = lift_preconditions(&bad.model, &kernel, beta, &c);
            let observed = if matches!(outcome, Err(Error::Precondition(_))) { "rejected" } else { "accepted" };
            rows.flag(&format!("collision at r={}{tag}", fmt_num(r)), "rejected", observed.into(), observed == "rejected");
        }
    }
    Ok(())
}

fn commutation(ctx: &Context, cfg: &ExperimentConfig, dir: &Path, rows: &mut Rows) -> Result<()> {
    let path = cfg.structure_path()?;
    let c = cfg.c()?;
    let ell = ctx.grid.scaling().ell();
    let lm = load_model(path, &ctx.grid, cfg.seeds[0], None)?;
    if lm.file.model != "polynomial" {
        return Err(Error::Config("commutation runs on a polynomial structure".into()));
    }
    let kernel = RegularizingKernel::negative_semigroup(&ctx.q)?;
    let beta = cfg.beta.unwrap_or(kernel.beta_bar());
    let pair = lift_model(&lm.model, &kernel, beta, &ctx.times, poly_cut(&c, beta))?;
    let f = ModelledDistribution::taylor_lift(&lm.structure, c, &sine_jet(&ctx.grid, c.r)?)?;
    let lambda = SmoothedFamily::from_field(&sine(&ctx.grid), &ctx.q, &ctx.lambda_times())?;
    let kf = lift_k(&f, &lm.model, &pair, &kernel, &lambda, &ctx.times)?;
    let rep = admissibility_and_commutation(&kf, &pair, &kernel, &ctx.q, &lambda, &ctx.times, &ctx.measure)?;
    std::fs::write(dir.join("commutation.csv"), series_csv("t,defect", &rep.raw))?;
    rows.within("commutation exponent", (c.r + beta) / ell, rep.rate.exponent_hat, cfg.tolerance.unwrap_or(0.2));
    rows.flag("lift admissible", "passed", rep.passed.to_string(), rep.passed);

    let bump = GridField::from_fn(&ctx.grid, |x| (x[0] - 0.3).abs().powf(1.2) * (-x[0] * x[0]).exp());
    let bad = lambda.plus_field(&bump, &ctx.q)?;
    let kbad = lift_k(&f, &lm.model, &pair, &kernel, &bad, &ctx.times)?;
    let ctl = admissibility_and_commutation(&kbad, &pair, &kernel, &ctx.q, &bad, &ctx.times, &ctx.measure)?;
    std::fs::write(dir.join("control.csv"), series_csv("t,defect", &ctl.raw))?;
    let q = "corrupted control flagged";
    rows.push(q, format!("<{}", fmt_num(ctl.required - 0.15)), fmt_num(ctl.rate.exponent_hat), "-".into(), !ctl.passed);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format_is_stable() {
        assert_eq!(fmt_num(-1.0), "-1.000000");
        assert_eq!(fmt_num(2.5e-7), "2.500e-7");
        assert_eq!(fmt_num(f64::INFINITY), "inf");
        assert_eq!(fmt_num(0.0), "0.000000");
    }

    #[test]
    fn unknown_keys_and_bad_tolerances_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "name = \"x\"\nexperiment = \"besov-slope\"\nbogus = 1\n").unwrap();
        assert!(matches!(ExperimentConfig::load(&p), Err(Error::Config(_))));
        std::fs::write(&p, "name = \"x\"\nexperiment = \"besov-slope\"\ntolerance = -1.0\n").unwrap();
        assert!(matches!(ExperimentConfig::load(&p), Err(Error::Config(_))));
        std::fs::write(&p, "name = \"x\"\nexperiment = \"reconstruct\"\nstructure = \"missing.toml\"\n").unwrap();
        assert!(matches!(ExperimentConfig::load(&p), Err(Error::Config(_))));
        let e = ExperimentConfig::load(&dir.path().join("none.toml")).unwrap_err();
        assert_eq!(exit_code(&e), 2);
    }

    #[test]
    fn summary_round_trips_and_report_rejects_empty_dirs() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(report(dir.path()), Err(Error::Config(_))));
        let rows = vec![Row {
            experiment: "besov-slope".into(),
            quantity: "alpha_hat delta".into(),
            predicted: fmt_num(-1.0),
            fitted: fmt_num(-0.998),
            tolerance: fmt_num(0.05),
            passed: true,
        }];
        std::fs::write(dir.path().join("summary.csv"), summary_csv(&rows)).unwrap();
        assert_eq!(read_summary(dir.path()).unwrap(), rows);
        let table = report(dir.path()).unwrap();
        assert!(table.lines().nth(1).unwrap().ends_with("PASS"));
    }

    #[test]
    fn plot_writes_log_log_pairs_and_warns_on_empty() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("defect.csv"), "t,defect\n1e0,1e0\n5e-1,2.5e-1\n2.5e-1,6.25e-2\n").unwrap();
        std::fs::write(dir.path().join("cauchy.csv"), "s,increment\n").unwrap();
        let warnings = plot(dir.path()).unwrap();
        assert_eq!(warnings, vec!["cauchy: empty series".to_string()]);
        let data = std::fs::read_to_string(dir.path().join("plot/defect.dat")).unwrap();
        let first: Vec<f64> = data.lines().nth(1).unwrap().split(' ').map(|v| v.parse().unwrap()).collect();
        assert!((first[0] - 0.5f64.ln()).abs() < 1e-12 && (first[1] - 0.25f64.ln()).abs() < 1e-12);
        let fit = std::fs::read_to_string(dir.path().join("plot/defect.fit.dat")).unwrap();
        assert_eq!(fit.lines().count(), 2);
        assert!(std::fs::read_to_string(dir.path().join("plot/cauchy.dat")).unwrap().is_empty());
    }
}
