//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use semireg::besov::{
    check_besov_embedding, check_q_interchange, holder_space_check, regularity_slope, shift_ladder, DyadicTimes, Jet,
};
use semireg::geometry::{Scaling, Weight};
use semireg::grid::{Grid, GridField, Measure, Window};
use semireg::harness;
use semireg::kernel::{apply_k, apply_k_jet, RegularizingKernel};
use semireg::model::{md_norms, noise_model, polynomial_model, ModelledDistribution};
use semireg::reconstruction::{family_residual, reconstruct, uniqueness_gap, SmoothedFamily};
use semireg::schauder::{admissibility_and_commutation, lift_k, lift_model, lift_preconditions};
use semireg::semigroup::{check_semigroup_axioms, kernel_discrepancy, AxiomSample, Coefficient, Semigroup, Stepper};
use semireg::structure::RIIndex;
use semireg::Error;

const INF: f64 = f64::INFINITY;

struct Verdict {
    passed: bool,
    detail: String,
}

fn grid(n: usize) -> Grid {
    Grid::new(1, 8.0, n, Scaling::isotropic(1)).unwrap()
}

fn window() -> Measure {
    Measure::new(Weight::flat(), Window::interior(4.0))
}

fn sine(g: &Grid) -> GridField {
    GridField::from_fn(g, |x| x[0].sin())
}

fn sine_lift(g: &Grid) -> (semireg::model::Model, ModelledDistribution) {
    let (s, m) = polynomial_model(2.0, g).unwrap();
    let mut jet = Jet::new();
    jet.insert(vec![0], sine(g));
    jet.insert(vec![1], GridField::from_fn(g, |x| x[0].cos()));
    (m, ModelledDistribution::taylor_lift(&s, RIIndex::smooth(2.0), &jet).unwrap())
}

fn timed(budget: f64, f: impl FnOnce() -> Verdict) -> Verdict {
    let start = Instant::now();
    let v = f();
    let secs = start.elapsed().as_secs_f64();
    Verdict { passed: v.passed && secs < budget, detail: format!("{}; {secs:.1} s (< {budget} s)", v.detail) }
}

fn criterion_1() -> Verdict {
    let g = grid(1024);
    let q = Semigroup::heat(&g).unwrap();
    let r = check_semigroup_axioms(&q, &AxiomSample::standard(&g)).unwrap();
    let cons = r.max_conservativity();
    Verdict {
        passed: r.composition <= 1e-3 && cons <= 1e-6 && r.c1.is_finite() && r.c2.is_finite(),
        detail: format!(
            "heat axioms: composition {:.2e} (<= 1e-3), conservativity {cons:.2e} (<= 1e-6), C1 {:.3}, C2 {:.3}",
            r.composition, r.c1, r.c2
        ),
    }
}

fn criterion_2() -> Verdict {
    let g = grid(1024);
    let heat = Semigroup::heat(&g).unwrap();
    let sample = AxiomSample::standard(&g);
    let constant = Semigroup::parabolic(Coefficient::constant(1.0), &g, 5e-4, Stepper::CrankNicolson).unwrap();
    let mut oracle = 0.0f64;
    for t in [0.1, 0.5, 1.0] {
        oracle = oracle.max(kernel_discrepancy(&constant, &heat, t, &sample.columns).unwrap());
    }
    let mut variable = Semigroup::parabolic(Coefficient::sinusoidal(0.3), &g, 5e-4, Stepper::CrankNicolson).unwrap();
    let r = variable.calibrate(&sample).unwrap();
    let cons = r.max_conservativity();
    let axioms = r.composition <= 1e-3 && cons <= 1e-6 && r.c1.is_finite() && r.c2.is_finite();
    Verdict {
        passed: oracle <= 1e-3 && axioms,
        detail: format!(
            "constant-coefficient vs heat {oracle:.2e} (<= 1e-3); a = 1 + 0.3 sin: composition {:.2e}, conservativity {cons:.2e}, C1 {:.3}, C2 {:.3}",
            r.composition, r.c1, r.c2
        ),
    }
}

fn criterion_3() -> Verdict {
    let g = grid(1024);
    let q = Semigroup::heat(&g).unwrap();
    let m = window();
    let times = DyadicTimes::new(10);
    let delta = regularity_slope(&GridField::delta(&g, g.origin()), INF, &m, &q, &times).unwrap().exponent_hat;
    let slopes: Vec<f64> = (1..=20)
        .map(|seed| regularity_slope(&GridField::white_noise(&g, seed, 4.0), INF, &m, &q, &times).unwrap().exponent_hat)
        .collect();
    let mean = slopes.iter().sum::<f64>() / slopes.len() as f64;
    let (lo, hi) = slopes.iter().fold((INF, -INF), |(a, b), &s| (a.min(s), b.max(s)));
    Verdict {
        passed: (delta + 1.0).abs() <= 0.05 && (mean + 0.5).abs() <= 0.1,
        detail: format!("delta {delta:.3} (-1 +- 0.05); white noise mean {mean:.3} over 20 seeds, range [{lo:.3}, {hi:.3}] (-0.5 +- 0.1)"),
    }
}

fn criterion_4() -> Verdict {
    let g = grid(1024);
    let q = Semigroup::heat(&g).unwrap();
    let m = window();
    let times = DyadicTimes::new(8);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut violations, mut worst) = (0usize, 0.0f64);
    for n in 0..20u64 {
        let f = if n % 2 == 0 {
            GridField::white_noise(&g, 100 + n, 4.0)
        } else {
            let c = rng.gen_range(-2.0..2.0);
            GridField::from_fn(&g, move |x| (-(x[0] - c).powi(2)).exp() * (3.0 * x[0]).cos())
        };
        let alpha = -rng.gen_range(0.0..1.5);
        let p = [1.0, 2.0, INF][n as usize % 3];
        let qi = check_q_interchange(&f, alpha, p, &m, &q, &times).unwrap();
        let r = if p.is_infinite() { INF } else { 2.0 * p };
        let emb = check_besov_embedding(&f, alpha, p, r, &m, &q, &times).unwrap();
        for c in [qi.lower.constant, qi.upper.constant, emb.constant] {
            if !c.is_finite() {
                violations += 1;
            } else {
                worst = worst.max(c);
            }
        }
    }
    Verdict {
        passed: violations == 0,
        detail: format!("20 fields, q-interchange and embedding: {violations} violations, largest constant {worst:.3}"),
    }
}

fn criterion_5() -> Verdict {
    let g = grid(1024);
    let q = Semigroup::heat(&g).unwrap();
    let m = window();
    let (model, f) = sine_lift(&g);
    let times = DyadicTimes::new(10);
    let r = reconstruct(&f, &model, &q, &times, &m, 20).unwrap();
    let want = q.apply(times.finest(), &sine(&g)).unwrap();
    let err = m.norm(&r.field.sub(&want).unwrap(), INF).unwrap();
    let defect = r.rates.exponent_hat;
    let cauchy = r.cauchy_rate.exponent_hat;
    Verdict {
        passed: err <= 1e-3 && (defect - 1.0).abs() <= 0.15 && cauchy >= 0.85,
        detail: format!("sup error {err:.2e} (<= 1e-3), defect exponent {defect:.3} (1 +- 0.15), Cauchy slope {cauchy:.3} (>= 0.85)"),
    }
}

fn criterion_6() -> Verdict {
    let g = grid(1024);
    let q = Semigroup::heat(&g).unwrap();
    let m = window();
    let xi = GridField::white_noise(&g, 7, 4.0);
    let (s, model) = noise_model(&xi, -0.55, INF, &g).unwrap();
    let f = ModelledDistribution::constant(&s, &g, RIIndex::smooth(0.5), "Xi", 1.0).unwrap();
    let times = DyadicTimes::new(10);
    let deep = reconstruct(&f, &model, &q, &times, &m, 20).unwrap();
    let shallow = reconstruct(&f, &model, &q, &times, &m, 12).unwrap();
    let res = family_residual(&deep.family, &xi, &q, &m, INF).unwrap();
    let u = uniqueness_gap(&deep.family, &shallow.family, &f, &model, &q, &m).unwrap();
    Verdict {
        passed: res <= 1e-6 && u.relative <= 1e-3,
        detail: format!("per-level residual {res:.2e} (<= 1e-6), uniqueness gap depth 20 vs 12 {:.2e} (<= 1e-3)", u.relative),
    }
}

fn criterion_7() -> Verdict {
    // Eigenfunction identity at desk resolution.
    let g = grid(1024);
    let q = Semigroup::heat(&g).unwrap();
    let k = RegularizingKernel::negative_semigroup(&q).unwrap();
    let ks = apply_k(&k, &sine(&g), &DyadicTimes::new(10), &[0]).unwrap();
    let want = sine(&g).scale(-(1.0 - (-1.0f64).exp()));
    let eig = window().norm(&ks.sub(&want).unwrap(), INF).unwrap();

    // The Holder gain needs a grid fine enough for an asymptotic range of shifts.
    let fine = grid(16384);
    let qf = Semigroup::heat(&fine).unwrap();
    let kf = RegularizingKernel::negative_semigroup(&qf).unwrap();
    let shifts: Vec<Vec<i64>> = shift_ladder(&fine, 0, 14).into_iter().filter(|v| (4..=128).contains(&v[0])).collect();
    let seeds = [1u64, 2, 3, 4];
    let mut fits: Vec<(Vec<usize>, f64, f64)> = Vec::new();
    for &seed in &seeds {
        let xi = GridField::white_noise(&fine, seed, 4.0);
        let jet = apply_k_jet(&kf, &xi, &DyadicTimes::new(16), 1.5).unwrap();
        let rep = holder_space_check(&jet, 1.5, 2.0, &window(), &shifts, (0, 2)).unwrap();
        for (i, (kk, rate, need)) in rep.per_k.iter().enumerate() {
            if fits.len() <= i {
                fits.push((kk.clone(), 0.0, *need));
            }
            fits[i].1 += rate.exponent_hat / seeds.len() as f64;
        }
    }
    let k0 = fits[0].1;
    let all = fits.iter().all(|(_, fit, need)| *fit >= need - 0.15);
    let per_k: Vec<String> = fits.iter().map(|(kk, fit, need)| format!("k={kk:?} {fit:.3} (need {need})")).collect();
    Verdict {
        passed: eig <= 1e-3 && (k0 - 1.5).abs() <= 0.15 && all,
        detail: format!(
            "K(sin) error {eig:.2e} (<= 1e-3); K(xi) Holder fits, N = 16384, p = 2, mean of {} seeds: {} (k=0 within 1.5 +- 0.15)",
            seeds.len(),
            per_k.join(", ")
        ),
    }
}

fn criterion_8() -> Verdict {
    let g = grid(1024);
    let q = Semigroup::heat(&g).unwrap();
    let k = RegularizingKernel::negative_semigroup(&q).unwrap();
    let times = DyadicTimes::new(10);
    let xi = GridField::white_noise(&g, 4, 4.0);
    let (s, model) = noise_model(&xi, -0.55, INF, &g).unwrap();
    let pair = lift_model(&model, &k, 2.0, &times, 2.0).unwrap();
    let phi = GridField::from_fn(&g, |x| 1.0 + 0.5 * x[0].sin());
    let c = RIIndex::smooth(-0.25);
    let f = ModelledDistribution::new(&s, c, vec![phi.clone()]).unwrap();
    let lam = SmoothedFamily::from_field(&phi.mul(&xi).unwrap(), &q, &DyadicTimes::new(12)).unwrap();
    let kf = lift_k(&f, &model, &pair, &k, &lam, &times).unwrap();
    let norms = md_norms(&kf, &pair.model, &window(), &shift_ladder(&g, 0, 9)).unwrap();
    let mut ok = norms.local.is_finite() && norms.holder.is_finite();
    let mut parts = Vec::new();
    for series in &norms.sectors {
        if series.increments.iter().all(|v| v.1 <= 1e-12) {
            continue;
        }
        let fit = semireg::besov::fit_rate(&series.increments, 1.0, (2, 2)).unwrap().exponent_hat;
        ok &= fit >= series.gap.r - 0.2;
        parts.push(format!("r(a)={} fit {fit:.3} (>= {:.2} - 0.2)", series.sector.r, series.gap.r));
    }
    let (_, collide) = noise_model(&xi, -1.0, INF, &g).unwrap();
    let rejected = matches!(lift_preconditions(&collide, &k, 2.0, &c), Err(Error::Precondition(_)));
    let accepted = lift_preconditions(&model, &k, 2.0, &c).is_ok();
    Verdict {
        passed: ok && rejected && accepted,
        detail: format!(
            "beta = 2, r(Xi) = -0.55: {}; r(Xi) = -1 rejected: {rejected}",
            parts.join(", ")
        ),
    }
}

fn criterion_9() -> Verdict {
    let g = grid(1024);
    let q = Semigroup::heat(&g).unwrap();
    let k = RegularizingKernel::negative_semigroup(&q).unwrap();
    let m = window();
    let times = DyadicTimes::new(10);
    let (model, f) = sine_lift(&g);
    let pair = lift_model(&model, &k, 1.9, &times, 4.0).unwrap();
    let lam = SmoothedFamily::from_field(&sine(&g), &q, &DyadicTimes::new(12)).unwrap();
    let kf = lift_k(&f, &model, &pair, &k, &lam, &times).unwrap();
    let rep = admissibility_and_commutation(&kf, &pair, &k, &q, &lam, &times, &m).unwrap();
    let bump = GridField::from_fn(&g, |x| (x[0] - 0.3).abs().powf(1.2) * (-x[0] * x[0]).exp());
    let bad = lam.plus_field(&bump, &q).unwrap();
    let kbad = lift_k(&f, &model, &pair, &k, &bad, &times).unwrap();
    let ctl = admissibility_and_commutation(&kbad, &pair, &k, &q, &bad, &times, &m).unwrap();
    let fit = rep.rate.exponent_hat;
    Verdict {
        passed: (fit - 2.0).abs() <= 0.2 && rep.passed && !ctl.passed,
        detail: format!(
            "sine lift, beta = 1.9: exponent {fit:.3} (2 +- 0.2); corrupted control exponent {:.3} flagged: {}",
            ctl.rate.exponent_hat, !ctl.passed
        ),
    }
}

fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn criterion_10() -> Verdict {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut names: Vec<PathBuf> = std::fs::read_dir(&configs)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    names.sort();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut failures = Vec::new();
    for cfg in &names {
        for root in [a.path(), b.path()] {
            match harness::run(cfg, root) {
                Ok(out) if out.all_passed() => {}
                Ok(_) => failures.push(format!("{} has FAIL rows", cfg.display())),
                Err(e) => failures.push(format!("{}: exit {} ({e})", cfg.display(), harness::exit_code(&e))),
            }
        }
    }
    let identical = snapshot(a.path()) == snapshot(b.path());
    Verdict {
        passed: names.len() == 5 && failures.is_empty() && identical,
        detail: format!(
            "{} stock configs run twice: failures {:?}, byte-identical reruns: {identical}",
            names.len(),
            failures
        ),
    }
}

fn main() {
    let criteria: [(&str, f64, fn() -> Verdict); 10] = [
        ("semigroup axioms", 5.0, criterion_1),
        ("inhomogeneous semigroup", 60.0, criterion_2),
        ("Besov slope recovery", 10.0, criterion_3),
        ("q-interchange and embedding", 10.0, criterion_4),
        ("reconstruction, smooth oracle", 30.0, criterion_5),
        ("reconstruction, noise oracle", 10.0, criterion_6),
        ("regularizing-kernel gain", 20.0, criterion_7),
        ("multilevel Schauder", 60.0, criterion_8),
        ("commutation", 30.0, criterion_9),
        ("full harness", 300.0, criterion_10),
    ];
    let mut failed = 0;
    for (n, (name, budget, run)) in criteria.iter().enumerate() {
        let v = timed(*budget, run);
        if !v.passed {
            failed += 1;
        }
        println!("criterion {:>2} {} {name}: {}", n + 1, if v.passed { "PASS" } else { "FAIL" }, v.detail);
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
