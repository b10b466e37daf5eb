//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so that every criterion is evaluated and
//! reported even when an earlier one fails. Pass criterion numbers as
//! arguments to run a subset, e.g. `cargo test --test acceptance -- 1 6 12`.
//! The process exits with status 1 if any selected criterion fails.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use carleson_core::carleson_disc::{bloch_profile_classifier, BlochClass, GAMMA_GRID};
use carleson_core::gramian::{
    ball_schur_factor_check, build_gram, expected_sq_entry_dirichlet, expected_sq_entry_szego,
    partial_sum_tail_bound, schur_multiplier_norms, truncated_frame,
};
use carleson_core::kernel::{pseudo_hyperbolic, rho_s, Domain, KernelSpec, Point, C64};
use carleson_core::linalg::{min_eigenvalue, CMatrix, PowerOptions};
use carleson_core::occupancy::{
    brute_force_distribution, exact_prob, normal_approx, ratio_check, truncated_sum_pmf,
    OccupancyProblem,
};
use carleson_core::rng::{rng_from_seed, LabRng};
use carleson_core::sequence::{
    sample_ball, series_criterion, Classification, CountingProfile, Criterion, RandomSequence,
    SampleConfig,
};
use carleson_lab::config::ExperimentConfig;
use carleson_lab::experiments::TrialResult;
use carleson_lab::runner::{run_experiment, RunOptions, INDEX_FILE, MANIFEST_FILE, RESULTS_FILE};
use carleson_lab::summary::summarize;
use rand::Rng;
use statrs::function::gamma::gamma;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn campaign(toml: &str) -> Vec<TrialResult> {
    let config = ExperimentConfig::from_toml(toml).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let opts = RunOptions {
        out_dir: dir.path().to_path_buf(),
        threads: threads(),
    };
    run_experiment(&config, &opts).unwrap().results
}

fn within(elapsed: Duration, limit_secs: u64) -> bool {
    elapsed < Duration::from_secs(limit_secs)
}

fn c1_occupancy_exactness() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0_f64;
    let mut cases = 0;
    for boxes in 1..=6u64 {
        for points in 0..=7u64 {
            for r in [2u32, 3] {
                let p = OccupancyProblem::new(points, boxes, r).unwrap();
                let brute = brute_force_distribution(&p).unwrap();
                for (k, &want) in brute.iter().enumerate() {
                    worst = worst.max((exact_prob(&p, k as u64).prob - want).abs());
                    cases += 1;
                }
            }
        }
    }
    let p22 = exact_prob(&OccupancyProblem::new(2, 2, 2).unwrap(), 1).prob;
    let p33 = exact_prob(&OccupancyProblem::new(3, 3, 3).unwrap(), 1).prob;
    let enumerated = (p22 - 0.5).abs() < 1e-12 && (p33 - 1.0 / 9.0).abs() < 1e-12;
    let elapsed = start.elapsed();
    outcome(
        worst < 1e-12 && enumerated && within(elapsed, 10),
        format!(
            "{cases} (N,n,r,k) cases, max |exact - brute| = {worst:.1e}; P(mu_2(2,2)=1) = {p22}, P(mu_3(3,3)=1) = {p33}"
        ),
    )
}

fn c2_ratio_limit() -> Outcome {
    let start = Instant::now();
    let mut detail = String::new();
    let mut pass = true;
    let mut last_dev = f64::INFINITY;
    for (boxes, tol) in [(1_000u64, 0.25), (10_000, 0.12), (100_000, 0.06)] {
        let points = (boxes as f64).sqrt().round() as u64;
        let ratio = ratio_check(&OccupancyProblem::new(points, boxes, 2).unwrap()).unwrap();
        let dev = (ratio - 1.0).abs();
        pass &= dev <= tol && dev < last_dev;
        last_dev = dev;
        write!(detail, "N={boxes} n={points} ratio={ratio:.4} (|dev| {dev:.3} vs {tol}); ").unwrap();
    }
    let elapsed = start.elapsed();
    detail.push_str("limit of the ratio along n = sqrt(N) is exp(-1/2) = 0.6065");
    outcome(pass && within(elapsed, 120), detail)
}

fn c3_local_normal() -> Outcome {
    let start = Instant::now();
    let m = 10_000u64;
    // alpha = n / N = 0.01
    let p = OccupancyProblem::new(100, 10_000, 2).unwrap();
    let center = m as f64 * p.alpha_r();
    let spread = 3.0 * (p.sigma_r_sq() * m as f64).sqrt();
    let lo = (center - spread).ceil().max(0.0) as u64;
    let hi = (center + spread).floor() as u64;
    let law = truncated_sum_pmf(&p, m, hi as usize + 1);
    let (mut min, mut max) = (f64::INFINITY, 0.0_f64);
    for l in lo..=hi {
        let ratio = law.at(l as usize) / normal_approx(&p, m, l).unwrap();
        min = min.min(ratio);
        max = max.max(ratio);
    }
    let elapsed = start.elapsed();
    outcome(
        min >= 0.9 && max <= 1.1 && within(elapsed, 60),
        format!("l in [{lo}, {hi}] around m alpha_r = {center:.2}: exact/approx in [{min:.4}, {max:.4}]"),
    )
}

/// Mean and standard error of `prod_i |<S_n, S_j>|^2` over uniform angles.
fn mc_entry(rng: &mut LabRng, rn: &[f64], rj: &[f64], draws: u64) -> (f64, f64) {
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..draws {
        let v: f64 = rn
            .iter()
            .zip(rj)
            .map(|(&a, &b)| {
                let w = C64::new(1.0, 0.0) - C64::from_polar(a * b, TAU * rng.gen::<f64>());
                (1.0 - a * a) * (1.0 - b * b) / w.norm_sqr()
            })
            .product();
        sum += v;
        sum_sq += v * v;
    }
    let n = draws as f64;
    let mean = sum / n;
    (mean, ((sum_sq / n - mean * mean) / n).sqrt())
}

fn c4_expected_entry() -> Outcome {
    let start = Instant::now();
    let mut rng = rng_from_seed(4);
    let draws = 100_000;
    let mut worst_z = 0.0_f64;
    for d in [1usize, 2] {
        for _ in 0..10 {
            let rn: Vec<f64> = (0..d).map(|_| rng.gen_range(0.05..0.98)).collect();
            let rj: Vec<f64> = (0..d).map(|_| rng.gen_range(0.05..0.98)).collect();
            let want = expected_sq_entry_szego(&rn, &rj).unwrap().exact;
            let (mean, se) = mc_entry(&mut rng, &rn, &rj, draws);
            worst_z = worst_z.max((mean - want).abs() / se);
        }
    }
    let (mean, se) = mc_entry(&mut rng, &[0.9], &[0.9], draws);
    let z19 = (mean - 0.19).abs() / se;
    let forms = expected_sq_entry_szego(&[0.9], &[0.9]).unwrap();
    let elapsed = start.elapsed();
    outcome(
        worst_z <= 3.0 && z19 <= 3.0 && within(elapsed, 60),
        format!(
            "20 random pairs: max |z| = {worst_z:.2}; r=r'=0.9: MC {mean:.5} +- {se:.5}, closed form {:.5}, 0.19 is {z19:.0} SE away (0.19 = (1-r^2)(1-r'^2)/(1-rr') = {:.5})",
            forms.exact, forms.radial_surrogate
        ),
    )
}

fn c5_dirichlet_entries() -> Outcome {
    let start = Instant::now();
    let mut rng = rng_from_seed(5);
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let (r, s) = (rng.gen_range(0.0..0.99), rng.gen_range(0.0..0.99));
        let series = expected_sq_entry_dirichlet(0.0, &[r], &[s], 1e-15).unwrap().exact;
        let closed = expected_sq_entry_szego(&[r], &[s]).unwrap().exact;
        worst = worst.max((series - closed).abs());
    }
    let radii = [0.9, 0.99, 0.999];
    let factor = |a: f64| -> Vec<f64> {
        radii
            .iter()
            .map(|&r| expected_sq_entry_dirichlet(a, &[r], &[r], 1e-12).unwrap().series_factor)
            .collect()
    };
    let (high, low) = (factor(0.75), factor(0.25));
    // sum_l c_l^2 at q = 1 by Gauss's summation, finite for a > 1/2
    let bound = gamma(2.0 * 0.75 - 1.0) / gamma(0.75).powi(2);
    let bounded = high.iter().all(|&v| v <= bound);
    let growing = low.windows(2).all(|w| w[1] > 1.5 * w[0]);
    let elapsed = start.elapsed();
    outcome(
        worst < 1e-10 && bounded && growing && within(elapsed, 60),
        format!(
            "a=0 vs Szego max diff {worst:.1e}; a=0.75 {high:.4?} (limit {bound:.4}); a=0.25 {low:.3?}"
        ),
    )
}

fn c6_tail_bound() -> Outcome {
    let mut worst_exact = 0.0_f64;
    let mut violations = 0;
    for b in 1..=3u32 {
        let r = 1.0 - (-(b as f64)).exp2();
        let seq = RandomSequence::disc(&[C64::new(r, 0.0)]).unwrap();
        for cutoff in 1..=20u32 {
            let gap = 1.0 - truncated_frame(&seq, (0, u32::MAX), cutoff).unwrap().norm().unwrap();
            worst_exact = worst_exact.max((gap - r.powi(2 * (cutoff as i32 + 1))).abs());
            if gap > partial_sum_tail_bound(1, b, cutoff) {
                violations += 1;
            }
        }
    }
    outcome(
        worst_exact < 1e-12 && violations == 0,
        format!("60 cases: max |gap - r^(2(L+1))| = {worst_exact:.1e}, bound violations {violations}"),
    )
}

fn c7_chernoff() -> Outcome {
    let start = Instant::now();
    let rows = campaign(
        r#"
id = "acceptance-chernoff"
kind = "chernoff_tail"
depths = [8]
trials = 10000
base_seed = 7

[chernoff]
points = 200
radius = 0.5
deltas = [1.0, 2.0, 4.0]
"#,
    );
    let n = rows.len() as f64;
    let mut pass = rows.iter().all(|r| r.error.is_none());
    let mut detail = format!("mu = {:.3}; ", rows[0].metrics["mu"]);
    for delta in [1.0, 2.0, 4.0] {
        let hits = rows.iter().filter(|r| r.metrics[&format!("exceeds_delta_{delta}")] > 0.5).count();
        let p = hits as f64 / n;
        let se = (p * (1.0 - p) / n).sqrt();
        let bound = rows[0].metrics[&format!("bound_delta_{delta}")];
        pass &= p <= bound + 3.0 * se;
        write!(detail, "delta {delta}: empirical {p:.4} vs bound {bound:.3e}; ").unwrap();
    }
    let elapsed = start.elapsed();
    outcome(pass && within(elapsed, 300), detail)
}

fn random_psd_unit_diagonal(rng: &mut LabRng, n: usize) -> CMatrix {
    let k = rng.gen_range(1..=n);
    let v = CMatrix::from_fn(n, k, |_, _| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
    let h = &v * v.adjoint();
    let d: Vec<f64> = (0..n).map(|i| h[(i, i)].re.sqrt()).collect();
    CMatrix::from_fn(n, n, |i, j| h[(i, j)] / (d[i] * d[j]))
}

fn c8_schur() -> Outcome {
    let mut rng = rng_from_seed(8);
    let mut worst_excess = f64::NEG_INFINITY;
    for _ in 0..100 {
        let n = rng.gen_range(1..=50);
        let a = CMatrix::from_fn(n, n, |_, _| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
        let h = random_psd_unit_diagonal(&mut rng, n);
        let (prod, norm) = schur_multiplier_norms(&a, &h).unwrap();
        worst_excess = worst_excess.max(prod - norm);
    }
    let mut worst_factor = 0.0_f64;
    let mut norms_ok = true;
    for d in [2usize, 3] {
        let profile = CountingProfile::exponential(Domain::Ball(d), 2.0, 1.0, 6).unwrap();
        let seq = sample_ball(&profile, &SampleConfig::default(), 80 + d as u64).unwrap().prefix(20);
        let report = ball_schur_factor_check(&seq, d as f64 / 2.0, &PowerOptions::default()).unwrap();
        worst_factor = worst_factor.max(report.max_factor_error);
        norms_ok &= report.norm_bound_holds;
    }
    outcome(
        worst_excess <= 1e-10 && worst_factor < 1e-10 && norms_ok,
        format!(
            "max ||A o H|| - ||A|| = {worst_excess:.2e}; ball factorization max error {worst_factor:.1e}, norm bounds hold: {norms_ok}"
        ),
    )
}

fn trend_config(id: &str, dim: usize, beta: f64) -> String {
    format!(
        r#"
id = "{id}"
kind = "carleson_trend"
depths = [8, 10, 12, 14]
trials = 20
base_seed = 9

[profile]
dim = {dim}
beta = {beta}

[power]
tol = 1e-6
max_iter = 5000
"#
    )
}

fn medians(rows: &[TrialResult], metric: &str) -> Vec<f64> {
    let summary = summarize(rows).unwrap();
    summary
        .depths()
        .iter()
        .map(|&d| summary.get(d, metric).map_or(f64::NAN, |s| s.median))
        .collect()
}

fn c9_carleson_trend() -> Outcome {
    let start = Instant::now();
    let mut pass = true;
    let mut detail = String::new();
    for dim in [1usize, 2] {
        let rows = campaign(&trend_config(&format!("acceptance-sub-d{dim}"), dim, 0.5));
        pass &= rows.iter().all(|r| r.error.is_none() && r.metrics["converged"] > 0.5);
        let m = medians(&rows, "gram_norm");
        let growth = m[3] / m[2] - 1.0;
        pass &= growth < 0.05;
        write!(detail, "beta=0.5 d={dim} medians {m:.3?} (12->14 {:+.1}%); ", 100.0 * growth).unwrap();
    }
    let rows = campaign(&trend_config("acceptance-super-d1", 1, 1.0));
    pass &= rows.iter().all(|r| r.error.is_none() && r.metrics["converged"] > 0.5);
    let m = medians(&rows, "gram_norm");
    let monotone = m.windows(2).all(|w| w[1] > w[0]);
    let factor = m[3] / m[0];
    pass &= monotone && factor >= 2.0;
    write!(detail, "beta=1 d=1 medians {m:.3?} (14/8 = {factor:.3}, monotone {monotone})").unwrap();
    let elapsed = start.elapsed();
    outcome(pass && within(elapsed, 900), detail)
}

fn separation_config(id: &str, beta: f64) -> String {
    format!(
        r#"
id = "{id}"
kind = "separation_law"
depths = [20]
trials = 50
base_seed = 10

[profile]
dim = 1
beta = {beta}

[separation]
m = 1
cluster_scale = 2
collisions_beyond = 12
"#
    )
}

fn fraction(rows: &[TrialResult], metric: &str) -> f64 {
    rows.iter().filter(|r| r.metrics[metric] > 0.5).count() as f64 / rows.len() as f64
}

fn c10_separation_law() -> Outcome {
    let start = Instant::now();
    let sub = campaign(&separation_config("acceptance-sep-sub", 1.0 / 3.0));
    let sup = campaign(&separation_config("acceptance-sep-super", 0.6));
    let ok = sub.iter().chain(&sup).all(|r| r.error.is_none());
    let free = fraction(&sub, "collision_free_beyond");
    let clustered = fraction(&sup, "has_cluster");
    let elapsed = start.elapsed();
    outcome(
        ok && free >= 0.9 && clustered >= 0.95 && within(elapsed, 600),
        format!(
            "beta=1/3: collision-free beyond degree 12 in {:.0}% of 50; beta=0.6: cluster at l=2 in {:.0}% of 50",
            100.0 * free,
            100.0 * clustered
        ),
    )
}

fn random_disc_point(rng: &mut LabRng) -> Point {
    Point::disc(C64::from_polar(0.999 * rng.gen::<f64>().sqrt(), TAU * rng.gen::<f64>())).unwrap()
}

fn c11_metric_identity() -> Outcome {
    let mut rng = rng_from_seed(11);
    let mut worst = 0.0_f64;
    for _ in 0..10_000 {
        let (z, w) = (random_disc_point(&mut rng), random_disc_point(&mut rng));
        worst = worst.max((rho_s(&z, &w).unwrap() - pseudo_hyperbolic(&z, &w).unwrap()).abs());
    }
    let mut diag = 0.0_f64;
    let mut min_eig = f64::INFINITY;
    for (d, seed) in [(2usize, 1u64), (3, 2), (4, 3)] {
        let profile = CountingProfile::exponential(Domain::Ball(d), 4.0, 1.0, 6).unwrap();
        let seq = sample_ball(&profile, &SampleConfig::default(), seed).unwrap().prefix(50);
        assert_eq!(seq.len(), 50);
        let g = build_gram(&KernelSpec::besov_sobolev(0.0, d).unwrap(), &seq).unwrap();
        for i in 0..50 {
            diag = diag.max((g.entries()[(i, i)] - C64::new(1.0, 0.0)).norm());
        }
        min_eig = min_eig.min(min_eigenvalue(g.entries()).unwrap());
    }
    outcome(
        worst < 1e-12 && diag < 1e-12 && min_eig >= -1e-8,
        format!("max |rho_s - rho| = {worst:.1e}; ball a=0: max |G_ii - 1| = {diag:.1e}, min eigenvalue {min_eig:.2e}"),
    )
}

fn c12_bloch_classifier() -> Outcome {
    let mut pass = true;
    let mut detail = String::new();
    for beta in [0.4, 0.5, 2.0 / 3.0, 0.8] {
        let profile = CountingProfile::exponential(Domain::Polydisc(1), 1.0, beta, 30).unwrap();
        let got = bloch_profile_classifier(&profile).unwrap().class;
        let union = series_criterion(&profile, Criterion::UnionM { m: 2 }).unwrap().classification;
        let gamma = GAMMA_GRID.iter().any(|&g| {
            series_criterion(&profile, Criterion::GammaCarleson { gamma: g })
                .unwrap()
                .classification
                == Classification::Converges
        });
        let want = if union == Classification::Converges && gamma {
            BlochClass::AlmostSurely
        } else {
            BlochClass::AlmostNever
        };
        pass &= got == want;
        write!(detail, "beta={beta:.3}: {got:?} (union2 {union:?}, some gamma {gamma}); ").unwrap();
    }
    outcome(pass, detail)
}

fn run_twice(toml: &str) -> bool {
    let config = ExperimentConfig::from_toml(toml).unwrap();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for (dir, threads) in dirs.iter().zip([1, 3]) {
        let opts = RunOptions {
            out_dir: dir.path().to_path_buf(),
            threads,
        };
        run_experiment(&config, &opts).unwrap();
    }
    let read = |dir: &Path, file: &str| std::fs::read(dir.join(file)).unwrap();
    let manifest = |dir: &Path| {
        let mut v: serde_json::Value = serde_json::from_slice(&read(dir, MANIFEST_FILE)).unwrap();
        v.as_object_mut().unwrap().remove("created_unix");
        v
    };
    let (a, b) = (dirs[0].path(), dirs[1].path());
    read(a, RESULTS_FILE) == read(b, RESULTS_FILE)
        && read(a, INDEX_FILE) == read(b, INDEX_FILE)
        && manifest(a) == manifest(b)
}

fn c13_determinism() -> Outcome {
    let kinds = [
        ("carleson_trend", "[profile]\nbeta = 0.8\n"),
        ("ball_trend", "[profile]\ndomain = \"ball\"\ndim = 2\n"),
        ("dirichlet_trend", "[kernel]\na = 0.5\n"),
        ("separation_law", "[separation]\npartition_delta = 0.5\n"),
        ("occupancy_ratio", "[occupancy]\nmc_trials = 500\n"),
        ("chernoff_tail", "[chernoff]\npoints = 30\n"),
        ("expected_entry", "[expected_entry]\nangle_draws = 2000\n"),
        ("bloch_law", ""),
    ];
    let mut differing = Vec::new();
    for (kind, extra) in kinds {
        let toml = format!("id = \"det-{kind}\"\nkind = \"{kind}\"\ndepths = [2, 4, 6]\ntrials = 3\nbase_seed = 13\n{extra}");
        if !run_twice(&toml) {
            differing.push(kind);
        }
    }
    outcome(
        differing.is_empty(),
        format!("8 kinds x 9 cells, 1 vs 3 threads; differing: {differing:?}"),
    )
}

type Check = (u32, &'static str, fn() -> Outcome);

const CRITERIA: [Check; 13] = [
    (1, "occupancy exactness", c1_occupancy_exactness),
    (2, "ratio limit", c2_ratio_limit),
    (3, "local normal approximation", c3_local_normal),
    (4, "expected Gram entry", c4_expected_entry),
    (5, "Dirichlet expected entries", c5_dirichlet_entries),
    (6, "tail bound", c6_tail_bound),
    (7, "matrix Chernoff", c7_chernoff),
    (8, "Schur multipliers", c8_schur),
    (9, "Carleson trend", c9_carleson_trend),
    (10, "separation law", c10_separation_law),
    (11, "metric identity", c11_metric_identity),
    (12, "Bloch classifier consistency", c12_bloch_classifier),
    (13, "determinism", c13_determinism),
];

fn main() {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (id, name, check) in CRITERIA {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        let tag = if result.pass { "PASS" } else { "FAIL" };
        println!("{tag} {id:>2} {name} [{secs:.1}s]: {}", result.detail);
        if !result.pass {
            failed += 1;
        }
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
