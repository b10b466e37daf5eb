//! Per-trial computations for each experiment kind. A trial is a pure
//! function of the config, its depth and its seed.

use std::collections::BTreeMap;

use carleson_core::carleson_disc::{bloch_by_series, bloch_profile_classifier, onebox_constant, BlochClass};
use carleson_core::gramian::{
    chernoff_bound, expected_frame_diagonal, expected_sq_entry_szego, sequence_gram_norm,
    truncated_frame, ChernoffParams,
};
use carleson_core::kernel::{Domain, C64};
use carleson_core::occupancy::{exact_prob, simulate_occupancy, OccupancyProblem};
use carleson_core::rng::{derive_seed, rng_from_seed};
use carleson_core::separation::{cluster_count, greedy_partition, rectangle_collisions, Metric};
use carleson_core::sequence::{band_lower, band_upper, sample_ball, sample_polydisc, RandomSequence};
use carleson_core::Result;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, ExperimentKind};

pub type Metrics = BTreeMap<String, f64>;

/// One `(depth, trial)` cell of a campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub experiment: String,
    pub kind: ExperimentKind,
    pub depth: u32,
    pub trial: u32,
    /// Seed the trial was computed from; rerunning [`run_trial`] with it
    /// reproduces the row.
    pub seed: u64,
    pub metrics: Metrics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Labels mixed into the trial seed after the experiment id.
pub fn trial_seed(config: &ExperimentConfig, depth: u32, trial: u32) -> u64 {
    let id = carleson_core::rng::label_hash(&config.id);
    derive_seed(config.base_seed, &[id, u64::from(depth), u64::from(trial)])
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Runs one cell. Errors from the numerical core (resource caps included)
/// are recorded in the row rather than returned.
pub fn run_trial(config: &ExperimentConfig, depth: u32, trial: u32) -> TrialResult {
    let seed = trial_seed(config, depth, trial);
    let (metrics, error) = match compute(config, depth, seed) {
        Ok(m) => (m, None),
        Err(e) => (Metrics::new(), Some(e.to_string())),
    };
    TrialResult {
        experiment: config.id.clone(),
        kind: config.kind,
        depth,
        trial,
        seed,
        metrics,
        error,
    }
}

fn compute(config: &ExperimentConfig, depth: u32, seed: u64) -> Result<Metrics> {
    let mut m = match config.kind {
        ExperimentKind::CarlesonTrend | ExperimentKind::BallTrend | ExperimentKind::DirichletTrend => {
            gram_trend(config, depth, seed)?
        }
        ExperimentKind::SeparationLaw => separation_law(config, depth, seed)?,
        ExperimentKind::OccupancyRatio => occupancy_ratio(config, depth, seed)?,
        ExperimentKind::ChernoffTail => chernoff_tail(config, depth, seed)?,
        ExperimentKind::ExpectedEntry => expected_entry(config, depth, seed)?,
        ExperimentKind::BlochLaw => bloch_law(config, depth, seed)?,
    };
    // JSON has no representation for NaN or infinities.
    m.retain(|_, v| v.is_finite());
    Ok(m)
}

fn sample(config: &ExperimentConfig, depth: u32, seed: u64) -> Result<RandomSequence> {
    let profile = config.profile.profile(depth)?;
    let sc = config.profile.sample_config();
    match profile.domain() {
        Domain::Polydisc(_) => sample_polydisc(&profile, &sc, seed),
        Domain::Ball(_) => sample_ball(&profile, &sc, seed),
    }
}

fn gram_trend(config: &ExperimentConfig, depth: u32, seed: u64) -> Result<Metrics> {
    let seq = sample(config, depth, seed)?;
    let spec = config.kernel_spec()?;
    let opts = config.power_options(derive_seed(seed, &[0x90_4E]));
    let est = sequence_gram_norm(&spec, &seq, &opts, config.power.dense_cap)?;
    Ok(Metrics::from([
        ("points".into(), seq.len() as f64),
        ("gram_norm".into(), est.value),
        ("iterations".into(), est.iterations as f64),
        ("converged".into(), flag(est.converged)),
    ]))
}

fn separation_law(config: &ExperimentConfig, depth: u32, seed: u64) -> Result<Metrics> {
    let s = &config.separation;
    let seq = sample(config, depth, seed)?;
    let events = rectangle_collisions(&seq, s.m)?;
    let beyond = events
        .iter()
        .filter(|e| e.region.degree() > s.collisions_beyond)
        .count();
    let clusters = cluster_count(&seq, s.m, s.cluster_scale)?;
    let mut m = Metrics::from([
        ("points".into(), seq.len() as f64),
        ("collisions".into(), events.len() as f64),
        ("collisions_beyond".into(), beyond as f64),
        ("collision_free_beyond".into(), flag(beyond == 0)),
        ("clusters".into(), clusters as f64),
        ("has_cluster".into(), flag(clusters > 0)),
    ]);
    if let Some(delta) = s.partition_delta {
        let part = greedy_partition(&seq, delta, Metric::Rho)?;
        m.insert("partition_parts".into(), part.parts as f64);
        m.insert("partition_max_degree".into(), part.max_degree as f64);
    }
    Ok(m)
}

/// Problem at a given depth: `N = round(base^depth)`, `n = round(N^exponent)`.
pub fn occupancy_problem(config: &ExperimentConfig, depth: u32) -> Result<OccupancyProblem> {
    let o = &config.occupancy;
    let boxes = o.boxes_base.powi(depth as i32).round() as u64;
    let points = (boxes as f64).powf(o.points_exponent).round() as u64;
    OccupancyProblem::new(points, boxes, o.r)
}

fn occupancy_ratio(config: &ExperimentConfig, depth: u32, seed: u64) -> Result<Metrics> {
    let p = occupancy_problem(config, depth)?;
    let expected = p.boxes() as f64 * p.p_r();
    let one = exact_prob(&p, 1);
    let mut m = Metrics::from([
        ("boxes".into(), p.boxes() as f64),
        ("points".into(), p.points() as f64),
        ("alpha".into(), p.alpha()),
        ("n_p_r".into(), expected),
        ("prob_one".into(), one.prob),
        ("ratio".into(), one.prob / expected),
        ("support_cap".into(), one.support_cap as f64),
        ("underflow".into(), flag(one.underflow)),
    ]);
    if config.occupancy.mc_trials > 0 {
        let h = simulate_occupancy(&p, config.occupancy.mc_trials, seed)?;
        m.insert("mc_prob_one".into(), h.pmf(1));
        m.insert("mc_std_error".into(), h.std_error(1));
    }
    Ok(m)
}

fn chernoff_tail(config: &ExperimentConfig, cutoff: u32, seed: u64) -> Result<Metrics> {
    let c = &config.chernoff;
    let mut rng = rng_from_seed(seed);
    let points: Vec<C64> = (0..c.points)
        .map(|_| C64::from_polar(c.radius, std::f64::consts::TAU * rng.gen::<f64>()))
        .collect();
    let seq = RandomSequence::disc(&points)?;
    let norm = truncated_frame(&seq, (0, u32::MAX), cutoff)?.norm()?;
    let diag = expected_frame_diagonal(&vec![vec![c.radius]; c.points], cutoff)?;
    let mu = diag.mu();
    let mut m = Metrics::from([("frame_norm".into(), norm), ("mu".into(), mu)]);
    for &delta in &c.deltas {
        let bound = chernoff_bound(&ChernoffParams::new(delta, mu, diag.ambient_dim())?);
        m.insert(format!("exceeds_delta_{delta}"), flag(norm >= (1.0 + delta) * mu));
        m.insert(format!("bound_delta_{delta}"), bound);
    }
    Ok(m)
}

fn expected_entry(config: &ExperimentConfig, band: u32, seed: u64) -> Result<Metrics> {
    let d = config.profile.dim;
    let mut rng = rng_from_seed(seed);
    let mut radius = || 1.0 - rng.gen_range(band_lower(band)..band_upper(band));
    let rn: Vec<f64> = (0..d).map(|_| radius()).collect();
    let rj: Vec<f64> = (0..d).map(|_| radius()).collect();
    let formula = expected_sq_entry_szego(&rn, &rj)?;
    let draws = config.expected_entry.angle_draws;
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..draws {
        let v: f64 = rn
            .iter()
            .zip(&rj)
            .map(|(&a, &b)| {
                let w = C64::new(1.0, 0.0) - C64::from_polar(a * b, std::f64::consts::TAU * rng.gen::<f64>());
                (1.0 - a * a) * (1.0 - b * b) / w.norm_sqr()
            })
            .product();
        sum += v;
        sum_sq += v * v;
    }
    let mean = sum / draws as f64;
    let se = ((sum_sq / draws as f64 - mean * mean).max(0.0) / draws as f64).sqrt();
    let mut m = Metrics::from([
        ("mc_mean".into(), mean),
        ("mc_std_error".into(), se),
        ("exact".into(), formula.exact),
        ("radial_surrogate".into(), formula.radial_surrogate),
        ("dyadic_surrogate".into(), formula.dyadic_surrogate),
    ]);
    if se > 0.0 {
        m.insert("z_exact".into(), (mean - formula.exact) / se);
        m.insert("z_radial".into(), (mean - formula.radial_surrogate) / se);
    }
    Ok(m)
}

fn bloch_law(config: &ExperimentConfig, depth: u32, seed: u64) -> Result<Metrics> {
    let profile = config.profile.profile(depth)?;
    let report = bloch_profile_classifier(&profile)?;
    let series = bloch_by_series(&profile)?;
    let seq = sample(config, depth, seed)?;
    let mut m = Metrics::from([
        ("points".into(), seq.len() as f64),
        ("almost_surely".into(), flag(report.class == BlochClass::AlmostSurely)),
        ("series_agree".into(), flag(report.class == series)),
        ("cubic_partial_sum".into(), report.partial_sums.last().copied().unwrap_or(0.0)),
    ]);
    for &g in &config.bloch.gammas {
        m.insert(format!("onebox_gamma_{g:.2}"), onebox_constant(&seq, g)?.constant);
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(kind: &str, extra: &str) -> ExperimentConfig {
        ExperimentConfig::from_toml(&format!(
            "id = \"x\"\nkind = \"{kind}\"\ndepths = [3]\ntrials = 1\nbase_seed = 1\n{extra}"
        ))
        .unwrap()
    }

    #[test]
    fn every_kind_produces_metrics() {
        let cases = [
            ("carleson_trend", ""),
            ("separation_law", "[separation]\npartition_delta = 0.5\n"),
            ("occupancy_ratio", "[occupancy]\nmc_trials = 100\n"),
            ("chernoff_tail", "[chernoff]\npoints = 20\n"),
            ("expected_entry", "[expected_entry]\nangle_draws = 1000\n"),
            ("ball_trend", "[profile]\ndomain = \"ball\"\ndim = 2\n"),
            ("dirichlet_trend", "[kernel]\na = 0.5\n"),
            ("bloch_law", ""),
        ];
        for (kind, extra) in cases {
            let c = config(kind, extra);
            let r = run_trial(&c, 3, 0);
            assert!(r.error.is_none(), "{kind}: {:?}", r.error);
            assert!(!r.metrics.is_empty(), "{kind}");
            assert_eq!(r, run_trial(&c, 3, 0));
        }
    }

    #[test]
    fn seeds_differ_across_cells() {
        let c = config("carleson_trend", "");
        let a = trial_seed(&c, 3, 0);
        assert_ne!(a, trial_seed(&c, 3, 1));
        assert_ne!(a, trial_seed(&c, 4, 0));
    }

    #[test]
    fn resource_caps_become_row_errors() {
        let c = config("carleson_trend", "[profile]\nbeta = 1.0\npoint_cap = 5\n");
        let r = run_trial(&c, 3, 0);
        assert!(r.error.unwrap().contains("resource limit"));
    }
}
