//! Occupancy statistics: `n` points dropped uniformly into `N` boxes, and the
//! number `μ_r` of boxes holding exactly `r` points.
//!
//! The exact law uses the Poissonization identity
//!
//! ```text
//! P(μ_r = k) = C(N,k) p_r^k (1 - p_r)^(N-k) P(ζ^(r)_(N-k) = n - kr) / P(ζ_N = n)
//! ```
//!
//! where `ζ_N` is a sum of `N` Poisson(α) variables, `α = n/N`, and
//! `ζ^(r)_m` a sum of `m` Poisson(α) variables conditioned to avoid `r`. The
//! law of `ζ^(r)_m` is a convolution power, computed by repeated squaring on
//! mass functions that carry their own log scale so that nothing underflows
//! in intermediate steps.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, stream};

/// Poisson tail mass dropped when capping the support of a single summand.
pub const TAIL_MASS: f64 = 1e-16;

/// Largest `N^n` accepted by [`brute_force_prob`].
pub const BRUTE_FORCE_CAP: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OccupancyProblem {
    points: u64,
    boxes: u64,
    r: u32,
}

impl OccupancyProblem {
    pub fn new(points: u64, boxes: u64, r: u32) -> Result<Self> {
        if boxes == 0 {
            return Err(Error::param("need at least one box"));
        }
        if r < 2 {
            return Err(Error::param(format!("occupancy r must be at least 2, got {r}")));
        }
        Ok(OccupancyProblem { points, boxes, r })
    }

    pub fn points(&self) -> u64 {
        self.points
    }

    pub fn boxes(&self) -> u64 {
        self.boxes
    }

    pub fn r(&self) -> u32 {
        self.r
    }

    /// `α = n / N`.
    pub fn alpha(&self) -> f64 {
        self.points as f64 / self.boxes as f64
    }

    /// `p_r = α^r e^{-α} / r!`.
    pub fn p_r(&self) -> f64 {
        poisson_pmf(self.alpha(), u64::from(self.r))
    }

    /// Mean of one summand of `ζ^(r)`.
    pub fn alpha_r(&self) -> f64 {
        let p = self.p_r();
        (self.alpha() - f64::from(self.r) * p) / (1.0 - p)
    }

    /// Variance of one summand of `ζ^(r)`.
    pub fn sigma_r_sq(&self) -> f64 {
        let (a, p, r) = (self.alpha(), self.p_r(), f64::from(self.r));
        if a == 0.0 {
            return 0.0;
        }
        a / (1.0 - p) * (1.0 - p - (a - r).powi(2) * p / a)
    }

    /// Largest `k` with `n - kr >= 0` and `k <= N`.
    pub fn max_k(&self) -> u64 {
        (self.points / u64::from(self.r)).min(self.boxes)
    }

    /// `E μ_r = N C(n,r) N^-r (1 - 1/N)^(n-r)`, from linearity over boxes.
    pub fn expected_count(&self) -> f64 {
        let (n, nb, r) = (self.points, self.boxes as f64, u64::from(self.r));
        if n < r {
            return 0.0;
        }
        let tail = if self.boxes == 1 {
            if n == r {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        } else {
            (n - r) as f64 * (-1.0 / nb).ln_1p()
        };
        (nb.ln() + ln_binomial(n, r) - r as f64 * nb.ln() + tail).exp()
    }
}

fn ln_factorial(n: u64) -> f64 {
    ln_gamma(n as f64 + 1.0)
}

fn ln_binomial(n: u64, k: u64) -> f64 {
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

fn ln_poisson_pmf(mean: f64, l: u64) -> f64 {
    if mean == 0.0 {
        return if l == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    l as f64 * mean.ln() - mean - ln_factorial(l)
}

fn poisson_pmf(mean: f64, l: u64) -> f64 {
    ln_poisson_pmf(mean, l).exp()
}

/// Mass function `e^{ln_scale} * values[l]` on `0..values.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledPmf {
    pub ln_scale: f64,
    pub values: Vec<f64>,
}

impl ScaledPmf {
    fn point_mass() -> Self {
        ScaledPmf { ln_scale: 0.0, values: vec![1.0] }
    }

    /// `ln P(X = l)`, `-inf` outside the stored support.
    pub fn ln_at(&self, l: usize) -> f64 {
        match self.values.get(l) {
            Some(&v) if v > 0.0 => self.ln_scale + v.ln(),
            _ => f64::NEG_INFINITY,
        }
    }

    pub fn at(&self, l: usize) -> f64 {
        self.ln_at(l).exp()
    }

    fn rescale(mut self) -> Self {
        let max = self.values.iter().copied().fold(0.0, f64::max);
        if max > 0.0 {
            self.values.iter_mut().for_each(|v| *v /= max);
            self.ln_scale += max.ln();
        }
        self
    }

    /// Convolution restricted to `0..=cap`; exact there since all mass is
    /// nonnegative.
    pub fn convolve(&self, other: &ScaledPmf, cap: usize) -> ScaledPmf {
        let len = (self.values.len() + other.values.len() - 1).min(cap + 1);
        let mut out = vec![0.0; len];
        for (i, &a) in self.values.iter().enumerate().take(len) {
            if a == 0.0 {
                continue;
            }
            for (o, &b) in out[i..].iter_mut().zip(&other.values) {
                *o += a * b;
            }
        }
        ScaledPmf { ln_scale: self.ln_scale + other.ln_scale, values: out }.rescale()
    }

    /// `m`-fold convolution power by repeated squaring.
    pub fn power(&self, m: u64, cap: usize) -> ScaledPmf {
        let mut result = ScaledPmf::point_mass();
        let mut base = self.clone();
        let mut e = m;
        while e > 0 {
            if e & 1 == 1 {
                result = result.convolve(&base, cap);
            }
            e >>= 1;
            if e > 0 {
                base = base.convolve(&base, cap);
            }
        }
        result
    }
}

/// Law of one summand of `ζ^(r)`: Poisson(α) conditioned on `≠ r`, with the
/// support cut where the Poisson tail drops below [`TAIL_MASS`] (and never
/// past `cap`).
pub fn truncated_poisson_pmf(problem: &OccupancyProblem, cap: usize) -> ScaledPmf {
    let a = problem.alpha();
    let p = problem.p_r();
    let mut values = Vec::new();
    let mut mass = 0.0;
    let mut l = 0u64;
    loop {
        let v = poisson_pmf(a, l);
        mass += v;
        values.push(if l == u64::from(problem.r) { 0.0 } else { v / (1.0 - p) });
        let past_mode = l as f64 >= a;
        if values.len() > cap || (past_mode && 1.0 - mass < TAIL_MASS) || (past_mode && v == 0.0) {
            break;
        }
        l += 1;
    }
    values.truncate(cap + 1);
    ScaledPmf { ln_scale: 0.0, values }.rescale()
}

/// Law of `ζ^(r)_m` on `0..=cap`.
pub fn truncated_sum_pmf(problem: &OccupancyProblem, m: u64, cap: usize) -> ScaledPmf {
    truncated_poisson_pmf(problem, cap).power(m, cap)
}

/// One probability of the exact law, kept in log space as well.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactProb {
    pub prob: f64,
    pub ln_prob: f64,
    /// The linear value underflowed; only `ln_prob` is meaningful.
    pub underflow: bool,
    /// Support cap of a single summand.
    pub support_cap: usize,
}

impl ExactProb {
    fn from_ln(ln_prob: f64, support_cap: usize) -> Self {
        let prob = ln_prob.exp();
        ExactProb {
            prob,
            ln_prob,
            underflow: ln_prob.is_finite() && prob < f64::MIN_POSITIVE,
            support_cap,
        }
    }

    fn impossible(support_cap: usize) -> Self {
        ExactProb { prob: 0.0, ln_prob: f64::NEG_INFINITY, underflow: false, support_cap }
    }
}

/// `ln [C(N,k) p^k (1-p)^(N-k) / P(ζ_N = n)]`.
fn ln_prefactor(problem: &OccupancyProblem, k: u64) -> f64 {
    let (n, nb) = (problem.points, problem.boxes);
    let p = problem.p_r();
    let ln_p = if k == 0 { 0.0 } else { k as f64 * p.ln() };
    let ln_q = (nb - k) as f64 * (-p).ln_1p();
    ln_binomial(nb, k) + ln_p + ln_q - ln_poisson_pmf(n as f64, n)
}

fn check_k(problem: &OccupancyProblem, k: u64) -> Option<usize> {
    let need = k.checked_mul(u64::from(problem.r))?;
    if k > problem.boxes || need > problem.points {
        None
    } else {
        Some((problem.points - need) as usize)
    }
}

/// `P(μ_r(n, N) = k)`.
pub fn exact_prob(problem: &OccupancyProblem, k: u64) -> ExactProb {
    let cap = problem.points as usize;
    let summand = truncated_poisson_pmf(problem, cap);
    let support = summand.values.len() - 1;
    let Some(target) = check_k(problem, k) else {
        return ExactProb::impossible(support);
    };
    let law = summand.power(problem.boxes - k, target);
    ExactProb::from_ln(ln_prefactor(problem, k) + law.ln_at(target), support)
}

/// The whole law `P(μ_r = k)` for `k = 0..=max_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyLaw {
    pub problem: OccupancyProblem,
    pub probs: Vec<ExactProb>,
}

impl OccupancyLaw {
    pub fn prob(&self, k: u64) -> f64 {
        self.probs.get(k as usize).map_or(0.0, |p| p.prob)
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().map(|p| p.prob).sum()
    }

    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(k, p)| k as f64 * p.prob).sum()
    }
}

/// Computes every `P(μ_r = k)` at once: one convolution power for the
/// largest `k`, then one extra summand per smaller `k`.
pub fn exact_distribution(problem: &OccupancyProblem) -> OccupancyLaw {
    let cap = problem.points as usize;
    let summand = truncated_poisson_pmf(problem, cap);
    let support = summand.values.len() - 1;
    let k_max = problem.max_k();
    let mut law = summand.power(problem.boxes - k_max, cap);
    let mut probs = vec![ExactProb::impossible(support); k_max as usize + 1];
    for k in (0..=k_max).rev() {
        let target = check_k(problem, k).expect("k within range");
        probs[k as usize] = ExactProb::from_ln(ln_prefactor(problem, k) + law.ln_at(target), support);
        if k > 0 {
            law = law.convolve(&summand, cap);
        }
    }
    OccupancyLaw { problem: *problem, probs }
}

/// Enumerates all `N^n` equally likely assignments and returns the law of
/// `μ_r` as exact counts divided by `N^n`.
pub fn brute_force_distribution(problem: &OccupancyProblem) -> Result<Vec<f64>> {
    let (n, nb) = (problem.points, problem.boxes);
    let total = u32::try_from(n)
        .ok()
        .and_then(|e| nb.checked_pow(e))
        .filter(|&t| t <= BRUTE_FORCE_CAP)
        .ok_or(Error::ResourceLimit {
            what: "occupancy assignments",
            requested: nb.saturating_pow(n.min(64) as u32),
            cap: BRUTE_FORCE_CAP,
        })?;
    let r = problem.r as usize;
    let nb = nb as usize;
    let mut counts = vec![0u64; nb + 1];
    let mut assign = vec![0usize; n as usize];
    let mut occupancy = vec![0usize; nb];
    occupancy[0] = n as usize;
    let mut mu = occupancy.iter().filter(|&&c| c == r).count();
    loop {
        counts[mu] += 1;
        // Odometer step, keeping box occupancies and μ_r up to date.
        let mut i = 0;
        loop {
            if i == assign.len() {
                return Ok(counts.iter().map(|&c| c as f64 / total as f64).collect());
            }
            let old = assign[i];
            let new = (old + 1) % nb;
            for (b, delta) in [(old, -1isize), (new, 1)] {
                mu -= usize::from(occupancy[b] == r);
                occupancy[b] = (occupancy[b] as isize + delta) as usize;
                mu += usize::from(occupancy[b] == r);
            }
            assign[i] = new;
            if new != 0 {
                break;
            }
            i += 1;
        }
    }
}

pub fn brute_force_prob(problem: &OccupancyProblem, k: u64) -> Result<f64> {
    let law = brute_force_distribution(problem)?;
    Ok(law.get(k as usize).copied().unwrap_or(0.0))
}

/// Local normal value `(σ_r sqrt(2πm))^-1 exp(-(l - m α_r)^2 / (2 m σ_r^2))`.
pub fn normal_approx(problem: &OccupancyProblem, m: u64, l: u64) -> Result<f64> {
    if m == 0 {
        return Err(Error::param("normal approximation needs m >= 1"));
    }
    let var = problem.sigma_r_sq();
    if var <= 0.0 || !var.is_finite() {
        return Err(Error::param(format!("σ_r^2 = {var} is not positive")));
    }
    let m = m as f64;
    let d = l as f64 - m * problem.alpha_r();
    Ok((-d * d / (2.0 * m * var)).exp() / (var * 2.0 * std::f64::consts::PI * m).sqrt())
}

/// `P(μ_r = 1) / (N p_r)`, which tends to 1 as `α -> 0` with `N p_r` bounded.
pub fn ratio_check(problem: &OccupancyProblem) -> Result<f64> {
    let expected = problem.boxes as f64 * problem.p_r();
    if expected == 0.0 {
        return Err(Error::param("N p_r vanishes"));
    }
    Ok(exact_prob(problem, 1).prob / expected)
}

/// Empirical law of `μ_r` over seeded uniform assignments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyHistogram {
    pub trials: u64,
    /// `counts[k]` trials ended with `μ_r = k`.
    pub counts: Vec<u64>,
}

impl OccupancyHistogram {
    pub fn pmf(&self, k: u64) -> f64 {
        self.counts.get(k as usize).map_or(0.0, |&c| c as f64 / self.trials as f64)
    }

    /// Bernoulli standard error of [`pmf`](Self::pmf).
    pub fn std_error(&self, k: u64) -> f64 {
        let p = self.pmf(k);
        (p * (1.0 - p) / self.trials as f64).sqrt()
    }
}

pub fn simulate_occupancy(problem: &OccupancyProblem, trials: u64, seed: u64) -> Result<OccupancyHistogram> {
    if trials == 0 {
        return Err(Error::param("need at least one trial"));
    }
    let mut rng = rng_from_seed(derive_seed(seed, &[stream::OCCUPANCY]));
    let nb = problem.boxes as usize;
    let r = problem.r as usize;
    let mut counts = vec![0u64; problem.max_k() as usize + 1];
    let mut occupancy = vec![0usize; nb];
    for _ in 0..trials {
        occupancy.iter_mut().for_each(|c| *c = 0);
        for _ in 0..problem.points {
            occupancy[rng.gen_range(0..nb)] += 1;
        }
        counts[occupancy.iter().filter(|&&c| c == r).count()] += 1;
    }
    Ok(OccupancyHistogram { trials, counts })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prob(n: u64, nb: u64, r: u32) -> OccupancyProblem {
        OccupancyProblem::new(n, nb, r).unwrap()
    }

    #[test]
    fn rejects_bad_problems() {
        assert!(OccupancyProblem::new(3, 0, 2).is_err());
        assert!(OccupancyProblem::new(3, 2, 1).is_err());
    }

    #[test]
    fn small_exact_values() {
        assert!((exact_prob(&prob(2, 2, 2), 1).prob - 0.5).abs() < 1e-12);
        assert!((exact_prob(&prob(3, 3, 3), 1).prob - 1.0 / 9.0).abs() < 1e-12);
        assert_eq!(exact_prob(&prob(3, 3, 2), 2).prob, 0.0);
        assert_eq!(exact_prob(&prob(3, 3, 2), 7).prob, 0.0);
    }

    #[test]
    fn brute_force_examples() {
        assert_eq!(brute_force_prob(&prob(2, 2, 2), 1).unwrap(), 0.5);
        assert_eq!(brute_force_prob(&prob(3, 2, 3), 1).unwrap(), 0.25);
        assert_eq!(brute_force_prob(&prob(3, 2, 3), 5).unwrap(), 0.0);
        assert!(matches!(
            brute_force_distribution(&prob(30, 10, 2)),
            Err(Error::ResourceLimit { .. })
        ));
    }

    #[test]
    fn exact_matches_brute_force() {
        for (n, nb) in [(2, 2), (4, 3), (6, 4), (7, 5), (9, 4), (5, 10), (12, 3)] {
            for r in 2..=4 {
                let p = prob(n, nb, r);
                let bf = brute_force_distribution(&p).unwrap();
                let law = exact_distribution(&p);
                for (k, &want) in bf.iter().enumerate() {
                    assert!((law.prob(k as u64) - want).abs() < 1e-12, "{p:?} k={k}");
                    assert!((exact_prob(&p, k as u64).prob - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn ratio_out_of_regime() {
        let r = ratio_check(&prob(2, 2, 2)).unwrap();
        assert!((r - std::f64::consts::E / 2.0).abs() < 1e-12);
        assert!(ratio_check(&prob(0, 5, 2)).is_err());
    }

    #[test]
    fn ratio_in_regime() {
        let r = ratio_check(&prob(100, 100_000, 2)).unwrap();
        assert!((r - 1.0).abs() < 0.1, "{r}");
    }

    #[test]
    fn normal_peak_and_symmetry() {
        let p = prob(100, 10_000, 2);
        let m = 10_000u64;
        let peak = normal_approx(&p, m, (m as f64 * p.alpha_r()).round() as u64).unwrap();
        let top = 1.0 / (p.sigma_r_sq() * 2.0 * std::f64::consts::PI * m as f64).sqrt();
        assert!((peak / top - 1.0).abs() < 0.01);
        assert!(normal_approx(&p, 0, 1).is_err());
        assert!(normal_approx(&prob(0, 5, 2), 3, 0).is_err());
    }

    #[test]
    fn simulation_is_deterministic() {
        let p = prob(2, 2, 2);
        let h = simulate_occupancy(&p, 1000, 5).unwrap();
        assert_eq!(h, simulate_occupancy(&p, 1000, 5).unwrap());
        let one = simulate_occupancy(&p, 1, 5).unwrap();
        assert_eq!(one.counts.iter().sum::<u64>(), 1);
        assert!(simulate_occupancy(&p, 0, 5).is_err());
    }

    #[test]
    fn derived_quantities() {
        let p = prob(2, 2, 2);
        assert!((p.p_r() - 0.5 * (-1.0f64).exp()).abs() < 1e-15);
        assert!((prob(4, 2, 2).expected_count() - 2.0 * 6.0 / 16.0).abs() < 1e-12);
        assert_eq!(prob(1, 2, 2).expected_count(), 0.0);
    }
}
