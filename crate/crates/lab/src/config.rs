//! Experiment configuration files.
//!
//! A campaign is described by one TOML file. Top-level keys name the
//! experiment and its sweep; optional sections tune the sampler and the
//! per-kind metrics. Unknown keys anywhere are rejected.
//!
//! ```toml
//! id = "carleson-subcritical"
//! kind = "carleson_trend"
//! depths = [8, 10, 12, 14]
//! trials = 20
//! base_seed = 1
//!
//! [profile]
//! dim = 1
//! beta = 0.5
//! ```

use std::path::{Path, PathBuf};

use carleson_core::carleson_disc::GAMMA_GRID;
use carleson_core::kernel::{Domain, KernelSpec};
use carleson_core::linalg::PowerOptions;
use carleson_core::sequence::{CountingProfile, RadiusPlacement, SampleConfig, DEFAULT_POINT_CAP};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    CarlesonTrend,
    SeparationLaw,
    OccupancyRatio,
    ChernoffTail,
    ExpectedEntry,
    BallTrend,
    DirichletTrend,
    BlochLaw,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::CarlesonTrend => "carleson_trend",
            ExperimentKind::SeparationLaw => "separation_law",
            ExperimentKind::OccupancyRatio => "occupancy_ratio",
            ExperimentKind::ChernoffTail => "chernoff_tail",
            ExperimentKind::ExpectedEntry => "expected_entry",
            ExperimentKind::BallTrend => "ball_trend",
            ExperimentKind::DirichletTrend => "dirichlet_trend",
            ExperimentKind::BlochLaw => "bloch_law",
        }
    }

    /// Meaning of one entry of `depths` for this kind.
    pub fn depth_meaning(self) -> &'static str {
        match self {
            ExperimentKind::OccupancyRatio => "N = round(boxes_base^depth) boxes",
            ExperimentKind::ChernoffTail => "truncation degree L",
            ExperimentKind::ExpectedEntry => "dyadic band of both radii",
            _ => "truncation degree of the counting profile",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    #[default]
    Polydisc,
    Ball,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    #[default]
    Midpoint,
    UniformInBand,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProfileConfig {
    pub domain: DomainKind,
    pub dim: usize,
    pub c: f64,
    pub beta: f64,
    pub placement: Placement,
    pub point_cap: u64,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        ProfileConfig {
            domain: DomainKind::Polydisc,
            dim: 1,
            c: 1.0,
            beta: 0.5,
            placement: Placement::Midpoint,
            point_cap: DEFAULT_POINT_CAP,
        }
    }
}

impl ProfileConfig {
    pub fn domain(&self) -> Domain {
        match self.domain {
            DomainKind::Polydisc => Domain::Polydisc(self.dim),
            DomainKind::Ball => Domain::Ball(self.dim),
        }
    }

    pub fn profile(&self, depth: u32) -> carleson_core::Result<CountingProfile> {
        CountingProfile::exponential(self.domain(), self.c, self.beta, depth)
    }

    pub fn sample_config(&self) -> SampleConfig {
        SampleConfig {
            placement: match self.placement {
                Placement::Midpoint => RadiusPlacement::Midpoint,
                Placement::UniformInBand => RadiusPlacement::UniformInBand,
            },
            point_cap: self.point_cap,
        }
    }
}

/// Kernel parameter `a` for the Dirichlet-type and Besov–Sobolev trends.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelConfig {
    pub a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PowerConfig {
    pub tol: f64,
    pub max_iter: usize,
    /// Sequences up to this many points get a dense Gramian.
    pub dense_cap: usize,
}

impl Default for PowerConfig {
    fn default() -> Self {
        let d = PowerOptions::default();
        PowerConfig {
            tol: d.tol,
            max_iter: d.max_iter,
            dense_cap: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeparationConfig {
    /// Number `M` of separated sequences allowed in the union.
    pub m: usize,
    /// Clusters are counted in `ρ`-balls of radius `2^-cluster_scale`.
    pub cluster_scale: u32,
    /// Collisions are reported separately for regions of degree above this.
    pub collisions_beyond: u32,
    /// Threshold for the greedy partition; skipped when absent.
    pub partition_delta: Option<f64>,
}

impl Default for SeparationConfig {
    fn default() -> Self {
        SeparationConfig {
            m: 1,
            cluster_scale: 2,
            collisions_beyond: 12,
            partition_delta: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OccupancyConfig {
    pub r: u32,
    pub boxes_base: f64,
    /// `n = round(N^points_exponent)`.
    pub points_exponent: f64,
    /// Monte Carlo assignments per trial; 0 disables the cross-check.
    pub mc_trials: u64,
}

impl Default for OccupancyConfig {
    fn default() -> Self {
        OccupancyConfig {
            r: 2,
            boxes_base: 10.0,
            points_exponent: 0.5,
            mc_trials: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChernoffConfig {
    pub points: usize,
    pub radius: f64,
    pub deltas: Vec<f64>,
}

impl Default for ChernoffConfig {
    fn default() -> Self {
        ChernoffConfig {
            points: 200,
            radius: 0.5,
            deltas: vec![1.0, 2.0, 4.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExpectedEntryConfig {
    pub angle_draws: u64,
}

impl Default for ExpectedEntryConfig {
    fn default() -> Self {
        ExpectedEntryConfig { angle_draws: 100_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BlochConfig {
    pub gammas: Vec<f64>,
}

impl Default for BlochConfig {
    fn default() -> Self {
        BlochConfig {
            gammas: GAMMA_GRID.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub id: String,
    pub kind: ExperimentKind,
    pub depths: Vec<u32>,
    pub trials: u32,
    pub base_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub profile: ProfileConfig,
    #[serde(default)]
    pub kernel: KernelConfig,
    #[serde(default)]
    pub power: PowerConfig,
    #[serde(default)]
    pub separation: SeparationConfig,
    #[serde(default)]
    pub occupancy: OccupancyConfig,
    #[serde(default)]
    pub chernoff: ChernoffConfig,
    #[serde(default)]
    pub expected_entry: ExpectedEntryConfig,
    #[serde(default)]
    pub bloch: BlochConfig,
}

fn bad(msg: impl Into<String>) -> LabError {
    LabError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| bad(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            LabError::Config(msg) => bad(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn power_options(&self, seed: u64) -> PowerOptions {
        PowerOptions {
            tol: self.power.tol,
            max_iter: self.power.max_iter,
            seed,
        }
    }

    /// Kernel for the Gram-norm trends.
    pub fn kernel_spec(&self) -> carleson_core::Result<KernelSpec> {
        let d = self.profile.dim;
        match self.kind {
            ExperimentKind::BallTrend => KernelSpec::besov_sobolev(self.kernel.a, d),
            ExperimentKind::DirichletTrend => KernelSpec::dirichlet(self.kernel.a, d),
            _ => KernelSpec::szego(d),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty()
            || !self
                .id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        {
            return Err(bad(format!(
                "id {:?} must be nonempty and use only letters, digits, '-' and '_'",
                self.id
            )));
        }
        if self.depths.is_empty() {
            return Err(bad("depths must not be empty"));
        }
        if self.depths.windows(2).any(|w| w[0] >= w[1]) {
            return Err(bad(format!("depths {:?} must be strictly increasing", self.depths)));
        }
        if self.trials == 0 {
            return Err(bad("trials must be at least 1"));
        }
        let p = &self.profile;
        if p.dim == 0 {
            return Err(bad("profile.dim must be positive"));
        }
        if !(p.c > 0.0 && p.c.is_finite() && p.beta >= 0.0 && p.beta.is_finite()) {
            return Err(bad("profile.c must be positive and profile.beta nonnegative"));
        }
        let want_ball = self.kind == ExperimentKind::BallTrend;
        if want_ball != (p.domain == DomainKind::Ball) {
            return Err(bad(format!(
                "{} needs a {} profile",
                self.kind.name(),
                if want_ball { "ball" } else { "polydisc" }
            )));
        }
        if matches!(self.kind, ExperimentKind::BlochLaw | ExperimentKind::ChernoffTail) && p.dim != 1 {
            return Err(bad(format!("{} is defined for dim = 1", self.kind.name())));
        }
        if matches!(
            self.kind,
            ExperimentKind::CarlesonTrend | ExperimentKind::BallTrend | ExperimentKind::DirichletTrend
        ) {
            self.kernel_spec().map_err(|e| bad(e.to_string()))?;
            if !(self.power.tol > 0.0 && self.power.max_iter > 0) {
                return Err(bad("power.tol and power.max_iter must be positive"));
            }
        }
        match self.kind {
            ExperimentKind::SeparationLaw => {
                if let Some(delta) = self.separation.partition_delta {
                    if !(delta > 0.0 && delta < 1.0) {
                        return Err(bad("separation.partition_delta must lie in (0, 1)"));
                    }
                }
            }
            ExperimentKind::OccupancyRatio => {
                let o = &self.occupancy;
                if o.r < 2 || !(o.boxes_base > 1.0) || !(o.points_exponent > 0.0) {
                    return Err(bad("occupancy needs r >= 2, boxes_base > 1, points_exponent > 0"));
                }
            }
            ExperimentKind::ChernoffTail => {
                let c = &self.chernoff;
                if c.points == 0 || !(0.0..1.0).contains(&c.radius) || c.deltas.iter().any(|d| !(*d > 0.0)) {
                    return Err(bad("chernoff needs points > 0, radius in [0, 1), positive deltas"));
                }
            }
            ExperimentKind::ExpectedEntry => {
                if self.expected_entry.angle_draws < 2 {
                    return Err(bad("expected_entry.angle_draws must be at least 2"));
                }
            }
            ExperimentKind::BlochLaw => {
                if self.bloch.gammas.iter().any(|g| !(*g > 0.0 && *g <= 1.0)) {
                    return Err(bad("bloch.gammas must lie in (0, 1]"));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
id = "t"
kind = "carleson_trend"
depths = [4, 6]
trials = 2
base_seed = 7
"#;

    #[test]
    fn minimal_config_uses_defaults() {
        let c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.profile, ProfileConfig::default());
        assert_eq!(c.kind, ExperimentKind::CarlesonTrend);
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let typo = format!("{MINIMAL}\nbase_sed = 3\n");
        assert!(matches!(ExperimentConfig::from_toml(&typo), Err(LabError::Config(_))));
        let nested = format!("{MINIMAL}\n[profile]\nbta = 0.5\n");
        assert!(ExperimentConfig::from_toml(&nested).is_err());
    }

    #[test]
    fn invariants_are_checked() {
        for (from, to) in [
            ("depths = [4, 6]", "depths = [6, 4]"),
            ("depths = [4, 6]", "depths = []"),
            ("trials = 2", "trials = 0"),
            ("id = \"t\"", "id = \"a b\""),
            ("kind = \"carleson_trend\"", "kind = \"ball_trend\""),
            ("kind = \"carleson_trend\"", "kind = \"nonsense\""),
        ] {
            let text = MINIMAL.replace(from, to);
            assert!(matches!(ExperimentConfig::from_toml(&text), Err(LabError::Config(_))), "{to}");
        }
    }
}
