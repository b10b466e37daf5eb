//! One-box Carleson tests in the unit disc and the Bloch interpolation
//! predicate for counting profiles.
//!
//! The one-box condition quantifies over all arcs. Two dyadic grids, the
//! second shifted by half a box, stand in for them: every arc of length
//! `ℓ <= 2^-l` lies in a box of level `l - 1` in one of the grids, so the
//! supremum over all arcs is at most [`OneboxReport::comparability`] times
//! the dyadic constant.

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{pseudo_hyperbolic, Point};
use crate::separation::grid_cell;
use crate::sequence::{
    band_upper, series_criterion, Classification, CountingProfile, Criterion, ProfileKind,
    RandomSequence,
};

/// γ values tried when looking for a convergent γ-Carleson series.
pub const GAMMA_GRID: [f64; 6] = [0.70, 0.75, 0.80, 0.85, 0.90, 0.95];

/// Box `S_I` over the arc `I = [index, index + 1) 2^-level` (in turns,
/// shifted by `2^-(level+1)` on the second grid).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CarlesonBox {
    pub level: u32,
    pub index: u64,
    pub shifted: bool,
}

impl CarlesonBox {
    pub fn width(&self) -> f64 {
        band_upper(self.level)
    }

    /// Start of the arc in turns, in `[0, 1)`.
    pub fn start(&self) -> f64 {
        let s = self.index as f64 * self.width() + if self.shifted { self.width() / 2.0 } else { 0.0 };
        s.rem_euclid(1.0)
    }

    pub fn contains(&self, z: &Point) -> bool {
        if z.dim() != 1 || z.norm() == 0.0 {
            return false;
        }
        1.0 - z.norm() <= self.width()
            && grid_cell(z.turns()[0], self.level, self.shifted) == self.index
    }
}

/// Deepest level `l` with `gap <= 2^-l`.
fn deepest_level(gap: f64) -> u32 {
    let mut l = (-gap.log2()).floor().max(0.0) as u32;
    while l > 0 && gap > band_upper(l) {
        l -= 1;
    }
    while gap <= band_upper(l + 1) {
        l += 1;
    }
    l
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneboxRow {
    pub level: u32,
    pub shifted: bool,
    pub max_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneboxReport {
    pub gamma: f64,
    /// `max μ_γ(S_I) / |I|^γ` over both grids.
    pub constant: f64,
    /// Factor `2^γ * 2` relating the dyadic constant to the all-arcs one.
    pub comparability: f64,
    pub rows: Vec<OneboxRow>,
}

impl OneboxReport {
    /// Upper bound for the supremum over all arcs.
    pub fn all_arcs_bound(&self) -> f64 {
        self.comparability * self.constant
    }
}

fn check_disc(seq: &RandomSequence) -> Result<()> {
    if seq.domain().dim() != 1 {
        return Err(Error::input(format!(
            "one-box tests need disc points, got dimension {}",
            seq.domain().dim()
        )));
    }
    Ok(())
}

/// Dyadic one-box constant of `μ_γ = sum (1 - |z_n|^2)^γ δ_{z_n}`.
pub fn onebox_constant(seq: &RandomSequence, gamma: f64) -> Result<OneboxReport> {
    check_disc(seq)?;
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::param(format!("γ must lie in (0, 1], got {gamma}")));
    }
    let mut levels: Vec<[HashMap<u64, f64>; 2]> = Vec::new();
    for p in seq.points() {
        let r = p.norm();
        if r == 0.0 {
            continue;
        }
        let weight = ((1.0 - r) * (1.0 + r)).powf(gamma);
        let theta = p.turns()[0];
        let deepest = deepest_level(1.0 - r) as usize;
        if levels.len() <= deepest {
            levels.resize_with(deepest + 1, Default::default);
        }
        for (l, grids) in levels.iter_mut().enumerate().take(deepest + 1) {
            for (g, cells) in grids.iter_mut().enumerate() {
                *cells.entry(grid_cell(theta, l as u32, g == 1)).or_default() += weight;
            }
        }
    }
    let mut rows = Vec::with_capacity(2 * levels.len());
    for (l, grids) in levels.iter().enumerate() {
        let scale = band_upper(l as u32).powf(gamma);
        for (g, cells) in grids.iter().enumerate() {
            let max = cells.values().copied().fold(0.0, f64::max);
            rows.push(OneboxRow { level: l as u32, shifted: g == 1, max_ratio: max / scale });
        }
    }
    Ok(OneboxReport {
        gamma,
        constant: rows.iter().map(|r| r.max_ratio).fold(0.0, f64::max),
        comparability: gamma.exp2() * 2.0,
        rows,
    })
}

/// `μ_γ(S_I) / |I|^γ` for an arbitrary arc `[start, start + length)` in turns.
pub fn arc_ratio(seq: &RandomSequence, gamma: f64, start: f64, length: f64) -> Result<f64> {
    check_disc(seq)?;
    if !(length > 0.0 && length <= 1.0) {
        return Err(Error::param(format!("arc length must lie in (0, 1], got {length}")));
    }
    let mass: f64 = seq
        .points()
        .iter()
        .filter(|p| {
            let r = p.norm();
            r > 0.0 && 1.0 - r <= length && (p.turns()[0] - start).rem_euclid(1.0) < length
        })
        .map(|p| ((1.0 - p.norm()) * (1.0 + p.norm())).powf(gamma))
        .sum();
    Ok(mass / length.powf(gamma))
}

/// Rows `level,grid,max_ratio` with `grid` either `standard` or `shifted`.
pub fn write_onebox_csv<W: Write>(report: &OneboxReport, mut out: W) -> Result<()> {
    writeln!(out, "level,grid,max_ratio")?;
    for row in &report.rows {
        let grid = if row.shifted { "shifted" } else { "standard" };
        writeln!(out, "{},{grid},{:?}", row.level, row.max_ratio)?;
    }
    Ok(())
}

/// `β(z, w) = atanh ρ(z, w)`.
pub fn hyperbolic_distance(z: &Point, w: &Point) -> Result<f64> {
    if z.dim() != 1 || w.dim() != 1 {
        return Err(Error::input("hyperbolic distance is defined for disc points"));
    }
    Ok(pseudo_hyperbolic(z, w)?.atanh())
}

/// `#{n : ρ(z, z_n) < r}`.
pub fn boe_nicolau_count(seq: &RandomSequence, z: &Point, r: f64) -> Result<usize> {
    check_disc(seq)?;
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::param(format!("radius must lie in (0, 1), got {r}")));
    }
    let mut count = 0;
    for p in seq.points() {
        if pseudo_hyperbolic(z, p)? < r {
            count += 1;
        }
    }
    Ok(count)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlochClass {
    AlmostSurely,
    AlmostNever,
    /// Table profiles: only partial sums are available.
    Indeterminate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlochReport {
    pub class: BlochClass,
    /// Partial sums of `sum N_m^3 2^(-2m)` up to the truncation degree.
    pub partial_sums: Vec<f64>,
    /// `3 beta - 2` for exponential profiles.
    pub exponent: Option<f64>,
}

/// Zero-one law for the random sequence being interpolating for the Bloch
/// space: almost surely iff `sum N_m^3 2^(-2m) < inf`.
pub fn bloch_profile_classifier(profile: &CountingProfile) -> Result<BlochReport> {
    if profile.dim() != 1 {
        return Err(Error::input(format!(
            "Bloch classification needs a disc profile, got dimension {}",
            profile.dim()
        )));
    }
    let mut partial_sums = Vec::with_capacity(profile.truncation_degree() as usize + 1);
    let mut acc = 0.0;
    for (index, n) in profile.entries() {
        let m = index.degree() as usize;
        while partial_sums.len() < m {
            partial_sums.push(acc);
        }
        acc += (n as f64).powi(3) * (-2.0 * m as f64).exp2();
        if partial_sums.len() == m {
            partial_sums.push(acc);
        } else {
            partial_sums[m] = acc;
        }
    }
    while partial_sums.len() <= profile.truncation_degree() as usize {
        partial_sums.push(acc);
    }
    let (class, exponent) = match profile.kind() {
        ProfileKind::Exponential { beta, .. } => {
            let e = 3.0 * beta - 2.0;
            let class = if e < -1e-12 { BlochClass::AlmostSurely } else { BlochClass::AlmostNever };
            (class, Some(e))
        }
        ProfileKind::Table(_) => (BlochClass::Indeterminate, None),
    };
    Ok(BlochReport { class, partial_sums, exponent })
}

/// The same law assembled from the generic series tests: a union of two
/// separated sequences that is also γ-Carleson for some grid `γ < 1`.
pub fn bloch_by_series(profile: &CountingProfile) -> Result<BlochClass> {
    let union = series_criterion(profile, Criterion::UnionM { m: 2 })?.classification;
    let mut gamma = Classification::Diverges;
    for g in GAMMA_GRID {
        match series_criterion(profile, Criterion::GammaCarleson { gamma: g })?.classification {
            Classification::Converges => {
                gamma = Classification::Converges;
                break;
            }
            Classification::Indeterminate => gamma = Classification::Indeterminate,
            Classification::Diverges => {}
        }
    }
    Ok(match (union, gamma) {
        (Classification::Converges, Classification::Converges) => BlochClass::AlmostSurely,
        (Classification::Diverges, _) | (_, Classification::Diverges) => BlochClass::AlmostNever,
        _ => BlochClass::Indeterminate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{Domain, C64};
    use crate::sequence::RandomSequence;

    fn disc(z: &[(f64, f64)]) -> RandomSequence {
        let v: Vec<C64> = z.iter().map(|&(a, b)| C64::new(a, b)).collect();
        RandomSequence::disc(&v).unwrap()
    }

    fn pt(a: f64, b: f64) -> Point {
        Point::disc(C64::new(a, b)).unwrap()
    }

    #[test]
    fn empty_sequence_has_zero_constant() {
        let seq = disc(&[]);
        assert_eq!(onebox_constant(&seq, 1.0).unwrap().constant, 0.0);
    }

    #[test]
    fn single_point_ratio() {
        for m in 1..12 {
            let r = 1.0 - band_upper(m);
            let rep = onebox_constant(&disc(&[(r, 0.0)]), 1.0).unwrap();
            assert!(rep.constant >= 1.0 && rep.constant < 2.0, "m={m}: {}", rep.constant);
            let want = (1.0 - r * r) / band_upper(m);
            assert!((rep.constant - want).abs() < 1e-12);
        }
    }

    #[test]
    fn opposite_points_match_one_point() {
        let r = 1.0 - band_upper(6);
        let one = onebox_constant(&disc(&[(r, 0.0)]), 0.8).unwrap().constant;
        let two = onebox_constant(&disc(&[(r, 0.0), (-r, 0.0)]), 0.8).unwrap().constant;
        assert!((one - two).abs() < 1e-12);
    }

    #[test]
    fn deepest_level_edges() {
        assert_eq!(deepest_level(1.0), 0);
        assert_eq!(deepest_level(0.5), 1);
        assert_eq!(deepest_level(0.49), 1);
        assert_eq!(deepest_level(0.26), 1);
        assert_eq!(deepest_level(0.25), 2);
    }

    #[test]
    fn rejects_bad_inputs() {
        let ball = RandomSequence::from_points(Domain::Polydisc(2), vec![Point::origin(Domain::Polydisc(2))]).unwrap();
        assert!(onebox_constant(&ball, 1.0).is_err());
        assert!(onebox_constant(&disc(&[]), 0.0).is_err());
        assert!(boe_nicolau_count(&disc(&[]), &pt(0.0, 0.0), 1.0).is_err());
    }

    #[test]
    fn hyperbolic_distance_examples() {
        let z = pt(0.3, -0.2);
        assert_eq!(hyperbolic_distance(&z, &z).unwrap(), 0.0);
        let d = hyperbolic_distance(&pt(0.0, 0.0), &pt(0.5, 0.0)).unwrap();
        assert!((d - 0.549_306_144_334_054_8).abs() < 1e-12);
        let d2 = hyperbolic_distance(&pt(0.5, 0.0), &pt(-0.5, 0.0)).unwrap();
        assert!((d2 - 2.0 * d).abs() < 1e-12);
    }

    #[test]
    fn boe_nicolau_examples() {
        let seq = disc(&[(0.0, 0.0), (0.5, 0.0)]);
        assert_eq!(boe_nicolau_count(&seq, &pt(0.0, 0.0), 0.6).unwrap(), 2);
        assert_eq!(boe_nicolau_count(&seq, &pt(0.0, 0.0), 0.4).unwrap(), 1);
        assert_eq!(boe_nicolau_count(&seq, &pt(0.0, 0.7), 1e-9).unwrap(), 0);
        assert!(boe_nicolau_count(&seq, &pt(0.5, 0.0), 1e-12).unwrap() >= 1);
    }

    #[test]
    fn bloch_examples() {
        let p = |beta| CountingProfile::exponential(Domain::Polydisc(1), 1.0, beta, 10).unwrap();
        assert_eq!(bloch_profile_classifier(&p(0.5)).unwrap().class, BlochClass::AlmostSurely);
        assert_eq!(bloch_profile_classifier(&p(2.0 / 3.0)).unwrap().class, BlochClass::AlmostNever);
        assert_eq!(bloch_profile_classifier(&p(1.0)).unwrap().class, BlochClass::AlmostNever);
        let flat = CountingProfile::exponential(Domain::Polydisc(2), 1.0, 0.5, 4).unwrap();
        assert!(bloch_profile_classifier(&flat).is_err());
    }

    #[test]
    fn bloch_partial_sums() {
        let p = CountingProfile::exponential(Domain::Polydisc(1), 1.0, 2.0 / 3.0, 6).unwrap();
        let rep = bloch_profile_classifier(&p).unwrap();
        assert_eq!(rep.partial_sums.len(), 7);
        assert!(rep.partial_sums.windows(2).all(|w| w[1] >= w[0]));
    }
}
