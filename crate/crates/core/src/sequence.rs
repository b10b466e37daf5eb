//! Dyadic regions, counting profiles and seeded random sequences with
//! prescribed radii.
//!
//! A polydisc point `z` lies in the region `A_m`, `m = (m_1, .., m_d)`, when
//! `2^-(m_i+1) <= 1 - |z_i| < 2^-m_i` for every coordinate. Ball points use a
//! single shell index on `1 - |z|`. The band `m = 0` is closed at the top so
//! that the origin is classifiable.
//!
//! A [`CountingProfile`] prescribes how many points `N_m` each region holds.
//! Sampling places `N_m` radii in the band of `A_m` and draws the angular parts
//! uniformly: uniform on the torus for the polydisc, uniform on the sphere for
//! the ball.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::kernel::{Domain, Point, C64};
use crate::rng::{derive_seed, rng_from_seed, stream};

/// Default cap on the number of points in one generated sequence.
pub const DEFAULT_POINT_CAP: u64 = 200_000;

/// Deepest band whose points stay clear of the boundary guard.
pub const MAX_BAND: u32 = 38;

/// Exponents within this distance of zero count as the boundary case.
const EXPONENT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DyadicIndex {
    m: Vec<u32>,
    degree: u32,
}

impl DyadicIndex {
    pub fn new(m: Vec<u32>) -> Self {
        let degree = m.iter().sum();
        DyadicIndex { m, degree }
    }

    /// A ball shell index.
    pub fn shell(m: u32) -> Self {
        DyadicIndex::new(vec![m])
    }

    pub fn m(&self) -> &[u32] {
        &self.m
    }

    /// `|m| = m_1 + .. + m_d`.
    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn dim(&self) -> usize {
        self.m.len()
    }
}

impl std::fmt::Display for DyadicIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.m.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

/// Band index of a gap `1 - |z|` in `(0, 1]`.
pub fn band_of_gap(gap: f64) -> u32 {
    debug_assert!(gap > 0.0 && gap <= 1.0);
    let mut m = (-gap.log2()).floor().max(0.0) as u32;
    while m > 0 && gap >= band_upper(m) {
        m -= 1;
    }
    while gap < band_lower(m) {
        m += 1;
    }
    m
}

/// Lower edge `2^-(m+1)` of the gap band `m`.
pub fn band_lower(m: u32) -> f64 {
    (-(m as f64) - 1.0).exp2()
}

/// Upper edge `2^-m` of the gap band `m`.
pub fn band_upper(m: u32) -> f64 {
    (-(m as f64)).exp2()
}

/// Radius whose gap sits at the midpoint `3 * 2^-(m+2)` of band `m`.
pub fn band_midpoint_radius(m: u32) -> f64 {
    1.0 - 3.0 * (-(m as f64) - 2.0).exp2()
}

/// Dyadic region containing `z`.
pub fn region_of_point(z: &Point) -> DyadicIndex {
    match z.domain() {
        Domain::Polydisc(_) => {
            DyadicIndex::new(z.coords().iter().map(|c| band_of_gap(1.0 - c.norm())).collect())
        }
        Domain::Ball(_) => DyadicIndex::shell(band_of_gap(1.0 - z.norm())),
    }
}

/// Number of multi-indices in `N^d` of degree `s`: `binom(s + d - 1, d - 1)`.
pub fn multi_index_count(s: u32, d: usize) -> f64 {
    let mut acc = 1.0;
    for i in 1..d {
        acc *= (s as f64 + i as f64) / i as f64;
    }
    acc.round()
}

/// All multi-indices of `N^d` with degree exactly `s`, in lexicographic order.
pub fn multi_indices_of_degree(s: u32, d: usize) -> Vec<DyadicIndex> {
    fn rec(remaining: u32, slots: usize, prefix: &mut Vec<u32>, out: &mut Vec<DyadicIndex>) {
        if slots == 1 {
            prefix.push(remaining);
            out.push(DyadicIndex::new(prefix.clone()));
            prefix.pop();
            return;
        }
        for v in 0..=remaining {
            prefix.push(v);
            rec(remaining - v, slots - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if d > 0 {
        rec(s, d, &mut Vec::with_capacity(d), &mut out);
    }
    out
}

/// `ceil(c * 2^(beta * degree))`, snapping values within rounding error of an
/// integer to that integer so that e.g. `2^((1/3) * 3)` yields 2 and not 3.
pub fn exponential_count(c: f64, beta: f64, degree: u32) -> u64 {
    let x = c * (beta * degree as f64).exp2();
    if !x.is_finite() || x >= u64::MAX as f64 {
        return u64::MAX;
    }
    let nearest = x.round();
    if (x - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest as u64
    } else {
        x.ceil() as u64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProfileKind {
    /// `N_m = ceil(c * 2^(beta |m|))` up to the truncation degree.
    Exponential { c: f64, beta: f64 },
    /// Explicit counts; indices not listed hold no points.
    Table(BTreeMap<DyadicIndex, u64>),
}

/// The map `m -> N_m`, truncated at a maximal degree.
#[derive(Debug, Clone, PartialEq)]
pub struct CountingProfile {
    kind: ProfileKind,
    domain: Domain,
    truncation_degree: u32,
}

impl CountingProfile {
    pub fn exponential(domain: Domain, c: f64, beta: f64, truncation_degree: u32) -> Result<Self> {
        if domain.dim() == 0 {
            return Err(Error::param("profile dimension must be positive"));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::param(format!("profile constant {c} must be positive")));
        }
        if !beta.is_finite() {
            return Err(Error::param("profile exponent must be finite"));
        }
        Ok(CountingProfile {
            kind: ProfileKind::Exponential { c, beta },
            domain,
            truncation_degree,
        })
    }

    /// Explicit table. The truncation degree is the largest listed degree.
    pub fn table(domain: Domain, counts: BTreeMap<DyadicIndex, u64>) -> Result<Self> {
        let index_dim = index_dim(domain);
        if let Some(bad) = counts.keys().find(|k| k.dim() != index_dim) {
            return Err(Error::input(format!(
                "index {bad} has {} components, expected {index_dim}",
                bad.dim()
            )));
        }
        let truncation_degree = counts.keys().map(DyadicIndex::degree).max().unwrap_or(0);
        Ok(CountingProfile {
            kind: ProfileKind::Table(counts),
            domain,
            truncation_degree,
        })
    }

    pub fn kind(&self) -> &ProfileKind {
        &self.kind
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn truncation_degree(&self) -> u32 {
        self.truncation_degree
    }

    /// Same profile truncated at a different degree (exponential profiles only
    /// change their range; tables drop deeper entries).
    pub fn with_truncation(&self, truncation_degree: u32) -> Self {
        let kind = match &self.kind {
            ProfileKind::Exponential { .. } => self.kind.clone(),
            ProfileKind::Table(t) => ProfileKind::Table(
                t.iter()
                    .filter(|(k, _)| k.degree() <= truncation_degree)
                    .map(|(k, v)| (k.clone(), *v))
                    .collect(),
            ),
        };
        CountingProfile {
            kind,
            domain: self.domain,
            truncation_degree,
        }
    }

    pub fn count(&self, index: &DyadicIndex) -> u64 {
        if index.degree() > self.truncation_degree {
            return 0;
        }
        match &self.kind {
            ProfileKind::Exponential { c, beta } => exponential_count(*c, *beta, index.degree()),
            ProfileKind::Table(t) => t.get(index).copied().unwrap_or(0),
        }
    }

    /// Nonzero `(m, N_m)` pairs ordered by degree, then lexicographically.
    pub fn entries(&self) -> Vec<(DyadicIndex, u64)> {
        match &self.kind {
            ProfileKind::Exponential { c, beta } => {
                let d = index_dim(self.domain);
                (0..=self.truncation_degree)
                    .flat_map(|s| {
                        let n = exponential_count(*c, *beta, s);
                        multi_indices_of_degree(s, d).into_iter().map(move |m| (m, n))
                    })
                    .filter(|(_, n)| *n > 0)
                    .collect()
            }
            ProfileKind::Table(t) => {
                let mut v: Vec<_> = t
                    .iter()
                    .filter(|(_, &n)| n > 0)
                    .map(|(k, &n)| (k.clone(), n))
                    .collect();
                v.sort_by(|a, b| (a.0.degree(), &a.0.m).cmp(&(b.0.degree(), &b.0.m)));
                v
            }
        }
    }

    pub fn total_points(&self) -> u64 {
        self.entries()
            .iter()
            .fold(0u64, |acc, (_, n)| acc.saturating_add(*n))
    }
}

/// Number of components of a region index: `d` on the polydisc, 1 on the ball.
pub fn index_dim(domain: Domain) -> usize {
    match domain {
        Domain::Polydisc(d) => d,
        Domain::Ball(_) => 1,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RadiusPlacement {
    /// Gap `1 - r` at the band midpoint `3 * 2^-(m+2)`.
    #[default]
    Midpoint,
    /// Gap drawn uniformly from the interior of `[2^-(m+1), 2^-m)`.
    UniformInBand,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleConfig {
    pub placement: RadiusPlacement,
    pub point_cap: u64,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig {
            placement: RadiusPlacement::Midpoint,
            point_cap: DEFAULT_POINT_CAP,
        }
    }
}

/// `N_m` radius tuples for every region of the profile, in profile order.
pub fn radii_from_profile(
    profile: &CountingProfile,
    config: &SampleConfig,
    seed: u64,
) -> Result<Vec<(DyadicIndex, Vec<f64>)>> {
    let total = profile.total_points();
    if total > config.point_cap {
        return Err(Error::ResourceLimit {
            what: "sequence points",
            requested: total,
            cap: config.point_cap,
        });
    }
    let entries = profile.entries();
    if let Some((idx, _)) = entries.iter().find(|(k, _)| k.m().iter().any(|&m| m > MAX_BAND)) {
        return Err(Error::param(format!(
            "region {idx} lies beyond band {MAX_BAND}, inside the boundary guard"
        )));
    }
    let mut rng = rng_from_seed(derive_seed(seed, &[stream::RADII]));
    let mut out = Vec::with_capacity(total as usize);
    for (idx, n) in entries {
        for _ in 0..n {
            let radii = idx
                .m()
                .iter()
                .map(|&m| match config.placement {
                    RadiusPlacement::Midpoint => band_midpoint_radius(m),
                    RadiusPlacement::UniformInBand => {
                        let (lo, hi) = (band_lower(m), band_upper(m));
                        let u: f64 = rng.gen_range(1e-9..1.0 - 1e-9);
                        1.0 - (lo + u * (hi - lo))
                    }
                })
                .collect();
            out.push((idx.clone(), radii));
        }
    }
    Ok(out)
}

/// A realized finite sequence with the region label of every point.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomSequence {
    points: Vec<Point>,
    regions: Vec<DyadicIndex>,
    seed: u64,
    profile: CountingProfile,
}

impl RandomSequence {
    /// Wraps explicit points; regions are computed and the profile is the
    /// table of observed counts.
    pub fn from_points(domain: Domain, points: Vec<Point>) -> Result<Self> {
        if let Some(p) = points.iter().find(|p| p.domain() != domain) {
            return Err(Error::input(format!(
                "point in {:?} does not belong to {domain:?}",
                p.domain()
            )));
        }
        let regions: Vec<DyadicIndex> = points.iter().map(region_of_point).collect();
        let mut counts = BTreeMap::new();
        for r in &regions {
            *counts.entry(r.clone()).or_insert(0) += 1;
        }
        let profile = CountingProfile::table(domain, counts)?;
        Ok(RandomSequence {
            points,
            regions,
            seed: 0,
            profile,
        })
    }

    /// Convenience constructor for real or complex disc points.
    pub fn disc(values: &[C64]) -> Result<Self> {
        let pts = values.iter().map(|&z| Point::disc(z)).collect::<Result<Vec<_>>>()?;
        RandomSequence::from_points(Domain::Polydisc(1), pts)
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn regions(&self) -> &[DyadicIndex] {
        &self.regions
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn profile(&self) -> &CountingProfile {
        &self.profile
    }

    pub fn domain(&self) -> Domain {
        self.profile.domain()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Largest region degree present, or `None` for an empty sequence.
    pub fn max_degree(&self) -> Option<u32> {
        self.regions.iter().map(DyadicIndex::degree).max()
    }

    /// Sub-sequence of the points whose region degree lies in `[lo, hi]`.
    pub fn degree_window(&self, lo: u32, hi: u32) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| (lo..=hi).contains(&self.regions[i].degree()))
            .collect()
    }

    /// First `n` points (with their labels) as a new sequence.
    pub fn prefix(&self, n: usize) -> RandomSequence {
        let n = n.min(self.len());
        RandomSequence {
            points: self.points[..n].to_vec(),
            regions: self.regions[..n].to_vec(),
            seed: self.seed,
            profile: self.profile.clone(),
        }
    }

    /// Observed `N_m` counts.
    pub fn region_counts(&self) -> BTreeMap<DyadicIndex, u64> {
        let mut counts = BTreeMap::new();
        for r in &self.regions {
            *counts.entry(r.clone()).or_insert(0) += 1;
        }
        counts
    }
}

/// Random sequence on the polydisc: prescribed radii, i.i.d. uniform angles.
pub fn sample_polydisc(
    profile: &CountingProfile,
    config: &SampleConfig,
    seed: u64,
) -> Result<RandomSequence> {
    let Domain::Polydisc(d) = profile.domain() else {
        return Err(Error::input("sample_polydisc needs a polydisc profile"));
    };
    let radii = radii_from_profile(profile, config, seed)?;
    let mut rng = rng_from_seed(derive_seed(seed, &[stream::ANGLES]));
    let mut points = Vec::with_capacity(radii.len());
    let mut regions = Vec::with_capacity(radii.len());
    for (idx, r) in radii {
        let coords = r
            .iter()
            .map(|&ri| {
                let theta: f64 = rng.gen();
                C64::from_polar(ri, std::f64::consts::TAU * theta)
            })
            .collect();
        points.push(Point::new(Domain::Polydisc(d), coords)?);
        regions.push(idx);
    }
    Ok(RandomSequence {
        points,
        regions,
        seed,
        profile: profile.clone(),
    })
}

/// Random sequence on the ball: `lambda_n = r_n xi_n`, `xi_n` uniform on the
/// unit sphere of `C^d` (a normalized standard Gaussian in `R^2d`).
pub fn sample_ball(
    profile: &CountingProfile,
    config: &SampleConfig,
    seed: u64,
) -> Result<RandomSequence> {
    let Domain::Ball(d) = profile.domain() else {
        return Err(Error::input("sample_ball needs a ball profile"));
    };
    let radii = radii_from_profile(profile, config, seed)?;
    let mut rng = rng_from_seed(derive_seed(seed, &[stream::SPHERE]));
    let mut points = Vec::with_capacity(radii.len());
    let mut regions = Vec::with_capacity(radii.len());
    for (idx, r) in radii {
        let xi = sphere_point(&mut rng, d);
        let coords = xi.iter().map(|c| c * r[0]).collect();
        points.push(Point::new(Domain::Ball(d), coords)?);
        regions.push(idx);
    }
    Ok(RandomSequence {
        points,
        regions,
        seed,
        profile: profile.clone(),
    })
}

fn sphere_point<R: Rng>(rng: &mut R, d: usize) -> Vec<C64> {
    loop {
        let v: Vec<C64> = (0..d)
            .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-300 {
            return v.into_iter().map(|c| c / norm).collect();
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Criterion {
    /// `sup_m N_m 2^-((1-eps)|m|) < inf` (polydisc Carleson threshold).
    Carleson { epsilon: f64 },
    /// `sum N_m^(1+M) 2^(-M|m|) < inf` (union of `M` separated sequences).
    UnionM { m: u32 },
    /// `sum N_m 2^(-gamma m) < inf`.
    GammaCarleson { gamma: f64 },
    /// `sum N_m^2 2^-m < inf`.
    Cochran,
    /// `sum N_m 2^(-(1-a)|m|) < inf` (finite measure for Dirichlet-type kernels).
    DirichletFinite { a: f64 },
    /// `sup_m N_m 2^(-d(1-eps)m) < inf` (ball Carleson threshold).
    BallCarleson { epsilon: f64 },
}

impl Criterion {
    fn is_sup(self) -> bool {
        matches!(self, Criterion::Carleson { .. } | Criterion::BallCarleson { .. })
    }

    /// Summand (or sup-candidate) for a region of degree `s` with `n` points.
    fn term(self, n: f64, s: f64, d: usize) -> f64 {
        let pow2 = |e: f64| e.exp2();
        match self {
            Criterion::Carleson { epsilon } => n * pow2(-(1.0 - epsilon) * s),
            Criterion::UnionM { m } => {
                let m = m as f64;
                n.powf(1.0 + m) * pow2(-m * s)
            }
            Criterion::GammaCarleson { gamma } => n * pow2(-gamma * s),
            Criterion::Cochran => n * n * pow2(-s),
            Criterion::DirichletFinite { a } => n * pow2(-(1.0 - a) * s),
            Criterion::BallCarleson { epsilon } => n * pow2(-(d as f64) * (1.0 - epsilon) * s),
        }
    }

    /// Growth exponent of the term for `N_m ~ 2^(beta |m|)`.
    fn exponent(self, beta: f64, d: usize) -> f64 {
        match self {
            Criterion::Carleson { epsilon } => beta - (1.0 - epsilon),
            Criterion::UnionM { m } => (1.0 + m as f64) * beta - m as f64,
            Criterion::GammaCarleson { gamma } => beta - gamma,
            Criterion::Cochran => 2.0 * beta - 1.0,
            Criterion::DirichletFinite { a } => beta - (1.0 - a),
            Criterion::BallCarleson { epsilon } => beta - d as f64 * (1.0 - epsilon),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    Converges,
    Diverges,
    Indeterminate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesReport {
    pub classification: Classification,
    /// Partial sums by degree `0..=truncation`. Sup-type criteria report the
    /// running maximum instead.
    pub partial_sums: Vec<f64>,
    /// Growth exponent for exponential profiles.
    pub exponent: Option<f64>,
}

/// Evaluates a growth criterion on a profile: analytic classification for
/// exponential profiles, partial sums for all.
///
/// Sup-type criteria ([`Criterion::Carleson`], [`Criterion::BallCarleson`])
/// report `Converges` when the bound holds, including the boundary exponent.
/// Series criteria classify an exponent of exactly zero as `Diverges`.
pub fn series_criterion(profile: &CountingProfile, criterion: Criterion) -> Result<SeriesReport> {
    if matches!(criterion, Criterion::BallCarleson { .. }) && profile.domain().is_polydisc() {
        return Err(Error::input("ball criterion applied to a polydisc profile"));
    }
    let d = profile.dim();
    let depth = profile.truncation_degree() as usize;
    let mut per_degree = vec![Vec::new(); depth + 1];
    match profile.kind() {
        ProfileKind::Exponential { c, beta } => {
            let mult_dim = index_dim(profile.domain());
            for (s, slot) in per_degree.iter_mut().enumerate() {
                let n = exponential_count(*c, *beta, s as u32) as f64;
                slot.push((criterion.term(n, s as f64, d), multi_index_count(s as u32, mult_dim)));
            }
        }
        ProfileKind::Table(t) => {
            for (idx, &n) in t {
                if idx.degree() as usize <= depth {
                    per_degree[idx.degree() as usize]
                        .push((criterion.term(n as f64, idx.degree() as f64, d), 1.0));
                }
            }
        }
    }
    let mut partial_sums = Vec::with_capacity(depth + 1);
    let mut acc = 0.0_f64;
    for terms in &per_degree {
        for &(value, multiplicity) in terms {
            if criterion.is_sup() {
                acc = acc.max(value);
            } else {
                acc += value * multiplicity;
            }
        }
        partial_sums.push(acc);
    }
    let (classification, exponent) = match profile.kind() {
        ProfileKind::Exponential { beta, .. } => {
            let e = criterion.exponent(*beta, d);
            let ok = if criterion.is_sup() {
                e <= EXPONENT_TOL
            } else {
                e < -EXPONENT_TOL
            };
            let class = if ok {
                Classification::Converges
            } else {
                Classification::Diverges
            };
            (class, Some(e))
        }
        ProfileKind::Table(_) => (Classification::Indeterminate, None),
    };
    Ok(SeriesReport {
        classification,
        partial_sums,
        exponent,
    })
}

const TEXT_MAGIC: &str = "# carleson-lab sequence v1";

/// Writes the line-oriented text form: a `#` header, then one point per line
/// as `re1 im1 .. red imd | m1 .. mk`. Floats use the shortest representation
/// that parses back to the same bits.
pub fn write_sequence<W: Write>(seq: &RandomSequence, mut out: W) -> Result<()> {
    let mut s = String::new();
    writeln!(s, "{TEXT_MAGIC}").unwrap();
    let (name, d) = match seq.domain() {
        Domain::Polydisc(d) => ("polydisc", d),
        Domain::Ball(d) => ("ball", d),
    };
    writeln!(s, "# domain {name} {d}").unwrap();
    writeln!(s, "# seed {}", seq.seed()).unwrap();
    let profile = seq.profile();
    match profile.kind() {
        ProfileKind::Exponential { c, beta } => {
            writeln!(
                s,
                "# profile exponential {c:?} {beta:?} {}",
                profile.truncation_degree()
            )
            .unwrap();
        }
        ProfileKind::Table(t) => {
            writeln!(s, "# profile table {}", profile.truncation_degree()).unwrap();
            for (idx, n) in t {
                write!(s, "# entry").unwrap();
                for v in idx.m() {
                    write!(s, " {v}").unwrap();
                }
                writeln!(s, " {n}").unwrap();
            }
        }
    }
    out.write_all(s.as_bytes())?;
    for (p, r) in seq.points().iter().zip(seq.regions()) {
        let mut line = String::new();
        for c in p.coords() {
            write!(line, "{:?} {:?} ", c.re, c.im).unwrap();
        }
        line.push('|');
        for v in r.m() {
            write!(line, " {v}").unwrap();
        }
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    Ok(())
}

pub fn sequence_to_text(seq: &RandomSequence) -> String {
    let mut buf = Vec::new();
    write_sequence(seq, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ascii output")
}

fn parse_num<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    tok.ok_or_else(|| Error::parse(line, format!("missing {what}")))?
        .parse()
        .map_err(|_| Error::parse(line, format!("bad {what}")))
}

/// Reads the text form produced by [`write_sequence`]. Region labels are
/// checked against the points.
pub fn read_sequence<R: BufRead>(input: R) -> Result<RandomSequence> {
    let mut domain = None;
    let mut seed = None;
    let mut exp_profile: Option<(f64, f64, u32)> = None;
    let mut table: Option<(u32, BTreeMap<DyadicIndex, u64>)> = None;
    let mut points = Vec::new();
    let mut regions = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if lineno == 1 {
            if line != TEXT_MAGIC {
                return Err(Error::parse(lineno, "missing sequence header"));
            }
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let mut tok = rest.split_whitespace();
            match tok.next() {
                Some("domain") => {
                    let name = tok.next();
                    let d: usize = parse_num(tok.next(), lineno, "dimension")?;
                    domain = Some(match name {
                        Some("polydisc") => Domain::Polydisc(d),
                        Some("ball") => Domain::Ball(d),
                        _ => return Err(Error::parse(lineno, "unknown domain")),
                    });
                }
                Some("seed") => seed = Some(parse_num(tok.next(), lineno, "seed")?),
                Some("profile") => match tok.next() {
                    Some("exponential") => {
                        exp_profile = Some((
                            parse_num(tok.next(), lineno, "profile constant")?,
                            parse_num(tok.next(), lineno, "profile exponent")?,
                            parse_num(tok.next(), lineno, "truncation")?,
                        ))
                    }
                    Some("table") => {
                        table = Some((parse_num(tok.next(), lineno, "truncation")?, BTreeMap::new()))
                    }
                    _ => return Err(Error::parse(lineno, "unknown profile kind")),
                },
                Some("entry") => {
                    let Some((_, t)) = table.as_mut() else {
                        return Err(Error::parse(lineno, "entry outside a table profile"));
                    };
                    let vals = tok
                        .map(|v| v.parse::<u64>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|_| Error::parse(lineno, "bad table entry"))?;
                    let Some((&n, m)) = vals.split_last() else {
                        return Err(Error::parse(lineno, "empty table entry"));
                    };
                    let m = m
                        .iter()
                        .map(|&v| u32::try_from(v))
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|_| Error::parse(lineno, "index out of range"))?;
                    t.insert(DyadicIndex::new(m), n);
                }
                _ => return Err(Error::parse(lineno, "unknown header line")),
            }
            continue;
        }
        let domain = domain.ok_or_else(|| Error::parse(lineno, "point before domain header"))?;
        let (coord_part, region_part) = line
            .split_once('|')
            .ok_or_else(|| Error::parse(lineno, "missing '|' separator"))?;
        let nums = coord_part
            .split_whitespace()
            .map(str::parse::<f64>)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::parse(lineno, "bad coordinate"))?;
        if nums.len() != 2 * domain.dim() {
            return Err(Error::parse(lineno, "wrong number of coordinates"));
        }
        let coords = nums.chunks(2).map(|c| C64::new(c[0], c[1])).collect();
        let point = Point::new(domain, coords).map_err(|e| Error::parse(lineno, e.to_string()))?;
        let m = region_part
            .split_whitespace()
            .map(str::parse::<u32>)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::parse(lineno, "bad region index"))?;
        let idx = DyadicIndex::new(m);
        if idx != region_of_point(&point) {
            return Err(Error::parse(lineno, format!("point is not in region {idx}")));
        }
        points.push(point);
        regions.push(idx);
    }
    let domain = domain.ok_or_else(|| Error::parse(0, "missing domain header"))?;
    let seed = seed.ok_or_else(|| Error::parse(0, "missing seed header"))?;
    let profile = match (exp_profile, table) {
        (Some((c, beta, t)), None) => CountingProfile::exponential(domain, c, beta, t)?,
        (None, Some((t, counts))) => CountingProfile::table(domain, counts)?.with_truncation(t),
        _ => return Err(Error::parse(0, "expected exactly one profile header")),
    };
    Ok(RandomSequence {
        points,
        regions,
        seed,
        profile,
    })
}

pub fn sequence_from_text(text: &str) -> Result<RandomSequence> {
    read_sequence(text.as_bytes())
}
