//! Separation constants, greedy partition into separated parts, dyadic
//! rectangle collisions and cluster detection.
//!
//! Collisions look for `M + 1` points of one region `A_m` whose argument
//! vectors fall in a common rectangle of side lengths `2^-m_i` on the torus,
//! on the standard dyadic grid and on the grid shifted by half a side.
//! Arguments are measured in turns, so the torus is `[0, 1)^d`.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde_json::json;

use crate::error::{Error, Result};
use crate::kernel::{pseudo_hyperbolic, rho_s, Domain, Point, C64};
use crate::sequence::{DyadicIndex, RandomSequence};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    /// Pseudo-hyperbolic distance (polydisc or ball form).
    Rho,
    /// `sqrt(1 - |<S_z, S_w>|^2)` with the Szegő kernel (polydisc only).
    RhoS,
}

pub fn distance(metric: Metric, z: &Point, w: &Point) -> Result<f64> {
    match metric {
        Metric::Rho => pseudo_hyperbolic(z, w),
        Metric::RhoS => rho_s(z, w),
    }
}

fn check_metric(metric: Metric, seq: &RandomSequence) -> Result<()> {
    if metric == Metric::RhoS && !seq.domain().is_polydisc() {
        return Err(Error::input("rho_s is defined for polydisc sequences"));
    }
    Ok(())
}

/// `min_{n != j} dist(z_n, z_j)`; 1 for sequences with fewer than two points.
pub fn separation_constant(seq: &RandomSequence, metric: Metric) -> Result<f64> {
    check_metric(metric, seq)?;
    let pts = seq.points();
    let mut best = 1.0_f64;
    for i in 0..pts.len() {
        for j in 0..i {
            best = best.min(distance(metric, &pts[i], &pts[j])?);
            if best == 0.0 {
                return Ok(0.0);
            }
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionResult {
    /// Number of parts used.
    pub parts: usize,
    /// Part index of every point.
    pub assignment: Vec<usize>,
    /// Points closer than this share an edge of the closeness graph.
    pub threshold: f64,
    /// Largest vertex degree of the closeness graph; `parts <= 1 + max_degree`.
    pub max_degree: usize,
}

impl PartitionResult {
    pub fn members(&self, part: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] == part)
            .collect()
    }
}

/// Greedy coloring, in generation order, of the graph joining points at
/// distance `< delta`. Every part is `delta`-separated.
pub fn greedy_partition(seq: &RandomSequence, delta: f64, metric: Metric) -> Result<PartitionResult> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::param(format!("threshold {delta} must lie in (0, 1)")));
    }
    check_metric(metric, seq)?;
    let pts = seq.points();
    let n = pts.len();
    let mut neighbours = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..i {
            if distance(metric, &pts[i], &pts[j])? < delta {
                neighbours[i].push(j);
                neighbours[j].push(i);
            }
        }
    }
    let mut assignment = vec![usize::MAX; n];
    let mut parts = 0;
    let mut taken = Vec::new();
    for i in 0..n {
        taken.clear();
        taken.resize(parts + 1, false);
        for &j in &neighbours[i] {
            if j < i {
                taken[assignment[j]] = true;
            }
        }
        let colour = taken.iter().position(|t| !t).unwrap_or(parts);
        assignment[i] = colour;
        parts = parts.max(colour + 1);
    }
    Ok(PartitionResult {
        parts,
        assignment,
        threshold: delta,
        max_degree: neighbours.iter().map(Vec::len).max().unwrap_or(0),
    })
}

/// Smallest distance between two points of the same part, by brute force
/// (1 when every part has at most one point).
pub fn min_within_part_distance(
    seq: &RandomSequence,
    partition: &PartitionResult,
    metric: Metric,
) -> Result<f64> {
    let pts = seq.points();
    let mut best = 1.0_f64;
    for i in 0..pts.len() {
        for j in 0..i {
            if partition.assignment[i] == partition.assignment[j] {
                best = best.min(distance(metric, &pts[i], &pts[j])?);
            }
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct CollisionEvent {
    pub region: DyadicIndex,
    /// Position of the rectangle on its grid, per coordinate.
    pub rectangle: Vec<u64>,
    /// Indices of all points of the region inside the rectangle.
    pub members: Vec<usize>,
    /// Whether the rectangle belongs to the half-side shifted grid.
    pub shifted: bool,
}

/// Cell of `theta` (in turns) on the grid of width `2^-m`, optionally
/// shifted by `2^-(m+1)`.
pub(crate) fn grid_cell(theta: f64, m: u32, shifted: bool) -> u64 {
    let cells = (m as f64).exp2();
    let t = if shifted {
        (theta - 0.5 / cells).rem_euclid(1.0)
    } else {
        theta
    };
    ((t * cells).floor() as u64).min(cells as u64 - 1)
}

fn rectangle_of(p: &Point, region: &DyadicIndex, shifted: bool) -> Vec<u64> {
    p.turns()
        .iter()
        .zip(region.m())
        .map(|(&t, &m)| grid_cell(t, m, shifted))
        .collect()
}

fn check_polydisc(seq: &RandomSequence) -> Result<()> {
    if !seq.domain().is_polydisc() {
        return Err(Error::input("rectangle collisions need a polydisc sequence"));
    }
    Ok(())
}

/// All maximal sets of at least `M + 1` points sharing a region and a
/// rectangle, on both grids. Events are sorted by region, grid, rectangle.
pub fn rectangle_collisions(seq: &RandomSequence, m_sep: usize) -> Result<Vec<CollisionEvent>> {
    check_polydisc(seq)?;
    let mut cells: BTreeMap<(DyadicIndex, bool, Vec<u64>), Vec<usize>> = BTreeMap::new();
    for (i, (p, region)) in seq.points().iter().zip(seq.regions()).enumerate() {
        for shifted in [false, true] {
            cells
                .entry((region.clone(), shifted, rectangle_of(p, region, shifted)))
                .or_default()
                .push(i);
        }
    }
    Ok(cells
        .into_iter()
        .filter(|(_, members)| members.len() > m_sep)
        .map(|((region, shifted, rectangle), members)| CollisionEvent {
            region,
            rectangle,
            members,
            shifted,
        })
        .collect())
}

/// Smallest pseudo-hyperbolic distance between two points of one region that
/// share no rectangle on either grid, or `None` if there is no such pair.
/// Report-only: no lower bound is asserted.
pub fn non_colliding_min_distance(seq: &RandomSequence) -> Result<Option<f64>> {
    check_polydisc(seq)?;
    let pts = seq.points();
    let regions = seq.regions();
    let cells: Vec<[Vec<u64>; 2]> = pts
        .iter()
        .zip(regions)
        .map(|(p, r)| [rectangle_of(p, r, false), rectangle_of(p, r, true)])
        .collect();
    let mut best: Option<f64> = None;
    for i in 0..pts.len() {
        for j in 0..i {
            if regions[i] == regions[j] && cells[i][0] != cells[j][0] && cells[i][1] != cells[j][1] {
                let d = pseudo_hyperbolic(&pts[i], &pts[j])?;
                best = Some(best.map_or(d, |b| b.min(d)));
            }
        }
    }
    Ok(best)
}

/// Whether `rho(z, w) <= t`, compared coordinatewise in squared form
/// `|z - w|^2 <= t^2 |1 - conj(w) z|^2` without divisions.
fn within_rho(z: &[C64], w: &[C64], domain: Domain, t2: f64) -> bool {
    match domain {
        Domain::Polydisc(_) => z.iter().zip(w).all(|(a, b)| {
            (a - b).norm_sqr() <= t2 * (C64::new(1.0, 0.0) - b.conj() * a).norm_sqr()
        }),
        Domain::Ball(_) => {
            // 1 - rho^2 = (1 - |z|^2)(1 - |w|^2) / |1 - <z,w>|^2
            let zz: f64 = z.iter().map(|c| c.norm_sqr()).sum();
            let ww: f64 = w.iter().map(|c| c.norm_sqr()).sum();
            let inner: C64 = z.iter().zip(w).map(|(a, b)| a * b.conj()).sum();
            let den = (C64::new(1.0, 0.0) - inner).norm_sqr();
            (1.0 - zz) * (1.0 - ww) >= (1.0 - t2) * den
        }
    }
}

/// Number of regions containing a point whose closed `rho`-ball of radius
/// `2^-l` holds at least `M` other points of the sequence.
pub fn cluster_count(seq: &RandomSequence, m_sep: usize, l: u32) -> Result<usize> {
    Ok(cluster_regions(seq, m_sep, l)?.len())
}

/// The regions counted by [`cluster_count`].
pub fn cluster_regions(seq: &RandomSequence, m_sep: usize, l: u32) -> Result<BTreeSet<DyadicIndex>> {
    let radius = (-(l as f64)).exp2();
    let t2 = radius * radius;
    let pts = seq.points();
    let domain = seq.domain();
    let mut found = BTreeSet::new();
    if m_sep == 0 {
        found.extend(seq.regions().iter().cloned());
        return Ok(found);
    }
    for (i, p) in pts.iter().enumerate() {
        let region = &seq.regions()[i];
        if found.contains(region) {
            continue;
        }
        let mut hits = 0;
        for (j, q) in pts.iter().enumerate() {
            if j != i && within_rho(p.coords(), q.coords(), domain, t2) {
                hits += 1;
                if hits >= m_sep {
                    found.insert(region.clone());
                    break;
                }
            }
        }
    }
    Ok(found)
}

/// `prod_{j != n} rho(z_j, z_n)`, accumulated in log space. Exactly 0 when
/// another point coincides with `z_n`.
pub fn uniform_separation_product(seq: &RandomSequence, n: usize) -> Result<f64> {
    let pts = seq.points();
    let z = pts
        .get(n)
        .ok_or_else(|| Error::input(format!("index {n} out of range for {} points", pts.len())))?;
    let mut log_sum = 0.0;
    for (j, w) in pts.iter().enumerate() {
        if j == n {
            continue;
        }
        let r = pseudo_hyperbolic(z, w)?;
        if r == 0.0 {
            return Ok(0.0);
        }
        log_sum += r.ln();
    }
    Ok(log_sum.exp())
}

/// `(argmin, min)` of [`uniform_separation_product`] over all points; `None`
/// for an empty sequence.
pub fn min_uniform_separation_product(seq: &RandomSequence) -> Result<Option<(usize, f64)>> {
    let mut best: Option<(usize, f64)> = None;
    for n in 0..seq.len() {
        let v = uniform_separation_product(seq, n)?;
        if best.is_none_or(|(_, b)| v < b) {
            best = Some((n, v));
        }
    }
    Ok(best)
}

/// One JSON object per line: region, rectangle, members, grid.
pub fn write_collisions_jsonl<W: Write>(events: &[CollisionEvent], mut out: W) -> Result<()> {
    for e in events {
        let line = json!({
            "region": e.region.m(),
            "rectangle": e.rectangle,
            "members": e.members,
            "shifted": e.shifted,
        });
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// One JSON object per part: part index, threshold and member indices.
pub fn write_partition_jsonl<W: Write>(partition: &PartitionResult, mut out: W) -> Result<()> {
    for part in 0..partition.parts {
        let line = json!({
            "part": part,
            "threshold": partition.threshold,
            "members": partition.members(part),
        });
        writeln!(out, "{line}")?;
    }
    Ok(())
}
