//! Gaussian-gridding nonuniform FFT with one-sided modes `0..M`, and the
//! Szegő disc kernel applied through it for sequences whose points sit on a
//! few circles.
//!
//! On one circle of radius `r` the kernel sum `sum_j b_j / (1 - z conj z_j)`
//! expands as `sum_l z^l r^l sum_j b_j e^{-i l φ_j}`, so a product with the
//! Gramian is one type-1 transform per circle, a diagonal mix of the mode
//! coefficients, and one type-2 transform per circle.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::linalg::C64;

/// Grid points on each side of a source; the oversampling ratio is 2.
const SPREAD: usize = 12;
const WIDTH: usize = 2 * SPREAD;

/// Relative size of the dropped geometric tail.
const TRUNCATION: f64 = 1e-16;

/// Radii closer than this (relatively) share a circle.
const RADIUS_TOL: f64 = 1e-14;

/// Transforms for one set of source angles and `modes` one-sided modes.
struct Transform {
    modes: usize,
    grid: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// Deconvolution factor per centered mode `k - modes/2`.
    deconv: Vec<f64>,
    /// First grid index touched by each source (unwrapped).
    base: Vec<i64>,
    /// `WIDTH` Gaussian weights per source.
    weights: Vec<f64>,
    /// `e^{-i (M/2) φ_j}`, shifting one-sided modes to centered ones.
    shift: Vec<C64>,
}

fn smooth_size(n: usize) -> usize {
    let n = n.max(32);
    let mut best = usize::MAX;
    let mut p2 = 1usize;
    while p2 < 2 * n {
        let mut v = p2;
        while v < n {
            v *= 3;
        }
        if v % 2 == 0 {
            best = best.min(v);
        }
        p2 *= 2;
    }
    best
}

impl Transform {
    fn new(angles: &[f64], modes: usize, planner: &mut FftPlanner<f64>) -> Self {
        let m = smooth_size(modes);
        let grid = 2 * m;
        let tau = PI * SPREAD as f64 / (3.0 * (m * m) as f64);
        let h = TAU / grid as f64;
        let half = (m / 2) as f64;
        let norm = (PI / tau).sqrt() / grid as f64;
        let deconv = (0..m)
            .map(|l| {
                let k = l as f64 - half;
                norm * (k * k * tau).exp()
            })
            .collect();
        let mut base = Vec::with_capacity(angles.len());
        let mut weights = Vec::with_capacity(angles.len() * WIDTH);
        let mut shift = Vec::with_capacity(angles.len());
        for &x in angles {
            let first = (x / h).floor() as i64 - (SPREAD as i64 - 1);
            base.push(first);
            for t in 0..WIDTH {
                let d = x - (first + t as i64) as f64 * h;
                weights.push((-d * d / (4.0 * tau)).exp());
            }
            shift.push(C64::from_polar(1.0, -half * x));
        }
        Transform {
            modes: m,
            grid,
            forward: planner.plan_fft_forward(grid),
            inverse: planner.plan_fft_inverse(grid),
            deconv,
            base,
            weights,
            shift,
        }
    }

    /// Grid window of source `i` as up to two contiguous runs.
    fn window(&self, i: usize) -> (usize, usize) {
        let start = self.base[i].rem_euclid(self.grid as i64) as usize;
        (start, (self.grid - start).min(WIDTH))
    }

    /// `F(l) = sum_j c_j e^{-i l φ_j}` for `l < out.len() <= modes`.
    fn type1(&self, c: &[C64], out: &mut [C64], buf: &mut Vec<C64>) {
        buf.clear();
        buf.resize(self.grid, C64::new(0.0, 0.0));
        for (i, &v) in c.iter().enumerate() {
            let v = v * self.shift[i];
            let w = &self.weights[i * WIDTH..(i + 1) * WIDTH];
            let (start, run) = self.window(i);
            for (b, &g) in buf[start..start + run].iter_mut().zip(&w[..run]) {
                *b += v * g;
            }
            for (b, &g) in buf[..WIDTH - run].iter_mut().zip(&w[run..]) {
                *b += v * g;
            }
        }
        self.forward.process(buf);
        let half = self.modes / 2;
        for (l, o) in out.iter_mut().enumerate() {
            let k = l as i64 - half as i64;
            *o = buf[k.rem_euclid(self.grid as i64) as usize] * self.deconv[l];
        }
    }

    /// `y_j = sum_l F(l) e^{i l φ_j}` for the given leading modes.
    fn type2(&self, f: &[C64], y: &mut [C64], buf: &mut Vec<C64>) {
        buf.clear();
        buf.resize(self.grid, C64::new(0.0, 0.0));
        let half = self.modes / 2;
        for (l, &v) in f.iter().enumerate() {
            let k = l as i64 - half as i64;
            buf[k.rem_euclid(self.grid as i64) as usize] = v * self.deconv[l];
        }
        self.inverse.process(buf);
        for (i, out) in y.iter_mut().enumerate() {
            let w = &self.weights[i * WIDTH..(i + 1) * WIDTH];
            let (start, run) = self.window(i);
            let mut acc = C64::new(0.0, 0.0);
            for (b, &g) in buf[start..start + run].iter().zip(&w[..run]) {
                acc += b * g;
            }
            for (b, &g) in buf[..WIDTH - run].iter().zip(&w[run..]) {
                acc += b * g;
            }
            *out = acc * self.shift[i].conj();
        }
    }
}

struct Circle {
    members: Vec<usize>,
    /// Modes kept for this circle.
    len: usize,
    /// `r^l` for `l < len`.
    powers: Vec<f64>,
    transform: Transform,
}

/// Szegő kernel on the disc, `u = K b` with `K_ij = 1 / (1 - z_i conj z_j)`,
/// for points lying on a small number of circles.
pub(crate) struct CircleSzego {
    n: usize,
    circles: Vec<Circle>,
}

impl std::fmt::Debug for CircleSzego {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CircleSzego")
            .field("points", &self.n)
            .field("circles", &self.circles.len())
            .finish()
    }
}

fn modes_for(q: f64) -> usize {
    if q <= f64::MIN_POSITIVE {
        1
    } else {
        (TRUNCATION.ln() / q.ln()).ceil().max(1.0) as usize
    }
}

impl CircleSzego {
    /// `None` when the points spread over more than `max_circles` radii.
    pub(crate) fn new(points: &[C64], max_circles: usize) -> Option<Self> {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let radii: Vec<f64> = points.iter().map(|z| z.norm()).collect();
        order.sort_by(|&a, &b| radii[a].total_cmp(&radii[b]));
        let mut groups: Vec<(f64, Vec<usize>)> = Vec::new();
        for i in order {
            let r = radii[i];
            match groups.last_mut() {
                Some((r0, g)) if (r - *r0).abs() <= RADIUS_TOL * r0.max(r) => g.push(i),
                _ => {
                    if groups.len() == max_circles {
                        return None;
                    }
                    groups.push((r, vec![i]));
                }
            }
        }
        let reps: Vec<f64> = groups
            .iter()
            .map(|(_, g)| g.iter().map(|&i| radii[i]).sum::<f64>() / g.len() as f64)
            .collect();
        let r_max = reps.last().copied().unwrap_or(0.0);
        let mut planner = FftPlanner::new();
        let circles = groups
            .into_iter()
            .zip(&reps)
            .map(|((_, members), &r)| {
                let len = modes_for(r * r_max);
                let powers = (0..len).map(|l| pow(r, l)).collect();
                let angles: Vec<f64> = members
                    .iter()
                    .map(|&i| points[i].arg().rem_euclid(TAU))
                    .collect();
                let transform = Transform::new(&angles, len, &mut planner);
                Circle { members, len, powers, transform }
            })
            .collect();
        Some(CircleSzego { n: points.len(), circles })
    }

    pub(crate) fn apply(&self, b: &[C64], u: &mut [C64]) {
        assert_eq!(b.len(), self.n);
        let mut buf = Vec::new();
        let coeffs: Vec<Vec<C64>> = self
            .circles
            .iter()
            .map(|c| {
                let src: Vec<C64> = c.members.iter().map(|&i| b[i]).collect();
                let mut f = vec![C64::new(0.0, 0.0); c.len];
                c.transform.type1(&src, &mut f, &mut buf);
                for (v, p) in f.iter_mut().zip(&c.powers) {
                    *v *= *p;
                }
                f
            })
            .collect();
        let longest = self.circles.iter().map(|c| c.len).max().unwrap_or(0);
        let mut total = vec![C64::new(0.0, 0.0); longest];
        for f in &coeffs {
            for (t, v) in total.iter_mut().zip(f) {
                *t += v;
            }
        }
        for c in &self.circles {
            let mixed: Vec<C64> = total[..c.len]
                .iter()
                .zip(&c.powers)
                .map(|(v, p)| v * *p)
                .collect();
            let mut out = vec![C64::new(0.0, 0.0); c.members.len()];
            c.transform.type2(&mixed, &mut out, &mut buf);
            for (&i, v) in c.members.iter().zip(out) {
                u[i] = v;
            }
        }
    }
}

/// `r^l` without the drift of repeated multiplication.
fn pow(r: f64, l: usize) -> f64 {
    if r == 0.0 {
        if l == 0 {
            1.0
        } else {
            0.0
        }
    } else {
        (l as f64 * r.ln()).exp()
    }
}
