//! Points of the polydisc and the ball, their reproducing kernels, and the
//! pseudo-hyperbolic distances.
//!
//! Kernels are written `k(z, w) = k_w(z)`, so that `k(z, w) = conj(k(w, z))`
//! and `k(z, z) >= 1` for every family implemented here:
//!
//! | family | kernel |
//! |--------|--------|
//! | Szegő, polydisc | `prod_i 1 / (1 - z_i conj(w_i))` |
//! | Dirichlet-type `a` in (0, 1), polydisc | `prod_i (1 - z_i conj(w_i))^-(1 - a)` |
//! | Dirichlet-type `a = 1`, polydisc | `prod_i x_i^-1 log 1 / (1 - x_i)`, `x_i = z_i conj(w_i)` |
//! | Besov–Sobolev `a` in [0, d), ball | `(1 - <z, w>)^-(d - a)` |

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CMatrix;

pub use crate::linalg::C64;

/// Points closer than this to the boundary are rejected.
pub const BOUNDARY_GUARD: f64 = 1e-12;

/// Below this modulus the logarithmic Dirichlet factor is summed as a series.
const LOG_SERIES_CUTOFF: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Domain {
    Polydisc(usize),
    Ball(usize),
}

impl Domain {
    pub fn dim(self) -> usize {
        match self {
            Domain::Polydisc(d) | Domain::Ball(d) => d,
        }
    }

    pub fn is_polydisc(self) -> bool {
        matches!(self, Domain::Polydisc(_))
    }
}

/// A point of `D^d` or `B_d`. Construction enforces the domain invariant and
/// the boundary guard, so every `Point` in circulation is valid.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    coords: Vec<C64>,
    domain: Domain,
}

impl Point {
    pub fn new(domain: Domain, coords: Vec<C64>) -> Result<Self> {
        let d = domain.dim();
        if d == 0 {
            return Err(Error::input("dimension must be positive"));
        }
        if coords.len() != d {
            return Err(Error::input(format!(
                "expected {d} coordinates, got {}",
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::input("non-finite coordinate"));
        }
        match domain {
            Domain::Polydisc(_) => {
                if let Some(c) = coords.iter().find(|c| 1.0 - c.norm() < BOUNDARY_GUARD) {
                    return Err(Error::input(format!(
                        "coordinate {c} is on or outside the unit circle"
                    )));
                }
            }
            Domain::Ball(_) => {
                let r = coords.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
                if 1.0 - r < BOUNDARY_GUARD {
                    return Err(Error::input(format!(
                        "point of norm {r} is on or outside the unit sphere"
                    )));
                }
            }
        }
        Ok(Point { coords, domain })
    }

    pub fn polydisc(coords: Vec<C64>) -> Result<Self> {
        let d = coords.len();
        Point::new(Domain::Polydisc(d), coords)
    }

    pub fn ball(coords: Vec<C64>) -> Result<Self> {
        let d = coords.len();
        Point::new(Domain::Ball(d), coords)
    }

    /// A point of the unit disc, tagged as the one-dimensional polydisc.
    pub fn disc(z: C64) -> Result<Self> {
        Point::polydisc(vec![z])
    }

    pub fn origin(domain: Domain) -> Self {
        Point {
            coords: vec![C64::new(0.0, 0.0); domain.dim()],
            domain,
        }
    }

    pub fn coords(&self) -> &[C64] {
        &self.coords
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// Euclidean norm of the coordinate vector.
    pub fn norm(&self) -> f64 {
        self.coords.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Per-coordinate moduli `|z_i|`.
    pub fn moduli(&self) -> Vec<f64> {
        self.coords.iter().map(|c| c.norm()).collect()
    }

    /// Arguments of the coordinates as fractions of a turn, in `[0, 1)`.
    pub fn turns(&self) -> Vec<f64> {
        self.coords
            .iter()
            .map(|c| {
                let t = c.arg() / std::f64::consts::TAU;
                let t = if t < 0.0 { t + 1.0 } else { t };
                if t >= 1.0 {
                    0.0
                } else {
                    t
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum KernelFamily {
    SzegoPolydisc,
    DirichletPolydisc { a: f64 },
    BesovSobolevBall { a: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    family: KernelFamily,
    dim: usize,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::param("kernel dimension must be positive"));
        }
        match family {
            KernelFamily::SzegoPolydisc => {}
            KernelFamily::DirichletPolydisc { a } => {
                if !(0.0..=1.0).contains(&a) {
                    return Err(Error::param(format!("Dirichlet parameter {a} not in [0, 1]")));
                }
            }
            KernelFamily::BesovSobolevBall { a } => {
                if !(a >= 0.0 && a < dim as f64) {
                    return Err(Error::param(format!(
                        "Besov-Sobolev parameter {a} not in [0, {dim})"
                    )));
                }
            }
        }
        Ok(KernelSpec { family, dim })
    }

    pub fn szego(dim: usize) -> Result<Self> {
        KernelSpec::new(KernelFamily::SzegoPolydisc, dim)
    }

    pub fn dirichlet(a: f64, dim: usize) -> Result<Self> {
        KernelSpec::new(KernelFamily::DirichletPolydisc { a }, dim)
    }

    pub fn besov_sobolev(a: f64, dim: usize) -> Result<Self> {
        KernelSpec::new(KernelFamily::BesovSobolevBall { a }, dim)
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn domain(&self) -> Domain {
        match self.family {
            KernelFamily::SzegoPolydisc | KernelFamily::DirichletPolydisc { .. } => {
                Domain::Polydisc(self.dim)
            }
            KernelFamily::BesovSobolevBall { .. } => Domain::Ball(self.dim),
        }
    }

    /// The family parameter `a` (0 for the Szegő kernel).
    pub fn parameter(&self) -> f64 {
        match self.family {
            KernelFamily::SzegoPolydisc => 0.0,
            KernelFamily::DirichletPolydisc { a } | KernelFamily::BesovSobolevBall { a } => a,
        }
    }

    pub(crate) fn check(&self, p: &Point) -> Result<()> {
        if p.domain() != self.domain() {
            return Err(Error::input(format!(
                "point lives in {:?} but kernel is defined on {:?}",
                p.domain(),
                self.domain()
            )));
        }
        Ok(())
    }
}

/// One coordinate factor of the Dirichlet-type polydisc kernel at `x = z conj(w)`.
/// `a = 0` is the Szegő factor.
pub(crate) fn dirichlet_factor(a: f64, x: C64) -> C64 {
    let one = C64::new(1.0, 0.0);
    if a == 0.0 {
        one / (one - x)
    } else if a == 1.0 {
        if x.norm() < LOG_SERIES_CUTOFF {
            // sum_{l>=0} x^l / (l + 1), truncated well below double precision
            let mut acc = C64::new(0.0, 0.0);
            let mut pow = one;
            for l in 0..6 {
                acc += pow / (l as f64 + 1.0);
                pow *= x;
            }
            acc
        } else {
            -ln_one_minus(x) / x
        }
    } else {
        (-(1.0 - a) * ln_one_minus(x)).exp()
    }
}

/// `ln(1 - x)` without the cancellation of forming `1 - x` for small `x`.
fn ln_one_minus(x: C64) -> C64 {
    if x.norm_sqr() >= 0.25 {
        return (C64::new(1.0, 0.0) - x).ln();
    }
    let re = 0.5 * (x.norm_sqr() - 2.0 * x.re).ln_1p();
    C64::new(re, (-x.im).atan2(1.0 - x.re))
}

fn ball_inner(z: &[C64], w: &[C64]) -> C64 {
    z.iter().zip(w).map(|(a, b)| a * b.conj()).sum()
}

fn ball_kernel(exponent: f64, inner: C64) -> C64 {
    let base = C64::new(1.0, 0.0) - inner;
    if exponent.fract() == 0.0 && exponent.abs() < i32::MAX as f64 {
        base.powi(-(exponent as i32))
    } else {
        (-exponent * base.ln()).exp()
    }
}

/// Evaluates `k_w(z)`.
pub fn kernel_eval(spec: &KernelSpec, z: &Point, w: &Point) -> Result<C64> {
    spec.check(z)?;
    spec.check(w)?;
    Ok(kernel_eval_unchecked(spec, z.coords(), w.coords()))
}

pub(crate) fn kernel_eval_unchecked(spec: &KernelSpec, z: &[C64], w: &[C64]) -> C64 {
    match spec.family {
        KernelFamily::SzegoPolydisc => z
            .iter()
            .zip(w)
            .map(|(a, b)| dirichlet_factor(0.0, a * b.conj()))
            .product(),
        KernelFamily::DirichletPolydisc { a } => z
            .iter()
            .zip(w)
            .map(|(zi, wi)| dirichlet_factor(a, zi * wi.conj()))
            .product(),
        KernelFamily::BesovSobolevBall { a } => {
            ball_kernel(spec.dim as f64 - a, ball_inner(z, w))
        }
    }
}

/// `<k̂_w, k̂_z>`-style normalized kernel value `k(z, w) / sqrt(k(z, z) k(w, w))`.
pub fn normalized_inner(spec: &KernelSpec, z: &Point, w: &Point) -> Result<C64> {
    let kzw = kernel_eval(spec, z, w)?;
    let kzz = kernel_eval_unchecked(spec, z.coords(), z.coords()).re;
    let kww = kernel_eval_unchecked(spec, w.coords(), w.coords()).re;
    Ok(kzw / (kzz * kww).sqrt())
}

fn same_domain(z: &Point, w: &Point) -> Result<()> {
    if z.domain() != w.domain() {
        return Err(Error::input(format!(
            "points live in different domains ({:?} vs {:?})",
            z.domain(),
            w.domain()
        )));
    }
    Ok(())
}

/// Möbius quotient `|z - w| / |1 - conj(w) z|` of two disc coordinates.
pub(crate) fn mobius(z: C64, w: C64) -> f64 {
    (z - w).norm() / (C64::new(1.0, 0.0) - w.conj() * z).norm()
}

/// Pseudo-hyperbolic distance: the largest coordinate Möbius quotient on the
/// polydisc, the invariant metric `|phi_w(z)|` on the ball.
pub fn pseudo_hyperbolic(z: &Point, w: &Point) -> Result<f64> {
    same_domain(z, w)?;
    Ok(match z.domain() {
        Domain::Polydisc(_) => z
            .coords()
            .iter()
            .zip(w.coords())
            .map(|(&a, &b)| mobius(a, b))
            .fold(0.0, f64::max),
        Domain::Ball(_) => ball_pseudo_hyperbolic(z.coords(), w.coords()),
    })
}

// 1 - (1-|z|^2)(1-|w|^2)/|1-<z,w>|^2, with the numerator rewritten as
// |z-w|^2 - sum_{i<j} |z_i w_j - z_j w_i|^2 so that it vanishes exactly at z = w.
fn ball_pseudo_hyperbolic(z: &[C64], w: &[C64]) -> f64 {
    let diff: f64 = z.iter().zip(w).map(|(a, b)| (a - b).norm_sqr()).sum();
    let mut wedge = 0.0;
    for i in 0..z.len() {
        for j in (i + 1)..z.len() {
            wedge += (z[i] * w[j] - z[j] * w[i]).norm_sqr();
        }
    }
    let denom = (C64::new(1.0, 0.0) - ball_inner(z, w)).norm_sqr();
    ((diff - wedge).max(0.0) / denom).sqrt().min(1.0)
}

/// The Szegő distance `sqrt(1 - |<s_z, s_w>|^2 / (|s_z|^2 |s_w|^2))` on the polydisc.
///
/// Evaluated through the factorization `|normalized Szegő|^2 = prod_i (1 - q_i^2)`
/// with `q_i` the coordinate Möbius quotients, which avoids the cancellation
/// of the literal formula when `z` and `w` are close.
pub fn rho_s(z: &Point, w: &Point) -> Result<f64> {
    same_domain(z, w)?;
    if !z.domain().is_polydisc() {
        return Err(Error::input("rho_s is defined on the polydisc only"));
    }
    let log_prod: f64 = z
        .coords()
        .iter()
        .zip(w.coords())
        .map(|(&a, &b)| {
            let q = mobius(a, b);
            (-q * q).ln_1p()
        })
        .sum();
    Ok((-log_prod.exp_m1()).max(0.0).sqrt())
}

/// Entrywise (Schur) product of two square matrices of the same size.
pub fn schur_product(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    if a.shape() != b.shape() || a.nrows() != a.ncols() {
        return Err(Error::input(format!(
            "schur product needs equal square shapes, got {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(a.component_mul(b))
}

/// Empirical comparability of `rho` and `rho_s` over a set of point pairs.
/// Report-only: no constant is asserted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparability {
    pub pairs: usize,
    /// `min rho_s / rho`
    pub rho_s_over_rho: f64,
    /// `min rho / rho_s`
    pub rho_over_rho_s: f64,
}

pub fn metric_comparability(pairs: &[(Point, Point)]) -> Result<Comparability> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::INFINITY;
    let mut counted = 0;
    for (z, w) in pairs {
        let r = pseudo_hyperbolic(z, w)?;
        let s = rho_s(z, w)?;
        if r > 0.0 && s > 0.0 {
            lo = lo.min(s / r);
            hi = hi.min(r / s);
            counted += 1;
        }
    }
    Ok(Comparability {
        pairs: counted,
        rho_s_over_rho: lo,
        rho_over_rho_s: hi,
    })
}
