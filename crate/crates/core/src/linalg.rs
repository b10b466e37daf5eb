//! Dense Hermitian helpers: power iteration for the top eigenvalue and exact
//! eigenvalues for the small matrices used in positivity checks.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, stream};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

/// Largest tolerated `|a_ij - conj(a_ji)|` for a matrix to count as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// A Hermitian positive semi-definite operator that can be applied to vectors.
///
/// Implemented by dense matrices and by matrix-free Gramians whose entries are
/// recomputed on every application.
pub trait HermitianOperator {
    fn dim(&self) -> usize;

    /// Writes `A x` into `y`. `y` has length [`dim`](Self::dim) and is overwritten.
    fn apply(&self, x: &[C64], y: &mut [C64]);

    fn max_diagonal(&self) -> f64;
}

impl HermitianOperator for CMatrix {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        let n = self.nrows();
        y.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
        // column-major storage: accumulate column by column
        for (j, &xj) in x.iter().enumerate().take(n) {
            let col = self.column(j);
            for (yi, a) in y.iter_mut().zip(col.iter()) {
                *yi += a * xj;
            }
        }
    }

    fn max_diagonal(&self) -> f64 {
        (0..self.nrows())
            .map(|i| self[(i, i)].re)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerOptions {
    /// Stop once the relative Rayleigh-quotient increment drops below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Seed of the random starting vector.
    pub seed: u64,
}

impl Default for PowerOptions {
    fn default() -> Self {
        PowerOptions {
            tol: 1e-8,
            max_iter: 10_000,
            seed: 0x5EED,
        }
    }
}

/// Result of a top-eigenvalue computation. `converged == false` means the
/// iteration cap was hit and `value` is only a lower estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormEstimate {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn vec_norm(x: &[C64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// Power iteration on a PSD operator, starting from a seeded complex Gaussian
/// vector. The returned value is never below the largest diagonal entry.
pub fn power_iteration<O: HermitianOperator + ?Sized>(op: &O, opts: &PowerOptions) -> NormEstimate {
    let n = op.dim();
    if n == 0 {
        return NormEstimate {
            value: 0.0,
            iterations: 0,
            converged: true,
        };
    }
    let max_diag = op.max_diagonal();
    let mut rng = rng_from_seed(derive_seed(opts.seed, &[stream::POWER_START]));
    let mut x: Vec<C64> = (0..n)
        .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    let nx = vec_norm(&x);
    x.iter_mut().for_each(|v| *v /= nx);

    let mut y = vec![C64::new(0.0, 0.0); n];
    let mut lambda = 0.0_f64;
    for it in 0..opts.max_iter {
        op.apply(&x, &mut y);
        let rayleigh: f64 = x.iter().zip(&y).map(|(a, b)| (a.conj() * b).re).sum();
        let ny = vec_norm(&y);
        if ny == 0.0 {
            return NormEstimate {
                value: max_diag.max(0.0),
                iterations: it + 1,
                converged: true,
            };
        }
        if it > 0 && (rayleigh - lambda).abs() < opts.tol * rayleigh.abs() {
            return NormEstimate {
                value: rayleigh.max(max_diag),
                iterations: it + 1,
                converged: true,
            };
        }
        lambda = rayleigh;
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / ny;
        }
    }
    NormEstimate {
        value: lambda.max(max_diag),
        iterations: opts.max_iter,
        converged: false,
    }
}

pub fn max_asymmetry(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in 0..=i {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

fn check_hermitian(m: &CMatrix) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::input(format!(
            "matrix is {}x{}, expected square",
            m.nrows(),
            m.ncols()
        )));
    }
    let asym = max_asymmetry(m);
    if asym > HERMITIAN_TOL {
        return Err(Error::input(format!(
            "matrix is not Hermitian (asymmetry {asym:e})"
        )));
    }
    Ok(())
}

/// Largest eigenvalue of a Hermitian PSD matrix, i.e. its operator norm.
pub fn operator_norm(m: &CMatrix, opts: &PowerOptions) -> Result<NormEstimate> {
    check_hermitian(m)?;
    Ok(power_iteration(m, opts))
}

/// All eigenvalues of a Hermitian matrix in ascending order.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Result<Vec<f64>> {
    check_hermitian(m)?;
    let mut sym = m.clone();
    // symmetrize so the decomposition sees an exactly Hermitian input
    for i in 0..sym.nrows() {
        for j in 0..i {
            let avg = (sym[(i, j)] + sym[(j, i)].conj()) * 0.5;
            sym[(i, j)] = avg;
            sym[(j, i)] = avg.conj();
        }
        sym[(i, i)].im = 0.0;
    }
    let mut eig: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}

pub fn min_eigenvalue(m: &CMatrix) -> Result<f64> {
    Ok(hermitian_eigenvalues(m)?.first().copied().unwrap_or(0.0))
}

pub fn max_eigenvalue(m: &CMatrix) -> Result<f64> {
    Ok(hermitian_eigenvalues(m)?.last().copied().unwrap_or(0.0))
}

/// Largest singular value of an arbitrary square or rectangular matrix.
pub fn spectral_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().max()
}

/// `sqrt(sum |a_ij|^2)`.
pub fn frobenius_norm(m: &CMatrix) -> f64 {
    m.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}
