//! Gram matrices of normalized kernels and the operators built from them.
//!
//! The Gramian `G = (<k̂_n, k̂_j>)` of a finite sequence has the same norm as
//! its frame operator `T = sum_n k̂_n k̂_n*`. Norms of large sequences are
//! therefore computed on the point-indexed Gramian, either dense or
//! matrix-free ([`ImplicitGram`]). The monomial-coordinate frame operator
//! [`TruncatedFrame`] is only built at toy scale, to check partial-sum
//! truncation and the matrix Chernoff bound.

use std::io::{Read, Write};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::kernel::{
    dirichlet_factor, kernel_eval_unchecked, Domain, KernelFamily, KernelSpec, Point, C64,
};
use crate::linalg::{
    hermitian_eigenvalues, operator_norm, power_iteration, spectral_norm, CMatrix,
    HermitianOperator, NormEstimate, PowerOptions,
};
use crate::nufft::CircleSzego;
use crate::sequence::{band_of_gap, DyadicIndex, RandomSequence};

/// Largest Gramian stored densely (16 bytes per entry).
pub const DEFAULT_GRAM_CAP: usize = 4096;

/// Largest monomial-coordinate frame matrix dimension `(L+1)^d`.
pub const DEFAULT_FRAME_CAP: usize = 4096;

/// Below this many points the pairwise product is already cheap.
const CIRCLE_MIN_POINTS: usize = 512;
/// Sequences on more circles than this use the pairwise product.
const MAX_CIRCLES: usize = 64;

/// Iteration cap for the Dirichlet expected-entry series.
pub const MAX_SERIES_TERMS: usize = 10_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    entries: CMatrix,
    spec: KernelSpec,
    regions: Option<Vec<DyadicIndex>>,
}

impl GramMatrix {
    /// Wraps an explicit matrix, e.g. a synthetic block-diagonal Gramian.
    pub fn from_parts(
        entries: CMatrix,
        spec: KernelSpec,
        regions: Option<Vec<DyadicIndex>>,
    ) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::input("Gram matrix must be square"));
        }
        if let Some(r) = &regions {
            if r.len() != entries.nrows() {
                return Err(Error::input(format!(
                    "{} region labels for {} rows",
                    r.len(),
                    entries.nrows()
                )));
            }
        }
        Ok(GramMatrix {
            entries,
            spec,
            regions,
        })
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn point_count(&self) -> usize {
        self.entries.nrows()
    }

    pub fn regions(&self) -> Option<&[DyadicIndex]> {
        self.regions.as_deref()
    }

    pub fn norm(&self, opts: &PowerOptions) -> Result<NormEstimate> {
        operator_norm(&self.entries, opts)
    }

    fn degrees(&self) -> Result<Vec<u32>> {
        self.regions
            .as_ref()
            .map(|r| r.iter().map(DyadicIndex::degree).collect())
            .ok_or_else(|| Error::input("Gram matrix carries no region labels"))
    }
}

fn check_sequence(spec: &KernelSpec, seq: &RandomSequence) -> Result<()> {
    if spec.domain() != seq.domain() {
        return Err(Error::input(format!(
            "kernel lives on {:?} but the sequence on {:?}",
            spec.domain(),
            seq.domain()
        )));
    }
    Ok(())
}

fn inverse_norms(spec: &KernelSpec, points: &[Point]) -> Vec<f64> {
    points
        .iter()
        .map(|p| 1.0 / kernel_eval_unchecked(spec, p.coords(), p.coords()).re.sqrt())
        .collect()
}

/// Dense Gramian with the default size cap.
pub fn build_gram(spec: &KernelSpec, seq: &RandomSequence) -> Result<GramMatrix> {
    build_gram_capped(spec, seq, DEFAULT_GRAM_CAP)
}

/// Dense Gramian, entry `(n, j) = normalized_inner(spec, λ_n, λ_j)`. The upper
/// triangle is the exact conjugate of the lower one and the diagonal is 1.
pub fn build_gram_capped(spec: &KernelSpec, seq: &RandomSequence, cap: usize) -> Result<GramMatrix> {
    check_sequence(spec, seq)?;
    let n = seq.len();
    if n > cap {
        return Err(Error::ResourceLimit {
            what: "dense Gram matrix rows",
            requested: n as u64,
            cap: cap as u64,
        });
    }
    let pts = seq.points();
    let scale = inverse_norms(spec, pts);
    let mut g = CMatrix::zeros(n, n);
    for i in 0..n {
        g[(i, i)] = C64::new(1.0, 0.0);
        for j in 0..i {
            let v = kernel_eval_unchecked(spec, pts[i].coords(), pts[j].coords()) * (scale[i] * scale[j]);
            g[(i, j)] = v;
            g[(j, i)] = v.conj();
        }
    }
    Ok(GramMatrix {
        entries: g,
        spec: *spec,
        regions: Some(seq.regions().to_vec()),
    })
}

/// Matrix-free Gramian: entries are recomputed on every product, so memory is
/// linear in the number of points. Each product visits every pair once.
#[derive(Debug, Clone)]
pub struct ImplicitGram {
    spec: KernelSpec,
    dim: usize,
    /// Coordinates split into real and imaginary parts, point-major.
    re: Vec<f64>,
    im: Vec<f64>,
    points: Vec<Point>,
    scale: Vec<f64>,
    /// Transform-based product for disc Szegő sequences on few circles.
    circles: Option<Arc<CircleSzego>>,
}

impl ImplicitGram {
    pub fn new(spec: &KernelSpec, seq: &RandomSequence) -> Result<Self> {
        check_sequence(spec, seq)?;
        let pts = seq.points();
        let re = pts.iter().flat_map(|p| p.coords().iter().map(|c| c.re)).collect();
        let im = pts.iter().flat_map(|p| p.coords().iter().map(|c| c.im)).collect();
        let circles = if spec.dim() == 1
            && spec.family() == KernelFamily::SzegoPolydisc
            && pts.len() >= CIRCLE_MIN_POINTS
        {
            let zs: Vec<C64> = pts.iter().map(|p| p.coords()[0]).collect();
            CircleSzego::new(&zs, MAX_CIRCLES).map(Arc::new)
        } else {
            None
        };
        Ok(ImplicitGram {
            spec: *spec,
            dim: spec.dim(),
            re,
            im,
            points: pts.to_vec(),
            scale: inverse_norms(spec, pts),
            circles,
        })
    }

    /// Same operator with the pairwise product forced, for cross-checks.
    pub fn without_transform(mut self) -> Self {
        self.circles = None;
        self
    }

    /// Whether products go through the circle transform.
    pub fn uses_transform(&self) -> bool {
        self.circles.is_some()
    }

    fn apply_circles(&self, op: &CircleSzego, x: &[C64], y: &mut [C64]) {
        let b: Vec<C64> = x.iter().zip(&self.scale).map(|(v, s)| v * s).collect();
        op.apply(&b, y);
        for (v, s) in y.iter_mut().zip(&self.scale) {
            *v *= *s;
        }
    }

    fn apply_szego_disc(&self, x: &[C64], y: &mut [C64]) {
        let n = self.points.len();
        let (re, im) = (&self.re, &self.im);
        // b_j = s_j x_j, so that g_ij x_j = s_i b_j / w_ij with
        // w_ij = 1 - z_i conj(z_j), and conj(g_ij) x_i = s_j b_i / conj(w_ij)
        let br: Vec<f64> = x.iter().zip(&self.scale).map(|(v, s)| v.re * s).collect();
        let bi: Vec<f64> = x.iter().zip(&self.scale).map(|(v, s)| v.im * s).collect();
        let mut ur = vec![0.0; n];
        let mut ui = vec![0.0; n];
        for i in 0..n {
            let (sr, si) = szego_row(re[i], im[i], br[i], bi[i], &re[..i], &im[..i], &br[..i], &bi[..i], &mut ur[..i], &mut ui[..i]);
            ur[i] += sr;
            ui[i] += si;
        }
        for (k, v) in y.iter_mut().enumerate() {
            let s = self.scale[k];
            *v = x[k] + C64::new(ur[k] * s, ui[k] * s);
        }
    }

    fn apply_szego_poly<const D: usize>(&self, x: &[C64], y: &mut [C64]) {
        let n = self.points.len();
        let (re, im) = (&self.re, &self.im);
        let br: Vec<f64> = x.iter().zip(&self.scale).map(|(v, s)| v.re * s).collect();
        let bi: Vec<f64> = x.iter().zip(&self.scale).map(|(v, s)| v.im * s).collect();
        let mut ur = vec![0.0; n];
        let mut ui = vec![0.0; n];
        for i in 0..n {
            let mut z = [(0.0, 0.0); D];
            for (c, zc) in z.iter_mut().enumerate() {
                *zc = (re[i * D + c], im[i * D + c]);
            }
            let (sr, si) = szego_poly_row::<D>(
                &z,
                (br[i], bi[i]),
                (&re[..i * D], &im[..i * D]),
                (&br[..i], &bi[..i]),
                (&mut ur[..i], &mut ui[..i]),
            );
            ur[i] += sr;
            ui[i] += si;
        }
        for (k, v) in y.iter_mut().enumerate() {
            let s = self.scale[k];
            *v = x[k] + C64::new(ur[k] * s, ui[k] * s);
        }
    }

    fn apply_generic(&self, x: &[C64], y: &mut [C64]) {
        let n = self.points.len();
        y.copy_from_slice(x);
        for i in 0..n {
            let zi = self.points[i].coords();
            let mut acc = C64::new(0.0, 0.0);
            for j in 0..i {
                let g = kernel_eval_unchecked(&self.spec, zi, self.points[j].coords())
                    * (self.scale[i] * self.scale[j]);
                acc += g * x[j];
                y[j] += g.conj() * x[i];
            }
            y[i] += acc;
        }
    }
}

const LANES: usize = 8;

/// One row of the symmetric Szegő product on the disc. Returns
/// `sum_j b_j / w_j` and adds `b_i / conj(w_j)` to `u_j`, where
/// `w_j = 1 - z conj(z_j)`. The bulk runs over fixed-width lanes so that the
/// compiler can vectorize it.
#[allow(clippy::too_many_arguments)]
#[inline(never)]
fn szego_row(
    zr: f64,
    zi: f64,
    pr: f64,
    pi: f64,
    re: &[f64],
    im: &[f64],
    br: &[f64],
    bi: &[f64],
    ur: &mut [f64],
    ui: &mut [f64],
) -> (f64, f64) {
    #[inline(always)]
    fn pair(zr: f64, zi: f64, r: f64, m: f64) -> (f64, f64, f64) {
        let wr = 1.0 - (zr * r + zi * m);
        let wi = zr * m - zi * r;
        (wr, wi, 1.0 / (wr * wr + wi * wi))
    }
    let mut acc_r = [0.0; LANES];
    let mut acc_i = [0.0; LANES];
    let full = re.len() / LANES * LANES;
    let lanes = re[..full]
        .chunks_exact(LANES)
        .zip(im[..full].chunks_exact(LANES))
        .zip(br[..full].chunks_exact(LANES).zip(bi[..full].chunks_exact(LANES)))
        .zip(ur[..full].chunks_exact_mut(LANES).zip(ui[..full].chunks_exact_mut(LANES)));
    for (((r, m), (b1, b2)), (u1, u2)) in lanes {
        for k in 0..LANES {
            let (wr, wi, inv) = pair(zr, zi, r[k], m[k]);
            acc_r[k] += (b1[k] * wr + b2[k] * wi) * inv;
            acc_i[k] += (b2[k] * wr - b1[k] * wi) * inv;
            u1[k] += (pr * wr - pi * wi) * inv;
            u2[k] += (pr * wi + pi * wr) * inv;
        }
    }
    let mut sr: f64 = acc_r.iter().sum();
    let mut si: f64 = acc_i.iter().sum();
    for j in full..re.len() {
        let (wr, wi, inv) = pair(zr, zi, re[j], im[j]);
        sr += (br[j] * wr + bi[j] * wi) * inv;
        si += (bi[j] * wr - br[j] * wi) * inv;
        ur[j] += (pr * wr - pi * wi) * inv;
        ui[j] += (pr * wi + pi * wr) * inv;
    }
    (sr, si)
}

/// Polydisc analogue of [`szego_row`] for `D` coordinates: the kernel is
/// `1 / prod_c w_c`, so each pair costs one complex division.
#[inline(never)]
fn szego_poly_row<const D: usize>(
    z: &[(f64, f64); D],
    (pr, pi): (f64, f64),
    (re, im): (&[f64], &[f64]),
    (br, bi): (&[f64], &[f64]),
    (ur, ui): (&mut [f64], &mut [f64]),
) -> (f64, f64) {
    #[inline(always)]
    fn kernel<const D: usize>(z: &[(f64, f64); D], r: &[f64], m: &[f64]) -> (f64, f64) {
        let (mut pr, mut pi) = (1.0, 0.0);
        for c in 0..D {
            let (zr, zi) = z[c];
            let wr = 1.0 - (zr * r[c] + zi * m[c]);
            let wi = zr * m[c] - zi * r[c];
            let t = pr * wr - pi * wi;
            pi = pr * wi + pi * wr;
            pr = t;
        }
        let inv = 1.0 / (pr * pr + pi * pi);
        (pr * inv, -pi * inv)
    }
    let mut acc_r = [0.0; LANES];
    let mut acc_i = [0.0; LANES];
    let full = br.len() / LANES * LANES;
    let lanes = re[..full * D]
        .chunks_exact(LANES * D)
        .zip(im[..full * D].chunks_exact(LANES * D))
        .zip(br[..full].chunks_exact(LANES).zip(bi[..full].chunks_exact(LANES)))
        .zip(ur[..full].chunks_exact_mut(LANES).zip(ui[..full].chunks_exact_mut(LANES)));
    for (((r, m), (b1, b2)), (u1, u2)) in lanes {
        for k in 0..LANES {
            let (kr, ki) = kernel::<D>(z, &r[k * D..k * D + D], &m[k * D..k * D + D]);
            acc_r[k] += kr * b1[k] - ki * b2[k];
            acc_i[k] += kr * b2[k] + ki * b1[k];
            u1[k] += kr * pr + ki * pi;
            u2[k] += kr * pi - ki * pr;
        }
    }
    let mut sr: f64 = acc_r.iter().sum();
    let mut si: f64 = acc_i.iter().sum();
    for j in full..br.len() {
        let (kr, ki) = kernel::<D>(z, &re[j * D..j * D + D], &im[j * D..j * D + D]);
        sr += kr * br[j] - ki * bi[j];
        si += kr * bi[j] + ki * br[j];
        ur[j] += kr * pr + ki * pi;
        ui[j] += kr * pi - ki * pr;
    }
    (sr, si)
}

impl HermitianOperator for ImplicitGram {
    fn dim(&self) -> usize {
        self.points.len()
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        if let Some(op) = &self.circles {
            self.apply_circles(op, x, y);
        } else if self.spec.family() == KernelFamily::SzegoPolydisc {
            match self.dim {
                1 => self.apply_szego_disc(x, y),
                2 => self.apply_szego_poly::<2>(x, y),
                3 => self.apply_szego_poly::<3>(x, y),
                _ => self.apply_generic(x, y),
            }
        } else {
            self.apply_generic(x, y);
        }
    }

    fn max_diagonal(&self) -> f64 {
        if self.points.is_empty() {
            0.0
        } else {
            1.0
        }
    }
}

/// `||G||` for a sequence: dense below `dense_cap` points, matrix-free above.
pub fn sequence_gram_norm(
    spec: &KernelSpec,
    seq: &RandomSequence,
    opts: &PowerOptions,
    dense_cap: usize,
) -> Result<NormEstimate> {
    if seq.len() <= dense_cap {
        build_gram_capped(spec, seq, dense_cap)?.norm(opts)
    } else {
        Ok(power_iteration(&ImplicitGram::new(spec, seq)?, opts))
    }
}

/// One degree interval `[lo, hi]` of a [`BlockScheme`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub index: usize,
    pub lo: u32,
    pub hi: u32,
}

impl Block {
    pub fn contains(&self, degree: u32) -> bool {
        (self.lo..=self.hi).contains(&degree)
    }
}

/// Overlapping degree blocks `I_j = [2^(j-1), 2^j / eps]` for `j >= 1`,
/// preceded by `I_0 = [0, 1/eps]` so that degree 0 is covered.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockScheme {
    epsilon: f64,
    max_degree: u32,
    blocks: Vec<Block>,
}

impl BlockScheme {
    /// Blocks covering every degree up to `max_degree`.
    pub fn new(epsilon: f64, max_degree: u32) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::param(format!("epsilon {epsilon} must lie in (0, 1)")));
        }
        let upper = |x: f64| (x + 1e-9).floor().min(u32::MAX as f64) as u32;
        let mut blocks = vec![Block {
            index: 0,
            lo: 0,
            hi: upper(1.0 / epsilon),
        }];
        let mut j = 1u32;
        while j < 32 && (1u64 << (j - 1)) <= max_degree as u64 {
            blocks.push(Block {
                index: j as usize,
                lo: 1 << (j - 1),
                hi: upper((j as f64).exp2() / epsilon),
            });
            j += 1;
        }
        Ok(BlockScheme {
            epsilon,
            max_degree,
            blocks,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn max_degree(&self) -> u32 {
        self.max_degree
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    /// Nominal overlap count `log2(1/eps) + 1`.
    pub fn overlap_bound(&self) -> f64 {
        (1.0 / self.epsilon).log2() + 1.0
    }

    /// Largest number of blocks sharing one degree in `0..=max_degree`.
    pub fn max_overlap(&self) -> usize {
        (0..=self.max_degree)
            .map(|s| self.blocks_containing(s).len())
            .max()
            .unwrap_or(0)
    }

    pub fn blocks_containing(&self, degree: u32) -> Vec<usize> {
        self.blocks
            .iter()
            .filter(|b| b.contains(degree))
            .map(|b| b.index)
            .collect()
    }

    /// Whether some block contains both degrees.
    pub fn share_block(&self, s: u32, t: u32) -> bool {
        let (lo, hi) = (s.min(t), s.max(t));
        self.blocks.iter().any(|b| b.lo <= lo && hi <= b.hi)
    }

    fn check_degrees(&self, degrees: &[u32]) -> Result<()> {
        match degrees.iter().find(|&&s| s > self.max_degree) {
            Some(s) => Err(Error::input(format!(
                "degree {s} exceeds the scheme's range {}",
                self.max_degree
            ))),
            None => Ok(()),
        }
    }
}

/// Frobenius norm of the part of `G` lying outside every block, i.e. over the
/// pairs whose degrees share no block.
pub fn hs_norm_offdiagonal(gram: &GramMatrix, scheme: &BlockScheme) -> Result<f64> {
    let deg = gram.degrees()?;
    scheme.check_degrees(&deg)?;
    let width = scheme.max_degree() as usize + 1;
    let mut shared = vec![false; width * width];
    for s in 0..width {
        for t in 0..width {
            shared[s * width + t] = scheme.share_block(s as u32, t as u32);
        }
    }
    let g = gram.entries();
    let mut acc = 0.0;
    for i in 0..deg.len() {
        for j in 0..i {
            if !shared[deg[i] as usize * width + deg[j] as usize] {
                acc += g[(i, j)].norm_sqr() + g[(j, i)].norm_sqr();
            }
        }
    }
    Ok(acc.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockNorm {
    pub block: Block,
    /// Number of points whose degree lies in the block.
    pub size: usize,
    pub norm: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockReport {
    pub blocks: Vec<BlockNorm>,
    pub sup_norm: f64,
    pub overlap_bound: f64,
    /// `overlap_bound * sup_norm`, the overlapping-block bound on `||G||`.
    pub combined_bound: f64,
}

/// Norms of the principal submatrices `X_j` of `G` over each block.
pub fn block_gram_norms(
    gram: &GramMatrix,
    scheme: &BlockScheme,
    opts: &PowerOptions,
) -> Result<BlockReport> {
    let deg = gram.degrees()?;
    scheme.check_degrees(&deg)?;
    let mut blocks = Vec::with_capacity(scheme.blocks().len());
    for b in scheme.blocks() {
        let rows: Vec<usize> = (0..deg.len()).filter(|&i| b.contains(deg[i])).collect();
        let (norm, converged) = if rows.is_empty() {
            (0.0, true)
        } else {
            let sub = gram.entries().select_rows(&rows).select_columns(&rows);
            let est = operator_norm(&sub, opts)?;
            (est.value, est.converged)
        };
        blocks.push(BlockNorm {
            block: *b,
            size: rows.len(),
            norm,
            converged,
        });
    }
    let sup_norm = blocks.iter().map(|b| b.norm).fold(0.0, f64::max);
    Ok(BlockReport {
        blocks,
        sup_norm,
        overlap_bound: scheme.overlap_bound(),
        combined_bound: scheme.overlap_bound() * sup_norm,
    })
}

fn check_radii(rn: &[f64], rj: &[f64]) -> Result<()> {
    if rn.is_empty() || rn.len() != rj.len() {
        return Err(Error::input(format!(
            "radius vectors must have equal positive length, got {} and {}",
            rn.len(),
            rj.len()
        )));
    }
    if let Some(r) = rn.iter().chain(rj).find(|r| !(**r >= 0.0 && **r < 1.0)) {
        return Err(Error::input(format!("radius {r} is outside [0, 1)")));
    }
    Ok(())
}

/// `E|<S_n, S_j>|^2` for uniform independent angles, with two comparison
/// forms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpectedEntry {
    /// `prod_i (1 - r^2)(1 - r'^2) / (1 - r^2 r'^2)`, the exact expectation.
    pub exact: f64,
    /// `prod_i (1 - r^2)(1 - r'^2) / (1 - r r')`, which exceeds the exact
    /// value by the factor `prod_i (1 + r r')`.
    pub radial_surrogate: f64,
    /// `prod_i 1 / (2^m_i + 2^k_i)` with `m`, `k` the band indices.
    pub dyadic_surrogate: f64,
}

pub fn expected_sq_entry_szego(rn: &[f64], rj: &[f64]) -> Result<ExpectedEntry> {
    check_radii(rn, rj)?;
    let mut out = ExpectedEntry {
        exact: 1.0,
        radial_surrogate: 1.0,
        dyadic_surrogate: 1.0,
    };
    for (&r, &s) in rn.iter().zip(rj) {
        let num = (1.0 - r * r) * (1.0 - s * s);
        out.exact *= num / (1.0 - r * r * s * s);
        out.radial_surrogate *= num / (1.0 - r * s);
        let (m, k) = (band_of_gap(1.0 - r), band_of_gap(1.0 - s));
        out.dyadic_surrogate /= (m as f64).exp2() + (k as f64).exp2();
    }
    Ok(out)
}

/// Dirichlet-type analogue of [`ExpectedEntry`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirichletEntry {
    /// `prod_i sum_l c_l^2 (r r')^(2l) / (k(r, r) k(r', r'))`, the exact expectation.
    pub exact: f64,
    /// `prod_i (1 - r)^(1-a) (1 - r')^(1-a) sum_l c_l^2 (r r')^(2l)`.
    pub weighted_form: f64,
    /// `prod_i sum_l c_l^2 (r r')^(2l)`: bounded as `r, r' -> 1` for `a > 1/2`,
    /// growing like `(1 - r r')^(2a - 1)` for `a < 1/2`.
    pub series_factor: f64,
    /// Largest number of series terms used for one coordinate.
    pub terms: usize,
}

/// Taylor coefficients of the one-variable Dirichlet-type kernel.
fn dirichlet_coefficients(a: f64) -> impl Iterator<Item = f64> {
    let mut c = 1.0_f64;
    (0usize..).map(move |l| {
        let out = c;
        let next = l as f64 + 1.0;
        c = if a == 1.0 {
            1.0 / (next + 1.0)
        } else {
            c * (next - a) / next
        };
        out
    })
}

fn dirichlet_series(a: f64, q: f64, tol: f64, scale: f64) -> Result<(f64, usize)> {
    let mut sum = 0.0;
    let mut pow = 1.0;
    for (l, c) in dirichlet_coefficients(a).enumerate().take(MAX_SERIES_TERMS) {
        sum += c * c * pow;
        pow *= q;
        // coefficients are nonincreasing, so the remainder is at most
        // c_l^2 q^(l+1) / (1 - q)
        if pow == 0.0 || scale * c * c * pow / (1.0 - q) < tol {
            return Ok((sum, l + 1));
        }
    }
    Err(Error::Numeric {
        message: format!("series did not reach tolerance {tol:e} in {MAX_SERIES_TERMS} terms"),
        partial: sum,
    })
}

pub fn expected_sq_entry_dirichlet(
    a: f64,
    rn: &[f64],
    rj: &[f64],
    series_tol: f64,
) -> Result<DirichletEntry> {
    if !(0.0..=1.0).contains(&a) {
        return Err(Error::param(format!("Dirichlet parameter {a} outside [0, 1]")));
    }
    if !(series_tol > 0.0) {
        return Err(Error::param("series tolerance must be positive"));
    }
    check_radii(rn, rj)?;
    let mut out = DirichletEntry {
        exact: 1.0,
        weighted_form: 1.0,
        series_factor: 1.0,
        terms: 0,
    };
    for (&r, &s) in rn.iter().zip(rj) {
        let k_rr = dirichlet_factor(a, C64::new(r * r, 0.0)).re;
        let k_ss = dirichlet_factor(a, C64::new(s * s, 0.0)).re;
        let norm = 1.0 / (k_rr * k_ss);
        let q = (r * s) * (r * s);
        let (series, terms) = dirichlet_series(a, q, series_tol, norm)?;
        out.exact *= norm * series;
        out.weighted_form *= ((1.0 - r) * (1.0 - s)).powf(1.0 - a) * series;
        out.series_factor *= series;
        out.terms = out.terms.max(terms);
    }
    Ok(out)
}

/// Diagonal of `E(T^L)` in monomial coordinates, indexed by `l` in
/// `{0..=L}^d` (last coordinate fastest). Off-diagonal expectations vanish.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameDiagonal {
    pub cutoff: u32,
    pub dim: usize,
    pub entries: Vec<f64>,
}

impl FrameDiagonal {
    /// `||E(T^L)||`, the largest diagonal entry.
    pub fn mu(&self) -> f64 {
        self.entries.iter().copied().fold(0.0, f64::max)
    }

    pub fn ambient_dim(&self) -> usize {
        self.entries.len()
    }

    pub fn entry(&self, l: &[u32]) -> f64 {
        self.entries[monomial_position(l, self.cutoff)]
    }
}

fn monomial_position(l: &[u32], cutoff: u32) -> usize {
    l.iter()
        .fold(0usize, |acc, &li| acc * (cutoff as usize + 1) + li as usize)
}

fn frame_dim(cutoff: u32, d: usize, cap: usize) -> Result<usize> {
    let side = cutoff as u64 + 1;
    let size = side.checked_pow(d as u32).unwrap_or(u64::MAX);
    if size > cap as u64 {
        return Err(Error::ResourceLimit {
            what: "truncated frame dimension",
            requested: size,
            cap: cap as u64,
        });
    }
    Ok(size as usize)
}

/// Multi-index of position `pos` in `{0..=L}^d`.
fn monomial_at(mut pos: usize, cutoff: u32, d: usize) -> Vec<u32> {
    let side = cutoff as usize + 1;
    let mut l = vec![0; d];
    for slot in l.iter_mut().rev() {
        *slot = (pos % side) as u32;
        pos /= side;
    }
    l
}

/// Entry `l`: `sum_n prod_i (1 - r_n^2) r_n^(2 l_i)`.
pub fn expected_frame_diagonal(radii: &[Vec<f64>], cutoff: u32) -> Result<FrameDiagonal> {
    let d = radii.first().map_or(1, Vec::len);
    if d == 0 || radii.iter().any(|r| r.len() != d) {
        return Err(Error::input("radius vectors must share a positive dimension"));
    }
    if let Some(r) = radii.iter().flatten().find(|r| !(**r >= 0.0 && **r < 1.0)) {
        return Err(Error::input(format!("radius {r} is outside [0, 1)")));
    }
    let size = frame_dim(cutoff, d, DEFAULT_FRAME_CAP)?;
    let mut entries = vec![0.0; size];
    for (pos, e) in entries.iter_mut().enumerate() {
        let l = monomial_at(pos, cutoff, d);
        *e = radii
            .iter()
            .map(|r| {
                r.iter()
                    .zip(&l)
                    .map(|(&ri, &li)| (1.0 - ri * ri) * ri.powi(2 * li as i32))
                    .product::<f64>()
            })
            .sum();
    }
    Ok(FrameDiagonal {
        cutoff,
        dim: d,
        entries,
    })
}

/// `T^L_[a,b] = sum_j v_j v_j*` with `v_j` the monomial coefficients of the
/// truncated normalized Szegő kernel `P_L(S_j)`, over points with region
/// degree in `[a, b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedFrame {
    pub cutoff: u32,
    pub window: (u32, u32),
    pub points_used: usize,
    pub matrix: CMatrix,
}

impl TruncatedFrame {
    pub fn norm(&self) -> Result<f64> {
        Ok(hermitian_eigenvalues(&self.matrix)?.last().copied().unwrap_or(0.0).max(0.0))
    }
}

/// Monomial coefficients `prod_i sqrt(1 - |z_i|^2) conj(z_i)^(l_i)`, `l_i <= L`.
pub fn truncated_kernel_vector(z: &Point, cutoff: u32) -> Vec<C64> {
    let d = z.dim();
    let side = cutoff as usize + 1;
    let powers: Vec<Vec<C64>> = z
        .coords()
        .iter()
        .map(|c| {
            let base = c.conj();
            let w = (1.0 - c.norm_sqr()).sqrt();
            let mut col = Vec::with_capacity(side);
            let mut p = C64::new(w, 0.0);
            for _ in 0..side {
                col.push(p);
                p *= base;
            }
            col
        })
        .collect();
    let size = side.pow(d as u32);
    (0..size)
        .map(|pos| {
            monomial_at(pos, cutoff, d)
                .iter()
                .enumerate()
                .map(|(i, &li)| powers[i][li as usize])
                .product()
        })
        .collect()
}

pub fn truncated_frame(seq: &RandomSequence, window: (u32, u32), cutoff: u32) -> Result<TruncatedFrame> {
    truncated_frame_capped(seq, window, cutoff, DEFAULT_FRAME_CAP)
}

pub fn truncated_frame_capped(
    seq: &RandomSequence,
    window: (u32, u32),
    cutoff: u32,
    cap: usize,
) -> Result<TruncatedFrame> {
    let Domain::Polydisc(d) = seq.domain() else {
        return Err(Error::input("truncated frames are built for polydisc sequences"));
    };
    if window.0 > window.1 {
        return Err(Error::input(format!("empty degree window {window:?}")));
    }
    let size = frame_dim(cutoff, d, cap)?;
    let mut matrix = CMatrix::zeros(size, size);
    let idx = seq.degree_window(window.0, window.1);
    for &n in &idx {
        let v = truncated_kernel_vector(&seq.points()[n], cutoff);
        for j in 0..size {
            let vj = v[j].conj();
            for i in 0..size {
                matrix[(i, j)] += v[i] * vj;
            }
        }
    }
    Ok(TruncatedFrame {
        cutoff,
        window,
        points_used: idx.len(),
        matrix,
    })
}

/// `N_[a,b] (1 - 2^-b)^(2L)`, the truncation error bound without its
/// dimension-dependent constant.
pub fn partial_sum_tail_bound(count: u64, b: u32, cutoff: u32) -> f64 {
    let base = 1.0 - (-(b as f64)).exp2();
    count as f64 * base.powf(2.0 * cutoff as f64)
}

/// Same bound with the dimensional factor made explicit:
/// `N (1 - (1 - q)^d)`, `q = (1 - 2^-b)^(2L)`, which is at most `d` times
/// [`partial_sum_tail_bound`].
pub fn partial_sum_tail_bound_dim(count: u64, b: u32, cutoff: u32, d: usize) -> f64 {
    let q = partial_sum_tail_bound(1, b, cutoff);
    count as f64 * -(d as f64 * (-q).ln_1p()).exp_m1()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChernoffParams {
    pub delta: f64,
    pub mu: f64,
    pub ambient_dim: usize,
}

impl ChernoffParams {
    pub fn new(delta: f64, mu: f64, ambient_dim: usize) -> Result<Self> {
        if !(delta >= 0.0 && delta.is_finite()) || !(mu >= 0.0 && mu.is_finite()) {
            return Err(Error::param(format!(
                "Chernoff parameters need delta, mu >= 0 (got {delta}, {mu})"
            )));
        }
        Ok(ChernoffParams {
            delta,
            mu,
            ambient_dim,
        })
    }
}

/// `ln(L) + delta mu (1 - ln(1 + delta))`.
pub fn chernoff_log_bound(p: &ChernoffParams) -> f64 {
    (p.ambient_dim as f64).ln() + p.delta * p.mu * (1.0 - p.delta.ln_1p())
}

/// `L (e / (1 + delta))^(delta mu)`.
pub fn chernoff_bound(p: &ChernoffParams) -> f64 {
    p.ambient_dim as f64 * (p.delta * p.mu * (1.0 - p.delta.ln_1p())).exp()
}

/// `(||A ⊙ H||, ||A||)` as spectral norms.
pub fn schur_multiplier_norms(a: &CMatrix, h: &CMatrix) -> Result<(f64, f64)> {
    let prod = crate::kernel::schur_product(a, h)?;
    Ok((spectral_norm(&prod), spectral_norm(a)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchurFactorReport {
    pub nu: f64,
    /// Largest `|G^0 - G^nu ⊙ G^(d-nu)|` entry.
    pub max_factor_error: f64,
    /// Norms of the Hardy Gramian and of the two factors, labelled by the
    /// Besov-Sobolev parameter.
    pub norm_hardy: f64,
    pub norm_nu: f64,
    pub norm_complement: f64,
    /// Both `||G^0|| <= ||G^nu|| (1 + 1e-8)` and the same for `G^(d-nu)`.
    pub norm_bound_holds: bool,
}

/// Builds `G^nu`, `G^(d-nu)` and the Hardy Gramian `G^0` of a ball sequence and
/// checks `G^0 = G^nu ⊙ G^(d-nu)` together with the Schur norm bound.
pub fn ball_schur_factor_check(seq: &RandomSequence, nu: f64, opts: &PowerOptions) -> Result<SchurFactorReport> {
    let Domain::Ball(d) = seq.domain() else {
        return Err(Error::input("Schur factorization check needs a ball sequence"));
    };
    if !(nu > 0.0 && nu < d as f64) {
        return Err(Error::input(format!("nu = {nu} must lie in (0, {d})")));
    }
    let g_nu = build_gram(&KernelSpec::besov_sobolev(nu, d)?, seq)?;
    let g_rest = build_gram(&KernelSpec::besov_sobolev(d as f64 - nu, d)?, seq)?;
    let g0 = build_gram(&KernelSpec::besov_sobolev(0.0, d)?, seq)?;
    let prod = crate::kernel::schur_product(g_nu.entries(), g_rest.entries())?;
    let max_factor_error = (g0.entries() - prod).iter().map(|v| v.norm()).fold(0.0, f64::max);
    let norm_hardy = g0.norm(opts)?.value;
    let norm_nu = g_nu.norm(opts)?.value;
    let norm_complement = g_rest.norm(opts)?.value;
    let slack = 1.0 + 1e-8;
    Ok(SchurFactorReport {
        nu,
        max_factor_error,
        norm_hardy,
        norm_nu,
        norm_complement,
        norm_bound_holds: norm_hardy <= norm_nu * slack && norm_hardy <= norm_complement * slack,
    })
}

const GRAM_MAGIC: &[u8; 4] = b"GRAM";
const GRAM_VERSION: u32 = 1;

/// Binary container: magic, version, `n`, `d`, family tag, parameter `a`, then
/// the lower triangle row by row as little-endian `(re, im)` pairs.
/// Region labels are not stored.
pub fn write_gram<W: Write>(gram: &GramMatrix, mut out: W) -> Result<()> {
    let spec = gram.spec();
    let n = gram.point_count();
    let tag: u8 = match spec.family() {
        KernelFamily::SzegoPolydisc => 0,
        KernelFamily::DirichletPolydisc { .. } => 1,
        KernelFamily::BesovSobolevBall { .. } => 2,
    };
    let mut buf = Vec::with_capacity(29 + n * (n + 1) * 8);
    buf.extend_from_slice(GRAM_MAGIC);
    buf.extend_from_slice(&GRAM_VERSION.to_le_bytes());
    buf.extend_from_slice(&(n as u64).to_le_bytes());
    buf.extend_from_slice(&(spec.dim() as u32).to_le_bytes());
    buf.push(tag);
    buf.extend_from_slice(&spec.parameter().to_le_bytes());
    let g = gram.entries();
    for i in 0..n {
        for j in 0..=i {
            buf.extend_from_slice(&g[(i, j)].re.to_le_bytes());
            buf.extend_from_slice(&g[(i, j)].im.to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

fn take<const N: usize>(data: &[u8], pos: &mut usize) -> Result<[u8; N]> {
    let bytes = data
        .get(*pos..*pos + N)
        .ok_or_else(|| Error::format("Gram container is truncated"))?;
    *pos += N;
    Ok(bytes.try_into().expect("slice length checked"))
}

pub fn read_gram<R: Read>(mut input: R) -> Result<GramMatrix> {
    let mut data = Vec::new();
    input.read_to_end(&mut data)?;
    let mut pos = 0;
    if &take::<4>(&data, &mut pos)? != GRAM_MAGIC {
        return Err(Error::format("not a Gram container"));
    }
    let version = u32::from_le_bytes(take(&data, &mut pos)?);
    if version != GRAM_VERSION {
        return Err(Error::format(format!("unsupported Gram container version {version}")));
    }
    let n = u64::from_le_bytes(take(&data, &mut pos)?) as usize;
    let d = u32::from_le_bytes(take(&data, &mut pos)?) as usize;
    let [tag] = take::<1>(&data, &mut pos)?;
    let a = f64::from_le_bytes(take(&data, &mut pos)?);
    let family = match tag {
        0 => KernelFamily::SzegoPolydisc,
        1 => KernelFamily::DirichletPolydisc { a },
        2 => KernelFamily::BesovSobolevBall { a },
        t => return Err(Error::format(format!("unknown kernel family tag {t}"))),
    };
    let spec = KernelSpec::new(family, d)?;
    let expected = n
        .checked_mul(n + 1)
        .and_then(|v| v.checked_mul(8))
        .ok_or_else(|| Error::format("Gram dimension overflows"))?;
    if data.len() - pos != expected {
        return Err(Error::format(format!(
            "expected {expected} payload bytes, found {}",
            data.len() - pos
        )));
    }
    let mut g = CMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let re = f64::from_le_bytes(take(&data, &mut pos)?);
            let im = f64::from_le_bytes(take(&data, &mut pos)?);
            g[(i, j)] = C64::new(re, im);
            if i != j {
                g[(j, i)] = C64::new(re, -im);
            }
        }
    }
    GramMatrix::from_parts(g, spec, None)
}
