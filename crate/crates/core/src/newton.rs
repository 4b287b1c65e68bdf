//! Newton projections and step directions.
//!
//! With `W = (∇²φ(x))^{-1}` (block diagonal) and `C = W^{1/2} A^T`, the exact
//! projection is `P = C (C^T C)^{-1} C^T`. The sketched projection assembled
//! from client uploads is
//!
//! ```text
//! P~ = U · R_1 · pinv(R_2^T M R_3) · R_4^T · V
//! U = C R_1^T,   M = R_2 C^T C R_3^T,   V = R_4 C^T
//! ```
//!
//! `P~` is only ever applied to vectors; [`Projection::materialize`] exists for
//! tests and diagnostics.
//!
//! Both the centralized and the federated code paths go through
//! [`pre_deltas`] (server side) and [`complete_deltas`] (owner of `W` side), so
//! the two produce the same arithmetic.

use alloc::vec::Vec;
use core::ops::Range;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_traits::Float;

use crate::linalg::{
    pseudo_inverse, spectral_norm, sym_eig_range, sym_matrix_function, symmetric_part,
    PINV_RELATIVE_CUTOFF,
};
use crate::sketch::{SketchMatrix, SketchSet, SketchSpec};
use crate::{Error, Result};

/// One diagonal block `W_i` with its symmetric square root and inverse square root.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightBlock {
    pub offset: usize,
    pub w: DMatrix<f64>,
    pub sqrt: DMatrix<f64>,
    pub inv_sqrt: DMatrix<f64>,
}

impl WeightBlock {
    /// Inverts a barrier Hessian block.
    pub fn from_hessian(offset: usize, hess: &DMatrix<f64>) -> Result<Self> {
        let n = hess.nrows();
        if n == 1 {
            let h = hess[(0, 0)];
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::SingularHessian);
            }
            let r = Float::sqrt(h);
            return Ok(Self {
                offset,
                w: DMatrix::from_element(1, 1, 1.0 / h),
                sqrt: DMatrix::from_element(1, 1, 1.0 / r),
                inv_sqrt: DMatrix::from_element(1, 1, r),
            });
        }
        let (lo, _) = sym_eig_range(hess);
        if !(lo > 0.0) {
            return Err(Error::SingularHessian);
        }
        Ok(Self {
            offset,
            w: sym_matrix_function(hess, |l| 1.0 / l),
            sqrt: sym_matrix_function(hess, |l| 1.0 / Float::sqrt(l)),
            inv_sqrt: sym_matrix_function(hess, Float::sqrt),
        })
    }

    pub fn dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.dim()
    }
}

/// Block-diagonal `W = ⊗_i W_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    blocks: Vec<WeightBlock>,
    dim: usize,
}

impl WeightMatrix {
    pub fn from_blocks(blocks: Vec<WeightBlock>) -> Result<Self> {
        let mut dim = 0;
        for b in &blocks {
            if b.offset != dim {
                return Err(Error::DimensionMismatch {
                    context: "weight block offset",
                    expected: dim,
                    got: b.offset,
                });
            }
            dim += b.dim();
        }
        Ok(Self { blocks, dim })
    }

    /// Builds `W` from the barrier Hessian blocks, laid out contiguously.
    pub fn from_hessians<'a>(hessians: impl IntoIterator<Item = &'a DMatrix<f64>>) -> Result<Self> {
        let mut blocks = Vec::new();
        let mut offset = 0;
        for h in hessians {
            let block = WeightBlock::from_hessian(offset, h)?;
            offset += block.dim();
            blocks.push(block);
        }
        Self::from_blocks(blocks)
    }

    pub fn identity(dims: &[usize]) -> Self {
        let mut blocks = Vec::with_capacity(dims.len());
        let mut offset = 0;
        for &d in dims {
            blocks.push(WeightBlock {
                offset,
                w: DMatrix::identity(d, d),
                sqrt: DMatrix::identity(d, d),
                inv_sqrt: DMatrix::identity(d, d),
            });
            offset += d;
        }
        Self { blocks, dim: offset }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn blocks(&self) -> &[WeightBlock] {
        &self.blocks
    }

    fn apply_with(
        &self,
        v: &DVector<f64>,
        pick: impl Fn(&WeightBlock) -> &DMatrix<f64>,
    ) -> DVector<f64> {
        debug_assert_eq!(v.len(), self.dim);
        let mut out = DVector::zeros(self.dim);
        for b in &self.blocks {
            let r = b.range();
            let m = pick(b);
            if m.nrows() == 1 {
                out[r.start] = m[(0, 0)] * v[r.start];
            } else {
                let seg = m * v.rows(r.start, r.len());
                out.rows_mut(r.start, r.len()).copy_from(&seg);
            }
        }
        out
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        self.apply_with(v, |b| &b.w)
    }

    pub fn apply_sqrt(&self, v: &DVector<f64>) -> DVector<f64> {
        self.apply_with(v, |b| &b.sqrt)
    }

    pub fn apply_inv_sqrt(&self, v: &DVector<f64>) -> DVector<f64> {
        self.apply_with(v, |b| &b.inv_sqrt)
    }

    /// `W^{1/2} M` for a matrix with `dim` rows.
    pub fn sqrt_times(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(m.nrows(), m.ncols());
        for b in &self.blocks {
            let r = b.range();
            let seg = &b.sqrt * m.rows(r.start, r.len());
            out.rows_mut(r.start, r.len()).copy_from(&seg);
        }
        out
    }

    pub fn dense(&self) -> DMatrix<f64> {
        self.dense_with(|b| &b.w)
    }

    pub fn dense_sqrt(&self) -> DMatrix<f64> {
        self.dense_with(|b| &b.sqrt)
    }

    fn dense_with(&self, pick: impl Fn(&WeightBlock) -> &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.dim, self.dim);
        for b in &self.blocks {
            let r = b.range();
            out.view_mut((r.start, r.start), (r.len(), r.len()))
                .copy_from(pick(b));
        }
        out
    }
}

/// `C = W^{1/2} A^T`, an `n x d` matrix.
pub fn scaled_transpose(a: &DMatrix<f64>, w: &WeightMatrix) -> Result<DMatrix<f64>> {
    if a.ncols() != w.dim() {
        return Err(Error::DimensionMismatch {
            context: "A columns vs W",
            expected: w.dim(),
            got: a.ncols(),
        });
    }
    Ok(w.sqrt_times(&a.transpose()))
}

/// Something that acts like the projection `P` on vectors of length `n`.
pub trait Projection {
    fn dim(&self) -> usize;

    fn apply(&self, v: &DVector<f64>) -> DVector<f64>;

    /// `(A W A^T)^{-1} C^T v`, available only for the exact projection.
    fn dual_coefficients(&self, _v: &DVector<f64>) -> Option<DVector<f64>> {
        None
    }

    fn materialize(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut out = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut e = DVector::zeros(n);
            e[j] = 1.0;
            out.set_column(j, &self.apply(&e));
        }
        out
    }
}

/// `P = C (C^T C)^{-1} C^T` via a Cholesky factorization of `A W A^T`.
#[derive(Debug, Clone)]
pub struct ExactProjection {
    c: DMatrix<f64>,
    gram: Cholesky<f64, Dyn>,
}

impl ExactProjection {
    pub fn new(a: &DMatrix<f64>, w: &WeightMatrix) -> Result<Self> {
        let c = scaled_transpose(a, w)?;
        let gram = c.tr_mul(&c);
        let chol = gram.cholesky().ok_or(Error::RankDeficient)?;
        let diag = chol.l_dirty().diagonal();
        let lo = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = diag.iter().cloned().fold(0.0, f64::max);
        if !(lo > 0.0) || lo * lo <= 1e-14 * hi * hi {
            return Err(Error::RankDeficient);
        }
        Ok(Self { c, gram: chol })
    }

    pub fn scaled_constraints(&self) -> &DMatrix<f64> {
        &self.c
    }
}

impl Projection for ExactProjection {
    fn dim(&self) -> usize {
        self.c.nrows()
    }

    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let coeffs = self.gram.solve(&self.c.tr_mul(v));
        &self.c * coeffs
    }

    fn dual_coefficients(&self, v: &DVector<f64>) -> Option<DVector<f64>> {
        Some(self.gram.solve(&self.c.tr_mul(v)))
    }
}

/// Dense exact projection matrix.
pub fn exact_projection(a: &DMatrix<f64>, w: &WeightMatrix) -> Result<DMatrix<f64>> {
    Ok(ExactProjection::new(a, w)?.materialize())
}

/// Sketched pieces for a group of columns: `(W^{1/2} A^T R_1^T, R_2 A W A^T R_3^T, R_4 A W^{1/2})`.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchedPieces {
    pub u: DMatrix<f64>,
    pub m: DMatrix<f64>,
    pub v: DMatrix<f64>,
}

/// Pieces for columns `a` (`d x n_i`) with local weights `w` (`n_i x n_i`).
pub fn sketched_pieces(
    a: &DMatrix<f64>,
    w: &WeightMatrix,
    sketches: &SketchSet,
) -> Result<SketchedPieces> {
    if a.nrows() != sketches.cols() {
        return Err(Error::DimensionMismatch {
            context: "A rows vs sketch columns",
            expected: sketches.cols(),
            got: a.nrows(),
        });
    }
    let c = scaled_transpose(a, w)?;
    let r = |k: usize| sketches.get(k).entries();
    let u = &c * r(1).transpose();
    let left = r(2) * c.transpose();
    let right = r(3) * c.transpose();
    let m = &left * right.transpose();
    let v = r(4) * c.transpose();
    Ok(SketchedPieces { u, m, v })
}

/// The uploaded pieces stacked over all columns, plus the sketch specs.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionBundle {
    pub u: DMatrix<f64>,
    pub m: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub specs: [SketchSpec; 4],
}

impl ProjectionBundle {
    /// Computes the bundle centrally from the full `A` and `W`.
    pub fn central(a: &DMatrix<f64>, w: &WeightMatrix, sketches: &SketchSet) -> Result<Self> {
        let pieces = sketched_pieces(a, w, sketches)?;
        Ok(Self {
            u: pieces.u,
            m: pieces.m,
            v: pieces.v,
            specs: sketches.specs(),
        })
    }

    /// Stacks per-client pieces in the given (client) order: `U` by rows,
    /// `M` summed, `V` by columns.
    pub fn from_pieces<'a>(
        pieces: impl IntoIterator<Item = &'a SketchedPieces>,
        specs: [SketchSpec; 4],
    ) -> Result<Self> {
        let [b1, b2, b3, b4] = [specs[0].rows, specs[1].rows, specs[2].rows, specs[3].rows];
        let mut u_parts: Vec<&DMatrix<f64>> = Vec::new();
        let mut v_parts: Vec<&DMatrix<f64>> = Vec::new();
        let mut m = DMatrix::zeros(b2, b3);
        for p in pieces {
            if p.u.ncols() != b1 || p.v.nrows() != b4 || p.m.shape() != (b2, b3) || p.u.nrows() != p.v.ncols() {
                return Err(Error::DimensionMismatch {
                    context: "client pieces vs sketch sizes",
                    expected: b1,
                    got: p.u.ncols(),
                });
            }
            m += &p.m;
            u_parts.push(&p.u);
            v_parts.push(&p.v);
        }
        let n: usize = u_parts.iter().map(|u| u.nrows()).sum();
        let mut u = DMatrix::zeros(n, b1);
        let mut v = DMatrix::zeros(b4, n);
        let mut row = 0;
        for (up, vp) in u_parts.iter().zip(&v_parts) {
            let k = up.nrows();
            u.rows_mut(row, k).copy_from(*up);
            v.columns_mut(row, k).copy_from(*vp);
            row += k;
        }
        Ok(Self { u, m, v, specs })
    }
}

/// `P~` in factored form `U K V`, with `K = R_1 pinv(R_2^T M R_3) R_4^T`.
#[derive(Debug, Clone)]
pub struct SketchedProjection {
    u: DMatrix<f64>,
    k: DMatrix<f64>,
    v: DMatrix<f64>,
    rank: usize,
    condition: f64,
}

impl SketchedProjection {
    /// Numerical rank of the `d x d` middle factor.
    pub fn middle_rank(&self) -> usize {
        self.rank
    }

    /// Condition number of the retained part of the middle factor.
    pub fn middle_condition(&self) -> f64 {
        self.condition
    }
}

impl Projection for SketchedProjection {
    fn dim(&self) -> usize {
        self.u.nrows()
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let vx = &self.v * x;
        let kvx = &self.k * vx;
        &self.u * kvx
    }
}

pub fn assemble_sketched_projection(
    bundle: &ProjectionBundle,
    sketches: &SketchSet,
) -> Result<SketchedProjection> {
    if bundle.specs != sketches.specs() {
        return Err(Error::Protocol("bundle sketch specs differ from the local sketches".into()));
    }
    let r = |k: usize| -> &SketchMatrix { sketches.get(k) };
    let middle = r(2).entries().tr_mul(&bundle.m) * r(3).entries();
    let pinv = pseudo_inverse(&middle, PINV_RELATIVE_CUTOFF)?;
    let k = r(1).entries() * &pinv.matrix * r(4).entries().transpose();
    Ok(SketchedProjection {
        u: bundle.u.clone(),
        k,
        v: bundle.v.clone(),
        rank: pinv.rank,
        condition: pinv.condition(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonDeltas {
    pub dx: DVector<f64>,
    pub ds: DVector<f64>,
    /// Dual step, only produced with the exact projection.
    pub dy: Option<DVector<f64>>,
}

/// Server-side half of a Newton step on the scaled direction `h_scaled = W^{1/2} h`:
/// returns `(h_scaled - P h_scaled, t · P h_scaled)`.
pub fn pre_deltas(
    proj: &dyn Projection,
    h_scaled: &DVector<f64>,
    t: f64,
) -> (DVector<f64>, DVector<f64>) {
    let z = proj.apply(h_scaled);
    (h_scaled - &z, z * t)
}

/// Owner-side half: `dx = W^{1/2} p`, `ds = W^{-1/2} q`.
pub fn complete_deltas(
    w: &WeightMatrix,
    p: &DVector<f64>,
    q: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    (w.apply_sqrt(p), w.apply_inv_sqrt(q))
}

/// `dx = W^{1/2}(I - P)W^{1/2} h`, `ds = t W^{-1/2} P W^{1/2} h`,
/// `dy = -t (A W A^T)^{-1} A W h` (exact projection only).
pub fn newton_deltas(
    proj: &dyn Projection,
    w: &WeightMatrix,
    h: &DVector<f64>,
    t: f64,
) -> Result<NewtonDeltas> {
    if !(t > 0.0) {
        return Err(Error::InvalidParams("path parameter must be positive"));
    }
    if h.len() != w.dim() || proj.dim() != w.dim() {
        return Err(Error::DimensionMismatch {
            context: "newton_deltas",
            expected: w.dim(),
            got: h.len(),
        });
    }
    let h_scaled = w.apply_sqrt(h);
    let (p, q) = pre_deltas(proj, &h_scaled, t);
    let (dx, ds) = complete_deltas(w, &p, &q);
    let dy = proj.dual_coefficients(&h_scaled).map(|c| c * -t);
    Ok(NewtonDeltas { dx, ds, dy })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SandwichCheck {
    pub eps_hat: f64,
    pub ok: bool,
}

/// Forms `G = R^T R B^{-1} S^T S` and measures how far `G^{-1}` is from `B`:
/// `eps_hat = max |λ - 1| / 2` over the spectrum of `B^{-1/2} sym(G^{-1}) B^{-1/2}`.
pub fn sandwich_check(
    binv: &DMatrix<f64>,
    r: &SketchMatrix,
    s: &SketchMatrix,
) -> Result<SandwichCheck> {
    let d = binv.nrows();
    if binv.ncols() != d || r.cols() != d || s.cols() != d {
        return Err(Error::DimensionMismatch {
            context: "sandwich_check",
            expected: d,
            got: r.cols(),
        });
    }
    let g = r.gram() * binv * s.gram();
    let pinv = pseudo_inverse(&g, PINV_RELATIVE_CUTOFF).map_err(|_| Error::SingularG)?;
    if pinv.rank < d {
        return Err(Error::SingularG);
    }
    let binv_sqrt = sym_matrix_function(&symmetric_part(binv), Float::sqrt);
    let relative = &binv_sqrt * symmetric_part(&pinv.matrix) * &binv_sqrt;
    let (lo, hi) = sym_eig_range(&relative);
    let eps_hat = Float::max(Float::abs(lo - 1.0), Float::abs(hi - 1.0)) / 2.0;
    Ok(SandwichCheck {
        eps_hat,
        ok: eps_hat < 0.5,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoSketchError {
    pub err: f64,
    pub bound: f64,
}

/// `|u^T R^T R Bt S^T S v - u^T Bt v|` and its concentration bound with unit constants.
pub fn two_sketch_error(
    u: &DVector<f64>,
    v: &DVector<f64>,
    bt: &DMatrix<f64>,
    r: &SketchMatrix,
    s: &SketchMatrix,
) -> Result<TwoSketchError> {
    let n = u.len();
    if v.len() != n || bt.shape() != (n, n) || r.cols() != n || s.cols() != n {
        return Err(Error::DimensionMismatch {
            context: "two_sketch_error",
            expected: n,
            got: v.len(),
        });
    }
    let ru = r.entries().tr_mul(&(r.entries() * u));
    let sv = s.entries().tr_mul(&(s.entries() * v));
    let sketched = ru.dot(&(bt * sv));
    let exact = u.dot(&(bt * v));
    let ln = Float::ln((n as f64).max(2.0));
    let (b1, b2) = (r.rows() as f64, s.rows() as f64);
    let bound = Float::powf(ln, 1.5) / Float::sqrt(b1) * u.norm() * (bt * v).norm()
        + Float::powf(ln, 1.5) / Float::sqrt(b2) * (bt.tr_mul(u)).norm() * v.norm()
        + Float::powi(ln, 3) / Float::sqrt(b1 * b2) * u.norm() * v.norm() * bt.norm();
    Ok(TwoSketchError {
        err: Float::abs(sketched - exact),
        bound,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BilinearReport {
    pub exact: f64,
    pub sketched: f64,
    pub gap: f64,
    /// `ln^6 d (1/sqrt(b_min) + n/b_min^2) κ ||C^T g|| ||C^T h|| ||B||` with unit constant.
    pub predicted_bound: f64,
    /// `||C^T g|| ||C^T h|| ||B||`.
    pub scale: f64,
    pub kappa: f64,
}

/// Compares `g^T P h` with `g^T P~ h` for the given sketches.
pub fn bilinear_error_report(
    a: &DMatrix<f64>,
    w: &WeightMatrix,
    g: &DVector<f64>,
    h: &DVector<f64>,
    sketches: &SketchSet,
) -> Result<BilinearReport> {
    let exact_proj = ExactProjection::new(a, w)?;
    let bundle = ProjectionBundle::central(a, w, sketches)?;
    let sketched_proj = assemble_sketched_projection(&bundle, sketches)?;
    let exact = g.dot(&exact_proj.apply(h));
    let sketched = g.dot(&sketched_proj.apply(h));

    let c = exact_proj.scaled_constraints();
    let gram = c.tr_mul(c);
    let (lam_lo, lam_hi) = sym_eig_range(&gram);
    if !(lam_lo > 0.0) {
        return Err(Error::RankDeficient);
    }
    // B = gram^{-1}: ||B|| = 1/lam_lo, κ(B) = lam_hi/lam_lo
    let b_norm = 1.0 / lam_lo;
    let kappa = lam_hi / lam_lo;
    let scale = c.tr_mul(g).norm() * c.tr_mul(h).norm() * b_norm;
    let d = a.nrows() as f64;
    let n = a.ncols() as f64;
    let sizes = sketches.sizes();
    let b_min = sizes[0].min(sizes[1]) as f64;
    let predicted_bound = Float::powi(Float::ln(d.max(2.0)), 6)
        * (1.0 / Float::sqrt(b_min) + n / (b_min * b_min))
        * kappa
        * scale;
    Ok(BilinearReport {
        exact,
        sketched,
        gap: Float::abs(exact - sketched),
        predicted_bound,
        scale,
        kappa,
    })
}

/// `||B||_2` where `B = (A W A^T)^{-1}`.
pub fn inverse_gram_norm(a: &DMatrix<f64>, w: &WeightMatrix) -> Result<f64> {
    let c = scaled_transpose(a, w)?;
    let gram = c.tr_mul(&c);
    let (lo, _) = sym_eig_range(&gram);
    if !(lo > 0.0) {
        return Err(Error::RankDeficient);
    }
    Ok(1.0 / lo)
}

/// Spectral norm helper re-exported for diagnostics.
pub fn operator_norm(m: &DMatrix<f64>) -> f64 {
    spectral_norm(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::random_weighted_instance;
    use crate::sketch::SketchKind;
    use alloc::vec;

    fn row(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, v.len(), v)
    }

    fn diag_weights(d: &[f64]) -> WeightMatrix {
        let hess: Vec<DMatrix<f64>> = d.iter().map(|w| DMatrix::from_element(1, 1, 1.0 / w)).collect();
        WeightMatrix::from_hessians(hess.iter()).unwrap()
    }

    #[test]
    fn rank_one_projection_identity_weights() {
        let p = exact_projection(&row(&[1.0, 1.0]), &WeightMatrix::identity(&[1, 1])).unwrap();
        let expected = DMatrix::from_element(2, 2, 0.5);
        assert!((p - expected).amax() < 1e-15);
    }

    #[test]
    fn rank_one_projection_weighted() {
        let p = exact_projection(&row(&[1.0, 1.0]), &diag_weights(&[4.0, 1.0])).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 1.0]) / 5.0;
        assert!((p - expected).amax() < 1e-15);
    }

    #[test]
    fn rank_deficient_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]);
        assert!(matches!(
            ExactProjection::new(&a, &WeightMatrix::identity(&[1, 1])),
            Err(Error::RankDeficient)
        ));
    }

    #[test]
    fn weight_block_square_roots() {
        let h = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]);
        let b = WeightBlock::from_hessian(0, &h).unwrap();
        assert!((&b.sqrt * &b.sqrt - &b.w).amax() < 1e-12);
        assert!((&b.w * &h - DMatrix::identity(2, 2)).amax() < 1e-12);
        assert!((&b.inv_sqrt * &b.sqrt - DMatrix::identity(2, 2)).amax() < 1e-12);
    }

    #[test]
    fn closed_form_deltas() {
        let a = row(&[1.0, 1.0]);
        let w = WeightMatrix::identity(&[1, 1]);
        let proj = ExactProjection::new(&a, &w).unwrap();
        let h = DVector::from_vec(vec![1.0, 0.0]);
        let d = newton_deltas(&proj, &w, &h, 1.0).unwrap();
        assert!((d.dx - DVector::from_vec(vec![0.5, -0.5])).amax() < 1e-15);
        assert!((d.ds - DVector::from_vec(vec![0.5, 0.5])).amax() < 1e-15);
        assert!((&a * DVector::from_vec(vec![0.5, -0.5]))[0].abs() < 1e-15);
        // dy: A^T dy + ds = 0
        let dy = d.dy.unwrap();
        assert!((a.transpose() * dy + DVector::from_vec(vec![0.5, 0.5])).amax() < 1e-15);

        let zero = newton_deltas(&proj, &w, &DVector::zeros(2), 1.0).unwrap();
        assert_eq!(zero.dx, DVector::zeros(2));
        assert_eq!(zero.ds, DVector::zeros(2));
        assert!(newton_deltas(&proj, &w, &h, 0.0).is_err());
    }

    #[test]
    fn identity_sketches_reproduce_exact_projection() {
        let a = row(&[1.0, 1.0]);
        let w = WeightMatrix::identity(&[1, 1]);
        let sketches = SketchSet::generate(SketchKind::Identity, [1; 4], 1, 0).unwrap();
        let bundle = ProjectionBundle::central(&a, &w, &sketches).unwrap();
        let p = assemble_sketched_projection(&bundle, &sketches).unwrap().materialize();
        assert!((p - DMatrix::from_element(2, 2, 0.5)).amax() < 1e-10);
    }

    #[test]
    fn identity_sketches_match_random_instance() {
        let inst = random_weighted_instance(5, 12, 10.0, 3);
        let sketches = SketchSet::generate(SketchKind::Identity, [5; 4], 5, 0).unwrap();
        let bundle = ProjectionBundle::central(&inst.a, &inst.w, &sketches).unwrap();
        let tilde = assemble_sketched_projection(&bundle, &sketches).unwrap().materialize();
        let exact = exact_projection(&inst.a, &inst.w).unwrap();
        assert!((tilde - exact).amax() < 1e-10);
    }

    #[test]
    fn client_pieces_stack_to_central_bundle() {
        let inst = random_weighted_instance(4, 10, 10.0, 9);
        let sketches = SketchSet::generate(SketchKind::Ams, [8, 8, 8, 8], 4, 77).unwrap();
        let central = ProjectionBundle::central(&inst.a, &inst.w, &sketches).unwrap();
        // split the columns at a block boundary
        let split = inst.w.blocks()[inst.w.blocks().len() / 2].offset;
        let mk = |lo: usize, hi: usize| {
            let blocks: Vec<WeightBlock> = inst
                .w
                .blocks()
                .iter()
                .filter(|b| b.offset >= lo && b.offset < hi)
                .map(|b| WeightBlock { offset: b.offset - lo, ..b.clone() })
                .collect();
            let w = WeightMatrix::from_blocks(blocks).unwrap();
            sketched_pieces(&inst.a.columns(lo, hi - lo).into_owned(), &w, &sketches).unwrap()
        };
        let n = inst.a.ncols();
        let parts = [mk(0, split), mk(split, n)];
        let stacked = ProjectionBundle::from_pieces(parts.iter(), sketches.specs()).unwrap();
        assert!((&stacked.u - &central.u).amax() <= 1e-12);
        assert!((&stacked.v - &central.v).amax() <= 1e-12);
        assert!((&stacked.m - &central.m).amax() <= 1e-12 * (1.0 + central.m.amax()));
    }

    #[test]
    fn sandwich_identity_and_singular() {
        let binv = DMatrix::identity(8, 8) * 2.0;
        let id = SketchMatrix::generate(SketchSpec::new(SketchKind::Identity, 8, 8, 0, 1)).unwrap();
        let chk = sandwich_check(&binv, &id, &id).unwrap();
        assert!(chk.eps_hat < 1e-12 && chk.ok);
        let r = SketchMatrix::generate(SketchSpec::new(SketchKind::Ams, 4, 8, 1, 1)).unwrap();
        let s = SketchMatrix::generate(SketchSpec::new(SketchKind::Ams, 4, 8, 1, 2)).unwrap();
        assert!(matches!(sandwich_check(&binv, &r, &s), Err(Error::SingularG)));
    }

    #[test]
    fn two_sketch_trivial_cases() {
        let id = SketchMatrix::generate(SketchSpec::new(SketchKind::Identity, 6, 6, 0, 1)).unwrap();
        let r = SketchMatrix::generate(SketchSpec::new(SketchKind::Ams, 3, 6, 0, 1)).unwrap();
        let u = DVector::from_fn(6, |i, _| i as f64 - 2.5);
        let v = DVector::from_fn(6, |i, _| (i * i) as f64);
        let bt = DMatrix::identity(6, 6);
        assert_eq!(two_sketch_error(&DVector::zeros(6), &v, &bt, &r, &r).unwrap().err, 0.0);
        assert!(two_sketch_error(&u, &v, &bt, &id, &id).unwrap().err < 1e-12);
        assert!(two_sketch_error(&u, &DVector::zeros(5), &bt, &r, &r).is_err());
    }

    #[test]
    fn bilinear_identity_and_zero() {
        let inst = random_weighted_instance(4, 8, 10.0, 5);
        let id = SketchSet::generate(SketchKind::Identity, [4; 4], 4, 0).unwrap();
        let g = DVector::from_fn(8, |i, _| (i as f64).sin());
        let rep = bilinear_error_report(&inst.a, &inst.w, &g, &g, &id).unwrap();
        assert!(rep.gap < 1e-12 * (1.0 + rep.exact.abs()));
        let zero = DVector::zeros(8);
        let ams = SketchSet::generate(SketchKind::Ams, [16; 4], 4, 1).unwrap();
        let rep = bilinear_error_report(&inst.a, &inst.w, &zero, &zero, &ams).unwrap();
        assert_eq!((rep.exact, rep.sketched, rep.gap, rep.predicted_bound), (0.0, 0.0, 0.0, 0.0));
    }
}
