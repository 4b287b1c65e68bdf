//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_traits::Float;

use crate::{Error, Result};

/// Relative singular-value cutoff used for every pseudo-inverse in the crate.
pub const PINV_RELATIVE_CUTOFF: f64 = 1e-10;

/// `Q f(Λ) Q^T` for a symmetric matrix `m = Q Λ Q^T`.
pub fn sym_matrix_function(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let n = m.nrows();
    if n == 1 {
        return DMatrix::from_element(1, 1, f(m[(0, 0)]));
    }
    let eig = m.clone().symmetric_eigen();
    let mut scaled = eig.eigenvectors.clone();
    for (j, lambda) in eig.eigenvalues.iter().enumerate() {
        let fj = f(*lambda);
        scaled.column_mut(j).scale_mut(fj);
    }
    scaled * eig.eigenvectors.transpose()
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn sym_eig_range(m: &DMatrix<f64>) -> (f64, f64) {
    let eig = m.clone().symmetric_eigen();
    let lo = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

pub fn symmetric_part(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone()
        .singular_values()
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// Singular-value pseudo-inverse with the cutoff `rel_cutoff * sigma_max`.
#[derive(Debug, Clone)]
pub struct PseudoInverse {
    pub matrix: DMatrix<f64>,
    pub rank: usize,
    pub sigma_max: f64,
    /// Smallest singular value that survived the cutoff.
    pub sigma_min_kept: f64,
}

impl PseudoInverse {
    /// `sigma_max / sigma_min_kept`; the conditioning of the retained subspace.
    pub fn condition(&self) -> f64 {
        self.sigma_max / self.sigma_min_kept
    }
}

pub fn pseudo_inverse(m: &DMatrix<f64>, rel_cutoff: f64) -> Result<PseudoInverse> {
    let svd = m.clone().svd(true, true);
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    if !sigma_max.is_finite() || sigma_max <= 0.0 {
        return Err(Error::NumericalBreakdown(
            "all singular values below the pseudo-inverse cutoff",
        ));
    }
    let cutoff = rel_cutoff * sigma_max;
    let u = svd.u.as_ref().expect("requested U");
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let mut matrix = DMatrix::zeros(m.ncols(), m.nrows());
    let mut rank = 0;
    let mut sigma_min_kept = sigma_max;
    for (k, &sigma) in svd.singular_values.iter().enumerate() {
        if sigma <= cutoff {
            continue;
        }
        rank += 1;
        sigma_min_kept = sigma_min_kept.min(sigma);
        // v_k u_k^T / sigma_k
        matrix.ger(1.0 / sigma, &v_t.row(k).transpose(), &u.column(k), 1.0);
    }
    Ok(PseudoInverse {
        matrix,
        rank,
        sigma_max,
        sigma_min_kept,
    })
}

pub fn median(values: &mut [f64]) -> f64 {
    quantile(values, 0.5)
}

/// Linear-interpolated quantile; sorts `values` in place.
pub fn quantile(values: &mut [f64], q: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of an empty sample");
    values.sort_by(|a, b| a.total_cmp(b));
    let pos = q.clamp(0.0, 1.0) * (values.len() - 1) as f64;
    let lo = Float::floor(pos) as usize;
    let hi = Float::ceil(pos) as usize;
    let frac = pos - lo as f64;
    values[lo] * (1.0 - frac) + values[hi] * frac
}

pub fn l1_norm(v: &DVector<f64>) -> f64 {
    v.iter().map(|x| Float::abs(*x)).sum()
}

/// Numerically stable `ln(sum_i exp(v_i))`.
pub fn log_sum_exp(values: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = values.into_iter().map(|v| Float::exp(v - max)).sum();
    max + Float::ln(sum)
}
