//! Empirical risk minimization as a block-structured conic program.
//!
//! `min_x Σ_i f_i(a_i^T x + b_i)` becomes
//!
//! ```text
//! min Σ z_i   s.t.   D x - y = -b,   (y_i, z_i) in epi f_i,   x in [-R_x, R_x]^p
//! ```
//!
//! with variables ordered `x, (y_1, z_1), (y_2, z_2), ...`. Epigraph blocks are
//! capped at `z <= z_cap` so that every block has an analytic center.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use num_traits::Float;

use crate::barrier::BlockBarrier;
use crate::centralpath::ProblemInstance;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    /// `f(y) = y²`.
    Squared,
    /// `f(y) = ln(1 + e^{-y})`; no epigraph barrier is registered.
    Logistic,
}

impl Loss {
    pub fn name(self) -> &'static str {
        match self {
            Loss::Squared => "squared",
            Loss::Logistic => "logistic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErmBounds {
    /// Box half-width for every model coordinate.
    pub x_box: f64,
    /// Upper cap on each loss value `z_i`.
    pub z_cap: f64,
}

/// The conic program plus what is needed to read a model back out.
#[derive(Debug, Clone, PartialEq)]
pub struct ErmReduction {
    pub problem: ProblemInstance,
    pub features: usize,
    pub points: usize,
}

impl ErmReduction {
    /// Model coordinates `x` of a conic solution.
    pub fn model(&self, solution: &DVector<f64>) -> DVector<f64> {
        solution.rows(0, self.features).into_owned()
    }
}

/// Builds the conic form of `Σ_i loss_i(data_i^T x + offsets_i)`.
pub fn erm_to_conic(
    losses: &[Loss],
    data: &DMatrix<f64>,
    offsets: &DVector<f64>,
    bounds: ErmBounds,
) -> Result<ErmReduction> {
    let points = losses.len();
    if points == 0 {
        return Err(Error::InvalidProblem("ERM with no losses".into()));
    }
    if let Some(l) = losses.iter().find(|l| **l != Loss::Squared) {
        return Err(Error::UnsupportedLoss(l.name()));
    }
    if data.nrows() != points || offsets.len() != points {
        return Err(Error::DimensionMismatch {
            context: "ERM data rows vs losses",
            expected: points,
            got: data.nrows(),
        });
    }
    let p = data.ncols();
    let n = p + 2 * points;
    let mut a = DMatrix::zeros(points, n);
    a.columns_mut(0, p).copy_from(data);
    for i in 0..points {
        a[(i, p + 2 * i)] = -1.0;
    }
    let b = -offsets;
    let mut c = DVector::zeros(n);
    for i in 0..points {
        c[p + 2 * i + 1] = 1.0;
    }
    let mut blocks = Vec::with_capacity(p + points);
    for _ in 0..p {
        blocks.push(BlockBarrier::interval(-bounds.x_box, bounds.x_box)?);
    }
    for _ in 0..points {
        blocks.push(BlockBarrier::parabola_epigraph(Some(bounds.z_cap))?);
    }
    let cap = bounds.z_cap;
    let diameter = Float::sqrt(
        p as f64 * bounds.x_box * bounds.x_box + points as f64 * (cap + cap * cap),
    );
    let lipschitz = Float::sqrt(points as f64);
    let problem = ProblemInstance::new(a, b, c, blocks, lipschitz, diameter)?;
    Ok(ErmReduction {
        problem,
        features: p,
        points,
    })
}

/// Minimizer and minimum of `||D x + b||²` via the normal equations.
pub fn least_squares_optimum(data: &DMatrix<f64>, offsets: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let gram = data.tr_mul(data);
    let rhs = -data.tr_mul(offsets);
    let x = gram.cholesky().ok_or(Error::RankDeficient)?.solve(&rhs);
    let value = (data * &x + offsets).norm_squared();
    Ok((x, value))
}

/// Box and cap wide enough to contain the least-squares fit in the interior.
pub fn default_bounds(data: &DMatrix<f64>, offsets: &DVector<f64>) -> Result<ErmBounds> {
    let (x_ls, _) = least_squares_optimum(data, offsets)?;
    let x_box = 2.0 * x_ls.amax() + 1.0;
    let worst = (0..data.nrows())
        .map(|i| {
            let row: f64 = data.row(i).iter().map(|v| Float::abs(*v)).sum();
            row * x_box + Float::abs(offsets[i])
        })
        .fold(0.0, f64::max);
    Ok(ErmBounds {
        x_box,
        z_cap: 2.0 * worst * worst + 1.0,
    })
}
