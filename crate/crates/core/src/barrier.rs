//! Self-concordant barriers for the per-block convex sets.
//!
//! Every block is O(1)-dimensional, so values, gradients and Hessians are
//! closed-form. Points within [`BOUNDARY_TOLERANCE`] of the boundary count as
//! outside the domain.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use num_traits::Float;

use crate::linalg::{sym_eig_range, sym_matrix_function};
use crate::{Error, Result};

pub const BOUNDARY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BarrierKind {
    /// `x >= 0`, `phi = -ln x`.
    NonNeg,
    /// `lower <= x <= upper`, `phi = -ln(x - lower) - ln(upper - x)`.
    Interval { lower: f64, upper: f64 },
    /// `{(y, z) : z >= y^2}`, `phi = -ln(z - y^2)`, optionally intersected with
    /// `z <= z_cap` (adds `-ln(z_cap - z)`).
    ParabolaEpigraph { z_cap: Option<f64> },
    /// The coordinate appended by the initial-point construction, `phi = -ln x`.
    LogExtra,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockBarrier {
    kind: BarrierKind,
    nu: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarrierEval {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelfConcordanceCheck {
    pub third_directional: f64,
    pub bound: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityCheck {
    /// `||y - x||_x`.
    pub radius: f64,
    pub ratio_low: f64,
    pub ratio_high: f64,
    /// `radius < 1`; when false the bounds below are vacuous and `ok` is false.
    pub precondition_met: bool,
    pub ok: bool,
}

impl BlockBarrier {
    pub fn nonneg() -> Self {
        Self {
            kind: BarrierKind::NonNeg,
            nu: 1.0,
        }
    }

    pub fn log_extra() -> Self {
        Self {
            kind: BarrierKind::LogExtra,
            nu: 1.0,
        }
    }

    pub fn interval(lower: f64, upper: f64) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite()) || upper - lower <= 2.0 * BOUNDARY_TOLERANCE {
            return Err(Error::InvalidBarrier("interval needs finite lower < upper"));
        }
        Ok(Self {
            kind: BarrierKind::Interval { lower, upper },
            nu: 2.0,
        })
    }

    pub fn parabola_epigraph(z_cap: Option<f64>) -> Result<Self> {
        if let Some(cap) = z_cap {
            if !(cap.is_finite() && cap > 2.0 * BOUNDARY_TOLERANCE) {
                return Err(Error::InvalidBarrier("epigraph cap must be positive and finite"));
            }
        }
        Ok(Self {
            kind: BarrierKind::ParabolaEpigraph { z_cap },
            nu: if z_cap.is_some() { 3.0 } else { 2.0 },
        })
    }

    pub fn kind(&self) -> BarrierKind {
        self.kind
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn dim(&self) -> usize {
        match self.kind {
            BarrierKind::ParabolaEpigraph { .. } => 2,
            _ => 1,
        }
    }

    pub fn is_interior(&self, x: &[f64]) -> bool {
        if x.len() != self.dim() || x.iter().any(|v| !v.is_finite()) {
            return false;
        }
        match self.kind {
            BarrierKind::NonNeg | BarrierKind::LogExtra => x[0] > BOUNDARY_TOLERANCE,
            BarrierKind::Interval { lower, upper } => {
                x[0] - lower > BOUNDARY_TOLERANCE && upper - x[0] > BOUNDARY_TOLERANCE
            }
            BarrierKind::ParabolaEpigraph { z_cap } => {
                let (y, z) = (x[0], x[1]);
                z - y * y > BOUNDARY_TOLERANCE
                    && z_cap.is_none_or(|cap| cap - z > BOUNDARY_TOLERANCE)
            }
        }
    }

    fn ensure_interior(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "barrier point",
                expected: self.dim(),
                got: x.len(),
            });
        }
        if self.is_interior(x) {
            Ok(())
        } else {
            Err(Error::DomainViolation { block: 0 })
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<BarrierEval> {
        self.ensure_interior(x)?;
        Ok(match self.kind {
            BarrierKind::NonNeg | BarrierKind::LogExtra => {
                let v = x[0];
                BarrierEval {
                    value: -Float::ln(v),
                    grad: DVector::from_element(1, -1.0 / v),
                    hess: DMatrix::from_element(1, 1, 1.0 / (v * v)),
                }
            }
            BarrierKind::Interval { lower, upper } => {
                let lo = x[0] - lower;
                let hi = upper - x[0];
                BarrierEval {
                    value: -Float::ln(lo) - Float::ln(hi),
                    grad: DVector::from_element(1, -1.0 / lo + 1.0 / hi),
                    hess: DMatrix::from_element(1, 1, 1.0 / (lo * lo) + 1.0 / (hi * hi)),
                }
            }
            BarrierKind::ParabolaEpigraph { z_cap } => {
                let (y, z) = (x[0], x[1]);
                let q = z - y * y;
                let q2 = q * q;
                let mut value = -Float::ln(q);
                let mut grad = DVector::from_vec(vec![2.0 * y / q, -1.0 / q]);
                let mut hess = DMatrix::from_row_slice(
                    2,
                    2,
                    &[2.0 / q + 4.0 * y * y / q2, -2.0 * y / q2, -2.0 * y / q2, 1.0 / q2],
                );
                if let Some(cap) = z_cap {
                    let r = cap - z;
                    value -= Float::ln(r);
                    grad[1] += 1.0 / r;
                    hess[(1, 1)] += 1.0 / (r * r);
                }
                BarrierEval { value, grad, hess }
            }
        })
    }

    /// `||v||_x = (v^T H(x) v)^{1/2}`.
    pub fn local_norm(&self, x: &[f64], v: &DVector<f64>) -> Result<f64> {
        let hess = self.eval(x)?.hess;
        Ok(Float::sqrt(Float::max(v.dot(&(&hess * v)), 0.0)))
    }

    /// `||v||_x^* = (v^T H(x)^{-1} v)^{1/2}`.
    pub fn dual_norm(&self, x: &[f64], v: &DVector<f64>) -> Result<f64> {
        let hess = self.eval(x)?.hess;
        let solved = hess.cholesky().ok_or(Error::SingularHessian)?.solve(v);
        Ok(Float::sqrt(Float::max(v.dot(&solved), 0.0)))
    }

    /// Central finite difference of `t -> u^T H(x + t u) u` at `t = 0` against
    /// the self-concordance bound `2 ||u||_x^3`.
    pub fn check_self_concordance(
        &self,
        x: &[f64],
        u: &DVector<f64>,
        step: f64,
    ) -> Result<SelfConcordanceCheck> {
        let along = |t: f64| -> Result<f64> {
            let p: Vec<f64> = x.iter().zip(u.iter()).map(|(a, b)| a + t * b).collect();
            let hess = self.eval(&p)?.hess;
            Ok(u.dot(&(&hess * u)))
        };
        let third = (along(step)? - along(-step)?) / (2.0 * step);
        let norm = self.local_norm(x, u)?;
        let bound = 2.0 * norm * norm * norm;
        let tolerance = 1e-6 * (1.0 + bound);
        Ok(SelfConcordanceCheck {
            third_directional: third,
            bound,
            ok: Float::abs(third) <= bound + tolerance,
        })
    }

    /// Eigenvalues of `H(x)^{-1/2} H(y) H(x)^{-1/2}` against `[(1-r)^2, (1-r)^{-2}]`.
    pub fn check_hessian_stability(&self, x: &[f64], y: &[f64]) -> Result<StabilityCheck> {
        let hx = self.eval(x)?.hess;
        let hy = self.eval(y)?.hess;
        let diff = DVector::from_iterator(x.len(), y.iter().zip(x).map(|(a, b)| a - b));
        let radius = Float::sqrt(Float::max(diff.dot(&(&hx * &diff)), 0.0));
        let inv_sqrt = sym_matrix_function(&hx, |l| 1.0 / Float::sqrt(l));
        let relative = &inv_sqrt * hy * &inv_sqrt;
        let (ratio_low, ratio_high) = sym_eig_range(&relative);
        let precondition_met = radius < 1.0;
        let ok = precondition_met && {
            let shrink = (1.0 - radius) * (1.0 - radius);
            let slack = 1e-10;
            ratio_low >= shrink * (1.0 - slack) && ratio_high <= (1.0 + slack) / shrink
        };
        Ok(StabilityCheck {
            radius,
            ratio_low,
            ratio_high,
            precondition_met,
            ok,
        })
    }

    fn center_start(&self) -> Vec<f64> {
        match self.kind {
            BarrierKind::NonNeg | BarrierKind::LogExtra => vec![1.0],
            BarrierKind::Interval { lower, upper } => vec![0.5 * (lower + upper)],
            BarrierKind::ParabolaEpigraph { z_cap } => vec![0.0, z_cap.map_or(1.0, |c| 0.5 * c)],
        }
    }

    /// Damped Newton on `phi` until `||grad||_x^* <= 1e-10`.
    pub fn analytic_center(&self) -> Result<Vec<f64>> {
        const MAX_ITERS: usize = 1000;
        let mut x = self.center_start();
        let diverged = Error::NonConvergence {
            what: "analytic center",
            iterations: MAX_ITERS,
        };
        for _ in 0..MAX_ITERS {
            // unbounded domains push the iterate to overflow
            let Ok(ev) = self.eval(&x) else {
                return Err(diverged);
            };
            let Some(chol) = ev.hess.cholesky() else {
                return Err(diverged);
            };
            let newton = chol.solve(&ev.grad);
            let decrement = Float::sqrt(Float::max(ev.grad.dot(&newton), 0.0));
            if decrement <= 1e-10 {
                return Ok(x);
            }
            // A step of length 1/(1 + decrement) in the local norm keeps x interior.
            let scale = 1.0 / (1.0 + decrement);
            for (xi, di) in x.iter_mut().zip(newton.iter()) {
                *xi -= scale * di;
            }
        }
        Err(diverged)
    }
}

/// Analytic center of each block, concatenated in block order.
pub fn analytic_center(blocks: &[BlockBarrier]) -> Result<DVector<f64>> {
    let mut out = Vec::new();
    for block in blocks {
        out.extend(block.analytic_center()?);
    }
    Ok(DVector::from_vec(out))
}
