//! Brute-force LP optima by vertex enumeration, used as a test oracle.
//!
//! Handles `min c^T x  s.t.  A x = b,  l <= x <= u` where each bound may be
//! infinite, as long as the optimum is attained. Every basic solution is
//! visited: choose `d` basic columns, pin the rest to a finite bound.

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use num_traits::Float;

use crate::barrier::BarrierKind;
use crate::centralpath::{ModifiedProgram, ProblemInstance};
use crate::{Error, Result};

/// Largest `n` accepted by [`vertex_enumeration`].
pub const MAX_ENUMERATION_N: usize = 16;

const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct LpOptimum {
    pub value: f64,
    pub x: DVector<f64>,
}

pub fn vertex_enumeration(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    c: &DVector<f64>,
    lower: &[f64],
    upper: &[f64],
) -> Result<LpOptimum> {
    let (d, n) = a.shape();
    if n > MAX_ENUMERATION_N {
        return Err(Error::SizeTooLarge {
            n,
            limit: MAX_ENUMERATION_N,
        });
    }
    if b.len() != d || c.len() != n || lower.len() != n || upper.len() != n {
        return Err(Error::DimensionMismatch {
            context: "vertex enumeration inputs",
            expected: n,
            got: c.len(),
        });
    }
    if d > n {
        return Err(Error::InvalidProblem("more rows than columns".to_string()));
    }
    let scale = 1.0 + b.amax() + a.amax();
    let mut best: Option<LpOptimum> = None;
    let mut basis: Vec<usize> = (0..d).collect();
    loop {
        visit_basis(a, b, c, lower, upper, &basis, scale, &mut best);
        if !next_combination(&mut basis, n) {
            break;
        }
    }
    best.ok_or_else(|| Error::InvalidProblem("no feasible vertex".to_string()))
}

#[allow(clippy::too_many_arguments)]
fn visit_basis(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    c: &DVector<f64>,
    lower: &[f64],
    upper: &[f64],
    basis: &[usize],
    scale: f64,
    best: &mut Option<LpOptimum>,
) {
    let n = a.ncols();
    let basic = a.select_columns(basis);
    let lu = basic.clone().full_piv_lu();
    if !lu.is_invertible() {
        return;
    }
    let nonbasic: Vec<usize> = (0..n).filter(|j| !basis.contains(j)).collect();
    // each nonbasic variable picks its finite lower (bit 0) or upper (bit 1) bound
    let choices: Vec<Vec<f64>> = nonbasic
        .iter()
        .map(|&j| [lower[j], upper[j]].into_iter().filter(|v| v.is_finite()).collect())
        .collect();
    if choices.iter().any(|c| c.is_empty()) {
        return;
    }
    let mut pick = vec![0usize; nonbasic.len()];
    loop {
        let mut x = DVector::zeros(n);
        for (k, &j) in nonbasic.iter().enumerate() {
            x[j] = choices[k][pick[k]];
        }
        let rhs = b - a * &x;
        if let Some(xb) = lu.solve(&rhs) {
            let residual = (&basic * &xb - &rhs).amax();
            let in_bounds = basis.iter().zip(xb.iter()).all(|(&j, &v)| {
                v >= lower[j] - FEASIBILITY_TOL * (1.0 + Float::abs(v))
                    && v <= upper[j] + FEASIBILITY_TOL * (1.0 + Float::abs(v))
            });
            if residual <= 1e-9 * scale && in_bounds {
                for (&j, &v) in basis.iter().zip(xb.iter()) {
                    x[j] = v;
                }
                let value = c.dot(&x);
                if best.as_ref().is_none_or(|b| value < b.value) {
                    *best = Some(LpOptimum { value, x });
                }
            }
        }
        let mut k = 0;
        loop {
            if k == pick.len() {
                return;
            }
            pick[k] += 1;
            if pick[k] < choices[k].len() {
                break;
            }
            pick[k] = 0;
            k += 1;
        }
    }
}

fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Variable bounds implied by 1-dimensional blocks.
pub fn bounds_of(kinds: impl IntoIterator<Item = BarrierKind>) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for kind in kinds {
        match kind {
            BarrierKind::NonNeg | BarrierKind::LogExtra => {
                lower.push(0.0);
                upper.push(f64::INFINITY);
            }
            BarrierKind::Interval { lower: l, upper: u } => {
                lower.push(l);
                upper.push(u);
            }
            BarrierKind::ParabolaEpigraph { .. } => {
                return Err(Error::InvalidProblem(
                    "vertex enumeration needs polyhedral blocks".to_string(),
                ))
            }
        }
    }
    Ok((lower, upper))
}

pub fn reference_optimum(problem: &ProblemInstance) -> Result<LpOptimum> {
    let (lower, upper) = bounds_of(problem.blocks.iter().map(|b| b.kind()))?;
    vertex_enumeration(&problem.a, &problem.b, &problem.c, &lower, &upper)
}

/// Optimum of the modified program, extra coordinate included.
pub fn modified_reference_optimum(program: &ModifiedProgram) -> Result<LpOptimum> {
    let (lower, upper) = bounds_of(program.blocks.iter().map(|b| b.kind()))?;
    vertex_enumeration(&program.a, &program.b, &program.c, &lower, &upper)
}
