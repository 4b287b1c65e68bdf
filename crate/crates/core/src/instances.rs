//! Problem generators for tests, benches and the CLI.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::barrier::BlockBarrier;
use crate::centralpath::ProblemInstance;
use crate::erm::{default_bounds, erm_to_conic, least_squares_optimum, ErmReduction, Loss};
use crate::linalg::sym_matrix_function;
use crate::newton::WeightMatrix;
use crate::reference::{reference_optimum, MAX_ENUMERATION_N};
use crate::Result;

/// `min x_1  s.t.  x_1 + x_2 = 1,  x in [0, 1]^2`, with optimum 0 at `(0, 1)`.
pub fn desk_lp() -> (ProblemInstance, f64) {
    let blocks = alloc::vec![BlockBarrier::interval(0.0, 1.0).expect("unit interval"); 2];
    let problem = ProblemInstance::new(
        DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
        DVector::from_element(1, 1.0),
        DVector::from_vec(alloc::vec![1.0, 0.0]),
        blocks,
        1.0,
        Float::sqrt(2.0),
    )
    .expect("desk LP is well-formed");
    (problem, 0.0)
}

pub fn gaussian_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_vector(rng: &mut impl Rng, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.sample(StandardNormal))
}

pub fn unit_vector(rng: &mut impl Rng, len: usize) -> DVector<f64> {
    let v = gaussian_vector(rng, len);
    let norm = v.norm();
    v / norm
}

/// Random `[0, 1]^n` LP with `b = A x_int` for an interior `x_int`.
///
/// `seed = None` with `n = 2, d = 1` gives [`desk_lp`]; other sizes fall back
/// to seed 0. The reference optimum is included when `n <= 16`.
pub fn boxlp(n: usize, d: usize, seed: Option<u64>) -> Result<(ProblemInstance, Option<f64>)> {
    if seed.is_none() && n == 2 && d == 1 {
        let (p, opt) = desk_lp();
        return Ok((p, Some(opt)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(0));
    let a = gaussian_matrix(&mut rng, d, n);
    let interior = DVector::from_fn(n, |_, _| rng.random_range(0.2..0.8));
    let b = &a * interior;
    let c = gaussian_vector(&mut rng, n);
    let lipschitz = c.norm();
    let blocks = alloc::vec![BlockBarrier::interval(0.0, 1.0)?; n];
    let problem = ProblemInstance::new(a, b, c, blocks, lipschitz, Float::sqrt(n as f64))?;
    let reference = if n <= MAX_ENUMERATION_N {
        Some(reference_optimum(&problem)?.value)
    } else {
        None
    };
    Ok((problem, reference))
}

/// Least-squares ERM on random data, with the normal-equations optimum.
pub fn least_squares_erm(points: usize, features: usize, seed: u64) -> Result<(ErmReduction, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = gaussian_matrix(&mut rng, points, features);
    let offsets = gaussian_vector(&mut rng, points);
    least_squares_erm_from(&data, &offsets)
}

pub fn least_squares_erm_from(data: &DMatrix<f64>, offsets: &DVector<f64>) -> Result<(ErmReduction, f64)> {
    let bounds = default_bounds(data, offsets)?;
    let losses = alloc::vec![Loss::Squared; data.nrows()];
    let reduction = erm_to_conic(&losses, data, offsets, bounds)?;
    let (_, value) = least_squares_optimum(data, offsets)?;
    Ok((reduction, value))
}

/// A constraint matrix paired with barrier weights at an interior point.
#[derive(Debug, Clone)]
pub struct WeightedInstance {
    pub a: DMatrix<f64>,
    pub blocks: Vec<BlockBarrier>,
    pub x: DVector<f64>,
    pub w: WeightMatrix,
}

impl WeightedInstance {
    /// `∇²φ(x)` as a dense block-diagonal matrix.
    pub fn hessian(&self) -> DMatrix<f64> {
        let n = self.x.len();
        let mut out = DMatrix::zeros(n, n);
        for b in self.w.blocks() {
            let r = b.range();
            let h = sym_matrix_function(&b.w, |l| 1.0 / l);
            out.view_mut((r.start, r.start), (r.len(), r.len())).copy_from(&h);
        }
        out
    }
}

/// Random `d x n` constraints over a mix of interval and capped-epigraph
/// blocks, with `A W A^T` rescaled to have condition number exactly `kappa`.
pub fn random_weighted_instance(d: usize, n: usize, kappa: f64, seed: u64) -> WeightedInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut blocks = Vec::new();
    let mut x = Vec::new();
    let mut left = n;
    while left > 0 {
        if left >= 2 && rng.random_bool(0.3) {
            let cap = 4.0;
            blocks.push(BlockBarrier::parabola_epigraph(Some(cap)).expect("positive cap"));
            let y: f64 = rng.random_range(-1.5..1.5);
            let z = rng.random_range(y * y + 0.1..cap - 0.1);
            x.extend([y, z]);
            left -= 2;
        } else {
            blocks.push(BlockBarrier::interval(0.0, 1.0).expect("unit interval"));
            x.push(rng.random_range(0.05..0.95));
            left -= 1;
        }
    }
    let x = DVector::from_vec(x);
    let mut offset = 0;
    let mut hessians = Vec::new();
    for b in &blocks {
        let k = b.dim();
        let ev = b.eval(&x.as_slice()[offset..offset + k]).expect("interior sample");
        hessians.push(ev.hess);
        offset += k;
    }
    let w = WeightMatrix::from_hessians(hessians.iter()).expect("barrier Hessians are PD");

    let raw = gaussian_matrix(&mut rng, d, n);
    let c = w.sqrt_times(&raw.transpose());
    let gram = c.tr_mul(&c);
    let inv_sqrt = sym_matrix_function(&gram, |l| 1.0 / Float::sqrt(l));
    let q = gaussian_matrix(&mut rng, d, d).qr().q();
    let spectrum = DVector::from_fn(d, |i, _| {
        let frac = if d == 1 { 0.0 } else { i as f64 / (d - 1) as f64 };
        Float::powf(kappa, 0.5 * frac)
    });
    let t = &q * DMatrix::from_diagonal(&spectrum) * &inv_sqrt;
    let a = t * raw;
    WeightedInstance { a, blocks, x, w }
}
