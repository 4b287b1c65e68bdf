//! Naive federated schemes used as comparison points.
//!
//! Models 1 and 2 replace the projection by its block-diagonal part
//! `⊕_i C_i pinv(C_i^T C_i) C_i^T`, which is wrong whenever clients share
//! constraints. Model 3 is correct but ships every client's full weights.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use num_traits::Float;

use super::ledger::ledger_formula;
use crate::linalg::{pseudo_inverse, PINV_RELATIVE_CUTOFF};
use crate::newton::{
    assemble_sketched_projection, newton_deltas, scaled_transpose, ExactProjection, Projection,
    ProjectionBundle, WeightMatrix,
};
use crate::sketch::SketchSet;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    /// Model 1: each client projects onto its own columns and sends its deltas.
    LocalProjections,
    /// Model 2: clients send `A_i W_i A_i^T` and `h_i`; the server inverts each Gram matrix.
    LocalGrams,
    /// Model 3: clients send `W_i` and `h_i`; the server projects exactly.
    FullWeights,
    /// The sketched protocol.
    Sketched,
}

impl Model {
    pub const ALL: [Model; 4] = [
        Model::LocalProjections,
        Model::LocalGrams,
        Model::FullWeights,
        Model::Sketched,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Model::LocalProjections => "model1-local-projections",
            Model::LocalGrams => "model2-local-grams",
            Model::FullWeights => "model3-full-weights",
            Model::Sketched => "sketched",
        }
    }

    /// `(uplink, downlink)` words per round.
    pub fn words(self, d: usize, client_dims: &[usize], sizes: [usize; 4]) -> (u64, u64) {
        let n: u64 = client_dims.iter().map(|&k| k as u64).sum();
        let d = d as u64;
        let k = client_dims.len() as u64;
        match self {
            Model::LocalProjections => (2 * n, 0),
            Model::LocalGrams => (k * d * d + n, 2 * n),
            Model::FullWeights => (n * n + n, 2 * n),
            Model::Sketched => ledger_formula(client_dims, sizes),
        }
    }
}

/// One client's diagonal block of the projection.
#[derive(Debug, Clone)]
enum LocalBlock {
    /// The materialized `n_i x n_i` projector.
    Dense(DMatrix<f64>),
    /// `C_i` and `C_i pinv(G_i)`, applied as `C_i pinv(G_i) (C_i^T v)`.
    Factored(DMatrix<f64>, DMatrix<f64>),
}

/// `⊕_i C_i pinv(C_i^T C_i) C_i^T` over client row ranges of `C`.
#[derive(Debug, Clone)]
struct BlockDiagonalProjection {
    parts: Vec<(usize, LocalBlock)>,
    n: usize,
}

impl BlockDiagonalProjection {
    fn new(c: &DMatrix<f64>, client_dims: &[usize], factored: bool) -> Result<Self> {
        let mut parts = Vec::new();
        let mut offset = 0;
        for &ni in client_dims {
            let ci = c.rows(offset, ni).into_owned();
            let pinv = pseudo_inverse(&ci.tr_mul(&ci), PINV_RELATIVE_CUTOFF)?.matrix;
            let cp = &ci * pinv;
            let block = if factored {
                LocalBlock::Factored(ci, cp)
            } else {
                LocalBlock::Dense(cp * ci.transpose())
            };
            parts.push((offset, block));
            offset += ni;
        }
        Ok(Self { parts, n: offset })
    }
}

impl Projection for BlockDiagonalProjection {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.n);
        for (offset, block) in &self.parts {
            let pv = match block {
                LocalBlock::Dense(p) => p * v.rows(*offset, p.nrows()),
                LocalBlock::Factored(ci, cp) => cp * ci.tr_mul(&v.rows(*offset, ci.nrows())),
            };
            out.rows_mut(*offset, pv.len()).copy_from(&pv);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutcome {
    pub model: Model,
    pub dx: DVector<f64>,
    pub ds: DVector<f64>,
    pub uplink_words: u64,
    pub downlink_words: u64,
    /// `||(dx, ds) - (dx*, ds*)||_2` against the exact step.
    pub deviation: f64,
    /// Deviation within `1e-10 · max(1, ||(dx*, ds*)||)`.
    pub correct: bool,
}

fn check_dims(a: &DMatrix<f64>, client_dims: &[usize]) -> Result<()> {
    let n: usize = client_dims.iter().sum();
    if n != a.ncols() || client_dims.contains(&0) {
        return Err(Error::DimensionMismatch {
            context: "client dimensions vs columns",
            expected: a.ncols(),
            got: n,
        });
    }
    Ok(())
}

/// Newton deltas `(dx, ds)` one model produces for direction `h` at path parameter `t`.
pub fn model_deltas(
    model: Model,
    a: &DMatrix<f64>,
    w: &WeightMatrix,
    h: &DVector<f64>,
    t: f64,
    client_dims: &[usize],
    sketches: &SketchSet,
) -> Result<(DVector<f64>, DVector<f64>)> {
    check_dims(a, client_dims)?;
    let deltas = match model {
        Model::LocalProjections => {
            let proj = BlockDiagonalProjection::new(&scaled_transpose(a, w)?, client_dims, false)?;
            newton_deltas(&proj, w, h, t)?
        }
        Model::LocalGrams => {
            let proj = BlockDiagonalProjection::new(&scaled_transpose(a, w)?, client_dims, true)?;
            newton_deltas(&proj, w, h, t)?
        }
        Model::FullWeights => newton_deltas(&ExactProjection::new(a, w)?, w, h, t)?,
        Model::Sketched => {
            let bundle = ProjectionBundle::central(a, w, sketches)?;
            let proj = assemble_sketched_projection(&bundle, sketches)?;
            newton_deltas(&proj, w, h, t)?
        }
    };
    Ok((deltas.dx, deltas.ds))
}

/// Runs every model on the same inputs and measures each against the exact step.
pub fn compare_models(
    a: &DMatrix<f64>,
    w: &WeightMatrix,
    h: &DVector<f64>,
    t: f64,
    client_dims: &[usize],
    sketches: &SketchSet,
) -> Result<Vec<ModelOutcome>> {
    let (ex, es) = model_deltas(Model::FullWeights, a, w, h, t, client_dims, sketches)?;
    let scale = Float::max(1.0, Float::sqrt(ex.norm_squared() + es.norm_squared()));
    Model::ALL
        .iter()
        .map(|&model| {
            let (dx, ds) = model_deltas(model, a, w, h, t, client_dims, sketches)?;
            let deviation = Float::sqrt((&dx - &ex).norm_squared() + (&ds - &es).norm_squared());
            let (uplink_words, downlink_words) = model.words(a.nrows(), client_dims, sketches.sizes());
            Ok(ModelOutcome {
                model,
                dx,
                ds,
                uplink_words,
                downlink_words,
                deviation,
                correct: deviation <= 1e-10 * scale,
            })
        })
        .collect()
}

/// Two clients sharing one constraint, where the block-diagonal projection fails.
#[derive(Debug, Clone, PartialEq)]
pub struct CraftedInstance {
    pub a: DMatrix<f64>,
    pub w: WeightMatrix,
    pub h: DVector<f64>,
    pub client_dims: Vec<usize>,
}

/// `A = [1 0 1 1]`, clients `{0, 1}` and `{2, 3}`, `W = I`, `h = (1, 2, -1, 0.5)`.
pub fn crafted_instance() -> CraftedInstance {
    CraftedInstance {
        a: DMatrix::from_row_slice(1, 4, &[1.0, 0.0, 1.0, 1.0]),
        w: WeightMatrix::identity(&[1, 1, 1, 1]),
        h: DVector::from_column_slice(&[1.0, 2.0, -1.0, 0.5]),
        client_dims: alloc::vec![2, 2],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sketch::SketchKind;

    fn identity_sketches(d: usize) -> SketchSet {
        SketchSet::generate(SketchKind::Identity, [d; 4], d, 0).unwrap()
    }

    #[test]
    fn crafted_instance_separates_models() {
        let ci = crafted_instance();
        let rows = compare_models(&ci.a, &ci.w, &ci.h, 1.0, &ci.client_dims, &identity_sketches(1)).unwrap();
        let by = |m: Model| rows.iter().find(|r| r.model == m).unwrap();
        assert!(!by(Model::LocalProjections).correct);
        assert!(!by(Model::LocalGrams).correct);
        assert!(by(Model::FullWeights).correct);
        assert!(by(Model::Sketched).correct);
        // Exact: P h = C C^T h / 3 with C^T h = 0.5.
        let (dx, ds) = (&by(Model::FullWeights).dx, &by(Model::FullWeights).ds);
        let expect_ds = DVector::from_column_slice(&[1.0, 0.0, 1.0, 1.0]) * (0.5 / 3.0);
        assert!((ds - &expect_ds).amax() < 1e-15);
        assert!((dx - (&ci.h - &expect_ds)).amax() < 1e-15);
        // Block-diagonal: client 0 keeps coordinate 0 entirely, client 1 averages 2 and 3.
        let ds1 = &by(Model::LocalProjections).ds;
        let expect = DVector::from_column_slice(&[1.0, 0.0, -0.25, -0.25]);
        assert!((ds1 - expect).amax() < 1e-15);
        assert!((&by(Model::LocalProjections).dx - &by(Model::LocalGrams).dx).amax() < 1e-15);
    }

    #[test]
    fn single_client_models_coincide() {
        let ci = crafted_instance();
        let rows = compare_models(&ci.a, &ci.w, &ci.h, 0.5, &[4], &identity_sketches(1)).unwrap();
        assert!(rows.iter().all(|r| r.correct), "{rows:?}");
    }

    #[test]
    fn words_per_model() {
        let dims = [3, 5];
        assert_eq!(Model::LocalProjections.words(2, &dims, [1; 4]).0, 16);
        assert_eq!(Model::LocalGrams.words(2, &dims, [1; 4]).0, 2 * 4 + 8);
        assert_eq!(Model::FullWeights.words(2, &dims, [1; 4]).0, 64 + 8);
        assert_eq!(Model::Sketched.words(2, &dims, [2; 4]), ledger_formula(&dims, [2; 4]));
    }
}
