//! AMS and SRHT sketch matrices.
//!
//! A sketch is fully determined by its [`SketchSpec`]; only the 18-byte spec
//! (never the matrix) needs to be shared between parties. Regenerating from the
//! same spec yields bit-identical entries.
//!
//! AMS rows are 4-wise independent sign hashes `h_i : [d] -> {±1/sqrt(b)}`,
//! realized as degree-3 polynomials over the Mersenne prime `2^61 - 1`.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::quantile;
use crate::{Error, Result};

const MERSENNE_61: u64 = (1 << 61) - 1;

/// Size of an encoded [`SketchSpec`].
pub const SPEC_BYTES: usize = 18;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SketchKind {
    Ams,
    Srht,
    /// `R = I` with `b = d`; every sketched quantity equals its exact counterpart.
    Identity,
}

impl SketchKind {
    fn tag(self) -> u8 {
        match self {
            SketchKind::Ams => 0,
            SketchKind::Srht => 1,
            SketchKind::Identity => 2,
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(SketchKind::Ams),
            1 => Ok(SketchKind::Srht),
            2 => Ok(SketchKind::Identity),
            _ => Err(Error::SketchSpecEncoding("unknown sketch kind tag")),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SketchKind::Ams => "ams",
            SketchKind::Srht => "srht",
            SketchKind::Identity => "identity",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SketchSpec {
    pub kind: SketchKind,
    pub rows: usize,
    pub cols: usize,
    pub seed: u64,
    /// Position tag in `{1, 2, 3, 4}` distinguishing `R_1..R_4` of one solve.
    pub sketch_id: u8,
}

impl SketchSpec {
    pub fn new(kind: SketchKind, rows: usize, cols: usize, seed: u64, sketch_id: u8) -> Self {
        Self {
            kind,
            rows,
            cols,
            seed,
            sketch_id,
        }
    }

    /// Seed of the random stream actually used to draw this sketch.
    pub fn stream_seed(&self) -> u64 {
        self.seed ^ mix64(u64::from(self.sketch_id))
    }

    /// `kind (1) | rows (4, LE) | cols (4, LE) | seed (8, LE) | sketch_id (1)`
    pub fn to_bytes(&self) -> [u8; SPEC_BYTES] {
        let mut out = [0u8; SPEC_BYTES];
        out[0] = self.kind.tag();
        out[1..5].copy_from_slice(&(self.rows as u32).to_le_bytes());
        out[5..9].copy_from_slice(&(self.cols as u32).to_le_bytes());
        out[9..17].copy_from_slice(&self.seed.to_le_bytes());
        out[17] = self.sketch_id;
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() != SPEC_BYTES {
            return Err(Error::SketchSpecEncoding("spec must be exactly 18 bytes"));
        }
        let word = |r: core::ops::Range<usize>| -> u32 {
            u32::from_le_bytes(bytes[r].try_into().expect("4-byte slice"))
        };
        Ok(Self {
            kind: SketchKind::from_tag(bytes[0])?,
            rows: word(1..5) as usize,
            cols: word(5..9) as usize,
            seed: u64::from_le_bytes(bytes[9..17].try_into().expect("8-byte slice")),
            sketch_id: bytes[17],
        })
    }

    fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::EmptySketch {
                rows: self.rows,
                cols: self.cols,
            });
        }
        Ok(())
    }
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn mod_mersenne(x: u128) -> u64 {
    let p = MERSENNE_61 as u128;
    let mut r = (x & p) + (x >> 61);
    r = (r & p) + (r >> 61);
    if r >= p {
        r -= p;
    }
    r as u64
}

/// Member of the 4-wise independent family `a3 j^3 + a2 j^2 + a1 j + a0 mod (2^61 - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FourWiseHash {
    coeffs: [u64; 4],
}

impl FourWiseHash {
    pub fn from_rng<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut coeffs = [0u64; 4];
        for c in &mut coeffs {
            *c = rng.random_range(0..MERSENNE_61);
        }
        Self { coeffs }
    }

    pub fn eval(&self, key: u64) -> u64 {
        let x = key % MERSENNE_61;
        let mut acc = self.coeffs[3];
        for &c in self.coeffs[..3].iter().rev() {
            acc = mod_mersenne(acc as u128 * x as u128 + c as u128);
        }
        acc
    }

    /// `+1` or `-1` from the low bit of the hash value.
    pub fn sign(&self, key: u64) -> f64 {
        if self.eval(key) & 1 == 0 {
            1.0
        } else {
            -1.0
        }
    }
}

/// A materialized `b x d` sketch.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchMatrix {
    spec: SketchSpec,
    entries: DMatrix<f64>,
    hashes: Vec<FourWiseHash>,
}

impl SketchMatrix {
    pub fn generate(spec: SketchSpec) -> Result<Self> {
        match spec.kind {
            SketchKind::Ams => make_ams(spec),
            SketchKind::Srht => make_srht(spec),
            SketchKind::Identity => make_identity(spec),
        }
    }

    pub fn spec(&self) -> &SketchSpec {
        &self.spec
    }

    pub fn rows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn cols(&self) -> usize {
        self.entries.ncols()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Row hash functions (AMS only; empty otherwise).
    pub fn hashes(&self) -> &[FourWiseHash] {
        &self.hashes
    }

    /// `R^T R`, a `d x d` matrix.
    pub fn gram(&self) -> DMatrix<f64> {
        self.entries.tr_mul(&self.entries)
    }
}

/// AMS sketch: `R[i, j] = h_i(j)` with `h_i` drawn from the 4-wise independent family.
pub fn make_ams(spec: SketchSpec) -> Result<SketchMatrix> {
    if spec.kind != SketchKind::Ams {
        return Err(Error::SketchKindMismatch { expected: "ams" });
    }
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.stream_seed());
    let hashes: Vec<FourWiseHash> = (0..spec.rows)
        .map(|_| FourWiseHash::from_rng(&mut rng))
        .collect();
    let scale = 1.0 / Float::sqrt(spec.rows as f64);
    let entries = DMatrix::from_fn(spec.rows, spec.cols, |i, j| {
        hashes[i].sign(j as u64) * scale
    });
    Ok(SketchMatrix {
        spec,
        entries,
        hashes,
    })
}

/// SRHT sketch `sqrt(N/b) S H D` on the power-of-two padding `N >= d`,
/// restricted to the first `d` columns.
pub fn make_srht(spec: SketchSpec) -> Result<SketchMatrix> {
    if spec.kind != SketchKind::Srht {
        return Err(Error::SketchKindMismatch { expected: "srht" });
    }
    spec.validate()?;
    let padded = spec.cols.next_power_of_two();
    if spec.rows > padded {
        return Err(Error::SketchRowsExceedPadded {
            rows: spec.rows,
            padded,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.stream_seed());
    let signs: Vec<f64> = (0..padded)
        .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
        .collect();
    let sampled = rand::seq::index::sample(&mut rng, padded, spec.rows);
    // sqrt(N/b) * (1/sqrt(N)) = 1/sqrt(b)
    let scale = 1.0 / Float::sqrt(spec.rows as f64);
    let mut entries = DMatrix::zeros(spec.rows, spec.cols);
    for (i, row) in sampled.iter().enumerate() {
        for j in 0..spec.cols {
            let hadamard = if (row & j).count_ones() % 2 == 0 {
                1.0
            } else {
                -1.0
            };
            entries[(i, j)] = scale * hadamard * signs[j];
        }
    }
    Ok(SketchMatrix {
        spec,
        entries,
        hashes: Vec::new(),
    })
}

pub fn make_identity(spec: SketchSpec) -> Result<SketchMatrix> {
    if spec.kind != SketchKind::Identity {
        return Err(Error::SketchKindMismatch {
            expected: "identity",
        });
    }
    spec.validate()?;
    if spec.rows != spec.cols {
        return Err(Error::IdentityShape {
            rows: spec.rows,
            cols: spec.cols,
        });
    }
    Ok(SketchMatrix {
        spec,
        entries: DMatrix::identity(spec.rows, spec.cols),
        hashes: Vec::new(),
    })
}

/// `R^T R h`, an unbiased estimate of `h`.
pub fn estimate_vector(r: &SketchMatrix, h: &DVector<f64>) -> Result<DVector<f64>> {
    if h.len() != r.cols() {
        return Err(Error::DimensionMismatch {
            context: "estimate_vector",
            expected: r.cols(),
            got: h.len(),
        });
    }
    let sketched = r.entries() * h;
    Ok(r.entries().tr_mul(&sketched))
}

/// The four independent sketches `R_1..R_4` used by one solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchSet {
    sketches: [SketchMatrix; 4],
}

impl SketchSet {
    /// Draws `R_k` with `rows = sizes[k - 1]`, `cols = d`, `sketch_id = k`.
    pub fn generate(kind: SketchKind, sizes: [usize; 4], d: usize, seed: u64) -> Result<Self> {
        let make = |k: usize| SketchMatrix::generate(SketchSpec::new(kind, sizes[k], d, seed, k as u8 + 1));
        Ok(Self {
            sketches: [make(0)?, make(1)?, make(2)?, make(3)?],
        })
    }

    pub fn from_specs(specs: &[SketchSpec; 4]) -> Result<Self> {
        Ok(Self {
            sketches: [
                SketchMatrix::generate(specs[0])?,
                SketchMatrix::generate(specs[1])?,
                SketchMatrix::generate(specs[2])?,
                SketchMatrix::generate(specs[3])?,
            ],
        })
    }

    /// `R_k` for `k` in `1..=4`.
    pub fn get(&self, k: usize) -> &SketchMatrix {
        &self.sketches[k - 1]
    }

    pub fn specs(&self) -> [SketchSpec; 4] {
        [
            self.sketches[0].spec,
            self.sketches[1].spec,
            self.sketches[2].spec,
            self.sketches[3].spec,
        ]
    }

    pub fn sizes(&self) -> [usize; 4] {
        [
            self.sketches[0].rows(),
            self.sketches[1].rows(),
            self.sketches[2].rows(),
            self.sketches[3].rows(),
        ]
    }

    pub fn cols(&self) -> usize {
        self.sketches[0].cols()
    }
}

/// Per-`b` summary of `|(R^T R h)_i - h_i|` over trials and coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorProfileRow {
    pub b: usize,
    /// Fraction of (trial, coordinate) pairs above `||h|| ln(d/0.01) / sqrt(b)`.
    pub violation_fraction: f64,
    pub median_deviation: f64,
    pub q25_deviation: f64,
    pub q75_deviation: f64,
}

pub const PROFILE_FAILURE_PROB: f64 = 0.01;

pub fn sketch_error_profile(
    kind: SketchKind,
    h: &DVector<f64>,
    b_list: &[usize],
    trials: usize,
    seed: u64,
) -> Result<Vec<ErrorProfileRow>> {
    let d = h.len();
    let h_norm = h.norm();
    let mut rows = Vec::with_capacity(b_list.len());
    for &b in b_list {
        if b == 0 {
            return Err(Error::EmptySketch { rows: b, cols: d });
        }
        let threshold = h_norm * Float::ln(d as f64 / PROFILE_FAILURE_PROB) / Float::sqrt(b as f64);
        let mut deviations = Vec::with_capacity(trials * d);
        let mut violations = 0usize;
        for trial in 0..trials {
            let spec = SketchSpec::new(kind, b, d, mix64(seed ^ trial as u64), 1);
            let r = SketchMatrix::generate(spec)?;
            let est = estimate_vector(&r, h)?;
            for (e, x) in est.iter().zip(h.iter()) {
                let dev = Float::abs(e - x);
                if dev > threshold {
                    violations += 1;
                }
                deviations.push(dev);
            }
        }
        let total = deviations.len().max(1) as f64;
        let (median, q25, q75) = if deviations.is_empty() {
            (0.0, 0.0, 0.0)
        } else {
            (
                quantile(&mut deviations, 0.5),
                quantile(&mut deviations, 0.25),
                quantile(&mut deviations, 0.75),
            )
        };
        rows.push(ErrorProfileRow {
            b,
            violation_fraction: violations as f64 / total,
            median_deviation: median,
            q25_deviation: q25,
            q75_deviation: q75,
        });
    }
    Ok(rows)
}
