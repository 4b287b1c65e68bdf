//! JSON problem files.
//!
//! Numbers are written as the shortest decimal that parses back to the same
//! `f64`, so load followed by save reproduces a saved file byte for byte.

use std::fs;
use std::path::Path;

use fedipm_core::barrier::{BarrierKind, BlockBarrier};
use fedipm_core::centralpath::ProblemInstance;
use fedipm_core::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarrierSpec {
    pub kind: String,
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockSpec {
    pub client: u32,
    pub n_i: usize,
    pub barrier: BarrierSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub version: u32,
    pub d: usize,
    pub n: usize,
    pub m: usize,
    pub blocks: Vec<BlockSpec>,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    #[serde(rename = "L")]
    pub lipschitz: f64,
    #[serde(rename = "R")]
    pub diameter: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ref_opt: Option<f64>,
}

impl BarrierSpec {
    pub fn from_barrier(block: &BlockBarrier) -> Self {
        let (kind, params) = match block.kind() {
            BarrierKind::NonNeg => ("nonneg", vec![]),
            BarrierKind::Interval { lower, upper } => ("interval", vec![lower, upper]),
            BarrierKind::ParabolaEpigraph { z_cap } => ("parabola_epigraph", z_cap.into_iter().collect()),
            BarrierKind::LogExtra => ("log_extra", vec![]),
        };
        Self {
            kind: kind.to_string(),
            params,
        }
    }

    pub fn to_barrier(&self) -> Result<BlockBarrier, String> {
        let arity = |want: &[usize]| {
            if want.contains(&self.params.len()) {
                Ok(())
            } else {
                Err(format!(
                    "barrier `{}` takes {:?} parameters, got {}",
                    self.kind,
                    want,
                    self.params.len()
                ))
            }
        };
        match self.kind.as_str() {
            "nonneg" => arity(&[0]).map(|_| BlockBarrier::nonneg()),
            "interval" => {
                arity(&[2])?;
                BlockBarrier::interval(self.params[0], self.params[1]).map_err(|e| e.to_string())
            }
            "parabola_epigraph" => {
                arity(&[0, 1])?;
                BlockBarrier::parabola_epigraph(self.params.first().copied()).map_err(|e| e.to_string())
            }
            "log_extra" => Err("`log_extra` is reserved for the solver's appended coordinate".into()),
            other => Err(format!("unknown barrier kind `{other}`")),
        }
    }
}

impl ProblemFile {
    pub fn from_problem(problem: &ProblemInstance, seed: Option<u64>, ref_opt: Option<f64>) -> Self {
        let blocks = problem
            .blocks
            .iter()
            .zip(&problem.owners)
            .map(|(block, &client)| BlockSpec {
                client,
                n_i: block.dim(),
                barrier: BarrierSpec::from_barrier(block),
            })
            .collect();
        let a = problem.a.row_iter().map(|row| row.iter().copied().collect()).collect();
        Self {
            version: FORMAT_VERSION,
            d: problem.d(),
            n: problem.n(),
            m: problem.m(),
            blocks,
            a,
            b: problem.b.iter().copied().collect(),
            c: problem.c.iter().copied().collect(),
            lipschitz: problem.lipschitz,
            diameter: problem.diameter,
            seed,
            ref_opt,
        }
    }

    /// Checks the declared sizes and builds the validated instance.
    pub fn to_problem(&self) -> Result<ProblemInstance, String> {
        if self.version != FORMAT_VERSION {
            return Err(format!("unsupported version {} (expected {FORMAT_VERSION})", self.version));
        }
        if self.blocks.len() != self.m {
            return Err(format!("m = {} but {} blocks are listed", self.m, self.blocks.len()));
        }
        let mut barriers = Vec::with_capacity(self.blocks.len());
        for (i, spec) in self.blocks.iter().enumerate() {
            let barrier = spec.barrier.to_barrier().map_err(|e| format!("block {i}: {e}"))?;
            if barrier.dim() != spec.n_i {
                return Err(format!("block {i}: n_i = {} but the barrier has dimension {}", spec.n_i, barrier.dim()));
            }
            barriers.push(barrier);
        }
        let block_total: usize = self.blocks.iter().map(|b| b.n_i).sum();
        if block_total != self.n {
            return Err(format!("n = {} but blocks cover {block_total} coordinates", self.n));
        }
        if self.a.len() != self.d {
            return Err(format!("d = {} but A has {} rows", self.d, self.a.len()));
        }
        if let Some(i) = self.a.iter().position(|row| row.len() != self.n) {
            return Err(format!("row {i} of A has {} entries, expected n = {}", self.a[i].len(), self.n));
        }
        if self.b.len() != self.d {
            return Err(format!("b has {} entries, expected d = {}", self.b.len(), self.d));
        }
        if self.c.len() != self.n {
            return Err(format!("c has {} entries, expected n = {}", self.c.len(), self.n));
        }
        let a = DMatrix::from_fn(self.d, self.n, |i, j| self.a[i][j]);
        let problem = ProblemInstance::new(
            a,
            DVector::from_column_slice(&self.b),
            DVector::from_column_slice(&self.c),
            barriers,
            self.lipschitz,
            self.diameter,
        )
        .map_err(|e| e.to_string())?;
        problem
            .with_owners(self.blocks.iter().map(|b| b.client).collect())
            .map_err(|e| e.to_string())
    }

    pub fn parse(text: &str, path: &Path) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| {
            if e.is_data() {
                CliError::InvalidFile {
                    path: path.to_path_buf(),
                    message: e.to_string(),
                }
            } else {
                CliError::Json {
                    path: path.to_path_buf(),
                    line: e.line(),
                    column: e.column(),
                    message: e.to_string(),
                }
            }
        })
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("problem files contain only finite numbers");
        text.push('\n');
        text
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        fs::write(path, self.to_json()).map_err(|e| CliError::io(path, e))
    }
}

/// Reads and validates a problem file in one step.
pub fn load_problem(path: &Path) -> CliResult<(ProblemFile, ProblemInstance)> {
    let file = ProblemFile::load(path)?;
    let problem = file.to_problem().map_err(|message| CliError::InvalidFile {
        path: path.to_path_buf(),
        message,
    })?;
    Ok((file, problem))
}
