//! Path-following driver.
//!
//! The solver works on a modified program with one extra coordinate so that a
//! feasible, well-centered start is known in closed form:
//!
//! ```text
//! A' = [A | b - A x0],   c' = [δ/(L R) · c ; 1],   x' = [x0 ; 1],   s' = c',   t = 1
//! ```
//!
//! where `x0` is the analytic center of the blocks. Each iteration measures
//! per-block centrality `μ_i = s_i / t + ∇φ_i(x_i)`, `γ_i = ||μ_i||*`, forms
//! the soft-max weighted direction `h_i = -α c_i μ_i`, takes a projected Newton
//! step and shrinks `t` geometrically.

use alloc::boxed::Box;
use alloc::string::ToString;
use alloc::vec::Vec;
use core::ops::Range;

use nalgebra::{DMatrix, DVector};
use num_traits::Float;

use crate::barrier::{analytic_center, BlockBarrier};
use crate::linalg::{l1_norm, log_sum_exp};
use crate::newton::{
    assemble_sketched_projection, complete_deltas, pre_deltas, ExactProjection, Projection,
    ProjectionBundle, WeightMatrix,
};
use crate::sketch::{SketchKind, SketchSet};
use crate::{Error, Result};

/// Halving budget for the damped update.
pub const MAX_HALVINGS: u32 = 60;

/// `min c^T x  s.t.  A x = b,  x in K_1 x ... x K_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: DVector<f64>,
    pub blocks: Vec<BlockBarrier>,
    /// Owning client of each block; non-decreasing.
    pub owners: Vec<u32>,
    /// Upper bound on `||c||_2`.
    pub lipschitz: f64,
    /// Upper bound on `||x||_2` over the feasible set.
    pub diameter: f64,
}

impl ProblemInstance {
    /// Builds and validates an instance with every block owned by client 0.
    pub fn new(
        a: DMatrix<f64>,
        b: DVector<f64>,
        c: DVector<f64>,
        blocks: Vec<BlockBarrier>,
        lipschitz: f64,
        diameter: f64,
    ) -> Result<Self> {
        let owners = alloc::vec![0; blocks.len()];
        let p = Self {
            a,
            b,
            c,
            blocks,
            owners,
            lipschitz,
            diameter,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_owners(mut self, owners: Vec<u32>) -> Result<Self> {
        self.owners = owners;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let n: usize = self.blocks.iter().map(|b| b.dim()).sum();
        if self.blocks.is_empty() {
            return Err(Error::InvalidProblem("no blocks".to_string()));
        }
        if self.a.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: "A columns vs block dimensions",
                expected: n,
                got: self.a.ncols(),
            });
        }
        if self.c.len() != n {
            return Err(Error::DimensionMismatch {
                context: "c length",
                expected: n,
                got: self.c.len(),
            });
        }
        if self.b.len() != self.a.nrows() {
            return Err(Error::DimensionMismatch {
                context: "b length",
                expected: self.a.nrows(),
                got: self.b.len(),
            });
        }
        if self.a.nrows() == 0 || self.a.nrows() > n {
            return Err(Error::InvalidProblem(alloc::format!(
                "need 1 <= d <= n, got d = {}, n = {n}",
                self.a.nrows()
            )));
        }
        if self.owners.len() != self.blocks.len() {
            return Err(Error::DimensionMismatch {
                context: "block owners",
                expected: self.blocks.len(),
                got: self.owners.len(),
            });
        }
        if self.owners.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidProblem(
                "block owners must be non-decreasing".to_string(),
            ));
        }
        let all_finite = self.a.iter().chain(self.b.iter()).chain(self.c.iter()).all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::InvalidProblem("non-finite data".to_string()));
        }
        if !(self.diameter > 0.0 && self.diameter.is_finite()) {
            return Err(Error::InvalidProblem("diameter R must be positive".to_string()));
        }
        let c_norm = self.c.norm();
        if !(self.lipschitz > 0.0 && self.lipschitz.is_finite()) || self.lipschitz < c_norm * (1.0 - 1e-12) {
            return Err(Error::InvalidProblem(alloc::format!(
                "L = {} does not bound ||c|| = {c_norm}",
                self.lipschitz
            )));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.a.ncols()
    }

    pub fn d(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.blocks.len()
    }

    pub fn nu(&self) -> f64 {
        self.blocks.iter().map(|b| b.nu()).sum()
    }

    pub fn block_ranges(&self) -> Vec<Range<usize>> {
        block_ranges(&self.blocks)
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        self.c.dot(x)
    }

    /// `||A x - b||_1`.
    pub fn residual_l1(&self, x: &DVector<f64>) -> f64 {
        l1_norm(&(&self.a * x - &self.b))
    }
}

pub fn block_ranges(blocks: &[BlockBarrier]) -> Vec<Range<usize>> {
    let mut out = Vec::with_capacity(blocks.len());
    let mut offset = 0;
    for b in blocks {
        out.push(offset..offset + b.dim());
        offset += b.dim();
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Paper,
    Practical,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperParams {
    pub lambda: f64,
    pub alpha: f64,
    pub xi: f64,
    pub gamma_threshold: f64,
    pub profile: Profile,
}

impl HyperParams {
    pub const PRACTICAL_ALPHA: f64 = 1e-4;
    pub const PRACTICAL_XI: f64 = 1e-4;

    /// `λ = 2^16 ln m`, `α = 2^-20 λ^-2`, `ξ = 2^-10 α`.
    pub fn paper(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidParams("paper profile needs at least two blocks"));
        }
        let lambda = 65536.0 * Float::ln(m as f64);
        let alpha = 1.0 / (1048576.0 * lambda * lambda);
        Ok(Self::from_parts(lambda, alpha, alpha / 1024.0, Profile::Paper))
    }

    /// `λ = ln m + 1` with the default `α` and `ξ`.
    pub fn practical(m: usize) -> Result<Self> {
        Self::practical_with(m, Self::PRACTICAL_ALPHA, Self::PRACTICAL_XI)
    }

    pub fn practical_with(m: usize, alpha: f64, xi: f64) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParams("need at least one block"));
        }
        if !(xi > 0.0 && xi <= alpha && alpha <= 0.01) {
            return Err(Error::InvalidParams("practical profile needs 0 < xi <= alpha <= 1/100"));
        }
        let lambda = Float::ln(m as f64) + 1.0;
        Ok(Self::from_parts(lambda, alpha, xi, Profile::Practical))
    }

    /// Parameters for the modified program of `problem` (one extra block).
    pub fn for_problem(profile: Profile, problem: &ProblemInstance) -> Result<Self> {
        Self::for_profile(profile, problem.m() + 1)
    }

    pub fn for_profile(profile: Profile, m: usize) -> Result<Self> {
        match profile {
            Profile::Paper => Self::paper(m),
            Profile::Practical => Self::practical(m),
        }
    }

    fn from_parts(lambda: f64, alpha: f64, xi: f64, profile: Profile) -> Self {
        Self {
            lambda,
            alpha,
            xi,
            gamma_threshold: 96.0 * Float::sqrt(alpha),
            profile,
        }
    }
}

/// `t_k = (1 - ξ/√ν)^k`, evaluated as `exp(k ln(1 - ξ/√ν))` so that ratios
/// far below machine epsilon still decay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    ratio: f64,
    log_base: f64,
}

impl Schedule {
    pub fn new(xi: f64, nu: f64) -> Result<Self> {
        let ratio = xi / Float::sqrt(nu);
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::InvalidParams("schedule factor must lie in (0, 1)"));
        }
        Ok(Self {
            ratio,
            log_base: Float::ln_1p(-ratio),
        })
    }

    /// `ξ/√ν`.
    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn factor(&self) -> f64 {
        1.0 - self.ratio
    }

    pub fn t_at(&self, k: u64) -> f64 {
        Float::exp(k as f64 * self.log_base)
    }

    /// First `k` with `t_k <= target`, saturating at `u64::MAX`.
    pub fn iterations_to(&self, target: f64) -> u64 {
        if target >= 1.0 {
            return 0;
        }
        let estimate = Float::ceil(Float::ln(target) / self.log_base);
        if !(estimate < 1e18) {
            return u64::MAX;
        }
        let mut k = estimate as u64;
        while k > 0 && self.t_at(k - 1) <= target {
            k -= 1;
        }
        while self.t_at(k) > target {
            k += 1;
        }
        k
    }
}

/// `4 t ν`.
pub fn duality_gap_bound(t_tilde: f64, nu: f64) -> f64 {
    4.0 * t_tilde * nu
}

/// Per-block centrality at `(x_i, s_i, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockCentrality {
    pub mu: DVector<f64>,
    pub gamma: f64,
    pub hess: DMatrix<f64>,
}

/// `μ_i = s_i / t + ∇φ_i(x_i)` and `γ_i = ||μ_i||_{∇²φ_i(x_i)^{-1}}`.
pub fn block_centrality(
    barrier: &BlockBarrier,
    x: &[f64],
    s: &[f64],
    t_tilde: f64,
) -> Result<BlockCentrality> {
    let ev = barrier.eval(x)?;
    let mu = DVector::from_iterator(s.len(), s.iter().map(|v| v / t_tilde)) + ev.grad;
    let gamma = if mu.len() == 1 {
        Float::abs(mu[0]) / Float::sqrt(ev.hess[(0, 0)])
    } else {
        let sol = ev.hess.clone().cholesky().ok_or(Error::SingularHessian)?.solve(&mu);
        Float::sqrt(Float::max(mu.dot(&sol), 0.0))
    };
    Ok(BlockCentrality {
        mu,
        gamma,
        hess: ev.hess,
    })
}

/// `ln Σ_j exp(2 λ γ_j)`.
pub fn weight_log_normalizer(gammas: &[f64], lambda: f64) -> f64 {
    log_sum_exp(gammas.iter().map(|g| 2.0 * lambda * g))
}

/// `c_i = exp(λ γ_i) / γ_i / sqrt(Σ_j exp(2 λ γ_j))` above the threshold, else 0.
pub fn weight_c(gamma: f64, log_normalizer: f64, params: &HyperParams) -> f64 {
    if gamma >= params.gamma_threshold && gamma > 0.0 {
        Float::exp(params.lambda * gamma - 0.5 * log_normalizer) / gamma
    } else {
        0.0
    }
}

pub fn weights(gammas: &[f64], params: &HyperParams) -> Vec<f64> {
    let lse = weight_log_normalizer(gammas, params.lambda);
    gammas.iter().map(|&g| weight_c(g, lse, params)).collect()
}

/// `Φ = Σ exp(λ γ_i)` together with `ln Φ`.
pub fn potential_phi(gammas: &[f64], lambda: f64) -> (f64, f64) {
    let log_phi = log_sum_exp(gammas.iter().map(|g| lambda * g));
    (Float::exp(log_phi), log_phi)
}

/// Smallest `k <= MAX_HALVINGS` with `x + 2^-k dx` interior to the block.
pub fn halvings_needed(barrier: &BlockBarrier, x: &[f64], dx: &[f64]) -> Result<u32> {
    let mut trial = alloc::vec![0.0; x.len()];
    let mut scale = 1.0;
    for k in 0..=MAX_HALVINGS {
        for ((t, xi), di) in trial.iter_mut().zip(x).zip(dx) {
            *t = xi + scale * di;
        }
        if barrier.is_interior(&trial) {
            return Ok(k);
        }
        scale *= 0.5;
    }
    Err(Error::LineSearchFailed {
        halvings: MAX_HALVINGS,
    })
}

/// `2^-k` without going through `powi`.
pub fn damping_scale(halvings: u32) -> f64 {
    Float::powi(0.5, halvings as i32)
}

/// The program actually path-followed: the problem plus the extra coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct ModifiedProgram {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: DVector<f64>,
    pub blocks: Vec<BlockBarrier>,
    pub ranges: Vec<Range<usize>>,
    pub x0: DVector<f64>,
    pub s0: DVector<f64>,
    /// Columns of the original problem.
    pub n_original: usize,
    /// `δ / (L R)`.
    pub cost_scale: f64,
    pub nu: f64,
}

impl ModifiedProgram {
    pub fn n(&self) -> usize {
        self.a.ncols()
    }

    pub fn m(&self) -> usize {
        self.blocks.len()
    }

    /// The original problem's coordinates of a modified-program point.
    pub fn original_part(&self, x_bar: &DVector<f64>) -> DVector<f64> {
        x_bar.rows(0, self.n_original).into_owned()
    }

    /// `||A' x' - b||_∞`.
    pub fn residual_inf(&self, x_bar: &DVector<f64>) -> f64 {
        (&self.a * x_bar - &self.b).amax()
    }

    /// Evaluates the per-block centrality of `(x, s, t)`.
    pub fn centrality(
        &self,
        x: &DVector<f64>,
        s: &DVector<f64>,
        t_tilde: f64,
        params: &HyperParams,
    ) -> Result<Centrality> {
        let blocks = block_centralities(&self.blocks, &self.ranges, x, s, t_tilde)?;
        Ok(Centrality::from_blocks(blocks, params))
    }
}

/// [`block_centrality`] for every block, in order.
pub fn block_centralities(
    blocks: &[BlockBarrier],
    ranges: &[Range<usize>],
    x: &DVector<f64>,
    s: &DVector<f64>,
    t_tilde: f64,
) -> Result<Vec<BlockCentrality>> {
    let mut out = Vec::with_capacity(blocks.len());
    for (i, (barrier, r)) in blocks.iter().zip(ranges).enumerate() {
        let bc = block_centrality(
            barrier,
            &x.as_slice()[r.clone()],
            &s.as_slice()[r.clone()],
            t_tilde,
        )
        .map_err(|e| remap_block(e, i))?;
        out.push(bc);
    }
    Ok(out)
}

/// Largest per-block halving count needed to keep `x + 2^-k dx` interior.
pub fn damping_halvings(
    blocks: &[BlockBarrier],
    ranges: &[Range<usize>],
    x: &DVector<f64>,
    dx: &DVector<f64>,
) -> Result<u32> {
    let mut halvings = 0;
    for (barrier, r) in blocks.iter().zip(ranges) {
        let k = halvings_needed(barrier, &x.as_slice()[r.clone()], &dx.as_slice()[r.clone()])?;
        halvings = halvings.max(k);
    }
    Ok(halvings)
}

fn remap_block(e: Error, block: usize) -> Error {
    match e {
        Error::DomainViolation { .. } => Error::DomainViolation { block },
        other => other,
    }
}

/// Builds the modified program and its starting state.
pub fn initialize(
    problem: &ProblemInstance,
    delta: f64,
    params: &HyperParams,
) -> Result<(ModifiedProgram, PathState)> {
    problem.validate()?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParams("delta must lie in (0, 1)"));
    }
    let n = problem.n();
    let x0 = analytic_center(&problem.blocks)?;
    let extra_col = &problem.b - &problem.a * &x0;
    let mut a = DMatrix::zeros(problem.d(), n + 1);
    a.columns_mut(0, n).copy_from(&problem.a);
    a.set_column(n, &extra_col);

    let cost_scale = delta / (problem.lipschitz * problem.diameter);
    let mut c = DVector::zeros(n + 1);
    c.rows_mut(0, n).copy_from(&(&problem.c * cost_scale));
    c[n] = 1.0;

    let mut x = DVector::zeros(n + 1);
    x.rows_mut(0, n).copy_from(&x0);
    x[n] = 1.0;

    let mut blocks = problem.blocks.clone();
    blocks.push(BlockBarrier::log_extra());
    let ranges = block_ranges(&blocks);
    let nu = blocks.iter().map(|b| b.nu()).sum();
    let program = ModifiedProgram {
        a,
        b: problem.b.clone(),
        c: c.clone(),
        blocks,
        ranges,
        x0: x.clone(),
        s0: c.clone(),
        n_original: n,
        cost_scale,
        nu,
    };

    let centrality = program.centrality(&x, &c, 1.0, params)?;
    let measured = centrality.total_dual_norm();
    if measured > delta {
        return Err(Error::CenteringTooLoose {
            measured,
            allowed: delta,
        });
    }
    // Reject rank-deficient constraints up front.
    let w = centrality.weight_matrix()?;
    ExactProjection::new(&program.a, &w)?;

    let state = PathState {
        x,
        s: c,
        t_tilde: 1.0,
        iter: 0,
        centrality,
    };
    Ok((program, state))
}

/// Centrality of all blocks plus the derived weights and potential.
#[derive(Debug, Clone, PartialEq)]
pub struct Centrality {
    pub blocks: Vec<BlockCentrality>,
    pub weights: Vec<f64>,
    /// `ln Σ exp(2 λ γ_j)`.
    pub log_normalizer: f64,
    pub phi: f64,
    pub log_phi: f64,
    pub gamma_max: f64,
}

impl Centrality {
    pub fn from_blocks(blocks: Vec<BlockCentrality>, params: &HyperParams) -> Self {
        let gammas: Vec<f64> = blocks.iter().map(|b| b.gamma).collect();
        let log_normalizer = weight_log_normalizer(&gammas, params.lambda);
        Self::with_normalizer(blocks, log_normalizer, params)
    }

    /// Uses a normalizer computed elsewhere (over blocks held by other parties);
    /// `phi` and `gamma_max` cover only `blocks`.
    pub fn with_normalizer(
        blocks: Vec<BlockCentrality>,
        log_normalizer: f64,
        params: &HyperParams,
    ) -> Self {
        let gammas: Vec<f64> = blocks.iter().map(|b| b.gamma).collect();
        let weights = gammas
            .iter()
            .map(|&g| weight_c(g, log_normalizer, params))
            .collect();
        let (phi, log_phi) = potential_phi(&gammas, params.lambda);
        let gamma_max = gammas.iter().copied().fold(0.0, f64::max);
        Self {
            blocks,
            weights,
            log_normalizer,
            phi,
            log_phi,
            gamma_max,
        }
    }

    pub fn gammas(&self) -> Vec<f64> {
        self.blocks.iter().map(|b| b.gamma).collect()
    }

    /// `sqrt(Σ γ_i²)`, the dual norm of the stacked `μ`.
    pub fn total_dual_norm(&self) -> f64 {
        Float::sqrt(self.blocks.iter().map(|b| b.gamma * b.gamma).sum::<f64>())
    }

    /// `h_i = -α c_i μ_i`, stacked.
    pub fn direction_h(&self, alpha: f64) -> DVector<f64> {
        let n: usize = self.blocks.iter().map(|b| b.mu.len()).sum();
        let mut h = DVector::zeros(n);
        let mut offset = 0;
        for (b, &c) in self.blocks.iter().zip(&self.weights) {
            let k = b.mu.len();
            if c != 0.0 {
                h.rows_mut(offset, k).copy_from(&(&b.mu * (-alpha * c)));
            }
            offset += k;
        }
        h
    }

    pub fn weight_matrix(&self) -> Result<WeightMatrix> {
        WeightMatrix::from_hessians(self.blocks.iter().map(|b| &b.hess))
    }
}

/// Primal/slack iterate with its cached centrality.
#[derive(Debug, Clone, PartialEq)]
pub struct PathState {
    pub x: DVector<f64>,
    pub s: DVector<f64>,
    pub t_tilde: f64,
    pub iter: u64,
    pub centrality: Centrality,
}

impl PathState {
    pub fn mu(&self, block: usize) -> &DVector<f64> {
        &self.centrality.blocks[block].mu
    }

    pub fn gamma(&self, block: usize) -> f64 {
        self.centrality.blocks[block].gamma
    }

    pub fn weight(&self, block: usize) -> f64 {
        self.centrality.weights[block]
    }

    pub fn direction_h(&self, params: &HyperParams) -> DVector<f64> {
        self.centrality.direction_h(params.alpha)
    }

    pub fn potential(&self) -> f64 {
        self.centrality.phi
    }
}

/// What happened during one accepted step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    /// `α_i = ||δx_i||_{x_i}` of the applied (damped) step.
    pub alphas: Vec<f64>,
    pub halvings: u32,
}

impl StepInfo {
    pub fn alpha_sq_sum(&self) -> f64 {
        self.alphas.iter().map(|a| a * a).sum()
    }
}

/// Local norms `||δx_i||_{x_i}` from the Hessians cached in `centrality`.
pub fn step_local_norms(centrality: &Centrality, ranges: &[Range<usize>], dx: &DVector<f64>) -> Vec<f64> {
    centrality
        .blocks
        .iter()
        .zip(ranges)
        .map(|(b, r)| {
            let v = dx.rows(r.start, r.len());
            Float::sqrt(Float::max(v.dot(&(&b.hess * v)), 0.0))
        })
        .collect()
}

/// Projection used by [`path_step`].
#[derive(Debug, Clone, Copy)]
pub enum StepProjection<'a> {
    Exact,
    Sketched(&'a SketchSet),
}

/// One iteration: direction, Newton deltas, damped update and `t` decay.
pub fn path_step(
    program: &ModifiedProgram,
    params: &HyperParams,
    schedule: &Schedule,
    state: &PathState,
    projection: StepProjection<'_>,
) -> Result<(PathState, StepInfo)> {
    let w = state.centrality.weight_matrix()?;
    let h = state.direction_h(params);
    let h_scaled = w.apply_sqrt(&h);
    let (p, q) = match projection {
        StepProjection::Exact => {
            let proj = ExactProjection::new(&program.a, &w)?;
            pre_deltas(&proj, &h_scaled, state.t_tilde)
        }
        StepProjection::Sketched(sketches) => {
            let bundle = ProjectionBundle::central(&program.a, &w, sketches)?;
            let proj = assemble_sketched_projection(&bundle, sketches)?;
            pre_deltas(&proj as &dyn Projection, &h_scaled, state.t_tilde)
        }
    };
    let (dx, ds) = complete_deltas(&w, &p, &q);
    apply_step(program, params, schedule, state, &dx, &ds)
}

/// Damps `(dx, ds)` to keep every block interior, applies it and advances `t`.
pub fn apply_step(
    program: &ModifiedProgram,
    params: &HyperParams,
    schedule: &Schedule,
    state: &PathState,
    dx: &DVector<f64>,
    ds: &DVector<f64>,
) -> Result<(PathState, StepInfo)> {
    let halvings = damping_halvings(&program.blocks, &program.ranges, &state.x, dx)?;
    let scale = damping_scale(halvings);
    let alphas = step_local_norms(&state.centrality, &program.ranges, dx)
        .into_iter()
        .map(|a| a * scale)
        .collect();
    let x = &state.x + dx * scale;
    let s = &state.s + ds * scale;
    let iter = state.iter + 1;
    let t_tilde = schedule.t_at(iter);
    let centrality = program.centrality(&x, &s, t_tilde, params)?;
    Ok((
        PathState {
            x,
            s,
            t_tilde,
            iter,
            centrality,
        },
        StepInfo { alphas, halvings },
    ))
}

/// When to stop following the path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Termination {
    /// `4 t ν <= δ`.
    GapBelowDelta,
    /// `4 t ν <= δ²`: the suboptimality on the modified program that makes the
    /// original objective `δ`-accurate in units of `L R`.
    #[default]
    GapBelowDeltaSquared,
}

impl Termination {
    pub fn target_t(self, delta: f64, nu: f64) -> f64 {
        match self {
            Termination::GapBelowDelta => delta / (4.0 * nu),
            Termination::GapBelowDeltaSquared => delta * delta / (4.0 * nu),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SketchConfig {
    pub kind: SketchKind,
    pub sizes: [usize; 4],
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolveMode {
    Exact,
    Sketched(SketchConfig),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub delta: f64,
    pub params: HyperParams,
    pub mode: SolveMode,
    pub max_iters: u64,
    pub termination: Termination,
}

impl SolveOptions {
    pub const DEFAULT_MAX_ITERS: u64 = 5_000_000;

    pub fn new(delta: f64, params: HyperParams, mode: SolveMode) -> Self {
        Self {
            delta,
            params,
            mode,
            max_iters: Self::DEFAULT_MAX_ITERS,
            termination: Termination::default(),
        }
    }
}

/// One row of the per-iteration trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iter: u64,
    pub t_tilde: f64,
    pub gamma_max: f64,
    pub phi: f64,
    pub gap_bound: f64,
    pub uplink_words: u64,
    pub downlink_words: u64,
    /// `c^T x` on the original problem.
    pub objective: f64,
}

pub const TRACE_HEADER: &str =
    "iter,t_tilde,gamma_max,phi,gap_bound,uplink_words,downlink_words,objective";

impl TraceRow {
    pub fn from_state(program: &ModifiedProgram, original_c: &DVector<f64>, state: &PathState) -> Self {
        let objective = original_c.dot(&state.x.rows(0, program.n_original));
        Self {
            iter: state.iter,
            t_tilde: state.t_tilde,
            gamma_max: state.centrality.gamma_max,
            phi: state.centrality.phi,
            gap_bound: duality_gap_bound(state.t_tilde, program.nu),
            uplink_words: 0,
            downlink_words: 0,
            objective,
        }
    }

    /// Compares the path columns (not the word counts) with relative tolerance
    /// `|a - b| <= tol · max(1, |a|, |b|)`.
    pub fn path_close(&self, other: &Self, tol: f64) -> bool {
        let close = |a: f64, b: f64| {
            Float::abs(a - b) <= tol * Float::max(1.0, Float::max(Float::abs(a), Float::abs(b)))
        };
        self.iter == other.iter
            && close(self.t_tilde, other.t_tilde)
            && close(self.gamma_max, other.gamma_max)
            && close(self.phi, other.phi)
            && close(self.gap_bound, other.gap_bound)
            && close(self.objective, other.objective)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutput {
    /// Original-problem coordinates of the final iterate.
    pub x: DVector<f64>,
    pub x_bar: DVector<f64>,
    pub s_bar: DVector<f64>,
    pub t_tilde: f64,
    pub iterations: u64,
    pub objective: f64,
    pub residual_l1: f64,
    pub trace: Vec<TraceRow>,
}

/// Solves `problem`, calling `observer` on every iterate (with the step that
/// produced it, if any).
pub fn solve_observed(
    problem: &ProblemInstance,
    options: &SolveOptions,
    observer: &mut dyn FnMut(&ModifiedProgram, &PathState, Option<&StepInfo>),
) -> Result<SolveOutput> {
    let params = &options.params;
    let (program, mut state) = initialize(problem, options.delta, params)?;
    let schedule = Schedule::new(params.xi, program.nu)?;
    let sketches = match options.mode {
        SolveMode::Exact => None,
        SolveMode::Sketched(cfg) => {
            Some(SketchSet::generate(cfg.kind, cfg.sizes, problem.d(), cfg.seed)?)
        }
    };
    let target = options.termination.target_t(options.delta, program.nu);
    let mut trace = Vec::new();
    trace.push(TraceRow::from_state(&program, &problem.c, &state));
    observer(&program, &state, None);
    while state.t_tilde > target {
        if state.iter >= options.max_iters {
            let out = finish(problem, &program, state, trace);
            return Err(Error::IterationCapExceeded(Box::new(out)));
        }
        let projection = match &sketches {
            None => StepProjection::Exact,
            Some(s) => StepProjection::Sketched(s),
        };
        let (next, info) = path_step(&program, params, &schedule, &state, projection)?;
        state = next;
        trace.push(TraceRow::from_state(&program, &problem.c, &state));
        observer(&program, &state, Some(&info));
    }
    Ok(finish(problem, &program, state, trace))
}

pub fn solve(problem: &ProblemInstance, options: &SolveOptions) -> Result<SolveOutput> {
    solve_observed(problem, options, &mut |_, _, _| {})
}

/// Packs the final iterate into a [`SolveOutput`].
pub fn finish(
    problem: &ProblemInstance,
    program: &ModifiedProgram,
    state: PathState,
    trace: Vec<TraceRow>,
) -> SolveOutput {
    let x = program.original_part(&state.x);
    SolveOutput {
        objective: problem.objective(&x),
        residual_l1: problem.residual_l1(&x),
        x,
        x_bar: state.x,
        s_bar: state.s,
        t_tilde: state.t_tilde,
        iterations: state.iter,
        trace,
    }
}
