//! The work behind each subcommand, independent of argument parsing.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use fedipm_core::barrier::analytic_center;
use fedipm_core::centralpath::{
    solve, HyperParams, Profile, ProblemInstance, SketchConfig, SolveMode, SolveOptions, SolveOutput, Termination,
};
use fedipm_core::fednet::baseline::{compare_models, crafted_instance, ModelOutcome};
use fedipm_core::fednet::{
    build_clients, client_shares, even_owners, ledger_formula, run_federated, run_federated_with, FederatedOptions,
};
use fedipm_core::instances::{boxlp, gaussian_vector, least_squares_erm, random_weighted_instance, unit_vector};
use fedipm_core::linalg::quantile;
use fedipm_core::newton::{bilinear_error_report, two_sketch_error, WeightMatrix};
use fedipm_core::reference::MAX_ENUMERATION_N;
use fedipm_core::sketch::{mix64, SketchKind, SketchSet};
use fedipm_core::{DMatrix, DVector, Error};
use log::{debug, info};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{CliError, CliResult};
use crate::pool::ThreadedPool;
use crate::problem_file::{load_problem, ProblemFile};
use crate::summary::Summary;
use crate::trace::write_trace;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    Exact,
    Sketched,
    Federated,
}

impl RunMode {
    pub fn name(self) -> &'static str {
        match self {
            RunMode::Exact => "exact",
            RunMode::Sketched => "sketched",
            RunMode::Federated => "federated",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transport {
    Threads,
    Inline,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub profile: Profile,
    pub mode: RunMode,
    pub sketch: SketchKind,
    /// `b1..b4`; identity sketches default to `d` when absent.
    pub sizes: Option<[usize; 4]>,
    pub delta: f64,
    pub seed: u64,
    pub max_iters: Option<u64>,
    pub termination: Termination,
    pub transport: Transport,
    pub out_trace: Option<PathBuf>,
    pub out_summary: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(mode: RunMode) -> Self {
        Self {
            profile: Profile::Practical,
            mode,
            sketch: SketchKind::Ams,
            sizes: None,
            delta: 0.1,
            seed: 0,
            max_iters: None,
            termination: Termination::default(),
            transport: Transport::Threads,
            out_trace: None,
            out_summary: None,
        }
    }

    fn sizes_for(&self, d: usize) -> CliResult<[usize; 4]> {
        match (self.sizes, self.sketch) {
            (Some(s), _) if s.contains(&0) => Err(CliError::Usage("sketch sizes must be positive".into())),
            (Some(s), _) => Ok(s),
            (None, SketchKind::Identity) => Ok([d; 4]),
            (None, _) => Err(CliError::Usage(format!(
                "mode {} needs --b1 --b2 --b3 --b4",
                self.mode.name()
            ))),
        }
    }

    pub fn solve_options(&self, problem: &ProblemInstance) -> CliResult<SolveOptions> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(CliError::Usage(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        let params = HyperParams::for_problem(self.profile, problem)?;
        let mode = match self.mode {
            RunMode::Exact => SolveMode::Exact,
            RunMode::Sketched | RunMode::Federated => SolveMode::Sketched(SketchConfig {
                kind: self.sketch,
                sizes: self.sizes_for(problem.d())?,
                seed: self.seed,
            }),
        };
        let mut options = SolveOptions::new(self.delta, params, mode);
        options.termination = self.termination;
        if let Some(cap) = self.max_iters {
            options.max_iters = cap;
        }
        Ok(options)
    }
}

/// Per-client dimensions of the modified program, the appended coordinate on the last client.
pub fn protocol_dims(problem: &ProblemInstance) -> Vec<usize> {
    let mut dims: Vec<usize> = client_shares(problem).iter().map(|s| s.columns.len()).collect();
    if let Some(last) = dims.last_mut() {
        *last += 1;
    }
    dims
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub output: SolveOutput,
    pub summary: Summary,
}

fn split_cap(result: Result<SolveOutput, Error>) -> CliResult<(SolveOutput, bool)> {
    match result {
        Ok(v) => Ok((v, true)),
        Err(Error::IterationCapExceeded(out)) => Ok((*out, false)),
        Err(e) => Err(e.into()),
    }
}

/// Runs one solve and builds its summary; an iteration cap is reported as
/// `converged = false` rather than an error.
pub fn run_solve(problem: &ProblemInstance, config: &RunConfig) -> CliResult<SolveReport> {
    let options = config.solve_options(problem)?;
    info!(
        "solving d={} n={} m={} in {} mode, delta={}",
        problem.d(),
        problem.n(),
        problem.m(),
        config.mode.name(),
        config.delta
    );
    let mut setup_words = None;
    let mut control_words = None;
    let (output, converged, words) = match config.mode {
        RunMode::Exact => {
            let (out, ok) = split_cap(solve(problem, &options))?;
            (out, ok, (0, 0))
        }
        RunMode::Sketched => {
            let (mut out, ok) = split_cap(solve(problem, &options))?;
            let per_round = ledger_formula(&protocol_dims(problem), config.sizes_for(problem.d())?);
            for row in out.trace.iter_mut().skip(1) {
                (row.uplink_words, row.downlink_words) = per_round;
            }
            let rounds = out.iterations;
            (out, ok, (per_round.0 * rounds, per_round.1 * rounds))
        }
        RunMode::Federated => {
            let fed = FederatedOptions::new(options);
            let result = match config.transport {
                Transport::Threads => {
                    let mut pool = ThreadedPool::spawn(build_clients(problem, &fed)?);
                    run_federated_with(&mut pool, problem, &fed)
                }
                Transport::Inline => run_federated(problem, &fed),
            };
            match result {
                Ok(out) => {
                    setup_words = Some((out.ledger.setup_uplink, out.ledger.setup_downlink));
                    control_words = Some(out.ledger.total_control());
                    let words = (out.ledger.total_uplink(), out.ledger.total_downlink());
                    (out.solve, true, words)
                }
                Err(Error::IterationCapExceeded(out)) => {
                    // Without a ledger, the data words come from the trace rows.
                    let up = out.trace.iter().map(|r| r.uplink_words).sum();
                    let down = out.trace.iter().map(|r| r.downlink_words).sum();
                    (*out, false, (up, down))
                }
                Err(e) => return Err(e.into()),
            }
        }
    };
    finish(problem, config, output, converged, words, setup_words, control_words)
}

fn finish(
    problem: &ProblemInstance,
    config: &RunConfig,
    output: SolveOutput,
    converged: bool,
    words: (u64, u64),
    setup_words: Option<(u64, u64)>,
    control_words: Option<(u64, u64)>,
) -> CliResult<SolveReport> {
    let rounds = output.iterations;
    info!(
        "{} after {rounds} iterations: objective {:.6e}, t {:.3e}",
        if converged { "converged" } else { "stopped at the cap" },
        output.objective,
        output.t_tilde
    );
    let summary = Summary {
        mode: config.mode.name().to_string(),
        converged,
        objective: output.objective,
        ax_minus_b_l1: output.residual_l1,
        rounds,
        uplink_words: words.0,
        downlink_words: words.1,
        t_tilde_final: output.t_tilde,
        accuracy_bound: problem.lipschitz * problem.diameter * config.delta,
        ref_opt: None,
        slack: None,
        within_bound: None,
        setup_words,
        control_words,
    };
    Ok(SolveReport { output, summary })
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

/// `solve`: writes the trace and summary, then reports the cap as an error.
pub fn cmd_solve(problem_path: &Path, config: &RunConfig) -> CliResult<Summary> {
    let (file, problem) = load_problem(problem_path)?;
    let report = run_solve(&problem, config)?;
    let summary = report.summary.with_reference(file.ref_opt);
    if let Some(path) = &config.out_trace {
        write_trace(create(path)?, &report.output.trace)?;
    }
    let json = summary.to_json();
    match &config.out_summary {
        Some(path) => {
            let mut w = create(path)?;
            w.write_all(json.as_bytes())
                .and_then(|_| w.flush())
                .map_err(|e| CliError::io(path, e))?;
        }
        None => print!("{json}"),
    }
    if summary.converged {
        Ok(summary)
    } else {
        Err(CliError::IterationCap)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub d: usize,
    pub b_list: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub sketch: SketchKind,
}

/// Condition number of the weighted Gram matrix in the bilinear benchmark.
pub const BENCH_KAPPA: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quartiles {
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
}

impl Quartiles {
    fn of(mut values: Vec<f64>) -> Self {
        Self {
            q25: quantile(&mut values, 0.25),
            median: quantile(&mut values, 0.5),
            q75: quantile(&mut values, 0.75),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchRow {
    pub b: usize,
    /// `|g^T P h - g^T P~ h|` on a fixed `d x 2d` weighted instance.
    pub bilinear_gap: Quartiles,
    /// `|u^T R^T R S^T S v - u^T v|` for fixed unit `u, v` in dimension `d`.
    pub two_sketch: Quartiles,
    /// `||C^T g|| ||C^T h|| ||B||` for the bilinear instance.
    pub gap_scale: f64,
}

pub const BENCH_HEADER: &str =
    "b,gap_q25,gap_median,gap_q75,gap_scale,two_sketch_q25,two_sketch_median,two_sketch_q75";

pub fn bench_sketch(config: &BenchConfig) -> CliResult<Vec<BenchRow>> {
    let d = config.d;
    if d == 0 || config.trials == 0 || config.b_list.is_empty() || config.b_list.contains(&0) {
        return Err(CliError::Usage("d, trials and every b must be positive".into()));
    }
    let inst = random_weighted_instance(d, 2 * d, BENCH_KAPPA, config.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(mix64(config.seed ^ 0x6265_6e63));
    let g = gaussian_vector(&mut rng, 2 * d);
    let u = unit_vector(&mut rng, d);
    let v = unit_vector(&mut rng, d);
    let identity = DMatrix::identity(d, d);
    let mut rows = Vec::with_capacity(config.b_list.len());
    for &b in &config.b_list {
        let mut gaps = Vec::with_capacity(config.trials);
        let mut errs = Vec::with_capacity(config.trials);
        let mut scale = 0.0;
        for trial in 0..config.trials as u64 {
            let sketch_seed = mix64(config.seed.wrapping_add(trial));
            let sketches = SketchSet::generate(config.sketch, [b; 4], d, sketch_seed)?;
            let report = bilinear_error_report(&inst.a, &inst.w, &g, &g, &sketches)?;
            scale = report.scale;
            gaps.push(report.gap);
            let e = two_sketch_error(&u, &v, &identity, sketches.get(1), sketches.get(2))?;
            errs.push(e.err);
        }
        let row = BenchRow {
            b,
            bilinear_gap: Quartiles::of(gaps),
            two_sketch: Quartiles::of(errs),
            gap_scale: scale,
        };
        debug!("b={b}: median gap {:.3e}", row.bilinear_gap.median);
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_bench<W: Write>(out: W, rows: &[BenchRow]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| CliError::io("bench", e.into());
    w.write_record(BENCH_HEADER.split(',')).map_err(csv_err)?;
    for r in rows {
        let f = |v: f64| format!("{v:.9e}");
        w.write_record([
            r.b.to_string(),
            f(r.bilinear_gap.q25),
            f(r.bilinear_gap.median),
            f(r.bilinear_gap.q75),
            f(r.gap_scale),
            f(r.two_sketch.q25),
            f(r.two_sketch.median),
            f(r.two_sketch.q75),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::io("bench", e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareConfig {
    pub sketch: SketchKind,
    pub sizes: Option<[usize; 4]>,
    pub seed: u64,
    /// Path parameter used in the Newton step.
    pub t: f64,
    /// Reassigns blocks evenly over this many clients.
    pub clients: Option<usize>,
}

/// Inputs to one model comparison.
#[derive(Debug, Clone)]
pub struct CompareInputs {
    pub a: DMatrix<f64>,
    pub w: WeightMatrix,
    pub h: DVector<f64>,
    pub client_dims: Vec<usize>,
}

/// Weights at the analytic center and a seeded Gaussian direction.
pub fn compare_inputs(problem: &ProblemInstance, config: &CompareConfig) -> CliResult<CompareInputs> {
    let problem = match config.clients {
        Some(k) => problem.clone().with_owners(even_owners(problem.m(), k)?)?,
        None => problem.clone(),
    };
    let center = analytic_center(&problem.blocks)?;
    let mut hessians = Vec::with_capacity(problem.m());
    let mut offset = 0;
    for block in &problem.blocks {
        let k = block.dim();
        hessians.push(block.eval(&center.as_slice()[offset..offset + k])?.hess);
        offset += k;
    }
    let w = WeightMatrix::from_hessians(hessians.iter())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let h = gaussian_vector(&mut rng, problem.n());
    let client_dims = client_shares(&problem).iter().map(|s| s.columns.len()).collect();
    Ok(CompareInputs {
        a: problem.a.clone(),
        w,
        h,
        client_dims,
    })
}

pub fn crafted_inputs() -> CompareInputs {
    let ci = crafted_instance();
    CompareInputs {
        a: ci.a,
        w: ci.w,
        h: ci.h,
        client_dims: ci.client_dims,
    }
}

pub fn run_compare(inputs: &CompareInputs, config: &CompareConfig) -> CliResult<Vec<ModelOutcome>> {
    let d = inputs.a.nrows();
    let sizes = match (config.sizes, config.sketch) {
        (Some(s), _) => s,
        (None, SketchKind::Identity) => [d; 4],
        (None, _) => return Err(CliError::Usage("non-identity sketches need --b1 --b2 --b3 --b4".into())),
    };
    let sketches = SketchSet::generate(config.sketch, sizes, d, config.seed)?;
    Ok(compare_models(
        &inputs.a,
        &inputs.w,
        &inputs.h,
        config.t,
        &inputs.client_dims,
        &sketches,
    )?)
}

pub const COMPARE_HEADER: &str = "model,correct,uplink_words,downlink_words,deviation";

pub fn write_compare<W: Write>(out: W, rows: &[ModelOutcome]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| CliError::io("compare", e.into());
    w.write_record(COMPARE_HEADER.split(',')).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.model.name().to_string(),
            r.correct.to_string(),
            r.uplink_words.to_string(),
            r.downlink_words.to_string(),
            format!("{:.3e}", r.deviation),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::io("compare", e))
}

pub fn cmd_compare(problem: Option<&Path>, config: &CompareConfig) -> CliResult<Vec<ModelOutcome>> {
    let inputs = match problem {
        Some(path) => compare_inputs(&load_problem(path)?.1, config)?,
        None => crafted_inputs(),
    };
    run_compare(&inputs, config)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GenKind {
    BoxLp { n: usize, d: usize },
    LeastSquaresErm { points: usize, features: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenConfig {
    pub kind: GenKind,
    pub seed: Option<u64>,
    pub clients: usize,
    /// Allow a box LP too large for vertex enumeration, written without a reference optimum.
    pub skip_reference: bool,
}

pub fn gen_problem(config: &GenConfig) -> CliResult<ProblemFile> {
    if config.clients == 0 {
        return Err(CliError::Usage("clients must be positive".into()));
    }
    let (problem, ref_opt, seed) = match config.kind {
        GenKind::BoxLp { n, d } => {
            if n == 0 || d == 0 {
                return Err(CliError::Usage("n and d must be positive".into()));
            }
            if n > MAX_ENUMERATION_N && !config.skip_reference {
                return Err(Error::SizeTooLarge {
                    n,
                    limit: MAX_ENUMERATION_N,
                }
                .into());
            }
            let (p, opt) = boxlp(n, d, config.seed)?;
            (p, opt, config.seed)
        }
        GenKind::LeastSquaresErm { points, features } => {
            if points == 0 || features == 0 {
                return Err(CliError::Usage("points and features must be positive".into()));
            }
            let seed = config.seed.unwrap_or(0);
            let (reduction, value) = least_squares_erm(points, features, seed)?;
            (reduction.problem, Some(value), Some(seed))
        }
    };
    let problem = problem.clone().with_owners(even_owners(problem.m(), config.clients)?)?;
    Ok(ProblemFile::from_problem(&problem, seed, ref_opt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use fedipm_core::fednet::baseline::Model;

    #[test]
    fn seedless_small_boxlp_is_the_desk_lp() {
        let file = gen_problem(&GenConfig {
            kind: GenKind::BoxLp { n: 2, d: 1 },
            seed: None,
            clients: 1,
            skip_reference: false,
        })
        .unwrap();
        assert_eq!(file.a, vec![vec![1.0, 1.0]]);
        assert_eq!(file.b, vec![1.0]);
        assert_eq!(file.c, vec![1.0, 0.0]);
        assert_eq!(file.ref_opt, Some(0.0));
    }

    #[test]
    fn oversized_boxlp_needs_opt_out() {
        let mut cfg = GenConfig {
            kind: GenKind::BoxLp { n: 17, d: 2 },
            seed: Some(1),
            clients: 2,
            skip_reference: false,
        };
        assert!(matches!(
            gen_problem(&cfg),
            Err(CliError::Solver(Error::SizeTooLarge { n: 17, limit: 16 }))
        ));
        cfg.skip_reference = true;
        let file = gen_problem(&cfg).unwrap();
        assert_eq!(file.ref_opt, None);
        assert_eq!(file.blocks.last().unwrap().client, 1);
    }

    #[test]
    fn sizes_required_unless_identity() {
        let (p, _) = boxlp(4, 2, Some(0)).unwrap();
        let mut cfg = RunConfig::new(RunMode::Sketched);
        assert!(matches!(cfg.solve_options(&p), Err(CliError::Usage(_))));
        cfg.sketch = SketchKind::Identity;
        let opts = cfg.solve_options(&p).unwrap();
        assert!(matches!(opts.mode, SolveMode::Sketched(s) if s.sizes == [2; 4]));
        cfg.delta = 1.0;
        assert!(cfg.solve_options(&p).is_err());
    }

    #[test]
    fn bench_identity_rows_are_exact() {
        let rows = bench_sketch(&BenchConfig {
            d: 4,
            b_list: vec![4],
            trials: 5,
            seed: 2,
            sketch: SketchKind::Identity,
        })
        .unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].bilinear_gap.q75 < 1e-12 * rows[0].gap_scale.max(1.0));
        assert!(rows[0].two_sketch.q75 < 1e-12);
    }

    #[test]
    fn compare_on_a_problem_with_one_client() {
        let (p, _) = boxlp(5, 2, Some(4)).unwrap();
        let cfg = CompareConfig {
            sketch: SketchKind::Identity,
            sizes: None,
            seed: 3,
            t: 0.7,
            clients: None,
        };
        let rows = run_compare(&compare_inputs(&p, &cfg).unwrap(), &cfg).unwrap();
        assert!(rows.iter().all(|r| r.correct));
        let full = rows.iter().find(|r| r.model == Model::FullWeights).unwrap();
        assert_eq!(full.uplink_words, 25 + 5);
    }
}
