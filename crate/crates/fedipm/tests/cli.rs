use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fedipm::problem_file::ProblemFile;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

fn fedipm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedipm"))
        .args(args)
        .output()
        .expect("run fedipm")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen(dir: &Path, name: &str, args: &[&str]) -> PathBuf {
    let out = dir.join(name);
    let mut all = vec!["gen-problem"];
    all.extend_from_slice(args);
    all.extend_from_slice(&["--out", path_str(&out)]);
    let res = fedipm(&all);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    out
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn stdout_csv(out: &Output) -> Vec<Vec<String>> {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone())
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn generated_files_round_trip_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    for (name, args) in [
        ("box.json", vec!["boxlp", "--n", "7", "--d", "3", "--seed", "21", "--clients", "3"]),
        ("erm.json", vec!["least-squares-erm", "--points", "4", "--features", "2", "--seed", "5"]),
    ] {
        let path = gen(dir.path(), name, &args);
        let original = fs::read(&path).unwrap();
        let file = ProblemFile::load(&path).unwrap();
        file.to_problem().unwrap();
        let copy = dir.path().join(format!("copy-{name}"));
        file.save(&copy).unwrap();
        assert_eq!(fs::read(&copy).unwrap(), original, "{name}");
    }
}

#[test]
fn seedless_two_variable_boxlp_is_the_desk_lp() {
    let dir = tempfile::tempdir().unwrap();
    let v = json(&gen(dir.path(), "desk.json", &["boxlp", "--n", "2", "--d", "1"]));
    assert_eq!(v["A"], serde_json::json!([[1.0, 1.0]]));
    assert_eq!(v["b"], serde_json::json!([1.0]));
    assert_eq!(v["c"], serde_json::json!([1.0, 0.0]));
    assert_eq!(v["ref_opt"], serde_json::json!(0.0));
    assert!(v.get("seed").is_none());
}

#[test]
fn oversized_boxlp_is_refused() {
    let out = fedipm(&["gen-problem", "boxlp", "--n", "17", "--d", "2", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["message"].as_str().unwrap().contains("n <= 16"));
}

/// `min ||D x + o||²` for two points and one feature, in closed form.
fn one_feature_least_squares(data: [f64; 2], offsets: [f64; 2]) -> f64 {
    let x = -(data[0] * offsets[0] + data[1] * offsets[1]) / (data[0] * data[0] + data[1] * data[1]);
    (data[0] * x + offsets[0]).powi(2) + (data[1] * x + offsets[1]).powi(2)
}

#[test]
fn least_squares_reduction_matches_normal_equations() {
    let dir = tempfile::tempdir().unwrap();
    let path = gen(dir.path(), "ls.json", &["least-squares-erm", "--points", "2", "--features", "1", "--seed", "9"]);
    let file = ProblemFile::load(&path).unwrap();
    // Columns: model coordinate, then (y_i, z_i) per point with D x - y = -o.
    assert_eq!((file.d, file.n), (2, 5));
    let data = [file.a[0][0], file.a[1][0]];
    let offsets = [-file.b[0], -file.b[1]];
    let oracle = one_feature_least_squares(data, offsets);
    let embedded = file.ref_opt.unwrap();
    assert!((embedded - oracle).abs() <= 1e-12 * oracle.max(1.0), "{embedded} vs {oracle}");

    // The conic program attains the oracle value at the fitted model.
    let problem = file.to_problem().unwrap();
    let x = -(data[0] * offsets[0] + data[1] * offsets[1]) / (data[0] * data[0] + data[1] * data[1]);
    let y: Vec<f64> = (0..2).map(|i| data[i] * x + offsets[i]).collect();
    let point = fedipm_core::DVector::from_vec(vec![x, y[0], y[0] * y[0], y[1], y[1] * y[1]]);
    assert!((&problem.a * &point - &problem.b).amax() < 1e-12);
    assert!((problem.c.dot(&point) - oracle).abs() < 1e-12 * oracle.max(1.0));
}

#[test]
fn malformed_json_exits_2_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\n  \"version\": 1,\n  \"d\": 1,,\n}\n").unwrap();
    let out = fedipm(&["solve", "--problem", path_str(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["kind"], "malformed_json");
    assert_eq!(err["line"], 3);
    assert_eq!(err["column"], 10);
    assert_eq!(err["exit_code"], 2);
}

#[test]
fn invalid_problem_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = gen(dir.path(), "p.json", &["boxlp", "--n", "3", "--d", "1", "--seed", "1"]);
    let mut v = json(&path);
    v["c"] = serde_json::json!([1.0]);
    fs::write(&path, v.to_string()).unwrap();
    let out = fedipm(&["solve", "--problem", path_str(&path)]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["kind"], "invalid_problem");
}

#[test]
fn desk_lp_exact_solve_meets_the_accuracy_bound() {
    let dir = tempfile::tempdir().unwrap();
    let problem = gen(dir.path(), "desk.json", &["boxlp", "--n", "2", "--d", "1"]);
    let summary = dir.path().join("summary.json");
    let trace = dir.path().join("trace.csv");
    let out = fedipm(&[
        "solve",
        "--problem",
        path_str(&problem),
        "--mode",
        "exact",
        "--delta",
        "0.3",
        "--out-trace",
        path_str(&trace),
        "--out-summary",
        path_str(&summary),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s = json(&summary);
    for key in [
        "objective",
        "ax_minus_b_l1",
        "rounds",
        "uplink_words",
        "downlink_words",
        "t_tilde_final",
        "slack",
    ] {
        assert!(s.get(key).is_some(), "summary lacks {key}");
    }
    let objective = s["objective"].as_f64().unwrap();
    // L = 1, R = sqrt 2
    assert!(objective <= 0.0 + 2f64.sqrt() * 0.3, "objective {objective}");
    assert_eq!(s["within_bound"], true);
    let rows = fs::read_to_string(&trace).unwrap().lines().count() as u64;
    assert_eq!(rows, s["rounds"].as_u64().unwrap() + 2);
}

fn path_columns(trace: &str) -> String {
    trace
        .lines()
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            [f[0], f[1], f[2], f[3], f[4], f[7]].join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn federated_identity_trace_equals_exact_trace() {
    let dir = tempfile::tempdir().unwrap();
    let problem = gen(dir.path(), "p.json", &["boxlp", "--n", "6", "--d", "2", "--seed", "3", "--clients", "2"]);
    let run = |mode: &str, name: &str| {
        let trace = dir.path().join(name);
        let out = fedipm(&[
            "solve",
            "--problem",
            path_str(&problem),
            "--mode",
            mode,
            "--sketch",
            "identity",
            "--delta",
            "0.3",
            "--max-iters",
            "4000",
            "--out-trace",
            path_str(&trace),
            "--out-summary",
            path_str(&dir.path().join(format!("{name}.json"))),
        ]);
        // The cap is reported but the trace is still written.
        assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
        fs::read_to_string(trace).unwrap()
    };
    let exact = run("exact", "exact.csv");
    let fed = run("federated", "fed.csv");
    assert_eq!(exact.lines().count(), 4002);
    assert_eq!(path_columns(&exact), path_columns(&fed));
    // Word columns: zero for a single machine, the per-round ledger for the protocol.
    let last: Vec<&str> = fed.lines().last().unwrap().split(',').collect();
    assert!(last[5].parse::<u64>().unwrap() > 0);
    assert!(exact.lines().skip(1).all(|l| l.split(',').nth(5) == Some("0")));
}

#[test]
fn bench_sketch_is_deterministic_with_one_row_per_size() {
    let args = ["bench-sketch", "--d", "8", "--b-list", "8,32,128", "--trials", "30", "--seed", "4"];
    let a = fedipm(&args);
    let b = fedipm(&args);
    assert_eq!(a.stdout, b.stdout);
    let rows = stdout_csv(&a);
    assert_eq!(rows.len(), 1 + 3);
    assert_eq!(rows[0][0], "b");
}

#[test]
fn bench_identity_sketch_has_no_gap() {
    let rows = stdout_csv(&fedipm(&[
        "bench-sketch",
        "--d",
        "6",
        "--b-list",
        "6",
        "--trials",
        "10",
        "--sketch",
        "identity",
    ]));
    let r = &rows[1];
    let scale: f64 = r[4].parse().unwrap();
    for col in [1, 2, 3] {
        assert!(r[col].parse::<f64>().unwrap() <= 1e-12 * scale);
    }
    for col in [5, 6, 7] {
        assert_eq!(r[col].parse::<f64>().unwrap(), 0.0);
    }
}

/// Median `|u^T R^T R S^T S v - u^T v|` with independent `±1/sqrt(b)` sketches.
fn two_sketch_oracle(d: usize, b: usize, trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = |rng: &mut ChaCha8Rng| {
        let v: Vec<f64> = (0..d).map(|_| (rng.next_u32() as f64 / u32::MAX as f64) - 0.5).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / norm).collect::<Vec<_>>()
    };
    let u = unit(&mut rng);
    let v = unit(&mut rng);
    let exact: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
    let mut errs: Vec<f64> = (0..trials)
        .map(|_| {
            let mut sketch_apply = |x: &[f64]| {
                let scale = 1.0 / (b as f64).sqrt();
                let signs: Vec<f64> = (0..b * d)
                    .map(|_| if rng.next_u32() & 1 == 0 { scale } else { -scale })
                    .collect();
                let rx: Vec<f64> = (0..b).map(|i| (0..d).map(|j| signs[i * d + j] * x[j]).sum()).collect();
                (0..d).map(|j| (0..b).map(|i| signs[i * d + j] * rx[i]).sum()).collect::<Vec<f64>>()
            };
            let ru = sketch_apply(&u);
            let sv = sketch_apply(&v);
            (ru.iter().zip(&sv).map(|(a, b)| a * b).sum::<f64>() - exact).abs()
        })
        .collect();
    errs.sort_by(f64::total_cmp);
    errs[trials / 2]
}

#[test]
fn quadrupling_b_shrinks_the_median_error() {
    let d = 16;
    let sizes = [16usize, 64, 256];
    let oracle: Vec<f64> = sizes.iter().map(|&b| two_sketch_oracle(d, b, 400, 77)).collect();
    for w in oracle.windows(2) {
        assert!((1.3..=3.0).contains(&(w[0] / w[1])), "oracle ratio {}", w[0] / w[1]);
    }
    let rows = stdout_csv(&fedipm(&[
        "bench-sketch",
        "--d",
        "16",
        "--b-list",
        "16,64,256,1024",
        "--trials",
        "400",
        "--seed",
        "77",
    ]));
    let col = |row: usize, c: usize| rows[row][c].parse::<f64>().unwrap();
    for (r, b) in rows.iter().enumerate().skip(1).take(2) {
        let ratio = col(r, 6) / col(r + 1, 6);
        assert!((1.3..=3.0).contains(&ratio), "two-sketch ratio {ratio} at b={}", b[0]);
    }
    // The bilinear gap settles into the same band once b is well above d.
    let ratio = col(3, 2) / col(4, 2);
    assert!((1.3..=3.0).contains(&ratio), "bilinear ratio {ratio}");
}

#[test]
fn crafted_instance_comparison_pattern() {
    let rows = stdout_csv(&fedipm(&["compare-models"]));
    assert_eq!(rows[0].join(","), "model,correct,uplink_words,downlink_words,deviation");
    let row = |name: &str| rows.iter().find(|r| r[0] == name).unwrap().clone();
    let dev = |r: &[String]| r[4].parse::<f64>().unwrap();
    for naive in ["model1-local-projections", "model2-local-grams"] {
        let r = row(naive);
        assert_eq!(r[1], "false");
        assert!(dev(&r) > 1e-6);
    }
    let full = row("model3-full-weights");
    assert!(dev(&full) <= 1e-10);
    // n² + n with n = 4
    assert_eq!(full[2], "20");
    // Per client n_i b1 + b2 b3 + b4 n_i + n_i up and 2 n_i + 1 down, with b = 1 and n_i = 2.
    let sketched = row("sketched");
    assert_eq!((sketched[2].as_str(), sketched[3].as_str()), ("14", "10"));
    assert_eq!(sketched[1], "true");
}

#[test]
fn single_client_models_coincide_with_exact() {
    let dir = tempfile::tempdir().unwrap();
    let problem = gen(dir.path(), "p.json", &["boxlp", "--n", "6", "--d", "2", "--seed", "8", "--clients", "3"]);
    let rows = stdout_csv(&fedipm(&["compare-models", "--problem", path_str(&problem), "--clients", "1"]));
    assert_eq!(rows.len(), 5);
    assert!(rows[1..].iter().all(|r| r[1] == "true"), "{rows:?}");
    let split = stdout_csv(&fedipm(&["compare-models", "--problem", path_str(&problem)]));
    assert_eq!(split[1][1], "false");
}

#[test]
fn solve_outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let problem = gen(dir.path(), "p.json", &["boxlp", "--n", "5", "--d", "2", "--seed", "6", "--clients", "2"]);
    let run = |name: &str| {
        let trace = dir.path().join(name);
        let out = fedipm(&[
            "solve",
            "--problem",
            path_str(&problem),
            "--mode",
            "federated",
            "--b1",
            "6",
            "--b2",
            "4",
            "--b3",
            "4",
            "--b4",
            "6",
            "--seed",
            "12",
            "--max-iters",
            "500",
            "--out-trace",
            path_str(&trace),
        ]);
        assert_eq!(out.status.code(), Some(3));
        (fs::read(trace).unwrap(), out.stdout)
    };
    assert_eq!(run("a.csv"), run("b.csv"));
}
