//! Acceptance gate. Runs each criterion in turn, prints one PASS/FAIL line
//! per criterion and exits non-zero if any failed.
//!
//! Runs without the libtest harness so the timed criteria never share the
//! CPU with each other.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use jdrdl::check::{run_gradcheck, GradCheckConfig};
use jdrdl::features::synthetic_spd_dataset;
use jdrdl::model::{train_with_report, HyperParams};
use jdrdl::random;
use jdrdl::spd::{airm_dist_sq, spd_fn, sym_exp, MatrixFunction};
use jdrdl::spg::{self, kkt_residual, NonnegVector, SpgOptions, SpgStatus};
use jdrdl_cli::benchmark::{run_benchmark, BenchmarkResult};
use jdrdl_cli::config::ExperimentConfig;
use jdrdl_cli::data::load_dataset;
use nalgebra::{DMatrix, DVector};

type Verdict = (bool, String);

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

fn rel_err_scalar(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// Σ ln² of the eigenvalues of A⁻¹B, through LU and a general Schur form.
fn dist_oracle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let a_inv = a.clone().lu().try_inverse().expect("invertible");
    let ev = (a_inv * b).schur().eigenvalues().expect("real spectrum");
    ev.iter().map(|l| l.ln().powi(2)).sum()
}

fn geometry() -> Verdict {
    let mut rng = random::seeded(2024);
    let sizes = [2, 3, 4, 6, 8, 12, 16];
    let (mut dist, mut inv, mut round) = (0.0f64, 0.0f64, 0.0f64);
    for case in 0..200 {
        let n = sizes[case % sizes.len()];
        let a = random::spd_with_spread(n, 1.0, &mut rng);
        let b = random::spd_with_spread(n, 1.0, &mut rng);

        let d = airm_dist_sq(&a, &b).unwrap();
        dist = dist.max(rel_err_scalar(d, dist_oracle(a.matrix(), b.matrix())));

        // singular values in [0.5, 2]
        let s = DMatrix::from_fn(n, n, |i, j| if i == j { 0.5 + 1.5 * (i as f64) / (n - 1) as f64 } else { 0.0 });
        let g = random::stiefel(n, n, &mut rng).matrix() * s * random::stiefel(n, n, &mut rng).matrix();
        let ga = a.congruence(&g.transpose()).unwrap();
        let gb = b.congruence(&g.transpose()).unwrap();
        inv = inv.max(rel_err_scalar(airm_dist_sq(&ga, &gb).unwrap(), d));

        let x = a.matrix();
        let id = DMatrix::identity(n, n);
        let log = spd_fn(&a, MatrixFunction::Log);
        let sqrt = spd_fn(&a, MatrixFunction::Sqrt);
        let isqrt = spd_fn(&a, MatrixFunction::InvSqrt);
        let inverse = spd_fn(&a, MatrixFunction::Inv);
        let exp_back = sym_exp(&log).unwrap();
        let log_back = spd_fn(&sym_exp(&log).unwrap(), MatrixFunction::Log);
        let errs = [
            rel_err(exp_back.matrix(), x),
            rel_err(&log_back, &log),
            rel_err(&(&sqrt * &sqrt), x),
            rel_err(&(&isqrt * x * &isqrt), &id),
            rel_err(&(&inverse * x), &id),
            rel_err(&(&isqrt * &isqrt), &inverse),
        ];
        round = errs.iter().fold(round, |m, &e| m.max(e));
    }
    let ok = dist < 1e-8 && inv < 1e-8 && round < 1e-9;
    (ok, format!("dist {dist:.1e}, invariance {inv:.1e}, round trips {round:.1e}"))
}

fn gradients() -> Verdict {
    let cfg = GradCheckConfig::default();
    let report = run_gradcheck(&cfg).unwrap();
    let terms: Vec<String> = report
        .terms
        .iter()
        .map(|t| format!("{} {:.1e}", t.name, t.worst_rel_err))
        .collect();
    let ok = report.passed() && report.worst() < 1e-5;
    (ok, terms.join(", "))
}

/// Minimiser of ½‖Bx − y‖² over x ≥ 0 by enumerating every support.
fn nnls_oracle(b: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let h = b.ncols();
    let q = b.transpose() * b;
    let c = b.transpose() * y;
    let mut best = (0.5 * y.norm_squared(), DVector::zeros(h));
    for mask in 1u32..(1 << h) {
        let support: Vec<usize> = (0..h).filter(|i| mask >> i & 1 == 1).collect();
        let qs = DMatrix::from_fn(support.len(), support.len(), |i, j| q[(support[i], support[j])]);
        let cs = DVector::from_fn(support.len(), |i, _| c[support[i]]);
        let Some(xs) = qs.lu().solve(&cs) else { continue };
        if xs.iter().any(|&v| v < 0.0) {
            continue;
        }
        let mut x = DVector::zeros(h);
        for (k, &i) in support.iter().enumerate() {
            x[i] = xs[k];
        }
        let f = 0.5 * (b * &x - y).norm_squared();
        if f < best.0 {
            best = (f, x);
        }
    }
    best.1
}

fn convex_solver() -> Verdict {
    let mut rng = random::seeded(77);
    let opts = SpgOptions::default();
    let (mut worst_x, mut worst_kkt, mut worst_cost, mut failures, mut misses) = (0.0f64, 0.0f64, 0.0f64, 0, 0);
    for _ in 0..50 {
        let b = random::gaussian_matrix(10, 6, &mut rng);
        let y = random::gaussian_matrix(10, 1, &mut rng).column(0).into_owned();
        let want = nnls_oracle(&b, &y);
        let cost = |x: &DVector<f64>| 0.5 * (&b * x - &y).norm_squared();
        let grad = |x: &DVector<f64>| b.transpose() * (&b * x - &y);
        let res = spg::solve(cost, grad, &NonnegVector::zeros(6), &opts).unwrap();
        let x = res.x.as_vector();
        let gap = (x - &want).amax();
        worst_x = worst_x.max(gap);
        if gap >= 1e-6 {
            misses += 1;
        }
        worst_cost = worst_cost.max(res.cost - cost(&want));
        if res.status == SpgStatus::Success {
            worst_kkt = worst_kkt.max(kkt_residual(x, &grad(x)));
        } else {
            failures += 1;
        }
    }
    let ok = worst_x < 1e-6 && worst_kkt < 1e-6;
    (
        ok,
        format!(
            "max |x - oracle| {worst_x:.1e} ({misses}/50 beyond 1e-6), max cost gap {worst_cost:.1e}, \
             max KKT {worst_kkt:.1e}, non-converged {failures}"
        ),
    )
}

fn monotonicity() -> Verdict {
    let hyper = HyperParams {
        d: 6,
        v_w: 3,
        v_b: 3,
        ..HyperParams::default()
    };
    let (mut steps, mut worst_rise) = (0, f64::NEG_INFINITY);
    for seed in 0..5 {
        let data = synthetic_spd_dataset(3, 10, 10, 1.5, 0.5, 100 + seed).unwrap();
        let (_, report) = train_with_report(&data, &hyper, seed).unwrap();
        for pair in report.objective.windows(2) {
            worst_rise = worst_rise.max(pair[1].1.total - pair[0].1.total);
            steps += 1;
        }
    }
    (worst_rise <= 1e-8, format!("{steps} half-steps, largest change {worst_rise:.2e}"))
}

fn benchmark(name: &str, tweak: impl FnOnce(&mut ExperimentConfig)) -> BenchmarkResult {
    let mut cfg = ExperimentConfig::load(Some(&configs_dir().join(name))).unwrap();
    tweak(&mut cfg);
    cfg.validate().unwrap();
    let data = load_dataset(&cfg).unwrap();
    run_benchmark(&cfg, &data, |row| {
        eprintln!("    {name}: {} run {} accuracy {:?}", row.method, row.run, row.accuracy);
    })
    .unwrap()
}

fn mean_of(result: &BenchmarkResult, method: &str) -> f64 {
    let row = result.summary.iter().find(|s| s.method == method).unwrap();
    if row.failed > 0 {
        return f64::NAN;
    }
    row.mean
}

fn desk_scale() -> Verdict {
    let sep = benchmark("synthetic_separable.conf", |_| {});
    let overlap = benchmark("synthetic_overlap.conf", |_| {});
    let (sj, sn) = (mean_of(&sep, "jdrdl"), mean_of(&sep, "nn_airm"));
    let (oj, on) = (mean_of(&overlap, "jdrdl"), mean_of(&overlap, "nn_airm"));
    let ok = sj == 1.0 && sn == 1.0 && oj >= on;
    (ok, format!("separable jdrdl {sj:.3} nn {sn:.3}; overlap jdrdl {oj:.3} nn {on:.3}"))
}

fn mnist() -> Verdict {
    let out = tempfile::tempdir().unwrap();
    let result = benchmark("mnist_h10.conf", |cfg| cfg.out_dir = out.path().to_path_buf());
    let row = |m: &str| result.summary.iter().find(|s| s.method == m).unwrap().clone();
    let (j, n) = (row("jdrdl"), row("nn_airm"));
    let ok = j.failed == 0 && n.failed == 0 && j.mean >= 0.55 && j.mean > n.mean;
    (
        ok,
        format!(
            "jdrdl {:.3} ± {:.3}, nn_airm {:.3} ± {:.3} over {} repeats",
            j.mean, j.std, n.mean, n.std, j.runs
        ),
    )
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs_dir().join("synthetic_separable.conf");
    let run = |tag: &str| {
        let out = dir.path().join(tag);
        let status = Command::new(env!("CARGO_BIN_EXE_jdrdl"))
            .args(["benchmark", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
            .args(["--seed", "5", "--repeats", "2", "--method", "jdrdl,nn_airm,nn_stein,src_airm,rdl"])
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        let read = |f: &str| std::fs::read(out.join(f)).unwrap();
        (read("runs.csv"), read("summary.csv"))
    };
    let (a, b) = (run("first"), run("second"));
    let ok = a == b && !a.0.is_empty();
    (ok, format!("runs.csv {} bytes, summary.csv {} bytes", a.0.len(), a.1.len()))
}

fn main() {
    let criteria: [(&str, Option<Duration>, fn() -> Verdict); 7] = [
        ("geometry oracle suite", Some(Duration::from_secs(10)), geometry),
        ("gradient suite", Some(Duration::from_secs(60)), gradients),
        ("convex solver suite", None, convex_solver),
        ("alternation monotonicity", Some(Duration::from_secs(300)), monotonicity),
        ("desk-scale classification", None, desk_scale),
        ("mnist protocol", Some(Duration::from_secs(900)), mnist),
        ("benchmark determinism", None, determinism),
    ];
    // optional name filters, e.g. `cargo test --test acceptance -- mnist`
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, budget, check) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let (ok, detail) = check();
        let took = start.elapsed();
        let in_budget = budget.is_none_or(|b| took < b);
        let pass = ok && in_budget;
        if !pass {
            failed += 1;
        }
        let budget_note = budget.map(|b| format!(" / budget {}s", b.as_secs())).unwrap_or_default();
        println!(
            "{} {name} ({detail}; {:.1}s{budget_note})",
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
