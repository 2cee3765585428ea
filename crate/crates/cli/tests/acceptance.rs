//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

#[path = "../../core/tests/oracles/mod.rs"]
mod oracles;

use ndarray::{Array1, Array2};
use oracles::{finite_difference_grads, naive_kde_log_density, relative_error};
use pude::baselines::{bm25_f1_sweep, bm25_rank, Bm25Index, Bm25Params, NnpuConfig};
use pude::data::{gen_synthetic, gen_synthetic_task, SynthSpec};
use pude::ebm::{langevin_sample, mle_grad, EmTrainConfig, LangevinConfig, QuadraticEnergy};
use pude::eval::{
    default_ratio_grid, f1, label_ratio_sweep, pct_cutoff, precision_recall_at_pct, run_experiment,
    MethodSpec,
};
use pude::kde::{fit, KdeConfig};
use pude::neural::{DenseNet, Mode, NetSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

struct Outcome {
    pass: bool,
    detail: String,
}

type Criterion = (&'static str, fn() -> Outcome);

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

/// Width-32 nets, γ₀ = 5 and 20 epochs: the desk-scale EM configuration.
fn desk_em() -> EmTrainConfig {
    EmTrainConfig {
        hidden: vec![32, 32, 32],
        epochs: 20,
        gamma0: 5.0,
        ..EmTrainConfig::default()
    }
}

fn desk_nnpu(prior: f64) -> NnpuConfig {
    NnpuConfig {
        hidden: vec![32, 32, 32],
        epochs: 20,
        ..NnpuConfig::with_prior(prior)
    }
}

fn desk_task(seed: u64) -> (pude::Corpus, pude::PuTask) {
    gen_synthetic_task(&SynthSpec::two_gaussian(2, 0.5, 2000, seed), 50).expect("synthetic task")
}

fn kde_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for pair in 0..1000 {
        let d = [1, 2, 5, 50][pair % 4];
        let n = rng.random_range(1..200);
        let h = rng.random_range(0.5..2.5);
        let support = Array2::from_shape_simple_fn((n, d), || rng.random_range(-1.0..1.0));
        let q: Vec<f64> = (0..d).map(|_| rng.random_range(-1.5..1.5)).collect();
        let model = fit(support.clone(), h).expect("fit");
        let got = model
            .log_density(Array1::from(q.clone()).view())
            .expect("density");
        worst = worst.max(relative_error(
            got,
            naive_kde_log_density(&support, h, &q),
            1e-300,
        ));
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-12 && elapsed < Duration::from_secs(10),
        format!("max relative error {worst:.2e} over 1000 pairs, {elapsed:.2?}"),
    )
}

fn kde_normalization() -> Outcome {
    let support = ndarray::array![[-0.7], [0.1], [0.3], [1.8]];
    let h = 1.9;
    let model = fit(support, h).expect("fit");
    let (lo, hi) = (-0.7 - 6.0 * h, 1.8 + 6.0 * h);
    let steps = 20_000;
    let dx = (hi - lo) / steps as f64;
    let f = |x: f64| {
        model
            .log_density(ndarray::array![x].view())
            .expect("density")
            .exp()
    };
    let integral: f64 = (0..steps)
        .map(|i| 0.5 * dx * (f(lo + i as f64 * dx) + f(lo + (i + 1) as f64 * dx)))
        .sum();
    outcome(
        (integral - 1.0).abs() <= 1e-3,
        format!("trapezoid integral {integral:.6}"),
    )
}

fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for case in 0..100u64 {
        let spec = NetSpec {
            input: rng.random_range(1..5),
            hidden: (0..rng.random_range(1..4))
                .map(|_| rng.random_range(1..7))
                .collect(),
            output: rng.random_range(1..3),
            batch_norm: case % 2 == 0,
        };
        let mut net = DenseNet::init(&spec, case).expect("net");
        // Zero initial biases put pre-activations on the leaky-ReLU kink.
        for group in net.param_slices_mut() {
            group
                .iter_mut()
                .for_each(|v| *v += rng.random_range(-0.5..0.5));
        }
        let rows = rng.random_range(2..6);
        let x = Array2::from_shape_simple_fn((rows, spec.input), || rng.random_range(-2.0..2.0));
        let up = Array2::from_shape_simple_fn((rows, spec.output), || rng.random_range(-1.0..1.0));
        let mode = if case % 4 < 2 {
            Mode::Train
        } else {
            Mode::Eval
        };
        let (_, cache) = net.forward_pass(x.view(), mode).expect("forward");
        let analytic = net.backward(&cache, up.view()).expect("backward");
        let (fd_params, fd_input) = finite_difference_grads(&net, &x, mode, &up, 1e-5);
        for (a, n) in analytic.param_slices().iter().zip(&fd_params) {
            for (&a, &n) in a.iter().zip(n) {
                worst = worst.max(relative_error(a, n, 1e-6));
            }
        }
        for (&a, &n) in analytic.input.iter().zip(fd_input.iter()) {
            worst = worst.max(relative_error(a, n, 1e-6));
        }
    }
    outcome(
        worst <= 1e-4,
        format!("max relative error {worst:.2e} over 100 configurations (|g| floor 1e-6)"),
    )
}

fn langevin_stationarity() -> Outcome {
    let cfg = LangevinConfig {
        step_size: 0.01,
        steps: 2000,
        ..LangevinConfig::default()
    };
    let mut ok = true;
    let mut parts = Vec::new();
    for seed in 0..3u64 {
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let init = Array2::from_shape_simple_fn((2000, 2), || rng.random_range(-3.0..3.0));
        let x = langevin_sample(&QuadraticEnergy { dim: 2 }, &cfg, init, seed).expect("chains");
        let elapsed = start.elapsed();
        for col in x.columns() {
            let (m, v) = (col.mean().expect("non-empty"), col.var(0.0));
            ok &= (-0.1..=0.1).contains(&m) && (0.85..=1.15).contains(&v);
            parts.push(format!("({m:+.3}, {v:.3})"));
        }
        ok &= elapsed < Duration::from_secs(60);
        parts.push(format!("{elapsed:.1?}"));
    }
    outcome(
        ok,
        format!("(mean, variance) per coordinate: {}", parts.join(" ")),
    )
}

fn mle_grad_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut zero = 0;
    for case in 0..100u64 {
        let spec = NetSpec {
            input: rng.random_range(1..6),
            hidden: (0..rng.random_range(1..4))
                .map(|_| rng.random_range(1..9))
                .collect(),
            output: 1,
            batch_norm: case % 2 == 1,
        };
        let net = DenseNet::init(&spec, case).expect("net");
        let x = Array2::from_shape_simple_fn((rng.random_range(2..20), spec.input), || {
            rng.random_range(-3.0..3.0)
        });
        let mode = if case % 4 < 2 {
            Mode::Train
        } else {
            Mode::Eval
        };
        let (g, loss) = mle_grad(&net, x.view(), x.view(), mode).expect("grad");
        if g.is_zero() && loss == 0.0 {
            zero += 1;
        }
    }
    outcome(
        zero == 100,
        format!("{zero}/100 matched batches gave exactly zero"),
    )
}

fn end_to_end() -> Outcome {
    let start = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    for seed in 0..3u64 {
        let (corpus, task) = desk_task(seed);
        for spec in [
            MethodSpec::PudeKde(KdeConfig::default()),
            MethodSpec::PudeEm(desk_em()),
        ] {
            let f = run_experiment(&corpus, &task, &spec, None, seed)
                .expect("run")
                .summary
                .f1;
            ok &= f >= 0.90;
            parts.push(format!("{}[{seed}]={f:.3}", spec.name()));
        }
    }
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(600);
    outcome(ok, format!("{} in {elapsed:.1?}", parts.join(" ")))
}

fn prior_contrast() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for seed in 0..3u64 {
        let (corpus, task) = desk_task(seed);
        let run = |p| {
            run_experiment(&corpus, &task, &MethodSpec::Nnpu(desk_nnpu(p)), None, seed)
                .expect("nnpu")
                .summary
                .f1
        };
        let (right, wrong) = (run(0.5), run(0.1));
        ok &= wrong < right;
        parts.push(format!("seed {seed}: π=0.5 {right:.3} vs π=0.1 {wrong:.3}"));
    }
    outcome(ok, parts.join("; "))
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        for &k in &idx[i..=j] {
            ranks[k] = (i + j) as f64 / 2.0 + 1.0;
        }
        i = j + 1;
    }
    ranks
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn label_ratio_shape() -> Outcome {
    let start = Instant::now();
    let unlabelled = gen_synthetic(&SynthSpec::two_gaussian(2, 0.5, 2000, 40)).expect("U");
    let mut pool_spec = SynthSpec::two_gaussian(2, 1.0, 2000, 41);
    pool_spec.id_prefix = "lp".into();
    let pool = gen_synthetic(&pool_spec).expect("pool");
    let grid = default_ratio_grid();
    let seeds = [0, 1, 2];
    let rows = label_ratio_sweep(
        &pool,
        &unlabelled,
        &grid,
        &[MethodSpec::PudeEm(desk_em())],
        &seeds,
        1,
    )
    .expect("sweep");
    let mean: Vec<f64> = grid
        .iter()
        .map(|&r| {
            rows.iter()
                .filter(|row| row.ratio == r)
                .map(|row| row.f1)
                .sum::<f64>()
                / seeds.len() as f64
        })
        .collect();
    let rho = spearman(&grid, &mean);
    let (at_001, at_010) = (mean[0], mean[9]);
    let curve: Vec<String> = mean.iter().map(|f| format!("{f:.3}")).collect();
    outcome(
        at_010 >= at_001 && rho >= 0.7,
        format!(
            "F1(0.01)={at_001:.3} F1(0.10)={at_010:.3} Spearman ρ={rho:.3} curve [{}] in {:.1?}",
            curve.join(" "),
            start.elapsed()
        ),
    )
}

fn metric_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..40);
        let truth: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        let pred: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        let got = f1(&pred, &truth).expect("f1");
        let want = oracles::prf(oracles::confusion(&pred, &truth));
        let k = rng.random_range(1..=100usize);
        let (p, r) = precision_recall_at_pct(&truth, k as f64).expect("p@k");
        let cutoff = (k * n).div_ceil(100).max(1);
        let (bp, br, _) = oracles::prf(oracles::confusion(
            &oracles::top_k_predictions(n, cutoff),
            &truth,
        ));
        if (got.precision, got.recall, got.f1) != want || (p, r) != (bp, br) {
            mismatches += 1;
        }
    }
    let covid: Vec<bool> = (0..4722).map(|i| i < 2310).collect();
    let all = f1(&vec![true; 4722], &covid).expect("f1");
    let (p10, r10) = precision_recall_at_pct(&covid, 10.0).expect("p@10");
    let covid_ok = all.precision == 2310.0 / 4722.0
        && all.recall == 1.0
        && (all.f1 - 0.6570).abs() < 5e-5
        && pct_cutoff(4722, 10.0).ok() == Some(473)
        && p10 == 1.0
        && r10 == 473.0 / 2310.0;
    outcome(
        mismatches == 0 && covid_ok,
        format!(
            "{mismatches} mismatches in 1000 instances; predict-all F1 {:.4}, R@10% = {r10:.4} (473/2310)",
            all.f1
        ),
    )
}

fn bm25_hand_case() -> Outcome {
    let toks = |s: &str| s.split_whitespace().map(String::from).collect::<Vec<_>>();
    let idx = Bm25Index::build(
        [
            ("d1", toks("apple banana")),
            ("d2", toks("apple apple cherry")),
            ("d3", toks("banana")),
        ],
        Bm25Params::default(),
    )
    .expect("index");
    let ids: Vec<String> = ["d1", "d2", "d3"].iter().map(|s| s.to_string()).collect();
    let ranked = bm25_rank(&idx, &[toks("apple"), toks("cherry")], &ids).expect("rank");
    // idf(apple) = ln 1.6, idf(cherry) = ln(8/3), d2 length norm 1.375.
    let expected = [
        ("d2", 1.380853059569857),
        ("d1", 0.47000362924573563),
        ("d3", 0.0),
    ];
    let mut worst: f64 = 0.0;
    let mut order_ok = true;
    for ((id, s), (eid, e)) in ranked.iter().zip(expected) {
        order_ok &= id == eid;
        worst = worst.max((s - e).abs());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut sweep_mismatch = 0;
    for _ in 0..300 {
        let n = rng.random_range(1..120);
        let ranked: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
        let k_min = rng.random_range(1..=n);
        let k_max = k_min + rng.random_range(0..150);
        let s = bm25_f1_sweep(&ranked, k_min, k_max).expect("sweep");
        let per_k: Vec<f64> = (k_min..=k_max.min(n))
            .map(|k| {
                oracles::prf(oracles::confusion(
                    &oracles::top_k_predictions(n, k),
                    &ranked,
                ))
                .2
            })
            .collect();
        let m = per_k.len() as f64;
        let mean = per_k.iter().sum::<f64>() / m;
        let std = (per_k.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / m).sqrt();
        if s.mean_f1 != mean || s.std_f1 != std {
            sweep_mismatch += 1;
        }
    }
    outcome(
        order_ok && worst <= 1e-9 && sweep_mismatch == 0,
        format!("max score error {worst:.1e}; {sweep_mismatch}/300 sweeps differ from brute force"),
    )
}

fn pude(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_pude"))
        .args(args)
        .output()
        .expect("spawn pude")
}

fn pipeline(dir: &Path, tag: &str, method_args: &[&str]) -> Vec<u8> {
    let corpus = dir.join("synth/corpus.pue");
    let model = dir.join(format!("{tag}-model"));
    let eval = dir.join(format!("{tag}-eval"));
    let mut train = vec![
        "train",
        "--corpus",
        corpus.to_str().unwrap(),
        "--lp-count",
        "50",
        "--seed",
        "9",
        "--out",
    ];
    train.push(model.to_str().unwrap());
    train.extend_from_slice(method_args);
    assert!(pude(&train).status.success(), "train {tag}");
    let out = pude(&[
        "eval",
        "--model",
        model.to_str().unwrap(),
        "--out",
        eval.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "eval {tag}");
    std::fs::read(eval.join("report.jsonl")).expect("report")
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().expect("tempdir");
    let synth = dir.path().join("synth");
    let status = pude(&[
        "synth",
        "--n",
        "1000",
        "--seed",
        "3",
        "--out",
        synth.to_str().unwrap(),
    ])
    .status;
    if !status.success() {
        return outcome(false, "synth failed");
    }
    let methods: [(&str, &[&str]); 3] = [
        ("pude-kde", &["--method", "pude-kde"]),
        (
            "pude-em",
            &["--method", "pude-em", "--hidden", "16,16", "--epochs", "5"],
        ),
        (
            "nnpu",
            &[
                "--method", "nnpu", "--prior", "0.5", "--hidden", "16,16", "--epochs", "5",
            ],
        ),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, args) in methods {
        let a = pipeline(dir.path(), &format!("{name}-a"), args);
        let b = pipeline(dir.path(), &format!("{name}-b"), args);
        ok &= a == b && !a.is_empty();
        parts.push(format!(
            "{name}: {} bytes {}",
            a.len(),
            if a == b { "identical" } else { "DIFFER" }
        ));
    }
    outcome(ok, parts.join("; "))
}

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("KDE oracle equivalence", kde_oracle),
        ("KDE normalization", kde_normalization),
        ("Gradient correctness", gradient_check),
        ("Langevin stationarity", langevin_stationarity),
        ("mle_grad exactness", mle_grad_exactness),
        ("End-to-end synthetic DSE", end_to_end),
        ("Prior-free contrast", prior_contrast),
        ("Label-ratio sweep shape", label_ratio_shape),
        ("Metric oracle equivalence", metric_oracle),
        ("BM25 hand case and sweep", bm25_hand_case),
        ("Train+eval determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (name, check) in criteria {
        if !filter.is_empty()
            && !filter
                .iter()
                .any(|f| name.to_lowercase().contains(&f.to_lowercase()))
        {
            continue;
        }
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| outcome(false, "panicked"));
        println!(
            "[{}] {name}: {}",
            if result.pass { "PASS" } else { "FAIL" },
            result.detail
        );
        if !result.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
