use crate::config::{
    file_sha256, read_json, write_json, EvalConfig, RunConfig, SweepConfig, SynthConfig, TaskSource,
};
use crate::{
    Cli, CliError, Command, CorpusArgs, EvalArgs, ModelArgs, RankArgs, SweepArgs, SynthArgs,
    TrainArgs,
};
use pude::data::{
    gen_synthetic, load_corpus, load_tokens, make_transductive_task, save_corpus, SynthSpec, Truth,
};
use pude::eval::{
    default_ratio_grid, evaluate, label_ratio_sweep, rank, score_u, train_method, write_sweep_csv,
    ThresholdPolicy, TrainedModel,
};
use pude::{Corpus, PuTask};
use serde::Serialize;
use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

const MODEL_FILE: &str = "model.bin";
const CONFIG_FILE: &str = "config.json";
const TASK_FILE: &str = "task.json";

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::EmbedCheck(a) => embed_check(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Rank(a) => rank_cmd(a),
        Command::Sweep(a) => sweep(a),
    }
}

fn out_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>, CliError> {
    std::fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", path.display())))
}

fn load_with_tokens(corpus: &Path, tokens: Option<&Path>) -> Result<Corpus, CliError> {
    let mut c = load_corpus(corpus).map_err(CliError::runtime)?;
    if let Some(t) = tokens {
        c.attach_tokens(load_tokens(t).map_err(CliError::runtime)?)
            .map_err(CliError::runtime)?;
    }
    Ok(c)
}

fn synth(a: SynthArgs) -> Result<(), CliError> {
    let mut spec = SynthSpec::two_gaussian(a.dim, a.pi, a.n, a.seed);
    if a.dim > 0 {
        spec.positive_mean[0] = a.separation;
        spec.negative_mean[0] = -a.separation;
    }
    spec.positive_std = a.std;
    spec.negative_std = a.std;
    spec.id_prefix = a.prefix;
    spec.validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let corpus = gen_synthetic(&spec).map_err(CliError::runtime)?;
    out_dir(&a.out)?;
    save_corpus(&corpus, a.out.join("corpus.pue")).map_err(CliError::runtime)?;
    write_json(
        &a.out.join("synth.json"),
        &SynthConfig {
            command: "synth".into(),
            spec,
        },
    )?;
    log::info!("wrote {} documents to {}", corpus.len(), a.out.display());
    Ok(())
}

#[derive(Serialize)]
struct CorpusSummary {
    documents: usize,
    dim: usize,
    positives: usize,
    negatives: usize,
    unlabelled_truth: usize,
    with_tokens: usize,
}

fn embed_check(a: CorpusArgs) -> Result<(), CliError> {
    let c = load_with_tokens(&a.corpus, a.tokens.as_deref())?;
    let count = |t: Option<Truth>| c.docs().iter().filter(|d| d.truth == t).count();
    let summary = CorpusSummary {
        documents: c.len(),
        dim: c.dim(),
        positives: count(Some(Truth::Positive)),
        negatives: count(Some(Truth::Negative)),
        unlabelled_truth: count(None),
        with_tokens: c.docs().iter().filter(|d| d.tokens.is_some()).count(),
    };
    println!(
        "{}",
        serde_json::to_string(&summary).expect("summary serializes")
    );
    Ok(())
}

fn train(a: TrainArgs) -> Result<(), CliError> {
    let replay = a.config.is_some();
    let cfg = match &a.config {
        Some(path) => {
            let cfg: RunConfig = read_json(path)?;
            if cfg.command != "train" {
                return Err(CliError::Config(format!(
                    "{} is not a train config",
                    path.display()
                )));
            }
            cfg.model
                .validate()
                .map_err(|e| CliError::Config(e.to_string()))?;
            cfg
        }
        None => {
            let method = a.method.expect("clap requires --method without --config");
            let corpus = a
                .corpus
                .clone()
                .expect("clap requires --corpus without --config");
            let task = match &a.task {
                Some(p) => TaskSource::File { path: p.clone() },
                None => TaskSource::Sampled {
                    lp_count: a.lp_count.unwrap_or(50),
                    task_seed: a.task_seed.unwrap_or(a.seed),
                },
            };
            RunConfig {
                command: "train".into(),
                model: a.hyper.spec(method)?,
                seed: a.seed,
                corpus_sha256: file_sha256(&corpus)?,
                corpus,
                tokens: a.tokens.clone(),
                task,
            }
        }
    };
    if replay && file_sha256(&cfg.corpus)? != cfg.corpus_sha256 {
        return Err(CliError::Config(format!(
            "{} changed since the recorded run",
            cfg.corpus.display()
        )));
    }
    let corpus = load_with_tokens(&cfg.corpus, cfg.tokens.as_deref())?;
    let task = match &cfg.task {
        TaskSource::Sampled {
            lp_count,
            task_seed,
        } => make_transductive_task(&corpus, *lp_count, *task_seed).map_err(CliError::runtime)?,
        TaskSource::File { path } => {
            let t: PuTask = read_json(path)?;
            t.validate().map_err(|e| CliError::Config(e.to_string()))?;
            t
        }
    };
    log::info!(
        "training {} on |LP| = {}, |U| = {}",
        cfg.model.name(),
        task.lp_ids.len(),
        task.u_ids.len()
    );
    let (model, trace) =
        train_method(&cfg.model, &corpus, &task, cfg.seed).map_err(CliError::runtime)?;
    out_dir(&a.out)?;
    model
        .save(a.out.join(MODEL_FILE))
        .map_err(CliError::runtime)?;
    let trace_path = a.out.join("trace.csv");
    trace
        .write_csv(create(&trace_path)?)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", trace_path.display())))?;
    write_json(&a.out.join(CONFIG_FILE), &cfg)?;
    write_json(&a.out.join(TASK_FILE), &task)
}

struct Loaded {
    cfg: RunConfig,
    task: PuTask,
    model: TrainedModel,
    corpus: Corpus,
    corpus_path: PathBuf,
}

fn load_model(a: &ModelArgs) -> Result<Loaded, CliError> {
    let cfg: RunConfig = read_json(&a.model.join(CONFIG_FILE))?;
    let task: PuTask = read_json(&a.model.join(TASK_FILE))?;
    task.validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let model = TrainedModel::load(a.model.join(MODEL_FILE)).map_err(CliError::runtime)?;
    if model.method() != cfg.model.name() {
        return Err(CliError::Config(format!(
            "model file holds {} but config.json says {}",
            model.method(),
            cfg.model.name()
        )));
    }
    let corpus_path = a.corpus.clone().unwrap_or_else(|| cfg.corpus.clone());
    if file_sha256(&corpus_path)? != cfg.corpus_sha256 {
        return Err(CliError::Config(format!(
            "{} is not the corpus the model was trained on",
            corpus_path.display()
        )));
    }
    let tokens = a.tokens.clone().or_else(|| cfg.tokens.clone());
    let corpus = load_with_tokens(&corpus_path, tokens.as_deref())?;
    Ok(Loaded {
        cfg,
        task,
        model,
        corpus,
        corpus_path,
    })
}

fn eval(a: EvalArgs) -> Result<(), CliError> {
    let policy = a
        .threshold
        .as_deref()
        .map(str::parse::<ThresholdPolicy>)
        .transpose()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let l = load_model(&a.model)?;
    if let Some(p) = policy {
        p.validate(l.task.u_ids.len())
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let (u_ids, scores) = score_u(&l.model, &l.corpus, &l.task).map_err(CliError::runtime)?;
    let report = evaluate(
        &l.cfg.model,
        &l.corpus,
        &l.task,
        &u_ids,
        &scores,
        policy,
        l.cfg.seed,
    )
    .map_err(CliError::runtime)?;
    out_dir(&a.out)?;
    report
        .save(a.out.join("report.jsonl"))
        .map_err(CliError::runtime)?;
    write_json(
        &a.out.join("eval.json"),
        &EvalConfig {
            command: "eval".into(),
            model_dir: a.model.model.clone(),
            corpus: l.corpus_path,
            policy: report.summary.policy,
            seed: l.cfg.seed,
            config_hash: report.summary.config_hash.clone(),
        },
    )?;
    println!(
        "{}",
        serde_json::to_string(&report.summary).expect("summary serializes")
    );
    Ok(())
}

#[derive(Serialize)]
struct RankLine<'a> {
    id: &'a str,
    score: f64,
    rank: usize,
}

fn rank_cmd(a: RankArgs) -> Result<(), CliError> {
    let l = load_model(&a.model)?;
    let (u_ids, scores) = score_u(&l.model, &l.corpus, &l.task).map_err(CliError::runtime)?;
    let order = rank(&u_ids, &scores).map_err(CliError::runtime)?;
    out_dir(&a.out)?;
    let path = a.out.join("ranking.jsonl");
    let mut w = create(&path)?;
    let io = |e: std::io::Error| CliError::Runtime(format!("{}: {e}", path.display()));
    for (r, &i) in order.iter().enumerate() {
        let line = RankLine {
            id: &u_ids[i],
            score: scores[i],
            rank: r + 1,
        };
        serde_json::to_writer(&mut w, &line).map_err(|e| io(e.into()))?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

fn worker_count() -> Result<usize, CliError> {
    match std::env::var("PUDE_THREADS") {
        Ok(v) => v.parse::<usize>().ok().filter(|&n| n > 0).ok_or_else(|| {
            CliError::Config(format!("PUDE_THREADS={v:?} is not a positive integer"))
        }),
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn sweep(a: SweepArgs) -> Result<(), CliError> {
    let methods = a.hyper.specs(&a.methods)?;
    let ratios = a.ratios.clone().unwrap_or_else(default_ratio_grid);
    if let Some(r) = ratios.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
        return Err(CliError::Config(format!("ratio {r} must be positive")));
    }
    if a.seeds.is_empty() || ratios.is_empty() {
        return Err(CliError::Config(
            "need at least one ratio and one seed".into(),
        ));
    }
    let threads = worker_count()?;
    let mut unlabelled = load_corpus(&a.corpus).map_err(CliError::runtime)?;
    let mut pool = load_corpus(&a.pool).map_err(CliError::runtime)?;
    if let Some(t) = &a.tokens {
        let mut all = load_tokens(t).map_err(CliError::runtime)?;
        let pool_tokens: HashMap<String, Vec<String>> =
            pool.ids().filter_map(|id| all.remove_entry(id)).collect();
        pool.attach_tokens(pool_tokens).map_err(CliError::runtime)?;
        unlabelled.attach_tokens(all).map_err(CliError::runtime)?;
    }
    let rows = label_ratio_sweep(&pool, &unlabelled, &ratios, &methods, &a.seeds, threads)
        .map_err(CliError::runtime)?;
    out_dir(&a.out)?;
    let path = a.out.join("sweep.csv");
    write_sweep_csv(&rows, create(&path)?)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    write_json(
        &a.out.join(CONFIG_FILE),
        &SweepConfig {
            command: "sweep".into(),
            corpus: a.corpus,
            pool: a.pool,
            tokens: a.tokens,
            methods,
            ratios,
            seeds: a.seeds,
        },
    )
}
