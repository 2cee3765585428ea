use super::experiment::{run_experiment, MethodSpec};
use super::EvalError;
use crate::data::{Corpus, DataError, PuTask};
use crate::rng;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

/// `0.01, 0.02, …, 0.09, 0.1, 0.2, …, 1.0`: nineteen |LP|/|U| ratios.
pub fn default_ratio_grid() -> Vec<f64> {
    (1..=9)
        .map(|i| i as f64 / 100.0)
        .chain((1..=10).map(|i| i as f64 / 10.0))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub ratio: f64,
    pub method: String,
    pub seed: u64,
    pub lp_count: usize,
    pub f1: f64,
}

pub fn write_sweep_csv(rows: &[SweepRow], out: impl Write) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// |LP| for a ratio over `u_count` unlabelled documents, at least 1.
pub fn lp_count_for(ratio: f64, u_count: usize) -> usize {
    ((ratio * u_count as f64).round() as usize).max(1)
}

/// The labelled set for one `(ratio, seed)`: a prefix of the pool shuffled by
/// `seed`, so larger ratios extend smaller ones.
pub fn nested_task(
    pool: &Corpus,
    unlabelled: &Corpus,
    ratio: f64,
    seed: u64,
) -> Result<(Corpus, PuTask), EvalError> {
    let data = |e: DataError| EvalError::Stage {
        stage: "task",
        source: e.into(),
    };
    let needed = lp_count_for(ratio, unlabelled.len());
    if needed > pool.len() {
        return Err(data(DataError::InsufficientPositives {
            needed,
            available: pool.len(),
        }));
    }
    let mut order: Vec<&str> = pool.ids().collect();
    order.shuffle(&mut rng::derived(seed, 0x0073_7765_6570));
    let lp: BTreeSet<String> = order[..needed].iter().map(|s| s.to_string()).collect();
    let corpus = pool.subset(&lp).concat(unlabelled).map_err(data)?;
    let task = PuTask::new(lp, unlabelled.ids().map(String::from).collect()).map_err(data)?;
    Ok((corpus, task))
}

/// Runs every `(ratio, seed, method)` combination with each method's default
/// threshold. LP is drawn from `pool`; U is always all of `unlabelled`.
/// Up to `threads` runs execute at once; rows come back in input order.
pub fn label_ratio_sweep(
    pool: &Corpus,
    unlabelled: &Corpus,
    ratios: &[f64],
    methods: &[MethodSpec],
    seeds: &[u64],
    threads: usize,
) -> Result<Vec<SweepRow>, EvalError> {
    if let Some(&r) = ratios.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
        return Err(EvalError::Policy(format!("ratio {r} must be positive")));
    }
    let jobs: Vec<(f64, u64, &MethodSpec)> = ratios
        .iter()
        .flat_map(|&r| {
            seeds
                .iter()
                .flat_map(move |&s| methods.iter().map(move |m| (r, s, m)))
        })
        .collect();
    let run = |&(ratio, seed, spec): &(f64, u64, &MethodSpec)| -> Result<SweepRow, EvalError> {
        let (corpus, task) = nested_task(pool, unlabelled, ratio, seed)?;
        let report = run_experiment(&corpus, &task, spec, None, seed)?;
        log::info!(
            "sweep ratio {ratio} seed {seed} {}: F1 {:.4}",
            spec.name(),
            report.summary.f1
        );
        Ok(SweepRow {
            ratio,
            method: spec.name().to_string(),
            seed,
            lp_count: task.lp_ids.len(),
            f1: report.summary.f1,
        })
    };
    let threads = threads.clamp(1, jobs.len().max(1));
    if threads == 1 {
        return jobs.iter().map(run).collect();
    }
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<SweepRow, EvalError>>>> =
        Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= jobs.len() {
                    break;
                }
                let out = run(&jobs[i]);
                results.lock().expect("no panics while held")[i] = Some(out);
            });
        }
    });
    results
        .into_inner()
        .expect("workers joined")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_synthetic, SynthSpec};
    use crate::kde::KdeConfig;

    #[test]
    fn grid_has_nineteen_points() {
        let g = default_ratio_grid();
        assert_eq!(g.len(), 19);
        assert_eq!(g[0], 0.01);
        assert_eq!(g[8], 0.09);
        assert_eq!(g[9], 0.1);
        assert_eq!(g[18], 1.0);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    fn corpora() -> (Corpus, Corpus) {
        let u = gen_synthetic(&SynthSpec::two_gaussian(2, 0.5, 200, 1)).unwrap();
        let mut spec = SynthSpec::two_gaussian(2, 1.0, 200, 2);
        spec.id_prefix = "lp".into();
        (gen_synthetic(&spec).unwrap(), u)
    }

    #[test]
    fn tasks_are_nested() {
        let (pool, u) = corpora();
        let (_, small) = nested_task(&pool, &u, 0.05, 3).unwrap();
        let (corpus, big) = nested_task(&pool, &u, 0.5, 3).unwrap();
        assert_eq!(small.lp_ids.len(), 10);
        assert_eq!(big.lp_ids.len(), 100);
        assert!(small.lp_ids.is_subset(&big.lp_ids));
        assert_eq!(corpus.len(), 300);
        assert!(nested_task(&pool, &u, 1.5, 3).is_err());
    }

    #[test]
    fn parallel_matches_serial() {
        let (pool, u) = corpora();
        let methods = [MethodSpec::PudeKde(KdeConfig::default())];
        let ratios = [0.05, 0.2];
        let serial = label_ratio_sweep(&pool, &u, &ratios, &methods, &[0, 1], 1).unwrap();
        let parallel = label_ratio_sweep(&pool, &u, &ratios, &methods, &[0, 1], 3).unwrap();
        assert_eq!(serial, parallel);
        assert_eq!(serial.len(), 4);
        let (c, t) = nested_task(&pool, &u, 0.2, 1).unwrap();
        let direct = run_experiment(&c, &t, &methods[0], None, 1).unwrap();
        assert_eq!(serial[3].f1, direct.summary.f1);
        let mut csv = Vec::new();
        write_sweep_csv(&serial, &mut csv).unwrap();
        assert!(String::from_utf8(csv)
            .unwrap()
            .starts_with("ratio,method,seed,lp_count,f1\n0.05,pude-kde,0,10,"));
    }
}
