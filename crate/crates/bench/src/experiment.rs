//! Repetition loop: data, split, corruption, fit, code, classify.

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rbds_core::datagen::{corrupt, gen_subspaces, CorruptionSpec};
use rbds_core::matrix::{load_dataset, write_atomic};
use rbds_core::methods::{run_pipeline, MethodRegistry, PipelineOptions, RpcaPrecleanLrrs};
use rbds_core::solver::SolveOptions;
use rbds_core::{Error, LabeledDataset, MatrixFormat, Result};

use crate::config::{CorruptionConfig, ExperimentConfig, SourceKind};
use crate::report::{ExperimentReport, RunRecord, RunStatus};
use crate::seeds::{rep_seed, stream, Stream};

/// Worker threads from `RBDS_THREADS`; unset, unparsable or 0 means one per
/// core.
pub fn thread_count() -> usize {
    std::env::var("RBDS_THREADS")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(0)
}

/// Train and test sets of one repetition.
#[derive(Debug, Clone)]
pub struct RepData {
    pub rep: usize,
    pub seed: u64,
    pub train: LabeledDataset,
    pub test: LabeledDataset,
}

/// Per-class seeded split. Each class keeps `round(ratio * n_c)` training
/// samples, at least one and leaving at least one for testing. Both parts
/// are class-sorted.
pub fn split(
    ds: &LabeledDataset,
    ratio: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in 1..=ds.class_count() {
        let mut idx = ds.indices_of_class(class);
        if idx.len() < 2 {
            return Err(Error::Config(format!(
                "class {class} has {} samples; a split needs at least 2",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        let k = ((ratio * idx.len() as f64).round() as usize).clamp(1, idx.len() - 1);
        let (a, b) = idx.split_at(k);
        let (mut a, mut b) = (a.to_vec(), b.to_vec());
        a.sort_unstable();
        b.sort_unstable();
        train.extend(a);
        test.extend(b);
    }
    Ok((ds.subset(&train)?, ds.subset(&test)?))
}

fn apply_corruption(
    ds: &LabeledDataset,
    c: &CorruptionConfig,
    seed: u64,
) -> Result<LabeledDataset> {
    match c.kind {
        None => Ok(ds.clone()),
        Some(kind) => {
            let spec = CorruptionSpec {
                kind,
                fraction: c.fraction,
                image_shape: c.image_shape,
                seed,
            };
            ds.with_data(corrupt(ds.data(), &spec)?)
        }
    }
}

fn load_files(cfg: &ExperimentConfig) -> Result<LabeledDataset> {
    let format = cfg
        .files
        .format
        .unwrap_or_else(|| MatrixFormat::from_path(&cfg.files.matrix));
    load_dataset(&cfg.files.matrix, &cfg.files.labels, format)
}

/// Builds one repetition's data. `loaded` is the file dataset, if any.
pub fn prepare_rep(
    cfg: &ExperimentConfig,
    rep: usize,
    loaded: Option<&LabeledDataset>,
) -> Result<RepData> {
    let seed = rep_seed(cfg.seed, rep);
    let full = match (cfg.source, loaded) {
        (SourceKind::Files, Some(ds)) => ds.clone(),
        (SourceKind::Files, None) => load_files(cfg)?,
        (SourceKind::Synthetic, _) => {
            let mut spec = cfg.synthetic.clone();
            spec.seed = stream(seed, Stream::Data);
            gen_subspaces(&spec)?
        }
    };
    let (train, test) = split(&full, cfg.train_ratio, stream(seed, Stream::Split))?;
    let train = apply_corruption(
        &train,
        &cfg.corrupt_train,
        stream(seed, Stream::CorruptTrain),
    )?;
    let test = apply_corruption(&test, &cfg.corrupt_test, stream(seed, Stream::CorruptTest))?;
    Ok(RepData {
        rep,
        seed,
        train,
        test,
    })
}

fn registry(cfg: &ExperimentConfig) -> MethodRegistry {
    let mut reg = MethodRegistry::with_builtins();
    reg.register(Box::new(RpcaPrecleanLrrs {
        lambda: cfg.rpca_lambda,
    }));
    reg
}

fn run_one(
    cfg: &ExperimentConfig,
    reg: &MethodRegistry,
    data: &RepData,
    method: &str,
) -> Result<RunRecord> {
    let m = reg.resolve(method)?;
    let mut solver = cfg.solver_for(method)?;
    solver.seed = stream(data.seed, Stream::Solver);
    let opts = PipelineOptions {
        eta: cfg.eta,
        coding_mode: cfg.coding_mode,
        classifier_input: cfg.classifier_input,
        solve: SolveOptions::default(),
    };
    let start = Instant::now();
    let outcome = run_pipeline(m, &data.train, &data.test, &solver, &opts);
    let wall_time_s = start.elapsed().as_secs_f64();
    let failed = |status, iterations| RunRecord {
        method: method.to_string(),
        rep: data.rep,
        seed: data.seed,
        accuracy: 0.0,
        iterations,
        converged: false,
        offblock_ratio: f64::NAN,
        status,
        wall_time_s,
        trace: Vec::new(),
    };
    match outcome {
        Ok(res) => Ok(RunRecord {
            method: method.to_string(),
            rep: data.rep,
            seed: data.seed,
            accuracy: res.accuracy,
            iterations: res.model.iterations_used,
            converged: res.model.converged,
            offblock_ratio: res.model.offblock_ratio()?,
            status: RunStatus::Ok,
            wall_time_s,
            trace: res.model.history,
        }),
        Err(Error::Diverged { iter, .. }) => Ok(failed(RunStatus::Diverged, iter)),
        Err(Error::Numeric(_)) => Ok(failed(RunStatus::Numeric, 0)),
        Err(e) => Err(e),
    }
}

fn pool() -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count())
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker threads: {e}")))
}

/// Runs every method on every repetition. Repetitions and methods run in
/// parallel; rows come back in method order, then repetition order. When
/// `output_dir` is set the report files are written there.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let loaded = match cfg.source {
        SourceKind::Files => Some(load_files(cfg)?),
        SourceKind::Synthetic => None,
    };
    let reg = registry(cfg);
    let pool = pool()?;
    let runs = pool.install(|| -> Result<Vec<RunRecord>> {
        let reps: Vec<RepData> = (0..cfg.repetitions)
            .into_par_iter()
            .map(|rep| prepare_rep(cfg, rep, loaded.as_ref()))
            .collect::<Result<_>>()?;
        let jobs: Vec<(&str, &RepData)> = cfg
            .methods
            .iter()
            .flat_map(|m| reps.iter().map(move |r| (m.as_str(), r)))
            .collect();
        jobs.into_par_iter()
            .map(|(m, data)| run_one(cfg, &reg, data, m))
            .collect()
    })?;
    let report = ExperimentReport {
        config_hash: cfg.hash(),
        config_text: cfg.canonical(),
        methods: cfg.methods.clone(),
        runs,
    };
    if let Some(dir) = &cfg.output_dir {
        report.write_to(dir, cfg.write_traces)?;
    }
    Ok(report)
}

/// Whether `key` names a numeric setting that a sweep may vary.
pub fn is_numeric_key(key: &str) -> bool {
    const SOLVER: [&str; 10] = [
        "lambda",
        "alpha",
        "beta",
        "gamma",
        "mu0",
        "mu_max",
        "rho",
        "eps_tol",
        "max_iters",
        "atoms_per_class",
    ];
    const TOP: [&str; 11] = [
        "seed",
        "repetitions",
        "data.classes",
        "data.ambient_dim",
        "data.subspace_rank",
        "data.samples_per_class",
        "data.noise_sigma",
        "split.train_ratio",
        "classifier.eta",
        "rpca.lambda",
        "corrupt.both.fraction",
    ];
    if TOP.contains(&key) || key == "corrupt.train.fraction" || key == "corrupt.test.fraction" {
        return true;
    }
    match key.split_once('.') {
        Some((head, field)) => {
            SOLVER.contains(&field)
                && (head == "solver" || MethodRegistry::with_builtins().get(head).is_some())
        }
        None => false,
    }
}

/// One experiment per value of `param`. With an output directory each point
/// is written to `point_<i>/` and the combined `sweep.csv` to the top level.
pub fn sweep(cfg: &ExperimentConfig, param: &str, values: &[f64]) -> Result<Vec<ExperimentReport>> {
    if !is_numeric_key(param) {
        return Err(Error::Config(format!("`{param}` is not a numeric setting")));
    }
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let mut reports = Vec::with_capacity(values.len());
    for (i, v) in values.iter().enumerate() {
        let mut point = cfg.clone();
        point.set(param, &v.to_string())?;
        point.output_dir = cfg
            .output_dir
            .as_ref()
            .map(|d| d.join(format!("point_{i:02}")));
        reports.push(run_experiment(&point)?);
    }
    if let Some(dir) = &cfg.output_dir {
        write_atomic(
            &dir.join("sweep.csv"),
            sweep_csv(param, values, &reports).as_bytes(),
        )?;
    }
    Ok(reports)
}

pub fn sweep_csv(param: &str, values: &[f64], reports: &[ExperimentReport]) -> String {
    let mut out = String::from(
        "parameter,value,method,mean_accuracy,std_accuracy,mean_iterations,convergence_rate,offblock_ratio,config_hash\n",
    );
    for (v, r) in values.iter().zip(reports) {
        for s in r.summary() {
            let _ = writeln!(
                out,
                "{param},{v},{},{},{},{},{},{},{}",
                s.method,
                s.mean_accuracy,
                s.std_accuracy,
                s.mean_iterations,
                s.convergence_rate,
                s.offblock_ratio,
                r.config_hash
            );
        }
    }
    out
}
