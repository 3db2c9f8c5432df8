//! Experiment driver behind the `felb` binary: generate planted data, run a
//! federated factorization or an aggregated baseline, evaluate outputs.

pub mod config;
pub mod error;
pub mod output;

use std::path::{Path, PathBuf};
use std::time::Instant;

use felb_core::baselines::{run_aggregated_bmf, ReferenceFactorizer};
use felb_core::federation::{partition, round_factor, run_federated_with, RunOptions};
use felb_core::metrics::{write_history_csv, Confusion, RoundLog};
use felb_core::{
    apply_xor_noise, boolean_product, generate_planted, integrality_gap, BinaryMatrix,
    FactorMatrix, NoiseLevel,
};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

pub use config::{
    AggChoice, DataSource, ExperimentConfig, FileSection, GenerateSection, Method, Metric,
    Overrides, PrivacyChoice,
};
pub use error::CliError;

/// Name of the environment variable capping worker threads.
pub const THREADS_ENV: &str = "FELB_THREADS";

/// Reads [`THREADS_ENV`]; unset or empty means "use the default pool".
pub fn threads_from_env() -> Result<Option<usize>, CliError> {
    match std::env::var(THREADS_ENV) {
        Ok(v) if v.trim().is_empty() => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(CliError::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        },
        Err(_) => Ok(None),
    }
}

/// Runs `f` on a dedicated pool with at most `threads` workers.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Draws a planted dataset; returns `(noisy data, clean mask)`.
pub fn generate_dataset(g: &GenerateSection, seed: u64) -> Result<(BinaryMatrix, BinaryMatrix), CliError> {
    let spec = g.spec(seed);
    let (clean, mask) = generate_planted(&spec).map_err(|e| CliError::from_core("generate", e))?;
    let level = NoiseLevel::new(g.noise).map_err(|e| CliError::from_core("generate", e))?;
    Ok((apply_xor_noise(&clean, level, seed), mask))
}

/// Writes `data.mtx`, `mask.mtx` and `spec.jsonl` into `out`.
pub fn cmd_generate(g: &GenerateSection, seed: u64, out: &Path) -> Result<(), CliError> {
    let spec = g.spec(seed);
    let problems = spec.violations();
    if !problems.is_empty() {
        return Err(CliError::Config(problems.join("\n")));
    }
    let (data, mask) = generate_dataset(g, seed)?;
    output::ensure_dir(out)?;
    output::write_mtx(&out.join("data.mtx"), &data)?;
    output::write_mtx(&out.join("mask.mtx"), &mask)?;
    let line = json!({
        "rows": spec.rows,
        "cols": spec.cols,
        "tiles": spec.tiles,
        "tile_rows": spec.tile_rows,
        "tile_cols": spec.tile_cols,
        "tile_density": spec.tile_density,
        "background_density": spec.background_density,
        "noise": g.noise,
        "seed": seed,
        "data_nnz": data.nnz(),
        "mask_nnz": mask.nnz(),
    });
    output::write_text(&out.join("spec.jsonl"), &format!("{line}\n"))
}

/// Whole-matrix quality of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FinalMetrics {
    pub rmsd: f64,
    pub f1: f64,
    pub f1_star: Option<f64>,
    pub integrality_gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub seed: u64,
    pub dir: PathBuf,
    pub metrics: FinalMetrics,
    pub rounds: usize,
}

/// Runs every trial of `cfg` and writes its outputs. A single trial writes
/// straight into the output directory; several trials get `trial_<t>/`
/// subdirectories plus a top-level summary of the means.
pub fn cmd_run(cfg: &ExperimentConfig) -> Result<Vec<TrialOutcome>, CliError> {
    cfg.validate()?;
    let out = cfg
        .out
        .clone()
        .ok_or_else(|| CliError::Config("no output directory given (--out or `out = ...`)".into()))?;
    output::ensure_dir(&out)?;
    let files = match &cfg.data {
        DataSource::Files(f) => Some(load_files(f)?),
        DataSource::Generate(_) => None,
    };
    let outcomes = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let seed = cfg.seed.wrapping_add(t as u64);
            let dir = if cfg.trials == 1 { out.clone() } else { out.join(format!("trial_{t}")) };
            run_trial(cfg, seed, &dir, files.as_ref())
        })
        .collect::<Result<Vec<_>, _>>()?;
    if cfg.trials > 1 {
        let n = outcomes.len() as f64;
        let mean = |f: fn(&FinalMetrics) -> f64| outcomes.iter().map(|o| f(&o.metrics)).sum::<f64>() / n;
        let star: Option<Vec<f64>> = outcomes.iter().map(|o| o.metrics.f1_star).collect();
        let summary = json!({
            "seed": cfg.seed,
            "trials": cfg.trials,
            "config": cfg,
            "mean": metrics_json(cfg, &FinalMetrics {
                rmsd: mean(|m| m.rmsd),
                f1: mean(|m| m.f1),
                f1_star: star.map(|s| s.iter().sum::<f64>() / n),
                integrality_gap: mean(|m| m.integrality_gap),
            }),
        });
        output::write_text(&out.join("summary.json"), &pretty(&summary))?;
    }
    Ok(outcomes)
}

fn load_files(f: &FileSection) -> Result<(BinaryMatrix, Option<BinaryMatrix>), CliError> {
    let data = output::read_mtx(&f.data)?;
    let mask = match &f.mask {
        Some(p) => {
            let m = output::read_mtx(p)?;
            if m.shape() != data.shape() {
                return Err(CliError::Data(format!(
                    "mask {} is {:?} but data {} is {:?}",
                    p.display(),
                    m.shape(),
                    f.data.display(),
                    data.shape()
                )));
            }
            Some(m)
        }
        None => None,
    };
    Ok((data, mask))
}

fn run_trial(
    cfg: &ExperimentConfig,
    seed: u64,
    dir: &Path,
    files: Option<&(BinaryMatrix, Option<BinaryMatrix>)>,
) -> Result<TrialOutcome, CliError> {
    let started = Instant::now();
    let (data, mask) = match (&cfg.data, files) {
        (_, Some((d, m))) => (d.clone(), m.clone()),
        (DataSource::Generate(g), None) => {
            let (d, m) = generate_dataset(g, seed)?;
            (d, Some(m))
        }
        (DataSource::Files(_), None) => unreachable!("files are loaded before trials start"),
    };
    let fcfg = cfg.federation_config(seed);
    if fcfg.clients > data.rows() {
        return Err(CliError::Config(format!("{} clients for {} data rows", fcfg.clients, data.rows())));
    }
    let split = partition(&data, fcfg.clients, seed).map_err(|e| CliError::from_core("partition", e))?;
    let signal = match &mask {
        Some(m) => Some(split.split_like(m).map_err(|e| CliError::from_core("mask", e))?),
        None => None,
    };
    output::ensure_dir(dir)?;

    let (us, v_hat_bits, v_hat_real, rounds, extra) = match cfg.method {
        Method::Felb | Method::FelbMu => {
            let opts = RunOptions {
                signal: signal.as_deref(),
                serial: false,
            };
            let h = run_federated_with(&split.parts, &fcfg, &opts).map_err(|e| CliError::from_core("run", e))?;
            let v_real = h.v_hat.clone().unwrap_or_else(|| h.v[0].clone());
            let extra = json!({
                "synchronizations": h.synchronizations,
                "truncated": h.truncated,
            });
            (h.u_rounded, round_factor(&v_real), v_real, h.rounds, extra)
        }
        Method::AggBaseline => {
            let algo = ReferenceFactorizer::default();
            let run = run_aggregated_bmf(&split.parts, &algo, cfg.aggregation.into(), fcfg.rank, seed)
                .map_err(|e| CliError::from_core("baseline", e))?;
            let log = baseline_log(&split.parts, signal.as_deref(), &run.u, &run.v_hat, started)?;
            let extra = json!({ "aggregation": cfg.aggregation, "local_factorizer": "reference" });
            let v_real = run.v_hat.to_factor();
            (run.u, run.v_hat, v_real, vec![log], extra)
        }
    };

    let mut recon_entries = Vec::new();
    let mut offset = 0;
    for (i, u) in us.iter().enumerate() {
        let block = boolean_product(u, &v_hat_bits).map_err(|e| CliError::from_core(format!("client {i}"), e))?;
        recon_entries.extend(block.entries().iter().map(|&(r, c)| (split.row_order[offset + r], c)));
        offset += u.rows();
        output::write_mtx(&dir.join(format!("u_{i}.mtx")), u)?;
    }
    let recon = BinaryMatrix::from_coords(data.rows(), data.cols(), recon_entries)
        .map_err(|e| CliError::from_core("reconstruction", e))?;
    let metrics = final_metrics(&data, mask.as_ref(), &recon, &v_hat_real)?;

    let mut csv = Vec::new();
    write_history_csv(&rounds, &mut csv, cfg.record_timing).map_err(|e| CliError::from_core("history", e))?;
    output::write_text(&dir.join("history.csv"), std::str::from_utf8(&csv).expect("csv is ascii"))?;
    output::write_mtx(&dir.join("vhat.mtx"), &v_hat_bits)?;
    output::write_bin(&dir.join("vhat.bin"), &v_hat_real)?;
    output::write_mtx(&dir.join("reconstruction.mtx"), &recon)?;
    let summary = json!({
        "seed": seed,
        "method": cfg.method,
        "config": cfg,
        "solver": fcfg,
        "metrics": metrics_json(cfg, &metrics),
        "rounds": rounds.len(),
        "run": extra,
        "wall_seconds": started.elapsed().as_secs_f64(),
    });
    output::write_text(&dir.join("summary.json"), &pretty(&summary))?;
    Ok(TrialOutcome {
        seed,
        dir: dir.to_path_buf(),
        metrics,
        rounds: rounds.len(),
    })
}

/// The single history row of a one-shot baseline.
fn baseline_log(
    parts: &[BinaryMatrix],
    signal: Option<&[BinaryMatrix]>,
    us: &[BinaryMatrix],
    v: &BinaryMatrix,
    started: Instant,
) -> Result<RoundLog, CliError> {
    let recs = us
        .iter()
        .map(|u| boolean_product(u, v))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::from_core("baseline", e))?;
    let conf = |refs: &[BinaryMatrix]| -> Result<Confusion, CliError> {
        refs.iter()
            .zip(&recs)
            .map(|(a, r)| Confusion::between(a, r))
            .sum::<Result<Confusion, _>>()
            .map_err(|e| CliError::from_core("baseline", e))
    };
    let fit = conf(parts)?;
    Ok(RoundLog {
        round: 1,
        mean_local_loss: fit.hamming() as f64 / parts.len() as f64,
        rmsd: fit.rmsd(),
        f1: fit.f1(),
        f1_star: signal.map(conf).transpose()?.map(|c| c.f1()),
        integrality_gap: 0.0,
        elapsed_seconds: started.elapsed().as_secs_f64(),
    })
}

fn final_metrics(
    data: &BinaryMatrix,
    mask: Option<&BinaryMatrix>,
    recon: &BinaryMatrix,
    factor: &FactorMatrix,
) -> Result<FinalMetrics, CliError> {
    let fit = Confusion::between(data, recon).map_err(|e| CliError::from_core("metrics", e))?;
    let f1_star = match mask {
        Some(m) => Some(
            Confusion::between(m, recon)
                .map_err(|e| CliError::from_core("metrics", e))?
                .f1(),
        ),
        None => None,
    };
    Ok(FinalMetrics {
        rmsd: fit.rmsd(),
        f1: fit.f1(),
        f1_star,
        integrality_gap: integrality_gap(factor),
    })
}

fn metrics_json(cfg: &ExperimentConfig, m: &FinalMetrics) -> serde_json::Value {
    let mut map = serde_json::Map::new();
    for metric in &cfg.metrics {
        let (key, value) = match metric {
            Metric::Rmsd => ("rmsd", json!(m.rmsd)),
            Metric::F1 => ("f1", json!(m.f1)),
            Metric::F1Star => ("f1_star", json!(m.f1_star)),
            Metric::IntegralityGap => ("integrality_gap", json!(m.integrality_gap)),
        };
        map.insert(key.to_string(), value);
    }
    serde_json::Value::Object(map)
}

fn pretty(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    s.push('\n');
    s
}

/// Inputs of `felb evaluate`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvaluateArgs {
    pub reconstruction: PathBuf,
    pub reference: PathBuf,
    pub mask: Option<PathBuf>,
    /// Real-valued factor (`vhat.bin`) whose integrality gap to report.
    pub factor: Option<PathBuf>,
}

/// Compares a reconstruction against reference data. Without `factor` the
/// integrality gap is that of the reconstruction itself, i.e. 0.
pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<FinalMetrics, CliError> {
    let recon = output::read_mtx(&args.reconstruction)?;
    let reference = output::read_mtx(&args.reference)?;
    let same_shape = |other: &BinaryMatrix, path: &Path| {
        if other.shape() == recon.shape() {
            Ok(())
        } else {
            Err(CliError::Data(format!(
                "{} is {:?} but {} is {:?}",
                path.display(),
                other.shape(),
                args.reconstruction.display(),
                recon.shape()
            )))
        }
    };
    same_shape(&reference, &args.reference)?;
    let mask = match &args.mask {
        Some(p) => {
            let m = output::read_mtx(p)?;
            same_shape(&m, p)?;
            Some(m)
        }
        None => None,
    };
    let factor = match &args.factor {
        Some(p) => output::read_bin(p)?,
        None => recon.to_factor(),
    };
    final_metrics(&reference, mask.as_ref(), &recon, &factor)
}

/// Text printed by `felb evaluate`.
pub fn format_evaluation(m: &FinalMetrics) -> String {
    let mut s = format!("rmsd {:.9}\nf1 {:.9}\n", m.rmsd, m.f1);
    if let Some(f) = m.f1_star {
        s.push_str(&format!("f1_star {f:.9}\n"));
    }
    s.push_str(&format!("integrality_gap {:.9}\n", m.integrality_gap));
    s
}
