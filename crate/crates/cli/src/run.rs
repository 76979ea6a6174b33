//! Replica dispatch, merging and report emission shared by the model
//! commands.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

use pathsens::analysis::eigen_sym;
use pathsens::estimators::{
    log_scale_fim, rer_quadratic, ChainFimH2, ChainRerH2, CtmcFimH1, CtmcFimH2, CtmcRerH1, CtmcRerH2, Estimate,
    FimEstimate,
};
use pathsens::models::{JumpModel, LangevinModel, LangevinState};
use pathsens::report::{DirectionReport, FimReport, Optimality, RunSummary, SensitivityReport};
use pathsens::simulate::{replicas, run_chain, run_ssa, ChainHook, ChainRunConfig, Horizon, JumpHook, SsaConfig};
use pathsens::stats::ConvergenceTrace;
use pathsens::RngStream;

use crate::config::{EstimatorChoice, ExperimentConfig, Resolved};
use crate::error::CliError;

/// What one replica produced.
pub struct ReplicaResult {
    pub summary: RunSummary,
    pub rer: Result<Vec<Estimate>, pathsens::Error>,
    pub rer_traces: Vec<ConvergenceTrace>,
    pub fim: Result<FimEstimate, pathsens::Error>,
    pub fim_trace: Option<ConvergenceTrace>,
}

pub fn thread_pool(cfg: &ExperimentConfig) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(format!("worker pool: {e}")))
}

pub fn ssa_config(r: &Resolved, horizon: Horizon) -> SsaConfig {
    SsaConfig {
        burn_in: r.burn_in(),
        horizon,
        store_trajectory: false,
    }
}

/// Runs every replica of a jump model with the configured estimator pair.
pub fn jump_replicas<M, I>(model: &M, r: &Resolved, ssa: &SsaConfig, initial: I) -> Result<Vec<ReplicaResult>, CliError>
where
    M: JumpModel,
    I: Fn(&mut RngStream) -> M::State + Sync,
{
    let opts = r.estimator_options();
    let (theta, dirs) = (&r.theta, &r.directions);
    let pool = thread_pool(&r.config)?;
    let results = pool.install(|| {
        replicas(r.replicas(), r.seed(), |replica, mut rng| -> Result<ReplicaResult, pathsens::Error> {
            let init = initial(&mut rng);
            let stream = rng.stream();
            match r.estimator {
                EstimatorChoice::H1 => {
                    let mut rer = CtmcRerH1::new(model, theta, dirs, &opts)?;
                    let mut fim = CtmcFimH1::new(model, theta, &opts)?;
                    let hooks: &mut [&mut dyn JumpHook<M>] = &mut [&mut rer, &mut fim];
                    let run = run_ssa(model, theta, init, ssa, &mut rng, hooks)?;
                    Ok(ReplicaResult {
                        summary: jump_summary(model, r, replica, stream, &run),
                        rer: rer_or_empty(dirs.len(), || rer.estimates()),
                        rer_traces: rer.traces(),
                        fim: fim.estimate(),
                        fim_trace: fim.trace(),
                    })
                }
                EstimatorChoice::H2 => {
                    let mut rer = CtmcRerH2::new(model, theta, dirs, &opts)?;
                    let mut fim = CtmcFimH2::new(model, theta, &opts)?;
                    let hooks: &mut [&mut dyn JumpHook<M>] = &mut [&mut rer, &mut fim];
                    let run = run_ssa(model, theta, init, ssa, &mut rng, hooks)?;
                    Ok(ReplicaResult {
                        summary: jump_summary(model, r, replica, stream, &run),
                        rer: rer_or_empty(dirs.len(), || rer.estimates()),
                        rer_traces: rer.traces(),
                        fim: fim.estimate(),
                        fim_trace: fim.trace(),
                    })
                }
            }
        })
    });
    results.into_iter().map(|res| res.map_err(CliError::from)).collect()
}

fn jump_summary<M: JumpModel>(
    model: &M,
    r: &Resolved,
    replica: usize,
    stream: u64,
    run: &pathsens::simulate::JumpRun<M::State>,
) -> RunSummary {
    RunSummary {
        replica,
        seed: r.seed(),
        stream,
        recorded: run.recorded_jumps,
        horizon: run.recorded_time,
        final_state: model.state_digest(&run.final_state),
        failure: run.failure.as_ref().map(|e| e.to_string()),
    }
}

fn rer_or_empty(
    n: usize,
    f: impl FnOnce() -> pathsens::Result<Vec<Estimate>>,
) -> pathsens::Result<Vec<Estimate>> {
    if n == 0 {
        Ok(Vec::new())
    } else {
        f()
    }
}

/// Runs every Langevin replica with the H2 estimators; estimates are
/// converted from per step to per unit time.
pub fn langevin_replicas<I>(model: &LangevinModel, r: &Resolved, initial: I) -> Result<Vec<ReplicaResult>, CliError>
where
    I: Fn(&mut RngStream) -> pathsens::Result<LangevinState> + Sync,
{
    let opts = r.estimator_options();
    let (theta, dirs) = (&r.theta, &r.directions);
    let per_time = 1.0 / model.settings.dt;
    let cfg = ChainRunConfig {
        burn_in: r.burn_in() as u64,
        steps: r.horizon() as u64,
        store_trajectory: false,
    };
    let pool = thread_pool(&r.config)?;
    let results = pool.install(|| {
        replicas(r.replicas(), r.seed(), |replica, mut rng| -> Result<ReplicaResult, pathsens::Error> {
            let init = initial(&mut rng)?;
            let stream = rng.stream();
            let mut rer = ChainRerH2::new(model, theta, dirs, &opts)?;
            let mut fim = ChainFimH2::new(model, theta, &opts)?;
            let hooks: &mut [&mut dyn ChainHook<LangevinModel>] = &mut [&mut rer, &mut fim];
            let run = run_chain(model, theta, init, &cfg, &mut rng, hooks)?;
            let rer_est = rer_or_empty(dirs.len(), || rer.estimates())
                .map(|v| v.iter().map(|e| e.scaled(per_time)).collect());
            let rescale = |t: ConvergenceTrace| {
                let mut t = t;
                t.points.iter_mut().for_each(|p| p.estimate *= per_time);
                t
            };
            Ok(ReplicaResult {
                summary: RunSummary {
                    replica,
                    seed: r.seed(),
                    stream,
                    recorded: run.recorded_steps,
                    horizon: run.recorded_steps as f64,
                    final_state: format!("q={:?}", run.final_state.q),
                    failure: run.failure.as_ref().map(|e| e.to_string()),
                },
                rer: rer_est,
                rer_traces: rer.traces().into_iter().map(rescale).collect(),
                fim: fim.estimate().map(|f| f.scaled(per_time)),
                fim_trace: fim.trace().map(rescale),
            })
        })
    });
    results.into_iter().map(|res| res.map_err(CliError::from)).collect()
}

/// Mean over replicas; with more than one replica the standard error is
/// the replica spread, otherwise the batch-means error of the single run.
pub fn merge_estimates(per_replica: &[&Estimate]) -> Estimate {
    let n = per_replica.len();
    if n == 1 {
        return *per_replica[0];
    }
    let mean = per_replica.iter().map(|e| e.estimate).sum::<f64>() / n as f64;
    let var = per_replica.iter().map(|e| (e.estimate - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Estimate {
        estimate: mean,
        std_error: Some((var / n as f64).sqrt()),
        samples: per_replica.iter().map(|e| e.samples).sum(),
        horizon: per_replica.iter().map(|e| e.horizon).sum(),
    }
}

pub fn merge_fim(per_replica: &[&FimEstimate]) -> FimEstimate {
    let n = per_replica.len();
    if n == 1 {
        return per_replica[0].clone();
    }
    let k = per_replica[0].matrix.nrows();
    let mean = per_replica.iter().fold(DMatrix::zeros(k, k), |acc, f| acc + &f.matrix) / n as f64;
    let var = per_replica
        .iter()
        .fold(DMatrix::zeros(k, k), |acc, f| acc + (&f.matrix - &mean).map(|x| x * x))
        / (n - 1) as f64;
    FimEstimate {
        matrix: mean,
        std_error: Some(var.map(|v| (v / n as f64).sqrt())),
        samples: per_replica.iter().map(|f| f.samples).sum(),
        horizon: per_replica.iter().map(|f| f.horizon).sum(),
    }
}

/// Merged results in replica order.
pub struct Merged {
    pub report: SensitivityReport<ExperimentConfig>,
    pub fim: Option<DMatrix<f64>>,
    pub traces: Vec<TraceRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceRow {
    pub quantity: String,
    pub replica: usize,
    pub samples: u64,
    pub horizon: f64,
    pub estimate: f64,
}

pub fn merge(r: &Resolved, model: &str, results: Vec<ReplicaResult>) -> Result<Merged, CliError> {
    let mut errors = Vec::new();
    let partial = results.iter().any(|x| x.summary.failure.is_some());
    for x in &results {
        if let Some(f) = &x.summary.failure {
            errors.push(format!("replica {}: {f}", x.summary.replica));
        }
    }

    let mut rer_ok = Vec::new();
    let mut fim_ok = Vec::new();
    let mut first_numerical: Option<pathsens::Error> = None;
    for x in &results {
        match &x.rer {
            Ok(v) => rer_ok.push(v),
            Err(e) => {
                errors.push(format!("replica {} rer: {e}", x.summary.replica));
                first_numerical.get_or_insert(e.clone());
            }
        }
        match &x.fim {
            Ok(f) => fim_ok.push(f),
            Err(e) => {
                errors.push(format!("replica {} fim: {e}", x.summary.replica));
                first_numerical.get_or_insert(e.clone());
            }
        }
    }
    if fim_ok.is_empty() || (rer_ok.is_empty() && !r.directions.is_empty()) {
        let cause = results
            .iter()
            .find_map(|x| x.summary.failure.clone())
            .or_else(|| first_numerical.map(|e| e.to_string()))
            .unwrap_or_else(|| "no replica produced estimates".into());
        return Err(CliError::Numerical(cause));
    }

    let directions = r
        .directions
        .iter()
        .enumerate()
        .map(|(i, eps)| {
            let per: Vec<&Estimate> = rer_ok.iter().map(|v| &v[i]).collect();
            DirectionReport::new(eps, &r.names, &merge_estimates(&per))
        })
        .collect::<Vec<_>>();
    let fim = merge_fim(&fim_ok);
    let eigen = eigen_sym(&fim.matrix)?;
    let determinant = eigen.values.iter().product();
    let fim_log_scale = if r.config.directions.log_scale {
        Some(FimReport::from_matrix(&r.names, &log_scale_fim(&fim.matrix, &r.theta)?))
    } else {
        None
    };

    let mut traces = Vec::new();
    for x in &results {
        let replica = x.summary.replica;
        for (eps, t) in r.directions.iter().zip(&x.rer_traces) {
            let quantity = format!("rer {}", eps.label(&r.names));
            traces.extend(t.points.iter().map(|p| TraceRow {
                quantity: quantity.clone(),
                replica,
                samples: p.samples,
                horizon: p.horizon,
                estimate: p.estimate,
            }));
        }
        if let Some(t) = &x.fim_trace {
            traces.extend(t.points.iter().map(|p| TraceRow {
                quantity: "fim trace".into(),
                replica,
                samples: p.samples,
                horizon: p.horizon,
                estimate: p.estimate,
            }));
        }
    }

    let mut directions = directions;
    for d in &mut directions {
        let eps = pathsens::Perturbation::new(d.direction.clone())?;
        d.quadratic = Some(rer_quadratic(&eps, &fim.matrix)?);
    }
    let estimator = match r.estimator {
        EstimatorChoice::H1 => "h1",
        EstimatorChoice::H2 => "h2",
    };
    Ok(Merged {
        report: SensitivityReport {
            model: model.into(),
            config: r.config.clone(),
            estimator: estimator.into(),
            directions,
            fim: Some(FimReport::new(&r.names, &fim)),
            fim_log_scale,
            eigen: Some(eigen),
            optimality: Some(Optimality::new(determinant)),
            runs: results.into_iter().map(|x| x.summary).collect(),
            partial,
            errors,
        },
        fim: Some(fim.matrix),
        traces,
    })
}

pub fn create_out_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", dir.display()))))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `report.json` and, when traces were requested, `traces.csv`.
pub fn emit(r: &Resolved, merged: &Merged) -> Result<(), CliError> {
    create_out_dir(&r.out)?;
    write_json(&r.out.join("report.json"), &merged.report)?;
    if !merged.traces.is_empty() {
        write_csv(&r.out.join("traces.csv"), &merged.traces)?;
    }
    print_summary(&merged.report);
    Ok(())
}

fn print_summary(report: &SensitivityReport<ExperimentConfig>) {
    println!("{} ({} estimator)", report.model, report.estimator);
    for d in &report.directions {
        let se = d.std_error.map_or("n/a".to_string(), |s| format!("{s:.3e}"));
        let exact = d.exact.map_or(String::new(), |e| format!("  exact {e:.6e}"));
        println!("  {:<24} rer {:.6e} +- {se}{exact}", d.label, d.estimate);
    }
    if let Some(e) = &report.eigen {
        println!("  fim eigenvalues {:?}", e.values);
    }
    if let Some(o) = &report.optimality {
        println!("  det F {:.6e}", o.a_optimality);
    }
    if report.partial {
        println!("  partial: {}", report.errors.join("; "));
    }
}
