//! `exact` subcommand: oracle quantities without simulation.

use std::path::{Path, PathBuf};

use clap::{Args, Subcommand};
use serde::Serialize;

use pathsens::analysis::eigen_sym;
use pathsens::exact::{
    brute_force_path_re, exact_fim_ctmc, exact_rer_chain, exact_rer_ctmc, finite_stationary, interior_modes,
    mean_sojourn, parse_matrix, periodic_rer, schlogl_law, semi_markov_rer, stationary_relative_entropy,
    ExponentialKernel, FiniteChain, PeriodicChain, SoftmaxChain, TimeGrid,
};
use pathsens::models::Schlogl;
use pathsens::report::FimReport;
use pathsens::RngStream;

use crate::error::CliError;
use crate::run::{create_out_dir, write_csv, write_json};

#[derive(Debug, Subcommand)]
pub enum ExactCommand {
    /// Schlögl stationary law (histogram CSV), its modes, and the exact
    /// RER of ±ε₀·e_k and FIM.
    Schlogl(SchloglArgs),
    /// Checks path relative entropy = M·RER + stationary relative entropy
    /// by enumerating every path.
    Verify(VerifyArgs),
    /// Exact RER of a finite chain against a perturbed one.
    Chain(ChainArgs),
    /// Exact RER of a time-periodic chain.
    Periodic(PeriodicArgs),
    /// Exact RER of a semi-Markov process with exponential sojourns.
    SemiMarkov(SemiMarkovArgs),
}

#[derive(Debug, Args)]
pub struct SchloglArgs {
    #[arg(long, value_delimiter = ',')]
    pub params: Option<Vec<f64>>,
    #[arg(long, default_value_t = 15.0)]
    pub volume: f64,
    #[arg(long, default_value_t = 200)]
    pub x_max: usize,
    #[arg(long, default_value_t = 0.05)]
    pub epsilon0: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Row-stochastic matrix file; a random softmax chain when absent.
    #[arg(long)]
    pub chain: Option<PathBuf>,
    #[arg(long, requires = "chain")]
    pub perturbed: Option<PathBuf>,
    /// State count of the random chain.
    #[arg(long, default_value_t = 3)]
    pub states: usize,
    /// Path length M.
    #[arg(long, default_value_t = 4)]
    pub horizon: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.1)]
    pub epsilon0: f64,
}

#[derive(Debug, Args)]
pub struct ChainArgs {
    #[arg(long)]
    pub chain: PathBuf,
    #[arg(long)]
    pub perturbed: PathBuf,
}

#[derive(Debug, Args)]
pub struct PeriodicArgs {
    /// One matrix file per phase, in order.
    #[arg(long = "phase", required = true)]
    pub phases: Vec<PathBuf>,
    #[arg(long = "perturbed-phase", required = true)]
    pub perturbed: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SemiMarkovArgs {
    /// Embedded jump chain.
    #[arg(long)]
    pub embedded: PathBuf,
    #[arg(long)]
    pub perturbed_embedded: Option<PathBuf>,
    /// Exponential sojourn rate per state.
    #[arg(long, value_delimiter = ',', required = true)]
    pub rates: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub perturbed_rates: Option<Vec<f64>>,
    #[arg(long, default_value_t = 20_000)]
    pub nodes: usize,
}

fn read_chain(path: &Path) -> Result<FiniteChain, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let m = parse_matrix(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    FiniteChain::new(m).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn print_json<T: Serialize>(value: &T) -> Result<(), CliError> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

#[derive(Serialize)]
struct StationaryRow {
    x: u64,
    probability: f64,
}

#[derive(Serialize)]
struct SchloglOracle {
    params: Vec<f64>,
    volume: f64,
    support: usize,
    modes: Vec<usize>,
    directions: Vec<DirectionValue>,
    fim: FimReport,
    eigenvalues: Vec<f64>,
    most_sensitive: Vec<f64>,
}

#[derive(Serialize)]
struct DirectionValue {
    direction: Vec<f64>,
    rer: f64,
}

pub fn run(cmd: &ExactCommand) -> Result<(), CliError> {
    match cmd {
        ExactCommand::Schlogl(a) => {
            let model = Schlogl::new(a.volume)?;
            let theta = a.params.clone().unwrap_or(Schlogl::DEFAULT_THETA.to_vec());
            let law = schlogl_law(&model, &theta, a.x_max)?;
            let mu: Vec<f64> = law.iter().map(|(_, p)| *p).collect();
            let mut directions = Vec::new();
            for k in 0..theta.len() {
                for sign in [1.0, -1.0] {
                    let mut p = theta.clone();
                    p[k] += sign * a.epsilon0;
                    let mut direction = vec![0.0; theta.len()];
                    direction[k] = sign * a.epsilon0;
                    directions.push(DirectionValue {
                        direction,
                        rer: exact_rer_ctmc(&model, &law, &theta, &p)?,
                    });
                }
            }
            let fim = exact_fim_ctmc(&model, &law, &theta)?;
            let eigen = eigen_sym(&fim)?;
            let names: Vec<String> = Schlogl::PARAM_NAMES.iter().map(|s| s.to_string()).collect();
            let oracle = SchloglOracle {
                params: theta,
                volume: a.volume,
                support: law.len(),
                modes: interior_modes(&mu),
                directions,
                fim: FimReport::from_matrix(&names, &fim),
                eigenvalues: eigen.values.clone(),
                most_sensitive: eigen.vectors[0].clone(),
            };
            if let Some(dir) = &a.out {
                create_out_dir(dir)?;
                let rows: Vec<StationaryRow> = law.iter().map(|&(x, probability)| StationaryRow { x, probability }).collect();
                write_csv(&dir.join("stationary.csv"), &rows)?;
                write_json(&dir.join("oracle.json"), &oracle)?;
            }
            print_json(&oracle)
        }
        ExactCommand::Verify(a) => {
            let (p, q) = match (&a.chain, &a.perturbed) {
                (Some(c), Some(d)) => (read_chain(c)?, read_chain(d)?),
                (Some(c), None) => {
                    let p = read_chain(c)?;
                    (p.clone(), p)
                }
                _ => {
                    let mut rng = RngStream::new(a.seed, 0);
                    let chain = SoftmaxChain::random(a.states, 2, &mut rng);
                    (chain.matrix(&[0.0, 0.0])?, chain.matrix(&[a.epsilon0, -a.epsilon0])?)
                }
            };
            let (mu, nu) = (finite_stationary(&p)?, finite_stationary(&q)?);
            let rer = exact_rer_chain(&p, &q, &mu)?;
            let initial = stationary_relative_entropy(&mu, &nu)?;
            let brute = brute_force_path_re(&p, &q, a.horizon)?;
            let residual = (brute - (a.horizon as f64 * rer + initial)).abs();
            print_json(&serde_json::json!({
                "horizon": a.horizon,
                "rer": rer,
                "stationary_relative_entropy": initial,
                "path_relative_entropy": brute,
                "residual": residual,
            }))
        }
        ExactCommand::Chain(a) => {
            let (p, q) = (read_chain(&a.chain)?, read_chain(&a.perturbed)?);
            let (mu, nu) = (finite_stationary(&p)?, finite_stationary(&q)?);
            print_json(&serde_json::json!({
                "stationary": mu,
                "rer": exact_rer_chain(&p, &q, &mu)?,
                "stationary_relative_entropy": stationary_relative_entropy(&mu, &nu)?,
            }))
        }
        ExactCommand::Periodic(a) => {
            if a.phases.len() != a.perturbed.len() {
                return Err(CliError::Config(format!(
                    "{} phases but {} perturbed phases",
                    a.phases.len(),
                    a.perturbed.len()
                )));
            }
            let load = |paths: &[PathBuf]| -> Result<Vec<FiniteChain>, CliError> { paths.iter().map(|p| read_chain(p)).collect() };
            let p = PeriodicChain::new(load(&a.phases)?)?;
            let q = PeriodicChain::new(load(&a.perturbed)?)?;
            print_json(&serde_json::json!({
                "period": p.period(),
                "phase_laws": p.phase_laws()?,
                "rer": periodic_rer(&p, &q)?,
            }))
        }
        ExactCommand::SemiMarkov(a) => {
            let embedded = read_chain(&a.embedded)?;
            let perturbed_embedded = match &a.perturbed_embedded {
                Some(path) => read_chain(path)?,
                None => embedded.clone(),
            };
            let kernel = ExponentialKernel::new(embedded, a.rates.clone())?;
            let perturbed = ExponentialKernel::new(
                perturbed_embedded,
                a.perturbed_rates.clone().unwrap_or_else(|| a.rates.clone()),
            )?;
            let slowest = a.rates.iter().chain(perturbed.rates()).fold(f64::INFINITY, |m, r| m.min(*r));
            let fastest = a.rates.iter().chain(perturbed.rates()).fold(0.0f64, |m, r| m.max(*r));
            let grid = TimeGrid::geometric(1e-4 / fastest, 40.0 / slowest, a.nodes)?;
            print_json(&serde_json::json!({
                "mean_sojourn": mean_sojourn(&kernel, &grid)?,
                "rer": semi_markov_rer(&kernel, &perturbed, &grid)?,
            }))
        }
    }
}
