//! Experiment configuration: TOML file, flag overrides, defaults and
//! validation.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use pathsens::estimators::perturbed_parameters;
use pathsens::models::{JumpModel, LangevinModel, LangevinSettings, Schlogl, Zgb};
use pathsens::Perturbation;

use crate::error::CliError;

pub const OUT_DIR_ENV: &str = "PATHSENS_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "pathsens-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Schlogl,
    Langevin,
    Zgb,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Schlogl => "schlogl",
            ModelKind::Langevin => "langevin",
            ModelKind::Zgb => "zgb",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorChoice {
    H1,
    H2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DirectionMode {
    /// +ε₀·e_k for every k.
    Axes,
    /// ±ε₀·e_k for every k.
    SignedAxes,
    /// Only the vectors listed under `explicit`.
    Explicit,
    /// No directions: FIM only.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirectionConfig {
    pub mode: DirectionMode,
    pub epsilon0: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub explicit: Vec<Vec<f64>>,
    /// Read directions as relative (log-scale) perturbations, ε ↦ θ.ε,
    /// and also report the log-scale FIM.
    #[serde(default)]
    pub log_scale: bool,
}

impl Default for DirectionConfig {
    fn default() -> Self {
        Self {
            mode: DirectionMode::SignedAxes,
            epsilon0: None,
            explicit: Vec::new(),
            log_scale: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchloglSection {
    pub volume: Option<f64>,
    pub x0: Option<u64>,
    /// Truncation of the exact oracle; extended automatically if too small.
    pub x_max: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LangevinSection {
    pub particles: Option<usize>,
    pub dim: Option<usize>,
    pub mass: Option<f64>,
    pub friction: Option<f64>,
    pub sigma: Option<f64>,
    pub dt: Option<f64>,
    pub alpha: Option<f64>,
    /// Initial positions are uniform in [0, box_length) per coordinate.
    pub box_length: Option<f64>,
    /// Initial momenta are uniform in [−max_momentum, max_momentum].
    pub max_momentum: Option<f64>,
    /// Quadratic-form level for the FIM contours; 0 disables them.
    pub level: Option<f64>,
    pub level_points: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ZgbSection {
    pub side: Option<usize>,
    pub snapshots: Option<bool>,
    /// Phase-diagram grid; both axes must be non-empty to enable the sweep.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub phase_k1: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub phase_k2: Vec<f64>,
}

/// Everything a run needs. After [`ExperimentConfig::resolve`] every
/// optional field is filled, so the serialized form replays exactly.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub model: Option<ModelKind>,
    pub params: Option<Vec<f64>>,
    pub directions: DirectionConfig,
    pub estimator: Option<EstimatorChoice>,
    /// Jumps (Schlögl), time (ZGB) or steps (Langevin).
    pub horizon: Option<f64>,
    /// Time (Schlögl, ZGB) or steps (Langevin).
    pub burn_in: Option<f64>,
    pub seed: Option<u64>,
    pub replicas: Option<usize>,
    /// Worker threads; 0 uses every core.
    pub workers: Option<usize>,
    /// Convergence-trace checkpoints per decade of samples; 0 disables.
    pub trace_every: Option<u32>,
    pub batches: Option<usize>,
    pub out: Option<PathBuf>,
    pub schlogl: SchloglSection,
    pub langevin: LangevinSection,
    pub zgb: ZgbSection,
}

/// Flags shared by the simulation subcommands. Each overrides the config
/// file.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// TOML config, or a JSON report whose embedded config is replayed.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub model: Option<ModelKind>,
    /// Comma-separated parameter values.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub params: Option<Vec<f64>>,
    /// `axes`, `signed-axes`, `none`, or explicit vectors `a,b;c,d`.
    #[arg(long, allow_hyphen_values = true)]
    pub directions: Option<String>,
    #[arg(long)]
    pub epsilon0: Option<f64>,
    #[arg(long, value_enum)]
    pub estimator: Option<EstimatorChoice>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub burn_in: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub replicas: Option<usize>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub log_scale: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub trace_every: Option<u32>,
    /// Langevin non-gradient strength α.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// ZGB: write lattice snapshots for θ and each perturbed axis.
    #[arg(long)]
    pub snapshots: bool,
    /// ZGB phase-diagram grid over k1, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub phase_k1: Option<Vec<f64>>,
    /// ZGB phase-diagram grid over k2, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub phase_k2: Option<Vec<f64>>,
}

/// Config source text, kept for line-level diagnostics.
#[derive(Debug, Clone, Default)]
pub struct Source {
    pub path: Option<PathBuf>,
    pub text: String,
}

impl Source {
    /// `path:line: message` when `key` appears in the file.
    pub fn diagnose(&self, key: &str, message: &str) -> CliError {
        let location = self.path.as_ref().map(|p| {
            match find_key_line(&self.text, key) {
                Some(line) => format!("{}:{line}: ", p.display()),
                None => format!("{}: ", p.display()),
            }
        });
        CliError::Config(format!("{}{key}: {message}", location.unwrap_or_default()))
    }
}

fn find_key_line(text: &str, key: &str) -> Option<usize> {
    let leaf = key.rsplit('.').next().unwrap_or(key);
    text.lines().position(|l| {
        let l = l.trim_start();
        l.strip_prefix(leaf)
            .is_some_and(|rest| rest.trim_start().starts_with('='))
    })
    .map(|i| i + 1)
}

pub fn load(path: &Path) -> Result<(ExperimentConfig, Source), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let source = Source {
        path: Some(path.to_path_buf()),
        text,
    };
    let config = if path.extension().is_some_and(|e| e == "json") {
        #[derive(Deserialize)]
        struct Embedded {
            config: ExperimentConfig,
        }
        serde_json::from_str::<Embedded>(&source.text)
            .map_err(|e| CliError::Config(format!("{}:{}: {e}", path.display(), e.line())))?
            .config
    } else {
        toml::from_str(&source.text).map_err(|e| {
            let line = e
                .span()
                .map(|s| source.text[..s.start].matches('\n').count() + 1)
                .map_or(String::new(), |l| format!("{l}:"));
            CliError::Config(format!("{}:{line} {}", path.display(), e.message()))
        })?
    };
    Ok((config, source))
}

fn parse_mode(text: &str) -> Option<DirectionMode> {
    match text.trim() {
        "axes" => Some(DirectionMode::Axes),
        "signed-axes" => Some(DirectionMode::SignedAxes),
        "none" => Some(DirectionMode::None),
        _ => None,
    }
}

fn parse_vectors(text: &str) -> Result<Vec<Vec<f64>>, CliError> {
    text.split(';')
        .filter(|v| !v.trim().is_empty())
        .map(|v| {
            v.split(',')
                .map(|x| {
                    x.trim()
                        .parse::<f64>()
                        .map_err(|e| CliError::Config(format!("--directions: cannot parse {x:?}: {e}")))
                })
                .collect()
        })
        .collect()
}

impl ExperimentConfig {
    /// Applies flag overrides on top of the file.
    pub fn apply(&mut self, args: &RunArgs) -> Result<(), CliError> {
        macro_rules! set {
            ($field:expr, $value:expr) => {
                if let Some(v) = $value.clone() {
                    $field = Some(v);
                }
            };
        }
        set!(self.model, args.model);
        set!(self.params, args.params);
        set!(self.estimator, args.estimator);
        set!(self.horizon, args.horizon);
        set!(self.burn_in, args.burn_in);
        set!(self.seed, args.seed);
        set!(self.replicas, args.replicas);
        set!(self.workers, args.workers);
        set!(self.trace_every, args.trace_every);
        set!(self.out, args.out);
        set!(self.directions.epsilon0, args.epsilon0);
        set!(self.langevin.alpha, args.alpha);
        if let Some(d) = &args.directions {
            match parse_mode(d) {
                Some(mode) => {
                    self.directions.mode = mode;
                    self.directions.explicit.clear();
                }
                None => {
                    self.directions.mode = DirectionMode::Explicit;
                    self.directions.explicit = parse_vectors(d)?;
                }
            }
        }
        if args.log_scale {
            self.directions.log_scale = true;
        }
        if args.snapshots {
            self.zgb.snapshots = Some(true);
        }
        if let Some(v) = &args.phase_k1 {
            self.zgb.phase_k1 = v.clone();
        }
        if let Some(v) = &args.phase_k2 {
            self.zgb.phase_k2 = v.clone();
        }
        Ok(())
    }

    /// Fills every default for `model` and validates the result.
    pub fn resolve(mut self, model: ModelKind, source: &Source) -> Result<Resolved, CliError> {
        if let Some(m) = self.model {
            if m != model {
                return Err(source.diagnose(
                    "model",
                    &format!("config is for {} but the {} command was run", m.name(), model.name()),
                ));
            }
        }
        self.model = Some(model);
        let (default_theta, names, horizon, burn_in, estimator, eps0): (Vec<f64>, Vec<String>, f64, f64, _, f64) =
            match model {
                ModelKind::Schlogl => (
                    Schlogl::DEFAULT_THETA.to_vec(),
                    names(&Schlogl::PARAM_NAMES),
                    5e6,
                    10.0,
                    EstimatorChoice::H1,
                    0.05,
                ),
                ModelKind::Langevin => (
                    LangevinModel::DEFAULT_THETA.to_vec(),
                    names(&LangevinModel::PARAM_NAMES),
                    1e6,
                    1e4,
                    EstimatorChoice::H2,
                    0.05,
                ),
                ModelKind::Zgb => (
                    Zgb::DEFAULT_THETA.to_vec(),
                    names(&Zgb::PARAM_NAMES),
                    100.0,
                    10.0,
                    EstimatorChoice::H1,
                    0.02,
                ),
            };
        let theta = self.params.get_or_insert(default_theta).clone();
        let estimator = *self.estimator.get_or_insert(estimator);
        let horizon = *self.horizon.get_or_insert(horizon);
        let burn_in = *self.burn_in.get_or_insert(burn_in);
        self.seed.get_or_insert(0);
        let replicas = *self.replicas.get_or_insert(1);
        self.workers.get_or_insert(0);
        self.trace_every.get_or_insert(0);
        let batches = *self.batches.get_or_insert(32);
        let eps0 = *self.directions.epsilon0.get_or_insert(eps0);
        let out = self
            .out
            .get_or_insert_with(|| {
                std::env::var_os(OUT_DIR_ENV)
                    .map(PathBuf::from)
                    .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
            })
            .clone();

        if theta.len() != names.len() {
            return Err(source.diagnose(
                "params",
                &format!("{} expects {} parameters, got {}", model.name(), names.len(), theta.len()),
            ));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(source.diagnose("horizon", &format!("must be positive, got {horizon}")));
        }
        if !(burn_in >= 0.0) || !burn_in.is_finite() {
            return Err(source.diagnose("burn_in", &format!("must be non-negative, got {burn_in}")));
        }
        if replicas == 0 {
            return Err(source.diagnose("replicas", "must be at least 1"));
        }
        if batches < 2 {
            return Err(source.diagnose("batches", "must be at least 2"));
        }
        if !(eps0 > 0.0) || !eps0.is_finite() {
            return Err(source.diagnose("epsilon0", &format!("must be positive, got {eps0}")));
        }
        if model == ModelKind::Langevin && (horizon.fract() != 0.0 || burn_in.fract() != 0.0) {
            return Err(source.diagnose("horizon", "Langevin horizon and burn-in count steps and must be whole"));
        }
        if model == ModelKind::Schlogl && horizon.fract() != 0.0 {
            return Err(source.diagnose("horizon", "Schlögl horizon counts jumps and must be whole"));
        }

        let k = theta.len();
        let raw: Vec<Vec<f64>> = match self.directions.mode {
            DirectionMode::Axes => (0..k).map(|i| axis(k, i, eps0)).collect(),
            DirectionMode::SignedAxes => (0..k).flat_map(|i| [axis(k, i, eps0), axis(k, i, -eps0)]).collect(),
            DirectionMode::Explicit => self.directions.explicit.clone(),
            DirectionMode::None => Vec::new(),
        };
        let mut directions = Vec::with_capacity(raw.len());
        for v in raw {
            if v.len() != k {
                return Err(source.diagnose(
                    "explicit",
                    &format!("direction {v:?} has {} entries, the model has {k} parameters", v.len()),
                ));
            }
            let eps = Perturbation::new(v).map_err(|e| source.diagnose("directions", &e.to_string()))?;
            let eps = if self.directions.log_scale {
                pathsens::estimators::log_scale_perturbation(&eps, &theta)
                    .map_err(|e| source.diagnose("log_scale", &e.to_string()))?
            } else {
                eps
            };
            directions.push(eps);
        }

        let model_spec = match model {
            ModelKind::Schlogl => {
                let s = &mut self.schlogl;
                let volume = *s.volume.get_or_insert(Schlogl::default().volume);
                s.x0.get_or_insert(100);
                s.x_max.get_or_insert(200);
                let m = Schlogl::new(volume).map_err(|e| source.diagnose("volume", &e.to_string()))?;
                check_directions(&m, &theta, &directions, source)?;
                ModelSpec::Schlogl(m)
            }
            ModelKind::Zgb => {
                let z = &mut self.zgb;
                let side = *z.side.get_or_insert(Zgb::default().side);
                z.snapshots.get_or_insert(false);
                if side < 2 {
                    return Err(source.diagnose("side", "lattice side must be at least 2"));
                }
                if z.phase_k1.is_empty() != z.phase_k2.is_empty() {
                    return Err(source.diagnose("phase_k1", "phase_k1 and phase_k2 must both be set"));
                }
                let m = Zgb { side };
                check_directions(&m, &theta, &directions, source)?;
                for (&k1, &k2) in z.phase_k1.iter().flat_map(|a| z.phase_k2.iter().map(move |b| (a, b))) {
                    m.check_params(&[k1, k2])
                        .map_err(|e| source.diagnose("phase_k1", &format!("grid point ({k1}, {k2}): {e}")))?;
                }
                ModelSpec::Zgb(m)
            }
            ModelKind::Langevin => {
                let l = &mut self.langevin;
                let d = LangevinSettings::default();
                let settings = LangevinSettings {
                    particles: *l.particles.get_or_insert(d.particles),
                    dim: *l.dim.get_or_insert(d.dim),
                    mass: *l.mass.get_or_insert(d.mass),
                    friction: *l.friction.get_or_insert(d.friction),
                    sigma: *l.sigma.get_or_insert(d.sigma),
                    dt: *l.dt.get_or_insert(d.dt),
                    alpha: *l.alpha.get_or_insert(d.alpha),
                };
                let box_length = *l.box_length.get_or_insert(settings.particles as f64 * theta[2]);
                let max_momentum = *l.max_momentum.get_or_insert(0.1);
                let level = *l.level.get_or_insert(1e-3);
                l.level_points.get_or_insert(64);
                if !(box_length > 0.0) || !(max_momentum >= 0.0) || !(level >= 0.0) {
                    return Err(source.diagnose(
                        "box_length",
                        "box_length must be positive, max_momentum and level non-negative",
                    ));
                }
                if estimator == EstimatorChoice::H1 {
                    return Err(source.diagnose(
                        "estimator",
                        "the Langevin transition density cannot be integrated over states; use h2",
                    ));
                }
                let m = LangevinModel::new(settings).map_err(|e| source.diagnose("langevin", &e.to_string()))?;
                perturbed_parameters(&theta, &directions, |t| {
                    pathsens::models::ChainModel::check_params(&m, t)
                })
                .map_err(|e| source.diagnose("directions", &e.to_string()))?;
                ModelSpec::Langevin(m)
            }
        };

        Ok(Resolved {
            names,
            theta,
            directions,
            estimator,
            out,
            model: model_spec,
            config: self,
        })
    }
}

fn check_directions<M: JumpModel>(
    model: &M,
    theta: &[f64],
    directions: &[Perturbation],
    source: &Source,
) -> Result<(), CliError> {
    perturbed_parameters(theta, directions, |t| model.check_params(t))
        .map(|_| ())
        .map_err(|e| match e {
            pathsens::Error::InvalidConfig(msg) => source.diagnose("directions", &msg),
            other => source.diagnose("params", &other.to_string()),
        })
}

fn axis(k: usize, i: usize, eps: f64) -> Vec<f64> {
    let mut v = vec![0.0; k];
    v[i] = eps;
    v
}

fn names(n: &[&str]) -> Vec<String> {
    n.iter().map(|s| s.to_string()).collect()
}

pub enum ModelSpec {
    Schlogl(Schlogl),
    Langevin(LangevinModel),
    Zgb(Zgb),
}

/// A validated run: the fully resolved config plus the objects built from it.
pub struct Resolved {
    pub names: Vec<String>,
    pub theta: Vec<f64>,
    /// Actual (original-scale) perturbations.
    pub directions: Vec<Perturbation>,
    pub estimator: EstimatorChoice,
    pub out: PathBuf,
    pub model: ModelSpec,
    pub config: ExperimentConfig,
}

impl Resolved {
    pub fn seed(&self) -> u64 {
        self.config.seed.unwrap_or(0)
    }

    pub fn replicas(&self) -> usize {
        self.config.replicas.unwrap_or(1)
    }

    pub fn horizon(&self) -> f64 {
        self.config.horizon.unwrap_or(0.0)
    }

    pub fn burn_in(&self) -> f64 {
        self.config.burn_in.unwrap_or(0.0)
    }

    pub fn estimator_options(&self) -> pathsens::estimators::EstimatorOptions {
        pathsens::estimators::EstimatorOptions {
            batches: self.config.batches.unwrap_or(32),
            trace_per_decade: self.config.trace_every.filter(|&n| n > 0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_lines() {
        let text = "seed = 1\n[schlogl]\n  volume = -1\n";
        assert_eq!(find_key_line(text, "schlogl.volume"), Some(3));
        assert_eq!(find_key_line(text, "horizon"), None);
    }

    #[test]
    fn resolve_fills_defaults() {
        let r = ExperimentConfig::default().resolve(ModelKind::Schlogl, &Source::default()).unwrap();
        assert_eq!(r.directions.len(), 8);
        assert_eq!(r.config.horizon, Some(5e6));
        assert_eq!(r.config.schlogl.x0, Some(100));
        let again = r.config.clone().resolve(ModelKind::Schlogl, &Source::default()).unwrap();
        assert_eq!(again.config, r.config);
    }

    #[test]
    fn inadmissible_direction_is_rejected() {
        let mut c = ExperimentConfig::default();
        c.directions.mode = DirectionMode::Explicit;
        c.directions.explicit = vec![vec![0.0, -2.0, 0.0, 0.0]];
        assert!(matches!(c.resolve(ModelKind::Schlogl, &Source::default()), Err(CliError::Config(_))));
    }

    #[test]
    fn log_scale_directions_are_relative() {
        let mut c = ExperimentConfig::default();
        c.directions.mode = DirectionMode::Axes;
        c.directions.log_scale = true;
        c.directions.epsilon0 = Some(0.1);
        let r = c.resolve(ModelKind::Schlogl, &Source::default()).unwrap();
        assert!((r.directions[3].values()[3] - 0.35).abs() < 1e-15);
    }
}
