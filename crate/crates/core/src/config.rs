//! Strict JSON experiment configuration and its translation into specs.
//!
//! Unknown keys are rejected. Relative paths (output directory, datasets,
//! replay tables, initial trajectories) are resolved against the directory
//! holding the config file. Every referenced data file is loaded while the
//! config is prepared, before any computation starts.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::action::{
    build_discrete, ActionSpec, Coefficients, DiscreteFunctional, Family, WeightFunction,
};
use crate::dynamics::{DynamicsKind, DynamicsSpec};
use crate::error::{Error, Result};
use crate::io::read_trajectory_csv;
use crate::limits::MassSweep;
use crate::potential::{Dataset, InputSignal, PotentialSpec, SignalKind};
use crate::solver::SolverOptions;
use crate::trajectory::Trajectory;

fn one() -> f64 {
    1.0
}

fn hundred() -> f64 {
    100.0
}

fn default_points() -> usize {
    10
}

fn default_fd_step() -> f64 {
    1e-5
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Also write `plot.svg`.
    #[serde(default)]
    pub plot: bool,
    pub experiment: Experiment,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Experiment {
    Minimize(MinimizeConfig),
    Integrate(IntegrateConfig),
    SweepEps(SweepEpsConfig),
    SweepMass(SweepMassConfig),
    Causality(CausalityConfig),
    Gradcheck(GradcheckConfig),
    Spectrum(SpectrumConfig),
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Minimize(_) => "minimize",
            Experiment::Integrate(_) => "integrate",
            Experiment::SweepEps(_) => "sweep-eps",
            Experiment::SweepMass(_) => "sweep-mass",
            Experiment::Causality(_) => "causality",
            Experiment::Gradcheck(_) => "gradcheck",
            Experiment::Spectrum(_) => "spectrum",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinimizeConfig {
    pub action: ActionConfig,
    pub grid: usize,
    #[serde(default)]
    pub solver: SolverConfig,
    /// Multistart when at least 2.
    pub starts: Option<usize>,
    /// Trajectory CSV used as the initial iterate.
    pub initial: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrateConfig {
    pub dynamics: DynamicsConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepEpsConfig {
    pub action: ActionConfig,
    pub grid: usize,
    pub epsilons: Vec<f64>,
    #[serde(default)]
    pub solver: SolverConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepMassConfig {
    pub potential: PotentialConfig,
    pub dissipation: f64,
    pub q0: Vec<f64>,
    pub q1: Option<Vec<f64>>,
    pub horizon: f64,
    pub masses: Vec<f64>,
    pub dt: f64,
    pub cutoff: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CausalityConfig {
    pub action: ActionConfig,
    pub grid: usize,
    pub epsilons: Vec<f64>,
    pub t_star: f64,
    pub offset: Vec<f64>,
    pub delta: Option<f64>,
    #[serde(default)]
    pub solver: SolverConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradcheckConfig {
    pub potential: PotentialConfig,
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "default_fd_step")]
    pub step: f64,
    /// Also check the discrete functional gradient on random trajectories.
    pub action: Option<ActionConfig>,
    pub grid: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpectrumPoint {
    Minimizer,
    StationaryPoint,
    StraightLine,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    pub action: ActionConfig,
    pub grid: usize,
    pub count: usize,
    #[serde(default = "default_spectrum_point")]
    pub at: SpectrumPoint,
    #[serde(default)]
    pub solver: SolverConfig,
}

fn default_spectrum_point() -> SpectrumPoint {
    SpectrumPoint::Minimizer
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionConfig {
    pub family: Family,
    #[serde(default = "one")]
    pub mass: f64,
    #[serde(default)]
    pub dissipation: f64,
    pub epsilon: Option<f64>,
    pub coefficients: Option<CoefficientsConfig>,
    pub weight: Option<WeightConfig>,
    pub potential: PotentialConfig,
    pub signal: Option<SignalConfig>,
    pub q0: Vec<f64>,
    pub q1: Vec<f64>,
    pub horizon: f64,
    pub terminal: Option<Vec<f64>>,
    #[serde(default)]
    pub theorem_mode: bool,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientsConfig {
    pub alpha: f64,
    pub beta: f64,
    #[serde(default)]
    pub gamma1: f64,
    #[serde(default)]
    pub gamma2: f64,
    pub kappa: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum WeightConfig {
    ConstantOne,
    ExpDecay { epsilon: f64 },
    ExpGrowth { dissipation: f64, mass: f64 },
    Tabulated { values: Vec<f64> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PotentialConfig {
    Quadratic {
        dim: usize,
        /// Row-major `dim × dim`.
        stiffness: Vec<f64>,
        lower_bound: Option<f64>,
    },
    DoubleWell {
        dim: usize,
        #[serde(default = "one")]
        scale: f64,
        lower_bound: Option<f64>,
    },
    Rosenbrock {
        dim: usize,
        #[serde(default = "one")]
        a: f64,
        #[serde(default = "hundred")]
        b: f64,
        lower_bound: Option<f64>,
    },
    LogisticLoss {
        dataset: PathBuf,
        #[serde(default)]
        l2: f64,
        lower_bound: Option<f64>,
    },
    TimeVaryingCoupled {
        base: Box<PotentialConfig>,
        coupling: f64,
        signal_dim: usize,
        lower_bound: Option<f64>,
    },
    Tracking {
        dim: usize,
        stiffness: f64,
        lower_bound: Option<f64>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SignalConfig {
    Zero {
        dim: usize,
    },
    Constant {
        value: Vec<f64>,
    },
    Sinusoid {
        dim: usize,
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    Replay {
        table: PathBuf,
        hold: f64,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub sufficient_decrease: f64,
    pub backtracking_factor: f64,
    pub memory: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = SolverOptions::default();
        SolverConfig {
            max_iterations: d.max_iterations,
            gradient_tolerance: d.gradient_tolerance,
            sufficient_decrease: d.sufficient_decrease,
            backtracking_factor: d.backtracking_factor,
            memory: d.memory,
        }
    }
}

impl SolverConfig {
    pub fn options(&self) -> Result<SolverOptions> {
        let opts = SolverOptions {
            max_iterations: self.max_iterations,
            gradient_tolerance: self.gradient_tolerance,
            sufficient_decrease: self.sufficient_decrease,
            backtracking_factor: self.backtracking_factor,
            memory: self.memory,
            ..SolverOptions::default()
        };
        opts.validate().map_err(to_config)?;
        Ok(opts)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsConfig {
    pub kind: DynamicsKind,
    pub mass: Option<f64>,
    #[serde(default)]
    pub dissipation: f64,
    pub potential: PotentialConfig,
    pub signal: Option<SignalConfig>,
    pub q0: Vec<f64>,
    pub q1: Option<Vec<f64>>,
    pub horizon: f64,
    pub dt: f64,
}

/// Structural problems in the config become configuration errors; hypothesis
/// violations keep their own kind.
fn to_config(e: Error) -> Error {
    match e {
        Error::Hypothesis(_) | Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

/// Parses a config document; errors carry the line and column.
pub fn parse(text: &str) -> Result<ExperimentConfig> {
    serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
}

/// Reads and parses a config file.
pub fn load(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse(&text)
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn potential_spec(cfg: &PotentialConfig, base: &Path) -> Result<PotentialSpec> {
    let (spec, bound) = match cfg {
        PotentialConfig::Quadratic {
            dim,
            stiffness,
            lower_bound,
        } => (
            PotentialSpec::quadratic(*dim, stiffness.clone()),
            lower_bound,
        ),
        PotentialConfig::DoubleWell {
            dim,
            scale,
            lower_bound,
        } => (PotentialSpec::double_well(*dim, *scale), lower_bound),
        PotentialConfig::Rosenbrock {
            dim,
            a,
            b,
            lower_bound,
        } => (PotentialSpec::rosenbrock(*dim, *a, *b), lower_bound),
        PotentialConfig::LogisticLoss {
            dataset,
            l2,
            lower_bound,
        } => {
            let path = resolve(base, dataset);
            let data = Dataset::from_csv(&path).map_err(|e| {
                Error::Config(format!("cannot load dataset {}: {e}", path.display()))
            })?;
            (PotentialSpec::logistic_loss(data, *l2), lower_bound)
        }
        PotentialConfig::TimeVaryingCoupled {
            base: inner,
            coupling,
            signal_dim,
            lower_bound,
        } => (
            potential_spec(inner, base)
                .and_then(|b| PotentialSpec::coupled(b, *coupling, *signal_dim)),
            lower_bound,
        ),
        PotentialConfig::Tracking {
            dim,
            stiffness,
            lower_bound,
        } => (PotentialSpec::tracking(*dim, *stiffness), lower_bound),
    };
    let mut spec = spec.map_err(to_config)?;
    if let Some(b) = bound {
        spec = spec.with_lower_bound(*b).map_err(to_config)?;
    }
    Ok(spec)
}

pub fn signal(cfg: &SignalConfig, horizon: f64, base: &Path) -> Result<InputSignal> {
    let built = match cfg {
        SignalConfig::Zero { dim } => InputSignal::new(SignalKind::Zero, *dim, horizon),
        SignalConfig::Constant { value } => InputSignal::new(
            SignalKind::Constant {
                value: value.clone(),
            },
            value.len(),
            horizon,
        ),
        SignalConfig::Sinusoid {
            dim,
            amplitude,
            frequency,
            phase,
        } => InputSignal::new(
            SignalKind::Sinusoid {
                amplitude: *amplitude,
                frequency: *frequency,
                phase: *phase,
            },
            *dim,
            horizon,
        ),
        SignalConfig::Replay { table, hold } => {
            let path = resolve(base, table);
            return InputSignal::replay_from_csv(&path, *hold, horizon).map_err(|e| {
                Error::Config(format!("cannot load replay table {}: {e}", path.display()))
            });
        }
    };
    built.map_err(to_config)
}

fn weight(cfg: &WeightConfig) -> WeightFunction {
    match cfg {
        WeightConfig::ConstantOne => WeightFunction::ConstantOne,
        WeightConfig::ExpDecay { epsilon } => WeightFunction::ExpDecay { epsilon: *epsilon },
        WeightConfig::ExpGrowth { dissipation, mass } => WeightFunction::ExpGrowth {
            dissipation: *dissipation,
            mass: *mass,
        },
        WeightConfig::Tabulated { values } => WeightFunction::Tabulated {
            values: values.clone(),
        },
    }
}

pub fn action_spec(cfg: &ActionConfig, base: &Path) -> Result<ActionSpec> {
    let pot = potential_spec(&cfg.potential, base)?;
    let (q0, q1, big_t) = (cfg.q0.clone(), cfg.q1.clone(), cfg.horizon);
    let need_eps = || {
        cfg.epsilon
            .ok_or_else(|| Error::Config(format!("{} needs epsilon", cfg.family.name())))
    };
    let mut spec = match cfg.family {
        Family::ClassicalS => ActionSpec::classical(cfg.mass, pot, q0, q1, big_t),
        Family::WEps => ActionSpec::w_eps(cfg.mass, need_eps()?, pot, q0, q1, big_t),
        Family::WEpsDissipative => ActionSpec::w_eps_dissipative(
            cfg.mass,
            cfg.dissipation,
            need_eps()?,
            pot,
            q0,
            q1,
            big_t,
        ),
        Family::Gamma => {
            let c = cfg
                .coefficients
                .ok_or_else(|| Error::Config("Gamma family needs coefficients".into()))?;
            ActionSpec::gamma(
                Coefficients {
                    alpha: c.alpha,
                    beta: c.beta,
                    gamma1: c.gamma1,
                    gamma2: c.gamma2,
                    kappa: c.kappa,
                },
                WeightFunction::ConstantOne,
                pot,
                q0,
                q1,
                big_t,
            )
        }
    };
    if cfg.family != Family::Gamma && cfg.coefficients.is_some() {
        return Err(Error::Config(format!(
            "coefficients apply to the Gamma family only, not {}",
            cfg.family.name()
        )));
    }
    if let Some(w) = &cfg.weight {
        if cfg.family.is_w_eps() {
            return Err(Error::Config(
                "W-eps families fix their weight from epsilon; remove 'weight'".into(),
            ));
        }
        spec = spec.with_weight(weight(w));
    }
    if let Some(s) = &cfg.signal {
        spec = spec.with_signal(signal(s, big_t, base)?);
    }
    if let Some(term) = &cfg.terminal {
        spec = spec.with_terminal(term.clone());
    }
    spec = spec.with_theorem_mode(cfg.theorem_mode);
    spec.validate().map_err(to_config)?;
    if spec.theorem_mode {
        spec.check_hypotheses()?;
    }
    Ok(spec)
}

pub fn dynamics_spec(cfg: &DynamicsConfig, base: &Path) -> Result<DynamicsSpec> {
    let spec = DynamicsSpec {
        kind: cfg.kind,
        mass: cfg.mass,
        dissipation: cfg.dissipation,
        potential: potential_spec(&cfg.potential, base)?,
        signal: cfg
            .signal
            .as_ref()
            .map(|s| signal(s, cfg.horizon, base))
            .transpose()?,
        q0: cfg.q0.clone(),
        q1: cfg.q1.clone(),
        horizon: cfg.horizon,
        dt: cfg.dt,
    };
    spec.validate().map_err(to_config)?;
    Ok(spec)
}

/// A config with every spec built and every data file loaded.
#[derive(Debug, Clone)]
pub enum Prepared {
    Minimize {
        df: DiscreteFunctional,
        opts: SolverOptions,
        starts: Option<usize>,
    },
    Integrate {
        spec: DynamicsSpec,
    },
    SweepEps {
        base: ActionSpec,
        grid: usize,
        epsilons: Vec<f64>,
        opts: SolverOptions,
    },
    SweepMass {
        sweep: MassSweep,
    },
    Causality {
        base: ActionSpec,
        grid: usize,
        epsilons: Vec<f64>,
        t_star: f64,
        offset: Vec<f64>,
        delta: Option<f64>,
        opts: SolverOptions,
    },
    Gradcheck {
        potential: PotentialSpec,
        points: usize,
        step: f64,
        functional: Option<DiscreteFunctional>,
    },
    Spectrum {
        df: DiscreteFunctional,
        count: usize,
        at: SpectrumPoint,
        opts: SolverOptions,
    },
}

fn discrete(spec: &ActionSpec, grid: usize) -> Result<DiscreteFunctional> {
    build_discrete(spec, grid).map_err(to_config)
}

/// Builds everything the experiment needs; `base` is the config file's directory.
/// Sweeps supply `ε` per row, so the action may leave it out.
fn sweep_action(action: &ActionConfig, epsilons: &[f64], base: &Path) -> Result<ActionSpec> {
    let first = *epsilons
        .first()
        .ok_or_else(|| Error::Config("epsilons must not be empty".into()))?;
    let mut action = action.clone();
    action.epsilon.get_or_insert(first);
    action_spec(&action, base)
}

pub fn prepare(cfg: &ExperimentConfig, base: &Path) -> Result<Prepared> {
    Ok(match &cfg.experiment {
        Experiment::Minimize(c) => {
            let spec = action_spec(&c.action, base)?;
            let df = discrete(&spec, c.grid)?;
            let mut opts = c.solver.options()?;
            if let Some(p) = &c.initial {
                let path = resolve(base, p);
                let init: Trajectory = read_trajectory_csv(&path).map_err(|e| {
                    Error::Config(format!(
                        "cannot load initial trajectory {}: {e}",
                        path.display()
                    ))
                })?;
                df.check_grid(&init).map_err(to_config)?;
                opts = opts.with_initialization(init);
            }
            if c.starts.is_some_and(|s| s < 2) {
                return Err(Error::Config("starts must be at least 2".into()));
            }
            if c.starts.is_some() && c.initial.is_some() {
                return Err(Error::Config("'starts' and 'initial' are exclusive".into()));
            }
            Prepared::Minimize {
                df,
                opts,
                starts: c.starts,
            }
        }
        Experiment::Integrate(c) => Prepared::Integrate {
            spec: dynamics_spec(&c.dynamics, base)?,
        },
        Experiment::SweepEps(c) => {
            let spec = sweep_action(&c.action, &c.epsilons, base)?;
            for &eps in &c.epsilons {
                discrete(&spec.clone().with_epsilon(eps), c.grid)?;
            }
            Prepared::SweepEps {
                base: spec,
                grid: c.grid,
                epsilons: c.epsilons.clone(),
                opts: c.solver.options()?,
            }
        }
        Experiment::SweepMass(c) => Prepared::SweepMass {
            sweep: MassSweep {
                potential: potential_spec(&c.potential, base)?,
                dissipation: c.dissipation,
                q0: c.q0.clone(),
                q1: c.q1.clone(),
                horizon: c.horizon,
                masses: c.masses.clone(),
                dt: c.dt,
                cutoff: c.cutoff,
            },
        },
        Experiment::Causality(c) => {
            let spec = sweep_action(&c.action, &c.epsilons, base)?;
            for &eps in &c.epsilons {
                discrete(&spec.clone().with_epsilon(eps), c.grid)?;
            }
            Prepared::Causality {
                base: spec,
                grid: c.grid,
                epsilons: c.epsilons.clone(),
                t_star: c.t_star,
                offset: c.offset.clone(),
                delta: c.delta,
                opts: c.solver.options()?,
            }
        }
        Experiment::Gradcheck(c) => {
            let functional = match (&c.action, c.grid) {
                (Some(a), Some(grid)) => Some(discrete(&action_spec(a, base)?, grid)?),
                (None, None) => None,
                _ => return Err(Error::Config("'action' and 'grid' go together".into())),
            };
            if c.points == 0 {
                return Err(Error::Config("gradcheck needs at least one point".into()));
            }
            Prepared::Gradcheck {
                potential: potential_spec(&c.potential, base)?,
                points: c.points,
                step: c.step,
                functional,
            }
        }
        Experiment::Spectrum(c) => {
            let spec = action_spec(&c.action, base)?;
            Prepared::Spectrum {
                df: discrete(&spec, c.grid)?,
                count: c.count,
                at: c.at,
                opts: c.solver.options()?,
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Hypothesis;

    const MINIMIZE: &str = r#"{
        "output_dir": "out",
        "seed": 1,
        "experiment": {
            "kind": "minimize",
            "grid": 100,
            "action": {
                "family": "W-eps",
                "epsilon": 0.1,
                "potential": {"kind": "quadratic", "dim": 1, "stiffness": [1.0]},
                "q0": [1.0], "q1": [0.0], "horizon": 1.0
            }
        }
    }"#;

    #[test]
    fn parses_and_prepares_minimize() {
        let cfg = parse(MINIMIZE).unwrap();
        assert_eq!(cfg.experiment.name(), "minimize");
        match prepare(&cfg, Path::new(".")).unwrap() {
            Prepared::Minimize { df, starts, .. } => {
                assert_eq!(df.intervals(), 100);
                assert_eq!(starts, None);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected_with_position() {
        let bad = MINIMIZE.replace("\"seed\": 1,", "\"seed\": 1, \"sede\": 2,");
        match parse(&bad) {
            Err(Error::Config(msg)) => assert!(msg.contains("line"), "{msg}"),
            other => panic!("expected config error, got {other:?}"),
        }
        let nested = MINIMIZE.replace("\"grid\": 100,", "\"grid\": 100, \"gird\": 3,");
        assert!(parse(&nested).is_err());
        let deep = MINIMIZE.replace("\"stiffness\": [1.0]", "\"stiffness\": [1.0], \"k\": 1");
        assert!(parse(&deep).is_err());
    }

    #[test]
    fn theorem_mode_violation_is_a_hypothesis_error() {
        let text = r#"{
            "output_dir": "out",
            "experiment": {
                "kind": "minimize", "grid": 50,
                "action": {
                    "family": "Gamma",
                    "coefficients": {"alpha": 1.0, "beta": 1.0, "kappa": 0.0},
                    "potential": {"kind": "double-well", "dim": 1},
                    "q0": [0.0], "q1": [0.0], "horizon": 1.0,
                    "theorem_mode": true
                }
            }
        }"#;
        let cfg = parse(text).unwrap();
        assert!(matches!(
            prepare(&cfg, Path::new(".")),
            Err(Error::Hypothesis(Hypothesis::KappaPositive))
        ));
    }

    #[test]
    fn missing_dataset_is_a_config_error() {
        let text = r#"{
            "output_dir": "out",
            "experiment": {
                "kind": "gradcheck",
                "potential": {"kind": "logistic-loss", "dataset": "no/such/file.csv"}
            }
        }"#;
        let cfg = parse(text).unwrap();
        assert!(matches!(
            prepare(&cfg, Path::new(".")),
            Err(Error::Config(_))
        ));
    }
}
