use std::fs;
use std::path::{Path, PathBuf};

use dirichlet_reg_core::characteristics::Truncation;
use dirichlet_reg_core::itoverify::{Functional, ResidualKind, TestFunction, TestPlan};
use dirichlet_reg_core::levyexponent::{RecoveryOptions, Triplet1D};
use dirichlet_reg_core::paths::{CadlagPath, TimeGrid};
use dirichlet_reg_core::regularize::EpsilonSchedule;
use dirichlet_reg_core::simulate::ModelSpec;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// The published schema for [`ExperimentConfig`].
pub const SCHEMA: &str = include_str!("../schema/experiment-config.schema.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub horizon: f64,
    pub steps: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { horizon: 1.0, steps: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResidualConfig {
    pub kind: ResidualKind,
    pub alpha_se: f64,
    /// Defaults to `T/4, T/2, T`.
    pub times: Option<Vec<f64>>,
    /// Defaults to `(T/4, T/2), (T/2, T)`.
    pub pairs: Option<Vec<(f64, f64)>>,
    pub functionals: Vec<Functional>,
    /// Deliberate violation for negative controls.
    pub injected_drift: f64,
    /// Largest fraction of paths allowed to carry a non-convergence flag.
    pub nonconvergence_tolerance: f64,
}

impl Default for ResidualConfig {
    fn default() -> Self {
        Self {
            kind: ResidualKind::WeakDirichlet,
            alpha_se: 3.0,
            times: None,
            pairs: None,
            functionals: Functional::ALL.to_vec(),
            injected_drift: 0.0,
            nonconvergence_tolerance: 0.05,
        }
    }
}

/// Trajectory files for `qv` and `fwdint`; simulated from `model` when absent.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InputConfig {
    /// `X` (the integrator for `fwdint`).
    pub path: Option<PathBuf>,
    /// `Y` for `[X,Y]`, or the integrand for `fwdint`.
    pub other: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RecoverConfig {
    /// `u,re,im` samples of ψ.
    pub psi: Option<PathBuf>,
    /// Generate ψ from this triplet instead.
    pub triplet: Option<Triplet1D>,
    pub u_max: f64,
    pub points: usize,
    pub w: f64,
    pub options: RecoveryOptions,
}

impl Default for RecoverConfig {
    fn default() -> Self {
        Self { psi: None, triplet: None, u_max: 40.0, points: 2048, w: 2.0, options: RecoveryOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    /// Coarsening factors of the base grid; each gives one Δt.
    pub coarsening: Vec<usize>,
    /// ε values; default is the schedule of the coarsest grid.
    pub eps: Option<Vec<f64>>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { coarsening: vec![1, 2, 5, 10], eps: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub paths: usize,
    /// ε as multiples of Δt, strictly decreasing.
    #[serde(default)]
    pub schedule: Option<Vec<usize>>,
    #[serde(default)]
    pub truncation: Truncation,
    #[serde(default = "exptanh")]
    pub function: TestFunction,
    #[serde(default)]
    pub residual: ResidualConfig,
    #[serde(default)]
    pub input: InputConfig,
    #[serde(default)]
    pub recover: RecoverConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn one() -> usize {
    1
}

fn exptanh() -> TestFunction {
    TestFunction::ExpTanh
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    pub steps: Option<usize>,
    pub horizon: Option<f64>,
    pub function: Option<String>,
    pub alpha_se: Option<f64>,
    pub inject_drift: Option<f64>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn time_grid(&self) -> Result<TimeGrid, CliError> {
        Ok(TimeGrid::new(self.grid.horizon, self.grid.steps)?)
    }

    pub fn epsilon_schedule(&self) -> Result<EpsilonSchedule, CliError> {
        let grid = self.time_grid()?;
        match &self.schedule {
            Some(m) => Ok(EpsilonSchedule::from_multiples(&grid, m.clone())?),
            None => Ok(EpsilonSchedule::default_for(&grid)?),
        }
    }

    pub fn model(&self) -> Result<&ModelSpec, CliError> {
        self.model.as_ref().ok_or_else(|| CliError::Config("this command needs a model".into()))
    }

    pub fn test_plan(&self) -> TestPlan {
        let t = self.grid.horizon;
        TestPlan {
            times: self.residual.times.clone().unwrap_or_else(|| vec![0.25 * t, 0.5 * t, t]),
            pairs: self.residual.pairs.clone().unwrap_or_else(|| vec![(0.25 * t, 0.5 * t), (0.5 * t, t)]),
            functionals: self.residual.functionals.clone(),
            alpha_se: self.residual.alpha_se,
        }
    }

    /// Apply overrides, make every default explicit, anchor relative input
    /// paths at `base`, and validate. The result is what the manifest stores.
    pub fn resolve(mut self, base: &Path, o: &Overrides) -> Result<Self, CliError> {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.paths {
            self.paths = v;
        }
        if let Some(v) = o.steps {
            self.grid.steps = v;
        }
        if let Some(v) = o.horizon {
            self.grid.horizon = v;
        }
        if let Some(name) = &o.function {
            self.function = TestFunction::from_name(name)?;
        }
        if let Some(v) = o.alpha_se {
            self.residual.alpha_se = v;
        }
        if let Some(v) = o.inject_drift {
            self.residual.injected_drift = v;
        }
        self.output_dir = None;

        let anchor = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        anchor(&mut self.input.path);
        anchor(&mut self.input.other);
        anchor(&mut self.recover.psi);

        // a trajectory file fixes the grid
        if let Some(p) = &self.input.path {
            let g = *read_path(p)?.grid();
            self.grid = GridConfig { horizon: g.horizon(), steps: g.n_steps() };
        }

        let grid = self.time_grid()?;
        self.schedule = Some(self.epsilon_schedule()?.multiples().to_vec());
        let plan = self.test_plan();
        plan.validate(&grid)?;
        self.residual.times = Some(plan.times);
        self.residual.pairs = Some(plan.pairs);
        if let Some(m) = &self.model {
            m.validate()?;
        }
        self.truncation.validate()?;
        self.function.validate()?;
        if self.paths == 0 {
            return Err(CliError::Config("paths must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.residual.nonconvergence_tolerance) {
            return Err(CliError::Config("nonconvergence_tolerance must lie in [0, 1]".into()));
        }
        if let Some(t) = &self.recover.triplet {
            t.validate()?;
        }
        if self.sweep.coarsening.is_empty() || self.sweep.coarsening.iter().any(|&f| f == 0 || grid.n_steps() % f != 0) {
            return Err(CliError::Config("sweep coarsening factors must divide the step count".into()));
        }
        Ok(self)
    }
}

pub fn read_path(path: &Path) -> Result<CadlagPath, CliError> {
    let file = fs::File::open(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    CadlagPath::read_csv(file).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}
