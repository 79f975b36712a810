//! Seeded generators for the model families and their closed-form
//! characteristics.
//!
//! Every path owns a ChaCha8 stream selected by `(master_seed, path_index)`;
//! components of a model read disjoint word ranges of that stream, so output
//! never depends on how an ensemble is scheduled across threads.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::characteristics::{CharacteristicsModel, JumpComponent, Truncation};
use crate::paths::{CadlagPath, Jump, TimeGrid};
use crate::quadrature::{gauss_hermite, gauss_legendre, LAW_NODES};
use crate::{Error, Result};

/// Largest fBm grid generated by circulant embedding.
pub const FBM_CAPACITY: usize = 1 << 24;

const COMPONENT_WORD_STRIDE: u128 = 1 << 48;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum JumpLaw {
    DiscreteAtoms { values: Vec<f64>, probabilities: Vec<f64> },
    Gaussian { mean: f64, sd: f64 },
    Uniform { low: f64, high: f64 },
}

impl JumpLaw {
    pub fn validate(&self) -> Result<()> {
        match self {
            JumpLaw::DiscreteAtoms { values, probabilities } => {
                if values.is_empty() || values.len() != probabilities.len() {
                    return Err(Error::InvalidModel("atoms need one probability per value".into()));
                }
                if probabilities.iter().any(|p| !(*p >= 0.0)) {
                    return Err(Error::InvalidModel("negative atom probability".into()));
                }
                let total: f64 = probabilities.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidModel(format!("atom probabilities sum to {total}")));
                }
            }
            JumpLaw::Gaussian { mean, sd } => {
                if !mean.is_finite() || !(*sd >= 0.0) || !sd.is_finite() {
                    return Err(Error::InvalidModel("gaussian law needs finite mean and sd >= 0".into()));
                }
            }
            JumpLaw::Uniform { low, high } => {
                if !(low.is_finite() && high.is_finite() && low < high) {
                    return Err(Error::InvalidModel("uniform law needs low < high".into()));
                }
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            JumpLaw::DiscreteAtoms { values, probabilities } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (v, p) in values.iter().zip(probabilities) {
                    acc += p;
                    if u < acc {
                        return *v;
                    }
                }
                *values.last().unwrap()
            }
            JumpLaw::Gaussian { mean, sd } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + sd * z
            }
            JumpLaw::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
        }
    }

    /// Weighted nodes used for every expectation under the law: exact for
    /// atoms, 40-node Gauss–Hermite / Gauss–Legendre otherwise.
    pub fn nodes(&self) -> Vec<(f64, f64)> {
        match self {
            JumpLaw::DiscreteAtoms { values, probabilities } => {
                values.iter().copied().zip(probabilities.iter().copied()).collect()
            }
            JumpLaw::Gaussian { mean, sd } => {
                let norm = std::f64::consts::PI.sqrt();
                gauss_hermite(LAW_NODES)
                    .into_iter()
                    .map(|(x, w)| (mean + std::f64::consts::SQRT_2 * sd * x, w / norm))
                    .collect()
            }
            JumpLaw::Uniform { low, high } => {
                let (mid, half) = (0.5 * (low + high), 0.5 * (high - low));
                gauss_legendre(LAW_NODES).into_iter().map(|(x, w)| (mid + half * x, 0.5 * w)).collect()
            }
        }
    }

    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes().iter().map(|&(x, w)| w * f(x)).sum()
    }
}

/// Deterministic drift `f(t) = Σ c_k t^k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriftFunction {
    Polynomial { coefficients: Vec<f64> },
}

impl DriftFunction {
    pub fn identity() -> Self {
        DriftFunction::Polynomial { coefficients: vec![0.0, 1.0] }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            DriftFunction::Polynomial { coefficients } => coefficients.iter().rev().fold(0.0, |acc, c| acc * t + c),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    BrownianMotion {
        sigma: f64,
    },
    FractionalBm {
        hurst: f64,
        scale: f64,
    },
    CompoundPoisson {
        rate: f64,
        jump_law: JumpLaw,
    },
    /// `drift` is the drift characteristic relative to `truncation`.
    LevyJumpDiffusion {
        drift: f64,
        sigma: f64,
        rate: f64,
        jump_law: JumpLaw,
        #[serde(default)]
        truncation: Truncation,
    },
    DeterministicDrift {
        f: DriftFunction,
    },
    Composite {
        components: Vec<ModelSpec>,
    },
}

/// Primitive building blocks every model flattens into.
#[derive(Debug, Clone, PartialEq)]
pub enum Component {
    Diffusion { sigma: f64 },
    Fbm { hurst: f64, scale: f64 },
    Jumps { rate: f64, law: JumpLaw },
    LinearDrift { rate: f64 },
    Drift { f: DriftFunction },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentKind {
    Diffusion,
    Fbm,
    Jumps,
    Drift,
}

impl Component {
    pub fn kind(&self) -> ComponentKind {
        match self {
            Component::Diffusion { .. } => ComponentKind::Diffusion,
            Component::Fbm { .. } => ComponentKind::Fbm,
            Component::Jumps { .. } => ComponentKind::Jumps,
            Component::LinearDrift { .. } | Component::Drift { .. } => ComponentKind::Drift,
        }
    }
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidModel(m.to_string()));
        match self {
            ModelSpec::BrownianMotion { sigma } => {
                if !(*sigma >= 0.0 && sigma.is_finite()) {
                    return bad("sigma must be >= 0");
                }
            }
            ModelSpec::FractionalBm { hurst, scale } => {
                if !(*hurst > 0.5 && *hurst < 1.0) {
                    return Err(Error::InvalidModel(format!("Hurst index {hurst} outside (0.5, 1)")));
                }
                if !(*scale >= 0.0 && scale.is_finite()) {
                    return bad("fBm scale must be >= 0");
                }
            }
            ModelSpec::CompoundPoisson { rate, jump_law } => {
                if !(*rate >= 0.0 && rate.is_finite()) {
                    return bad("rate must be >= 0");
                }
                jump_law.validate()?;
            }
            ModelSpec::LevyJumpDiffusion { drift, sigma, rate, jump_law, truncation } => {
                if !drift.is_finite() {
                    return bad("drift must be finite");
                }
                if !(*sigma >= 0.0 && sigma.is_finite()) {
                    return bad("sigma must be >= 0");
                }
                if !(*rate >= 0.0 && rate.is_finite()) {
                    return bad("rate must be >= 0");
                }
                jump_law.validate()?;
                truncation.validate()?;
            }
            ModelSpec::DeterministicDrift { f } => match f {
                DriftFunction::Polynomial { coefficients } => {
                    if coefficients.iter().any(|c| !c.is_finite()) {
                        return bad("drift coefficients must be finite");
                    }
                }
            },
            ModelSpec::Composite { components } => {
                if components.is_empty() {
                    return bad("composite model without components");
                }
                for c in components {
                    c.validate()?;
                }
            }
        }
        Ok(())
    }

    /// Flatten into primitive components, in declaration order.
    pub fn components(&self) -> Vec<Component> {
        match self {
            ModelSpec::BrownianMotion { sigma } => vec![Component::Diffusion { sigma: *sigma }],
            ModelSpec::FractionalBm { hurst, scale } => vec![Component::Fbm { hurst: *hurst, scale: *scale }],
            ModelSpec::CompoundPoisson { rate, jump_law } => {
                vec![Component::Jumps { rate: *rate, law: jump_law.clone() }]
            }
            ModelSpec::LevyJumpDiffusion { drift, sigma, rate, jump_law, truncation } => {
                // path drift = b_k − λ E[k(J)]
                let compensator = rate * jump_law.expect(|x| truncation.eval(x));
                vec![
                    Component::Diffusion { sigma: *sigma },
                    Component::Jumps { rate: *rate, law: jump_law.clone() },
                    Component::LinearDrift { rate: drift - compensator },
                ]
            }
            ModelSpec::DeterministicDrift { f } => vec![Component::Drift { f: f.clone() }],
            ModelSpec::Composite { components } => components.iter().flat_map(|c| c.components()).collect(),
        }
    }

    pub fn is_semimartingale(&self) -> bool {
        !self.components().iter().any(|c| matches!(c, Component::Fbm { .. }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub path_index: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, path_index: u64) -> Self {
        Self { master_seed, path_index }
    }

    fn component_rng(&self, component: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.path_index);
        rng.set_word_pos(component as u128 * COMPONENT_WORD_STRIDE);
        rng
    }
}

/// One primitive component's contribution to a simulated path.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentLog {
    pub kind: ComponentKind,
    pub path: CadlagPath,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedPath {
    pub path: CadlagPath,
    pub components: Vec<ComponentLog>,
}

impl SimulatedPath {
    /// Sum of the logged components of one kind (zero path when absent).
    pub fn component_sum(&self, kind: ComponentKind) -> CadlagPath {
        let grid = *self.path.grid();
        self.components
            .iter()
            .filter(|c| c.kind == kind)
            .fold(CadlagPath::constant(grid, 0.0), |acc, c| acc.add(&c.path).expect("same grid"))
    }
}

/// Exact fractional Gaussian noise by circulant embedding.
struct FbmGenerator {
    n: usize,
    sqrt_eig: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FbmGenerator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FbmGenerator").field("n", &self.n).finish()
    }
}

impl FbmGenerator {
    fn new(grid: &TimeGrid, hurst: f64, scale: f64) -> Result<Self> {
        let n = grid.n_steps();
        if n > FBM_CAPACITY {
            return Err(Error::Capacity { requested: n, capacity: FBM_CAPACITY });
        }
        let two_h = 2.0 * hurst;
        let var = scale * scale * grid.dt().powf(two_h);
        let gamma = |k: usize| {
            let k = k as f64;
            0.5 * var * ((k + 1.0).powf(two_h) - 2.0 * k.powf(two_h) + (k - 1.0).abs().powf(two_h))
        };
        let size = 2 * n;
        let mut row: Vec<Complex<f64>> = (0..size)
            .map(|j| {
                let lag = if j <= n { j } else { size - j };
                Complex::new(gamma(lag), 0.0)
            })
            .collect();
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(size);
        fft.process(&mut row);
        let peak = row.iter().map(|c| c.re.abs()).fold(0.0, f64::max);
        let mut sqrt_eig = Vec::with_capacity(size);
        for c in &row {
            if c.re < -1e-10 * peak.max(f64::MIN_POSITIVE) {
                return Err(Error::InvalidModel("circulant embedding is not nonnegative definite".into()));
            }
            sqrt_eig.push((c.re.max(0.0) / size as f64).sqrt());
        }
        Ok(Self { n, sqrt_eig, fft })
    }

    fn increments<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut buf: Vec<Complex<f64>> = self
            .sqrt_eig
            .iter()
            .map(|&s| {
                let a: f64 = StandardNormal.sample(rng);
                let b: f64 = StandardNormal.sample(rng);
                Complex::new(s * a, s * b)
            })
            .collect();
        self.fft.process(&mut buf);
        buf.truncate(self.n);
        buf.into_iter().map(|c| c.re).collect()
    }
}

#[derive(Debug)]
enum Prepared {
    Diffusion { sigma: f64 },
    Fbm(FbmGenerator),
    Jumps { rate: f64, law: JumpLaw },
    LinearDrift { rate: f64 },
    Drift { f: DriftFunction },
}

/// Model bound to a grid, with per-grid precomputation (fBm spectra) cached.
#[derive(Debug)]
pub struct Simulator {
    grid: TimeGrid,
    parts: Vec<(ComponentKind, Prepared)>,
}

impl Simulator {
    pub fn new(model: &ModelSpec, grid: TimeGrid) -> Result<Self> {
        model.validate()?;
        let parts = model
            .components()
            .into_iter()
            .map(|c| {
                let kind = c.kind();
                let prepared = match c {
                    Component::Diffusion { sigma } => Prepared::Diffusion { sigma },
                    Component::Fbm { hurst, scale } => Prepared::Fbm(FbmGenerator::new(&grid, hurst, scale)?),
                    Component::Jumps { rate, law } => Prepared::Jumps { rate, law },
                    Component::LinearDrift { rate } => Prepared::LinearDrift { rate },
                    Component::Drift { f } => Prepared::Drift { f },
                };
                Ok((kind, prepared))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { grid, parts })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn path(&self, seed: SeedSpec) -> SimulatedPath {
        let grid = self.grid;
        let components: Vec<ComponentLog> = self
            .parts
            .iter()
            .enumerate()
            .map(|(j, (kind, part))| {
                let mut rng = seed.component_rng(j);
                let path = match part {
                    Prepared::Diffusion { sigma } => {
                        let sd = sigma * grid.dt().sqrt();
                        cumulative(grid, (0..grid.n_steps()).map(|_| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            sd * z
                        }))
                    }
                    Prepared::Fbm(gen) => cumulative(grid, gen.increments(&mut rng).into_iter()),
                    Prepared::Jumps { rate, law } => compound_poisson(grid, *rate, law, &mut rng),
                    Prepared::LinearDrift { rate } => {
                        CadlagPath::from_fn(grid, |t| rate * t).expect("finite drift")
                    }
                    Prepared::Drift { f } => CadlagPath::from_fn(grid, |t| f.eval(t)).expect("finite drift"),
                };
                ComponentLog { kind: *kind, path }
            })
            .collect();
        let path = components
            .iter()
            .skip(1)
            .fold(components[0].path.clone(), |acc, c| acc.add(&c.path).expect("same grid"));
        SimulatedPath { path, components }
    }

    /// Paths `0..n` of the substream family `master_seed`, in index order.
    pub fn ensemble(&self, master_seed: u64, n: usize) -> Vec<SimulatedPath> {
        (0..n as u64).into_par_iter().map(|i| self.path(SeedSpec::new(master_seed, i))).collect()
    }
}

fn cumulative(grid: TimeGrid, increments: impl Iterator<Item = f64>) -> CadlagPath {
    let mut values = Vec::with_capacity(grid.len());
    let mut level = 0.0;
    values.push(level);
    for d in increments {
        level += d;
        values.push(level);
    }
    CadlagPath::continuous(grid, values).expect("grid-sized increments")
}

/// Jump times snapped to the nearest node (never node 0); jumps landing on
/// the same node are merged.
fn compound_poisson<R: Rng + ?Sized>(grid: TimeGrid, rate: f64, law: &JumpLaw, rng: &mut R) -> CadlagPath {
    let mean = rate * grid.horizon();
    let count = if mean > 0.0 {
        Poisson::new(mean).expect("positive mean").sample(rng) as usize
    } else {
        0
    };
    let mut events: Vec<(usize, f64)> = (0..count)
        .map(|_| {
            let t = grid.horizon() * rng.random::<f64>();
            // a jump in (t_{i−1}, t_i] is first seen at node i
            let index = ((t / grid.dt()).ceil() as usize).clamp(1, grid.n_steps());
            (index, law.sample(rng))
        })
        .collect();
    events.sort_by_key(|e| e.0);
    let mut jumps: Vec<Jump> = Vec::with_capacity(events.len());
    for (index, size) in events {
        match jumps.last_mut() {
            Some(last) if last.index == index => last.size += size,
            _ => jumps.push(Jump { index, size }),
        }
    }
    jumps.retain(|j| j.size != 0.0);
    let mut values = vec![0.0; grid.len()];
    let mut level = 0.0;
    let mut next = jumps.iter().peekable();
    for (i, v) in values.iter_mut().enumerate() {
        if let Some(j) = next.next_if(|j| j.index == i) {
            level += j.size;
        }
        *v = level;
    }
    CadlagPath::new(grid, values, jumps).expect("valid registry")
}

pub fn simulate_path(model: &ModelSpec, grid: TimeGrid, seed: SeedSpec) -> Result<SimulatedPath> {
    Ok(Simulator::new(model, grid)?.path(seed))
}

pub fn simulate_ensemble(model: &ModelSpec, grid: TimeGrid, master_seed: u64, n: usize) -> Result<Vec<SimulatedPath>> {
    if n == 0 {
        return Err(Error::InvalidModel("ensemble size must be at least 1".into()));
    }
    Ok(Simulator::new(model, grid)?.ensemble(master_seed, n))
}

/// Characteristics `(B^k, C, ν)` of `model` relative to the truncation `k`.
pub fn known_characteristics(model: &ModelSpec, k: Truncation) -> Result<CharacteristicsModel> {
    model.validate()?;
    k.validate()?;
    let mut ch = CharacteristicsModel::empty(k);
    for (index, c) in model.components().into_iter().enumerate() {
        match c {
            Component::Diffusion { sigma } => ch.diffusion_rate += sigma * sigma,
            Component::Fbm { .. } => ch.path_dependent.push(index),
            Component::Jumps { rate, law } => {
                let jc = JumpComponent::new(rate, law);
                ch.drift_rate += rate * jc.expect(|x| k.eval(x));
                ch.jumps.push(jc);
            }
            Component::LinearDrift { rate } => ch.drift_rate += rate,
            Component::Drift { f } => ch.drift_functions.push(f),
        }
    }
    Ok(ch)
}
