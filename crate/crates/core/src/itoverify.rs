//! Martingale-problem residuals and their Monte Carlo tests.
//!
//! For a bounded `F ∈ C^{1,2}` the residual is
//!
//! ```text
//! M^F_t = F(t,X_t) − F(0,X_0) − ∫∂_sF ds − ½∫∂²_xF (dC + d[B^k,B^k]^c)
//!         − ∫∂_xF d⁻B^k − (F(·,X_−+x) − F(·,X_−) − k(x)∂_xF(·,X_−)) ⋆ ν
//! ```
//!
//! All time integrals use the left endpoint of each grid cell. On a cell
//! `(t_i, t_{i+1}]` the left limit `X_{s−}` equals `X_{t_i}`, so the node value
//! is used there; fixed-time atoms use the registered left limit at their node.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::characteristics::{CharacteristicsModel, Truncation};
use crate::paths::{CadlagPath, TimeGrid};
use crate::quadrature::{left_riemann, left_stieltjes, LAW_NODES};
use crate::regularize::{covariation_limit, forward_integral_limit, qv_decompose, EpsilonSchedule};
use crate::simulate::{known_characteristics, ComponentLog, ModelSpec, SeedSpec, Simulator};
use crate::stats::{compensated_sum, mean_and_se, sup_norm, z_score};
use crate::{Error, Result};

/// `F` together with `∂_tF`, `∂_xF`, `∂²_xF` at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Derivatives {
    pub f: f64,
    pub ft: f64,
    pub fx: f64,
    pub fxx: f64,
}

/// Built-in bounded `C^{1,2}` test functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum TestFunction {
    /// `e^{−t} tanh x`
    ExpTanh,
    /// `e^{−t} sin x`
    DampedSine,
    /// `(1 − u²)³` for `u = (x − center)/radius`, zero outside.
    Bump { center: f64, radius: f64 },
    /// `x ↦ inner(0, x)`.
    TimeHomogeneous { inner: Box<TestFunction> },
    /// `Σ a_i F_i`.
    Linear { terms: Vec<(f64, TestFunction)> },
}

impl TestFunction {
    pub fn bump() -> Self {
        TestFunction::Bump { center: 0.0, radius: 2.0 }
    }

    pub fn time_homogeneous(inner: TestFunction) -> Self {
        TestFunction::TimeHomogeneous { inner: Box::new(inner) }
    }

    /// Parse a CLI name.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "exptanh" => Ok(TestFunction::ExpTanh),
            "dampedsine" => Ok(TestFunction::DampedSine),
            "bump" => Ok(Self::bump()),
            "tanh" => Ok(Self::time_homogeneous(TestFunction::ExpTanh)),
            other => Err(Error::Parse(format!("unknown test function {other:?}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TestFunction::Bump { center, radius } if !(radius.is_finite() && *radius > 0.0 && center.is_finite()) => {
                Err(Error::InvalidModel(format!("bump radius must be positive, got {radius}")))
            }
            TestFunction::TimeHomogeneous { inner } => inner.validate(),
            TestFunction::Linear { terms } => terms.iter().try_for_each(|(_, f)| f.validate()),
            _ => Ok(()),
        }
    }

    /// Declared `sup |F|`.
    pub fn bound(&self) -> f64 {
        match self {
            TestFunction::ExpTanh | TestFunction::DampedSine | TestFunction::Bump { .. } => 1.0,
            TestFunction::TimeHomogeneous { inner } => inner.bound(),
            TestFunction::Linear { terms } => terms.iter().map(|(a, f)| a.abs() * f.bound()).sum(),
        }
    }

    pub fn value(&self, t: f64, x: f64) -> f64 {
        match self {
            TestFunction::ExpTanh => (-t).exp() * x.tanh(),
            TestFunction::DampedSine => (-t).exp() * x.sin(),
            TestFunction::Bump { center, radius } => {
                let u = (x - center) / radius;
                if u.abs() >= 1.0 {
                    0.0
                } else {
                    (1.0 - u * u).powi(3)
                }
            }
            TestFunction::TimeHomogeneous { inner } => inner.value(0.0, x),
            TestFunction::Linear { terms } => terms.iter().map(|(a, f)| a * f.value(t, x)).sum(),
        }
    }

    /// `F(t, ·)` with the time factor evaluated once.
    pub fn at_time(&self, t: f64) -> Slice<'_> {
        match self {
            TestFunction::ExpTanh | TestFunction::DampedSine => Slice { scale: (-t).exp(), t, f: self },
            TestFunction::Bump { .. } | TestFunction::TimeHomogeneous { .. } => Slice { scale: 1.0, t: 0.0, f: self },
            TestFunction::Linear { .. } => Slice { scale: 1.0, t, f: self },
        }
    }

    pub fn eval(&self, t: f64, x: f64) -> Derivatives {
        match self {
            TestFunction::ExpTanh => {
                let e = (-t).exp();
                let th = x.tanh();
                let sech2 = 1.0 - th * th;
                Derivatives { f: e * th, ft: -e * th, fx: e * sech2, fxx: -2.0 * e * th * sech2 }
            }
            TestFunction::DampedSine => {
                let e = (-t).exp();
                let (s, c) = x.sin_cos();
                Derivatives { f: e * s, ft: -e * s, fx: e * c, fxx: -e * s }
            }
            TestFunction::Bump { center, radius } => {
                let u = (x - center) / radius;
                if u.abs() >= 1.0 {
                    return Derivatives { f: 0.0, ft: 0.0, fx: 0.0, fxx: 0.0 };
                }
                let v = 1.0 - u * u;
                Derivatives {
                    f: v * v * v,
                    ft: 0.0,
                    fx: -6.0 * u * v * v / radius,
                    fxx: v * (30.0 * u * u - 6.0) / (radius * radius),
                }
            }
            TestFunction::TimeHomogeneous { inner } => Derivatives { ft: 0.0, ..inner.eval(0.0, x) },
            TestFunction::Linear { terms } => {
                let mut d = Derivatives { f: 0.0, ft: 0.0, fx: 0.0, fxx: 0.0 };
                for (a, g) in terms {
                    let e = g.eval(t, x);
                    d.f += a * e.f;
                    d.ft += a * e.ft;
                    d.fx += a * e.fx;
                    d.fxx += a * e.fxx;
                }
                d
            }
        }
    }
}

/// `x ↦ F(t, x)` for a fixed `t`.
#[derive(Debug, Clone, Copy)]
pub struct Slice<'a> {
    scale: f64,
    t: f64,
    f: &'a TestFunction,
}

impl Slice<'_> {
    pub fn value(&self, x: f64) -> f64 {
        match self.f {
            TestFunction::ExpTanh => self.scale * x.tanh(),
            TestFunction::DampedSine => self.scale * x.sin(),
            f => f.value(self.t, x),
        }
    }
}

/// The five correction terms, each with the sign it carries in `M^F`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualTerms {
    pub increment: Vec<f64>,
    pub time_drift: Vec<f64>,
    pub second_order: Vec<f64>,
    pub forward: Vec<f64>,
    pub compensator: Vec<f64>,
    /// Deliberate violation added by [`inject_drift`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub injected: Option<Vec<f64>>,
}

impl ResidualTerms {
    fn sum_at(&self, i: usize) -> f64 {
        self.increment[i]
            + self.time_drift[i]
            + self.second_order[i]
            + self.forward[i]
            + self.compensator[i]
            + self.injected.as_ref().map_or(0.0, |v| v[i])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualPath {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
    pub terms: ResidualTerms,
    /// False when a forward integral or bracket inside the residual did not converge.
    pub converged: bool,
    pub forward_error: f64,
}

impl ResidualPath {
    fn assemble(grid: TimeGrid, terms: ResidualTerms, converged: bool, forward_error: f64) -> Self {
        let values = (0..grid.len()).map(|i| terms.sum_at(i)).collect();
        Self { grid, values, terms, converged, forward_error }
    }

    pub fn at(&self, t: f64) -> Result<f64> {
        Ok(self.values[self.grid.index_of(t)?])
    }
}

/// Add the deterministic drift `rate · t` to a residual.
pub fn inject_drift(residual: &ResidualPath, rate: f64) -> ResidualPath {
    let mut terms = residual.terms.clone();
    let extra: Vec<f64> = residual.grid.times().map(|t| rate * t).collect();
    terms.injected = Some(match terms.injected.take() {
        Some(prev) => prev.iter().zip(&extra).map(|(a, b)| a + b).collect(),
        None => extra,
    });
    ResidualPath::assemble(residual.grid, terms, residual.converged, residual.forward_error)
}

struct Common {
    grid: TimeGrid,
    x: Vec<f64>,
    d: Vec<Derivatives>,
    increment: Vec<f64>,
    time_drift: Vec<f64>,
    compensator: Vec<f64>,
}

/// Terms shared by both residuals: `F` increment, `∂_t`, and the `⋆ν` compensator.
fn common_terms(x: &CadlagPath, ch: &CharacteristicsModel, f: &TestFunction) -> Result<Common> {
    f.validate()?;
    let grid = *x.grid();
    let dt = grid.dt();
    let xs = x.values().to_vec();
    let d: Vec<Derivatives> = xs.iter().enumerate().map(|(i, &v)| f.eval(grid.time(i), v)).collect();
    let increment: Vec<f64> = d.iter().map(|e| e.f - d[0].f).collect();
    let ft: Vec<f64> = d.iter().map(|e| e.ft).collect();
    let time_drift: Vec<f64> = left_riemann(&ft, dt).into_iter().map(|v| -v).collect();

    let k = ch.truncation;
    // λ E[F(t, x + J) − F(t, x) − k(J) ∂_xF(t, x)] per cell
    let tables: Vec<ShiftTable> = ch.jumps.iter().map(|j| ShiftTable::new(f, j.nodes(), k, j.rate)).collect();
    let density: Vec<f64> = (0..grid.len())
        .map(|i| {
            let slice = f.at_time(grid.time(i));
            let (xi, di) = (xs[i], d[i]);
            tables.iter().map(|tab| tab.compensator_density(&slice, xi, di)).sum()
        })
        .collect();
    let mut compensator = left_riemann(&density, dt);
    for atom in &ch.fixed_atoms {
        let i = grid.index_of(atom.time)?;
        let t = grid.time(i);
        let left = x.left_value(i);
        let e = f.eval(t, left);
        let mass = ch.atom_integral(atom, |y| f.value(t, left + y) - e.f - k.eval(y) * e.fx);
        for c in &mut compensator[i..] {
            *c += mass;
        }
    }
    compensator.iter_mut().for_each(|c| *c = -*c);
    Ok(Common { grid, x: xs, d, increment, time_drift, compensator })
}

/// `λ Σ_j w_j F(t, x + y_j)` over a law's quadrature nodes, using shift
/// identities for the separable built-ins so no transcendental call is made per node.
struct ShiftTable {
    rate: f64,
    weights: Vec<f64>,
    shifts: Vec<f64>,
    kind: ShiftKind,
    total: f64,
    k_mean: f64,
}

enum ShiftKind {
    /// `e^{2y}`: `tanh(x + y) = (e^{2x}e^{2y} − 1)/(e^{2x}e^{2y} + 1)`
    Tanh(Vec<f64>),
    /// `(sin y, cos y)`
    Sine(Vec<f64>, Vec<f64>),
    Generic,
}

impl ShiftTable {
    fn new(f: &TestFunction, nodes: &[(f64, f64)], k: Truncation, rate: f64) -> Self {
        let shifts: Vec<f64> = nodes.iter().map(|n| n.0).collect();
        let weights: Vec<f64> = nodes.iter().map(|n| n.1).collect();
        let kind = match f {
            TestFunction::ExpTanh => ShiftKind::Tanh(shifts.iter().map(|y| (2.0 * y).exp()).collect()),
            TestFunction::DampedSine => {
                ShiftKind::Sine(shifts.iter().map(|y| y.sin()).collect(), shifts.iter().map(|y| y.cos()).collect())
            }
            _ => ShiftKind::Generic,
        };
        let total = weights.iter().sum();
        let k_mean = nodes.iter().map(|&(y, w)| w * k.eval(y)).sum();
        Self { rate, weights, shifts, kind, total, k_mean }
    }

    fn shifted_mean(&self, slice: &Slice<'_>, x: f64) -> f64 {
        match &self.kind {
            ShiftKind::Tanh(e2y) => {
                let e2x = (2.0 * x).exp();
                let mut acc = 0.0;
                for (w, ey) in self.weights.iter().zip(e2y) {
                    let p = e2x * ey;
                    let th = if p < 1e300 { (p - 1.0) / (p + 1.0) } else { 1.0 };
                    acc += w * th;
                }
                slice.scale * acc
            }
            ShiftKind::Sine(sy, cy) => {
                let (sx, cx) = x.sin_cos();
                let mut acc = 0.0;
                for ((w, s), c) in self.weights.iter().zip(sy).zip(cy) {
                    acc += w * (sx * c + cx * s);
                }
                slice.scale * acc
            }
            ShiftKind::Generic => self.weights.iter().zip(&self.shifts).map(|(w, y)| w * slice.value(x + y)).sum(),
        }
    }

    fn compensator_density(&self, slice: &Slice<'_>, x: f64, d: Derivatives) -> f64 {
        self.rate * (self.shifted_mean(slice, x) - d.f * self.total - d.fx * self.k_mean)
    }
}

fn c_increments(ch: &CharacteristicsModel, grid: &TimeGrid) -> Vec<f64> {
    grid.times().map(|t| ch.c_at(t)).collect()
}

/// Residual built from the weak-Dirichlet characteristics.
///
/// `logs` supplies path-dependent parts of `B^k` (fBm components); for such
/// models the forward integral and `[B^k,B^k]^c` come from the ε-schedule.
pub fn residual_weak_dirichlet(
    x: &CadlagPath,
    logs: &[ComponentLog],
    ch: &CharacteristicsModel,
    f: &TestFunction,
    schedule: &EpsilonSchedule,
) -> Result<ResidualPath> {
    let Common { grid, d, increment, time_drift, compensator, .. } = common_terms(x, ch, f)?;
    let bk = ch.drift_path(&grid, logs)?;
    let fx: Vec<f64> = d.iter().map(|e| e.fx).collect();
    let fxx: Vec<f64> = d.iter().map(|e| e.fxx).collect();

    let mut integrator = c_increments(ch, &grid);
    let (forward_raw, converged, forward_error) = if ch.is_semimartingale() {
        (left_stieltjes(&fx, bk.values()), true, 0.0)
    } else {
        let q = qv_decompose(&bk, schedule)?;
        for (a, b) in integrator.iter_mut().zip(&q.continuous) {
            *a += b;
        }
        let integrand = CadlagPath::continuous(grid, fx)?;
        let fwd = forward_integral_limit(&integrand, &bk, schedule)?;
        (fwd.limit, fwd.converged && q.converged(), fwd.error)
    };
    let second_order = left_stieltjes(&fxx, &integrator).into_iter().map(|v| -0.5 * v).collect();
    let forward = forward_raw.into_iter().map(|v| -v).collect();
    let terms = ResidualTerms { increment, time_drift, second_order, forward, compensator, injected: None };
    Ok(ResidualPath::assemble(grid, terms, converged, forward_error))
}

/// Semimartingale residual: no `[B^k,B^k]^c` term and a Stieltjes
/// `∫∂_xF(s,X_{s−}) dB^k_s`.
pub fn residual_semimartingale(x: &CadlagPath, ch: &CharacteristicsModel, f: &TestFunction) -> Result<ResidualPath> {
    if !ch.is_semimartingale() {
        return Err(Error::Precondition("B^k is not of finite variation; use the weak Dirichlet residual".into()));
    }
    let Common { grid, x: xs, d, increment, time_drift, compensator } = common_terms(x, ch, f)?;
    let fx: Vec<f64> = d.iter().map(|e| e.fx).collect();
    let fxx: Vec<f64> = d.iter().map(|e| e.fxx).collect();
    let second_order = left_stieltjes(&fxx, &c_increments(ch, &grid)).into_iter().map(|v| -0.5 * v).collect();

    // continuous part of B^k on cells, atoms against the left limit
    let bcont = ch.deterministic_drift(&grid);
    let atom_jumps = ch.atom_jumps(&grid)?;
    let mut forward = left_stieltjes(&fx, &bcont);
    for &(i, db) in &atom_jumps {
        let left = xs[i] - x.jump_at(i);
        let contrib = f.eval(grid.time(i), left).fx * db;
        for v in &mut forward[i..] {
            *v += contrib;
        }
    }
    forward.iter_mut().for_each(|v| *v = -*v);
    let terms = ResidualTerms { increment, time_drift, second_order, forward, compensator, injected: None };
    Ok(ResidualPath::assemble(grid, terms, true, 0.0))
}

/// Bounded functional `g` of the path up to time `s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Functional {
    /// `tanh(X_s)`
    TanhAtS,
    /// `1`
    One,
    /// `sin(X_{s/2}) sin(X_s)`
    SinProduct,
}

impl Functional {
    pub const ALL: [Functional; 3] = [Functional::TanhAtS, Functional::One, Functional::SinProduct];

    pub fn name(&self) -> &'static str {
        match self {
            Functional::TanhAtS => "tanh(X_s)",
            Functional::One => "1",
            Functional::SinProduct => "sin(X_{s/2})sin(X_s)",
        }
    }

    pub fn eval(&self, x: &CadlagPath, s: f64) -> Result<f64> {
        let g = x.grid();
        Ok(match self {
            Functional::TanhAtS => x.value(g.index_of(s)?).tanh(),
            Functional::One => 1.0,
            Functional::SinProduct => x.value(g.index_of(0.5 * s)?).sin() * x.value(g.index_of(s)?).sin(),
        })
    }
}

/// Which statistics a martingale test computes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestPlan {
    pub times: Vec<f64>,
    /// `(s, t)` with `s < t`.
    pub pairs: Vec<(f64, f64)>,
    pub functionals: Vec<Functional>,
    pub alpha_se: f64,
}

impl Default for TestPlan {
    fn default() -> Self {
        Self {
            times: vec![0.25, 0.5, 1.0],
            pairs: vec![(0.25, 0.5), (0.5, 1.0)],
            functionals: Functional::ALL.to_vec(),
            alpha_se: 3.0,
        }
    }
}

impl TestPlan {
    pub fn validate(&self, grid: &TimeGrid) -> Result<()> {
        for &t in &self.times {
            grid.index_of(t)?;
        }
        for &(s, t) in &self.pairs {
            if !(s < t) {
                return Err(Error::Precondition(format!("orthogonality pair needs s < t, got ({s}, {t})")));
            }
            grid.index_of(s)?;
            grid.index_of(t)?;
        }
        if !(self.alpha_se > 0.0) {
            return Err(Error::Precondition("alpha_se must be positive".into()));
        }
        Ok(())
    }

    pub fn n_statistics(&self) -> usize {
        self.times.len() + self.pairs.len() * self.functionals.len()
    }

    /// Per-path samples: `M_t` for each time, then `(M_t − M_s) g` for each pair and functional.
    pub fn samples(&self, residual: &ResidualPath, x: &CadlagPath) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.n_statistics());
        for &t in &self.times {
            out.push(residual.at(t)?);
        }
        for &(s, t) in &self.pairs {
            let dm = residual.at(t)? - residual.at(s)?;
            for g in &self.functionals {
                out.push(dm * g.eval(x, s)?);
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrthogonalityStat {
    pub g: String,
    pub s: f64,
    pub t: f64,
    pub value: f64,
    pub se: f64,
    pub z: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleTestReport {
    pub n_paths: usize,
    pub alpha_se: f64,
    pub quadrature_nodes: usize,
    pub times: Vec<f64>,
    pub means: Vec<f64>,
    pub ses: Vec<f64>,
    pub zscores: Vec<f64>,
    pub orthogonality: Vec<OrthogonalityStat>,
    /// Paths whose residual carried a non-convergence flag.
    pub nonconverged_paths: usize,
    pub pass: bool,
}

impl MartingaleTestReport {
    /// Aggregate per-path samples laid out as in [`TestPlan::samples`].
    pub fn from_samples(plan: &TestPlan, samples: &[Vec<f64>], nonconverged_paths: usize) -> Result<Self> {
        if samples.len() < 100 {
            return Err(Error::Precondition(format!("martingale test needs at least 100 paths, got {}", samples.len())));
        }
        let stat = |k: usize| -> (f64, f64, f64) {
            let col: Vec<f64> = samples.iter().map(|s| s[k]).collect();
            let (m, se) = mean_and_se(&col);
            (m, se, z_score(m, se))
        };
        let alpha = plan.alpha_se;
        let mut means = Vec::new();
        let mut ses = Vec::new();
        let mut zscores = Vec::new();
        for k in 0..plan.times.len() {
            let (m, se, z) = stat(k);
            means.push(m);
            ses.push(se);
            zscores.push(z);
        }
        let mut orthogonality = Vec::new();
        let mut k = plan.times.len();
        for &(s, t) in &plan.pairs {
            for g in &plan.functionals {
                let (value, se, z) = stat(k);
                orthogonality.push(OrthogonalityStat { g: g.name().into(), s, t, value, se, z, pass: z.abs() <= alpha });
                k += 1;
            }
        }
        let pass = zscores.iter().all(|z| z.abs() <= alpha) && orthogonality.iter().all(|o| o.pass);
        Ok(Self {
            n_paths: samples.len(),
            alpha_se: alpha,
            quadrature_nodes: LAW_NODES,
            times: plan.times.clone(),
            means,
            ses,
            zscores,
            orthogonality,
            nonconverged_paths,
            pass,
        })
    }

    /// Recompute every verdict from the stored statistics.
    pub fn verdicts_consistent(&self) -> bool {
        let zs_ok = self.means.iter().zip(&self.ses).zip(&self.zscores).all(|((m, se), z)| same(z_score(*m, *se), *z));
        let orth_ok = self
            .orthogonality
            .iter()
            .all(|o| same(z_score(o.value, o.se), o.z) && o.pass == (o.z.abs() <= self.alpha_se));
        let pass = self.zscores.iter().all(|z| z.abs() <= self.alpha_se) && self.orthogonality.iter().all(|o| o.pass);
        zs_ok && orth_ok && pass == self.pass
    }

    pub fn max_abs_z(&self) -> f64 {
        self.zscores.iter().chain(self.orthogonality.iter().map(|o| &o.z)).fold(0.0, |a, z| a.max(z.abs()))
    }
}

fn same(a: f64, b: f64) -> bool {
    a == b || (a.is_nan() && b.is_nan())
}

/// Test an ensemble of residuals against the paths that produced them.
pub fn martingale_mean_test(residuals: &[ResidualPath], paths: &[CadlagPath], plan: &TestPlan) -> Result<MartingaleTestReport> {
    if residuals.len() != paths.len() {
        return Err(Error::Precondition("one path per residual required".into()));
    }
    if let Some(r) = residuals.first() {
        plan.validate(&r.grid)?;
    }
    let samples = residuals.iter().zip(paths).map(|(r, x)| plan.samples(r, x)).collect::<Result<Vec<_>>>()?;
    let bad = residuals.iter().filter(|r| !r.converged).count();
    MartingaleTestReport::from_samples(plan, &samples, bad)
}

/// Which residual the ensemble runner builds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ResidualKind {
    #[default]
    WeakDirichlet,
    Semimartingale,
}

/// Everything needed to run a martingale test end to end.
#[derive(Debug, Clone)]
pub struct EnsembleTest {
    pub model: ModelSpec,
    pub grid: TimeGrid,
    pub truncation: Truncation,
    pub function: TestFunction,
    pub schedule: EpsilonSchedule,
    pub plan: TestPlan,
    pub kind: ResidualKind,
    /// Drift rate added to every residual (negative control); zero for real runs.
    pub injected_drift: f64,
}

impl EnsembleTest {
    /// Simulate `n` paths from `master_seed` and test their residuals; paths are
    /// streamed and only the per-path statistics are kept.
    pub fn run(&self, master_seed: u64, n: usize) -> Result<MartingaleTestReport> {
        self.plan.validate(&self.grid)?;
        let sim = Simulator::new(&self.model, self.grid)?;
        let ch = known_characteristics(&self.model, self.truncation)?;
        let per_path: Vec<(Vec<f64>, bool)> = (0..n as u64)
            .into_par_iter()
            .map(|i| {
                let p = sim.path(SeedSpec::new(master_seed, i));
                let mut r = match self.kind {
                    ResidualKind::WeakDirichlet => {
                        residual_weak_dirichlet(&p.path, &p.components, &ch, &self.function, &self.schedule)?
                    }
                    ResidualKind::Semimartingale => residual_semimartingale(&p.path, &ch, &self.function)?,
                };
                if self.injected_drift != 0.0 {
                    r = inject_drift(&r, self.injected_drift);
                }
                Ok((self.plan.samples(&r, &p.path)?, r.converged))
            })
            .collect::<Result<_>>()?;
        let bad = per_path.iter().filter(|(_, c)| !c).count();
        let samples: Vec<Vec<f64>> = per_path.into_iter().map(|(s, _)| s).collect();
        MartingaleTestReport::from_samples(&self.plan, &samples, bad)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    /// `sup_t |[∫∂_xF d⁻B^k, N]_t|` at the smallest ε.
    pub sup: f64,
    pub error: f64,
    pub converged: bool,
}

/// Covariation of `∫∂_xF(s,X_s) d⁻B^k_s` with a continuous martingale probe `N`.
pub fn forward_bk_orthogonality_probe(
    x: &CadlagPath,
    logs: &[ComponentLog],
    ch: &CharacteristicsModel,
    f: &TestFunction,
    schedule: &EpsilonSchedule,
    probe: &CadlagPath,
) -> Result<ProbeReport> {
    let grid = *x.grid();
    let bk = ch.drift_path(&grid, logs)?;
    let fx: Vec<f64> = x.values().iter().enumerate().map(|(i, &v)| f.eval(grid.time(i), v).fx).collect();
    let integrand = CadlagPath::continuous(grid, fx)?;
    let fwd = forward_integral_limit(&integrand, &bk, schedule)?;
    if !fwd.converged {
        return Err(Error::Precondition("forward integral against B^k did not converge".into()));
    }
    let cov = covariation_limit(&fwd.limit_path(), probe, schedule)?;
    Ok(ProbeReport { sup: sup_norm(&cov.limit), error: cov.error + fwd.error, converged: cov.converged })
}

/// Order-independent mean of the terminal residual values (diagnostics).
pub fn terminal_mean(residuals: &[ResidualPath]) -> f64 {
    compensated_sum(residuals.iter().map(|r| *r.values.last().unwrap())) / residuals.len() as f64
}
