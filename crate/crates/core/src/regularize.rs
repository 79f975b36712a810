//! ε-regularization estimators.
//!
//! For `ε = mΔt` the clamped shift `(s + ε) ∧ t` is an index shift, so the
//! `ds`-integrals reduce to left-endpoint sums over grid nodes:
//!
//! ```text
//! [X,Y]^ε(t_j)   = (1/m) Σ_{i<j} (X_{(i+m)∧j} − X_i)(Y_{(i+m)∧j} − Y_i)
//! I^ε(Y, X)(t_j) = (1/m) Σ_{i<j} Y_i (X_{(i+m)∧j} − X_i)
//! ```
//!
//! Terms with `i + m ≤ j` do not depend on `j` and are accumulated once; the
//! remaining `m − 1` clamped terms are summed directly, giving `O(n·m)` per
//! trajectory.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::paths::{CadlagPath, TimeGrid};
use crate::quadrature::left_stieltjes;
use crate::stats::{sup_distance, sup_norm};
use crate::{Error, Result};

/// Strictly decreasing ε values, each an exact multiple of the grid step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    multiples: Vec<usize>,
}

impl EpsilonSchedule {
    pub fn from_multiples(grid: &TimeGrid, multiples: Vec<usize>) -> Result<Self> {
        if multiples.is_empty() {
            return Err(Error::InvalidSchedule("empty schedule".into()));
        }
        if multiples.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::InvalidSchedule("ε values must be strictly decreasing".into()));
        }
        if *multiples.last().unwrap() == 0 {
            return Err(Error::InvalidSchedule("ε must be at least one grid step".into()));
        }
        if multiples[0] >= grid.n_steps() {
            return Err(Error::InvalidSchedule(format!(
                "largest ε = {}Δt is not below the horizon",
                multiples[0]
            )));
        }
        Ok(Self { multiples })
    }

    pub fn from_eps(grid: &TimeGrid, eps: &[f64]) -> Result<Self> {
        let multiples = eps.iter().map(|&e| grid.steps_for(e)).collect::<Result<Vec<_>>>()?;
        Self::from_multiples(grid, multiples)
    }

    /// `{32, 16, 8, 4, 2, 1}·Δt`, keeping only `ε ≤ T/10`.
    pub fn default_for(grid: &TimeGrid) -> Result<Self> {
        let cap = grid.n_steps() as f64 / 10.0;
        let multiples: Vec<usize> = [32, 16, 8, 4, 2, 1].into_iter().filter(|&m| m as f64 <= cap).collect();
        Self::from_multiples(grid, multiples)
    }

    pub fn multiples(&self) -> &[usize] {
        &self.multiples
    }

    pub fn eps(&self, grid: &TimeGrid) -> Vec<f64> {
        self.multiples.iter().map(|&m| m as f64 * grid.dt()).collect()
    }

    pub fn smallest(&self) -> usize {
        *self.multiples.last().unwrap()
    }

    fn check(&self, grid: &TimeGrid) -> Result<()> {
        if self.multiples[0] >= grid.n_steps() {
            return Err(Error::InvalidSchedule("schedule does not fit this grid".into()));
        }
        Ok(())
    }
}

/// ε-family of trajectories with the smallest-ε value taken as the limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariationEstimate {
    pub grid: TimeGrid,
    pub eps: Vec<f64>,
    pub trajectories: Vec<Vec<f64>>,
    pub limit: Vec<f64>,
    /// `max_t |last − second-to-last|`; zero for a single ε.
    pub error: f64,
    /// Sup-distances between consecutive ε trajectories.
    pub successive: Vec<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateSummary {
    pub limit_sup_error: f64,
    pub converged: bool,
}

impl CovariationEstimate {
    fn from_family(grid: TimeGrid, eps: Vec<f64>, trajectories: Vec<Vec<f64>>) -> Self {
        let successive: Vec<f64> =
            trajectories.windows(2).map(|w| sup_distance(&w[0], &w[1])).collect();
        let error = successive.last().copied().unwrap_or(0.0);
        // Diverging when the last refinement moved further than the previous one.
        let converged = match successive.len() {
            0 | 1 => true,
            k => successive[k - 1] <= successive[k - 2],
        };
        let limit = trajectories.last().cloned().unwrap_or_default();
        Self { grid, eps, trajectories, limit, error, successive, converged }
    }

    pub fn at_end(&self) -> f64 {
        *self.limit.last().unwrap()
    }

    pub fn summary(&self) -> EstimateSummary {
        EstimateSummary { limit_sup_error: self.error, converged: self.converged }
    }

    /// Long-format `t,eps,value` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "eps", "value"])?;
        for (eps, traj) in self.eps.iter().zip(&self.trajectories) {
            for (i, v) in traj.iter().enumerate() {
                w.write_record([
                    format!("{:.16e}", self.grid.time(i)),
                    format!("{:.16e}", eps),
                    format!("{:.16e}", v),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// The limit trajectory as a path without jump registry.
    pub fn limit_path(&self) -> CadlagPath {
        CadlagPath::continuous(self.grid, self.limit.clone()).expect("grid-sized trajectory")
    }
}

fn same_grid(x: &CadlagPath, y: &CadlagPath) -> Result<TimeGrid> {
    if x.grid() != y.grid() {
        return Err(Error::GridMismatch);
    }
    Ok(*x.grid())
}

fn covariation_steps(x: &[f64], y: &[f64], m: usize) -> Vec<f64> {
    let n = x.len();
    let inv = 1.0 / m as f64;
    let mut out = vec![0.0; n];
    let mut full = 0.0;
    for j in 1..n {
        if j >= m {
            let i = j - m;
            full += (x[j] - x[i]) * (y[j] - y[i]);
        }
        let mut partial = 0.0;
        for i in j.saturating_sub(m - 1)..j {
            partial += (x[j] - x[i]) * (y[j] - y[i]);
        }
        out[j] = (full + partial) * inv;
    }
    out
}

fn forward_steps(y: &[f64], x: &[f64], m: usize) -> Vec<f64> {
    let n = x.len();
    let inv = 1.0 / m as f64;
    let mut out = vec![0.0; n];
    let mut full = 0.0;
    for j in 1..n {
        if j >= m {
            let i = j - m;
            full += y[i] * (x[j] - x[i]);
        }
        let mut partial = 0.0;
        for i in j.saturating_sub(m - 1)..j {
            partial += y[i] * (x[j] - x[i]);
        }
        out[j] = (full + partial) * inv;
    }
    out
}

/// `[X,Y]^ε` at every grid node.
pub fn covariation_eps(x: &CadlagPath, y: &CadlagPath, eps: f64) -> Result<Vec<f64>> {
    let grid = same_grid(x, y)?;
    let m = grid.steps_for(eps)?;
    Ok(covariation_steps(x.values(), y.values(), m))
}

/// Forward integral approximation `∫ Y d⁻X` at resolution ε.
pub fn forward_integral_eps(y: &CadlagPath, x: &CadlagPath, eps: f64) -> Result<Vec<f64>> {
    let grid = same_grid(x, y)?;
    let m = grid.steps_for(eps)?;
    Ok(forward_steps(y.values(), x.values(), m))
}

fn family(
    grid: TimeGrid,
    schedule: &EpsilonSchedule,
    f: impl Fn(usize) -> Vec<f64> + Sync,
) -> Result<CovariationEstimate> {
    schedule.check(&grid)?;
    let trajectories: Vec<Vec<f64>> = schedule.multiples().par_iter().map(|&m| f(m)).collect();
    Ok(CovariationEstimate::from_family(grid, schedule.eps(&grid), trajectories))
}

pub fn covariation_limit(x: &CadlagPath, y: &CadlagPath, schedule: &EpsilonSchedule) -> Result<CovariationEstimate> {
    let grid = same_grid(x, y)?;
    family(grid, schedule, |m| covariation_steps(x.values(), y.values(), m))
}

pub fn forward_integral_limit(
    y: &CadlagPath,
    x: &CadlagPath,
    schedule: &EpsilonSchedule,
) -> Result<CovariationEstimate> {
    let grid = same_grid(x, y)?;
    family(grid, schedule, |m| forward_steps(y.values(), x.values(), m))
}

/// `Σ_{s≤t} ΔX_s ΔY_s` from the two jump registries.
pub fn jump_covariation(x: &CadlagPath, y: &CadlagPath) -> Result<Vec<f64>> {
    same_grid(x, y)?;
    Ok(x.star_trajectory(|s, dx, _| {
        let i = x.grid().index_of(s).expect("atom on grid");
        dx * y.jump_at(i)
    }))
}

/// `[X,X] = [X,X]^c + Σ|ΔX|²` split of the estimated bracket.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QvDecomposition {
    pub total: CovariationEstimate,
    pub jump_part: Vec<f64>,
    pub continuous: Vec<f64>,
}

impl QvDecomposition {
    pub fn converged(&self) -> bool {
        self.total.converged
    }

    pub fn error(&self) -> f64 {
        self.total.error
    }

    /// Nonnegative and nondecreasing up to `tol`.
    pub fn continuous_is_monotone_within(&self, tol: f64) -> bool {
        let mut running_max = f64::NEG_INFINITY;
        self.continuous.iter().all(|&c| {
            running_max = running_max.max(c);
            c >= -tol && c >= running_max - tol
        })
    }
}

pub fn qv_decompose(x: &CadlagPath, schedule: &EpsilonSchedule) -> Result<QvDecomposition> {
    let total = covariation_limit(x, x, schedule)?;
    let jump_part = x.star_trajectory(|_, dx, _| dx * dx);
    let continuous = total.limit.iter().zip(&jump_part).map(|(a, b)| a - b).collect();
    Ok(QvDecomposition { total, jump_part, continuous })
}

/// Bracket identity check: sup-distance between an estimated bracket and a
/// reference trajectory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    pub lhs_sup: f64,
    pub rhs_sup: f64,
    pub distance: f64,
    /// Error estimates of the estimators entering each side.
    pub lhs_error: f64,
    pub rhs_error: f64,
    pub converged: bool,
}

/// JSON verdict `{lhs_sup, rhs_sup, distance, tolerance, pass}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub lhs_sup: f64,
    pub rhs_sup: f64,
    pub distance: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub converged: bool,
}

impl IdentityCheck {
    pub fn new(lhs: Vec<f64>, rhs: Vec<f64>, lhs_error: f64, rhs_error: f64, converged: bool) -> Self {
        Self {
            lhs_sup: sup_norm(&lhs),
            rhs_sup: sup_norm(&rhs),
            distance: sup_distance(&lhs, &rhs),
            lhs,
            rhs,
            lhs_error,
            rhs_error,
            converged,
        }
    }

    pub fn error(&self) -> f64 {
        self.lhs_error + self.rhs_error
    }

    pub fn report(&self, tolerance: f64) -> VerificationReport {
        VerificationReport {
            lhs_sup: self.lhs_sup,
            rhs_sup: self.rhs_sup,
            distance: self.distance,
            tolerance,
            pass: self.distance <= tolerance,
            converged: self.converged,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LemmaYzReport {
    pub precondition_met: bool,
    /// `sup_t |[Y,Y]^c(t)|` as estimated.
    pub continuous_sup: f64,
    pub check: IdentityCheck,
}

/// `[Y,Z]` against `Σ ΔYΔZ` for a `Y` whose bracket has no continuous part.
///
/// The precondition is judged with tolerance `tol` on `sup |[Y,Y]^c|` and is
/// reported, not enforced.
pub fn check_lemma_yz(y: &CadlagPath, z: &CadlagPath, schedule: &EpsilonSchedule, tol: f64) -> Result<LemmaYzReport> {
    let qv = qv_decompose(y, schedule)?;
    let continuous_sup = sup_norm(&qv.continuous);
    let cov = covariation_limit(y, z, schedule)?;
    let jumps = jump_covariation(y, z)?;
    let converged = cov.converged && qv.converged();
    Ok(LemmaYzReport {
        precondition_met: continuous_sup <= tol,
        continuous_sup,
        check: IdentityCheck::new(cov.limit, jumps, cov.error, 0.0, converged),
    })
}

/// `[φ(X¹), ψ(X²)]` against `∫ φ'(X¹) ψ'(X²_-) d[X¹,X²]^c + Σ Δφ(X¹)Δψ(X²)`.
///
/// With `X¹ = X²` and `φ = ψ` this is the one-function stability identity.
pub fn check_c1_stability_pair(
    x1: &CadlagPath,
    phi: (&dyn Fn(f64) -> f64, &dyn Fn(f64) -> f64),
    x2: &CadlagPath,
    psi: (&dyn Fn(f64) -> f64, &dyn Fn(f64) -> f64),
    schedule: &EpsilonSchedule,
) -> Result<IdentityCheck> {
    let grid = same_grid(x1, x2)?;
    let y1 = x1.map(phi.0);
    let y2 = x2.map(psi.0);
    let lhs = covariation_limit(&y1, &y2, schedule)?;

    let base = covariation_limit(x1, x2, schedule)?;
    let base_jumps = jump_covariation(x1, x2)?;
    let continuous: Vec<f64> = base.limit.iter().zip(&base_jumps).map(|(a, b)| a - b).collect();

    let left2 = x2.left_values();
    let integrand: Vec<f64> =
        (0..grid.len()).map(|i| (phi.1)(x1.value(i)) * (psi.1)(left2[i])).collect();
    let cont_term = left_stieltjes(&integrand, &continuous);
    let jump_term = jump_covariation(&y1, &y2)?;
    let rhs: Vec<f64> = cont_term.iter().zip(&jump_term).map(|(a, b)| a + b).collect();

    Ok(IdentityCheck::new(lhs.limit, rhs, lhs.error, base.error, lhs.converged && base.converged))
}

pub fn check_c1_stability(
    x: &CadlagPath,
    phi: &dyn Fn(f64) -> f64,
    dphi: &dyn Fn(f64) -> f64,
    schedule: &EpsilonSchedule,
) -> Result<IdentityCheck> {
    check_c1_stability_pair(x, (phi, dphi), x, (phi, dphi), schedule)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::Jump;

    fn grid() -> TimeGrid {
        TimeGrid::new(1.0, 100).unwrap()
    }

    /// Direct evaluation of the defining sum, no shortcuts.
    fn covariation_naive(x: &[f64], y: &[f64], m: usize) -> Vec<f64> {
        let n = x.len();
        (0..n)
            .map(|j| {
                (0..j)
                    .map(|i| {
                        let k = (i + m).min(j);
                        (x[k] - x[i]) * (y[k] - y[i])
                    })
                    .sum::<f64>()
                    / m as f64
            })
            .collect()
    }

    fn forward_naive(y: &[f64], x: &[f64], m: usize) -> Vec<f64> {
        let n = x.len();
        (0..n)
            .map(|j| (0..j).map(|i| y[i] * (x[(i + m).min(j)] - x[i])).sum::<f64>() / m as f64)
            .collect()
    }

    fn wiggly(g: TimeGrid, a: f64) -> CadlagPath {
        let base = CadlagPath::from_fn(g, |t| (a * t).sin() + 0.3 * (7.0 * a * t).cos()).unwrap();
        base.add(&CadlagPath::step(g, &[(0.31, 0.7), (0.77, -1.2)]).unwrap()).unwrap()
    }

    #[test]
    fn fast_sums_match_definition() {
        let g = grid();
        let x = wiggly(g, 3.0);
        let y = wiggly(g, 5.0);
        for m in [1, 2, 7, 30] {
            let fast = covariation_steps(x.values(), y.values(), m);
            let slow = covariation_naive(x.values(), y.values(), m);
            assert!(sup_distance(&fast, &slow) < 1e-12, "m={m}");
            let fast = forward_steps(y.values(), x.values(), m);
            let slow = forward_naive(y.values(), x.values(), m);
            assert!(sup_distance(&fast, &slow) < 1e-12, "m={m}");
        }
    }

    #[test]
    fn heaviside_bracket_is_exact() {
        let g = TimeGrid::new(1.0, 1000).unwrap();
        let h = CadlagPath::step(g, &[(0.5, 1.0)]).unwrap();
        let v = covariation_eps(&h, &h, 0.1).unwrap();
        assert_eq!(*v.last().unwrap(), 1.0);
        let c = CadlagPath::constant(g, 2.0);
        assert!(covariation_eps(&c, &c, 0.01).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_bad_eps_and_grids() {
        let g = grid();
        let x = wiggly(g, 1.0);
        assert!(matches!(covariation_eps(&x, &x, 0.015), Err(Error::EpsilonNotOnGrid { .. })));
        let other = CadlagPath::constant(TimeGrid::new(1.0, 50).unwrap(), 0.0);
        assert!(matches!(covariation_eps(&x, &other, 0.02), Err(Error::GridMismatch)));
        assert!(EpsilonSchedule::from_multiples(&g, vec![2, 4]).is_err());
        assert!(EpsilonSchedule::from_multiples(&g, vec![100]).is_err());
        assert!(EpsilonSchedule::from_multiples(&g, vec![]).is_err());
    }

    #[test]
    fn default_schedule_is_truncated() {
        let s = EpsilonSchedule::default_for(&TimeGrid::new(1.0, 100).unwrap()).unwrap();
        assert_eq!(s.multiples(), &[8, 4, 2, 1]);
        let s = EpsilonSchedule::default_for(&TimeGrid::new(1.0, 10_000).unwrap()).unwrap();
        assert_eq!(s.multiples(), &[32, 16, 8, 4, 2, 1]);
    }

    #[test]
    fn step_paths_have_exact_limit_and_zero_error() {
        let g = TimeGrid::new(1.0, 1000).unwrap();
        let x = CadlagPath::step(g, &[(0.2, 1.5), (0.6, -0.5)]).unwrap();
        let y = CadlagPath::step(g, &[(0.2, 2.0), (0.9, 3.0)]).unwrap();
        let s = EpsilonSchedule::from_multiples(&g, vec![64, 32, 16, 8]).unwrap();
        let est = covariation_limit(&x, &y, &s).unwrap();
        assert_eq!(est.error, 0.0);
        assert!(est.converged);
        assert_eq!(est.limit, jump_covariation(&x, &y).unwrap());
        assert_eq!(est.at_end(), 3.0);
    }

    #[test]
    fn qv_of_heaviside_is_pure_jump() {
        let g = TimeGrid::new(1.0, 1000).unwrap();
        let h = CadlagPath::step(g, &[(0.5, 1.0)]).unwrap();
        let qv = qv_decompose(&h, &EpsilonSchedule::default_for(&g).unwrap()).unwrap();
        assert!(qv.continuous.iter().all(|&c| c == 0.0));
        for (i, j) in qv.jump_part.iter().enumerate() {
            assert_eq!(*j, if i >= 500 { 1.0 } else { 0.0 });
        }
        assert!(qv.continuous_is_monotone_within(0.0));
    }

    #[test]
    fn forward_integral_of_identity() {
        // ∫_0^1 s ds
        let g = TimeGrid::new(1.0, 1000).unwrap();
        let s = CadlagPath::from_fn(g, |t| t).unwrap();
        let sched = EpsilonSchedule::default_for(&g).unwrap();
        let est = forward_integral_limit(&s, &s, &sched).unwrap();
        assert!((est.at_end() - 0.5).abs() <= 2.0 * g.dt());
    }

    #[test]
    fn forward_integral_of_one_telescopes() {
        let g = TimeGrid::new(1.0, 2000).unwrap();
        let x = wiggly(g, 2.0);
        let one = CadlagPath::constant(g, 1.0);
        let est = forward_integral_limit(&one, &x, &EpsilonSchedule::default_for(&g).unwrap()).unwrap();
        let target: Vec<f64> = x.values().iter().map(|v| v - x.value(0)).collect();
        // window-averaging error is of the order of the recorded error estimate
        let d = sup_distance(&est.limit, &target);
        assert!(d <= 2.0 * est.error + 1e-2, "d={d} err={}", est.error);
    }

    #[test]
    fn pure_jump_factor_on_step_paths() {
        let g = TimeGrid::new(1.0, 1000).unwrap();
        let y = CadlagPath::step(g, &[(0.25, 1.0), (0.5, 2.0)]).unwrap();
        let z = CadlagPath::step(g, &[(0.5, -1.0), (0.8, 4.0)]).unwrap();
        let s = EpsilonSchedule::default_for(&g).unwrap();
        let r = check_lemma_yz(&y, &z, &s, 1e-12).unwrap();
        assert!(r.precondition_met);
        assert_eq!(r.check.distance, 0.0);
        assert_eq!(r.check.rhs.last().copied(), Some(-2.0));

        let smooth = CadlagPath::from_fn(g, |t| (3.0 * t).sin()).unwrap();
        let r = check_lemma_yz(&y, &smooth, &s, 1e-12).unwrap();
        assert!(r.check.lhs_sup < 5e-3 && r.check.rhs_sup == 0.0);
    }

    #[test]
    fn pure_jump_factor_reports_violated_precondition() {
        let g = TimeGrid::new(1.0, 1000).unwrap();
        let y = CadlagPath::from_fn(g, |t| (40.0 * t).sin()).unwrap();
        // a deterministic zig-zag with visible quadratic variation
        let zig = CadlagPath::continuous(g, (0..g.len()).map(|i| if i % 2 == 0 { 0.0 } else { 0.05 }).collect()).unwrap();
        let yy = y.add(&zig).unwrap();
        let r = check_lemma_yz(&yy, &y, &EpsilonSchedule::default_for(&g).unwrap(), 1e-3).unwrap();
        assert!(!r.precondition_met);
    }

    #[test]
    fn c1_stability_identity_is_exact_on_steps() {
        let g = TimeGrid::new(1.0, 1000).unwrap();
        let x = CadlagPath::step(g, &[(0.3, 0.8), (0.6, -2.0)]).unwrap();
        let id = |v: f64| v;
        let one = |_: f64| 1.0;
        let s = EpsilonSchedule::default_for(&g).unwrap();
        let r = check_c1_stability(&x, &id, &one, &s).unwrap();
        assert_eq!(r.distance, 0.0);
        let r = check_c1_stability(&x, &f64::tanh, &|v: f64| 1.0 / v.cosh().powi(2), &s).unwrap();
        assert!(r.distance < 1e-15);
    }

    #[test]
    fn white_noise_is_flagged() {
        // iid-like values: the bracket blows up like 1/ε
        let g = TimeGrid::new(1.0, 1000).unwrap();
        let vals: Vec<f64> = (0..g.len()).map(|i| ((i as f64 * 12.9898).sin() * 43758.5453).fract()).collect();
        let x = CadlagPath::continuous(g, vals).unwrap();
        let est = covariation_limit(&x, &x, &EpsilonSchedule::default_for(&g).unwrap()).unwrap();
        assert!(!est.converged);
    }

    #[test]
    fn limit_path_has_no_jumps() {
        let g = grid();
        let x = CadlagPath::new(g, vec![0.0; g.len()], vec![]).unwrap();
        let est = covariation_limit(&x, &x, &EpsilonSchedule::default_for(&g).unwrap()).unwrap();
        assert!(est.limit_path().jumps().is_empty());
        let _ = Jump { index: 1, size: 1.0 };
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_path() -> impl Strategy<Value = CadlagPath> {
            (prop::collection::vec(-1.0f64..1.0, 61), prop::collection::btree_map(1usize..=60, -2.0f64..2.0, 0..4))
                .prop_map(|(incs, jumps)| {
                    let g = TimeGrid::new(1.0, 60).unwrap();
                    let mut level = 0.0;
                    let mut values = Vec::with_capacity(61);
                    for (i, inc) in incs.iter().enumerate() {
                        if i > 0 {
                            level += 0.2 * inc + jumps.get(&i).copied().unwrap_or(0.0);
                        }
                        values.push(level);
                    }
                    let jumps = jumps.into_iter().filter(|(_, s)| *s != 0.0).map(|(index, size)| Jump { index, size }).collect();
                    CadlagPath::new(g, values, jumps).unwrap()
                })
        }

        fn scale_of(v: &[f64]) -> f64 {
            1.0 + sup_norm(v)
        }

        proptest! {
            #[test]
            fn symmetric(x in arb_path(), y in arb_path(), m in 1usize..8) {
                let eps = m as f64 / 60.0;
                prop_assert_eq!(covariation_eps(&x, &y, eps).unwrap(), covariation_eps(&y, &x, eps).unwrap());
            }

            #[test]
            fn bilinear(x in arb_path(), x2 in arb_path(), y in arb_path(), a in -3.0f64..3.0, b in -3.0f64..3.0, m in 1usize..8) {
                let eps = m as f64 / 60.0;
                let lhs = covariation_eps(&CadlagPath::combine(a, &x, b, &x2).unwrap(), &y, eps).unwrap();
                let c1 = covariation_eps(&x, &y, eps).unwrap();
                let c2 = covariation_eps(&x2, &y, eps).unwrap();
                let rhs: Vec<f64> = c1.iter().zip(&c2).map(|(u, v)| a * u + b * v).collect();
                let tol = 1e-12 * scale_of(&lhs).max(scale_of(&c1) * a.abs().max(1.0)).max(scale_of(&c2) * b.abs().max(1.0));
                prop_assert!(sup_distance(&lhs, &rhs) <= tol * 10.0);
            }

            #[test]
            fn cauchy_schwarz(x in arb_path(), y in arb_path(), m in 1usize..8) {
                let eps = m as f64 / 60.0;
                let xy = covariation_eps(&x, &y, eps).unwrap();
                let xx = covariation_eps(&x, &x, eps).unwrap();
                let yy = covariation_eps(&y, &y, eps).unwrap();
                for i in 0..xy.len() {
                    prop_assert!(xy[i].abs() <= (xx[i] * yy[i]).sqrt() + 1e-12);
                }
            }

            #[test]
            fn polarization(x in arb_path(), y in arb_path(), m in 1usize..8) {
                let eps = m as f64 / 60.0;
                let s = x.add(&y).unwrap();
                let ss = covariation_eps(&s, &s, eps).unwrap();
                let xx = covariation_eps(&x, &x, eps).unwrap();
                let yy = covariation_eps(&y, &y, eps).unwrap();
                let xy = covariation_eps(&x, &y, eps).unwrap();
                for i in 0..xy.len() {
                    let pol = 0.5 * (ss[i] - xx[i] - yy[i]);
                    prop_assert!((pol - xy[i]).abs() <= 1e-12 * (1.0 + ss[i].abs()));
                }
            }

            #[test]
            fn bracket_nonnegative(x in arb_path(), m in 1usize..8) {
                let v = covariation_eps(&x, &x, m as f64 / 60.0).unwrap();
                prop_assert!(v.iter().all(|&c| c >= 0.0));
            }
        }
    }
}
