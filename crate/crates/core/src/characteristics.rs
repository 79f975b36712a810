//! Truncation functions, characteristics triplets and the path decomposition
//!
//! ```text
//! X = X^c + k(x)⋆(μ − ν) + B^k + (x − k(x))⋆μ
//! ```
//!
//! together with the bracket identities satisfied by `B^k`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::paths::{CadlagPath, Jump, TimeGrid};
use crate::regularize::{covariation_limit, qv_decompose, EpsilonSchedule, IdentityCheck};
use crate::simulate::{known_characteristics, ComponentKind, ComponentLog, DriftFunction, JumpLaw, ModelSpec, SimulatedPath};
use crate::{Error, Result};

/// Bounded `k` with `k(x) = x` near zero.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Truncation {
    /// `x · 1_{|x| ≤ 1}`.
    #[default]
    Standard,
    /// Odd C² function: identity on `|x| ≤ inner`, constant `±(inner+outer)/2`
    /// beyond `outer`, quintic blend in between.
    SmoothClip { inner: f64, outer: f64 },
}

impl Truncation {
    pub fn smooth_clip() -> Self {
        Truncation::SmoothClip { inner: 0.5, outer: 1.5 }
    }

    pub fn validate(&self) -> Result<()> {
        if let Truncation::SmoothClip { inner, outer } = *self {
            if !(inner > 0.0 && outer > inner && outer.is_finite()) {
                return Err(Error::InvalidModel(format!("smooth clip needs 0 < inner < outer, got {inner}, {outer}")));
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Truncation::Standard => {
                if x.abs() <= 1.0 {
                    x
                } else {
                    0.0
                }
            }
            Truncation::SmoothClip { inner, outer } => {
                let a = x.abs();
                if a <= inner {
                    return x;
                }
                let width = outer - inner;
                let level = if a >= outer {
                    inner + 0.5 * width
                } else {
                    let s = (a - inner) / width;
                    // p' = (1 - s)^2 (1 + 2s): monotone, flat to second order at s = 1
                    inner + width * (s - s * s * s + 0.5 * s * s * s * s)
                };
                level.copysign(x)
            }
        }
    }

    /// Radius of the identity window.
    pub fn radius(&self) -> f64 {
        match *self {
            Truncation::Standard => 1.0,
            Truncation::SmoothClip { inner, .. } => inner,
        }
    }

    pub fn bound(&self) -> f64 {
        match *self {
            Truncation::Standard => 1.0,
            Truncation::SmoothClip { inner, outer } => 0.5 * (inner + outer),
        }
    }
}

/// `λ dt · law(dx)` with the law's quadrature nodes cached.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpComponent {
    pub rate: f64,
    pub law: JumpLaw,
    nodes: Vec<(f64, f64)>,
}

impl JumpComponent {
    pub fn new(rate: f64, law: JumpLaw) -> Self {
        let nodes = law.nodes();
        Self { rate, law, nodes }
    }

    pub fn nodes(&self) -> &[(f64, f64)] {
        &self.nodes
    }

    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().map(|&(x, w)| w * f(x)).sum()
    }
}

/// Fixed-time atom `ν({time} × dx)` as weighted point masses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedAtom {
    pub time: f64,
    pub masses: Vec<(f64, f64)>,
}

/// Characteristics `(B^k, C, ν)`.
///
/// `B^k_t = drift_rate·t + Σ (f(t) − f(0)) + Σ (logged fBm trajectories) + Σ_{s≤t} ∫k dν({s}×·)`,
/// `C_t = diffusion_rate·t`, `ν(dt,dx) = Σ λ dt law(dx) + fixed atoms`.
#[derive(Debug, Clone, PartialEq)]
pub struct CharacteristicsModel {
    pub truncation: Truncation,
    pub drift_rate: f64,
    pub drift_functions: Vec<DriftFunction>,
    /// Indices of logged components whose trajectory is part of `B^k`.
    pub path_dependent: Vec<usize>,
    pub diffusion_rate: f64,
    pub jumps: Vec<JumpComponent>,
    pub fixed_atoms: Vec<FixedAtom>,
}

impl CharacteristicsModel {
    pub fn empty(truncation: Truncation) -> Self {
        Self {
            truncation,
            drift_rate: 0.0,
            drift_functions: Vec::new(),
            path_dependent: Vec::new(),
            diffusion_rate: 0.0,
            jumps: Vec::new(),
            fixed_atoms: Vec::new(),
        }
    }

    /// Attach a synthetic schedule of fixed-time atoms.
    pub fn with_fixed_atoms(mut self, mut atoms: Vec<FixedAtom>) -> Result<Self> {
        atoms.sort_by(|a, b| a.time.total_cmp(&b.time));
        if atoms.windows(2).any(|w| w[0].time == w[1].time) {
            return Err(Error::InvalidModel("fixed-atom times must be distinct".into()));
        }
        if atoms.iter().any(|a| !(a.time > 0.0) || a.masses.iter().any(|&(x, w)| x == 0.0 || !w.is_finite())) {
            return Err(Error::InvalidModel("fixed atoms need positive times and nonzero sizes".into()));
        }
        self.fixed_atoms = atoms;
        Ok(self)
    }

    pub fn c_at(&self, t: f64) -> f64 {
        self.diffusion_rate * t
    }

    pub fn is_semimartingale(&self) -> bool {
        self.path_dependent.is_empty()
    }

    /// `ΔB^k_t = ∫ k(x) ν({t} × dx)`.
    pub fn delta_bk(&self, t: f64) -> f64 {
        self.fixed_atoms
            .iter()
            .filter(|a| a.time == t)
            .map(|a| self.atom_integral(a, |x| self.truncation.eval(x)))
            .sum()
    }

    pub(crate) fn atom_integral(&self, atom: &FixedAtom, f: impl Fn(f64) -> f64) -> f64 {
        atom.masses.iter().map(|&(x, w)| w * f(x)).sum()
    }

    /// Same jump compensator and `C`, drift re-expressed for `k'`.
    pub fn convert_truncation(&self, k_new: Truncation) -> Result<Self> {
        k_new.validate()?;
        let k_old = self.truncation;
        let shift: f64 = self.jumps.iter().map(|j| j.rate * j.expect(|x| k_new.eval(x) - k_old.eval(x))).sum();
        Ok(Self { truncation: k_new, drift_rate: self.drift_rate + shift, ..self.clone() })
    }

    /// Continuous deterministic part of `B^k` at every node.
    pub fn deterministic_drift(&self, grid: &TimeGrid) -> Vec<f64> {
        grid.times()
            .map(|t| {
                self.drift_rate * t + self.drift_functions.iter().map(|f| f.eval(t) - f.eval(0.0)).sum::<f64>()
            })
            .collect()
    }

    /// `(node, ΔB^k)` for every fixed atom.
    pub fn atom_jumps(&self, grid: &TimeGrid) -> Result<Vec<(usize, f64)>> {
        self.fixed_atoms
            .iter()
            .map(|a| Ok((grid.index_of(a.time)?, self.atom_integral(a, |x| self.truncation.eval(x)))))
            .collect()
    }

    /// `Σ_{s≤t} |ΔB^k_s|²` at every node.
    pub fn atom_square_sum(&self, grid: &TimeGrid) -> Result<Vec<f64>> {
        let mut out = vec![0.0; grid.len()];
        for (i, d) in self.atom_jumps(grid)? {
            for o in &mut out[i..] {
                *o += d * d;
            }
        }
        Ok(out)
    }

    /// The `B^k` trajectory; path-dependent parts are read from `logs`.
    pub fn drift_path(&self, grid: &TimeGrid, logs: &[ComponentLog]) -> Result<CadlagPath> {
        let mut values = self.deterministic_drift(grid);
        for &idx in &self.path_dependent {
            let log = logs
                .get(idx)
                .filter(|l| l.kind == ComponentKind::Fbm)
                .ok_or_else(|| Error::MissingComponentLog(format!("fBm component {idx}")))?;
            if log.path.grid() != grid {
                return Err(Error::GridMismatch);
            }
            for (v, p) in values.iter_mut().zip(log.path.values()) {
                *v += p;
            }
        }
        let mut jumps = Vec::new();
        for (i, d) in self.atom_jumps(grid)? {
            for v in &mut values[i..] {
                *v += d;
            }
            if d != 0.0 {
                jumps.push(Jump { index: i, size: d });
            }
        }
        CadlagPath::new(*grid, values, jumps)
    }

    /// `Σ λ E[k(J)]`, the drift of the compensated small jumps.
    pub fn compensator_drift(&self) -> f64 {
        self.jumps.iter().map(|j| j.rate * j.expect(|x| self.truncation.eval(x))).sum()
    }
}

pub fn delta_bk(model: &CharacteristicsModel, t: f64) -> f64 {
    model.delta_bk(t)
}

pub fn convert_truncation(model: &CharacteristicsModel, k_new: Truncation) -> Result<CharacteristicsModel> {
    model.convert_truncation(k_new)
}

/// The four parts of `X`; they sum back to `X` node by node.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub xc: CadlagPath,
    pub mdk: CadlagPath,
    pub bk: CadlagPath,
    pub large_jumps: CadlagPath,
}

impl Decomposition {
    pub fn reconstruct(&self) -> Vec<f64> {
        (0..self.xc.grid().len())
            .map(|i| self.xc.value(i) + self.mdk.value(i) + self.bk.value(i) + self.large_jumps.value(i))
            .collect()
    }

    /// `X^c + k⋆(μ − ν)`.
    pub fn martingale_part(&self) -> CadlagPath {
        self.xc.add(&self.mdk).expect("same grid")
    }

    /// `B^k + (x − k)⋆μ`.
    pub fn orthogonal_part(&self) -> CadlagPath {
        self.bk.add(&self.large_jumps).expect("same grid")
    }

    /// Columns `t,x,xc,mdk,bk,large_jumps`.
    pub fn write_csv<W: Write>(&self, x: &CadlagPath, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "x", "xc", "mdk", "bk", "large_jumps"])?;
        let grid = self.xc.grid();
        for i in 0..grid.len() {
            let row = [grid.time(i), x.value(i), self.xc.value(i), self.mdk.value(i), self.bk.value(i), self.large_jumps.value(i)];
            w.write_record(row.iter().map(|v| format!("{v:.16e}")))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Decompose a simulated path using the simulator's component log.
pub fn decompose(sim: &SimulatedPath, model: &ModelSpec, k: Truncation) -> Result<Decomposition> {
    let ch = known_characteristics(model, k)?;
    decompose_with(&sim.path, &sim.components, &ch)
}

pub fn decompose_with(x: &CadlagPath, logs: &[ComponentLog], ch: &CharacteristicsModel) -> Result<Decomposition> {
    let grid = *x.grid();
    let k = ch.truncation;
    let bk = ch.drift_path(&grid, logs)?;

    let large_vals = x.star_trajectory(|_, dx, _| dx - k.eval(dx));
    let large_sizes: Vec<f64> = x.jumps().iter().map(|j| j.size - k.eval(j.size)).collect();
    let large_jumps = x.with_values_like(large_vals, &large_sizes)?;

    // k⋆μ minus its compensator, including the fixed-time part of ν
    let small = x.star_trajectory(|_, dx, _| k.eval(dx));
    let rate = ch.compensator_drift();
    let atom_jumps = ch.atom_jumps(&grid)?;
    let mut mdk_vals: Vec<f64> = small.iter().zip(grid.times()).map(|(s, t)| s - rate * t).collect();
    for &(i, d) in &atom_jumps {
        for v in &mut mdk_vals[i..] {
            *v -= d;
        }
    }
    let mut mdk_jumps: Vec<Jump> = x.jumps().iter().map(|j| Jump { index: j.index, size: k.eval(j.size) }).collect();
    for &(i, d) in &atom_jumps {
        match mdk_jumps.binary_search_by_key(&i, |j| j.index) {
            Ok(p) => mdk_jumps[p].size -= d,
            Err(p) => mdk_jumps.insert(p, Jump { index: i, size: -d }),
        }
    }
    mdk_jumps.retain(|j| j.size != 0.0);
    let mdk = CadlagPath::new(grid, mdk_vals, mdk_jumps)?;

    let xc_vals = (0..grid.len())
        .map(|i| x.value(i) - mdk.value(i) - bk.value(i) - large_jumps.value(i))
        .collect();
    let xc = CadlagPath::continuous(grid, xc_vals)?;
    Ok(Decomposition { xc, mdk, bk, large_jumps })
}

/// `[B^k,B^k]` (lhs) against `[X,X]^c − [X^c,X^c] + Σ|∫k dν({s}×·)|²` (rhs).
pub fn bk_bracket(
    x: &CadlagPath,
    dec: &Decomposition,
    ch: &CharacteristicsModel,
    schedule: &EpsilonSchedule,
) -> Result<IdentityCheck> {
    let qx = qv_decompose(x, schedule)?;
    let cc = covariation_limit(&dec.xc, &dec.xc, schedule)?;
    let lhs = covariation_limit(&dec.bk, &dec.bk, schedule)?;
    let atoms = ch.atom_square_sum(x.grid())?;
    let rhs: Vec<f64> = (0..x.grid().len()).map(|i| qx.continuous[i] - cc.limit[i] + atoms[i]).collect();
    Ok(IdentityCheck::new(
        lhs.limit,
        rhs,
        lhs.error,
        qx.error() + cc.error,
        lhs.converged && qx.converged() && cc.converged,
    ))
}

/// `[X,X]^c` (lhs) against `[X^c,X^c] + [B^k,B^k]^c` (rhs).
pub fn verify_corollary(x: &CadlagPath, dec: &Decomposition, schedule: &EpsilonSchedule) -> Result<IdentityCheck> {
    let qx = qv_decompose(x, schedule)?;
    let cc = covariation_limit(&dec.xc, &dec.xc, schedule)?;
    let qb = qv_decompose(&dec.bk, schedule)?;
    let rhs: Vec<f64> = cc.limit.iter().zip(&qb.continuous).map(|(a, b)| a + b).collect();
    let lhs_error = qx.error();
    Ok(IdentityCheck::new(
        qx.continuous.clone(),
        rhs,
        lhs_error,
        cc.error + qb.error(),
        qx.converged() && cc.converged && qb.converged(),
    ))
}
