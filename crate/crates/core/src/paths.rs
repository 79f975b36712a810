//! Càdlàg trajectories sampled on a uniform grid.
//!
//! Values are stored with the right-continuous convention (`values[i]` is
//! `X_{t_i}`). Jumps are kept in an explicit registry of `(index, size)`
//! pairs; the left limit at a node is derived from the registry and never
//! stored.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Uniform grid `t_i = i * T / n` on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidGrid(format!("horizon must be positive, got {horizon}")));
        }
        if n_steps == 0 {
            return Err(Error::InvalidGrid("n_steps must be positive".into()));
        }
        Ok(Self { horizon, n_steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Number of nodes, `n_steps + 1`.
    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    /// Time of node `i`; exact at both ends.
    pub fn time(&self, i: usize) -> f64 {
        if i == self.n_steps {
            self.horizon
        } else {
            self.horizon * (i as f64 / self.n_steps as f64)
        }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|i| self.time(i))
    }

    /// Nearest node to `t`, accepted when it lies within half a step.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let dt = self.dt();
        if !t.is_finite() || t < -0.5 * dt || t > self.horizon + 0.5 * dt {
            return Err(Error::OffGrid { time: t, step: dt });
        }
        let i = (t / dt).round().max(0.0) as usize;
        Ok(i.min(self.n_steps))
    }

    /// Number of grid steps making up `eps`; `eps` must be an exact multiple.
    pub fn steps_for(&self, eps: f64) -> Result<usize> {
        let dt = self.dt();
        let ratio = eps / dt;
        let m = ratio.round();
        if !(eps.is_finite() && m >= 1.0 && (ratio - m).abs() <= 1e-9 * m) {
            return Err(Error::EpsilonNotOnGrid { eps, step: dt });
        }
        Ok(m as usize)
    }

    /// Grid with `factor` times fewer steps over the same horizon.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || self.n_steps % factor != 0 {
            return Err(Error::InvalidGrid(format!(
                "cannot coarsen {} steps by {factor}",
                self.n_steps
            )));
        }
        Self::new(self.horizon, self.n_steps / factor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub index: usize,
    pub size: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CadlagPath {
    grid: TimeGrid,
    values: Vec<f64>,
    jumps: Vec<Jump>,
}

impl CadlagPath {
    pub fn new(grid: TimeGrid, values: Vec<f64>, jumps: Vec<Jump>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidPath(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidPath(format!("non-finite value {v}")));
        }
        let mut prev = 0;
        for j in &jumps {
            if j.index == 0 || j.index > grid.n_steps() {
                return Err(Error::InvalidPath(format!("jump index {} outside (0, n]", j.index)));
            }
            if j.index <= prev {
                return Err(Error::InvalidPath("jump indices must be strictly increasing".into()));
            }
            if j.size == 0.0 || !j.size.is_finite() {
                return Err(Error::InvalidPath(format!("invalid jump size {}", j.size)));
            }
            prev = j.index;
        }
        Ok(Self { grid, values, jumps })
    }

    /// Path without registered jumps.
    pub fn continuous(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        Self::new(grid, values, Vec::new())
    }

    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::continuous(grid, grid.times().map(f).collect())
    }

    pub fn constant(grid: TimeGrid, c: f64) -> Self {
        Self { grid, values: vec![c; grid.len()], jumps: Vec::new() }
    }

    /// Pure step path starting from zero, jumping by `size` at each `time`.
    pub fn step(grid: TimeGrid, steps: &[(f64, f64)]) -> Result<Self> {
        let mut jumps: Vec<Jump> = Vec::with_capacity(steps.len());
        for &(t, size) in steps {
            let index = grid.index_of(t)?;
            jumps.push(Jump { index, size });
        }
        jumps.sort_by_key(|j| j.index);
        let mut values = vec![0.0; grid.len()];
        let mut level = 0.0;
        let mut next = jumps.iter().peekable();
        for (i, v) in values.iter_mut().enumerate() {
            while let Some(j) = next.next_if(|j| j.index == i) {
                level += j.size;
            }
            *v = level;
        }
        Self::new(grid, values, jumps)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn jumps(&self) -> &[Jump] {
        &self.jumps
    }

    pub fn value(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn jump_at(&self, i: usize) -> f64 {
        self.jumps
            .binary_search_by_key(&i, |j| j.index)
            .map(|k| self.jumps[k].size)
            .unwrap_or(0.0)
    }

    pub fn left_value(&self, i: usize) -> f64 {
        self.values[i] - self.jump_at(i)
    }

    /// Left limits at every node.
    pub fn left_values(&self) -> Vec<f64> {
        let mut out = self.values.clone();
        for j in &self.jumps {
            out[j.index] -= j.size;
        }
        out
    }

    pub fn eval(&self, t: f64, side: Side) -> Result<f64> {
        let i = self.grid.index_of(t)?;
        Ok(match side {
            Side::Right => self.values[i],
            Side::Left => self.left_value(i),
        })
    }

    pub fn jump_measure(&self) -> JumpMeasure {
        JumpMeasure {
            atoms: self
                .jumps
                .iter()
                .map(|j| Atom { time: self.grid.time(j.index), index: j.index, size: j.size })
                .collect(),
        }
    }

    /// `a * x + b * y`, with jump registries combined and zero jumps dropped.
    pub fn combine(a: f64, x: &CadlagPath, b: f64, y: &CadlagPath) -> Result<CadlagPath> {
        if x.grid != y.grid {
            return Err(Error::GridMismatch);
        }
        let values = x.values.iter().zip(&y.values).map(|(u, v)| a * u + b * v).collect();
        let mut jumps = Vec::with_capacity(x.jumps.len() + y.jumps.len());
        let (mut p, mut q) = (0, 0);
        while p < x.jumps.len() || q < y.jumps.len() {
            let ix = x.jumps.get(p).map_or(usize::MAX, |j| j.index);
            let iy = y.jumps.get(q).map_or(usize::MAX, |j| j.index);
            let (index, size) = if ix == iy {
                p += 1;
                q += 1;
                (ix, a * x.jumps[p - 1].size + b * y.jumps[q - 1].size)
            } else if ix < iy {
                p += 1;
                (ix, a * x.jumps[p - 1].size)
            } else {
                q += 1;
                (iy, b * y.jumps[q - 1].size)
            };
            if size != 0.0 {
                jumps.push(Jump { index, size });
            }
        }
        CadlagPath::new(x.grid, values, jumps)
    }

    pub fn add(&self, other: &CadlagPath) -> Result<CadlagPath> {
        Self::combine(1.0, self, 1.0, other)
    }

    pub fn sub(&self, other: &CadlagPath) -> Result<CadlagPath> {
        Self::combine(1.0, self, -1.0, other)
    }

    pub fn scale(&self, a: f64) -> CadlagPath {
        Self::combine(a, self, 0.0, self).expect("same grid")
    }

    /// `phi(X)`; a registered jump maps to `phi(X_t) - phi(X_{t-})`.
    pub fn map(&self, phi: impl Fn(f64) -> f64) -> CadlagPath {
        let values: Vec<f64> = self.values.iter().map(|&v| phi(v)).collect();
        let jumps = self
            .jumps
            .iter()
            .filter_map(|j| {
                let size = values[j.index] - phi(self.values[j.index] - j.size);
                (size != 0.0).then_some(Jump { index: j.index, size })
            })
            .collect();
        CadlagPath { grid: self.grid, values, jumps }
    }

    /// Cumulative `sum_{s <= t_j} h(s, ΔX_s, X_{s-})` at every node.
    pub fn star_trajectory(&self, h: impl Fn(f64, f64, f64) -> f64) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.len()];
        let mut acc = 0.0;
        let mut next = self.jumps.iter().peekable();
        for (i, o) in out.iter_mut().enumerate() {
            if let Some(j) = next.next_if(|j| j.index == i) {
                acc += h(self.grid.time(i), j.size, self.values[i] - j.size);
            }
            *o = acc;
        }
        out
    }

    /// Path with the same grid whose values are given and whose jump registry
    /// is inherited wherever the new values actually move at a jump node of
    /// `self`.
    pub fn with_values_like(&self, values: Vec<f64>, jump_sizes: &[f64]) -> Result<CadlagPath> {
        let jumps = self
            .jumps
            .iter()
            .zip(jump_sizes)
            .filter(|(_, s)| **s != 0.0)
            .map(|(j, s)| Jump { index: j.index, size: *s })
            .collect();
        CadlagPath::new(self.grid, values, jumps)
    }

    /// Subsample every `factor`-th node; a jump in `(t'_{i−1}, t'_i]` of the
    /// coarse grid is registered at coarse node `i`.
    pub fn coarsen(&self, factor: usize) -> Result<CadlagPath> {
        let grid = self.grid.coarsen(factor)?;
        let values = (0..grid.len()).map(|i| self.values[i * factor]).collect();
        let mut jumps: Vec<Jump> = Vec::new();
        for j in &self.jumps {
            let index = j.index.div_ceil(factor);
            match jumps.last_mut() {
                Some(last) if last.index == index => last.size += j.size,
                _ => jumps.push(Jump { index, size: j.size }),
            }
        }
        jumps.retain(|j| j.size != 0.0);
        CadlagPath::new(grid, values, jumps)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "value", "jump"])?;
        for i in 0..self.grid.len() {
            w.write_record([
                format!("{:.16e}", self.grid.time(i)),
                format!("{:.16e}", self.values[i]),
                format!("{:.16e}", self.jump_at(i)),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<CadlagPath> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["t", "value", "jump"] {
            return Err(Error::Parse(format!("expected header t,value,jump, got {headers:?}")));
        }
        let mut times = Vec::new();
        let mut values = Vec::new();
        let mut jumps = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let field = |k: usize| -> Result<f64> {
                rec.get(k)
                    .ok_or_else(|| Error::Parse(format!("row {i}: missing column {k}")))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("row {i}: {e}")))
            };
            times.push(field(0)?);
            values.push(field(1)?);
            let size = field(2)?;
            if size != 0.0 {
                jumps.push(Jump { index: i, size });
            }
        }
        if times.len() < 2 || times[0] != 0.0 {
            return Err(Error::Parse("a path needs at least two rows starting at t=0".into()));
        }
        let grid = TimeGrid::new(*times.last().unwrap(), times.len() - 1)?;
        let tol = 1e-9 * grid.horizon();
        if let Some((i, t)) = times.iter().enumerate().find(|(i, t)| (grid.time(*i) - **t).abs() > tol) {
            return Err(Error::Parse(format!("row {i}: time {t} breaks the uniform grid")));
        }
        CadlagPath::new(grid, values, jumps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub time: f64,
    pub index: usize,
    pub size: f64,
}

/// Atoms `(s, ΔX_s)` of the jump measure of a path, in time order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct JumpMeasure {
    pub atoms: Vec<Atom>,
}

impl JumpMeasure {
    pub fn from_atoms(atoms: Vec<Atom>) -> Self {
        Self { atoms }
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// `sum_{s <= t} h(s, ΔX_s, X_{s-})`. `left_values[k]` is the left limit
    /// of the path at atom `k`.
    pub fn star_integral(&self, left_values: &[f64], t: f64, h: impl Fn(f64, f64, f64) -> f64) -> f64 {
        assert_eq!(left_values.len(), self.atoms.len(), "one left value per atom");
        self.atoms
            .iter()
            .zip(left_values)
            .take_while(|(a, _)| a.time <= t)
            .map(|(a, &left)| h(a.time, a.size, left))
            .sum()
    }
}
