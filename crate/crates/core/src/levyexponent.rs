//! Lévy–Khintchine type exponents with signed measures, and recovery of the
//! triplet from a sampled exponent.
//!
//! ```text
//! ψ(u)   = iub − ½cu² + ∫(e^{iux} − 1 − iuk(x)) Λ(dx)
//! φ_w(u) = ψ(u) − ½∫_{−1}^{1} ψ(u + sw) ds = cw²/6 + ∫(1 − sin(wx)/(wx)) e^{iux} Λ(dx)
//! ```
//!
//! `φ_w` is the Fourier transform of `G_w = (cw²/6)δ_0 + (1 − sinc(wx))Λ`, so
//! inverting it and dividing by the weight gives `Λ`, its flat offset gives `c`,
//! and the remaining odd part of `ψ` near the origin gives `b`.

use std::f64::consts::PI;
use std::io::{Read, Write};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::characteristics::Truncation;
use crate::quadrature::{gauss_legendre, PHI_NODES};
use crate::{Error, Result};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Signed measure on `ℝ∖{0}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LevyMeasure {
    /// `Σ w_i δ_{x_i}`, `x_i ≠ 0`, `w_i` of any sign.
    WeightedAtoms { atoms: Vec<(f64, f64)> },
    /// Density on an increasing grid, integrated by the trapezoid rule.
    GriddedDensity { x: Vec<f64>, density: Vec<f64> },
}

impl LevyMeasure {
    pub fn zero() -> Self {
        LevyMeasure::WeightedAtoms { atoms: Vec::new() }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LevyMeasure::WeightedAtoms { atoms } => {
                if atoms.iter().any(|&(x, w)| x == 0.0 || !x.is_finite() || !w.is_finite()) {
                    return Err(Error::InvalidModel("atoms need finite nonzero locations and finite weights".into()));
                }
            }
            LevyMeasure::GriddedDensity { x, density } => {
                if x.len() != density.len() || x.len() < 2 {
                    return Err(Error::InvalidModel("density grid needs at least two matching nodes".into()));
                }
                if x.windows(2).any(|p| !(p[1] > p[0])) || density.iter().any(|d| !d.is_finite()) {
                    return Err(Error::InvalidModel("density grid must be increasing with finite values".into()));
                }
            }
        }
        let tv = self.weighted().iter().map(|&(x, w)| (x * x).min(1.0) * w.abs()).sum::<f64>();
        if !tv.is_finite() {
            return Err(Error::InvalidModel("∫(1∧x²)|Λ|(dx) is not finite".into()));
        }
        Ok(())
    }

    /// `(x, weight)` pairs: exact atoms, or grid nodes with trapezoid weights.
    pub fn weighted(&self) -> Vec<(f64, f64)> {
        match self {
            LevyMeasure::WeightedAtoms { atoms } => atoms.clone(),
            LevyMeasure::GriddedDensity { x, density } => {
                let n = x.len();
                (0..n)
                    .map(|i| {
                        let left = if i > 0 { x[i] - x[i - 1] } else { 0.0 };
                        let right = if i + 1 < n { x[i + 1] - x[i] } else { 0.0 };
                        (x[i], 0.5 * (left + right) * density[i])
                    })
                    .collect()
            }
        }
    }
}

/// One-dimensional triplet `(b, c, Λ)` relative to the truncation `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Triplet1D {
    pub b: f64,
    /// Sign unrestricted.
    pub c: f64,
    pub lambda: LevyMeasure,
    #[serde(default)]
    pub truncation: Truncation,
}

impl Triplet1D {
    pub fn validate(&self) -> Result<()> {
        if !(self.b.is_finite() && self.c.is_finite()) {
            return Err(Error::InvalidModel("b and c must be finite".into()));
        }
        self.truncation.validate()?;
        self.lambda.validate()
    }
}

/// `ψ(u)` at each `u`.
pub fn exponent_eval(t: &Triplet1D, u: &[f64]) -> Vec<Complex64> {
    let pts = t.lambda.weighted();
    let kx: Vec<f64> = pts.iter().map(|&(x, _)| t.truncation.eval(x)).collect();
    u.par_iter()
        .map(|&u| {
            let mut acc = Complex64::new(0.0, u * t.b) - 0.5 * t.c * u * u;
            for (&(x, w), &k) in pts.iter().zip(&kx) {
                acc += w * (Complex64::cis(u * x) - 1.0 - I * (u * k));
            }
            acc
        })
        .collect()
}

pub fn exponent_at(t: &Triplet1D, u: f64) -> Complex64 {
    exponent_eval(t, &[u])[0]
}

/// `ψ(u) = i⟨u,b⟩ − ½⟨u,cu⟩ + Σ w (e^{i⟨u,x⟩} − 1 − i⟨u,k(x)⟩)` in `ℝ^d`, with
/// the radial truncation `k(x) = x · k(|x|)/|x|`.
pub fn exponent_eval_nd(
    b: &[f64],
    c: &[Vec<f64>],
    atoms: &[(Vec<f64>, f64)],
    k: Truncation,
    u: &[f64],
) -> Result<Complex64> {
    let d = b.len();
    if u.len() != d || c.len() != d || c.iter().any(|r| r.len() != d) || atoms.iter().any(|(x, _)| x.len() != d) {
        return Err(Error::InvalidModel(format!("dimension mismatch for d = {d}")));
    }
    if (0..d).any(|i| (0..i).any(|j| c[i][j] != c[j][i])) {
        return Err(Error::InvalidModel("c must be symmetric".into()));
    }
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
    let cu: Vec<f64> = c.iter().map(|row| dot(row, u)).collect();
    let mut acc = Complex64::new(-0.5 * dot(u, &cu), dot(u, b));
    for (x, w) in atoms {
        let r = dot(x, x).sqrt();
        if r == 0.0 {
            return Err(Error::InvalidModel("Λ may not charge the origin".into()));
        }
        let ux = dot(u, x);
        acc += w * (Complex64::cis(ux) - 1.0 - I * (ux * k.eval(r) / r));
    }
    Ok(acc)
}

/// Samples of `ψ` on a symmetric uniform `u`-grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentGrid {
    u: Vec<f64>,
    psi: Vec<Complex64>,
}

impl ExponentGrid {
    pub fn new(u: Vec<f64>, psi: Vec<Complex64>) -> Result<Self> {
        if u.len() != psi.len() || u.len() < 3 {
            return Err(Error::InvalidExponentGrid("need at least three (u, ψ) samples".into()));
        }
        let m = u.len();
        let du = (u[m - 1] - u[0]) / (m - 1) as f64;
        let scale = u[m - 1].abs().max(1.0);
        let tol = 1e-9 * scale;
        if !(du > 0.0) || (u[0] + u[m - 1]).abs() > tol {
            return Err(Error::InvalidExponentGrid("u-grid must be increasing and symmetric".into()));
        }
        if u.iter().enumerate().any(|(i, &v)| (v - (u[0] + du * i as f64)).abs() > tol) {
            return Err(Error::InvalidExponentGrid("u-grid must be uniform".into()));
        }
        if psi.iter().any(|p| !(p.re.is_finite() && p.im.is_finite())) {
            return Err(Error::InvalidExponentGrid("non-finite ψ sample".into()));
        }
        Ok(Self { u, psi })
    }

    /// `m` points on `[−u_max, u_max]`.
    pub fn uniform_u(u_max: f64, m: usize) -> Vec<f64> {
        (0..m).map(|i| -u_max + 2.0 * u_max * i as f64 / (m - 1) as f64).collect()
    }

    pub fn from_triplet(t: &Triplet1D, u_max: f64, m: usize) -> Result<Self> {
        t.validate()?;
        let u = Self::uniform_u(u_max, m);
        let psi = exponent_eval(t, &u);
        Self::new(u, psi)
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn psi(&self) -> &[Complex64] {
        &self.psi
    }

    pub fn u_max(&self) -> f64 {
        *self.u.last().unwrap()
    }

    pub fn du(&self) -> f64 {
        self.u[1] - self.u[0]
    }

    /// Linear interpolation of `ψ`.
    pub fn interp(&self, u: f64) -> Result<Complex64> {
        let lo = self.u[0];
        let slack = 1e-12 * self.u_max();
        if !(u >= lo - slack && u <= self.u_max() + slack) {
            return Err(Error::OutOfRange { value: u, lo, hi: self.u_max() });
        }
        let pos = ((u - lo) / self.du()).clamp(0.0, (self.u.len() - 1) as f64);
        let i = (pos.floor() as usize).min(self.u.len() - 2);
        let a = pos - i as f64;
        Ok(self.psi[i] * (1.0 - a) + self.psi[i + 1] * a)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["u", "re", "im"])?;
        for (u, p) in self.u.iter().zip(&self.psi) {
            w.write_record([format!("{u:.17e}"), format!("{:.17e}", p.re), format!("{:.17e}", p.im)])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        if r.headers()?.iter().collect::<Vec<_>>() != ["u", "re", "im"] {
            return Err(Error::Parse("expected header u,re,im".into()));
        }
        let mut u = Vec::new();
        let mut psi = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let num = |k: usize| -> Result<f64> {
                rec.get(k)
                    .ok_or_else(|| Error::Parse("short row".into()))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(e.to_string()))
            };
            u.push(num(0)?);
            psi.push(Complex64::new(num(1)?, num(2)?));
        }
        Self::new(u, psi)
    }
}

/// `φ_w(u)` by 64-node Gauss–Legendre in `s`, interpolating `ψ` linearly.
pub fn phi_w(psi: &ExponentGrid, w: f64, u: f64) -> Result<Complex64> {
    if w == 0.0 || !w.is_finite() {
        return Err(Error::Precondition("w must be finite and nonzero".into()));
    }
    let rule = gauss_legendre(PHI_NODES);
    phi_with(psi, &rule, w, u)
}

fn phi_with(psi: &ExponentGrid, rule: &[(f64, f64)], w: f64, u: f64) -> Result<Complex64> {
    let reach = w.abs();
    let slack = 1e-12 * psi.u_max();
    if u - reach < -psi.u_max() - slack || u + reach > psi.u_max() + slack {
        return Err(Error::OutOfRange { value: u, lo: -psi.u_max() + reach, hi: psi.u_max() - reach });
    }
    let mut avg = Complex64::new(0.0, 0.0);
    for &(s, ws) in rule {
        avg += ws * psi.interp(u + s * w)?;
    }
    Ok(psi.interp(u)? - 0.5 * avg)
}

/// Tuning of [`recover_triplet`]; defaults resolve features of width ≥ 0.05 on `[−4, 4]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoveryOptions {
    pub x_min: f64,
    pub x_max: f64,
    pub cells: usize,
    /// Cells where `1 − sinc(wx)` falls below this are left unrecovered.
    pub guard: f64,
    /// Fraction of the admissible band left untapered.
    pub taper_flat: f64,
    pub small_u: (f64, f64),
    pub min_points: usize,
}

impl Default for RecoveryOptions {
    fn default() -> Self {
        Self { x_min: -4.0, x_max: 4.0, cells: 1024, guard: 1e-3, taper_flat: 0.2, small_u: (0.1, 1.0), min_points: 512 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveredTriplet {
    pub b: f64,
    pub c: f64,
    /// `[x, density]` at cell centres.
    pub lambda_grid: Vec<[f64; 2]>,
    /// `sup |ψ̂ − ψ|` over the admissible `u` band.
    pub residual: f64,
    pub unrecovered_cells: Vec<usize>,
    pub w: f64,
    pub truncation: Truncation,
}

impl RecoveredTriplet {
    pub fn cell_width(&self) -> f64 {
        match self.lambda_grid.as_slice() {
            [a, b, ..] => b[0] - a[0],
            _ => 0.0,
        }
    }

    /// `Λ̂([lo, hi])` from the cells whose centre lies in the interval.
    pub fn mass(&self, lo: f64, hi: f64) -> f64 {
        let dx = self.cell_width();
        self.lambda_grid.iter().filter(|p| p[0] >= lo && p[0] <= hi).map(|p| p[1] * dx).sum()
    }

    /// `Λ̂` as a density triplet (midpoint weights, so the forward map uses the same quadrature).
    pub fn as_atoms(&self) -> Triplet1D {
        let dx = self.cell_width();
        Triplet1D {
            b: self.b,
            c: self.c,
            lambda: LevyMeasure::WeightedAtoms {
                atoms: self.lambda_grid.iter().filter(|p| p[1] != 0.0).map(|p| (p[0], p[1] * dx)).collect(),
            },
            truncation: self.truncation,
        }
    }

    /// Relative L¹ distance to `density` on `lo ≤ |x| ≤ hi`.
    pub fn relative_l1(&self, density: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for p in self.lambda_grid.iter().filter(|p| p[0].abs() >= lo && p[0].abs() <= hi) {
            let d = density(p[0]);
            num += (p[1] - d).abs();
            den += d.abs();
        }
        num / den
    }
}

fn sinc_weight(w: f64, x: f64) -> f64 {
    let y = w * x;
    if y.abs() < 1e-4 {
        y * y / 6.0
    } else {
        1.0 - y.sin() / y
    }
}

/// Recover `(b, c, Λ)` from samples of `ψ`.
pub fn recover_triplet(psi: &ExponentGrid, w: f64, k: Truncation) -> Result<RecoveredTriplet> {
    recover_triplet_with(psi, w, k, &RecoveryOptions::default())
}

pub fn recover_triplet_with(psi: &ExponentGrid, w: f64, k: Truncation, opts: &RecoveryOptions) -> Result<RecoveredTriplet> {
    k.validate()?;
    if psi.u().len() < opts.min_points {
        return Err(Error::InvalidExponentGrid(format!(
            "recovery needs at least {} samples, got {}",
            opts.min_points,
            psi.u().len()
        )));
    }
    if !(w.is_finite() && w > 0.0) || w >= psi.u_max() {
        return Err(Error::Precondition(format!("w must lie in (0, u_max), got {w}")));
    }
    if opts.cells < 2 || !(opts.x_max > opts.x_min) {
        return Err(Error::Precondition("recovery x-grid is empty".into()));
    }

    let rule = gauss_legendre(PHI_NODES);
    let band = psi.u_max() - w;
    let slack = 1e-12 * psi.u_max();
    let adm: Vec<f64> = psi.u().iter().copied().filter(|u| u.abs() <= band + slack).collect();
    let phi: Vec<Complex64> = adm.iter().map(|&u| phi_with(psi, &rule, w, u)).collect::<Result<_>>()?;

    // the δ_0 atom is the flat offset of φ_w
    let offset = phi.iter().map(|p| p.re).sum::<f64>() / phi.len() as f64;
    let c = 6.0 * offset / (w * w);

    let du = psi.du();
    let flat = opts.taper_flat * band;
    let weights: Vec<f64> = adm
        .iter()
        .enumerate()
        .map(|(i, &u)| {
            let trap = if i == 0 || i + 1 == adm.len() { 0.5 * du } else { du };
            let a = u.abs();
            let taper = if a <= flat { 1.0 } else { 0.5 * (1.0 + (PI * (a - flat) / (band - flat)).cos()) };
            trap * taper / (2.0 * PI)
        })
        .collect();

    let dx = (opts.x_max - opts.x_min) / opts.cells as f64;
    let cells: Vec<(f64, Option<f64>)> = (0..opts.cells)
        .into_par_iter()
        .map(|j| {
            let x = opts.x_min + (j as f64 + 0.5) * dx;
            let f = sinc_weight(w, x);
            if f < opts.guard {
                return (x, None);
            }
            let mut g = 0.0;
            for ((&u, p), &wt) in adm.iter().zip(&phi).zip(&weights) {
                g += wt * ((p - offset) * Complex64::cis(-u * x)).re;
            }
            (x, Some(g / f))
        })
        .collect();
    let unrecovered_cells: Vec<usize> = cells.iter().enumerate().filter(|(_, c)| c.1.is_none()).map(|(j, _)| j).collect();
    let lambda_grid: Vec<[f64; 2]> = cells.iter().map(|&(x, d)| [x, d.unwrap_or(0.0)]).collect();

    let mut rec = RecoveredTriplet { b: 0.0, c, lambda_grid, residual: 0.0, unrecovered_cells, w, truncation: k };

    // b from the odd part of ψ after removing the recovered c and Λ
    let small: Vec<(f64, Complex64)> = psi
        .u()
        .iter()
        .zip(psi.psi())
        .filter(|(u, _)| **u >= opts.small_u.0 && **u <= opts.small_u.1)
        .map(|(u, p)| (*u, *p))
        .collect();
    if small.is_empty() {
        return Err(Error::InvalidExponentGrid("no samples in the small-u window".into()));
    }
    let no_drift = rec.as_atoms();
    let jump_part = exponent_eval(&Triplet1D { b: 0.0, c: 0.0, ..no_drift }, &small.iter().map(|s| s.0).collect::<Vec<_>>());
    rec.b = small
        .iter()
        .zip(&jump_part)
        .map(|(&(u, p), j)| (p + 0.5 * u * u * c - j).im / u)
        .sum::<f64>()
        / small.len() as f64;

    let fitted = exponent_eval(&rec.as_atoms(), &adm);
    rec.residual = adm
        .iter()
        .zip(&fitted)
        .map(|(&u, f)| (f - psi.interp(u).expect("admissible")).norm())
        .fold(0.0, f64::max);
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gaussian_triplet() -> Triplet1D {
        let x: Vec<f64> = (0..=4000).map(|i| -4.0 + 8.0 * i as f64 / 4000.0).collect();
        let density = x.iter().map(|&v| 2.0 * normal_pdf(v, 0.25)).collect();
        Triplet1D { b: 0.5, c: 1.0, lambda: LevyMeasure::GriddedDensity { x, density }, truncation: Truncation::Standard }
    }

    fn normal_pdf(x: f64, sd: f64) -> f64 {
        (-(x * x) / (2.0 * sd * sd)).exp() / (sd * (2.0 * PI).sqrt())
    }

    fn atom_triplet() -> Triplet1D {
        Triplet1D {
            b: 0.0,
            c: 0.0,
            lambda: LevyMeasure::WeightedAtoms { atoms: vec![(0.5, 1.0), (-0.8, -0.5)] },
            truncation: Truncation::Standard,
        }
    }

    #[test]
    fn exponent_examples() {
        let zero = Triplet1D { b: 0.0, c: 0.0, lambda: LevyMeasure::zero(), truncation: Truncation::Standard };
        assert!(exponent_eval(&zero, &[-3.0, 0.0, 7.0]).iter().all(|p| p.norm() == 0.0));
        let gauss = Triplet1D { c: 1.0, ..zero.clone() };
        assert_eq!(exponent_at(&gauss, 2.0), Complex64::new(-2.0, 0.0));
        let atom = Triplet1D { lambda: LevyMeasure::WeightedAtoms { atoms: vec![(2.0, 1.0)] }, ..zero };
        assert!(exponent_at(&atom, PI).norm() < 1e-14);
        let u = 0.37;
        assert!((exponent_at(&atom, u) - (Complex64::cis(2.0 * u) - 1.0)).norm() < 1e-15);
    }

    #[test]
    fn gridded_gaussian_matches_closed_form() {
        // symmetric law: ∫(e^{iux} − 1 − iuk)Λ = 2(e^{−u²σ²/2} − 1)
        let t = gaussian_triplet();
        for u in [0.3f64, 1.0, 5.0, 20.0, 40.0] {
            let exact = Complex64::new(-0.5 * u * u + 2.0 * ((-u * u * 0.0625 / 2.0).exp() - 1.0), 0.5 * u);
            assert!((exponent_at(&t, u) - exact).norm() < 1e-9, "u={u}");
        }
    }

    #[test]
    fn nd_reduces_to_1d() {
        let t = atom_triplet();
        let atoms = vec![(vec![0.5], 1.0), (vec![-0.8], -0.5)];
        for u in [-2.0, 0.5, 3.0] {
            let nd = exponent_eval_nd(&[0.0], &[vec![0.0]], &atoms, Truncation::Standard, &[u]).unwrap();
            assert!((nd - exponent_at(&t, u)).norm() < 1e-15);
        }
        let c = vec![vec![1.0, 0.5], vec![0.5, 2.0]];
        let v = exponent_eval_nd(&[1.0, 0.0], &c, &[], Truncation::Standard, &[1.0, 1.0]).unwrap();
        assert_eq!(v, Complex64::new(-2.0, 1.0));
        assert!(exponent_eval_nd(&[0.0], &[vec![0.0]], &[(vec![0.0], 1.0)], Truncation::Standard, &[1.0]).is_err());
        assert!(exponent_eval_nd(&[0.0, 0.0], &[vec![0.0, 1.0], vec![0.0, 0.0]], &[], Truncation::Standard, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn phi_examples() {
        let zero = Triplet1D { b: 0.0, c: 0.0, lambda: LevyMeasure::zero(), truncation: Truncation::Standard };
        let g = ExponentGrid::from_triplet(&Triplet1D { c: 1.0, ..zero.clone() }, 40.0, 2048).unwrap();
        for u in [-30.0, 0.0, 12.5] {
            // linear interpolation of u² adds du²/4 at most
            assert!((phi_w(&g, 1.0, u).unwrap() - 1.0 / 6.0).norm() < g.du() * g.du());
        }
        let g = ExponentGrid::from_triplet(&zero, 40.0, 2048).unwrap();
        assert_eq!(phi_w(&g, 2.0, 3.0).unwrap(), Complex64::new(0.0, 0.0));
        let g = ExponentGrid::from_triplet(&Triplet1D { b: 0.7, ..zero }, 40.0, 2048).unwrap();
        for &u in g.u().iter().filter(|u| u.abs() <= 38.0) {
            assert!(phi_w(&g, 2.0, u).unwrap().norm() < 1e-10);
        }
        assert!(matches!(phi_w(&g, 2.0, 39.0), Err(Error::OutOfRange { .. })));
        assert!(phi_w(&g, 0.0, 1.0).is_err());
    }

    #[test]
    fn phi_matches_sinc_identity_for_atoms() {
        let t = atom_triplet();
        let g = ExponentGrid::from_triplet(&t, 40.0, 8192).unwrap();
        let w = 2.0;
        for u in [-10.0, 0.3, 5.0] {
            let mut expect = Complex64::new(0.0, 0.0);
            if let LevyMeasure::WeightedAtoms { atoms } = &t.lambda {
                for &(x, m) in atoms {
                    expect += m * (1.0 - (w * x).sin() / (w * x)) * Complex64::cis(u * x);
                }
            }
            // error of linear interpolation: du² · max|ψ''| / 8
            assert!((phi_w(&g, w, u).unwrap() - expect).norm() < 1e-4, "u={u}");
        }
    }

    #[test]
    fn csv_round_trip_and_validation() {
        let g = ExponentGrid::from_triplet(&atom_triplet(), 10.0, 64).unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        assert_eq!(ExponentGrid::read_csv(buf.as_slice()).unwrap(), g);
        assert!(ExponentGrid::new(vec![0.0, 1.0, 2.0], vec![Complex64::new(0.0, 0.0); 3]).is_err());
        assert!(ExponentGrid::new(vec![-1.0, 0.2, 1.0], vec![Complex64::new(0.0, 0.0); 3]).is_err());
        assert!(matches!(recover_triplet(&g, 2.0, Truncation::Standard), Err(Error::InvalidExponentGrid(_))));
    }

    #[test]
    fn hermitian_symmetry() {
        let g = ExponentGrid::from_triplet(&gaussian_triplet(), 40.0, 512).unwrap();
        let n = g.u().len();
        for i in 0..n {
            assert!((g.psi()[i] - g.psi()[n - 1 - i].conj()).norm() < 1e-9);
        }
    }

    #[test]
    fn zero_triplet_recovers_zero() {
        let zero = Triplet1D { b: 0.0, c: 0.0, lambda: LevyMeasure::zero(), truncation: Truncation::Standard };
        let g = ExponentGrid::from_triplet(&zero, 40.0, 2048).unwrap();
        let r = recover_triplet(&g, 2.0, Truncation::Standard).unwrap();
        assert!(r.b.abs() < 1e-8 && r.c.abs() < 1e-8);
        assert!(r.lambda_grid.iter().all(|p| p[1].abs() < 1e-8));
        assert!(r.residual < 1e-8);
    }

    #[test]
    fn gaussian_round_trip() {
        let g = ExponentGrid::from_triplet(&gaussian_triplet(), 40.0, 2048).unwrap();
        let r = recover_triplet(&g, 2.0, Truncation::Standard).unwrap();
        assert!((r.b - 0.5).abs() / 0.5 < 0.05, "b={}", r.b);
        assert!((r.c - 1.0).abs() < 0.05, "c={}", r.c);
        let l1 = r.relative_l1(|x| 2.0 * normal_pdf(x, 0.25), 0.05, 1.5);
        assert!(l1 < 0.05, "L1={l1}");
        assert!(!r.unrecovered_cells.is_empty());
        let r3 = recover_triplet(&g, 3.0, Truncation::Standard).unwrap();
        assert!((r3.c - r.c).abs() / r.c < 0.02);
    }

    #[test]
    fn signed_atoms_round_trip() {
        let g = ExponentGrid::from_triplet(&atom_triplet(), 40.0, 2048).unwrap();
        let r = recover_triplet(&g, 2.0, Truncation::Standard).unwrap();
        assert!((r.mass(0.2, 0.8) - 1.0).abs() < 0.05, "{}", r.mass(0.2, 0.8));
        assert!((r.mass(-1.1, -0.5) + 0.5).abs() < 0.025, "{}", r.mass(-1.1, -0.5));
        assert!(r.b.abs() < 0.05 && r.c.abs() < 0.05);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn exponent_is_linear(b1 in -2.0f64..2.0, c1 in -2.0f64..2.0, x1 in 0.1f64..3.0, w1 in -2.0f64..2.0,
                              b2 in -2.0f64..2.0, c2 in -2.0f64..2.0, x2 in -3.0f64..-0.1, w2 in -2.0f64..2.0,
                              u in -40.0f64..40.0) {
            let t1 = Triplet1D { b: b1, c: c1, lambda: LevyMeasure::WeightedAtoms { atoms: vec![(x1, w1)] }, truncation: Truncation::smooth_clip() };
            let t2 = Triplet1D { b: b2, c: c2, lambda: LevyMeasure::WeightedAtoms { atoms: vec![(x2, w2)] }, truncation: Truncation::smooth_clip() };
            let sum = Triplet1D { b: b1 + b2, c: c1 + c2, lambda: LevyMeasure::WeightedAtoms { atoms: vec![(x1, w1), (x2, w2)] }, truncation: Truncation::smooth_clip() };
            let lhs = exponent_at(&sum, u);
            let rhs = exponent_at(&t1, u) + exponent_at(&t2, u);
            prop_assert!((lhs - rhs).norm() <= 1e-12 * (1.0 + lhs.norm()));
        }

        #[test]
        fn exponent_is_hermitian(x in -3.0f64..3.0, w in -2.0f64..2.0, u in -40.0f64..40.0) {
            prop_assume!(x != 0.0);
            let t = Triplet1D { b: 0.3, c: -0.4, lambda: LevyMeasure::WeightedAtoms { atoms: vec![(x, w)] }, truncation: Truncation::Standard };
            prop_assert!((exponent_at(&t, -u) - exponent_at(&t, u).conj()).norm() <= 1e-12);
            prop_assert_eq!(exponent_at(&t, 0.0), Complex64::new(0.0, 0.0));
        }

        #[test]
        fn drift_is_invisible_to_phi(b in -5.0f64..5.0, u in -37.0f64..37.0) {
            let t = Triplet1D { b, c: 0.0, lambda: LevyMeasure::zero(), truncation: Truncation::Standard };
            let g = ExponentGrid::from_triplet(&t, 40.0, 2048).unwrap();
            prop_assert!(phi_w(&g, 2.0, u).unwrap().norm() < 1e-10);
        }
    }
}
