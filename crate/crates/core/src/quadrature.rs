//! Fixed quadrature rules and grid Stieltjes sums.

use std::num::NonZeroUsize;

use gauss_quad::{GaussHermite, GaussLegendre};

/// Node count of the rules used for jump-law expectations.
pub const LAW_NODES: usize = 40;

/// Node count of the s-integral inside the `phi_w` transform.
pub const PHI_NODES: usize = 64;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let rule = GaussLegendre::new(NonZeroUsize::new(n).expect("at least one node"));
    let mut pairs = rule.as_node_weight_pairs().to_vec();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs
}

/// Gauss–Hermite nodes and weights for the weight `exp(-x^2)`.
pub fn gauss_hermite(n: usize) -> Vec<(f64, f64)> {
    let rule = GaussHermite::new(NonZeroUsize::new(n).expect("at least one node"));
    let mut pairs = rule.as_node_weight_pairs().to_vec();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs
}

/// Left-point Stieltjes sums `sum_{i<j} f_i (g_{i+1} - g_i)` at every node `j`.
pub fn left_stieltjes(integrand: &[f64], integrator: &[f64]) -> Vec<f64> {
    assert_eq!(integrand.len(), integrator.len());
    let mut out = Vec::with_capacity(integrator.len());
    let mut acc = 0.0;
    out.push(0.0);
    for i in 1..integrator.len() {
        acc += integrand[i - 1] * (integrator[i] - integrator[i - 1]);
        out.push(acc);
    }
    out
}

/// Left-point Riemann sums `sum_{i<j} f_i dt` at every node `j`.
pub fn left_riemann(integrand: &[f64], dt: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(integrand.len());
    let mut acc = 0.0;
    out.push(0.0);
    for f in &integrand[..integrand.len().saturating_sub(1)] {
        acc += f * dt;
        out.push(acc);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials() {
        let rule = gauss_legendre(PHI_NODES);
        let int: f64 = rule.iter().map(|(x, w)| w * x.powi(6)).sum();
        assert!((int - 2.0 / 7.0).abs() < 1e-14);
        let total: f64 = rule.iter().map(|(_, w)| w).sum();
        assert!((total - 2.0).abs() < 1e-13);
    }

    #[test]
    fn hermite_gaussian_moments() {
        let rule = gauss_hermite(LAW_NODES);
        let norm = std::f64::consts::PI.sqrt();
        let m0: f64 = rule.iter().map(|(_, w)| w).sum::<f64>() / norm;
        let m2: f64 = rule.iter().map(|(x, w)| w * 2.0 * x * x).sum::<f64>() / norm;
        assert!((m0 - 1.0).abs() < 1e-12);
        assert!((m2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stieltjes_against_identity_is_riemann() {
        let f = [1.0, 2.0, 3.0, 4.0];
        let g = [0.0, 0.5, 1.0, 1.5];
        assert_eq!(left_stieltjes(&f, &g), left_riemann(&f, 0.5));
        assert_eq!(left_riemann(&f, 0.5), vec![0.0, 0.5, 1.5, 3.0]);
    }
}
