//! Deterministic stand-in for a boundary-integral far-field solver.
//!
//! For incidence `d̂ = (cos φ, sin φ)` and observation `x̂_j = (cos t_j, sin t_j)`,
//! with boundary nodes `x_k`, weights `w_k = |x'(τ_k)| Δτ` and outward unit
//! normals `n̂_k`:
//!
//! ```text
//! e∞(t_j) = sin θ / √ε0 · 1/(1+λ) · Σ_k exp(i κ0 (d̂ − x̂_j)·x_k) w_k
//! h∞(t_j) = λ/(1+λ) · Σ_k exp(i κ0 (d̂ − x̂_j)·x_k) (n̂_k·x̂_j) w_k
//! ```
//!
//! This is a Born/Kirchhoff-type quadrature. It is smooth in every shape
//! parameter, periodic in the observation angle and sensitive to impedance,
//! but it is not a physical solution of the scattering problem. Externally
//! computed far fields can be supplied through the dataset file formats.

use std::f64::consts::TAU;

use num_complex::Complex64;

use super::Incidence;
use crate::error::Result;
use crate::geometry::{boundary_grid, eval_curve, BoundaryShape, ScatterConfig};

/// Electric and magnetic far-field patterns for one incidence.
#[derive(Clone, Debug, PartialEq)]
pub struct FarField {
    pub incidence: Incidence,
    pub e: Vec<Complex64>,
    pub h: Vec<Complex64>,
}

pub fn surrogate_farfield(shape: &BoundaryShape, config: &ScatterConfig, incidence: Incidence) -> Result<FarField> {
    let angles: Vec<f64> = (0..config.angles)
        .map(|j| TAU * j as f64 / config.angles as f64)
        .collect();
    surrogate_at(shape, config, incidence.angle(), &angles).map(|(e, h)| FarField { incidence, e, h })
}

/// Evaluates the surrogate at arbitrary incidence and observation angles.
pub fn surrogate_at(
    shape: &BoundaryShape,
    config: &ScatterConfig,
    phi: f64,
    angles: &[f64],
) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    let grid = boundary_grid(config.boundary_points)?;
    let dtau = TAU / config.boundary_points as f64;
    let mut nodes = Vec::with_capacity(grid.len());
    for &tau in &grid {
        let cp = eval_curve(shape, tau)?;
        let speed = cp.derivative[0].hypot(cp.derivative[1]);
        let normal = [cp.derivative[1] / speed, -cp.derivative[0] / speed];
        nodes.push((cp.point, normal, speed * dtau));
    }

    let lambda = shape.impedance;
    let e_scale = config.theta.sin() / config.eps0.sqrt() / (1.0 + lambda);
    let h_scale = lambda / (1.0 + lambda);
    let (dx, dy) = (phi.cos(), phi.sin());
    let kappa = config.kappa0;

    let mut e = Vec::with_capacity(angles.len());
    let mut h = Vec::with_capacity(angles.len());
    for &t in angles {
        let (sx, cx) = t.sin_cos();
        let (kx, ky) = (kappa * (dx - cx), kappa * (dy - sx));
        let mut se = Complex64::new(0.0, 0.0);
        let mut sh = Complex64::new(0.0, 0.0);
        for (p, n, w) in &nodes {
            let (s, c) = (kx * p[0] + ky * p[1]).sin_cos();
            let z = Complex64::new(c * w, s * w);
            se += z;
            sh += z * (n[0] * cx + n[1] * sx);
        }
        e.push(se * e_scale);
        h.push(sh * h_scale);
    }
    Ok((e, h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ShapeClass, STAR_ORDER};

    fn config() -> ScatterConfig {
        ScatterConfig::standard(128, 8).unwrap()
    }

    #[test]
    fn wavenumber_from_standard_constants() {
        assert!((config().kappa0 - 2.5).abs() < 1e-12);
    }

    #[test]
    fn circle_is_rotation_equivariant() {
        let cfg = config();
        let circle = BoundaryShape::circle(0.3, [0.0, 0.0], 1.5);
        for s in 0..16 {
            let delta = 0.37 * s as f64;
            let t = [0.2, 1.1, 4.5];
            let shifted: Vec<f64> = t.iter().map(|v| v + delta).collect();
            let (a, _) = surrogate_at(&circle, &cfg, 0.3, &t).unwrap();
            let (b, _) = surrogate_at(&circle, &cfg, 0.3 + delta, &shifted).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).norm() < 1e-10, "shift {delta}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn periodic_in_observation_angle() {
        let cfg = config();
        let mut coeffs = vec![0.25];
        coeffs.extend((0..2 * STAR_ORDER).map(|q| 0.1 * q as f64 - 0.4));
        let star = BoundaryShape::new(ShapeClass::Star, coeffs, [0.05, -0.1], 3.0).unwrap();
        let t = [0.0, 0.7, 2.0];
        let t2: Vec<f64> = t.iter().map(|v| v + TAU).collect();
        let (e1, h1) = surrogate_at(&star, &cfg, 0.0, &t).unwrap();
        let (e2, h2) = surrogate_at(&star, &cfg, 0.0, &t2).unwrap();
        for i in 0..3 {
            assert!((e1[i] - e2[i]).norm() < 1e-12);
            assert!((h1[i] - h2[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn electric_field_vanishes_for_large_impedance() {
        let cfg = config();
        let mut prev = f64::INFINITY;
        for lambda in [1.0, 1e2, 1e4, 1e8] {
            let circle = BoundaryShape::circle(0.3, [0.0, 0.0], lambda);
            let f = surrogate_farfield(&circle, &cfg, Incidence::Zero).unwrap();
            let m = f.e.iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(m < prev);
            prev = m;
        }
        assert!(prev < 1e-7);
    }

    #[test]
    fn degenerate_shape_propagates() {
        let bad = BoundaryShape::new(ShapeClass::Peanut, vec![-0.1, -0.1], [0.0, 0.0], 1.0).unwrap();
        assert!(surrogate_farfield(&bad, &config(), Incidence::Zero).is_err());
    }
}
