//! Obstacle boundary classes: parametrization, sampling, validation and
//! curve-level comparison.
//!
//! Three classes of inner boundary are supported, all centred at
//! `x0 ∈ [-0.2, 0.2]²` and carrying an impedance `λ ∈ [0.1, 10]`:
//!
//! * peanut: `x(τ) = ρ(τ)(cos τ, sin τ) + x0`, `ρ = √(α cos²τ + β sin²τ)`
//! * kite: `x(τ) = (α cos τ + β cos 2τ, γ sin τ) + x0`
//! * star: `x(τ) = ρ(τ)(cos τ, sin τ) + x0`,
//!   `ρ = α0 {1 + 1/(2Q) Σ_q [α_q cos qτ + β_q sin qτ]}` with `Q = 5`

use std::f64::consts::{PI, TAU};
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Radius of the known exterior boundary.
pub const OUTER_RADIUS: f64 = 0.8;
/// Sampled obstacles must stay strictly inside this radius.
pub const MAX_OBSTACLE_NORM: f64 = 0.75;
/// Lower bound on the radial function of peanut and star boundaries.
pub const MIN_RADIUS: f64 = 0.02;
/// Number of Fourier modes of the star-shaped boundary.
pub const STAR_ORDER: usize = 5;
pub const CENTER_RANGE: (f64, f64) = (-0.2, 0.2);
pub const IMPEDANCE_RANGE: (f64, f64) = (0.1, 10.0);
/// Consecutive rejections after which [`sample_shape`] gives up.
pub const MAX_REJECTIONS: usize = 1000;

/// Incidence, material and discretization settings of one experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatterConfig {
    pub omega: f64,
    pub theta: f64,
    pub phis: Vec<f64>,
    pub eps0: f64,
    pub mu0: f64,
    pub eps1: f64,
    pub mu1: f64,
    pub kappa0: f64,
    pub outer_radius: f64,
    /// Boundary quadrature size 𝒯.
    pub boundary_points: usize,
    /// Measurement angle count T0.
    pub angles: usize,
    /// Input channel count C0.
    pub channels: usize,
}

impl ScatterConfig {
    /// Builds a configuration with the experiment's material constants
    /// (ε0, μ0) = (1, 1), (ε1, μ1) = (2, 1), ω = 5, θ = π/6, 𝒯 = 128.
    ///
    /// The incidence set is `{0}` unless `channels == 8`, which requires both
    /// `φ = 0` and `φ = π`.
    pub fn standard(angles: usize, channels: usize) -> Result<Self> {
        let phis = if channels == 8 { vec![0.0, PI] } else { vec![0.0] };
        Self::new(5.0, PI / 6.0, phis, angles, channels)
    }

    pub fn new(omega: f64, theta: f64, phis: Vec<f64>, angles: usize, channels: usize) -> Result<Self> {
        let (eps0, mu0) = (1.0, 1.0);
        let cfg = ScatterConfig {
            omega,
            theta,
            phis,
            eps0,
            mu0,
            eps1: 2.0,
            mu1: 1.0,
            kappa0: wavenumber(omega, theta, eps0, mu0),
            outer_radius: OUTER_RADIUS,
            boundary_points: 128,
            angles,
            channels,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.theta > 0.0 && self.theta < PI) {
            return bad(format!("theta = {} must lie in (0, π)", self.theta));
        }
        let expected = wavenumber(self.omega, self.theta, self.eps0, self.mu0);
        if !(expected.is_finite() && (self.kappa0 - expected).abs() <= 1e-12 * expected.max(1.0)) {
            return bad(format!(
                "kappa0 = {} inconsistent with omega/theta/eps0/mu0 (expected {expected})",
                self.kappa0
            ));
        }
        if !matches!(self.angles, 32 | 128) {
            return bad(format!("T0 = {} (must be 32 or 128)", self.angles));
        }
        if !matches!(self.channels, 2 | 4 | 8) {
            return bad(format!("C0 = {} (must be 2, 4 or 8)", self.channels));
        }
        if self.channels == 8 && self.phis.len() != 2 {
            return bad("C0 = 8 requires two incidence angles".into());
        }
        if self.phis.is_empty() {
            return bad("no incidence angle".into());
        }
        for &phi in &self.phis {
            if phi != 0.0 && phi != PI {
                return bad(format!("incidence angle {phi} not in {{0, π}}"));
            }
        }
        if self.boundary_points < 4 {
            return Err(Error::InvalidGrid(self.boundary_points));
        }
        Ok(())
    }
}

/// `κ0 = ω √(μ0 ε0 (1 − cos²θ))`.
pub fn wavenumber(omega: f64, theta: f64, eps0: f64, mu0: f64) -> f64 {
    let c = theta.cos();
    (omega * omega * mu0 * eps0 * (1.0 - c * c)).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeClass {
    Peanut = 1,
    Kite = 2,
    Star = 3,
}

impl ShapeClass {
    pub const ALL: [ShapeClass; 3] = [ShapeClass::Peanut, ShapeClass::Kite, ShapeClass::Star];

    pub fn label(self) -> u8 {
        self as u8
    }

    pub fn from_label(label: u8) -> Option<Self> {
        match label {
            1 => Some(ShapeClass::Peanut),
            2 => Some(ShapeClass::Kite),
            3 => Some(ShapeClass::Star),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ShapeClass::Peanut => "peanut",
            ShapeClass::Kite => "kite",
            ShapeClass::Star => "star",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }

    /// Number of boundary coefficients (excluding center and impedance).
    pub fn coeff_count(self) -> usize {
        match self {
            ShapeClass::Peanut => 2,
            ShapeClass::Kite => 3,
            ShapeClass::Star => 1 + 2 * STAR_ORDER,
        }
    }

    pub fn coeff_names(self) -> Vec<String> {
        match self {
            ShapeClass::Peanut => vec!["alpha".into(), "beta".into()],
            ShapeClass::Kite => vec!["alpha".into(), "beta".into(), "gamma".into()],
            ShapeClass::Star => (0..=STAR_ORDER)
                .map(|q| format!("alpha{q}"))
                .chain((1..=STAR_ORDER).map(|q| format!("beta{q}")))
                .collect(),
        }
    }

    fn is_radial(self) -> bool {
        !matches!(self, ShapeClass::Kite)
    }
}

impl fmt::Display for ShapeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How the impedance of sampled obstacles is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImpedanceMode {
    Variable,
    Fixed(f64),
}

/// One obstacle: class, boundary coefficients, center and impedance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryShape {
    pub class: ShapeClass,
    pub coeffs: Vec<f64>,
    pub center: [f64; 2],
    pub impedance: f64,
}

/// Boundary point and its parameter derivative.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub point: [f64; 2],
    pub derivative: [f64; 2],
}

impl BoundaryShape {
    pub fn new(class: ShapeClass, coeffs: Vec<f64>, center: [f64; 2], impedance: f64) -> Result<Self> {
        if coeffs.len() != class.coeff_count() {
            return Err(Error::shape(
                format!("{} coefficients for class {class}", class.coeff_count()),
                coeffs.len(),
            ));
        }
        Ok(BoundaryShape {
            class,
            coeffs,
            center,
            impedance,
        })
    }

    /// Centered circle of the given radius, expressed as a star with all
    /// harmonics zero.
    pub fn circle(radius: f64, center: [f64; 2], impedance: f64) -> Self {
        let mut coeffs = vec![0.0; ShapeClass::Star.coeff_count()];
        coeffs[0] = radius;
        BoundaryShape {
            class: ShapeClass::Star,
            coeffs,
            center,
            impedance,
        }
    }

    /// Regression target vector: coefficients, `x0`, `y0`, then `λ` when
    /// `with_impedance` is set.
    pub fn targets(&self, with_impedance: bool) -> Vec<f64> {
        let mut t = self.coeffs.clone();
        t.extend_from_slice(&self.center);
        if with_impedance {
            t.push(self.impedance);
        }
        t
    }

    /// Inverse of [`BoundaryShape::targets`]. When the vector carries no
    /// impedance, `fixed_impedance` supplies it.
    pub fn from_targets(class: ShapeClass, targets: &[f64], fixed_impedance: Option<f64>) -> Result<Self> {
        let n = class.coeff_count();
        let (impedance, expected) = match fixed_impedance {
            Some(l) if targets.len() == n + 2 => (l, n + 2),
            _ => (targets.get(n + 2).copied().unwrap_or(f64::NAN), n + 3),
        };
        if targets.len() != expected {
            return Err(Error::shape(
                format!("{expected} targets for class {class}"),
                targets.len(),
            ));
        }
        Ok(BoundaryShape {
            class,
            coeffs: targets[..n].to_vec(),
            center: [targets[n], targets[n + 1]],
            impedance,
        })
    }

    pub fn target_names(class: ShapeClass, with_impedance: bool) -> Vec<String> {
        let mut names = class.coeff_names();
        names.push("x0".into());
        names.push("y0".into());
        if with_impedance {
            names.push("lambda".into());
        }
        names
    }

    /// `(ρ, ρ')` for peanut and star classes; `None` for kites. A peanut with
    /// a negative radicand yields NaN.
    fn radial(&self, tau: f64) -> Option<(f64, f64)> {
        let c = &self.coeffs;
        match self.class {
            ShapeClass::Peanut => {
                let (s, co) = tau.sin_cos();
                let r2 = c[0] * co * co + c[1] * s * s;
                let rho = r2.sqrt();
                Some((rho, (c[1] - c[0]) * s * co / rho))
            }
            ShapeClass::Star => {
                let (mut sum, mut dsum) = (0.0, 0.0);
                for q in 1..=STAR_ORDER {
                    let (s, co) = (q as f64 * tau).sin_cos();
                    let (a, b) = (c[q], c[STAR_ORDER + q]);
                    sum += a * co + b * s;
                    dsum += q as f64 * (b * co - a * s);
                }
                let scale = 1.0 / (2.0 * STAR_ORDER as f64);
                Some((c[0] * (1.0 + scale * sum), c[0] * scale * dsum))
            }
            ShapeClass::Kite => None,
        }
    }

    /// Point on the curve without degeneracy checks. A peanut with a
    /// negative radicand is evaluated with `ρ = 0` there.
    pub fn point_unchecked(&self, tau: f64) -> [f64; 2] {
        let (s, co) = tau.sin_cos();
        let [x0, y0] = self.center;
        match self.radial(tau) {
            Some((rho, _)) => {
                let rho = if rho.is_nan() { 0.0 } else { rho };
                [rho * co + x0, rho * s + y0]
            }
            None => {
                let c = &self.coeffs;
                [c[0] * co + c[1] * (2.0 * tau).cos() + x0, c[2] * s + y0]
            }
        }
    }
}

/// Equidistant parameter grid `τ_k = 2πk/T`, `k = 0..T`.
pub fn boundary_grid(points: usize) -> Result<Vec<f64>> {
    if points < 4 {
        return Err(Error::InvalidGrid(points));
    }
    Ok((0..points).map(|k| TAU * k as f64 / points as f64).collect())
}

/// Evaluates `x(τ)` and the analytic `x'(τ)`.
pub fn eval_curve(shape: &BoundaryShape, tau: f64) -> Result<CurvePoint> {
    if shape.coeffs.len() != shape.class.coeff_count() {
        return Err(Error::shape(shape.class.coeff_count(), shape.coeffs.len()));
    }
    let (s, co) = tau.sin_cos();
    let [x0, y0] = shape.center;
    match shape.radial(tau) {
        Some((rho, drho)) => {
            if !(rho > 0.0) {
                return Err(Error::DegenerateShape(format!(
                    "{} radius {rho} at tau = {tau}",
                    shape.class
                )));
            }
            Ok(CurvePoint {
                point: [rho * co + x0, rho * s + y0],
                derivative: [drho * co - rho * s, drho * s + rho * co],
            })
        }
        None => {
            let c = &shape.coeffs;
            let (s2, c2) = (2.0 * tau).sin_cos();
            Ok(CurvePoint {
                point: [c[0] * co + c[1] * c2 + x0, c[2] * s + y0],
                derivative: [-c[0] * s - 2.0 * c[1] * s2, c[2] * co],
            })
        }
    }
}

/// Draws a random obstacle of the given class, redrawing until it passes
/// [`validate_shape`].
pub fn sample_shape<R: Rng + ?Sized>(
    class: ShapeClass,
    rng: &mut R,
    config: &ScatterConfig,
    impedance: ImpedanceMode,
) -> Result<BoundaryShape> {
    for _ in 0..MAX_REJECTIONS {
        let shape = draw_shape(class, rng, impedance);
        if validate_shape(&shape, config).valid {
            return Ok(shape);
        }
    }
    Err(Error::SamplingStuck {
        class: class.to_string(),
        attempts: MAX_REJECTIONS,
    })
}

/// Like [`sample_shape`] but also reports how many candidates were rejected.
pub fn sample_shape_counted<R: Rng + ?Sized>(
    class: ShapeClass,
    rng: &mut R,
    config: &ScatterConfig,
    impedance: ImpedanceMode,
) -> Result<(BoundaryShape, usize)> {
    for rejected in 0..MAX_REJECTIONS {
        let shape = draw_shape(class, rng, impedance);
        if validate_shape(&shape, config).valid {
            return Ok((shape, rejected));
        }
    }
    Err(Error::SamplingStuck {
        class: class.to_string(),
        attempts: MAX_REJECTIONS,
    })
}

fn draw_shape<R: Rng + ?Sized>(class: ShapeClass, rng: &mut R, impedance: ImpedanceMode) -> BoundaryShape {
    let coeffs: Vec<f64> = match class {
        ShapeClass::Peanut => vec![rng.random_range(0.02..=0.20), rng.random_range(0.02..=0.20)],
        ShapeClass::Kite => vec![
            rng.random_range(0.15..=0.35),
            rng.random_range(0.05..=0.15),
            rng.random_range(0.15..=0.35),
        ],
        ShapeClass::Star => {
            let mut c = Vec::with_capacity(class.coeff_count());
            c.push(rng.random_range(0.10..=0.40));
            for _ in 0..2 * STAR_ORDER {
                c.push(rng.random_range(-1.0..=1.0));
            }
            c
        }
    };
    let center = [
        rng.random_range(CENTER_RANGE.0..=CENTER_RANGE.1),
        rng.random_range(CENTER_RANGE.0..=CENTER_RANGE.1),
    ];
    let impedance = match impedance {
        ImpedanceMode::Variable => rng.random_range(IMPEDANCE_RANGE.0..=IMPEDANCE_RANGE.1),
        ImpedanceMode::Fixed(l) => l,
    };
    BoundaryShape {
        class,
        coeffs,
        center,
        impedance,
    }
}

/// Outcome of [`validate_shape`].
#[derive(Clone, Debug, PartialEq)]
pub struct ShapeCheck {
    pub valid: bool,
    pub min_radius: Option<f64>,
    pub max_norm: f64,
    pub simple: bool,
    pub diagnostic: Option<String>,
}

/// Checks the hard geometric constraints on the configuration's boundary
/// grid: coefficient count, center/impedance ranges, `min ρ > 0.02` for
/// radial classes, `max |x| < 0.75`, and a simple (non-self-intersecting)
/// grid polygon.
pub fn validate_shape(shape: &BoundaryShape, config: &ScatterConfig) -> ShapeCheck {
    let mut problems = Vec::new();
    if shape.coeffs.len() != shape.class.coeff_count() {
        return ShapeCheck {
            valid: false,
            min_radius: None,
            max_norm: f64::NAN,
            simple: false,
            diagnostic: Some(format!(
                "expected {} coefficients, got {}",
                shape.class.coeff_count(),
                shape.coeffs.len()
            )),
        };
    }
    let in_range = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
    if !shape.center.iter().all(|&c| in_range(c, CENTER_RANGE)) {
        problems.push(format!("center {:?} outside [-0.2, 0.2]²", shape.center));
    }
    if !in_range(shape.impedance, IMPEDANCE_RANGE) {
        problems.push(format!("impedance {} outside [0.1, 10]", shape.impedance));
    }

    let n = config.boundary_points.max(4);
    let grid: Vec<f64> = (0..n).map(|k| TAU * k as f64 / n as f64).collect();
    let min_radius = shape.class.is_radial().then(|| {
        grid.iter()
            .map(|&t| shape.radial(t).map_or(f64::NAN, |(r, _)| r))
            .fold(
                f64::INFINITY,
                |m, r| if r.is_nan() { f64::NEG_INFINITY } else { m.min(r) },
            )
    });
    if let Some(r) = min_radius {
        if !(r > MIN_RADIUS) {
            problems.push(format!("min radius {r:.4} not above {MIN_RADIUS}"));
        }
    }
    let pts: Vec<[f64; 2]> = grid.iter().map(|&t| shape.point_unchecked(t)).collect();
    let max_norm = pts.iter().map(|p| p[0].hypot(p[1])).fold(0.0, f64::max);
    if !(max_norm < MAX_OBSTACLE_NORM) {
        problems.push(format!("max point norm {max_norm:.4} not below {MAX_OBSTACLE_NORM}"));
    }
    let simple = is_simple_polygon(&pts);
    if !simple {
        problems.push("boundary polygon self-intersects".into());
    }
    ShapeCheck {
        valid: problems.is_empty(),
        min_radius,
        max_norm,
        simple,
        diagnostic: (!problems.is_empty()).then(|| problems.join("; ")),
    }
}

/// True when no two non-adjacent edges of the closed polygon intersect.
pub fn is_simple_polygon(pts: &[[f64; 2]]) -> bool {
    let n = pts.len();
    if n < 3 {
        return false;
    }
    let edge = |i: usize| (pts[i], pts[(i + 1) % n]);
    for i in 0..n {
        for j in i + 2..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            let (a, b) = edge(i);
            let (c, d) = edge(j);
            if segments_intersect(a, b, c, d) {
                return false;
            }
        }
    }
    true
}

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn on_segment(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> bool {
    p[0] >= a[0].min(b[0]) && p[0] <= a[0].max(b[0]) && p[1] >= a[1].min(b[1]) && p[1] <= a[1].max(b[1])
}

fn segments_intersect(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let (o1, o2) = (orient(a, b, c), orient(a, b, d));
    let (o3, o4) = (orient(c, d, a), orient(c, d, b));
    if ((o1 > 0.0 && o2 < 0.0) || (o1 < 0.0 && o2 > 0.0)) && ((o3 > 0.0 && o4 < 0.0) || (o3 < 0.0 && o4 > 0.0)) {
        return true;
    }
    (o1 == 0.0 && on_segment(a, b, c))
        || (o2 == 0.0 && on_segment(a, b, d))
        || (o3 == 0.0 && on_segment(c, d, a))
        || (o4 == 0.0 && on_segment(c, d, b))
}

/// RMS distance between two curves evaluated at matched parameters on a
/// `points`-grid.
pub fn boundary_discrepancy(a: &BoundaryShape, b: &BoundaryShape, points: usize) -> Result<f64> {
    let grid = boundary_grid(points)?;
    let sum: f64 = grid
        .iter()
        .map(|&t| {
            let (p, q) = (a.point_unchecked(t), b.point_unchecked(t));
            (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)
        })
        .sum();
    Ok((sum / points as f64).sqrt())
}

pub fn shape_to_json(shape: &BoundaryShape) -> Result<String> {
    Ok(serde_json::to_string(shape)?)
}

pub fn shape_from_json(text: &str) -> Result<BoundaryShape> {
    let shape: BoundaryShape = serde_json::from_str(text)?;
    if shape.coeffs.len() != shape.class.coeff_count() {
        return Err(Error::shape(shape.class.coeff_count(), shape.coeffs.len()));
    }
    Ok(shape)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> ScatterConfig {
        ScatterConfig::standard(32, 2).unwrap()
    }

    fn fd_derivative(shape: &BoundaryShape, tau: f64, h: f64) -> [f64; 2] {
        let p = eval_curve(shape, tau + h).unwrap().point;
        let m = eval_curve(shape, tau - h).unwrap().point;
        [(p[0] - m[0]) / (2.0 * h), (p[1] - m[1]) / (2.0 * h)]
    }

    #[test]
    fn grid_examples() {
        let g = boundary_grid(4).unwrap();
        assert_eq!(g, vec![0.0, PI / 2.0, PI, 3.0 * PI / 2.0]);
        let g = boundary_grid(128).unwrap();
        assert_eq!(g.len(), 128);
        assert!((g[1] - g[0] - TAU / 128.0).abs() < 1e-15);
        assert!(matches!(boundary_grid(2), Err(Error::InvalidGrid(2))));
    }

    #[test]
    fn config_wavenumber_and_invariants() {
        let c = cfg();
        assert!((c.kappa0 - 2.5).abs() < 1e-12);
        assert!(ScatterConfig::standard(64, 2).is_err());
        assert!(ScatterConfig::standard(128, 3).is_err());
        assert!(ScatterConfig::new(5.0, PI / 6.0, vec![0.0], 128, 8).is_err());
        assert!(ScatterConfig::new(5.0, 0.0, vec![0.0], 128, 2).is_err());
        let mut bad = c.clone();
        bad.kappa0 = 3.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn unit_peanut_is_unit_circle() {
        let s = BoundaryShape::new(ShapeClass::Peanut, vec![1.0, 1.0], [0.0, 0.0], 1.0).unwrap();
        for t in [0.0, 0.3, 1.7, 4.0] {
            let p = eval_curve(&s, t).unwrap().point;
            assert!((p[0].hypot(p[1]) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_harmonic_star_is_circle() {
        let s = BoundaryShape::circle(0.3, [0.0, 0.0], 1.0);
        for t in boundary_grid(16).unwrap() {
            let p = eval_curve(&s, t).unwrap().point;
            assert!((p[0].hypot(p[1]) - 0.3).abs() < 1e-15);
        }
    }

    #[test]
    fn kite_point_and_derivative_at_zero() {
        let s = BoundaryShape::new(ShapeClass::Kite, vec![0.3, 0.1, 0.25], [0.0, 0.0], 1.0).unwrap();
        let cp = eval_curve(&s, 0.0).unwrap();
        assert!((cp.point[0] - 0.4).abs() < 1e-15 && cp.point[1].abs() < 1e-15);
        assert!(cp.derivative[0].abs() < 1e-15 && (cp.derivative[1] - 0.25).abs() < 1e-15);
        let fd = fd_derivative(&s, 0.0, 1e-6);
        assert!(fd[0].abs() < 1e-9 && (fd[1] - 0.25).abs() < 1e-9);
    }

    #[test]
    fn analytic_derivative_matches_central_differences() {
        let c = cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for class in ShapeClass::ALL {
            let s = sample_shape(class, &mut rng, &c, ImpedanceMode::Variable).unwrap();
            for _ in 0..20 {
                let t = rng.random_range(0.0..TAU);
                let d = eval_curve(&s, t).unwrap().derivative;
                let fd = fd_derivative(&s, t, 1e-6);
                let norm = d[0].hypot(d[1]);
                let err = (d[0] - fd[0]).hypot(d[1] - fd[1]) / norm;
                assert!(err < 1e-6, "{class}: rel err {err}");
            }
        }
    }

    #[test]
    fn radial_curves_close() {
        let c = cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for class in [ShapeClass::Peanut, ShapeClass::Star] {
            let s = sample_shape(class, &mut rng, &c, ImpedanceMode::Variable).unwrap();
            let a = eval_curve(&s, 0.0).unwrap().point;
            let b = eval_curve(&s, TAU).unwrap().point;
            assert!((a[0] - b[0]).abs() < 1e-14 && (a[1] - b[1]).abs() < 1e-14);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let c = cfg();
        for class in ShapeClass::ALL {
            let a = sample_shape(class, &mut ChaCha8Rng::seed_from_u64(42), &c, ImpedanceMode::Variable).unwrap();
            let b = sample_shape(class, &mut ChaCha8Rng::seed_from_u64(42), &c, ImpedanceMode::Variable).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn fixed_impedance_is_respected() {
        let s = sample_shape(
            ShapeClass::Star,
            &mut ChaCha8Rng::seed_from_u64(1),
            &cfg(),
            ImpedanceMode::Fixed(2.0),
        )
        .unwrap();
        assert_eq!(s.impedance, 2.0);
    }

    #[test]
    fn validation_examples() {
        let c = cfg();
        assert!(validate_shape(&BoundaryShape::circle(0.3, [0.0, 0.0], 1.0), &c).valid);
        // Center outside the sampling box, and 0.6√2 + 0.3 > 0.75.
        let far = BoundaryShape::circle(0.3, [0.6, 0.6], 1.0);
        let check = validate_shape(&far, &c);
        assert!(!check.valid);
        assert!(check.max_norm > MAX_OBSTACLE_NORM);
    }

    #[test]
    fn star_with_negative_radius_is_invalid() {
        // All cosine amplitudes at -4: at τ = 0, ρ = α0 (1 - 20/10) < 0.
        let mut coeffs = vec![0.3];
        coeffs.extend(std::iter::repeat_n(-4.0, STAR_ORDER));
        coeffs.extend(std::iter::repeat_n(0.0, STAR_ORDER));
        let s = BoundaryShape::new(ShapeClass::Star, coeffs, [0.0, 0.0], 1.0).unwrap();
        let oracle_min = boundary_grid(128)
            .unwrap()
            .into_iter()
            .map(|t| 0.3 * (1.0 + (1..=5).map(|q| -4.0 * (q as f64 * t).cos()).sum::<f64>() / 10.0))
            .fold(f64::INFINITY, f64::min);
        assert!(oracle_min < 0.0);
        let check = validate_shape(&s, &c());
        assert!(!check.valid);
        assert!((check.min_radius.unwrap() - oracle_min).abs() < 1e-12);
        assert!(matches!(eval_curve(&s, 0.0), Err(Error::DegenerateShape(_))));

        fn c() -> ScatterConfig {
            ScatterConfig::standard(32, 2).unwrap()
        }
    }

    #[test]
    fn self_intersection_detected() {
        let bowtie = [[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]];
        assert!(!is_simple_polygon(&bowtie));
        let square = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        assert!(is_simple_polygon(&square));
    }

    #[test]
    fn discrepancy_examples() {
        let a = BoundaryShape::circle(0.2, [0.0, 0.0], 1.0);
        let b = BoundaryShape::circle(0.3, [0.0, 0.0], 1.0);
        assert_eq!(boundary_discrepancy(&a, &a, 128).unwrap(), 0.0);
        assert!((boundary_discrepancy(&a, &b, 128).unwrap() - 0.1).abs() < 1e-15);
        let p = BoundaryShape::new(ShapeClass::Peanut, vec![0.1, 0.05], [0.0, 0.1], 1.0).unwrap();
        let mut q = p.clone();
        q.center[0] += 0.07;
        assert!((boundary_discrepancy(&p, &q, 128).unwrap() - 0.07).abs() < 1e-15);
    }

    #[test]
    fn targets_roundtrip() {
        let s = sample_shape(
            ShapeClass::Kite,
            &mut ChaCha8Rng::seed_from_u64(3),
            &cfg(),
            ImpedanceMode::Variable,
        )
        .unwrap();
        let t = s.targets(true);
        assert_eq!(t.len(), 6);
        assert_eq!(BoundaryShape::from_targets(ShapeClass::Kite, &t, None).unwrap(), s);
        let star = BoundaryShape::circle(0.3, [0.0, 0.0], 2.0);
        let t = star.targets(false);
        assert_eq!(t.len(), 13);
        assert_eq!(
            BoundaryShape::from_targets(ShapeClass::Star, &t, Some(2.0)).unwrap(),
            star
        );
        assert_eq!(BoundaryShape::target_names(ShapeClass::Star, true).len(), 14);
    }

    #[test]
    fn json_roundtrip_is_bit_exact() {
        let s = sample_shape(
            ShapeClass::Star,
            &mut ChaCha8Rng::seed_from_u64(9),
            &cfg(),
            ImpedanceMode::Variable,
        )
        .unwrap();
        let text = shape_to_json(&s).unwrap();
        let back = shape_from_json(&text).unwrap();
        for (a, b) in s.coeffs.iter().zip(&back.coeffs) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(back, s);
        assert!(text.contains("\"class\":\"star\""));
    }
}
