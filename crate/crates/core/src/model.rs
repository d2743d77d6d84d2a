//! The saturating nonreciprocal flow and the analytic quantities attached to it.
//!
//! Stationary states of the nonlinear Hatano-Nelson equation are treated as
//! orbits of the planar system
//!
//! ```text
//! dψ/dx = v
//! dv/dx = 2 F(ψ²) v - 2 E ψ,      F(z) = γ + a z - b z²
//! ```
//!
//! with `x` playing the role of time.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical parameters `(γ, a, b, E)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub gamma: f64,
    pub a: f64,
    pub b: f64,
    pub energy: f64,
}

impl ModelParams {
    /// Builds a parameter set, rejecting anything outside `a > 0, b > 0, E > 0`.
    pub fn new(gamma: f64, a: f64, b: f64, energy: f64) -> Result<Self> {
        let p = Self { gamma, a, b, energy };
        p.validate()?;
        Ok(p)
    }

    /// Linear Hatano-Nelson limit (`a = b = 0`). With `gamma = 0` this is the
    /// harmonic oscillator of frequency `sqrt(2E)`.
    pub fn linear(gamma: f64, energy: f64) -> Result<Self> {
        if !gamma.is_finite() {
            return Err(Error::InvalidParams(format!("gamma must be finite, got {gamma}")));
        }
        if !(energy.is_finite() && energy > 0.0) {
            return Err(Error::InvalidParams(format!("E must be > 0, got {energy}")));
        }
        Ok(Self { gamma, a: 0.0, b: 0.0, energy })
    }

    /// Parameters used throughout the reference figures: `a = 1/2, b = 1/32, E = 8`.
    pub fn reference(gamma: f64) -> Self {
        Self { gamma, a: 0.5, b: 1.0 / 32.0, energy: 8.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.gamma.is_finite() {
            return Err(Error::InvalidParams(format!("gamma must be finite, got {}", self.gamma)));
        }
        for (name, value) in [("a", self.a), ("b", self.b), ("E", self.energy)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParams(format!("{name} must be > 0, got {value}")));
            }
        }
        Ok(())
    }

    /// Same `a, b, E` with a different linear nonreciprocity.
    pub fn with_gamma(&self, gamma: f64) -> Self {
        Self { gamma, ..*self }
    }

    /// Natural frequency `ω = sqrt(2E)`.
    pub fn omega(&self) -> f64 {
        (2.0 * self.energy).sqrt()
    }

    /// One period `2π/ω` of the harmonic limit.
    pub fn harmonic_period(&self) -> f64 {
        std::f64::consts::TAU / self.omega()
    }
}

/// A point `(ψ, v = ∂xψ)` of the phase plane.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhaseState {
    pub psi: f64,
    pub v: f64,
}

impl PhaseState {
    pub const ORIGIN: PhaseState = PhaseState { psi: 0.0, v: 0.0 };

    pub fn new(psi: f64, v: f64) -> Self {
        Self { psi, v }
    }

    /// Boundary condition `ψ(0) = 0, ∂xψ(0) = s`.
    pub fn from_slope(s: f64) -> Self {
        Self { psi: 0.0, v: s }
    }

    pub fn is_finite(&self) -> bool {
        self.psi.is_finite() && self.v.is_finite()
    }

    pub(crate) fn to_array(self) -> [f64; 2] {
        [self.psi, self.v]
    }

    pub(crate) fn from_array(y: [f64; 2]) -> Self {
        Self { psi: y[0], v: y[1] }
    }
}

/// Eigenvalues of the origin's Jacobian, always reported as a complex pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OriginSpectrum {
    pub lambda_plus: Complex64,
    pub lambda_minus: Complex64,
}

/// `F(z) = γ + a z - b z²`.
pub fn nonreciprocity(p: &ModelParams, z: f64) -> f64 {
    p.gamma + p.a * z - p.b * z * z
}

/// Right-hand side of the planar flow.
pub fn flow_rhs(p: &ModelParams, s: PhaseState) -> PhaseState {
    let f = nonreciprocity(p, s.psi * s.psi);
    PhaseState { psi: s.v, v: 2.0 * f * s.v - 2.0 * p.energy * s.psi }
}

#[inline]
pub(crate) fn flow_rhs_array(p: &ModelParams, y: &[f64; 2]) -> [f64; 2] {
    let z = y[0] * y[0];
    let f = p.gamma + p.a * z - p.b * z * z;
    [y[1], 2.0 * f * y[1] - 2.0 * p.energy * y[0]]
}

/// Jacobian of the flow at the origin, `[[0, 1], [-2E, 2γ]]`.
pub fn origin_jacobian(p: &ModelParams) -> [[f64; 2]; 2] {
    [[0.0, 1.0], [-2.0 * p.energy, 2.0 * p.gamma]]
}

/// `λ± = γ ± sqrt(γ² - 2E)`.
pub fn origin_eigenvalues(p: &ModelParams) -> OriginSpectrum {
    let disc = Complex64::new(p.gamma * p.gamma - 2.0 * p.energy, 0.0).sqrt();
    let g = Complex64::new(p.gamma, 0.0);
    OriginSpectrum { lambda_plus: g + disc, lambda_minus: g - disc }
}

/// Harmonic-oscillator energy `V = v²/2 + E ψ²`.
pub fn lyapunov_value(p: &ModelParams, s: PhaseState) -> f64 {
    0.5 * s.v * s.v + p.energy * s.psi * s.psi
}

/// `dV/dx = 2 F(ψ²) v²` along the flow.
pub fn lyapunov_rate(p: &ModelParams, s: PhaseState) -> f64 {
    2.0 * nonreciprocity(p, s.psi * s.psi) * s.v * s.v
}

/// Liénard primitive `F_L(ψ) = -2(γψ + aψ³/3 - bψ⁵/5)`.
pub fn lienard_primitive(p: &ModelParams, psi: f64) -> f64 {
    let psi2 = psi * psi;
    -2.0 * psi * (p.gamma + p.a * psi2 / 3.0 - p.b * psi2 * psi2 / 5.0)
}

/// Positive roots of `F(z) = 0`, ascending.
pub fn nonreciprocity_roots(p: &ModelParams) -> Vec<f64> {
    let mut roots = Vec::new();
    if p.b == 0.0 {
        if p.a != 0.0 {
            let z = -p.gamma / p.a;
            if z > 0.0 {
                roots.push(z);
            }
        }
        return roots;
    }
    // b z² - a z - γ = 0
    let disc = p.a * p.a + 4.0 * p.b * p.gamma;
    if disc < 0.0 {
        return roots;
    }
    let sq = disc.sqrt();
    // numerically stable pair
    let q = 0.5 * (p.a + sq);
    let z_hi = q / p.b;
    let z_lo = if q != 0.0 { -p.gamma / q } else { 0.0 };
    for z in [z_lo, z_hi] {
        if z > 0.0 && !roots.iter().any(|r: &f64| (r - z).abs() <= 1e-15 * z) {
            roots.push(z);
        }
    }
    roots.sort_by(|x, y| x.total_cmp(y));
    roots
}

/// Level `c` such that `F(ψ²) < 0` on the whole sublevel set `{V < c}`.
///
/// That sublevel set is forward invariant and every orbit inside it converges
/// to the origin. Returns `0` when the origin is not linearly stable and
/// `+∞` when `F` is negative everywhere.
pub fn lyapunov_certificate_level(p: &ModelParams) -> f64 {
    if p.gamma >= 0.0 {
        return 0.0;
    }
    match nonreciprocity_roots(p).first() {
        Some(&z0) => p.energy * z0,
        None => f64::INFINITY,
    }
}

/// Radius `R` beyond which `F(ψ²) ≤ 0`; zero when `F` is never positive.
pub fn trapping_radius(p: &ModelParams) -> f64 {
    if p.b == 0.0 && p.a == 0.0 {
        return if p.gamma <= 0.0 { 0.0 } else { f64::INFINITY };
    }
    nonreciprocity_roots(p).last().map_or(0.0, |z| z.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn refp(gamma: f64) -> ModelParams {
        ModelParams::reference(gamma)
    }

    #[test]
    fn rejects_nonpositive_coefficients() {
        assert!(ModelParams::new(0.0, 0.0, 1.0, 1.0).is_err());
        assert!(ModelParams::new(0.0, 1.0, -1.0, 1.0).is_err());
        assert!(ModelParams::new(0.0, 1.0, 1.0, 0.0).is_err());
        assert!(ModelParams::new(f64::NAN, 1.0, 1.0, 1.0).is_err());
        assert!(ModelParams::new(-0.5, 0.5, 1.0 / 32.0, 8.0).is_ok());
        let msg = ModelParams::new(0.0, -1.0, 1.0, 1.0).unwrap_err().to_string();
        assert!(msg.contains("a must be > 0"), "{msg}");
    }

    #[test]
    fn omega_is_sqrt_two_e() {
        assert_eq!(refp(0.0).omega(), 4.0);
    }

    #[test]
    fn nonreciprocity_examples() {
        assert_eq!(nonreciprocity(&refp(-0.5), 0.0), -0.5);
        // vertex of the quadratic: z = a/2b = 8, value γ + a²/4b
        assert_relative_eq!(nonreciprocity(&refp(-1.0), 8.0), 1.0, epsilon = 1e-15);
        assert_relative_eq!(nonreciprocity(&refp(0.2), 16.0), 0.2, epsilon = 1e-14);
    }

    #[test]
    fn flow_rhs_examples() {
        let p = refp(-0.5);
        assert_eq!(flow_rhs(&p, PhaseState::ORIGIN), PhaseState::ORIGIN);
        let h = ModelParams::linear(0.0, 8.0).unwrap();
        assert_eq!(flow_rhs(&h, PhaseState::new(1.0, 0.0)), PhaseState::new(0.0, -16.0));
        let d = flow_rhs(&p, PhaseState::new(0.0, 8.69756));
        assert_eq!(d.psi, 8.69756);
        assert_relative_eq!(d.v, -8.69756, epsilon = 1e-14);
    }

    #[test]
    fn jacobian_examples() {
        assert_eq!(origin_jacobian(&refp(0.0)), [[0.0, 1.0], [-16.0, 0.0]]);
        assert_eq!(origin_jacobian(&refp(-1.2)), [[0.0, 1.0], [-16.0, -2.4]]);
        assert_eq!(origin_jacobian(&refp(0.2)), [[0.0, 1.0], [-16.0, 0.4]]);
    }

    #[test]
    fn eigenvalue_examples() {
        let s = origin_eigenvalues(&refp(0.0));
        assert_relative_eq!(s.lambda_plus.re, 0.0);
        assert_relative_eq!(s.lambda_plus.im, 4.0);
        assert_relative_eq!(s.lambda_minus.im, -4.0);

        let s = origin_eigenvalues(&refp(-1.2));
        assert_relative_eq!(s.lambda_plus.re, -1.2, epsilon = 1e-15);
        assert_relative_eq!(s.lambda_plus.im, (16.0f64 - 1.44).sqrt(), epsilon = 1e-14);
        assert_relative_eq!(s.lambda_plus.im, 3.815_756_805, epsilon = 1e-9);

        // real pair: trace 6, determinant 8
        let s = origin_eigenvalues(&ModelParams::new(3.0, 0.5, 1.0 / 32.0, 4.0).unwrap());
        assert_relative_eq!(s.lambda_plus.re, 4.0, epsilon = 1e-15);
        assert_relative_eq!(s.lambda_minus.re, 2.0, epsilon = 1e-15);
        assert_eq!(s.lambda_plus.im, 0.0);
    }

    #[test]
    fn lyapunov_examples() {
        let p = refp(-0.5);
        assert_eq!(lyapunov_value(&p, PhaseState::ORIGIN), 0.0);
        assert_eq!(lyapunov_value(&p, PhaseState::new(1.0, 0.0)), 8.0);
        assert_eq!(lyapunov_value(&p, PhaseState::new(0.0, 4.0)), 8.0);

        assert_eq!(lyapunov_rate(&p, PhaseState::new(3.0, 0.0)), 0.0);
        // F(8) = -0.5 + 4 - 2 = 1.5, so the rate at (√8, 1) is 3
        assert_relative_eq!(lyapunov_rate(&p, PhaseState::new(8f64.sqrt(), 1.0)), 3.0, epsilon = 1e-13);
    }

    #[test]
    fn lienard_examples() {
        let p = refp(0.2);
        assert_eq!(lienard_primitive(&p, 0.0), 0.0);
        assert_relative_eq!(
            lienard_primitive(&p, 1.0),
            -2.0 * (0.2 + 1.0 / 6.0 - 1.0 / 160.0),
            epsilon = 1e-15
        );
        assert_relative_eq!(lienard_primitive(&p, 1.0), -0.720_833_333_333, epsilon = 1e-11);
        assert!(lienard_primitive(&p, 1e3) > 1e13);
    }

    #[test]
    fn certificate_level_matches_first_root() {
        // γ = -0.5: z² - 16 z + 16 = 0 → z0 = 8 - √48
        let p = refp(-0.5);
        assert_relative_eq!(lyapunov_certificate_level(&p), 8.0 * (8.0 - 48f64.sqrt()), epsilon = 1e-12);
        assert_eq!(lyapunov_certificate_level(&refp(0.1)), 0.0);
        assert_eq!(lyapunov_certificate_level(&refp(-2.5)), f64::INFINITY);
        assert_relative_eq!(trapping_radius(&refp(0.5)), (8.0 + 80f64.sqrt()).sqrt(), epsilon = 1e-12);
    }
}
