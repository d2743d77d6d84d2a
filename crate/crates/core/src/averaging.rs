//! First-order averaging of the flow over the fast phase.
//!
//! Writing `ψ = r cos θ`, `v/ω = -r sin θ` and averaging the exact radial rate
//! over θ gives the one-dimensional drift
//!
//! ```text
//! dr/dx = h(r) = r (γ + a r²/4 - b r⁴/8)
//! ```
//!
//! whose positive roots approximate the inner (unstable) and outer (stable)
//! limit cycle amplitudes.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::ModelParams;
use crate::quadrature::integrate_gk;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// `γ < γc`: the origin is the only attractor.
    SkinOnly,
    /// `γc < γ < 0`: origin and outer cycle coexist, separated by the inner cycle.
    Coexistence,
    /// `γ > 0`: the outer cycle is the only attractor.
    ExtendedOnly,
    FoldPoint,
    HopfPoint,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::SkinOnly => "skin_only",
            Regime::Coexistence => "coexistence",
            Regime::ExtendedOnly => "extended_only",
            Regime::FoldPoint => "fold_point",
            Regime::HopfPoint => "hopf_point",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryPrediction {
    pub gamma: f64,
    pub gamma_c_th: f64,
    pub a_in: Option<f64>,
    pub a_out: Option<f64>,
    pub regime: Regime,
    /// [`slow_amplitude_validity`] at `a_in` / `a_out`.
    pub validity_in: Option<f64>,
    pub validity_out: Option<f64>,
}

pub fn avg_drift(p: &ModelParams, r: f64) -> f64 {
    let r2 = r * r;
    r * (p.gamma + 0.25 * p.a * r2 - 0.125 * p.b * r2 * r2)
}

pub fn avg_drift_derivative(p: &ModelParams, r: f64) -> f64 {
    let r2 = r * r;
    p.gamma + 0.75 * p.a * r2 - 0.625 * p.b * r2 * r2
}

pub fn gamma_c_theory(p: &ModelParams) -> f64 {
    -p.a * p.a / (8.0 * p.b)
}

/// Leading-order inner amplitude `sqrt(-4γ/a)` close to the Hopf point.
pub fn hopf_amplitude_scaling(p: &ModelParams, gamma: f64) -> f64 {
    (-4.0 * gamma / p.a).max(0.0).sqrt()
}

/// `(|γ| + a r² + b r⁴) / ω`: how slow the amplitude is compared with the phase.
pub fn slow_amplitude_validity(p: &ModelParams, r: f64) -> f64 {
    let r2 = r * r;
    (p.gamma.abs() + p.a * r2 + p.b * r2 * r2) / p.omega()
}

/// Closed-form roots of `h`. Returns `(a_in², a_out²)` when real.
fn branch_squares(p: &ModelParams) -> Option<(f64, f64)> {
    let ratio = p.a / p.b;
    let x = 8.0 * p.b * p.gamma / (p.a * p.a);
    let disc = 1.0 + x;
    if disc < 0.0 {
        return None;
    }
    let root = disc.sqrt();
    // 1 - sqrt(1 + x) written without cancellation
    let inner = ratio * (-x / (1.0 + root));
    let outer = ratio * (1.0 + root);
    Some((inner, outer))
}

pub fn branch_amplitudes(p: &ModelParams) -> TheoryPrediction {
    let gamma = p.gamma;
    let gamma_c_th = gamma_c_theory(p);
    let (regime, a_in, a_out) = if gamma < gamma_c_th {
        (Regime::SkinOnly, None, None)
    } else if gamma == gamma_c_th {
        let a = (p.a / p.b).sqrt();
        (Regime::FoldPoint, Some(a), Some(a))
    } else {
        let (sq_in, sq_out) = branch_squares(p).expect("discriminant is positive above the fold");
        if gamma < 0.0 {
            (Regime::Coexistence, Some(sq_in.sqrt()), Some(sq_out.sqrt()))
        } else if gamma == 0.0 {
            (Regime::HopfPoint, None, Some(sq_out.sqrt()))
        } else {
            (Regime::ExtendedOnly, None, Some(sq_out.sqrt()))
        }
    };
    TheoryPrediction {
        gamma,
        gamma_c_th,
        a_in,
        a_out,
        regime,
        validity_in: a_in.map(|r| slow_amplitude_validity(p, r)),
        validity_out: a_out.map(|r| slow_amplitude_validity(p, r)),
    }
}

/// Exact radial rate `dr/dx` in the polar coordinates `ψ = r cos θ, v = -ω r sin θ`.
pub fn exact_radial_rate(p: &ModelParams, r: f64, theta: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    let z = r * r * c * c;
    2.0 * r * (p.gamma + p.a * z - p.b * z * z) * s * s
}

/// Mean of `f` over one period `[0, 2π)` by adaptive quadrature.
pub fn phase_average<F: Fn(f64) -> f64>(f: F) -> Result<f64> {
    let two_pi = 2.0 * std::f64::consts::PI;
    Ok(integrate_gk(f, 0.0, two_pi, 1e-15, 1e-15)? / two_pi)
}
