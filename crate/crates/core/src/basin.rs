//! Basin geometry on the slope axis: the separatrix threshold `s*(γ)` and the
//! probability `p_skin` that a random boundary slope ends on the skin attractor.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::averaging::branch_amplitudes;
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::poincare::Fold;
use crate::quadrature::integrate_gk;
use crate::shooting::{classify, ClassifierConfig, Outcome};

/// Probability density over boundary slopes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SlopeDensity {
    Cauchy { s0: f64 },
    /// Piecewise-linear density through `(grid[i], values[i])`, zero outside the grid.
    Tabulated { grid: Vec<f64>, values: Vec<f64> },
}

impl SlopeDensity {
    pub fn cauchy(s0: f64) -> Result<Self> {
        if !(s0 > 0.0 && s0.is_finite()) {
            return Err(Error::InvalidConfig(format!("Cauchy scale s0 must be > 0, got {s0}")));
        }
        Ok(SlopeDensity::Cauchy { s0 })
    }

    /// Tabulated density, rescaled to unit mass.
    pub fn tabulated(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.len() < 2 || grid.len() != values.len() {
            return Err(Error::InvalidConfig(format!(
                "tabulated density needs matching grid/values of length >= 2, got {} and {}",
                grid.len(),
                values.len()
            )));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) || grid.iter().any(|g| !g.is_finite()) {
            return Err(Error::InvalidConfig("density grid must be finite and strictly increasing".into()));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidConfig("density values must be finite and >= 0".into()));
        }
        let mass: f64 = grid.windows(2).zip(values.windows(2)).map(|(g, v)| 0.5 * (g[1] - g[0]) * (v[0] + v[1])).sum();
        if !(mass > 0.0) {
            return Err(Error::InvalidConfig("density has zero mass".into()));
        }
        let values = values.into_iter().map(|v| v / mass).collect();
        Ok(SlopeDensity::Tabulated { grid, values })
    }

    /// Default measure: Cauchy with `s0 = sqrt(2E)`.
    pub fn default_for(p: &ModelParams) -> Self {
        SlopeDensity::Cauchy { s0: p.omega() }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SlopeDensity::Cauchy { s0 } => Self::cauchy(*s0).map(|_| ()),
            SlopeDensity::Tabulated { grid, values } => {
                let d = Self::tabulated(grid.clone(), values.clone())?;
                let mass = d.total_mass()?;
                if (mass - 1.0).abs() > 1e-8 {
                    return Err(Error::InvalidConfig(format!("tabulated density integrates to {mass}, not 1")));
                }
                Ok(())
            }
        }
    }

    pub fn pdf(&self, s: f64) -> f64 {
        match self {
            SlopeDensity::Cauchy { s0 } => s0 / (std::f64::consts::PI * (s * s + s0 * s0)),
            SlopeDensity::Tabulated { grid, values } => {
                if s < grid[0] || s > grid[grid.len() - 1] {
                    return 0.0;
                }
                let k = grid.partition_point(|&g| g <= s).clamp(1, grid.len() - 1);
                let (g0, g1) = (grid[k - 1], grid[k]);
                let w = (s - g0) / (g1 - g0);
                values[k - 1] * (1.0 - w) + values[k] * w
            }
        }
    }

    fn total_mass(&self) -> Result<f64> {
        match self {
            SlopeDensity::Cauchy { .. } => Ok(1.0),
            SlopeDensity::Tabulated { grid, .. } => p_skin_numeric(grid[grid.len() - 1].abs().max(grid[0].abs()), self),
        }
    }
}

/// `(2/π) atan(s*/s0)`: Cauchy mass inside `(-s*, s*)`.
pub fn p_skin_cauchy(s_star: f64, s0: f64) -> f64 {
    std::f64::consts::FRAC_2_PI * (s_star / s0).atan()
}

/// Mass of `density` on `(-s*, s*)` by adaptive quadrature.
pub fn p_skin_numeric(s_star: f64, density: &SlopeDensity) -> Result<f64> {
    if !(s_star >= 0.0) {
        return Err(Error::InvalidConfig(format!("s_star must be >= 0, got {s_star}")));
    }
    if s_star == 0.0 {
        return Ok(0.0);
    }
    match density {
        SlopeDensity::Cauchy { .. } => integrate_gk(|s| density.pdf(s), -s_star, s_star, 1e-10, 0.0),
        SlopeDensity::Tabulated { grid, .. } => {
            // integrate piece by piece so kinks sit on interval ends
            let mut cuts: Vec<f64> = grid.iter().copied().filter(|g| g.abs() < s_star).collect();
            cuts.insert(0, -s_star);
            cuts.push(s_star);
            let mut total = 0.0;
            for w in cuts.windows(2) {
                total += integrate_gk(|s| density.pdf(s), w[0], w[1], 1e-12, 0.0)?;
            }
            Ok(total)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Separatrix {
    pub s_star: f64,
    pub lo: f64,
    pub hi: f64,
    pub bisection_width: f64,
    pub shots: usize,
}

/// Bisection for the slope separating skin (below) from extended (above) outcomes.
pub fn separatrix_threshold(p: &ModelParams, bracket: (f64, f64), tol_s: f64, cfg: &ClassifierConfig) -> Result<Separatrix> {
    cfg.validate_for(p)?;
    let (mut lo, mut hi) = bracket;
    if !(lo >= 0.0 && hi > lo && tol_s > 0.0) {
        return Err(Error::InvalidConfig(format!("bad bisection bracket ({lo}, {hi}) / tol {tol_s}")));
    }
    let a = classify(p, lo, cfg);
    let b = classify(p, hi, cfg);
    if a.outcome != Outcome::Skin || b.outcome != Outcome::Extended {
        return Err(Error::BracketInvalid {
            lo,
            hi,
            detail: format!("endpoints classified {} / {}", a.outcome.as_str(), b.outcome.as_str()),
        });
    }
    let mut shots = 2;
    while hi - lo >= tol_s {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        shots += 1;
        match classify(p, mid, cfg).outcome {
            Outcome::Skin => lo = mid,
            Outcome::Extended => hi = mid,
            Outcome::Undecided => return Err(Error::UndecidedAtMidpoint { s: mid, lo, hi }),
        }
    }
    Ok(Separatrix { s_star: 0.5 * (lo + hi), lo, hi, bisection_width: hi - lo, shots })
}

/// Bracket `ω A_in · [0.5, 2]` around the averaged inner cycle, if one is predicted.
pub fn theory_bracket(p: &ModelParams) -> Option<(f64, f64)> {
    branch_amplitudes(p).a_in.map(|a| {
        let c = p.omega() * a;
        (0.5 * c, 2.0 * c)
    })
}

/// Threshold with the theory bracket, widened once if it fails to straddle.
pub fn separatrix_auto(p: &ModelParams, tol_s: f64, cfg: &ClassifierConfig, fallback_center: Option<f64>) -> Result<Separatrix> {
    let center = theory_bracket(p).map(|(lo, hi)| (lo * hi).sqrt()).or(fallback_center).ok_or_else(|| {
        Error::BracketInvalid { lo: f64::NAN, hi: f64::NAN, detail: "no inner cycle predicted".into() }
    })?;
    match separatrix_threshold(p, (0.5 * center, 2.0 * center), tol_s, cfg) {
        Err(Error::BracketInvalid { .. }) => separatrix_threshold(p, (0.125 * center, 4.0 * center), tol_s, cfg),
        r => r,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasinPoint {
    pub gamma: f64,
    pub s_star: Option<f64>,
    pub p_skin: f64,
    pub bisection_width: Option<f64>,
    /// `None` on success, otherwise the error that stopped this point.
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldJump {
    pub gamma: f64,
    pub s_star: f64,
    pub p_skin_above: f64,
    pub jump: f64,
}

/// `1 - p_skin` just above the fold: the mass that switches attractor there.
pub fn jump_at_fold(
    p: &ModelParams,
    fold: &Fold,
    density: &SlopeDensity,
    delta: f64,
    tol_s: f64,
    cfg: &ClassifierConfig,
) -> Result<FoldJump> {
    let q = p.with_gamma(fold.gamma_c + delta);
    let sep = separatrix_auto(&q, tol_s, cfg, Some(fold.s_c))?;
    let p_above = p_skin_numeric(sep.s_star, density)?;
    Ok(FoldJump { gamma: q.gamma, s_star: sep.s_star, p_skin_above: p_above, jump: 1.0 - p_above })
}

/// Per-γ basin fraction. Points left of `fold.gamma_c` are pure skin, points at
/// or right of `γ = 0` pure extended; in between `s*` comes from bisection.
pub fn basin_scan(
    p_base: &ModelParams,
    gamma_grid: &[f64],
    density: &SlopeDensity,
    fold: &Fold,
    tol_s: f64,
    cfg: &ClassifierConfig,
) -> Vec<BasinPoint> {
    gamma_grid
        .par_iter()
        .map(|&gamma| {
            let q = p_base.with_gamma(gamma);
            if gamma < fold.gamma_c {
                return BasinPoint { gamma, s_star: None, p_skin: 1.0, bisection_width: None, error: None };
            }
            if gamma >= 0.0 {
                return BasinPoint { gamma, s_star: None, p_skin: 0.0, bisection_width: None, error: None };
            }
            let sep = if gamma == fold.gamma_c {
                Ok(Separatrix { s_star: fold.s_c, lo: fold.s_c, hi: fold.s_c, bisection_width: 0.0, shots: 0 })
            } else {
                separatrix_auto(&q, tol_s, cfg, Some(fold.s_c))
            };
            match sep.and_then(|s| p_skin_numeric(s.s_star, density).map(|ps| (s, ps))) {
                Ok((s, ps)) => BasinPoint {
                    gamma,
                    s_star: Some(s.s_star),
                    p_skin: ps,
                    bisection_width: Some(s.bisection_width),
                    error: None,
                },
                Err(e) => BasinPoint { gamma, s_star: None, p_skin: f64::NAN, bisection_width: None, error: Some(e.to_string()) },
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cauchy_closed_form() {
        assert_eq!(p_skin_cauchy(0.0, 4.0), 0.0);
        assert!((p_skin_cauchy(1e12, 4.0) - 1.0).abs() < 1e-11);
        assert!((p_skin_cauchy(8.6976, 4.0) - 0.725_582_684).abs() < 1e-9);
        let d = SlopeDensity::cauchy(4.0).unwrap();
        for s in [0.1, 1.0, 8.6976, 16.0, 100.0] {
            assert!((p_skin_numeric(s, &d).unwrap() - p_skin_cauchy(s, 4.0)).abs() < 1e-8);
        }
        assert_eq!(p_skin_numeric(0.0, &d).unwrap(), 0.0);
    }

    #[test]
    fn tabulated_is_normalized() {
        let d = SlopeDensity::tabulated(vec![-10.0, 0.0, 10.0], vec![0.0, 5.0, 0.0]).unwrap();
        d.validate().unwrap();
        assert!((p_skin_numeric(10.0, &d).unwrap() - 1.0).abs() < 1e-12);
        assert!((p_skin_numeric(20.0, &d).unwrap() - 1.0).abs() < 1e-12);
        // triangle: mass inside (-5, 5) is 3/4
        assert!((p_skin_numeric(5.0, &d).unwrap() - 0.75).abs() < 1e-12);
        assert!(SlopeDensity::tabulated(vec![0.0, 1.0], vec![1.0, -1.0]).is_err());
        assert!(SlopeDensity::tabulated(vec![1.0, 0.0], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn theory_bracket_center() {
        let (lo, hi) = theory_bracket(&ModelParams::reference(-0.5)).unwrap();
        assert!(((lo * hi).sqrt() - 8.659).abs() < 1e-3);
        assert!(theory_bracket(&ModelParams::reference(0.2)).is_none());
    }

    #[test]
    fn extended_only_bracket_is_invalid() {
        let p = ModelParams::reference(0.2);
        let r = separatrix_threshold(&p, (1.0, 30.0), 1e-3, &ClassifierConfig::default());
        assert!(matches!(r, Err(Error::BracketInvalid { .. })));
    }
}
