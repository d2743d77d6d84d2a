//! Shooting from the boundary condition `ψ(0) = 0, ∂xψ(0) = s` and
//! classification of the resulting profile as skin-localized or extended.
//!
//! The classifier runs one integration and watches three things at once:
//!
//! * entry into a sublevel set `{V < V*}` that provably flows to the origin
//!   (or a small absolute floor on `V`),
//! * stationarity of the turning-point amplitudes `|ψ|` at `v = 0`,
//! * the participation ratio `∫ψ⁴ / (∫ψ²)²` at lengths `L₀, 2L₀, 4L₀, …`,
//!   converted to `D2 = -ln(IPR) / ln L`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{integrate, EventKind, EventSpec, Integration, IntegratorConfig, Trajectory};
use crate::model::{lyapunov_certificate_level, lyapunov_value, ModelParams, PhaseState};
use crate::quadrature::integrate_lobatto;

const IPR_REL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Skin,
    Extended,
    Undecided,
}

impl Outcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            Outcome::Skin => "skin",
            Outcome::Extended => "extended",
            Outcome::Undecided => "undecided",
        }
    }
}

/// Which test settled a shot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    /// `s = 0`: the origin itself.
    Origin,
    /// Entered the forward-invariant set `{V < V*}` around the origin.
    LyapunovCertificate,
    /// `V` fell below the configured absolute floor.
    LyapunovFloor,
    /// Turning-point amplitudes settled inside the configured band.
    AmplitudeTail,
    /// Two successive `D2` estimates agreed.
    Dimension,
    /// Ran out of doublings.
    Exhausted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShotResult {
    pub slope: f64,
    pub outcome: Outcome,
    /// `D2` at `length`, clamped at zero.
    pub d2: f64,
    pub ipr: f64,
    /// Length over which `ipr` and `d2` were evaluated.
    pub length: f64,
    pub asymptotic_amplitude: Option<f64>,
    /// Where the orbit was first seen inside the neighbourhood of its attractor.
    pub transit_length: f64,
    /// Where the verdict became available.
    pub decided_at: f64,
    pub decision: Decision,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    /// First checkpoint `L₀`. `None` means 100 harmonic periods.
    pub base_length: Option<f64>,
    pub max_doublings: u32,
    pub d2_threshold: f64,
    /// Largest change of `D2` between checkpoints accepted as converged.
    pub d2_tolerance: f64,
    /// Absolute floor on `V` below which a shot counts as skin.
    pub early_exit_v: f64,
    /// Relative band for the turning-amplitude stationarity test.
    pub early_exit_band: f64,
    /// Number of turning points in the amplitude window.
    pub tail_turning_points: usize,
    pub early_exits: bool,
    #[serde(skip)]
    pub integrator: IntegratorConfig,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            base_length: None,
            max_doublings: 6,
            d2_threshold: 0.5,
            d2_tolerance: 0.05,
            early_exit_v: 1e-16,
            early_exit_band: 0.02,
            tail_turning_points: 8,
            early_exits: true,
            integrator: IntegratorConfig::default(),
        }
    }
}

impl ClassifierConfig {
    pub fn base_length_for(&self, p: &ModelParams) -> f64 {
        self.base_length.unwrap_or(100.0 * p.harmonic_period())
    }

    pub fn max_length_for(&self, p: &ModelParams) -> f64 {
        self.base_length_for(p) * 2f64.powi(self.max_doublings as i32)
    }

    pub fn validate_for(&self, p: &ModelParams) -> Result<()> {
        self.integrator.validate()?;
        if !(self.d2_threshold > 0.0 && self.d2_threshold < 1.0) {
            return Err(Error::InvalidConfig(format!("d2_threshold must lie in (0, 1), got {}", self.d2_threshold)));
        }
        if !(self.d2_tolerance > 0.0) {
            return Err(Error::InvalidConfig(format!("d2_tolerance must be > 0, got {}", self.d2_tolerance)));
        }
        let l0 = self.base_length_for(p);
        if !(l0 >= 10.0 * p.harmonic_period() * (1.0 - 1e-12)) {
            return Err(Error::InvalidConfig(format!(
                "base_length must be at least 10 harmonic periods ({}), got {l0}",
                10.0 * p.harmonic_period()
            )));
        }
        if self.max_doublings == 0 {
            return Err(Error::InvalidConfig("max_doublings must be >= 1".into()));
        }
        if !(self.early_exit_v >= 0.0) {
            return Err(Error::InvalidConfig(format!("early_exit_v must be >= 0, got {}", self.early_exit_v)));
        }
        if !(self.early_exit_band > 0.0 && self.early_exit_band < 1.0) {
            return Err(Error::InvalidConfig(format!("early_exit_band must lie in (0, 1), got {}", self.early_exit_band)));
        }
        if self.tail_turning_points < 4 {
            return Err(Error::InvalidConfig(format!(
                "tail_turning_points must be >= 4, got {}",
                self.tail_turning_points
            )));
        }
        Ok(())
    }
}

/// Integrates from `(0, s)` over `[0, L]`, recording turning points and section crossings.
pub fn shoot(p: &ModelParams, s: f64, length: f64, cfg: &IntegratorConfig) -> Result<Trajectory> {
    if !(length > 0.0) {
        return Err(Error::InvalidConfig(format!("shooting length must be > 0, got {length}")));
    }
    integrate(
        p,
        PhaseState::from_slope(s),
        (0.0, length),
        cfg,
        &[EventSpec::turning_points(), EventSpec::section()],
    )
}

/// `∫ψ⁴ / (∫ψ²)²` over `[x_start, L]` of a dense trajectory.
pub fn ipr(t: &Trajectory, length: f64) -> Result<f64> {
    if !t.has_dense() {
        return Err(Error::NoDenseOutput);
    }
    let (start, end) = (t.x_start(), t.x_end());
    if !(length > start && length <= end) {
        return Err(Error::OutOfSpan { x: length, start, end });
    }
    let mut m2 = 0.0;
    let mut m4 = 0.0;
    for seg in t.segments() {
        if seg.x0 >= length {
            break;
        }
        let hi = seg.x1().min(length);
        let [a, b] = moments(|x| seg.eval_array(x)[0], seg.x0, hi);
        m2 += a;
        m4 += b;
    }
    ratio(m2, m4)
}

/// Participation ratio of an arbitrary profile `f` on `[a, b]`, split at `pieces` equal subintervals.
pub fn ipr_of_profile<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, pieces: usize) -> Result<f64> {
    let n = pieces.max(1);
    let mut m2 = 0.0;
    let mut m4 = 0.0;
    for i in 0..n {
        let lo = a + (b - a) * i as f64 / n as f64;
        let hi = if i + 1 == n { b } else { a + (b - a) * (i + 1) as f64 / n as f64 };
        let [x, y] = moments(&f, lo, hi);
        m2 += x;
        m4 += y;
    }
    ratio(m2, m4)
}

fn moments<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64) -> [f64; 2] {
    if hi <= lo {
        return [0.0, 0.0];
    }
    integrate_lobatto(
        &|x| {
            let psi2 = f(x).powi(2);
            [psi2, psi2 * psi2]
        },
        lo,
        hi,
        IPR_REL_TOL,
    )
}

fn ratio(m2: f64, m4: f64) -> Result<f64> {
    if !(m2 > 0.0) {
        return Err(Error::DegenerateTrajectory);
    }
    Ok(m4 / (m2 * m2))
}

/// `D2 = -ln(IPR) / ln L`.
pub fn fractal_dimension(ipr_value: f64, length: f64) -> f64 {
    -ipr_value.ln() / length.ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeEstimate {
    pub mean: f64,
    /// Largest relative deviation from the mean inside the window.
    pub spread: f64,
    pub count: usize,
}

/// Mean `|ψ|` over the last `k` turning points of `t`; `None` if the orbit has
/// decayed below `v_floor` by the end of the trajectory.
pub fn asymptotic_amplitude(p: &ModelParams, t: &Trajectory, k: usize, v_floor: f64) -> Result<Option<AmplitudeEstimate>> {
    let tps: Vec<f64> = t.events_of(EventKind::TurningPoint).map(|e| e.state.psi.abs()).collect();
    if tps.len() < 4 {
        return Err(Error::InsufficientEvents { needed: 4, found: tps.len() });
    }
    if lyapunov_value(p, t.final_state()) < v_floor {
        return Ok(None);
    }
    let tail = &tps[tps.len() - k.clamp(1, tps.len())..];
    Ok(Some(window_stats(tail)))
}

fn window_stats(w: &[f64]) -> AmplitudeEstimate {
    let mean = w.iter().sum::<f64>() / w.len() as f64;
    let spread = w.iter().map(|a| (a - mean).abs()).fold(0.0, f64::max) / mean;
    AmplitudeEstimate { mean, spread, count: w.len() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Trend {
    Contracting,
    Diverging,
    Flat,
}

/// Whether successive amplitude differences in the window shrink or grow.
fn trend(w: &[f64]) -> Trend {
    let n = w.len();
    let first = w[1] - w[0];
    let last = w[n - 1] - w[n - 2];
    let scale = w.iter().fold(0.0_f64, |m, a| m.max(*a));
    if first.abs().max(last.abs()) <= 1e-9 * scale {
        return Trend::Flat;
    }
    let monotone = w.windows(2).all(|d| (d[1] - d[0]) * first > 0.0);
    if last.abs() < first.abs() {
        Trend::Contracting
    } else if monotone {
        Trend::Diverging
    } else {
        Trend::Flat
    }
}

/// Classifies the shot with boundary slope `s`.
///
/// The flow is odd, so `s` and `-s` give identical results apart from the
/// reported slope.
pub fn classify(p: &ModelParams, s: f64, cfg: &ClassifierConfig) -> ShotResult {
    let l0 = cfg.base_length_for(p);
    if s == 0.0 {
        return ShotResult {
            slope: s,
            outcome: Outcome::Skin,
            d2: 0.0,
            ipr: 1.0,
            length: l0,
            asymptotic_amplitude: None,
            transit_length: 0.0,
            decided_at: 0.0,
            decision: Decision::Origin,
        };
    }
    match run_classifier(p, s.abs(), cfg) {
        Ok(mut r) => {
            r.slope = s;
            r
        }
        Err(_) => ShotResult {
            slope: s,
            outcome: Outcome::Undecided,
            d2: f64::NAN,
            ipr: f64::NAN,
            length: 0.0,
            asymptotic_amplitude: None,
            transit_length: f64::NAN,
            decided_at: f64::NAN,
            decision: Decision::Exhausted,
        },
    }
}

struct Verdict {
    outcome: Outcome,
    transit: f64,
    decided_at: f64,
    amplitude: Option<f64>,
    decision: Decision,
}

fn run_classifier(p: &ModelParams, s: f64, cfg: &ClassifierConfig) -> Result<ShotResult> {
    let l0 = cfg.base_length_for(p);
    let l_max = cfg.max_length_for(p);
    let mut icfg = cfg.integrator;
    icfg.max_x = Some(icfg.effective_max_x(p).max(l_max));

    let v_cert = lyapunov_certificate_level(p);
    let k = cfg.tail_turning_points;
    let mut run = Integration::new(p, PhaseState::from_slope(s), (0.0, l_max), &icfg, &[EventSpec::turning_points()])?;

    let mut m2 = 0.0;
    let mut m4 = 0.0;
    let mut tp_x: Vec<f64> = Vec::new();
    let mut tp_a: Vec<f64> = Vec::new();
    let mut checkpoint = l0;
    let mut doublings = 0u32;
    let mut prev_d2: Option<f64> = None;
    let mut last = (0.0, 1.0, 0.0); // (ipr, d2, L) at the latest checkpoint
    let mut verdict: Option<Verdict> = None;

    while let Some(step) = run.next_step()? {
        let seg = step.segment;
        let (x0, x1) = (seg.x0, step.x_end);

        // moments, split at a checkpoint if one falls inside the step
        let mut at_checkpoint = None;
        if x1 >= checkpoint {
            let [a, b] = moments(|x| seg.eval_array(x)[0], x0, checkpoint);
            m2 += a;
            m4 += b;
            at_checkpoint = Some((checkpoint, m2, m4));
            let [a, b] = moments(|x| seg.eval_array(x)[0], checkpoint, x1);
            m2 += a;
            m4 += b;
        } else {
            let [a, b] = moments(|x| seg.eval_array(x)[0], x0, x1);
            m2 += a;
            m4 += b;
        }

        for e in &step.events {
            tp_x.push(e.x);
            tp_a.push(e.state.psi.abs());
        }

        if verdict.is_none() && cfg.early_exits {
            let v = lyapunov_value(p, step.state_end);
            if v < v_cert || v < cfg.early_exit_v {
                let decision = if v < v_cert { Decision::LyapunovCertificate } else { Decision::LyapunovFloor };
                verdict = Some(Verdict { outcome: Outcome::Skin, transit: x1, decided_at: x1, amplitude: None, decision });
            } else if !step.events.is_empty() && tp_a.len() >= k {
                let w = &tp_a[tp_a.len() - k..];
                let st = window_stats(w);
                let tr = trend(w);
                if st.spread <= cfg.early_exit_band && tr != Trend::Diverging && (tr == Trend::Contracting || st.spread < 1e-9)
                {
                    verdict = Some(Verdict {
                        outcome: Outcome::Extended,
                        transit: tp_x[tp_x.len() - k],
                        decided_at: *tp_x.last().unwrap(),
                        amplitude: Some(st.mean),
                        decision: Decision::AmplitudeTail,
                    });
                }
            }
        }

        if let Some((lc, c2, c4)) = at_checkpoint {
            let ipr_c = ratio(c2, c4)?;
            let d2_c = fractal_dimension(ipr_c, lc);
            last = (ipr_c, d2_c, lc);
            if verdict.is_none() {
                if let Some(pd) = prev_d2 {
                    if (d2_c - pd).abs() < cfg.d2_tolerance {
                        let diverging = tp_a.len() >= k && trend(&tp_a[tp_a.len() - k..]) == Trend::Diverging;
                        if d2_c < cfg.d2_threshold {
                            verdict = Some(Verdict {
                                outcome: Outcome::Skin,
                                transit: lc,
                                decided_at: lc,
                                amplitude: None,
                                decision: Decision::Dimension,
                            });
                        } else if !diverging && tp_a.len() >= 4 {
                            let w = &tp_a[tp_a.len() - k.min(tp_a.len())..];
                            verdict = Some(Verdict {
                                outcome: Outcome::Extended,
                                transit: lc,
                                decided_at: lc,
                                amplitude: Some(window_stats(w).mean),
                                decision: Decision::Dimension,
                            });
                        }
                    }
                }
            }
            prev_d2 = Some(d2_c);
            doublings += 1;
            checkpoint = l0 * 2f64.powi(doublings as i32);
        }

        if let Some(vd) = &verdict {
            // metrics are always reported at L₀ or later
            if x1 >= l0 {
                let (ipr_v, length) = if at_checkpoint.is_some() && last.2 >= vd.decided_at {
                    (last.0, last.2)
                } else {
                    (ratio(m2, m4)?, x1)
                };
                return Ok(ShotResult {
                    slope: s,
                    outcome: vd.outcome,
                    d2: fractal_dimension(ipr_v, length).max(0.0),
                    ipr: ipr_v,
                    length,
                    asymptotic_amplitude: vd.amplitude,
                    transit_length: vd.transit,
                    decided_at: vd.decided_at,
                    decision: vd.decision,
                });
            }
        }
    }

    Ok(ShotResult {
        slope: s,
        outcome: Outcome::Undecided,
        d2: last.1.max(0.0),
        ipr: last.0,
        length: last.2,
        asymptotic_amplitude: None,
        transit_length: last.2,
        decided_at: last.2,
        decision: Decision::Exhausted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn ipr_oracles() {
        let l = 50.0;
        let c = ipr_of_profile(|_| 0.7, 0.0, l, 10).unwrap();
        assert!((c - 1.0 / l).abs() < 1e-12);
        // sine over an integer number of periods
        let l = 100.0 * PI / 2.0;
        let s = ipr_of_profile(|x| 2.0 * (4.0 * x).sin(), 0.0, l, 400).unwrap();
        assert!((s - 1.5 / l).abs() / (1.5 / l) < 1e-8);
        // e^{-x}: (1/4) / (1/2)^2 = 1
        let e = ipr_of_profile(|x| (-x).exp(), 0.0, 60.0, 60).unwrap();
        assert!((e - 1.0).abs() < 1e-8, "{e}");
        assert!(matches!(ipr_of_profile(|_| 0.0, 0.0, 1.0, 1), Err(Error::DegenerateTrajectory)));
    }

    #[test]
    fn dimension_examples() {
        assert!((fractal_dimension(1.0 / 1000.0, 1000.0) - 1.0).abs() < 1e-15);
        assert_eq!(fractal_dimension(1.0, 1000.0), 0.0);
        let d = fractal_dimension(1.5 / 1000.0, 1000.0);
        assert!((d - 0.9413).abs() < 1e-4);
    }

    #[test]
    fn shoot_from_origin_stays_there() {
        let p = ModelParams::reference(-0.5);
        let t = shoot(&p, 0.0, 10.0, &IntegratorConfig::default()).unwrap();
        assert!(t.states.iter().all(|s| s.psi == 0.0 && s.v == 0.0));
        assert!(matches!(ipr(&t, 10.0), Err(Error::DegenerateTrajectory)));
    }

    #[test]
    fn trajectory_ipr_matches_harmonic_formula() {
        let p = ModelParams::linear(0.0, 8.0).unwrap();
        let l = 50.0 * PI;
        let t = shoot(&p, 1.0, l, &IntegratorConfig::default()).unwrap();
        let v = ipr(&t, l).unwrap();
        assert!((v * l - 1.5).abs() < 1e-7, "{}", v * l);
    }

    #[test]
    fn golden_classes() {
        let cfg = ClassifierConfig::default();
        let r = classify(&ModelParams::reference(-1.2), 6.0, &cfg);
        assert_eq!(r.outcome, Outcome::Skin);
        let p = ModelParams::reference(-0.5);
        assert_eq!(classify(&p, 7.0, &cfg).outcome, Outcome::Skin);
        let e = classify(&p, 10.0, &cfg);
        assert_eq!(e.outcome, Outcome::Extended);
        assert!((e.asymptotic_amplitude.unwrap() - 5.2263).abs() / 5.2263 < 0.01);
        assert_eq!(classify(&ModelParams::reference(0.2), 2.0, &cfg).outcome, Outcome::Extended);
    }

    #[test]
    fn zero_slope_is_skin() {
        let r = classify(&ModelParams::reference(0.2), 0.0, &ClassifierConfig::default());
        assert_eq!(r.outcome, Outcome::Skin);
        assert_eq!(r.decision, Decision::Origin);
    }

    #[test]
    fn config_validation() {
        let p = ModelParams::reference(-0.5);
        let mut c = ClassifierConfig::default();
        assert!(c.validate_for(&p).is_ok());
        c.d2_threshold = 1.0;
        assert!(c.validate_for(&p).is_err());
        let c = ClassifierConfig { base_length: Some(5.0), ..ClassifierConfig::default() };
        assert!(c.validate_for(&p).is_err());
    }
}
