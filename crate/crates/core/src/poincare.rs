//! Limit cycles as fixed points of the return map on `Σ = {ψ = 0, v > 0}`.
//!
//! `P(s)` is the value of `v` at the next upward crossing of `ψ = 0` starting
//! from `(0, s)`. Cycles solve `G(s, γ) = P_γ(s) - s = 0`; branches of them are
//! traced in `(s, γ)` by pseudo-arclength continuation and the saddle-node of
//! cycles shows up as a turning point of the branch in `γ`.

use serde::{Deserialize, Serialize};

use crate::averaging::branch_amplitudes;
use crate::error::{Error, NoReturnReason, Result};
use crate::integrator::{EventKind, EventSpec, Integration, IntegratorConfig};
use crate::model::{lyapunov_value, ModelParams, PhaseState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoincareConfig {
    pub integrator: IntegratorConfig,
    /// Newton stops once `|P(s) - s| < tol_newton · max(1, s)`.
    pub tol_newton: f64,
    pub max_iterations: usize,
    /// Relative finite-difference step for `P'` and `∂P/∂γ`.
    pub fd_step: f64,
    /// Half-width of the band around `|P'| = 1` treated as non-hyperbolic.
    pub tol_h: f64,
    /// Crossings earlier than this fraction of the harmonic period are ignored.
    pub min_return_fraction: f64,
    /// Search window for the next crossing, in harmonic periods.
    pub return_window_periods: f64,
    /// A run counts as decayed once `V` drops below this fraction of its start value.
    pub decay_ratio: f64,
}

impl Default for PoincareConfig {
    fn default() -> Self {
        Self {
            integrator: IntegratorConfig { rel_tol: 1e-12, abs_tol: 1e-13, ..IntegratorConfig::default() },
            tol_newton: 1e-10,
            max_iterations: 50,
            fd_step: 1e-6,
            tol_h: 1e-3,
            min_return_fraction: 0.1,
            return_window_periods: 20.0,
            decay_ratio: 1e-20,
        }
    }
}

impl PoincareConfig {
    pub fn validate(&self) -> Result<()> {
        self.integrator.validate()?;
        let positive = [
            ("tol_newton", self.tol_newton),
            ("fd_step", self.fd_step),
            ("tol_h", self.tol_h),
            ("min_return_fraction", self.min_return_fraction),
            ("return_window_periods", self.return_window_periods),
            ("decay_ratio", self.decay_ratio),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("max_iterations must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stability {
    Stable,
    Unstable,
    Nonhyperbolic,
}

impl Stability {
    pub fn from_multiplier(mu: f64, tol_h: f64) -> Self {
        if mu.abs() < 1.0 - tol_h {
            Stability::Stable
        } else if mu.abs() > 1.0 + tol_h {
            Stability::Unstable
        } else {
            Stability::Nonhyperbolic
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Stability::Stable => "stable",
            Stability::Unstable => "unstable",
            Stability::Nonhyperbolic => "nonhyperbolic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitCycle {
    pub gamma: f64,
    pub s_fixed: f64,
    pub period: f64,
    pub amplitude: f64,
    pub multiplier: f64,
    pub stability: Stability,
}

/// Next return to the section from `(0, s)`: `(s_next, elapsed x)`.
pub fn return_map(p: &ModelParams, s: f64, cfg: &PoincareConfig) -> Result<(f64, f64)> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::InvalidConfig(format!("return map needs s > 0, got {s}")));
    }
    let t_h = p.harmonic_period();
    let window = cfg.return_window_periods * t_h;
    let v0 = lyapunov_value(p, PhaseState::from_slope(s));
    let events = [
        EventSpec::section().terminal(true).after(cfg.min_return_fraction * t_h),
        EventSpec::lyapunov_below(cfg.decay_ratio * v0),
    ];
    let mut icfg = cfg.integrator;
    icfg.max_x = Some(icfg.effective_max_x(p).max(window));
    let mut run = Integration::new(p, PhaseState::from_slope(s), (0.0, window), &icfg, &events)?;
    while let Some(step) = run.next_step()? {
        if step.terminated {
            let e = step.events.last().expect("terminal step carries its event");
            return match e.kind {
                EventKind::SectionCrossing => Ok((e.state.v, e.x)),
                _ => Err(Error::NoReturn { s, reason: NoReturnReason::Decayed }),
            };
        }
    }
    Err(Error::NoReturn { s, reason: NoReturnReason::WindowExhausted })
}

fn residual(p: &ModelParams, s: f64, cfg: &PoincareConfig) -> Result<f64> {
    Ok(return_map(p, s, cfg)?.0 - s)
}

fn fd_h(s: f64, cfg: &PoincareConfig) -> f64 {
    cfg.fd_step * s.abs().max(1.0)
}

/// Central-difference `P'(s)`.
pub fn return_map_derivative(p: &ModelParams, s: f64, cfg: &PoincareConfig) -> Result<f64> {
    let h = fd_h(s, cfg).min(0.5 * s);
    let (pp, _) = return_map(p, s + h, cfg)?;
    let (pm, _) = return_map(p, s - h, cfg)?;
    Ok((pp - pm) / (2.0 * h))
}

/// Largest `|ψ|` at the turning points of one revolution from `(0, s)`.
pub fn cycle_amplitude_at(p: &ModelParams, s: f64, period: f64, cfg: &PoincareConfig) -> Result<f64> {
    let mut icfg = cfg.integrator;
    icfg.max_x = Some(icfg.effective_max_x(p).max(period));
    let mut run = Integration::new(p, PhaseState::from_slope(s), (0.0, period), &icfg, &[EventSpec::turning_points()])?;
    let mut amp: f64 = 0.0;
    while let Some(step) = run.next_step()? {
        for e in &step.events {
            amp = amp.max(e.state.psi.abs());
        }
    }
    if amp > 0.0 {
        Ok(amp)
    } else {
        Err(Error::InsufficientEvents { needed: 1, found: 0 })
    }
}

pub fn cycle_amplitude(p: &ModelParams, lc: &LimitCycle, cfg: &PoincareConfig) -> Result<f64> {
    cycle_amplitude_at(p, lc.s_fixed, lc.period, cfg)
}

/// Builds the [`LimitCycle`] record at a converged section coordinate.
pub fn cycle_at(p: &ModelParams, s: f64, cfg: &PoincareConfig) -> Result<LimitCycle> {
    let (_, period) = return_map(p, s, cfg)?;
    let multiplier = return_map_derivative(p, s, cfg)?;
    let amplitude = cycle_amplitude_at(p, s, period, cfg)?;
    Ok(LimitCycle {
        gamma: p.gamma,
        s_fixed: s,
        period,
        amplitude,
        multiplier,
        stability: Stability::from_multiplier(multiplier, cfg.tol_h),
    })
}

/// Converged section coordinate, after one polishing Newton step kept only if it helps.
fn polish(p: &ModelParams, s: f64, f: f64, cfg: &PoincareConfig) -> f64 {
    if let Ok(d) = return_map_derivative(p, s, cfg) {
        let s_new = s - f / (d - 1.0);
        if s_new > 0.0 {
            if let Ok(f_new) = residual(p, s_new, cfg) {
                if f_new.abs() < f.abs() {
                    return s_new;
                }
            }
        }
    }
    s
}

fn newton(p: &ModelParams, s_guess: f64, f_guess: f64, cfg: &PoincareConfig) -> Result<f64> {
    let s_min = 1e-3 * p.omega();
    let (mut s, mut f) = (s_guess, f_guess);
    for it in 0..cfg.max_iterations {
        if f.abs() < cfg.tol_newton * s.max(1.0) {
            return Ok(polish(p, s, f, cfg));
        }
        let d = return_map_derivative(p, s, cfg)? - 1.0;
        if d == 0.0 || !d.is_finite() {
            return Err(Error::NoConvergence { iterations: it, last_s: s });
        }
        let mut delta = -f / d;
        let cap = 0.5 * s;
        if delta.abs() > cap {
            delta = cap * delta.signum();
        }
        // backtrack until the residual drops
        let mut accepted = false;
        for _ in 0..12 {
            let s_try = s + delta;
            if s_try > s_min {
                if let Ok(f_try) = residual(p, s_try, cfg) {
                    if f_try.abs() < f.abs() {
                        s = s_try;
                        f = f_try;
                        accepted = true;
                        break;
                    }
                }
            }
            delta *= 0.5;
        }
        if !accepted {
            return Err(Error::NoConvergence { iterations: it + 1, last_s: s });
        }
    }
    Err(Error::NoConvergence { iterations: cfg.max_iterations, last_s: s })
}

/// Residual treating a missing return as contraction (`P(s) - s = -s`).
fn residual_or_decay(p: &ModelParams, s: f64, cfg: &PoincareConfig) -> Result<f64> {
    match residual(p, s, cfg) {
        Err(Error::NoReturn { .. }) => Ok(-s),
        r => r,
    }
}

/// Walks from `s_guess` in the direction the residual points (up while orbits
/// expand, down while they contract) until the sign flips, then closes the
/// bracket with bisection-safeguarded Newton.
fn bracketed(p: &ModelParams, s_guess: f64, f_guess: f64, cfg: &PoincareConfig) -> Result<f64> {
    let s_min = 1e-3 * p.omega();
    let fail = |it: usize, s: f64| Error::NoConvergence { iterations: it, last_s: s };
    let factor: f64 = if f_guess > 0.0 { 2.0 } else { 0.5 };
    let (mut a, mut fa) = (s_guess, f_guess);
    let (mut b, mut fb) = (s_guess, f_guess);
    for it in 0..40 {
        b = a * factor;
        if b <= s_min || !b.is_finite() {
            return Err(fail(it, a));
        }
        fb = residual_or_decay(p, b, cfg)?;
        if fb * fa <= 0.0 {
            break;
        }
        a = b;
        fa = fb;
    }
    if fb * fa > 0.0 {
        return Err(fail(40, b));
    }
    let (mut lo, mut hi, mut flo) = if a < b { (a, b, fa) } else { (b, a, fb) };
    let (mut s, mut f) = if fa.abs() < fb.abs() { (a, fa) } else { (b, fb) };
    for it in 0..cfg.max_iterations {
        if f.abs() < cfg.tol_newton * s.max(1.0) {
            return Ok(polish(p, s, f, cfg));
        }
        let newton_step = return_map_derivative(p, s, cfg).ok().map(|d| s - f / (d - 1.0));
        let next = match newton_step {
            Some(x) if x > lo && x < hi => x,
            _ => 0.5 * (lo + hi),
        };
        if next == s || hi - lo < 4.0 * f64::EPSILON * hi {
            return Err(fail(it, s));
        }
        s = next;
        f = residual_or_decay(p, s, cfg)?;
        if f * flo > 0.0 {
            lo = s;
            flo = f;
        } else {
            hi = s;
        }
    }
    Err(fail(cfg.max_iterations, s))
}

/// Damped Newton iteration on `P(s) - s` from `s_guess`. If Newton stalls
/// (typically by sliding onto the trivial fixed point at the origin), the
/// root is bracketed in the direction the residual points and solved there.
pub fn find_cycle(p: &ModelParams, s_guess: f64, cfg: &PoincareConfig) -> Result<LimitCycle> {
    cfg.validate()?;
    if !(s_guess > 0.0) {
        return Err(Error::InvalidConfig(format!("s_guess must be > 0, got {s_guess}")));
    }
    let f = residual(p, s_guess, cfg)?;
    let s = match newton(p, s_guess, f, cfg) {
        Err(Error::NoConvergence { .. }) => bracketed(p, s_guess, f, cfg)?,
        r => r?,
    };
    cycle_at(p, s, cfg)
}

/// Roots of `P(s) - s` on `[s_lo, s_hi]` found by a grid scan plus bisection.
///
/// Grid points without a return count as contracting (`P(s) - s < 0`).
pub fn scan_cycles(p: &ModelParams, s_lo: f64, s_hi: f64, n: usize, cfg: &PoincareConfig) -> Result<Vec<f64>> {
    if !(s_lo > 0.0 && s_hi > s_lo) || n < 2 {
        return Err(Error::InvalidConfig(format!("bad scan range [{s_lo}, {s_hi}] with {n} points")));
    }
    let g = |s: f64| -> Result<f64> {
        match residual(p, s, cfg) {
            Ok(v) => Ok(v),
            Err(Error::NoReturn { .. }) => Ok(-s),
            Err(e) => Err(e),
        }
    };
    let grid: Vec<f64> = (0..n).map(|i| s_lo + (s_hi - s_lo) * i as f64 / (n - 1) as f64).collect();
    let vals = grid.iter().map(|&s| g(s)).collect::<Result<Vec<_>>>()?;
    let mut roots = Vec::new();
    for i in 0..n - 1 {
        let (mut a, mut b) = (grid[i], grid[i + 1]);
        let (mut fa, fb) = (vals[i], vals[i + 1]);
        if fa == 0.0 {
            roots.push(a);
            continue;
        }
        if fa * fb >= 0.0 {
            continue;
        }
        while b - a > 1e-10 * b.max(1.0) {
            let m = 0.5 * (a + b);
            let fm = g(m)?;
            if fm == 0.0 {
                a = m;
                b = m;
                break;
            }
            if (fm < 0.0) == (fa < 0.0) {
                a = m;
                fa = fm;
            } else {
                b = m;
            }
        }
        roots.push(0.5 * (a + b));
    }
    Ok(roots)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContinuationConfig {
    pub gamma_start: f64,
    pub initial_step: f64,
    pub max_step: f64,
    pub min_step: f64,
    /// Lower bound on `γ`; reached only if the branch never folds.
    pub gamma_floor: Option<f64>,
    /// After the fold, stop once `γ` climbs above this value.
    pub gamma_stop: f64,
    /// If set, stop once `γ` exceeds `γ_fold + margin` after the fold.
    pub stop_after_fold: Option<f64>,
    /// Stop once the cycle's section coordinate drops below this fraction of `ω`.
    pub s_min_fraction: f64,
    pub fold_refine_tol: f64,
    pub max_points: usize,
    pub corrector_iterations: usize,
}

impl Default for ContinuationConfig {
    fn default() -> Self {
        Self {
            gamma_start: 0.5,
            initial_step: 0.1,
            max_step: 0.25,
            min_step: 1e-6,
            gamma_floor: None,
            gamma_stop: -1e-3,
            stop_after_fold: None,
            s_min_fraction: 1e-3,
            fold_refine_tol: 1e-4,
            max_points: 5000,
            corrector_iterations: 8,
        }
    }
}

impl ContinuationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_step > 0.0 && self.initial_step >= self.min_step && self.max_step >= self.initial_step) {
            return Err(Error::InvalidConfig(format!(
                "continuation steps must satisfy 0 < min_step <= initial_step <= max_step, got {} / {} / {}",
                self.min_step, self.initial_step, self.max_step
            )));
        }
        if !(self.fold_refine_tol > 0.0) {
            return Err(Error::InvalidConfig("fold_refine_tol must be > 0".into()));
        }
        if self.corrector_iterations == 0 || self.max_points < 2 {
            return Err(Error::InvalidConfig("corrector_iterations and max_points must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    pub gamma: f64,
    pub cycle: LimitCycle,
    /// Unit tangent `(t_s, t_γ)` in traversal direction.
    pub tangent: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fold {
    pub gamma_c: f64,
    pub s_c: f64,
    pub multiplier: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub params: ModelParams,
    pub points: Vec<BranchPoint>,
    pub fold: Option<Fold>,
    /// Arclength step taken to reach each point after the first.
    pub arclength_steps: Vec<f64>,
    /// Why continuation stopped.
    pub stop_reason: String,
    #[serde(skip)]
    pub poincare: PoincareConfig,
}

/// `G(s, γ)` and its partial derivatives.
struct Linearization {
    g: f64,
    g_s: f64,
    g_gamma: f64,
}

fn linearize(p: &ModelParams, s: f64, gamma: f64, cfg: &PoincareConfig) -> Result<Linearization> {
    let q = p.with_gamma(gamma);
    let g = residual(&q, s, cfg)?;
    let g_s = return_map_derivative(&q, s, cfg)? - 1.0;
    let hg = cfg.fd_step * gamma.abs().max(1.0);
    let gp = residual(&p.with_gamma(gamma + hg), s, cfg)?;
    let gm = residual(&p.with_gamma(gamma - hg), s, cfg)?;
    Ok(Linearization { g, g_s, g_gamma: (gp - gm) / (2.0 * hg) })
}

fn unit_tangent(lin: &Linearization, prev: (f64, f64)) -> (f64, f64) {
    let (ts, tg) = (-lin.g_gamma, lin.g_s);
    let n = ts.hypot(tg);
    let (ts, tg) = (ts / n, tg / n);
    if ts * prev.0 + tg * prev.1 < 0.0 {
        (-ts, -tg)
    } else {
        (ts, tg)
    }
}

/// Newton on `G = 0` plus the hyperplane orthogonal to `t` through the predictor.
fn correct(
    p: &ModelParams,
    pred: (f64, f64),
    t: (f64, f64),
    cfg: &PoincareConfig,
    max_iter: usize,
) -> Result<(f64, f64, Linearization, usize)> {
    let (mut s, mut g) = pred;
    let s_floor = 1e-3 * p.omega() * 0.5;
    for it in 0..max_iter {
        if !(s > s_floor) {
            break;
        }
        let lin = linearize(p, s, g, cfg)?;
        let c = (s - pred.0) * t.0 + (g - pred.1) * t.1;
        let det = lin.g_s * t.1 - lin.g_gamma * t.0;
        if det == 0.0 || !det.is_finite() {
            break;
        }
        let ds = (-lin.g * t.1 + lin.g_gamma * c) / det;
        let dg = (-lin.g_s * c + t.0 * lin.g) / det;
        s += ds;
        g += dg;
        let tol = cfg.tol_newton * s.abs().max(1.0);
        if lin.g.abs() < tol && ds.abs().max(dg.abs()) < 1e-8 * s.abs().max(1.0) {
            let lin = linearize(p, s, g, cfg)?;
            return Ok((s, g, lin, it + 1));
        }
    }
    Err(Error::NoConvergence { iterations: max_iter, last_s: s })
}

fn point_from(p: &ModelParams, s: f64, gamma: f64, lin: &Linearization, tangent: (f64, f64), cfg: &PoincareConfig) -> Result<BranchPoint> {
    let q = p.with_gamma(gamma);
    let (_, period) = return_map(&q, s, cfg)?;
    let multiplier = lin.g_s + 1.0;
    let amplitude = cycle_amplitude_at(&q, s, period, cfg)?;
    Ok(BranchPoint {
        gamma,
        cycle: LimitCycle {
            gamma,
            s_fixed: s,
            period,
            amplitude,
            multiplier,
            stability: Stability::from_multiplier(multiplier, cfg.tol_h),
        },
        tangent,
    })
}

/// Continues the cycle family through `cycle_start` in `γ`, starting downward.
pub fn continue_branch(
    p_base: &ModelParams,
    cycle_start: &LimitCycle,
    ccfg: &ContinuationConfig,
    cfg: &PoincareConfig,
) -> Result<Branch> {
    match continue_branch_partial(p_base, cycle_start, ccfg, cfg)? {
        (_, Some(e)) => Err(e),
        (b, None) => Ok(b),
    }
}

/// Like [`continue_branch`], but a failure after the first point still returns
/// the points reached so far, alongside the error that stopped the run.
pub fn continue_branch_partial(
    p_base: &ModelParams,
    cycle_start: &LimitCycle,
    ccfg: &ContinuationConfig,
    cfg: &PoincareConfig,
) -> Result<(Branch, Option<Error>)> {
    ccfg.validate()?;
    cfg.validate()?;
    let g0 = cycle_start.gamma;
    let lin0 = linearize(p_base, cycle_start.s_fixed, g0, cfg)?;
    let t0 = unit_tangent(&lin0, (0.0, -1.0));
    let mut branch = Branch {
        params: *p_base,
        points: vec![point_from(p_base, cycle_start.s_fixed, g0, &lin0, t0, cfg)?],
        fold: None,
        arclength_steps: Vec::new(),
        stop_reason: String::new(),
        poincare: *cfg,
    };
    let outcome = extend(&mut branch, ccfg).and_then(|reason| {
        branch.stop_reason = reason;
        if branch.fold_bracket().is_some() {
            branch.fold = Some(fold_of(&branch, ccfg)?);
        }
        Ok(())
    });
    match outcome {
        Ok(()) => Ok((branch, None)),
        Err(e) => {
            branch.stop_reason = format!("error: {e}");
            Ok((branch, Some(e)))
        }
    }
}

fn fold_of(branch: &Branch, ccfg: &ContinuationConfig) -> Result<Fold> {
    let cfg = &branch.poincare;
    let (gc, sc) = locate_fold(branch, ccfg.fold_refine_tol)?;
    let q = branch.params.with_gamma(gc);
    let multiplier = return_map_derivative(&q, sc, cfg)?;
    let (_, period) = return_map(&q, sc, cfg)?;
    let amplitude = cycle_amplitude_at(&q, sc, period, cfg)?;
    Ok(Fold { gamma_c: gc, s_c: sc, multiplier, amplitude })
}

/// Pseudo-arclength steps until a stopping rule fires; returns its name.
fn extend(branch: &mut Branch, ccfg: &ContinuationConfig) -> Result<String> {
    let p_base = branch.params;
    let cfg = branch.poincare;
    let gamma_floor = ccfg.gamma_floor.unwrap_or(-p_base.a * p_base.a / (4.0 * p_base.b));
    let s_min = ccfg.s_min_fraction * p_base.omega();
    let points = &mut branch.points;
    let steps = &mut branch.arclength_steps;
    let mut dl = ccfg.initial_step;
    let mut fold_bracket: Option<usize> = None;

    loop {
        if points.len() >= ccfg.max_points {
            return Ok("max_points".to_string());
        }
        let last = *points.last().unwrap();
        let (s_k, g_k, t_k) = (last.cycle.s_fixed, last.gamma, last.tangent);
        // resolve the fold and the Hopf end with small steps
        let cap = ccfg.max_step.min((0.5 * (last.cycle.multiplier - 1.0).abs()).max(0.02));
        dl = dl.min(cap);
        let pred = (s_k + dl * t_k.0, g_k + dl * t_k.1);
        let attempt = correct(&p_base, pred, t_k, &cfg, ccfg.corrector_iterations);
        let accepted = match attempt {
            Ok((s, g, lin, iters)) => {
                let dist = (s - s_k).hypot(g - g_k);
                if dist > 2.0 * dl || s <= 0.0 {
                    None
                } else {
                    Some((s, g, lin, iters))
                }
            }
            Err(_) => None,
        };
        let Some((s, g, lin, iters)) = accepted else {
            dl *= 0.5;
            if dl < ccfg.min_step {
                if points.len() > 1 && s_k < 10.0 * s_min {
                    return Ok("s_min".to_string());
                }
                return Err(Error::StepUnderflow { gamma: g_k });
            }
            continue;
        };
        let t = unit_tangent(&lin, t_k);
        points.push(point_from(&p_base, s, g, &lin, t, &cfg)?);
        steps.push(dl);
        if fold_bracket.is_none() && t_k.1 < 0.0 && t.1 >= 0.0 {
            fold_bracket = Some(points.len() - 2);
        }
        if iters <= 3 {
            dl = (dl * 1.3).min(ccfg.max_step);
        }

        if fold_bracket.is_none() && g < gamma_floor {
            return Ok("gamma_floor".to_string());
        }
        if let Some(k) = fold_bracket {
            if s < s_min {
                return Ok("s_min".to_string());
            }
            if g >= ccfg.gamma_stop {
                return Ok("gamma_stop".to_string());
            }
            if let Some(m) = ccfg.stop_after_fold {
                let gf = points[k].gamma.min(points[k + 1].gamma);
                if g > gf + m {
                    return Ok("fold_margin".to_string());
                }
            }
        }
    }
}

impl Branch {
    /// Index `k` such that the tangent's `γ` component changes sign between points `k` and `k + 1`.
    pub fn fold_bracket(&self) -> Option<usize> {
        self.points
            .windows(2)
            .position(|w| (w[0].tangent.1 < 0.0) != (w[1].tangent.1 < 0.0))
    }

    /// Points before (`true`) or after the fold in traversal order.
    pub fn split_at_fold(&self) -> (&[BranchPoint], &[BranchPoint]) {
        match self.fold_bracket() {
            Some(k) => self.points.split_at(k + 1),
            None => (&self.points[..], &[]),
        }
    }
}

/// Bisection along arclength on the sign of the tangent's `γ` component.
///
/// Stops once the bracket is shorter than `refine_tol` in arclength, which also
/// bounds its width in `γ`.
pub fn locate_fold(b: &Branch, refine_tol: f64) -> Result<(f64, f64)> {
    let k = b.fold_bracket().ok_or(Error::NoFoldInBranch)?;
    let p = &b.params;
    let cfg = &b.poincare;
    let base = b.points[k];
    let t = base.tangent;
    let sign_lo = base.tangent.1 < 0.0;
    let (s0, g0) = (base.cycle.s_fixed, base.gamma);
    let next = b.points[k + 1];
    let mut lo = 0.0;
    let mut hi = (next.cycle.s_fixed - s0) * t.0 + (next.gamma - g0) * t.1;
    if !(hi > 0.0) {
        hi = (next.cycle.s_fixed - s0).hypot(next.gamma - g0);
    }
    let mut best = ((s0 + next.cycle.s_fixed) * 0.5, (g0 + next.gamma) * 0.5);
    while hi - lo > refine_tol {
        let mid = 0.5 * (lo + hi);
        let pred = (s0 + mid * t.0, g0 + mid * t.1);
        let (s, g, lin, _) = correct(p, pred, t, cfg, 12)?;
        let tm = unit_tangent(&lin, t);
        best = (s, g);
        if (tm.1 < 0.0) == sign_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((best.1, best.0))
}

/// Stable cycle at `ccfg.gamma_start` seeded from the averaged outer amplitude,
/// continued through the fold.
pub fn trace_reference_branch(p_base: &ModelParams, ccfg: &ContinuationConfig, cfg: &PoincareConfig) -> Result<Branch> {
    let q = p_base.with_gamma(ccfg.gamma_start);
    let seed = branch_amplitudes(&q)
        .a_out
        .map(|a| p_base.omega() * a)
        .ok_or_else(|| Error::InvalidConfig(format!("no outer cycle predicted at gamma = {}", ccfg.gamma_start)))?;
    let start = find_cycle(&q, seed, cfg)?;
    continue_branch(p_base, &start, ccfg, cfg)
}

/// [`trace_reference_branch`] keeping the points reached before a failure.
pub fn trace_reference_branch_partial(
    p_base: &ModelParams,
    ccfg: &ContinuationConfig,
    cfg: &PoincareConfig,
) -> Result<(Branch, Option<Error>)> {
    let q = p_base.with_gamma(ccfg.gamma_start);
    let seed = branch_amplitudes(&q)
        .a_out
        .map(|a| p_base.omega() * a)
        .ok_or_else(|| Error::InvalidConfig(format!("no outer cycle predicted at gamma = {}", ccfg.gamma_start)))?;
    let start = find_cycle(&q, seed, cfg)?;
    continue_branch_partial(p_base, &start, ccfg, cfg)
}
