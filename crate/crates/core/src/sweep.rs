//! Quasi-static sweeps of `γ`: the state is relaxed at each frozen `γ` and
//! carried to the next, so the run follows whichever attractor it sits on
//! until that attractor disappears.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{EventSpec, Integration, IntegratorConfig};
use crate::model::{lyapunov_value, ModelParams, PhaseState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepDirection {
    Down,
    Up,
}

impl SweepDirection {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepDirection::Down => "down",
            SweepDirection::Up => "up",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BranchLabel {
    OnExtendedBranch,
    OnSkinBranch,
}

impl BranchLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            BranchLabel::OnExtendedBranch => "extended",
            BranchLabel::OnSkinBranch => "skin",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub gamma: f64,
    pub end_state: PhaseState,
    pub amplitude_estimate: f64,
    /// `V` at the end of the relaxation relative to one harmonic period earlier.
    pub v_ratio_tail: f64,
    pub label: BranchLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub direction: SweepDirection,
    pub records: Vec<SweepRecord>,
    pub switch_gamma: Option<f64>,
    pub label_changes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub n_steps: usize,
    /// Relaxation per step, in harmonic periods.
    pub relax_periods: f64,
    /// Relative size of the kick applied after each `γ` step; 0 disables it.
    pub noise: f64,
    pub seed: u64,
    /// Amplitude below which a decaying state counts as skin. `None` means `0.1 sqrt(a/b)`.
    pub skin_threshold: Option<f64>,
    #[serde(skip)]
    pub integrator: IntegratorConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            n_steps: 200,
            relax_periods: 50.0,
            noise: 1e-9,
            seed: 0x5eed,
            skin_threshold: None,
            integrator: IntegratorConfig::default(),
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        self.integrator.validate()?;
        if self.n_steps < 10 {
            return Err(Error::InvalidConfig(format!("n_steps must be >= 10, got {}", self.n_steps)));
        }
        if !(self.relax_periods >= 20.0) {
            return Err(Error::InvalidConfig(format!(
                "relax_periods must be >= 20 harmonic periods, got {}",
                self.relax_periods
            )));
        }
        if !(self.noise >= 0.0 && self.noise < 1.0) {
            return Err(Error::InvalidConfig(format!("noise must lie in [0, 1), got {}", self.noise)));
        }
        if let Some(t) = self.skin_threshold {
            if !(t > 0.0) {
                return Err(Error::InvalidConfig(format!("skin_threshold must be > 0, got {t}")));
            }
        }
        Ok(())
    }

    pub fn skin_threshold_for(&self, p: &ModelParams) -> f64 {
        self.skin_threshold.unwrap_or(0.1 * (p.a / p.b).sqrt())
    }
}

/// Near-origin starting state `(0, 1e-3 ω)`.
pub fn near_origin(p: &ModelParams) -> PhaseState {
    PhaseState::new(0.0, 1e-3 * p.omega())
}

struct Relaxed {
    end: PhaseState,
    amplitude: f64,
    v_ratio: f64,
}

fn relax(p: &ModelParams, s0: PhaseState, length: f64, cfg: &IntegratorConfig) -> Result<Relaxed> {
    let t_h = p.harmonic_period();
    let tail_start = length - t_h;
    let mut icfg = *cfg;
    icfg.max_x = Some(icfg.effective_max_x(p).max(length));
    let mut run = Integration::new(p, s0, (0.0, length), &icfg, &[EventSpec::turning_points()])?;
    let mut amp: f64 = 0.0;
    let mut v_tail_start = None;
    while let Some(step) = run.next_step()? {
        if v_tail_start.is_none() && step.x_end >= tail_start {
            v_tail_start = Some(lyapunov_value(p, step.eval(tail_start.max(step.segment.x0))));
        }
        for e in &step.events {
            if e.x >= tail_start {
                amp = amp.max(e.state.psi.abs());
            }
        }
    }
    let end = run.state();
    if amp == 0.0 {
        amp = (end.psi * end.psi + end.v * end.v / (2.0 * p.energy)).sqrt();
    }
    let v_end = lyapunov_value(p, end);
    let v0 = v_tail_start.unwrap_or(v_end);
    let v_ratio = if v0 > 0.0 { v_end / v0 } else { 1.0 };
    Ok(Relaxed { end, amplitude: amp, v_ratio })
}

/// Steps `γ` linearly from `gamma_from` to `gamma_to` in `cfg.n_steps` steps,
/// relaxing the carried state for `cfg.relax_periods` harmonic periods at each value.
pub fn quasi_static_sweep(
    p_base: &ModelParams,
    gamma_from: f64,
    gamma_to: f64,
    init: PhaseState,
    cfg: &SweepConfig,
) -> Result<SweepResult> {
    cfg.validate()?;
    if !(gamma_from.is_finite() && gamma_to.is_finite()) || gamma_from == gamma_to {
        return Err(Error::InvalidConfig(format!("sweep range ({gamma_from}, {gamma_to}) is empty")));
    }
    if !init.is_finite() {
        return Err(Error::NonFiniteState { x: 0.0 });
    }
    let direction = if gamma_to < gamma_from { SweepDirection::Down } else { SweepDirection::Up };
    let relax_length = cfg.relax_periods * p_base.harmonic_period();
    let threshold = cfg.skin_threshold_for(p_base);
    let omega = p_base.omega();
    let floor = 1e-3;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut state = init;
    let mut records = Vec::with_capacity(cfg.n_steps + 1);
    for k in 0..=cfg.n_steps {
        let gamma = if k == cfg.n_steps {
            gamma_to
        } else {
            gamma_from + (gamma_to - gamma_from) * k as f64 / cfg.n_steps as f64
        };
        let p = p_base.with_gamma(gamma);
        if k > 0 && cfg.noise > 0.0 {
            let r = (state.psi * state.psi + (state.v / omega).powi(2)).sqrt().max(floor);
            let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            state.psi += cfg.noise * r * phi.cos();
            state.v += cfg.noise * r * omega * phi.sin();
        }
        let out = relax(&p, state, relax_length, &cfg.integrator)?;
        let label = if out.amplitude < threshold && out.v_ratio < 1.0 {
            BranchLabel::OnSkinBranch
        } else {
            BranchLabel::OnExtendedBranch
        };
        records.push(SweepRecord {
            gamma,
            end_state: out.end,
            amplitude_estimate: out.amplitude,
            v_ratio_tail: out.v_ratio,
            label,
        });
        state = out.end;
    }

    let mut switch_gamma = None;
    let mut label_changes = 0;
    for w in records.windows(2) {
        if w[0].label != w[1].label {
            label_changes += 1;
            if switch_gamma.is_none() {
                switch_gamma = Some(0.5 * (w[0].gamma + w[1].gamma));
            }
        }
    }
    Ok(SweepResult { direction, records, switch_gamma, label_changes })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        let p = ModelParams::reference(0.0);
        let cfg = SweepConfig { n_steps: 5, ..SweepConfig::default() };
        assert!(quasi_static_sweep(&p, 0.5, -1.5, near_origin(&p), &cfg).is_err());
        let cfg = SweepConfig { relax_periods: 10.0, ..SweepConfig::default() };
        assert!(quasi_static_sweep(&p, 0.5, -1.5, near_origin(&p), &cfg).is_err());
    }

    #[test]
    fn threshold_default() {
        let p = ModelParams::reference(0.0);
        assert_eq!(SweepConfig::default().skin_threshold_for(&p), 0.4);
    }
}
