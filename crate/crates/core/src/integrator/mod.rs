//! Adaptive integration of the planar flow with dense output and event location.
//!
//! [`Integration`] drives the stepper one accepted step at a time and is what
//! the shooting, return-map and sweep code build on. [`integrate`] collects a
//! whole run into a [`Trajectory`].

mod dop853;

pub use dop853::DenseSegment;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{lyapunov_value, ModelParams, PhaseState};
use dop853::Stepper;

/// Sub-samples per step used to bracket sign changes of event functions.
const EVENT_SUBSAMPLES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Largest accepted step. `None` means 1/16 of the harmonic period.
    pub max_step: Option<f64>,
    /// Hard cap on the integration end point. `None` means `10000 / ω`.
    pub max_x: Option<f64>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self { rel_tol: 1e-10, abs_tol: 1e-12, max_step: None, max_x: None }
    }
}

impl IntegratorConfig {
    pub fn with_tolerances(rel_tol: f64, abs_tol: f64) -> Self {
        Self { rel_tol, abs_tol, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, tol) in [("rel_tol", self.rel_tol), ("abs_tol", self.abs_tol)] {
            if !(tol > 0.0 && tol <= 1e-3) {
                return Err(Error::InvalidConfig(format!("{name} must lie in (0, 1e-3], got {tol}")));
            }
        }
        if let Some(h) = self.max_step {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::InvalidConfig(format!("max_step must be > 0, got {h}")));
            }
        }
        if let Some(m) = self.max_x {
            if !(m > 0.0) {
                return Err(Error::InvalidConfig(format!("max_x must be > 0, got {m}")));
            }
        }
        Ok(())
    }

    pub fn effective_max_step(&self, p: &ModelParams) -> f64 {
        self.max_step.unwrap_or(p.harmonic_period() / 16.0)
    }

    pub fn effective_max_x(&self, p: &ModelParams) -> f64 {
        self.max_x.unwrap_or(10_000.0 / p.omega())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EventKind {
    /// `ψ = 0`; with [`Direction::Ascending`] this is the section `{ψ = 0, v > 0}`.
    SectionCrossing,
    /// `v = 0`, where `|ψ|` is locally extremal.
    TurningPoint,
    /// `V = threshold`.
    LyapunovBelow(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Ascending,
    Descending,
    Any,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventSpec {
    pub kind: EventKind,
    pub direction: Direction,
    pub terminal: bool,
    /// Roots before this x are ignored.
    pub active_after: f64,
}

impl EventSpec {
    pub fn new(kind: EventKind, direction: Direction, terminal: bool) -> Self {
        Self { kind, direction, terminal, active_after: f64::NEG_INFINITY }
    }

    /// Upward crossings of `ψ = 0`, i.e. returns to the Poincaré section.
    pub fn section() -> Self {
        Self::new(EventKind::SectionCrossing, Direction::Ascending, false)
    }

    pub fn turning_points() -> Self {
        Self::new(EventKind::TurningPoint, Direction::Any, false)
    }

    /// Terminal event when `V` drops through `threshold`.
    pub fn lyapunov_below(threshold: f64) -> Self {
        Self::new(EventKind::LyapunovBelow(threshold), Direction::Descending, true)
    }

    pub fn terminal(mut self, terminal: bool) -> Self {
        self.terminal = terminal;
        self
    }

    pub fn after(mut self, x: f64) -> Self {
        self.active_after = x;
        self
    }

    fn g(&self, p: &ModelParams, y: &[f64; 2]) -> f64 {
        match self.kind {
            EventKind::SectionCrossing => y[0],
            EventKind::TurningPoint => y[1],
            EventKind::LyapunovBelow(c) => lyapunov_value(p, PhaseState::from_array(*y)) - c,
        }
    }

    fn fires(&self, g0: f64, g1: f64) -> bool {
        let up = g0 < 0.0 && g1 >= 0.0;
        let down = g0 > 0.0 && g1 <= 0.0;
        match self.direction {
            Direction::Ascending => up,
            Direction::Descending => down,
            Direction::Any => up || down,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventRecord {
    pub x: f64,
    pub state: PhaseState,
    pub kind: EventKind,
    /// Position of the triggering spec in the list passed to the integrator.
    pub spec: usize,
}

/// One accepted step as seen by a caller of [`Integration`].
#[derive(Debug, Clone)]
pub struct Step {
    pub segment: DenseSegment,
    /// End of the valid part of the segment; short of `segment.x1()` only when
    /// a terminal event fired inside it.
    pub x_end: f64,
    pub state_end: PhaseState,
    pub events: Vec<EventRecord>,
    pub terminated: bool,
}

impl Step {
    pub fn eval(&self, x: f64) -> PhaseState {
        PhaseState::from_array(self.segment.eval_array(x))
    }
}

/// Step-by-step integration run.
pub struct Integration<'p> {
    params: &'p ModelParams,
    stepper: Stepper<'p>,
    events: Vec<EventSpec>,
    g_prev: Vec<f64>,
    finished: bool,
}

impl<'p> Integration<'p> {
    pub fn new(
        p: &'p ModelParams,
        s0: PhaseState,
        x_span: (f64, f64),
        cfg: &IntegratorConfig,
        events: &[EventSpec],
    ) -> Result<Self> {
        cfg.validate()?;
        let (x0, x1) = x_span;
        if !(x0.is_finite() && x1.is_finite() && x0 < x1) {
            return Err(Error::InvalidConfig(format!("integration span must satisfy x0 < x1, got ({x0}, {x1})")));
        }
        let max_x = cfg.effective_max_x(p);
        if x1 > max_x {
            return Err(Error::MaxLengthExceeded { requested: x1, max_x });
        }
        if !s0.is_finite() {
            return Err(Error::NonFiniteState { x: x0 });
        }
        let y0 = s0.to_array();
        let stepper = Stepper::new(p, x0, y0, x1, cfg.rel_tol, cfg.abs_tol, cfg.effective_max_step(p));
        let g_prev = events.iter().map(|e| e.g(p, &y0)).collect();
        Ok(Self { params: p, stepper, events: events.to_vec(), g_prev, finished: false })
    }

    pub fn x(&self) -> f64 {
        self.stepper.x
    }

    pub fn state(&self) -> PhaseState {
        PhaseState::from_array(self.stepper.y)
    }

    pub fn step_counts(&self) -> (usize, usize) {
        (self.stepper.accepted, self.stepper.rejected)
    }

    /// Takes one accepted step. `Ok(None)` once the span end or a terminal
    /// event has been reached.
    pub fn next_step(&mut self) -> Result<Option<Step>> {
        if self.finished {
            return Ok(None);
        }
        let Some(seg) = self.stepper.step()? else {
            self.finished = true;
            return Ok(None);
        };
        let y_end = self.stepper.y;
        let x_seg_end = self.stepper.x;
        if !(y_end[0].is_finite() && y_end[1].is_finite()) {
            return Err(Error::NonFiniteState { x: x_seg_end });
        }

        let mut found = Vec::new();
        if !self.events.is_empty() {
            let mut xs = [0.0; EVENT_SUBSAMPLES + 1];
            let mut ys = [[0.0; 2]; EVENT_SUBSAMPLES + 1];
            xs[0] = seg.x0;
            ys[0] = seg.start();
            for j in 1..=EVENT_SUBSAMPLES {
                if j == EVENT_SUBSAMPLES {
                    xs[j] = x_seg_end;
                    ys[j] = y_end;
                } else {
                    xs[j] = seg.x0 + seg.h * j as f64 / EVENT_SUBSAMPLES as f64;
                    ys[j] = seg.eval_array(xs[j]);
                }
            }
            for (i, spec) in self.events.iter().enumerate() {
                let mut g0 = self.g_prev[i];
                for j in 1..=EVENT_SUBSAMPLES {
                    let g1 = spec.g(self.params, &ys[j]);
                    if spec.fires(g0, g1) {
                        let x = refine_root(self.params, spec, &seg, xs[j - 1], g0, xs[j], g1);
                        if x >= spec.active_after {
                            let state = if x == xs[j] {
                                PhaseState::from_array(ys[j])
                            } else {
                                PhaseState::from_array(seg.eval_array(x))
                            };
                            found.push(EventRecord { x, state, kind: spec.kind, spec: i });
                        }
                    }
                    g0 = g1;
                }
                self.g_prev[i] = g0;
            }
            found.sort_by(|a, b| a.x.total_cmp(&b.x));
        }

        let mut step = Step {
            segment: seg,
            x_end: x_seg_end,
            state_end: PhaseState::from_array(y_end),
            events: found,
            terminated: false,
        };
        if let Some(pos) = step.events.iter().position(|e| self.events[e.spec].terminal) {
            step.events.truncate(pos + 1);
            let last = step.events[pos];
            step.x_end = last.x;
            step.state_end = last.state;
            step.terminated = true;
            self.finished = true;
        }
        Ok(Some(step))
    }
}

/// Illinois false-position refinement of an event root inside `(xa, xb]`.
#[allow(clippy::too_many_arguments)]
fn refine_root(
    p: &ModelParams,
    spec: &EventSpec,
    seg: &DenseSegment,
    mut xa: f64,
    mut ga: f64,
    mut xb: f64,
    mut gb: f64,
) -> f64 {
    if gb == 0.0 {
        return xb;
    }
    let tol = 1e-12_f64.max(4.0 * f64::EPSILON * xb.abs());
    let mut side = 0i8;
    for _ in 0..200 {
        if (xb - xa).abs() <= tol {
            break;
        }
        let mut xm = (xa * gb - xb * ga) / (gb - ga);
        if !(xm > xa && xm < xb) {
            xm = 0.5 * (xa + xb);
        }
        let gm = spec.g(p, &seg.eval_array(xm));
        if gm == 0.0 {
            return xm;
        }
        if (gm < 0.0) == (ga < 0.0) {
            xa = xm;
            ga = gm;
            if side == -1 {
                gb *= 0.5;
            }
            side = -1;
        } else {
            xb = xm;
            gb = gm;
            if side == 1 {
                ga *= 0.5;
            }
            side = 1;
        }
    }
    // the root lies in [xa, xb]; report the end that keeps the crossing inside this step
    xb
}

/// How much of a run is stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Recording {
    /// Every accepted node plus the interpolation coefficients.
    #[default]
    Dense,
    /// Only the end points and the event records.
    EventsOnly,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub xs: Vec<f64>,
    pub states: Vec<PhaseState>,
    pub events: Vec<EventRecord>,
    segments: Vec<DenseSegment>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    /// True if a terminal event ended the run before the requested span end.
    pub terminated: bool,
}

impl Trajectory {
    pub fn x_start(&self) -> f64 {
        self.xs[0]
    }

    pub fn x_end(&self) -> f64 {
        *self.xs.last().expect("trajectory has at least one node")
    }

    pub fn final_state(&self) -> PhaseState {
        *self.states.last().expect("trajectory has at least one node")
    }

    pub fn has_dense(&self) -> bool {
        !self.segments.is_empty()
    }

    pub fn segments(&self) -> &[DenseSegment] {
        &self.segments
    }

    pub fn events_of(&self, kind: EventKind) -> impl Iterator<Item = &EventRecord> + '_ {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    /// Dense output at `x`; exact at recorded nodes.
    pub fn eval(&self, x: f64) -> Result<PhaseState> {
        let (start, end) = (self.x_start(), self.x_end());
        if !(x >= start && x <= end) {
            return Err(Error::OutOfSpan { x, start, end });
        }
        let k = self.xs.partition_point(|&xi| xi < x);
        if k < self.xs.len() && self.xs[k] == x {
            return Ok(self.states[k]);
        }
        if self.segments.is_empty() {
            return Err(Error::NoDenseOutput);
        }
        Ok(PhaseState::from_array(self.segments[k - 1].eval_array(x)))
    }

    /// `n ≥ 2` equally spaced samples over the full span.
    pub fn sample_uniform(&self, n: usize) -> Result<Vec<(f64, PhaseState)>> {
        let n = n.max(2);
        let (a, b) = (self.x_start(), self.x_end());
        (0..n)
            .map(|i| {
                let x = if i == n - 1 { b } else { a + (b - a) * i as f64 / (n - 1) as f64 };
                self.eval(x).map(|s| (x, s))
            })
            .collect()
    }
}

/// Integrates the flow from `s0` over `x_span`, locating `events` along the way.
pub fn integrate(
    p: &ModelParams,
    s0: PhaseState,
    x_span: (f64, f64),
    cfg: &IntegratorConfig,
    events: &[EventSpec],
) -> Result<Trajectory> {
    integrate_with(p, s0, x_span, cfg, events, Recording::Dense)
}

pub fn integrate_with(
    p: &ModelParams,
    s0: PhaseState,
    x_span: (f64, f64),
    cfg: &IntegratorConfig,
    events: &[EventSpec],
    recording: Recording,
) -> Result<Trajectory> {
    let mut run = Integration::new(p, s0, x_span, cfg, events)?;
    let mut xs = vec![x_span.0];
    let mut states = vec![s0];
    let mut segments = Vec::new();
    let mut all_events = Vec::new();
    let mut terminated = false;
    while let Some(step) = run.next_step()? {
        all_events.extend_from_slice(&step.events);
        if recording == Recording::Dense {
            xs.push(step.x_end);
            states.push(step.state_end);
            segments.push(step.segment);
        }
        if step.terminated {
            terminated = true;
            if recording == Recording::EventsOnly {
                xs.push(step.x_end);
                states.push(step.state_end);
            }
        }
    }
    if recording == Recording::EventsOnly && !terminated {
        xs.push(run.x());
        states.push(run.state());
    }
    // a terminal event exactly at a node can leave a zero-length final interval
    if xs.len() >= 2 && xs[xs.len() - 1] <= xs[xs.len() - 2] {
        xs.pop();
        states.pop();
        if recording == Recording::Dense {
            segments.pop();
        }
    }
    let (accepted_steps, rejected_steps) = run.step_counts();
    Ok(Trajectory { xs, states, events: all_events, segments, accepted_steps, rejected_steps, terminated })
}

/// Dense evaluation of a stored trajectory.
pub fn evaluate_dense(t: &Trajectory, x: f64) -> Result<PhaseState> {
    t.eval(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn harmonic() -> ModelParams {
        ModelParams::linear(0.0, 8.0).unwrap()
    }

    #[test]
    fn harmonic_period_returns_to_start() {
        let p = harmonic();
        let t = integrate(&p, PhaseState::new(0.0, 1.0), (0.0, 2.0 * PI / 4.0), &IntegratorConfig::default(), &[])
            .unwrap();
        let end = t.final_state();
        assert!(end.psi.abs() < 1e-9, "{end:?}");
        assert!((end.v - 1.0).abs() < 1e-9, "{end:?}");
    }

    #[test]
    fn dense_output_matches_sine() {
        let p = harmonic();
        let t = integrate(&p, PhaseState::new(0.0, 1.0), (0.0, 20.0), &IntegratorConfig::default(), &[]).unwrap();
        for k in 0..t.xs.len() - 1 {
            let x = 0.5 * (t.xs[k] + t.xs[k + 1]);
            let s = t.eval(x).unwrap();
            assert!((s.psi - (4.0 * x).sin() / 4.0).abs() < 1e-9);
            assert!((s.v - (4.0 * x).cos()).abs() < 1e-9);
        }
    }

    #[test]
    fn nodes_are_reproduced_exactly() {
        let p = ModelParams::reference(-0.5);
        let t = integrate(&p, PhaseState::new(0.0, 10.0), (0.0, 10.0), &IntegratorConfig::default(), &[]).unwrap();
        for (x, s) in t.xs.iter().zip(&t.states) {
            assert_eq!(t.eval(*x).unwrap(), *s);
        }
        // and the interpolant agrees with the node from the left
        let seg = &t.segments()[3];
        let y = seg.eval_array(seg.x1());
        assert!((y[0] - t.states[4].psi).abs() < 1e-12 && (y[1] - t.states[4].v).abs() < 1e-12);
    }

    #[test]
    fn out_of_span() {
        let p = harmonic();
        let t = integrate(&p, PhaseState::new(0.0, 1.0), (0.0, 1.0), &IntegratorConfig::default(), &[]).unwrap();
        assert!(matches!(t.eval(1.0 + 1e-9), Err(Error::OutOfSpan { .. })));
        assert!(matches!(t.eval(-1e-9), Err(Error::OutOfSpan { .. })));
    }

    #[test]
    fn span_beyond_cap_is_rejected() {
        let p = harmonic();
        let r = integrate(&p, PhaseState::new(0.0, 1.0), (0.0, 3000.0), &IntegratorConfig::default(), &[]);
        assert!(matches!(r, Err(Error::MaxLengthExceeded { .. })));
    }

    #[test]
    fn bad_tolerances_rejected() {
        let p = harmonic();
        let cfg = IntegratorConfig::with_tolerances(1e-2, 1e-12);
        assert!(matches!(
            integrate(&p, PhaseState::new(0.0, 1.0), (0.0, 1.0), &cfg, &[]),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn section_events_in_harmonic_limit() {
        let p = harmonic();
        let t = integrate(&p, PhaseState::new(0.0, 1.0), (0.0, 10.0), &IntegratorConfig::default(), &[EventSpec::section()])
            .unwrap();
        // start point is not an event; returns at multiples of π/2
        let xs: Vec<f64> = t.events.iter().map(|e| e.x).collect();
        assert_eq!(xs.len(), 6);
        for (k, x) in xs.iter().enumerate() {
            assert!((x - (k + 1) as f64 * PI / 2.0).abs() < 1e-9, "{x}");
        }
    }

    #[test]
    fn turning_points_harmonic() {
        let p = harmonic();
        let t = integrate(&p, PhaseState::new(0.0, 1.0), (0.0, 3.0), &IntegratorConfig::default(), &[EventSpec::turning_points()])
            .unwrap();
        for (k, e) in t.events.iter().enumerate() {
            assert!((e.x - (2 * k + 1) as f64 * PI / 8.0).abs() < 1e-9);
            assert!((e.state.psi.abs() - 0.25).abs() < 1e-10);
        }
    }

    #[test]
    fn terminal_decay_event() {
        let p = ModelParams::reference(-2.5);
        let t = integrate(
            &p,
            PhaseState::new(0.0, 6.0),
            (0.0, 200.0),
            &IntegratorConfig::default(),
            &[EventSpec::lyapunov_below(1e-16)],
        )
        .unwrap();
        assert!(t.terminated);
        let last = t.events.last().unwrap();
        assert!(last.x < 200.0);
        let v = lyapunov_value(&p, last.state);
        assert!((v - 1e-16).abs() < 1e-18, "{v}");
        assert_eq!(t.x_end(), last.x);
    }

    #[test]
    fn active_after_guard() {
        let p = harmonic();
        let ev = EventSpec::section().after(2.0);
        let t = integrate(&p, PhaseState::new(0.0, 1.0), (0.0, 4.0), &IntegratorConfig::default(), &[ev]).unwrap();
        assert!(t.events.iter().all(|e| e.x >= 2.0));
        assert_eq!(t.events.len(), 1);
    }

    #[test]
    fn events_only_keeps_end_points() {
        let p = ModelParams::reference(0.2);
        let cfg = IntegratorConfig::default();
        let dense = integrate(&p, PhaseState::new(0.0, 2.0), (0.0, 30.0), &cfg, &[EventSpec::turning_points()]).unwrap();
        let lean = integrate_with(&p, PhaseState::new(0.0, 2.0), (0.0, 30.0), &cfg, &[EventSpec::turning_points()], Recording::EventsOnly)
            .unwrap();
        assert_eq!(lean.xs.len(), 2);
        assert_eq!(lean.final_state(), dense.final_state());
        assert_eq!(lean.events, dense.events);
        assert!(matches!(lean.eval(15.0), Err(Error::NoDenseOutput)));
    }
}
