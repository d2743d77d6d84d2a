use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use skinflow::averaging::{branch_amplitudes, gamma_c_theory};
use skinflow::basin::{basin_scan, jump_at_fold, BasinPoint};
use skinflow::model::origin_eigenvalues;
use skinflow::poincare::{cycle_at, find_cycle, scan_cycles, trace_reference_branch_partial, Branch, Stability};
use skinflow::shooting::{classify, shoot};
use skinflow::sweep::{near_origin, quasi_static_sweep, SweepResult};
use skinflow::{integrate, IntegratorConfig, PhaseState};

use crate::config::{Attractor, Format, RunConfig, SweepDirections};
use crate::dataset::Dataset;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    Fig1,
    Fig2,
    Fig3,
    Fig4,
}

impl Figure {
    pub fn parse(id: &str) -> CliResult<Self> {
        match id {
            "fig1" => Ok(Figure::Fig1),
            "fig2" => Ok(Figure::Fig2),
            "fig3" => Ok(Figure::Fig3),
            "fig4" => Ok(Figure::Fig4),
            other => Err(CliError::UnknownFigure(other.to_string())),
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            Figure::Fig1 => "fig1",
            Figure::Fig2 => "fig2",
            Figure::Fig3 => "fig3",
            Figure::Fig4 => "fig4",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Predict,
    Bifurcation,
    Trajectory,
    Basin,
    Sweep,
    Reproduce(Figure),
}

impl Command {
    fn label(&self) -> String {
        match self {
            Command::Predict => "predict".into(),
            Command::Bifurcation => "bifurcation".into(),
            Command::Trajectory => "trajectory".into(),
            Command::Basin => "basin".into(),
            Command::Sweep => "sweep".into(),
            Command::Reproduce(f) => format!("reproduce {}", f.id()),
        }
    }
}

pub fn config_sha256(cfg: &RunConfig) -> String {
    Sha256::digest(cfg.canonical_json().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes datasets as they are produced and the manifest at the end.
struct Session {
    dir: PathBuf,
    format: Format,
    config: Value,
    manifest: Value,
    entries: Vec<Value>,
    started: Instant,
    lap: Instant,
}

impl Session {
    fn new(cfg: &RunConfig, command: &Command) -> CliResult<Self> {
        let dir = cfg.output.dir.clone();
        std::fs::create_dir_all(&dir).map_err(|source| CliError::Io { path: dir.clone(), source })?;
        let config = serde_json::to_value(cfg).expect("config serializes");
        let manifest = json!({
            "command": command.label(),
            "version": env!("CARGO_PKG_VERSION"),
            "config_sha256": config_sha256(cfg),
            "config": config,
        });
        let now = Instant::now();
        Ok(Self { dir, format: cfg.output.format, config, manifest, entries: Vec::new(), started: now, lap: now })
    }

    /// Writes one dataset; its runtime is the time since the previous emit.
    fn emit(&mut self, ds: Dataset) -> CliResult<()> {
        let path = ds.write(&self.dir, self.format, &self.config)?;
        let runtime = self.lap.elapsed().as_secs_f64();
        self.entries.push(json!({
            "name": ds.name,
            "file": path.file_name().map(|f| f.to_string_lossy().into_owned()),
            "rows": ds.rows.len(),
            "runtime_s": runtime,
        }));
        self.lap = Instant::now();
        Ok(())
    }

    fn finish(mut self, failure: Option<CliError>) -> CliResult<()> {
        let m = self.manifest.as_object_mut().expect("manifest is an object");
        m.insert("datasets".into(), Value::Array(self.entries));
        m.insert("total_runtime_s".into(), json!(self.started.elapsed().as_secs_f64()));
        m.insert("status".into(), json!(failure.as_ref().map_or("ok".to_string(), |e| e.to_string())));
        let path = self.dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        std::fs::write(&path, text + "\n").map_err(|source| CliError::Io { path, source })?;
        failure.map_or(Ok(()), Err)
    }
}

/// Runs `command` with an already finalized config.
pub fn run(command: Command, cfg: &RunConfig) -> CliResult<()> {
    let mut session = Session::new(cfg, &command)?;
    let failure = match dispatch(command, cfg, &mut session) {
        Ok(()) => None,
        Err(e @ CliError::Numerical(_)) => Some(e),
        Err(e) => return Err(e),
    };
    session.finish(failure)
}

fn dispatch(command: Command, cfg: &RunConfig, s: &mut Session) -> CliResult<()> {
    match command {
        Command::Predict => s.emit(predict(cfg, "predict", &cfg.predict.grid())?),
        Command::Bifurcation => bifurcation(cfg, "bifurcation", s).map(|_| ()),
        Command::Trajectory => {
            let t = &cfg.trajectory;
            s.emit(trajectory(cfg, "trajectory", t.gamma, t.slope)?)
        }
        Command::Basin => basin(cfg, "basin", s),
        Command::Sweep => sweep(cfg, "sweep", s),
        Command::Reproduce(fig) => reproduce(fig, cfg, s),
    }
}

fn reproduce(fig: Figure, cfg: &RunConfig, s: &mut Session) -> CliResult<()> {
    match fig {
        Figure::Fig1 => {
            s.emit(origin_stability(cfg, "fig1_origin")?)?;
            bifurcation(cfg, "fig1", s).map(|_| ())
        }
        Figure::Fig2 => {
            let panels: [(&str, f64, Option<f64>); 9] = [
                ("fig2a_portrait", -1.2, None),
                ("fig2b_profile", -1.2, Some(6.0)),
                ("fig2c_portrait", -0.5, None),
                ("fig2d_profile", -0.5, Some(7.0)),
                ("fig2e_profile", -0.5, Some(8.69755)),
                ("fig2f_profile", -0.5, Some(8.69756)),
                ("fig2g_profile", -0.5, Some(10.0)),
                ("fig2h_portrait", 0.2, None),
                ("fig2i_profile", 0.2, Some(2.0)),
            ];
            for (name, gamma, slope) in panels {
                let ds = match slope {
                    Some(sl) => trajectory(cfg, name, gamma, sl)?,
                    None => portrait(cfg, name, gamma)?,
                };
                s.emit(ds)?;
            }
            Ok(())
        }
        Figure::Fig3 => {
            s.emit(predict(cfg, "fig3_theory", &cfg.predict.grid())?)?;
            bifurcation(cfg, "fig3", s).map(|_| ())
        }
        Figure::Fig4 => basin(cfg, "fig4", s),
    }
}

fn opt_json(x: Option<f64>) -> Value {
    x.map_or(Value::Null, |v| json!(v))
}

pub fn predict(cfg: &RunConfig, name: &str, grid: &[f64]) -> CliResult<Dataset> {
    let mut ds = Dataset::new(
        name,
        &["gamma", "a_in", "a_out", "gamma_c_th", "regime", "validity_in", "validity_out"],
    );
    for &gamma in grid {
        let t = branch_amplitudes(&cfg.model.params(gamma)?);
        ds.push(vec![
            gamma.into(),
            t.a_in.into(),
            t.a_out.into(),
            t.gamma_c_th.into(),
            t.regime.as_str().into(),
            t.validity_in.into(),
            t.validity_out.into(),
        ]);
    }
    Ok(ds)
}

fn origin_stability(cfg: &RunConfig, name: &str) -> CliResult<Dataset> {
    let mut ds = Dataset::new(name, &["gamma", "trace", "determinant", "re_lambda_max", "stability"]);
    for gamma in cfg.predict.grid() {
        let p = cfg.model.params(gamma)?;
        let e = origin_eigenvalues(&p);
        let re = e.lambda_plus.re.max(e.lambda_minus.re);
        let label = if re < 0.0 {
            "stable"
        } else if re > 0.0 {
            "unstable"
        } else {
            "marginal"
        };
        ds.push(vec![gamma.into(), (2.0 * gamma).into(), (2.0 * p.energy).into(), re.into(), label.into()]);
    }
    Ok(ds)
}

/// Traces the reference branch; emits `<prefix>_branch` and `<prefix>_fold`
/// even when continuation stops on an error part-way.
fn bifurcation(cfg: &RunConfig, prefix: &str, s: &mut Session) -> CliResult<Branch> {
    let p = cfg.model.params(cfg.bifurcation.gamma_start)?;
    let (branch, err) = trace_reference_branch_partial(&p, &cfg.bifurcation, &cfg.poincare)?;
    s.emit(branch_dataset(&branch, &format!("{prefix}_branch")))?;
    if let Some(e) = err {
        return Err(e.into());
    }
    let mut fold = Dataset::new(
        format!("{prefix}_fold"),
        &["gamma_c", "s_c", "multiplier", "amplitude", "gamma_c_th", "amplitude_th", "s_c_th"],
    );
    let a_th = (p.a / p.b).sqrt();
    match branch.fold {
        Some(f) => fold.push(vec![
            f.gamma_c.into(),
            f.s_c.into(),
            f.multiplier.into(),
            f.amplitude.into(),
            gamma_c_theory(&p).into(),
            a_th.into(),
            (p.omega() * a_th).into(),
        ]),
        None => {
            s.emit(fold)?;
            return Err(CliError::Numerical(format!("branch ended ({}) without a fold", branch.stop_reason)));
        }
    }
    s.emit(fold)?;
    Ok(branch)
}

fn branch_dataset(branch: &Branch, name: &str) -> Dataset {
    let mut ds = Dataset::new(
        name,
        &[
            "index",
            "segment",
            "gamma",
            "s_fixed",
            "amplitude",
            "period",
            "multiplier",
            "stability",
            "amplitude_th",
            "rel_deviation",
            "tangent_s",
            "tangent_gamma",
        ],
    );
    let (upper, _) = branch.split_at_fold();
    for (i, bp) in branch.points.iter().enumerate() {
        let outer = i < upper.len();
        let th = branch_amplitudes(&branch.params.with_gamma(bp.gamma));
        let a_th = if outer { th.a_out } else { th.a_in };
        let dev = a_th.map(|a| (bp.cycle.amplitude - a) / a);
        ds.push(vec![
            i.into(),
            if outer { "outer" } else { "inner" }.into(),
            bp.gamma.into(),
            bp.cycle.s_fixed.into(),
            bp.cycle.amplitude.into(),
            bp.cycle.period.into(),
            bp.cycle.multiplier.into(),
            bp.cycle.stability.as_str().into(),
            a_th.into(),
            dev.into(),
            bp.tangent.0.into(),
            bp.tangent.1.into(),
        ]);
    }
    ds.with_meta(json!({ "stop_reason": branch.stop_reason, "points": branch.points.len() }))
}

pub fn trajectory(cfg: &RunConfig, name: &str, gamma: f64, slope: f64) -> CliResult<Dataset> {
    let p = cfg.model.params(gamma)?;
    let length = cfg.trajectory.length.expect("materialized by finalize");
    let shot = classify(&p, slope, &cfg.classifier);
    let t = shoot(&p, slope, length, &cfg.integrator)?;
    let scale = p.omega();
    let mut ds = Dataset::new(name, &["x", "psi", "v", "v_norm"]);
    for (x, st) in t.sample_uniform(cfg.trajectory.samples)? {
        ds.push(vec![x.into(), st.psi.into(), st.v.into(), (st.v / scale).into()]);
    }
    let th = branch_amplitudes(&p);
    Ok(ds.with_meta(json!({
        "gamma": gamma,
        "slope": slope,
        "length": length,
        "classification": shot,
        "guide_a_in": opt_json(th.a_in),
        "guide_a_out": opt_json(th.a_out),
        "v_norm_scale": scale,
    })))
}

/// Flow portrait in `(ψ, v/√(2E))`: orbits from section starts plus every
/// limit cycle found by a root scan.
pub fn portrait(cfg: &RunConfig, name: &str, gamma: f64) -> CliResult<Dataset> {
    let p = cfg.model.params(gamma)?;
    let omega = p.omega();
    let t_h = p.harmonic_period();
    let a_scale = (p.a / p.b).sqrt();
    let mut ds = Dataset::new(name, &["curve", "kind", "x", "psi", "v_norm"]);
    let mut curve = 0usize;
    let mut add = |ds: &mut Dataset, kind: &str, pts: Vec<(f64, PhaseState)>| {
        for (x, st) in pts {
            ds.push(vec![curve.into(), kind.into(), x.into(), st.psi.into(), (st.v / omega).into()]);
        }
        curve += 1;
    };
    let orbit_cfg = IntegratorConfig { max_x: None, ..cfg.integrator };
    for k in 1..=8 {
        let s0 = omega * a_scale * 0.25 * k as f64;
        let t = integrate(&p, PhaseState::from_slope(s0), (0.0, 10.0 * t_h), &orbit_cfg, &[])?;
        add(&mut ds, "orbit", t.sample_uniform(1001)?);
    }
    let roots = scan_cycles(&p, 1e-2 * omega, 3.0 * omega * a_scale, 240, &cfg.poincare)?;
    let mut cycles = Vec::new();
    for r in &roots {
        let lc = cycle_at(&p, *r, &cfg.poincare)?;
        let t = integrate(&p, PhaseState::from_slope(lc.s_fixed), (0.0, lc.period), &cfg.poincare.integrator, &[])?;
        let kind = match lc.stability {
            Stability::Stable => "stable_cycle",
            Stability::Unstable => "unstable_cycle",
            Stability::Nonhyperbolic => "nonhyperbolic_cycle",
        };
        add(&mut ds, kind, t.sample_uniform(401)?);
        cycles.push(json!({ "s_fixed": lc.s_fixed, "amplitude": lc.amplitude, "multiplier": lc.multiplier, "stability": lc.stability.as_str() }));
    }
    Ok(ds.with_meta(json!({ "gamma": gamma, "cycles": cycles, "v_norm_scale": omega })))
}

fn basin(cfg: &RunConfig, prefix: &str, s: &mut Session) -> CliResult<()> {
    let density = cfg.density()?;
    let p = cfg.model.params(cfg.bifurcation.gamma_start)?;
    let (branch, err) = trace_reference_branch_partial(&p, &cfg.bifurcation, &cfg.poincare)?;
    if let Some(e) = err {
        return Err(CliError::Numerical(format!("locating the fold: {e}")));
    }
    let fold = branch.fold.ok_or_else(|| CliError::Numerical("reference branch has no fold".into()))?;
    let grid = cfg.basin.grid();
    let pts = basin_scan(&p, &grid, &density, &fold, cfg.basin.tol_s, &cfg.classifier);
    let mut ds = Dataset::new(format!("{prefix}_points"), &["gamma", "s_star", "p_skin", "bisection_width", "status"]);
    for b in &pts {
        ds.push(vec![
            b.gamma.into(),
            b.s_star.into(),
            b.p_skin.into(),
            b.bisection_width.into(),
            b.error.clone().unwrap_or_else(|| "ok".into()).into(),
        ]);
    }
    s.emit(ds.with_meta(json!({ "density": density, "gamma_c": fold.gamma_c, "s_c": fold.s_c })))?;

    let flank = |pred: &dyn Fn(&BasinPoint) -> bool, last: bool| {
        let mut it = pts.iter().filter(|b| pred(b));
        if last { it.last() } else { it.next() }.map(|b| (b.gamma, b.p_skin))
    };
    let left = flank(&|b| b.gamma < fold.gamma_c, true);
    let right = flank(&|b| b.gamma > fold.gamma_c, false);
    let jump = jump_at_fold(&p, &fold, &density, cfg.basin.fold_delta, cfg.basin.tol_s, &cfg.classifier);
    let mut jd = Dataset::new(
        format!("{prefix}_jump"),
        &["gamma_c", "s_c", "gamma", "s_star", "p_skin_above", "jump", "grid_gamma_left", "grid_gamma_right", "grid_jump"],
    );
    let grid_jump = left.zip(right).map(|(l, r)| l.1 - r.1);
    let (jg, js, jp, jj) = match &jump {
        Ok(j) => (Some(j.gamma), Some(j.s_star), Some(j.p_skin_above), Some(j.jump)),
        Err(_) => (None, None, None, None),
    };
    jd.push(vec![
        fold.gamma_c.into(),
        fold.s_c.into(),
        jg.into(),
        js.into(),
        jp.into(),
        jj.into(),
        left.map(|l| l.0).into(),
        right.map(|r| r.0).into(),
        grid_jump.into(),
    ]);
    s.emit(jd)?;
    if let Err(e) = jump {
        return Err(CliError::Numerical(format!("jump at the fold: {e}")));
    }
    let failed = pts.iter().filter(|b| b.error.is_some()).count();
    if failed > 0 {
        return Err(CliError::Numerical(format!("{failed} of {} basin points failed", pts.len())));
    }
    Ok(())
}

fn start_state(cfg: &RunConfig, gamma: f64, which: Attractor) -> CliResult<PhaseState> {
    let p = cfg.model.params(gamma)?;
    match which {
        Attractor::Skin => Ok(near_origin(&p)),
        Attractor::Extended => {
            let a_out = branch_amplitudes(&p)
                .a_out
                .ok_or_else(|| CliError::Config(format!("no extended attractor at gamma = {gamma}")))?;
            let lc = find_cycle(&p, p.omega() * a_out, &cfg.poincare)?;
            Ok(PhaseState::from_slope(lc.s_fixed))
        }
    }
}

fn sweep(cfg: &RunConfig, prefix: &str, s: &mut Session) -> CliResult<()> {
    let sc = cfg.sweep_config();
    let sw = &cfg.sweep;
    let p = cfg.model.params(sw.gamma_high)?;
    let mut runs: Vec<SweepResult> = Vec::new();
    if matches!(sw.direction, SweepDirections::Both | SweepDirections::Down) {
        let init = start_state(cfg, sw.gamma_high, sw.down_start)?;
        runs.push(quasi_static_sweep(&p, sw.gamma_high, sw.gamma_low, init, &sc)?);
    }
    if matches!(sw.direction, SweepDirections::Both | SweepDirections::Up) {
        let init = start_state(cfg, sw.gamma_low, sw.up_start)?;
        runs.push(quasi_static_sweep(&p, sw.gamma_low, sw.gamma_high, init, &sc)?);
    }
    let mut ds = Dataset::new(
        format!("{prefix}_records"),
        &["direction", "step", "gamma", "psi_end", "v_end", "amplitude", "v_ratio_tail", "label"],
    );
    let mut summary = Dataset::new(format!("{prefix}_summary"), &["direction", "switch_gamma", "label_changes"]);
    for r in &runs {
        for (k, rec) in r.records.iter().enumerate() {
            ds.push(vec![
                r.direction.as_str().into(),
                k.into(),
                rec.gamma.into(),
                rec.end_state.psi.into(),
                rec.end_state.v.into(),
                rec.amplitude_estimate.into(),
                rec.v_ratio_tail.into(),
                rec.label.as_str().into(),
            ]);
        }
        summary.push(vec![r.direction.as_str().into(), r.switch_gamma.into(), r.label_changes.into()]);
    }
    s.emit(ds)?;
    s.emit(summary)
}

/// Reads back a manifest's embedded config.
pub fn config_from_manifest(path: &Path) -> CliResult<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    let v: Value = serde_json::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?;
    let cfg: RunConfig = serde_json::from_value(v["config"].clone()).map_err(|e| CliError::Config(e.to_string()))?;
    cfg.finalize()
}
