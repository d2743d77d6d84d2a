//! Run configuration: one TOML file with a section per concern. Unknown keys
//! are rejected everywhere, and [`RunConfig::finalize`] writes every implicit
//! default back into the struct so datasets can record exactly what ran.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use skinflow::basin::SlopeDensity;
use skinflow::poincare::{ContinuationConfig, PoincareConfig};
use skinflow::shooting::ClassifierConfig;
use skinflow::sweep::SweepConfig;
use skinflow::{IntegratorConfig, ModelParams};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub a: f64,
    pub b: f64,
    pub energy: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { a: 0.5, b: 1.0 / 32.0, energy: 8.0 }
    }
}

impl ModelSection {
    pub fn params(&self, gamma: f64) -> CliResult<ModelParams> {
        Ok(ModelParams::new(gamma, self.a, self.b, self.energy)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictSection {
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub n_points: usize,
    /// Explicit γ values; replaces the uniform grid when present.
    pub gammas: Option<Vec<f64>>,
}

impl Default for PredictSection {
    fn default() -> Self {
        Self { gamma_min: -1.2, gamma_max: 0.6, n_points: 181, gammas: None }
    }
}

impl PredictSection {
    pub fn grid(&self) -> Vec<f64> {
        match &self.gammas {
            Some(g) => g.clone(),
            None => uniform(self.gamma_min, self.gamma_max, self.n_points),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectorySection {
    pub gamma: f64,
    pub slope: f64,
    /// Integration length; defaults to the classifier's base length.
    pub length: Option<f64>,
    pub samples: usize,
}

impl Default for TrajectorySection {
    fn default() -> Self {
        Self { gamma: -0.5, slope: 8.69756, length: None, samples: 4001 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensitySpec {
    /// `s0` defaults to `sqrt(2E)`.
    Cauchy { s0: Option<f64> },
    Tabulated { grid: Vec<f64>, values: Vec<f64> },
    /// CSV with a header row and two columns `s, density`; `#` starts a comment.
    File { path: PathBuf },
}

impl Default for DensitySpec {
    fn default() -> Self {
        DensitySpec::Cauchy { s0: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasinSection {
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub step: f64,
    pub tol_s: f64,
    /// Offset above the fold at which the jump is measured.
    pub fold_delta: f64,
    pub density: DensitySpec,
}

impl Default for BasinSection {
    fn default() -> Self {
        Self { gamma_min: -1.3, gamma_max: 0.3, step: 0.05, tol_s: 1e-6, fold_delta: 1e-4, density: DensitySpec::default() }
    }
}

impl BasinSection {
    pub fn grid(&self) -> Vec<f64> {
        let n = ((self.gamma_max - self.gamma_min) / self.step + 1e-9).floor() as usize + 1;
        (0..n).map(|k| self.gamma_min + self.step * k as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepDirections {
    Both,
    Down,
    Up,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attractor {
    Skin,
    Extended,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub gamma_high: f64,
    pub gamma_low: f64,
    pub direction: SweepDirections,
    pub down_start: Attractor,
    pub up_start: Attractor,
    pub n_steps: usize,
    pub relax_periods: f64,
    pub noise: f64,
    pub seed: u64,
    pub skin_threshold: Option<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        let d = SweepConfig::default();
        Self {
            gamma_high: 0.5,
            gamma_low: -1.5,
            direction: SweepDirections::Both,
            down_start: Attractor::Extended,
            up_start: Attractor::Skin,
            n_steps: d.n_steps,
            relax_periods: d.relax_periods,
            noise: d.noise,
            seed: d.seed,
            skin_threshold: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn extension(&self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub format: Format,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), format: Format::Csv }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub integrator: IntegratorConfig,
    pub classifier: ClassifierConfig,
    pub poincare: PoincareConfig,
    pub predict: PredictSection,
    pub bifurcation: ContinuationConfig,
    pub trajectory: TrajectorySection,
    pub basin: BasinSection,
    pub sweep: SweepSection,
    pub output: OutputSection,
}

fn uniform(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|k| if k == n - 1 { hi } else { lo + (hi - lo) * k as f64 / (n - 1) as f64 }).collect(),
    }
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    /// Parses, materializes defaults and validates a TOML config.
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let raw: RunConfig = toml::from_str(text).map_err(|e| bad(e.to_string()))?;
        raw.finalize()
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => bad(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Fills every model-dependent default in place, then validates.
    pub fn finalize(mut self) -> CliResult<Self> {
        let p = self.model.params(0.0)?;
        for ic in [&mut self.integrator, &mut self.poincare.integrator] {
            ic.max_step = Some(ic.effective_max_step(&p));
            ic.max_x = Some(ic.effective_max_x(&p));
        }
        self.classifier.integrator = self.integrator;
        self.classifier.base_length = Some(self.classifier.base_length_for(&p));
        self.bifurcation.gamma_floor.get_or_insert(-p.a * p.a / (4.0 * p.b));
        self.trajectory.length.get_or_insert(self.classifier.base_length_for(&p));
        if let DensitySpec::Cauchy { s0 } = &mut self.basin.density {
            s0.get_or_insert(p.omega());
        }
        self.sweep.skin_threshold.get_or_insert(0.1 * (p.a / p.b).sqrt());
        self.validate(&p)?;
        Ok(self)
    }

    fn validate(&self, p: &ModelParams) -> CliResult<()> {
        self.integrator.validate()?;
        self.classifier.validate_for(p)?;
        self.poincare.validate()?;
        self.bifurcation.validate()?;
        if !(self.bifurcation.gamma_start > self.bifurcation.gamma_stop) {
            return Err(bad(format!(
                "bifurcation: empty gamma range (gamma_start {} must exceed gamma_stop {})",
                self.bifurcation.gamma_start, self.bifurcation.gamma_stop
            )));
        }
        self.sweep_config().validate()?;

        let pr = &self.predict;
        match &pr.gammas {
            Some(g) if g.is_empty() => return Err(bad("predict.gammas is empty")),
            Some(g) if g.iter().any(|x| !x.is_finite()) => return Err(bad("predict.gammas must be finite")),
            Some(_) => {}
            None if !(pr.gamma_min < pr.gamma_max) || pr.n_points < 2 => {
                return Err(bad(format!(
                    "predict: empty grid [{}, {}] with {} points",
                    pr.gamma_min, pr.gamma_max, pr.n_points
                )))
            }
            None => {}
        }

        let t = &self.trajectory;
        if !(t.gamma.is_finite() && t.slope.is_finite()) {
            return Err(bad("trajectory.gamma and trajectory.slope must be finite"));
        }
        let length = t.length.unwrap_or(0.0);
        if !(length > 0.0 && length <= self.integrator.effective_max_x(p)) {
            return Err(bad(format!(
                "trajectory.length must lie in (0, integrator.max_x = {}], got {length}",
                self.integrator.effective_max_x(p)
            )));
        }
        if t.samples < 2 {
            return Err(bad("trajectory.samples must be >= 2"));
        }

        let b = &self.basin;
        if !(b.gamma_min < b.gamma_max && b.step > 0.0 && b.step.is_finite()) {
            return Err(bad(format!("basin: empty grid [{}, {}] with step {}", b.gamma_min, b.gamma_max, b.step)));
        }
        if b.grid().len() > 100_000 {
            return Err(bad("basin grid has more than 100000 points"));
        }
        if !(b.tol_s > 0.0 && b.fold_delta > 0.0) {
            return Err(bad("basin.tol_s and basin.fold_delta must be > 0"));
        }
        match &b.density {
            DensitySpec::Cauchy { s0 } => {
                SlopeDensity::cauchy(s0.unwrap_or(p.omega()))?;
            }
            DensitySpec::Tabulated { grid, values } => {
                SlopeDensity::tabulated(grid.clone(), values.clone())?;
            }
            // read and checked when the basin command runs
            DensitySpec::File { .. } => {}
        }

        let s = &self.sweep;
        if !(s.gamma_high > s.gamma_low) {
            return Err(bad(format!("sweep: gamma_high {} must exceed gamma_low {}", s.gamma_high, s.gamma_low)));
        }
        Ok(())
    }

    pub fn sweep_config(&self) -> SweepConfig {
        SweepConfig {
            n_steps: self.sweep.n_steps,
            relax_periods: self.sweep.relax_periods,
            noise: self.sweep.noise,
            seed: self.sweep.seed,
            skin_threshold: self.sweep.skin_threshold,
            integrator: self.integrator,
        }
    }

    pub fn density(&self) -> CliResult<SlopeDensity> {
        let p = self.model.params(0.0)?;
        match &self.basin.density {
            DensitySpec::Cauchy { s0 } => Ok(SlopeDensity::cauchy(s0.unwrap_or(p.omega()))?),
            DensitySpec::Tabulated { grid, values } => Ok(SlopeDensity::tabulated(grid.clone(), values.clone())?),
            DensitySpec::File { path } => read_density(path),
        }
    }

    /// Canonical JSON of the effective config; the hash in manifests is taken over this.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

/// Reads a two-column `s, density` table.
pub fn read_density(path: &Path) -> CliResult<SlopeDensity> {
    let err = |m: String| bad(format!("density file {}: {m}", path.display()));
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| err(e.to_string()))?;
    let (mut grid, mut values) = (Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| err(e.to_string()))?;
        if rec.len() != 2 {
            return Err(err(format!("row {} has {} fields, expected 2", i + 1, rec.len())));
        }
        let num = |k: usize| rec[k].parse::<f64>().map_err(|e| err(format!("row {}: '{}': {e}", i + 1, &rec[k])));
        grid.push(num(0)?);
        values.push(num(1)?);
    }
    SlopeDensity::tabulated(grid, values).map_err(|e| err(e.to_string()))
}
