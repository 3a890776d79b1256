//! Staged experiment pipeline: phantom → forward → noise → project →
//! reconstruct → evaluate → export.
//!
//! Every stage writes into its own directory under the run root and finishes
//! by writing `stage.toml`, which records the configuration keys the stage
//! depends on and the content hashes of the stage directories it read. A
//! stage refuses to read a predecessor that is missing, was produced with
//! different settings, or whose own inputs changed since.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::dataprep::{prepare, ProjectedData};
use crate::error::{Error, Result};
use crate::forward::{add_noise, extended_lattice, simulate, NoiseMode, SourceLine, TravelTimeData, DEFAULT_PAD};
use crate::grid::{Axis, Geometry, GridSpec, ScalarField3};
use crate::inversion::{
    initialize_w, minimize, AlphaRule, FunctionalParams, InversionProblem, Method, OptimizerSettings,
    ReconstructionResult,
};
use crate::io::{self, F3d, NoiseRecord};
use crate::metrics::{self, Metrics};
use crate::phantoms::{Phantom, PhantomSpec};

pub const STAGE_FILE: &str = "stage.toml";

/// Every tunable of an experiment. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub sources: usize,
    pub detector_step: f64,
    /// Step of the fast-marching lattice.
    pub forward_step: f64,
    /// Margin of the fast-marching lattice around the domain.
    pub forward_pad: f64,
    /// Transverse step `h` of the inversion grid (`1/h` must be an integer).
    pub inversion_h: f64,
    /// Truncation order `N`.
    pub order: usize,
    pub lambda: f64,
    pub beta: f64,
    pub delta: f64,
    pub seed: u64,
    pub noise_mode: NoiseMode,
    pub method: Method,
    pub grad_tol: f64,
    pub max_iter: usize,
    pub alpha_rule: AlphaRule,
    pub geometry: Geometry,
    pub phantom: PhantomSpec,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            sources: 101,
            detector_step: 1.0 / 20.0,
            forward_step: 1.0 / 30.0,
            forward_pad: DEFAULT_PAD,
            inversion_h: 1.0 / 10.0,
            order: 6,
            lambda: 4.0,
            beta: 1e-4,
            delta: 0.05,
            seed: 1,
            noise_mode: NoiseMode::PerSource,
            method: Method::Lbfgs,
            grad_tol: 1e-6,
            max_iter: 400,
            alpha_rule: AlphaRule::default(),
            geometry: Geometry::default(),
            phantom: PhantomSpec::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::format("configuration", e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Cheap consistency checks; the stages validate the rest.
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        Phantom::from_spec(&self.phantom, &self.geometry)?;
        let k = 1.0 / self.inversion_h;
        if !((k - k.round()).abs() < 1e-9) {
            return Err(Error::invalid(format!("1/inversion_h = {k} is not an integer")));
        }
        self.grid()?;
        if self.sources < 2 {
            return Err(Error::invalid("at least two sources are required"));
        }
        for (name, v) in [
            ("detector_step", self.detector_step),
            ("forward_step", self.forward_step),
            ("grad_tol", self.grad_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        if !(0.0..1.0).contains(&self.delta) {
            return Err(Error::invalid(format!("delta {} must lie in [0, 1)", self.delta)));
        }
        if self.seed > i64::MAX as u64 {
            return Err(Error::invalid("seed must fit in a signed 64-bit integer"));
        }
        if self.order == 0 {
            return Err(Error::invalid("order must be positive"));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::from_step(self.geometry, self.inversion_h)
    }

    pub fn source_line(&self) -> Result<SourceLine> {
        SourceLine::new(&self.geometry, self.sources)
    }

    pub fn functional_params(&self) -> FunctionalParams {
        FunctionalParams {
            lambda: self.lambda,
            beta: self.beta,
            alpha_rule: self.alpha_rule,
            ..FunctionalParams::default()
        }
    }

    pub fn optimizer_settings(&self) -> OptimizerSettings {
        OptimizerSettings {
            method: self.method,
            grad_tol: self.grad_tol,
            max_iter: self.max_iter,
            ..OptimizerSettings::default()
        }
    }

    /// The configuration keys `stage` depends on, directly or through its
    /// predecessors.
    fn keys(&self, stage: Stage) -> Table {
        let full = match Value::try_from(self).expect("configuration serializes") {
            Value::Table(t) => t,
            _ => unreachable!("configuration serializes to a table"),
        };
        let mut out = Table::new();
        for s in Stage::ALL.iter().take_while(|s| **s <= stage) {
            for key in s.own_keys() {
                if let Some(v) = full.get(*key) {
                    out.insert((*key).into(), v.clone());
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Phantom,
    Forward,
    Noise,
    Project,
    Reconstruct,
    Evaluate,
    Export,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Phantom,
        Stage::Forward,
        Stage::Noise,
        Stage::Project,
        Stage::Reconstruct,
        Stage::Evaluate,
        Stage::Export,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Phantom => "phantom",
            Stage::Forward => "forward",
            Stage::Noise => "noise",
            Stage::Project => "project",
            Stage::Reconstruct => "reconstruct",
            Stage::Evaluate => "evaluate",
            Stage::Export => "export",
        }
    }

    /// Keys introduced by this stage.
    fn own_keys(self) -> &'static [&'static str] {
        match self {
            Stage::Phantom => &["geometry", "phantom", "forward_step", "forward_pad"],
            Stage::Forward => &["sources", "detector_step"],
            Stage::Noise => &["delta", "seed", "noise_mode"],
            Stage::Project => &["inversion_h", "order"],
            Stage::Reconstruct => &["lambda", "beta", "method", "grad_tol", "max_iter", "alpha_rule"],
            Stage::Evaluate | Stage::Export => &[],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StageRecord {
    stage: String,
    /// Content hashes of the stage directories read, by stage name.
    inputs: Table,
    config: Table,
}

/// Result of a parameter sweep: one row per value.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub parameter: SweepParameter,
    pub rows: Vec<(f64, std::result::Result<Metrics, String>)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParameter {
    Lambda,
    Order,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::Lambda => "lambda",
            SweepParameter::Order => "order",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "lambda" => Some(SweepParameter::Lambda),
            "order" | "N" => Some(SweepParameter::Order),
            _ => None,
        }
    }
}

impl SweepTable {
    pub fn to_text(&self) -> String {
        let mut out = format!("{}  {}\n", self.parameter.name(), Metrics::HEADER);
        for (v, row) in &self.rows {
            match row {
                Ok(m) => out.push_str(&format!("{v}  {}\n", m.row())),
                Err(e) => out.push_str(&format!("{v}  failed: {e}\n")),
            }
        }
        out
    }
}

/// A configuration bound to a run directory.
#[derive(Debug, Clone)]
pub struct Pipeline {
    config: PipelineConfig,
    root: PathBuf,
}

impl Pipeline {
    pub fn new(config: PipelineConfig, root: impl Into<PathBuf>) -> Result<Self> {
        config.validate()?;
        Ok(Pipeline {
            config,
            root: root.into(),
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn dir(&self, stage: Stage) -> PathBuf {
        self.root.join(stage.name())
    }

    /// Checks that `stage` was run with the current settings and that its
    /// inputs are unchanged, and returns the content hash of its directory.
    pub fn verify(&self, stage: Stage) -> Result<String> {
        let dir = self.dir(stage);
        let path = dir.join(STAGE_FILE);
        let missing = |detail: String| Error::MissingStage {
            stage: stage.name().into(),
            detail,
        };
        let text = fs::read_to_string(&path).map_err(|e| missing(format!("cannot read {}: {e}", path.display())))?;
        let record: StageRecord =
            toml::from_str(&text).map_err(|e| missing(format!("corrupt {}: {e}", path.display())))?;
        if record.stage != stage.name() {
            return Err(missing(format!("{} belongs to stage `{}`", path.display(), record.stage)));
        }
        let current = self.config.keys(stage);
        for (key, now) in &current {
            let was = record.config.get(key);
            if was != Some(now) {
                return Err(Error::ConfigMismatch {
                    stage: stage.name().into(),
                    key: key.clone(),
                    recorded: was.map_or("absent".into(), |v| v.to_string()),
                    current: now.to_string(),
                });
            }
        }
        for (name, hash) in &record.inputs {
            let input = Stage::ALL
                .into_iter()
                .find(|s| s.name() == name)
                .ok_or_else(|| missing(format!("unknown input stage `{name}`")))?;
            let now = io::hash_dir(&self.dir(input)).map_err(|_| Error::MissingStage {
                stage: name.clone(),
                detail: format!("input of `{}` has been removed", stage.name()),
            })?;
            if hash.as_str() != Some(now.as_str()) {
                return Err(Error::ConfigMismatch {
                    stage: stage.name().into(),
                    key: format!("{name} content hash"),
                    recorded: hash.to_string(),
                    current: now,
                });
            }
        }
        io::hash_dir(&dir)
    }

    /// Clears the stage marker so a failed rerun cannot leave a stale one.
    fn begin(&self, stage: Stage) -> Result<PathBuf> {
        let dir = self.dir(stage);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let marker = dir.join(STAGE_FILE);
        if marker.exists() {
            fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;
        }
        info!("stage {}", stage.name());
        Ok(dir)
    }

    fn finish(&self, stage: Stage, inputs: &[(Stage, String)]) -> Result<()> {
        let record = StageRecord {
            stage: stage.name().into(),
            inputs: inputs.iter().map(|(s, h)| (s.name().to_string(), Value::String(h.clone()))).collect(),
            config: self.config.keys(stage),
        };
        let text = toml::to_string(&record).map_err(|e| Error::format("stage record", e.to_string()))?;
        let path = self.dir(stage).join(STAGE_FILE);
        fs::write(&path, text).map_err(|e| Error::io(path, e))
    }

    fn phantom_model(&self) -> Result<Phantom> {
        Phantom::from_spec(&self.config.phantom, &self.config.geometry)
    }

    /// `m` on the fast-marching lattice.
    pub fn phantom(&self) -> Result<()> {
        let dir = self.begin(Stage::Phantom)?;
        let c = &self.config;
        let lattice = extended_lattice(&c.geometry, c.forward_step, c.forward_pad)?;
        F3d::from_scalar(&self.phantom_model()?.sample(lattice)).write(&dir.join("m.f3d"))?;
        self.finish(Stage::Phantom, &[])
    }

    /// Noise-free travel times for every source.
    pub fn forward(&self) -> Result<()> {
        let input = self.verify(Stage::Phantom)?;
        let m = F3d::read(&self.dir(Stage::Phantom).join("m.f3d"))?.into_scalar()?;
        let c = &self.config;
        let expected = extended_lattice(&c.geometry, c.forward_step, c.forward_pad)?;
        if !io::lattice_matches(&m.lattice, &expected) {
            return Err(Error::format("phantom/m.f3d", "lattice does not match the configuration"));
        }
        let dir = self.begin(Stage::Forward)?;
        let start = Instant::now();
        let data = simulate(&m, &c.geometry, &c.source_line()?, c.detector_step)?;
        info!("forward: {} sources in {:.1?}", c.sources, start.elapsed());
        io::write_travel_times(&dir, &data, None)?;
        self.finish(Stage::Forward, &[(Stage::Phantom, input)])
    }

    /// The forward data with noise added; an exact copy when `delta = 0`.
    pub fn noise(&self) -> Result<()> {
        let input = self.verify(Stage::Forward)?;
        let (data, _) = io::read_travel_times(&self.dir(Stage::Forward))?;
        let c = &self.config;
        let noisy = add_noise(&data, c.delta, c.seed, c.noise_mode)?;
        let record = (c.delta > 0.0).then_some(NoiseRecord {
            delta: c.delta,
            seed: c.seed,
            mode: c.noise_mode,
        });
        let dir = self.begin(Stage::Noise)?;
        io::write_travel_times(&dir, &noisy, record)?;
        self.finish(Stage::Noise, &[(Stage::Forward, input)])
    }

    /// The noisy travel times as used by the inversion.
    pub fn noisy_data(&self) -> Result<TravelTimeData> {
        self.verify(Stage::Noise)?;
        Ok(io::read_travel_times(&self.dir(Stage::Noise))?.0)
    }

    pub fn project(&self) -> Result<()> {
        let input = self.verify(Stage::Noise)?;
        let data = io::read_travel_times(&self.dir(Stage::Noise))?.0;
        let projected = prepare(&data, self.config.grid()?, self.config.order)?;
        let dir = self.begin(Stage::Project)?;
        io::write_projected(&dir, &projected)?;
        self.finish(Stage::Project, &[(Stage::Noise, input)])
    }

    pub fn projected_data(&self) -> Result<ProjectedData> {
        self.verify(Stage::Project)?;
        io::read_projected(&self.dir(Stage::Project))
    }

    pub fn reconstruct(&self) -> Result<ReconstructionResult> {
        let input = self.verify(Stage::Project)?;
        let data = io::read_projected(&self.dir(Stage::Project))?;
        let start = Instant::now();
        let result = reconstruct(&data, &self.config)?;
        info!(
            "reconstruct: {} iterations, J = {:.6e}, {:?}, {:.1?}",
            result.iterations(),
            result.final_value(),
            result.stop,
            start.elapsed()
        );
        let dir = self.begin(Stage::Reconstruct)?;
        F3d::from_coefficients(&result.w).write(&dir.join("w.f3d"))?;
        F3d::from_scalar(&result.m).write(&dir.join("m.f3d"))?;
        F3d::from_scalar(&result.n).write(&dir.join("n.f3d"))?;
        let mut log = String::from("iteration  J  grad_inf  step\n");
        for r in &result.history {
            log.push_str(&format!("{}  {:.12e}  {:.6e}  {:.6e}\n", r.iteration, r.value, r.grad_inf, r.step));
        }
        write_text(&dir.join("runlog.txt"), &log)?;
        let summary = format!(
            "iterations = {}\nj_final = {:e}\nconverged = {}\nstop = \"{:?}\"\nclamp_fraction = {:e}\nw_norm_h1 = {:e}\n",
            result.iterations(),
            result.final_value(),
            result.converged,
            result.stop,
            result.clamp_fraction,
            result.w_norm_h1
        );
        write_text(&dir.join("summary.toml"), &summary)?;
        self.finish(Stage::Reconstruct, &[(Stage::Project, input)])?;
        Ok(result)
    }

    /// The true index on the inversion grid.
    pub fn true_index(&self) -> Result<ScalarField3> {
        Ok(self.phantom_model()?.sample(self.config.grid()?.lattice()).map(f64::sqrt))
    }

    /// Recovered index and optimizer record of the reconstruct stage.
    fn recovered(&self) -> Result<(ScalarField3, ScalarField3, f64, usize)> {
        let dir = self.dir(Stage::Reconstruct);
        let n = F3d::read(&dir.join("n.f3d"))?.into_scalar()?;
        let m = F3d::read(&dir.join("m.f3d"))?.into_scalar()?;
        #[derive(Deserialize)]
        struct Summary {
            iterations: usize,
            j_final: f64,
        }
        let path = dir.join("summary.toml");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let s: Summary = toml::from_str(&text).map_err(|e| Error::format("reconstruct/summary.toml", e.to_string()))?;
        Ok((n, m, s.j_final, s.iterations))
    }

    pub fn evaluate(&self) -> Result<Metrics> {
        let phantom = self.verify(Stage::Phantom)?;
        let input = self.verify(Stage::Reconstruct)?;
        let (n, _, j, iterations) = self.recovered()?;
        let n_true = self.true_index()?;
        let metrics = metrics::evaluate(&n_true, &n, j, iterations)?;
        let dir = self.begin(Stage::Evaluate)?;
        F3d::from_scalar(&n_true).write(&dir.join("n_true.f3d"))?;
        let text = toml::to_string(&metrics).map_err(|e| Error::format("metrics", e.to_string()))?;
        write_text(&dir.join("metrics.toml"), &text)?;
        self.finish(Stage::Evaluate, &[(Stage::Phantom, phantom), (Stage::Reconstruct, input)])?;
        Ok(metrics)
    }

    /// VTK volumes and mid-plane slices of the recovered and true fields.
    pub fn export(&self) -> Result<()> {
        let recon = self.verify(Stage::Reconstruct)?;
        let eval = self.verify(Stage::Evaluate)?;
        let (n, m, _, _) = self.recovered()?;
        let n_true = F3d::read(&self.dir(Stage::Evaluate).join("n_true.f3d"))?.into_scalar()?;
        let dir = self.begin(Stage::Export)?;
        io::write_vtk(&dir.join("n.vtk"), &n, "n", "recovered refractive index")?;
        io::write_vtk(&dir.join("m.vtk"), &m, "m", "recovered squared refractive index")?;
        io::write_vtk(&dir.join("n_true.vtk"), &n_true, "n", "true refractive index")?;
        let dims = n.lattice.dims;
        for (axis, tag, index) in [
            (Axis::X, "yz", dims[0] / 2),
            (Axis::Y, "xz", dims[1] / 2),
            (Axis::Z, "xy", dims[2] / 2),
        ] {
            io::write_slice_csv(&dir.join(format!("n_{tag}.csv")), &n, axis, index)?;
            io::write_slice_csv(&dir.join(format!("n_true_{tag}.csv")), &n_true, axis, index)?;
        }
        self.finish(Stage::Export, &[(Stage::Reconstruct, recon), (Stage::Evaluate, eval)])
    }

    /// All stages in order.
    pub fn run(&self) -> Result<Metrics> {
        self.phantom()?;
        self.forward()?;
        self.noise()?;
        self.project()?;
        self.reconstruct()?;
        let metrics = self.evaluate()?;
        self.export()?;
        Ok(metrics)
    }

    /// Reconstructs once per value from the noise stage's data, changing only
    /// `parameter`. Failed runs are recorded in the table. The table is also
    /// written to `sweep/<parameter>.txt`.
    pub fn sweep(&self, parameter: SweepParameter, values: &[f64]) -> Result<SweepTable> {
        let data = self.noisy_data()?;
        let n_true = self.true_index()?;
        let mut rows = Vec::with_capacity(values.len());
        for &v in values {
            let row = self.sweep_one(&data, &n_true, parameter, v).map_err(|e| e.to_string());
            match &row {
                Ok(m) => info!("sweep {}={v}: rel_l2 {:.4}", parameter.name(), m.rel_l2_error),
                Err(e) => info!("sweep {}={v} failed: {e}", parameter.name()),
            }
            rows.push((v, row));
        }
        let table = SweepTable { parameter, rows };
        let dir = self.root.join("sweep");
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        write_text(&dir.join(format!("{}.txt", parameter.name())), &table.to_text())?;
        Ok(table)
    }

    fn sweep_one(&self, data: &TravelTimeData, n_true: &ScalarField3, parameter: SweepParameter, v: f64) -> Result<Metrics> {
        let mut config = self.config.clone();
        match parameter {
            SweepParameter::Lambda => config.lambda = v,
            SweepParameter::Order => {
                if !(v >= 1.0 && v.fract() == 0.0) {
                    return Err(Error::invalid(format!("order {v} is not a positive integer")));
                }
                config.order = v as usize;
            }
        }
        let projected = prepare(data, config.grid()?, config.order)?;
        let result = reconstruct(&projected, &config)?;
        metrics::evaluate(n_true, &result.n, result.final_value(), result.iterations())
    }
}

/// Minimizes the functional configured by `config` from the homogeneous
/// starting point.
pub fn reconstruct(data: &ProjectedData, config: &PipelineConfig) -> Result<ReconstructionResult> {
    let problem = InversionProblem::new(data.clone(), config.functional_params())?;
    let w0 = initialize_w(data)?;
    minimize(&problem, &w0, &config.optimizer_settings())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
