//! Config-driven batch runs.
//!
//! A campaign is one TOML file:
//!
//! ```toml
//! schema_version = 1
//! mode = "compare"          # simulate | reconstruct | analytic | fpe | perturb | compare
//! output_dir = "out/fig1b"
//! plots = ["fig1b"]
//!
//! [sim]
//! dt = 0.01
//! t_final = 3.5
//! theta_in = 0.7853981633974483   # or initial_state = { x = .., y = .., z = .. }
//! rng_seed = 1
//! z_channel = { gamma = 0.5, eta = 1.0 }
//! phi_channel = { axis_angle = 1.5707963267948966, gamma = 0.5, eta = 1.0 }
//!
//! [selection]
//! theta_in = 0.7853981633974483
//! theta_f = 2.748893571891069
//! t_total = 3.5
//! angular_window = 0.05
//!
//! [grids]
//! t1 = { start = 0.0, stop = 3.5, count = 20 }
//! t2_ref = [1.75]
//! kinds = ["zz", "zx", "xx"]
//!
//! [ensemble]
//! trajectories = 1000000
//! integrator = "polar"
//! ```
//!
//! Outputs are CSV tables, `resolved_config.toml`, `manifest.json` and
//! optional gnuplot scripts. All values are written in shortest round-trip
//! form, so equal inputs give byte-identical files.

mod plots;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::analytic::{self, BoundaryCondition, SourceSpec};
use crate::bayes;
use crate::error::Error;
use crate::estimator::{self, CorrelatorResult, SelectionCriterion, Statistic, SubEnsemble};
use crate::fpe::{self, KernelParams};
use crate::perturb::{self, TreeParams};
use crate::sde::{Integrator, Trajectory};
use crate::state::{angle_difference, polar_to_bloch, BlochState, ChannelConfig, Coord, Kind, QubitEnvironment, SimConfig};

pub use plots::Figure;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Simulate,
    Reconstruct,
    Analytic,
    Fpe,
    Perturb,
    Compare,
}

impl Mode {
    fn name(self) -> &'static str {
        match self {
            Mode::Simulate => "simulate",
            Mode::Reconstruct => "reconstruct",
            Mode::Analytic => "analytic",
            Mode::Fpe => "fpe",
            Mode::Perturb => "perturb",
            Mode::Compare => "compare",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub schema_version: u32,
    pub mode: Mode,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub plots: Vec<Figure>,
    pub sim: SimSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection: Option<SelectionCriterion>,
    #[serde(default)]
    pub grids: Grids,
    #[serde(default)]
    pub ensemble: EnsembleSection,
    #[serde(default)]
    pub reconstruct: ReconstructSection,
    #[serde(default)]
    pub compare: CompareSection,
}

/// Simulation parameters; the initial state is given either as a polar
/// angle or as a Bloch vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub dt: f64,
    pub t_final: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_in: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<BlochState>,
    #[serde(default)]
    pub rng_seed: u64,
    pub z_channel: ChannelConfig,
    pub phi_channel: ChannelConfig,
    #[serde(default)]
    pub environment: QubitEnvironment,
}

impl SimSection {
    pub fn to_config(&self) -> Result<SimConfig, Error> {
        let initial_state = match (self.theta_in, self.initial_state) {
            (Some(t), None) => polar_to_bloch(t),
            (None, Some(q)) => q,
            _ => {
                return Err(Error::config(
                    "sim.theta_in",
                    "give exactly one of `theta_in` and `initial_state`",
                ))
            }
        };
        let cfg = SimConfig {
            z_channel: self.z_channel,
            phi_channel: self.phi_channel,
            environment: self.environment,
            dt: self.dt,
            t_final: self.t_final,
            initial_state,
            rng_seed: self.rng_seed,
        };
        cfg.validate().map_err(|e| Error::config("sim", e.to_string()))?;
        Ok(cfg)
    }
}

/// Explicit points or `count` evenly spaced points over `[start, stop]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    Points(Vec<f64>),
    Range { start: f64, stop: f64, count: usize },
}

impl GridSpec {
    pub fn points(&self) -> Vec<f64> {
        match self {
            GridSpec::Points(p) => p.clone(),
            GridSpec::Range { start, stop, count } => match count {
                0 => Vec::new(),
                1 => vec![*start],
                n => (0..*n)
                    .map(|i| start + (stop - start) * i as f64 / (n - 1) as f64)
                    .collect(),
            },
        }
    }
}

fn default_kinds() -> Vec<Kind> {
    vec![Kind::ZZ, Kind::ZX, Kind::XX]
}

fn default_theta_points() -> usize {
    256
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grids {
    /// Default: 20 points over the selection horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t1: Option<GridSpec>,
    /// Default: the middle of the horizon.
    #[serde(default)]
    pub t2_ref: Vec<f64>,
    #[serde(default = "default_kinds")]
    pub kinds: Vec<Kind>,
    /// Snapshot times of the two-sided density (`fpe` mode).
    #[serde(default)]
    pub density_times: Vec<f64>,
    #[serde(default = "default_theta_points")]
    pub theta_points: usize,
}

impl Default for Grids {
    fn default() -> Self {
        Grids {
            t1: None,
            t2_ref: Vec::new(),
            kinds: default_kinds(),
            density_times: Vec::new(),
            theta_points: default_theta_points(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatisticName {
    #[default]
    Moment,
    Covariance,
}

fn default_trajectories() -> usize {
    10_000
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    #[serde(default = "default_trajectories")]
    pub trajectories: usize,
    #[serde(default)]
    pub integrator: Integrator,
    #[serde(default)]
    pub statistic: StatisticName,
    /// First stream id; members use `stream_offset..stream_offset + trajectories`.
    #[serde(default)]
    pub stream_offset: u64,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        EnsembleSection {
            trajectories: default_trajectories(),
            integrator: Integrator::default(),
            statistic: StatisticName::default(),
            stream_offset: 0,
        }
    }
}

/// Source of readout records in `reconstruct` mode: a readout file, or
/// (when absent) records synthesized from the ensemble streams.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
}

fn default_sigma() -> f64 {
    3.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    #[serde(default = "default_sigma")]
    pub sigma: f64,
}

impl Default for CompareSection {
    fn default() -> Self {
        CompareSection { sigma: default_sigma() }
    }
}

/// Why a campaign stopped, with its process exit code.
#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Config(Error),
    #[error("{module}: {source}")]
    Backend {
        module: &'static str,
        #[source]
        source: Error,
    },
    #[error("validation gate failed: {failed} of {checked} points beyond {sigma} standard errors (see {})", report.display())]
    Gate {
        failed: usize,
        checked: usize,
        sigma: f64,
        report: PathBuf,
    },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Gate { .. } => 2,
            RunError::Config(_) => 3,
            RunError::Backend { .. } => 4,
        }
    }
}

fn backend(module: &'static str) -> impl Fn(Error) -> RunError {
    move |source| RunError::Backend { module, source }
}

fn config_err(field: &str, message: impl Into<String>) -> RunError {
    RunError::Config(Error::config(field, message))
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub schema_version: u32,
    pub mode: Mode,
    pub seed: u64,
    pub outputs: Vec<String>,
    pub summary: BTreeMap<String, f64>,
    pub config: CampaignConfig,
}

/// Loads a campaign from TOML, or replays the configuration stored in a
/// `manifest.json`.
pub fn load_config(path: &Path) -> Result<CampaignConfig, RunError> {
    let text = fs::read_to_string(path).map_err(|e| RunError::Config(Error::io(path, e)))?;
    let origin = path.display().to_string();
    let cfg: CampaignConfig = if path.extension().is_some_and(|e| e == "json") {
        let m: Manifest = serde_json::from_str(&text).map_err(|e| {
            RunError::Config(Error::Parse {
                path: origin.clone(),
                line: e.line(),
                message: e.to_string(),
            })
        })?;
        m.config
    } else {
        parse_config(&text, &origin)?
    };
    Ok(cfg)
}

pub fn parse_config(text: &str, origin: &str) -> Result<CampaignConfig, RunError> {
    toml::from_str(text).map_err(|e| {
        let line = e.span().map_or(0, |s| text[..s.start.min(text.len())].matches('\n').count() + 1);
        RunError::Config(Error::Parse {
            path: origin.to_string(),
            line,
            message: e.message().to_string(),
        })
    })
}

/// Applies overrides; the result is what `resolved_config.toml` records.
pub fn resolve(mut cfg: CampaignConfig, ov: &Overrides) -> CampaignConfig {
    if let Some(seed) = ov.seed {
        cfg.sim.rng_seed = seed;
    }
    if let Some(dir) = &ov.output_dir {
        cfg.output_dir = dir.clone();
    }
    cfg
}

pub fn run_file(path: &Path, ov: &Overrides) -> Result<Manifest, RunError> {
    let cfg = resolve(load_config(path)?, ov);
    run(&cfg)
}

/// Everything derived from the config before any backend runs.
struct Plan {
    sim: SimConfig,
    crit: SelectionCriterion,
    t1: Vec<f64>,
    t2: Vec<f64>,
    kinds: Vec<Kind>,
}

fn snap(cfg: &SimConfig, t: f64, field: &str) -> Result<f64, RunError> {
    cfg.step_index(t)
        .map(|k| cfg.time(k))
        .ok_or_else(|| config_err(field, format!("time {t} lies outside [0, {}]", cfg.t_final)))
}

fn plan(cfg: &CampaignConfig) -> Result<Plan, RunError> {
    if cfg.schema_version != SCHEMA_VERSION {
        return Err(config_err(
            "schema_version",
            format!("unsupported version {} (expected {SCHEMA_VERSION})", cfg.schema_version),
        ));
    }
    let sim = cfg.sim.to_config().map_err(RunError::Config)?;
    let crit = cfg
        .selection
        .unwrap_or_else(|| SelectionCriterion::pre(sim.initial_state.polar_angle(), sim.t_final));
    crit.validate().map_err(|e| config_err("selection", e.to_string()))?;
    if angle_difference(crit.theta_in, sim.initial_state.polar_angle()).abs() > 1e-9 {
        return Err(config_err("selection.theta_in", "differs from the polar angle of the initial state"));
    }
    if crit.t_total > sim.t_final + 0.5 * sim.dt {
        return Err(config_err("selection.t_total", "selection time exceeds sim.t_final"));
    }
    let horizon = crit.t_total;
    let t1 = cfg
        .grids
        .t1
        .clone()
        .unwrap_or(GridSpec::Range { start: 0.0, stop: horizon, count: 20 })
        .points()
        .into_iter()
        .map(|t| snap(&sim, t, "grids.t1"))
        .collect::<Result<Vec<_>, _>>()?;
    let t2_raw = if cfg.grids.t2_ref.is_empty() { vec![0.5 * horizon] } else { cfg.grids.t2_ref.clone() };
    let t2 = t2_raw.into_iter().map(|t| snap(&sim, t, "grids.t2_ref")).collect::<Result<Vec<_>, _>>()?;
    for &t in t1.iter().chain(&t2) {
        if t > horizon + 1e-12 {
            return Err(config_err("grids", format!("grid time {t} exceeds the horizon {horizon}")));
        }
    }
    if cfg.grids.kinds.is_empty() {
        return Err(config_err("grids.kinds", "at least one correlator kind is required"));
    }
    if cfg.ensemble.trajectories < 2 {
        return Err(config_err("ensemble.trajectories", "at least 2 trajectories are required"));
    }
    Ok(Plan {
        sim,
        crit,
        t1,
        t2,
        kinds: cfg.grids.kinds.clone(),
    })
}

fn ideal_tau(p: &Plan, mode: Mode) -> Result<f64, RunError> {
    p.sim.ideal_xz_tau().ok_or_else(|| {
        config_err(
            "sim",
            format!("mode `{}` needs the ideal equal-strength XZ configuration", mode.name()),
        )
    })
}

fn boundary(p: &Plan, tau: f64) -> Result<BoundaryCondition, RunError> {
    let theta_in = p.sim.initial_state.polar_angle();
    match p.crit.theta_f {
        Some(tf) => BoundaryCondition::post(theta_in, tf, p.crit.t_total, tau),
        None => BoundaryCondition::pre(theta_in, tau),
    }
    .map_err(|e| config_err("selection", e.to_string()))
}

/// Mean Bloch coordinates on the t1 grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanRow {
    pub t: f64,
    pub x: f64,
    pub x_se: f64,
    pub z: f64,
    pub z_se: f64,
}

/// Equal-time variances on the t1 grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceRow {
    pub t: f64,
    pub var_x: f64,
    pub var_x_se: f64,
    pub var_z: f64,
    pub var_z_se: f64,
}

/// Two-sided density sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityRow {
    pub t: f64,
    pub theta: f64,
    pub density: f64,
}

/// One point of the Monte Carlo versus closed-form gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub t1: f64,
    pub t2: f64,
    pub quantity: String,
    pub monte_carlo: f64,
    pub std_error: f64,
    pub exact: f64,
    pub z_score: f64,
    pub pass: bool,
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), Error> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, Error> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<Result<Vec<T>, _>>()?;
    Ok(rows)
}

struct Output {
    dir: PathBuf,
    files: Vec<String>,
    summary: BTreeMap<String, f64>,
}

impl Output {
    fn rows<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<(), RunError> {
        write_rows(&self.dir.join(name), rows).map_err(RunError::Config)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn correlators(&mut self, name: &str, results: &[CorrelatorResult]) -> Result<(), RunError> {
        estimator::write_correlators_file(self.dir.join(name), results).map_err(RunError::Config)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn text(&mut self, name: &str, body: &str) -> Result<(), RunError> {
        let path = self.dir.join(name);
        fs::write(&path, body).map_err(|e| RunError::Config(Error::io(path, e)))?;
        self.files.push(name.to_string());
        Ok(())
    }
}

/// Runs a resolved campaign and writes all artifacts into its output
/// directory.
pub fn run(cfg: &CampaignConfig) -> Result<Manifest, RunError> {
    let p = plan(cfg)?;
    fs::create_dir_all(&cfg.output_dir).map_err(|e| RunError::Config(Error::io(&cfg.output_dir, e)))?;
    let mut out = Output {
        dir: cfg.output_dir.clone(),
        files: Vec::new(),
        summary: BTreeMap::new(),
    };
    let stat = match cfg.ensemble.statistic {
        StatisticName::Moment => Statistic::Moment,
        StatisticName::Covariance => Statistic::Covariance,
    };
    let mut gate = None;
    match cfg.mode {
        Mode::Simulate => {
            let sub = simulate(cfg, &p)?;
            write_estimates(&mut out, &sub, &p, stat)?;
        }
        Mode::Reconstruct => {
            let sub = reconstruct(cfg, &p)?;
            write_estimates(&mut out, &sub, &p, stat)?;
        }
        Mode::Analytic => {
            let bc = boundary(&p, ideal_tau(&p, cfg.mode)?)?;
            let (corr, means) = analytic_tables(&p, &bc, stat)?;
            out.correlators("correlators.csv", &corr)?;
            out.rows("means.csv", &means)?;
        }
        Mode::Fpe => fpe_tables(cfg, &p, &mut out)?,
        Mode::Perturb => perturb_tables(&p, &mut out)?,
        Mode::Compare => gate = Some(compare(cfg, &p, &mut out)?),
    }
    for fig in &cfg.plots {
        let (name, body) = plots::script(*fig, &out.files, &p.kinds);
        out.text(&name, &body)?;
    }
    let resolved = toml::to_string(cfg).map_err(|e| config_err("config", e.to_string()))?;
    out.text("resolved_config.toml", &resolved)?;
    out.files.push("manifest.json".into());
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        schema_version: SCHEMA_VERSION,
        mode: cfg.mode,
        seed: cfg.sim.rng_seed,
        outputs: out.files.clone(),
        summary: out.summary.clone(),
        config: cfg.clone(),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    let path = out.dir.join("manifest.json");
    fs::write(&path, json).map_err(|e| RunError::Config(Error::io(path, e)))?;
    if let Some((failed, checked)) = gate {
        if failed > 0 {
            return Err(RunError::Gate {
                failed,
                checked,
                sigma: cfg.compare.sigma,
                report: out.dir.join("comparison.csv"),
            });
        }
    }
    Ok(manifest)
}

fn all_times(p: &Plan) -> Vec<f64> {
    let mut v: Vec<f64> = p.t1.iter().chain(&p.t2).copied().collect();
    v.push(0.0);
    v
}

fn streams(cfg: &CampaignConfig) -> std::ops::Range<u64> {
    let start = cfg.ensemble.stream_offset;
    start..start + cfg.ensemble.trajectories as u64
}

fn simulate(cfg: &CampaignConfig, p: &Plan) -> Result<SubEnsemble, RunError> {
    if cfg.ensemble.integrator == Integrator::Polar && p.sim.ideal_xz_tau().is_none() {
        return Err(config_err("ensemble.integrator", "the polar integrator needs the ideal XZ configuration"));
    }
    estimator::select_streaming(&p.sim, cfg.ensemble.integrator, streams(cfg), &p.crit, &all_times(p))
        .map_err(backend("sde/estimator"))
}

fn reconstruct(cfg: &CampaignConfig, p: &Plan) -> Result<SubEnsemble, RunError> {
    match &cfg.reconstruct.input {
        None => estimator::select_reconstructed(&p.sim, streams(cfg), &p.crit, &all_times(p))
            .map_err(backend("bayes/estimator")),
        Some(input) => {
            if !input.exists() {
                return Err(config_err("reconstruct.input", format!("{} does not exist", input.display())));
            }
            let (header, records) = bayes::read_readout_file(input).map_err(RunError::Config)?;
            let mut sim = p.sim;
            sim.dt = header.dt;
            sim.z_channel = header.z_channel;
            sim.phi_channel = header.x_channel;
            let n = records.iter().map(|r| r.len()).min().unwrap_or(0);
            sim.t_final = n as f64 * sim.dt;
            sim.validate().map_err(|e| config_err("reconstruct.input", e.to_string()))?;
            use rayon::prelude::*;
            let trajectories: Vec<Trajectory> = records
                .par_iter()
                .map(|rec| bayes::reconstruct(rec, &sim.initial_state, &sim))
                .collect::<Result<_, _>>()
                .map_err(backend("bayes"))?;
            estimator::select_trajectories(&sim, &trajectories, &p.crit, &all_times(p)).map_err(backend("estimator"))
        }
    }
}

fn write_estimates(out: &mut Output, sub: &SubEnsemble, p: &Plan, stat: Statistic) -> Result<(), RunError> {
    out.summary.insert("accepted".into(), sub.accepted() as f64);
    out.summary.insert("total".into(), sub.total as f64);
    out.summary.insert("acceptance_rate".into(), sub.acceptance_rate());
    let mut results = Vec::new();
    for &t2 in &p.t2 {
        for &kind in &p.kinds {
            results.push(CorrelatorResult::estimate(sub, kind, &p.t1, t2, stat).map_err(backend("estimator"))?);
        }
    }
    out.correlators("correlators.csv", &results)?;
    let err = backend("estimator");
    let mut means = Vec::new();
    let mut variances = Vec::new();
    for &t in &p.t1 {
        let x = estimator::mean(sub, Coord::X, t).map_err(&err)?;
        let z = estimator::mean(sub, Coord::Z, t).map_err(&err)?;
        means.push(MeanRow { t, x: x.value, x_se: x.std_error, z: z.value, z_se: z.std_error });
        let vx = estimator::variance(sub, Coord::X, t).map_err(&err)?;
        let vz = estimator::variance(sub, Coord::Z, t).map_err(&err)?;
        variances.push(VarianceRow { t, var_x: vx.value, var_x_se: vx.std_error, var_z: vz.value, var_z_se: vz.std_error });
    }
    out.rows("means.csv", &means)?;
    out.rows("variances.csv", &variances)?;
    Ok(())
}

fn analytic_tables(p: &Plan, bc: &BoundaryCondition, stat: Statistic) -> Result<(Vec<CorrelatorResult>, Vec<MeanRow>), RunError> {
    let err = backend("analytic");
    let mean = |c: Coord, t: f64| -> Result<f64, Error> {
        let q = analytic::subens_avg_state(t, bc)?;
        Ok(q.coord(c))
    };
    let mut corr = Vec::new();
    for &t2 in &p.t2 {
        for &kind in &p.kinds {
            corr.push(
                CorrelatorResult::exact(kind, p.t1.clone(), t2, |t1| {
                    let m = analytic::correlator_cond(kind, t1, t2, bc)?;
                    Ok(match stat {
                        Statistic::Moment => m,
                        Statistic::Covariance => m - mean(kind.0, t1)? * mean(kind.1, t2)?,
                    })
                })
                .map_err(&err)?,
            );
        }
    }
    let means = p
        .t1
        .iter()
        .map(|&t| {
            let q = analytic::subens_avg_state(t, bc)?;
            Ok(MeanRow { t, x: q.x, x_se: 0.0, z: q.z, z_se: 0.0 })
        })
        .collect::<Result<Vec<_>, Error>>()
        .map_err(&err)?;
    Ok((corr, means))
}

/// `<a(t1) b(t2)>` from the Fourier-space conditional phase averages.
fn fpe_correlator(kind: Kind, t1: f64, t2: f64, bc: &BoundaryCondition, kp: &KernelParams) -> Result<f64, Error> {
    if kind == Kind::XX {
        return fpe_correlator(Kind::ZZ, t1, t2, &bc.rotated(-std::f64::consts::FRAC_PI_2), kp);
    }
    let mut total = num_complex::Complex64::new(0.0, 0.0);
    for s1 in [1, -1] {
        for s2 in [1, -1] {
            let w = |c: Coord, s: i32| match c {
                Coord::Z => num_complex::Complex64::new(0.5, 0.0),
                Coord::X => num_complex::Complex64::new(0.0, -0.5 * s as f64),
            };
            let src = SourceSpec::new([(s1, t1), (s2, t2)])?;
            total += w(kind.0, s1) * w(kind.1, s2) * fpe::cond_avg_fpe(&src, bc, kp)?;
        }
    }
    Ok(total.re)
}

fn fpe_tables(cfg: &CampaignConfig, p: &Plan, out: &mut Output) -> Result<(), RunError> {
    let tau = ideal_tau(p, cfg.mode)?;
    let bc = boundary(p, tau)?;
    let Some(theta_f) = bc.theta_f else {
        return Err(config_err("selection.theta_f", "mode `fpe` needs a post-selected final angle"));
    };
    let kp = KernelParams::from_tau(tau).map_err(RunError::Config)?;
    let err = backend("fpe");
    let mut corr = Vec::new();
    for &t2 in &p.t2 {
        for &kind in &p.kinds {
            corr.push(CorrelatorResult::exact(kind, p.t1.clone(), t2, |t1| fpe_correlator(kind, t1, t2, &bc, &kp)).map_err(&err)?);
        }
    }
    out.correlators("correlators.csv", &corr)?;
    let n = cfg.grids.theta_points.max(8);
    let mut dens = Vec::new();
    for &t in &cfg.grids.density_times {
        if !(t > 0.0 && t < bc.t_total) {
            return Err(config_err("grids.density_times", format!("{t} must lie strictly inside (0, {})", bc.t_total)));
        }
        for i in 0..n {
            let theta = std::f64::consts::TAU * i as f64 / n as f64;
            let density = fpe::two_sided_density(theta, t, &bc, &kp).map_err(&err)?;
            dens.push(DensityRow { t, theta, density });
        }
    }
    out.rows("densities.csv", &dens)?;
    let rate = fpe::window_probability(theta_f, p.crit.angular_window, bc.t_total, bc.theta_in, &kp).map_err(&err)?;
    out.summary.insert("window_probability".into(), rate);
    Ok(())
}

fn tree_params(sim: &SimConfig) -> Result<TreeParams, RunError> {
    let (z, x) = (&sim.z_channel, &sim.phi_channel);
    if z.axis_angle != 0.0 || (x.axis_angle - std::f64::consts::FRAC_PI_2).abs() > 1e-12 {
        return Err(config_err("sim.phi_channel.axis_angle", "mode `perturb` needs z and x measurement axes"));
    }
    TreeParams::new(x.gamma, z.gamma, x.eta, z.eta, sim.initial_state.x, sim.initial_state.z)
        .map_err(|e| config_err("sim", e.to_string()))
}

fn perturb_tables(p: &Plan, out: &mut Output) -> Result<(), RunError> {
    let tp = tree_params(&p.sim)?;
    let err = backend("perturb");
    let mut corr = Vec::new();
    for &t2 in &p.t2 {
        for &kind in &p.kinds {
            corr.push(CorrelatorResult::exact(kind, p.t1.clone(), t2, |t1| perturb::cov_tree(kind, t1, t2, &tp)).map_err(&err)?);
        }
    }
    out.correlators("correlators.csv", &corr)?;
    let variances = p
        .t1
        .iter()
        .map(|&t| {
            Ok(VarianceRow {
                t,
                var_x: perturb::var_tree(Coord::X, t, &tp)?,
                var_x_se: 0.0,
                var_z: perturb::var_tree(Coord::Z, t, &tp)?,
                var_z_se: 0.0,
            })
        })
        .collect::<Result<Vec<_>, Error>>()
        .map_err(&err)?;
    out.rows("variances.csv", &variances)?;
    let means = p
        .t1
        .iter()
        .map(|&t| {
            Ok(MeanRow {
                t,
                x: perturb::mean_tree(Coord::X, t, &tp)?,
                x_se: 0.0,
                z: perturb::mean_tree(Coord::Z, t, &tp)?,
                z_se: 0.0,
            })
        })
        .collect::<Result<Vec<_>, Error>>()
        .map_err(&err)?;
    out.rows("means.csv", &means)?;
    Ok(())
}

fn gate_row(t1: f64, t2: f64, quantity: String, mc: f64, se: f64, exact: f64, sigma: f64) -> ComparisonRow {
    let diff = mc - exact;
    let (z_score, pass) = if se > 0.0 {
        (diff / se, diff.abs() <= sigma * se)
    } else {
        // deterministic points must agree to rounding
        (0.0, diff.abs() <= 1e-9)
    };
    ComparisonRow { t1, t2, quantity, monte_carlo: mc, std_error: se, exact, z_score, pass }
}

fn compare(cfg: &CampaignConfig, p: &Plan, out: &mut Output) -> Result<(usize, usize), RunError> {
    let tau = ideal_tau(p, cfg.mode)?;
    let bc = boundary(p, tau)?;
    let sub = simulate(cfg, p)?;
    write_estimates(out, &sub, p, Statistic::Moment)?;
    let (exact, means) = analytic_tables(p, &bc, Statistic::Moment)?;
    out.correlators("analytic.csv", &exact)?;
    let sigma = cfg.compare.sigma;
    let mut rows = Vec::new();
    for r in &exact {
        for (i, &t1) in r.t1_grid.iter().enumerate() {
            let e = estimator::correlate(&sub, r.kind.0, r.kind.1, t1, r.t2_ref).map_err(backend("estimator"))?;
            rows.push(gate_row(t1, r.t2_ref, r.kind.to_string(), e.value, e.std_error, r.values[i], sigma));
        }
    }
    for m in &means {
        for (c, exact) in [(Coord::X, m.x), (Coord::Z, m.z)] {
            let e = estimator::mean(&sub, c, m.t).map_err(backend("estimator"))?;
            rows.push(gate_row(m.t, m.t, c.as_char().to_string(), e.value, e.std_error, exact, sigma));
        }
    }
    out.rows("comparison.csv", &rows)?;
    let failed = rows.iter().filter(|r| !r.pass).count();
    out.summary.insert("gate_failed".into(), failed as f64);
    out.summary.insert("gate_checked".into(), rows.len() as f64);
    Ok((failed, rows.len()))
}
