//! Post-selection of trajectory ensembles and sample statistics of Bloch
//! coordinates on a time grid.

use std::fs::File;
use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::bayes::reconstruct;
use crate::sde::{sample_path, simulate_trajectory, Ensemble, Integrator, Trajectory};
use crate::state::{angle_difference, polar_to_bloch, BlochState, Coord, Kind, SimConfig};

fn default_window() -> f64 {
    0.05
}

/// Distance used to decide whether a final state matches `theta_f`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    /// Polar-angle distance on the circle.
    #[default]
    Angular,
    /// Straight-line distance in the xz plane, for mixed states.
    Euclidean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionCriterion {
    pub theta_in: f64,
    #[serde(default)]
    pub theta_f: Option<f64>,
    pub t_total: f64,
    /// Half-width of the acceptance window: radians for [`Metric::Angular`],
    /// Bloch-vector distance for [`Metric::Euclidean`].
    #[serde(default = "default_window")]
    pub angular_window: f64,
    #[serde(default)]
    pub metric: Metric,
}

impl SelectionCriterion {
    pub fn pre(theta_in: f64, t_total: f64) -> Self {
        SelectionCriterion {
            theta_in,
            theta_f: None,
            t_total,
            angular_window: default_window(),
            metric: Metric::Angular,
        }
    }

    pub fn post(theta_in: f64, theta_f: f64, t_total: f64, window: f64) -> Self {
        SelectionCriterion {
            theta_in,
            theta_f: Some(theta_f),
            t_total,
            angular_window: window,
            metric: Metric::Angular,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_total >= 0.0) {
            return Err(Error::domain(format!("selection time must be >= 0, got {}", self.t_total)));
        }
        if self.theta_f.is_some() {
            let limit = match self.metric {
                Metric::Angular => std::f64::consts::PI,
                Metric::Euclidean => 2.0,
            };
            if !(self.angular_window > 0.0 && self.angular_window <= limit) {
                return Err(Error::domain(format!(
                    "acceptance window must lie in (0, {limit}], got {}",
                    self.angular_window
                )));
            }
        }
        Ok(())
    }

    pub fn accepts(&self, q: &BlochState) -> bool {
        let Some(theta_f) = self.theta_f else {
            return true;
        };
        match self.metric {
            Metric::Angular => angle_difference(q.polar_angle(), theta_f).abs() <= self.angular_window,
            Metric::Euclidean => {
                let target = polar_to_bloch(theta_f);
                (q.x - target.x).hypot(q.z - target.z) <= self.angular_window
            }
        }
    }
}

/// Accepted trajectories, stored only at the sampled grid steps.
#[derive(Debug, Clone, PartialEq)]
pub struct SubEnsemble {
    pub dt: f64,
    pub steps: Vec<usize>,
    pub stream_ids: Vec<u64>,
    /// `paths[i][j]` is member `i` at grid step `steps[j]`.
    pub paths: Vec<Vec<BlochState>>,
    pub total: usize,
}

impl SubEnsemble {
    pub fn accepted(&self) -> usize {
        self.paths.len()
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.accepted() as f64 / self.total as f64
    }

    pub fn times(&self) -> Vec<f64> {
        self.steps.iter().map(|&k| k as f64 * self.dt).collect()
    }

    fn column(&self, t: f64) -> Result<usize> {
        let k = (t / self.dt).round();
        let snapped = (t - k * self.dt).abs() <= 0.5 * self.dt * (1.0 + 1e-9) && k >= 0.0;
        snapped
            .then(|| self.steps.iter().position(|&s| s as f64 == k))
            .flatten()
            .ok_or_else(|| Error::domain(format!("time {t} is not a stored grid point of the sub-ensemble")))
    }

    fn values(&self, c: Coord, t: f64) -> Result<Vec<f64>> {
        let j = self.column(t)?;
        Ok(self.paths.iter().map(|p| p[j].coord(c)).collect())
    }

    fn need(&self, n: usize) -> Result<()> {
        if self.accepted() < n {
            return Err(Error::domain(format!(
                "statistic needs at least {n} accepted trajectories, have {}",
                self.accepted()
            )));
        }
        Ok(())
    }
}

fn check_horizon(cfg: &SimConfig, crit: &SelectionCriterion) -> Result<usize> {
    crit.validate()?;
    if cfg.t_final + 0.5 * cfg.dt < crit.t_total {
        return Err(Error::domain(format!(
            "ensemble ends at {} before the selection time {}",
            cfg.t_final, crit.t_total
        )));
    }
    cfg.step_index(crit.t_total)
        .ok_or_else(|| Error::domain(format!("selection time {} is off the grid", crit.t_total)))
}

fn empty_check(sub: SubEnsemble) -> Result<SubEnsemble> {
    if sub.paths.is_empty() {
        return Err(Error::EmptySelection { total: sub.total });
    }
    Ok(sub)
}

/// Post-selects a stored ensemble, keeping every grid step.
pub fn select(ens: &Ensemble, crit: &SelectionCriterion) -> Result<SubEnsemble> {
    let k_final = check_horizon(&ens.config, crit)?;
    let mut stream_ids = Vec::new();
    let mut paths = Vec::new();
    for (i, tr) in ens.trajectories.iter().enumerate() {
        let q = tr
            .states
            .get(k_final)
            .ok_or_else(|| Error::domain("trajectory shorter than the selection time"))?;
        if crit.accepts(q) {
            stream_ids.push(ens.stream_ids[i]);
            paths.push(tr.states.clone());
        }
    }
    let steps = (0..ens.trajectories.first().map_or(0, |t| t.len())).collect();
    empty_check(SubEnsemble {
        dt: ens.config.dt,
        steps,
        stream_ids,
        paths,
        total: ens.len(),
    })
}

/// Simulates `streams` in parallel and keeps accepted members only, at the
/// grid points nearest to `sample_times`.
pub fn select_streaming(
    cfg: &SimConfig,
    integrator: Integrator,
    streams: Range<u64>,
    crit: &SelectionCriterion,
    sample_times: &[f64],
) -> Result<SubEnsemble> {
    cfg.validate()?;
    let k_final = check_horizon(cfg, crit)?;
    let steps = sample_steps(cfg, sample_times)?;
    let mut query = steps.clone();
    query.push(k_final);
    let total = (streams.end - streams.start) as usize;
    if total == 0 {
        return Err(Error::domain("no streams requested"));
    }
    let kept: Vec<Option<(u64, Vec<BlochState>)>> = streams
        .into_par_iter()
        .map(|id| {
            let mut states = sample_path(cfg, id, integrator, &query)?;
            let last = states.pop().expect("final step requested");
            Ok(crit.accepts(&last).then_some((id, states)))
        })
        .collect::<Result<_>>()?;
    let (stream_ids, paths) = kept.into_iter().flatten().unzip();
    empty_check(SubEnsemble {
        dt: cfg.dt,
        steps,
        stream_ids,
        paths,
        total,
    })
}

fn sample_steps(cfg: &SimConfig, sample_times: &[f64]) -> Result<Vec<usize>> {
    let mut steps = Vec::with_capacity(sample_times.len());
    for &t in sample_times {
        let k = cfg
            .step_index(t)
            .ok_or_else(|| Error::domain(format!("sample time {t} outside the simulated range")))?;
        steps.push(k);
    }
    steps.sort_unstable();
    steps.dedup();
    Ok(steps)
}

/// Post-selects trajectories reconstructed by [`crate::bayes::reconstruct`]
/// from the readouts of `streams`, keeping the grid points nearest to
/// `sample_times`.
pub fn select_reconstructed(
    cfg: &SimConfig,
    streams: Range<u64>,
    crit: &SelectionCriterion,
    sample_times: &[f64],
) -> Result<SubEnsemble> {
    cfg.validate()?;
    let k_final = check_horizon(cfg, crit)?;
    let steps = sample_steps(cfg, sample_times)?;
    let total = (streams.end - streams.start) as usize;
    if total == 0 {
        return Err(Error::domain("no streams requested"));
    }
    let kept: Vec<Option<(u64, Vec<BlochState>)>> = streams
        .into_par_iter()
        .map(|id| {
            let (_, rec) = simulate_trajectory(cfg, id)?;
            let tr = reconstruct(&rec, &cfg.initial_state, cfg)?;
            Ok(crit
                .accepts(&tr.states[k_final])
                .then(|| (id, steps.iter().map(|&k| tr.states[k]).collect())))
        })
        .collect::<Result<_>>()?;
    let (stream_ids, paths) = kept.into_iter().flatten().unzip();
    empty_check(SubEnsemble {
        dt: cfg.dt,
        steps,
        stream_ids,
        paths,
        total,
    })
}

/// Post-selects already computed trajectories on the grid of `cfg`.
pub fn select_trajectories(
    cfg: &SimConfig,
    trajectories: &[Trajectory],
    crit: &SelectionCriterion,
    sample_times: &[f64],
) -> Result<SubEnsemble> {
    let k_final = check_horizon(cfg, crit)?;
    let steps = sample_steps(cfg, sample_times)?;
    let mut stream_ids = Vec::new();
    let mut paths = Vec::new();
    for (i, tr) in trajectories.iter().enumerate() {
        let last = steps.last().copied().unwrap_or(0).max(k_final);
        if tr.len() <= last {
            return Err(Error::domain(format!("trajectory {i} has {} points, needs {}", tr.len(), last + 1)));
        }
        if crit.accepts(&tr.states[k_final]) {
            stream_ids.push(i as u64);
            paths.push(steps.iter().map(|&k| tr.states[k]).collect());
        }
    }
    empty_check(SubEnsemble {
        dt: cfg.dt,
        steps,
        stream_ids,
        paths,
        total: trajectories.len(),
    })
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

/// Compensated sum of `v` taken in sorted order, so the result does not
/// depend on the order of the members.
fn stable_sum(v: &mut [f64]) -> f64 {
    v.sort_unstable_by(f64::total_cmp);
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for &x in v.iter() {
        let t = sum + x;
        comp += if sum.abs() >= x.abs() { (sum - t) + x } else { (x - t) + sum };
        sum = t;
    }
    sum + comp
}

/// Mean of `v`, shifted by its smallest member so constant samples are
/// reproduced exactly.
fn stable_mean(v: &mut [f64]) -> f64 {
    let shift = v.iter().copied().fold(f64::INFINITY, f64::min);
    let mut d: Vec<f64> = v.iter().map(|x| x - shift).collect();
    shift + stable_sum(&mut d) / v.len() as f64
}

fn mean_and_se(mut v: Vec<f64>) -> Estimate {
    let n = v.len() as f64;
    let mean = stable_mean(&mut v);
    let mut sq: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = stable_sum(&mut sq) / (n - 1.0);
    Estimate {
        value: mean,
        std_error: (var / n).sqrt(),
    }
}

pub fn mean(sub: &SubEnsemble, a: Coord, t: f64) -> Result<Estimate> {
    sub.need(2)?;
    Ok(mean_and_se(sub.values(a, t)?))
}

/// `<a(t1) b(t2)>` over the sub-ensemble.
pub fn correlate(sub: &SubEnsemble, a: Coord, b: Coord, t1: f64, t2: f64) -> Result<Estimate> {
    sub.need(2)?;
    let (va, vb) = (sub.values(a, t1)?, sub.values(b, t2)?);
    Ok(mean_and_se(va.iter().zip(&vb).map(|(x, y)| x * y).collect()))
}

/// Unbiased sample covariance of `a(t1)` and `b(t2)`. The standard error is
/// that of the mean of the centred products.
pub fn covariance(sub: &SubEnsemble, a: Coord, b: Coord, t1: f64, t2: f64) -> Result<Estimate> {
    sub.need(2)?;
    let (mut va, mut vb) = (sub.values(a, t1)?, sub.values(b, t2)?);
    let n = va.len() as f64;
    let ma = stable_mean(&mut va.clone());
    let mb = stable_mean(&mut vb.clone());
    for x in va.iter_mut() {
        *x -= ma;
    }
    for y in vb.iter_mut() {
        *y -= mb;
    }
    let mut prods: Vec<f64> = va.iter().zip(&vb).map(|(x, y)| x * y).collect();
    let pm = mean_and_se(prods.clone());
    let cov = stable_sum(&mut prods) / (n - 1.0);
    Ok(Estimate {
        value: cov,
        std_error: pm.std_error,
    })
}

pub fn variance(sub: &SubEnsemble, a: Coord, t: f64) -> Result<Estimate> {
    covariance(sub, a, a, t, t)
}

/// Which statistic a [`CorrelatorResult`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Statistic {
    Moment,
    Covariance,
}

/// Values of one correlator kind along `t1` at fixed `t2`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelatorResult {
    pub kind: Kind,
    pub t1_grid: Vec<f64>,
    pub t2_ref: f64,
    pub values: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub accepted_count: usize,
    pub total_count: usize,
}

impl CorrelatorResult {
    /// Exact values (zero error) such as analytic curves.
    pub fn exact(kind: Kind, t1_grid: Vec<f64>, t2_ref: f64, f: impl Fn(f64) -> Result<f64>) -> Result<Self> {
        let values = t1_grid.iter().map(|&t| f(t)).collect::<Result<Vec<_>>>()?;
        Ok(CorrelatorResult {
            kind,
            std_errors: vec![0.0; values.len()],
            t1_grid,
            t2_ref,
            values,
            accepted_count: 0,
            total_count: 0,
        })
    }

    pub fn estimate(sub: &SubEnsemble, kind: Kind, t1_grid: &[f64], t2_ref: f64, stat: Statistic) -> Result<Self> {
        let mut values = Vec::with_capacity(t1_grid.len());
        let mut std_errors = Vec::with_capacity(t1_grid.len());
        for &t1 in t1_grid {
            let e = match stat {
                Statistic::Moment => correlate(sub, kind.0, kind.1, t1, t2_ref)?,
                Statistic::Covariance => covariance(sub, kind.0, kind.1, t1, t2_ref)?,
            };
            values.push(e.value);
            std_errors.push(e.std_error);
        }
        Ok(CorrelatorResult {
            kind,
            t1_grid: t1_grid.to_vec(),
            t2_ref,
            values,
            std_errors,
            accepted_count: sub.accepted(),
            total_count: sub.total,
        })
    }

    pub fn rows(&self) -> impl Iterator<Item = CorrelatorRow> + '_ {
        (0..self.values.len()).map(move |i| CorrelatorRow {
            t1: self.t1_grid[i],
            t2: self.t2_ref,
            kind: self.kind,
            value: self.values[i],
            std_error: self.std_errors[i],
            accepted: self.accepted_count,
            total: self.total_count,
        })
    }
}

/// One line of a correlator CSV file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelatorRow {
    pub t1: f64,
    pub t2: f64,
    pub kind: Kind,
    pub value: f64,
    pub std_error: f64,
    pub accepted: usize,
    pub total: usize,
}

pub fn write_correlators<W: Write>(w: W, results: &[CorrelatorResult]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in results {
        for row in r.rows() {
            out.serialize(row)?;
        }
    }
    out.flush().map_err(|e| Error::io("<csv>", e))
}

pub fn write_correlators_file(path: impl AsRef<Path>, results: &[CorrelatorResult]) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_correlators(f, results)
}

pub fn read_correlators<R: Read>(r: R) -> Result<Vec<CorrelatorRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    let rows = rdr.deserialize().collect::<std::result::Result<Vec<CorrelatorRow>, _>>()?;
    Ok(rows)
}

pub fn read_correlators_file(path: impl AsRef<Path>) -> Result<Vec<CorrelatorRow>> {
    let path = path.as_ref();
    read_correlators(File::open(path).map_err(|e| Error::io(path, e))?)
}

/// Regroups rows into results: consecutive rows sharing kind, `t2` and
/// counts form one curve.
pub fn group_rows(rows: &[CorrelatorRow]) -> Vec<CorrelatorResult> {
    let mut out: Vec<CorrelatorResult> = Vec::new();
    for row in rows {
        let same = out.last().is_some_and(|r| {
            r.kind == row.kind
                && r.t2_ref.to_bits() == row.t2.to_bits()
                && r.accepted_count == row.accepted
                && r.total_count == row.total
        });
        if !same {
            out.push(CorrelatorResult {
                kind: row.kind,
                t1_grid: Vec::new(),
                t2_ref: row.t2,
                values: Vec::new(),
                std_errors: Vec::new(),
                accepted_count: row.accepted,
                total_count: row.total,
            });
        }
        let r = out.last_mut().expect("pushed above");
        r.t1_grid.push(row.t1);
        r.values.push(row.value);
        r.std_errors.push(row.std_error);
    }
    out
}
