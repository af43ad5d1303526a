//! Parameter sweeps over scenario draws.
//!
//! Scenario `s` of every sweep point draws its geometry and observations
//! from stream `2s` of the spec seed and its solver randomness from stream
//! `2s + 1`, so sweep points share scenarios and results do not depend on
//! scheduling.
//!
//! Per scenario, `history + max(horizon, 1)` frames are simulated. The
//! observed series (snapshot estimates or truth, with optional error) feeds
//! the solvers: at frame `history − 1 + horizon` the solvers see the
//! observation itself for `horizon = 0` and the persistence prediction
//! otherwise, and are scored on the true channel and covariance of that
//! frame. The persistence row scores the prediction `max(horizon, 1)`
//! frames past the history.

use std::fs;
use std::path::{Path, PathBuf};

use ipnb_core::beamform::{ao_ir_solve, fd_ir_solve, mse_digital, mse_objective, random_init, AoConfig, Dims};
use ipnb_core::ipn::{nmse, predict_persistence, to_db, IpnCovariance, IpnSeries};
use ipnb_core::kddd::{init_from_fd, kddd_forward, StepSizeSchedule};
use ipnb_core::linalg::Tally;
use ipnb_core::scenario::{simulate, ScenarioConfig, Upa};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::write_json;
use crate::dataset::observe;
use crate::error::{Error, Result};
use crate::rng::stream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum SweepVar {
    SnrDb,
    SirDb,
    /// Antennas per end; arrays are laid out by [`upa_for`].
    Antennas,
    RhoDb,
    /// NLoS path count.
    Paths,
    FrameHorizon,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Fd,
    Ao,
    Kddd,
    Persistence,
}

impl Solver {
    pub fn id(self) -> &'static str {
        match self {
            Self::Fd => "fd",
            Self::Ao => "ao",
            Self::Kddd => "kddd",
            Self::Persistence => "persistence",
        }
    }

    fn is_beamformer(self) -> bool {
        self != Self::Persistence
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Metric {
    Mse,
    NmseDb,
    Flops,
}

impl Metric {
    pub fn id(self) -> &'static str {
        match self {
            Self::Mse => "mse",
            Self::NmseDb => "nmseDb",
            Self::Flops => "flops",
        }
    }

    fn applies_to(self, s: Solver) -> bool {
        match self {
            Self::Mse | Self::Flops => s.is_beamformer(),
            Self::NmseDb => !s.is_beamformer(),
        }
    }
}

fn default_metrics() -> Vec<Metric> {
    vec![Metric::Mse, Metric::NmseDb]
}
fn default_base() -> ScenarioConfig {
    ScenarioConfig::desk()
}
fn default_ao_inner() -> Vec<usize> {
    vec![5, 2]
}
fn default_history() -> usize {
    5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ExperimentSpec {
    pub sweep: SweepVar,
    pub values: Vec<f64>,
    /// Scenario draws per sweep value.
    pub scenarios: usize,
    pub solvers: Vec<Solver>,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<Metric>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    pub seed: u64,
    #[serde(default = "default_base")]
    pub base: ScenarioConfig,
    #[serde(default = "default_ao_inner")]
    pub ao_inner: Vec<usize>,
    /// Step-size schedule file, required by `kddd`.
    #[serde(default)]
    pub schedule: Option<PathBuf>,
    /// Snapshots per frame; 0 observes the true covariance.
    #[serde(default)]
    pub snapshots: usize,
    #[serde(default)]
    pub rho_db: Option<f64>,
    #[serde(default = "default_history")]
    pub history: usize,
    #[serde(default)]
    pub horizon: usize,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.values.is_empty() || self.values.iter().any(|v| !v.is_finite()) {
            return bad("values must be a nonempty list of finite numbers");
        }
        if self.scenarios == 0 || self.history == 0 {
            return bad("scenarios and history must be at least 1");
        }
        if self.solvers.is_empty() || self.metrics.is_empty() {
            return bad("solvers and metrics must be nonempty");
        }
        if self.ao_inner.is_empty() {
            return bad("aoInner must be nonempty");
        }
        let integral = matches!(self.sweep, SweepVar::Antennas | SweepVar::Paths | SweepVar::FrameHorizon);
        if integral && self.values.iter().any(|v| *v < 0.0 || v.fract() != 0.0) {
            return bad("antennas, paths and frameHorizon take non-negative integers");
        }
        for v in &self.values {
            self.point_config(*v).cfg.validate()?;
        }
        Ok(())
    }

    fn point_config(&self, v: f64) -> Point {
        let mut p = Point { cfg: self.base.clone(), rho_db: self.rho_db, horizon: self.horizon };
        match self.sweep {
            SweepVar::SnrDb => p.cfg.snr_db = v,
            SweepVar::SirDb => p.cfg.sir_db = v,
            SweepVar::Antennas => {
                let a = upa_for(v as usize);
                p.cfg.ka = a;
                p.cfg.kb = a;
            }
            SweepVar::RhoDb => p.rho_db = Some(v),
            SweepVar::Paths => p.cfg.u = v as usize,
            SweepVar::FrameHorizon => p.horizon = v as usize,
        }
        p
    }
}

/// Most nearly square `rows × cols` layout of `n` elements, `rows ≤ cols`.
pub fn upa_for(n: usize) -> Upa {
    let rows = (1..=n).take_while(|r| r * r <= n).filter(|r| n % r == 0).last().unwrap_or(0);
    Upa::new(rows, if rows == 0 { 0 } else { n / rows })
}

struct Point {
    cfg: ScenarioConfig,
    rho_db: Option<f64>,
    horizon: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub x: f64,
    pub solver: Solver,
    pub metric: Metric,
    pub mean: f64,
    pub stddev: f64,
    pub n: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn get(&self, x: f64, solver: Solver, metric: Metric) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.x == x && r.solver == solver && r.metric == metric)
    }
}

/// Per-solver metric values of one scenario, in `spec.solvers` order.
type ScenarioResult = Vec<Vec<(Metric, f64)>>;

fn floor_if_noisy(r: IpnCovariance, noisy: bool, floor: f64) -> IpnCovariance {
    if noisy {
        r.psd_floor(floor)
    } else {
        r
    }
}

fn run_scenario(spec: &ExperimentSpec, p: &Point, sched: Option<&StepSizeSchedule>, s: usize) -> Result<ScenarioResult> {
    let cfg = &p.cfg;
    let ahead = p.horizon.max(1);
    let mut rng = stream(spec.seed, 2 * s as u64);
    let traj = simulate(cfg, spec.history + ahead, spec.snapshots, &mut rng)?;
    let obs = observe(&traj.truth, traj.estimate.as_ref(), p.rho_db, &mut rng)?;
    let past = obs.window(0, spec.history)?;
    let te = spec.history - 1 + p.horizon;
    let (h, r_true) = (&traj.channels[te], &traj.truth.frames()[te]);
    let r_in = if p.horizon == 0 {
        past.frames()[spec.history - 1].clone()
    } else {
        predict_persistence(&past, p.horizon)?.into_frames().pop().expect("horizon ≥ 1")
    };
    let r_in = floor_if_noisy(r_in, spec.snapshots > 0 || p.rho_db.is_some(), cfg.noise_power());
    let dims = Dims::from_config(cfg);
    let mut srng = stream(spec.seed, 2 * s as u64 + 1);
    let mut out = Vec::with_capacity(spec.solvers.len());
    for &solver in &spec.solvers {
        let mut tally = Tally::new();
        let mse = match solver {
            Solver::Fd => Some(mse_digital(&fd_ir_solve(h, &r_in, dims.ns, 1e-8, &mut tally)?.tx, h, r_true)?),
            Solver::Ao => {
                let init = random_init(dims, h, &r_in, &mut srng)?;
                Some(mse_objective(&ao_ir_solve(h, &r_in, &AoConfig::fixed(spec.ao_inner.clone()), &init, &mut tally)?.tx, h, r_true)?)
            }
            Solver::Kddd => {
                let sched = sched.ok_or_else(|| Error::MissingSchedule("kddd".into()))?;
                let fd = fd_ir_solve(h, &r_in, dims.ns, 1e-8, &mut Tally::new())?;
                let init = init_from_fd(&fd.tx, dims, h, &r_in)?;
                Some(mse_objective(&kddd_forward(h, &r_in, sched, &init, &mut tally)?, h, r_true)?)
            }
            Solver::Persistence => None,
        };
        let mut vals = Vec::new();
        for &m in spec.metrics.iter().filter(|m| m.applies_to(solver)) {
            let v = match m {
                Metric::Mse => mse.expect("beamformer"),
                Metric::Flops => tally.flops() as f64,
                Metric::NmseDb => {
                    let pred = predict_persistence(&past, ahead)?;
                    let truth = traj.truth.window(spec.history, ahead)?;
                    let last = |s: IpnSeries| IpnSeries::new(s.into_frames().split_off(ahead - 1));
                    to_db(nmse(&last(pred)?, &last(truth)?)?)
                }
            };
            vals.push((m, v));
        }
        out.push(vals);
    }
    Ok(out)
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs the sweep, reading the `kddd` schedule from `spec.schedule`.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ResultTable> {
    let sched = match &spec.schedule {
        Some(p) if spec.solvers.contains(&Solver::Kddd) => Some(crate::schedule::read_schedule(p)?),
        _ => None,
    };
    run_experiment_with(spec, sched.as_ref())
}

/// Runs the sweep with an already loaded schedule.
pub fn run_experiment_with(spec: &ExperimentSpec, sched: Option<&StepSizeSchedule>) -> Result<ResultTable> {
    spec.validate()?;
    if spec.solvers.contains(&Solver::Kddd) && sched.is_none() {
        return Err(Error::MissingSchedule("kddd".into()));
    }
    let points: Vec<Point> = spec.values.iter().map(|&v| spec.point_config(v)).collect();
    let ns = spec.scenarios;
    let results: Vec<Result<ScenarioResult>> =
        (0..points.len() * ns).into_par_iter().map(|k| run_scenario(spec, &points[k / ns], sched, k % ns)).collect();
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for (pi, &x) in spec.values.iter().enumerate() {
        let chunk = &results[pi * ns..(pi + 1) * ns];
        for (si, &solver) in spec.solvers.iter().enumerate() {
            for (mi, &(metric, _)) in chunk[0][si].iter().enumerate() {
                let vals: Vec<f64> = chunk.iter().map(|r| r[si][mi].1).collect();
                if vals.iter().any(|v| !v.is_finite()) {
                    return Err(ipnb_core::Error::NonFinite("experiment metric").into());
                }
                let (mean, stddev) = mean_std(&vals);
                rows.push(ResultRow { x, solver, metric, mean, stddev, n: vals.len() });
            }
        }
    }
    Ok(ResultTable { rows })
}

pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Serialize, Deserialize)]
pub struct Summary {
    pub spec: ExperimentSpec,
    pub rows: Vec<ResultRow>,
}

/// Writes `{metric}_{solver}.csv` (header `x,mean,stddev,n`) per pair present
/// in the table, plus [`SUMMARY_FILE`]. Returns the CSV paths.
pub fn emit_plot_data(table: &ResultTable, spec: &ExperimentSpec, dir: &Path) -> Result<Vec<PathBuf>> {
    if table.rows.is_empty() {
        return Err(Error::Config("empty result table".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut keys: Vec<(Metric, Solver)> = Vec::new();
    for r in &table.rows {
        if !keys.contains(&(r.metric, r.solver)) {
            keys.push((r.metric, r.solver));
        }
    }
    let mut paths = Vec::with_capacity(keys.len());
    for (metric, solver) in keys {
        let path = dir.join(format!("{}_{}.csv", metric.id(), solver.id()));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["x", "mean", "stddev", "n"])?;
        for r in table.rows.iter().filter(|r| r.metric == metric && r.solver == solver) {
            w.write_record([r.x.to_string(), r.mean.to_string(), r.stddev.to_string(), r.n.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        paths.push(path);
    }
    write_json(&dir.join(SUMMARY_FILE), &Summary { spec: spec.clone(), rows: table.rows.clone() })?;
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn upa_layouts() {
        assert_eq!(upa_for(8), Upa::new(2, 4));
        assert_eq!(upa_for(16), Upa::new(4, 4));
        assert_eq!(upa_for(7), Upa::new(1, 7));
        assert_eq!(upa_for(12), Upa::new(3, 4));
    }

    #[test]
    fn sample_statistics() {
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn spec_defaults_and_validation() {
        let spec: ExperimentSpec =
            serde_json::from_str(r#"{"sweep":"snrDb","values":[0,5],"scenarios":2,"solvers":["fd","ao"],"seed":3}"#).unwrap();
        assert_eq!(spec.metrics, vec![Metric::Mse, Metric::NmseDb]);
        assert_eq!(spec.base, ScenarioConfig::desk());
        spec.validate().unwrap();
        let bad = ExperimentSpec { values: vec![], ..spec.clone() };
        assert!(bad.validate().is_err());
        let bad = ExperimentSpec { sweep: SweepVar::Paths, values: vec![1.5], ..spec.clone() };
        assert!(bad.validate().is_err());
        let bad = ExperimentSpec { sweep: SweepVar::Antennas, values: vec![1.0], ..spec };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn sweep_values_land_in_the_config() {
        let spec: ExperimentSpec =
            serde_json::from_str(r#"{"sweep":"antennas","values":[16],"scenarios":1,"solvers":["fd"],"seed":0}"#).unwrap();
        let p = spec.point_config(16.0);
        assert_eq!((p.cfg.ka, p.cfg.kb), (Upa::new(4, 4), Upa::new(4, 4)));
        let spec = ExperimentSpec { sweep: SweepVar::RhoDb, ..spec };
        assert_eq!(spec.point_config(10.0).rho_db, Some(10.0));
        let spec = ExperimentSpec { sweep: SweepVar::FrameHorizon, ..spec };
        assert_eq!(spec.point_config(3.0).horizon, 3);
    }

    #[test]
    fn kddd_without_schedule_fails_fast() {
        let spec: ExperimentSpec =
            serde_json::from_str(r#"{"sweep":"snrDb","values":[0],"scenarios":1,"solvers":["fd","kddd"],"seed":0}"#).unwrap();
        let e = run_experiment(&spec).unwrap_err();
        assert!(matches!(&e, Error::MissingSchedule(m) if m == "kddd"));
        assert_eq!(e.exit_code(), crate::error::exit::MISSING_SCHEDULE);
    }
}
