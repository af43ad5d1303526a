//! Dataset directories exchanged with external predictors and the step-size
//! trainer.
//!
//! A dataset holds `scenario.json` and, per scenario, `channel.ipnt`
//! (`[T, X, K_A, K_B]`), `ipn_true.ipnt` and `ipn_obs.ipnt` (`[T, X, K_A, K_A]`).
//! A single scenario is written at the top level; several go into `s0000/`,
//! `s0001/`, ... Scenario `i` draws from stream `i` of the config seed.

use std::fs;
use std::path::{Path, PathBuf};

use ipnb_core::ipn::{perturb_covariance, ErrorModel, IpnSeries};
use ipnb_core::scenario::{simulate, Instance, ScenarioConfig};
use serde_json::{json, Map, Value};

use crate::config::{read_json, write_json};
use crate::error::{Error, Result};
use crate::rng::stream;
use crate::tensor::{channels_to_tensor, series_to_tensor, tensor_to_channels, tensor_to_series, Tensor};

pub const SCENARIO_FILE: &str = "scenario.json";
pub const CHANNEL_FILE: &str = "channel.ipnt";
pub const TRUTH_FILE: &str = "ipn_true.ipnt";
pub const OBSERVED_FILE: &str = "ipn_obs.ipnt";

#[derive(Clone, Debug, PartialEq)]
pub struct ExportOptions {
    pub frames: usize,
    pub scenarios: usize,
    /// Snapshots per frame behind `ipn_obs`; 0 observes the true covariance.
    pub snapshots: usize,
    /// Estimation error added to `ipn_obs`.
    pub rho_db: Option<f64>,
}

/// Snapshot estimate (or truth) with optional error injection.
pub fn observe(truth: &IpnSeries, estimate: Option<&IpnSeries>, rho_db: Option<f64>, rng: &mut impl rand::Rng) -> Result<IpnSeries> {
    let base = estimate.unwrap_or(truth);
    match rho_db {
        None => Ok(base.clone()),
        Some(rho) => {
            let em = ErrorModel::new(rho);
            Ok(IpnSeries::new(base.frames().iter().map(|f| perturb_covariance(f, &em, rng)).collect())?)
        }
    }
}

fn meta(kind: &str, opts: &ExportOptions, index: usize) -> Map<String, Value> {
    let v = json!({"kind": kind, "scenario": index, "snapshots": opts.snapshots, "rhoDb": opts.rho_db});
    v.as_object().cloned().unwrap_or_default()
}

fn create_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn write_tensor(t: &Tensor, p: &Path) -> Result<()> {
    t.write(p).map_err(|e| match e {
        crate::tensor::TensorError::Io(io) => Error::io(p, io),
        other => other.into(),
    })
}

fn read_tensor(p: &Path) -> Result<Tensor> {
    Tensor::read(p).map_err(|e| match e {
        crate::tensor::TensorError::Io(io) => Error::io(p, io),
        other => other.into(),
    })
}

/// Writes the dataset and returns the per-scenario directories.
pub fn export_dataset(cfg: &ScenarioConfig, opts: &ExportOptions, out: &Path) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    if opts.frames == 0 || opts.scenarios == 0 {
        return Err(Error::Config("frames and scenarios must be at least 1".into()));
    }
    create_dir(out)?;
    let cfg = ScenarioConfig { frames: opts.frames, ..cfg.clone() };
    write_json(&out.join(SCENARIO_FILE), &cfg)?;
    let mut dirs = Vec::with_capacity(opts.scenarios);
    for i in 0..opts.scenarios {
        let dir = if opts.scenarios == 1 { out.to_path_buf() } else { out.join(format!("s{i:04}")) };
        create_dir(&dir)?;
        let mut rng = stream(cfg.seed, i as u64);
        let traj = simulate(&cfg, opts.frames, opts.snapshots, &mut rng)?;
        let obs = observe(&traj.truth, traj.estimate.as_ref(), opts.rho_db, &mut rng)?;
        write_tensor(&channels_to_tensor(&traj.channels, meta("channel", opts, i))?, &dir.join(CHANNEL_FILE))?;
        write_tensor(&series_to_tensor(&traj.truth, meta("ipn_true", opts, i))?, &dir.join(TRUTH_FILE))?;
        write_tensor(&series_to_tensor(&obs, meta("ipn_obs", opts, i))?, &dir.join(OBSERVED_FILE))?;
        dirs.push(dir);
    }
    Ok(dirs)
}

/// Per-scenario directories of a dataset, in order.
pub fn scenario_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    if root.join(CHANNEL_FILE).is_file() {
        return Ok(vec![root.to_path_buf()]);
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(CHANNEL_FILE).is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::Config(format!("{} holds no {CHANNEL_FILE}", root.display())));
    }
    Ok(dirs)
}

/// Scenario config and one `(channel, true covariance)` instance per frame.
pub fn load_dataset(root: &Path) -> Result<(ScenarioConfig, Vec<Instance>)> {
    let cfg: ScenarioConfig = read_json(&root.join(SCENARIO_FILE))?;
    cfg.validate()?;
    let mut out = Vec::new();
    for dir in scenario_dirs(root)? {
        let chans = tensor_to_channels(&read_tensor(&dir.join(CHANNEL_FILE))?)?;
        let truth = tensor_to_series(&read_tensor(&dir.join(TRUTH_FILE))?)?;
        if chans.len() != truth.len() {
            return Err(Error::Config(format!("{}: channel and covariance frame counts differ", dir.display())));
        }
        for (channel, ipn) in chans.into_iter().zip(truth.into_frames()) {
            let dims_ok = channel.h.len() == cfg.x
                && channel.h.iter().all(|h| h.shape() == (cfg.ka.len(), cfg.kb.len()))
                && ipn.subcarriers() == cfg.x
                && ipn.antennas() == cfg.ka.len();
            if !dims_ok {
                return Err(Error::Config(format!("{}: tensors do not match {SCENARIO_FILE}", dir.display())));
            }
            out.push(Instance { channel, ipn });
        }
    }
    Ok((cfg, out))
}
