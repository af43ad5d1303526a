use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ipnb::config::{env_seed_override, load_scenario, read_json};
use ipnb::dataset::{export_dataset, load_dataset, ExportOptions};
use ipnb::error::{exit, Error, Result};
use ipnb::experiment::{emit_plot_data, run_experiment_with, ExperimentSpec, Solver};
use ipnb::rng::stream;
use ipnb::schedule::{read_schedule, write_schedule};
use ipnb::tensor::{tensor_to_series, Tensor, TensorError};
use ipnb::train::train_on;
use ipnb_core::beamform::{ao_ir_solve, fd_ir_solve, mse_digital, mse_objective, random_init, AoConfig, Dims};
use ipnb_core::flops::{analytic_predictor, count_flops, Method, PredictorDims};
use ipnb_core::ipn::{nmse, to_db, IpnSeries};
use ipnb_core::kddd::{init_from_fd, kddd_forward, GradEstimator, TrainConfig};
use ipnb_core::linalg::Tally;
use ipnb_core::scenario::{draw_instance, ScenarioConfig};
use serde::Deserialize;
use serde_json::{json, Map, Value};

#[derive(Parser)]
#[command(name = "ipnb", version, about = "Interference-robust hybrid beamforming toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolveMethod {
    Ao,
    Kddd,
    Fd,
}

/// Comma-separated steps per outer iteration or layer.
#[derive(Clone, Debug)]
struct Inner(Vec<usize>);

fn parse_inner(s: &str) -> std::result::Result<Inner, String> {
    s.split(',').map(|t| t.trim().parse::<usize>().map_err(|e| format!("{t:?}: {e}"))).collect::<std::result::Result<_, _>>().map(Inner)
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate the frames of one scenario file into a dataset directory.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        snapshots: usize,
        #[arg(long, allow_negative_numbers = true)]
        rho_db: Option<f64>,
    },
    /// Export tensors for external predictors.
    ExportDataset {
        #[arg(long)]
        frames: usize,
        #[arg(long)]
        out: PathBuf,
        /// Scenario file; desk-scale defaults otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        scenarios: usize,
        #[arg(long, default_value_t = 0)]
        snapshots: usize,
        #[arg(long, allow_negative_numbers = true)]
        rho_db: Option<f64>,
    },
    /// Solve one drawn instance and report its MSE.
    Solve {
        #[arg(long, value_enum)]
        method: SolveMethod,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        schedule: Option<PathBuf>,
        /// Inner steps per outer iteration for AO.
        #[arg(long, value_parser = parse_inner, default_value = "5,2")]
        inner: Inner,
    },
    /// Train unfolded step sizes on a dataset directory.
    TrainKddd {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = parse_inner, default_value = "5,2")]
        inner: Inner,
        #[arg(long, default_value_t = 40)]
        epochs: usize,
        #[arg(long, default_value_t = 16)]
        batch: usize,
        #[arg(long, default_value_t = 0.02)]
        lr: f64,
        #[arg(long, default_value_t = 0.1)]
        init_gamma: f64,
        /// Simultaneous-perturbation gradients with this many directions.
        #[arg(long)]
        spsa: Option<usize>,
        #[arg(long, default_value_t = 0.2)]
        valid_fraction: f64,
        /// Defaults to the dataset seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Per-epoch loss curve as CSV.
        #[arg(long)]
        curve: Option<PathBuf>,
    },
    /// Run an experiment spec and write plot data.
    Sweep {
        #[arg(long)]
        spec: PathBuf,
        /// Overrides the spec's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Count operations of AO and the unfolded solver.
    Flops {
        #[arg(long)]
        dims: PathBuf,
    },
    /// Validate a predicted covariance tensor and score it.
    ImportPredictions {
        #[arg(long)]
        file: PathBuf,
        /// True covariances to score against, matched by frame id.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
}

fn print(v: &Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json value"));
}

fn read_tensor(p: &Path) -> Result<Tensor> {
    Tensor::read(p).map_err(|e| match e {
        TensorError::Io(io) => Error::io(p, io),
        other => other.into(),
    })
}

fn export(cfg: &ScenarioConfig, opts: ExportOptions, out: &Path) -> Result<()> {
    let dirs = export_dataset(cfg, &opts, out)?;
    print(&json!({"frames": opts.frames, "scenarios": dirs, "seed": cfg.seed}));
    Ok(())
}

fn solve(method: SolveMethod, scenario: &Path, schedule: Option<&Path>, inner: Vec<usize>) -> Result<()> {
    let cfg = load_scenario(scenario)?;
    let sched = match (method, schedule) {
        (SolveMethod::Kddd, None) => return Err(Error::MissingSchedule("kddd".into())),
        (SolveMethod::Kddd, Some(p)) => Some(read_schedule(p)?),
        _ => None,
    };
    let dims = Dims::from_config(&cfg);
    let mut rng = stream(cfg.seed, 0);
    let inst = draw_instance(&cfg, &mut rng);
    let (h, r) = (&inst.channel, &inst.ipn);
    let mut fd_tally = Tally::new();
    let fd = fd_ir_solve(h, r, dims.ns, 1e-8, &mut fd_tally)?;
    let fd_mse = mse_digital(&fd.tx, h, r)?;
    let mut tally = Tally::new();
    let tx = match method {
        SolveMethod::Fd => {
            let powers: Vec<f64> = fd.tx.v.iter().map(|v| v.norm_fro_sq()).collect();
            print(&json!({"method": "fd", "mse": fd_mse, "iterations": fd.iterations, "converged": fd.converged, "powers": powers, "flops": fd_tally.flops()}));
            return Ok(());
        }
        SolveMethod::Ao => {
            let init = random_init(dims, h, r, &mut rng)?;
            ao_ir_solve(h, r, &AoConfig::fixed(inner), &init, &mut tally)?.tx
        }
        SolveMethod::Kddd => {
            let init = init_from_fd(&fd.tx, dims, h, r)?;
            kddd_forward(h, r, sched.as_ref().expect("checked above"), &init, &mut tally)?
        }
    };
    let name = if matches!(method, SolveMethod::Ao) { "ao" } else { "kddd" };
    print(&json!({
        "method": name,
        "mse": mse_objective(&tx, h, r)?,
        "fdMse": fd_mse,
        "modulusDefect": tx.modulus_defect(),
        "powers": tx.powers(),
        "flops": tally.flops(),
    }));
    Ok(())
}

fn train_kddd(
    data: &Path,
    out: &Path,
    cfg: TrainConfig,
    valid_fraction: f64,
    seed: Option<u64>,
    curve: Option<&Path>,
) -> Result<()> {
    let (scenario, instances) = load_dataset(data)?;
    let mut seed = seed.unwrap_or(scenario.seed);
    env_seed_override(&mut seed)?;
    let report = train_on(&instances, Dims::from_config(&scenario), &cfg, valid_fraction, seed)?;
    let layers: Vec<Value> = report
        .curves
        .iter()
        .map(|c| json!({"zeroLoss": c.zero_loss, "train": c.chosen_train, "valid": c.chosen_valid}))
        .collect();
    let mut meta = Map::new();
    meta.insert("instances".into(), json!(instances.len()));
    meta.insert("validFraction".into(), json!(valid_fraction));
    meta.insert("seed".into(), json!(seed));
    meta.insert("config".into(), serde_json::to_value(&cfg).expect("config json"));
    meta.insert("layers".into(), json!(layers));
    write_schedule(out, &report.schedule, meta)?;
    if let Some(path) = curve {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["layer", "epoch", "train_mse", "valid_mse"])?;
        for (l, c) in report.curves.iter().enumerate() {
            for (e, (t, v)) in c.train.iter().zip(&c.valid).enumerate() {
                w.write_record([(l + 1).to_string(), e.to_string(), t.to_string(), v.to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    print(&json!({"schedule": out, "layers": layers}));
    Ok(())
}

fn sweep(spec_path: &Path, out: Option<PathBuf>) -> Result<()> {
    let mut spec: ExperimentSpec = read_json(spec_path)?;
    env_seed_override(&mut spec.seed)?;
    let base = spec_path.parent().unwrap_or(Path::new("."));
    let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
    let sched = match &spec.schedule {
        Some(p) if spec.solvers.contains(&Solver::Kddd) => Some(read_schedule(&resolve(p))?),
        _ => None,
    };
    let dir = out.or_else(|| spec.out.as_deref().map(resolve)).ok_or_else(|| Error::Config("no output directory".into()))?;
    let table = run_experiment_with(&spec, sched.as_ref())?;
    let files = emit_plot_data(&table, &spec, &dir)?;
    print(&json!({"out": dir, "files": files, "rows": table.rows.len()}));
    Ok(())
}

fn default_inner() -> Vec<usize> {
    vec![5, 2]
}
fn default_scenarios() -> usize {
    5
}

/// `flops --dims` input.
#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct FlopsSpec {
    #[serde(default = "ScenarioConfig::desk")]
    scenario: ScenarioConfig,
    #[serde(default = "default_inner")]
    inner: Vec<usize>,
    #[serde(default = "default_scenarios")]
    scenarios: usize,
    #[serde(default)]
    predictor: Option<PredictorDims>,
}

fn flops(path: &Path) -> Result<()> {
    let mut spec: FlopsSpec = read_json(path)?;
    env_seed_override(&mut spec.scenario.seed)?;
    if spec.scenarios == 0 || spec.inner.is_empty() {
        return Err(Error::Config("scenarios and inner must be nonempty".into()));
    }
    let ao = count_flops(Method::Ao, &spec.scenario, &spec.inner, spec.scenarios, &mut stream(spec.scenario.seed, 0))?;
    let kd = count_flops(Method::Kddd, &spec.scenario, &spec.inner, spec.scenarios, &mut stream(spec.scenario.seed, 0))?;
    print(&json!({
        "ao": ao,
        "kddd": kd,
        "measuredRatio": kd.measured_flops / ao.measured_flops,
        "analyticRatio": kd.analytic / ao.analytic,
        "predictor": spec.predictor.as_ref().map(analytic_predictor),
    }));
    Ok(())
}

fn import_predictions(file: &Path, truth: Option<&Path>) -> Result<()> {
    let pred = tensor_to_series(&read_tensor(file)?)?;
    let defect = pred.frames().iter().flat_map(|f| &f.r).map(|m| m.hermitian_defect() / m.norm_fro().max(f64::MIN_POSITIVE)).fold(0.0, f64::max);
    let mut report = json!({
        "frames": pred.len(),
        "bounds": pred.bounds(),
        "subcarriers": pred.frames().first().map(|f| f.subcarriers()),
        "antennas": pred.frames().first().map(|f| f.antennas()),
        "hermitianDefect": defect,
    });
    if let Some(tp) = truth {
        let all = tensor_to_series(&read_tensor(tp)?)?;
        let (lo, hi) = pred.bounds().ok_or_else(|| Error::Config("prediction holds no frames".into()))?;
        let (tlo, thi) = all.bounds().ok_or_else(|| Error::Config("truth holds no frames".into()))?;
        if lo < tlo || hi > thi {
            return Err(Error::Config(format!("predicted frames {lo}..={hi} outside truth frames {tlo}..={thi}")));
        }
        let actual: IpnSeries = all.window(lo - tlo, pred.len())?;
        let v = nmse(&pred, &actual)?;
        report["nmse"] = json!(v);
        report["nmseDb"] = json!(to_db(v));
    }
    print(&report);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Simulate { config, out, snapshots, rho_db } => {
            let cfg = load_scenario(&config)?;
            export(&cfg, ExportOptions { frames: cfg.frames, scenarios: 1, snapshots, rho_db }, &out)
        }
        Cmd::ExportDataset { frames, out, config, scenarios, snapshots, rho_db } => {
            let cfg = match config {
                Some(p) => load_scenario(&p)?,
                None => {
                    let mut c = ScenarioConfig::desk();
                    env_seed_override(&mut c.seed)?;
                    c
                }
            };
            export(&cfg, ExportOptions { frames, scenarios, snapshots, rho_db }, &out)
        }
        Cmd::Solve { method, scenario, schedule, inner } => solve(method, &scenario, schedule.as_deref(), inner.0),
        Cmd::TrainKddd { data, out, inner, epochs, batch, lr, init_gamma, spsa, valid_fraction, seed, curve } => {
            let estimator = match spsa {
                Some(samples) => GradEstimator::Spsa { c: 1e-2, samples },
                None => TrainConfig::default().estimator,
            };
            let cfg = TrainConfig { inner: inner.0, epochs, batch, lr, init_gamma, estimator, ..TrainConfig::default() };
            train_kddd(&data, &out, cfg, valid_fraction, seed, curve.as_deref())
        }
        Cmd::Sweep { spec, out } => sweep(&spec, out),
        Cmd::Flops { dims } => flops(&dims),
        Cmd::ImportPredictions { file, truth } => import_predictions(&file, truth.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::from(exit::OK as u8),
        Err(e) => {
            eprintln!("ipnb: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
