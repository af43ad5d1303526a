//! Step-size training over loaded instances.

use ipnb_core::beamform::{fd_ir_solve, Dims};
use ipnb_core::kddd::{init_from_fd, kddd_train, Executor, Sample, TrainConfig, TrainReport};
use ipnb_core::linalg::Tally;
use ipnb_core::scenario::Instance;

use crate::error::{Error, Result};
use crate::exec::Rayon;
use crate::rng::stream;

/// Pairs each instance with its digital-solution initialisation.
pub fn samples_from(instances: &[Instance], dims: Dims) -> Result<Vec<Sample>> {
    Rayon
        .map(instances.len(), |i| {
            let inst = &instances[i];
            let fd = fd_ir_solve(&inst.channel, &inst.ipn, dims.ns, 1e-8, &mut Tally::new())?;
            let init = init_from_fd(&fd.tx, dims, &inst.channel, &inst.ipn)?;
            Ok(Sample { instance: inst.clone(), init })
        })
        .into_iter()
        .collect()
}

/// Holds out the trailing `ceil(valid_fraction · n)` instances (at least one)
/// for validation and trains on the rest.
pub fn train_on(instances: &[Instance], dims: Dims, cfg: &TrainConfig, valid_fraction: f64, seed: u64) -> Result<TrainReport> {
    if !(0.0..1.0).contains(&valid_fraction) {
        return Err(Error::Config("validation fraction must lie in [0, 1)".into()));
    }
    let n = instances.len();
    let nv = ((valid_fraction * n as f64).ceil() as usize).max(1);
    if n < nv + 1 {
        return Err(Error::Config(format!("{n} instances leave nothing to train on")));
    }
    let samples = samples_from(instances, dims)?;
    let (tr, va) = samples.split_at(n - nv);
    Ok(kddd_train(tr, va, cfg, &Rayon, &mut stream(seed, 0))?)
}
