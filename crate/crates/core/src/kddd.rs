//! Unfolded solver with trainable step sizes.
//!
//! Each layer runs fixed-step Riemannian updates on `V_RF`, the closed-form
//! baseband precoder, fixed-step updates on `W_RF` and the closed-form
//! baseband combiner. No line search is performed, so with the step sizes
//! an AO run accepted the two produce the same trajectory.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::beamform::{fixed_step, mse_objective, optimal_beta, outer_iteration, DigitalTransceiver, Dims, HybridTransceiver, Side};
use crate::error::{Error, Result};
use crate::ipn::IpnCovariance;
use crate::linalg::{CMat, Tally};
use crate::manifold::{retract, UnitModulusMatrix};
use crate::scenario::{FrameChannel, Instance};

/// Per-layer step sizes for the precoder (`gamma_b`) and combiner
/// (`gamma_a`) updates. Both lists share the layer shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSizeSchedule {
    pub gamma_b: Vec<Vec<f64>>,
    pub gamma_a: Vec<Vec<f64>>,
}

impl StepSizeSchedule {
    pub fn new(gamma_b: Vec<Vec<f64>>, gamma_a: Vec<Vec<f64>>) -> Result<Self> {
        let s = Self { gamma_b, gamma_a };
        s.validate()?;
        Ok(s)
    }

    /// Every step equal to `value`, with `inner[i]` steps in layer `i`.
    pub fn constant(inner: &[usize], value: f64) -> Self {
        let g: Vec<Vec<f64>> = inner.iter().map(|&j| vec![value; j]).collect();
        Self { gamma_b: g.clone(), gamma_a: g }
    }

    pub fn zeros(inner: &[usize]) -> Self {
        Self::constant(inner, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.gamma_b.len() != self.gamma_a.len()
            || self.gamma_b.iter().zip(&self.gamma_a).any(|(b, a)| b.len() != a.len())
        {
            return Err(Error::Shape("precoder and combiner schedules differ in shape"));
        }
        if self.gamma_b.iter().chain(&self.gamma_a).flatten().any(|g| !g.is_finite() || *g < 0.0) {
            return Err(Error::InvalidConfig("step sizes must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn layers(&self) -> usize {
        self.gamma_b.len()
    }

    pub fn inner(&self) -> Vec<usize> {
        self.gamma_b.iter().map(Vec::len).collect()
    }

    /// Parameters of layer `i`, precoder steps first.
    fn layer_params(&self, i: usize) -> Vec<f64> {
        self.gamma_b[i].iter().chain(&self.gamma_a[i]).copied().collect()
    }

    fn set_layer_params(&mut self, i: usize, p: &[f64]) {
        let j = self.gamma_b[i].len();
        self.gamma_b[i].copy_from_slice(&p[..j]);
        self.gamma_a[i].copy_from_slice(&p[j..]);
    }
}

/// RF matrix from the entrywise phases of the first `k` columns of the
/// subcarrier-concatenated digital matrices.
fn rf_from_digital(mats: &[CMat], k: usize) -> Result<UnitModulusMatrix> {
    let rows = mats[0].rows();
    let cols: Vec<Vec<_>> = mats.iter().flat_map(|m| (0..m.cols()).map(move |j| m.column(j))).take(k).collect();
    if cols.len() < k {
        return Err(Error::Shape("fewer digital columns than RF chains"));
    }
    retract(&CMat::from_fn(rows, k, |i, j| cols[j][i]), &mut Tally::new())
}

/// `(RF^H RF)⁻¹ RF^H M`
fn least_squares(rf: &CMat, m: &CMat) -> Result<CMat> {
    let mut t = Tally::new();
    let g = rf.adj_matmul(rf);
    t.solve_hpd(&g, &rf.adj_matmul(m))
}

/// Hybrid initialisation from a fully-digital solution: RF phases of the
/// leading digital columns, least-squares baseband fits with the precoder
/// rescaled to unit power, and MSE-optimal `β` for the resulting pair.
pub fn init_from_fd(
    fd: &DigitalTransceiver,
    dims: Dims,
    h: &FrameChannel,
    r: &IpnCovariance,
) -> Result<HybridTransceiver> {
    if fd.v.len() != dims.x || fd.w.len() != dims.x || h.h.len() != dims.x || r.r.len() != dims.x {
        return Err(Error::Shape("digital solution does not match subcarrier count"));
    }
    if fd.v[0].rows() != dims.kb || fd.w[0].rows() != dims.ka {
        return Err(Error::Shape("digital solution does not match antenna counts"));
    }
    let v_rf = rf_from_digital(&fd.v, dims.krf_b)?;
    let w_rf = rf_from_digital(&fd.w, dims.krf_a)?;
    let mut v_bb = Vec::with_capacity(dims.x);
    let mut w_bb = Vec::with_capacity(dims.x);
    let mut beta = Vec::with_capacity(dims.x);
    for x in 0..dims.x {
        let vb = least_squares(v_rf.matrix(), &fd.v[x])?;
        let p = v_rf.matrix().matmul(&vb).norm_fro();
        if !(p > 0.0) {
            return Err(Error::NullPrecoder);
        }
        let vb = vb.scale_re(1.0 / p);
        let wb = least_squares(w_rf.matrix(), &fd.w[x])?;
        let v = v_rf.matrix().matmul(&vb);
        let w = w_rf.matrix().matmul(&wb);
        beta.push(optimal_beta(&h.h[x], &r.r[x], &v, &w, fd.beta[x]));
        v_bb.push(vb);
        w_bb.push(wb);
    }
    Ok(HybridTransceiver { v_rf, v_bb, w_rf, w_bb, beta })
}

/// One unfolded layer with the given precoder and combiner step sizes.
pub fn kddd_layer(
    h: &FrameChannel,
    r: &IpnCovariance,
    gamma_b: &[f64],
    gamma_a: &[f64],
    state: &HybridTransceiver,
    tally: &mut Tally,
) -> Result<HybridTransceiver> {
    let (next, _, _) = outer_iteration(h, r, state, tally, |side, obj, start, t| {
        let steps = match side {
            Side::Precoder => gamma_b,
            Side::Combiner => gamma_a,
        };
        let mut p = start.clone();
        for &g in steps {
            p = fixed_step(&obj, &p, g, t)?;
        }
        Ok((p, steps.to_vec()))
    })?;
    Ok(next)
}

/// Full forward pass; a pure function of its inputs.
pub fn kddd_forward(
    h: &FrameChannel,
    r: &IpnCovariance,
    sched: &StepSizeSchedule,
    init: &HybridTransceiver,
    tally: &mut Tally,
) -> Result<HybridTransceiver> {
    sched.validate()?;
    let mut tx = init.clone();
    for (gb, ga) in sched.gamma_b.iter().zip(&sched.gamma_a) {
        tx = kddd_layer(h, r, gb, ga, &tx, tally)?;
    }
    Ok(tx)
}

/// Order-preserving map over `0..n`, the hook for parallel batch
/// evaluation.
pub trait Executor: Sync {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Evaluates sequentially.
#[derive(Clone, Copy, Debug, Default)]
pub struct Serial;

impl Executor for Serial {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).map(f).collect()
    }
}

/// Numerical gradient of the batch loss with respect to one layer's steps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum GradEstimator {
    /// Central differences with step `h` (forward differences within `h`
    /// of the zero bound).
    Central { h: f64 },
    /// Simultaneous perturbation with scale `c`, averaged over `samples`
    /// Rademacher directions.
    Spsa { c: f64, samples: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Inner steps per layer.
    pub inner: Vec<usize>,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    /// Starting value of every step size.
    pub init_gamma: f64,
    pub estimator: GradEstimator,
    /// Consecutive epochs above twice the initial loss before aborting.
    pub divergence_patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            inner: vec![5, 2],
            epochs: 40,
            batch: 16,
            lr: 0.02,
            init_gamma: 0.1,
            estimator: GradEstimator::Central { h: 1e-3 },
            divergence_patience: 20,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch == 0 {
            return Err(Error::InvalidConfig("epochs and batch must be at least 1".into()));
        }
        if self.inner.is_empty() || self.inner.contains(&0) {
            return Err(Error::InvalidConfig("every layer needs at least one inner step".into()));
        }
        if !(self.lr > 0.0) || !(self.init_gamma >= 0.0) {
            return Err(Error::InvalidConfig("learning rate must be positive and initial step non-negative".into()));
        }
        match self.estimator {
            GradEstimator::Central { h } if !(h > 0.0) => Err(Error::InvalidConfig("difference step must be positive".into())),
            GradEstimator::Spsa { c, samples } if !(c > 0.0) || samples == 0 => {
                Err(Error::InvalidConfig("perturbation scale and count must be positive".into()))
            }
            _ => Ok(()),
        }
    }
}

/// A training scenario and its layer-1 input.
#[derive(Clone, Debug)]
pub struct Sample {
    pub instance: Instance,
    pub init: HybridTransceiver,
}

/// Per-layer loss history. `train[0]`/`valid[0]` are at the initial steps.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LayerCurve {
    pub train: Vec<f64>,
    pub valid: Vec<f64>,
    /// Training loss of the all-zero layer.
    pub zero_loss: f64,
    /// Training and validation loss of the selected steps.
    pub chosen_train: f64,
    pub chosen_valid: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub schedule: StepSizeSchedule,
    pub curves: Vec<LayerCurve>,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    /// Descends and projects onto `γ ≥ 0`.
    fn step(&mut self, p: &mut [f64], g: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - libm::pow(Self::B1, self.t as f64);
        let c2 = 1.0 - libm::pow(Self::B2, self.t as f64);
        for k in 0..p.len() {
            self.m[k] = Self::B1 * self.m[k] + (1.0 - Self::B1) * g[k];
            self.v[k] = Self::B2 * self.v[k] + (1.0 - Self::B2) * g[k] * g[k];
            let mh = self.m[k] / c1;
            let vh = self.v[k] / c2;
            p[k] = (p[k] - lr * mh / (libm::sqrt(vh) + Self::EPS)).max(0.0);
        }
    }
}

fn split(p: &[f64], j: usize) -> (&[f64], &[f64]) {
    p.split_at(j)
}

/// Layer outputs for every state in `idx`.
fn layer_outputs<E: Executor>(
    exec: &E,
    data: &[Instance],
    states: &[HybridTransceiver],
    idx: &[usize],
    p: &[f64],
    j: usize,
) -> Result<Vec<HybridTransceiver>> {
    let (gb, ga) = split(p, j);
    exec.map(idx.len(), |k| {
        let s = idx[k];
        kddd_layer(&data[s].channel, &data[s].ipn, gb, ga, &states[s], &mut Tally::new())
    })
    .into_iter()
    .collect()
}

/// Mean MSE after one layer over the states in `idx`.
fn layer_loss<E: Executor>(
    exec: &E,
    data: &[Instance],
    states: &[HybridTransceiver],
    idx: &[usize],
    p: &[f64],
    j: usize,
) -> Result<f64> {
    let (gb, ga) = split(p, j);
    let losses: Vec<Result<f64>> = exec.map(idx.len(), |k| {
        let s = idx[k];
        let out = kddd_layer(&data[s].channel, &data[s].ipn, gb, ga, &states[s], &mut Tally::new())?;
        mse_objective(&out, &data[s].channel, &data[s].ipn)
    });
    let mut sum = 0.0;
    for l in losses {
        sum += l?;
    }
    Ok(sum / idx.len() as f64)
}

#[allow(clippy::too_many_arguments)]
fn estimate_gradient<E: Executor>(
    exec: &E,
    data: &[Instance],
    states: &[HybridTransceiver],
    idx: &[usize],
    p: &[f64],
    j: usize,
    est: GradEstimator,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    let n = p.len();
    let mut g = vec![0.0; n];
    match est {
        GradEstimator::Central { h } => {
            for k in 0..n {
                let mut hi = p.to_vec();
                hi[k] += h;
                let f_hi = layer_loss(exec, data, states, idx, &hi, j)?;
                let mut lo = p.to_vec();
                let (f_lo, width) = if p[k] >= h {
                    lo[k] -= h;
                    (layer_loss(exec, data, states, idx, &lo, j)?, 2.0 * h)
                } else {
                    (layer_loss(exec, data, states, idx, &lo, j)?, h)
                };
                g[k] = (f_hi - f_lo) / width;
            }
        }
        GradEstimator::Spsa { c, samples } => {
            for _ in 0..samples {
                let delta: Vec<f64> = (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
                let hi: Vec<f64> = p.iter().zip(&delta).map(|(a, d)| a + c * d).collect();
                let lo: Vec<f64> = p.iter().zip(&delta).map(|(a, d)| (a - c * d).max(0.0)).collect();
                let df = layer_loss(exec, data, states, idx, &hi, j)? - layer_loss(exec, data, states, idx, &lo, j)?;
                for k in 0..n {
                    let width = hi[k] - lo[k];
                    if width != 0.0 {
                        g[k] += df / width / samples as f64;
                    }
                }
            }
        }
    }
    Ok(g)
}

/// Layer-by-layer training: each layer's steps are fitted to minimise the
/// batch-mean MSE of its output with earlier layers frozen, and the
/// lowest-training-loss steps seen (the all-zero layer included) are kept.
pub fn kddd_train<E: Executor>(
    train: &[Sample],
    valid: &[Sample],
    cfg: &TrainConfig,
    exec: &E,
    rng: &mut impl Rng,
) -> Result<TrainReport> {
    cfg.validate()?;
    if train.is_empty() || valid.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let tr_data: Vec<Instance> = train.iter().map(|s| s.instance.clone()).collect();
    let va_data: Vec<Instance> = valid.iter().map(|s| s.instance.clone()).collect();
    let mut tr_states: Vec<HybridTransceiver> = train.iter().map(|s| s.init.clone()).collect();
    let mut va_states: Vec<HybridTransceiver> = valid.iter().map(|s| s.init.clone()).collect();
    let all_tr: Vec<usize> = (0..train.len()).collect();
    let all_va: Vec<usize> = (0..valid.len()).collect();
    let mut sched = StepSizeSchedule::constant(&cfg.inner, cfg.init_gamma);
    let mut curves = Vec::with_capacity(cfg.inner.len());

    for (layer, &j) in cfg.inner.iter().enumerate() {
        let mut p = sched.layer_params(layer);
        let zero = vec![0.0; p.len()];
        let zero_loss = layer_loss(exec, &tr_data, &tr_states, &all_tr, &zero, j)?;
        let init_loss = layer_loss(exec, &tr_data, &tr_states, &all_tr, &p, j)?;
        let mut curve = LayerCurve {
            train: vec![init_loss],
            valid: vec![layer_loss(exec, &va_data, &va_states, &all_va, &p, j)?],
            zero_loss,
            ..LayerCurve::default()
        };
        let (mut best, mut best_loss) = if zero_loss < init_loss { (zero, zero_loss) } else { (p.clone(), init_loss) };
        let mut adam = Adam::new(p.len());
        let mut order = all_tr.clone();
        let mut above = 0;
        for epoch in 0..cfg.epochs {
            order.shuffle(rng);
            for batch in order.chunks(cfg.batch) {
                let g = estimate_gradient(exec, &tr_data, &tr_states, batch, &p, j, cfg.estimator, rng)?;
                adam.step(&mut p, &g, cfg.lr);
            }
            let loss = layer_loss(exec, &tr_data, &tr_states, &all_tr, &p, j)?;
            curve.train.push(loss);
            curve.valid.push(layer_loss(exec, &va_data, &va_states, &all_va, &p, j)?);
            if loss < best_loss {
                best_loss = loss;
                best = p.clone();
            }
            above = if loss > 2.0 * init_loss { above + 1 } else { 0 };
            if above >= cfg.divergence_patience {
                return Err(Error::Diverged { layer, epoch });
            }
        }
        sched.set_layer_params(layer, &best);
        curve.chosen_train = best_loss;
        curve.chosen_valid = layer_loss(exec, &va_data, &va_states, &all_va, &best, j)?;
        curves.push(curve);
        tr_states = layer_outputs(exec, &tr_data, &tr_states, &all_tr, &best, j)?;
        va_states = layer_outputs(exec, &va_data, &va_states, &all_va, &best, j)?;
    }
    Ok(TrainReport { schedule: sched, curves })
}
