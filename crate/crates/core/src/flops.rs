//! Operation counts: closed-form complexity expressions next to counters
//! tallied while the solvers run.
//!
//! Analytic figures count complex multiplications of the dominant RF-block
//! operations; measured figures are [`Tally::flops`] totals.

use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::beamform::{ao_ir_solve, fd_ir_solve, random_init, AoConfig, Dims};
use crate::error::Result;
use crate::kddd::{init_from_fd, kddd_forward, StepSizeSchedule};
use crate::linalg::Tally;
use crate::scenario::{draw_instance, ScenarioConfig};

/// Which end of the link an RF block acts on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    /// Receive combiner, `K_A × K_RF^A`.
    Combiner,
    /// Transmit precoder, `K_B × K_RF^B`.
    Precoder,
}

fn side_dims(d: Dims, side: Side) -> (f64, f64, f64) {
    match side {
        Side::Combiner => (d.ka as f64, d.kb as f64, d.krf_a as f64),
        Side::Precoder => (d.kb as f64, d.ka as f64, d.krf_b as f64),
    }
}

/// Conjugate-gradient cost of one RF step:
/// `X(N_s²K' + 2K_RF²K + K_RF K² + 6N_s K K_RF + 2N_s K_RF² + 3N_s²K + N_s³ + K_RF³ + N_s³)`
/// with `K` the antennas on the optimised side and `K'` on the other.
pub fn gradient_cost(d: Dims, side: Side) -> f64 {
    let (k, ko, krf) = side_dims(d, side);
    let ns = d.ns as f64;
    d.x as f64
        * (ns * ns * ko
            + 2.0 * krf * krf * k
            + krf * k * k
            + 6.0 * ns * k * krf
            + 2.0 * ns * krf * krf
            + 3.0 * ns * ns * k
            + ns * ns * ns
            + krf * krf * krf
            + ns * ns * ns)
}

/// Tangent projection: `2X·K·K_RF`.
pub fn projection_cost(d: Dims, side: Side) -> f64 {
    let (k, _, krf) = side_dims(d, side);
    2.0 * d.x as f64 * k * krf
}

/// Retraction: `X·K·K_RF`.
pub fn retraction_cost(d: Dims, side: Side) -> f64 {
    let (k, _, krf) = side_dims(d, side);
    d.x as f64 * k * krf
}

fn step_cost(d: Dims) -> f64 {
    [Side::Precoder, Side::Combiner]
        .into_iter()
        .map(|s| gradient_cost(d, s) + projection_cost(d, s) + retraction_cost(d, s))
        .sum()
}

/// Analytic RF-block cost of the unfolded solver with `inner[i]` steps per
/// block in layer `i`.
pub fn analytic_kddd(d: Dims, inner: &[usize]) -> f64 {
    inner.iter().sum::<usize>() as f64 * step_cost(d)
}

/// Analytic RF-block cost of AO with `trials` line-search objective
/// evaluations per step on average. Each trial is charged a retraction and
/// one gradient-expression cost as an upper bound on the objective.
pub fn analytic_ao(d: Dims, inner: &[usize], trials: f64) -> f64 {
    let search: f64 = [Side::Precoder, Side::Combiner]
        .into_iter()
        .map(|s| trials * (gradient_cost(d, s) + retraction_cost(d, s)))
        .sum();
    inner.iter().sum::<usize>() as f64 * (step_cost(d) + search)
}

/// Predictor shape for the complexity expression.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictorDims {
    pub ka: usize,
    pub x: usize,
    /// History length.
    pub p: usize,
    /// Prediction horizon.
    pub l: usize,
    /// Decoder reference frames.
    pub g: usize,
    /// Kernel volume.
    pub kernel: usize,
    /// `(in, out)` channels of each residual convolution.
    pub channels: Vec<(usize, usize)>,
}

/// `K K_A² X (P² + Σ C_in C_out) + K_A⁴X² + (G+P+L) K_A² X`.
pub fn analytic_predictor(p: &PredictorDims) -> f64 {
    let ka2 = (p.ka * p.ka) as f64;
    let x = p.x as f64;
    let conv: f64 = p.channels.iter().map(|&(a, b)| (a * b) as f64).sum();
    p.kernel as f64 * ka2 * x * ((p.p * p.p) as f64 + conv) + ka2 * ka2 * x * x + (p.g + p.p + p.l) as f64 * ka2 * x
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ao,
    Kddd,
}

/// Mean per-solve counts over a batch of scenarios.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlopReport {
    pub analytic: f64,
    pub measured_flops: f64,
    pub mul: f64,
    pub add: f64,
    pub real: f64,
    pub factorizations: f64,
    /// Mean line-search objective evaluations per RF step (AO only).
    pub trials_per_step: f64,
    pub scenarios: usize,
}

/// Counts one `method` solve per scenario with `inner[i]` steps in outer
/// iteration / layer `i`. AO starts from random phases; the unfolded solver
/// starts from the digital solution, whose cost is not included.
pub fn count_flops(method: Method, cfg: &ScenarioConfig, inner: &[usize], scenarios: usize, rng: &mut impl Rng) -> Result<FlopReport> {
    cfg.validate()?;
    let d = Dims::from_config(cfg);
    let mut total = Tally::new();
    let mut trials = 0usize;
    let ao = AoConfig::fixed(inner.to_vec());
    let sched = StepSizeSchedule::constant(inner, 0.1);
    for _ in 0..scenarios {
        let inst = draw_instance(cfg, rng);
        let (h, r) = (&inst.channel, &inst.ipn);
        match method {
            Method::Ao => {
                let init = random_init(d, h, r, rng)?;
                trials += ao_ir_solve(h, r, &ao, &init, &mut total)?.line_search_trials;
            }
            Method::Kddd => {
                let fd = fd_ir_solve(h, r, d.ns, 1e-8, &mut Tally::new())?;
                let init = init_from_fd(&fd.tx, d, h, r)?;
                kddd_forward(h, r, &sched, &init, &mut total)?;
            }
        }
    }
    let n = scenarios.max(1) as f64;
    let steps = 2.0 * inner.iter().sum::<usize>() as f64 * n;
    let trials_per_step = if steps > 0.0 { trials as f64 / steps } else { 0.0 };
    let analytic = match method {
        Method::Ao => analytic_ao(d, inner, trials_per_step),
        Method::Kddd => analytic_kddd(d, inner),
    };
    Ok(FlopReport {
        analytic,
        measured_flops: total.flops() as f64 / n,
        mul: total.mul as f64 / n,
        add: total.add as f64 / n,
        real: total.real as f64 / n,
        factorizations: total.factorizations as f64 / n,
        trials_per_step,
        scenarios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beamform::fd_ir_solve;
    use crate::scenario::Upa;
    use alloc::vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dims16() -> ScenarioConfig {
        ScenarioConfig { ka: Upa { rows: 4, cols: 4 }, kb: Upa { rows: 4, cols: 4 }, krf_a: 4, krf_b: 4, ..ScenarioConfig::desk() }
    }

    #[test]
    fn retraction_and_projection_expressions() {
        let d = Dims { ka: 16, kb: 8, krf_a: 4, krf_b: 2, ns: 2, x: 64 };
        assert_eq!(retraction_cost(d, Side::Combiner), (64 * 16 * 4) as f64);
        assert_eq!(projection_cost(d, Side::Combiner), (2 * 64 * 16 * 4) as f64);
        assert_eq!(retraction_cost(d, Side::Precoder), (64 * 8 * 2) as f64);
    }

    #[test]
    fn gradient_expression_hand_value() {
        // Ns=1, K=K'=1, K_RF=1, X=1: 1 + 2 + 1 + 6 + 2 + 3 + 1 + 1 + 1.
        let d = Dims { ka: 1, kb: 1, krf_a: 1, krf_b: 1, ns: 1, x: 1 };
        assert_eq!(gradient_cost(d, Side::Combiner), 18.0);
        let d = Dims { ka: 4, kb: 3, krf_a: 2, krf_b: 2, ns: 2, x: 2 };
        let hand = 2.0 * (4.0 * 3.0 + 2.0 * 4.0 * 4.0 + 2.0 * 16.0 + 6.0 * 2.0 * 4.0 * 2.0 + 2.0 * 2.0 * 4.0 + 3.0 * 4.0 * 4.0 + 8.0 + 8.0 + 8.0);
        assert_eq!(gradient_cost(d, Side::Combiner), hand);
    }

    #[test]
    fn predictor_expression_hand_value() {
        let p = PredictorDims { ka: 2, x: 3, p: 4, l: 1, g: 2, kernel: 27, channels: vec![(4, 8), (8, 4)] };
        let hand = 27.0 * 4.0 * 3.0 * (16.0 + 64.0) + 16.0 * 9.0 + 7.0 * 4.0 * 3.0;
        assert_eq!(analytic_predictor(&p), hand);
    }

    #[test]
    fn layer_counts_are_additive() {
        let cfg = ScenarioConfig::desk();
        let d = Dims::from_config(&cfg);
        let inst = draw_instance(&cfg, &mut ChaCha8Rng::seed_from_u64(1));
        let (h, r) = (&inst.channel, &inst.ipn);
        let fd = fd_ir_solve(h, r, d.ns, 1e-8, &mut Tally::new()).unwrap();
        let init = init_from_fd(&fd.tx, d, h, r).unwrap();
        let count = |layers: usize| {
            let mut t = Tally::new();
            kddd_forward(h, r, &StepSizeSchedule::constant(&vec![3; layers], 0.1), &init, &mut t).unwrap();
            t
        };
        assert_eq!(count(2), count(1).scaled(2));
        assert_eq!(analytic_kddd(d, &[3, 3]), 2.0 * analytic_kddd(d, &[3]));
    }

    #[test]
    fn unfolded_solver_is_cheaper_than_line_searched_ao() {
        let cfg = dims16();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ao = count_flops(Method::Ao, &cfg, &[5, 2], 5, &mut rng).unwrap();
        let kd = count_flops(Method::Kddd, &cfg, &[5, 2], 5, &mut rng).unwrap();
        assert!(ao.trials_per_step >= 1.0);
        assert!(kd.measured_flops < ao.measured_flops);
        assert!(kd.analytic < ao.analytic);
    }
}
