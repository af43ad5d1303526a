//! Sum-MSE objective, closed-form baseband updates, Euclidean gradients of
//! the analog residual objectives, the alternating-optimisation solver and
//! the fully-digital bound.
//!
//! Gradients follow the conjugate (Wirtinger) convention `∂f/∂Z*`, so for a
//! real objective `f(Z + δ) ≈ f(Z) + 2·Re tr(∇^H δ)`.

use alloc::vec::Vec;
use core::cell::Cell;

use rand::Rng;

use crate::error::{Error, Result};
use crate::ipn::IpnCovariance;
use crate::linalg::{hermitian_eig, CMat, Tally};
use crate::manifold::{armijo_search, retract, riemannian_project, tangent_step, Armijo, UnitModulusMatrix, ZERO_GRADIENT};
use crate::scenario::{complex_normal, FrameChannel, ScenarioConfig};

/// Problem dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    pub ka: usize,
    pub kb: usize,
    pub krf_a: usize,
    pub krf_b: usize,
    pub ns: usize,
    pub x: usize,
}

impl Dims {
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        Self { ka: cfg.ka.len(), kb: cfg.kb.len(), krf_a: cfg.krf_a, krf_b: cfg.krf_b, ns: cfg.ns, x: cfg.x }
    }
}

/// Hybrid precoder/combiner pair with per-subcarrier receive scaling.
#[derive(Clone, Debug, PartialEq)]
pub struct HybridTransceiver {
    pub v_rf: UnitModulusMatrix,
    pub v_bb: Vec<CMat>,
    pub w_rf: UnitModulusMatrix,
    pub w_bb: Vec<CMat>,
    pub beta: Vec<f64>,
}

impl HybridTransceiver {
    pub fn precoder(&self, x: usize) -> CMat {
        self.v_rf.matrix().matmul(&self.v_bb[x])
    }

    pub fn combiner(&self, x: usize) -> CMat {
        self.w_rf.matrix().matmul(&self.w_bb[x])
    }

    /// Largest entrywise modulus defect over both RF matrices.
    pub fn modulus_defect(&self) -> f64 {
        self.v_rf.max_modulus_defect().max(self.w_rf.max_modulus_defect())
    }

    /// Transmit power `Tr(V_RF V_BB V_BB^H V_RF^H)` per subcarrier.
    pub fn powers(&self) -> Vec<f64> {
        (0..self.v_bb.len()).map(|x| self.precoder(x).norm_fro_sq()).collect()
    }
}

/// Fully-digital transceiver: joint matrices per subcarrier.
#[derive(Clone, Debug, PartialEq)]
pub struct DigitalTransceiver {
    pub v: Vec<CMat>,
    pub w: Vec<CMat>,
    pub beta: Vec<f64>,
}

fn check_problem(h: &FrameChannel, r: &IpnCovariance) -> Result<()> {
    if h.h.len() != r.r.len() || h.h.is_empty() {
        return Err(Error::Shape("channel and covariance subcarrier counts differ"));
    }
    for (hx, rx) in h.h.iter().zip(&r.r) {
        if rx.rows() != hx.rows() || rx.cols() != hx.rows() {
            return Err(Error::Shape("covariance does not match receive antennas"));
        }
        if !hx.is_finite() || !rx.is_finite() {
            return Err(Error::NonFinite("channel or covariance"));
        }
    }
    Ok(())
}

/// Per-subcarrier MSE of joint precoder `v`, combiner `w` and scaling `β`:
/// `β⁻²‖W^H H V‖² − 2β⁻¹ Re tr(W^H H V) + β⁻² tr(W^H R W) + N_s`.
pub fn mse_subcarrier(h: &CMat, r: &CMat, v: &CMat, w: &CMat, beta: f64, tally: &mut Tally) -> f64 {
    let hv = tally.mul(h, v);
    let a = tally.adj_mul(w, &hv);
    let rw = tally.mul(r, w);
    let ib = 1.0 / beta;
    let eta = tally.trace_of_product(&w.adjoint(), &rw);
    tally.real += 4 * (a.rows() * a.cols()) as u64 + 8;
    ib * ib * (a.norm_fro_sq() + eta) - 2.0 * ib * a.trace().re + v.cols() as f64
}

/// Sum over subcarriers of the MSE.
pub fn mse_objective(tx: &HybridTransceiver, h: &FrameChannel, r: &IpnCovariance) -> Result<f64> {
    check_problem(h, r)?;
    if tx.beta.iter().any(|b| !(*b > 0.0) || !b.is_finite()) {
        return Err(Error::NonFinite("beta"));
    }
    let mut t = Tally::new();
    let mut s = 0.0;
    for x in 0..h.h.len() {
        s += mse_subcarrier(&h.h[x], &r.r[x], &tx.precoder(x), &tx.combiner(x), tx.beta[x], &mut t);
    }
    if !s.is_finite() {
        return Err(Error::NonFinite("mse"));
    }
    Ok(s)
}

pub fn mse_digital(tx: &DigitalTransceiver, h: &FrameChannel, r: &IpnCovariance) -> Result<f64> {
    check_problem(h, r)?;
    let mut t = Tally::new();
    Ok((0..h.h.len()).map(|x| mse_subcarrier(&h.h[x], &r.r[x], &tx.v[x], &tx.w[x], tx.beta[x], &mut t)).sum())
}

/// `W_BB = (W_RF^H H₁H₁^H W_RF + β⁻² W_RF^H R W_RF)⁻¹ W_RF^H H₁`.
pub fn bb_combiner_closed_form(w_rf: &CMat, h1: &CMat, r: &CMat, beta: f64, tally: &mut Tally) -> Result<CMat> {
    let b = tally.adj_mul(w_rf, h1);
    let rw = tally.mul(r, w_rf);
    let gamma = tally.adj_mul(w_rf, &rw);
    let bb = tally.mul_adj(&b, &b);
    let g = tally.scale_re(&gamma, 1.0 / (beta * beta));
    let m = tally.add(&bb, &g).hermitian_part();
    tally.solve_hpd(&m, &b).map_err(|_| Error::RankDeficientCombiner)
}

/// Quantities shared by the combiner-side residual and its gradient.
struct CombinerTerms {
    /// `Γ⁻¹ W^H H₁`
    y: CMat,
    /// `G⁻¹`
    g_inv: CMat,
}

fn combiner_terms(w_rf: &CMat, h1: &CMat, r: &CMat, beta: f64, tally: &mut Tally) -> Result<(CMat, CombinerTerms)> {
    let b = tally.adj_mul(w_rf, h1);
    let rw = tally.mul(r, w_rf);
    let gamma = tally.adj_mul(w_rf, &rw).hermitian_part();
    let y = tally.solve_hpd(&gamma, &b)?;
    let byy = tally.adj_mul(&b, &y);
    let sb = tally.scale_re(&byy, beta * beta);
    let g = tally.add_identity(&sb, 1.0).hermitian_part();
    let g_inv = tally.inv_hpd(&g)?;
    Ok((rw, CombinerTerms { y, g_inv }))
}

/// `J_x(W_RF) = tr(I + β² H₁^H W_RF Γ⁻¹ W_RF^H H₁)⁻¹`, `Γ = W_RF^H R W_RF`.
pub fn combiner_residual_objective(w_rf: &CMat, h1: &CMat, r: &CMat, beta: f64, tally: &mut Tally) -> Result<f64> {
    let (_, terms) = combiner_terms(w_rf, h1, r, beta, tally)?;
    Ok(tally.trace(&terms.g_inv).re)
}

/// Conjugate gradient of `J_x`:
/// `β²(R W Γ⁻¹ W^H H₁ G⁻² H₁^H W Γ⁻¹ − H₁ G⁻² H₁^H W Γ⁻¹)`, together with
/// the value of `J_x`.
pub fn euclidean_grad_combiner(w_rf: &CMat, h1: &CMat, r: &CMat, beta: f64, tally: &mut Tally) -> Result<(f64, CMat)> {
    let (rw, CombinerTerms { y, g_inv }) = combiner_terms(w_rf, h1, r, beta, tally)?;
    let value = tally.trace(&g_inv).re;
    let g2 = tally.mul(&g_inv, &g_inv);
    let c = tally.mul_adj(&g2, &y);
    let rwy = tally.mul(&rw, &y);
    let d = tally.sub(&rwy, h1);
    let grad = tally.mul(&d, &c);
    Ok((value, tally.scale_re(&grad, beta * beta)))
}

/// Quantities shared by the precoder-side residual, its gradient and the
/// closed-form baseband precoder.
struct PrecoderTerms {
    /// `H^H W`
    a: CMat,
    /// `V_RF^H H^H W`
    h2: CMat,
    /// `(H₂H₂^H + η V_RF^H V_RF)⁻¹ H₂`
    z: CMat,
    eta: f64,
}

fn precoder_eta(w: &CMat, r: &CMat, tally: &mut Tally) -> f64 {
    let rw = tally.mul(r, w);
    tally.trace_of_product(&w.adjoint(), &rw)
}

fn precoder_terms(v_rf: &CMat, a: CMat, eta: f64, tally: &mut Tally) -> Result<PrecoderTerms> {
    let h2 = tally.adj_mul(v_rf, &a);
    let hh = tally.mul_adj(&h2, &h2);
    let vv = tally.adj_mul(v_rf, v_rf);
    let ev = tally.scale_re(&vv, eta);
    let q = tally.add(&hh, &ev).hermitian_part();
    let z = tally.solve_hpd(&q, &h2)?;
    Ok(PrecoderTerms { a, h2, z, eta })
}

/// Precoder-side data for one subcarrier: `A = H^H W` and `η = tr(W^H R W)`.
pub fn precoder_side(h: &CMat, w: &CMat, r: &CMat, tally: &mut Tally) -> (CMat, f64) {
    let a = tally.adj_mul(h, w);
    let eta = precoder_eta(w, r, tally);
    (a, eta)
}

/// `J_B(V_RF) = N_s − Re tr(H₂^H (H₂H₂^H + η V_RF^H V_RF)⁻¹ H₂)`: the MSE
/// after optimising the baseband precoder and `β` under the power
/// constraint, for a fixed combiner.
pub fn precoder_residual_objective(v_rf: &CMat, a: &CMat, eta: f64, tally: &mut Tally) -> Result<f64> {
    let t = precoder_terms(v_rf, a.clone(), eta, tally)?;
    Ok(a.cols() as f64 - tally.trace_of_product(&t.h2.adjoint(), &t.z))
}

/// Conjugate gradient of `J_B`: `A(H₂^H Z − I)Z^H + η V_RF Z Z^H` with
/// `Z = (H₂H₂^H + η V_RF^H V_RF)⁻¹H₂`, together with the value of `J_B`.
pub fn euclidean_grad_precoder(v_rf: &CMat, a: &CMat, eta: f64, tally: &mut Tally) -> Result<(f64, CMat)> {
    let PrecoderTerms { a, h2, z, eta } = precoder_terms(v_rf, a.clone(), eta, tally)?;
    let hz = tally.adj_mul(&h2, &z);
    let value = a.cols() as f64 - tally.trace(&hz).re;
    let hzi = tally.add_identity(&hz, -1.0);
    let ah = tally.mul(&a, &hzi);
    let t1 = tally.mul_adj(&ah, &z);
    let vz = tally.mul(v_rf, &z);
    let t2 = tally.mul_adj(&vz, &z);
    let et = tally.scale_re(&t2, eta);
    let grad = tally.add(&t1, &et);
    Ok((value, grad))
}

/// `Ṽ = (H₂H₂^H + η V_RF^H V_RF)⁻¹H₂`, `β = ‖V_RF Ṽ‖_F⁻¹`, `V_BB = βṼ`.
pub fn bb_precoder_closed_form(v_rf: &CMat, h: &CMat, w: &CMat, r: &CMat, tally: &mut Tally) -> Result<(CMat, f64)> {
    let (a, eta) = precoder_side(h, w, r, tally);
    let t = precoder_terms(v_rf, a, eta, tally)?;
    let vz = tally.mul(v_rf, &t.z);
    let p = tally.norm_fro(&vz);
    if !(p > 0.0) || !p.is_finite() {
        return Err(Error::NullPrecoder);
    }
    let beta = 1.0 / p;
    Ok((tally.scale_re(&t.z, beta), beta))
}

/// The two analog subproblems as objectives over the manifold.
pub trait RfObjective {
    fn value(&self, p: &CMat, tally: &mut Tally) -> Result<f64>;
    /// Objective value and conjugate Euclidean gradient at `p`.
    fn gradient(&self, p: &CMat, tally: &mut Tally) -> Result<(f64, CMat)>;
}

/// `Σ_x J_B,x(V_RF)` for a fixed combiner.
pub struct PrecoderObjective {
    pub a: Vec<CMat>,
    pub eta: Vec<f64>,
}

impl PrecoderObjective {
    pub fn new(h: &FrameChannel, r: &IpnCovariance, w: &[CMat], tally: &mut Tally) -> Self {
        let (a, eta) = h.h.iter().zip(&r.r).zip(w).map(|((hx, rx), wx)| precoder_side(hx, wx, rx, tally)).unzip();
        Self { a, eta }
    }
}

impl RfObjective for PrecoderObjective {
    fn value(&self, p: &CMat, tally: &mut Tally) -> Result<f64> {
        let mut s = 0.0;
        for (a, &eta) in self.a.iter().zip(&self.eta) {
            s += precoder_residual_objective(p, a, eta, tally)?;
        }
        Ok(s)
    }

    fn gradient(&self, p: &CMat, tally: &mut Tally) -> Result<(f64, CMat)> {
        let mut sum = CMat::zeros(p.rows(), p.cols());
        let mut val = 0.0;
        for (a, &eta) in self.a.iter().zip(&self.eta) {
            let (v, g) = euclidean_grad_precoder(p, a, eta, tally)?;
            val += v;
            sum = tally.add(&sum, &g);
        }
        Ok((val, sum))
    }
}

/// `Σ_x J_x(W_RF)` for a fixed precoder and scaling.
pub struct CombinerObjective<'a> {
    pub h1: Vec<CMat>,
    pub r: &'a [CMat],
    pub beta: &'a [f64],
}

impl<'a> CombinerObjective<'a> {
    /// `H₁ = β⁻¹ H V` per subcarrier.
    pub fn new(h: &FrameChannel, r: &'a IpnCovariance, v: &[CMat], beta: &'a [f64], tally: &mut Tally) -> Self {
        let h1 = h.h.iter().zip(v).zip(beta).map(|((hx, vx), &b)| {
                let hv = tally.mul(hx, vx);
                tally.scale_re(&hv, 1.0 / b)
            }).collect();
        Self { h1, r: &r.r, beta }
    }
}

impl RfObjective for CombinerObjective<'_> {
    fn value(&self, p: &CMat, tally: &mut Tally) -> Result<f64> {
        let mut s = 0.0;
        for ((h1, r), &b) in self.h1.iter().zip(self.r).zip(self.beta) {
            s += combiner_residual_objective(p, h1, r, b, tally)?;
        }
        Ok(s)
    }

    fn gradient(&self, p: &CMat, tally: &mut Tally) -> Result<(f64, CMat)> {
        let mut sum = CMat::zeros(p.rows(), p.cols());
        let mut val = 0.0;
        for ((h1, r), &b) in self.h1.iter().zip(self.r).zip(self.beta) {
            let (v, g) = euclidean_grad_combiner(p, h1, r, b, tally)?;
            val += v;
            sum = tally.add(&sum, &g);
        }
        Ok((val, sum))
    }
}

/// One fixed-step Riemannian descent step (no line search). A zero step or a
/// vanishing gradient leaves the point unchanged.
pub fn fixed_step(obj: &impl RfObjective, p: &UnitModulusMatrix, gamma: f64, tally: &mut Tally) -> Result<UnitModulusMatrix> {
    if gamma == 0.0 {
        return Ok(p.clone());
    }
    let (_, g) = obj.gradient(p.matrix(), tally)?;
    let rg = riemannian_project(&g, p, tally);
    if rg.norm() < ZERO_GRADIENT {
        return Ok(p.clone());
    }
    retract(&tangent_step(p, gamma, &rg, tally)?, tally)
}

/// `steps` Armijo-backtracked descent steps; returns the final point, the
/// accepted step sizes (0 for a stalled search) and the number of objective
/// evaluations spent in line searches.
pub fn armijo_descent(
    obj: &impl RfObjective,
    start: &UnitModulusMatrix,
    steps: usize,
    params: &Armijo,
    tally: &mut Tally,
) -> Result<(UnitModulusMatrix, Vec<f64>, usize)> {
    let mut p = start.clone();
    let mut accepted = Vec::with_capacity(steps);
    let mut trials = 0;
    for _ in 0..steps {
        let (f0, g) = obj.gradient(p.matrix(), tally)?;
        let rg = riemannian_project(&g, &p, tally);
        let ls = armijo_search(|q, t| obj.value(q.matrix(), t), &p, f0, &rg, params, tally)?;
        accepted.push(ls.step);
        trials += ls.trials;
        p = ls.point;
    }
    Ok((p, accepted, trials))
}

/// Baseband precoders and scalings for every subcarrier at `v_rf`.
pub fn precoder_block_closed_form(
    v_rf: &CMat,
    h: &FrameChannel,
    r: &IpnCovariance,
    w: &[CMat],
    tally: &mut Tally,
) -> Result<(Vec<CMat>, Vec<f64>)> {
    let mut v_bb = Vec::with_capacity(h.h.len());
    let mut beta = Vec::with_capacity(h.h.len());
    for x in 0..h.h.len() {
        let (vb, b) = bb_precoder_closed_form(v_rf, &h.h[x], &w[x], &r.r[x], tally)?;
        v_bb.push(vb);
        beta.push(b);
    }
    Ok((v_bb, beta))
}

/// Baseband combiners for every subcarrier at `w_rf`.
pub fn combiner_block_closed_form(w_rf: &CMat, obj: &CombinerObjective<'_>, tally: &mut Tally) -> Result<Vec<CMat>> {
    obj.h1.iter().zip(obj.r).zip(obj.beta).map(|((h1, r), &b)| bb_combiner_closed_form(w_rf, h1, r, b, tally)).collect()
}

fn joint(rf: &CMat, bb: &[CMat], tally: &mut Tally) -> Vec<CMat> {
    bb.iter().map(|b| tally.mul(rf, b)).collect()
}

/// Run-to-convergence settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Convergence {
    pub tol: f64,
    pub max_outer: usize,
    pub inner: usize,
}

/// Alternating-optimisation schedule: `inner[i]` Riemannian steps per block
/// in outer iteration `i`, or run-to-convergence when `converge` is set.
#[derive(Clone, Debug, PartialEq)]
pub struct AoConfig {
    pub inner: Vec<usize>,
    pub armijo: Armijo,
    pub converge: Option<Convergence>,
}

impl AoConfig {
    pub fn fixed(inner: Vec<usize>) -> Self {
        Self { inner, armijo: Armijo::default(), converge: None }
    }

    /// Two outer iterations with 5 and 2 inner steps.
    pub fn ao_5_2() -> Self {
        Self::fixed(alloc::vec![5, 2])
    }

    pub fn converge(tol: f64, max_outer: usize, inner: usize) -> Self {
        Self { inner: Vec::new(), armijo: Armijo::default(), converge: Some(Convergence { tol, max_outer, inner }) }
    }
}

/// Result of an AO run.
#[derive(Clone, Debug)]
pub struct AoOutcome {
    pub tx: HybridTransceiver,
    /// MSE at the initial point followed by the MSE after every outer
    /// iteration.
    pub trace: Vec<f64>,
    /// Accepted line-search steps per outer iteration (precoder, combiner).
    pub gamma_b: Vec<Vec<f64>>,
    pub gamma_a: Vec<Vec<f64>>,
    pub converged: bool,
    /// Objective evaluations spent in line searches.
    pub line_search_trials: usize,
}

/// Precoder block followed by combiner block, with the RF steps supplied by
/// `descend`.
pub(crate) fn outer_iteration<F>(
    h: &FrameChannel,
    r: &IpnCovariance,
    tx: &HybridTransceiver,
    tally: &mut Tally,
    mut descend: F,
) -> Result<(HybridTransceiver, Vec<f64>, Vec<f64>)>
where
    F: FnMut(Side, &dyn DynRfObjective, &UnitModulusMatrix, &mut Tally) -> Result<(UnitModulusMatrix, Vec<f64>)>,
{
    let w = joint(tx.w_rf.matrix(), &tx.w_bb, tally);
    let pobj = PrecoderObjective::new(h, r, &w, tally);
    let (v_rf, gb) = descend(Side::Precoder, &pobj, &tx.v_rf, tally)?;
    let (v_bb, beta) = precoder_block_closed_form(v_rf.matrix(), h, r, &w, tally)?;
    let v = joint(v_rf.matrix(), &v_bb, tally);
    let cobj = CombinerObjective::new(h, r, &v, &beta, tally);
    let (w_rf, ga) = descend(Side::Combiner, &cobj, &tx.w_rf, tally)?;
    let w_bb = combiner_block_closed_form(w_rf.matrix(), &cobj, tally)?;
    Ok((HybridTransceiver { v_rf, v_bb, w_rf, w_bb, beta }, gb, ga))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Side {
    Precoder,
    Combiner,
}

/// Object-safe view of [`RfObjective`] for the shared outer-iteration code.
pub(crate) trait DynRfObjective {
    fn value_dyn(&self, p: &CMat, tally: &mut Tally) -> Result<f64>;
    fn gradient_dyn(&self, p: &CMat, tally: &mut Tally) -> Result<(f64, CMat)>;
}

impl<T: RfObjective> DynRfObjective for T {
    fn value_dyn(&self, p: &CMat, tally: &mut Tally) -> Result<f64> {
        self.value(p, tally)
    }
    fn gradient_dyn(&self, p: &CMat, tally: &mut Tally) -> Result<(f64, CMat)> {
        self.gradient(p, tally)
    }
}

impl<'a> RfObjective for &'a (dyn DynRfObjective + 'a) {
    fn value(&self, p: &CMat, tally: &mut Tally) -> Result<f64> {
        (**self).value_dyn(p, tally)
    }
    fn gradient(&self, p: &CMat, tally: &mut Tally) -> Result<(f64, CMat)> {
        (**self).gradient_dyn(p, tally)
    }
}

/// Alternating optimisation with Armijo-backtracked Riemannian steps on both
/// RF matrices and closed-form baseband updates.
pub fn ao_ir_solve(
    h: &FrameChannel,
    r: &IpnCovariance,
    cfg: &AoConfig,
    init: &HybridTransceiver,
    tally: &mut Tally,
) -> Result<AoOutcome> {
    check_problem(h, r)?;
    let mut tx = init.clone();
    let mut trace = alloc::vec![mse_objective(&tx, h, r)?];
    let (mut gamma_b, mut gamma_a) = (Vec::new(), Vec::new());
    let armijo = cfg.armijo;
    let trials = Cell::new(0);
    let run = |steps: usize, tx: &HybridTransceiver, tally: &mut Tally| {
        outer_iteration(h, r, tx, tally, |_, obj, start, t| {
            let (p, accepted, n) = armijo_descent(&obj, start, steps, &armijo, t)?;
            trials.set(trials.get() + n);
            Ok((p, accepted))
        })
    };
    let mut converged = cfg.converge.is_none();
    for &steps in &cfg.inner {
        let (next, gb, ga) = run(steps, &tx, tally)?;
        tx = next;
        trace.push(mse_objective(&tx, h, r)?);
        gamma_b.push(gb);
        gamma_a.push(ga);
    }
    if let Some(c) = cfg.converge {
        for _ in 0..c.max_outer {
            let (next, gb, ga) = run(c.inner, &tx, tally)?;
            tx = next;
            let f = mse_objective(&tx, h, r)?;
            let prev = *trace.last().unwrap();
            trace.push(f);
            gamma_b.push(gb);
            gamma_a.push(ga);
            if (prev - f).abs() <= c.tol * prev.abs().max(f64::MIN_POSITIVE) {
                converged = true;
                break;
            }
        }
    }
    Ok(AoOutcome { tx, trace, gamma_b, gamma_a, converged, line_search_trials: trials.get() })
}

/// Random-phase RF matrices, Gaussian baseband precoders scaled to unit
/// power, `β = 1` and closed-form baseband combiners.
pub fn random_init(dims: Dims, h: &FrameChannel, r: &IpnCovariance, rng: &mut impl Rng) -> Result<HybridTransceiver> {
    let tau = core::f64::consts::TAU;
    let v_rf = UnitModulusMatrix::from_phases(dims.kb, dims.krf_b, |_, _| rng.random_range(0.0..tau));
    let w_rf = UnitModulusMatrix::from_phases(dims.ka, dims.krf_a, |_, _| rng.random_range(0.0..tau));
    let mut t = Tally::new();
    let v_bb: Vec<CMat> = (0..dims.x)
        .map(|_| {
            let m = CMat::from_fn(dims.krf_b, dims.ns, |_, _| complex_normal(rng));
            let p = v_rf.matrix().matmul(&m).norm_fro();
            m.scale_re(1.0 / p)
        })
        .collect();
    let beta = alloc::vec![1.0; dims.x];
    let v = joint(v_rf.matrix(), &v_bb, &mut t);
    let cobj = CombinerObjective::new(h, r, &v, &beta, &mut t);
    let w_bb = combiner_block_closed_form(w_rf.matrix(), &cobj, &mut t)?;
    Ok(HybridTransceiver { v_rf, v_bb, w_rf, w_bb, beta })
}

/// Fully-digital solve outcome.
#[derive(Clone, Debug)]
pub struct FdOutcome {
    pub tx: DigitalTransceiver,
    pub mse: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<f64>,
}

pub const FD_MAX_ALTERNATIONS: usize = 500;

/// Fully-digital bound: the same closed-form alternation with identity RF
/// matrices and one RF chain per antenna, run until the relative change of
/// the sum MSE drops below `tol` (at most [`FD_MAX_ALTERNATIONS`] rounds).
///
/// Starts from the `N_s` dominant right singular vectors of each `H[x]`.
pub fn fd_ir_solve(h: &FrameChannel, r: &IpnCovariance, ns: usize, tol: f64, tally: &mut Tally) -> Result<FdOutcome> {
    check_problem(h, r)?;
    let (ka, kb) = (h.h[0].rows(), h.h[0].cols());
    if ns > ka.min(kb) {
        return Err(Error::Shape("more streams than antennas"));
    }
    let eye_a = CMat::identity(ka);
    let eye_b = CMat::identity(kb);
    let mut v: Vec<CMat> = h
        .h
        .iter()
        .map(|hx| {
            let (_, vecs) = hermitian_eig(&hx.adj_matmul(hx));
            let m = vecs.first_cols(ns);
            let p = m.norm_fro();
            m.scale_re(1.0 / p)
        })
        .collect();
    let mut beta = alloc::vec![1.0; h.h.len()];
    let mut w = Vec::new();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..FD_MAX_ALTERNATIONS {
        iterations = it + 1;
        w = h
            .h
            .iter()
            .zip(&r.r)
            .zip(&v)
            .zip(&beta)
            .map(|(((hx, rx), vx), &b)| {
                let hv = tally.mul(hx, vx);
                let h1 = tally.scale_re(&hv, 1.0 / b);
                bb_combiner_closed_form(&eye_a, &h1, rx, b, tally)
            })
            .collect::<Result<_>>()?;
        let mut nv = Vec::with_capacity(v.len());
        for x in 0..h.h.len() {
            let (vb, b) = bb_precoder_closed_form(&eye_b, &h.h[x], &w[x], &r.r[x], tally)?;
            nv.push(vb);
            beta[x] = b;
        }
        v = nv;
        let f: f64 = (0..h.h.len()).map(|x| mse_subcarrier(&h.h[x], &r.r[x], &v[x], &w[x], beta[x], tally)).sum();
        let prev = trace.last().copied();
        trace.push(f);
        if let Some(p) = prev {
            if (p - f).abs() <= tol * p.abs().max(f64::MIN_POSITIVE) {
                converged = true;
                break;
            }
        }
    }
    // Refresh the combiner for the final precoder so both blocks are matched.
    let w_final: Vec<CMat> = h
        .h
        .iter()
        .zip(&r.r)
        .zip(&v)
        .zip(&beta)
        .map(|(((hx, rx), vx), &b)| {
            let hv = tally.mul(hx, vx);
                let h1 = tally.scale_re(&hv, 1.0 / b);
            bb_combiner_closed_form(&eye_a, &h1, rx, b, tally)
        })
        .collect::<Result<_>>()?;
    let f_final: f64 = (0..h.h.len()).map(|x| mse_subcarrier(&h.h[x], &r.r[x], &v[x], &w_final[x], beta[x], tally)).sum();
    if f_final <= *trace.last().unwrap_or(&f64::INFINITY) {
        w = w_final;
        trace.push(f_final);
    }
    let mse = *trace.last().unwrap();
    Ok(FdOutcome { tx: DigitalTransceiver { v, w, beta }, mse, iterations, converged, trace })
}

/// MSE-optimal `β` for fixed joint matrices: `β⁻¹ = Re tr(A)/(‖A‖² + η)`
/// with `A = W^H H V`. Falls back to `fallback` when the gain is not
/// positive.
pub fn optimal_beta(h: &CMat, r: &CMat, v: &CMat, w: &CMat, fallback: f64) -> f64 {
    let a = w.adj_matmul(&h.matmul(v));
    let eta = w.adj_matmul(&r.matmul(w)).trace().re;
    let num = a.trace().re;
    let den = a.norm_fro_sq() + eta;
    if num > 0.0 && den > 0.0 {
        den / num
    } else {
        fallback
    }
}
