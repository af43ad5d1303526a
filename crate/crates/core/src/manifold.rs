//! Complex-circle manifold: matrices whose entries all have unit modulus.


// Float supplies libm-backed methods when std is absent.
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::linalg::{CMat, Tally};

/// Unit-modulus tolerance for [`UnitModulusMatrix`].
pub const MODULUS_TOL: f64 = 1e-9;
/// Gradients with smaller Frobenius norm are treated as zero.
pub const ZERO_GRADIENT: f64 = 1e-14;

/// A point on the complex-circle manifold.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitModulusMatrix(CMat);

impl UnitModulusMatrix {
    /// Wraps `m` after checking every entry against [`MODULUS_TOL`].
    pub fn new(m: CMat) -> Result<Self> {
        if m.as_slice().iter().all(|z| (z.norm() - 1.0).abs() <= MODULUS_TOL) {
            Ok(Self(m))
        } else {
            Err(Error::InvalidConfig("matrix is not unit-modulus".into()))
        }
    }

    /// Entrywise phases `exp(jθ)`, row-major.
    pub fn from_phases(rows: usize, cols: usize, mut theta: impl FnMut(usize, usize) -> f64) -> Self {
        Self(CMat::from_fn(rows, cols, |i, j| crate::linalg::C64::from_polar(1.0, theta(i, j))))
    }

    pub fn matrix(&self) -> &CMat {
        &self.0
    }

    pub fn into_inner(self) -> CMat {
        self.0
    }

    pub fn max_modulus_defect(&self) -> f64 {
        modulus_defect(&self.0)
    }
}

pub fn modulus_defect(m: &CMat) -> f64 {
    m.as_slice().iter().map(|z| (z.norm() - 1.0).abs()).fold(0.0, f64::max)
}

/// A direction tangent to the manifold at some base point.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentVector(CMat);

impl TangentVector {
    pub fn matrix(&self) -> &CMat {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.norm_fro()
    }
}

/// Entrywise projection `g − Re(g·w̄)·w`.
pub fn riemannian_project(grad: &CMat, base: &UnitModulusMatrix, tally: &mut Tally) -> TangentVector {
    let w = base.matrix();
    assert_eq!(grad.shape(), w.shape(), "riemannian_project: shape mismatch");
    let out = CMat::from_fn(grad.rows(), grad.cols(), |i, j| {
        let (g, b) = (grad[(i, j)], w[(i, j)]);
        g - b * (g * b.conj()).re
    });
    let n = (grad.rows() * grad.cols()) as u64;
    // Hadamard product, real scaling, subtraction.
    tally.mul += n;
    tally.real += 2 * n;
    tally.add += n;
    TangentVector(out)
}

/// Largest `|Re(v·w̄)|` over entries; zero for an exact tangent vector.
pub fn tangency_residual(v: &TangentVector, base: &UnitModulusMatrix) -> f64 {
    v.matrix()
        .as_slice()
        .iter()
        .zip(base.matrix().as_slice())
        .map(|(a, b)| (a * b.conj()).re.abs())
        .fold(0.0, f64::max)
}

/// Entrywise normalisation `v / |v|`.
pub fn retract(point: &CMat, tally: &mut Tally) -> Result<UnitModulusMatrix> {
    let mut out = point.clone();
    for z in out.as_mut_slice() {
        let r = z.norm();
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::RetractionSingularity);
        }
        *z /= r;
    }
    tally.real += 5 * (point.rows() * point.cols()) as u64;
    Ok(UnitModulusMatrix(out))
}

/// `base − γ·grad/‖grad‖_F`, the point before retraction.
pub fn tangent_step(base: &UnitModulusMatrix, gamma: f64, grad: &TangentVector, tally: &mut Tally) -> Result<CMat> {
    if gamma == 0.0 {
        return Ok(base.matrix().clone());
    }
    let n = tally.norm_fro(grad.matrix());
    if !(n > 0.0) {
        return Err(Error::DegenerateDirection);
    }
    let dir = tally.scale_re(grad.matrix(), gamma / n);
    Ok(tally.sub(base.matrix(), &dir))
}

/// Backtracking constants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Armijo {
    pub initial: f64,
    pub shrink: f64,
    pub slope: f64,
    pub max_backtracks: usize,
}

impl Default for Armijo {
    fn default() -> Self {
        Self { initial: 1.0, shrink: 0.5, slope: 1e-4, max_backtracks: 50 }
    }
}

/// Outcome of a line search. `value` is the objective at the accepted point
/// (the base value when stalled).
#[derive(Clone, Debug)]
pub struct LineSearch {
    pub step: f64,
    pub stalled: bool,
    pub trials: usize,
    pub value: f64,
    pub point: UnitModulusMatrix,
}

/// Armijo backtracking along the normalised tangent direction: the largest
/// `γ = γ₀·τ^m` with `f(retract(step(γ))) ≤ f(base) − c·γ·‖grad‖_F²`.
/// After `max_backtracks` rejections the search stalls with `γ = 0`.
pub fn armijo_search<F>(
    mut objective: F,
    base: &UnitModulusMatrix,
    base_value: f64,
    grad: &TangentVector,
    params: &Armijo,
    tally: &mut Tally,
) -> Result<LineSearch>
where
    F: FnMut(&UnitModulusMatrix, &mut Tally) -> Result<f64>,
{
    if !base_value.is_finite() {
        return Err(Error::NonFinite("line-search base objective"));
    }
    let gsq = grad.matrix().norm_fro_sq();
    if gsq.sqrt() < ZERO_GRADIENT {
        return Ok(LineSearch { step: params.initial, stalled: false, trials: 0, value: base_value, point: base.clone() });
    }
    let mut gamma = params.initial;
    for m in 0..=params.max_backtracks {
        let cand = retract(&tangent_step(base, gamma, grad, tally)?, tally)?;
        let f = objective(&cand, tally)?;
        tally.real += 3;
        if f <= base_value - params.slope * gamma * gsq {
            return Ok(LineSearch { step: gamma, stalled: false, trials: m + 1, value: f, point: cand });
        }
        gamma *= params.shrink;
    }
    Ok(LineSearch { step: 0.0, stalled: true, trials: params.max_backtracks + 1, value: base_value, point: base.clone() })
}
