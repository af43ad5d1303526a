//! IPN covariance estimation, controlled error injection, NMSE scoring and
//! the persistence predictor.

use alloc::vec::Vec;

// Float supplies libm-backed methods when std is absent.
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eig, CMat, C64};
use crate::scenario::{complex_normal, IpnSnapshot};

/// Per-subcarrier IPN covariance matrices of frame `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct IpnCovariance {
    pub t: usize,
    pub r: Vec<CMat>,
}

impl IpnCovariance {
    pub fn subcarriers(&self) -> usize {
        self.r.len()
    }

    pub fn antennas(&self) -> usize {
        self.r.first().map_or(0, |m| m.rows())
    }

    pub fn norm_sq(&self) -> f64 {
        self.r.iter().map(CMat::norm_fro_sq).sum()
    }

    fn same_shape(&self, other: &Self) -> bool {
        self.r.len() == other.r.len() && self.r.iter().zip(&other.r).all(|(a, b)| a.shape() == b.shape())
    }

    /// Replaces every matrix by its Hermitian part with eigenvalues clipped
    /// from below at `floor`. Used to condition perturbed estimates before
    /// they reach the solvers.
    pub fn psd_floor(&self, floor: f64) -> Self {
        let r = self
            .r
            .iter()
            .map(|m| {
                let (vals, vecs) = hermitian_eig(m);
                let n = m.rows();
                let d = CMat::from_fn(n, n, |i, j| if i == j { C64::new(vals[i].max(floor), 0.0) } else { C64::new(0.0, 0.0) });
                vecs.matmul(&d).matmul_adj(&vecs).hermitian_part()
            })
            .collect();
        Self { t: self.t, r }
    }
}

/// Contiguous run of covariance frames with uniform dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct IpnSeries {
    frames: Vec<IpnCovariance>,
}

impl IpnSeries {
    pub fn new(frames: Vec<IpnCovariance>) -> Result<Self> {
        for w in frames.windows(2) {
            if w[1].t != w[0].t + 1 {
                return Err(Error::Shape("series frame indices must be contiguous"));
            }
            if !w[0].same_shape(&w[1]) {
                return Err(Error::Shape("series frames must share dimensions"));
            }
        }
        Ok(Self { frames })
    }

    pub fn frames(&self) -> &[IpnCovariance] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<IpnCovariance> {
        self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Inclusive frame-index bounds, if nonempty.
    pub fn bounds(&self) -> Option<(usize, usize)> {
        Some((self.frames.first()?.t, self.frames.last()?.t))
    }

    /// Sub-series of `len` frames starting at position `start`.
    pub fn window(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.frames.len() {
            return Err(Error::Shape("window exceeds series"));
        }
        Ok(Self { frames: self.frames[start..start + len].to_vec() })
    }
}

/// Estimation-error model with `ρ[dB] = 10·lg(σ_e²)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorModel {
    pub rho_db: f64,
}

impl ErrorModel {
    pub fn new(rho_db: f64) -> Self {
        Self { rho_db }
    }

    pub fn variance(&self) -> f64 {
        if self.rho_db == f64::NEG_INFINITY {
            0.0
        } else {
            10f64.powf(self.rho_db / 10.0)
        }
    }
}

/// Empirical average `R̂[x] = (1/S) Σ_s d_x[s] d_x[s]^H`.
pub fn snapshot_covariance(snapshots: &[IpnSnapshot], t: usize) -> Result<IpnCovariance> {
    let first = snapshots.first().ok_or(Error::NoSnapshots)?;
    let nx = first.d.len();
    let ka = first.d.first().map_or(0, Vec::len);
    if snapshots.iter().any(|s| s.d.len() != nx || s.d.iter().any(|d| d.len() != ka)) {
        return Err(Error::Shape("snapshots must share dimensions"));
    }
    let inv = 1.0 / snapshots.len() as f64;
    let r = (0..nx)
        .map(|x| {
            let mut acc = CMat::zeros(ka, ka);
            for s in snapshots {
                let d = &s.d[x];
                // Lower triangle then mirror, so the result is exactly Hermitian.
                for i in 0..ka {
                    for j in 0..=i {
                        acc[(i, j)] += d[i] * d[j].conj();
                    }
                }
            }
            for i in 0..ka {
                acc[(i, i)] = C64::new(acc[(i, i)].re * inv, 0.0);
                for j in 0..i {
                    let v = acc[(i, j)] * inv;
                    acc[(i, j)] = v;
                    acc[(j, i)] = v.conj();
                }
            }
            acc
        })
        .collect();
    Ok(IpnCovariance { t, r })
}

/// Returns `R − E` where `E = (E₀ + E₀^H)/√2` and `E₀` has i.i.d.
/// `CN(0, σ_e²)` entries, so every entry of `E` has variance `σ_e²` and the
/// output stays Hermitian.
pub fn perturb_covariance(r: &IpnCovariance, em: &ErrorModel, rng: &mut impl Rng) -> IpnCovariance {
    let var = em.variance();
    if var == 0.0 {
        return r.clone();
    }
    let sd = var.sqrt();
    let out = r
        .r
        .iter()
        .map(|m| {
            let n = m.rows();
            let e0 = CMat::from_fn(n, n, |_, _| complex_normal(rng) * sd);
            let e = e0.add(&e0.adjoint()).scale_re(core::f64::consts::FRAC_1_SQRT_2);
            let mut o = m.sub(&e);
            for i in 0..n {
                o[(i, i)].im = m[(i, i)].im;
            }
            o
        })
        .collect();
    IpnCovariance { t: r.t, r: out }
}

/// `Σ_t ‖R^t − Ṙ^t‖_F² / Σ_t ‖R^t‖_F²`, summed over frames and subcarriers.
pub fn nmse(pred: &IpnSeries, actual: &IpnSeries) -> Result<f64> {
    if pred.len() != actual.len() {
        return Err(Error::Shape("prediction and reference lengths differ"));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (p, a) in pred.frames().iter().zip(actual.frames()) {
        if !p.same_shape(a) {
            return Err(Error::Shape("prediction and reference shapes differ"));
        }
        for (pm, am) in p.r.iter().zip(&a.r) {
            num += am.sub(pm).norm_fro_sq();
            den += am.norm_fro_sq();
        }
    }
    if !(den > 0.0) {
        return Err(Error::DegenerateReference);
    }
    Ok(num / den)
}

pub fn to_db(v: f64) -> f64 {
    10.0 * v.log10()
}

/// Repeats the last observed covariance for `horizon` future frames.
pub fn predict_persistence(history: &IpnSeries, horizon: usize) -> Result<IpnSeries> {
    let last = history.frames().last().ok_or(Error::Shape("empty history"))?;
    IpnSeries::new((1..=horizon).map(|l| IpnCovariance { t: last.t + l, r: last.r.clone() }).collect())
}
