//! Scenario generation: UPA geometry, time-evolving Saleh-Valenzuela
//! air-to-ground channels, Poisson impulse interference and raw IPN
//! snapshots.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

// Float supplies libm-backed methods when std is absent.
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ipn::{snapshot_covariance, IpnCovariance, IpnSeries};
use crate::linalg::{c, CMat, C64};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Uniform planar array shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Upa {
    pub rows: usize,
    pub cols: usize,
}

impl Upa {
    pub const fn new(rows: usize, cols: usize) -> Self {
        Self { rows, cols }
    }

    pub const fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Initial positions in metres (Cartesian, z up).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Positions {
    pub lgs: [f64; 3],
    pub igs: [f64; 3],
    pub ac: [f64; 3],
}

impl Default for Positions {
    fn default() -> Self {
        Self { lgs: [0.0, 0.0, 0.0], igs: [100.0, 100.0, 0.0], ac: [0.0, 0.0, 8000.0] }
    }
}

fn default_heading() -> [f64; 3] {
    [1.0, 0.0, 0.0]
}
fn default_carrier() -> f64 {
    1.1e9
}
fn default_frame_interval() -> f64 {
    2e-4
}
fn default_max_delay_samples() -> f64 {
    4.0
}
fn default_delay_jitter_samples() -> f64 {
    0.01
}

/// Physical and system constants of one scenario.
///
/// Field names in JSON mirror the symbols used throughout the crate
/// (`X`, `Ns`, `Ka`, ...). Unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Subcarrier count.
    #[serde(rename = "X")]
    pub x: usize,
    /// Data streams per subcarrier.
    #[serde(rename = "Ns")]
    pub ns: usize,
    /// Receive (aircraft) array.
    #[serde(rename = "Ka")]
    pub ka: Upa,
    /// Transmit (ground station) array.
    #[serde(rename = "Kb")]
    pub kb: Upa,
    #[serde(rename = "KrfA")]
    pub krf_a: usize,
    #[serde(rename = "KrfB")]
    pub krf_b: usize,
    /// Rician factor, linear.
    #[serde(rename = "ricianK")]
    pub rician_k: f64,
    /// NLoS path count.
    #[serde(rename = "U")]
    pub u: usize,
    /// Sample period in seconds.
    #[serde(rename = "Ts")]
    pub ts: f64,
    /// Aircraft speed in km/h.
    pub velocity: f64,
    pub positions: Positions,
    #[serde(rename = "snrDb")]
    pub snr_db: f64,
    #[serde(rename = "sirDb")]
    pub sir_db: f64,
    /// Poisson mean impulse arrivals per OFDM symbol.
    #[serde(rename = "impulseRate")]
    pub impulse_rate: f64,
    pub frames: usize,
    pub seed: u64,
    /// Direction of flight; normalised on use.
    #[serde(default = "default_heading")]
    pub heading: [f64; 3],
    #[serde(rename = "carrierHz", default = "default_carrier")]
    pub carrier_hz: f64,
    /// Frame spacing in seconds.
    #[serde(rename = "frameInterval", default = "default_frame_interval")]
    pub frame_interval: f64,
    /// Largest NLoS excess delay, in samples of `Ts`.
    #[serde(rename = "maxDelaySamples", default = "default_max_delay_samples")]
    pub max_delay_samples: f64,
    /// Per-frame uniform jitter bound of NLoS excess delays, in samples.
    #[serde(rename = "delayJitterSamples", default = "default_delay_jitter_samples")]
    pub delay_jitter_samples: f64,
}

impl ScenarioConfig {
    /// Desk-scale defaults: 2×4 arrays on both ends, 8 subcarriers, 2 RF
    /// chains, SNR 8 dB, SIR −3.8 dB, 600 km/h.
    pub fn desk() -> Self {
        Self {
            x: 8,
            ns: 2,
            ka: Upa::new(2, 4),
            kb: Upa::new(2, 4),
            krf_a: 2,
            krf_b: 2,
            rician_k: 4.0,
            u: 4,
            ts: 2e-6,
            velocity: 600.0,
            positions: Positions::default(),
            snr_db: 8.0,
            sir_db: -3.8,
            impulse_rate: 1.0,
            frames: 20,
            seed: 1,
            heading: default_heading(),
            carrier_hz: default_carrier(),
            frame_interval: default_frame_interval(),
            max_delay_samples: default_max_delay_samples(),
            delay_jitter_samples: default_delay_jitter_samples(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.x == 0 || self.ns == 0 || self.krf_a == 0 || self.krf_b == 0 {
            return bad("X, Ns, KrfA, KrfB must be at least 1");
        }
        if self.ka.is_empty() || self.kb.is_empty() {
            return bad("antenna arrays must have at least one element");
        }
        if self.ns > self.krf_a.min(self.krf_b) {
            return bad("Ns must not exceed min(KrfA, KrfB)");
        }
        if self.krf_a > self.ka.len() || self.krf_b > self.kb.len() {
            return bad("RF chain count exceeds antenna count");
        }
        if !(self.rician_k > 0.0) {
            return bad("ricianK must be positive");
        }
        if !(self.impulse_rate >= 0.0) {
            return bad("impulseRate must be non-negative");
        }
        if !(self.ts > 0.0) || !(self.frame_interval > 0.0) || !(self.carrier_hz > 0.0) {
            return bad("Ts, frameInterval and carrierHz must be positive");
        }
        if !(self.velocity >= 0.0) || !(self.max_delay_samples >= 0.0) || !(self.delay_jitter_samples >= 0.0) {
            return bad("velocity and delay bounds must be non-negative");
        }
        let all = [self.snr_db, self.sir_db, self.velocity, self.ts];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(format!("non-finite value in {all:?}")));
        }
        Ok(())
    }

    /// Noise variance `σ_n² = 10^(−snrDb/10)`.
    pub fn noise_power(&self) -> f64 {
        10f64.powf(-self.snr_db / 10.0)
    }

    /// Interference power `σ_i² = 10^(−sirDb/10)`.
    pub fn interference_power(&self) -> f64 {
        10f64.powf(-self.sir_db / 10.0)
    }

    pub fn speed_mps(&self) -> f64 {
        self.velocity / 3.6
    }

    pub fn doppler_hz(&self) -> f64 {
        self.speed_mps() * self.carrier_hz / SPEED_OF_LIGHT
    }

    /// Lag-one correlation of NLoS gains between frames spaced `dt`
    /// apart (Clarke model, `J0(2π f_d dt)`).
    pub fn gain_correlation(&self, dt: f64) -> f64 {
        libm::j0(2.0 * PI * self.doppler_hz() * dt)
    }
}

/// Azimuth and elevation in radians.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Angles {
    pub azi: f64,
    pub ele: f64,
}

impl Angles {
    /// Angles that make [`upa_steering`] reproduce the phase progression of a
    /// plane wave from unit direction `u` across an array lying in the x-y
    /// plane: `sin(ele)cos(azi) = u_x`, `sin(azi) = u_y`.
    pub fn from_direction(u: [f64; 3]) -> Self {
        let n = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
        let (ux, uy) = (u[0] / n, u[1] / n);
        let azi = uy.clamp(-1.0, 1.0).asin();
        let ca = azi.cos();
        let ele = if ca > 1e-15 { (ux / ca).clamp(-1.0, 1.0).asin() } else { 0.0 };
        Self { azi, ele }
    }
}

/// One propagation path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub gain: C64,
    /// Seconds.
    pub delay: f64,
    pub aoa: Angles,
    pub aod: Angles,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathState {
    pub los: Path,
    pub nlos: Vec<Path>,
    pub ac_position: [f64; 3],
}

fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn norm3(a: [f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

/// Standard circularly-symmetric complex Gaussian draw (unit variance).
pub fn complex_normal(rng: &mut impl Rng) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    c(re, im) * core::f64::consts::FRAC_1_SQRT_2
}

/// UPA response with half-wavelength spacing, row-major flattening:
/// entry `(m, n)` is `exp(jπ(m·sin(ele)·cos(azi) + n·sin(azi)))`.
pub fn upa_steering(azi: f64, ele: f64, rows: usize, cols: usize) -> Vec<C64> {
    let (pm, pn) = (ele.sin() * azi.cos(), azi.sin());
    let mut out = Vec::with_capacity(rows * cols);
    for m in 0..rows {
        for n in 0..cols {
            let phase = PI * (m as f64 * pm + n as f64 * pn);
            out.push(C64::from_polar(1.0, phase));
        }
    }
    out
}

fn steering(angles: Angles, upa: Upa) -> Vec<C64> {
    upa_steering(angles.azi, angles.ele, upa.rows, upa.cols)
}

fn los_path(cfg: &ScenarioConfig, ac: [f64; 3]) -> Path {
    let to_lgs = sub3(cfg.positions.lgs, ac);
    let d = norm3(to_lgs);
    let delay = d / SPEED_OF_LIGHT;
    let wavelengths = d * cfg.carrier_hz / SPEED_OF_LIGHT;
    let phase = -2.0 * PI * (wavelengths - wavelengths.floor());
    Path {
        gain: C64::from_polar(1.0, phase),
        delay,
        aoa: Angles::from_direction(to_lgs),
        aod: Angles::from_direction([-to_lgs[0], -to_lgs[1], -to_lgs[2]]),
    }
}

/// Fresh path state at the configured initial geometry: unit-variance
/// complex Gaussian NLoS gains, uniform excess delays in
/// `[0, maxDelaySamples·Ts]` and uniform arrival/departure angles.
pub fn init_paths(cfg: &ScenarioConfig, rng: &mut impl Rng) -> PathState {
    let ac = cfg.positions.ac;
    let los = los_path(cfg, ac);
    let max_excess = cfg.max_delay_samples * cfg.ts;
    let half = PI / 2.0;
    let nlos = (0..cfg.u)
        .map(|_| {
            let mut ang = || Angles { azi: rng.random_range(-half..half), ele: rng.random_range(-half..half) };
            let (aoa, aod) = (ang(), ang());
            Path {
                gain: complex_normal(rng),
                delay: los.delay + rng.random::<f64>() * max_excess,
                aoa,
                aod,
            }
        })
        .collect();
    PathState { los, nlos, ac_position: ac }
}

/// Advances the geometry by `dt` seconds.
///
/// The aircraft moves along `heading` at `velocity`; the LoS path is
/// recomputed from the new position; NLoS gains follow
/// `h' = a·h + √(1−a²)·w` with `a` from the Doppler spread; excess delays
/// jitter uniformly and stay within `[0, maxDelaySamples·Ts]`.
pub fn evolve_paths(state: &PathState, dt: f64, cfg: &ScenarioConfig, rng: &mut impl Rng) -> PathState {
    let hd = cfg.heading;
    let hn = norm3(hd);
    let step = if hn > 0.0 { cfg.speed_mps() * dt / hn } else { 0.0 };
    let ac = [
        state.ac_position[0] + step * hd[0],
        state.ac_position[1] + step * hd[1],
        state.ac_position[2] + step * hd[2],
    ];
    let los = los_path(cfg, ac);
    let a = cfg.gain_correlation(dt);
    let innov = (1.0 - a * a).max(0.0).sqrt();
    let max_excess = cfg.max_delay_samples * cfg.ts;
    let jitter = cfg.delay_jitter_samples * cfg.ts;
    let nlos = state
        .nlos
        .iter()
        .map(|p| {
            let w = complex_normal(rng);
            let j = if jitter > 0.0 { rng.random_range(-jitter..=jitter) } else { 0.0 };
            let excess = (p.delay - state.los.delay + j).clamp(0.0, max_excess);
            Path { gain: p.gain * a + w * innov, delay: los.delay + excess, aoa: p.aoa, aod: p.aod }
        })
        .collect();
    PathState { los, nlos, ac_position: ac }
}

/// Per-subcarrier channel matrices of one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameChannel {
    pub t: usize,
    pub h: Vec<CMat>,
}

impl FrameChannel {
    pub fn subcarriers(&self) -> usize {
        self.h.len()
    }
}

fn path_gain(p: &Path, x: usize, cfg: &ScenarioConfig) -> C64 {
    let phase = -2.0 * PI * x as f64 * p.delay / (cfg.ts * cfg.x as f64);
    p.gain * C64::from_polar(1.0, phase)
}

/// `H[x] = α_LoS a_A a_B^H + √(1/(Uρ_R)) Σ_u α_{x,u} a_A a_B^H`.
/// An empty NLoS set yields the pure-LoS channel.
pub fn gen_frame_channel(cfg: &ScenarioConfig, state: &PathState, t: usize) -> FrameChannel {
    let (ka, kb) = (cfg.ka.len(), cfg.kb.len());
    let mut terms: Vec<(Vec<C64>, Vec<C64>, &Path, f64)> = Vec::with_capacity(1 + state.nlos.len());
    terms.push((steering(state.los.aoa, cfg.ka), steering(state.los.aod, cfg.kb), &state.los, 1.0));
    if !state.nlos.is_empty() {
        let w = (1.0 / (state.nlos.len() as f64 * cfg.rician_k)).sqrt();
        for p in &state.nlos {
            terms.push((steering(p.aoa, cfg.ka), steering(p.aod, cfg.kb), p, w));
        }
    }
    let h = (0..cfg.x)
        .map(|x| {
            let mut m = CMat::zeros(ka, kb);
            for (aa, ab, p, w) in &terms {
                let g = path_gain(p, x, cfg) * *w;
                for i in 0..ka {
                    let gi = g * aa[i];
                    for j in 0..kb {
                        m[(i, j)] += gi * ab[j].conj();
                    }
                }
            }
            m
        })
        .collect();
    FrameChannel { t, h }
}

/// Impulses hitting one OFDM symbol: `(sample index, complex amplitude)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImpulseTrain {
    pub symbol: usize,
    pub arrivals: Vec<(usize, C64)>,
}

impl ImpulseTrain {
    /// Frequency-domain coefficient on subcarrier `x` of an `n`-point symbol:
    /// `Σ_k A_k exp(−j2πx m_k / n)`.
    pub fn coefficient(&self, x: usize, n: usize) -> C64 {
        self.arrivals
            .iter()
            .map(|&(m, a)| a * C64::from_polar(1.0, -2.0 * PI * (x * m % n) as f64 / n as f64))
            .sum()
    }
}

/// Poisson(`impulseRate`) arrivals at uniform sample positions with
/// constant magnitude `√(σ_i²/rate)` and uniform phase, so the average
/// interference power per receive antenna is `σ_i²`.
pub fn gen_impulse_train(cfg: &ScenarioConfig, rng: &mut impl Rng, symbol: usize) -> ImpulseTrain {
    let rate = cfg.impulse_rate;
    if !(rate > 0.0) {
        return ImpulseTrain { symbol, arrivals: Vec::new() };
    }
    let count: f64 = Poisson::new(rate).expect("positive rate").sample(rng);
    let mag = (cfg.interference_power() / rate).sqrt();
    let arrivals = (0..count as usize)
        .map(|_| {
            let m = rng.random_range(0..cfg.x);
            let phase = rng.random_range(0.0..2.0 * PI);
            (m, C64::from_polar(mag, phase))
        })
        .collect();
    ImpulseTrain { symbol, arrivals }
}

/// One IPN observation across receive antennas on every subcarrier.
#[derive(Clone, Debug, PartialEq)]
pub struct IpnSnapshot {
    pub index: usize,
    pub d: Vec<Vec<C64>>,
}

/// Receive steering towards the interfering station from the aircraft's
/// current position (pure LoS interference channel).
pub fn igs_steering(cfg: &ScenarioConfig, state: &PathState) -> Vec<C64> {
    let dir = sub3(cfg.positions.igs, state.ac_position);
    steering(Angles::from_direction(dir), cfg.ka)
}

/// One snapshot per impulse train: `d_x[s] = g_x[s]·a_IGS + n_x[s]` with
/// `n ~ CN(0, σ_n² I)`.
pub fn gen_ipn_snapshots(
    cfg: &ScenarioConfig,
    trains: &[ImpulseTrain],
    igs: &[C64],
    rng: &mut impl Rng,
) -> Vec<IpnSnapshot> {
    let sn = cfg.noise_power().sqrt();
    trains
        .iter()
        .enumerate()
        .map(|(s, train)| {
            let d = (0..cfg.x)
                .map(|x| {
                    let g = train.coefficient(x, cfg.x);
                    igs.iter()
                        .map(|&a| {
                            let n = if sn > 0.0 { complex_normal(rng) * sn } else { C64::new(0.0, 0.0) };
                            g * a + n
                        })
                        .collect()
                })
                .collect();
            IpnSnapshot { index: s, d }
        })
        .collect()
}

/// Ensemble IPN covariance `σ_i² a a^H + σ_n² I` (interference term only
/// when impulses can occur), identical on every subcarrier.
pub fn true_ipn_covariance(cfg: &ScenarioConfig, state: &PathState, t: usize) -> IpnCovariance {
    let a = CMat::column_vector(&igs_steering(cfg, state));
    let si = if cfg.impulse_rate > 0.0 { cfg.interference_power() } else { 0.0 };
    let r = a.matmul_adj(&a).scale_re(si).add(&CMat::identity(a.rows()).scale_re(cfg.noise_power()));
    IpnCovariance { t, r: (0..cfg.x).map(|_| r.clone()).collect() }
}

/// A single beamforming problem: channel and IPN covariance of one frame.
#[derive(Clone, Debug)]
pub struct Instance {
    pub channel: FrameChannel,
    pub ipn: IpnCovariance,
}

/// Draws an independent problem instance at frame 0 of a fresh geometry.
pub fn draw_instance(cfg: &ScenarioConfig, rng: &mut impl Rng) -> Instance {
    let state = init_paths(cfg, rng);
    Instance { channel: gen_frame_channel(cfg, &state, 0), ipn: true_ipn_covariance(cfg, &state, 0) }
}

/// Consecutive frames of one scenario run.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub channels: Vec<FrameChannel>,
    pub truth: IpnSeries,
    /// Snapshot estimates; `None` when no snapshots were requested.
    pub estimate: Option<IpnSeries>,
}

/// Runs `frames` frames spaced `frameInterval` apart from a fresh geometry,
/// drawing `snapshots` impulse trains per frame for the estimates.
///
/// Random draws are consumed frame by frame, so a shorter run with the same
/// generator state is a prefix of a longer one.
pub fn simulate(cfg: &ScenarioConfig, frames: usize, snapshots: usize, rng: &mut impl Rng) -> Result<Trajectory> {
    cfg.validate()?;
    let mut state = init_paths(cfg, rng);
    let mut channels = Vec::with_capacity(frames);
    let mut truth = Vec::with_capacity(frames);
    let mut estimate = Vec::with_capacity(frames);
    for t in 0..frames {
        if t > 0 {
            state = evolve_paths(&state, cfg.frame_interval, cfg, rng);
        }
        channels.push(gen_frame_channel(cfg, &state, t));
        truth.push(true_ipn_covariance(cfg, &state, t));
        if snapshots > 0 {
            let trains: Vec<ImpulseTrain> = (0..snapshots).map(|s| gen_impulse_train(cfg, rng, t * snapshots + s)).collect();
            let snaps = gen_ipn_snapshots(cfg, &trains, &igs_steering(cfg, &state), rng);
            estimate.push(snapshot_covariance(&snaps, t)?);
        }
    }
    Ok(Trajectory {
        channels,
        truth: IpnSeries::new(truth)?,
        estimate: if snapshots > 0 { Some(IpnSeries::new(estimate)?) } else { None },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn steering_broadside_is_all_ones() {
        let a = upa_steering(0.0, 0.0, 2, 2);
        assert_eq!(a, vec![c(1.0, 0.0); 4]);
    }

    #[test]
    fn steering_alternates_at_endfire() {
        let a = upa_steering(PI / 2.0, 0.0, 1, 4);
        let want = [1.0, -1.0, 1.0, -1.0];
        for (z, w) in a.iter().zip(want) {
            assert!((z.re - w).abs() < 1e-12 && z.im.abs() < 1e-12, "{z}");
        }
    }

    #[test]
    fn steering_is_unit_modulus() {
        let mut r = rng(4);
        for _ in 0..200 {
            let (azi, ele) = (r.random_range(-10.0..10.0), r.random_range(-10.0..10.0));
            for z in upa_steering(azi, ele, 3, 5) {
                assert!((z.norm() - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn direction_angles_reproduce_plane_wave_phases() {
        let u = [0.3, -0.4, 0.866];
        let ang = Angles::from_direction(u);
        let a = upa_steering(ang.azi, ang.ele, 2, 3);
        let n = norm3(u);
        for m in 0..2 {
            for k in 0..3 {
                let want = PI * (m as f64 * u[0] / n + k as f64 * u[1] / n);
                let got = a[m * 3 + k].arg();
                let d = (got - want).rem_euclid(2.0 * PI);
                assert!(d < 1e-12 || 2.0 * PI - d < 1e-12);
            }
        }
    }

    #[test]
    fn stationary_aircraft_keeps_los_geometry() {
        let mut cfg = ScenarioConfig::desk();
        cfg.velocity = 0.0;
        let mut r = rng(5);
        let s0 = init_paths(&cfg, &mut r);
        let s1 = evolve_paths(&s0, 0.37, &cfg, &mut r);
        assert_eq!(s0.los.aoa, s1.los.aoa);
        assert_eq!(s0.los.aod, s1.los.aod);
        // a = J0(0) = 1 leaves NLoS gains untouched.
        for (p, q) in s0.nlos.iter().zip(&s1.nlos) {
            assert_eq!(p.gain, q.gain);
        }
    }

    #[test]
    fn pure_los_channel_is_rank_one_and_flat_without_delay() {
        let mut cfg = ScenarioConfig::desk();
        cfg.u = 0;
        let mut s = init_paths(&cfg, &mut rng(6));
        let h = gen_frame_channel(&cfg, &s, 0);
        for hx in &h.h {
            let (vals, _) = crate::linalg::hermitian_eig(&hx.matmul_adj(hx));
            assert!(vals[1].abs() < 1e-9 * vals[0]);
        }
        s.los.delay = 0.0;
        let h = gen_frame_channel(&cfg, &s, 0);
        for hx in &h.h[1..] {
            assert_eq!(hx, &h.h[0]);
        }
    }

    #[test]
    fn channel_matches_scalar_loop_oracle() {
        let mut cfg = ScenarioConfig::desk();
        cfg.u = 2;
        let s = init_paths(&cfg, &mut rng(7));
        let h = gen_frame_channel(&cfg, &s, 3);
        let (ra, ca) = (cfg.ka.rows, cfg.ka.cols);
        let (rb, cb) = (cfg.kb.rows, cfg.kb.cols);
        for x in 0..cfg.x {
            for i in 0..ra * ca {
                for j in 0..rb * cb {
                    let mut want = C64::new(0.0, 0.0);
                    for (k, p) in core::iter::once(&s.los).chain(&s.nlos).enumerate() {
                        let w = if k == 0 { 1.0 } else { (1.0 / (2.0 * cfg.rician_k)).sqrt() };
                        let alpha = p.gain * C64::from_polar(1.0, -2.0 * PI * (x as f64) * p.delay / (cfg.ts * cfg.x as f64));
                        let (mi, ni) = ((i / ca) as f64, (i % ca) as f64);
                        let (mj, nj) = ((j / cb) as f64, (j % cb) as f64);
                        let pa = PI * (mi * p.aoa.ele.sin() * p.aoa.azi.cos() + ni * p.aoa.azi.sin());
                        let pb = PI * (mj * p.aod.ele.sin() * p.aod.azi.cos() + nj * p.aod.azi.sin());
                        want += alpha * w * C64::from_polar(1.0, pa - pb);
                    }
                    let got = h.h[x][(i, j)];
                    assert!((got - want).norm() <= 1e-12 * want.norm().max(1.0));
                }
            }
        }
    }

    #[test]
    fn channel_generation_is_pure() {
        let cfg = ScenarioConfig::desk();
        let s = init_paths(&cfg, &mut rng(8));
        assert_eq!(gen_frame_channel(&cfg, &s, 2), gen_frame_channel(&cfg, &s, 2));
    }

    #[test]
    fn nlos_energy_shrinks_with_rician_factor() {
        let mut cfg = ScenarioConfig::desk();
        let s = init_paths(&cfg, &mut rng(9));
        let mut los_only = s.clone();
        los_only.nlos.clear();
        let mut prev = f64::INFINITY;
        for k in [1.0, 10.0, 100.0, 1000.0] {
            cfg.rician_k = k;
            let full = gen_frame_channel(&cfg, &s, 0);
            let base = gen_frame_channel(&cfg, &los_only, 0);
            let e: f64 = full.h.iter().zip(&base.h).map(|(a, b)| a.sub(b).norm_fro()).sum();
            assert!(e < prev);
            prev = e;
        }
    }

    #[test]
    fn delay_free_energy_is_flat_across_subcarriers() {
        let cfg = ScenarioConfig::desk();
        let mut s = init_paths(&cfg, &mut rng(10));
        s.los.delay = 0.0;
        for p in &mut s.nlos {
            p.delay = 0.0;
        }
        let h = gen_frame_channel(&cfg, &s, 0);
        let e0 = h.h[0].norm_fro_sq();
        for hx in &h.h {
            assert!((hx.norm_fro_sq() - e0).abs() < 1e-9 * e0);
        }
    }

    #[test]
    fn gauss_markov_lag_one_correlation() {
        let cfg = ScenarioConfig::desk();
        let a = cfg.gain_correlation(cfg.frame_interval);
        let mut r = rng(11);
        let mut s = init_paths(&cfg, &mut r);
        let (mut num, mut den) = (C64::new(0.0, 0.0), 0.0);
        for _ in 0..10_000 {
            let n = evolve_paths(&s, cfg.frame_interval, &cfg, &mut r);
            for (p, q) in s.nlos.iter().zip(&n.nlos) {
                num += q.gain * p.gain.conj();
                den += p.gain.norm_sqr();
            }
            s = n;
        }
        let rho = num.re / den;
        assert!((rho - a).abs() < 0.02, "empirical {rho} vs {a}");
        assert!(a > 0.5 && a < 0.99);
    }

    #[test]
    fn delays_stay_non_negative_and_bounded() {
        let mut cfg = ScenarioConfig::desk();
        cfg.delay_jitter_samples = 1.0;
        let mut r = rng(12);
        let mut s = init_paths(&cfg, &mut r);
        for _ in 0..500 {
            s = evolve_paths(&s, cfg.frame_interval, &cfg, &mut r);
            for p in &s.nlos {
                let ex = p.delay - s.los.delay;
                assert!(p.delay >= 0.0 && ex >= -1e-18 && ex <= cfg.max_delay_samples * cfg.ts + 1e-18);
            }
        }
    }

    #[test]
    fn zero_rate_gives_empty_trains() {
        let mut cfg = ScenarioConfig::desk();
        cfg.impulse_rate = 0.0;
        let mut r = rng(13);
        for s in 0..100 {
            assert!(gen_impulse_train(&cfg, &mut r, s).arrivals.is_empty());
        }
    }

    #[test]
    fn poisson_arrival_mean() {
        let mut cfg = ScenarioConfig::desk();
        cfg.impulse_rate = 2.0;
        let mut r = rng(14);
        let n = 100_000;
        let total: usize = (0..n).map(|s| gen_impulse_train(&cfg, &mut r, s).arrivals.len()).sum();
        let mean = total as f64 / n as f64;
        assert!((1.98..=2.02).contains(&mean), "{mean}");
    }

    #[test]
    fn interference_power_calibrated_to_sir() {
        let mut cfg = ScenarioConfig::desk();
        cfg.sir_db = -3.8;
        cfg.impulse_rate = 1.5;
        let mut r = rng(15);
        let n = 100_000;
        let mut p = 0.0;
        for s in 0..n {
            let tr = gen_impulse_train(&cfg, &mut r, s);
            p += tr.coefficient(s % cfg.x, cfg.x).norm_sqr();
        }
        let p = p / n as f64;
        let want = 10f64.powf(0.38);
        assert!((p / want - 1.0).abs() < 0.02, "{p} vs {want}");
    }

    #[test]
    fn empty_trains_without_noise_give_zero_snapshots() {
        let mut cfg = ScenarioConfig::desk();
        cfg.snr_db = f64::INFINITY;
        let trains: Vec<_> = (0..3).map(|s| ImpulseTrain { symbol: s, arrivals: Vec::new() }).collect();
        let s = init_paths(&cfg, &mut rng(16));
        let snaps = gen_ipn_snapshots(&cfg, &trains, &igs_steering(&cfg, &s), &mut rng(17));
        assert!(snaps.iter().flat_map(|s| s.d.iter().flatten()).all(|z| *z == C64::new(0.0, 0.0)));
    }

    #[test]
    fn single_impulse_has_flat_spectrum() {
        let mut cfg = ScenarioConfig::desk();
        cfg.snr_db = f64::INFINITY;
        let trains = [ImpulseTrain { symbol: 0, arrivals: vec![(3, c(0.7, -0.2))] }];
        let s = init_paths(&cfg, &mut rng(18));
        let snaps = gen_ipn_snapshots(&cfg, &trains, &igs_steering(&cfg, &s), &mut rng(19));
        let ref0: Vec<f64> = snaps[0].d[0].iter().map(|z| z.norm()).collect();
        for dx in &snaps[0].d {
            for (z, r0) in dx.iter().zip(&ref0) {
                assert!((z.norm() - r0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn snapshot_generation_is_seeded() {
        let cfg = ScenarioConfig::desk();
        let run = |seed| {
            let mut r = rng(seed);
            let s = init_paths(&cfg, &mut r);
            let trains: Vec<_> = (0..4).map(|k| gen_impulse_train(&cfg, &mut r, k)).collect();
            gen_ipn_snapshots(&cfg, &trains, &igs_steering(&cfg, &s), &mut r)
        };
        assert_eq!(run(20), run(20));
        assert_ne!(run(20), run(21));
    }

    #[test]
    fn config_validation() {
        let mut cfg = ScenarioConfig::desk();
        assert!(cfg.validate().is_ok());
        cfg.ns = 3;
        assert!(cfg.validate().is_err());
        let mut cfg = ScenarioConfig::desk();
        cfg.rician_k = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = ScenarioConfig::desk();
        cfg.impulse_rate = -1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = ScenarioConfig::desk();
        cfg.u = 0;
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn shorter_runs_are_prefixes() {
        let cfg = ScenarioConfig::desk();
        let long = simulate(&cfg, 6, 4, &mut rng(12)).unwrap();
        let short = simulate(&cfg, 3, 4, &mut rng(12)).unwrap();
        assert_eq!(short.channels[..], long.channels[..3]);
        assert_eq!(short.truth, long.truth.window(0, 3).unwrap());
        assert_eq!(short.estimate.unwrap(), long.estimate.unwrap().window(0, 3).unwrap());
    }

    #[test]
    fn trajectory_without_snapshots_has_no_estimate() {
        let t = simulate(&ScenarioConfig::desk(), 2, 0, &mut rng(3)).unwrap();
        assert!(t.estimate.is_none());
        assert_eq!(t.truth.bounds(), Some((0, 1)));
        assert_eq!(t.channels.len(), 2);
    }
}
