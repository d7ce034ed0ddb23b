//! Monte Carlo link simulation: channel evolution, pilot schedules, Kalman
//! tracking, beamforming and data detection.
//!
//! The error covariance recursion does not depend on the observations, so for
//! every method with deterministic beams the covariance trajectory, the Kalman
//! gains and the analytic NMSE are computed once (a [`Track`]) and shared by all
//! runs; each run then only propagates the channel and the estimate.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fading::{init_channel, step_block, step_symbol, RngStream};
use crate::kalman::{apply_eigen_gain, eigen_gain_weights, full_gain, Covariance};
use crate::linalg::{
    beam_gain, beam_quadratic, hermitian_eig, measurement_matrix, unvec, CMatrix, CVector, C64,
};
use crate::modulation::Modulation;
use crate::pilot_design::{
    algorithm1_schedule, algorithm2_schedule, baseline_schedule, dominant_directions, random_frame_schedule,
    Baseline, PilotSchedule, PilotUse, SlotConfig,
};
use crate::stats::{
    dft_tdt_default, dft_tdt_upa, doppler_coefficient, exp_covariance, kmh_to_mps, kron_stats,
    one_ring_covariance, upa_covariance, ChannelStatistics, OneRingGeometry, SpatialCovariance, UpaGeometry,
};

const LANE_CHANNEL: u64 = 1;
const LANE_NOISE: u64 = 2;
const LANE_DATA: u64 = 3;
const LANE_BEAMS: u64 = 4;
const ZERO_GAIN: f64 = 1e-12;

/// Spatial channel model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ChannelModel {
    /// `r^{2|i-j|}` on both sides of the link.
    Exponential { r: f64 },
    /// One-ring ULA at the transmitter, uncorrelated receive antennas.
    OneRing { aoa: f64, angle_spread: f64, spacing: f64 },
    /// Planar array of the one-ring geometry with a single receive antenna.
    Upa(UpaGeometry),
    /// One-ring ULA replaced by its DFT/TDT approximation.
    DftTdt { aoa: f64, angle_spread: f64, spacing: f64 },
}

/// Temporal fading structure.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FadingMode {
    /// Channel evolves every symbol.
    Symbol,
    /// Channel constant within a slot, evolving slot to slot.
    Block,
}

/// Pilot design method.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    /// Greedy eigen-beam design at equal pilot power.
    Proposed,
    /// Greedy selection with water-filling power allocation.
    ProposedPower,
    Orthogonal,
    Random,
    FixedEigen,
    RoundRobin { l_p: usize },
    /// Greedy design driven by the DFT/TDT covariance approximation.
    DftTdt,
    /// Dominant eigenvectors of the prediction covariance, block fading.
    BlockFadingProposed,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Proposed => write!(f, "proposed"),
            Method::ProposedPower => write!(f, "proposed-power"),
            Method::Orthogonal => write!(f, "orthogonal"),
            Method::Random => write!(f, "random"),
            Method::FixedEigen => write!(f, "fixed-eigen"),
            Method::RoundRobin { l_p } => write!(f, "round-robin-{l_p}"),
            Method::DftTdt => write!(f, "dft-tdt"),
            Method::BlockFadingProposed => write!(f, "block-fading-proposed"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    /// Accepts the names printed by `Display`; round robin also as
    /// `round-robin:N` or `round-robin(N)`.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let m = match t {
            "proposed" => Method::Proposed,
            "proposed-power" => Method::ProposedPower,
            "orthogonal" => Method::Orthogonal,
            "random" => Method::Random,
            "fixed-eigen" => Method::FixedEigen,
            "dft-tdt" => Method::DftTdt,
            "block-fading-proposed" => Method::BlockFadingProposed,
            _ => {
                let rest = t
                    .strip_prefix("round-robin")
                    .ok_or_else(|| Error::param("method", format!("unknown method `{t}`")))?;
                let digits = rest.trim_start_matches([':', '-', '(']).trim_end_matches(')');
                let l_p = digits
                    .parse::<usize>()
                    .map_err(|_| Error::param("method", format!("round robin needs L_p, e.g. `round-robin:16`, got `{t}`")))?;
                Method::RoundRobin { l_p }
            }
        };
        Ok(m)
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Full description of a simulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ChannelModel,
    pub n_t: usize,
    pub n_r: usize,
    /// Symbols per slot.
    pub m: usize,
    /// Pilot symbols per slot.
    pub m_p: usize,
    pub velocity_kmh: f64,
    pub carrier_hz: f64,
    pub symbol_s: f64,
    /// Explicit temporal coefficient; overrides the Doppler-derived value.
    pub a: Option<f64>,
    /// Pilot and data SNR in dB with unit pilot and data power.
    pub snr_db: f64,
    pub fading: FadingMode,
    pub modulation: Modulation,
    pub horizon_slots: usize,
    pub runs: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    /// Scale the planar-array covariance by its path loss.
    pub path_loss: bool,
}

impl Default for ExperimentConfig {
    /// Exponential model, 32 x 2 antennas, r = 0.6, M = 10, M_p = 4, 15 dB, 3 km/h.
    fn default() -> Self {
        Self {
            model: ChannelModel::Exponential { r: 0.6 },
            n_t: 32,
            n_r: 2,
            m: 10,
            m_p: 4,
            velocity_kmh: 3.0,
            carrier_hz: 2.5e9,
            symbol_s: 1e-4,
            a: None,
            snr_db: 15.0,
            fading: FadingMode::Symbol,
            modulation: Modulation::None,
            horizon_slots: 30,
            runs: 1000,
            seed: 1,
            methods: vec![Method::Proposed, Method::Orthogonal, Method::Random, Method::FixedEigen],
            path_loss: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_t == 0 {
            return Err(Error::param("n_t", "must be at least 1"));
        }
        if self.n_r == 0 {
            return Err(Error::param("n_r", "must be at least 1"));
        }
        self.slot_config()?;
        if !self.snr_db.is_finite() {
            return Err(Error::param("snr_db", "must be finite"));
        }
        if self.horizon_slots == 0 {
            return Err(Error::param("horizon_slots", "must be at least 1"));
        }
        if self.runs == 0 {
            return Err(Error::param("runs", "must be at least 1"));
        }
        if let Some(a) = self.a {
            if !(a > 0.0 && a <= 1.0) {
                return Err(Error::param("a", format!("must lie in (0, 1], got {a}")));
            }
        } else {
            doppler_coefficient(kmh_to_mps(self.velocity_kmh), self.carrier_hz, self.symbol_s)?;
        }
        match &self.model {
            ChannelModel::Exponential { r } => {
                if !(0.0..1.0).contains(r) {
                    return Err(Error::param("r", format!("must lie in [0, 1), got {r}")));
                }
            }
            ChannelModel::OneRing { aoa, angle_spread, spacing }
            | ChannelModel::DftTdt { aoa, angle_spread, spacing } => {
                OneRingGeometry::new(self.n_t, *aoa, *angle_spread, *spacing)?;
            }
            ChannelModel::Upa(g) => {
                g.validate()?;
                if g.n_t() != self.n_t {
                    return Err(Error::param(
                        "n_t",
                        format!("planar array has {} x {} = {} elements, n_t = {}", g.n_vertical, g.n_horizontal, g.n_t(), self.n_t),
                    ));
                }
                if self.n_r != 1 {
                    return Err(Error::param("n_r", "planar-array model has a single receive antenna"));
                }
            }
        }
        if self.path_loss && !matches!(self.model, ChannelModel::Upa(_)) {
            return Err(Error::param("path_loss", "path loss is defined for the planar-array model only"));
        }
        for m in &self.methods {
            self.check_method(*m)?;
        }
        Ok(())
    }

    /// Rejects method/configuration combinations that are not defined.
    pub fn check_method(&self, method: Method) -> Result<()> {
        let mode = self.mode_for(method);
        match method {
            Method::ProposedPower if mode == FadingMode::Block => {
                Err(Error::param("method", "proposed-power is defined for symbolwise fading only"))
            }
            Method::Proposed | Method::BlockFadingProposed if mode == FadingMode::Block && self.n_r != 1 => {
                Err(Error::param("n_r", "block-fading design needs a single receive antenna"))
            }
            Method::Proposed | Method::BlockFadingProposed | Method::DftTdt
                if mode == FadingMode::Block && self.m_p >= self.n_t =>
            {
                Err(Error::param("m_p", "block-fading design needs M_p < N_t"))
            }
            Method::DftTdt if matches!(self.model, ChannelModel::Exponential { .. }) => {
                Err(Error::param("method", "dft-tdt needs a one-ring or planar-array geometry"))
            }
            Method::RoundRobin { l_p } if l_p <= self.m_p || l_p > self.n_t => Err(Error::param(
                "round_robin_lp",
                format!("round robin needs M_p < L_p <= N_t, got L_p = {l_p}"),
            )),
            Method::FixedEigen if self.m_p > self.n_t => Err(Error::param("m_p", "fixed-eigen needs M_p <= N_t")),
            Method::ProposedPower if self.m_p > self.n_t => {
                Err(Error::param("m_p", "power allocation needs M_p <= N_t distinct directions"))
            }
            _ => Ok(()),
        }
    }

    /// Fading structure used for `method`.
    pub fn mode_for(&self, method: Method) -> FadingMode {
        if method == Method::BlockFadingProposed {
            FadingMode::Block
        } else {
            self.fading
        }
    }

    /// `σ² = 10^{-snr_db/10}`.
    pub fn noise_var(&self) -> f64 {
        10f64.powf(-self.snr_db / 10.0)
    }

    pub fn slot_config(&self) -> Result<SlotConfig> {
        SlotConfig::new(self.m, self.m_p, 1.0, self.noise_var())
    }

    /// Temporal coefficient: the explicit value or `J₀(2π f_D T_s)`.
    pub fn temporal_coefficient(&self) -> Result<f64> {
        match self.a {
            Some(a) => Ok(a),
            None => doppler_coefficient(kmh_to_mps(self.velocity_kmh), self.carrier_hz, self.symbol_s),
        }
    }

    /// Number of symbols simulated.
    pub fn symbols(&self) -> usize {
        self.horizon_slots * self.m
    }

    fn one_ring(&self) -> Option<OneRingGeometry> {
        match self.model {
            ChannelModel::OneRing { aoa, angle_spread, spacing } | ChannelModel::DftTdt { aoa, angle_spread, spacing } => {
                Some(OneRingGeometry {
                    n: self.n_t,
                    aoa,
                    angle_spread,
                    spacing,
                })
            }
            _ => None,
        }
    }
}

/// Time series of link metrics, averaged over runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSeries {
    pub runs: usize,
    pub m: usize,
    pub m_p: usize,
    /// `tr(P) / tr(R_h)`: filtered at pilot symbols, predicted during data.
    pub nmse: Vec<f64>,
    /// `‖h - ĥ‖² / tr(R_h)`.
    pub empirical_nmse: Vec<f64>,
    /// Received SNR with the estimated channel (linear).
    pub received_snr: Vec<f64>,
    /// SNR of beamforming on the true channel.
    pub perfect_csi_snr: Vec<f64>,
    /// `log₂(1 + received_snr)`.
    pub rate_bits: Vec<f64>,
    /// Bit error rate on data symbols when a constellation is configured.
    pub ber: Vec<Option<f64>>,
    pub is_pilot: Vec<bool>,
    /// Beams that fell back to the dominant eigenvector because `ĥ = 0`.
    pub fallback_beams: usize,
    /// Data symbols decided by random guess because the estimated gain vanished.
    pub guessed_symbols: usize,
}

impl MetricSeries {
    pub fn len(&self) -> usize {
        self.nmse.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nmse.is_empty()
    }

    /// Received SNR in dB at each symbol.
    pub fn received_snr_db(&self) -> Vec<f64> {
        self.received_snr.iter().map(|s| 10.0 * s.log10()).collect()
    }

    pub fn perfect_csi_snr_db(&self) -> Vec<f64> {
        self.perfect_csi_snr.iter().map(|s| 10.0 * s.log10()).collect()
    }

    pub fn slots(&self) -> usize {
        self.len() / self.m
    }

    /// Mean of `series` over slot `l` (0-based).
    pub fn slot_mean(&self, series: &[f64], l: usize) -> f64 {
        let s = &series[l * self.m..(l + 1) * self.m];
        s.iter().sum::<f64>() / s.len() as f64
    }

    /// Mean of `series` over the data symbols of slot `l`.
    pub fn slot_data_mean(&self, series: &[f64], l: usize) -> f64 {
        let s = &series[l * self.m + self.m_p..(l + 1) * self.m];
        if s.is_empty() {
            return f64::NAN;
        }
        s.iter().sum::<f64>() / s.len() as f64
    }

    /// Analytic NMSE averaged over the final slot.
    pub fn steady_state_nmse(&self) -> f64 {
        self.slot_mean(&self.nmse, self.slots() - 1)
    }

    /// Mean rate over data symbols.
    pub fn mean_rate(&self) -> f64 {
        mean(self.data_values(&self.rate_bits))
    }

    /// Mean BER over data symbols, if a constellation is configured.
    pub fn mean_ber(&self) -> Option<f64> {
        let v: Vec<f64> = self.ber.iter().flatten().cloned().collect();
        if v.is_empty() {
            None
        } else {
            Some(mean(v))
        }
    }

    fn data_values(&self, series: &[f64]) -> Vec<f64> {
        series
            .iter()
            .zip(&self.is_pilot)
            .filter(|(_, p)| !**p)
            .map(|(v, _)| *v)
            .collect()
    }
}

fn mean(v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Transmit beam with a flag recording the eigenvector fallback.
#[derive(Clone, Debug, PartialEq)]
pub struct Beamformer {
    pub beam: CVector,
    pub fallback: bool,
}

/// Maximal-ratio transmission `s = √ρ_d ĥ / ‖ĥ‖` for a single receive antenna.
/// A zero estimate falls back to the dominant transmit eigenvector.
pub fn mrt_beamformer(h_hat: &CVector, rho_d: f64, stats: &ChannelStatistics) -> Beamformer {
    let norm = h_hat.norm();
    if norm > 0.0 {
        Beamformer {
            beam: h_hat.scale(rho_d.sqrt() / norm),
            fallback: false,
        }
    } else {
        Beamformer {
            beam: stats.tx_eigvec(0).scale(rho_d.sqrt()),
            fallback: true,
        }
    }
}

/// Eigen-beamformer for an `N_r x N_t` channel estimate.
///
/// The beam maximises the effective gain `‖Ĥ conj(s)‖`, so `conj(s)/√ρ_d` is the
/// dominant right singular vector of `Ĥ`; for one receive antenna this is
/// exactly the MRT beam. It is computed from the `N_r x N_r` Gram matrix.
pub fn eigen_beamformer(h_hat: &CMatrix, rho_d: f64, stats: &ChannelStatistics) -> Beamformer {
    let gram = h_hat * h_hat.adjoint();
    let fallback = || Beamformer {
        beam: stats.tx_eigvec(0).scale(rho_d.sqrt()),
        fallback: true,
    };
    let Ok((vals, vecs)) = hermitian_eig(&gram) else {
        return fallback();
    };
    if vals.is_empty() || vals[0] <= 0.0 {
        return fallback();
    }
    let right = h_hat.adjoint() * vecs.column(0);
    let norm = right.norm();
    if norm == 0.0 {
        return fallback();
    }
    let mut s = right.map(|z| z.conj()).scale(1.0 / norm);
    crate::linalg::normalize_phase(&mut s);
    Beamformer {
        beam: s.scale(rho_d.sqrt()),
        fallback: false,
    }
}

fn effective_snr(g_hat: &CVector, c: &CMatrix, noise_var: f64) -> f64 {
    let g2 = g_hat.norm_squared();
    if g2 == 0.0 {
        return 0.0;
    }
    let q = (g_hat.adjoint() * c * g_hat)[(0, 0)].re.max(0.0);
    g2 * g2 / (q + noise_var * g2)
}

/// `Sᴴ P S` for `S = s ⊗ I`, computed in the eigenbasis for eigen-domain covariances.
pub fn beam_error_covariance(s: &CVector, cov: &Covariance, stats: &ChannelStatistics) -> CMatrix {
    match cov {
        Covariance::Full(p) => beam_quadratic(p, s, stats.n_r()),
        Covariance::Eigen(l) => eigen_beam_covariance(s, l, stats),
    }
}

fn eigen_beam_covariance(s: &CVector, lambda: &[f64], stats: &ChannelStatistics) -> CMatrix {
    let n_r = stats.n_r();
    let c = stats.tx_eigvecs().adjoint() * s;
    let mut d = vec![0.0; n_r];
    for (i, ci) in c.iter().enumerate() {
        let w = ci.norm_sqr();
        for j in 0..n_r {
            d[j] += w * lambda[i * n_r + j];
        }
    }
    let v = stats.rx_eigvecs();
    v * crate::linalg::real_diag(&d) * v.adjoint()
}

/// Received SNR `‖ĝ‖⁴ / (ĝᴴ Sᴴ P S ĝ + σ² ‖ĝ‖²)` with `ĝ = Sᴴ ĥ`, `S = s ⊗ I`.
/// For one receive antenna this is `|sᴴĥ|² / (sᴴ P s + σ²)`.
pub fn received_snr(s: &CVector, h_hat: &CVector, cov: &Covariance, stats: &ChannelStatistics, noise_var: f64) -> f64 {
    let g_hat = beam_gain(s, h_hat, stats.n_r());
    effective_snr(&g_hat, &beam_error_covariance(s, cov, stats), noise_var)
}

/// Data-phase observation `y = (s ⊗ I)ᴴ h · d + w`.
pub fn transmit_data(h: &CVector, s: &CVector, d: C64, noise_var: f64, n_r: usize, rng: &mut RngStream) -> CVector {
    let g = beam_gain(s, h, n_r);
    let sigma = noise_var.sqrt();
    CVector::from_fn(n_r, |r, _| g[r] * d + rng.complex_gaussian() * sigma)
}

/// Combines with the estimated effective gain and slices to the nearest point.
/// Returns `None` when the estimated gain vanishes.
pub fn detect(y: &CVector, g_hat: &CVector, constellation: Modulation) -> Option<Vec<u8>> {
    let g2 = g_hat.norm_squared();
    if g2.sqrt() < ZERO_GAIN {
        return None;
    }
    let z = (g_hat.adjoint() * y)[(0, 0)] / g2;
    Some(constellation.demodulate(z))
}

/// Update applied at one symbol of a [`Track`].
#[derive(Clone, Debug)]
enum Step {
    /// Eigen-beam updates `(direction, power, gain weights)`.
    Eigen(Vec<(usize, f64, Vec<f64>)>),
    /// Dense gain for the stacked observation of `pilots`.
    Full { pilots: CMatrix, gain: CMatrix },
}

/// Observation-independent part of a method: schedule, gains and covariances.
#[derive(Clone, Debug)]
struct Track {
    schedule: PilotSchedule,
    nmse: Vec<f64>,
    anchors: Vec<Covariance>,
    /// Per symbol: anchor index and prediction steps since the anchor.
    anchor_of: Vec<(usize, usize)>,
    /// Per symbol: update completed at that symbol.
    steps: Vec<Option<Step>>,
}

/// Prepared experiment: configuration plus channel statistics.
pub struct Experiment {
    cfg: ExperimentConfig,
    stats: ChannelStatistics,
    a: f64,
    design: OnceLock<std::result::Result<ChannelStatistics, Error>>,
}

impl Experiment {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let stats = build_statistics(&cfg)?;
        let a = cfg.temporal_coefficient()?;
        Ok(Self {
            cfg,
            stats,
            a,
            design: OnceLock::new(),
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn stats(&self) -> &ChannelStatistics {
        &self.stats
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    /// Statistics assumed by the DFT/TDT design.
    pub fn design_stats(&self) -> Result<&ChannelStatistics> {
        self.design
            .get_or_init(|| build_design_statistics(&self.cfg))
            .as_ref()
            .map_err(|e| e.clone())
    }

    fn slot_config(&self) -> SlotConfig {
        self.cfg.slot_config().expect("validated")
    }

    fn schedule(&self, method: Method, rng: &mut RngStream) -> Result<(PilotSchedule, bool)> {
        let cfg = self.slot_config();
        let slots = self.cfg.horizon_slots;
        let stats = &self.stats;
        let block = self.cfg.mode_for(method) == FadingMode::Block;
        let out = match method {
            Method::Proposed | Method::BlockFadingProposed if block => (block_design_schedule(stats, &cfg, self.a, slots)?, true),
            Method::DftTdt if block => (block_design_schedule(self.design_stats()?, &cfg, self.a, slots)?, false),
            Method::Proposed => (algorithm1_schedule(stats, &cfg, self.a, slots)?, true),
            Method::BlockFadingProposed => unreachable!("block-fading-proposed always runs in block mode"),
            Method::ProposedPower => (algorithm2_schedule(stats, &cfg, self.a, slots)?, true),
            Method::DftTdt => (algorithm1_schedule(self.design_stats()?, &cfg, self.a, slots)?, false),
            Method::FixedEigen => (baseline_schedule(Baseline::FixedDominant, stats, &cfg, slots, rng)?, true),
            Method::RoundRobin { l_p } => (baseline_schedule(Baseline::RoundRobin { l_p }, stats, &cfg, slots, rng)?, true),
            Method::Orthogonal => (baseline_schedule(Baseline::Orthogonal, stats, &cfg, slots, rng)?, false),
            Method::Random if block => (random_frame_schedule(stats.n_t(), &cfg, slots, rng)?, false),
            Method::Random => (baseline_schedule(Baseline::Random, stats, &cfg, slots, rng)?, false),
        };
        Ok(out)
    }

    fn track(&self, method: Method, rng: &mut RngStream) -> Result<Track> {
        let (schedule, eigen) = self.schedule(method, rng)?;
        let block = self.cfg.mode_for(method) == FadingMode::Block;
        build_track(&self.stats, &self.slot_config(), self.a, schedule, eigen, block)
    }

    /// One Monte Carlo run on stream `(seed, run)`.
    pub fn run_episode(&self, method: Method, rng: &RngStream) -> Result<MetricSeries> {
        self.cfg.check_method(method)?;
        let track = self.track(method, &mut rng.lane(LANE_BEAMS))?;
        let run = self.simulate(method, &track, rng.seed(), rng.stream_id());
        Ok(self.reduce(&[run]))
    }

    /// Average of `runs` episodes on streams `(seed, 0..runs)`, reduced in run order.
    pub fn monte_carlo(&self, method: Method, runs: usize, seed: u64) -> Result<MetricSeries> {
        if runs == 0 {
            return Err(Error::param("runs", "must be at least 1"));
        }
        self.cfg.check_method(method)?;
        let shared = if method == Method::Random {
            None
        } else {
            Some(self.track(method, &mut RngStream::with_lane(seed, 0, LANE_BEAMS))?)
        };
        let per_run: Vec<RunSeries> = (0..runs as u64)
            .into_par_iter()
            .map(|run| match &shared {
                Some(t) => Ok(self.simulate(method, t, seed, run)),
                None => {
                    let t = self.track(method, &mut RngStream::with_lane(seed, run, LANE_BEAMS))?;
                    Ok(self.simulate(method, &t, seed, run))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.reduce(&per_run))
    }

    fn simulate(&self, method: Method, track: &Track, seed: u64, run: u64) -> RunSeries {
        let cfg = &self.cfg;
        let stats = &self.stats;
        let n_r = stats.n_r();
        let noise_var = cfg.noise_var();
        let sigma = noise_var.sqrt();
        let rho_d = 1.0;
        let block = cfg.mode_for(method) == FadingMode::Block;
        let modulation = cfg.modulation;
        let bps = modulation.bits_per_symbol();
        let total = cfg.symbols();
        let trace = stats.trace();
        let mut chan_rng = RngStream::with_lane(seed, run, LANE_CHANNEL);
        let mut noise_rng = RngStream::with_lane(seed, run, LANE_NOISE);
        let mut data_rng = RngStream::with_lane(seed, run, LANE_DATA);

        let mut out = RunSeries::new(total);
        let mut fading = init_channel(stats, self.a, &mut chan_rng);
        let mut h_hat = CVector::zeros(stats.dim());
        let mut stacked: Vec<C64> = Vec::new();
        let stationary_quad = |s: &CVector| eigen_beam_covariance(s, stats.eig_stacked(), stats);

        for l in 0..cfg.horizon_slots {
            for m in 1..=cfg.m {
                let k = l * cfg.m + m;
                let idx = k - 1;
                if k > 1 && (!block || m == 1) {
                    fading = if block {
                        step_block(fading, &mut chan_rng)
                    } else {
                        step_symbol(fading, &mut chan_rng)
                    };
                    h_hat.scale_mut(self.a);
                }
                let pilot = m <= cfg.m_p;
                if pilot {
                    let u: &PilotUse = &track.schedule.slots[l][m - 1];
                    let p = u.pilot();
                    let g = beam_gain(&p, &fading.h, n_r);
                    for r in 0..n_r {
                        stacked.push(g[r] + noise_rng.complex_gaussian() * sigma);
                    }
                }
                if let Some(step) = &track.steps[idx] {
                    let y = CVector::from_vec(std::mem::take(&mut stacked));
                    apply_step(step, stats, &mut h_hat, &y);
                }

                let err = (&fading.h - &h_hat).norm_squared();
                out.empirical[idx] = err / trace;
                out.nmse[idx] = track.nmse[idx];

                let bf = if n_r == 1 {
                    mrt_beamformer(&h_hat, rho_d, stats)
                } else {
                    eigen_beamformer(&unvec(&h_hat, n_r), rho_d, stats)
                };
                out.fallbacks += bf.fallback as usize;
                let s = &bf.beam;
                let (anchor, steps) = track.anchor_of[idx];
                let w = self.a.powi(2 * steps as i32);
                let mut c = beam_error_covariance(s, &track.anchors[anchor], stats).scale(w);
                if w < 1.0 {
                    c += stationary_quad(s).scale(1.0 - w);
                }
                let g_hat = beam_gain(s, &h_hat, n_r);
                out.snr[idx] = effective_snr(&g_hat, &c, noise_var);
                out.perfect[idx] = rho_d * largest_gram_eig(&fading.h, n_r) / noise_var;

                if !pilot && bps > 0 {
                    let bits: Vec<u8> = (0..bps).map(|_| data_rng.bit()).collect();
                    let d = modulation.modulate(&bits);
                    let y = transmit_data(&fading.h, s, d, noise_var, n_r, &mut noise_rng);
                    let decided = match detect(&y, &g_hat, modulation) {
                        Some(b) => b,
                        None => {
                            out.guessed += 1;
                            (0..bps).map(|_| data_rng.bit()).collect()
                        }
                    };
                    out.bit_errors[idx] = bits.iter().zip(&decided).filter(|(a, b)| a != b).count() as u64;
                    out.bits[idx] = bps as u64;
                }
            }
        }
        out
    }

    fn reduce(&self, runs: &[RunSeries]) -> MetricSeries {
        let cfg = &self.cfg;
        let total = cfg.symbols();
        let n = runs.len() as f64;
        let mut nmse = vec![0.0; total];
        let mut emp = vec![0.0; total];
        let mut snr = vec![0.0; total];
        let mut perfect = vec![0.0; total];
        let mut errs = vec![0u64; total];
        let mut bits = vec![0u64; total];
        let mut fallbacks = 0;
        let mut guessed = 0;
        for r in runs {
            for k in 0..total {
                nmse[k] += r.nmse[k];
                emp[k] += r.empirical[k];
                snr[k] += r.snr[k];
                perfect[k] += r.perfect[k];
                errs[k] += r.bit_errors[k];
                bits[k] += r.bits[k];
            }
            fallbacks += r.fallbacks;
            guessed += r.guessed;
        }
        let avg = |v: Vec<f64>| v.into_iter().map(|x| x / n).collect::<Vec<_>>();
        let received_snr = avg(snr);
        let rate_bits = received_snr.iter().map(|s| (1.0 + s).log2()).collect();
        let is_pilot: Vec<bool> = (0..total).map(|i| i % cfg.m < cfg.m_p).collect();
        let ber = (0..total)
            .map(|k| if bits[k] > 0 { Some(errs[k] as f64 / bits[k] as f64) } else { None })
            .collect();
        MetricSeries {
            runs: runs.len(),
            m: cfg.m,
            m_p: cfg.m_p,
            nmse: avg(nmse),
            empirical_nmse: avg(emp),
            received_snr,
            perfect_csi_snr: avg(perfect),
            rate_bits,
            ber,
            is_pilot,
            fallback_beams: fallbacks,
            guessed_symbols: guessed,
        }
    }
}

fn largest_gram_eig(h: &CVector, n_r: usize) -> f64 {
    if n_r == 1 {
        return h.norm_squared();
    }
    let hm = unvec(h, n_r);
    let gram = &hm * hm.adjoint();
    hermitian_eig(&gram).map(|(v, _)| v[0].max(0.0)).unwrap_or(0.0)
}

fn apply_step(step: &Step, stats: &ChannelStatistics, h_hat: &mut CVector, y: &CVector) {
    let n_r = stats.n_r();
    match step {
        Step::Eigen(updates) => {
            for (c, (dir, power, weights)) in updates.iter().enumerate() {
                let yc = y.rows(c * n_r, n_r).into_owned();
                let beam = stats.tx_eigvec(*dir).scale(power.sqrt());
                let innovation = yc - beam_gain(&beam, h_hat, n_r);
                apply_eigen_gain(h_hat, stats, *dir, *power, weights, &innovation);
            }
        }
        Step::Full { pilots, gain } => {
            let s = measurement_matrix(pilots, n_r);
            let innovation = y - s.adjoint() * &*h_hat;
            *h_hat += gain * innovation;
        }
    }
}

/// Per-run raw values.
struct RunSeries {
    nmse: Vec<f64>,
    empirical: Vec<f64>,
    snr: Vec<f64>,
    perfect: Vec<f64>,
    bit_errors: Vec<u64>,
    bits: Vec<u64>,
    fallbacks: usize,
    guessed: usize,
}

impl RunSeries {
    fn new(n: usize) -> Self {
        Self {
            nmse: vec![0.0; n],
            empirical: vec![0.0; n],
            snr: vec![0.0; n],
            perfect: vec![0.0; n],
            bit_errors: vec![0; n],
            bits: vec![0; n],
            fallbacks: 0,
            guessed: 0,
        }
    }
}

fn predict_cov(cov: &Covariance, stats: &ChannelStatistics, a: f64) -> Covariance {
    let w = a * a;
    match cov {
        Covariance::Full(p) => Covariance::Full(p.scale(w) + stats.covariance().scale(1.0 - w)),
        Covariance::Eigen(l) => Covariance::Eigen(
            l.iter()
                .zip(stats.eig_stacked())
                .map(|(x, x1)| w * x + (1.0 - w) * x1)
                .collect(),
        ),
    }
}

/// Applies the pilot uses of `uses` jointly (they are simultaneous in block
/// fading, a single use in symbolwise fading) and returns the step and posterior.
fn update_cov(
    cov: &Covariance,
    stats: &ChannelStatistics,
    uses: &[PilotUse],
    noise_var: f64,
) -> Result<(Step, Covariance)> {
    let n_r = stats.n_r();
    match cov {
        Covariance::Eigen(l) => {
            let mut next = l.clone();
            let mut ups = Vec::with_capacity(uses.len());
            for u in uses {
                let dir = u.direction.ok_or_else(|| Error::param("schedule", "eigen filter needs eigen-direction pilots"))?;
                let range = dir * n_r..(dir + 1) * n_r;
                let weights = eigen_gain_weights(&next[range.clone()], u.power, noise_var);
                for j in range {
                    next[j] = noise_var * next[j] / (u.power * next[j] + noise_var);
                }
                ups.push((dir, u.power, weights));
            }
            Ok((Step::Eigen(ups), Covariance::Eigen(next)))
        }
        Covariance::Full(p) => {
            let n_t = stats.n_t();
            let mut pilots = CMatrix::zeros(n_t, uses.len());
            for (c, u) in uses.iter().enumerate() {
                pilots.set_column(c, &u.pilot());
            }
            let s = measurement_matrix(&pilots, n_r);
            let (gain, post) = full_gain(p, &s, noise_var)?;
            Ok((Step::Full { pilots, gain }, Covariance::Full(post)))
        }
    }
}

fn build_track(
    stats: &ChannelStatistics,
    cfg: &SlotConfig,
    a: f64,
    schedule: PilotSchedule,
    eigen: bool,
    block: bool,
) -> Result<Track> {
    let slots = schedule.slots.len();
    let total = slots * cfg.m;
    let trace = stats.trace();
    let mut cov = if eigen {
        Covariance::Eigen(stats.eig_stacked().to_vec())
    } else {
        Covariance::Full(stats.covariance().clone())
    };
    let mut anchors = Vec::new();
    let mut anchor_of = Vec::with_capacity(total);
    let mut steps: Vec<Option<Step>> = (0..total).map(|_| None).collect();
    let mut nmse = Vec::with_capacity(total);
    for l in 0..slots {
        if block {
            if l > 0 {
                cov = predict_cov(&cov, stats, a);
            }
            anchors.push(cov.clone());
            let prior_idx = anchors.len() - 1;
            let prior_nmse = cov.trace() / trace;
            let (step, post) = update_cov(&cov, stats, &schedule.slots[l], cfg.noise_var)?;
            cov = post;
            anchors.push(cov.clone());
            let post_idx = anchors.len() - 1;
            let post_nmse = cov.trace() / trace;
            for m in 1..=cfg.m {
                let k = l * cfg.m + m;
                if m < cfg.m_p {
                    anchor_of.push((prior_idx, 0));
                    nmse.push(prior_nmse);
                } else {
                    anchor_of.push((post_idx, 0));
                    nmse.push(post_nmse);
                }
                if m == cfg.m_p {
                    steps[k - 1] = Some(step.clone());
                }
            }
        } else {
            for m in 1..=cfg.m {
                let k = l * cfg.m + m;
                if k > 1 {
                    cov = predict_cov(&cov, stats, a);
                }
                if m <= cfg.m_p {
                    let (step, post) = update_cov(&cov, stats, std::slice::from_ref(&schedule.slots[l][m - 1]), cfg.noise_var)?;
                    cov = post;
                    anchors.push(cov.clone());
                    anchor_of.push((anchors.len() - 1, 0));
                    steps[k - 1] = Some(step);
                } else {
                    let (idx, s) = *anchor_of.last().expect("pilots precede data");
                    anchor_of.push((idx, s + 1));
                }
                nmse.push(cov.trace() / trace);
            }
        }
    }
    Ok(Track {
        schedule,
        nmse,
        anchors,
        anchor_of,
        steps,
    })
}

/// Block-fading design on the eigenvalue recursion: each slot uses the `M_p`
/// dominant directions of the current prediction covariance.
pub fn block_design_schedule(stats: &ChannelStatistics, cfg: &SlotConfig, a: f64, slots: usize) -> Result<PilotSchedule> {
    if stats.n_r() != 1 {
        return Err(Error::param("n_r", "block-fading design needs a single receive antenna"));
    }
    if cfg.m_p >= stats.n_t() {
        return Err(Error::param("m_p", "block-fading design needs M_p < N_t"));
    }
    let stationary = stats.eig_stacked();
    let mut lambda = stationary.to_vec();
    let w = a * a;
    let mut out = Vec::with_capacity(slots);
    for l in 0..slots {
        if l > 0 {
            for (x, x1) in lambda.iter_mut().zip(stationary) {
                *x = w * *x + (1.0 - w) * x1;
            }
        }
        let dirs = dominant_directions(&lambda, cfg.m_p);
        let uses = dirs
            .iter()
            .enumerate()
            .map(|(c, &i)| PilotUse {
                k: l * cfg.m + c + 1,
                direction: Some(i),
                beam: stats.tx_eigvec(i),
                power: cfg.pilot_power,
            })
            .collect();
        for &i in &dirs {
            lambda[i] = cfg.noise_var * lambda[i] / (cfg.pilot_power * lambda[i] + cfg.noise_var);
        }
        out.push(uses);
    }
    Ok(PilotSchedule {
        m: cfg.m,
        m_p: cfg.m_p,
        slots: out,
    })
}

/// Channel statistics of the configured model.
pub fn build_statistics(cfg: &ExperimentConfig) -> Result<ChannelStatistics> {
    let rx_identity = SpatialCovariance::identity(cfg.n_r);
    match &cfg.model {
        ChannelModel::Exponential { r } => kron_stats(&exp_covariance(cfg.n_t, *r)?, &exp_covariance(cfg.n_r, *r)?),
        ChannelModel::OneRing { .. } => {
            let g = cfg.one_ring().expect("one-ring model");
            kron_stats(&one_ring_covariance(&g)?, &rx_identity)
        }
        ChannelModel::DftTdt { .. } => {
            let g = cfg.one_ring().expect("one-ring model");
            dft_tdt_default(&g)?.with_rx(&rx_identity)
        }
        ChannelModel::Upa(g) => {
            let s = upa_covariance(g)?;
            if cfg.path_loss {
                s.scaled(g.path_loss())
            } else {
                Ok(s)
            }
        }
    }
}

/// Statistics assumed by the DFT/TDT-driven design.
pub fn build_design_statistics(cfg: &ExperimentConfig) -> Result<ChannelStatistics> {
    let rx_identity = SpatialCovariance::identity(cfg.n_r);
    match &cfg.model {
        ChannelModel::OneRing { .. } | ChannelModel::DftTdt { .. } => {
            let g = cfg.one_ring().expect("one-ring model");
            dft_tdt_default(&g)?.with_rx(&rx_identity)
        }
        ChannelModel::Upa(g) => {
            let s = dft_tdt_upa(g)?;
            if cfg.path_loss {
                s.scaled(g.path_loss())
            } else {
                Ok(s)
            }
        }
        ChannelModel::Exponential { .. } => Err(Error::param("method", "dft-tdt needs a one-ring or planar-array geometry")),
    }
}

/// Single run of `method` on the stream of `rng`.
pub fn run_episode(cfg: &ExperimentConfig, method: Method, rng: &RngStream) -> Result<MetricSeries> {
    Experiment::new(cfg.clone())?.run_episode(method, rng)
}

/// `runs`-run average of `method` with streams `(seed, 0..runs)`.
pub fn monte_carlo(cfg: &ExperimentConfig, method: Method, runs: usize, seed: u64) -> Result<MetricSeries> {
    Experiment::new(cfg.clone())?.monte_carlo(method, runs, seed)
}
