//! Pilot beam schedules: greedy eigen-beam selection, its power-allocated
//! variant, the block-fading frame design and baseline schemes.
//!
//! Directions are 0-based indices into the columns of the transmit eigenvector
//! matrix `U` of the statistics used for the design; symbol indices `k` are
//! 1-based and run continuously across slots.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fading::RngStream;
use crate::kalman::{Covariance, KalmanState};
use crate::linalg::{argsort_desc, hermitian_eig, normalize_phase, orthonormal_columns, CMatrix, CVector};
use crate::power_alloc::{waterfill, PowerProblem};
use crate::stats::{dft_column, ChannelStatistics};

/// Slot structure and pilot power settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotConfig {
    /// Symbols per slot.
    pub m: usize,
    /// Pilot symbols at the start of each slot.
    pub m_p: usize,
    /// Power per pilot symbol; the per-slot budget is `m_p * pilot_power`.
    pub pilot_power: f64,
    pub noise_var: f64,
}

impl SlotConfig {
    pub fn new(m: usize, m_p: usize, pilot_power: f64, noise_var: f64) -> Result<Self> {
        let c = Self {
            m,
            m_p,
            pilot_power,
            noise_var,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m_p == 0 {
            return Err(Error::param("m_p", "at least one pilot symbol per slot is required"));
        }
        if self.m_p > self.m {
            return Err(Error::param("m_p", format!("M_p = {} exceeds M = {}", self.m_p, self.m)));
        }
        if !(self.pilot_power > 0.0 && self.pilot_power.is_finite()) {
            return Err(Error::param("pilot_power", "must be positive"));
        }
        if !(self.noise_var > 0.0 && self.noise_var.is_finite()) {
            return Err(Error::param("noise_var", "must be positive"));
        }
        Ok(())
    }

    /// Data symbols per slot, `M - M_p`.
    pub fn m_d(&self) -> usize {
        self.m - self.m_p
    }

    pub fn budget(&self) -> f64 {
        self.m_p as f64 * self.pilot_power
    }
}

/// One pilot transmission.
#[derive(Clone, Debug, PartialEq)]
pub struct PilotUse {
    /// Symbol index (1-based, global).
    pub k: usize,
    /// Eigen-direction of the design statistics, when the beam is one.
    pub direction: Option<usize>,
    /// Unit-norm beam direction; the transmitted pilot is `√power · beam`.
    pub beam: CVector,
    pub power: f64,
}

impl PilotUse {
    /// Transmitted pilot vector `√ρ s`.
    pub fn pilot(&self) -> CVector {
        self.beam.scale(self.power.sqrt())
    }
}

/// Pilot uses grouped by slot.
#[derive(Clone, Debug, PartialEq)]
pub struct PilotSchedule {
    pub m: usize,
    pub m_p: usize,
    pub slots: Vec<Vec<PilotUse>>,
}

impl PilotSchedule {
    /// Directions chosen, slot by slot (`None` for non-eigen beams).
    pub fn directions(&self) -> Vec<Vec<Option<usize>>> {
        self.slots
            .iter()
            .map(|s| s.iter().map(|u| u.direction).collect())
            .collect()
    }

    /// Usage sets: symbol indices at which each direction is used.
    pub fn usage_sets(&self) -> BTreeMap<usize, Vec<usize>> {
        let mut sets: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for u in self.slots.iter().flatten() {
            if let Some(d) = u.direction {
                sets.entry(d).or_default().push(u.k);
            }
        }
        sets
    }

    /// Gaps between consecutive uses of each direction.
    pub fn intervals(&self) -> BTreeMap<usize, Vec<usize>> {
        self.usage_sets()
            .into_iter()
            .map(|(d, ks)| (d, ks.windows(2).map(|w| w[1] - w[0]).collect()))
            .collect()
    }

    /// Total pilot power per slot.
    pub fn slot_power(&self) -> Vec<f64> {
        self.slots.iter().map(|s| s.iter().map(|u| u.power).sum()).collect()
    }

    /// True when no direction repeats within a slot.
    pub fn directions_distinct_per_slot(&self) -> bool {
        self.slots.iter().all(|s| {
            let mut seen: Vec<usize> = s.iter().filter_map(|u| u.direction).collect();
            let n = seen.len();
            seen.sort_unstable();
            seen.dedup();
            seen.len() == n
        })
    }
}

/// Error reduction of an eigen-beam update on one block, `Σ_j ρλ² / (ρλ + σ²)`.
pub fn block_score(block: &[f64], power: f64, noise_var: f64) -> f64 {
    block.iter().map(|l| power * l * l / (power * l + noise_var)).sum()
}

/// Block maximising the one-step error reduction; ties go to the lowest index.
pub fn greedy_index(lambda: &[f64], n_r: usize, power: f64, noise_var: f64) -> usize {
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, block) in lambda.chunks(n_r).enumerate() {
        let s = block_score(block, power, noise_var);
        if s > best_score {
            best = i;
            best_score = s;
        }
    }
    best
}

fn update_block(lambda: &mut [f64], n_r: usize, i: usize, power: f64, noise_var: f64) {
    for l in &mut lambda[i * n_r..(i + 1) * n_r] {
        *l = noise_var * *l / (power * *l + noise_var);
    }
}

fn predict_lambda(lambda: &mut [f64], stationary: &[f64], a: f64, steps: usize) {
    let w = a.powi(2 * steps as i32);
    for (x, x1) in lambda.iter_mut().zip(stationary) {
        *x = w * *x + (1.0 - w) * x1;
    }
}

fn eigen_use(stats: &ChannelStatistics, k: usize, direction: usize, power: f64) -> PilotUse {
    PilotUse {
        k,
        direction: Some(direction),
        beam: stats.tx_eigvec(direction),
        power,
    }
}

fn validate_design(stats: &ChannelStatistics, cfg: &SlotConfig, a: f64) -> Result<()> {
    cfg.validate()?;
    if !(a > 0.0 && a <= 1.0) {
        return Err(Error::param("a", "temporal coefficient must lie in (0, 1]"));
    }
    if stats.n_t() == 0 {
        return Err(Error::param("stats", "empty statistics"));
    }
    Ok(())
}

/// Greedy pilot design on the eigenvalue recursion.
///
/// Each pilot symbol picks the direction with the largest one-step error
/// reduction at power `ρ_p` and updates its block; every symbol, pilot or data,
/// is followed by one prediction step.
pub fn algorithm1_schedule(stats: &ChannelStatistics, cfg: &SlotConfig, a: f64, slots: usize) -> Result<PilotSchedule> {
    greedy_schedule(stats, cfg, a, slots, |lambda, _m| {
        greedy_index(lambda, stats.n_r(), cfg.pilot_power, cfg.noise_var)
    })
}

/// Same design reached by minimising the end-of-training error
/// `tr(P_{lM+M_p | k}) = a^{2(M_p-m)} tr(P_{k|k}) + (1 - a^{2(M_p-m)}) tr(R_h)`
/// directly over the candidate directions.
pub fn problem2_schedule(stats: &ChannelStatistics, cfg: &SlotConfig, a: f64, slots: usize) -> Result<PilotSchedule> {
    let n_r = stats.n_r();
    let stationary_trace = stats.trace();
    greedy_schedule(stats, cfg, a, slots, |lambda, m| {
        let w = a.powi(2 * (cfg.m_p - m) as i32);
        let total: f64 = lambda.iter().sum();
        let mut best = 0;
        let mut best_obj = f64::INFINITY;
        for (i, block) in lambda.chunks(n_r).enumerate() {
            let reduction: f64 = block
                .iter()
                .map(|l| l - cfg.noise_var * l / (cfg.pilot_power * l + cfg.noise_var))
                .sum();
            let obj = end_of_training_objective(w, total, reduction, stationary_trace);
            if obj < best_obj {
                best = i;
                best_obj = obj;
            }
        }
        best
    })
}

/// `a^{2e} (tr P - reduction) + (1 - a^{2e}) tr R_h`.
pub fn end_of_training_objective(weight: f64, trace: f64, reduction: f64, stationary_trace: f64) -> f64 {
    weight * (trace - reduction) + (1.0 - weight) * stationary_trace
}

fn greedy_schedule<F>(stats: &ChannelStatistics, cfg: &SlotConfig, a: f64, slots: usize, mut choose: F) -> Result<PilotSchedule>
where
    F: FnMut(&[f64], usize) -> usize,
{
    validate_design(stats, cfg, a)?;
    let n_r = stats.n_r();
    let stationary = stats.eig_stacked();
    let mut lambda = stationary.to_vec();
    let mut out = Vec::with_capacity(slots);
    for l in 0..slots {
        let mut uses = Vec::with_capacity(cfg.m_p);
        for m in 1..=cfg.m {
            if m <= cfg.m_p {
                let i = choose(&lambda, m);
                uses.push(eigen_use(stats, l * cfg.m + m, i, cfg.pilot_power));
                update_block(&mut lambda, n_r, i, cfg.pilot_power, cfg.noise_var);
            }
            predict_lambda(&mut lambda, stationary, a, 1);
        }
        out.push(uses);
    }
    Ok(PilotSchedule {
        m: cfg.m,
        m_p: cfg.m_p,
        slots: out,
    })
}

/// Sequential design with per-slot power allocation.
///
/// Per slot, `M_p` distinct directions are selected by largest error trace among
/// directions not yet used in the slot, with only prediction steps between
/// selections. Their predicted blocks and decay exponents `M_p - m` form a
/// [`PowerProblem`] solved by water-filling; the slot is then replayed with
/// true updates at the allocated powers.
pub fn algorithm2_schedule(stats: &ChannelStatistics, cfg: &SlotConfig, a: f64, slots: usize) -> Result<PilotSchedule> {
    validate_design(stats, cfg, a)?;
    let n_t = stats.n_t();
    if cfg.m_p > n_t {
        return Err(Error::Infeasible(format!(
            "M_p = {} distinct directions requested with N_t = {n_t}",
            cfg.m_p
        )));
    }
    let n_r = stats.n_r();
    let stationary = stats.eig_stacked();
    let mut lambda = stationary.to_vec();
    let mut out = Vec::with_capacity(slots);
    for l in 0..slots {
        let mut probe = lambda.clone();
        let mut used = vec![false; n_t];
        let mut chosen = Vec::with_capacity(cfg.m_p);
        let mut blocks = Vec::with_capacity(cfg.m_p);
        for _ in 1..=cfg.m_p {
            let mut best = None;
            let mut best_trace = f64::NEG_INFINITY;
            for i in 0..n_t {
                if used[i] {
                    continue;
                }
                let t: f64 = probe[i * n_r..(i + 1) * n_r].iter().sum();
                if t > best_trace {
                    best = Some(i);
                    best_trace = t;
                }
            }
            let i = best.expect("M_p <= N_t leaves a free direction");
            used[i] = true;
            chosen.push(i);
            blocks.push(probe[i * n_r..(i + 1) * n_r].to_vec());
            predict_lambda(&mut probe, stationary, a, 1);
        }
        let exponents = (1..=cfg.m_p).map(|m| (cfg.m_p - m) as u32).collect();
        let problem = PowerProblem::new(blocks, exponents, cfg.budget(), cfg.noise_var, a)?;
        let powers = waterfill(&problem)?.powers;
        let mut uses = Vec::with_capacity(cfg.m_p);
        for m in 1..=cfg.m {
            if m <= cfg.m_p {
                let i = chosen[m - 1];
                let p = powers[m - 1];
                uses.push(eigen_use(stats, l * cfg.m + m, i, p));
                update_block(&mut lambda, n_r, i, p, cfg.noise_var);
            }
            predict_lambda(&mut lambda, stationary, a, 1);
        }
        out.push(uses);
    }
    Ok(PilotSchedule {
        m: cfg.m,
        m_p: cfg.m_p,
        slots: out,
    })
}

/// Directions of the `m_p` largest entries of an eigen-domain covariance
/// (single-antenna receiver), ties to the lowest index.
pub fn dominant_directions(lambda: &[f64], m_p: usize) -> Vec<usize> {
    argsort_desc(lambda).into_iter().take(m_p).collect()
}

/// Block-fading pilot frame: `√ρ_p` times the `M_p` dominant eigenvectors of the
/// prediction error covariance, ordered by decreasing eigenvalue.
pub fn block_fading_design(pred: &KalmanState, stats: &ChannelStatistics, m_p: usize, rho_p: f64) -> Result<CMatrix> {
    if stats.n_r() != 1 {
        return Err(Error::param("n_r", "block-fading design assumes a single receive antenna"));
    }
    let n_t = stats.n_t();
    if m_p == 0 || m_p >= n_t {
        return Err(Error::param("m_p", format!("need 1 <= M_p < N_t = {n_t}, got {m_p}")));
    }
    if rho_p.is_nan() || rho_p <= 0.0 {
        return Err(Error::param("pilot_power", "must be positive"));
    }
    let scale = rho_p.sqrt();
    let mut frame = CMatrix::zeros(n_t, m_p);
    match &pred.cov {
        Covariance::Eigen(lambda) => {
            for (c, i) in dominant_directions(lambda, m_p).into_iter().enumerate() {
                frame.set_column(c, &stats.tx_eigvec(i).scale(scale));
            }
        }
        Covariance::Full(p) => {
            let (_, vecs) = hermitian_eig(p)?;
            for c in 0..m_p {
                frame.set_column(c, &vecs.column(c).scale(scale));
            }
        }
    }
    Ok(frame)
}

/// Baseline pilot schemes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Baseline {
    /// Cycle through the columns of the `N_t`-point DFT.
    Orthogonal,
    /// Independent uniformly distributed unit-norm beams.
    Random,
    /// The `M_p` dominant eigenvectors of `R_h` in every slot.
    FixedDominant,
    /// `M_p` beams per slot cycling through the top-`l_p` eigenvectors of `R_h`.
    RoundRobin { l_p: usize },
}

/// Uniformly distributed unit-norm beam.
pub fn random_beam(n_t: usize, rng: &mut RngStream) -> CVector {
    loop {
        let mut v = rng.complex_gaussian_vec(n_t);
        let norm = v.norm();
        if norm > 0.0 {
            v.unscale_mut(norm);
            normalize_phase(&mut v);
            return v;
        }
    }
}

/// Baseline schedule at equal pilot power. Only [`Baseline::Random`] consumes `rng`.
pub fn baseline_schedule(
    kind: Baseline,
    stats: &ChannelStatistics,
    cfg: &SlotConfig,
    slots: usize,
    rng: &mut RngStream,
) -> Result<PilotSchedule> {
    cfg.validate()?;
    let n_t = stats.n_t();
    match kind {
        Baseline::RoundRobin { l_p } => {
            if l_p <= cfg.m_p {
                return Err(Error::param("l_p", format!("round robin needs L_p > M_p, got L_p = {l_p}")));
            }
            if l_p > n_t {
                return Err(Error::param("l_p", format!("L_p = {l_p} exceeds N_t = {n_t}")));
            }
        }
        Baseline::FixedDominant if cfg.m_p > n_t => {
            return Err(Error::param("m_p", "fixed dominant beams need M_p <= N_t"));
        }
        _ => {}
    }
    let mut out = Vec::with_capacity(slots);
    let mut counter = 0usize;
    for l in 0..slots {
        let mut uses = Vec::with_capacity(cfg.m_p);
        for m in 1..=cfg.m_p {
            let k = l * cfg.m + m;
            let u = match kind {
                Baseline::Orthogonal => {
                    let mut beam = dft_column(n_t, counter % n_t);
                    normalize_phase(&mut beam);
                    PilotUse {
                        k,
                        direction: None,
                        beam,
                        power: cfg.pilot_power,
                    }
                }
                Baseline::Random => PilotUse {
                    k,
                    direction: None,
                    beam: random_beam(n_t, rng),
                    power: cfg.pilot_power,
                },
                Baseline::FixedDominant => eigen_use(stats, k, m - 1, cfg.pilot_power),
                Baseline::RoundRobin { l_p } => eigen_use(stats, k, counter % l_p, cfg.pilot_power),
            };
            counter += 1;
            uses.push(u);
        }
        out.push(uses);
    }
    Ok(PilotSchedule {
        m: cfg.m,
        m_p: cfg.m_p,
        slots: out,
    })
}

/// Random orthonormal pilot frames (one per slot) for block fading.
pub fn random_frame_schedule(n_t: usize, cfg: &SlotConfig, slots: usize, rng: &mut RngStream) -> Result<PilotSchedule> {
    cfg.validate()?;
    if cfg.m_p > n_t {
        return Err(Error::param("m_p", "orthonormal frame needs M_p <= N_t"));
    }
    let mut out = Vec::with_capacity(slots);
    for l in 0..slots {
        let raw = CMatrix::from_fn(n_t, cfg.m_p, |_, _| rng.complex_gaussian());
        let q = orthonormal_columns(&raw);
        out.push(
            (0..cfg.m_p)
                .map(|c| PilotUse {
                    k: l * cfg.m + c + 1,
                    direction: None,
                    beam: q.column(c).into_owned(),
                    power: cfg.pilot_power,
                })
                .collect(),
        );
    }
    Ok(PilotSchedule {
        m: cfg.m,
        m_p: cfg.m_p,
        slots: out,
    })
}
