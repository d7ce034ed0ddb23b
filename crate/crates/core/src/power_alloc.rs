//! Per-slot pilot power allocation over the selected eigen-directions.
//!
//! Direction `i` carries an eigenvalue block `Λ_i` (length `N_r`) and a decay
//! exponent `e_i`, the number of symbols from its pilot to the end of the
//! training period. The objective is
//!
//! ```text
//! J(ρ) = Σ_i a^{2 e_i} Σ_j σ² λ_ij / (ρ_i λ_ij + σ²),   Σ_i ρ_i = budget,  ρ ≥ 0.
//! ```

use crate::error::{Error, Result};

/// A per-slot power allocation problem.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerProblem {
    pub blocks: Vec<Vec<f64>>,
    pub exponents: Vec<u32>,
    pub budget: f64,
    pub noise_var: f64,
    pub a: f64,
}

/// Output of the water-filling solver.
#[derive(Clone, Debug, PartialEq)]
pub struct WaterfillSolution {
    pub powers: Vec<f64>,
    /// Water level (Lagrange multiplier of the budget constraint).
    pub nu: f64,
    /// Multipliers of the nonnegativity constraints.
    pub slack: Vec<f64>,
    /// Largest relative violation of stationarity, complementary slackness or the budget.
    pub kkt_residual: f64,
    /// Set when every direction has zero gradient and the objective is flat.
    pub degenerate: bool,
}

impl PowerProblem {
    pub fn new(blocks: Vec<Vec<f64>>, exponents: Vec<u32>, budget: f64, noise_var: f64, a: f64) -> Result<Self> {
        let p = Self {
            blocks,
            exponents,
            budget,
            noise_var,
            a,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks.is_empty() {
            return Err(Error::param("blocks", "at least one direction is required"));
        }
        if self.blocks.len() != self.exponents.len() {
            return Err(Error::Dimension("one exponent per direction is required".into()));
        }
        if self.blocks.iter().flatten().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::param("blocks", "eigenvalues must be finite and nonnegative"));
        }
        if !(self.budget > 0.0 && self.budget.is_finite()) {
            return Err(Error::param("budget", "power budget must be positive"));
        }
        if !(self.noise_var > 0.0 && self.noise_var.is_finite()) {
            return Err(Error::param("noise_var", "noise variance must be positive"));
        }
        if !(self.a > 0.0 && self.a <= 1.0) {
            return Err(Error::param("a", "temporal coefficient must lie in (0, 1]"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// `a^{2 e_i}`.
    pub fn weight(&self, i: usize) -> f64 {
        self.a.powi(2 * self.exponents[i] as i32)
    }

    /// Objective value `J(ρ)`.
    pub fn objective(&self, powers: &[f64]) -> f64 {
        let s2 = self.noise_var;
        self.blocks
            .iter()
            .zip(powers)
            .enumerate()
            .map(|(i, (b, &p))| self.weight(i) * b.iter().map(|l| s2 * l / (p * l + s2)).sum::<f64>())
            .sum()
    }

    /// Marginal objective decrease `-∂J/∂ρ_i = a^{2e_i} Σ_j σ² λ² / (ρλ + σ²)²`.
    pub fn marginal(&self, i: usize, rho: f64) -> f64 {
        let s2 = self.noise_var;
        self.weight(i)
            * self.blocks[i]
                .iter()
                .map(|l| {
                    let d = rho * l + s2;
                    s2 * l * l / (d * d)
                })
                .sum::<f64>()
    }

    fn power_at_level(&self, i: usize, nu: f64) -> f64 {
        if self.marginal(i, 0.0) <= nu {
            return 0.0;
        }
        let active = self.blocks[i].iter().filter(|l| **l > 0.0).count() as f64;
        let mut lo = 0.0;
        let mut hi = (self.weight(i) * self.noise_var * active / nu).sqrt();
        while self.marginal(i, hi) > nu {
            hi *= 2.0;
        }
        for _ in 0..400 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.marginal(i, mid) > nu {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn smallest_exponent(&self) -> usize {
        (0..self.len()).min_by_key(|&i| (self.exponents[i], i)).unwrap_or(0)
    }

    /// KKT residual of an allocation at water level `nu`.
    pub fn kkt_residual(&self, powers: &[f64], nu: f64) -> f64 {
        let mut worst = ((powers.iter().sum::<f64>() - self.budget) / self.budget).abs();
        for (i, &p) in powers.iter().enumerate() {
            let v = if p > 0.0 {
                ((self.marginal(i, p) - nu) / nu).abs()
            } else {
                ((self.marginal(i, 0.0) - nu) / nu).max(0.0)
            };
            worst = worst.max(v);
        }
        worst
    }

    fn finish(&self, mut powers: Vec<f64>, nu: f64) -> WaterfillSolution {
        let total: f64 = powers.iter().sum();
        if total > 0.0 {
            let f = self.budget / total;
            for p in powers.iter_mut() {
                *p *= f;
            }
        }
        let slack = powers
            .iter()
            .enumerate()
            .map(|(i, &p)| if p > 0.0 { 0.0 } else { (nu - self.marginal(i, 0.0)).max(0.0) })
            .collect();
        WaterfillSolution {
            kkt_residual: self.kkt_residual(&powers, nu),
            powers,
            nu,
            slack,
            degenerate: false,
        }
    }

    fn degenerate(&self) -> WaterfillSolution {
        let mut powers = vec![0.0; self.len()];
        powers[self.smallest_exponent()] = self.budget;
        WaterfillSolution {
            powers,
            nu: 0.0,
            slack: vec![0.0; self.len()],
            kkt_residual: 0.0,
            degenerate: true,
        }
    }
}

/// Exact water-filling by bisection on the water level `ν`.
///
/// For a fixed `ν` each direction's power solves `marginal_i(ρ) = ν` (or is zero
/// when `marginal_i(0) ≤ ν`); the total power is decreasing in `ν`, so `ν` is
/// bracketed between the smallest `marginal_i(budget)` and the largest
/// `marginal_i(0)` and bisected in log-space.
pub fn waterfill(p: &PowerProblem) -> Result<WaterfillSolution> {
    p.validate()?;
    let n = p.len();
    let at_zero: Vec<f64> = (0..n).map(|i| p.marginal(i, 0.0)).collect();
    let nu_hi = at_zero.iter().cloned().fold(0.0, f64::max);
    if nu_hi.is_nan() || nu_hi <= 0.0 {
        return Ok(p.degenerate());
    }
    let nu_lo = (0..n)
        .filter(|&i| at_zero[i] > 0.0)
        .map(|i| p.marginal(i, p.budget))
        .fold(f64::INFINITY, f64::min);
    let total = |nu: f64| (0..n).map(|i| p.power_at_level(i, nu)).sum::<f64>();
    let (mut lo, mut hi) = (nu_lo, nu_hi);
    for _ in 0..300 {
        let mid = (lo * hi).sqrt();
        if !(mid > lo && mid < hi) {
            break;
        }
        if total(mid) > p.budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let candidates = [lo, hi, (lo * hi).sqrt()];
    let best = candidates
        .iter()
        .map(|&nu| {
            let powers: Vec<f64> = (0..n).map(|i| p.power_at_level(i, nu)).collect();
            let sol = p.finish(powers, nu);
            (sol.kkt_residual, sol)
        })
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, s)| s)
        .expect("three candidates");
    Ok(best)
}

/// Closed-form water-filling for single-antenna receivers.
///
/// Active directions receive `ρ_i = a^{e_i} L - σ²/λ_i` with the common level
/// `L = σ/√ν = (budget + Σ σ²/λ_i) / Σ a^{e_i}`; directions that would receive
/// negative power are dropped and the level recomputed.
pub fn waterfill_miso(p: &PowerProblem) -> Result<WaterfillSolution> {
    p.validate()?;
    if p.blocks.iter().any(|b| b.len() != 1) {
        return Err(Error::param("blocks", "closed form requires one eigenvalue per direction"));
    }
    let n = p.len();
    let s2 = p.noise_var;
    let c: Vec<f64> = (0..n).map(|i| p.a.powi(p.exponents[i] as i32)).collect();
    let mut active: Vec<bool> = p.blocks.iter().map(|b| b[0] > 0.0).collect();
    if !active.iter().any(|x| *x) {
        return Ok(p.degenerate());
    }
    loop {
        let sum_c: f64 = (0..n).filter(|&i| active[i]).map(|i| c[i]).sum();
        let sum_d: f64 = (0..n).filter(|&i| active[i]).map(|i| s2 / p.blocks[i][0]).sum();
        let level = (p.budget + sum_d) / sum_c;
        let powers: Vec<f64> = (0..n)
            .map(|i| if active[i] { c[i] * level - s2 / p.blocks[i][0] } else { 0.0 })
            .collect();
        let negative: Vec<usize> = (0..n).filter(|&i| active[i] && powers[i] < 0.0).collect();
        if negative.is_empty() {
            let nu = s2 / (level * level);
            return Ok(p.finish(powers, nu));
        }
        for i in negative {
            active[i] = false;
        }
    }
}

/// High-SNR approximation: power proportional to `a^{e_i}`.
pub fn highsnr_alloc(p: &PowerProblem) -> Vec<f64> {
    let c: Vec<f64> = p.exponents.iter().map(|&e| p.a.powi(e as i32)).collect();
    let total: f64 = c.iter().sum();
    c.iter().map(|x| p.budget * x / total).collect()
}

/// Low-SNR approximation: the full budget on `argmax_i a^{2e_i} tr(Λ_i)`, ties to
/// the lowest index.
pub fn lowsnr_alloc(p: &PowerProblem) -> Vec<f64> {
    let scores: Vec<f64> = (0..p.len())
        .map(|i| p.weight(i) * p.blocks[i].iter().sum::<f64>())
        .collect();
    one_hot(p, &scores)
}

/// First-order low-SNR limit of the exact objective: the full budget on
/// `argmax_i a^{2e_i} Σ_j λ_ij²`, the direction with the largest marginal at `ρ = 0`.
pub fn lowsnr_limit_alloc(p: &PowerProblem) -> Vec<f64> {
    let scores: Vec<f64> = (0..p.len())
        .map(|i| p.weight(i) * p.blocks[i].iter().map(|l| l * l).sum::<f64>())
        .collect();
    one_hot(p, &scores)
}

fn one_hot(p: &PowerProblem, scores: &[f64]) -> Vec<f64> {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    let mut out = vec![0.0; p.len()];
    out[best] = p.budget;
    out
}

/// Objective value of an allocation (alias of [`PowerProblem::objective`]).
pub fn objective(p: &PowerProblem, powers: &[f64]) -> f64 {
    p.objective(powers)
}

/// Trace of one direction's error block at the end of a training period.
///
/// Starting from `start`, each use `(gap, power)` first predicts `gap` symbols
/// and then applies an eigen-beam update with `power`; finally `tail` prediction
/// steps are applied. `stationary` is the block of `λ⁽¹⁾`.
pub fn block_end_mse(
    start: &[f64],
    stationary: &[f64],
    uses: &[(usize, f64)],
    tail: usize,
    noise_var: f64,
    a: f64,
) -> f64 {
    let predict = |l: &mut Vec<f64>, steps: usize| {
        let w = a.powi(2 * steps as i32);
        for (x, x1) in l.iter_mut().zip(stationary) {
            *x = w * *x + (1.0 - w) * x1;
        }
    };
    let mut l = start.to_vec();
    for &(gap, power) in uses {
        predict(&mut l, gap);
        for x in l.iter_mut() {
            *x = noise_var * *x / (power * *x + noise_var);
        }
    }
    predict(&mut l, tail);
    l.iter().sum()
}
