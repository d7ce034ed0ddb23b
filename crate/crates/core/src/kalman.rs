//! Kalman filtering and prediction of the vectorised channel.
//!
//! Two covariance representations are supported: a dense matrix and, when every
//! pilot is a scaled transmit eigenvector, the eigenvalue vector of the error
//! covariance in the fixed basis `U ⊗ V`.

use crate::error::{Error, Result};
use crate::linalg::{
    beam_gain, hermitian_part, hermitian_solve, measurement_matrix, real_trace, CMatrix, CVector, C64,
};
use crate::stats::ChannelStatistics;

/// Error covariance representation.
#[derive(Clone, Debug, PartialEq)]
pub enum Covariance {
    /// Dense Hermitian matrix of size `N_t N_r`.
    Full(CMatrix),
    /// Eigenvalues against `U ⊗ V`, blocks of length `N_r` per transmit direction.
    Eigen(Vec<f64>),
}

impl Covariance {
    pub fn trace(&self) -> f64 {
        match self {
            Covariance::Full(p) => real_trace(p),
            Covariance::Eigen(l) => l.iter().sum(),
        }
    }

    /// Dense matrix form.
    pub fn to_dense(&self, stats: &ChannelStatistics) -> CMatrix {
        match self {
            Covariance::Full(p) => p.clone(),
            Covariance::Eigen(l) => {
                let q = stats.tx_eigvecs().kronecker(stats.rx_eigvecs());
                &q * crate::linalg::real_diag(l) * q.adjoint()
            }
        }
    }
}

/// Whether a state is a prediction or has absorbed the observation at its time.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Predicted,
    Filtered,
}

/// Channel estimate and error covariance at symbol index `time` (1-based).
#[derive(Clone, Debug, PartialEq)]
pub struct KalmanState {
    pub h_hat: CVector,
    pub cov: Covariance,
    pub time: usize,
    pub phase: Phase,
}

impl KalmanState {
    /// Prior `ĥ = 0`, `P = R_h` in dense form.
    pub fn prior_full(stats: &ChannelStatistics) -> Self {
        Self {
            h_hat: CVector::zeros(stats.dim()),
            cov: Covariance::Full(stats.covariance().clone()),
            time: 1,
            phase: Phase::Predicted,
        }
    }

    /// Prior `ĥ = 0`, `λ = λ⁽¹⁾` in eigen form.
    pub fn prior_eigen(stats: &ChannelStatistics) -> Self {
        Self {
            h_hat: CVector::zeros(stats.dim()),
            cov: Covariance::Eigen(stats.eig_stacked().to_vec()),
            time: 1,
            phase: Phase::Predicted,
        }
    }

    pub fn trace(&self) -> f64 {
        self.cov.trace()
    }
}

/// Pilot observation `y = (s ⊗ I)ᴴ h + w`, `w ~ CN(0, σ² I)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PilotObservation {
    pub beam: CVector,
    pub y: CVector,
    pub noise_var: f64,
}

impl PilotObservation {
    pub fn new(beam: CVector, y: CVector, noise_var: f64) -> Result<Self> {
        if beam.norm_squared() <= 0.0 {
            return Err(Error::param("beam", "pilot beam must have positive power"));
        }
        if !(noise_var > 0.0 && noise_var.is_finite()) {
            return Err(Error::param("noise_var", "noise variance must be positive"));
        }
        Ok(Self { beam, y, noise_var })
    }
}

/// `m`-step prediction: mean scaled by `a^m`, covariance contracted toward `R_h`.
pub fn predict(state: &KalmanState, a: f64, stats: &ChannelStatistics, m: usize) -> KalmanState {
    if m == 0 {
        return state.clone();
    }
    let am = a.powi(m as i32);
    let w = am * am;
    let cov = match &state.cov {
        Covariance::Full(p) => Covariance::Full(p.scale(w) + stats.covariance().scale(1.0 - w)),
        Covariance::Eigen(l) => Covariance::Eigen(
            l.iter()
                .zip(stats.eig_stacked())
                .map(|(x, x1)| w * x + (1.0 - w) * x1)
                .collect(),
        ),
    };
    KalmanState {
        h_hat: state.h_hat.scale(am),
        cov,
        time: state.time + m,
        phase: Phase::Predicted,
    }
}

/// Kalman gain `K = P S (Sᴴ P S + σ² I)⁻¹` and posterior `P - K Sᴴ P` for a
/// dense measurement matrix `S`.
pub fn full_gain(p: &CMatrix, s: &CMatrix, noise_var: f64) -> Result<(CMatrix, CMatrix)> {
    let ps = p * s;
    let mut innov = s.adjoint() * &ps;
    for i in 0..innov.nrows() {
        innov[(i, i)] += C64::new(noise_var, 0.0);
    }
    let k_adj = hermitian_solve(&innov, &ps.adjoint())?;
    let k = k_adj.adjoint();
    let post = hermitian_part(&(p - &k * ps.adjoint()));
    Ok((k, post))
}

fn full_update(state: &KalmanState, s: &CMatrix, y: &CVector, noise_var: f64) -> Result<KalmanState> {
    let p = match &state.cov {
        Covariance::Full(p) => p,
        Covariance::Eigen(_) => {
            return Err(Error::Dimension(
                "dense measurement update needs a dense covariance".into(),
            ))
        }
    };
    if s.nrows() != state.h_hat.len() || s.ncols() != y.len() {
        return Err(Error::Dimension(format!(
            "measurement matrix {}x{} incompatible with state {} / observation {}",
            s.nrows(),
            s.ncols(),
            state.h_hat.len(),
            y.len()
        )));
    }
    let (k, post) = full_gain(p, s, noise_var)?;
    let innovation = y - s.adjoint() * &state.h_hat;
    Ok(KalmanState {
        h_hat: &state.h_hat + k * innovation,
        cov: Covariance::Full(post),
        time: state.time,
        phase: Phase::Filtered,
    })
}

/// Exact Kalman update with a single pilot beam and a dense covariance.
pub fn measurement_update(state: &KalmanState, obs: &PilotObservation) -> Result<KalmanState> {
    let n_r = obs.y.len();
    if n_r == 0 || state.h_hat.len() != obs.beam.len() * n_r {
        return Err(Error::Dimension(format!(
            "beam of length {} and observation of length {} do not match a state of length {}",
            obs.beam.len(),
            n_r,
            state.h_hat.len()
        )));
    }
    let beams = CMatrix::from_column_slice(obs.beam.len(), 1, obs.beam.as_slice());
    full_update(state, &measurement_matrix(&beams, n_r), &obs.y, obs.noise_var)
}

/// Per-receive-eigenvalue gain weights `λ / (ρλ + σ²)` of an eigen-beam update.
pub fn eigen_gain_weights(block: &[f64], power: f64, noise_var: f64) -> Vec<f64> {
    block.iter().map(|l| l / (power * l + noise_var)).collect()
}

/// Applies the structured gain `K e = √ρ u_i ⊗ (V diag(d) Vᴴ e)` to the mean.
pub fn apply_eigen_gain(
    h_hat: &mut CVector,
    stats: &ChannelStatistics,
    beam_index: usize,
    power: f64,
    weights: &[f64],
    innovation: &CVector,
) {
    let v = stats.rx_eigvecs();
    let mut w = v.adjoint() * innovation;
    for (wj, d) in w.iter_mut().zip(weights) {
        *wj *= *d;
    }
    let rx_part = v * w;
    let sqrt_p = power.sqrt();
    let n_r = stats.n_r();
    let u = stats.tx_eigvecs().column(beam_index);
    for t in 0..stats.n_t() {
        let ut = u[t] * sqrt_p;
        for r in 0..n_r {
            h_hat[t * n_r + r] += ut * rx_part[r];
        }
    }
}

/// Eigen-domain update for the pilot `√ρ u_i`: only block `i` changes,
/// `λ ← σ²λ / (ρλ + σ²)`. When `y` is given the mean is updated as well.
pub fn eigen_update(
    state: &KalmanState,
    stats: &ChannelStatistics,
    beam_index: usize,
    power: f64,
    noise_var: f64,
    y: Option<&CVector>,
) -> Result<KalmanState> {
    let lambda = match &state.cov {
        Covariance::Eigen(l) => l,
        Covariance::Full(_) => {
            return Err(Error::Dimension("eigen update needs an eigen-domain covariance".into()))
        }
    };
    if beam_index >= stats.n_t() {
        return Err(Error::param("beam_index", format!("{beam_index} >= N_t = {}", stats.n_t())));
    }
    if noise_var.is_nan() || noise_var <= 0.0 || power < 0.0 {
        return Err(Error::param("noise_var", "noise variance must be positive and power nonnegative"));
    }
    let n_r = stats.n_r();
    let range = beam_index * n_r..(beam_index + 1) * n_r;
    let mut next = lambda.clone();
    for j in range.clone() {
        next[j] = noise_var * lambda[j] / (power * lambda[j] + noise_var);
    }
    let mut h_hat = state.h_hat.clone();
    if let Some(y) = y {
        if y.len() != n_r {
            return Err(Error::Dimension(format!("observation length {} != N_r = {n_r}", y.len())));
        }
        let beam = stats.tx_eigvec(beam_index).scale(power.sqrt());
        let innovation = y - beam_gain(&beam, &h_hat, n_r);
        let weights = eigen_gain_weights(&lambda[range], power, noise_var);
        apply_eigen_gain(&mut h_hat, stats, beam_index, power, &weights, &innovation);
    }
    Ok(KalmanState {
        h_hat,
        cov: Covariance::Eigen(next),
        time: state.time,
        phase: Phase::Filtered,
    })
}

/// Largest deviation `‖SᴴS - ρ I‖_F / ρ` of a pilot frame, with `ρ` the power of
/// the first column.
pub fn frame_orthogonality_deviation(pilots: &CMatrix) -> f64 {
    let rho = pilots.column(0).norm_squared();
    let g = pilots.adjoint() * pilots;
    (g - CMatrix::identity(pilots.ncols(), pilots.ncols()).scale(rho)).norm() / rho
}

/// Joint update with an orthogonal equal-power pilot frame (block fading).
/// `y` stacks the per-pilot observations, pilot-major.
pub fn block_update(state: &KalmanState, pilots: &CMatrix, y: &CVector, noise_var: f64) -> Result<KalmanState> {
    if pilots.ncols() == 0 {
        return Err(Error::param("pilots", "pilot frame must have at least one column"));
    }
    let rho = pilots.column(0).norm_squared();
    if rho <= 0.0 {
        return Err(Error::param("pilots", "pilot power must be positive"));
    }
    let dev = frame_orthogonality_deviation(pilots);
    if dev > 1e-8 {
        return Err(Error::NonOrthogonalPilots { deviation: dev });
    }
    if noise_var.is_nan() || noise_var <= 0.0 {
        return Err(Error::param("noise_var", "noise variance must be positive"));
    }
    let n = state.h_hat.len();
    if !n.is_multiple_of(pilots.nrows()) {
        return Err(Error::Dimension("pilot length does not divide the state length".into()));
    }
    let n_r = n / pilots.nrows();
    full_update(state, &measurement_matrix(pilots, n_r), y, noise_var)
}

/// `tr(P) / tr(R_h)`.
pub fn nmse(state: &KalmanState, stats: &ChannelStatistics) -> f64 {
    state.trace() / stats.trace()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{kron_stats, SpatialCovariance};

    fn scalar_stats() -> ChannelStatistics {
        kron_stats(&SpatialCovariance::identity(1), &SpatialCovariance::identity(1)).unwrap()
    }

    #[test]
    fn scalar_kalman_halves_variance() {
        let stats = scalar_stats();
        let prior = KalmanState::prior_full(&stats);
        let obs = PilotObservation::new(CVector::from_element(1, C64::new(1.0, 0.0)), CVector::zeros(1), 1.0)
            .unwrap();
        let post = measurement_update(&prior, &obs).unwrap();
        assert!((post.trace() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn eigen_scalar_update() {
        let stats = scalar_stats();
        let post = eigen_update(&KalmanState::prior_eigen(&stats), &stats, 0, 1.0, 1.0, None).unwrap();
        assert_eq!(post.cov, Covariance::Eigen(vec![0.5]));
    }

    #[test]
    fn eigen_prediction_arithmetic() {
        let stats = scalar_stats();
        let mut s = KalmanState::prior_eigen(&stats);
        s.cov = Covariance::Eigen(vec![0.2]);
        let p = predict(&s, 0.5f64.sqrt(), &stats, 1);
        match p.cov {
            Covariance::Eigen(l) => assert!((l[0] - 0.6).abs() < 1e-15),
            _ => unreachable!(),
        }
    }

    #[test]
    fn prediction_limits() {
        let stats = kron_stats(&crate::stats::exp_covariance(3, 0.5).unwrap(), &SpatialCovariance::identity(2))
            .unwrap();
        let mut s = KalmanState::prior_full(&stats);
        s.h_hat = CVector::from_element(6, C64::new(1.0, -1.0));
        s.cov = Covariance::Full(CMatrix::identity(6, 6).scale(0.1));
        assert_eq!(predict(&s, 1.0, &stats, 3).cov, s.cov);
        let p0 = predict(&s, 0.0, &stats, 2);
        assert_eq!(p0.cov, Covariance::Full(stats.covariance().clone()));
        assert!(p0.h_hat.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn nmse_limits() {
        let stats = kron_stats(&crate::stats::exp_covariance(4, 0.6).unwrap(), &SpatialCovariance::identity(2))
            .unwrap();
        assert!((nmse(&KalmanState::prior_full(&stats), &stats) - 1.0).abs() < 1e-12);
        let mut s = KalmanState::prior_eigen(&stats);
        s.cov = Covariance::Eigen(vec![0.0; 8]);
        assert_eq!(nmse(&s, &stats), 0.0);
    }
}
