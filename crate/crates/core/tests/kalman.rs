mod common;

use common::*;
use pilot_kalman_core::kalman::{block_update, eigen_update, measurement_update, predict, Covariance};
use pilot_kalman_core::{CVector, Error, KalmanState, PilotObservation, RngStream};
use proptest::prelude::*;

fn observe(h: &CVector, beam: &CVector, n_r: usize, noise_var: f64, rng: &mut RngStream) -> CVector {
    let g = pilot_kalman_core::linalg::beam_gain(beam, h, n_r);
    CVector::from_fn(n_r, |r, _| g[r] + rng.complex_gaussian() * noise_var.sqrt())
}

#[test]
fn sequential_updates_match_batch_lmmse() {
    let mut rng = RngStream::new(11, 0);
    for inst in 0..50 {
        let n_t = 2 + inst % 5;
        let n_r = 1 + inst % 2;
        let q = 1 + inst % 4;
        let stats = random_stats(n_t, n_r, &mut rng);
        let noise_var = 0.05 + rng.uniform();
        let h = stats.colour(&rng.complex_gaussian_vec(stats.dim()));
        let mut state = KalmanState::prior_full(&stats);
        let mut beams = Vec::new();
        let mut ys = Vec::new();
        for _ in 0..q {
            let beam = random_unit(n_t, &mut rng).scale(0.5 + rng.uniform());
            let y = observe(&h, &beam, n_r, noise_var, &mut rng);
            state = measurement_update(&state, &PilotObservation::new(beam.clone(), y.clone(), noise_var).unwrap()).unwrap();
            beams.push(beam);
            ys.extend(y.iter().cloned());
        }
        let s = stacked_measurement(&beams, n_r);
        let (mean, cov) = batch_lmmse(stats.covariance(), &s, &CVector::from_vec(ys), noise_var);
        let p = state.cov.to_dense(&stats);
        assert!(rel_fro(&p, &cov) < 1e-9, "instance {inst}: covariance error {}", rel_fro(&p, &cov));
        let dm = (&state.h_hat - &mean).norm() / mean.norm().max(1e-300);
        assert!(dm < 1e-9, "instance {inst}: mean error {dm}");
    }
}

#[test]
fn eigen_path_matches_full_filter() {
    let mut rng = RngStream::new(12, 0);
    let stats = random_stats(5, 2, &mut rng);
    let noise_var = 0.2;
    let a = 0.97;
    let h = stats.colour(&rng.complex_gaussian_vec(stats.dim()));
    let mut full = KalmanState::prior_full(&stats);
    let mut eig = KalmanState::prior_eigen(&stats);
    for step in 0..12 {
        let i = (step * 3) % 5;
        let power = 0.5 + 0.1 * step as f64;
        let beam = stats.tx_eigvec(i).scale(power.sqrt());
        let y = observe(&h, &beam, 2, noise_var, &mut rng);
        full = measurement_update(&full, &PilotObservation::new(beam, y.clone(), noise_var).unwrap()).unwrap();
        eig = eigen_update(&eig, &stats, i, power, noise_var, Some(&y)).unwrap();
        assert!(rel_fro(&eig.cov.to_dense(&stats), &full.cov.to_dense(&stats)) < 1e-9);
        assert!((&eig.h_hat - &full.h_hat).norm() <= 1e-9 * full.h_hat.norm().max(1.0));
        full = predict(&full, a, &stats, 1);
        eig = predict(&eig, a, &stats, 1);
    }
}

#[test]
fn multi_step_prediction_composes() {
    let mut rng = RngStream::new(13, 0);
    let stats = random_stats(4, 2, &mut rng);
    let mut s = KalmanState::prior_full(&stats);
    let beam = random_unit(4, &mut rng);
    let y = observe(&stats.colour(&rng.complex_gaussian_vec(8)), &beam, 2, 0.1, &mut rng);
    s = measurement_update(&s, &PilotObservation::new(beam, y, 0.1).unwrap()).unwrap();
    let direct = predict(&s, 0.9, &stats, 5);
    let mut stepped = s.clone();
    for _ in 0..5 {
        stepped = predict(&stepped, 0.9, &stats, 1);
    }
    assert!(rel_fro(&direct.cov.to_dense(&stats), &stepped.cov.to_dense(&stats)) < 1e-12);
    assert!((&direct.h_hat - &stepped.h_hat).norm() < 1e-12);
    assert_eq!(direct.time, s.time + 5);
    // Long horizons relax to the prior.
    let far = predict(&s, 0.9, &stats, 2000);
    assert!(rel_fro(&far.cov.to_dense(&stats), stats.covariance()) < 1e-12);
}

#[test]
fn block_update_equals_sequential_orthogonal_updates() {
    let mut rng = RngStream::new(14, 0);
    let stats = random_stats(6, 1, &mut rng);
    let raw = pilot_kalman_core::CMatrix::from_fn(6, 3, |_, _| rng.complex_gaussian());
    let frame = pilot_kalman_core::linalg::orthonormal_columns(&raw).scale(2f64.sqrt());
    let h = stats.colour(&rng.complex_gaussian_vec(6));
    let mut y = Vec::new();
    let mut seq = KalmanState::prior_full(&stats);
    for c in 0..3 {
        let beam = frame.column(c).into_owned();
        let yc = observe(&h, &beam, 1, 0.3, &mut rng);
        seq = measurement_update(&seq, &PilotObservation::new(beam, yc.clone(), 0.3).unwrap()).unwrap();
        y.extend(yc.iter().cloned());
    }
    let joint = block_update(&KalmanState::prior_full(&stats), &frame, &CVector::from_vec(y), 0.3).unwrap();
    assert!(rel_fro(&joint.cov.to_dense(&stats), &seq.cov.to_dense(&stats)) < 1e-10);
    assert!((&joint.h_hat - &seq.h_hat).norm() < 1e-10);
}

#[test]
fn block_update_rejects_non_orthogonal_frames() {
    let mut rng = RngStream::new(15, 0);
    let stats = random_stats(4, 1, &mut rng);
    let frame = pilot_kalman_core::CMatrix::from_fn(4, 2, |_, _| rng.complex_gaussian());
    let y = CVector::zeros(2);
    let err = block_update(&KalmanState::prior_full(&stats), &frame, &y, 0.1).unwrap_err();
    assert!(matches!(err, Error::NonOrthogonalPilots { .. }));
}

#[test]
fn prior_nmse_is_one() {
    let mut rng = RngStream::new(16, 0);
    let stats = random_stats(5, 2, &mut rng);
    assert!((pilot_kalman_core::nmse(&KalmanState::prior_full(&stats), &stats) - 1.0).abs() < 1e-12);
    assert!((pilot_kalman_core::nmse(&KalmanState::prior_eigen(&stats), &stats) - 1.0).abs() < 1e-12);
}

#[test]
fn eigen_update_rejects_dense_state() {
    let mut rng = RngStream::new(17, 0);
    let stats = random_stats(3, 1, &mut rng);
    assert!(eigen_update(&KalmanState::prior_full(&stats), &stats, 0, 1.0, 0.1, None).is_err());
    assert!(eigen_update(&KalmanState::prior_eigen(&stats), &stats, 3, 1.0, 0.1, None).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn update_shrinks_and_preserves_psd(seed in 0u64..10_000, n_t in 2usize..6, n_r in 1usize..3, noise in 0.01f64..2.0) {
        let mut rng = RngStream::new(seed, 1);
        let stats = random_stats(n_t, n_r, &mut rng);
        let beam = random_unit(n_t, &mut rng);
        let y = CVector::zeros(n_r);
        let post = measurement_update(&KalmanState::prior_full(&stats), &PilotObservation::new(beam, y, noise).unwrap()).unwrap();
        let Covariance::Full(p) = &post.cov else { unreachable!() };
        let (vals, _) = pilot_kalman_core::linalg::hermitian_eig(p).unwrap();
        prop_assert!(vals.iter().all(|v| *v > -1e-10));
        let (diff, _) = pilot_kalman_core::linalg::hermitian_eig(&(stats.covariance() - p)).unwrap();
        prop_assert!(diff.iter().all(|v| *v > -1e-10));
        prop_assert!(post.trace() <= stats.trace() + 1e-12);
    }

    #[test]
    fn eigen_update_is_monotone_in_power(seed in 0u64..10_000, p1 in 0.0f64..3.0, dp in 0.0f64..3.0) {
        let mut rng = RngStream::new(seed, 2);
        let stats = random_stats(4, 2, &mut rng);
        let s = KalmanState::prior_eigen(&stats);
        let lo = eigen_update(&s, &stats, 0, p1, 0.1, None).unwrap();
        let hi = eigen_update(&s, &stats, 0, p1 + dp, 0.1, None).unwrap();
        prop_assert!(hi.trace() <= lo.trace() + 1e-12);
    }
}
