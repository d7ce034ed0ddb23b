mod common;

use common::*;
use pilot_kalman_core::kalman::{eigen_update, measurement_update, predict};
use pilot_kalman_core::linalg::{hermitian_eig, real_trace};
use pilot_kalman_core::pilot_design::{dominant_directions, random_frame_schedule};
use pilot_kalman_core::sim::block_design_schedule;
use pilot_kalman_core::{
    algorithm1_schedule, algorithm2_schedule, baseline_schedule, block_fading_design, exp_covariance,
    greedy_index, kron_stats, problem2_schedule, Baseline, CMatrix, CVector, KalmanState, PilotObservation,
    RngStream, SlotConfig, SpatialCovariance,
};
use proptest::prelude::*;

#[test]
fn greedy_beam_beats_random_beams() {
    let mut rng = RngStream::new(41, 0);
    let stats = random_stats(8, 1, &mut rng);
    let (rho, s2, a) = (1.0, 0.1, 0.99);
    let mut state = KalmanState::prior_full(&stats);
    let mut lambda = stats.eig_stacked().to_vec();
    for _ in 0..20 {
        let i = greedy_index(&lambda, 1, rho, s2);
        let chosen = measurement_update(
            &state,
            &PilotObservation::new(stats.tx_eigvec(i).scale(rho.sqrt()), CVector::zeros(1), s2).unwrap(),
        )
        .unwrap();
        let best = chosen.trace();
        for _ in 0..500 {
            let b = random_unit(8, &mut rng).scale(rho.sqrt());
            let alt = measurement_update(&state, &PilotObservation::new(b, CVector::zeros(1), s2).unwrap()).unwrap();
            assert!(best <= alt.trace() + 1e-9);
        }
        lambda[i] = s2 * lambda[i] / (rho * lambda[i] + s2);
        state = predict(&chosen, a, &stats, 1);
        for (x, x1) in lambda.iter_mut().zip(stats.eig_stacked()) {
            *x = a * a * *x + (1.0 - a * a) * x1;
        }
    }
}

#[test]
fn first_greedy_pick_is_the_dominant_direction() {
    let stats = kron_stats(&exp_covariance(8, 0.7).unwrap(), &exp_covariance(2, 0.5).unwrap()).unwrap();
    let cfg = SlotConfig::new(10, 4, 1.0, 0.1).unwrap();
    let s = algorithm1_schedule(&stats, &cfg, 0.999, 3).unwrap();
    assert_eq!(s.slots[0][0].direction, Some(0));
    assert_eq!(s.slots.len(), 3);
    assert!(s.slots.iter().all(|u| u.len() == 4));
    let ks: Vec<usize> = s.slots[1].iter().map(|u| u.k).collect();
    assert_eq!(ks, vec![11, 12, 13, 14]);
    // The horizon formulation reaches the same schedule.
    assert_eq!(problem2_schedule(&stats, &cfg, 0.999, 3).unwrap(), s);
}

#[test]
fn greedy_ties_go_to_lowest_index() {
    assert_eq!(greedy_index(&[1.0, 1.0, 1.0], 1, 1.0, 0.1), 0);
    assert_eq!(greedy_index(&[0.5, 0.5, 2.0, 0.0], 2, 1.0, 0.1), 1);
}

#[test]
fn algorithm2_uses_distinct_directions_and_spends_the_budget() {
    let stats = kron_stats(&exp_covariance(8, 0.6).unwrap(), &exp_covariance(2, 0.6).unwrap()).unwrap();
    for noise in [0.01, 0.3, 3.0] {
        let cfg = SlotConfig::new(6, 4, 1.0, noise).unwrap();
        let s = algorithm2_schedule(&stats, &cfg, 0.99, 5).unwrap();
        assert!(s.directions_distinct_per_slot());
        for p in s.slot_power() {
            assert!((p - cfg.budget()).abs() < 1e-9);
        }
        assert!(s.slots.iter().flatten().all(|u| u.power >= 0.0));
    }
    let too_many = SlotConfig::new(12, 9, 1.0, 0.1).unwrap();
    assert!(algorithm2_schedule(&stats, &too_many, 0.99, 1).is_err());
}

#[test]
fn slot_config_validation_names_the_field() {
    let err = SlotConfig::new(10, 11, 1.0, 0.1).unwrap_err();
    assert!(err.to_string().contains("m_p"), "{err}");
    assert!(SlotConfig::new(10, 0, 1.0, 0.1).is_err());
    assert!(SlotConfig::new(10, 4, 1.0, 0.0).is_err());
}

/// Error trace after a joint update with `frame` (block-fading end-of-training objective).
fn frame_mse(pred: &CMatrix, frame: &CMatrix, s2: f64) -> f64 {
    let (_, post) = pilot_kalman_core::kalman::full_gain(pred, frame, s2).unwrap();
    real_trace(&post)
}

#[test]
fn block_design_beats_random_orthonormal_frames() {
    let mut rng = RngStream::new(42, 0);
    for inst in 0..20 {
        let m_p = 2 + inst % 2;
        let stats = random_stats(8, 1, &mut rng);
        let pred_cov = random_psd(8, &mut rng);
        let pred = KalmanState {
            h_hat: CVector::zeros(8),
            cov: pilot_kalman_core::Covariance::Full(pred_cov.entries().clone()),
            time: 1,
            phase: pilot_kalman_core::kalman::Phase::Predicted,
        };
        let frame = block_fading_design(&pred, &stats, m_p, 1.0).unwrap();
        let ours = frame_mse(pred_cov.entries(), &frame, 0.1);
        for _ in 0..200 {
            let raw = CMatrix::from_fn(8, m_p, |_, _| rng.complex_gaussian());
            let q = pilot_kalman_core::linalg::orthonormal_columns(&raw);
            assert!(ours <= frame_mse(pred_cov.entries(), &q, 0.1) + 1e-9);
        }
    }
}

#[test]
fn block_design_first_slot_uses_top_eigenvectors() {
    let stats = kron_stats(&exp_covariance(8, 0.8).unwrap(), &SpatialCovariance::identity(1)).unwrap();
    let frame = block_fading_design(&KalmanState::prior_full(&stats), &stats, 3, 2.0).unwrap();
    let (_, vecs) = hermitian_eig(stats.covariance()).unwrap();
    for c in 0..3 {
        let want = vecs.column(c).scale(2f64.sqrt());
        let got = frame.column(c);
        // Equal up to a unit phase.
        let phase = (got.adjoint() * &want)[(0, 0)];
        assert!((phase.norm() - 2.0).abs() < 1e-9);
    }
    let eig = block_fading_design(&KalmanState::prior_eigen(&stats), &stats, 3, 2.0).unwrap();
    for c in 0..3 {
        assert!((eig.column(c) - stats.tx_eigvec(c).scale(2f64.sqrt())).norm() < 1e-12);
    }
    assert!(block_fading_design(&KalmanState::prior_eigen(&stats), &stats, 8, 1.0).is_err());
}

#[test]
fn block_design_schedule_tracks_dominant_directions() {
    let stats = kron_stats(&exp_covariance(8, 0.8).unwrap(), &SpatialCovariance::identity(1)).unwrap();
    let cfg = SlotConfig::new(5, 2, 1.0, 0.1).unwrap();
    let s = block_design_schedule(&stats, &cfg, 0.999, 6).unwrap();
    assert_eq!(s.slots[0].iter().map(|u| u.direction).collect::<Vec<_>>(), vec![Some(0), Some(1)]);
    // Replaying the eigen recursion reproduces each slot's choice.
    let mut state = KalmanState::prior_eigen(&stats);
    for (l, slot) in s.slots.iter().enumerate() {
        if l > 0 {
            state = predict(&state, 0.999, &stats, 1);
        }
        let pilot_kalman_core::Covariance::Eigen(lambda) = &state.cov else { unreachable!() };
        let want: Vec<Option<usize>> = dominant_directions(lambda, 2).into_iter().map(Some).collect();
        assert_eq!(slot.iter().map(|u| u.direction).collect::<Vec<_>>(), want);
        for u in slot {
            state = eigen_update(&state, &stats, u.direction.unwrap(), 1.0, 0.1, None).unwrap();
        }
    }
}

#[test]
fn baselines() {
    let stats = kron_stats(&exp_covariance(8, 0.6).unwrap(), &SpatialCovariance::identity(1)).unwrap();
    let cfg = SlotConfig::new(5, 3, 1.0, 0.1).unwrap();
    let mut rng = RngStream::new(43, 0);
    let rr = baseline_schedule(Baseline::RoundRobin { l_p: 5 }, &stats, &cfg, 3, &mut rng).unwrap();
    let dirs: Vec<usize> = rr.slots.iter().flatten().map(|u| u.direction.unwrap()).collect();
    assert_eq!(dirs, vec![0, 1, 2, 3, 4, 0, 1, 2, 3]);
    let fixed = baseline_schedule(Baseline::FixedDominant, &stats, &cfg, 2, &mut rng).unwrap();
    assert!(fixed.slots.iter().all(|s| s.iter().map(|u| u.direction.unwrap()).eq(0..3)));
    let orth = baseline_schedule(Baseline::Orthogonal, &stats, &cfg, 3, &mut rng).unwrap();
    let beams: Vec<&CVector> = orth.slots.iter().flatten().map(|u| &u.beam).collect();
    for i in 0..8 {
        for j in 0..i {
            assert!((beams[i].adjoint() * beams[j])[(0, 0)].norm() < 1e-12);
        }
        assert!((beams[i].norm() - 1.0).abs() < 1e-12);
    }
    let rand = baseline_schedule(Baseline::Random, &stats, &cfg, 3, &mut rng).unwrap();
    assert!(rand.slots.iter().flatten().all(|u| (u.beam.norm() - 1.0).abs() < 1e-12));
    assert!(baseline_schedule(Baseline::RoundRobin { l_p: 3 }, &stats, &cfg, 1, &mut rng).is_err());
    assert!(baseline_schedule(Baseline::RoundRobin { l_p: 9 }, &stats, &cfg, 1, &mut rng).is_err());
    let frames = random_frame_schedule(8, &cfg, 2, &mut rng).unwrap();
    for slot in &frames.slots {
        let f = CMatrix::from_fn(8, 3, |i, c| slot[c].beam[i]);
        assert!((f.adjoint() * &f - CMatrix::identity(3, 3)).norm() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn algorithm1_never_loses_to_fixed_eigen(seed in 0u64..10_000, r in 0.1f64..0.9, log_noise in -2.0f64..1.0) {
        let stats = kron_stats(&exp_covariance(6, r).unwrap(), &SpatialCovariance::identity(1)).unwrap();
        let cfg = SlotConfig::new(4, 2, 1.0, 10f64.powf(log_noise)).unwrap();
        let mut rng = RngStream::new(seed, 0);
        let greedy = algorithm1_schedule(&stats, &cfg, 0.99, 1).unwrap();
        let fixed = baseline_schedule(Baseline::FixedDominant, &stats, &cfg, 1, &mut rng).unwrap();
        let run = |s: &pilot_kalman_core::PilotSchedule| {
            let mut st = KalmanState::prior_eigen(&stats);
            for u in &s.slots[0] {
                st = eigen_update(&st, &stats, u.direction.unwrap(), u.power, cfg.noise_var, None).unwrap();
                st = predict(&st, 0.99, &stats, 1);
            }
            st.trace()
        };
        prop_assert!(run(&greedy) <= run(&fixed) + 1e-12);
    }

    #[test]
    fn algorithm2_powers_are_feasible(seed in 0u64..10_000, m_p in 1usize..5, log_noise in -2.0f64..1.0) {
        let mut rng = RngStream::new(seed, 3);
        let stats = random_stats(5, 2, &mut rng);
        let cfg = SlotConfig::new(m_p + 2, m_p, 1.0, 10f64.powf(log_noise)).unwrap();
        let s = algorithm2_schedule(&stats, &cfg, 0.95, 3).unwrap();
        prop_assert!(s.directions_distinct_per_slot());
        for p in s.slot_power() {
            prop_assert!((p - cfg.budget()).abs() < 1e-9);
        }
    }
}
