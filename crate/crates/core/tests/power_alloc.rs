use pilot_kalman_core::power_alloc::{block_end_mse, lowsnr_limit_alloc};
use pilot_kalman_core::{highsnr_alloc, lowsnr_alloc, waterfill, waterfill_miso, PowerProblem, RngStream};
use proptest::prelude::*;

fn random_problem(rng: &mut RngStream, n_r: usize, noise_var: f64) -> PowerProblem {
    let n = 1 + (rng.uniform() * 4.0) as usize;
    let blocks = (0..n)
        .map(|_| (0..n_r).map(|_| 0.05 + 3.0 * rng.uniform()).collect())
        .collect();
    let exponents = (0..n).map(|i| (n - 1 - i) as u32).collect();
    let a = 0.5 + 0.5 * rng.uniform();
    PowerProblem::new(blocks, exponents, n as f64 * (0.5 + rng.uniform()), noise_var, a).unwrap()
}

/// Exhaustive search over the simplex with `steps` grid points per unit of budget.
fn grid_oracle(p: &PowerProblem, steps: usize) -> f64 {
    fn rec(p: &PowerProblem, steps: usize, left: usize, acc: &mut Vec<f64>, best: &mut f64) {
        let n = p.len();
        if acc.len() == n - 1 {
            acc.push(left as f64 * p.budget / steps as f64);
            *best = best.min(p.objective(acc));
            acc.pop();
            return;
        }
        for k in 0..=left {
            acc.push(k as f64 * p.budget / steps as f64);
            rec(p, steps, left - k, acc, best);
            acc.pop();
        }
    }
    let mut best = f64::INFINITY;
    rec(p, steps, steps, &mut Vec::new(), &mut best);
    best
}

#[test]
fn waterfill_beats_grid_oracle_and_satisfies_kkt() {
    let mut rng = RngStream::new(31, 0);
    for inst in 0..100 {
        let n_r = 1 + inst % 2;
        let noise = 0.05 + rng.uniform();
        let p = random_problem(&mut rng, n_r, noise);
        let sol = waterfill(&p).unwrap();
        let j = p.objective(&sol.powers);
        let grid = grid_oracle(&p, 60);
        assert!(j <= grid + 1e-6, "instance {inst}: {j} > grid {grid}");
        assert!(sol.kkt_residual <= 1e-8, "instance {inst}: kkt {}", sol.kkt_residual);
        assert!(sol.powers.iter().all(|x| *x >= 0.0));
        assert!((sol.powers.iter().sum::<f64>() - p.budget).abs() < 1e-9 * p.budget);
    }
}

#[test]
fn miso_closed_form_agrees_with_generic_solver() {
    let mut rng = RngStream::new(32, 0);
    for _ in 0..100 {
        let noise = 0.05 + rng.uniform();
        let p = random_problem(&mut rng, 1, noise);
        let g = waterfill(&p).unwrap();
        let c = waterfill_miso(&p).unwrap();
        for (x, y) in g.powers.iter().zip(&c.powers) {
            assert!((x - y).abs() <= 1e-6 * p.budget);
        }
        assert!(c.kkt_residual <= 1e-8);
    }
}

#[test]
fn exact_objective_dominates_approximations() {
    let mut rng = RngStream::new(33, 0);
    for inst in 0..200 {
        let noise = 10f64.powf(-2.0 + 4.0 * rng.uniform());
        let p = random_problem(&mut rng, 1 + inst % 2, noise);
        let j = p.objective(&waterfill(&p).unwrap().powers);
        assert!(j <= p.objective(&highsnr_alloc(&p)) + 1e-12);
        assert!(j <= p.objective(&lowsnr_alloc(&p)) + 1e-12);
        assert!(j <= p.objective(&lowsnr_limit_alloc(&p)) + 1e-12);
    }
}

#[test]
fn snr_limits() {
    let mut rng = RngStream::new(34, 0);
    for inst in 0..50 {
        let base = random_problem(&mut rng, 1 + inst % 2, 1.0);
        let hi = PowerProblem { noise_var: 1e-9, ..base.clone() };
        let sol = waterfill(&hi).unwrap();
        for (x, y) in sol.powers.iter().zip(highsnr_alloc(&hi)) {
            assert!((x - y).abs() <= 0.01 * y, "high-SNR profile {x} vs {y}");
        }
        let lo = PowerProblem { noise_var: 1e9, ..base };
        let sol = waterfill(&lo).unwrap();
        let target = lowsnr_limit_alloc(&lo);
        let i = target.iter().position(|x| *x > 0.0).unwrap();
        assert!(sol.powers[i] >= 0.99 * lo.budget);
    }
}

#[test]
fn degenerate_ties_go_to_smallest_exponent() {
    let p = PowerProblem::new(vec![vec![0.0], vec![0.0]], vec![1, 1], 2.0, 1.0, 0.9).unwrap();
    assert_eq!(waterfill(&p).unwrap().powers, vec![2.0, 0.0]);
    assert_eq!(waterfill_miso(&p).unwrap().powers, vec![2.0, 0.0]);
}

#[test]
fn invalid_problems_are_rejected() {
    assert!(PowerProblem::new(vec![], vec![], 1.0, 1.0, 1.0).is_err());
    assert!(PowerProblem::new(vec![vec![1.0]], vec![0, 1], 1.0, 1.0, 1.0).is_err());
    assert!(PowerProblem::new(vec![vec![-1.0]], vec![0], 1.0, 1.0, 1.0).is_err());
    assert!(PowerProblem::new(vec![vec![1.0]], vec![0], 0.0, 1.0, 1.0).is_err());
    assert!(PowerProblem::new(vec![vec![1.0]], vec![0], 1.0, 0.0, 1.0).is_err());
    assert!(PowerProblem::new(vec![vec![1.0]], vec![0], 1.0, 1.0, 1.5).is_err());
}

#[test]
fn power_moves_to_the_later_use() {
    let mut rng = RngStream::new(35, 0);
    for _ in 0..100 {
        let n_r = 1 + (rng.uniform() * 2.0) as usize;
        let stat: Vec<f64> = (0..n_r).map(|_| 0.1 + 2.0 * rng.uniform()).collect();
        let start: Vec<f64> = stat.iter().map(|x| x * rng.uniform()).collect();
        let (g1, g2, tail) = ((rng.uniform() * 3.0) as usize, 1 + (rng.uniform() * 4.0) as usize, (rng.uniform() * 4.0) as usize);
        let (rho1, rho2) = (0.1 + 2.0 * rng.uniform(), 0.1 + 2.0 * rng.uniform());
        let s2 = 0.05 + rng.uniform();
        let a = 0.8 + 0.2 * rng.uniform();
        let grid: Vec<f64> = (0..=200)
            .map(|k| {
                // Move `eps` of the first use's power onto the second use.
                let eps = rho1 * k as f64 / 200.0;
                block_end_mse(&start, &stat, &[(g1, rho1 - eps), (g2, rho2 + eps)], tail, s2, a)
            })
            .collect();
        for w in grid.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "not non-increasing: {} -> {}", w[0], w[1]);
        }
        let min = grid.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(grid[200] <= min + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn waterfill_is_feasible(seed in 0u64..100_000, n_r in 1usize..3, log_noise in -3.0f64..3.0) {
        let mut rng = RngStream::new(seed, 5);
        let p = random_problem(&mut rng, n_r, 10f64.powf(log_noise));
        let sol = waterfill(&p).unwrap();
        prop_assert!(sol.powers.iter().all(|x| *x >= 0.0 && x.is_finite()));
        prop_assert!((sol.powers.iter().sum::<f64>() - p.budget).abs() < 1e-9 * p.budget);
        prop_assert!(sol.kkt_residual <= 1e-8);
        prop_assert!(sol.slack.iter().all(|x| *x >= 0.0));
    }
}
