//! Sampler correctness against the dense kernel, coupling behaviour in the
//! scale, and ergodic-average error decay.

use qfluid::presets::{standard_wrapped, two_player_game, QParams};
use qfluid::{
    occupancy_error, sample_coupled, sample_step, stationary_distribution, RngStream,
    Scale, Simulation,
};

#[test]
fn single_step_frequencies_match_kernel_row() {
    let w = standard_wrapped(two_player_game(), QParams::default()).unwrap();
    let x = vec![0.3; w.dim()];
    let g = w.encode(1, 2, 0);
    let scale = Scale::Finite(50);
    let row = w.transition_matrix(&x, scale).unwrap().row(g).to_vec();

    let draws = 1_000_000usize;
    let mut rng = RngStream::new(4096);
    let mut counts = vec![0u64; w.size()];
    for _ in 0..draws {
        let xi = rng.next_uniform();
        counts[sample_step(&w, &x, g, scale, xi).unwrap()] += 1;
    }

    for (j, &p) in row.iter().enumerate() {
        let freq = counts[j] as f64 / draws as f64;
        if p == 0.0 {
            assert_eq!(counts[j], 0, "zero-probability state {} sampled", j);
            continue;
        }
        let band = 4.0 * (p * (1.0 - p) / draws as f64).sqrt();
        assert!(
            (freq - p).abs() <= band,
            "state {}: frequency {} vs probability {} (band {})",
            j,
            freq,
            p,
            band
        );
    }
}

#[test]
fn coupling_disagreement_shrinks_with_scale() {
    let w = standard_wrapped(two_player_game(), QParams::default()).unwrap();
    let x0 = w.stack().initial_params();
    let seeds = 300u64;
    let at_step = 100u64;

    let disagree_rate = |scale: u64| -> (f64, f64) {
        let horizon = at_step as f64 / scale as f64;
        let mut misses = 0u64;
        for seed in 0..seeds {
            let rec = sample_coupled(&w, &x0, scale, horizon, 1000 + seed).unwrap();
            assert_eq!(rec.steps, at_step);
            if !rec.equal_at(at_step) {
                misses += 1;
            }
        }
        let p = misses as f64 / seeds as f64;
        let se = (p * (1.0 - p) / seeds as f64).sqrt();
        (p, se)
    };

    let (p_small, se_small) = disagree_rate(1_000);
    let (p_large, se_large) = disagree_rate(100_000);
    let slack = 1.645 * (se_small * se_small + se_large * se_large).sqrt();
    assert!(
        p_large <= p_small + slack,
        "disagreement went up with N: {} -> {} (slack {})",
        p_small,
        p_large,
        slack
    );
    // At these scales the drop should be decisive, not marginal.
    assert!(
        p_small > p_large,
        "expected strict decrease, got {} vs {}",
        p_small,
        p_large
    );
}

#[test]
fn occupancy_error_halves_like_root_two_when_steps_double() {
    let w = standard_wrapped(two_player_game(), QParams::default()).unwrap();
    let x0 = w.stack().initial_params();
    let kernel = w.transition_matrix(&x0, Scale::Limit).unwrap();
    let mu = stationary_distribution(&kernel, 1e-12).unwrap();
    let g_target = (0..w.size())
        .max_by(|&a, &b| mu.get(a).partial_cmp(&mu.get(b)).unwrap())
        .unwrap();

    let mean_error = |steps: u64| -> f64 {
        let seeds = 200u64;
        let total: f64 = (0..seeds)
            .map(|s| occupancy_error(&w, &x0, g_target, steps, 7_000 + s).unwrap())
            .sum();
        total / seeds as f64
    };

    let ratio = mean_error(10_000) / mean_error(20_000);
    let root_two = 2.0f64.sqrt();
    assert!(
        (root_two * 0.75..=root_two * 1.25).contains(&ratio),
        "doubling ratio {} not within 25% of sqrt(2)",
        ratio
    );
}

#[test]
fn parameters_respect_ball_and_policy_floor_along_trajectory() {
    let w = standard_wrapped(two_player_game(), QParams::default()).unwrap();
    let x0 = w.stack().initial_params();
    let radius = w.ball_radius().unwrap();
    let mut sim = Simulation::new(&w, &x0, 1, 99).unwrap();
    let stack = w.stack();
    let mut policy = vec![0.0; 2];
    for step in 0..100_000u64 {
        sim.step().unwrap();
        let sup = sim.params().iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        assert!(sup <= radius + 1e-9, "step {}: sup {} radius {}", step, sup, radius);
        for player in 0..stack.len() {
            let floor = stack.member(player).policy_floor();
            for state in 0..w.game().n_states() {
                stack
                    .player_policy_into(player, sim.params(), state, &mut policy)
                    .unwrap();
                for &p in &policy {
                    assert!(p >= floor - 1e-15, "step {}: probability {} under floor", step, p);
                }
            }
        }
    }
}
