//! The homogenized drift against independent oracles: a long frozen-chain
//! Monte Carlo average, the O(1/N) gap to the finite-scale drift, and the
//! first-order behaviour of the Euler scheme against the RK4 reference.

use qfluid::dist::inverse_cdf_index;
use qfluid::presets::{single_agent_game, standard_wrapped, QParams};
use qfluid::{
    beta, beta_gap, integrate, rate_fit, sample_trajectory, sup_error, DriftField, MarkovGame,
    OdeMethod, RngStream, Scale,
};

#[test]
fn drift_matches_frozen_chain_monte_carlo() {
    let w = standard_wrapped(single_agent_game(), QParams::default()).unwrap();
    let x0 = w.stack().initial_params();
    let exact = beta(&w, &x0, Scale::Limit).unwrap();

    // Frozen chain: at fixed parameters the kernel row depends only on the
    // entry state, so the two row blocks can be precomputed.
    let s_count = w.game().n_states();
    let block_len = w.game().joint_actions() * s_count;
    let blocks: Vec<Vec<f64>> = (0..s_count)
        .map(|s| {
            let mut b = vec![0.0; block_len];
            w.row_block_into(&x0, s, &mut b).unwrap();
            b
        })
        .collect();
    let f_table: Vec<Vec<f64>> = (0..w.size()).map(|g| w.increment(&x0, g).unwrap()).collect();

    let mu0 = w.initial_distribution(&x0).unwrap();
    let mut rng = RngStream::new(271_828);
    let mut g = mu0.sample_index(rng.next_uniform());

    const BATCHES: usize = 100;
    const BATCH_LEN: usize = 100_000;
    let d = w.dim();
    let mut batch_means = Vec::with_capacity(BATCHES);
    for _ in 0..BATCHES {
        let mut acc = vec![0.0; d];
        for _ in 0..BATCH_LEN {
            let (_, _, s_n) = w.decode(g);
            let xi = rng.next_uniform();
            g = s_n * block_len + inverse_cdf_index(&blocks[s_n], xi);
            for (a, v) in acc.iter_mut().zip(&f_table[g]) {
                *a += v;
            }
        }
        for a in acc.iter_mut() {
            *a /= BATCH_LEN as f64;
        }
        batch_means.push(acc);
    }

    for j in 0..d {
        let mean = batch_means.iter().map(|b| b[j]).sum::<f64>() / BATCHES as f64;
        let var = batch_means
            .iter()
            .map(|b| (b[j] - mean) * (b[j] - mean))
            .sum::<f64>()
            / (BATCHES - 1) as f64;
        let se = (var / BATCHES as f64).sqrt();
        let gap = (mean - exact[j]).abs();
        assert!(
            gap <= 3.0 * se + 1e-12,
            "coordinate {}: mc {} exact {} gap {} (3 se = {})",
            j,
            mean,
            exact[j],
            gap,
            3.0 * se
        );
    }
}

#[test]
fn drift_is_a_convex_combination_of_increments() {
    let w = standard_wrapped(single_agent_game(), QParams::default()).unwrap();
    let mut rng = RngStream::new(5);
    for _ in 0..10 {
        let x: Vec<f64> = (0..w.dim())
            .map(|_| (rng.next_uniform() * 2.0 - 1.0) * 5.0)
            .collect();
        let b = beta(&w, &x, Scale::Limit).unwrap();
        let drift_sup = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut increment_sup = 0.0f64;
        for g in 0..w.size() {
            let f = w.increment(&x, g).unwrap();
            increment_sup = increment_sup.max(f.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        }
        assert!(
            drift_sup <= increment_sup + 1e-15,
            "{} > {}",
            drift_sup,
            increment_sup
        );
    }
}

#[test]
fn degenerate_single_state_game_has_beta_equal_f() {
    let game = MarkovGame::new(
        1,
        vec![1],
        vec![vec![vec![1.0]]],
        vec![vec![vec![0.7]]],
        vec![1.0],
    )
    .unwrap();
    let w = standard_wrapped(game, QParams::default()).unwrap();
    assert_eq!(w.size(), 1);
    let x = vec![0.3];
    let b = beta(&w, &x, Scale::Limit).unwrap();
    let f = w.increment(&x, 0).unwrap();
    assert!((b[0] - f[0]).abs() < 1e-15);
    // 0.1 * (0.7 + 0.9 * 0.3 - 0.3)
    assert!((b[0] - 0.067).abs() < 1e-15, "{}", b[0]);
}

#[test]
fn zero_update_gives_zero_drift_and_zero_gap() {
    let w = standard_wrapped(
        single_agent_game(),
        QParams {
            alpha: 0.0,
            ..QParams::default()
        },
    )
    .unwrap();
    let x = vec![0.4; w.dim()];
    let b = beta(&w, &x, Scale::Limit).unwrap();
    assert!(b.iter().all(|&v| v == 0.0));
    for n in [1, 10, 1000] {
        assert_eq!(beta_gap(&w, &x, n).unwrap(), 0.0);
    }
}

#[test]
fn finite_scale_drift_gap_decays_like_inverse_n() {
    let w = standard_wrapped(single_agent_game(), QParams::default()).unwrap();
    let mut rng = RngStream::new(17);
    let mut probes = vec![vec![0.0; w.dim()]];
    for _ in 0..4 {
        probes.push(
            (0..w.dim())
                .map(|_| (rng.next_uniform() * 2.0 - 1.0) * 5.0)
                .collect(),
        );
    }
    for (i, x) in probes.iter().enumerate() {
        let points: Vec<(f64, f64)> = [10u64, 100, 1000]
            .iter()
            .map(|&n| (n as f64, beta_gap(&w, x, n).unwrap()))
            .collect();
        assert!(points.iter().all(|&(_, gap)| gap > 0.0), "probe {}", i);
        let fit = rate_fit(&points).unwrap();
        assert!(
            (-1.25..=-0.75).contains(&fit.slope),
            "probe {} slope {} points {:?}",
            i,
            fit.slope,
            points
        );
    }
}

#[test]
fn euler_error_against_rk4_reference_is_first_order() {
    let w = standard_wrapped(single_agent_game(), QParams::default()).unwrap();
    let x0 = w.stack().initial_params();
    let horizon = 1.0;

    let reference = {
        let mut field = DriftField::new(&w, Scale::Limit).with_warm_start(true);
        integrate(&mut field, &x0, horizon, 2048, OdeMethod::Rk4).unwrap()
    };
    let terminal_gap = |steps: usize| -> f64 {
        let mut field = DriftField::new(&w, Scale::Limit).with_warm_start(true);
        let euler = integrate(&mut field, &x0, horizon, steps, OdeMethod::Euler).unwrap();
        euler
            .terminal()
            .iter()
            .zip(reference.terminal())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    };

    let points: Vec<(f64, f64)> = [64usize, 128, 256, 512]
        .iter()
        .map(|&k| (k as f64, terminal_gap(k)))
        .collect();
    let fit = rate_fit(&points).unwrap();
    assert!(
        (-1.3..=-0.7).contains(&fit.slope),
        "slope {} points {:?}",
        fit.slope,
        points
    );

    // Halving the step size halves the terminal gap, within 20%.
    let ratio = points[2].1 / points[3].1;
    assert!((1.6..=2.4).contains(&ratio), "halving ratio {}", ratio);
}

#[test]
fn learning_rate_rescaling_is_a_time_reparametrization() {
    let factor = 3.0;
    let base = QParams::default(); // alpha = 0.1
    let scaled = QParams {
        alpha: base.alpha * factor,
        ..base
    };
    let w_base = standard_wrapped(single_agent_game(), base).unwrap();
    let w_scaled = standard_wrapped(single_agent_game(), scaled).unwrap();
    let x0 = w_base.stack().initial_params();

    for method in [OdeMethod::Euler, OdeMethod::Rk4] {
        let mut f_scaled = DriftField::new(&w_scaled, Scale::Limit);
        let short = integrate(&mut f_scaled, &x0, 0.4, 64, method).unwrap();
        let mut f_base = DriftField::new(&w_base, Scale::Limit);
        let long = integrate(&mut f_base, &x0, 0.4 * factor, 64, method).unwrap();
        for (node, (a, b)) in short.states.iter().zip(&long.states).enumerate() {
            for j in 0..a.len() {
                assert!(
                    (a[j] - b[j]).abs() <= 1e-8,
                    "{:?} node {} coord {}: {} vs {}",
                    method,
                    node,
                    j,
                    a[j],
                    b[j]
                );
            }
        }
    }
}

#[test]
fn warm_start_changes_nothing_measurable() {
    let w = standard_wrapped(single_agent_game(), QParams::default()).unwrap();
    let x0 = w.stack().initial_params();
    let mut cold = DriftField::new(&w, Scale::Limit);
    let mut warm = DriftField::new(&w, Scale::Limit).with_warm_start(true);
    let a = integrate(&mut cold, &x0, 0.5, 50, OdeMethod::Rk4).unwrap();
    let b = integrate(&mut warm, &x0, 0.5, 50, OdeMethod::Rk4).unwrap();
    for (ya, yb) in a.states.iter().zip(&b.states) {
        for j in 0..ya.len() {
            assert!((ya[j] - yb[j]).abs() < 1e-10);
        }
    }
}

#[test]
fn rk4_reference_is_not_the_error_bottleneck() {
    let w = standard_wrapped(single_agent_game(), QParams::default()).unwrap();
    let x0 = w.stack().initial_params();
    let traj = sample_trajectory(&w, &x0, 100, 1.0, 77, None).unwrap();

    let error_with_steps = |steps: usize| -> f64 {
        let mut field = DriftField::new(&w, Scale::Limit).with_warm_start(true);
        let ode = integrate(&mut field, &x0, 1.0, steps, OdeMethod::Rk4).unwrap();
        sup_error(&traj, &ode).unwrap()
    };
    let e1 = error_with_steps(1000);
    let e2 = error_with_steps(2000);
    assert!(e1 > 0.0);
    assert!(
        (e1 - e2).abs() < 0.01 * e1,
        "doubling the reference grid moved the error from {} to {}",
        e1,
        e2
    );
}
