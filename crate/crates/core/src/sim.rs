//! Stochastic trajectories of the scaled wrapped chain.
//!
//! Transitions are sampled by inverse CDF: row `g` of the kernel partitions
//! `[0, 1]` into intervals in wrapped-index order (right-closed, with
//! zero-probability states owning no interval), and one uniform draw per
//! step picks the successor. Because the row is zero outside the block
//! `s_c' = s_n`, the sampler enumerates only that block — per-step cost is
//! `O(A * S)`, never `O(|E|)` — and materializes no matrix.
//!
//! The draw discipline is strict: one uniform for the initial state, one
//! per transition, nothing else. That makes the stream auditable and lets
//! two chains driven by the same stream couple exactly.

use std::io::{self, Write};

use crate::dist::inverse_cdf_index;
use crate::error::{Error, Result};
use crate::rng::{RngStream, RNG_ALGORITHM};
use crate::stationary::{stationary_distribution, DEFAULT_STATIONARY_TOL};
use crate::wrapped::{Scale, WrappedGame};

/// Default parameter-snapshot stride: about a hundred snapshots per unit
/// of rescaled time.
pub fn default_snapshot_stride(scale: u64) -> u64 {
    (scale / 100).max(1)
}

/// Number of transitions in a horizon-`T` run at scale `N`.
pub fn step_count(scale: u64, horizon: f64) -> u64 {
    (scale as f64 * horizon).floor() as u64
}

fn sample_in_block(
    w: &WrappedGame,
    y: &[f64],
    block_state: usize,
    xi: f64,
    buf: &mut [f64],
) -> Result<usize> {
    w.row_block_into(y, block_state, buf)?;
    let local = inverse_cdf_index(buf, xi);
    Ok(block_state * buf.len() + local)
}

/// One transition of the wrapped chain: the successor of `g` under the
/// kernel at `(x, scale)` selected by the uniform `xi`.
pub fn sample_step(w: &WrappedGame, x: &[f64], g: usize, scale: Scale, xi: f64) -> Result<usize> {
    if g >= w.size() {
        return Err(Error::IndexOutOfRange(format!(
            "wrapped state {} (space has {})",
            g,
            w.size()
        )));
    }
    if !(0.0..=1.0).contains(&xi) {
        return Err(Error::InvalidParameter(format!(
            "uniform draw {} outside [0, 1]",
            xi
        )));
    }
    let y = w.policy_basis(x, g, scale)?;
    let (_, _, s_n) = w.decode(g);
    let mut buf = vec![0.0; w.game().joint_actions() * w.game().n_states()];
    sample_in_block(w, &y, s_n, xi, &mut buf)
}

/// A live wrapped simulation: current state, current parameters, and the
/// uniform stream that drives it. Mutable state is confined to the owner.
pub struct Simulation<'w> {
    wrapped: &'w WrappedGame,
    scale: u64,
    rng: RngStream,
    x: Vec<f64>,
    g: usize,
    n: u64,
    cumulative_rewards: Vec<f64>,
    block_buf: Vec<f64>,
}

impl<'w> Simulation<'w> {
    /// Draw the initial wrapped state from `mu0` (evaluated at `x0`) with
    /// the stream's first uniform.
    pub fn new(w: &'w WrappedGame, x0: &[f64], scale: u64, seed: u64) -> Result<Self> {
        if scale == 0 {
            return Err(Error::InvalidParameter("scale must be >= 1".into()));
        }
        if x0.len() != w.dim() {
            return Err(Error::DimensionMismatch(format!(
                "x0 has {} entries, expected {}",
                x0.len(),
                w.dim()
            )));
        }
        let mu0 = w.initial_distribution(x0)?;
        let mut rng = RngStream::new(seed);
        let g = mu0.sample_index(rng.next_uniform());
        let block = w.game().joint_actions() * w.game().n_states();
        Ok(Simulation {
            wrapped: w,
            scale,
            rng,
            x: x0.to_vec(),
            g,
            n: 0,
            cumulative_rewards: vec![0.0; w.game().n_players()],
            block_buf: vec![0.0; block],
        })
    }

    pub fn state(&self) -> usize {
        self.g
    }

    pub fn params(&self) -> &[f64] {
        &self.x
    }

    pub fn steps_done(&self) -> u64 {
        self.n
    }

    pub fn rng_draws(&self) -> u64 {
        self.rng.draws()
    }

    pub fn cumulative_rewards(&self) -> &[f64] {
        &self.cumulative_rewards
    }

    /// Advance one transition: accrue rewards at the current triple, move
    /// the parameters by `f/N`, and sample the successor with one uniform.
    /// The policy is evaluated at the already-updated parameters, which is
    /// exactly the kernel row of `sample_step`.
    pub fn step(&mut self) -> Result<usize> {
        let g = self.g;
        let rewards = self.wrapped.rewards_at(g);
        for (acc, r) in self.cumulative_rewards.iter_mut().zip(&rewards) {
            *acc += r;
        }
        let y = self
            .wrapped
            .policy_basis(&self.x, g, Scale::Finite(self.scale))?;
        let (_, _, s_n) = self.wrapped.decode(g);
        let xi = self.rng.next_uniform();
        let next = sample_in_block(self.wrapped, &y, s_n, xi, &mut self.block_buf)?;
        self.x = y;
        self.g = next;
        self.n += 1;
        Ok(next)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySnapshot {
    pub n: u64,
    pub state: usize,
    pub params: Vec<f64>,
}

/// Recorded run of the scaled process, with parameter snapshots at a
/// configurable stride (the first and final steps are always kept).
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub scale: u64,
    pub horizon: f64,
    pub seed: u64,
    pub steps: u64,
    pub snapshot_stride: u64,
    pub snapshots: Vec<TrajectorySnapshot>,
    /// Rewards summed over the `steps` transitions, per player.
    pub cumulative_rewards: Vec<f64>,
    pub rng_draws: u64,
    pub rng_algorithm: &'static str,
}

impl TrajectoryRecord {
    /// Snapshot spacing in rescaled time, for grid-compatibility checks.
    pub fn min_snapshot_dt(&self) -> f64 {
        let mut min = f64::INFINITY;
        for pair in self.snapshots.windows(2) {
            min = min.min((pair[1].n - pair[0].n) as f64 / self.scale as f64);
        }
        min
    }

    /// CSV with one row per snapshot: `n, t, s_c, a, s_n, x_0..x_{d-1}`.
    pub fn write_csv<W: Write>(&self, w_game: &WrappedGame, mut out: W) -> io::Result<()> {
        write!(out, "n,t,s_c,a,s_n")?;
        let d = self.snapshots.first().map_or(0, |s| s.params.len());
        for j in 0..d {
            write!(out, ",x_{}", j)?;
        }
        writeln!(out)?;
        for snap in &self.snapshots {
            let (s_c, a, s_n) = w_game.decode(snap.state);
            write!(
                out,
                "{},{},{},{},{}",
                snap.n,
                snap.n as f64 / self.scale as f64,
                s_c,
                a,
                s_n
            )?;
            for v in &snap.params {
                write!(out, ",{}", v)?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Simulate `⌊N·T⌋` transitions at scale `N` from `x0`, recording snapshots
/// every `stride` steps (`None` uses [`default_snapshot_stride`]).
/// Bit-reproducible: the record is a pure function of
/// `(seed, scale, horizon, stride, x0)`.
pub fn sample_trajectory(
    w: &WrappedGame,
    x0: &[f64],
    scale: u64,
    horizon: f64,
    seed: u64,
    stride: Option<u64>,
) -> Result<TrajectoryRecord> {
    if !(horizon > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "horizon must be positive, got {}",
            horizon
        )));
    }
    let stride = stride.unwrap_or_else(|| default_snapshot_stride(scale)).max(1);
    let steps = step_count(scale, horizon);
    let mut sim = Simulation::new(w, x0, scale, seed)?;
    let mut snapshots = Vec::new();
    for n in 0..=steps {
        if n % stride == 0 || n == steps {
            snapshots.push(TrajectorySnapshot {
                n,
                state: sim.state(),
                params: sim.params().to_vec(),
            });
        }
        if n < steps {
            sim.step()?;
        }
    }
    Ok(TrajectoryRecord {
        scale,
        horizon,
        seed,
        steps,
        snapshot_stride: stride,
        snapshots,
        cumulative_rewards: sim.cumulative_rewards().to_vec(),
        rng_draws: sim.rng_draws(),
        rng_algorithm: RNG_ALGORITHM,
    })
}

/// A live chain and a parameter-frozen chain driven by the same uniform
/// stream from a common start state.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledRecord {
    pub scale: u64,
    pub horizon: f64,
    pub seed: u64,
    pub steps: u64,
    /// `G_n` for `n = 0..=steps`.
    pub live: Vec<u32>,
    /// The frozen chain `G̃_n`, parameters pinned at `x0`.
    pub frozen: Vec<u32>,
    pub equal: Vec<bool>,
    pub first_disagreement: Option<u64>,
}

impl CoupledRecord {
    pub fn disagreement_count(&self) -> u64 {
        self.equal.iter().filter(|&&e| !e).count() as u64
    }

    pub fn equal_at(&self, n: u64) -> bool {
        self.equal[n as usize]
    }

    /// CSV with columns `n, g_live, g_frozen, equal`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "n,g_live,g_frozen,equal")?;
        for n in 0..self.live.len() {
            writeln!(
                out,
                "{},{},{},{}",
                n,
                self.live[n],
                self.frozen[n],
                u8::from(self.equal[n])
            )?;
        }
        Ok(())
    }
}

/// Evolve the learning chain and its frozen-parameter companion through the
/// same inverse-CDF map with one shared uniform per step.
pub fn sample_coupled(
    w: &WrappedGame,
    x0: &[f64],
    scale: u64,
    horizon: f64,
    seed: u64,
) -> Result<CoupledRecord> {
    if scale == 0 {
        return Err(Error::InvalidParameter("scale must be >= 1".into()));
    }
    if !(horizon > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "horizon must be positive, got {}",
            horizon
        )));
    }
    if x0.len() != w.dim() {
        return Err(Error::DimensionMismatch(format!(
            "x0 has {} entries, expected {}",
            x0.len(),
            w.dim()
        )));
    }
    let steps = step_count(scale, horizon);
    let mu0 = w.initial_distribution(x0)?;
    let mut rng = RngStream::new(seed);
    let start = mu0.sample_index(rng.next_uniform());

    let block = w.game().joint_actions() * w.game().n_states();
    let mut buf = vec![0.0; block];
    let mut x_live = x0.to_vec();
    let mut g_live = start;
    let mut g_frozen = start;

    let mut live = Vec::with_capacity(steps as usize + 1);
    let mut frozen = Vec::with_capacity(steps as usize + 1);
    let mut equal = Vec::with_capacity(steps as usize + 1);
    let mut first_disagreement = None;

    let record = |n: u64,
                      g_l: usize,
                      g_f: usize,
                      live: &mut Vec<u32>,
                      frozen: &mut Vec<u32>,
                      equal: &mut Vec<bool>,
                      first: &mut Option<u64>| {
        live.push(g_l as u32);
        frozen.push(g_f as u32);
        let same = g_l == g_f;
        equal.push(same);
        if !same && first.is_none() {
            *first = Some(n);
        }
    };

    record(
        0,
        g_live,
        g_frozen,
        &mut live,
        &mut frozen,
        &mut equal,
        &mut first_disagreement,
    );

    for n in 1..=steps {
        let y_live = w.policy_basis(&x_live, g_live, Scale::Finite(scale))?;
        let y_frozen = w.policy_basis(x0, g_frozen, Scale::Finite(scale))?;
        let xi = rng.next_uniform();
        let (_, _, s_live) = w.decode(g_live);
        let (_, _, s_frozen) = w.decode(g_frozen);
        g_live = sample_in_block(w, &y_live, s_live, xi, &mut buf)?;
        g_frozen = sample_in_block(w, &y_frozen, s_frozen, xi, &mut buf)?;
        x_live = y_live;
        record(
            n,
            g_live,
            g_frozen,
            &mut live,
            &mut frozen,
            &mut equal,
            &mut first_disagreement,
        );
    }

    Ok(CoupledRecord {
        scale,
        horizon,
        seed,
        steps,
        live,
        frozen,
        equal,
        first_disagreement,
    })
}

/// Run the frozen chain (limit kernel at `x_frozen`) for `n_steps`
/// transitions and return the absolute gap between the occupancy frequency
/// of `g_target` and its exact stationary mass.
pub fn occupancy_error(
    w: &WrappedGame,
    x_frozen: &[f64],
    g_target: usize,
    n_steps: u64,
    seed: u64,
) -> Result<f64> {
    if g_target >= w.size() {
        return Err(Error::IndexOutOfRange(format!(
            "target state {} (space has {})",
            g_target,
            w.size()
        )));
    }
    if n_steps == 0 {
        return Err(Error::InvalidParameter("n_steps must be >= 1".into()));
    }
    let p = w.transition_matrix(x_frozen, Scale::Limit)?;
    let mu = stationary_distribution(&p, DEFAULT_STATIONARY_TOL)?;
    let mu0 = w.initial_distribution(x_frozen)?;

    let mut rng = RngStream::new(seed);
    let mut g = mu0.sample_index(rng.next_uniform());
    let block = w.game().joint_actions() * w.game().n_states();
    let mut buf = vec![0.0; block];
    let mut hits = 0u64;
    for _ in 0..n_steps {
        let (_, _, s_n) = w.decode(g);
        let xi = rng.next_uniform();
        g = sample_in_block(w, x_frozen, s_n, xi, &mut buf)?;
        if g == g_target {
            hits += 1;
        }
    }
    let freq = hits as f64 / n_steps as f64;
    Ok((freq - mu.get(g_target)).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    fn wrapped(alpha: f64) -> WrappedGame {
        let game = presets::single_agent_game();
        presets::standard_wrapped(game, presets::QParams { alpha, ..presets::QParams::default() })
            .unwrap()
    }

    #[test]
    fn point_mass_row_always_returns_it() {
        // A deterministic game: policy can still mix over actions, so use
        // a single-action game where the row is a point mass.
        let game = crate::game::MarkovGame::new(
            2,
            vec![1],
            vec![vec![vec![0.0, 1.0]], vec![vec![1.0, 0.0]]],
            vec![vec![vec![0.0], vec![0.0]]],
            vec![1.0, 0.0],
        )
        .unwrap();
        let w = presets::standard_wrapped(game, presets::QParams::default()).unwrap();
        // g = (0, 0, 1): block state 1, successor forced to (1, 0, 0).
        let g = w.encode(0, 0, 1);
        let forced = w.encode(1, 0, 0);
        let x = vec![0.0; w.dim()];
        for xi in [0.0, 0.25, 0.7, 0.999999] {
            assert_eq!(sample_step(&w, &x, g, Scale::Finite(10), xi).unwrap(), forced);
        }
    }

    #[test]
    fn small_xi_selects_first_positive_entry() {
        let w = wrapped(0.1);
        let x = vec![0.0; w.dim()];
        let g = w.encode(0, 0, 0);
        // Row g lives on the block s_c' = 0 whose first entry has positive
        // probability here, so a tiny draw must select the block's start.
        let first_of_block = w.encode(0, 0, 0);
        assert_eq!(
            sample_step(&w, &x, g, Scale::Finite(5), 1e-15).unwrap(),
            first_of_block
        );
        assert_eq!(
            sample_step(&w, &x, g, Scale::Finite(5), 0.0).unwrap(),
            first_of_block
        );
    }

    #[test]
    fn trajectory_is_bit_reproducible() {
        let w = wrapped(0.1);
        let x0 = w.stack().initial_params();
        let a = sample_trajectory(&w, &x0, 50, 2.0, 1234, Some(1)).unwrap();
        let b = sample_trajectory(&w, &x0, 50, 2.0, 1234, Some(1)).unwrap();
        assert_eq!(a, b);
        let c = sample_trajectory(&w, &x0, 50, 2.0, 1235, Some(1)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn draw_count_is_steps_plus_one() {
        let w = wrapped(0.1);
        let x0 = w.stack().initial_params();
        for (scale, horizon) in [(10u64, 1.0), (7, 2.5), (100, 0.333)] {
            let rec = sample_trajectory(&w, &x0, scale, horizon, 9, None).unwrap();
            assert_eq!(rec.steps, step_count(scale, horizon));
            assert_eq!(rec.rng_draws, rec.steps + 1);
        }
    }

    #[test]
    fn alpha_zero_keeps_params_constant() {
        let w = wrapped(0.0);
        let x0 = w.stack().initial_params();
        let rec = sample_trajectory(&w, &x0, 20, 3.0, 5, Some(1)).unwrap();
        for snap in &rec.snapshots {
            assert_eq!(snap.params, x0);
        }
    }

    #[test]
    fn snapshots_satisfy_update_recursion_at_stride_one() {
        let w = wrapped(0.2);
        let x0 = w.stack().initial_params();
        let scale = 7u64;
        let rec = sample_trajectory(&w, &x0, scale, 40.0, 17, Some(1)).unwrap();
        for pair in rec.snapshots.windows(2) {
            let (prev, next) = (&pair[0], &pair[1]);
            let (_, inc) = w
                .reward_and_increment(&prev.params, prev.state, scale)
                .unwrap();
            for j in 0..w.dim() {
                let expected = prev.params[j] + inc[j];
                assert!(
                    (next.params[j] - expected).abs() < 1e-15,
                    "step {} coord {}",
                    prev.n,
                    j
                );
            }
        }
    }

    #[test]
    fn final_snapshot_always_recorded() {
        let w = wrapped(0.1);
        let x0 = w.stack().initial_params();
        let rec = sample_trajectory(&w, &x0, 10, 2.5, 3, Some(7)).unwrap();
        assert_eq!(rec.steps, 25);
        assert_eq!(rec.snapshots.last().unwrap().n, 25);
    }

    #[test]
    fn coupled_chains_start_equal_and_stay_equal_when_frozen() {
        let w = wrapped(0.0);
        let x0 = w.stack().initial_params();
        let rec = sample_coupled(&w, &x0, 100, 1.0, 77).unwrap();
        assert!(rec.equal.iter().all(|&e| e));
        assert_eq!(rec.first_disagreement, None);
        assert_eq!(rec.live, rec.frozen);
    }

    #[test]
    fn coupled_live_chain_matches_solo_trajectory() {
        // The live half of a coupled run sees the same uniforms as a solo
        // run with the same seed, so the state sequences must agree.
        let w = wrapped(0.3);
        let x0 = w.stack().initial_params();
        let coupled = sample_coupled(&w, &x0, 11, 3.0, 21).unwrap();
        let solo = sample_trajectory(&w, &x0, 11, 3.0, 21, Some(1)).unwrap();
        for snap in &solo.snapshots {
            assert_eq!(coupled.live[snap.n as usize] as usize, snap.state);
        }
    }

    #[test]
    fn occupancy_error_rejects_bad_inputs() {
        let w = wrapped(0.1);
        let x0 = w.stack().initial_params();
        assert!(occupancy_error(&w, &x0, 0, 0, 1).is_err());
        assert!(occupancy_error(&w, &x0, w.size(), 10, 1).is_err());
    }

    #[test]
    fn occupancy_error_zero_for_point_mass_chain() {
        // A single wrapped state: the occupancy frequency is exactly the
        // stationary mass, whatever the seed or step count.
        let game = crate::game::MarkovGame::new(
            1,
            vec![1],
            vec![vec![vec![1.0]]],
            vec![vec![vec![0.7]]],
            vec![1.0],
        )
        .unwrap();
        let w = presets::standard_wrapped(game, presets::QParams::default()).unwrap();
        for seed in [1, 2, 3] {
            assert_eq!(occupancy_error(&w, &[0.2], 0, 1000, seed).unwrap(), 0.0);
        }
    }

    #[test]
    fn occupancy_error_is_deterministic_and_small_for_long_runs() {
        let w = wrapped(0.1);
        let x0 = w.stack().initial_params();
        let a = occupancy_error(&w, &x0, 2, 20_000, 3).unwrap();
        let b = occupancy_error(&w, &x0, 2, 20_000, 3).unwrap();
        assert_eq!(a, b);
        assert!(a < 0.05, "occupancy error {}", a);
    }
}
