//! The wrapped chain: states, joint actions, and successor states fused
//! into a single Markov chain driven by the learners' parameters.
//!
//! The wrapped-state space is `E = S x A x S`, a triple
//! `g = (s_c, a, s_n)` of current state, joint action, and next state —
//! exactly the information one parameter update consumes. Enumeration is
//! lexicographic (`s_c` major, then joint action, then `s_n`), so
//! `|E| = S^2 * ∏_i A_i` and the index of `g` is `(s_c * A + a) * S + s_n`.
//!
//! For a parameter point `x` and scale `N`, the kernel on `E` is
//!
//! ```text
//! P(g, g') = 1{s_n = s_c'} * pi(x + f(x, g)/N, s_c')(a') * T(s_c', a')(s_n')
//! ```
//!
//! where `f` is the stacked increment and `pi` the joint policy (product
//! over players). The distinguished scale `Scale::Limit` evaluates the
//! policy at `x` itself; that limit kernel is the one whose invariant
//! measure defines the drift of the fluid ODE, so it is a first-class case
//! here rather than a separate code path.

use std::io::{self, Write};

use crate::dist::Distribution;
use crate::error::{Error, Result};
use crate::game::MarkovGame;
use crate::matrix::RowMatrix;
use crate::reinforcer::ReinforcerStack;

/// Row sums of a built kernel must match 1 within this tolerance.
pub const KERNEL_ROW_TOL: f64 = 1e-10;

/// Update scale of the wrapped chain: increments are `f / N`, or frozen to
/// the parameter point itself in the limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Finite(u64),
    Limit,
}

/// A Markov game wired to a stack of reinforcers. Immutable and shareable;
/// every kernel evaluation is a pure function of the parameter point.
#[derive(Debug)]
pub struct WrappedGame {
    game: MarkovGame,
    stack: ReinforcerStack,
    size: usize,
}

impl WrappedGame {
    /// Wire a game to its players, checking that each reinforcer's table
    /// shape matches the game.
    pub fn new(game: MarkovGame, stack: ReinforcerStack) -> Result<Self> {
        if stack.len() != game.n_players() {
            return Err(Error::DimensionMismatch(format!(
                "{} reinforcers for {} players",
                stack.len(),
                game.n_players()
            )));
        }
        for i in 0..stack.len() {
            let m = stack.member(i);
            if m.n_actions() != game.n_actions(i) {
                return Err(Error::DimensionMismatch(format!(
                    "player {} reinforcer has {} actions, game has {}",
                    i,
                    m.n_actions(),
                    game.n_actions(i)
                )));
            }
            if m.n_states() != game.n_states() {
                return Err(Error::DimensionMismatch(format!(
                    "player {} reinforcer has {} states, game has {}",
                    i,
                    m.n_states(),
                    game.n_states()
                )));
            }
        }
        let size = game.n_states() * game.joint_actions() * game.n_states();
        Ok(WrappedGame { game, stack, size })
    }

    pub fn game(&self) -> &MarkovGame {
        &self.game
    }

    pub fn stack(&self) -> &ReinforcerStack {
        &self.stack
    }

    /// `|E| = S^2 * ∏_i A_i`.
    pub fn size(&self) -> usize {
        self.size
    }

    /// Dimension `d` of the stacked parameter vector.
    pub fn dim(&self) -> usize {
        self.stack.dim()
    }

    #[inline]
    pub fn encode(&self, s_c: usize, joint_action: usize, s_n: usize) -> usize {
        (s_c * self.game.joint_actions() + joint_action) * self.game.n_states() + s_n
    }

    #[inline]
    pub fn decode(&self, g: usize) -> (usize, usize, usize) {
        let s = self.game.n_states();
        let a = self.game.joint_actions();
        let s_n = g % s;
        let rest = g / s;
        (rest / a, rest % a, s_n)
    }

    /// Per-player rewards read off the triple: `R_i(s_c, a)`.
    pub fn rewards_at(&self, g: usize) -> Vec<f64> {
        let (s_c, a, _) = self.decode(g);
        (0..self.game.n_players())
            .map(|i| self.game.reward(i, s_c, a))
            .collect()
    }

    /// Unscaled stacked increment `f(x, g)`.
    pub fn increment(&self, x: &[f64], g: usize) -> Result<Vec<f64>> {
        let (s_c, a, s_n) = self.decode(g);
        let actions = self.game.indexer().decode(a)?;
        let rewards = self.rewards_at(g);
        self.stack.aggregate_update(x, &actions, &rewards, s_c, s_n)
    }

    /// Per-player rewards at `g` together with the scaled increment
    /// `f(x, g) / N`. At `N = 1` this is the unscaled process.
    pub fn reward_and_increment(
        &self,
        x: &[f64],
        g: usize,
        scale: u64,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        if scale == 0 {
            return Err(Error::InvalidParameter("scale must be >= 1".into()));
        }
        let rewards = self.rewards_at(g);
        let mut inc = self.increment(x, g)?;
        let inv_n = 1.0 / scale as f64;
        for v in inc.iter_mut() {
            *v *= inv_n;
        }
        Ok((rewards, inc))
    }

    /// The parameter point the policy is evaluated at when leaving `g`:
    /// `x + f(x, g)/N` for a finite scale, `x` itself in the limit.
    pub fn policy_basis(&self, x: &[f64], g: usize, scale: Scale) -> Result<Vec<f64>> {
        match scale {
            Scale::Limit => Ok(x.to_vec()),
            Scale::Finite(n) => {
                if n == 0 {
                    return Err(Error::InvalidParameter("scale must be >= 1".into()));
                }
                let inc = self.increment(x, g)?;
                let inv_n = 1.0 / n as f64;
                let mut y = x.to_vec();
                for (yj, fj) in y.iter_mut().zip(&inc) {
                    *yj += fj * inv_n;
                }
                Ok(y)
            }
        }
    }

    /// Kernel row restricted to its only nonzero block: probabilities of
    /// the `A * S` successors `(block_state, a', s_n')`, in wrapped-index
    /// order, with the joint policy evaluated at `y`.
    pub fn row_block_into(&self, y: &[f64], block_state: usize, out: &mut [f64]) -> Result<()> {
        let s = self.game.n_states();
        let a_total = self.game.joint_actions();
        if out.len() != a_total * s {
            return Err(Error::DimensionMismatch(format!(
                "row block buffer has {} entries, expected {}",
                out.len(),
                a_total * s
            )));
        }
        let n_players = self.game.n_players();
        let mut policies: Vec<Vec<f64>> = Vec::with_capacity(n_players);
        for i in 0..n_players {
            let mut p = vec![0.0; self.game.n_actions(i)];
            self.stack.player_policy_into(i, y, block_state, &mut p)?;
            policies.push(p);
        }
        let mut actions = vec![0usize; n_players];
        for a in 0..a_total {
            self.game.indexer().decode_into(a, &mut actions)?;
            let mut joint_prob = 1.0;
            for (i, &ai) in actions.iter().enumerate() {
                joint_prob *= policies[i][ai];
            }
            let t_row = self.game.transition_row(block_state, a);
            for s_n in 0..s {
                out[a * s + s_n] = joint_prob * t_row[s_n];
            }
        }
        Ok(())
    }

    /// Dense `|E| x |E|` kernel at parameter point `x`. Every row sums to 1
    /// within [`KERNEL_ROW_TOL`]; the construction guarantees it, the check
    /// is kept as a hard invariant.
    pub fn transition_matrix(&self, x: &[f64], scale: Scale) -> Result<RowMatrix> {
        if x.len() != self.stack.dim() {
            return Err(Error::DimensionMismatch(format!(
                "parameter point has {} entries, expected {}",
                x.len(),
                self.stack.dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "parameter point has non-finite entries".into(),
            ));
        }
        let s = self.game.n_states();
        let a_total = self.game.joint_actions();
        let block = a_total * s;
        let mut m = RowMatrix::zeros(self.size);
        for g in 0..self.size {
            let (_, _, s_n) = self.decode(g);
            let y = self.policy_basis(x, g, scale)?;
            let row = m.row_mut(g);
            let start = s_n * block;
            self.row_block_into(&y, s_n, &mut row[start..start + block])?;
        }
        let dev = m.max_row_sum_deviation();
        if dev > KERNEL_ROW_TOL {
            return Err(Error::InvalidDistribution(format!(
                "kernel row sum deviates from 1 by {}",
                dev
            )));
        }
        Ok(m)
    }

    /// Initial wrapped distribution with the policy evaluated at `x`:
    /// `mu0(s_c, a, s_n) = nu0(s_c) * pi(x, s_c)(a) * T(s_c, a)(s_n)`.
    /// No increment and no scale enter, so mu0 does not depend on `N`.
    pub fn initial_distribution(&self, x: &[f64]) -> Result<Distribution> {
        if x.len() != self.stack.dim() {
            return Err(Error::DimensionMismatch(format!(
                "parameter point has {} entries, expected {}",
                x.len(),
                self.stack.dim()
            )));
        }
        let s = self.game.n_states();
        let a_total = self.game.joint_actions();
        let n_players = self.game.n_players();
        let nu0 = self.game.initial_law();

        let mut policies = vec![Vec::new(); s];
        for (s_c, per_state) in policies.iter_mut().enumerate() {
            for i in 0..n_players {
                let mut p = vec![0.0; self.game.n_actions(i)];
                self.stack.player_policy_into(i, x, s_c, &mut p)?;
                per_state.push(p);
            }
        }

        let mut probs = vec![0.0; self.size];
        let mut actions = vec![0usize; n_players];
        for s_c in 0..s {
            for a in 0..a_total {
                self.game.indexer().decode_into(a, &mut actions)?;
                let mut joint_prob = 1.0;
                for (i, &ai) in actions.iter().enumerate() {
                    joint_prob *= policies[s_c][i][ai];
                }
                let t_row = self.game.transition_row(s_c, a);
                for s_n in 0..s {
                    probs[self.encode(s_c, a, s_n)] = nu0.get(s_c) * joint_prob * t_row[s_n];
                }
            }
        }
        Distribution::new(probs)
    }

    /// Radius of the sup-norm ball the stacked parameters stay in.
    pub fn ball_radius(&self) -> Result<f64> {
        self.stack.ball_radius(self.game.max_abs_reward())
    }

    /// CSV dump of a kernel: header row of wrapped triples `s_c.a.s_n`,
    /// one labeled row per wrapped state.
    pub fn write_kernel_csv<W: Write>(&self, m: &RowMatrix, mut w: W) -> io::Result<()> {
        let label = |g: usize| {
            let (s_c, a, s_n) = self.decode(g);
            format!("{}.{}.{}", s_c, a, s_n)
        };
        write!(w, "g")?;
        for g in 0..self.size {
            write!(w, ",{}", label(g))?;
        }
        writeln!(w)?;
        for g in 0..self.size {
            write!(w, "{}", label(g))?;
            for &p in m.row(g) {
                write!(w, ",{}", p)?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reinforcer::QTableReinforcer;

    fn single_player_wrapped(alpha: f64) -> WrappedGame {
        let game = MarkovGame::new(
            2,
            vec![2],
            vec![
                vec![vec![0.8, 0.2], vec![0.3, 0.7]],
                vec![vec![0.6, 0.4], vec![0.2, 0.8]],
            ],
            vec![vec![vec![0.5, 1.0], vec![-0.5, -1.0]]],
            vec![0.5, 0.5],
        )
        .unwrap();
        let stack = ReinforcerStack::new(vec![Box::new(
            QTableReinforcer::new(2, 2, alpha, 0.9, 0.5, 0.1).unwrap(),
        )])
        .unwrap();
        WrappedGame::new(game, stack).unwrap()
    }

    fn two_player_wrapped(alpha: f64) -> WrappedGame {
        let t = |war: [f64; 3]| -> Vec<Vec<f64>> {
            vec![
                vec![1.0 - war[0], war[0]],
                vec![1.0 - war[1], war[1]],
                vec![1.0 - war[1], war[1]],
                vec![1.0 - war[2], war[2]],
            ]
        };
        let game = MarkovGame::new(
            2,
            vec![2, 2],
            vec![t([0.2, 0.5, 0.8]), t([0.4, 0.7, 0.9])],
            vec![
                vec![vec![0.6, -1.0, 1.0, -0.4], vec![0.2, -1.0, 0.6, -0.8]],
                vec![vec![0.6, 1.0, -1.0, -0.4], vec![0.2, 0.6, -1.0, -0.8]],
            ],
            vec![0.5, 0.5],
        )
        .unwrap();
        let q = QTableReinforcer::new(2, 2, alpha, 0.9, 0.5, 0.1).unwrap();
        let stack =
            ReinforcerStack::new(vec![Box::new(q.clone()), Box::new(q)]).unwrap();
        WrappedGame::new(game, stack).unwrap()
    }

    #[test]
    fn wrapped_size_single_player() {
        assert_eq!(single_player_wrapped(0.1).size(), 8); // 2 * 2 * 2
    }

    #[test]
    fn wrapped_size_two_players() {
        // S^2 * prod A_i = 4 * 4
        assert_eq!(two_player_wrapped(0.1).size(), 16);
    }

    #[test]
    fn index_roundtrip_all() {
        let w = two_player_wrapped(0.1);
        for g in 0..w.size() {
            let (s_c, a, s_n) = w.decode(g);
            assert_eq!(w.encode(s_c, a, s_n), g);
        }
    }

    #[test]
    fn rows_sum_to_one_finite_and_limit() {
        let w = two_player_wrapped(0.1);
        let x = vec![0.3; w.dim()];
        for scale in [Scale::Finite(1), Scale::Finite(50), Scale::Limit] {
            let m = w.transition_matrix(&x, scale).unwrap();
            assert!(m.max_row_sum_deviation() < 1e-12);
        }
    }

    #[test]
    fn alpha_zero_finite_equals_limit_exactly() {
        let w = two_player_wrapped(0.0);
        let x = vec![0.7; w.dim()];
        let finite = w.transition_matrix(&x, Scale::Finite(17)).unwrap();
        let limit = w.transition_matrix(&x, Scale::Limit).unwrap();
        assert_eq!(finite, limit);
    }

    #[test]
    fn blocks_with_wrong_entry_state_are_zero() {
        let w = single_player_wrapped(0.1);
        let x = vec![0.2; w.dim()];
        let m = w.transition_matrix(&x, Scale::Finite(10)).unwrap();
        for g in 0..w.size() {
            let (_, _, s_n) = w.decode(g);
            for g2 in 0..w.size() {
                let (s_c2, _, _) = w.decode(g2);
                if s_c2 != s_n {
                    assert_eq!(m.get(g, g2), 0.0, "entry ({}, {})", g, g2);
                }
            }
        }
    }

    #[test]
    fn initial_distribution_uniform_case() {
        // Uniform nu0, equal q-values (uniform policy), uniform transitions:
        // all 8 wrapped states get mass 1/8.
        let game = MarkovGame::new(
            2,
            vec![2],
            vec![
                vec![vec![0.5, 0.5], vec![0.5, 0.5]],
                vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            ],
            vec![vec![vec![0.0, 0.0], vec![0.0, 0.0]]],
            vec![0.5, 0.5],
        )
        .unwrap();
        let stack = ReinforcerStack::new(vec![Box::new(
            QTableReinforcer::new(2, 2, 0.1, 0.9, 0.5, 0.3).unwrap(),
        )])
        .unwrap();
        let w = WrappedGame::new(game, stack).unwrap();
        let mu0 = w.initial_distribution(&vec![0.0; w.dim()]).unwrap();
        for g in 0..8 {
            assert!((mu0.get(g) - 0.125).abs() < 1e-15);
        }
    }

    #[test]
    fn initial_distribution_point_mass_support() {
        let game = MarkovGame::new(
            2,
            vec![2],
            vec![
                vec![vec![1.0, 0.0], vec![0.0, 1.0]],
                vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            ],
            vec![vec![vec![0.0, 0.0], vec![0.0, 0.0]]],
            vec![0.0, 1.0],
        )
        .unwrap();
        let stack = ReinforcerStack::new(vec![Box::new(
            QTableReinforcer::new(2, 2, 0.1, 0.9, 0.5, 0.1).unwrap(),
        )])
        .unwrap();
        let w = WrappedGame::new(game, stack).unwrap();
        let mu0 = w.initial_distribution(&vec![0.0; w.dim()]).unwrap();
        for g in 0..w.size() {
            let (s_c, _, _) = w.decode(g);
            if s_c != 1 {
                assert_eq!(mu0.get(g), 0.0);
            }
        }
    }

    #[test]
    fn initial_distribution_sums_to_one_randomized() {
        use crate::rng::RngStream;
        let w = two_player_wrapped(0.1);
        let mut r = RngStream::new(99);
        for _ in 0..20 {
            let x: Vec<f64> = (0..w.dim()).map(|_| (r.next_uniform() - 0.5) * 8.0).collect();
            let mu0 = w.initial_distribution(&x).unwrap();
            let sum: f64 = mu0.as_slice().iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn increment_scales_linearly_in_inverse_n() {
        let w = two_player_wrapped(0.1);
        let x = vec![0.4; w.dim()];
        let g = 5;
        let (_, inc_n) = w.reward_and_increment(&x, g, 100).unwrap();
        let (_, inc_2n) = w.reward_and_increment(&x, g, 200).unwrap();
        for (a, b) in inc_n.iter().zip(&inc_2n) {
            assert!((a - 2.0 * b).abs() < 1e-15);
        }
    }

    #[test]
    fn increment_at_scale_one_is_unscaled() {
        let w = two_player_wrapped(0.1);
        let x = vec![-0.3; w.dim()];
        let g = 9;
        let (_, scaled) = w.reward_and_increment(&x, g, 1).unwrap();
        let raw = w.increment(&x, g).unwrap();
        assert_eq!(scaled, raw);
    }

    #[test]
    fn zero_rewards_zero_q_zero_increment() {
        let w = single_player_wrapped(0.1);
        let x = vec![0.0; w.dim()];
        // g = (s_c=0, a=0, s_n=0) has reward 0.5; use a zero-reward game instead.
        let game = MarkovGame::new(
            2,
            vec![2],
            vec![
                vec![vec![0.8, 0.2], vec![0.3, 0.7]],
                vec![vec![0.6, 0.4], vec![0.2, 0.8]],
            ],
            vec![vec![vec![0.0, 0.0], vec![0.0, 0.0]]],
            vec![0.5, 0.5],
        )
        .unwrap();
        let stack = ReinforcerStack::new(vec![Box::new(
            QTableReinforcer::new(2, 2, 0.1, 0.9, 0.5, 0.1).unwrap(),
        )])
        .unwrap();
        let wz = WrappedGame::new(game, stack).unwrap();
        let (rewards, inc) = wz.reward_and_increment(&x, 3, 7).unwrap();
        assert!(rewards.iter().all(|&r| r == 0.0));
        assert!(inc.iter().all(|&v| v == 0.0));
        drop(w);
    }

    #[test]
    fn mismatched_reinforcer_shape_rejected() {
        let game = MarkovGame::new(
            2,
            vec![2],
            vec![
                vec![vec![0.5, 0.5], vec![0.5, 0.5]],
                vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            ],
            vec![vec![vec![0.0, 0.0], vec![0.0, 0.0]]],
            vec![0.5, 0.5],
        )
        .unwrap();
        let stack = ReinforcerStack::new(vec![Box::new(
            QTableReinforcer::new(3, 2, 0.1, 0.9, 0.5, 0.1).unwrap(),
        )])
        .unwrap();
        assert!(matches!(
            WrappedGame::new(game, stack),
            Err(Error::DimensionMismatch(_))
        ));
    }
}
