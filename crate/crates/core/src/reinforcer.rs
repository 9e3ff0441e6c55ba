//! Learning agents: parameters, additive update rule, and policy.
//!
//! A reinforcer owns a parameter block, produces an additive increment for
//! each observed transition, and maps parameters to action probabilities.
//! The concrete instance here is a tabular Q-learner with a softmax policy
//! mixed with uniform exploration:
//!
//! ```text
//! increment at (a, s):  alpha * (r + gamma * max_b q[b][s'] - q[a][s])
//! policy:               (1 - eps) * softmax(q[.][s] / tau) + eps / A
//! ```
//!
//! Parameter blocks are laid out action-major: coordinate `a * S + s`.
//! A stack of reinforcers concatenates blocks in player order, which fixes
//! the global coordinate layout (player-major, then action, then state).

use crate::dist::Distribution;
use crate::error::{Error, Result};

/// Increment table for one Q-learning transition: zero everywhere except at
/// `(own_action, state)`, where it carries the scaled Bellman residual.
/// Returned as an increment so the caller owns the sum `x + f` and any
/// scaling of `f`.
pub fn q_update(
    q: &[f64],
    n_actions: usize,
    n_states: usize,
    state: usize,
    own_action: usize,
    reward: f64,
    next_state: usize,
    alpha: f64,
    gamma: f64,
) -> Result<Vec<f64>> {
    if q.len() != n_actions * n_states {
        return Err(Error::DimensionMismatch(format!(
            "q table has {} entries, expected {}",
            q.len(),
            n_actions * n_states
        )));
    }
    if state >= n_states || next_state >= n_states {
        return Err(Error::IndexOutOfRange(format!(
            "state {} / next state {} (have {})",
            state, next_state, n_states
        )));
    }
    if own_action >= n_actions {
        return Err(Error::IndexOutOfRange(format!(
            "action {} (have {})",
            own_action, n_actions
        )));
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidParameter(format!(
            "gamma {} outside [0, 1)",
            gamma
        )));
    }
    // Ties in the Bellman target need no resolution: only the max value
    // enters, not which action attains it.
    let mut target_max = f64::NEG_INFINITY;
    for b in 0..n_actions {
        target_max = target_max.max(q[b * n_states + next_state]);
    }
    let mut out = vec![0.0; q.len()];
    let at = own_action * n_states + state;
    out[at] = alpha * (reward + gamma * target_max - q[at]);
    Ok(out)
}

/// Softmax-with-exploration action distribution at `state`.
///
/// Computed with max-subtraction so small temperatures cannot overflow.
/// Every probability is at least `epsilon / n_actions`.
pub fn softmax_policy(
    q: &[f64],
    n_actions: usize,
    n_states: usize,
    state: usize,
    tau: f64,
    epsilon: f64,
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; n_actions];
    softmax_policy_into(q, n_actions, n_states, state, tau, epsilon, &mut out)?;
    Ok(out)
}

pub fn softmax_policy_into(
    q: &[f64],
    n_actions: usize,
    n_states: usize,
    state: usize,
    tau: f64,
    epsilon: f64,
    out: &mut [f64],
) -> Result<()> {
    if q.len() != n_actions * n_states {
        return Err(Error::DimensionMismatch(format!(
            "q table has {} entries, expected {}",
            q.len(),
            n_actions * n_states
        )));
    }
    if state >= n_states {
        return Err(Error::IndexOutOfRange(format!(
            "state {} (have {})",
            state, n_states
        )));
    }
    if out.len() != n_actions {
        return Err(Error::DimensionMismatch(
            "policy buffer length != action count".into(),
        ));
    }
    if !(tau > 0.0) {
        // A hard max would break the continuity the fluid limit needs.
        return Err(Error::InvalidParameter(format!(
            "softmax temperature must be positive, got {}",
            tau
        )));
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::InvalidParameter(format!(
            "exploration rate {} outside [0, 1]",
            epsilon
        )));
    }
    let mut hottest = f64::NEG_INFINITY;
    for a in 0..n_actions {
        hottest = hottest.max(q[a * n_states + state] / tau);
    }
    let mut sum = 0.0;
    for (a, slot) in out.iter_mut().enumerate() {
        let e = (q[a * n_states + state] / tau - hottest).exp();
        *slot = e;
        sum += e;
    }
    let floor = epsilon / n_actions as f64;
    for slot in out.iter_mut() {
        *slot = (1.0 - epsilon) * (*slot / sum) + floor;
    }
    Ok(())
}

/// Radius of the sup-norm ball that traps the parameters:
/// `max(x0_norm, r_bar / (1 - gamma))`.
pub fn param_ball_radius(x0_norm: f64, r_bar: f64, gamma: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidParameter(format!(
            "gamma {} outside [0, 1)",
            gamma
        )));
    }
    Ok(x0_norm.max(r_bar / (1.0 - gamma)))
}

/// The reinforcer contract: an initial parameter block, an additive update,
/// and a policy. Implementations must be pure in the parameters so that
/// stacks can be shared across simulation workers.
pub trait Reinforcer: Send + Sync {
    fn n_actions(&self) -> usize;
    fn n_states(&self) -> usize;

    fn param_dim(&self) -> usize {
        self.n_actions() * self.n_states()
    }

    fn initial_params(&self) -> &[f64];

    /// Additive increment for one observed transition, given this player's
    /// own action and reward. Zero-padding conventions are up to the
    /// implementation; the result has `param_dim()` entries.
    fn increment(
        &self,
        params: &[f64],
        own_action: usize,
        reward: f64,
        state: usize,
        next_state: usize,
    ) -> Result<Vec<f64>>;

    /// Action distribution at `state` written into `out`.
    fn policy_into(&self, params: &[f64], state: usize, out: &mut [f64]) -> Result<()>;

    fn policy(&self, params: &[f64], state: usize) -> Result<Distribution> {
        let mut out = vec![0.0; self.n_actions()];
        self.policy_into(params, state, &mut out)?;
        Distribution::new(out)
    }

    /// Uniform lower bound on every action probability; 0 if none holds.
    fn policy_floor(&self) -> f64;

    /// Mass of explicit uniform exploration mixed into the policy.
    fn exploration_rate(&self) -> f64;

    /// Analytic Lipschitz bound on `params -> policy(state)` in the
    /// `‖Δpolicy‖_1 / ‖Δparams‖_∞` sense, when one is known.
    fn policy_lipschitz_bound(&self) -> Option<f64> {
        None
    }

    /// Radius of the invariant parameter ball for this player, given the
    /// sup norm of the stacked initial parameters and the game's maximum
    /// absolute reward.
    fn ball_radius(&self, x0_norm: f64, r_bar: f64) -> Result<f64>;
}

/// Tabular Q-learner with softmax + uniform-exploration policy.
#[derive(Debug, Clone)]
pub struct QTableReinforcer {
    n_actions: usize,
    n_states: usize,
    alpha: f64,
    gamma: f64,
    tau: f64,
    epsilon: f64,
    initial: Vec<f64>,
}

impl QTableReinforcer {
    /// Zero-initialized table. `alpha` may be zero (frozen learner), which
    /// several diagnostics rely on; `gamma` must lie in `[0, 1)`, `tau`
    /// must be positive, `epsilon` in `[0, 1]`.
    pub fn new(
        n_actions: usize,
        n_states: usize,
        alpha: f64,
        gamma: f64,
        tau: f64,
        epsilon: f64,
    ) -> Result<Self> {
        Self::with_initial_fill(n_actions, n_states, alpha, gamma, tau, epsilon, 0.0)
    }

    pub fn with_initial_fill(
        n_actions: usize,
        n_states: usize,
        alpha: f64,
        gamma: f64,
        tau: f64,
        epsilon: f64,
        fill: f64,
    ) -> Result<Self> {
        let initial = vec![fill; n_actions * n_states];
        Self::with_initial_table_flat(n_actions, n_states, alpha, gamma, tau, epsilon, initial)
    }

    /// `table[a][s]` layout, matching the flat coordinate `a * S + s`.
    pub fn with_initial_table(
        n_actions: usize,
        n_states: usize,
        alpha: f64,
        gamma: f64,
        tau: f64,
        epsilon: f64,
        table: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if table.len() != n_actions || table.iter().any(|row| row.len() != n_states) {
            return Err(Error::DimensionMismatch(format!(
                "initial q table must be {} x {}",
                n_actions, n_states
            )));
        }
        let flat = table.into_iter().flatten().collect();
        Self::with_initial_table_flat(n_actions, n_states, alpha, gamma, tau, epsilon, flat)
    }

    fn with_initial_table_flat(
        n_actions: usize,
        n_states: usize,
        alpha: f64,
        gamma: f64,
        tau: f64,
        epsilon: f64,
        initial: Vec<f64>,
    ) -> Result<Self> {
        if n_actions == 0 || n_states == 0 {
            return Err(Error::DimensionMismatch(
                "q table needs at least one action and one state".into(),
            ));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidParameter(format!(
                "alpha {} outside [0, 1]",
                alpha
            )));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::InvalidParameter(format!(
                "gamma {} outside [0, 1)",
                gamma
            )));
        }
        if !(tau > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tau must be positive, got {}",
                tau
            )));
        }
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::InvalidParameter(format!(
                "epsilon {} outside [0, 1]",
                epsilon
            )));
        }
        if initial.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "initial q table has non-finite entries".into(),
            ));
        }
        Ok(QTableReinforcer {
            n_actions,
            n_states,
            alpha,
            gamma,
            tau,
            epsilon,
            initial,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Same learner with the learning rate multiplied by `factor`.
    pub fn scaled_alpha(&self, factor: f64) -> Result<Self> {
        let mut copy = self.clone();
        let alpha = self.alpha * factor;
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidParameter(format!(
                "scaled alpha {} outside [0, 1]",
                alpha
            )));
        }
        copy.alpha = alpha;
        Ok(copy)
    }
}

impl Reinforcer for QTableReinforcer {
    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn n_states(&self) -> usize {
        self.n_states
    }

    fn initial_params(&self) -> &[f64] {
        &self.initial
    }

    fn increment(
        &self,
        params: &[f64],
        own_action: usize,
        reward: f64,
        state: usize,
        next_state: usize,
    ) -> Result<Vec<f64>> {
        q_update(
            params,
            self.n_actions,
            self.n_states,
            state,
            own_action,
            reward,
            next_state,
            self.alpha,
            self.gamma,
        )
    }

    fn policy_into(&self, params: &[f64], state: usize, out: &mut [f64]) -> Result<()> {
        softmax_policy_into(
            params,
            self.n_actions,
            self.n_states,
            state,
            self.tau,
            self.epsilon,
            out,
        )
    }

    fn policy_floor(&self) -> f64 {
        self.epsilon / self.n_actions as f64
    }

    fn exploration_rate(&self) -> f64 {
        self.epsilon
    }

    fn policy_lipschitz_bound(&self) -> Option<f64> {
        // Sum of absolute softmax Jacobian entries is at most
        // 2 (1 - 1/A) / tau, scaled by the non-exploring mass.
        let a = self.n_actions as f64;
        Some((1.0 - self.epsilon) * 2.0 * (1.0 - 1.0 / a) / self.tau)
    }

    fn ball_radius(&self, x0_norm: f64, r_bar: f64) -> Result<f64> {
        param_ball_radius(x0_norm, r_bar, self.gamma)
    }
}

/// All players' reinforcers stacked into one parameter vector of dimension
/// `d = Σ_i A_i * S`, blocks in player order.
pub struct ReinforcerStack {
    members: Vec<Box<dyn Reinforcer>>,
    offsets: Vec<usize>,
    dim: usize,
}

impl ReinforcerStack {
    pub fn new(members: Vec<Box<dyn Reinforcer>>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::DimensionMismatch("empty reinforcer stack".into()));
        }
        let mut offsets = Vec::with_capacity(members.len());
        let mut dim = 0;
        for m in &members {
            offsets.push(dim);
            dim += m.param_dim();
        }
        Ok(ReinforcerStack {
            members,
            offsets,
            dim,
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn offset(&self, player: usize) -> usize {
        self.offsets[player]
    }

    pub fn member(&self, player: usize) -> &dyn Reinforcer {
        self.members[player].as_ref()
    }

    /// Player `i`'s block of the stacked vector.
    pub fn block<'a>(&self, x: &'a [f64], player: usize) -> &'a [f64] {
        let start = self.offsets[player];
        &x[start..start + self.members[player].param_dim()]
    }

    /// Stacked initial parameters `X0`.
    pub fn initial_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim);
        for m in &self.members {
            out.extend_from_slice(m.initial_params());
        }
        out
    }

    /// Concatenated increment `⊕_i f_i` for one transition: each player's
    /// own action and reward applied to its own block.
    pub fn aggregate_update(
        &self,
        x: &[f64],
        actions: &[usize],
        rewards: &[f64],
        state: usize,
        next_state: usize,
    ) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "parameter vector has {} entries, expected {}",
                x.len(),
                self.dim
            )));
        }
        if actions.len() != self.members.len() || rewards.len() != self.members.len() {
            return Err(Error::DimensionMismatch(
                "actions/rewards length != player count".into(),
            ));
        }
        let mut out = Vec::with_capacity(self.dim);
        for (i, m) in self.members.iter().enumerate() {
            let inc = m.increment(self.block(x, i), actions[i], rewards[i], state, next_state)?;
            out.extend_from_slice(&inc);
        }
        Ok(out)
    }

    pub fn player_policy_into(
        &self,
        player: usize,
        x: &[f64],
        state: usize,
        out: &mut [f64],
    ) -> Result<()> {
        self.members[player].policy_into(self.block(x, player), state, out)
    }

    /// Smallest per-action probability floor across players.
    pub fn min_policy_floor(&self) -> f64 {
        self.members
            .iter()
            .map(|m| m.policy_floor())
            .fold(f64::INFINITY, f64::min)
    }

    /// Smallest explicit exploration rate across players.
    pub fn min_exploration_rate(&self) -> f64 {
        self.members
            .iter()
            .map(|m| m.exploration_rate())
            .fold(f64::INFINITY, f64::min)
    }

    /// Sup norm of the stacked initial parameters.
    pub fn initial_sup_norm(&self) -> f64 {
        self.members
            .iter()
            .flat_map(|m| m.initial_params())
            .fold(0.0f64, |acc, &v| acc.max(v.abs()))
    }

    /// Radius of the stacked parameter ball: the largest per-player radius
    /// computed against the global `‖X0‖∞`.
    pub fn ball_radius(&self, r_bar: f64) -> Result<f64> {
        let x0 = self.initial_sup_norm();
        let mut radius = 0.0f64;
        for m in &self.members {
            radius = radius.max(m.ball_radius(x0, r_bar)?);
        }
        Ok(radius)
    }
}

impl std::fmt::Debug for ReinforcerStack {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ReinforcerStack")
            .field("players", &self.members.len())
            .field("dim", &self.dim)
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q2x2(alpha: f64) -> QTableReinforcer {
        QTableReinforcer::new(2, 2, alpha, 0.5, 1.0, 0.0).unwrap()
    }

    #[test]
    fn q_update_hand_value() {
        let q = vec![0.0; 4];
        let inc = q_update(&q, 2, 2, 0, 0, 1.0, 1, 0.1, 0.5).unwrap();
        assert_eq!(inc[0], 0.1); // 0.1 * (1 + 0.5*0 - 0)
        assert!(inc[1..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn q_update_alpha_zero_is_zero() {
        let q = vec![0.3, -0.7, 0.2, 0.9];
        let inc = q_update(&q, 2, 2, 1, 1, -1.0, 0, 0.0, 0.5).unwrap();
        assert!(inc.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn q_update_bellman_fixed_point_is_zero() {
        // Flat layout a * S + s: set q[0][1] = 2, q[1][1] = 1, and the
        // played pair q[0][0] to its target r + gamma * max_b q[b][1] = 2.
        let mut q = vec![0.0; 4];
        q[1] = 2.0;
        q[3] = 1.0;
        q[0] = 1.0 + 0.5 * 2.0;
        let inc = q_update(&q, 2, 2, 0, 0, 1.0, 1, 0.1, 0.5).unwrap();
        assert!(inc.iter().all(|&v| v.abs() < 1e-15));
    }

    #[test]
    fn q_update_support_is_single_coordinate() {
        let q = vec![0.1, 0.2, 0.3, 0.4];
        let inc = q_update(&q, 2, 2, 1, 1, 0.7, 0, 0.3, 0.5).unwrap();
        let played = 1 * 2 + 1; // (a = 1, s = 1) in the a * S + s layout
        for (i, &v) in inc.iter().enumerate() {
            if i != played {
                assert_eq!(v, 0.0, "coordinate {}", i);
            }
        }
        assert!(inc[played] != 0.0);
    }

    #[test]
    fn softmax_equal_values_is_uniform() {
        for eps in [0.0, 0.1, 0.7] {
            let p = softmax_policy(&[0.3; 4], 2, 2, 0, 0.5, eps).unwrap();
            assert!((p[0] - 0.5).abs() < 1e-15);
            assert!((p[1] - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_full_exploration_ignores_q() {
        let q = vec![5.0, -3.0, 0.0, 0.0];
        let p = softmax_policy(&q, 2, 2, 0, 0.5, 1.0).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15);
        assert!((p[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn softmax_hand_value() {
        // q-values (1, 0) at state 0, tau = 1, eps = 0.
        let q = vec![1.0, 0.0, 0.0, 0.0]; // layout a*S+s with S=2
        let p = softmax_policy(&q, 2, 2, 0, 1.0, 0.0).unwrap();
        assert!((p[0] - 0.7310585786300049).abs() < 1e-15, "{}", p[0]);
        assert!((p[1] - 0.2689414213699951).abs() < 1e-15, "{}", p[1]);
    }

    #[test]
    fn softmax_sum_and_floor() {
        let q = vec![40.0, -35.0, 2.0, -1.0];
        let p = softmax_policy(&q, 2, 2, 1, 0.25, 0.1).unwrap();
        let sum: f64 = p.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&v| v >= 0.1 / 2.0 - 1e-15));
    }

    #[test]
    fn softmax_zero_tau_rejected() {
        assert!(matches!(
            softmax_policy(&[0.0; 4], 2, 2, 0, 0.0, 0.1),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn ball_radius_cases() {
        assert_eq!(param_ball_radius(0.0, 1.0, 0.5).unwrap(), 2.0);
        assert_eq!(param_ball_radius(3.0, 0.0, 0.9).unwrap(), 3.0);
        assert!((param_ball_radius(10.0, 1.0, 0.9).unwrap() - 10.0).abs() < 1e-12);
        assert!(param_ball_radius(1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn aggregate_zero_everything_is_zero() {
        let stack = ReinforcerStack::new(vec![
            Box::new(q2x2(0.1)),
            Box::new(q2x2(0.1)),
        ])
        .unwrap();
        let x = vec![0.0; stack.dim()];
        let inc = stack
            .aggregate_update(&x, &[0, 1], &[0.0, 0.0], 0, 1)
            .unwrap();
        assert!(inc.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn aggregate_single_player_embeds_q_update() {
        let r = q2x2(0.1);
        let stack = ReinforcerStack::new(vec![Box::new(r.clone())]).unwrap();
        let x = vec![0.0; 4];
        let via_stack = stack.aggregate_update(&x, &[1], &[0.5], 1, 0).unwrap();
        let direct = r.increment(&x, 1, 0.5, 1, 0).unwrap();
        assert_eq!(via_stack, direct);
    }

    #[test]
    fn aggregate_symmetric_players_give_identical_blocks() {
        let stack = ReinforcerStack::new(vec![
            Box::new(q2x2(0.2)),
            Box::new(q2x2(0.2)),
        ])
        .unwrap();
        let x = vec![0.25; stack.dim()];
        let inc = stack
            .aggregate_update(&x, &[1, 1], &[0.5, 0.5], 0, 1)
            .unwrap();
        assert_eq!(&inc[..4], &inc[4..]);
    }

    #[test]
    fn stack_layout_offsets() {
        let stack = ReinforcerStack::new(vec![
            Box::new(QTableReinforcer::new(3, 2, 0.1, 0.9, 0.5, 0.1).unwrap()),
            Box::new(q2x2(0.1)),
        ])
        .unwrap();
        assert_eq!(stack.dim(), 6 + 4);
        assert_eq!(stack.offset(0), 0);
        assert_eq!(stack.offset(1), 6);
    }
}
