//! Finite-state, finite-action Markov games in tabular form.
//!
//! A game couples `n_players` agents through a shared state: each round
//! every player picks an action, the joint action drives the state
//! transition `T[s][a][s']` and hands each player a deterministic reward
//! `R^i[s][a]`. States and actions are 0-indexed throughout, and joint
//! actions are flattened lexicographically with player 0 most significant.

use std::fmt;

use crate::dist::Distribution;
use crate::error::{Error, Result};

/// Tolerance for row sums of transition rows and the initial law. Inputs
/// within tolerance are renormalized exactly on construction.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Bijection between joint-action indices and per-player action tuples.
///
/// The encoding is lexicographic with the first player most significant,
/// so for two players with two actions each, `(1, 0)` encodes to 2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointActionIndexer {
    counts: Vec<usize>,
    strides: Vec<usize>,
    total: usize,
}

impl JointActionIndexer {
    pub fn new(counts: &[usize]) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::DimensionMismatch("no players".into()));
        }
        if let Some(i) = counts.iter().position(|&c| c == 0) {
            return Err(Error::DimensionMismatch(format!(
                "player {} has zero actions",
                i
            )));
        }
        let mut strides = vec![1usize; counts.len()];
        for i in (0..counts.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * counts[i + 1];
        }
        let total = counts.iter().product();
        Ok(JointActionIndexer {
            counts: counts.to_vec(),
            strides,
            total,
        })
    }

    pub fn n_players(&self) -> usize {
        self.counts.len()
    }

    pub fn count(&self, player: usize) -> usize {
        self.counts[player]
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// Size of the joint action space, `∏_i A_i`.
    pub fn total(&self) -> usize {
        self.total
    }

    pub fn encode(&self, actions: &[usize]) -> Result<usize> {
        if actions.len() != self.counts.len() {
            return Err(Error::DimensionMismatch(format!(
                "action tuple has {} entries for {} players",
                actions.len(),
                self.counts.len()
            )));
        }
        let mut idx = 0;
        for (i, (&a, &c)) in actions.iter().zip(&self.counts).enumerate() {
            if a >= c {
                return Err(Error::IndexOutOfRange(format!(
                    "action {} for player {} (has {} actions)",
                    a, i, c
                )));
            }
            idx += a * self.strides[i];
        }
        Ok(idx)
    }

    pub fn decode(&self, joint: usize) -> Result<Vec<usize>> {
        let mut out = vec![0; self.counts.len()];
        self.decode_into(joint, &mut out)?;
        Ok(out)
    }

    pub fn decode_into(&self, joint: usize, out: &mut [usize]) -> Result<()> {
        if joint >= self.total {
            return Err(Error::IndexOutOfRange(format!(
                "joint action {} (space has {})",
                joint, self.total
            )));
        }
        if out.len() != self.counts.len() {
            return Err(Error::DimensionMismatch(
                "decode buffer length != player count".into(),
            ));
        }
        let mut rest = joint;
        for (slot, &stride) in out.iter_mut().zip(&self.strides) {
            *slot = rest / stride;
            rest %= stride;
        }
        Ok(())
    }
}

/// One probabilistic violation found while validating a game.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    RowSum {
        state: usize,
        joint_action: usize,
        sum: f64,
    },
    NegativeTransition {
        state: usize,
        joint_action: usize,
        next_state: usize,
        value: f64,
    },
    InitialLawSum {
        sum: f64,
    },
    NegativeInitialLaw {
        state: usize,
        value: f64,
    },
    NonFiniteReward {
        player: usize,
        state: usize,
        joint_action: usize,
        value: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::RowSum {
                state,
                joint_action,
                sum,
            } => write!(f, "row sum {} at (s={}, a={})", sum, state, joint_action),
            Violation::NegativeTransition {
                state,
                joint_action,
                next_state,
                value,
            } => write!(
                f,
                "negative probability {} at (s={}, a={}, s'={})",
                value, state, joint_action, next_state
            ),
            Violation::InitialLawSum { sum } => {
                write!(f, "initial law sums to {}", sum)
            }
            Violation::NegativeInitialLaw { state, value } => {
                write!(f, "negative initial probability {} at s={}", value, state)
            }
            Violation::NonFiniteReward {
                player,
                state,
                joint_action,
                value,
            } => write!(
                f,
                "non-finite reward {} for player {} at (s={}, a={})",
                value, player, state, joint_action
            ),
        }
    }
}

/// Validation outcome: empty iff the tensors satisfy every invariant.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            write!(f, "ok")
        } else {
            for (i, v) in self.violations.iter().enumerate() {
                if i > 0 {
                    writeln!(f)?;
                }
                write!(f, "{}", v)?;
            }
            Ok(())
        }
    }
}

/// Check the probabilistic invariants of game tensors.
///
/// Dimensional inconsistencies are structural errors (`Err`); stochastic
/// violations are collected in the report. An empty report means the
/// tensors describe a valid game.
pub fn validate_game(
    n_states: usize,
    n_actions: &[usize],
    transition: &[Vec<Vec<f64>>],
    rewards: &[Vec<Vec<f64>>],
    initial_law: &[f64],
) -> Result<ValidationReport> {
    if n_states == 0 {
        return Err(Error::DimensionMismatch("n_states must be >= 1".into()));
    }
    let indexer = JointActionIndexer::new(n_actions)?;
    let joint = indexer.total();
    if transition.len() != n_states {
        return Err(Error::DimensionMismatch(format!(
            "transition tensor has {} states, expected {}",
            transition.len(),
            n_states
        )));
    }
    for (s, per_action) in transition.iter().enumerate() {
        if per_action.len() != joint {
            return Err(Error::DimensionMismatch(format!(
                "transition[{}] has {} joint actions, expected {}",
                s,
                per_action.len(),
                joint
            )));
        }
        for (a, row) in per_action.iter().enumerate() {
            if row.len() != n_states {
                return Err(Error::DimensionMismatch(format!(
                    "transition[{}][{}] has {} next states, expected {}",
                    s,
                    a,
                    row.len(),
                    n_states
                )));
            }
        }
    }
    if rewards.len() != n_actions.len() {
        return Err(Error::DimensionMismatch(format!(
            "rewards for {} players, expected {}",
            rewards.len(),
            n_actions.len()
        )));
    }
    for (i, per_state) in rewards.iter().enumerate() {
        if per_state.len() != n_states {
            return Err(Error::DimensionMismatch(format!(
                "rewards[{}] has {} states, expected {}",
                i,
                per_state.len(),
                n_states
            )));
        }
        for (s, row) in per_state.iter().enumerate() {
            if row.len() != joint {
                return Err(Error::DimensionMismatch(format!(
                    "rewards[{}][{}] has {} joint actions, expected {}",
                    i,
                    s,
                    row.len(),
                    joint
                )));
            }
        }
    }
    if initial_law.len() != n_states {
        return Err(Error::DimensionMismatch(format!(
            "initial law has {} entries, expected {}",
            initial_law.len(),
            n_states
        )));
    }

    let mut report = ValidationReport::default();
    for (s, per_action) in transition.iter().enumerate() {
        for (a, row) in per_action.iter().enumerate() {
            for (s2, &p) in row.iter().enumerate() {
                if p < 0.0 || !p.is_finite() {
                    report.violations.push(Violation::NegativeTransition {
                        state: s,
                        joint_action: a,
                        next_state: s2,
                        value: p,
                    });
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                report.violations.push(Violation::RowSum {
                    state: s,
                    joint_action: a,
                    sum,
                });
            }
        }
    }
    for (s, &p) in initial_law.iter().enumerate() {
        if p < 0.0 || !p.is_finite() {
            report
                .violations
                .push(Violation::NegativeInitialLaw { state: s, value: p });
        }
    }
    let nu_sum: f64 = initial_law.iter().sum();
    if (nu_sum - 1.0).abs() > STOCHASTIC_TOL {
        report
            .violations
            .push(Violation::InitialLawSum { sum: nu_sum });
    }
    for (i, per_state) in rewards.iter().enumerate() {
        for (s, row) in per_state.iter().enumerate() {
            for (a, &r) in row.iter().enumerate() {
                if !r.is_finite() {
                    report.violations.push(Violation::NonFiniteReward {
                        player: i,
                        state: s,
                        joint_action: a,
                        value: r,
                    });
                }
            }
        }
    }
    Ok(report)
}

/// A validated tabular Markov game. Immutable after construction and safe
/// to share across simulation workers.
#[derive(Debug, Clone)]
pub struct MarkovGame {
    n_states: usize,
    indexer: JointActionIndexer,
    /// `transition[s * joint * n_states + a * n_states + s']`, rows renormalized.
    transition: Vec<f64>,
    /// `rewards[i * n_states * joint + s * joint + a]`.
    rewards: Vec<f64>,
    initial_law: Distribution,
    max_abs_reward: f64,
}

impl MarkovGame {
    pub fn new(
        n_states: usize,
        n_actions: Vec<usize>,
        transition: Vec<Vec<Vec<f64>>>,
        rewards: Vec<Vec<Vec<f64>>>,
        initial_law: Vec<f64>,
    ) -> Result<Self> {
        let report = validate_game(n_states, &n_actions, &transition, &rewards, &initial_law)?;
        if !report.is_valid() {
            return Err(Error::InvalidGame(report));
        }
        let indexer = JointActionIndexer::new(&n_actions)?;
        let joint = indexer.total();

        let mut t_flat = Vec::with_capacity(n_states * joint * n_states);
        for per_action in &transition {
            for row in per_action {
                let sum: f64 = row.iter().sum();
                t_flat.extend(row.iter().map(|&p| p / sum));
            }
        }
        let mut r_flat = Vec::with_capacity(n_actions.len() * n_states * joint);
        let mut r_bar = 0.0f64;
        for per_state in &rewards {
            for row in per_state {
                for &r in row {
                    r_bar = r_bar.max(r.abs());
                    r_flat.push(r);
                }
            }
        }
        Ok(MarkovGame {
            n_states,
            indexer,
            transition: t_flat,
            rewards: r_flat,
            initial_law: Distribution::new(initial_law)?,
            max_abs_reward: r_bar,
        })
    }

    pub fn n_players(&self) -> usize {
        self.indexer.n_players()
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self, player: usize) -> usize {
        self.indexer.count(player)
    }

    pub fn joint_actions(&self) -> usize {
        self.indexer.total()
    }

    pub fn indexer(&self) -> &JointActionIndexer {
        &self.indexer
    }

    pub fn initial_law(&self) -> &Distribution {
        &self.initial_law
    }

    /// Transition row `T(s, a)(·)` as a slice of length `n_states`.
    #[inline]
    pub fn transition_row(&self, state: usize, joint_action: usize) -> &[f64] {
        let joint = self.indexer.total();
        let base = (state * joint + joint_action) * self.n_states;
        &self.transition[base..base + self.n_states]
    }

    #[inline]
    pub fn transition(&self, state: usize, joint_action: usize, next: usize) -> f64 {
        self.transition_row(state, joint_action)[next]
    }

    #[inline]
    pub fn reward(&self, player: usize, state: usize, joint_action: usize) -> f64 {
        let joint = self.indexer.total();
        self.rewards[(player * self.n_states + state) * joint + joint_action]
    }

    /// Maximum absolute reward over players, states, and joint actions.
    pub fn max_abs_reward(&self) -> f64 {
        self.max_abs_reward
    }

    /// Smallest transition probability over all rows (may be zero).
    pub fn min_transition(&self) -> f64 {
        self.transition.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Smallest strictly positive transition probability, if any.
    pub fn min_positive_transition(&self) -> Option<f64> {
        self.transition
            .iter()
            .copied()
            .filter(|&p| p > 0.0)
            .fold(None, |acc, p| Some(acc.map_or(p, |m: f64| m.min(p))))
    }
}
