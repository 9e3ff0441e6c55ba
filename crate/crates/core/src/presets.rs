//! Canonical desk-scale games used by the test suites and shipped configs.
//!
//! Both games have two states and two actions per player, strictly positive
//! transition rows (so two-step minorization bounds apply), and rewards in
//! `[-1, 1]`.

use crate::error::Result;
use crate::game::MarkovGame;
use crate::reinforcer::{QTableReinforcer, ReinforcerStack};
use crate::wrapped::WrappedGame;

/// Q-learner hyperparameters; the default matches the standard test setup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QParams {
    pub alpha: f64,
    pub gamma: f64,
    pub tau: f64,
    pub epsilon: f64,
}

impl Default for QParams {
    fn default() -> Self {
        QParams {
            alpha: 0.1,
            gamma: 0.9,
            tau: 0.5,
            epsilon: 0.1,
        }
    }
}

/// One agent, two states, two actions. Action 1 pays more immediately but
/// drags the chain toward the penalized state 1. Smallest transition
/// probability: 0.2.
pub fn single_agent_game() -> MarkovGame {
    MarkovGame::new(
        2,
        vec![2],
        vec![
            vec![vec![0.8, 0.2], vec![0.3, 0.7]],
            vec![vec![0.6, 0.4], vec![0.2, 0.8]],
        ],
        vec![vec![vec![0.5, 1.0], vec![-0.5, -1.0]]],
        vec![0.5, 0.5],
    )
    .expect("preset game is valid")
}

/// Two agents in a dilemma with a sticky "price war" state: defection pays
/// against a cooperator but pushes the chain toward state 1 where all
/// payoffs are depressed. Joint actions are indexed `a_1 * 2 + a_2` with
/// action 1 = defect. Smallest transition probability: 0.1.
pub fn two_player_game() -> MarkovGame {
    let toward_war = |war: [f64; 3]| -> Vec<Vec<f64>> {
        vec![
            vec![1.0 - war[0], war[0]], // both cooperate
            vec![1.0 - war[1], war[1]], // one defects
            vec![1.0 - war[1], war[1]],
            vec![1.0 - war[2], war[2]], // both defect
        ]
    };
    MarkovGame::new(
        2,
        vec![2, 2],
        vec![toward_war([0.2, 0.5, 0.8]), toward_war([0.4, 0.7, 0.9])],
        vec![
            vec![vec![0.6, -1.0, 1.0, -0.4], vec![0.2, -1.0, 0.6, -0.8]],
            vec![vec![0.6, 1.0, -1.0, -0.4], vec![0.2, 0.6, -1.0, -0.8]],
        ],
        vec![0.5, 0.5],
    )
    .expect("preset game is valid")
}

/// One zero-initialized Q-learner per player with shared hyperparameters.
pub fn q_stack(game: &MarkovGame, params: QParams) -> Result<ReinforcerStack> {
    let mut members: Vec<Box<dyn crate::reinforcer::Reinforcer>> =
        Vec::with_capacity(game.n_players());
    for i in 0..game.n_players() {
        members.push(Box::new(QTableReinforcer::new(
            game.n_actions(i),
            game.n_states(),
            params.alpha,
            params.gamma,
            params.tau,
            params.epsilon,
        )?));
    }
    ReinforcerStack::new(members)
}

/// Wire a game to a stack of identical Q-learners.
pub fn standard_wrapped(game: MarkovGame, params: QParams) -> Result<WrappedGame> {
    let stack = q_stack(&game, params)?;
    WrappedGame::new(game, stack)
}
