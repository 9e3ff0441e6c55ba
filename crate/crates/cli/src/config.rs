//! Experiment configuration: one TOML document drives every subcommand.
//!
//! The `[game]` table either inlines the tensors or points at a separate
//! game file with the same fields (resolved relative to the config file).
//! Field names and layouts are documented in `docs/config_schema.md`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use qfluid::{MarkovGame, QTableReinforcer, Reinforcer, ReinforcerStack, WrappedGame};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub game: GameRef,
    pub reinforcers: Vec<ReinforcerConfig>,
    pub run: RunConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub acceptance: Option<AcceptanceThresholds>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum GameRef {
    Path { path: PathBuf },
    Inline(GameConfig),
}

/// Tabular game tensors. `transition[s][a_joint][s']` and
/// `rewards[player][s][a_joint]`, with joint actions flattened
/// lexicographically (player 1 most significant). Everything 0-indexed.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameConfig {
    /// Optional cross-check; must equal `actions.len()` when present.
    #[serde(default)]
    pub n_players: Option<usize>,
    pub n_states: usize,
    /// Per-player action counts.
    pub actions: Vec<usize>,
    pub transition: Vec<Vec<Vec<f64>>>,
    pub rewards: Vec<Vec<Vec<f64>>>,
    pub initial_law: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReinforcerConfig {
    pub kind: String,
    pub alpha: f64,
    pub gamma: f64,
    pub tau: f64,
    pub epsilon: f64,
    /// Scalar fill for the initial table.
    #[serde(default)]
    pub initial_q: f64,
    /// Explicit `[action][state]` table; overrides `initial_q`.
    #[serde(default)]
    pub initial_q_table: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Scales N, sorted ascending on load.
    pub scales: Vec<u64>,
    /// Rescaled-time horizon T.
    pub horizon: f64,
    #[serde(default = "default_reps")]
    pub reps: usize,
    pub seed: u64,
    /// 0 selects the automatic stride `max(1, N / 100)`.
    #[serde(default)]
    pub snapshot_stride: u64,
    #[serde(default = "default_ode_method")]
    pub ode_method: String,
    /// 0 selects the automatic grid for the command at hand.
    #[serde(default)]
    pub ode_steps: usize,
    #[serde(default = "default_mixing_steps")]
    pub mixing_steps: usize,
    #[serde(default = "default_probe_samples")]
    pub probe_samples: usize,
}

fn default_reps() -> usize {
    1
}

fn default_ode_method() -> String {
    "rk4".into()
}

fn default_mixing_steps() -> usize {
    200
}

fn default_probe_samples() -> usize {
    16
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
}

/// Optional pass/fail thresholds for `compare`; any failure turns the exit
/// code nonzero after the outputs are written.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcceptanceThresholds {
    /// Require strictly decreasing mean errors across the scales.
    #[serde(default)]
    pub monotone: bool,
    /// Require mean(first scale) / mean(last scale) at least this factor.
    #[serde(default)]
    pub improvement_factor: Option<f64>,
    /// Cap on the mean error at the largest scale.
    #[serde(default)]
    pub max_final_error: Option<f64>,
}

impl ExperimentConfig {
    /// Load and validate a config file; returns the config together with
    /// the SHA-256 of the raw bytes (recorded in manifests).
    pub fn load(path: &Path) -> Result<(Self, String)> {
        let bytes = fs::read(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let sha = crate::manifest::sha256_hex(&bytes);
        let text = String::from_utf8(bytes).context("config file is not UTF-8")?;
        let mut config: ExperimentConfig =
            toml::from_str(&text).context("cannot parse config file")?;
        config.validate()?;
        config.run.scales.sort_unstable();
        Ok((config, sha))
    }

    fn validate(&self) -> Result<()> {
        if self.run.scales.is_empty() {
            bail!("run.scales must list at least one scale");
        }
        if self.run.scales.iter().any(|&n| n == 0) {
            bail!("run.scales entries must be >= 1");
        }
        if !(self.run.horizon > 0.0) {
            bail!("run.horizon must be positive");
        }
        if self.run.reps == 0 {
            bail!("run.reps must be >= 1");
        }
        if self.reinforcers.is_empty() {
            bail!("at least one [[reinforcers]] entry is required");
        }
        if let Some(t) = &self.acceptance {
            if let Some(f) = t.improvement_factor {
                if !(f > 0.0) {
                    bail!("acceptance.improvement_factor must be positive");
                }
            }
        }
        Ok(())
    }

    /// The raw game tensors, reading the referenced file when necessary.
    pub fn game_tensors(&self, config_dir: &Path) -> Result<GameConfig> {
        match &self.game {
            GameRef::Inline(g) => Ok(g.clone()),
            GameRef::Path { path } => {
                let resolved = if path.is_absolute() {
                    path.clone()
                } else {
                    config_dir.join(path)
                };
                let text = fs::read_to_string(&resolved)
                    .with_context(|| format!("cannot read game file {}", resolved.display()))?;
                let g: GameConfig = toml::from_str(&text)
                    .with_context(|| format!("cannot parse game file {}", resolved.display()))?;
                Ok(g)
            }
        }
    }

    pub fn build_game(&self, config_dir: &Path) -> Result<MarkovGame> {
        let g = self.game_tensors(config_dir)?;
        if let Some(n) = g.n_players {
            if n != g.actions.len() {
                bail!(
                    "game declares n_players = {} but lists {} action counts",
                    n,
                    g.actions.len()
                );
            }
        }
        MarkovGame::new(
            g.n_states,
            g.actions,
            g.transition,
            g.rewards,
            g.initial_law,
        )
        .map_err(|e| anyhow::anyhow!("{}", e))
    }

    pub fn build_stack(&self, game: &MarkovGame) -> Result<ReinforcerStack> {
        if self.reinforcers.len() != game.n_players() {
            bail!(
                "{} [[reinforcers]] entries for a {}-player game",
                self.reinforcers.len(),
                game.n_players()
            );
        }
        let mut members: Vec<Box<dyn Reinforcer>> = Vec::with_capacity(self.reinforcers.len());
        for (i, r) in self.reinforcers.iter().enumerate() {
            if r.kind != "qtable" {
                bail!("reinforcer {}: unknown kind {:?}", i, r.kind);
            }
            let q = match &r.initial_q_table {
                Some(table) => QTableReinforcer::with_initial_table(
                    game.n_actions(i),
                    game.n_states(),
                    r.alpha,
                    r.gamma,
                    r.tau,
                    r.epsilon,
                    table.clone(),
                ),
                None => QTableReinforcer::with_initial_fill(
                    game.n_actions(i),
                    game.n_states(),
                    r.alpha,
                    r.gamma,
                    r.tau,
                    r.epsilon,
                    r.initial_q,
                ),
            }
            .map_err(|e| anyhow::anyhow!("reinforcer {}: {}", i, e))?;
            members.push(Box::new(q));
        }
        ReinforcerStack::new(members).map_err(|e| anyhow::anyhow!("{}", e))
    }

    pub fn build_wrapped(&self, config_dir: &Path) -> Result<WrappedGame> {
        let game = self.build_game(config_dir)?;
        let stack = self.build_stack(&game)?;
        WrappedGame::new(game, stack).map_err(|e| anyhow::anyhow!("{}", e))
    }

    /// Explicit snapshot stride, or `None` for the automatic one.
    pub fn stride_for(&self, scale: u64) -> Option<u64> {
        if self.run.snapshot_stride == 0 {
            None
        } else {
            Some(self.run.snapshot_stride.min(scale.max(1)))
        }
    }

    pub fn ode_method(&self) -> Result<qfluid::OdeMethod> {
        match self.run.ode_method.as_str() {
            "euler" => Ok(qfluid::OdeMethod::Euler),
            "rk4" => Ok(qfluid::OdeMethod::Rk4),
            other => bail!("run.ode_method must be \"euler\" or \"rk4\", got {:?}", other),
        }
    }
}
