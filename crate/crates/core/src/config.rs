//! JSON run configuration: one file drives the world layout, link budget,
//! kinematics, scenario randomization, reward weights, background traffic,
//! trainer, and evaluation defaults.
//!
//! The file stores human units (dB, dBm, degrees); conversion to linear
//! runtime units happens once at load. Unknown keys are rejected
//! everywhere, and every module invariant is checked before a runtime
//! bundle is handed out.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::{db_to_linear, dbm_to_watts, ChannelParams};
use crate::d3qn::TrainerConfig;
use crate::environment::{EpisodeConfig, RewardCoefficients, SimConfig};
use crate::evaluation::{NoiseSpec, NoiseTarget};
use crate::kinematics::{ActionSpace, KinematicLimits};
use crate::orca::{OrcaParams, OthersPolicy};
use crate::statecodec::CodecConfig;
use crate::world::{Rect, WorldConfig};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Link-budget section in file units (dB / dBm).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelSection {
    pub alpha: f64,
    pub noise_power: f64,
    pub snr_threshold_db: f64,
    pub node_power_dbm: f64,
}

impl Default for ChannelSection {
    fn default() -> Self {
        ChannelSection {
            alpha: 2.0,
            noise_power: 1e-6,
            snr_threshold_db: -5.0,
            node_power_dbm: 1.0,
        }
    }
}

/// Kinematics section in file units (degrees per second).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KinematicsSection {
    pub v_max: f64,
    pub turn_rate_deg_per_s: f64,
    pub dt: f64,
    pub n_speeds: usize,
    pub n_turns: usize,
}

impl Default for KinematicsSection {
    fn default() -> Self {
        KinematicsSection {
            v_max: 5.0,
            turn_rate_deg_per_s: 60.0,
            dt: 1.0,
            n_speeds: 5,
            n_turns: 7,
        }
    }
}

/// Scenario randomization section (node payloads and mission shape).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpisodeSection {
    pub n_nodes_range: (u32, u32),
    pub data_range: (f64, f64),
    pub data_integer: bool,
    pub deadline: f64,
    pub arrival_tolerance: f64,
    pub uav_radius: f64,
    pub node_area: Option<Rect>,
}

impl Default for EpisodeSection {
    fn default() -> Self {
        EpisodeSection {
            n_nodes_range: (5, 10),
            data_range: (1.0, 3.0),
            data_integer: false,
            deadline: 100.0,
            arrival_tolerance: 2.0,
            uav_radius: 0.3,
            node_area: None,
        }
    }
}

/// Background-traffic section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OthersSection {
    pub count_range: (u32, u32),
    pub policy: OthersPolicy,
    pub orca: OrcaSection,
}

impl Default for OthersSection {
    fn default() -> Self {
        OthersSection {
            count_range: (2, 10),
            policy: OthersPolicy::Orca,
            orca: OrcaSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OrcaSection {
    pub time_horizon: f64,
    pub neighbor_range: f64,
    pub max_neighbors: usize,
    pub safety_margin: f64,
    pub avoid_no_fly: bool,
}

impl Default for OrcaSection {
    fn default() -> Self {
        OrcaSection {
            time_horizon: 5.0,
            neighbor_range: 10.0,
            max_neighbors: 10,
            safety_margin: 0.1,
            avoid_no_fly: false,
        }
    }
}

/// Learner section, including the state-codec slot counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainerSection {
    pub gamma: f64,
    pub batch_size: usize,
    pub target_sync_period: u64,
    pub episodes: u64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_episodes: u64,
    pub learn_start: usize,
    pub updates_per_step: u32,
    pub replay_capacity: usize,
    pub widths: Vec<usize>,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub checkpoint_every: u64,
    pub stats_samples: usize,
    pub uav_slots: usize,
    pub node_slots: usize,
    pub mask_other_uavs: bool,
}

impl Default for TrainerSection {
    fn default() -> Self {
        let t = TrainerConfig::default();
        let c = CodecConfig::default();
        TrainerSection {
            gamma: t.gamma,
            batch_size: t.batch_size,
            target_sync_period: t.target_sync_period,
            episodes: t.episodes,
            epsilon_start: t.epsilon_start,
            epsilon_end: t.epsilon_end,
            epsilon_decay_episodes: t.epsilon_decay_episodes,
            learn_start: t.learn_start,
            updates_per_step: t.updates_per_step,
            replay_capacity: t.replay_capacity,
            widths: t.widths,
            learning_rate: t.learning_rate,
            weight_decay: t.weight_decay,
            checkpoint_every: t.checkpoint_every,
            stats_samples: t.stats_samples,
            uav_slots: c.uav_slots,
            node_slots: c.node_slots,
            mask_other_uavs: c.mask_other_uavs,
        }
    }
}

/// Evaluation defaults; CLI flags override these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationSection {
    pub episodes: usize,
    pub noise_u: f64,
    pub noise_target: NoiseTarget,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        EvaluationSection {
            episodes: 5000,
            noise_u: 0.0,
            noise_target: NoiseTarget::None,
        }
    }
}

/// The whole run configuration as stored on disk and snapshotted into
/// checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: String,
    pub world: WorldConfig,
    pub channel: ChannelSection,
    pub kinematics: KinematicsSection,
    pub episode: EpisodeSection,
    pub reward: RewardCoefficients,
    pub others: OthersSection,
    pub trainer: TrainerSection,
    pub evaluation: EvaluationSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            output_dir: "out".into(),
            world: WorldConfig::default(),
            channel: ChannelSection::default(),
            kinematics: KinematicsSection::default(),
            episode: EpisodeSection::default(),
            reward: RewardCoefficients::default(),
            others: OthersSection::default(),
            trainer: TrainerSection::default(),
            evaluation: EvaluationSection::default(),
        }
    }
}

/// Validated runtime bundle in linear units.
#[derive(Debug, Clone)]
pub struct Runtime {
    pub seed: u64,
    pub sim: SimConfig,
    pub codec: CodecConfig,
    pub trainer: TrainerConfig,
    pub action_space: ActionSpace,
    pub noise: NoiseSpec,
    pub eval_episodes: usize,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: RunConfig = serde_json::from_str(&text)?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<(), ConfigError> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    /// Validates every section and converts to runtime units.
    pub fn build(&self) -> Result<Runtime, ConfigError> {
        let invalid = ConfigError::Invalid;

        self.world.validate().map_err(|e| invalid(e.to_string()))?;

        let channel = ChannelParams {
            alpha: self.channel.alpha,
            noise_power: self.channel.noise_power,
            snr_threshold: db_to_linear(self.channel.snr_threshold_db),
            altitude: self.world.altitude,
        };
        channel.validate().map_err(invalid)?;

        let limits = KinematicLimits {
            v_max: self.kinematics.v_max,
            max_turn_rate: self.kinematics.turn_rate_deg_per_s.to_radians(),
            dt: self.kinematics.dt,
        };
        limits.validate().map_err(invalid)?;
        let action_space =
            ActionSpace::build(&limits, self.kinematics.n_speeds, self.kinematics.n_turns)
                .map_err(invalid)?;

        if let Some(area) = &self.episode.node_area {
            area.validate().map_err(|e| invalid(e.to_string()))?;
            if !self.world.arena.contains_rect(area) {
                return Err(invalid("node_area must lie inside the arena".into()));
            }
        }
        let episode = EpisodeConfig {
            n_nodes_range: self.episode.n_nodes_range,
            data_range: self.episode.data_range,
            data_integer: self.episode.data_integer,
            n_others_range: self.others.count_range,
            deadline: self.episode.deadline,
            arrival_tolerance: self.episode.arrival_tolerance,
            uav_radius: self.episode.uav_radius,
            node_power: dbm_to_watts(self.channel.node_power_dbm),
            node_area: self.episode.node_area,
            reward: self.reward,
        };
        episode.validate().map_err(invalid)?;

        let orca = OrcaParams {
            time_horizon: self.others.orca.time_horizon,
            neighbor_range: self.others.orca.neighbor_range,
            max_neighbors: self.others.orca.max_neighbors,
            pref_speed: limits.v_max,
            safety_margin: self.others.orca.safety_margin,
            avoid_no_fly: self.others.orca.avoid_no_fly,
        };
        orca.validate().map_err(invalid)?;

        let trainer = TrainerConfig {
            gamma: self.trainer.gamma,
            batch_size: self.trainer.batch_size,
            target_sync_period: self.trainer.target_sync_period,
            episodes: self.trainer.episodes,
            epsilon_start: self.trainer.epsilon_start,
            epsilon_end: self.trainer.epsilon_end,
            epsilon_decay_episodes: self.trainer.epsilon_decay_episodes,
            learn_start: self.trainer.learn_start,
            updates_per_step: self.trainer.updates_per_step,
            replay_capacity: self.trainer.replay_capacity,
            widths: self.trainer.widths.clone(),
            learning_rate: self.trainer.learning_rate,
            weight_decay: self.trainer.weight_decay,
            checkpoint_every: self.trainer.checkpoint_every,
            stats_samples: self.trainer.stats_samples,
        };
        trainer.validate().map_err(invalid)?;

        let codec = CodecConfig {
            uav_slots: self.trainer.uav_slots,
            node_slots: self.trainer.node_slots,
            mask_other_uavs: self.trainer.mask_other_uavs,
        };
        codec.validate().map_err(invalid)?;

        let noise = NoiseSpec {
            amplitude: self.evaluation.noise_u,
            apply_to: self.evaluation.noise_target,
        };
        noise.validate().map_err(invalid)?;
        if self.evaluation.episodes == 0 {
            return Err(invalid("evaluation.episodes must be positive".into()));
        }

        Ok(Runtime {
            seed: self.seed,
            sim: SimConfig {
                world: self.world.clone(),
                channel,
                limits,
                episode,
                orca,
                others_policy: self.others.policy,
            },
            codec,
            trainer,
            action_space,
            noise,
            eval_episodes: self.evaluation.episodes,
        })
    }
}

/// Output directory for run artifacts: the `SKYHARVEST_OUT` environment
/// variable when set, the config's `output_dir` otherwise.
pub fn resolve_output_dir(cfg: &RunConfig) -> std::path::PathBuf {
    match std::env::var_os("SKYHARVEST_OUT") {
        Some(dir) if !dir.is_empty() => dir.into(),
        _ => cfg.output_dir.clone().into(),
    }
}
