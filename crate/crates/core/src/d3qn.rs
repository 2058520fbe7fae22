//! Dueling double deep Q-learning: replay memory, the epsilon-greedy
//! behavior policy, double-Q targets, and the full training loop.
//!
//! One environment step produces one stored transition and (after the
//! warm-up) one gradient step; the target network is refreshed from the
//! online network every `target_sync_period` gradient steps.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::environment::{
    initial_data_total, observe, reset, step, ResetError, SimConfig, TerminalReason,
};
use crate::kinematics::ActionSpace;
use crate::nn::{adam_step, backward, mse_loss, AdamState, ArchSpec, NetworkParams};
use crate::rngs::{stream_rng, StreamId};
use crate::statecodec::{parameterize, CodecConfig, Normalizer};

/// One replay record; both states are the normalized feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
}

/// Fixed-capacity ring of transitions; the oldest entry is overwritten
/// first once full.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: Vec<Transition>,
    capacity: usize,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        ReplayBuffer {
            items: Vec::new(),
            capacity,
            cursor: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    /// `n` independent uniform draws with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<&Transition> {
        assert!(!self.items.is_empty(), "cannot sample an empty replay buffer");
        (0..n)
            .map(|_| &self.items[rng.gen_range(0..self.items.len())])
            .collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }
}

/// Hyperparameters of the learner.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub gamma: f64,
    pub batch_size: usize,
    /// Target refresh period, in gradient steps.
    pub target_sync_period: u64,
    pub episodes: u64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Episodes over which epsilon decays linearly before holding.
    pub epsilon_decay_episodes: u64,
    /// Stored transitions required before learning begins.
    pub learn_start: usize,
    pub updates_per_step: u32,
    pub replay_capacity: usize,
    pub widths: Vec<usize>,
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Periodic checkpoint interval, in episodes.
    pub checkpoint_every: u64,
    /// Snapshots drawn when estimating normalization statistics.
    pub stats_samples: usize,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            gamma: 0.99,
            batch_size: 256,
            target_sync_period: 2000,
            episodes: 10_000,
            epsilon_start: 0.5,
            epsilon_end: 0.1,
            epsilon_decay_episodes: 4000,
            learn_start: 1000,
            updates_per_step: 1,
            replay_capacity: 1_000_000,
            widths: vec![256, 256],
            learning_rate: 3e-4,
            weight_decay: 1e-4,
            checkpoint_every: 500,
            stats_samples: 1_000_000,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err("gamma must lie in [0, 1]".into());
        }
        if !(0.0..=1.0).contains(&self.epsilon_start)
            || !(0.0..=1.0).contains(&self.epsilon_end)
            || self.epsilon_end > self.epsilon_start
        {
            return Err("epsilon must decay within [0, 1]".into());
        }
        if self.batch_size < 2 {
            return Err("batch size must be at least 2".into());
        }
        if self.learn_start < self.batch_size.min(2) {
            return Err("learn start must allow at least one batch".into());
        }
        if self.replay_capacity == 0 {
            return Err("replay capacity must be positive".into());
        }
        if self.widths.is_empty() {
            return Err("trunk needs at least one layer".into());
        }
        if !(self.learning_rate > 0.0) {
            return Err("learning rate must be positive".into());
        }
        if self.stats_samples < 2 {
            return Err("stats sample count must be at least 2".into());
        }
        Ok(())
    }
}

/// Linear decay from `epsilon_start` to `epsilon_end` over the decay
/// horizon, holding afterwards.
pub fn epsilon_at(cfg: &TrainerConfig, episode: u64) -> f64 {
    if cfg.epsilon_decay_episodes == 0 || episode >= cfg.epsilon_decay_episodes {
        return cfg.epsilon_end;
    }
    let frac = episode as f64 / cfg.epsilon_decay_episodes as f64;
    cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * frac
}

/// Index of the maximum, ties to the lowest index.
pub fn argmax_tie_low(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Epsilon-greedy pick over the eval-mode Q-values of `state`.
pub fn select_action<R: Rng + ?Sized>(
    params: &NetworkParams,
    state: &[f64],
    epsilon: f64,
    n_actions: usize,
    rng: &mut R,
) -> usize {
    debug_assert!((0.0..=1.0).contains(&epsilon));
    let c: f64 = rng.gen();
    if c < epsilon {
        rng.gen_range(0..n_actions)
    } else {
        argmax_tie_low(&params.q_values(state))
    }
}

/// Double-Q target for one transition given both networks' next-state
/// Q-rows: the online network selects the action, the target network
/// evaluates it.
pub fn double_q_target(
    reward: f64,
    terminal: bool,
    gamma: f64,
    q_online_next: &[f64],
    q_target_next: &[f64],
) -> f64 {
    if terminal {
        reward
    } else {
        reward + gamma * q_target_next[argmax_tie_low(q_online_next)]
    }
}

/// Batched double-Q targets; both forward passes run in eval mode and the
/// targets carry no gradient.
pub fn compute_targets(
    online: &NetworkParams,
    target: &NetworkParams,
    batch: &[&Transition],
    gamma: f64,
) -> Vec<f64> {
    let dim = online.state_dim();
    let next = Array2::from_shape_fn((batch.len(), dim), |(j, k)| batch[j].next_state[k]);
    let q_online = online.forward_eval(&next);
    let q_target = target.forward_eval(&next);
    batch
        .iter()
        .enumerate()
        .map(|(j, t)| {
            double_q_target(
                t.reward,
                t.terminal,
                gamma,
                q_online.row(j).as_slice().unwrap(),
                q_target.row(j).as_slice().unwrap(),
            )
        })
        .collect()
}

/// Per-episode training log record.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub episode: u64,
    pub cum_reward: f64,
    pub steps: u32,
    pub success: bool,
    pub data_fraction: f64,
    pub collided: bool,
    pub epsilon: f64,
    pub loss_mean: f64,
}

impl EpisodeLog {
    pub const CSV_HEADER: &'static str =
        "episode,cum_reward,steps,success,data_fraction,collided,epsilon,loss_mean";

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.episode,
            self.cum_reward,
            self.steps,
            u8::from(self.success),
            self.data_fraction,
            u8::from(self.collided),
            self.epsilon,
            self.loss_mean
        )
    }
}

/// The learner: online and target networks, optimizer state, replay
/// memory, and the named random streams.
pub struct Trainer {
    pub sim: SimConfig,
    pub codec: CodecConfig,
    pub cfg: TrainerConfig,
    pub action_space: ActionSpace,
    pub normalizer: Normalizer,
    pub online: NetworkParams,
    pub target: NetworkParams,
    pub adam: AdamState,
    pub buffer: ReplayBuffer,
    pub episode: u64,
    pub grad_steps: u64,
    pub master_seed: u64,
    pub scenario_rng: ChaCha8Rng,
    pub action_rng: ChaCha8Rng,
    pub replay_rng: ChaCha8Rng,
}

impl Trainer {
    /// Fresh trainer with newly initialized networks.
    pub fn new(
        sim: SimConfig,
        codec: CodecConfig,
        cfg: TrainerConfig,
        action_space: ActionSpace,
        normalizer: Normalizer,
        master_seed: u64,
    ) -> Self {
        let arch = ArchSpec {
            state_dim: codec.state_dim(),
            widths: cfg.widths.clone(),
            action_count: action_space.len(),
        };
        let mut init_rng = stream_rng(master_seed, StreamId::Init, 0);
        let online = NetworkParams::init(&mut init_rng, &arch);
        let target = online.clone();
        let adam = AdamState::new(&online, cfg.learning_rate, cfg.weight_decay);
        let buffer = ReplayBuffer::new(cfg.replay_capacity);
        Trainer {
            scenario_rng: stream_rng(master_seed, StreamId::Scenario, 0),
            action_rng: stream_rng(master_seed, StreamId::Action, 0),
            replay_rng: stream_rng(master_seed, StreamId::Replay, 0),
            sim,
            codec,
            cfg,
            action_space,
            normalizer,
            online,
            target,
            adam,
            buffer,
            episode: 0,
            grad_steps: 0,
            master_seed,
        }
    }

    /// Rebuilds a trainer around restored network parameters; the replay
    /// memory and optimizer moments restart empty.
    #[allow(clippy::too_many_arguments)]
    pub fn resume(
        sim: SimConfig,
        codec: CodecConfig,
        cfg: TrainerConfig,
        action_space: ActionSpace,
        normalizer: Normalizer,
        online: NetworkParams,
        episode: u64,
        master_seed: u64,
    ) -> Self {
        let target = online.clone();
        let adam = AdamState::new(&online, cfg.learning_rate, cfg.weight_decay);
        let buffer = ReplayBuffer::new(cfg.replay_capacity);
        Trainer {
            scenario_rng: stream_rng(master_seed, StreamId::Scenario, 0),
            action_rng: stream_rng(master_seed, StreamId::Action, 0),
            replay_rng: stream_rng(master_seed, StreamId::Replay, 0),
            sim,
            codec,
            cfg,
            action_space,
            normalizer,
            online,
            target,
            adam,
            buffer,
            episode,
            grad_steps: 0,
            master_seed,
        }
    }

    /// One minibatch update: sample, build double-Q targets, backpropagate,
    /// apply the optimizer, and sync the target network on schedule.
    /// Returns the minibatch loss.
    pub fn train_step(&mut self) -> f64 {
        let batch = self.buffer.sample(self.cfg.batch_size, &mut self.replay_rng);
        let targets = compute_targets(&self.online, &self.target, &batch, self.cfg.gamma);
        let dim = self.online.state_dim();
        let states = Array2::from_shape_fn((batch.len(), dim), |(j, k)| batch[j].state[k]);
        let actions: Vec<usize> = batch.iter().map(|t| t.action).collect();

        let (q, cache) = self.online.forward_train(&states);
        let loss = mse_loss(&q, &targets, &actions);
        let grads = backward(&self.online, &cache, &targets, &actions, self.cfg.weight_decay);
        adam_step(&mut self.online, &grads, &mut self.adam);

        self.grad_steps += 1;
        if self.grad_steps % self.cfg.target_sync_period == 0 {
            self.online.copy_into_target(&mut self.target);
        }
        loss
    }

    /// Runs one training episode end to end and returns its log record.
    pub fn run_episode(&mut self) -> Result<EpisodeLog, ResetError> {
        let epsilon = epsilon_at(&self.cfg, self.episode);
        let mut state = reset(&self.sim, &mut self.scenario_rng)?;
        let initial_data = initial_data_total(&state);
        let mut features = self
            .normalizer
            .normalize(&parameterize(&observe(&state, &self.sim), &self.codec, &self.sim));

        let mut cum_reward = 0.0;
        let mut collected = 0.0;
        let mut steps = 0u32;
        let mut losses = 0.0;
        let mut loss_count = 0u32;
        let reason;

        loop {
            let action = select_action(
                &self.online,
                &features,
                epsilon,
                self.action_space.len(),
                &mut self.action_rng,
            );
            let (next, out) = step(
                &state,
                action,
                &self.action_space,
                &self.sim,
                &mut self.scenario_rng,
            );
            let next_features = self
                .normalizer
                .normalize(&parameterize(&observe(&next, &self.sim), &self.codec, &self.sim));

            self.buffer.push(Transition {
                state: features,
                action,
                reward: out.reward.total(),
                next_state: next_features.clone(),
                terminal: out.terminal,
            });

            if self.buffer.len() >= self.cfg.learn_start {
                for _ in 0..self.cfg.updates_per_step {
                    losses += self.train_step();
                    loss_count += 1;
                }
            }

            cum_reward += out.reward.total();
            collected += out.data_collected;
            steps += 1;
            features = next_features;
            state = next;
            if out.terminal {
                reason = out.reason;
                break;
            }
        }

        let log = EpisodeLog {
            episode: self.episode,
            cum_reward,
            steps,
            success: reason == TerminalReason::Arrived && !state.collided_ever,
            data_fraction: if initial_data > 0.0 {
                collected / initial_data
            } else {
                1.0
            },
            collided: state.collided_ever,
            epsilon,
            loss_mean: if loss_count > 0 {
                losses / f64::from(loss_count)
            } else {
                0.0
            },
        };
        self.episode += 1;
        Ok(log)
    }

    /// Runs episodes until the configured total, invoking the callback
    /// after each one (logging, checkpoints, early probes).
    pub fn train<F>(&mut self, mut on_episode: F) -> Result<(), ResetError>
    where
        F: FnMut(&mut Trainer, &EpisodeLog),
    {
        while self.episode < self.cfg.episodes {
            let log = self.run_episode()?;
            on_episode(self, &log);
        }
        Ok(())
    }
}
