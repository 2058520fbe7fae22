//! The episodic MDP: randomized scenario reset, observation extraction,
//! step dynamics, the six-term reward, and termination.
//!
//! An episode ends only on arrival or on the mission deadline; collisions
//! are penalized and recorded but never terminate an episode.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelParams;
use crate::kinematics::{apply_action, ActionSpace, KinematicLimits};
use crate::orca::{step_others, OrcaParams, OtherUav, OthersPolicy};
use crate::world::{
    min_separation_over_step, sample_point, NodeState, Rect, UavBody, Vec2, WorldConfig,
};

/// Weights of the six reward terms and the collision distance buffer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardCoefficients {
    /// Data collected during the step.
    pub alpha1: f64,
    /// Collision / proximity penalty.
    pub alpha2: f64,
    /// Obstacle (blocked-entry) penalty.
    pub alpha3: f64,
    /// Behind-schedule penalty.
    pub alpha4: f64,
    /// Arrival bonus.
    pub alpha5: f64,
    /// Per-step movement penalty.
    pub alpha6: f64,
    /// Width of the linear proximity ramp beyond disc contact.
    pub buffer: f64,
}

impl Default for RewardCoefficients {
    fn default() -> Self {
        // Setting S1 for the collision pair (alpha2, buffer).
        RewardCoefficients {
            alpha1: 1.0,
            alpha2: 10.0,
            alpha3: 10.0,
            alpha4: 0.1,
            alpha5: 10.0,
            alpha6: 0.02,
            buffer: 0.2,
        }
    }
}

/// Scenario randomization ranges and mission parameters for one episode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub n_nodes_range: (u32, u32),
    /// Initial payload per node, data units.
    pub data_range: (f64, f64),
    /// Draw node payloads as whole data units instead of continuous values.
    pub data_integer: bool,
    pub n_others_range: (u32, u32),
    /// Mission completion deadline.
    pub deadline: f64,
    /// Arrival is declared within this distance of the destination.
    pub arrival_tolerance: f64,
    /// Disc radius shared by every UAV.
    pub uav_radius: f64,
    /// Node transmit power, linear watts.
    pub node_power: f64,
    /// Region nodes are placed in; the whole arena when absent.
    pub node_area: Option<Rect>,
    pub reward: RewardCoefficients,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            n_nodes_range: (5, 10),
            data_range: (1.0, 3.0),
            data_integer: false,
            n_others_range: (2, 10),
            deadline: 100.0,
            arrival_tolerance: 2.0,
            uav_radius: 0.3,
            node_power: crate::channel::dbm_to_watts(1.0),
            node_area: None,
            reward: RewardCoefficients::default(),
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.n_nodes_range.0 > self.n_nodes_range.1 {
            return Err("node count range is empty".into());
        }
        if self.data_range.0 > self.data_range.1 || self.data_range.0 < 0.0 {
            return Err("data range is empty or negative".into());
        }
        if self.n_others_range.0 > self.n_others_range.1 {
            return Err("other-UAV count range is empty".into());
        }
        if !(self.deadline > 0.0) {
            return Err("deadline must be positive".into());
        }
        if !(self.arrival_tolerance > 0.0) {
            return Err("arrival tolerance must be positive".into());
        }
        if !(self.uav_radius > 0.0) {
            return Err("UAV radius must be positive".into());
        }
        if self.node_power < 0.0 {
            return Err("node power must be non-negative".into());
        }
        let r = &self.reward;
        for (name, v) in [
            ("alpha1", r.alpha1),
            ("alpha2", r.alpha2),
            ("alpha3", r.alpha3),
            ("alpha4", r.alpha4),
            ("alpha5", r.alpha5),
            ("alpha6", r.alpha6),
        ] {
            if v < 0.0 {
                return Err(format!("reward coefficient {name} must be non-negative"));
            }
        }
        if !(r.buffer > 0.0) {
            return Err("distance buffer must be positive".into());
        }
        Ok(())
    }
}

/// Everything needed to run episodes: the static world, link budget,
/// kinematics, scenario ranges, and background-traffic behavior.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub world: WorldConfig,
    pub channel: ChannelParams,
    pub limits: KinematicLimits,
    pub episode: EpisodeConfig,
    pub orca: OrcaParams,
    pub others_policy: OthersPolicy,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            world: WorldConfig::default(),
            channel: ChannelParams::default(),
            limits: KinematicLimits::default(),
            episode: EpisodeConfig::default(),
            orca: OrcaParams::default(),
            others_policy: OthersPolicy::Orca,
        }
    }
}

/// Full simulator state for one episode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvState {
    pub typical: UavBody,
    pub destination: Vec2,
    pub others: Vec<OtherUav>,
    pub nodes: Vec<NodeState>,
    pub time_left: f64,
    pub step_index: u32,
    pub collided_ever: bool,
    pub obstacle_hits: u32,
}

/// What the typical UAV knows about itself at a step.
#[derive(Debug, Clone, Copy)]
pub struct OwnInfo {
    pub position: Vec2,
    pub velocity: Vec2,
    pub radius: f64,
    pub destination: Vec2,
    pub v_max: f64,
    pub orientation: f64,
}

/// A background UAV as seen by the sensor.
#[derive(Debug, Clone, Copy)]
pub struct SensedUav {
    pub position: Vec2,
    pub velocity: Vec2,
    pub radius: f64,
}

/// Per-node knowledge available to the typical UAV.
#[derive(Debug, Clone, Copy)]
pub struct NodeInfo {
    pub position: Vec2,
    pub remaining_data: f64,
    pub received_power: f64,
}

/// The raw per-step sensor picture before parameterization.
#[derive(Debug, Clone)]
pub struct Observation {
    pub own: OwnInfo,
    pub sensed: Vec<SensedUav>,
    pub node_info: Vec<NodeInfo>,
    pub time_left: f64,
}

/// Why an episode ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TerminalReason {
    Arrived,
    Deadline,
    None,
}

/// Reward of one step, split into its six components.
#[derive(Debug, Clone, Copy, Default)]
pub struct RewardBreakdown {
    pub data: f64,
    pub collision: f64,
    pub obstacle: f64,
    pub timeliness: f64,
    pub goal: f64,
    pub step: f64,
}

impl RewardBreakdown {
    pub fn total(&self) -> f64 {
        self.data + self.collision + self.obstacle + self.timeliness + self.goal + self.step
    }
}

/// Everything the learner needs to know about one executed step.
#[derive(Debug, Clone, Copy)]
pub struct StepOutcome {
    pub reward: RewardBreakdown,
    pub terminal: bool,
    pub reason: TerminalReason,
    pub collided_this_step: bool,
    pub data_collected: f64,
    /// Node the TDMA scheduler connected this step, if any.
    pub connected_node: Option<usize>,
}

#[derive(Debug, thiserror::Error)]
pub enum ResetError {
    #[error("could not place {what} after {tries} tries; check the scenario geometry")]
    PlacementFailed { what: &'static str, tries: u32 },
}

const PLACEMENT_TRIES: u32 = 1000;

fn sample_outside_no_fly<R: Rng + ?Sized>(
    rect: &Rect,
    world: &WorldConfig,
    rng: &mut R,
    what: &'static str,
) -> Result<Vec2, ResetError> {
    for _ in 0..PLACEMENT_TRIES {
        let p = sample_point(rect, rng);
        if !world.in_no_fly(p) {
            return Ok(p);
        }
    }
    Err(ResetError::PlacementFailed {
        what,
        tries: PLACEMENT_TRIES,
    })
}

fn sample_int_range<R: Rng + ?Sized>(range: (u32, u32), rng: &mut R) -> u32 {
    rng.gen_range(range.0..=range.1)
}

/// Draws a fresh randomized scenario: typical UAV in the departure strip
/// aiming at a uniform destination in the landing strip, nodes and
/// background UAVs scattered without initial overlaps.
pub fn reset<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> Result<EnvState, ResetError> {
    let world = &cfg.world;
    let ep = &cfg.episode;

    let start = sample_point(&world.departure, rng);
    let destination = sample_point(&world.landing, rng);

    let n_nodes = sample_int_range(ep.n_nodes_range, rng);
    let node_rect = ep.node_area.unwrap_or(world.arena);
    let mut nodes = Vec::with_capacity(n_nodes as usize);
    for _ in 0..n_nodes {
        let position = sample_outside_no_fly(&node_rect, world, rng, "IoT node")?;
        let data = if ep.data_integer {
            rng.gen_range(ep.data_range.0.ceil() as i64..=ep.data_range.1.floor() as i64) as f64
        } else {
            rng.gen_range(ep.data_range.0..=ep.data_range.1)
        };
        nodes.push(NodeState {
            position,
            remaining_data: data,
            initial_data: data,
            transmit_power: ep.node_power,
        });
    }

    let mut typical = UavBody::new(start, ep.uav_radius, cfg.limits.v_max);
    typical.orientation = if destination == start {
        0.0
    } else {
        (destination.y - start.y).atan2(destination.x - start.x)
    };

    let n_others = sample_int_range(ep.n_others_range, rng);
    let mut others: Vec<OtherUav> = Vec::with_capacity(n_others as usize);
    for _ in 0..n_others {
        let mut placed = false;
        for _ in 0..PLACEMENT_TRIES {
            let p = sample_point(&world.arena, rng);
            if world.in_no_fly(p) {
                continue;
            }
            let body = UavBody::new(p, ep.uav_radius, cfg.orca.pref_speed);
            if crate::world::uav_collision(&body, &typical)
                || others.iter().any(|o| crate::world::uav_collision(&body, &o.body))
            {
                continue;
            }
            let goal = sample_point(&world.arena, rng);
            others.push(OtherUav { body, goal });
            placed = true;
            break;
        }
        if !placed {
            return Err(ResetError::PlacementFailed {
                what: "background UAV",
                tries: PLACEMENT_TRIES,
            });
        }
    }

    Ok(EnvState {
        typical,
        destination,
        others,
        nodes,
        time_left: ep.deadline,
        step_index: 0,
        collided_ever: false,
        obstacle_hits: 0,
    })
}

/// Extracts the sensor picture: background UAVs within the sensing radius
/// (closed ball), per-node received powers at the current position, and the
/// remaining mission time.
pub fn observe(state: &EnvState, cfg: &SimConfig) -> Observation {
    let typical = &state.typical;
    let sensed = state
        .others
        .iter()
        .filter(|o| typical.position.distance(o.body.position) <= cfg.world.sensing_radius)
        .map(|o| SensedUav {
            position: o.body.position,
            velocity: o.body.velocity,
            radius: o.body.radius,
        })
        .collect();
    let node_info = state
        .nodes
        .iter()
        .map(|n| NodeInfo {
            position: n.position,
            remaining_data: n.remaining_data,
            received_power: cfg.channel.received_power(n, typical.position),
        })
        .collect();
    Observation {
        own: OwnInfo {
            position: typical.position,
            velocity: typical.velocity,
            radius: typical.radius,
            destination: state.destination,
            v_max: typical.v_max,
            orientation: typical.orientation,
        },
        sensed,
        node_info,
        time_left: state.time_left,
    }
}

/// Sum of all nodes' remaining payloads.
pub fn remaining_data_total(state: &EnvState) -> f64 {
    state.nodes.iter().map(|n| n.remaining_data).sum()
}

/// Sum of all nodes' initial payloads.
pub fn initial_data_total(state: &EnvState) -> f64 {
    state.nodes.iter().map(|n| n.initial_data).sum()
}

/// Assembles the six reward terms for a completed step.
///
/// `d_min` is the minimum distance to any background UAV over the step and
/// `r_other` the radius of the UAV achieving it (`None` with no traffic).
#[allow(clippy::too_many_arguments)]
pub fn reward_components(
    data_before: f64,
    data_after: f64,
    d_min: Option<(f64, f64)>,
    distance_to_goal: f64,
    time_left_after: f64,
    arrived: bool,
    obstacle_hit: bool,
    own_radius: f64,
    v_max: f64,
    coeff: &RewardCoefficients,
) -> RewardBreakdown {
    let data = coeff.alpha1 * (data_before - data_after);

    let collision = match d_min {
        None => 0.0,
        Some((d, r_other)) => {
            let contact = own_radius + r_other;
            if d <= contact {
                -coeff.alpha2
            } else if d <= contact + coeff.buffer {
                (-coeff.alpha2 * (1.0 - (d - contact) / coeff.buffer)).min(0.0)
            } else {
                0.0
            }
        }
    };

    let obstacle = if obstacle_hit { -coeff.alpha3 } else { 0.0 };

    let min_time_needed = distance_to_goal / v_max;
    let timeliness = if time_left_after < min_time_needed {
        coeff.alpha4 * (time_left_after - min_time_needed)
    } else {
        0.0
    };

    let goal = if arrived { coeff.alpha5 } else { 0.0 };

    RewardBreakdown {
        data,
        collision,
        obstacle,
        timeliness,
        goal,
        step: -coeff.alpha6,
    }
}

/// Advances the world by one step: the typical UAV applies the chosen
/// action under the blocked-entry rule, background traffic takes one ORCA
/// step, the TDMA scheduler drains at most one node, and the reward and
/// termination are assembled.
pub fn step<R: Rng + ?Sized>(
    state: &EnvState,
    action_index: usize,
    action_space: &ActionSpace,
    cfg: &SimConfig,
    rng: &mut R,
) -> (EnvState, StepOutcome) {
    let dt = cfg.limits.dt;
    let ep = &cfg.episode;

    // 1. Typical UAV moves.
    let mv = apply_action(
        &state.typical,
        action_space.get(action_index),
        &cfg.limits,
        &cfg.world,
    );
    let typical_new = mv.body;

    // 2. Background traffic advances against the fresh typical pose.
    let others_new = step_others(
        &state.others,
        Some(&typical_new),
        &cfg.orca,
        cfg.others_policy,
        &cfg.world,
        dt,
        rng,
    );

    // 3.-4. TDMA schedule at the new position, drain the connected node.
    let data_before = remaining_data_total(state);
    let mut nodes = state.nodes.clone();
    let connected = cfg.channel.schedule(&nodes, typical_new.position);
    let mut data_collected = 0.0;
    if let Some(i) = connected {
        let snr = cfg.channel.snr(&nodes[i], typical_new.position);
        let rate = cfg.channel.rate(snr);
        data_collected = (dt * rate).min(nodes[i].remaining_data);
        nodes[i].remaining_data -= data_collected;
    }

    // 5. Closest approach to any background UAV over the executed step,
    // using actual displacements (a blocked typical UAV did not move).
    let typical_track = UavBody {
        position: state.typical.position,
        velocity: (typical_new.position - state.typical.position) / dt,
        ..typical_new
    };
    let mut d_min: Option<(f64, f64)> = None;
    for (old, new) in state.others.iter().zip(others_new.iter()) {
        let other_track = UavBody {
            position: old.body.position,
            velocity: (new.body.position - old.body.position) / dt,
            ..old.body
        };
        let d = min_separation_over_step(&typical_track, &other_track, dt);
        if d_min.map_or(true, |(best, _)| d < best) {
            d_min = Some((d, old.body.radius));
        }
    }
    let collided_this_step =
        d_min.is_some_and(|(d, r)| d <= typical_new.radius + r);

    // 6.-7. Reward, clock, termination.
    let time_left_after = state.time_left - dt;
    let distance_to_goal = typical_new.position.distance(state.destination);
    let arrived = distance_to_goal <= ep.arrival_tolerance;
    let reward = reward_components(
        data_before,
        data_before - data_collected,
        d_min,
        distance_to_goal,
        time_left_after,
        arrived,
        mv.blocked,
        typical_new.radius,
        cfg.limits.v_max,
        &ep.reward,
    );

    let reason = if arrived {
        TerminalReason::Arrived
    } else if time_left_after <= 1e-9 {
        TerminalReason::Deadline
    } else {
        TerminalReason::None
    };

    let next = EnvState {
        typical: typical_new,
        destination: state.destination,
        others: others_new,
        nodes,
        time_left: time_left_after,
        step_index: state.step_index + 1,
        collided_ever: state.collided_ever || collided_this_step,
        obstacle_hits: state.obstacle_hits + u32::from(mv.blocked),
    };
    let outcome = StepOutcome {
        reward,
        terminal: reason != TerminalReason::None,
        reason,
        collided_this_step,
        data_collected,
        connected_node: connected,
    };
    (next, outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn no_traffic_cfg() -> SimConfig {
        let mut cfg = SimConfig::default();
        cfg.episode.n_others_range = (0, 0);
        cfg.world.no_fly.clear();
        cfg
    }

    #[test]
    fn reset_respects_ranges_and_determinism() {
        let cfg = SimConfig::default();
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = reset(&cfg, &mut rng).unwrap();
            assert!((5..=10).contains(&(s.nodes.len() as u32)));
            assert!((2..=10).contains(&(s.others.len() as u32)));
            for n in &s.nodes {
                assert!(n.initial_data >= 1.0 && n.initial_data <= 3.0);
                assert!(!cfg.world.in_no_fly(n.position));
            }
            assert!(cfg.world.departure.contains(s.typical.position));
            assert!(cfg.world.landing.contains(s.destination));
            assert_eq!(s.time_left, 100.0);
        }
        let mut r1 = ChaCha8Rng::seed_from_u64(42);
        let mut r2 = ChaCha8Rng::seed_from_u64(42);
        let s1 = reset(&cfg, &mut r1).unwrap();
        let s2 = reset(&cfg, &mut r2).unwrap();
        assert_eq!(format!("{s1:?}"), format!("{s2:?}"));
    }

    #[test]
    fn reset_zero_width_ranges() {
        let mut cfg = SimConfig::default();
        cfg.episode.n_nodes_range = (5, 5);
        cfg.episode.n_others_range = (2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = reset(&cfg, &mut rng).unwrap();
        assert_eq!(s.nodes.len(), 5);
        assert_eq!(s.others.len(), 2);
    }

    #[test]
    fn reset_integer_data() {
        let mut cfg = SimConfig::default();
        cfg.episode.data_integer = true;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let s = reset(&cfg, &mut rng).unwrap();
            for n in &s.nodes {
                assert_eq!(n.initial_data.fract(), 0.0);
                assert!((1.0..=3.0).contains(&n.initial_data));
            }
        }
    }

    #[test]
    fn observe_sensing_boundary_is_closed() {
        let cfg = SimConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = reset(&cfg, &mut rng).unwrap();
        s.typical.position = Vec2::new(50.0, 50.0);
        let mut body = UavBody::new(Vec2::new(60.0, 50.0), 0.3, 5.0);
        s.others = vec![OtherUav {
            body,
            goal: Vec2::ZERO,
        }];
        assert_eq!(observe(&s, &cfg).sensed.len(), 1);
        body.position = Vec2::new(60.1, 50.0);
        s.others[0].body = body;
        assert_eq!(observe(&s, &cfg).sensed.len(), 0);
        s.others.clear();
        assert!(observe(&s, &cfg).sensed.is_empty());
    }

    #[test]
    fn reward_component_examples() {
        let coeff = RewardCoefficients::default();
        // Data term is linear in the collected amount.
        let r = reward_components(
            5.0, 4.6, None, 50.0, 90.0, false, false, 0.3, 5.0, &coeff,
        );
        assert!((r.data - 0.4).abs() < 1e-12);

        // Midpoint of the proximity ramp: half the full penalty.
        let r = reward_components(
            0.0,
            0.0,
            Some((0.6 + 0.1, 0.3)),
            50.0,
            90.0,
            false,
            false,
            0.3,
            5.0,
            &coeff,
        );
        assert!((r.collision + 5.0).abs() < 1e-9);

        // Ramp endpoint: exactly zero.
        let r = reward_components(
            0.0,
            0.0,
            Some((0.6 + 0.2, 0.3)),
            50.0,
            90.0,
            false,
            false,
            0.3,
            5.0,
            &coeff,
        );
        assert_eq!(r.collision, 0.0);

        // Behind schedule by one time unit.
        let r = reward_components(
            0.0, 0.0, None, 30.0, 5.0, false, false, 0.3, 5.0, &coeff,
        );
        assert!((r.timeliness + 0.1).abs() < 1e-12);

        // Contact and beyond: full penalty.
        let r = reward_components(
            0.0,
            0.0,
            Some((0.5, 0.3)),
            50.0,
            90.0,
            false,
            false,
            0.3,
            5.0,
            &coeff,
        );
        assert_eq!(r.collision, -10.0);
    }

    #[test]
    fn ramp_is_continuous_and_monotone() {
        let coeff = RewardCoefficients::default();
        let contact = 0.6;
        let mut prev = f64::NEG_INFINITY;
        for k in 0..=400 {
            let d = contact - 0.1 + k as f64 * 0.002;
            let r = reward_components(
                0.0,
                0.0,
                Some((d, 0.3)),
                50.0,
                90.0,
                false,
                false,
                0.3,
                5.0,
                &coeff,
            );
            assert!(r.collision >= prev - 1e-12);
            prev = r.collision;
        }
    }

    #[test]
    fn hover_next_to_node_collects_at_shannon_rate() {
        let mut cfg = no_traffic_cfg();
        cfg.episode.n_nodes_range = (1, 1);
        cfg.episode.node_area = Some(Rect::new(49.0, 51.0, 49.0, 51.0).unwrap());
        cfg.episode.data_range = (3.0, 3.0);
        let limits = cfg.limits;
        let space = ActionSpace::build(&limits, 5, 7).unwrap();
        let hover = space.len() - 1;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut s = reset(&cfg, &mut rng).unwrap();
        s.typical.position = Vec2::new(45.0, 50.0);
        let d = s.nodes[0].position.distance(s.typical.position);
        let expected = cfg
            .channel
            .rate(cfg.channel.snr(&s.nodes[0], s.typical.position))
            * limits.dt;
        let before = remaining_data_total(&s);
        let (next, out) = step(&s, hover, &space, &cfg, &mut rng);
        assert!(d < 30.0, "node should be inside coverage, d={d}");
        assert!((out.data_collected - expected).abs() < 1e-12);
        assert!((before - remaining_data_total(&next) - expected).abs() < 1e-12);
        assert_eq!(out.connected_node, Some(0));
    }

    #[test]
    fn depleted_nodes_leave_only_step_penalty() {
        let mut cfg = no_traffic_cfg();
        let space = ActionSpace::build(&cfg.limits, 5, 7).unwrap();
        cfg.episode.n_nodes_range = (2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = reset(&cfg, &mut rng).unwrap();
        for n in &mut s.nodes {
            n.remaining_data = 0.0;
        }
        s.typical.position = Vec2::new(20.0, 50.0);
        s.typical.orientation = 0.0;
        let (_, out) = step(&s, space.len() - 1, &space, &cfg, &mut rng);
        assert_eq!(out.reward.data, 0.0);
        assert_eq!(out.connected_node, None);
        assert!((out.reward.total() - out.reward.step - out.reward.timeliness).abs() < 1e-12);
    }

    #[test]
    fn arrival_terminates_with_bonus() {
        let mut cfg = no_traffic_cfg();
        cfg.episode.n_nodes_range = (1, 1);
        let space = ActionSpace::build(&cfg.limits, 5, 7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut s = reset(&cfg, &mut rng).unwrap();
        s.typical.position = s.destination - Vec2::new(4.0, 0.0);
        s.typical.orientation = 0.0;
        // Max speed, zero turn: moves 5 toward the goal, ending inside the
        // arrival tolerance.
        let straight = space
            .actions()
            .iter()
            .position(|a| a.turn == 0.0 && (a.speed - 5.0).abs() < 1e-12)
            .unwrap();
        let (next, out) = step(&s, straight, &space, &cfg, &mut rng);
        assert!(out.terminal);
        assert_eq!(out.reason, TerminalReason::Arrived);
        assert_eq!(out.reward.goal, cfg.episode.reward.alpha5);
        assert!(next.typical.position.distance(next.destination) <= 2.0);
    }

    #[test]
    fn deadline_terminates_and_bounds_length() {
        let mut cfg = no_traffic_cfg();
        cfg.episode.deadline = 7.0;
        let space = ActionSpace::build(&cfg.limits, 5, 7).unwrap();
        let hover = space.len() - 1;
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut s = reset(&cfg, &mut rng).unwrap();
        let mut steps = 0;
        loop {
            let (next, out) = step(&s, hover, &space, &cfg, &mut rng);
            s = next;
            steps += 1;
            assert!((s.time_left - (7.0 - steps as f64)).abs() < 1e-9);
            if out.terminal {
                assert_eq!(out.reason, TerminalReason::Deadline);
                break;
            }
            assert!(steps <= 7);
        }
        assert_eq!(steps, 7);
    }

    #[test]
    fn straight_line_policy_arrives_in_closed_form_steps() {
        let cfg = no_traffic_cfg();
        let space = ActionSpace::build(&cfg.limits, 5, 7).unwrap();
        let straight = space
            .actions()
            .iter()
            .position(|a| a.turn == 0.0 && (a.speed - 5.0).abs() < 1e-12)
            .unwrap();
        // Distances chosen so the fixed 5-unit stride ends inside the
        // arrival tolerance instead of hopping over it forever.
        let distances = [40.0, 41.5, 43.7, 46.5];
        for seed in 0..30 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut s = reset(&cfg, &mut rng).unwrap();
            let d0 = distances[seed as usize % distances.len()];
            let dir = (s.destination - s.typical.position).normalized();
            s.typical.position = s.destination - dir * d0;
            s.typical.orientation = dir.y.atan2(dir.x);
            let expected = ((d0 - cfg.episode.arrival_tolerance) / 5.0).ceil() as u32;
            let mut steps = 0;
            loop {
                let (next, out) = step(&s, straight, &space, &cfg, &mut rng);
                s = next;
                steps += 1;
                if out.terminal {
                    assert_eq!(out.reason, TerminalReason::Arrived);
                    break;
                }
            }
            assert_eq!(steps, expected, "seed {seed}: d0={d0}");
        }
    }

    #[test]
    fn tdma_changes_at_most_one_node_per_step() {
        let cfg = SimConfig::default();
        let space = ActionSpace::build(&cfg.limits, 5, 7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        use rand::Rng;
        let mut s = reset(&cfg, &mut rng).unwrap();
        for _ in 0..100 {
            let before: Vec<f64> = s.nodes.iter().map(|n| n.remaining_data).collect();
            let (next, out) = step(&s, rng.gen_range(0..space.len()), &space, &cfg, &mut rng);
            let changed = next
                .nodes
                .iter()
                .zip(&before)
                .filter(|(n, b)| n.remaining_data != **b)
                .count();
            assert!(changed <= 1);
            s = next;
            if out.terminal {
                break;
            }
        }
    }

    #[test]
    fn data_conservation_over_rollout() {
        let cfg = SimConfig::default();
        let space = ActionSpace::build(&cfg.limits, 5, 7).unwrap();
        use rand::Rng;
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut s = reset(&cfg, &mut rng).unwrap();
            let initial = initial_data_total(&s);
            let mut collected = 0.0;
            loop {
                let (next, out) = step(&s, rng.gen_range(0..space.len()), &space, &cfg, &mut rng);
                collected += out.data_collected;
                s = next;
                if out.terminal {
                    break;
                }
            }
            assert!((initial - remaining_data_total(&s) - collected).abs() < 1e-9);
        }
    }

    #[test]
    fn blocked_entry_penalized_and_position_safe() {
        let mut cfg = SimConfig::default();
        cfg.episode.n_others_range = (0, 0);
        let space = ActionSpace::build(&cfg.limits, 5, 7).unwrap();
        let straight = space
            .actions()
            .iter()
            .position(|a| a.turn == 0.0 && (a.speed - 5.0).abs() < 1e-12)
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut s = reset(&cfg, &mut rng).unwrap();
        // Aim straight into the first no-fly block.
        s.typical.position = Vec2::new(29.0, 60.0);
        s.typical.orientation = 0.0;
        let (next, out) = step(&s, straight, &space, &cfg, &mut rng);
        assert_eq!(next.typical.position, s.typical.position);
        assert_eq!(out.reward.obstacle, -cfg.episode.reward.alpha3);
        assert_eq!(next.obstacle_hits, 1);
        assert!(!cfg.world.in_no_fly(next.typical.position));
    }
}
