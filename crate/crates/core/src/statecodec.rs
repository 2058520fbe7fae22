//! Agent-centric state parameterization and feature normalization.
//!
//! The raw observation is turned into a fixed-length feature vector in
//! three steps: rotate everything into a frame whose x-axis points at the
//! destination, enrich each entity with distance/bearing features and the
//! SINR indicator, and clamp the variable-size parts to a fixed number of
//! nearest slots with zero padding.
//!
//! Layout of the vector (59 entries with the default slot counts):
//!
//! ```text
//! own(9)  = [vx~, vy~, pgx~, pgy~, d_g, a_g, r, v_max, heading~]
//! uav(7)  = [px~, py~, vx~, vy~, d, a, r_j]        x uav_slots
//! node(7) = [px~, py~, d, a, remaining, P_r, sinr] x node_slots
//! time(1) = [time_left]
//! ```
//!
//! Padded slots stay raw zeros through normalization: the statistics are
//! estimated per entry over the draws where the slot was occupied, and
//! normalizing a pad with a nonzero mean would fabricate a phantom entity.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::sinr_indicator_from_powers;
use crate::environment::{NodeInfo, Observation, OwnInfo, SensedUav, SimConfig};
use crate::world::{sample_point, wrap_angle, Vec2};

pub const OWN_FEATURES: usize = 9;
pub const UAV_FEATURES: usize = 7;
pub const NODE_FEATURES: usize = 7;

/// Slot counts and the ablation switch of the parameterization.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CodecConfig {
    /// Nearest sensed UAVs kept in the state.
    pub uav_slots: usize,
    /// Nearest active nodes kept in the state.
    pub node_slots: usize,
    /// Force the UAV slots to zero padding (collision-avoidance ablation).
    pub mask_other_uavs: bool,
}

impl Default for CodecConfig {
    fn default() -> Self {
        CodecConfig {
            uav_slots: 2,
            node_slots: 5,
            mask_other_uavs: false,
        }
    }
}

impl CodecConfig {
    pub fn state_dim(&self) -> usize {
        OWN_FEATURES + UAV_FEATURES * self.uav_slots + NODE_FEATURES * self.node_slots + 1
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.node_slots == 0 {
            return Err("need at least one node slot".into());
        }
        Ok(())
    }
}

/// Fixed-length raw feature vector plus the occupancy of each entry.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamState {
    pub values: Vec<f64>,
    pub occupied: Vec<bool>,
}

impl ParamState {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Rotation angle of the agent-centric frame: bearing from the UAV to its
/// destination, full-quadrant. Zero in the degenerate on-goal case (arrival
/// has already triggered by then).
pub fn rotation_angle(p: Vec2, goal: Vec2) -> f64 {
    if p == goal {
        return 0.0;
    }
    (goal.y - p.y).atan2(goal.x - p.x)
}

/// The observation after the coordinate transition.
#[derive(Debug, Clone)]
pub struct AgentFrame {
    pub rotation: f64,
    pub own_velocity: Vec2,
    pub goal_offset: Vec2,
    /// Own heading relative to the goal bearing, wrapped to (-pi, pi].
    pub heading: f64,
    pub uavs: Vec<FrameUav>,
    pub nodes: Vec<FrameNode>,
}

#[derive(Debug, Clone, Copy)]
pub struct FrameUav {
    pub offset: Vec2,
    pub velocity: Vec2,
    pub radius: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct FrameNode {
    pub offset: Vec2,
}

fn rotate_into(v: Vec2, cos_r: f64, sin_r: f64) -> Vec2 {
    Vec2::new(v.x * cos_r + v.y * sin_r, v.y * cos_r - v.x * sin_r)
}

/// Step one: rotate every position and velocity into the agent-centric,
/// goal-aligned frame.
pub fn to_agent_frame(obs: &Observation) -> AgentFrame {
    let own = &obs.own;
    let rotation = rotation_angle(own.position, own.destination);
    let (sin_r, cos_r) = rotation.sin_cos();
    AgentFrame {
        rotation,
        own_velocity: rotate_into(own.velocity, cos_r, sin_r),
        goal_offset: rotate_into(own.destination - own.position, cos_r, sin_r),
        heading: wrap_angle(own.orientation - rotation),
        uavs: obs
            .sensed
            .iter()
            .map(|u| FrameUav {
                offset: rotate_into(u.position - own.position, cos_r, sin_r),
                velocity: rotate_into(u.velocity, cos_r, sin_r),
                radius: u.radius,
            })
            .collect(),
        nodes: obs
            .node_info
            .iter()
            .map(|n| FrameNode {
                offset: rotate_into(n.position - own.position, cos_r, sin_r),
            })
            .collect(),
    }
}

/// Distance/bearing of a frame offset, with the bearing defined as zero at
/// the degenerate origin.
fn polar(offset: Vec2) -> (f64, f64) {
    let d = offset.norm();
    let a = if d == 0.0 {
        0.0
    } else {
        offset.y.atan2(offset.x)
    };
    (d, a)
}

/// Enriched per-entity feature rows, still variable-size.
#[derive(Debug, Clone)]
pub struct FeatureBlocks {
    pub own: [f64; OWN_FEATURES],
    pub uavs: Vec<UavFeature>,
    pub nodes: Vec<NodeFeature>,
    pub time_left: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct UavFeature {
    pub features: [f64; UAV_FEATURES],
    pub distance: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct NodeFeature {
    pub features: [f64; NODE_FEATURES],
    pub distance: f64,
    pub active: bool,
}

/// Step two: append distances, bearings, and the SINR indicator.
pub fn process_features(
    frame: &AgentFrame,
    obs: &Observation,
    noise_power: f64,
    snr_threshold: f64,
) -> FeatureBlocks {
    let (d_g, a_g) = polar(frame.goal_offset);
    let own = [
        frame.own_velocity.x,
        frame.own_velocity.y,
        frame.goal_offset.x,
        frame.goal_offset.y,
        d_g,
        a_g,
        obs.own.radius,
        obs.own.v_max,
        frame.heading,
    ];

    let uavs = frame
        .uavs
        .iter()
        .map(|u| {
            let (d, a) = polar(u.offset);
            UavFeature {
                features: [
                    u.offset.x,
                    u.offset.y,
                    u.velocity.x,
                    u.velocity.y,
                    d,
                    a,
                    u.radius,
                ],
                distance: d,
            }
        })
        .collect();

    let powers: Vec<f64> = obs.node_info.iter().map(|n| n.received_power).collect();
    let nodes = frame
        .nodes
        .iter()
        .zip(obs.node_info.iter())
        .enumerate()
        .map(|(i, (fnode, info))| {
            let (d, a) = polar(fnode.offset);
            let indicator =
                sinr_indicator_from_powers(&powers, noise_power, snr_threshold, i);
            NodeFeature {
                features: [
                    fnode.offset.x,
                    fnode.offset.y,
                    d,
                    a,
                    info.remaining_data,
                    info.received_power,
                    f64::from(u8::from(indicator)),
                ],
                distance: d,
                active: info.remaining_data > 0.0,
            }
        })
        .collect();

    FeatureBlocks {
        own,
        uavs,
        nodes,
        time_left: obs.time_left,
    }
}

/// Step three: keep the nearest slots, nearest-first, zero-padding the rest.
/// Depleted nodes never occupy a slot.
pub fn assemble(blocks: &FeatureBlocks, codec: &CodecConfig) -> ParamState {
    let dim = codec.state_dim();
    let mut values = vec![0.0; dim];
    let mut occupied = vec![false; dim];

    values[..OWN_FEATURES].copy_from_slice(&blocks.own);
    occupied[..OWN_FEATURES].fill(true);
    let mut cursor = OWN_FEATURES;

    if !codec.mask_other_uavs {
        let mut order: Vec<usize> = (0..blocks.uavs.len()).collect();
        order.sort_by(|&a, &b| {
            blocks.uavs[a]
                .distance
                .partial_cmp(&blocks.uavs[b].distance)
                .unwrap()
        });
        for &i in order.iter().take(codec.uav_slots) {
            values[cursor..cursor + UAV_FEATURES].copy_from_slice(&blocks.uavs[i].features);
            occupied[cursor..cursor + UAV_FEATURES].fill(true);
            cursor += UAV_FEATURES;
        }
    }
    cursor = OWN_FEATURES + UAV_FEATURES * codec.uav_slots;

    let mut active: Vec<usize> = (0..blocks.nodes.len())
        .filter(|&i| blocks.nodes[i].active)
        .collect();
    active.sort_by(|&a, &b| {
        blocks.nodes[a]
            .distance
            .partial_cmp(&blocks.nodes[b].distance)
            .unwrap()
    });
    for &i in active.iter().take(codec.node_slots) {
        values[cursor..cursor + NODE_FEATURES].copy_from_slice(&blocks.nodes[i].features);
        occupied[cursor..cursor + NODE_FEATURES].fill(true);
        cursor += NODE_FEATURES;
    }

    let last = dim - 1;
    values[last] = blocks.time_left;
    occupied[last] = true;

    ParamState { values, occupied }
}

/// Full pipeline from a raw observation to the fixed-length raw state.
pub fn parameterize(obs: &Observation, codec: &CodecConfig, cfg: &SimConfig) -> ParamState {
    let frame = to_agent_frame(obs);
    let blocks = process_features(
        &frame,
        obs,
        cfg.channel.noise_power,
        cfg.channel.snr_threshold,
    );
    assemble(&blocks, codec)
}

/// Per-entry mean and standard deviation of the raw state entries,
/// estimated over random scenario snapshots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub const STD_FLOOR: f64 = 1e-6;

impl Normalizer {
    /// Identity normalizer, handy for tiny tests.
    pub fn identity(dim: usize) -> Self {
        Normalizer {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    /// Element-wise `(x - mean) / std` on occupied entries; padded entries
    /// stay raw zeros.
    pub fn normalize(&self, state: &ParamState) -> Vec<f64> {
        assert_eq!(
            state.values.len(),
            self.mean.len(),
            "state length does not match the normalizer"
        );
        state
            .values
            .iter()
            .zip(&state.occupied)
            .zip(self.mean.iter().zip(&self.std))
            .map(|((v, occ), (m, s))| if *occ { (v - m) / s } else { 0.0 })
            .collect()
    }
}

/// Estimates normalization statistics from `n_samples` independent random
/// scenario snapshots: random UAV pose and velocity, random nodes with
/// partially drained payloads, random traffic, and a uniform mission clock.
/// Statistics accumulate per entry over the snapshots where the entry was
/// occupied; the standard deviation is floored at `STD_FLOOR`.
pub fn compute_normalizer<R: Rng + ?Sized>(
    cfg: &SimConfig,
    codec: &CodecConfig,
    n_samples: usize,
    rng: &mut R,
) -> Normalizer {
    assert!(n_samples >= 2, "need at least two samples");
    let dim = codec.state_dim();
    let mut count = vec![0u64; dim];
    let mut sum = vec![0.0f64; dim];
    let mut sum_sq = vec![0.0f64; dim];

    for _ in 0..n_samples {
        let obs = random_snapshot(cfg, rng);
        let state = parameterize(&obs, codec, cfg);
        for i in 0..dim {
            if state.occupied[i] {
                count[i] += 1;
                sum[i] += state.values[i];
                sum_sq[i] += state.values[i] * state.values[i];
            }
        }
    }

    let mut mean = vec![0.0; dim];
    let mut std = vec![STD_FLOOR; dim];
    for i in 0..dim {
        if count[i] > 0 {
            let n = count[i] as f64;
            mean[i] = sum[i] / n;
            let var = (sum_sq[i] / n - mean[i] * mean[i]).max(0.0);
            std[i] = var.sqrt().max(STD_FLOOR);
        }
    }
    Normalizer { mean, std }
}

/// One random scene presented as an observation, mirroring the scenario
/// distribution of episode resets but with in-flight poses and payloads.
pub fn random_snapshot<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> Observation {
    use std::f64::consts::PI;
    let world = &cfg.world;
    let ep = &cfg.episode;

    let position = loop {
        let p = sample_point(&world.arena, rng);
        if !world.in_no_fly(p) {
            break p;
        }
    };
    let destination = sample_point(&world.landing, rng);
    let orientation = rng.gen_range(-PI..PI);
    let own_speed = rng.gen_range(0.0..=cfg.limits.v_max);
    let own_dir = rng.gen_range(-PI..PI);
    let own = OwnInfo {
        position,
        velocity: Vec2::new(own_dir.cos(), own_dir.sin()) * own_speed,
        radius: ep.uav_radius,
        destination,
        v_max: cfg.limits.v_max,
        orientation,
    };

    let n_nodes = rng.gen_range(ep.n_nodes_range.0..=ep.n_nodes_range.1);
    let node_rect = ep.node_area.unwrap_or(world.arena);
    let mut node_info = Vec::with_capacity(n_nodes as usize);
    for _ in 0..n_nodes {
        let p = loop {
            let p = sample_point(&node_rect, rng);
            if !world.in_no_fly(p) {
                break p;
            }
        };
        let initial = rng.gen_range(ep.data_range.0..=ep.data_range.1);
        let remaining = rng.gen_range(0.0..=initial);
        let node = crate::world::NodeState {
            position: p,
            remaining_data: remaining,
            initial_data: initial,
            transmit_power: ep.node_power,
        };
        node_info.push(NodeInfo {
            position: p,
            remaining_data: remaining,
            received_power: cfg.channel.received_power(&node, position),
        });
    }

    let n_others = rng.gen_range(ep.n_others_range.0..=ep.n_others_range.1);
    let mut sensed = Vec::new();
    for _ in 0..n_others {
        let p = sample_point(&world.arena, rng);
        let speed = rng.gen_range(0.0..=cfg.limits.v_max);
        let dir = rng.gen_range(-PI..PI);
        if position.distance(p) <= world.sensing_radius {
            sensed.push(SensedUav {
                position: p,
                velocity: Vec2::new(dir.cos(), dir.sin()) * speed,
                radius: ep.uav_radius,
            });
        }
    }

    Observation {
        own,
        sensed,
        node_info,
        time_left: rng.gen_range(0.0..=ep.deadline),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{observe, reset};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn simple_obs(
        position: Vec2,
        destination: Vec2,
        orientation: f64,
        velocity: Vec2,
        sensed: Vec<SensedUav>,
        node_info: Vec<NodeInfo>,
        time_left: f64,
    ) -> Observation {
        Observation {
            own: OwnInfo {
                position,
                velocity,
                radius: 0.3,
                destination,
                v_max: 5.0,
                orientation,
            },
            sensed,
            node_info,
            time_left,
        }
    }

    #[test]
    fn rotation_angle_quadrants() {
        assert_eq!(rotation_angle(Vec2::ZERO, Vec2::new(10.0, 0.0)), 0.0);
        assert!((rotation_angle(Vec2::ZERO, Vec2::new(0.0, 10.0)) - FRAC_PI_2).abs() < 1e-12);
        assert!(
            (rotation_angle(Vec2::ZERO, Vec2::new(-1.0, -1.0)) + 3.0 * PI / 4.0).abs() < 1e-12
        );
        assert_eq!(rotation_angle(Vec2::new(3.0, 3.0), Vec2::new(3.0, 3.0)), 0.0);
    }

    #[test]
    fn ninety_degree_rotation_example() {
        // Goal directly above: the frame rotates by pi/2, so a global +x
        // offset becomes (0, -1).
        let obs = simple_obs(
            Vec2::ZERO,
            Vec2::new(0.0, 10.0),
            0.0,
            Vec2::ZERO,
            vec![SensedUav {
                position: Vec2::new(1.0, 0.0),
                velocity: Vec2::ZERO,
                radius: 0.3,
            }],
            vec![],
            50.0,
        );
        let frame = to_agent_frame(&obs);
        assert!((frame.uavs[0].offset - Vec2::new(0.0, -1.0)).norm() < 1e-12);
    }

    #[test]
    fn zero_rotation_is_identity() {
        let obs = simple_obs(
            Vec2::new(5.0, 5.0),
            Vec2::new(15.0, 5.0),
            0.3,
            Vec2::new(1.0, 2.0),
            vec![SensedUav {
                position: Vec2::new(7.0, 9.0),
                velocity: Vec2::new(-1.0, 0.5),
                radius: 0.3,
            }],
            vec![],
            50.0,
        );
        let frame = to_agent_frame(&obs);
        assert_eq!(frame.rotation, 0.0);
        assert!((frame.own_velocity - Vec2::new(1.0, 2.0)).norm() < 1e-12);
        assert!((frame.uavs[0].offset - Vec2::new(2.0, 4.0)).norm() < 1e-12);
        assert!((frame.uavs[0].velocity - Vec2::new(-1.0, 0.5)).norm() < 1e-12);
        assert!((frame.heading - 0.3).abs() < 1e-12);
    }

    #[test]
    fn rotation_preserves_norms() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        use rand::Rng;
        for _ in 0..200 {
            let p = Vec2::new(rng.gen_range(0.0..100.0), rng.gen_range(0.0..100.0));
            let g = Vec2::new(rng.gen_range(0.0..100.0), rng.gen_range(0.0..100.0));
            let q = Vec2::new(rng.gen_range(0.0..100.0), rng.gen_range(0.0..100.0));
            let obs = simple_obs(
                p,
                g,
                0.0,
                Vec2::ZERO,
                vec![SensedUav {
                    position: q,
                    velocity: Vec2::ZERO,
                    radius: 0.3,
                }],
                vec![],
                10.0,
            );
            let frame = to_agent_frame(&obs);
            assert!((frame.uavs[0].offset.norm() - (q - p).norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn processed_features_polar_and_goal_alignment() {
        let obs = simple_obs(
            Vec2::ZERO,
            Vec2::new(10.0, 0.0),
            0.0,
            Vec2::ZERO,
            vec![SensedUav {
                position: Vec2::new(3.0, 4.0),
                velocity: Vec2::ZERO,
                radius: 0.3,
            }],
            vec![],
            10.0,
        );
        let frame = to_agent_frame(&obs);
        let blocks = process_features(&frame, &obs, 1e-6, 0.3162);
        assert!((blocks.uavs[0].features[4] - 5.0).abs() < 1e-12);
        assert!((blocks.uavs[0].features[5] - (4.0f64).atan2(3.0)).abs() < 1e-12);
        // Goal-aligned frame: a_g = 0, pgy~ = 0, pgx~ = d_g.
        assert_eq!(blocks.own[5], 0.0);
        assert!(blocks.own[3].abs() < 1e-12);
        assert!((blocks.own[2] - blocks.own[4]).abs() < 1e-12);
        assert!((blocks.own[4] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn node_at_own_position_gets_zero_bearing() {
        let node = NodeInfo {
            position: Vec2::new(20.0, 30.0),
            remaining_data: 1.0,
            received_power: 5e-7,
        };
        let obs = simple_obs(
            Vec2::new(20.0, 30.0),
            Vec2::new(90.0, 30.0),
            0.0,
            Vec2::ZERO,
            vec![],
            vec![node],
            10.0,
        );
        let frame = to_agent_frame(&obs);
        let blocks = process_features(&frame, &obs, 1e-6, 0.3162);
        assert_eq!(blocks.nodes[0].features[2], 0.0);
        assert_eq!(blocks.nodes[0].features[3], 0.0);
    }

    #[test]
    fn assemble_keeps_nearest_and_pads() {
        let codec = CodecConfig::default();
        let mk_uav = |d: f64| SensedUav {
            position: Vec2::new(d, 0.0),
            velocity: Vec2::ZERO,
            radius: 0.3,
        };
        let obs = simple_obs(
            Vec2::ZERO,
            Vec2::new(50.0, 0.0),
            0.0,
            Vec2::ZERO,
            vec![mk_uav(5.0), mk_uav(2.0), mk_uav(9.0)],
            vec![],
            10.0,
        );
        let frame = to_agent_frame(&obs);
        let blocks = process_features(&frame, &obs, 1e-6, 0.3162);
        let state = assemble(&blocks, &codec);
        assert_eq!(state.len(), 59);
        // Nearest-first: distances 2 then 5; the d entry is index 4 of each block.
        assert!((state.values[OWN_FEATURES + 4] - 2.0).abs() < 1e-12);
        assert!((state.values[OWN_FEATURES + UAV_FEATURES + 4] - 5.0).abs() < 1e-12);
        // All node slots padded.
        let node_base = OWN_FEATURES + 2 * UAV_FEATURES;
        for i in node_base..node_base + 5 * NODE_FEATURES {
            assert_eq!(state.values[i], 0.0);
            assert!(!state.occupied[i]);
        }
    }

    #[test]
    fn assemble_skips_depleted_and_drops_farthest() {
        let codec = CodecConfig::default();
        let mk_node = |d: f64, remaining: f64| NodeInfo {
            position: Vec2::new(d, 0.0),
            remaining_data: remaining,
            received_power: 1e-7,
        };
        // Six active nodes: the farthest is dropped. One depleted node
        // in between never occupies a slot.
        let obs = simple_obs(
            Vec2::ZERO,
            Vec2::new(50.0, 0.0),
            0.0,
            Vec2::ZERO,
            vec![],
            vec![
                mk_node(10.0, 1.0),
                mk_node(4.0, 0.0),
                mk_node(20.0, 1.0),
                mk_node(30.0, 1.0),
                mk_node(40.0, 1.0),
                mk_node(50.0, 1.0),
                mk_node(60.0, 1.0),
            ],
            10.0,
        );
        let frame = to_agent_frame(&obs);
        let blocks = process_features(&frame, &obs, 1e-6, 0.3162);
        let state = assemble(&blocks, &codec);
        let node_base = OWN_FEATURES + 2 * UAV_FEATURES;
        let ds: Vec<f64> = (0..5)
            .map(|k| state.values[node_base + k * NODE_FEATURES + 2])
            .collect();
        assert_eq!(ds, vec![10.0, 20.0, 30.0, 40.0, 50.0]);
    }

    #[test]
    fn masked_codec_zeroes_uav_slots() {
        let codec = CodecConfig {
            mask_other_uavs: true,
            ..CodecConfig::default()
        };
        let obs = simple_obs(
            Vec2::ZERO,
            Vec2::new(50.0, 0.0),
            0.0,
            Vec2::ZERO,
            vec![SensedUav {
                position: Vec2::new(1.0, 1.0),
                velocity: Vec2::new(2.0, 0.0),
                radius: 0.3,
            }],
            vec![],
            10.0,
        );
        let frame = to_agent_frame(&obs);
        let blocks = process_features(&frame, &obs, 1e-6, 0.3162);
        let state = assemble(&blocks, &codec);
        for i in OWN_FEATURES..OWN_FEATURES + 2 * UAV_FEATURES {
            assert_eq!(state.values[i], 0.0);
            assert!(!state.occupied[i]);
        }
    }

    #[test]
    fn state_length_fixed_across_episode() {
        let cfg = SimConfig::default();
        let codec = CodecConfig::default();
        let space = crate::kinematics::ActionSpace::build(&cfg.limits, 5, 7).unwrap();
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut s = reset(&cfg, &mut rng).unwrap();
        for _ in 0..50 {
            let state = parameterize(&observe(&s, &cfg), &codec, &cfg);
            assert_eq!(state.len(), 59);
            // Nearest-first ordering within occupied node slots.
            let node_base = OWN_FEATURES + 2 * UAV_FEATURES;
            let mut prev = 0.0;
            for k in 0..5 {
                let base = node_base + k * NODE_FEATURES;
                if state.occupied[base] {
                    assert!(state.values[base + 2] >= prev);
                    prev = state.values[base + 2];
                }
            }
            let (next, out) = crate::environment::step(
                &s,
                rng.gen_range(0..space.len()),
                &space,
                &cfg,
                &mut rng,
            );
            s = next;
            if out.terminal {
                break;
            }
        }
    }

    #[test]
    fn normalize_affine_checks() {
        let n = Normalizer {
            mean: vec![1.0, 2.0],
            std: vec![0.5, 4.0],
        };
        let at_mean = ParamState {
            values: vec![1.0, 2.0],
            occupied: vec![true, true],
        };
        assert_eq!(n.normalize(&at_mean), vec![0.0, 0.0]);
        let above = ParamState {
            values: vec![1.5, 6.0],
            occupied: vec![true, true],
        };
        assert_eq!(n.normalize(&above), vec![1.0, 1.0]);
        // Padded entries bypass the affine map entirely.
        let padded = ParamState {
            values: vec![0.0, 6.0],
            occupied: vec![false, true],
        };
        assert_eq!(n.normalize(&padded), vec![0.0, 1.0]);
    }

    #[test]
    #[should_panic(expected = "length")]
    fn normalize_rejects_length_mismatch() {
        let n = Normalizer::identity(3);
        let s = ParamState {
            values: vec![0.0; 2],
            occupied: vec![true; 2],
        };
        n.normalize(&s);
    }

    #[test]
    fn normalizer_deterministic_and_floored() {
        let cfg = SimConfig::default();
        let codec = CodecConfig::default();
        let mut r1 = ChaCha8Rng::seed_from_u64(10);
        let mut r2 = ChaCha8Rng::seed_from_u64(10);
        let n1 = compute_normalizer(&cfg, &codec, 2000, &mut r1);
        let n2 = compute_normalizer(&cfg, &codec, 2000, &mut r2);
        assert_eq!(n1, n2);
        // Radius and v_max are constant across snapshots: std clamps to the
        // floor and the normalized value of a fresh draw is 0.
        assert_eq!(n1.std[6], STD_FLOOR);
        assert_eq!(n1.std[7], STD_FLOOR);
        let obs = random_snapshot(&cfg, &mut r1);
        let state = parameterize(&obs, &codec, &cfg);
        let z = n1.normalize(&state);
        assert!(z[6].abs() < 1e-6);
        assert!(z[7].abs() < 1e-6);
    }

    #[test]
    fn normalizer_self_consistency_on_fresh_draws() {
        // Boost occupancy of the UAV slots so every entry gets enough
        // samples: wide sensing and dense traffic.
        let mut cfg = SimConfig::default();
        cfg.world.sensing_radius = 30.0;
        cfg.episode.n_others_range = (5, 10);
        let codec = CodecConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let n = compute_normalizer(&cfg, &codec, 60_000, &mut rng);

        let dim = codec.state_dim();
        let mut count = vec![0u64; dim];
        let mut sum = vec![0.0; dim];
        let mut sum_sq = vec![0.0; dim];
        for _ in 0..60_000 {
            let obs = random_snapshot(&cfg, &mut rng);
            let state = parameterize(&obs, &codec, &cfg);
            let z = n.normalize(&state);
            for i in 0..dim {
                if state.occupied[i] {
                    count[i] += 1;
                    sum[i] += z[i];
                    sum_sq[i] += z[i] * z[i];
                }
            }
        }
        for i in 0..dim {
            if n.std[i] <= STD_FLOOR || count[i] < 5000 {
                continue; // degenerate or under-sampled entry
            }
            let m = sum[i] / count[i] as f64;
            let sd = (sum_sq[i] / count[i] as f64 - m * m).sqrt();
            assert!(m.abs() < 0.05, "entry {i}: mean {m}");
            assert!((sd - 1.0).abs() < 0.05, "entry {i}: std {sd}");
        }
    }
}
