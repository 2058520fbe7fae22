//! Optimal reciprocal collision avoidance for the background UAVs.
//!
//! Each background agent seeks its goal in a straight line and resolves
//! conflicts through velocity-obstacle half-planes with the reciprocal 1/2
//! responsibility split, following the classic RVO2 construction: one
//! half-plane per neighbor, a 2D incremental linear program for the closest
//! admissible velocity, and a max-violation fallback when infeasible.
//!
//! The update is synchronous: every agent decides from the same snapshot of
//! the previous tick, then all positions integrate at once.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::world::{sample_point, UavBody, Vec2, WorldConfig};

/// An agent within this distance of its goal is considered arrived and is
/// handed a fresh goal on the next tick.
const GOAL_EPS: f64 = 0.5;

/// Tuning knobs for the background traffic.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OrcaParams {
    /// Lookahead over which velocity obstacles are truncated.
    pub time_horizon: f64,
    /// Only neighbors within this distance produce constraints.
    pub neighbor_range: f64,
    /// At most this many nearest neighbors are considered.
    pub max_neighbors: usize,
    /// Cruise speed toward the goal.
    pub pref_speed: f64,
    /// Extra clearance added to the combined radius when building
    /// constraints. Symmetric encounters otherwise resolve to exact
    /// boundary contact, which the collision predicate counts.
    pub safety_margin: f64,
    /// When set, the nearest point of each no-fly rectangle acts as a
    /// static neighbor. Off by default: background traffic is unconstrained.
    pub avoid_no_fly: bool,
}

impl Default for OrcaParams {
    fn default() -> Self {
        OrcaParams {
            time_horizon: 5.0,
            neighbor_range: 10.0,
            max_neighbors: 10,
            pref_speed: 5.0,
            safety_margin: 0.1,
            avoid_no_fly: false,
        }
    }
}

impl OrcaParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.time_horizon > 0.0) {
            return Err("ORCA time horizon must be positive".into());
        }
        if !(self.neighbor_range > 0.0) {
            return Err("ORCA neighbor range must be positive".into());
        }
        Ok(())
    }
}

/// How the background UAVs pick their velocities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OthersPolicy {
    /// Reciprocal collision avoidance (the default).
    Orca,
    /// Straight to the goal, ignoring everyone. Stress-test traffic.
    Straight,
}

/// A permitted-velocity half-plane: velocities `v` with
/// `(v - point) . normal >= 0` are admissible.
#[derive(Debug, Clone, Copy)]
pub struct HalfPlane {
    pub point: Vec2,
    pub normal: Vec2,
}

impl HalfPlane {
    /// Boundary direction such that the admissible side lies to its left.
    fn direction(&self) -> Vec2 {
        Vec2::new(self.normal.y, -self.normal.x)
    }

    fn violation(&self, v: Vec2) -> f64 {
        -(v - self.point).dot(self.normal)
    }
}

/// A background UAV and its current goal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OtherUav {
    pub body: UavBody,
    pub goal: Vec2,
}

/// Builds one half-plane per neighbor within `neighbor_range` (nearest
/// `max_neighbors` of them) from the velocity obstacle truncated at the
/// time horizon, with the reciprocal 1/2 responsibility split. Overlapping
/// discs produce a constraint that resolves the penetration within `dt`.
pub fn orca_halfplanes(
    agent: &UavBody,
    neighbors: &[UavBody],
    params: &OrcaParams,
    dt: f64,
) -> Vec<HalfPlane> {
    let mut ranked: Vec<(f64, usize)> = neighbors
        .iter()
        .enumerate()
        .map(|(i, n)| (agent.position.distance(n.position), i))
        .filter(|(d, _)| *d <= params.neighbor_range)
        .collect();
    ranked.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ranked.truncate(params.max_neighbors);

    ranked
        .into_iter()
        .map(|(_, i)| {
            halfplane_for_neighbor(agent, &neighbors[i], params.time_horizon, params.safety_margin, dt)
        })
        .collect()
}

fn halfplane_for_neighbor(
    agent: &UavBody,
    neighbor: &UavBody,
    time_horizon: f64,
    safety_margin: f64,
    dt: f64,
) -> HalfPlane {
    let rel_pos = neighbor.position - agent.position;
    let rel_vel = agent.velocity - neighbor.velocity;
    let dist_sq = rel_pos.norm_sq();
    let combined = agent.radius + neighbor.radius + safety_margin;
    let combined_sq = combined * combined;

    let normal;
    let u;

    if dist_sq > combined_sq {
        // Not yet overlapping: velocity obstacle truncated at the horizon.
        let inv_horizon = 1.0 / time_horizon;
        let w = rel_vel - rel_pos * inv_horizon;
        let w_len_sq = w.norm_sq();
        let dot1 = w.dot(rel_pos);

        if dot1 < 0.0 && dot1 * dot1 > combined_sq * w_len_sq {
            // Closest to the truncation disc.
            let w_len = w_len_sq.sqrt();
            let unit_w = w / w_len;
            normal = unit_w;
            u = unit_w * (combined * inv_horizon - w_len);
        } else {
            // Closest to one of the cone legs.
            let leg = (dist_sq - combined_sq).sqrt();
            let direction = if rel_pos.det(w) > 0.0 {
                Vec2::new(
                    rel_pos.x * leg - rel_pos.y * combined,
                    rel_pos.x * combined + rel_pos.y * leg,
                ) / dist_sq
            } else {
                -Vec2::new(
                    rel_pos.x * leg + rel_pos.y * combined,
                    -rel_pos.x * combined + rel_pos.y * leg,
                ) / dist_sq
            };
            normal = direction.perp();
            u = direction * rel_vel.dot(direction) - rel_vel;
        }
    } else {
        // Already overlapping: push apart within one step.
        let inv_dt = 1.0 / dt;
        let w = rel_vel - rel_pos * inv_dt;
        let w_len = w.norm();
        let unit_w = if w_len > 1e-12 {
            w / w_len
        } else {
            // Exactly matched closing velocity; separate along the offset.
            (-rel_pos).normalized()
        };
        normal = unit_w;
        u = unit_w * (combined * inv_dt - w_len);
    }

    HalfPlane {
        point: agent.velocity + u * 0.5,
        normal,
    }
}

/// Velocity of magnitude at most `v_max` closest to `preferred` that
/// satisfies every half-plane; when infeasible, the velocity minimizing the
/// largest violation.
pub fn solve_velocity(halfplanes: &[HalfPlane], preferred: Vec2, v_max: f64) -> Vec2 {
    let (mut result, fail) = linear_program_2(halfplanes, preferred, v_max, false);
    if fail < halfplanes.len() {
        result = linear_program_3(halfplanes, fail, result, v_max);
    }
    result
}

/// Optimizes along the boundary of constraint `index`, honoring all prior
/// constraints and the speed disc. `None` when the segment is empty.
fn linear_program_1(
    halfplanes: &[HalfPlane],
    index: usize,
    opt: Vec2,
    v_max: f64,
    optimize_direction: bool,
) -> Option<Vec2> {
    let line_point = halfplanes[index].point;
    let line_dir = halfplanes[index].direction();
    let dot = line_point.dot(line_dir);
    let discriminant = dot * dot + v_max * v_max - line_point.norm_sq();
    if discriminant < 0.0 {
        return None;
    }
    let sqrt_disc = discriminant.sqrt();
    let mut t_left = -dot - sqrt_disc;
    let mut t_right = -dot + sqrt_disc;

    for prior in &halfplanes[..index] {
        let prior_dir = prior.direction();
        let denom = line_dir.det(prior_dir);
        let numer = prior_dir.det(line_point - prior.point);
        if denom.abs() <= 1e-12 {
            // Near-parallel boundaries.
            if numer < 0.0 {
                return None;
            }
            continue;
        }
        let t = numer / denom;
        if denom >= 0.0 {
            t_right = t_right.min(t);
        } else {
            t_left = t_left.max(t);
        }
        if t_left > t_right {
            return None;
        }
    }

    let t = if optimize_direction {
        if opt.dot(line_dir) > 0.0 {
            t_right
        } else {
            t_left
        }
    } else {
        (line_dir.dot(opt - line_point)).clamp(t_left, t_right)
    };
    Some(line_point + line_dir * t)
}

/// Incremental 2D linear program. Returns the best velocity and the index
/// of the first infeasible constraint (`halfplanes.len()` when feasible).
fn linear_program_2(
    halfplanes: &[HalfPlane],
    opt: Vec2,
    v_max: f64,
    optimize_direction: bool,
) -> (Vec2, usize) {
    let mut result = if optimize_direction {
        opt.normalized() * v_max
    } else if opt.norm_sq() > v_max * v_max {
        opt.normalized() * v_max
    } else {
        opt
    };

    for (i, hp) in halfplanes.iter().enumerate() {
        if hp.violation(result) > 0.0 {
            match linear_program_1(halfplanes, i, opt, v_max, optimize_direction) {
                Some(v) => result = v,
                None => return (result, i),
            }
        }
    }
    (result, halfplanes.len())
}

/// Infeasibility fallback: walks the remaining constraints and minimizes the
/// maximum violation by optimizing along each violated boundary projected
/// against the previous ones.
fn linear_program_3(
    halfplanes: &[HalfPlane],
    begin: usize,
    current: Vec2,
    v_max: f64,
) -> Vec2 {
    let mut result = current;
    let mut distance = 0.0;

    for i in begin..halfplanes.len() {
        if halfplanes[i].violation(result) <= distance {
            continue;
        }
        let dir_i = halfplanes[i].direction();
        let mut projected: Vec<HalfPlane> = Vec::with_capacity(i);
        for hp in &halfplanes[..i] {
            let dir_j = hp.direction();
            let denom = dir_i.det(dir_j);
            let point = if denom.abs() <= 1e-12 {
                if dir_i.dot(dir_j) > 0.0 {
                    continue; // Same direction: redundant.
                }
                (halfplanes[i].point + hp.point) * 0.5
            } else {
                halfplanes[i].point + dir_i * (dir_j.det(halfplanes[i].point - hp.point) / denom)
            };
            let direction = (dir_j - dir_i).normalized();
            projected.push(HalfPlane {
                point,
                normal: direction.perp(),
            });
        }

        let previous = result;
        let (candidate, fail) = linear_program_2(&projected, halfplanes[i].normal, v_max, true);
        // The projected program should always be feasible; keep the previous
        // point if numerics say otherwise.
        result = if fail < projected.len() { previous } else { candidate };
        distance = halfplanes[i].violation(result);
    }
    result
}

/// Advances every background agent by one synchronous step. The typical UAV,
/// when provided, is treated as one more neighbor to avoid; it does not
/// coordinate back. Agents that reached their goal receive a fresh uniform
/// goal in the arena.
pub fn step_others<R: Rng + ?Sized>(
    agents: &[OtherUav],
    typical: Option<&UavBody>,
    params: &OrcaParams,
    policy: OthersPolicy,
    world: &WorldConfig,
    dt: f64,
    rng: &mut R,
) -> Vec<OtherUav> {
    let mut next = Vec::with_capacity(agents.len());
    for (i, agent) in agents.iter().enumerate() {
        let delta = agent.goal - agent.body.position;
        let dist = delta.norm();
        let preferred = if dist <= GOAL_EPS {
            Vec2::ZERO
        } else {
            delta.normalized() * params.pref_speed.min(dist / dt)
        };

        let velocity = match policy {
            OthersPolicy::Straight => cap_speed(preferred, agent.body.v_max),
            OthersPolicy::Orca => {
                let mut neighbors: Vec<UavBody> = agents
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, a)| a.body)
                    .collect();
                if let Some(t) = typical {
                    neighbors.push(*t);
                }
                if params.avoid_no_fly {
                    for rect in &world.no_fly {
                        let q = rect.clamp_point(agent.body.position);
                        if q.distance(agent.body.position) > 1e-9 {
                            let mut wall = UavBody::new(q, 0.0, 0.0);
                            wall.radius = 0.0;
                            neighbors.push(wall);
                        }
                    }
                }
                let planes = orca_halfplanes(&agent.body, &neighbors, params, dt);
                solve_velocity(&planes, preferred, agent.body.v_max)
            }
        };

        let mut body = agent.body;
        body.velocity = velocity;
        body.position = world.arena.clamp_point(body.position + velocity * dt);
        if velocity.norm() > 1e-9 {
            body.orientation = velocity.y.atan2(velocity.x);
        }

        let goal = if body.position.distance(agent.goal) <= GOAL_EPS {
            sample_point(&world.arena, rng)
        } else {
            agent.goal
        };
        next.push(OtherUav { body, goal });
    }
    next
}

fn cap_speed(v: Vec2, v_max: f64) -> Vec2 {
    if v.norm_sq() > v_max * v_max {
        v.normalized() * v_max
    } else {
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::min_separation_over_step;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn agent(p: Vec2, v: Vec2, goal: Vec2) -> OtherUav {
        let mut body = UavBody::new(p, 0.3, 5.0);
        body.velocity = v;
        OtherUav { body, goal }
    }

    #[test]
    fn no_neighbors_no_planes() {
        let body = UavBody::new(Vec2::ZERO, 0.3, 5.0);
        let planes = orca_halfplanes(&body, &[], &OrcaParams::default(), 1.0);
        assert!(planes.is_empty());
    }

    #[test]
    fn static_separated_neighbor_permits_stationary() {
        let body = UavBody::new(Vec2::ZERO, 0.3, 5.0);
        let neighbor = UavBody::new(Vec2::new(5.0, 0.0), 0.3, 5.0);
        let planes = orca_halfplanes(&body, &[neighbor], &OrcaParams::default(), 1.0);
        assert_eq!(planes.len(), 1);
        // Zero relative velocity is outside the velocity obstacle.
        assert!(planes[0].violation(Vec2::ZERO) <= 1e-12);
        assert!((planes[0].normal.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn head_on_halfplanes_mirror() {
        let mut a = UavBody::new(Vec2::ZERO, 0.3, 5.0);
        a.velocity = Vec2::new(5.0, 0.0);
        let mut b = UavBody::new(Vec2::new(10.0, 0.0), 0.3, 5.0);
        b.velocity = Vec2::new(-5.0, 0.0);
        let pa = orca_halfplanes(&a, &[b], &OrcaParams::default(), 1.0);
        let pb = orca_halfplanes(&b, &[a], &OrcaParams::default(), 1.0);
        assert_eq!(pa.len(), 1);
        assert_eq!(pb.len(), 1);
        // The scene maps onto itself under point reflection, so the two
        // half-planes must be reflections of each other.
        assert!((pa[0].point + pb[0].point).norm() < 1e-9);
        assert!((pa[0].normal + pb[0].normal).norm() < 1e-9);
    }

    #[test]
    fn solve_velocity_unconstrained() {
        let v = solve_velocity(&[], Vec2::new(2.0, 1.0), 5.0);
        assert!((v - Vec2::new(2.0, 1.0)).norm() < 1e-12);
        let v = solve_velocity(&[], Vec2::new(30.0, 40.0), 5.0);
        assert!((v - Vec2::new(3.0, 4.0)).norm() < 1e-9);
    }

    #[test]
    fn solve_velocity_projects_onto_boundary() {
        // Half-plane requiring v.y >= 1.
        let hp = HalfPlane {
            point: Vec2::new(0.0, 1.0),
            normal: Vec2::new(0.0, 1.0),
        };
        let v = solve_velocity(&[hp], Vec2::new(2.0, 0.0), 5.0);
        assert!((v - Vec2::new(2.0, 1.0)).norm() < 1e-9);
    }

    #[test]
    fn single_agent_moves_straight() {
        let world = WorldConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = agent(Vec2::new(20.0, 20.0), Vec2::ZERO, Vec2::new(30.0, 20.0));
        let next = step_others(
            &[a],
            None,
            &OrcaParams::default(),
            OthersPolicy::Orca,
            &world,
            1.0,
            &mut rng,
        );
        assert!((next[0].body.position - Vec2::new(25.0, 20.0)).norm() < 1e-9);
    }

    #[test]
    fn agent_at_goal_stops_then_retargets() {
        let world = WorldConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let goal = Vec2::new(40.0, 40.0);
        let a = agent(goal, Vec2::new(3.0, 0.0), goal);
        let next = step_others(
            &[a],
            None,
            &OrcaParams::default(),
            OthersPolicy::Orca,
            &world,
            1.0,
            &mut rng,
        );
        assert_eq!(next[0].body.velocity, Vec2::ZERO);
        assert!(next[0].goal != goal);
    }

    #[test]
    fn head_on_swap_is_collision_free_and_symmetric() {
        let world = WorldConfig::default();
        let params = OrcaParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let start_a = Vec2::new(30.0, 50.0);
        let start_b = Vec2::new(70.0, 50.0);
        let mid = (start_a + start_b) * 0.5;
        let mut agents = vec![agent(start_a, Vec2::ZERO, start_b), agent(start_b, Vec2::ZERO, start_a)];
        for _ in 0..60 {
            let prev = agents.clone();
            agents = step_others(
                &agents,
                None,
                &params,
                OthersPolicy::Orca,
                &world,
                1.0,
                &mut rng,
            );
            let track = |p: &OtherUav, n: &OtherUav| UavBody {
                position: p.body.position,
                velocity: n.body.position - p.body.position,
                ..p.body
            };
            let sep = min_separation_over_step(
                &track(&prev[0], &agents[0]),
                &track(&prev[1], &agents[1]),
                1.0,
            );
            assert!(
                sep > prev[0].body.radius + prev[1].body.radius,
                "separation {sep}"
            );
            // Mirror symmetry about the midpoint.
            let m0 = agents[0].body.position - mid;
            let m1 = agents[1].body.position - mid;
            assert!((m0 + m1).norm() < 1e-6);
            if agents[0].body.position.distance(start_b) <= 1.0
                && agents[1].body.position.distance(start_a) <= 1.0
            {
                return;
            }
        }
        panic!("agents failed to swap positions within 60 steps");
    }

    #[test]
    fn output_speed_respects_cap() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        use rand::Rng;
        for _ in 0..200 {
            let planes: Vec<HalfPlane> = (0..rng.gen_range(0..6))
                .map(|_| {
                    let angle = rng.gen_range(-3.14..3.14);
                    HalfPlane {
                        point: Vec2::new(rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)),
                        normal: Vec2::new(f64::cos(angle), f64::sin(angle)),
                    }
                })
                .collect();
            let preferred = Vec2::new(rng.gen_range(-8.0..8.0), rng.gen_range(-8.0..8.0));
            let v = solve_velocity(&planes, preferred, 5.0);
            assert!(v.norm() <= 5.0 + 1e-9);
        }
    }
}
