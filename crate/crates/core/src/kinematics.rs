//! Discrete action space and the motion update for the typical UAV.
//!
//! Actions are (speed, turn) pairs sampled on a grid that respects the speed
//! and per-step rotation limits, plus one hover action. Moves that would
//! enter a no-fly zone or leave the arena are blocked in place.

use serde::{Deserialize, Serialize};

use crate::world::{wrap_angle, UavBody, Vec2, WorldConfig};

/// Speed and turn-rate limits together with the step duration.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct KinematicLimits {
    pub v_max: f64,
    /// Maximum rotation per unit time, radians.
    pub max_turn_rate: f64,
    pub dt: f64,
}

impl Default for KinematicLimits {
    fn default() -> Self {
        KinematicLimits {
            v_max: 5.0,
            max_turn_rate: std::f64::consts::FRAC_PI_3,
            dt: 1.0,
        }
    }
}

impl KinematicLimits {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.v_max > 0.0) {
            return Err("v_max must be positive".into());
        }
        if !(self.max_turn_rate > 0.0) {
            return Err("turn rate must be positive".into());
        }
        if !(self.dt > 0.0) {
            return Err("dt must be positive".into());
        }
        Ok(())
    }

    /// Largest admissible per-step heading change.
    pub fn max_turn(&self) -> f64 {
        self.dt * self.max_turn_rate
    }
}

/// One admissible move: commanded speed and heading change for the step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub speed: f64,
    pub turn: f64,
}

/// Ordered set of admissible actions; the index of an action is its
/// identifier throughout the learner.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ActionSpace {
    actions: Vec<Action>,
}

impl ActionSpace {
    /// Grid of `n_speeds` speeds evenly spaced over `(0, v_max]` times
    /// `n_turns` turns evenly spaced over `[-dt*Tr, +dt*Tr]`, plus a final
    /// hover action. `n_turns` must be odd so the zero turn is included.
    pub fn build(limits: &KinematicLimits, n_speeds: usize, n_turns: usize) -> Result<Self, String> {
        if n_speeds < 1 {
            return Err("need at least one speed".into());
        }
        if n_turns < 1 || n_turns % 2 == 0 {
            return Err("n_turns must be odd so the zero turn is representable".into());
        }
        let max_turn = limits.max_turn();
        let mut actions = Vec::with_capacity(n_speeds * n_turns + 1);
        for si in 1..=n_speeds {
            let speed = limits.v_max * si as f64 / n_speeds as f64;
            for ti in 0..n_turns {
                let turn = if n_turns == 1 {
                    0.0
                } else {
                    -max_turn + 2.0 * max_turn * ti as f64 / (n_turns - 1) as f64
                };
                actions.push(Action { speed, turn });
            }
        }
        actions.push(Action {
            speed: 0.0,
            turn: 0.0,
        });
        Ok(ActionSpace { actions })
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn get(&self, index: usize) -> Action {
        self.actions[index]
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }
}

/// Result of applying an action: the moved body and whether the move was
/// blocked by a no-fly zone or the arena boundary.
#[derive(Debug, Clone, Copy)]
pub struct MoveOutcome {
    pub body: UavBody,
    pub blocked: bool,
}

/// Advances a body by one action. The heading always updates; the position
/// freezes in place when the candidate point is forbidden, with the
/// attempted velocity retained for bookkeeping.
pub fn apply_action(
    body: &UavBody,
    action: Action,
    limits: &KinematicLimits,
    world: &WorldConfig,
) -> MoveOutcome {
    debug_assert!(action.speed <= limits.v_max + 1e-9);
    debug_assert!(action.turn.abs() <= limits.max_turn() + 1e-9);
    let orientation = wrap_angle(body.orientation + action.turn);
    let velocity = Vec2::new(orientation.cos(), orientation.sin()) * action.speed;
    let candidate = body.position + velocity * limits.dt;
    let blocked = world.in_no_fly(candidate) || !world.arena.contains(candidate);
    MoveOutcome {
        body: UavBody {
            position: if blocked { body.position } else { candidate },
            velocity,
            orientation,
            ..*body
        },
        blocked,
    }
}
