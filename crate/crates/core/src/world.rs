//! Arena geometry, bodies, and collision predicates.
//!
//! The world is a flat 2D map at a fixed flight altitude: every UAV is a
//! disc moving in the plane, IoT nodes are ground points, and no-fly zones
//! are axis-aligned rectangles. All operations here are pure functions over
//! immutable values.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// 2D point / vector with the handful of operations the simulator needs.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// 2D cross product (determinant of the 2x2 matrix [self, other]).
    pub fn det(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    /// Unit vector; zero stays zero.
    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        if n > 0.0 {
            self / n
        } else {
            Vec2::ZERO
        }
    }

    /// Counter-clockwise perpendicular (rotation by +90 degrees).
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn scale(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl std::ops::Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl std::ops::Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl std::ops::Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        self.scale(rhs)
    }
}

impl std::ops::Div<f64> for Vec2 {
    type Output = Vec2;
    fn div(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x / rhs, self.y / rhs)
    }
}

impl std::ops::Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut w = a.rem_euclid(two_pi);
    if w > std::f64::consts::PI {
        w -= two_pi;
    }
    w
}

/// Axis-aligned rectangle with closed boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Rect {
    /// Builds a rectangle, rejecting empty or inverted extents.
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Rect, WorldError> {
        let r = Rect {
            x_min,
            x_max,
            y_min,
            y_max,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        if !(self.x_min < self.x_max) || !(self.y_min < self.y_max) {
            return Err(WorldError::DegenerateRect {
                x_min: self.x_min,
                x_max: self.x_max,
                y_min: self.y_min,
                y_max: self.y_max,
            });
        }
        Ok(())
    }

    /// True iff `p` lies inside or on the boundary.
    pub fn contains(&self, p: Vec2) -> bool {
        self.x_min <= p.x && p.x <= self.x_max && self.y_min <= p.y && p.y <= self.y_max
    }

    /// True iff `other` lies entirely inside this rectangle.
    pub fn contains_rect(&self, other: &Rect) -> bool {
        self.x_min <= other.x_min
            && other.x_max <= self.x_max
            && self.y_min <= other.y_min
            && other.y_max <= self.y_max
    }

    /// True iff the two closed rectangles share at least one point.
    pub fn intersects(&self, other: &Rect) -> bool {
        self.x_min <= other.x_max
            && other.x_min <= self.x_max
            && self.y_min <= other.y_max
            && other.y_min <= self.y_max
    }

    /// Closest point of the rectangle to `p` (is `p` itself when inside).
    pub fn clamp_point(&self, p: Vec2) -> Vec2 {
        Vec2::new(
            p.x.clamp(self.x_min, self.x_max),
            p.y.clamp(self.y_min, self.y_max),
        )
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum WorldError {
    #[error("degenerate rectangle [{x_min},{x_max}]x[{y_min},{y_max}]")]
    DegenerateRect {
        x_min: f64,
        x_max: f64,
        y_min: f64,
        y_max: f64,
    },
    #[error("{0}")]
    Invalid(String),
}

/// Static description of the arena: bounds, forbidden zones, departure and
/// landing strips, flight altitude, and the sensing radius of the typical UAV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub arena: Rect,
    pub no_fly: Vec<Rect>,
    pub departure: Rect,
    pub landing: Rect,
    pub altitude: f64,
    pub sensing_radius: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            arena: Rect {
                x_min: 0.0,
                x_max: 100.0,
                y_min: 0.0,
                y_max: 100.0,
            },
            // Two blocks that force detours between the departure and
            // landing strips. Layout is configurable.
            no_fly: vec![
                Rect {
                    x_min: 30.0,
                    x_max: 45.0,
                    y_min: 55.0,
                    y_max: 70.0,
                },
                Rect {
                    x_min: 60.0,
                    x_max: 75.0,
                    y_min: 20.0,
                    y_max: 35.0,
                },
            ],
            departure: Rect {
                x_min: 0.0,
                x_max: 10.0,
                y_min: 0.0,
                y_max: 100.0,
            },
            landing: Rect {
                x_min: 90.0,
                x_max: 100.0,
                y_min: 0.0,
                y_max: 100.0,
            },
            altitude: 50.0,
            sensing_radius: 10.0,
        }
    }
}

impl WorldConfig {
    /// Checks every structural invariant of the world layout.
    pub fn validate(&self) -> Result<(), WorldError> {
        self.arena.validate()?;
        self.departure.validate()?;
        self.landing.validate()?;
        for r in &self.no_fly {
            r.validate()?;
        }
        if !self.arena.contains_rect(&self.departure) {
            return Err(WorldError::Invalid(
                "departure area must lie inside the arena".into(),
            ));
        }
        if !self.arena.contains_rect(&self.landing) {
            return Err(WorldError::Invalid(
                "landing area must lie inside the arena".into(),
            ));
        }
        for (i, r) in self.no_fly.iter().enumerate() {
            if !self.arena.contains_rect(r) {
                return Err(WorldError::Invalid(format!(
                    "no-fly zone {i} must lie inside the arena"
                )));
            }
            if r.intersects(&self.departure) {
                return Err(WorldError::Invalid(format!(
                    "no-fly zone {i} overlaps the departure area"
                )));
            }
            if r.intersects(&self.landing) {
                return Err(WorldError::Invalid(format!(
                    "no-fly zone {i} overlaps the landing area"
                )));
            }
        }
        if self.departure.intersects(&self.landing) {
            return Err(WorldError::Invalid(
                "departure and landing areas must be disjoint".into(),
            ));
        }
        if !(self.altitude > 0.0) {
            return Err(WorldError::Invalid("altitude must be positive".into()));
        }
        if !(self.sensing_radius > 0.0) {
            return Err(WorldError::Invalid(
                "sensing radius must be positive".into(),
            ));
        }
        Ok(())
    }

    /// True iff `p` lies in any no-fly rectangle.
    pub fn in_no_fly(&self, p: Vec2) -> bool {
        self.no_fly.iter().any(|r| r.contains(p))
    }
}

/// A disc-shaped UAV: position, velocity, radius, heading, and speed limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UavBody {
    pub position: Vec2,
    pub velocity: Vec2,
    pub radius: f64,
    /// Heading in radians, wrapped to (-pi, pi].
    pub orientation: f64,
    pub v_max: f64,
}

impl UavBody {
    pub fn new(position: Vec2, radius: f64, v_max: f64) -> Self {
        UavBody {
            position,
            velocity: Vec2::ZERO,
            radius,
            orientation: 0.0,
            v_max,
        }
    }
}

/// A static ground transmitter with a finite payload left to upload.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeState {
    pub position: Vec2,
    /// Data still to be collected, in data units.
    pub remaining_data: f64,
    pub initial_data: f64,
    /// Transmit power in linear watts.
    pub transmit_power: f64,
}

impl NodeState {
    pub fn is_active(&self) -> bool {
        self.remaining_data > 0.0
    }
}

/// True iff the two discs touch or overlap. Boundary contact counts as a
/// collision (conservative reading of the separation constraint).
pub fn uav_collision(a: &UavBody, b: &UavBody) -> bool {
    a.position.distance(b.position) <= a.radius + b.radius
}

/// Minimum distance between two bodies moving linearly at their current
/// velocities over `[0, dt]`, in closed form.
///
/// The squared distance is a quadratic in the time offset; its unconstrained
/// minimizer is clamped to the step interval.
pub fn min_separation_over_step(a: &UavBody, b: &UavBody, dt: f64) -> f64 {
    debug_assert!(dt > 0.0);
    let dp = a.position - b.position;
    let dv = a.velocity - b.velocity;
    let speed_sq = dv.norm_sq();
    let tau = if speed_sq > 0.0 {
        (-dp.dot(dv) / speed_sq).clamp(0.0, dt)
    } else {
        0.0
    };
    (dp + dv * tau).norm()
}

/// Uniform sample inside a rectangle.
pub fn sample_point<R: Rng + ?Sized>(rect: &Rect, rng: &mut R) -> Vec2 {
    Vec2::new(
        rng.gen_range(rect.x_min..=rect.x_max),
        rng.gen_range(rect.y_min..=rect.y_max),
    )
}
