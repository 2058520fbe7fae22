//! Shared fixtures for the criterion benches.

use skyharvest_core::environment::SimConfig;
use skyharvest_core::kinematics::ActionSpace;

/// Default simulation bundle plus its action space.
pub fn default_setup() -> (SimConfig, ActionSpace) {
    let sim = SimConfig::default();
    let space = ActionSpace::build(&sim.limits, 5, 7).expect("default grid is valid");
    (sim, space)
}
