//! Simulation and learning toolkit for multi-UAV data-collection path
//! planning: a 2D world of disc-shaped UAVs over IoT ground nodes, an
//! SNR-gated TDMA uplink, reciprocal collision avoidance for background
//! traffic, and a dueling double deep Q-network planner for the typical
//! UAV, trained and evaluated entirely on the CPU.

pub mod channel;
pub mod checkpoint;
pub mod config;
pub mod d3qn;
pub mod environment;
pub mod evaluation;
pub mod kinematics;
pub mod nn;
pub mod orca;
pub mod rngs;
pub mod statecodec;
pub mod world;

pub use channel::ChannelParams;
pub use environment::{EnvState, EpisodeConfig, Observation, SimConfig, StepOutcome};
pub use kinematics::{Action, ActionSpace, KinematicLimits};
pub use nn::NetworkParams;
pub use orca::{OrcaParams, OtherUav, OthersPolicy};
pub use statecodec::{CodecConfig, Normalizer, ParamState};
pub use world::{NodeState, Rect, UavBody, Vec2, WorldConfig};
