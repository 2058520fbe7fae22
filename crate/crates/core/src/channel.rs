//! Uplink propagation and scheduling: LOS path loss, the downward-facing
//! antenna pattern, SNR-gated rate, and largest-received-power TDMA.
//!
//! All distances are horizontal; the flight altitude enters every link
//! through the slant range `sqrt(d^2 + h^2)`.

use serde::{Deserialize, Serialize};

use crate::world::{NodeState, Vec2};

/// Converts a dB value to a linear ratio.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Converts a dBm power level to linear watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Link-budget parameters shared by every node-to-UAV channel.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Path-loss exponent, at least 2.
    pub alpha: f64,
    /// Noise power, linear.
    pub noise_power: f64,
    /// SNR threshold, linear ratio.
    pub snr_threshold: f64,
    /// Flight altitude of the receiving UAV.
    pub altitude: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            alpha: 2.0,
            noise_power: 1e-6,
            snr_threshold: db_to_linear(-5.0),
            altitude: 50.0,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.alpha >= 2.0) {
            return Err("path-loss exponent must be >= 2".into());
        }
        if !(self.noise_power > 0.0) {
            return Err("noise power must be positive".into());
        }
        if !(self.snr_threshold > 0.0) {
            return Err("SNR threshold must be positive".into());
        }
        if !(self.altitude > 0.0) {
            return Err("altitude must be positive".into());
        }
        Ok(())
    }

    /// LOS path loss `(d^2 + h^2)^(alpha/2)` at horizontal distance `d`.
    pub fn path_loss(&self, d: f64) -> f64 {
        debug_assert!(d >= 0.0);
        (d * d + self.altitude * self.altitude).powf(self.alpha / 2.0)
    }

    /// Antenna gain `sin(theta) = h / sqrt(d^2 + h^2)`, in [0, 1].
    pub fn antenna_gain(&self, d: f64) -> f64 {
        debug_assert!(d >= 0.0);
        self.altitude / (d * d + self.altitude * self.altitude).sqrt()
    }

    /// Received power `P * G(d) / L(d)` from a node at the given UAV position.
    pub fn received_power(&self, node: &NodeState, uav_pos: Vec2) -> f64 {
        let d = node.position.distance(uav_pos);
        node.transmit_power * self.antenna_gain(d) / self.path_loss(d)
    }

    /// SNR of the node-to-UAV link: received power over noise power.
    pub fn snr(&self, node: &NodeState, uav_pos: Vec2) -> f64 {
        self.received_power(node, uav_pos) / self.noise_power
    }

    /// SNR as a function of horizontal distance for a given transmit power.
    pub fn snr_at_distance(&self, transmit_power: f64, d: f64) -> f64 {
        (transmit_power / self.noise_power)
            * self.altitude
            * (d * d + self.altitude * self.altitude).powf(-(1.0 + self.alpha) / 2.0)
    }

    /// Effective rate: `log2(1 + s)` when the SNR clears the threshold,
    /// zero otherwise.
    pub fn rate(&self, snr: f64) -> f64 {
        debug_assert!(snr >= 0.0);
        if snr >= self.snr_threshold {
            (1.0 + snr).log2()
        } else {
            0.0
        }
    }

    /// TDMA pick: index of the active node with the largest received power,
    /// ties broken toward the lowest index. `None` when every node is done.
    pub fn schedule(&self, nodes: &[NodeState], uav_pos: Vec2) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, node) in nodes.iter().enumerate() {
            if !node.is_active() {
                continue;
            }
            let p = self.received_power(node, uav_pos);
            match best {
                Some((_, bp)) if p <= bp => {}
                _ => best = Some((i, p)),
            }
        }
        best.map(|(i, _)| i)
    }

    /// Indicator of whether node `n`'s signal-to-interference-plus-noise
    /// ratio clears the threshold, with every other node (active or not)
    /// counted as interference.
    pub fn sinr_indicator(&self, nodes: &[NodeState], uav_pos: Vec2, n: usize) -> u8 {
        let powers: Vec<f64> = nodes
            .iter()
            .map(|node| self.received_power(node, uav_pos))
            .collect();
        u8::from(sinr_indicator_from_powers(
            &powers,
            self.noise_power,
            self.snr_threshold,
            n,
        ))
    }

    /// Horizontal distance at which the SNR equals the threshold, found by
    /// bisection to 1e-9. Returns 0 when even the sub-UAV point is below
    /// threshold; clamps at the arena diagonal when the whole map is covered.
    pub fn coverage_radius(&self, transmit_power: f64, max_radius: f64) -> f64 {
        if self.snr_at_distance(transmit_power, 0.0) < self.snr_threshold {
            return 0.0;
        }
        if self.snr_at_distance(transmit_power, max_radius) >= self.snr_threshold {
            return max_radius;
        }
        let mut lo = 0.0;
        let mut hi = max_radius;
        while hi - lo > 1e-9 {
            let mid = 0.5 * (lo + hi);
            if self.snr_at_distance(transmit_power, mid) >= self.snr_threshold {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// SINR threshold test from precomputed per-node received powers.
pub fn sinr_indicator_from_powers(
    powers: &[f64],
    noise_power: f64,
    threshold: f64,
    n: usize,
) -> bool {
    let interference: f64 = powers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != n)
        .map(|(_, p)| p)
        .sum();
    powers[n] / (noise_power + interference) >= threshold
}
