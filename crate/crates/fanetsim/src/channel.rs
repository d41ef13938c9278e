//! Abstracted broadcast radio: log-distance path loss, an SNR decode gate,
//! and serialization/propagation delays. No interference or queueing model —
//! every transmission is evaluated per receiver independently.

use serde::{Deserialize, Serialize};

/// Fixed per-message header overhead added to the payload on the air.
pub const HEADER_BYTES: u64 = 48;

/// Propagation speed used for delay, m/s.
pub const SPEED_OF_LIGHT_MPS: f64 = 2.998e8;

/// Radio parameters. Defaults approximate a 5.9 GHz sidelink broadcast.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub frequency_hz: f64,
    pub ref_dist_m: f64,
    pub path_loss_exp: f64,
    pub tx_power_dbm: f64,
    pub noise_floor_dbm: f64,
    pub snr_threshold_db: f64,
    pub bitrate_bps: f64,
    /// Independent post-decode loss probability per (receiver, message).
    pub loss_prob: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            frequency_hz: 5.9e9,
            ref_dist_m: 1.0,
            path_loss_exp: 2.75,
            tx_power_dbm: 23.0,
            noise_floor_dbm: -95.0,
            snr_threshold_db: 5.0,
            bitrate_bps: 12e6,
            loss_prob: 0.0,
        }
    }
}

impl ChannelParams {
    /// Free-space reference loss at `ref_dist_m`:
    /// `20*log10(4*pi*d0*f/c)` dB.
    pub fn ref_path_loss_db(&self) -> f64 {
        20.0 * (4.0 * std::f64::consts::PI * self.ref_dist_m * self.frequency_hz
            / SPEED_OF_LIGHT_MPS)
            .log10()
    }

    /// Log-distance path loss at distance `d` meters:
    /// `PL(d) = PL(d0) + 10*n*log10(d/d0)`, clamped to `PL(d0)` inside the
    /// reference distance (the model has no near-field story). Requires
    /// `d > 0`.
    pub fn path_loss_db(&self, d: f64) -> f64 {
        assert!(d > 0.0, "path loss undefined at distance {d}");
        if d <= self.ref_dist_m {
            return self.ref_path_loss_db();
        }
        self.ref_path_loss_db() + 10.0 * self.path_loss_exp * (d / self.ref_dist_m).log10()
    }

    /// Receive SNR at distance `d`: `tx_power - PL(d) - noise_floor`.
    pub fn snr_db(&self, d: f64) -> f64 {
        self.tx_power_dbm - self.path_loss_db(d) - self.noise_floor_dbm
    }

    /// Decode gate: true when SNR meets the threshold (inclusive).
    pub fn decodes(&self, d: f64) -> bool {
        self.snr_db(d) >= self.snr_threshold_db
    }

    /// Closed-form largest distance that still decodes.
    pub fn max_decode_range_m(&self) -> f64 {
        let budget_db = self.tx_power_dbm
            - self.noise_floor_dbm
            - self.snr_threshold_db
            - self.ref_path_loss_db();
        self.ref_dist_m * 10f64.powf(budget_db / (10.0 * self.path_loss_exp))
    }

    /// Serialization delay in whole microseconds (rounded up):
    /// `ceil(8*(payload+header)/bitrate * 1e6)`.
    pub fn tx_delay_us(&self, payload_bytes: u64) -> u64 {
        let bits = 8 * (payload_bytes + HEADER_BYTES);
        (bits as f64 * 1e6 / self.bitrate_bps).ceil() as u64
    }

    /// Propagation delay in whole microseconds (rounded to nearest).
    pub fn prop_delay_us(&self, d: f64) -> u64 {
        (d / SPEED_OF_LIGHT_MPS * 1e6).round() as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> ChannelParams {
        ChannelParams::default()
    }

    #[test]
    fn reference_path_loss_value() {
        // 20*log10(4*pi*1*5.9e9/2.998e8) computed independently.
        assert!((p().ref_path_loss_db() - 47.8646).abs() < 1e-3);
    }

    #[test]
    fn path_loss_at_100m() {
        // PL0 + 27.5*log10(100) = PL0 + 55.
        assert!((p().path_loss_db(100.0) - 102.8646).abs() < 1e-3);
    }

    #[test]
    fn snr_at_reference_and_100m() {
        assert!((p().snr_db(1.0) - 70.1354).abs() < 1e-3);
        assert!((p().snr_db(100.0) - 15.1354).abs() < 1e-3);
    }

    #[test]
    fn path_loss_clamps_inside_reference_distance() {
        let c = p();
        assert_eq!(c.path_loss_db(0.5), c.ref_path_loss_db());
        assert_eq!(c.path_loss_db(1.0), c.ref_path_loss_db());
        assert!(c.path_loss_db(1.001) > c.ref_path_loss_db());
    }

    #[test]
    fn snr_is_monotone_decreasing_beyond_reference() {
        let c = p();
        assert_eq!(c.snr_db(0.5), c.snr_db(1.0), "flat inside ref distance");
        let mut prev = c.snr_db(1.0);
        for i in 3..2000 {
            let d = i as f64 * 0.5;
            let s = c.snr_db(d);
            assert!(s < prev, "SNR not decreasing at d={d}");
            prev = s;
        }
    }

    #[test]
    fn decode_range_near_233_65m() {
        let c = p();
        let r = c.max_decode_range_m();
        assert!((r - 233.6468).abs() < 0.01, "range {r}");
        // Consistency with the gate itself.
        assert!(c.decodes(r - 1e-6));
        assert!(!c.decodes(r + 1e-3));
        assert!(c.decodes(100.0));
        assert!(!c.decodes(300.0));
    }

    #[test]
    fn decode_gate_is_inclusive_at_threshold() {
        let mut c = p();
        // Put the threshold exactly at the 100 m SNR.
        c.snr_threshold_db = c.snr_db(100.0);
        assert!(c.decodes(100.0));
        assert!(!c.decodes(100.001));
    }

    #[test]
    fn tx_delay_values() {
        let c = p();
        // 1452 B payload + 48 B header = 1500 B = 12000 bits at 12 Mb/s.
        assert_eq!(c.tx_delay_us(1452), 1000);
        // Header-only frame: 384 bits.
        assert_eq!(c.tx_delay_us(0), 32);
        // Rounds up: 1 B payload -> 392 bits -> 32.67 us.
        assert_eq!(c.tx_delay_us(1), 33);
    }

    #[test]
    fn tx_delay_is_monotone_in_payload() {
        let c = p();
        let mut prev = c.tx_delay_us(0);
        for b in 1..=4096 {
            let d = c.tx_delay_us(b);
            assert!(d >= prev);
            prev = d;
        }
    }

    #[test]
    fn prop_delay_values() {
        let c = p();
        assert_eq!(c.prop_delay_us(100.0), 0); // 0.334 us
        assert_eq!(c.prop_delay_us(200.0), 1); // 0.667 us
        assert_eq!(c.prop_delay_us(299.8), 1); // exactly 1 us
        assert_eq!(c.prop_delay_us(0.0), 0);
        assert_eq!(c.prop_delay_us(2998.0), 10);
    }

    #[test]
    #[should_panic(expected = "path loss undefined")]
    fn zero_distance_path_loss_panics() {
        p().path_loss_db(0.0);
    }
}
