//! Scenario files: versioned JSON describing nodes, mobility, declarative
//! apps, and parameter overrides. Loading either yields a fully validated
//! scenario or reports *every* semantic problem found, not just the first.
//!
//! All durations in the file are milliseconds; they are converted to
//! microseconds at the simulation boundary.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::channel::ChannelParams;
use crate::engine::SimTime;
use crate::keyexpr::KeyExpr;
use crate::mobility::{BoundsBox, Position};
use crate::protocol::ProtocolParams;

pub const SCENARIO_FORMAT: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("scenario {path} is not valid JSON: {message}")]
    Parse { path: String, message: String },
    #[error("{}", format_validation_errors(.errors))]
    Invalid { errors: Vec<String> },
}

fn format_validation_errors(errors: &[String]) -> String {
    let mut s = format!("scenario failed validation ({} error(s)):", errors.len());
    for e in errors {
        s.push_str("\n  - ");
        s.push_str(e);
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Uav,
    Gcs,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Uav => "uav",
            Role::Gcs => "gcs",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum MobilitySpec {
    Static {
        pos: Position,
    },
    RandomWaypoint {
        speed_mps: (f64, f64),
        pause_ms: u64,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        start_pos: Option<Position>,
    },
    Orbit {
        center: Position,
        radius_m: f64,
        angular_speed_rad_s: f64,
        #[serde(default)]
        theta0_rad: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AppSpec {
    Publisher {
        key: String,
        period_ms: u64,
        payload_bytes: u64,
        #[serde(default)]
        start_ms: u64,
    },
    Subscriber {
        expr: String,
    },
    Querier {
        expr: String,
        period_ms: u64,
        #[serde(default)]
        start_ms: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: String,
    pub role: Role,
    pub mobility: MobilitySpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub apps: Vec<AppSpec>,
}

/// Optional channel parameter overrides; absent fields keep defaults.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelOverrides {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub frequency_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ref_dist_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub path_loss_exp: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tx_power_dbm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub noise_floor_dbm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub snr_threshold_db: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bitrate_bps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub loss_prob: Option<f64>,
}

impl ChannelOverrides {
    pub fn apply(&self, mut base: ChannelParams) -> ChannelParams {
        if let Some(v) = self.frequency_hz {
            base.frequency_hz = v;
        }
        if let Some(v) = self.ref_dist_m {
            base.ref_dist_m = v;
        }
        if let Some(v) = self.path_loss_exp {
            base.path_loss_exp = v;
        }
        if let Some(v) = self.tx_power_dbm {
            base.tx_power_dbm = v;
        }
        if let Some(v) = self.noise_floor_dbm {
            base.noise_floor_dbm = v;
        }
        if let Some(v) = self.snr_threshold_db {
            base.snr_threshold_db = v;
        }
        if let Some(v) = self.bitrate_bps {
            base.bitrate_bps = v;
        }
        if let Some(v) = self.loss_prob {
            base.loss_prob = v;
        }
        base
    }
}

/// Optional protocol constant overrides, durations in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolOverrides {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub hop_limit: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub beacon_interval_ms: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub pit_lifetime_ms: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cs_capacity: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seen_capacity: Option<usize>,
}

impl ProtocolOverrides {
    pub fn apply(&self, mut base: ProtocolParams) -> ProtocolParams {
        if let Some(v) = self.hop_limit {
            base.hop_limit = v;
        }
        if let Some(v) = self.beacon_interval_ms {
            base.beacon_interval_us = SimTime::from_ms(v);
        }
        if let Some(v) = self.pit_lifetime_ms {
            base.pit_lifetime_us = SimTime::from_ms(v);
        }
        if let Some(v) = self.cs_capacity {
            base.cs_capacity = v;
        }
        if let Some(v) = self.seen_capacity {
            base.seen_capacity = v;
        }
        base
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub format: u32,
    pub duration_ms: u64,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bounds: Option<BoundsBox>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub channel: Option<ChannelOverrides>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub protocol: Option<ProtocolOverrides>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub position_sample_ms: Option<u64>,
    pub nodes: Vec<NodeSpec>,
}

/// A scenario together with the content digest of the exact bytes loaded.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub sha256: String,
}

pub fn load_scenario(path: &Path) -> Result<LoadedScenario, ScenarioError> {
    let bytes = std::fs::read(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let sha256 = hex(&Sha256::digest(&bytes));
    parse_scenario(&bytes, &path.display().to_string())
        .map(|scenario| LoadedScenario { scenario, sha256 })
}

/// Parses and validates scenario bytes (used by `load_scenario` and tests).
pub fn parse_scenario(bytes: &[u8], path: &str) -> Result<Scenario, ScenarioError> {
    let scenario: Scenario = serde_json::from_slice(bytes).map_err(|e| ScenarioError::Parse {
        path: path.to_string(),
        message: e.to_string(),
    })?;
    let errors = scenario.validate();
    if errors.is_empty() {
        Ok(scenario)
    } else {
        Err(ScenarioError::Invalid { errors })
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn valid_node_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .chars()
            .all(|c| matches!(c, 'a'..='z' | '0'..='9' | '_' | '-'))
}

/// A usable positive number: finite and strictly greater than zero.
fn positive(v: f64) -> bool {
    v.is_finite() && v > 0.0
}

fn check_position(errors: &mut Vec<String>, ctx: &str, p: Position) {
    if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
        errors.push(format!("{ctx}: position has non-finite coordinates"));
    } else if p.z < 0.0 {
        errors.push(format!("{ctx}: altitude z = {} must be >= 0", p.z));
    }
}

impl Scenario {
    /// Every semantic problem in the file, in a stable order. Empty means
    /// valid.
    pub fn validate(&self) -> Vec<String> {
        let mut errors = Vec::new();
        if self.format != SCENARIO_FORMAT {
            errors.push(format!(
                "format: expected {SCENARIO_FORMAT}, found {}",
                self.format
            ));
        }
        if self.duration_ms == 0 {
            errors.push("duration_ms must be > 0".to_string());
        }
        if self.nodes.is_empty() {
            errors.push("nodes: at least one node is required".to_string());
        }
        if let Some(ms) = self.position_sample_ms {
            if ms == 0 {
                errors.push("position_sample_ms must be > 0".to_string());
            }
        }
        if let Some(b) = &self.bounds {
            if !b.is_valid() {
                errors.push("bounds: min must be <= max on every axis and min.z >= 0".to_string());
            }
        }
        self.validate_channel(&mut errors);
        self.validate_protocol(&mut errors);

        // Duplicate ids: name every occurrence, not just the second.
        for (i, node) in self.nodes.iter().enumerate() {
            for (j, other) in self.nodes.iter().enumerate().skip(i + 1) {
                if node.id == other.id {
                    errors.push(format!(
                        "duplicate node id \"{}\" (nodes[{i}] and nodes[{j}])",
                        node.id
                    ));
                }
            }
        }

        let mut any_rwp = false;
        for (i, node) in self.nodes.iter().enumerate() {
            let ctx = format!("nodes[{i}] (\"{}\")", node.id);
            if !valid_node_id(&node.id) {
                errors.push(format!(
                    "nodes[{i}]: id \"{}\" must be non-empty over [a-z0-9_-]",
                    node.id
                ));
            }
            match &node.mobility {
                MobilitySpec::Static { pos } => check_position(&mut errors, &ctx, *pos),
                MobilitySpec::RandomWaypoint {
                    speed_mps,
                    start_pos,
                    ..
                } => {
                    any_rwp = true;
                    let (lo, hi) = *speed_mps;
                    if !(lo.is_finite() && hi.is_finite()) || lo <= 0.0 {
                        errors.push(format!("{ctx}: speed_mps minimum must be > 0"));
                    } else if lo > hi {
                        errors.push(format!(
                            "{ctx}: speed_mps minimum {lo} exceeds maximum {hi}"
                        ));
                    }
                    if let Some(p) = start_pos {
                        check_position(&mut errors, &ctx, *p);
                        if let Some(b) = &self.bounds {
                            if b.is_valid() && !b.contains(*p) {
                                errors.push(format!("{ctx}: start_pos lies outside bounds"));
                            }
                        }
                    }
                }
                MobilitySpec::Orbit {
                    center,
                    radius_m,
                    angular_speed_rad_s,
                    ..
                } => {
                    check_position(&mut errors, &ctx, *center);
                    if !positive(*radius_m) {
                        errors.push(format!("{ctx}: orbit radius_m must be > 0"));
                    }
                    if !angular_speed_rad_s.is_finite() {
                        errors.push(format!("{ctx}: angular_speed_rad_s must be finite"));
                    }
                }
            }
            for (k, app) in node.apps.iter().enumerate() {
                let actx = format!("nodes[{i}].apps[{k}] (\"{}\")", node.id);
                match app {
                    AppSpec::Publisher { key, period_ms, .. } => {
                        match KeyExpr::parse(key) {
                            Ok(e) if !e.is_concrete() => errors.push(format!(
                                "{actx}: publisher key \"{key}\" must be concrete (no wildcards)"
                            )),
                            Ok(_) => {}
                            Err(e) => errors.push(format!("{actx}: publisher key \"{key}\": {e}")),
                        }
                        if *period_ms == 0 {
                            errors.push(format!("{actx}: period_ms must be > 0"));
                        }
                    }
                    AppSpec::Subscriber { expr } => {
                        if let Err(e) = KeyExpr::parse(expr) {
                            errors.push(format!("{actx}: subscriber expr \"{expr}\": {e}"));
                        }
                    }
                    AppSpec::Querier {
                        expr, period_ms, ..
                    } => {
                        if let Err(e) = KeyExpr::parse(expr) {
                            errors.push(format!("{actx}: querier expr \"{expr}\": {e}"));
                        }
                        if *period_ms == 0 {
                            errors.push(format!("{actx}: period_ms must be > 0"));
                        }
                    }
                }
            }
        }
        if any_rwp && self.bounds.is_none() {
            errors.push("bounds are required when any node uses random_waypoint".to_string());
        }
        errors
    }

    fn validate_channel(&self, errors: &mut Vec<String>) {
        let c = self.channel_params();
        if !positive(c.frequency_hz) {
            errors.push("channel.frequency_hz must be > 0".to_string());
        }
        if !positive(c.ref_dist_m) {
            errors.push("channel.ref_dist_m must be > 0".to_string());
        }
        if !positive(c.path_loss_exp) {
            errors.push("channel.path_loss_exp must be > 0".to_string());
        }
        if !positive(c.bitrate_bps) {
            errors.push("channel.bitrate_bps must be > 0".to_string());
        }
        if !(0.0..=1.0).contains(&c.loss_prob) {
            errors.push(format!(
                "channel.loss_prob {} must be within [0, 1]",
                c.loss_prob
            ));
        }
    }

    fn validate_protocol(&self, errors: &mut Vec<String>) {
        let p = self.protocol_params();
        if p.hop_limit < 1 {
            errors.push("protocol.hop_limit must be >= 1".to_string());
        }
        if p.beacon_interval_us == SimTime::ZERO {
            errors.push("protocol.beacon_interval_ms must be > 0".to_string());
        }
        if p.pit_lifetime_us == SimTime::ZERO {
            errors.push("protocol.pit_lifetime_ms must be > 0".to_string());
        }
        if p.cs_capacity == 0 {
            errors.push("protocol.cs_capacity must be >= 1".to_string());
        }
        if p.seen_capacity == 0 {
            errors.push("protocol.seen_capacity must be >= 1".to_string());
        }
    }

    /// Defaults with this scenario's overrides applied.
    pub fn channel_params(&self) -> ChannelParams {
        self.channel
            .unwrap_or_default()
            .apply(ChannelParams::default())
    }

    /// Defaults with this scenario's overrides applied.
    pub fn protocol_params(&self) -> ProtocolParams {
        self.protocol
            .unwrap_or_default()
            .apply(ProtocolParams::default())
    }

    pub fn duration(&self) -> SimTime {
        SimTime::from_ms(self.duration_ms)
    }
}
