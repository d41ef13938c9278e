//! Offline metrics over a finished trace: latency percentiles, RFC 3550
//! jitter, windowed throughput, delivery ratios, hop histograms, and a
//! best-effort discovery-convergence time. Everything is a pure function of
//! the trace bytes, so recomputation reproduces a run's summary exactly.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::SimTime;
use crate::keyexpr::KeyExpr;
use crate::protocol::MsgKind;
use crate::trace::{TraceEvent, TraceHeader, TraceRecord};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("window end {end} must be after start {start} (microseconds)")]
    BadWindow { start: u64, end: u64 },
    #[error("flow \"{0}\" not found; flows are derived from the trace header's subscriber/publisher apps")]
    UnknownFlow(String),
    #[error("bad flow spec \"{0}\": expected origin:subscriber:expr")]
    BadFlowSpec(String),
}

/// Half-open analysis window `[start, end)` in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowUs {
    pub start: SimTime,
    pub end: SimTime,
}

impl WindowUs {
    fn contains(&self, t: SimTime) -> bool {
        self.start <= t && t < self.end
    }

    fn seconds(&self) -> f64 {
        (self.end.as_us() - self.start.as_us()) as f64 / 1e6
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub count: u64,
    pub mean_us: f64,
    pub p50_us: u64,
    pub p95_us: u64,
    pub max_us: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSummary {
    pub origin: String,
    pub subscriber: String,
    pub expr: String,
    pub published: u64,
    pub delivered: u64,
    pub delivery_ratio: Option<f64>,
    pub latency_us: Option<LatencyStats>,
    pub jitter_us: Option<f64>,
    pub goodput_bps: f64,
    pub hop_histogram: BTreeMap<u32, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateSummary {
    pub published: u64,
    pub delivered: u64,
    pub delivery_ratio: Option<f64>,
    pub latency_us: Option<LatencyStats>,
    pub jitter_us: Option<f64>,
    pub goodput_bps: f64,
    pub on_air_bps: f64,
    pub hop_histogram: BTreeMap<u32, u64>,
    pub discovery_convergence_us: Option<SimTime>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub scenario_sha256: String,
    pub window_us: WindowUs,
    pub aggregate: AggregateSummary,
    pub flows: Vec<FlowSummary>,
}

impl Summary {
    /// Canonical text form; byte-stable for a given summary.
    pub fn to_json_pretty(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("summary serializes");
        s.push('\n');
        s
    }
}

/// Restricts the `flows` block to one flow, given as `origin:subscriber:expr`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowFilter {
    pub origin: String,
    pub subscriber: String,
    pub expr: String,
}

impl FlowFilter {
    pub fn parse(spec: &str) -> Result<FlowFilter, MetricsError> {
        let mut it = spec.splitn(3, ':');
        match (it.next(), it.next(), it.next()) {
            (Some(o), Some(s), Some(e)) if !o.is_empty() && !s.is_empty() && !e.is_empty() => {
                Ok(FlowFilter {
                    origin: o.to_string(),
                    subscriber: s.to_string(),
                    expr: e.to_string(),
                })
            }
            _ => Err(MetricsError::BadFlowSpec(spec.to_string())),
        }
    }
}

/// Nearest-rank percentile over an ascending-sorted slice (p in [0, 100]).
pub fn percentile_nearest_rank(sorted: &[u64], p: f64) -> u64 {
    assert!(!sorted.is_empty());
    let n = sorted.len();
    let rank = ((p / 100.0 * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

/// Mean/percentiles of a latency sample set; None when empty.
pub fn latency_stats(samples: &[u64]) -> Option<LatencyStats> {
    if samples.is_empty() {
        return None;
    }
    let mut sorted = samples.to_vec();
    sorted.sort_unstable();
    let sum: u128 = sorted.iter().map(|&v| v as u128).sum();
    Some(LatencyStats {
        count: sorted.len() as u64,
        mean_us: sum as f64 / sorted.len() as f64,
        p50_us: percentile_nearest_rank(&sorted, 50.0),
        p95_us: percentile_nearest_rank(&sorted, 95.0),
        max_us: *sorted.last().unwrap(),
    })
}

/// RFC 3550 interarrival jitter over (send, receive) microsecond pairs in
/// send order: D(i-1,i) = (R_i - R_{i-1}) - (S_i - S_{i-1}),
/// J <- J + (|D| - J)/16 starting from J = 0. None below two samples.
pub fn rfc3550_jitter(pairs: &[(u64, u64)]) -> Option<f64> {
    if pairs.len() < 2 {
        return None;
    }
    let mut j = 0.0_f64;
    for w in pairs.windows(2) {
        let (s0, r0) = w[0];
        let (s1, r1) = w[1];
        let d = (r1 as i64 - r0 as i64) - (s1 as i64 - s0 as i64);
        j += (d.unsigned_abs() as f64 - j) / 16.0;
    }
    Some(j)
}

struct FlowData {
    origin: String,
    subscriber: String,
    expr: KeyExpr,
    expr_text: String,
    published: u64,
    delivered: u64,
    /// (send  time, receive time, payload, hops, origin seq) per delivery.
    deliveries: Vec<(u64, u64, u64, u32, u64)>,
}

/// Computes the full summary document from a parsed trace.
pub fn compute_summary(
    header: &TraceHeader,
    records: &[TraceRecord],
    window: Option<(u64, u64)>,
    flow_filter: Option<&FlowFilter>,
) -> Result<Summary, MetricsError> {
    let window = match window {
        Some((start, end)) => {
            if end <= start {
                return Err(MetricsError::BadWindow { start, end });
            }
            WindowUs {
                start: SimTime::from_us(start),
                end: SimTime::from_us(end),
            }
        }
        None => WindowUs {
            start: SimTime::ZERO,
            end: header.duration_us,
        },
    };

    let mut flows = derive_flows(header);
    fill_flows(&mut flows, records);

    // Aggregate counters over the whole record stream.
    let mut published = 0u64;
    let mut delivered = 0u64;
    let mut latencies: Vec<u64> = Vec::new();
    let mut hop_hist: BTreeMap<u32, u64> = BTreeMap::new();
    let mut goodput_bits = 0u64;
    let mut on_air_bits = 0u64;
    for r in records {
        match r.event {
            TraceEvent::Send => {
                if r.kind == Some(MsgKind::Publish) && r.hops_taken == Some(0) {
                    published += 1;
                }
                if window.contains(r.t) {
                    on_air_bits +=
                        8 * (r.payload_bytes.unwrap_or(0) + crate::channel::HEADER_BYTES);
                }
            }
            TraceEvent::Deliver => {
                delivered += 1;
                let latency = r.t.as_us() - r.origin_time.map(|t| t.as_us()).unwrap_or(0);
                latencies.push(latency);
                *hop_hist.entry(r.hops_taken.unwrap_or(0)).or_insert(0) += 1;
                if window.contains(r.t) {
                    goodput_bits += 8 * r.payload_bytes.unwrap_or(0);
                }
            }
            _ => {}
        }
    }

    let flow_published: u64 = flows.iter().map(|f| f.published).sum();
    let flow_delivered: u64 = flows.iter().map(|f| f.delivered).sum();
    let flow_jitters: Vec<f64> = flows.iter().filter_map(flow_jitter).collect();

    let aggregate = AggregateSummary {
        published,
        delivered,
        delivery_ratio: if flow_published > 0 {
            Some(flow_delivered as f64 / flow_published as f64)
        } else {
            None
        },
        latency_us: latency_stats(&latencies),
        jitter_us: if flow_jitters.is_empty() {
            None
        } else {
            Some(flow_jitters.iter().sum::<f64>() / flow_jitters.len() as f64)
        },
        goodput_bps: goodput_bits as f64 / window.seconds(),
        on_air_bps: on_air_bits as f64 / window.seconds(),
        hop_histogram: hop_hist,
        discovery_convergence_us: discovery_convergence(header, records),
    };

    let mut flow_summaries: Vec<FlowSummary> =
        flows.iter().map(|f| summarize_flow(f, &window)).collect();
    if let Some(filter) = flow_filter {
        flow_summaries.retain(|f| {
            f.origin == filter.origin && f.subscriber == filter.subscriber && f.expr == filter.expr
        });
        if flow_summaries.is_empty() {
            return Err(MetricsError::UnknownFlow(format!(
                "{}:{}:{}",
                filter.origin, filter.subscriber, filter.expr
            )));
        }
    }

    Ok(Summary {
        tool: header.tool.clone(),
        version: header.version.clone(),
        seed: header.seed,
        scenario_sha256: header.scenario_sha256.clone(),
        window_us: window,
        aggregate,
        flows: flow_summaries,
    })
}

/// One flow per (publishing origin, subscriber, subscription expression)
/// triple, derived from the header's app echo: every subscriber expression,
/// paired with every node owning a publisher whose key matches it.
fn derive_flows(header: &TraceHeader) -> Vec<FlowData> {
    let mut flows = Vec::new();
    for sub in &header.nodes {
        let mut seen_exprs: Vec<&str> = Vec::new();
        for expr_text in &sub.subscribers {
            if seen_exprs.contains(&expr_text.as_str()) {
                continue;
            }
            seen_exprs.push(expr_text);
            let expr = KeyExpr::parse(expr_text).expect("header exprs are valid");
            for origin in &header.nodes {
                let publishes_matching = origin.publishers.iter().any(|p| {
                    let key = KeyExpr::parse(&p.key).expect("header keys are valid");
                    expr.matches(&key)
                });
                if publishes_matching {
                    flows.push(FlowData {
                        origin: origin.id.clone(),
                        subscriber: sub.id.clone(),
                        expr: expr.clone(),
                        expr_text: expr_text.clone(),
                        published: 0,
                        delivered: 0,
                        deliveries: Vec::new(),
                    });
                }
            }
        }
    }
    flows
}

fn fill_flows(flows: &mut [FlowData], records: &[TraceRecord]) {
    for r in records {
        if r.kind != Some(MsgKind::Publish) {
            continue;
        }
        let Some(key_text) = r.key.as_deref() else {
            continue;
        };
        let Ok(key) = KeyExpr::parse(key_text) else {
            continue;
        };
        match r.event {
            TraceEvent::Send if r.hops_taken == Some(0) => {
                for f in flows.iter_mut() {
                    if f.origin == r.node && f.expr.matches(&key) {
                        f.published += 1;
                    }
                }
            }
            TraceEvent::Deliver => {
                let Some((origin, seq)) = r.msg_id.as_deref().and_then(TraceRecord::split_msg_id)
                else {
                    continue;
                };
                for f in flows.iter_mut() {
                    if f.subscriber == r.node && f.origin == origin && f.expr.matches(&key) {
                        f.delivered += 1;
                        f.deliveries.push((
                            r.origin_time.map(|t| t.as_us()).unwrap_or(0),
                            r.t.as_us(),
                            r.payload_bytes.unwrap_or(0),
                            r.hops_taken.unwrap_or(0),
                            seq,
                        ));
                    }
                }
            }
            _ => {}
        }
    }
    for f in flows.iter_mut() {
        // Jitter and latency series are ordered by send time (sequence
        // number breaks ties between same-instant publications).
        f.deliveries.sort_by_key(|&(s, _, _, _, seq)| (s, seq));
    }
}

fn flow_jitter(f: &FlowData) -> Option<f64> {
    let pairs: Vec<(u64, u64)> = f.deliveries.iter().map(|&(s, r, ..)| (s, r)).collect();
    rfc3550_jitter(&pairs)
}

fn summarize_flow(f: &FlowData, window: &WindowUs) -> FlowSummary {
    let latencies: Vec<u64> = f.deliveries.iter().map(|&(s, r, ..)| r - s).collect();
    let mut hop_hist = BTreeMap::new();
    let mut goodput_bits = 0u64;
    for &(_, r, payload, hops, _) in &f.deliveries {
        *hop_hist.entry(hops).or_insert(0) += 1;
        if window.contains(SimTime::from_us(r)) {
            goodput_bits += 8 * payload;
        }
    }
    FlowSummary {
        origin: f.origin.clone(),
        subscriber: f.subscriber.clone(),
        expr: f.expr_text.clone(),
        published: f.published,
        delivered: f.delivered,
        delivery_ratio: if f.published > 0 {
            Some(f.delivered as f64 / f.published as f64)
        } else {
            None
        },
        latency_us: latency_stats(&latencies),
        jitter_us: flow_jitter(f),
        goodput_bps: goodput_bits as f64 / window.seconds(),
        hop_histogram: hop_hist,
    }
}

/// First instant at which every node has beaconed at least once and every
/// node's replayed neighbor table (entries expire 3 beacon intervals after
/// the last hearing) equals the adjacency implied by the trace's final beacon
/// outcomes. None if that never happens. This replays only trace records; it
/// never consults simulator state.
fn discovery_convergence(header: &TraceHeader, records: &[TraceRecord]) -> Option<SimTime> {
    let expiry = 3 * header.protocol.beacon_interval_us.as_us();
    let names: Vec<&str> = header.nodes.iter().map(|n| n.id.as_str()).collect();
    let idx_of = |name: &str| names.iter().position(|n| *n == name);

    // (t, receiver, origin, decoded) beacon outcomes and per-node send times.
    let mut outcomes: Vec<(u64, usize, usize, bool)> = Vec::new();
    let mut first_send: Vec<Option<u64>> = vec![None; names.len()];
    for r in records {
        if r.kind != Some(MsgKind::Beacon) {
            continue;
        }
        let Some((origin_name, _)) = r.msg_id.as_deref().and_then(TraceRecord::split_msg_id) else {
            continue;
        };
        let (Some(node), Some(origin)) = (idx_of(&r.node), idx_of(origin_name)) else {
            continue;
        };
        match r.event {
            TraceEvent::Send => {
                first_send[node].get_or_insert(r.t.as_us());
            }
            TraceEvent::Recv => outcomes.push((r.t.as_us(), node, origin, true)),
            TraceEvent::RangeDrop | TraceEvent::LossDrop => {
                outcomes.push((r.t.as_us(), node, origin, false))
            }
            _ => {}
        }
    }
    if first_send.iter().any(|s| s.is_none()) {
        return None; // some node never beaconed; tables cannot be complete
    }
    let all_sent_by = first_send.iter().map(|s| s.unwrap()).max().unwrap();

    // Target adjacency: the last beacon outcome per (receiver, origin).
    let n = names.len();
    let mut target = vec![vec![false; n]; n];
    for &(_, node, origin, decoded) in &outcomes {
        target[node][origin] = decoded; // outcomes are in time order
    }

    // Candidate instants: every hearing, every hearing's expiry boundary,
    // and the moment the last node first beacons.
    let mut candidates: Vec<u64> = vec![all_sent_by];
    for &(t, _, _, decoded) in &outcomes {
        if decoded {
            candidates.push(t);
            candidates.push(t + expiry + 1);
        }
    }
    candidates.sort_unstable();
    candidates.dedup();
    // An instant past the end of the run was never observed; claiming
    // convergence there would extrapolate beyond the trace.
    candidates.retain(|&c| c <= header.duration_us.as_us());

    let hearings: Vec<(u64, usize, usize)> = outcomes
        .iter()
        .filter(|&&(_, _, _, d)| d)
        .map(|&(t, node, origin, _)| (t, node, origin))
        .collect();
    'cand: for &cand in &candidates {
        if cand < all_sent_by {
            continue;
        }
        // Replay: latest hearing per (node, origin) at or before `cand`.
        let mut last_heard = vec![vec![None::<u64>; n]; n];
        for &(t, node, origin) in hearings.iter().take_while(|&&(t, ..)| t <= cand) {
            last_heard[node][origin] = Some(t);
        }
        for node in 0..n {
            for origin in 0..n {
                let alive = matches!(last_heard[node][origin], Some(t) if cand - t <= expiry);
                if alive != target[node][origin] {
                    continue 'cand;
                }
            }
        }
        return Some(SimTime::from_us(cand));
    }
    None
}
