//! Glues the pieces into a full simulation: builds per-node state from a
//! validated scenario, schedules beacons / app drivers / mobility legs /
//! position samples, and drains the event queue while writing the trace.
//!
//! The whole run is a deterministic function of (scenario, seed): node
//! iteration is by index, per-node randomness comes from derived streams, and
//! simultaneous events fire in insertion order.

use std::io::Write;

use log::info;

use crate::channel::ChannelParams;
use crate::engine::{rng_stream, Event, EventQueue, NodeId, RandomStream, SimTime};
use crate::keyexpr::KeyExpr;
use crate::mobility::{distance, MobilityState};
use crate::protocol::{MsgId, NodeProto, ProtoAction, ProtocolParams, WireMessage};
use crate::scenario::{AppSpec, MobilitySpec, Scenario};
use crate::trace::{
    NodeEcho, PublisherEcho, QuerierEcho, TraceEvent, TraceHeader, TraceWriter, TOOL_NAME,
    TOOL_VERSION,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Verdict {
    Decoded,
    /// SNR below the decode threshold at transmission time.
    Range,
    /// Decodable but hit the extra loss probability.
    Loss,
}

#[derive(Debug, Clone)]
enum Action {
    Beacon,
    AppPublish {
        app: usize,
    },
    AppQuery {
        app: usize,
    },
    Reception {
        msg: WireMessage,
        from: NodeId,
        verdict: Verdict,
    },
    NextLeg,
    PitExpire {
        query: MsgId,
        expires_at: SimTime,
    },
    /// Targets node 0 by convention; samples every node.
    SamplePositions,
}

#[derive(Debug, Clone)]
struct PublisherCfg {
    key: KeyExpr,
    payload_bytes: u64,
    period: SimTime,
}

#[derive(Debug, Clone)]
struct QuerierCfg {
    expr: KeyExpr,
    period: SimTime,
}

struct SimNode {
    mobility: MobilityState,
    mobility_rng: RandomStream,
    channel_rng: RandomStream,
    proto: NodeProto,
    beacon_key: KeyExpr,
    publishers: Vec<PublisherCfg>,
    queriers: Vec<QuerierCfg>,
}

struct World<W: Write> {
    channel: ChannelParams,
    params: ProtocolParams,
    duration: SimTime,
    position_sample: Option<SimTime>,
    trace: TraceWriter<W>,
    nodes: Vec<SimNode>,
}

/// Runs a validated scenario to completion and returns the trace bytes
/// (header line plus one JSONL record per event). The in-memory sink keeps
/// event handlers infallible; callers persist the bytes.
pub fn run_simulation(scenario: &Scenario, scenario_sha256: &str, seed: u64) -> Vec<u8> {
    debug_assert!(scenario.validate().is_empty(), "scenario must be validated");
    let channel = scenario.channel_params();
    let params = scenario.protocol_params();
    let duration = scenario.duration();
    let header = build_header(scenario, scenario_sha256, seed, &channel, &params, duration);
    let names: Vec<String> = scenario.nodes.iter().map(|n| n.id.clone()).collect();
    let trace = TraceWriter::new(Vec::new(), &header, names).expect("in-memory write");

    let mut queue: EventQueue<Action> = EventQueue::new();
    let mut world = World {
        channel,
        params,
        duration,
        position_sample: scenario.position_sample_ms.map(SimTime::from_ms),
        trace,
        nodes: Vec::with_capacity(scenario.nodes.len()),
    };

    info!(
        "running scenario: {} node(s), {} ms, seed {}",
        scenario.nodes.len(),
        scenario.duration_ms,
        seed
    );

    // Position samples first so a t=0 snapshot precedes any t=0 traffic.
    if world.position_sample.is_some() {
        queue
            .schedule(SimTime::ZERO, NodeId(0), Action::SamplePositions)
            .unwrap();
    }

    for (i, spec) in scenario.nodes.iter().enumerate() {
        let node = NodeId(i as u32);
        let mut mobility_rng = rng_stream(seed, node, "mobility");
        let mobility = match &spec.mobility {
            MobilitySpec::Static { pos } => MobilityState::Static { pos: *pos },
            MobilitySpec::RandomWaypoint {
                speed_mps,
                pause_ms,
                start_pos,
            } => MobilityState::random_waypoint_init(
                scenario.bounds.expect("validated: bounds present"),
                *speed_mps,
                SimTime::from_ms(*pause_ms),
                *start_pos,
                &mut mobility_rng,
                SimTime::ZERO,
            ),
            MobilitySpec::Orbit {
                center,
                radius_m,
                angular_speed_rad_s,
                theta0_rad,
            } => MobilityState::CircularOrbit {
                center: *center,
                radius_m: *radius_m,
                angular_speed: *angular_speed_rad_s,
                theta0: *theta0_rad,
                start: SimTime::ZERO,
            },
        };
        if let Some(t) = mobility.next_transition() {
            if t <= duration {
                queue.schedule(t, node, Action::NextLeg).unwrap();
            }
        }

        let mut proto = NodeProto::new(node, params);
        let mut publishers = Vec::new();
        let mut queriers = Vec::new();
        for app in &spec.apps {
            match app {
                AppSpec::Publisher {
                    key,
                    period_ms,
                    payload_bytes,
                    start_ms,
                } => {
                    let key = KeyExpr::parse(key).expect("validated key");
                    proto.register_producer(key.clone(), *payload_bytes);
                    let start = SimTime::from_ms(*start_ms);
                    if start <= duration {
                        queue
                            .schedule(
                                start,
                                node,
                                Action::AppPublish {
                                    app: publishers.len(),
                                },
                            )
                            .unwrap();
                    }
                    publishers.push(PublisherCfg {
                        key,
                        payload_bytes: *payload_bytes,
                        period: SimTime::from_ms(*period_ms),
                    });
                }
                AppSpec::Subscriber { expr } => {
                    proto.subscribe(KeyExpr::parse(expr).expect("validated expr"));
                }
                AppSpec::Querier {
                    expr,
                    period_ms,
                    start_ms,
                } => {
                    let start = SimTime::from_ms(*start_ms);
                    if start <= duration {
                        queue
                            .schedule(
                                start,
                                node,
                                Action::AppQuery {
                                    app: queriers.len(),
                                },
                            )
                            .unwrap();
                    }
                    queriers.push(QuerierCfg {
                        expr: KeyExpr::parse(expr).expect("validated expr"),
                        period: SimTime::from_ms(*period_ms),
                    });
                }
            }
        }

        // One-time phase jitter keeps co-started nodes from beaconing in
        // lockstep.
        let phase = rng_stream(seed, node, "beacon").next_below(params.beacon_interval_us.as_us());
        let first_beacon = SimTime::from_us(phase);
        if first_beacon <= duration {
            queue.schedule(first_beacon, node, Action::Beacon).unwrap();
        }

        world.nodes.push(SimNode {
            mobility,
            mobility_rng,
            channel_rng: rng_stream(seed, node, "channel"),
            proto,
            beacon_key: KeyExpr::parse(&format!("sys/beacon/{}", spec.id))
                .expect("node ids are valid key chunks"),
            publishers,
            queriers,
        });
    }

    let fired = queue.run_until(duration, |q, ev| world.dispatch(q, ev));
    info!("simulation complete: {fired} event(s) fired");
    world.trace.flush().expect("in-memory write");
    world.trace.into_inner()
}

fn build_header(
    scenario: &Scenario,
    sha256: &str,
    seed: u64,
    channel: &ChannelParams,
    params: &ProtocolParams,
    duration: SimTime,
) -> TraceHeader {
    let nodes = scenario
        .nodes
        .iter()
        .map(|n| {
            let mut echo = NodeEcho {
                id: n.id.clone(),
                role: n.role.to_string(),
                subscribers: Vec::new(),
                publishers: Vec::new(),
                queriers: Vec::new(),
            };
            for app in &n.apps {
                match app {
                    AppSpec::Publisher {
                        key,
                        period_ms,
                        payload_bytes,
                        start_ms,
                    } => echo.publishers.push(PublisherEcho {
                        key: key.clone(),
                        payload_bytes: *payload_bytes,
                        period_us: SimTime::from_ms(*period_ms),
                        start_us: SimTime::from_ms(*start_ms),
                    }),
                    AppSpec::Subscriber { expr } => echo.subscribers.push(expr.clone()),
                    AppSpec::Querier {
                        expr,
                        period_ms,
                        start_ms,
                    } => echo.queriers.push(QuerierEcho {
                        expr: expr.clone(),
                        period_us: SimTime::from_ms(*period_ms),
                        start_us: SimTime::from_ms(*start_ms),
                    }),
                }
            }
            echo
        })
        .collect();
    TraceHeader {
        tool: TOOL_NAME.to_string(),
        version: TOOL_VERSION.to_string(),
        seed,
        scenario_sha256: sha256.to_string(),
        duration_us: duration,
        channel: *channel,
        protocol: *params,
        nodes,
    }
}

impl<W: Write> World<W> {
    fn dispatch(&mut self, q: &mut EventQueue<Action>, ev: Event<Action>) {
        let t = ev.fire_at;
        let node = ev.target;
        let i = node.idx();
        match ev.action {
            Action::Beacon => {
                let key = self.nodes[i].beacon_key.clone();
                let msg = self.nodes[i].proto.make_beacon(key, t);
                self.broadcast(q, t, node, &msg);
                let next = t.plus_us(self.params.beacon_interval_us.as_us());
                if next <= self.duration {
                    q.schedule(next, node, Action::Beacon).unwrap();
                }
            }
            Action::AppPublish { app } => {
                let cfg = self.nodes[i].publishers[app].clone();
                let msg = self.nodes[i]
                    .proto
                    .make_publish(cfg.key, cfg.payload_bytes, t);
                self.broadcast(q, t, node, &msg);
                // Loopback: the origin's own matching subscribers see the
                // publication immediately, zero hops.
                if self.nodes[i].proto.matches_subscription(&msg.key) {
                    self.log(t, node, TraceEvent::Deliver, &msg, 0);
                }
                let next = t.plus_us(cfg.period.as_us());
                if next <= self.duration {
                    q.schedule(next, node, Action::AppPublish { app }).unwrap();
                }
            }
            Action::AppQuery { app } => {
                let cfg = self.nodes[i].queriers[app].clone();
                let msg = self.nodes[i].proto.make_query(cfg.expr, t);
                self.broadcast(q, t, node, &msg);
                let next = t.plus_us(cfg.period.as_us());
                if next <= self.duration {
                    q.schedule(next, node, Action::AppQuery { app }).unwrap();
                }
            }
            Action::Reception { msg, from, verdict } => {
                self.reception(q, t, node, msg, from, verdict)
            }
            Action::NextLeg => {
                let n = &mut self.nodes[i];
                n.mobility = n.mobility.next_leg(&mut n.mobility_rng);
                if let Some(next) = n.mobility.next_transition() {
                    if next <= self.duration {
                        q.schedule(next, node, Action::NextLeg).unwrap();
                    }
                }
            }
            Action::PitExpire { query, expires_at } => {
                if let Some(entry) = self.nodes[i].proto.handle_pit_expiry(query, expires_at) {
                    let key = entry.key.to_string();
                    self.trace
                        .expire(t, node, query, &key, entry.origin_time)
                        .expect("in-memory write");
                }
            }
            Action::SamplePositions => {
                for j in 0..self.nodes.len() {
                    let p = self.nodes[j].mobility.position_at(t);
                    self.trace
                        .pos(t, NodeId(j as u32), p)
                        .expect("in-memory write");
                }
                let interval = self.position_sample.expect("sampling configured");
                let next = t.plus_us(interval.as_us());
                if next <= self.duration {
                    q.schedule(next, NodeId(0), Action::SamplePositions)
                        .unwrap();
                }
            }
        }
    }

    fn log(&mut self, t: SimTime, node: NodeId, event: TraceEvent, msg: &WireMessage, hops: u32) {
        self.trace
            .message(t, node, event, msg, hops)
            .expect("in-memory write");
    }

    /// Puts `msg` on the air from `sender` at `t`: logs the send, evaluates
    /// geometry/SNR/loss per receiver at transmission time (receivers in node
    /// order, so loss draws replay exactly), and schedules one reception
    /// outcome per other node at `t + tx_delay + prop_delay`.
    fn broadcast(
        &mut self,
        q: &mut EventQueue<Action>,
        t: SimTime,
        sender: NodeId,
        msg: &WireMessage,
    ) {
        self.log(t, sender, TraceEvent::Send, msg, msg.hops_taken);
        let sender_pos = self.nodes[sender.idx()].mobility.position_at(t);
        let tx_us = self.channel.tx_delay_us(msg.payload_bytes);
        for r in 0..self.nodes.len() {
            if r == sender.idx() {
                continue;
            }
            let rx_pos = self.nodes[r].mobility.position_at(t);
            let d = distance(sender_pos, rx_pos);
            // Co-located nodes decode as if at the reference distance.
            let snr_ok = self
                .channel
                .decodes(if d > 0.0 { d } else { self.channel.ref_dist_m });
            // Extra-loss draws come from the sender's stream, one per
            // receiver that passed the SNR gate, in receiver-index order;
            // nothing is drawn when the loss feature is off.
            let verdict = if !snr_ok {
                Verdict::Range
            } else if self.channel.loss_prob > 0.0
                && self.nodes[sender.idx()].channel_rng.next_f64() < self.channel.loss_prob
            {
                Verdict::Loss
            } else {
                Verdict::Decoded
            };
            let arrival = t.plus_us(tx_us + self.channel.prop_delay_us(d));
            q.schedule(
                arrival,
                NodeId(r as u32),
                Action::Reception {
                    msg: msg.clone(),
                    from: sender,
                    verdict,
                },
            )
            .unwrap();
        }
    }

    fn reception(
        &mut self,
        q: &mut EventQueue<Action>,
        t: SimTime,
        node: NodeId,
        msg: WireMessage,
        from: NodeId,
        verdict: Verdict,
    ) {
        let consumed_hops = msg.hops_taken + 1;
        match verdict {
            Verdict::Range => {
                self.log(t, node, TraceEvent::RangeDrop, &msg, consumed_hops);
                return;
            }
            Verdict::Loss => {
                self.log(t, node, TraceEvent::LossDrop, &msg, consumed_hops);
                return;
            }
            Verdict::Decoded => {}
        }
        self.log(t, node, TraceEvent::Recv, &msg, consumed_hops);
        let actions = self.nodes[node.idx()].proto.handle_reception(&msg, from, t);
        for act in actions {
            match act {
                ProtoAction::DupDrop => self.log(t, node, TraceEvent::DupDrop, &msg, consumed_hops),
                ProtoAction::Deliver { hops_taken } => {
                    self.log(t, node, TraceEvent::Deliver, &msg, hops_taken)
                }
                ProtoAction::Forward { msg: fwd } => self.broadcast(q, t, node, &fwd),
                ProtoAction::SendReply { msg: reply } => self.broadcast(q, t, node, &reply),
                ProtoAction::PitStored { query, expires_at } => {
                    q.schedule(expires_at, node, Action::PitExpire { query, expires_at })
                        .unwrap();
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::MsgKind;
    use crate::scenario::parse_scenario;
    use crate::trace::{read_trace, TraceRecord};

    fn run_json(json: &str, seed: u64) -> (TraceHeader, Vec<TraceRecord>) {
        let s = parse_scenario(json.as_bytes(), "inline.json").unwrap();
        let bytes = run_simulation(&s, "test-digest", seed);
        read_trace(std::io::BufReader::new(&bytes[..])).unwrap()
    }

    fn run_bytes(json: &str, seed: u64) -> Vec<u8> {
        let s = parse_scenario(json.as_bytes(), "inline.json").unwrap();
        run_simulation(&s, "test-digest", seed)
    }

    fn two_node_json() -> String {
        r#"{
            "format": 1, "duration_ms": 10000, "seed": 1,
            "nodes": [
                {"id": "gcs0", "role": "gcs",
                 "mobility": {"model": "static", "pos": {"x": 0, "y": 0, "z": 0}},
                 "apps": [{"type": "publisher", "key": "telemetry/gcs0", "period_ms": 100,
                           "payload_bytes": 1452, "start_ms": 50}]},
                {"id": "uav1", "role": "uav",
                 "mobility": {"model": "static", "pos": {"x": 100, "y": 0, "z": 0}},
                 "apps": [{"type": "subscriber", "expr": "telemetry/**"}]}
            ]
        }"#
        .to_string()
    }

    fn line3_json(extra_protocol: &str) -> String {
        format!(
            r#"{{
            "format": 1, "duration_ms": 5000, "seed": 1,
            {extra_protocol}
            "nodes": [
                {{"id": "n0", "role": "gcs",
                 "mobility": {{"model": "static", "pos": {{"x": 0, "y": 0, "z": 0}}}},
                 "apps": [{{"type": "publisher", "key": "s/x", "period_ms": 100000,
                           "payload_bytes": 64, "start_ms": 100}}]}},
                {{"id": "n1", "role": "uav",
                 "mobility": {{"model": "static", "pos": {{"x": 200, "y": 0, "z": 0}}}}}},
                {{"id": "n2", "role": "uav",
                 "mobility": {{"model": "static", "pos": {{"x": 400, "y": 0, "z": 0}}}},
                 "apps": [{{"type": "subscriber", "expr": "s/**"}}]}}
            ]
        }}"#
        )
    }

    #[test]
    fn two_node_schedule_and_latency() {
        let (_h, recs) = run_json(&two_node_json(), 1);
        let publishes: Vec<_> = recs
            .iter()
            .filter(|r| {
                r.event == TraceEvent::Send
                    && r.kind == Some(MsgKind::Publish)
                    && r.hops_taken == Some(0)
            })
            .collect();
        assert_eq!(publishes.len(), 100); // 50, 150, ..., 9950 ms
        assert_eq!(publishes[0].t, SimTime::from_ms(50));

        let delivers: Vec<_> = recs
            .iter()
            .filter(|r| r.event == TraceEvent::Deliver && r.node == "uav1")
            .collect();
        assert_eq!(delivers.len(), 100);
        // 1452 B + 48 B header at 12 Mb/s = 1000 us; prop at 100 m rounds to 0.
        let first = delivers[0];
        assert_eq!(first.t, SimTime::from_us(51_000));
        assert_eq!(first.origin_time, Some(SimTime::from_ms(50)));
        assert_eq!(first.hops_taken, Some(1));
    }

    #[test]
    fn three_node_line_relays_with_two_hops() {
        let (_h, recs) = run_json(&line3_json(""), 1);
        let deliver = recs
            .iter()
            .find(|r| r.event == TraceEvent::Deliver && r.node == "n2")
            .expect("end of line must deliver");
        assert_eq!(deliver.hops_taken, Some(2));
        assert_eq!(deliver.kind, Some(MsgKind::Publish));
        // The relay in the middle re-sent the same message id.
        assert!(recs.iter().any(|r| {
            r.event == TraceEvent::Send
                && r.node == "n1"
                && r.kind == Some(MsgKind::Publish)
                && r.msg_id.as_deref() == deliver.msg_id.as_deref()
        }));
    }

    #[test]
    fn hop_limit_one_disables_relaying() {
        let (_h, recs) = run_json(&line3_json(r#""protocol": {"hop_limit": 1},"#), 1);
        assert!(
            !recs
                .iter()
                .any(|r| r.event == TraceEvent::Deliver && r.node == "n2"),
            "two-hop delivery must vanish at hop_limit 1"
        );
        assert!(!recs.iter().any(|r| {
            r.event == TraceEvent::Send && r.node == "n1" && r.kind == Some(MsgKind::Publish)
        }));
    }

    #[test]
    fn diamond_deduplicates_at_sink() {
        let json = r#"{
            "format": 1, "duration_ms": 2000, "seed": 1,
            "nodes": [
                {"id": "a", "role": "gcs",
                 "mobility": {"model": "static", "pos": {"x": 0, "y": 0, "z": 10}},
                 "apps": [{"type": "publisher", "key": "s/x", "period_ms": 100000,
                           "payload_bytes": 64, "start_ms": 100}]},
                {"id": "b", "role": "uav",
                 "mobility": {"model": "static", "pos": {"x": 200, "y": 0, "z": 10}}},
                {"id": "c", "role": "uav",
                 "mobility": {"model": "static", "pos": {"x": 0, "y": 200, "z": 10}}},
                {"id": "d", "role": "uav",
                 "mobility": {"model": "static", "pos": {"x": 200, "y": 200, "z": 10}},
                 "apps": [{"type": "subscriber", "expr": "s/**"}]}
            ]
        }"#;
        let (_h, recs) = run_json(json, 1);
        let at_d = |ev: TraceEvent| {
            recs.iter()
                .filter(|r| r.event == ev && r.node == "d" && r.kind == Some(MsgKind::Publish))
                .count()
        };
        assert_eq!(at_d(TraceEvent::Deliver), 1);
        assert!(at_d(TraceEvent::DupDrop) >= 1);
        let deliver = recs
            .iter()
            .find(|r| r.event == TraceEvent::Deliver && r.node == "d")
            .unwrap();
        assert_eq!(deliver.hops_taken, Some(2));
        // A and D are out of range of each other (283 m > decode range).
        assert!(recs
            .iter()
            .any(|r| r.event == TraceEvent::RangeDrop && r.node == "d" && r.hops_taken == Some(1)));
    }

    #[test]
    fn same_seed_reruns_are_byte_identical() {
        let json = r#"{
            "format": 1, "duration_ms": 3000, "seed": 9,
            "bounds": {"min": {"x":0,"y":0,"z":0}, "max": {"x":300,"y":300,"z":100}},
            "position_sample_ms": 500,
            "nodes": [
                {"id": "u1", "role": "uav",
                 "mobility": {"model": "random_waypoint", "speed_mps": [5, 15], "pause_ms": 200},
                 "apps": [{"type": "publisher", "key": "t/u1", "period_ms": 250,
                           "payload_bytes": 128, "start_ms": 10}]},
                {"id": "u2", "role": "uav",
                 "mobility": {"model": "random_waypoint", "speed_mps": [5, 15], "pause_ms": 200},
                 "apps": [{"type": "subscriber", "expr": "t/**"}]}
            ]
        }"#;
        assert_eq!(run_bytes(json, 7), run_bytes(json, 7));
        assert_ne!(run_bytes(json, 7), run_bytes(json, 8));
    }

    #[test]
    fn beacons_discover_neighbors_and_stay_one_hop() {
        let json = r#"{
            "format": 1, "duration_ms": 3000, "seed": 2,
            "nodes": [
                {"id": "a", "role": "gcs", "mobility": {"model": "static", "pos": {"x":0,"y":0,"z":0}}},
                {"id": "b", "role": "uav", "mobility": {"model": "static", "pos": {"x":100,"y":0,"z":0}}}
            ]
        }"#;
        let (_h, recs) = run_json(json, 2);
        for name in ["a", "b"] {
            assert!(recs.iter().any(|r| r.event == TraceEvent::Send
                && r.kind == Some(MsgKind::Beacon)
                && r.node == name));
            assert!(recs.iter().any(|r| r.event == TraceEvent::Recv
                && r.kind == Some(MsgKind::Beacon)
                && r.node == name));
        }
        // Confinement: every Beacon send originates the id it carries.
        for r in &recs {
            if r.event == TraceEvent::Send && r.kind == Some(MsgKind::Beacon) {
                let (origin, _) = TraceRecord::split_msg_id(r.msg_id.as_deref().unwrap()).unwrap();
                assert_eq!(origin, r.node);
            }
        }
    }

    #[test]
    fn query_round_trip_reply_retraces_and_caches() {
        let json = r#"{
            "format": 1, "duration_ms": 5000, "seed": 1,
            "nodes": [
                {"id": "q0", "role": "gcs",
                 "mobility": {"model": "static", "pos": {"x": 0, "y": 0, "z": 0}},
                 "apps": [{"type": "querier", "expr": "data/**", "period_ms": 2000, "start_ms": 100},
                          {"type": "querier", "expr": "void/**", "period_ms": 100000, "start_ms": 100}]},
                {"id": "r1", "role": "uav",
                 "mobility": {"model": "static", "pos": {"x": 200, "y": 0, "z": 0}}},
                {"id": "p2", "role": "uav",
                 "mobility": {"model": "static", "pos": {"x": 400, "y": 0, "z": 0}},
                 "apps": [{"type": "publisher", "key": "data/x", "period_ms": 100000,
                           "payload_bytes": 256, "start_ms": 100000}]}
            ]
        }"#;
        let (_h, recs) = run_json(json, 1);
        let reply_delivers: Vec<_> = recs
            .iter()
            .filter(|r| {
                r.event == TraceEvent::Deliver && r.node == "q0" && r.kind == Some(MsgKind::Reply)
            })
            .collect();
        // Queries at 100, 2100, 4100 ms: first answered by the producer two
        // hops out, later ones from the relay's cache in one hop.
        assert_eq!(reply_delivers.len(), 3);
        assert_eq!(reply_delivers[0].hops_taken, Some(2));
        assert_eq!(reply_delivers[1].hops_taken, Some(1));
        assert_eq!(reply_delivers[2].hops_taken, Some(1));
        assert!(reply_delivers
            .iter()
            .all(|r| r.key.as_deref() == Some("data/x")));
        let (first_origin, _) =
            TraceRecord::split_msg_id(reply_delivers[0].msg_id.as_deref().unwrap()).unwrap();
        assert_eq!(first_origin, "p2");

        // The unanswerable query leaves breadcrumbs that expire 2 s later.
        let expires: Vec<_> = recs
            .iter()
            .filter(|r| r.event == TraceEvent::Expire)
            .collect();
        assert_eq!(expires.len(), 2);
        assert!(expires.iter().all(|r| r.key.as_deref() == Some("void/**")));
        let expire_nodes: Vec<&str> = expires.iter().map(|r| r.node.as_str()).collect();
        assert!(expire_nodes.contains(&"r1") && expire_nodes.contains(&"p2"));
        assert!(expires.iter().all(|r| r.t >= SimTime::from_ms(2100)));
    }

    #[test]
    fn orbit_position_samples_follow_the_circle() {
        let json = r#"{
            "format": 1, "duration_ms": 2000, "seed": 1,
            "position_sample_ms": 500,
            "nodes": [
                {"id": "o", "role": "uav",
                 "mobility": {"model": "orbit", "center": {"x": 0, "y": 0, "z": 50},
                              "radius_m": 10.0, "angular_speed_rad_s": 3.141592653589793,
                              "theta0_rad": 0.0}}
            ]
        }"#;
        let (_h, recs) = run_json(json, 1);
        let pos: Vec<_> = recs.iter().filter(|r| r.event == TraceEvent::Pos).collect();
        assert_eq!(pos.len(), 5); // 0, 500, 1000, 1500, 2000 ms
        assert!((pos[0].x.unwrap() - 10.0).abs() < 1e-9);
        // Half a turn after 1 s at pi rad/s.
        assert!((pos[2].x.unwrap() + 10.0).abs() < 1e-9);
        assert!(pos.iter().all(|r| r.z == Some(50.0)));
    }

    #[test]
    fn trace_times_never_decrease() {
        let (_h, recs) = run_json(&two_node_json(), 3);
        let mut last = SimTime::ZERO;
        for r in &recs {
            assert!(r.t >= last);
            last = r.t;
        }
    }

    #[test]
    fn static_records_ignore_seed_outside_beacons() {
        let strip = |bytes: Vec<u8>| -> Vec<String> {
            let (_h, recs) = read_trace(std::io::BufReader::new(&bytes[..])).unwrap();
            recs.into_iter()
                .filter(|r| r.kind != Some(MsgKind::Beacon))
                .map(|r| serde_json::to_string(&r).unwrap())
                .collect()
        };
        let a = strip(run_bytes(&two_node_json(), 1));
        let b = strip(run_bytes(&two_node_json(), 999));
        assert!(!a.is_empty());
        assert_eq!(a, b);
    }

    fn lossy_two_node_json(loss_prob: f64) -> String {
        format!(
            r#"{{
            "format": 1, "duration_ms": 10000, "seed": 1,
            "channel": {{"loss_prob": {loss_prob}}},
            "nodes": [
                {{"id": "gcs0", "role": "gcs",
                 "mobility": {{"model": "static", "pos": {{"x": 0, "y": 0, "z": 0}}}},
                 "apps": [{{"type": "publisher", "key": "telemetry/gcs0", "period_ms": 100,
                           "payload_bytes": 1452, "start_ms": 50}}]}},
                {{"id": "uav1", "role": "uav",
                 "mobility": {{"model": "static", "pos": {{"x": 100, "y": 0, "z": 0}}}},
                 "apps": [{{"type": "subscriber", "expr": "telemetry/**"}}]}}
            ]
        }}"#
        )
    }

    #[test]
    fn certain_loss_drops_everything_in_range() {
        let (_h, recs) = run_json(&lossy_two_node_json(1.0), 1);
        assert!(recs.iter().all(|r| r.event != TraceEvent::Recv));
        assert!(recs.iter().all(|r| r.event != TraceEvent::Deliver));
        let loss_drops = recs
            .iter()
            .filter(|r| r.event == TraceEvent::LossDrop && r.kind == Some(MsgKind::Publish))
            .count();
        assert_eq!(loss_drops, 100, "every publish copy lost");
    }

    #[test]
    fn partial_loss_is_seeded_and_replayable() {
        let json = lossy_two_node_json(0.4);
        assert_eq!(run_bytes(&json, 5), run_bytes(&json, 5));
        let (_h, recs) = run_json(&json, 5);
        let count = |ev: TraceEvent| {
            recs.iter()
                .filter(|r| r.event == ev && r.kind == Some(MsgKind::Publish) && r.node == "uav1")
                .count()
        };
        let (recv, lost) = (count(TraceEvent::Recv), count(TraceEvent::LossDrop));
        assert_eq!(recv + lost, 100, "every copy gets exactly one outcome");
        assert!(
            recv > 0 && lost > 0,
            "0.4 loss leaves both outcomes present"
        );
        // A different seed shuffles which copies die.
        let (_h, other) = run_json(&json, 6);
        let outcomes = |rs: &[TraceRecord]| {
            rs.iter()
                .filter(|r| r.kind == Some(MsgKind::Publish) && r.node == "uav1")
                .map(|r| (r.msg_id.clone(), r.event))
                .collect::<Vec<_>>()
        };
        assert_ne!(outcomes(&recs), outcomes(&other));
    }
}
