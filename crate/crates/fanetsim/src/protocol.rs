//! Brokerless named-data layer: one-hop beacon discovery, controlled
//! flooding of publications with duplicate suppression and a hop limit, and
//! query/reply with reverse-path breadcrumbs (a pending-interest analogue).
//!
//! Everything here is per-node state plus pure handlers that return actions;
//! the runner owns the radio, the clock, and the trace.

use std::collections::{BTreeMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::engine::{NodeId, SimTime};
use crate::keyexpr::KeyExpr;

/// Globally unique message identity: originating node plus a per-origin
/// monotone sequence number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MsgId {
    pub origin: NodeId,
    pub seq: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MsgKind {
    Beacon,
    Publish,
    Query,
    Reply,
}

/// A message as it exists on the air. `hop_budget` is the sender's remaining
/// allowance; receivers consume one hop on reception, so a copy received as
/// `(budget, taken)` is processed as `(budget-1, taken+1)` and rebroadcast
/// only while the received budget exceeds 1.
#[derive(Debug, Clone, PartialEq)]
pub struct WireMessage {
    pub msg_id: MsgId,
    pub kind: MsgKind,
    pub key: KeyExpr,
    pub payload_bytes: u64,
    pub hop_budget: u32,
    pub hops_taken: u32,
    pub origin_time: SimTime,
    /// For `Reply`: the query being answered.
    pub query_ref: Option<MsgId>,
}

/// Flooding/discovery constants. Durations are microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub hop_limit: u32,
    pub beacon_interval_us: SimTime,
    pub pit_lifetime_us: SimTime,
    pub cs_capacity: usize,
    pub seen_capacity: usize,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        ProtocolParams {
            hop_limit: 8,
            beacon_interval_us: SimTime::from_secs(1),
            pit_lifetime_us: SimTime::from_secs(2),
            cs_capacity: 64,
            seen_capacity: 4096,
        }
    }
}

impl ProtocolParams {
    /// Neighbor entries older than this are treated as absent.
    pub fn neighbor_expiry_us(&self) -> u64 {
        3 * self.beacon_interval_us.as_us()
    }
}

/// Bounded FIFO duplicate filter over message ids.
#[derive(Debug, Clone)]
pub struct SeenSet {
    cap: usize,
    order: VecDeque<MsgId>,
    set: HashSet<MsgId>,
}

impl SeenSet {
    pub fn new(cap: usize) -> Self {
        assert!(cap > 0);
        SeenSet {
            cap,
            order: VecDeque::new(),
            set: HashSet::new(),
        }
    }

    /// Returns false if the id was already present (a duplicate). Evicts the
    /// oldest id once the bound is exceeded.
    pub fn insert(&mut self, id: MsgId) -> bool {
        if !self.set.insert(id) {
            return false;
        }
        self.order.push_back(id);
        if self.order.len() > self.cap {
            let evicted = self.order.pop_front().unwrap();
            self.set.remove(&evicted);
        }
        true
    }

    pub fn contains(&self, id: &MsgId) -> bool {
        self.set.contains(id)
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
}

/// One-hop neighbors learned from beacons, keyed by last-heard time.
#[derive(Debug, Clone, Default)]
pub struct NeighborTable {
    last_seen: BTreeMap<NodeId, SimTime>,
}

impl NeighborTable {
    pub fn record(&mut self, neighbor: NodeId, t: SimTime) {
        self.last_seen.insert(neighbor, t);
    }

    pub fn is_alive(&self, neighbor: NodeId, now: SimTime, expiry_us: u64) -> bool {
        match self.last_seen.get(&neighbor) {
            Some(seen) => now.as_us() - seen.as_us() <= expiry_us,
            None => false,
        }
    }

    /// Neighbors heard within the expiry window, ascending by node id.
    pub fn alive_at(&self, now: SimTime, expiry_us: u64) -> Vec<NodeId> {
        self.last_seen
            .iter()
            .filter(|(_, seen)| now.as_us() - seen.as_us() <= expiry_us)
            .map(|(n, _)| *n)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PitEntry {
    pub upstreams: Vec<NodeId>,
    pub key: KeyExpr,
    pub expires_at: SimTime,
    pub origin_time: SimTime,
}

/// Pending queries awaiting replies, in insertion order so the oldest entry
/// is evicted first when the bound is hit.
#[derive(Debug, Clone)]
pub struct PendingQueryTable {
    cap: usize,
    entries: Vec<(MsgId, PitEntry)>,
}

impl PendingQueryTable {
    pub fn new(cap: usize) -> Self {
        assert!(cap > 0);
        PendingQueryTable {
            cap,
            entries: Vec::new(),
        }
    }

    /// Records `upstream` for `query`. Returns true when this created a new
    /// entry (the caller then schedules its expiry).
    pub fn insert(
        &mut self,
        query: MsgId,
        upstream: NodeId,
        key: KeyExpr,
        expires_at: SimTime,
        origin_time: SimTime,
    ) -> bool {
        if let Some((_, e)) = self.entries.iter_mut().find(|(id, _)| *id == query) {
            if !e.upstreams.contains(&upstream) {
                e.upstreams.push(upstream);
            }
            return false;
        }
        self.entries.push((
            query,
            PitEntry {
                upstreams: vec![upstream],
                key,
                expires_at,
                origin_time,
            },
        ));
        if self.entries.len() > self.cap {
            self.entries.remove(0);
        }
        true
    }

    pub fn remove(&mut self, query: &MsgId) -> Option<PitEntry> {
        let idx = self.entries.iter().position(|(id, _)| id == query)?;
        Some(self.entries.remove(idx).1)
    }

    pub fn contains(&self, query: &MsgId) -> bool {
        self.entries.iter().any(|(id, _)| id == query)
    }

    pub fn get(&self, query: &MsgId) -> Option<&PitEntry> {
        self.entries
            .iter()
            .find(|(id, _)| id == query)
            .map(|(_, e)| e)
    }

    /// Removes the entry only if it is still the one scheduled to expire at
    /// `expires_at` (a consumed-and-reinserted id keeps its own timer).
    pub fn remove_expired(&mut self, query: &MsgId, expires_at: SimTime) -> Option<PitEntry> {
        let idx = self
            .entries
            .iter()
            .position(|(id, e)| id == query && e.expires_at == expires_at)?;
        Some(self.entries.remove(idx).1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsEntry {
    pub payload_bytes: u64,
    pub stored_at: SimTime,
    pub origin: MsgId,
}

/// Small LRU cache of concrete keys → last stored payload. Back of the list
/// is most recently used.
#[derive(Debug, Clone)]
pub struct ContentStore {
    cap: usize,
    entries: Vec<(KeyExpr, CsEntry)>,
}

impl ContentStore {
    pub fn new(cap: usize) -> Self {
        assert!(cap > 0);
        ContentStore {
            cap,
            entries: Vec::new(),
        }
    }

    pub fn insert(&mut self, key: KeyExpr, entry: CsEntry) {
        assert!(key.is_concrete(), "content store keys must be concrete");
        if let Some(idx) = self.entries.iter().position(|(k, _)| *k == key) {
            self.entries.remove(idx);
        }
        self.entries.push((key, entry));
        if self.entries.len() > self.cap {
            self.entries.remove(0);
        }
    }

    /// Most recently used entry whose key intersects `expr`, refreshing its
    /// recency on hit.
    pub fn lookup_intersecting(&mut self, expr: &KeyExpr) -> Option<(KeyExpr, CsEntry)> {
        let idx = self.entries.iter().rposition(|(k, _)| expr.intersects(k))?;
        let hit = self.entries.remove(idx);
        self.entries.push(hit.clone());
        Some(hit)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// What a handler wants done; the runner turns these into trace records and
/// channel broadcasts.
#[derive(Debug, Clone, PartialEq)]
pub enum ProtoAction {
    /// Duplicate reception; log and stop.
    DupDrop,
    /// Hand the message to a local app (matching subscriber, or the origin
    /// of the query a reply answers). `hops_taken` is the consumed count.
    Deliver { hops_taken: u32 },
    /// Rebroadcast the consumed copy.
    Forward { msg: WireMessage },
    /// Broadcast a freshly minted reply.
    SendReply { msg: WireMessage },
    /// A new pending-query entry was created; schedule its expiry.
    PitStored { query: MsgId, expires_at: SimTime },
}

/// Per-node protocol state.
#[derive(Debug, Clone)]
pub struct NodeProto {
    pub node: NodeId,
    params: ProtocolParams,
    subscriptions: Vec<KeyExpr>,
    producers: Vec<(KeyExpr, u64)>,
    next_data_seq: u64,
    next_beacon_seq: u64,
    pub seen: SeenSet,
    pub neighbors: NeighborTable,
    pub pit: PendingQueryTable,
    pub cs: ContentStore,
}

impl NodeProto {
    pub fn new(node: NodeId, params: ProtocolParams) -> Self {
        NodeProto {
            node,
            params,
            subscriptions: Vec::new(),
            producers: Vec::new(),
            next_data_seq: 0,
            next_beacon_seq: 0,
            seen: SeenSet::new(params.seen_capacity),
            neighbors: NeighborTable::default(),
            pit: PendingQueryTable::new(1024),
            cs: ContentStore::new(params.cs_capacity),
        }
    }

    /// Registers a purely local subscription filter (no network traffic).
    pub fn subscribe(&mut self, expr: KeyExpr) {
        self.subscriptions.push(expr);
    }

    /// Registers this node as able to answer queries for `key` with a reply
    /// of `payload_bytes`.
    pub fn register_producer(&mut self, key: KeyExpr, payload_bytes: u64) {
        assert!(key.is_concrete(), "producer keys must be concrete");
        self.producers.push((key, payload_bytes));
    }

    pub fn matches_subscription(&self, key: &KeyExpr) -> bool {
        self.subscriptions.iter().any(|s| s.matches(key))
    }

    pub fn subscriptions(&self) -> &[KeyExpr] {
        &self.subscriptions
    }

    // Data messages take even sequence numbers and beacons odd ones, so the
    // ids publishers/queriers mint never depend on how many beacons (whose
    // phase is seed-drawn) happened to fire first.
    fn fresh_data_id(&mut self) -> MsgId {
        let id = MsgId {
            origin: self.node,
            seq: 2 * self.next_data_seq,
        };
        self.next_data_seq += 1;
        id
    }

    fn fresh_beacon_id(&mut self) -> MsgId {
        let id = MsgId {
            origin: self.node,
            seq: 2 * self.next_beacon_seq + 1,
        };
        self.next_beacon_seq += 1;
        id
    }

    /// Mints a publication with a full hop budget. The origin's own id goes
    /// into its seen-set so echoes from neighbors are dropped as duplicates.
    pub fn make_publish(&mut self, key: KeyExpr, payload_bytes: u64, now: SimTime) -> WireMessage {
        assert!(key.is_concrete(), "publish keys must be concrete");
        let msg_id = self.fresh_data_id();
        self.seen.insert(msg_id);
        WireMessage {
            msg_id,
            kind: MsgKind::Publish,
            key,
            payload_bytes,
            hop_budget: self.params.hop_limit,
            hops_taken: 0,
            origin_time: now,
            query_ref: None,
        }
    }

    /// Mints a query, flooded like a publish.
    pub fn make_query(&mut self, expr: KeyExpr, now: SimTime) -> WireMessage {
        let msg_id = self.fresh_data_id();
        self.seen.insert(msg_id);
        WireMessage {
            msg_id,
            kind: MsgKind::Query,
            key: expr,
            payload_bytes: 0,
            hop_budget: self.params.hop_limit,
            hops_taken: 0,
            origin_time: now,
            query_ref: None,
        }
    }

    /// Mints a discovery beacon: header-only, one-hop budget, routed past the
    /// duplicate filter (each emission is already a fresh id and beacons are
    /// never forwarded, so tracking them would only churn the seen-set).
    pub fn make_beacon(&mut self, key: KeyExpr, now: SimTime) -> WireMessage {
        WireMessage {
            msg_id: self.fresh_beacon_id(),
            kind: MsgKind::Beacon,
            key,
            payload_bytes: 0,
            hop_budget: 1,
            hops_taken: 0,
            origin_time: now,
            query_ref: None,
        }
    }

    fn make_reply(
        &mut self,
        key: KeyExpr,
        payload_bytes: u64,
        query: MsgId,
        now: SimTime,
    ) -> WireMessage {
        let msg_id = self.fresh_data_id();
        self.seen.insert(msg_id);
        WireMessage {
            msg_id,
            kind: MsgKind::Reply,
            key,
            payload_bytes,
            hop_budget: self.params.hop_limit,
            hops_taken: 0,
            origin_time: now,
            query_ref: Some(query),
        }
    }

    /// Consumed copy of a received message: one hop spent on this reception.
    fn consumed(msg: &WireMessage) -> WireMessage {
        let mut fwd = msg.clone();
        fwd.hop_budget = msg.hop_budget - 1;
        fwd.hops_taken = msg.hops_taken + 1;
        fwd
    }

    /// Processes a decoded reception. The returned actions are in emission
    /// order (deliveries before forwards).
    pub fn handle_reception(
        &mut self,
        msg: &WireMessage,
        from: NodeId,
        now: SimTime,
    ) -> Vec<ProtoAction> {
        if msg.kind != MsgKind::Beacon && !self.seen.insert(msg.msg_id) {
            return vec![ProtoAction::DupDrop];
        }
        let hops = msg.hops_taken + 1;
        match msg.kind {
            MsgKind::Beacon => {
                self.neighbors.record(from, now);
                Vec::new()
            }
            MsgKind::Publish => {
                let mut acts = Vec::new();
                if self.matches_subscription(&msg.key) {
                    acts.push(ProtoAction::Deliver { hops_taken: hops });
                }
                if msg.hop_budget > 1 {
                    acts.push(ProtoAction::Forward {
                        msg: Self::consumed(msg),
                    });
                }
                acts
            }
            MsgKind::Query => self.handle_query(msg, from, now),
            MsgKind::Reply => self.handle_reply(msg, now),
        }
    }

    fn handle_query(&mut self, msg: &WireMessage, from: NodeId, now: SimTime) -> Vec<ProtoAction> {
        // Answer from the cache first, then from local producers; an answer
        // suppresses further flooding of the query.
        if let Some((key, entry)) = self.cs.lookup_intersecting(&msg.key) {
            let reply = self.make_reply(key, entry.payload_bytes, msg.msg_id, now);
            return vec![ProtoAction::SendReply { msg: reply }];
        }
        let matching: Vec<(KeyExpr, u64)> = self
            .producers
            .iter()
            .filter(|(k, _)| msg.key.matches(k))
            .cloned()
            .collect();
        if !matching.is_empty() {
            return matching
                .into_iter()
                .map(|(key, payload)| ProtoAction::SendReply {
                    msg: self.make_reply(key, payload, msg.msg_id, now),
                })
                .collect();
        }
        // No answer here: leave a breadcrumb and keep flooding.
        let mut acts = Vec::new();
        let expires_at = now.plus_us(self.params.pit_lifetime_us.as_us());
        if self.pit.insert(
            msg.msg_id,
            from,
            msg.key.clone(),
            expires_at,
            msg.origin_time,
        ) {
            acts.push(ProtoAction::PitStored {
                query: msg.msg_id,
                expires_at,
            });
        }
        if msg.hop_budget > 1 {
            acts.push(ProtoAction::Forward {
                msg: Self::consumed(msg),
            });
        }
        acts
    }

    fn handle_reply(&mut self, msg: &WireMessage, now: SimTime) -> Vec<ProtoAction> {
        let query = msg
            .query_ref
            .expect("reply without a query reference cannot be minted");
        let mut acts = Vec::new();
        if query.origin == self.node {
            acts.push(ProtoAction::Deliver {
                hops_taken: msg.hops_taken + 1,
            });
        }
        self.cs.insert(
            msg.key.clone(),
            CsEntry {
                payload_bytes: msg.payload_bytes,
                stored_at: now,
                origin: msg.msg_id,
            },
        );
        // Retrace the breadcrumb: only queried-through nodes retransmit, and
        // the entry is consumed by the first reply that flows back.
        if self.pit.contains(&query) && msg.hop_budget > 1 {
            self.pit.remove(&query);
            acts.push(ProtoAction::Forward {
                msg: Self::consumed(msg),
            });
        }
        acts
    }

    /// Fires a scheduled pending-query expiry. Returns the dead entry when it
    /// was still present (the runner logs it).
    pub fn handle_pit_expiry(&mut self, query: MsgId, expires_at: SimTime) -> Option<PitEntry> {
        self.pit.remove_expired(&query, expires_at)
    }
}
