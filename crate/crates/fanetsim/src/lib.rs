//! fanetsim: a deterministic discrete-event simulator for UAV ad-hoc
//! networks running a brokerless named-data pub/sub protocol over an
//! abstracted radio channel.
//!
//! The crate is organized bottom-up:
//!
//! - [`engine`]: microsecond clock, event queue, seeded RNG streams
//! - [`keyexpr`]: hierarchical key expressions with `*`/`**` wildcards
//! - [`mobility`]: static, random-waypoint, and orbit movement models
//! - [`channel`]: log-distance path loss, SNR decode test, delays
//! - [`protocol`]: per-node pub/sub + query/reply forwarding state machine
//! - [`trace`]: JSONL trace writing and parsing
//! - [`scenario`]: scenario file schema, validation, hashing
//! - [`runner`]: wires everything into a full simulation producing a trace
//! - [`metrics`]: offline summary computation from a stored trace
//! - [`cli`]: the `fanetsim` command-line tool
//!
//! Given the same scenario file and seed, a run produces a byte-identical
//! trace on any platform: time is integer microseconds, randomness comes
//! from per-(node, purpose) counter streams, and event ties break by
//! schedule order.

pub mod channel;
pub mod cli;
pub mod engine;
pub mod keyexpr;
pub mod metrics;
pub mod mobility;
pub mod protocol;
pub mod runner;
pub mod scenario;
pub mod trace;
