//! Coded-dispersal synchronous BFT engine with a deterministic simulator.
//!
//! The library splits into three layers:
//!
//! - primitives: [`gf256`], [`codec`], [`merkle`], [`crypto`], [`wire`],
//!   [`types`] — field arithmetic, systematic erasure coding, chunk trees,
//!   signatures, canonical encodings, and the block/identifier chain model;
//! - protocol engines: [`protocol`] (the coded-dispersal consensus node,
//!   steady state + view change + follow phase + mobile-sluggish variant),
//!   [`baseline`] (a Sync HotStuff steady state used for comparison), and
//!   [`adversary`] (packaged misbehavior strategies);
//! - experiment plane: [`sim`] (deterministic discrete-event network),
//!   [`perf`] (closed-form round-time and throughput model), and
//!   [`scenario`] (runnable configurations, invariant observers, sweeps).

pub mod adversary;
pub mod baseline;
pub mod codec;
pub mod crypto;
pub mod gf256;
pub mod merkle;
pub mod messages;
pub mod perf;
pub mod protocol;
pub mod scenario;
pub mod sim;
pub mod types;
pub mod wire;
