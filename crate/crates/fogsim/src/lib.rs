//! Deterministic discrete-event simulator of agent-based task scheduling,
//! load balancing, and rescheduling in a three-layer fog computing
//! environment (IoT devices, fog nodes, cloud nodes).
//!
//! The crate is organised around a single-threaded event engine
//! ([`engine`]) that drives device agents and node agents ([`agents`],
//! [`sim`]) over a shared network topology ([`model`]). Periodic pairwise
//! load balancing lives in [`loadbalance`], reactions to uncertain events
//! in [`resched`], reference schedulers in [`baselines`], run metrics in
//! [`metrics`], and seeded scenario generation plus serialization in
//! [`scenario`].

pub mod agents;
pub mod baselines;
pub mod engine;
pub mod loadbalance;
pub mod metrics;
pub mod model;
pub mod resched;
pub mod scenario;
pub mod sim;
