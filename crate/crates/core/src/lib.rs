//! Deterministic multi-agent stadium evacuation simulator.
//!
//! The crate models a 2400x1200 stadium with ~3000 agents that discuss,
//! decide, move, regroup, and exit under a round-based engine. Decision
//! making is pluggable: deterministic stub policies for tests, a mock
//! asynchronous backend for concurrency testing, and an optional remote
//! HTTP backend behind the `remote` feature.
//!
//! Everything observable is reproducible from a master seed: population
//! generation, coordinator influence, decision stubs, and movement all pull
//! from labeled sub-streams of a single seeded generator.

pub mod agents;
pub mod commsim;
pub mod context;
pub mod coordination;
pub mod decisions;
pub mod engine;
pub mod geometry;
pub mod movement;
pub mod population;
pub mod replay;
pub mod rng;
pub mod scenarios;
pub mod stadium;
