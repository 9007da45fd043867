//! Position authentication for tags that hold secret classical keys.
//!
//! Stations at known positions send random challenge bits timed to reach
//! the claimed tag position together; the tag answers each round with one
//! bit of a shared secret key, picked by the challenge bits. Light-speed
//! signalling bounds how early an answer can arrive, so correct and
//! on-time answers authenticate the tag's location.
//!
//! The crate contains the geometry, key lifecycle (one-of-four release,
//! BB84 key expansion, one-time MACs), honest protocol actors, a
//! causality-checked adversary framework and a deterministic discrete-event
//! engine that ties them together.

pub mod adversary;
pub mod engine;
pub mod experiment;
pub mod keys;
pub mod protocol;
pub mod spacetime;
pub mod time;
