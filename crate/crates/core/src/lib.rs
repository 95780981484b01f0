//! Evidence-first synthesis of verifiable tool-use tasks.
//!
//! Tools are executed before any task is written: a collector policy
//! explores a sampled toolset, validated (call, observation) pairs
//! accumulate as evidence, and a generator derives query/answer pairs that
//! are grounded in that evidence. The crate also turns synthesized tasks
//! into SFT and RL datasets and measures the structural diversity of
//! tool-call trajectories.

pub mod dataset;
pub mod demo;
pub mod diversity;
pub mod domain;
pub mod jsonl;
pub mod par;
pub mod policy;
pub mod pools;
pub mod synthesis;
pub mod tools;
pub mod verification;

pub use domain::Domain;
