//! Federated learning round simulator with exact system-overhead accounting
//! and an online controller for the number of participants per round (`M`)
//! and local training passes (`E`).
//!
//! - [`types`]: preferences, hyper-parameters, overhead vectors, [`types::compare`]
//! - [`overhead`]: per-round CompT / TransT / CompL / TransL accounting
//! - [`tuner`]: the online `(M, E)` controller
//! - [`model`]: a small MLP with SGD, used for local training
//! - [`data`]: synthetic non-IID datasets and CSV loading
//! - [`sim`]: the round loop and FedAvg / FedNova / FedAdagrad aggregation
//! - [`harness`]: experiment configs, run / sweep / compare / partition
//!
//! Runnable walkthroughs live in this crate's `examples/` directory.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod harness;
pub mod model;
pub mod overhead;
pub mod rng;
pub mod sim;
pub mod tuner;
pub mod types;

pub use types::{compare, CostConstants, HyperParams, LocalPasses, OverheadVector, Preferences};
