//! Belief-updating laboratory core.
//!
//! Exact updating rules over finite state spaces (Bayes over a mixture of
//! priors, distorted-likelihood rules, Grether, full-Bayesian and
//! maximum-likelihood updating), the two-stage belief + confidence
//! elicitation mechanism, over-updating metrics, the regression machinery
//! used to estimate the Grether model with instrumental variables, and a
//! synthetic replication of the experiment.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the live
//! session service and the CLI live in the `belieflab` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod belief;
pub mod econometrics;
pub mod elicitation;
pub mod math;
pub mod metrics;
pub mod record;
pub mod simulation;
pub mod special;
pub mod verify;

pub use belief::{
    BeliefError, Distortion, GretherParams, MixtureBelief, Probability, SignalModel, StateSpace,
};
pub use record::{RecordError, ResponseRecord, Signal, Treatment};
