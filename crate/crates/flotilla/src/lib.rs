//! Adaptive placement of flavoured microservices over a cloud-edge continuum.
//!
//! The crate plans deployments of componentized applications — each component
//! offered in several "flavours" of different capability and footprint — onto
//! heterogeneous infrastructure, then closes the loop: a simulator runs the
//! deployment through failure and energy scenarios, enhancers distill the
//! resulting logs into soft placement constraints (avoid / affinity /
//! anti-affinity), a harmonizer reconciles them, and the solver re-plans with
//! minimal relocations.
//!
//! Modules:
//! - [`model`] — specifications, deployments, soft constraints;
//! - [`io`] — YAML specs, deployment/constraint/fact/log text formats;
//! - [`solver`] — feasibility verification, exact branch-and-bound placement,
//!   brute-force oracle, soft-constraint relaxation;
//! - [`failure`] — failure-event rules producing placement constraints;
//! - [`energy`] — emission estimation, knowledge base, carbon constraints;
//! - [`harmonizer`] — cross-enhancer conflict resolution;
//! - [`sim`] — tick-level round simulator, baselines, campaign runner;
//! - [`cli`] — the `flotilla` command-line interface.

pub mod cli;
pub mod energy;
pub mod failure;
pub mod harmonizer;
pub mod io;
pub mod model;
pub mod sim;
pub mod solver;

#[cfg(test)]
pub(crate) mod testutil;
