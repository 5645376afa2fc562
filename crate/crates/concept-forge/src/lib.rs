//! Toolkit for studying when linear "concept" directions in a latent space
//! can be recovered from grouped observations.
//!
//! The crate builds synthetic worlds (a Gaussian-mixture base distribution, a
//! set of atom directions, and per-environment concept constraints), samples
//! concept-conditional data by rejection, trains a contrastive encoder with
//! quadratic log-odds heads, and scores how well the learned representation
//! matches the ground-truth atom projections. A separate path identifies the
//! combinatorial structure (which environment constrains which atom, and with
//! which valuation) directly from exact log-odds oracles, and a small
//! steering module turns counterfactual activation pairs into
//! context-dependent edit directions.

pub mod concepts;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod io;
pub mod learner;
pub mod linalg;
pub mod plot;
pub mod rng;
pub mod sampler;
pub mod steering;
pub mod structure_id;
pub mod world;

pub use error::{ForgeError, Result};
