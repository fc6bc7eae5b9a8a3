//! Uncertainty disentanglement with actionable acquisition.
//!
//! The crate separates a prediction's epistemic uncertainty (lack of
//! training data, reducible by querying labels) from its aleatoric
//! uncertainty (inherent ambiguity at the current feature space, reducible
//! only by acquiring richer feature modalities), and turns the split into
//! decisions: a two-threshold loop that queries labels while epistemic
//! uncertainty is high, acquires the next feature modality while aleatoric
//! uncertainty is high, and emits a prediction flagged reliable once both
//! are low.
//!
//! Four interchangeable quantification backends live behind the
//! [`backend::Method`] trait and are selected by name through
//! [`backend::MethodRegistry`]:
//!
//! - `eknn` — evidential k-nearest neighbors over Dempster-Shafer mass
//!   functions ([`eknn`], built on [`belief`]);
//! - `entropy` — bagged decision trees with the Shannon-entropy
//!   decomposition ([`ensemble`]);
//! - `variance` — the same trees with the label-wise variance
//!   decomposition;
//! - `centroid` — per-class centroids scored by an RBF kernel
//!   ([`centroid`]).
//!
//! [`data`] ingests CSV tables with cost-annotated modality groups,
//! [`alfa`] runs the acquisition loop, and [`experiments`] drives the
//! reproducible studies exposed by the `alfa` CLI.

pub mod alfa;
pub mod backend;
pub mod belief;
pub mod centroid;
pub mod data;
pub mod eknn;
pub mod ensemble;
mod error;
pub mod experiments;
pub mod seeding;
pub mod stats;

pub use error::{Error, ErrorKind, Result};
