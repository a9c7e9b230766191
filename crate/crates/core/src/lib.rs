//! Continual semi-supervised learning over streams of text-to-SQL tasks.
//!
//! The crate is organised bottom-up:
//!
//! - [`corpus`] loads schemas and questions and cuts them into a [`corpus::TaskStream`]
//!   of tasks over disjoint databases.
//! - [`sqlrep`] lexes SQL into keyword sets, skeletons and canonical forms, and builds
//!   the binary hash vectors that all distances are computed from.
//! - [`distance`] and [`clustering`] provide the schema/structure distances, relevance
//!   scores, top-k selection and k-medoids.
//! - [`sampling`] selects exemplars: prompt sampling for the teacher, review sampling
//!   for the student, and the ablation baselines.
//! - [`learner`] defines the pluggable [`learner::Parser`] contract and ships
//!   [`learner::ReferenceParser`], a hashed-feature skeleton classifier with slot filling.
//! - [`strategies`] runs FineTune, SelfTraining, Vanilla, SFNet and Oracle over a stream.
//! - [`metrics`] turns the accuracy grid into ACC_a, ACC_w, BWT and FWT.
//!
//! Data-parallel loops (distance matrices, swap search, pseudo-labelling, evaluation)
//! run on rayon when the `parallel` feature is enabled and sequentially otherwise;
//! results are identical either way.

pub mod clustering;
pub mod corpus;
pub mod distance;
pub mod learner;
pub mod metrics;
pub mod par;
pub mod sampling;
pub mod seed;
pub mod sqlrep;
pub mod strategies;
pub mod synth;

mod error;

pub use error::{Error, Result};
