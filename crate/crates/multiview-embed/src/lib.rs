//! Node embeddings for networks with multiple views.
//!
//! A view is one weighted edge set over a shared node universe. Each view
//! gets its own node vectors, trained by negative-sampling SGD against
//! context vectors shared across views; a per-node softmax over learned view
//! feature vectors weights the views, and the weighted vote produces one
//! robust vector per node. A small labeled set (node labels or link pairs)
//! drives the weight learning.
//!
//! The crate ships the data model and samplers ([`graph`]), the parameter
//! stores and SGD updates ([`embedding`]), weight learning ([`attention`]),
//! the training loop ([`trainer`]), task evaluation ([`eval`]), a seeded
//! synthetic-network generator ([`synth`]), and the `mvembed` command-line
//! front end ([`cli`]).

pub mod attention;
pub mod cli;
pub mod embedding;
pub mod eval;
pub mod graph;
pub mod synth;
pub mod trainer;
mod vecmath;

pub use embedding::{EmbeddingStore, TrainConfig, WeightMatrix};
pub use graph::{Directedness, MultiViewGraph, NodeId, ViewId};
pub use trainer::{train, TrainOutput};
