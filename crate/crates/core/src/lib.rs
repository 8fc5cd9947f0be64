//! Linkage-prediction graph convolution for clustering on imbalanced data.
//!
//! The pipeline follows a pivot-subgraph design: every node acts as a pivot,
//! its expanded nearest-neighbour pool is subsampled into 1-hop nodes by a
//! [`sampling::Strategy`], the resulting subgraph is pushed through a small
//! mean-aggregation GCN ([`model`]), and the per-neighbour link logits are
//! trained with one of the [`loss`] objectives. At test time the scored
//! links are merged into clusters and evaluated with edge AP and BCubed F.

pub mod data;
pub mod error;
pub mod experiment;
pub mod infer;
pub mod knn;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod sampling;
pub mod subgraph;
pub mod train;

pub use data::{EmbeddingSet, SynthesisSpec, SyntheticSpec};
pub use error::{Error, Result};
pub use knn::{ExpansionConfig, NeighborList};
pub use loss::{LossConfig, LossKind};
pub use model::GcnParams;
pub use sampling::{RiwsDraw, Strategy, StrategyKind};
pub use subgraph::Subgraph;
pub use train::{TrainConfig, TrainHistory};
