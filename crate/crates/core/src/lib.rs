//! Dual-space graph retrieval engine.
//!
//! Indexes a corpus into a heterogeneous passage–entity graph, learns a
//! depth-aware projection of Euclidean embeddings into a shared Poincaré
//! ball, and answers queries by fusing Euclidean and hyperbolic Personalized
//! PageRank rankings.

pub mod config;
pub mod corpus;
pub mod embed;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod geometry;
pub mod graph;
pub mod index;
pub mod pipeline;
pub mod projection;
pub mod retrieval;
pub mod synthetic;

pub use config::AppConfig;
pub use error::{EngineError, NodeKind, Result};
pub use geometry::{Curvature, HyperbolicPoint, TangentVector};
pub use graph::{HeterogeneousGraph, NormalizedAdjacency};
pub use projection::{ProjectionParams, TrainConfig};
pub use retrieval::{RankedPassage, RankingList};
