//! Annotation-budget-aware sample selection for segmentation pools.
//!
//! The engine works on pre-computed encoder embeddings of an unlabeled image
//! pool. A cold-start batch is chosen by projecting the embeddings to 2D with
//! exact t-SNE, clustering the projection with a silhouette-scored k-means
//! sweep, taking one medoid per cluster and filling the remaining budget by
//! farthest-point sampling inside each cluster. Later rounds rank the
//! remaining pool by a blend of predictive entropy and spatial diversity.
//!
//! Module map:
//!
//! - [`data_model`]: shared types ([`EmbeddingSet`], [`Projection2D`], ...).
//! - [`projection`]: exact t-SNE.
//! - [`clustering`]: k-means, silhouette, k selection, medoids.
//! - [`cold_start`]: budget allocation and cold-start policies.
//! - [`acquisition`]: entropy + diversity acquisition round.
//! - [`metrics`]: Dice, HD95, coverage radius, seeded-run statistics.
//! - [`io`]: binary formats, manifests and scatter export.

pub mod acquisition;
pub mod clustering;
pub mod cold_start;
pub mod data_model;
pub mod error;
pub mod io;
pub mod metrics;
pub mod projection;

mod geometry;

pub use data_model::{
    Budget, ClusteringResult, EmbeddingSet, ItemId, ManifestEntry, ProbabilityMap, Projection2D,
    Reason, RunConfig, ScoreBlend, ScoreComponents, SelectionManifest, SweepEntry, DEFAULT_EPSILON,
};
pub use error::{Error, Result};
