//! Shared domain types and the identifier discipline used across the crate.
//!
//! Every module addresses items by their position in [`EmbeddingSet::ids`]
//! (the canonical order). Outputs that list items carry [`ItemId`]s so they
//! can be mapped back to files without relying on positions.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::clustering::KSweepConfig;
use crate::error::{Error, Result};

/// Shared epsilon for every stabilising offset in entropy and normalisation.
pub const DEFAULT_EPSILON: f64 = 1e-8;

/// Opaque item identifier, usually the file stem of the source image.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ItemId(String);

impl ItemId {
    pub fn new(value: impl Into<String>) -> Result<Self> {
        let value = value.into();
        if value.is_empty() {
            return Err(Error::InvalidInput("item id must be non-empty".into()));
        }
        Ok(Self(value))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ItemId {
    /// Panics on an empty string; intended for literals and tests.
    fn from(s: &str) -> Self {
        ItemId::new(s).expect("empty item id")
    }
}

/// The unlabeled pool as an `N x D` row-major feature matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingSet {
    ids: Vec<ItemId>,
    features: Vec<f64>,
    dim: usize,
}

impl EmbeddingSet {
    /// Builds a validated pool. Fails with the first violation reported by
    /// [`validate_pool`].
    pub fn new(ids: Vec<ItemId>, features: Vec<f64>, dim: usize) -> Result<Self> {
        let set = Self::from_raw(ids, features, dim);
        let report = validate_pool(&set);
        match report.violations.into_iter().next() {
            None => Ok(set),
            Some(v) => Err(Error::InvalidInput(v)),
        }
    }

    /// Wraps the parts without any checking. Use [`validate_pool`] before
    /// handing the result to the selection stages.
    pub fn from_raw(ids: Vec<ItemId>, features: Vec<f64>, dim: usize) -> Self {
        Self { ids, features, dim }
    }

    pub fn from_rows(ids: Vec<ItemId>, rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != dim) {
            return Err(Error::InvalidInput(format!(
                "row {bad} has {} features, expected {dim}",
                rows[bad].len()
            )));
        }
        Self::new(ids, rows.concat(), dim)
    }

    pub fn ids(&self) -> &[ItemId] {
        &self.ids
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }
}

/// Outcome of [`validate_pool`]: empty means the pool is well-formed.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks shape, id uniqueness and finiteness of a pool without modifying it.
pub fn validate_pool(embeddings: &EmbeddingSet) -> ValidationReport {
    let mut violations = Vec::new();
    let n = embeddings.ids.len();
    let d = embeddings.dim;
    if n == 0 {
        violations.push("empty pool".to_string());
    }
    if d == 0 {
        violations.push("feature dimension is zero".to_string());
    }
    if embeddings.features.len() != n * d {
        violations.push(format!(
            "dimension mismatch: {} values for {n} rows of dimension {d}",
            embeddings.features.len()
        ));
    }
    let mut seen = HashSet::new();
    for id in &embeddings.ids {
        if id.0.is_empty() {
            violations.push("empty id".to_string());
        } else if !seen.insert(id.as_str()) {
            violations.push(format!("duplicate id: {id}"));
        }
    }
    if d > 0 {
        for (row, values) in embeddings.features.chunks(d).enumerate() {
            if values.iter().any(|v| !v.is_finite()) {
                violations.push(format!("non-finite at row {row}"));
            }
        }
    }
    ValidationReport { violations }
}

/// Per-item 2D coordinates in the same order as the source pool.
#[derive(Clone, Debug, PartialEq)]
pub struct Projection2D {
    ids: Vec<ItemId>,
    coords: Vec<[f64; 2]>,
}

impl Projection2D {
    pub fn new(ids: Vec<ItemId>, coords: Vec<[f64; 2]>) -> Result<Self> {
        if ids.len() != coords.len() {
            return Err(Error::CountMismatch {
                field: "coords",
                expected: ids.len(),
                found: coords.len(),
            });
        }
        if let Some(row) = coords
            .iter()
            .position(|c| !c[0].is_finite() || !c[1].is_finite())
        {
            return Err(Error::InvalidInput(format!("non-finite at row {row}")));
        }
        Ok(Self { ids, coords })
    }

    pub fn ids(&self) -> &[ItemId] {
        &self.ids
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Canonical index of `id`, if present.
    pub fn index_of(&self, id: &ItemId) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }
}

/// Verifies that a projection was computed from `embeddings`: same ids in the
/// same order.
pub fn align(projection: &Projection2D, embeddings: &EmbeddingSet) -> Result<()> {
    check_ids(projection.ids(), embeddings.ids())
}

pub(crate) fn check_ids(a: &[ItemId], b: &[ItemId]) -> Result<()> {
    if let Some(position) = a.iter().zip(b).position(|(x, y)| x != y) {
        return Err(Error::IdMismatch {
            position,
            detail: format!("{} vs {}", a[position], b[position]),
        });
    }
    if a.len() != b.len() {
        return Err(Error::IdMismatch {
            position: a.len().min(b.len()),
            detail: format!("length {} vs {}", a.len(), b.len()),
        });
    }
    Ok(())
}

/// One row of the k sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub k: usize,
    pub silhouette: f64,
    pub inertia: f64,
}

/// Chosen clustering of a projection.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusteringResult {
    /// Cluster index per item, in `[0, k_hat)`.
    pub labels: Vec<usize>,
    pub k_hat: usize,
    pub sweep: Vec<SweepEntry>,
    /// Canonical index of each cluster's medoid.
    pub medoid_indices: Vec<usize>,
    pub medoids: Vec<ItemId>,
    pub centroids: Vec<[f64; 2]>,
}

impl ClusteringResult {
    /// Canonical member indices of every cluster, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k_hat];
        for (i, &c) in self.labels.iter().enumerate() {
            out[c].push(i);
        }
        out
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k_hat];
        for &c in &self.labels {
            sizes[c] += 1;
        }
        sizes
    }
}

/// Total annotation budget `B` and the share `A` reserved for the active round.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Budget {
    total: usize,
    acquisition: usize,
}

impl Budget {
    pub fn new(total: usize, acquisition: usize, pool_size: usize) -> Result<Self> {
        if total == 0 {
            return Err(Error::InvalidInput("budget must be positive".into()));
        }
        if total > pool_size {
            return Err(Error::BudgetExceedsPool {
                requested: total,
                available: pool_size,
            });
        }
        if acquisition > total {
            return Err(Error::InvalidInput(format!(
                "acquisition share {acquisition} exceeds total budget {total}"
            )));
        }
        Ok(Self { total, acquisition })
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn acquisition(&self) -> usize {
        self.acquisition
    }

    /// Size of the cold-start batch, `B - A`.
    pub fn cold_start(&self) -> usize {
        self.total - self.acquisition
    }
}

/// Per-pixel class probabilities for one item, stored `C x H x W`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityMap {
    id: ItemId,
    classes: usize,
    height: usize,
    width: usize,
    probs: Vec<f32>,
}

/// Maximum tolerated deviation of a pixel's class sum from one.
pub const PROBABILITY_SUM_TOLERANCE: f64 = 1e-3;

impl ProbabilityMap {
    /// Validates the per-pixel sums and renormalises every pixel to sum to one.
    pub fn new(
        id: ItemId,
        classes: usize,
        height: usize,
        width: usize,
        mut probs: Vec<f32>,
    ) -> Result<Self> {
        if classes < 2 {
            return Err(Error::InvalidInput(format!(
                "probability map needs at least 2 classes, got {classes}"
            )));
        }
        if height == 0 || width == 0 {
            return Err(Error::InvalidInput("probability map has no pixels".into()));
        }
        let plane = height * width;
        if probs.len() != classes * plane {
            return Err(Error::CountMismatch {
                field: "probabilities",
                expected: classes * plane,
                found: probs.len(),
            });
        }
        if let Some(bad) = probs
            .iter()
            .position(|p| !p.is_finite() || *p < 0.0 || *p > 1.0)
        {
            return Err(Error::InvalidInput(format!(
                "probability {} at offset {bad} outside [0, 1]",
                probs[bad]
            )));
        }
        let mut worst: Option<(usize, f64, f64)> = None;
        let mut sums = vec![0.0f64; plane];
        for c in 0..classes {
            for (s, p) in sums.iter_mut().zip(&probs[c * plane..(c + 1) * plane]) {
                *s += f64::from(*p);
            }
        }
        for (pixel, &sum) in sums.iter().enumerate() {
            let deviation = (sum - 1.0).abs();
            if deviation > PROBABILITY_SUM_TOLERANCE && worst.is_none_or(|(_, _, d)| deviation > d)
            {
                worst = Some((pixel, sum, deviation));
            }
        }
        if let Some((pixel, sum, deviation)) = worst {
            return Err(Error::NotNormalized {
                pixel,
                sum,
                deviation,
            });
        }
        for c in 0..classes {
            for (p, s) in probs[c * plane..(c + 1) * plane].iter_mut().zip(&sums) {
                *p = (f64::from(*p) / s) as f32;
            }
        }
        Ok(Self {
            id,
            classes,
            height,
            width,
            probs,
        })
    }

    pub fn id(&self) -> &ItemId {
        &self.id
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn probs(&self) -> &[f32] {
        &self.probs
    }

    /// Probability of class `c` at flat pixel index `pixel`.
    #[inline]
    pub fn prob(&self, c: usize, pixel: usize) -> f32 {
        self.probs[c * self.height * self.width + pixel]
    }
}

/// Entropy/diversity trade-off.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreBlend {
    alpha: f64,
    epsilon: f64,
}

impl ScoreBlend {
    pub const DEFAULT_ALPHA: f64 = 0.3;

    pub fn new(alpha: f64, epsilon: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidInput(format!("alpha {alpha} outside [0, 1]")));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "epsilon {epsilon} must be positive"
            )));
        }
        Ok(Self { alpha, epsilon })
    }

    pub fn with_alpha(alpha: f64) -> Result<Self> {
        Self::new(alpha, DEFAULT_EPSILON)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `alpha * diversity + (1 - alpha) * entropy`.
    #[inline]
    pub fn score(&self, entropy: f64, diversity: f64) -> f64 {
        self.alpha * diversity + (1.0 - self.alpha) * entropy
    }
}

impl Default for ScoreBlend {
    fn default() -> Self {
        Self {
            alpha: Self::DEFAULT_ALPHA,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

/// Why an item entered the selection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reason {
    Medoid,
    FarthestPoint,
    Acquisition,
    RandomBaseline,
}

impl Reason {
    pub fn is_cold_start(self) -> bool {
        !matches!(self, Reason::Acquisition)
    }
}

/// Score components recorded for acquisition picks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreComponents {
    /// Normalised entropy.
    pub entropy: f64,
    /// Normalised nearest-selected distance; absent when nothing was selected
    /// before the pick.
    pub diversity: Option<f64>,
    /// Blended score; absent together with `diversity`.
    pub score: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: ItemId,
    pub rank: usize,
    pub reason: Reason,
    pub cluster: Option<usize>,
    pub scores: Option<ScoreComponents>,
}

/// Resolved t-SNE parameters, echoed into manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TsneParams {
    pub perplexity: f64,
    pub iterations: usize,
    pub early_exaggeration_factor: f64,
    pub early_exaggeration_iters: usize,
    pub learning_rate: f64,
    pub momentum_initial: f64,
    pub momentum_final: f64,
    pub momentum_switch_iter: usize,
    pub seed: u64,
    pub init: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub format_version: String,
    pub policy: String,
    /// Total budget `B` (entry count of the manifest).
    pub budget: usize,
    /// Items acquired by active rounds, `A`.
    pub acquisition: usize,
    pub alpha: Option<f64>,
    pub seed: u64,
    pub sweep: Option<KSweepConfig>,
    pub tsne: Option<TsneParams>,
}

impl RunConfig {
    pub const FORMAT_VERSION: &'static str = "1";

    pub fn new(policy: impl Into<String>, budget: usize, seed: u64) -> Self {
        Self {
            format_version: Self::FORMAT_VERSION.to_string(),
            policy: policy.into(),
            budget,
            acquisition: 0,
            alpha: None,
            seed,
            sweep: None,
            tsne: None,
        }
    }
}

/// Ordered selection with per-item provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionManifest {
    pub run_config: RunConfig,
    pub entries: Vec<ManifestEntry>,
}

impl SelectionManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &ItemId> {
        self.entries.iter().map(|e| &e.id)
    }

    /// Checks budget exactness, id uniqueness, contiguous ranks and the
    /// ordering of reasons (medoids, then farthest points, then acquisitions).
    pub fn validate(&self) -> Result<()> {
        if self.entries.len() != self.run_config.budget {
            return Err(Error::CountMismatch {
                field: "manifest entries",
                expected: self.run_config.budget,
                found: self.entries.len(),
            });
        }
        let mut seen = HashSet::new();
        for (i, e) in self.entries.iter().enumerate() {
            if e.rank != i {
                return Err(Error::InvalidInput(format!(
                    "entry {i} has rank {}, ranks must be contiguous",
                    e.rank
                )));
            }
            if !seen.insert(&e.id) {
                return Err(Error::InvalidInput(format!("duplicate id: {}", e.id)));
            }
        }
        let phase = |r: Reason| match r {
            Reason::Medoid | Reason::RandomBaseline => 0,
            Reason::FarthestPoint => 1,
            Reason::Acquisition => 2,
        };
        if let Some(w) = self
            .entries
            .windows(2)
            .find(|w| phase(w[0].reason) > phase(w[1].reason))
        {
            return Err(Error::InvalidInput(format!(
                "entry {} ({:?}) follows a later-phase entry ({:?})",
                w[1].rank, w[1].reason, w[0].reason
            )));
        }
        Ok(())
    }
}
