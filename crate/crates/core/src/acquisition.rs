//! Active-learning round: image-level predictive entropy combined with
//! distance to the already-selected set in the 2D projection.

use rayon::prelude::*;

use crate::data_model::{
    ManifestEntry, ProbabilityMap, Projection2D, Reason, ScoreBlend, ScoreComponents,
    SelectionManifest,
};
use crate::error::{Error, Result};
use crate::geometry::dist2d;

/// Per-pixel entropy `-sum_c p log(p + eps)` in nats, clamped at zero.
pub fn pixel_entropy(map: &ProbabilityMap, epsilon: f64) -> Vec<f64> {
    let plane = map.height() * map.width();
    let mut field = vec![0.0f64; plane];
    for c in 0..map.classes() {
        let probs = &map.probs()[c * plane..(c + 1) * plane];
        for (h, &p) in field.iter_mut().zip(probs) {
            let p = f64::from(p);
            *h -= p * (p + epsilon).ln();
        }
    }
    for h in field.iter_mut() {
        *h = h.max(0.0);
    }
    field
}

/// Mean pixel entropy of one map.
pub fn image_entropy(map: &ProbabilityMap, epsilon: f64) -> f64 {
    let field = pixel_entropy(map, epsilon);
    field.iter().sum::<f64>() / field.len() as f64
}

/// Image entropies of many maps, one slot per input.
pub fn image_entropies(maps: &[ProbabilityMap], epsilon: f64) -> Vec<f64> {
    maps.par_iter().map(|m| image_entropy(m, epsilon)).collect()
}

/// Min-max normalisation `(h - min) / (max - min + eps)`.
pub fn normalize_entropies(raw: &[f64], epsilon: f64) -> Vec<f64> {
    let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    raw.iter()
        .map(|h| (h - min) / (max - min + epsilon))
        .collect()
}

/// Raw and normalised entropies of the round's candidate pool.
#[derive(Clone, Debug, PartialEq)]
pub struct EntropyTable {
    candidates: Vec<usize>,
    raw: Vec<f64>,
    normalized: Vec<f64>,
}

impl EntropyTable {
    /// `candidates` are canonical indices; `raw[i]` belongs to `candidates[i]`.
    pub fn new(candidates: Vec<usize>, raw: Vec<f64>, epsilon: f64) -> Result<Self> {
        if candidates.len() != raw.len() {
            return Err(Error::CountMismatch {
                field: "entropies",
                expected: candidates.len(),
                found: raw.len(),
            });
        }
        if candidates.is_empty() {
            return Err(Error::InvalidInput(
                "entropy table needs at least one candidate".into(),
            ));
        }
        if let Some(bad) = raw.iter().position(|h| !h.is_finite() || *h < 0.0) {
            return Err(Error::InvalidInput(format!(
                "entropy {} of candidate {} is not a finite non-negative value",
                raw[bad], candidates[bad]
            )));
        }
        let mut order: Vec<usize> = (0..candidates.len()).collect();
        order.sort_by_key(|&i| candidates[i]);
        if order
            .windows(2)
            .any(|w| candidates[w[0]] == candidates[w[1]])
        {
            return Err(Error::InvalidInput("duplicate candidate index".into()));
        }
        let candidates: Vec<usize> = order.iter().map(|&i| candidates[i]).collect();
        let raw: Vec<f64> = order.iter().map(|&i| raw[i]).collect();
        let normalized = normalize_entropies(&raw, epsilon);
        Ok(Self {
            candidates,
            raw,
            normalized,
        })
    }

    /// Canonical indices, ascending.
    pub fn candidates(&self) -> &[usize] {
        &self.candidates
    }

    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    pub fn normalized(&self) -> &[f64] {
        &self.normalized
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }
}

/// Largest pairwise distance among the given points.
pub fn max_pairwise_distance(coords: &[[f64; 2]], indices: &[usize]) -> f64 {
    let mut best = 0.0f64;
    for (a, &i) in indices.iter().enumerate() {
        for &j in &indices[a + 1..] {
            best = best.max(dist2d(coords[i], coords[j]));
        }
    }
    best
}

/// Distance from `candidate` to its nearest selected point, divided by
/// `d_max + eps`.
pub fn diversity(
    candidate: usize,
    selected: &[usize],
    coords: &[[f64; 2]],
    d_max: f64,
    epsilon: f64,
) -> Result<f64> {
    if selected.is_empty() {
        return Err(Error::EmptySelectedSet);
    }
    let nearest = selected
        .iter()
        .map(|&s| dist2d(coords[candidate], coords[s]))
        .fold(f64::INFINITY, f64::min);
    Ok(nearest / (d_max + epsilon))
}

/// Picks `count` items from the candidate pool.
///
/// The first pick is the highest raw entropy. Every later pick maximises
/// `alpha * D + (1 - alpha) * H` with `D` measured against `selected` plus the
/// picks so far. `D_max` is computed once over the starting candidate pool.
/// Ties go to the lowest canonical index. Returned ranks continue after
/// `selected.len()`.
pub fn acquisition_round(
    projection: &Projection2D,
    entropy: &EntropyTable,
    selected: &[usize],
    count: usize,
    blend: &ScoreBlend,
) -> Result<Vec<ManifestEntry>> {
    let coords = projection.coords();
    let n = coords.len();
    let candidates = entropy.candidates();
    if let Some(&bad) = candidates.iter().chain(selected).find(|&&i| i >= n) {
        return Err(Error::InvalidInput(format!(
            "index {bad} outside the pool of {n}"
        )));
    }
    let mut taken = vec![false; n];
    for &s in selected {
        taken[s] = true;
    }
    if let Some(&c) = candidates.iter().find(|&&c| taken[c]) {
        return Err(Error::InvalidInput(format!(
            "candidate {} is already selected",
            projection.ids()[c]
        )));
    }
    if count > candidates.len() {
        return Err(Error::BudgetExceedsPool {
            requested: count,
            available: candidates.len(),
        });
    }

    let eps = blend.epsilon();
    let d_max = max_pairwise_distance(coords, candidates);
    let scale = d_max + eps;
    let mut nearest = vec![f64::INFINITY; candidates.len()];
    let add = |nearest: &mut [f64], s: usize| {
        for (d, &c) in nearest.iter_mut().zip(candidates) {
            *d = d.min(dist2d(coords[c], coords[s]));
        }
    };
    for &s in selected {
        add(&mut nearest, s);
    }
    let mut any_selected = !selected.is_empty();
    let mut remaining = vec![true; candidates.len()];
    let mut entries = Vec::with_capacity(count);

    for step in 0..count {
        let slot = if step == 0 {
            argmax_remaining(entropy.raw(), &remaining)
        } else {
            let scores: Vec<f64> = (0..candidates.len())
                .map(|k| blend.score(entropy.normalized()[k], nearest[k] / scale))
                .collect();
            argmax_remaining(&scores, &remaining)
        }
        .expect("count checked against candidate pool");

        let h = entropy.normalized()[slot];
        let d = any_selected.then(|| nearest[slot] / scale);
        entries.push(ManifestEntry {
            id: projection.ids()[candidates[slot]].clone(),
            rank: selected.len() + step,
            reason: Reason::Acquisition,
            cluster: None,
            scores: Some(ScoreComponents {
                entropy: h,
                diversity: d,
                score: d.map(|d| blend.score(h, d)),
            }),
        });
        remaining[slot] = false;
        add(&mut nearest, candidates[slot]);
        any_selected = true;
    }
    Ok(entries)
}

fn argmax_remaining(values: &[f64], remaining: &[bool]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (k, &v) in values.iter().enumerate() {
        if remaining[k] && best.is_none_or(|b| v > values[b]) {
            best = Some(k);
        }
    }
    best
}

/// Appends an acquisition round to a prior manifest. Candidates are the pool
/// items not yet in `prior`; `raw_entropy` is indexed by canonical position
/// and only read for candidates.
pub fn extend_manifest(
    prior: &SelectionManifest,
    projection: &Projection2D,
    raw_entropy: &[f64],
    count: usize,
    blend: &ScoreBlend,
) -> Result<SelectionManifest> {
    if raw_entropy.len() != projection.len() {
        return Err(Error::CountMismatch {
            field: "entropies",
            expected: projection.len(),
            found: raw_entropy.len(),
        });
    }
    let selected = crate::cold_start::manifest_indices(prior, projection.ids())?;
    let mut taken = vec![false; projection.len()];
    for &s in &selected {
        taken[s] = true;
    }
    let candidates: Vec<usize> = (0..projection.len()).filter(|&i| !taken[i]).collect();
    let raw = candidates.iter().map(|&i| raw_entropy[i]).collect();
    let table = EntropyTable::new(candidates, raw, blend.epsilon())?;
    let picks = acquisition_round(projection, &table, &selected, count, blend)?;

    let mut out = prior.clone();
    out.entries.extend(picks);
    out.run_config.budget += count;
    out.run_config.acquisition += count;
    out.run_config.alpha = Some(blend.alpha());
    Ok(out)
}
