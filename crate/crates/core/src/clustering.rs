//! k-means on the 2D projection, silhouette-scored choice of the cluster
//! count, and exact medoids.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_model::{ClusteringResult, Projection2D, SweepEntry};
use crate::error::{Error, Result};
use crate::geometry::{dist2d, sq_dist2d};

/// Candidate range and solver settings for the k sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KSweepConfig {
    pub k_min: usize,
    pub k_max: usize,
    pub restarts: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
}

impl KSweepConfig {
    pub const DEFAULT_K_CAP: usize = 10;

    /// `{2, ..., min(budget, 10, n - 1)}` with 10 restarts.
    pub fn for_budget(n: usize, budget: usize, seed: u64) -> Self {
        Self {
            k_min: 2,
            k_max: budget.min(Self::DEFAULT_K_CAP).min(n.saturating_sub(1)),
            restarts: 10,
            max_iters: 300,
            tol: 1e-6,
            seed,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.k_min < 2 {
            return Err(Error::InvalidInput(format!(
                "k_min {} must be at least 2",
                self.k_min
            )));
        }
        if self.k_min > self.k_max {
            return Err(Error::InvalidInput(format!(
                "k_min {} exceeds k_max {}",
                self.k_min, self.k_max
            )));
        }
        if self.k_max + 1 > n {
            return Err(Error::InvalidInput(format!(
                "k_max {} must be below the pool size {n}",
                self.k_max
            )));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidInput("restarts must be at least 1".into()));
        }
        if self.tol.is_nan() || self.tol < 0.0 {
            return Err(Error::InvalidInput("tol must be non-negative".into()));
        }
        Ok(())
    }

    pub fn options(&self) -> KMeansOptions {
        KMeansOptions {
            seed: self.seed,
            restarts: self.restarts,
            max_iters: self.max_iters,
            tol: self.tol,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KMeansOptions {
    pub seed: u64,
    pub restarts: usize,
    pub max_iters: usize,
    pub tol: f64,
}

impl KMeansOptions {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            restarts: 10,
            max_iters: 300,
            tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansFit {
    pub labels: Vec<usize>,
    pub centroids: Vec<[f64; 2]>,
    pub inertia: f64,
    /// Inertia after every Lloyd iteration.
    pub inertia_trace: Vec<f64>,
    /// Inertia of every restart, in restart order (only set by [`kmeans`]).
    pub restart_inertias: Vec<f64>,
}

/// Best of `restarts` k-means++ seeded Lloyd runs, chosen by
/// `(inertia, restart index)`. Labels are renumbered by first appearance in
/// canonical order.
pub fn kmeans(coords: &[[f64; 2]], k: usize, options: &KMeansOptions) -> Result<KMeansFit> {
    let n = coords.len();
    if k < 1 || k > n {
        return Err(Error::InvalidInput(format!("k = {k} outside [1, {n}]")));
    }
    if options.restarts == 0 {
        return Err(Error::InvalidInput("restarts must be at least 1".into()));
    }
    let distinct = count_distinct(coords);
    if distinct < k {
        return Err(Error::DegenerateInput { k, distinct });
    }

    let fits: Vec<KMeansFit> = (0..options.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
            rng.set_stream(r as u64);
            let init = kmeans_plus_plus(coords, k, &mut rng);
            lloyd(coords, init, options.max_iters, options.tol)
        })
        .collect();

    let restart_inertias: Vec<f64> = fits.iter().map(|f| f.inertia).collect();
    let mut best = 0;
    for (r, f) in fits.iter().enumerate() {
        if f.inertia < fits[best].inertia {
            best = r;
        }
    }
    let mut fit = fits.into_iter().nth(best).expect("at least one restart");
    relabel_by_first_appearance(&mut fit);
    fit.restart_inertias = restart_inertias;
    Ok(fit)
}

fn count_distinct(coords: &[[f64; 2]]) -> usize {
    let mut keys: Vec<(u64, u64)> = coords
        .iter()
        .map(|c| ((c[0] + 0.0).to_bits(), (c[1] + 0.0).to_bits()))
        .collect();
    keys.sort_unstable();
    keys.dedup();
    keys.len()
}

/// k-means++ seeding: first centre uniform, then proportional to the squared
/// distance to the nearest chosen centre.
pub fn kmeans_plus_plus<R: Rng>(coords: &[[f64; 2]], k: usize, rng: &mut R) -> Vec<[f64; 2]> {
    let n = coords.len();
    let mut centres = Vec::with_capacity(k);
    centres.push(coords[rng.random_range(0..n)]);
    let mut nearest: Vec<f64> = coords.iter().map(|&c| sq_dist2d(c, centres[0])).collect();
    while centres.len() < k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, &w) in nearest.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                acc += w;
                chosen = Some(i);
                if acc > target {
                    break;
                }
            }
            chosen.expect("positive total weight")
        } else {
            // every point coincides with a centre; callers rule this out
            rng.random_range(0..n)
        };
        let c = coords[pick];
        centres.push(c);
        for (d, &p) in nearest.iter_mut().zip(coords) {
            *d = d.min(sq_dist2d(p, c));
        }
    }
    centres
}

/// Lloyd iterations from the given centroids. Empty clusters are repaired by
/// moving the point farthest from its own centroid (taken from a cluster with
/// at least two members) into the empty one.
pub fn lloyd(
    coords: &[[f64; 2]],
    mut centroids: Vec<[f64; 2]>,
    max_iters: usize,
    tol: f64,
) -> KMeansFit {
    let n = coords.len();
    let k = centroids.len();
    let mut labels = vec![0usize; n];
    let mut inertia_trace = Vec::new();
    for _ in 0..max_iters.max(1) {
        for (l, &p) in labels.iter_mut().zip(coords) {
            *l = nearest_centroid(p, &centroids);
        }
        repair_empty(coords, &mut labels, &centroids, k);
        let updated = means(coords, &labels, k);
        let shift = centroids
            .iter()
            .zip(&updated)
            .map(|(&a, &b)| dist2d(a, b))
            .fold(0.0, f64::max);
        centroids = updated;
        inertia_trace.push(inertia(coords, &labels, &centroids));
        if shift <= tol {
            break;
        }
    }
    KMeansFit {
        inertia: *inertia_trace.last().expect("at least one iteration"),
        labels,
        centroids,
        inertia_trace,
        restart_inertias: Vec::new(),
    }
}

fn nearest_centroid(p: [f64; 2], centroids: &[[f64; 2]]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, &m) in centroids.iter().enumerate() {
        let d = sq_dist2d(p, m);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

fn repair_empty(coords: &[[f64; 2]], labels: &mut [usize], centroids: &[[f64; 2]], k: usize) {
    let mut sizes = vec![0usize; k];
    for &l in labels.iter() {
        sizes[l] += 1;
    }
    for empty in 0..k {
        if sizes[empty] > 0 {
            continue;
        }
        let mut far: Option<(usize, f64)> = None;
        for (i, &p) in coords.iter().enumerate() {
            if sizes[labels[i]] < 2 {
                continue;
            }
            let d = sq_dist2d(p, centroids[labels[i]]);
            if far.is_none_or(|(_, best)| d > best) {
                far = Some((i, d));
            }
        }
        if let Some((i, _)) = far {
            sizes[labels[i]] -= 1;
            labels[i] = empty;
            sizes[empty] = 1;
        }
    }
}

fn means(coords: &[[f64; 2]], labels: &[usize], k: usize) -> Vec<[f64; 2]> {
    let mut sums = vec![[0.0f64; 2]; k];
    let mut counts = vec![0usize; k];
    for (&p, &l) in coords.iter().zip(labels) {
        sums[l][0] += p[0];
        sums[l][1] += p[1];
        counts[l] += 1;
    }
    sums.iter()
        .zip(&counts)
        .map(|(s, &c)| {
            let c = c.max(1) as f64;
            [s[0] / c, s[1] / c]
        })
        .collect()
}

/// Sum of squared distances of each point to its assigned centroid.
pub fn inertia(coords: &[[f64; 2]], labels: &[usize], centroids: &[[f64; 2]]) -> f64 {
    coords
        .iter()
        .zip(labels)
        .map(|(&p, &l)| sq_dist2d(p, centroids[l]))
        .sum()
}

fn relabel_by_first_appearance(fit: &mut KMeansFit) {
    let k = fit.centroids.len();
    let mut map = vec![usize::MAX; k];
    let mut next = 0;
    for &l in &fit.labels {
        if map[l] == usize::MAX {
            map[l] = next;
            next += 1;
        }
    }
    let mut centroids = vec![[0.0; 2]; k];
    for (old, &new) in map.iter().enumerate() {
        if new != usize::MAX {
            centroids[new] = fit.centroids[old];
        }
    }
    for l in fit.labels.iter_mut() {
        *l = map[*l];
    }
    fit.centroids = centroids;
}

/// Number of clusters implied by `labels`, checking that none is empty.
fn cluster_count(labels: &[usize]) -> Result<usize> {
    let k = labels.iter().max().map_or(0, |&m| m + 1);
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    if let Some(c) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::InvalidLabels(format!("cluster {c} is empty")));
    }
    Ok(k)
}

/// Mean silhouette coefficient with Euclidean distances. Items in singleton
/// clusters score 0.
pub fn silhouette(coords: &[[f64; 2]], labels: &[usize]) -> Result<f64> {
    if labels.len() != coords.len() {
        return Err(Error::InvalidLabels(format!(
            "{} labels for {} points",
            labels.len(),
            coords.len()
        )));
    }
    let k = cluster_count(labels)?;
    if k < 2 {
        return Err(Error::InvalidLabels(format!(
            "silhouette needs k >= 2, got {k}"
        )));
    }
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }

    let n = coords.len();
    let mut sums = vec![0.0f64; k];
    let mut total = 0.0;
    for i in 0..n {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..n {
            if j != i {
                sums[labels[j]] += dist2d(coords[i], coords[j]);
            }
        }
        let own = labels[i];
        if sizes[own] < 2 {
            continue;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Ok(total / n as f64)
}

/// Position of the sweep entry with the highest silhouette; ties go to the
/// earlier (smaller k) entry.
pub fn best_sweep_entry(sweep: &[SweepEntry]) -> Option<usize> {
    crate::geometry::argmax_first(sweep.iter().map(|e| e.silhouette))
}

/// Runs k-means for every k in the sweep and keeps the silhouette maximiser.
pub fn choose_k(projection: &Projection2D, sweep: &KSweepConfig) -> Result<ClusteringResult> {
    let coords = projection.coords();
    sweep.validate(coords.len())?;
    let options = sweep.options();
    let mut fits = Vec::new();
    let mut table = Vec::new();
    for k in sweep.k_min..=sweep.k_max {
        let fit = kmeans(coords, k, &options)?;
        let s = silhouette(coords, &fit.labels)?;
        table.push(SweepEntry {
            k,
            silhouette: s,
            inertia: fit.inertia,
        });
        fits.push(fit);
    }
    let best = best_sweep_entry(&table)
        .ok_or_else(|| Error::InvalidInput("silhouette undefined for every swept k".into()))?;
    let fit = fits.swap_remove(best);
    let k_hat = table[best].k;

    let mut members = vec![Vec::new(); k_hat];
    for (i, &l) in fit.labels.iter().enumerate() {
        members[l].push(i);
    }
    let medoid_indices = members
        .iter()
        .map(|m| medoid(coords, m))
        .collect::<Result<Vec<_>>>()?;
    let medoids = medoid_indices
        .iter()
        .map(|&i| projection.ids()[i].clone())
        .collect();
    Ok(ClusteringResult {
        labels: fit.labels,
        k_hat,
        sweep: table,
        medoid_indices,
        medoids,
        centroids: fit.centroids,
    })
}

/// Member minimising the summed Euclidean distance to the other members.
/// Ties go to the lowest canonical index; member order does not matter.
pub fn medoid(coords: &[[f64; 2]], members: &[usize]) -> Result<usize> {
    if members.is_empty() {
        return Err(Error::EmptyCluster);
    }
    let mut sorted = members.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut best: Option<(usize, f64)> = None;
    for &i in &sorted {
        let total: f64 = sorted.iter().map(|&j| dist2d(coords[i], coords[j])).sum();
        if best.is_none_or(|(_, b)| total < b) {
            best = Some((i, total));
        }
    }
    Ok(best.expect("non-empty").0)
}
