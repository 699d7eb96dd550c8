//! Cold-start selection: one medoid per cluster, proportional allocation of
//! the remaining budget, and farthest-point augmentation inside clusters.
//! Also hosts the two cold-start baselines (uniform random and
//! k-means-to-budget).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::clustering::{kmeans, medoid, KMeansOptions};
use crate::data_model::{
    check_ids, ClusteringResult, ItemId, ManifestEntry, Projection2D, Reason, RunConfig,
    SelectionManifest,
};
use crate::error::{Error, Result};
use crate::geometry::dist2d;

/// Split of the remainder `R = B - k_hat` across clusters.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Allocation {
    pub remainder: usize,
    pub per_cluster: Vec<usize>,
}

/// Proportional allocation of `remainder` slots over clusters of the given
/// sizes.
///
/// Quotas `R * size / total` are rounded half away from zero, then repaired
/// one slot at a time by largest remainder until they sum to `R`: when over,
/// the entry with the smallest `quota - r` loses a slot; when under, the entry
/// with the largest `quota - r` gains one. A cluster never receives more than
/// `size - 1` slots (its medoid is already taken); overflow is handed out by
/// the same rule. Ties favour the lower cluster index.
pub fn allocate(sizes: &[usize], remainder: usize) -> Result<Allocation> {
    if sizes.contains(&0) {
        return Err(Error::InvalidInput("cluster sizes must be positive".into()));
    }
    let capacity: usize = sizes.iter().map(|s| s - 1).sum();
    if remainder > capacity {
        return Err(Error::InfeasibleBudget {
            remainder,
            capacity,
        });
    }
    let total: usize = sizes.iter().sum();
    let quotas: Vec<f64> = sizes
        .iter()
        .map(|&s| remainder as f64 * s as f64 / total as f64)
        .collect();
    let mut alloc: Vec<usize> = quotas.iter().map(|q| q.round() as usize).collect();

    let slack = |alloc: &[usize], c: usize| quotas[c] - alloc[c] as f64;
    loop {
        let assigned: usize = alloc.iter().sum();
        if assigned > remainder {
            // smallest slack loses; ties: the higher index loses
            let c = (0..alloc.len())
                .filter(|&c| alloc[c] > 0)
                .fold(None::<usize>, |best, c| match best {
                    Some(b) if slack(&alloc, c) > slack(&alloc, b) => Some(b),
                    _ => Some(c),
                })
                .expect("some cluster holds a slot");
            alloc[c] -= 1;
        } else {
            break;
        }
    }

    let mut overflow = 0;
    for (a, &s) in alloc.iter_mut().zip(sizes) {
        if *a > s - 1 {
            overflow += *a - (s - 1);
            *a = s - 1;
        }
    }
    let mut missing = remainder - alloc.iter().sum::<usize>();
    debug_assert!(missing >= overflow);
    while missing > 0 {
        let c = (0..alloc.len())
            .filter(|&c| alloc[c] < sizes[c] - 1)
            .fold(None::<usize>, |best, c| match best {
                Some(b) if slack(&alloc, c) <= slack(&alloc, b) => Some(b),
                _ => Some(c),
            })
            .expect("feasibility checked above");
        alloc[c] += 1;
        missing -= 1;
    }
    Ok(Allocation {
        remainder,
        per_cluster: alloc,
    })
}

/// Greedy farthest-point picks among `members`, measuring distance to
/// everything in `selected` plus earlier picks. Ties go to the lowest
/// canonical index.
pub fn farthest_point_augment(
    coords: &[[f64; 2]],
    members: &[usize],
    selected: &[usize],
    r: usize,
) -> Result<Vec<usize>> {
    let mut chosen = vec![false; coords.len()];
    for &s in selected {
        chosen[s] = true;
    }
    let mut candidates: Vec<usize> = members.iter().copied().filter(|&m| !chosen[m]).collect();
    candidates.sort_unstable();
    candidates.dedup();
    if r > candidates.len() {
        return Err(Error::BudgetExceedsCluster {
            requested: r,
            available: candidates.len(),
        });
    }
    let mut tracker = MinDistance::new(coords, selected);
    let mut picks = Vec::with_capacity(r);
    for _ in 0..r {
        let pick = tracker
            .farthest(&candidates, &chosen)
            .expect("enough candidates");
        chosen[pick] = true;
        tracker.add(pick);
        picks.push(pick);
    }
    Ok(picks)
}

/// Running minimum distance from every point to a growing selected set.
struct MinDistance<'a> {
    coords: &'a [[f64; 2]],
    nearest: Vec<f64>,
}

impl<'a> MinDistance<'a> {
    fn new(coords: &'a [[f64; 2]], selected: &[usize]) -> Self {
        let mut t = Self {
            coords,
            nearest: vec![f64::INFINITY; coords.len()],
        };
        for &s in selected {
            t.add(s);
        }
        t
    }

    fn add(&mut self, s: usize) {
        let p = self.coords[s];
        for (d, &q) in self.nearest.iter_mut().zip(self.coords) {
            *d = d.min(dist2d(p, q));
        }
    }

    /// `candidates` must be ascending so the first maximum is the lowest index.
    fn farthest(&self, candidates: &[usize], chosen: &[bool]) -> Option<usize> {
        let mut best: Option<usize> = None;
        for &c in candidates.iter().filter(|&&c| !chosen[c]) {
            if best.is_none_or(|b| self.nearest[c] > self.nearest[b]) {
                best = Some(c);
            }
        }
        best
    }
}

/// Medoids of every cluster followed by farthest-point picks, visiting
/// clusters round-robin in index order until each allocation is used up.
///
/// The returned manifest's `run_config` carries the policy and budget only;
/// callers fill in seed, sweep and projection parameters.
pub fn cold_start_select(
    projection: &Projection2D,
    clustering: &ClusteringResult,
    budget: usize,
) -> Result<SelectionManifest> {
    let coords = projection.coords();
    if clustering.labels.len() != coords.len() {
        return Err(Error::IdMismatch {
            position: clustering.labels.len().min(coords.len()),
            detail: format!(
                "clustering has {} labels, projection {} items",
                clustering.labels.len(),
                coords.len()
            ),
        });
    }
    let k = clustering.k_hat;
    if budget < k {
        return Err(Error::InvalidInput(format!(
            "budget {budget} is smaller than the {k} cluster medoids"
        )));
    }
    if budget > coords.len() {
        return Err(Error::BudgetExceedsPool {
            requested: budget,
            available: coords.len(),
        });
    }
    let members = clustering.members();
    let sizes: Vec<usize> = members.iter().map(Vec::len).collect();
    let allocation = allocate(&sizes, budget - k)?;

    let ids = projection.ids();
    let mut entries = Vec::with_capacity(budget);
    let mut chosen = vec![false; coords.len()];
    for (c, &m) in clustering.medoid_indices.iter().enumerate() {
        if clustering.labels[m] != c {
            return Err(Error::InvalidLabels(format!(
                "medoid {} is not a member of cluster {c}",
                ids[m]
            )));
        }
        chosen[m] = true;
        entries.push(entry(ids, m, entries.len(), Reason::Medoid, Some(c)));
    }

    let mut tracker = MinDistance::new(coords, &clustering.medoid_indices);
    let mut left = allocation.per_cluster.clone();
    while left.iter().any(|&r| r > 0) {
        for c in 0..k {
            if left[c] == 0 {
                continue;
            }
            let pick =
                tracker
                    .farthest(&members[c], &chosen)
                    .ok_or(Error::BudgetExceedsCluster {
                        requested: allocation.per_cluster[c],
                        available: sizes[c] - 1,
                    })?;
            chosen[pick] = true;
            tracker.add(pick);
            left[c] -= 1;
            entries.push(entry(
                ids,
                pick,
                entries.len(),
                Reason::FarthestPoint,
                Some(c),
            ));
        }
    }

    Ok(SelectionManifest {
        run_config: RunConfig::new("coldstart", budget, 0),
        entries,
    })
}

fn entry(
    ids: &[ItemId],
    i: usize,
    rank: usize,
    reason: Reason,
    cluster: Option<usize>,
) -> ManifestEntry {
    ManifestEntry {
        id: ids[i].clone(),
        rank,
        reason,
        cluster,
        scores: None,
    }
}

/// Uniform sample of `budget` items without replacement.
pub fn random_select(ids: &[ItemId], budget: usize, seed: u64) -> Result<SelectionManifest> {
    if budget > ids.len() {
        return Err(Error::BudgetExceedsPool {
            requested: budget,
            available: ids.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = rand::seq::index::sample(&mut rng, ids.len(), budget);
    let entries = picks
        .iter()
        .enumerate()
        .map(|(rank, i)| entry(ids, i, rank, Reason::RandomBaseline, None))
        .collect();
    Ok(SelectionManifest {
        run_config: RunConfig::new("random", budget, seed),
        entries,
    })
}

/// k-means with `k = budget` on the projection, one medoid per cluster.
pub fn kmeans_to_budget_select(
    projection: &Projection2D,
    budget: usize,
    seed: u64,
) -> Result<SelectionManifest> {
    let coords = projection.coords();
    if budget > coords.len() {
        return Err(Error::BudgetExceedsPool {
            requested: budget,
            available: coords.len(),
        });
    }
    if budget < 2 {
        return Err(Error::InvalidInput(format!(
            "k-means-to-budget needs a budget of at least 2, got {budget}"
        )));
    }
    let fit = kmeans(coords, budget, &KMeansOptions::with_seed(seed))?;
    let mut members = vec![Vec::new(); budget];
    for (i, &l) in fit.labels.iter().enumerate() {
        members[l].push(i);
    }
    let mut entries = Vec::with_capacity(budget);
    for (c, m) in members.iter().enumerate() {
        let med = medoid(coords, m)?;
        entries.push(entry(projection.ids(), med, c, Reason::Medoid, Some(c)));
    }
    Ok(SelectionManifest {
        run_config: RunConfig::new("kmeans-to-budget", budget, seed),
        entries,
    })
}

/// Canonical indices of the manifest's entries within `ids`, in manifest order.
pub fn manifest_indices(manifest: &SelectionManifest, ids: &[ItemId]) -> Result<Vec<usize>> {
    let lookup: std::collections::HashMap<&ItemId, usize> =
        ids.iter().enumerate().map(|(i, id)| (id, i)).collect();
    manifest
        .entries
        .iter()
        .map(|e| {
            lookup.get(&e.id).copied().ok_or_else(|| {
                Error::InvalidInput(format!("manifest id {} is not in the pool", e.id))
            })
        })
        .collect()
}

/// Checks that two id lists match element-wise.
pub fn ensure_same_pool(a: &[ItemId], b: &[ItemId]) -> Result<()> {
    check_ids(a, b)
}
