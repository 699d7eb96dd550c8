//! Fixtures and brute-force oracles shared by the integration tests. Nothing
//! here calls into the code paths it is used to check.

#![allow(dead_code)]

use coldstart_core::{EmbeddingSet, ItemId, Projection2D};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn ids(prefix: &str, n: usize) -> Vec<ItemId> {
    (0..n)
        .map(|i| ItemId::new(format!("{prefix}{i:04}")).unwrap())
        .collect()
}

/// Isotropic Gaussian blobs: `sizes[c]` points around `centres[c]`, unit
/// standard deviation. Returns the pool and the generating component of
/// every row.
pub fn gaussian_blobs(
    centres: &[Vec<f64>],
    sizes: &[usize],
    sigma: f64,
    seed: u64,
) -> (EmbeddingSet, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).unwrap();
    let dim = centres[0].len();
    let mut features = Vec::new();
    let mut component = Vec::new();
    for (c, (centre, &size)) in centres.iter().zip(sizes).enumerate() {
        for _ in 0..size {
            for &m in centre.iter().take(dim) {
                features.push(m + normal.sample(&mut rng));
            }
            component.push(c);
        }
    }
    let n = component.len();
    (
        EmbeddingSet::new(ids("item", n), features, dim).unwrap(),
        component,
    )
}

/// Centres on the coordinate axes, `separation` apart along distinct axes.
pub fn axis_centres(count: usize, dim: usize, separation: f64) -> Vec<Vec<f64>> {
    (0..count)
        .map(|c| {
            let mut v = vec![0.0; dim];
            v[c % dim] = separation * (1 + c / dim) as f64;
            v
        })
        .collect()
}

/// Three blobs of 20 points in 10D, centres 10 sigma apart.
pub fn three_blob_fixture(seed: u64) -> (EmbeddingSet, Vec<usize>) {
    let sep = 10.0 / std::f64::consts::SQRT_2;
    gaussian_blobs(&axis_centres(3, 10, sep), &[20, 20, 20], 1.0, seed)
}

/// Five-component mixture in 16D for the seeded protocol runs.
pub fn five_blob_pool(n: usize, seed: u64) -> (EmbeddingSet, Vec<usize>) {
    let centres = axis_centres(5, 16, 8.0);
    let base = n / 5;
    let mut sizes = vec![base; 5];
    for s in sizes.iter_mut().take(n - base * 5) {
        *s += 1;
    }
    gaussian_blobs(&centres, &sizes, 1.0, seed)
}

pub fn random_points(n: usize, seed: u64, scale: f64) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| [rng.random::<f64>() * scale, rng.random::<f64>() * scale])
        .collect()
}

pub fn projection_of(points: Vec<[f64; 2]>) -> Projection2D {
    let n = points.len();
    Projection2D::new(ids("p", n), points).unwrap()
}

pub fn euclid(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1])).sqrt()
}

/// Straight O(N^2 k) silhouette: for each point and each cluster, one full
/// pass over all other points.
pub fn silhouette_oracle(coords: &[[f64; 2]], labels: &[usize]) -> f64 {
    let n = coords.len();
    let k = labels.iter().max().unwrap() + 1;
    let mut total = 0.0;
    for i in 0..n {
        let mut mean_to = vec![0.0; k];
        let mut count = vec![0usize; k];
        for c in 0..k {
            let mut s = 0.0;
            for j in 0..n {
                if j != i && labels[j] == c {
                    s += euclid(coords[i], coords[j]);
                }
            }
            mean_to[c] = s;
            count[c] = (0..n).filter(|&j| labels[j] == c).count();
        }
        let own = labels[i];
        if count[own] == 1 {
            continue;
        }
        let a = mean_to[own] / (count[own] - 1) as f64;
        let mut b = f64::INFINITY;
        for c in 0..k {
            if c != own {
                b = b.min(mean_to[c] / count[c] as f64);
            }
        }
        let m = if a > b { a } else { b };
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    total / n as f64
}

/// Trustworthiness of a 2D embedding with respect to the input features,
/// from explicit neighbour rankings.
pub fn trustworthiness(features: &[f64], dim: usize, embedded: &[[f64; 2]], k: usize) -> f64 {
    let n = embedded.len();
    let input_dist = |i: usize, j: usize| -> f64 {
        (0..dim)
            .map(|d| (features[i * dim + d] - features[j * dim + d]).powi(2))
            .sum::<f64>()
    };
    let mut penalty = 0.0;
    for i in 0..n {
        let mut by_input: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        by_input.sort_by(|&a, &b| {
            input_dist(i, a)
                .total_cmp(&input_dist(i, b))
                .then(a.cmp(&b))
        });
        let mut rank = vec![0usize; n];
        for (r, &j) in by_input.iter().enumerate() {
            rank[j] = r + 1;
        }
        let mut by_embedded: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        by_embedded.sort_by(|&a, &b| {
            euclid(embedded[i], embedded[a])
                .total_cmp(&euclid(embedded[i], embedded[b]))
                .then(a.cmp(&b))
        });
        for &j in by_embedded.iter().take(k) {
            if rank[j] > k {
                penalty += (rank[j] - k) as f64;
            }
        }
    }
    let (n, k) = (n as f64, k as f64);
    1.0 - 2.0 / (n * k * (2.0 * n - 3.0 * k - 1.0)) * penalty
}

/// Shannon entropy (bits) of a probability row, skipping zeros.
pub fn entropy_bits(row: &[f64]) -> f64 {
    -row.iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.log2())
        .sum::<f64>()
}

/// Minimum-inertia 2-partition of points on a line, by enumeration.
pub fn best_two_partition(xs: &[f64]) -> (Vec<bool>, f64) {
    let n = xs.len();
    let mut best = (Vec::new(), f64::INFINITY);
    for mask in 1..(1u32 << n) - 1 {
        let side: Vec<bool> = (0..n).map(|i| mask & (1 << i) != 0).collect();
        let mut cost = 0.0;
        for flag in [false, true] {
            let pts: Vec<f64> = xs
                .iter()
                .zip(&side)
                .filter(|(_, &s)| s == flag)
                .map(|(&x, _)| x)
                .collect();
            let mean = pts.iter().sum::<f64>() / pts.len() as f64;
            cost += pts.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
        }
        if cost < best.1 {
            best = (side, cost);
        }
    }
    best
}

/// Sum of distances from `i` to every member, the medoid objective.
pub fn summed_distance(coords: &[[f64; 2]], members: &[usize], i: usize) -> f64 {
    let mut sorted = members.to_vec();
    sorted.sort_unstable();
    sorted.iter().map(|&j| euclid(coords[i], coords[j])).sum()
}

/// Distance from `p` to the nearest point of `set`.
pub fn min_distance_to(coords: &[[f64; 2]], set: &[usize], p: usize) -> f64 {
    set.iter()
        .map(|&s| euclid(coords[p], coords[s]))
        .fold(f64::INFINITY, f64::min)
}

/// Top-`count` candidates by raw entropy, descending, ties by index.
pub fn top_by_entropy(candidates: &[usize], raw: &[f64], count: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        raw[b]
            .total_cmp(&raw[a])
            .then(candidates[a].cmp(&candidates[b]))
    });
    order.iter().take(count).map(|&k| candidates[k]).collect()
}

/// Greedy farthest-point traversal over `candidates` starting from the
/// entropy argmax, distances measured to `prior` plus picks.
pub fn entropy_seeded_fps(
    coords: &[[f64; 2]],
    candidates: &[usize],
    raw: &[f64],
    prior: &[usize],
    count: usize,
) -> Vec<usize> {
    let first = top_by_entropy(candidates, raw, 1)[0];
    let mut picked = vec![first];
    let mut chosen: Vec<usize> = prior.to_vec();
    chosen.push(first);
    while picked.len() < count {
        let mut best: Option<(usize, f64)> = None;
        for &c in candidates {
            if chosen.contains(&c) {
                continue;
            }
            let d = min_distance_to(coords, &chosen, c);
            match best {
                Some((b, bd)) if d < bd || (d == bd && c > b) => {}
                _ => best = Some((c, d)),
            }
        }
        let (c, _) = best.unwrap();
        picked.push(c);
        chosen.push(c);
    }
    picked
}

/// Boundary pixels via erosion: a foreground pixel survives erosion when all
/// four neighbours are inside the image and foreground.
pub fn boundary_by_erosion(mask: &[bool], h: usize, w: usize) -> Vec<(f64, f64)> {
    let get = |r: isize, c: isize| -> bool {
        r >= 0
            && c >= 0
            && (r as usize) < h
            && (c as usize) < w
            && mask[r as usize * w + c as usize]
    };
    let mut out = Vec::new();
    for r in 0..h as isize {
        for c in 0..w as isize {
            if !get(r, c) {
                continue;
            }
            let interior = get(r - 1, c) && get(r + 1, c) && get(r, c - 1) && get(r, c + 1);
            if !interior {
                out.push((r as f64, c as f64));
            }
        }
    }
    out
}

/// Percentile by explicit linear interpolation between order statistics.
pub fn percentile_oracle(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = (v.len() - 1) as f64 * q;
    let below = pos.floor();
    let i = below as usize;
    if i + 1 >= v.len() {
        return v[i];
    }
    v[i] * (1.0 - (pos - below)) + v[i + 1] * (pos - below)
}

pub fn hd95_oracle(a: &[bool], b: &[bool], h: usize, w: usize, spacing: (f64, f64)) -> f64 {
    let ba = boundary_by_erosion(a, h, w);
    let bb = boundary_by_erosion(b, h, w);
    let directed = |from: &[(f64, f64)], to: &[(f64, f64)]| -> Vec<f64> {
        from.iter()
            .map(|&(r, c)| {
                to.iter()
                    .map(|&(r2, c2)| {
                        let dy = (r - r2) * spacing.0;
                        let dx = (c - c2) * spacing.1;
                        (dy * dy + dx * dx).sqrt()
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    };
    let p1 = percentile_oracle(&directed(&ba, &bb), 0.95);
    let p2 = percentile_oracle(&directed(&bb, &ba), 0.95);
    p1.max(p2)
}

pub fn dice_oracle(a: &[bool], b: &[bool]) -> f64 {
    let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count() as f64;
    let total = (a.iter().filter(|x| **x).count() + b.iter().filter(|x| **x).count()) as f64;
    if total == 0.0 {
        1.0
    } else {
        2.0 * inter / total
    }
}

/// Random blob-shaped mask: a union of a few random rectangles.
pub fn random_mask(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Vec<bool> {
    let mut m = vec![false; h * w];
    let rects = rng.random_range(1..=3);
    for _ in 0..rects {
        let r0 = rng.random_range(0..h);
        let c0 = rng.random_range(0..w);
        let r1 = rng.random_range(r0..h) + 1;
        let c1 = rng.random_range(c0..w) + 1;
        for r in r0..r1 {
            for c in c0..c1 {
                m[r * w + c] = true;
            }
        }
    }
    m
}
