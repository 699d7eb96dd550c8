mod common;

use coldstart_core::acquisition::{acquisition_round, EntropyTable};
use coldstart_core::clustering::{choose_k, KSweepConfig};
use coldstart_core::cold_start::{
    allocate, cold_start_select, farthest_point_augment, kmeans_to_budget_select, manifest_indices,
};
use coldstart_core::{Reason, ScoreBlend, DEFAULT_EPSILON};
use common::{entropy_seeded_fps, euclid, min_distance_to, random_points, top_by_entropy};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn blobs_2d(centres: &[[f64; 2]], sizes: &[usize], seed: u64) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (c, &n) in centres.iter().zip(sizes) {
        for _ in 0..n {
            out.push([
                c[0] + rng.random::<f64>() * 4.0,
                c[1] + rng.random::<f64>() * 4.0,
            ]);
        }
    }
    out
}

/// Quotas for the allocation oracle.
fn quotas(sizes: &[usize], r: usize) -> Vec<f64> {
    let total: usize = sizes.iter().sum();
    sizes
        .iter()
        .map(|&s| r as f64 * s as f64 / total as f64)
        .collect()
}

#[test]
fn allocation_worked_examples() {
    assert_eq!(
        allocate(&[50, 30, 20], 8).unwrap().per_cluster,
        vec![4, 2, 2]
    );
    assert_eq!(quotas(&[50, 30, 20], 8), vec![4.0, 2.4, 1.6]);
    assert_eq!(allocate(&[3, 3, 3], 4).unwrap().per_cluster, vec![2, 1, 1]);
}

#[test]
fn allocation_binding_caps_can_break_proportionality() {
    // two singletons cannot take any slot, so the large cluster absorbs them
    let a = allocate(&[1, 1, 10], 9).unwrap();
    assert_eq!(a.per_cluster, vec![0, 0, 9]);
    let q = quotas(&[1, 1, 10], 9);
    assert!((a.per_cluster[2] as f64 - q[2]).abs() > 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn allocation_sums_and_stays_near_quota(
        sizes in prop::collection::vec(2usize..80, 1..11),
        frac in 0.0f64..=1.0,
    ) {
        let total: usize = sizes.iter().sum();
        let r = (frac * (total / 2) as f64).floor() as usize;
        let a = allocate(&sizes, r).unwrap();
        prop_assert_eq!(a.per_cluster.iter().sum::<usize>(), r);
        for (c, q) in quotas(&sizes, r).iter().enumerate() {
            prop_assert!((a.per_cluster[c] as f64 - q).abs() <= 1.0);
            prop_assert!(a.per_cluster[c] < sizes[c]);
        }
    }

    #[test]
    fn allocation_sums_whenever_feasible(
        sizes in prop::collection::vec(1usize..40, 1..11),
        frac in 0.0f64..=1.0,
    ) {
        let capacity: usize = sizes.iter().map(|s| s - 1).sum();
        let r = (frac * capacity as f64).floor() as usize;
        let a = allocate(&sizes, r).unwrap();
        prop_assert_eq!(a.per_cluster.iter().sum::<usize>(), r);
        prop_assert!(a.per_cluster.iter().zip(&sizes).all(|(&x, &s)| x < s));
    }
}

#[test]
fn farthest_point_steps_are_optimal() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for trial in 0..30 {
        let n = rng.random_range(5..200);
        let pts = random_points(n, 1000 + trial, 10.0);
        let members: Vec<usize> = (0..n).filter(|_| rng.random::<f64>() < 0.7).collect();
        if members.len() < 2 {
            continue;
        }
        let outside: Vec<usize> = (0..n).filter(|i| !members.contains(i)).take(2).collect();
        let mut seeds = vec![members[0]];
        seeds.extend(&outside);
        let r = rng.random_range(0..members.len());
        let picks = farthest_point_augment(&pts, &members, &seeds, r).unwrap();
        let mut selected = seeds.clone();
        for &p in &picks {
            let d = min_distance_to(&pts, &selected, p);
            for &m in members.iter().filter(|m| !selected.contains(m)) {
                let dm = min_distance_to(&pts, &selected, m);
                assert!(d > dm || (d == dm && p <= m), "trial {trial}: {p} vs {m}");
            }
            selected.push(p);
        }
    }
}

#[test]
fn three_blob_cold_start_allocates_evenly() {
    let pts = blobs_2d(&[[0.0, 0.0], [40.0, 0.0], [0.0, 40.0]], &[20, 20, 20], 3);
    let proj = common::projection_of(pts);
    let cl = choose_k(&proj, &KSweepConfig::for_budget(60, 9, 43)).unwrap();
    assert_eq!(cl.k_hat, 3);
    let m = cold_start_select(&proj, &cl, 9).unwrap();
    m.validate().unwrap();
    assert!(m.entries[..3].iter().all(|e| e.reason == Reason::Medoid));
    let mut per = [0; 3];
    for e in &m.entries[3..] {
        assert_eq!(e.reason, Reason::FarthestPoint);
        per[e.cluster.unwrap()] += 1;
    }
    assert_eq!(per, [2, 2, 2]);
}

#[test]
fn unequal_blobs_split_augmentation() {
    let pts = blobs_2d(&[[0.0, 0.0], [50.0, 0.0]], &[40, 20], 8);
    let proj = common::projection_of(pts);
    let cl = choose_k(&proj, &KSweepConfig::for_budget(60, 8, 43)).unwrap();
    assert_eq!(cl.k_hat, 2);
    let m = cold_start_select(&proj, &cl, 8).unwrap();
    let big = cl.labels[0];
    let fps: Vec<_> = m
        .entries
        .iter()
        .filter(|e| e.reason == Reason::FarthestPoint)
        .collect();
    assert_eq!(fps.iter().filter(|e| e.cluster == Some(big)).count(), 4);
    assert_eq!(fps.iter().filter(|e| e.cluster != Some(big)).count(), 2);
}

#[test]
fn cold_start_fps_picks_are_step_optimal() {
    for seed in 0..10 {
        let pts = blobs_2d(
            &[[0.0, 0.0], [30.0, 0.0], [15.0, 25.0]],
            &[25, 15, 20],
            seed,
        );
        let proj = common::projection_of(pts.clone());
        let cl = choose_k(&proj, &KSweepConfig::for_budget(60, 14, seed)).unwrap();
        let m = cold_start_select(&proj, &cl, 14).unwrap();
        let order = manifest_indices(&m, proj.ids()).unwrap();
        let mut selected: Vec<usize> = order[..cl.k_hat].to_vec();
        for (e, &p) in m.entries.iter().zip(&order).skip(cl.k_hat) {
            let c = e.cluster.unwrap();
            let d = min_distance_to(&pts, &selected, p);
            for q in (0..pts.len()).filter(|&q| cl.labels[q] == c && !selected.contains(&q)) {
                let dq = min_distance_to(&pts, &selected, q);
                assert!(d > dq || (d == dq && p <= q));
            }
            selected.push(p);
        }
    }
}

#[test]
fn kmeans_to_budget_one_per_blob() {
    let pts = blobs_2d(&[[0.0, 0.0], [40.0, 0.0], [0.0, 40.0]], &[20, 20, 20], 5);
    let proj = common::projection_of(pts);
    let m = kmeans_to_budget_select(&proj, 3, 43).unwrap();
    let idx = manifest_indices(&m, proj.ids()).unwrap();
    let mut blobs: Vec<usize> = idx.iter().map(|i| i / 20).collect();
    blobs.sort_unstable();
    assert_eq!(blobs, vec![0, 1, 2]);
}

#[test]
fn kmeans_to_budget_on_square() {
    let pts = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
    let proj = common::projection_of(pts.clone());
    let m = kmeans_to_budget_select(&proj, 2, 43).unwrap();
    let idx = manifest_indices(&m, proj.ids()).unwrap();
    // optimal 2-partitions of the unit square pair adjacent corners (inertia 1)
    let fit = coldstart_core::clustering::kmeans(
        &pts,
        2,
        &coldstart_core::clustering::KMeansOptions::with_seed(43),
    )
    .unwrap();
    assert!((fit.inertia - 1.0).abs() < 1e-12);
    assert_ne!(fit.labels[idx[0]], fit.labels[idx[1]]);
    assert!((euclid(pts[idx[0]], pts[idx[1]]) - 1.0).abs() < 1e-12);
}

struct AcquisitionFixture {
    coords: Vec<[f64; 2]>,
    prior: Vec<usize>,
    candidates: Vec<usize>,
    raw: Vec<f64>,
}

fn acquisition_fixture(seed: u64) -> AcquisitionFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(20..120);
    let coords = random_points(n, seed + 500, 10.0);
    let prior_len = rng.random_range(0..5);
    let prior: Vec<usize> = (0..prior_len).map(|i| i * 3).collect();
    let candidates: Vec<usize> = (0..n).filter(|i| !prior.contains(i)).collect();
    let raw: Vec<f64> = candidates
        .iter()
        .map(|_| rng.random::<f64>() * 0.7)
        .collect();
    AcquisitionFixture {
        coords,
        prior,
        candidates,
        raw,
    }
}

fn picks(fx: &AcquisitionFixture, alpha: f64, count: usize) -> Vec<usize> {
    let proj = common::projection_of(fx.coords.clone());
    let table = EntropyTable::new(fx.candidates.clone(), fx.raw.clone(), DEFAULT_EPSILON).unwrap();
    let entries = acquisition_round(
        &proj,
        &table,
        &fx.prior,
        count,
        &ScoreBlend::with_alpha(alpha).unwrap(),
    )
    .unwrap();
    entries
        .iter()
        .map(|e| proj.index_of(&e.id).unwrap())
        .collect()
}

#[test]
fn pure_entropy_blend_is_top_entropy() {
    for seed in 0..20 {
        let fx = acquisition_fixture(seed);
        let count = 10.min(fx.candidates.len());
        assert_eq!(
            picks(&fx, 0.0, count),
            top_by_entropy(&fx.candidates, &fx.raw, count)
        );
    }
}

#[test]
fn pure_diversity_blend_is_entropy_seeded_fps() {
    for seed in 0..20 {
        let fx = acquisition_fixture(seed);
        let count = 10.min(fx.candidates.len());
        let expected = entropy_seeded_fps(&fx.coords, &fx.candidates, &fx.raw, &fx.prior, count);
        assert_eq!(picks(&fx, 1.0, count), expected);
    }
}

#[test]
fn every_pick_maximises_the_blended_score() {
    for seed in 0..10 {
        let fx = acquisition_fixture(seed);
        let count = 15.min(fx.candidates.len());
        let got = picks(&fx, 0.3, count);

        let min = fx.raw.iter().copied().fold(f64::INFINITY, f64::min);
        let max = fx.raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let norm = |k: usize| (fx.raw[k] - min) / (max - min + DEFAULT_EPSILON);
        let mut d_max: f64 = 0.0;
        for &a in &fx.candidates {
            for &b in &fx.candidates {
                d_max = d_max.max(euclid(fx.coords[a], fx.coords[b]));
            }
        }
        let mut selected = fx.prior.clone();
        for (step, &p) in got.iter().enumerate() {
            if step > 0 {
                let score = |k: usize| {
                    let c = fx.candidates[k];
                    0.3 * (min_distance_to(&fx.coords, &selected, c) / (d_max + DEFAULT_EPSILON))
                        + 0.7 * norm(k)
                };
                let kp = fx.candidates.iter().position(|&c| c == p).unwrap();
                for k in 0..fx.candidates.len() {
                    let c = fx.candidates[k];
                    if selected.contains(&c) {
                        continue;
                    }
                    assert!(score(kp) > score(k) || (score(kp) == score(k) && p <= c));
                }
            }
            selected.push(p);
        }
    }
}

#[test]
fn scores_stay_in_unit_range_from_an_empty_prior() {
    for seed in 0..10 {
        let mut fx = acquisition_fixture(seed);
        fx.candidates = (0..fx.coords.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        fx.raw = fx.candidates.iter().map(|_| rng.random::<f64>()).collect();
        fx.prior.clear();
        let proj = common::projection_of(fx.coords.clone());
        let table =
            EntropyTable::new(fx.candidates.clone(), fx.raw.clone(), DEFAULT_EPSILON).unwrap();
        let entries = acquisition_round(&proj, &table, &[], 12, &ScoreBlend::default()).unwrap();
        for e in entries {
            let s = e.scores.unwrap();
            assert!((0.0..=1.0).contains(&s.entropy));
            if let (Some(d), Some(total)) = (s.diversity, s.score) {
                assert!((0.0..=1.0).contains(&d));
                assert!((0.0..=1.0).contains(&total));
            }
        }
    }
}

#[test]
fn candidate_storage_order_is_irrelevant() {
    let fx = acquisition_fixture(4);
    let proj = common::projection_of(fx.coords.clone());
    let blend = ScoreBlend::default();
    let a = EntropyTable::new(fx.candidates.clone(), fx.raw.clone(), DEFAULT_EPSILON).unwrap();
    let mut cands = fx.candidates.clone();
    let mut raw = fx.raw.clone();
    cands.reverse();
    raw.reverse();
    let b = EntropyTable::new(cands, raw, DEFAULT_EPSILON).unwrap();
    assert_eq!(
        acquisition_round(&proj, &a, &fx.prior, 8, &blend).unwrap(),
        acquisition_round(&proj, &b, &fx.prior, 8, &blend).unwrap()
    );
}
