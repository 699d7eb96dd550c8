//! Dataset directories on disk and a runner for the binary.

#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use coldstart_core::io::{
    write_embeddings, write_items, write_mask, write_probability_map, ItemRecord,
};
use coldstart_core::metrics::LabelMask;
use coldstart_core::{EmbeddingSet, ItemId, ProbabilityMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn coldstart(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coldstart"))
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn write_dataset(dir: &Path, embeddings: &EmbeddingSet) {
    let records: Vec<ItemRecord> = embeddings
        .ids()
        .iter()
        .cloned()
        .map(ItemRecord::new)
        .collect();
    write_items(&dir.join("items.json"), &records).unwrap();
    write_embeddings(&dir.join("embeddings.bin"), embeddings).unwrap();
}

/// Random 3-class 8x8 softmax-like maps on a 1/256 grid, one per item.
pub fn write_probs(dir: &Path, ids: &[ItemId], seed: u64) {
    let probs = dir.join("probs");
    std::fs::create_dir_all(&probs).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (c, h, w) = (3, 8, 8);
    for id in ids {
        let plane = h * w;
        let mut values = vec![0f32; c * plane];
        for p in 0..plane {
            let a = rng.random_range(0..=256u32);
            let b = rng.random_range(0..=256 - a);
            values[p] = a as f32 / 256.0;
            values[plane + p] = b as f32 / 256.0;
            values[2 * plane + p] = (256 - a - b) as f32 / 256.0;
        }
        let map = ProbabilityMap::new(id.clone(), c, h, w, values).unwrap();
        write_probability_map(&probs.join(format!("{id}.prb")), &map).unwrap();
    }
}

pub fn write_masks(dir: &Path, ids: &[ItemId], seed: u64) {
    std::fs::create_dir_all(dir).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for id in ids {
        let labels = (0..64).map(|_| rng.random_range(0..3u16)).collect();
        let mask = LabelMask::new(id.clone(), 3, 8, 8, labels).unwrap();
        write_mask(&dir.join(format!("{id}.msk")), &mask).unwrap();
    }
}
