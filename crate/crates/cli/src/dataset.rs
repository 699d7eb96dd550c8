//! Loading a dataset directory.

use std::path::{Path, PathBuf};

use coldstart_core::data_model::TsneParams;
use coldstart_core::io::{
    quantize_projection, read_coords, read_embeddings, read_items, ItemRecord,
};
use coldstart_core::projection::{run_tsne, TsneConfig, TsneInit};
use coldstart_core::{EmbeddingSet, ItemId, Projection2D, Result};

pub struct Dataset {
    pub root: PathBuf,
    pub items: Vec<ItemRecord>,
}

impl Dataset {
    pub fn open(root: &Path) -> Result<Self> {
        Ok(Self {
            root: root.to_path_buf(),
            items: read_items(&root.join("items.json"))?,
        })
    }

    pub fn ids(&self) -> Vec<ItemId> {
        self.items.iter().map(|r| r.id.clone()).collect()
    }

    pub fn embeddings(&self) -> Result<EmbeddingSet> {
        read_embeddings(&self.root.join("embeddings.bin"), &self.ids())
    }

    pub fn coords_path(&self) -> PathBuf {
        self.root.join("coords.bin")
    }

    pub fn probs_dir(&self) -> PathBuf {
        self.root.join("probs")
    }

    /// The stored projection if `coords.bin` exists, otherwise a fresh t-SNE
    /// run rounded through `f32` so it matches what `project` would write.
    /// The second value is `Some` only when t-SNE was run here.
    pub fn projection(&self, config: &TsneConfig) -> Result<(Projection2D, Option<TsneParams>)> {
        let path = self.coords_path();
        if path.exists() {
            return Ok((read_coords(&path, &self.ids())?, None));
        }
        let embeddings = self.embeddings()?;
        let params = config.resolve(embeddings.len())?;
        let projection = quantize_projection(&run_tsne(&embeddings, config)?)?;
        Ok((projection, Some(params)))
    }
}

/// Rebuilds the optimiser settings recorded in a manifest.
pub fn tsne_config_from(params: &TsneParams) -> TsneConfig {
    TsneConfig {
        perplexity: Some(params.perplexity),
        iterations: params.iterations,
        early_exaggeration_factor: params.early_exaggeration_factor,
        early_exaggeration_iters: params.early_exaggeration_iters,
        learning_rate: Some(params.learning_rate),
        momentum_initial: params.momentum_initial,
        momentum_final: params.momentum_final,
        momentum_switch_iter: params.momentum_switch_iter,
        seed: params.seed,
        init: if params.init == "random-gaussian" {
            TsneInit::RandomGaussian
        } else {
            TsneInit::Pca
        },
    }
}
