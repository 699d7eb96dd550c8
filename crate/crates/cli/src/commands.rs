use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use coldstart_core::acquisition::{extend_manifest, image_entropy};
use coldstart_core::clustering::{choose_k, KSweepConfig};
use coldstart_core::cold_start::{
    cold_start_select, kmeans_to_budget_select, manifest_indices, random_select,
};
use coldstart_core::io::{
    encode_coords, manifest_json, read_manifest, read_mask, read_probability_map, scatter_csv,
};
use coldstart_core::metrics::{
    coverage_radius, default_seeds, hd95, mean_dice, seeded_runs, DiceMode, LabelMask, RunStats,
};
use coldstart_core::projection::{TsneConfig, TsneInit};
use coldstart_core::{ItemId, Projection2D, ScoreBlend, SelectionManifest, DEFAULT_EPSILON};

use crate::dataset::{tsne_config_from, Dataset};
use crate::{
    BaselineArgs, BaselinePolicy, ColdstartArgs, Command, Init, MetricsArgs, Mode, ProjectArgs,
    RunsArgs, RunsPolicy, ScatterArgs, SelectArgs, TsneArgs,
};

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Project(a) => project(a),
        Command::Coldstart(a) => coldstart(a),
        Command::Select(a) => select(a),
        Command::Baseline(a) => baseline(a),
        Command::Metrics(a) => metrics(a),
        Command::Scatter(a) => scatter(a),
        Command::Runs(a) => runs(a),
    }
}

fn tsne_config(args: &TsneArgs, seed: u64) -> TsneConfig {
    TsneConfig {
        perplexity: args.perplexity,
        iterations: args.iters,
        seed,
        init: match args.init {
            Init::Pca => TsneInit::Pca,
            Init::Random => TsneInit::RandomGaussian,
        },
        ..TsneConfig::default()
    }
}

/// The projection a manifest was computed on: stored coordinates, or t-SNE
/// rerun with the recorded settings.
fn manifest_projection(data: &Dataset, manifest: &SelectionManifest) -> Result<Projection2D> {
    let config = match &manifest.run_config.tsne {
        Some(p) => tsne_config_from(p),
        None => TsneConfig::with_seed(manifest.run_config.seed),
    };
    Ok(data.projection(&config)?.0)
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => fs::write(path, bytes).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn emit_manifest(out: Option<&Path>, manifest: &SelectionManifest) -> Result<()> {
    manifest.validate()?;
    emit(out, manifest_json(manifest)?.as_bytes())
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    emit(out, text.as_bytes())
}

fn project(a: ProjectArgs) -> Result<()> {
    let data = Dataset::open(&a.data)?;
    let embeddings = data.embeddings()?;
    let projection =
        coldstart_core::projection::run_tsne(&embeddings, &tsne_config(&a.tsne, a.seed))?;
    let out = a.out.unwrap_or_else(|| data.coords_path());
    emit(Some(&out), &encode_coords(&projection)?)
}

fn coldstart(a: ColdstartArgs) -> Result<()> {
    let data = Dataset::open(&a.io.data)?;
    let (projection, tsne) = data.projection(&tsne_config(&a.tsne, a.seed))?;
    let mut sweep = KSweepConfig::for_budget(projection.len(), a.budget, a.seed);
    sweep.k_min = a.k_min.unwrap_or(sweep.k_min);
    sweep.k_max = a.k_max.unwrap_or(sweep.k_max);
    let clustering = choose_k(&projection, &sweep)?;
    let mut manifest = cold_start_select(&projection, &clustering, a.budget)?;
    manifest.run_config.seed = a.seed;
    manifest.run_config.sweep = Some(sweep);
    manifest.run_config.tsne = tsne;
    emit_manifest(a.io.out.as_deref(), &manifest)
}

fn select(a: SelectArgs) -> Result<()> {
    let data = Dataset::open(&a.io.data)?;
    let prior = read_manifest(&a.manifest)?;
    let projection = manifest_projection(&data, &prior)?;
    let probs_dir = a.probs.unwrap_or_else(|| data.probs_dir());
    let taken: HashSet<&ItemId> = prior.ids().collect();
    let ids = projection.ids();

    let raw = ids
        .par_iter()
        .map(|id| -> coldstart_core::Result<f64> {
            if taken.contains(id) {
                return Ok(0.0);
            }
            let map = read_probability_map(&probs_dir.join(format!("{id}.prb")), id.clone())?;
            Ok(image_entropy(&map, DEFAULT_EPSILON))
        })
        .collect::<coldstart_core::Result<Vec<f64>>>()?;

    let blend = ScoreBlend::with_alpha(a.alpha)?;
    let manifest = extend_manifest(&prior, &projection, &raw, a.budget, &blend)?;
    emit_manifest(a.io.out.as_deref(), &manifest)
}

fn baseline(a: BaselineArgs) -> Result<()> {
    let data = Dataset::open(&a.io.data)?;
    let manifest = match a.policy {
        BaselinePolicy::Random => random_select(&data.ids(), a.budget, a.seed)?,
        BaselinePolicy::KmeansToBudget => {
            let (projection, tsne) = data.projection(&tsne_config(&a.tsne, a.seed))?;
            let mut m = kmeans_to_budget_select(&projection, a.budget, a.seed)?;
            m.run_config.tsne = tsne;
            m
        }
    };
    emit_manifest(a.io.out.as_deref(), &manifest)
}

#[derive(Serialize)]
struct ItemMetrics {
    id: ItemId,
    dice: f64,
    /// Absent when a compared class is empty in one of the masks.
    hd95: Option<f64>,
}

#[derive(Serialize)]
struct MetricsReport {
    mode: &'static str,
    spacing: [f64; 2],
    items: Vec<ItemMetrics>,
    mean_dice: Option<f64>,
    mean_hd95: Option<f64>,
}

fn foreground(mask: &LabelMask) -> coldstart_core::Result<LabelMask> {
    let labels = mask.labels().iter().map(|&l| u16::from(l > 0)).collect();
    LabelMask::new(mask.id().clone(), 2, mask.height(), mask.width(), labels)
}

fn item_hd95(
    pred: &LabelMask,
    truth: &LabelMask,
    mode: Mode,
    spacing: (f64, f64),
) -> coldstart_core::Result<Option<f64>> {
    let classes: Vec<u16> = match mode {
        Mode::Image => vec![1],
        Mode::PerClass => (1..truth.classes() as u16)
            .filter(|c| truth.labels().contains(c) && pred.labels().contains(c))
            .collect(),
    };
    let (pred, truth) = match mode {
        Mode::Image => (foreground(pred)?, foreground(truth)?),
        Mode::PerClass => (pred.clone(), truth.clone()),
    };
    let mut values = Vec::new();
    for c in classes {
        match hd95(&pred, &truth, c, spacing) {
            Ok(v) => values.push(v),
            Err(coldstart_core::Error::EmptyMask { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok((!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64))
}

fn mask_files(dir: &Path) -> Result<Vec<(ItemId, PathBuf)>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "msk") {
            let stem = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default();
            files.push((ItemId::new(stem)?, path));
        }
    }
    files.sort();
    Ok(files)
}

fn metrics(a: MetricsArgs) -> Result<()> {
    let dice_mode = match a.mode {
        Mode::PerClass => DiceMode::PerClassMean,
        Mode::Image => DiceMode::ImageLevel,
    };
    let items = mask_files(&a.truth)?
        .par_iter()
        .map(|(id, truth_path)| -> coldstart_core::Result<ItemMetrics> {
            let truth = read_mask(truth_path, id.clone())?;
            let pred = read_mask(&a.pred.join(format!("{id}.msk")), id.clone())?;
            Ok(ItemMetrics {
                id: id.clone(),
                dice: mean_dice(&pred, &truth, dice_mode)?,
                hd95: item_hd95(&pred, &truth, a.mode, a.spacing)?,
            })
        })
        .collect::<coldstart_core::Result<Vec<_>>>()?;

    let mean = |v: Vec<f64>| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    let report = MetricsReport {
        mode: match a.mode {
            Mode::PerClass => "per_class",
            Mode::Image => "image",
        },
        spacing: [a.spacing.0, a.spacing.1],
        mean_dice: mean(items.iter().map(|i| i.dice).collect()),
        mean_hd95: mean(items.iter().filter_map(|i| i.hd95).collect()),
        items,
    };
    emit_json(a.out.as_deref(), &report)
}

fn scatter(a: ScatterArgs) -> Result<()> {
    let data = Dataset::open(&a.io.data)?;
    let manifest = read_manifest(&a.manifest)?;
    let projection = manifest_projection(&data, &manifest)?;
    let clustering = match &manifest.run_config.sweep {
        Some(sweep) => Some(choose_k(&projection, sweep)?),
        None => None,
    };
    let test_ids = match &a.test_ids {
        Some(path) => fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(ItemId::new)
            .collect::<coldstart_core::Result<Vec<_>>>()?,
        None => Vec::new(),
    };
    let csv = scatter_csv(&projection, clustering.as_ref(), &manifest, &test_ids)?;
    emit(a.io.out.as_deref(), csv.as_bytes())
}

#[derive(Serialize)]
struct RunsReport {
    policy: &'static str,
    budget: usize,
    metric: &'static str,
    #[serde(flatten)]
    stats: RunStats,
}

fn runs(a: RunsArgs) -> Result<()> {
    let data = Dataset::open(&a.io.data)?;
    let seeds = a.seeds.clone().unwrap_or_else(default_seeds);
    let stats = seeded_runs(&seeds, |seed| {
        let (projection, _) = data.projection(&tsne_config(&a.tsne, seed))?;
        let manifest = match a.policy {
            RunsPolicy::Coldstart => {
                let sweep = KSweepConfig::for_budget(projection.len(), a.budget, seed);
                let clustering = choose_k(&projection, &sweep)?;
                cold_start_select(&projection, &clustering, a.budget)?
            }
            RunsPolicy::Random => random_select(projection.ids(), a.budget, seed)?,
            RunsPolicy::KmeansToBudget => kmeans_to_budget_select(&projection, a.budget, seed)?,
        };
        let picks = manifest_indices(&manifest, projection.ids())?;
        coverage_radius(&picks, projection.coords())
    })?;
    let report = RunsReport {
        policy: match a.policy {
            RunsPolicy::Coldstart => "coldstart",
            RunsPolicy::Random => "random",
            RunsPolicy::KmeansToBudget => "kmeans-to-budget",
        },
        budget: a.budget,
        metric: "coverage_radius",
        stats,
    };
    emit_json(a.io.out.as_deref(), &report)
}
