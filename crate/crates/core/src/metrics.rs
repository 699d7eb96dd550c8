//! Segmentation metrics (Dice, HD95), the coverage radius of a selection, and
//! summary statistics over seeded repetitions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_model::ItemId;
use crate::error::{Error, Result};
use crate::geometry::dist2d;

/// Integer class map of one image.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelMask {
    id: ItemId,
    classes: usize,
    height: usize,
    width: usize,
    labels: Vec<u16>,
}

impl LabelMask {
    pub fn new(
        id: ItemId,
        classes: usize,
        height: usize,
        width: usize,
        labels: Vec<u16>,
    ) -> Result<Self> {
        if labels.len() != height * width {
            return Err(Error::CountMismatch {
                field: "mask labels",
                expected: height * width,
                found: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| usize::from(l) >= classes) {
            return Err(Error::InvalidInput(format!(
                "label {bad} outside [0, {classes})"
            )));
        }
        Ok(Self {
            id,
            classes,
            height,
            width,
            labels,
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

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    fn binary(&self, class: u16) -> Vec<bool> {
        self.labels.iter().map(|&l| l == class).collect()
    }

    fn foreground(&self) -> Vec<bool> {
        self.labels.iter().map(|&l| l > 0).collect()
    }
}

fn check_shapes(pred: &LabelMask, truth: &LabelMask) -> Result<()> {
    if pred.height != truth.height || pred.width != truth.width || pred.classes != truth.classes {
        return Err(Error::ShapeMismatch(format!(
            "prediction {}x{} ({} classes) vs truth {}x{} ({} classes)",
            pred.height, pred.width, pred.classes, truth.height, truth.width, truth.classes
        )));
    }
    Ok(())
}

fn binary_dice(a: &[bool], b: &[bool]) -> f64 {
    let (mut inter, mut size_a, mut size_b) = (0usize, 0usize, 0usize);
    for (&x, &y) in a.iter().zip(b) {
        size_a += usize::from(x);
        size_b += usize::from(y);
        inter += usize::from(x && y);
    }
    if size_a + size_b == 0 {
        return 1.0;
    }
    2.0 * inter as f64 / (size_a + size_b) as f64
}

/// Dice of the class-`class` masks; 1.0 when both are empty.
pub fn dice(pred: &LabelMask, truth: &LabelMask, class: u16) -> Result<f64> {
    check_shapes(pred, truth)?;
    Ok(binary_dice(&pred.binary(class), &truth.binary(class)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiceMode {
    /// Mean over foreground classes present in the reference mask.
    PerClassMean,
    /// Dice of the union of all foreground classes.
    ImageLevel,
}

/// Aggregate Dice. In per-class mode, classes absent from `truth` are skipped;
/// if no foreground class is present the image-level value is returned.
pub fn mean_dice(pred: &LabelMask, truth: &LabelMask, mode: DiceMode) -> Result<f64> {
    check_shapes(pred, truth)?;
    let image_level = || binary_dice(&pred.foreground(), &truth.foreground());
    match mode {
        DiceMode::ImageLevel => Ok(image_level()),
        DiceMode::PerClassMean => {
            let mut present = vec![false; truth.classes];
            for &l in &truth.labels {
                present[usize::from(l)] = true;
            }
            let scores: Vec<f64> = (1..truth.classes)
                .filter(|&c| present[c])
                .map(|c| binary_dice(&pred.binary(c as u16), &truth.binary(c as u16)))
                .collect();
            if scores.is_empty() {
                Ok(image_level())
            } else {
                Ok(scores.iter().sum::<f64>() / scores.len() as f64)
            }
        }
    }
}

/// Foreground pixels with at least one 4-neighbour outside the mask (image
/// borders count as outside), as `(row, col)`.
fn boundary(mask: &[bool], height: usize, width: usize) -> Vec<(usize, usize)> {
    let at = |r: usize, c: usize| mask[r * width + c];
    let mut out = Vec::new();
    for r in 0..height {
        for c in 0..width {
            if !at(r, c) {
                continue;
            }
            let edge = r == 0
                || c == 0
                || r + 1 == height
                || c + 1 == width
                || !at(r - 1, c)
                || !at(r + 1, c)
                || !at(r, c - 1)
                || !at(r, c + 1);
            if edge {
                out.push((r, c));
            }
        }
    }
    out
}

/// Linear-interpolation percentile (`q` in `[0, 100]`) of unsorted values.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of an empty set");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = q / 100.0 * (v.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    v[lo] + frac * (v[hi] - v[lo])
}

fn directed_distances(
    from: &[(usize, usize)],
    to: &[(usize, usize)],
    spacing: (f64, f64),
) -> Vec<f64> {
    let scale = |p: (usize, usize)| [p.0 as f64 * spacing.0, p.1 as f64 * spacing.1];
    let to: Vec<[f64; 2]> = to.iter().map(|&p| scale(p)).collect();
    from.iter()
        .map(|&p| {
            let a = scale(p);
            to.iter()
                .map(|&b| dist2d(a, b))
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// 95th-percentile Hausdorff distance between the class-`class` boundaries, in
/// the units of `spacing` (row, column). The larger of the two directed
/// percentiles is reported.
pub fn hd95(pred: &LabelMask, truth: &LabelMask, class: u16, spacing: (f64, f64)) -> Result<f64> {
    check_shapes(pred, truth)?;
    let (h, w) = (truth.height, truth.width);
    let a = boundary(&pred.binary(class), h, w);
    if a.is_empty() {
        return Err(Error::EmptyMask {
            class,
            which: "prediction",
        });
    }
    let b = boundary(&truth.binary(class), h, w);
    if b.is_empty() {
        return Err(Error::EmptyMask {
            class,
            which: "reference",
        });
    }
    let ab = percentile(&directed_distances(&a, &b, spacing), 95.0);
    let ba = percentile(&directed_distances(&b, &a, spacing), 95.0);
    Ok(ab.max(ba))
}

/// Largest distance from any pool point to its nearest selected point.
pub fn coverage_radius(selected: &[usize], coords: &[[f64; 2]]) -> Result<f64> {
    if selected.is_empty() {
        return Err(Error::EmptySelection);
    }
    Ok(coords
        .iter()
        .map(|&p| {
            selected
                .iter()
                .map(|&s| dist2d(p, coords[s]))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max))
}

/// Per-seed values with their mean, population standard deviation and median.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub seeds: Vec<u64>,
    pub values: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub median: f64,
}

impl RunStats {
    pub fn new(seeds: Vec<u64>, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || seeds.len() != values.len() {
            return Err(Error::InvalidInput(format!(
                "{} seeds for {} values",
                seeds.len(),
                values.len()
            )));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
        let median = percentile(&values, 50.0);
        Ok(Self {
            seeds,
            values,
            mean,
            std,
            median,
        })
    }
}

/// Seeds `42 + r` for `r = 1..=11`.
pub fn default_seeds() -> Vec<u64> {
    (1..=11).map(|r| 42 + r).collect()
}

/// Evaluates `policy` once per seed (possibly in parallel) and summarises the
/// results in seed order.
pub fn seeded_runs<F>(seeds: &[u64], policy: F) -> Result<RunStats>
where
    F: Fn(u64) -> Result<f64> + Sync,
{
    let values = seeds
        .par_iter()
        .map(|&s| policy(s))
        .collect::<Result<Vec<f64>>>()?;
    RunStats::new(seeds.to_vec(), values)
}
