//! Exact t-SNE projection of the embedding pool to 2D.
//!
//! Pools are small (hundreds of items), so affinities and gradients are
//! computed densely in `O(N^2)` per iteration. All loops run in a fixed order
//! and every random draw comes from a seeded ChaCha stream, so a given
//! `(embeddings, config)` pair always produces the same bytes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data_model::{EmbeddingSet, Projection2D, TsneParams};
use crate::error::{Error, Result};

/// Coordinates larger than this are treated as divergence.
const DIVERGENCE_LIMIT: f64 = 1e12;
const CALIBRATION_MAX_STEPS: usize = 200;
/// Calibrated rows must hit the target entropy to within this many bits.
pub const ENTROPY_TOLERANCE_BITS: f64 = 1e-4;
const MIN_GAIN: f64 = 0.01;
const INIT_STD: f64 = 1e-4;

/// Dense row-major `N x N` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_vec(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::ShapeMismatch(format!(
                "{} values do not form a {n}x{n} matrix",
                data.len()
            )));
        }
        Ok(Self { n, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }
}

/// Squared Euclidean distances between the rows of an `n x d` matrix.
pub fn pairwise_sq_distances(features: &[f64], n: usize, d: usize) -> SquareMatrix {
    assert_eq!(features.len(), n * d, "feature matrix shape");
    let mut out = SquareMatrix::zeros(n);
    for i in 0..n {
        let a = &features[i * d..(i + 1) * d];
        for j in (i + 1)..n {
            let b = &features[j * d..(j + 1) * d];
            let s: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
            out.set(i, j, s);
            out.set(j, i, s);
        }
    }
    out
}

/// Conditional affinities `P(j|i)` with a per-row Gaussian bandwidth chosen so
/// that each row's Shannon entropy is `log2(perplexity)` bits.
///
/// Rows whose off-diagonal distances are all equal have the uniform
/// distribution for every bandwidth and are returned as such.
pub fn conditional_affinities(distances: &SquareMatrix, perplexity: f64) -> Result<SquareMatrix> {
    let n = distances.n();
    if n < 3 {
        return Err(Error::InvalidInput(format!(
            "affinity calibration needs at least 3 items, got {n}"
        )));
    }
    if !(perplexity > 0.0 && perplexity.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "perplexity {perplexity} must be positive"
        )));
    }
    let target = perplexity.log2();
    let mut out = SquareMatrix::zeros(n);
    let mut shifted = vec![0.0; n];
    let mut weights = vec![0.0; n];

    for i in 0..n {
        let row = distances.row(i);
        let min = row
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, &v)| v)
            .fold(f64::INFINITY, f64::min);
        let mut spread = 0.0f64;
        for j in 0..n {
            shifted[j] = if j == i { 0.0 } else { row[j] - min };
            spread = spread.max(shifted[j]);
        }
        if spread == 0.0 {
            let u = 1.0 / (n - 1) as f64;
            for j in (0..n).filter(|&j| j != i) {
                out.set(i, j, u);
            }
            continue;
        }

        let mut beta = 1.0;
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        let mut deviation = f64::INFINITY;
        for _ in 0..CALIBRATION_MAX_STEPS {
            let entropy = row_entropy_bits(i, &shifted, beta, &mut weights);
            deviation = entropy - target;
            if deviation.abs() < 1e-9 {
                break;
            }
            if deviation > 0.0 {
                lo = beta;
                beta = if hi.is_finite() {
                    0.5 * (beta + hi)
                } else {
                    beta * 2.0
                };
            } else {
                hi = beta;
                beta = if lo.is_finite() {
                    0.5 * (beta + lo)
                } else {
                    beta * 0.5
                };
            }
        }
        // weights hold the distribution for the last evaluated beta
        if deviation.abs() > ENTROPY_TOLERANCE_BITS {
            return Err(Error::CalibrationFailed { row: i, deviation });
        }
        let total: f64 = weights.iter().sum();
        for j in (0..n).filter(|&j| j != i) {
            out.set(i, j, weights[j] / total);
        }
    }
    Ok(out)
}

/// Fills `weights` with unnormalised Gaussian weights and returns the entropy
/// of the normalised row in bits.
fn row_entropy_bits(i: usize, shifted: &[f64], beta: f64, weights: &mut [f64]) -> f64 {
    let mut total = 0.0;
    let mut weighted = 0.0;
    for (j, (&d, w)) in shifted.iter().zip(weights.iter_mut()).enumerate() {
        if j == i {
            *w = 0.0;
            continue;
        }
        *w = (-beta * d).exp();
        total += *w;
        weighted += d * *w;
    }
    (total.ln() + beta * weighted / total) / std::f64::consts::LN_2
}

/// Symmetrised joint affinities `P_ij = (P(j|i) + P(i|j)) / 2N`.
pub fn calibrate_affinities(distances: &SquareMatrix, perplexity: f64) -> Result<SquareMatrix> {
    let cond = conditional_affinities(distances, perplexity)?;
    let n = cond.n();
    let denom = 2.0 * n as f64;
    let mut joint = SquareMatrix::zeros(n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (cond.get(i, j) + cond.get(j, i)) / denom;
            joint.set(i, j, v);
            joint.set(j, i, v);
        }
    }
    Ok(joint)
}

/// Student-t kernel values `1 / (1 + |y_i - y_j|^2)` (zero diagonal) and their
/// off-diagonal sum.
fn student_kernel(coords: &[[f64; 2]]) -> (SquareMatrix, f64) {
    let n = coords.len();
    let mut num = SquareMatrix::zeros(n);
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = coords[i][0] - coords[j][0];
            let dy = coords[i][1] - coords[j][1];
            let v = 1.0 / (1.0 + dx * dx + dy * dy);
            num.set(i, j, v);
            num.set(j, i, v);
            total += 2.0 * v;
        }
    }
    (num, total)
}

/// `KL(P || Q)` where `Q` is the normalised Student-t affinity of `coords`.
pub fn kl_divergence(p: &SquareMatrix, coords: &[[f64; 2]]) -> f64 {
    let (num, total) = student_kernel(coords);
    let n = p.n();
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            let pij = p.get(i, j);
            if i == j || pij <= 0.0 {
                continue;
            }
            let qij = (num.get(i, j) / total).max(f64::MIN_POSITIVE);
            kl += pij * (pij / qij).ln();
        }
    }
    kl.max(0.0)
}

/// Analytic gradient of `KL(exaggeration * P || Q)` with respect to each
/// coordinate.
pub fn kl_gradient(p: &SquareMatrix, coords: &[[f64; 2]], exaggeration: f64) -> Vec<[f64; 2]> {
    let (num, total) = student_kernel(coords);
    gradient_from_kernel(p, coords, &num, total, exaggeration)
}

fn gradient_from_kernel(
    p: &SquareMatrix,
    coords: &[[f64; 2]],
    num: &SquareMatrix,
    total: f64,
    exaggeration: f64,
) -> Vec<[f64; 2]> {
    let n = coords.len();
    let mut grad = vec![[0.0; 2]; n];
    for i in 0..n {
        let mut g = [0.0; 2];
        for j in 0..n {
            if i == j {
                continue;
            }
            let w = num.get(i, j);
            let mult = (exaggeration * p.get(i, j) - w / total) * w;
            g[0] += mult * (coords[i][0] - coords[j][0]);
            g[1] += mult * (coords[i][1] - coords[j][1]);
        }
        grad[i] = [4.0 * g[0], 4.0 * g[1]];
    }
    grad
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TsneInit {
    /// Top two principal components rescaled to a tiny spread.
    Pca,
    RandomGaussian,
}

/// Optimiser settings. `None` fields are resolved from the pool size.
#[derive(Clone, Debug, PartialEq)]
pub struct TsneConfig {
    pub perplexity: Option<f64>,
    pub iterations: usize,
    pub early_exaggeration_factor: f64,
    pub early_exaggeration_iters: usize,
    pub learning_rate: Option<f64>,
    pub momentum_initial: f64,
    pub momentum_final: f64,
    pub momentum_switch_iter: usize,
    pub seed: u64,
    pub init: TsneInit,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: None,
            iterations: 1000,
            early_exaggeration_factor: 12.0,
            early_exaggeration_iters: 250,
            learning_rate: None,
            momentum_initial: 0.5,
            momentum_final: 0.8,
            momentum_switch_iter: 250,
            seed: 43,
            init: TsneInit::Pca,
        }
    }
}

impl TsneConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    /// Default perplexity for a pool of `n` items: `min(30, floor((n-1)/3))`,
    /// raised to 2 for very small pools and never above `n - 1`.
    pub fn default_perplexity(n: usize) -> f64 {
        let third = ((n.saturating_sub(1)) / 3) as f64;
        third.clamp(2.0, 30.0).min(n.saturating_sub(1) as f64)
    }

    pub fn default_learning_rate(n: usize) -> f64 {
        (n as f64 / 12.0).max(50.0)
    }

    /// Fills defaults and checks ranges for a pool of `n` items. Explicit
    /// perplexities are clamped to `n - 1`.
    pub fn resolve(&self, n: usize) -> Result<TsneParams> {
        if n < 3 {
            return Err(Error::InvalidInput(format!(
                "t-SNE needs at least 3 items, got {n}"
            )));
        }
        let perplexity = match self.perplexity {
            Some(p) if !(p > 0.0 && p.is_finite()) => {
                return Err(Error::InvalidInput(format!(
                    "perplexity {p} must be positive"
                )))
            }
            Some(p) => p.min((n - 1) as f64),
            None => Self::default_perplexity(n),
        };
        let learning_rate = self
            .learning_rate
            .unwrap_or_else(|| Self::default_learning_rate(n));
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "learning rate {learning_rate} must be positive"
            )));
        }
        if self.iterations == 0 || self.iterations < self.early_exaggeration_iters {
            return Err(Error::InvalidInput(format!(
                "iterations ({}) must be positive and cover the {} exaggeration iterations",
                self.iterations, self.early_exaggeration_iters
            )));
        }
        if self.early_exaggeration_factor <= 0.0 {
            return Err(Error::InvalidInput(
                "exaggeration factor must be positive".into(),
            ));
        }
        for m in [self.momentum_initial, self.momentum_final] {
            if !(0.0..1.0).contains(&m) {
                return Err(Error::InvalidInput(format!("momentum {m} outside [0, 1)")));
            }
        }
        Ok(TsneParams {
            perplexity,
            iterations: self.iterations,
            early_exaggeration_factor: self.early_exaggeration_factor,
            early_exaggeration_iters: self.early_exaggeration_iters,
            learning_rate,
            momentum_initial: self.momentum_initial,
            momentum_final: self.momentum_final,
            momentum_switch_iter: self.momentum_switch_iter,
            seed: self.seed,
            init: match self.init {
                TsneInit::Pca => "pca".into(),
                TsneInit::RandomGaussian => "random-gaussian".into(),
            },
        })
    }
}

/// Output of [`run_tsne_traced`].
#[derive(Clone, Debug)]
pub struct TsneRun {
    pub projection: Projection2D,
    pub params: TsneParams,
    /// Un-exaggerated KL divergence before the first update (index 0) and
    /// after every update.
    pub kl_trace: Vec<f64>,
}

/// Projects `embeddings` to 2D.
pub fn run_tsne(embeddings: &EmbeddingSet, config: &TsneConfig) -> Result<Projection2D> {
    optimize(embeddings, config, false).map(|r| r.projection)
}

/// Like [`run_tsne`], also recording the objective after every iteration.
pub fn run_tsne_traced(embeddings: &EmbeddingSet, config: &TsneConfig) -> Result<TsneRun> {
    optimize(embeddings, config, true)
}

fn optimize(embeddings: &EmbeddingSet, config: &TsneConfig, trace: bool) -> Result<TsneRun> {
    let n = embeddings.len();
    let params = config.resolve(n)?;
    let distances = pairwise_sq_distances(embeddings.features(), n, embeddings.dim());
    let p = calibrate_affinities(&distances, params.perplexity)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut y = match config.init {
        TsneInit::Pca => pca_init(embeddings, &mut rng),
        TsneInit::RandomGaussian => gaussian_init(n, &mut rng),
    };
    let mut update = vec![[0.0f64; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut kl_trace = Vec::new();
    if trace {
        kl_trace.reserve(params.iterations + 1);
        kl_trace.push(kl_divergence(&p, &y));
    }

    for iter in 0..params.iterations {
        let exaggeration = if iter < params.early_exaggeration_iters {
            params.early_exaggeration_factor
        } else {
            1.0
        };
        let momentum = if iter < params.momentum_switch_iter {
            params.momentum_initial
        } else {
            params.momentum_final
        };
        let (num, total) = student_kernel(&y);
        let grad = gradient_from_kernel(&p, &y, &num, total, exaggeration);

        for i in 0..n {
            for a in 0..2 {
                let g = grad[i][a];
                let u = update[i][a];
                gains[i][a] = if (g > 0.0) != (u > 0.0) {
                    gains[i][a] + 0.2
                } else {
                    (gains[i][a] * 0.8).max(MIN_GAIN)
                };
                update[i][a] = momentum * u - params.learning_rate * gains[i][a] * g;
                y[i][a] += update[i][a];
            }
        }
        center(&mut y);
        if y.iter()
            .flatten()
            .any(|v| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT)
        {
            return Err(Error::NonFinite { iteration: iter });
        }
        if trace {
            kl_trace.push(kl_divergence(&p, &y));
        }
    }

    Ok(TsneRun {
        projection: Projection2D::new(embeddings.ids().to_vec(), y)?,
        params,
        kl_trace,
    })
}

fn center(y: &mut [[f64; 2]]) {
    let n = y.len() as f64;
    let mut mean = [0.0; 2];
    for p in y.iter() {
        mean[0] += p[0];
        mean[1] += p[1];
    }
    mean[0] /= n;
    mean[1] /= n;
    for p in y.iter_mut() {
        p[0] -= mean[0];
        p[1] -= mean[1];
    }
}

fn gaussian_init(n: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    let normal = Normal::new(0.0, INIT_STD).expect("valid normal");
    (0..n)
        .map(|_| [normal.sample(rng), normal.sample(rng)])
        .collect()
}

/// First two principal components of the centred features, scaled so the
/// first column has standard deviation `INIT_STD`. Components with no variance
/// fall back to seeded Gaussian noise.
fn pca_init(embeddings: &EmbeddingSet, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    let n = embeddings.len();
    let d = embeddings.dim();
    let mut centred = embeddings.features().to_vec();
    for c in 0..d {
        let mean = (0..n).map(|i| centred[i * d + c]).sum::<f64>() / n as f64;
        for i in 0..n {
            centred[i * d + c] -= mean;
        }
    }

    let mut components: Vec<Vec<f64>> = Vec::with_capacity(2);
    let mut scores = vec![vec![0.0; n]; 2];
    for (k, column) in scores.iter_mut().enumerate() {
        let Some(v) = leading_direction(&centred, n, d, &components) else {
            break;
        };
        for (i, s) in column.iter_mut().enumerate() {
            *s = dot(&centred[i * d..(i + 1) * d], &v);
        }
        components.push(v);
        debug_assert_eq!(components.len(), k + 1);
    }

    let std_of = |col: &[f64]| {
        let mean = col.iter().sum::<f64>() / n as f64;
        (col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64).sqrt()
    };
    let first_std = std_of(&scores[0]);
    let normal = Normal::new(0.0, INIT_STD).expect("valid normal");
    for col in scores.iter_mut() {
        if std_of(col) > 0.0 && first_std > 0.0 {
            for v in col.iter_mut() {
                *v *= INIT_STD / first_std;
            }
        } else {
            for v in col.iter_mut() {
                *v = normal.sample(rng);
            }
        }
    }
    (0..n).map(|i| [scores[0][i], scores[1][i]]).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Power iteration for the leading right singular vector of `x`, restricted
/// to the orthogonal complement of `found`. Returns `None` when no variance is
/// left. The sign is fixed so the largest-magnitude entry is positive.
fn leading_direction(x: &[f64], n: usize, d: usize, found: &[Vec<f64>]) -> Option<Vec<f64>> {
    let orthogonalise = |v: &mut Vec<f64>| {
        for u in found {
            let c = dot(v, u);
            for (a, b) in v.iter_mut().zip(u) {
                *a -= c * b;
            }
        }
    };
    let normalise = |v: &mut Vec<f64>| -> f64 {
        let norm = dot(v, v).sqrt();
        if norm > 0.0 {
            for a in v.iter_mut() {
                *a /= norm;
            }
        }
        norm
    };

    let mut v: Vec<f64> = (0..d).map(|j| 1.0 + 0.01 * (j % 7) as f64).collect();
    orthogonalise(&mut v);
    if normalise(&mut v) == 0.0 {
        return None;
    }
    let mut xv = vec![0.0; n];
    let mut eigen = 0.0;
    for _ in 0..2000 {
        for (i, o) in xv.iter_mut().enumerate() {
            *o = dot(&x[i * d..(i + 1) * d], &v);
        }
        let mut next = vec![0.0; d];
        for (i, &s) in xv.iter().enumerate() {
            for (a, &b) in next.iter_mut().zip(&x[i * d..(i + 1) * d]) {
                *a += s * b;
            }
        }
        orthogonalise(&mut next);
        let norm = normalise(&mut next);
        let scale = x.iter().map(|v| v * v).sum::<f64>().max(f64::MIN_POSITIVE);
        if norm <= 1e-12 * scale {
            return None;
        }
        let delta: f64 = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).sum();
        v = next;
        let converged = (norm - eigen).abs() <= 1e-12 * norm && delta < 1e-10;
        eigen = norm;
        if converged {
            break;
        }
    }
    let pivot = v
        .iter()
        .copied()
        .fold(0.0f64, |acc, a| if a.abs() > acc.abs() { a } else { acc });
    if pivot < 0.0 {
        for a in v.iter_mut() {
            *a = -*a;
        }
    }
    Some(v)
}
