//! K-means over triplet text embeddings, L1-normalised distance profiles
//! ("hardness vectors") and the entropy-median curriculum split.

use std::path::{Path, PathBuf};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoders::{EmbeddingKind, EmbeddingStore, TextEmbedding};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iters: usize,
    pub tol: f64,
    /// Independent k-means++ restarts; the lowest final inertia wins.
    pub n_init: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            k: 1200,
            seed: 0,
            max_iters: 100,
            tol: 1e-6,
            n_init: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KMeansMeta {
    pub k: usize,
    pub seed: u64,
    pub iterations: usize,
    pub inertia: f64,
    /// Inertia of the winning restart after seeding and after each Lloyd
    /// iteration.
    pub inertia_history: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansModel {
    centers: Vec<Vec<f64>>,
    pub meta: KMeansMeta,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centre per point (ties to the lower index) and the inertia.
fn assign(points: &[Vec<f64>], centers: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let best: Vec<(usize, f64)> = points
        .par_iter()
        .map(|p| {
            let mut best = (0, f64::INFINITY);
            for (j, c) in centers.iter().enumerate() {
                let d = sq_dist(p, c);
                if d < best.1 {
                    best = (j, d);
                }
            }
            best
        })
        .collect();
    // Sequential sum keeps the reduction order fixed.
    let inertia = best.iter().map(|b| b.1).sum();
    (best.into_iter().map(|b| b.0).collect(), inertia)
}

fn plus_plus_init<R: Rng + ?Sized>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut centers = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            WeightedIndex::new(&d2).unwrap().sample(rng)
        } else {
            rng.random_range(0..points.len())
        };
        centers.push(points[pick].clone());
        let c = centers.last().unwrap();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, c));
        }
    }
    centers
}

struct Run {
    centers: Vec<Vec<f64>>,
    iterations: usize,
    inertia: f64,
    history: Vec<f64>,
}

fn lloyd<R: Rng + ?Sized>(points: &[Vec<f64>], cfg: &KMeansConfig, rng: &mut R) -> Run {
    let dim = points[0].len();
    let mut centers = plus_plus_init(points, cfg.k, rng);
    let (mut labels, mut inertia) = assign(points, &centers);
    let mut history = vec![inertia];
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        iterations += 1;
        let mut sums = vec![vec![0.0; dim]; cfg.k];
        let mut counts = vec![0usize; cfg.k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, x) in sums[l].iter_mut().zip(p) {
                *s += x;
            }
        }
        let mut shift: f64 = 0.0;
        for j in 0..cfg.k {
            // Empty clusters keep their centre.
            if counts[j] == 0 {
                continue;
            }
            let mean: Vec<f64> = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            shift = shift.max(sq_dist(&mean, &centers[j]).sqrt());
            centers[j] = mean;
        }
        (labels, inertia) = assign(points, &centers);
        history.push(inertia);
        if shift < cfg.tol {
            break;
        }
    }
    Run {
        centers,
        iterations,
        inertia,
        history,
    }
}

/// k-means++ seeding followed by Lloyd iterations until the largest centre
/// shift drops below `tol` or `max_iters` is reached; repeated `n_init`
/// times from independent streams of `seed`.
pub fn fit_kmeans(points: &[Vec<f64>], cfg: &KMeansConfig) -> Result<KMeansModel> {
    if cfg.k == 0 {
        return Err(Error::invalid("k-means needs k >= 1"));
    }
    if points.len() < cfg.k {
        return Err(Error::invalid(format!(
            "k-means with k = {} needs at least as many points, got {}",
            cfg.k,
            points.len()
        )));
    }
    let dim = points[0].len();
    for (i, p) in points.iter().enumerate() {
        if p.len() != dim {
            return Err(Error::WidthMismatch {
                expected: dim,
                actual: p.len(),
            });
        }
        if p.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("k-means input point {i}")));
        }
    }
    let mut best: Option<Run> = None;
    for restart in 0..cfg.n_init.max(1) {
        let mut r = rng::stream(cfg.seed, &[restart as u64]);
        let run = lloyd(points, cfg, &mut r);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    let run = best.unwrap();
    Ok(KMeansModel {
        centers: run.centers,
        meta: KMeansMeta {
            k: cfg.k,
            seed: cfg.seed,
            iterations: run.iterations,
            inertia: run.inertia,
            inertia_history: run.history,
        },
    })
}

impl KMeansModel {
    pub fn from_centers(centers: Vec<Vec<f64>>) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::invalid("a k-means model needs at least one centre"));
        }
        let w = centers[0].len();
        if let Some(bad) = centers.iter().find(|c| c.len() != w) {
            return Err(Error::WidthMismatch {
                expected: w,
                actual: bad.len(),
            });
        }
        Ok(Self {
            meta: KMeansMeta {
                k: centers.len(),
                seed: 0,
                iterations: 0,
                inertia: 0.0,
                inertia_history: Vec::new(),
            },
            centers,
        })
    }

    pub fn k(&self) -> usize {
        self.centers.len()
    }

    pub fn width(&self) -> usize {
        self.centers[0].len()
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    fn meta_path(path: &Path) -> PathBuf {
        let mut s = path.as_os_str().to_owned();
        s.push(".meta.json");
        PathBuf::from(s)
    }

    /// Centres go to an embedding store (kind text); metadata to
    /// `<path>.meta.json`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut store = EmbeddingStore::new(EmbeddingKind::Text, self.width());
        for (j, c) in self.centers.iter().enumerate() {
            store.push(format!("center{j}"), c)?;
        }
        store.write(path)?;
        let meta = Self::meta_path(path);
        std::fs::write(&meta, serde_json::to_vec_pretty(&self.meta)?)
            .map_err(|e| Error::io(&meta, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let store = EmbeddingStore::read(path)?;
        let meta_path = Self::meta_path(path);
        let bytes = std::fs::read(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: KMeansMeta = serde_json::from_slice(&bytes)?;
        if meta.k != store.len() {
            return Err(Error::invalid(format!(
                "{}: metadata says k = {} but the store holds {} centres",
                path.display(),
                meta.k,
                store.len()
            )));
        }
        let centers = (0..store.len()).map(|i| store.row_f64(i)).collect();
        Ok(Self { centers, meta })
    }
}

/// Non-negative weights summing to one over the cluster centres.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HardnessVector(Vec<f64>);

impl HardnessVector {
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::invalid("hardness entries must be finite and non-negative"));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("hardness entries sum to {sum}, not 1")));
        }
        Ok(Self(values))
    }

    /// L1-normalises a distance profile; an all-zero profile maps to uniform.
    pub fn from_distances(distances: &[f64]) -> Self {
        let total: f64 = distances.iter().sum();
        if total > 0.0 {
            Self(distances.iter().map(|d| d / total).collect())
        } else {
            let k = distances.len();
            Self(vec![1.0 / k as f64; k])
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn width(&self) -> usize {
        self.0.len()
    }
}

/// Euclidean distance to every centre, L1-normalised.
pub fn hardness_vector(emb: &TextEmbedding, model: &KMeansModel) -> Result<HardnessVector> {
    if emb.width() != model.width() {
        return Err(Error::WidthMismatch {
            expected: model.width(),
            actual: emb.width(),
        });
    }
    let d: Vec<f64> = model.centers.iter().map(|c| sq_dist(&emb.0, c).sqrt()).collect();
    Ok(HardnessVector::from_distances(&d))
}

/// Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn hardness_entropy(h: &HardnessVector) -> f64 {
    -h.0
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

/// Splits samples at the lower median of their entropies: entropy at or
/// below the median is easy, above it hard. Indices come back ascending.
pub fn curriculum_split_entropies(entropies: &[f64]) -> Result<(Vec<usize>, Vec<usize>)> {
    if entropies.is_empty() {
        return Err(Error::invalid("curriculum split of an empty sample set"));
    }
    if entropies.iter().any(|e| e.is_nan()) {
        return Err(Error::NonFinite("entropy".into()));
    }
    let mut sorted = entropies.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[(sorted.len() - 1) / 2];
    let (easy, hard): (Vec<usize>, Vec<usize>) =
        (0..entropies.len()).partition(|&i| entropies[i] <= median);
    Ok((easy, hard))
}

pub fn curriculum_split(vectors: &[HardnessVector]) -> Result<(Vec<usize>, Vec<usize>)> {
    let e: Vec<f64> = vectors.iter().map(hardness_entropy).collect();
    curriculum_split_entropies(&e)
}
