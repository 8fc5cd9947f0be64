//! Labeled embedding sets, their on-disk formats, and the synthetic and
//! imbalanced-subset generators.

mod io;
mod synth;

use std::collections::BTreeMap;

use rand::seq::index;
use serde::{Deserialize, Serialize};

pub use io::{load_embeddings, load_manifest, save_embeddings, Manifest};
pub use synth::{generate_synthetic, SyntheticSpec};

use crate::error::{Error, Result};
use crate::rng;

/// Tolerance on row norms. Rows already within it are left untouched so a
/// save/load round trip stays bit-exact.
pub const NORM_TOLERANCE: f64 = 1e-6;

/// N×d feature matrix with dense identity labels.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingSet {
    features: Vec<f32>,
    dim: usize,
    labels: Vec<u32>,
    class_count: usize,
    /// `original_ids[c]` is the label id that dense class `c` had on input.
    original_ids: Vec<i64>,
    pub name: String,
}

impl EmbeddingSet {
    /// Builds a set from raw rows, unit-normalizing every row and
    /// densifying the labels.
    pub fn new(features: Vec<f32>, dim: usize, labels: &[i64], name: impl Into<String>) -> Result<Self> {
        let mut set = Self::from_raw(features, dim, labels, name)?;
        set.normalize_rows()?;
        Ok(set)
    }

    /// Like [`EmbeddingSet::new`] but keeps rows as given. Used for raw
    /// feature fixtures where the geometry must not be projected to the
    /// unit sphere.
    pub fn from_raw(features: Vec<f32>, dim: usize, labels: &[i64], name: impl Into<String>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::SizeMismatch("dimension must be at least 1".into()));
        }
        if features.len() % dim != 0 {
            return Err(Error::SizeMismatch(format!(
                "{} feature values is not a multiple of d={dim}",
                features.len()
            )));
        }
        let n = features.len() / dim;
        if n != labels.len() {
            return Err(Error::SizeMismatch(format!(
                "{n} feature rows but {} labels",
                labels.len()
            )));
        }
        if n < 2 {
            return Err(Error::SizeMismatch(format!("need at least 2 rows, got {n}")));
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / dim,
                col: pos % dim,
            });
        }
        let (dense, original_ids) = densify(labels);
        Ok(Self {
            features,
            dim,
            labels: dense,
            class_count: original_ids.len(),
            original_ids,
            name: name.into(),
        })
    }

    fn normalize_rows(&mut self) -> Result<()> {
        for (row, chunk) in self.features.chunks_mut(self.dim).enumerate() {
            let norm = chunk.iter().map(|&v| f64::from(v).powi(2)).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::ZeroRow { row });
            }
            if (norm - 1.0).abs() > NORM_TOLERANCE {
                for v in chunk.iter_mut() {
                    *v = (f64::from(*v) / norm) as f32;
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> u32 {
        self.labels[i]
    }

    pub fn original_ids(&self) -> &[i64] {
        &self.original_ids
    }

    /// Squared Euclidean distance between rows `a` and `b`, accumulated in f64.
    pub fn sq_distance(&self, a: usize, b: usize) -> f64 {
        self.row(a)
            .iter()
            .zip(self.row(b))
            .map(|(&x, &y)| {
                let t = f64::from(x) - f64::from(y);
                t * t
            })
            .sum()
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        self.sq_distance(a, b).sqrt()
    }

    pub fn class_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.class_count];
        for &l in &self.labels {
            sizes[l as usize] += 1;
        }
        sizes
    }

    /// Keeps the listed rows (in the given order) and re-densifies labels.
    pub fn select_rows(&self, rows: &[usize], name: impl Into<String>) -> Result<Self> {
        let mut features = Vec::with_capacity(rows.len() * self.dim);
        let mut labels = Vec::with_capacity(rows.len());
        for &r in rows {
            if r >= self.len() {
                return Err(Error::OutOfRange {
                    index: r,
                    len: self.len(),
                });
            }
            features.extend_from_slice(self.row(r));
            labels.push(self.original_ids[self.labels[r] as usize]);
        }
        Self::from_raw(features, self.dim, &labels, name)
    }
}

/// Maps arbitrary ids to `0..C` by ascending id value.
fn densify(labels: &[i64]) -> (Vec<u32>, Vec<i64>) {
    let mut ids: BTreeMap<i64, u32> = labels.iter().map(|&l| (l, 0)).collect();
    for (i, v) in ids.values_mut().enumerate() {
        *v = i as u32;
    }
    let dense = labels.iter().map(|l| ids[l]).collect();
    (dense, ids.into_keys().collect())
}

/// Parameters of the head/tail subset protocol: the `majority_identity_count`
/// largest identities are kept whole, every other identity is cut down to at
/// most `minority_identity_size` samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthesisSpec {
    pub majority_identity_count: usize,
    pub minority_identity_size: usize,
    pub seed: u64,
}

/// Builds an imbalanced subset of `set`.
///
/// Identities are ranked by descending size (ties by ascending label). The
/// top `m` are kept whole; every other identity contributes
/// `min(size, n)` rows drawn uniformly without replacement. Rows keep their
/// original relative order.
pub fn build_imbalanced_subset(set: &EmbeddingSet, spec: &SynthesisSpec) -> Result<EmbeddingSet> {
    let m = spec.majority_identity_count;
    let n = spec.minority_identity_size;
    if m > set.class_count() {
        return Err(Error::Config(format!(
            "majority identity count {m} exceeds the {} identities available",
            set.class_count()
        )));
    }
    if n == 0 {
        return Err(Error::Config("minority identity size must be positive".into()));
    }

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); set.class_count()];
    for (i, &l) in set.labels().iter().enumerate() {
        members[l as usize].push(i);
    }
    let mut order: Vec<usize> = (0..set.class_count()).collect();
    order.sort_by(|&a, &b| members[b].len().cmp(&members[a].len()).then(a.cmp(&b)));

    let mut keep = vec![false; set.len()];
    for &c in &order[..m] {
        for &i in &members[c] {
            keep[i] = true;
        }
    }
    // Tail classes are visited in ascending label order so each class draws
    // from its own stream regardless of the head ranking.
    let mut tail: Vec<usize> = order[m..].to_vec();
    tail.sort_unstable();
    for c in tail {
        let rows = &members[c];
        if rows.len() <= n {
            rows.iter().for_each(|&i| keep[i] = true);
        } else {
            let mut rng = rng::stream(spec.seed, &[c as u64]);
            for j in index::sample(&mut rng, rows.len(), n) {
                keep[rows[j]] = true;
            }
        }
    }

    let rows: Vec<usize> = (0..set.len()).filter(|&i| keep[i]).collect();
    set.select_rows(&rows, format!("{}-h{m}-s{n}", set.name))
}
