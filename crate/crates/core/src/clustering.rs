//! Shared clustering plumbing: soft assignments, seeded k-means, and the
//! centroid-softmax rule used to turn embeddings into probabilities.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};
use crate::graph::LabelVector;

/// Row-stochastic soft cluster assignment (`n` rows over `k` clusters).
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SoftAssignment {
    n: usize,
    k: usize,
    probs: Vec<f64>,
}

impl SoftAssignment {
    /// Wraps row-major probabilities, validating shape, non-negativity,
    /// and row sums within `1e-9` of one.
    pub fn new(n: usize, k: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != n * k {
            return Err(Error::DimensionMismatch(format!(
                "soft assignment needs {} entries, got {}",
                n * k,
                probs.len()
            )));
        }
        if k == 0 {
            return Err(Error::Config("soft assignment needs k >= 1".into()));
        }
        for i in 0..n {
            let row = &probs[i * k..(i + 1) * k];
            if row.iter().any(|&p| !(0.0..=1.0 + 1e-9).contains(&p)) {
                return Err(Error::Config(format!(
                    "soft assignment row {i} has an entry outside [0, 1]"
                )));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!(
                    "soft assignment row {i} sums to {s}, expected 1"
                )));
            }
        }
        Ok(Self { n, k, probs })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.probs[i * self.k..(i + 1) * self.k]
    }

    pub fn prob(&self, i: usize, c: usize) -> f64 {
        self.probs[i * self.k + c]
    }

    /// Hard labels by row argmax; ties break to the lowest cluster index.
    pub fn argmax_labels(&self) -> LabelVector {
        let labels = (0..self.n)
            .map(|i| {
                let row = self.row(i);
                let mut best = 0;
                for c in 1..self.k {
                    if row[c] > row[best] {
                        best = c;
                    }
                }
                best
            })
            .collect();
        LabelVector::new(labels, self.k).expect("argmax labels are in range")
    }

    /// Sum over rows of the largest entry; the denoising loop uses this
    /// as its confidence objective.
    pub fn confidence_objective(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row(i).iter().copied().fold(f64::MIN, f64::max))
            .sum()
    }
}

/// Diagnostics attached to every clustering result.
#[derive(Debug, Clone, Default, serde::Serialize)]
pub struct ClusteringDiagnostics {
    /// Gap between the last used and first unused eigenvalue, when known.
    pub eigen_gap: Option<f64>,
    pub refine_iterations: usize,
    pub refine_flips: usize,
    /// Wall-clock per pipeline stage; callers may clear this before
    /// serializing when byte-stable output matters.
    pub stage_seconds: BTreeMap<String, f64>,
    pub notes: Vec<String>,
}

/// Soft assignment, hard labels, and diagnostics from one clustering run.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ClusteringResult {
    pub soft: SoftAssignment,
    pub hard: LabelVector,
    pub diagnostics: ClusteringDiagnostics,
}

/// K-means fit: per-row assignment plus a `k x d` centroid matrix.
#[derive(Debug, Clone)]
pub struct KmeansFit {
    pub assignments: Vec<usize>,
    pub centroids: DMatrix<f64>,
}

fn sq_dist(rows: &DMatrix<f64>, i: usize, centroids: &DMatrix<f64>, c: usize) -> f64 {
    let d = rows.ncols();
    let mut acc = 0.0;
    for j in 0..d {
        let diff = rows[(i, j)] - centroids[(c, j)];
        acc += diff * diff;
    }
    acc
}

/// Lloyd's algorithm with k-means++ seeding.
///
/// Fully deterministic for a fixed seed: distance ties break to the
/// lowest index and empty clusters are refilled with the point farthest
/// from its current centroid.
pub fn kmeans(rows: &DMatrix<f64>, k: usize, seed: u64) -> Result<KmeansFit> {
    let n = rows.nrows();
    let d = rows.ncols();
    if k == 0 || k > n {
        return Err(Error::Config(format!(
            "kmeans needs 1 <= k <= n, got k = {k}, n = {n}"
        )));
    }
    let mut rng = StdRng::seed_from_u64(seed);
    let mut centroids = DMatrix::zeros(k, d);

    // k-means++ seeding.
    let first = rng.gen_range(0..n);
    centroids.row_mut(0).copy_from(&rows.row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(rows, i, &centroids, 0)).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total <= 0.0 {
            // All remaining points coincide with a centroid; any choice
            // works, take a uniform one for determinism.
            rng.gen_range(0..n)
        } else {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if acc >= target {
                    chosen = i;
                    break;
                }
            }
            chosen
        };
        centroids.row_mut(c).copy_from(&rows.row(pick));
        for i in 0..n {
            d2[i] = d2[i].min(sq_dist(rows, i, &centroids, c));
        }
    }

    let mut assignments = vec![0usize; n];
    for _ in 0..100 {
        let mut changed = false;
        for i in 0..n {
            let mut best = 0;
            let mut best_d = sq_dist(rows, i, &centroids, 0);
            for c in 1..k {
                let dist = sq_dist(rows, i, &centroids, c);
                if dist < best_d {
                    best_d = dist;
                    best = c;
                }
            }
            if assignments[i] != best {
                assignments[i] = best;
                changed = true;
            }
        }

        let mut counts = vec![0usize; k];
        let mut sums = DMatrix::<f64>::zeros(k, d);
        for i in 0..n {
            counts[assignments[i]] += 1;
            for j in 0..d {
                sums[(assignments[i], j)] += rows[(i, j)];
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // Refill from the point farthest from its centroid among
                // clusters that can spare one.
                let mut donor = None;
                let mut far = -1.0;
                for i in 0..n {
                    if counts[assignments[i]] > 1 {
                        let dist = sq_dist(rows, i, &centroids, assignments[i]);
                        if dist > far {
                            far = dist;
                            donor = Some(i);
                        }
                    }
                }
                if let Some(i) = donor {
                    let old = assignments[i];
                    counts[old] -= 1;
                    counts[c] += 1;
                    for j in 0..d {
                        sums[(old, j)] -= rows[(i, j)];
                        sums[(c, j)] += rows[(i, j)];
                    }
                    assignments[i] = c;
                    changed = true;
                }
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for j in 0..d {
                    centroids[(c, j)] = sums[(c, j)] / counts[c] as f64;
                }
            }
        }
        if !changed {
            break;
        }
    }
    Ok(KmeansFit {
        assignments,
        centroids,
    })
}

/// Soft assignment from embedding rows and centroids.
///
/// `q_ik` is proportional to `exp(-||row_i - centroid_k||^2 / tau)` with
/// `tau` the mean squared distance of non-degenerate rows to their
/// assigned centroid. Degenerate rows (for instance zero-degree nodes)
/// receive a uniform row. When every row sits exactly on its centroid
/// the assignment collapses to one-hot.
pub fn centroid_softmax(
    rows: &DMatrix<f64>,
    centroids: &DMatrix<f64>,
    assignments: &[usize],
    degenerate: &[bool],
) -> Result<SoftAssignment> {
    let n = rows.nrows();
    let k = centroids.nrows();
    if assignments.len() != n || degenerate.len() != n {
        return Err(Error::DimensionMismatch(
            "centroid_softmax mask/assignment length mismatch".into(),
        ));
    }
    let mut tau = 0.0;
    let mut live = 0usize;
    for i in 0..n {
        if !degenerate[i] {
            tau += sq_dist(rows, i, centroids, assignments[i]);
            live += 1;
        }
    }
    if live > 0 {
        tau /= live as f64;
    }

    let mut probs = vec![0.0; n * k];
    for i in 0..n {
        let row = &mut probs[i * k..(i + 1) * k];
        if degenerate[i] {
            row.fill(1.0 / k as f64);
            continue;
        }
        if tau <= 1e-300 {
            row[assignments[i]] = 1.0;
            continue;
        }
        let dists: Vec<f64> = (0..k).map(|c| sq_dist(rows, i, centroids, c)).collect();
        let min_d = dists.iter().copied().fold(f64::INFINITY, f64::min);
        let mut total = 0.0;
        for c in 0..k {
            let v = (-(dists[c] - min_d) / tau).exp();
            row[c] = v;
            total += v;
        }
        for p in row.iter_mut() {
            *p /= total;
        }
    }
    SoftAssignment::new(n, k, probs)
}

/// Deterministic fallback label for nodes the embedding carries no
/// information about.
pub fn parity_label(i: usize, k: usize) -> usize {
    i % k.max(1)
}
