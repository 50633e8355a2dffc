//! Motif-attention spectral clustering: embedding-scored attention
//! weights on edges, triangle-path reinforcement, degree normalization,
//! a spectral partition of the resulting operator, and one local-flip
//! refinement pass.

use std::time::Instant;

use nalgebra::DMatrix;

use crate::clustering::{
    centroid_softmax, kmeans, parity_label, ClusteringDiagnostics, ClusteringResult, SoftAssignment,
};
use crate::embed::{cooccurrence_counts, embed, ppmi_matrix, random_walk_corpus, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::graph::{LabelVector, WeightedGraph};
use crate::seeding::derive_seed;
use crate::spectra::{symmetric_eigs, Which};

/// Pipeline parameters. Embedding settings are forwarded to the walk /
/// co-occurrence / factorization stages.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MasoConfig {
    /// Mixing coefficient in `(0, 1]` between raw attention weights and
    /// their triangle-reinforced product.
    pub beta: f64,
    /// Elementwise upper cap on mixed weights (guards against motif
    /// blow-up around hubs).
    pub clip_max: f64,
    /// Number of clusters.
    pub k: usize,
    /// Embedding rank; clamped to the node count for small graphs.
    pub embed_dim: usize,
    pub walk_length: usize,
    pub walks_per_node: usize,
    pub window: usize,
    /// Rank eigenvectors by |eigenvalue| instead of algebraic value when
    /// selecting the spectral subspace (off by default).
    pub eigen_by_magnitude: bool,
    /// Iterate the local-flip pass to a fixed point instead of the
    /// default single synchronous pass.
    pub flip_to_fixpoint: bool,
}

impl Default for MasoConfig {
    fn default() -> Self {
        Self {
            beta: 0.3,
            clip_max: 1e-2,
            k: 2,
            embed_dim: 64,
            walk_length: 40,
            walks_per_node: 2,
            window: 5,
            eigen_by_magnitude: false,
            flip_to_fixpoint: false,
        }
    }
}

impl MasoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::Config(format!(
                "beta must lie in (0, 1], got {}",
                self.beta
            )));
        }
        if !(self.clip_max > 0.0) {
            return Err(Error::Config(format!(
                "clip_max must be positive, got {}",
                self.clip_max
            )));
        }
        if self.k < 2 {
            return Err(Error::Config(format!(
                "k must be at least 2, got {}",
                self.k
            )));
        }
        if self.embed_dim == 0
            || self.walk_length == 0
            || self.walks_per_node == 0
            || self.window == 0
        {
            return Err(Error::Config(
                "embed_dim, walk_length, walks_per_node, and window must all be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// The matrices the pipeline builds on its way to a partition.
#[derive(Debug, Clone)]
pub struct OperatorStack {
    /// Attention weights on edges.
    pub w: DMatrix<f64>,
    /// Triangle support `X_ij = sum_{k != i,j} W_ik W_kj`.
    pub x: DMatrix<f64>,
    /// Mixed, capped weights.
    pub w_tilde: DMatrix<f64>,
    /// Row sums of `w_tilde`.
    pub degrees: Vec<f64>,
    /// Degree-normalized operator `D^{-1/2} W_tilde D^{-1/2}`.
    pub h: DMatrix<f64>,
}

/// Attention weights: `W_ij = w_ij * exp(<z_i, z_j> / sqrt(d))` on every
/// edge with weight `w_ij`, zero elsewhere. `d` is the embedding rank.
pub fn attention_weights(g: &WeightedGraph, z: &EmbeddingMatrix) -> Result<DMatrix<f64>> {
    let n = g.n();
    if z.z.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "embedding has {} rows for a graph with {} nodes",
            z.z.nrows(),
            n
        )));
    }
    let scale = 1.0 / (z.rank as f64).sqrt();
    let mut w = DMatrix::<f64>::zeros(n, n);
    for (i, j, weight) in g.edges() {
        let dot = z.z.row(i).dot(&z.z.row(j));
        let v = weight * (dot * scale).exp();
        w[(i, j)] = v;
        w[(j, i)] = v;
    }
    Ok(w)
}

/// Triangle support `X_ij = sum_{k != i,j} W_ik W_kj`, i.e. `W * W` with
/// the diagonal of both the input and the output forced to zero.
///
/// Accumulates over the sparsity pattern of `W` in ascending-`k` order,
/// which both scales with the actual edge count and reproduces a naive
/// triple loop bit for bit.
pub fn triangle_support(w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = w.nrows();
    if w.ncols() != n {
        return Err(Error::NotSquare(n, w.ncols()));
    }
    let mut nonzero: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for k in 0..n {
        for i in 0..n {
            let v = w[(i, k)];
            if v != 0.0 && i != k {
                nonzero[k].push((i, v));
            }
        }
    }
    let mut x = DMatrix::<f64>::zeros(n, n);
    for (k, touched) in nonzero.iter().enumerate() {
        let _ = k;
        for &(i, wik) in touched {
            for &(j, wkj) in touched {
                x[(i, j)] += wik * wkj;
            }
        }
    }
    x.fill_diagonal(0.0);
    Ok(x)
}

/// Elementwise mix `(1 - beta) W + beta W .* X`, capped at `clip_max`.
pub fn mix_weights(
    w: &DMatrix<f64>,
    x: &DMatrix<f64>,
    beta: f64,
    clip_max: f64,
) -> Result<DMatrix<f64>> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::Config(format!(
            "beta must lie in (0, 1], got {beta}"
        )));
    }
    if !(clip_max > 0.0) {
        return Err(Error::Config(format!(
            "clip_max must be positive, got {clip_max}"
        )));
    }
    if w.shape() != x.shape() {
        return Err(Error::DimensionMismatch(format!(
            "mix_weights shapes {:?} vs {:?}",
            w.shape(),
            x.shape()
        )));
    }
    Ok(w.zip_map(x, |wv, xv| {
        ((1.0 - beta) * wv + beta * wv * xv).min(clip_max)
    }))
}

/// Symmetric degree normalization `H = D^{-1/2} W_tilde D^{-1/2}`, with
/// zero-degree rows and columns left identically zero.
pub fn normalized_operator(w_tilde: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = w_tilde.nrows();
    if w_tilde.ncols() != n {
        return Err(Error::NotSquare(n, w_tilde.ncols()));
    }
    if w_tilde.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::Config(
            "normalized operator needs finite nonnegative weights".into(),
        ));
    }
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| {
            let d = w_tilde.row(i).sum();
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let mut h = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            h[(i, j)] = inv_sqrt[i] * w_tilde[(i, j)] * inv_sqrt[j];
        }
    }
    Ok(h)
}

/// Builds the full operator stack from a graph and its embeddings.
pub fn operator_stack(
    g: &WeightedGraph,
    z: &EmbeddingMatrix,
    beta: f64,
    clip_max: f64,
) -> Result<OperatorStack> {
    let w = attention_weights(g, z)?;
    let x = triangle_support(&w)?;
    let w_tilde = mix_weights(&w, &x, beta, clip_max)?;
    let degrees: Vec<f64> = (0..g.n()).map(|i| w_tilde.row(i).sum()).collect();
    let h = normalized_operator(&w_tilde)?;
    Ok(OperatorStack {
        w,
        x,
        w_tilde,
        degrees,
        h,
    })
}

/// Options for [`spectral_partition_opts`].
#[derive(Debug, Clone, Copy, Default)]
pub struct PartitionOptions {
    /// Rank eigenpairs by |eigenvalue| instead of algebraic value.
    pub by_magnitude: bool,
}

/// Spectral partition with default options: see
/// [`spectral_partition_opts`].
pub fn spectral_partition(h: &DMatrix<f64>, k: usize, seed: u64) -> Result<ClusteringResult> {
    spectral_partition_opts(h, k, seed, PartitionOptions::default())
}

/// Partitions nodes from the spectrum of a normalized operator.
///
/// For `k = 2` the hard labels are the sign pattern of the eigenvector
/// with the second-largest (algebraic, by default) eigenvalue; for
/// `k > 2` they come from centroid clustering of the top-`k` eigenvector
/// rows. Soft assignments are centroid-distance softmax probabilities.
/// Rows of `h` that are identically zero (zero-degree nodes) receive a
/// uniform soft assignment and a deterministic node-parity hard label.
pub fn spectral_partition_opts(
    h: &DMatrix<f64>,
    k: usize,
    seed: u64,
    opts: PartitionOptions,
) -> Result<ClusteringResult> {
    let n = h.nrows();
    if h.ncols() != n {
        return Err(Error::NotSquare(n, h.ncols()));
    }
    if k < 2 {
        return Err(Error::Config(format!("partition needs k >= 2, got {k}")));
    }
    if n == 0 {
        return Err(Error::Config("partition needs a nonempty operator".into()));
    }

    let degenerate: Vec<bool> = (0..n).map(|i| (0..n).all(|j| h[(i, j)] == 0.0)).collect();
    let live: Vec<usize> = (0..n).filter(|&i| !degenerate[i]).collect();
    let m = live.len();

    let mut notes = Vec::new();
    let dead = n - m;
    if dead > 0 {
        notes.push(format!(
            "{dead} zero-degree node(s) received uniform soft assignments"
        ));
    }

    if m == 0 {
        let labels: Vec<usize> = (0..n).map(|i| parity_label(i, k)).collect();
        let soft = SoftAssignment::new(n, k, vec![1.0 / k as f64; n * k])?;
        return Ok(ClusteringResult {
            soft,
            hard: LabelVector::new(labels, k)?,
            diagnostics: ClusteringDiagnostics {
                eigen_gap: None,
                notes,
                ..ClusteringDiagnostics::default()
            },
        });
    }
    if k > m {
        return Err(Error::Config(format!(
            "cannot split {m} connected node(s) into {k} clusters"
        )));
    }

    let mut sub = DMatrix::<f64>::zeros(m, m);
    for (r, &i) in live.iter().enumerate() {
        for (c, &j) in live.iter().enumerate() {
            sub[(r, c)] = h[(i, j)];
        }
    }
    let which = if opts.by_magnitude {
        Which::LargestMagnitude
    } else {
        Which::LargestAlgebraic
    };
    let want = (k + 1).min(m);
    let pairs = symmetric_eigs(&sub, want, which, seed)?;
    let sort_key = |v: f64| if opts.by_magnitude { v.abs() } else { v };
    let eigen_gap = if want == k + 1 {
        Some(sort_key(pairs.values[k - 1]) - sort_key(pairs.values[k]))
    } else {
        None
    };

    // Cluster the live rows in eigenvector coordinates.
    let (dims, centroids, live_assign): (usize, DMatrix<f64>, Vec<usize>) = if k == 2 {
        let v2 = pairs.vectors.column(1);
        // Entries at numerical zero (for example on a disconnected
        // component whose top eigenvalue is degenerate) carry no sign
        // information; classify them by centroid distance instead.
        let scale = v2.iter().fold(0.0f64, |acc, &x| acc.max(x.abs()));
        let cutoff = 1e-8 * scale;
        let confident: Vec<Option<usize>> = (0..m)
            .map(|r| {
                if v2[r] > cutoff {
                    Some(1)
                } else if v2[r] < -cutoff {
                    Some(0)
                } else {
                    None
                }
            })
            .collect();
        let counts = [
            confident.iter().filter(|c| **c == Some(0)).count(),
            confident.iter().filter(|c| **c == Some(1)).count(),
        ];
        if counts[0] == 0 || counts[1] == 0 {
            // Sign split collapsed: fall back to centroid clustering of
            // the same coordinate.
            let rows = DMatrix::<f64>::from_fn(m, 1, |r, _| v2[r]);
            let fit = kmeans(&rows, 2, seed)?;
            (1, fit.centroids, fit.assignments)
        } else {
            let mut cents = DMatrix::<f64>::zeros(2, 1);
            for (r, c) in confident.iter().enumerate() {
                if let Some(c) = c {
                    cents[(*c, 0)] += v2[r];
                }
            }
            cents[(0, 0)] /= counts[0] as f64;
            cents[(1, 0)] /= counts[1] as f64;
            let assign: Vec<usize> = (0..m)
                .map(|r| match confident[r] {
                    Some(c) => c,
                    None => {
                        usize::from((v2[r] - cents[(1, 0)]).abs() < (v2[r] - cents[(0, 0)]).abs())
                    }
                })
                .collect();
            (1, cents, assign)
        }
    } else {
        let rows = DMatrix::<f64>::from_fn(m, k, |r, c| pairs.vectors[(r, c)]);
        let fit = kmeans(&rows, k, seed)?;
        (k, fit.centroids, fit.assignments)
    };

    // Lift back to the full node set.
    let mut full_rows = DMatrix::<f64>::zeros(n, dims);
    for (r, &i) in live.iter().enumerate() {
        for c in 0..dims {
            full_rows[(i, c)] = if dims == 1 {
                pairs.vectors[(r, 1)]
            } else {
                pairs.vectors[(r, c)]
            };
        }
    }
    let mut hard = vec![0usize; n];
    let mut assignments = vec![0usize; n];
    for i in 0..n {
        if degenerate[i] {
            hard[i] = parity_label(i, k);
            assignments[i] = hard[i];
        }
    }
    for (r, &i) in live.iter().enumerate() {
        hard[i] = live_assign[r];
        assignments[i] = live_assign[r];
    }

    let soft = centroid_softmax(&full_rows, &centroids, &assignments, &degenerate)?;
    let soft = align_soft_to_hard(&soft, &hard)?;

    Ok(ClusteringResult {
        soft,
        hard: LabelVector::new(hard, k)?,
        diagnostics: ClusteringDiagnostics {
            eigen_gap,
            notes,
            ..ClusteringDiagnostics::default()
        },
    })
}

/// Keeps each row's probability mass but makes sure the stated hard
/// label carries the row maximum, swapping two entries when the softmax
/// and the labeling rule disagree on a (measure-zero) boundary case.
fn align_soft_to_hard(soft: &SoftAssignment, hard: &[usize]) -> Result<SoftAssignment> {
    let (n, k) = (soft.n(), soft.k());
    let mut probs = Vec::with_capacity(n * k);
    for i in 0..n {
        let mut row = soft.row(i).to_vec();
        let mut best = 0;
        for c in 1..k {
            if row[c] > row[best] {
                best = c;
            }
        }
        if row[hard[i]] < row[best] {
            row.swap(hard[i], best);
        }
        probs.extend_from_slice(&row);
    }
    SoftAssignment::new(n, k, probs)
}

/// One synchronous local-flip pass: every node moves to the label with
/// the largest total incident weight under `w_tilde`, ties keeping the
/// current label. Isolated nodes never move.
pub fn local_flip_refine(w_tilde: &DMatrix<f64>, labels: &LabelVector) -> Result<LabelVector> {
    let n = w_tilde.nrows();
    if w_tilde.ncols() != n {
        return Err(Error::NotSquare(n, w_tilde.ncols()));
    }
    if labels.len() != n {
        return Err(Error::LabelLength {
            got: labels.len(),
            expected: n,
        });
    }
    let k = labels.k();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut support = vec![0.0f64; k];
        for j in 0..n {
            if j != i {
                let w = w_tilde[(i, j)];
                if w > 0.0 {
                    support[labels.get(j)] += w;
                }
            }
        }
        let current = labels.get(i);
        let mut best = current;
        let mut best_val = support[current];
        for (c, &v) in support.iter().enumerate() {
            if v > best_val {
                best = c;
                best_val = v;
            }
        }
        out.push(best);
    }
    LabelVector::new(out, k)
}

/// Runs [`local_flip_refine`] until no label changes, up to `max_passes`.
/// Returns the final labels, passes executed, and total flips.
pub fn refine_to_fixpoint(
    w_tilde: &DMatrix<f64>,
    labels: &LabelVector,
    max_passes: usize,
) -> Result<(LabelVector, usize, usize)> {
    let mut current = labels.clone();
    let mut total_flips = 0;
    for pass in 1..=max_passes {
        let next = local_flip_refine(w_tilde, &current)?;
        let flips = hamming(&current, &next);
        total_flips += flips;
        current = next;
        if flips == 0 {
            return Ok((current, pass, total_flips));
        }
    }
    Ok((current, max_passes, total_flips))
}

fn hamming(a: &LabelVector, b: &LabelVector) -> usize {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .filter(|(x, y)| x != y)
        .count()
}

/// Full pipeline: walk corpus, co-occurrence, PPMI, embeddings,
/// attention/triangle operator stack, spectral partition, and local-flip
/// refinement. Deterministic per `(graph, config, seed)`.
pub fn maso_cluster(g: &WeightedGraph, config: &MasoConfig, seed: u64) -> Result<ClusteringResult> {
    config.validate()?;
    if g.n() == 0 {
        return Err(Error::Config("cannot cluster an empty graph".into()));
    }
    let mut diagnostics = ClusteringDiagnostics::default();
    let mut record = |name: &str, start: Instant| {
        diagnostics
            .stage_seconds
            .insert(name.to_string(), start.elapsed().as_secs_f64());
    };

    let t = Instant::now();
    let corpus = random_walk_corpus(
        g,
        config.walks_per_node,
        config.walk_length,
        derive_seed(seed, &[0]),
    )?;
    record("walks", t);

    let t = Instant::now();
    let stats = cooccurrence_counts(&corpus, config.window)?;
    let ppmi = ppmi_matrix(&stats)?;
    record("cooccurrence", t);

    let t = Instant::now();
    let rank = config.embed_dim.min(g.n());
    let z = embed(&ppmi, rank, derive_seed(seed, &[1]))?;
    record("embed", t);

    let t = Instant::now();
    let stack = operator_stack(g, &z, config.beta, config.clip_max)?;
    record("operators", t);

    let positive = stack.w_tilde.iter().filter(|&&v| v > 0.0).count();
    let saturated = stack
        .w_tilde
        .iter()
        .filter(|&&v| v == config.clip_max)
        .count();
    if positive > 0 && saturated * 2 >= positive {
        diagnostics.notes.push(format!(
            "clip_max={} saturates {saturated}/{positive} positive mixed weights",
            config.clip_max
        ));
    }

    let t = Instant::now();
    let part = spectral_partition_opts(
        &stack.h,
        config.k,
        derive_seed(seed, &[2]),
        PartitionOptions {
            by_magnitude: config.eigen_by_magnitude,
        },
    )?;
    record("partition", t);

    let t = Instant::now();
    let (hard, passes, flips) = if config.flip_to_fixpoint {
        refine_to_fixpoint(&stack.w_tilde, &part.hard, 100)?
    } else {
        let next = local_flip_refine(&stack.w_tilde, &part.hard)?;
        let flips = hamming(&part.hard, &next);
        (next, 1, flips)
    };
    record("refine", t);

    let soft = align_soft_to_hard(&part.soft, hard.as_slice())?;
    diagnostics.eigen_gap = part.diagnostics.eigen_gap;
    diagnostics.refine_iterations = passes;
    diagnostics.refine_flips = flips;
    diagnostics.notes.extend(part.diagnostics.notes);

    Ok(ClusteringResult {
        soft,
        hard,
        diagnostics,
    })
}
