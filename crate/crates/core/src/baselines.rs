//! Reference clustering methods: Bethe-Hessian and non-backtracking
//! spectral clustering, triangle-motif Laplacian clustering, and a
//! weight-aware belief propagation whose compatibility factor reduces to
//! the standard Bethe-Peierls update on unit weights.

use std::collections::HashMap;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::clustering::{
    centroid_softmax, kmeans, ClusteringDiagnostics, ClusteringResult, SoftAssignment,
};
use crate::error::{Error, Result};
use crate::graph::{LabelVector, WeightedGraph};
use crate::maso::{normalized_operator, spectral_partition};
use crate::spectra::{dominant_subspace, symmetric_eigs, Which};

/// Weight applied to the original adjacency around triangle-free nodes
/// so the motif operator keeps them connected.
pub const MOTIF_FALLBACK_SCALE: f64 = 1e-3;

fn require_nonempty(g: &WeightedGraph) -> Result<()> {
    if g.n() == 0 {
        return Err(Error::Config("cannot cluster an empty graph".into()));
    }
    Ok(())
}

fn require_k(k: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::Config(format!("clustering needs k >= 2, got {k}")));
    }
    Ok(())
}

/// Shared tail of the spectral baselines: centroid clustering of
/// spectral coordinates plus distance-softmax soft assignments.
fn cluster_rows(rows: &DMatrix<f64>, k: usize, seed: u64) -> Result<(SoftAssignment, LabelVector)> {
    let fit = kmeans(rows, k, seed)?;
    let degenerate = vec![false; rows.nrows()];
    let soft = centroid_softmax(rows, &fit.centroids, &fit.assignments, &degenerate)?;
    let hard = soft.argmax_labels();
    Ok((soft, hard))
}

/// Radius of the Bethe-Hessian operator: the square root of the mean
/// weighted degree.
pub fn bethe_hessian_radius(g: &WeightedGraph) -> f64 {
    if g.n() == 0 {
        return 0.0;
    }
    (2.0 * g.total_weight() / g.n() as f64).sqrt()
}

/// The Bethe-Hessian matrix `H(r) = (r^2 - 1) I - r A + D` on the
/// weighted adjacency `A` and weighted-degree diagonal `D`.
pub fn bethe_hessian_matrix(g: &WeightedGraph, r: f64) -> DMatrix<f64> {
    let n = g.n();
    let mut h = DMatrix::<f64>::zeros(n, n);
    let degrees = g.weighted_degrees();
    for i in 0..n {
        h[(i, i)] = r * r - 1.0 + degrees[i];
    }
    for (i, j, w) in g.edges() {
        h[(i, j)] = -r * w;
        h[(j, i)] = -r * w;
    }
    h
}

/// Spectral clustering on the eigenvectors of the `k` smallest
/// eigenvalues of the Bethe-Hessian.
pub fn bethe_hessian_cluster(g: &WeightedGraph, k: usize, seed: u64) -> Result<ClusteringResult> {
    require_nonempty(g)?;
    require_k(k)?;
    let start = Instant::now();
    let n = g.n();
    let h = bethe_hessian_matrix(g, bethe_hessian_radius(g));
    let want = (k + 1).min(n);
    let pairs = symmetric_eigs(&h, want, Which::SmallestAlgebraic, seed)?;
    let rows = DMatrix::<f64>::from_fn(n, k, |r, c| pairs.vectors[(r, c)]);
    let (soft, hard) = cluster_rows(&rows, k, seed)?;
    let mut diagnostics = ClusteringDiagnostics {
        eigen_gap: (want == k + 1).then(|| pairs.values[k] - pairs.values[k - 1]),
        ..ClusteringDiagnostics::default()
    };
    diagnostics
        .stage_seconds
        .insert("bethe_hessian".into(), start.elapsed().as_secs_f64());
    Ok(ClusteringResult {
        soft,
        hard,
        diagnostics,
    })
}

/// The `2n x 2n` companion matrix `[[0, D - I], [-I, A]]` whose spectrum
/// solves the quadratic eigenvalue problem
/// `det(u^2 I - u A + (D - I)) = 0` of the non-backtracking operator.
pub fn nonbacktracking_companion(g: &WeightedGraph) -> DMatrix<f64> {
    let n = g.n();
    let mut b = DMatrix::<f64>::zeros(2 * n, 2 * n);
    let degrees = g.weighted_degrees();
    for i in 0..n {
        b[(i, n + i)] = degrees[i] - 1.0;
        b[(n + i, i)] = -1.0;
    }
    for (i, j, w) in g.edges() {
        b[(n + i, n + j)] = w;
        b[(n + j, n + i)] = w;
    }
    b
}

/// Clustering on the dominant spectral subspace of the non-backtracking
/// companion matrix, restricted to the first `n` coordinates.
pub fn nonbacktracking_cluster(g: &WeightedGraph, k: usize, seed: u64) -> Result<ClusteringResult> {
    require_nonempty(g)?;
    require_k(k)?;
    let start = Instant::now();
    let n = g.n();
    let degrees = g.weighted_degrees();
    let apply = |v: &DVector<f64>| -> DVector<f64> {
        let mut out = DVector::<f64>::zeros(2 * n);
        for i in 0..n {
            out[i] = (degrees[i] - 1.0) * v[n + i];
            let mut acc = -v[i];
            for &(j, w) in g.neighbors(i) {
                acc += w * v[n + j];
            }
            out[n + i] = acc;
        }
        out
    };
    let basis = dominant_subspace(&apply, 2 * n, k, 1e-9, 1000, seed)?;

    // Approximate leading eigenvalues from the projected operator; the
    // companion matrix is not symmetric, so they may form complex pairs.
    let mut projected = DMatrix::<f64>::zeros(k, k);
    for c in 0..k {
        let image = apply(&basis.column(c).clone_owned());
        for r in 0..k {
            projected[(r, c)] = basis.column(r).dot(&image);
        }
    }
    let moduli: Vec<String> = projected
        .complex_eigenvalues()
        .iter()
        .map(|z| format!("{:.4}", (z.re * z.re + z.im * z.im).sqrt()))
        .collect();

    let rows = DMatrix::<f64>::from_fn(n, k, |r, c| basis[(r, c)]);
    let (soft, hard) = cluster_rows(&rows, k, seed)?;
    let mut diagnostics = ClusteringDiagnostics::default();
    diagnostics.notes.push(format!(
        "leading companion eigenvalue moduli: {}",
        moduli.join(", ")
    ));
    diagnostics
        .stage_seconds
        .insert("nonbacktracking".into(), start.elapsed().as_secs_f64());
    Ok(ClusteringResult {
        soft,
        hard,
        diagnostics,
    })
}

/// Triangle-motif adjacency: each edge is reweighted by the number of
/// triangles it participates in. Edges incident to a node that touches
/// no triangle at all keep their original weight scaled by
/// [`MOTIF_FALLBACK_SCALE`] so that node stays connected. Also returns
/// how many nodes needed the fallback.
pub fn motif_adjacency(g: &WeightedGraph) -> (DMatrix<f64>, usize) {
    let n = g.n();
    let mut counts = DMatrix::<f64>::zeros(n, n);
    for (i, j, _) in g.edges() {
        // Sorted adjacency lists: two-pointer common-neighbor count.
        let (a, b) = (g.neighbors(i), g.neighbors(j));
        let (mut p, mut q, mut common) = (0usize, 0usize, 0.0f64);
        while p < a.len() && q < b.len() {
            match a[p].0.cmp(&b[q].0) {
                std::cmp::Ordering::Less => p += 1,
                std::cmp::Ordering::Greater => q += 1,
                std::cmp::Ordering::Equal => {
                    common += 1.0;
                    p += 1;
                    q += 1;
                }
            }
        }
        counts[(i, j)] = common;
        counts[(j, i)] = common;
    }
    // Decide which nodes need the fallback before mutating any counts.
    let needs_fallback: Vec<usize> = (0..n)
        .filter(|&i| {
            !g.neighbors(i).is_empty() && g.neighbors(i).iter().all(|&(j, _)| counts[(i, j)] == 0.0)
        })
        .collect();
    for &i in &needs_fallback {
        for &(j, w) in g.neighbors(i) {
            let fallback = w * MOTIF_FALLBACK_SCALE;
            if counts[(i, j)] < fallback {
                counts[(i, j)] = fallback;
                counts[(j, i)] = fallback;
            }
        }
    }
    (counts, needs_fallback.len())
}

/// Normalized-Laplacian spectral clustering on the triangle-motif
/// adjacency.
pub fn motif_laplacian_cluster(g: &WeightedGraph, k: usize, seed: u64) -> Result<ClusteringResult> {
    require_nonempty(g)?;
    require_k(k)?;
    let start = Instant::now();
    let (motif, fallback_nodes) = motif_adjacency(g);
    let h = normalized_operator(&motif)?;
    let mut result = spectral_partition(&h, k, seed)?;
    if fallback_nodes > 0 {
        result.diagnostics.notes.push(format!(
            "{fallback_nodes} triangle-free node(s) kept via scaled original weights"
        ));
    }
    result
        .diagnostics
        .stage_seconds
        .insert("motif_laplacian".into(), start.elapsed().as_secs_f64());
    Ok(result)
}

/// Belief-propagation parameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BpConfig {
    /// Inverse temperature multiplying edge weights in the
    /// compatibility factor.
    pub beta_temp: f64,
    pub k: usize,
    pub max_iters: usize,
    /// Fraction of the previous message kept each round, in `[0, 1)`.
    pub damping: f64,
    pub tol: f64,
    pub seed: u64,
}

impl Default for BpConfig {
    fn default() -> Self {
        Self {
            beta_temp: 1.0,
            k: 2,
            max_iters: 200,
            damping: 0.5,
            tol: 1e-6,
            seed: 0,
        }
    }
}

impl BpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta_temp > 0.0) {
            return Err(Error::Config(format!(
                "beta_temp must be positive, got {}",
                self.beta_temp
            )));
        }
        if self.k < 2 {
            return Err(Error::Config(format!("bp needs k >= 2, got {}", self.k)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if !(0.0..1.0).contains(&self.damping) {
            return Err(Error::Config(format!(
                "damping must lie in [0, 1), got {}",
                self.damping
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be >= 1".into()));
        }
        Ok(())
    }
}

/// Amplitude of the symmetric-breaking noise added to uniform initial
/// messages.
pub const BP_INIT_NOISE: f64 = 0.01;

/// One probability vector per directed edge `(i -> j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BpMessages {
    k: usize,
    edges: Vec<(usize, usize)>,
    index: HashMap<(usize, usize), usize>,
    values: Vec<f64>,
}

impl BpMessages {
    /// Uniform messages `1/k` perturbed entrywise by noise drawn from
    /// `[-amplitude, amplitude]`, then renormalized.
    pub fn init(g: &WeightedGraph, k: usize, amplitude: f64, seed: u64) -> Result<Self> {
        if k < 2 {
            return Err(Error::Config(format!("bp messages need k >= 2, got {k}")));
        }
        if !(0.0..0.5).contains(&(amplitude * k as f64 / 2.0)) && amplitude != 0.0 {
            // Keep entries strictly positive after perturbation.
            if amplitude >= 1.0 / k as f64 {
                return Err(Error::Config(format!(
                    "noise amplitude {amplitude} would produce nonpositive messages for k = {k}"
                )));
            }
        }
        let mut edges = Vec::new();
        for i in 0..g.n() {
            for &(j, _) in g.neighbors(i) {
                edges.push((i, j));
            }
        }
        let index: HashMap<(usize, usize), usize> =
            edges.iter().enumerate().map(|(e, &d)| (d, e)).collect();
        let mut rng = StdRng::seed_from_u64(seed);
        let mut values = Vec::with_capacity(edges.len() * k);
        for _ in 0..edges.len() {
            let mut row: Vec<f64> = (0..k)
                .map(|_| 1.0 / k as f64 + rng.gen_range(-amplitude..=amplitude))
                .collect();
            let total: f64 = row.iter().sum();
            for v in &mut row {
                *v /= total;
            }
            values.extend_from_slice(&row);
        }
        Ok(Self {
            k,
            edges,
            index,
            values,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of directed edges carrying messages.
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// The message from `i` to `j`, if that directed edge exists.
    pub fn get(&self, i: usize, j: usize) -> Option<&[f64]> {
        self.index
            .get(&(i, j))
            .map(|&e| &self.values[e * self.k..(e + 1) * self.k])
    }

    fn at(&self, e: usize) -> &[f64] {
        &self.values[e * self.k..(e + 1) * self.k]
    }
}

/// The weight-aware compatibility factor
/// `phi = 1 + (e^{beta w} - 1) m`; strictly positive (in fact `>= 1`)
/// for nonnegative weights and message entries.
pub fn compatibility_factor(beta_temp: f64, w: f64, m: f64) -> f64 {
    1.0 + ((beta_temp * w).exp() - 1.0) * m
}

/// Per-node log-products of incoming compatibility factors.
fn incoming_log_products(g: &WeightedGraph, cfg: &BpConfig, msgs: &BpMessages) -> Vec<Vec<f64>> {
    let k = cfg.k;
    let mut log_prod = vec![vec![0.0f64; k]; g.n()];
    for (e, &(l, i)) in msgs.edges.iter().enumerate() {
        let w = g.weight(l, i).expect("message edges mirror graph edges");
        let m = msgs.at(e);
        for c in 0..k {
            log_prod[i][c] += compatibility_factor(cfg.beta_temp, w, m[c]).ln();
        }
    }
    log_prod
}

/// One synchronous update of every message:
/// `M_{i->j}(c) proportional to prod_{l in N(i) \ j} phi_{l->i}(c)`,
/// blended with the previous value by `cfg.damping`. Returns the new
/// messages and the largest entrywise change.
pub fn bp_update_round(
    g: &WeightedGraph,
    cfg: &BpConfig,
    msgs: &BpMessages,
) -> Result<(BpMessages, f64)> {
    cfg.validate()?;
    if msgs.k != cfg.k {
        return Err(Error::DimensionMismatch(format!(
            "messages carry k = {}, config wants k = {}",
            msgs.k, cfg.k
        )));
    }
    let k = cfg.k;
    let log_prod = incoming_log_products(g, cfg, msgs);
    let mut next = msgs.clone();
    let mut max_change = 0.0f64;
    for (e, &(i, j)) in msgs.edges.iter().enumerate() {
        let back = msgs
            .get(j, i)
            .expect("directed edges come in mirrored pairs");
        let w = g.weight(i, j).expect("message edges mirror graph edges");
        let mut logits = vec![0.0f64; k];
        for c in 0..k {
            logits[c] = log_prod[i][c] - compatibility_factor(cfg.beta_temp, w, back[c]).ln();
        }
        let peak = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut fresh: Vec<f64> = logits.iter().map(|&l| (l - peak).exp()).collect();
        let total: f64 = fresh.iter().sum();
        for v in &mut fresh {
            *v /= total;
        }
        let row = &mut next.values[e * k..(e + 1) * k];
        for c in 0..k {
            let blended = cfg.damping * row[c] + (1.0 - cfg.damping) * fresh[c];
            max_change = max_change.max((blended - row[c]).abs());
            row[c] = blended;
        }
    }
    Ok((next, max_change))
}

/// Normalized beliefs `b_i(c) proportional to prod_{l in N(i)}
/// phi_{l->i}(c)`; isolated nodes get uniform beliefs.
pub fn bp_beliefs(g: &WeightedGraph, cfg: &BpConfig, msgs: &BpMessages) -> Result<SoftAssignment> {
    let k = cfg.k;
    let log_prod = incoming_log_products(g, cfg, msgs);
    let mut probs = Vec::with_capacity(g.n() * k);
    for i in 0..g.n() {
        let peak = log_prod[i]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let mut row: Vec<f64> = log_prod[i].iter().map(|&l| (l - peak).exp()).collect();
        let total: f64 = row.iter().sum();
        for v in &mut row {
            *v /= total;
        }
        probs.extend_from_slice(&row);
    }
    SoftAssignment::new(g.n(), k, probs)
}

/// Weight-aware belief propagation. Messages start uniform with seeded
/// symmetry-breaking noise, update synchronously with damping until the
/// largest change drops below `tol` or `max_iters` is reached
/// (non-convergence is noted in the diagnostics, not an error), and the
/// final beliefs provide both the soft and the hard assignment.
pub fn weighted_bp(g: &WeightedGraph, cfg: &BpConfig) -> Result<ClusteringResult> {
    require_nonempty(g)?;
    cfg.validate()?;
    let start = Instant::now();
    let mut msgs = BpMessages::init(g, cfg.k, BP_INIT_NOISE, cfg.seed)?;
    let mut iterations = 0;
    let mut converged = g.edge_count() == 0;
    while iterations < cfg.max_iters {
        let (next, change) = bp_update_round(g, cfg, &msgs)?;
        msgs = next;
        iterations += 1;
        if change < cfg.tol {
            converged = true;
            break;
        }
    }
    let soft = bp_beliefs(g, cfg, &msgs)?;
    let hard = soft.argmax_labels();
    let mut diagnostics = ClusteringDiagnostics::default();
    diagnostics.refine_iterations = iterations;
    if !converged {
        diagnostics.notes.push(format!(
            "belief propagation did not converge within {} iterations",
            cfg.max_iters
        ));
    }
    diagnostics
        .stage_seconds
        .insert("belief_propagation".into(), start.elapsed().as_secs_f64());
    Ok(ClusteringResult {
        soft,
        hard,
        diagnostics,
    })
}
