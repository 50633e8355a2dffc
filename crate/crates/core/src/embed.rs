//! Random-walk node embeddings: weighted walk corpus, windowed
//! co-occurrence counts, the PPMI transform, and a rank-`d` truncated
//! SVD whose rows become unit-norm embedding vectors.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};
use crate::graph::WeightedGraph;
use crate::seeding::derive_seed;
use crate::spectra::{symmetric_eigs, Which};

/// A corpus of random walks over a fixed node set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WalkCorpus {
    /// One node-id sequence per walk; length `walk_length + 1` except for
    /// walks started at isolated nodes, which are singletons.
    pub walks: Vec<Vec<usize>>,
    /// Number of nodes in the source graph (ids are `< n`).
    pub n: usize,
    pub walks_per_node: usize,
    pub walk_length: usize,
}

/// Windowed co-occurrence counts plus their marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct CooccurrenceStats {
    /// `counts[(u, v)]` = number of ordered position pairs `(i, j)` with
    /// `i != j`, `|i - j| <= window`, walk node `u` at `i` and `v` at `j`.
    /// Symmetric by construction.
    pub counts: DMatrix<f64>,
    pub row_sums: Vec<f64>,
    pub col_sums: Vec<f64>,
    /// Total mass (sum of all counts).
    pub total: f64,
    pub window: usize,
}

/// Row-normalized low-rank node embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    /// `n x rank`; every nonzero row has unit L2 norm, rows of nodes the
    /// factorization never touched stay zero.
    pub z: DMatrix<f64>,
    pub rank: usize,
    /// Retained singular values, nonincreasing.
    pub singular_values: Vec<f64>,
}

/// Generates `walks_per_node` walks of `length` steps from every node.
///
/// Each step moves to a neighbor with probability proportional to edge
/// weight, so reweighted graphs steer the corpus (a unit-weight graph
/// gives uniform steps). Walks from isolated nodes stay singletons. The
/// random stream of each walk derives from `(seed, node, walk_index)`
/// only, so the corpus is independent of generation order.
pub fn random_walk_corpus(
    g: &WeightedGraph,
    walks_per_node: usize,
    length: usize,
    seed: u64,
) -> Result<WalkCorpus> {
    if g.edge_count() == 0 {
        return Err(Error::Config("walk corpus needs a graph with edges".into()));
    }
    if walks_per_node == 0 || length == 0 {
        return Err(Error::Config(
            "walk corpus needs walks_per_node >= 1 and length >= 1".into(),
        ));
    }
    let n = g.n();
    let mut walks = Vec::with_capacity(n * walks_per_node);
    for node in 0..n {
        for t in 0..walks_per_node {
            let mut rng = StdRng::seed_from_u64(derive_seed(seed, &[node as u64, t as u64]));
            let mut walk = Vec::with_capacity(length + 1);
            walk.push(node);
            let mut here = node;
            for _ in 0..length {
                let nbrs = g.neighbors(here);
                if nbrs.is_empty() {
                    break;
                }
                here = weighted_step(nbrs, &mut rng);
                walk.push(here);
            }
            walks.push(walk);
        }
    }
    Ok(WalkCorpus {
        walks,
        n,
        walks_per_node,
        walk_length: length,
    })
}

/// Samples one neighbor with probability proportional to weight.
fn weighted_step(nbrs: &[(usize, f64)], rng: &mut StdRng) -> usize {
    let total: f64 = nbrs.iter().map(|&(_, w)| w).sum();
    let mut r = rng.gen::<f64>() * total;
    for &(v, w) in nbrs {
        r -= w;
        if r < 0.0 {
            return v;
        }
    }
    nbrs[nbrs.len() - 1].0
}

/// Writes one walk per line, node ids space-separated (debugging aid).
pub fn write_corpus(corpus: &WalkCorpus, path: &Path) -> Result<()> {
    let mut out = String::new();
    for walk in &corpus.walks {
        let ids: Vec<String> = walk.iter().map(|v| v.to_string()).collect();
        out.push_str(&ids.join(" "));
        out.push('\n');
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

/// Counts windowed co-occurrences: all ordered position pairs `(i, j)`
/// with `i != j` and `|i - j| <= window` within each walk.
pub fn cooccurrence_counts(corpus: &WalkCorpus, window: usize) -> Result<CooccurrenceStats> {
    if window == 0 {
        return Err(Error::Config("cooccurrence needs window >= 1".into()));
    }
    let n = corpus.n;
    let mut counts = DMatrix::<f64>::zeros(n, n);
    for walk in &corpus.walks {
        for i in 0..walk.len() {
            let hi = (i + window).min(walk.len().saturating_sub(1));
            for j in (i + 1)..=hi {
                let (u, v) = (walk[i], walk[j]);
                if u >= n || v >= n {
                    return Err(Error::NodeOutOfRange { id: u.max(v), n });
                }
                // One ordered pair each way keeps the counts symmetric.
                counts[(u, v)] += 1.0;
                counts[(v, u)] += 1.0;
            }
        }
    }
    let row_sums: Vec<f64> = (0..n).map(|u| counts.row(u).sum()).collect();
    let col_sums: Vec<f64> = (0..n).map(|v| counts.column(v).sum()).collect();
    let total = row_sums.iter().sum();
    Ok(CooccurrenceStats {
        counts,
        row_sums,
        col_sums,
        total,
        window,
    })
}

/// Positive pointwise mutual information:
/// `max(log(C_uv * M / (R_u * C_v)), 0)`, with zero counts and empty
/// marginals mapping to 0 rather than to minus infinity.
pub fn ppmi_matrix(stats: &CooccurrenceStats) -> Result<DMatrix<f64>> {
    if stats.total <= 0.0 {
        return Err(Error::InsufficientData(
            "PPMI needs a corpus with at least one co-occurrence".into(),
        ));
    }
    let n = stats.counts.nrows();
    let mut out = DMatrix::<f64>::zeros(n, n);
    for u in 0..n {
        let ru = stats.row_sums[u];
        if ru == 0.0 {
            continue;
        }
        for v in 0..n {
            let c = stats.counts[(u, v)];
            let cv = stats.col_sums[v];
            if c > 0.0 && cv > 0.0 {
                let pmi = (c * stats.total / (ru * cv)).ln();
                if pmi > 0.0 {
                    out[(u, v)] = pmi;
                }
            }
        }
    }
    Ok(out)
}

/// Best rank-`rank` factorization `m ~ U diag(s) V^T` with `s`
/// nonincreasing and orthonormal `U`, `V` columns.
///
/// Symmetric input is factored through its eigendecomposition (singular
/// values are the absolute eigenvalues, `V = U sign(lambda)`), which
/// scales to large sparse-spectrum matrices; anything else falls back to
/// a dense SVD.
pub fn truncated_factorization(
    m: &DMatrix<f64>,
    rank: usize,
    seed: u64,
) -> Result<(DMatrix<f64>, Vec<f64>, DMatrix<f64>)> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::NotSquare(n, m.ncols()));
    }
    if rank == 0 || rank > n {
        return Err(Error::RankTooLarge { rank, n });
    }
    let asym = (m - m.transpose()).abs().max();
    if asym <= 1e-10 * m.abs().max().max(1.0) {
        let pairs = match symmetric_eigs(m, rank, Which::LargestMagnitude, seed) {
            Ok(p) => p,
            // Correctness backstop for hard spectra: dense SVD.
            Err(Error::EigenNonConvergence { .. }) => return dense_truncated_svd(m, rank),
            Err(e) => return Err(e),
        };
        let u = pairs.vectors.clone();
        let mut v = pairs.vectors;
        let mut s = Vec::with_capacity(rank);
        for (c, &lambda) in pairs.values.iter().enumerate() {
            s.push(lambda.abs());
            if lambda < 0.0 {
                for r in 0..n {
                    v[(r, c)] = -v[(r, c)];
                }
            }
        }
        return Ok((u, s, v));
    }
    dense_truncated_svd(m, rank)
}

fn dense_truncated_svd(
    m: &DMatrix<f64>,
    rank: usize,
) -> Result<(DMatrix<f64>, Vec<f64>, DMatrix<f64>)> {
    let n = m.nrows();
    let svd = m.clone().svd(true, true);
    let u_full = svd.u.as_ref().expect("svd computed with u");
    let vt_full = svd.v_t.as_ref().expect("svd computed with v_t");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .expect("singular values are finite")
    });
    let mut u = DMatrix::<f64>::zeros(n, rank);
    let mut v = DMatrix::<f64>::zeros(n, rank);
    let mut s = Vec::with_capacity(rank);
    for (c, &i) in order.iter().take(rank).enumerate() {
        s.push(svd.singular_values[i]);
        // Canonical sign: largest-|entry| coordinate of u positive.
        let ucol = u_full.column(i);
        let mut best = 0;
        for r in 1..n {
            if ucol[r].abs() > ucol[best].abs() {
                best = r;
            }
        }
        let flip = if ucol[best] < 0.0 { -1.0 } else { 1.0 };
        for r in 0..n {
            u[(r, c)] = flip * ucol[r];
            v[(r, c)] = flip * vt_full[(i, r)];
        }
    }
    Ok((u, s, v))
}

/// Node embeddings `z_i = (U S^{1/2})_{i,:}`, each nonzero row scaled to
/// unit L2 norm afterwards. Rows with (numerically) zero mass — nodes
/// absent from the corpus — remain exactly zero.
pub fn embed(ppmi: &DMatrix<f64>, rank: usize, seed: u64) -> Result<EmbeddingMatrix> {
    let (u, s, _v) = truncated_factorization(ppmi, rank, seed)?;
    let n = ppmi.nrows();
    let mut z = DMatrix::<f64>::zeros(n, rank);
    for c in 0..rank {
        let scale = s[c].sqrt();
        for r in 0..n {
            z[(r, c)] = u[(r, c)] * scale;
        }
    }
    for r in 0..n {
        let norm = z.row(r).norm();
        if norm > 1e-9 {
            for c in 0..rank {
                z[(r, c)] /= norm;
            }
        } else {
            for c in 0..rank {
                z[(r, c)] = 0.0;
            }
        }
    }
    Ok(EmbeddingMatrix {
        z,
        rank,
        singular_values: s,
    })
}
