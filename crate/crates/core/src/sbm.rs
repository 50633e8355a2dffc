//! Latent-kernel stochastic block model: two communities whose
//! `a log n / n` and `b log n / n` connection rates are attenuated by a
//! Gaussian kernel of the latent positions, plus the recovery thresholds
//! that attenuation induces.

use std::io::Write;
use std::path::Path;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};
use crate::graph::{LabelVector, WeightedGraph};

/// Generator parameters.
///
/// With latent positions `x_i ~ U[0,1]^dim` and labels `z_i` a fair coin
/// (or an exactly balanced split when `balanced` is set), each pair is an
/// edge independently with probability
/// `B(z_i, z_j) * exp(-||x_i - x_j||^2 / (2 sigma^2))`, where `B` is
/// `a log n / n` within a community and `b log n / n` across.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SbmParams {
    pub n: usize,
    pub a: f64,
    pub b: f64,
    pub sigma: f64,
    /// Latent space dimension.
    pub dim: usize,
    /// Force an exactly balanced label split (random assignment of the
    /// two halves) instead of independent fair coins.
    pub balanced: bool,
}

impl Default for SbmParams {
    fn default() -> Self {
        Self {
            n: 500,
            a: 60.0,
            b: 5.0,
            sigma: 0.75,
            dim: 2,
            balanced: false,
        }
    }
}

impl SbmParams {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Config("sbm needs n >= 2".into()));
        }
        if !(self.a > 0.0) || !self.a.is_finite() {
            return Err(Error::Config(format!("sbm needs a > 0, got {}", self.a)));
        }
        if self.b < 0.0 || !self.b.is_finite() {
            return Err(Error::Config(format!("sbm needs b >= 0, got {}", self.b)));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::Config(format!(
                "sbm needs sigma > 0, got {}",
                self.sigma
            )));
        }
        if self.dim == 0 {
            return Err(Error::Config("sbm needs dim >= 1".into()));
        }
        Ok(())
    }

    /// Intra-community base rate `a log n / n` before kernel attenuation
    /// and clipping.
    pub fn rate_in(&self) -> f64 {
        self.a * (self.n as f64).ln() / self.n as f64
    }

    /// Inter-community base rate `b log n / n`.
    pub fn rate_out(&self) -> f64 {
        self.b * (self.n as f64).ln() / self.n as f64
    }
}

/// One draw from the generator.
#[derive(Debug, Clone)]
pub struct SbmSample {
    /// Unit-weight graph on the sampled edges.
    pub graph: WeightedGraph,
    /// Ground-truth community labels (k = 2).
    pub labels: LabelVector,
    /// Latent positions, `n` rows of `dim` coordinates.
    pub positions: Vec<Vec<f64>>,
    /// How many pair probabilities had to be clipped into `[0, 1]`.
    pub clip_warnings: usize,
}

/// Exact and weak recovery classification for given rates.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ThresholdReport {
    pub c_sigma: f64,
    /// `(sqrt(c a) - sqrt(c b))^2`, the exact-recovery statistic.
    pub t_exact: f64,
    /// Exact recovery iff `t_exact > 2`, strictly.
    pub exact_recoverable: bool,
    /// `(c a - c b)^2`, the left side of the weak-recovery condition.
    pub weak_lhs: f64,
    /// `2 (c a + c b)`, the right side of the weak-recovery condition.
    pub weak_rhs: f64,
    /// Weak recovery iff `weak_lhs > weak_rhs`, strictly.
    pub weak_recoverable: bool,
}

/// Monte-Carlo estimate of the kernel constant with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct KernelEstimate {
    pub mean: f64,
    pub standard_error: f64,
    pub n_samples: usize,
}

/// Estimates `E[exp(-||x - y||^2 / (2 sigma^2))]` for `x, y ~ U[0,1]^d`
/// by Monte Carlo, reporting the standard error alongside the mean.
///
/// # Errors
///
/// Rejects `d = 0`, non-positive `sigma`, and zero samples.
pub fn kernel_constant_mc(
    d: usize,
    sigma: f64,
    n_samples: usize,
    seed: u64,
) -> Result<KernelEstimate> {
    if d == 0 {
        return Err(Error::Config("kernel constant needs d >= 1".into()));
    }
    if !(sigma > 0.0) {
        return Err(Error::Config(format!(
            "kernel constant needs sigma > 0, got {sigma}"
        )));
    }
    if n_samples == 0 {
        return Err(Error::Config("kernel constant needs n_samples >= 1".into()));
    }
    let mut rng = StdRng::seed_from_u64(seed);
    let inv = 1.0 / (2.0 * sigma * sigma);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n_samples {
        let mut dist2 = 0.0;
        for _ in 0..d {
            let diff = rng.gen::<f64>() - rng.gen::<f64>();
            dist2 += diff * diff;
        }
        let v = (-dist2 * inv).exp();
        sum += v;
        sum_sq += v * v;
    }
    let n = n_samples as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0);
    let standard_error = if n_samples > 1 {
        (var / (n - 1.0)).sqrt()
    } else {
        f64::NAN
    };
    Ok(KernelEstimate {
        mean,
        standard_error,
        n_samples,
    })
}

/// Default sample budget for [`estimate_kernel_constant`].
pub const KERNEL_MC_SAMPLES: usize = 1_000_000;

/// Point estimate of the kernel constant `c(sigma)` with the default
/// Monte-Carlo budget of one million pairs.
pub fn estimate_kernel_constant(d: usize, sigma: f64, n_samples: usize, seed: u64) -> Result<f64> {
    Ok(kernel_constant_mc(d, sigma, n_samples, seed)?.mean)
}

/// Connection probability of one pair conditional on positions and
/// labels, after clipping into `[0, 1]`. The boolean reports whether
/// clipping fired.
pub fn pair_probability(
    params: &SbmParams,
    xi: &[f64],
    xj: &[f64],
    zi: usize,
    zj: usize,
) -> (f64, bool) {
    let base = if zi == zj {
        params.rate_in()
    } else {
        params.rate_out()
    };
    let mut dist2 = 0.0;
    for (a, b) in xi.iter().zip(xj) {
        dist2 += (a - b) * (a - b);
    }
    let p = base * (-dist2 / (2.0 * params.sigma * params.sigma)).exp();
    if p > 1.0 {
        (1.0, true)
    } else {
        (p.max(0.0), false)
    }
}

/// Draws the edge set conditional on fixed positions and labels.
///
/// Pairs are visited in lexicographic order `(i, j), i < j`, each an
/// independent Bernoulli, so the draw is reproducible from the RNG state.
pub fn sample_edges_given(
    params: &SbmParams,
    positions: &[Vec<f64>],
    labels: &LabelVector,
    rng: &mut StdRng,
) -> Result<(WeightedGraph, usize)> {
    let n = params.n;
    let mut edges = Vec::new();
    let mut clip_warnings = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            let (p, clipped) = pair_probability(
                params,
                &positions[i],
                &positions[j],
                labels.get(i),
                labels.get(j),
            );
            if clipped {
                clip_warnings += 1;
            }
            if rng.gen::<f64>() < p {
                edges.push((i, j, 1.0));
            }
        }
    }
    Ok((WeightedGraph::build(n, &edges)?, clip_warnings))
}

/// Samples positions, labels, and the graph in one deterministic pass.
pub fn sample_lk_sbm(params: &SbmParams, seed: u64) -> Result<SbmSample> {
    params.validate()?;
    let mut rng = StdRng::seed_from_u64(seed);
    let n = params.n;

    let positions: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..params.dim).map(|_| rng.gen::<f64>()).collect())
        .collect();

    let raw_labels: Vec<usize> = if params.balanced {
        // Random assignment of an exact floor/ceil split.
        let mut ids: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            ids.swap(i, j);
        }
        let mut l = vec![0usize; n];
        for &node in ids.iter().skip(n / 2) {
            l[node] = 1;
        }
        l
    } else {
        (0..n).map(|_| usize::from(rng.gen::<bool>())).collect()
    };
    let labels = LabelVector::new(raw_labels, 2)?;

    let (graph, clip_warnings) = sample_edges_given(params, &positions, &labels, &mut rng)?;
    Ok(SbmSample {
        graph,
        labels,
        positions,
        clip_warnings,
    })
}

/// Classifies exact and weak recoverability of `(a, b)` rates under
/// kernel constant `c_sigma`.
///
/// The exact statistic `(sqrt(c a) - sqrt(c b))^2` is evaluated in the
/// algebraically expanded form `c a + c b - 2 sqrt(c a * c b)`, which
/// keeps integer-friendly boundary cases (such as `c = 1, a = 8, b = 2`)
/// exactly on the threshold. Both classifications are strict
/// inequalities, so a statistic exactly at the boundary is not
/// recoverable.
pub fn recovery_thresholds(a: f64, b: f64, c_sigma: f64) -> Result<ThresholdReport> {
    if !(a > 0.0) || b < 0.0 {
        return Err(Error::Config(format!(
            "thresholds need a > 0 and b >= 0, got a = {a}, b = {b}"
        )));
    }
    if !(c_sigma > 0.0) || c_sigma > 1.0 {
        return Err(Error::Config(format!(
            "thresholds need 0 < c_sigma <= 1, got {c_sigma}"
        )));
    }
    let ca = c_sigma * a;
    let cb = c_sigma * b;
    let t_exact = (ca + cb - 2.0 * (ca * cb).sqrt()).max(0.0);
    let weak_lhs = (ca - cb) * (ca - cb);
    let weak_rhs = 2.0 * (ca + cb);
    Ok(ThresholdReport {
        c_sigma,
        t_exact,
        exact_recoverable: t_exact > 2.0,
        weak_lhs,
        weak_rhs,
        weak_recoverable: weak_lhs > weak_rhs,
    })
}

/// Writes the node sidecar: one `node_id label x_1 ... x_d` line per
/// node, coordinates printed with 17 significant digits.
pub fn write_nodes_file(sample: &SbmSample, path: &Path) -> Result<()> {
    let mut out = String::new();
    for i in 0..sample.graph.n() {
        out.push_str(&format!("{} {}", i, sample.labels.get(i)));
        for c in &sample.positions[i] {
            out.push_str(&format!(" {:.16e}", c));
        }
        out.push('\n');
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

/// Reads a node sidecar back into labels and positions.
pub fn load_nodes_file(path: &Path) -> Result<(LabelVector, Vec<Vec<f64>>)> {
    let text = std::fs::read_to_string(path)?;
    let mut rows: Vec<(usize, usize, Vec<f64>)> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: &str| Error::Parse {
            path: path.display().to_string(),
            line: lineno + 1,
            msg: msg.to_string(),
        };
        let mut parts = line.split_whitespace();
        let id = parts
            .next()
            .ok_or_else(|| err("missing node id"))?
            .parse::<usize>()
            .map_err(|_| err("bad node id"))?;
        let label = parts
            .next()
            .ok_or_else(|| err("missing label"))?
            .parse::<usize>()
            .map_err(|_| err("bad label"))?;
        let coords = parts
            .map(|p| p.parse::<f64>().map_err(|_| err("bad coordinate")))
            .collect::<Result<Vec<f64>>>()?;
        rows.push((id, label, coords));
    }
    rows.sort_by_key(|r| r.0);
    for (expect, row) in rows.iter().enumerate() {
        if row.0 != expect {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: 0,
                msg: format!("node ids not contiguous: missing {expect}"),
            });
        }
    }
    let k = rows.iter().map(|r| r.1).max().unwrap_or(0) + 1;
    let labels = LabelVector::new(rows.iter().map(|r| r.1).collect(), k.max(2))?;
    let positions = rows.into_iter().map(|r| r.2).collect();
    Ok((labels, positions))
}
