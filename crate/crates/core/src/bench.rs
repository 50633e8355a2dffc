//! Benchmark harness: permutation-invariant accuracy, a paired sweep of
//! clustering methods over synthetic latent-kernel graphs, recovery
//! threshold validation, and the noise-trace slope test.

use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;

use crate::baselines::{
    bethe_hessian_cluster, motif_laplacian_cluster, nonbacktracking_cluster, weighted_bp, BpConfig,
};
use crate::error::{Error, Result};
use crate::geode::{run_geode, GeoDeConfig};
use crate::graph::LabelVector;
use crate::maso::{maso_cluster, MasoConfig};
use crate::sbm::{
    estimate_kernel_constant, recovery_thresholds, sample_lk_sbm, SbmParams, KERNEL_MC_SAMPLES,
};
use crate::seeding::derive_seed;
use crate::stats::{mean, slope_t_test, standard_error, SlopeTest};
use crate::WeightedGraph;

/// Largest label count the exact assignment search accepts.
pub const MAX_ACCURACY_CLASSES: usize = 16;

/// Best agreement between two labelings over all relabelings of `pred`:
/// the fraction of nodes matched under the optimal class assignment.
/// Two classes use the closed form `max(acc, 1 - acc)`; more classes run
/// an exact assignment search on the confusion matrix (up to
/// [`MAX_ACCURACY_CLASSES`] classes).
pub fn permutation_accuracy(pred: &LabelVector, truth: &LabelVector) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::LabelLength {
            got: pred.len(),
            expected: truth.len(),
        });
    }
    if pred.k() != truth.k() {
        return Err(Error::Config(format!(
            "label alphabets differ: {} vs {} classes",
            pred.k(),
            truth.k()
        )));
    }
    let n = pred.len();
    if n == 0 {
        return Err(Error::InsufficientData(
            "accuracy needs at least one node".into(),
        ));
    }
    let k = pred.k();
    if k == 1 {
        return Ok(1.0);
    }
    if k == 2 {
        let agree = pred
            .as_slice()
            .iter()
            .zip(truth.as_slice())
            .filter(|(p, t)| p == t)
            .count();
        let acc = agree as f64 / n as f64;
        return Ok(acc.max(1.0 - acc));
    }
    if k > MAX_ACCURACY_CLASSES {
        return Err(Error::Config(format!(
            "assignment search supports up to {MAX_ACCURACY_CLASSES} classes, got {k}"
        )));
    }
    let mut confusion = vec![vec![0usize; k]; k];
    for (&p, &t) in pred.as_slice().iter().zip(truth.as_slice()) {
        confusion[t][p] += 1;
    }
    // Exact assignment over relabelings: dp over subsets of predicted
    // classes, assigning truth classes in index order.
    let full = 1usize << k;
    let mut dp = vec![usize::MIN; full];
    dp[0] = 0;
    for mask in 0..full {
        let row = mask.count_ones() as usize;
        if row >= k {
            continue;
        }
        for j in 0..k {
            if mask & (1 << j) != 0 {
                continue;
            }
            let next = mask | (1 << j);
            dp[next] = dp[next].max(dp[mask] + confusion[row][j]);
        }
    }
    Ok(dp[full - 1] as f64 / n as f64)
}

/// Clustering method identifiers for the sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchMethod {
    Maso,
    /// The full denoising loop (its spectral routines come from the
    /// `geode` block of the config).
    Geode,
    BetheHessian,
    Nonbacktracking,
    MotifLaplacian,
    Bp,
}

impl BenchMethod {
    pub fn name(self) -> &'static str {
        match self {
            BenchMethod::Maso => "maso",
            BenchMethod::Geode => "geode",
            BenchMethod::BetheHessian => "bethe_hessian",
            BenchMethod::Nonbacktracking => "nonbacktracking",
            BenchMethod::MotifLaplacian => "motif_laplacian",
            BenchMethod::Bp => "bp",
        }
    }
}

/// Sweep configuration: the bandwidth grid, per-cell parameter ranges,
/// the methods to compare, and the per-method parameter blocks.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub sigma_grid: Vec<f64>,
    pub replicates: usize,
    /// Inclusive node-count range sampled per cell.
    pub n_range: (usize, usize),
    /// Inclusive intra-rate coefficient range; pairs are redrawn until
    /// `a > b`.
    pub a_range: (f64, f64),
    /// Inclusive inter-rate coefficient range.
    pub b_range: (f64, f64),
    /// Latent dimension of the generated graphs.
    pub dim: usize,
    /// Exactly balanced communities instead of fair-coin labels.
    pub balanced: bool,
    /// Number of communities every method looks for.
    pub k: usize,
    pub methods: Vec<BenchMethod>,
    pub maso: MasoConfig,
    pub geode: GeoDeConfig,
    pub bp: BpConfig,
    pub seed: u64,
    /// Worker threads for the sweep; 1 = serial, 0 = all available.
    pub jobs: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            sigma_grid: vec![0.75, 0.5, 0.25, 0.1],
            replicates: 5,
            n_range: (100, 1000),
            a_range: (15.0, 100.0),
            b_range: (1.0, 50.0),
            dim: 2,
            balanced: false,
            k: 2,
            methods: vec![
                BenchMethod::Maso,
                BenchMethod::BetheHessian,
                BenchMethod::Nonbacktracking,
                BenchMethod::MotifLaplacian,
            ],
            maso: MasoConfig::default(),
            geode: GeoDeConfig::default(),
            bp: BpConfig::default(),
            seed: 0,
            jobs: 1,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sigma_grid.is_empty() {
            return Err(Error::Config("sigma_grid must not be empty".into()));
        }
        if self.sigma_grid.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::Config("all bandwidths must be positive".into()));
        }
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if self.n_range.0 < 2 || self.n_range.0 > self.n_range.1 {
            return Err(Error::Config(format!(
                "n_range must satisfy 2 <= lo <= hi, got {:?}",
                self.n_range
            )));
        }
        for (name, range) in [("a_range", self.a_range), ("b_range", self.b_range)] {
            if !(range.0 > 0.0 && range.0 <= range.1 && range.1.is_finite()) {
                return Err(Error::Config(format!(
                    "{name} must satisfy 0 < lo <= hi, got {range:?}"
                )));
            }
        }
        if self.a_range.1 <= self.b_range.0 {
            return Err(Error::Config(format!(
                "a_range {:?} and b_range {:?} leave no draws with a > b",
                self.a_range, self.b_range
            )));
        }
        if self.dim == 0 {
            return Err(Error::Config("dim must be at least 1".into()));
        }
        if self.k < 2 {
            return Err(Error::Config(format!(
                "k must be at least 2, got {}",
                self.k
            )));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("at least one method is required".into()));
        }
        let mut maso = self.maso;
        maso.k = self.k;
        maso.validate()?;
        let mut bp = self.bp;
        bp.k = self.k;
        bp.validate()?;
        if self.methods.contains(&BenchMethod::Geode) {
            let mut geode = self.geode;
            geode.k = self.k;
            geode.validate()?;
        }
        Ok(())
    }
}

/// One method run on one generated graph.
#[derive(Debug, Clone, serde::Serialize)]
pub struct RunRecord {
    pub sigma: f64,
    pub replicate: usize,
    pub n: usize,
    pub a: f64,
    pub b: f64,
    /// Seed the method ran with.
    pub seed: u64,
    /// Content hash of the generated graph; identical across methods of
    /// the same cell (paired design), zero when generation failed.
    pub graph_hash: u64,
    pub method: BenchMethod,
    /// Permutation-invariant accuracy; absent when the run failed.
    pub accuracy: Option<f64>,
    pub seconds: f64,
    /// Kernel constant used for the threshold flags.
    pub c_sigma: f64,
    /// Exact-recovery threshold statistic of the cell's parameters.
    pub t_exact: f64,
    /// Whether the threshold predicts exact recovery (`t_exact > 2`).
    pub recoverable: bool,
    /// Whether the run achieved exact recovery (accuracy exactly 1).
    pub recovered: bool,
    pub error: Option<String>,
}

/// Mean accuracy of one method at one bandwidth.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SummaryRow {
    pub method: BenchMethod,
    pub sigma: f64,
    pub mean_accuracy: f64,
    /// Standard error of the mean; zero when only one run succeeded.
    pub standard_error: f64,
    pub n_runs: usize,
    pub n_failures: usize,
}

/// Records plus per-(method, bandwidth) summary.
#[derive(Debug, Clone, serde::Serialize)]
pub struct BenchOutcome {
    pub records: Vec<RunRecord>,
    pub summary: Vec<SummaryRow>,
}

fn run_method(
    method: BenchMethod,
    g: &WeightedGraph,
    cfg: &BenchConfig,
    seed: u64,
) -> Result<LabelVector> {
    match method {
        BenchMethod::Maso => {
            let mut m = cfg.maso;
            m.k = cfg.k;
            Ok(maso_cluster(g, &m, seed)?.hard)
        }
        BenchMethod::Geode => {
            let mut gc = cfg.geode;
            gc.k = cfg.k;
            gc.maso = cfg.maso;
            gc.seed = seed;
            Ok(run_geode(g, &gc)?.hard)
        }
        BenchMethod::BetheHessian => Ok(bethe_hessian_cluster(g, cfg.k, seed)?.hard),
        BenchMethod::Nonbacktracking => Ok(nonbacktracking_cluster(g, cfg.k, seed)?.hard),
        BenchMethod::MotifLaplacian => Ok(motif_laplacian_cluster(g, cfg.k, seed)?.hard),
        BenchMethod::Bp => {
            let mut b = cfg.bp;
            b.k = cfg.k;
            b.seed = seed;
            Ok(weighted_bp(g, &b)?.hard)
        }
    }
}

fn sample_cell_params(cfg: &BenchConfig, rng: &mut StdRng) -> Result<(usize, f64, f64)> {
    let n = rng.gen_range(cfg.n_range.0..=cfg.n_range.1);
    let draw = |rng: &mut StdRng, range: (f64, f64)| -> f64 {
        if range.1 > range.0 {
            rng.gen_range(range.0..=range.1)
        } else {
            range.0
        }
    };
    for _ in 0..100_000 {
        let a = draw(rng, cfg.a_range);
        let b = draw(rng, cfg.b_range);
        if a > b {
            return Ok((n, a, b));
        }
    }
    Err(Error::Config(format!(
        "no draw with a > b from a_range {:?}, b_range {:?}",
        cfg.a_range, cfg.b_range
    )))
}

fn run_cell(cfg: &BenchConfig, sigma_idx: usize, replicate: usize, c_sigma: f64) -> Vec<RunRecord> {
    let sigma = cfg.sigma_grid[sigma_idx];
    let cell_seed = derive_seed(cfg.seed, &[sigma_idx as u64, replicate as u64]);
    let mut rng = StdRng::seed_from_u64(derive_seed(cell_seed, &[0]));

    // All methods of a failed cell get the same error record so counts
    // stay aligned across methods.
    let fail_all = |n: usize, a: f64, b: f64, t_exact: f64, recoverable: bool, msg: String| {
        cfg.methods
            .iter()
            .enumerate()
            .map(|(m_idx, &method)| RunRecord {
                sigma,
                replicate,
                n,
                a,
                b,
                seed: derive_seed(cell_seed, &[2 + m_idx as u64]),
                graph_hash: 0,
                method,
                accuracy: None,
                seconds: 0.0,
                c_sigma,
                t_exact,
                recoverable,
                recovered: false,
                error: Some(msg.clone()),
            })
            .collect()
    };

    let (n, a, b) = match sample_cell_params(cfg, &mut rng) {
        Ok(p) => p,
        Err(e) => return fail_all(0, 0.0, 0.0, 0.0, false, e.to_string()),
    };
    let thresholds = match recovery_thresholds(a, b, c_sigma) {
        Ok(t) => t,
        Err(e) => return fail_all(n, a, b, 0.0, false, e.to_string()),
    };
    let params = SbmParams {
        n,
        a,
        b,
        sigma,
        dim: cfg.dim,
        balanced: cfg.balanced,
    };
    let sample = match sample_lk_sbm(&params, derive_seed(cell_seed, &[1])) {
        Ok(s) => s,
        Err(e) => {
            return fail_all(
                n,
                a,
                b,
                thresholds.t_exact,
                thresholds.exact_recoverable,
                e.to_string(),
            )
        }
    };
    let graph_hash = sample.graph.content_hash();

    cfg.methods
        .iter()
        .enumerate()
        .map(|(m_idx, &method)| {
            let seed = derive_seed(cell_seed, &[2 + m_idx as u64]);
            let start = Instant::now();
            let outcome = run_method(method, &sample.graph, cfg, seed)
                .and_then(|hard| permutation_accuracy(&hard, &sample.labels));
            let seconds = start.elapsed().as_secs_f64();
            let (accuracy, error) = match outcome {
                Ok(acc) => (Some(acc), None),
                Err(e) => (None, Some(e.to_string())),
            };
            RunRecord {
                sigma,
                replicate,
                n,
                a,
                b,
                seed,
                graph_hash,
                method,
                accuracy,
                seconds,
                c_sigma,
                t_exact: thresholds.t_exact,
                recoverable: thresholds.exact_recoverable,
                recovered: accuracy == Some(1.0),
                error,
            }
        })
        .collect()
}

/// Runs the paired sweep: per (bandwidth, replicate) cell one graph is
/// generated and every method runs on it with a cell-derived seed.
/// Individual failures are recorded and the sweep continues. Cells may
/// run in parallel (`jobs`); records always merge in (bandwidth,
/// replicate, method) order, so the output is scheduling-independent.
pub fn run_benchmark(cfg: &BenchConfig) -> Result<BenchOutcome> {
    cfg.validate()?;
    let c_sigmas: Vec<f64> = cfg
        .sigma_grid
        .iter()
        .enumerate()
        .map(|(idx, &sigma)| {
            estimate_kernel_constant(
                cfg.dim,
                sigma,
                KERNEL_MC_SAMPLES,
                derive_seed(cfg.seed, &[900, idx as u64]),
            )
        })
        .collect::<Result<_>>()?;

    let cells: Vec<(usize, usize)> = (0..cfg.sigma_grid.len())
        .flat_map(|si| (0..cfg.replicates).map(move |r| (si, r)))
        .collect();

    let nested: Vec<Vec<RunRecord>> = if cfg.jobs == 1 {
        cells
            .iter()
            .map(|&(si, r)| run_cell(cfg, si, r, c_sigmas[si]))
            .collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
        pool.install(|| {
            cells
                .par_iter()
                .map(|&(si, r)| run_cell(cfg, si, r, c_sigmas[si]))
                .collect()
        })
    };

    let records: Vec<RunRecord> = nested.into_iter().flatten().collect();
    let summary = summarize(&records);
    Ok(BenchOutcome { records, summary })
}

/// Per-(method, bandwidth) mean accuracy with standard error, in first
/// appearance order of the records.
pub fn summarize(records: &[RunRecord]) -> Vec<SummaryRow> {
    let mut order: Vec<(BenchMethod, f64)> = Vec::new();
    for r in records {
        if !order
            .iter()
            .any(|&(m, s)| m == r.method && s.to_bits() == r.sigma.to_bits())
        {
            order.push((r.method, r.sigma));
        }
    }
    order
        .into_iter()
        .map(|(method, sigma)| {
            let accs: Vec<f64> = records
                .iter()
                .filter(|r| r.method == method && r.sigma.to_bits() == sigma.to_bits())
                .filter_map(|r| r.accuracy)
                .collect();
            let n_total = records
                .iter()
                .filter(|r| r.method == method && r.sigma.to_bits() == sigma.to_bits())
                .count();
            let se = if accs.len() >= 2 {
                standard_error(&accs)
            } else {
                0.0
            };
            SummaryRow {
                method,
                sigma,
                mean_accuracy: if accs.is_empty() {
                    f64::NAN
                } else {
                    mean(&accs)
                },
                standard_error: se,
                n_runs: accs.len(),
                n_failures: n_total - accs.len(),
            }
        })
        .collect()
}

/// One plotted point of the threshold-validation diagnostic.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct ThresholdDot {
    pub a: f64,
    /// Inter-rate coefficient scaled by the kernel constant.
    pub b_times_c: f64,
    pub sigma: f64,
    pub t_exact: f64,
    pub matched: bool,
}

/// Confusion between the threshold's prediction and observed recovery.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ThresholdValidation {
    /// Records where prediction and observation agree.
    pub matches: usize,
    pub mismatches: usize,
    /// Failed runs, excluded from the counts.
    pub skipped: usize,
    pub dots: Vec<ThresholdDot>,
}

impl ThresholdValidation {
    pub fn match_fraction(&self) -> f64 {
        let total = self.matches + self.mismatches;
        if total == 0 {
            f64::NAN
        } else {
            self.matches as f64 / total as f64
        }
    }
}

/// Compares each record's recoverability prediction against whether the
/// run actually recovered exactly: a match is `(recoverable AND
/// recovered) OR (NOT recoverable AND NOT recovered)`.
pub fn threshold_validation(records: &[RunRecord]) -> ThresholdValidation {
    let mut out = ThresholdValidation {
        matches: 0,
        mismatches: 0,
        skipped: 0,
        dots: Vec::new(),
    };
    for r in records {
        if r.accuracy.is_none() {
            out.skipped += 1;
            continue;
        }
        let matched = r.recoverable == r.recovered;
        if matched {
            out.matches += 1;
        } else {
            out.mismatches += 1;
        }
        out.dots.push(ThresholdDot {
            a: r.a,
            b_times_c: r.b * r.c_sigma,
            sigma: r.sigma,
            t_exact: r.t_exact,
            matched,
        });
    }
    out
}

/// OLS slope of `value` against `t` with a two-sided p-value against
/// zero slope. Errors when fewer than three points are given or every
/// abscissa coincides.
pub fn slope_significance(trace: &[(f64, f64)]) -> Result<SlopeTest> {
    if trace.len() < 3 {
        return Err(Error::InsufficientData(
            "slope test needs at least three points".into(),
        ));
    }
    let first = trace[0].0;
    if trace.iter().all(|&(t, _)| t == first) {
        return Err(Error::InsufficientData(
            "degenerate abscissa: all time points coincide".into(),
        ));
    }
    let xs: Vec<f64> = trace.iter().map(|&(t, _)| t).collect();
    let ys: Vec<f64> = trace.iter().map(|&(_, v)| v).collect();
    slope_t_test(&xs, &ys)
}

fn csv_bool(v: bool) -> &'static str {
    if v {
        "true"
    } else {
        "false"
    }
}

/// Records table as CSV. The `seconds` column is zeroed unless
/// `include_timings` is set, keeping default exports byte-stable.
pub fn records_to_csv(records: &[RunRecord], include_timings: bool) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "sigma",
        "replicate",
        "n",
        "a",
        "b",
        "seed",
        "graph_hash",
        "method",
        "accuracy",
        "seconds",
        "c_sigma",
        "t_exact",
        "recoverable",
        "recovered",
        "error",
    ])?;
    for r in records {
        let seconds = if include_timings { r.seconds } else { 0.0 };
        w.write_record([
            r.sigma.to_string(),
            r.replicate.to_string(),
            r.n.to_string(),
            r.a.to_string(),
            r.b.to_string(),
            r.seed.to_string(),
            r.graph_hash.to_string(),
            r.method.name().to_string(),
            r.accuracy.map(|a| a.to_string()).unwrap_or_default(),
            seconds.to_string(),
            r.c_sigma.to_string(),
            r.t_exact.to_string(),
            csv_bool(r.recoverable).to_string(),
            csv_bool(r.recovered).to_string(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Config(format!("csv buffer: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Summary table as CSV.
pub fn summary_to_csv(rows: &[SummaryRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "method",
        "sigma",
        "mean_accuracy",
        "standard_error",
        "n_runs",
        "n_failures",
    ])?;
    for r in rows {
        w.write_record([
            r.method.name().to_string(),
            r.sigma.to_string(),
            r.mean_accuracy.to_string(),
            r.standard_error.to_string(),
            r.n_runs.to_string(),
            r.n_failures.to_string(),
        ])?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Config(format!("csv buffer: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// JSON manifest capturing the full sweep configuration (including the
/// master seed), sufficient to reproduce every record.
pub fn manifest_json(cfg: &BenchConfig) -> Result<String> {
    Ok(serde_json::to_string_pretty(cfg)?)
}

/// Threshold-validation dots as CSV plot data.
pub fn dots_to_csv(v: &ThresholdValidation) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["a", "b_times_c", "sigma", "t_exact", "matched"])?;
    for d in &v.dots {
        w.write_record([
            d.a.to_string(),
            d.b_times_c.to_string(),
            d.sigma.to_string(),
            d.t_exact.to_string(),
            csv_bool(d.matched).to_string(),
        ])?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Config(format!("csv buffer: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
