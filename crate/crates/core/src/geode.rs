//! Iterative geometric denoising: alternate a community spectral pass
//! and a geometry spectral pass over the current weighted graph, flag
//! edges by score percentiles, shrink the flagged edges and boost the
//! most confident ones under a decaying schedule, and stop when the
//! community confidence objective plateaus or the edge set empties.
//!
//! Also houses the distance-vs-weight noise diagnostic: sample node
//! pairs, fit a linear model of clipped edge confidence against latent
//! distance, and report the mean squared residual.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::baselines::{bethe_hessian_cluster, motif_laplacian_cluster, nonbacktracking_cluster};
use crate::clustering::{ClusteringResult, SoftAssignment};
use crate::error::{Error, Result};
use crate::graph::{LabelVector, WeightedGraph};
use crate::maso::{maso_cluster, MasoConfig};
use crate::seeding::derive_seed;
use crate::stats::{empirical_quantile, ols_fit, slope_t_test, SlopeTest};

/// Default number of node pairs sampled by the noise diagnostic.
pub const DEFAULT_NOISE_PAIRS: usize = 2000;

/// Spectral clustering routine used inside the denoising loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralRoutine {
    Maso,
    BetheHessian,
    Nonbacktracking,
    MotifLaplacian,
}

impl SpectralRoutine {
    /// Runs the routine with `k` clusters. `maso` supplies the embedding
    /// parameters when the routine is `Maso`; its own `k` field is
    /// overridden by the `k` given here.
    pub fn cluster(
        self,
        g: &WeightedGraph,
        k: usize,
        maso: &MasoConfig,
        seed: u64,
    ) -> Result<ClusteringResult> {
        match self {
            SpectralRoutine::Maso => {
                let mut cfg = *maso;
                cfg.k = k;
                maso_cluster(g, &cfg, seed)
            }
            SpectralRoutine::BetheHessian => bethe_hessian_cluster(g, k, seed),
            SpectralRoutine::Nonbacktracking => nonbacktracking_cluster(g, k, seed),
            SpectralRoutine::MotifLaplacian => motif_laplacian_cluster(g, k, seed),
        }
    }

    /// Largest cluster count the routine can produce on `g`. Operator
    /// methods lose one spectral direction per node whose incident
    /// weights are all zero, so those nodes do not count.
    fn max_clusters(self, g: &WeightedGraph) -> usize {
        match self {
            SpectralRoutine::BetheHessian | SpectralRoutine::Nonbacktracking => g.n(),
            SpectralRoutine::Maso | SpectralRoutine::MotifLaplacian => (0..g.n())
                .filter(|&i| g.neighbors(i).iter().any(|&(_, w)| w > 0.0))
                .count(),
        }
    }
}

/// Schedule applied to the shrink/boost rates each round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayMode {
    /// `rate(t) = rate0 * max(0, 1 - (t - warmup) / anneal_steps)`;
    /// rates are frozen at `rate0` for the first `warmup_rounds` rounds.
    Linear,
    /// `rate(t) = rate0 / (1 + t)`, the square-summable-but-not-summable
    /// schedule required for asymptotic convergence; the warmup gate
    /// applies here too.
    InverseLinear,
}

/// Denoising-loop parameters. The defaults are the synthetic-benchmark
/// settings; the embedded `maso` block configures both spectral passes
/// when they use the attention pipeline.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeoDeConfig {
    /// Number of communities for the community pass.
    pub k: usize,
    /// Number of geometry balls for the geometry pass; must exceed `k`.
    pub b: usize,
    /// Shrink percentile cut on community scores, in (0, 1).
    pub tau_c: f64,
    /// Shrink percentile cut on geometry scores, in (0, 1).
    pub tau_g: f64,
    /// Boost percentile cut on community scores; strictly above `tau_c`.
    pub tau_c_plus: f64,
    /// Boost percentile cut on geometry scores; strictly above `tau_g`.
    pub tau_g_plus: f64,
    /// Initial shrink rate for community-flagged edges, in [0, 1].
    pub shrink_comm: f64,
    /// Initial shrink rate for geometry-flagged edges, in [0, 1].
    pub shrink_geo: f64,
    /// Initial boost rate for community-flagged edges, nonnegative.
    pub boost_comm: f64,
    /// Initial boost rate for geometry-flagged edges, nonnegative.
    pub boost_geo: f64,
    pub decay_mode: DecayMode,
    /// Rounds over which the linear schedule anneals to zero.
    pub anneal_steps: usize,
    /// Rounds at the start with undecayed rates.
    pub warmup_rounds: usize,
    /// Lower weight clamp; must be positive so no edge ever vanishes.
    pub w_min: f64,
    /// Upper weight clamp.
    pub w_max: f64,
    /// Maximum number of denoising rounds.
    pub t_max: usize,
    /// Plateau length (number of unchanged rounds) that stops the loop.
    pub patience: usize,
    /// Objective tolerance for the plateau test.
    pub tol: f64,
    pub spec_comm: SpectralRoutine,
    pub spec_geom: SpectralRoutine,
    /// Ratio bound: geometry rates should stay within `gamma` times the
    /// community rates. Violations warn rather than fail.
    pub gamma: f64,
    pub maso: MasoConfig,
    pub seed: u64,
}

impl Default for GeoDeConfig {
    fn default() -> Self {
        Self {
            k: 2,
            b: 32,
            tau_c: 0.90,
            tau_g: 0.90,
            tau_c_plus: 0.97,
            tau_g_plus: 0.97,
            shrink_comm: 1.00,
            shrink_geo: 0.80,
            boost_comm: 0.60,
            boost_geo: 0.40,
            decay_mode: DecayMode::Linear,
            anneal_steps: 6,
            warmup_rounds: 2,
            w_min: 5e-2,
            w_max: 4.0,
            t_max: 50,
            patience: 7,
            tol: 1e-5,
            spec_comm: SpectralRoutine::Maso,
            spec_geom: SpectralRoutine::Maso,
            gamma: 1.0,
            maso: MasoConfig::default(),
            seed: 0,
        }
    }
}

impl GeoDeConfig {
    /// Validates hard constraints and returns soft warnings (currently
    /// only violations of the geometry/community rate ratio bound).
    pub fn validate(&self) -> Result<Vec<String>> {
        if self.k < 2 {
            return Err(Error::Config(format!(
                "k must be at least 2, got {}",
                self.k
            )));
        }
        if self.b <= self.k {
            return Err(Error::Config(format!(
                "geometry balls b = {} must exceed communities k = {}",
                self.b, self.k
            )));
        }
        for (name, tau) in [
            ("tau_c", self.tau_c),
            ("tau_g", self.tau_g),
            ("tau_c_plus", self.tau_c_plus),
            ("tau_g_plus", self.tau_g_plus),
        ] {
            if !(tau > 0.0 && tau < 1.0) {
                return Err(Error::Config(format!(
                    "{name} must lie strictly inside (0, 1), got {tau}"
                )));
            }
        }
        if self.tau_c_plus <= self.tau_c {
            return Err(Error::Config(format!(
                "tau_c_plus = {} must exceed tau_c = {}",
                self.tau_c_plus, self.tau_c
            )));
        }
        if self.tau_g_plus <= self.tau_g {
            return Err(Error::Config(format!(
                "tau_g_plus = {} must exceed tau_g = {}",
                self.tau_g_plus, self.tau_g
            )));
        }
        for (name, rate) in [
            ("shrink_comm", self.shrink_comm),
            ("shrink_geo", self.shrink_geo),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::Config(format!(
                    "{name} must lie in [0, 1], got {rate}"
                )));
            }
        }
        for (name, rate) in [
            ("boost_comm", self.boost_comm),
            ("boost_geo", self.boost_geo),
        ] {
            if !(rate >= 0.0 && rate.is_finite()) {
                return Err(Error::Config(format!(
                    "{name} must be a nonnegative finite number, got {rate}"
                )));
            }
        }
        if !(self.w_min > 0.0 && self.w_min < self.w_max && self.w_max.is_finite()) {
            return Err(Error::Config(format!(
                "weight bounds need 0 < w_min < w_max, got [{}, {}]",
                self.w_min, self.w_max
            )));
        }
        if self.anneal_steps == 0 {
            return Err(Error::Config("anneal_steps must be at least 1".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if !(self.tol >= 0.0 && self.tol.is_finite()) {
            return Err(Error::Config(format!(
                "tol must be a nonnegative finite number, got {}",
                self.tol
            )));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::Config(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        let mut maso = self.maso;
        maso.k = self.k;
        maso.validate()?;

        let mut warnings = Vec::new();
        if self.shrink_geo > self.gamma * self.shrink_comm {
            warnings.push(format!(
                "shrink_geo = {} exceeds gamma * shrink_comm = {}; geometry shrinking \
                 dominates the community rate",
                self.shrink_geo,
                self.gamma * self.shrink_comm
            ));
        }
        if self.boost_geo > self.gamma * self.boost_comm {
            warnings.push(format!(
                "boost_geo = {} exceeds gamma * boost_comm = {}; geometry boosting \
                 dominates the community rate",
                self.boost_geo,
                self.gamma * self.boost_comm
            ));
        }
        Ok(warnings)
    }
}

/// Output of one community or geometry pass: the clustering, per-edge
/// scores, and the percentile-selected shrink/boost edge sets.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub soft: SoftAssignment,
    pub hard: LabelVector,
    /// Scores keyed by `(i, j)` with `i < j`. The community pass scores
    /// every edge; the geometry pass scores only same-ball edges.
    pub scores: BTreeMap<(usize, usize), f64>,
    pub shrink_set: BTreeSet<(usize, usize)>,
    pub boost_set: BTreeSet<(usize, usize)>,
    pub notes: Vec<String>,
}

impl StepResult {
    /// With nested percentile cuts the boost set can never escape the
    /// shrink set; exposed so runs can assert it round by round.
    pub fn boost_within_shrink(&self) -> bool {
        self.boost_set.is_subset(&self.shrink_set)
    }
}

/// Same-block posterior per edge: `p_ij = sum_k Q_ik Q_jk`.
pub fn community_scores(
    soft: &SoftAssignment,
    g: &WeightedGraph,
) -> Result<BTreeMap<(usize, usize), f64>> {
    if soft.n() != g.n() {
        return Err(Error::DimensionMismatch(format!(
            "assignment covers {} nodes but the graph has {}",
            soft.n(),
            g.n()
        )));
    }
    let mut scores = BTreeMap::new();
    for (i, j, _) in g.edges() {
        let p: f64 = soft
            .row(i)
            .iter()
            .zip(soft.row(j))
            .map(|(a, b)| a * b)
            .sum();
        scores.insert((i, j), p);
    }
    Ok(scores)
}

/// Geometry confidence per same-ball edge:
/// `c_ij = (Q[i, z(i)] + Q[j, z(j)]) / 2` when `z(i) = z(j)`. Edges whose
/// endpoints land in different balls are left unscored.
pub fn geometry_scores(
    soft: &SoftAssignment,
    hard: &LabelVector,
    g: &WeightedGraph,
) -> Result<BTreeMap<(usize, usize), f64>> {
    if soft.n() != g.n() || hard.len() != g.n() {
        return Err(Error::DimensionMismatch(format!(
            "assignment covers {} nodes, labels {}, graph {}",
            soft.n(),
            hard.len(),
            g.n()
        )));
    }
    let mut scores = BTreeMap::new();
    for (i, j, _) in g.edges() {
        let (zi, zj) = (hard.get(i), hard.get(j));
        if zi == zj {
            scores.insert((i, j), 0.5 * (soft.prob(i, zi) + soft.prob(j, zj)));
        }
    }
    Ok(scores)
}

/// Splits scored edges by two percentile cuts: edges strictly above the
/// empirical `tau` quantile form the first set, strictly above the
/// `tau_plus` quantile the second. All-tied scores produce empty sets,
/// and nested cuts (`tau_plus >= tau`) make the second set a subset of
/// the first.
pub fn percentile_sets(
    scores: &BTreeMap<(usize, usize), f64>,
    tau: f64,
    tau_plus: f64,
) -> (BTreeSet<(usize, usize)>, BTreeSet<(usize, usize)>) {
    let values: Vec<f64> = scores.values().copied().collect();
    let (Some(cut), Some(cut_plus)) = (
        empirical_quantile(&values, tau),
        empirical_quantile(&values, tau_plus),
    ) else {
        return (BTreeSet::new(), BTreeSet::new());
    };
    let first = scores
        .iter()
        .filter(|&(_, &v)| v > cut)
        .map(|(&e, _)| e)
        .collect();
    let second = scores
        .iter()
        .filter(|&(_, &v)| v > cut_plus)
        .map(|(&e, _)| e)
        .collect();
    (first, second)
}

/// Community pass: cluster into `k` communities, score every edge by the
/// same-block posterior, and cut the score distribution at `tau_c` /
/// `tau_c_plus`.
pub fn c_step(g: &WeightedGraph, cfg: &GeoDeConfig, seed: u64) -> Result<StepResult> {
    if g.edge_count() == 0 {
        return Err(Error::InsufficientData(
            "community pass needs a graph with at least one edge".into(),
        ));
    }
    let res = cfg.spec_comm.cluster(g, cfg.k, &cfg.maso, seed)?;
    let scores = community_scores(&res.soft, g)?;
    let (shrink_set, boost_set) = percentile_sets(&scores, cfg.tau_c, cfg.tau_c_plus);
    let step = StepResult {
        soft: res.soft,
        hard: res.hard,
        scores,
        shrink_set,
        boost_set,
        notes: res.diagnostics.notes,
    };
    debug_assert!(step.boost_within_shrink());
    Ok(step)
}

/// Geometry pass: cluster into `b` balls (reduced to the feasible
/// maximum when the graph cannot support that many spectral directions),
/// score same-ball edges by mean endpoint confidence, and cut at `tau_g`
/// / `tau_g_plus` over the same-ball subset.
pub fn g_step(g: &WeightedGraph, cfg: &GeoDeConfig, seed: u64) -> Result<StepResult> {
    if g.edge_count() == 0 {
        return Err(Error::InsufficientData(
            "geometry pass needs a graph with at least one edge".into(),
        ));
    }
    let cap = cfg.spec_geom.max_clusters(g);
    if cap < 2 {
        return Err(Error::Config(format!(
            "graph supports only {cap} geometry balls; at least 2 required"
        )));
    }
    let b = cfg.b.min(cap);
    let mut notes = Vec::new();
    if b < cfg.b {
        notes.push(format!(
            "geometry balls reduced from {} to {b}: the graph has only {cap} usable \
             spectral directions",
            cfg.b
        ));
    }
    let res = cfg.spec_geom.cluster(g, b, &cfg.maso, seed)?;
    let scores = geometry_scores(&res.soft, &res.hard, g)?;
    let (shrink_set, boost_set) = percentile_sets(&scores, cfg.tau_g, cfg.tau_g_plus);
    notes.extend(res.diagnostics.notes);
    let step = StepResult {
        soft: res.soft,
        hard: res.hard,
        scores,
        shrink_set,
        boost_set,
        notes,
    };
    debug_assert!(step.boost_within_shrink());
    Ok(step)
}

fn decay_multiplier(cfg: &GeoDeConfig, t: usize) -> f64 {
    if t <= cfg.warmup_rounds {
        return 1.0;
    }
    match cfg.decay_mode {
        DecayMode::Linear => {
            let t_eff = (t - cfg.warmup_rounds) as f64;
            (1.0 - t_eff / cfg.anneal_steps as f64).max(0.0)
        }
        DecayMode::InverseLinear => 1.0 / (1.0 + t as f64),
    }
}

/// Rates for round `t` (1-based). The schedule is a function of the
/// *initial* rates and the round index — pass the round-0 rates, not the
/// previous round's output. Both rates share one multiplier, so their
/// ratio is preserved, and the result is never negative.
pub fn decay(lambda_s: f64, lambda_b: f64, t: usize, cfg: &GeoDeConfig) -> (f64, f64) {
    let m = decay_multiplier(cfg, t);
    (lambda_s * m, lambda_b * m)
}

/// Direction of a reweighting pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RescaleMode {
    /// `w <- max(w_min, (1 - lambda) w)`.
    Shrink,
    /// `w <- min(w_max, (1 + lambda) w)`.
    Boost,
}

/// Applies one multiplicative update to every edge in `edge_set`
/// (duplicates collapse to one application) and returns the new graph.
/// Untouched edges keep their exact weights.
pub fn rescale(
    g: &WeightedGraph,
    edge_set: &[(usize, usize)],
    lambda: f64,
    mode: RescaleMode,
    w_min: f64,
    w_max: f64,
) -> Result<WeightedGraph> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Config(format!(
            "rescale rate must be a nonnegative finite number, got {lambda}"
        )));
    }
    if !(w_min > 0.0 && w_min < w_max) {
        return Err(Error::Config(format!(
            "weight bounds need 0 < w_min < w_max, got [{w_min}, {w_max}]"
        )));
    }
    let unique: BTreeSet<(usize, usize)> = edge_set
        .iter()
        .map(|&(i, j)| (i.min(j), i.max(j)))
        .collect();
    let mut out = g.clone();
    for (i, j) in unique {
        let w = out.weight(i, j).ok_or(Error::EdgeNotFound(i, j))?;
        let new = match mode {
            RescaleMode::Shrink => w_min.max((1.0 - lambda) * w),
            RescaleMode::Boost => w_max.min((1.0 + lambda) * w),
        };
        out.set_weight(i, j, new)?;
    }
    Ok(out)
}

/// Plateau test: true iff the history already holds `patience + 1`
/// objectives and the last `patience + 1` of them all lie within `tol`
/// of the most recent one.
pub fn no_progress(history: &[f64], patience: usize, tol: f64) -> bool {
    if history.len() < patience + 1 {
        return false;
    }
    let last = *history.last().expect("non-empty history");
    history[history.len() - patience - 1..]
        .iter()
        .all(|&v| (v - last).abs() <= tol)
}

/// One row of the run trace; `lambda_s` / `lambda_b` are the strongest
/// per-source rates in effect that round, the `lambda_*` fields the full
/// per-source breakdown. `min_weight` / `max_weight` describe the edge
/// weights after the round's reweighting.
#[derive(Debug, Clone, serde::Serialize)]
pub struct TraceRecord {
    pub t: usize,
    pub objective: f64,
    pub lambda_s: f64,
    pub lambda_b: f64,
    pub lambda_shrink_comm: f64,
    pub lambda_shrink_geo: f64,
    pub lambda_boost_comm: f64,
    pub lambda_boost_geo: f64,
    pub n_shrink: usize,
    pub n_boost: usize,
    pub n_edges: usize,
    pub noise: Option<f64>,
    pub seconds: f64,
    pub min_weight: f64,
    pub max_weight: f64,
    pub boost_within_shrink: bool,
}

/// Full run trace: one record per completed round plus run-level notes.
#[derive(Debug, Clone, Default, serde::Serialize)]
pub struct GeoDeTrace {
    pub records: Vec<TraceRecord>,
    pub notes: Vec<String>,
    /// Set when a later round failed and the best earlier state was
    /// returned instead.
    pub failure: Option<String>,
    /// True when the loop stopped before `t_max` rounds.
    pub stopped_early: bool,
}

impl GeoDeTrace {
    fn push_note(&mut self, note: String) {
        if !self.notes.contains(&note) {
            self.notes.push(note);
        }
    }

    /// Zeroes all wall-clock fields, for byte-stable output.
    pub fn clear_timings(&mut self) {
        for r in &mut self.records {
            r.seconds = 0.0;
        }
    }

    /// CSV with one row per round. The `seconds` column is written as 0
    /// unless `include_timings` is set, so default output stays
    /// byte-identical across runs; `noise` is empty when not measured.
    pub fn to_csv_string(&self, include_timings: bool) -> String {
        let mut out =
            String::from("t,objective,lambda_s,lambda_b,n_shrink,n_boost,n_edges,noise,seconds\n");
        for r in &self.records {
            let noise = r.noise.map(|v| v.to_string()).unwrap_or_default();
            let seconds = if include_timings { r.seconds } else { 0.0 };
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.t,
                r.objective,
                r.lambda_s,
                r.lambda_b,
                r.n_shrink,
                r.n_boost,
                r.n_edges,
                noise,
                seconds
            )
            .expect("writing to a String cannot fail");
        }
        out
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Final state of a denoising run.
#[derive(Debug, Clone)]
pub struct GeoDeOutcome {
    pub soft: SoftAssignment,
    pub hard: LabelVector,
    /// The reweighted graph after the last completed round.
    pub graph: WeightedGraph,
    pub trace: GeoDeTrace,
    /// Confidence objective of the returned assignment.
    pub objective: f64,
    /// Number of completed rounds.
    pub iterations: usize,
}

/// Optional per-round noise measurement: latent coordinates plus the
/// number of diagnostic pairs to sample.
#[derive(Debug, Clone, Copy)]
pub struct NoiseProbe<'a> {
    pub coords: &'a DMatrix<f64>,
    pub pairs: usize,
}

/// Stacks per-node coordinate rows into the matrix form the noise
/// probe expects. Rows must be non-empty and of equal length.
pub fn positions_to_matrix(positions: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = positions.len();
    let d = positions.first().map(|r| r.len()).unwrap_or(0);
    if n == 0 || d == 0 {
        return Err(Error::InsufficientData(
            "coordinate rows must be non-empty".into(),
        ));
    }
    if let Some((i, row)) = positions.iter().enumerate().find(|(_, r)| r.len() != d) {
        return Err(Error::DimensionMismatch(format!(
            "coordinate row {i} has length {}, expected {d}",
            row.len()
        )));
    }
    Ok(DMatrix::from_fn(n, d, |i, j| positions[i][j]))
}

struct ReweightOutcome {
    graph: WeightedGraph,
    n_shrink: usize,
    n_boost: usize,
}

/// Shrinks the union of the two shrink sets, then boosts the union of
/// the two boost sets on the already-shrunk weights, so an edge flagged
/// for both ends up boosted. An edge flagged by both sources takes the
/// stronger rate.
fn apply_reweight(
    g: &WeightedGraph,
    comm: &StepResult,
    geom: &StepResult,
    rates: &RoundRates,
    w_min: f64,
    w_max: f64,
) -> Result<ReweightOutcome> {
    let mut out = g.clone();
    let shrink_union: BTreeSet<(usize, usize)> =
        comm.shrink_set.union(&geom.shrink_set).copied().collect();
    for &(i, j) in &shrink_union {
        let mut lambda: f64 = 0.0;
        if comm.shrink_set.contains(&(i, j)) {
            lambda = lambda.max(rates.shrink_comm);
        }
        if geom.shrink_set.contains(&(i, j)) {
            lambda = lambda.max(rates.shrink_geo);
        }
        let w = out.weight(i, j).ok_or(Error::EdgeNotFound(i, j))?;
        out.set_weight(i, j, w_min.max((1.0 - lambda) * w))?;
    }
    let boost_union: BTreeSet<(usize, usize)> =
        comm.boost_set.union(&geom.boost_set).copied().collect();
    for &(i, j) in &boost_union {
        let mut lambda: f64 = 0.0;
        if comm.boost_set.contains(&(i, j)) {
            lambda = lambda.max(rates.boost_comm);
        }
        if geom.boost_set.contains(&(i, j)) {
            lambda = lambda.max(rates.boost_geo);
        }
        let w = out.weight(i, j).ok_or(Error::EdgeNotFound(i, j))?;
        out.set_weight(i, j, w_max.min((1.0 + lambda) * w))?;
    }
    Ok(ReweightOutcome {
        graph: out,
        n_shrink: shrink_union.len(),
        n_boost: boost_union.len(),
    })
}

struct RoundRates {
    shrink_comm: f64,
    shrink_geo: f64,
    boost_comm: f64,
    boost_geo: f64,
}

fn weight_range(g: &WeightedGraph) -> (f64, f64) {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for (_, _, w) in g.edges() {
        min = min.min(w);
        max = max.max(w);
    }
    if min > max {
        (0.0, 0.0)
    } else {
        (min, max)
    }
}

/// Full denoising run without noise measurement.
pub fn run_geode(g: &WeightedGraph, cfg: &GeoDeConfig) -> Result<GeoDeOutcome> {
    run_geode_probed(g, cfg, None)
}

/// Full denoising run. When `probe` is given, each round additionally
/// measures the distance-vs-weight noise of the freshly reweighted graph
/// and stores it in the trace.
///
/// Per round: community pass, geometry pass (both reading the same
/// graph), rate decay, shrink-then-boost reweighting, then the stopping
/// tests (objective plateau or empty edge set). The returned assignment
/// is the last community pass; if a later round's pass fails, the
/// highest-objective earlier state is returned and the failure recorded
/// in the trace. A first-round failure is an error. Bit-reproducible for
/// a fixed `(graph, config)`: both passes reuse fixed derived seeds, so
/// round-to-round changes reflect the evolving weights only.
pub fn run_geode_probed(
    g: &WeightedGraph,
    cfg: &GeoDeConfig,
    probe: Option<NoiseProbe<'_>>,
) -> Result<GeoDeOutcome> {
    let warnings = cfg.validate()?;
    let mut trace = GeoDeTrace::default();
    for w in warnings {
        trace.push_note(w);
    }
    let comm_seed = derive_seed(cfg.seed, &[1]);
    let geom_seed = derive_seed(cfg.seed, &[2]);

    if cfg.t_max == 0 {
        let res = cfg.spec_comm.cluster(g, cfg.k, &cfg.maso, comm_seed)?;
        let objective = res.soft.confidence_objective();
        for n in res.diagnostics.notes {
            trace.push_note(n);
        }
        return Ok(GeoDeOutcome {
            soft: res.soft,
            hard: res.hard,
            graph: g.clone(),
            trace,
            objective,
            iterations: 0,
        });
    }

    let mut graph = g.clone();
    let mut history: Vec<f64> = Vec::new();
    let mut last: Option<(f64, SoftAssignment, LabelVector)> = None;
    let mut best: Option<(f64, SoftAssignment, LabelVector)> = None;

    for t in 1..=cfg.t_max {
        let round_start = Instant::now();
        let comm = match c_step(&graph, cfg, comm_seed) {
            Ok(step) => step,
            Err(e) => {
                if best.is_none() {
                    return Err(e);
                }
                trace.failure = Some(format!("round {t}: community pass failed: {e}"));
                break;
            }
        };
        let geom = match g_step(&graph, cfg, geom_seed) {
            Ok(step) => step,
            Err(e) => {
                if best.is_none() {
                    return Err(e);
                }
                trace.failure = Some(format!("round {t}: geometry pass failed: {e}"));
                break;
            }
        };
        for n in comm.notes.iter().chain(geom.notes.iter()) {
            trace.push_note(n.clone());
        }

        let objective = comm.soft.confidence_objective();
        history.push(objective);
        if best.as_ref().map_or(true, |(b, _, _)| objective > *b) {
            best = Some((objective, comm.soft.clone(), comm.hard.clone()));
        }
        last = Some((objective, comm.soft.clone(), comm.hard.clone()));

        let mult = decay_multiplier(cfg, t);
        let rates = RoundRates {
            shrink_comm: cfg.shrink_comm * mult,
            shrink_geo: cfg.shrink_geo * mult,
            boost_comm: cfg.boost_comm * mult,
            boost_geo: cfg.boost_geo * mult,
        };
        let boost_within = comm.boost_within_shrink() && geom.boost_within_shrink();
        let rw = apply_reweight(&graph, &comm, &geom, &rates, cfg.w_min, cfg.w_max)?;
        graph = rw.graph;

        let noise = match probe {
            Some(p) => Some(
                geometric_noise_metric(
                    &graph,
                    p.coords,
                    p.pairs,
                    derive_seed(cfg.seed, &[3, t as u64]),
                )?
                .noise,
            ),
            None => None,
        };

        let (min_weight, max_weight) = weight_range(&graph);
        trace.records.push(TraceRecord {
            t,
            objective,
            lambda_s: rates.shrink_comm.max(rates.shrink_geo),
            lambda_b: rates.boost_comm.max(rates.boost_geo),
            lambda_shrink_comm: rates.shrink_comm,
            lambda_shrink_geo: rates.shrink_geo,
            lambda_boost_comm: rates.boost_comm,
            lambda_boost_geo: rates.boost_geo,
            n_shrink: rw.n_shrink,
            n_boost: rw.n_boost,
            n_edges: graph.edge_count(),
            noise,
            seconds: round_start.elapsed().as_secs_f64(),
            min_weight,
            max_weight,
            boost_within_shrink: boost_within,
        });

        if no_progress(&history, cfg.patience, cfg.tol) {
            trace.stopped_early = true;
            break;
        }
        // Reweighting clamps at w_min > 0 and never deletes edges, so
        // this only fires for graphs that somehow lost all weight.
        if graph.edge_count() == 0 || graph.edges().iter().all(|&(_, _, w)| w <= 0.0) {
            trace.push_note("edge set empty after reweighting".into());
            trace.stopped_early = true;
            break;
        }
    }

    let (objective, soft, hard) = if trace.failure.is_some() {
        best.expect("failure marker implies a completed round")
    } else {
        last.expect("t_max >= 1 and no failure implies a completed round")
    };
    let iterations = trace.records.len();
    Ok(GeoDeOutcome {
        soft,
        hard,
        graph,
        trace,
        objective,
        iterations,
    })
}

/// OLS slope of the per-round noise values against the round index, with
/// a two-sided t-test against slope zero. Needs at least three rounds
/// with a measured noise value.
pub fn trace_noise_slope(trace: &GeoDeTrace) -> Result<SlopeTest> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for r in &trace.records {
        if let Some(n) = r.noise {
            xs.push(r.t as f64);
            ys.push(n);
        }
    }
    slope_t_test(&xs, &ys)
}

/// One sampled node pair in the noise diagnostic.
#[derive(Debug, Clone, Copy)]
pub struct DiagnosticPair {
    pub i: usize,
    pub j: usize,
    pub distance: f64,
    /// `min(w_ij / w_max, 1)`, zero for non-edges.
    pub confidence: f64,
    pub is_edge: bool,
}

/// Result of the noise diagnostic: the mean squared residual of the
/// linear confidence-vs-distance fit, plus the fit itself.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct NoiseEstimate {
    /// Mean squared residual — the noise value.
    pub noise: f64,
    /// Slope of the fitted line (negative when confidence decays with
    /// distance).
    pub slope: f64,
    pub intercept: f64,
    /// True when every sampled distance coincided; the fit degrades to
    /// the best constant model.
    pub degenerate_distances: bool,
    pub n_pairs: usize,
}

/// Stratified diagnostic sample: `ceil(m / 2)` uniform draws from the
/// edge list (with replacement) and `floor(m / 2)` uniform non-edges.
/// When the graph is complete the non-edge stratum falls back to edge
/// draws. Deterministic per seed.
pub fn sample_diagnostic_pairs(
    g: &WeightedGraph,
    coords: &DMatrix<f64>,
    m: usize,
    seed: u64,
) -> Result<Vec<DiagnosticPair>> {
    let n = g.n();
    if m < 2 {
        return Err(Error::InsufficientData(format!(
            "noise diagnostic needs at least 2 pairs, got {m}"
        )));
    }
    if coords.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "coordinates cover {} nodes but the graph has {n}",
            coords.nrows()
        )));
    }
    if n < 2 {
        return Err(Error::InsufficientData(
            "noise diagnostic needs at least 2 nodes".into(),
        ));
    }
    let edges = g.edges();
    if edges.is_empty() {
        return Err(Error::InsufficientData(
            "noise diagnostic needs a graph with edges".into(),
        ));
    }
    let w_max = g.max_weight().expect("non-empty edge list");
    if !(w_max > 0.0) {
        return Err(Error::InsufficientData(
            "noise diagnostic needs a positive maximum weight".into(),
        ));
    }

    let distance = |i: usize, j: usize| -> f64 {
        let mut acc = 0.0;
        for c in 0..coords.ncols() {
            let d = coords[(i, c)] - coords[(j, c)];
            acc += d * d;
        }
        acc.sqrt()
    };

    let mut rng = StdRng::seed_from_u64(seed);
    let n_edge_samples = m.div_ceil(2);
    let n_non_samples = m / 2;
    let mut pairs = Vec::with_capacity(m);
    for _ in 0..n_edge_samples {
        let (i, j, w) = edges[rng.gen_range(0..edges.len())];
        pairs.push(DiagnosticPair {
            i,
            j,
            distance: distance(i, j),
            confidence: (w / w_max).min(1.0),
            is_edge: true,
        });
    }

    let total_pairs = n * (n - 1) / 2;
    let mut remaining = n_non_samples;
    if edges.len() >= total_pairs {
        // Complete graph: no non-edges exist, keep sampling edges.
        for _ in 0..remaining {
            let (i, j, w) = edges[rng.gen_range(0..edges.len())];
            pairs.push(DiagnosticPair {
                i,
                j,
                distance: distance(i, j),
                confidence: (w / w_max).min(1.0),
                is_edge: true,
            });
        }
        remaining = 0;
    }
    let mut attempts_left = 100 * m + 1000;
    while remaining > 0 && attempts_left > 0 {
        attempts_left -= 1;
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if a == b {
            continue;
        }
        let (i, j) = (a.min(b), a.max(b));
        if g.has_edge(i, j) {
            continue;
        }
        pairs.push(DiagnosticPair {
            i,
            j,
            distance: distance(i, j),
            confidence: 0.0,
            is_edge: false,
        });
        remaining -= 1;
    }
    if remaining > 0 {
        // Rejection kept hitting edges (near-complete graph): enumerate
        // the complement once and sample from it exactly.
        let complement: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .filter(|&(i, j)| !g.has_edge(i, j))
            .collect();
        for _ in 0..remaining {
            if complement.is_empty() {
                let (i, j, w) = edges[rng.gen_range(0..edges.len())];
                pairs.push(DiagnosticPair {
                    i,
                    j,
                    distance: distance(i, j),
                    confidence: (w / w_max).min(1.0),
                    is_edge: true,
                });
            } else {
                let (i, j) = complement[rng.gen_range(0..complement.len())];
                pairs.push(DiagnosticPair {
                    i,
                    j,
                    distance: distance(i, j),
                    confidence: 0.0,
                    is_edge: false,
                });
            }
        }
    }
    Ok(pairs)
}

/// Fits `confidence = intercept + slope * distance` by least squares on
/// `(distance, confidence)` pairs and returns the mean squared residual
/// as the noise value. An all-equal distance sample degrades to the best
/// constant model (slope 0) and is flagged.
pub fn clipped_linear_noise(pairs: &[(f64, f64)]) -> Result<NoiseEstimate> {
    if pairs.len() < 2 {
        return Err(Error::InsufficientData(
            "noise fit needs at least 2 pairs".into(),
        ));
    }
    let xs: Vec<f64> = pairs.iter().map(|&(d, _)| d).collect();
    let ys: Vec<f64> = pairs.iter().map(|&(_, c)| c).collect();
    let spread = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let fit = ols_fit(&xs, &ys)?;
    Ok(NoiseEstimate {
        noise: fit.mean_squared_residual,
        slope: fit.slope,
        intercept: fit.intercept,
        degenerate_distances: spread == 0.0,
        n_pairs: pairs.len(),
    })
}

/// Distance-vs-weight noise of a graph relative to node coordinates:
/// sample a stratified set of `m` node pairs, fit a linear model of
/// clipped confidence `min(w / w_max, 1)` against Euclidean distance,
/// and return the mean squared residual (plus the fit).
pub fn geometric_noise_metric(
    g: &WeightedGraph,
    coords: &DMatrix<f64>,
    m: usize,
    seed: u64,
) -> Result<NoiseEstimate> {
    let sample = sample_diagnostic_pairs(g, coords, m, seed)?;
    let pairs: Vec<(f64, f64)> = sample.iter().map(|p| (p.distance, p.confidence)).collect();
    clipped_linear_noise(&pairs)
}
