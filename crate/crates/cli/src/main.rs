//! `geode` — command-line driver for latent-kernel graph generation,
//! spectral clustering, iterative edge denoising, belief propagation,
//! benchmark sweeps, noise tracing, and recovery-threshold reports.
//!
//! Configuration precedence everywhere: command-line flags beat the
//! `--config` JSON file, which beats the built-in defaults. Seeds fall
//! back to the `GEODE_SEED` environment variable before the file.
//! Runtime failures exit 1 with a JSON error object on stderr; flag
//! errors exit 2 with usage text.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use geode_core::baselines::{
    bethe_hessian_cluster, motif_laplacian_cluster, nonbacktracking_cluster, weighted_bp, BpConfig,
};
use geode_core::bench::{
    dots_to_csv, manifest_json, records_to_csv, run_benchmark, summary_to_csv,
    threshold_validation, BenchConfig, BenchMethod,
};
use geode_core::clustering::ClusteringResult;
use geode_core::geode::{
    positions_to_matrix, run_geode, run_geode_probed, trace_noise_slope, GeoDeConfig, NoiseProbe,
    DEFAULT_NOISE_PAIRS,
};
use geode_core::ingest::{load_labels_file, write_labels_file};
use geode_core::maso::{maso_cluster, MasoConfig};
use geode_core::sbm::{
    estimate_kernel_constant, load_nodes_file, recovery_thresholds, sample_lk_sbm,
    write_nodes_file, SbmParams, KERNEL_MC_SAMPLES,
};
use geode_core::{Error, LabelVector, Result, WeightedGraph};

/// Configuration document: one block per engine, each mirroring that
/// engine's defaults. Unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
struct CliConfig {
    maso: MasoConfig,
    geode: GeoDeConfig,
    bp: BpConfig,
    bench: BenchConfig,
}

impl CliConfig {
    fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                Ok(serde_json::from_str(&text)?)
            }
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "geode",
    about = "Community recovery on geometrically confounded graphs",
    version
)]
struct Cli {
    /// Emit a single JSON object on stdout instead of human-readable text.
    #[arg(long, global = true)]
    json: bool,

    /// JSON configuration file with `maso`, `geode`, `bp`, and `bench` blocks.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a latent-kernel block-model graph and write it to files.
    Generate(GenerateArgs),
    /// Run one spectral clustering method on an edge-list graph.
    Cluster(ClusterArgs),
    /// Run the iterative denoising loop on an edge-list graph.
    Geode(GeodeArgs),
    /// Run weighted belief propagation on an edge-list graph.
    Bp(BpArgs),
    /// Run the paired benchmark sweep and write CSV plot data.
    Bench(BenchArgs),
    /// Run denoising with per-round noise measurement and a slope test.
    Noise(NoiseArgs),
    /// Report exact/weak recovery thresholds for rates (a, b) and a
    /// kernel constant (given directly or estimated from sigma).
    Thresholds(ThresholdArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// Number of nodes.
    #[arg(long)]
    n: usize,
    /// Intra-community rate coefficient (edge rate a·log n / n).
    #[arg(long)]
    a: f64,
    /// Inter-community rate coefficient.
    #[arg(long)]
    b: f64,
    /// Kernel bandwidth of the latent positions.
    #[arg(long)]
    sigma: f64,
    /// Latent dimension.
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// Force exactly balanced communities instead of fair-coin labels.
    #[arg(long)]
    balanced: bool,
    #[arg(long, env = "GEODE_SEED")]
    seed: Option<u64>,
    /// Output edge list (`i j w` lines with an `# n=` header).
    #[arg(long, value_name = "FILE")]
    out_edges: PathBuf,
    /// Optional node sidecar (`node_id label x_1 … x_d` lines).
    #[arg(long, value_name = "FILE")]
    out_nodes: Option<PathBuf>,
    /// Optional label table (`node_id label` lines).
    #[arg(long, value_name = "FILE")]
    out_labels: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ClusterMethod {
    Maso,
    #[value(name = "bethe_hessian")]
    BetheHessian,
    Nonbacktracking,
    #[value(name = "motif_laplacian")]
    MotifLaplacian,
}

#[derive(Debug, Args)]
struct ClusterArgs {
    /// Input edge list.
    #[arg(long, value_name = "FILE")]
    graph: PathBuf,
    #[arg(long, value_enum)]
    method: ClusterMethod,
    /// Number of communities.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, env = "GEODE_SEED")]
    seed: Option<u64>,
    /// Attention inverse-temperature (maso only).
    #[arg(long)]
    beta: Option<f64>,
    /// Attention clipping ceiling (maso only).
    #[arg(long)]
    clip_max: Option<f64>,
    /// Write predicted labels as a `node_id label` table.
    #[arg(long, value_name = "FILE")]
    out_labels: Option<PathBuf>,
    /// Ground-truth label table; adds permutation accuracy to the report.
    #[arg(long, value_name = "FILE")]
    truth: Option<PathBuf>,
    /// Keep wall-clock timings in the output (defaults to zeroed).
    #[arg(long)]
    timings: bool,
}

#[derive(Debug, Args)]
struct GeodeArgs {
    /// Input edge list.
    #[arg(long, value_name = "FILE")]
    graph: PathBuf,
    /// Number of communities.
    #[arg(long)]
    k: Option<usize>,
    /// Number of geometry balls.
    #[arg(long)]
    balls: Option<usize>,
    /// Maximum number of rounds.
    #[arg(long)]
    t_max: Option<usize>,
    #[arg(long, env = "GEODE_SEED")]
    seed: Option<u64>,
    /// Write predicted labels as a `node_id label` table.
    #[arg(long, value_name = "FILE")]
    out_labels: Option<PathBuf>,
    /// Write the per-round trace as CSV (plus a manifest JSON sidecar).
    #[arg(long, value_name = "FILE")]
    out_trace: Option<PathBuf>,
    /// Write the denoised graph as an edge list.
    #[arg(long, value_name = "FILE")]
    out_graph: Option<PathBuf>,
    /// Ground-truth label table; adds permutation accuracy to the report.
    #[arg(long, value_name = "FILE")]
    truth: Option<PathBuf>,
    /// Keep wall-clock timings in the output (defaults to zeroed).
    #[arg(long)]
    timings: bool,
}

#[derive(Debug, Args)]
struct BpArgs {
    /// Input edge list (for the denoised pipeline, pass the edge list
    /// written by `geode --out-graph`).
    #[arg(long, value_name = "FILE")]
    graph: PathBuf,
    /// Number of communities.
    #[arg(long)]
    k: Option<usize>,
    /// Inverse temperature of the message updates.
    #[arg(long)]
    beta_temp: Option<f64>,
    #[arg(long)]
    damping: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long, env = "GEODE_SEED")]
    seed: Option<u64>,
    /// Write predicted labels as a `node_id label` table.
    #[arg(long, value_name = "FILE")]
    out_labels: Option<PathBuf>,
    /// Ground-truth label table; adds permutation accuracy to the report.
    #[arg(long, value_name = "FILE")]
    truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Directory for records.csv, summary.csv, threshold_dots.csv, and
    /// manifest.json (created if missing).
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
    /// Comma-separated bandwidth grid, e.g. `0.75,0.5,0.25,0.1`.
    #[arg(long, value_name = "LIST")]
    sigma_grid: Option<String>,
    #[arg(long)]
    replicates: Option<usize>,
    /// Comma-separated methods: maso, geode, bethe_hessian,
    /// nonbacktracking, motif_laplacian, bp.
    #[arg(long, value_name = "LIST")]
    methods: Option<String>,
    #[arg(long, env = "GEODE_SEED")]
    seed: Option<u64>,
    /// Worker threads for the sweep (1 = serial, 0 = all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Keep wall-clock timings in records.csv (defaults to zeroed).
    #[arg(long)]
    timings: bool,
}

#[derive(Debug, Args)]
struct NoiseArgs {
    /// Edge list to denoise; requires --nodes for latent coordinates.
    /// Without it a synthetic instance is generated from --n/--a/--b/--sigma.
    #[arg(long, value_name = "FILE", requires = "nodes")]
    graph: Option<PathBuf>,
    /// Node sidecar (`node_id label x_1 … x_d`) with latent coordinates.
    #[arg(long, value_name = "FILE", requires = "graph")]
    nodes: Option<PathBuf>,
    /// Nodes of the generated instance.
    #[arg(long, default_value_t = 250, conflicts_with = "graph")]
    n: usize,
    #[arg(long, default_value_t = 60.0, conflicts_with = "graph")]
    a: f64,
    #[arg(long, default_value_t = 5.0, conflicts_with = "graph")]
    b: f64,
    #[arg(long, default_value_t = 0.1, conflicts_with = "graph")]
    sigma: f64,
    #[arg(long, default_value_t = 2, conflicts_with = "graph")]
    dim: usize,
    /// Diagnostic pairs per noise measurement.
    #[arg(long, default_value_t = DEFAULT_NOISE_PAIRS)]
    pairs: usize,
    /// Number of communities.
    #[arg(long)]
    k: Option<usize>,
    /// Number of geometry balls.
    #[arg(long)]
    balls: Option<usize>,
    /// Maximum number of rounds.
    #[arg(long)]
    t_max: Option<usize>,
    #[arg(long, env = "GEODE_SEED")]
    seed: Option<u64>,
    /// Write the per-round trace (with noise column) as CSV.
    #[arg(long, value_name = "FILE")]
    out_trace: Option<PathBuf>,
    /// Keep wall-clock timings in the output (defaults to zeroed).
    #[arg(long)]
    timings: bool,
}

#[derive(Debug, Args)]
#[command(group(
    clap::ArgGroup::new("kernel")
        .required(true)
        .args(["c", "sigma"]),
))]
struct ThresholdArgs {
    /// Intra-community rate coefficient.
    #[arg(long)]
    a: f64,
    /// Inter-community rate coefficient.
    #[arg(long)]
    b: f64,
    /// Kernel constant c(sigma), given directly.
    #[arg(long)]
    c: Option<f64>,
    /// Kernel bandwidth; c(sigma) is then estimated by Monte Carlo.
    #[arg(long)]
    sigma: Option<f64>,
    /// Latent dimension for the Monte Carlo estimate.
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// Monte Carlo sample count for the estimate.
    #[arg(long, default_value_t = KERNEL_MC_SAMPLES)]
    mc_samples: usize,
    #[arg(long, env = "GEODE_SEED")]
    seed: Option<u64>,
}

fn load_graph(path: &Path) -> Result<WeightedGraph> {
    WeightedGraph::load_edge_list(path, None)
}

/// Lifts both labelings to a shared alphabet, then scores permutation
/// accuracy; tolerates truth files whose class count differs from `k`.
fn score_against_truth(pred: &LabelVector, truth_path: &Path) -> Result<f64> {
    let truth = load_labels_file(truth_path, Some(pred.len()))?;
    let k = pred.k().max(truth.k());
    let pred = LabelVector::new(pred.as_slice().to_vec(), k)?;
    let truth = LabelVector::new(truth.as_slice().to_vec(), k)?;
    geode_core::bench::permutation_accuracy(&pred, &truth)
}

/// Writes the manifest JSON sidecar next to a CSV artifact
/// (`trace.csv` → `trace.manifest.json`).
fn write_manifest(csv_path: &Path, manifest: &serde_json::Value) -> Result<()> {
    let sidecar = csv_path.with_extension("manifest.json");
    std::fs::write(sidecar, format!("{:#}\n", manifest))?;
    Ok(())
}

fn diagnostics_json(result: &ClusteringResult, timings: bool) -> serde_json::Value {
    let d = &result.diagnostics;
    let stage_seconds: serde_json::Map<String, serde_json::Value> = d
        .stage_seconds
        .iter()
        .map(|(k, &v)| {
            let v = if timings { v } else { 0.0 };
            (k.clone(), json!(v))
        })
        .collect();
    json!({
        "eigen_gap": d.eigen_gap,
        "refine_iterations": d.refine_iterations,
        "refine_flips": d.refine_flips,
        "stage_seconds": stage_seconds,
        "notes": d.notes,
    })
}

fn print_report(json_mode: bool, report: &serde_json::Value, human: &[String]) {
    if json_mode {
        println!("{:#}", report);
    } else {
        for line in human {
            println!("{line}");
        }
    }
}

fn run_generate(args: &GenerateArgs, json_mode: bool) -> Result<()> {
    let params = SbmParams {
        n: args.n,
        a: args.a,
        b: args.b,
        sigma: args.sigma,
        dim: args.dim,
        balanced: args.balanced,
    };
    let seed = args.seed.unwrap_or(0);
    let sample = sample_lk_sbm(&params, seed)?;
    sample.graph.write_edge_list(&args.out_edges)?;
    if let Some(path) = &args.out_nodes {
        write_nodes_file(&sample, path)?;
    }
    if let Some(path) = &args.out_labels {
        write_labels_file(&sample.labels, path)?;
    }
    let report = json!({
        "command": "generate",
        "n": args.n,
        "a": args.a,
        "b": args.b,
        "sigma": args.sigma,
        "dim": args.dim,
        "balanced": args.balanced,
        "seed": seed,
        "edge_count": sample.graph.edge_count(),
        "clip_warnings": sample.clip_warnings,
        "out_edges": args.out_edges.display().to_string(),
        "out_nodes": args.out_nodes.as_ref().map(|p| p.display().to_string()),
        "out_labels": args.out_labels.as_ref().map(|p| p.display().to_string()),
    });
    print_report(
        json_mode,
        &report,
        &[
            format!(
                "generated n={} graph with {} edges (a={}, b={}, sigma={}, dim={}, seed={})",
                args.n,
                sample.graph.edge_count(),
                args.a,
                args.b,
                args.sigma,
                args.dim,
                seed
            ),
            format!("clip warnings: {}", sample.clip_warnings),
            format!("edge list: {}", args.out_edges.display()),
        ],
    );
    Ok(())
}

fn run_cluster(args: &ClusterArgs, cfg: &CliConfig, json_mode: bool) -> Result<()> {
    if args.method != ClusterMethod::Maso && (args.beta.is_some() || args.clip_max.is_some()) {
        return Err(Error::Config(
            "--beta and --clip-max apply only to --method maso".into(),
        ));
    }
    let g = load_graph(&args.graph)?;
    let k = args.k.unwrap_or(cfg.maso.k);
    let seed = args.seed.unwrap_or(0);
    let method_name = match args.method {
        ClusterMethod::Maso => "maso",
        ClusterMethod::BetheHessian => "bethe_hessian",
        ClusterMethod::Nonbacktracking => "nonbacktracking",
        ClusterMethod::MotifLaplacian => "motif_laplacian",
    };
    let mut maso_config = None;
    let result = match args.method {
        ClusterMethod::Maso => {
            let mut m = cfg.maso;
            m.k = k;
            if let Some(beta) = args.beta {
                m.beta = beta;
            }
            if let Some(clip) = args.clip_max {
                m.clip_max = clip;
            }
            maso_config = Some(m);
            maso_cluster(&g, &m, seed)?
        }
        ClusterMethod::BetheHessian => bethe_hessian_cluster(&g, k, seed)?,
        ClusterMethod::Nonbacktracking => nonbacktracking_cluster(&g, k, seed)?,
        ClusterMethod::MotifLaplacian => motif_laplacian_cluster(&g, k, seed)?,
    };
    if let Some(path) = &args.out_labels {
        write_labels_file(&result.hard, path)?;
    }
    let accuracy = match &args.truth {
        Some(path) => Some(score_against_truth(&result.hard, path)?),
        None => None,
    };
    let report = json!({
        "command": "cluster",
        "graph": args.graph.display().to_string(),
        "method": method_name,
        "k": k,
        "seed": seed,
        "n": g.n(),
        "maso_config": maso_config,
        "accuracy": accuracy,
        "labels": result.hard.as_slice(),
        "diagnostics": diagnostics_json(&result, args.timings),
    });
    let mut human = vec![format!(
        "{} on {} nodes (k={}, seed={})",
        method_name,
        g.n(),
        k,
        seed
    )];
    if let Some(gap) = result.diagnostics.eigen_gap {
        human.push(format!("eigen gap: {gap:.6}"));
    }
    for note in &result.diagnostics.notes {
        human.push(format!("note: {note}"));
    }
    if let Some(acc) = accuracy {
        human.push(format!("accuracy vs truth: {acc:.4}"));
    }
    if let Some(path) = &args.out_labels {
        human.push(format!("labels: {}", path.display()));
    }
    print_report(json_mode, &report, &human);
    Ok(())
}

fn geode_config_with_overrides(
    cfg: &CliConfig,
    k: Option<usize>,
    balls: Option<usize>,
    t_max: Option<usize>,
    seed: Option<u64>,
) -> GeoDeConfig {
    let mut gc = cfg.geode;
    if let Some(k) = k {
        gc.k = k;
    }
    if let Some(b) = balls {
        gc.b = b;
    }
    if let Some(t) = t_max {
        gc.t_max = t;
    }
    if let Some(s) = seed {
        gc.seed = s;
    }
    gc
}

fn run_geode_cmd(args: &GeodeArgs, cfg: &CliConfig, json_mode: bool) -> Result<()> {
    let g = load_graph(&args.graph)?;
    let gc = geode_config_with_overrides(cfg, args.k, args.balls, args.t_max, args.seed);
    let mut outcome = run_geode(&g, &gc)?;
    if !args.timings {
        outcome.trace.clear_timings();
    }
    if let Some(path) = &args.out_labels {
        write_labels_file(&outcome.hard, path)?;
    }
    if let Some(path) = &args.out_graph {
        outcome.graph.write_edge_list(path)?;
    }
    if let Some(path) = &args.out_trace {
        std::fs::write(path, outcome.trace.to_csv_string(args.timings))?;
        write_manifest(
            path,
            &json!({
                "command": "geode",
                "graph": args.graph.display().to_string(),
                "config": gc,
            }),
        )?;
    }
    let accuracy = match &args.truth {
        Some(path) => Some(score_against_truth(&outcome.hard, path)?),
        None => None,
    };
    let report = json!({
        "command": "geode",
        "graph": args.graph.display().to_string(),
        "config": gc,
        "objective": outcome.objective,
        "iterations": outcome.iterations,
        "stopped_early": outcome.trace.stopped_early,
        "failure": outcome.trace.failure,
        "notes": outcome.trace.notes,
        "accuracy": accuracy,
        "labels": outcome.hard.as_slice(),
    });
    let mut human = vec![
        format!(
            "denoised {} nodes over {} rounds (k={}, balls={}, seed={})",
            g.n(),
            outcome.iterations,
            gc.k,
            gc.b,
            gc.seed
        ),
        format!(
            "objective {:.6}, stopped early: {}",
            outcome.objective, outcome.trace.stopped_early
        ),
    ];
    if let Some(f) = &outcome.trace.failure {
        human.push(format!("round failure (best state kept): {f}"));
    }
    for note in &outcome.trace.notes {
        human.push(format!("note: {note}"));
    }
    if let Some(acc) = accuracy {
        human.push(format!("accuracy vs truth: {acc:.4}"));
    }
    for (flag, path) in [
        ("labels", &args.out_labels),
        ("trace", &args.out_trace),
        ("denoised graph", &args.out_graph),
    ] {
        if let Some(p) = path {
            human.push(format!("{flag}: {}", p.display()));
        }
    }
    print_report(json_mode, &report, &human);
    Ok(())
}

fn run_bp(args: &BpArgs, cfg: &CliConfig, json_mode: bool) -> Result<()> {
    let g = load_graph(&args.graph)?;
    let mut bc = cfg.bp;
    if let Some(k) = args.k {
        bc.k = k;
    }
    if let Some(beta) = args.beta_temp {
        bc.beta_temp = beta;
    }
    if let Some(d) = args.damping {
        bc.damping = d;
    }
    if let Some(m) = args.max_iters {
        bc.max_iters = m;
    }
    if let Some(s) = args.seed {
        bc.seed = s;
    }
    let result = weighted_bp(&g, &bc)?;
    if let Some(path) = &args.out_labels {
        write_labels_file(&result.hard, path)?;
    }
    let accuracy = match &args.truth {
        Some(path) => Some(score_against_truth(&result.hard, path)?),
        None => None,
    };
    let report = json!({
        "command": "bp",
        "graph": args.graph.display().to_string(),
        "config": bc,
        "n": g.n(),
        "accuracy": accuracy,
        "labels": result.hard.as_slice(),
        "notes": result.diagnostics.notes,
    });
    let mut human = vec![format!(
        "belief propagation on {} nodes (k={}, beta_temp={}, seed={})",
        g.n(),
        bc.k,
        bc.beta_temp,
        bc.seed
    )];
    for note in &result.diagnostics.notes {
        human.push(format!("note: {note}"));
    }
    if let Some(acc) = accuracy {
        human.push(format!("accuracy vs truth: {acc:.4}"));
    }
    print_report(json_mode, &report, &human);
    Ok(())
}

fn parse_methods(list: &str) -> Result<Vec<BenchMethod>> {
    list.split(',')
        .map(|tok| {
            let tok = tok.trim();
            serde_json::from_value(json!(tok)).map_err(|_| {
                Error::Config(format!(
                    "unknown method `{tok}`; expected maso, geode, bethe_hessian, \
                     nonbacktracking, motif_laplacian, or bp"
                ))
            })
        })
        .collect()
}

fn parse_sigma_grid(list: &str) -> Result<Vec<f64>> {
    list.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad bandwidth `{}`", tok.trim())))
        })
        .collect()
}

fn run_bench(args: &BenchArgs, cfg: &CliConfig, json_mode: bool) -> Result<()> {
    let mut bc = cfg.bench.clone();
    if let Some(grid) = &args.sigma_grid {
        bc.sigma_grid = parse_sigma_grid(grid)?;
    }
    if let Some(r) = args.replicates {
        bc.replicates = r;
    }
    if let Some(methods) = &args.methods {
        bc.methods = parse_methods(methods)?;
    }
    if let Some(s) = args.seed {
        bc.seed = s;
    }
    if let Some(j) = args.jobs {
        bc.jobs = j;
    }
    let outcome = run_benchmark(&bc)?;
    let validation = threshold_validation(&outcome.records);

    std::fs::create_dir_all(&args.out_dir)?;
    let records_path = args.out_dir.join("records.csv");
    let summary_path = args.out_dir.join("summary.csv");
    let dots_path = args.out_dir.join("threshold_dots.csv");
    let manifest_path = args.out_dir.join("manifest.json");
    std::fs::write(
        &records_path,
        records_to_csv(&outcome.records, args.timings)?,
    )?;
    std::fs::write(&summary_path, summary_to_csv(&outcome.summary)?)?;
    std::fs::write(&dots_path, dots_to_csv(&validation)?)?;
    std::fs::write(&manifest_path, format!("{}\n", manifest_json(&bc)?))?;

    let summary_rows: Vec<serde_json::Value> = outcome
        .summary
        .iter()
        .map(|row| {
            json!({
                "method": row.method.name(),
                "sigma": row.sigma,
                "mean_accuracy": row.mean_accuracy,
                "standard_error": row.standard_error,
                "n_runs": row.n_runs,
                "n_failures": row.n_failures,
            })
        })
        .collect();
    let report = json!({
        "command": "bench",
        "records": outcome.records.len(),
        "summary": summary_rows,
        "threshold_matches": validation.matches,
        "threshold_mismatches": validation.mismatches,
        "threshold_skipped": validation.skipped,
        "match_fraction": validation.match_fraction(),
        "out_dir": args.out_dir.display().to_string(),
    });
    let mut human = vec![format!(
        "{} records over {} bandwidths x {} replicates (seed {})",
        outcome.records.len(),
        bc.sigma_grid.len(),
        bc.replicates,
        bc.seed
    )];
    for row in &outcome.summary {
        human.push(format!(
            "  {:>16} sigma={:<5} mean accuracy {:.4} (se {:.4}, {} runs, {} failures)",
            row.method.name(),
            row.sigma,
            row.mean_accuracy,
            row.standard_error,
            row.n_runs,
            row.n_failures
        ));
    }
    human.push(format!(
        "threshold prediction matched {}/{} scored runs ({} skipped)",
        validation.matches,
        validation.matches + validation.mismatches,
        validation.skipped
    ));
    human.push(format!("artifacts in {}", args.out_dir.display()));
    print_report(json_mode, &report, &human);
    Ok(())
}

fn run_noise(args: &NoiseArgs, cfg: &CliConfig, json_mode: bool) -> Result<()> {
    let (graph, positions, origin) = match (&args.graph, &args.nodes) {
        (Some(gpath), Some(npath)) => {
            let g = load_graph(gpath)?;
            let (_, positions) = load_nodes_file(npath)?;
            if positions.len() != g.n() {
                return Err(Error::Config(format!(
                    "node file has {} rows but the graph has {} nodes",
                    positions.len(),
                    g.n()
                )));
            }
            (g, positions, gpath.display().to_string())
        }
        _ => {
            let params = SbmParams {
                n: args.n,
                a: args.a,
                b: args.b,
                sigma: args.sigma,
                dim: args.dim,
                balanced: false,
            };
            let seed = args.seed.unwrap_or(cfg.geode.seed);
            let sample = sample_lk_sbm(&params, derive_cli_seed(seed))?;
            (
                sample.graph,
                sample.positions,
                format!(
                    "synthetic n={} a={} b={} sigma={} dim={}",
                    args.n, args.a, args.b, args.sigma, args.dim
                ),
            )
        }
    };
    let coords = positions_to_matrix(&positions)?;
    let gc = geode_config_with_overrides(cfg, args.k, args.balls, args.t_max, args.seed);
    let probe = NoiseProbe {
        coords: &coords,
        pairs: args.pairs,
    };
    let mut outcome = run_geode_probed(&graph, &gc, Some(probe))?;
    if !args.timings {
        outcome.trace.clear_timings();
    }
    let slope = trace_noise_slope(&outcome.trace);
    if let Some(path) = &args.out_trace {
        std::fs::write(path, outcome.trace.to_csv_string(args.timings))?;
        write_manifest(
            path,
            &json!({
                "command": "noise",
                "source": origin,
                "pairs": args.pairs,
                "config": gc,
            }),
        )?;
    }
    let slope_json = match &slope {
        Ok(t) => json!({
            "slope": t.slope,
            "t_statistic": t.t_statistic,
            "p_value": t.p_value,
            "n_rounds": t.n,
        }),
        Err(e) => json!({ "unavailable": e.to_string() }),
    };
    let report = json!({
        "command": "noise",
        "source": origin,
        "pairs": args.pairs,
        "config": gc,
        "objective": outcome.objective,
        "iterations": outcome.iterations,
        "stopped_early": outcome.trace.stopped_early,
        "noise_slope": slope_json,
        "noise": outcome
            .trace
            .records
            .iter()
            .map(|r| r.noise)
            .collect::<Vec<_>>(),
    });
    let mut human = vec![
        format!("noise trace on {origin}"),
        format!(
            "{} rounds, objective {:.6}, stopped early: {}",
            outcome.iterations, outcome.objective, outcome.trace.stopped_early
        ),
    ];
    match &slope {
        Ok(t) => human.push(format!(
            "noise slope {:+.3e} (t = {:.3}, p = {:.4}, {} rounds)",
            t.slope, t.t_statistic, t.p_value, t.n
        )),
        Err(e) => human.push(format!("noise slope unavailable: {e}")),
    }
    if let Some(path) = &args.out_trace {
        human.push(format!("trace: {}", path.display()));
    }
    print_report(json_mode, &report, &human);
    Ok(())
}

/// Keeps the synthetic instance distinct from the denoiser's internal
/// streams, which already consume the seed itself.
fn derive_cli_seed(seed: u64) -> u64 {
    geode_core::seeding::derive_seed(seed, &[100])
}

fn run_thresholds(args: &ThresholdArgs, json_mode: bool) -> Result<()> {
    let (c, c_source) = match (args.c, args.sigma) {
        (Some(c), _) => (c, json!("given")),
        (None, Some(sigma)) => {
            let seed = args.seed.unwrap_or(0);
            let c = estimate_kernel_constant(args.dim, sigma, args.mc_samples, seed)?;
            (
                c,
                json!({
                    "sigma": sigma,
                    "dim": args.dim,
                    "mc_samples": args.mc_samples,
                    "seed": seed,
                }),
            )
        }
        (None, None) => unreachable!("clap enforces the kernel group"),
    };
    let report = recovery_thresholds(args.a, args.b, c)?;
    let payload = json!({
        "command": "thresholds",
        "a": args.a,
        "b": args.b,
        "c": c,
        "c_source": c_source,
        "t_exact": report.t_exact,
        "exact_recoverable": report.exact_recoverable,
        "weak_lhs": report.weak_lhs,
        "weak_rhs": report.weak_rhs,
        "weak_recoverable": report.weak_recoverable,
    });
    print_report(
        json_mode,
        &payload,
        &[
            format!("a={}, b={}, c={}", args.a, args.b, c),
            format!(
                "t_exact={} exact_recoverable={}",
                report.t_exact, report.exact_recoverable
            ),
            format!(
                "weak_lhs={} weak_rhs={} weak_recoverable={}",
                report.weak_lhs, report.weak_rhs, report.weak_recoverable
            ),
        ],
    );
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = CliConfig::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Generate(args) => run_generate(args, cli.json),
        Command::Cluster(args) => run_cluster(args, &cfg, cli.json),
        Command::Geode(args) => run_geode_cmd(args, &cfg, cli.json),
        Command::Bp(args) => run_bp(args, &cfg, cli.json),
        Command::Bench(args) => run_bench(args, &cfg, cli.json),
        Command::Noise(args) => run_noise(args, &cfg, cli.json),
        Command::Thresholds(args) => run_thresholds(args, cli.json),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("{}", json!({ "error": e.to_string() }));
        std::process::exit(1);
    }
}
