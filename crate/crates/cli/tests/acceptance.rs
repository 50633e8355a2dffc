//! Release acceptance gate: ten criteria, one test per criterion, named
//! so they run and report in numeric order. Each test ends with a
//! `criterion N (<label>): PASS` line carrying the measured values
//! (visible with `--nocapture`); an assertion failure marks that
//! criterion's line FAILED in the harness summary.
//!
//! The statistically powered criteria (4, 5, 7, 8) run pinned seeds so
//! the whole gate is deterministic on a fixed toolchain.

use std::collections::BTreeMap;
use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use geode_core::baselines::{bp_update_round, BpConfig, BpMessages};
use geode_core::bench::{run_benchmark, threshold_validation, BenchConfig, BenchMethod};
use geode_core::embed::{cooccurrence_counts, ppmi_matrix, random_walk_corpus, EmbeddingMatrix};
use geode_core::geode::{
    percentile_sets, positions_to_matrix, run_geode_probed, trace_noise_slope, GeoDeConfig,
    NoiseProbe,
};
use geode_core::maso::{attention_weights, mix_weights, triangle_support, MasoConfig};
use geode_core::sbm::{recovery_thresholds, sample_edges_given, sample_lk_sbm, SbmParams};
use geode_core::seeding::derive_seed;
use geode_core::stats::{mean, ols_fit, paired_one_sided_t};
use geode_core::{LabelVector, WeightedGraph};
use nalgebra::DMatrix;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn pass(n: usize, label: &str, detail: String) {
    println!("criterion {n} ({label}): PASS - {detail}");
}

/// MASO settings shared by the statistical criteria: full triangle
/// mixing with a loose cap, which is the strongest standalone operator
/// in the noisy regime and leaves the noiseless regime untouched.
fn acceptance_maso() -> MasoConfig {
    MasoConfig {
        beta: 1.0,
        clip_max: 100.0,
        ..MasoConfig::default()
    }
}

/// Denoiser settings shared by criteria 5 and 8: moderate shrink with a
/// compounding boost strong enough to grow anchors, annealed over a
/// short horizon so the loop stops before it over-sparsifies.
fn acceptance_geode() -> GeoDeConfig {
    GeoDeConfig {
        shrink_comm: 0.45,
        shrink_geo: 0.6,
        boost_comm: 1.0,
        boost_geo: 0.20,
        tau_c: 0.96,
        tau_c_plus: 0.995,
        tau_g: 0.96,
        tau_g_plus: 0.995,
        anneal_steps: 12,
        warmup_rounds: 4,
        t_max: 8,
        maso: acceptance_maso(),
        ..GeoDeConfig::default()
    }
}

/// Criterion 1: the empirical mean of the unclipped mixed weights over
/// 2000 independent edge draws matches the closed-form expectation on
/// both branches (within- and across-community pairs) within four
/// standard errors. Embeddings are constructed so inner products are
/// exactly rho_in within and rho_out across communities; sigma is large
/// enough that the kernel factor is exactly 1 in double precision.
#[test]
fn criterion_01_mixed_weight_expectation() {
    let start = Instant::now();
    let n = 200usize;
    let half = n / 2;
    let (rho_in, rho_out, beta) = (0.8f64, 0.2f64, 0.3f64);
    let params = SbmParams {
        n,
        a: 8.0,
        b: 3.0,
        sigma: 1e12,
        dim: 2,
        balanced: true,
    };
    let p_in = params.rate_in();
    let p_out = params.rate_out();
    assert!(p_in < 1.0, "rates must stay unclipped, got {p_in}");

    let dim = n + 2;
    let alpha = rho_in.sqrt();
    let gamma = (1.0 - rho_in).sqrt();
    let cross = rho_out / rho_in;
    let labels: Vec<usize> = (0..n).map(|i| usize::from(i >= half)).collect();
    let mut z = DMatrix::<f64>::zeros(n, dim);
    for i in 0..n {
        if labels[i] == 0 {
            z[(i, 0)] = alpha;
        } else {
            z[(i, 0)] = alpha * cross;
            z[(i, 1)] = alpha * (1.0 - cross * cross).sqrt();
        }
        z[(i, 2 + i)] = gamma;
    }
    let emb = EmbeddingMatrix {
        z,
        rank: dim,
        singular_values: vec![1.0; dim],
    };
    let lv = LabelVector::new(labels.clone(), 2).unwrap();

    let sqrt_d = (dim as f64).sqrt();
    let w_in = p_in * (rho_in / sqrt_d).exp();
    let w_out = p_out * (rho_out / sqrt_d).exp();
    let expect_in = w_in
        * ((1.0 - beta) + beta * ((half as f64 - 2.0) * w_in * w_in + half as f64 * w_out * w_out));
    let expect_out = w_out * ((1.0 - beta) + beta * (n as f64 - 2.0) * w_in * w_out);

    let draws = 2000;
    let mut rng = StdRng::seed_from_u64(71);
    let positions = vec![vec![0.5, 0.5]; n];
    let mut means_in = Vec::with_capacity(draws);
    let mut means_out = Vec::with_capacity(draws);
    for _ in 0..draws {
        let (g, clipped) = sample_edges_given(&params, &positions, &lv, &mut rng).unwrap();
        assert_eq!(clipped, 0);
        let w = attention_weights(&g, &emb).unwrap();
        let x = triangle_support(&w).unwrap();
        let wt = mix_weights(&w, &x, beta, f64::INFINITY).unwrap();
        let (mut s_in, mut c_in, mut s_out, mut c_out) = (0.0, 0usize, 0.0, 0usize);
        for i in 0..n {
            for j in (i + 1)..n {
                if labels[i] == labels[j] {
                    s_in += wt[(i, j)];
                    c_in += 1;
                } else {
                    s_out += wt[(i, j)];
                    c_out += 1;
                }
            }
        }
        means_in.push(s_in / c_in as f64);
        means_out.push(s_out / c_out as f64);
    }
    let check = |samples: &[f64], expect: f64, tag: &str| -> f64 {
        let m = mean(samples);
        let se = geode_core::stats::standard_error(samples);
        assert!(
            (m - expect).abs() < 4.0 * se,
            "{tag}: mean {m} vs expectation {expect} (se {se})"
        );
        (m - expect).abs() / se
    };
    let dev_in = check(&means_in, expect_in, "within-community");
    let dev_out = check(&means_out, expect_out, "across-community");
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 120.0, "runtime budget exceeded: {elapsed:.1}s");
    pass(
        1,
        "mixed-weight expectation",
        format!(
            "within {dev_in:.2} se, across {dev_out:.2} se of closed form over {draws} draws, {elapsed:.1}s"
        ),
    );
}

/// Criterion 2: with all edge weights equal to 1, one message update of
/// the weighted scheme equals the standard Bethe-Peierls update computed
/// independently (direct product over incoming neighbors) to 1e-12 on a
/// 6-node graph with seeded non-uniform messages.
#[test]
fn criterion_02_bp_reduces_to_standard_update() {
    let edges = [
        (0usize, 1usize, 1.0f64),
        (0, 2, 1.0),
        (1, 2, 1.0),
        (2, 3, 1.0),
        (3, 4, 1.0),
        (3, 5, 1.0),
        (4, 5, 1.0),
    ];
    let g = WeightedGraph::build(6, &edges).unwrap();
    let cfg = BpConfig {
        beta_temp: 0.7,
        k: 2,
        damping: 0.0,
        ..BpConfig::default()
    };
    let msgs = BpMessages::init(&g, 2, 0.01, 99).unwrap();
    let (updated, _) = bp_update_round(&g, &cfg, &msgs).unwrap();

    let factor = (cfg.beta_temp.exp()) - 1.0;
    let mut max_diff = 0.0f64;
    for i in 0..g.n() {
        for &(j, _) in g.neighbors(i) {
            let mut expected = [0.0f64; 2];
            for (c, e) in expected.iter_mut().enumerate() {
                let mut prod = 1.0;
                for &(l, _) in g.neighbors(i) {
                    if l == j {
                        continue;
                    }
                    prod *= 1.0 + factor * msgs.get(l, i).unwrap()[c];
                }
                *e = prod;
            }
            let total = expected[0] + expected[1];
            let got = updated.get(i, j).unwrap();
            for c in 0..2 {
                let want = expected[c] / total;
                assert!(want.is_finite() && got[c].is_finite());
                max_diff = max_diff.max((got[c] - want).abs());
            }
        }
    }
    assert!(
        max_diff <= 1e-12,
        "weighted update deviates from the standard form by {max_diff:e}"
    );
    pass(
        2,
        "unit-weight message update",
        format!(
            "max deviation {max_diff:.2e} over {} directed messages",
            msgs.len()
        ),
    );
}

/// Criterion 3: threshold arithmetic on hand-computed cases, including
/// the boundary value exactly 2, which must classify as NOT exactly
/// recoverable (the inequality is strict).
#[test]
fn criterion_03_threshold_arithmetic() {
    // (sqrt(9) - sqrt(1))^2 = 4: recoverable; (9-1)^2 = 64 > 2*10 = 20.
    let r = recovery_thresholds(9.0, 1.0, 1.0).unwrap();
    assert_eq!(r.t_exact, 4.0);
    assert!(r.exact_recoverable);
    assert_eq!(r.weak_lhs, 64.0);
    assert_eq!(r.weak_rhs, 20.0);
    assert!(r.weak_recoverable);

    // 8 + 2 - 2*sqrt(16) = 2 exactly: the boundary is not recoverable.
    let r = recovery_thresholds(8.0, 2.0, 1.0).unwrap();
    assert_eq!(r.t_exact, 2.0);
    assert!(
        !r.exact_recoverable,
        "boundary t = 2 must not count as recoverable"
    );
    assert!(r.weak_recoverable, "36 > 20 still grants weak recovery");

    // A disconnected across-block graph (b = 0) with c*a = 2 also lands
    // exactly on the boundary, and ties the weak inequality (4 > 4 is
    // false).
    let r = recovery_thresholds(2.0, 0.0, 1.0).unwrap();
    assert_eq!(r.t_exact, 2.0);
    assert!(!r.exact_recoverable);
    assert_eq!(r.weak_lhs, r.weak_rhs);
    assert!(!r.weak_recoverable, "the weak inequality is strict too");

    // Kernel constant folds in multiplicatively: c = 0.5 halves both
    // rates, (sqrt(25) - sqrt(9))^2 = 4.
    let r = recovery_thresholds(50.0, 18.0, 0.5).unwrap();
    assert_eq!(r.t_exact, 4.0);
    assert!(r.exact_recoverable);

    // Irrational case stays on the correct side: (sqrt(5) - 1)^2 < 2
    // but weakly recoverable (16 > 12).
    let r = recovery_thresholds(5.0, 1.0, 1.0).unwrap();
    assert!(!r.exact_recoverable && r.weak_recoverable);
    assert!((r.t_exact - (6.0 - 2.0 * 5.0f64.sqrt())).abs() < 1e-15);

    pass(
        3,
        "threshold arithmetic",
        "5 hand cases incl. strict boundary".into(),
    );
}

/// Criterion 4: mild geometry (sigma = 0.75) well above the exact
/// threshold; over 20 paired seeds the attention operator averages at
/// least 0.95 accuracy and the Bethe-Hessian at least 0.90 on the same
/// graphs, inside a 10-minute budget.
#[test]
fn criterion_04_noiseless_recovery() {
    let start = Instant::now();
    let cfg = BenchConfig {
        sigma_grid: vec![0.75],
        replicates: 20,
        n_range: (600, 600),
        a_range: (60.0, 60.0),
        b_range: (5.0, 5.0),
        methods: vec![BenchMethod::Maso, BenchMethod::BetheHessian],
        maso: acceptance_maso(),
        seed: 1,
        ..BenchConfig::default()
    };
    let outcome = run_benchmark(&cfg).unwrap();
    assert!(
        outcome.records.iter().all(|r| r.t_exact > 10.0),
        "the fixture must sit far above the exact threshold"
    );
    let mean_of = |m: BenchMethod| {
        outcome
            .summary
            .iter()
            .find(|row| row.method == m)
            .expect("method summarized")
            .mean_accuracy
    };
    let maso = mean_of(BenchMethod::Maso);
    let bh = mean_of(BenchMethod::BetheHessian);
    let elapsed = start.elapsed().as_secs_f64();
    assert!(maso >= 0.95, "attention operator mean {maso} below 0.95");
    assert!(bh >= 0.90, "Bethe-Hessian mean {bh} below 0.90");
    assert!(elapsed < 600.0, "runtime budget exceeded: {elapsed:.1}s");
    pass(
        4,
        "noiseless recovery",
        format!("maso {maso:.4}, bethe_hessian {bh:.4}, {elapsed:.0}s"),
    );
}

/// Criterion 5: strong geometry (sigma = 0.1) at n = 500; over 20 paired
/// seeds the means order denoiser > attention operator >
/// triangle-motif baseline, and the paired one-sided test on the
/// denoiser's per-graph improvement is significant at p < 0.1.
#[test]
fn criterion_05_noisy_regime_ordering() {
    let cfg = BenchConfig {
        sigma_grid: vec![0.1],
        replicates: 20,
        n_range: (500, 500),
        a_range: (60.0, 60.0),
        b_range: (5.0, 5.0),
        methods: vec![
            BenchMethod::Maso,
            BenchMethod::Geode,
            BenchMethod::MotifLaplacian,
        ],
        maso: acceptance_maso(),
        geode: acceptance_geode(),
        seed: 13,
        ..BenchConfig::default()
    };
    let outcome = run_benchmark(&cfg).unwrap();
    let mean_of = |m: BenchMethod| {
        outcome
            .summary
            .iter()
            .find(|row| row.method == m)
            .expect("method summarized")
            .mean_accuracy
    };
    let maso = mean_of(BenchMethod::Maso);
    let geode = mean_of(BenchMethod::Geode);
    let motif = mean_of(BenchMethod::MotifLaplacian);
    assert!(
        geode > maso && maso > motif,
        "mean ordering violated: geode {geode}, maso {maso}, motif {motif}"
    );

    let mut by_rep: HashMap<usize, [Option<f64>; 2]> = HashMap::new();
    for r in &outcome.records {
        let slot = match r.method {
            BenchMethod::Geode => 0,
            BenchMethod::Maso => 1,
            _ => continue,
        };
        by_rep.entry(r.replicate).or_default()[slot] = r.accuracy;
    }
    let diffs: Vec<f64> = by_rep
        .values()
        .map(|pair| pair[0].unwrap() - pair[1].unwrap())
        .collect();
    assert_eq!(diffs.len(), 20);
    let (t, p) = paired_one_sided_t(&diffs).unwrap();
    assert!(
        p < 0.1,
        "paired improvement not significant: t {t:.3}, p {p:.3}"
    );
    pass(
        5,
        "noisy-regime ordering",
        format!("geode {geode:.4} > maso {maso:.4} > motif {motif:.4}; paired t {t:.2}, p {p:.3}"),
    );
}

/// Criterion 6: across every round of 10 randomized denoiser runs, the
/// traced weight extrema stay inside [w_min, w_max] and the boost set is
/// nested inside the shrink set (the percentile cuts are nested).
#[test]
fn criterion_06_weight_bounds_and_nested_cuts() {
    let sigmas = [0.75, 0.5, 0.25, 0.1];
    let mut rounds = 0usize;
    let (mut total_shrink, mut total_boost) = (0usize, 0usize);
    for i in 0..10u64 {
        let params = SbmParams {
            n: 120 + 10 * i as usize,
            a: 30.0 + 3.0 * i as f64,
            b: 2.0 + (i % 4) as f64,
            sigma: sigmas[i as usize % 4],
            dim: 2,
            balanced: false,
        };
        let sample = sample_lk_sbm(&params, 500 + i).unwrap();
        let cfg = GeoDeConfig {
            t_max: 6,
            maso: MasoConfig {
                embed_dim: 16,
                walk_length: 10,
                walks_per_node: 2,
                window: 3,
                ..MasoConfig::default()
            },
            seed: 900 + i,
            ..GeoDeConfig::default()
        };
        let outcome = run_geode_probed(&sample.graph, &cfg, None).unwrap();
        assert!(!outcome.trace.records.is_empty(), "run {i} did no rounds");
        for rec in &outcome.trace.records {
            assert!(
                rec.min_weight >= cfg.w_min - 1e-12,
                "run {i} round {}: min weight {} under {}",
                rec.t,
                rec.min_weight,
                cfg.w_min
            );
            assert!(
                rec.max_weight <= cfg.w_max + 1e-12,
                "run {i} round {}: max weight {} over {}",
                rec.t,
                rec.max_weight,
                cfg.w_max
            );
            assert!(
                rec.boost_within_shrink,
                "run {i} round {}: boost set escapes the shrink set",
                rec.t
            );
            total_shrink += rec.n_shrink;
            total_boost += rec.n_boost;
            rounds += 1;
        }
    }
    assert!(total_shrink > 0 && total_boost > 0, "cuts never fired");
    pass(
        6,
        "weight bounds + nested cuts",
        format!("{rounds} rounds over 10 runs, {total_shrink} shrinks / {total_boost} boosts"),
    );
}

/// Criterion 7: on 20 synthetic runs with the true latent coordinates,
/// the OLS slope of the per-round geometric-noise metric is
/// non-positive in at least 70% of runs (the denoiser drives the
/// geometry residual down, not up).
#[test]
fn criterion_07_noise_metric_trend() {
    let params = SbmParams {
        n: 250,
        a: 60.0,
        b: 5.0,
        sigma: 0.1,
        dim: 2,
        balanced: false,
    };
    let mut non_positive = 0usize;
    let mut slopes = Vec::new();
    for seed in 1..=20u64 {
        let sample = sample_lk_sbm(&params, derive_seed(seed, &[100])).unwrap();
        let coords = positions_to_matrix(&sample.positions).unwrap();
        let cfg = GeoDeConfig {
            shrink_comm: 0.45,
            shrink_geo: 0.49,
            boost_comm: 1.0,
            boost_geo: 0.20,
            tau_c: 0.96,
            tau_c_plus: 0.995,
            tau_g: 0.96,
            tau_g_plus: 0.995,
            anneal_steps: 14,
            warmup_rounds: 4,
            t_max: 20,
            tol: 5e-6,
            patience: 20,
            maso: acceptance_maso(),
            seed,
            ..GeoDeConfig::default()
        };
        let probe = NoiseProbe {
            coords: &coords,
            pairs: 2000,
        };
        let outcome = run_geode_probed(&sample.graph, &cfg, Some(probe)).unwrap();
        let slope = trace_noise_slope(&outcome.trace).unwrap();
        if slope.slope <= 0.0 {
            non_positive += 1;
        }
        slopes.push(slope.slope);
    }
    assert!(
        non_positive >= 14,
        "only {non_positive}/20 runs trend non-positive; slopes {slopes:?}"
    );
    pass(
        7,
        "noise-metric trend",
        format!("{non_positive}/20 runs with non-positive slope (need >= 14)"),
    );
}

/// Criterion 8: a 60-run sweep at moderate sizes compares the exact
/// recovery predicted by the threshold statistic against observed exact
/// recovery of the denoiser; at least 80% of runs must match.
#[test]
fn criterion_08_threshold_validation() {
    let cfg = BenchConfig {
        sigma_grid: vec![0.75],
        replicates: 60,
        n_range: (250, 450),
        a_range: (20.0, 90.0),
        b_range: (1.0, 20.0),
        methods: vec![BenchMethod::Geode],
        maso: acceptance_maso(),
        geode: GeoDeConfig {
            t_max: 4,
            ..acceptance_geode()
        },
        seed: 1,
        ..BenchConfig::default()
    };
    assert!(cfg.n_range.1 <= 600);
    let outcome = run_benchmark(&cfg).unwrap();
    let v = threshold_validation(&outcome.records);
    assert_eq!(v.matches + v.mismatches + v.skipped, 60);
    let frac = v.match_fraction();
    assert!(
        frac >= 0.8,
        "match fraction {frac:.3} ({} of {})",
        v.matches,
        v.matches + v.mismatches
    );
    pass(
        8,
        "threshold validation",
        format!(
            "{} matches / {} mismatches, fraction {frac:.3}",
            v.matches, v.mismatches
        ),
    );
}

/// Criterion 9: pipeline kernels against independent oracles on fresh
/// random instances with n <= 30: triangle support vs a triple loop,
/// co-occurrence vs a positional double loop, PPMI vs the hand formula,
/// percentile cuts vs a sort-based oracle, and the OLS fit vs the
/// normal equations. Agreement to 1e-8 everywhere.
#[test]
fn criterion_09_oracle_equivalence() {
    let mut rng = StdRng::seed_from_u64(4242);
    let mut checks = 0usize;

    // Triangle support vs brute-force triple loop.
    for _ in 0..5 {
        let n = rng.gen_range(5..=30);
        let mut w = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.gen_bool(0.4) {
                    let v = rng.gen_range(0.1..2.0);
                    w[(i, j)] = v;
                    w[(j, i)] = v;
                }
            }
        }
        let x = triangle_support(&w).unwrap();
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                if i != j {
                    for k in 0..n {
                        if k != i && k != j {
                            acc += w[(i, k)] * w[(k, j)];
                        }
                    }
                }
                assert!(
                    (x[(i, j)] - acc).abs() <= 1e-8,
                    "triangle support mismatch at ({i},{j}): {} vs {acc}",
                    x[(i, j)]
                );
                checks += 1;
            }
        }
    }

    // Windowed co-occurrence vs a double loop over walk positions, and
    // PPMI vs the hand formula on the same counts.
    for trial in 0..3 {
        let n = rng.gen_range(8..=24);
        let mut edges: Vec<(usize, usize, f64)> = (1..n)
            .map(|i| (i - 1, i, rng.gen_range(0.5..1.5)))
            .collect();
        for _ in 0..n {
            let i = rng.gen_range(0..n);
            let j = rng.gen_range(0..n);
            if i != j {
                edges.push((i.min(j), i.max(j), rng.gen_range(0.5..1.5)));
            }
        }
        let g = WeightedGraph::build(n, &edges).unwrap();
        let window = 3usize;
        let corpus = random_walk_corpus(&g, 3, 12, 7 + trial).unwrap();
        let stats = cooccurrence_counts(&corpus, window).unwrap();

        let mut oracle = DMatrix::<f64>::zeros(n, n);
        for walk in &corpus.walks {
            for p in 0..walk.len() {
                for q in (p + 1)..walk.len() {
                    if q - p > window {
                        break;
                    }
                    oracle[(walk[p], walk[q])] += 1.0;
                    oracle[(walk[q], walk[p])] += 1.0;
                }
            }
        }
        let mut total = 0.0;
        for u in 0..n {
            for v in 0..n {
                assert!(
                    (stats.counts[(u, v)] - oracle[(u, v)]).abs() <= 1e-8,
                    "co-occurrence mismatch at ({u},{v})"
                );
                total += oracle[(u, v)];
                checks += 1;
            }
        }
        assert!((stats.total - total).abs() <= 1e-8);

        let ppmi = ppmi_matrix(&stats).unwrap();
        for u in 0..n {
            for v in 0..n {
                let c = stats.counts[(u, v)];
                let (ru, cv) = (stats.row_sums[u], stats.col_sums[v]);
                let want = if c > 0.0 && ru > 0.0 && cv > 0.0 {
                    (c * stats.total / (ru * cv)).ln().max(0.0)
                } else {
                    0.0
                };
                assert!(
                    (ppmi[(u, v)] - want).abs() <= 1e-8,
                    "PPMI mismatch at ({u},{v}): {} vs {want}",
                    ppmi[(u, v)]
                );
                checks += 1;
            }
        }
    }

    // Percentile cuts vs an explicit sort oracle, with heavy ties.
    for _ in 0..5 {
        let n_edges = rng.gen_range(10..=30);
        let mut scores = BTreeMap::new();
        let mut i = 0usize;
        while scores.len() < n_edges {
            let j = i + 1 + rng.gen_range(0..3);
            scores.insert((i, j), rng.gen_range(0..10) as f64 / 10.0);
            i += 1;
        }
        let (tau, tau_plus) = (0.8, 0.95);
        let (shrink, boost) = percentile_sets(&scores, tau, tau_plus);
        let mut sorted: Vec<f64> = scores.values().copied().collect();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let cut_at = |q: f64| {
            let rank = (q * sorted.len() as f64).ceil() as usize;
            sorted[rank.clamp(1, sorted.len()) - 1]
        };
        let (cut, cut_plus) = (cut_at(tau), cut_at(tau_plus));
        for (&e, &v) in &scores {
            assert_eq!(
                shrink.contains(&e),
                v > cut,
                "shrink cut disagrees at {e:?}"
            );
            assert_eq!(
                boost.contains(&e),
                v > cut_plus,
                "boost cut disagrees at {e:?}"
            );
            checks += 2;
        }
        assert!(boost.is_subset(&shrink));
    }

    // OLS fit vs a direct normal-equation solve.
    for _ in 0..5 {
        let n = rng.gen_range(5..=30);
        let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| 0.7 * x - 0.2 + rng.gen_range(-0.5..0.5))
            .collect();
        let fit = ols_fit(&xs, &ys).unwrap();
        let (sn, sx, sy) = (n as f64, xs.iter().sum::<f64>(), ys.iter().sum::<f64>());
        let sxx: f64 = xs.iter().map(|x| x * x).sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
        let det = sn * sxx - sx * sx;
        let slope = (sn * sxy - sx * sy) / det;
        let intercept = (sy * sxx - sx * sxy) / det;
        assert!(
            (fit.slope - slope).abs() <= 1e-8,
            "{} vs {slope}",
            fit.slope
        );
        assert!(
            (fit.intercept - intercept).abs() <= 1e-8,
            "{} vs {intercept}",
            fit.intercept
        );
        let msr = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| {
                let r = y - (intercept + slope * x);
                r * r
            })
            .sum::<f64>()
            / sn;
        assert!((fit.mean_squared_residual - msr).abs() <= 1e-8);
        checks += 3;
    }

    pass(
        9,
        "oracle equivalence",
        format!("{checks} point comparisons at 1e-8"),
    );
}

fn geode_bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_geode"))
        .args(args)
        .env_remove("GEODE_SEED")
        .output()
        .expect("binary runs")
}

/// Sorted recursive listing of every file under `dir` with its bytes.
fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let bytes = std::fs::read(&path).unwrap();
                files.push((path, bytes));
            }
        }
    }
    files.sort();
    files
}

/// Criterion 10: every CLI subcommand, run twice with the same seed and
/// the same output paths, produces byte-identical stdout and artifacts.
#[test]
fn criterion_10_cli_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).display().to_string();

    let edges = p("gen/edges.txt");
    let bench_cfg = p("bench.json");
    std::fs::create_dir_all(dir.path().join("gen")).unwrap();
    std::fs::write(
        &bench_cfg,
        r#"{"bench":{"sigma_grid":[0.75],"replicates":2,"n_range":[40,60],"a_range":[25.0,35.0],"b_range":[2.0,4.0],"methods":["maso","bethe_hessian"],"maso":{"clip_max":100.0},"seed":13}}"#,
    )
    .unwrap();

    // Each entry: (subcommand label, full argument list). Later commands
    // consume the graph the first one generates, so the whole set also
    // exercises the file formats end to end.
    let sv = |xs: &[&str]| -> Vec<String> { xs.iter().map(|s| s.to_string()).collect() };
    let runs: Vec<(&str, Vec<String>)> = vec![
        (
            "generate",
            sv(&[
                "generate",
                "--n",
                "60",
                "--a",
                "25",
                "--b",
                "3",
                "--sigma",
                "0.5",
                "--seed",
                "17",
                "--out-edges",
                edges.as_str(),
                "--out-nodes",
                p("gen/nodes.txt").as_str(),
                "--out-labels",
                p("gen/labels.txt").as_str(),
                "--json",
            ]),
        ),
        (
            "thresholds",
            sv(&["thresholds", "--a", "9", "--b", "1", "--c", "1", "--json"]),
        ),
        (
            "cluster",
            sv(&[
                "cluster",
                "--graph",
                edges.as_str(),
                "--method",
                "maso",
                "--clip-max",
                "100",
                "--seed",
                "3",
                "--out-labels",
                p("cluster/labels.txt").as_str(),
                "--json",
            ]),
        ),
        (
            "geode",
            sv(&[
                "geode",
                "--graph",
                edges.as_str(),
                "--t-max",
                "3",
                "--seed",
                "9",
                "--out-labels",
                p("geode/labels.txt").as_str(),
                "--out-trace",
                p("geode/trace.csv").as_str(),
                "--out-graph",
                p("geode/denoised.txt").as_str(),
                "--json",
            ]),
        ),
        (
            "bp",
            sv(&[
                "bp",
                "--graph",
                edges.as_str(),
                "--beta-temp",
                "2",
                "--seed",
                "2",
                "--out-labels",
                p("bp/labels.txt").as_str(),
                "--json",
            ]),
        ),
        (
            "noise",
            sv(&[
                "noise",
                "--n",
                "80",
                "--a",
                "30",
                "--b",
                "3",
                "--sigma",
                "0.3",
                "--t-max",
                "4",
                "--pairs",
                "150",
                "--seed",
                "7",
                "--out-trace",
                p("noise/trace.csv").as_str(),
                "--json",
            ]),
        ),
        (
            "bench",
            sv(&[
                "bench",
                "--config",
                bench_cfg.as_str(),
                "--out-dir",
                p("bench_out").as_str(),
                "--json",
            ]),
        ),
    ];

    for sub in ["cluster", "geode", "bp", "noise", "bench_out"] {
        std::fs::create_dir_all(dir.path().join(sub)).unwrap();
    }

    let mut artifacts = 0usize;
    for (label, args) in &runs {
        let argv: Vec<&str> = args.iter().map(String::as_str).collect();
        let first = geode_bin(&argv);
        assert!(
            first.status.success(),
            "{label} failed: {}",
            String::from_utf8_lossy(&first.stderr)
        );
        let snap_first = snapshot(dir.path());
        let second = geode_bin(&argv);
        assert!(second.status.success(), "{label} rerun failed");
        let snap_second = snapshot(dir.path());
        assert_eq!(
            first.stdout, second.stdout,
            "{label}: stdout differs between identical runs"
        );
        assert_eq!(
            snap_first.len(),
            snap_second.len(),
            "{label}: rerun changed the artifact set"
        );
        for ((path_a, bytes_a), (path_b, bytes_b)) in snap_first.iter().zip(&snap_second) {
            assert_eq!(path_a, path_b, "{label}: artifact listing diverged");
            assert_eq!(
                bytes_a,
                bytes_b,
                "{label}: {} differs between identical runs",
                path_a.display()
            );
        }
        artifacts = snap_first.len();
    }
    pass(
        10,
        "CLI determinism",
        format!("{} subcommands, {artifacts} files byte-stable", runs.len()),
    );
}
