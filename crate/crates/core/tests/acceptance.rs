//! Acceptance criteria, one pass/fail line each.
//!
//! Runs without the libtest harness so the lines always reach stdout.
//! `cargo test --test acceptance -- <word>` runs only criteria whose name
//! contains `<word>`.

mod common;

use nalgebra::{DMatrix, SymmetricEigen};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};
use vimguard::claim_detect::{read_manifest, ClaimHead};
use vimguard::cli::run;
use vimguard::config::Config;
use vimguard::eval::{auroc, Confusion};
use vimguard::mae::{
    eval_loss, pca_2d, pretrain, AudioTokenConfig, Embedding, MaeConfig, MaeModel, MaeOptState, ModelDims, Modality,
    VideoTokenConfig,
};
use vimguard::media::{load_bundle, write_bundle, ClaimLabel};
use vimguard::nnet::checkpoint::Checkpoint;
use vimguard::nnet::layers::{GraphConfig, LayerNorm, Linear, ModuleGraph};
use vimguard::nnet::tape::CustomBackward;
use vimguard::nnet::{grad_check, grad_check_graph, GradCheckReport, ParamStore, Tensor};
use vimguard::pipeline::{check_batch, read_outcomes, CheckContext, OutcomeDecision};
use vimguard::retrieval::{read_corpus, tokenize_text, Article, ArticleSource, InvertedIndex, INDEX_FILES};
use vimguard::rng::SeededRng;
use vimguard::synth::{synth_articles, synth_bundle, synth_corpus, synth_query, SynthStyle};
use vimguard::tokenizer::make_mask;
use vimguard::verify::{MockClient, Op, VerdictDecision};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

// ---------------------------------------------------------------- 1

const GRAD_TOL: f64 = 1e-4;
const EPS: f64 = 1e-5;

fn input(rows: usize, cols: usize, seed: u64) -> Vec<f64> {
    let mut rng = SeededRng::new(seed);
    (0..rows * cols).map(|_| rng.normal()).collect()
}

fn tiny_graph(depth: usize, out: Option<usize>, seed: u64) -> ModuleGraph<f64> {
    let cfg = GraphConfig {
        in_dim: 5,
        d_model: 8,
        heads: 2,
        depth,
        mlp_hidden: 12,
        n_positions: 4,
        out_dim: out,
        init_std: 0.4,
    };
    ModuleGraph::new("g", cfg, 0, &mut SeededRng::new(seed)).unwrap()
}

fn gradient_correctness() -> Outcome {
    let mut reports: Vec<(&str, GradCheckReport)> = Vec::new();
    let x = input(4, 5, 1);

    let mut s = ParamStore::<f64>::new(0);
    let lin = Linear::register(&mut s, "lin", 5, 3, 0.5, &mut SeededRng::new(2));
    reports.push(("linear", grad_check(&mut s, EPS, |s, t| {
        let xv = t.leaf(4, 5, x.clone());
        let y = lin.forward(t, s, xv);
        t.mse(y, input(4, 3, 3))
    })));

    let mut s = ParamStore::<f64>::new(0);
    let lin = Linear::register(&mut s, "lin", 5, 6, 0.5, &mut SeededRng::new(4));
    let ln = LayerNorm::register(&mut s, "ln", 6);
    reports.push(("layer_norm", grad_check(&mut s, EPS, |s, t| {
        let xv = t.leaf(4, 5, x.clone());
        let h = lin.forward(t, s, xv);
        let h = ln.forward(t, s, h);
        t.mse(h, input(4, 6, 5))
    })));
    reports.push(("gelu", grad_check(&mut s, EPS, |s, t| {
        let xv = t.leaf(4, 5, x.clone());
        let h = lin.forward(t, s, xv);
        let h = t.gelu(h);
        t.mse(h, input(4, 6, 6))
    })));
    reports.push(("softmax", grad_check(&mut s, EPS, |s, t| {
        let xv = t.leaf(4, 5, x.clone());
        let h = lin.forward(t, s, xv);
        let h = t.softmax_rows(h);
        t.mse(h, input(4, 6, 7))
    })));
    reports.push(("pooling", grad_check(&mut s, EPS, |s, t| {
        let xv = t.leaf(4, 5, x.clone());
        let h = lin.forward(t, s, xv);
        let g = t.gather_rows(h, &[2, 0]);
        let m = t.mean_rows(g);
        t.mse(m, input(1, 6, 8))
    })));
    reports.push(("bce", grad_check(&mut s, EPS, |s, t| {
        let xv = t.leaf(1, 5, x[..5].to_vec());
        let h = lin.forward(t, s, xv);
        let z = t.slice_cols(h, 0, 1);
        t.bce_logit(z, 1.0, 0.7)
    })));

    let mut attn = tiny_graph(1, Some(5), 9);
    let xt = Tensor::matrix(4, 5, x.clone());
    reports.push(("attention_block", grad_check_graph(&attn, &xt, EPS)));
    attn = tiny_graph(2, Some(3), 10);
    reports.push(("encoder_graph", grad_check_graph(&attn, &xt, EPS)));

    let dims = ModelDims {
        d_model: 8,
        heads: 2,
        encoder_depth: 2,
        decoder_depth: 1,
        decoder_width: 6,
        decoder_heads: 2,
        mlp_ratio: 2,
        init_std: 0.5,
    };
    let video = VideoTokenConfig {
        frames: 2,
        size: 8,
        tube: [2, 4, 4],
        mask_ratio: 0.5,
    };
    let mut mae = MaeModel::<f64>::new(MaeConfig::video(&video, &dims), 11).unwrap();
    let (n, d) = (mae.config.n_tokens, mae.config.token_dim);
    let decoder = mae.decoder.clone();
    let dx = Tensor::matrix(n, dims.d_model, input(n, dims.d_model, 12));
    reports.push(("decoder_graph", grad_check_graph(&decoder, &dx, EPS)));
    let tokens = input(n, d, 13);
    let plan = make_mask(n, 0.5, 14);
    reports.push(("mae_masked_loss", grad_check(&mut mae, EPS, |m, t| {
        m.masked_loss(t, &tokens, &plan).unwrap()
    })));

    for (name, r) in &reports {
        ensure!(r.passes(GRAD_TOL), "{name}: max rel error {:.3e} at {}", r.max_rel_error, r.worst);
    }

    // a tanh whose backward lost its derivative factor
    let mut s = ParamStore::<f64>::new(0);
    let lin = Linear::register(&mut s, "lin", 5, 4, 0.5, &mut SeededRng::new(15));
    let broken: CustomBackward<f64> = Arc::new(|_x, _y, g| g.to_vec());
    let mutated = grad_check(&mut s, EPS, |s, t| {
        let xv = t.leaf(4, 5, x.clone());
        let h = lin.forward(t, s, xv);
        let h = t.custom_unary(h, |v| (2.0 * v).tanh(), broken.clone());
        t.sum(h)
    });
    ensure!(!mutated.passes(GRAD_TOL), "mutated backward was not caught ({:.3e})", mutated.max_rel_error);

    let worst = reports.iter().map(|(_, r)| r.max_rel_error).fold(0.0, f64::max);
    let checked: usize = reports.iter().map(|(_, r)| r.n_checked).sum();
    Ok(format!(
        "{} graphs, {checked} parameters, worst rel err {worst:.2e}; mutation rel err {:.2e}",
        reports.len(),
        mutated.max_rel_error
    ))
}

// ---------------------------------------------------------------- 2

fn masking_contract() -> Outcome {
    let mut rng = SeededRng::new(2024);
    for trial in 0..1000 {
        let n = 1 + rng.below(2048) as usize;
        let ratio = if trial % 10 == 0 { [0.0, 1.0, 0.5, 0.75, 0.9][trial / 10 % 5] } else { rng.uniform() };
        let seed = rng.next_u64();
        let plan = make_mask(n, ratio, seed);
        let expected = (ratio * n as f64 + 0.5).floor() as usize;
        ensure!(plan.masked.len() == expected, "n={n} ratio={ratio}: {} masked, want {expected}", plan.masked.len());
        let masked: BTreeSet<usize> = plan.masked.iter().copied().collect();
        let visible: BTreeSet<usize> = plan.visible.iter().copied().collect();
        ensure!(masked.len() == plan.masked.len() && visible.len() == plan.visible.len(), "duplicate index (n={n})");
        ensure!(masked.is_disjoint(&visible), "masked and visible overlap (n={n})");
        ensure!(
            masked.union(&visible).copied().eq(0..n),
            "partition does not cover 0..{n}"
        );
        ensure!(make_mask(n, ratio, seed) == plan, "seed {seed} did not reproduce its plan");
    }
    Ok("1000 plans: counts, partitions and replay all exact".into())
}

// ---------------------------------------------------------------- 3

fn pretraining_descent() -> Outcome {
    let cfg = Config::default();
    let mut lines = Vec::new();
    let mut ok = true;
    for modality in [Modality::Video, Modality::Audio] {
        let mut ratios = Vec::new();
        for seed in 0..20u64 {
            let bundles = synth_corpus(50, seed, &cfg.synth);
            let data = bundles
                .iter()
                .map(|b| match modality {
                    Modality::Video => cfg.features.video.tokens(b),
                    _ => cfg.features.audio.tokens(b),
                })
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| e.to_string())?;
            let mc = match modality {
                Modality::Video => MaeConfig::video(&cfg.features.video, &cfg.model),
                _ => MaeConfig::audio(&cfg.features.audio, &cfg.model),
            };
            let mut model = MaeModel::new(mc, seed).map_err(|e| e.to_string())?;
            let mut opt = MaeOptState::new(&model);
            let before = eval_loss(&model, &data, seed).map_err(|e| e.to_string())?;
            pretrain(&mut model, &mut opt, &data, &cfg.pretrain, seed, |_| {}).map_err(|e| e.to_string())?;
            let after = eval_loss(&model, &data, seed).map_err(|e| e.to_string())?;
            ratios.push(after / before);
        }
        let halved = ratios.iter().filter(|&&r| r < 0.5).count();
        let max = ratios.iter().copied().fold(0.0, f64::max);
        ok &= halved >= 18;
        lines.push(format!("{modality} {halved}/20 halved (worst ratio {max:.3})"));
    }
    let msg = lines.join(", ");
    if ok { Ok(msg) } else { Err(msg) }
}

// ---------------------------------------------------------------- 4

fn claim_head_separability() -> Outcome {
    let cfg = Config::default();
    let dim = cfg.model.d_model * 2;
    let mut worst: f64 = 1.0;
    for seed in 0..10u64 {
        let mut rng = SeededRng::new(1000 + seed);
        let mut dir: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        dir.iter_mut().for_each(|v| *v /= norm);
        let mut data = Vec::with_capacity(400);
        for i in 0..400 {
            let (label, sign) = if i % 2 == 0 { (ClaimLabel::Claim, 1.0) } else { (ClaimLabel::NoClaim, -1.0) };
            let x: Vec<f32> = dir.iter().map(|&u| (sign * 2.0 * u + rng.normal()) as f32).collect();
            data.push((x, label));
        }
        let ft = &cfg.finetune;
        let mut head = ClaimHead::new(dim, ft.hidden, ft.threshold, ft.init_std, seed).map_err(|e| e.to_string())?;
        let report = head.finetune(&data, ft, seed).map_err(|e| e.to_string())?;
        ensure!(report.epoch_accuracy.len() <= 100, "ran {} epochs", report.epoch_accuracy.len());
        let best = report.epoch_accuracy.iter().copied().fold(0.0, f64::max);
        ensure!(best >= 0.95, "seed {seed}: best train accuracy {best:.3}");
        worst = worst.min(best);
    }
    Ok(format!("10/10 seeds reach >= 0.95 train accuracy (lowest {worst:.3})"))
}

// ---------------------------------------------------------------- 5

const K1: f64 = 1.2;
const B: f64 = 0.75;

/// Scores every document from raw term counts, without the posting lists.
fn exhaustive_bm25<'a>(articles: &'a [Article], query: &[String], k: usize) -> Vec<(&'a str, f64)> {
    let docs: Vec<HashMap<String, u32>> = articles
        .iter()
        .map(|a| {
            let mut tf = HashMap::new();
            for t in a.terms() {
                *tf.entry(t).or_insert(0) += 1;
            }
            tf
        })
        .collect();
    let lens: Vec<u32> = articles.iter().map(|a| a.terms().len() as u32).collect();
    let total: u64 = lens.iter().map(|&l| l as u64).sum();
    let n = articles.len() as f64;
    let avgdl = total as f64 / articles.len() as f64;
    let terms: BTreeSet<&String> = query.iter().collect();
    let mut scored = Vec::new();
    for (i, a) in articles.iter().enumerate() {
        let mut score = 0.0;
        for t in &terms {
            let Some(&tf) = docs[i].get(*t) else { continue };
            let df = docs.iter().filter(|d| d.contains_key(*t)).count() as f64;
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            let tf = tf as f64;
            score += idf * (tf * (K1 + 1.0)) / (tf + K1 * (1.0 - B + B * lens[i] as f64 / avgdl));
        }
        if score > 0.0 {
            scored.push((a.id.as_str(), score));
        }
    }
    scored.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(y.0)));
    scored.truncate(k);
    scored
}

fn retrieval_oracle() -> Outcome {
    let articles = synth_articles(500, 1500, 77);
    let index = InvertedIndex::build(articles.clone()).map_err(|e| e.to_string())?;
    let mut rng = SeededRng::new(78);
    let mut nonempty = 0;
    for q in 0..50 {
        let query = synth_query(1 + rng.below(6) as usize, 1500, &mut rng);
        let got: Vec<(&str, f64)> = index.retrieve(&query, 10).into_iter().map(|(a, s)| (a.id.as_str(), s)).collect();
        let want = exhaustive_bm25(&articles, &query, 10);
        ensure!(got == want, "query {q} {query:?}: index {got:?} vs scan {want:?}");
        nonempty += usize::from(!got.is_empty());
    }
    ensure!(nonempty >= 45, "only {nonempty} queries matched anything");

    let one = Article {
        id: "only".into(),
        title: String::new(),
        body: "London bridge, bridge".into(),
        source: ArticleSource::Wikipedia,
        published_at: None,
    };
    let idx = InvertedIndex::build(vec![one]).map_err(|e| e.to_string())?;
    let score = idx.bm25_score(&tokenize_text("bridge"), "only").map_err(|e| e.to_string())?;
    // tf 2 in a document of average length: 2 (k1 + 1) / (2 + k1)
    let hand = (4.0f64 / 3.0).ln() * (2.0 * 2.2) / (2.0 + 1.2);
    ensure!((score - hand).abs() < 1e-9, "single-doc score {score} vs {hand}");
    Ok(format!("50 queries ({nonempty} non-empty) identical to the scan; single-doc case {score:.12}"))
}

// ---------------------------------------------------------------- 6

fn gate_efficiency() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let models = common::build_models(tmp.path(), 11);
    let root = common::mock_batch_dir();
    let index = InvertedIndex::build(read_corpus(root.join("corpus.jsonl")).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let client = MockClient::from_file(root.join("script.json")).map_err(|e| e.to_string())?;
    let entries = read_manifest(&root.join("manifest.jsonl")).map_err(|e| e.to_string())?;
    let positives = entries.iter().filter(|e| e.resolved_label() == Some(ClaimLabel::Claim)).count();
    ensure!(entries.len() == 20 && positives == 7, "fixture has {} bundles, {positives} claims", entries.len());
    let ctx = CheckContext::new(&models, &index, &client, Config::default().verify);
    let result = check_batch(&entries, &ctx, 2).map_err(|e| e.to_string())?;
    let adjudicate = ctx.counter.op_calls(Op::Adjudicate);
    let database = result.summary.api_calls.database;
    ensure!(adjudicate == 7, "adjudicate calls {adjudicate}");
    ensure!(database == 7, "database calls {database}");
    let mut no_claim = 0;
    for o in &result.outcomes {
        if o.decision == Some(OutcomeDecision::HarmlessNoClaim) {
            no_claim += 1;
            ensure!(
                (o.api_calls.llm, o.api_calls.database) == (0, 0),
                "{} spent {:?}",
                o.bundle_id,
                o.api_calls
            );
        }
    }
    ensure!(no_claim == 13, "{no_claim} no-claim outcomes");
    Ok(format!(
        "adjudicate {adjudicate}, database {database}, {no_claim} no-claim outcomes at (0,0); {} LLM calls in total",
        result.summary.api_calls.llm
    ))
}

// ---------------------------------------------------------------- 7

fn metric_oracles() -> Outcome {
    let mut rng = SeededRng::new(7);
    let transforms: [fn(f64) -> f64; 10] = [
        |x| 3.0 * x + 1.0,
        |x| x.exp(),
        |x| x * x * x + x,
        |x| x.atan(),
        |x| (1.0 + x).ln(),
        |x| x.sqrt(),
        |x| 1.0 / (1.0 + (-4.0 * x).exp()),
        |x| 1e3 * x - 7.0,
        |x| x.powi(5),
        |x| -1.0 / (x + 1.5),
    ];
    let mut checked = 0;
    while checked < 100 {
        let n = 2 + rng.below(200) as usize;
        // a coarse grid gives plenty of ties
        let grid = [4u64, 16, 64, 1 << 20][rng.below(4) as usize];
        let scores: Vec<f64> = (0..n).map(|_| rng.below(grid + 1) as f64 / grid as f64).collect();
        let labels: Vec<bool> = (0..n).map(|_| rng.uniform() < 0.4).collect();
        let (p, q) = (labels.iter().filter(|&&l| l).count(), labels.iter().filter(|&&l| !l).count());
        if p == 0 || q == 0 {
            continue;
        }
        let mut pairs = 0.0;
        for i in (0..n).filter(|&i| labels[i]) {
            for j in (0..n).filter(|&j| !labels[j]) {
                pairs += if scores[i] > scores[j] {
                    1.0
                } else if scores[i] == scores[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
        let oracle = pairs / (p * q) as f64;
        let got = auroc(&scores, &labels).map_err(|e| e.to_string())?;
        ensure!((got - oracle).abs() <= 1e-12, "auroc {got} vs pair count {oracle}");
        for (k, f) in transforms.iter().enumerate() {
            let moved: Vec<f64> = scores.iter().map(|&s| f(s)).collect();
            let g = auroc(&moved, &labels).map_err(|e| e.to_string())?;
            ensure!(g == got, "transform {k} changed auroc {got} -> {g}");
        }

        let predicted: Vec<bool> = (0..n).map(|_| rng.uniform() < 0.5).collect();
        let tp = (0..n).filter(|&i| predicted[i] && labels[i]).count() as f64;
        let pred_pos = predicted.iter().filter(|&&x| x).count() as f64;
        let direct = if tp == 0.0 {
            0.0
        } else {
            let (prec, rec) = (tp / pred_pos, tp / p as f64);
            2.0 * prec * rec / (prec + rec)
        };
        let f1 = Confusion::from_predictions(&predicted, &labels).f1();
        ensure!((f1 - direct).abs() <= 1e-12, "f1 {f1} vs recount {direct}");
        checked += 1;
    }
    Ok("100 score sets match pair counting; 10 monotone transforms each leave AUROC unchanged; F1 matches".into())
}

// ---------------------------------------------------------------- 8

/// sin of the largest principal angle between the column spans of two
/// orthonormal `d x 2` bases.
fn max_principal_sine(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let residual = b - a * (a.transpose() * b);
    residual.singular_values().max()
}

fn pca_fidelity() -> Outcome {
    let mut rng = SeededRng::new(8);
    let mut worst: f64 = 0.0;
    for m in 0..20 {
        let rows: Vec<Vec<f32>> = (0..10)
            .map(|_| (0..5).map(|j| (rng.normal() * (1.0 + j as f64)) as f32).collect())
            .collect();
        let embs: Vec<Embedding> = rows
            .iter()
            .enumerate()
            .map(|(i, v)| Embedding {
                vector: v.clone(),
                modality: Modality::Fused,
                source_id: format!("m{m}_{i}"),
            })
            .collect();
        let pca = pca_2d(&embs).map_err(|e| e.to_string())?;
        let x = DMatrix::from_fn(10, 5, |i, j| rows[i][j] as f64);
        let mean = x.row_mean();
        let centered = DMatrix::from_fn(10, 5, |i, j| x[(i, j)] - mean[j]);
        let cov = centered.transpose() * &centered / 9.0;
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..5).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
        let oracle = DMatrix::from_fn(5, 2, |i, k| eig.eigenvectors[(i, order[k])]);
        let ours = DMatrix::from_fn(5, 2, |i, k| pca.components[k][i]);
        let gram = ours.transpose() * &ours;
        ensure!((gram - DMatrix::identity(2, 2)).abs().max() < 1e-8, "matrix {m}: components not orthonormal");
        let sine = max_principal_sine(&oracle, &ours);
        ensure!(sine < 1e-6, "matrix {m}: principal angle sine {sine:.3e}");
        let [l1, l2] = pca.explained_variance;
        ensure!(l1 >= l2 && l2 >= 0.0, "matrix {m}: variances {l1} {l2}");
        for k in 0..2 {
            let want = eig.eigenvalues[order[k]];
            ensure!((pca.explained_variance[k] - want).abs() <= 1e-8 * want.abs().max(1.0), "matrix {m}: eigenvalue {k}");
        }
        worst = worst.max(sine);
    }

    // Figure-2 style export through the CLI for a fixture embedding set
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let models = tmp.path().join("models");
    common::build_models(&models, 21);
    let csv = tmp.path().join("viz").join("fused.csv");
    let code = run([
        "vimguard",
        "viz-embeddings",
        "--models",
        models.to_str().unwrap(),
        "--manifest",
        common::mock_batch_dir().join("manifest.jsonl").to_str().unwrap(),
        "--out",
        csv.to_str().unwrap(),
    ]);
    ensure!(code == 0, "viz-embeddings exited {code}");
    let text = std::fs::read_to_string(&csv).map_err(|e| e.to_string())?;
    let mut lines = text.lines();
    ensure!(lines.next() == Some("x,y,label,modality"), "bad header");
    let body: Vec<&str> = lines.collect();
    ensure!(body.len() == 20, "{} rows", body.len());
    let labels: BTreeSet<&str> = body.iter().map(|l| l.split(',').nth(2).unwrap_or("")).collect();
    ensure!(labels == BTreeSet::from(["claim", "no_claim"]), "labels {labels:?}");
    ensure!(body.iter().all(|l| l.ends_with(",fused") && l.split(',').count() == 4), "bad rows");
    let side: serde_json::Value =
        serde_json::from_slice(&std::fs::read(csv.with_extension("json")).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    let ev = side["explained_variance"].as_array().ok_or("sidecar lacks explained_variance")?;
    ensure!(ev[0].as_f64() >= ev[1].as_f64(), "sidecar variances increase");
    Ok(format!("20 matrices, largest principal-angle sine {worst:.2e}; 20-row CSV + sidecar written"))
}

// ---------------------------------------------------------------- 9

fn end_to_end_determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path();
    common::build_models(&dir.join("models"), 11);
    let root = common::mock_batch_dir();
    let p = |x: &std::path::Path| x.to_str().unwrap().to_string();
    let code = run(["vimguard", "index", "build", "--corpus", &p(&root.join("corpus.jsonl")), "--out", &p(&dir.join("index"))]);
    ensure!(code == 0, "index build exited {code}");
    let mut streams = Vec::new();
    for jobs in ["1", "8"] {
        let out = dir.join(format!("outcomes_{jobs}.jsonl"));
        let code = run([
            "vimguard".to_string(),
            "check".into(),
            "--manifest".into(),
            p(&root.join("manifest.jsonl")),
            "--models".into(),
            p(&dir.join("models")),
            "--index".into(),
            p(&dir.join("index")),
            "--client".into(),
            "mock".into(),
            "--mock-script".into(),
            p(&root.join("script.json")),
            "--jobs".into(),
            jobs.into(),
            "--no-cache".into(),
            "--out".into(),
            p(&out),
        ]);
        ensure!(code == 0, "check --jobs {jobs} exited {code}");
        streams.push(std::fs::read(&out).map_err(|e| e.to_string())?);
    }
    ensure!(streams[0] == streams[1], "--jobs 1 and --jobs 8 streams differ");

    let mapping = [
        (VerdictDecision::FalseClaims, OutcomeDecision::Misinformative),
        (VerdictDecision::TrueClaims, OutcomeDecision::HarmlessVerified),
        (VerdictDecision::Unverifiable, OutcomeDecision::UnverifiableHarmless),
    ];
    for (v, d) in mapping {
        ensure!(OutcomeDecision::from_verdict(v) == d, "{v:?} maps to {:?}", OutcomeDecision::from_verdict(v));
    }
    let result = read_outcomes(dir.join("outcomes_1.jsonl")).map_err(|e| e.to_string())?;
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    for o in &result.outcomes {
        let d = o.decision.ok_or(format!("{} failed: {:?}", o.bundle_id, o.error))?;
        match &o.verdict {
            None => ensure!(d == OutcomeDecision::HarmlessNoClaim, "{} has no verdict but {d:?}", o.bundle_id),
            Some(v) => ensure!(d == OutcomeDecision::from_verdict(v.decision), "{}: {:?} -> {d:?}", o.bundle_id, v.decision),
        }
        *seen.entry(d.as_str()).or_default() += 1;
    }
    let want = BTreeMap::from([
        ("harmless_no_claim", 13),
        ("harmless_verified", 3),
        ("misinformative", 3),
        ("unverifiable_harmless", 1),
    ]);
    ensure!(seen == want, "decisions {seen:?}");
    Ok(format!("{} byte-identical bytes at --jobs 1 and 8; decisions {seen:?}", streams[0].len()))
}

// ---------------------------------------------------------------- 10

fn read_dir_bytes(dir: &std::path::Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

fn format_round_trips() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path();
    let cfg = Config::default();

    let mut n_bundles = 0;
    for (i, style) in [SynthStyle::TalkingHead, SynthStyle::Dance].into_iter().enumerate() {
        let b = synth_bundle(&format!("rt{i}"), style, 40 + i as u64, &cfg.synth);
        let (a, c) = (dir.join(format!("b{i}a")), dir.join(format!("b{i}b")));
        write_bundle(&a, &b).map_err(|e| e.to_string())?;
        let back = load_bundle(&a).map_err(|e| e.to_string())?;
        ensure!(back == b, "bundle {i} changed on read");
        write_bundle(&c, &back).map_err(|e| e.to_string())?;
        ensure!(read_dir_bytes(&a) == read_dir_bytes(&c), "bundle {i} rewrite differs");
        n_bundles += 1;
    }
    // committed fixture bundles (8 kHz audio is resampled on read, so only
    // the second write must match the third)
    let fixture = common::mock_batch_dir().join("bundles").join("mb_00");
    let first = load_bundle(&fixture).map_err(|e| e.to_string())?;
    write_bundle(dir.join("fx1"), &first).map_err(|e| e.to_string())?;
    let second = load_bundle(dir.join("fx1")).map_err(|e| e.to_string())?;
    write_bundle(dir.join("fx2"), &second).map_err(|e| e.to_string())?;
    ensure!(read_dir_bytes(&dir.join("fx1")) == read_dir_bytes(&dir.join("fx2")), "fixture bundle rewrite differs");

    let mae = MaeModel::<f32>::new(MaeConfig::audio(&AudioTokenConfig::default(), &ModelDims::default()), 3)
        .map_err(|e| e.to_string())?;
    let head = ClaimHead::new(16, 8, 0.5, 0.02, 4).map_err(|e| e.to_string())?;
    let ckpts = [
        ("mae", mae.to_checkpoint(Some(&MaeOptState::new(&mae)))),
        ("encoder", mae.encoder_only().to_checkpoint()),
        ("claim_head", head.to_checkpoint()),
    ];
    for (name, c) in &ckpts {
        let bytes = c.to_bytes();
        let path = dir.join(format!("{name}.vgck"));
        c.save(&path).map_err(|e| e.to_string())?;
        let again = Checkpoint::load(&path).map_err(|e| e.to_string())?.to_bytes();
        ensure!(bytes == again, "{name} checkpoint rewrite differs");
        ensure!(Checkpoint::from_bytes(&bytes).map_err(|e| e.to_string())?.to_bytes() == bytes, "{name} bytes");
    }

    let index = InvertedIndex::build(synth_articles(120, 400, 5)).map_err(|e| e.to_string())?;
    index.save(dir.join("i1")).map_err(|e| e.to_string())?;
    let loaded = InvertedIndex::load(dir.join("i1")).map_err(|e| e.to_string())?;
    ensure!(loaded == index, "index changed on read");
    loaded.save(dir.join("i2")).map_err(|e| e.to_string())?;
    let (a, b) = (read_dir_bytes(&dir.join("i1")), read_dir_bytes(&dir.join("i2")));
    ensure!(a.len() == INDEX_FILES.len() && a == b, "index rewrite differs");
    Ok(format!("{} bundles + fixture, {} checkpoints, {}-file index rewritten byte-identically", n_bundles, ckpts.len(), a.len()))
}

// ----------------------------------------------------------------

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome, Option<Duration>); 10] = [
        (1, "gradient correctness", gradient_correctness, Some(Duration::from_secs(60))),
        (2, "masking contract", masking_contract, None),
        (3, "pretraining descent", pretraining_descent, Some(Duration::from_secs(300))),
        (4, "claim head separability", claim_head_separability, None),
        (5, "retrieval oracle equivalence", retrieval_oracle, None),
        (6, "gate efficiency", gate_efficiency, None),
        (7, "metric oracles", metric_oracles, None),
        (8, "pca fidelity", pca_fidelity, None),
        (9, "end-to-end determinism", end_to_end_determinism, None),
        (10, "format round-trips", format_round_trips, None),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (n, name, f, budget) in criteria {
        if !filter.is_empty() && !filter.iter().any(|w| name.contains(w.as_str())) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let result = match (result, budget) {
            (Ok(msg), Some(b)) if elapsed > b => Err(format!("{msg}; took {elapsed:.1?}, budget {b:?}")),
            (r, _) => r,
        };
        match result {
            Ok(msg) => println!("criterion {n:>2} PASS  {name}: {msg} [{:.1}s]", elapsed.as_secs_f64()),
            Err(msg) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name}: {msg} [{:.1}s]", elapsed.as_secs_f64());
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
