//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on failure.

#[path = "../../core/tests/oracle/mod.rs"]
mod oracle;

use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use mdhan::corpus::{is_signal_tweet, synth_corpus, synth_embeddings, Corpus, Label, SynthSpec};
use mdhan::eval::{evaluate, metrics, nb_train, run_ablations, AblationSpec, ConfusionMatrix, MetricsReport};
use mdhan::exec::ExecMode;
use mdhan::explain::{extract_attention, render_html};
use mdhan::features::{FeatureVector, Modality, FEATURE_DIM};
use mdhan::lexicons::{EmbeddingTable, Lexicons};
use mdhan::model::{load_checkpoint, train, Mdhan, ModelConfig, UserInput};
use mdhan::pipeline::{prepare, PipelineConfig, Prepared};
use mdhan::topics::{fit_lda, LdaConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

type Criterion = (u8, &'static str, fn() -> Check, Option<Duration>);

const BIN: &str = env!("CARGO_BIN_EXE_mdhan");

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn desk(epochs: usize, seed: u64) -> ModelConfig {
    ModelConfig { epochs, seed, ..ModelConfig::desk() }
}

struct Prep {
    prepared: Prepared,
    emb: Arc<EmbeddingTable>,
}

fn prep(corpus: &Corpus, seed: u64) -> Result<Prep, String> {
    let emb = synth_embeddings(ModelConfig::desk().embed_dim, seed).map_err(err)?;
    let cfg = PipelineConfig::default();
    let prepared = prepare(corpus, &Lexicons::bundled(), &emb, &cfg, ModelConfig::desk().n_max, ExecMode::Parallel)
        .map_err(err)?;
    Ok(Prep { prepared, emb: Arc::new(emb) })
}

fn fit(p: &Prep, cfg: ModelConfig) -> Result<(Mdhan, mdhan::model::History), String> {
    let mut model = Mdhan::new(cfg, p.emb.clone()).map_err(err)?;
    let history = train(&mut model, &p.prepared.train, ExecMode::Parallel).map_err(err)?;
    Ok((model, history))
}

fn test_report(model: &Mdhan, p: &Prep) -> Result<MetricsReport, String> {
    Ok(evaluate(model, &p.prepared.test, ExecMode::Parallel).map_err(err)?.0)
}

fn run_cli(args: &[&str]) -> Result<String, String> {
    let out = Command::new(BIN).args(args).output().map_err(err)?;
    if !out.status.success() {
        return Err(format!("mdhan {} failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn read(p: &Path) -> Result<Vec<u8>, String> {
    std::fs::read(p).map_err(|e| format!("{}: {e}", p.display()))
}

fn gradients() -> Check {
    let out = run_cli(&["gradcheck", "--seed", "1", "--users", "2", "--coords", "1000000", "--h", "1e-5", "--tol", "1e-4"])?;
    let report: serde_json::Value = serde_json::from_str(&out).map_err(err)?;
    let max = report["max_rel_error"].as_f64().ok_or("no max_rel_error")?;
    let checked = report["checked"].as_u64().unwrap_or(0);
    let (cases, worst) = oracle::primitives::check_all(100, 0xacce)?;
    ensure(
        max < 1e-4 && report["passed"] == true && !report["nondeterministic"].as_bool().unwrap_or(true),
        format!("full model: {checked} coordinates, max rel error {max:.2e}; primitives: {cases} cases, worst {worst:.2e}"),
    )
}

fn random_input(r: &mut ChaCha8Rng, cfg: &ModelConfig, vocab: usize) -> UserInput {
    let n_tweets = r.random_range(1..=cfg.l_max + 3);
    let mut tweets: Vec<Vec<usize>> = (0..n_tweets)
        .map(|_| {
            let len = if r.random_bool(0.15) { 0 } else { r.random_range(1..=cfg.n_max + 3) };
            (0..len).map(|_| r.random_range(0..=vocab)).collect()
        })
        .collect();
    let last = tweets.len() - 1;
    if tweets[last].is_empty() {
        tweets[last].push(0);
    }
    let features = FeatureVector::new((0..FEATURE_DIM).map(|_| r.random_range(-2.0..2.0)).collect()).unwrap();
    UserInput { user_id: "u".into(), tweets, features, label: 1.0 }
}

fn attention() -> Check {
    let mut r = ChaCha8Rng::seed_from_u64(2);
    let mut groups = 0usize;
    let mut padded = 0usize;
    let mut model_cache: Option<(u64, Mdhan)> = None;
    for pass in 0..1000u64 {
        let model_id = pass / 50;
        if model_cache.as_ref().is_none_or(|(id, _)| *id != model_id) {
            let embed_dim = r.random_range(2..=6);
            let n_max = r.random_range(2..=8);
            let cfg = ModelConfig {
                embed_dim,
                hidden: r.random_range(2..=6),
                mlp_hidden: r.random_range(2..=6),
                n_max,
                l_max: r.random_range(1..=6),
                max_pool_words: if r.random_bool(0.3) { Some(r.random_range(1..=n_max)) } else { None },
                seed: model_id,
                ..ModelConfig::default()
            };
            let rows: Vec<_> = (0..12).map(|i| (format!("w{i}"), (0..embed_dim).map(|_| r.random_range(-1.0..1.0)).collect())).collect();
            let emb = EmbeddingTable::from_rows(embed_dim, rows).map_err(err)?;
            model_cache = Some((model_id, Mdhan::new(cfg, Arc::new(emb)).map_err(err)?));
        }
        let model = &model_cache.as_ref().unwrap().1;
        let cfg = &model.config;
        let input = random_input(&mut r, cfg, model.embeddings.len());
        let enc = model.predict(&input).map_err(err)?.encoding;
        let tweets = input.truncated(cfg.n_max, cfg.l_max);
        let check_group = |w: &[f64]| w.iter().all(|&x| x >= 0.0) && (w.iter().sum::<f64>() - 1.0).abs() <= 1e-6;
        if enc.tweet_attn.len() != tweets.len() || enc.word_attn.len() != tweets.len() {
            return Err(format!("pass {pass}: attention length mismatch"));
        }
        if !check_group(&enc.tweet_attn) {
            return Err(format!("pass {pass}: tweet attention {:?} is not a simplex point", enc.tweet_attn));
        }
        groups += 1;
        for (t, (w, tokens)) in enc.word_attn.iter().zip(&tweets).enumerate() {
            if tokens.is_empty() {
                if enc.tweet_attn[t] != 0.0 || !w.is_empty() {
                    return Err(format!("pass {pass}: empty tweet {t} carries weight"));
                }
                padded += 1;
                continue;
            }
            if w.len() != cfg.n_max || !check_group(w) {
                return Err(format!("pass {pass}: word attention {w:?} of tweet {t} is not a simplex point"));
            }
            if w[tokens.len()..].iter().any(|&x| x != 0.0) {
                return Err(format!("pass {pass}: padded word slot of tweet {t} is nonzero"));
            }
            groups += 1;
            padded += cfg.n_max - tokens.len();
        }
    }
    Ok(format!("1000 passes, {groups} attention groups, {padded} padded positions exactly zero"))
}

fn learnability() -> Check {
    let p = prep(&synth_corpus(64, 1.0, 0).map_err(err)?, 0)?;
    let (model, history) = fit(&p, desk(30, 0))?;
    let best_train = history.epochs.iter().map(|e| e.train_accuracy).fold(0.0, f64::max);
    let held_out = test_report(&model, &p)?.accuracy;
    let mut chance = Vec::new();
    for seed in 1..=5 {
        let p = prep(&synth_corpus(64, 0.0, seed).map_err(err)?, seed)?;
        let (model, _) = fit(&p, desk(30, seed))?;
        chance.push(test_report(&model, &p)?.accuracy);
    }
    let mean = chance.iter().sum::<f64>() / chance.len() as f64;
    let listed: Vec<String> = chance.iter().map(|a| format!("{a:.3}")).collect();
    ensure(
        best_train >= 0.95 && held_out >= 0.90 && (0.35..=0.65).contains(&mean),
        format!(
            "signal 1: best train acc {best_train:.3}, held-out {held_out:.3}; signal 0 held-out [{}], mean {mean:.3}",
            listed.join(", ")
        ),
    )
}

fn ablate(corpus: &Corpus, names: &[&str], seed: u64) -> Result<Vec<(String, f64)>, String> {
    let p = prep(corpus, seed)?;
    let spec = AblationSpec::from_names(names).map_err(err)?;
    let rows = run_ablations(&spec, &p.prepared.train, &p.prepared.test, p.emb.clone(), &desk(30, seed), ExecMode::Parallel)
        .map_err(err)?;
    Ok(rows.into_iter().map(|r| (r.name, r.report.f1)).collect())
}

fn f1_of(rows: &[(String, f64)], name: &str) -> f64 {
    rows.iter().find(|(n, _)| n == name).map(|(_, f)| *f).unwrap_or(f64::NAN)
}

fn fmt_rows(rows: &[(String, f64)]) -> String {
    rows.iter().map(|(n, f)| format!("{n} F1 {f:.3}")).collect::<Vec<_>>().join(", ")
}

fn fusion() -> Check {
    let spec = SynthSpec { split_channels: true, ..SynthSpec::uniform(200, 1.0, 21) };
    let rows = ablate(&spec.generate().map_err(err)?, &["MDHAN", "HAN-only", "MM-only"], 21)?;
    let (full, han, mm) = (f1_of(&rows, "MDHAN"), f1_of(&rows, "HAN-only"), f1_of(&rows, "MM-only"));
    ensure(full >= han.max(mm) - 0.02 && han >= 0.65 && mm >= 0.65, fmt_rows(&rows))
}

fn ablation() -> Check {
    let spec = SynthSpec { text_signal: 0.0, social_signal: 1.0, emotion_signal: 0.0, ..SynthSpec::uniform(200, 0.0, 31) };
    let rows = ablate(&spec.generate().map_err(err)?, &["MDHAN", "MDHAN-S", "MDHAN-E"], 31)?;
    let (full, no_s, no_e) = (f1_of(&rows, "MDHAN"), f1_of(&rows, "MDHAN-S"), f1_of(&rows, "MDHAN-E"));
    ensure(
        full - no_s >= 0.10 && (full - no_e).abs() < 0.05,
        format!("{}; drop without S {:.3}, change without E {:.3}", fmt_rows(&rows), full - no_s, (full - no_e).abs()),
    )
}

fn simplex(p: &[f64]) -> bool {
    p.iter().all(|&x| x >= 0.0) && (p.iter().sum::<f64>() - 1.0).abs() <= 1e-9
}

fn lda() -> Check {
    use oracle::lda::{planted_corpus, purity, reference_lda, theme_mass, themes};
    let themes = themes();
    let docs = planted_corpus(&themes, 20, 40, 11);
    let cfg = LdaConfig { iterations: 200, seed: 3, ..LdaConfig::with_topics(3) };
    let model = fit_lda(&docs, &cfg).map_err(err)?;
    let phi: Vec<Vec<f64>> = (0..3).map(|t| model.phi(t).to_vec()).collect();
    let (lib, lib_assign) = purity(&theme_mass(&phi, model.vocab(), &themes));
    let reference = reference_lda(&docs, 3, cfg.alpha, cfg.beta, 200, 5);
    let (refp, _) = purity(&theme_mass(&reference.phi, &reference.vocab, &themes));
    let simplices = phi.iter().chain(model.doc_topics()).all(|p| simplex(p))
        && reference.phi.iter().chain(&reference.theta).all(|p| simplex(p));
    ensure(
        lib >= 0.8 && refp >= 0.8 && (lib - refp).abs() < 0.1 && simplices,
        format!("purity {lib:.3} (reference {refp:.3}), topic to theme {lib_assign:?}, simplex {simplices}"),
    )
}

fn metric_oracle() -> Check {
    let m = metrics(&ConfusionMatrix::new(8, 2, 1, 9)).map_err(err)?;
    let train: Vec<(Vec<&str>, usize)> = vec![
        (vec!["sad", "tired", "sad"], 1),
        (vec!["tired", "alone"], 1),
        (vec!["happy", "game", "tired"], 0),
        (vec!["game", "friends"], 0),
    ];
    let docs: Vec<_> = train
        .iter()
        .map(|(d, l)| (d.iter().map(|w| w.to_string()).collect(), if *l == 1 { Label::Depressed } else { Label::NotDepressed }))
        .collect();
    let nb = nb_train(&docs).map_err(err)?;
    let mut worst = 0.0f64;
    for q in [vec!["sad"], vec!["game", "tired"], vec!["alone", "happy", "unseen"], vec!["friends", "sad", "sad"]] {
        let expected = oracle::bayes::brute_force_posterior(&train, 2, &q);
        let got = nb.posterior(&q.iter().map(|w| w.to_string()).collect::<Vec<_>>());
        worst = worst.max((got[0] - expected[0]).abs()).max((got[1] - expected[1]).abs());
    }
    ensure(
        (m.accuracy - 0.85).abs() < 1e-12 && (m.positive.f1 - 0.842105).abs() < 1e-6 && worst < 1e-9,
        format!("accuracy {:.6}, positive F1 {:.6}, NB max posterior error {worst:.1e}", m.accuracy, m.positive.f1),
    )
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(err)?;
    let d = dir.path();
    let s = |p: &str| d.join(p).to_string_lossy().into_owned();
    for tag in ["a", "b"] {
        run_cli(&["synth", "--users", "64", "--seed", "8", "--out", &s(&format!("corpus_{tag}.jsonl")), "--embeddings-out", &s(&format!("emb_{tag}.txt"))])?;
    }
    let synth_same = read(&d.join("corpus_a.jsonl"))? == read(&d.join("corpus_b.jsonl"))?
        && read(&d.join("emb_a.txt"))? == read(&d.join("emb_b.txt"))?;
    let config = format!(
        "[paths]\ncorpus = {:?}\nembeddings = {:?}\n\n[model]\nhidden = 16\nmlp_hidden = 32\nl_max = 50\nepochs = 8\nseed = 5\n",
        s("corpus_a.jsonl"),
        s("emb_a.txt")
    );
    std::fs::write(d.join("run.toml"), config).map_err(err)?;
    let runs = [("r1", "parallel"), ("r2", "parallel"), ("r3", "sequential")];
    for (out, exec) in runs {
        run_cli(&["--config", &s("run.toml"), "--exec", exec, "train", "--out-dir", &s(out)])?;
    }
    let file = |run: &str, f: &str| read(&d.join(run).join(f));
    let history_same = file("r1", "history.json")? == file("r2", "history.json")?;
    let ckpt_same = file("r1", "model.ckpt")? == file("r2", "model.ckpt")?;
    let exec_same = file("r1", "model.ckpt")? == file("r3", "model.ckpt")?;
    ensure(
        synth_same && history_same && ckpt_same && exec_same,
        format!("synth bytes equal {synth_same}, loss trajectories equal {history_same}, checkpoints equal {ckpt_same}, sequential equals parallel {exec_same}"),
    )
}

fn feature_contract() -> Check {
    let corpus = synth_corpus(64, 1.0, 9).map_err(err)?;
    let p = prep(&corpus, 9)?.prepared;
    let users = p.train_users.users.iter().chain(&p.test_users.users);
    let raw: Vec<&FeatureVector> = p.train_raw.iter().chain(&p.test_raw).collect();
    let mut n = 0;
    for (u, f) in users.zip(&raw) {
        if f.values().len() != 76 {
            return Err(format!("{}: {} features", u.user_id, f.values().len()));
        }
        let hist: f64 = f.hour_histogram().iter().sum();
        if hist != u.tweets.len() as f64 {
            return Err(format!("{}: histogram sums to {hist}, {} tweets", u.user_id, u.tweets.len()));
        }
        if !simplex(f.slice(Modality::Topic)) {
            return Err(format!("{}: topic slice not a simplex point", u.user_id));
        }
        n += 1;
    }
    let normalized_ok = p.train.iter().chain(&p.test).all(|u| u.features.values().len() == 76);
    ensure(normalized_ok && n == raw.len() && n > 0, format!("{n} users: 76 dims, histogram equals tweet count, topic slice simplex"))
}

fn explanation() -> Check {
    let spec = SynthSpec { text_signal: 0.5, social_signal: 0.0, emotion_signal: 0.0, ..SynthSpec::uniform(64, 0.0, 41) };
    let corpus = spec.generate().map_err(err)?;
    let p = prep(&corpus, 41)?;
    let (model, _) = fit(&p, desk(30, 41))?;
    let lex = Lexicons::bundled();
    let (mut signal, mut noise) = (Vec::new(), Vec::new());
    let users: Vec<_> = p.prepared.train_users.users.iter().chain(&p.prepared.test_users.users).collect();
    let inputs: Vec<_> = p.prepared.train.iter().chain(&p.prepared.test).collect();
    for (u, input) in users.iter().zip(&inputs) {
        if u.label != Label::Depressed {
            continue;
        }
        let report = extract_attention(&model, u, input, &lex.stopwords).map_err(err)?;
        for t in &report.tweets {
            if is_signal_tweet(&t.text) {
                signal.push(t.weight);
            } else {
                noise.push(t.weight);
            }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    let (ms, mn) = (mean(&signal), mean(&noise));

    let dir = tempfile::tempdir().map_err(err)?;
    let ckpt = dir.path().join("model.ckpt");
    model.save_checkpoint(&ckpt, &serde_json::Value::Null).map_err(err)?;
    let render = || -> Result<Vec<String>, String> {
        let m = Mdhan::from_checkpoint(&load_checkpoint(&ckpt).map_err(err)?, p.emb.clone()).map_err(err)?;
        users
            .iter()
            .zip(&inputs)
            .map(|(u, i)| Ok(render_html(&extract_attention(&m, u, i, &lex.stopwords).map_err(err)?)))
            .collect()
    };
    let identical = render()? == render()?;
    ensure(
        ms > mn && identical && !signal.is_empty() && !noise.is_empty(),
        format!(
            "mean tweet weight signal {ms:.4} ({} tweets) vs noise {mn:.4} ({} tweets); HTML byte-identical {identical}",
            signal.len(),
            noise.len()
        ),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "gradient correctness", gradients, Some(Duration::from_secs(120))),
        (2, "attention invariants", attention, None),
        (3, "learnability", learnability, Some(Duration::from_secs(600))),
        (4, "fusion superiority", fusion, None),
        (5, "ablation sensitivity", ablation, None),
        (6, "LDA oracle agreement", lda, None),
        (7, "metric oracle", metric_oracle, None),
        (8, "determinism", determinism, None),
        (9, "feature contract", feature_contract, None),
        (10, "explanation fidelity", explanation, None),
    ];
    let only: Vec<u8> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect())
        .unwrap_or_default();
    let mut failed = 0;
    for (n, name, check, limit) in criteria {
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let over = limit.filter(|l| elapsed > *l);
        let (status, detail) = match (&result, over) {
            (Ok(d), None) => ("PASS", d.clone()),
            (Ok(d), Some(l)) => ("FAIL", format!("{d}; exceeded {}s budget", l.as_secs())),
            (Err(d), _) => ("FAIL", d.clone()),
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!("criterion {n:>2} {status} {name}: {detail} [{:.1}s]", elapsed.as_secs_f64());
    }
    if failed > 0 {
        println!("acceptance: {failed} criteria failed");
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed");
}
