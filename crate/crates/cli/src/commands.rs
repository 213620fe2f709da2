use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, Context};
use serde::Serialize;

use mdhan::autodiff::{grad_check, GradCheckConfig};
use mdhan::corpus::{filter_users, load_corpus, split, Corpus, SynthSpec};
use mdhan::eval::{
    ablation_csv, evaluate, metrics, nb_train_users, run_ablations, sweep_csv, tweet_count_sweep, AblationSpec,
    ConfusionMatrix,
};
use mdhan::exec::ExecMode;
use mdhan::explain::{extract_attention, render_html, symptom_wordclouds, CategoryRank};
use mdhan::features::{features_csv, user_document, Modality, ModalityMask, FeatureVector};
use mdhan::lexicons::{load_embeddings, EmbeddingTable, Lexicons, SymptomLexicon};
use mdhan::model::{load_checkpoint, train, Mdhan, ModelConfig, Pass};
use mdhan::pipeline::{expanded_symptoms, prepare, reencode, synthetic_inputs, Artifacts, Prepared};
use mdhan::topics::{fit_lda, top_words};

use crate::config::{RunConfig, SchemaError};
use crate::{Cli, Command, DataArgs, ModelArgs, PipelineArgs, Preset, RankArg, SplitArg};

/// Raised by `gradcheck` when the report fails.
#[derive(Debug)]
pub struct GradCheckFailed(pub f64);

impl std::fmt::Display for GradCheckFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "gradient check failed: max relative error {:.3e}", self.0)
    }
}

impl std::error::Error for GradCheckFailed {}

/// Flag values that parse but are not meaningful.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Exit code and error kind for an error chain.
pub fn classify(e: &anyhow::Error) -> (u8, &'static str) {
    for cause in e.chain() {
        if cause.is::<GradCheckFailed>() {
            return (5, "gradcheck");
        }
        if cause.is::<UsageError>() {
            return (2, "usage");
        }
        if cause.is::<SchemaError>() || cause.is::<serde_json::Error>() {
            return (4, "schema");
        }
        if let Some(me) = cause.downcast_ref::<mdhan::Error>() {
            match me {
                mdhan::Error::Parse { .. }
                | mdhan::Error::DuplicateUser(_)
                | mdhan::Error::Json(_)
                | mdhan::Error::Checkpoint(_) => return (4, "schema"),
                mdhan::Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
                    return (3, "missing_file")
                }
                _ => {}
            }
        }
        if let Some(io) = cause.downcast_ref::<std::io::Error>() {
            if io.kind() == std::io::ErrorKind::NotFound {
                return (3, "missing_file");
            }
        }
    }
    (1, "runtime")
}

struct Ctx {
    config: RunConfig,
    exec: ExecMode,
}

impl Ctx {
    fn lexicons(&self) -> anyhow::Result<Lexicons> {
        Ok(match &self.config.paths.assets {
            Some(dir) => Lexicons::load_dir(dir)?,
            None => Lexicons::bundled(),
        })
    }

    fn corpus(&self) -> anyhow::Result<Corpus> {
        let p = self.config.paths.corpus.as_ref().ok_or_else(|| anyhow!("no corpus given (use --corpus)"))?;
        Ok(load_corpus(p)?)
    }

    fn embeddings(&self) -> anyhow::Result<Arc<EmbeddingTable>> {
        let p = self.config.paths.embeddings.as_ref().ok_or_else(|| anyhow!("no embeddings given (use --embeddings)"))?;
        Ok(Arc::new(load_embeddings(p)?))
    }

    fn prepare(&self, emb: &EmbeddingTable) -> anyhow::Result<(Lexicons, Prepared)> {
        let lex = self.lexicons()?;
        let corpus = self.corpus()?;
        let prepared = prepare(&corpus, &lex, emb, &self.config.pipeline, self.config.model.n_max, self.exec)?;
        Ok((lex, prepared))
    }

    /// Model config with `embed_dim` taken from the embedding table.
    fn model_config(&mut self, emb: &EmbeddingTable) -> ModelConfig {
        if self.config.model.embed_dim != emb.dim() {
            log::info!("embed_dim set to {} from the embeddings file", emb.dim());
            self.config.model.embed_dim = emb.dim();
        }
        self.config.model.clone()
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> anyhow::Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn json<T: Serialize>(v: &T) -> anyhow::Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn out_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn parse_modalities(s: &str) -> anyhow::Result<ModalityMask> {
    let mut mask = ModalityMask::NONE;
    if s == "-" {
        return Ok(mask);
    }
    for c in s.chars() {
        let m = Modality::from_letter(c.to_ascii_uppercase())
            .ok_or_else(|| UsageError(format!("unknown modality letter `{c}` (expected S, E, T, D)")))?;
        mask = mask.with(m, true);
    }
    Ok(mask)
}

fn apply_model(cfg: &mut ModelConfig, a: &ModelArgs) -> anyhow::Result<()> {
    if let Some(p) = a.preset {
        let base = match p {
            Preset::Full => ModelConfig::default(),
            Preset::Desk => ModelConfig::desk(),
        };
        cfg.embed_dim = base.embed_dim;
        cfg.hidden = base.hidden;
        cfg.mlp_hidden = base.mlp_hidden;
        cfg.l_max = base.l_max;
    }
    macro_rules! set {
        ($($f:ident),*) => { $( if let Some(v) = a.$f { cfg.$f = v; } )* };
    }
    set!(epochs, seed, lr, batch, hidden, mlp_hidden, dropout, l_max, n_max);
    if a.max_pool_words.is_some() {
        cfg.max_pool_words = a.max_pool_words;
    }
    if let Some(m) = &a.modalities {
        cfg.modality_mask = parse_modalities(m)?;
    }
    if a.no_text {
        cfg.use_text = false;
    }
    Ok(())
}

fn apply_pipeline(c: &mut RunConfig, a: &PipelineArgs) {
    let p = &mut c.pipeline;
    if let Some(v) = a.min_posts {
        p.min_posts = v;
    }
    if let Some(v) = a.max_followers {
        p.max_followers = v;
    }
    if let Some(v) = a.train_fraction {
        p.split.train_fraction = v;
    }
    if let Some(v) = a.split_seed {
        p.split.seed = v;
    }
    if let Some(v) = a.lda_iterations {
        p.lda.iterations = v;
    }
    if let Some(v) = a.lda_seed {
        p.lda.seed = v;
    }
    if let Some(v) = a.expansion_k {
        p.expansion_k = v;
    }
    if let Some(v) = a.expansion_tau {
        p.expansion_tau = v;
    }
}

fn apply_data(c: &mut RunConfig, d: &DataArgs) {
    if let Some(p) = &d.corpus {
        c.paths.corpus = Some(p.clone());
    }
    if let Some(p) = &d.embeddings {
        c.paths.embeddings = Some(p.clone());
    }
}

fn set_corpus(c: &mut RunConfig, p: &Option<PathBuf>) {
    if let Some(p) = p {
        c.paths.corpus = Some(p.clone());
    }
}

pub fn run(cli: &Cli) -> anyhow::Result<()> {
    let mut config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(a) = &cli.assets {
        config.paths.assets = Some(a.clone());
    }
    let exec = ExecMode::from(cli.exec);
    match &cli.command {
        Command::Synth { .. } | Command::Gradcheck { .. } => {}
        Command::Ingest { pipeline, .. } => apply_pipeline(&mut config, pipeline),
        Command::Features { data, pipeline, .. } => {
            apply_data(&mut config, data);
            apply_pipeline(&mut config, pipeline);
        }
        Command::LdaFit { corpus, pipeline, .. } | Command::BaselineNb { corpus, pipeline, .. } => {
            set_corpus(&mut config, corpus);
            apply_pipeline(&mut config, pipeline);
        }
        Command::Train { data, model, pipeline, .. }
        | Command::Ablate { data, model, pipeline, .. }
        | Command::Sweep { data, model, pipeline, .. } => {
            apply_data(&mut config, data);
            apply_model(&mut config.model, model)?;
            apply_pipeline(&mut config, pipeline);
        }
        Command::Eval { data, .. } | Command::Explain { data, .. } => apply_data(&mut config, data),
    }
    let mut ctx = Ctx { config, exec };
    match &cli.command {
        Command::Synth {
            users,
            signal,
            seed,
            text_signal,
            social_signal,
            emotion_signal,
            split_channels,
            out,
            embeddings_out,
            dim,
        } => {
            let mut spec = SynthSpec::uniform(*users, *signal, *seed);
            spec.text_signal = text_signal.unwrap_or(*signal);
            spec.social_signal = social_signal.unwrap_or(*signal);
            spec.emotion_signal = emotion_signal.unwrap_or(*signal);
            spec.split_channels = *split_channels;
            let corpus = spec.generate()?;
            corpus.write_jsonl(out)?;
            if let Some(p) = embeddings_out {
                mdhan::corpus::synth_embeddings(*dim, *seed)?.write(p)?;
            }
            print!("{}", json(&serde_json::json!({ "users": corpus.len(), "out": out, "spec": spec }))?);
            Ok(())
        }
        Command::Ingest { corpus, out, .. } => {
            let raw = load_corpus(corpus)?;
            let p = &ctx.config.pipeline;
            let filtered = filter_users(&raw, p.min_posts, p.max_followers)?;
            if let Some(o) = out {
                filtered.write_jsonl(o)?;
            }
            print!(
                "{}",
                json(&serde_json::json!({
                    "input": { "users": raw.len(), "classes": raw.class_counts() },
                    "filtered": { "users": filtered.len(), "classes": filtered.class_counts() },
                    "min_posts": p.min_posts,
                    "max_followers": p.max_followers,
                    "warnings": filtered.warnings,
                }))?
            );
            Ok(())
        }
        Command::Features { out_dir: dir, .. } => {
            out_dir(dir)?;
            let emb = ctx.embeddings()?;
            let (_, p) = ctx.prepare(&emb)?;
            let rows = |users: &Corpus, vecs: &[FeatureVector]| -> Vec<(String, u8, FeatureVector)> {
                users.users.iter().zip(vecs).map(|(u, v)| (u.user_id.clone(), u.label.into(), v.clone())).collect()
            };
            let mut raw = rows(&p.train_users, &p.train_raw);
            raw.extend(rows(&p.test_users, &p.test_raw));
            let norm: Vec<_> = p.train.iter().chain(&p.test).map(|u| (u.user_id.clone(), u.label as u8, u.features.clone())).collect();
            write(&dir.join("features.csv"), features_csv(&raw))?;
            write(&dir.join("features_normalized.csv"), features_csv(&norm))?;
            write(&dir.join("lda.json"), p.artifacts.lda.to_json()?)?;
            write(&dir.join("norm.json"), json(&p.artifacts.norm)?)?;
            let split: Vec<_> = p
                .train_users
                .users
                .iter()
                .map(|u| (u.user_id.as_str(), "train"))
                .chain(p.test_users.users.iter().map(|u| (u.user_id.as_str(), "test")))
                .collect();
            write(&dir.join("split.json"), json(&split)?)?;
            ctx.config.echo(dir)?;
            Ok(())
        }
        Command::LdaFit { top_words: n, out, .. } => {
            let lex = ctx.lexicons()?;
            let p = &ctx.config.pipeline;
            let filtered = filter_users(&ctx.corpus()?, p.min_posts, p.max_followers)?;
            let (train_users, _) = split(&filtered, &p.split)?;
            let docs: Vec<_> = train_users.users.iter().map(|u| user_document(u, &lex.stopwords)).collect();
            let model = fit_lda(&docs, &p.lda)?;
            model.save(out)?;
            let topics = (0..model.k()).map(|t| top_words(&model, t, *n)).collect::<mdhan::Result<Vec<_>>>()?;
            print!("{}", json(&serde_json::json!({ "out": out, "documents": docs.len(), "topics": topics }))?);
            Ok(())
        }
        Command::Train { out_dir: dir, .. } => {
            out_dir(dir)?;
            let emb = ctx.embeddings()?;
            let cfg = ctx.model_config(&emb);
            let (_, p) = ctx.prepare(&emb)?;
            let mut model = Mdhan::new(cfg, emb)?;
            let history = train(&mut model, &p.train, ctx.exec)?;
            let (train_report, _) = evaluate(&model, &p.train, ctx.exec)?;
            let test_report = if p.test.is_empty() { None } else { Some(evaluate(&model, &p.test, ctx.exec)?.0) };
            model.save_checkpoint(dir.join("model.ckpt"), &p.artifacts.to_json()?)?;
            write(&dir.join("history.json"), history.to_json()? + "\n")?;
            let report = serde_json::json!({ "train": train_report, "test": test_report, "warnings": p.warnings });
            write(&dir.join("metrics.json"), json(&report)?)?;
            ctx.config.echo(dir)?;
            print!("{}", json(&report)?);
            Ok(())
        }
        Command::Eval { checkpoint, split: which, out, .. } => {
            let (model, lex, artifacts) = load_model(&ctx, checkpoint)?;
            let corpus = ctx.corpus()?;
            let (tr, te) = reencode(&corpus, &lex, &model.embeddings, &artifacts, model.config.n_max, ctx.exec)?;
            let inputs = match which {
                SplitArg::Train => tr,
                SplitArg::Test => te,
                SplitArg::All => tr.into_iter().chain(te).collect(),
            };
            let (report, _) = evaluate(&model, &inputs, ctx.exec)?;
            let text = json(&report)?;
            if let Some(o) = out {
                write(o, &text)?;
            }
            print!("{text}");
            Ok(())
        }
        Command::Ablate { variants, out_dir: dir, .. } => {
            out_dir(dir)?;
            if let Some(v) = variants {
                ctx.config.ablation.variants = v.clone();
            }
            let spec = AblationSpec::from_names(&ctx.config.ablation.variants).map_err(|e| UsageError(e.to_string()))?;
            let emb = ctx.embeddings()?;
            let cfg = ctx.model_config(&emb);
            let (_, p) = ctx.prepare(&emb)?;
            let rows = run_ablations(&spec, &p.train, &p.test, emb, &cfg, ctx.exec)?;
            write(&dir.join("ablation.json"), json(&rows)?)?;
            write(&dir.join("ablation.csv"), ablation_csv(&rows))?;
            ctx.config.echo(dir)?;
            print!("{}", ablation_csv(&rows));
            Ok(())
        }
        Command::Sweep { l_values, out_dir: dir, .. } => {
            out_dir(dir)?;
            if let Some(v) = l_values {
                ctx.config.sweep.l_values = v.clone();
            }
            let emb = ctx.embeddings()?;
            let cfg = ctx.model_config(&emb);
            let (_, p) = ctx.prepare(&emb)?;
            let rows = tweet_count_sweep(&ctx.config.sweep.l_values, &p.train, &p.test, emb, &cfg, ctx.exec)?;
            write(&dir.join("sweep.json"), json(&rows)?)?;
            write(&dir.join("sweep.csv"), sweep_csv(&rows))?;
            ctx.config.echo(dir)?;
            print!("{}", sweep_csv(&rows));
            Ok(())
        }
        Command::Explain { checkpoint, split: which, users, top_n, top_categories, rank, out_dir: dir, .. } => {
            out_dir(dir)?;
            let (model, lex, artifacts) = load_model(&ctx, checkpoint)?;
            let corpus = ctx.corpus()?;
            let cfg = &artifacts.config;
            let filtered = filter_users(&corpus, cfg.min_posts, cfg.max_followers)?;
            let (tr, te) = reencode(&corpus, &lex, &model.embeddings, &artifacts, model.config.n_max, ctx.exec)?;
            let inputs: Vec<_> = match which {
                SplitArg::Train => tr,
                SplitArg::Test => te,
                SplitArg::All => tr.into_iter().chain(te).collect(),
            };
            let reports_dir = dir.join("reports");
            out_dir(&reports_dir)?;
            let mut index = Vec::new();
            for (i, input) in inputs.iter().enumerate() {
                if users.as_ref().is_some_and(|u| !u.contains(&input.user_id)) {
                    continue;
                }
                let user = filtered
                    .users
                    .iter()
                    .find(|u| u.user_id == input.user_id)
                    .ok_or_else(|| anyhow!("user `{}` missing from corpus", input.user_id))?;
                let report = extract_attention(&model, user, input, &lex.stopwords)?;
                let stem = format!("{i:05}_{}", sanitize(&input.user_id));
                write(&reports_dir.join(format!("{stem}.html")), render_html(&report))?;
                write(&reports_dir.join(format!("{stem}.json")), report.to_json()? + "\n")?;
                index.push(serde_json::json!({ "user_id": input.user_id, "y_hat": report.y_hat, "file": format!("reports/{stem}.html") }));
            }
            let symptoms: SymptomLexicon = expanded_symptoms(&lex, &model.embeddings, cfg)?;
            let clouds = symptom_wordclouds(&filtered.users, &symptoms, &lex.stopwords, *top_n);
            let rank = match rank {
                RankArg::Mentions => CategoryRank::Mentions,
                RankArg::Tweets => CategoryRank::Tweets,
            };
            let top: Vec<_> = clouds.top_categories(*top_categories, rank).into_iter().map(|c| c.category.clone()).collect();
            write(&dir.join("wordclouds.csv"), clouds.to_csv())?;
            write(&dir.join("wordclouds.json"), json(&serde_json::json!({ "top_categories": top, "categories": clouds.categories }))?)?;
            write(&dir.join("index.json"), json(&index)?)?;
            print!("{}", json(&serde_json::json!({ "reports": index.len(), "top_categories": top }))?);
            Ok(())
        }
        Command::Gradcheck { seed, users, coords, h, tol } => {
            let report = gradcheck(*seed, *users, *coords, *h, *tol)?;
            print!("{}", json(&report)?);
            if report.passed {
                Ok(())
            } else {
                Err(GradCheckFailed(report.max_rel_error).into())
            }
        }
        Command::BaselineNb { out, .. } => {
            let lex = ctx.lexicons()?;
            let p = &ctx.config.pipeline;
            let filtered = filter_users(&ctx.corpus()?, p.min_posts, p.max_followers)?;
            let (train_users, test_users) = split(&filtered, &p.split)?;
            let nb = nb_train_users(&train_users.users, &lex.stopwords)?;
            let cm = ConfusionMatrix::from_pairs(
                test_users
                    .users
                    .iter()
                    .map(|u| (nb.predict_user(u, &lex.stopwords) == mdhan::corpus::Label::Depressed, u.label == mdhan::corpus::Label::Depressed)),
            );
            let text = json(&metrics(&cm)?)?;
            if let Some(o) = out {
                write(o, &text)?;
            }
            print!("{text}");
            Ok(())
        }
    }
}

fn sanitize(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

fn load_model(ctx: &Ctx, path: &Path) -> anyhow::Result<(Mdhan, Lexicons, Artifacts)> {
    let ck = load_checkpoint(path)?;
    let emb = ctx.embeddings()?;
    let model = Mdhan::from_checkpoint(&ck, emb)?;
    let artifacts = Artifacts::from_json(&ck.extras).map_err(|e| SchemaError(format!("checkpoint extras: {e}")))?;
    Ok((model, ctx.lexicons()?, artifacts))
}

/// Full-model check on a tiny network over synthetic users, dropout off.
pub fn gradcheck(seed: u64, users: usize, coords: usize, h: f64, tol: f64) -> anyhow::Result<mdhan::autodiff::GradCheckReport> {
    let users = users.max(2) + users % 2;
    let cfg = ModelConfig { embed_dim: 8, hidden: 4, mlp_hidden: 6, n_max: 10, l_max: 20, seed, ..ModelConfig::default() };
    let (inputs, emb) = synthetic_inputs(users, 0.5, seed, cfg.embed_dim, cfg.n_max)?;
    let model = Mdhan::new(cfg, Arc::new(emb))?;
    let (_, _, grads) = model.batch_grad(&model.params, &inputs, Pass::Eval, ExecMode::Sequential)?;
    let gc = GradCheckConfig { h, tol, coords_per_param: coords, seed, ..GradCheckConfig::default() };
    Ok(grad_check(&model.params, &grads, |p| model.batch_loss(p, &inputs, Pass::Eval), &gc)?)
}
