use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use rlsum::checkpoint::{resolve_step_dir, CheckpointDir};
use rlsum::corpus::{make_prompted_input, split_validation, tokenize, LengthSpec, TokenizedText};
use rlsum::eval::{evaluate, load_eval_dataset, EvalItem, Protocol};
use rlsum::perturb::{generate_dataset, read_dataset, PerturbConfig};
use rlsum::policy::{beam_search, select_best, ConditionalGenerator, PatternConfig, PolicyError};
use rlsum::rewards::{RewardConfig, RewardModel};
use rlsum::rl::{pretrain, train, TrainConfig, TrainMode, TrainState};

use crate::backends::{load_checkpoint, new_generator, read_texts, scorers, Generator, Scorers};
use crate::config::RunConfig;

const RUN_CONFIG_FILE: &str = "run.conf";

fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".run.conf");
    PathBuf::from(name)
}

pub fn perturb_config(cfg: &RunConfig) -> Result<PerturbConfig> {
    let p = PerturbConfig {
        shuffle_ratio: cfg.get("shuffle_ratio")?,
        drop_ratio: cfg.get("drop_ratio")?,
        add_ratio: cfg.get("add_ratio")?,
        seed: cfg.get("seed")?,
    };
    p.validate()?;
    Ok(p)
}

pub fn reward_config(cfg: &RunConfig) -> Result<RewardConfig<f64>> {
    let r = RewardConfig {
        sigma_f: cfg.get("sigma_f")?,
        sigma_l: cfg.get("sigma_l")?,
        lambda: cfg.get("lambda")?,
        alpha: cfg.get("alpha")?,
        max_gen_len: cfg.optional_count("max_gen_len")?,
        sigma_ae: None,
    };
    r.validate()?;
    Ok(r)
}

pub fn train_config(cfg: &RunConfig) -> Result<TrainConfig<f64>> {
    let lengths = cfg
        .list("lengths")
        .iter()
        .map(|s| s.parse::<LengthSpec>())
        .collect::<Result<Vec<_>, _>>()
        .context("parsing `lengths`")?;
    let t = TrainConfig {
        learning_rate: cfg.get("learning_rate")?,
        batch_size: cfg.get("batch_size")?,
        weight_decay: cfg.get("weight_decay")?,
        lengths,
        mode: cfg.get::<TrainMode>("mode")?,
        max_steps: cfg.get("max_steps")?,
        seed: cfg.get("seed")?,
        patience: cfg.optional_count("patience")?,
        eval_every: cfg.get("eval_every")?,
        checkpoint_every: cfg.get("checkpoint_every")?,
    };
    t.validate()?;
    Ok(t)
}

pub fn patterns(cfg: &RunConfig) -> Result<PatternConfig> {
    if !cfg.get::<bool>("filter_patterns")? {
        return Ok(PatternConfig::none());
    }
    Ok(PatternConfig {
        banned_endings: cfg.list("banned_endings").into_iter().collect(),
        banned_anywhere: cfg.list("banned_anywhere").into_iter().collect(),
    })
}

pub fn pretrain_data(cfg: &RunConfig) -> Result<()> {
    let corpus_path = cfg.required_path("corpus")?;
    let out = cfg.required_path("dataset")?;
    let corpus = read_texts(&corpus_path, cfg.optional_count("corpus_limit")?)?;
    let pc = perturb_config(cfg)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let n = generate_dataset(&corpus, &pc, &out).with_context(|| format!("writing {}", out.display()))?;
    cfg.write(&sidecar(&out))?;
    println!("wrote {n} records to {}", out.display());
    Ok(())
}

/// Weights and optimizer state to start from: the latest step under
/// `checkpoint` when resuming, otherwise `init_checkpoint` or a fresh
/// generator built over `vocab_texts`.
fn starting_point<'a>(
    cfg: &RunConfig,
    tc: &TrainConfig<f64>,
    vocab_texts: impl IntoIterator<Item = &'a TokenizedText>,
) -> Result<(Generator, TrainState<f64>)> {
    let root = cfg.required_path("checkpoint")?;
    if cfg.get::<bool>("resume")? {
        if let Some(latest) = CheckpointDir::new(&root).latest()? {
            let (gen, dir) = load_checkpoint(cfg, &latest)?;
            let state = TrainState::load(&dir).with_context(|| format!("loading training state from {}", dir.display()))?;
            println!("resuming from {} (step {})", dir.display(), state.step);
            return Ok((gen, state));
        }
    }
    let gen = match cfg.path("init_checkpoint") {
        Some(p) => {
            let (gen, dir) = load_checkpoint(cfg, &p)?;
            println!("initialised from {}", dir.display());
            gen
        }
        None => new_generator(cfg, vocab_texts)?,
    };
    let state = TrainState::new(tc.optimizer(gen.parameters().len()));
    Ok((gen, state))
}

pub fn pretrain_cmd(cfg: &RunConfig) -> Result<()> {
    let dataset = cfg.required_path("dataset")?;
    let pairs = read_dataset(&dataset).with_context(|| format!("reading {}", dataset.display()))?;
    let tc = train_config(cfg)?;
    let (mut gen, mut state) = starting_point(cfg, &tc, pairs.iter().flat_map(|(i, o)| [i.body(), o]))?;
    let root = cfg.required_path("checkpoint")?;
    let text = cfg.to_text();
    cfg.write(&root.join(RUN_CONFIG_FILE))?;
    let ckpt = CheckpointDir::new(&root);
    let outcome = pretrain(&mut gen, &mut state, &tc, &pairs, Some(&ckpt), &text)?;
    if let (Some(first), Some(last)) = (state.pretrain.first(), state.pretrain.last()) {
        println!("reconstruction loss {:.4} -> {:.4}", first.loss, last.loss);
    }
    println!(
        "ran {} steps; checkpoint {}",
        outcome.steps_run,
        outcome.final_checkpoint.map(|p| p.display().to_string()).unwrap_or_default()
    );
    Ok(())
}

pub fn train_rl(cfg: &RunConfig) -> Result<()> {
    let corpus_path = cfg.required_path("corpus")?;
    let corpus = read_texts(&corpus_path, cfg.optional_count("corpus_limit")?)?;
    let split = split_validation(corpus, cfg.get("validation_size")?, cfg.get("seed")?)?;
    let tc = train_config(cfg)?;
    let rc = reward_config(cfg)?;
    let all: Vec<&TokenizedText> = split.train.iter().chain(&split.validation).collect();
    let (mut gen, mut state) = starting_point(cfg, &tc, all.iter().copied())?;
    let fit: Vec<TokenizedText> = all.into_iter().cloned().collect();
    let Scorers { embedder, lm } = scorers(cfg, &fit)?;
    let model = RewardModel::new(rc, embedder.as_ref(), lm.as_ref());
    let root = cfg.required_path("checkpoint")?;
    let text = cfg.to_text();
    cfg.write(&root.join(RUN_CONFIG_FILE))?;
    let ckpt = CheckpointDir::new(&root);
    let outcome = train(&mut gen, &mut state, &tc, &model, &split.train, &split.validation, Some(&ckpt), &text)?;
    for v in &state.validation {
        let gaps: Vec<String> = v
            .per_length
            .iter()
            .map(|l| format!("{}:{:.2}", l.length, l.mean_abs_gap))
            .collect();
        println!(
            "validation step {:>6}  total {:.4}  content {:.4}  fluency {:.4}  length {:.4}  gap {}",
            v.step,
            v.mean_total,
            v.content,
            v.fluency,
            v.length,
            gaps.join(" ")
        );
    }
    println!(
        "ran {} steps{}; checkpoint {}",
        outcome.steps_run,
        if outcome.stopped_early { " (early stop)" } else { "" },
        outcome.final_checkpoint.map(|p| p.display().to_string()).unwrap_or_default()
    );
    Ok(())
}

/// Summary of one input.
pub struct Decoded {
    pub tokens: Vec<String>,
    /// Every candidate was empty after filtering; the top beam was kept.
    pub fallback: bool,
    pub seconds: f64,
}

pub fn decode_all(cfg: &RunConfig, gen: &Generator, texts: &[TokenizedText], scorers: &Scorers) -> Result<Vec<Decoded>> {
    let spec: LengthSpec = cfg.get("length")?;
    let beam: usize = cfg.get("beam_size")?;
    let rc = reward_config(cfg)?;
    let pats = patterns(cfg)?;
    let model = RewardModel::new(rc.clone(), scorers.embedder.as_ref(), scorers.lm.as_ref());
    texts
        .par_iter()
        .map(|t| {
            let start = Instant::now();
            let input = make_prompted_input(t, spec);
            let target = input.target_length();
            let cands = beam_search(gen, &input, beam, rc.max_len_for(target))?;
            let (tokens, fallback) = match select_best(&cands, t.tokens(), target, &model, &pats) {
                Ok(best) => (best.tokens, false),
                Err(PolicyError::AllCandidatesEmpty) => {
                    (cands.first().map(|c| c.tokens.clone()).unwrap_or_default(), true)
                }
                Err(e) => return Err(e.into()),
            };
            Ok(Decoded {
                tokens,
                fallback,
                seconds: start.elapsed().as_secs_f64(),
            })
        })
        .collect()
}

/// Reads texts to summarize; a TSV line contributes its first column.
fn read_inputs(path: &Path) -> Result<Vec<TokenizedText>> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let first = line.split('\t').next().unwrap_or_default();
        out.push(tokenize(first).with_context(|| format!("{} line {}", path.display(), i + 1))?);
    }
    Ok(out)
}

fn report_decoding(decoded: &[Decoded], wall: f64) {
    let n = decoded.len().max(1) as f64;
    let mean_len = decoded.iter().map(|d| d.tokens.len()).sum::<usize>() as f64 / n;
    let per_item = decoded.iter().map(|d| d.seconds).sum::<f64>() / n;
    for (i, d) in decoded.iter().enumerate().filter(|(_, d)| d.fallback) {
        println!("fallback: item {} had no candidate left after filtering; kept the top beam {:?}", i + 1, d.tokens.join(" "));
    }
    println!(
        "summarized {} texts: mean length {:.2} words, {:.2} ms per item, {:.2} s wall",
        decoded.len(),
        mean_len,
        per_item * 1000.0,
        wall
    );
}

pub fn summarize(cfg: &RunConfig) -> Result<()> {
    let ckpt = cfg.required_path("checkpoint")?;
    let input = cfg.required_path("input")?;
    let out = cfg.required_path("output")?;
    let (gen, dir) = load_checkpoint(cfg, &ckpt)?;
    let texts = read_inputs(&input)?;
    let sc = scorers(cfg, &texts)?;
    let start = Instant::now();
    let decoded = decode_all(cfg, &gen, &texts, &sc)?;
    let mut body = String::new();
    for d in &decoded {
        body.push_str(&d.tokens.join(" "));
        body.push('\n');
    }
    if let Some(parent) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(&out, body).with_context(|| format!("writing {}", out.display()))?;
    cfg.write(&sidecar(&out))?;
    println!("checkpoint {}", dir.display());
    report_decoding(&decoded, start.elapsed().as_secs_f64());
    Ok(())
}

/// One summary per line; blank lines are empty summaries.
fn read_summaries(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text
        .lines()
        .map(|l| l.split_whitespace().map(str::to_lowercase).collect())
        .collect())
}

pub fn evaluate_cmd(cfg: &RunConfig) -> Result<()> {
    let data = cfg.required_path("eval_data")?;
    let protocol: Protocol = cfg.get("protocol")?;
    let items: Vec<EvalItem> = load_eval_dataset(&data).with_context(|| format!("loading {}", data.display()))?;
    let inputs: Vec<TokenizedText> = items.iter().map(|i| i.input.clone()).collect();
    let sc = scorers(cfg, &inputs)?;
    let summaries = match (cfg.path("summaries"), cfg.path("checkpoint")) {
        (Some(p), _) => read_summaries(&p)?,
        (None, Some(ckpt)) => {
            let (gen, dir) = load_checkpoint(cfg, &resolve_step_dir(&ckpt)?)?;
            println!("decoding with {}", dir.display());
            let start = Instant::now();
            let decoded = decode_all(cfg, &gen, &inputs, &sc)?;
            report_decoding(&decoded, start.elapsed().as_secs_f64());
            decoded.into_iter().map(|d| d.tokens).collect()
        }
        (None, None) => bail!("set `summaries` or `checkpoint`"),
    };
    let mut report = evaluate(&items, &summaries, protocol, sc.embedder.as_ref(), sc.lm.as_ref(), cfg.get("sigma_f")?)?;
    report.group = Some(cfg.str("group").to_string()).filter(|g| !g.is_empty());
    println!(
        "{} over {} items: R-1 {:.4}  R-2 {:.4}  R-L {:.4} ({:?})",
        protocol, report.items, report.headline.rouge1, report.headline.rouge2, report.headline.rouge_l, report.headline.metric
    );
    println!(
        "fidelity {:.4}  fluency {:.4}  length {:.2}  with new words {:.3}  new words per summary {:.2}",
        report.fidelity, report.fluency, report.avg_length, report.novelty.ratio_with_new_words, report.novelty.avg_new_words
    );
    if let Some(path) = cfg.path("report") {
        report.write(&path).map_err(|e| anyhow!("writing {}: {e}", path.display()))?;
        cfg.write(&sidecar(&path))?;
        println!("report written to {}", path.display());
    }
    Ok(())
}
