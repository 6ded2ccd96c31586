//! Backend registry: maps the `generator`, `embedder` and `lm` identifiers
//! to implementations.

use std::path::Path;

use anyhow::{bail, Context, Result};
use rlsum::checkpoint::{load_generator, resolve_step_dir};
use rlsum::corpus::{load_corpus, TokenizedText};
use rlsum::rewards::{LanguageModel, TextEmbedder};
use rlsum::toy::{BigramLm, HashedEmbedder, ToyConfig, ToyGenerator, UniformLm};

use crate::config::RunConfig;

pub type Generator = ToyGenerator<f64>;

pub const GENERATORS: &[&str] = &["toy"];
pub const EMBEDDERS: &[&str] = &["hashed"];
pub const LMS: &[&str] = &["bigram", "uniform"];

fn check(kind: &str, id: &str, known: &[&str]) -> Result<()> {
    if !known.contains(&id) {
        bail!("unknown {kind} backend {id:?}; available: {}", known.join(", "));
    }
    Ok(())
}

/// Fresh generator whose vocabulary covers `texts`.
pub fn new_generator<'a>(cfg: &RunConfig, texts: impl IntoIterator<Item = &'a TokenizedText>) -> Result<Generator> {
    check("generator", cfg.str("generator"), GENERATORS)?;
    let toy = ToyConfig {
        bigram: cfg.get("toy_bigram")?,
        max_remaining: cfg.get("toy_max_remaining")?,
    };
    Ok(ToyGenerator::from_corpus(texts, toy))
}

/// Loads generator weights from a checkpoint root (latest step) or a step
/// directory. Returns the step directory used.
pub fn load_checkpoint(cfg: &RunConfig, path: &Path) -> Result<(Generator, std::path::PathBuf)> {
    check("generator", cfg.str("generator"), GENERATORS)?;
    let dir = resolve_step_dir(path).with_context(|| format!("locating checkpoint under {}", path.display()))?;
    let (gen, manifest) = load_generator::<Generator>(&dir).with_context(|| format!("loading {}", dir.display()))?;
    if manifest.backend != cfg.str("generator") {
        bail!("checkpoint {} holds a {:?} generator", dir.display(), manifest.backend);
    }
    Ok((gen, dir))
}

/// The embedder and language model used for rewards and evaluation.
pub struct Scorers {
    pub embedder: Box<dyn TextEmbedder<f64>>,
    pub lm: Box<dyn LanguageModel<f64>>,
}

/// Builds the scorers. IDF weights and the bigram model are fitted on
/// `backend_corpus` when set and on `fallback` otherwise.
pub fn scorers(cfg: &RunConfig, fallback: &[TokenizedText]) -> Result<Scorers> {
    check("embedder", cfg.str("embedder"), EMBEDDERS)?;
    check("lm", cfg.str("lm"), LMS)?;
    let owned;
    let fit: &[TokenizedText] = match cfg.path("backend_corpus") {
        Some(p) => {
            owned = read_texts(&p, None)?;
            &owned
        }
        None => fallback,
    };
    let mut embedder = HashedEmbedder::new(cfg.get("embed_dim")?, cfg.get("seed")?);
    if cfg.get("embed_idf")? {
        embedder = embedder.with_idf(fit);
    }
    let lm: Box<dyn LanguageModel<f64>> = match cfg.str("lm") {
        "bigram" => {
            if fit.is_empty() {
                bail!("the bigram language model needs texts to fit on");
            }
            Box::new(BigramLm::fit(fit, cfg.get("lm_smoothing")?))
        }
        _ => Box::new(UniformLm::new(cfg.get("lm_vocab_size")?)),
    };
    Ok(Scorers {
        embedder: Box::new(embedder),
        lm,
    })
}

pub fn read_texts(path: &Path, limit: Option<usize>) -> Result<Vec<TokenizedText>> {
    load_corpus(path, limit)
        .with_context(|| format!("opening {}", path.display()))?
        .collect::<Result<Vec<_>, _>>()
        .with_context(|| format!("reading {}", path.display()))
}
