//! Flat `key = value` run configuration.
//!
//! Values come from four layers, later ones winning: built-in defaults, a
//! config file, `RLSUM_<KEY>` environment variables and command-line flags.
//! Every key is listed in [`KEYS`]; anything else is rejected.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

pub const ENV_PREFIX: &str = "RLSUM_";

/// `(key, default, description)` for every accepted key.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("seed", "0", "master seed for splits, perturbation, batching and sampling"),
    ("workers", "0", "worker threads; 0 uses every core"),
    // paths
    ("corpus", "", "one sentence per line (pretrain-data, train-rl)"),
    ("corpus_limit", "0", "read at most this many sentences; 0 reads all"),
    ("validation_size", "500", "sentences held out from the corpus for validation"),
    ("dataset", "", "reconstruction dataset TSV (written by pretrain-data, read by pretrain)"),
    ("checkpoint", "", "checkpoint root; training writes step-NNNNNN directories here"),
    ("init_checkpoint", "", "starting weights for training; a checkpoint root or step directory"),
    ("resume", "false", "continue from the latest step under `checkpoint`"),
    ("input", "", "texts to summarize, one per line; a TSV line contributes its first column"),
    ("output", "", "summaries file, one per line"),
    ("eval_data", "", "evaluation TSV: input, then one or more references"),
    ("summaries", "", "summaries to evaluate; when empty, evaluate decodes with `checkpoint`"),
    ("report", "", "evaluation report path (TOML)"),
    ("group", "", "optional label stored in the evaluation report"),
    // backends
    ("generator", "toy", "generator backend: toy"),
    ("toy_bigram", "true", "toy generator learns previous/next word weights"),
    ("toy_max_remaining", "16", "toy generator remaining-length buckets"),
    ("embedder", "hashed", "embedder backend: hashed"),
    ("embed_dim", "64", "hashed embedder dimension"),
    ("embed_idf", "true", "weight hashed embeddings by inverse document frequency"),
    ("lm", "bigram", "language model backend: bigram or uniform"),
    ("lm_smoothing", "0.1", "add-k smoothing of the bigram model"),
    ("lm_vocab_size", "10000", "vocabulary size of the uniform model"),
    ("backend_corpus", "", "text used to fit the LM and IDF; defaults to the texts the command reads"),
    // perturbation
    ("shuffle_ratio", "0.1", "fraction of words shuffled"),
    ("drop_ratio", "0.1", "fraction of words dropped"),
    ("add_ratio", "1.0", "words added from a donor sentence, as a fraction of the original length"),
    // rewards
    ("sigma_f", "1000", "fluency steepness"),
    ("sigma_l", "10", "length steepness"),
    ("lambda", "0.01", "weight of the multi-summary quality reward"),
    ("alpha", "0.3", "exponent on the quality gap"),
    ("max_gen_len", "0", "episode cap in words; 0 means ceil(1.5 * target)"),
    // training
    ("learning_rate", "5e-5", "AdamW learning rate"),
    ("batch_size", "24", "texts per step"),
    ("weight_decay", "0.01", "AdamW decoupled weight decay"),
    ("lengths", "8,10,13", "target lengths: word counts or percentages such as 50%"),
    ("mode", "msl", "msl (all lengths, coupled) or single (one drawn length)"),
    ("max_steps", "10000", "total optimizer steps of the run"),
    ("patience", "0", "stop after this many validations without improvement; 0 disables"),
    ("eval_every", "500", "validate every this many steps; 0 disables"),
    ("checkpoint_every", "0", "save every this many steps; 0 saves only at the end"),
    // decoding
    ("beam_size", "20", "beam width"),
    ("length", "10", "summary length: a word count or a percentage"),
    ("filter_patterns", "true", "apply the word filters before selection"),
    (
        "banned_endings",
        "in,at,to,on,the,'s,of,a,for,with,is,into,by,his,her,when,and,but",
        "words stripped from the end of a summary",
    ),
    (
        "banned_anywhere",
        "sunday,monday,tuesday,wednesday,thursday,friday,saturday",
        "words removed wherever they occur",
    ),
    // evaluation
    ("protocol", "gigaword_f1", "gigaword_f1 or duc_recall"),
];

fn doc(key: &str) -> Option<&'static (&'static str, &'static str, &'static str)> {
    KEYS.iter().find(|(k, _, _)| *k == key)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            values: KEYS.iter().map(|(k, v, _)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

impl RunConfig {
    /// Defaults, then `file`, then environment, then `overrides`.
    pub fn resolve(
        file: Option<&Path>,
        env: impl IntoIterator<Item = (String, String)>,
        overrides: &[(String, String)],
    ) -> Result<Self> {
        let mut cfg = RunConfig::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            cfg.merge_text(&text).with_context(|| format!("in {}", path.display()))?;
        }
        cfg.merge_env(env)?;
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if doc(key).is_none() {
            bail!("unknown config key {key:?}");
        }
        self.values.insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    /// Parses `key = value` lines. `#` starts a comment line.
    pub fn merge_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected key = value", i + 1))?;
            self.set(k.trim(), v).with_context(|| format!("line {}", i + 1))?;
        }
        Ok(())
    }

    pub fn merge_env(&mut self, env: impl IntoIterator<Item = (String, String)>) -> Result<()> {
        for (name, value) in env {
            if let Some(key) = name.strip_prefix(ENV_PREFIX) {
                self.set(&key.to_ascii_lowercase(), &value)
                    .with_context(|| format!("environment variable {name}"))?;
            }
        }
        Ok(())
    }

    pub fn str(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("key {key} is not registered"))
    }

    pub fn get<T>(&self, key: &str) -> Result<T>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        let raw = self.str(key);
        raw.parse().map_err(|e| anyhow!("invalid value {raw:?} for {key}: {e}"))
    }

    /// A path key, `None` when empty.
    pub fn path(&self, key: &str) -> Option<PathBuf> {
        let v = self.str(key);
        (!v.is_empty()).then(|| PathBuf::from(v))
    }

    pub fn required_path(&self, key: &str) -> Result<PathBuf> {
        self.path(key).ok_or_else(|| anyhow!("`{key}` must be set (flag, config file or {ENV_PREFIX}{})", key.to_uppercase()))
    }

    /// Comma-separated list, empty entries dropped.
    pub fn list(&self, key: &str) -> Vec<String> {
        self.str(key).split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::to_string).collect()
    }

    /// Positive count where 0 means "none".
    pub fn optional_count(&self, key: &str) -> Result<Option<usize>> {
        let n: usize = self.get(key)?;
        Ok((n > 0).then_some(n))
    }

    /// Every key with its description, in registry order. Loading this text
    /// back yields the same configuration.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (key, _, about) in KEYS {
            let _ = writeln!(out, "# {about}");
            let _ = writeln!(out, "{key} = {}", self.str(key));
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.to_text()).with_context(|| format!("writing {}", path.display()))
    }
}
