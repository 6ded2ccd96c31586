use crate::corpus::{split_validation, LengthSpec, PromptedInput, TokenizedText};
use crate::perturb::{generate_records, PerturbConfig};
use crate::rewards::{RewardConfig, RewardModel};
use crate::rl::{pretrain, train, validate, TrainConfig, TrainError, TrainMode, TrainState, ValidationReport};
use crate::scalar::Scalar;

use super::{synthetic_corpus, BigramLm, HashedEmbedder, ToyConfig, ToyGenerator};

/// Pretraining followed by policy-gradient training on the template corpus.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub corpus_size: usize,
    pub validation_size: usize,
    pub seed: u64,
    pub lengths: Vec<LengthSpec>,
    pub pretrain_steps: usize,
    pub rl_steps: usize,
    pub pretrain_learning_rate: f64,
    pub rl_learning_rate: f64,
    pub batch_size: usize,
    pub mode: TrainMode,
    pub eval_every: usize,
    pub embed_dim: usize,
    pub lm_smoothing: f64,
    pub generator: ToyConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            corpus_size: 5000,
            validation_size: 200,
            seed: 1,
            lengths: vec![LengthSpec::Absolute(4), LengthSpec::Absolute(6)],
            pretrain_steps: 500,
            rl_steps: 500,
            pretrain_learning_rate: 0.05,
            rl_learning_rate: 0.01,
            batch_size: 24,
            mode: TrainMode::Msl,
            eval_every: 50,
            embed_dim: 64,
            lm_smoothing: 0.1,
            generator: ToyConfig::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentResult<F> {
    /// Validation of the untrained generator.
    pub initial: ValidationReport<F>,
    /// Validation right after pretraining (equal to `initial` without it).
    pub pretrained: ValidationReport<F>,
    pub pretrain: TrainState<F>,
    pub rl: TrainState<F>,
    pub generator: ToyGenerator<F>,
}

pub fn run_experiment<F: Scalar>(cfg: &ExperimentConfig) -> Result<ExperimentResult<F>, TrainError> {
    let corpus = synthetic_corpus(cfg.corpus_size, cfg.seed);
    let split = split_validation(corpus, cfg.validation_size, cfg.seed)
        .map_err(|e| TrainError::InvalidConfig(e.to_string()))?;
    let embedder = HashedEmbedder::<F>::new(cfg.embed_dim, cfg.seed).with_idf(&split.train);
    let lm = BigramLm::<F>::fit(&split.train, cfg.lm_smoothing);
    let model = RewardModel::new(RewardConfig::default(), &embedder, &lm);
    let mut gen = ToyGenerator::<F>::from_corpus(split.train.iter().chain(&split.validation), cfg.generator.clone());
    let n = gen.parameters_len();

    let initial = validate(&gen, &split.validation, &cfg.lengths, &model, 0)?;

    let pre_cfg = TrainConfig {
        learning_rate: F::of(cfg.pretrain_learning_rate),
        batch_size: cfg.batch_size,
        weight_decay: F::zero(),
        lengths: cfg.lengths.clone(),
        mode: cfg.mode,
        max_steps: cfg.pretrain_steps,
        seed: cfg.seed,
        patience: None,
        eval_every: 0,
        checkpoint_every: 0,
    };
    let mut pre_state = TrainState::new(pre_cfg.optimizer(n));
    if cfg.pretrain_steps > 0 {
        let perturb = PerturbConfig {
            seed: cfg.seed,
            ..PerturbConfig::default()
        };
        let records = generate_records(&split.train, &perturb).map_err(|e| TrainError::InvalidConfig(e.to_string()))?;
        let pairs: Vec<(PromptedInput, TokenizedText)> =
            records.into_iter().map(|r| (r.perturbed, r.original)).collect();
        pretrain(&mut gen, &mut pre_state, &pre_cfg, &pairs, None, "")?;
    }
    let pretrained = validate(&gen, &split.validation, &cfg.lengths, &model, 0)?;

    let rl_cfg = TrainConfig {
        learning_rate: F::of(cfg.rl_learning_rate),
        max_steps: cfg.rl_steps,
        eval_every: cfg.eval_every,
        ..pre_cfg
    };
    let mut rl_state = TrainState::new(rl_cfg.optimizer(n));
    train(&mut gen, &mut rl_state, &rl_cfg, &model, &split.train, &split.validation, None, "")?;
    Ok(ExperimentResult {
        initial,
        pretrained,
        pretrain: pre_state,
        rl: rl_state,
        generator: gen,
    })
}
