//! Small self-contained backends: a log-linear conditional generator, a
//! smoothed bigram language model, a hashed bag-of-words embedder and a
//! template corpus. They make every pipeline stage runnable on a laptop
//! without pretrained models.

mod embedder;
mod experiment;
mod generator;
mod lm;
mod synthetic;

pub use embedder::HashedEmbedder;
pub use experiment::{run_experiment, ExperimentConfig, ExperimentResult};
pub use generator::{ToyConfig, ToyContext, ToyGenerator};
pub use lm::{BigramLm, UniformLm};
pub use synthetic::synthetic_corpus;
