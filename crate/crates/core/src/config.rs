//! Flat JSON application config shared by the CLI and the library pipelines.
//! CLI flags override file values; all numeric constraints owned by the
//! individual modules are re-validated here at load time.

use serde::{Deserialize, Serialize};

use crate::corpus::{Extractor, HttpExtractor, StubExtractor};
use crate::embed::{Encoder, HashedBowEncoder, HttpEncoder};
use crate::error::{EngineError, Result};
use crate::geometry::Curvature;
use crate::projection::TrainConfig;
use crate::retrieval::RetrievalConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    /// Corpus JSONL path ({doc_id, text} per line).
    pub corpus: Option<String>,
    /// Index directory.
    pub index_dir: Option<String>,
    /// Embedding client: "stub" or a URL.
    pub encoder: String,
    /// Extractor client: "stub" or a URL.
    pub extractor: String,
    /// Environment variable holding client credentials, if any.
    pub credential_env: Option<String>,
    /// Embedding dimension.
    pub d: usize,
    /// Curvature magnitude (ball curvature is -c).
    pub c: f64,
    /// Radial offset α.
    pub alpha: f64,
    /// Radial scale β.
    pub beta: f64,
    /// Contrastive margin γ.
    pub gamma: f64,
    /// Synonymy cosine threshold.
    pub tau_syn: f64,
    /// PPR restart probability.
    pub damping: f64,
    /// Top-k facts used as seed evidence.
    pub k: usize,
    /// Seed mass split between entity and passage signals.
    pub lambda_seed: f64,
    /// PPR convergence tolerance.
    pub tol: f64,
    /// Master RNG seed.
    pub seed: u64,
    /// Passages printed / returned by `retrieve`.
    pub k_output: usize,
    /// Recall cutoff used by `eval`.
    pub k_eval: usize,
    /// PPR iteration cap.
    pub max_iter: usize,
    /// Passage priors kept per branch before seeding.
    pub prior_top_n: usize,
    /// Chunk budget in characters.
    pub max_chars: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub negatives_per_positive: usize,
    pub batch_size: usize,
    /// Batch size for HTTP encoder calls.
    pub encoder_batch: usize,
    /// Ablation switch: drop the hyperbolic branch everywhere.
    pub disable_hyperbolic: bool,
}

impl Default for AppConfig {
    fn default() -> Self {
        AppConfig {
            corpus: None,
            index_dir: None,
            encoder: "stub".into(),
            extractor: "stub".into(),
            credential_env: None,
            d: 256,
            c: 1.0,
            alpha: 0.4,
            beta: 0.5,
            gamma: 0.1,
            tau_syn: 0.8,
            damping: 0.5,
            k: 5,
            lambda_seed: 0.5,
            tol: 1e-8,
            seed: 42,
            k_output: 10,
            k_eval: 5,
            max_iter: 1000,
            prior_top_n: 50,
            max_chars: 1200,
            learning_rate: 0.05,
            epochs: 200,
            negatives_per_positive: 1,
            batch_size: 65536,
            encoder_batch: 32,
            disable_hyperbolic: false,
        }
    }
}

impl AppConfig {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: AppConfig = serde_json::from_str(&text)
            .map_err(|e| EngineError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        Curvature::new(self.c)?;
        if self.d == 0 {
            return Err(EngineError::Config("d must be > 0".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0 && self.beta > 0.0 && self.beta < 1.0) {
            return Err(EngineError::Config(
                "alpha and beta must lie in (0,1)".into(),
            ));
        }
        if self.alpha + self.beta > 1.0 {
            return Err(EngineError::Config("alpha + beta must be <= 1".into()));
        }
        if !(self.tau_syn > 0.0 && self.tau_syn <= 1.0) {
            return Err(EngineError::Config("tau_syn must lie in (0,1]".into()));
        }
        if self.max_chars == 0 {
            return Err(EngineError::Config("max_chars must be > 0".into()));
        }
        self.train_config().validate()?;
        self.retrieval_config().validate()?;
        Ok(())
    }

    pub fn curvature(&self) -> Curvature {
        Curvature::new(self.c).expect("validated at load")
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            margin: self.gamma,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            negatives_per_positive: self.negatives_per_positive,
            seed: self.seed,
            batch_size: self.batch_size,
        }
    }

    pub fn retrieval_config(&self) -> RetrievalConfig {
        RetrievalConfig {
            k_facts: self.k,
            damping: self.damping,
            tol: self.tol,
            max_iter: self.max_iter,
            lambda_seed: self.lambda_seed,
            prior_top_n: self.prior_top_n,
        }
    }

    pub fn make_encoder(&self) -> Result<Box<dyn Encoder>> {
        if self.encoder == "stub" {
            Ok(Box::new(HashedBowEncoder::new(self.d)?))
        } else {
            Ok(Box::new(HttpEncoder::new(
                &self.encoder,
                self.d,
                self.encoder_batch,
                self.credential_env.clone(),
            )))
        }
    }

    pub fn make_extractor(&self) -> Result<Box<dyn Extractor>> {
        if self.extractor == "stub" {
            Ok(Box::new(StubExtractor))
        } else {
            Ok(Box::new(HttpExtractor::new(
                &self.extractor,
                self.credential_env.clone(),
            )))
        }
    }
}
