//! Trainable representation methods behind one trait, looked up by name.
//!
//! The harness never matches on method names; it asks the registry for a
//! [`Method`] and runs the shared train / code / classify pipeline.

use crate::baselines::{default_rpca_lambda, fit_lrrs_bd_with, fit_lrrs_with, rpca};
use crate::classifier::{evaluate, train_classifier, ClassifierModel};
use crate::coder::{code_with_mode, CodingMode, CodingResult};
use crate::error::{Error, Result};
use crate::matrix::{one_hot, DataMatrix, LabeledDataset};
use crate::solver::{fit_rbds_with, RbdsModel, SolveOptions, SolverConfig};

pub trait Method: Send + Sync {
    fn name(&self) -> &'static str;

    fn description(&self) -> &'static str;

    fn fit(
        &self,
        train: &LabeledDataset,
        cfg: &SolverConfig,
        opts: &SolveOptions,
    ) -> Result<RbdsModel>;
}

/// Learned dictionary with the block-diagonal term.
pub struct Rbds;

impl Method for Rbds {
    fn name(&self) -> &'static str {
        "rbds"
    }

    fn description(&self) -> &'static str {
        "block-diagonal low-rank + sparse representation with dictionary learning"
    }

    fn fit(
        &self,
        train: &LabeledDataset,
        cfg: &SolverConfig,
        opts: &SolveOptions,
    ) -> Result<RbdsModel> {
        fit_rbds_with(train, cfg, opts)
    }
}

pub struct Lrrs;

impl Method for Lrrs {
    fn name(&self) -> &'static str {
        "lrrs"
    }

    fn description(&self) -> &'static str {
        "low-rank + sparse representation over the training data"
    }

    fn fit(
        &self,
        train: &LabeledDataset,
        cfg: &SolverConfig,
        opts: &SolveOptions,
    ) -> Result<RbdsModel> {
        fit_lrrs_with(train, cfg, opts)
    }
}

pub struct LrrsBd;

impl Method for LrrsBd {
    fn name(&self) -> &'static str {
        "lrrs_bd"
    }

    fn description(&self) -> &'static str {
        "low-rank + sparse representation over the training data with the block-diagonal term"
    }

    fn fit(
        &self,
        train: &LabeledDataset,
        cfg: &SolverConfig,
        opts: &SolveOptions,
    ) -> Result<RbdsModel> {
        fit_lrrs_bd_with(train, cfg, opts)
    }
}

/// Robust PCA on the training matrix, then LRRS on its low-rank part.
pub struct RpcaPrecleanLrrs {
    /// `None` uses `1 / sqrt(max(d, n))`.
    pub lambda: Option<f64>,
}

impl Method for RpcaPrecleanLrrs {
    fn name(&self) -> &'static str {
        "rpca_preclean+lrrs"
    }

    fn description(&self) -> &'static str {
        "robust PCA clean-up of the training data followed by lrrs"
    }

    fn fit(
        &self,
        train: &LabeledDataset,
        cfg: &SolverConfig,
        opts: &SolveOptions,
    ) -> Result<RbdsModel> {
        let data = train.data();
        let lambda = self
            .lambda
            .unwrap_or_else(|| default_rpca_lambda(data.rows(), data.cols()));
        let cleaned = rpca(data, lambda, cfg)?;
        let cleaned = train.with_data(DataMatrix::new(cleaned.a_lowrank)?)?;
        fit_lrrs_with(&cleaned, cfg, opts)
    }
}

#[derive(Default)]
pub struct MethodRegistry {
    methods: Vec<Box<dyn Method>>,
}

impl MethodRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_builtins() -> Self {
        let mut reg = Self::new();
        reg.register(Box::new(Rbds));
        reg.register(Box::new(Lrrs));
        reg.register(Box::new(LrrsBd));
        reg.register(Box::new(RpcaPrecleanLrrs { lambda: None }));
        reg
    }

    /// Adds a method, replacing any existing one with the same name.
    pub fn register(&mut self, method: Box<dyn Method>) {
        if let Some(slot) = self.methods.iter_mut().find(|m| m.name() == method.name()) {
            *slot = method;
        } else {
            self.methods.push(method);
        }
    }

    pub fn get(&self, name: &str) -> Option<&dyn Method> {
        self.methods
            .iter()
            .find(|m| m.name() == name)
            .map(|m| m.as_ref())
    }

    pub fn resolve(&self, name: &str) -> Result<&dyn Method> {
        self.get(name).ok_or_else(|| {
            Error::Config(format!(
                "unknown method `{name}` (known: {})",
                self.names().join(", ")
            ))
        })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.methods.iter().map(|m| m.name()).collect()
    }
}

/// What the classifier is trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClassifierInput {
    /// The representation learned during training.
    #[default]
    TrainingRepresentation,
    /// The training set coded again against the final dictionary.
    Recoded,
}

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub eta: f64,
    pub coding_mode: CodingMode,
    pub classifier_input: ClassifierInput,
    pub solve: SolveOptions,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            eta: 1.0,
            coding_mode: CodingMode::Joint,
            classifier_input: ClassifierInput::TrainingRepresentation,
            solve: SolveOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub model: RbdsModel,
    pub classifier: ClassifierModel,
    pub coding: CodingResult,
    pub accuracy: f64,
}

/// Fit, code the test set against the learned dictionary, train the ridge
/// classifier and score it.
pub fn run_pipeline(
    method: &dyn Method,
    train: &LabeledDataset,
    test: &LabeledDataset,
    cfg: &SolverConfig,
    opts: &PipelineOptions,
) -> Result<PipelineResult> {
    let model = method.fit(train, cfg, &opts.solve)?;
    let coding = code_with_mode(test.data(), &model.dictionary, cfg, opts.coding_mode)?;
    let h = one_hot(train);
    let classifier = match opts.classifier_input {
        ClassifierInput::TrainingRepresentation => train_classifier(&model.z_train, &h, opts.eta)?,
        ClassifierInput::Recoded => {
            let recoded = code_with_mode(train.data(), &model.dictionary, cfg, opts.coding_mode)?;
            train_classifier(&recoded.z_hat, &h, opts.eta)?
        }
    };
    let accuracy = evaluate(&classifier, &coding, test.labels())?;
    Ok(PipelineResult {
        model,
        classifier,
        coding,
        accuracy,
    })
}
