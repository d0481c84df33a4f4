//! Mini-batch training of the encoder on `BCE + nie + de`.

mod adam;
mod loss;
mod metrics;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use loss::bce_with_logits;
pub use metrics::{evaluate, predict, EvalFilter, EvalMetrics};

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::counterfactual::{counterfactual_losses, CfConfig, EffectPasses, Pass, Sampler};
use crate::data::{pad_or_truncate, pad_to_mask, Corpus, EmbeddedDoc, Label, VariantKind};
use crate::encoder::{init_params, HyperParams, Mode, ModelParams};
use crate::real::sigmoid;
use crate::rng::{derive_seed, stream, tags};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub grad_clip_norm: f64,
    pub cf_enabled: bool,
    pub cf: CfConfig,
    pub seed: u64,
    pub shuffle: bool,
    /// Probability threshold used for the per-epoch accuracy.
    pub threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            batch_size: 16,
            epochs: 2,
            grad_clip_norm: 1.0,
            cf_enabled: true,
            cf: CfConfig::default(),
            seed: 0,
            shuffle: true,
            threshold: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let a = &self.adam;
        // lr = 0 is allowed: it is a null update, useful as a control run.
        if !(a.lr.is_finite() && a.lr >= 0.0) {
            return Err(Error::BadConfig(format!("learning rate {} must be finite and >= 0", a.lr)));
        }
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.eps > 0.0) {
            return Err(Error::BadConfig("adam betas must be in [0, 1) and eps > 0".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::BadConfig("batch size and epochs must be >= 1".into()));
        }
        if !(self.grad_clip_norm > 0.0) {
            return Err(Error::BadConfig("gradient clip norm must be > 0".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::BadConfig("threshold must be in (0, 1)".into()));
        }
        self.cf.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub loss: f64,
    pub bce: f64,
    pub nie: f64,
    pub de: f64,
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
    /// Global gradient norm after clipping.
    pub clipped_norm: f64,
    pub no_partner: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub train_accuracy: f64,
    pub val: Option<EvalMetrics>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
    /// Examples whose direct-effect term was dropped for lack of a partner.
    pub no_partner: usize,
}

/// Trains from a fresh initialisation seeded by `cfg.seed`.
pub fn train(
    corpus: &Corpus,
    val: Option<&Corpus>,
    hyper: &HyperParams,
    cfg: &TrainConfig,
) -> Result<(ModelParams<f32>, TrainHistory)> {
    let params = init_params(hyper, cfg.seed)?;
    train_from(params, corpus, val, hyper, cfg, |_| {})
}

/// Continues training `params`; `on_step` sees every step record as it is
/// produced.
pub fn train_from(
    mut params: ModelParams<f32>,
    corpus: &Corpus,
    val: Option<&Corpus>,
    hyper: &HyperParams,
    cfg: &TrainConfig,
    mut on_step: impl FnMut(&StepRecord),
) -> Result<(ModelParams<f32>, TrainHistory)> {
    hyper.validate()?;
    cfg.validate()?;
    corpus.validate()?;
    if corpus.dim != hyper.dim {
        return Err(Error::BadConfig(format!(
            "corpus dim {} does not match model dim {}",
            corpus.dim, hyper.dim
        )));
    }
    let stream_docs: Vec<(usize, &EmbeddedDoc)> = corpus
        .docs
        .iter()
        .enumerate()
        .filter(|(_, d)| d.variant_kind == VariantKind::Original)
        .collect();
    for label in [Label::Human, Label::Machine] {
        if !stream_docs.iter().any(|(_, d)| d.label == label) {
            return Err(Error::BadConfig(format!("no Original documents with label {label:?}")));
        }
    }

    let sampler = Sampler::new(corpus);
    let mut adam = AdamState::new(&params);
    let mut history = TrainHistory::default();
    let mut grads = params.zeros_like();
    let mut step = 0usize;

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..stream_docs.len()).collect();
        if cfg.shuffle {
            order.shuffle(&mut stream(&[tags::SHUFFLE, cfg.seed, epoch as u64]));
        }
        let mut epoch_loss = 0.0;
        let mut epoch_batches = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            grads.fill_zero();
            let mut sums = [0.0f64; 3];
            let mut no_partner = 0usize;
            for &pos in batch {
                let (doc_index, doc) = stream_docs[pos];
                let sample = Sample {
                    params: &params,
                    hyper,
                    cfg,
                    sampler: &sampler,
                    epoch,
                    doc_index,
                    doc,
                };
                let out = sample.run(&mut grads).map_err(|e| match e {
                    Error::NumericalError { site } => Error::TrainDiverged { step, site },
                    other => other,
                })?;
                sums[0] += out.bce;
                sums[1] += out.nie;
                sums[2] += out.de;
                no_partner += out.no_partner as usize;
            }

            let inv = 1.0 / batch.len() as f64;
            grads.scale(inv as f32);
            let grad_norm = grads.l2_norm();
            if !grad_norm.is_finite() {
                return Err(Error::TrainDiverged {
                    step,
                    site: crate::NumericSite::Classifier,
                });
            }
            if grad_norm > cfg.grad_clip_norm {
                grads.scale((cfg.grad_clip_norm / grad_norm) as f32);
            }
            let clipped_norm = grads.l2_norm();
            adam_step(&mut params, &grads, &mut adam, &cfg.adam);

            let (bce, nie, de) = (sums[0] * inv, sums[1] * inv, sums[2] * inv);
            let loss = (sums[0] + sums[1] + sums[2]) * inv;
            let record = StepRecord {
                step,
                epoch,
                loss,
                bce,
                nie,
                de,
                grad_norm,
                clipped_norm,
                no_partner,
            };
            on_step(&record);
            history.steps.push(record);
            history.no_partner += no_partner;
            epoch_loss += loss;
            epoch_batches += 1;
            step += 1;
        }

        let train_filter = EvalFilter::kinds(&[VariantKind::Original]);
        let train_accuracy = evaluate(&params, hyper, corpus, &train_filter, cfg.threshold)?.accuracy;
        let val = match val {
            Some(v) => Some(evaluate(&params, hyper, v, &EvalFilter::default(), cfg.threshold)?),
            None => None,
        };
        history.epochs.push(EpochRecord {
            epoch,
            mean_loss: epoch_loss / epoch_batches as f64,
            train_accuracy,
            val,
        });
    }
    Ok((params, history))
}

struct SampleOut {
    bce: f64,
    nie: f64,
    de: f64,
    no_partner: bool,
}

/// One example's forward passes, losses and gradient contribution.
struct Sample<'a> {
    params: &'a ModelParams<f32>,
    hyper: &'a HyperParams,
    cfg: &'a TrainConfig,
    sampler: &'a Sampler<'a>,
    epoch: usize,
    doc_index: usize,
    doc: &'a EmbeddedDoc,
}

impl Sample<'_> {
    fn dropout_seed(&self, pass: Pass) -> u64 {
        let (kind, k) = match pass {
            Pass::Factual => (0, 0),
            Pass::DoZ(k) => (1, k as u64),
            Pass::DoX(k) => (2, k as u64),
        };
        derive_seed(&[tags::DROPOUT, self.cfg.seed, self.epoch as u64, self.doc_index as u64, kind, k])
    }

    fn run(&self, grads: &mut ModelParams<f32>) -> Result<SampleOut> {
        let m = self.hyper.max_sentences;
        let factual = pad_or_truncate(self.doc, m);
        let (mut z_pads, mut x_pads) = (Vec::new(), Vec::new());
        let mut no_partner = false;
        if self.cfg.cf_enabled {
            let mut rng = stream(&[
                tags::COUNTERFACTUAL,
                self.cfg.seed,
                self.epoch as u64,
                self.doc_index as u64,
            ]);
            for _ in 0..self.cfg.cf.samples {
                let z = self.sampler.select_z_variant(self.doc, &mut rng, &self.cfg.cf);
                z_pads.push(pad_or_truncate(&z, m));
                match self.sampler.select_x_partner(self.doc, &mut rng) {
                    Ok(p) => x_pads.push(pad_to_mask(p, self.doc.sent_count(), m)),
                    Err(Error::NoPartner(_)) => no_partner = true,
                    Err(e) => return Err(e),
                }
            }
            if no_partner {
                x_pads.clear();
            }
        }

        let passes = EffectPasses::run(self.params, self.hyper, &factual, &z_pads, &x_pads, |p| Mode::Train {
            dropout_seed: self.dropout_seed(p),
        })?;
        let label = self.doc.label;
        let lf = passes.factual.logit;
        let bce = bce_with_logits(lf, label);
        let d_bce = sigmoid(lf) - label.target::<f32>();

        if !self.cfg.cf_enabled {
            passes.backward(self.params, self.hyper, d_bce, 0.0, 0.0, true, grads)?;
            return Ok(SampleOut {
                bce: bce as f64,
                nie: 0.0,
                de: 0.0,
                no_partner,
            });
        }
        let terms = passes.terms();
        let losses = counterfactual_losses(&terms, label, &self.cfg.cf);
        let (de, d_de) = if x_pads.is_empty() { (0.0, 0.0) } else { (losses.de, losses.d_de) };
        passes.backward(
            self.params,
            self.hyper,
            d_bce,
            losses.d_nie,
            d_de,
            self.cfg.cf.detach_factual,
            grads,
        )?;
        Ok(SampleOut {
            bce: bce as f64,
            nie: losses.nie as f64,
            de: de as f64,
            no_partner,
        })
    }
}
