use alloc::vec::Vec;

use crate::data::{pad_or_truncate, Corpus, Label, VariantKind};
use crate::encoder::{forward, HyperParams, Mode, ModelParams};
use crate::real::sigmoid;
use crate::{Error, Real, Result};

/// Binary classification metrics with "machine" as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EvalMetrics {
    pub n: usize,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl EvalMetrics {
    pub fn from_counts(tp: usize, fp: usize, tn: usize, fn_: usize) -> Self {
        let n = tp + fp + tn + fn_;
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            n,
            tp,
            fp,
            tn,
            fn_,
            accuracy: ratio(tp + tn, n),
            precision,
            recall,
            f1,
        }
    }

    /// Predicts machine when `sigmoid(logit) >= threshold`.
    pub fn from_predictions(pairs: impl IntoIterator<Item = (f64, Label)>, threshold: f64) -> Self {
        let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
        for (logit, label) in pairs {
            let positive = sigmoid(logit) >= threshold;
            match (positive, label) {
                (true, Label::Machine) => tp += 1,
                (true, Label::Human) => fp += 1,
                (false, Label::Human) => tn += 1,
                (false, Label::Machine) => fn_ += 1,
            }
        }
        Self::from_counts(tp, fp, tn, fn_)
    }
}

/// Restricts evaluation to some variant kinds and/or domains.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalFilter {
    pub variant_kinds: Option<Vec<VariantKind>>,
    pub domain_ids: Option<Vec<u32>>,
}

impl EvalFilter {
    pub fn kinds(kinds: &[VariantKind]) -> Self {
        Self {
            variant_kinds: Some(kinds.to_vec()),
            domain_ids: None,
        }
    }

    pub fn with_domain(mut self, domain_id: u32) -> Self {
        self.domain_ids = Some(alloc::vec![domain_id]);
        self
    }

    pub fn accepts(&self, kind: VariantKind, domain_id: u32) -> bool {
        self.variant_kinds.as_ref().is_none_or(|k| k.contains(&kind))
            && self.domain_ids.as_ref().is_none_or(|d| d.contains(&domain_id))
    }
}

/// Eval-mode logits for the selected documents, in corpus order.
pub fn predict<T: Real>(
    params: &ModelParams<T>,
    hyper: &HyperParams,
    corpus: &Corpus,
    filter: &EvalFilter,
) -> Result<Vec<(f64, Label)>> {
    corpus
        .docs
        .iter()
        .filter(|d| filter.accepts(d.variant_kind, d.domain_id))
        .map(|d| {
            let padded = pad_or_truncate(d, hyper.max_sentences).cast::<T>();
            let f = forward(params, hyper, &padded, Mode::Eval)?;
            Ok((f.logit.to_f64_lossless(), d.label))
        })
        .collect()
}

pub fn evaluate<T: Real>(
    params: &ModelParams<T>,
    hyper: &HyperParams,
    corpus: &Corpus,
    filter: &EvalFilter,
    threshold: f64,
) -> Result<EvalMetrics> {
    let preds = predict(params, hyper, corpus, filter)?;
    if preds.is_empty() {
        return Err(Error::EmptySelection);
    }
    Ok(EvalMetrics::from_predictions(preds, threshold))
}
