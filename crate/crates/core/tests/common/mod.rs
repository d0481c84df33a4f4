#![allow(dead_code)]

use sentstruct_core::data::{pad_to_mask, EmbeddedDoc, Label, PaddedDoc, VariantKind};
use sentstruct_core::encoder::{AttentionScale, HyperParams, ModelParams};
use sentstruct_core::Tensor;

/// dim=16, M=4, 2 heads, 1 layer, 8 hidden units, no dropout.
pub fn tiny_hyper() -> HyperParams {
    HyperParams {
        dim: 16,
        max_sentences: 4,
        n_layers: 1,
        n_heads: 2,
        d_ff: 64,
        mlp_hidden: 8,
        dropout_rate: 0.0,
        scale: AttentionScale::Head,
    }
}

/// Closed-form parameters shared with `oracles/encoder_reference.py`.
pub fn formula_params(h: &HyperParams) -> ModelParams<f64> {
    let tensors = ModelParams::<f64>::layout(h)
        .into_iter()
        .enumerate()
        .map(|(k, (name, dims))| {
            let len: usize = dims.iter().product();
            let values = (0..len)
                .map(|i| {
                    let v = 0.25 * (0.37 * (i as f64 + 1.0) + 1.3 * (k as f64 + 1.0)).sin();
                    if name.ends_with("_gain") {
                        1.0 + 0.4 * v
                    } else {
                        v
                    }
                })
                .collect();
            Tensor::from_vec(&dims, values).unwrap()
        })
        .collect();
    ModelParams::from_tensors(h, tensors).unwrap()
}

/// Closed-form sentence rows shared with the Python oracle.
pub fn formula_rows(sent_count: usize, dim: usize, phase: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(sent_count * dim);
    for s in 0..sent_count {
        for j in 0..dim {
            out.push(0.5 * (0.41 * (s as f64 + 1.0) * (j as f64 + 1.0) + phase).cos());
        }
    }
    out
}

/// Pads f64 rows directly so no f32 rounding enters the oracle comparison.
pub fn pad_f64(rows: &[f64], sent_count: usize, mask_sentences: usize, h: &HyperParams) -> PaddedDoc<f64> {
    let d = h.dim;
    let len = h.seq_len();
    let active = mask_sentences.min(h.max_sentences);
    let mut slots = vec![0.0; len * d];
    for i in 0..active.min(sent_count) {
        slots[(i + 1) * d..(i + 2) * d].copy_from_slice(&rows[i * d..(i + 1) * d]);
    }
    PaddedDoc {
        max_sentences: h.max_sentences,
        dim: d,
        slots,
        mask: (0..len).map(|i| i <= active).collect(),
    }
}

pub fn doc_from_rows(id: &str, label: Label, rows: &[f64], sent_count: usize) -> EmbeddedDoc {
    EmbeddedDoc::new(
        id,
        label,
        0,
        0,
        VariantKind::Original,
        sent_count,
        rows.iter().map(|&v| v as f32).collect(),
    )
    .unwrap()
}

pub fn padded(doc: &EmbeddedDoc, mask_sentences: usize, h: &HyperParams) -> PaddedDoc<f32> {
    pad_to_mask(doc, mask_sentences, h.max_sentences)
}

pub fn reference() -> serde_json::Value {
    serde_json::from_str(include_str!("../fixtures/encoder_reference.json")).unwrap()
}

pub fn ref_f64(v: &serde_json::Value) -> f64 {
    v.as_str().unwrap().parse().unwrap()
}
