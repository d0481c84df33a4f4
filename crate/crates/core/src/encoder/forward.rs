use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::ops::{dot, layer_norm, linear};
use super::{AttentionScale, HyperParams, ModelParams};
use crate::data::PaddedDoc;
use crate::real::gelu;
use crate::rng::{stream, tags};
use crate::{Error, NumericSite, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Eval,
    Train { dropout_seed: u64 },
}

/// Post-softmax attention maps, one `seq_len x seq_len` matrix per layer and
/// head. Rows sum to one over unmasked columns; masked columns hold zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Relations<T> {
    n_layers: usize,
    n_heads: usize,
    seq_len: usize,
    data: Vec<T>,
}

impl<T: Real> Relations<T> {
    pub fn zeros(h: &HyperParams) -> Self {
        Self {
            n_layers: h.n_layers,
            n_heads: h.n_heads,
            seq_len: h.seq_len(),
            data: vec![T::zero(); h.n_layers * h.n_heads * h.seq_len() * h.seq_len()],
        }
    }

    /// Every row spread evenly over the unmasked columns of `mask`.
    pub fn uniform(h: &HyperParams, mask: &[bool]) -> Self {
        let mut r = Self::zeros(h);
        let active = mask.iter().filter(|&&m| m).count();
        let w = T::one() / T::lit(active as f64);
        let len = r.seq_len;
        for chunk in r.data.chunks_mut(len) {
            for (v, &m) in chunk.iter_mut().zip(mask) {
                if m {
                    *v = w;
                }
            }
        }
        r
    }

    pub fn n_layers(&self) -> usize {
        self.n_layers
    }

    pub fn n_heads(&self) -> usize {
        self.n_heads
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn matrix(&self, layer: usize, head: usize) -> &[T] {
        let sz = self.seq_len * self.seq_len;
        let at = (layer * self.n_heads + head) * sz;
        &self.data[at..at + sz]
    }

    pub fn matrix_mut(&mut self, layer: usize, head: usize) -> &mut [T] {
        let sz = self.seq_len * self.seq_len;
        let at = (layer * self.n_heads + head) * sz;
        &mut self.data[at..at + sz]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }

    pub fn cast<U: Real>(&self) -> Relations<U> {
        Relations {
            n_layers: self.n_layers,
            n_heads: self.n_heads,
            seq_len: self.seq_len,
            data: self.data.iter().map(|v| U::lit(v.to_f64_lossless())).collect(),
        }
    }

    /// Checks every row sums to one (within `tol`) over the unmasked columns.
    pub fn check_rows(&self, mask: &[bool], tol: f64) -> Result<()> {
        let n = self.seq_len;
        for layer in 0..self.n_layers {
            for head in 0..self.n_heads {
                let m = self.matrix(layer, head);
                for row in 0..n {
                    let sum: f64 = m[row * n..(row + 1) * n]
                        .iter()
                        .zip(mask)
                        .filter(|(_, &keep)| keep)
                        .map(|(v, _)| v.to_f64_lossless())
                        .sum();
                    if !((sum - 1.0).abs() <= tol) {
                        return Err(Error::BadRelations {
                            layer,
                            head,
                            row,
                            sum,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    fn fits(&self, h: &HyperParams) -> bool {
        self.n_layers == h.n_layers && self.n_heads == h.n_heads && self.seq_len == h.seq_len()
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LayerCache<T> {
    pub input: Vec<T>,
    pub q: Vec<T>,
    pub k: Vec<T>,
    pub v: Vec<T>,
    /// `[head][row][col]`, post-softmax (or supplied) before dropout.
    pub attn: Vec<T>,
    pub attn_keep: Option<Vec<T>>,
    pub ctx: Vec<T>,
    pub ln1_xhat: Vec<T>,
    pub ln1_rstd: Vec<T>,
    pub h1: Vec<T>,
    pub ffn_pre: Vec<T>,
    pub ffn_act: Vec<T>,
    pub ffn_keep: Option<Vec<T>>,
    pub ln2_xhat: Vec<T>,
    pub ln2_rstd: Vec<T>,
}

/// Activations recorded by a forward pass for [`super::backward`].
#[derive(Debug, Clone)]
pub struct Cache<T> {
    pub(crate) hyper: HyperParams,
    pub(crate) mask: Vec<bool>,
    pub(crate) fixed: bool,
    pub(crate) layers: Vec<LayerCache<T>>,
    pub(crate) cls_out: Vec<T>,
    pub(crate) head_pre: Vec<T>,
    pub(crate) head_act: Vec<T>,
}

impl<T> Cache<T> {
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Whether the pass used externally supplied relations.
    pub fn is_fixed(&self) -> bool {
        self.fixed
    }
}

#[derive(Debug, Clone)]
pub struct Forward<T> {
    pub logit: T,
    pub relations: Relations<T>,
    pub cache: Cache<T>,
}

pub fn forward<T: Real>(
    params: &ModelParams<T>,
    hyper: &HyperParams,
    padded: &PaddedDoc<T>,
    mode: Mode,
) -> Result<Forward<T>> {
    forward_with(params, hyper, padded, mode, None)
}

/// Eval-mode pass that uses `relations` in place of every attention softmax.
/// Values are still computed from `padded`.
pub fn forward_fixed_relations<T: Real>(
    params: &ModelParams<T>,
    hyper: &HyperParams,
    relations: &Relations<T>,
    padded: &PaddedDoc<T>,
) -> Result<T> {
    forward_with(params, hyper, padded, Mode::Eval, Some(relations)).map(|f| f.logit)
}

pub fn forward_with<T: Real>(
    params: &ModelParams<T>,
    hyper: &HyperParams,
    padded: &PaddedDoc<T>,
    mode: Mode,
    fixed: Option<&Relations<T>>,
) -> Result<Forward<T>> {
    let (d, n) = (hyper.dim, hyper.seq_len());
    if padded.dim != d || padded.max_sentences != hyper.max_sentences || padded.mask.len() != n {
        return Err(Error::InvalidDoc(format!(
            "padded doc is {} slots x {}, model expects {} x {}",
            padded.mask.len(),
            padded.dim,
            n,
            d
        )));
    }
    if params.layers.len() != hyper.n_layers || params.pos_embeddings.dims() != [n, d] {
        return Err(Error::CacheMismatch("parameters do not match hyper-parameters".into()));
    }
    let mask = &padded.mask;
    if let Some(rel) = fixed {
        if !rel.fits(hyper) {
            return Err(Error::CacheMismatch("relation tensor shape".into()));
        }
        rel.check_rows(mask, 1e-4)?;
    }

    let mut drop = match mode {
        Mode::Train { dropout_seed } if hyper.dropout_rate > 0.0 => {
            Some(Dropout::new(dropout_seed, hyper.dropout_rate))
        }
        _ => None,
    };

    let mut x = padded.slots.clone();
    x[..d].copy_from_slice(params.cls_embedding.as_slice());
    for (xv, pv) in x.iter_mut().zip(params.pos_embeddings.as_slice()) {
        *xv += *pv;
    }
    check_active(&x, d, mask, NumericSite::Input)?;

    let heads = hyper.n_heads;
    let dh = hyper.head_dim();
    let inv_scale = T::one()
        / T::lit(match hyper.scale {
            AttentionScale::Head => dh as f64,
            AttentionScale::Model => d as f64,
        })
        .sqrt();

    let mut relations = fixed.cloned().unwrap_or_else(|| Relations::zeros(hyper));
    let mut caches = Vec::with_capacity(hyper.n_layers);
    for (li, lp) in params.layers.iter().enumerate() {
        let q = linear(&x, n, &lp.wq, &lp.bq);
        let k = linear(&x, n, &lp.wk, &lp.bk);
        let v = linear(&x, n, &lp.wv, &lp.bv);

        let mut attn = vec![T::zero(); heads * n * n];
        let mut attn_keep = drop.as_mut().map(|_| vec![T::zero(); heads * n * n]);
        let mut ctx = vec![T::zero(); n * d];
        for h in 0..heads {
            let a = &mut attn[h * n * n..(h + 1) * n * n];
            match fixed {
                Some(rel) => a.copy_from_slice(rel.matrix(li, h)),
                None => {
                    softmax_scores(a, &q, &k, mask, n, d, h * dh, dh, inv_scale);
                    relations.matrix_mut(li, h).copy_from_slice(a);
                }
            }
            if let (Some(dr), Some(keep)) = (drop.as_mut(), attn_keep.as_mut()) {
                dr.fill(&mut keep[h * n * n..(h + 1) * n * n]);
            }
            let keep = attn_keep.as_ref().map(|kp| &kp[h * n * n..(h + 1) * n * n]);
            for i in 0..n {
                let out = &mut ctx[i * d + h * dh..i * d + (h + 1) * dh];
                for j in (0..n).filter(|&j| mask[j]) {
                    let mut w = a[i * n + j];
                    if let Some(kp) = keep {
                        w *= kp[i * n + j];
                    }
                    if w == T::zero() {
                        continue;
                    }
                    let vj = &v[j * d + h * dh..j * d + (h + 1) * dh];
                    for (o, &vv) in out.iter_mut().zip(vj) {
                        *o += w * vv;
                    }
                }
            }
        }

        let attn_out = linear(&ctx, n, &lp.wo, &lp.bo);
        let r1: Vec<T> = x.iter().zip(&attn_out).map(|(a, b)| *a + *b).collect();
        let ln1 = layer_norm(&r1, n, &lp.ln1_gain, &lp.ln1_bias);
        let ffn_pre = linear(&ln1.y, n, &lp.ffn_w1, &lp.ffn_b1);
        let ffn_act: Vec<T> = ffn_pre.iter().map(|&u| gelu(u)).collect();
        let mut f = linear(&ffn_act, n, &lp.ffn_w2, &lp.ffn_b2);
        let ffn_keep = drop.as_mut().map(|dr| {
            let mut keep = vec![T::zero(); n * d];
            dr.fill(&mut keep);
            keep
        });
        if let Some(keep) = &ffn_keep {
            f.iter_mut().zip(keep).for_each(|(v, k)| *v *= *k);
        }
        let r2: Vec<T> = ln1.y.iter().zip(&f).map(|(a, b)| *a + *b).collect();
        let ln2 = layer_norm(&r2, n, &lp.ln2_gain, &lp.ln2_bias);
        check_active(&ln2.y, d, mask, NumericSite::Layer(li))?;

        caches.push(LayerCache {
            input: core::mem::replace(&mut x, ln2.y),
            q,
            k,
            v,
            attn,
            attn_keep,
            ctx,
            ln1_xhat: ln1.xhat,
            ln1_rstd: ln1.rstd,
            h1: ln1.y,
            ffn_pre,
            ffn_act,
            ffn_keep,
            ln2_xhat: ln2.xhat,
            ln2_rstd: ln2.rstd,
        });
    }

    let cls_out = x[..d].to_vec();
    let head_pre = linear(&cls_out, 1, &params.head_w1, &params.head_b1);
    let head_act: Vec<T> = head_pre.iter().map(|&u| gelu(u)).collect();
    let logit = dot(&head_act, params.head_w2.as_slice()) + params.head_b2.as_slice()[0];
    if !logit.is_finite() {
        return Err(Error::NumericalError {
            site: NumericSite::Classifier,
        });
    }

    Ok(Forward {
        logit,
        relations,
        cache: Cache {
            hyper: hyper.clone(),
            mask: mask.clone(),
            fixed: fixed.is_some(),
            layers: caches,
            cls_out,
            head_pre,
            head_act,
        },
    })
}

#[allow(clippy::too_many_arguments)]
fn softmax_scores<T: Real>(
    a: &mut [T],
    q: &[T],
    k: &[T],
    mask: &[bool],
    n: usize,
    d: usize,
    off: usize,
    dh: usize,
    inv_scale: T,
) {
    for i in 0..n {
        let qi = &q[i * d + off..i * d + off + dh];
        let row = &mut a[i * n..(i + 1) * n];
        let mut max = T::neg_infinity();
        for j in (0..n).filter(|&j| mask[j]) {
            let s = dot(qi, &k[j * d + off..j * d + off + dh]) * inv_scale;
            row[j] = s;
            if s > max {
                max = s;
            }
        }
        let mut sum = T::zero();
        for j in 0..n {
            if mask[j] {
                let e = (row[j] - max).exp();
                row[j] = e;
                sum += e;
            } else {
                row[j] = T::zero();
            }
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
}

fn check_active<T: Real>(x: &[T], d: usize, mask: &[bool], site: NumericSite) -> Result<()> {
    let bad = mask
        .iter()
        .enumerate()
        .filter(|(_, &m)| m)
        .any(|(i, _)| x[i * d..(i + 1) * d].iter().any(|v| !v.is_finite()));
    if bad {
        Err(Error::NumericalError { site })
    } else {
        Ok(())
    }
}

/// Inverted dropout: kept entries are scaled by `1 / (1 - p)`.
struct Dropout {
    rng: crate::rng::Stream,
    rate: f64,
}

impl Dropout {
    fn new(seed: u64, rate: f64) -> Self {
        Self {
            rng: stream(&[tags::DROPOUT, seed]),
            rate,
        }
    }

    fn fill<T: Real>(&mut self, keep: &mut [T]) {
        let scale = T::lit(1.0 / (1.0 - self.rate));
        for k in keep.iter_mut() {
            *k = if self.rng.random::<f64>() < self.rate {
                T::zero()
            } else {
                scale
            };
        }
    }
}
