use alloc::vec;
use alloc::vec::Vec;

use super::forward::{Cache, Relations};
use super::ops::{dot, layer_norm_backward, linear_backward};
use super::{AttentionScale, HyperParams, ModelParams};
use crate::real::gelu_grad;
use crate::{Error, Real, Result};

/// Gradient of the logit (scaled by `d_logit`) with respect to every
/// parameter. Sentence inputs are frozen and receive no gradient.
pub fn backward<T: Real>(
    params: &ModelParams<T>,
    hyper: &HyperParams,
    cache: &Cache<T>,
    d_logit: T,
) -> Result<ModelParams<T>> {
    let mut grads = params.zeros_like();
    accumulate_backward(params, hyper, cache, d_logit, None, &mut grads)?;
    Ok(grads)
}

/// Adds this pass's gradients into `grads`.
///
/// `extra_d_relations` is an upstream gradient on the post-softmax attention
/// maps of this pass (pre-dropout); it is only meaningful for a pass that
/// computed its own softmax. For a pass run on supplied relations the
/// gradient with respect to those relations is returned.
pub fn accumulate_backward<T: Real>(
    params: &ModelParams<T>,
    hyper: &HyperParams,
    cache: &Cache<T>,
    d_logit: T,
    extra_d_relations: Option<&Relations<T>>,
    grads: &mut ModelParams<T>,
) -> Result<Option<Relations<T>>> {
    if cache.hyper != *hyper
        || cache.layers.len() != params.layers.len()
        || grads.layers.len() != params.layers.len()
        || params.pos_embeddings.dims() != [hyper.seq_len(), hyper.dim]
    {
        return Err(Error::CacheMismatch("cache was recorded for a different model".into()));
    }
    if let Some(r) = extra_d_relations {
        if cache.fixed {
            return Err(Error::CacheMismatch(
                "relation gradients cannot flow into supplied relations".into(),
            ));
        }
        if r.n_layers() != hyper.n_layers || r.n_heads() != hyper.n_heads || r.seq_len() != hyper.seq_len() {
            return Err(Error::CacheMismatch("relation gradient shape".into()));
        }
    }

    let (d, n, heads, dh) = (hyper.dim, hyper.seq_len(), hyper.n_heads, hyper.head_dim());
    let mask = &cache.mask;
    let inv_scale = T::one()
        / T::lit(match hyper.scale {
            AttentionScale::Head => dh as f64,
            AttentionScale::Model => d as f64,
        })
        .sqrt();

    // classifier head
    let hidden = hyper.mlp_hidden;
    grads.head_b2.as_mut_slice()[0] += d_logit;
    let mut d_pre = vec![T::zero(); hidden];
    for j in 0..hidden {
        grads.head_w2.as_mut_slice()[j] += d_logit * cache.head_act[j];
        d_pre[j] = d_logit * params.head_w2.as_slice()[j] * gelu_grad(cache.head_pre[j]);
    }
    let d_cls = linear_backward(
        &cache.cls_out,
        &d_pre,
        1,
        &params.head_w1,
        &mut grads.head_w1,
        &mut grads.head_b1,
    );
    let mut dx = vec![T::zero(); n * d];
    dx[..d].copy_from_slice(&d_cls);

    let mut d_relations = cache.fixed.then(|| Relations::zeros(hyper));

    for li in (0..hyper.n_layers).rev() {
        let lc = &cache.layers[li];
        let lp = &params.layers[li];
        let lg = &mut grads.layers[li];

        // post-norm FFN block
        let d_r2 = layer_norm_backward(
            &dx,
            &lc.ln2_xhat,
            &lc.ln2_rstd,
            n,
            &lp.ln2_gain,
            &mut lg.ln2_gain,
            &mut lg.ln2_bias,
        );
        let mut d_f = d_r2.clone();
        if let Some(keep) = &lc.ffn_keep {
            d_f.iter_mut().zip(keep).for_each(|(g, k)| *g *= *k);
        }
        let d_act = linear_backward(&lc.ffn_act, &d_f, n, &lp.ffn_w2, &mut lg.ffn_w2, &mut lg.ffn_b2);
        let d_pre: Vec<T> = d_act
            .iter()
            .zip(&lc.ffn_pre)
            .map(|(g, &u)| *g * gelu_grad(u))
            .collect();
        let d_h1_ffn = linear_backward(&lc.h1, &d_pre, n, &lp.ffn_w1, &mut lg.ffn_w1, &mut lg.ffn_b1);
        let d_h1: Vec<T> = d_r2.iter().zip(&d_h1_ffn).map(|(a, b)| *a + *b).collect();

        // post-norm attention block
        let d_r1 = layer_norm_backward(
            &d_h1,
            &lc.ln1_xhat,
            &lc.ln1_rstd,
            n,
            &lp.ln1_gain,
            &mut lg.ln1_gain,
            &mut lg.ln1_bias,
        );
        let d_ctx = linear_backward(&lc.ctx, &d_r1, n, &lp.wo, &mut lg.wo, &mut lg.bo);

        let mut dq = vec![T::zero(); n * d];
        let mut dk = vec![T::zero(); n * d];
        let mut dv = vec![T::zero(); n * d];
        let mut d_attn = vec![T::zero(); n * n];
        for h in 0..heads {
            let off = h * dh;
            let a = &lc.attn[h * n * n..(h + 1) * n * n];
            let keep = lc.attn_keep.as_ref().map(|kp| &kp[h * n * n..(h + 1) * n * n]);

            d_attn.iter_mut().for_each(|v| *v = T::zero());
            for i in 0..n {
                let gi = &d_ctx[i * d + off..i * d + off + dh];
                if gi.iter().all(|v| *v == T::zero()) {
                    continue;
                }
                for j in (0..n).filter(|&j| mask[j]) {
                    let vj = &lc.v[j * d + off..j * d + off + dh];
                    let mut w = a[i * n + j];
                    let mut dw = dot(gi, vj);
                    if let Some(kp) = keep {
                        w *= kp[i * n + j];
                        dw *= kp[i * n + j];
                    }
                    d_attn[i * n + j] = dw;
                    if w != T::zero() {
                        for (g, &gv) in dv[j * d + off..j * d + off + dh].iter_mut().zip(gi) {
                            *g += w * gv;
                        }
                    }
                }
            }
            if let Some(extra) = extra_d_relations {
                for (g, e) in d_attn.iter_mut().zip(extra.matrix(li, h)) {
                    *g += *e;
                }
            }

            if let Some(dr) = d_relations.as_mut() {
                dr.matrix_mut(li, h).copy_from_slice(&d_attn);
                continue;
            }

            // softmax backward, then through the scaled dot product
            for i in 0..n {
                let row = &a[i * n..(i + 1) * n];
                let g = &d_attn[i * n..(i + 1) * n];
                let inner = (0..n)
                    .filter(|&j| mask[j])
                    .fold(T::zero(), |acc, j| acc + row[j] * g[j]);
                let qi_range = i * d + off..i * d + off + dh;
                for j in (0..n).filter(|&j| mask[j]) {
                    let ds = row[j] * (g[j] - inner) * inv_scale;
                    if ds == T::zero() {
                        continue;
                    }
                    for t in 0..dh {
                        dq[qi_range.start + t] += ds * lc.k[j * d + off + t];
                        dk[j * d + off + t] += ds * lc.q[qi_range.start + t];
                    }
                }
            }
        }

        let dx_q = linear_backward(&lc.input, &dq, n, &lp.wq, &mut lg.wq, &mut lg.bq);
        let dx_k = linear_backward(&lc.input, &dk, n, &lp.wk, &mut lg.wk, &mut lg.bk);
        let dx_v = linear_backward(&lc.input, &dv, n, &lp.wv, &mut lg.wv, &mut lg.bv);
        for i in 0..n * d {
            dx[i] = d_r1[i] + dx_q[i] + dx_k[i] + dx_v[i];
        }
    }

    for (g, v) in grads.pos_embeddings.as_mut_slice().iter_mut().zip(&dx) {
        *g += *v;
    }
    for (g, v) in grads.cls_embedding.as_mut_slice().iter_mut().zip(&dx[..d]) {
        *g += *v;
    }
    Ok(d_relations)
}
