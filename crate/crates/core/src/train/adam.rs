use crate::encoder::ModelParams;
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 5e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: ModelParams<T>,
    pub v: ModelParams<T>,
    pub t: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &ModelParams<T>) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update; advances `state.t`.
pub fn adam_step<T: Real>(params: &mut ModelParams<T>, grads: &ModelParams<T>, state: &mut AdamState<T>, cfg: &AdamConfig) {
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
    let c1 = T::one() - T::lit(libm::pow(cfg.beta1, t as f64));
    let c2 = T::one() - T::lit(libm::pow(cfg.beta2, t as f64));
    let (lr, eps) = (T::lit(cfg.lr), T::lit(cfg.eps));
    let tensors = params
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .zip(state.m.tensors_mut().into_iter().zip(state.v.tensors_mut()));
    for ((p, g), (m, v)) in tensors {
        let iter = p
            .as_mut_slice()
            .iter_mut()
            .zip(g.as_slice())
            .zip(m.as_mut_slice().iter_mut().zip(v.as_mut_slice().iter_mut()));
        for ((p, &g), (m, v)) in iter {
            *m = b1 * *m + (T::one() - b1) * g;
            *v = b2 * *v + (T::one() - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{init_params, HyperParams};

    fn tiny() -> HyperParams {
        HyperParams {
            dim: 4,
            max_sentences: 2,
            n_layers: 1,
            n_heads: 1,
            d_ff: 4,
            mlp_hidden: 2,
            dropout_rate: 0.0,
            scale: Default::default(),
        }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p: ModelParams<f32> = init_params(&tiny(), 1).unwrap();
        let before = p.clone();
        let mut st = AdamState::new(&p);
        adam_step(&mut p, &before.zeros_like(), &mut st, &AdamConfig::default());
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p: ModelParams<f64> = init_params(&tiny(), 1).unwrap();
        let before = p.clone();
        let mut g = p.zeros_like();
        g.head_b2.as_mut_slice()[0] = 1.0;
        let mut st = AdamState::new(&p);
        let cfg = AdamConfig::default();
        adam_step(&mut p, &g, &mut st, &cfg);
        let moved = before.head_b2.as_slice()[0] - p.head_b2.as_slice()[0];
        assert!((moved - cfg.lr).abs() < 1e-12, "{moved}");
        assert_eq!(p.head_w2, before.head_w2);
    }

    #[test]
    fn deterministic() {
        let p0: ModelParams<f32> = init_params(&tiny(), 2).unwrap();
        let g: ModelParams<f32> = init_params(&tiny(), 3).unwrap();
        let run = || {
            let mut p = p0.clone();
            let mut st = AdamState::new(&p);
            adam_step(&mut p, &g, &mut st, &AdamConfig::default());
            adam_step(&mut p, &g, &mut st, &AdamConfig::default());
            (p, st)
        };
        assert_eq!(run(), run());
    }
}
