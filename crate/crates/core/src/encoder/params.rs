use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::HyperParams;
use crate::rng::{stream, tags};
use crate::{Error, Real, Result, Tensor};

/// Linear weights are stored `fan_in x fan_out` and applied as `x W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub wq: Tensor<T>,
    pub bq: Tensor<T>,
    pub wk: Tensor<T>,
    pub bk: Tensor<T>,
    pub wv: Tensor<T>,
    pub bv: Tensor<T>,
    pub wo: Tensor<T>,
    pub bo: Tensor<T>,
    pub ln1_gain: Tensor<T>,
    pub ln1_bias: Tensor<T>,
    pub ffn_w1: Tensor<T>,
    pub ffn_b1: Tensor<T>,
    pub ffn_w2: Tensor<T>,
    pub ffn_b2: Tensor<T>,
    pub ln2_gain: Tensor<T>,
    pub ln2_bias: Tensor<T>,
}

const LAYER_FIELDS: [&str; 16] = [
    "wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo", "ln1_gain", "ln1_bias", "ffn_w1", "ffn_b1",
    "ffn_w2", "ffn_b2", "ln2_gain", "ln2_bias",
];

impl<T> LayerParams<T> {
    fn fields(&self) -> [&Tensor<T>; 16] {
        [
            &self.wq, &self.bq, &self.wk, &self.bk, &self.wv, &self.bv, &self.wo, &self.bo,
            &self.ln1_gain, &self.ln1_bias, &self.ffn_w1, &self.ffn_b1, &self.ffn_w2,
            &self.ffn_b2, &self.ln2_gain, &self.ln2_bias,
        ]
    }

    fn fields_mut(&mut self) -> [&mut Tensor<T>; 16] {
        [
            &mut self.wq, &mut self.bq, &mut self.wk, &mut self.bk, &mut self.wv, &mut self.bv,
            &mut self.wo, &mut self.bo, &mut self.ln1_gain, &mut self.ln1_bias,
            &mut self.ffn_w1, &mut self.ffn_b1, &mut self.ffn_w2, &mut self.ffn_b2,
            &mut self.ln2_gain, &mut self.ln2_bias,
        ]
    }
}

/// Every learnable tensor of the encoder. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub cls_embedding: Tensor<T>,
    pub pos_embeddings: Tensor<T>,
    pub layers: Vec<LayerParams<T>>,
    pub head_w1: Tensor<T>,
    pub head_b1: Tensor<T>,
    pub head_w2: Tensor<T>,
    pub head_b2: Tensor<T>,
}

impl<T: Real> ModelParams<T> {
    /// Canonical tensor names and shapes, in storage order.
    pub fn layout(h: &HyperParams) -> Vec<(String, Vec<usize>)> {
        let (d, f) = (h.dim, h.d_ff);
        let mut out = Vec::new();
        out.push(("cls_embedding".into(), alloc::vec![d]));
        out.push(("pos_embeddings".into(), alloc::vec![h.seq_len(), d]));
        for l in 0..h.n_layers {
            let shapes: [Vec<usize>; 16] = [
                alloc::vec![d, d], alloc::vec![d], alloc::vec![d, d], alloc::vec![d],
                alloc::vec![d, d], alloc::vec![d], alloc::vec![d, d], alloc::vec![d],
                alloc::vec![d], alloc::vec![d], alloc::vec![d, f], alloc::vec![f],
                alloc::vec![f, d], alloc::vec![d], alloc::vec![d], alloc::vec![d],
            ];
            for (name, dims) in LAYER_FIELDS.iter().zip(shapes) {
                out.push((format!("layers.{l}.{name}"), dims));
            }
        }
        out.push(("classifier.w1".into(), alloc::vec![d, h.mlp_hidden]));
        out.push(("classifier.b1".into(), alloc::vec![h.mlp_hidden]));
        out.push(("classifier.w2".into(), alloc::vec![h.mlp_hidden, 1]));
        out.push(("classifier.b2".into(), alloc::vec![1]));
        out
    }

    pub fn zeros(h: &HyperParams) -> Self {
        let tensors = Self::layout(h)
            .into_iter()
            .map(|(_, dims)| Tensor::zeros(&dims))
            .collect();
        Self::from_tensors(h, tensors).expect("layout matches itself")
    }

    /// Rebuilds from tensors listed in [`ModelParams::layout`] order.
    pub fn from_tensors(h: &HyperParams, tensors: Vec<Tensor<T>>) -> Result<Self> {
        let layout = Self::layout(h);
        if tensors.len() != layout.len() {
            return Err(Error::BadConfig(format!(
                "expected {} tensors, got {}",
                layout.len(),
                tensors.len()
            )));
        }
        for ((name, dims), t) in layout.iter().zip(&tensors) {
            if t.dims() != dims.as_slice() {
                return Err(Error::BadConfig(format!(
                    "tensor {name} has shape {:?}, expected {dims:?}",
                    t.dims()
                )));
            }
        }
        let mut it = tensors.into_iter();
        let mut next = || it.next().expect("length checked");
        let cls_embedding = next();
        let pos_embeddings = next();
        let layers = (0..h.n_layers)
            .map(|_| LayerParams {
                wq: next(),
                bq: next(),
                wk: next(),
                bk: next(),
                wv: next(),
                bv: next(),
                wo: next(),
                bo: next(),
                ln1_gain: next(),
                ln1_bias: next(),
                ffn_w1: next(),
                ffn_b1: next(),
                ffn_w2: next(),
                ffn_b2: next(),
                ln2_gain: next(),
                ln2_bias: next(),
            })
            .collect();
        Ok(Self {
            cls_embedding,
            pos_embeddings,
            layers,
            head_w1: next(),
            head_b1: next(),
            head_w2: next(),
            head_b2: next(),
        })
    }

    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        let mut out = alloc::vec![&self.cls_embedding, &self.pos_embeddings];
        for l in &self.layers {
            out.extend(l.fields());
        }
        out.extend([&self.head_w1, &self.head_b1, &self.head_w2, &self.head_b2]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = alloc::vec![&mut self.cls_embedding, &mut self.pos_embeddings];
        for l in &mut self.layers {
            out.extend(l.fields_mut());
        }
        out.extend([
            &mut self.head_w1,
            &mut self.head_b1,
            &mut self.head_w2,
            &mut self.head_b2,
        ]);
        out
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill_zero();
        z
    }

    pub fn fill_zero(&mut self) {
        self.tensors_mut().into_iter().for_each(Tensor::fill_zero);
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams {
            cls_embedding: self.cls_embedding.cast(),
            pos_embeddings: self.pos_embeddings.cast(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    wq: l.wq.cast(),
                    bq: l.bq.cast(),
                    wk: l.wk.cast(),
                    bk: l.bk.cast(),
                    wv: l.wv.cast(),
                    bv: l.bv.cast(),
                    wo: l.wo.cast(),
                    bo: l.bo.cast(),
                    ln1_gain: l.ln1_gain.cast(),
                    ln1_bias: l.ln1_bias.cast(),
                    ffn_w1: l.ffn_w1.cast(),
                    ffn_b1: l.ffn_b1.cast(),
                    ffn_w2: l.ffn_w2.cast(),
                    ffn_b2: l.ffn_b2.cast(),
                    ln2_gain: l.ln2_gain.cast(),
                    ln2_bias: l.ln2_bias.cast(),
                })
                .collect(),
            head_w1: self.head_w1.cast(),
            head_b1: self.head_b1.cast(),
            head_w2: self.head_w2.cast(),
            head_b2: self.head_b2.cast(),
        }
    }

    pub fn num_values(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// `self += scale * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &Self, scale: T) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.as_mut_slice().iter_mut().zip(b.as_slice()) {
                *x += scale * *y;
            }
        }
    }

    pub fn scale(&mut self, s: T) {
        for t in self.tensors_mut() {
            t.as_mut_slice().iter_mut().for_each(|v| *v *= s);
        }
    }

    /// Global L2 norm, accumulated in f64.
    pub fn l2_norm(&self) -> f64 {
        let sum_sq: f64 = self
            .tensors()
            .iter()
            .flat_map(|t| t.as_slice())
            .map(|v| {
                let x = v.to_f64_lossless();
                x * x
            })
            .sum();
        libm::sqrt(sum_sq)
    }

    pub fn all_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.as_slice().iter().all(|v| v.is_finite()))
    }
}

/// Linear weights uniform in `±sqrt(6 / (fan_in + fan_out))`, biases zero,
/// layer-norm gains one, `cls` and position embeddings `N(0, 0.02)`.
pub fn init_params<T: Real>(h: &HyperParams, seed: u64) -> Result<ModelParams<T>> {
    h.validate()?;
    let mut rng = stream(&[tags::INIT, seed]);
    let embed = Normal::new(0.0, 0.02).expect("valid normal");
    let mut tensors = Vec::new();
    for (name, dims) in ModelParams::<T>::layout(h) {
        let len: usize = dims.iter().product();
        let values: Vec<T> = if name == "cls_embedding" || name == "pos_embeddings" {
            (0..len).map(|_| T::lit(embed.sample(&mut rng))).collect()
        } else if name.ends_with("_gain") {
            alloc::vec![T::one(); len]
        } else if dims.len() == 2 {
            let bound = libm::sqrt(6.0 / (dims[0] + dims[1]) as f64);
            (0..len)
                .map(|_| T::lit(rng.random_range(-bound..bound)))
                .collect()
        } else {
            alloc::vec![T::zero(); len]
        };
        tensors.push(Tensor::from_vec(&dims, values).expect("sized from dims"));
    }
    ModelParams::from_tensors(h, tensors)
}
