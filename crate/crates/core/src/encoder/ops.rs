//! Dense kernels over row-major slices.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Real, Tensor};

pub(crate) const LN_EPS: f64 = 1e-5;

/// `x[n, in] · w[in, out] + b[out]`.
pub(crate) fn linear<T: Real>(x: &[T], n: usize, w: &Tensor<T>, b: &Tensor<T>) -> Vec<T> {
    let (fan_in, fan_out) = (w.rows(), w.cols());
    debug_assert_eq!(x.len(), n * fan_in);
    let wv = w.as_slice();
    let mut y = vec![T::zero(); n * fan_out];
    for i in 0..n {
        let yi = &mut y[i * fan_out..(i + 1) * fan_out];
        yi.copy_from_slice(b.as_slice());
        for (k, &xik) in x[i * fan_in..(i + 1) * fan_in].iter().enumerate() {
            if xik == T::zero() {
                continue;
            }
            for (yij, &wkj) in yi.iter_mut().zip(&wv[k * fan_out..(k + 1) * fan_out]) {
                *yij += xik * wkj;
            }
        }
    }
    y
}

/// Accumulates `dW += xᵀ dy`, `db += Σ_rows dy` and returns `dy · Wᵀ`.
pub(crate) fn linear_backward<T: Real>(
    x: &[T],
    dy: &[T],
    n: usize,
    w: &Tensor<T>,
    dw: &mut Tensor<T>,
    db: &mut Tensor<T>,
) -> Vec<T> {
    let (fan_in, fan_out) = (w.rows(), w.cols());
    let wv = w.as_slice();
    let mut dx = vec![T::zero(); n * fan_in];
    for i in 0..n {
        let dyi = &dy[i * fan_out..(i + 1) * fan_out];
        if dyi.iter().all(|v| *v == T::zero()) {
            continue;
        }
        for (dbj, &g) in db.as_mut_slice().iter_mut().zip(dyi) {
            *dbj += g;
        }
        let xi = &x[i * fan_in..(i + 1) * fan_in];
        let dwv = dw.as_mut_slice();
        for k in 0..fan_in {
            let wk = &wv[k * fan_out..(k + 1) * fan_out];
            dx[i * fan_in + k] = dot(dyi, wk);
            let xik = xi[k];
            for (g, &d) in dwv[k * fan_out..(k + 1) * fan_out].iter_mut().zip(dyi) {
                *g += xik * d;
            }
        }
    }
    dx
}

#[inline]
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + *x * *y)
}

pub(crate) struct NormOut<T> {
    pub y: Vec<T>,
    pub xhat: Vec<T>,
    pub rstd: Vec<T>,
}

pub(crate) fn layer_norm<T: Real>(x: &[T], n: usize, gain: &Tensor<T>, bias: &Tensor<T>) -> NormOut<T> {
    let d = gain.len();
    let dt = T::lit(d as f64);
    let eps = T::lit(LN_EPS);
    let mut y = vec![T::zero(); n * d];
    let mut xhat = vec![T::zero(); n * d];
    let mut rstd = vec![T::zero(); n];
    for i in 0..n {
        let row = &x[i * d..(i + 1) * d];
        let mean = row.iter().copied().sum::<T>() / dt;
        let var = row.iter().map(|v| (*v - mean) * (*v - mean)).sum::<T>() / dt;
        let r = T::one() / (var + eps).sqrt();
        rstd[i] = r;
        for j in 0..d {
            let h = (row[j] - mean) * r;
            xhat[i * d + j] = h;
            y[i * d + j] = h * gain.as_slice()[j] + bias.as_slice()[j];
        }
    }
    NormOut { y, xhat, rstd }
}

pub(crate) fn layer_norm_backward<T: Real>(
    dy: &[T],
    xhat: &[T],
    rstd: &[T],
    n: usize,
    gain: &Tensor<T>,
    dgain: &mut Tensor<T>,
    dbias: &mut Tensor<T>,
) -> Vec<T> {
    let d = gain.len();
    let dt = T::lit(d as f64);
    let mut dx = vec![T::zero(); n * d];
    for i in 0..n {
        let dyi = &dy[i * d..(i + 1) * d];
        if dyi.iter().all(|v| *v == T::zero()) {
            continue;
        }
        let xh = &xhat[i * d..(i + 1) * d];
        let mut sum_g = T::zero();
        let mut sum_gx = T::zero();
        for j in 0..d {
            dgain.as_mut_slice()[j] += dyi[j] * xh[j];
            dbias.as_mut_slice()[j] += dyi[j];
            let g = dyi[j] * gain.as_slice()[j];
            sum_g += g;
            sum_gx += g * xh[j];
        }
        let (mean_g, mean_gx) = (sum_g / dt, sum_gx / dt);
        for j in 0..d {
            let g = dyi[j] * gain.as_slice()[j];
            dx[i * d + j] = rstd[i] * (g - mean_g - xh[j] * mean_gx);
        }
    }
    dx
}
