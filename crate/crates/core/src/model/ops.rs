//! Dense row-major kernels used by the forward and backward passes.

use super::Scalar;

#[inline]
pub(crate) fn c<T: Scalar>(x: f64) -> T {
    T::from(x).expect("constant representable")
}

/// `out[n×m] = a[n×k] · b[k×m] (+ bias[m])`.
pub(crate) fn matmul<T: Scalar>(a: &[T], b: &[T], bias: Option<&[T]>, n: usize, k: usize, m: usize) -> Vec<T> {
    debug_assert_eq!(a.len(), n * k);
    debug_assert_eq!(b.len(), k * m);
    let mut out = vec![T::zero(); n * m];
    for i in 0..n {
        let row = &mut out[i * m..(i + 1) * m];
        if let Some(bias) = bias {
            row.copy_from_slice(bias);
        }
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let brow = &b[p * m..(p + 1) * m];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `out[n×m] = a[n×k] · b[m×k]ᵀ`.
pub(crate) fn matmul_bt<T: Scalar>(a: &[T], b: &[T], n: usize, k: usize, m: usize) -> Vec<T> {
    let mut out = vec![T::zero(); n * m];
    for i in 0..n {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..m {
            let brow = &b[j * k..(j + 1) * k];
            out[i * m + j] = dot(arow, brow);
        }
    }
    out
}

/// `grad_b[k×m] += a[n×k]ᵀ · d[n×m]`.
pub(crate) fn accumulate_at_d<T: Scalar>(grad_b: &mut [T], a: &[T], d: &[T], n: usize, k: usize, m: usize) {
    for i in 0..n {
        let drow = &d[i * m..(i + 1) * m];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let grow = &mut grad_b[p * m..(p + 1) * m];
            for (g, &dv) in grow.iter_mut().zip(drow) {
                *g += av * dv;
            }
        }
    }
}

/// `grad_bias[m] += Σ_rows d[n×m]`.
pub(crate) fn accumulate_rows<T: Scalar>(grad_bias: &mut [T], d: &[T], m: usize) {
    for row in d.chunks_exact(m) {
        for (g, &v) in grad_bias.iter_mut().zip(row) {
            *g += v;
        }
    }
}

#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Numerically stable in-place softmax.
pub(crate) fn softmax_in_place<T: Scalar>(xs: &mut [T]) {
    let max = xs.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for x in xs.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in xs.iter_mut() {
        *x /= sum;
    }
}

/// `ln Σ exp(x)`.
pub(crate) fn log_sum_exp<T: Scalar>(xs: &[T]) -> T {
    let max = xs.iter().copied().fold(T::neg_infinity(), T::max);
    let sum = xs.iter().fold(T::zero(), |acc, &x| acc + (x - max).exp());
    max + sum.ln()
}

pub(crate) struct LayerNormCache<T> {
    pub xhat: Vec<T>,
    pub rstd: Vec<T>,
}

pub(crate) const LN_EPS: f64 = 1e-5;

pub(crate) fn layer_norm<T: Scalar>(x: &[T], gain: &[T], bias: &[T], d: usize) -> (Vec<T>, LayerNormCache<T>) {
    let rows = x.len() / d;
    let mut out = vec![T::zero(); x.len()];
    let mut xhat = vec![T::zero(); x.len()];
    let mut rstd = vec![T::zero(); rows];
    let inv_d = c::<T>(1.0) / c::<T>(d as f64);
    for r in 0..rows {
        let row = &x[r * d..(r + 1) * d];
        let mean = row.iter().copied().sum::<T>() * inv_d;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_d;
        let rs = c::<T>(1.0) / (var + c(LN_EPS)).sqrt();
        rstd[r] = rs;
        for j in 0..d {
            let xh = (row[j] - mean) * rs;
            xhat[r * d + j] = xh;
            out[r * d + j] = xh * gain[j] + bias[j];
        }
    }
    (out, LayerNormCache { xhat, rstd })
}

/// Returns `dx` and accumulates gain/bias gradients.
pub(crate) fn layer_norm_backward<T: Scalar>(
    dy: &[T],
    cache: &LayerNormCache<T>,
    gain: &[T],
    dgain: &mut [T],
    dbias: &mut [T],
    d: usize,
) -> Vec<T> {
    let rows = dy.len() / d;
    let inv_d = c::<T>(1.0) / c::<T>(d as f64);
    let mut dx = vec![T::zero(); dy.len()];
    let mut dxhat = vec![T::zero(); d];
    for r in 0..rows {
        let dyr = &dy[r * d..(r + 1) * d];
        let xh = &cache.xhat[r * d..(r + 1) * d];
        let mut mean_dxhat = T::zero();
        let mut mean_dxhat_xhat = T::zero();
        for j in 0..d {
            dgain[j] += dyr[j] * xh[j];
            dbias[j] += dyr[j];
            dxhat[j] = dyr[j] * gain[j];
            mean_dxhat += dxhat[j];
            mean_dxhat_xhat += dxhat[j] * xh[j];
        }
        mean_dxhat *= inv_d;
        mean_dxhat_xhat *= inv_d;
        let rs = cache.rstd[r];
        for j in 0..d {
            dx[r * d + j] = rs * (dxhat[j] - mean_dxhat - xh[j] * mean_dxhat_xhat);
        }
    }
    dx
}

const GELU_K: f64 = 0.044_715;
// sqrt(2 / pi)
const GELU_C: f64 = 0.797_884_560_802_865_4;

/// Tanh approximation of GELU.
pub(crate) fn gelu<T: Scalar>(x: T) -> T {
    let u = c::<T>(GELU_C) * (x + c::<T>(GELU_K) * x * x * x);
    c::<T>(0.5) * x * (T::one() + u.tanh())
}

pub(crate) fn gelu_grad<T: Scalar>(x: T) -> T {
    let u = c::<T>(GELU_C) * (x + c::<T>(GELU_K) * x * x * x);
    let t = u.tanh();
    let du = c::<T>(GELU_C) * (T::one() + c::<T>(3.0 * GELU_K) * x * x);
    c::<T>(0.5) * (T::one() + t) + c::<T>(0.5) * x * (T::one() - t * t) * du
}
