//! Dense kernels shared by the forward and backward passes.

use crate::scalar::Scalar;

/// Dot product with four independent accumulators so the compiler can
/// vectorize. The summation order is fixed, so results are reproducible.
#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len();
    let chunks = n / 4;
    let (mut s0, mut s1, mut s2, mut s3) = (T::zero(), T::zero(), T::zero(), T::zero());
    for c in 0..chunks {
        let i = c * 4;
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    let mut tail = T::zero();
    for i in chunks * 4..n {
        tail += a[i] * b[i];
    }
    (s0 + s1) + (s2 + s3) + tail
}

/// `out = W x + b` for row-major `W: [rows][cols]`.
pub fn matvec<T: Scalar>(w: &[T], bias: &[T], x: &[T], out: &mut [T]) {
    let cols = x.len();
    debug_assert_eq!(w.len(), out.len() * cols);
    for (r, o) in out.iter_mut().enumerate() {
        *o = dot(&w[r * cols..(r + 1) * cols], x) + bias[r];
    }
}

/// `dx += W^T dy` for row-major `W: [rows][cols]`.
pub fn matvec_t_acc<T: Scalar>(w: &[T], dy: &[T], dx: &mut [T]) {
    let cols = dx.len();
    debug_assert_eq!(w.len(), dy.len() * cols);
    for (r, &g) in dy.iter().enumerate() {
        if g == T::zero() {
            continue;
        }
        let row = &w[r * cols..(r + 1) * cols];
        for (d, &wv) in dx.iter_mut().zip(row) {
            *d += g * wv;
        }
    }
}

/// `dW += dy x^T`.
pub fn outer_acc<T: Scalar>(dy: &[T], x: &[T], dw: &mut [T]) {
    let cols = x.len();
    for (r, &g) in dy.iter().enumerate() {
        if g == T::zero() {
            continue;
        }
        let row = &mut dw[r * cols..(r + 1) * cols];
        for (d, &xv) in row.iter_mut().zip(x) {
            *d += g * xv;
        }
    }
}

pub fn add_assign<T: Scalar>(acc: &mut [T], x: &[T]) {
    for (a, &b) in acc.iter_mut().zip(x) {
        *a += b;
    }
}

/// Saved state of one layer-norm application.
#[derive(Debug, Clone, Default)]
pub struct NormRecord<T> {
    pub xhat: Vec<T>,
    pub rstd: T,
}

pub fn layer_norm<T: Scalar>(x: &[T], gain: &[T], bias: &[T], eps: T) -> (Vec<T>, NormRecord<T>) {
    let n = T::of(x.len() as f64);
    let mean = x.iter().copied().sum::<T>() / n;
    let var = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
    let rstd = T::one() / (var + eps).sqrt();
    let xhat: Vec<T> = x.iter().map(|&v| (v - mean) * rstd).collect();
    let y = xhat
        .iter()
        .zip(gain)
        .zip(bias)
        .map(|((&h, &g), &b)| h * g + b)
        .collect();
    (y, NormRecord { xhat, rstd })
}

/// Returns `dL/dx` given `dL/dy`; accumulates gain and bias gradients when
/// provided.
pub fn layer_norm_backward<T: Scalar>(
    rec: &NormRecord<T>,
    gain: &[T],
    dy: &[T],
    dgain: Option<&mut [T]>,
    dbias: Option<&mut [T]>,
) -> Vec<T> {
    let n = T::of(dy.len() as f64);
    if let Some(dg) = dgain {
        for ((g, &d), &h) in dg.iter_mut().zip(dy).zip(&rec.xhat) {
            *g += d * h;
        }
    }
    if let Some(db) = dbias {
        add_assign(db, dy);
    }
    let dxhat: Vec<T> = dy.iter().zip(gain).map(|(&d, &g)| d * g).collect();
    let mean_d = dxhat.iter().copied().sum::<T>() / n;
    let mean_dh = dxhat.iter().zip(&rec.xhat).map(|(&d, &h)| d * h).sum::<T>() / n;
    dxhat
        .iter()
        .zip(&rec.xhat)
        .map(|(&d, &h)| rec.rstd * (d - mean_d - h * mean_dh))
        .collect()
}

const GELU_C: f64 = 0.044_715;
// sqrt(2 / pi)
const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;

#[inline]
pub fn gelu<T: Scalar>(x: T) -> T {
    let c = T::of(SQRT_2_OVER_PI);
    let inner = c * (x + T::of(GELU_C) * x * x * x);
    T::of(0.5) * x * (T::one() + inner.tanh())
}

#[inline]
pub fn gelu_grad<T: Scalar>(x: T) -> T {
    let c = T::of(SQRT_2_OVER_PI);
    let k = T::of(GELU_C);
    let inner = c * (x + k * x * x * x);
    let t = inner.tanh();
    let dinner = c * (T::one() + T::of(3.0) * k * x * x);
    T::of(0.5) * (T::one() + t) + T::of(0.5) * x * (T::one() - t * t) * dinner
}

/// Numerically stable softmax (max subtraction).
pub fn softmax<T: Scalar>(z: &[T]) -> Vec<T> {
    let max = z.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = z.iter().map(|&v| (v - max).exp()).collect();
    let sum = exps.iter().copied().sum::<T>();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn log_sum_exp<T: Scalar>(z: &[T]) -> T {
    let max = z.iter().copied().fold(T::neg_infinity(), T::max);
    max + z.iter().map(|&v| (v - max).exp()).sum::<T>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gelu_at_zero_and_grad_matches_difference() {
        assert_eq!(gelu(0.0f64), 0.0);
        for &x in &[-3.0, -0.7, 0.0, 0.4, 2.5f64] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8, "x = {x}");
        }
    }

    #[test]
    fn layer_norm_backward_matches_difference() {
        let x = [0.3f64, -1.2, 2.0, 0.7, -0.1];
        let g = [1.1, 0.9, -0.5, 1.3, 0.2];
        let b = [0.0, 0.1, 0.2, -0.3, 0.4];
        let w = [0.7, -0.2, 1.5, 0.3, -0.9];
        let loss = |x: &[f64]| {
            let (y, _) = layer_norm(x, &g, &b, 1e-5);
            dot(&y, &w)
        };
        let (_, rec) = layer_norm(&x, &g, &b, 1e-5);
        let dx = layer_norm_backward(&rec, &g, &w, None, None);
        for i in 0..x.len() {
            let mut xp = x;
            let mut xm = x;
            xp[i] += 1e-6;
            xm[i] -= 1e-6;
            let fd = (loss(&xp) - loss(&xm)) / 2e-6;
            assert!((fd - dx[i]).abs() < 1e-7);
        }
    }

    #[test]
    fn dot_handles_tails() {
        let a: Vec<f64> = (0..7).map(|i| i as f64).collect();
        assert_eq!(dot(&a, &a), 91.0);
    }
}
