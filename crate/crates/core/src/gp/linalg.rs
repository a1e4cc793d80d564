//! Dense Cholesky factorization and triangular solves.

use ndarray::{Array1, Array2, ArrayView1};

use crate::scalar::Real;

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + *x * *y)
}

/// Lower-triangular `L` with `L L^T = a`, or `None` if `a` is not
/// numerically positive definite.
pub fn cholesky<T: Real>(a: &Array2<T>) -> Option<Array2<T>> {
    let n = a.nrows();
    let mut l = vec![T::zero(); n * n];
    for j in 0..n {
        let (head, tail) = l.split_at_mut(j * n + n);
        let row_j = &mut head[j * n..];
        let d = a[[j, j]] - dot(&row_j[..j], &row_j[..j]);
        if !(d > T::zero()) || !d.is_finite() {
            return None;
        }
        let d = d.sqrt();
        row_j[j] = d;
        let row_j = &head[j * n..j * n + j];
        for i in j + 1..n {
            let row_i = &mut tail[(i - j - 1) * n..(i - j) * n];
            row_i[j] = (a[[i, j]] - dot(&row_i[..j], row_j)) / d;
        }
    }
    Some(Array2::from_shape_vec((n, n), l).expect("square"))
}

/// Solve `L x = b`.
pub fn solve_lower<T: Real>(l: &Array2<T>, b: ArrayView1<T>) -> Array1<T> {
    let n = l.nrows();
    let mut x = b.to_owned();
    for i in 0..n {
        let mut s = x[i];
        for k in 0..i {
            s = s - l[[i, k]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    x
}

/// Solve `L^T x = b`.
pub fn solve_upper_t<T: Real>(l: &Array2<T>, b: ArrayView1<T>) -> Array1<T> {
    let n = l.nrows();
    let mut x = b.to_owned();
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in i + 1..n {
            s = s - l[[k, i]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    x
}

/// Solve `(L L^T) x = b`.
pub fn cho_solve<T: Real>(l: &Array2<T>, b: ArrayView1<T>) -> Array1<T> {
    let z = solve_lower(l, b);
    solve_upper_t(l, z.view())
}

/// `(L L^T)^{-1}`, computed as `L^{-T} L^{-1}`.
pub fn cho_inverse<T: Real>(l: &Array2<T>) -> Array2<T> {
    let n = l.nrows();
    // Rows of L^{-1}, lower triangular.
    let mut w = vec![T::zero(); n * n];
    for i in 0..n {
        let (done, rest) = w.split_at_mut(i * n);
        let row = &mut rest[..n];
        row[i] = T::one();
        for k in 0..i {
            let c = l[[i, k]];
            if c != T::zero() {
                for (r, v) in row[..=k].iter_mut().zip(&done[k * n..k * n + k + 1]) {
                    *r = *r - c * *v;
                }
            }
        }
        let d = l[[i, i]];
        row[..=i].iter_mut().for_each(|v| *v = *v / d);
    }
    let mut inv = vec![T::zero(); n * n];
    for k in 0..n {
        let row = &w[k * n..k * n + k + 1];
        for i in 0..=k {
            let c = row[i];
            for (dst, v) in inv[i * n..i * n + i + 1].iter_mut().zip(&row[..=i]) {
                *dst = *dst + c * *v;
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            inv[j * n + i] = inv[i * n + j];
        }
    }
    Array2::from_shape_vec((n, n), inv).expect("square")
}

/// `log |L L^T|`.
pub fn log_det<T: Real>(l: &Array2<T>) -> T {
    (0..l.nrows()).map(|i| l[[i, i]].ln()).sum::<T>() * T::lit(2.0)
}
