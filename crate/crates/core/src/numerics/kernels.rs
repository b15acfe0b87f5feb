//! Forward kernels shared by plain evaluation and the gradient tape.
//!
//! Every reduction runs left to right in f64 so that results are
//! reproducible bit for bit.

use super::tensor::Tensor;
use super::NORM_EPS;
use crate::error::{Error, Result};

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
    a.ensure_same_shape(b)?;
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Ok(Tensor::from_parts(a.shape().to_vec(), data))
}

fn map(a: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor::from_parts(a.shape().to_vec(), a.data().iter().map(|&x| f(x)).collect())
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    zip_map(a, b, |x, y| x + y)
}

pub fn sub(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    zip_map(a, b, |x, y| x - y)
}

pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    zip_map(a, b, |x, y| x * y)
}

pub fn scale(a: &Tensor, s: f64) -> Tensor {
    map(a, |x| x * s)
}

pub fn tanh(a: &Tensor) -> Tensor {
    map(a, f64::tanh)
}

pub fn abs(a: &Tensor) -> Tensor {
    map(a, f64::abs)
}

/// `a · bᵀ` for `a: n×k`, `b: m×k`.
pub fn matmul_t(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.cols() != b.cols() {
        return Err(Error::ShapeMismatch {
            expected: vec![b.rows(), a.cols()],
            got: b.shape().to_vec(),
        });
    }
    let (n, m) = (a.rows(), b.rows());
    let mut out = Vec::with_capacity(n * m);
    for i in 0..n {
        let ai = a.row(i);
        for j in 0..m {
            out.push(dot(ai, b.row(j)));
        }
    }
    Ok(Tensor::from_parts(vec![n, m], out))
}

/// `a · b` for `a: n×k`, `b: k×m`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.cols() != b.rows() {
        return Err(Error::ShapeMismatch {
            expected: vec![a.cols(), b.cols()],
            got: b.shape().to_vec(),
        });
    }
    let (n, k, m) = (a.rows(), a.cols(), b.cols());
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let orow = &mut out[i * m..(i + 1) * m];
        for l in 0..k {
            let x = a.get(i, l);
            for (o, &y) in orow.iter_mut().zip(b.row(l)) {
                *o += x * y;
            }
        }
    }
    Ok(Tensor::from_parts(vec![n, m], out))
}

pub fn transpose(a: &Tensor) -> Tensor {
    let (n, m) = (a.rows(), a.cols());
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            out[j * n + i] = a.get(i, j);
        }
    }
    Tensor::from_parts(vec![m, n], out)
}

/// Adds the row vector `r` to every row of `a`.
pub fn add_row(a: &Tensor, r: &Tensor) -> Result<Tensor> {
    if r.len() != a.cols() {
        return Err(Error::ShapeMismatch {
            expected: vec![a.cols()],
            got: r.shape().to_vec(),
        });
    }
    let mut out = a.clone();
    for i in 0..a.rows() {
        for (o, &b) in out.row_mut(i).iter_mut().zip(r.data()) {
            *o += b;
        }
    }
    Ok(out)
}

/// Divides every row by its L2 norm.
pub fn normalize_rows(a: &Tensor) -> Result<Tensor> {
    let mut out = a.clone();
    for i in 0..a.rows() {
        let row = out.row_mut(i);
        let n = norm(row);
        if n <= NORM_EPS {
            return Err(Error::DegenerateVector { norm: n });
        }
        for v in row.iter_mut() {
            *v /= n;
        }
    }
    Ok(out)
}

/// Row-wise dot products; output has shape `[n]`.
pub fn row_dot(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(Error::ShapeMismatch {
            expected: a.shape().to_vec(),
            got: b.shape().to_vec(),
        });
    }
    let out = (0..a.rows()).map(|i| dot(a.row(i), b.row(i))).collect();
    Ok(Tensor::from_parts(vec![a.rows()], out))
}

/// Numerically stable log-softmax of every row.
pub fn log_softmax_rows(a: &Tensor) -> Tensor {
    let mut out = a.clone();
    for i in 0..a.rows() {
        let row = out.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for &v in row.iter() {
            sum += (v - max).exp();
        }
        let lse = max + sum.ln();
        for v in row.iter_mut() {
            *v -= lse;
        }
    }
    out
}

pub fn gather_rows(table: &Tensor, idx: &[usize]) -> Result<Tensor> {
    let c = table.cols();
    let mut out = Vec::with_capacity(idx.len() * c);
    for &i in idx {
        if i >= table.rows() {
            return Err(Error::InvalidClass {
                class: i,
                classes: table.rows(),
            });
        }
        out.extend_from_slice(table.row(i));
    }
    if idx.is_empty() {
        return Err(Error::InvalidTensor("gather of zero rows".into()));
    }
    Ok(Tensor::from_parts(vec![idx.len(), c], out))
}

/// Selects `a[i, idx[i]]` for every row; output has shape `[n]`.
pub fn pick(a: &Tensor, idx: &[usize]) -> Result<Tensor> {
    if idx.len() != a.rows() {
        return Err(Error::ShapeMismatch {
            expected: vec![a.rows()],
            got: vec![idx.len()],
        });
    }
    let mut out = Vec::with_capacity(idx.len());
    for (i, &j) in idx.iter().enumerate() {
        if j >= a.cols() {
            return Err(Error::InvalidClass {
                class: j,
                classes: a.cols(),
            });
        }
        out.push(a.get(i, j));
    }
    Ok(Tensor::from_parts(vec![idx.len()], out))
}

pub fn sum(a: &Tensor) -> f64 {
    let mut acc = 0.0;
    for &v in a.data() {
        acc += v;
    }
    acc
}

pub fn mean(a: &Tensor) -> f64 {
    sum(a) / a.len() as f64
}

pub fn concat_rows(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.cols() != b.cols() {
        return Err(Error::ShapeMismatch {
            expected: vec![b.rows(), a.cols()],
            got: b.shape().to_vec(),
        });
    }
    let mut data = a.data().to_vec();
    data.extend_from_slice(b.data());
    Ok(Tensor::from_parts(vec![a.rows() + b.rows(), a.cols()], data))
}
