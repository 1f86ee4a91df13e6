use std::fmt;

use super::error::TensorError;
use super::scalar::Scalar;

/// Dense row-major tensor.
#[derive(Clone, PartialEq)]
pub struct Tensor<S> {
    shape: Vec<usize>,
    data: Vec<S>,
}

impl<S: fmt::Debug> fmt::Debug for Tensor<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data", &self.data)
            .finish()
    }
}

impl<S: Scalar> Tensor<S> {
    pub fn new(shape: Vec<usize>, data: Vec<S>) -> Result<Self, TensorError> {
        if shape.is_empty() || shape.iter().any(|&d| d == 0) {
            return Err(TensorError::InvalidShape(shape));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorError::LengthMismatch {
                shape,
                len: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self, TensorError> {
        let n = shape.iter().product();
        Self::new(shape, vec![S::zero(); n])
    }

    pub fn scalar(value: S) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn vector(data: Vec<S>) -> Result<Self, TensorError> {
        let n = data.len();
        Self::new(vec![n], data)
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<S>) -> Result<Self, TensorError> {
        Self::new(vec![rows, cols], data)
    }

    /// Builds a matrix from nested rows; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<S>]) -> Result<Self, TensorError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(TensorError::InvalidShape(vec![rows.len(), cols]));
        }
        Self::matrix(rows.len(), cols, rows.concat())
    }

    /// Lifts an `f64` slice into this scalar type.
    pub fn from_f64(shape: Vec<usize>, data: &[f64]) -> Result<Self, TensorError> {
        Self::new(shape, data.iter().map(|&x| S::lit(x)).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// Rows and columns of a rank-2 tensor; a rank-1 tensor is one row.
    pub fn dims2(&self) -> Result<(usize, usize), TensorError> {
        match self.shape.as_slice() {
            [n] => Ok((1, *n)),
            [r, c] => Ok((*r, *c)),
            _ => Err(TensorError::RankMismatch {
                expected: 2,
                shape: self.shape.clone(),
            }),
        }
    }

    pub fn row(&self, r: usize) -> &[S] {
        let cols = *self.shape.last().unwrap_or(&1);
        &self.data[r * cols..(r + 1) * cols]
    }

    pub fn get2(&self, r: usize, c: usize) -> S {
        let cols = *self.shape.last().unwrap_or(&1);
        self.data[r * cols + c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn sum_squares(&self) -> S {
        self.data.iter().map(|&x| x * x).sum()
    }
}

// Plain kernels shared by the forward and backward rules.

/// `a (r×k) · b (k×c)`.
pub(crate) fn mm_nn<S: Scalar>(a: &[S], b: &[S], r: usize, k: usize, c: usize) -> Vec<S> {
    let mut out = vec![S::zero(); r * c];
    for i in 0..r {
        axpy_rows(&mut out[i * c..(i + 1) * c], &a[i * k..(i + 1) * k], b, c);
    }
    out
}

/// `out += Σ_j coef[j] · rows[j]`, four rows per pass over `out`.
fn axpy_rows<S: Scalar>(out: &mut [S], coef: &[S], rows: &[S], c: usize) {
    let mut j = 0;
    while j + 4 <= coef.len() {
        let (c0, c1, c2, c3) = (coef[j], coef[j + 1], coef[j + 2], coef[j + 3]);
        let r0 = &rows[j * c..(j + 1) * c];
        let r1 = &rows[(j + 1) * c..(j + 2) * c];
        let r2 = &rows[(j + 2) * c..(j + 3) * c];
        let r3 = &rows[(j + 3) * c..(j + 4) * c];
        for (x, o) in out.iter_mut().enumerate() {
            *o += c0 * r0[x] + c1 * r1[x] + c2 * r2[x] + c3 * r3[x];
        }
        j += 4;
    }
    for jj in j..coef.len() {
        let cj = coef[jj];
        if cj == S::zero() {
            continue;
        }
        for (o, &v) in out.iter_mut().zip(&rows[jj * c..(jj + 1) * c]) {
            *o += cj * v;
        }
    }
}

fn dot<S: Scalar>(x: &[S], y: &[S]) -> S {
    let mut acc = [S::zero(); 4];
    let (xc, yc) = (x.chunks_exact(4), y.chunks_exact(4));
    let (xr, yr) = (xc.remainder(), yc.remainder());
    for (p, q) in xc.zip(yc) {
        for l in 0..4 {
            acc[l] += p[l] * q[l];
        }
    }
    let mut tail = S::zero();
    for (&p, &q) in xr.iter().zip(yr) {
        tail += p * q;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `g (r×c) · bᵀ` where `b` is `k×c`; result `r×k`.
pub(crate) fn mm_nt<S: Scalar>(g: &[S], b: &[S], r: usize, c: usize, k: usize) -> Vec<S> {
    let mut out = vec![S::zero(); r * k];
    for i in 0..r {
        let grow = &g[i * c..(i + 1) * c];
        for kk in 0..k {
            out[i * k + kk] = dot(grow, &b[kk * c..(kk + 1) * c]);
        }
    }
    out
}

/// `aᵀ · g` where `a` is `r×k` and `g` is `r×c`; result `k×c`.
pub(crate) fn mm_tn<S: Scalar>(a: &[S], g: &[S], r: usize, k: usize, c: usize) -> Vec<S> {
    let at = transpose(a, r, k);
    let mut out = vec![S::zero(); k * c];
    for kk in 0..k {
        axpy_rows(&mut out[kk * c..(kk + 1) * c], &at[kk * r..(kk + 1) * r], g, c);
    }
    out
}

pub(crate) fn transpose<S: Scalar>(a: &[S], r: usize, c: usize) -> Vec<S> {
    let mut out = vec![S::zero(); r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = a[i * c + j];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_zero_extent_and_bad_length() {
        assert!(Tensor::<f64>::zeros(vec![3, 0]).is_err());
        assert!(matches!(
            Tensor::<f64>::new(vec![2, 2], vec![1.0; 3]),
            Err(TensorError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn kernels_agree_with_each_other() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2×3
        let b = [1.0, 0.5, -1.0, 2.0, 0.0, 1.0]; // 3×2
        let ab = mm_nn(&a, &b, 2, 3, 2);
        assert_eq!(ab, vec![-1.0, 7.5, -1.0, 18.0]);
        let bt = transpose(&b, 3, 2);
        assert_eq!(mm_nt(&a, &bt, 2, 3, 2), ab);
        let at = transpose(&a, 2, 3);
        assert_eq!(mm_tn(&at, &b, 3, 2, 2), ab);
    }
}
