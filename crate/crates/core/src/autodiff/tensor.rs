use alloc::vec;
use alloc::vec::Vec;

use super::TensorError;
use crate::Real;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self, TensorError> {
        if data.len() != rows * cols {
            return Err(TensorError::DataLength {
                rows,
                cols,
                len: data.len(),
            });
        }
        Ok(Tensor { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Tensor { rows, cols, data }
    }

    pub fn scalar(v: T) -> Self {
        Tensor {
            rows: 1,
            cols: 1,
            data: vec![v],
        }
    }

    pub fn column(data: Vec<T>) -> Self {
        Tensor {
            rows: data.len(),
            cols: 1,
            data,
        }
    }

    pub fn row_vector(data: Vec<T>) -> Self {
        Tensor {
            rows: 1,
            cols: data.len(),
            data,
        }
    }

    pub fn from_f64(rows: usize, cols: usize, data: &[f64]) -> Result<Self, TensorError> {
        Self::new(rows, cols, data.iter().map(|&v| T::from_f64(v)).collect())
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| U::from_f64(v.as_f64())).collect(),
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }
    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }
    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }
    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }
    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }
    pub fn into_data(self) -> Vec<T> {
        self.data
    }
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }
    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn all_finite(&self) -> bool {
        self.data
            .chunks(512)
            .all(|c| c.iter().fold(true, |ok, v| ok & v.is_finite()))
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor<T>) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
    }
}

/// `out (+)= a * b`; rows of `a` with zero entries are skipped, which makes
/// bag-of-words feature matrices cheap.
pub(crate) fn matmul_into<T: Real>(a: &Tensor<T>, b: &Tensor<T>, out: &mut Tensor<T>) {
    let n = b.cols;
    for i in 0..a.rows {
        let arow = a.row(i);
        let orow = &mut out.data[i * n..(i + 1) * n];
        for (k, &aik) in arow.iter().enumerate() {
            if aik == T::zero() {
                continue;
            }
            let brow = &b.data[k * n..(k + 1) * n];
            for (o, &bkj) in orow.iter_mut().zip(brow) {
                *o = *o + aik * bkj;
            }
        }
    }
}

/// `out += g * b^T`
pub(crate) fn matmul_nt_acc<T: Real>(g: &Tensor<T>, b: &Tensor<T>, out: &mut Tensor<T>) {
    for i in 0..g.rows {
        let grow = g.row(i);
        for k in 0..b.rows {
            let brow = b.row(k);
            let mut s = T::zero();
            for (&x, &y) in grow.iter().zip(brow) {
                s = s + x * y;
            }
            let o = &mut out.data[i * b.rows + k];
            *o = *o + s;
        }
    }
}

/// `out += a^T * g`
pub(crate) fn matmul_tn_acc<T: Real>(a: &Tensor<T>, g: &Tensor<T>, out: &mut Tensor<T>) {
    let n = g.cols;
    for i in 0..a.rows {
        let grow = g.row(i);
        for (k, &aik) in a.row(i).iter().enumerate() {
            if aik == T::zero() {
                continue;
            }
            let orow = &mut out.data[k * n..(k + 1) * n];
            for (o, &x) in orow.iter_mut().zip(grow) {
                *o = *o + aik * x;
            }
        }
    }
}
