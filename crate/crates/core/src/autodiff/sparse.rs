use alloc::vec::Vec;
use rand_core::RngCore;

use super::{Tensor, TensorError};
use crate::Real;

/// Constant sparse matrix (no gradient flows into its values).
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    rows: usize,
    cols: usize,
    offsets: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<T>,
}

impl<T: Real> CsrMatrix<T> {
    pub fn new(
        rows: usize,
        cols: usize,
        offsets: Vec<usize>,
        indices: Vec<u32>,
        values: Vec<T>,
    ) -> Result<Self, TensorError> {
        let ok = offsets.len() == rows + 1
            && offsets.first() == Some(&0)
            && offsets.last() == Some(&indices.len())
            && indices.len() == values.len()
            && offsets.windows(2).all(|w| w[0] <= w[1])
            && indices.iter().all(|&j| (j as usize) < cols);
        if !ok {
            return Err(TensorError::MalformedSparse);
        }
        Ok(CsrMatrix {
            rows,
            cols,
            offsets,
            indices,
            values,
        })
    }

    pub fn from_rows(
        cols: usize,
        rows: impl IntoIterator<Item = Vec<(u32, T)>>,
    ) -> Result<Self, TensorError> {
        let mut offsets = Vec::new();
        let mut indices = Vec::new();
        let mut values = Vec::new();
        offsets.push(0);
        for row in rows {
            for (j, v) in row {
                indices.push(j);
                values.push(v);
            }
            offsets.push(indices.len());
        }
        Self::new(offsets.len() - 1, cols, offsets, indices, values)
    }

    /// The nonzero entries of `t`.
    pub fn from_dense(t: &Tensor<T>) -> Self {
        let mut offsets = Vec::with_capacity(t.rows() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        offsets.push(0);
        for i in 0..t.rows() {
            for (j, &v) in t.row(i).iter().enumerate() {
                if v != T::zero() {
                    indices.push(j as u32);
                    values.push(v);
                }
            }
            offsets.push(indices.len());
        }
        CsrMatrix {
            rows: t.rows(),
            cols: t.cols(),
            offsets,
            indices,
            values,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Inverted dropout over the stored entries, with the same keep rule as
    /// [`Tape::dropout`](super::Tape::dropout). Dropping a zero changes
    /// nothing, so the result is distributed like dense dropout of
    /// [`CsrMatrix::to_dense`].
    pub fn dropout(&self, rate: f64, rng: &mut impl RngCore) -> Result<Self, TensorError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(TensorError::RateOutOfRange(rate));
        }
        let threshold = (rate * 4_294_967_296.0) as u64;
        let keep = T::from_f64(1.0 / (1.0 - rate));
        let mut out = self.clone();
        for v in &mut out.values {
            *v = if rng.next_u32() as u64 >= threshold { *v * keep } else { T::zero() };
        }
        Ok(out)
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let r = self.offsets[i]..self.offsets[i + 1];
        self.indices[r.clone()]
            .iter()
            .zip(&self.values[r])
            .map(|(&j, &v)| (j as usize, v))
    }

    pub fn to_dense(&self) -> Tensor<T> {
        let mut t = Tensor::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for (j, v) in self.row(i) {
                t.set(i, j, t.get(i, j) + v);
            }
        }
        t
    }

    pub(crate) fn mul_dense(&self, x: &Tensor<T>) -> Tensor<T> {
        let c = x.cols();
        let mut out = Tensor::zeros(self.rows, c);
        for i in 0..self.rows {
            for (j, w) in self.row(i) {
                let src = x.row(j);
                let dst = out.row_mut(i);
                for (o, &s) in dst.iter_mut().zip(src) {
                    *o = *o + w * s;
                }
            }
        }
        out
    }

    /// `out += self^T * g`
    pub(crate) fn mul_transposed_acc(&self, g: &Tensor<T>, out: &mut Tensor<T>) {
        for i in 0..self.rows {
            for (j, w) in self.row(i) {
                let gi = g.row(i);
                let oj = out.row_mut(j);
                for (o, &s) in oj.iter_mut().zip(gi) {
                    *o = *o + w * s;
                }
            }
        }
    }
}
