use alloc::vec;
use alloc::vec::Vec;

use super::TensorError;
use crate::Real;

/// Group id per element, used to normalize and reduce over `j in N(i)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentIndex {
    ids: Vec<u32>,
    num_groups: usize,
    sizes: Vec<u32>,
}

impl SegmentIndex {
    pub fn new(ids: Vec<u32>, num_groups: usize) -> Result<Self, TensorError> {
        let mut sizes = vec![0u32; num_groups];
        for (e, &g) in ids.iter().enumerate() {
            let slot = sizes
                .get_mut(g as usize)
                .ok_or(TensorError::SegmentOutOfRange {
                    element: e,
                    group: g as usize,
                    num_groups,
                })?;
            *slot += 1;
        }
        Ok(SegmentIndex {
            ids,
            num_groups,
            sizes,
        })
    }

    /// Contiguous groups described by CSR-style offsets.
    pub fn from_offsets(offsets: &[usize]) -> Self {
        let num_groups = offsets.len().saturating_sub(1);
        let mut ids = Vec::with_capacity(offsets.last().copied().unwrap_or(0));
        let mut sizes = Vec::with_capacity(num_groups);
        for g in 0..num_groups {
            let n = offsets[g + 1] - offsets[g];
            ids.extend(core::iter::repeat_n(g as u32, n));
            sizes.push(n as u32);
        }
        SegmentIndex {
            ids,
            num_groups,
            sizes,
        }
    }

    #[inline]
    pub fn ids(&self) -> &[u32] {
        &self.ids
    }
    #[inline]
    pub fn len(&self) -> usize {
        self.ids.len()
    }
    #[inline]
    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
    #[inline]
    pub fn num_groups(&self) -> usize {
        self.num_groups
    }
    pub fn group_size(&self, g: usize) -> usize {
        self.sizes[g] as usize
    }

    pub fn check_nonempty(&self) -> Result<(), TensorError> {
        match self.sizes.iter().position(|&s| s == 0) {
            Some(g) => Err(TensorError::EmptyGroup(g)),
            None => Ok(()),
        }
    }

    /// Column-wise segment softmax of an `len x h` row-major buffer.
    pub(crate) fn softmax<T: Real>(&self, x: &[T], h: usize, out: &mut [T]) {
        let g = self.num_groups;
        let mut max = vec![T::neg_infinity(); g * h];
        for (e, &grp) in self.ids.iter().enumerate() {
            let m = &mut max[grp as usize * h..(grp as usize + 1) * h];
            for (mk, &xk) in m.iter_mut().zip(&x[e * h..(e + 1) * h]) {
                if xk > *mk {
                    *mk = xk;
                }
            }
        }
        let mut sum = vec![T::zero(); g * h];
        for (e, &grp) in self.ids.iter().enumerate() {
            let gi = grp as usize;
            for k in 0..h {
                let v = (x[e * h + k] - max[gi * h + k]).exp();
                out[e * h + k] = v;
                sum[gi * h + k] = sum[gi * h + k] + v;
            }
        }
        for (e, &grp) in self.ids.iter().enumerate() {
            let gi = grp as usize;
            for k in 0..h {
                out[e * h + k] = out[e * h + k] / sum[gi * h + k];
            }
        }
    }
}
