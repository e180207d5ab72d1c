//! Batched `[batch, channels, length]` arrays, the value type every layer
//! consumes and produces.

use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3<T> {
    batch: usize,
    channels: usize,
    length: usize,
    data: Vec<T>,
    /// Gradient slot, same shape as `data` when present.
    pub grad: Option<Vec<T>>,
}

impl<T: Real> Tensor3<T> {
    pub fn zeros(batch: usize, channels: usize, length: usize) -> Self {
        Self {
            batch,
            channels,
            length,
            data: vec![T::zero(); batch * channels * length],
            grad: None,
        }
    }

    pub fn filled(batch: usize, channels: usize, length: usize, value: T) -> Self {
        Self {
            batch,
            channels,
            length,
            data: vec![value; batch * channels * length],
            grad: None,
        }
    }

    pub fn from_vec(batch: usize, channels: usize, length: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != batch * channels * length {
            return Err(Error::shape(format!(
                "buffer of {} values cannot hold [{batch}, {channels}, {length}]",
                data.len()
            )));
        }
        Ok(Self {
            batch,
            channels,
            length,
            data,
            grad: None,
        })
    }

    /// Builds a `[batch, features, 1]` tensor from flat per-row features.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let features = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * features);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != features {
                return Err(Error::shape(format!(
                    "row {i} has {} features, expected {features}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Self::from_vec(rows.len(), features, 1, data)
    }

    pub fn with_grad(mut self, grad: Vec<T>) -> Result<Self> {
        if grad.len() != self.data.len() {
            return Err(Error::shape(format!(
                "gradient of {} values for tensor {:?}",
                grad.len(),
                self.shape()
            )));
        }
        self.grad = Some(grad);
        Ok(self)
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.batch, self.channels, self.length)
    }

    #[inline]
    pub fn batch(&self) -> usize {
        self.batch
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn length(&self) -> usize {
        self.length
    }

    /// Flat feature count per batch row (`channels * length`).
    #[inline]
    pub fn row_len(&self) -> usize {
        self.channels * self.length
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
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn at(&self, b: usize, c: usize, l: usize) -> T {
        self.data[(b * self.channels + c) * self.length + l]
    }

    #[inline]
    pub fn set(&mut self, b: usize, c: usize, l: usize, v: T) {
        self.data[(b * self.channels + c) * self.length + l] = v;
    }

    /// One `[length]` signal.
    #[inline]
    pub fn lane(&self, b: usize, c: usize) -> &[T] {
        let start = (b * self.channels + c) * self.length;
        &self.data[start..start + self.length]
    }

    #[inline]
    pub fn lane_mut(&mut self, b: usize, c: usize) -> &mut [T] {
        let start = (b * self.channels + c) * self.length;
        &mut self.data[start..start + self.length]
    }

    /// All channels of batch row `b`, flattened.
    #[inline]
    pub fn row(&self, b: usize) -> &[T] {
        let n = self.row_len();
        &self.data[b * n..(b + 1) * n]
    }

    #[inline]
    pub fn row_mut(&mut self, b: usize) -> &mut [T] {
        let n = self.row_len();
        &mut self.data[b * n..(b + 1) * n]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            batch: self.batch,
            channels: self.channels,
            length: self.length,
            data: self.data.iter().map(|&v| f(v)).collect(),
            grad: None,
        }
    }

    /// Extracts channel `c` of every batch row as a `[batch, 1, length]` tensor.
    pub fn channel(&self, c: usize) -> Self {
        let mut out = Self::zeros(self.batch, 1, self.length);
        for b in 0..self.batch {
            out.lane_mut(b, 0).copy_from_slice(self.lane(b, c));
        }
        out
    }

    /// Selects a subset of batch rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let n = self.row_len();
        let mut data = Vec::with_capacity(rows.len() * n);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Self {
            batch: rows.len(),
            channels: self.channels,
            length: self.length,
            data,
            grad: None,
        }
    }

    /// Stacks single-row tensors of identical `[channels, length]` shape.
    pub fn stack(items: &[&Self]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::invalid("cannot stack an empty list"))?;
        let (c, l) = (first.channels, first.length);
        let mut data = Vec::new();
        let mut batch = 0;
        for t in items {
            if t.channels != c || t.length != l {
                return Err(Error::shape(format!(
                    "cannot stack {:?} with {:?}",
                    t.shape(),
                    first.shape()
                )));
            }
            data.extend_from_slice(&t.data);
            batch += t.batch;
        }
        Self::from_vec(batch, c, l, data)
    }

    pub fn cast<U: Real>(&self) -> Tensor3<U> {
        Tensor3 {
            batch: self.batch,
            channels: self.channels,
            length: self.length,
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
            grad: self
                .grad
                .as_ref()
                .map(|g| g.iter().map(|v| U::lit(v.as_f64())).collect()),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
            && self
                .grad
                .as_ref()
                .is_none_or(|g| g.iter().all(|v| v.is_finite()))
    }
}
