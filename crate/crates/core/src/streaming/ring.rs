//! Fixed-capacity FIFO of equal-width rows.

use crate::numerics::{Element, Tensor};

/// Logical row 0 is the oldest. Capacity never changes after construction.
#[derive(Clone, Debug, PartialEq)]
pub struct RowRing<S: Element> {
    data: Tensor<S>,
    head: usize,
}

impl<S: Element> RowRing<S> {
    pub fn zeros(capacity: usize, cols: usize) -> Self {
        RowRing {
            data: Tensor::zeros(capacity, cols),
            head: 0,
        }
    }

    /// Ring whose logical order is the row order of `rows`.
    pub fn from_tensor(rows: Tensor<S>) -> Self {
        RowRing { data: rows, head: 0 }
    }

    pub fn capacity(&self) -> usize {
        self.data.rows()
    }

    pub fn cols(&self) -> usize {
        self.data.cols()
    }

    /// Overwrites the oldest row with `row`.
    pub fn push(&mut self, row: &[S]) {
        assert_eq!(row.len(), self.cols(), "row width");
        if self.capacity() == 0 {
            return;
        }
        self.data.row_mut(self.head).copy_from_slice(row);
        self.head = (self.head + 1) % self.capacity();
    }

    pub fn row(&self, i: usize) -> &[S] {
        assert!(i < self.capacity(), "ring row {i} out of range");
        self.data.row((self.head + i) % self.capacity())
    }

    /// Logical rows `start..start + len` as a contiguous tensor.
    pub fn window(&self, start: usize, len: usize) -> Tensor<S> {
        let mut out = Tensor::zeros(len, self.cols());
        for r in 0..len {
            out.row_mut(r).copy_from_slice(self.row(start + r));
        }
        out
    }

    pub fn to_tensor(&self) -> Tensor<S> {
        self.window(0, self.capacity())
    }
}
