//! Dense real arrays indexed by tuples over axes 1..=d.
//!
//! Axes carry 1-based labels in the public API (partitions, matricization)
//! while element access uses 0-based index tuples. Storage is row-major:
//! flattening is lexicographic with axis 1 most significant. Every
//! multi-axis flattening in the crate (matricization rows and columns, block
//! witnesses, kernel tables) uses the same convention: the participating
//! axes sorted ascending, earlier axis more significant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ArrayRepr", into = "ArrayRepr")]
pub struct MultiIndexArray {
    shape: Vec<usize>,
    values: Vec<f64>,
}

/// Wire form: `{"order": d, "shape": [...], "values": [...]}` with values in
/// row-major order.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArrayRepr {
    order: usize,
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl TryFrom<ArrayRepr> for MultiIndexArray {
    type Error = Error;

    fn try_from(repr: ArrayRepr) -> Result<Self> {
        if repr.order != repr.shape.len() {
            return Err(Error::InvalidShape(format!(
                "order {} disagrees with shape of length {}",
                repr.order,
                repr.shape.len()
            )));
        }
        MultiIndexArray::new(repr.shape, repr.values)
    }
}

impl From<MultiIndexArray> for ArrayRepr {
    fn from(a: MultiIndexArray) -> Self {
        ArrayRepr {
            order: a.shape.len(),
            shape: a.shape,
            values: a.values,
        }
    }
}

impl MultiIndexArray {
    /// Builds an array from a shape and row-major values. The shape must be
    /// nonempty with positive dimensions, and every value finite.
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if shape.is_empty() {
            return Err(Error::InvalidShape("order must be at least 1".into()));
        }
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::InvalidShape(format!(
                "zero-length axis in shape {shape:?}"
            )));
        }
        let len = numeric::checked_product(&shape).ok_or_else(|| {
            Error::InvalidShape(format!("shape {shape:?} overflows"))
        })?;
        if values.len() != len {
            return Err(Error::InvalidShape(format!(
                "shape {shape:?} needs {len} values, got {}",
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite array value {bad}"
            )));
        }
        Ok(Self { shape, values })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let len = numeric::checked_product(&shape).ok_or_else(|| {
            Error::InvalidShape(format!("shape {shape:?} overflows"))
        })?;
        Self::new(shape, vec![0.0; len])
    }

    /// Fills entry `index` (0-based tuple) with `f(index)`.
    pub fn from_fn(
        shape: Vec<usize>,
        mut f: impl FnMut(&[usize]) -> f64,
    ) -> Result<Self> {
        let mut out = Self::zeros(shape)?;
        let mut index = vec![0usize; out.order()];
        for flat in 0..out.values.len() {
            out.values[flat] = f(&index);
            increment_index(&mut index, &out.shape);
            let _ = flat;
        }
        MultiIndexArray::new(out.shape, out.values)
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// Row-major strides (axis 1 most significant).
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1usize; self.shape.len()];
        for axis in (0..self.shape.len().saturating_sub(1)).rev() {
            strides[axis] = strides[axis + 1] * self.shape[axis + 1];
        }
        strides
    }

    pub fn flat_index(&self, index: &[usize]) -> Result<usize> {
        if index.len() != self.shape.len() {
            return Err(Error::InvalidShape(format!(
                "index of length {} into array of order {}",
                index.len(),
                self.shape.len()
            )));
        }
        let mut flat = 0usize;
        for (axis, (&i, &d)) in index.iter().zip(&self.shape).enumerate() {
            if i >= d {
                return Err(Error::InvalidShape(format!(
                    "index {i} out of bounds for axis {} of length {d}",
                    axis + 1
                )));
            }
            flat = flat * d + i;
        }
        Ok(flat)
    }

    pub fn get(&self, index: &[usize]) -> Result<f64> {
        Ok(self.values[self.flat_index(index)?])
    }

    pub fn set(&mut self, index: &[usize], value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "non-finite array value {value}"
            )));
        }
        let flat = self.flat_index(index)?;
        self.values[flat] = value;
        Ok(())
    }

    /// Frobenius norm (root of the compensated sum of squares).
    pub fn frobenius(&self) -> f64 {
        numeric::l2_norm(&self.values)
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(
            self.shape.clone(),
            self.values.iter().map(|v| c * v).collect(),
        )
    }

    /// Iterates 0-based index tuples in row-major order.
    pub fn indices(&self) -> IndexIter {
        IndexIter {
            shape: self.shape.clone(),
            index: vec![0; self.shape.len()],
            remaining: self.values.len(),
        }
    }
}

pub struct IndexIter {
    shape: Vec<usize>,
    index: Vec<usize>,
    remaining: usize,
}

impl Iterator for IndexIter {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.remaining == 0 {
            return None;
        }
        let out = self.index.clone();
        increment_index(&mut self.index, &self.shape);
        self.remaining -= 1;
        Some(out)
    }
}

/// Odometer step in row-major order (last axis fastest).
pub(crate) fn increment_index(index: &mut [usize], shape: &[usize]) {
    for axis in (0..shape.len()).rev() {
        index[axis] += 1;
        if index[axis] < shape[axis] {
            return;
        }
        index[axis] = 0;
    }
}

/// Reshapes `a` into a matrix whose rows enumerate the `row_axes` and whose
/// columns enumerate the `col_axes` (1-based labels). The two sets must
/// partition {1..=order}. Rows and columns are flattened lexicographically
/// in ascending axis order regardless of the order given.
pub fn matricize(
    a: &MultiIndexArray,
    row_axes: &[usize],
    col_axes: &[usize],
) -> Result<MultiIndexArray> {
    let d = a.order();
    let mut rows = row_axes.to_vec();
    let mut cols = col_axes.to_vec();
    rows.sort_unstable();
    cols.sort_unstable();
    let mut seen = vec![false; d];
    for &axis in rows.iter().chain(cols.iter()) {
        if axis == 0 || axis > d {
            return Err(Error::InvalidPartition(format!(
                "axis {axis} outside 1..={d}"
            )));
        }
        if seen[axis - 1] {
            return Err(Error::InvalidPartition(format!(
                "axis {axis} listed twice"
            )));
        }
        seen[axis - 1] = true;
    }
    if seen.iter().any(|&s| !s) {
        return Err(Error::InvalidPartition(
            "row and column axes must cover every axis".into(),
        ));
    }
    if rows.is_empty() || cols.is_empty() {
        return Err(Error::InvalidPartition(
            "row and column axis sets must be nonempty".into(),
        ));
    }

    let dim_of = |axes: &[usize]| -> usize {
        axes.iter().map(|&ax| a.shape()[ax - 1]).product()
    };
    let (n_rows, n_cols) = (dim_of(&rows), dim_of(&cols));

    let mut out = vec![0.0; n_rows * n_cols];
    let strides = a.strides();
    let group_strides = |axes: &[usize]| -> Vec<usize> {
        // Stride of each axis inside its group flattening.
        let mut s = vec![1usize; axes.len()];
        for k in (0..axes.len().saturating_sub(1)).rev() {
            s[k] = s[k + 1] * a.shape()[axes[k + 1] - 1];
        }
        s
    };
    let row_strides = group_strides(&rows);
    let col_strides = group_strides(&cols);

    for (flat, &v) in a.values().iter().enumerate() {
        let mut row = 0usize;
        for (k, &axis) in rows.iter().enumerate() {
            let digit = flat / strides[axis - 1] % a.shape()[axis - 1];
            row += digit * row_strides[k];
        }
        let mut col = 0usize;
        for (k, &axis) in cols.iter().enumerate() {
            let digit = flat / strides[axis - 1] % a.shape()[axis - 1];
            col += digit * col_strides[k];
        }
        out[row * n_cols + col] = v;
    }
    MultiIndexArray::new(vec![n_rows, n_cols], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(MultiIndexArray::new(vec![], vec![]).is_err());
        assert!(MultiIndexArray::new(vec![2, 0], vec![]).is_err());
        assert!(MultiIndexArray::new(vec![2], vec![1.0]).is_err());
        assert!(MultiIndexArray::new(vec![1], vec![f64::NAN]).is_err());
    }

    #[test]
    fn row_major_layout() {
        let a =
            MultiIndexArray::new(vec![2, 3], (0..6).map(f64::from).collect())
                .unwrap();
        assert_eq!(a.get(&[0, 0]).unwrap(), 0.0);
        assert_eq!(a.get(&[0, 2]).unwrap(), 2.0);
        assert_eq!(a.get(&[1, 0]).unwrap(), 3.0);
        assert_eq!(a.strides(), vec![3, 1]);
    }

    #[test]
    fn matricize_groups_axes_ascending() {
        // 2x2x2 with value 4*i + 2*j + k at (i, j, k).
        let a = MultiIndexArray::from_fn(vec![2, 2, 2], |ix| {
            (4 * ix[0] + 2 * ix[1] + ix[2]) as f64
        })
        .unwrap();
        let m = matricize(&a, &[1, 3], &[2]).unwrap();
        assert_eq!(m.shape(), &[4, 2]);
        // Row (i, k) with i most significant, column j.
        assert_eq!(m.get(&[0, 1]).unwrap(), 2.0); // i=0,k=0,j=1
        assert_eq!(m.get(&[1, 0]).unwrap(), 1.0); // i=0,k=1,j=0
        assert_eq!(m.get(&[3, 1]).unwrap(), 7.0); // i=1,k=1,j=1
    }

    #[test]
    fn matricize_axis_order_is_irrelevant() {
        let a = MultiIndexArray::from_fn(vec![2, 3, 2], |ix| {
            (ix[0] * 11 + ix[1] * 3 + ix[2]) as f64
        })
        .unwrap();
        let m1 = matricize(&a, &[3, 1], &[2]).unwrap();
        let m2 = matricize(&a, &[1, 3], &[2]).unwrap();
        assert_eq!(m1, m2);
    }

    #[test]
    fn matricize_rejects_partial_covers() {
        let a = MultiIndexArray::zeros(vec![2, 2, 2]).unwrap();
        assert!(matricize(&a, &[1], &[2]).is_err());
        assert!(matricize(&a, &[1, 2], &[2, 3]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let a = MultiIndexArray::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0])
            .unwrap();
        let json = serde_json::to_string(&a).unwrap();
        assert!(json.contains("\"order\":2"));
        let back: MultiIndexArray = serde_json::from_str(&json).unwrap();
        assert_eq!(a, back);
        let bad = r#"{"order":3,"shape":[2,2],"values":[1,0,0,1]}"#;
        assert!(serde_json::from_str::<MultiIndexArray>(bad).is_err());
    }
}
