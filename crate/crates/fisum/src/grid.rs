//! Dense grids: shapes, input tensors, and semiring-valued fields.
//!
//! A grid of order p has extents (T₁,…,T_p) and is stored row-major: the last
//! coordinate is contiguous in memory. Two containers live on grids:
//!
//! * [`DataTensor`] — input data, a d-vector of finite reals per grid point
//!   (channels-last in memory).
//! * [`ScalarField`] — one semiring element per grid point, tagged with the
//!   semiring it lives in.
//!
//! File I/O for both lives in [`io`].

pub mod io;

use crate::error::{Error, Result};
use crate::semiring::SemiringTag;

/// Maximum supported grid order.
pub const MAX_ORDER: usize = 3;

/// Extents (T₁,…,T_p) of an order-p grid, 1 ≤ p ≤ [`MAX_ORDER`], every
/// extent ≥ 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GridShape {
    extents: Vec<usize>,
}

impl GridShape {
    pub fn new(extents: Vec<usize>) -> Result<Self> {
        if extents.is_empty() || extents.len() > MAX_ORDER {
            return Err(Error::ShapeMismatch(format!(
                "grid order must be 1..={MAX_ORDER}, got {}",
                extents.len()
            )));
        }
        if let Some(k) = extents.iter().position(|&e| e == 0) {
            return Err(Error::ShapeMismatch(format!("extent {k} is zero")));
        }
        Ok(GridShape { extents })
    }

    /// Order p of the grid.
    pub fn order(&self) -> usize {
        self.extents.len()
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    /// Total number of grid points.
    pub fn len(&self) -> usize {
        self.extents.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false // extents are ≥ 1, so a shape always has at least one point
    }

    /// Row-major strides: stride of the last axis is 1.
    pub fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.order()];
        for k in (0..self.order() - 1).rev() {
            s[k] = s[k + 1] * self.extents[k + 1];
        }
        s
    }

    /// Row-major linear index of `coords`.
    pub fn linear_of(&self, coords: &[usize]) -> usize {
        debug_assert_eq!(coords.len(), self.order());
        let mut idx = 0;
        for (k, &c) in coords.iter().enumerate() {
            debug_assert!(c < self.extents[k]);
            idx = idx * self.extents[k] + c;
        }
        idx
    }

    /// Coordinates of a row-major linear index.
    pub fn coords_of(&self, mut linear: usize) -> Vec<usize> {
        debug_assert!(linear < self.len());
        let mut coords = vec![0; self.order()];
        for k in (0..self.order()).rev() {
            coords[k] = linear % self.extents[k];
            linear /= self.extents[k];
        }
        coords
    }

    /// Calls `f` with the coordinates of every grid point in row-major order.
    pub fn for_each_point(&self, mut f: impl FnMut(&[usize])) {
        let mut coords = vec![0usize; self.order()];
        loop {
            f(&coords);
            // Odometer increment, last axis fastest.
            let mut k = self.order();
            loop {
                if k == 0 {
                    return;
                }
                k -= 1;
                coords[k] += 1;
                if coords[k] < self.extents[k] {
                    break;
                }
                coords[k] = 0;
            }
        }
    }

    /// All grid points in row-major order (allocates; intended for oracles
    /// and tests, not hot paths).
    pub fn points(&self) -> Vec<GridPoint> {
        let mut out = Vec::with_capacity(self.len());
        self.for_each_point(|c| out.push(GridPoint::new(c.to_vec())));
        out
    }
}

/// A single grid position.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GridPoint {
    coords: Vec<usize>,
}

impl GridPoint {
    pub fn new(coords: Vec<usize>) -> Self {
        GridPoint { coords }
    }

    pub fn coords(&self) -> &[usize] {
        &self.coords
    }

    pub fn order(&self) -> usize {
        self.coords.len()
    }
}

/// Order-p input data: a vector of `channels` finite reals per grid point,
/// stored row-major with channels last (`values[point * channels + c]`).
#[derive(Debug, Clone, PartialEq)]
pub struct DataTensor {
    shape: GridShape,
    channels: usize,
    values: Vec<f64>,
}

impl DataTensor {
    /// Validates lengths and rejects non-finite entries; the error names the
    /// offending flat index.
    pub fn new(shape: GridShape, channels: usize, values: Vec<f64>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::ShapeMismatch("channel count is zero".into()));
        }
        let expect = shape.len() * channels;
        if values.len() != expect {
            return Err(Error::ShapeMismatch(format!(
                "tensor has {} values, shape {:?} × {channels} channels needs {expect}",
                values.len(),
                shape.extents()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Ingestion(format!(
                "non-finite value {} at flat index {i}",
                values[i]
            )));
        }
        Ok(DataTensor {
            shape,
            channels,
            values,
        })
    }

    pub fn zeros(shape: GridShape, channels: usize) -> Self {
        let n = shape.len() * channels;
        DataTensor {
            shape,
            channels,
            values: vec![0.0; n],
        }
    }

    pub fn shape(&self) -> &GridShape {
        &self.shape
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// The channel vector at a row-major point index.
    pub fn point_values(&self, linear: usize) -> &[f64] {
        &self.values[linear * self.channels..(linear + 1) * self.channels]
    }

    pub fn get(&self, linear: usize, channel: usize) -> f64 {
        debug_assert!(channel < self.channels);
        self.values[linear * self.channels + channel]
    }

    pub fn set(&mut self, linear: usize, channel: usize, v: f64) {
        debug_assert!(channel < self.channels);
        self.values[linear * self.channels + channel] = v;
    }
}

/// One semiring element per grid point, row-major, tagged with its semiring.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    shape: GridShape,
    tag: SemiringTag,
    values: Vec<f64>,
}

impl ScalarField {
    /// Validates the length and that every value is an element of `tag`'s
    /// semiring (finite for real; finite or −∞ for max-plus).
    pub fn new(shape: GridShape, tag: SemiringTag, values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.len() {
            return Err(Error::ShapeMismatch(format!(
                "field has {} values, shape {:?} needs {}",
                values.len(),
                shape.extents(),
                shape.len()
            )));
        }
        if let Some(i) = values.iter().position(|&v| !tag.is_valid(v)) {
            return Err(Error::Ingestion(format!(
                "{} is not a valid {} value (flat index {i})",
                values[i],
                tag.name()
            )));
        }
        Ok(ScalarField { shape, tag, values })
    }

    /// A field holding 𝟘 everywhere.
    pub fn zeros(shape: GridShape, tag: SemiringTag) -> Self {
        let n = shape.len();
        ScalarField {
            shape,
            tag,
            values: vec![tag.zero(); n],
        }
    }

    pub fn shape(&self) -> &GridShape {
        &self.shape
    }

    pub fn tag(&self) -> SemiringTag {
        self.tag
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, linear: usize) -> f64 {
        self.values[linear]
    }

    pub fn set(&mut self, linear: usize, v: f64) {
        self.values[linear] = v;
    }

    pub(crate) fn from_parts_unchecked(
        shape: GridShape,
        tag: SemiringTag,
        values: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(values.len(), shape.len());
        ScalarField { shape, tag, values }
    }
}

/// ⊕-fold of every field entry in row-major order. For the real semiring the
/// fold is pairwise-reassociated to bound rounding error; for max-plus it is
/// a plain max-fold. An all-𝟘 field reduces to 𝟘.
pub fn field_reduce(field: &ScalarField) -> f64 {
    field.tag().reduce(field.values())
}
