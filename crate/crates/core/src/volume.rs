//! 3-D attenuation volume on an isotropic voxel grid.

use crate::error::{CoreError, Result};
use crate::Real;

/// Voxel grid of attenuation values (unitless·mm⁻¹ scale, ≥ 0).
///
/// `origin` is the mm offset of the corner of voxel (0,0,0) from the
/// isocenter; voxel (ix,iy,iz) occupies
/// `[origin + i*spacing, origin + (i+1)*spacing)` along each axis.
/// Data is stored x-fastest: `idx = ix + nx*(iy + ny*iz)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume3D<T> {
    dims: [usize; 3],
    spacing: f64,
    origin: [f64; 3],
    data: Vec<T>,
}

impl<T: Real> Volume3D<T> {
    pub fn zeros(dims: [usize; 3], spacing: f64, origin: [f64; 3]) -> Result<Self> {
        Self::from_vec(
            dims,
            spacing,
            origin,
            vec![T::zero(); dims[0] * dims[1] * dims[2]],
        )
    }

    /// Grid centered on the isocenter.
    pub fn centered(dims: [usize; 3], spacing: f64) -> Result<Self> {
        let origin = [
            -0.5 * dims[0] as f64 * spacing,
            -0.5 * dims[1] as f64 * spacing,
            -0.5 * dims[2] as f64 * spacing,
        ];
        Self::zeros(dims, spacing, origin)
    }

    pub fn from_vec(dims: [usize; 3], spacing: f64, origin: [f64; 3], data: Vec<T>) -> Result<Self> {
        if dims.iter().any(|&d| d < 1) {
            return Err(CoreError::Volume(format!("dims must be >= 1, got {dims:?}")));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(CoreError::Volume(format!("spacing must be > 0, got {spacing}")));
        }
        if !origin.iter().all(|o| o.is_finite()) {
            return Err(CoreError::Volume("non-finite origin".into()));
        }
        let n = dims[0] * dims[1] * dims[2];
        if data.len() != n {
            return Err(CoreError::Volume(format!(
                "data length {} != {}x{}x{}",
                data.len(),
                dims[0],
                dims[1],
                dims[2]
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(CoreError::Volume("non-finite voxel value".into()));
        }
        Ok(Self {
            dims,
            spacing,
            origin,
            data,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        ix + self.dims[0] * (iy + self.dims[1] * iz)
    }

    #[inline]
    pub fn get(&self, ix: usize, iy: usize, iz: usize) -> T {
        self.data[self.index(ix, iy, iz)]
    }

    #[inline]
    pub fn set(&mut self, ix: usize, iy: usize, iz: usize, value: T) {
        let i = self.index(ix, iy, iz);
        self.data[i] = value;
    }

    /// Lower corner of the grid in mm.
    pub fn lower(&self) -> [f64; 3] {
        self.origin
    }

    /// Upper corner of the grid in mm.
    pub fn upper(&self) -> [f64; 3] {
        [
            self.origin[0] + self.dims[0] as f64 * self.spacing,
            self.origin[1] + self.dims[1] as f64 * self.spacing,
            self.origin[2] + self.dims[2] as f64 * self.spacing,
        ]
    }

    /// World-space center of voxel (ix,iy,iz) in mm.
    pub fn voxel_center(&self, ix: usize, iy: usize, iz: usize) -> [f64; 3] {
        [
            self.origin[0] + (ix as f64 + 0.5) * self.spacing,
            self.origin[1] + (iy as f64 + 0.5) * self.spacing,
            self.origin[2] + (iz as f64 + 0.5) * self.spacing,
        ]
    }

    /// a*self + b*other on matching grids.
    pub fn scaled_add(&self, a: T, other: &Self, b: T) -> Result<Self> {
        if self.dims != other.dims {
            return Err(CoreError::Shape(format!(
                "volume dims {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        let data = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(&x, &y)| a * x + b * y)
            .collect();
        Ok(Self {
            dims: self.dims,
            spacing: self.spacing,
            origin: self.origin,
            data,
        })
    }
}
