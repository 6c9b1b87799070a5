//! Single-channel 2-D grid: projections, masks (as {0,1}) and diffusion
//! states all live in this type.

use crate::error::{CoreError, Result};
use crate::Real;

/// Row-major single-channel image.
#[derive(Debug, Clone, PartialEq)]
pub struct Image2D<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Image2D<T> {
    /// All-zero image.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    /// Constant-valued image.
    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    /// Wrap existing row-major data. Rejects length mismatches and
    /// non-finite values.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(CoreError::Image(format!(
                "data length {} != {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(CoreError::Image("non-finite pixel value".into()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: T) {
        self.data[row * self.cols + col] = value;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.data.iter()
    }

    /// Apply `f` to every pixel.
    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Combine two images pixel by pixel. Panics on shape mismatch; callers
    /// with untrusted shapes check `same_shape` first.
    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        assert!(
            self.same_shape(other),
            "zip_map shape mismatch: {}x{} vs {}x{}",
            self.rows,
            self.cols,
            other.rows,
            other.cols
        );
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// a*self + b*other.
    pub fn scaled_add(&self, a: T, other: &Self, b: T) -> Self {
        self.zip_map(other, |x, y| a * x + b * y)
    }

    pub fn max_value(&self) -> T {
        self.data.iter().fold(T::neg_infinity(), |m, &v| m.max(v))
    }

    pub fn min_value(&self) -> T {
        self.data.iter().fold(T::infinity(), |m, &v| m.min(v))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// True when every pixel is exactly 0 or 1.
    pub fn is_binary(&self) -> bool {
        self.data
            .iter()
            .all(|&v| v == T::zero() || v == T::one())
    }

    /// Euclidean norm over all pixels.
    pub fn norm_l2(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |acc, &v| acc + v * v)
            .sqrt()
    }

    /// Cast pixel values to another scalar type (via f64).
    pub fn cast<U: Real>(&self) -> Image2D<U> {
        Image2D {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| crate::real(v.as_f64())).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_rejects_bad_length() {
        assert!(Image2D::<f32>::from_vec(2, 2, vec![0.0; 3]).is_err());
    }

    #[test]
    fn from_vec_rejects_non_finite() {
        assert!(Image2D::from_vec(1, 2, vec![0.0f32, f32::NAN]).is_err());
    }

    #[test]
    fn binary_check() {
        let m = Image2D::from_vec(1, 3, vec![0.0f32, 1.0, 1.0]).unwrap();
        assert!(m.is_binary());
        let m = Image2D::from_vec(1, 3, vec![0.0f32, 0.5, 1.0]).unwrap();
        assert!(!m.is_binary());
    }

    #[test]
    fn zip_map_adds() {
        let a = Image2D::from_vec(2, 1, vec![1.0f64, 2.0]).unwrap();
        let b = Image2D::from_vec(2, 1, vec![10.0f64, 20.0]).unwrap();
        let c = a.zip_map(&b, |x, y| x + y);
        assert_eq!(c.as_slice(), &[11.0, 22.0]);
    }
}
