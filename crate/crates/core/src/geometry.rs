//! C-arm cone-beam acquisition geometry and the circular source trajectory.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Circular cone-beam geometry.
///
/// The source rotates in the x-y plane about the z axis at distance `sid`
/// from the isocenter; the flat detector sits opposite at `sdd − sid`,
/// perpendicular to the source–isocenter line. Detector columns run along
/// the in-plane tangent, rows along +z. All lengths are mm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionGeometry {
    /// Source-to-detector distance.
    pub sdd: f64,
    /// Source-to-isocenter distance.
    pub sid: f64,
    /// Detector pixel counts (rows, cols).
    pub detector_px: (usize, usize),
    /// Detector pixel pitch.
    pub pixel_mm: f64,
    /// Scan angular range in degrees.
    pub angular_range_deg: f64,
    /// Incremental angular step in degrees.
    pub angular_step_deg: f64,
}

impl ProjectionGeometry {
    pub fn validate(&self) -> Result<()> {
        if !(self.sid > 0.0 && self.sdd > self.sid) {
            return Err(CoreError::Geometry(format!(
                "need sdd > sid > 0, got sdd={} sid={}",
                self.sdd, self.sid
            )));
        }
        if self.detector_px.0 < 1 || self.detector_px.1 < 1 {
            return Err(CoreError::Geometry("detector_px components must be >= 1".into()));
        }
        if !(self.pixel_mm > 0.0) {
            return Err(CoreError::Geometry(format!(
                "pixel_mm must be > 0, got {}",
                self.pixel_mm
            )));
        }
        if !(self.angular_range_deg > 0.0 && self.angular_step_deg > 0.0) {
            return Err(CoreError::Geometry("angular range/step must be > 0".into()));
        }
        let ratio = self.angular_range_deg / self.angular_step_deg;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio.round() < 1.0 {
            return Err(CoreError::Geometry(format!(
                "angular_step {} does not divide angular_range {}",
                self.angular_step_deg, self.angular_range_deg
            )));
        }
        Ok(())
    }

    /// Cone-beam magnification at the isocenter plane.
    pub fn magnification(&self) -> f64 {
        self.sdd / self.sid
    }

    /// Source position at trajectory angle `angle_deg`.
    pub fn source_position(&self, angle_deg: f64) -> [f64; 3] {
        let a = angle_deg.to_radians();
        [self.sid * a.cos(), self.sid * a.sin(), 0.0]
    }

    /// World position of the center of detector pixel (row, col) at
    /// trajectory angle `angle_deg`.
    pub fn pixel_position(&self, angle_deg: f64, row: usize, col: usize) -> [f64; 3] {
        let a = angle_deg.to_radians();
        let (rows, cols) = self.detector_px;
        // detector center, on the far side of the isocenter
        let d = self.sdd - self.sid;
        let center = [-d * a.cos(), -d * a.sin(), 0.0];
        // in-plane column axis and axial row axis
        let u = [-a.sin(), a.cos(), 0.0];
        let v = [0.0, 0.0, 1.0];
        let uc = (col as f64 - 0.5 * (cols as f64 - 1.0)) * self.pixel_mm;
        let vc = (row as f64 - 0.5 * (rows as f64 - 1.0)) * self.pixel_mm;
        [
            center[0] + uc * u[0] + vc * v[0],
            center[1] + uc * u[1] + vc * v[1],
            center[2] + uc * u[2] + vc * v[2],
        ]
    }
}

/// Evenly spaced trajectory angles {0, step, …, range − step}.
pub fn trajectory_angles(geom: &ProjectionGeometry) -> Result<Vec<f64>> {
    geom.validate()?;
    let count = (geom.angular_range_deg / geom.angular_step_deg).round() as usize;
    Ok((0..count).map(|i| i as f64 * geom.angular_step_deg).collect())
}
