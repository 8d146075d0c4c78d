use nalgebra::{Isometry3, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{bounding_box, Aabb, Mesh};

/// Fraction of the vertical field of view covered by the framed bounding sphere.
pub const FRAME_FILL: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    /// Eye distance from the look-at point. With framing enabled this is a
    /// multiplier on the framing distance.
    pub distance: f64,
    pub fov_deg: f64,
}

impl CameraPose {
    pub fn validate(&self) -> Result<()> {
        if !(self.distance.is_finite() && self.distance > 0.0) {
            return Err(Error::invalid(format!("camera distance must be positive, got {}", self.distance)));
        }
        if !(self.fov_deg > 0.0 && self.fov_deg < 180.0) {
            return Err(Error::invalid(format!("field of view must be in (0, 180), got {}", self.fov_deg)));
        }
        if !(self.azimuth_deg.is_finite() && self.elevation_deg.is_finite()) {
            return Err(Error::invalid("camera angles must be finite"));
        }
        Ok(())
    }

    /// Unit vector from the target toward the eye (y up; azimuth 0 looks down −z).
    pub fn direction(&self) -> Vector3<f64> {
        let (az, el) = (self.azimuth_deg.to_radians(), self.elevation_deg.to_radians());
        Vector3::new(el.cos() * az.sin(), el.sin(), el.cos() * az.cos())
    }
}

/// World-to-camera transform plus a symmetric perspective projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraTransform {
    pub eye: Point3<f64>,
    pub target: Point3<f64>,
    pub view: Isometry3<f64>,
    /// `1 / tan(fov / 2)`.
    pub focal: f64,
}

impl CameraTransform {
    pub fn look_at(target: Point3<f64>, distance: f64, pose: &CameraPose) -> Self {
        let dir = pose.direction();
        let eye = target + dir * distance;
        let up = if dir.y.abs() > 0.999_999 {
            Vector3::z()
        } else {
            Vector3::y()
        };
        CameraTransform {
            eye,
            target,
            view: Isometry3::look_at_rh(&eye, &target, &up),
            focal: 1.0 / (0.5 * pose.fov_deg.to_radians()).tan(),
        }
    }

    /// Camera-space point: x right, y up, looking down −z.
    pub fn to_camera(&self, p: &Point3<f64>) -> Point3<f64> {
        self.view.transform_point(p)
    }

    /// Normalized device coordinates in [−1, 1]² plus the view depth, or
    /// `None` behind the eye.
    pub fn project(&self, p: &Point3<f64>) -> Option<([f64; 2], f64)> {
        let c = self.to_camera(p);
        let depth = -c.z;
        (depth > 0.0).then(|| ([self.focal * c.x / depth, self.focal * c.y / depth], depth))
    }
}

/// Distance at which a bounding sphere of `radius` subtends [`FRAME_FILL`] of the vertical fov.
pub fn framing_distance(radius: f64, fov_deg: f64) -> f64 {
    radius / (0.5 * FRAME_FILL * fov_deg.to_radians()).sin()
}

fn framed_aabb(mesh: &Mesh) -> Result<Aabb> {
    let aabb = bounding_box(mesh)?;
    if aabb.diagonal() <= 0.0 {
        return Err(Error::DegenerateInput(
            "mesh bounding box has zero diagonal".into(),
        ));
    }
    Ok(aabb)
}

/// Camera aimed at the mesh's bounding-box center, backed off so the box's
/// bounding sphere fills 80% of the vertical field of view.
pub fn frame_camera(mesh: &Mesh, pose: &CameraPose) -> Result<CameraTransform> {
    pose.validate()?;
    let aabb = framed_aabb(mesh)?;
    let d = framing_distance(0.5 * aabb.diagonal(), pose.fov_deg) * pose.distance;
    Ok(CameraTransform::look_at(aabb.center(), d, pose))
}

/// Camera at exactly `pose.distance` from the bounding-box center.
pub fn fixed_camera(mesh: &Mesh, pose: &CameraPose) -> Result<CameraTransform> {
    pose.validate()?;
    let aabb = bounding_box(mesh)?;
    Ok(CameraTransform::look_at(aabb.center(), pose.distance, pose))
}
