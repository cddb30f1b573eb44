//! Jaw rigid motion and the per-vertex linear blend skinning built on it.

use nalgebra::{Matrix3, Rotation3, Unit};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::Vec3;

const UNIT_TOL: f64 = 1e-9;

/// Hinge rotation plus protrusion and lateral slides.
///
/// `hinge_axis` and `slide_dir` need not be orthogonal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JawModel {
    pub hinge_point: [f64; 3],
    pub hinge_axis: [f64; 3],
    pub slide_dir: [f64; 3],
    pub lateral_dir: [f64; 3],
}

impl Default for JawModel {
    fn default() -> Self {
        JawModel {
            hinge_point: [0.0; 3],
            hinge_axis: [1.0, 0.0, 0.0],
            slide_dir: [0.0, 0.0, 1.0],
            lateral_dir: [1.0, 0.0, 0.0],
        }
    }
}

impl JawModel {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("hinge_axis", self.hinge_axis),
            ("slide_dir", self.slide_dir),
            ("lateral_dir", self.lateral_dir),
        ] {
            let n = Vec3::from(v).norm();
            if !((n - 1.0).abs() <= UNIT_TOL) {
                return Err(Error::InvalidLibrary(format!(
                    "jaw model {name} has length {n}, expected unit length"
                )));
            }
        }
        if !self.hinge_point.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidLibrary("jaw hinge point is not finite".into()));
        }
        Ok(())
    }
}

/// Jaw parameters: rotation in radians about the hinge, then slides in length units.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct JawPose {
    pub rot: f64,
    pub protrude: f64,
    pub lateral: f64,
}

impl JawPose {
    pub const REST: JawPose = JawPose {
        rot: 0.0,
        protrude: 0.0,
        lateral: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        if !(self.rot.is_finite() && self.protrude.is_finite() && self.lateral.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite jaw pose {self:?}")));
        }
        if self.rot.abs() >= std::f64::consts::FRAC_PI_2 {
            return Err(Error::InvalidArgument(format!(
                "jaw rotation {} exceeds the pi/2 sanity bound",
                self.rot
            )));
        }
        Ok(())
    }

    pub fn is_rest(&self) -> bool {
        *self == JawPose::REST
    }
}

/// `x -> linear * x + offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMap {
    pub linear: Matrix3<f64>,
    pub offset: Vec3,
}

impl AffineMap {
    pub fn identity() -> Self {
        AffineMap {
            linear: Matrix3::identity(),
            offset: Vec3::zeros(),
        }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.linear * p + self.offset
    }

    pub fn compose(&self, inner: &AffineMap) -> AffineMap {
        AffineMap {
            linear: self.linear * inner.linear,
            offset: self.linear * inner.offset + self.offset,
        }
    }

    pub fn determinant(&self) -> f64 {
        self.linear.determinant()
    }

    pub fn inverse(&self) -> Option<AffineMap> {
        let inv = self.linear.try_inverse()?;
        Some(AffineMap {
            linear: inv,
            offset: -(inv * self.offset),
        })
    }

    /// `(1 - s) * identity + s * self`, blended as matrices.
    pub fn blend_with_identity(&self, s: f64) -> AffineMap {
        AffineMap {
            linear: Matrix3::identity() * (1.0 - s) + self.linear * s,
            offset: self.offset * s,
        }
    }
}

/// Rotation by `pose.rot` about the hinge line followed by the two slides.
pub fn jaw_transform(model: &JawModel, pose: &JawPose) -> AffineMap {
    let axis = Unit::new_normalize(Vec3::from(model.hinge_axis));
    let rot = Rotation3::from_axis_angle(&axis, pose.rot).into_inner();
    let hinge = Vec3::from(model.hinge_point);
    let slide = Vec3::from(model.slide_dir) * pose.protrude + Vec3::from(model.lateral_dir) * pose.lateral;
    AffineMap {
        linear: rot,
        offset: hinge - rot * hinge + slide,
    }
}

/// Per-vertex blended transforms for one jaw pose.
#[derive(Debug, Clone)]
pub struct Skinning {
    jaw: AffineMap,
}

/// Blend determinant below which a warning is logged.
pub const MIN_BLEND_DET: f64 = 1e-6;

impl Skinning {
    pub fn new(model: &JawModel, pose: &JawPose) -> Self {
        Skinning {
            jaw: jaw_transform(model, pose),
        }
    }

    pub fn jaw(&self) -> &AffineMap {
        &self.jaw
    }

    /// Transform for a point with skin weight `s`.
    pub fn at(&self, s: f64) -> AffineMap {
        if s == 0.0 {
            AffineMap::identity()
        } else if s == 1.0 {
            self.jaw
        } else {
            self.jaw.blend_with_identity(s)
        }
    }

    pub fn inverse_at(&self, s: f64, vertex: usize) -> Result<AffineMap> {
        let m = self.at(s);
        let det = m.determinant();
        if !(det.abs() >= MIN_BLEND_DET) {
            return Err(Error::SingularSkinning { vertex, det });
        }
        m.inverse().ok_or(Error::SingularSkinning { vertex, det })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> JawModel {
        JawModel {
            hinge_point: [1.0, -2.0, -30.0],
            hinge_axis: [1.0, 0.0, 0.0],
            slide_dir: [0.0, 0.0, 1.0],
            lateral_dir: [1.0, 0.0, 0.0],
        }
    }

    #[test]
    fn rest_pose_is_identity() {
        let t = jaw_transform(&model(), &JawPose::REST);
        assert!((t.linear - Matrix3::identity()).norm() < 1e-15);
        assert!(t.offset.norm() < 1e-15);
    }

    #[test]
    fn protrusion_is_pure_translation() {
        let pose = JawPose { rot: 0.0, protrude: 5.0, lateral: 0.0 };
        let t = jaw_transform(&model(), &pose);
        let p = Vec3::new(3.0, 4.0, 5.0);
        assert!((t.apply(&p) - (p + Vec3::new(0.0, 0.0, 5.0))).norm() < 1e-12);
    }

    #[test]
    fn hinge_point_is_fixed() {
        let pose = JawPose { rot: 0.3, protrude: 0.0, lateral: 0.0 };
        let t = jaw_transform(&model(), &pose);
        let h = Vec3::from(model().hinge_point);
        assert!((t.apply(&h) - h).norm() < 1e-12);
    }

    #[test]
    fn transform_inverse_is_identity() {
        let pose = JawPose { rot: -0.35, protrude: 1.5, lateral: -0.7 };
        let t = jaw_transform(&model(), &pose);
        let id = t.compose(&t.inverse().unwrap());
        assert!((id.linear - Matrix3::identity()).norm() < 1e-12);
        assert!(id.offset.norm() < 1e-12 * 30.0);
    }

    #[test]
    fn pose_bounds() {
        assert!(JawPose { rot: 1.6, ..JawPose::REST }.validate().is_err());
        assert!(JawPose { rot: f64::NAN, ..JawPose::REST }.validate().is_err());
        assert!(JawPose { rot: 0.4, ..JawPose::REST }.validate().is_ok());
    }

    #[test]
    fn non_unit_axis_rejected() {
        let mut m = model();
        m.slide_dir = [0.0, 0.0, 2.0];
        assert!(m.validate().is_err());
    }
}
