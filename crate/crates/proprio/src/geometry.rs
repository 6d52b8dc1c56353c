//! Domain types for the planar arm: segment geometry, bend angles, points,
//! and rotations.
//!
//! The arm is a serial chain of sensing segments. Each segment consists of a
//! constant-curvature arc of length `arc_length` followed by a rigid
//! connector of length `offset_length`. The connector is mounted so that it
//! either follows the segment bend (rotates with the arc tip) or stays fixed
//! in the segment base frame; physical builds alternate the two mountings
//! along the chain, so the parity is stored per segment rather than derived
//! from position.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;

use crate::error::{Error, Result};

/// Geometry of one sensing segment in millimetres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentGeometry {
    /// Arc length of the bendable section (mm).
    pub arc_length_mm: f64,
    /// Length of the rigid connector after the arc (mm).
    pub offset_length_mm: f64,
    /// Whether the connector rotates with the segment bend angle.
    pub offset_follows_bend: bool,
}

impl SegmentGeometry {
    pub fn new(arc_length_mm: f64, offset_length_mm: f64, offset_follows_bend: bool) -> Result<Self> {
        if !(arc_length_mm.is_finite() && offset_length_mm.is_finite()) {
            return Err(Error::NonFinite {
                context: "segment geometry",
            });
        }
        if arc_length_mm <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "arc length must be positive, got {arc_length_mm}"
            )));
        }
        if offset_length_mm < 0.0 {
            return Err(Error::InvalidInput(format!(
                "offset length must be non-negative, got {offset_length_mm}"
            )));
        }
        Ok(Self {
            arc_length_mm,
            offset_length_mm,
            offset_follows_bend,
        })
    }

    /// Total contribution of this segment to the arm length (mm).
    pub fn total_length_mm(&self) -> f64 {
        self.arc_length_mm + self.offset_length_mm
    }
}

/// Full robot geometry: the ordered chain of sensing segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotGeometry {
    pub segments: Vec<SegmentGeometry>,
}

/// Default number of sensing segments (three actuator modules, two sensing
/// points each).
pub const DEFAULT_SEGMENT_COUNT: usize = 6;
/// Default arc length per segment (mm).
pub const DEFAULT_ARC_LENGTH_MM: f64 = 87.13;
/// Default rigid-offset length per segment (mm).
pub const DEFAULT_OFFSET_LENGTH_MM: f64 = 10.0;

impl RobotGeometry {
    pub fn new(segments: Vec<SegmentGeometry>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::InvalidInput("geometry needs at least one segment".into()));
        }
        Ok(Self { segments })
    }

    /// Default six-segment arm, total length ~582.8 mm, connector parity
    /// alternating along the chain starting with a bend-following offset.
    pub fn default_arm() -> Self {
        let segments = (0..DEFAULT_SEGMENT_COUNT)
            .map(|i| SegmentGeometry {
                arc_length_mm: DEFAULT_ARC_LENGTH_MM,
                offset_length_mm: DEFAULT_OFFSET_LENGTH_MM,
                offset_follows_bend: i % 2 == 0,
            })
            .collect();
        Self { segments }
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Total arm length (mm), the normalizer for percentage error metrics.
    pub fn total_length_mm(&self) -> f64 {
        self.segments.iter().map(|s| s.total_length_mm()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::InvalidInput("geometry needs at least one segment".into()));
        }
        for s in &self.segments {
            SegmentGeometry::new(s.arc_length_mm, s.offset_length_mm, s.offset_follows_bend)?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let geom: RobotGeometry = serde_json::from_str(&text)?;
        geom.validate()?;
        Ok(geom)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Signed bend angle of one segment (radians). Positive bends toward +x in
/// the segment frame. A planar arm segment cannot fold onto itself, so the
/// magnitude is restricted to less than pi.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BendAngle(f64);

impl BendAngle {
    pub const MAX_ABS: f64 = PI;

    pub fn new(theta: f64) -> Result<Self> {
        if !theta.is_finite() {
            return Err(Error::NonFinite {
                context: "bend angle",
            });
        }
        if theta.abs() >= Self::MAX_ABS {
            return Err(Error::InvalidInput(format!(
                "bend angle {theta} out of range (-pi, pi)"
            )));
        }
        Ok(Self(theta))
    }

    /// Clamp an arbitrary finite angle into the representable range. Used on
    /// estimated angles, which can exceed the physical range when a sensor
    /// path has diverged; the clamp keeps the kinematic map defined so the
    /// resulting (large) position error is still measurable.
    pub fn saturating(theta: f64) -> Result<Self> {
        if !theta.is_finite() {
            return Err(Error::NonFinite {
                context: "bend angle",
            });
        }
        let limit = Self::MAX_ABS - 1e-9;
        Ok(Self(theta.clamp(-limit, limit)))
    }

    pub fn radians(&self) -> f64 {
        self.0
    }
}

/// A point in a planar frame (mm).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlanarPoint {
    pub x: f64,
    pub y: f64,
}

impl PlanarPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &PlanarPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl std::ops::Add for PlanarPoint {
    type Output = PlanarPoint;
    fn add(self, rhs: PlanarPoint) -> PlanarPoint {
        PlanarPoint::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl std::ops::Sub for PlanarPoint {
    type Output = PlanarPoint;
    fn sub(self, rhs: PlanarPoint) -> PlanarPoint {
        PlanarPoint::new(self.x - rhs.x, self.y - rhs.y)
    }
}

/// A planar rotation parameterized by its angle. The matrix form is always
/// orthonormal with determinant +1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarRotation {
    angle: f64,
}

impl PlanarRotation {
    pub fn identity() -> Self {
        Self { angle: 0.0 }
    }

    pub fn from_angle(angle: f64) -> Self {
        Self { angle }
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }

    pub fn matrix(&self) -> Matrix2<f64> {
        let (s, c) = self.angle.sin_cos();
        Matrix2::new(c, -s, s, c)
    }

    pub fn apply(&self, p: PlanarPoint) -> PlanarPoint {
        let v = self.matrix() * Vector2::new(p.x, p.y);
        PlanarPoint::new(v.x, v.y)
    }

    /// Compose two rotations (angles add).
    pub fn compose(&self, other: &PlanarRotation) -> PlanarRotation {
        PlanarRotation::from_angle(self.angle + other.angle)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn segment_geometry_rejects_bad_lengths() {
        assert!(SegmentGeometry::new(0.0, 1.0, true).is_err());
        assert!(SegmentGeometry::new(-5.0, 1.0, true).is_err());
        assert!(SegmentGeometry::new(10.0, -1.0, true).is_err());
        assert!(SegmentGeometry::new(f64::NAN, 1.0, true).is_err());
        assert!(SegmentGeometry::new(10.0, 0.0, false).is_ok());
    }

    #[test]
    fn default_arm_matches_reported_scale() {
        let geom = RobotGeometry::default_arm();
        assert_eq!(geom.len(), 6);
        assert_relative_eq!(geom.total_length_mm(), 582.78, epsilon = 1e-9);
        // Parity alternates starting with a bend-following connector.
        assert!(geom.segments[0].offset_follows_bend);
        assert!(!geom.segments[1].offset_follows_bend);
        assert!(geom.segments[4].offset_follows_bend);
    }

    #[test]
    fn bend_angle_range() {
        assert!(BendAngle::new(0.0).is_ok());
        assert!(BendAngle::new(3.0).is_ok());
        assert!(BendAngle::new(PI).is_err());
        assert!(BendAngle::new(-PI).is_err());
        assert!(BendAngle::new(f64::INFINITY).is_err());
        let clamped = BendAngle::saturating(10.0).unwrap();
        assert!(clamped.radians() < PI);
    }

    #[test]
    fn rotation_is_orthonormal() {
        for &a in &[0.0, 0.3, -1.2, 2.9, -3.0] {
            let r = PlanarRotation::from_angle(a).matrix();
            let rtr = r.transpose() * r;
            assert_relative_eq!(rtr[(0, 0)], 1.0, epsilon = 1e-12);
            assert_relative_eq!(rtr[(1, 1)], 1.0, epsilon = 1e-12);
            assert_relative_eq!(rtr[(0, 1)], 0.0, epsilon = 1e-12);
            assert_relative_eq!(r.determinant(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn rotation_inverse_pair_is_identity() {
        let r = PlanarRotation::from_angle(0.7);
        let inv = PlanarRotation::from_angle(-0.7);
        let p = PlanarPoint::new(3.0, -4.0);
        let back = inv.apply(r.apply(p));
        assert_relative_eq!(back.x, p.x, epsilon = 1e-12);
        assert_relative_eq!(back.y, p.y, epsilon = 1e-12);
    }

    #[test]
    fn geometry_json_round_trip() {
        let geom = RobotGeometry::default_arm();
        let text = serde_json::to_string(&geom).unwrap();
        assert!(text.contains("arc_length_mm"));
        let back: RobotGeometry = serde_json::from_str(&text).unwrap();
        assert_eq!(geom, back);
    }
}
