//! Constant-curvature forward kinematics for the planar arm.
//!
//! Each segment bends along a circular arc of fixed length. With bend angle
//! `theta` the arc radius is `arc_length / theta`, and the arc endpoint in
//! the segment frame is
//!
//! ```text
//! C = [ r * (1 - cos(theta)),  r * sin(theta) ]
//! ```
//!
//! so a straight segment (`theta = 0`) degenerates to its chord `(0, L)`.
//! The rigid connector contributes `D = R(theta_eff) * [d, 0]` where
//! `theta_eff` is the bend angle when the connector follows the bend and
//! zero otherwise. World-frame positions come from the usual serial-chain
//! composition: each segment's local endpoint is rotated by the product of
//! the preceding segment rotations and summed.

use crate::error::{Error, Result};
use crate::geometry::{BendAngle, PlanarPoint, PlanarRotation, SegmentGeometry};

/// Below this bend magnitude (rad) the arc endpoint is evaluated with a
/// third-order series instead of the `1/theta` form, which loses precision
/// to cancellation as theta approaches zero.
pub const STRAIGHT_SEGMENT_THRESHOLD: f64 = 1e-4;

/// Endpoint of the constant-curvature arc in the segment frame.
pub fn curvature_endpoint(geom: &SegmentGeometry, theta: BendAngle) -> PlanarPoint {
    let l = geom.arc_length_mm;
    let t = theta.radians();
    if t.abs() < STRAIGHT_SEGMENT_THRESHOLD {
        // x = L*(t/2 - t^3/24), y = L*(1 - t^2/6 + t^4/120)
        let t2 = t * t;
        PlanarPoint::new(l * (t / 2.0 - t * t2 / 24.0), l * (1.0 - t2 / 6.0 + t2 * t2 / 120.0))
    } else {
        let r = l / t;
        PlanarPoint::new(r * (1.0 - t.cos()), r * t.sin())
    }
}

/// Endpoint of the rigid connector in the segment frame.
pub fn offset_endpoint(geom: &SegmentGeometry, theta: BendAngle) -> PlanarPoint {
    let theta_eff = if geom.offset_follows_bend {
        theta.radians()
    } else {
        0.0
    };
    PlanarRotation::from_angle(theta_eff).apply(PlanarPoint::new(geom.offset_length_mm, 0.0))
}

/// Endpoint of the whole segment (arc plus connector) in the segment frame.
pub fn segment_endpoint(geom: &SegmentGeometry, theta: BendAngle) -> PlanarPoint {
    curvature_endpoint(geom, theta) + offset_endpoint(geom, theta)
}

/// Frame-to-frame rotation contributed by one segment.
///
/// The arc endpoint formula puts a positive bend toward +x while the arm
/// extends along +y, so a positive bend turns the heading clockwise in the
/// xy-plane: the next frame is rotated by minus the bend angle in the usual
/// counterclockwise matrix convention.
pub fn segment_rotation(theta: BendAngle) -> PlanarRotation {
    PlanarRotation::from_angle(-theta.radians())
}

/// World-frame endpoint of every segment in the chain.
///
/// Segment `i`'s local endpoint is rotated by the accumulated rotation of
/// segments `1..i-1` and added to the running position.
pub fn chain_to_world(geoms: &[SegmentGeometry], thetas: &[BendAngle]) -> Result<Vec<PlanarPoint>> {
    if geoms.len() != thetas.len() {
        return Err(Error::LengthMismatch {
            expected: geoms.len(),
            got: thetas.len(),
        });
    }
    if geoms.is_empty() {
        return Err(Error::InvalidInput("empty chain".into()));
    }
    let locals: Vec<PlanarPoint> = geoms
        .iter()
        .zip(thetas)
        .map(|(g, &t)| segment_endpoint(g, t))
        .collect();
    Ok(compose_chain(&locals, thetas))
}

/// Compose already-known local endpoints into world frame using the given
/// bend angles for the prefix rotations. Shared by the direct kinematics and
/// the fusion pipeline (which composes Kalman-fused local endpoints).
pub fn compose_chain(locals: &[PlanarPoint], thetas: &[BendAngle]) -> Vec<PlanarPoint> {
    let mut world = Vec::with_capacity(locals.len());
    let mut origin = PlanarPoint::new(0.0, 0.0);
    let mut prefix = PlanarRotation::identity();
    for (local, theta) in locals.iter().zip(thetas) {
        let p = origin + prefix.apply(*local);
        world.push(p);
        origin = p;
        prefix = prefix.compose(&segment_rotation(*theta));
    }
    world
}

/// Cumulative frame orientation at the end of each segment: the yaw an IMU
/// mounted at that sensing point reports.
pub fn cumulative_orientations(thetas: &[BendAngle]) -> Vec<f64> {
    let mut out = Vec::with_capacity(thetas.len());
    let mut acc = 0.0;
    for t in thetas {
        acc += t.radians();
        out.push(acc);
    }
    out
}

/// Endpoint of a segment whose arc bends non-uniformly: the first half of
/// the arc carries `split` of the total bend and the second half the rest.
/// Used by the simulator to produce ground truth that violates the
/// constant-curvature assumption while keeping the end-to-end bend angle
/// (what the sensors see) unchanged.
pub fn split_arc_segment_endpoint(
    geom: &SegmentGeometry,
    theta: BendAngle,
    split: f64,
) -> Result<PlanarPoint> {
    if !(0.0..=1.0).contains(&split) {
        return Err(Error::InvalidInput(format!("split {split} outside [0, 1]")));
    }
    let half = SegmentGeometry {
        arc_length_mm: geom.arc_length_mm / 2.0,
        offset_length_mm: 0.0,
        offset_follows_bend: false,
    };
    let t = theta.radians();
    let first = BendAngle::new(split * t)?;
    let second = BendAngle::new((1.0 - split) * t)?;
    let p1 = curvature_endpoint(&half, first);
    let p2 = curvature_endpoint(&half, second);
    let arc_end = p1 + segment_rotation(first).apply(p2);
    Ok(arc_end + offset_endpoint(geom, theta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::RobotGeometry;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn geom(l: f64, d: f64, follows: bool) -> SegmentGeometry {
        SegmentGeometry::new(l, d, follows).unwrap()
    }

    fn angle(t: f64) -> BendAngle {
        BendAngle::new(t).unwrap()
    }

    // Independent oracle: integrate the unit tangent along the arc and add
    // the connector, composing nothing. The tangent starts along +y and has
    // rotated by s*theta after arc fraction s.
    fn arc_integration_endpoint(geom: &SegmentGeometry, theta: f64, steps: usize) -> PlanarPoint {
        let mut x = 0.0;
        let mut y = 0.0;
        let ds = geom.arc_length_mm / steps as f64;
        for k in 0..steps {
            let s = (k as f64 + 0.5) / steps as f64;
            let heading = s * theta;
            x += ds * heading.sin();
            y += ds * heading.cos();
        }
        PlanarPoint::new(x, y)
    }

    // Independent oracle: compose 3x3 homogeneous transforms per segment.
    // After bending by theta the arm heading (initially +y) has turned by
    // theta toward +x, so the child frame's axes in the parent frame are
    // x = (cos t, -sin t), y = (sin t, cos t).
    fn homogeneous_chain_oracle(geoms: &[SegmentGeometry], thetas: &[f64]) -> Vec<PlanarPoint> {
        use nalgebra::Matrix3;
        let mut out = Vec::new();
        let mut acc = Matrix3::<f64>::identity();
        for (g, &t) in geoms.iter().zip(thetas) {
            let p = segment_endpoint(g, angle(t));
            let world = acc * nalgebra::Vector3::new(p.x, p.y, 1.0);
            out.push(PlanarPoint::new(world.x, world.y));
            let (s, c) = t.sin_cos();
            let step = Matrix3::new(c, s, p.x, -s, c, p.y, 0.0, 0.0, 1.0);
            acc *= step;
        }
        out
    }

    // Second oracle route for the two-arc S shape: integrate the heading
    // along both arcs directly in the world frame.
    fn s_shape_heading_integral(l: f64, steps: usize) -> PlanarPoint {
        let mut x = 0.0;
        let mut y = 0.0;
        let ds = l / steps as f64;
        for k in 0..steps {
            let s = (k as f64 + 0.5) / steps as f64;
            let heading = s * FRAC_PI_2;
            x += ds * heading.sin();
            y += ds * heading.cos();
        }
        for k in 0..steps {
            let s = (k as f64 + 0.5) / steps as f64;
            let heading = FRAC_PI_2 - s * FRAC_PI_2;
            x += ds * heading.sin();
            y += ds * heading.cos();
        }
        PlanarPoint::new(x, y)
    }

    #[test]
    fn straight_segment_degenerates_to_chord() {
        let p = curvature_endpoint(&geom(150.0, 0.0, true), angle(0.0));
        assert_relative_eq!(p.x, 0.0, epsilon = 1e-12);
        assert_relative_eq!(p.y, 150.0, epsilon = 1e-12);
    }

    #[test]
    fn quarter_turn_arc_endpoint() {
        // r = 2*150/pi; endpoint (r, r).
        let expected = 300.0 / PI;
        let p = curvature_endpoint(&geom(150.0, 0.0, true), angle(FRAC_PI_2));
        assert_relative_eq!(p.x, expected, epsilon = 1e-9);
        assert_relative_eq!(p.y, expected, epsilon = 1e-9);
        assert_relative_eq!(p.x, 95.49296585513721, epsilon = 1e-9);

        let oracle = arc_integration_endpoint(&geom(150.0, 0.0, true), FRAC_PI_2, 2_000_000);
        assert_relative_eq!(p.x, oracle.x, epsilon = 1e-6 * 150.0);
        assert_relative_eq!(p.y, oracle.y, epsilon = 1e-6 * 150.0);
    }

    #[test]
    fn arc_endpoint_symmetry() {
        let g = geom(150.0, 0.0, true);
        let p = curvature_endpoint(&g, angle(-FRAC_PI_2));
        assert_relative_eq!(p.x, -95.49296585513721, epsilon = 1e-9);
        assert_relative_eq!(p.y, 95.49296585513721, epsilon = 1e-9);

        let oracle = arc_integration_endpoint(&g, -FRAC_PI_2, 2_000_000);
        assert_relative_eq!(p.x, oracle.x, epsilon = 1e-6 * 150.0);
        assert_relative_eq!(p.y, oracle.y, epsilon = 1e-6 * 150.0);
    }

    #[test]
    fn offset_cases() {
        // Fixed connector ignores the bend.
        let p = offset_endpoint(&geom(150.0, 20.0, false), angle(1.1));
        assert_relative_eq!(p.x, 20.0, epsilon = 1e-12);
        assert_relative_eq!(p.y, 0.0, epsilon = 1e-12);
        // Bend-following connector rotates with theta.
        let p = offset_endpoint(&geom(150.0, 20.0, true), angle(FRAC_PI_2));
        assert_relative_eq!(p.x, 0.0, epsilon = 1e-9);
        assert_relative_eq!(p.y, 20.0, epsilon = 1e-9);
        // Zero offset vanishes either way.
        let p = offset_endpoint(&geom(150.0, 0.0, true), angle(0.9));
        assert_relative_eq!(p.x, 0.0, epsilon = 1e-12);
        assert_relative_eq!(p.y, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn segment_endpoint_is_vector_sum() {
        let p = segment_endpoint(&geom(150.0, 20.0, false), angle(0.0));
        assert_relative_eq!(p.x, 20.0, epsilon = 1e-12);
        assert_relative_eq!(p.y, 150.0, epsilon = 1e-12);

        let p = segment_endpoint(&geom(150.0, 20.0, true), angle(FRAC_PI_2));
        assert_relative_eq!(p.x, 95.49296585513721, epsilon = 1e-9);
        assert_relative_eq!(p.y, 115.49296585513721, epsilon = 1e-9);

        let with_zero = segment_endpoint(&geom(150.0, 0.0, true), angle(FRAC_PI_4));
        let arc_only = curvature_endpoint(&geom(150.0, 0.0, true), angle(FRAC_PI_4));
        assert_relative_eq!(with_zero.x, arc_only.x, epsilon = 1e-12);
        assert_relative_eq!(with_zero.y, arc_only.y, epsilon = 1e-12);
    }

    #[test]
    fn chain_single_segment_is_local_endpoint() {
        let g = [geom(120.0, 15.0, true)];
        let t = [angle(0.4)];
        let world = chain_to_world(&g, &t).unwrap();
        let local = segment_endpoint(&g[0], t[0]);
        assert_eq!(world.len(), 1);
        assert_relative_eq!(world[0].x, local.x, epsilon = 1e-12);
        assert_relative_eq!(world[0].y, local.y, epsilon = 1e-12);
    }

    #[test]
    fn straight_chain_stacks() {
        let g = [
            geom(150.0, 20.0, true),
            geom(150.0, 20.0, false),
            geom(150.0, 20.0, true),
        ];
        let t = [angle(0.0), angle(0.0), angle(0.0)];
        let world = chain_to_world(&g, &t).unwrap();
        assert_relative_eq!(world[2].x, 60.0, epsilon = 1e-12);
        assert_relative_eq!(world[2].y, 450.0, epsilon = 1e-12);
    }

    #[test]
    fn chain_matches_homogeneous_oracle_s_shape() {
        let g = [geom(150.0, 0.0, true), geom(150.0, 0.0, false)];
        let t = [FRAC_PI_2, -FRAC_PI_2];
        let angles: Vec<BendAngle> = t.iter().map(|&x| angle(x)).collect();
        let world = chain_to_world(&g, &angles).unwrap();
        let oracle = homogeneous_chain_oracle(&g, &t);
        for (w, o) in world.iter().zip(&oracle) {
            assert_relative_eq!(w.x, o.x, epsilon = 1e-9);
            assert_relative_eq!(w.y, o.y, epsilon = 1e-9);
        }
        // Frozen value for the two-quarter-turn S shape, cross-checked by
        // direct heading integration.
        assert_relative_eq!(world[1].x, 2.0 * 95.49296585513721, epsilon = 1e-9);
        assert_relative_eq!(world[1].y, 2.0 * 95.49296585513721, epsilon = 1e-9);
        let integral = s_shape_heading_integral(150.0, 2_000_000);
        assert_relative_eq!(world[1].x, integral.x, epsilon = 1e-6 * 300.0);
        assert_relative_eq!(world[1].y, integral.y, epsilon = 1e-6 * 300.0);
    }

    #[test]
    fn chain_length_mismatch_rejected() {
        let g = [geom(150.0, 0.0, true)];
        let t = [angle(0.1), angle(0.2)];
        assert!(matches!(
            chain_to_world(&g, &t),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn continuity_across_series_threshold() {
        // The series branch agrees with the exact form at the switch point.
        let g = geom(150.0, 0.0, true);
        for sign in [1.0, -1.0] {
            let t = sign * 0.999e-4; // just inside the series branch
            let series = curvature_endpoint(&g, angle(t));
            let r = g.arc_length_mm / t;
            let exact_x = r * (1.0 - t.cos());
            let exact_y = r * t.sin();
            assert!((series.x - exact_x).abs() < 1e-9 * 150.0);
            assert!((series.y - exact_y).abs() < 1e-9 * 150.0);
        }
        // Odd symmetry in x, even in y near zero.
        let eps = 1e-6;
        let plus = curvature_endpoint(&g, angle(eps));
        let minus = curvature_endpoint(&g, angle(-eps));
        assert!((plus.x + minus.x).abs() < 1e-9 * 150.0);
        assert!((plus.y - minus.y).abs() < 1e-9 * 150.0);
    }

    #[test]
    fn arc_length_preserved_over_bend_range() {
        let g = geom(150.0, 0.0, true);
        for &t in &[-3.1, -1.5, -0.3, -1e-5, 1e-5, 0.5, 1.7, 3.1] {
            let n = 20_000;
            let mut len = 0.0;
            let mut prev = PlanarPoint::new(0.0, 0.0);
            for k in 1..=n {
                let s = k as f64 / n as f64;
                let partial = SegmentGeometry {
                    arc_length_mm: g.arc_length_mm * s,
                    offset_length_mm: 0.0,
                    offset_follows_bend: false,
                };
                let p = curvature_endpoint(&partial, angle(s * t));
                len += prev.distance(&p);
                prev = p;
            }
            // Polyline underestimates the arc by O(1/n^2); 20k points leaves
            // well under 1e-6 relative error.
            assert!(
                (len - g.arc_length_mm).abs() / g.arc_length_mm < 1e-6,
                "theta={t}: polyline length {len}"
            );
        }
    }

    #[test]
    fn split_arc_preserves_end_orientation_but_moves_endpoint() {
        let g = geom(100.0, 0.0, true);
        let t = angle(0.4);
        let uniform = segment_endpoint(&g, t);
        let even_split = split_arc_segment_endpoint(&g, t, 0.5).unwrap();
        assert_relative_eq!(uniform.x, even_split.x, epsilon = 1e-9);
        assert_relative_eq!(uniform.y, even_split.y, epsilon = 1e-9);
        let skewed = split_arc_segment_endpoint(&g, t, 0.8).unwrap();
        assert!(uniform.distance(&skewed) > 0.1);
    }

    #[test]
    fn cumulative_orientations_accumulate() {
        let t = [angle(0.1), angle(-0.2), angle(0.3)];
        let yaw = cumulative_orientations(&t);
        assert_relative_eq!(yaw[0], 0.1, epsilon = 1e-12);
        assert_relative_eq!(yaw[1], -0.1, epsilon = 1e-12);
        assert_relative_eq!(yaw[2], 0.2, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn chain_equals_homogeneous_oracle(
            thetas in proptest::collection::vec(-2.8f64..2.8, 1..8),
            arcs in proptest::collection::vec(20.0f64..200.0, 8),
            offsets in proptest::collection::vec(0.0f64..30.0, 8),
        ) {
            let n = thetas.len();
            let geoms: Vec<SegmentGeometry> = (0..n)
                .map(|i| geom(arcs[i], offsets[i], i % 2 == 0))
                .collect();
            let angles: Vec<BendAngle> = thetas.iter().map(|&t| angle(t)).collect();
            let world = chain_to_world(&geoms, &angles).unwrap();
            let oracle = homogeneous_chain_oracle(&geoms, &thetas);
            for (w, o) in world.iter().zip(&oracle) {
                prop_assert!((w.x - o.x).abs() < 1e-9);
                prop_assert!((w.y - o.y).abs() < 1e-9);
            }
        }

        #[test]
        fn world_points_stay_finite(thetas in proptest::collection::vec(-3.1f64..3.1, 1..7)) {
            let geoms = RobotGeometry::default_arm().segments;
            let n = thetas.len().min(geoms.len());
            let angles: Vec<BendAngle> = thetas[..n].iter().map(|&t| angle(t)).collect();
            let world = chain_to_world(&geoms[..n], &angles).unwrap();
            for p in world {
                prop_assert!(p.is_finite());
            }
        }
    }
}
