//! 2-D vector primitives: per-step velocities, displacement over a temporal
//! interval, and rotation.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A 2-D point or displacement vector. Units are meters or pixels depending
/// on the dataset; the two are never mixed within one scene.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const ZERO: Point2 = Point2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, other: Point2) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl AddAssign for Point2 {
    fn add_assign(&mut self, rhs: Point2) {
        self.x += rhs.x;
        self.y += rhs.y;
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Neg for Point2 {
    type Output = Point2;
    fn neg(self) -> Point2 {
        Point2::new(-self.x, -self.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }
}

impl Div<f64> for Point2 {
    type Output = Point2;
    fn div(self, s: f64) -> Point2 {
        Point2::new(self.x / s, self.y / s)
    }
}

/// Per-step displacement vectors of one observed track. Always has the same
/// length as the observed track; the first entry is the zero vector (the
/// agent is taken to be still at the first time step).
#[derive(Debug, Clone, PartialEq)]
pub struct VelocitySeq {
    values: Vec<Point2>,
}

impl VelocitySeq {
    pub fn values(&self) -> &[Point2] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Per-step velocities of an observed track: `values[0] = (0,0)` and
/// `values[t] = observed[t] - observed[t-1]` for `t >= 1`.
pub fn velocities(observed: &[Point2]) -> Result<VelocitySeq> {
    if observed.len() < 2 {
        return Err(Error::invalid_input(format!(
            "need at least 2 observed positions, got {}",
            observed.len()
        )));
    }
    if let Some(p) = observed.iter().find(|p| !p.is_finite()) {
        return Err(Error::invalid_input(format!(
            "non-finite observed position ({}, {})",
            p.x, p.y
        )));
    }
    let mut values = Vec::with_capacity(observed.len());
    values.push(Point2::ZERO);
    for w in observed.windows(2) {
        values.push(w[1] - w[0]);
    }
    Ok(VelocitySeq { values })
}

/// Displacement accumulated over the last `interval` entries of a velocity
/// sequence: the movement of the agent across that temporal interval.
pub fn high_order_velocity(v: &VelocitySeq, interval: usize) -> Result<Point2> {
    if interval == 0 || interval > v.len() {
        return Err(Error::invalid_input(format!(
            "interval {} out of range 1..={}",
            interval,
            v.len()
        )));
    }
    let mut sum = Point2::ZERO;
    for &p in &v.values[v.len() - interval..] {
        sum += p;
    }
    Ok(sum)
}

/// Rotates a vector counterclockwise by `angle` radians.
pub fn rotate(vec: Point2, angle: f64) -> Point2 {
    let (sin, cos) = angle.sin_cos();
    Point2::new(cos * vec.x - sin * vec.y, sin * vec.x + cos * vec.y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn pts(raw: &[(f64, f64)]) -> Vec<Point2> {
        raw.iter().map(|&(x, y)| Point2::new(x, y)).collect()
    }

    #[test]
    fn velocities_direct_definition() {
        let v = velocities(&pts(&[(0.0, 0.0), (1.0, 0.0), (2.0, 1.0)])).unwrap();
        assert_eq!(v.values(), pts(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0)]).as_slice());

        let v = velocities(&pts(&[(1.0, 1.0), (1.0, 1.0), (3.0, 1.0)])).unwrap();
        assert_eq!(v.values(), pts(&[(0.0, 0.0), (0.0, 0.0), (2.0, 0.0)]).as_slice());
    }

    #[test]
    fn velocities_stationary_agent() {
        let v = velocities(&pts(&[(2.5, -1.0); 5])).unwrap();
        assert!(v.values().iter().all(|p| *p == Point2::ZERO));
    }

    #[test]
    fn velocities_rejects_short_input() {
        assert!(velocities(&pts(&[(0.0, 0.0)])).is_err());
        assert!(velocities(&[]).is_err());
    }

    #[test]
    fn velocities_rejects_non_finite() {
        assert!(velocities(&pts(&[(0.0, 0.0), (f64::NAN, 1.0)])).is_err());
    }

    #[test]
    fn high_order_velocity_sums_tail() {
        let v = velocities(&pts(&[(0.0, 0.0), (1.0, 0.0), (2.0, 1.0)])).unwrap();
        assert_eq!(high_order_velocity(&v, 2).unwrap(), Point2::new(2.0, 1.0));
    }

    #[test]
    fn high_order_velocity_hand_summation() {
        // v = [(0,0),(1,0),(0,1),(1,0)] built from matching positions
        let v = velocities(&pts(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (2.0, 1.0)])).unwrap();
        assert_eq!(v.values(), pts(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 0.0)]).as_slice());
        assert_eq!(high_order_velocity(&v, 3).unwrap(), Point2::new(2.0, 1.0));
    }

    #[test]
    fn high_order_velocity_stationary_is_zero() {
        let v = velocities(&pts(&[(4.0, 4.0); 6])).unwrap();
        for interval in 1..=6 {
            assert_eq!(high_order_velocity(&v, interval).unwrap(), Point2::ZERO);
        }
    }

    #[test]
    fn high_order_velocity_interval_out_of_range() {
        let v = velocities(&pts(&[(0.0, 0.0), (1.0, 0.0)])).unwrap();
        assert!(high_order_velocity(&v, 0).is_err());
        assert!(high_order_velocity(&v, 3).is_err());
    }

    #[test]
    fn high_order_velocity_full_span_telescopes() {
        let obs = pts(&[(0.3, -1.2), (0.9, 0.4), (1.5, 0.1), (2.0, 2.0)]);
        let v = velocities(&obs).unwrap();
        let total = high_order_velocity(&v, v.len()).unwrap();
        let direct = obs[obs.len() - 1] - obs[0];
        assert!((total - direct).norm() < 1e-12);
    }

    #[test]
    fn rotate_identity_and_axis() {
        assert_eq!(rotate(Point2::new(3.0, 4.0), 0.0), Point2::new(3.0, 4.0));
        let r = rotate(Point2::new(1.0, 0.0), FRAC_PI_2);
        assert!((r - Point2::new(0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn rotate_quarter_pi_closed_form() {
        let r = rotate(Point2::new(1.0, 0.0), FRAC_PI_4);
        assert!((r.x - 0.70710678).abs() < 1e-8);
        assert!((r.y - 0.70710678).abs() < 1e-8);
    }

    proptest! {
        #[test]
        fn rotation_preserves_norm(x in -100.0..100.0f64, y in -100.0..100.0f64,
                                   theta in -10.0..10.0f64) {
            let v = Point2::new(x, y);
            let r = rotate(v, theta);
            prop_assert!((r.norm() - v.norm()).abs() <= 1e-9 * v.norm().max(1.0));
        }

        #[test]
        fn rotation_round_trips(x in -100.0..100.0f64, y in -100.0..100.0f64,
                                theta in -10.0..10.0f64) {
            let v = Point2::new(x, y);
            let back = rotate(rotate(v, theta), -theta);
            prop_assert!((back - v).norm() < 1e-9);
        }

        #[test]
        fn velocities_translation_invariant(
            track in proptest::collection::vec((-50.0..50.0f64, -50.0..50.0f64), 2..10),
            dx in -100.0..100.0f64, dy in -100.0..100.0f64,
        ) {
            let base: Vec<Point2> = track.iter().map(|&(x, y)| Point2::new(x, y)).collect();
            let shifted: Vec<Point2> =
                base.iter().map(|&p| p + Point2::new(dx, dy)).collect();
            let a = velocities(&base).unwrap();
            let b = velocities(&shifted).unwrap();
            for (u, w) in a.values().iter().zip(b.values()) {
                prop_assert!((*u - *w).norm() < 1e-9);
            }
        }
    }
}
