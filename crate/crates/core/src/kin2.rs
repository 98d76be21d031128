//! Closed-form kinematics of the two-link planar rehabilitation robot.
//!
//! Joint 2 is measured against the base frame (not relative to link 1), so the
//! end-effector sits at `(L1 cos q1 + L2 sin q2, L1 sin q1 - L2 cos q2)` and the
//! elbow angle enters the joint limits through the coupled term
//! `q1 - q2 + 90°`.
//!
//! All angles are radians. Degrees only appear in the constructors that mirror
//! the mechanical stop tables of the two robots.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{Matrix2, Matrix4, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::KinematicsError;

/// Identified dynamic coefficients of the black rehabilitation robot:
/// inertia terms α1..α3 (kg·m²) and viscous friction α4, α5 (N·m·s/rad).
pub const IDENTIFIED_ALPHA: [f64; 5] = [0.06929, 0.04217, 0.04416, 0.06510, 0.07389];

/// Slack allowed on `acos` arguments before a target counts as unreachable.
pub const ACOS_CLAMP_TOLERANCE: f64 = 1e-12;

/// A closed interval `[min, max]` in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub min: f64,
    pub max: f64,
}

impl Interval {
    pub fn new(min: f64, max: f64) -> Self {
        Interval { min, max }
    }

    pub fn from_degrees(min: f64, max: f64) -> Self {
        Interval::new(min.to_radians(), max.to_radians())
    }

    /// Inclusive membership: values exactly on a bound are legal.
    pub fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }

    pub fn width(&self) -> f64 {
        self.max - self.min
    }
}

/// Mechanical joint stops, including the coupled elbow constraint on
/// `q1 - q2 + 90°`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointLimits {
    pub q1: Interval,
    pub q2: Interval,
    pub coupled: Interval,
}

impl JointLimits {
    pub fn master_black() -> Self {
        JointLimits {
            q1: Interval::from_degrees(-55.0, 90.0),
            q2: Interval::from_degrees(0.0, 145.0),
            coupled: Interval::from_degrees(35.0, 145.0),
        }
    }

    pub fn second_white() -> Self {
        JointLimits {
            q1: Interval::from_degrees(-86.0, 132.0),
            q2: Interval::from_degrees(-49.0, 154.0),
            coupled: Interval::from_degrees(35.0, 145.0),
        }
    }

    pub fn contains(&self, q: &Vector2<f64>) -> bool {
        self.q1.contains(q[0]) && self.q2.contains(q[1]) && self.coupled.contains(coupled_angle(q))
    }

    /// Vertices (counter-clockwise) of the convex joint-space polygon cut out
    /// by the three limit pairs.
    pub fn polygon(&self) -> Vec<Vector2<f64>> {
        let rect = vec![
            Vector2::new(self.q1.min, self.q2.min),
            Vector2::new(self.q1.max, self.q2.min),
            Vector2::new(self.q1.max, self.q2.max),
            Vector2::new(self.q1.min, self.q2.max),
        ];
        // q1 - q2 >= coupled.min - 90°  and  q1 - q2 <= coupled.max - 90°
        let lo = self.coupled.min - FRAC_PI_2;
        let hi = self.coupled.max - FRAC_PI_2;
        let poly = clip_half_plane(&rect, |q| q[0] - q[1] - lo);
        clip_half_plane(&poly, |q| hi - (q[0] - q[1]))
    }
}

fn clip_half_plane(poly: &[Vector2<f64>], f: impl Fn(&Vector2<f64>) -> f64) -> Vec<Vector2<f64>> {
    let mut out = Vec::with_capacity(poly.len() + 1);
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        let (fa, fb) = (f(&a), f(&b));
        if fa >= 0.0 {
            out.push(a);
        }
        if (fa >= 0.0) != (fb >= 0.0) {
            let s = fa / (fa - fb);
            out.push(a + (b - a) * s);
        }
    }
    out
}

/// The elbow term `q1 - q2 + 90°` constrained by the coupled limit.
pub fn coupled_angle(q: &Vector2<f64>) -> f64 {
    q[0] - q[1] + FRAC_PI_2
}

/// Geometry, identified dynamics and joint limits of one robot.
///
/// The same type describes both the true plant and the controller's estimate;
/// they differ only in `alpha`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotModel {
    pub name: String,
    /// Link lengths `[L1, L2]` in meters.
    pub link_lengths: [f64; 2],
    /// `[α1, α2, α3]` inertia terms (kg·m²), `[α4, α5]` viscous friction.
    pub alpha: [f64; 5],
    pub limits: JointLimits,
}

impl RobotModel {
    pub fn new(
        name: impl Into<String>,
        link_lengths: [f64; 2],
        alpha: [f64; 5],
        limits: JointLimits,
    ) -> Result<Self, KinematicsError> {
        let model = RobotModel {
            name: name.into(),
            link_lengths,
            alpha,
            limits,
        };
        model.validate()?;
        Ok(model)
    }

    /// Black robot (master) with the identified coefficients.
    pub fn master_black() -> Self {
        RobotModel {
            name: "master-black".into(),
            link_lengths: [0.254, 0.2667],
            alpha: IDENTIFIED_ALPHA,
            limits: JointLimits::master_black(),
        }
    }

    /// White robot (second). Its controller borrows the black robot's
    /// identified coefficients.
    pub fn second_white() -> Self {
        RobotModel {
            name: "second-white".into(),
            link_lengths: [0.340, 0.375],
            alpha: IDENTIFIED_ALPHA,
            limits: JointLimits::second_white(),
        }
    }

    pub fn validate(&self) -> Result<(), KinematicsError> {
        let [l1, l2] = self.link_lengths;
        let bad = |m: &str| Err(KinematicsError::InvalidModel(format!("{}: {m}", self.name)));
        if !(l1 > 0.0 && l2 > 0.0) {
            return bad("link lengths must be positive");
        }
        if !(self.alpha[0] > 0.0 && self.alpha[2] > 0.0) {
            return bad("α1 and α3 must be positive");
        }
        if !(self.alpha[3] >= 0.0 && self.alpha[4] >= 0.0) {
            return bad("friction coefficients must be non-negative");
        }
        if self.alpha.iter().any(|a| !a.is_finite()) {
            return bad("coefficients must be finite");
        }
        let l = &self.limits;
        if !(l.q1.min <= l.q1.max && l.q2.min <= l.q2.max && l.coupled.min <= l.coupled.max) {
            return bad("joint limit intervals are inverted");
        }
        Ok(())
    }

    /// Copy with every coefficient multiplied by the matching factor.
    pub fn scaled(&self, factors: &[f64; 5]) -> RobotModel {
        let mut alpha = self.alpha;
        for (a, f) in alpha.iter_mut().zip(factors) {
            *a *= f;
        }
        RobotModel {
            alpha,
            ..self.clone()
        }
    }

    pub fn l1(&self) -> f64 {
        self.link_lengths[0]
    }

    pub fn l2(&self) -> f64 {
        self.link_lengths[1]
    }
}

/// Joint positions (rad) and velocities (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointState {
    pub q: Vector2<f64>,
    pub qdot: Vector2<f64>,
}

impl JointState {
    pub fn at_rest(q: Vector2<f64>) -> Self {
        JointState {
            q,
            qdot: Vector2::zeros(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(self.qdot.iter()).all(|v| v.is_finite())
    }
}

/// End-effector position, velocity and (for references) acceleration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartesianState {
    pub x: Vector2<f64>,
    pub xdot: Vector2<f64>,
    pub xddot: Option<Vector2<f64>>,
}

impl CartesianState {
    pub fn new(x: Vector2<f64>, xdot: Vector2<f64>, xddot: Vector2<f64>) -> Self {
        CartesianState {
            x,
            xdot,
            xddot: Some(xddot),
        }
    }

    /// A fixed set-point: zero velocity and acceleration.
    pub fn hold(x: Vector2<f64>) -> Self {
        CartesianState::new(x, Vector2::zeros(), Vector2::zeros())
    }
}

pub fn forward_kinematics(model: &RobotModel, q: &Vector2<f64>) -> Vector2<f64> {
    let [l1, l2] = model.link_lengths;
    Vector2::new(
        l1 * q[0].cos() + l2 * q[1].sin(),
        l1 * q[0].sin() - l2 * q[1].cos(),
    )
}

/// End-effector velocity `J q̇`.
pub fn ee_velocity(model: &RobotModel, state: &JointState) -> Vector2<f64> {
    jacobian(model, &state.q) * state.qdot
}

/// Closed-form inverse kinematics.
///
/// Returns the branch where link 1 lies counter-clockwise of the
/// end-effector ray (`q1 - q2 + 90° ∈ [0°, 180°]`), which is the only branch
/// admitted by the coupled joint limit of both robots.
pub fn inverse_kinematics(model: &RobotModel, x: &Vector2<f64>) -> Result<Vector2<f64>, KinematicsError> {
    let [l1, l2] = model.link_lengths;
    let r2 = x.norm_squared();
    let r = r2.sqrt();
    let unreachable = || KinematicsError::Unreachable { x: x[0], y: x[1] };
    if !(r > 0.0) || !r.is_finite() {
        return Err(unreachable());
    }
    let shoulder = clamp_acos_arg((r2 + l1 * l1 - l2 * l2) / (2.0 * l1 * r)).ok_or_else(unreachable)?;
    let elbow = clamp_acos_arg((l1 * l1 + l2 * l2 - r2) / (2.0 * l1 * l2)).ok_or_else(unreachable)?;
    let q1 = shoulder.acos() + x[1].atan2(x[0]);
    let q2 = q1 + elbow.acos() - FRAC_PI_2;
    Ok(Vector2::new(q1, q2))
}

fn clamp_acos_arg(c: f64) -> Option<f64> {
    if !c.is_finite() || c.abs() > 1.0 + ACOS_CLAMP_TOLERANCE {
        None
    } else {
        Some(c.clamp(-1.0, 1.0))
    }
}

pub fn jacobian(model: &RobotModel, q: &Vector2<f64>) -> Matrix2<f64> {
    let [l1, l2] = model.link_lengths;
    let (s1, c1) = q[0].sin_cos();
    let (s2, c2) = q[1].sin_cos();
    Matrix2::new(-l1 * s1, l2 * c2, l1 * c1, l2 * s2)
}

/// Time derivative of the Jacobian along `q̇`.
pub fn jacobian_dot(model: &RobotModel, q: &Vector2<f64>, qdot: &Vector2<f64>) -> Matrix2<f64> {
    let [l1, l2] = model.link_lengths;
    let (s1, c1) = q[0].sin_cos();
    let (s2, c2) = q[1].sin_cos();
    Matrix2::new(
        -l1 * c1 * qdot[0],
        -l2 * s2 * qdot[1],
        -l1 * s1 * qdot[0],
        l2 * c2 * qdot[1],
    )
}

/// Homogeneous transform from the end-effector frame to the base frame.
pub fn homogeneous_transform(model: &RobotModel, q: &Vector2<f64>) -> Matrix4<f64> {
    let (s2, c2) = q[1].sin_cos();
    let p = forward_kinematics(model, q);
    #[rustfmt::skip]
    let t = Matrix4::new(
        s2,  c2,  0.0, p[0],
        -c2, s2,  0.0, p[1],
        0.0, 0.0, 1.0, 0.0,
        0.0, 0.0, 0.0, 1.0,
    );
    t
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LimitConstraint {
    Joint1,
    Joint2,
    /// `q1 - q2 + 90°`
    Coupled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundSide {
    Lower,
    Upper,
}

/// One violated inequality: which constraint, which bound, and by how much
/// (radians, always positive).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitViolation {
    pub constraint: LimitConstraint,
    pub side: BoundSide,
    pub bound: f64,
    pub margin: f64,
}

pub fn check_joint_limits(model: &RobotModel, q: &Vector2<f64>) -> Vec<LimitViolation> {
    let l = &model.limits;
    let checks = [
        (LimitConstraint::Joint1, l.q1, q[0]),
        (LimitConstraint::Joint2, l.q2, q[1]),
        (LimitConstraint::Coupled, l.coupled, coupled_angle(q)),
    ];
    let mut out = Vec::new();
    for (constraint, interval, value) in checks {
        if value < interval.min {
            out.push(LimitViolation {
                constraint,
                side: BoundSide::Lower,
                bound: interval.min,
                margin: interval.min - value,
            });
        } else if value > interval.max {
            out.push(LimitViolation {
                constraint,
                side: BoundSide::Upper,
                bound: interval.max,
                margin: value - interval.max,
            });
        }
    }
    out
}

/// 2-norm condition number of a 2×2 matrix from its singular values.
pub fn condition_number(m: &Matrix2<f64>) -> f64 {
    let sv = m.singular_values();
    let (hi, lo) = (sv.max(), sv.min());
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Upper bound on `cond(J)` over all joint-limit-respecting configurations.
///
/// The column norms of `J` are `L1` and `L2` regardless of `q`, so the
/// singular values only depend on `|det J| = L1 L2 |cos(q1 - q2)|`, which is
/// smallest where the coupled limit allows the largest `|q1 - q2|`.
pub fn jacobian_condition_bound(model: &RobotModel) -> f64 {
    let [l1, l2] = model.link_lengths;
    let lim = &model.limits.coupled;
    let worst = (lim.min - FRAC_PI_2).abs().max((lim.max - FRAC_PI_2).abs());
    let det = l1 * l2 * worst.cos().abs();
    let sum = l1 * l1 + l2 * l2;
    let disc = (sum * sum - 4.0 * det * det).max(0.0).sqrt();
    let big = (sum + disc) / 2.0;
    let small = (sum - disc) / 2.0;
    (big / small).sqrt()
}

/// True if `x` is reachable with a joint configuration inside the limits.
pub fn in_workspace(model: &RobotModel, x: &Vector2<f64>) -> bool {
    inverse_kinematics(model, x)
        .map(|q| model.limits.contains(&q))
        .unwrap_or(false)
}

/// Mean end-effector position over joint configurations drawn uniformly from
/// the joint-limit polygon.
pub fn workspace_centroid(model: &RobotModel, samples: usize, seed: u64) -> Vector2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = &model.limits;
    let mut sum = Vector2::zeros();
    let mut n = 0usize;
    while n < samples {
        let q = Vector2::new(
            rng.random_range(l.q1.min..=l.q1.max),
            rng.random_range(l.q2.min..=l.q2.max),
        );
        if l.coupled.contains(coupled_angle(&q)) {
            sum += forward_kinematics(model, &q);
            n += 1;
        }
    }
    sum / n as f64
}

/// Nearest reachable point to `x` (itself when already reachable).
///
/// The Jacobian is non-singular inside the limits, so the workspace boundary
/// is the image of the joint polygon's edges; the search scans those edges and
/// refines the best candidate with a golden-section step.
pub fn clamp_to_workspace(model: &RobotModel, x: &Vector2<f64>) -> Vector2<f64> {
    if in_workspace(model, x) {
        return *x;
    }
    let poly = model.limits.polygon();
    const SCAN: usize = 400;
    let dist = |q: &Vector2<f64>| (forward_kinematics(model, q) - x).norm_squared();
    let mut best = (f64::INFINITY, 0usize, 0.0f64);
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
        for k in 0..=SCAN {
            let s = k as f64 / SCAN as f64;
            let d = dist(&(a + (b - a) * s));
            if d < best.0 {
                best = (d, i, s);
            }
        }
    }
    let (_, edge, s0) = best;
    let (a, b) = (poly[edge], poly[(edge + 1) % poly.len()]);
    let step = 1.0 / SCAN as f64;
    let (mut lo, mut hi) = ((s0 - step).max(0.0), (s0 + step).min(1.0));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let f = |s: f64| dist(&(a + (b - a) * s));
    for _ in 0..80 {
        let m1 = hi - g * (hi - lo);
        let m2 = lo + g * (hi - lo);
        if f(m1) < f(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let q = a + (b - a) * ((lo + hi) / 2.0);
    // Project onto the polygon to absorb rounding at vertices.
    let q = Vector2::new(
        q[0].clamp(model.limits.q1.min, model.limits.q1.max),
        q[1].clamp(model.limits.q2.min, model.limits.q2.max),
    );
    forward_kinematics(model, &q)
}

#[cfg(test)]
mod tests {
    use super::*;
    fn deg(a: f64, b: f64) -> Vector2<f64> {
        Vector2::new(a.to_radians(), b.to_radians())
    }

    #[test]
    fn fk_hand_values() {
        let m = RobotModel::master_black();
        let p = forward_kinematics(&m, &deg(90.0, 90.0));
        assert_close!(p[0], 0.2667, 1e-12);
        assert_close!(p[1], 0.254, 1e-12);
        let p = forward_kinematics(&m, &deg(45.0, 45.0));
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_close!(p[0], (0.254 + 0.2667) * h, 1e-15);
        assert_close!(p[1], (0.254 - 0.2667) * h, 1e-15);
        // Five printed decimals.
        assert_close!(p[0], 0.36820, 1e-5);
        assert_close!(p[1], -0.00898, 1e-5);
        let p = forward_kinematics(&m, &deg(0.0, 0.0));
        assert_eq!(p, Vector2::new(0.254, -0.2667));
    }

    #[test]
    fn ik_round_trip_and_unreachable() {
        let m = RobotModel::master_black();
        let q = deg(45.0, 45.0);
        let back = inverse_kinematics(&m, &forward_kinematics(&m, &q)).unwrap();
        assert_close!(back[0], q[0], 1e-9);
        assert_close!(back[1], q[1], 1e-9);
        assert!(matches!(
            inverse_kinematics(&m, &Vector2::new(0.6, 0.0)),
            Err(KinematicsError::Unreachable { .. })
        ));
        assert!(inverse_kinematics(&m, &Vector2::zeros()).is_err());
    }

    #[test]
    fn ik_accepts_boundary_points() {
        let m = RobotModel::second_white();
        // Fully stretched arm: elbow acos argument is exactly -1 up to rounding.
        let x = Vector2::new(m.l1() + m.l2(), 0.0);
        let q = inverse_kinematics(&m, &x).unwrap();
        assert!((forward_kinematics(&m, &q) - x).norm() < 1e-9);
    }

    #[test]
    fn jacobian_hand_values() {
        let m = RobotModel::master_black();
        let j = jacobian(&m, &deg(45.0, 45.0));
        assert_close!(j[(0, 0)], -0.17961, 5e-6);
        assert_close!(j[(0, 1)], 0.18859, 5e-6);
        assert_close!(j[(1, 0)], 0.17961, 5e-6);
        assert_close!(j[(1, 1)], 0.18859, 5e-6);
        let j = jacobian(&m, &deg(0.0, 90.0));
        assert_close!(j[(0, 0)], 0.0, 1e-15);
        assert_close!(j[(0, 1)], 0.0, 1e-15);
        assert_close!(j[(1, 0)], m.l1(), 1e-15);
        assert_close!(j[(1, 1)], m.l2(), 1e-15);
        assert_close!(j.determinant(), 0.0, 1e-15);
    }

    #[test]
    fn jacobian_determinant_closed_form() {
        let m = RobotModel::second_white();
        let q: Vector2<f64> = Vector2::new(0.3, -0.4);
        let expected = -m.l1() * m.l2() * (q[0] - q[1]).cos();
        assert_close!(jacobian(&m, &q).determinant(), expected, 1e-14);
    }

    #[test]
    fn jacobian_dot_hand_values() {
        let m = RobotModel::master_black();
        assert_eq!(jacobian_dot(&m, &deg(10.0, 20.0), &Vector2::zeros()), Matrix2::zeros());
        let jd = jacobian_dot(&m, &deg(45.0, 45.0), &Vector2::new(1.0, 0.0));
        assert_close!(jd[(0, 0)], -0.17961, 5e-6);
        assert_close!(jd[(0, 1)], 0.0, 1e-15);
        assert_close!(jd[(1, 0)], -0.17961, 5e-6);
        assert_close!(jd[(1, 1)], 0.0, 1e-15);
    }

    #[test]
    fn transform_at_zero() {
        let m = RobotModel::master_black();
        let t = homogeneous_transform(&m, &Vector2::zeros());
        assert_eq!(t.fixed_view::<2, 2>(0, 0).into_owned(), Matrix2::new(0.0, 1.0, -1.0, 0.0));
        assert_eq!(t[(0, 3)], m.l1());
        assert_eq!(t[(1, 3)], -m.l2());
    }

    #[test]
    fn joint_limit_examples() {
        let black = RobotModel::master_black();
        assert!(check_joint_limits(&black, &deg(45.0, 45.0)).is_empty());
        // Also breaks the coupled limit: -60 - 10 + 90 = 20° < 35°.
        let v = check_joint_limits(&black, &deg(-60.0, 10.0));
        let j1 = v.iter().find(|v| v.constraint == LimitConstraint::Joint1).unwrap();
        assert_eq!(j1.side, BoundSide::Lower);
        assert_close!(j1.bound, (-55f64).to_radians(), 1e-15);
        assert_close!(j1.margin, 5f64.to_radians(), 1e-12);
        assert!(v.iter().any(|v| v.constraint == LimitConstraint::Coupled));

        let white = RobotModel::second_white();
        assert!(check_joint_limits(&white, &deg(-86.0, -49.0)).is_empty());
    }

    #[test]
    fn coupled_violation_reported() {
        let black = RobotModel::master_black();
        // q1 - q2 + 90 = 90 - 70 + ... pick q1 = 0, q2 = 60 -> 30° < 35°
        let v = check_joint_limits(&black, &deg(0.0, 60.0));
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].constraint, LimitConstraint::Coupled);
        assert_eq!(v[0].side, BoundSide::Lower);
    }

    #[test]
    fn polygon_vertices_are_inside_limits() {
        for m in [RobotModel::master_black(), RobotModel::second_white()] {
            let poly = m.limits.polygon();
            assert!(poly.len() >= 4);
            for v in &poly {
                let shrink = Vector2::new(
                    v[0].clamp(m.limits.q1.min, m.limits.q1.max),
                    v[1].clamp(m.limits.q2.min, m.limits.q2.max),
                );
                assert!((shrink - v).norm() < 1e-12);
                let c = coupled_angle(v);
                assert!(c >= m.limits.coupled.min - 1e-12 && c <= m.limits.coupled.max + 1e-12);
            }
        }
    }

    #[test]
    fn clamp_far_target_lands_in_workspace() {
        let m = RobotModel::master_black();
        for target in [
            Vector2::new(2.0, 0.0),
            Vector2::new(0.0, 0.0),
            Vector2::new(-0.3, 0.4),
            Vector2::new(0.3, -0.6),
        ] {
            let c = clamp_to_workspace(&m, &target);
            let q = inverse_kinematics(&m, &c).unwrap();
            let viol: f64 = check_joint_limits(&m, &q).iter().map(|v| v.margin).sum();
            assert!(viol < 1e-9, "{target:?} -> {c:?} violates by {viol}");
        }
        let inside = forward_kinematics(&m, &deg(30.0, 40.0));
        assert_eq!(clamp_to_workspace(&m, &inside), inside);
    }

    #[test]
    fn centroid_is_deterministic_and_reachable() {
        let m = RobotModel::master_black();
        let a = workspace_centroid(&m, 20_000, 7);
        let b = workspace_centroid(&m, 20_000, 7);
        assert_eq!(a, b);
        assert!(in_workspace(&m, &a));
    }

    #[test]
    fn model_validation() {
        let bad = RobotModel::new("x", [0.0, 0.3], IDENTIFIED_ALPHA, JointLimits::master_black());
        assert!(bad.is_err());
        let mut alpha = IDENTIFIED_ALPHA;
        alpha[3] = -0.1;
        assert!(RobotModel::new("x", [0.3, 0.3], alpha, JointLimits::master_black()).is_err());
        assert!(RobotModel::new("x", [0.3, 0.3], IDENTIFIED_ALPHA, JointLimits::master_black()).is_ok());
    }
}
