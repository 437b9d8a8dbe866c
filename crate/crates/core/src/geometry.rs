//! Minkowski four-vectors, the unit hyperboloid of future timelike directions
//! and pure Lorentz boosts acting on it.
//!
//! Metric signature is (+, -, -, -) throughout, units with c = 1.

use std::ops::{Add, Neg, Sub};

use nalgebra::{Matrix4, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Allowed drift of `u·u` away from 1, relative to `max(1, t²)`.
///
/// The cancellation in `t² - |x|²` grows with `t²`, so an absolute bound of
/// `1e-12` only makes sense close to the rest frame.
pub const HYPERBOLOID_TOLERANCE: f64 = 1e-12;

/// Dot products below `1 - ANGLE_CLAMP` are rejected by [`hyperbolic_angle`];
/// anything in `[1 - ANGLE_CLAMP, 1]` maps to zero angle.
pub const ANGLE_CLAMP: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("four-vector has non-finite components")]
    NonFinite,
    #[error("vector is not on the unit hyperboloid: u·u = {norm}, t = {t}")]
    OffHyperboloid { norm: f64, t: f64 },
    #[error("hyperbolic angle undefined: u·v = {dot} < 1")]
    Domain { dot: f64 },
    #[error("boost axis must be a non-zero finite 3-vector")]
    BadAxis,
    #[error("rapidity must be finite and non-negative, got {0}")]
    BadRapidity(f64),
    #[error("invalid sampling request: {0}")]
    BadSample(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourVector {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl FourVector {
    pub const fn new(t: f64, x: f64, y: f64, z: f64) -> Self {
        Self { t, x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn spatial_norm_sq(&self) -> f64 {
        self.x * self.x + self.y * self.y + self.z * self.z
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.t * s, self.x * s, self.y * s, self.z * s)
    }

    fn to_vector(self) -> Vector4<f64> {
        Vector4::new(self.t, self.x, self.y, self.z)
    }

    fn from_vector(v: &Vector4<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

impl Add for FourVector {
    type Output = FourVector;
    fn add(self, o: FourVector) -> FourVector {
        FourVector::new(self.t + o.t, self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for FourVector {
    type Output = FourVector;
    fn sub(self, o: FourVector) -> FourVector {
        FourVector::new(self.t - o.t, self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for FourVector {
    type Output = FourVector;
    fn neg(self) -> FourVector {
        self.scale(-1.0)
    }
}

/// `a⁰b⁰ - a·b`.
pub fn minkowski_dot(a: &FourVector, b: &FourVector) -> f64 {
    a.t * b.t - (a.x * b.x + a.y * b.y + a.z * b.z)
}

/// A future-pointing unit timelike vector, i.e. a point of three-dimensional
/// Lobachevsky space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LobachevskyPoint(FourVector);

impl LobachevskyPoint {
    /// Validates `v` without modifying it.
    pub fn new(v: FourVector) -> Result<Self, GeometryError> {
        if !v.is_finite() {
            return Err(GeometryError::NonFinite);
        }
        let norm = minkowski_dot(&v, &v);
        let scale = v.t.abs().max(1.0).powi(2);
        if v.t <= 0.0 || (norm - 1.0).abs() > HYPERBOLOID_TOLERANCE * scale {
            return Err(GeometryError::OffHyperboloid { norm, t: v.t });
        }
        Ok(Self(v))
    }

    /// Projects a future timelike vector onto the hyperboloid by dividing by
    /// `√(v·v)`.
    pub fn normalized(v: FourVector) -> Result<Self, GeometryError> {
        if !v.is_finite() {
            return Err(GeometryError::NonFinite);
        }
        let norm = minkowski_dot(&v, &v);
        if v.t <= 0.0 || norm <= 0.0 {
            return Err(GeometryError::OffHyperboloid { norm, t: v.t });
        }
        Self::new(v.scale(norm.sqrt().recip()))
    }

    /// The rest-frame vector (1, 0, 0, 0).
    pub const fn rest() -> Self {
        Self(FourVector::new(1.0, 0.0, 0.0, 0.0))
    }

    /// `(cosh χ, sinh χ · n)` for a direction `n` (normalized internally).
    pub fn from_rapidity(direction: [f64; 3], rapidity: f64) -> Result<Self, GeometryError> {
        let n = unit_axis(direction)?;
        if !rapidity.is_finite() {
            return Err(GeometryError::BadRapidity(rapidity));
        }
        let (s, c) = (rapidity.sinh(), rapidity.cosh());
        Self::new(FourVector::new(c, s * n[0], s * n[1], s * n[2]))
    }

    pub fn vector(&self) -> &FourVector {
        &self.0
    }

    /// Rapidity of this point relative to the rest frame.
    pub fn rapidity(&self) -> f64 {
        self.0.spatial_norm_sq().sqrt().asinh()
    }
}

fn unit_axis(axis: [f64; 3]) -> Result<[f64; 3], GeometryError> {
    let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    if !n.is_finite() || n == 0.0 {
        return Err(GeometryError::BadAxis);
    }
    Ok([axis[0] / n, axis[1] / n, axis[2] / n])
}

/// Invariant distance on the hyperboloid, `arccosh(u·v)`.
///
/// Near `u·v = 1` the angle is taken from the Minkowski norm of `u - v`
/// (`cosh λ - 1 = 2 sinh²(λ/2)`), which keeps full relative precision for
/// nearby points.
pub fn hyperbolic_angle(u: &LobachevskyPoint, v: &LobachevskyPoint) -> Result<f64, GeometryError> {
    let dot = minkowski_dot(u.vector(), v.vector());
    if !(dot >= 1.0 - ANGLE_CLAMP) {
        return Err(GeometryError::Domain { dot });
    }
    if dot >= 2.0 {
        return Ok(dot.acosh());
    }
    let w = *u.vector() - *v.vector();
    let half_excess = 0.5 * (w.spatial_norm_sq() - w.t * w.t);
    if half_excess <= 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * (0.5 * half_excess).sqrt().asinh())
}

/// A pure boost along a unit spatial axis.
#[derive(Debug, Clone, PartialEq)]
pub struct LorentzBoost {
    axis: [f64; 3],
    rapidity: f64,
    matrix: Matrix4<f64>,
}

impl LorentzBoost {
    pub fn new(axis: [f64; 3], rapidity: f64) -> Result<Self, GeometryError> {
        let n = unit_axis(axis)?;
        if !rapidity.is_finite() || rapidity < 0.0 {
            return Err(GeometryError::BadRapidity(rapidity));
        }
        let (s, c) = (rapidity.sinh(), rapidity.cosh());
        let mut m = Matrix4::identity();
        m[(0, 0)] = c;
        for a in 0..3 {
            m[(0, a + 1)] = s * n[a];
            m[(a + 1, 0)] = s * n[a];
            for b in 0..3 {
                m[(a + 1, b + 1)] += (c - 1.0) * n[a] * n[b];
            }
        }
        Ok(Self { axis: n, rapidity, matrix: m })
    }

    pub fn identity() -> Self {
        Self { axis: [0.0, 0.0, 1.0], rapidity: 0.0, matrix: Matrix4::identity() }
    }

    pub fn axis(&self) -> [f64; 3] {
        self.axis
    }

    pub fn rapidity(&self) -> f64 {
        self.rapidity
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.matrix
    }

    pub fn inverse(&self) -> Self {
        let axis = [-self.axis[0], -self.axis[1], -self.axis[2]];
        Self::new(axis, self.rapidity).expect("axis and rapidity already validated")
    }

    pub fn apply_vector(&self, v: &FourVector) -> FourVector {
        FourVector::from_vector(&(self.matrix * v.to_vector()))
    }

    /// Boosts a point and renormalizes it onto the hyperboloid.
    pub fn apply(&self, u: &LobachevskyPoint) -> LobachevskyPoint {
        LobachevskyPoint::normalized(self.apply_vector(u.vector()))
            .expect("boosts preserve future timelike vectors")
    }

    pub fn apply_all(&self, points: &[LobachevskyPoint]) -> Vec<LobachevskyPoint> {
        points.iter().map(|u| self.apply(u)).collect()
    }
}

/// Deterministic pseudo-random points: rapidity uniform in
/// `[0, max_rapidity]`, direction uniform on the 2-sphere.
pub fn sample_points(
    n: usize,
    max_rapidity: f64,
    seed: u64,
) -> Result<Vec<LobachevskyPoint>, GeometryError> {
    if n == 0 {
        return Err(GeometryError::BadSample("need at least one point"));
    }
    if !(max_rapidity > 0.0) || !max_rapidity.is_finite() {
        return Err(GeometryError::BadSample("max_rapidity must be positive and finite"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let chi = rng.random::<f64>() * max_rapidity;
            let cos_theta = 2.0 * rng.random::<f64>() - 1.0;
            let phi = 2.0 * std::f64::consts::PI * rng.random::<f64>();
            let sin_theta = (1.0 - cos_theta * cos_theta).max(0.0).sqrt();
            let dir = [sin_theta * phi.cos(), sin_theta * phi.sin(), cos_theta];
            LobachevskyPoint::from_rapidity(dir, chi)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn dot_of_rest_vectors() {
        let r = FourVector::new(1.0, 0.0, 0.0, 0.0);
        assert_eq!(minkowski_dot(&r, &r), 1.0);
        let v = FourVector::new(1f64.cosh(), 1f64.sinh(), 0.0, 0.0);
        assert_eq!(minkowski_dot(&r, &v), 1f64.cosh());
    }

    #[test]
    fn angle_to_self_is_zero() {
        for u in sample_points(10, 3.0, 7).unwrap() {
            assert_eq!(hyperbolic_angle(&u, &u).unwrap(), 0.0);
        }
    }

    #[test]
    fn rapidity_is_the_angle() {
        let u = LobachevskyPoint::rest();
        let v = LorentzBoost::new([0.0, 0.0, 1.0], 2.0).unwrap().apply(&u);
        assert_abs_diff_eq!(hyperbolic_angle(&u, &v).unwrap(), 2.0, epsilon = 1e-14);
    }

    #[test]
    fn angle_symmetric() {
        let pts = sample_points(6, 2.5, 3).unwrap();
        for a in &pts {
            for b in &pts {
                let ab = hyperbolic_angle(a, b).unwrap();
                let ba = hyperbolic_angle(b, a).unwrap();
                assert_abs_diff_eq!(ab, ba, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn slightly_subunit_dot_clamps() {
        let u = LobachevskyPoint::rest();
        // t slightly below 1 with the norm still within tolerance is rejected by the
        // constructor, so build the dot product check directly on raw vectors.
        let v = LobachevskyPoint(FourVector::new(1.0 - 5e-10, 0.0, 0.0, 0.0));
        assert_eq!(hyperbolic_angle(&u, &v).unwrap(), 0.0);
        let w = LobachevskyPoint(FourVector::new(1.0 - 1e-6, 0.0, 0.0, 0.0));
        assert!(matches!(hyperbolic_angle(&u, &w), Err(GeometryError::Domain { .. })));
    }

    #[test]
    fn off_hyperboloid_rejected() {
        assert!(LobachevskyPoint::new(FourVector::new(1.0, 0.1, 0.0, 0.0)).is_err());
        assert!(LobachevskyPoint::new(FourVector::new(-1.0, 0.0, 0.0, 0.0)).is_err());
        assert!(LobachevskyPoint::new(FourVector::new(f64::NAN, 0.0, 0.0, 0.0)).is_err());
    }

    #[test]
    fn boost_matrix_properties() {
        let g = Matrix4::from_diagonal(&Vector4::new(1.0, -1.0, -1.0, -1.0));
        let b = LorentzBoost::new([1.0, -2.0, 0.5], 1.7).unwrap();
        let m = b.matrix();
        let form = m.transpose() * g * m;
        assert!((form - g).abs().max() < 1e-12);
        assert_abs_diff_eq!(m.determinant(), 1.0, epsilon = 1e-11);
        let back = b.inverse().matrix() * m;
        assert!((back - Matrix4::identity()).abs().max() < 1e-12);
    }

    #[test]
    fn bad_boosts() {
        assert_eq!(LorentzBoost::new([0.0; 3], 1.0), Err(GeometryError::BadAxis));
        assert!(matches!(
            LorentzBoost::new([1.0, 0.0, 0.0], -0.5),
            Err(GeometryError::BadRapidity(_))
        ));
    }

    #[test]
    fn sampling_deterministic_and_valid() {
        let a = sample_points(10, 2.0, 42).unwrap();
        let b = sample_points(10, 2.0, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(sample_points(1, 1.0, 0).unwrap().len(), 1);
        for u in sample_points(50, 3.0, 9).unwrap() {
            let v = u.vector();
            assert!((minkowski_dot(v, v) - 1.0).abs() <= 1e-12);
            assert!(v.t > 0.0);
        }
        assert!(sample_points(0, 1.0, 0).is_err());
        assert!(sample_points(3, 0.0, 0).is_err());
    }
}
