use std::fmt;
use std::ops::Mul;

use nalgebra::{Matrix4, Rotation3, Unit, UnitQuaternion};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{GeomError, Mat3, Vec3};
use crate::Scalar;

/// Element of SE(3): `p ↦ rotation · p + translation`.
///
/// The rotation is stored as a plain 3×3 matrix. Constructors reject
/// matrices that are not proper rotations; products of many transforms can
/// be projected back onto SO(3) with [`RigidTransform::renormalized`].
#[derive(Clone, Copy, PartialEq)]
pub struct RigidTransform<T: Scalar> {
    rotation: Mat3<T>,
    translation: Vec3<T>,
}

impl<T: Scalar> RigidTransform<T> {
    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    /// Validated constructor.
    pub fn new(rotation: Mat3<T>, translation: Vec3<T>) -> Result<Self, GeomError> {
        let t = Self {
            rotation,
            translation,
        };
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(GeomError::InvalidArgument("non-finite translation".into()));
        }
        let dev = t.orthonormality_error().as_f64();
        if !(dev <= T::ORTHONORMAL_TOL) {
            return Err(GeomError::NotRigid(dev));
        }
        Ok(t)
    }

    /// Projects `rotation` onto the nearest rotation before constructing.
    pub fn from_approximate(rotation: Mat3<T>, translation: Vec3<T>) -> Result<Self, GeomError> {
        Self::new(nearest_rotation(&rotation)?, translation)
    }

    pub fn from_translation(translation: Vec3<T>) -> Self {
        Self {
            rotation: Mat3::identity(),
            translation,
        }
    }

    /// Rotation of `angle` radians about `axis` followed by `translation`.
    pub fn from_axis_angle(axis: &Vec3<T>, angle: T, translation: Vec3<T>) -> Self {
        let rot = match Unit::try_new(*axis, T::default_epsilon()) {
            Some(a) => Rotation3::from_axis_angle(&a, angle).into_inner(),
            None => Mat3::identity(),
        };
        Self {
            rotation: rot,
            translation,
        }
    }

    pub fn from_quaternion(q: &UnitQuaternion<T>, translation: Vec3<T>) -> Self {
        Self {
            rotation: q.to_rotation_matrix().into_inner(),
            translation,
        }
    }

    pub(crate) fn from_parts_unchecked(rotation: Mat3<T>, translation: Vec3<T>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn rotation(&self) -> &Mat3<T> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3<T> {
        &self.translation
    }

    pub fn quaternion(&self) -> UnitQuaternion<T> {
        UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(self.rotation))
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn apply(&self, p: &Vec3<T>) -> Vec3<T> {
        self.rotation * p + self.translation
    }

    pub fn rotate(&self, v: &Vec3<T>) -> Vec3<T> {
        self.rotation * v
    }

    /// Same transform with its rotation replaced by the nearest proper rotation.
    pub fn renormalized(&self) -> Self {
        match nearest_rotation(&self.rotation) {
            Ok(r) => Self {
                rotation: r,
                translation: self.translation,
            },
            Err(_) => *self,
        }
    }

    /// Largest of `|RᵀR − I|_max` and `|det R − 1|`.
    pub fn orthonormality_error(&self) -> T {
        let g = self.rotation.transpose() * self.rotation - Mat3::identity();
        let mut worst = (self.rotation.determinant() - T::one()).abs();
        for v in g.iter() {
            if v.abs() > worst {
                worst = v.abs();
            }
        }
        worst
    }

    /// Rotation angle in radians, in `[0, π]`.
    pub fn rotation_angle(&self) -> T {
        let c = (self.rotation.trace() - T::one()) / T::lit(2.0);
        c.clamp(-T::one(), T::one()).acos()
    }

    /// Angle in radians of the relative rotation `selfᵀ · other`.
    pub fn angle_to(&self, other: &Self) -> T {
        Self::from_parts_unchecked(self.rotation.transpose() * other.rotation, Vec3::zeros())
            .rotation_angle()
    }

    pub fn to_homogeneous(&self) -> Matrix4<T> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn cast<U: Scalar>(&self) -> RigidTransform<U> {
        RigidTransform {
            rotation: self.rotation.map(|v| U::lit(v.as_f64())),
            translation: self.translation.map(|v| U::lit(v.as_f64())),
        }
    }
}

impl<T: Scalar> Default for RigidTransform<T> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<T: Scalar> Mul for RigidTransform<T> {
    type Output = RigidTransform<T>;
    fn mul(self, rhs: Self) -> Self {
        self.compose(&rhs)
    }
}

impl<'a, T: Scalar> Mul<&'a RigidTransform<T>> for &'a RigidTransform<T> {
    type Output = RigidTransform<T>;
    fn mul(self, rhs: &'a RigidTransform<T>) -> RigidTransform<T> {
        self.compose(rhs)
    }
}

impl<T: Scalar> fmt::Debug for RigidTransform<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let q = self.quaternion();
        write!(
            f,
            "RigidTransform {{ t: [{:.6}, {:.6}, {:.6}], q: [{:.6}, {:.6}, {:.6}, {:.6}] }}",
            self.translation.x.as_f64(),
            self.translation.y.as_f64(),
            self.translation.z.as_f64(),
            q.w.as_f64(),
            q.i.as_f64(),
            q.j.as_f64(),
            q.k.as_f64(),
        )
    }
}

pub(crate) fn nearest_rotation<T: Scalar>(m: &Mat3<T>) -> Result<Mat3<T>, GeomError> {
    let svd = m.svd(true, true);
    let (u, vt) = match (svd.u, svd.v_t) {
        (Some(u), Some(vt)) => (u, vt),
        _ => return Err(GeomError::Degenerate("svd failed".into())),
    };
    let mut d = Mat3::identity();
    if (u * vt).determinant() < T::zero() {
        d[(2, 2)] = -T::one();
    }
    Ok(u * d * vt)
}

#[derive(Serialize, Deserialize)]
struct TransformRepr {
    /// Row-major rotation matrix.
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

impl<T: Scalar> Serialize for RigidTransform<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut rotation = [[0.0; 3]; 3];
        for (r, row) in rotation.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = self.rotation[(r, c)].as_f64();
            }
        }
        TransformRepr {
            rotation,
            translation: [
                self.translation.x.as_f64(),
                self.translation.y.as_f64(),
                self.translation.z.as_f64(),
            ],
        }
        .serialize(s)
    }
}

impl<'de, T: Scalar> Deserialize<'de> for RigidTransform<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = TransformRepr::deserialize(d)?;
        let rot = Mat3::from_fn(|r, c| T::lit(repr.rotation[r][c]));
        let t = Vec3::new(
            T::lit(repr.translation[0]),
            T::lit(repr.translation[1]),
            T::lit(repr.translation[2]),
        );
        // Hand-edited files rarely carry 1e-9 accurate rotations.
        let projected = nearest_rotation(&rot).map_err(serde::de::Error::custom)?;
        let dev = (projected - rot).amax().as_f64();
        if dev > 1e-3 {
            return Err(serde::de::Error::custom(format!(
                "rotation deviates from SO(3) by {dev:.3e}"
            )));
        }
        RigidTransform::new(projected, t).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn random_transform(rng: &mut ChaCha8Rng) -> RigidTransform<f64> {
        let axis = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let t = Vec3::new(
            rng.random_range(-500.0..500.0),
            rng.random_range(-500.0..500.0),
            rng.random_range(-500.0..500.0),
        );
        RigidTransform::from_axis_angle(&axis, rng.random_range(-3.1..3.1), t)
    }

    #[test]
    fn identity_composition() {
        let i = RigidTransform::<f64>::identity();
        assert_eq!(i.compose(&i), i);
    }

    #[test]
    fn quarter_turn_plus_shift() {
        let t = RigidTransform::from_axis_angle(&Vec3::z(), FRAC_PI_2, Vec3::new(1.0, 0.0, 0.0));
        let p = t.apply(&Vec3::new(1.0, 0.0, 0.0));
        assert!((p - Vec3::new(1.0, 1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn inverse_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let t = random_transform(&mut rng);
            let p = Vec3::new(
                rng.random_range(-100.0..100.0),
                rng.random_range(-100.0..100.0),
                rng.random_range(-100.0..100.0),
            );
            let back = t.inverse().apply(&t.apply(&p));
            assert!((back - p).norm() < 1e-9);
            let id = t.inverse().compose(&t);
            assert!((id.rotation() - Mat3::identity()).amax() < 1e-12);
            assert!(id.translation().norm() < 1e-9);
        }
    }

    #[test]
    fn associativity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (a, b, c) = (
            random_transform(&mut rng),
            random_transform(&mut rng),
            random_transform(&mut rng),
        );
        let l = (a * b) * c;
        let r = a * (b * c);
        assert!((l.rotation() - r.rotation()).amax() < 1e-12);
        assert!((l.translation() - r.translation()).amax() < 1e-9);
    }

    #[test]
    fn long_chain_drift_stays_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut acc = RigidTransform::identity();
        for _ in 0..1000 {
            acc = acc.compose(&random_transform(&mut rng));
        }
        assert!(acc.orthonormality_error() < 1e-6);
        let fixed = acc.renormalized();
        assert!(fixed.orthonormality_error() < 1e-12);
        assert!(RigidTransform::new(*fixed.rotation(), *fixed.translation()).is_ok());
    }

    #[test]
    fn rejects_reflections_and_scaling() {
        let mut m = Mat3::<f64>::identity();
        m[(2, 2)] = -1.0;
        assert!(RigidTransform::new(m, Vec3::zeros()).is_err());
        assert!(RigidTransform::new(Mat3::identity() * 1.01, Vec3::zeros()).is_err());
    }

    #[test]
    fn serde_round_trip() {
        let t = RigidTransform::from_axis_angle(&Vec3::new(0.3, -1.0, 0.2), 0.7, Vec3::new(4.0, 5.0, 6.0));
        let s = serde_json::to_string(&t).unwrap();
        let back: RigidTransform<f64> = serde_json::from_str(&s).unwrap();
        assert!((back.rotation() - t.rotation()).amax() < 1e-12);
        assert_eq!(back.translation(), t.translation());
    }

    #[test]
    fn single_precision_works() {
        let t = RigidTransform::<f32>::from_axis_angle(&Vec3::z(), 0.5, Vec3::new(1.0, 2.0, 3.0));
        let p = Vec3::new(1.0f32, 0.0, 0.0);
        let back = t.inverse().apply(&t.apply(&p));
        assert!((back - p).norm() < 1e-5);
    }
}
