//! Fixed-size geometric value types and the 3x3 linear algebra the rest of the
//! crate is built on.
//!
//! Everything here is a plain `Copy` value. Rotations are stored as matrices;
//! quaternions only appear at file boundaries (see [`RigidTransform::to_quaternion`]).

use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default relative cutoff for treating a singular value as zero.
pub const DEFAULT_RANK_TOLERANCE: f64 = 1e-9;

/// Tolerance used when validating rotation matrices.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// A position in meters. Shares its representation with [`Vec3`].
pub type Point3 = Vec3;

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn distance(self, o: Vec3) -> f64 {
        (self - o).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn max_abs(self) -> f64 {
        self.x.abs().max(self.y.abs()).max(self.z.abs())
    }

    /// Unit vector in the same direction, or `None` for zero or non-finite input.
    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        if n > 0.0 && n.is_finite() {
            Some(self * (1.0 / n))
        } else {
            None
        }
    }

    /// Some unit vector perpendicular to `self` (which need not be normalized).
    pub fn any_perpendicular(self) -> Vec3 {
        let a = self.abs_components();
        let helper = if a.x <= a.y && a.x <= a.z {
            Vec3::new(1.0, 0.0, 0.0)
        } else if a.y <= a.z {
            Vec3::new(0.0, 1.0, 0.0)
        } else {
            Vec3::new(0.0, 0.0, 1.0)
        };
        self.cross(helper).normalized().unwrap_or(Vec3::new(1.0, 0.0, 0.0))
    }

    fn abs_components(self) -> Vec3 {
        Vec3::new(self.x.abs(), self.y.abs(), self.z.abs())
    }

    /// Lexicographic comparison on (x, y, z) using IEEE total order.
    pub fn lex_cmp(&self, o: &Vec3) -> std::cmp::Ordering {
        self.x
            .total_cmp(&o.x)
            .then(self.y.total_cmp(&o.y))
            .then(self.z.total_cmp(&o.z))
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl SubAssign for Vec3 {
    fn sub_assign(&mut self, o: Vec3) {
        *self = *self - o;
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Index<usize> for Vec3 {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

impl IndexMut<usize> for Vec3 {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        match i {
            0 => &mut self.x,
            1 => &mut self.y,
            2 => &mut self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

/// A direction with unit Euclidean norm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec3", into = "Vec3")]
pub struct UnitVector3(Vec3);

impl UnitVector3 {
    /// Normalizes `(x, y, z)`. Zero-length or non-finite input is rejected.
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        Self::from_vec(Vec3::new(x, y, z))
    }

    /// Vectors already unit length to within 1e-12 are kept bit-for-bit.
    pub fn from_vec(v: Vec3) -> Result<Self> {
        if v.is_finite() && (v.norm() - 1.0).abs() <= 1e-12 {
            return Ok(UnitVector3(v));
        }
        v.normalized()
            .map(UnitVector3)
            .ok_or_else(|| Error::InvalidInput(format!("cannot normalize {v:?}")))
    }

    pub fn as_vec(self) -> Vec3 {
        self.0
    }

    pub fn norm(self) -> f64 {
        self.0.norm()
    }
}

impl TryFrom<Vec3> for UnitVector3 {
    type Error = Error;
    fn try_from(v: Vec3) -> Result<Self> {
        UnitVector3::from_vec(v)
    }
}

impl From<UnitVector3> for Vec3 {
    fn from(u: UnitVector3) -> Vec3 {
        u.0
    }
}

/// Row-major 3x3 matrix.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Mat3(pub [[f64; 3]; 3]);

impl Mat3 {
    pub const ZERO: Mat3 = Mat3([[0.0; 3]; 3]);
    pub const IDENTITY: Mat3 = Mat3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    pub fn from_rows(rows: [[f64; 3]; 3]) -> Self {
        Mat3(rows)
    }

    pub fn from_columns(c0: Vec3, c1: Vec3, c2: Vec3) -> Self {
        Mat3([[c0.x, c1.x, c2.x], [c0.y, c1.y, c2.y], [c0.z, c1.z, c2.z]])
    }

    pub fn diag(a: f64, b: f64, c: f64) -> Self {
        Mat3([[a, 0.0, 0.0], [0.0, b, 0.0], [0.0, 0.0, c]])
    }

    /// `u vᵀ`
    pub fn outer(u: Vec3, v: Vec3) -> Self {
        Mat3([
            [u.x * v.x, u.x * v.y, u.x * v.z],
            [u.y * v.x, u.y * v.y, u.y * v.z],
            [u.z * v.x, u.z * v.y, u.z * v.z],
        ])
    }

    /// `I − v vᵀ` for a unit direction: projects onto the plane orthogonal to `v`.
    pub fn orthogonal_projector(v: UnitVector3) -> Self {
        Mat3::IDENTITY - Mat3::outer(v.0, v.0)
    }

    pub fn column(&self, j: usize) -> Vec3 {
        Vec3::new(self.0[0][j], self.0[1][j], self.0[2][j])
    }

    pub fn row(&self, i: usize) -> Vec3 {
        Vec3::from_array(self.0[i])
    }

    pub fn transpose(&self) -> Mat3 {
        let m = &self.0;
        Mat3([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    pub fn determinant(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1] + self.0[2][2]
    }

    pub fn scale(&self, s: f64) -> Mat3 {
        let mut out = *self;
        out.0.iter_mut().flatten().for_each(|e| *e *= s);
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().flatten().fold(0.0, |acc, e| acc.max(e.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|e| e.is_finite())
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..3).all(|i| (0..3).all(|j| (self.0[i][j] - self.0[j][i]).abs() <= tol))
    }

    /// Singular value decomposition by one-sided Jacobi rotations.
    pub fn svd(&self) -> Svd3 {
        svd3(self)
    }

    /// Nearest rotation (polar factor with determinant +1).
    pub fn nearest_rotation(&self) -> Mat3 {
        let svd = self.svd();
        let d = (svd.u * svd.v.transpose()).determinant().signum();
        svd.u * Mat3::diag(1.0, 1.0, d) * svd.v.transpose()
    }
}

impl Index<(usize, usize)> for Mat3 {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.0[i][j]
    }
}

impl IndexMut<(usize, usize)> for Mat3 {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.0[i][j]
    }
}

impl Add for Mat3 {
    type Output = Mat3;
    fn add(self, o: Mat3) -> Mat3 {
        let mut out = self;
        for i in 0..3 {
            for j in 0..3 {
                out.0[i][j] += o.0[i][j];
            }
        }
        out
    }
}

impl Sub for Mat3 {
    type Output = Mat3;
    fn sub(self, o: Mat3) -> Mat3 {
        self + o.scale(-1.0)
    }
}

impl Mul for Mat3 {
    type Output = Mat3;
    fn mul(self, o: Mat3) -> Mat3 {
        let mut out = Mat3::ZERO;
        for i in 0..3 {
            for j in 0..3 {
                out.0[i][j] = (0..3).map(|k| self.0[i][k] * o.0[k][j]).sum();
            }
        }
        out
    }
}

impl Mul<Vec3> for Mat3 {
    type Output = Vec3;
    fn mul(self, v: Vec3) -> Vec3 {
        Vec3::new(self.row(0).dot(v), self.row(1).dot(v), self.row(2).dot(v))
    }
}

/// `m = u · diag(singular_values) · vᵀ`, singular values sorted descending.
#[derive(Clone, Copy, Debug)]
pub struct Svd3 {
    pub u: Mat3,
    pub singular_values: [f64; 3],
    pub v: Mat3,
}

const JACOBI_MAX_SWEEPS: usize = 64;

fn svd3(m: &Mat3) -> Svd3 {
    // Columns of `w` are orthogonalized in place; `v` accumulates the rotations.
    let mut w = [m.column(0), m.column(1), m.column(2)];
    let mut v = [
        Vec3::new(1.0, 0.0, 0.0),
        Vec3::new(0.0, 1.0, 0.0),
        Vec3::new(0.0, 0.0, 1.0),
    ];

    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            let alpha = w[i].norm_squared();
            let beta = w[j].norm_squared();
            let gamma = w[i].dot(w[j]);
            if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                continue;
            }
            rotated = true;
            let zeta = (beta - alpha) / (2.0 * gamma);
            let t = if zeta >= 0.0 {
                1.0 / (zeta + (1.0 + zeta * zeta).sqrt())
            } else {
                -1.0 / (-zeta + (1.0 + zeta * zeta).sqrt())
            };
            let c = 1.0 / (1.0 + t * t).sqrt();
            let s = c * t;
            let (wi, wj) = (w[i], w[j]);
            w[i] = wi * c - wj * s;
            w[j] = wi * s + wj * c;
            let (vi, vj) = (v[i], v[j]);
            v[i] = vi * c - vj * s;
            v[j] = vi * s + vj * c;
        }
        if !rotated {
            break;
        }
    }

    let mut order = [0usize, 1, 2];
    let norms = [w[0].norm(), w[1].norm(), w[2].norm()];
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));

    let sigma = [norms[order[0]], norms[order[1]], norms[order[2]]];
    let v_sorted = [v[order[0]], v[order[1]], v[order[2]]];

    let mut u: [Option<Vec3>; 3] = [None; 3];
    for k in 0..3 {
        if sigma[k] > 0.0 {
            u[k] = (w[order[k]] * (1.0 / sigma[k])).normalized();
        }
    }
    let u = complete_orthonormal_basis(u);

    Svd3 {
        u: Mat3::from_columns(u[0], u[1], u[2]),
        singular_values: sigma,
        v: Mat3::from_columns(v_sorted[0], v_sorted[1], v_sorted[2]),
    }
}

/// Fills the missing trailing columns of a partially known orthonormal basis.
fn complete_orthonormal_basis(cols: [Option<Vec3>; 3]) -> [Vec3; 3] {
    match cols {
        [Some(a), Some(b), Some(c)] => [a, b, c],
        [Some(a), Some(b), None] => [a, b, a.cross(b)],
        [Some(a), None, _] => {
            let b = a.any_perpendicular();
            [a, b, a.cross(b)]
        }
        _ => [
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
        ],
    }
}

/// Moore–Penrose pseudoinverse of a 3x3 matrix and its numerical rank.
///
/// Singular values below `rank_tolerance × σ_max` are treated as zero.
pub fn pseudoinverse_3x3(m: &Mat3, rank_tolerance: f64) -> Result<(Mat3, usize)> {
    if !m.is_finite() {
        return Err(Error::InvalidMatrix("non-finite entry".into()));
    }
    if !(rank_tolerance > 0.0 && rank_tolerance.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "rank_tolerance must be positive, got {rank_tolerance}"
        )));
    }
    let svd = m.svd();
    let cutoff = rank_tolerance * svd.singular_values[0];
    let mut pinv = Mat3::ZERO;
    let mut rank = 0;
    for k in 0..3 {
        let s = svd.singular_values[k];
        if s > 0.0 && s > cutoff {
            rank += 1;
            pinv = pinv + Mat3::outer(svd.v.column(k), svd.u.column(k)).scale(1.0 / s);
        }
    }
    Ok((pinv, rank))
}

/// A proper rigid motion `p ↦ R p + t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    rotation: Mat3,
    translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl RigidTransform {
    pub const IDENTITY: RigidTransform = RigidTransform {
        rotation: Mat3::IDENTITY,
        translation: Vec3::ZERO,
    };

    /// Validates orthonormality and `det R = +1` within [`ROTATION_TOLERANCE`].
    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self> {
        if !rotation.is_finite() || !translation.is_finite() {
            return Err(Error::InvalidMatrix("non-finite transform".into()));
        }
        let drift = orthonormality_error(&rotation);
        if drift > ROTATION_TOLERANCE {
            return Err(Error::InvalidMatrix(format!(
                "rotation not orthonormal (max |RᵀR − I| = {drift:e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(Error::InvalidMatrix(format!(
                "rotation determinant {det} is not +1"
            )));
        }
        Ok(RigidTransform {
            rotation,
            translation,
        })
    }

    pub(crate) fn from_parts_unchecked(rotation: Mat3, translation: Vec3) -> Self {
        RigidTransform {
            rotation,
            translation,
        }
    }

    pub fn from_translation(t: Vec3) -> Self {
        RigidTransform {
            rotation: Mat3::IDENTITY,
            translation: t,
        }
    }

    /// Rotation of `angle` radians about `axis` (Rodrigues), zero translation.
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Result<Self> {
        let k = UnitVector3::from_vec(axis)?.as_vec();
        let (s, c) = angle.sin_cos();
        let kx = Mat3([[0.0, -k.z, k.y], [k.z, 0.0, -k.x], [-k.y, k.x, 0.0]]);
        let r = Mat3::IDENTITY + kx.scale(s) + (kx * kx).scale(1.0 - c);
        Ok(RigidTransform::from_parts_unchecked(r, Vec3::ZERO))
    }

    /// Builds from a quaternion `(w, x, y, z)`; the quaternion is normalized first.
    pub fn from_quaternion(q: [f64; 4], translation: Vec3) -> Result<Self> {
        let n = q.iter().map(|e| e * e).sum::<f64>().sqrt();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::InvalidInput("zero or non-finite quaternion".into()));
        }
        let [w, x, y, z] = q.map(|e| e / n);
        let r = Mat3([
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ]);
        RigidTransform::new(r, translation)
    }

    /// Unit quaternion `(w, x, y, z)` with `w ≥ 0`.
    pub fn to_quaternion(&self) -> [f64; 4] {
        let m = &self.rotation.0;
        let tr = self.rotation.trace();
        let q = if tr > 0.0 {
            let s = (tr + 1.0).sqrt() * 2.0;
            [
                0.25 * s,
                (m[2][1] - m[1][2]) / s,
                (m[0][2] - m[2][0]) / s,
                (m[1][0] - m[0][1]) / s,
            ]
        } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
            let s = (1.0 + m[0][0] - m[1][1] - m[2][2]).sqrt() * 2.0;
            [
                (m[2][1] - m[1][2]) / s,
                0.25 * s,
                (m[0][1] + m[1][0]) / s,
                (m[0][2] + m[2][0]) / s,
            ]
        } else if m[1][1] > m[2][2] {
            let s = (1.0 + m[1][1] - m[0][0] - m[2][2]).sqrt() * 2.0;
            [
                (m[0][2] - m[2][0]) / s,
                (m[0][1] + m[1][0]) / s,
                0.25 * s,
                (m[1][2] + m[2][1]) / s,
            ]
        } else {
            let s = (1.0 + m[2][2] - m[0][0] - m[1][1]).sqrt() * 2.0;
            [
                (m[1][0] - m[0][1]) / s,
                (m[0][2] + m[2][0]) / s,
                (m[1][2] + m[2][1]) / s,
                0.25 * s,
            ]
        };
        let n = q.iter().map(|e| e * e).sum::<f64>().sqrt();
        let sign = if q[0] < 0.0 { -1.0 } else { 1.0 };
        q.map(|e| sign * e / n)
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    pub fn translation(&self) -> Vec3 {
        self.translation
    }

    /// `R p + t`
    pub fn apply(&self, p: Point3) -> Point3 {
        self.rotation * p + self.translation
    }

    /// `R v` (directions ignore translation).
    pub fn rotate(&self, v: Vec3) -> Vec3 {
        self.rotation * v
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        let mut rotation = self.rotation * other.rotation;
        if orthonormality_error(&rotation) > 1e-12 {
            rotation = rotation.nearest_rotation();
        }
        RigidTransform {
            rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }
}

/// `max |RᵀR − I|`
pub fn orthonormality_error(r: &Mat3) -> f64 {
    (r.transpose() * *r - Mat3::IDENTITY).max_abs()
}

/// `R·p + t`
pub fn apply_transform(t: &RigidTransform, p: Point3) -> Point3 {
    t.apply(p)
}

/// Applies `t2` then `t1`.
pub fn compose(t1: &RigidTransform, t2: &RigidTransform) -> RigidTransform {
    t1.compose(t2)
}

/// A non-empty ordered set of finite points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point3>", into = "Vec<Point3>")]
pub struct PointCloud {
    points: Vec<Point3>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("point cloud is empty".into()));
        }
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "point {i} has a non-finite coordinate"
            )));
        }
        Ok(PointCloud { points })
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Point3 {
        let sum = self.points.iter().fold(Vec3::ZERO, |acc, p| acc + *p);
        sum * (1.0 / self.points.len() as f64)
    }

    pub fn transformed(&self, t: &RigidTransform) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| t.apply(*p)).collect(),
        }
    }

    pub fn into_points(self) -> Vec<Point3> {
        self.points
    }
}

impl TryFrom<Vec<Point3>> for PointCloud {
    type Error = Error;
    fn try_from(points: Vec<Point3>) -> Result<Self> {
        PointCloud::new(points)
    }
}

impl From<PointCloud> for Vec<Point3> {
    fn from(c: PointCloud) -> Self {
        c.points
    }
}
