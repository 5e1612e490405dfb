//! Slow, independent reference implementations used to cross-check the fast
//! paths. None of them share code with the routines they check beyond the
//! basic vector types.

use crate::geom::{Mat3, Point3, RigidTransform, UnitVector3, Vec3};

/// `Σ c_i ‖(p_i − k) − ((p_i − k)·v_i) v_i‖²`, evaluated term by term.
pub fn objective(points: &[Point3], vectors: &[UnitVector3], weights: &[f64], k: Point3) -> f64 {
    points
        .iter()
        .zip(vectors)
        .zip(weights)
        .map(|((p, v), c)| {
            let d = *p - k;
            let v = v.as_vec();
            let perp = d - v * d.dot(v);
            c * perp.norm_squared()
        })
        .sum()
}

/// Minimizes [`objective`] using only function values: a coarse grid over the
/// padded bounding box of the points, then cyclic coordinate descent with
/// three-point parabolic line steps (exact for a quadratic).
pub fn minimize_objective(points: &[Point3], vectors: &[UnitVector3], weights: &[f64]) -> Point3 {
    let f = |k: Point3| objective(points, vectors, weights, k);
    let (mut lo, mut hi) = (points[0], points[0]);
    for p in points {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let span = (hi - lo).max_abs().max(1e-3);
    for a in 0..3 {
        lo[a] -= span;
        hi[a] += span;
    }
    const STEPS: usize = 21;
    let mut best = (f64::INFINITY, lo);
    for i in 0..STEPS {
        for j in 0..STEPS {
            for l in 0..STEPS {
                let t = |n: usize| n as f64 / (STEPS - 1) as f64;
                let k = Vec3::new(
                    lo.x + (hi.x - lo.x) * t(i),
                    lo.y + (hi.y - lo.y) * t(j),
                    lo.z + (hi.z - lo.z) * t(l),
                );
                let v = f(k);
                if v < best.0 {
                    best = (v, k);
                }
            }
        }
    }
    let mut k = best.1;
    let h = span;
    for _ in 0..20_000 {
        let before = k;
        for a in 0..3 {
            let mut e = Vec3::ZERO;
            e[a] = h;
            let (fm, f0, fp) = (f(k - e), f(k), f(k + e));
            let curvature = fm - 2.0 * f0 + fp;
            if curvature > 0.0 {
                k[a] -= h * (fp - fm) / (2.0 * curvature);
            }
        }
        if (k - before).max_abs() <= 1e-15 * (1.0 + k.max_abs()) {
            break;
        }
    }
    k
}

/// `(A, b)` accumulated with explicit projector matrices and plain summation.
pub fn normal_system(points: &[Point3], vectors: &[UnitVector3], weights: &[f64]) -> (Mat3, Vec3) {
    let mut a = Mat3::ZERO;
    let mut b = Vec3::ZERO;
    for ((p, v), c) in points.iter().zip(vectors).zip(weights) {
        let v = v.as_vec();
        let mut proj = [[0.0; 3]; 3];
        for (r, row) in proj.iter_mut().enumerate() {
            for (s, x) in row.iter_mut().enumerate() {
                *x = c * ((r == s) as u8 as f64 - v[r] * v[s]);
            }
        }
        let proj = Mat3(proj);
        a = a + proj;
        b += proj * *p;
    }
    (a, b)
}

/// Inverse by the adjugate; `None` when the determinant vanishes.
pub fn cofactor_inverse(m: &Mat3) -> Option<Mat3> {
    let a = &m.0;
    let det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
        - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    let mut inv = [[0.0; 3]; 3];
    for (i, row) in inv.iter_mut().enumerate() {
        for (j, x) in row.iter_mut().enumerate() {
            let (r0, r1) = ((j + 1) % 3, (j + 2) % 3);
            let (c0, c1) = ((i + 1) % 3, (i + 2) % 3);
            *x = (a[r0][c0] * a[r1][c1] - a[r0][c1] * a[r1][c0]) / det;
        }
    }
    Some(Mat3(inv))
}

/// Cyclic Jacobi eigen-decomposition of a symmetric 4×4 matrix; returns the
/// eigenvector of the largest eigenvalue.
#[allow(clippy::needless_range_loop)]
fn dominant_eigenvector4(mut a: [[f64; 4]; 4]) -> [f64; 4] {
    let mut v = [[0.0; 4]; 4];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _ in 0..100 {
        let off: f64 = (0..4)
            .flat_map(|i| (0..4).filter(move |j| *j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..4 {
            for q in p + 1..4 {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..4 {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..4 {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let best = (0..4).max_by(|i, j| a[*i][*i].total_cmp(&a[*j][*j])).expect("4 entries");
    [v[0][best], v[1][best], v[2][best], v[3][best]]
}

/// Weighted rigid fit by the closed-form unit-quaternion method.
pub fn quaternion_rigid_fit(model: &[Point3], observed: &[Point3], weights: &[f64]) -> RigidTransform {
    let mass: f64 = weights.iter().sum();
    let mc = model.iter().zip(weights).fold(Vec3::ZERO, |s, (p, w)| s + *p * *w) * (1.0 / mass);
    let oc = observed.iter().zip(weights).fold(Vec3::ZERO, |s, (p, w)| s + *p * *w) * (1.0 / mass);
    let mut s = [[0.0; 3]; 3];
    for ((m, o), w) in model.iter().zip(observed).zip(weights) {
        let (a, b) = (*m - mc, *o - oc);
        for (i, row) in s.iter_mut().enumerate() {
            for (j, x) in row.iter_mut().enumerate() {
                *x += w * a[i] * b[j];
            }
        }
    }
    let [[sxx, sxy, sxz], [syx, syy, syz], [szx, szy, szz]] = s;
    let n = [
        [sxx + syy + szz, syz - szy, szx - sxz, sxy - syx],
        [syz - szy, sxx - syy - szz, sxy + syx, szx + sxz],
        [szx - sxz, sxy + syx, -sxx + syy - szz, syz + szy],
        [sxy - syx, szx + sxz, syz + szy, -sxx - syy + szz],
    ];
    let q = dominant_eigenvector4(n);
    let r = RigidTransform::from_quaternion(q, Vec3::ZERO).expect("eigenvector is non-zero");
    let t = oc - r.rotate(mc);
    RigidTransform::new(*r.rotation(), t).expect("quaternion rotation is proper")
}

/// Argmax of the unnormalized Gaussian density `Σ w exp(−‖x − c‖² / 2h²)`
/// over a cubic grid of `steps³` nodes centered at `center`.
pub fn density_mode_on_grid(
    candidates: &[Point3],
    weights: &[f64],
    bandwidth: f64,
    center: Point3,
    half_width: f64,
    steps: usize,
) -> Point3 {
    let density = |x: Point3| -> f64 {
        candidates
            .iter()
            .zip(weights)
            .map(|(c, w)| w * (-(x - *c).norm_squared() / (2.0 * bandwidth * bandwidth)).exp())
            .sum()
    };
    let node = |n: usize| -half_width + 2.0 * half_width * n as f64 / (steps - 1) as f64;
    let mut best = (f64::NEG_INFINITY, center);
    for i in 0..steps {
        for j in 0..steps {
            for l in 0..steps {
                let x = center + Vec3::new(node(i), node(j), node(l));
                let d = density(x);
                if d > best.0 {
                    best = (d, x);
                }
            }
        }
    }
    best.1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cofactor_inverse_of_known_matrix() {
        let m = Mat3([[2.0, 0.0, 1.0], [1.0, 3.0, 0.0], [0.0, 1.0, 4.0]]);
        let inv = cofactor_inverse(&m).unwrap();
        assert!((m * inv - Mat3::IDENTITY).max_abs() < 1e-14);
        assert!(cofactor_inverse(&Mat3::diag(1.0, 0.0, 1.0)).is_none());
    }

    #[test]
    fn minimizer_finds_ray_intersection() {
        let k = Vec3::new(0.3, -0.2, 1.0);
        let points = [Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.5)];
        let vectors: Vec<UnitVector3> = points.iter().map(|p| UnitVector3::from_vec(k - *p).unwrap()).collect();
        let got = minimize_objective(&points, &vectors, &[1.0; 3]);
        assert!((got - k).max_abs() < 1e-9);
    }

    #[test]
    fn quaternion_fit_recovers_rotation() {
        let t = RigidTransform::from_axis_angle(Vec3::new(1.0, 2.0, 3.0), 2.5).unwrap();
        let t = RigidTransform::new(*t.rotation(), Vec3::new(0.1, 0.2, 0.3)).unwrap();
        let model = [
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
        ];
        let observed: Vec<Point3> = model.iter().map(|p| t.apply(*p)).collect();
        let fit = quaternion_rigid_fit(&model, &observed, &[1.0; 4]);
        assert!((*fit.rotation() - *t.rotation()).max_abs() < 1e-12);
        assert!((fit.translation() - t.translation()).max_abs() < 1e-12);
    }

    #[test]
    fn grid_mode_of_single_candidate() {
        let c = Vec3::new(0.1, 0.2, 0.3);
        let m = density_mode_on_grid(&[c], &[1.0], 0.1, c, 0.05, 11);
        assert!((m - c).max_abs() < 1e-12);
    }
}
