//! Rigid trajectory alignment and absolute trajectory error.

use nalgebra::{Matrix3, Quaternion, Rotation3, UnitQuaternion, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, Pose, Se2, Se3};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AteReport {
    /// Translation RMSE in metres.
    pub t_ate: f64,
    /// Rotation RMSE in degrees.
    pub r_ate: f64,
    /// Transform applied to the estimate before measuring.
    pub alignment: Pose,
}

fn check_lengths(est: &[Pose], gt: &[Pose]) -> Result<()> {
    if est.len() != gt.len() {
        return Err(Error::LengthMismatch {
            what: "estimated vs ground-truth trajectory",
            left: est.len(),
            right: gt.len(),
        });
    }
    if let Some(p) = est.iter().chain(gt).find(|p| p.dimension() != est[0].dimension()) {
        return Err(Error::DimensionMismatch {
            expected: est[0].dimension().spatial(),
            got: p.dimension().spatial(),
        });
    }
    Ok(())
}

fn spread(points: &[Vec<f64>]) -> f64 {
    let d = points[0].len();
    let n = points.len() as f64;
    let mean: Vec<f64> = (0..d).map(|k| points.iter().map(|p| p[k]).sum::<f64>() / n).collect();
    points
        .iter()
        .map(|p| p.iter().zip(&mean).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
        .sum()
}

/// Least-squares rigid transform (no scale) taking estimated translations
/// onto ground-truth translations.
pub fn align_trajectories(est: &[Pose], gt: &[Pose]) -> Result<Pose> {
    check_lengths(est, gt)?;
    if est.len() < 2 {
        return Err(Error::DegenerateAlignment("need at least two poses".into()));
    }
    let e: Vec<Vec<f64>> = est.iter().map(Pose::translation).collect();
    let g: Vec<Vec<f64>> = gt.iter().map(Pose::translation).collect();
    if spread(&e) < 1e-24 || spread(&g) < 1e-24 {
        return Err(Error::DegenerateAlignment("all translations coincide".into()));
    }
    let n = est.len() as f64;
    match est[0] {
        Pose::Se2(_) => {
            let me = [
                e.iter().map(|p| p[0]).sum::<f64>() / n,
                e.iter().map(|p| p[1]).sum::<f64>() / n,
            ];
            let mg = [
                g.iter().map(|p| p[0]).sum::<f64>() / n,
                g.iter().map(|p| p[1]).sum::<f64>() / n,
            ];
            let (mut dot, mut cross) = (0.0, 0.0);
            for (a, b) in e.iter().zip(&g) {
                let a = [a[0] - me[0], a[1] - me[1]];
                let b = [b[0] - mg[0], b[1] - mg[1]];
                dot += a[0] * b[0] + a[1] * b[1];
                cross += a[0] * b[1] - a[1] * b[0];
            }
            let th = cross.atan2(dot);
            let (s, c) = th.sin_cos();
            Ok(Pose::Se2(Se2::new(
                mg[0] - (c * me[0] - s * me[1]),
                mg[1] - (s * me[0] + c * me[1]),
                th,
            )))
        }
        Pose::Se3(_) => {
            let me = Vector3::from_iterator((0..3).map(|k| e.iter().map(|p| p[k]).sum::<f64>() / n));
            let mg = Vector3::from_iterator((0..3).map(|k| g.iter().map(|p| p[k]).sum::<f64>() / n));
            let mut h = Matrix3::zeros();
            for (a, b) in e.iter().zip(&g) {
                let a = Vector3::new(a[0], a[1], a[2]) - me;
                let b = Vector3::new(b[0], b[1], b[2]) - mg;
                h += b * a.transpose();
            }
            let svd = h.svd(true, true);
            let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
            let mut d = Matrix3::identity();
            if (u * vt).determinant() < 0.0 {
                d[(2, 2)] = -1.0;
            }
            let r = Rotation3::from_matrix_unchecked(u * d * vt);
            let q = UnitQuaternion::from_rotation_matrix(&r);
            let t = mg - r * me;
            Ok(Pose::Se3(Se3::new([t.x, t.y, t.z], [q.w, q.i, q.j, q.k])?))
        }
    }
}

fn rotation_error(a: &Pose, b: &Pose) -> f64 {
    match (a, b) {
        (Pose::Se2(a), Pose::Se2(b)) => normalize_angle(a.theta - b.theta).abs(),
        (Pose::Se3(a), Pose::Se3(b)) => {
            let qa = UnitQuaternion::from_quaternion(Quaternion::new(a.q[0], a.q[1], a.q[2], a.q[3]));
            let qb = UnitQuaternion::from_quaternion(Quaternion::new(b.q[0], b.q[1], b.q[2], b.q[3]));
            qa.angle_to(&qb)
        }
        _ => unreachable!("dimensions checked"),
    }
}

/// Error of `est` against `gt` after rigid alignment.
pub fn ate(est: &[Pose], gt: &[Pose]) -> Result<AteReport> {
    let alignment = align_trajectories(est, gt)?;
    ate_with_alignment(est, gt, alignment)
}

/// Error of `alignment ∘ est` against `gt`.
pub fn ate_with_alignment(est: &[Pose], gt: &[Pose], alignment: Pose) -> Result<AteReport> {
    check_lengths(est, gt)?;
    let n = est.len() as f64;
    let (mut st, mut sr) = (0.0, 0.0);
    for (e, g) in est.iter().zip(gt) {
        let a = crate::geometry::compose(&alignment, e)?;
        let (ta, tg) = (a.translation(), g.translation());
        st += ta.iter().zip(&tg).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
        sr += rotation_error(&a, g).powi(2);
    }
    Ok(AteReport {
        t_ate: (st / n).sqrt(),
        r_ate: (sr / n).sqrt().to_degrees(),
        alignment,
    })
}
