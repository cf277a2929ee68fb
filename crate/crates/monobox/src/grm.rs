//! Geometric reasoning module: recovers the 3D position of a box from its
//! perspective keypoints by solving an overdetermined linear system, and
//! differentiates that solution with respect to every input so position
//! error can flow back into keypoints, dimension and yaw.
//!
//! Each kept keypoint `i` with normalized coordinates `(nx, ny)` and local
//! corner `(xc, yc, zc)` contributes two rows:
//!
//! ```text
//! [-1  0  nx] T' = xc cos(th) + zc sin(th) - nx (-xc sin(th) + zc cos(th))
//! [ 0 -1  ny] T' =                      yc - ny (-xc sin(th) + zc cos(th))
//! ```
//!
//! where `T' = T + t` absorbs the camera offset; the center keypoint has a
//! zero right-hand side. With all 9 keypoints kept this is the 18x3 system;
//! any two keypoints already constrain the three position unknowns, which is
//! what makes keypoint dropout a usable regulariser.
//!
//! Gradients differentiate the closed-form normal-equations solution
//! `T' = (A^T A)^{-1} A^T b`, which matches the SVD pseudo-inverse value for
//! full-rank systems.

use nalgebra::{DMatrix, DVector, SMatrix};
use rand::Rng;
use thiserror::Error;

use crate::geometry::{
    local_corners, normalize_keypoints, CameraModel, Dimension3D, KeypointSet, CORNER_SIGNS,
};
use crate::{Mat3, Vec2, Vec3};

/// Relative singular-value cutoff below which a system is reported as
/// rank-deficient.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Default per-keypoint drop probability when none is configured.
pub const DEFAULT_DROP_PROB: f64 = 0.5;

/// Minimum number of keypoints a solvable system must keep.
pub const MIN_KEYPOINTS: usize = 2;

#[derive(Debug, Error)]
pub enum GrmError {
    /// Fewer than two keypoints were kept; the position is unconstrained.
    #[error("need at least {MIN_KEYPOINTS} keypoints, got {kept}")]
    InsufficientConstraints { kept: usize },
    /// The system lost rank (e.g. duplicate keypoints).
    #[error("degenerate system: singular value ratio {ratio:.3e}")]
    DegenerateSystem { ratio: f64 },
    /// The least-squares solution placed the box behind the camera.
    #[error("solved position is behind the camera (z = {z:.3})")]
    BehindCamera { z: f64 },
}

/// The stacked keypoint constraints `A T' = b`.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    /// `2k x 3` coefficient matrix; the third column holds the normalized
    /// keypoint coordinate of the owning row.
    pub a: DMatrix<f64>,
    /// `2k` right-hand side.
    pub b: DVector<f64>,
    /// Keypoint index owning each (x-row, y-row) pair.
    pub row_map: Vec<usize>,
}

/// Solver diagnostics: singular values (descending) and `||A T' - b||_2`.
#[derive(Debug, Clone, Copy)]
pub struct SolveDiagnostics {
    pub singular_values: [f64; 3],
    pub residual: f64,
}

/// Builds the `2k x 3` system from kept keypoints.
pub fn build_system(
    norm_kps: &[Vec2; 9],
    mask: &[bool; 9],
    dim: &Dimension3D,
    theta: f64,
) -> Result<LinearSystem, GrmError> {
    let kept = mask.iter().filter(|&&m| m).count();
    if kept < MIN_KEYPOINTS {
        return Err(GrmError::InsufficientConstraints { kept });
    }
    let (sin_t, cos_t) = theta.sin_cos();
    let corners = local_corners(dim);
    let mut a = DMatrix::zeros(2 * kept, 3);
    let mut b = DVector::zeros(2 * kept);
    let mut row_map = Vec::with_capacity(kept);
    let mut row = 0;
    for i in 0..9 {
        if !mask[i] {
            continue;
        }
        let c = corners[i];
        // Rotated corner: x component and z component.
        let rot_x = c.x * cos_t + c.z * sin_t;
        let rot_z = -c.x * sin_t + c.z * cos_t;
        let n = norm_kps[i];
        a[(row, 0)] = -1.0;
        a[(row, 2)] = n.x;
        b[row] = rot_x - n.x * rot_z;
        a[(row + 1, 1)] = -1.0;
        a[(row + 1, 2)] = n.y;
        b[row + 1] = c.y - n.y * rot_z;
        row_map.push(i);
        row += 2;
    }
    Ok(LinearSystem { a, b, row_map })
}

/// Least-squares position from a prepared system, via the SVD
/// pseudo-inverse with residual refinement. Returns the solution `T'`
/// (camera offset not removed).
pub fn solve_position(sys: &LinearSystem) -> Result<(Vec3, SolveDiagnostics), GrmError> {
    let svd = sys.a.clone().svd(true, true);
    let sv = &svd.singular_values;
    let s_max = sv[0];
    let s_min = sv[2];
    let ratio = if s_max > 0.0 { s_min / s_max } else { 0.0 };
    if ratio <= RANK_TOLERANCE {
        return Err(GrmError::DegenerateSystem { ratio });
    }
    let u = svd.u.as_ref().expect("svd computed with u");
    let v_t = svd.v_t.as_ref().expect("svd computed with v_t");
    // T' = V diag(1/s) U^T b
    let pinv_apply = |rhs: &DVector<f64>| {
        let mut ur = u.transpose() * rhs;
        for i in 0..3 {
            ur[i] /= sv[i];
        }
        v_t.transpose() * ur
    };
    let mut t = pinv_apply(&sys.b);
    // Refine against the residual: recovers the digits a single
    // pseudo-inverse application loses on ill-conditioned systems or when
    // the factorization carries a nonzero backward error.
    for _ in 0..3 {
        let r = &sys.b - &sys.a * &t;
        let dt = pinv_apply(&r);
        let done = dt.norm() <= 1e-15 * t.norm();
        t += dt;
        if done {
            break;
        }
    }
    let t = Vec3::new(t[0], t[1], t[2]);
    let residual = (&sys.a * DVector::from_column_slice(t.as_slice()) - &sys.b).norm();
    let diag = SolveDiagnostics {
        singular_values: [sv[0], sv[1], sv[2]],
        residual,
    };
    Ok((t, diag))
}

/// Inverse of the 3x3 normal matrix `A^T A`, the workhorse of the
/// gradients. Computed directly rather than from the SVD factors.
fn normal_inverse(sys: &LinearSystem) -> Result<Mat3, GrmError> {
    let m_dyn = sys.a.transpose() * &sys.a;
    let mut m = Mat3::zeros();
    for r in 0..3 {
        for c in 0..3 {
            m[(r, c)] = m_dyn[(r, c)];
        }
    }
    m.try_inverse()
        .ok_or(GrmError::DegenerateSystem { ratio: 0.0 })
}

/// Full pipeline: normalize keypoints, build the system, solve, and remove
/// the camera offset. Fails with [`GrmError::BehindCamera`] if the recovered
/// depth is not positive.
pub fn solve_full(
    kps: &KeypointSet,
    dim: &Dimension3D,
    theta: f64,
    cam: &CameraModel,
) -> Result<(Vec3, SolveDiagnostics), GrmError> {
    let norm = normalize_keypoints(cam, kps);
    let sys = build_system(&norm, &kps.mask, dim, theta)?;
    let (t_shifted, diag) = solve_position(&sys)?;
    let t = t_shifted - cam.offset();
    if t.z <= 0.0 {
        return Err(GrmError::BehindCamera { z: t.z });
    }
    Ok((t, diag))
}

/// Jacobians of the solved position with respect to every solver input.
/// Columns belonging to masked-out keypoints are exactly zero.
#[derive(Debug, Clone)]
pub struct PositionJacobian {
    /// `3 x 18`: derivative of T w.r.t. pixel keypoint coordinates, column
    /// layout `[u_1, v_1, ..., u_9, v_9]`.
    pub wrt_keypoints: SMatrix<f64, 3, 18>,
    /// `3 x 3`: derivative of T w.r.t. `(h, w, l)`.
    pub wrt_dim: Mat3,
    /// Derivative of T w.r.t. yaw.
    pub wrt_theta: Vec3,
}

/// Upstream-contracted gradients: `dL/dx = (dL/dT)^T dT/dx`.
#[derive(Debug, Clone)]
pub struct GrmGradients {
    /// Per pixel-coordinate gradient, layout `[u_1, v_1, ..., u_9, v_9]`;
    /// zero in dropped-keypoint slots.
    pub keypoints: [f64; 18],
    /// Gradient w.r.t. `(h, w, l)`.
    pub dim: Vec3,
    /// Gradient w.r.t. yaw.
    pub theta: f64,
}

/// Differentiates the position solve. The solution of `A T' = b` in the
/// least-squares sense satisfies `T' = M^{-1} A^T b` with `M = A^T A`, so
/// for any scalar input `p`
///
/// ```text
/// dT/dp = M^{-1} [ (dA/dp)^T r + A^T (db/dp - (dA/dp) T') ],   r = b - A T'
/// ```
///
/// and each input touches only a handful of entries of `A` and `b`.
pub fn position_jacobian(
    kps: &KeypointSet,
    dim: &Dimension3D,
    theta: f64,
    cam: &CameraModel,
) -> Result<PositionJacobian, GrmError> {
    let norm = normalize_keypoints(cam, kps);
    let sys = build_system(&norm, &kps.mask, dim, theta)?;
    let (t_shifted, _) = solve_position(&sys)?;
    let normal_inv = normal_inverse(&sys)?;
    if t_shifted.z - cam.offset().z <= 0.0 {
        return Err(GrmError::BehindCamera {
            z: t_shifted.z - cam.offset().z,
        });
    }
    let t_vec = DVector::from_column_slice(t_shifted.as_slice());
    let residual = &sys.b - &sys.a * &t_vec;
    let (sin_t, cos_t) = theta.sin_cos();
    let corners = local_corners(dim);
    let k_inv = cam.intrinsics_inv();

    let mut wrt_keypoints = SMatrix::<f64, 3, 18>::zeros();
    let mut wrt_dim = Mat3::zeros();
    let mut wrt_theta_rhs = Vec3::zeros();

    // A^T (db/dq) accumulators for q in {h, w, l} and theta.
    let mut at_db = [Vec3::zeros(); 3];

    for (pair, &i) in sys.row_map.iter().enumerate() {
        let rx = 2 * pair;
        let ry = rx + 1;
        let c = corners[i];
        let signs = CORNER_SIGNS[i];
        let rot_z = -c.x * sin_t + c.z * cos_t;
        let rot_x = c.x * cos_t + c.z * sin_t;
        let n = norm[i];

        // --- normalized keypoint coordinates ---
        // x-row: dA = e_{rx,2}, db[rx] = -rot_z.
        let dt_dnx = normal_inv
            * (Vec3::new(0.0, 0.0, residual[rx])
                + (-rot_z - t_shifted.z) * Vec3::new(-1.0, 0.0, n.x));
        // y-row: dA = e_{ry,2}, db[ry] = -rot_z.
        let dt_dny = normal_inv
            * (Vec3::new(0.0, 0.0, residual[ry])
                + (-rot_z - t_shifted.z) * Vec3::new(0.0, -1.0, n.y));
        // Chain through pixel -> normalized: n = K^{-1} (u, v, 1).
        let dt_du = dt_dnx * k_inv[(0, 0)] + dt_dny * k_inv[(1, 0)];
        let dt_dv = dt_dnx * k_inv[(0, 1)] + dt_dny * k_inv[(1, 1)];
        wrt_keypoints.set_column(2 * i, &dt_du);
        wrt_keypoints.set_column(2 * i + 1, &dt_dv);

        // --- dimensions (A is constant in them) ---
        // xc = sx l/2, yc = sy h/2, zc = sz w/2.
        let a_row_x = Vec3::new(-1.0, 0.0, n.x);
        let a_row_y = Vec3::new(0.0, -1.0, n.y);
        // d/dh: only y-row rhs moves.
        at_db[0] += a_row_y * (signs[1] / 2.0);
        // d/dw: via zc.
        let dc_dw = signs[2] / 2.0 * sin_t;
        let de_dw = signs[2] / 2.0 * cos_t;
        at_db[1] += a_row_x * (dc_dw - n.x * de_dw) + a_row_y * (-n.y * de_dw);
        // d/dl: via xc.
        let dc_dl = signs[0] / 2.0 * cos_t;
        let de_dl = -signs[0] / 2.0 * sin_t;
        at_db[2] += a_row_x * (dc_dl - n.x * de_dl) + a_row_y * (-n.y * de_dl);

        // --- theta ---
        // dC/dth = rot_z, dE/dth = -rot_x.
        wrt_theta_rhs += a_row_x * (rot_z + n.x * rot_x) + a_row_y * (n.y * rot_x);
    }

    for (col, acc) in at_db.iter().enumerate() {
        wrt_dim.set_column(col, &(normal_inv * acc));
    }
    let wrt_theta = normal_inv * wrt_theta_rhs;

    Ok(PositionJacobian {
        wrt_keypoints,
        wrt_dim,
        wrt_theta,
    })
}

/// Contracts the position Jacobian with an upstream gradient `dL/dT`.
pub fn grm_backward(
    kps: &KeypointSet,
    dim: &Dimension3D,
    theta: f64,
    cam: &CameraModel,
    upstream: &Vec3,
) -> Result<GrmGradients, GrmError> {
    let jac = position_jacobian(kps, dim, theta, cam)?;
    let kp_row = upstream.transpose() * jac.wrt_keypoints;
    let mut keypoints = [0.0; 18];
    keypoints.copy_from_slice(kp_row.as_slice());
    Ok(GrmGradients {
        keypoints,
        dim: (upstream.transpose() * jac.wrt_dim).transpose(),
        theta: upstream.dot(&jac.wrt_theta),
    })
}

/// Samples a keypoint keep-mask: each keypoint is dropped independently with
/// `drop_prob`; if fewer than `min_keep` survive, a fresh uniform subset of
/// exactly `min_keep` indices is kept instead.
pub fn keypoint_dropout<R: Rng + ?Sized>(
    rng: &mut R,
    drop_prob: f64,
    min_keep: usize,
) -> [bool; 9] {
    assert!(
        (MIN_KEYPOINTS..=9).contains(&min_keep),
        "min_keep must be in [{MIN_KEYPOINTS}, 9]"
    );
    assert!(
        (0.0..1.0).contains(&drop_prob),
        "drop_prob must be in [0, 1)"
    );
    let mut mask = [false; 9];
    let mut kept = 0;
    for m in mask.iter_mut() {
        if rng.random::<f64>() >= drop_prob {
            *m = true;
            kept += 1;
        }
    }
    if kept < min_keep {
        mask = [false; 9];
        let mut indices = [0usize, 1, 2, 3, 4, 5, 6, 7, 8];
        for i in 0..min_keep {
            let j = rng.random_range(i..9);
            indices.swap(i, j);
            mask[indices[i]] = true;
        }
    }
    mask
}
