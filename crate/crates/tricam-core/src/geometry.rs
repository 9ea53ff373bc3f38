//! Analytic pinhole geometry for the camera–eye–screen setup.
//!
//! World frame: origin at the screen's top-left corner, +x rightward along
//! the screen width, +y downward along the screen height, +z from the screen
//! toward the user. The screen plane is z = 0, so pixel (px, py) maps to
//! world (px·width_cm/width_px, py·height_cm/height_px, 0).
//!
//! All quantities are 64-bit; lengths are centimeters unless a name says
//! pixels. Every operation here is a pure function and safe to call from any
//! number of threads.

use core::ops::{Add, Div, Mul, Neg, Sub};

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::GeometryError;

/// Cosine threshold above which ray directions count as parallel: pairwise
/// |cos| > 1 - 5e-7 (about 0.057°) makes the 3×3 normal matrix too badly
/// conditioned to trust.
pub const PARALLEL_COS_LIMIT: f64 = 1.0 - 5e-7;

const EPS_PLANE: f64 = 1e-12;

/// A 3-vector in the world frame (cm) or a unitless direction.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
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

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Unit vector in the same direction; `None` for (near-)zero input.
    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        if n < 1e-300 {
            None
        } else {
            Some(self / n)
        }
    }

    pub fn is_unit(self, tol: f64) -> bool {
        (self.norm() - 1.0).abs() <= tol
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Row-major 3×3 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat3 {
    pub m: [[f64; 3]; 3],
}

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3 {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    pub const fn from_rows(r0: [f64; 3], r1: [f64; 3], r2: [f64; 3]) -> Self {
        Mat3 { m: [r0, r1, r2] }
    }

    pub fn row(&self, i: usize) -> Vec3 {
        Vec3::new(self.m[i][0], self.m[i][1], self.m[i][2])
    }

    pub fn transpose(&self) -> Mat3 {
        let m = &self.m;
        Mat3::from_rows(
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        )
    }

    pub fn det(&self) -> f64 {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn mul_vec(&self, v: Vec3) -> Vec3 {
        Vec3::new(self.row(0).dot(v), self.row(1).dot(v), self.row(2).dot(v))
    }

    pub fn mul_mat(&self, o: &Mat3) -> Mat3 {
        let mut r = [[0.0; 3]; 3];
        for (i, row) in r.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| self.m[i][k] * o.m[k][j]).sum();
            }
        }
        Mat3 { m: r }
    }

    /// Orthonormal with determinant +1 within `tol`.
    pub fn is_rotation(&self, tol: f64) -> bool {
        let t = self.mul_mat(&self.transpose());
        let mut dev: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                dev = dev.max((t.m[i][j] - want).abs());
            }
        }
        dev <= tol && (self.det() - 1.0).abs() <= tol
    }

    /// Rotation about the x axis (world +y down, +z toward the user): a
    /// positive angle tips the +z row toward +y, i.e. pitches a
    /// forward-facing camera downward.
    pub fn pitch_down(angle_rad: f64) -> Mat3 {
        let (s, c) = angle_rad.sin_cos();
        Mat3::from_rows([1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c])
    }

    /// Rotation about the y axis.
    pub fn yaw(angle_rad: f64) -> Mat3 {
        let (s, c) = angle_rad.sin_cos();
        Mat3::from_rows([c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c])
    }

    /// Solve `self * x = b` by Cramer's rule. `None` when the determinant is
    /// smaller than `min_det` in absolute value.
    fn solve(&self, b: Vec3, min_det: f64) -> Option<Vec3> {
        let d = self.det();
        if d.abs() < min_det {
            return None;
        }
        let mut cols = [Vec3::ZERO; 3];
        for (j, col) in cols.iter_mut().enumerate() {
            *col = Vec3::new(self.m[0][j], self.m[1][j], self.m[2][j]);
        }
        let dx = Mat3::from_cols(b, cols[1], cols[2]).det();
        let dy = Mat3::from_cols(cols[0], b, cols[2]).det();
        let dz = Mat3::from_cols(cols[0], cols[1], b).det();
        Some(Vec3::new(dx / d, dy / d, dz / d))
    }

    fn from_cols(c0: Vec3, c1: Vec3, c2: Vec3) -> Mat3 {
        Mat3::from_rows([c0.x, c1.x, c2.x], [c0.y, c1.y, c2.y], [c0.z, c1.z, c2.z])
    }
}

/// Screen axis selector for pixel/centimeter conversions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    Horizontal,
    Vertical,
}

/// Physical monitor description anchoring the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScreenModel {
    pub width_px: u32,
    pub height_px: u32,
    pub width_cm: f64,
    pub height_cm: f64,
}

impl ScreenModel {
    pub fn new(width_px: u32, height_px: u32, width_cm: f64, height_cm: f64) -> Result<Self, GeometryError> {
        let ok = width_px > 0
            && height_px > 0
            && width_cm.is_finite()
            && height_cm.is_finite()
            && width_cm > 0.0
            && height_cm > 0.0;
        if !ok {
            return Err(GeometryError::InvalidModel("screen dimensions must be positive and finite"));
        }
        Ok(ScreenModel { width_px, height_px, width_cm, height_cm })
    }

    /// Pixel distance along `axis` to centimeters.
    ///
    /// The ratio is taken first so that a full-resolution distance converts
    /// to the physical dimension exactly.
    pub fn px_to_cm(&self, dist_px: f64, axis: Axis) -> f64 {
        match axis {
            Axis::Horizontal => dist_px / self.width_px as f64 * self.width_cm,
            Axis::Vertical => dist_px / self.height_px as f64 * self.height_cm,
        }
    }

    /// Centimeter distance along `axis` to pixels. Inverse of [`Self::px_to_cm`].
    pub fn cm_to_px(&self, dist_cm: f64, axis: Axis) -> f64 {
        match axis {
            Axis::Horizontal => dist_cm / self.width_cm * self.width_px as f64,
            Axis::Vertical => dist_cm / self.height_cm * self.height_px as f64,
        }
    }

    /// World point (on the z = 0 plane) for a screen pixel.
    pub fn pixel_to_world(&self, px: f64, py: f64) -> Vec3 {
        Vec3::new(self.px_to_cm(px, Axis::Horizontal), self.px_to_cm(py, Axis::Vertical), 0.0)
    }

    /// Screen pixel for a world point; the z component is ignored.
    pub fn world_to_pixel(&self, p: Vec3) -> (f64, f64) {
        (self.cm_to_px(p.x, Axis::Horizontal), self.cm_to_px(p.y, Axis::Vertical))
    }

    /// Euclidean distance between two pixel locations, in centimeters.
    pub fn pixel_dist_cm(&self, a: (f64, f64), b: (f64, f64)) -> f64 {
        let dx = self.px_to_cm(a.0 - b.0, Axis::Horizontal);
        let dy = self.px_to_cm(a.1 - b.1, Axis::Vertical);
        dx.hypot(dy)
    }
}

/// Pinhole camera with a fixed pose in the world frame.
///
/// `orientation` maps world-frame displacements into the camera frame
/// (+x image right, +y image down, +z along the optical axis).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub position: Vec3,
    pub orientation: Mat3,
    pub focal_px: f64,
    pub principal_point: (f64, f64),
    pub res_w: u32,
    pub res_h: u32,
}

impl CameraModel {
    pub fn new(
        position: Vec3,
        orientation: Mat3,
        focal_px: f64,
        principal_point: (f64, f64),
        res_w: u32,
        res_h: u32,
    ) -> Result<Self, GeometryError> {
        if !orientation.is_rotation(1e-9) {
            return Err(GeometryError::InvalidModel("orientation must be a proper rotation"));
        }
        if !(focal_px.is_finite() && focal_px > 0.0) {
            return Err(GeometryError::InvalidModel("focal length must be positive"));
        }
        if res_w == 0 || res_h == 0 {
            return Err(GeometryError::InvalidModel("resolution must be positive"));
        }
        Ok(CameraModel { position, orientation, focal_px, principal_point, res_w, res_h })
    }
}

/// Pixel observation of an eye in one camera's view. The sentinel value
/// u = v = −1 with `detected = false` encodes "not seen".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewCoord {
    pub detected: bool,
    pub u: f64,
    pub v: f64,
}

impl ViewCoord {
    pub const fn undetected() -> Self {
        ViewCoord { detected: false, u: -1.0, v: -1.0 }
    }

    pub const fn at(u: f64, v: f64) -> Self {
        ViewCoord { detected: true, u, v }
    }
}

/// Eye center plus unit gaze direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EyePose {
    pub center: Vec3,
    pub gaze_dir: Vec3,
}

/// Half-line with unit direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ray {
    pub origin: Vec3,
    pub dir: Vec3,
}

impl Ray {
    /// Orthogonal distance from `p` to the ray's supporting line.
    pub fn distance_to(&self, p: Vec3) -> f64 {
        let d = p - self.origin;
        (d - self.dir * d.dot(self.dir)).norm()
    }
}

/// A complete rig: one screen and its mounted cameras. This is the unit the
/// plain-text rig config file describes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rig {
    pub screen: ScreenModel,
    pub cameras: alloc::vec::Vec<CameraModel>,
}

/// Project a world point into the camera's pixel grid.
///
/// Points behind the camera plane or outside `[0,res_w)×[0,res_h)` come back
/// as the undetected sentinel rather than an error.
pub fn project_eye(cam: &CameraModel, p: Vec3) -> ViewCoord {
    let d = cam.orientation.mul_vec(p - cam.position);
    if d.z <= EPS_PLANE {
        return ViewCoord::undetected();
    }
    let u = cam.principal_point.0 + cam.focal_px * d.x / d.z;
    let v = cam.principal_point.1 + cam.focal_px * d.y / d.z;
    if u >= 0.0 && u < cam.res_w as f64 && v >= 0.0 && v < cam.res_h as f64 {
        ViewCoord::at(u, v)
    } else {
        ViewCoord::undetected()
    }
}

/// Ray from the camera center through a detected pixel; re-projects to the
/// same (u, v).
pub fn back_ray(cam: &CameraModel, vc: ViewCoord) -> Result<Ray, GeometryError> {
    if !vc.detected {
        return Err(GeometryError::NoObservation);
    }
    let d_cam = Vec3::new(
        (vc.u - cam.principal_point.0) / cam.focal_px,
        (vc.v - cam.principal_point.1) / cam.focal_px,
        1.0,
    );
    let dir = cam
        .orientation
        .transpose()
        .mul_vec(d_cam)
        .normalized()
        .ok_or(GeometryError::Degenerate("zero back-projection direction"))?;
    Ok(Ray { origin: cam.position, dir })
}

/// Least-squares closest point to all rays (normal-equations midpoint) and
/// the RMS point-to-ray distance.
///
/// One direction alone cannot fix depth, so fewer than two rays is
/// `Underdetermined`. If every pair of directions is within the parallel
/// threshold of each other the normal matrix is singular and the call is
/// `Degenerate`.
pub fn triangulate(rays: &[Ray]) -> Result<(Vec3, f64), GeometryError> {
    if rays.len() < 2 {
        return Err(GeometryError::Underdetermined(rays.len()));
    }
    let mut separated = false;
    'outer: for (i, a) in rays.iter().enumerate() {
        for b in &rays[i + 1..] {
            if a.dir.dot(b.dir).abs() <= PARALLEL_COS_LIMIT {
                separated = true;
                break 'outer;
            }
        }
    }
    if !separated {
        return Err(GeometryError::Degenerate("all ray directions are near-parallel"));
    }

    // Minimize sum of squared point-to-line distances:
    //   sum_i (I - d_i d_i^T) p = sum_i (I - d_i d_i^T) o_i
    let mut a = [[0.0f64; 3]; 3];
    let mut b = Vec3::ZERO;
    for ray in rays {
        let d = ray.dir;
        let proj = [
            [1.0 - d.x * d.x, -d.x * d.y, -d.x * d.z],
            [-d.y * d.x, 1.0 - d.y * d.y, -d.y * d.z],
            [-d.z * d.x, -d.z * d.y, 1.0 - d.z * d.z],
        ];
        for i in 0..3 {
            for j in 0..3 {
                a[i][j] += proj[i][j];
            }
        }
        let m = Mat3 { m: proj };
        b = b + m.mul_vec(ray.origin);
    }
    let point = Mat3 { m: a }
        .solve(b, 1e-12)
        .ok_or(GeometryError::Degenerate("singular normal matrix"))?;

    let ss: f64 = rays.iter().map(|r| r.distance_to(point).powi(2)).sum();
    let residual = (ss / rays.len() as f64).sqrt();
    Ok((point, residual))
}

/// Predict where `cam_c` sees the eye, given its observations in two other
/// cameras. Triangulates the two back-rays then projects into `cam_c`; this
/// is the analytic task the network's auxiliary heads imitate.
pub fn predict_view(
    vc_a: ViewCoord,
    cam_a: &CameraModel,
    vc_b: ViewCoord,
    cam_b: &CameraModel,
    cam_c: &CameraModel,
) -> Result<ViewCoord, GeometryError> {
    let ra = back_ray(cam_a, vc_a)?;
    let rb = back_ray(cam_b, vc_b)?;
    let (eye, _) = triangulate(&[ra, rb])?;
    Ok(project_eye(cam_c, eye))
}

/// Intersect the gaze ray with the screen plane z = 0 and convert to pixels.
pub fn gaze_intersect(eye: &EyePose, screen: &ScreenModel) -> Result<(f64, f64), GeometryError> {
    let dz = eye.gaze_dir.z;
    if dz >= 0.0 || dz.abs() < EPS_PLANE {
        return Err(GeometryError::NoIntersection);
    }
    let t = -eye.center.z / dz;
    let hit = eye.center + eye.gaze_dir * t;
    Ok(screen.world_to_pixel(hit))
}

/// Unit direction from `center` to the world point under `target_px`.
/// Inverse of [`gaze_intersect`] for eyes in front of the screen.
pub fn gaze_from_target(
    center: Vec3,
    target_px: (f64, f64),
    screen: &ScreenModel,
) -> Result<Vec3, GeometryError> {
    if center.z < EPS_PLANE {
        return Err(GeometryError::Degenerate("eye center on or behind the screen plane"));
    }
    let target = screen.pixel_to_world(target_px.0, target_px.1);
    (target - center)
        .normalized()
        .ok_or(GeometryError::Degenerate("eye center coincides with target"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn paper_screen() -> ScreenModel {
        ScreenModel::new(1920, 1080, 59.789, 33.631).unwrap()
    }

    fn axis_cam(position: Vec3, focal_px: f64) -> CameraModel {
        CameraModel::new(position, Mat3::IDENTITY, focal_px, (960.0, 540.0), 1920, 1080).unwrap()
    }

    #[test]
    fn on_axis_projection_hits_principal_point() {
        let cam = axis_cam(Vec3::ZERO, 1000.0);
        let vc = project_eye(&cam, Vec3::new(0.0, 0.0, 50.0));
        assert!(vc.detected);
        assert!((vc.u - 960.0).abs() < 1e-12);
        assert!((vc.v - 540.0).abs() < 1e-12);
    }

    #[test]
    fn behind_camera_is_undetected_sentinel() {
        let cam = axis_cam(Vec3::ZERO, 1000.0);
        let vc = project_eye(&cam, Vec3::new(0.0, 0.0, -10.0));
        assert_eq!(vc, ViewCoord::undetected());
        assert_eq!(vc.u, -1.0);
        assert_eq!(vc.v, -1.0);
    }

    #[test]
    fn hand_pinhole_projection() {
        // u = u0 + f·x/z = 960 + 1000·5/50 = 1060
        let cam = axis_cam(Vec3::ZERO, 1000.0);
        let vc = project_eye(&cam, Vec3::new(5.0, 0.0, 50.0));
        assert!(vc.detected);
        assert!((vc.u - 1060.0).abs() < 1e-12, "u={}", vc.u);
        assert!((vc.v - 540.0).abs() < 1e-12);
    }

    #[test]
    fn out_of_view_is_undetected() {
        let cam = axis_cam(Vec3::ZERO, 1000.0);
        let vc = project_eye(&cam, Vec3::new(100.0, 0.0, 50.0));
        assert!(!vc.detected);
    }

    #[test]
    fn back_ray_round_trip_contains_point() {
        let cam = CameraModel::new(
            Vec3::new(10.0, -2.0, 1.0),
            Mat3::pitch_down(0.2).mul_mat(&Mat3::yaw(-0.1)),
            1200.0,
            (960.0, 540.0),
            1920,
            1080,
        )
        .unwrap();
        let p = Vec3::new(12.0, 15.0, 52.0);
        let vc = project_eye(&cam, p);
        assert!(vc.detected);
        let ray = back_ray(&cam, vc).unwrap();
        assert!(ray.distance_to(p) < 1e-9, "dist={}", ray.distance_to(p));
        // and the ray re-projects to the same pixel
        let vc2 = project_eye(&cam, ray.origin + ray.dir * 30.0);
        assert!((vc2.u - vc.u).abs() < 1e-9 && (vc2.v - vc.v).abs() < 1e-9);
    }

    #[test]
    fn back_ray_of_principal_point_is_optical_axis() {
        let cam = axis_cam(Vec3::new(1.0, 2.0, 3.0), 1000.0);
        let ray = back_ray(&cam, ViewCoord::at(960.0, 540.0)).unwrap();
        assert!((ray.dir - Vec3::new(0.0, 0.0, 1.0)).norm() < 1e-12);
        assert_eq!(ray.origin, cam.position);
    }

    #[test]
    fn back_ray_rejects_undetected() {
        let cam = axis_cam(Vec3::ZERO, 1000.0);
        assert_eq!(back_ray(&cam, ViewCoord::undetected()), Err(GeometryError::NoObservation));
    }

    #[test]
    fn symmetric_two_ray_intersection() {
        let target = Vec3::new(0.0, 0.0, 50.0);
        let o1 = Vec3::new(10.0, 0.0, 0.0);
        let o2 = Vec3::new(-10.0, 0.0, 0.0);
        let r1 = Ray { origin: o1, dir: (target - o1).normalized().unwrap() };
        let r2 = Ray { origin: o2, dir: (target - o2).normalized().unwrap() };
        let (p, res) = triangulate(&[r1, r2]).unwrap();
        assert!((p - target).norm() < 1e-9);
        assert!(res < 1e-9);
    }

    #[test]
    fn single_ray_is_underdetermined() {
        let r = Ray { origin: Vec3::ZERO, dir: Vec3::new(0.0, 0.0, 1.0) };
        assert_eq!(triangulate(&[r]), Err(GeometryError::Underdetermined(1)));
        assert_eq!(triangulate(&[]), Err(GeometryError::Underdetermined(0)));
    }

    #[test]
    fn parallel_rays_are_degenerate() {
        let d = Vec3::new(0.0, 0.0, 1.0);
        let r1 = Ray { origin: Vec3::ZERO, dir: d };
        let r2 = Ray { origin: Vec3::new(1.0, 0.0, 0.0), dir: d };
        assert!(matches!(triangulate(&[r1, r2]), Err(GeometryError::Degenerate(_))));
        // anti-parallel is the same singular normal matrix
        let r3 = Ray { origin: Vec3::new(1.0, 0.0, 0.0), dir: -d };
        assert!(matches!(triangulate(&[r1, r3]), Err(GeometryError::Degenerate(_))));
    }

    #[test]
    fn perpendicular_gaze_hits_screen_center() {
        let screen = paper_screen();
        let eye = EyePose {
            center: Vec3::new(29.8945, 16.8155, 50.0),
            gaze_dir: Vec3::new(0.0, 0.0, -1.0),
        };
        let (px, py) = gaze_intersect(&eye, &screen).unwrap();
        assert!((px - 960.0).abs() < 1e-9);
        assert!((py - 540.0).abs() < 1e-9);
    }

    #[test]
    fn parallel_gaze_has_no_intersection() {
        let screen = paper_screen();
        let eye = EyePose { center: Vec3::new(0.0, 0.0, 50.0), gaze_dir: Vec3::new(1.0, 0.0, 0.0) };
        assert_eq!(gaze_intersect(&eye, &screen), Err(GeometryError::NoIntersection));
        let away = EyePose { center: eye.center, gaze_dir: Vec3::new(0.0, 0.0, 1.0) };
        assert_eq!(gaze_intersect(&away, &screen), Err(GeometryError::NoIntersection));
    }

    #[test]
    fn off_center_gaze_in_pixels() {
        // 10 cm right of center: px = 960 + 10·(1920/59.789) ≈ 1281.1
        let screen = paper_screen();
        let center = Vec3::new(29.8945, 16.8155, 50.0);
        let target = Vec3::new(29.8945 + 10.0, 16.8155, 0.0);
        let eye = EyePose { center, gaze_dir: (target - center).normalized().unwrap() };
        let (px, py) = gaze_intersect(&eye, &screen).unwrap();
        assert!((px - (960.0 + 10.0 * 1920.0 / 59.789)).abs() < 1e-9);
        assert!((px - 1281.1).abs() < 0.1);
        assert!((py - 540.0).abs() < 1e-9);
    }

    #[test]
    fn gaze_from_target_straight_down_the_axis() {
        let screen = paper_screen();
        let center = Vec3::new(29.8945, 16.8155, 50.0);
        let dir = gaze_from_target(center, (960.0, 540.0), &screen).unwrap();
        assert!((dir - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
    }

    #[test]
    fn gaze_from_target_rejects_on_plane_center() {
        let screen = paper_screen();
        assert!(matches!(
            gaze_from_target(Vec3::new(1.0, 1.0, 0.0), (100.0, 100.0), &screen),
            Err(GeometryError::Degenerate(_))
        ));
    }

    #[test]
    fn gaze_round_trip_is_identity() {
        let screen = paper_screen();
        let center = Vec3::new(12.0, 9.0, 47.0);
        let target = (321.0, 777.0);
        let dir = gaze_from_target(center, target, &screen).unwrap();
        let eye = EyePose { center, gaze_dir: dir };
        let (px, py) = gaze_intersect(&eye, &screen).unwrap();
        assert!((px - target.0).abs() < 1e-9);
        assert!((py - target.1).abs() < 1e-9);
    }

    #[test]
    fn px_cm_paper_dimensions_are_exact() {
        let screen = paper_screen();
        assert_eq!(screen.px_to_cm(1920.0, Axis::Horizontal), 59.789);
        assert_eq!(screen.px_to_cm(1080.0, Axis::Vertical), 33.631);
        assert_eq!(screen.px_to_cm(0.0, Axis::Horizontal), 0.0);
        assert_eq!(screen.cm_to_px(59.789, Axis::Horizontal), 1920.0);
        // 321.146 px ≈ 10 cm (1920/59.789 px per cm)
        assert!((screen.px_to_cm(321.146, Axis::Horizontal) - 10.0).abs() < 1e-3);
    }

    #[test]
    fn rotation_composition_stays_orthonormal() {
        let mut r = Mat3::IDENTITY;
        for i in 0..200 {
            r = r.mul_mat(&Mat3::pitch_down(0.013 * (i as f64 % 7.0)));
            r = r.mul_mat(&Mat3::yaw(-0.007 * (i as f64 % 5.0)));
        }
        assert!(r.is_rotation(1e-9));
    }

    #[test]
    fn three_camera_recovery_matches_generator() {
        let cams = vec![
            axis_cam(Vec3::new(-15.0, 0.0, 0.0), 1100.0),
            axis_cam(Vec3::new(0.0, 0.0, 0.0), 1100.0),
            axis_cam(Vec3::new(15.0, 0.0, 0.0), 1100.0),
        ];
        let eye = Vec3::new(3.0, 7.0, 55.0);
        let rays: alloc::vec::Vec<Ray> = cams
            .iter()
            .map(|c| back_ray(c, project_eye(c, eye)).unwrap())
            .collect();
        let (p, res) = triangulate(&rays).unwrap();
        assert!((p - eye).norm() < 1e-9);
        assert!(res < 1e-9);
        // predict_view equals direct projection on noiseless data
        let pv = predict_view(
            project_eye(&cams[0], eye),
            &cams[0],
            project_eye(&cams[1], eye),
            &cams[1],
            &cams[2],
        )
        .unwrap();
        let direct = project_eye(&cams[2], eye);
        assert!((pv.u - direct.u).abs() < 1e-9 && (pv.v - direct.v).abs() < 1e-9);
    }
}
