//! Scene substrate: colored point clouds, detected object layouts and RGB-D
//! camera frames, plus the loaders that read them from disk.
//!
//! The world frame is z-up. Boxes are axis-aligned.

mod frames;
mod layout;
mod ply;

use std::path::{Path, PathBuf};

use nalgebra::{Matrix4, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use frames::{load_camera_frames, write_intrinsics, FrameIntrinsicsFile, DEFAULT_DEPTH_SHIFT};
pub use layout::{load_layout, normalize_label, write_layout, LayoutEntry, LayoutFile};
pub use ply::{load_point_cloud, write_point_cloud_binary};

pub type Vec3 = Vector3<f64>;

/// Tolerance used when checking that a pose's rotation block is orthonormal.
pub const ROTATION_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed PLY header: {0}")]
    MalformedHeader(String),
    #[error("PLY vertex element lacks property `{0}`")]
    MissingProperty(&'static str),
    #[error("PLY body truncated: expected {expected} vertices, read {read}")]
    TruncatedBody { expected: usize, read: usize },
    #[error("invalid PLY value: {0}")]
    InvalidValue(String),
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("point {0} has a non-finite coordinate")]
    NonFinitePoint(usize),
    #[error("duplicate object id {0} in layout")]
    DuplicateId(u32),
    #[error("object {id} has non-positive size {size:?}")]
    NonPositiveSize { id: u32, size: [f64; 3] },
    #[error("layout schema error: {0}")]
    SchemaError(String),
    #[error("missing or unreadable intrinsics in {0}")]
    MissingIntrinsics(PathBuf),
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("pose for frame `{frame}` is not an invertible rigid transform: {reason}")]
    NonInvertiblePose { frame: String, reason: String },
    #[error("depth map for frame `{frame}` is {got:?}, expected {expected:?}")]
    DepthSizeMismatch {
        frame: String,
        got: (u32, u32),
        expected: (u32, u32),
    },
    #[error("frame `{0}` has no color image (.png or .jpg)")]
    MissingColor(String),
    #[error("image error on {path}: {message}")]
    Image { path: PathBuf, message: String },
}

impl SceneError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        SceneError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColoredPoint {
    pub position: Vec3,
    pub color: [u8; 3],
}

/// Colored world-space points. Never empty; every coordinate is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<ColoredPoint>,
}

impl PointCloud {
    pub fn new(points: Vec<ColoredPoint>) -> Result<Self, SceneError> {
        if points.is_empty() {
            return Err(SceneError::EmptyCloud);
        }
        if let Some(i) = points.iter().position(|p| !p.position.iter().all(|c| c.is_finite())) {
            return Err(SceneError::NonFinitePoint(i));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[ColoredPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneBounds {
    pub min: Vec3,
    pub max: Vec3,
}

impl SceneBounds {
    /// Extents `(l_x, l_y, l_z)`.
    pub fn extents(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }
}

/// Componentwise min/max over every point of the cloud.
pub fn compute_bounds(cloud: &PointCloud) -> Result<SceneBounds, SceneError> {
    let mut it = cloud.points().iter();
    let first = it.next().ok_or(SceneError::EmptyCloud)?.position;
    let (min, max) = it.fold((first, first), |(lo, hi), p| (lo.inf(&p.position), hi.sup(&p.position)));
    Ok(SceneBounds { min, max })
}

/// Axis-aligned box given by its center and full extents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb3 {
    pub center: Vec3,
    pub size: Vec3,
}

impl Aabb3 {
    /// Fails with the offending size when any extent is not strictly positive.
    pub fn new(center: Vec3, size: Vec3) -> Result<Self, [f64; 3]> {
        let ok = center.iter().all(|c| c.is_finite()) && size.iter().all(|s| s.is_finite() && *s > 0.0);
        if ok {
            Ok(Self { center, size })
        } else {
            Err([size.x, size.y, size.z])
        }
    }

    pub fn from_min_max(min: Vec3, max: Vec3) -> Result<Self, [f64; 3]> {
        Self::new((min + max) * 0.5, max - min)
    }

    pub fn min(&self) -> Vec3 {
        self.center - self.size * 0.5
    }

    pub fn max(&self) -> Vec3 {
        self.center + self.size * 0.5
    }

    pub fn volume(&self) -> f64 {
        self.size.x * self.size.y * self.size.z
    }

    pub fn translated(&self, t: &Vec3) -> Self {
        Self {
            center: self.center + t,
            size: self.size,
        }
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        let (lo, hi) = (self.min(), self.max());
        (0..3).all(|i| p[i] >= lo[i] && p[i] <= hi[i])
    }

    /// The eight vertices followed by the center.
    ///
    /// Vertex order follows the sign pattern of `(x, y, z)` offsets from the
    /// center: `---, --+, -+-, -++, +--, +-+, ++-, +++`.
    pub fn key_points(&self) -> [Vec3; 9] {
        let half = self.size * 0.5;
        let mut out = [self.center; 9];
        for (i, slot) in out.iter_mut().take(8).enumerate() {
            let sx = if i & 0b100 != 0 { 1.0 } else { -1.0 };
            let sy = if i & 0b010 != 0 { 1.0 } else { -1.0 };
            let sz = if i & 0b001 != 0 { 1.0 } else { -1.0 };
            *slot = self.center + Vec3::new(sx * half.x, sy * half.y, sz * half.z);
        }
        out
    }
}

/// Free-function form of [`Aabb3::key_points`].
pub fn key_points(bbox: &Aabb3) -> [Vec3; 9] {
    bbox.key_points()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectedObject {
    pub id: u32,
    pub bbox: Aabb3,
    /// Lowercase, trimmed.
    pub class_label: String,
}

/// Pinhole intrinsics `K = [[fx,0,cx],[0,fy,cy],[0,0,1]]` plus image size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self, SceneError> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let bad = |m: String| Err(SceneError::InvalidIntrinsics(m));
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return bad(format!("focal lengths must be positive ({}, {})", self.fx, self.fy));
        }
        if !(self.cx > 0.0 && self.cx < self.width as f64) {
            return bad(format!("cx={} outside (0, {})", self.cx, self.width));
        }
        if !(self.cy > 0.0 && self.cy < self.height as f64) {
            return bad(format!("cy={} outside (0, {})", self.cy, self.height));
        }
        Ok(())
    }

    pub fn matrix(&self) -> nalgebra::Matrix3<f64> {
        nalgebra::Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }
}

/// Depth in meters, row-major, `0.0` marks an invalid pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: u32,
    height: u32,
    data: Vec<f32>,
}

impl DepthMap {
    pub fn new(width: u32, height: u32, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), width as usize * height as usize, "depth buffer size");
        Self { width, height, data }
    }

    pub fn filled(width: u32, height: u32, value: f32) -> Self {
        Self::new(width, height, vec![value; width as usize * height as usize])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// `None` outside the map.
    pub fn get(&self, x: i64, y: i64) -> Option<f32> {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return None;
        }
        Some(self.data[y as usize * self.width as usize + x as usize])
    }

    pub fn set(&mut self, x: u32, y: u32, value: f32) {
        let w = self.width as usize;
        self.data[y as usize * w + x as usize] = value;
    }

    /// Nearest-neighbor resample to a new resolution.
    pub fn resized_nearest(&self, width: u32, height: u32) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            let sy = ((y as u64 * self.height as u64) / height as u64) as u32;
            for x in 0..width {
                let sx = ((x as u64 * self.width as u64) / width as u64) as u32;
                data.push(self.data[sy as usize * self.width as usize + sx as usize]);
            }
        }
        Self::new(width, height, data)
    }
}

/// One RGB-D scan frame with world-to-camera extrinsics `T_cw`.
#[derive(Debug, Clone)]
pub struct CameraFrame {
    pub frame_id: String,
    pub intrinsics: CameraIntrinsics,
    pub world_to_camera: Matrix4<f64>,
    pub depth: DepthMap,
    pub rgb_path: PathBuf,
}

impl CameraFrame {
    /// Camera center in world coordinates, `-Rᵀ t`.
    pub fn camera_center(&self) -> Vec3 {
        let r = self.world_to_camera.fixed_view::<3, 3>(0, 0);
        let t = self.world_to_camera.fixed_view::<3, 1>(0, 3);
        -(r.transpose() * t)
    }

    pub fn load_rgb(&self) -> Result<image::RgbImage, SceneError> {
        image::open(&self.rgb_path)
            .map(|img| img.to_rgb8())
            .map_err(|e| SceneError::Image {
                path: self.rgb_path.clone(),
                message: e.to_string(),
            })
    }
}

/// Inverse of a rigid transform, checked for orthonormal rotation and a
/// homogeneous last row.
pub fn invert_rigid(m: &Matrix4<f64>) -> Result<Matrix4<f64>, String> {
    if !m.iter().all(|v| v.is_finite()) {
        return Err("non-finite entry".into());
    }
    let last = m.fixed_view::<1, 4>(3, 0);
    if (last[0].abs() + last[1].abs() + last[2].abs() + (last[3] - 1.0).abs()) > 1e-9 {
        return Err(format!("last row is {last}, expected (0,0,0,1)"));
    }
    let r = m.fixed_view::<3, 3>(0, 0).into_owned();
    let rrt = r * r.transpose();
    let dev = (rrt - nalgebra::Matrix3::identity()).abs().max();
    if dev > ROTATION_TOLERANCE {
        return Err(format!("rotation block is not orthonormal (|RRᵀ-I|={dev:.2e})"));
    }
    let det = r.determinant();
    if (det - 1.0).abs() > ROTATION_TOLERANCE {
        return Err(format!("rotation determinant is {det}"));
    }
    let t = m.fixed_view::<3, 1>(0, 3);
    let rt = r.transpose();
    let t_inv = -(rt * t);
    let mut out = Matrix4::identity();
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(&rt);
    out.fixed_view_mut::<3, 1>(0, 3).copy_from(&t_inv);
    Ok(out)
}

/// Everything the grounding pipeline reads about one scene.
#[derive(Debug, Clone)]
pub struct Scene {
    pub cloud: PointCloud,
    pub detections: Vec<DetectedObject>,
    pub frames: Vec<CameraFrame>,
    pub bounds: SceneBounds,
}

/// File names inside a scene directory.
pub mod layout_paths {
    pub const CLOUD: &str = "scene.ply";
    pub const LAYOUT: &str = "layout.json";
    pub const FRAMES: &str = "frames";
    pub const QUERIES: &str = "queries.jsonl";
}

impl Scene {
    /// Reads `scene.ply`, `layout.json` and `frames/` from a scene directory.
    pub fn load(dir: &Path) -> Result<Self, SceneError> {
        if !dir.is_dir() {
            return Err(SceneError::io(
                dir,
                std::io::Error::new(std::io::ErrorKind::NotFound, "scene directory not found"),
            ));
        }
        let cloud = load_point_cloud(&dir.join(layout_paths::CLOUD))?;
        let detections = load_layout(&dir.join(layout_paths::LAYOUT))?;
        let frames = load_camera_frames(&dir.join(layout_paths::FRAMES))?;
        let bounds = compute_bounds(&cloud)?;
        Ok(Self {
            cloud,
            detections,
            frames,
            bounds,
        })
    }

    pub fn detection(&self, id: u32) -> Option<&DetectedObject> {
        self.detections.iter().find(|d| d.id == id)
    }
}
