//! Synthetic scenes with exact ground truth.
//!
//! A scene is an open-topped room (floor and four walls) holding solid
//! axis-aligned boxes. [`generate`] writes the same directory layout
//! [`Scene::load`](crate::scene::Scene::load) reads: a surface-sampled point
//! cloud, the exact box layout, posed frames whose depth and color images
//! are ray-cast from the same geometry, and a file of relational queries.
//! Output depends only on the spec, so one seed always yields the same bytes.

pub mod raycast;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma, Rgb, RgbImage};
use nalgebra::Matrix4;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::QueryRecord;
use crate::projection::DepthTolerance;
use crate::scene::{
    layout_paths, write_intrinsics, write_layout, write_point_cloud_binary, Aabb3, CameraIntrinsics, ColoredPoint,
    DetectedObject, FrameIntrinsicsFile, PointCloud, SceneError, Vec3, DEFAULT_DEPTH_SHIFT,
};
use raycast::{Surface, World};

pub const DEFAULT_SAMPLE_SPACING_M: f64 = 0.01;
pub const DEFAULT_FRAME_SIZE: (u32, u32) = (320, 240);
pub const DEFAULT_FRAME_FOV_DEG: f64 = 70.0;

const FLOOR_COLOR: [u8; 3] = [150, 122, 94];
const WALL_COLOR: [u8; 3] = [206, 204, 196];
const COLOR_JITTER: i16 = 8;
/// Required gap between the best and second-best object for a relational
/// query to be emitted.
const RELATION_MARGIN_M: f64 = 0.1;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("objects {0} and {1} overlap")]
    OverlappingObjects(usize, usize),
    #[error("object {0} is not inside the room")]
    OutsideRoom(usize),
    #[error("object {0}: {1}")]
    InvalidObject(usize, String),
    #[error("camera {0}: {1}")]
    InvalidCamera(usize, String),
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("{path}: {message}")]
    Write { path: PathBuf, message: String },
    #[error(transparent)]
    Scene(#[from] SceneError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthObject {
    #[serde(rename = "class")]
    pub class_label: String,
    pub center: [f64; 3],
    pub size: [f64; 3],
    pub color: [u8; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthCamera {
    pub position: [f64; 3],
    pub look_at: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    /// Room extent; the room spans `[0, room_size]` on each axis.
    pub room_size: [f64; 3],
    pub objects: Vec<SynthObject>,
    pub cameras: Vec<SynthCamera>,
    #[serde(default = "default_frame_size")]
    pub frame_size: (u32, u32),
    /// Horizontal field of view of the frame cameras.
    #[serde(default = "default_frame_fov")]
    pub frame_fov_deg: f64,
    #[serde(default = "default_spacing")]
    pub sample_spacing_m: f64,
}

fn default_frame_size() -> (u32, u32) {
    DEFAULT_FRAME_SIZE
}

fn default_frame_fov() -> f64 {
    DEFAULT_FRAME_FOV_DEG
}

fn default_spacing() -> f64 {
    DEFAULT_SAMPLE_SPACING_M
}

fn obj(class: &str, center: [f64; 3], size: [f64; 3], color: [u8; 3]) -> SynthObject {
    SynthObject {
        class_label: class.into(),
        center,
        size,
        color,
    }
}

fn cam(position: [f64; 3], look_at: [f64; 3]) -> SynthCamera {
    SynthCamera { position, look_at }
}

impl SynthSpec {
    /// A furnished 5 m x 4 m room: eleven objects, three chairs and two
    /// cabinets among them, observed by six cameras. From the first camera
    /// the near chair hides part of the table, which in turn hides part of
    /// the far chair.
    pub fn demo(seed: u64) -> Self {
        Self {
            seed,
            room_size: [5.0, 4.0, 2.5],
            objects: vec![
                obj("table", [2.5, 2.0, 0.375], [1.2, 0.8, 0.75], [139, 90, 43]),
                obj("chair", [2.5, 1.2, 0.45], [0.5, 0.5, 0.9], [200, 40, 40]),
                obj("chair", [2.6, 2.9, 0.45], [0.5, 0.5, 0.9], [40, 160, 60]),
                obj("chair", [0.7, 0.7, 0.45], [0.5, 0.5, 0.9], [60, 80, 200]),
                obj("cabinet", [4.65, 0.6, 0.6], [0.6, 0.8, 1.2], [230, 200, 120]),
                obj("cabinet", [4.65, 3.3, 0.6], [0.6, 0.8, 1.2], [120, 70, 140]),
                obj("picture", [2.5, 3.98, 1.6], [0.8, 0.04, 0.5], [30, 110, 180]),
                obj("lamp", [0.4, 3.6, 0.8], [0.3, 0.3, 1.6], [250, 230, 60]),
                obj("trash can", [1.3, 3.75, 0.2], [0.3, 0.3, 0.4], [90, 90, 90]),
                obj("plant", [4.6, 2.0, 0.5], [0.4, 0.4, 1.0], [30, 130, 30]),
                obj("clock", [0.02, 2.0, 1.9], [0.04, 0.3, 0.3], [20, 20, 20]),
            ],
            cameras: vec![
                cam([2.5, 0.3, 1.5], [2.5, 4.0, 0.2]),
                cam([0.3, 2.0, 1.6], [5.0, 2.0, 0.8]),
                cam([4.8, 2.6, 1.7], [0.0, 2.0, 0.6]),
                cam([2.5, 3.7, 1.6], [2.5, 0.0, 0.5]),
                cam([0.4, 0.3, 2.1], [4.0, 3.5, 0.5]),
                cam([3.8, 0.3, 1.8], [0.5, 3.5, 0.6]),
            ],
            frame_size: DEFAULT_FRAME_SIZE,
            frame_fov_deg: DEFAULT_FRAME_FOV_DEG,
            sample_spacing_m: DEFAULT_SAMPLE_SPACING_M,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let room = Vec3::from(self.room_size);
        if !room.iter().all(|v| v.is_finite() && *v > 0.0) {
            return Err(SynthError::InvalidSpec(format!("room size {:?}", self.room_size)));
        }
        if self.objects.is_empty() {
            return Err(SynthError::InvalidSpec("no objects".into()));
        }
        if !(self.sample_spacing_m > 0.0 && self.sample_spacing_m.is_finite()) {
            return Err(SynthError::InvalidSpec("sample spacing must be positive".into()));
        }
        if self.frame_size.0 < 16 || self.frame_size.1 < 16 {
            return Err(SynthError::InvalidSpec("frames must be at least 16 px".into()));
        }
        if !(self.frame_fov_deg > 0.0 && self.frame_fov_deg < 180.0) {
            return Err(SynthError::InvalidSpec("frame fov must be in (0, 180)".into()));
        }
        let boxes = self.boxes()?;
        for (i, b) in boxes.iter().enumerate() {
            let (lo, hi) = (b.min(), b.max());
            if (0..3).any(|a| lo[a] < -1e-9 || hi[a] > room[a] + 1e-9) {
                return Err(SynthError::OutsideRoom(i));
            }
            if self.objects[i].class_label.trim().is_empty() {
                return Err(SynthError::InvalidObject(i, "empty class".into()));
            }
        }
        for i in 0..boxes.len() {
            for j in i + 1..boxes.len() {
                let (a, b) = (&boxes[i], &boxes[j]);
                let overlap = (0..3).all(|k| a.max()[k].min(b.max()[k]) - a.min()[k].max(b.min()[k]) > 1e-9);
                if overlap {
                    return Err(SynthError::OverlappingObjects(i, j));
                }
            }
        }
        for (i, _) in self.cameras.iter().enumerate() {
            let rig = self.rig(i)?;
            if boxes.iter().any(|b| b.contains(&rig.position)) {
                return Err(SynthError::InvalidCamera(i, "inside an object".into()));
            }
        }
        Ok(())
    }

    fn boxes(&self) -> Result<Vec<Aabb3>, SynthError> {
        self.objects
            .iter()
            .enumerate()
            .map(|(i, o)| {
                Aabb3::new(Vec3::from(o.center), Vec3::from(o.size))
                    .map_err(|s| SynthError::InvalidObject(i, format!("size {s:?}")))
            })
            .collect()
    }

    pub fn world(&self) -> World {
        World {
            room: Vec3::from(self.room_size),
            boxes: self
                .objects
                .iter()
                .map(|o| {
                    let (c, h) = (Vec3::from(o.center), Vec3::from(o.size) * 0.5);
                    (c - h, c + h)
                })
                .collect(),
        }
    }

    pub fn intrinsics(&self) -> CameraIntrinsics {
        let (w, h) = self.frame_size;
        let f = (w as f64 / 2.0) / (self.frame_fov_deg.to_radians() / 2.0).tan();
        CameraIntrinsics {
            fx: f,
            fy: f,
            cx: w as f64 / 2.0,
            cy: h as f64 / 2.0,
            width: w,
            height: h,
        }
    }

    pub fn rig(&self, camera: usize) -> Result<Rig, SynthError> {
        let c = self
            .cameras
            .get(camera)
            .ok_or_else(|| SynthError::InvalidCamera(camera, "no such camera".into()))?;
        Rig::new(c, self.intrinsics()).map_err(|m| SynthError::InvalidCamera(camera, m))
    }

    /// Layout of the generated scene; ids follow object order.
    pub fn detections(&self) -> Vec<DetectedObject> {
        self.objects
            .iter()
            .enumerate()
            .map(|(i, o)| DetectedObject {
                id: i as u32,
                bbox: Aabb3::new(Vec3::from(o.center), Vec3::from(o.size)).expect("validated box"),
                class_label: crate::scene::normalize_label(&o.class_label),
            })
            .collect()
    }
}

pub fn frame_id(camera: usize) -> String {
    format!("{camera:06}")
}

/// An OpenCV-convention pinhole camera: x right, y down, z forward.
#[derive(Debug, Clone, Copy)]
pub struct Rig {
    pub position: Vec3,
    pub right: Vec3,
    pub down: Vec3,
    pub forward: Vec3,
    pub intrinsics: CameraIntrinsics,
}

impl Rig {
    pub fn new(camera: &SynthCamera, intrinsics: CameraIntrinsics) -> Result<Self, String> {
        let position = Vec3::from(camera.position);
        let view = Vec3::from(camera.look_at) - position;
        if !(position.iter().all(|v| v.is_finite()) && view.norm() > 1e-9) {
            return Err("position and look-at must be distinct finite points".into());
        }
        let forward = view.normalize();
        let right = forward.cross(&Vec3::z());
        if right.norm() < 1e-6 {
            return Err("viewing direction is vertical".into());
        }
        let right = right.normalize();
        Ok(Self {
            position,
            right,
            down: forward.cross(&right),
            forward,
            intrinsics,
        })
    }

    pub fn camera_to_world(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        for (c, axis) in [self.right, self.down, self.forward, self.position].iter().enumerate() {
            for r in 0..3 {
                m[(r, c)] = axis[r];
            }
        }
        m
    }

    /// Direction through image position `(u, v)`, scaled so that the ray
    /// parameter equals camera depth.
    pub fn ray(&self, u: f64, v: f64) -> Vec3 {
        let k = &self.intrinsics;
        self.right * ((u - k.cx) / k.fx) + self.down * ((v - k.cy) / k.fy) + self.forward
    }

    /// `(u, v, z)` of a world point, `None` unless in front of the camera.
    pub fn project(&self, p: &Vec3) -> Option<(f64, f64, f64)> {
        let d = p - self.position;
        let z = d.dot(&self.forward);
        if z <= 0.0 {
            return None;
        }
        let k = &self.intrinsics;
        Some((
            k.fx * d.dot(&self.right) / z + k.cx,
            k.fy * d.dot(&self.down) / z + k.cy,
            z,
        ))
    }
}

/// Camera depth stored for a ray hit, in millimeters; 0 marks no surface.
pub fn depth_mm(t: Option<f64>) -> u16 {
    match t {
        Some(t) if t > 0.0 => (t * DEFAULT_DEPTH_SHIFT).round().clamp(1.0, u16::MAX as f64) as u16,
        _ => 0,
    }
}

fn shade(color: [u8; 3], normal_axis: usize) -> Rgb<u8> {
    let f = [0.8, 0.9, 1.0][normal_axis];
    Rgb(color.map(|c| (c as f64 * f).round() as u8))
}

pub type DepthImage = ImageBuffer<Luma<u16>, Vec<u16>>;

/// Depth (16-bit millimeters) and color images seen by one camera.
pub fn render_frame(spec: &SynthSpec, camera: usize) -> Result<(DepthImage, RgbImage), SynthError> {
    let rig = spec.rig(camera)?;
    let world = spec.world();
    let (w, h) = spec.frame_size;
    let mut depth = ImageBuffer::new(w, h);
    let mut color = RgbImage::from_pixel(w, h, Rgb([255, 255, 255]));
    for y in 0..h {
        for x in 0..w {
            if let Some(hit) = world.cast(&rig.position, &rig.ray(x as f64, y as f64)) {
                depth.put_pixel(x, y, Luma([depth_mm(Some(hit.t))]));
                let base = match hit.surface {
                    Surface::Floor => FLOOR_COLOR,
                    Surface::Wall(_) => WALL_COLOR,
                    Surface::Object(i) => spec.objects[i].color,
                };
                color.put_pixel(x, y, shade(base, hit.normal_axis));
            }
        }
    }
    Ok((depth, color))
}

/// Grid samples of the rectangle `coord[axis] = level`, `lo..hi` elsewhere.
fn sample_rect(out: &mut Vec<Vec3>, axis: usize, level: f64, lo: Vec3, hi: Vec3, spacing: f64) {
    let (a, b) = match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let na = ((hi[a] - lo[a]) / spacing).ceil().max(1.0) as usize;
    let nb = ((hi[b] - lo[b]) / spacing).ceil().max(1.0) as usize;
    for i in 0..na {
        for j in 0..nb {
            let mut p = Vec3::zeros();
            p[axis] = level;
            p[a] = lo[a] + (i as f64 + 0.5) * (hi[a] - lo[a]) / na as f64;
            p[b] = lo[b] + (j as f64 + 0.5) * (hi[b] - lo[b]) / nb as f64;
            out.push(p);
        }
    }
}

/// Surface samples of the room shell and every box, colored per surface
/// with a small seeded jitter.
pub fn sample_cloud(spec: &SynthSpec) -> Result<PointCloud, SceneError> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let s = spec.sample_spacing_m;
    let room = Vec3::from(spec.room_size);
    let mut points = Vec::new();
    let mut push = |positions: Vec<Vec3>, color: [u8; 3], rng: &mut ChaCha8Rng| {
        for p in positions {
            let color = color.map(|c| (c as i16 + rng.gen_range(-COLOR_JITTER..=COLOR_JITTER)).clamp(0, 255) as u8);
            points.push(ColoredPoint { position: p, color });
        }
    };

    let mut floor = Vec::new();
    sample_rect(&mut floor, 2, 0.0, Vec3::zeros(), room, s);
    push(floor, FLOOR_COLOR, &mut rng);
    for (axis, level) in [(0, 0.0), (0, room.x), (1, 0.0), (1, room.y)] {
        let mut wall = Vec::new();
        sample_rect(&mut wall, axis, level, Vec3::zeros(), room, s);
        push(wall, WALL_COLOR, &mut rng);
    }
    for o in &spec.objects {
        let (c, h) = (Vec3::from(o.center), Vec3::from(o.size) * 0.5);
        let (lo, hi) = (c - h, c + h);
        let mut faces = Vec::new();
        for axis in 0..3 {
            if axis != 2 || lo.z > 1e-9 {
                sample_rect(&mut faces, axis, lo[axis], lo, hi, s);
            }
            sample_rect(&mut faces, axis, hi[axis], lo, hi, s);
        }
        push(faces, o.color, &mut rng);
    }
    PointCloud::new(points)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Relation {
    Nearest,
    Farthest,
}

/// Relational queries with unambiguous answers.
///
/// Objects of a repeated class are referred to as the one nearest to or
/// farthest from an object of a class that occurs once; objects of a unique
/// class are referred to by their nearest neighbour. Order and wording are
/// drawn from `seed`.
pub fn relational_queries(objects: &[DetectedObject], seed: u64) -> Vec<QueryRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5157_4552_4945_5321);
    let mut by_class: BTreeMap<&str, Vec<&DetectedObject>> = BTreeMap::new();
    for o in objects {
        by_class.entry(o.class_label.as_str()).or_default().push(o);
    }
    let anchors: Vec<&DetectedObject> = objects
        .iter()
        .filter(|o| by_class[o.class_label.as_str()].len() == 1)
        .collect();
    let dist = |a: &DetectedObject, b: &DetectedObject| (a.bbox.center - b.bbox.center).norm();
    let record = |text: String, target: &DetectedObject, split: &str| QueryRecord {
        text,
        gt_id: target.id,
        gt_box: Some(target.bbox),
        splits: vec![split.to_string()],
    };

    let mut out = Vec::new();
    for (class, members) in &by_class {
        if members.len() < 2 {
            continue;
        }
        for anchor in &anchors {
            for rel in [Relation::Nearest, Relation::Farthest] {
                let mut ranked: Vec<(f64, &DetectedObject)> = members.iter().map(|m| (dist(m, anchor), *m)).collect();
                ranked.sort_by(|a, b| a.0.total_cmp(&b.0));
                if rel == Relation::Farthest {
                    ranked.reverse();
                }
                if (ranked[0].0 - ranked[1].0).abs() < RELATION_MARGIN_M {
                    continue;
                }
                let phrase = match rel {
                    Relation::Nearest => *["closest to", "nearest to"].choose(&mut rng).expect("non-empty"),
                    Relation::Farthest => *["farthest from", "furthest from"].choose(&mut rng).expect("non-empty"),
                };
                out.push(record(
                    format!("the {class} {phrase} the {}", anchor.class_label),
                    ranked[0].1,
                    "multiple",
                ));
            }
        }
    }
    for target in &anchors {
        let neighbour = objects
            .iter()
            .filter(|o| o.id != target.id)
            .min_by(|a, b| dist(a, target).total_cmp(&dist(b, target)).then(a.id.cmp(&b.id)));
        if let Some(n) = neighbour {
            let phrase = *["next to", "beside"].choose(&mut rng).expect("non-empty");
            let article = if by_class[n.class_label.as_str()].len() == 1 {
                "the"
            } else {
                "a"
            };
            out.push(record(
                format!("the {} {phrase} {article} {}", target.class_label, n.class_label),
                target,
                "unique",
            ));
        }
    }
    out.shuffle(&mut rng);
    out
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), SynthError> {
    fs::write(path, bytes).map_err(|e| SynthError::Write {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn mkdir(path: &Path) -> Result<(), SynthError> {
    fs::create_dir_all(path).map_err(|e| SynthError::Write {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn image_error(path: &Path) -> impl FnOnce(image::ImageError) -> SynthError + '_ {
    move |e| SynthError::Write {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GenerationSummary {
    pub points: usize,
    pub objects: usize,
    pub frames: usize,
    pub queries: usize,
}

/// Writes a complete scene directory for `spec` into `out_dir`.
pub fn generate(spec: &SynthSpec, out_dir: &Path) -> Result<GenerationSummary, SynthError> {
    spec.validate()?;
    let frames_dir = out_dir.join(layout_paths::FRAMES);
    for sub in ["pose", "depth", "color"] {
        mkdir(&frames_dir.join(sub))?;
    }

    let cloud = sample_cloud(spec)?;
    write_point_cloud_binary(&out_dir.join(layout_paths::CLOUD), &cloud)?;
    let detections = spec.detections();
    write_layout(&out_dir.join(layout_paths::LAYOUT), &detections)?;

    let k = spec.intrinsics();
    write_intrinsics(
        &frames_dir,
        &FrameIntrinsicsFile {
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            width: k.width,
            height: k.height,
            depth_shift: DEFAULT_DEPTH_SHIFT,
        },
    )?;
    for i in 0..spec.cameras.len() {
        let id = frame_id(i);
        let pose = spec.rig(i)?.camera_to_world();
        let mut text = String::new();
        for r in 0..4 {
            let row: Vec<String> = (0..4).map(|c| format!("{}", pose[(r, c)])).collect();
            let _ = writeln!(text, "{}", row.join(" "));
        }
        write_bytes(&frames_dir.join("pose").join(format!("{id}.txt")), text.as_bytes())?;
        let (depth, color) = render_frame(spec, i)?;
        let depth_path = frames_dir.join("depth").join(format!("{id}.png"));
        depth.save(&depth_path).map_err(image_error(&depth_path))?;
        let color_path = frames_dir.join("color").join(format!("{id}.png"));
        color.save(&color_path).map_err(image_error(&color_path))?;
    }

    let queries = relational_queries(&detections, spec.seed);
    let mut lines = String::new();
    for q in &queries {
        lines.push_str(&serde_json::to_string(q).expect("query serializes"));
        lines.push('\n');
    }
    write_bytes(&out_dir.join(layout_paths::QUERIES), lines.as_bytes())?;

    Ok(GenerationSummary {
        points: cloud.len(),
        objects: detections.len(),
        frames: spec.cameras.len(),
        queries: queries.len(),
    })
}

/// Why a key point is or is not visible in a synthetic frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KeyPointStatus {
    Visible,
    Behind,
    OutOfImage,
    /// The ray through the point's pixel hits nothing.
    NoSurface,
    /// A surface at `depth_m` lies too far in front of (or behind) the point.
    Occluded {
        by: Surface,
        depth_m: f64,
    },
}

/// Visibility of an object's nine key points in one generated frame,
/// derived from the geometry alone: the stored depth at the point's pixel
/// is recomputed by casting the pixel-center ray and rounding it the way
/// the depth image does.
pub fn expected_visibility(
    spec: &SynthSpec,
    object: usize,
    camera: usize,
    tol: &DepthTolerance,
) -> Result<[KeyPointStatus; 9], SynthError> {
    let rig = spec.rig(camera)?;
    let world = spec.world();
    let bbox = spec.boxes()?[object];
    let (w, h) = spec.frame_size;
    Ok(bbox.key_points().map(|p| {
        let Some((u, v, z)) = rig.project(&p) else {
            return KeyPointStatus::Behind;
        };
        let (px, py) = (u.round(), v.round());
        if px < 0.0 || py < 0.0 || px >= w as f64 || py >= h as f64 {
            return KeyPointStatus::OutOfImage;
        }
        let Some(hit) = world.cast(&rig.position, &rig.ray(px, py)) else {
            return KeyPointStatus::NoSurface;
        };
        let stored = depth_mm(Some(hit.t)) as f64 / DEFAULT_DEPTH_SHIFT;
        if (z - stored).abs() <= tol.at(z) {
            KeyPointStatus::Visible
        } else {
            KeyPointStatus::Occluded {
                by: hit.surface,
                depth_m: stored,
            }
        }
    }))
}

pub fn expected_count_visible(
    spec: &SynthSpec,
    object: usize,
    camera: usize,
    tol: &DepthTolerance,
) -> Result<u8, SynthError> {
    Ok(expected_visibility(spec, object, camera, tol)?
        .iter()
        .filter(|s| **s == KeyPointStatus::Visible)
        .count() as u8)
}
