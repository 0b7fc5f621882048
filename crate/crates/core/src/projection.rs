//! Camera-frame projection of object boxes, depth-tested visibility, keyframe
//! selection and the stitched visual object table.

use std::cmp::Ordering;

use image::{imageops, Rgb, RgbImage};
use nalgebra::{Dyn, Matrix4, OMatrix, U4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::render::{draw_text, MARK_COLOR};
use crate::scene::{Aabb3, CameraFrame, CameraIntrinsics, Vec3};

pub const DEFAULT_DEPTH_TOL_M: f64 = 0.10;
pub const DEFAULT_REL_DEPTH_TOL: f64 = 0.05;
/// Padding added on each side of a crop, as a fraction of its extent.
pub const CROP_PAD_FRACTION: f64 = 0.10;
/// Lower bound on the per-side padding so single-point crops stay usable.
pub const MIN_CROP_PAD_PX: f64 = 16.0;
pub const TABLE_CELL_PX: u32 = 224;

#[derive(Debug, Error, PartialEq)]
pub enum ProjectionError {
    #[error("object is not visible in any frame")]
    NoVisibleFrame,
    #[error("visual table needs at least one crop")]
    EmptyCrops,
}

/// A point mapped into a camera image. `u`/`v` are NaN unless `in_front`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProjectedPoint {
    pub u: f64,
    pub v: f64,
    pub depth_cam: f64,
    pub in_front: bool,
}

impl ProjectedPoint {
    pub fn pixel(&self) -> Option<(i64, i64)> {
        self.in_front.then(|| (self.u.round() as i64, self.v.round() as i64))
    }
}

/// Absolute and relative depth agreement required for a point to count as
/// visible. The effective tolerance is `max(abs_m, rel * z_c)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthTolerance {
    pub abs_m: f64,
    pub rel: f64,
}

impl Default for DepthTolerance {
    fn default() -> Self {
        Self {
            abs_m: DEFAULT_DEPTH_TOL_M,
            rel: DEFAULT_REL_DEPTH_TOL,
        }
    }
}

impl DepthTolerance {
    pub fn at(&self, z_c: f64) -> f64 {
        self.abs_m.max(self.rel * z_c)
    }
}

/// Pixel rectangle, `min` inclusive and `max` exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropRect {
    pub u_min: u32,
    pub v_min: u32,
    pub u_max: u32,
    pub v_max: u32,
}

impl CropRect {
    pub fn width(&self) -> u32 {
        self.u_max - self.u_min
    }

    pub fn height(&self) -> u32 {
        self.v_max - self.v_min
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyframeAssignment {
    pub object_id: u32,
    pub frame_id: String,
    pub visible_count: u8,
    pub crop_rect: CropRect,
}

/// `p_cam = T_cw · [x y z 1]ᵀ`, then `[u v 1]ᵀ = K · [x_c/z_c, y_c/z_c, 1]ᵀ`.
pub fn project_points(k: &CameraIntrinsics, world_to_camera: &Matrix4<f64>, points: &[Vec3]) -> Vec<ProjectedPoint> {
    let n = points.len();
    let homogeneous = OMatrix::<f64, U4, Dyn>::from_fn(n, |r, c| if r < 3 { points[c][r] } else { 1.0 });
    let cam = world_to_camera * homogeneous;
    let kmat = k.matrix();
    cam.column_iter()
        .map(|col| {
            let z = col[2];
            if z > 0.0 {
                let uv = kmat * Vec3::new(col[0] / z, col[1] / z, 1.0);
                ProjectedPoint {
                    u: uv[0],
                    v: uv[1],
                    depth_cam: z,
                    in_front: true,
                }
            } else {
                ProjectedPoint {
                    u: f64::NAN,
                    v: f64::NAN,
                    depth_cam: z,
                    in_front: false,
                }
            }
        })
        .collect()
}

/// Depth test at the single nearest pixel of the frame's depth map.
pub fn visibility(pp: &ProjectedPoint, frame: &CameraFrame, tol: &DepthTolerance) -> bool {
    let Some((x, y)) = pp.pixel() else {
        return false;
    };
    match frame.depth.get(x, y) {
        Some(d) if d > 0.0 => (pp.depth_cam - d as f64).abs() <= tol.at(pp.depth_cam),
        _ => false,
    }
}

fn project_box(bbox: &Aabb3, frame: &CameraFrame) -> Vec<ProjectedPoint> {
    project_points(&frame.intrinsics, &frame.world_to_camera, &bbox.key_points())
}

/// Number of the box's nine key points visible in `frame`.
pub fn count_visible(bbox: &Aabb3, frame: &CameraFrame, tol: &DepthTolerance) -> u8 {
    project_box(bbox, frame)
        .iter()
        .filter(|pp| visibility(pp, frame, tol))
        .count() as u8
}

/// `(frame_id, visible key points)` for every frame, in input order.
pub fn visibility_counts(bbox: &Aabb3, frames: &[CameraFrame], tol: &DepthTolerance) -> Vec<(String, u8)> {
    frames
        .iter()
        .map(|f| (f.frame_id.clone(), count_visible(bbox, f, tol)))
        .collect()
}

fn crop_rect(visible: &[&ProjectedPoint], width: u32, height: u32) -> CropRect {
    let (mut u0, mut v0, mut u1, mut v1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for p in visible {
        u0 = u0.min(p.u);
        v0 = v0.min(p.v);
        u1 = u1.max(p.u);
        v1 = v1.max(p.v);
    }
    let pad_u = ((u1 - u0) * CROP_PAD_FRACTION).max(MIN_CROP_PAD_PX);
    let pad_v = ((v1 - v0) * CROP_PAD_FRACTION).max(MIN_CROP_PAD_PX);
    let clamp = |x: f64, hi: u32| x.clamp(0.0, hi as f64);
    let u_min = clamp((u0 - pad_u).floor(), width) as u32;
    let v_min = clamp((v0 - pad_v).floor(), height) as u32;
    let u_max = (clamp((u1 + pad_u).ceil(), width) as u32).max((u_min + 1).min(width));
    let v_max = (clamp((v1 + pad_v).ceil(), height) as u32).max((v_min + 1).min(height));
    CropRect {
        u_min,
        v_min,
        u_max,
        v_max,
    }
}

/// The frame observing the most key points of the box.
///
/// Ties go to the frame whose camera center is nearest the box center, then
/// to the lexicographically smallest frame id, so the result does not depend
/// on frame order.
pub fn select_keyframe(
    object_id: u32,
    bbox: &Aabb3,
    frames: &[CameraFrame],
    tol: &DepthTolerance,
) -> Result<KeyframeAssignment, ProjectionError> {
    struct Candidate<'a> {
        frame: &'a CameraFrame,
        projected: Vec<ProjectedPoint>,
        count: u8,
        distance: f64,
    }
    let better = |a: &Candidate, b: &Candidate| -> Ordering {
        b.count
            .cmp(&a.count)
            .then(a.distance.total_cmp(&b.distance))
            .then_with(|| a.frame.frame_id.cmp(&b.frame.frame_id))
    };
    let best = frames
        .iter()
        .map(|frame| {
            let projected = project_box(bbox, frame);
            let count = projected.iter().filter(|p| visibility(p, frame, tol)).count() as u8;
            Candidate {
                frame,
                projected,
                count,
                distance: (frame.camera_center() - bbox.center).norm(),
            }
        })
        .min_by(better)
        .filter(|c| c.count > 0)
        .ok_or(ProjectionError::NoVisibleFrame)?;

    let visible: Vec<&ProjectedPoint> = best
        .projected
        .iter()
        .filter(|p| visibility(p, best.frame, tol))
        .collect();
    let k = &best.frame.intrinsics;
    Ok(KeyframeAssignment {
        object_id,
        frame_id: best.frame.frame_id.clone(),
        visible_count: best.count,
        crop_rect: crop_rect(&visible, k.width, k.height),
    })
}

pub fn crop_image(image: &RgbImage, rect: &CropRect) -> RgbImage {
    let u_max = rect.u_max.min(image.width());
    let v_max = rect.v_max.min(image.height());
    let u_min = rect.u_min.min(u_max);
    let v_min = rect.v_min.min(v_max);
    imageops::crop_imm(image, u_min, v_min, u_max - u_min, v_max - v_min).to_image()
}

/// Grid dimensions `(columns, rows)` for `n` cells.
pub fn table_grid(n: usize) -> (usize, usize) {
    let cols = (n as f64).sqrt().ceil() as usize;
    let cols = cols.max(1);
    (cols, n.div_ceil(cols))
}

/// Stitches object crops into a labeled grid of 224-px cells.
///
/// Crops are sorted by id and laid out left-to-right, top-to-bottom in
/// `⌈√N⌉` columns; each is scaled to fit its cell keeping aspect ratio and
/// carries its id in red at the cell's top-left corner.
pub fn build_visual_table(crops: &[(u32, RgbImage)]) -> Result<RgbImage, ProjectionError> {
    if crops.is_empty() {
        return Err(ProjectionError::EmptyCrops);
    }
    let mut sorted: Vec<&(u32, RgbImage)> = crops.iter().collect();
    sorted.sort_by_key(|(id, _)| *id);
    let (cols, rows) = table_grid(sorted.len());
    let cell = TABLE_CELL_PX;
    let mut table = RgbImage::from_pixel(cols as u32 * cell, rows as u32 * cell, Rgb([255, 255, 255]));
    for (i, (id, crop)) in sorted.into_iter().enumerate() {
        let (cx, cy) = ((i % cols) as u32 * cell, (i / cols) as u32 * cell);
        if crop.width() > 0 && crop.height() > 0 {
            let scale = (cell as f64 / crop.width() as f64).min(cell as f64 / crop.height() as f64);
            let w = ((crop.width() as f64 * scale).round() as u32).clamp(1, cell);
            let h = ((crop.height() as f64 * scale).round() as u32).clamp(1, cell);
            let resized = imageops::resize(crop, w, h, imageops::FilterType::Triangle);
            imageops::replace(
                &mut table,
                &resized,
                (cx + (cell - w) / 2) as i64,
                (cy + (cell - h) / 2) as i64,
            );
        }
        draw_text(
            &mut table,
            &id.to_string(),
            cx as i64 + 6,
            cy as i64 + 6,
            3,
            MARK_COLOR,
            Rgb([255, 255, 255]),
        );
    }
    Ok(table)
}
