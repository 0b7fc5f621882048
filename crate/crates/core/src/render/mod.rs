//! Holistic scene views: a bird's-eye camera plus a ring of oblique cameras,
//! rasterized from the point cloud with a software z-buffer and labeled for
//! the vision-language model.

mod annotate;
mod camera;
mod raster;

use std::path::Path;

use image::RgbImage;
use serde::Serialize;
use thiserror::Error;

pub use annotate::{annotate, draw_text, draw_text_centered, label_scale, text_extent, MARK_COLOR};
pub use camera::{
    bev_camera, holistic_distance, ring_cameras, ImagePoint, RenderCamera, DEGENERATE_DISTANCE_M, RING_ELEVATION_DEG,
};
pub use raster::{
    render, render_framebuffer, render_with, splat_radius, Framebuffer, RenderSettings, DEFAULT_POINT_SIZE_M,
};

use crate::scene::{PointCloud, SceneBounds, Vec3};

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("field of view {0}° outside (0, 180)")]
    InvalidFov(f64),
    #[error("invalid image size {0}x{1}")]
    InvalidImageSize(u32, u32),
    #[error("degenerate camera: {0}")]
    DegenerateCamera(String),
    #[error("at least one ring view is required")]
    NoViews,
    #[error("failed to write {path}: {message}")]
    Write { path: String, message: String },
}

/// An id label placed on a view image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Annotation {
    pub id: u32,
    pub u: f64,
    pub v: f64,
}

/// A holistic rendering. Index 0 is the bird's-eye view, `1..=n` the ring.
/// `image` already carries the index label in its top-left corner.
#[derive(Debug, Clone)]
pub struct RenderedView {
    pub view_index: u32,
    pub camera: RenderCamera,
    pub image: RgbImage,
    pub annotations: Vec<Annotation>,
}

impl RenderedView {
    /// Copy of this view with `ids` marked at the projections of `centers`.
    /// Centers behind the camera are left unmarked.
    pub fn annotated(&self, marks: &[(u32, Vec3)]) -> RenderedView {
        let annotations: Vec<Annotation> = marks
            .iter()
            .filter_map(|(id, p)| {
                self.camera.world_to_image(p).map(|ip| Annotation {
                    id: *id,
                    u: ip.u,
                    v: ip.v,
                })
            })
            .collect();
        let pixel_marks: Vec<(u32, (f64, f64))> = annotations.iter().map(|a| (a.id, (a.u, a.v))).collect();
        RenderedView {
            view_index: self.view_index,
            camera: self.camera,
            image: annotate(&self.image, &pixel_marks, Some(self.view_index)),
            annotations,
        }
    }
}

/// Cameras for the `n + 1` holistic views, bird's-eye first.
pub fn holistic_cameras(
    bounds: &SceneBounds,
    n_ring: usize,
    fov_deg: f64,
    image_size: (u32, u32),
) -> Result<Vec<RenderCamera>, RenderError> {
    let mut cams = vec![bev_camera(bounds, fov_deg, image_size)?];
    cams.extend(ring_cameras(n_ring, bounds, fov_deg, image_size)?);
    Ok(cams)
}

/// Renders and labels the bird's-eye view and `n_ring` ring views.
/// Views are rasterized on separate threads.
pub fn render_holistic_views(
    cloud: &PointCloud,
    bounds: &SceneBounds,
    n_ring: usize,
    fov_deg: f64,
    image_size: (u32, u32),
    settings: &RenderSettings,
) -> Result<Vec<RenderedView>, RenderError> {
    let cameras = holistic_cameras(bounds, n_ring, fov_deg, image_size)?;
    let images: Vec<RgbImage> = std::thread::scope(|s| {
        let handles: Vec<_> = cameras
            .iter()
            .map(|cam| s.spawn(move || render_with(cloud, cam, settings)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("render thread panicked"))
            .collect()
    });
    Ok(cameras
        .into_iter()
        .zip(images)
        .enumerate()
        .map(|(i, (camera, raw))| RenderedView {
            view_index: i as u32,
            camera,
            image: annotate(&raw, &[], Some(i as u32)),
            annotations: Vec::new(),
        })
        .collect())
}

/// Writes `view_<index>.png` (and `view_<index>_annotated.png` for views
/// carrying annotations) into `dir`.
pub fn write_views(dir: &Path, views: &[RenderedView], annotated: &[RenderedView]) -> Result<(), RenderError> {
    let save = |img: &RgbImage, name: String| {
        let path = dir.join(name);
        img.save(&path).map_err(|e| RenderError::Write {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    };
    std::fs::create_dir_all(dir).map_err(|e| RenderError::Write {
        path: dir.display().to_string(),
        message: e.to_string(),
    })?;
    for v in views {
        save(&v.image, format!("view_{}.png", v.view_index))?;
    }
    for v in annotated {
        save(&v.image, format!("view_{}_annotated.png", v.view_index))?;
    }
    Ok(())
}
