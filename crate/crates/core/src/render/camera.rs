use serde::{Deserialize, Serialize};

use super::RenderError;
use crate::scene::{SceneBounds, Vec3};

/// Elevation of the ring viewpoints above the horizontal plane through the
/// scene center.
pub const RING_ELEVATION_DEG: f64 = 45.0;

/// Distance used when the scene has no horizontal extent at all.
pub const DEGENERATE_DISTANCE_M: f64 = 1.0;

/// Virtual perspective camera used to render holistic views of a point cloud.
///
/// `fov_deg` is the horizontal field of view. The rasterizer uses square
/// pixels with a vertical field of view of `fov_deg * height / width`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderCamera {
    pub position: Vec3,
    pub target: Vec3,
    pub up_hint: Vec3,
    pub fov_deg: f64,
    pub width: u32,
    pub height: u32,
}

/// A point expressed in render-image coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImagePoint {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

impl ImagePoint {
    /// Pixel that owns this image position.
    pub fn pixel(&self) -> (i64, i64) {
        (self.u.round() as i64, self.v.round() as i64)
    }
}

impl RenderCamera {
    pub fn new(
        position: Vec3,
        target: Vec3,
        up_hint: Vec3,
        fov_deg: f64,
        image_size: (u32, u32),
    ) -> Result<Self, RenderError> {
        let cam = Self {
            position,
            target,
            up_hint,
            fov_deg,
            width: image_size.0,
            height: image_size.1,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<(), RenderError> {
        if !(self.fov_deg > 0.0 && self.fov_deg < 180.0) {
            return Err(RenderError::InvalidFov(self.fov_deg));
        }
        if self.width == 0 || self.height == 0 {
            return Err(RenderError::InvalidImageSize(self.width, self.height));
        }
        let forward = self.target - self.position;
        if forward.norm() == 0.0 {
            return Err(RenderError::DegenerateCamera("position equals target".into()));
        }
        if forward.normalize().cross(&self.up_hint).norm() < 1e-9 {
            return Err(RenderError::DegenerateCamera(
                "viewing direction is parallel to up hint".into(),
            ));
        }
        Ok(())
    }

    pub fn forward(&self) -> Vec3 {
        (self.target - self.position).normalize()
    }

    pub fn right(&self) -> Vec3 {
        self.forward().cross(&self.up_hint).normalize()
    }

    pub fn up(&self) -> Vec3 {
        self.right().cross(&self.forward())
    }

    pub fn distance(&self) -> f64 {
        (self.position - self.target).norm()
    }

    pub fn vertical_fov_deg(&self) -> f64 {
        self.fov_deg * self.height as f64 / self.width as f64
    }

    /// Focal length in pixels, `(height/2) / tan(vfov/2)`.
    pub fn focal_px(&self) -> f64 {
        (self.height as f64 / 2.0) / (self.vertical_fov_deg().to_radians() / 2.0).tan()
    }

    pub(crate) fn basis(&self) -> CameraBasis {
        let forward = self.forward();
        let right = forward.cross(&self.up_hint).normalize();
        let up = right.cross(&forward);
        CameraBasis {
            origin: self.position,
            forward,
            right,
            up,
            focal: self.focal_px(),
            cx: self.width as f64 / 2.0,
            cy: self.height as f64 / 2.0,
        }
    }

    /// Projects a world point; `None` when it is at or behind the camera.
    pub fn world_to_image(&self, p: &Vec3) -> Option<ImagePoint> {
        self.basis().project(p)
    }
}

/// Precomputed camera frame for the inner rasterization loop.
#[derive(Debug, Clone, Copy)]
pub(crate) struct CameraBasis {
    origin: Vec3,
    forward: Vec3,
    right: Vec3,
    up: Vec3,
    pub(crate) focal: f64,
    cx: f64,
    cy: f64,
}

impl CameraBasis {
    #[inline]
    pub(crate) fn project(&self, p: &Vec3) -> Option<ImagePoint> {
        let rel = p - self.origin;
        let depth = rel.dot(&self.forward);
        if depth <= 0.0 {
            return None;
        }
        let x = rel.dot(&self.right);
        let y = rel.dot(&self.up);
        Some(ImagePoint {
            u: self.cx + self.focal * x / depth,
            v: self.cy - self.focal * y / depth,
            depth,
        })
    }
}

/// Viewing distance that fits the larger horizontal extent in the field of
/// view: `d = ½ · max(l_x, l_y) / tan(θ/2)`.
pub fn holistic_distance(bounds: &SceneBounds, fov_deg: f64) -> f64 {
    let ext = bounds.extents();
    let d = 0.5 * ext.x.max(ext.y) / (fov_deg.to_radians() / 2.0).tan();
    if d > 0.0 {
        d
    } else {
        DEGENERATE_DISTANCE_M
    }
}

fn check_fov(fov_deg: f64) -> Result<(), RenderError> {
    if fov_deg > 0.0 && fov_deg < 180.0 {
        Ok(())
    } else {
        Err(RenderError::InvalidFov(fov_deg))
    }
}

/// Bird's-eye camera directly above the scene center, image-up along +y.
pub fn bev_camera(bounds: &SceneBounds, fov_deg: f64, image_size: (u32, u32)) -> Result<RenderCamera, RenderError> {
    check_fov(fov_deg)?;
    let center = bounds.center();
    let d = holistic_distance(bounds, fov_deg);
    RenderCamera::new(center + Vec3::new(0.0, 0.0, d), center, Vec3::y(), fov_deg, image_size)
}

/// `n` oblique cameras evenly spaced in azimuth around the scene center.
///
/// Azimuth 0 lies along +y ("front") and increases clockwise seen from
/// above, so for `n = 4` the cameras sit at front, right, back and left.
pub fn ring_cameras(
    n: usize,
    bounds: &SceneBounds,
    fov_deg: f64,
    image_size: (u32, u32),
) -> Result<Vec<RenderCamera>, RenderError> {
    check_fov(fov_deg)?;
    if n == 0 {
        return Err(RenderError::NoViews);
    }
    let center = bounds.center();
    let d = holistic_distance(bounds, fov_deg);
    let elev = RING_ELEVATION_DEG.to_radians();
    (0..n)
        .map(|k| {
            let az = (k as f64 * 360.0 / n as f64).to_radians();
            let offset = Vec3::new(d * elev.cos() * az.sin(), d * elev.cos() * az.cos(), d * elev.sin());
            RenderCamera::new(center + offset, center, Vec3::z(), fov_deg, image_size)
        })
        .collect()
}
