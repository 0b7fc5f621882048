use image::{Rgb, RgbImage};

use super::camera::RenderCamera;
use crate::scene::PointCloud;

pub const DEFAULT_POINT_SIZE_M: f64 = 0.02;
pub const MIN_SPLAT_RADIUS: i64 = 1;
pub const MAX_SPLAT_RADIUS: i64 = 7;

const BACKGROUND: Rgb<u8> = Rgb([255, 255, 255]);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderSettings {
    /// World-space diameter a point is drawn with before clamping.
    pub point_size_m: f64,
}

impl Default for RenderSettings {
    fn default() -> Self {
        Self {
            point_size_m: DEFAULT_POINT_SIZE_M,
        }
    }
}

/// Splat radius in pixels for a point at `depth`. A radius of `r` covers
/// the pixels with `dx² + dy² < r²` around the center pixel.
pub fn splat_radius(point_size_m: f64, focal_px: f64, depth: f64) -> i64 {
    ((point_size_m * focal_px / depth).round() as i64).clamp(MIN_SPLAT_RADIUS, MAX_SPLAT_RADIUS)
}

/// Color image plus the per-pixel depth of the winning point (`inf` where empty).
pub struct Framebuffer {
    pub image: RgbImage,
    pub depth: Vec<f64>,
}

/// Perspective point-splat rasterization with a z-buffer.
///
/// Each point covers a disk whose radius scales with inverse depth; the
/// nearest point wins every pixel, ties keep the earlier point. Points at or
/// behind the camera are culled. Background is white.
pub fn render_framebuffer(cloud: &PointCloud, camera: &RenderCamera, settings: &RenderSettings) -> Framebuffer {
    let (w, h) = (camera.width as i64, camera.height as i64);
    let mut image = RgbImage::from_pixel(camera.width, camera.height, BACKGROUND);
    let mut depth = vec![f64::INFINITY; (w * h) as usize];
    let basis = camera.basis();

    for point in cloud.points() {
        let Some(ip) = basis.project(&point.position) else {
            continue;
        };
        let (px, py) = ip.pixel();
        let r = splat_radius(settings.point_size_m, basis.focal, ip.depth);
        let reach = r - 1;
        if px + reach < 0 || py + reach < 0 || px - reach >= w || py - reach >= h {
            continue;
        }
        let color = Rgb(point.color);
        for dy in -reach..=reach {
            let y = py + dy;
            if y < 0 || y >= h {
                continue;
            }
            for dx in -reach..=reach {
                let x = px + dx;
                if x < 0 || x >= w || dx * dx + dy * dy >= r * r {
                    continue;
                }
                let idx = (y * w + x) as usize;
                if ip.depth < depth[idx] {
                    depth[idx] = ip.depth;
                    image.put_pixel(x as u32, y as u32, color);
                }
            }
        }
    }
    Framebuffer { image, depth }
}

pub fn render(cloud: &PointCloud, camera: &RenderCamera) -> RgbImage {
    render_with(cloud, camera, &RenderSettings::default())
}

pub fn render_with(cloud: &PointCloud, camera: &RenderCamera, settings: &RenderSettings) -> RgbImage {
    render_framebuffer(cloud, camera, settings).image
}
