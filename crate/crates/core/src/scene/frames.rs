use std::fs;
use std::path::{Path, PathBuf};

use image::DynamicImage;
use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};

use super::{invert_rigid, CameraFrame, CameraIntrinsics, DepthMap, SceneError};

/// Raw depth units per meter (millimeters).
pub const DEFAULT_DEPTH_SHIFT: f64 = 1000.0;

fn default_depth_shift() -> f64 {
    DEFAULT_DEPTH_SHIFT
}

/// `intrinsics.json` inside a frames directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameIntrinsicsFile {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    #[serde(default = "default_depth_shift")]
    pub depth_shift: f64,
}

pub fn write_intrinsics(dir: &Path, file: &FrameIntrinsicsFile) -> Result<(), SceneError> {
    let path = dir.join("intrinsics.json");
    let text = serde_json::to_string_pretty(file).expect("intrinsics serialize");
    fs::write(&path, text + "\n").map_err(|e| SceneError::io(&path, e))
}

fn read_intrinsics(dir: &Path) -> Result<(CameraIntrinsics, f64), SceneError> {
    let path = dir.join("intrinsics.json");
    let text = fs::read_to_string(&path).map_err(|_| SceneError::MissingIntrinsics(path.clone()))?;
    let file: FrameIntrinsicsFile =
        serde_json::from_str(&text).map_err(|e| SceneError::InvalidIntrinsics(format!("{}: {e}", path.display())))?;
    if file.depth_shift.is_nan() || file.depth_shift <= 0.0 {
        return Err(SceneError::InvalidIntrinsics(format!(
            "depth_shift must be positive, got {}",
            file.depth_shift
        )));
    }
    let k = CameraIntrinsics::new(file.fx, file.fy, file.cx, file.cy, file.width, file.height)?;
    Ok((k, file.depth_shift))
}

pub(crate) fn parse_pose(text: &str) -> Result<Matrix4<f64>, String> {
    let vals: Vec<f64> = text
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| format!("`{t}` is not a number")))
        .collect::<Result<_, _>>()?;
    if vals.len() != 16 {
        return Err(format!("expected 16 values, found {}", vals.len()));
    }
    Ok(Matrix4::from_row_slice(&vals))
}

fn load_depth(path: &Path, frame: &str, k: &CameraIntrinsics, shift: f64) -> Result<DepthMap, SceneError> {
    let img = image::open(path).map_err(|e| SceneError::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let raw = match img {
        DynamicImage::ImageLuma16(buf) => buf,
        other => {
            return Err(SceneError::Image {
                path: path.to_path_buf(),
                message: format!("depth must be 16-bit grayscale, found {:?}", other.color()),
            })
        }
    };
    let (w, h) = raw.dimensions();
    if w == 0 || h == 0 {
        return Err(SceneError::DepthSizeMismatch {
            frame: frame.to_string(),
            got: (w, h),
            expected: (k.width, k.height),
        });
    }
    let data = raw.pixels().map(|p| (p.0[0] as f64 / shift) as f32).collect();
    let depth = DepthMap::new(w, h, data);
    if (w, h) == (k.width, k.height) {
        Ok(depth)
    } else {
        log::debug!("frame {frame}: rescaling depth {w}x{h} -> {}x{}", k.width, k.height);
        Ok(depth.resized_nearest(k.width, k.height))
    }
}

fn color_path(dir: &Path, frame: &str) -> Option<PathBuf> {
    ["png", "jpg", "jpeg"]
        .iter()
        .map(|ext| dir.join("color").join(format!("{frame}.{ext}")))
        .find(|p| p.is_file())
}

/// Loads every frame that has a pose file under `dir/pose/`.
///
/// Poses on disk are camera-to-world and are inverted to world-to-camera.
/// Frames whose pose contains non-finite values (scan exporters mark lost
/// tracking that way) are skipped.
pub fn load_camera_frames(dir: &Path) -> Result<Vec<CameraFrame>, SceneError> {
    let (intrinsics, depth_shift) = read_intrinsics(dir)?;
    let pose_dir = dir.join("pose");
    let entries = fs::read_dir(&pose_dir).map_err(|e| SceneError::io(&pose_dir, e))?;
    let mut ids: Vec<String> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .filter_map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()))
        .collect();
    ids.sort();

    let mut frames = Vec::with_capacity(ids.len());
    for id in ids {
        let pose_path = pose_dir.join(format!("{id}.txt"));
        let text = fs::read_to_string(&pose_path).map_err(|e| SceneError::io(&pose_path, e))?;
        let cam_to_world = parse_pose(&text).map_err(|reason| SceneError::NonInvertiblePose {
            frame: id.clone(),
            reason,
        })?;
        if !cam_to_world.iter().all(|v| v.is_finite()) {
            log::warn!("frame {id}: non-finite pose, skipped");
            continue;
        }
        let world_to_camera = invert_rigid(&cam_to_world).map_err(|reason| SceneError::NonInvertiblePose {
            frame: id.clone(),
            reason,
        })?;
        let depth = load_depth(
            &dir.join("depth").join(format!("{id}.png")),
            &id,
            &intrinsics,
            depth_shift,
        )?;
        let rgb_path = color_path(dir, &id).ok_or_else(|| SceneError::MissingColor(id.clone()))?;
        frames.push(CameraFrame {
            frame_id: id,
            intrinsics,
            world_to_camera,
            depth,
            rgb_path,
        });
    }
    Ok(frames)
}
