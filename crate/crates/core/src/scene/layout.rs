use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Aabb3, DetectedObject, SceneError, Vec3};

/// On-disk layout: `{"objects":[{"id":..,"class":..,"center":[..],"size":[..]}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutFile {
    pub objects: Vec<LayoutEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutEntry {
    pub id: u32,
    #[serde(rename = "class")]
    pub class_label: String,
    pub center: [f64; 3],
    pub size: [f64; 3],
}

impl From<&DetectedObject> for LayoutEntry {
    fn from(o: &DetectedObject) -> Self {
        Self {
            id: o.id,
            class_label: o.class_label.clone(),
            center: [o.bbox.center.x, o.bbox.center.y, o.bbox.center.z],
            size: [o.bbox.size.x, o.bbox.size.y, o.bbox.size.z],
        }
    }
}

pub fn normalize_label(label: &str) -> String {
    label.trim().to_lowercase()
}

pub(crate) fn parse_layout(text: &str) -> Result<Vec<DetectedObject>, SceneError> {
    let file: LayoutFile = serde_json::from_str(text).map_err(|e| SceneError::SchemaError(e.to_string()))?;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(file.objects.len());
    for entry in file.objects {
        if !seen.insert(entry.id) {
            return Err(SceneError::DuplicateId(entry.id));
        }
        let bbox = Aabb3::new(Vec3::from(entry.center), Vec3::from(entry.size))
            .map_err(|size| SceneError::NonPositiveSize { id: entry.id, size })?;
        let class_label = normalize_label(&entry.class_label);
        if class_label.is_empty() {
            return Err(SceneError::SchemaError(format!(
                "object {} has an empty class",
                entry.id
            )));
        }
        out.push(DetectedObject {
            id: entry.id,
            bbox,
            class_label,
        });
    }
    Ok(out)
}

/// Reads a detection layout; labels are lowercased and trimmed.
pub fn load_layout(path: &Path) -> Result<Vec<DetectedObject>, SceneError> {
    let text = fs::read_to_string(path).map_err(|e| SceneError::io(path, e))?;
    parse_layout(&text)
}

pub fn write_layout(path: &Path, objects: &[DetectedObject]) -> Result<(), SceneError> {
    let file = LayoutFile {
        objects: objects.iter().map(LayoutEntry::from).collect(),
    };
    let text = serde_json::to_string_pretty(&file).expect("layout serializes");
    fs::write(path, text + "\n").map_err(|e| SceneError::io(path, e))
}
