//! Offline stand-in for a vision-language model that answers every pipeline
//! stage correctly from ground truth.
//!
//! Stage rules:
//! - target class: the ground-truth object's class;
//! - view selection: the view in which the target box covers the largest
//!   clipped on-screen area (ties to the lower index);
//! - candidate screening: the target first, then listed objects of the same
//!   class by increasing center distance to it, truncated to `k`;
//! - visual fallback: every listed object sharing the target's class;
//! - joint decision: the target id.

use std::collections::HashMap;
use std::sync::Mutex;

use serde_json::json;

use super::{Completion, VlmBackend, VlmError, VlmRequest};
use crate::agent::prompts::{extract_id_list, extract_top_k, Stage};
use crate::render::RenderCamera;
use crate::scene::{Aabb3, DetectedObject};

pub struct OracleBackend {
    objects: HashMap<u32, DetectedObject>,
    queries: HashMap<String, u32>,
    view_cameras: Vec<RenderCamera>,
    // Serializes calls so concurrent use sees a well-defined order.
    gate: Mutex<()>,
}

/// Area in pixels of the image-clipped 2D bounds of the box's projected
/// vertices. Vertices behind the camera are ignored.
pub fn projected_area(camera: &RenderCamera, bbox: &Aabb3) -> f64 {
    let pts: Vec<(f64, f64)> = bbox.key_points()[..8]
        .iter()
        .filter_map(|p| camera.world_to_image(p))
        .map(|ip| (ip.u, ip.v))
        .collect();
    if pts.is_empty() {
        return 0.0;
    }
    let (w, h) = (camera.width as f64, camera.height as f64);
    let u0 = pts.iter().map(|p| p.0).fold(f64::MAX, f64::min).clamp(0.0, w);
    let u1 = pts.iter().map(|p| p.0).fold(f64::MIN, f64::max).clamp(0.0, w);
    let v0 = pts.iter().map(|p| p.1).fold(f64::MAX, f64::min).clamp(0.0, h);
    let v1 = pts.iter().map(|p| p.1).fold(f64::MIN, f64::max).clamp(0.0, h);
    (u1 - u0) * (v1 - v0)
}

impl OracleBackend {
    pub fn new<I>(objects: &[DetectedObject], queries: I, view_cameras: Vec<RenderCamera>) -> Self
    where
        I: IntoIterator<Item = (String, u32)>,
    {
        Self {
            objects: objects.iter().map(|o| (o.id, o.clone())).collect(),
            queries: queries.into_iter().collect(),
            view_cameras,
            gate: Mutex::new(()),
        }
    }

    fn target_for(&self, prompt: &str) -> Result<&DetectedObject, VlmError> {
        let (_, id) = self
            .queries
            .iter()
            .filter(|(text, _)| prompt.contains(&format!("\"{text}\"")))
            .max_by_key(|(text, _)| text.len())
            .ok_or_else(|| VlmError::Oracle("prompt matches no known query".into()))?;
        self.objects
            .get(id)
            .ok_or_else(|| VlmError::Oracle(format!("ground-truth id {id} is not in the layout")))
    }

    pub fn best_view(&self, bbox: &Aabb3) -> usize {
        let mut best = (0, f64::MIN);
        for (i, cam) in self.view_cameras.iter().enumerate() {
            let area = projected_area(cam, bbox);
            if area > best.1 {
                best = (i, area);
            }
        }
        best.0
    }

    fn answer(&self, prompt: &str) -> Result<String, VlmError> {
        let stage = Stage::detect(prompt).ok_or_else(|| VlmError::Oracle("unrecognized prompt".into()))?;
        let target = self.target_for(prompt)?;
        let listed = || extract_id_list(prompt).ok_or_else(|| VlmError::Oracle("prompt carries no id list".into()));
        let same_class = |id: &u32| {
            self.objects
                .get(id)
                .is_some_and(|o| o.class_label == target.class_label)
        };
        let value = match stage {
            Stage::TargetClass => json!({"target_class": target.class_label}),
            Stage::ViewSelection => json!({
                "reasoning": "largest on-screen extent of the target",
                "view": self.best_view(&target.bbox).to_string(),
            }),
            Stage::VisualFallback => {
                let ids: Vec<u32> = listed()?.into_iter().filter(same_class).collect();
                json!({"reasoning": "same category as the target", "object_id": ids})
            }
            Stage::CandidateScreening => {
                let k = extract_top_k(prompt).unwrap_or(usize::MAX);
                let listed = listed()?;
                let mut others: Vec<(f64, u32)> = listed
                    .iter()
                    .filter(|id| **id != target.id && same_class(id))
                    .map(|id| ((self.objects[id].bbox.center - target.bbox.center).norm(), *id))
                    .collect();
                others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let ids: Vec<u32> = listed
                    .iter()
                    .copied()
                    .filter(|id| *id == target.id)
                    .chain(others.into_iter().map(|(_, id)| id))
                    .take(k)
                    .collect();
                json!({"reasoning": "target first, then nearest same-class objects", "object_id": ids})
            }
            Stage::JointDecision => json!({"reasoning": "ground truth", "object_id": target.id}),
        };
        Ok(value.to_string())
    }
}

impl VlmBackend for OracleBackend {
    fn complete(&self, request: &VlmRequest) -> Result<Completion, VlmError> {
        request.validate()?;
        let _guard = self.gate.lock().expect("oracle lock");
        let text = self.answer(&request.text())?;
        Ok(Completion { text, retries: 0 })
    }

    fn kind(&self) -> &'static str {
        "oracle"
    }
}
