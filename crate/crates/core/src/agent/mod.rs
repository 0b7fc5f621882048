//! The staged grounding pipeline.
//!
//! A run predicts the target class, picks one holistic view, narrows the
//! detections to anchors of that class, screens them down to `k`
//! candidates on the annotated view and finally decides between the
//! candidates using the view together with each candidate's keyframe.
//!
//! Every model call is re-asked once when its reply cannot be used. A second
//! failure falls back to a fixed default and the stage is named in
//! [`GroundingTrace::fallbacks_taken`], so a run always ends with an answer.

pub mod prompts;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;
use std::sync::{Arc, Mutex, OnceLock};

use image::RgbImage;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::projection::{
    build_visual_table, crop_image, project_points, select_keyframe, DepthTolerance, KeyframeAssignment,
    DEFAULT_DEPTH_TOL_M, DEFAULT_REL_DEPTH_TOL,
};
use crate::render::{annotate, render_holistic_views, RenderSettings, RenderedView, DEFAULT_POINT_SIZE_M};
use crate::scene::{Aabb3, DetectedObject, Scene, Vec3};
use crate::vlm::{parse_json_payload, ContentPart, VlmBackend, VlmRequest, DEFAULT_MAX_ATTEMPTS, DEFAULT_TEMPERATURE};
use prompts::Stage;

pub const DEFAULT_N_VIEWS: usize = 4;
pub const DEFAULT_TOP_K: usize = 4;
pub const DEFAULT_TAU: f64 = 0.8;
pub const DEFAULT_FOV_DEG: f64 = 60.0;
pub const DEFAULT_IMAGE_SIZE: u32 = 1024;
pub const MAX_TOP_K: usize = 10;

/// Class string that never takes the text-matching path.
pub const UNKNOWN_CLASS: &str = "unknown";
/// Fallback name recorded when anchor filtering keeps every detection.
pub const FILTER_ALL: &str = "filter_all";
/// Score given to a pair where one class name contains the other.
pub const SUBSTRING_SCORE: f64 = 0.8;

/// Replies per stage: the first ask plus one re-ask.
const ASKS_PER_STAGE: usize = 2;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("scene has no detected objects")]
    EmptyDetections,
    #[error("query text is empty")]
    EmptyQuery,
    #[error("invalid pipeline configuration: {0}")]
    InvalidConfig(String),
    #[error("rendering failed: {0}")]
    Render(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Ring views around the scene; the bird's-eye view comes on top.
    pub n_views: usize,
    pub top_k: usize,
    /// Minimum class-name similarity for the text-matching path.
    pub tau: f64,
    /// Horizontal field of view of the holistic renderings.
    pub fov_deg: f64,
    pub depth_tol_m: f64,
    pub rel_depth_tol: f64,
    /// Side length of the square holistic renderings.
    pub image_size: u32,
    pub point_size_m: f64,
    pub temperature: f64,
    pub max_attempts: u32,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            n_views: DEFAULT_N_VIEWS,
            top_k: DEFAULT_TOP_K,
            tau: DEFAULT_TAU,
            fov_deg: DEFAULT_FOV_DEG,
            depth_tol_m: DEFAULT_DEPTH_TOL_M,
            rel_depth_tol: DEFAULT_REL_DEPTH_TOL,
            image_size: DEFAULT_IMAGE_SIZE,
            point_size_m: DEFAULT_POINT_SIZE_M,
            temperature: DEFAULT_TEMPERATURE,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let fail = |m: String| Err(AgentError::InvalidConfig(m));
        if self.n_views < 1 {
            return fail("n_views must be at least 1".into());
        }
        if !(1..=MAX_TOP_K).contains(&self.top_k) {
            return fail(format!("top_k must be in 1..={MAX_TOP_K}, got {}", self.top_k));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return fail(format!("tau must be in [0, 1], got {}", self.tau));
        }
        if !(self.fov_deg > 0.0 && self.fov_deg < 180.0) {
            return fail(format!("fov_deg must be in (0, 180), got {}", self.fov_deg));
        }
        if !(self.depth_tol_m >= 0.0 && self.rel_depth_tol >= 0.0) {
            return fail("depth tolerances must be non-negative".into());
        }
        if self.image_size < 16 {
            return fail(format!("image_size must be at least 16, got {}", self.image_size));
        }
        if self.point_size_m.is_nan() || self.point_size_m <= 0.0 {
            return fail("point_size_m must be positive".into());
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return fail(format!("temperature must be in [0, 2], got {}", self.temperature));
        }
        if self.max_attempts < 1 {
            return fail("max_attempts must be at least 1".into());
        }
        Ok(())
    }

    pub fn depth_tolerance(&self) -> DepthTolerance {
        DepthTolerance {
            abs_m: self.depth_tol_m,
            rel: self.rel_depth_tol,
        }
    }

    pub fn render_settings(&self) -> RenderSettings {
        RenderSettings {
            point_size_m: self.point_size_m,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingQuery {
    pub text: String,
    #[serde(default)]
    pub gt_id: Option<u32>,
    #[serde(default)]
    pub gt_box: Option<Aabb3>,
}

impl GroundingQuery {
    pub fn new(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            gt_id: None,
            gt_box: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingResult {
    pub final_id: u32,
    pub final_box: Aabb3,
}

/// Raw replies and failures of one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub responses: Vec<String>,
    pub errors: Vec<String>,
    pub transport_retries: u32,
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingTrace {
    pub query: String,
    pub predicted_class: String,
    /// Detection class accepted by text matching.
    pub matched_class: Option<String>,
    pub match_score: f64,
    pub used_visual_fallback: bool,
    pub selected_view: u32,
    pub filtered_ids: Vec<u32>,
    pub topk_ids: Vec<u32>,
    pub screening_skipped: bool,
    pub keyframes: Vec<KeyframeAssignment>,
    /// Candidates without any frame seeing one of their key points.
    pub missing_keyframes: Vec<u32>,
    pub final_id: u32,
    pub final_box: Aabb3,
    pub stages: Vec<StageRecord>,
    pub fallbacks_taken: Vec<String>,
    pub vlm_calls: u32,
    pub backend: String,
    pub config: PipelineConfig,
}

/// Images shown to the model during a run, keyed by file stem.
#[derive(Debug, Clone, Default)]
pub struct Artifacts {
    pub images: Vec<(String, RgbImage)>,
}

impl Artifacts {
    /// Saves each image as `<prefix>_<name>.png`.
    pub fn write(&self, dir: &Path, prefix: &str) -> Result<(), image::ImageError> {
        std::fs::create_dir_all(dir)?;
        for (name, img) in &self.images {
            img.save(dir.join(format!("{prefix}_{name}.png")))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct GroundingOutcome {
    pub result: GroundingResult,
    pub trace: GroundingTrace,
    pub artifacts: Artifacts,
}

/// Similarity of two class names in `[0, 1]`.
///
/// Lowercased names score the larger of their normalized Levenshtein
/// similarity and [`SUBSTRING_SCORE`] when one contains the other.
pub fn similarity(a: &str, b: &str) -> f64 {
    let (a, b) = (a.trim().to_lowercase(), b.trim().to_lowercase());
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let lev = strsim::normalized_levenshtein(&a, &b);
    if a.contains(&b) || b.contains(&a) {
        lev.max(SUBSTRING_SCORE)
    } else {
        lev
    }
}

/// Detection class most similar to `target`, with its score. Ties go to the
/// class of the lowest id.
pub fn best_class_match(target: &str, detections: &[DetectedObject]) -> Option<(String, f64)> {
    let mut sorted: Vec<&DetectedObject> = detections.iter().collect();
    sorted.sort_by_key(|d| d.id);
    let mut best: Option<(String, f64)> = None;
    for d in sorted {
        let s = similarity(target, &d.class_label);
        if best.as_ref().is_none_or(|(_, b)| s > *b) {
            best = Some((d.class_label.clone(), s));
        }
    }
    best
}

fn ids_of(value: &Value) -> Result<Vec<u32>, String> {
    let one = |v: &Value| -> Result<u32, String> {
        match v {
            Value::Number(n) => n.as_u64().and_then(|n| u32::try_from(n).ok()),
            Value::String(s) => s.trim().parse().ok(),
            _ => None,
        }
        .ok_or_else(|| format!("{v} is not an object id"))
    };
    match value {
        Value::Array(items) => items.iter().map(one).collect(),
        other => one(other).map(|id| vec![id]),
    }
}

fn field<'v>(reply: &'v Value, key: &str) -> Result<&'v Value, String> {
    reply.get(key).ok_or_else(|| format!("reply has no \"{key}\" key"))
}

fn dedup(ids: impl IntoIterator<Item = u32>) -> Vec<u32> {
    let mut seen = HashSet::new();
    ids.into_iter().filter(|id| seen.insert(*id)).collect()
}

/// Sends stage prompts and keeps the record of a single run.
pub struct StageRunner<'b> {
    backend: &'b dyn VlmBackend,
    temperature: f64,
    max_attempts: u32,
    pub stages: Vec<StageRecord>,
    pub fallbacks_taken: Vec<String>,
    pub vlm_calls: u32,
}

impl<'b> StageRunner<'b> {
    pub fn new(backend: &'b dyn VlmBackend, config: &PipelineConfig) -> Self {
        Self {
            backend,
            temperature: config.temperature,
            max_attempts: config.max_attempts,
            stages: Vec::new(),
            fallbacks_taken: Vec::new(),
            vlm_calls: 0,
        }
    }

    /// Asks until `parse` accepts a reply, at most twice. Returns `None` and
    /// marks the stage as fallen back when both replies are unusable.
    fn ask<T>(
        &mut self,
        stage: Stage,
        prompt: &str,
        images: &[Arc<RgbImage>],
        parse: impl Fn(&Value) -> Result<T, String>,
    ) -> Option<T> {
        let mut record = StageRecord {
            stage,
            responses: Vec::new(),
            errors: Vec::new(),
            transport_retries: 0,
            fallback: false,
        };
        let mut answer = None;
        for attempt in 0..ASKS_PER_STAGE {
            let text = if attempt == 0 {
                prompt.to_string()
            } else {
                format!("{prompt}{}", prompts::REASK_SUFFIX)
            };
            let mut parts: Vec<ContentPart> = images.iter().cloned().map(ContentPart::Image).collect();
            parts.push(ContentPart::Text(text));
            let request = VlmRequest {
                parts,
                temperature: self.temperature,
                max_attempts: self.max_attempts,
            };
            self.vlm_calls += 1;
            let reply = match self.backend.complete(&request) {
                Ok(c) => c,
                Err(e) => {
                    log::warn!("{} call failed: {e}", stage.name());
                    record.errors.push(e.to_string());
                    continue;
                }
            };
            record.transport_retries += reply.retries;
            record.responses.push(reply.text.clone());
            let parsed = parse_json_payload(&reply.text)
                .map_err(|e| e.to_string())
                .and_then(|v| parse(&v));
            match parsed {
                Ok(v) => {
                    answer = Some(v);
                    break;
                }
                Err(e) => record.errors.push(e),
            }
        }
        if answer.is_none() {
            record.fallback = true;
            self.fallbacks_taken.push(stage.name().to_string());
        }
        self.stages.push(record);
        answer
    }

    /// Target class named by the query, or [`UNKNOWN_CLASS`].
    pub fn predict_target_class(&mut self, text: &str) -> String {
        let prompt = prompts::target_class_prompt(text);
        self.ask(Stage::TargetClass, &prompt, &[], |v| {
            let s = field(v, "target_class")?
                .as_str()
                .ok_or("target_class is not a string")?;
            let s = crate::scene::normalize_label(s);
            if s.is_empty() {
                Err("target_class is empty".into())
            } else {
                Ok(s)
            }
        })
        .unwrap_or_else(|| UNKNOWN_CLASS.to_string())
    }

    /// Index of the chosen view in `0..views.len()`, or 0 (bird's-eye).
    pub fn select_view(&mut self, views: &[Arc<RgbImage>], target_class: &str, text: &str) -> u32 {
        let prompt = prompts::view_selection_prompt(target_class, text);
        let n = views.len() as u32;
        self.ask(Stage::ViewSelection, &prompt, views, |v| {
            let ids = ids_of(field(v, "view")?)?;
            match ids.as_slice() {
                [i] if *i < n => Ok(*i),
                [i] => Err(format!("view {i} out of range 0..{n}")),
                _ => Err("expected a single view index".into()),
            }
        })
        .unwrap_or(0)
    }

    /// Ids among `table_ids` that the model assigns to `target_class`.
    /// `None` when both replies are unusable or empty.
    pub fn visual_fallback(
        &mut self,
        table: Arc<RgbImage>,
        table_ids: &[u32],
        target_class: &str,
        text: &str,
    ) -> Option<Vec<u32>> {
        let prompt = prompts::visual_fallback_prompt(target_class, text, table_ids);
        let valid: HashSet<u32> = table_ids.iter().copied().collect();
        self.ask(Stage::VisualFallback, &prompt, &[table], |v| {
            let ids: Vec<u32> = dedup(
                ids_of(field(v, "object_id")?)?
                    .into_iter()
                    .filter(|id| valid.contains(id)),
            );
            if ids.is_empty() {
                Err("no listed id returned".into())
            } else {
                let mut ids = ids;
                ids.sort_unstable();
                Ok(ids)
            }
        })
    }

    /// Up to `k` ids from `valid_ids`, best first.
    ///
    /// When at most `k` ids are valid no call is made and they are returned
    /// ascending. `fallback_order` supplies the default ranking used when
    /// the model names no valid id.
    pub fn screen_candidates(
        &mut self,
        view: Arc<RgbImage>,
        valid_ids: &[u32],
        fallback_order: &[u32],
        target_class: &str,
        text: &str,
        k: usize,
    ) -> (Vec<u32>, bool) {
        if valid_ids.len() <= k {
            let mut ids = valid_ids.to_vec();
            ids.sort_unstable();
            return (ids, true);
        }
        let prompt = prompts::candidate_screening_prompt(target_class, text, k, valid_ids);
        let valid: HashSet<u32> = valid_ids.iter().copied().collect();
        let ids = self
            .ask(Stage::CandidateScreening, &prompt, &[view], |v| {
                let ids: Vec<u32> = dedup(
                    ids_of(field(v, "object_id")?)?
                        .into_iter()
                        .filter(|id| valid.contains(id)),
                );
                if ids.is_empty() {
                    Err("no valid candidate id returned".into())
                } else {
                    Ok(ids.into_iter().take(k).collect())
                }
            })
            .unwrap_or_else(|| fallback_order.iter().copied().take(k).collect());
        (ids, false)
    }

    /// The chosen id among `topk_ids`, or the first of them.
    pub fn joint_decision(
        &mut self,
        global_view: Arc<RgbImage>,
        keyframes: &[Arc<RgbImage>],
        target_class: &str,
        text: &str,
        topk_ids: &[u32],
    ) -> u32 {
        let prompt = prompts::joint_decision_prompt(target_class, text, topk_ids);
        let mut images = vec![global_view];
        images.extend(keyframes.iter().cloned());
        self.ask(Stage::JointDecision, &prompt, &images, |v| {
            let ids = ids_of(field(v, "object_id")?)?;
            match ids.as_slice() {
                [id] if topk_ids.contains(id) => Ok(*id),
                [id] => Err(format!("object id {id} is not a candidate")),
                _ => Err("expected a single object id".into()),
            }
        })
        .unwrap_or(topk_ids[0])
    }
}

struct ViewSet {
    views: Vec<RenderedView>,
    images: Vec<Arc<RgbImage>>,
}

/// Grounds queries against one scene.
///
/// Holistic views, keyframes and camera images are computed on first use
/// and shared by later queries, including concurrent ones.
pub struct Grounder<'s> {
    scene: &'s Scene,
    config: PipelineConfig,
    views: OnceLock<Result<ViewSet, String>>,
    keyframes: OnceLock<BTreeMap<u32, Option<KeyframeAssignment>>>,
    frame_images: Mutex<HashMap<String, Option<Arc<RgbImage>>>>,
}

impl<'s> Grounder<'s> {
    pub fn new(scene: &'s Scene, config: PipelineConfig) -> Result<Self, AgentError> {
        config.validate()?;
        if scene.detections.is_empty() {
            return Err(AgentError::EmptyDetections);
        }
        Ok(Self {
            scene,
            config,
            views: OnceLock::new(),
            keyframes: OnceLock::new(),
            frame_images: Mutex::new(HashMap::new()),
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    fn view_set(&self) -> Result<&ViewSet, AgentError> {
        self.views
            .get_or_init(|| {
                let c = &self.config;
                render_holistic_views(
                    &self.scene.cloud,
                    &self.scene.bounds,
                    c.n_views,
                    c.fov_deg,
                    (c.image_size, c.image_size),
                    &c.render_settings(),
                )
                .map(|views| ViewSet {
                    images: views.iter().map(|v| Arc::new(v.image.clone())).collect(),
                    views,
                })
                .map_err(|e| e.to_string())
            })
            .as_ref()
            .map_err(|e| AgentError::Render(e.clone()))
    }

    /// Bird's-eye view followed by the ring views, each labeled with its index.
    pub fn views(&self) -> Result<&[RenderedView], AgentError> {
        Ok(&self.view_set()?.views)
    }

    /// Keyframe of every detection; `None` where no frame sees the object.
    pub fn keyframes(&self) -> &BTreeMap<u32, Option<KeyframeAssignment>> {
        self.keyframes.get_or_init(|| {
            let tol = self.config.depth_tolerance();
            self.scene
                .detections
                .iter()
                .map(|d| (d.id, select_keyframe(d.id, &d.bbox, &self.scene.frames, &tol).ok()))
                .collect()
        })
    }

    fn frame_image(&self, frame_id: &str) -> Option<Arc<RgbImage>> {
        if let Some(hit) = self.frame_images.lock().expect("image cache").get(frame_id) {
            return hit.clone();
        }
        let loaded = self
            .scene
            .frames
            .iter()
            .find(|f| f.frame_id == frame_id)
            .and_then(|f| match f.load_rgb() {
                Ok(img) => Some(Arc::new(img)),
                Err(e) => {
                    log::warn!("frame {frame_id}: {e}");
                    None
                }
            });
        self.frame_images
            .lock()
            .expect("image cache")
            .insert(frame_id.to_string(), loaded.clone());
        loaded
    }

    /// Grid of keyframe crops for every detection that has a keyframe.
    fn visual_table(&self) -> Option<(Vec<u32>, RgbImage)> {
        let crops: Vec<(u32, RgbImage)> = self
            .keyframes()
            .iter()
            .filter_map(|(id, kf)| {
                let kf = kf.as_ref()?;
                let img = self.frame_image(&kf.frame_id)?;
                Some((*id, crop_image(&img, &kf.crop_rect)))
            })
            .collect();
        let ids = crops.iter().map(|(id, _)| *id).collect();
        build_visual_table(&crops).ok().map(|t| (ids, t))
    }

    /// Keyframe image with `object`'s id at its projected box center.
    fn keyframe_image(&self, object: &DetectedObject, kf: &KeyframeAssignment) -> Option<RgbImage> {
        let frame = self.scene.frames.iter().find(|f| f.frame_id == kf.frame_id)?;
        let img = self.frame_image(&kf.frame_id)?;
        let center = project_points(&frame.intrinsics, &frame.world_to_camera, &[object.bbox.center])[0];
        let marks: Vec<(u32, (f64, f64))> = if center.in_front {
            vec![(object.id, (center.u, center.v))]
        } else {
            Vec::new()
        };
        Some(annotate(&img, &marks, None))
    }

    fn marks(&self, ids: &[u32]) -> Vec<(u32, Vec3)> {
        ids.iter()
            .filter_map(|id| self.scene.detection(*id).map(|d| (*id, d.bbox.center)))
            .collect()
    }

    /// `ids` ordered by distance of their box center to the scene center.
    fn by_center_distance(&self, ids: &[u32]) -> Vec<u32> {
        let c = self.scene.bounds.center();
        let mut keyed: Vec<(f64, u32)> = ids
            .iter()
            .filter_map(|id| self.scene.detection(*id).map(|d| ((d.bbox.center - c).norm(), *id)))
            .collect();
        keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        keyed.into_iter().map(|(_, id)| id).collect()
    }

    pub fn ground(&self, backend: &dyn VlmBackend, query: &GroundingQuery) -> Result<GroundingOutcome, AgentError> {
        let text = query.text.trim();
        if text.is_empty() {
            return Err(AgentError::EmptyQuery);
        }
        let views = self.view_set()?;
        let detections = &self.scene.detections;
        let mut runner = StageRunner::new(backend, &self.config);
        let mut artifacts = Artifacts::default();

        let predicted_class = runner.predict_target_class(text);
        let selected_view = runner.select_view(&views.images, &predicted_class, text);
        let view = &views.views[selected_view as usize];

        let best = best_class_match(&predicted_class, detections);
        let match_score = best.as_ref().map_or(0.0, |(_, s)| *s);
        let text_match = best.filter(|(_, s)| predicted_class != UNKNOWN_CLASS && *s >= self.config.tau);
        let used_visual_fallback = text_match.is_none();
        let mut filtered_ids: Vec<u32> = match &text_match {
            Some((class, _)) => detections
                .iter()
                .filter(|d| &d.class_label == class)
                .map(|d| d.id)
                .collect(),
            None => {
                let picked = self.visual_table().and_then(|(table_ids, table)| {
                    let table = Arc::new(table);
                    artifacts.images.push(("visual_table".into(), (*table).clone()));
                    runner.visual_fallback(table, &table_ids, &predicted_class, text)
                });
                picked.unwrap_or_else(|| {
                    runner.fallbacks_taken.push(FILTER_ALL.to_string());
                    detections.iter().map(|d| d.id).collect()
                })
            }
        };
        filtered_ids.sort_unstable();
        filtered_ids.dedup();

        let screening_view = view.annotated(&self.marks(&filtered_ids));
        let fallback_order = self.by_center_distance(&filtered_ids);
        let (topk_ids, screening_skipped) = runner.screen_candidates(
            Arc::new(screening_view.image.clone()),
            &filtered_ids,
            &fallback_order,
            &predicted_class,
            text,
            self.config.top_k,
        );
        artifacts.images.push(("screening_view".into(), screening_view.image));

        let all_keyframes = self.keyframes();
        let mut keyframes = Vec::new();
        let mut missing_keyframes = Vec::new();
        let mut keyframe_images = Vec::new();
        for (rank, id) in topk_ids.iter().enumerate() {
            let object = self
                .scene
                .detection(*id)
                .expect("candidate ids come from the detections");
            match all_keyframes.get(id).and_then(Option::as_ref) {
                Some(kf) => {
                    if let Some(img) = self.keyframe_image(object, kf) {
                        artifacts.images.push((format!("keyframe_{rank}_{id}"), img.clone()));
                        keyframe_images.push(Arc::new(img));
                    }
                    keyframes.push(kf.clone());
                }
                None => missing_keyframes.push(*id),
            }
        }

        let global_view = view.annotated(&self.marks(&topk_ids));
        let final_id = runner.joint_decision(
            Arc::new(global_view.image.clone()),
            &keyframe_images,
            &predicted_class,
            text,
            &topk_ids,
        );
        artifacts.images.push(("global_view".into(), global_view.image));
        let final_box = self.scene.detection(final_id).expect("final id is a candidate").bbox;

        let trace = GroundingTrace {
            query: text.to_string(),
            predicted_class,
            matched_class: text_match.map(|(c, _)| c),
            match_score,
            used_visual_fallback,
            selected_view,
            filtered_ids,
            topk_ids,
            screening_skipped,
            keyframes,
            missing_keyframes,
            final_id,
            final_box,
            stages: runner.stages,
            fallbacks_taken: runner.fallbacks_taken,
            vlm_calls: runner.vlm_calls,
            backend: backend.kind().to_string(),
            config: self.config.clone(),
        };
        Ok(GroundingOutcome {
            result: GroundingResult { final_id, final_box },
            trace,
            artifacts,
        })
    }
}

/// One-shot form of [`Grounder::ground`].
pub fn ground(
    scene: &Scene,
    query: &GroundingQuery,
    config: &PipelineConfig,
    backend: &dyn VlmBackend,
) -> Result<GroundingOutcome, AgentError> {
    Grounder::new(scene, config.clone())?.ground(backend, query)
}
