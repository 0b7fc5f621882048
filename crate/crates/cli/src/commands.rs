use std::path::Path;

use anyhow::{anyhow, Context};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use vgrounder::agent::{AgentError, Grounder, GroundingOutcome, GroundingQuery};
use vgrounder::eval::{accuracy_report, iou_aabb, load_queries, report_text, EvalRecord, QueryRecord, THRESHOLDS};
use vgrounder::projection::{project_points, select_keyframe, visibility, KeyframeAssignment};
use vgrounder::render::{render_holistic_views, write_views, RenderCamera};
use vgrounder::scene::{layout_paths, Scene};
use vgrounder::synth::{generate, SynthSpec};
use vgrounder::vlm::VlmBackend;

use crate::settings::{build_backend, resolve, BackendArgs, BackendKind, PipelineArgs, Resolved};
use crate::CliError;

fn load_scene(dir: &Path) -> Result<Scene, CliError> {
    Scene::load(dir).map_err(|e| CliError::SceneLoad(e.into()))
}

fn queries_path(scene: &Path, queries: Option<&Path>) -> std::path::PathBuf {
    queries.map_or_else(|| scene.join(layout_paths::QUERIES), Path::to_path_buf)
}

fn agent_error(e: AgentError) -> CliError {
    match e {
        AgentError::EmptyDetections => CliError::EmptyDetections,
        AgentError::InvalidConfig(_) | AgentError::EmptyQuery => CliError::Usage(e.into()),
        AgentError::Render(_) => CliError::Other(e.into()),
    }
}

fn print_json(value: &impl Serialize) -> Result<(), CliError> {
    println!("{}", serde_json::to_string(value).context("serializing output")?);
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Scene, grounder and backend shared by `ground` and `evaluate`.
fn prepare<'s>(
    scene: &'s Scene,
    settings: &Resolved,
    queries: &[QueryRecord],
) -> Result<(Grounder<'s>, Box<dyn VlmBackend>), CliError> {
    let grounder = Grounder::new(scene, settings.pipeline.clone()).map_err(agent_error)?;
    let cameras: Vec<RenderCamera> = grounder
        .views()
        .map_err(agent_error)?
        .iter()
        .map(|v| v.camera)
        .collect();
    let backend = build_backend(settings, scene, queries, cameras)?;
    Ok((grounder, backend))
}

fn write_outcome(out: &Path, idx: usize, outcome: &GroundingOutcome, images: bool) -> anyhow::Result<()> {
    write_json(&out.join(format!("{idx}_trace.json")), &outcome.trace)?;
    if images {
        outcome
            .artifacts
            .write(out, &idx.to_string())
            .with_context(|| format!("writing images for query {idx}"))?;
    }
    Ok(())
}

pub fn ground(
    scene_dir: &Path,
    text: &str,
    queries: Option<&Path>,
    out: Option<&Path>,
    backend: &BackendArgs,
    pipeline: &PipelineArgs,
) -> Result<(), CliError> {
    let settings = resolve(pipeline, Some(backend), None)?;
    let scene = load_scene(scene_dir)?;
    let known = if settings.backend == BackendKind::Oracle {
        let path = queries_path(scene_dir, queries);
        let records = load_queries(&path).map_err(|e| CliError::SceneLoad(e.into()))?;
        if !records.iter().any(|r| r.text.trim() == text.trim()) {
            return Err(CliError::Backend(format!(
                "the oracle backend only answers queries listed in {}",
                path.display()
            )));
        }
        records
    } else {
        Vec::new()
    };
    let (grounder, backend) = prepare(&scene, &settings, &known)?;
    let outcome = grounder
        .ground(backend.as_ref(), &GroundingQuery::new(text))
        .map_err(agent_error)?;
    if let Some(out) = out {
        create_dir(out)?;
        write_outcome(out, 0, &outcome, true)?;
    }
    let t = &outcome.trace;
    print_json(&json!({
        "final_id": outcome.result.final_id,
        "final_box": outcome.result.final_box,
        "predicted_class": t.predicted_class,
        "topk_ids": t.topk_ids,
        "fallbacks_taken": t.fallbacks_taken,
    }))
}

#[derive(Serialize)]
struct EvaluationFile<'a> {
    report: &'a vgrounder::eval::AccuracyReport,
    records: &'a [EvalRecord],
}

pub fn evaluate(
    scene_dir: &Path,
    queries: Option<&Path>,
    out: &Path,
    parallel: Option<usize>,
    skip_images: bool,
    backend: &BackendArgs,
    pipeline: &PipelineArgs,
) -> Result<(), CliError> {
    let settings = resolve(pipeline, Some(backend), parallel)?;
    let scene = load_scene(scene_dir)?;
    let records = load_queries(&queries_path(scene_dir, queries)).map_err(|e| CliError::SceneLoad(e.into()))?;
    if records.is_empty() {
        return Err(CliError::Other(vgrounder::eval::EvalError::EmptyRecords.into()));
    }
    let (grounder, backend) = prepare(&scene, &settings, &records)?;
    create_dir(out)?;

    let run_one = |(idx, q): (usize, &QueryRecord)| -> anyhow::Result<EvalRecord> {
        let gt_box = q.gt_box.or_else(|| scene.detection(q.gt_id).map(|d| d.bbox));
        let mut record = EvalRecord {
            query_idx: idx,
            iou: None,
            correct_selection: Some(false),
            splits: q.splits.clone(),
            error: None,
        };
        match grounder.ground(backend.as_ref(), &GroundingQuery::new(q.text.clone())) {
            Ok(outcome) => {
                write_outcome(out, idx, &outcome, !skip_images)?;
                record.iou = gt_box.map(|b| iou_aabb(&b, &outcome.result.final_box));
                record.correct_selection = Some(outcome.result.final_id == q.gt_id);
            }
            Err(e) => {
                log::error!("query {idx}: {e}");
                record.iou = gt_box.map(|_| 0.0);
                record.error = Some(e.to_string());
            }
        }
        Ok(record)
    };
    // Scripted replies are consumed in call order, so their queries run one at a time.
    let threads = if settings.backend == BackendKind::Scripted {
        1
    } else {
        settings.parallel
    };
    let results: Vec<anyhow::Result<EvalRecord>> = if threads == 1 {
        records.iter().enumerate().map(run_one).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .context("starting worker threads")?;
        pool.install(|| records.par_iter().enumerate().map(run_one).collect())
    };
    let evals: Vec<EvalRecord> = results.into_iter().collect::<anyhow::Result<_>>()?;

    let report = accuracy_report(&evals, &THRESHOLDS).map_err(|e| CliError::Other(e.into()))?;
    write_json(
        &out.join("report.json"),
        &EvaluationFile {
            report: &report,
            records: &evals,
        },
    )?;
    let txt = out.join("report.txt");
    std::fs::write(&txt, report_text(&report)).with_context(|| format!("writing {}", txt.display()))?;

    let o = &report.overall;
    print_json(&json!({
        "queries": o.count,
        "failed": o.failed,
        "acc_at_0.25": o.iou_thresholds[0].accuracy,
        "acc_at_0.5": o.iou_thresholds[1].accuracy,
        "selection_accuracy": o.selection_accuracy,
        "report": out.join("report.json"),
    }))
}

pub fn render(scene_dir: &Path, out: &Path, pipeline: &PipelineArgs) -> Result<(), CliError> {
    let p = resolve(pipeline, None, None)?.pipeline;
    let scene = load_scene(scene_dir)?;
    let views = render_holistic_views(
        &scene.cloud,
        &scene.bounds,
        p.n_views,
        p.fov_deg,
        (p.image_size, p.image_size),
        &p.render_settings(),
    )
    .map_err(|e| CliError::Other(e.into()))?;
    let marks: Vec<(u32, vgrounder::scene::Vec3)> = scene.detections.iter().map(|d| (d.id, d.bbox.center)).collect();
    let annotated: Vec<_> = views.iter().map(|v| v.annotated(&marks)).collect();
    write_views(out, &views, &annotated).map_err(|e| CliError::Other(e.into()))?;
    print_json(&json!({
        "views": views.len(),
        "annotations": annotated.iter().map(|v| &v.annotations).collect::<Vec<_>>(),
    }))
}

#[derive(Serialize)]
struct KeyPointReport {
    u: Option<f64>,
    v: Option<f64>,
    depth_cam: f64,
    visible: bool,
}

#[derive(Serialize)]
struct FrameReport {
    frame_id: String,
    visible_count: usize,
    key_points: Vec<KeyPointReport>,
}

#[derive(Serialize)]
struct ObjectProjection<'a> {
    object_id: u32,
    class: &'a str,
    frames: Vec<FrameReport>,
    keyframe: Option<KeyframeAssignment>,
}

pub fn project(scene_dir: &Path, out: &Path, pipeline: &PipelineArgs) -> Result<(), CliError> {
    let p = resolve(pipeline, None, None)?.pipeline;
    let tol = p.depth_tolerance();
    let scene = load_scene(scene_dir)?;
    let dir = out.join("projections");
    create_dir(&dir)?;
    let mut summary = serde_json::Map::new();
    for det in &scene.detections {
        let key_points = det.bbox.key_points();
        let frames = scene
            .frames
            .iter()
            .map(|f| {
                let pts: Vec<KeyPointReport> = project_points(&f.intrinsics, &f.world_to_camera, &key_points)
                    .iter()
                    .map(|pp| KeyPointReport {
                        u: pp.in_front.then_some(pp.u),
                        v: pp.in_front.then_some(pp.v),
                        depth_cam: pp.depth_cam,
                        visible: visibility(pp, f, &tol),
                    })
                    .collect();
                FrameReport {
                    frame_id: f.frame_id.clone(),
                    visible_count: pts.iter().filter(|k| k.visible).count(),
                    key_points: pts,
                }
            })
            .collect();
        let keyframe = select_keyframe(det.id, &det.bbox, &scene.frames, &tol).ok();
        summary.insert(
            det.id.to_string(),
            json!(keyframe.as_ref().map(|k| (&k.frame_id, k.visible_count))),
        );
        write_json(
            &dir.join(format!("{}.json", det.id)),
            &ObjectProjection {
                object_id: det.id,
                class: &det.class_label,
                frames,
                keyframe,
            },
        )?;
    }
    print_json(&json!({ "keyframes": summary }))
}

pub fn synth(out: &Path, seed: Option<u64>, spec_path: Option<&Path>) -> Result<(), CliError> {
    let mut spec = match spec_path {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str::<SynthSpec>(&text)
                .with_context(|| format!("parsing {}", path.display()))
                .map_err(CliError::Usage)?
        }
        None => SynthSpec::demo(0),
    };
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    let summary = generate(&spec, out).map_err(|e| CliError::Other(anyhow!(e)))?;
    print_json(&summary)
}
