//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
//! criterion fails. Tolerances and time budgets are pinned below.

mod common;

use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use nalgebra::Matrix4;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vgrounder::agent::prompts::{
    candidate_screening_prompt, extract_id_list, joint_decision_prompt, target_class_prompt, view_selection_prompt,
    visual_fallback_prompt, Stage,
};
use vgrounder::agent::{Grounder, GroundingQuery, GroundingTrace, PipelineConfig};
use vgrounder::eval::{iou_aabb, load_queries};
use vgrounder::projection::{count_visible, project_points, select_keyframe, DepthTolerance};
use vgrounder::render::{
    bev_camera, holistic_distance, render_framebuffer, render_holistic_views, ring_cameras, RenderCamera,
    RenderSettings,
};
use vgrounder::scene::{layout_paths, Aabb3, CameraIntrinsics, ColoredPoint, PointCloud, Scene, SceneBounds, Vec3};
use vgrounder::synth::{expected_count_visible, expected_visibility, generate, KeyPointStatus, SynthSpec};
use vgrounder::vlm::{
    build_request_body, Completion, ContentPart, OracleBackend, VlmBackend, VlmError, VlmRequest, API_KEY_ENV,
};

const GEOMETRY_REL_TOL: f64 = 1e-9;
const PROJECTION_REL_TOL: f64 = 1e-6;
const IOU_ABS_TOL: f64 = 0.01;
const VOXEL_M: f64 = 1e-3;
const GOLDEN_TEMPERATURE: f64 = 0.2;
const GOLDEN_TOP_K: usize = 4;
const GOLDEN_N_VIEWS: usize = 4;
const GOLDEN_TAU: f64 = 0.8;

const BUDGET_GEOMETRY: Duration = Duration::from_secs(1);
const BUDGET_PROJECTION: Duration = Duration::from_secs(1);
const BUDGET_IOU: Duration = Duration::from_secs(30);
const BUDGET_VISIBILITY: Duration = Duration::from_secs(10);
const BUDGET_ORACLE: Duration = Duration::from_secs(10);

const SMOKE_ENDPOINT_ENV: &str = "VGROUNDER_SMOKE_ENDPOINT";
const SMOKE_MODEL_ENV: &str = "VGROUNDER_SMOKE_MODEL";
const SMOKE_SCENE_ENV: &str = "VGROUNDER_SMOKE_SCENE";

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn within_budget(start: Instant, budget: Duration) -> Result<Duration, String> {
    let t = start.elapsed();
    ensure!(t < budget, "took {t:.2?}, budget {budget:?}");
    Ok(t)
}

fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(1.0)
}

// 1 ------------------------------------------------------------------------

fn live_smoke() -> Outcome {
    let vars = [API_KEY_ENV, SMOKE_ENDPOINT_ENV, SMOKE_MODEL_ENV, SMOKE_SCENE_ENV];
    let values: Vec<Option<String>> = vars
        .iter()
        .map(|v| std::env::var(v).ok().filter(|s| !s.is_empty()))
        .collect();
    if values.iter().any(Option::is_none) {
        return Ok(format!(
            "published benchmark numbers are out of scope offline; optional live smoke not run (set {})",
            vars.join(", ")
        ));
    }
    let [_, Some(endpoint), Some(model), Some(scene)] = values.as_slice() else {
        unreachable!()
    };
    let scene = Path::new(scene);
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let all = std::fs::read_to_string(scene.join(layout_paths::QUERIES)).map_err(|e| e.to_string())?;
    let three: Vec<&str> = all.lines().filter(|l| !l.trim().is_empty()).take(3).collect();
    ensure!(three.len() == 3, "scene has {} queries, need 3", three.len());
    let queries = tmp.path().join("smoke.jsonl");
    std::fs::write(&queries, three.join("\n")).map_err(|e| e.to_string())?;
    let out_dir = tmp.path().join("out");
    let out = common::run(&[
        "evaluate",
        "--scene",
        common::s(scene),
        "--queries",
        common::s(&queries),
        "--out",
        common::s(&out_dir),
        "--backend",
        "remote",
        "--endpoint",
        endpoint,
        "--model",
        model,
    ]);
    ensure!(
        out.status.success(),
        "evaluate failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    for i in 0..3 {
        let text = std::fs::read(out_dir.join(format!("{i}_trace.json"))).map_err(|e| e.to_string())?;
        let t: GroundingTraceLite = serde_json::from_slice(&text).map_err(|e| format!("trace {i}: {e}"))?;
        ensure!(
            t.filtered_ids.contains(&t.final_id),
            "trace {i}: final id outside filtered ids"
        );
    }
    Ok("3-query live run completed with valid traces".into())
}

#[derive(serde::Deserialize)]
struct GroundingTraceLite {
    final_id: u32,
    filtered_ids: Vec<u32>,
}

// 2 ------------------------------------------------------------------------

fn holistic_geometry() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let start = Instant::now();
    let mut cameras = 0;
    for case in 0..1000 {
        let min = Vec3::new(
            rng.gen_range(-10.0..10.0),
            rng.gen_range(-10.0..10.0),
            rng.gen_range(-2.0..2.0),
        );
        let max = min
            + Vec3::new(
                rng.gen_range(0.05..25.0),
                rng.gen_range(0.05..25.0),
                rng.gen_range(0.05..5.0),
            );
        let bounds = SceneBounds { min, max };
        let fov: f64 = rng.gen_range(5.0..175.0);
        let (lx, ly) = (max.x - min.x, max.y - min.y);
        let want = 0.5 * lx.max(ly) / (fov * PI / 360.0).tan();
        let center = Vec3::new((min.x + max.x) / 2.0, (min.y + max.y) / 2.0, (min.z + max.z) / 2.0);

        let d = holistic_distance(&bounds, fov);
        ensure!(rel_err(d, want) <= GEOMETRY_REL_TOL, "case {case}: d {d} vs {want}");
        let bev = bev_camera(&bounds, fov, (64, 64)).map_err(|e| e.to_string())?;
        let off = bev.position - center;
        ensure!(
            rel_err(off.z, want) <= GEOMETRY_REL_TOL && off.x.abs() <= 1e-9 && off.y.abs() <= 1e-9,
            "case {case}: bird's-eye camera offset {off:?}"
        );

        let n = case % 8 + 1;
        let ring = ring_cameras(n, &bounds, fov, (64, 64)).map_err(|e| e.to_string())?;
        ensure!(ring.len() == n, "case {case}: {} ring cameras for n = {n}", ring.len());
        let mut azimuths = Vec::with_capacity(n);
        for cam in &ring {
            ensure!(
                (cam.target - center).norm() <= 1e-9 * want.max(1.0),
                "case {case}: ring target off center"
            );
            let off = cam.position - center;
            let dist = off.norm();
            ensure!(
                rel_err(dist, want) <= GEOMETRY_REL_TOL,
                "case {case}: ring distance {dist} vs {want}"
            );
            let elev = off.z.atan2(off.x.hypot(off.y));
            ensure!(
                (elev - PI / 4.0).abs() <= GEOMETRY_REL_TOL,
                "case {case}: elevation {elev}"
            );
            azimuths.push(off.x.atan2(off.y));
        }
        for k in 1..n {
            let step = (azimuths[k] - azimuths[k - 1]).rem_euclid(2.0 * PI);
            ensure!(
                (step - 2.0 * PI / n as f64).abs() <= GEOMETRY_REL_TOL,
                "case {case}: azimuth step {step} for n = {n}"
            );
        }
        cameras += n;
    }
    let t = within_budget(start, BUDGET_GEOMETRY)?;
    Ok(format!(
        "1000 cases, {cameras} ring cameras, tol {GEOMETRY_REL_TOL:e}, {t:.2?}"
    ))
}

// 3 ------------------------------------------------------------------------

type Mat3 = [[f64; 3]; 3];

fn rotation(axis: [f64; 3], angle: f64) -> Mat3 {
    let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    let [x, y, z] = [axis[0] / n, axis[1] / n, axis[2] / n];
    let (s, c) = angle.sin_cos();
    let t = 1.0 - c;
    [
        [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
        [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
        [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
    ]
}

fn random_rigid(rng: &mut ChaCha8Rng) -> (Mat3, [f64; 3]) {
    let axis = [
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(0.1..1.0),
    ];
    let r = rotation(axis, rng.gen_range(-PI..PI));
    (
        r,
        [
            rng.gen_range(-5.0..5.0),
            rng.gen_range(-5.0..5.0),
            rng.gen_range(-5.0..5.0),
        ],
    )
}

fn to_matrix((r, t): &(Mat3, [f64; 3])) -> Matrix4<f64> {
    Matrix4::new(
        r[0][0], r[0][1], r[0][2], t[0], r[1][0], r[1][1], r[1][2], t[1], r[2][0], r[2][1], r[2][2], t[2], 0.0, 0.0,
        0.0, 1.0,
    )
}

fn apply((r, t): &(Mat3, [f64; 3]), p: [f64; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for i in 0..3 {
        out[i] = r[i][0] * p[0] + r[i][1] * p[1] + r[i][2] * p[2] + t[i];
    }
    out
}

fn projection_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let start = Instant::now();
    let (mut compared, mut worst) = (0usize, 0.0f64);
    for pose_idx in 0..1000 {
        let k = CameraIntrinsics::new(
            rng.gen_range(200.0..1500.0),
            rng.gen_range(200.0..1500.0),
            rng.gen_range(100.0..540.0),
            rng.gen_range(100.0..380.0),
            640,
            480,
        )
        .map_err(|e| e.to_string())?;
        let pose = random_rigid(&mut rng);
        let world: Vec<[f64; 3]> = (0..8)
            .map(|_| {
                [
                    rng.gen_range(-6.0..6.0),
                    rng.gen_range(-6.0..6.0),
                    rng.gen_range(-6.0..6.0),
                ]
            })
            .collect();
        let pts: Vec<Vec3> = world.iter().map(|p| Vec3::new(p[0], p[1], p[2])).collect();
        let got = project_points(&k, &to_matrix(&pose), &pts);

        // Same scene seen after moving the world by a rigid g and the camera with it.
        let g = random_rigid(&mut rng);
        let g_inv = to_matrix(&g).try_inverse().ok_or("singular rigid transform")?;
        let moved: Vec<Vec3> = world
            .iter()
            .map(|p| apply(&g, *p))
            .map(|p| Vec3::new(p[0], p[1], p[2]))
            .collect();
        let moved_got = project_points(&k, &(to_matrix(&pose) * g_inv), &moved);

        for (i, p) in world.iter().enumerate() {
            let c = apply(&pose, *p);
            ensure!(
                rel_err(got[i].depth_cam, c[2]) <= PROJECTION_REL_TOL,
                "pose {pose_idx}: depth"
            );
            if c[2].abs() < 1e-6 {
                continue;
            }
            ensure!(
                got[i].in_front == (c[2] > 0.0),
                "pose {pose_idx} point {i}: front/behind disagrees"
            );
            ensure!(
                moved_got[i].in_front == got[i].in_front,
                "pose {pose_idx} point {i}: rigid motion flips side"
            );
            if c[2] < 0.05 {
                continue;
            }
            let u = k.fx * c[0] / c[2] + k.cx;
            let v = k.fy * c[1] / c[2] + k.cy;
            let err = rel_err(got[i].u, u).max(rel_err(got[i].v, v));
            let rigid = rel_err(moved_got[i].u, got[i].u).max(rel_err(moved_got[i].v, got[i].v));
            worst = worst.max(err).max(rigid);
            ensure!(
                err <= PROJECTION_REL_TOL,
                "pose {pose_idx} point {i}: ({}, {}) vs ({u}, {v})",
                got[i].u,
                got[i].v
            );
            ensure!(
                rigid <= PROJECTION_REL_TOL,
                "pose {pose_idx} point {i}: not rigid-invariant ({rigid:e})"
            );
            compared += 1;
        }
    }
    ensure!(compared >= 2000, "only {compared} points in front of their cameras");
    let t = within_budget(start, BUDGET_PROJECTION)?;
    Ok(format!(
        "1000 poses, {compared} points, worst rel err {worst:.1e}, {t:.2?}"
    ))
}

// 4 ------------------------------------------------------------------------

/// Grid cells of side `VOXEL_M` whose centers fall inside `[lo_a, hi_a]`,
/// inside `[lo_b, hi_b]`, and inside both.
fn axis_counts(lo_a: f64, hi_a: f64, lo_b: f64, hi_b: f64) -> (u64, u64, u64) {
    let first = (lo_a.min(lo_b) / VOXEL_M).floor() as i64 - 1;
    let last = (hi_a.max(hi_b) / VOXEL_M).ceil() as i64 + 1;
    let (mut a, mut b, mut both) = (0, 0, 0);
    for i in first..=last {
        let c = (i as f64 + 0.5) * VOXEL_M;
        let in_a = c >= lo_a && c <= hi_a;
        let in_b = c >= lo_b && c <= hi_b;
        a += in_a as u64;
        b += in_b as u64;
        both += (in_a && in_b) as u64;
    }
    (a, b, both)
}

fn voxel_iou(a: &Aabb3, b: &Aabb3) -> f64 {
    let (amin, amax, bmin, bmax) = (a.min(), a.max(), b.min(), b.max());
    let (mut va, mut vb, mut vi) = (1u64, 1u64, 1u64);
    for ax in 0..3 {
        let (ca, cb, ci) = axis_counts(amin[ax], amax[ax], bmin[ax], bmax[ax]);
        va *= ca;
        vb *= cb;
        vi *= ci;
    }
    vi as f64 / (va + vb - vi) as f64
}

fn random_box(rng: &mut ChaCha8Rng) -> Aabb3 {
    let center = Vec3::new(
        rng.gen_range(0.0..2.0),
        rng.gen_range(0.0..2.0),
        rng.gen_range(0.0..2.0),
    );
    let size = Vec3::new(
        rng.gen_range(0.3..2.0),
        rng.gen_range(0.3..2.0),
        rng.gen_range(0.3..2.0),
    );
    Aabb3::new(center, size).expect("positive size")
}

fn iou_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let start = Instant::now();
    let (mut worst, mut overlapping) = (0.0f64, 0);
    for pair in 0..200 {
        let a = random_box(&mut rng);
        let b = if pair % 2 == 0 {
            random_box(&mut rng)
        } else {
            let shift = Vec3::new(
                rng.gen_range(-0.3..0.3),
                rng.gen_range(-0.3..0.3),
                rng.gen_range(-0.3..0.3),
            );
            let scale = Vec3::new(
                rng.gen_range(0.7..1.3),
                rng.gen_range(0.7..1.3),
                rng.gen_range(0.7..1.3),
            );
            Aabb3::new(a.center + shift, a.size.component_mul(&scale)).expect("positive size")
        };
        let got = iou_aabb(&a, &b);
        let want = voxel_iou(&a, &b);
        worst = worst.max((got - want).abs());
        overlapping += (want > 0.0) as usize;
        ensure!((got - want).abs() <= IOU_ABS_TOL, "pair {pair}: {got} vs voxel {want}");
        ensure!(
            got.to_bits() == iou_aabb(&b, &a).to_bits(),
            "pair {pair}: not symmetric"
        );
        ensure!(
            iou_aabb(&a, &a) == 1.0 && iou_aabb(&b, &b) == 1.0,
            "pair {pair}: iou(x, x) != 1"
        );
    }
    let t = within_budget(start, BUDGET_IOU)?;
    Ok(format!(
        "200 pairs ({overlapping} overlapping), worst |diff| {worst:.4}, {t:.2?}"
    ))
}

// 5 ------------------------------------------------------------------------

fn visibility_and_keyframes() -> Outcome {
    let start = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let spec = SynthSpec::demo(5);
    let dir = tmp.path().join("scene");
    generate(&spec, &dir).map_err(|e| e.to_string())?;
    let scene = Scene::load(&dir).map_err(|e| e.to_string())?;
    ensure!(spec.objects.len() >= 6 && spec.cameras.len() >= 4, "scene too small");
    let tol = DepthTolerance::default();
    let (mut pairs, mut occluded) = (0, 0);
    for (obj, det) in scene.detections.iter().enumerate() {
        for (cam, frame) in scene.frames.iter().enumerate() {
            let want = expected_count_visible(&spec, obj, cam, &tol).map_err(|e| e.to_string())?;
            let got = count_visible(&det.bbox, frame, &tol);
            ensure!(
                got == want,
                "object {obj} frame {cam}: {got} visible, ray cast expects {want}"
            );
            let status = expected_visibility(&spec, obj, cam, &tol).map_err(|e| e.to_string())?;
            occluded += status
                .iter()
                .filter(|s| matches!(s, KeyPointStatus::Occluded { .. }))
                .count();
            pairs += 1;
        }
    }
    ensure!(occluded > 0, "no occluded key point in the scene");

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut frames = scene.frames.clone();
    for det in &scene.detections {
        let base = select_keyframe(det.id, &det.bbox, &scene.frames, &tol);
        for _ in 0..10 {
            frames.shuffle(&mut rng);
            ensure!(
                select_keyframe(det.id, &det.bbox, &frames, &tol) == base,
                "object {}: keyframe depends on frame order",
                det.id
            );
        }
    }
    let t = within_budget(start, BUDGET_VISIBILITY)?;
    Ok(format!(
        "{} objects x {} frames = {pairs} pairs match, {occluded} occluded key points, {t:.2?}",
        scene.detections.len(),
        scene.frames.len()
    ))
}

// 6 ------------------------------------------------------------------------

fn renderer_consistency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let camera = RenderCamera::new(Vec3::new(0.3, -6.0, 2.5), Vec3::zeros(), Vec3::z(), 60.0, (320, 240))
        .map_err(|e| e.to_string())?;
    let mut taken: Vec<(i64, i64)> = Vec::new();
    let mut points = Vec::new();
    while points.len() < 500 {
        let p = Vec3::new(
            rng.gen_range(-3.0..3.0),
            rng.gen_range(-3.0..3.0),
            rng.gen_range(-2.0..2.0),
        );
        let Some(ip) = camera.world_to_image(&p) else { continue };
        let (x, y) = ip.pixel();
        if x < 0 || y < 0 || x >= 320 || y >= 240 {
            continue;
        }
        if taken.iter().any(|(tx, ty)| (tx - x).abs() <= 1 && (ty - y).abs() <= 1) {
            continue;
        }
        taken.push((x, y));
        let color = [rng.gen(), rng.gen(), rng.gen()];
        points.push((ColoredPoint { position: p, color }, ip));
    }
    let cloud = PointCloud::new(points.iter().map(|(p, _)| *p).collect()).map_err(|e| e.to_string())?;
    // A tiny world size clamps every splat to its center pixel.
    let settings = RenderSettings { point_size_m: 1e-9 };
    let fb = render_framebuffer(&cloud, &camera, &settings);
    for (i, (p, ip)) in points.iter().enumerate() {
        let (x, y) = ip.pixel();
        let idx = (y * 320 + x) as usize;
        ensure!(
            fb.depth[idx] == ip.depth,
            "point {i}: z-buffer holds {} at ({x}, {y})",
            fb.depth[idx]
        );
        ensure!(
            fb.image.get_pixel(x as u32, y as u32).0 == p.color,
            "point {i}: wrong color at ({x}, {y})"
        );
    }
    let filled = fb.depth.iter().filter(|d| d.is_finite()).count();
    ensure!(
        filled == points.len(),
        "{filled} pixels written for {} points",
        points.len()
    );

    let again = render_framebuffer(&cloud, &camera, &settings);
    ensure!(again.image.as_raw() == fb.image.as_raw(), "random cloud renders differ");
    let scene = Scene::load(common::scene_dir()).map_err(|e| e.to_string())?;
    let render = || {
        render_holistic_views(
            &scene.cloud,
            &scene.bounds,
            4,
            60.0,
            (384, 384),
            &RenderSettings::default(),
        )
        .map_err(|e| e.to_string())
    };
    let (a, b) = (render()?, render()?);
    ensure!(
        a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x.image.as_raw() == y.image.as_raw()),
        "holistic views differ between runs"
    );
    Ok(format!(
        "500 isolated points on their projected pixels; {} scene views byte-identical",
        a.len()
    ))
}

// 7 ------------------------------------------------------------------------

fn containment(t: &GroundingTrace, scene: &Scene) -> Result<(), String> {
    ensure!(
        t.filtered_ids.iter().all(|id| scene.detection(*id).is_some()),
        "filtered ids outside the scene"
    );
    ensure!(
        t.topk_ids.iter().all(|id| t.filtered_ids.contains(id)),
        "top-k outside filtered ids"
    );
    ensure!(t.topk_ids.contains(&t.final_id), "final id outside top-k");
    ensure!(t.filtered_ids.contains(&t.final_id), "final id outside filtered ids");
    ensure!(
        t.keyframes.iter().all(|k| t.topk_ids.contains(&k.object_id)),
        "keyframe for an object outside top-k"
    );
    Ok(())
}

fn oracle_end_to_end() -> Outcome {
    let scene = Scene::load(common::scene_dir()).map_err(|e| e.to_string())?;
    let records = load_queries(&common::scene_dir().join(layout_paths::QUERIES)).map_err(|e| e.to_string())?;
    ensure!(records.len() >= 20, "only {} queries", records.len());
    let start = Instant::now();
    let grounder = Grounder::new(&scene, PipelineConfig::default()).map_err(|e| e.to_string())?;
    let cameras = grounder
        .views()
        .map_err(|e| e.to_string())?
        .iter()
        .map(|v| v.camera)
        .collect();
    let oracle = OracleBackend::new(
        &scene.detections,
        records.iter().map(|r| (r.text.clone(), r.gt_id)),
        cameras,
    );
    let mut correct = 0;
    for (i, r) in records.iter().enumerate() {
        let out = grounder
            .ground(&oracle, &GroundingQuery::new(r.text.clone()))
            .map_err(|e| format!("query {i}: {e}"))?;
        containment(&out.trace, &scene).map_err(|e| format!("query {i}: {e}"))?;
        ensure!(
            out.trace.backend == "oracle",
            "query {i}: backend {}",
            out.trace.backend
        );
        correct += (out.result.final_id == r.gt_id) as usize;
    }
    let accuracy = correct as f64 / records.len() as f64;
    ensure!(
        accuracy == 1.0,
        "selection accuracy {accuracy} ({correct}/{})",
        records.len()
    );
    let t = within_budget(start, BUDGET_ORACLE)?;
    Ok(format!(
        "{} queries, selection accuracy 1.0, offline, {t:.2?}",
        records.len()
    ))
}

// 8, 9, 10 -----------------------------------------------------------------

/// Answers every stage validly from the candidate lists in the prompt,
/// except for stages given a fixed bad reply. Records what it was sent.
struct Adversary {
    class: &'static str,
    bad: HashMap<Stage, &'static str>,
    log: Mutex<Vec<(Stage, usize, f64)>>,
}

impl Adversary {
    fn new(class: &'static str, bad: &[(Stage, &'static str)]) -> Self {
        Self {
            class,
            bad: bad.iter().copied().collect(),
            log: Mutex::new(Vec::new()),
        }
    }

    fn calls(&self, stage: Stage) -> usize {
        self.log.lock().unwrap().iter().filter(|(s, _, _)| *s == stage).count()
    }
}

impl VlmBackend for Adversary {
    fn complete(&self, request: &VlmRequest) -> Result<Completion, VlmError> {
        let prompt = request.text();
        let stage = Stage::detect(&prompt).expect("known stage");
        self.log
            .lock()
            .unwrap()
            .push((stage, request.image_count(), request.temperature));
        let listed = extract_id_list(&prompt).unwrap_or_default();
        let text = match (self.bad.get(&stage), stage) {
            (Some(reply), _) => reply.to_string(),
            (None, Stage::TargetClass) => format!(r#"{{"target_class": "{}"}}"#, self.class),
            (None, Stage::ViewSelection) => r#"{"reasoning": "", "view": "1"}"#.into(),
            (None, Stage::VisualFallback) => {
                let chairs: Vec<u32> = listed.iter().copied().filter(|id| (1..=3).contains(id)).collect();
                serde_json::json!({ "object_id": chairs }).to_string()
            }
            (None, Stage::CandidateScreening) => serde_json::json!({ "object_id": &listed[..2] }).to_string(),
            (None, Stage::JointDecision) => serde_json::json!({ "object_id": listed[0] }).to_string(),
        };
        Ok(Completion { text, retries: 0 })
    }

    fn kind(&self) -> &'static str {
        "adversary"
    }
}

const CHAIR_QUERY: &str = "the chair closest to the table";

fn adversarial() -> Outcome {
    use Stage::*;
    let scene = Scene::load(common::scene_dir()).map_err(|e| e.to_string())?;
    // Three chairs against k = 2 so that screening always asks the model.
    let config = PipelineConfig {
        top_k: 2,
        image_size: 256,
        ..PipelineConfig::default()
    };
    let grounder = Grounder::new(&scene, config).map_err(|e| e.to_string())?;
    const NON_JSON: &str = "I think it is probably the second chair.";
    let cases: Vec<(&str, Stage, &str)> = vec![
        ("non-JSON", TargetClass, NON_JSON),
        ("non-JSON", ViewSelection, NON_JSON),
        ("non-JSON", VisualFallback, NON_JSON),
        ("non-JSON", CandidateScreening, NON_JSON),
        ("non-JSON", JointDecision, NON_JSON),
        ("view out of range", ViewSelection, r#"{"reasoning": "", "view": "17"}"#),
        ("ids out of range", VisualFallback, r#"{"object_id": [97, 98]}"#),
        (
            "ids out of range",
            CandidateScreening,
            r#"{"reasoning": "", "object_id": [97, 98]}"#,
        ),
        (
            "ids out of range",
            JointDecision,
            r#"{"reasoning": "", "object_id": 99}"#,
        ),
        ("empty list", TargetClass, r#"{"target_class": []}"#),
        ("empty list", ViewSelection, r#"{"reasoning": "", "view": []}"#),
        ("empty list", VisualFallback, r#"{"object_id": []}"#),
        (
            "empty list",
            CandidateScreening,
            r#"{"reasoning": "", "object_id": []}"#,
        ),
        ("empty list", JointDecision, r#"{"reasoning": "", "object_id": []}"#),
    ];
    for (kind, stage, reply) in &cases {
        // The visual fallback only runs when the predicted class matches nothing.
        let class = if *stage == VisualFallback { "qwzxv" } else { "chair" };
        let backend = Adversary::new(class, &[(*stage, *reply)]);
        let out = grounder
            .ground(&backend, &GroundingQuery::new(CHAIR_QUERY))
            .map_err(|e| format!("{kind} at {}: {e}", stage.name()))?;
        let t = &out.trace;
        containment(t, &scene).map_err(|e| format!("{kind} at {}: {e}", stage.name()))?;
        let expected: Vec<&str> = if *stage == VisualFallback {
            vec!["visual_fallback", "filter_all"]
        } else {
            vec![stage.name()]
        };
        ensure!(
            t.fallbacks_taken == expected,
            "{kind} at {}: fallbacks {:?}",
            stage.name(),
            t.fallbacks_taken
        );
        ensure!(
            backend.calls(*stage) == 2,
            "{kind} at {}: {} calls",
            stage.name(),
            backend.calls(*stage)
        );
    }

    let every: Vec<(Stage, &str)> = Stage::ALL.iter().map(|s| (*s, NON_JSON)).collect();
    let backend = Adversary::new("chair", &every);
    let out = grounder
        .ground(&backend, &GroundingQuery::new(CHAIR_QUERY))
        .map_err(|e| format!("all stages failing: {e}"))?;
    containment(&out.trace, &scene)?;
    let all = [
        "target_class",
        "view_selection",
        "visual_fallback",
        "filter_all",
        "candidate_screening",
        "joint_decision",
    ];
    ensure!(
        out.trace.fallbacks_taken == all,
        "all stages failing: {:?}",
        out.trace.fallbacks_taken
    );
    Ok(format!(
        "{} single-stage failures plus all-stage failure completed with exact fallbacks",
        cases.len()
    ))
}

fn golden_prompts() -> Outcome {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden");
    let golden = |name: &str| std::fs::read(dir.join(format!("{name}.txt"))).map_err(|e| format!("{name}: {e}"));
    let q = "this is a brown cabinet. it is to the right of a picture.";
    let defaults = PipelineConfig::default();
    ensure!(defaults.top_k == GOLDEN_TOP_K, "default k = {}", defaults.top_k);
    ensure!(defaults.n_views == GOLDEN_N_VIEWS, "default n = {}", defaults.n_views);
    ensure!(
        defaults.temperature == GOLDEN_TEMPERATURE,
        "default temperature {}",
        defaults.temperature
    );
    let rendered = [
        ("target_class", target_class_prompt(q)),
        ("view_selection", view_selection_prompt("cabinet", q)),
        (
            "candidate_screening",
            candidate_screening_prompt("cabinet", q, defaults.top_k, &[3, 5, 8, 12, 14]),
        ),
        ("joint_decision", joint_decision_prompt("cabinet", q, &[3, 8, 12, 14])),
        (
            "visual_fallback",
            visual_fallback_prompt("cabinet", q, &[3, 5, 8, 12, 14]),
        ),
    ];
    for (name, text) in &rendered {
        ensure!(
            text.as_bytes() == golden(name)?.as_slice(),
            "{name} differs from its golden file"
        );
    }

    let scene = Scene::load(common::scene_dir()).map_err(|e| e.to_string())?;
    let grounder = Grounder::new(
        &scene,
        PipelineConfig {
            image_size: 256,
            ..defaults.clone()
        },
    )
    .map_err(|e| e.to_string())?;
    let backend = Adversary::new("chair", &[]);
    grounder
        .ground(&backend, &GroundingQuery::new(CHAIR_QUERY))
        .map_err(|e| e.to_string())?;
    for (stage, images, temperature) in backend.log.lock().unwrap().iter() {
        ensure!(
            *temperature == GOLDEN_TEMPERATURE,
            "{} sent at temperature {temperature}",
            stage.name()
        );
        if *stage == Stage::ViewSelection {
            ensure!(*images == GOLDEN_N_VIEWS + 1, "view selection sent {images} images");
        }
    }
    let request = VlmRequest::new(
        vec![ContentPart::Text("q".into())],
        defaults.temperature,
        defaults.max_attempts,
    )
    .map_err(|e| e.to_string())?;
    let body = build_request_body("model", &request, None);
    ensure!(
        body["temperature"].as_f64() == Some(GOLDEN_TEMPERATURE),
        "request body {body}"
    );
    Ok(format!(
        "{} templates byte-identical, k = 4, n = 4, temperature 0.2 on the wire",
        rendered.len()
    ))
}

fn tau_branch() -> Outcome {
    let scene = Scene::load(common::scene_dir()).map_err(|e| e.to_string())?;
    let config = PipelineConfig {
        image_size: 256,
        ..PipelineConfig::default()
    };
    ensure!(config.tau == GOLDEN_TAU, "default tau {}", config.tau);
    let grounder = Grounder::new(&scene, config).map_err(|e| e.to_string())?;
    let run = |class: &'static str| {
        let backend = Adversary::new(class, &[]);
        let out = grounder
            .ground(&backend, &GroundingQuery::new(CHAIR_QUERY))
            .map_err(|e| e.to_string())?;
        Ok::<_, String>((out.trace, backend.calls(Stage::VisualFallback)))
    };
    let (exact, calls) = run("chair")?;
    ensure!(
        !exact.used_visual_fallback && calls == 0,
        "exact class took the visual path"
    );
    ensure!(
        exact.matched_class.as_deref() == Some("chair"),
        "matched {:?}",
        exact.matched_class
    );
    ensure!(
        exact.filtered_ids == [1, 2, 3],
        "text path kept {:?}",
        exact.filtered_ids
    );
    let (nonsense, calls) = run("qwzxv")?;
    ensure!(
        nonsense.used_visual_fallback && calls == 1,
        "nonsense class stayed on the text path"
    );
    ensure!(
        nonsense.match_score < GOLDEN_TAU,
        "nonsense score {}",
        nonsense.match_score
    );
    Ok(format!(
        "exact class: text path (score {:.2}); nonsense class: visual table (score {:.2})",
        exact.match_score, nonsense.match_score
    ))
}

// 11 -----------------------------------------------------------------------

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let replies = [
        r#"{"target_class": "chair"}"#,
        r#"{"reasoning": "", "view": "2"}"#,
        r#"{"reasoning": "", "object_id": [1, 2]}"#,
        r#"{"reasoning": "", "object_id": 1}"#,
        "no idea",
        r#"{"target_class": "cabinet"}"#,
        r#"{"reasoning": "", "object_id": [4, 5, 9]}"#,
        r#"{"reasoning": "", "object_id": 5}"#,
        r#"{"target_class": "lamp shade"}"#,
        r#"{"object_id": [7]}"#,
    ];
    let script: Vec<&str> = replies.iter().copied().cycle().take(400).collect();
    let script_path = tmp.path().join("script.json");
    std::fs::write(&script_path, serde_json::to_string(&script).unwrap()).map_err(|e| e.to_string())?;
    let mut trees = Vec::new();
    for run in ["a", "b"] {
        let out_dir = tmp.path().join(run);
        let out = common::run(&[
            "evaluate",
            "--scene",
            common::s(common::scene_dir()),
            "--out",
            common::s(&out_dir),
            "--backend",
            "scripted",
            "--script",
            common::s(&script_path),
            "--image-size",
            "256",
        ]);
        ensure!(
            out.status.success(),
            "run {run}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        trees.push(common::tree_bytes(&out_dir));
    }
    let traces = trees[0]
        .iter()
        .filter(|(p, _)| p.to_string_lossy().ends_with("_trace.json"))
        .count();
    ensure!(
        trees[0].iter().any(|(p, _)| p == Path::new("report.json")),
        "no report.json"
    );
    ensure!(traces == common::queries().len(), "{traces} traces");
    ensure!(trees[0] == trees[1], "outputs differ between runs");
    Ok(format!(
        "{} files byte-identical across runs ({traces} traces)",
        trees[0].len()
    ))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("live smoke", live_smoke),
        ("holistic view geometry", holistic_geometry),
        ("projection vs scalar oracle", projection_oracle),
        ("IoU vs voxel oracle", iou_oracle),
        ("visibility and keyframes", visibility_and_keyframes),
        ("renderer consistency", renderer_consistency),
        ("oracle end-to-end", oracle_end_to_end),
        ("adversarial replies", adversarial),
        ("golden prompts", golden_prompts),
        ("anchor threshold branch", tau_branch),
        ("evaluate determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS  {:>2}  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL  {:>2}  {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
