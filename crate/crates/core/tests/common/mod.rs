#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use vgrounder::scene::Scene;
use vgrounder::synth::{generate, SynthSpec};

pub const DEMO_SEED: u64 = 11;

/// The demo scene, generated once per test binary.
pub fn demo_dir() -> &'static Path {
    static DIR: OnceLock<(tempfile::TempDir, PathBuf)> = OnceLock::new();
    let (_, path) = DIR.get_or_init(|| {
        let tmp = tempfile::tempdir().expect("tempdir");
        let path = tmp.path().join("demo");
        generate(&SynthSpec::demo(DEMO_SEED), &path).expect("generate demo scene");
        (tmp, path)
    });
    path
}

pub fn demo_scene() -> &'static Scene {
    static SCENE: OnceLock<Scene> = OnceLock::new();
    SCENE.get_or_init(|| Scene::load(demo_dir()).expect("load demo scene"))
}

/// Every file under `dir` with its contents, sorted by relative path.
pub fn tree_bytes(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}
