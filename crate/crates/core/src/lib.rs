//! Zero-shot 3D visual grounding.
//!
//! Given a colored point cloud, a detected object layout and posed RGB-D
//! frames, the pipeline localizes the object a natural-language query refers
//! to. A vision-language model is consulted in stages: it picks the most
//! informative holistic rendering of the scene, screens annotated candidate
//! objects down to a short list, then decides between them using both the
//! rendering and the camera frames that observe each candidate best.

pub mod agent;
pub mod eval;
pub mod projection;
pub mod render;
pub mod scene;
pub mod synth;
pub mod vlm;
