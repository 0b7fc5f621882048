//! Exact ray casting against the room shell and the object boxes.

use crate::scene::Vec3;

/// What a ray struck first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Surface {
    Floor,
    /// Walls in order `x = 0`, `x = max`, `y = 0`, `y = max`.
    Wall(usize),
    /// Index into the object list.
    Object(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    /// Ray parameter; equals camera depth when the direction has unit
    /// forward component.
    pub t: f64,
    pub surface: Surface,
    /// Axis of the surface normal (0 = x, 1 = y, 2 = z).
    pub normal_axis: usize,
}

/// Floor plus four walls of an open-topped room spanning `[0, size]`,
/// together with solid axis-aligned boxes.
#[derive(Debug, Clone)]
pub struct World {
    pub room: Vec3,
    pub boxes: Vec<(Vec3, Vec3)>,
}

const T_MIN: f64 = 1e-9;

/// Entry parameter and entry axis of a ray into a box, if ahead of the
/// origin.
pub fn ray_box(origin: &Vec3, dir: &Vec3, min: &Vec3, max: &Vec3) -> Option<(f64, usize)> {
    let (mut t0, mut t1, mut axis) = (f64::NEG_INFINITY, f64::INFINITY, 0);
    for i in 0..3 {
        if dir[i] == 0.0 {
            if origin[i] < min[i] || origin[i] > max[i] {
                return None;
            }
            continue;
        }
        let a = (min[i] - origin[i]) / dir[i];
        let b = (max[i] - origin[i]) / dir[i];
        let (near, far) = if a < b { (a, b) } else { (b, a) };
        if near > t0 {
            t0 = near;
            axis = i;
        }
        t1 = t1.min(far);
    }
    (t0 <= t1 && t0 > T_MIN).then_some((t0, axis))
}

/// Hit with the axis-aligned rectangle `coord[axis] = level` bounded by
/// `lo..hi` on the other two axes.
fn ray_rect(origin: &Vec3, dir: &Vec3, axis: usize, level: f64, lo: &Vec3, hi: &Vec3) -> Option<f64> {
    if dir[axis] == 0.0 {
        return None;
    }
    let t = (level - origin[axis]) / dir[axis];
    if t <= T_MIN {
        return None;
    }
    let p = origin + dir * t;
    (0..3)
        .filter(|i| *i != axis)
        .all(|i| p[i] >= lo[i] && p[i] <= hi[i])
        .then_some(t)
}

impl World {
    pub fn cast(&self, origin: &Vec3, dir: &Vec3) -> Option<Hit> {
        let zero = Vec3::zeros();
        let r = self.room;
        let mut best: Option<Hit> = None;
        let mut offer = |t: f64, surface: Surface, normal_axis: usize| {
            if best.is_none_or(|b| t < b.t) {
                best = Some(Hit {
                    t,
                    surface,
                    normal_axis,
                });
            }
        };
        if let Some(t) = ray_rect(origin, dir, 2, 0.0, &zero, &r) {
            offer(t, Surface::Floor, 2);
        }
        for (w, (axis, level)) in [(0, 0.0), (0, r.x), (1, 0.0), (1, r.y)].into_iter().enumerate() {
            if let Some(t) = ray_rect(origin, dir, axis, level, &zero, &r) {
                offer(t, Surface::Wall(w), axis);
            }
        }
        for (i, (min, max)) in self.boxes.iter().enumerate() {
            if let Some((t, axis)) = ray_box(origin, dir, min, max) {
                offer(t, Surface::Object(i), axis);
            }
        }
        best
    }
}
