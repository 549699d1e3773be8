//! Object catalog, scene sampling, scripted object motion and the top-down
//! raster renderer.
//!
//! Raster intensities live on a 1/240 grid so that a frame fits in one byte
//! per channel while the exposed values stay exact `f64`s.

use std::fmt;
use std::io::{self, Write};

use rand::Rng;
use thiserror::Error;

use crate::kinematics::{
    frame_time, plan_action_trajectory, Action, ArmModel, Contact, JointVector, KinematicsError,
    Trajectory, Vec3, CONTACT_HEIGHT, DEFAULT_FPS, MOTION_FRAMES, PUSH_DISPLACEMENT,
};

/// Intensity denominator of the raster grid.
pub const LEVELS: u8 = 240;
pub const RASTER_HEIGHT: usize = 16;
pub const RASTER_WIDTH: usize = 24;
pub const CELL_SIZE: f64 = 0.03;
pub const GLYPH_SIZE: usize = 5;
/// Minimum center distance between two objects (one glyph width).
pub const MIN_OBJECT_DISTANCE: f64 = GLYPH_SIZE as f64 * CELL_SIZE;
const BACKGROUND_LEVEL: u8 = LEVELS / 2;
const MAX_PLACEMENT_TRIES: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("could not place {what} after {MAX_PLACEMENT_TRIES} attempts")]
    Placement { what: &'static str },
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ShapeId {
    Football,
    Banana,
    Bottle,
    Ring,
    Apple,
    Pylon,
    Star,
    Cup,
    Cube,
}

impl ShapeId {
    pub const ALL: [ShapeId; 9] = [
        ShapeId::Football,
        ShapeId::Banana,
        ShapeId::Bottle,
        ShapeId::Ring,
        ShapeId::Apple,
        ShapeId::Pylon,
        ShapeId::Star,
        ShapeId::Cup,
        ShapeId::Cube,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ShapeId::Football => "football",
            ShapeId::Banana => "banana",
            ShapeId::Bottle => "bottle",
            ShapeId::Ring => "ring",
            ShapeId::Apple => "apple",
            ShapeId::Pylon => "pylon",
            ShapeId::Star => "star",
            ShapeId::Cup => "cup",
            ShapeId::Cube => "cube",
        }
    }

    /// 5×5 bitmap: `#` takes the object color, `k` is always black, `.` is
    /// transparent.
    pub fn glyph(self) -> [&'static str; GLYPH_SIZE] {
        match self {
            ShapeId::Football => [".###.", "#k#k#", "##k##", "#k#k#", ".###."],
            ShapeId::Banana => ["....#", "...##", "..##.", "###..", ".#..."],
            ShapeId::Bottle => ["..#..", ".###.", ".###.", ".###.", ".###."],
            ShapeId::Ring => [".###.", "#...#", "#...#", "#...#", ".###."],
            ShapeId::Apple => ["..#..", ".###.", "#####", "#####", ".###."],
            ShapeId::Pylon => ["..#..", "..#..", ".###.", ".###.", "#####"],
            ShapeId::Star => ["..#..", "##k##", ".#k#.", ".#.#.", "#...#"],
            ShapeId::Cup => ["#...#", "#...#", "#####", "#####", ".###."],
            ShapeId::Cube => ["#####", "#####", "#####", "#####", "#####"],
        }
    }

    /// Number of glyph pixels that take the object color.
    pub fn colored_pixels(self) -> usize {
        self.glyph().iter().map(|row| row.bytes().filter(|&b| b == b'#').count()).sum()
    }
}

impl fmt::Display for ShapeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ColorId {
    Red,
    Green,
    Blue,
    Yellow,
    White,
    Brown,
}

impl ColorId {
    pub const ALL: [ColorId; 6] =
        [ColorId::Red, ColorId::Green, ColorId::Blue, ColorId::Yellow, ColorId::White, ColorId::Brown];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ColorId::Red => "red",
            ColorId::Green => "green",
            ColorId::Blue => "blue",
            ColorId::Yellow => "yellow",
            ColorId::White => "white",
            ColorId::Brown => "brown",
        }
    }

    /// Channel levels on the 1/240 grid.
    pub fn levels(self) -> [u8; 3] {
        match self {
            ColorId::Red => [240, 0, 0],
            ColorId::Green => [24, 168, 24],
            ColorId::Blue => [0, 48, 240],
            ColorId::Yellow => [240, 240, 0],
            ColorId::White => [240, 240, 240],
            ColorId::Brown => [144, 72, 24],
        }
    }

    pub fn rgb(self) -> [f64; 3] {
        self.levels().map(level_value)
    }
}

impl fmt::Display for ColorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub fn level_value(level: u8) -> f64 {
    f64::from(level) / f64::from(LEVELS)
}

/// Table surface in world coordinates (meters), z = 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableBounds {
    pub x: (f64, f64),
    pub y: (f64, f64),
}

impl Default for TableBounds {
    fn default() -> Self {
        Self {
            x: (-0.36, -0.36 + RASTER_WIDTH as f64 * CELL_SIZE),
            y: (0.12, 0.12 + RASTER_HEIGHT as f64 * CELL_SIZE),
        }
    }
}

impl TableBounds {
    pub fn contains(&self, p: Vec3) -> bool {
        p[0] >= self.x.0 && p[0] <= self.x.1 && p[1] >= self.y.0 && p[1] <= self.y.1
    }

    /// Region for the manipulated object: a full push in either direction
    /// keeps the whole glyph on the table.
    pub fn placement_region(&self) -> TableBounds {
        let half = MIN_OBJECT_DISTANCE / 2.0;
        TableBounds {
            x: (self.x.0 + half + PUSH_DISPLACEMENT, self.x.1 - half - PUSH_DISPLACEMENT),
            y: (self.y.0 + half, self.y.1 - half),
        }
    }

    /// Region for a static distractor: the glyph stays on the table.
    pub fn distractor_region(&self) -> TableBounds {
        let half = MIN_OBJECT_DISTANCE / 2.0;
        TableBounds { x: (self.x.0 + half, self.x.1 - half), y: (self.y.0 + half, self.y.1 - half) }
    }

    fn sample(&self, rng: &mut impl Rng) -> Vec3 {
        [rng.gen_range(self.x.0..=self.x.1), rng.gen_range(self.y.0..=self.y.1), 0.0]
    }

    /// Raster cell (row, col) containing a world point; rows run from the far
    /// edge of the table towards the base. May fall outside the raster.
    pub fn project(&self, p: Vec3) -> (i64, i64) {
        let col = ((p[0] - self.x.0) / CELL_SIZE).floor() as i64;
        let row = ((self.y.1 - p[1]) / CELL_SIZE).floor() as i64;
        (row, col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneObject {
    pub shape: ShapeId,
    pub color: ColorId,
    pub position: Vec3,
    pub held: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub table: TableBounds,
    pub objects: Vec<SceneObject>,
    pub target: usize,
    pub action: Action,
    /// Table point the action is planned around: the object's resting place,
    /// or the drop point for put-down.
    pub placement: Vec3,
    pub joints: JointVector,
}

impl Scene {
    pub fn target_object(&self) -> &SceneObject {
        &self.objects[self.target]
    }
}

/// Samples the initial scene for one interaction. With a distractor pool, a
/// second object with a different (shape, color) pair is placed clear of the
/// target's whole motion path.
pub fn sample_scene(
    arm: &ArmModel,
    action: Action,
    shape: ShapeId,
    color: ColorId,
    distractors: Option<&[(ShapeId, ColorId)]>,
    rng: &mut impl Rng,
) -> Result<Scene, SceneError> {
    let table = TableBounds::default();
    let placement = table.placement_region().sample(rng);
    let mut scene = Scene {
        table,
        objects: vec![SceneObject { shape, color, position: placement, held: false }],
        target: 0,
        action,
        placement,
        joints: arm.home(),
    };
    scene.objects[0] = target_at(&scene, arm, 0)?;

    if let Some(pool) = distractors {
        let candidates: Vec<_> = pool.iter().filter(|&&p| p != (shape, color)).copied().collect();
        if candidates.is_empty() {
            return Err(SceneError::Placement { what: "distractor (empty pool)" });
        }
        let (d_shape, d_color) = candidates[rng.gen_range(0..candidates.len())];
        let (path_start, path_end) = match action {
            Action::PushRight | Action::PushLeft => {
                let mut end = placement;
                end[0] += action.push_sign() * PUSH_DISPLACEMENT;
                (placement, end)
            }
            _ => (placement, placement),
        };
        let region = table.distractor_region();
        let mut placed = None;
        for _ in 0..MAX_PLACEMENT_TRIES {
            let p = region.sample(rng);
            if segment_distance(p, path_start, path_end) >= MIN_OBJECT_DISTANCE {
                placed = Some(p);
                break;
            }
        }
        let position = placed.ok_or(SceneError::Placement { what: "distractor" })?;
        scene.objects.push(SceneObject { shape: d_shape, color: d_color, position, held: false });
    }
    Ok(scene)
}

fn segment_distance(p: Vec3, a: Vec3, b: Vec3) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 { ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let d = [ap[0] - t * ab[0], ap[1] - t * ab[1]];
    (d[0] * d[0] + d[1] * d[1]).sqrt()
}

/// State of the manipulated object at a motion frame.
fn target_at(scene: &Scene, arm: &ArmModel, frame: usize) -> Result<SceneObject, SceneError> {
    let plan = plan_action_trajectory(arm, scene.action, scene.placement, scene.placement)?;
    let traj = Trajectory::new(plan)?;
    let t = frame_time(frame.min(MOTION_FRAMES - 1), DEFAULT_FPS);
    let mut obj = scene.objects[scene.target];
    obj.position = scene.placement;
    obj.held = false;
    for (i, w) in traj.waypoints().iter().enumerate() {
        let start = traj.segment_start(i);
        if t < start {
            break;
        }
        let progress = if w.duration > 0.0 { ((t - start) / w.duration).clamp(0.0, 1.0) } else { 1.0 };
        match w.contact {
            Contact::Free => obj.held = false,
            Contact::Push(dx) => {
                obj.held = false;
                obj.position[0] = scene.placement[0] + dx * progress;
            }
            Contact::Held => {
                obj.held = true;
                let from = if i == 0 { w.point } else { traj.waypoints()[i - 1].point };
                for k in 0..3 {
                    obj.position[k] = from[k] + (w.point[k] - from[k]) * progress;
                }
                obj.position[2] -= CONTACT_HEIGHT;
            }
        }
    }
    Ok(obj)
}

/// Scene at motion frame `frame`: the manipulated object follows the scripted
/// contact segments, distractors stay put. Frames past the motion phase keep
/// the final state. Joint state is left to the caller.
pub fn step_scene(initial: &Scene, arm: &ArmModel, frame: usize) -> Result<Scene, SceneError> {
    let mut scene = initial.clone();
    scene.objects[scene.target] = target_at(initial, arm, frame)?;
    Ok(scene)
}

/// H×W×3 image with channel values on the 1/[`LEVELS`] grid.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Raster {
    height: usize,
    width: usize,
    levels: Vec<u8>,
}

impl Raster {
    pub fn filled(height: usize, width: usize, level: u8) -> Self {
        Self { height, width, levels: vec![level.min(LEVELS); height * width * 3] }
    }

    /// Builds a raster from channel values; each value must sit exactly on
    /// the intensity grid.
    pub fn from_values(height: usize, width: usize, values: &[f64]) -> Option<Self> {
        if values.len() != height * width * 3 {
            return None;
        }
        let mut levels = Vec::with_capacity(values.len());
        for &v in values {
            let l = (v * f64::from(LEVELS)).round();
            if !(0.0..=f64::from(LEVELS)).contains(&l) || level_value(l as u8) != v {
                return None;
            }
            levels.push(l as u8);
        }
        Some(Self { height, width, levels })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn levels(&self) -> &[u8] {
        &self.levels
    }

    pub fn pixel(&self, row: usize, col: usize) -> [f64; 3] {
        let i = (row * self.width + col) * 3;
        [level_value(self.levels[i]), level_value(self.levels[i + 1]), level_value(self.levels[i + 2])]
    }

    fn pixel_levels(&self, row: usize, col: usize) -> [u8; 3] {
        let i = (row * self.width + col) * 3;
        [self.levels[i], self.levels[i + 1], self.levels[i + 2]]
    }

    fn set(&mut self, row: i64, col: i64, rgb: [u8; 3]) {
        if row < 0 || col < 0 || row as usize >= self.height || col as usize >= self.width {
            return;
        }
        let i = (row as usize * self.width + col as usize) * 3;
        self.levels[i..i + 3].copy_from_slice(&rgb);
    }

    /// Flattened channel values in row-major H×W×3 order.
    pub fn to_values(&self) -> Vec<f64> {
        self.levels.iter().map(|&l| level_value(l)).collect()
    }

    pub fn write_values_into(&self, out: &mut Vec<f64>) {
        out.extend(self.levels.iter().map(|&l| level_value(l)));
    }

    /// Plain-text PPM (P3) with maxval equal to the intensity grid.
    pub fn write_ppm(&self, mut w: impl Write) -> io::Result<()> {
        writeln!(w, "P3\n{} {}\n{}", self.width, self.height, LEVELS)?;
        for row in 0..self.height {
            let line: Vec<String> = (0..self.width)
                .map(|col| {
                    let [r, g, b] = self.pixel_levels(row, col);
                    format!("{r} {g} {b}")
                })
                .collect();
            writeln!(w, "{}", line.join("  "))?;
        }
        Ok(())
    }

    /// Cells whose color differs between two rasters of equal shape.
    pub fn diff_cells(&self, other: &Raster) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for row in 0..self.height {
            for col in 0..self.width {
                if self.pixel_levels(row, col) != other.pixel_levels(row, col) {
                    out.push((row, col));
                }
            }
        }
        out
    }
}

/// Top-left cell of the 2×2 effector marker, centered on the projection.
pub fn marker_origin(table: &TableBounds, effector: Vec3) -> (i64, i64) {
    let shifted = [effector[0] - CELL_SIZE / 2.0, effector[1] + CELL_SIZE / 2.0, effector[2]];
    table.project(shifted)
}

/// Orthographic top-down render: gray table, object glyphs (held objects on
/// top), then the white effector marker.
pub fn render_frame(scene: &Scene, arm: &ArmModel) -> Raster {
    let mut raster = Raster::filled(RASTER_HEIGHT, RASTER_WIDTH, BACKGROUND_LEVEL);
    let mut order: Vec<&SceneObject> = scene.objects.iter().collect();
    order.sort_by_key(|o| o.held);
    for obj in order {
        let (row, col) = scene.table.project(obj.position);
        let color = obj.color.levels();
        for (dr, line) in obj.shape.glyph().iter().enumerate() {
            for (dc, b) in line.bytes().enumerate() {
                let (r, c) = (row + dr as i64 - 2, col + dc as i64 - 2);
                match b {
                    b'#' => raster.set(r, c, color),
                    b'k' => raster.set(r, c, [0, 0, 0]),
                    _ => {}
                }
            }
        }
    }
    let effector = arm.forward_kinematics(&scene.joints);
    let (row, col) = marker_origin(&scene.table, effector);
    for dr in 0..2 {
        for dc in 0..2 {
            raster.set(row + dr, col + dc, [LEVELS; 3]);
        }
    }
    raster
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn count_color(r: &Raster, color: ColorId) -> usize {
        let mut n = 0;
        for row in 0..r.height() {
            for col in 0..r.width() {
                if r.pixel_levels(row, col) == color.levels() {
                    n += 1;
                }
            }
        }
        n
    }

    #[test]
    fn catalog_sizes_and_distinct_glyphs() {
        assert_eq!(ShapeId::ALL.len(), 9);
        for (i, a) in ShapeId::ALL.iter().enumerate() {
            for b in &ShapeId::ALL[i + 1..] {
                assert_ne!(a.glyph(), b.glyph(), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn colors_are_far_apart() {
        for (i, a) in ColorId::ALL.iter().enumerate() {
            for b in &ColorId::ALL[i + 1..] {
                let (x, y) = (a.rgb(), b.rgb());
                let d = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2) + (x[2] - y[2]).powi(2)).sqrt();
                assert!(d >= 0.3, "{a} vs {b}: {d}");
            }
            // Every color stays distinguishable from the gray table.
            assert_ne!(a.levels(), [BACKGROUND_LEVEL; 3]);
        }
    }

    #[test]
    fn empty_table_shows_only_the_marker() {
        let arm = ArmModel::default();
        let scene = Scene {
            table: TableBounds::default(),
            objects: vec![],
            target: 0,
            action: Action::PickUp,
            placement: [0.0, 0.3, 0.0],
            joints: arm.home(),
        };
        let r = render_frame(&scene, &arm);
        let blank = Raster::filled(RASTER_HEIGHT, RASTER_WIDTH, BACKGROUND_LEVEL);
        let diff = r.diff_cells(&blank);
        assert_eq!(diff.len(), 4);
        let (row, col) = marker_origin(&scene.table, arm.home_position());
        for (dr, dc) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            let cell = ((row + dr) as usize, (col + dc) as usize);
            assert!(diff.contains(&cell));
            assert_eq!(r.pixel(cell.0, cell.1), [1.0; 3]);
        }
    }

    #[test]
    fn ring_renders_its_glyph_pixel_count() {
        let arm = ArmModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let scene = sample_scene(&arm, Action::PushLeft, ShapeId::Ring, ColorId::Red, None, &mut rng).unwrap();
        let mut far = scene.clone();
        // Move the marker away from the object so nothing is occluded.
        far.joints = JointVector::from_degrees([180.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let r = render_frame(&far, &arm);
        assert_eq!(count_color(&r, ColorId::Red), ShapeId::Ring.colored_pixels());
        assert_eq!(ShapeId::Ring.colored_pixels(), 12);
    }

    #[test]
    fn marker_move_changes_only_marker_cells() {
        let arm = ArmModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let scene = sample_scene(&arm, Action::PickUp, ShapeId::Cube, ColorId::Blue, None, &mut rng).unwrap();
        let a = render_frame(&scene, &arm);
        let mut moved = scene.clone();
        moved.joints.0[0] += 0.3;
        let b = render_frame(&moved, &arm);
        let cells = |q: &JointVector| {
            let (r, c) = marker_origin(&scene.table, arm.forward_kinematics(q));
            vec![(r, c), (r, c + 1), (r + 1, c), (r + 1, c + 1)]
        };
        let mut allowed = cells(&scene.joints);
        allowed.extend(cells(&moved.joints));
        for (r, c) in a.diff_cells(&b) {
            assert!(allowed.contains(&(r as i64, c as i64)), "cell {r},{c} changed");
        }
    }

    #[test]
    fn push_moves_object_by_displacement() {
        let arm = ArmModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for action in [Action::PushRight, Action::PushLeft] {
            let scene = sample_scene(&arm, action, ShapeId::Apple, ColorId::Green, None, &mut rng).unwrap();
            let x0 = scene.target_object().position[0];
            let first = step_scene(&scene, &arm, 0).unwrap();
            assert_eq!(first.target_object().position, scene.target_object().position);
            let last = step_scene(&scene, &arm, MOTION_FRAMES - 1).unwrap();
            assert_eq!(last.target_object().position[0], x0 + action.push_sign() * PUSH_DISPLACEMENT);
            assert_eq!(last.target_object().position[1], scene.placement[1]);
        }
    }

    #[test]
    fn pick_up_carries_object_home() {
        let arm = ArmModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let scene = sample_scene(&arm, Action::PickUp, ShapeId::Cup, ColorId::White, None, &mut rng).unwrap();
        assert!(!scene.target_object().held);
        let last = step_scene(&scene, &arm, MOTION_FRAMES - 1).unwrap();
        let home = arm.home_position();
        assert!(last.target_object().held);
        assert!((last.target_object().position[2] - (home[2] - CONTACT_HEIGHT)).abs() < 1e-12);
    }

    #[test]
    fn put_down_starts_held_and_ends_at_drop_point() {
        let arm = ArmModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let scene = sample_scene(&arm, Action::PutDown, ShapeId::Star, ColorId::Brown, None, &mut rng).unwrap();
        assert!(scene.target_object().held);
        let last = step_scene(&scene, &arm, MOTION_FRAMES - 1).unwrap();
        assert!(!last.target_object().held);
        let p = last.target_object().position;
        for k in 0..3 {
            assert!((p[k] - scene.placement[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn distractor_pairs_and_distances() {
        let arm = ArmModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let pool: Vec<_> = ShapeId::ALL[..4].iter().map(|&s| (s, ColorId::Red)).collect();
        for i in 0..1000 {
            let action = Action::ALL[i % 4];
            let scene = sample_scene(&arm, action, ShapeId::Football, ColorId::Red, Some(&pool), &mut rng).unwrap();
            assert_eq!(scene.objects.len(), 2);
            let (t, d) = (scene.objects[0], scene.objects[1]);
            assert_ne!((t.shape, t.color), (d.shape, d.color));
            let dist = ((d.position[0] - scene.placement[0]).powi(2) + (d.position[1] - scene.placement[1]).powi(2)).sqrt();
            assert!(dist >= MIN_OBJECT_DISTANCE);
            assert!(scene.table.contains(d.position));
            // The distractor never moves.
            let last = step_scene(&scene, &arm, MOTION_FRAMES - 1).unwrap();
            assert_eq!(last.objects[1], d);
        }
    }

    #[test]
    fn placements_leave_room_for_the_push() {
        let arm = ArmModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let table = TableBounds::default();
        for _ in 0..1000 {
            let s = sample_scene(&arm, Action::PushRight, ShapeId::Ring, ColorId::Red, None, &mut rng).unwrap();
            assert!(s.placement[0] + PUSH_DISPLACEMENT <= table.x.1);
            let s = sample_scene(&arm, Action::PushLeft, ShapeId::Ring, ColorId::Red, None, &mut rng).unwrap();
            assert!(s.placement[0] - PUSH_DISPLACEMENT >= table.x.0);
        }
    }

    #[test]
    fn all_pairs_render_distinctly() {
        let arm = ArmModel::default();
        let base = Scene {
            table: TableBounds::default(),
            objects: vec![],
            target: 0,
            action: Action::PickUp,
            placement: [0.0, 0.3, 0.0],
            joints: JointVector::from_degrees([180.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
        };
        let mut seen = std::collections::HashSet::new();
        for shape in ShapeId::ALL {
            for color in ColorId::ALL {
                let mut s = base.clone();
                s.objects.push(SceneObject { shape, color, position: [0.0, 0.3, 0.0], held: false });
                assert!(seen.insert(render_frame(&s, &arm)), "{color} {shape} collides");
            }
        }
    }

    #[test]
    fn values_round_trip_through_grid() {
        let r = Raster::filled(2, 3, 77);
        let back = Raster::from_values(2, 3, &r.to_values()).unwrap();
        assert_eq!(r, back);
        assert!(Raster::from_values(1, 1, &[0.3, 0.3, 0.3001]).is_none());
    }

    #[test]
    fn ppm_export_header() {
        let mut out = Vec::new();
        Raster::filled(2, 2, 120).write_ppm(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("P3\n2 2\n240\n120 120 120  120 120 120\n"));
    }
}
