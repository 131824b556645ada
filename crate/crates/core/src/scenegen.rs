//! Seeded procedural generator of top-down cluttered bin scenes.
//!
//! Shapes are painted in order onto a blank label map, so later shapes
//! occlude earlier ones. Shapes left with no visible pixel are dropped and
//! the survivors are renumbered `1..=n` in paint order.
//!
//! Randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with
//! `seed_from_u64`, whose output stream is fixed across platforms.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::maskio::{GroundTruthScene, InstanceId, InstanceLabelMap, BACKGROUND};

/// Upper bound on objects per scene in the default configuration.
pub const DEFAULT_MAX_OBJECTS: u32 = 20;

/// Extra shapes tried when occlusion leaves fewer than the minimum visible.
const MAX_TOP_UPS: usize = 10_000;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SceneError {
    #[error("invalid scene config: {0}")]
    InvalidConfig(String),
    #[error("could not fit {0} visible objects into the bin")]
    Crowded(u32),
    #[error("noise must lie in [0, 1], got {0}")]
    InvalidNoise(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Rectangle,
    Ellipse,
    /// Stadium: a rectangle with semicircular ends.
    Capsule,
}

/// Scene generator configuration document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub width: u32,
    pub height: u32,
    /// Inclusive `[lo, hi]` range for the number of objects.
    #[serde(default = "default_objects")]
    pub n_objects: [u32; 2],
    #[serde(default = "default_kinds")]
    pub shape_kinds: Vec<ShapeKind>,
    /// Inclusive `[min, max]` extent of an object's long side, in pixels.
    pub size_range: [f64; 2],
    #[serde(default)]
    pub seed: u64,
    /// Border in pixels that stays background.
    #[serde(default)]
    pub bin_margin: u32,
}

fn default_objects() -> [u32; 2] {
    [1, DEFAULT_MAX_OBJECTS]
}

fn default_kinds() -> Vec<ShapeKind> {
    vec![ShapeKind::Rectangle, ShapeKind::Ellipse, ShapeKind::Capsule]
}

impl SceneConfig {
    /// A `width x height` bin holding 1 to 20 objects of any kind.
    pub fn new(width: u32, height: u32, size_range: [f64; 2]) -> Self {
        Self {
            width,
            height,
            n_objects: default_objects(),
            shape_kinds: default_kinds(),
            size_range,
            seed: 0,
            bin_margin: 0,
        }
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let bad = |m: String| Err(SceneError::InvalidConfig(m));
        let [lo, hi] = self.n_objects;
        if self.width == 0 || self.height == 0 {
            return bad(format!("image size {}x{}", self.width, self.height));
        }
        if lo < 1 || lo > hi || hi > InstanceId::MAX as u32 {
            return bad(format!("object count range [{lo}, {hi}]"));
        }
        if self.shape_kinds.is_empty() {
            return bad("no shape kinds".into());
        }
        let [smin, smax] = self.size_range;
        if !(smin >= 1.0 && smin <= smax && smax.is_finite()) {
            return bad(format!("size range [{smin}, {smax}]; sizes must be >= 1"));
        }
        if 2 * self.bin_margin >= self.width.min(self.height) {
            return bad(format!(
                "bin margin {} leaves no interior in {}x{}",
                self.bin_margin, self.width, self.height
            ));
        }
        Ok(())
    }
}

/// One painted shape, in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shape {
    pub kind: ShapeKind,
    pub center: [f64; 2],
    /// Half extent along the shape's own long axis.
    pub half_length: f64,
    /// Half extent across it.
    pub half_breadth: f64,
    pub orientation: f64,
}

impl Shape {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.orientation.sin_cos();
        let (dx, dy) = (x - self.center[0], y - self.center[1]);
        let lx = c * dx + s * dy;
        let ly = -s * dx + c * dy;
        let (a, b) = (self.half_length, self.half_breadth);
        match self.kind {
            ShapeKind::Rectangle => lx.abs() <= a && ly.abs() <= b,
            ShapeKind::Ellipse => (lx / a).powi(2) + (ly / b).powi(2) <= 1.0,
            ShapeKind::Capsule => {
                let cx = lx.clamp(-(a - b), a - b);
                (lx - cx).powi(2) + ly.powi(2) <= b * b
            }
        }
    }

    fn bounds(&self) -> (f64, f64, f64, f64) {
        let r = self.half_length.hypot(self.half_breadth);
        (
            self.center[0] - r,
            self.center[0] + r,
            self.center[1] - r,
            self.center[1] + r,
        )
    }
}

fn draw_shape(rng: &mut ChaCha8Rng, cfg: &SceneConfig) -> Shape {
    let kind = cfg.shape_kinds[rng.random_range(0..cfg.shape_kinds.len())];
    let [smin, smax] = cfg.size_range;
    let length = if smax > smin { rng.random_range(smin..=smax) } else { smin };
    let breadth = if length > smin { rng.random_range(smin..=length) } else { smin };
    let m = cfg.bin_margin;
    // centers sit on pixel centers so every shape covers at least one pixel
    let cx = rng.random_range(m..cfg.width - m) as f64;
    let cy = rng.random_range(m..cfg.height - m) as f64;
    let orientation = rng.random_range(0.0..PI);
    Shape {
        kind,
        center: [cx, cy],
        half_length: length / 2.0,
        half_breadth: breadth / 2.0,
        orientation,
    }
}

fn paint(shapes: &[Shape], cfg: &SceneConfig) -> Vec<InstanceId> {
    let (w, h, m) = (cfg.width, cfg.height, cfg.bin_margin);
    let mut labels = vec![BACKGROUND; (w * h) as usize];
    for (i, shape) in shapes.iter().enumerate() {
        let id = i as InstanceId + 1;
        let (x0, x1, y0, y1) = shape.bounds();
        let xs = (x0.floor().max(m as f64) as u32)..=(x1.ceil().min((w - m - 1) as f64) as u32);
        let ys = (y0.floor().max(m as f64) as u32)..=(y1.ceil().min((h - m - 1) as f64) as u32);
        for y in ys {
            for x in xs.clone() {
                if shape.contains(x as f64, y as f64) {
                    labels[(y * w + x) as usize] = id;
                }
            }
        }
    }
    labels
}

/// Renumbers surviving ids `1..=n` in paint order, dropping invisible shapes.
fn compact(labels: &mut [InstanceId], painted: usize) -> usize {
    let mut visible = vec![false; painted + 1];
    for &l in labels.iter() {
        visible[l as usize] = true;
    }
    let mut remap = vec![BACKGROUND; painted + 1];
    let mut next = 0;
    for id in 1..=painted {
        if visible[id] {
            next += 1;
            remap[id] = next as InstanceId;
        }
    }
    for l in labels.iter_mut() {
        *l = remap[*l as usize];
    }
    next
}

/// A generated scene and the shapes that were painted.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedScene {
    pub ground_truth: GroundTruthScene,
    /// Painted shapes in paint order, including any that ended up invisible.
    pub shapes: Vec<Shape>,
}

/// Generates a scene from `cfg`; identical configs give identical scenes.
pub fn generate(cfg: &SceneConfig) -> Result<GeneratedScene, SceneError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let [lo, hi] = cfg.n_objects;
    let n = rng.random_range(lo..=hi) as usize;
    let mut shapes: Vec<Shape> = (0..n).map(|_| draw_shape(&mut rng, cfg)).collect();
    let mut labels = paint(&shapes, cfg);
    let mut visible = compact(&mut labels, shapes.len());
    // Each added shape lands on top and is visible, so the count grows by at
    // most one per step and cannot overshoot `lo <= hi`.
    let mut top_ups = 0;
    while visible < lo as usize {
        if top_ups == MAX_TOP_UPS || shapes.len() >= InstanceId::MAX as usize {
            return Err(SceneError::Crowded(lo));
        }
        top_ups += 1;
        shapes.push(draw_shape(&mut rng, cfg));
        labels = paint(&shapes, cfg);
        visible = compact(&mut labels, shapes.len());
    }
    let map = InstanceLabelMap::with_unit_scores(cfg.width, cfg.height, labels)
        .expect("painted labels form a valid map");
    let ground_truth = GroundTruthScene::from_label_map(map).expect("compacted ids are consecutive");
    Ok(GeneratedScene {
        ground_truth,
        shapes,
    })
}

/// How [`perturb_scores`] degrades a scene into a prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Perturbation {
    /// Confidence becomes `1 - u * noise`, `u` uniform in `[0, 1)`.
    pub noise: f64,
    /// Randomly erode or dilate each mask by one pixel.
    pub morph: bool,
    pub seed: u64,
}

#[derive(Clone, Copy, PartialEq)]
enum Morph {
    Keep,
    Erode,
    Dilate,
}

const NEIGHBORS: [(i64, i64); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

/// Turns ground truth into an imperfect prediction. Draws, per instance in
/// ascending id order: the confidence, then (with `morph`) the morphology.
pub fn perturb_scores(scene: &GroundTruthScene, p: &Perturbation) -> Result<InstanceLabelMap, SceneError> {
    if !(0.0..=1.0).contains(&p.noise) {
        return Err(SceneError::InvalidNoise(p.noise));
    }
    let src = scene.labelmap();
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut scores = BTreeMap::new();
    let mut morphs = BTreeMap::new();
    for id in src.ids() {
        let u: f64 = rng.random();
        scores.insert(id, 1.0 - u * p.noise);
        let m = if p.morph {
            match rng.random_range(0..3) {
                0 => Morph::Keep,
                1 => Morph::Erode,
                _ => Morph::Dilate,
            }
        } else {
            Morph::Keep
        };
        morphs.insert(id, m);
    }

    let (w, h) = (src.width() as i64, src.height() as i64);
    let mut labels = src.labels().to_vec();
    if p.morph {
        // decisions read the source map only, so instance order does not matter
        for y in 0..h {
            for x in 0..w {
                let here = src.get(x, y);
                let idx = (y * w + x) as usize;
                if here != BACKGROUND {
                    let eroded = morphs[&here] == Morph::Erode
                        && NEIGHBORS.iter().any(|&(dx, dy)| {
                            let (nx, ny) = (x + dx, y + dy);
                            nx >= 0 && ny >= 0 && nx < w && ny < h && src.get(nx, ny) != here
                        });
                    if eroded {
                        labels[idx] = BACKGROUND;
                    }
                } else {
                    // lowest dilating neighbor id claims the pixel
                    labels[idx] = NEIGHBORS
                        .iter()
                        .map(|&(dx, dy)| src.get(x + dx, y + dy))
                        .filter(|&n| n != BACKGROUND && morphs[&n] == Morph::Dilate)
                        .min()
                        .unwrap_or(BACKGROUND);
                }
            }
        }
        let mut present = vec![false; InstanceId::MAX as usize + 1];
        for &l in &labels {
            present[l as usize] = true;
        }
        scores.retain(|id, _| present[*id as usize]);
    }
    Ok(InstanceLabelMap::new(src.width(), src.height(), labels, scores)
        .expect("perturbed map keeps scores and labels in sync"))
}

/// Per-scene seeds for a batch, drawn from one ChaCha8 stream.
pub fn batch_seeds(base_seed: u64, count: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    (0..count).map(|_| rng.random()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(seed: u64) -> SceneConfig {
        SceneConfig {
            seed,
            bin_margin: 4,
            ..SceneConfig::new(64, 48, [4.0, 16.0])
        }
    }

    #[test]
    fn same_seed_same_scene() {
        let a = generate(&cfg(11)).unwrap();
        let b = generate(&cfg(11)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.ground_truth, generate(&cfg(12)).unwrap().ground_truth);
    }

    #[test]
    fn single_object_config() {
        for seed in 0..20 {
            let c = SceneConfig {
                n_objects: [1, 1],
                ..cfg(seed)
            };
            let s = generate(&c).unwrap();
            assert_eq!(s.ground_truth.instances().len(), 1);
            assert_eq!(s.ground_truth.labelmap().ids().collect::<Vec<_>>(), vec![1]);
        }
    }

    #[test]
    fn config_validation() {
        assert!(SceneConfig { n_objects: [0, 3], ..cfg(0) }.validate().is_err());
        assert!(SceneConfig { n_objects: [4, 3], ..cfg(0) }.validate().is_err());
        assert!(SceneConfig { size_range: [0.0, 3.0], ..cfg(0) }.validate().is_err());
        assert!(SceneConfig { bin_margin: 24, ..cfg(0) }.validate().is_err());
        assert!(SceneConfig { shape_kinds: vec![], ..cfg(0) }.validate().is_err());
        let doc: SceneConfig = serde_json::from_str(
            r#"{"width": 32, "height": 32, "size_range": [3, 6], "shape_kinds": ["capsule"]}"#,
        )
        .unwrap();
        assert_eq!(doc.n_objects, [1, 20]);
        assert!(doc.validate().is_ok());
    }

    #[test]
    fn shape_membership() {
        let base = Shape {
            kind: ShapeKind::Rectangle,
            center: [0.0, 0.0],
            half_length: 4.0,
            half_breadth: 1.0,
            orientation: 0.0,
        };
        assert!(base.contains(3.9, 0.9));
        assert!(!base.contains(0.0, 1.5));
        let cap = Shape { kind: ShapeKind::Capsule, ..base };
        assert!(cap.contains(3.0, 0.9) && !cap.contains(3.9, 0.9));
        let ell = Shape { kind: ShapeKind::Ellipse, ..base };
        assert!(ell.contains(3.9, 0.0) && !ell.contains(3.0, 0.9));
        let turned = Shape { orientation: PI / 2.0, ..base };
        assert!(turned.contains(0.0, 3.9) && !turned.contains(3.9, 0.0));
    }

    #[test]
    fn zero_noise_is_identity() {
        let s = generate(&cfg(3)).unwrap();
        let p = perturb_scores(&s.ground_truth, &Perturbation { noise: 0.0, morph: false, seed: 9 }).unwrap();
        assert_eq!(&p, s.ground_truth.labelmap());
        assert!(perturb_scores(&s.ground_truth, &Perturbation { noise: 1.5, morph: false, seed: 9 }).is_err());
    }

    #[test]
    fn perturbation_is_seeded() {
        let s = generate(&cfg(5)).unwrap();
        let p = Perturbation { noise: 0.3, morph: true, seed: 7 };
        let a = perturb_scores(&s.ground_truth, &p).unwrap();
        assert_eq!(a, perturb_scores(&s.ground_truth, &p).unwrap());
        assert!(a.scores().values().all(|&v| (0.7..=1.0).contains(&v)));
        assert_ne!(a, perturb_scores(&s.ground_truth, &Perturbation { seed: 8, ..p }).unwrap());
    }

    #[test]
    fn batch_seeds_are_stable() {
        assert_eq!(batch_seeds(1, 4), batch_seeds(1, 4));
        assert_eq!(batch_seeds(1, 4)[..2], batch_seeds(1, 2)[..]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn scene_contract(seed in any::<u64>(), lo in 1u32..6, extra in 0u32..6, margin in 0u32..8) {
            let c = SceneConfig { seed, n_objects: [lo, lo + extra], bin_margin: margin, ..cfg(0) };
            let s = generate(&c).unwrap();
            let gt = &s.ground_truth;
            let n = gt.instances().len() as u32;
            prop_assert!(n >= lo && n <= lo + extra);
            let map = gt.labelmap();
            for (k, rec) in gt.instances().iter().enumerate() {
                prop_assert_eq!(rec.id as usize, k + 1);
                let count = map.labels().iter().filter(|&&l| l == rec.id).count();
                prop_assert_eq!(count, rec.visible_area);
                prop_assert!(count > 0);
            }
            for y in 0..map.height() {
                for x in 0..map.width() {
                    let inside = x >= margin && y >= margin
                        && x < map.width() - margin && y < map.height() - margin;
                    if !inside {
                        prop_assert_eq!(map.get(x as i64, y as i64), 0);
                    }
                }
            }
        }

        #[test]
        fn morph_changes_masks_by_at_most_one_pixel(seed in any::<u64>(), pseed in any::<u64>()) {
            let s = generate(&cfg(seed)).unwrap();
            let src = s.ground_truth.labelmap();
            let p = perturb_scores(&s.ground_truth, &Perturbation { noise: 0.5, morph: true, seed: pseed }).unwrap();
            for y in 0..src.height() as i64 {
                for x in 0..src.width() as i64 {
                    let (a, b) = (src.get(x, y), p.get(x, y));
                    if a != b {
                        // changed pixels become background or take a neighboring id
                        let near = NEIGHBORS.iter().any(|&(dx, dy)| src.get(x + dx, y + dy) == b);
                        prop_assert!(b == 0 || (a == 0 && near));
                    }
                }
            }
        }
    }
}
