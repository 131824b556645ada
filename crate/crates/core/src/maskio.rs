//! Instance label maps and their on-disk form.
//!
//! A scene is stored as two files sharing a stem:
//!
//! - `<stem>.labels.png`: 16-bit single-channel PNG, pixel value = instance id, 0 = background.
//! - `<stem>.scores.json`: `{"scores": {"<id>": <confidence in [0,1]>}}`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, Luma};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Instance identifier. `0` is background.
pub type InstanceId = u16;

pub const BACKGROUND: InstanceId = 0;

pub const LABELS_SUFFIX: &str = ".labels.png";
pub const SCORES_SUFFIX: &str = ".scores.json";

#[derive(Debug, Error)]
pub enum MaskIoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed raster: {message}")]
    Raster { path: PathBuf, message: String },
    #[error("{path}: malformed scores document: {message}")]
    Scores { path: PathBuf, message: String },
    #[error("label map must be at least 1x1, got {width}x{height}")]
    EmptyDimensions { width: u32, height: u32 },
    #[error("label buffer has {actual} pixels, expected {expected}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("unscored instance {0}")]
    UnscoredInstance(InstanceId),
    #[error("score given for instance {0} which does not appear in the labels")]
    OrphanScore(InstanceId),
    #[error("background id 0 cannot carry a score")]
    BackgroundScore,
    #[error("confidence {score} for instance {id} is outside [0, 1]")]
    ScoreOutOfRange { id: InstanceId, score: f64 },
    #[error("ground truth instance {id} has score {score}, expected 1.0")]
    GroundTruthScore { id: InstanceId, score: f64 },
    #[error("ground truth ids must be consecutive from 1; missing id {0}")]
    NonConsecutiveIds(InstanceId),
}

/// Per-pixel instance ids plus a confidence per instance.
///
/// Immutable once built; [`InstanceLabelMap::new`] enforces that the set of
/// nonzero ids in `labels` and the keys of `scores` coincide.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceLabelMap {
    width: u32,
    height: u32,
    labels: Vec<InstanceId>,
    scores: BTreeMap<InstanceId, f64>,
}

impl InstanceLabelMap {
    /// Builds a map from a row-major label buffer and per-instance scores.
    pub fn new(
        width: u32,
        height: u32,
        labels: Vec<InstanceId>,
        scores: BTreeMap<InstanceId, f64>,
    ) -> Result<Self, MaskIoError> {
        if width == 0 || height == 0 {
            return Err(MaskIoError::EmptyDimensions { width, height });
        }
        let expected = width as usize * height as usize;
        if labels.len() != expected {
            return Err(MaskIoError::LengthMismatch {
                expected,
                actual: labels.len(),
            });
        }
        if scores.contains_key(&BACKGROUND) {
            return Err(MaskIoError::BackgroundScore);
        }
        for (&id, &score) in &scores {
            if !(0.0..=1.0).contains(&score) {
                return Err(MaskIoError::ScoreOutOfRange { id, score });
            }
        }
        let present = distinct_ids(&labels);
        if let Some(&id) = present.iter().find(|id| !scores.contains_key(id)) {
            return Err(MaskIoError::UnscoredInstance(id));
        }
        if let Some(&id) = scores.keys().find(|id| present.binary_search(id).is_err()) {
            return Err(MaskIoError::OrphanScore(id));
        }
        Ok(Self {
            width,
            height,
            labels,
            scores,
        })
    }

    /// Labels with every instance scored 1.0, as used for ground truth.
    pub fn with_unit_scores(
        width: u32,
        height: u32,
        labels: Vec<InstanceId>,
    ) -> Result<Self, MaskIoError> {
        let scores = distinct_ids(&labels).into_iter().map(|id| (id, 1.0)).collect();
        Self::new(width, height, labels, scores)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Row-major label buffer.
    pub fn labels(&self) -> &[InstanceId] {
        &self.labels
    }

    pub fn scores(&self) -> &BTreeMap<InstanceId, f64> {
        &self.scores
    }

    pub fn score(&self, id: InstanceId) -> Option<f64> {
        self.scores.get(&id).copied()
    }

    /// Instance ids in ascending order.
    pub fn ids(&self) -> impl Iterator<Item = InstanceId> + '_ {
        self.scores.keys().copied()
    }

    pub fn instance_count(&self) -> usize {
        self.scores.len()
    }

    /// Label at integer pixel `(x, y)`; anything outside the image is background.
    #[inline]
    pub fn get(&self, x: i64, y: i64) -> InstanceId {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return BACKGROUND;
        }
        self.labels[y as usize * self.width as usize + x as usize]
    }

    /// Pixel count and centroid `(x, y)` of every instance, keyed by id.
    pub fn instance_stats(&self) -> BTreeMap<InstanceId, InstanceStats> {
        let mut acc: BTreeMap<InstanceId, (usize, f64, f64)> = BTreeMap::new();
        let w = self.width as usize;
        for (i, &id) in self.labels.iter().enumerate() {
            if id == BACKGROUND {
                continue;
            }
            let e = acc.entry(id).or_insert((0, 0.0, 0.0));
            e.0 += 1;
            e.1 += (i % w) as f64;
            e.2 += (i / w) as f64;
        }
        acc.into_iter()
            .map(|(id, (n, sx, sy))| {
                let n_f = n as f64;
                (
                    id,
                    InstanceStats {
                        area: n,
                        centroid: [sx / n_f, sy / n_f],
                    },
                )
            })
            .collect()
    }

    /// Copy of this map with replacement scores for the same instance set.
    pub fn with_scores(&self, scores: BTreeMap<InstanceId, f64>) -> Result<Self, MaskIoError> {
        Self::new(self.width, self.height, self.labels.clone(), scores)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceStats {
    /// Number of pixels carrying the id.
    pub area: usize,
    /// Mean pixel position `(x, y)`, pixel centers at integer coordinates.
    pub centroid: [f64; 2],
}

fn distinct_ids(labels: &[InstanceId]) -> Vec<InstanceId> {
    let mut seen = vec![false; InstanceId::MAX as usize + 1];
    for &id in labels {
        seen[id as usize] = true;
    }
    seen.iter()
        .enumerate()
        .skip(1)
        .filter(|(_, &s)| s)
        .map(|(id, _)| id as InstanceId)
        .collect()
}

/// One ground-truth instance record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub id: InstanceId,
    pub centroid: [f64; 2],
    pub visible_area: usize,
}

/// Ground-truth annotation: a unit-score label map plus per-instance records.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthScene {
    labelmap: InstanceLabelMap,
    instances: Vec<InstanceRecord>,
}

impl GroundTruthScene {
    /// Derives the instance records from a label map. Ids must run 1..=n and
    /// every score must be exactly 1.0.
    pub fn from_label_map(labelmap: InstanceLabelMap) -> Result<Self, MaskIoError> {
        for (expected, (&id, &score)) in (1..).zip(labelmap.scores()) {
            if id != expected {
                return Err(MaskIoError::NonConsecutiveIds(expected));
            }
            if score != 1.0 {
                return Err(MaskIoError::GroundTruthScore { id, score });
            }
        }
        let instances = labelmap
            .instance_stats()
            .into_iter()
            .map(|(id, s)| InstanceRecord {
                id,
                centroid: s.centroid,
                visible_area: s.area,
            })
            .collect();
        Ok(Self {
            labelmap,
            instances,
        })
    }

    pub fn labelmap(&self) -> &InstanceLabelMap {
        &self.labelmap
    }

    pub fn instances(&self) -> &[InstanceRecord] {
        &self.instances
    }

    pub fn into_label_map(self) -> InstanceLabelMap {
        self.labelmap
    }
}

#[derive(Serialize, Deserialize)]
struct ScoresDocument {
    scores: BTreeMap<String, f64>,
}

/// Reads a 16-bit single-channel PNG into `(width, height, labels)`.
pub fn load_label_raster(path: &Path) -> Result<(u32, u32, Vec<InstanceId>), MaskIoError> {
    let bytes = fs::read(path).map_err(|source| MaskIoError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let img = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png).map_err(|e| {
        MaskIoError::Raster {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    })?;
    match img {
        DynamicImage::ImageLuma16(buf) => {
            let (w, h) = buf.dimensions();
            Ok((w, h, buf.into_raw()))
        }
        other => Err(MaskIoError::Raster {
            path: path.to_path_buf(),
            message: format!("expected 16-bit single-channel image, found {:?}", other.color()),
        }),
    }
}

/// Parses a scores document.
pub fn parse_scores(text: &str, path: &Path) -> Result<BTreeMap<InstanceId, f64>, MaskIoError> {
    let err = |message: String| MaskIoError::Scores {
        path: path.to_path_buf(),
        message,
    };
    let doc: ScoresDocument = serde_json::from_str(text).map_err(|e| err(e.to_string()))?;
    doc.scores
        .into_iter()
        .map(|(key, score)| {
            let id: InstanceId = key
                .parse()
                .map_err(|_| err(format!("instance key {key:?} is not an integer in 0..=65535")))?;
            Ok((id, score))
        })
        .collect()
}

/// Loads a label map from its raster and scores sidecar.
pub fn load_label_map(labels_path: &Path, scores_path: &Path) -> Result<InstanceLabelMap, MaskIoError> {
    let (width, height, labels) = load_label_raster(labels_path)?;
    let text = fs::read_to_string(scores_path).map_err(|source| MaskIoError::Io {
        path: scores_path.to_path_buf(),
        source,
    })?;
    let scores = parse_scores(&text, scores_path)?;
    InstanceLabelMap::new(width, height, labels, scores)
}

/// Writes the raster and scores sidecar. Loading them back yields an equal map.
pub fn save_label_map(
    map: &InstanceLabelMap,
    labels_path: &Path,
    scores_path: &Path,
) -> Result<(), MaskIoError> {
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(map.width, map.height, map.labels.clone())
            .expect("label buffer length checked at construction");
    buf.save_with_format(labels_path, image::ImageFormat::Png)
        .map_err(|e| match e {
            image::ImageError::IoError(source) => MaskIoError::Io {
                path: labels_path.to_path_buf(),
                source,
            },
            other => MaskIoError::Raster {
                path: labels_path.to_path_buf(),
                message: other.to_string(),
            },
        })?;
    fs::write(scores_path, scores_json(map)).map_err(|source| MaskIoError::Io {
        path: scores_path.to_path_buf(),
        source,
    })
}

/// Serialized scores sidecar for `map`, ids in ascending numeric order.
pub fn scores_json(map: &InstanceLabelMap) -> String {
    // serde_json writes integer map keys as strings, preserving numeric order.
    #[derive(Serialize)]
    struct Out<'a> {
        scores: &'a BTreeMap<InstanceId, f64>,
    }
    let mut s = serde_json::to_string_pretty(&Out { scores: &map.scores })
        .expect("scores serialize");
    s.push('\n');
    s
}

/// Paths `<dir>/<stem>.labels.png` and `<dir>/<stem>.scores.json`.
pub fn scene_paths(dir: &Path, stem: &str) -> (PathBuf, PathBuf) {
    (
        dir.join(format!("{stem}{LABELS_SUFFIX}")),
        dir.join(format!("{stem}{SCORES_SUFFIX}")),
    )
}

pub fn load_scene(dir: &Path, stem: &str) -> Result<InstanceLabelMap, MaskIoError> {
    let (l, s) = scene_paths(dir, stem);
    load_label_map(&l, &s)
}

pub fn save_scene(map: &InstanceLabelMap, dir: &Path, stem: &str) -> Result<(), MaskIoError> {
    let (l, s) = scene_paths(dir, stem);
    save_label_map(map, &l, &s)
}

/// Scene stems found in `dir`, sorted. A stem counts when either of its two
/// files is present; pairing problems surface when the scene is loaded.
pub fn list_scene_stems(dir: &Path) -> Result<Vec<String>, MaskIoError> {
    let entries = fs::read_dir(dir).map_err(|source| MaskIoError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut stems = std::collections::BTreeSet::new();
    for entry in entries {
        let entry = entry.map_err(|source| MaskIoError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        if let Some(stem) = name
            .strip_suffix(LABELS_SUFFIX)
            .or_else(|| name.strip_suffix(SCORES_SUFFIX))
        {
            stems.insert(stem.to_string());
        }
    }
    Ok(stems.into_iter().collect())
}
