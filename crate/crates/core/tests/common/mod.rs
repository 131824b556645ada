//! Test-only helpers: a brute-force grasp evaluator written without the
//! library's planner types, and small random scene builders.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::f64::consts::PI;

use binpick::maskio::InstanceLabelMap;
use rand::Rng;

const FREE: u8 = 0;
const CONTACT: u8 = 1;
const COLLISION: u8 = 2;

/// One brute-force candidate result.
#[derive(Debug, Clone, PartialEq)]
pub struct OraclePose {
    pub instance: u16,
    pub angle_index: u32,
    pub valid: bool,
    pub quality: f64,
    /// Contact, free and collision cell counts.
    pub counts: [usize; 3],
}

pub struct OracleParams {
    pub gw: u32,
    pub gb: u32,
    pub angles: u32,
    pub opening_px: f64,
    pub finger_px: f64,
}

fn label_at(w: u32, h: u32, labels: &[u16], x: i64, y: i64) -> u16 {
    if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
        0
    } else {
        labels[y as usize * w as usize + x as usize]
    }
}

fn round_half_up(v: f64) -> i64 {
    (v + 0.5 + 1e-9).floor() as i64
}

/// Walks the rectangle cell by cell from its first corner along the two
/// rotated unit axes and classifies every sample against `target`.
fn sample_grid(
    w: u32,
    h: u32,
    labels: &[u16],
    target: u16,
    center: [f64; 2],
    theta: f64,
    p: &OracleParams,
) -> Vec<Vec<u8>> {
    let along = [theta.cos(), theta.sin()];
    let across = [-theta.sin(), theta.cos()];
    let half_w = (p.gw as f64 - 1.0) / 2.0;
    let half_b = (p.gb as f64 - 1.0) / 2.0;
    let origin = [
        center[0] - half_w * along[0] - half_b * across[0],
        center[1] - half_w * along[1] - half_b * across[1],
    ];
    (0..p.gb)
        .map(|r| {
            (0..p.gw)
                .map(|c| {
                    let x = origin[0] + c as f64 * along[0] + r as f64 * across[0];
                    let y = origin[1] + c as f64 * along[1] + r as f64 * across[1];
                    match label_at(w, h, labels, round_half_up(x), round_half_up(y)) {
                        0 => FREE,
                        id if id == target => CONTACT,
                        _ => COLLISION,
                    }
                })
                .collect()
        })
        .collect()
}

fn evaluate_grid(grid: &[Vec<u8>], confidence: f64, p: &OracleParams) -> (bool, f64, [usize; 3]) {
    let mut counts = [0usize; 3];
    for row in grid {
        for &cell in row {
            match cell {
                CONTACT => counts[0] += 1,
                FREE => counts[1] += 1,
                _ => counts[2] += 1,
            }
        }
    }

    let mut any_contact = false;
    let mut object = 0usize;
    let mut min_left = usize::MAX;
    let mut min_right = usize::MAX;
    let mut left_cols: Vec<usize> = Vec::new();
    let mut right_cols: Vec<usize> = Vec::new();
    for row in grid {
        let contact_cols: Vec<usize> = (0..row.len()).filter(|&c| row[c] == CONTACT).collect();
        let (Some(&l), Some(&r)) = (contact_cols.first(), contact_cols.last()) else {
            continue;
        };
        any_contact = true;
        object = object.max(r - l + 1);
        let mut left = 0;
        while left < l && row[l - 1 - left] == FREE {
            left_cols.push(l - 1 - left);
            left += 1;
        }
        let mut right = 0;
        while r + 1 + right < row.len() && row[r + 1 + right] == FREE {
            right_cols.push(r + 1 + right);
            right += 1;
        }
        min_left = min_left.min(left);
        min_right = min_right.min(right);
    }
    if !any_contact {
        return (false, 0.0, counts);
    }
    let fits = (object as f64) < p.opening_px
        && (min_left as f64) > p.finger_px
        && (min_right as f64) > p.finger_px;
    if !fits || left_cols.is_empty() || right_cols.is_empty() {
        return (false, 0.0, counts);
    }
    let mean = |v: &[usize]| v.iter().sum::<usize>() as f64 / v.len() as f64;
    if mean(&right_cols) - mean(&left_cols) <= 0.0 {
        return (false, 0.0, counts);
    }

    let cols = (p.gw as usize).div_ceil(2);
    let rows = (p.gb as usize).div_ceil(2);
    let c0 = (p.gw as usize - cols) / 2;
    let r0 = (p.gb as usize - rows) / 2;
    let mut central_contact = 0;
    for row in &grid[r0..r0 + rows] {
        central_contact += row[c0..c0 + cols].iter().filter(|&&c| c == CONTACT).count();
    }
    let oss = 100.0 * counts[1] as f64 / (p.gw * p.gb) as f64;
    let cts = 100.0 * central_contact as f64 / (cols * rows) as f64;
    let ss = 100.0 * confidence;
    (true, (oss + cts + ss) / 3.0, counts)
}

/// Every candidate in (id, angle) order plus the index of the best valid one.
pub fn oracle_plan(
    w: u32,
    h: u32,
    labels: &[u16],
    scores: &BTreeMap<u16, f64>,
    p: &OracleParams,
) -> (Vec<OraclePose>, Option<usize>) {
    let mut sums: BTreeMap<u16, (f64, f64, usize)> = BTreeMap::new();
    for y in 0..h {
        for x in 0..w {
            let id = labels[(y * w + x) as usize];
            if id != 0 {
                let e = sums.entry(id).or_insert((0.0, 0.0, 0));
                e.0 += x as f64;
                e.1 += y as f64;
                e.2 += 1;
            }
        }
    }
    let mut poses = Vec::new();
    for (&id, &(sx, sy, n)) in &sums {
        let center = [sx / n as f64, sy / n as f64];
        for k in 0..p.angles {
            let theta = k as f64 * PI / p.angles as f64;
            let grid = sample_grid(w, h, labels, id, center, theta, p);
            let (valid, quality, counts) = evaluate_grid(&grid, scores[&id], p);
            poses.push(OraclePose {
                instance: id,
                angle_index: k,
                valid,
                quality,
                counts,
            });
        }
    }
    let mut best: Option<usize> = None;
    for (i, pose) in poses.iter().enumerate() {
        if pose.valid && best.is_none_or(|b| pose.quality > poses[b].quality) {
            best = Some(i);
        }
    }
    (poses, best)
}

/// Small random label map: up to `max_instances` overlapping rectangles and
/// speckle blobs, ids compacted to 1..n, random confidences.
pub fn random_scene<R: Rng>(rng: &mut R, max_side: u32, max_instances: u16) -> InstanceLabelMap {
    loop {
        let w = rng.random_range(3..=max_side);
        let h = rng.random_range(3..=max_side);
        let mut labels = vec![0u16; (w * h) as usize];
        let n = rng.random_range(1..=max_instances);
        for id in 1..=n {
            if rng.random_bool(0.7) {
                let x0 = rng.random_range(0..w);
                let y0 = rng.random_range(0..h);
                let x1 = rng.random_range(x0..w);
                let y1 = rng.random_range(y0..h);
                for y in y0..=y1 {
                    for x in x0..=x1 {
                        labels[(y * w + x) as usize] = id;
                    }
                }
            } else {
                let k = rng.random_range(1..=(w * h / 2).max(1));
                for _ in 0..k {
                    let i = rng.random_range(0..labels.len());
                    labels[i] = id;
                }
            }
        }
        let present: Vec<u16> = {
            let mut v: Vec<u16> = labels.iter().copied().filter(|&l| l != 0).collect();
            v.sort_unstable();
            v.dedup();
            v
        };
        if present.is_empty() {
            continue;
        }
        let remap: BTreeMap<u16, u16> = present.iter().enumerate().map(|(i, &id)| (id, i as u16 + 1)).collect();
        for l in labels.iter_mut() {
            if *l != 0 {
                *l = remap[l];
            }
        }
        let scores: BTreeMap<u16, f64> = (1..=present.len() as u16)
            .map(|id| (id, rng.random_range(0.05..=1.0)))
            .collect();
        return InstanceLabelMap::new(w, h, labels, scores).expect("valid random scene");
    }
}

/// Rotates a label map by 90 degrees: output `(x', y')` reads input
/// `(W-1-y', x')`.
pub fn rotate_quarter(map: &InstanceLabelMap) -> InstanceLabelMap {
    let (w, h) = (map.width(), map.height());
    let (nw, nh) = (h, w);
    let mut out = vec![0u16; (nw * nh) as usize];
    for yp in 0..nh {
        for xp in 0..nw {
            out[(yp * nw + xp) as usize] = map.get((w - 1 - yp) as i64, xp as i64);
        }
    }
    InstanceLabelMap::new(nw, nh, out, map.scores().clone()).unwrap()
}

/// Image point that `rotate_quarter` moves `p` to.
pub fn rotate_point_quarter(p: [f64; 2], w: u32) -> [f64; 2] {
    [p[1], w as f64 - 1.0 - p[0]]
}
