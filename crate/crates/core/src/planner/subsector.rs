//! Contact / free / collision classification of a cropped grasp rectangle,
//! width measurements along the closing axis, and pose finetuning.

use serde::{Deserialize, Serialize};

use super::PlanError;
use crate::camgeom::AlignedCrop;
use crate::maskio::{InstanceId, BACKGROUND};

/// Sector a crop cell belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sector {
    /// Target object pixels the jaws close on.
    Contact,
    /// Background pixels the fingers may enter.
    Free,
    /// Pixels of other instances.
    Collision,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SectorCounts {
    pub contact: usize,
    pub free: usize,
    pub collision: usize,
}

impl SectorCounts {
    pub fn total(&self) -> usize {
        self.contact + self.free + self.collision
    }
}

/// Per-cell sector labels for a `gb x gw` aligned crop.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsectorMap {
    gw: u32,
    gb: u32,
    target: InstanceId,
    cells: Vec<Sector>,
}

impl SubsectorMap {
    /// Wraps precomputed cells (row-major, `gb` rows of `gw`).
    pub fn from_cells(gw: u32, gb: u32, target: InstanceId, cells: Vec<Sector>) -> Result<Self, PlanError> {
        if gw == 0 || gb == 0 {
            return Err(PlanError::InvalidRect(format!("{gw}x{gb} subsector grid")));
        }
        if target == BACKGROUND {
            return Err(PlanError::BackgroundTarget);
        }
        if cells.len() != (gw * gb) as usize {
            return Err(PlanError::InvalidRect(format!(
                "{} cells for a {gw}x{gb} grid",
                cells.len()
            )));
        }
        Ok(Self { gw, gb, target, cells })
    }

    pub fn gw(&self) -> u32 {
        self.gw
    }
    pub fn gb(&self) -> u32 {
        self.gb
    }
    pub fn target(&self) -> InstanceId {
        self.target
    }
    pub fn cells(&self) -> &[Sector] {
        &self.cells
    }

    #[inline]
    pub fn get(&self, row: u32, col: u32) -> Sector {
        self.cells[(row * self.gw + col) as usize]
    }

    fn row(&self, row: u32) -> &[Sector] {
        let start = (row * self.gw) as usize;
        &self.cells[start..start + self.gw as usize]
    }

    pub fn counts(&self) -> SectorCounts {
        let mut counts = SectorCounts::default();
        for s in &self.cells {
            match s {
                Sector::Contact => counts.contact += 1,
                Sector::Free => counts.free += 1,
                Sector::Collision => counts.collision += 1,
            }
        }
        counts
    }

    /// Per-row extents of the contact sector and the free runs flanking it.
    /// Rows without contact cells are skipped.
    pub(crate) fn contact_rows(&self) -> impl Iterator<Item = RowSpan> + '_ {
        (0..self.gb).filter_map(move |r| {
            let row = self.row(r);
            let left = row.iter().position(|&s| s == Sector::Contact)?;
            let right = row.iter().rposition(|&s| s == Sector::Contact)?;
            let free_left = row[..left].iter().rev().take_while(|&&s| s == Sector::Free).count();
            let free_right = row[right + 1..].iter().take_while(|&&s| s == Sector::Free).count();
            Some(RowSpan {
                row: r,
                left: left as u32,
                right: right as u32,
                free_left: free_left as u32,
                free_right: free_right as u32,
            })
        })
    }
}

/// Contact extent `[left, right]` of one crop row and the lengths of the
/// free runs ending at `left - 1` and starting at `right + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct RowSpan {
    pub row: u32,
    pub left: u32,
    pub right: u32,
    pub free_left: u32,
    pub free_right: u32,
}

/// Classifies every crop cell relative to `target`.
pub fn identify_subsectors(crop: &AlignedCrop, target: InstanceId) -> Result<SubsectorMap, PlanError> {
    if target == BACKGROUND {
        return Err(PlanError::BackgroundTarget);
    }
    let cells = crop
        .pixels()
        .iter()
        .map(|&id| match id {
            BACKGROUND => Sector::Free,
            id if id == target => Sector::Contact,
            _ => Sector::Collision,
        })
        .collect();
    Ok(SubsectorMap {
        gw: crop.gw(),
        gb: crop.gb(),
        target,
        cells,
    })
}

/// Widths along the closing axis, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Widths {
    /// Widest contact extent over all rows.
    pub object: u32,
    /// Narrowest free run directly left of the contact extent.
    pub free_left: u32,
    /// Narrowest free run directly right of the contact extent.
    pub free_right: u32,
}

pub fn measure_widths(sub: &SubsectorMap) -> Result<Widths, PlanError> {
    let mut widths: Option<Widths> = None;
    for span in sub.contact_rows() {
        let object = span.right - span.left + 1;
        widths = Some(match widths {
            None => Widths {
                object,
                free_left: span.free_left,
                free_right: span.free_right,
            },
            Some(w) => Widths {
                object: w.object.max(object),
                free_left: w.free_left.min(span.free_left),
                free_right: w.free_right.min(span.free_right),
            },
        });
    }
    widths.ok_or(PlanError::EmptyContact)
}

/// Refined grasp center and jaw width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Finetuned {
    /// Contact-sector centroid mapped back to image coordinates.
    pub center: [f64; 2],
    /// Distance in pixels between the column centroids of the right and
    /// left free regions.
    pub width: f64,
}

/// Moves the grasp center onto the contact sector and measures the jaw
/// width between the free regions on either side.
pub fn finetune_pose(sub: &SubsectorMap, crop: &AlignedCrop) -> Result<Finetuned, PlanError> {
    let (mut n_tc, mut sum_c, mut sum_r) = (0usize, 0.0f64, 0.0f64);
    for r in 0..sub.gb {
        for c in 0..sub.gw {
            if sub.get(r, c) == Sector::Contact {
                n_tc += 1;
                sum_c += c as f64;
                sum_r += r as f64;
            }
        }
    }
    if n_tc == 0 {
        return Err(PlanError::EmptyContact);
    }

    let (mut n_left, mut sum_left) = (0u64, 0.0f64);
    let (mut n_right, mut sum_right) = (0u64, 0.0f64);
    for span in sub.contact_rows() {
        // sum of the column indices in [a, b)
        let run_sum = |a: u32, b: u32| -> f64 { (a..b).map(|c| c as f64).sum() };
        n_left += span.free_left as u64;
        sum_left += run_sum(span.left - span.free_left, span.left);
        n_right += span.free_right as u64;
        sum_right += run_sum(span.right + 1, span.right + 1 + span.free_right);
    }
    if n_left == 0 || n_right == 0 {
        return Err(PlanError::EmptyFreeRegion);
    }

    let center = crop
        .frame()
        .to_image(sum_c / n_tc as f64, sum_r / n_tc as f64);
    let width = sum_right / n_right as f64 - sum_left / n_left as f64;
    Ok(Finetuned { center, width })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camgeom::crop_aligned_rect;
    use crate::maskio::InstanceLabelMap;
    use Sector::{Collision as CL, Contact as TC, Free as UO};

    fn sub(gw: u32, cells: &[Sector]) -> SubsectorMap {
        SubsectorMap::from_cells(gw, cells.len() as u32 / gw, 1, cells.to_vec()).unwrap()
    }

    fn crop_of(w: u32, h: u32, px: Vec<u16>, center: [f64; 2], angle: f64) -> AlignedCrop {
        let map = InstanceLabelMap::with_unit_scores(w, h, px).unwrap();
        crop_aligned_rect(&map, center, angle, w, h)
    }

    #[test]
    fn uniform_crops() {
        let crop = crop_of(3, 2, vec![7; 6], [1.0, 0.5], 0.0);
        let all_tc = identify_subsectors(&crop, 7).unwrap();
        assert!(all_tc.cells().iter().all(|&s| s == TC));
        let crop = crop_of(3, 2, vec![0; 6], [1.0, 0.5], 0.0);
        let all_uo = identify_subsectors(&crop, 7).unwrap();
        assert!(all_uo.cells().iter().all(|&s| s == UO));
        assert_eq!(identify_subsectors(&crop, 0), Err(PlanError::BackgroundTarget));
    }

    #[test]
    fn hand_counted_partition() {
        // 4 rows x 6 cols, target in cols 2-3, another instance at (row 0, col 5)
        let mut px = vec![0u16; 24];
        for r in 0..4 {
            px[r * 6 + 2] = 1;
            px[r * 6 + 3] = 1;
        }
        px[5] = 2;
        let crop = crop_of(6, 4, px, [2.5, 1.5], 0.0);
        let s = identify_subsectors(&crop, 1).unwrap();
        assert_eq!(
            s.counts(),
            SectorCounts {
                contact: 8,
                free: 15,
                collision: 1
            }
        );
        assert_eq!(s.get(0, 5), CL);
    }

    #[test]
    fn single_row_widths() {
        let s = sub(6, &[UO, UO, TC, TC, UO, UO]);
        assert_eq!(
            measure_widths(&s).unwrap(),
            Widths {
                object: 2,
                free_left: 2,
                free_right: 2
            }
        );
    }

    #[test]
    fn full_width_contact_has_no_free_space() {
        let s = sub(4, &[TC, TC, TC, TC, UO, UO, UO, UO]);
        assert_eq!(
            measure_widths(&s).unwrap(),
            Widths {
                object: 4,
                free_left: 0,
                free_right: 0
            }
        );
    }

    #[test]
    fn blocked_entry_zeroes_left_run() {
        let s = sub(6, &[UO, UO, TC, TC, UO, UO, UO, CL, TC, UO, UO, UO]);
        let w = measure_widths(&s).unwrap();
        assert_eq!(w.free_left, 0);
        assert_eq!(w.free_right, 2);
        assert_eq!(w.object, 2);
    }

    #[test]
    fn runs_stop_at_collisions_and_skip_empty_rows() {
        // row 0 has no contact and must not lower the minima
        let s = sub(
            7,
            &[
                CL, CL, CL, CL, CL, CL, CL, //
                UO, CL, UO, TC, UO, UO, UO, //
                UO, UO, UO, TC, TC, UO, CL,
            ],
        );
        assert_eq!(
            measure_widths(&s).unwrap(),
            Widths {
                object: 2,
                free_left: 1,
                free_right: 1
            }
        );
    }

    #[test]
    fn gapped_contact_spans_full_extent() {
        let s = sub(7, &[UO, TC, UO, UO, TC, UO, UO]);
        let w = measure_widths(&s).unwrap();
        assert_eq!(w.object, 4);
        assert_eq!((w.free_left, w.free_right), (1, 2));
    }

    #[test]
    fn empty_contact_sector() {
        let s = sub(3, &[UO, CL, UO]);
        assert_eq!(measure_widths(&s), Err(PlanError::EmptyContact));
    }

    #[test]
    fn symmetric_object_keeps_center() {
        // 9x3 crop, object in the middle three columns
        let px: Vec<u16> = (0..27).map(|i| if (3..6).contains(&(i % 9)) { 1 } else { 0 }).collect();
        let crop = crop_of(9, 3, px, [4.0, 1.0], 0.0);
        let s = identify_subsectors(&crop, 1).unwrap();
        let f = finetune_pose(&s, &crop).unwrap();
        assert!((f.center[0] - 4.0).abs() <= 0.5 && (f.center[1] - 1.0).abs() <= 0.5);
        // left run cols 0..3 (centroid 1), right run cols 6..9 (centroid 7)
        assert_eq!(f.width, 6.0);
    }

    #[test]
    fn width_from_free_region_centroids() {
        // left run cols 0..=6 (centroid 3), right run cols 22..=28 (centroid 25)
        let mut cells = vec![UO; 29];
        for c in cells.iter_mut().take(22).skip(7) {
            *c = TC;
        }
        let s = sub(29, &cells);
        let map = InstanceLabelMap::with_unit_scores(29, 1, vec![1; 29]).unwrap();
        let crop = crop_aligned_rect(&map, [14.0, 0.0], 0.0, 29, 1);
        assert_eq!(finetune_pose(&s, &crop).unwrap().width, 22.0);
    }

    #[test]
    fn missing_free_region_is_an_error() {
        let s = sub(3, &[TC, TC, UO]);
        let map = InstanceLabelMap::with_unit_scores(3, 1, vec![1; 3]).unwrap();
        let crop = crop_aligned_rect(&map, [1.0, 0.0], 0.0, 3, 1);
        assert_eq!(finetune_pose(&s, &crop), Err(PlanError::EmptyFreeRegion));
    }

    #[test]
    fn quarter_turn_offset_maps_to_image_x() {
        // 5-col x 7-row grasp rectangle rotated by 90 degrees around (10, 10).
        // In the rotated frame the object sits two rows below the crop center.
        let (w, h) = (21u32, 21u32);
        let mut px = vec![0u16; (w * h) as usize];
        // aligned (col 2, row 5) -> offset (0, +2) -> image (10 - 2, 10)
        px[(10 * w + 8) as usize] = 1;
        let map = InstanceLabelMap::with_unit_scores(w, h, px).unwrap();
        let crop = crop_aligned_rect(&map, [10.0, 10.0], std::f64::consts::FRAC_PI_2, 5, 7);
        let s = identify_subsectors(&crop, 1).unwrap();
        assert_eq!(s.get(5, 2), TC);
        let f = finetune_pose(&s, &crop).unwrap();
        assert!((f.center[0] - 8.0).abs() < 1e-9, "{:?}", f.center);
        assert!((f.center[1] - 10.0).abs() < 1e-9);
    }
}
