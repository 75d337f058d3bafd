use super::mask::RoiMask;
use crate::detection::BBox;

/// Smallest face the network handles, in pixels at level resolution.
pub const MIN_FACE: f64 = 36.0;

/// Candidates whose larger side lies in `[min_face, max_face)` at the
/// original resolution, processed at scale `2^-octave`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleGroup {
    pub octave: u32,
    pub scale_factor: f64,
    pub min_face: f64,
    pub max_face: f64,
    pub candidates: Vec<BBox>,
}

impl ScaleGroup {
    pub fn new(octave: u32) -> Self {
        let min_face = MIN_FACE * (1u64 << octave) as f64;
        ScaleGroup {
            octave,
            scale_factor: 1.0 / (1u64 << octave) as f64,
            min_face,
            max_face: 2.0 * min_face,
            candidates: Vec::new(),
        }
    }

    /// Candidates rescaled to this group's pyramid level.
    pub fn level_candidates(&self) -> Vec<BBox> {
        self.candidates.iter().map(|b| b.scaled(self.scale_factor)).collect()
    }
}

fn octave_of(size: f64) -> Option<u32> {
    if !(size >= MIN_FACE) {
        return None;
    }
    let mut k = 0;
    while size >= MIN_FACE * 2f64.powi(k as i32 + 1) {
        k += 1;
    }
    Some(k)
}

/// Buckets candidates into scale octaves by their larger side. Candidates
/// below [`MIN_FACE`] or outside the image are dropped. Groups come back
/// ordered by octave, empty ones omitted.
pub fn group_candidates(candidates: &[BBox], image_size: (usize, usize)) -> Vec<ScaleGroup> {
    let image = BBox::new(0.0, 0.0, image_size.0 as f64, image_size.1 as f64);
    let mut groups: Vec<ScaleGroup> = Vec::new();
    for b in candidates {
        if b.w <= 0.0 || b.h <= 0.0 || b.intersection(&image) <= 0.0 {
            continue;
        }
        let Some(k) = octave_of(b.size()) else { continue };
        match groups.iter_mut().find(|g| g.octave == k) {
            Some(g) => g.candidates.push(*b),
            None => {
                let mut g = ScaleGroup::new(k);
                g.candidates.push(*b);
                groups.push(g);
            }
        }
    }
    groups.sort_by_key(|g| g.octave);
    groups
}

/// Mask for one group at its level: every candidate is re-centred with each
/// side doubled but capped at `receptive_field_cap`, clipped to the level.
pub fn build_mask(group: &ScaleGroup, level_size: (usize, usize), receptive_field_cap: f64) -> RoiMask {
    let mut mask = RoiMask::empty(level_size.0, level_size.1);
    for b in group.level_candidates() {
        add_box(&mut mask, &b, receptive_field_cap);
    }
    mask
}

pub(crate) fn add_box(mask: &mut RoiMask, b: &BBox, cap: f64) {
    let (cx, cy) = b.center();
    let sw = (2.0 * b.w).min(cap).round();
    let sh = (2.0 * b.h).min(cap).round();
    let x0 = (cx - sw / 2.0).round() as isize;
    let y0 = (cy - sh / 2.0).round() as isize;
    mask.fill_rect(x0, y0, x0 + sw as isize, y0 + sh as isize);
}
