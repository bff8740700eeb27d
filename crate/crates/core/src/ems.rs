//! Empty maximal spaces.
//!
//! The set is maintained by difference: placing a box splits every space it
//! cuts into at most six slabs (one per side of the box), and slabs contained
//! in another space are dropped. Starting from the whole bin this yields
//! exactly the maximal empty boxes of the packing.

use serde::{Deserialize, Serialize};

use crate::geometry::{BinSpec, BinState, PlacedBox};

/// Half-open box `[min, max)` in grid units, axes ordered `(x, y, z)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Ems {
    pub min: [u32; 3],
    pub max: [u32; 3],
}

impl Ems {
    pub fn new(min: [u32; 3], max: [u32; 3]) -> Self {
        debug_assert!((0..3).all(|a| min[a] < max[a]));
        Self { min, max }
    }

    pub fn whole(spec: &BinSpec) -> Self {
        Self::new([0, 0, 0], [spec.length, spec.width, spec.height])
    }

    pub fn extent(&self, axis: usize) -> u32 {
        self.max[axis] - self.min[axis]
    }

    pub fn volume(&self) -> u64 {
        (0..3).map(|a| self.extent(a) as u64).product()
    }

    pub fn contains(&self, other: &Ems) -> bool {
        (0..3).all(|a| self.min[a] <= other.min[a] && other.max[a] <= self.max[a])
    }

    /// Positive-volume overlap with the half-open extent `[x0, y0, z0, x1, y1, z1]`.
    pub fn overlaps(&self, extent: &[u32; 6]) -> bool {
        (0..3).all(|a| self.min[a] < extent[a + 3] && extent[a] < self.max[a])
    }

    /// Deepest-bottom-left key of the min corner: `(z, y, x)`.
    pub fn dbl_key(&self) -> (u32, u32, u32) {
        (self.min[2], self.min[1], self.min[0])
    }

    fn canonical_key(&self) -> ([u32; 3], [u32; 3]) {
        (
            [self.min[2], self.min[1], self.min[0]],
            [self.max[2], self.max[1], self.max[0]],
        )
    }
}

/// Removes the box `extent` from a maximal-space set.
pub(crate) fn carve(spaces: &[Ems], extent: &[u32; 6]) -> Vec<Ems> {
    let mut kept = Vec::with_capacity(spaces.len() + 6);
    let mut pieces = Vec::new();
    for s in spaces {
        if !s.overlaps(extent) {
            kept.push(*s);
            continue;
        }
        for a in 0..3 {
            if extent[a] > s.min[a] {
                let mut p = *s;
                p.max[a] = extent[a];
                pieces.push(p);
            }
            if extent[a + 3] < s.max[a] {
                let mut p = *s;
                p.min[a] = extent[a + 3];
                pieces.push(p);
            }
        }
    }
    pieces.sort_unstable_by_key(Ems::canonical_key);
    pieces.dedup();

    let survivors: Vec<Ems> = pieces
        .iter()
        .enumerate()
        .filter(|&(i, p)| {
            !kept.iter().any(|k| k.contains(p)) && !pieces.iter().enumerate().any(|(j, q)| j != i && q.contains(p))
        })
        .map(|(_, p)| *p)
        .collect();
    kept.extend(survivors);
    kept.sort_unstable_by_key(Ems::canonical_key);
    kept
}

/// Maximal empty spaces of `bin`, in canonical deepest-bottom-left order.
pub fn compute_ems(bin: &BinState) -> Vec<Ems> {
    bin.ems().to_vec()
}

/// Recomputes the maximal-space set from scratch by replaying the placed boxes.
pub fn ems_from_boxes(spec: &BinSpec, boxes: &[PlacedBox]) -> Vec<Ems> {
    boxes
        .iter()
        .fold(vec![Ems::whole(spec)], |spaces, b| carve(&spaces, &b.extent()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Orientation, ParcelDims, Placement};

    #[test]
    fn empty_bin_is_one_space() {
        let spec = BinSpec::new(4, 4, 10).unwrap();
        let bin = BinState::empty(spec);
        assert_eq!(compute_ems(&bin), vec![Ems::new([0, 0, 0], [4, 4, 10])]);
    }

    #[test]
    fn corner_box_leaves_three_slabs() {
        let spec = BinSpec::new(4, 4, 10).unwrap();
        let bin = BinState::empty(spec)
            .place(
                ParcelDims::new(2, 2, 3).unwrap(),
                Placement::new(0, 0, 0, Orientation::Upright),
            )
            .unwrap();
        let mut got = compute_ems(&bin);
        got.sort();
        let mut want = vec![
            Ems::new([2, 0, 0], [4, 4, 10]),
            Ems::new([0, 2, 0], [4, 4, 10]),
            Ems::new([0, 0, 3], [4, 4, 10]),
        ];
        want.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn full_bin_has_no_space() {
        let spec = BinSpec::new(2, 2, 2).unwrap();
        let bin = BinState::empty(spec)
            .place(
                ParcelDims::new(2, 2, 2).unwrap(),
                Placement::new(0, 0, 0, Orientation::Upright),
            )
            .unwrap();
        assert!(compute_ems(&bin).is_empty());
    }
}
