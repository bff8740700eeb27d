//! Candidate placements anchored on empty-maximal-space corners.

use std::collections::HashSet;

use crate::ems::Ems;
use crate::geometry::{BinState, ParcelDims, Placement};

/// Stable sort by `(z, y, x)`: deepest, then bottom, then left.
///
/// This is also the tie-break order for every argmax/argmin in the crate.
pub fn dbl_order(mut placements: Vec<Placement>) -> Vec<Placement> {
    placements.sort_by_key(Placement::dbl_key);
    placements
}

/// The four footprint-corner anchors of `space` for an oriented `l x w`
/// footprint, or none when the footprint does not fit.
fn corner_anchors(space: &Ems, l: u32, w: u32) -> Option<[(u32, u32); 4]> {
    if l > space.extent(0) || w > space.extent(1) {
        return None;
    }
    let (x0, y0) = (space.min[0], space.min[1]);
    let (x1, y1) = (space.max[0] - l, space.max[1] - w);
    Some([(x0, y0), (x1, y0), (x0, y1), (x1, y1)])
}

/// Feasible anchored placements in generation order: spaces in
/// deepest-bottom-left order of their min corner, then orientation, then
/// corner. May contain duplicates.
pub(crate) fn anchored_placements(bin: &BinState, dims: ParcelDims) -> impl Iterator<Item = Placement> + '_ {
    let mut spaces: Vec<&Ems> = bin.ems().iter().collect();
    spaces.sort_by_key(|s| s.dbl_key());
    spaces.into_iter().flat_map(move |space| {
        dims.orientations().iter().flat_map(move |&o| {
            let (l, w, _) = dims.oriented(o);
            corner_anchors(space, l, w)
                .into_iter()
                .flatten()
                .filter_map(move |(x, y)| {
                    let z = bin.resting_height(dims, x, y, o).ok()?;
                    let p = Placement::new(x, y, z, o);
                    bin.feasible(dims, p).then_some(p)
                })
        })
    })
}

/// The action set `A_s` for placing `dims` into `bin`, deduplicated and in
/// canonical order. Empty when the parcel cannot be placed anywhere.
pub fn candidate_actions(bin: &BinState, dims: ParcelDims) -> Vec<Placement> {
    let mut seen = HashSet::new();
    let unique: Vec<Placement> = anchored_placements(bin, dims).filter(|p| seen.insert(*p)).collect();
    dbl_order(unique)
}

/// Like [`candidate_actions`], keeping only the first `max_actions` in canonical order.
pub fn capped_actions(bin: &BinState, dims: ParcelDims, max_actions: Option<usize>) -> Vec<Placement> {
    let mut actions = candidate_actions(bin, dims);
    if let Some(k) = max_actions {
        actions.truncate(k);
    }
    actions
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{BinSpec, Orientation};

    fn d(l: u32, w: u32, h: u32) -> ParcelDims {
        ParcelDims::new(l, w, h).unwrap()
    }

    #[test]
    fn oversized_parcel_has_no_actions() {
        let bin = BinState::empty(BinSpec::new(4, 4, 10).unwrap());
        assert!(candidate_actions(&bin, d(5, 5, 11)).is_empty());
        assert!(candidate_actions(&bin, d(2, 2, 11)).is_empty());
    }

    #[test]
    fn square_parcel_in_empty_bin() {
        let bin = BinState::empty(BinSpec::new(4, 4, 10).unwrap());
        let got = candidate_actions(&bin, d(2, 2, 3));
        let want = vec![
            Placement::new(0, 0, 0, Orientation::Upright),
            Placement::new(2, 0, 0, Orientation::Upright),
            Placement::new(0, 2, 0, Orientation::Upright),
            Placement::new(2, 2, 0, Orientation::Upright),
        ];
        assert_eq!(got, want);
        assert_eq!(got.iter().filter(|p| p.x == 0 && p.y == 0).count(), 1);
    }

    #[test]
    fn oblong_parcel_gets_both_orientations() {
        let bin = BinState::empty(BinSpec::new(4, 4, 10).unwrap());
        let got = candidate_actions(&bin, d(3, 1, 1));
        assert!(got.contains(&Placement::new(0, 0, 0, Orientation::Upright)));
        assert!(got.contains(&Placement::new(0, 0, 0, Orientation::Turned)));
        assert!(got.iter().all(|p| bin.feasible(d(3, 1, 1), *p)));
    }

    #[test]
    fn dbl_order_examples() {
        let a = Placement::new(0, 0, 2, Orientation::Upright);
        let b = Placement::new(1, 0, 0, Orientation::Upright);
        assert_eq!(dbl_order(vec![a, b]), vec![b, a]);

        let c = Placement::new(1, 0, 0, Orientation::Turned);
        assert_eq!(dbl_order(vec![c, b]), vec![c, b]);
        assert_eq!(dbl_order(vec![b, c]), vec![b, c]);
    }

    #[test]
    fn cap_keeps_prefix() {
        let bin = BinState::empty(BinSpec::new(6, 6, 6).unwrap());
        let all = candidate_actions(&bin, d(2, 3, 1));
        let capped = capped_actions(&bin, d(2, 3, 1), Some(3));
        assert_eq!(capped, all[..3]);
    }
}
