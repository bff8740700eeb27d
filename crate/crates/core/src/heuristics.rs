//! One-step placement heuristics.
//!
//! All selectors share [`candidate_actions`], so differences between them come
//! from the selection rule alone. Ties go to the earliest candidate in
//! deepest-bottom-left order.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::actions::{anchored_placements, candidate_actions};
use crate::error::Error;
use crate::geometry::{BinState, ParcelDims, Placement};

/// Named heuristic selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Heuristic {
    /// Least exposed surface area.
    Lsah,
    /// First fit over spaces in deepest-bottom-left order.
    OnlineBph,
    /// Maximize remaining empty-space volume.
    Macs,
    /// Deepest-bottom-left.
    Dbl,
}

impl Heuristic {
    pub const ALL: [Heuristic; 4] = [Heuristic::Lsah, Heuristic::OnlineBph, Heuristic::Macs, Heuristic::Dbl];

    pub fn name(&self) -> &'static str {
        match self {
            Heuristic::Lsah => "lsah",
            Heuristic::OnlineBph => "onlinebph",
            Heuristic::Macs => "macs",
            Heuristic::Dbl => "dbl",
        }
    }

    pub fn select(&self, bin: &BinState, dims: ParcelDims) -> Option<Placement> {
        match self {
            Heuristic::Lsah => lsah_select(bin, dims),
            Heuristic::OnlineBph => onlinebph_select(bin, dims),
            Heuristic::Macs => macs_select(bin, dims),
            Heuristic::Dbl => dbl_select(bin, dims),
        }
    }
}

impl fmt::Display for Heuristic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Heuristic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Heuristic::ALL
            .into_iter()
            .find(|h| h.name() == s)
            .ok_or_else(|| Error::UnknownName {
                kind: "heuristic",
                name: s.to_string(),
            })
    }
}

/// First candidate with the smallest score. `candidates` must already be in
/// tie-break order.
fn argmin_by<F>(candidates: &[Placement], mut score: F) -> Option<Placement>
where
    F: FnMut(&Placement) -> f64,
{
    let mut best: Option<(f64, Placement)> = None;
    for p in candidates {
        let s = score(p);
        if best.is_none_or(|(b, _)| s < b) {
            best = Some((s, *p));
        }
    }
    best.map(|(_, p)| p)
}

/// Face area of the placed parcel not touching the floor, a wall or another box.
///
/// Side contact is measured column by column against the heightmap.
pub fn exposed_surface(bin: &BinState, dims: ParcelDims, p: Placement) -> u64 {
    let (l, w, h) = dims.oriented(p.orientation);
    let spec = bin.spec();
    let hm = bin.heightmap();
    let total = 2 * (l as u64 * w as u64 + l as u64 * h as u64 + w as u64 * h as u64);

    let bottom = if p.z == 0 {
        l as u64 * w as u64
    } else {
        (p.x..p.x + l)
            .flat_map(|x| (p.y..p.y + w).map(move |y| (x, y)))
            .filter(|&(x, y)| hm.get(x, y) == p.z)
            .count() as u64
    };
    let column_overlap = |cx: u32, cy: u32| -> u64 { (hm.get(cx, cy).min(p.z + h)).saturating_sub(p.z) as u64 };
    let side_x = |at: Option<u32>| -> u64 {
        match at {
            None => w as u64 * h as u64,
            Some(cx) => (p.y..p.y + w).map(|y| column_overlap(cx, y)).sum(),
        }
    };
    let side_y = |at: Option<u32>| -> u64 {
        match at {
            None => l as u64 * h as u64,
            Some(cy) => (p.x..p.x + l).map(|x| column_overlap(x, cy)).sum(),
        }
    };
    let west = side_x(p.x.checked_sub(1));
    let east = side_x((p.x + l < spec.length).then_some(p.x + l));
    let south = side_y(p.y.checked_sub(1));
    let north = side_y((p.y + w < spec.width).then_some(p.y + w));

    total - bottom - west - east - south - north
}

pub fn lsah_select(bin: &BinState, dims: ParcelDims) -> Option<Placement> {
    let candidates = candidate_actions(bin, dims);
    argmin_by(&candidates, |p| exposed_surface(bin, dims, *p) as f64)
}

pub fn onlinebph_select(bin: &BinState, dims: ParcelDims) -> Option<Placement> {
    anchored_placements(bin, dims).next()
}

/// Sum of empty-maximal-space volumes left after a hypothetical placement.
pub fn remaining_space_volume(bin: &BinState, dims: ParcelDims, p: Placement) -> u64 {
    bin.place(dims, p)
        .map(|next| next.ems().iter().map(|s| s.volume()).sum())
        .unwrap_or(0)
}

pub fn macs_select(bin: &BinState, dims: ParcelDims) -> Option<Placement> {
    let candidates = candidate_actions(bin, dims);
    argmin_by(&candidates, |p| -(remaining_space_volume(bin, dims, *p) as f64))
}

pub fn dbl_select(bin: &BinState, dims: ParcelDims) -> Option<Placement> {
    candidate_actions(bin, dims).into_iter().next()
}
