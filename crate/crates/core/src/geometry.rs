//! Discrete bin model.
//!
//! A bin is an `L x W x H` grid. Its deterministic state is a heightmap over
//! the `L x W` floor plus the list of boxes placed so far. Parcels are lowered
//! from the top, so a placement's `z` is always the highest column under its
//! footprint. States are plain values: [`BinState::place`] returns a new state
//! and leaves its input untouched, which is what lets the search fork states
//! freely.

use serde::{Deserialize, Serialize};

use crate::ems::{self, Ems};
use crate::error::{Error, Result};

/// Interior dimensions of a bin in grid units.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BinSpec {
    pub length: u32,
    pub width: u32,
    pub height: u32,
}

impl BinSpec {
    pub fn new(length: u32, width: u32, height: u32) -> Result<Self> {
        if length == 0 || width == 0 || height == 0 {
            return Err(Error::InvalidDims(format!(
                "bin {length}x{width}x{height} has a zero side"
            )));
        }
        Ok(Self { length, width, height })
    }

    pub fn volume(&self) -> u64 {
        self.length as u64 * self.width as u64 * self.height as u64
    }

    pub fn floor_area(&self) -> usize {
        self.length as usize * self.width as usize
    }
}

/// Parcel dimensions `(l, w, h)` in grid units.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParcelDims {
    pub l: u32,
    pub w: u32,
    pub h: u32,
}

impl ParcelDims {
    pub fn new(l: u32, w: u32, h: u32) -> Result<Self> {
        if l == 0 || w == 0 || h == 0 {
            return Err(Error::InvalidDims(format!("parcel {l}x{w}x{h} has a zero side")));
        }
        Ok(Self { l, w, h })
    }

    pub fn volume(&self) -> u64 {
        self.l as u64 * self.w as u64 * self.h as u64
    }

    /// Footprint and height after applying `orientation`.
    pub fn oriented(&self, orientation: Orientation) -> (u32, u32, u32) {
        match orientation {
            Orientation::Upright => (self.l, self.w, self.h),
            Orientation::Turned => (self.w, self.l, self.h),
        }
    }

    /// Orientations that give distinct footprints. A square footprint has only one.
    pub fn orientations(&self) -> &'static [Orientation] {
        if self.l == self.w {
            &Orientation::ALL[..1]
        } else {
            &Orientation::ALL
        }
    }

    /// Whether some allowed orientation fits inside an empty bin.
    pub fn fits(&self, spec: &BinSpec) -> bool {
        self.h <= spec.height
            && self.orientations().iter().any(|&o| {
                let (l, w, _) = self.oriented(o);
                l <= spec.length && w <= spec.width
            })
    }
}

/// The two horizontal rotations. Parcels are never tipped over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Orientation {
    /// `l` along the bin length axis.
    Upright,
    /// Rotated a quarter turn about the vertical axis: `w` along the bin length axis.
    Turned,
}

impl Orientation {
    pub const ALL: [Orientation; 2] = [Orientation::Upright, Orientation::Turned];
}

/// Where and how one parcel goes: footprint corner `(x, y)`, resting height `z`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Placement {
    pub x: u32,
    pub y: u32,
    pub z: u32,
    pub orientation: Orientation,
}

impl Placement {
    pub fn new(x: u32, y: u32, z: u32, orientation: Orientation) -> Self {
        Self { x, y, z, orientation }
    }

    /// Deepest-bottom-left sort key `(z, y, x)`.
    pub fn dbl_key(&self) -> (u32, u32, u32) {
        (self.z, self.y, self.x)
    }
}

/// Physical constraints applied on top of bounds and gravity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlacementRules {
    /// Minimum fraction of footprint cells that must rest on a surface at exactly `z`.
    pub min_support: f64,
    /// Gap required between a parcel and a wall unless the parcel touches it.
    pub wall_margin: u32,
}

impl Default for PlacementRules {
    fn default() -> Self {
        Self {
            min_support: 0.6,
            wall_margin: 0,
        }
    }
}

/// Column heights over the bin floor.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct HeightMap {
    length: u32,
    width: u32,
    cells: Vec<u32>,
}

impl HeightMap {
    pub fn flat(length: u32, width: u32) -> Self {
        Self {
            length,
            width,
            cells: vec![0; length as usize * width as usize],
        }
    }

    #[inline]
    fn index(&self, x: u32, y: u32) -> usize {
        x as usize * self.width as usize + y as usize
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u32 {
        self.cells[self.index(x, y)]
    }

    pub fn length(&self) -> u32 {
        self.length
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn cells(&self) -> &[u32] {
        &self.cells
    }

    /// Heights of the footprint rows, one slice per `x`.
    fn rows(&self, x: u32, y: u32, l: u32, w: u32) -> impl Iterator<Item = &[u32]> + '_ {
        (x..x + l).map(move |cx| {
            let start = self.index(cx, y);
            &self.cells[start..start + w as usize]
        })
    }

    fn max_over(&self, x: u32, y: u32, l: u32, w: u32) -> u32 {
        self.rows(x, y, l, w)
            .flat_map(|row| row.iter().copied())
            .max()
            .unwrap_or(0)
    }

    fn fill(&mut self, x: u32, y: u32, l: u32, w: u32, top: u32) {
        for cx in x..x + l {
            let start = self.index(cx, y);
            self.cells[start..start + w as usize].fill(top);
        }
    }
}

/// A parcel that has been placed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PlacedBox {
    pub dims: ParcelDims,
    pub placement: Placement,
}

impl PlacedBox {
    /// Half-open extent `[x0, x1) x [y0, y1) x [z0, z1)`.
    pub fn extent(&self) -> [u32; 6] {
        let (l, w, h) = self.dims.oriented(self.placement.orientation);
        let p = self.placement;
        [p.x, p.y, p.z, p.x + l, p.y + w, p.z + h]
    }
}

/// Deterministic part of the packing state.
#[derive(Clone, Debug, PartialEq)]
pub struct BinState {
    spec: BinSpec,
    rules: PlacementRules,
    heightmap: HeightMap,
    placed: Vec<PlacedBox>,
    packed_volume: u64,
    ems: Vec<Ems>,
}

impl BinState {
    pub fn empty(spec: BinSpec) -> Self {
        Self::with_rules(spec, PlacementRules::default())
    }

    pub fn with_rules(spec: BinSpec, rules: PlacementRules) -> Self {
        Self {
            spec,
            rules,
            heightmap: HeightMap::flat(spec.length, spec.width),
            placed: Vec::new(),
            packed_volume: 0,
            ems: vec![Ems::whole(&spec)],
        }
    }

    /// Replays `boxes` in order, checking feasibility of each step.
    pub fn from_placements(spec: BinSpec, rules: PlacementRules, boxes: &[PlacedBox]) -> Result<Self> {
        boxes
            .iter()
            .try_fold(Self::with_rules(spec, rules), |bin, b| bin.place(b.dims, b.placement))
    }

    pub fn spec(&self) -> &BinSpec {
        &self.spec
    }

    pub fn rules(&self) -> &PlacementRules {
        &self.rules
    }

    pub fn heightmap(&self) -> &HeightMap {
        &self.heightmap
    }

    pub fn placed(&self) -> &[PlacedBox] {
        &self.placed
    }

    pub fn packed_volume(&self) -> u64 {
        self.packed_volume
    }

    /// Maximal empty spaces, maintained incrementally across placements.
    pub fn ems(&self) -> &[Ems] {
        &self.ems
    }

    /// Highest column under the oriented footprint at `(x, y)`.
    pub fn resting_height(&self, dims: ParcelDims, x: u32, y: u32, orientation: Orientation) -> Result<u32> {
        let (l, w, _) = dims.oriented(orientation);
        if x.checked_add(l).is_none_or(|e| e > self.spec.length) || y.checked_add(w).is_none_or(|e| e > self.spec.width)
        {
            return Err(Error::OutOfBounds {
                x,
                y,
                l,
                w,
                length: self.spec.length,
                width: self.spec.width,
            });
        }
        Ok(self.heightmap.max_over(x, y, l, w))
    }

    /// Bounds, gravity, stability and wall clearance.
    pub fn feasible(&self, dims: ParcelDims, p: Placement) -> bool {
        let (l, w, h) = dims.oriented(p.orientation);
        let spec = &self.spec;
        if p.x as u64 + l as u64 > spec.length as u64
            || p.y as u64 + w as u64 > spec.width as u64
            || p.z as u64 + h as u64 > spec.height as u64
        {
            return false;
        }
        if self.heightmap.max_over(p.x, p.y, l, w) != p.z {
            return false;
        }
        if !self.clears_walls(p.x, l, spec.length) || !self.clears_walls(p.y, w, spec.width) {
            return false;
        }
        p.z == 0 || self.is_stable(p.x, p.y, l, w, p.z)
    }

    fn clears_walls(&self, start: u32, extent: u32, side: u32) -> bool {
        let m = self.rules.wall_margin;
        let near = start;
        let far = side - start - extent;
        (near == 0 || near >= m) && (far == 0 || far >= m)
    }

    fn is_stable(&self, x: u32, y: u32, l: u32, w: u32, z: u32) -> bool {
        let supported = self
            .heightmap
            .rows(x, y, l, w)
            .flat_map(|row| row.iter())
            .filter(|&&c| c == z)
            .count();
        let ratio = supported as f64 / (l as f64 * w as f64);
        if ratio < self.rules.min_support {
            return false;
        }
        // The geometric centre lies on one, two or four cells depending on parity.
        let xs = [x + (l - 1) / 2, x + l / 2];
        let ys = [y + (w - 1) / 2, y + w / 2];
        xs.iter()
            .any(|&cx| ys.iter().any(|&cy| self.heightmap.get(cx, cy) == z))
    }

    /// Transition `f(B, d, a)`. Fails unless the placement is feasible.
    pub fn place(&self, dims: ParcelDims, p: Placement) -> Result<BinState> {
        if !self.feasible(dims, p) {
            return Err(Error::Infeasible { dims, placement: p });
        }
        let (l, w, h) = dims.oriented(p.orientation);
        let placed_box = PlacedBox { dims, placement: p };
        let mut next = self.clone();
        next.heightmap.fill(p.x, p.y, l, w, p.z + h);
        next.placed.push(placed_box);
        next.packed_volume += dims.volume();
        next.ems = ems::carve(&self.ems, &placed_box.extent());
        Ok(next)
    }

    /// Volume trapped under the footprint, in grid cells.
    pub fn waste_volume(&self, dims: ParcelDims, p: Placement) -> u64 {
        let (l, w, _) = dims.oriented(p.orientation);
        self.heightmap
            .rows(p.x, p.y, l, w)
            .flat_map(|row| row.iter())
            .map(|&c| p.z.saturating_sub(c) as u64)
            .sum()
    }

    /// Wasted-space penalty: trapped volume normalized by bin volume.
    pub fn wasted_space_penalty(&self, dims: ParcelDims, p: Placement) -> f64 {
        self.waste_volume(dims, p) as f64 / self.spec.volume() as f64
    }

    pub fn utilization(&self) -> f64 {
        self.packed_volume as f64 / self.spec.volume() as f64
    }

    /// Free volume above the heightmap, in grid cells.
    pub fn open_volume(&self) -> u64 {
        let top = self.spec.height;
        self.heightmap.cells.iter().map(|&c| (top - c) as u64).sum()
    }
}

/// Volume reward of packing `dims`: `l*w*h / (L*W*H)`.
pub fn volume_reward(dims: ParcelDims, spec: &BinSpec) -> f64 {
    dims.volume() as f64 / spec.volume() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims(l: u32, w: u32, h: u32) -> ParcelDims {
        ParcelDims::new(l, w, h).unwrap()
    }

    fn at(x: u32, y: u32, z: u32) -> Placement {
        Placement::new(x, y, z, Orientation::Upright)
    }

    fn bin(l: u32, w: u32, h: u32) -> BinState {
        BinState::empty(BinSpec::new(l, w, h).unwrap())
    }

    #[test]
    fn resting_height_on_floor_and_stack() {
        let b = bin(4, 4, 10);
        assert_eq!(b.resting_height(dims(2, 2, 3), 0, 0, Orientation::Upright).unwrap(), 0);
        let b = b.place(dims(2, 2, 3), at(0, 0, 0)).unwrap();
        assert_eq!(b.resting_height(dims(2, 2, 3), 0, 0, Orientation::Upright).unwrap(), 3);
    }

    #[test]
    fn resting_height_straddling_takes_the_max() {
        let b = bin(4, 4, 10).place(dims(1, 4, 3), at(0, 0, 0)).unwrap();
        // 2x2 footprint covering x in {0,1}: column 0 is 3 high, column 1 is floor.
        let oracle = (0..2)
            .flat_map(|x| (0..2).map(move |y| (x, y)))
            .map(|(x, y)| b.heightmap().get(x, y))
            .max()
            .unwrap();
        assert_eq!(oracle, 3);
        assert_eq!(
            b.resting_height(dims(2, 2, 1), 0, 0, Orientation::Upright).unwrap(),
            oracle
        );
    }

    #[test]
    fn resting_height_out_of_bounds() {
        let b = bin(4, 4, 10);
        assert!(matches!(
            b.resting_height(dims(2, 2, 1), 3, 0, Orientation::Upright),
            Err(Error::OutOfBounds { .. })
        ));
        assert!(b.resting_height(dims(3, 1, 1), 0, 2, Orientation::Turned).is_err());
    }

    #[test]
    fn feasibility_rules() {
        let b = bin(4, 4, 10);
        assert!(b.feasible(dims(2, 3, 4), at(1, 1, 0)));
        assert!(b.feasible(dims(2, 3, 4), Placement::new(0, 2, 0, Orientation::Turned)));
        assert!(!b.feasible(dims(2, 2, 11), at(0, 0, 0)));
        assert!(!b.feasible(dims(2, 2, 1), at(0, 0, 1)), "floating");

        let pillar = b.place(dims(1, 1, 2), at(0, 0, 0)).unwrap();
        // 4x4 footprint resting on a single 1x1 column: support 1/16.
        let support = pillar.heightmap().cells().iter().filter(|&&c| c == 2).count() as f64 / 16.0;
        assert!(support < 0.6);
        assert!(!pillar.feasible(dims(4, 4, 1), at(0, 0, 2)));
        assert!(!pillar.feasible(dims(4, 4, 1), at(0, 0, 0)), "intersects the pillar");
    }

    #[test]
    fn stability_needs_centre_support() {
        // Support ratio 12/16 but nothing under the centre 2x2 block.
        let spec = BinSpec::new(4, 4, 10).unwrap();
        let ring = [
            (dims(4, 1, 1), at(0, 0, 0)),
            (dims(4, 1, 1), at(0, 3, 0)),
            (dims(1, 2, 1), at(0, 1, 0)),
            (dims(1, 2, 1), at(3, 1, 0)),
        ];
        let mut b = BinState::empty(spec);
        for (d, p) in ring {
            b = b.place(d, p).unwrap();
        }
        assert!(!b.feasible(dims(4, 4, 1), at(0, 0, 1)));
        let filled = b.place(dims(1, 1, 1), at(1, 1, 0)).unwrap();
        assert!(filled.feasible(dims(4, 4, 1), at(0, 0, 1)));
    }

    #[test]
    fn wall_margin() {
        let rules = PlacementRules {
            wall_margin: 2,
            ..PlacementRules::default()
        };
        let b = BinState::with_rules(BinSpec::new(10, 10, 5).unwrap(), rules);
        assert!(b.feasible(dims(2, 2, 1), at(0, 0, 0)));
        assert!(!b.feasible(dims(2, 2, 1), at(1, 0, 0)));
        assert!(b.feasible(dims(2, 2, 1), at(2, 2, 0)));
        assert!(b.feasible(dims(2, 2, 1), at(8, 8, 0)));
        assert!(!b.feasible(dims(2, 2, 1), at(7, 0, 0)));
    }

    #[test]
    fn place_updates_heights_and_keeps_input() {
        let b0 = bin(4, 4, 10);
        let b1 = b0.place(dims(2, 2, 3), at(0, 0, 0)).unwrap();
        assert_eq!(b0.packed_volume(), 0);
        for x in 0..4 {
            for y in 0..4 {
                let expected = if x < 2 && y < 2 { 3 } else { 0 };
                assert_eq!(b1.heightmap().get(x, y), expected);
            }
        }
        let b2 = b1.place(dims(2, 2, 3), at(0, 0, 3)).unwrap();
        assert_eq!(b2.heightmap().get(1, 1), 6);
        assert!((b2.utilization() - 0.15).abs() < 1e-15);
        assert_eq!(b2.packed_volume() * 20, 3 * 160);
        assert!(matches!(
            b2.place(dims(2, 2, 3), at(0, 0, 0)),
            Err(Error::Infeasible { .. })
        ));
    }

    #[test]
    fn volume_rewards() {
        let spec = BinSpec::new(400, 200, 300).unwrap();
        assert_eq!(volume_reward(dims(300, 50, 150), &spec), 0.09375);
        assert_eq!(volume_reward(dims(400, 200, 300), &spec), 1.0);
        let small = BinSpec::new(10, 10, 10).unwrap();
        assert_eq!(volume_reward(dims(1, 1, 1), &small), 0.001);
    }

    #[test]
    fn waste_cell_sum() {
        let b = bin(4, 4, 10);
        assert_eq!(b.waste_volume(dims(2, 2, 3), at(1, 1, 0)), 0);
        // Three of four footprint cells at height 3, one at floor.
        let b = b
            .place(dims(2, 1, 3), at(0, 0, 0))
            .unwrap()
            .place(dims(1, 1, 3), at(0, 1, 0))
            .unwrap();
        let p = at(0, 0, 3);
        let oracle: u64 = [(0, 0), (0, 1), (1, 0), (1, 1)]
            .iter()
            .map(|&(x, y)| (3 - b.heightmap().get(x, y)) as u64)
            .sum();
        assert_eq!(oracle, 3);
        assert_eq!(b.waste_volume(dims(2, 2, 1), p), 3);
        assert_eq!(b.wasted_space_penalty(dims(2, 2, 1), p), 3.0 / 160.0);
    }

    #[test]
    fn utilization_examples() {
        assert_eq!(bin(4, 4, 10).utilization(), 0.0);
        let full = bin(2, 2, 2).place(dims(2, 2, 2), at(0, 0, 0)).unwrap();
        assert_eq!(full.utilization(), 1.0);
    }

    #[test]
    fn zero_dims_rejected() {
        assert!(BinSpec::new(0, 1, 1).is_err());
        assert!(ParcelDims::new(1, 0, 1).is_err());
    }
}
