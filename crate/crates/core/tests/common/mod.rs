#![allow(dead_code)]

use std::collections::BTreeSet;

use binplan::actions::candidate_actions;
use binplan::geometry::{BinSpec, BinState, ParcelDims, PlacedBox, PlacementRules};
use binplan::heuristics::dbl_select;
use rand::seq::SliceRandom;
use rand::Rng;

pub fn dims(l: u32, w: u32, h: u32) -> ParcelDims {
    ParcelDims::new(l, w, h).unwrap()
}

pub fn random_dims<R: Rng>(rng: &mut R, max: u32) -> ParcelDims {
    dims(rng.gen_range(1..=max), rng.gen_range(1..=max), rng.gen_range(1..=max))
}

/// Places up to `steps` random parcels at uniformly chosen candidates.
pub fn random_state<R: Rng>(rng: &mut R, spec: BinSpec, steps: usize, max_dim: u32) -> BinState {
    let mut bin = BinState::with_rules(spec, PlacementRules::default());
    for _ in 0..steps {
        let d = random_dims(rng, max_dim);
        let actions = candidate_actions(&bin, d);
        let Some(&a) = actions.choose(rng) else { continue };
        bin = bin.place(d, a).unwrap();
    }
    bin
}

/// A cluttered bin (deepest-bottom-left placements) and a random queue.
pub fn random_instance<R: Rng>(
    rng: &mut R,
    spec: BinSpec,
    clutter: usize,
    horizon: usize,
) -> (BinState, Vec<ParcelDims>) {
    let mut bin = BinState::empty(spec);
    for _ in 0..clutter {
        let d = random_dims(rng, 3);
        if let Some(a) = dbl_select(&bin, d) {
            bin = bin.place(d, a).unwrap();
        }
    }
    let queue = (0..horizon).map(|_| random_dims(rng, 3)).collect();
    (bin, queue)
}

pub fn voxels(spec: &BinSpec, boxes: &[PlacedBox]) -> Vec<bool> {
    let (l, w, h) = (spec.length as usize, spec.width as usize, spec.height as usize);
    let mut occ = vec![false; l * w * h];
    for b in boxes {
        let [x0, y0, z0, x1, y1, z1] = b.extent().map(|v| v as usize);
        for x in x0..x1 {
            for y in y0..y1 {
                for z in z0..z1 {
                    assert!(!occ[(x * w + y) * h + z], "boxes overlap at ({x}, {y}, {z})");
                    occ[(x * w + y) * h + z] = true;
                }
            }
        }
    }
    occ
}

/// Every maximal empty axis-aligned box, by exhaustive enumeration.
pub fn brute_force_ems(spec: &BinSpec, boxes: &[PlacedBox]) -> BTreeSet<([u32; 3], [u32; 3])> {
    let (l, w, h) = (spec.length as usize, spec.width as usize, spec.height as usize);
    let occ = voxels(spec, boxes);
    // 3-D prefix sums of occupancy.
    let idx = |x: usize, y: usize, z: usize| (x * (w + 1) + y) * (h + 1) + z;
    let mut p = vec![0i64; (l + 1) * (w + 1) * (h + 1)];
    for x in 1..=l {
        for y in 1..=w {
            for z in 1..=h {
                p[idx(x, y, z)] = i64::from(occ[((x - 1) * w + (y - 1)) * h + (z - 1)])
                    + p[idx(x - 1, y, z)]
                    + p[idx(x, y - 1, z)]
                    + p[idx(x, y, z - 1)]
                    - p[idx(x - 1, y - 1, z)]
                    - p[idx(x - 1, y, z - 1)]
                    - p[idx(x, y - 1, z - 1)]
                    + p[idx(x - 1, y - 1, z - 1)];
            }
        }
    }
    let filled = |a: [usize; 3], b: [usize; 3]| -> i64 {
        p[idx(b[0], b[1], b[2])] - p[idx(a[0], b[1], b[2])] - p[idx(b[0], a[1], b[2])] - p[idx(b[0], b[1], a[2])]
            + p[idx(a[0], a[1], b[2])]
            + p[idx(a[0], b[1], a[2])]
            + p[idx(b[0], a[1], a[2])]
            - p[idx(a[0], a[1], a[2])]
    };
    let size = [l, w, h];
    let mut out = BTreeSet::new();
    for x0 in 0..l {
        for x1 in x0 + 1..=l {
            for y0 in 0..w {
                for y1 in y0 + 1..=w {
                    for z0 in 0..h {
                        for z1 in z0 + 1..=h {
                            let (a, b) = ([x0, y0, z0], [x1, y1, z1]);
                            if filled(a, b) != 0 {
                                continue;
                            }
                            let maximal = (0..3).all(|k| {
                                let lower = a[k] == 0 || {
                                    let mut a2 = a;
                                    a2[k] -= 1;
                                    filled(a2, b) != 0
                                };
                                let upper = b[k] == size[k] || {
                                    let mut b2 = b;
                                    b2[k] += 1;
                                    filled(a, b2) != 0
                                };
                                lower && upper
                            });
                            if maximal {
                                out.insert((a.map(|v| v as u32), b.map(|v| v as u32)));
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Heightmap rebuilt from the placed boxes alone.
pub fn rebuilt_heights(spec: &BinSpec, boxes: &[PlacedBox]) -> Vec<u32> {
    let mut hm = vec![0; spec.length as usize * spec.width as usize];
    for b in boxes {
        let [x0, y0, _, x1, y1, z1] = b.extent();
        for x in x0..x1 {
            for y in y0..y1 {
                let c = &mut hm[x as usize * spec.width as usize + y as usize];
                *c = (*c).max(z1);
            }
        }
    }
    hm
}
