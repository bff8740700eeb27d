//! Item-type statistics: discretization, the offline frequency table, the
//! familiarity score of a lookahead window, and total-variation distance.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ParcelDims;

/// Tolerance used when checking that a distribution sums to one.
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// Bucketed parcel dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ItemType {
    pub l: u32,
    pub w: u32,
    pub h: u32,
}

impl ItemType {
    pub fn dims(&self) -> ParcelDims {
        ParcelDims {
            l: self.l,
            w: self.w,
            h: self.h,
        }
    }
}

/// Round half up to the nearest multiple of `q`, never below `q`.
fn bucket(v: u32, q: u32) -> u32 {
    let v = v as u64;
    let q64 = q as u64;
    let k = (2 * v + q64) / (2 * q64);
    (k.max(1) * q64) as u32
}

/// Maps parcel dimensions to their item type. `q` is clamped to at least 1.
pub fn discretize(dims: ParcelDims, q: u32) -> ItemType {
    let q = q.max(1);
    ItemType {
        l: bucket(dims.l, q),
        w: bucket(dims.w, q),
        h: bucket(dims.h, q),
    }
}

/// Empirical distribution over item types.
pub type TypeDistribution = BTreeMap<ItemType, f64>;

/// How the familiarity product is reported.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum FamiliarityMode {
    /// Plain joint probability of the window.
    #[default]
    Raw,
    /// Joint probability divided by `p_max^w`, clamped to `[0, 1]`.
    Rescaled,
}

/// Offline item-type frequencies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyTable {
    bucket: u32,
    counts: BTreeMap<ItemType, u64>,
    total: u64,
    laplace: bool,
}

impl FrequencyTable {
    pub fn build(dataset: &[ParcelDims], bucket: u32) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let bucket = bucket.max(1);
        let mut counts = BTreeMap::new();
        for d in dataset {
            *counts.entry(discretize(*d, bucket)).or_insert(0u64) += 1;
        }
        Ok(Self {
            bucket,
            counts,
            total: dataset.len() as u64,
            laplace: false,
        })
    }

    /// Builds a table directly from per-type counts.
    pub fn from_counts(bucket: u32, counts: BTreeMap<ItemType, u64>) -> Result<Self> {
        let total: u64 = counts.values().sum();
        if total == 0 {
            return Err(Error::EmptyDataset);
        }
        Ok(Self {
            bucket: bucket.max(1),
            counts: counts.into_iter().filter(|&(_, c)| c > 0).collect(),
            total,
            laplace: false,
        })
    }

    /// Queries use add-one smoothing, so unseen types get a small nonzero probability.
    pub fn with_laplace_smoothing(mut self, on: bool) -> Self {
        self.laplace = on;
        self
    }

    pub fn bucket(&self) -> u32 {
        self.bucket
    }

    /// Vocabulary size `M`.
    pub fn vocabulary(&self) -> usize {
        self.counts.len()
    }

    pub fn sample_count(&self) -> u64 {
        self.total
    }

    pub fn counts(&self) -> &BTreeMap<ItemType, u64> {
        &self.counts
    }

    pub fn probability_of_type(&self, t: &ItemType) -> f64 {
        let c = self.counts.get(t).copied().unwrap_or(0);
        if self.laplace {
            (c + 1) as f64 / (self.total + self.counts.len() as u64 + 1) as f64
        } else {
            c as f64 / self.total as f64
        }
    }

    pub fn probability(&self, dims: ParcelDims) -> f64 {
        self.probability_of_type(&discretize(dims, self.bucket))
    }

    pub fn max_probability(&self) -> f64 {
        self.counts
            .keys()
            .map(|t| self.probability_of_type(t))
            .fold(0.0, f64::max)
    }

    /// The table as a normalized distribution (unsmoothed).
    pub fn distribution(&self) -> TypeDistribution {
        self.counts
            .iter()
            .map(|(t, &c)| (*t, c as f64 / self.total as f64))
            .collect()
    }

    /// Familiarity of a lookahead window: the product of type probabilities
    /// over its first `min(w, window.len())` items. An empty window scores 1.
    pub fn familiarity(&self, window: &[ParcelDims], w: usize, mode: FamiliarityMode) -> f64 {
        let span = w.min(window.len());
        let joint: f64 = window[..span].iter().map(|d| self.probability(*d)).product();
        match mode {
            FamiliarityMode::Raw => joint,
            FamiliarityMode::Rescaled => {
                let norm = self.max_probability().powi(span as i32);
                if norm > 0.0 {
                    (joint / norm).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            }
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "# frequency-table q={} types={} samples={}\nl,w,h,count,probability\n",
            self.bucket,
            self.vocabulary(),
            self.total
        );
        for (t, &c) in &self.counts {
            let _ = writeln!(out, "{},{},{},{},{:?}", t.l, t.w, t.h, c, c as f64 / self.total as f64);
        }
        out
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| Error::parse(origin, 1, "missing header"))?;
        let mut bucket = None;
        let mut samples = None;
        for field in header.trim_start_matches('#').split_whitespace() {
            if let Some(v) = field.strip_prefix("q=") {
                bucket = v.parse::<u32>().ok();
            } else if let Some(v) = field.strip_prefix("samples=") {
                samples = v.parse::<u64>().ok();
            }
        }
        let bucket = bucket.ok_or_else(|| Error::parse(origin, 1, "header lacks q=<bucket>"))?;

        let mut counts = BTreeMap::new();
        for (i, line) in lines {
            let line = line.trim();
            if line.starts_with("l,") {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() < 4 {
                return Err(Error::parse(origin, i + 1, "expected l,w,h,count[,probability]"));
            }
            let num = |s: &str| -> Result<u64> {
                s.parse::<u64>()
                    .map_err(|e| Error::parse(origin, i + 1, format!("`{s}`: {e}")))
            };
            let t = ItemType {
                l: num(fields[0])? as u32,
                w: num(fields[1])? as u32,
                h: num(fields[2])? as u32,
            };
            counts.insert(t, num(fields[3])?);
        }
        let table = Self::from_counts(bucket, counts).map_err(|e| Error::parse(origin, 0, e.to_string()))?;
        if let Some(s) = samples {
            if s != table.total {
                return Err(Error::parse(
                    origin,
                    1,
                    format!("header says {s} samples, rows sum to {}", table.total),
                ));
            }
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// Empirical type distribution of a parcel slice under bucket size `q`.
pub fn empirical_distribution(items: &[ParcelDims], q: u32) -> TypeDistribution {
    let mut counts: BTreeMap<ItemType, u64> = BTreeMap::new();
    for d in items {
        *counts.entry(discretize(*d, q)).or_insert(0) += 1;
    }
    let n = items.len() as f64;
    counts.into_iter().map(|(t, c)| (t, c as f64 / n)).collect()
}

fn check_normalized<K>(p: &BTreeMap<K, f64>) -> Result<()> {
    let mass: f64 = p.values().sum();
    if (mass - 1.0).abs() > NORMALIZATION_TOL || p.values().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::Unnormalized(mass));
    }
    Ok(())
}

/// Total variation distance `1/2 * sum |p - q|` over the union of supports.
pub fn tv_distance<K: Ord>(p: &BTreeMap<K, f64>, q: &BTreeMap<K, f64>) -> Result<f64> {
    check_normalized(p)?;
    check_normalized(q)?;
    let only_p: f64 = p
        .iter()
        .filter(|(k, _)| !q.contains_key(*k))
        .map(|(_, v)| v.abs())
        .sum();
    let rest: f64 = q
        .iter()
        .map(|(k, qv)| (p.get(k).copied().unwrap_or(0.0) - qv).abs())
        .sum();
    Ok((0.5 * (only_p + rest)).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(l: u32, w: u32, h: u32) -> ParcelDims {
        ParcelDims::new(l, w, h).unwrap()
    }

    fn t(l: u32, w: u32, h: u32) -> ItemType {
        ItemType { l, w, h }
    }

    #[test]
    fn discretize_examples() {
        assert_eq!(discretize(d(17, 12, 9), 1), t(17, 12, 9));
        assert_eq!(discretize(d(17, 12, 9), 5), t(15, 10, 10));
        assert_eq!(discretize(d(1, 2, 3), 4), t(4, 4, 4));
        assert_eq!(discretize(d(6, 5, 10), 4), t(8, 4, 12));
        let once = discretize(d(17, 12, 9), 5);
        assert_eq!(discretize(once.dims(), 5), once);
    }

    #[test]
    fn table_ratios() {
        let a = d(4, 4, 4);
        let b = d(8, 4, 4);
        let one = FrequencyTable::build(&[a, a, a], 4).unwrap();
        assert_eq!(one.vocabulary(), 1);
        assert_eq!(one.probability(a), 1.0);

        let table = FrequencyTable::build(&[a, a, a, b], 4).unwrap();
        assert_eq!(table.probability(a), 0.75);
        assert_eq!(table.probability(b), 0.25);
        assert_eq!(table.probability(d(12, 12, 12)), 0.0);
        assert!(matches!(FrequencyTable::build(&[], 4), Err(Error::EmptyDataset)));
    }

    #[test]
    fn familiarity_examples() {
        let a = d(4, 4, 4);
        let b = d(8, 4, 4);
        let unseen = d(40, 40, 40);
        let only_a = FrequencyTable::build(&[a], 4).unwrap();
        assert_eq!(only_a.familiarity(&[a, a, a], 3, FamiliarityMode::Raw), 1.0);
        assert_eq!(only_a.familiarity(&[a, unseen, a], 3, FamiliarityMode::Raw), 0.0);

        let half = FrequencyTable::build(&[a, b], 4).unwrap();
        assert_eq!(half.familiarity(&[a, b, a], 3, FamiliarityMode::Raw), 0.125);
        // Shorter queue than the window: product over what is available.
        assert_eq!(half.familiarity(&[a], 3, FamiliarityMode::Raw), 0.5);
        // Items past the window are ignored.
        assert_eq!(half.familiarity(&[a, b, a, unseen], 3, FamiliarityMode::Raw), 0.125);
        assert_eq!(half.familiarity(&[a, b, a], 3, FamiliarityMode::Rescaled), 1.0);
    }

    #[test]
    fn laplace_smoothing_gives_unseen_mass() {
        let a = d(4, 4, 4);
        let table = FrequencyTable::build(&[a, a, a], 4)
            .unwrap()
            .with_laplace_smoothing(true);
        assert_eq!(table.probability(a), 4.0 / 5.0);
        assert_eq!(table.probability(d(40, 40, 40)), 1.0 / 5.0);
    }

    #[test]
    fn tv_examples() {
        let p: BTreeMap<u32, f64> = [(0, 0.5), (1, 0.5)].into();
        let q: BTreeMap<u32, f64> = [(0, 0.9), (1, 0.1)].into();
        assert!((tv_distance(&p, &q).unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(tv_distance(&p, &p).unwrap(), 0.0);
        let r: BTreeMap<u32, f64> = [(2, 1.0)].into();
        assert_eq!(tv_distance(&p, &r).unwrap(), 1.0);
        let bad: BTreeMap<u32, f64> = [(0, 0.5)].into();
        assert!(matches!(tv_distance(&p, &bad), Err(Error::Unnormalized(_))));
    }

    #[test]
    fn table_text_round_trip() {
        let data = [d(4, 4, 4), d(4, 4, 4), d(9, 3, 2), d(13, 7, 5)];
        let table = FrequencyTable::build(&data, 4).unwrap();
        let back = FrequencyTable::parse(&table.to_text(), Path::new("mem")).unwrap();
        assert_eq!(back, table);
        assert!(FrequencyTable::parse("l,w,h\n", Path::new("mem")).is_err());
        let lying = table.to_text().replace("samples=4", "samples=5");
        assert!(FrequencyTable::parse(&lying, Path::new("mem")).is_err());
    }
}
