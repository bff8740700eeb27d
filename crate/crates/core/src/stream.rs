//! Non-stationary parcel streams and the canonical stream file format.
//!
//! A stream is a concatenation of batches. Each batch draws its type `x`
//! from the mixing weights, a length from the batch-length range, and then
//! i.i.d. parcels from that type's sampler. The long-run item distribution
//! is the mixture `sum_x D_x * P(X = x)`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BinSpec, ParcelDims};

/// Inclusive integer range.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub min: u32,
    pub max: u32,
}

impl Span {
    pub fn new(min: u32, max: u32) -> Self {
        Self { min, max }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DimSampler {
    /// Independent uniform integers per axis.
    Uniform { l: Span, w: Span, h: Span },
    /// Weighted choice among fixed parcel shapes.
    Categorical { items: Vec<CategoricalItem> },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoricalItem {
    pub l: u32,
    pub w: u32,
    pub h: u32,
    pub weight: f64,
}

impl DimSampler {
    fn validate(&self) -> Result<()> {
        match self {
            DimSampler::Uniform { l, w, h } => {
                for s in [l, w, h] {
                    if s.min == 0 || s.min > s.max {
                        return Err(Error::Config(format!("bad dimension range {}..={}", s.min, s.max)));
                    }
                }
            }
            DimSampler::Categorical { items } => {
                if items.is_empty() {
                    return Err(Error::Config("categorical sampler has no items".into()));
                }
                if items.iter().any(|i| i.l == 0 || i.w == 0 || i.h == 0) {
                    return Err(Error::Config("categorical item with a zero side".into()));
                }
                if items.iter().any(|i| !(i.weight >= 0.0 && i.weight.is_finite()))
                    || items.iter().all(|i| i.weight == 0.0)
                {
                    return Err(Error::Config(
                        "categorical weights must be nonnegative and not all zero".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Largest parcel this sampler can emit, per axis.
    fn max_dims(&self) -> (u32, u32, u32) {
        match self {
            DimSampler::Uniform { l, w, h } => (l.max, w.max, h.max),
            DimSampler::Categorical { items } => items
                .iter()
                .filter(|i| i.weight > 0.0)
                .fold((0, 0, 0), |acc, i| (acc.0.max(i.l), acc.1.max(i.w), acc.2.max(i.h))),
        }
    }

    fn support(&self) -> Vec<(ParcelDims, f64)> {
        match self {
            DimSampler::Uniform { l, w, h } => {
                let n = (l.max - l.min + 1) as f64 * (w.max - w.min + 1) as f64 * (h.max - h.min + 1) as f64;
                let mut out = Vec::new();
                for a in l.min..=l.max {
                    for b in w.min..=w.max {
                        for c in h.min..=h.max {
                            out.push((ParcelDims { l: a, w: b, h: c }, 1.0 / n));
                        }
                    }
                }
                out
            }
            DimSampler::Categorical { items } => {
                let total: f64 = items.iter().map(|i| i.weight).sum();
                items
                    .iter()
                    .filter(|i| i.weight > 0.0)
                    .map(|i| (ParcelDims { l: i.l, w: i.w, h: i.h }, i.weight / total))
                    .collect()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchType {
    pub name: String,
    pub weight: f64,
    pub sampler: DimSampler,
}

/// Mixture-of-batches stream generator configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamModel {
    pub seed: u64,
    pub batch_length: Span,
    pub batches: Vec<BatchType>,
}

/// A generated stream with the batch type that produced each item.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledStream {
    pub items: Vec<ParcelDims>,
    pub labels: Vec<Option<u32>>,
}

impl StreamModel {
    pub fn validate(&self) -> Result<()> {
        if self.batches.is_empty() {
            return Err(Error::Config("stream model has no batch types".into()));
        }
        if self.batch_length.min == 0 || self.batch_length.min > self.batch_length.max {
            return Err(Error::Config("batch length range must satisfy 1 <= min <= max".into()));
        }
        let weights: f64 = self.batches.iter().map(|b| b.weight).sum();
        if self.batches.iter().any(|b| b.weight.is_nan() || b.weight < 0.0) || (weights - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "mixing weights must be nonnegative and sum to 1 (got {weights})"
            )));
        }
        for b in &self.batches {
            b.sampler.validate()?;
        }
        Ok(())
    }

    /// Checks that every parcel the model can emit fits an empty `spec` bin.
    pub fn validate_for(&self, spec: &BinSpec) -> Result<()> {
        self.validate()?;
        for b in &self.batches {
            let (l, w, h) = b.sampler.max_dims();
            if !(ParcelDims { l, w, h }).fits(spec) {
                return Err(Error::Config(format!(
                    "batch `{}` can emit {l}x{w}x{h}, which does not fit a {}x{}x{} bin",
                    b.name, spec.length, spec.width, spec.height
                )));
            }
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let model: StreamModel = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("stream model serializes")
    }

    fn batch_index(&self) -> WeightedIndex<f64> {
        WeightedIndex::new(self.batches.iter().map(|b| b.weight)).expect("validated weights")
    }

    /// Draws one parcel from batch type `x`.
    pub fn sample_from<R: Rng + ?Sized>(&self, x: usize, rng: &mut R) -> ParcelDims {
        match &self.batches[x].sampler {
            DimSampler::Uniform { l, w, h } => ParcelDims {
                l: rng.gen_range(l.min..=l.max),
                w: rng.gen_range(w.min..=w.max),
                h: rng.gen_range(h.min..=h.max),
            },
            DimSampler::Categorical { items } => {
                let idx = WeightedIndex::new(items.iter().map(|i| i.weight)).expect("validated weights");
                let i = items[idx.sample(rng)];
                ParcelDims { l: i.l, w: i.w, h: i.h }
            }
        }
    }

    /// Draws one parcel from the long-run mixture.
    pub fn sample_mixture<R: Rng + ?Sized>(&self, rng: &mut R) -> ParcelDims {
        let x = self.batch_index().sample(rng);
        self.sample_from(x, rng)
    }

    /// Exact long-run mixture over parcel shapes.
    pub fn mixture_support(&self) -> Vec<(ParcelDims, f64)> {
        let mut acc: std::collections::BTreeMap<ParcelDims, f64> = Default::default();
        for b in &self.batches {
            for (d, p) in b.sampler.support() {
                *acc.entry(d).or_insert(0.0) += p * b.weight;
            }
        }
        acc.into_iter().filter(|&(_, p)| p > 0.0).collect()
    }

    /// Exact distribution of batch type `x` over parcel shapes.
    pub fn batch_support(&self, x: usize) -> Vec<(ParcelDims, f64)> {
        self.batches[x].sampler.support()
    }

    /// Generates `length` parcels; deterministic in the model seed.
    pub fn generate(&self, length: usize) -> LabeledStream {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let batches = self.batch_index();
        let mut items = Vec::with_capacity(length);
        let mut labels = Vec::with_capacity(length);
        while items.len() < length {
            let x = batches.sample(&mut rng);
            let len = rng.gen_range(self.batch_length.min..=self.batch_length.max) as usize;
            for _ in 0..len.min(length - items.len()) {
                items.push(self.sample_from(x, &mut rng));
                labels.push(Some(x as u32));
            }
        }
        LabeledStream { items, labels }
    }
}

impl LabeledStream {
    pub fn unlabeled(items: Vec<ParcelDims>) -> Self {
        let labels = vec![None; items.len()];
        Self { items, labels }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Labels are usable for oracle comparisons only when every item has one.
    pub fn has_labels(&self) -> bool {
        !self.labels.is_empty() && self.labels.iter().all(Option::is_some)
    }

    /// One parcel per line: `id,l,w,h[,label]`.
    pub fn to_text(&self) -> String {
        let mut out = String::from("id,l,w,h,label\n");
        for (i, (d, label)) in self.items.iter().zip(&self.labels).enumerate() {
            match label {
                Some(x) => writeln!(out, "{i},{},{},{},{x}", d.l, d.w, d.h),
                None => writeln!(out, "{i},{},{},{}", d.l, d.w, d.h),
            }
            .expect("write to string");
        }
        out
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut items = Vec::new();
        let mut labels = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with("id") {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if !(4..=5).contains(&fields.len()) {
                return Err(Error::parse(origin, i + 1, "expected id,l,w,h[,label]"));
            }
            let num = |s: &str| -> Result<u32> {
                s.parse::<u32>()
                    .map_err(|e| Error::parse(origin, i + 1, format!("`{s}`: {e}")))
            };
            let dims = ParcelDims::new(num(fields[1])?, num(fields[2])?, num(fields[3])?)
                .map_err(|e| Error::parse(origin, i + 1, e.to_string()))?;
            items.push(dims);
            labels.push(match fields.get(4) {
                Some(s) if !s.is_empty() => Some(num(s)?),
                _ => None,
            });
        }
        Ok(Self { items, labels })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}
