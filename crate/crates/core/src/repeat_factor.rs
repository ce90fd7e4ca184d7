//! Category- and image-level repeat factors.
//!
//! A category's repeat factor is `max(1, sqrt(t / f))` where `f` is its
//! effective frequency: the image fraction for RFS, the instance fraction for
//! instance-only sampling, and a mean of the two for instance-aware RFS. An
//! image's repeat factor is the largest factor among the categories labeled in
//! it.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Serialize, Serializer};

use crate::annotations::{CategoryId, Dataset, ImageId, SourceDigest};
use crate::error::{Error, Result};
use crate::frequency::{CategoryFrequency, FrequencyTable};

pub const DEFAULT_THRESHOLD: f64 = 1e-3;

/// How the image and instance fractions are averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MeanKind {
    Geometric,
    Harmonic,
    Arithmetic,
    Quadratic,
}

impl MeanKind {
    pub const ALL: [MeanKind; 4] = [
        MeanKind::Harmonic,
        MeanKind::Geometric,
        MeanKind::Arithmetic,
        MeanKind::Quadratic,
    ];

    pub fn mean(self, x: f64, y: f64) -> f64 {
        match self {
            MeanKind::Geometric => (x * y).sqrt(),
            MeanKind::Harmonic => 2.0 * x * y / (x + y),
            MeanKind::Arithmetic => (x + y) / 2.0,
            MeanKind::Quadratic => ((x * x + y * y) / 2.0).sqrt(),
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            MeanKind::Geometric => "geometric",
            MeanKind::Harmonic => "harmonic",
            MeanKind::Arithmetic => "arithmetic",
            MeanKind::Quadratic => "quadratic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Image fraction only.
    Rfs,
    /// Mean of image and instance fractions.
    Irfs(MeanKind),
    /// Instance fraction only.
    InstanceOnly,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Rfs,
        Method::Irfs(MeanKind::Geometric),
        Method::Irfs(MeanKind::Harmonic),
        Method::Irfs(MeanKind::Arithmetic),
        Method::Irfs(MeanKind::Quadratic),
        Method::InstanceOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Rfs => "rfs",
            Method::Irfs(MeanKind::Geometric) => "irfs-geometric",
            Method::Irfs(MeanKind::Harmonic) => "irfs-harmonic",
            Method::Irfs(MeanKind::Arithmetic) => "irfs-arithmetic",
            Method::Irfs(MeanKind::Quadratic) => "irfs-quadratic",
            Method::InstanceOnly => "instance-only",
        }
    }

    pub fn valid_names() -> String {
        Method::ALL.map(Method::name).join(", ")
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "unknown method `{s}` (expected one of: {})",
                    Method::valid_names()
                ))
            })
    }
}

impl Serialize for Method {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl fmt::Display for MeanKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A method together with its oversampling threshold `t`.
///
/// `t == 0` disables re-sampling: every factor is 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SamplerConfig {
    pub method: Method,
    threshold: f64,
}

impl SamplerConfig {
    pub fn new(method: Method, threshold: f64) -> Result<Self> {
        if !threshold.is_finite() || threshold < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "threshold must be a finite non-negative number, got {threshold}"
            )));
        }
        Ok(SamplerConfig { method, threshold })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            method: Method::Irfs(MeanKind::Geometric),
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

impl fmt::Display for SamplerConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.method, self.threshold)
    }
}

/// Parses `method[:threshold]`, e.g. `irfs-harmonic:0.001`.
impl FromStr for SamplerConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (method, threshold) = match s.split_once(':') {
            Some((m, t)) => {
                let t = t
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidConfig(format!("invalid threshold `{t}`")))?;
                (m, t)
            }
            None => (s, DEFAULT_THRESHOLD),
        };
        SamplerConfig::new(method.parse()?, threshold)
    }
}

/// The frequency the threshold is compared against, or `None` when an input
/// it needs is zero.
pub fn effective_frequency(freq: &CategoryFrequency, method: Method) -> Option<f64> {
    let (fi, fb) = (freq.f_image, freq.f_instance);
    match method {
        Method::Rfs => (fi > 0.0).then_some(fi),
        Method::InstanceOnly => (fb > 0.0).then_some(fb),
        Method::Irfs(kind) => (fi > 0.0 && fb > 0.0).then(|| kind.mean(fi, fb)),
    }
}

pub fn repeat_factor_for(effective_frequency: f64, threshold: f64) -> f64 {
    (threshold / effective_frequency).sqrt().max(1.0)
}

pub fn category_repeat_factor(freq: &CategoryFrequency, cfg: &SamplerConfig) -> Option<f64> {
    effective_frequency(freq, cfg.method).map(|f| repeat_factor_for(f, cfg.threshold))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CategoryFactor {
    pub category_id: CategoryId,
    /// `None` for categories without instances.
    pub repeat_factor: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepeatFactorTable {
    pub config: SamplerConfig,
    pub source_digest: SourceDigest,
    /// Same order as the frequency table it was computed from.
    pub entries: Vec<CategoryFactor>,
}

pub fn compute_repeat_factors(
    table: &FrequencyTable,
    cfg: &SamplerConfig,
) -> Result<RepeatFactorTable> {
    if table.is_empty() || table.total_images == 0 || table.total_instances == 0 {
        return Err(Error::EmptyDataset);
    }
    let entries = table
        .entries
        .iter()
        .map(|freq| CategoryFactor {
            category_id: freq.category_id,
            repeat_factor: category_repeat_factor(freq, cfg),
        })
        .collect();
    Ok(RepeatFactorTable {
        config: *cfg,
        source_digest: table.source_digest,
        entries,
    })
}

impl RepeatFactorTable {
    pub fn get(&self, id: CategoryId) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.category_id == id)
            .and_then(|e| e.repeat_factor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ImageFactor {
    pub image_id: ImageId,
    pub repeat_factor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageRepeatTable {
    pub config: SamplerConfig,
    pub source_digest: SourceDigest,
    /// Same order as the dataset's images.
    pub entries: Vec<ImageFactor>,
}

impl ImageRepeatTable {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }
}

/// Each image gets the largest defined factor among its categories, or 1 when
/// it has none.
pub fn image_repeat_factors(ds: &Dataset, rft: &RepeatFactorTable) -> Result<ImageRepeatTable> {
    if rft.source_digest != ds.source_digest() {
        return Err(Error::ProvenanceMismatch {
            expected: ds.source_digest(),
            found: rft.source_digest,
        });
    }
    let lookup: HashMap<CategoryId, Option<f64>> = rft
        .entries
        .iter()
        .map(|e| (e.category_id, e.repeat_factor))
        .collect();
    let by_position: Vec<Option<f64>> = ds
        .categories()
        .iter()
        .map(|cat| lookup.get(&cat.id).copied().flatten())
        .collect();
    let entries = ds
        .images()
        .iter()
        .map(|img| {
            let repeat_factor = img
                .category_ids
                .iter()
                .filter_map(|&c| by_position[ds.category_position(c).expect("closed reference")])
                .fold(1.0, f64::max);
            ImageFactor {
                image_id: img.id,
                repeat_factor,
            }
        })
        .collect();
    Ok(ImageRepeatTable {
        config: rft.config,
        source_digest: rft.source_digest,
        entries,
    })
}

#[derive(Serialize)]
struct Provenance {
    schema_version: u32,
    tool_version: &'static str,
    source_digest: SourceDigest,
    method: Method,
    threshold: f64,
}

impl Provenance {
    fn of(cfg: &SamplerConfig, digest: SourceDigest) -> Self {
        Provenance {
            schema_version: crate::SCHEMA_VERSION,
            tool_version: crate::TOOL_VERSION,
            source_digest: digest,
            method: cfg.method,
            threshold: cfg.threshold,
        }
    }
}

/// Writes both tables as one JSON document with provenance.
pub fn write_factors_json(
    rft: &RepeatFactorTable,
    irt: &ImageRepeatTable,
    mut writer: impl Write,
) -> Result<()> {
    #[derive(Serialize)]
    struct Doc<'a> {
        #[serde(flatten)]
        provenance: Provenance,
        categories: &'a [CategoryFactor],
        images: &'a [ImageFactor],
    }
    let doc = Doc {
        provenance: Provenance::of(&rft.config, rft.source_digest),
        categories: &rft.entries,
        images: &irt.entries,
    };
    serde_json::to_writer_pretty(&mut writer, &doc).map_err(Error::from_json)?;
    writer.write_all(b"\n")?;
    Ok(())
}

#[derive(Serialize)]
struct FactorRow<K> {
    id: K,
    repeat_factor: Option<f64>,
    method: Method,
    threshold: f64,
    source_digest: SourceDigest,
}

impl RepeatFactorTable {
    /// Columns: `id,repeat_factor,method,threshold,source_digest`; an empty
    /// `repeat_factor` marks an undefined factor.
    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for e in &self.entries {
            w.serialize(FactorRow {
                id: e.category_id,
                repeat_factor: e.repeat_factor,
                method: self.config.method,
                threshold: self.config.threshold,
                source_digest: self.source_digest,
            })?;
        }
        w.flush()?;
        Ok(())
    }
}

impl ImageRepeatTable {
    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for e in &self.entries {
            w.serialize(FactorRow {
                id: e.image_id,
                repeat_factor: Some(e.repeat_factor),
                method: self.config.method,
                threshold: self.config.threshold,
                source_digest: self.source_digest,
            })?;
        }
        w.flush()?;
        Ok(())
    }
}
