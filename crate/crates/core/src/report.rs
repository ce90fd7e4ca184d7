//! Balance reports: per-bucket aggregates for one or more sampler configs and
//! method-vs-method deltas. Every number is taken from the frequency, factor
//! and exposure tables; nothing is recomputed here.

use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::annotations::{CategoryId, Dataset, SourceDigest};
use crate::error::{Error, Result};
use crate::frequency::{compute_frequencies, FrequencyBucket};
use crate::repeat_factor::{compute_repeat_factors, image_repeat_factors, SamplerConfig};
use crate::sampler::expected_exposure;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryRow {
    pub category_id: CategoryId,
    pub name: String,
    pub bucket: FrequencyBucket,
    pub image_count: usize,
    pub instance_count: usize,
    pub f_image: f64,
    pub f_instance: f64,
    pub repeat_factor: Option<f64>,
    pub exposure_before: f64,
    pub exposure_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BucketSummary {
    pub bucket: FrequencyBucket,
    pub category_count: usize,
    pub total_image_count: usize,
    pub total_instance_count: usize,
    /// Over categories with a defined factor; `None` if there are none.
    pub mean_repeat_factor: Option<f64>,
    pub max_repeat_factor: Option<f64>,
    pub mean_exposure_before: Option<f64>,
    pub mean_exposure_after: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigBlock {
    pub index: usize,
    pub config: SamplerConfig,
    pub buckets: Vec<BucketSummary>,
    pub categories: Vec<CategoryRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BalanceReport {
    pub schema_version: u32,
    pub tool_version: &'static str,
    pub source_digest: SourceDigest,
    pub image_count: usize,
    pub instance_count: usize,
    pub category_count: usize,
    pub blocks: Vec<ConfigBlock>,
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

fn summarize(bucket: FrequencyBucket, rows: &[CategoryRow]) -> BucketSummary {
    let members: Vec<&CategoryRow> = rows.iter().filter(|r| r.bucket == bucket).collect();
    let factors: Vec<f64> = members.iter().filter_map(|r| r.repeat_factor).collect();
    let before: Vec<f64> = members.iter().map(|r| r.exposure_before).collect();
    let after: Vec<f64> = members.iter().map(|r| r.exposure_after).collect();
    BucketSummary {
        bucket,
        category_count: members.len(),
        total_image_count: members.iter().map(|r| r.image_count).sum(),
        total_instance_count: members.iter().map(|r| r.instance_count).sum(),
        mean_repeat_factor: mean(&factors),
        max_repeat_factor: factors.iter().copied().reduce(f64::max),
        mean_exposure_before: mean(&before),
        mean_exposure_after: mean(&after),
    }
}

pub fn build_report(ds: &Dataset, configs: &[SamplerConfig]) -> Result<BalanceReport> {
    let ft = compute_frequencies(ds)?;
    if configs.is_empty() {
        return Err(Error::InvalidConfig("report needs at least one config".into()));
    }
    let blocks = configs
        .par_iter()
        .enumerate()
        .map(|(index, cfg)| {
            let rft = compute_repeat_factors(&ft, cfg)?;
            let irt = image_repeat_factors(ds, &rft)?;
            let exposure = expected_exposure(ds, &irt, &ft)?;
            let categories: Vec<CategoryRow> = ft
                .entries
                .iter()
                .zip(&rft.entries)
                .zip(&exposure)
                .map(|((f, r), e)| CategoryRow {
                    category_id: f.category_id,
                    name: f.name.clone(),
                    bucket: f.bucket(),
                    image_count: f.image_count,
                    instance_count: f.instance_count,
                    f_image: f.f_image,
                    f_instance: f.f_instance,
                    repeat_factor: r.repeat_factor,
                    exposure_before: f.image_count as f64,
                    exposure_after: e.expected,
                })
                .collect();
            let buckets = FrequencyBucket::ALL
                .iter()
                .map(|&b| summarize(b, &categories))
                .collect();
            Ok(ConfigBlock {
                index,
                config: *cfg,
                buckets,
                categories,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(BalanceReport {
        schema_version: crate::SCHEMA_VERSION,
        tool_version: crate::TOOL_VERSION,
        source_digest: ds.source_digest(),
        image_count: ds.image_count(),
        instance_count: ds.instance_count(),
        category_count: ds.category_count(),
        blocks,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaRow {
    pub category_id: CategoryId,
    /// `None` when either side is undefined.
    pub repeat_factor_delta: Option<f64>,
    pub exposure_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodDiff {
    pub a: SamplerConfig,
    pub b: SamplerConfig,
    pub rows: Vec<DeltaRow>,
}

/// Per-category `a - b` for repeat factors and expected exposure.
pub fn diff_methods(report: &BalanceReport, a: usize, b: usize) -> Result<MethodDiff> {
    let len = report.blocks.len();
    let block = |index: usize| {
        report
            .blocks
            .get(index)
            .ok_or(Error::IndexOutOfRange { index, len })
    };
    let (left, right) = (block(a)?, block(b)?);
    let rows = left
        .categories
        .iter()
        .zip(&right.categories)
        .map(|(l, r)| DeltaRow {
            category_id: l.category_id,
            repeat_factor_delta: l.repeat_factor.zip(r.repeat_factor).map(|(x, y)| x - y),
            exposure_delta: l.exposure_after - r.exposure_after,
        })
        .collect();
    Ok(MethodDiff {
        a: left.config,
        b: right.config,
        rows,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

impl BalanceReport {
    pub fn write_json(&self, mut writer: impl Write) -> Result<()> {
        serde_json::to_writer_pretty(&mut writer, self).map_err(Error::from_json)?;
        writer.write_all(b"\n")?;
        Ok(())
    }

    /// One row per (config, category), ready for plotting.
    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        w.write_record([
            "config_index",
            "method",
            "threshold",
            "category_id",
            "name",
            "bucket",
            "image_count",
            "instance_count",
            "f_image",
            "f_instance",
            "repeat_factor",
            "exposure_before",
            "exposure_after",
        ])?;
        for block in &self.blocks {
            for row in &block.categories {
                w.write_record([
                    block.index.to_string(),
                    block.config.method.name().to_string(),
                    block.config.threshold().to_string(),
                    row.category_id.to_string(),
                    row.name.clone(),
                    row.bucket.to_string(),
                    row.image_count.to_string(),
                    row.instance_count.to_string(),
                    row.f_image.to_string(),
                    row.f_instance.to_string(),
                    row.repeat_factor.map(|r| r.to_string()).unwrap_or_default(),
                    row.exposure_before.to_string(),
                    row.exposure_after.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "dataset {}: {} images, {} instances, {} categories",
            self.source_digest, self.image_count, self.instance_count, self.category_count
        );
        for block in &self.blocks {
            let _ = writeln!(
                out,
                "\n[{}] method={} t={}",
                block.index,
                block.config.method,
                block.config.threshold()
            );
            let _ = writeln!(
                out,
                "{:<9} {:>6} {:>10} {:>12} {:>9} {:>9} {:>12} {:>12}",
                "bucket", "cats", "images", "instances", "mean r_c", "max r_c", "exp before", "exp after"
            );
            for b in &block.buckets {
                let _ = writeln!(
                    out,
                    "{:<9} {:>6} {:>10} {:>12} {:>9} {:>9} {:>12} {:>12}",
                    b.bucket.as_str(),
                    b.category_count,
                    b.total_image_count,
                    b.total_instance_count,
                    opt(b.mean_repeat_factor),
                    opt(b.max_repeat_factor),
                    opt(b.mean_exposure_before),
                    opt(b.mean_exposure_after),
                );
            }
        }
        out
    }
}

impl MethodDiff {
    pub fn write_json(&self, mut writer: impl Write) -> Result<()> {
        serde_json::to_writer_pretty(&mut writer, self).map_err(Error::from_json)?;
        writer.write_all(b"\n")?;
        Ok(())
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn render_text(&self) -> String {
        let mut out = format!("delta = [{}] - [{}]\n", self.a, self.b);
        let _ = writeln!(out, "{:>12} {:>12} {:>14}", "category", "delta r_c", "delta exposure");
        for row in &self.rows {
            let _ = writeln!(
                out,
                "{:>12} {:>12} {:>14.4}",
                row.category_id,
                opt(row.repeat_factor_delta),
                row.exposure_delta
            );
        }
        out
    }
}
