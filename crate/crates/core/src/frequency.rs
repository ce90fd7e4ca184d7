//! Per-category image and instance frequencies, and LVIS frequency buckets.

use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::annotations::{CategoryId, Dataset, SourceDigest};
use crate::error::{Error, Result};

/// Image count at or below which a category is rare.
pub const RARE_MAX_IMAGES: usize = 10;
/// Image count at or below which a non-rare category is common.
pub const COMMON_MAX_IMAGES: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryFrequency {
    pub category_id: CategoryId,
    pub name: String,
    /// Images holding at least one instance of the category.
    pub image_count: usize,
    pub instance_count: usize,
    /// `image_count / total_images`.
    pub f_image: f64,
    /// `instance_count / total_instances`.
    pub f_instance: f64,
}

impl CategoryFrequency {
    pub fn bucket(&self) -> FrequencyBucket {
        bucket_of(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyTable {
    /// One entry per category, in the dataset's category order.
    pub entries: Vec<CategoryFrequency>,
    pub total_images: usize,
    pub total_instances: usize,
    pub source_digest: SourceDigest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FrequencyBucket {
    Rare,
    Common,
    Frequent,
    Empty,
}

impl FrequencyBucket {
    pub const ALL: [FrequencyBucket; 4] = [
        FrequencyBucket::Rare,
        FrequencyBucket::Common,
        FrequencyBucket::Frequent,
        FrequencyBucket::Empty,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            FrequencyBucket::Rare => "rare",
            FrequencyBucket::Common => "common",
            FrequencyBucket::Frequent => "frequent",
            FrequencyBucket::Empty => "empty",
        }
    }

    pub fn from_image_count(image_count: usize) -> Self {
        match image_count {
            0 => FrequencyBucket::Empty,
            1..=RARE_MAX_IMAGES => FrequencyBucket::Rare,
            n if n <= COMMON_MAX_IMAGES => FrequencyBucket::Common,
            _ => FrequencyBucket::Frequent,
        }
    }
}

impl fmt::Display for FrequencyBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Rare is 1..=10 images, common 11..=100, frequent above 100; categories
/// without images are `Empty`.
pub fn bucket_of(freq: &CategoryFrequency) -> FrequencyBucket {
    FrequencyBucket::from_image_count(freq.image_count)
}

fn tally<T: Sync>(
    items: &[T],
    slots: usize,
    positions: impl Fn(&T, &mut dyn FnMut(usize)) + Sync,
) -> Vec<usize> {
    items
        .par_iter()
        .fold(
            || vec![0usize; slots],
            |mut acc, item| {
                positions(item, &mut |pos| acc[pos] += 1);
                acc
            },
        )
        .reduce(
            || vec![0usize; slots],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        )
}

pub fn compute_frequencies(ds: &Dataset) -> Result<FrequencyTable> {
    let total_images = ds.image_count();
    let total_instances = ds.instance_count();
    if total_images == 0 || total_instances == 0 {
        return Err(Error::EmptyDataset);
    }
    let n = ds.category_count();
    let position = |id: CategoryId| ds.category_position(id).expect("closed reference");

    let image_counts = tally(ds.images(), n, |img, hit| {
        img.category_ids.iter().for_each(|&c| hit(position(c)))
    });
    let instance_counts = tally(ds.instances(), n, |inst, hit| hit(position(inst.category_id)));

    let entries = ds
        .categories()
        .iter()
        .enumerate()
        .map(|(pos, cat)| CategoryFrequency {
            category_id: cat.id,
            name: cat.name.clone(),
            image_count: image_counts[pos],
            instance_count: instance_counts[pos],
            f_image: image_counts[pos] as f64 / total_images as f64,
            f_instance: instance_counts[pos] as f64 / total_instances as f64,
        })
        .collect();

    Ok(FrequencyTable {
        entries,
        total_images,
        total_instances,
        source_digest: ds.source_digest(),
    })
}

#[derive(Serialize)]
struct FrequencyRow<'a> {
    category_id: CategoryId,
    name: &'a str,
    image_count: usize,
    instance_count: usize,
    f_image: f64,
    f_instance: f64,
    bucket: FrequencyBucket,
}

impl FrequencyTable {
    pub fn get(&self, id: CategoryId) -> Option<&CategoryFrequency> {
        self.entries.iter().find(|e| e.category_id == id)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn rows(&self) -> impl Iterator<Item = FrequencyRow<'_>> {
        self.entries.iter().map(|e| FrequencyRow {
            category_id: e.category_id,
            name: &e.name,
            image_count: e.image_count,
            instance_count: e.instance_count,
            f_image: e.f_image,
            f_instance: e.f_instance,
            bucket: e.bucket(),
        })
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in self.rows() {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json(&self, mut writer: impl Write) -> Result<()> {
        #[derive(Serialize)]
        struct Doc<'a> {
            schema_version: u32,
            tool_version: &'static str,
            source_digest: SourceDigest,
            total_images: usize,
            total_instances: usize,
            categories: Vec<FrequencyRow<'a>>,
        }
        let doc = Doc {
            schema_version: crate::SCHEMA_VERSION,
            tool_version: crate::TOOL_VERSION,
            source_digest: self.source_digest,
            total_images: self.total_images,
            total_instances: self.total_instances,
            categories: self.rows().collect(),
        };
        serde_json::to_writer_pretty(&mut writer, &doc).map_err(Error::from_json)?;
        writer.write_all(b"\n")?;
        Ok(())
    }
}
