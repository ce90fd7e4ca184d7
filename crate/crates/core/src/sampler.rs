//! Per-epoch sample lists.
//!
//! An image with repeat factor `r` appears `floor(r)` times, plus once more
//! with probability `r - floor(r)`. The extra-copy draw for an image comes from
//! a ChaCha8 keystream addressed by `(seed, epoch, image_id)`: the seed keys
//! the cipher, the epoch selects the stream and the image id selects the word
//! offset. Draws are therefore independent of iteration order and can run in
//! parallel. The repeated list is then sorted by image id and shuffled with a
//! region of the same stream that no image id can reach.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::annotations::{CategoryId, Dataset, ImageId, SourceDigest};
use crate::error::{Error, Result};
use crate::frequency::FrequencyTable;
use crate::repeat_factor::{ImageRepeatTable, SamplerConfig};

/// Word offset of the shuffle keystream. Image draws use words `2 * id` and
/// `2 * id + 1`, which stay below 2^65.
const SHUFFLE_WORD_POS: u128 = 1 << 67;

const MAX_EPOCH_LEN: u64 = u32::MAX as u64;

#[derive(Debug, Clone, PartialEq)]
pub struct EpochSample {
    pub epoch_index: u64,
    pub seed: u64,
    pub config: SamplerConfig,
    pub source_digest: SourceDigest,
    /// Shuffled multiset of image ids.
    pub image_ids: Vec<ImageId>,
    pub per_image_counts: BTreeMap<ImageId, u32>,
}

impl EpochSample {
    pub fn len(&self) -> usize {
        self.image_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.image_ids.is_empty()
    }

    pub fn count_of(&self, id: ImageId) -> u32 {
        self.per_image_counts.get(&id).copied().unwrap_or(0)
    }

    /// One image id per line.
    pub fn write_text(&self, writer: impl Write) -> Result<()> {
        let mut w = std::io::BufWriter::new(writer);
        for id in &self.image_ids {
            writeln!(w, "{id}")?;
        }
        w.flush()?;
        Ok(())
    }

    fn document(&self) -> EpochDoc<'_> {
        EpochDoc {
            schema_version: crate::SCHEMA_VERSION,
            tool_version: crate::TOOL_VERSION,
            source_digest: self.source_digest,
            method: self.config.method.name(),
            threshold: self.config.threshold(),
            seed: self.seed,
            epoch: self.epoch_index,
            length: self.image_ids.len(),
            image_ids: &self.image_ids,
        }
    }

    pub fn write_json(&self, mut writer: impl Write) -> Result<()> {
        serde_json::to_writer_pretty(&mut writer, &self.document()).map_err(Error::from_json)?;
        writer.write_all(b"\n")?;
        Ok(())
    }

    /// Compact single-line JSON, for JSON Lines streams.
    pub fn write_json_line(&self, mut writer: impl Write) -> Result<()> {
        serde_json::to_writer(&mut writer, &self.document()).map_err(Error::from_json)?;
        writer.write_all(b"\n")?;
        Ok(())
    }
}

#[derive(Serialize)]
struct EpochDoc<'a> {
    schema_version: u32,
    tool_version: &'static str,
    source_digest: SourceDigest,
    method: &'static str,
    threshold: f64,
    seed: u64,
    epoch: u64,
    length: usize,
    image_ids: &'a [ImageId],
}

fn epoch_stream(seed: u64, epoch_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch_index);
    rng
}

/// Uniform draw in `[0, 1)` for one image in one epoch.
pub fn image_draw(seed: u64, epoch_index: u64, image_id: ImageId) -> f64 {
    draw_from(&epoch_stream(seed, epoch_index), image_id)
}

fn draw_from(stream: &ChaCha8Rng, image_id: ImageId) -> f64 {
    let mut rng = stream.clone();
    rng.set_word_pos(u128::from(image_id.0) * 2);
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Stochastic rounding of a repeat factor given a uniform draw.
pub fn rounded_count(repeat_factor: f64, draw: f64) -> u32 {
    let whole = repeat_factor.floor();
    let extra = draw < repeat_factor - whole;
    whole as u32 + u32::from(extra)
}

pub fn sample_epoch(irt: &ImageRepeatTable, seed: u64, epoch_index: u64) -> Result<EpochSample> {
    if irt.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let upper: f64 = irt.entries.iter().map(|e| e.repeat_factor.ceil()).sum();
    if upper > MAX_EPOCH_LEN as f64 {
        return Err(Error::InvalidConfig(format!(
            "epoch would hold up to {upper} samples; lower the threshold"
        )));
    }

    let stream = epoch_stream(seed, epoch_index);
    let mut counts: Vec<(ImageId, u32)> = irt
        .entries
        .par_iter()
        .map(|e| {
            let draw = draw_from(&stream, e.image_id);
            (e.image_id, rounded_count(e.repeat_factor, draw))
        })
        .collect();
    counts.sort_unstable_by_key(|&(id, _)| id);

    let total: usize = counts.iter().map(|&(_, n)| n as usize).sum();
    let mut image_ids = Vec::with_capacity(total);
    for &(id, n) in &counts {
        image_ids.extend(std::iter::repeat_n(id, n as usize));
    }
    let mut shuffler = stream;
    shuffler.set_word_pos(SHUFFLE_WORD_POS);
    image_ids.shuffle(&mut shuffler);

    Ok(EpochSample {
        epoch_index,
        seed,
        config: irt.config,
        source_digest: irt.source_digest,
        image_ids,
        per_image_counts: counts.into_iter().collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CategoryExposure {
    pub category_id: CategoryId,
    /// Images containing the category, i.e. exposure without re-sampling.
    pub image_count: usize,
    /// Expected number of times per epoch an image containing the category is seen.
    pub expected: f64,
}

/// Sum of image repeat factors over the images containing each category.
///
/// Needs the dataset for the image-to-category relation; all three inputs must
/// share a source digest.
pub fn expected_exposure(
    ds: &Dataset,
    irt: &ImageRepeatTable,
    ft: &FrequencyTable,
) -> Result<Vec<CategoryExposure>> {
    for found in [irt.source_digest, ft.source_digest] {
        if found != ds.source_digest() {
            return Err(Error::ProvenanceMismatch {
                expected: ds.source_digest(),
                found,
            });
        }
    }
    let mut sums = vec![0.0f64; ds.category_count()];
    let mut seen = HashSet::with_capacity(irt.len());
    for e in &irt.entries {
        seen.insert(e.image_id);
        let img = ds
            .image(e.image_id)
            .ok_or_else(|| Error::InvalidConfig(format!("image {} not in dataset", e.image_id)))?;
        for &c in &img.category_ids {
            sums[ds.category_position(c).expect("closed reference")] += e.repeat_factor;
        }
    }
    if seen.len() != ds.image_count() {
        return Err(Error::InvalidConfig(
            "image repeat table does not cover every image".into(),
        ));
    }
    Ok(ft
        .entries
        .iter()
        .map(|f| CategoryExposure {
            category_id: f.category_id,
            image_count: f.image_count,
            expected: ds
                .category_position(f.category_id)
                .map(|pos| sums[pos])
                .unwrap_or(0.0),
        })
        .collect())
}
