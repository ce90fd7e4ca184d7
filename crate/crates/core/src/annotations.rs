//! COCO/LVIS annotation ingestion.
//!
//! Only the keys the sampler needs are read: `images[].id`,
//! `annotations[].{id,image_id,category_id}` and `categories[].{id,name}`.
//! Everything else (geometry, segmentation, licenses, LVIS extras) is skipped
//! by the deserializer without being materialized, so memory grows with the
//! number of records rather than the size of the file.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, RecordKind, Result};

macro_rules! record_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub u64);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                self.0.fmt(f)
            }
        }

        impl From<u64> for $name {
            fn from(id: u64) -> Self {
                Self(id)
            }
        }
    };
}

record_id!(
    /// Identifier of an image record.
    ImageId
);
record_id!(
    /// Identifier of a category.
    CategoryId
);
record_id!(
    /// Identifier of an annotation (one bounding-box instance).
    AnnotationId
);

/// SHA-256 of the bytes a dataset was read from (or would be written as).
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct SourceDigest(pub [u8; 32]);

impl SourceDigest {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    fn from_hasher(hasher: Sha256) -> Self {
        let mut out = [0u8; 32];
        out.copy_from_slice(&hasher.finalize());
        SourceDigest(out)
    }
}

impl fmt::Display for SourceDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for SourceDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SourceDigest({})", self.to_hex())
    }
}

impl Serialize for SourceDigest {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Category {
    pub id: CategoryId,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRecord {
    pub id: ImageId,
    /// Sorted, deduplicated ids of the categories labeled in this image.
    pub category_ids: Vec<CategoryId>,
    pub instance_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct InstanceRecord {
    pub id: AnnotationId,
    pub image_id: ImageId,
    pub category_id: CategoryId,
}

/// Immutable, validated view of an annotation file.
#[derive(Debug, Clone)]
pub struct Dataset {
    images: Vec<ImageRecord>,
    instances: Vec<InstanceRecord>,
    categories: Vec<Category>,
    image_index: HashMap<ImageId, usize>,
    category_index: HashMap<CategoryId, usize>,
    source_digest: SourceDigest,
    dropped_annotations: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DatasetSummary {
    pub image_count: usize,
    pub instance_count: usize,
    pub category_count: usize,
    /// Number of images keyed by how many instances they hold.
    pub instances_per_image: BTreeMap<usize, usize>,
}

#[derive(Deserialize)]
struct RawFile {
    images: Vec<RawImage>,
    annotations: Vec<RawAnnotation>,
    categories: Vec<RawCategory>,
}

#[derive(Deserialize)]
struct RawImage {
    id: u64,
}

#[derive(Deserialize)]
struct RawAnnotation {
    id: u64,
    image_id: u64,
    category_id: u64,
}

#[derive(Deserialize)]
struct RawCategory {
    id: u64,
    name: String,
}

struct HashingReader<R> {
    inner: R,
    hasher: Sha256,
}

impl<R: Read> Read for HashingReader<R> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.hasher.update(&buf[..n]);
        Ok(n)
    }
}

struct HashingWriter<W> {
    inner: W,
    hasher: Sha256,
}

impl<W: Write> Write for HashingWriter<W> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.hasher.update(&buf[..n]);
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

fn positive(kind: RecordKind, field: &str, id: u64) -> Result<u64> {
    if id == 0 {
        return Err(Error::SchemaViolation(format!(
            "{kind} {field} must be a positive integer, got 0"
        )));
    }
    Ok(id)
}

/// Reads and validates an annotation file.
///
/// With `strict` unset, annotations whose `image_id` or `category_id` does not
/// resolve are dropped and counted (see [`Dataset::dropped_annotations`]);
/// with `strict` set the first one is reported as [`Error::DanglingReference`].
pub fn load_dataset(path: impl AsRef<Path>, strict: bool) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|err| match err.kind() {
        io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
        _ => Error::Io(err),
    })?;
    read_dataset(file, strict)
}

/// Like [`load_dataset`] but from any reader.
pub fn read_dataset(reader: impl Read, strict: bool) -> Result<Dataset> {
    let mut reader = BufReader::with_capacity(
        1 << 16,
        HashingReader {
            inner: reader,
            hasher: Sha256::new(),
        },
    );
    let raw = {
        let mut de = serde_json::Deserializer::from_reader(&mut reader);
        let raw = RawFile::deserialize(&mut de).map_err(Error::from_json)?;
        de.end().map_err(Error::from_json)?;
        raw
    };
    // `end` has consumed everything up to EOF, so the hasher has seen every byte.
    let digest = SourceDigest::from_hasher(reader.into_inner().hasher);

    let images = raw
        .images
        .into_iter()
        .map(|img| positive(RecordKind::Image, "id", img.id).map(ImageId))
        .collect::<Result<Vec<_>>>()?;
    let categories = raw
        .categories
        .into_iter()
        .map(|cat| {
            let id = positive(RecordKind::Category, "id", cat.id)?;
            Ok(Category {
                id: CategoryId(id),
                name: cat.name,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let instances = raw
        .annotations
        .into_iter()
        .map(|ann| {
            Ok(InstanceRecord {
                id: AnnotationId(positive(RecordKind::Annotation, "id", ann.id)?),
                image_id: ImageId(positive(RecordKind::Annotation, "image_id", ann.image_id)?),
                category_id: CategoryId(positive(
                    RecordKind::Annotation,
                    "category_id",
                    ann.category_id,
                )?),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Dataset::assemble(images, instances, categories, strict, Some(digest))
}

impl Dataset {
    /// Builds a dataset from in-memory records, validating strictly.
    ///
    /// The digest is that of the canonical JSON produced by [`Dataset::write_json`],
    /// so writing the dataset out and loading it back yields the same digest.
    pub fn from_records(
        images: Vec<ImageId>,
        instances: Vec<InstanceRecord>,
        categories: Vec<Category>,
    ) -> Result<Self> {
        Self::assemble(images, instances, categories, true, None)
    }

    fn assemble(
        image_ids: Vec<ImageId>,
        instances: Vec<InstanceRecord>,
        categories: Vec<Category>,
        strict: bool,
        digest: Option<SourceDigest>,
    ) -> Result<Self> {
        let mut image_index = HashMap::with_capacity(image_ids.len());
        for (pos, &id) in image_ids.iter().enumerate() {
            if id.0 == 0 {
                return Err(Error::SchemaViolation("image id must be positive".into()));
            }
            if image_index.insert(id, pos).is_some() {
                return Err(Error::DuplicateId {
                    kind: RecordKind::Image,
                    id: id.0,
                });
            }
        }

        let mut category_index = HashMap::with_capacity(categories.len());
        for (pos, cat) in categories.iter().enumerate() {
            if cat.id.0 == 0 {
                return Err(Error::SchemaViolation("category id must be positive".into()));
            }
            if cat.name.is_empty() {
                return Err(Error::SchemaViolation(format!(
                    "category {} has an empty name",
                    cat.id
                )));
            }
            if category_index.insert(cat.id, pos).is_some() {
                return Err(Error::DuplicateId {
                    kind: RecordKind::Category,
                    id: cat.id.0,
                });
            }
        }

        let mut seen = HashSet::with_capacity(instances.len());
        let mut kept = Vec::with_capacity(instances.len());
        let mut dropped = 0;
        let mut per_image: Vec<Vec<CategoryId>> = vec![Vec::new(); image_ids.len()];
        for inst in instances {
            if inst.id.0 == 0 {
                return Err(Error::SchemaViolation("annotation id must be positive".into()));
            }
            if !seen.insert(inst.id) {
                return Err(Error::DuplicateId {
                    kind: RecordKind::Annotation,
                    id: inst.id.0,
                });
            }
            let dangling = match (
                image_index.get(&inst.image_id),
                category_index.contains_key(&inst.category_id),
            ) {
                (None, _) => Some(("image_id", inst.image_id.0)),
                (Some(_), false) => Some(("category_id", inst.category_id.0)),
                (Some(&pos), true) => {
                    per_image[pos].push(inst.category_id);
                    None
                }
            };
            match dangling {
                None => kept.push(inst),
                Some((field, target)) if strict => {
                    return Err(Error::DanglingReference {
                        annotation: inst.id,
                        field,
                        target,
                    })
                }
                Some(_) => dropped += 1,
            }
        }

        let images = image_ids
            .into_iter()
            .zip(per_image)
            .map(|(id, mut cats)| {
                let instance_count = cats.len();
                cats.sort_unstable();
                cats.dedup();
                cats.shrink_to_fit();
                ImageRecord {
                    id,
                    category_ids: cats,
                    instance_count,
                }
            })
            .collect();

        let mut ds = Dataset {
            images,
            instances: kept,
            categories,
            image_index,
            category_index,
            source_digest: SourceDigest([0; 32]),
            dropped_annotations: dropped,
        };
        ds.source_digest = match digest {
            Some(d) => d,
            None => {
                let mut w = HashingWriter {
                    inner: io::sink(),
                    hasher: Sha256::new(),
                };
                ds.write_json(&mut w)?;
                SourceDigest::from_hasher(w.hasher)
            }
        };
        Ok(ds)
    }

    pub fn images(&self) -> &[ImageRecord] {
        &self.images
    }

    pub fn instances(&self) -> &[InstanceRecord] {
        &self.instances
    }

    pub fn categories(&self) -> &[Category] {
        &self.categories
    }

    pub fn image(&self, id: ImageId) -> Option<&ImageRecord> {
        self.image_index.get(&id).map(|&pos| &self.images[pos])
    }

    pub fn category(&self, id: CategoryId) -> Option<&Category> {
        self.category_index.get(&id).map(|&pos| &self.categories[pos])
    }

    /// Position of a category in [`Dataset::categories`].
    pub fn category_position(&self, id: CategoryId) -> Option<usize> {
        self.category_index.get(&id).copied()
    }

    pub fn image_count(&self) -> usize {
        self.images.len()
    }

    pub fn instance_count(&self) -> usize {
        self.instances.len()
    }

    pub fn category_count(&self) -> usize {
        self.categories.len()
    }

    pub fn source_digest(&self) -> SourceDigest {
        self.source_digest
    }

    /// Annotations discarded for dangling references (non-strict loads only).
    pub fn dropped_annotations(&self) -> usize {
        self.dropped_annotations
    }

    pub fn summary(&self) -> DatasetSummary {
        dataset_summary(self)
    }

    /// Writes the dataset as compact COCO-style JSON (only the keys this crate reads).
    pub fn write_json(&self, writer: impl Write) -> Result<()> {
        #[derive(Serialize)]
        struct ImageOut {
            id: ImageId,
        }
        #[derive(Serialize)]
        struct FileOut<'a> {
            images: Vec<ImageOut>,
            annotations: &'a [InstanceRecord],
            categories: &'a [Category],
        }
        let mut writer = BufWriter::new(writer);
        let out = FileOut {
            images: self.images.iter().map(|img| ImageOut { id: img.id }).collect(),
            annotations: &self.instances,
            categories: &self.categories,
        };
        serde_json::to_writer(&mut writer, &out).map_err(Error::from_json)?;
        writer.write_all(b"\n")?;
        writer.flush()?;
        Ok(())
    }
}

pub fn dataset_summary(ds: &Dataset) -> DatasetSummary {
    let mut instances_per_image = BTreeMap::new();
    for img in &ds.images {
        *instances_per_image.entry(img.instance_count).or_insert(0) += 1;
    }
    DatasetSummary {
        image_count: ds.image_count(),
        instance_count: ds.instance_count(),
        category_count: ds.category_count(),
        instances_per_image,
    }
}
