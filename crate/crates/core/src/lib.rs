//! Repeat factor sampling for long-tailed detection datasets.
//!
//! The pipeline is: [`load_dataset`] an annotation file, [`compute_frequencies`]
//! per category, turn them into category repeat factors with
//! [`compute_repeat_factors`] (RFS, instance-aware RFS with one of four means,
//! or instance-only), lift those to images with [`image_repeat_factors`], and
//! materialize reproducible epochs with [`sample_epoch`].
//!
//! ```
//! use rfsample::*;
//!
//! let json = r#"{"images": [{"id": 1}, {"id": 2}],
//!   "annotations": [{"id": 1, "image_id": 1, "category_id": 1},
//!                   {"id": 2, "image_id": 2, "category_id": 2},
//!                   {"id": 3, "image_id": 2, "category_id": 2}],
//!   "categories": [{"id": 1, "name": "a"}, {"id": 2, "name": "b"}]}"#;
//! let ds = read_dataset(json.as_bytes(), true).unwrap();
//! let ft = compute_frequencies(&ds).unwrap();
//! let cfg = SamplerConfig::new(Method::Irfs(MeanKind::Geometric), 0.9).unwrap();
//! let rft = compute_repeat_factors(&ft, &cfg).unwrap();
//! let irt = image_repeat_factors(&ds, &rft).unwrap();
//! let epoch = sample_epoch(&irt, 0, 0).unwrap();
//! assert!(epoch.count_of(ImageId(1)) >= 1);
//! ```

pub mod annotations;
pub mod cli;
pub mod error;
pub mod frequency;
pub mod repeat_factor;
pub mod report;
pub mod sampler;
pub mod synth;

pub use annotations::{
    dataset_summary, load_dataset, read_dataset, AnnotationId, Category, CategoryId, Dataset,
    DatasetSummary, ImageId, ImageRecord, InstanceRecord, SourceDigest,
};
pub use error::{Error, Result};
pub use frequency::{bucket_of, compute_frequencies, CategoryFrequency, FrequencyBucket, FrequencyTable};
pub use repeat_factor::{
    category_repeat_factor, compute_repeat_factors, effective_frequency, image_repeat_factors,
    ImageRepeatTable, MeanKind, Method, RepeatFactorTable, SamplerConfig, DEFAULT_THRESHOLD,
};
pub use report::{build_report, diff_methods, BalanceReport, MethodDiff};
pub use sampler::{expected_exposure, sample_epoch, CategoryExposure, EpochSample};
pub use synth::{generate, ImageCountLaw, InstancesLaw, SynthSpec};

/// Version of every JSON document this crate writes.
pub const SCHEMA_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = concat!("rfsample ", env!("CARGO_PKG_VERSION"));
