//! Synthetic long-tailed datasets with separately controlled image-count and
//! instance-count laws.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, Zipf};

use crate::annotations::{AnnotationId, Category, CategoryId, Dataset, ImageId, InstanceRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum ImageCountLaw {
    /// Each category's image count is drawn from a Zipf law over `1..=num_images`.
    Zipf { exponent: f64 },
    /// Exact image count per category.
    Explicit(Vec<usize>),
}

/// Number of instances a category contributes to each image it appears in.
#[derive(Debug, Clone, PartialEq)]
pub enum InstancesLaw {
    Constant(u32),
    /// `1 + Geometric(p)` failures, mean `1/p`.
    Geometric(f64),
    /// Fixed count per category.
    Explicit(Vec<u32>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub num_categories: usize,
    pub num_images: usize,
    pub image_count_law: ImageCountLaw,
    pub instances_law: InstancesLaw,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let infeasible = |msg: String| Err(Error::InfeasibleSpec(msg));
        if self.num_categories == 0 {
            return infeasible("num_categories must be at least 1".into());
        }
        if self.num_images == 0 {
            return infeasible("num_images must be at least 1".into());
        }
        match &self.image_count_law {
            ImageCountLaw::Zipf { exponent } if !(exponent.is_finite() && *exponent > 0.0) => {
                return infeasible(format!("Zipf exponent must be positive, got {exponent}"));
            }
            ImageCountLaw::Explicit(counts) => {
                if counts.len() != self.num_categories {
                    return infeasible(format!(
                        "{} explicit image counts for {} categories",
                        counts.len(),
                        self.num_categories
                    ));
                }
                if let Some(&c) = counts.iter().find(|&&c| c > self.num_images) {
                    return infeasible(format!(
                        "image count {c} exceeds num_images {}",
                        self.num_images
                    ));
                }
            }
            ImageCountLaw::Zipf { .. } => {}
        }
        match &self.instances_law {
            InstancesLaw::Constant(0) => {
                return infeasible("constant instance count must be at least 1".into())
            }
            InstancesLaw::Geometric(p) if !(*p > 0.0 && *p <= 1.0) => {
                return infeasible(format!("geometric p must be in (0, 1], got {p}"));
            }
            InstancesLaw::Explicit(counts) => {
                if counts.len() != self.num_categories {
                    return infeasible(format!(
                        "{} explicit instance counts for {} categories",
                        counts.len(),
                        self.num_categories
                    ));
                }
                if counts.contains(&0) {
                    return infeasible("explicit instance counts must be at least 1".into());
                }
            }
            _ => {}
        }
        Ok(())
    }
}

pub fn category_name(id: CategoryId) -> String {
    format!("synthetic_{:04}", id.0)
}

/// Builds a dataset following `spec`. Image ids run `1..=num_images`, category
/// ids `1..=num_categories`; annotations are ordered by image then category.
pub fn generate(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let image_counts: Vec<usize> = match &spec.image_count_law {
        ImageCountLaw::Explicit(counts) => counts.clone(),
        ImageCountLaw::Zipf { exponent } => {
            let zipf = Zipf::new(spec.num_images as f64, *exponent)
                .map_err(|e| Error::InfeasibleSpec(e.to_string()))?;
            (0..spec.num_categories)
                .map(|_| (zipf.sample(&mut rng) as usize).clamp(1, spec.num_images))
                .collect()
        }
    };
    let geometric = match spec.instances_law {
        InstancesLaw::Geometric(p) => {
            Some(Geometric::new(p).map_err(|e| Error::InfeasibleSpec(e.to_string()))?)
        }
        _ => None,
    };

    // (image position, category position, instances)
    let mut occurrences: Vec<(usize, usize, u32)> = Vec::new();
    for (cat, &count) in image_counts.iter().enumerate() {
        let mut picked = index::sample(&mut rng, spec.num_images, count).into_vec();
        picked.sort_unstable();
        for img in picked {
            let n = match (&spec.instances_law, &geometric) {
                (InstancesLaw::Constant(k), _) => *k,
                (InstancesLaw::Explicit(per_cat), _) => per_cat[cat],
                (InstancesLaw::Geometric(_), Some(g)) => {
                    1 + u32::try_from(g.sample(&mut rng)).unwrap_or(u32::MAX - 1)
                }
                (InstancesLaw::Geometric(_), None) => unreachable!(),
            };
            occurrences.push((img, cat, n));
        }
    }
    occurrences.sort_unstable_by_key(|&(img, cat, _)| (img, cat));

    let mut next_id = 0u64;
    let mut instances = Vec::with_capacity(occurrences.iter().map(|o| o.2 as usize).sum());
    for (img, cat, n) in occurrences {
        for _ in 0..n {
            next_id += 1;
            instances.push(InstanceRecord {
                id: AnnotationId(next_id),
                image_id: ImageId(img as u64 + 1),
                category_id: CategoryId(cat as u64 + 1),
            });
        }
    }

    let images = (1..=spec.num_images as u64).map(ImageId).collect();
    let categories = (1..=spec.num_categories as u64)
        .map(|id| Category {
            id: CategoryId(id),
            name: category_name(CategoryId(id)),
        })
        .collect();
    Dataset::from_records(images, instances, categories)
}
