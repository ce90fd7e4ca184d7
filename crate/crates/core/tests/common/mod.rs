//! Independent oracles shared by the integration tests.
//!
//! Nothing here calls into the factor or frequency code: roots are taken with
//! exact big-integer arithmetic and counts come from a naive rescan of the
//! raw JSON.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rfsample::{Dataset, ImageCountLaw, InstancesLaw, SynthSpec};

/// Fractional bits carried through the root extraction.
const BITS: u32 = 160;

pub fn exact(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite")
}

fn pow2(bits: u32) -> BigInt {
    BigInt::one() << bits
}

/// `floor(x^(1/2^k) * 2^BITS)` as a rational, for `x >= 0`.
fn root_pow2(x: &BigRational, k: u32) -> BigRational {
    let scaled = x * BigRational::from_integer(pow2(BITS << k));
    let mut n = scaled.floor().to_integer();
    for _ in 0..k {
        n = n.sqrt();
    }
    BigRational::new(n, pow2(BITS))
}

pub fn to_f64(x: &BigRational) -> f64 {
    x.to_f64().expect("representable")
}

pub fn sqrt(x: &BigRational) -> BigRational {
    root_pow2(x, 1)
}

pub fn fourth_root(x: &BigRational) -> BigRational {
    root_pow2(x, 2)
}

fn clamp_one(x: BigRational) -> f64 {
    if x < BigRational::one() {
        1.0
    } else {
        to_f64(&x)
    }
}

/// `max(1, sqrt(t / f))`.
pub fn oracle_rfs(f: f64, t: f64) -> f64 {
    clamp_one(sqrt(&(exact(t) / exact(f))))
}

/// `max(1, sqrt(t / sqrt(fi * fb)))`, as `(t^2 / (fi * fb))^(1/4)`.
pub fn oracle_irfs_geometric(fi: f64, fb: f64, t: f64) -> f64 {
    let t = exact(t);
    clamp_one(fourth_root(&(&t * &t / (exact(fi) * exact(fb)))))
}

pub fn oracle_arithmetic(x: f64, y: f64) -> f64 {
    to_f64(&((exact(x) + exact(y)) / BigRational::from_integer(2.into())))
}

pub fn oracle_harmonic(x: f64, y: f64) -> f64 {
    let (x, y) = (exact(x), exact(y));
    to_f64(&(BigRational::from_integer(2.into()) * &x * &y / (x + y)))
}

pub fn oracle_geometric(x: f64, y: f64) -> f64 {
    to_f64(&sqrt(&(exact(x) * exact(y))))
}

pub fn oracle_quadratic(x: f64, y: f64) -> f64 {
    let (x, y) = (exact(x), exact(y));
    to_f64(&sqrt(&((&x * &x + &y * &y) / BigRational::from_integer(2.into()))))
}

/// `max(1, sqrt(t / m))` for an exact mean `m`.
pub fn oracle_factor_of_mean(mean: &BigRational, t: f64) -> f64 {
    if mean.is_zero() {
        panic!("undefined");
    }
    clamp_one(sqrt(&(exact(t) / mean)))
}

pub fn rel_close(actual: f64, expected: f64, tol: f64) -> bool {
    (actual - expected).abs() <= tol * expected.abs()
}

/// Raw records read straight from JSON with serde_json::Value.
pub struct RawRecords {
    pub images: Vec<u64>,
    pub annotations: Vec<(u64, u64, u64)>,
    pub categories: Vec<(u64, String)>,
}

pub fn raw_records(json: &[u8]) -> RawRecords {
    let v: serde_json::Value = serde_json::from_slice(json).unwrap();
    RawRecords {
        images: v["images"]
            .as_array()
            .unwrap()
            .iter()
            .map(|i| i["id"].as_u64().unwrap())
            .collect(),
        annotations: v["annotations"]
            .as_array()
            .unwrap()
            .iter()
            .map(|a| {
                (
                    a["id"].as_u64().unwrap(),
                    a["image_id"].as_u64().unwrap(),
                    a["category_id"].as_u64().unwrap(),
                )
            })
            .collect(),
        categories: v["categories"]
            .as_array()
            .unwrap()
            .iter()
            .map(|c| (c["id"].as_u64().unwrap(), c["name"].as_str().unwrap().to_string()))
            .collect(),
    }
}

pub fn dataset_json(ds: &Dataset) -> Vec<u8> {
    let mut out = Vec::new();
    ds.write_json(&mut out).unwrap();
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct NaiveCounts {
    pub image_count: usize,
    pub instance_count: usize,
    pub f_image: f64,
    pub f_instance: f64,
}

/// Double-loop recount: for every category, scan every image and every annotation.
pub fn naive_frequencies(raw: &RawRecords) -> BTreeMap<u64, NaiveCounts> {
    let total_images = raw.images.len();
    let total_instances = raw.annotations.len();
    raw.categories
        .iter()
        .map(|&(cat, _)| {
            let mut image_count = 0;
            for &img in &raw.images {
                if raw
                    .annotations
                    .iter()
                    .any(|&(_, i, c)| i == img && c == cat)
                {
                    image_count += 1;
                }
            }
            let instance_count = raw.annotations.iter().filter(|&&(_, _, c)| c == cat).count();
            (
                cat,
                NaiveCounts {
                    image_count,
                    instance_count,
                    f_image: image_count as f64 / total_images as f64,
                    f_instance: instance_count as f64 / total_instances as f64,
                },
            )
        })
        .collect()
}

/// Image-level factor by brute force: max over the factors of the categories
/// appearing in the image's annotations, 1 if none is defined.
pub fn brute_force_image_factors(
    raw: &RawRecords,
    category_factor: impl Fn(u64) -> Option<f64>,
) -> BTreeMap<u64, f64> {
    raw.images
        .iter()
        .map(|&img| {
            let cats: BTreeSet<u64> = raw
                .annotations
                .iter()
                .filter(|&&(_, i, _)| i == img)
                .map(|&(_, _, c)| c)
                .collect();
            let r = cats
                .into_iter()
                .filter_map(&category_factor)
                .fold(1.0f64, f64::max);
            (img, r)
        })
        .collect()
}

/// A random small synthetic spec; explicit image counts may include zeros so
/// empty categories show up.
pub fn random_small_spec(seed: u64, max_images: usize) -> SynthSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let num_images = rng.random_range(1..=max_images);
    let num_categories = rng.random_range(1..=12);
    let mut counts: Vec<usize> = (0..num_categories)
        .map(|_| {
            if rng.random_bool(0.1) {
                0
            } else {
                rng.random_range(1..=num_images)
            }
        })
        .collect();
    if counts.iter().all(|&c| c == 0) {
        counts[0] = 1;
    }
    let instances_law = match rng.random_range(0..3) {
        0 => InstancesLaw::Constant(rng.random_range(1..=3)),
        1 => InstancesLaw::Geometric(rng.random_range(0.2..=1.0)),
        _ => InstancesLaw::Explicit((0..num_categories).map(|_| rng.random_range(1..=6)).collect()),
    };
    SynthSpec {
        num_categories,
        num_images,
        image_count_law: ImageCountLaw::Explicit(counts),
        instances_law,
        seed,
    }
}

/// Category factor for any method, from exact arithmetic. `None` when an input
/// the method needs is zero.
pub fn oracle_factor(method: rfsample::Method, fi: f64, fb: f64, t: f64) -> Option<f64> {
    use rfsample::{MeanKind, Method};
    let two = || BigRational::from_integer(2.into());
    match method {
        Method::Rfs => (fi > 0.0).then(|| oracle_rfs(fi, t)),
        Method::InstanceOnly => (fb > 0.0).then(|| oracle_rfs(fb, t)),
        Method::Irfs(_) if fi <= 0.0 || fb <= 0.0 => None,
        Method::Irfs(MeanKind::Geometric) => Some(oracle_irfs_geometric(fi, fb, t)),
        Method::Irfs(MeanKind::Harmonic) => {
            let (x, y) = (exact(fi), exact(fb));
            Some(oracle_factor_of_mean(&(two() * &x * &y / (x + y)), t))
        }
        Method::Irfs(MeanKind::Arithmetic) => {
            Some(oracle_factor_of_mean(&((exact(fi) + exact(fb)) / two()), t))
        }
        Method::Irfs(MeanKind::Quadratic) => {
            let (x, y, t) = (exact(fi), exact(fb), exact(t));
            Some(clamp_one(fourth_root(&(&t * &t * two() / (&x * &x + &y * &y)))))
        }
    }
}
