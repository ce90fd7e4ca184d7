//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rfsample::*;

use common::*;

const FACTOR_TOL: f64 = 1e-12;
const FRACTION_TOL: f64 = 1e-15;

struct Outcome {
    passed: bool,
    detail: String,
}

fn pass(detail: impl Into<String>) -> Outcome {
    Outcome {
        passed: true,
        detail: detail.into(),
    }
}

fn check(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

/// Samples in (0, 1], spread over several decades so the clamp both binds and
/// does not.
fn unit_interval(rng: &mut ChaCha8Rng) -> f64 {
    let x: f64 = 10f64.powf(-rng.random_range(0.0..6.0));
    x.clamp(f64::MIN_POSITIVE, 1.0)
}

fn freq(fi: f64, fb: f64) -> CategoryFrequency {
    CategoryFrequency {
        category_id: CategoryId(1),
        name: "c".into(),
        image_count: 1,
        instance_count: 1,
        f_image: fi,
        f_instance: fb,
    }
}

fn rfs_exactness() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let (f, t) = (unit_interval(&mut rng), unit_interval(&mut rng));
        let cfg = SamplerConfig::new(Method::Rfs, t).unwrap();
        let got = category_repeat_factor(&freq(f, 1.0), &cfg).unwrap();
        let want = oracle_rfs(f, t);
        worst = worst.max((got - want).abs() / want);
    }
    let elapsed = start.elapsed();
    check(
        worst <= FACTOR_TOL && elapsed < Duration::from_secs(1),
        format!("max rel err {worst:.2e}, {elapsed:?}"),
    )
}

fn irfs_geometric_and_means() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let geo = Method::Irfs(MeanKind::Geometric);
    let (mut worst_factor, mut worst_mean) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let (fi, fb, t) = (
            unit_interval(&mut rng),
            unit_interval(&mut rng),
            unit_interval(&mut rng),
        );
        let got = category_repeat_factor(&freq(fi, fb), &SamplerConfig::new(geo, t).unwrap()).unwrap();
        let want = oracle_irfs_geometric(fi, fb, t);
        worst_factor = worst_factor.max((got - want).abs() / want);

        for (kind, want) in [
            (MeanKind::Harmonic, oracle_harmonic(fi, fb)),
            (MeanKind::Arithmetic, oracle_arithmetic(fi, fb)),
            (MeanKind::Quadratic, oracle_quadratic(fi, fb)),
            (MeanKind::Geometric, oracle_geometric(fi, fb)),
        ] {
            let got = effective_frequency(&freq(fi, fb), Method::Irfs(kind)).unwrap();
            worst_mean = worst_mean.max((got - want).abs() / want);
        }
    }
    check(
        worst_factor <= FACTOR_TOL && worst_mean <= FACTOR_TOL,
        format!("max rel err factor {worst_factor:.2e}, means {worst_mean:.2e}"),
    )
}

fn zero_threshold_is_identity() -> Outcome {
    let mut datasets = vec![load_dataset(fixture("mini.json"), true).unwrap()];
    datasets.extend((0..20).map(|s| generate(&random_small_spec(100 + s, 50)).unwrap()));
    for ds in &datasets {
        let ft = compute_frequencies(ds).unwrap();
        for method in Method::ALL {
            let cfg = SamplerConfig::new(method, 0.0).unwrap();
            let rft = compute_repeat_factors(&ft, &cfg).unwrap();
            // Categories with no instances stay undefined; every defined one is 1.
            if rft.entries.iter().any(|e| e.repeat_factor.is_some_and(|r| r != 1.0)) {
                return check(false, format!("{method}: r_c != 1"));
            }
            let irt = image_repeat_factors(ds, &rft).unwrap();
            if irt.entries.iter().any(|e| e.repeat_factor != 1.0) {
                return check(false, format!("{method}: r_i != 1"));
            }
            let epoch = sample_epoch(&irt, 17, 3).unwrap();
            let mut ids = epoch.image_ids.clone();
            ids.sort();
            let mut all: Vec<_> = ds.images().iter().map(|i| i.id).collect();
            all.sort();
            if ids != all {
                return check(false, format!("{method}: epoch is not a permutation"));
            }
        }
    }
    pass(format!("{} datasets x {} methods", datasets.len(), Method::ALL.len()))
}

fn equal_image_counts_discriminated() -> Outcome {
    // Two categories, 5 images each; the first has 1 instance per image, the
    // second 10.
    let spec = SynthSpec {
        num_categories: 2,
        num_images: 20,
        image_count_law: ImageCountLaw::Explicit(vec![5, 5]),
        instances_law: InstancesLaw::Explicit(vec![1, 10]),
        seed: 0,
    };
    let ds = generate(&spec).unwrap();
    let ft = compute_frequencies(&ds).unwrap();
    let factors = |method| {
        let rft = compute_repeat_factors(&ft, &SamplerConfig::new(method, 0.5).unwrap()).unwrap();
        (
            rft.get(CategoryId(1)).unwrap(),
            rft.get(CategoryId(2)).unwrap(),
        )
    };
    let (rfs_scarce, rfs_dense) = factors(Method::Rfs);
    let (irfs_scarce, irfs_dense) = factors(Method::Irfs(MeanKind::Geometric));
    check(
        rfs_scarce == rfs_dense && irfs_scarce > irfs_dense,
        format!(
            "RFS {rfs_scarce} == {rfs_dense}; IRFS {irfs_scarce:.6} > {irfs_dense:.6}"
        ),
    )
}

fn mean_ordering() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut strict_checked, mut clamped_checked) = (0, 0);
    for i in 0..1000 {
        let (fi, fb) = loop {
            let (a, b) = (unit_interval(&mut rng), unit_interval(&mut rng));
            if (a - b).abs() > 1e-6 * a.max(b) {
                break (a, b);
            }
        };
        let (lo, hi) = (fi.min(fb), fi.max(fb));
        // Alternate between t below both fractions (every factor clamps to 1)
        // and t above both (no factor clamps).
        let t = if i % 2 == 0 {
            lo * rng.random_range(0.01..1.0)
        } else {
            hi * rng.random_range(1.01..100.0)
        };
        let r = |kind| {
            category_repeat_factor(
                &freq(fi, fb),
                &SamplerConfig::new(Method::Irfs(kind), t).unwrap(),
            )
            .unwrap()
        };
        let (h, g, a, q) = (
            r(MeanKind::Harmonic),
            r(MeanKind::Geometric),
            r(MeanKind::Arithmetic),
            r(MeanKind::Quadratic),
        );
        if !(h >= g && g >= a && a >= q) {
            return check(false, format!("order broken at fi={fi} fb={fb} t={t}"));
        }
        if t > hi {
            strict_checked += 1;
            if !(h > g && g > a && a > q) {
                return check(false, format!("not strict at fi={fi} fb={fb} t={t}"));
            }
        } else {
            clamped_checked += 1;
        }
    }
    pass(format!(
        "{strict_checked} unclamped pairs strict, {clamped_checked} clamped pairs ordered"
    ))
}

fn image_factor_dominance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut images_checked = 0;
    for seed in 0..100 {
        let ds = generate(&random_small_spec(1000 + seed, 50)).unwrap();
        let raw = raw_records(&dataset_json(&ds));
        let naive = naive_frequencies(&raw);
        let method = Method::ALL[seed as usize % Method::ALL.len()];
        let t = rng.random_range(0.0..1.0);
        let ft = compute_frequencies(&ds).unwrap();
        let rft = compute_repeat_factors(&ft, &SamplerConfig::new(method, t).unwrap()).unwrap();
        let irt = image_repeat_factors(&ds, &rft).unwrap();
        let expected = brute_force_image_factors(&raw, |cat| {
            let n = &naive[&cat];
            oracle_factor(method, n.f_image, n.f_instance, t)
        });
        for e in &irt.entries {
            let want = expected[&e.image_id.0];
            if !rel_close(e.repeat_factor, want, FACTOR_TOL) {
                return check(
                    false,
                    format!("seed {seed} image {}: {} vs {want}", e.image_id, e.repeat_factor),
                );
            }
            images_checked += 1;
        }
    }
    pass(format!("100 datasets, {images_checked} images"))
}

fn stochastic_rounding_calibration() -> Outcome {
    let start = Instant::now();
    // Category 2 is in 1 of 4 images; t = 2.25 * 0.25 gives it r = 1.5 exactly.
    let ds = load_dataset(fixture("mini.json"), true).unwrap();
    let ft = compute_frequencies(&ds).unwrap();
    let cfg = SamplerConfig::new(Method::Rfs, 0.5625).unwrap();
    let irt = image_repeat_factors(&ds, &compute_repeat_factors(&ft, &cfg).unwrap()).unwrap();
    let target = ImageId(4);
    let r = irt
        .entries
        .iter()
        .find(|e| e.image_id == target)
        .unwrap()
        .repeat_factor;
    if r != 1.5 {
        return check(false, format!("setup gave r_i = {r}"));
    }
    let epochs = 10_000u64;
    let mut total = 0u64;
    for epoch in 0..epochs {
        let count = sample_epoch(&irt, 2024, epoch).unwrap().count_of(target);
        if count != 1 && count != 2 {
            return check(false, format!("epoch {epoch}: count {count}"));
        }
        total += u64::from(count);
    }
    let mean = total as f64 / epochs as f64;
    let elapsed = start.elapsed();
    check(
        (mean - 1.5).abs() <= 0.015 && elapsed < Duration::from_secs(10),
        format!("mean occurrence {mean:.4}, {elapsed:?}"),
    )
}

fn frequency_oracle_equivalence() -> Outcome {
    let mut checked = 0;
    let mut seed = 0;
    while checked < 100 {
        seed += 1;
        let ds = generate(&random_small_spec(5000 + seed, 50)).unwrap();
        if ds.instance_count() > 1000 {
            continue;
        }
        let bytes = dataset_json(&ds);
        let loaded = read_dataset(bytes.as_slice(), true).unwrap();
        let ft = compute_frequencies(&loaded).unwrap();
        let naive = naive_frequencies(&raw_records(&bytes));
        if ft.entries.len() != naive.len() {
            return check(false, format!("seed {seed}: category count"));
        }
        for e in &ft.entries {
            let n = &naive[&e.category_id.0];
            let fractions_ok = |a: f64, b: f64| {
                if b == 0.0 {
                    a == 0.0
                } else {
                    rel_close(a, b, FRACTION_TOL)
                }
            };
            if e.image_count != n.image_count
                || e.instance_count != n.instance_count
                || !fractions_ok(e.f_image, n.f_image)
                || !fractions_ok(e.f_instance, n.f_instance)
            {
                return check(false, format!("seed {seed}: category {}", e.category_id));
            }
        }
        checked += 1;
    }
    pass(format!("{checked} datasets"))
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_rfsample")
}

fn run_cli(args: &[&str]) -> Vec<u8> {
    let out = Command::new(bin()).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out.stdout
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("zipf.json");
    let spec = SynthSpec {
        num_categories: 300,
        num_images: 3000,
        image_count_law: ImageCountLaw::Zipf { exponent: 1.2 },
        instances_law: InstancesLaw::Geometric(0.4),
        seed: 9,
    };
    generate(&spec)
        .unwrap()
        .write_json(std::fs::File::create(&input).unwrap())
        .unwrap();
    let input = input.to_str().unwrap();
    let mut runs = Vec::new();
    for threads in ["1", "4", "1", "4"] {
        let factors = run_cli(&[
            "--threads", threads, "factors", input, "--method", "irfs-harmonic", "--t", "0.01",
        ]);
        let sample = run_cli(&[
            "--threads", threads, "sample", input, "--method", "irfs-harmonic", "--t", "0.01",
            "--seed", "7", "--epochs", "3", "--format", "json",
        ]);
        runs.push((factors, sample));
    }
    let identical = runs.windows(2).all(|w| w[0] == w[1]);
    check(
        identical,
        format!(
            "4 runs (threads 1/4), factors {} bytes, sample {} bytes",
            runs[0].0.len(),
            runs[0].1.len()
        ),
    )
}

#[cfg(target_os = "linux")]
#[allow(clippy::zombie_processes)] // reaped by wait4 below
fn run_measured(args: &[&str]) -> (bool, u64) {
    let child = Command::new(bin())
        .args(args)
        .stdout(std::process::Stdio::null())
        .spawn()
        .unwrap();
    let mut status = 0;
    let mut usage: libc::rusage = unsafe { std::mem::zeroed() };
    let pid = child.id() as libc::pid_t;
    let rc = unsafe { libc::wait4(pid, &mut status, 0, &mut usage) };
    assert_eq!(rc, pid);
    let ok = libc::WIFEXITED(status) && libc::WEXITSTATUS(status) == 0;
    // ru_maxrss is in KiB on Linux.
    (ok, usage.ru_maxrss as u64 * 1024)
}

#[cfg(not(target_os = "linux"))]
fn run_measured(args: &[&str]) -> (bool, u64) {
    let status = Command::new(bin())
        .args(args)
        .stdout(std::process::Stdio::null())
        .status()
        .unwrap();
    (status.success(), 0)
}

const SCALE_TIME_LIMIT: Duration = Duration::from_secs(60);
const SCALE_MEMORY_LIMIT: u64 = 2 << 30;

fn scale_smoke() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("large.json");
    let spec = SynthSpec {
        num_categories: 1200,
        num_images: 100_000,
        image_count_law: ImageCountLaw::Zipf { exponent: 1.4 },
        instances_law: InstancesLaw::Geometric(0.75),
        seed: 1,
    };
    let ds = generate(&spec).unwrap();
    ds.write_json(std::fs::File::create(&input).unwrap()).unwrap();
    let shape = format!(
        "{} images / {} categories / {} annotations",
        ds.image_count(),
        ds.category_count(),
        ds.instance_count()
    );
    drop(ds);
    let input = input.to_str().unwrap();
    let out = dir.path().to_str().unwrap();

    let start = Instant::now();
    let mut peak = 0;
    for args in [
        vec!["analyze", input, "-o", &format!("{out}/freq.json")],
        vec!["factors", input, "-o", &format!("{out}/factors.json")],
        vec!["sample", input, "--seed", "1", "-o", &format!("{out}/epochs")],
    ] {
        let (ok, rss) = run_measured(&args);
        if !ok {
            return check(false, format!("{} failed", args[0]));
        }
        peak = peak.max(rss);
    }
    let elapsed = start.elapsed();
    let epoch_written = Path::new(out).join("epochs/epoch_00000.txt").exists();
    check(
        elapsed < SCALE_TIME_LIMIT && peak < SCALE_MEMORY_LIMIT && epoch_written,
        format!(
            "{shape}: {:.1}s, peak RSS {} MiB",
            elapsed.as_secs_f64(),
            peak >> 20
        ),
    )
}

fn fixture(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("RFS category factor matches high-precision oracle", rfs_exactness),
        ("IRFS geometric factor and the four means match oracle", irfs_geometric_and_means),
        ("t = 0 gives unit factors and permutation epochs", zero_threshold_is_identity),
        ("equal image counts: RFS ties, IRFS favours the instance-scarce class", equal_image_counts_discriminated),
        ("harmonic >= geometric >= arithmetic >= quadratic factors", mean_ordering),
        ("image factor equals brute-force max over its categories", image_factor_dominance),
        ("stochastic rounding of r = 1.5 over 10,000 epochs", stochastic_rounding_calibration),
        ("frequencies match a naive recount", frequency_oracle_equivalence),
        ("factors/sample output is byte-identical across runs and threads", determinism),
        ("LVIS-scale analyze + factors + sample", scale_smoke),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|e| Outcome {
            passed: false,
            detail: format!(
                "panicked: {}",
                e.downcast_ref::<String>()
                    .map(String::as_str)
                    .or_else(|| e.downcast_ref::<&str>().copied())
                    .unwrap_or("?")
            ),
        });
        let tag = if outcome.passed { "PASS" } else { "FAIL" };
        println!("AC{:02} {tag}  {name}  [{}]", i + 1, outcome.detail);
        if !outcome.passed {
            failed += 1;
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
