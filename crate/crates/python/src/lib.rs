//! Python bindings: `import pyrfsample`.

use std::collections::BTreeMap;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyFileNotFoundError, PyOSError, PyValueError};
use pyo3::prelude::*;

use rfsample::{
    compute_frequencies, compute_repeat_factors, expected_exposure, image_repeat_factors,
    ImageCountLaw, ImageRepeatTable, InstancesLaw, RepeatFactorTable, SamplerConfig, SynthSpec,
};

create_exception!(pyrfsample, RfsampleError, PyException);

fn to_py(err: rfsample::Error) -> PyErr {
    use rfsample::Error::*;
    match err {
        FileNotFound(p) => PyFileNotFoundError::new_err(p.display().to_string()),
        Io(e) => PyOSError::new_err(e.to_string()),
        e @ (InvalidConfig(_) | InfeasibleSpec(_) | IndexOutOfRange { .. }) => {
            PyValueError::new_err(e.to_string())
        }
        e => RfsampleError::new_err(e.to_string()),
    }
}

fn config(method: &str, t: f64) -> PyResult<SamplerConfig> {
    SamplerConfig::new(method.parse().map_err(to_py)?, t).map_err(to_py)
}

/// A validated annotation set.
#[pyclass(frozen, module = "pyrfsample")]
pub struct Dataset {
    inner: rfsample::Dataset,
}

impl Dataset {
    fn factor_tables(&self, method: &str, t: f64) -> PyResult<(RepeatFactorTable, ImageRepeatTable)> {
        let ft = compute_frequencies(&self.inner).map_err(to_py)?;
        let rft = compute_repeat_factors(&ft, &config(method, t)?).map_err(to_py)?;
        let irt = image_repeat_factors(&self.inner, &rft).map_err(to_py)?;
        Ok((rft, irt))
    }
}

#[pymethods]
impl Dataset {
    /// Load a COCO/LVIS-style JSON file.
    #[staticmethod]
    #[pyo3(signature = (path, strict = true))]
    fn load(path: std::path::PathBuf, strict: bool) -> PyResult<Self> {
        Ok(Self {
            inner: rfsample::load_dataset(path, strict).map_err(to_py)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (text, strict = true))]
    fn from_json(text: &str, strict: bool) -> PyResult<Self> {
        Ok(Self {
            inner: rfsample::read_dataset(text.as_bytes(), strict).map_err(to_py)?,
        })
    }

    /// Synthetic long-tailed dataset. Give exactly one of `zipf` / `image_counts`;
    /// at most one instances law (default one instance per occurrence).
    #[staticmethod]
    #[pyo3(signature = (
        num_images, num_categories = None, *, zipf = None, image_counts = None,
        instances_constant = None, instances_geometric = None, instances = None, seed = 0
    ))]
    #[allow(clippy::too_many_arguments)]
    fn synth(
        num_images: usize,
        num_categories: Option<usize>,
        zipf: Option<f64>,
        image_counts: Option<Vec<usize>>,
        instances_constant: Option<u32>,
        instances_geometric: Option<f64>,
        instances: Option<Vec<u32>>,
        seed: u64,
    ) -> PyResult<Self> {
        let (num_categories, image_count_law) = match (zipf, image_counts) {
            (Some(exponent), None) => (
                num_categories.ok_or_else(|| PyValueError::new_err("zipf needs num_categories"))?,
                ImageCountLaw::Zipf { exponent },
            ),
            (None, Some(counts)) => (counts.len(), ImageCountLaw::Explicit(counts)),
            _ => return Err(PyValueError::new_err("give exactly one of zipf, image_counts")),
        };
        let instances_law = match (instances_constant, instances_geometric, instances) {
            (None, None, None) => InstancesLaw::Constant(1),
            (Some(k), None, None) => InstancesLaw::Constant(k),
            (None, Some(p), None) => InstancesLaw::Geometric(p),
            (None, None, Some(v)) => InstancesLaw::Explicit(v),
            _ => return Err(PyValueError::new_err("give at most one instances law")),
        };
        let spec = SynthSpec {
            num_categories,
            num_images,
            image_count_law,
            instances_law,
            seed,
        };
        Ok(Self {
            inner: rfsample::generate(&spec).map_err(to_py)?,
        })
    }

    #[getter]
    fn image_count(&self) -> usize {
        self.inner.image_count()
    }

    #[getter]
    fn instance_count(&self) -> usize {
        self.inner.instance_count()
    }

    #[getter]
    fn category_count(&self) -> usize {
        self.inner.category_count()
    }

    #[getter]
    fn dropped_annotations(&self) -> usize {
        self.inner.dropped_annotations()
    }

    /// Hex SHA-256 of the source.
    #[getter]
    fn source_digest(&self) -> String {
        self.inner.source_digest().to_hex()
    }

    /// `{instances per image: number of images}`.
    fn instances_per_image(&self) -> BTreeMap<usize, usize> {
        self.inner.summary().instances_per_image
    }

    fn to_json(&self) -> PyResult<String> {
        let mut out = Vec::new();
        self.inner.write_json(&mut out).map_err(to_py)?;
        Ok(String::from_utf8(out).expect("utf-8 json"))
    }

    /// `{category_id: (image_count, instance_count, f_image, f_instance, bucket)}`.
    #[allow(clippy::type_complexity)]
    fn frequencies(&self) -> PyResult<BTreeMap<u64, (usize, usize, f64, f64, &'static str)>> {
        let ft = compute_frequencies(&self.inner).map_err(to_py)?;
        Ok(ft
            .entries
            .iter()
            .map(|e| {
                (
                    e.category_id.0,
                    (e.image_count, e.instance_count, e.f_image, e.f_instance, e.bucket().as_str()),
                )
            })
            .collect())
    }

    /// `{category_id: factor}`; `None` where the factor is undefined.
    #[pyo3(signature = (method = "irfs-geometric", t = rfsample::DEFAULT_THRESHOLD))]
    fn repeat_factors(&self, method: &str, t: f64) -> PyResult<BTreeMap<u64, Option<f64>>> {
        let (rft, _) = self.factor_tables(method, t)?;
        Ok(rft.entries.iter().map(|e| (e.category_id.0, e.repeat_factor)).collect())
    }

    #[pyo3(signature = (method = "irfs-geometric", t = rfsample::DEFAULT_THRESHOLD))]
    fn image_repeat_factors(&self, method: &str, t: f64) -> PyResult<BTreeMap<u64, f64>> {
        let (_, irt) = self.factor_tables(method, t)?;
        Ok(irt.entries.iter().map(|e| (e.image_id.0, e.repeat_factor)).collect())
    }

    /// Shuffled image ids for one epoch.
    #[pyo3(signature = (seed, epoch, method = "irfs-geometric", t = rfsample::DEFAULT_THRESHOLD))]
    fn sample_epoch(&self, py: Python<'_>, seed: u64, epoch: u64, method: &str, t: f64) -> PyResult<Vec<u64>> {
        let (_, irt) = self.factor_tables(method, t)?;
        let sample = py
            .detach(|| rfsample::sample_epoch(&irt, seed, epoch))
            .map_err(to_py)?;
        Ok(sample.image_ids.iter().map(|i| i.0).collect())
    }

    /// `{category_id: expected appearances per epoch}`.
    #[pyo3(signature = (method = "irfs-geometric", t = rfsample::DEFAULT_THRESHOLD))]
    fn expected_exposure(&self, method: &str, t: f64) -> PyResult<BTreeMap<u64, f64>> {
        let ft = compute_frequencies(&self.inner).map_err(to_py)?;
        let (_, irt) = self.factor_tables(method, t)?;
        let exposure = expected_exposure(&self.inner, &irt, &ft).map_err(to_py)?;
        Ok(exposure.iter().map(|e| (e.category_id.0, e.expected)).collect())
    }

    /// Balance report as JSON, one block per `method[:t]` config.
    #[pyo3(signature = (configs = vec!["rfs".to_string(), "irfs-geometric".to_string()]))]
    fn report_json(&self, configs: Vec<String>) -> PyResult<String> {
        let configs = configs
            .iter()
            .map(|c| c.parse::<SamplerConfig>().map_err(to_py))
            .collect::<PyResult<Vec<_>>>()?;
        let report = rfsample::build_report(&self.inner, &configs).map_err(to_py)?;
        let mut out = Vec::new();
        report.write_json(&mut out).map_err(to_py)?;
        Ok(String::from_utf8(out).expect("utf-8 json"))
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(images={}, annotations={}, categories={})",
            self.inner.image_count(),
            self.inner.instance_count(),
            self.inner.category_count()
        )
    }
}

/// Names accepted wherever a method is expected.
#[pyfunction]
fn methods() -> Vec<&'static str> {
    rfsample::Method::ALL.iter().map(|m| m.name()).collect()
}

#[pymodule]
fn pyrfsample(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_function(wrap_pyfunction!(methods, m)?)?;
    m.add("RfsampleError", m.py().get_type::<RfsampleError>())?;
    m.add("DEFAULT_THRESHOLD", rfsample::DEFAULT_THRESHOLD)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
