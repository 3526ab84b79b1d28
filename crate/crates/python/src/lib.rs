//! Python bindings. Batches cross the boundary as lists of rows
//! (`list[list[float]]`), images as lists of pixel rows in `[0, 1]`.

use std::path::PathBuf;

use decdm::ddim::{
    decode, encode_with_plan, read_latent_file, write_latent_file, IntegrationPlan, LatentBatch,
};
use decdm::diffusion::{load_checkpoint, save_checkpoint, EpsPredictor};
use decdm::metrics::{psnr as psnr_db, ssim as ssim_index, SsimConfig};
use decdm::synth::{degrade as degrade_patch, render_strokes as render, DegradeConfig};
use decdm::translate::{cycle_check as run_cycle, translate_with_plan, DomainPair};
use decdm::{
    make_schedule, DenoiserModel, GrayPatch, MlpArch, NoiseSchedule, ScheduleKind, TrainConfig,
};
use ndarray::Array2;
use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(pydecdm, DecdmError, PyValueError);

type Rows = Vec<Vec<f64>>;
type Tiles = (Vec<Rows>, Vec<(usize, usize)>);

fn err(e: decdm::Error) -> PyErr {
    DecdmError::new_err(e.to_string())
}

fn to_array(rows: Vec<Vec<f64>>, dim: Option<usize>) -> PyResult<Array2<f64>> {
    let width = rows.first().map(Vec::len).or(dim).unwrap_or(0);
    if rows.iter().any(|r| r.len() != width) {
        return Err(DecdmError::new_err("rows must all have the same length"));
    }
    let n = rows.len();
    Array2::from_shape_vec((n, width), rows.into_iter().flatten().collect())
        .map_err(|e| DecdmError::new_err(e.to_string()))
}

fn to_rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn to_patch(img: Vec<Vec<f64>>) -> PyResult<GrayPatch> {
    let a = to_array(img, None)?;
    let (h, w) = a.dim();
    GrayPatch::new(h, w, a.into_raw_vec_and_offset().0).map_err(err)
}

fn from_patch(p: &GrayPatch) -> Vec<Vec<f64>> {
    p.pixels.chunks(p.width).map(<[f64]>::to_vec).collect()
}

/// A cumulative noise schedule `alpha_0 = 1 > ... > alpha_T`.
#[pyclass(name = "NoiseSchedule", frozen, from_py_object)]
#[derive(Clone)]
struct PySchedule {
    inner: NoiseSchedule,
}

#[pymethods]
impl PySchedule {
    #[new]
    #[pyo3(signature = (timesteps = 1000, kind = "linear"))]
    fn new(timesteps: usize, kind: &str) -> PyResult<Self> {
        let kind: ScheduleKind = kind.parse().map_err(err)?;
        Ok(Self {
            inner: make_schedule(timesteps, kind).map_err(err)?,
        })
    }

    #[getter]
    fn timesteps(&self) -> usize {
        self.inner.timesteps()
    }

    #[getter]
    fn alphas(&self) -> Vec<f64> {
        self.inner.alphas_cum().to_vec()
    }

    fn hash(&self) -> String {
        self.inner.hash()
    }
}

/// One domain's noise-prediction network.
#[pyclass(name = "Model", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyModel {
    inner: DenoiserModel,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: load_checkpoint(&path).map_err(err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_checkpoint(&self.inner, &path).map_err(err)
    }

    /// The `eps = 0` stub, for checking the integrator.
    #[staticmethod]
    #[pyo3(signature = (data_dim, schedule, domain_tag = "stub"))]
    fn zero(data_dim: usize, schedule: &PySchedule, domain_tag: &str) -> PyResult<Self> {
        Ok(Self {
            inner: DenoiserModel::zero(schedule.inner.clone(), domain_tag, data_dim)
                .map_err(err)?,
        })
    }

    #[getter]
    fn domain_tag(&self) -> String {
        self.inner.domain_tag.clone()
    }

    #[getter]
    fn data_shape(&self) -> Vec<usize> {
        self.inner.data_shape.clone()
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.inner.params.len()
    }

    #[getter]
    fn schedule(&self) -> PySchedule {
        PySchedule {
            inner: self.inner.schedule.clone(),
        }
    }

    fn predict_eps(&self, x: Vec<Vec<f64>>, t: f64) -> PyResult<Vec<Vec<f64>>> {
        let x = to_array(x, Some(self.inner.data_dim()))?;
        if x.ncols() != self.inner.data_dim() {
            return Err(DecdmError::new_err(format!(
                "expected {} columns",
                self.inner.data_dim()
            )));
        }
        Ok(to_rows(&self.inner.predict_eps(x.view(), t)))
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(domain_tag={:?}, data_shape={:?}, params={})",
            self.inner.domain_tag,
            self.inner.data_shape,
            self.inner.params.len()
        )
    }
}

/// Encoded samples plus the metadata a latent file carries.
#[pyclass(name = "Latent", frozen)]
struct PyLatent {
    inner: LatentBatch,
}

#[pymethods]
impl PyLatent {
    #[getter]
    fn latents(&self) -> Vec<Vec<f64>> {
        to_rows(&self.inner.latents)
    }

    #[getter]
    fn source_domain_tag(&self) -> String {
        self.inner.source_domain_tag.clone()
    }

    #[getter]
    fn schedule_hash(&self) -> String {
        self.inner.schedule_hash.clone()
    }

    #[getter]
    fn timesteps(&self) -> Vec<usize> {
        self.inner.plan.timesteps().to_vec()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        let bytes = write_latent_file(&self.inner).map_err(err)?;
        std::fs::write(&path, bytes)
            .map_err(|e| DecdmError::new_err(format!("{}: {e}", path.display())))
    }

    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        let bytes = std::fs::read(&path)
            .map_err(|e| DecdmError::new_err(format!("{}: {e}", path.display())))?;
        Ok(Self {
            inner: read_latent_file(&bytes).map_err(err)?,
        })
    }
}

fn plan(model: &DenoiserModel, n_steps: usize, t_end: Option<usize>) -> PyResult<IntegrationPlan> {
    IntegrationPlan::new(0, t_end.unwrap_or(model.schedule.timesteps()), n_steps).map_err(err)
}

/// Samples of a 2D domain: `(points, labels)`.
#[pyfunction]
fn make_dataset(kind: &str, n: usize, seed: u64) -> PyResult<(Vec<Vec<f64>>, Vec<u32>)> {
    let domain: decdm::Domain = kind.parse().map_err(err)?;
    let set = decdm::make_dataset(domain, n, seed).map_err(err)?;
    Ok((set.points.iter().map(|p| p.to_vec()).collect(), set.labels))
}

/// Trains one model; returns `(model, losses)`.
#[pyfunction]
#[pyo3(signature = (data, domain_tag, *, hidden = None, steps = 20_000, batch_size = 256, lr = 2e-4, seed = 0, schedule = None, data_shape = None))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    data: Vec<Vec<f64>>,
    domain_tag: &str,
    hidden: Option<Vec<usize>>,
    steps: usize,
    batch_size: usize,
    lr: f64,
    seed: u64,
    schedule: Option<PySchedule>,
    data_shape: Option<Vec<usize>>,
) -> PyResult<(PyModel, Vec<f64>)> {
    let data = to_array(data, None)?;
    let dim = data.ncols();
    let arch = match hidden {
        Some(h) => MlpArch::new(dim, 64, h).map_err(err)?,
        None => MlpArch::points(dim),
    };
    let schedule = match schedule {
        Some(s) => s.inner,
        None => make_schedule(1000, ScheduleKind::LinearBeta).map_err(err)?,
    };
    let cfg = TrainConfig {
        steps,
        batch_size,
        lr,
        seed,
        ..TrainConfig::default()
    };
    let shape = data_shape.unwrap_or_else(|| vec![dim]);
    let (model, log) = py
        .detach(|| decdm::train(data.view(), &arch, &cfg, &schedule, domain_tag, shape))
        .map_err(err)?;
    Ok((PyModel { inner: model }, log.losses))
}

#[pyfunction]
#[pyo3(signature = (model, x, n_steps = 200, t_end = None))]
fn encode(
    py: Python<'_>,
    model: &PyModel,
    x: Vec<Vec<f64>>,
    n_steps: usize,
    t_end: Option<usize>,
) -> PyResult<PyLatent> {
    let x = to_array(x, Some(model.inner.data_dim()))?;
    let plan = plan(&model.inner, n_steps, t_end)?;
    let inner = py
        .detach(|| encode_with_plan(&model.inner, x.view(), plan))
        .map_err(err)?;
    Ok(PyLatent { inner })
}

#[pyfunction(name = "decode")]
fn decode_latent(py: Python<'_>, model: &PyModel, latent: &PyLatent) -> PyResult<Vec<Vec<f64>>> {
    let out = py
        .detach(|| decode(&model.inner, &latent.inner))
        .map_err(err)?;
    Ok(to_rows(&out))
}

#[pyfunction]
#[pyo3(signature = (source, target, x, n_steps = 200, t_end = None))]
fn translate(
    py: Python<'_>,
    source: &PyModel,
    target: &PyModel,
    x: Vec<Vec<f64>>,
    n_steps: usize,
    t_end: Option<usize>,
) -> PyResult<Vec<Vec<f64>>> {
    let pair = DomainPair::new(source.inner.clone(), target.inner.clone()).map_err(err)?;
    let x = to_array(x, Some(source.inner.data_dim()))?;
    let plan = plan(&source.inner, n_steps, t_end)?;
    let out = py
        .detach(|| translate_with_plan(x.view(), &pair, plan))
        .map_err(err)?;
    Ok(to_rows(&out))
}

/// Source -> target -> source distances as a dict.
#[pyfunction]
#[pyo3(signature = (source, target, x, n_steps = 200))]
fn cycle_check<'py>(
    py: Python<'py>,
    source: &PyModel,
    target: &PyModel,
    x: Vec<Vec<f64>>,
    n_steps: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let pair = DomainPair::new(source.inner.clone(), target.inner.clone()).map_err(err)?;
    let x = to_array(x, Some(source.inner.data_dim()))?;
    let r = py
        .detach(|| run_cycle(x.view(), &pair, n_steps))
        .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("mean_latent_l2", r.mean_latent_l2)?;
    d.set_item("mean_source_l2", r.mean_source_l2)?;
    d.set_item("per_sample_latent_l2", r.per_sample_latent_l2)?;
    d.set_item("per_sample_source_l2", r.per_sample_source_l2)?;
    d.set_item("n_steps", r.n_steps)?;
    Ok(d)
}

#[pyfunction]
fn psnr(reference: Vec<Vec<f64>>, test: Vec<Vec<f64>>) -> PyResult<f64> {
    psnr_db(&to_patch(reference)?, &to_patch(test)?).map_err(err)
}

#[pyfunction]
fn ssim(reference: Vec<Vec<f64>>, test: Vec<Vec<f64>>) -> PyResult<f64> {
    ssim_index(
        &to_patch(reference)?,
        &to_patch(test)?,
        &SsimConfig::default(),
    )
    .map_err(err)
}

#[pyfunction]
fn render_strokes(seed: u64, height: usize, width: usize, density: f64) -> PyResult<Vec<Vec<f64>>> {
    Ok(from_patch(
        &render(seed, height, width, density).map_err(err)?,
    ))
}

/// Gaussian plus speckle noise, sigmas on the 0-255 scale.
#[pyfunction]
#[pyo3(signature = (image, gaussian = 5.0, speckle = 5.0, seed = 0))]
fn degrade(
    image: Vec<Vec<f64>>,
    gaussian: f64,
    speckle: f64,
    seed: u64,
) -> PyResult<Vec<Vec<f64>>> {
    let cfg = DegradeConfig {
        gaussian_sigma: gaussian,
        speckle_sigma: speckle,
        seed,
    };
    Ok(from_patch(
        &degrade_patch(&to_patch(image)?, &cfg).map_err(err)?,
    ))
}

/// Slide-window patches and their top-left origins.
#[pyfunction]
fn slide_window(
    image: Vec<Vec<f64>>,
    window: (usize, usize),
    stride: (usize, usize),
) -> PyResult<Tiles> {
    let grid = decdm::slide_window(&to_patch(image)?, window, stride).map_err(err)?;
    Ok((grid.patches.iter().map(from_patch).collect(), grid.origins))
}

/// Overlap-averages patches back onto an image of `dims`.
#[pyfunction]
fn stitch(
    patches: Vec<Vec<Vec<f64>>>,
    origins: Vec<(usize, usize)>,
    dims: (usize, usize),
) -> PyResult<Vec<Vec<f64>>> {
    let patches = patches
        .into_iter()
        .map(to_patch)
        .collect::<PyResult<Vec<_>>>()?;
    let window = patches.first().map(GrayPatch::dims).unwrap_or((1, 1));
    let grid = decdm::PatchGrid {
        patches,
        origins,
        window,
        stride: window,
        source_dims: dims,
        padded_dims: dims,
    };
    Ok(from_patch(&decdm::stitch(&grid).map_err(err)?))
}

#[pymodule]
fn pydecdm(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("DecdmError", m.py().get_type::<DecdmError>())?;
    m.add_class::<PySchedule>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyLatent>()?;
    m.add_function(wrap_pyfunction!(make_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(encode, m)?)?;
    m.add_function(wrap_pyfunction!(decode_latent, m)?)?;
    m.add_function(wrap_pyfunction!(translate, m)?)?;
    m.add_function(wrap_pyfunction!(cycle_check, m)?)?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add_function(wrap_pyfunction!(ssim, m)?)?;
    m.add_function(wrap_pyfunction!(render_strokes, m)?)?;
    m.add_function(wrap_pyfunction!(degrade, m)?)?;
    m.add_function(wrap_pyfunction!(slide_window, m)?)?;
    m.add_function(wrap_pyfunction!(stitch, m)?)?;
    Ok(())
}
