//! Python bindings: load a fractal bank once, then augment arrays by stream id.

use std::path::Path;

use layermix::{layermix, FractalBank, Image, PipelineConfig, RngStream};
use pyo3::buffer::PyBuffer;
use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyBytes;

create_exception!(layermix_py, LayerMixError, PyValueError, "Base class for layermix errors.");
create_exception!(layermix_py, ShapeError, LayerMixError, "Array is not H x W x C with C in {1, 3}.");
create_exception!(layermix_py, DTypeError, LayerMixError, "Array is not a contiguous float32 buffer.");
create_exception!(layermix_py, RangeError, LayerMixError, "Array has values outside [0, 1].");
create_exception!(layermix_py, EmptyBankError, LayerMixError, "Fractal directory has no decodable images.");

/// Errors from the Rust side of the boundary, before mapping to Python.
#[derive(Debug)]
pub enum BindError {
    Shape(String),
    Range(String),
    EmptyBank(String),
    Other(String),
}

impl From<layermix::Error> for BindError {
    fn from(e: layermix::Error) -> Self {
        match e {
            layermix::Error::EmptyBank { .. } => BindError::EmptyBank(e.to_string()),
            layermix::Error::ShapeMismatch { .. } => BindError::Shape(e.to_string()),
            other => BindError::Other(other.to_string()),
        }
    }
}

impl From<BindError> for PyErr {
    fn from(e: BindError) -> Self {
        match e {
            BindError::Shape(m) => ShapeError::new_err(m),
            BindError::Range(m) => RangeError::new_err(m),
            BindError::EmptyBank(m) => EmptyBankError::new_err(m),
            BindError::Other(m) => LayerMixError::new_err(m),
        }
    }
}

/// A loaded fractal bank plus pipeline settings. Immutable after
/// construction, so one instance can serve many threads.
#[pyclass(frozen, module = "layermix_py")]
pub struct Augmenter {
    bank: FractalBank,
    config: PipelineConfig,
}

impl Augmenter {
    pub fn new(fractal_dir: &Path, magnitude: u8, beta: f64, seed: u64, grayscale: bool) -> Result<Self, BindError> {
        let config = PipelineConfig {
            magnitude,
            blending_ratio: beta,
            seed,
            grayscale_fractals: grayscale,
            ..PipelineConfig::default()
        };
        config.validate()?;
        if !fractal_dir.is_dir() {
            return Err(BindError::Other(format!("{} is not a directory", fractal_dir.display())));
        }
        let bank = FractalBank::load(fractal_dir, grayscale)?;
        Ok(Augmenter { bank, config })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    /// Checks shape and range, then runs the pipeline on stream
    /// `(seed, stream_id)`.
    pub fn augment_raw(&self, shape: &[usize], data: Vec<f32>, stream_id: u64) -> Result<Image, BindError> {
        let (h, w, c) = match *shape {
            [h, w] => (h, w, 1),
            [h, w, c] => (h, w, c),
            _ => return Err(BindError::Shape(format!("expected 2 or 3 dimensions, got {}", shape.len()))),
        };
        if h == 0 || w == 0 || !(c == 1 || c == 3) {
            return Err(BindError::Shape(format!("expected H x W x C with C in {{1, 3}}, got {shape:?}")));
        }
        if let Some((i, v)) = data.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(BindError::Range(format!("element {i} is {v}, outside [0, 1]")));
        }
        let img = Image::new(h, w, c, data)?;
        self.augment_image(&img, stream_id)
    }

    pub fn augment_image(&self, img: &Image, stream_id: u64) -> Result<Image, BindError> {
        let mut rng = RngStream::new(self.config.seed, stream_id);
        Ok(layermix(img, &self.bank, &self.config, &mut rng)?.image)
    }
}

fn to_numpy<'py>(py: Python<'py>, img: &Image, shape: &[usize]) -> PyResult<Bound<'py, PyAny>> {
    let bytes: Vec<u8> = img.data().iter().flat_map(|v| v.to_ne_bytes()).collect();
    let np = py.import("numpy")?;
    let flat = np.call_method1("frombuffer", (PyBytes::new(py, &bytes), "float32"))?;
    flat.call_method1("reshape", (shape.to_vec(),))?.call_method0("copy")
}

#[pymethods]
impl Augmenter {
    /// Augments an H x W x C (or H x W) float32 array with values in [0, 1].
    /// The result is a new array of the same shape.
    fn augment_array<'py>(&self, py: Python<'py>, img: &Bound<'py, PyAny>, stream_id: u64) -> PyResult<Bound<'py, PyAny>> {
        let buffer = PyBuffer::<f32>::get(img).map_err(|e| DTypeError::new_err(format!("expected float32 array: {e}")))?;
        if !buffer.is_c_contiguous() {
            return Err(DTypeError::new_err("array must be C-contiguous"));
        }
        let shape = buffer.shape().to_vec();
        let data = buffer.to_vec(py)?;
        drop(buffer);
        let out = py.detach(|| self.augment_raw(&shape, data, stream_id))?;
        to_numpy(py, &out, &shape)
    }

    #[getter]
    fn magnitude(&self) -> u8 {
        self.config.magnitude
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.config.blending_ratio
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.config.seed
    }

    #[getter]
    fn grayscale(&self) -> bool {
        self.config.grayscale_fractals
    }

    #[getter]
    fn fractal_count(&self) -> usize {
        self.bank.count()
    }
}

/// Loads the fractal bank once and returns a reusable augmenter.
#[pyfunction]
#[pyo3(signature = (fractal_dir, magnitude = 8, beta = 3.0, seed = 0, grayscale = true))]
fn make_augmenter(fractal_dir: std::path::PathBuf, magnitude: u8, beta: f64, seed: u64, grayscale: bool) -> PyResult<Augmenter> {
    Ok(Augmenter::new(&fractal_dir, magnitude, beta, seed, grayscale)?)
}

/// Function form of `Augmenter.augment_array`.
#[pyfunction]
fn augment_array<'py>(
    py: Python<'py>,
    augmenter: &Bound<'py, Augmenter>,
    img: &Bound<'py, PyAny>,
    stream_id: u64,
) -> PyResult<Bound<'py, PyAny>> {
    augmenter.get().augment_array(py, img, stream_id)
}

#[pymodule]
fn layermix_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add_class::<Augmenter>()?;
    m.add_function(wrap_pyfunction!(make_augmenter, m)?)?;
    m.add_function(wrap_pyfunction!(augment_array, m)?)?;
    m.add("LayerMixError", py.get_type::<LayerMixError>())?;
    m.add("ShapeError", py.get_type::<ShapeError>())?;
    m.add("DTypeError", py.get_type::<DTypeError>())?;
    m.add("RangeError", py.get_type::<RangeError>())?;
    m.add("EmptyBankError", py.get_type::<EmptyBankError>())?;
    Ok(())
}
