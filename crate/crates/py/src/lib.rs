//! Python bindings: instruction libraries, loop mapping, cycle estimates and
//! the linear energy/latency predictor.
//!
//! Structured inputs and outputs that already have a JSON form (CFG
//! documents, model descriptors, libraries) cross the boundary as strings.

use std::collections::BTreeMap;
use std::path::PathBuf;

use instmeter::cfg::{extract_loops as core_extract_loops, Cfg};
use instmeter::disasm::{parse_disasm as core_parse_disasm, Arch, Isa};
use instmeter::expr::{eval_expr as core_eval_expr, parse_expr, ParamEnv};
use instmeter::instlib::{
    build_library, kernel_cycles, model_cycles, BuildOptions, InstructionLibrary,
};
use instmeter::mapper::map_function;
use instmeter::modelparse::{load_model, lower_layers};
use instmeter::predictor::{self, LinearPredictor, Sample, Target};
use instmeter::srcfeat::parse_src_cfg;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn env_of(params: BTreeMap<String, u64>) -> ParamEnv {
    ParamEnv(params)
}

/// Parses an objdump listing; returns the listing as JSON.
#[pyfunction]
fn parse_disasm(text: &str) -> PyResult<String> {
    let listing = core_parse_disasm(text).map_err(err)?;
    serde_json::to_string(&listing).map_err(err)
}

/// Loops of a CFG document as `(id, header, body)` tuples.
#[pyfunction]
fn extract_loops(cfg_json: &str) -> PyResult<Vec<(u32, u32, Vec<u32>)>> {
    let cfg = Cfg::from_json(cfg_json).map_err(err)?;
    Ok(core_extract_loops(&cfg)
        .into_iter()
        .map(|l| (l.id, l.header, l.body.into_iter().collect()))
        .collect())
}

/// Evaluates a trip-count expression under `params`.
#[pyfunction]
fn eval_expr(expr: &str, params: BTreeMap<String, u64>) -> PyResult<u64> {
    core_eval_expr(&parse_expr(expr).map_err(err)?, &env_of(params)).map_err(err)
}

/// Maps source loops onto disassembly loops. Returns `(pairs, ambiguous)`.
#[pyfunction]
#[pyo3(signature = (src_json, listing, symbol=None, arch="cortex-m", seed=42))]
fn map_loops(
    src_json: &str,
    listing: &str,
    symbol: Option<&str>,
    arch: &str,
    seed: u64,
) -> PyResult<(BTreeMap<u32, u32>, bool)> {
    let src = parse_src_cfg(src_json).map_err(err)?;
    let parsed = core_parse_disasm(listing).map_err(err)?;
    let name = symbol.unwrap_or(&src.name);
    let func = parsed
        .function(name)
        .ok_or_else(|| err(format!("no function <{name}> in listing")))?;
    let isa = Isa::for_arch(arch.parse::<Arch>().map_err(err)?);
    let r = map_function(&src, func, &isa, seed).map_err(err)?;
    Ok((r.best.pairs, r.ambiguous))
}

#[pyfunction]
fn relative_error(pred: f64, truth: f64) -> PyResult<f64> {
    predictor::relative_error(pred, truth).map_err(err)
}

#[pyfunction]
fn error_percentiles(errors: Vec<f64>, ps: Vec<f64>) -> PyResult<Vec<f64>> {
    predictor::error_percentiles(&errors, &ps).map_err(err)
}

/// A built instruction library.
#[pyclass(frozen, name = "Library")]
struct PyLibrary {
    inner: InstructionLibrary,
}

#[pymethods]
impl PyLibrary {
    #[staticmethod]
    #[pyo3(signature = (manifest, seed=42))]
    fn build(manifest: PathBuf, seed: u64) -> PyResult<Self> {
        let opts = BuildOptions {
            seed,
            ..BuildOptions::default()
        };
        Ok(PyLibrary {
            inner: build_library(&manifest, &opts).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyLibrary {
            inner: InstructionLibrary::from_json(text).map_err(err)?,
        })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn input_hash(&self) -> String {
        self.inner.input_hash.clone()
    }

    fn kernel_names(&self) -> Vec<String> {
        self.inner.kernels.keys().cloned().collect()
    }

    /// Cycles of one kernel invocation under `params`.
    fn kernel_cycles(&self, name: &str, params: BTreeMap<String, u64>) -> PyResult<u64> {
        let k = self.inner.kernel(name).map_err(err)?;
        kernel_cycles(k, &env_of(params), &self.inner.cpi).map_err(err)
    }

    /// Total cycles of a model descriptor and `(op_type, cycles)` per operator.
    fn model_cycles(&self, model_json: &str) -> PyResult<(u64, Vec<(String, u64)>)> {
        let ops = lower_layers(&load_model(model_json).map_err(err)?).map_err(err)?;
        let mc = model_cycles(&ops, &self.inner).map_err(err)?;
        Ok((
            mc.total,
            mc.operators
                .into_iter()
                .map(|o| (o.op_type, o.cycles))
                .collect(),
        ))
    }
}

/// `measured = a * cycles + b` for energy (J) or latency (s).
#[pyclass(frozen, name = "Predictor")]
struct PyPredictor {
    inner: LinearPredictor,
}

#[pymethods]
impl PyPredictor {
    #[new]
    fn new(target: &str, a: f64, b: f64) -> PyResult<Self> {
        let target: Target = target.parse().map_err(err)?;
        Ok(PyPredictor {
            inner: LinearPredictor::new(target, a, b),
        })
    }

    /// Few-shot fit on `(model_id, cycles, measured)` samples.
    #[staticmethod]
    #[pyo3(signature = (samples, target, seeds=10, seed=42))]
    fn fit(
        samples: Vec<(String, u64, f64)>,
        target: &str,
        seeds: usize,
        seed: u64,
    ) -> PyResult<Self> {
        let target: Target = target.parse().map_err(err)?;
        let samples = samples
            .into_iter()
            .map(|(id, c, m)| Sample::new(id, c, m))
            .collect::<Result<Vec<_>, _>>()
            .map_err(err)?;
        Ok(PyPredictor {
            inner: predictor::subsample_fit(&samples, seeds, target, seed).map_err(err)?,
        })
    }

    #[getter]
    fn a(&self) -> f64 {
        self.inner.a
    }

    #[getter]
    fn b(&self) -> f64 {
        self.inner.b
    }

    #[getter]
    fn target(&self) -> String {
        self.inner.target.to_string()
    }

    fn predict(&self, cycles: u64) -> f64 {
        predictor::predict(&self.inner, cycles)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Predictor({}, a={:e}, b={:e})",
            self.inner.target, self.inner.a, self.inner.b
        )
    }
}

#[pymodule]
#[pyo3(name = "instmeter")]
fn instmeter_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(parse_disasm, m)?)?;
    m.add_function(wrap_pyfunction!(extract_loops, m)?)?;
    m.add_function(wrap_pyfunction!(eval_expr, m)?)?;
    m.add_function(wrap_pyfunction!(map_loops, m)?)?;
    m.add_function(wrap_pyfunction!(relative_error, m)?)?;
    m.add_function(wrap_pyfunction!(error_percentiles, m)?)?;
    m.add_class::<PyLibrary>()?;
    m.add_class::<PyPredictor>()?;
    Ok(())
}
