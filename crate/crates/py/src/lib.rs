//! Python bindings for the `morlicz` crate.
//!
//! Build with `cargo build -p morlicz-py --release` and import the resulting
//! shared library as `morlicz_py` (see `python/smoke_test.py`).

use morlicz::fields::{sample_named, Domain, Grid, MagneticPotential};
use morlicz::limits;
use morlicz::modulars::{self, ModularKind, ModularSpec};
use morlicz::orlicz::{limit_function, OrliczFunction};
use morlicz::selftest;
use morlicz::solver::{DirichletProblem, Order};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn py_err(e: morlicz::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn family(spec: &str) -> PyResult<OrliczFunction> {
    OrliczFunction::parse(spec).map_err(py_err)
}

/// `(G(t), g(t))` for a named family.
#[pyfunction]
fn orlicz_eval(spec: &str, t: f64) -> PyResult<(f64, f64)> {
    family(spec)?.evaluate(t).map_err(py_err)
}

/// Spherical limit `G̃(a)` in dimension `dim`.
#[pyfunction]
#[pyo3(signature = (spec, a, dim = 1))]
fn gtilde(spec: &str, a: f64, dim: usize) -> PyResult<f64> {
    Ok(limit_function(&family(spec)?, dim).map_err(py_err)?.value(a))
}

/// A modular of a named test field on `[-L, L]^n` with `points` nodes per axis.
#[pyfunction]
#[pyo3(signature = (spec, field, kind, s = None, potential = "zero", dim = 1, half_width = 6.0, points = 512))]
#[allow(clippy::too_many_arguments)]
fn modular(
    spec: &str,
    field: &str,
    kind: &str,
    s: Option<f64>,
    potential: &str,
    dim: usize,
    half_width: f64,
    points: usize,
) -> PyResult<f64> {
    let f = family(spec)?;
    let grid = Grid::new(dim, half_width, points).map_err(py_err)?;
    let u = sample_named(field, &grid).map_err(py_err)?;
    let a = MagneticPotential::parse(potential, dim, half_width).map_err(py_err)?;
    let kind = ModularKind::parse(kind).map_err(py_err)?;
    let spec = ModularSpec { kind, s, potential: Some(a), cfg: Default::default() };
    Ok(modulars::evaluate(&f, &u, &spec).map_err(py_err)?.value)
}

/// Result of a ladder sweep.
#[pyclass(get_all, frozen)]
struct Sweep {
    s_ladder: Vec<f64>,
    scaled_values: Vec<f64>,
    target: f64,
    extrapolated: f64,
    rel_gap: f64,
}

#[pymethods]
impl Sweep {
    fn __repr__(&self) -> String {
        format!("Sweep(extrapolated={}, target={}, rel_gap={})", self.extrapolated, self.target, self.rel_gap)
    }
}

/// `(1 − s) I_{s,G}^A(u)` over a ladder and its extrapolation to `s = 1`.
#[pyfunction]
#[pyo3(signature = (spec, field, ladder, potential = "zero", dim = 1, half_width = 6.0, points = 512))]
fn bbm_sweep(
    spec: &str,
    field: &str,
    ladder: Vec<f64>,
    potential: &str,
    dim: usize,
    half_width: f64,
    points: usize,
) -> PyResult<Sweep> {
    let f = family(spec)?;
    let grid = Grid::new(dim, half_width, points).map_err(py_err)?;
    let u = sample_named(field, &grid).map_err(py_err)?;
    let a = MagneticPotential::parse(potential, dim, half_width).map_err(py_err)?;
    let r = limits::bbm_sweep(&f, &u, &a, &ladder, &Default::default()).map_err(py_err)?;
    Ok(Sweep {
        s_ladder: r.s_ladder,
        scaled_values: r.scaled_values,
        target: r.target,
        extrapolated: r.extrapolated,
        rel_gap: r.rel_gap,
    })
}

/// Minimizer of a Dirichlet problem.
#[pyclass(get_all, frozen)]
struct Solution {
    energy: f64,
    gradient_norm: f64,
    iterations: usize,
    converged: bool,
    x: Vec<f64>,
    re: Vec<f64>,
    im: Vec<f64>,
}

#[pymethods]
impl Solution {
    fn __repr__(&self) -> String {
        format!("Solution(energy={}, iterations={}, converged={})", self.energy, self.iterations, self.converged)
    }
}

/// One-dimensional Dirichlet problem on `omega = (a, b)`; local when `s` is `None`.
#[pyfunction]
#[pyo3(signature = (spec, source = "const:1", omega = "-1:1", s = None, potential = "zero", points = 256))]
fn solve(spec: &str, source: &str, omega: &str, s: Option<f64>, potential: &str, points: usize) -> PyResult<Solution> {
    let f = family(spec)?;
    let dom = Domain::parse(omega, 1).map_err(py_err)?;
    let (lo, hi) = dom.bounds();
    let grid = Grid::with_boundary_nodes(1, points, lo[0].abs().max(hi[0].abs()), 3).map_err(py_err)?;
    let src = sample_named(source, &grid).map_err(py_err)?;
    let a = MagneticPotential::parse(potential, 1, grid.half_width()).map_err(py_err)?;
    let order = s.map_or(Order::Local, Order::Fractional);
    let r = DirichletProblem::new(f, a, &src, dom, order).and_then(|p| p.solve()).map_err(py_err)?;
    let vals = r.minimizer.values();
    Ok(Solution {
        energy: r.energy,
        gradient_norm: r.gradient_norm,
        iterations: r.iterations,
        converged: r.converged,
        x: (0..grid.len()).map(|i| grid.point(i)[0]).collect(),
        re: vals.iter().map(|v| v.re).collect(),
        im: vals.iter().map(|v| v.im).collect(),
    })
}

/// The invariant battery as `(name, value, passed)` triples.
#[pyfunction]
#[pyo3(signature = (fast = true, seed = morlicz::cli::DEFAULT_SEED))]
fn run_selftest(py: Python<'_>, fast: bool, seed: u64) -> PyResult<Vec<(String, f64, bool)>> {
    let checks = py.detach(|| selftest::run_selftest(fast, seed)).map_err(py_err)?;
    Ok(checks.into_iter().map(|c| (c.name, c.value, c.pass)).collect())
}

#[pymodule]
pub fn morlicz_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(orlicz_eval, m)?)?;
    m.add_function(wrap_pyfunction!(gtilde, m)?)?;
    m.add_function(wrap_pyfunction!(modular, m)?)?;
    m.add_function(wrap_pyfunction!(bbm_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(run_selftest, m)?)?;
    m.add_class::<Sweep>()?;
    m.add_class::<Solution>()?;
    Ok(())
}
