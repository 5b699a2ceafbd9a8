use morlicz_py::morlicz_py;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn with_module<R>(f: impl FnOnce(Python<'_>, &Bound<'_, PyDict>) -> R) -> R {
    static INIT: std::sync::Once = std::sync::Once::new();
    INIT.call_once(|| {
        pyo3::append_to_inittab!(morlicz_py);
        Python::initialize();
    });
    Python::attach(|py| {
        let globals = PyDict::new(py);
        globals.set_item("m", py.import("morlicz_py").unwrap()).unwrap();
        f(py, &globals)
    })
}

fn eval_f64(code: &str) -> f64 {
    with_module(|py, g| {
        let code = std::ffi::CString::new(code).unwrap();
        py.eval(&code, Some(g), None).unwrap().extract().unwrap()
    })
}

#[test]
fn closed_forms_round_trip_through_python() {
    assert_eq!(eval_f64("m.gtilde('powerp:2', 1.0)"), 1.0);
    assert!((eval_f64("m.gtilde('power:2', 1.0, dim=2)") - std::f64::consts::FRAC_PI_4).abs() < 1e-9);
    assert_eq!(eval_f64("m.orlicz_eval('power:2', 3.0)[1]"), 3.0);
}

#[test]
fn local_solve_from_python() {
    let e = eval_f64("m.solve('power:2').energy");
    assert!((e + 1.0 / 3.0).abs() < 1e-3, "{e}");
}

#[test]
fn errors_become_value_errors() {
    with_module(|py, g| {
        let err = py.eval(c"m.gtilde('nope', 1.0)", Some(g), None).unwrap_err();
        assert!(err.is_instance_of::<pyo3::exceptions::PyValueError>(py));
    });
}
