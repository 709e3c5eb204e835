use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

fn with_module<R>(f: impl FnOnce(Python<'_>, &Bound<'_, PyModule>) -> R) -> R {
    Python::initialize();
    Python::attach(|py| {
        let m = pyo3::wrap_pymodule!(dpgwave::dpgwave)(py);
        let m = m.bind(py).cast::<PyModule>().unwrap().clone();
        f(py, &m)
    })
}

#[test]
fn functions_are_exported() {
    with_module(|_, m| {
        let v: f64 = m.getattr("v_number").unwrap().call1((1.064, 12.7, 0.059)).unwrap().extract().unwrap();
        assert!((v - 4.43).abs() < 0.01);
        let marks: Vec<usize> = m.getattr("dorfler_mark").unwrap().call1((vec![(0usize, 3.0), (1, 2.0), (2, 1.0)], 0.5)).unwrap().extract().unwrap();
        assert_eq!(marks, vec![0]);
        let modes = m.getattr("slab_modes").unwrap().call1((4.9,)).unwrap();
        assert_eq!(modes.cast::<PyList>().unwrap().len(), 4);
    });
}

#[test]
fn solve_mode_returns_observables() {
    with_module(|_, m| {
        let out = m.getattr("solve_mode").unwrap().call1((1usize, 2usize, 2usize)).unwrap();
        let d = out.cast::<PyDict>().unwrap();
        let err: f64 = d.get_item("rel_error_pct").unwrap().unwrap().extract().unwrap();
        assert!(err > 0.0 && err < 10.0);
        let dofs: usize = d.get_item("dofs").unwrap().unwrap().extract().unwrap();
        assert!(dofs > 0);
    });
}

#[test]
fn errors_map_to_python_exceptions() {
    with_module(|py, m| {
        let e = m.getattr("dorfler_mark").unwrap().call1((Vec::<(usize, f64)>::new(), 0.5)).unwrap_err();
        assert!(e.is_instance_of::<pyo3::exceptions::PyValueError>(py));
        let e = m.getattr("run_experiment").unwrap().call1(("nonsense", "/tmp")).unwrap_err();
        assert!(e.is_instance_of::<pyo3::exceptions::PyValueError>(py));
    });
}
