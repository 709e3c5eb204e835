"""Smoke test for the dpgwave extension module.

Build and install the module first, e.g.
    maturin develop -m crates/py/Cargo.toml --release
then run `python python/smoke_test.py` or `pytest python/`.
"""

import json
import math
import tempfile
from pathlib import Path

import dpgwave


def test_mesh_refinement():
    mesh = dpgwave.Mesh(2, 4, 2, 2)
    assert mesh.dim == 2 and mesh.n_active == 16
    assert math.isclose(mesh.length, 2.0)
    mesh.refine([mesh.active_ids()[0]], "iso")
    assert mesh.n_active == 19
    assert "elements" in json.loads(mesh.to_json())


def test_solve_mode_1d_is_accurate():
    out = dpgwave.solve_mode(1, 4, 2, epw=4, enrichment=2)
    assert out["rel_error_pct"] < 2.0
    eta2 = sum(e * e for _, e in out["indicators"])
    assert math.isclose(eta2, out["residual"] ** 2, rel_tol=1e-10)


def test_dorfler_and_modes():
    assert dpgwave.dorfler_mark([(0, 3.0), (1, 2.0), (2, 1.0)], 0.5) == [0]
    assert abs(dpgwave.v_number(1.064, 12.7, 0.059) - 4.43) < 0.01
    modes = dpgwave.slab_modes(4.9)
    assert len(modes) == 4
    conf = [m["confinement"] for m in modes]
    assert conf == sorted(conf, reverse=True)


def test_bad_input_raises_value_error():
    for call in (lambda: dpgwave.dorfler_mark([], 0.5), lambda: dpgwave.Mesh(0, 4, 0, 2)):
        try:
            call()
        except ValueError:
            pass
        else:
            raise AssertionError("expected ValueError")


def test_run_experiment_writes_tables():
    cfg = "[stability]\nepw = [2, 4]\n"
    with tempfile.TemporaryDirectory() as tmp:
        manifest = json.loads(dpgwave.run_experiment("stability", tmp, cfg))
        assert manifest["files"] == ["stability.csv"]
        lines = (Path(tmp) / "stability.csv").read_text().splitlines()
        assert lines[0] == "omega,p,elements,gamma_h,continuity,dofs"
        assert len(lines) == 3
    assert "[pollution]" in dpgwave.default_config()


if __name__ == "__main__":
    for name, fn in list(globals().items()):
        if name.startswith("test_") and callable(fn):
            fn()
            print(f"ok {name}")
