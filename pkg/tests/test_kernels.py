import os
import subprocess
import sys

import numpy as np
import pytest

from gjekit import kernels
from gjekit.builtins import make_builtin
from gjekit.charts import BoxChart
from gjekit.demos import violator_genfun
from gjekit.grids import DomainGrid


def _cases():
    out = []
    for kind, build in [
        ("ql_bilinear", lambda: make_builtin("quasilinear")),
        ("ql_neglog", lambda: __import__("gjekit.demos", fromlist=["x"]).far_field_genfun()),
        ("ql_cubic", lambda: violator_genfun(eps=2.0, half=0.8)),
        ("point_source", lambda: make_builtin("point_source")),
        ("pb_zero", lambda: make_builtin("parallel_beam")),
        ("minkowski", lambda: make_builtin("minkowski")),
    ]:
        gf = build()
        tag, _ = kernels.kernel_tag(gf)
        assert tag == kind
        out.append(gf)
    return out


@pytest.mark.parametrize("gf", _cases(), ids=lambda g: g.name)
def test_numba_and_numpy_paths_agree(gf):
    rng = np.random.default_rng(0)
    grid = DomainGrid(gf.source_chart, 24)
    xbars = gf.target_chart.sample(5, rng)
    zs = np.array([0.7, 0.8, 0.9, 1.0, 1.1])
    tie = 1e-9
    for i in range(5):
        v1 = kernels.piece_values(gf, grid.points, xbars[i], zs[i], use_numba=True)
        v2 = kernels.piece_values(gf, grid.points, xbars[i], zs[i], use_numba=False)
        both = np.isfinite(v1) & np.isfinite(v2)
        assert np.array_equal(np.isfinite(v1), np.isfinite(v2))
        assert np.max(np.abs(v1[both] - v2[both]), initial=0.0) < 1e-14
    b1, i1 = kernels.envelope_scan(gf, grid.points, xbars, zs, tie, use_numba=True)
    b2, i2 = kernels.envelope_scan(gf, grid.points, xbars, zs, tie, use_numba=False)
    covered = i2 >= 0
    assert np.array_equal(i1, i2)
    assert np.max(np.abs(b1[covered] - b2[covered]), initial=0.0) < 1e-14
    if np.any(covered):
        w = grid.weights
        m1 = kernels.piece_mass(gf, grid.points, w, b2, i2, 0, xbars[0], zs[0],
                                tie, use_numba=True)
        m2 = kernels.piece_mass(gf, grid.points, w, b2, i2, 0, xbars[0], zs[0],
                                tie, use_numba=False)
        assert np.isclose(m1, m2, rtol=0, atol=1e-12)


def test_kernel_matches_evaluator():
    gf = make_builtin("point_source")
    grid = DomainGrid(gf.source_chart, 32)
    rng = np.random.default_rng(1)
    xb = gf.target_chart.sample(1, rng)[0]
    z = 0.8
    v = kernels.piece_values(gf, grid.points, xb, z)
    m = grid.n_cells
    ref = gf.value(grid.points, np.broadcast_to(xb, (m, 3)).copy(),
                   np.full(m, z), check=False)
    assert np.max(np.abs(v - ref)) < 1e-13


def test_generic_fallback_path():
    # untagged generating function goes through the evaluator-driven path
    gf = make_builtin("quasilinear", cost=lambda x, xb: float(np.sum((x - xb) ** 2)))
    tag, _ = kernels.kernel_tag(gf)
    assert tag is None
    grid = DomainGrid(gf.source_chart, 12)
    v = kernels.piece_values(gf, grid.points, np.array([0.1, 0.2]), 0.3)
    assert np.all(np.isfinite(v))


def test_env_flag_disables_numba():
    code = (
        "import os; os.environ['GJEKIT_NO_NUMBA'] = '1';\n"
        "from gjekit import kernels\n"
        "assert kernels.NUMBA_ENABLED is False\n"
        "import numpy as np\n"
        "from gjekit.builtins import make_builtin\n"
        "from gjekit.grids import DomainGrid\n"
        "gf = make_builtin('quasilinear')\n"
        "g = DomainGrid(gf.source_chart, 8)\n"
        "v = kernels.piece_values(gf, g.points, np.array([0.1, 0.2]), 0.3)\n"
        "assert np.all(np.isfinite(v))\n"
        "print('numpy-path-ok')\n"
    )
    res = subprocess.run([sys.executable, "-c", code], capture_output=True,
                         text=True, env={**os.environ, "GJEKIT_NO_NUMBA": "1"})
    assert res.returncode == 0, res.stderr
    assert "numpy-path-ok" in res.stdout
