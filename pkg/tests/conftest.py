import numpy as np
import pytest

from gjekit.builtins import make_builtin
from gjekit.demos import TEST_INTERVALS


def sample_admissible(gf, interval, n, seed=0):
    """Admissible (x, xbar, u, z) tuples used across the test modules."""
    rng = np.random.default_rng(seed)
    xs = gf.source_chart.sample(3 * n, rng)
    xbs = gf.target_chart.sample(3 * n, rng)
    us = rng.uniform(interval[0], interval[1], 3 * n)
    keep = np.zeros(3 * n, dtype=bool)
    zs = np.zeros(3 * n)
    for i in range(3 * n):
        try:
            zs[i] = gf.inverse(xs[i], xbs[i], us[i])
            keep[i] = gf.in_domain(xs[i], xbs[i], zs[i])
        except Exception:
            keep[i] = False
    xs, xbs, us, zs = xs[keep][:n], xbs[keep][:n], us[keep][:n], zs[keep][:n]
    assert len(xs) >= min(n, 4), "sampler failed to find admissible tuples"
    return xs, xbs, us, zs


@pytest.fixture(scope="session")
def builtins_all():
    return {
        "quasilinear": make_builtin("quasilinear"),
        "point_source": make_builtin("point_source"),
        "parallel_beam": make_builtin("parallel_beam"),
        "minkowski": make_builtin("minkowski"),
    }


@pytest.fixture(scope="session")
def intervals():
    return TEST_INTERVALS


@pytest.fixture(scope="session")
def solved_point_source_small():
    from gjekit.demos import point_source_8_problem
    from gjekit.solver import solve
    problem, z_true = point_source_8_problem(resolution=96)
    env, state = solve(problem)
    return problem, env, state, z_true


@pytest.fixture(scope="session")
def solved_parallel_beam_small():
    from gjekit.demos import parallel_beam_5_problem
    from gjekit.solver import solve
    problem, z_true = parallel_beam_5_problem(resolution=96)
    env, state = solve(problem)
    return problem, env, state, z_true


@pytest.fixture(scope="session")
def solved_classical_ma_small():
    from gjekit.demos import classical_ma_problem
    from gjekit.solver import solve
    problem, z_true = classical_ma_problem(resolution=96)
    env, state = solve(problem)
    return problem, env, state, z_true
