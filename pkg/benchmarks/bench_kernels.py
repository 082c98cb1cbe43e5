#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallback.

Runs the three hot kernels (piece evaluation, envelope scan, cell-mass
reduction) on solver-scale grids for every built-in kernel tag and prints a
table of timings and speedups.  The numpy path is the one selected by
GJEKIT_NO_NUMBA=1 at import time; here both are invoked explicitly.

Usage: python benchmarks/bench_kernels.py [--resolution 256] [--repeat 5]
"""

import argparse
import time

import numpy as np

from gjekit import kernels
from gjekit.builtins import make_builtin
from gjekit.demos import far_field_genfun, violator_genfun
from gjekit.grids import DomainGrid


def _time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench(resolution, repeat):
    cases = [
        make_builtin("quasilinear"),
        far_field_genfun(),
        violator_genfun(eps=2.0, half=0.8),
        make_builtin("point_source"),
        make_builtin("parallel_beam"),
        make_builtin("minkowski"),
    ]
    rng = np.random.default_rng(0)
    print(f"{'kernel':<16} {'op':<14} {'numpy':>10} {'numba':>10} {'speedup':>8}")
    print("-" * 62)
    for gf in cases:
        tag, _ = kernels.kernel_tag(gf)
        grid = DomainGrid(gf.source_chart, resolution)
        xbars = gf.target_chart.sample(8, rng)
        zs = np.full(8, 0.8)
        tie = 1e-9
        # warm the jit
        kernels.piece_values(gf, grid.points, xbars[0], zs[0], use_numba=True)
        kernels.envelope_scan(gf, grid.points, xbars, zs, tie, use_numba=True)
        val_np = _time(lambda: kernels.piece_values(
            gf, grid.points, xbars[0], zs[0], use_numba=False), repeat)
        val_nb = _time(lambda: kernels.piece_values(
            gf, grid.points, xbars[0], zs[0], use_numba=True), repeat)
        print(f"{tag:<16} {'piece_values':<14} {val_np * 1e3:>8.2f}ms "
              f"{val_nb * 1e3:>8.2f}ms {val_np / val_nb:>7.1f}x")
        scan_np = _time(lambda: kernels.envelope_scan(
            gf, grid.points, xbars, zs, tie, use_numba=False), repeat)
        scan_nb = _time(lambda: kernels.envelope_scan(
            gf, grid.points, xbars, zs, tie, use_numba=True), repeat)
        print(f"{tag:<16} {'envelope_scan':<14} {scan_np * 1e3:>8.2f}ms "
              f"{scan_nb * 1e3:>8.2f}ms {scan_np / scan_nb:>7.1f}x")
        best, idx = kernels.envelope_scan(gf, grid.points, xbars, zs, tie,
                                          use_numba=False)
        w = grid.weights
        ok = idx >= 0
        if np.any(ok):
            kernels.piece_mass(gf, grid.points, w, best, idx, 0, xbars[0],
                               zs[0], tie, use_numba=True)
            mass_np = _time(lambda: kernels.piece_mass(
                gf, grid.points, w, best, idx, 0, xbars[0], zs[0], tie,
                use_numba=False), repeat)
            mass_nb = _time(lambda: kernels.piece_mass(
                gf, grid.points, w, best, idx, 0, xbars[0], zs[0], tie,
                use_numba=True), repeat)
            print(f"{tag:<16} {'piece_mass':<14} {mass_np * 1e3:>8.2f}ms "
                  f"{mass_nb * 1e3:>8.2f}ms {mass_np / mass_nb:>7.1f}x")
            # both paths must agree bit-for-bit on the mass
            m1 = kernels.piece_mass(gf, grid.points, w, best, idx, 0,
                                    xbars[0], zs[0], tie, use_numba=False)
            m2 = kernels.piece_mass(gf, grid.points, w, best, idx, 0,
                                    xbars[0], zs[0], tie, use_numba=True)
            assert abs(m1 - m2) <= 1e-12, (tag, m1, m2)


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--resolution", type=int, default=256)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    bench(args.resolution, args.repeat)
