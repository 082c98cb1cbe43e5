"""Cotangent coordinate maps, exponential maps, and generalized segments.

The nondegeneracy matrix at an admissible triple is

    E_ij = d2G/dx^i dxbar^j - (d2G/dx^i dz)(dG/dxbar^j) / (dG/dz),

an n x n matrix in chart coordinates whose invertibility makes the two
coordinate maps

    p    = -(dG/dxbar) / (dG/dz)        (covector at xbar)
    pbar =  dG/dx  at z = H(x, xbar, u) (covector at x)

local diffeomorphisms: the jacobian of x -> p is -E^T / G_z and the
jacobian of xbar -> pbar is E evaluated at z = H(x, xbar, u).

The exponential maps invert them: ``exp_source`` solves p(x) = p for x by
damped Newton, ``exp_target`` jointly solves (dG/dx, G)(x, xbar, z) =
(pbar, u) for (xbar, z).  A *segment* is a curve whose image under the
relevant coordinate map is a straight line; its velocity has the closed
forms

    xdot(s)    = -G_z(x(s), xbar0, z0) (E^T)^{-1} (p1 - p0)
    xbardot(t) = E^{-1}(x0, xbar(t), z(t)) (pbar1 - pbar0)
    zdot(t)    = < p(x0; xbar(t), z(t)), xbardot(t) >.

Everything is batched over a leading sample axis; Newton solves run all
samples simultaneously with per-sample damping.
"""

from dataclasses import dataclass, field

import numpy as np

from .config import DEFAULT_TOLS
from .errors import ConvergenceError, DomainError
from .genfun import GenFun

__all__ = [
    "e_matrix", "p_map", "pbar_map", "exp_source", "exp_target",
    "g_segment", "segment_velocity", "GSegment", "comparability_report",
]


# ---------------------------------------------------------------------------
# pointwise maps
# ---------------------------------------------------------------------------


def e_matrix(gf: GenFun, x, xbar, z, adjoint=False, check=True):
    """Nondegeneracy matrix E (or its adjoint E^T) at an admissible triple."""
    single = np.asarray(x).ndim == 1
    x, xbar, z, _ = gf._batch(x, xbar, z)
    if check and not np.all(gf._in_domain(x, xbar, z)):
        raise DomainError(f"{gf.name}: e_matrix at inadmissible triple")
    Gxb = gf.d_x_xbar(x, xbar, z)
    Gxz = gf.d_x_z(x, xbar, z)
    Gb = gf.d_xbar(x, xbar, z)
    Gz = gf.g_z(x, xbar, z)
    E = Gxb - Gxz[:, :, None] * Gb[:, None, :] / Gz[:, None, None]
    if adjoint:
        E = np.swapaxes(E, 1, 2)
    return E[0] if single else E


def p_map(gf: GenFun, xbar, z, x, check=True):
    """Source coordinate map p = -(dG/dxbar)/(dG/dz) at (x, xbar, z)."""
    single = np.asarray(x).ndim == 1
    x, xbar, z, _ = gf._batch(x, xbar, z)
    if check and not np.all(gf._in_domain(x, xbar, z)):
        raise DomainError(f"{gf.name}: p_map at inadmissible triple")
    p = -gf.d_xbar(x, xbar, z) / gf.g_z(x, xbar, z)[:, None]
    return p[0] if single else p


def pbar_map(gf: GenFun, x, u, xbar):
    """Target coordinate map pbar = dG/dx at z = H(x, xbar, u)."""
    single = np.asarray(x).ndim == 1
    x, xbar, u, _ = gf._batch(x, xbar, u)
    z = gf.inverse(x, xbar, u)
    pb = gf.d_x(x, xbar, np.atleast_1d(z))
    return pb[0] if single else pb


# ---------------------------------------------------------------------------
# batched damped Newton
# ---------------------------------------------------------------------------


def _newton(residual_and_jac, y0, project, tols, label):
    """Damped Newton on a batch of independent small systems.

    residual_and_jac(y) -> (r, J) with r (m, k) and J (m, k, k), evaluated
    at full batch width every call; ``project`` clips iterates back into
    chart validity (may be None).  Converges each sample to
    ||r||_inf <= tols.exp_residual; raises ConvergenceError otherwise.
    """
    y = y0.copy()
    m = y.shape[0]
    r, J = _residual_safe(residual_and_jac, y)
    best = np.max(np.abs(r), axis=1)
    for _ in range(tols.newton_max_iter):
        active = best > tols.exp_residual
        if not np.any(active):
            return y
        step = np.zeros_like(y)
        try:
            step[active] = np.linalg.solve(J[active], r[active][:, :, None])[:, :, 0]
        except np.linalg.LinAlgError as e:
            raise ConvergenceError(f"{label}: singular jacobian in Newton solve") from e
        if not np.all(np.isfinite(step)):
            raise ConvergenceError(f"{label}: non-finite Newton step")
        scale = np.where(active, 1.0, 0.0)
        accepted = ~active
        trial = y.copy()
        for _ in range(tols.newton_max_halvings):
            cand = y - scale[:, None] * step
            if project is not None:
                cand = project(cand)
            rc, _ = _residual_safe(residual_and_jac, cand)
            better = (np.max(np.abs(rc), axis=1) < best) & ~accepted
            trial[better] = cand[better]
            accepted |= better
            if np.all(accepted):
                break
            scale = np.where(accepted, scale, scale * 0.5)
        if not np.all(accepted):
            # a residual that refuses to decrease even at tiny steps
            raise ConvergenceError(f"{label}: Newton stalled (damping exhausted)")
        y = trial
        r, J = _residual_safe(residual_and_jac, y)
        best = np.max(np.abs(r), axis=1)
    raise ConvergenceError(
        f"{label}: Newton exceeded {tols.newton_max_iter} iterations "
        f"(worst residual {best.max():.3e})")


def _residual_safe(fn, y):
    r, J = fn(y)
    bad = ~np.all(np.isfinite(r), axis=1)
    if np.any(bad):
        r = r.copy()
        r[bad] = np.inf
    return r, J


def _feasible_source_start(gf, xbar, z, m):
    """Pick an admissible Newton start per sample.

    The chart center is not always admissible for a given (xbar, z) (e.g.
    parallel-beam pieces are only admissible near their focus), so fall
    back through a short list of candidate starts.
    """
    chart = gf.source_chart
    cands = [np.broadcast_to(chart.center, (m, chart.dim)).copy()]
    if chart.embdim == gf.target_chart.embdim and hasattr(chart, "clip"):
        cands.append(chart.clip(chart.coords(xbar)) * 0.98)
    rng = np.random.default_rng(0)
    span = chart.hi - chart.lo
    for _ in range(6):
        cands.append(np.broadcast_to(
            chart.lo + rng.uniform(0.15, 0.85, chart.dim) * span, (m, chart.dim)).copy())
    c0 = cands[0]
    settled = gf._in_domain(chart.embed(c0), xbar, z)
    for cand in cands[1:]:
        if np.all(settled):
            break
        ok = gf._in_domain(chart.embed(cand), xbar, z) & ~settled
        c0[ok] = cand[ok]
        settled |= ok
    if not np.all(settled):
        raise DomainError(f"{gf.name}: exp_source found no admissible starting point")
    return c0


def exp_source(gf: GenFun, xbar, z, p, x_guess=None, tols=None):
    """Invert the source coordinate map: find x with p(x; xbar, z) = p.

    Newton iterates run in source chart coordinates with jacobian
    -E^T / G_z; iterates are clipped to the chart and a warm start may be
    supplied.  Returns embedded source points.
    """
    tols = tols or gf.tols
    single = np.asarray(p).ndim == 1
    p = np.atleast_2d(np.asarray(p, dtype=float))
    m = p.shape[0]
    xbar = np.broadcast_to(np.atleast_2d(np.asarray(xbar, dtype=float)),
                           (m, gf.target_chart.embdim)).copy()
    z = np.broadcast_to(np.atleast_1d(np.asarray(z, dtype=float)), (m,)).copy()
    chart = gf.source_chart
    if x_guess is None:
        c0 = _feasible_source_start(gf, xbar, z, m)
    else:
        c0 = np.atleast_2d(chart.coords(np.asarray(x_guess, dtype=float)))
        c0 = np.broadcast_to(c0, (m, chart.dim)).copy()

    def rj(c):
        x = chart.embed(c)
        ok = gf._in_domain(x, xbar, z)
        r = np.full((c.shape[0], gf.dim), np.inf)
        J = np.broadcast_to(np.eye(gf.dim), (c.shape[0], gf.dim, gf.dim)).copy()
        if np.any(ok):
            xo, xbo, zo = x[ok], xbar[ok], z[ok]
            Gz = gf.g_z(xo, xbo, zo)
            r[ok] = -gf.d_xbar(xo, xbo, zo) / Gz[:, None] - p[ok]
            E = e_matrix(gf, xo, xbo, zo, check=False)
            J[ok] = -np.swapaxes(E, 1, 2) / Gz[:, None, None]
        return r, J

    c = _newton(rj, c0, getattr(chart, "clip", None) and chart.clip, tols,
                f"{gf.name}: exp_source")
    x = chart.embed(c)
    if not np.all(gf._in_domain(x, xbar, z)):
        raise DomainError(f"{gf.name}: exp_source converged outside the admissible set")
    return x[0] if single else x


def exp_target(gf: GenFun, x, u, pbar, xbar_guess=None, z_guess=None, tols=None):
    """Invert the target map: find (xbar, z) with (dG/dx, G)(x, xbar, z) = (pbar, u).

    Joint (n+1)-dimensional damped Newton.  Returns (xbar, z) with the
    residual below tolerance; z additionally satisfies z = H(x, xbar, u) to
    the same tolerance.
    """
    tols = tols or gf.tols
    single = np.asarray(pbar).ndim == 1
    pbar = np.atleast_2d(np.asarray(pbar, dtype=float))
    m = pbar.shape[0]
    x = np.broadcast_to(np.atleast_2d(np.asarray(x, dtype=float)),
                        (m, gf.source_chart.embdim)).copy()
    u = np.broadcast_to(np.atleast_1d(np.asarray(u, dtype=float)), (m,)).copy()
    chart = gf.target_chart
    n = gf.dim
    if xbar_guess is None:
        cb0 = np.broadcast_to(chart.center, (m, n)).copy()
    else:
        cb0 = np.atleast_2d(chart.coords(np.asarray(xbar_guess, dtype=float)))
        cb0 = np.broadcast_to(cb0, (m, n)).copy()
    if z_guess is None:
        z0 = gf.inverse(x, chart.embed(cb0), u)
    else:
        z0 = np.broadcast_to(np.atleast_1d(np.asarray(z_guess, dtype=float)), (m,)).copy()
    y0 = np.concatenate([cb0, np.atleast_1d(z0)[:, None]], axis=1)

    def project(y):
        y = y.copy()
        if hasattr(chart, "clip"):
            y[:, :n] = chart.clip(y[:, :n])
        return y

    def rj(y):
        cb, z = y[:, :n], y[:, n]
        xb = chart.embed(cb)
        ok = gf._in_domain(x, xb, z)
        r = np.full((y.shape[0], n + 1), np.inf)
        J = np.broadcast_to(np.eye(n + 1), (y.shape[0], n + 1, n + 1)).copy()
        if np.any(ok):
            xo, xbo, zo = x[ok], xb[ok], z[ok]
            r_ok = np.empty((xo.shape[0], n + 1))
            r_ok[:, :n] = gf.d_x(xo, xbo, zo) - pbar[ok]
            r_ok[:, n] = gf.value(xo, xbo, zo, check=False) - u[ok]
            Jb = chart.jacobian(cb[ok])
            J_ok = np.empty((xo.shape[0], n + 1, n + 1))
            # rows 0..n-1: d(dG/dx)/d(cbar, z); row n: d(G)/d(cbar, z)
            M = gf._batch(xo, xbo, zo)[:3]
            DxDb = gf.d_x_xbar(*M)
            J_ok[:, :n, :n] = DxDb
            J_ok[:, :n, n] = gf.d_x_z(*M)
            J_ok[:, n, :n] = gf.d_xbar(*M)
            J_ok[:, n, n] = gf.g_z(*M)
            r[ok] = r_ok
            J[ok] = J_ok
        return r, J

    y = _newton(rj, y0, project, tols, f"{gf.name}: exp_target")
    xb = chart.embed(y[:, :n])
    z = y[:, n]
    if not np.all(gf._in_domain(x, xb, z)):
        raise DomainError(f"{gf.name}: exp_target converged outside the admissible set")
    if single:
        return xb[0], float(z[0])
    return xb, z


# ---------------------------------------------------------------------------
# segments
# ---------------------------------------------------------------------------


@dataclass
class GSegment:
    """A sampled straight line in cotangent coordinates.

    ``kind`` is "source" (x(s) with respect to a fixed (xbar, z)) or
    "target" ((xbar(t), z(t)) with respect to a fixed (x, u)).  Caches are
    immutable after construction; ``well_defined`` is False when some
    interior sample failed to invert, with the failing parameters listed in
    ``failures``.
    """

    gf: GenFun
    kind: str
    anchor: tuple
    s_grid: np.ndarray
    p0: np.ndarray
    p1: np.ndarray
    points: np.ndarray          # (k, embdim) source points or target points
    z_values: np.ndarray | None  # (k,) for target kind
    well_defined: bool
    failures: list = field(default_factory=list)

    def p_at(self, s):
        s = np.asarray(s, dtype=float)
        return (1.0 - s)[..., None] * self.p0 + s[..., None] * self.p1

    def point_at(self, s):
        """Re-invert at arbitrary s, warm-started from the nearest cache."""
        i = int(np.argmin(np.abs(self.s_grid - s)))
        p = self.p_at(np.atleast_1d(float(s)))
        if self.kind == "source":
            xbar, z = self.anchor
            return exp_source(self.gf, xbar, z, p, x_guess=self.points[i])[0]
        x, u = self.anchor
        xb, z = exp_target(self.gf, x, u, p, xbar_guess=self.points[i],
                           z_guess=self.z_values[i])
        return xb[0], float(z[0])

    def to_csv(self, path):
        k = self.s_grid.shape[0]
        p = self.p_at(self.s_grid)
        cols = [self.s_grid] + list(self.points.T) + list(p.T)
        header = ["s"] + [f"x{i}" for i in range(self.points.shape[1])] \
            + [f"p{i}" for i in range(p.shape[1])]
        if self.z_values is not None:
            cols.append(self.z_values)
            header.append("z")
        np.savetxt(path, np.column_stack(cols), delimiter=",",
                   header=",".join(header), comments="")


def g_segment(gf: GenFun, kind, endpoints, anchor, s_grid=None, tols=None) -> GSegment:
    """Build a segment between two admissible endpoints.

    For ``kind="source"`` the endpoints are source points and the anchor is
    (xbar, z); for ``kind="target"`` the endpoints are target points and the
    anchor is (x, u).  Endpoint inadmissibility raises DomainError; an
    interior sample that fails to invert flags well_defined=False instead.
    """
    tols = tols or gf.tols
    if s_grid is None:
        s_grid = np.linspace(0.0, 1.0, 33)
    s_grid = np.asarray(s_grid, dtype=float)
    a, b = (np.asarray(e, dtype=float) for e in endpoints)

    if kind == "source":
        xbar, z = anchor
        xbar = np.asarray(xbar, dtype=float)
        for e in (a, b):
            if not gf.in_domain(e, xbar, z):
                raise DomainError(f"{gf.name}: segment endpoint not admissible")
        p0 = p_map(gf, xbar, z, a)
        p1 = p_map(gf, xbar, z, b)
        pts = np.empty((s_grid.shape[0], gf.source_chart.embdim))
        ok = True
        failures = []
        prev = a
        for i, s in enumerate(s_grid):
            p = (1.0 - s) * p0 + s * p1
            try:
                prev = exp_source(gf, xbar, z, p[None, :], x_guess=prev, tols=tols)[0]
                pts[i] = prev
            except (ConvergenceError, DomainError):
                pts[i] = np.nan
                ok = False
                failures.append(float(s))
        seg = GSegment(gf, "source", (xbar, float(z)), s_grid, p0, p1, pts, None,
                       ok, failures)
    elif kind == "target":
        x, u = anchor
        x = np.asarray(x, dtype=float)
        z_ends = [gf.inverse(x, e, u) for e in (a, b)]
        for e, ze in zip((a, b), z_ends):
            if not gf.in_domain(x, e, ze):
                raise DomainError(f"{gf.name}: segment endpoint not admissible")
        p0 = pbar_map(gf, x, u, a)
        p1 = pbar_map(gf, x, u, b)
        pts = np.empty((s_grid.shape[0], gf.target_chart.embdim))
        zs = np.empty(s_grid.shape[0])
        ok = True
        failures = []
        prev_xb, prev_z = a, z_ends[0]
        for i, t in enumerate(s_grid):
            pb = (1.0 - t) * p0 + t * p1
            try:
                xb, zz = exp_target(gf, x, u, pb[None, :], xbar_guess=prev_xb,
                                    z_guess=prev_z, tols=tols)
                prev_xb, prev_z = xb[0], float(zz[0])
                pts[i] = prev_xb
                zs[i] = prev_z
            except (ConvergenceError, DomainError):
                pts[i] = np.nan
                zs[i] = np.nan
                ok = False
                failures.append(float(t))
        seg = GSegment(gf, "target", (x, float(u)), s_grid, p0, p1, pts, zs,
                       ok, failures)
    else:
        raise ValueError("kind must be 'source' or 'target'")
    return seg


def segment_velocity(seg: GSegment, s):
    """Closed-form segment velocity at parameter s.

    Source kind returns xdot(s) in source chart coordinates; target kind
    returns (xbardot(t), zdot(t)) with xbardot in target chart coordinates.
    """
    gf = seg.gf
    dp = seg.p1 - seg.p0
    if seg.kind == "source":
        xbar, z = seg.anchor
        x = seg.point_at(s)
        Gz = gf.g_z(x, xbar, z)
        Et = e_matrix(gf, x, xbar, z, adjoint=True)
        return -Gz * np.linalg.solve(Et, dp)
    x, u = seg.anchor
    xb, z = seg.point_at(s)
    E = e_matrix(gf, x, xb, z)
    xbdot = np.linalg.solve(E, dp)
    p = p_map(gf, xb, z, x)
    return xbdot, float(p @ xbdot)


# ---------------------------------------------------------------------------
# comparability diagnostic
# ---------------------------------------------------------------------------


def comparability_report(gf: GenFun, xbar, z, n_pairs=400, seed=0):
    """Bi-Lipschitz spread of the source coordinate map at a fixed (xbar, z).

    Samples point pairs in the source domain and returns the min/max of
    |p(x1) - p(x2)| / dist(x1, x2) together with the implied two-sided
    constant C = sqrt(max/min).
    """
    rng = np.random.default_rng(seed)
    xs1 = gf.source_chart.sample(n_pairs, rng)
    xs2 = gf.source_chart.sample(n_pairs, rng)
    xbar = np.asarray(xbar, dtype=float)
    keep = (gf.in_domain(xs1, np.broadcast_to(xbar, xs1.shape[:1] + xbar.shape), z)
            & gf.in_domain(xs2, np.broadcast_to(xbar, xs2.shape[:1] + xbar.shape), z))
    xs1, xs2 = xs1[keep], xs2[keep]
    d = np.linalg.norm(gf.source_chart.coords(xs1) - gf.source_chart.coords(xs2), axis=1)
    good = d > 1e-9
    xs1, xs2, d = xs1[good], xs2[good], d[good]
    p1 = p_map(gf, xbar, z, xs1)
    p2 = p_map(gf, xbar, z, xs2)
    ratio = np.linalg.norm(p1 - p2, axis=1) / d
    return {"n_pairs": int(ratio.size),
            "ratio_min": float(ratio.min()),
            "ratio_max": float(ratio.max()),
            "two_sided_constant": float(np.sqrt(ratio.max() / ratio.min()))}
