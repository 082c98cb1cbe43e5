"""Pointwise estimate evaluation: Aleksandrov-type bound, sharp growth,
John ellipsoids, and the engulfing diagnostic.

Both pointwise checks compute every constituent of their inequality on a
solved/constructed envelope and report the implied constant

    aleksandrov:  C = (m(x0) - u(x0))^n * ell / (dist * |S| * |dGu(S)|)
    sharp growth: C = sup_A (m - u)^n / (|A| * |dGu(A)|)

The implied constants are diagnostics; acceptance asserts their stability
across a dyadic family of section heights, never specific values.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateError, HypothesisError, NicenessError
from .expmaps import p_map
from .gconvex import Envelope, GAffine, Section

__all__ = [
    "EstimateRecord", "JohnEllipsoid", "supporting_plane_distance",
    "max_segment_length", "john_ellipsoid", "aleksandrov_check",
    "sharp_growth_check", "engulfing_check", "section_at_height",
]


@dataclass
class EstimateRecord:
    theorem: str
    lhs: float
    factors: dict
    implied_constant: float
    witness: dict = field(default_factory=dict)

    def to_row(self):
        row = {"theorem": self.theorem, "lhs": self.lhs,
               "implied_constant": self.implied_constant}
        row.update({k: v for k, v in self.factors.items() if np.isscalar(v)})
        return row


@dataclass
class JohnEllipsoid:
    center: np.ndarray
    shape: np.ndarray    # E = {x : (x-c)^T shape^{-1} (x-c) <= 1}
    alpha: float
    inner_ok: bool
    outer_ok: bool

    def contains(self, pts, scale=1.0):
        d = np.atleast_2d(pts) - self.center
        q = np.einsum("ij,jk,ik->i", d, np.linalg.inv(self.shape), d)
        return q <= scale ** 2 + 1e-8

    def boundary_points(self, n=256, seed=0):
        rng = np.random.default_rng(seed)
        dim = self.center.shape[0]
        dirs = rng.normal(size=(n, dim))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        L = np.linalg.cholesky(self.shape)
        return self.center + dirs @ L.T


def supporting_plane_distance(cloud, p0, omega):
    """Distance from p0 to the supporting plane of the cloud with outward
    normal omega: the max of <omega, p - p0> over the cloud."""
    cloud = np.atleast_2d(np.asarray(cloud, dtype=float))
    if cloud.shape[0] == 0:
        return 0.0
    omega = np.asarray(omega, dtype=float)
    omega = omega / np.linalg.norm(omega)
    return float(np.max((cloud - np.asarray(p0, dtype=float)) @ omega))


def max_segment_length(cloud, omega, snap=1e-12):
    """Longest chord of hull(cloud) parallel to omega.

    Solved as a linear program over barycentric weights: maximize
    <omega, x - y> over x, y in the hull subject to the transverse
    components of x - y vanishing.
    """
    from scipy.optimize import linprog
    from scipy.spatial import ConvexHull

    cloud = np.atleast_2d(np.asarray(cloud, dtype=float))
    if cloud.shape[0] == 0:
        return 0.0
    omega = np.asarray(omega, dtype=float)
    omega = omega / np.linalg.norm(omega)
    pts = np.round(cloud / snap) * snap
    if pts.shape[0] > pts.shape[1] + 1:
        try:
            pts = pts[ConvexHull(pts).vertices]
        except Exception:
            pass
    k, d = pts.shape
    if k == 1:
        return 0.0
    # variables: weights (lam, mu) >= 0
    basis = _orth_complement(omega)
    c = np.concatenate([-(pts @ omega), pts @ omega])
    A_eq = []
    b_eq = []
    for v in basis:
        A_eq.append(np.concatenate([pts @ v, -(pts @ v)]))
        b_eq.append(0.0)
    A_eq.append(np.concatenate([np.ones(k), np.zeros(k)]))
    b_eq.append(1.0)
    A_eq.append(np.concatenate([np.zeros(k), np.ones(k)]))
    b_eq.append(1.0)
    res = linprog(c, A_eq=np.array(A_eq), b_eq=np.array(b_eq),
                  bounds=[(0, None)] * (2 * k), method="highs")
    if not res.success:
        return 0.0
    return float(max(0.0, -res.fun))


def _orth_complement(omega):
    d = omega.shape[0]
    basis = []
    for i in range(d):
        e = np.zeros(d)
        e[i] = 1.0
        v = e - (e @ omega) * omega
        for b in basis:
            v -= (v @ b) * b
        n = np.linalg.norm(v)
        if n > 1e-10:
            basis.append(v / n)
        if len(basis) == d - 1:
            break
    return basis


# ---------------------------------------------------------------------------
# John ellipsoid (fixed center at the hull's center of mass)
# ---------------------------------------------------------------------------


def _hull_centroid(points):
    """Area/volume centroid of the convex hull of a cloud."""
    from scipy.spatial import ConvexHull, Delaunay
    hull = ConvexHull(points)
    verts = points[hull.vertices]
    tri = Delaunay(verts)
    centroid = np.zeros(points.shape[1])
    total = 0.0
    for simplex in tri.simplices:
        sp = verts[simplex]
        vol = abs(np.linalg.det(sp[1:] - sp[0]))  # simplex volume up to a common factor
        centroid += vol * sp.mean(axis=0)
        total += vol
    if total <= 0:
        raise DegenerateError("hull has no volume")
    return centroid / total


def john_ellipsoid(cloud, tol=1e-7, max_iter=20_000) -> JohnEllipsoid:
    """Minimum-volume ellipsoid about the hull centroid enclosing the cloud.

    Khachiyan-style multiplicative weight updates at fixed center; the
    containment convention alpha(n) = 1/n is verified by membership tests
    on the result (boundary samples of the shrunken ellipsoid must lie in
    the hull).
    """
    from scipy.spatial import Delaunay

    P = np.atleast_2d(np.asarray(cloud, dtype=float))
    n, d = P.shape
    if n <= d or np.linalg.matrix_rank(P - P[0]) < d:
        raise DegenerateError("cloud must affinely span the space")
    c = _hull_centroid(P)
    Q = P - c
    m = Q.shape[0]
    u = np.full(m, 1.0 / m)
    for _ in range(max_iter):
        V = Q.T @ (u[:, None] * Q)
        try:
            Vi = np.linalg.inv(V)
        except np.linalg.LinAlgError as e:
            raise DegenerateError("degenerate weight matrix") from e
        M = np.einsum("ij,jk,ik->i", Q, Vi, Q)
        j = int(np.argmax(M))
        maxM = M[j]
        if maxM <= d * (1.0 + tol):
            break
        step = (maxM - d) / (d * (maxM - 1.0))
        u *= (1.0 - step)
        u[j] += step
    V = Q.T @ (u[:, None] * Q)
    # scale to the worst point so outer containment holds exactly even when
    # the multiplicative updates stop at finite tolerance
    M = np.einsum("ij,jk,ik->i", Q, np.linalg.inv(V), Q)
    shape = float(np.max(M)) * V
    ell = JohnEllipsoid(center=c, shape=shape, alpha=1.0 / d,
                        inner_ok=False, outer_ok=False)
    # outer containment: every point inside E (tolerance 1e-8 scaled)
    dq = np.einsum("ij,jk,ik->i", Q, np.linalg.inv(shape), Q)
    ell.outer_ok = bool(np.max(dq) <= 1.0 + 1e-6)
    # inner containment: boundary of alpha E inside the hull
    tri = Delaunay(P)
    bnd = ell.boundary_points(256)
    shrunk = c + ell.alpha * (bnd - c) * (1.0 - 1e-9)
    ell.inner_ok = bool(np.all(tri.find_simplex(shrunk) >= 0))
    return ell


# ---------------------------------------------------------------------------
# pointwise estimate checks
# ---------------------------------------------------------------------------


def _subdiff_volume(env: Envelope, mask):
    """Target-chart volume of the set of foci active on the masked cells.

    Envelopes built over a regular focus lattice carry the per-focus cell
    volume (``focus_cell_volume``); counting active foci is then nearly
    unbiased.  Otherwise the hull of the active foci approximates the
    continuum image (convex under the standing conditions).
    """
    from scipy.spatial import ConvexHull
    idx = np.unique(env.cell_indices()[mask])
    cellvol = getattr(env, "focus_cell_volume", None)
    if cellvol is not None:
        return float(idx.size * cellvol), idx
    foci = env.gf.target_chart.coords(env.xbars[idx])
    if foci.shape[0] <= foci.shape[1]:
        return 0.0, idx
    try:
        return float(ConvexHull(foci).volume), idx
    except Exception:
        return 0.0, idx


def aleksandrov_check(env: Envelope, m: GAffine, x0, omega,
                      diam_cap=None) -> EstimateRecord:
    """Evaluate every factor of the Aleksandrov-type bound at one section.

    Hypotheses checked: the reference piece stays nice on the domain, the
    section is small (diameter below the cap, default a tenth of the domain
    diameter), and the section's coordinate image fits in a ball B with
    3B inside the domain image.  HypothesisError names the failing clause.
    """
    gf = env.gf
    x0 = np.asarray(x0, dtype=float)
    section = env.section(m)
    if section.empty:
        raise HypothesisError("empty_section")
    if not section.contains(x0):
        raise HypothesisError("x0_not_in_section")
    pts = section.points()
    cs = gf.source_chart.coords(pts)
    diam = 2.0 * float(np.max(np.linalg.norm(cs - cs.mean(axis=0), axis=1)))
    cap = diam_cap if diam_cap is not None else 0.1 * env.grid.chart.diameter()
    if diam > cap:
        raise HypothesisError("section_too_large",
                              f"diam {diam:.3g} > cap {cap:.3g}")
    cloud = section.coord_image()
    dom_cloud = p_map(gf, m.xbar, m.z,
                      env.grid.points[:: max(1, env.grid.n_cells // 4096)])
    center = cloud.mean(axis=0)
    r_s = float(np.max(np.linalg.norm(cloud - center, axis=1)))
    # feasibility of [S] in B, 3B in [Omega]: any B radius in
    # [r_s, r_inside/3] works, where r_inside is the distance from the
    # section image's center to the domain image boundary
    r_inside = _dist_to_cloud_boundary(dom_cloud, center)
    if 3.0 * r_s > r_inside:
        raise HypothesisError("ball_containment",
                              f"need 3B radius {3 * r_s:.3g} <= {r_inside:.3g}")
    u0, _ = env.eval(x0)
    lhs = (m.value(x0) - u0) ** gf.dim
    p0 = p_map(gf, m.xbar, m.z, x0)
    dist = supporting_plane_distance(cloud, p0, omega)
    ell = max_segment_length(cloud, omega, snap=gf.tols.hull_snap)
    vol_s = section.volume()
    vol_sub, idx = _subdiff_volume(env, section.mask)
    rhs_side = dist / max(ell, 1e-300) * vol_s * vol_sub
    implied = lhs / rhs_side if rhs_side > 0 else np.inf
    return EstimateRecord(
        theorem="aleksandrov",
        lhs=float(lhs),
        factors={"plane_distance": dist, "max_segment": ell,
                 "section_volume": vol_s, "subdiff_volume": vol_sub,
                 "section_diameter": diam, "n_active_foci": int(idx.size)},
        implied_constant=float(implied),
        witness={"x0": x0.tolist(), "omega": np.asarray(omega).tolist(),
                 "m_xbar": m.xbar.tolist(), "m_z": float(m.z)})


def _dist_to_cloud_boundary(cloud, center):
    from scipy.spatial import ConvexHull
    try:
        hull = ConvexHull(cloud)
    except Exception:
        return 0.0
    # distance from center to each hull facet
    A = hull.equations[:, :-1]
    b = hull.equations[:, -1]
    return float(np.min(-(A @ center + b)))


def sharp_growth_check(env: Envelope, m: GAffine, set_mask, K=2.0) -> EstimateRecord:
    """Evaluate the sharp growth bound on a masked subset of a section.

    Verifies the dilation condition K M [A] inside [S] (dilation about the
    center of mass of [A]; M = 1 unless a fitted constant is supplied via
    ``env.gf`` attributes) and the depth condition
    sup_A m + sup_A (m - u) < upper scalar bound.
    """
    gf = env.gf
    section = env.section(m)
    if section.empty:
        raise HypothesisError("empty_section")
    set_mask = np.asarray(set_mask, dtype=bool)
    if not np.any(set_mask):
        raise HypothesisError("empty_set")
    if np.any(set_mask & ~section.mask):
        raise HypothesisError("set_not_in_section")
    M_const = getattr(gf, "qq_constant", 1.0)
    pts_a = env.grid.points[set_mask]
    cloud_a = p_map(gf, m.xbar, m.z, pts_a)
    cloud_s = section.coord_image()
    cm = cloud_a.mean(axis=0)
    dilated = cm + K * M_const * (cloud_a - cm)
    from scipy.spatial import Delaunay
    try:
        tri = Delaunay(np.round(cloud_s / gf.tols.hull_snap) * gf.tols.hull_snap)
    except Exception as e:
        raise HypothesisError("section_image_degenerate", str(e)) from e
    if not np.all(tri.find_simplex(dilated) >= 0):
        raise HypothesisError("dilation_containment",
                              "K M [A] is not contained in [S]")
    mv = m.values_on(pts_a)
    u_a = env.grid_values()[set_mask]
    gap = float(np.max(mv - u_a))
    if float(np.max(mv)) + gap >= gf.srange.upper:
        raise HypothesisError("section_too_deep")
    lhs = gap ** gf.dim
    vol_a = float(np.sum(env.grid.weights[set_mask]))
    vol_sub, idx = _subdiff_volume(env, set_mask)
    rhs_side = vol_a * vol_sub
    implied = lhs / rhs_side if rhs_side > 0 else np.inf
    return EstimateRecord(
        theorem="sharp_growth",
        lhs=float(lhs),
        factors={"sup_gap": gap, "set_volume": vol_a,
                 "subdiff_volume": vol_sub, "n_active_foci": int(idx.size),
                 "K": K, "M": M_const},
        implied_constant=float(implied),
        witness={"m_xbar": m.xbar.tolist(), "m_z": float(m.z)})


# ---------------------------------------------------------------------------
# engulfing diagnostic
# ---------------------------------------------------------------------------


def section_at_height(env: Envelope, x, h) -> Section:
    """Section S(x, xbar, h) through the active focus at x raised by h."""
    gf = env.gf
    u, active = env.eval(np.asarray(x, dtype=float))
    xbar = env.xbars[active[0]]
    z_h = gf.inverse(x, xbar, u + h)
    return env.section(GAffine(gf, xbar, float(z_h)))


def _ridge_cells(env: Envelope):
    """Grid cells whose winning piece differs from a neighbor's.

    Sections straddling such cells probe the kinks of the envelope, which
    is where the engulfing factor degenerates when the generating function
    lacks the fourth-order condition.
    """
    res = env.grid.resolution
    if int(np.prod(res)) != env.grid.n_cells:
        return np.zeros(env.grid.n_cells, dtype=bool)
    idx = env.cell_indices().reshape(res)
    ridge = np.zeros(res, dtype=bool)
    for d in range(len(res)):
        ridge |= idx != np.roll(idx, 1, axis=d)
        sl = [slice(None)] * len(res)
        sl[d] = 0
        ridge[tuple(sl)] = False
    return ridge.reshape(-1)


def engulfing_check(env: Envelope, h_grid, n_pairs=24, seed=0):
    """Fit the smallest engulfing factor over sampled section pairs.

    For x1 in the section of x0 at height h, the minimal factor making x0
    fall inside x1's section at the inflated height is closed-form:
    Lambda = (G(x1, xbar1, H(x0, xbar1, u(x0))) - u(x1)) / h.  Half of the
    sampled x1 are biased toward ridge cells of the section (where pieces
    change), since that is where a degenerate geometry shows; sampling is
    deterministic for a fixed seed.  Reports the max fitted factor per
    height and a stability verdict across the grid.
    """
    gf = env.gf
    rng = np.random.default_rng(seed)
    interior = env.grid.coords
    margin = 2 * env.grid.width()
    lo = np.asarray(env.grid.chart.lo) + margin
    hi = np.asarray(env.grid.chart.hi) - margin
    inner = np.all((interior >= lo) & (interior <= hi), axis=1)
    idx_inner = np.flatnonzero(inner)
    ridge = _ridge_cells(env)
    per_h = {}
    for h in np.asarray(h_grid, dtype=float):
        lam_max = 1.0
        used = 0
        for trial in range(n_pairs):
            k0 = int(rng.choice(idx_inner))
            x0 = env.grid.points[k0]
            try:
                sec = section_at_height(env, x0, h)
            except NicenessError:
                continue
            pool = sec.mask & inner
            if trial % 2 == 0 and np.any(pool & ridge):
                cand = np.flatnonzero(pool & ridge)
            else:
                cand = np.flatnonzero(pool)
            if cand.size < 2:
                continue
            k1 = int(rng.choice(cand))
            x1 = env.grid.points[k1]
            u0, _ = env.eval(x0)
            u1, a1 = env.eval(x1)
            xbar1 = env.xbars[a1[0]]
            try:
                z_star = gf.inverse(x0, xbar1, u0)
            except Exception:
                continue
            lam = (gf.value(x1, xbar1, z_star, check=False) - u1) / h
            used += 1
            lam_max = max(lam_max, float(lam))
        per_h[float(h)] = {"lambda_max": lam_max, "n_pairs": used}
    hs = sorted(per_h)
    lams = np.array([per_h[h]["lambda_max"] for h in hs])
    spread = float(np.max(lams) / max(np.min(lams), 1e-300))
    return {"per_height": per_h, "heights": hs,
            "lambda_values": lams.tolist(),
            "stability_ratio": spread,
            "stable_within_20pct": bool(spread <= 1.2 / 0.8)}
