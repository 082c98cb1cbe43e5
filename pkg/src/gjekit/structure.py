"""Sampled verification of the structural conditions.

Every check here is a falsifier, not a certifier: it samples the declared
domains at a given density, reports the worst margin found together with
the witnessing configuration, and passes when no violation showed up.  The
conditions quantify over continua, so a pass means "no violation at this
sample density".

Checks: uniform admissibility (with the Lipschitz constant K0), injectivity
of the two coordinate maps, invertibility of the nondegeneracy matrix,
domain convexity along segments, the fourth-order tensor (primal and dual)
on orthogonal direction pairs, quantitative quasiconvexity along segments
(fitting the smallest workable constant M), and the smooth-case cross-check
that a nonnegative tensor comes with a finite M.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, DomainError, RangeError
from .expmaps import e_matrix, exp_source, exp_target, g_segment, p_map, pbar_map
from .genfun import GenFun

__all__ = [
    "ConditionReport", "a_matrix", "g3w_form", "g3w_dual_form",
    "check_nondeg", "check_twist", "check_unif_lip", "check_domconv",
    "check_qqconv", "g3w_sweep", "crosscheck_g3w_implies_qqconv",
]

_EPS4 = np.finfo(float).eps ** 0.25


@dataclass
class ConditionReport:
    condition: str
    n_samples: int
    worst_margin: float
    witness: dict
    tolerance: float
    passed: bool
    constants: dict = field(default_factory=dict)
    skipped: int = 0

    @staticmethod
    def build(condition, n_samples, worst_margin, witness, tolerance,
              constants=None, skipped=0):
        return ConditionReport(
            condition=condition,
            n_samples=int(n_samples),
            worst_margin=float(worst_margin),
            witness=witness,
            tolerance=float(tolerance),
            passed=bool(worst_margin >= -tolerance),
            constants=constants or {},
            skipped=int(skipped),
        )

    def to_dict(self):
        return {
            "condition": self.condition,
            "n_samples": self.n_samples,
            "worst_margin": self.worst_margin,
            "witness": _jsonable(self.witness),
            "tolerance": self.tolerance,
            "passed": self.passed,
            "constants": _jsonable(self.constants),
            "skipped": self.skipped,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    return obj


def _admissible_samples(gf: GenFun, interval, n, seed):
    """Sampled admissible (x, xbar, u, z) tuples inside the declared domains."""
    rng = np.random.default_rng(seed)
    xs = gf.source_chart.sample(2 * n, rng)
    xbs = gf.target_chart.sample(2 * n, rng)
    us = rng.uniform(interval[0], interval[1], 2 * n)
    keep = np.zeros(2 * n, dtype=bool)
    zs = np.zeros(2 * n)
    try:
        zs = gf.inverse(xs, xbs, us)
        keep = gf._in_domain(xs, xbs, zs)
    except (RangeError, ConvergenceError):
        for i in range(2 * n):
            try:
                zs[i] = gf.inverse(xs[i], xbs[i], us[i])
                keep[i] = gf.in_domain(xs[i], xbs[i], zs[i])
            except Exception:
                keep[i] = False
    xs, xbs, us, zs = xs[keep][:n], xbs[keep][:n], us[keep][:n], zs[keep][:n]
    return xs, xbs, us, zs


# ---------------------------------------------------------------------------
# pointwise condition checks
# ---------------------------------------------------------------------------


def check_nondeg(gf: GenFun, interval, n_samples=500, seed=0) -> ConditionReport:
    """Smallest |det E| over sampled admissible triples."""
    xs, xbs, us, zs = _admissible_samples(gf, interval, n_samples, seed)
    E = e_matrix(gf, xs, xbs, zs)
    dets = np.abs(np.linalg.det(E))
    k = int(np.argmin(dets))
    tol = gf.tols.nondeg_min_det
    return ConditionReport.build(
        "nondeg", len(dets), dets[k] - tol,
        {"x": xs[k], "xbar": xbs[k], "z": zs[k], "det": dets[k]},
        0.0, constants={"min_abs_det": float(dets[k])})


def check_twist(gf: GenFun, interval, n_samples=400, n_base=4, seed=0) -> ConditionReport:
    """Injectivity probe of the two coordinate maps.

    For fixed x0, the map (xbar, z) -> (D_x G, G) over a sampled net must
    separate distinct inputs; dually for x -> p at fixed (xbar, z).  The
    margin is the smallest output/input separation ratio; a collision drives
    it to zero.
    """
    rng = np.random.default_rng(seed)
    worst = np.inf
    witness = {}
    total = 0
    for b in range(n_base):
        xs, xbs, us, zs = _admissible_samples(gf, interval, n_samples, seed + 17 * b + 1)
        if len(xs) < 8:
            continue
        x0 = xs[0]
        # shared z-levels across the target net: collisions of the target
        # map typically need matching scalar values, which independent
        # (xbar, z) draws would miss.  The net also carries the axis
        # reflections of every candidate about the chart center, so folds
        # along a chart axis collide exactly instead of approximately.
        z_levels = np.quantile(zs, [0.25, 0.5, 0.75])
        xb_aug = [xbs]
        cb = gf.target_chart.coords(xbs)
        ctr = gf.target_chart.center
        for d_ in range(gf.dim):
            ref = cb.copy()
            ref[:, d_] = 2 * ctr[d_] - ref[:, d_]
            xb_aug.append(gf.target_chart.embed(ref))
        xb_all = np.concatenate(xb_aug, axis=0)
        xb_net = np.repeat(xb_all, len(z_levels), axis=0)
        z_net = np.tile(z_levels, len(xb_all))
        if xb_net.shape[0] > 1200:  # pairwise scan is quadratic
            xb_net = xb_net[:1200]
            z_net = z_net[:1200]
        x0s = np.broadcast_to(x0, xb_net.shape[:1] + x0.shape).copy()
        ok = gf._in_domain(x0s, xb_net, z_net)
        xb_k, z_k = xb_net[ok], z_net[ok]
        if len(xb_k) >= 8:
            out = np.column_stack([
                gf.d_x(x0s[ok], xb_k, z_k),
                gf.value(x0s[ok], xb_k, z_k, check=False)])
            cin = np.column_stack([gf.target_chart.coords(xb_k), z_k])
            r, wit = _min_sep_ratio(out, cin)
            total += len(xb_k)
            if r < worst:
                worst = r
                witness = {"map": "target", "x0": x0,
                           "pair_inputs": [cin[wit[0]], cin[wit[1]]]}
        # dual: x -> p at fixed (xbar, z)
        xb0, z0 = xbs[0], zs[0]
        xb0s = np.broadcast_to(xb0, xs.shape[:1] + xb0.shape).copy()
        ok = gf._in_domain(xs, xb0s, np.full(len(xs), z0))
        x_k = xs[ok]
        if len(x_k) >= 8:
            p = p_map(gf, xb0s[ok], np.full(len(x_k), z0), x_k, check=False)
            cin = gf.source_chart.coords(x_k)
            r, wit = _min_sep_ratio(p, cin)
            total += len(x_k)
            if r < worst:
                worst = r
                witness = {"map": "source", "xbar": xb0, "z": float(z0),
                           "pair_inputs": [cin[wit[0]], cin[wit[1]]]}
    tol = gf.tols.twist_ratio
    return ConditionReport.build(
        "twist", total, worst - tol, witness, 0.0,
        constants={"min_separation_ratio": float(worst)})


def _min_sep_ratio(outputs, inputs):
    douts = np.linalg.norm(outputs[:, None, :] - outputs[None, :, :], axis=2)
    dins = np.linalg.norm(inputs[:, None, :] - inputs[None, :, :], axis=2)
    iu = np.triu_indices(len(inputs), k=1)
    douts, dins = douts[iu], dins[iu]
    keep = dins > 1e-9
    ratio = douts[keep] / dins[keep]
    k = int(np.argmin(ratio))
    rows = np.flatnonzero(keep)[k]
    return float(ratio[k]), (iu[0][rows], iu[1][rows])


def check_unif_lip(gf: GenFun, interval, n_samples=2000, seed=0) -> ConditionReport:
    """Uniform admissibility over the box of (x, xbar, u) plus the constant K0."""
    rng = np.random.default_rng(seed)
    xs = gf.source_chart.sample(n_samples, rng)
    xbs = gf.target_chart.sample(n_samples, rng)
    us = rng.uniform(interval[0], interval[1], n_samples)
    bad = None
    zs = np.empty(n_samples)
    ok = np.ones(n_samples, dtype=bool)
    for i in range(n_samples):
        try:
            zs[i] = gf.inverse(xs[i], xbs[i], us[i])
            if not gf.in_domain(xs[i], xbs[i], zs[i]):
                ok[i] = False
                bad = bad or {"x": xs[i], "xbar": xbs[i], "u": float(us[i])}
        except (RangeError, ConvergenceError):
            ok[i] = False
            bad = bad or {"x": xs[i], "xbar": xbs[i], "u": float(us[i]),
                          "reason": "no admissible z"}
    k0 = 0.0
    if np.any(ok):
        d = gf.d_x(xs[ok], xbs[ok], zs[ok])
        k0 = float(np.max(np.linalg.norm(d, axis=1)))
    margin = 0.0 if bad is None else -1.0
    return ConditionReport.build(
        "unif_lip", n_samples, margin, bad or {}, 0.0,
        constants={"K0": k0, "admissible_fraction": float(np.mean(ok))})


def check_domconv(gf: GenFun, interval, n_samples=60, seed=0,
                  segment_points=17) -> ConditionReport:
    """Segment containment in the source domain and convexity of the
    target-chart image.

    Source direction: sampled endpoint pairs must yield well-defined
    segments staying in the domain closure.  Target direction: midpoints of
    image points must invert back into the target domain (within hull
    slack), which is the operational meaning of image convexity.
    """
    rng = np.random.default_rng(seed)
    slack = gf.tols.hull_slack
    fails = 0
    skipped = 0
    total = 0
    witness = {}
    for t in range(n_samples):
        xs, xbs, us, zs = _admissible_samples(gf, interval, 4, seed + 101 * t)
        if len(xs) < 2:
            skipped += 1
            continue
        x0, x1 = xs[0], xs[1]
        xb, z = xbs[0], zs[0]
        if not (gf.in_domain(x0, xb, z) and gf.in_domain(x1, xb, z)):
            skipped += 1
            continue
        total += 1
        try:
            seg = g_segment(gf, "source", (x0, x1), (xb, float(z)),
                            s_grid=np.linspace(0, 1, segment_points))
        except (DomainError, ConvergenceError):
            skipped += 1
            total -= 1
            continue
        if not seg.well_defined:
            fails += 1
            witness = witness or {"kind": "segment_not_well_defined",
                                  "x0": x0, "x1": x1, "xbar": xb, "z": float(z),
                                  "failures": seg.failures}
            continue
        inside = gf.source_chart.contains(seg.points, slack=slack)
        if not np.all(inside):
            fails += 1
            witness = witness or {"kind": "segment_exits_domain",
                                  "x0": x0, "x1": x1, "xbar": xb, "z": float(z)}
    # dual direction: image midpoint inversion
    dual_fails = 0
    dual_total = 0
    for t in range(n_samples):
        xs, xbs, us, zs = _admissible_samples(gf, interval, 4, seed + 7777 + 31 * t)
        if len(xs) < 1 or len(xbs) < 2:
            skipped += 1
            continue
        x, u = xs[0], float(us[0])
        try:
            pb0 = pbar_map(gf, x, u, xbs[0])
            pb1 = pbar_map(gf, x, u, xbs[1])
            mid = 0.5 * (pb0 + pb1)
            xb_mid, _ = exp_target(gf, x, u, mid, xbar_guess=xbs[0])
        except (DomainError, RangeError, ConvergenceError):
            skipped += 1
            continue
        dual_total += 1
        if not gf.target_chart.contains(xb_mid, slack=slack):
            dual_fails += 1
            witness = witness or {"kind": "image_midpoint_outside",
                                  "x": x, "u": u, "midpoint_target": xb_mid}
    frac_ok = 1.0 - (fails + dual_fails) / max(1, total + dual_total)
    margin = 0.0 if (fails + dual_fails) == 0 else -(fails + dual_fails)
    return ConditionReport.build(
        "domconv", total + dual_total, margin, witness, 0.0,
        constants={"contained_fraction": float(frac_ok),
                   "segment_failures": int(fails),
                   "image_midpoint_failures": int(dual_fails)},
        skipped=skipped)


# ---------------------------------------------------------------------------
# fourth-order tensor
# ---------------------------------------------------------------------------


def _snap_dir(v, snap=1e-12):
    return np.round(v / snap) * snap


def a_matrix(gf: GenFun, x, pbar, u, xbar_guess=None):
    """Second x-derivative of G composed with the target exponential map."""
    xbar, z = exp_target(gf, x, u, pbar, xbar_guess=xbar_guess)
    return gf.d2_x(x, xbar, z)


def g3w_form(gf: GenFun, x, pbar, u, V, eta, xbar_guess=None):
    """Second difference of s -> <A(x, pbar + s eta, u) V, V> at s = 0.

    V and eta must be orthogonal within tolerance.  The step comes from the
    central tolerance record (quarter-root of machine epsilon) with one
    Richardson level, and the form is evaluated with the unit direction and
    rescaled, using its quadratic homogeneity in eta.
    """
    x = np.asarray(x, dtype=float)
    pbar = np.asarray(pbar, dtype=float)
    V = np.asarray(V, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if abs(eta @ V) > gf.tols.ortho * max(1e-300, np.linalg.norm(eta) * np.linalg.norm(V)):
        raise ValueError("directions must satisfy <eta, V> = 0")
    nrm = np.linalg.norm(eta)
    nrm_v = np.linalg.norm(V)
    if nrm == 0 or nrm_v == 0:
        return 0.0
    # snapped unit directions with exact quadratic rescaling keep the form
    # exactly homogeneous in both arguments regardless of input scaling
    e = _snap_dir(eta / nrm)
    vu = _snap_dir(V / nrm_v)
    h = _EPS4 * max(1.0, float(np.linalg.norm(pbar)))
    tols2 = gf.tols.with_overrides(exp_residual=min(gf.tols.exp_residual, 1e-12))

    # every stencil point starts from the same guess so the evaluation is a
    # symmetric function of the stencil set (eta -> -eta is then exact)
    def phi(s):
        xb, z = exp_target(gf, x, u, pbar + s * e, xbar_guess=xbar_guess,
                           tols=tols2)
        A = gf.d2_x(x, xb, z)
        return float(vu @ A @ vu)

    try:
        f0 = phi(0.0)
        d_h = (phi(h) - 2 * f0 + phi(-h)) / (h * h)
        d_h2 = (phi(h / 2) - 2 * f0 + phi(-h / 2)) / (h * h / 4)
    except (ConvergenceError, RangeError) as e_:
        raise DomainError(f"tensor stencil leaves the image set: {e_}") from e_
    return float((4 * d_h2 - d_h) / 3) * nrm * nrm * nrm_v * nrm_v


def _h_xbar_xbar(gf: GenFun, x, xbar, z):
    """Second target-derivative of the scalar inverse at (x, xbar, G(x, xbar, z)).

    From differentiating G(x, xbar, H(x, xbar, u)) = u twice:
    H_bb = -(G_bb + G_bz h_b^T + h_b G_bz^T + G_zz h_b h_b^T) / G_z with
    h_b = -G_b / G_z, all evaluated at z.
    """
    Gb = gf.d_xbar(x, xbar, z)
    Gz = gf.g_z(x, xbar, z)
    Gbb = gf.d2_xbar(x, xbar, z)
    Gbz = gf.d_xbar_z(x, xbar, z)
    Gzz = gf.g_zz(x, xbar, z)
    hb = -Gb / Gz
    num = (Gbb + np.outer(Gbz, hb) + np.outer(hb, Gbz) + Gzz * np.outer(hb, hb))
    return -num / Gz


def g3w_dual_form(gf: GenFun, p, xbar, z, Vbar, etabar, x_guess=None):
    """Mirror of the primal form with source/target roles swapped."""
    p = np.asarray(p, dtype=float)
    Vbar = np.asarray(Vbar, dtype=float)
    etabar = np.asarray(etabar, dtype=float)
    if abs(etabar @ Vbar) > gf.tols.ortho * max(1e-300,
                                                np.linalg.norm(etabar) * np.linalg.norm(Vbar)):
        raise ValueError("directions must satisfy <etabar, Vbar> = 0")
    nrm = np.linalg.norm(etabar)
    if nrm == 0 or np.linalg.norm(Vbar) == 0:
        return 0.0
    nrm_v = np.linalg.norm(Vbar)
    e = _snap_dir(etabar / nrm)
    vu = _snap_dir(Vbar / nrm_v)
    h = _EPS4 * max(1.0, float(np.linalg.norm(p)))
    tols2 = gf.tols.with_overrides(exp_residual=min(gf.tols.exp_residual, 1e-12))

    def phi(s):
        x = exp_source(gf, xbar, z, (p + s * e)[None, :], x_guess=x_guess,
                       tols=tols2)[0]
        Astar = _h_xbar_xbar(gf, x, np.asarray(xbar, dtype=float), float(z))
        return float(vu @ Astar @ vu)

    try:
        f0 = phi(0.0)
        d_h = (phi(h) - 2 * f0 + phi(-h)) / (h * h)
        d_h2 = (phi(h / 2) - 2 * f0 + phi(-h / 2)) / (h * h / 4)
    except (ConvergenceError, RangeError) as e_:
        raise DomainError(f"dual tensor stencil leaves the image set: {e_}") from e_
    return float((4 * d_h2 - d_h) / 3) * nrm * nrm * nrm_v * nrm_v


def _orthogonal_pairs(n, n_random, rng):
    """Direction pairs with <eta, V> = 0: axis-aligned plus random Gram-Schmidt."""
    pairs = []
    for i in range(n):
        for j in range(n):
            if i != j:
                V = np.zeros(n)
                V[i] = 1.0
                eta = np.zeros(n)
                eta[j] = 1.0
                pairs.append((V, eta))
    for _ in range(n_random):
        V = rng.normal(size=n)
        V /= np.linalg.norm(V)
        eta = rng.normal(size=n)
        eta -= (eta @ V) * V
        nn = np.linalg.norm(eta)
        if nn < 1e-12:
            continue
        pairs.append((V, eta / nn))
    return pairs


def g3w_sweep(gf: GenFun, interval, n_base=64, n_pairs=32, seed=0,
              dual=False) -> ConditionReport:
    """Minimum of the (primal or dual) fourth-order form over sampled
    base points and orthogonal direction pairs."""
    rng = np.random.default_rng(seed)
    xs, xbs, us, zs = _admissible_samples(gf, interval, n_base, seed)
    worst = np.inf
    witness = {}
    count = 0
    skipped = 0
    for k in range(len(xs)):
        pairs = _orthogonal_pairs(gf.dim, n_pairs, rng)
        if dual:
            base_p = p_map(gf, xbs[k], zs[k], xs[k])
            for V, eta in pairs:
                try:
                    val = g3w_dual_form(gf, base_p, xbs[k], float(zs[k]), V, eta,
                                        x_guess=xs[k])
                except (DomainError, ConvergenceError):
                    skipped += 1
                    continue
                count += 1
                if val < worst:
                    worst = val
                    witness = {"p": base_p, "xbar": xbs[k], "z": float(zs[k]),
                               "V": V, "eta": eta, "value": val}
        else:
            base_pb = gf.d_x(xs[k], xbs[k], zs[k])
            for V, eta in pairs:
                try:
                    val = g3w_form(gf, xs[k], base_pb, float(us[k]), V, eta,
                                   xbar_guess=xbs[k])
                except (DomainError, ConvergenceError):
                    skipped += 1
                    continue
                count += 1
                if val < worst:
                    worst = val
                    witness = {"x": xs[k], "pbar": base_pb, "u": float(us[k]),
                               "V": V, "eta": eta, "value": val}
    tol = gf.tols.tensor_floor
    name = "g3w_dual" if dual else "g3w"
    return ConditionReport.build(
        name, count, worst, witness, tol,
        constants={"min_value": float(worst)}, skipped=skipped)


# ---------------------------------------------------------------------------
# quantitative quasiconvexity
# ---------------------------------------------------------------------------


def _qq_single(gf, x0, x1, xb0, xb1, z0, s_grid, sp_grid, tols):
    """Fit data for one sampled configuration of the primal inequality.

    Returns (M_required, violation_witness_or_None, skipped_flag).
    """
    u0 = gf.value(x0, xb0, z0)
    try:
        z1 = gf.inverse(x0, xb1, u0)
        seg = g_segment(gf, "source", (x0, x1), (xb0, z0),
                        s_grid=np.unique(np.concatenate([s_grid, sp_grid])))
    except (RangeError, DomainError, ConvergenceError):
        return None, None, True
    if not seg.well_defined:
        return None, None, True
    grid_all = seg.s_grid
    pts = seg.points
    m = pts.shape[0]
    xb0s = np.broadcast_to(xb0, (m, xb0.shape[0])).copy()
    xb1s = np.broadcast_to(xb1, (m, xb1.shape[0])).copy()
    z0s = np.full(m, z0)
    if not (np.all(gf._in_domain(pts, xb0s, z0s))):
        return None, None, True
    u_s = gf._value(pts, xb0s, z0s)
    if np.any(u_s <= gf.srange.lower) or np.any(u_s >= gf.srange.upper):
        return None, None, True
    # LHS(s) = G(x(s), xb1, z1) - G(x(s), xb0, z0)
    ok1 = gf._in_domain(pts, xb1s, np.full(m, z1))
    if not np.all(ok1):
        return None, None, True
    lhs = gf._value(pts, xb1s, np.full(m, z1)) - u_s
    # R(s') = G(x1, xb1, H(x(s'), xb1, G(x(s'), xb0, z0))) - G(x1, xb0, z0)
    try:
        z_sp = gf.inverse(pts, xb1s, u_s)
    except (RangeError, ConvergenceError):
        return None, None, True
    x1s = np.broadcast_to(x1, (m, x1.shape[0])).copy()
    okr = gf._in_domain(x1s, xb1s, z_sp)
    if not np.all(okr):
        return None, None, True
    r_all = gf._value(x1s, xb1s, z_sp) - gf.value(x1, xb0, z0)

    idx_s = np.searchsorted(grid_all, s_grid)
    idx_sp = np.searchsorted(grid_all, sp_grid)
    M_req = 1.0
    for a in idx_s:
        s = grid_all[a]
        if s <= 0 or lhs[a] <= tols.tie:
            continue
        for b in idx_sp:
            sp = grid_all[b]
            r = r_all[b]
            factor = s / (1.0 - sp)
            if r <= tols.tie:
                witness = {"s": float(s), "s_prime": float(sp),
                           "lhs": float(lhs[a]), "rhs_factor": float(r),
                           "x0": x0, "x1": x1, "xbar0": xb0, "xbar1": xb1,
                           "z0": float(z0)}
                return None, witness, False
            M_req = max(M_req, float(lhs[a]) / (factor * float(r)))
    return M_req, None, False


def check_qqconv(gf: GenFun, interval, n_samples=40, seed=0, dual=False,
                 n_grid=11) -> ConditionReport:
    """Fit the smallest workable constant M >= 1 for the quasiconvexity
    inequality along sampled segments.

    Primal: source segments with an 11 x 11 (s, s') grid, s' capped at 0.9
    (the inequality degenerates as s' -> 1).  Dual: target segments with the
    positive-part bracket.  Configurations whose segments are not
    well-defined are skipped and counted.  A positive left side facing a
    nonpositive right side is a violation witness (M = infinity).
    """
    tols = gf.tols
    s_grid = np.linspace(0.0, 1.0, n_grid)
    sp_grid = np.linspace(0.0, 0.9, n_grid)
    fitted = 1.0
    skipped = 0
    used = 0
    violation = None
    for t in range(n_samples):
        xs, xbs, us, zs = _admissible_samples(gf, interval, 4, seed + 997 * t)
        if len(xs) < 2 or len(xbs) < 2:
            skipped += 1
            continue
        if dual:
            M_t, viol, skip = _qq_dual_single(gf, xs[0], xs[1], xbs[0], xbs[1],
                                              float(us[0]), s_grid, sp_grid, tols)
        else:
            M_t, viol, skip = _qq_single(gf, xs[0], xs[1], xbs[0], xbs[1],
                                         float(zs[0]), s_grid, sp_grid, tols)
        if skip:
            skipped += 1
            continue
        used += 1
        if viol is not None:
            violation = violation or viol
            continue
        fitted = max(fitted, M_t)
    name = "qqconv_dual" if dual else "qqconv"
    if violation is not None:
        return ConditionReport.build(
            name, used, -np.inf, violation, 0.0,
            constants={"fitted_M": float("inf")}, skipped=skipped)
    return ConditionReport.build(
        name, used, 0.0, {}, 0.0, constants={"fitted_M": float(fitted)},
        skipped=skipped)


def _qq_dual_single(gf, x0, x1, xb0, xb1, u0, t_grid, tp_grid, tols):
    """One sampled configuration of the dual inequality along a target segment."""
    try:
        seg = g_segment(gf, "target", (xb0, xb1), (x0, u0),
                        s_grid=np.unique(np.concatenate([t_grid, tp_grid])))
    except (RangeError, DomainError, ConvergenceError):
        return None, None, True
    if not seg.well_defined:
        return None, None, True
    grid_all = seg.s_grid
    xbt = seg.points
    zt = seg.z_values
    m = xbt.shape[0]
    x1s = np.broadcast_to(x1, (m, x1.shape[0])).copy()
    if not np.all(gf._in_domain(x1s, xbt, zt)):
        return None, None, True
    f_t = gf._value(x1s, xbt, zt)
    lhs_all = f_t - f_t[0]
    idx_t = np.searchsorted(grid_all, t_grid)
    idx_tp = np.searchsorted(grid_all, tp_grid)
    M_req = 1.0
    for a in idx_t:
        t = grid_all[a]
        if t <= 0 or lhs_all[a] <= tols.tie:
            continue
        for b in idx_tp:
            tp = grid_all[b]
            bracket = f_t[-1] - f_t[b]
            factor = t / (1.0 - tp)
            if bracket <= tols.tie:
                witness = {"t": float(t), "t_prime": float(tp),
                           "lhs": float(lhs_all[a]), "bracket": float(bracket),
                           "x0": x0, "x1": x1, "xbar0": xb0, "xbar1": xb1,
                           "u0": float(u0)}
                return None, witness, False
            M_req = max(M_req, float(lhs_all[a]) / (factor * float(bracket)))
    return M_req, None, False


def crosscheck_g3w_implies_qqconv(gf: GenFun, interval, n_base=32, n_pairs=8,
                                  n_qq=24, seed=0):
    """Smooth-case consistency: a nonnegative sampled tensor must come with
    a finite fitted M.  Emits both numbers side by side."""
    tensor = g3w_sweep(gf, interval, n_base=n_base, n_pairs=n_pairs, seed=seed)
    qq = check_qqconv(gf, interval, n_samples=n_qq, seed=seed)
    tensor_ok = tensor.worst_margin >= -gf.tols.tensor_floor
    m_finite = np.isfinite(qq.constants["fitted_M"])
    implication_holds = (not tensor_ok) or m_finite
    return {
        "genfun": gf.name,
        "g3w_min": tensor.constants["min_value"],
        "g3w_nonnegative": bool(tensor_ok),
        "fitted_M": qq.constants["fitted_M"],
        "implication_holds": bool(implication_holds),
        "tensor_report": tensor.to_dict(),
        "qqconv_report": qq.to_dict(),
    }
