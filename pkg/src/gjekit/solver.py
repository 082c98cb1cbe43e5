"""Semi-discrete solver: height adjustment until every target gets its mass.

Given a gridded source density f and discrete targets (xbar_i, g_i) with
matching total mass, the solver adjusts the scalar heights z_i of the
envelope pieces until the f-mass of each piece's cell matches g_i.  The
update rule is coordinate bisection: raising a piece (moving its height
along the direction in which the generating function grows) can only grow
its cell, so each underfilled piece is raised until its cell mass reaches
its target, sweeping until no piece is underfilled.  Monotonicity of the
cell mass in the height is asserted at runtime rather than assumed.

Only underfilled pieces move within a sweep (a piece is never lowered), so
the envelope trajectory is monotone; the anchor normalization
u(x0) = u0 is restored after mass convergence by a joint height shift, and
the sweep/normalize cycle repeats until both criteria hold.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InfeasibleError, MonotonicityError, StallError
from .gconvex import Envelope
from .grids import DomainGrid
from . import kernels


@dataclass
class SemiDiscreteProblem:
    gf: object
    grid: DomainGrid
    targets: np.ndarray          # (N, embdim) target points
    masses: np.ndarray           # (N,) prescribed masses, > 0
    density: object = None       # density spec over grid cells (None = uniform)
    anchor_x: np.ndarray = None  # normalization point x0
    anchor_u: float = None       # normalization value u0 (in the nice interval)
    tol_mass: float = None       # relative mass tolerance (default from tols)

    def __post_init__(self):
        self.targets = np.atleast_2d(np.asarray(self.targets, dtype=float))
        self.masses = np.asarray(self.masses, dtype=float)
        if self.targets.shape[0] != self.masses.shape[0]:
            raise ConfigError("targets and masses must have equal length")
        if np.any(self.masses <= 0):
            raise ConfigError("all target masses must be positive")
        d = self.targets[:, None, :] - self.targets[None, :, :]
        sep = np.sqrt(np.sum(d * d, axis=2))
        np.fill_diagonal(sep, np.inf)
        if np.min(sep) <= 0:
            raise ConfigError("target points must be distinct")
        self.f_values = self.grid.density_from(self.density)
        self.cell_weights = self.grid.weights * self.f_values
        self.total_mass = float(np.sum(self.cell_weights))
        gap = abs(float(np.sum(self.masses)) - self.total_mass)
        if gap > 1e-12 * self.total_mass:
            raise ConfigError(
                f"total target mass must equal the source mass "
                f"(gap {gap:.3e}, total {self.total_mass:.6e})")
        if self.anchor_x is None:
            self.anchor_x = self.grid.points[len(self.grid.points) // 2]
        self.anchor_x = np.asarray(self.anchor_x, dtype=float)
        if self.anchor_u is None:
            sr = self.gf.srange
            self.anchor_u = 0.5 * (sr.nice_lower + sr.nice_upper)
        if not self.gf.srange.nice_contains(self.anchor_u):
            raise ConfigError("anchor value must lie in the nice interval")
        if self.tol_mass is None:
            self.tol_mass = self.gf.tols.mass_rel

    @property
    def n_targets(self):
        return self.targets.shape[0]


@dataclass
class SolverState:
    heights: np.ndarray
    residual: np.ndarray
    sweeps: int
    outer_rounds: int
    converged: bool
    history: list = field(default_factory=list)  # rows: (sweep, res_inf, wall_time)
    conservation_gap: float = 0.0


def _piece_z_limits(gf, xbar):
    """Admissible open z-interval of the piece with focus xbar."""
    name = getattr(gf, "name", "")
    if name == "point_source":
        t = float(np.linalg.norm(xbar))
        hi = np.inf if t == 0 else 2.0 / t
        return 0.0, hi
    if name in ("parallel_beam", "minkowski"):
        return 0.0, np.inf
    if name.startswith("quasilinear"):
        return -np.inf, np.inf
    return -np.inf, np.inf


class _MassOracle:
    """Cell mass of one piece against the frozen rest of the envelope."""

    def __init__(self, problem, values, index):
        self.p = problem
        self.i = index
        self.tie = problem.gf.tols.tie
        other = values.copy()
        other[index] = -np.inf
        self.other_val = np.max(other, axis=0)
        self.other_idx = np.argmax(other, axis=0)
        self.other_idx[~np.isfinite(self.other_val)] = problem.n_targets

    def __call__(self, z):
        return kernels.piece_mass(self.p.gf, self.p.grid.points,
                                  self.p.cell_weights, self.other_val,
                                  self.other_idx, self.i,
                                  self.p.targets[self.i], z, self.tie)


def _move_piece_to_mass(problem, oracle, z_now, target_mass, raise_dir,
                        cell_quantum, first_step=1e-3):
    """Monotone bisection moving one piece's mass to its target.

    Works in either direction: underfilled pieces move along the raising
    direction, overfilled ones backwards.  The cell mass is a staircase in
    the height, so when it jumps over the target band the piece parks just
    below the jump (mass <= target).  Monotonicity along the raising axis
    is asserted at runtime (MonotonicityError with a witness).
    """
    gf = problem.gf
    tols = gf.tols
    lo_lim, hi_lim = _piece_z_limits(gf, problem.targets[oracle.i])
    slack = problem.tol_mass * problem.total_mass / max(2, problem.n_targets)
    m_now = oracle(z_now)
    if target_mass - slack <= m_now <= target_mass + slack:
        return z_now, m_now
    walk = raise_dir if m_now < target_mass else -raise_dir
    step = first_step * max(1.0, abs(z_now))
    a, m_a = z_now, m_now
    b = None
    prev_mass = m_now
    for _ in range(tols.bracket_max_doublings):
        cand = a + walk * step
        if cand >= hi_lim:
            cand = 0.5 * (a + hi_lim)
        if cand <= lo_lim:
            cand = 0.5 * (a + lo_lim)
        m_c = oracle(cand)
        drift = (m_c - prev_mass) * walk * raise_dir
        if drift < -cell_quantum:
            raise MonotonicityError(
                f"cell mass moved against the raising direction for piece "
                f"{oracle.i} (z {a:.6g} -> {cand:.6g}, "
                f"mass {prev_mass:.6g} -> {m_c:.6g})",
                witness={"piece": oracle.i, "z": cand, "mass": m_c})
        prev_mass = m_c
        if target_mass - slack <= m_c <= target_mass + slack:
            return cand, m_c
        crossed = (m_c > target_mass) if m_now < target_mass else (m_c < target_mass)
        if crossed:
            b, m_b = cand, m_c
            break
        a, m_a = cand, m_c
        step *= 2.0
        lim = hi_lim if walk > 0 else lo_lim
        if np.isfinite(lim) and abs(lim - a) < 1e-13 * max(1.0, abs(lim)):
            raise InfeasibleError(
                f"piece {oracle.i}: admissible height range exhausted before "
                f"reaching its target mass")
    if b is None:
        raise InfeasibleError(
            f"piece {oracle.i}: no bracket after {tols.bracket_max_doublings} doublings")
    # bisect; a is on the starting side of the target, b past it
    for _ in range(100):
        if abs(b - a) <= 1e-13 * max(1.0, abs(a), abs(b)):
            break
        mid = 0.5 * (a + b)
        m_mid = oracle(mid)
        if target_mass - slack <= m_mid <= target_mass + slack:
            return mid, m_mid
        past = (m_mid > target_mass) if m_now < target_mass else (m_mid < target_mass)
        if past:
            b, m_b = mid, m_mid
        else:
            a, m_a = mid, m_mid
    # the staircase jumped over the band: settle on the side with mass <= target
    if m_b <= target_mass + slack:
        return b, m_b
    if m_a <= target_mass + slack:
        return a, m_a
    return (a, m_a) if m_a < m_b else (b, m_b)


def solve(problem: SemiDiscreteProblem):
    """Solve the semi-discrete problem; returns (Envelope, SolverState)."""
    gf = problem.gf
    tols = gf.tols
    n = problem.n_targets
    raise_dir = -gf.orientation  # direction in which G(., xbar, z) grows
    t_start = time.perf_counter()

    # Every piece starts through a common anchor value chosen BELOW the
    # anchor target.  Raising-only sweeps converge monotonically when every
    # piece starts below its final position; a piece supporting the solution
    # anywhere can sit at most ~2 K0 diam(domain) below the anchor value
    # (Lipschitz bound), so undershooting by that much is safe.
    x0 = problem.anchor_x
    x0s = np.broadcast_to(x0, (n, x0.shape[0])).copy()
    z_anchor = np.asarray(gf.inverse(x0s, problem.targets,
                                     np.full(n, problem.anchor_u)), dtype=float)
    k0_hat = 0.0
    for i in range(n):
        sub = problem.grid.points[::7]
        dd = gf.d_x(sub, np.broadcast_to(problem.targets[i],
                                         (sub.shape[0], problem.targets.shape[1])).copy(),
                    np.full(sub.shape[0], z_anchor[i]))
        k0_hat = max(k0_hat, float(np.max(np.linalg.norm(dd, axis=1))))
    undershoot = 2.2 * k0_hat * problem.grid.chart.diameter() + 1e-6
    lo_u = max(problem.anchor_u - undershoot,
               gf.srange.lower + 0.05 * (problem.anchor_u - gf.srange.lower))
    z = np.asarray(gf.inverse(x0s, problem.targets, np.full(n, lo_u)),
                   dtype=float).copy()

    tol_abs = problem.tol_mass * problem.total_mass
    inner_tol = tol_abs / max(2, n)
    cell_quantum = float(np.max(problem.cell_weights)) + 1e-30
    history = []
    sweeps = 0
    best_res = np.inf
    last_improvement = 0
    converged = False
    step_hint = np.full(n, 1e-3)

    def piece_values_all(zv):
        V = np.empty((n, problem.grid.n_cells))
        for i in range(n):
            V[i] = kernels.piece_values(gf, problem.grid.points,
                                        problem.targets[i], zv[i])
        return V

    # Early rounds only need mass balance at grid-cell resolution: deficits
    # below one cell mass cannot be repaired while the overall level is still
    # far from the anchor (the staircase plateau at g_i only exists near the
    # final configuration).  The parking tolerance halves every round down to
    # the strict tolerance.
    park_tol = max(inner_tol, cell_quantum)

    for outer in range(100):
        V = piece_values_all(z)
        while True:
            masses = _masses_from(V, problem)
            res = masses - problem.masses
            res_inf = float(np.max(np.abs(res)))
            history.append((sweeps, res_inf, time.perf_counter() - t_start))
            if res_inf < best_res - 1e-18:
                best_res = res_inf
                last_improvement = sweeps
            if sweeps - last_improvement > tols.solver_max_sweeps:
                raise StallError(
                    f"no residual decrease in {tols.solver_max_sweeps} sweeps "
                    f"(best {best_res:.3e})")
            if np.min(res) >= -park_tol:
                break
            moved = False
            for i in range(n):  # ascending index, deterministic
                oracle = _MassOracle(problem, V, i)
                m_i = oracle(z[i])
                if m_i >= problem.masses[i] - park_tol:
                    continue
                z_new, _ = _move_piece_to_mass(problem, oracle, z[i],
                                               problem.masses[i], raise_dir,
                                               cell_quantum,
                                               first_step=step_hint[i])
                step_hint[i] = max(1e-6, 0.5 * abs(z_new - z[i]))
                if z_new != z[i]:
                    moved = True
                z[i] = z_new
                V[i] = kernels.piece_values(gf, problem.grid.points,
                                            problem.targets[i], z[i])
            sweeps += 1
            if not moved:
                # every underfilled piece is parked at the staircase floor
                break

        env = Envelope(gf, (problem.targets, z), problem.grid, tols=tols)
        u_at_anchor, _ = env.eval(x0)
        delta = u_at_anchor - problem.anchor_u
        if abs(delta) <= 1e-9:
            converged = res_inf <= tol_abs
            if converged:
                break
            # Terminal repair: the level is right but raising-only cannot
            # drain a piece that ended relatively overfilled during the level
            # walk.  Near the solution a bidirectional Gauss-Seidel pass over
            # the pieces converges quickly; each piece moves to its own
            # target in whichever direction its residual demands.
            V = piece_values_all(z)
            repaired = False
            for _ in range(50):
                masses = _masses_from(V, problem)
                res = masses - problem.masses
                res_inf = float(np.max(np.abs(res)))
                history.append((sweeps, res_inf, time.perf_counter() - t_start))
                if res_inf <= tol_abs:
                    repaired = True
                    break
                order = np.argsort(-np.abs(res))  # worst piece first
                changed = False
                for i in order:
                    if abs(res[i]) <= inner_tol:
                        continue
                    oracle = _MassOracle(problem, V, int(i))
                    z_new, _ = _move_piece_to_mass(problem, oracle, z[i],
                                                   problem.masses[i], raise_dir,
                                                   cell_quantum,
                                                   first_step=step_hint[i])
                    step_hint[i] = max(1e-6, 0.5 * abs(z_new - z[i]))
                    if z_new != z[i]:
                        changed = True
                    z[i] = z_new
                    V[i] = kernels.piece_values(gf, problem.grid.points,
                                                problem.targets[i], z[i])
                sweeps += 1
                if not changed:
                    break
            env = Envelope(gf, (problem.targets, z), problem.grid, tols=tols)
            u_at_anchor, _ = env.eval(x0)
            delta = u_at_anchor - problem.anchor_u
            if repaired and abs(delta) <= 1e-9:
                masses = env.cell_masses(problem.density)
                res_inf = float(np.max(np.abs(masses - problem.masses)))
                converged = res_inf <= tol_abs
                if converged:
                    break
            if abs(delta) <= 1e-9:
                # neither criterion improving: give the stall logic a chance
                continue
        # Joint shift through the scalar inverse: drop every piece's anchor
        # value by delta, plus a shrinking undershoot so the next round of
        # raising-only sweeps again starts from below its solution.  The
        # guard fraction trades rounds against the risk of overshooting a
        # piece past its target (benign: the terminal repair drains it).
        guard = 0.1 * abs(delta)
        vals_at_anchor = gf.value(x0s, problem.targets, z, check=False)
        z = np.asarray(gf.inverse(x0s, problem.targets,
                                  vals_at_anchor - delta - guard),
                       dtype=float).copy()
        park_tol = max(inner_tol, 0.5 * park_tol)
    else:
        raise StallError("normalization/mass cycle did not converge in 100 rounds")

    masses = env.cell_masses(problem.density)
    res = masses - problem.masses
    state = SolverState(
        heights=z.copy(),
        residual=res,
        sweeps=sweeps,
        outer_rounds=outer + 1,
        converged=bool(converged),
        history=history,
        conservation_gap=float(abs(np.sum(masses) - problem.total_mass)),
    )
    return env, state


def _masses_from(V, problem):
    tie = problem.gf.tols.tie
    n, m = V.shape
    best = np.full(m, -np.inf)
    idx = np.full(m, n, dtype=np.int64)
    for i in range(n):
        take = V[i] > best + tie
        best = np.where(take, V[i], best)
        idx = np.where(take, i, idx)
    return np.bincount(idx[idx < n], weights=problem.cell_weights[idx < n],
                       minlength=n)


def mass_residual(env: Envelope, problem: SemiDiscreteProblem):
    """Cell-mass residual vector r_i = cellmass_i - g_i for a given envelope."""
    masses = env.cell_masses(problem.density)
    return masses - problem.masses


def monotonicity_probe(problem: SemiDiscreteProblem, heights, i, z_grid):
    """Tabulate the cell mass of piece i against its height, others fixed.

    Asserts the mass is monotone along the raising direction to within one
    grid-cell mass; raises MonotonicityError with a witness otherwise.
    Returns the (z, mass) table.
    """
    heights = np.asarray(heights, dtype=float)
    V = np.empty((problem.n_targets, problem.grid.n_cells))
    for j in range(problem.n_targets):
        V[j] = kernels.piece_values(problem.gf, problem.grid.points,
                                    problem.targets[j], heights[j])
    oracle = _MassOracle(problem, V, i)
    z_grid = np.asarray(z_grid, dtype=float)
    masses = np.array([oracle(zz) for zz in z_grid])
    raise_dir = -problem.gf.orientation
    order = np.argsort(raise_dir * z_grid)
    quantum = float(np.max(problem.cell_weights))
    sorted_masses = masses[order]
    drops = np.diff(sorted_masses)
    if np.any(drops < -quantum):
        k = int(np.argmin(drops))
        raise MonotonicityError(
            f"piece {i} mass decreased along the raising direction",
            witness={"z": float(z_grid[order][k + 1]),
                     "mass_before": float(sorted_masses[k]),
                     "mass_after": float(sorted_masses[k + 1])})
    return np.column_stack([z_grid, masses])
