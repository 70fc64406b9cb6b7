"""Boundary seminorms: graph energy, Hajlasz gradients, maximal and Lip.

``ap_seminorm`` measures a boundary function through the filling: extend
by ball averages, take oriented edge differences, and apply the weak
sequence norm.  ``hajlasz_seminorm`` solves the convex program

    minimize (sum_x w_x g(x)^p)^(1/p)
    subject to g >= 0 and g(x) + g(y) >= |f(x) - f(y)| / d(x,y)^alpha

by projected subgradient descent on the exact-penalty objective
F(g) + lam * (worst pair deficit), projected to g >= 0, with a symmetric
half-deficit lift extracting a feasible candidate from every iterate and
tail-averaging to damp subgradient oscillation.  A sequential polish then
drops each coordinate to its exact constraint envelope, which preserves
feasibility and never increases the objective.  On spaces above
``_FULL_LIMIT`` points the O(m^2) constraint set is handled by active-set
generation: inner descent runs on the worst pair per point, and full
sweeps between rounds add violated constraints and restore global
feasibility.  The reported optimality gap is relative to the best
single-pair lower bound -- cheap and sound, but loose on large spaces;
``converged`` records whether the gap met the tolerance.

``hl_maximal`` is the ball-average maximal function over all balls of
the space, ``pointwise_lip`` the difference-quotient surrogate for the
pointwise Lipschitz constant at a chosen scale, and ``check_poincare``
the empirical ball-wise oscillation-versus-gradient constant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .metric_space import MetricMeasureSpace
from .transfer import edge_gradient, poisson_extend
from .seq_norms import weak_norm

__all__ = [
    "HajlaszSolution",
    "PoincareReport",
    "ap_seminorm",
    "hajlasz_seminorm",
    "hl_maximal",
    "pointwise_lip",
    "check_poincare",
]

_BLOCK = 1024
_FULL_LIMIT = 1024      # largest m for which the full constraint matrix is kept


def ap_seminorm(filling, f, p: float) -> float:
    """Weak norm of the edge gradient of the ball-average extension of f."""
    u = poisson_extend(filling, f)
    return float(weak_norm(edge_gradient(filling, u), p))


@dataclass
class HajlaszSolution:
    g: np.ndarray
    seminorm: float
    alpha: float
    p: float
    gap: float              # (seminorm - lower_bound) / lower_bound
    lower_bound: float
    converged: bool
    iterations: int


@dataclass
class PoincareReport:
    p: float
    dilation: float
    empirical_constant: float
    median_ratio: float
    n_samples: int
    violations: int         # balls with vanishing RHS but positive LHS


# ---------------------------------------------------------------------------
# Hajlasz solver


def _pair_lower_bound(wx, wy, c, p):
    """Optimal objective of one constraint g_x + g_y >= c alone (vectorized)."""
    c = np.asarray(c, dtype=float)
    if p == 1.0:
        return np.minimum(wx, wy) * c
    ax = wx ** (-1.0 / (p - 1.0))
    ay = wy ** (-1.0 / (p - 1.0))
    gx = c * ax / (ax + ay)
    gy = c * ay / (ax + ay)
    return wx * gx ** p + wy * gy ** p


def _quotient_rows(space, f, alpha, rows):
    """Constraint levels c_xy = |f(x)-f(y)|/d^alpha for x in rows, all y."""
    d = space.dist_block(rows)
    df = np.abs(f[rows, None] - f[None, :])
    zero = d == 0
    if np.any(zero & (df > 1e-12)):
        raise ValueError(
            "duplicate points carry different values; the Hajlasz constraint is infinite")
    if alpha != 1.0:
        d = d ** alpha
    np.divide(df, d, out=df, where=~zero)
    df[zero] = 0.0
    return df


def _lift(g, needed):
    """Half-deficit symmetric lift: feasible in one pass.

    Adding half of x's worst deficit to every point covers each violated
    pair from both ends.
    """
    return g + 0.5 * np.maximum(needed - g, 0.0)


def _penalty_descent(g, w, p, scale, n_iter, lift_every, worst_of, needed_of):
    """Projected subgradient on F(g) + lam * (worst deficit), g >= 0.

    Returns the best feasible candidate seen: every lift_every iterations
    the current iterate (and finally the tail average) is lifted to
    feasibility and scored.
    """
    def objective(gg):
        return float(np.sum(w * gg ** p))

    lam = 4.0 * p * float(np.max(w)) * max(scale, 1e-300) ** (p - 1.0)
    best = _lift(g.copy(), needed_of(g))
    best_val = objective(best)
    acc = np.zeros_like(g)
    acc_n = 0
    for t in range(1, n_iter + 1):
        x, y, deficit = worst_of(g)
        sg = w * p * g ** (p - 1.0) if p > 1.0 else w.copy()
        if deficit > 0:
            sg[x] -= lam
            sg[y] -= lam
        nrm = float(np.max(np.abs(sg)))
        if nrm == 0:
            break
        g = np.maximum(0.0, g - (0.25 * scale / np.sqrt(t)) * sg / nrm)
        if t > n_iter // 2:
            acc += g
            acc_n += 1
        if t % lift_every == 0 or t == n_iter:
            cand = _lift(g, needed_of(g))
            val = objective(cand)
            if val < best_val:
                best_val, best = val, cand
    if acc_n:
        mean = acc / acc_n
        cand = _lift(mean, needed_of(mean))
        val = objective(cand)
        if val < best_val:
            best_val, best = val, cand
    return best, best_val


def hajlasz_seminorm(
    space: MetricMeasureSpace,
    f,
    alpha: float,
    p: float,
    tol: float = 1e-3,
    max_iter: int | None = None,
) -> HajlaszSolution:
    """Minimal weighted L^p norm of a fractional Hajlasz gradient of f."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if p < 1:
        raise ValueError("p must be >= 1")
    f = np.asarray(f, dtype=float)
    if not np.all(np.isfinite(f)):
        raise ValueError("f must be finite")
    if np.ptp(f) == 0:
        return HajlaszSolution(
            np.zeros(space.n_points), 0.0, alpha, p, 0.0, 0.0, True, 0)
    if space.n_points <= _FULL_LIMIT:
        return _solve_full(space, f, alpha, p, tol, max_iter)
    return _solve_active_set(space, f, alpha, p, tol, max_iter)


def _solve_full(space, f, alpha, p, tol, max_iter):
    m = space.n_points
    w = space.weight
    C = _quotient_rows(space, f, alpha, np.arange(m))
    lower = float(np.max(
        _pair_lower_bound(w[:, None], w[None, :], C, p)) ** (1.0 / p))

    def worst_of(g):
        slack = C - g[:, None] - g[None, :]
        k = int(np.argmax(slack))
        x, y = divmod(k, m)
        return x, y, float(slack[x, y])

    def needed_of(g):
        return np.max(C - g[None, :], axis=1)

    env = C.max(axis=1)
    scale = float(env.max())
    small = m <= 64
    n_iter = max_iter if max_iter is not None else (12000 if small else 600)
    g, val = _penalty_descent(
        0.5 * env, w, p, scale, n_iter, 1 if small else 10, worst_of, needed_of)

    # sequential envelope polish: monotone, feasibility-preserving
    sweeps = 0
    for _ in range(300 if small else 40):
        sweeps += 1
        for x in range(m):
            g[x] = max(0.0, float(np.max(C[x] - g)))
        new = float(np.sum(w * g ** p))
        if val - new <= 1e-15 * max(val, 1e-300):
            val = new
            break
        val = new
    seminorm = val ** (1.0 / p)
    gap = (seminorm - lower) / lower if lower > 0 else 0.0
    return HajlaszSolution(g, seminorm, alpha, p, gap, lower, gap <= tol, n_iter + sweeps)


def _solve_active_set(space, f, alpha, p, tol, max_iter):
    m = space.n_points
    w = space.weight

    def objective(g):
        return float(np.sum(w * g ** p))

    # pass over all constraints: envelope at g = 0, worst partner per point,
    # and the best single-pair lower bound (closed form for uniform weight)
    env = np.empty(m)
    partner = np.empty(m, dtype=int)
    uniform = np.ptp(w) == 0
    lb_p = 0.0
    for start in range(0, m, _BLOCK):
        rows = np.arange(start, min(start + _BLOCK, m))
        c = _quotient_rows(space, f, alpha, rows)
        k = np.argmax(c, axis=1)
        env[rows] = c[np.arange(len(rows)), k]
        partner[rows] = k
        if not uniform:
            lb_p = max(lb_p, float(np.max(
                _pair_lower_bound(w[rows, None], w[None, :], c, p))))
    if uniform:
        lb_p = 2.0 * float(w[0]) * (float(env.max()) / 2.0) ** p
    lower = lb_p ** (1.0 / p)

    g = 0.5 * env                           # half the envelope: feasible
    scale = float(g.max())
    best = g.copy()
    best_val = objective(g)

    active_x = np.arange(m)
    active_y = partner.copy()
    active_c = env.copy()
    seen = np.unique(np.minimum(active_x, active_y).astype(np.int64) * m
                     + np.maximum(active_x, active_y))

    def worst_active(gv):
        slack = active_c - gv[active_x] - gv[active_y]
        k = int(np.argmax(slack))
        return int(active_x[k]), int(active_y[k]), float(slack[k])

    def needed_active(gv):
        out = np.zeros(m)
        np.maximum.at(out, active_x, active_c - gv[active_y])
        np.maximum.at(out, active_y, active_c - gv[active_x])
        return out

    inner = max_iter if max_iter is not None else 400
    iterations = 0
    for _ in range(3):
        g, _ = _penalty_descent(
            g, w, p, scale, inner, 5, worst_active, needed_active)
        iterations += inner
        # one sequential envelope pass restores global feasibility from any
        # start (each pair is certified by its later-processed endpoint) and
        # doubles as violated-constraint detection for the next inner round
        nx_parts, ny_parts, nc_parts = [], [], []
        for start in range(0, m, _BLOCK):
            rows = np.arange(start, min(start + _BLOCK, m))
            c = _quotient_rows(space, f, alpha, rows)
            slack = c - g[None, :]
            k = np.argmax(slack, axis=1)
            ar = np.arange(len(rows))
            viol = slack[ar, k] - g[rows] > 1e-10 * max(scale, 1e-300)
            nx_parts.append(rows[viol])
            ny_parts.append(k[viol])
            nc_parts.append(c[ar[viol], k[viol]])
            for i, x in enumerate(rows):
                g[x] = max(0.0, float(np.max(c[i] - g)))
        val = objective(g)
        improved = val < best_val - 1e-14 * max(best_val, 1e-300)
        if val < best_val:
            best_val, best = val, g.copy()
        nx = np.concatenate(nx_parts)
        ny = np.concatenate(ny_parts)
        nc = np.concatenate(nc_parts)
        keys = np.minimum(nx, ny).astype(np.int64) * m + np.maximum(nx, ny)
        fresh = ~np.isin(keys, seen)
        if not improved and not fresh.any():
            break
        if fresh.any():
            active_x = np.concatenate([active_x, nx[fresh]])
            active_y = np.concatenate([active_y, ny[fresh]])
            active_c = np.concatenate([active_c, nc[fresh]])
            seen = np.union1d(seen, keys[fresh])
    seminorm = best_val ** (1.0 / p)
    gap = (seminorm - lower) / lower if lower > 0 else 0.0
    return HajlaszSolution(best, seminorm, alpha, p, gap, lower, gap <= tol, iterations)


# ---------------------------------------------------------------------------
# maximal function, pointwise Lip, Poincare


def hl_maximal(space: MetricMeasureSpace, g) -> np.ndarray:
    """Ball-average maximal function: max over all balls containing x of avg |g|.

    Ball centers range over the points and radii over the distance set, so
    every ball of the finite space is considered.  Open balls: a ball
    contributes to x only when x lies strictly inside, so for each center
    the candidate averages for x are the sorted-prefix averages past x's
    distance tie group.
    """
    g = np.abs(np.asarray(g, dtype=float))
    if not np.all(np.isfinite(g)):
        raise ValueError("g must be finite")
    m = space.n_points
    w = space.weight
    out = np.zeros(m)
    for z in range(m):
        d = space.dist_row(z)
        order = np.argsort(d, kind="stable")
        ds = d[order]
        avg = np.cumsum((w * g)[order]) / np.cumsum(w[order])
        # a prefix is realized by a ball only if it does not cut a distance
        # tie group; the full prefix always is (radius beyond the diameter)
        valid = np.empty(m, dtype=bool)
        valid[:-1] = ds[1:] > ds[:-1]
        valid[-1] = True
        suff = np.maximum.accumulate(np.where(valid, avg, -np.inf)[::-1])[::-1]
        # prefixes containing sorted position i start past its tie group
        nxt = np.searchsorted(ds, ds, side="right")
        vals = suff[nxt - 1]
        better = vals > out[order]
        out[order[better]] = vals[better]
    return out


def pointwise_lip(space: MetricMeasureSpace, f, h: float) -> np.ndarray:
    """Max difference quotient |f(x)-f(y)|/d(x,y) over 0 < d(x,y) <= h."""
    f = np.asarray(f, dtype=float)
    if h < space.resolution:
        raise ValueError(
            f"scale h = {h:.3g} below the resolution {space.resolution:.3g}: "
            "neighborhoods would be empty")
    m = space.n_points
    out = np.zeros(m)
    for start in range(0, m, _BLOCK):
        rows = np.arange(start, min(start + _BLOCK, m))
        d = space.dist_block(rows)
        q = np.abs(f[rows, None] - f[None, :])
        sel = (d > 0) & (d <= h)
        np.divide(q, d, out=q, where=sel)
        q[~sel] = 0.0
        out[rows] = q.max(axis=1)
    return out


def check_poincare(
    space: MetricMeasureSpace,
    p: float,
    dilation: float,
    functions,
    n_balls: int = 64,
    seed: int = 0,
    lip_scale: float | None = None,
) -> PoincareReport:
    """Empirical ball-wise Poincare constant.

    For sampled balls B = B(z, r) and each test function, compares the
    mean oscillation (1/|B|) sum_B w |f - f_B| against
    r * ((1/|LB|) sum_{LB} w Lip^p)^(1/p) over the dilated ball LB, and
    reports the worst and median ratio.  Balls where the right side
    vanishes while the left does not are counted as violations.
    """
    if dilation < 1:
        raise ValueError("dilation must be >= 1")
    m = space.n_points
    rng = np.random.default_rng(seed)
    centers = rng.choice(m, size=min(m, n_balls), replace=False)
    radii = np.geomspace(max(4 * space.resolution, 0.02), 0.3, 6)
    h = lip_scale if lip_scale is not None else 2.5 * space.resolution
    lips = [pointwise_lip(space, f, h) for f in functions]
    w = space.weight
    ratios = []
    violations = 0
    for z in centers:
        d = space.dist_row(int(z))
        for r in radii:
            inb = d < r
            indil = d < dilation * r
            wb = w[inb]
            wd = w[indil]
            for f, lip in zip(functions, lips):
                fb = float(np.sum(wb * f[inb]) / wb.sum())
                lhs = float(np.sum(wb * np.abs(f[inb] - fb)) / wb.sum())
                rhs = r * float(np.sum(wd * lip[indil] ** p) / wd.sum()) ** (1.0 / p)
                if rhs == 0.0:
                    if lhs > 1e-12:
                        violations += 1
                    continue
                ratios.append(lhs / rhs)
    ratios = np.asarray(ratios)
    const = float(ratios.max()) if ratios.size else 0.0
    med = float(np.median(ratios)) if ratios.size else 0.0
    return PoincareReport(p, dilation, const, med, len(ratios), violations)
