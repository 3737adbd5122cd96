"""Constrained KL problems behind the identifiability criterion.

For distributions ``p != q`` and a mixing weight ``alpha`` the problem is::

    minimize   (1 - alpha) [KL(x||p) + KL(y||q)] + alpha KL(z||q)
    subject to KL((1-alpha) x + alpha z || p) - KL((1-alpha) y + alpha z || p) + eps >= 0

over triples of distributions.  Dividing by ``1 - alpha`` and writing
``delta = alpha / (1 - alpha)`` gives the equivalent scaled form used
internally, whose optimal value is ``script_V(delta)`` when ``eps = 0``.

Solver
------
For a multiplier ``gamma`` in ``[-1, 0]`` the Lagrangian ::

    L_gamma = KL(x||p) + KL(y||q) + delta KL(z||q) + gamma (1 + delta) H

is jointly convex in ``(x, y, z)``, so its minimizer is found by damped
Newton on the stationarity system (the fixed point ``x ~ p (p/w_x)^gamma``,
``y ~ q (w_y/p)^gamma``, ``z ~ q (w_y/w_x)^gamma`` is the fallback).  A
bracketing root finder on ``gamma`` then drives the constraint to its active
value.  A point found this way is globally optimal: every feasible point has
objective at least ``L_gamma`` at the minimizer, which is reported as
``dual_bound``.  If the constraint cannot be bracketed inside ``[-1, 0]`` an
exact-penalty projected gradient method with seeded restarts takes over.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import optimize

from .prob import Distribution, as_distribution, bhattacharyya, bias, mean, special_law

__all__ = [
    "SolverConfig",
    "ProblemSpec",
    "SolverReport",
    "SolverError",
    "DivergenceResult",
    "CriterionResult",
    "project_simplex",
    "constraint_value",
    "objective_value",
    "solve_V",
    "solve_delta",
    "script_V",
    "divergence_D",
    "criterion_K",
    "kkt_residual",
    "default_delta_grid",
]

LOG_FLOOR = 1e-300


class SolverError(RuntimeError):
    """The solver could not certify a solution."""


@dataclass(frozen=True)
class SolverConfig:
    objective_tol: float = 1e-9
    kkt_tol: float = 1e-6
    gamma_tol: float = 1e-10
    feasibility_tol: float = 1e-8
    max_newton: int = 200
    max_fixed_point: int = 10_000
    damping: float = 0.5
    restarts: int = 8
    restart_seed: int = 0
    pgd_iters: int = 20_000


DEFAULT_CONFIG = SolverConfig()


def _log(v):
    return np.log(np.maximum(v, LOG_FLOOR))


def _kl(a, b) -> float:
    m = a > 0
    return float(np.sum(a[m] * (_log(a[m]) - _log(b[m]))))


@dataclass(frozen=True)
class ProblemSpec:
    """One instance of the problem; give either ``alpha`` or ``delta``."""

    p: Distribution
    q: Distribution
    alpha: float | None = None
    delta: float | None = None
    epsilon: float = 0.0

    def __post_init__(self):
        p = as_distribution(self.p)
        q = as_distribution(self.q)
        if len(p) != len(q):
            raise ValueError("p and q must have the same length")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)
        if (self.alpha is None) == (self.delta is None):
            raise ValueError("give exactly one of alpha and delta")
        if self.alpha is not None:
            a = float(self.alpha)
            if not 0.0 <= a <= 1.0:
                raise ValueError("alpha must lie in [0, 1]")
            d = math.inf if a == 1.0 else a / (1.0 - a)
        else:
            d = float(self.delta)
            if not d >= 0.0:
                raise ValueError("delta must be nonnegative")
            a = 1.0 if math.isinf(d) else d / (1.0 + d)
        if not self.epsilon >= 0.0:
            raise ValueError("epsilon must be nonnegative")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "delta", d)
        object.__setattr__(self, "epsilon", float(self.epsilon))

    @property
    def support(self) -> np.ndarray:
        p, q = self.p.probs, self.q.probs
        idx = np.flatnonzero((p > 0) | (q > 0))
        if np.any(p[idx] == 0) or np.any(q[idx] == 0):
            raise ValueError("p and q must have the same support")
        return idx


@dataclass
class SolverReport:
    """Solution of one problem instance.

    ``objective`` is the value in the ``alpha`` form, ``scaled_objective`` the
    same value divided by ``1 - alpha``.  Multipliers follow the ``alpha``
    form of the first-order conditions.
    """

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    alpha: float
    delta: float
    epsilon: float
    objective: float
    scaled_objective: float
    gamma: float
    lambda_: float = math.nan
    mu_mult: float = math.nan
    nu_mult: float = math.nan
    kkt_residual: float = math.nan
    constraint_slack: float = math.nan
    dual_bound: float = math.nan
    converged: bool = False
    iterations: int = 0
    method: str = ""
    message: str = ""

    def to_dict(self) -> dict:
        out = asdict(self)
        for key in ("x", "y", "z"):
            out[key] = np.asarray(out[key]).tolist()
        for key, val in out.items():
            if isinstance(val, float) and not math.isfinite(val):
                out[key] = str(val)
        return out


# --------------------------------------------------------------- primitives


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-based)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, v.size + 1)
    rho = np.flatnonzero(u - css / k > 0)[-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def _mixtures(x, y, z, d):
    if math.isinf(d):
        return z, z
    return (x + d * z) / (1.0 + d), (y + d * z) / (1.0 + d)


def _raw_constraint(p, x, y, z, d) -> float:
    wx, wy = _mixtures(x, y, z, d)
    return _kl(wx, p) - _kl(wy, p)


def _scaled_objective(p, q, x, y, z, d) -> float:
    return _kl(x, p) + _kl(y, q) + (d * _kl(z, q) if d > 0 else 0.0)


def constraint_value(spec: ProblemSpec, x, y, z) -> float:
    """``H_{alpha,eps}(x, y, z)``; nonnegative means feasible."""
    p = spec.p.probs
    x, y, z = (np.asarray(v, dtype=float) for v in (x, y, z))
    return _raw_constraint(p, x, y, z, spec.delta) + spec.epsilon


def objective_value(spec: ProblemSpec, x, y, z) -> float:
    """Objective of the ``alpha`` form."""
    p, q = spec.p.probs, spec.q.probs
    x, y, z = (np.asarray(v, dtype=float) for v in (x, y, z))
    a = spec.alpha
    return (1.0 - a) * (_kl(x, p) + _kl(y, q)) + a * _kl(z, q)


# -------------------------------------------------- inner convex subproblem


def _lagrangian(p, q, d, g, eps, x, y, z) -> float:
    return _scaled_objective(p, q, x, y, z, d) + g * (1.0 + d) * (
        _raw_constraint(p, x, y, z, d) + eps
    )


def _grad_hess(p, q, d, g, x, y, z):
    wx, wy = _mixtures(x, y, z, d)
    lx, ly, lz = _log(x), _log(y), _log(z)
    lwx, lwy = _log(wx), _log(wy)
    lp, lq = _log(p), _log(q)
    gx = lx - lp + 1.0 + g * (lwx - lp + 1.0)
    gy = ly - lq + 1.0 - g * (lwy - lp + 1.0)
    c = 1.0 / (1.0 + d)
    hxx = 1.0 / x + g * c / wx
    hyy = 1.0 / y - g * c / wy
    if d > 0:
        gz = d * (lz - lq + 1.0) + g * d * (lwx - lwy)
        hzz = d / z + g * d * d * c * (1.0 / wx - 1.0 / wy)
        hxz = g * d * c / wx
        hyz = -g * d * c / wy
    else:
        gz = hzz = hxz = hyz = None
    return (gx, gy, gz), (hxx, hyy, hzz, hxz, hyz)


def _newton(p, q, d, g, eps, state, cfg: SolverConfig):
    """Minimize the convex Lagrangian for fixed ``gamma`` by damped Newton."""
    x, y, z = (s.copy() for s in state)
    n = p.size
    free_z = d > 0
    nb = 3 if free_z else 2
    dim = nb * n
    L = _lagrangian(p, q, d, g, eps, x, y, z)
    for it in range(1, cfg.max_newton + 1):
        (gx, gy, gz), (hxx, hyy, hzz, hxz, hyz) = _grad_hess(p, q, d, g, x, y, z)
        K = np.zeros((dim + nb, dim + nb))
        idx = np.arange(n)
        K[idx, idx] = hxx
        K[n + idx, n + idx] = hyy
        grad = [gx, gy]
        if free_z:
            K[2 * n + idx, 2 * n + idx] = hzz
            K[idx, 2 * n + idx] = K[2 * n + idx, idx] = hxz
            K[n + idx, 2 * n + idx] = K[2 * n + idx, n + idx] = hyz
            grad.append(gz)
        for b in range(nb):
            K[dim + b, b * n : (b + 1) * n] = 1.0
            K[b * n : (b + 1) * n, dim + b] = 1.0
        rhs = np.concatenate([-np.concatenate(grad), np.zeros(nb)])
        try:
            sol = np.linalg.solve(K, rhs)
        except np.linalg.LinAlgError:
            sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
        step = sol[:dim]
        decrement = -float(np.dot(np.concatenate(grad), step))
        if not np.isfinite(decrement):
            return (x, y, z), it, False
        cur = np.concatenate([x, y] + ([z] if free_z else []))
        if decrement < 1e-24 or np.abs(step).max() < 1e-15 * np.abs(cur).max():
            return (x, y, z), it, True
        neg = step < 0
        t = 1.0
        if neg.any():
            t = min(1.0, 0.99 * float(np.min(-cur[neg] / step[neg])))
        if decrement > 1e-10:
            # damped phase; once the decrement is tiny, changes in L drown in
            # rounding and full steps converge quadratically on a convex L
            while True:
                cand = cur + t * step
                nx, ny = cand[:n], cand[n : 2 * n]
                nz = cand[2 * n :] if free_z else z
                L_new = _lagrangian(p, q, d, g, eps, nx, ny, nz)
                if L_new <= L - 1e-4 * t * decrement or t < 1e-12:
                    break
                t *= 0.5
            if t < 1e-12:
                return (x, y, z), it, False
        cand = cur + t * step
        nx, ny = cand[:n], cand[n : 2 * n]
        nz = cand[2 * n :] if free_z else z
        x, y, z = nx / nx.sum(), ny / ny.sum(), nz / nz.sum()
        L = _lagrangian(p, q, d, g, eps, x, y, z)
    return (x, y, z), cfg.max_newton, False


def _fixed_point(p, q, d, g, state, cfg: SolverConfig):
    """Damped iteration of the stationarity conditions in log space."""
    x, y, z = (s.copy() for s in state)
    lp, lq = _log(p), _log(q)
    a = cfg.damping

    def softmax(v):
        v = v - v.max()
        e = np.exp(v)
        return e / e.sum()

    for it in range(1, cfg.max_fixed_point + 1):
        wx, wy = _mixtures(x, y, z, d)
        nx = softmax(lp - g * (_log(wx) - lp))
        ny = softmax(lq + g * (_log(wy) - lp))
        nz = softmax(lq - g * (_log(wx) - _log(wy))) if d > 0 else z
        nx = softmax(a * _log(nx) + (1 - a) * _log(x))
        ny = softmax(a * _log(ny) + (1 - a) * _log(y))
        nz = softmax(a * _log(nz) + (1 - a) * _log(z))
        change = max(np.abs(nx - x).max(), np.abs(ny - y).max(), np.abs(nz - z).max())
        x, y, z = nx, ny, nz
        if change < 1e-13:
            return (x, y, z), it, True
    return (x, y, z), cfg.max_fixed_point, False


def _inner(p, q, d, g, eps, state, cfg):
    sol, it, ok = _newton(p, q, d, g, eps, state, cfg)
    if ok:
        return sol, it, "newton"
    sol, it2, ok = _fixed_point(p, q, d, g, state, cfg)
    if not ok:
        raise SolverError(f"inner minimization failed at gamma={g}")
    return sol, it + it2, "fixed-point"


# ------------------------------------------------------ penalty fallback


def _penalty_pgd(p, q, d, eps, cfg: SolverConfig):
    """Exact-penalty projected gradient with seeded restarts."""
    n = p.size
    rng = np.random.default_rng(cfg.restart_seed)
    bc = np.sqrt(p * q)
    starts = [(bc / bc.sum(), bc / bc.sum(), q.copy())]
    for _ in range(cfg.restarts):
        starts.append(tuple(rng.dirichlet(np.ones(n)) for _ in range(3)))
    rho = 10.0 * (1.0 + d)
    floor = 1e-12
    best, best_val, total_it = None, math.inf, 0

    def phi(x, y, z):
        h = _raw_constraint(p, x, y, z, d) + eps
        return _scaled_objective(p, q, x, y, z, d) + rho * max(0.0, -h), h

    for x, y, z in starts:
        val, h = phi(x, y, z)
        step = 1e-2
        for _ in range(cfg.pgd_iters // (cfg.restarts + 1)):
            total_it += 1
            wx, wy = _mixtures(x, y, z, d)
            lp = _log(p)
            gx = _log(x) - lp + 1.0
            gy = _log(y) - _log(q) + 1.0
            gz = d * (_log(z) - _log(q) + 1.0)
            if h < 0:
                c = 1.0 / (1.0 + d)
                gx = gx - rho * c * (_log(wx) - lp + 1.0)
                gy = gy + rho * c * (_log(wy) - lp + 1.0)
                gz = gz - rho * d * c * (_log(wx) - _log(wy))
            while step > 1e-14:
                nx = np.maximum(project_simplex(x - step * gx), floor)
                ny = np.maximum(project_simplex(y - step * gy), floor)
                nz = np.maximum(project_simplex(z - step * gz), floor)
                nx, ny, nz = nx / nx.sum(), ny / ny.sum(), nz / nz.sum()
                nval, nh = phi(nx, ny, nz)
                if nval < val:
                    break
                step *= 0.5
            if step <= 1e-14 or val - nval < 1e-16:
                break
            x, y, z, val, h = nx, ny, nz, nval, nh
            step *= 2.0
        if h >= -cfg.feasibility_tol and val < best_val:
            best, best_val = (x, y, z), val
    if best is None:
        raise SolverError("penalty fallback found no feasible point")
    return best, total_it


# ------------------------------------------------------------- main solver


def _expand(v, support, size):
    out = np.zeros(size)
    out[support] = v
    return out


def _multipliers(p, q, alpha, eps, x, y, z, gamma):
    """Closed-form multipliers and the max residual of the first-order system."""
    a = alpha
    b = 1.0 - a
    wx, wy = b * x + a * z, b * y + a * z
    lp, lq = _log(p), _log(q)
    ax = b * (_log(x) - lp + 1.0) + gamma * b * (_log(wx) - lp + 1.0)
    ay = b * (_log(y) - lq + 1.0) - gamma * b * (_log(wy) - lp + 1.0)
    az = a * (_log(z) - lq + 1.0) + a * gamma * (_log(wx) - _log(wy))
    res = []
    mults = []
    for arr in (ax, ay, az):
        lo, hi = float(arr.min()), float(arr.max())
        mults.append(-(lo + hi) / 2.0)
        res.append((hi - lo) / 2.0)
    h = _kl(wx, p) - _kl(wy, p) + eps
    res.append(abs(gamma * h))
    return mults, max(res), h


def _finish(spec, sup, x, y, z, gamma, iters, method, cfg, certified=True):
    size = len(spec.p)
    p, q = spec.p.probs[sup], spec.q.probs[sup]
    a, d, eps = spec.alpha, spec.delta, spec.epsilon
    (lam, mu_m, nu_m), resid, slack = _multipliers(p, q, a, eps, x, y, z, gamma)
    objective = (1.0 - a) * (_kl(x, p) + _kl(y, q)) + a * _kl(z, q)
    scaled = _scaled_objective(p, q, x, y, z, d) if not math.isinf(d) else math.nan
    dual = math.nan
    if certified and -1.0 <= gamma <= 0.0:
        dual = objective + gamma * slack
    converged = slack >= -cfg.feasibility_tol and resid <= cfg.kkt_tol
    return SolverReport(
        x=_expand(x, sup, size),
        y=_expand(y, sup, size),
        z=_expand(z, sup, size),
        alpha=a,
        delta=d,
        epsilon=eps,
        objective=objective,
        scaled_objective=scaled,
        gamma=gamma,
        lambda_=lam,
        mu_mult=mu_m,
        nu_mult=nu_m,
        kkt_residual=resid,
        constraint_slack=slack,
        dual_bound=dual,
        converged=bool(converged),
        iterations=iters,
        method=method,
        message="" if converged else "first-order residual or feasibility above tolerance",
    )


def solve_V(spec: ProblemSpec, config: SolverConfig = DEFAULT_CONFIG) -> SolverReport:
    """Solve one instance; the report's ``objective`` approximates ``V(alpha, eps)``.

    Never returns a silently wrong value: if no certified solution is found
    the report has ``converged=False``.
    """
    cfg = config
    sup = spec.support
    p, q = spec.p.probs[sup], spec.q.probs[sup]
    d, eps = spec.delta, spec.epsilon
    target = -eps

    # x = p, y = z = q minimizes the objective outright; keep it if feasible
    if math.isinf(d) or np.allclose(p, q, rtol=0, atol=1e-15) or (
        _raw_constraint(p, p, q, q, d) >= target
    ):
        return _finish(spec, sup, p.copy(), q.copy(), q.copy(), 0.0, 0, "unconstrained", cfg)

    state = [(p.copy(), q.copy(), q.copy())]
    total_iters = [0]
    methods = set()

    def solve_at(g):
        sol, it, how = _inner(p, q, d, g, eps, state[0], cfg)
        state[0] = sol
        total_iters[0] += it
        methods.add(how)
        return sol

    def excess(g):
        x, y, z = solve_at(g)
        return _raw_constraint(p, x, y, z, d) - target

    if d == 0.0:
        # the x-block of the Lagrangian is flat at gamma = -1; x = p otherwise
        g_near = -1.0 + 1e-7
        if excess(g_near) < 0:
            _, y, z = solve_at(-1.0)
            x = _segment_point(p, y, q, target)
            return _finish(
                spec, sup, x, y, z, -1.0, total_iters[0], "lagrangian-bisection", cfg
            )
        lo_g, hi_g = g_near, 0.0
    else:
        # approach gamma = -1 geometrically; the Lagrangian degenerates there
        lo_g, hi_g = None, 0.0
        for k in range(1, 25):
            g = -1.0 + 2.0**-k
            try:
                ex = excess(g)
            except SolverError:
                break
            if ex >= 0:
                lo_g = g
                break
            hi_g = g
        if lo_g is None:
            (x, y, z), it = _penalty_pgd(p, q, d, eps, cfg)
            rep = _finish(spec, sup, x, y, z, math.nan, it, "penalty-pgd", cfg, certified=False)
            rep.gamma = _best_gamma(p, q, spec.alpha, eps, x, y, z)
            return _refresh(rep, spec, sup, cfg)
    g_star = optimize.brentq(excess, lo_g, hi_g, xtol=cfg.gamma_tol, rtol=4 * np.finfo(float).eps)
    sol = solve_at(g_star)
    # bracket gamma* between a feasible and an infeasible inner solution
    good, bad = None, None
    if _raw_constraint(p, *sol, d) >= target:
        good = (g_star, sol)
        g_hi, step = g_star, cfg.gamma_tol
        while g_hi < hi_g:
            g_hi = min(hi_g, g_hi + step)
            s_hi = solve_at(g_hi)
            if _raw_constraint(p, *s_hi, d) < target:
                bad = (g_hi, s_hi)
                break
            good = (g_hi, s_hi)
            step *= 4.0
    else:
        bad = (g_star, sol)
        g_lo, step = g_star, cfg.gamma_tol
        while g_lo > lo_g:
            g_lo = max(lo_g, g_lo - step)
            s_lo = solve_at(g_lo)
            if _raw_constraint(p, *s_lo, d) >= target:
                good = (g_lo, s_lo)
                break
            bad = (g_lo, s_lo)
            step *= 4.0
    if good is None:
        good = (lo_g, solve_at(lo_g))
    if bad is not None:
        for _ in range(80):
            g_mid = 0.5 * (good[0] + bad[0])
            if not min(good[0], bad[0]) < g_mid < max(good[0], bad[0]):
                break
            s_mid = solve_at(g_mid)
            if _raw_constraint(p, *s_mid, d) >= target:
                good = (g_mid, s_mid)
            else:
                bad = (g_mid, s_mid)
    g_star, (x, y, z) = good
    if bad is not None:
        # the dual may have a kink at gamma*: both ends then minimize the same
        # convex Lagrangian, and so does every point of the segment joining them
        x, y, z = _active_on_segment(p, d, target, good[1], bad[1])
    method = "lagrangian-bisection" + ("" if methods == {"newton"} else "+fixed-point")
    return _finish(spec, sup, x, y, z, float(g_star), total_iters[0], method, cfg)


def _active_on_segment(p, d, target, good, bad):
    """Point of the segment from ``good`` to ``bad`` where the constraint is active."""
    a = np.concatenate(good)
    b = np.concatenate(bad)
    n = p.size

    def split(t):
        v = a + t * (b - a)
        return v[:n], v[n : 2 * n], v[2 * n :]

    def gap(t):
        return _raw_constraint(p, *split(t), d) - target

    if gap(0.0) < 0 or gap(1.0) >= 0:
        return good
    t = optimize.brentq(gap, 0.0, 1.0, xtol=1e-16)
    if gap(t) < 0:
        t = max(0.0, t - 1e-16)
    x, y, z = split(t)
    return (x, y, z) if gap(t) >= 0 else good


def _segment_point(p, y, q, target):
    """Point on [p, y] with KL(x||p) - KL(y||p) = target (degenerate delta = 0 case)."""
    ky = _kl(y, p)

    def gap(s):
        return _kl(p + s * (y - p), p) - ky - target

    if gap(1.0) <= 0 or gap(0.0) >= 0:
        return y.copy()
    s = optimize.brentq(gap, 0.0, 1.0, xtol=1e-15)
    return p + s * (y - p)


def _best_gamma(p, q, alpha, eps, x, y, z):
    grid = np.linspace(-2.0, 0.0, 2001)
    res = [_multipliers(p, q, alpha, eps, x, y, z, g)[1] for g in grid]
    return float(grid[int(np.argmin(res))])


def _refresh(rep, spec, sup, cfg):
    x, y, z = rep.x[sup], rep.y[sup], rep.z[sup]
    new = _finish(spec, sup, x, y, z, rep.gamma, rep.iterations, rep.method, cfg, certified=False)
    return new


def solve_delta(
    p, q, delta: float, epsilon: float = 0.0, config: SolverConfig = DEFAULT_CONFIG
) -> SolverReport:
    return solve_V(ProblemSpec(p, q, delta=delta, epsilon=epsilon), config)


def script_V(p, q, delta: float, config: SolverConfig = DEFAULT_CONFIG) -> float:
    """Optimal value of the scaled problem at ``delta`` (with ``eps = 0``)."""
    rep = solve_delta(p, q, delta, 0.0, config)
    if not rep.converged:
        raise SolverError(f"solver did not converge at delta={delta}: {rep.message}")
    return rep.scaled_objective


def default_delta_grid() -> np.ndarray:
    return np.concatenate([[0.0], np.logspace(-2, 3, 40)])


@dataclass
class DivergenceResult:
    value: float
    delta: float
    bhattacharyya: float
    grid: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    matches_bhattacharyya: bool = False

    def __float__(self):
        return self.value


def divergence_D(
    p, q, grid=None, refine: bool = True, config: SolverConfig = DEFAULT_CONFIG, rtol: float = 1e-6
) -> DivergenceResult:
    """Infimum over ``delta`` of ``script_V``, taken on a grid and refined locally."""
    p = as_distribution(p)
    q = as_distribution(q)
    db = bhattacharyya(p, q)
    grid = default_delta_grid() if grid is None else np.asarray(grid, dtype=float)
    vals = np.array([script_V(p, q, d, config) for d in grid])
    i = int(np.argmin(vals))
    best_val, best_d = float(vals[i]), float(grid[i])
    if refine and grid.size > 1 and best_val > 0:
        lo = grid[max(i - 1, 0)]
        hi = grid[min(i + 1, grid.size - 1)]
        if hi > lo:
            if lo > 0:
                fun = lambda t: script_V(p, q, math.exp(t), config)  # noqa: E731
                bounds = (math.log(lo), math.log(hi))
                back = math.exp
            else:
                fun = lambda t: script_V(p, q, t, config)  # noqa: E731
                bounds = (lo, hi)
                back = float
            res = optimize.minimize_scalar(
                fun, bounds=bounds, method="bounded", options={"xatol": 1e-6}
            )
            if res.fun < best_val:
                best_val, best_d = float(res.fun), float(back(res.x))
    match = abs(best_val - db) <= rtol * max(db, 1e-300) + config.objective_tol
    return DivergenceResult(
        value=best_val,
        delta=best_d,
        bhattacharyya=db,
        grid=grid,
        values=vals,
        matches_bhattacharyya=bool(match),
    )


@dataclass
class CriterionResult:
    value: float
    log_mean: float
    divergence: float
    delta: float
    bhattacharyya: float
    matches_bhattacharyya: bool

    def to_dict(self) -> dict:
        return asdict(self)


def criterion_K(mu, f, grid=None, config: SolverConfig = DEFAULT_CONFIG) -> CriterionResult:
    """``log m(mu) - D(bias(mu) || nu)``; negative values mean identifiable."""
    mu = as_distribution(mu)
    m = mean(mu)
    if m <= 0:
        raise ValueError("mean of mu must be positive")
    nu = special_law(mu, f)
    res = divergence_D(bias(mu), nu, grid=grid, config=config)
    lm = math.log(m)
    return CriterionResult(
        value=lm - res.value,
        log_mean=lm,
        divergence=res.value,
        delta=res.delta,
        bhattacharyya=res.bhattacharyya,
        matches_bhattacharyya=res.matches_bhattacharyya,
    )


def kkt_residual(spec: ProblemSpec, report: SolverReport) -> float:
    """Largest residual of the first-order system at the report's point.

    Multipliers of the three sum constraints are chosen in closed form; the
    inequality multiplier is ``report.gamma``.  Only meaningful together with
    feasibility: ``x = p, y = z = q`` with ``gamma = 0`` is stationary but
    infeasible.
    """
    sup = spec.support
    x, y, z = (np.asarray(v, dtype=float)[sup] for v in (report.x, report.y, report.z))
    if min(x.min(), y.min(), z.min()) <= 0:
        raise ValueError("KKT undefined at boundary: a coordinate is zero on the support")
    p, q = spec.p.probs[sup], spec.q.probs[sup]
    return _multipliers(p, q, spec.alpha, spec.epsilon, x, y, z, report.gamma)[1]
