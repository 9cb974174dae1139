"""Diagonal-constrained SDP ``max Tr(C W) s.t. diag(W) = 1, W psd`` and rounding.

The SDP is solved in factored form ``W = V V'`` with every row of ``V`` on the
unit sphere (Burer-Monteiro), by Riemannian gradient ascent with
Barzilai-Borwein steps and an Armijo backtracking safeguard. The factor is what
hyperplane rounding needs, so ``W`` itself is never formed.
"""
import logging
import math
import time
from dataclasses import dataclass

import numpy as np

from . import numerics
from .errors import InfeasibleNumerics, NotFactorizable

log = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-8
PSD_TOL = 1e-6
GRAD_TOL = 1e-6
MAX_ITER = 5000
RESTARTS = 3
ARMIJO = 1e-4
MAX_BACKTRACK = 40


@dataclass(frozen=True)
class SdpProblem:
    c_matrix: np.ndarray

    @property
    def n(self):
        return self.c_matrix.shape[0]


@dataclass(frozen=True)
class SdpSolution:
    factor: np.ndarray
    value: float
    feasibility_residual: float
    iterations: int
    grad_norm: float
    converged: bool
    timed_out: bool = False

    @property
    def gram(self):
        return self.factor @ self.factor.T


def make_rng(seed):
    """Random source used everywhere: numpy PCG64 seeded from an integer or SeedSequence."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def make_problem(c, symmetry_tol=SYMMETRY_TOL, psd_tol=PSD_TOL):
    """Validate ``c`` (symmetric, min eigenvalue >= -psd_tol * max|c|) and wrap it."""
    c = np.asarray(c, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != c.shape[1] or c.shape[0] < 1:
        raise ValueError("cost matrix must be square")
    if not np.all(np.isfinite(c)):
        raise InfeasibleNumerics("cost matrix has non-finite entries")
    scale = numerics.max_abs(c)
    if np.max(np.abs(c - c.T)) > symmetry_tol * max(1.0, scale):
        raise ValueError("cost matrix is not symmetric")
    c = 0.5 * (c + c.T)
    if scale > 0:
        # c + tol*scale*I is PD exactly when min eig > -tol*scale
        try:
            numerics.chol_psd(c, psd_tol * scale)
        except NotFactorizable as exc:
            raise ValueError("cost matrix is not positive semi-definite") from exc
    return SdpProblem(c)


def rank_budget(n):
    return min(n, math.ceil(math.sqrt(2 * n)) + 1) if n > 1 else 1


def _normalize_rows(v):
    norms = np.linalg.norm(v, axis=1)
    if not np.all(np.isfinite(norms)) or np.any(norms < 1e-300):
        raise InfeasibleNumerics("row normalization collapsed")
    return v / norms[:, None]


def _riemannian_grad(cv, v):
    g = 2.0 * cv
    return g - np.sum(g * v, axis=1)[:, None] * v


def _ascend(c, v, deadline, tol, max_iter):
    cv = c @ v
    f = float(np.sum(cv * v))
    rg = _riemannian_grad(cv, v)
    gnorm = float(np.linalg.norm(rg))
    step = 1.0 / (2.0 * max(np.linalg.norm(c, ord=1), 1e-300))
    prev_v = prev_rg = None
    it = 0
    timed_out = False
    while gnorm > tol and it < max_iter:
        if time.monotonic() > deadline:
            timed_out = True
            break
        if prev_v is not None:
            s = v - prev_v
            y = rg - prev_rg
            sy = abs(float(np.sum(s * y)))
            if sy > 0:
                step = float(np.sum(s * s)) / sy
        step = min(max(step, 1e-12), 1e12)
        gg = gnorm * gnorm
        for _ in range(MAX_BACKTRACK):
            v_new = _normalize_rows(v + step * rg)
            cv_new = c @ v_new
            f_new = float(np.sum(cv_new * v_new))
            if f_new >= f + ARMIJO * step * gg:
                break
            step *= 0.5
        else:
            # no ascent step found; stationary to working precision
            break
        prev_v, prev_rg = v, rg
        v, cv, f = v_new, cv_new, f_new
        rg = _riemannian_grad(cv, v)
        gnorm = float(np.linalg.norm(rg))
        it += 1
    return v, f, it, gnorm, gnorm <= tol, timed_out


def solve_diag_sdp(prob, rng, time_limit=50.0, rank=None, restarts=RESTARTS,
                   grad_tol=GRAD_TOL, max_iter=MAX_ITER):
    """Solve the unit-diagonal SDP for ``prob.c_matrix``.

    Runs ``restarts`` independent random starts and keeps the best value. If
    ``time_limit`` seconds elapse the best feasible iterate is returned with
    ``timed_out=True`` instead of raising.
    """
    if time_limit <= 0:
        raise ValueError("time_limit must be positive")
    if not isinstance(prob, SdpProblem):
        prob = make_problem(prob)
    c = prob.c_matrix
    n = prob.n
    r = rank or rank_budget(n)
    rng = make_rng(rng)
    deadline = time.monotonic() + time_limit
    tol = grad_tol * (1.0 + numerics.max_abs(c))
    best = None
    total_it = 0
    hit_limit = False
    for attempt in range(max(1, restarts)):
        v0 = _normalize_rows(rng.standard_normal((n, r)))
        if attempt > 0 and time.monotonic() > deadline:
            hit_limit = True
            break
        v, f, it, gnorm, conv, timed_out = _ascend(c, v0, deadline, tol, max_iter)
        total_it += it
        if best is None or f > best[1]:
            best = (v, f, gnorm, conv)
        if timed_out:
            hit_limit = True
            log.warning("SDP solve hit the %.1fs time limit", time_limit)
            break
    v, f, gnorm, conv = best
    resid = float(np.max(np.abs(np.sum(v * v, axis=1) - 1.0)))
    return SdpSolution(
        factor=v,
        value=f,
        feasibility_residual=resid,
        iterations=total_it,
        grad_norm=gnorm,
        converged=conv,
        timed_out=hit_limit,
    )


def sample_unit_sphere(n, rng):
    """Uniform draw from the unit sphere in R^n (normalized Gaussian)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = make_rng(rng)
    while True:
        g = rng.standard_normal(n)
        norm = np.linalg.norm(g)
        if norm > 0:
            return g / norm


def hyperplane_round(sol, v):
    """+1 where the projection of a factor row onto ``v`` is >= 0, else -1."""
    factor = sol.factor if isinstance(sol, SdpSolution) else np.asarray(sol)
    v = np.asarray(v, dtype=np.float64)
    if v.shape[0] != factor.shape[1]:
        raise ValueError(f"v has length {v.shape[0]}, factor has {factor.shape[1]} columns")
    return np.where(factor @ v >= 0.0, 1, -1).astype(np.int64)


def random_orthonormal_k(n, k, rng):
    """``k`` mutually orthonormal vectors in R^n.

    One uniform sphere vector is completed to an orthonormal basis and ``k`` of
    the basis vectors are picked uniformly without replacement.
    """
    if not 1 <= k <= n:
        raise ValueError("need 1 <= k <= n")
    rng = make_rng(rng)
    q = numerics.orthonormal_completion(sample_unit_sphere(n, rng))
    idx = rng.choice(n, size=k, replace=False)
    return q[:, idx]
