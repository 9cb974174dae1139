"""Allocation methods: RAND, PB, SDR, GREED-SDP and GREED-LS.

The two greedy methods share one outer loop. Experiment ``j`` (0-based here)
is chosen to maximize the Schur complement of the leading ``j x j`` block of
the precision matrix, which is the quadratic form ``x' C_j x`` returned by
:func:`subproblem_matrix`. GREED-SDP solves that binary quadratic program by
SDP relaxation plus hyperplane rounding; GREED-LS by spectral initialization
and best-single-flip ascent (deterministic).
"""
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import _backend, numerics, sdp
from .errors import IncompatibleDimensions, NotFactorizable, SingularSubPrecision
from .model import AllocationSet, coupling_matrix, model_constants

log = logging.getLogger(__name__)

METHODS = ("rand", "pb", "sdr", "greedy_sdp", "greedy_ls")
RANDOMIZED_METHODS = ("rand", "pb", "sdr", "greedy_sdp")
SUB_PRECISION_JITTER = (0.0, 1e-10, 1e-8, 1e-6)
PB12_GENERATOR = (1, 1, -1, 1, 1, 1, -1, -1, -1, 1, -1)


@dataclass(frozen=True)
class DesignRequest:
    cov: object
    noise: object
    method: str
    seed: int = 0
    time_limit_per_sdp: float = 50.0
    rounding_draws: int = 1

    def __post_init__(self):
        method = self.method.replace("-", "_")
        object.__setattr__(self, "method", method)
        if method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if not self.time_limit_per_sdp > 0:
            raise ValueError("time_limit_per_sdp must be positive")
        if self.rounding_draws < 1:
            raise ValueError("rounding_draws must be >= 1")

    @property
    def n(self):
        return self.cov.n

    @property
    def k(self):
        return self.noise.k


@dataclass
class GreedyState:
    """Allocations fixed so far and the pieces of the next subproblem.

    ``b_matrix`` column ``l`` is ``(1/c) R_{l,j} P x_l`` for the target
    experiment ``j``; ``sub_precision`` is the leading block of the precision
    matrix at the chosen allocations.
    """

    chosen: list = field(default_factory=list)
    sub_precision: np.ndarray = None
    b_matrix: np.ndarray = None


def greedy_state(cov, consts, chosen, j):
    """State for target experiment ``j`` given the ``j`` earlier allocations in ``chosen``."""
    chosen = [np.asarray(x, dtype=np.float64) for x in chosen]
    if len(chosen) != j:
        raise ValueError(f"experiment {j} needs exactly {j} prior allocations")
    if j == 0:
        return GreedyState([], np.zeros((0, 0)), np.zeros((cov.n, 0)))
    x = np.column_stack(chosen)
    px = cov.projector @ x
    s = coupling_matrix(consts)
    sub = s[:j, :j] * (x.T @ px) / consts.c
    b = px * (consts.r[:j, j] / consts.c)[None, :]
    return GreedyState(chosen, 0.5 * (sub + sub.T), b)


def _sub_precision_factor(sub):
    scale = max(numerics.max_abs(sub), np.finfo(float).tiny)
    for rel in SUB_PRECISION_JITTER:
        try:
            return numerics.chol_psd(sub, rel * scale)
        except NotFactorizable:
            continue
    raise SingularSubPrecision("leading precision block is singular after jitter")


def subproblem_matrix(state, cov, consts, j):
    """Cost matrix ``C_j = (1/c) Q_j P - B (P*)^-1 B'`` of greedy step ``j`` (0-based)."""
    c_j = (consts.q[j] / consts.c) * cov.projector
    if j > 0:
        low = _sub_precision_factor(state.sub_precision)
        half = numerics._forward(low, state.b_matrix.T)
        c_j = c_j - half.T @ half
    return 0.5 * (c_j + c_j.T)


def quad_value(c, x):
    x = np.asarray(x, dtype=np.float64)
    return float(x @ c @ x)


def _solve_by_sdp(c, rng, req):
    sol = sdp.solve_diag_sdp(sdp.make_problem(c), rng, time_limit=req.time_limit_per_sdp)
    best_x, best_val = None, -np.inf
    for _ in range(req.rounding_draws):
        v = sdp.sample_unit_sphere(sol.factor.shape[1], rng)
        x = sdp.hyperplane_round(sol, v)
        val = quad_value(c, x)
        if val > best_val:
            best_x, best_val = x, val
    return best_x


def local_search(c, time_limit=50.0):
    """Deterministic ascent for ``max x' C x`` over {-1, +1}^N.

    Starts from the sign pattern of the leading eigenvector (zeros map to +1)
    and applies best-single-flip moves until no flip improves. Returns
    ``(x, converged)``; ``converged`` is False if the time limit cut it short.
    """
    c = np.asarray(c, dtype=np.float64)
    n = c.shape[0]
    _, u = numerics.eigh_sym(c)
    x = np.where(u[:, 0] >= 0.0, 1.0, -1.0)
    tol = 1e-10 * (1.0 + numerics.max_abs(c))
    deadline = time.monotonic() + time_limit
    chunk = 10 * n
    while True:
        x, _, done = _backend.best_flip_ascent(c, x, chunk, tol)
        if done:
            return x.astype(np.int64), True
        if time.monotonic() > deadline:
            log.warning("local search hit the %.1fs time limit", time_limit)
            return x.astype(np.int64), False


def _greedy(req, solve_sub):
    cov, noise = req.cov, req.noise
    consts = model_constants(noise)
    chosen = []
    for j in range(noise.k):
        state = greedy_state(cov, consts, chosen, j)
        c_j = subproblem_matrix(state, cov, consts, j)
        chosen.append(solve_sub(c_j))
    return AllocationSet(np.column_stack(chosen))


def greedy_sdp(req):
    rng = sdp.make_rng(req.seed)
    return _greedy(req, lambda c: _solve_by_sdp(c, rng, req))


def greedy_local_search(req):
    return _greedy(req, lambda c: local_search(c, req.time_limit_per_sdp)[0])


def sdr(req):
    """One SDP on the projector, then K orthonormal rounding directions."""
    n, k = req.n, req.k
    if k > n:
        raise IncompatibleDimensions("SDR needs K <= N")
    rng = sdp.make_rng(req.seed)
    sol = sdp.solve_diag_sdp(sdp.make_problem(req.cov.projector), rng,
                             time_limit=req.time_limit_per_sdp)
    factor = sol.factor
    if factor.shape[1] < k:
        factor = np.hstack([factor, np.zeros((n, k - factor.shape[1]))])
    dirs = sdp.random_orthonormal_k(factor.shape[1], k, rng)
    cols = [sdp.hyperplane_round(factor, dirs[:, j]) for j in range(k)]
    return AllocationSet(np.column_stack(cols))


def rand_allocation(req):
    rng = sdp.make_rng(req.seed)
    return AllocationSet(2 * rng.integers(0, 2, size=(req.n, req.k)) - 1)


def sylvester_hadamard(order):
    """Sylvester-type Hadamard matrix; ``order`` must be a power of two."""
    if order < 1 or order & (order - 1):
        raise ValueError("order must be a power of two")
    h = np.ones((1, 1), dtype=np.int64)
    while h.shape[0] < order:
        h = np.block([[h, h], [h, -h]])
    return h


def plackett_burman_12():
    """12-run Plackett-Burman design (11 columns) from the standard generator row."""
    gen = np.array(PB12_GENERATOR, dtype=np.int64)
    rows = [np.roll(gen, i) for i in range(11)]
    rows.append(-np.ones(11, dtype=np.int64))
    return np.vstack(rows)


def pb_base_design(n, k):
    """Base two-level orthogonal design with at least ``k`` columns whose run count divides ``n``."""
    if k <= 7 and n % 8 == 0:
        return sylvester_hadamard(8)[:, 1:k + 1]
    if k <= 11 and n % 12 == 0:
        return plackett_burman_12()[:, :k]
    raise IncompatibleDimensions(
        f"no Plackett-Burman base for N={n}, K={k}: need K<=7 with 8|N or K<=11 with 12|N")


def plackett_burman_allocation(req):
    base = pb_base_design(req.n, req.k)
    stacked = np.tile(base, (req.n // base.shape[0], 1))
    rng = sdp.make_rng(req.seed)
    return AllocationSet(stacked[rng.permutation(req.n)])


_DISPATCH = {
    "rand": rand_allocation,
    "pb": plackett_burman_allocation,
    "sdr": sdr,
    "greedy_sdp": greedy_sdp,
    "greedy_ls": greedy_local_search,
}


def design(req):
    """Build the allocation for ``req.method``."""
    return _DISPATCH[req.method](req)
