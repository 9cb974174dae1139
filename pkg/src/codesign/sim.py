"""Response simulation, GLS estimation and the factorial simulation study."""
import hashlib
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import numerics
from .designs import METHODS, DesignRequest, design
from .errors import CodesignError, NotFactorizable, RankDeficient, Singular
from .model import (
    NoiseSpec,
    d_efficiency,
    hadamard_upper_bound,
    precision_matrix,
    projection_complement,
    treatment_variances,
    variance_floor,
)
from .sdp import make_rng

log = logging.getLogger(__name__)

BOUND_METHOD = "bound"


@dataclass(frozen=True)
class ResponseModel:
    beta: np.ndarray
    gamma: np.ndarray
    noise: NoiseSpec

    @classmethod
    def null(cls, p, noise):
        """All effects zero; design metrics do not depend on them."""
        return cls(np.zeros(noise.k), np.zeros((p, noise.k)), noise)


@dataclass(frozen=True)
class GlsEstimate:
    beta_hat: np.ndarray
    gamma_hat: np.ndarray


@dataclass(frozen=True)
class SimulationConfig:
    n: int = 96
    p_values: tuple = (10, 70)
    k_values: tuple = (4, 8)
    tau_values: tuple = (0.25, 2.0)
    covariate_matrices: int = 5
    replications: int = 100
    methods: tuple = METHODS
    seed: int = 0
    time_limit: float = 50.0

    def __post_init__(self):
        for name in ("p_values", "k_values", "tau_values", "methods"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        object.__setattr__(self, "methods",
                           tuple(m.replace("-", "_") for m in self.methods))
        if self.n < 3 or self.covariate_matrices < 1 or self.replications < 1:
            raise ValueError("n >= 3, covariate_matrices >= 1 and replications >= 1 required")
        if not self.p_values or any(not 2 <= p < self.n for p in self.p_values):
            raise ValueError("every p must satisfy 2 <= p < n")
        if not self.k_values or any(k < 1 for k in self.k_values):
            raise ValueError("every k must be >= 1")
        if not self.tau_values or any(t < 0 for t in self.tau_values):
            raise ValueError("every tau must be >= 0")
        bad = [m for m in self.methods if m not in METHODS]
        if bad or not self.methods:
            raise ValueError(f"unknown methods {bad}; expected a subset of {METHODS}")
        if not self.time_limit > 0:
            raise ValueError("time_limit must be positive")

    @classmethod
    def desk(cls, **overrides):
        """Reduced grid: 2 covariate matrices, 10 replications."""
        return replace(cls(covariate_matrices=2, replications=10), **overrides)


@dataclass(frozen=True)
class ReplicationRecord:
    method: str
    cov_index: int
    k: int
    tau: float
    p: int
    replication: int
    d_eff: float
    var_first: float
    var_last: float
    wall_time: float
    hadamard_upper: float
    variance_floor: float
    error: str = None

    @property
    def cell(self):
        return (self.cov_index, self.k, self.tau, self.p)


def derive_seed(*parts):
    """Stable 64-bit seed from a tuple of identifiers (independent of PYTHONHASHSEED)."""
    digest = hashlib.sha256(repr(parts).encode()).digest()
    return int.from_bytes(digest[:8], "little")


def generate_covariates(n, p, rng, attempts=3):
    """Intercept column plus ``p - 1`` i.i.d. standard normal columns."""
    if not 2 <= p < n:
        raise ValueError("need 2 <= p < n")
    rng = make_rng(rng)
    for _ in range(attempts):
        z = np.column_stack([np.ones(n), rng.standard_normal((n, p - 1))])
        try:
            return projection_complement(z)
        except RankDeficient:
            continue
    raise RankDeficient(f"no full-rank covariate draw in {attempts} attempts")


def simulate_responses(model, cov, alloc, rng, noiseless=False):
    """N x K responses ``y_ij = beta_j x_ij + z_i' gamma_j + u_i + e_ij``."""
    n, k = alloc.n, alloc.k
    y = alloc.x * np.asarray(model.beta, dtype=float)[None, :] + cov.z @ model.gamma
    if noiseless:
        return y
    rng = make_rng(rng)
    u = rng.normal(0.0, np.sqrt(model.noise.tau_sq), size=n)
    e = rng.standard_normal((n, k)) * np.sqrt(np.asarray(model.noise.sigma_sq))[None, :]
    return y + u[:, None] + e


def gls_operator(cov, alloc, noise):
    """Matrix ``A`` with ``A @ vec(Y) = [beta_hat; gamma_hat_1; ...; gamma_hat_K]``.

    ``vec`` stacks the columns of the N x K response matrix. Uses
    ``V^-1 = M kron I_N`` with ``M = diag(w) - (tau^2/c) w w'``.
    """
    n, p, k = cov.n, cov.p, alloc.k
    w = 1.0 / np.asarray(noise.sigma_sq)
    c = 1.0 + noise.tau_sq * w.sum()
    m = np.diag(w) - (noise.tau_sq / c) * np.outer(w, w)
    # per-experiment regressors [x_j, Z]; parameters ordered (beta_j, gamma_j)
    blocks = [np.column_stack([alloc.x[:, j], cov.z]).astype(float) for j in range(k)]
    d = p + 1
    info = np.zeros((k * d, k * d))
    cross = np.zeros((k * d, n * k))
    for j in range(k):
        for jj in range(k):
            if m[j, jj] == 0.0:
                continue
            info[j * d:(j + 1) * d, jj * d:(jj + 1) * d] = m[j, jj] * blocks[j].T @ blocks[jj]
            cross[j * d:(j + 1) * d, jj * n:(jj + 1) * n] = m[j, jj] * blocks[j].T
    try:
        low = numerics.chol_psd(0.5 * (info + info.T))
    except NotFactorizable as exc:
        raise Singular("X' V^-1 X is singular") from exc
    per_exp = numerics.cho_solve(low, cross)
    # reorder from (beta_j, gamma_j) blocks to (beta_1..beta_K, gamma_1..gamma_K)
    order = [j * d for j in range(k)] + [j * d + 1 + i for j in range(k) for i in range(p)]
    return per_exp[order]


def gls_estimate(responses, cov, alloc, noise, operator=None):
    """GLS estimates of the treatment and covariate effects."""
    y = np.asarray(responses, dtype=float)
    a = gls_operator(cov, alloc, noise) if operator is None else operator
    theta = a @ y.reshape(-1, order="F")
    k = alloc.k
    return GlsEstimate(theta[:k], theta[k:].reshape(k, cov.p).T)


def _evaluate(cov, alloc, noise):
    prec = precision_matrix(cov, alloc, noise)
    var = treatment_variances(prec)
    return d_efficiency(prec), float(var[0]), float(var[-1])


def _run_task(task):
    method, cell, rep, z, seed, time_limit, hu, vf = task
    cov_index, k, tau, p = cell
    noise = NoiseSpec.from_sd(tau, 1.0, k)
    cov = projection_complement(z)
    start = time.perf_counter()
    try:
        alloc = design(DesignRequest(cov, noise, method, seed=seed, time_limit_per_sdp=time_limit))
        d_eff, v1, vk = _evaluate(cov, alloc, noise)
        err = None
    except CodesignError as exc:
        log.warning("%s failed in cell %s rep %d: %s", method, cell, rep, exc)
        d_eff = v1 = vk = float("nan")
        err = type(exc).__name__
    wall = time.perf_counter() - start
    return ReplicationRecord(method, cov_index, k, tau, p, rep, d_eff, v1, vk, wall, hu, vf, err)


def _sort_key(rec, method_order):
    rank = method_order.get(rec.method, len(method_order))
    return (rec.p, rec.cov_index, rec.k, rec.tau, rank, rec.replication)


def study_tasks(config):
    """Expand the grid into per-replication tasks plus one bound record per cell."""
    covs = {}
    for p in config.p_values:
        for idx in range(config.covariate_matrices):
            covs[p, idx] = generate_covariates(
                config.n, p, derive_seed(config.seed, "covariates", p, idx))
    tasks, bounds = [], []
    for p in config.p_values:
        for idx in range(config.covariate_matrices):
            cov = covs[p, idx]
            for k in config.k_values:
                for tau in config.tau_values:
                    cell = (idx, k, float(tau), p)
                    noise = NoiseSpec.from_sd(tau, 1.0, k)
                    hu = hadamard_upper_bound(cov, noise)
                    vf = variance_floor(noise, config.n)
                    bounds.append(ReplicationRecord(BOUND_METHOD, idx, k, float(tau), p, 0,
                                                    hu, vf, vf, 0.0, hu, vf))
                    cell_seed = derive_seed(config.seed, *cell)
                    for method in config.methods:
                        reps = 1 if method == "greedy_ls" else config.replications
                        for rep in range(reps):
                            tasks.append((method, cell, rep, cov.z,
                                          derive_seed(cell_seed, method, rep),
                                          config.time_limit, hu, vf))
    return tasks, bounds


def run_study(config, jobs=1, progress=None):
    """Run every method over the grid; returns method records followed by bound records.

    Randomized methods run ``config.replications`` times per cell, the
    deterministic ``greedy_ls`` once. Output order is independent of ``jobs``.
    """
    tasks, bounds = study_tasks(config)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_run_task, tasks, chunksize=4))
    else:
        records = []
        for i, task in enumerate(tasks):
            records.append(_run_task(task))
            if progress:
                progress(i + 1, len(tasks))
    order = {m: i for i, m in enumerate(METHODS)}
    order[BOUND_METHOD] = len(METHODS)
    records.sort(key=lambda r: _sort_key(r, order))
    bounds.sort(key=lambda r: _sort_key(r, order))
    return records + bounds


@dataclass
class SummaryRow:
    method: str
    cov_index: int
    k: int
    tau: float
    p: int
    count: int
    stats: dict = field(default_factory=dict)


def summarize(records):
    """Per (method, cell) mean/sd/min/max of d_eff, var_first, var_last and gaps to the bounds.

    Failed records are skipped. ``sd`` is the sample standard deviation (0 for one record).
    """
    if not records:
        raise ValueError("no records to summarize")
    groups = {}
    for rec in records:
        if rec.error is None:
            groups.setdefault((rec.method,) + rec.cell, []).append(rec)
    rows = []
    for (method, idx, k, tau, p), recs in groups.items():
        row = SummaryRow(method, idx, k, tau, p, len(recs))
        for name in ("d_eff", "var_first", "var_last"):
            vals = np.array([getattr(r, name) for r in recs])
            row.stats[f"{name}_mean"] = float(vals.mean())
            row.stats[f"{name}_sd"] = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
            row.stats[f"{name}_min"] = float(vals.min())
            row.stats[f"{name}_max"] = float(vals.max())
        hu, vf = recs[0].hadamard_upper, recs[0].variance_floor
        row.stats["d_eff_gap"] = hu - row.stats["d_eff_mean"]
        row.stats["var_first_gap"] = row.stats["var_first_mean"] - vf
        row.stats["var_last_gap"] = row.stats["var_last_mean"] - vf
        rows.append(row)
    return rows
