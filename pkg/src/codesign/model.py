"""Statistical model: precision of the treatment effects and its bounds.

Notation follows the usual mixed-effects layout: ``N`` subjects, ``K``
experiments, ``p`` covariates (intercept first), subject random-effect
variance ``tau_sq`` and per-experiment error variances ``sigma_sq``.
"""
from dataclasses import dataclass, field

import numpy as np

from . import numerics
from .errors import NotFactorizable, RankDeficient, Singular, UnequalSigmas

SINGULAR_REL_TOL = 1e-10


@dataclass(frozen=True)
class CovariateMatrix:
    """Covariates ``z`` (N x p) and the projector onto the complement of their span."""

    z: np.ndarray
    projector: np.ndarray = field(repr=False)

    @property
    def n(self):
        return self.z.shape[0]

    @property
    def p(self):
        return self.z.shape[1]


@dataclass(frozen=True)
class NoiseSpec:
    tau_sq: float
    sigma_sq: tuple

    def __post_init__(self):
        sig = tuple(float(s) for s in np.atleast_1d(self.sigma_sq))
        object.__setattr__(self, "sigma_sq", sig)
        object.__setattr__(self, "tau_sq", float(self.tau_sq))
        if len(sig) < 1:
            raise ValueError("need at least one experiment")
        if self.tau_sq < 0 or not np.isfinite(self.tau_sq):
            raise ValueError("tau_sq must be a finite non-negative number")
        if any(not (s > 0 and np.isfinite(s)) for s in sig):
            raise ValueError("every sigma_sq must be positive and finite")

    @classmethod
    def from_sd(cls, tau, sigma, k=None):
        """Build from standard deviations; a scalar ``sigma`` is broadcast to ``k`` experiments."""
        sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
        if sigma.size == 1 and k is not None:
            sigma = np.repeat(sigma, k)
        if k is not None and sigma.size != k:
            raise ValueError(f"expected 1 or {k} sigma values, got {sigma.size}")
        return cls(float(tau) ** 2, tuple(sigma**2))

    @property
    def k(self):
        return len(self.sigma_sq)

    @property
    def equal_sigmas(self):
        return all(s == self.sigma_sq[0] for s in self.sigma_sq)

    @property
    def b(self):
        """Noise ratio ``tau_sq / sigma_sq``; only defined for equal sigmas."""
        if not self.equal_sigmas:
            raise UnequalSigmas("b is defined only when every sigma_sq is equal")
        return self.tau_sq / self.sigma_sq[0]


@dataclass(frozen=True)
class ModelConstants:
    c: float
    q: np.ndarray
    r: np.ndarray


@dataclass(frozen=True)
class AllocationSet:
    """N x K matrix of +/-1 assignments; column ``j`` is experiment ``j``."""

    x: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2 or x.size == 0:
            raise ValueError("allocation must be a non-empty N x K matrix")
        if not np.all((x == 1) | (x == -1)):
            raise ValueError("allocation entries must be -1 or +1")
        x = x.astype(np.int64)
        x.setflags(write=False)
        object.__setattr__(self, "x", x)

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def k(self):
        return self.x.shape[1]


@dataclass(frozen=True)
class Benchmarks:
    d_eff_worst: float
    d_eff_best: float
    d_eff_independent: float
    var_worst: float
    var_best: float
    var_independent: float
    hadamard_upper: float
    variance_floor: float
    ostrowski_floor: float


def projection_complement(z, require_intercept=True):
    """Wrap ``z`` in a :class:`CovariateMatrix`, caching ``I - Z (Z'Z)^-1 Z'``.

    Raises RankDeficient if ``Z'Z`` is not positive definite.
    """
    z = np.array(z, dtype=np.float64, copy=True)
    if z.ndim == 1:
        z = z[:, None]
    n, p = z.shape
    if p > n:
        raise RankDeficient(f"p={p} covariates exceed N={n} subjects")
    if require_intercept and not np.all(z[:, 0] == 1.0):
        raise ValueError("first covariate column must be all ones (intercept)")
    gram = z.T @ z
    try:
        low = numerics.chol_psd(gram)
    except NotFactorizable as exc:
        raise RankDeficient("Z'Z is not positive definite") from exc
    diag = np.diag(low)
    if diag.min() <= 1e-10 * diag.max():
        raise RankDeficient("Z'Z is numerically singular")
    # A = Z L^-T, so Z (Z'Z)^-1 Z' = A A'
    a = numerics._forward(low, z.T).T
    proj = np.eye(n) - a @ a.T
    proj = 0.5 * (proj + proj.T)
    z.setflags(write=False)
    proj.setflags(write=False)
    return CovariateMatrix(z, proj)


def model_constants(noise):
    w = 1.0 / np.asarray(noise.sigma_sq)
    c = 1.0 + noise.tau_sq * w.sum()
    q = w * (c - noise.tau_sq * w)
    r = -noise.tau_sq * np.outer(w, w)
    np.fill_diagonal(r, 0.0)
    return ModelConstants(float(c), q, r)


def _check_dims(cov, alloc, noise):
    if alloc.n != cov.n:
        raise ValueError(f"allocation has {alloc.n} rows but covariates have {cov.n}")
    if alloc.k != noise.k:
        raise ValueError(f"allocation has {alloc.k} columns but noise spec has {noise.k}")


def coupling_matrix(consts):
    """K x K matrix with ``Q_j`` on the diagonal and ``R_jj'`` off it."""
    s = consts.r.copy()
    np.fill_diagonal(s, consts.q)
    return s


def precision_matrix(cov, alloc, noise):
    """Precision of the GLS treatment-effect estimates, in closed form.

    Entry ``(j, j')`` is ``(1/c) * S_jj' * x_j' P x_j'`` with ``S`` the coupling
    matrix and ``P`` the covariate-complement projector.
    """
    _check_dims(cov, alloc, noise)
    consts = model_constants(noise)
    # P symmetric idempotent: x_j' P x_l = (P x_j)'(P x_l), which stays PSD in floating point
    px = cov.projector @ alloc.x.astype(np.float64)
    gram = px.T @ px
    prec = coupling_matrix(consts) * gram / consts.c
    return 0.5 * (prec + prec.T)


def design_matrix(cov, alloc):
    """Stacked NK x (K + Kp) design: treatment columns first, then covariate blocks."""
    n, p, k = cov.n, cov.p, alloc.k
    x = np.zeros((n * k, k + k * p))
    for j in range(k):
        rows = slice(j * n, (j + 1) * n)
        x[rows, j] = alloc.x[:, j]
        x[rows, k + j * p:k + (j + 1) * p] = cov.z
    return x


def inverse_covariance(noise, n):
    """NK x NK inverse response covariance via the Woodbury identity.

    ``V^-1 = (D - (tau^2/c) w w') kron I_N`` with ``w_j = 1/sigma_j^2`` and
    ``D = diag(w)``.
    """
    w = 1.0 / np.asarray(noise.sigma_sq)
    c = 1.0 + noise.tau_sq * w.sum()
    m = np.diag(w) - (noise.tau_sq / c) * np.outer(w, w)
    return np.kron(m, np.eye(n))


def response_covariance(noise, n):
    """NK x NK covariance of the stacked responses (dense, for checks)."""
    k = noise.k
    v = np.kron(np.full((k, k), noise.tau_sq), np.eye(n))
    v += np.kron(np.diag(noise.sigma_sq), np.eye(n))
    return v


def _spd_inverse(a):
    try:
        low = numerics.chol_psd(0.5 * (a + a.T))
    except NotFactorizable as exc:
        raise Singular("matrix is not numerically invertible") from exc
    d = np.diag(low)
    if d.min() <= 1e-7 * d.max():
        raise Singular("matrix is numerically singular")
    inv = numerics.cho_solve(low, np.eye(a.shape[0]))
    return 0.5 * (inv + inv.T)


def precision_oracle(cov, alloc, noise):
    """Precision of the treatment effects from the full GLS information matrix.

    Assembles ``X' V^-1 X`` densely, inverts it, keeps the top-left K x K
    covariance block and inverts that.
    """
    _check_dims(cov, alloc, noise)
    x = design_matrix(cov, alloc)
    info = x.T @ inverse_covariance(noise, cov.n) @ x
    cov_all = _spd_inverse(info)
    k = alloc.k
    return _spd_inverse(cov_all[:k, :k])


def d_efficiency(prec):
    """``det(P)^(1/K)``; a singular ``P`` scores 0."""
    prec = np.atleast_2d(np.asarray(prec, dtype=np.float64))
    k = prec.shape[0]
    scale = numerics.max_abs(prec)
    if scale == 0.0:
        return 0.0
    w, _ = numerics.eigh_sym(prec)
    if w[-1] <= SINGULAR_REL_TOL * scale:
        return 0.0
    return float(np.exp(numerics.logdet_spd(prec) / k))


def treatment_variances(prec):
    """Diagonal of ``P^-1``."""
    prec = np.atleast_2d(np.asarray(prec, dtype=np.float64))
    try:
        low = numerics.chol_psd(prec)
    except NotFactorizable as exc:
        raise Singular("precision matrix is not invertible") from exc
    return np.diag(numerics.cho_solve(low, np.eye(prec.shape[0]))).copy()


def closed_form_benchmarks(n, k, b, sigma_sq):
    """Closed-form efficiencies and variances for balanced designs with equal sigmas."""
    if n < 2 or k < 1 or b < 0 or not sigma_sq > 0:
        raise ValueError("need n >= 2, k >= 1, b >= 0, sigma_sq > 0")
    scale = n / sigma_sq
    d_best = scale * (1 + b * (k - 1)) / (1 + b * k)
    var_best = (1 + b * k) / ((1 + b * (k - 1)) * scale)
    return Benchmarks(
        d_eff_worst=scale * (1.0 / (1 + b * k)) ** (1.0 / k),
        d_eff_best=d_best,
        d_eff_independent=scale / (1 + b),
        var_worst=(1 + b) / scale,
        var_best=var_best,
        var_independent=(1 + b) / scale,
        hadamard_upper=d_best,
        variance_floor=var_best,
        ostrowski_floor=1.0 / (1 + b * k),
    )


def hadamard_upper_bound(cov, noise):
    """Covariate-free upper bound ``(N/c) * prod(Q_j)^(1/K)`` on D-efficiency.

    ``cov`` may also be the subject count itself.
    """
    n = cov if isinstance(cov, (int, np.integer)) else cov.n
    consts = model_constants(noise)
    return float(n / consts.c * np.exp(np.mean(np.log(consts.q))))


def variance_floor(noise, n):
    """Per-experiment variance of the ideal balanced orthogonal design (equal sigmas)."""
    if not noise.equal_sigmas:
        raise UnequalSigmas("variance floor assumes equal sigmas")
    return closed_form_benchmarks(n, noise.k, noise.b, noise.sigma_sq[0]).variance_floor


def ostrowski_floor(noise, n=None):
    """Lower bound ``1/(1 + bK)`` on ``det(P) * (sigma^2/N)^K`` for covariate-balancing designs."""
    if not noise.equal_sigmas:
        raise UnequalSigmas("Ostrowski floor requires equal sigmas")
    return 1.0 / (1.0 + noise.b * noise.k)
