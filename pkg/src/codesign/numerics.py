"""Dense linear-algebra kernels shared by the rest of the package.

The symmetric eigensolver is cyclic Jacobi and Cholesky is hand-rolled; both
dispatch to the compiled extension when it is available (see ``_backend``).
"""
import numpy as np

from . import _backend
from .errors import NoConvergence, NotFactorizable

SYMMETRY_TOL = 1e-10
JACOBI_TOL = 1e-15
JACOBI_MAX_SWEEPS = 100
JITTER_LADDER = (0.0, 1e-12, 1e-10, 1e-8)


def _as_square(a, name="a"):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise ValueError(f"{name} must be a non-empty square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


def _check_symmetric(a, tol):
    if np.max(np.abs(a - a.T)) > tol * max(1.0, np.max(np.abs(a))):
        raise ValueError("matrix is not symmetric")


def max_abs(a):
    """Max-norm ``max |a_ij|``."""
    return float(np.max(np.abs(a)))


def chol_psd(a, jitter=0.0, symmetry_tol=SYMMETRY_TOL):
    """Lower Cholesky factor of ``a + jitter * I``.

    Raises NotFactorizable if a non-positive pivot is met. Callers that expect
    rank-deficient PSD input should go through :func:`chol_ladder`.
    """
    a = _as_square(a)
    _check_symmetric(a, symmetry_tol)
    if jitter < 0:
        raise ValueError("jitter must be non-negative")
    shifted = a + jitter * np.eye(a.shape[0]) if jitter else a
    low, ok = _backend.cholesky(shifted)
    if not ok:
        raise NotFactorizable(f"Cholesky failed with jitter={jitter:g}")
    return low


def chol_ladder(a, ladder=JITTER_LADDER):
    """Try :func:`chol_psd` with relative jitters ``ladder * max|a|`` in order.

    Returns ``(L, jitter_used)``.
    """
    a = _as_square(a)
    scale = max(max_abs(a), np.finfo(float).tiny)
    for rel in ladder:
        try:
            return chol_psd(a, rel * scale), rel * scale
        except NotFactorizable:
            continue
    raise NotFactorizable(f"Cholesky failed after jitter ladder {ladder}")


def eigh_sym(a, tol=JACOBI_TOL, max_sweeps=JACOBI_MAX_SWEEPS):
    """Eigen-decomposition of a symmetric matrix, eigenvalues in descending order.

    Returns ``(w, U)`` with ``a @ U[:, i] == w[i] * U[:, i]``.
    """
    a = _as_square(a)
    _check_symmetric(a, SYMMETRY_TOL)
    a = 0.5 * (a + a.T)
    w, u, _, converged = _backend.jacobi_eigh(a, tol, max_sweeps)
    if not converged:
        raise NoConvergence(f"Jacobi did not converge in {max_sweeps} sweeps")
    order = np.argsort(-w, kind="stable")
    return w[order], u[:, order]


def orthonormal_completion(v):
    """N x N orthogonal matrix whose first column is the unit vector ``v``.

    Built from one Householder reflector, i.e. the Q factor of a QR
    factorization of ``v`` with the sign fixed so that ``Q[:, 0] == v``.
    """
    v = np.asarray(v, dtype=np.float64).ravel()
    if v.size < 1 or abs(np.linalg.norm(v) - 1.0) > 1e-10:
        raise ValueError("v must be a unit vector")
    n = v.size
    sign = 1.0 if v[0] >= 0 else -1.0
    u = v.copy()
    u[0] += sign
    q = np.eye(n) - 2.0 * np.outer(u, u) / (u @ u)
    # the reflector maps e1 to -sign * v; store v itself
    q[:, 0] = v
    return q


def _forward(low, b):
    x = np.array(b, dtype=np.float64, copy=True)
    for i in range(low.shape[0]):
        x[i] = (x[i] - low[i, :i] @ x[:i]) / low[i, i]
    return x


def _backward(low, b):
    x = np.array(b, dtype=np.float64, copy=True)
    n = low.shape[0]
    for i in range(n - 1, -1, -1):
        x[i] = (x[i] - low[i + 1:, i] @ x[i + 1:]) / low[i, i]
    return x


def cho_solve(low, b):
    """Solve ``L L' x = b`` given the lower factor."""
    return _backward(low, _forward(low, b))


def solve_spd(a, b):
    """Solve ``a x = b`` for symmetric positive definite ``a``; ``b`` may be a vector or matrix."""
    low = chol_psd(a)
    b = np.asarray(b, dtype=np.float64)
    if b.shape[0] != low.shape[0]:
        raise ValueError("dimension mismatch between a and b")
    return cho_solve(low, b)


def logdet_spd(a):
    """``log det a`` as ``2 * sum(log diag(L))``."""
    low = chol_psd(a)
    return float(2.0 * np.sum(np.log(np.diag(low))))
