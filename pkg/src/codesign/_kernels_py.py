"""Pure-Python/numpy implementations of the hot kernels.

Mirrors ``_kernels.pyx`` call for call; used when the compiled extension is
unavailable or ``CODESIGN_PURE_PYTHON`` is set.
"""
import numpy as np


def _off_norm(a):
    # summed directly: ||A||^2 - ||diag A||^2 cancels to ~1e-8 ||A|| and stalls
    off = a - np.diag(np.diag(a))
    return float(np.sqrt(np.sum(off * off)))


def jacobi_eigh(a, tol, max_sweeps):
    """Cyclic Jacobi eigensolver. Returns ``(eigenvalues, eigenvectors, sweeps, converged)``."""
    a = np.array(a, dtype=np.float64, copy=True)
    n = a.shape[0]
    v = np.eye(n)
    scale = np.sqrt(np.sum(a * a))
    if n == 1 or scale == 0.0:
        return np.diag(a).copy(), v, 0, True
    threshold = tol * scale
    for sweep in range(max_sweeps):
        off = _off_norm(a)
        if off <= threshold:
            return np.diag(a).copy(), v, sweep, True
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                diff = a[q, q] - a[p, p]
                if abs(apq) < 1e-150 * abs(diff):
                    # rotation angle far below epsilon: zeroing the pair is exact
                    a[p, q] = 0.0
                    a[q, p] = 0.0
                    continue
                theta = diff / (2.0 * apq)
                t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                colp = a[:, p].copy()
                colq = a[:, q]
                a[:, p] = c * colp - s * colq
                a[:, q] = s * colp + c * colq
                rowp = a[p, :].copy()
                rowq = a[q, :]
                a[p, :] = c * rowp - s * rowq
                a[q, :] = s * rowp + c * rowq
                a[p, q] = 0.0
                a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q]
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    off = _off_norm(a)
    return np.diag(a).copy(), v, max_sweeps, bool(off <= threshold)


def cholesky(a):
    """Lower Cholesky factor. Returns ``(L, ok)``; ``ok`` is False on a non-positive pivot."""
    a = np.asarray(a, dtype=np.float64)
    n = a.shape[0]
    low = np.zeros((n, n))
    for j in range(n):
        row = low[j, :j]
        d = a[j, j] - row @ row
        if not d > 0.0 or not np.isfinite(d):
            return low, False
        ljj = np.sqrt(d)
        low[j, j] = ljj
        if j + 1 < n:
            low[j + 1:, j] = (a[j + 1:, j] - low[j + 1:, :j] @ row) / ljj
    return low, True


def best_flip_ascent(c, x, max_flips, tol):
    """Best-single-flip ascent on ``x' C x`` over {-1, +1}^N.

    Flips the coordinate with the largest gain (lowest index on ties) until no
    gain exceeds ``tol`` or ``max_flips`` flips were made. Returns
    ``(x, flips, converged)``.
    """
    c = np.asarray(c, dtype=np.float64)
    x = np.array(x, dtype=np.float64, copy=True)
    g = c @ x
    diag = np.diag(c).copy()
    for flips in range(max_flips):
        gains = 4.0 * (diag - x * g)
        i = int(np.argmax(gains))
        if not gains[i] > tol:
            return x, flips, True
        g -= 2.0 * x[i] * c[:, i]
        x[i] = -x[i]
    gains = 4.0 * (diag - x * g)
    return x, max_flips, bool(np.max(gains) <= tol)
