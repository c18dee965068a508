"""Exact 1-D total-variation denoising and the fused-chain proximal map.

The chain problem solved here is, for a length-T vector a,

    argmin_z  1/2 * sum_i (a_i - z_i)^2 + l1 * sum_i |z_i|
              + l2 * sum_{i>=2} |z_i - z_{i-1}|

which is the per-entry subproblem of the joint block Z-update.  It is
solved exactly in two stages: taut-string total-variation denoising at
level l2, then entrywise soft-thresholding at l1 (the two proximal maps
compose exactly for this penalty pair).
"""

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a hard dep, but stay usable
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


@njit(cache=True)
def _tv1d(y, lam, x):
    """Taut-string solution of min_z 1/2*||y-z||^2 + lam*TV(z), written into x.

    Maintains the running bounds of the taut string through the tube of
    radius lam around the cumulative sums of y.  Segments are flushed to x
    as soon as the string is forced to break upward or downward.  O(n) in
    practice.
    """
    n = y.size
    if n == 0:
        return
    if n == 1 or lam <= 0.0:
        for i in range(n):
            x[i] = y[i]
        return
    k = 0
    k0 = 0   # first index of the unresolved segment
    km = 0   # last position where the lower bound was tight
    kp = 0   # last position where the upper bound was tight
    vmin = y[0] - lam
    vmax = y[0] + lam
    umin = lam
    umax = -lam
    while True:
        if k == n - 1:
            if umin < 0.0:
                # lower string breaks: freeze the minorant segment
                for i in range(k0, km + 1):
                    x[i] = vmin
                k0 = km + 1
                if k0 >= n:
                    return
                k = km = kp = k0
                vmin = y[k]
                umin = lam
                umax = y[k] + lam - vmax
                continue
            if umax > 0.0:
                for i in range(k0, kp + 1):
                    x[i] = vmax
                k0 = kp + 1
                if k0 >= n:
                    return
                k = km = kp = k0
                vmax = y[k]
                umax = -lam
                umin = y[k] - lam - vmin
                continue
            v = vmin + umin / (k - k0 + 1)
            for i in range(k0, n):
                x[i] = v
            return
        if y[k + 1] + umin < vmin - lam:
            # negative jump certified at km
            for i in range(k0, km + 1):
                x[i] = vmin
            k0 = km + 1
            k = km = kp = k0
            vmin = y[k]
            vmax = y[k] + 2.0 * lam
            umin = lam
            umax = -lam
        elif y[k + 1] + umax > vmax + lam:
            # positive jump certified at kp
            for i in range(k0, kp + 1):
                x[i] = vmax
            k0 = kp + 1
            k = km = kp = k0
            vmin = y[k] - 2.0 * lam
            vmax = y[k]
            umin = lam
            umax = -lam
        else:
            k += 1
            umin += y[k] - vmin
            umax += y[k] - vmax
            if umin >= lam:
                vmin += (umin - lam) / (k - k0 + 1)
                umin = lam
                km = k
            if umax <= -lam:
                vmax += (umax + lam) / (k - k0 + 1)
                umax = -lam
                kp = k


def tv_denoise(y, lam):
    """Exact minimizer of 1/2*||y - z||^2 + lam * sum|z_{i+1} - z_i|."""
    y = np.ascontiguousarray(y, dtype=np.float64)
    x = np.empty_like(y)
    _tv1d(y, float(lam), x)
    return x


def fused_chain(a, l1, l2):
    """Exact minimizer of the sparse fused chain (module docstring)."""
    z = tv_denoise(a, l2)
    return np.sign(z) * np.maximum(np.abs(z) - l1, 0.0)


@njit(cache=True)
def _fused_chain_batch(A, l1_entry, l2, out):
    """Apply the fused chain down axis 0 of A for every column, in place.

    A has shape (T, n_entries); l1_entry is a per-entry threshold (supports
    an unpenalized diagonal).
    """
    T, m = A.shape
    buf = np.empty(T)
    for j in range(m):
        _tv1d(np.ascontiguousarray(A[:, j]), l2, buf)
        l1 = l1_entry[j]
        for i in range(T):
            v = buf[i]
            if v > l1:
                out[i, j] = v - l1
            elif v < -l1:
                out[i, j] = v + l1
            else:
                out[i, j] = 0.0


def fused_chain_batch(A, l1_entry, l2):
    """Columnwise ``fused_chain`` over a (T, n_entries) array."""
    A = np.ascontiguousarray(A, dtype=np.float64)
    out = np.empty_like(A)
    _fused_chain_batch(A, np.ascontiguousarray(l1_entry, dtype=np.float64),
                       float(l2), out)
    return out
