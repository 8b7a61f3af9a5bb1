"""Hot numeric kernels, with a numba fast path and a pure-numpy fallback.

The backend is chosen once at import time from the ``QUC_KERNELS``
environment variable:

* ``QUC_KERNELS=numba``  -- require numba, fail loudly if missing;
* ``QUC_KERNELS=numpy``  -- force the vectorised numpy implementations;
* unset                  -- use numba when importable, else numpy.

Both paths compute the same quantities; they are not guaranteed to agree
bitwise (summation orders differ), but each backend is deterministic.
``benchmarks/bench_kernels.py`` times one against the other.
"""

import os

import numpy as np

_choice = os.environ.get("QUC_KERNELS", "").strip().lower()
if _choice not in ("", "numba", "numpy"):
    raise ValueError(f"QUC_KERNELS must be 'numba' or 'numpy', got {_choice!r}")

_HAVE_NUMBA = False
if _choice != "numpy":
    try:
        from numba import njit

        _HAVE_NUMBA = True
    except ImportError:
        if _choice == "numba":
            raise


def backend():
    """Name of the active kernel backend, 'numba' or 'numpy'."""
    return "numba" if _HAVE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------

def _np_power_eval(z, p):
    r2 = z[:, 0] ** 2 + z[:, 1] ** 2
    return r2 ** (p / 2.0) / p


def _np_power_grad(z, p):
    r2 = z[:, 0] ** 2 + z[:, 1] ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(r2 > 0.0, r2 ** ((p - 2.0) / 2.0), 0.0)
    return s[:, None] * z


def _np_power_hess(z, p):
    # r^{p-2} (Id + (p-2) zhat zhat^T); zero matrix at the origin except p = 2.
    m = z.shape[0]
    r2 = z[:, 0] ** 2 + z[:, 1] ** 2
    out = np.zeros((m, 2, 2))
    nz = r2 > 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(nz, r2 ** ((p - 2.0) / 2.0), 0.0)
        c = np.where(nz, (p - 2.0) * s / r2, 0.0)
    out[:, 0, 0] = s + c * z[:, 0] * z[:, 0]
    out[:, 0, 1] = c * z[:, 0] * z[:, 1]
    out[:, 1, 0] = out[:, 0, 1]
    out[:, 1, 1] = s + c * z[:, 1] * z[:, 1]
    if p == 2.0 and not nz.all():
        out[~nz, 0, 0] = 1.0
        out[~nz, 1, 1] = 1.0
    return out


def _np_sym2_eig_bounds(h):
    mid = 0.5 * (h[:, 0, 0] + h[:, 1, 1])
    rad = np.hypot(0.5 * (h[:, 0, 0] - h[:, 1, 1]),
                   0.5 * (h[:, 0, 1] + h[:, 1, 0]))
    return mid - rad, mid + rad


def _np_scatter_add3(idx, contrib, out):
    np.add.at(out, idx.ravel(), contrib.ravel())
    return out


def _np_tri_local_hess(g, hz, area):
    return np.einsum("tak,tkl,tbl->tab", g, hz, g) * area[:, None, None]


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if _HAVE_NUMBA:

    @njit(cache=True)
    def _nb_power_eval(z, p):
        m = z.shape[0]
        out = np.empty(m)
        for i in range(m):
            r2 = z[i, 0] * z[i, 0] + z[i, 1] * z[i, 1]
            out[i] = r2 ** (p / 2.0) / p
        return out

    @njit(cache=True)
    def _nb_power_grad(z, p):
        m = z.shape[0]
        out = np.empty((m, 2))
        for i in range(m):
            r2 = z[i, 0] * z[i, 0] + z[i, 1] * z[i, 1]
            if r2 > 0.0:
                s = r2 ** ((p - 2.0) / 2.0)
                out[i, 0] = s * z[i, 0]
                out[i, 1] = s * z[i, 1]
            else:
                out[i, 0] = 0.0
                out[i, 1] = 0.0
        return out

    @njit(cache=True)
    def _nb_power_hess(z, p):
        m = z.shape[0]
        out = np.zeros((m, 2, 2))
        for i in range(m):
            r2 = z[i, 0] * z[i, 0] + z[i, 1] * z[i, 1]
            if r2 > 0.0:
                s = r2 ** ((p - 2.0) / 2.0)
                c = (p - 2.0) * s / r2
                out[i, 0, 0] = s + c * z[i, 0] * z[i, 0]
                out[i, 0, 1] = c * z[i, 0] * z[i, 1]
                out[i, 1, 0] = out[i, 0, 1]
                out[i, 1, 1] = s + c * z[i, 1] * z[i, 1]
            elif p == 2.0:
                out[i, 0, 0] = 1.0
                out[i, 1, 1] = 1.0
        return out

    @njit(cache=True)
    def _nb_sym2_eig_bounds(h):
        m = h.shape[0]
        lo = np.empty(m)
        hi = np.empty(m)
        for i in range(m):
            mid = 0.5 * (h[i, 0, 0] + h[i, 1, 1])
            a = 0.5 * (h[i, 0, 0] - h[i, 1, 1])
            b = 0.5 * (h[i, 0, 1] + h[i, 1, 0])
            rad = np.hypot(a, b)
            lo[i] = mid - rad
            hi[i] = mid + rad
        return lo, hi

    @njit(cache=True)
    def _nb_scatter_add3(idx, contrib, out):
        for t in range(idx.shape[0]):
            for a in range(3):
                out[idx[t, a]] += contrib[t, a]
        return out

    @njit(cache=True)
    def _nb_tri_local_hess(g, hz, area):
        m = g.shape[0]
        out = np.empty((m, 3, 3))
        for t in range(m):
            for a in range(3):
                hga0 = hz[t, 0, 0] * g[t, a, 0] + hz[t, 0, 1] * g[t, a, 1]
                hga1 = hz[t, 1, 0] * g[t, a, 0] + hz[t, 1, 1] * g[t, a, 1]
                for b in range(3):
                    out[t, a, b] = area[t] * (g[t, b, 0] * hga0 + g[t, b, 1] * hga1)
        return out


if _HAVE_NUMBA:
    power_eval = _nb_power_eval
    power_grad = _nb_power_grad
    power_hess = _nb_power_hess
    sym2_eig_bounds = _nb_sym2_eig_bounds
    scatter_add3 = _nb_scatter_add3
    tri_local_hess = _nb_tri_local_hess
else:
    power_eval = _np_power_eval
    power_grad = _np_power_grad
    power_hess = _np_power_hess
    sym2_eig_bounds = _np_sym2_eig_bounds
    scatter_add3 = _np_scatter_add3
    tri_local_hess = _np_tri_local_hess


NUMPY_IMPLS = {
    "power_eval": _np_power_eval,
    "power_grad": _np_power_grad,
    "power_hess": _np_power_hess,
    "sym2_eig_bounds": _np_sym2_eig_bounds,
    "scatter_add3": _np_scatter_add3,
    "tri_local_hess": _np_tri_local_hess,
}
