"""Hot pointwise kernels with numba acceleration and a pure-numpy fallback.

The two inner loops that dominate a time step outside of the FFTs are

* the degenerate diffusion flux  |grad u|^(p-2) * grad u  evaluated on the
  physical grid, together with the quadrature sum of |grad u|^p, and
* the transport-noise accumulation  sum_m c_m(x) * (a_m . grad u)(x)  over
  the active noise modes.

Both are provided in a numba ``@njit`` version and a vectorised numpy
version.  Selection happens at import time: set the environment variable
``SPLAPLACE_NUMBA=0`` to force the numpy path (useful for debugging and for
the benchmark in ``benchmarks/bench_kernels.py``).  Both paths perform the
same arithmetic in the same order per grid point, so results agree to
machine precision.
"""

import os

import numpy as np

_env = os.environ.get("SPLAPLACE_NUMBA", "1")
NUMBA_REQUESTED = _env not in ("0", "false", "no")

try:
    if not NUMBA_REQUESTED:
        raise ImportError("numba disabled via SPLAPLACE_NUMBA")
    from numba import njit

    NUMBA_ENABLED = True
except ImportError:
    njit = None
    NUMBA_ENABLED = False


# ---------------------------------------------------------------------------
# p-Laplace flux: F = |g|^(p-2) g, plus the quadrature sum of |g|^p.
# Exponent is passed as (p - 2) / 2 so the power acts on |g|^2.
# At p = 2 the exponent is 0 and 0**0 == 1, which reproduces the Laplacian.
# ---------------------------------------------------------------------------


def _flux2_numpy(gx, gy, em):
    g2 = gx * gx + gy * gy
    m = g2 ** em
    fx = m * gx
    fy = m * gy
    pow_sum = float(np.sum(m * g2))
    return fx, fy, pow_sum


def _flux3_numpy(gx, gy, gz, em):
    g2 = gx * gx + gy * gy + gz * gz
    m = g2 ** em
    fx = m * gx
    fy = m * gy
    fz = m * gz
    pow_sum = float(np.sum(m * g2))
    return fx, fy, fz, pow_sum


def _flux2_loop(gx, gy, em):
    n = gx.size
    fx = np.empty_like(gx)
    fy = np.empty_like(gy)
    gxf = gx.reshape(n)
    gyf = gy.reshape(n)
    fxf = fx.reshape(n)
    fyf = fy.reshape(n)
    pow_sum = 0.0
    for i in range(n):
        g2 = gxf[i] * gxf[i] + gyf[i] * gyf[i]
        m = g2 ** em
        fxf[i] = m * gxf[i]
        fyf[i] = m * gyf[i]
        pow_sum += m * g2
    return fx, fy, pow_sum


def _flux3_loop(gx, gy, gz, em):
    n = gx.size
    fx = np.empty_like(gx)
    fy = np.empty_like(gy)
    fz = np.empty_like(gz)
    gxf = gx.reshape(n)
    gyf = gy.reshape(n)
    gzf = gz.reshape(n)
    fxf = fx.reshape(n)
    fyf = fy.reshape(n)
    fzf = fz.reshape(n)
    pow_sum = 0.0
    for i in range(n):
        g2 = gxf[i] * gxf[i] + gyf[i] * gyf[i] + gzf[i] * gzf[i]
        m = g2 ** em
        fxf[i] = m * gxf[i]
        fyf[i] = m * gyf[i]
        fzf[i] = m * gzf[i]
        pow_sum += m * g2
    return fx, fy, fz, pow_sum


# ---------------------------------------------------------------------------
# Transport accumulation.  Entry m uses the phase tables of wavenumber row
# mode_of[m] and contributes
#     (cc[m] * cos_tab[mode_of[m]] + cs[m] * sin_tab[mode_of[m]]) * (avec[m] . grad u).
# grads is stacked (d, npoints); avec is (nentries, d); the tables are
# (nmodes, npoints).  The numpy path accumulates entries in the same order.
# ---------------------------------------------------------------------------


def _transport_numpy(grads, cos_tab, sin_tab, mode_of, avec, cc, cs):
    out = np.zeros(grads.shape[1], dtype=grads.dtype)
    for m in range(avec.shape[0]):
        r = mode_of[m]
        adot = avec[m, 0] * grads[0]
        for j in range(1, grads.shape[0]):
            adot = adot + avec[m, j] * grads[j]
        out += (cc[m] * cos_tab[r] + cs[m] * sin_tab[r]) * adot
    return out


def _transport_loop(grads, cos_tab, sin_tab, mode_of, avec, cc, cs):
    d = grads.shape[0]
    n = grads.shape[1]
    nentries = avec.shape[0]
    out = np.zeros(n, dtype=grads.dtype)
    for m in range(nentries):
        r = mode_of[m]
        a0 = avec[m, 0]
        a1 = avec[m, 1]
        if d == 2:
            for i in range(n):
                adot = a0 * grads[0, i] + a1 * grads[1, i]
                out[i] += (cc[m] * cos_tab[r, i] + cs[m] * sin_tab[r, i]) * adot
        else:
            a2 = avec[m, 2]
            for i in range(n):
                adot = a0 * grads[0, i] + a1 * grads[1, i] + a2 * grads[2, i]
                out[i] += (cc[m] * cos_tab[r, i] + cs[m] * sin_tab[r, i]) * adot
    return out


if NUMBA_ENABLED:
    flux2 = njit(cache=True, nogil=True)(_flux2_loop)
    flux3 = njit(cache=True, nogil=True)(_flux3_loop)
    transport_accumulate = njit(cache=True, nogil=True)(_transport_loop)
else:
    flux2 = _flux2_numpy
    flux3 = _flux3_numpy
    transport_accumulate = _transport_numpy

# Always-available handles for the benchmark and cross-backend tests.
flux2_numpy = _flux2_numpy
flux3_numpy = _flux3_numpy
transport_numpy = _transport_numpy
flux2_numba = njit(cache=True, nogil=True)(_flux2_loop) if NUMBA_ENABLED else None
flux3_numba = njit(cache=True, nogil=True)(_flux3_loop) if NUMBA_ENABLED else None
transport_numba = (
    njit(cache=True, nogil=True)(_transport_loop) if NUMBA_ENABLED else None
)


def backend_name():
    return "numba" if NUMBA_ENABLED else "numpy"
