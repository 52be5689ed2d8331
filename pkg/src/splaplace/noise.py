"""Divergence-free transport noise on the torus.

The noise is a sum over lattice modes k and frame directions i of vector
fields a_{k,i} * e_k(x) with a_{k,i} an orthonormal basis of the plane
perpendicular to k.  Coefficients theta are supported on complete lattice
shells {k : |k|^2 = r} and normalised so that sum_k theta_k^2 = 1 at every
time; amplitudes carry the intensity kappa through the prefactor
2*sqrt(kappa * d/(d-1)).

Each +-k pair is driven by one complex Brownian increment of total variance
2*dt (real and imaginary parts independent N(0, dt)); the real part drives
the cosine field of the pair and the imaginary part the sine field.  With
this normalisation the Stratonovich-to-Ito corrector of the transport term
equals kappa * Laplacian on band-limited fields whenever the support
consists of complete shells.
"""

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _kernels
from .spectral import (
    SpectralField,
    TWO_PI,
    VectorField,
    dealias,
    gradient_physical,
    to_spectral,
)


def normalizing_constant(d):
    """d/(d-1), the frame-count compensation in the noise amplitude."""
    return d / (d - 1.0)


def is_positive_mode(k):
    """Lexicographic partition: first nonzero coordinate positive."""
    for v in k:
        if v != 0:
            return v > 0
    raise ValueError("zero mode has no partition side")


def representative(k):
    """The member of {k, -k} lying in the positive partition."""
    return k if is_positive_mode(k) else tuple(-v for v in k)


@lru_cache(maxsize=None)
def _shell_modes(d, r2):
    kmax = math.isqrt(r2)
    modes = [
        k
        for k in itertools.product(range(-kmax, kmax + 1), repeat=d)
        if sum(v * v for v in k) == r2
    ]
    return tuple(sorted(modes))


def build_shells(d, radii):
    """Complete lattice shells {k in Z^d_0 : |k|^2 = r} for each r in radii.

    Raises ValueError for a radius with no lattice points (e.g. |k|^2 = 3
    in d = 2, which is not a sum of two squares).
    """
    shells = {}
    for r2 in radii:
        r2 = int(r2)
        if r2 <= 0:
            raise ValueError(f"shell radius^2 must be positive, got {r2}")
        modes = _shell_modes(d, r2)
        if not modes:
            raise ValueError(f"no lattice points with |k|^2 = {r2} in d = {d}")
        shells[r2] = list(modes)
    return shells


@dataclass(frozen=True)
class Frame:
    """Orthonormal basis of the plane perpendicular to k, even in k."""

    k: tuple
    vectors: tuple


def build_frame(k):
    """Deterministic frame for mode k with build_frame(-k) == build_frame(k).

    d=2: rotate the unit representative by +90 degrees.  d=3: cross the
    representative with the first canonical axis not parallel to it, then
    complete with a second cross product.
    """
    k = tuple(int(v) for v in k)
    if all(v == 0 for v in k):
        raise ValueError("zero mode has no frame")
    kp = np.array(representative(k), dtype=np.float64)
    khat = kp / np.linalg.norm(kp)
    d = len(k)
    if d == 2:
        a1 = np.array([-khat[1], khat[0]])
        return Frame(k, (tuple(a1),))
    axis = next(
        e
        for e in ((1, 0, 0), (0, 1, 0), (0, 0, 1))
        if np.linalg.norm(np.cross(kp, np.array(e, dtype=np.float64))) > 0
    )
    a1 = np.cross(kp, np.array(axis, dtype=np.float64))
    a1 = a1 / np.linalg.norm(a1)
    a2 = np.cross(khat, a1)
    return Frame(k, (tuple(a1), tuple(a2)))


@dataclass(frozen=True)
class ShellTheta:
    """One normalised coefficient family supported on complete shells."""

    d: int
    radii: tuple
    values: tuple

    def __post_init__(self):
        if len(self.radii) != len(self.values):
            raise ValueError("radii and values must have equal length")
        if len(self.radii) == 0:
            raise ValueError("theta support must be nonempty")
        total = 0.0
        for r2, v in zip(self.radii, self.values):
            total += len(_shell_modes(self.d, r2)) * v * v
            if not _shell_modes(self.d, r2):
                raise ValueError(f"no lattice points with |k|^2 = {r2} in d = {self.d}")
        if abs(total - 1.0) > 1e-10:
            raise ValueError(f"theta not normalised: sum theta_k^2 = {total}")

    @classmethod
    def uniform(cls, d, radii):
        radii = tuple(int(r) for r in radii)
        m = sum(len(_shell_modes(d, r2)) for r2 in radii)
        if m == 0:
            raise ValueError("empty theta support")
        return cls(d, radii, (1.0 / math.sqrt(m),) * len(radii))

    def value_at(self, k):
        r2 = sum(int(v) ** 2 for v in k)
        for r, v in zip(self.radii, self.values):
            if r == r2:
                return v
        raise ValueError(f"mode {tuple(k)} not in theta support")

    def modes(self):
        out = []
        for r2 in self.radii:
            out.extend(_shell_modes(self.d, r2))
        return out

    def n_modes(self):
        return sum(len(_shell_modes(self.d, r2)) for r2 in self.radii)

    def theta_inf(self):
        return max(abs(v) for v in self.values)

    def max_abs_wavenumber(self):
        return max(max(abs(v) for v in k) for k in self.modes())

    def to_payload(self):
        return [[int(r), float(v)] for r, v in zip(self.radii, self.values)]


@dataclass(frozen=True)
class ThetaSpec:
    """Coefficient schedule: constant, or one ShellTheta per unit interval."""

    entries: tuple
    schedule: str = "constant"
    mu0: float = None

    def __post_init__(self):
        if self.schedule not in ("constant", "step_doubling"):
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if self.schedule == "constant" and len(self.entries) != 1:
            raise ValueError("constant schedule takes exactly one entry")
        if self.schedule == "step_doubling":
            if self.mu0 is None or self.mu0 <= 0:
                raise ValueError("step_doubling schedule requires mu0 > 0")
            if len(self.entries) < 1:
                raise ValueError("step_doubling schedule requires entries")
        d = self.entries[0].d
        if any(e.d != d for e in self.entries):
            raise ValueError("all entries must share the dimension")

    @classmethod
    def constant(cls, entry):
        return cls((entry,), "constant")

    @classmethod
    def step_doubling(cls, entries, mu0):
        return cls(tuple(entries), "step_doubling", mu0)

    @property
    def d(self):
        return self.entries[0].d

    def interval_index(self, t):
        if self.schedule == "constant":
            return 0
        n = int(math.floor(t + 1e-12))
        if n < 0 or n >= len(self.entries):
            raise ValueError(
                f"time {t} outside the scheduled intervals [0, {len(self.entries)})"
            )
        return n

    def entry_at(self, t):
        return self.entries[self.interval_index(t)]

    def to_payload(self):
        payload = {
            "schedule": self.schedule,
            "shells": [e.to_payload() for e in self.entries],
        }
        if self.mu0 is not None:
            payload["mu0"] = self.mu0
        return payload


@dataclass(frozen=True)
class NoiseSpec:
    """Intensity, coefficient schedule, and derived amplitude tables."""

    kappa: float
    theta: ThetaSpec

    def __post_init__(self):
        if self.kappa <= 0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")

    @property
    def d(self):
        return self.theta.d

    def amplitude(self, theta_value):
        return 2.0 * math.sqrt(normalizing_constant(self.d) * self.kappa) * theta_value

    def entry_at(self, t):
        return self.theta.entry_at(t)


@dataclass(frozen=True)
class IncrementBatch:
    """One complex Gaussian increment per (representative pair, frame index).

    values[m, i] has independent real and imaginary parts N(0, dt); the
    total variance E|value|^2 = 2*dt matches the quadratic variation of the
    driving complex Brownian pair.
    """

    dt: float
    reps: tuple
    values: np.ndarray

    def __post_init__(self):
        self.values.flags.writeable = False


def shell_representatives(entry):
    """Sorted positive-partition representatives of the supported modes."""
    return tuple(sorted({representative(k) for k in entry.modes()}))


def sample_increments(spec, dt, rng, t=0.0):
    """Draw the complex increments for one step of length dt at time t."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    entry = spec.entry_at(t)
    reps = shell_representatives(entry)
    z = rng.standard_normal((len(reps), spec.d - 1, 2))
    values = (z[..., 0] + 1j * z[..., 1]) * math.sqrt(dt)
    return IncrementBatch(dt, reps, values)


class ModeTables:
    """Per-grid physical tables for the supported modes of one entry.

    Rows follow the sorted representative list: cosine/sine of 2*pi*k.x per
    representative, frame vectors per (representative, i), and per-mode
    amplitudes.  Built once and reused across steps.
    """

    def __init__(self, grid, spec, entry):
        if grid.d != spec.d:
            raise ValueError("grid and noise dimensions differ")
        if entry.max_abs_wavenumber() > grid.cutoff:
            raise ValueError("noise support extends beyond the grid cutoff")
        self.grid = grid
        self.reps = shell_representatives(entry)
        x = grid.points().reshape(grid.d, -1)
        n_reps = len(self.reps)
        self.cos_tab = np.empty((n_reps, grid.npoints))
        self.sin_tab = np.empty((n_reps, grid.npoints))
        amps = np.empty(n_reps)
        for m, k in enumerate(self.reps):
            phase = TWO_PI * sum(k[j] * x[j] for j in range(grid.d))
            self.cos_tab[m] = np.cos(phase)
            self.sin_tab[m] = np.sin(phase)
            amps[m] = spec.amplitude(entry.value_at(k))
        n_frames = grid.d - 1
        self.mode_of = np.repeat(np.arange(n_reps, dtype=np.int64), n_frames)
        self.avec = np.empty((n_reps * n_frames, grid.d))
        for m, k in enumerate(self.reps):
            frame = build_frame(k)
            for i in range(n_frames):
                self.avec[m * n_frames + i] = frame.vectors[i]
        self.amps = amps


_TABLES_CACHE = {}


def mode_tables(grid, spec, entry):
    key = (grid, spec.kappa, entry.d, entry.radii, entry.values)
    tables = _TABLES_CACHE.get(key)
    if tables is None:
        tables = ModeTables(grid, spec, entry)
        _TABLES_CACHE[key] = tables
    return tables


def xi_field(spec, k, i, t=0.0, grid=None):
    """The vector field driven by increment (k, i) at time t.

    Positive-partition modes carry the cosine (real part of a_k e_k), the
    negative partition the sine (imaginary part).  Divergence-free because
    the frame vectors are perpendicular to k.
    """
    entry = spec.entry_at(t)
    k = tuple(int(v) for v in k)
    theta_k = entry.value_at(k)
    frame = build_frame(k)
    if not 0 <= i < spec.d - 1:
        raise ValueError(f"frame index {i} out of range")
    a = frame.vectors[i]
    amp = spec.amplitude(theta_k)
    if grid is None:
        raise ValueError("xi_field needs a target grid")
    comps = []
    km = grid.mode_index(k)
    km_neg = grid.mode_index(tuple(-v for v in k))
    pos = is_positive_mode(k)
    for j in range(grid.d):
        c = np.zeros(grid.shape, dtype=np.complex128)
        if pos:
            c[km] = 0.5 * amp * a[j]
            c[km_neg] = 0.5 * amp * a[j]
        else:
            c[km] = -0.5j * amp * a[j]
            c[km_neg] = 0.5j * amp * a[j]
        comps.append(SpectralField(grid, c))
    return VectorField(tuple(comps))


def transport_increment(u, spec, batch, t=0.0, grads=None):
    """Euler-Maruyama transport term sum_{k,i} (xi_{k,i} . grad u) dB^{k,i}.

    The cosine field of each pair is weighted by the real part of the
    complex increment, the sine field by minus the imaginary part.  The
    pointwise product is formed on the physical grid, transformed back and
    dealiased; the result is exactly mean-free because each xi is
    divergence-free.
    """
    grid = u.grid
    entry = spec.entry_at(t)
    tables = mode_tables(grid, spec, entry)
    if batch.reps != tables.reps:
        raise ValueError("increment batch does not match the active noise support")
    if grads is None:
        grads = gradient_physical(u)
    grads2 = grads.reshape(grid.d, -1)
    n_frames = grid.d - 1
    re = np.ascontiguousarray(batch.values.real.reshape(-1))
    im = np.ascontiguousarray(batch.values.imag.reshape(-1))
    amps = np.repeat(tables.amps, n_frames)
    cc = amps * re
    cs = -amps * im
    out = _kernels.transport_accumulate(
        grads2, tables.cos_tab, tables.sin_tab, tables.mode_of, tables.avec, cc, cs
    )
    return to_spectral(grid, out.reshape(grid.shape))


def _advect_by_mode(u, spec, entry, k, i, grid):
    """xi_{k,i} . grad u as a dealiased spectral field."""
    a = np.array(build_frame(k).vectors[i])
    amp = spec.amplitude(entry.value_at(k))
    x = grid.points()
    phase = TWO_PI * sum(k[j] * x[j] for j in range(grid.d))
    g = np.cos(phase) if is_positive_mode(k) else np.sin(phase)
    grads = gradient_physical(u)
    adot = np.tensordot(a, grads, axes=(0, 0))
    return dealias(to_spectral(grid, amp * g * adot))


def ito_corrector(u, spec, t=0.0, mode="limit"):
    """Drift correction of the Stratonovich transport term.

    ``limit``: kappa * Laplacian(u).  ``exact``: one half of the summed
    second-order advection over every supported mode and frame direction.
    The two agree on band-limited fields when the support consists of
    complete shells.
    """
    grid = u.grid
    if mode == "limit":
        return SpectralField(grid, -spec.kappa * grid.lam * u.coeffs)
    if mode != "exact":
        raise ValueError(f"unknown corrector mode {mode!r}")
    entry = spec.entry_at(t)
    acc = np.zeros(grid.shape, dtype=np.complex128)
    for k in entry.modes():
        for i in range(spec.d - 1):
            w = _advect_by_mode(u, spec, entry, k, i, grid)
            ww = _advect_by_mode(w, spec, entry, k, i, grid)
            acc += ww.coeffs
    return SpectralField(grid, 0.5 * acc)
