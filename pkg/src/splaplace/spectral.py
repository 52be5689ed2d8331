"""Truncated Fourier representation of real zero-mean fields on the torus.

Fields live on the unit torus [0,1)^d with volume 1, so the complex
exponentials exp(2*pi*i k.x) form an orthonormal basis and the L2 norm is
the plain l2 norm of the coefficients.  Coefficients are stored densely in
numpy FFT layout; modes with |k|_inf beyond the grid cutoff are kept at
zero (two-thirds dealiasing).
"""

from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * np.pi
LAMBDA_1 = 4.0 * np.pi**2  # spectral gap of the unit torus


class Grid:
    """Uniform periodic grid with cached wavenumber tables.

    ``cutoff`` is the largest retained |k|_inf after dealiasing and must not
    exceed n_per_axis / 3 (two-thirds rule for the pointwise nonlinearities).
    """

    def __init__(self, d, n_per_axis, cutoff=None):
        if d not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3, got {d}")
        if n_per_axis < 8 or n_per_axis % 2 != 0:
            raise ValueError(f"n_per_axis must be even and >= 8, got {n_per_axis}")
        max_cutoff = n_per_axis // 3
        if cutoff is None:
            cutoff = max_cutoff
        if not (1 <= cutoff <= max_cutoff):
            raise ValueError(
                f"cutoff must lie in [1, n_per_axis/3] = [1, {max_cutoff}], got {cutoff}"
            )
        self.d = d
        self.n = n_per_axis
        self.cutoff = cutoff
        self.shape = (n_per_axis,) * d
        self.npoints = n_per_axis**d

        axis = np.fft.fftfreq(n_per_axis, d=1.0 / n_per_axis).astype(np.int64)
        self.k_axes = axis
        mesh = np.meshgrid(*([axis] * d), indexing="ij")
        self.k_vectors = np.stack(mesh)  # (d, n, n[, n]) integer wavenumbers
        self.k_sq = sum(m * m for m in mesh)
        self.lam = LAMBDA_1 * self.k_sq.astype(np.float64)
        self.dealias_mask = np.all(np.abs(self.k_vectors) <= cutoff, axis=0)
        self.ik = [TWO_PI * 1j * self.k_vectors[j] for j in range(d)]
        # index arrays implementing k -> -k in FFT layout
        neg = (-np.arange(n_per_axis)) % n_per_axis
        self._neg_ix = np.ix_(*([neg] * d))

    def points(self):
        """Physical grid coordinates, shape (d, n, ... ,n)."""
        x = np.arange(self.n) / self.n
        return np.stack(np.meshgrid(*([x] * self.d), indexing="ij"))

    def reflect(self, coeffs):
        """Return the coefficient array evaluated at -k."""
        return coeffs[self._neg_ix]

    def mode_index(self, k):
        return tuple(int(ki) % self.n for ki in k)

    def __eq__(self, other):
        return (
            isinstance(other, Grid)
            and (self.d, self.n, self.cutoff) == (other.d, other.n, other.cutoff)
        )

    def __hash__(self):
        return hash((self.d, self.n, self.cutoff))

    def __repr__(self):
        return f"Grid(d={self.d}, n={self.n}, cutoff={self.cutoff})"


@dataclass(frozen=True)
class SpectralField:
    """Real zero-mean scalar field given by its Fourier coefficients.

    Invariants: coeffs[-k] == conj(coeffs[k]) (the field is real) and
    coeffs[0] == 0 (zero spatial mean).  Instances are immutable; all
    operations return new fields.
    """

    grid: Grid
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.coeffs.flags.writeable = False

    @classmethod
    def zero(cls, grid):
        return cls(grid, np.zeros(grid.shape, dtype=np.complex128))

    @classmethod
    def from_coeffs(cls, grid, coeffs, project=False):
        c = np.array(coeffs, dtype=np.complex128)
        if project:
            c = 0.5 * (c + np.conj(grid.reflect(c)))
            c[(0,) * grid.d] = 0.0
            c = np.where(grid.dealias_mask, c, 0.0)
        return cls(grid, c)

    @classmethod
    def from_modes(cls, grid, modes):
        """Build a field from {k: amplitude}; the conjugate at -k is implied."""
        c = np.zeros(grid.shape, dtype=np.complex128)
        for k, amp in modes.items():
            k = tuple(int(v) for v in k)
            if all(v == 0 for v in k):
                raise ValueError("zero mode must vanish (zero-mean field)")
            if max(abs(v) for v in k) > grid.cutoff:
                raise ValueError(f"mode {k} beyond cutoff {grid.cutoff}")
            c[grid.mode_index(k)] += amp
            c[grid.mode_index(tuple(-v for v in k))] += np.conj(amp)
        return cls(grid, c)

    def l2_norm_sq(self):
        return float(np.sum(np.abs(self.coeffs) ** 2))

    def __add__(self, other):
        return SpectralField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other):
        return SpectralField(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, scalar):
        return SpectralField(self.grid, self.coeffs * scalar)

    __rmul__ = __mul__


@dataclass(frozen=True)
class VectorField:
    """d spectral components sharing one grid."""

    components: tuple

    @property
    def grid(self):
        return self.components[0].grid

    @classmethod
    def from_coeff_list(cls, grid, coeff_list):
        return cls(tuple(SpectralField(grid, c) for c in coeff_list))


def to_physical(f):
    """Inverse transform to real point values on the grid."""
    return np.fft.ifftn(np.asarray(f.coeffs)).real * f.grid.npoints


def to_spectral(grid, values):
    """Forward transform of real point values; dealiased and mean-free."""
    c = np.fft.fftn(values) / grid.npoints
    c = np.where(grid.dealias_mask, c, 0.0)
    c[(0,) * grid.d] = 0.0
    return SpectralField(grid, c)


def gradient(f):
    """Spectral gradient: component j carries 2*pi*i*k_j."""
    g = f.grid
    comps = [SpectralField(g, g.ik[j] * f.coeffs) for j in range(g.d)]
    return VectorField(tuple(comps))


def divergence(v):
    g = v.grid
    c = np.zeros(g.shape, dtype=np.complex128)
    for j, comp in enumerate(v.components):
        c += g.ik[j] * comp.coeffs
    return SpectralField(g, c)


def laplacian(f):
    return SpectralField(f.grid, -f.grid.lam * f.coeffs)


def dealias(f):
    return SpectralField(f.grid, np.where(f.grid.dealias_mask, f.coeffs, 0.0))


def gradient_physical(f):
    """Physical-space gradient stacked as (d, n, ..., n)."""
    g = f.grid
    out = np.empty((g.d,) + g.shape)
    for j in range(g.d):
        out[j] = np.fft.ifftn(g.ik[j] * f.coeffs).real * g.npoints
    return out


def norm(f, which="L2", p=None):
    """Field norms: ``L2`` by Parseval, ``Lp``/``W1p`` by grid quadrature.

    The W1p norm is (||f||_p^p + || |grad f| ||_p^p)^(1/p) with the pointwise
    Euclidean magnitude of the gradient.
    """
    if which == "L2":
        return float(np.sqrt(f.l2_norm_sq()))
    if p is None or p < 2:
        raise ValueError(f"{which} norm requires p >= 2, got {p}")
    if which == "Lp":
        vals = to_physical(f)
        return float(np.mean(np.abs(vals) ** p) ** (1.0 / p))
    if which == "W1p":
        vals = to_physical(f)
        grads = gradient_physical(f)
        gmag_sq = np.sum(grads * grads, axis=0)
        total = np.mean(np.abs(vals) ** p) + np.mean(gmag_sq ** (p / 2.0))
        return float(total ** (1.0 / p))
    raise ValueError(f"unknown norm kind {which!r}")


def grad_norm_lp(f, p):
    """|| |grad f| ||_Lp by grid quadrature."""
    grads = gradient_physical(f)
    gmag_sq = np.sum(grads * grads, axis=0)
    return float(np.mean(gmag_sq ** (p / 2.0)) ** (1.0 / p))


def inner(f, g):
    """L2 inner product of two real fields via their coefficients."""
    return float(np.real(np.sum(f.coeffs * np.conj(g.coeffs))))


def random_field(grid, rng, kmax=None, slope=2.0, l2=1.0):
    """Random band-limited real field with |u_hat(k)| ~ |k|^-slope, ||u||=l2."""
    if kmax is None:
        kmax = grid.cutoff
    if kmax > grid.cutoff:
        raise ValueError(f"kmax {kmax} beyond cutoff {grid.cutoff}")
    white = rng.standard_normal(grid.shape)
    c = np.fft.fftn(white) / grid.npoints
    mask = np.all(np.abs(grid.k_vectors) <= kmax, axis=0)
    kmag = np.sqrt(np.maximum(grid.k_sq, 1))
    c = np.where(mask, c * kmag ** (-float(slope)), 0.0)
    c[(0,) * grid.d] = 0.0
    f = SpectralField.from_coeffs(grid, c, project=True)
    nrm = norm(f, "L2")
    if nrm == 0.0:
        return f
    return SpectralField(grid, f.coeffs * (l2 / nrm))
