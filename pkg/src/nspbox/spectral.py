"""Periodic-grid Fourier fields and the multiplier operators built on them.

Everything lives on the torus [0, L)^dim with an FFT-layout integer lattice
scaled by 2*pi/L.  Coefficients use the Fourier-series normalization
(coef = fftn(values) / M^dim), so a single mode ``a*cos(x1)`` carries
coefficient a/2 at each conjugate lattice point and the L2 norm below is the
volume-normalized one: ``l2_norm(f)**2 == mean(|f|^2)`` by Parseval.

Zero-mode convention: fractional powers of the Laplacian and every inverse
operator (Poisson solve, Lambda^-1 gradients/divergences) annihilate the
zero mode.  Nyquist rows are zeroed on construction so that every field has
an exactly Hermitian-symmetric lattice.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "Grid",
    "SpectralField",
    "HelmholtzPair",
    "antisym_pairs",
    "apply_lambda",
    "gradient",
    "divergence",
    "laplacian",
    "curl",
    "antisym_divergence",
    "poisson_solve",
    "helmholtz_decompose",
    "helmholtz_recompose",
    "transform_to_physical",
    "transform_to_spectral",
    "l2_norm",
    "linf_norm",
    "inner",
    "hermitian_defect",
    "hermitian_symmetrize",
    "random_field",
    "MEAN_FREE_RTOL",
]

# Relative tolerance on the zero mode for operators that require mean-free input.
MEAN_FREE_RTOL = 1e-10


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid with its wavenumber lattice.

    Parameters
    ----------
    dim : 2 or 3.  Three is the physically meaningful case; two is a cheap
        testing mode.
    size : points per axis, a power of two >= 8.
    length : box edge, default 2*pi so the lattice is the integer one.
    """

    dim: int
    size: int
    length: float = 2.0 * np.pi

    def __post_init__(self) -> None:
        if self.dim not in (2, 3):
            raise ValueError(f"grid dimension must be 2 or 3, got {self.dim}")
        if self.size < 8 or self.size & (self.size - 1):
            raise ValueError(f"grid size must be a power of two >= 8, got {self.size}")
        if not (np.isfinite(self.length) and self.length > 0):
            raise ValueError(f"box length must be positive, got {self.length}")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.size,) * self.dim

    @property
    def spacing(self) -> float:
        return self.length / self.size

    @cached_property
    def _freq1d(self) -> np.ndarray:
        # integer FFT frequencies scaled to physical wavenumbers
        return 2.0 * np.pi / self.length * np.fft.fftfreq(self.size, d=1.0 / self.size)

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        """Meshed wavenumber arrays xi_i, one per axis, each of shape `shape`."""
        return tuple(np.meshgrid(*([self._freq1d] * self.dim), indexing="ij"))

    @cached_property
    def lam_sq(self) -> np.ndarray:
        return sum(x * x for x in self.wavenumbers)

    @cached_property
    def lam(self) -> np.ndarray:
        """|xi| on the lattice."""
        return np.sqrt(self.lam_sq)

    @cached_property
    def nyquist_mask(self) -> np.ndarray:
        """True where any axis sits on the (zeroed-by-convention) Nyquist row."""
        idx = np.arange(self.size) == self.size // 2
        mask = np.zeros(self.shape, dtype=bool)
        for axis in range(self.dim):
            shape = [1] * self.dim
            shape[axis] = self.size
            mask |= idx.reshape(shape)
        return mask

    @cached_property
    def keep_mask(self) -> np.ndarray:
        """Float mask that keeps everything except Nyquist rows."""
        return np.where(self.nyquist_mask, 0.0, 1.0)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """Two-thirds-rule mask (integer modes with |k| <= size/3), Nyquist-free."""
        ints = np.rint(self._freq1d * self.length / (2.0 * np.pi))
        keep1d = np.abs(ints) <= self.size / 3.0
        mask = np.ones(self.shape, dtype=bool)
        for axis in range(self.dim):
            shape = [1] * self.dim
            shape[axis] = self.size
            mask &= keep1d.reshape(shape)
        return np.where(mask & ~self.nyquist_mask, 1.0, 0.0)

    @cached_property
    def xi_max(self) -> float:
        """Largest |xi| on the data-carrying (non-Nyquist) lattice."""
        return float(np.max(self.lam[~self.nyquist_mask]))

    @property
    def xi_min(self) -> float:
        """Smallest nonzero |xi|."""
        return 2.0 * np.pi / self.length

    def coordinates(self) -> tuple[np.ndarray, ...]:
        x1d = np.arange(self.size) * self.spacing
        return tuple(np.meshgrid(*([x1d] * self.dim), indexing="ij"))


def antisym_pairs(dim: int) -> tuple[tuple[int, int], ...]:
    """Index pairs (i, j), i < j, carried by an antisymmetric-matrix field."""
    return tuple((i, j) for i in range(dim) for j in range(i + 1, dim))


@dataclass
class SpectralField:
    """Complex Fourier coefficients of a real field, shape (ncomp, *grid.shape).

    Scalars have ncomp == 1; velocity fields ncomp == dim; antisymmetric
    matrix fields ncomp == dim*(dim-1)/2 in `antisym_pairs` order.
    Instances are treated as immutable: operators return fresh fields.
    """

    grid: Grid
    coef: np.ndarray

    def __post_init__(self) -> None:
        coef = np.asarray(self.coef, dtype=np.complex128)
        if coef.ndim == self.grid.dim:
            coef = coef[None]
        if coef.shape[1:] != self.grid.shape:
            raise ValueError(f"coefficient shape {coef.shape} does not match grid {self.grid.shape}")
        self.coef = coef * self.grid.keep_mask

    @property
    def ncomp(self) -> int:
        return self.coef.shape[0]

    @property
    def is_scalar(self) -> bool:
        return self.ncomp == 1

    @classmethod
    def zeros(cls, grid: Grid, ncomp: int = 1) -> "SpectralField":
        return cls(grid, np.zeros((ncomp,) + grid.shape, dtype=np.complex128))

    @classmethod
    def from_physical(cls, grid: Grid, values: np.ndarray) -> "SpectralField":
        return transform_to_spectral(grid, values)

    def to_physical(self) -> np.ndarray:
        return transform_to_physical(self)

    def zero_mode(self) -> np.ndarray:
        return self.coef[(slice(None),) + (0,) * self.grid.dim]

    def copy(self) -> "SpectralField":
        return SpectralField(self.grid, self.coef.copy())

    def component(self, i: int) -> "SpectralField":
        return SpectralField(self.grid, self.coef[i : i + 1])

    def __add__(self, other: "SpectralField") -> "SpectralField":
        return SpectralField(self.grid, self.coef + other.coef)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        return SpectralField(self.grid, self.coef - other.coef)

    def __mul__(self, scalar: float) -> "SpectralField":
        return SpectralField(self.grid, self.coef * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "SpectralField":
        return SpectralField(self.grid, -self.coef)


@dataclass
class HelmholtzPair:
    """Gradient-part potential c and solenoidal antisymmetric part I of a velocity."""

    c: SpectralField
    I: SpectralField

    def __post_init__(self) -> None:
        if self.c.grid != self.I.grid:
            raise ValueError("Helmholtz parts live on different grids")
        if not self.c.is_scalar:
            raise ValueError("compressible part must be scalar")
        npairs = len(antisym_pairs(self.c.grid.dim))
        if self.I.ncomp != npairs:
            raise ValueError(f"incompressible part must have {npairs} components, got {self.I.ncomp}")


# ---------------------------------------------------------------------------
# transforms and norms


def transform_to_spectral(grid: Grid, values: np.ndarray) -> SpectralField:
    """Forward transform of one or more real component arrays."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == grid.dim:
        values = values[None]
    if values.shape[1:] != grid.shape:
        raise ValueError(f"physical shape {values.shape} does not match grid {grid.shape}")
    coef = np.fft.fftn(values, axes=range(1, grid.dim + 1)) / grid.size**grid.dim
    return SpectralField(grid, coef)


def transform_to_physical(f: SpectralField) -> np.ndarray:
    """Inverse transform; returns real arrays of shape (ncomp, *grid.shape)."""
    grid = f.grid
    out = np.fft.ifftn(f.coef * grid.size**grid.dim, axes=range(1, grid.dim + 1)).real
    return out


def l2_norm(f: SpectralField) -> float:
    """Volume-normalized L2 norm, sqrt(mean |f|^2) over all components."""
    return float(np.sqrt(np.sum(np.abs(f.coef) ** 2)))


def inner(f: SpectralField, g: SpectralField) -> float:
    """Volume-normalized L2 inner product of real fields."""
    return float(np.sum(f.coef * np.conj(g.coef)).real)


def linf_norm(f: SpectralField) -> float:
    return float(np.max(np.abs(f.to_physical())))


def _negate_indices(arr: np.ndarray, dim: int) -> np.ndarray:
    """Map the lattice value at k to -k mod size along every spatial axis."""
    spatial = tuple(range(arr.ndim - dim, arr.ndim))
    return np.roll(np.flip(arr, axis=spatial), shift=1, axis=spatial)


def hermitian_defect(f: SpectralField) -> float:
    """Relative departure from coef(-xi) == conj(coef(xi))."""
    mirror = np.conj(_negate_indices(f.coef, f.grid.dim))
    scale = np.max(np.abs(f.coef))
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(f.coef - mirror)) / scale)


def hermitian_symmetrize(f: SpectralField) -> SpectralField:
    coef = 0.5 * (f.coef + np.conj(_negate_indices(f.coef, f.grid.dim)))
    return SpectralField(f.grid, coef)


# ---------------------------------------------------------------------------
# Fourier multipliers


def _apply_multiplier(f: SpectralField, mult: np.ndarray) -> SpectralField:
    return SpectralField(f.grid, f.coef * mult)


def apply_lambda(f: SpectralField, s: float) -> SpectralField:
    """|xi|^s multiplier; the zero mode is annihilated whenever s != 0."""
    if not np.isfinite(s):
        raise ValueError(f"non-finite exponent {s}")
    if s == 0:
        return f.copy()
    lam = f.grid.lam
    if s < 0:
        mult = np.zeros_like(lam)
        np.divide(1.0, lam**-s, out=mult, where=lam > 0)
    else:
        mult = lam**s
    return _apply_multiplier(f, mult)


def gradient(f: SpectralField) -> SpectralField:
    if not f.is_scalar:
        raise ValueError("gradient expects a scalar field")
    grid = f.grid
    comps = [1j * xi * f.coef[0] for xi in grid.wavenumbers]
    return SpectralField(grid, np.stack(comps))


def divergence(u: SpectralField) -> SpectralField:
    grid = u.grid
    if u.ncomp != grid.dim:
        raise ValueError("divergence expects a velocity field")
    coef = sum(1j * xi * u.coef[i] for i, xi in enumerate(grid.wavenumbers))
    return SpectralField(grid, coef[None])


def laplacian(f: SpectralField) -> SpectralField:
    return _apply_multiplier(f, -f.grid.lam_sq)


def curl(u: SpectralField) -> SpectralField:
    """Antisymmetric curl with components (curl u)_{ij} = d_j u_i - d_i u_j, i < j."""
    grid = u.grid
    if u.ncomp != grid.dim:
        raise ValueError("curl expects a velocity field")
    xi = grid.wavenumbers
    comps = [1j * (xi[j] * u.coef[i] - xi[i] * u.coef[j]) for i, j in antisym_pairs(grid.dim)]
    return SpectralField(grid, np.stack(comps))


def antisym_divergence(I: SpectralField) -> SpectralField:
    """Row divergence (div I)_i = sum_j d_j I_{ij} of the full antisymmetric matrix."""
    grid = I.grid
    pairs = antisym_pairs(grid.dim)
    if I.ncomp != len(pairs):
        raise ValueError("antisymmetric field has wrong component count")
    xi = grid.wavenumbers
    out = np.zeros((grid.dim,) + grid.shape, dtype=np.complex128)
    for comp, (i, j) in enumerate(pairs):
        out[i] += 1j * xi[j] * I.coef[comp]
        out[j] -= 1j * xi[i] * I.coef[comp]
    return SpectralField(grid, out)


def _require_mean_free(f: SpectralField, what: str) -> None:
    scale = l2_norm(f)
    mean = float(np.max(np.abs(f.zero_mode())))
    if mean > MEAN_FREE_RTOL * scale:
        raise ValueError(f"{what} must be mean-free (zero mode {mean:.3e} vs norm {scale:.3e})")


def poisson_solve(theta: SpectralField) -> SpectralField:
    """Solve laplacian(phi) = theta for a mean-free scalar source."""
    if not theta.is_scalar:
        raise ValueError("Poisson source must be scalar")
    _require_mean_free(theta, "Poisson source (charge imbalance)")
    grid = theta.grid
    mult = np.zeros_like(grid.lam_sq)
    np.divide(-1.0, grid.lam_sq, out=mult, where=grid.lam_sq > 0)
    return _apply_multiplier(theta, mult)


def helmholtz_decompose(u: SpectralField) -> HelmholtzPair:
    """Split a mean-free velocity into its gradient and solenoidal parts."""
    grid = u.grid
    if u.ncomp != grid.dim:
        raise ValueError("Helmholtz decomposition expects a velocity field")
    _require_mean_free(u, "velocity")
    c = apply_lambda(divergence(u), -1.0)
    I = apply_lambda(curl(u), -1.0)
    return HelmholtzPair(c=c, I=I)


def helmholtz_recompose(p: HelmholtzPair) -> SpectralField:
    """u = -Lambda^-1 grad c - Lambda^-1 div I."""
    grad_part = apply_lambda(gradient(p.c), -1.0)
    div_part = apply_lambda(antisym_divergence(p.I), -1.0)
    return SpectralField(p.c.grid, -(grad_part.coef + div_part.coef))


# ---------------------------------------------------------------------------
# random fields (deterministic given the generator state)


def random_field(
    grid: Grid,
    ncomp: int,
    rng: np.random.Generator,
    xi_lo: float = 0.0,
    xi_hi: float | None = None,
    spectrum=None,
) -> SpectralField:
    """Seeded Hermitian random field supported on xi_lo < |xi| <= xi_hi.

    `spectrum`, if given, is a callable of |xi| multiplying the flat random
    coefficients.  The zero mode is always empty.
    """
    if xi_hi is None:
        xi_hi = grid.xi_max
    band = (grid.lam > xi_lo) & (grid.lam <= xi_hi)
    band &= ~grid.nyquist_mask
    band[(0,) * grid.dim] = False
    if not band.any():
        raise ValueError(f"band ({xi_lo}, {xi_hi}] is empty on this grid")
    shape = (ncomp,) + grid.shape
    coef = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    coef *= band
    if spectrum is not None:
        coef *= spectrum(grid.lam)
    return hermitian_symmetrize(SpectralField(grid, coef))
