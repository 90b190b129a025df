"""Dyadic frequency shells, Besov-type norms, and the ratio diagnostics.

The radial plateau cutoff equals 1 below 3/4 and 0 above 4/3; the annular
cutoff is the dyadic difference psi(r/2) - psi(r), supported in
[3/4, 8/3].  Because blocks are built from that exact difference, summing
the annular cutoffs over the grid's shell range telescopes and the
partition of unity holds to round-off on every nonzero lattice point.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .spectral import SpectralField, Grid, apply_lambda, l2_norm, linf_norm, transform_to_spectral

__all__ = [
    "CutoffProfile",
    "DEFAULT_PROFILE",
    "DyadicSpectrum",
    "HybridIndex",
    "PLATEAU_EDGES",
    "ANNULUS_SUPPORT",
    "shell_range",
    "shell_filters",
    "dyadic_block",
    "dyadic_spectrum",
    "besov_norm",
    "hybrid_norm",
    "bernstein_ratio",
    "product_estimate_ratio",
    "product_convolution_ratio",
    "composition_check",
]

PLATEAU_EDGES = (0.75, 4.0 / 3.0)
ANNULUS_SUPPORT = (0.75, 8.0 / 3.0)

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(128)


def _bump(x: np.ndarray) -> np.ndarray:
    """C-infinity bump exp(-1/(x(1-x))) on (0,1), zero outside."""
    x = np.asarray(x, dtype=np.float64)
    inside = (x > 0.0) & (x < 1.0)
    out = np.zeros_like(x)
    with np.errstate(divide="ignore", over="ignore"):
        vals = np.exp(-1.0 / np.where(inside, x * (1.0 - x), 1.0))
    out[inside] = vals[inside]
    return out


def _bump_integral(upper: np.ndarray) -> np.ndarray:
    """Fixed 128-point Gauss-Legendre integral of the bump over [0, upper]."""
    upper = np.asarray(upper, dtype=np.float64)
    half = 0.5 * upper[..., None]
    pts = half * (_GL_NODES + 1.0)
    return np.sum(_bump(pts) * _GL_WEIGHTS, axis=-1) * half[..., 0]


_BUMP_NORM = float(_bump_integral(np.asarray(1.0)))


class CutoffProfile:
    """Radial cutoffs built from the normalized integral of the standard bump.

    The recipe is fixed so block norms are bit-reproducible across runs.
    """

    recipe = "bump-integral-gl128"

    def psi(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=np.float64)
        lo, hi = PLATEAU_EDGES
        tau = np.clip((r - lo) / (hi - lo), 0.0, 1.0)
        ramp = _bump_integral(tau) / _BUMP_NORM
        return np.where(r <= lo, 1.0, np.where(r >= hi, 0.0, 1.0 - ramp))

    def phi(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=np.float64)
        return self.psi(0.5 * r) - self.psi(r)


DEFAULT_PROFILE = CutoffProfile()


@dataclass(frozen=True)
class HybridIndex:
    """Regularity exponents: s on low shells (k <= 0), t on high shells (k > 0)."""

    s: float
    t: float

    def __post_init__(self) -> None:
        if not (np.isfinite(self.s) and np.isfinite(self.t)):
            raise ValueError(f"non-finite hybrid index ({self.s}, {self.t})")


def _as_index(idx) -> HybridIndex:
    if isinstance(idx, HybridIndex):
        return idx
    s, t = idx
    return HybridIndex(float(s), float(t))


@dataclass
class DyadicSpectrum:
    """Per-shell L2 block norms over the grid's full shell range."""

    k_min: int
    k_max: int
    block_norms: np.ndarray

    @property
    def ks(self) -> np.ndarray:
        return np.arange(self.k_min, self.k_max + 1)


def shell_range(grid: Grid) -> tuple[int, int]:
    """All k whose annulus [2^k * 3/4, 2^k * 8/3] meets the nonzero lattice."""
    lo, hi = ANNULUS_SUPPORT
    k_min = int(np.ceil(np.log2(grid.xi_min / hi)))
    k_max = int(np.floor(np.log2(grid.xi_max / lo)))
    return k_min, k_max


@dataclass(frozen=True)
class ShellFilters:
    """Stacked annular multipliers phi(2^-k |xi|) for every shell on a grid."""

    grid: Grid
    k_min: int
    k_max: int
    masks: np.ndarray

    def mask(self, k: int) -> np.ndarray:
        if self.k_min <= k <= self.k_max:
            return self.masks[k - self.k_min]
        return np.zeros(self.grid.shape)

    @property
    def ks(self) -> range:
        return range(self.k_min, self.k_max + 1)


@lru_cache(maxsize=8)
def shell_filters(grid: Grid, profile: CutoffProfile = DEFAULT_PROFILE) -> ShellFilters:
    k_min, k_max = shell_range(grid)
    masks = np.stack([profile.phi(grid.lam * 2.0 ** (-k)) for k in range(k_min, k_max + 1)])
    return ShellFilters(grid=grid, k_min=k_min, k_max=k_max, masks=masks)


def dyadic_block(f: SpectralField, k: int, profile: CutoffProfile = DEFAULT_PROFILE) -> SpectralField:
    """Frequency-localized piece of f on the k-th dyadic annulus."""
    filters = shell_filters(f.grid, profile)
    return SpectralField(f.grid, f.coef * filters.mask(k))


def dyadic_spectrum(f: SpectralField, profile: CutoffProfile = DEFAULT_PROFILE) -> DyadicSpectrum:
    filters = shell_filters(f.grid, profile)
    power = np.sum(np.abs(f.coef) ** 2, axis=0)
    norms_sq = np.tensordot(filters.masks**2, power, axes=f.grid.dim)
    return DyadicSpectrum(filters.k_min, filters.k_max, np.sqrt(norms_sq))


def _weighted_shell_sum(spec: DyadicSpectrum, s: float, t: float) -> float:
    total = 0.0
    for k, bn in zip(spec.ks, spec.block_norms):
        w = 2.0 ** (k * s) if k <= 0 else 2.0 ** (k * t)
        total += w * bn
    return total


def besov_norm(f: SpectralField, s: float) -> float:
    """Shell-weighted norm sum_k 2^{ks} ||block_k f||_L2 over the grid's shells."""
    if not np.isfinite(s):
        raise ValueError(f"non-finite exponent {s}")
    return _weighted_shell_sum(dyadic_spectrum(f), s, s)


def hybrid_norm(f: SpectralField, idx) -> float:
    """Low shells weighted by 2^{ks}, high shells by 2^{kt}, split at k = 0."""
    hidx = _as_index(idx)
    return _weighted_shell_sum(dyadic_spectrum(f), hidx.s, hidx.t)


def bernstein_ratio(f: SpectralField, k: int) -> float:
    """||Lambda block_k f|| / ||block_k f||; lands in [(3/4) 2^k, (8/3) 2^k]."""
    block = dyadic_block(f, k)
    den = l2_norm(block)
    if den == 0.0:
        raise ValueError(f"shell {k} of the field is zero")
    return l2_norm(apply_lambda(block, 1.0)) / den


def product_estimate_ratio(f: SpectralField, g: SpectralField, idx) -> float:
    """Measured constant in ||fg|| <= C (||f||_inf ||g|| + ||f|| ||g||_inf).

    The grid product is formed pointwise without truncation, so the ratio is
    exact for band-limited inputs whose product still fits on the lattice.
    """
    if not (f.is_scalar and g.is_scalar):
        raise ValueError("product estimate expects scalar fields")
    hidx = _as_index(idx)
    fg = transform_to_spectral(f.grid, f.to_physical() * g.to_physical())
    den = linf_norm(f) * hybrid_norm(g, hidx) + hybrid_norm(f, hidx) * linf_norm(g)
    if den == 0.0:
        raise ValueError("zero denominator in product estimate")
    return hybrid_norm(fg, hidx) / den


def product_convolution_ratio(f: SpectralField, g: SpectralField, idx_f, idx_g) -> float:
    """Measured constant in the two-index product estimate.

    The product norm is taken at indices (s1+s2-N/2, t1+t2-N/2), the shift
    that makes the inequality dimensionally consistent; the unshifted -1
    variant sometimes quoted alongside it is not implemented.
    """
    i1, i2 = _as_index(idx_f), _as_index(idx_g)
    half_n = 0.5 * f.grid.dim
    if min(i1.s + i2.s, i1.t + i2.t) <= 0 or max(i1.s, i1.t, i2.s, i2.t) > half_n:
        raise ValueError("indices outside the admissible product range")
    fg = transform_to_spectral(f.grid, f.to_physical() * g.to_physical())
    den = hybrid_norm(f, i1) * hybrid_norm(g, i2)
    if den == 0.0:
        raise ValueError("zero denominator in product estimate")
    out_idx = HybridIndex(i1.s + i2.s - half_n, i1.t + i2.t - half_n)
    return hybrid_norm(fg, out_idx) / den


def composition_check(f: SpectralField, s: float, rho_bar: float) -> float:
    """Measured constant in the composition bound for F(u) = u / (u + rho_bar)."""
    if not f.is_scalar:
        raise ValueError("composition check expects a scalar field")
    if rho_bar <= 0:
        raise ValueError("rho_bar must be positive")
    vals = f.to_physical()
    if np.max(np.abs(vals)) >= rho_bar:
        raise ValueError("composition pole reachable: ||f||_inf >= rho_bar")
    den = besov_norm(f, s)
    if den == 0.0:
        raise ValueError("zero field in composition check")
    composed = transform_to_spectral(f.grid, vals / (vals + rho_bar))
    return besov_norm(composed, s) / den
