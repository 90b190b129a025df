"""Frequency-localized energy functionals and their trajectory diagnostics.

Each dyadic shell carries a quadratic form alpha_k^2 mixing the density
variable h and the gradient-part velocity c with a carefully signed cross
term; with the constants chosen below the form is positive semidefinite and
its decay rate along the linear flow is bounded below by min(2^{2k}, 1)
times a positive constant.  The monitor evaluates these forms along runs,
accumulates the convection weight V(t) and the mixed sup/integral norm
E(h, u, t), and exposes the damping and smoothing margins the acceptance
suite checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.linalg import eigh

from . import lp
from . import spectral as sp
from .model import FluidParams, NspState
from .spectral import Grid

__all__ = [
    "EstimateConstants",
    "ShellEnergy",
    "EnergyReport",
    "EnergyMonitor",
    "GlobalBoundVerdict",
    "compute_constants",
    "feasibility_margins",
    "shell_energy",
    "all_shell_energies",
    "equivalence_bounds",
    "display_equivalence_bounds",
    "linear_decay_rate_bound",
    "fit_damping_constant",
    "damping_margins",
    "envelopes_nonincreasing",
    "smoothing_integral",
    "accumulate_v",
    "global_bound_check",
    "convection_weighted",
    "initial_energy",
    "ALPHA_FLOOR",
]

# Shells with alpha below this are treated as empty by the fitting helpers.
ALPHA_FLOOR = 1e-14


@dataclass(frozen=True)
class EstimateConstants:
    """Coupling constants of the shell energies plus bookkeeping knobs.

    K1, M1, M2 drive the low-frequency form, K2, M3 the high-frequency one.
    K is the convection-weight gain (default 0: reweighting is applied in
    post-processing, never inside the solver).  A and c_tilde parameterize
    the small-data bound threshold A * c_tilde * E(0).
    """

    K1: float
    M1: float
    M2: float
    K2: float
    M3: float
    K: float = 0.0
    A: float = 16.0
    c_tilde: float = 1.0


def compute_constants(params: FluidParams, K: float = 0.0, A: float = 16.0, c_tilde: float = 1.0) -> EstimateConstants:
    """Closed-form admissible constants for the given fluid parameters."""
    rho, beta = params.rho_bar, params.beta
    consts = EstimateConstants(
        K1=min(rho * beta / (rho**3 + 2.0 * beta**2), 1.0 / (8.0 * np.sqrt(rho))),
        M1=1.0 / (4.0 * np.sqrt(rho)),
        M2=5.0 * rho / (16.0 * beta),
        K2=beta / (4.0 * rho**2),
        M3=beta / (2.0 * rho**2),
        K=K,
        A=A,
        c_tilde=c_tilde,
    )
    margins = feasibility_margins(params, consts)
    bad = {name: m for name, m in margins.items() if not m > 0}
    if bad:
        raise ValueError(f"infeasible constant selection for {params}: {bad}")
    return consts


def feasibility_margins(params: FluidParams, consts: EstimateConstants) -> dict[str, float]:
    """Margins (must all be positive) of the admissibility conditions.

    The upper bound on M1 is 3/(8 sqrt(rho_bar)): together with K1 < M1 it
    gives 64 K1 M1 / 9 < 1/rho_bar, which is exactly what positive
    definiteness of the low-frequency form needs.
    """
    rho, beta = params.rho_bar, params.beta
    return {
        "low_c_coefficient": 73.0 / 64.0 - (32.0 / 9.0) * consts.M2 * beta / rho,
        "cross_vs_M1": consts.M1 - consts.K1,
        "M1_ceiling": 3.0 / (8.0 * np.sqrt(rho)) - consts.M1,
        "low_dissipation": beta - rho**2 * consts.K1 - beta * consts.K1 / (2.0 * consts.M2),
        "high_cross": consts.M3 - consts.K2,
        "high_ceiling": beta / rho**2 - consts.M3,
        "high_positive": consts.K2,
    }


# ---------------------------------------------------------------------------
# per-shell quadratic forms


def _form_matrices(lam: np.ndarray, k: int, consts: EstimateConstants, params: FluidParams):
    """Per-mode matrices of alpha_k^2 (P) and the squared-block-norm sum (B)."""
    rho, beta = params.rho_bar, params.beta
    if k <= 0:
        q = lam**2
        P = np.array([[(1.0 + q) / rho, -consts.K1 * q], [-consts.K1 * q, np.ones_like(q)]])
        B = np.array([[1.0 + q, np.zeros_like(q)], [np.zeros_like(q), np.ones_like(q)]])
    else:
        l1, l3, l5 = lam, lam**3, lam**5
        hh = (l1 + l3) / rho + beta * consts.K2 / rho**2 * l5
        P = np.array([[hh, -consts.K2 * l3], [-consts.K2 * l3, l1]])
        B = np.array([[l1 + l3 + l5, np.zeros_like(l1)], [np.zeros_like(l1), l1]])
    return P, B


@dataclass
class ShellEnergy:
    """One shell's energy value and the block norms feeding it."""

    k: int
    alpha_sq: float
    norm_h: float
    norm_c: float
    weighted: dict[str, float] = dc_field(default_factory=dict)


def _shell_reductions(s: NspState):
    grid = s.grid
    h_hat = s.h.coef[0]
    c_hat = s.c.coef[0]
    Ph = np.abs(h_hat) ** 2
    Pc = np.abs(c_hat) ** 2
    X = (h_hat * np.conj(c_hat)).real
    lam = grid.lam
    powers = {0: np.ones_like(lam), 1: lam, 2: lam**2, 3: lam**3, 5: lam**5}
    return Ph, Pc, X, powers


def _one_shell(k, w, Ph, Pc, X, powers, consts, params) -> ShellEnergy:
    rho, beta = params.rho_bar, params.beta

    def red(power, quad):
        return float(np.sum(w * powers[power] * quad))

    norm_h = np.sqrt(red(0, Ph))
    norm_c = np.sqrt(red(0, Pc))
    if k <= 0:
        lam_h_sq = red(2, Ph)
        cross = red(2, X)
        alpha_sq = (norm_h**2 + lam_h_sq) / rho + norm_c**2 - 2.0 * consts.K1 * cross
        weighted = {"lam_h": np.sqrt(lam_h_sq), "cross": cross}
    else:
        lam12_h = red(1, Ph)
        lam32_h = red(3, Ph)
        lam52_h = red(5, Ph)
        lam12_c = red(1, Pc)
        cross = red(3, X)
        alpha_sq = (
            (lam12_h + lam32_h) / rho
            + beta * consts.K2 / rho**2 * lam52_h
            + lam12_c
            - 2.0 * consts.K2 * cross
        )
        weighted = {
            "lam12_h": np.sqrt(lam12_h),
            "lam32_h": np.sqrt(lam32_h),
            "lam52_h": np.sqrt(lam52_h),
            "lam12_c": np.sqrt(lam12_c),
            "cross": cross,
        }
    return ShellEnergy(k=k, alpha_sq=float(alpha_sq), norm_h=float(norm_h), norm_c=float(norm_c), weighted=weighted)


def shell_energy(s: NspState, k: int, consts: EstimateConstants, params: FluidParams) -> ShellEnergy:
    filters = lp.shell_filters(s.grid)
    Ph, Pc, X, powers = _shell_reductions(s)
    w = filters.mask(k) ** 2
    return _one_shell(k, w, Ph, Pc, X, powers, consts, params)


def all_shell_energies(s: NspState, consts: EstimateConstants, params: FluidParams) -> list[ShellEnergy]:
    filters = lp.shell_filters(s.grid)
    Ph, Pc, X, powers = _shell_reductions(s)
    return [
        _one_shell(k, filters.masks[k - filters.k_min] ** 2, Ph, Pc, X, powers, consts, params)
        for k in filters.ks
    ]


def _shell_lams(grid: Grid, k: int) -> np.ndarray:
    filters = lp.shell_filters(grid)
    mask = filters.mask(k)
    vals = np.unique(grid.lam[mask > 0])
    return vals[vals > 0]


def equivalence_bounds(grid: Grid, k: int, consts: EstimateConstants, params: FluidParams) -> tuple[float, float]:
    """(c1, c2) with c1 * alpha_k^2 <= sum of squared block norms <= c2 * alpha_k^2.

    Computed as extreme generalized eigenvalues of the two per-mode forms
    over the lattice wavenumbers the shell actually contains.
    """
    lams = _shell_lams(grid, k)
    if lams.size == 0:
        raise ValueError(f"shell {k} contains no lattice modes")
    P, B = _form_matrices(lams, k, consts, params)
    lo, hi = np.inf, -np.inf
    for i in range(lams.size):
        vals = eigh(B[:, :, i], P[:, :, i], eigvals_only=True)
        lo, hi = min(lo, vals[0]), max(hi, vals[-1])
    return float(lo), float(hi)


def display_equivalence_bounds(grid: Grid, k: int, consts: EstimateConstants, params: FluidParams) -> tuple[float, float]:
    """Sandwich constants against the shell-constant weights max(1, 2^{5k}) and max(1, 2^k).

    These are the squared versions of the first-power weights appearing in
    the summed norm displays.
    """
    lams = _shell_lams(grid, k)
    if lams.size == 0:
        raise ValueError(f"shell {k} contains no lattice modes")
    P, _ = _form_matrices(lams, k, consts, params)
    wh = max(1.0, 2.0 ** (5 * k))
    wc = max(1.0, 2.0**k)
    lo, hi = np.inf, -np.inf
    for i in range(lams.size):
        D = np.diag([wh, wc])
        vals = eigh(D, P[:, :, i], eigvals_only=True)
        lo, hi = min(lo, vals[0]), max(hi, vals[-1])
    return float(lo), float(hi)


def linear_decay_rate_bound(grid: Grid, consts: EstimateConstants, params: FluidParams) -> float:
    """Largest c with d/dt alpha_k^2 <= -2 c min(2^{2k}, 1) alpha_k^2 on the linear flow.

    Per mode this is a generalized eigenvalue problem between the Lyapunov
    derivative of the energy form along z' = A z and the form itself.
    """
    filters = lp.shell_filters(grid)
    best = np.inf
    for k in filters.ks:
        lams = _shell_lams(grid, k)
        if lams.size == 0:
            continue
        m = min(2.0 ** (2 * k), 1.0)
        P, _ = _form_matrices(lams, k, consts, params)
        for i in range(lams.size):
            q = lams[i] ** 2
            A = np.array([[0.0, -params.rho_bar], [q + 1.0, -params.nu_c * q]])
            Pi = P[:, :, i]
            lyap = A.T @ Pi + Pi @ A
            # rate = -sup_x (x' lyap x) / (2 m x' P x)
            vals = eigh(lyap, 2.0 * m * Pi, eigvals_only=True)
            best = min(best, -float(vals[-1]))
    return float(best)


# ---------------------------------------------------------------------------
# trajectory-level reports


@dataclass
class EnergyReport:
    """Snapshot of every monitored norm at one instant."""

    t: float
    shells: list[ShellEnergy]
    hybrid_h: float
    hybrid_c: float
    hybrid_I: float
    hybrid_u: float
    besov_u_high: float
    v_accum: float
    e_value: float
    e_ratio: float
    smoothing_accum: float
    damping_margin: float | None
    smoothing_margin: float | None
    prim_norm: float
    prim_ratio: float


@dataclass
class GlobalBoundVerdict:
    passed: bool
    max_ratio: float
    threshold_ratio: float


def initial_energy(s: NspState) -> float:
    """E(0): hybrid norm of h at the sup indices plus that of u."""
    n2 = 0.5 * s.grid.dim
    u = s.velocity()
    return lp.hybrid_norm(s.h, (n2 - 1.5, n2 + 1.0)) + lp.hybrid_norm(u, (n2 - 1.5, n2 - 1.0))


class EnergyMonitor:
    """Stateful per-run monitor; call it with successive states.

    Sup-in-time norms are running maxima over the monitored instants and
    time integrals are trapezoidal, so E(h, u, t) is the discretization of
    the mixed norm on the sample times.
    """

    def __init__(
        self,
        params: FluidParams,
        consts: EstimateConstants | None = None,
        reg_index: float | None = None,
        c_fit: float | None = None,
        smoothing_c: float | None = None,
    ):
        self.params = params
        self.consts = consts if consts is not None else compute_constants(params)
        self.reg_index = reg_index
        self.c_fit = c_fit
        self.smoothing_c = smoothing_c
        self._prev: dict | None = None
        self.sup_h = 0.0
        self.sup_u = 0.0
        self.int_h = 0.0
        self.int_u = 0.0
        self.v_accum = 0.0
        self.smoothing_accum = 0.0
        self.e0: float | None = None
        self.smoothing_initial: float | None = None
        self._prim_sup = np.zeros(3)
        self._prim_int = np.zeros(3)
        self.prim_e0: float | None = None

    def __call__(self, s: NspState, flags=None) -> EnergyReport:
        n2 = 0.5 * s.grid.dim
        reg = self.reg_index if self.reg_index is not None else n2
        u = s.velocity()

        hybrid_h = lp.hybrid_norm(s.h, (n2 - 1.5, n2 + 1.0))
        hybrid_u = lp.hybrid_norm(u, (n2 - 1.5, n2 - 1.0))
        hybrid_c = lp.hybrid_norm(s.c, (n2 - 1.5, n2 - 1.0))
        hybrid_I = lp.hybrid_norm(s.I, (n2 - 1.5, n2 - 1.0))
        int_h_now = lp.hybrid_norm(s.h, (n2 + 0.5, n2 + 1.0))
        int_u_now = lp.hybrid_norm(u, (n2 + 0.5, n2 + 1.0))
        besov_u_high = lp.besov_norm(u, n2 + 1.0)

        shells = all_shell_energies(s, self.consts, self.params)
        smooth_now = sum(
            2.0 ** (sh.k * (reg + 1.5)) * sh.norm_c for sh in shells if sh.k > 0
        )

        theta = s.theta()
        phi = sp.SpectralField(s.grid, _neg_inv_lam(s.grid) * s.h.coef)
        prim_sup_now = np.array(
            [
                lp.hybrid_norm(theta, (n2 - 2.5, n2)),
                hybrid_u,
                lp.hybrid_norm(phi, (n2 - 0.5, n2 + 2.0)),
            ]
        )
        prim_int_now = np.array(
            [
                lp.hybrid_norm(theta, (n2 - 0.5, n2)),
                int_u_now,
                lp.hybrid_norm(phi, (n2 + 1.5, n2 + 2.0)),
            ]
        )

        if self._prev is None:
            self.e0 = hybrid_h + hybrid_u
            self.prim_e0 = self.e0
            self.smoothing_initial = lp.hybrid_norm(s.h, (reg, reg + 1.5)) + lp.hybrid_norm(
                s.c, (reg - 1.0, reg - 0.5)
            )
        else:
            dt = s.t - self._prev["t"]
            if dt < 0:
                raise ValueError("monitor called with decreasing time")
            self.int_h += 0.5 * dt * (self._prev["int_h"] + int_h_now)
            self.int_u += 0.5 * dt * (self._prev["int_u"] + int_u_now)
            self.v_accum += 0.5 * dt * (self._prev["besov_u"] + besov_u_high)
            self.smoothing_accum += 0.5 * dt * (self._prev["smooth"] + smooth_now)
            self._prim_int += 0.5 * dt * (self._prev["prim_int"] + prim_int_now)

        self.sup_h = max(self.sup_h, hybrid_h)
        self.sup_u = max(self.sup_u, hybrid_u)
        self._prim_sup = np.maximum(self._prim_sup, prim_sup_now)

        e_value = self.sup_h + self.sup_u + self.int_h + self.int_u
        e_ratio = e_value / self.e0 if self.e0 and self.e0 > 0 else 0.0
        prim_norm = float(np.sum(self._prim_sup) + np.sum(self._prim_int))
        prim_ratio = prim_norm / self.prim_e0 if self.prim_e0 and self.prim_e0 > 0 else 0.0

        margin = None
        if self.c_fit is not None and self._prev is not None:
            dt = s.t - self._prev["t"]
            if dt > 0:
                margin = -np.inf
                for sh, prev_a in zip(shells, self._prev["alphas"]):
                    a_prev = np.sqrt(max(prev_a, 0.0))
                    a_now = np.sqrt(max(sh.alpha_sq, 0.0))
                    if a_prev < ALPHA_FLOOR:
                        continue
                    m = min(2.0 ** (2 * sh.k), 1.0)
                    margin = max(margin, (a_now - a_prev) / dt + self.c_fit * m * a_prev)
                margin = None if margin == -np.inf else float(margin)

        smoothing_margin = None
        if self.smoothing_c is not None and self.smoothing_initial is not None:
            majorant = self.smoothing_c * (1.0 + self.v_accum) * self.smoothing_initial
            smoothing_margin = float(self.smoothing_accum - majorant)

        self._prev = {
            "t": s.t,
            "int_h": int_h_now,
            "int_u": int_u_now,
            "besov_u": besov_u_high,
            "smooth": smooth_now,
            "alphas": [sh.alpha_sq for sh in shells],
            "prim_int": prim_int_now,
        }

        return EnergyReport(
            t=s.t,
            shells=shells,
            hybrid_h=hybrid_h,
            hybrid_c=hybrid_c,
            hybrid_I=hybrid_I,
            hybrid_u=hybrid_u,
            besov_u_high=besov_u_high,
            v_accum=self.v_accum,
            e_value=e_value,
            e_ratio=e_ratio,
            smoothing_accum=self.smoothing_accum,
            damping_margin=margin,
            smoothing_margin=smoothing_margin,
            prim_norm=prim_norm,
            prim_ratio=prim_ratio,
        )


def _neg_inv_lam(grid: Grid) -> np.ndarray:
    out = np.zeros_like(grid.lam)
    np.divide(-1.0, grid.lam, out=out, where=grid.lam > 0)
    return out


# ---------------------------------------------------------------------------
# post-processing of report series


def _alpha_matrix(reports: list[EnergyReport]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    times = np.array([r.t for r in reports])
    ks = np.array([sh.k for sh in reports[0].shells])
    alphas = np.sqrt(np.maximum(np.array([[sh.alpha_sq for sh in r.shells] for r in reports]), 0.0))
    return times, ks, alphas


def fit_damping_constant(reports: list[EnergyReport]) -> float:
    """Largest c for which every shell obeys the decay inequality on this run."""
    if len(reports) < 3:
        raise ValueError("need at least 3 monitored instants to fit a decay constant")
    times, ks, alphas = _alpha_matrix(reports)
    scale = float(alphas.max(initial=0.0))
    c_fit = np.inf
    for j, k in enumerate(ks):
        m = min(2.0 ** (2 * k), 1.0)
        for i in range(len(times) - 1):
            a0, a1 = alphas[i, j], alphas[i + 1, j]
            if a0 <= ALPHA_FLOOR * max(scale, 1.0):
                continue
            dt = times[i + 1] - times[i]
            c_fit = min(c_fit, -(a1 - a0) / (dt * m * a0))
    if not np.isfinite(c_fit):
        raise ValueError("trajectory has no active shells to fit")
    return float(c_fit)


def damping_margins(reports: list[EnergyReport], c_fit: float) -> dict[int, float]:
    """Per shell: worst value of d(alpha)/dt + c_fit min(2^{2k},1) alpha over the window."""
    if len(reports) < 3:
        raise ValueError("need at least 3 monitored instants")
    times, ks, alphas = _alpha_matrix(reports)
    scale = float(alphas.max(initial=0.0))
    margins: dict[int, float] = {}
    for j, k in enumerate(ks):
        m = min(2.0 ** (2 * k), 1.0)
        worst = -np.inf
        for i in range(len(times) - 1):
            a0, a1 = alphas[i, j], alphas[i + 1, j]
            if a0 <= ALPHA_FLOOR * max(scale, 1.0) and a1 <= ALPHA_FLOOR * max(scale, 1.0):
                continue
            dt = times[i + 1] - times[i]
            worst = max(worst, (a1 - a0) / dt + c_fit * m * a0)
        margins[int(k)] = float(worst) if worst > -np.inf else 0.0
    return margins


def envelopes_nonincreasing(reports: list[EnergyReport], rtol: float = 1e-10) -> bool:
    """Check that each shell's sequence of local maxima never increases."""
    _, ks, alphas = _alpha_matrix(reports)
    for j in range(len(ks)):
        series = alphas[:, j]
        peaks = [series[0]]
        for i in range(1, len(series) - 1):
            if series[i] >= series[i - 1] and series[i] >= series[i + 1]:
                peaks.append(series[i])
        peaks.append(series[-1])
        peaks = np.array(peaks)
        if np.any(np.diff(peaks) > rtol * max(peaks.max(), 1e-300)):
            return False
    return True


def smoothing_integral(reports: list[EnergyReport], reg_index: float) -> float:
    """Trapezoidal integral of sum_{k>0} 2^{k(s+3/2)} ||c_k|| along the run."""
    times = np.array([r.t for r in reports])
    vals = np.array(
        [sum(2.0 ** (sh.k * (reg_index + 1.5)) * sh.norm_c for sh in r.shells if sh.k > 0) for r in reports]
    )
    return float(np.trapezoid(vals, times))


def accumulate_v(times, besov_vals) -> np.ndarray:
    """Running trapezoidal integral of ||u||_{B^{N/2+1}}; non-decreasing."""
    times = np.asarray(times, dtype=np.float64)
    vals = np.asarray(besov_vals, dtype=np.float64)
    if np.any(vals < 0):
        raise ValueError("norm series must be nonnegative")
    out = np.zeros_like(times)
    if len(times) > 1:
        out[1:] = np.cumsum(0.5 * np.diff(times) * (vals[1:] + vals[:-1]))
    return out


def convection_weighted(reports: list[EnergyReport], K: float, attr: str) -> np.ndarray:
    """Series of exp(-K V(t)) * attr over the reports.

    The weight never enters the solver; it is the post-processing view of
    the recorded norms under the convection gauge.
    """
    vals = np.array([getattr(r, attr) for r in reports], dtype=np.float64)
    v = np.array([r.v_accum for r in reports])
    return np.exp(-K * v) * vals


def global_bound_check(reports: list[EnergyReport], e0: float, consts: EstimateConstants) -> GlobalBoundVerdict:
    """Pass iff E(h, u, t) <= A * c_tilde * E(0) at every monitored instant."""
    threshold = consts.A * consts.c_tilde
    if e0 <= 0.0:
        return GlobalBoundVerdict(passed=True, max_ratio=0.0, threshold_ratio=threshold)
    max_ratio = max(r.e_value / e0 for r in reports)
    return GlobalBoundVerdict(passed=max_ratio <= threshold, max_ratio=float(max_ratio), threshold_ratio=threshold)
