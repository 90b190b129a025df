"""Time integration of the frequency-truncated system.

The stiff linear coupling of (h, c) and the heat flow of I are advanced by
exact per-mode propagators precomputed once per (grid, params, dt); only the
convection and forcing terms are treated explicitly, by second-order
exponential time differencing (default) or IMEX-BDF2.  Every explicit
tendency is re-projected onto the truncation annulus, so projected states
stay projected to round-off.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field as dc_field
from functools import cached_property

import numpy as np
from scipy.linalg import expm

from . import model
from .model import FluidParams, NspState
from .spectral import Grid, SpectralField

__all__ = [
    "FriedrichsProjector",
    "StepperConfig",
    "LinearBlock",
    "FriedrichsStepper",
    "Trajectory",
    "NumericalAbort",
    "project",
    "step",
    "run",
    "linear_reference_run",
    "save_checkpoint",
    "load_checkpoint",
    "CHECKPOINT_MAGIC",
]

SCHEMES = ("etdrk2", "imex-bdf2")


class NumericalAbort(RuntimeError):
    """Raised when the integration produces non-finite data or breaks stability."""


@dataclass(frozen=True)
class FriedrichsProjector:
    """Sharp spectral cutoff onto the annulus 1/n <= |xi| <= n."""

    grid: Grid
    n: float

    def __post_init__(self) -> None:
        if not (self.n > 1.0):
            raise ValueError(f"truncation parameter must exceed 1, got {self.n}")

    @cached_property
    def mask(self) -> np.ndarray:
        lam = self.grid.lam
        inside = (lam >= 1.0 / self.n) & (lam <= self.n)
        return np.where(inside, 1.0, 0.0)

    def __call__(self, f: SpectralField) -> SpectralField:
        return SpectralField(f.grid, f.coef * self.mask)


def project(f: SpectralField, p: FriedrichsProjector) -> SpectralField:
    return p(f)


@dataclass(frozen=True)
class StepperConfig:
    dt: float
    n: float
    t_end: float
    scheme: str = "etdrk2"
    dealias: bool = True
    cfl_margin: float = 0.9
    cfl_interval: int = 16

    def __post_init__(self) -> None:
        if not (self.dt > 0):
            raise ValueError(f"time step must be positive, got {self.dt}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}, expected one of {SCHEMES}")
        if self.t_end < 0:
            raise ValueError(f"t_end must be nonnegative, got {self.t_end}")
        if not (0 < self.cfl_margin <= 1):
            raise ValueError("cfl_margin must lie in (0, 1]")


class LinearBlock:
    """Exact dt-propagators for the per-mode linear system.

    On each mode the pair (h, c) obeys z' = A z with
    A = [[0, -rho_bar], [|xi|^2 + 1, -nu_c |xi|^2]] and the solenoidal part
    decays at rate nu_i |xi|^2.  The matrix exponential and the first two
    phi-functions are read off an augmented 6x6 exponential per distinct
    |xi|^2, which avoids cancellation at small arguments.
    """

    def __init__(self, grid: Grid, params: FluidParams, dt: float):
        self.grid = grid
        self.params = params
        self.dt = dt

        q = grid.lam_sq.ravel()
        uniq, inverse = np.unique(q, return_inverse=True)
        eye = np.eye(2)
        E = np.empty((len(uniq), 2, 2))
        P1 = np.empty_like(E)
        P2 = np.empty_like(E)
        worst = -np.inf
        for idx, qq in enumerate(uniq):
            A = np.array([[0.0, -params.rho_bar], [qq + 1.0, -params.nu_c * qq]])
            if qq > 0:
                worst = max(worst, float(np.max(np.linalg.eigvals(A).real)))
            aug = np.zeros((6, 6))
            aug[0:2, 0:2] = A
            aug[0:2, 2:4] = eye
            aug[2:4, 4:6] = eye
            big = expm(dt * aug)
            E[idx] = big[0:2, 0:2]
            P1[idx] = big[0:2, 2:4]
            P2[idx] = big[0:2, 4:6] / dt
        if worst > 1e-12:
            raise NumericalAbort(f"linear pair block is not dissipative: max Re eig = {worst:.3e}")
        self.spectral_abscissa = worst

        zero_idx = inverse.reshape(grid.shape)[(0,) * grid.dim]
        E[zero_idx] = eye  # zero mode carries no state; keep it inert
        P1[zero_idx] = dt * eye
        P2[zero_idx] = 0.5 * dt * eye

        def scatter(M):
            return M[inverse].reshape(grid.shape)

        self.e00, self.e01 = scatter(E[:, 0, 0]), scatter(E[:, 0, 1])
        self.e10, self.e11 = scatter(E[:, 1, 0]), scatter(E[:, 1, 1])
        self.p1_00, self.p1_01 = scatter(P1[:, 0, 0]), scatter(P1[:, 0, 1])
        self.p1_10, self.p1_11 = scatter(P1[:, 1, 0]), scatter(P1[:, 1, 1])
        self.p2_00, self.p2_01 = scatter(P2[:, 0, 0]), scatter(P2[:, 0, 1])
        self.p2_10, self.p2_11 = scatter(P2[:, 1, 0]), scatter(P2[:, 1, 1])

        z = -params.nu_i * grid.lam_sq * dt
        self.heat_e = np.exp(z)
        self.heat_p1 = dt * _phi1(z)
        self.heat_p2 = dt * _phi2(z)

    def apply_exp(self, h: np.ndarray, c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.e00 * h + self.e01 * c, self.e10 * h + self.e11 * c

    def apply_phi1(self, h: np.ndarray, c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.p1_00 * h + self.p1_01 * c, self.p1_10 * h + self.p1_11 * c

    def apply_phi2(self, h: np.ndarray, c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.p2_00 * h + self.p2_01 * c, self.p2_10 * h + self.p2_11 * c

    def pair_matrix(self, lam_sq: float) -> np.ndarray:
        return np.array(
            [[0.0, -self.params.rho_bar], [lam_sq + 1.0, -self.params.nu_c * lam_sq]]
        )


def _phi1(z: np.ndarray) -> np.ndarray:
    small = np.abs(z) < 1e-4
    safe = np.where(small, 1.0, z)
    series = 1.0 + z / 2.0 + z * z / 6.0
    return np.where(small, series, np.expm1(safe) / safe)


def _phi2(z: np.ndarray) -> np.ndarray:
    small = np.abs(z) < 1e-4
    safe = np.where(small, 1.0, z)
    series = 0.5 + z / 6.0 + z * z / 24.0
    return np.where(small, series, (np.expm1(safe) - safe) / (safe * safe))


@dataclass
class StepFlags:
    min_density: float = np.inf
    max_speed: float = 0.0
    positivity_ok: bool = True
    guard_active: bool = False


@dataclass
class Trajectory:
    """Monitored samples of one run: times, monitor records, final state."""

    times: list[float] = dc_field(default_factory=list)
    records: list = dc_field(default_factory=list)
    final_state: NspState | None = None
    min_density: float = np.inf
    guard_ever_active: bool = False


class FriedrichsStepper:
    """One sequential state machine advancing a projected state by dt steps."""

    def __init__(
        self,
        grid: Grid,
        params: FluidParams,
        cfg: StepperConfig,
        linear_only: bool = False,
    ):
        self.grid = grid
        self.params = params
        self.cfg = cfg
        self.linear_only = linear_only
        self.projector = FriedrichsProjector(grid, cfg.n)
        self.blocks = LinearBlock(grid, params, cfg.dt)
        self._step_count = 0
        self._prev_tend: tuple[np.ndarray, ...] | None = None
        self.flags = StepFlags()

    # -- explicit tendencies ------------------------------------------------

    def _tendencies(self, s: NspState) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if self.linear_only:
            z = np.zeros_like(s.h.coef)
            return z, z, np.zeros_like(s.I.coef)
        th, tc, ti, diag = model.explicit_rhs(
            s, self.params, dealias=self.cfg.dealias, project_mask=self.projector.mask
        )
        self.flags.min_density = min(self.flags.min_density, diag.min_density)
        self.flags.max_speed = diag.max_speed
        if diag.min_density <= 0.0:
            self.flags.positivity_ok = False
        band = (0.5 * self.params.rho_bar, 1.5 * self.params.rho_bar)
        if diag.min_density < band[0] or diag.min_density > band[1]:
            self.flags.guard_active = True
        return th.coef, tc.coef, ti.coef

    def _check_health(self, s: NspState) -> None:
        if not (
            np.isfinite(s.h.coef).all()
            and np.isfinite(s.c.coef).all()
            and np.isfinite(s.I.coef).all()
        ):
            raise NumericalAbort(f"non-finite coefficients at t = {s.t:.6g}")
        drift = max(
            float(np.max(np.abs(s.h.zero_mode()))),
            float(np.max(np.abs(s.c.zero_mode()))),
            float(np.max(np.abs(s.I.zero_mode()))),
        )
        scale = max(float(np.max(np.abs(s.h.coef))), float(np.max(np.abs(s.c.coef))), 1.0)
        if drift > 1e-12 * scale:
            raise NumericalAbort(f"state acquired a mean at t = {s.t:.6g} (drift {drift:.3e})")

    def _check_cfl(self, speed: float, when: str) -> None:
        if speed <= 0.0:
            return
        number = self.cfg.dt * speed / self.grid.spacing
        if number > self.cfg.cfl_margin:
            raise NumericalAbort(
                f"convective stability violated {when}: dt*|u|/dx = {number:.3f} "
                f"> {self.cfg.cfl_margin}"
            )

    # -- schemes -------------------------------------------------------------

    def step(self, s: NspState) -> NspState:
        self._check_health(s)
        if self.cfg.scheme == "etdrk2" or self._prev_tend is None:
            out = self._step_etdrk2(s)
        else:
            out = self._step_imex_bdf2(s)
        self._step_count += 1
        if self._step_count % self.cfg.cfl_interval == 0:
            self._check_cfl(self.flags.max_speed, f"at t = {out.t:.6g}")
        self._check_health(out)
        return out

    def _step_etdrk2(self, s: NspState) -> NspState:
        blocks = self.blocks
        n0 = self._tendencies(s)

        eh, ec = blocks.apply_exp(s.h.coef[0], s.c.coef[0])
        ph, pc = blocks.apply_phi1(n0[0][0], n0[1][0])
        h_mid, c_mid = eh + ph, ec + pc
        i_mid = blocks.heat_e * s.I.coef + blocks.heat_p1 * n0[2]

        mid = self._wrap(h_mid, c_mid, i_mid, s.t + self.cfg.dt)
        n1 = self._tendencies(mid)

        dh, dc = blocks.apply_phi2(n1[0][0] - n0[0][0], n1[1][0] - n0[1][0])
        h_new, c_new = h_mid + dh, c_mid + dc
        i_new = i_mid + blocks.heat_p2 * (n1[2] - n0[2])

        if self.cfg.scheme == "imex-bdf2":
            self._prev_state = (s.h.coef.copy(), s.c.coef.copy(), s.I.coef.copy())
            self._prev_tend = n0
        return self._wrap(h_new, c_new, i_new, s.t + self.cfg.dt)

    def _step_imex_bdf2(self, s: NspState) -> NspState:
        # (3 z_{n+1} - 4 z_n + z_{n-1}) / (2 dt) = L z_{n+1} + 2 N_n - N_{n-1}
        dt = self.cfg.dt
        n_now = self._tendencies(s)
        prev_h, prev_c, prev_i = self._prev_state
        n_prev = self._prev_tend

        rhs_h = 4.0 * s.h.coef[0] - prev_h[0] + 2.0 * dt * (2.0 * n_now[0][0] - n_prev[0][0])
        rhs_c = 4.0 * s.c.coef[0] - prev_c[0] + 2.0 * dt * (2.0 * n_now[1][0] - n_prev[1][0])
        rhs_i = 4.0 * s.I.coef - prev_i + 2.0 * dt * (2.0 * n_now[2] - n_prev[2])

        r = self._bdf2_resolvent()
        h_new = r["00"] * rhs_h + r["01"] * rhs_c
        c_new = r["10"] * rhs_h + r["11"] * rhs_c
        i_new = rhs_i / (3.0 + 2.0 * dt * self.params.nu_i * self.grid.lam_sq)

        self._prev_state = (s.h.coef.copy(), s.c.coef.copy(), s.I.coef.copy())
        self._prev_tend = n_now
        return self._wrap(h_new, c_new, i_new, s.t + dt)

    def _bdf2_resolvent(self) -> dict[str, np.ndarray]:
        if not hasattr(self, "_bdf2_cache"):
            dt, params, grid = self.cfg.dt, self.params, self.grid
            q = grid.lam_sq
            # inverse of [[3, 2 dt rho], [-2 dt (q+1), 3 + 2 dt nu_c q]] per mode
            a, b = 3.0 * np.ones_like(q), 2.0 * dt * params.rho_bar * np.ones_like(q)
            c, d = -2.0 * dt * (q + 1.0), 3.0 + 2.0 * dt * params.nu_c * q
            det = a * d - b * c
            self._bdf2_cache = {"00": d / det, "01": -b / det, "10": -c / det, "11": a / det}
        return self._bdf2_cache

    def _wrap(self, h: np.ndarray, c: np.ndarray, i: np.ndarray, t: float) -> NspState:
        grid = self.grid
        return NspState(
            h=SpectralField(grid, h[None] if h.ndim == grid.dim else h),
            c=SpectralField(grid, c[None] if c.ndim == grid.dim else c),
            I=SpectralField(grid, i),
            t=t,
        )

    # -- driving ---------------------------------------------------------------

    def prepare(self, s0: NspState) -> NspState:
        s = NspState(self.projector(s0.h), self.projector(s0.c), self.projector(s0.I), t=s0.t)
        if not self.linear_only:
            u_phys = s.velocity().to_physical()
            speed = float(np.max(np.sqrt(np.sum(u_phys**2, axis=0))))
            number = self.cfg.dt * speed / self.grid.spacing
            if number > self.cfg.cfl_margin:
                raise ValueError(
                    f"initial data violates the stability bound: dt*|u|/dx = {number:.3f}"
                )
        return s

    def run(self, s0: NspState, monitor=None, stride: int = 1) -> Trajectory:
        if stride < 1:
            raise ValueError("monitor stride must be >= 1")
        s = self.prepare(s0)
        n_steps = int(round(self.cfg.t_end / self.cfg.dt)) if self.cfg.t_end > 0 else 0
        traj = Trajectory()

        def observe(state: NspState) -> None:
            traj.times.append(state.t)
            if monitor is not None:
                traj.records.append(monitor(state, self.flags))

        observe(s)
        for i in range(n_steps):
            s = self.step(s)
            if (i + 1) % stride == 0 or i + 1 == n_steps:
                observe(s)
        traj.final_state = s
        traj.min_density = self.flags.min_density
        traj.guard_ever_active = self.flags.guard_active
        return traj


def step(s: NspState, cfg: StepperConfig, params: FluidParams) -> NspState:
    """One-off step; prefer a FriedrichsStepper when advancing many steps."""
    return FriedrichsStepper(s.grid, params, cfg).step(s)


def run(s0: NspState, cfg: StepperConfig, params: FluidParams, monitor=None, stride: int = 1) -> Trajectory:
    return FriedrichsStepper(s0.grid, params, cfg).run(s0, monitor=monitor, stride=stride)


def linear_reference_run(
    s0: NspState, cfg: StepperConfig, params: FluidParams, monitor=None, stride: int = 1
) -> Trajectory:
    """Same machinery with convection and all forcings switched off."""
    stepper = FriedrichsStepper(s0.grid, params, cfg, linear_only=True)
    return stepper.run(s0, monitor=monitor, stride=stride)


# ---------------------------------------------------------------------------
# checkpoints

CHECKPOINT_MAGIC = b"NSPCHK1"
_HEADER = struct.Struct("<7sqqdddddd")  # magic, N, M, L, n, t, mu, lambda, rho_bar


def save_checkpoint(path, s: NspState, params: FluidParams, n: float) -> None:
    grid = s.grid
    header = _HEADER.pack(
        CHECKPOINT_MAGIC,
        grid.dim,
        grid.size,
        grid.length,
        float(n),
        s.t,
        params.mu,
        params.lam,
        params.rho_bar,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        for field_ in (s.h, s.c, s.I):
            fh.write(np.ascontiguousarray(field_.coef, dtype="<c16").tobytes())


def load_checkpoint(path) -> tuple[NspState, FluidParams, float]:
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
        if len(raw) < _HEADER.size:
            raise ValueError(f"truncated checkpoint header in {path}")
        magic, dim, size, length, n, t, mu, lam, rho_bar = _HEADER.unpack(raw)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"bad checkpoint magic {magic!r} in {path}")
        grid = Grid(dim=int(dim), size=int(size), length=length)
        params = FluidParams(mu=mu, lam=lam, rho_bar=rho_bar, dim=int(dim))
        count = grid.size**grid.dim

        def read_field(ncomp: int) -> SpectralField:
            expected = ncomp * count * 16
            buf = fh.read(expected)
            if len(buf) != expected:
                raise ValueError(f"truncated checkpoint payload in {path}")
            data = np.frombuffer(buf, dtype="<c16")
            return SpectralField(grid, data.reshape((ncomp,) + grid.shape).astype(np.complex128))

        from .spectral import antisym_pairs

        h = read_field(1)
        c = read_field(1)
        I = read_field(len(antisym_pairs(grid.dim)))
    return NspState(h=h, c=c, I=I, t=t), params, n
