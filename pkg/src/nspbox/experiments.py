"""Experiment drivers: nonlinear run, linear reference, refinement pair,
perturbation pair, and the shell-norm lemma checks.

Every driver writes its artifacts under an output directory, returns a
summary dict, and evaluates a named assertion set.  With asserting enabled
the process exit code is nonzero iff any assertion fails.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass

import numpy as np

from . import energy, lp, records as rec
from .config import RunConfig
from .initial_data import make_initial_data
from .model import NspState
from .spectral import l2_norm, random_field
from .stepper import FriedrichsStepper

__all__ = [
    "ExperimentResult",
    "experiment_nonlinear",
    "experiment_linear",
    "experiment_refine",
    "experiment_perturb",
    "experiment_check_lemmas",
]


@dataclass
class ExperimentResult:
    exit_code: int
    summary: dict


def _consts(cfg: RunConfig) -> energy.EstimateConstants:
    return energy.compute_constants(
        cfg.params, K=cfg.k_weight, A=cfg.bound_A, c_tilde=cfg.bound_c_tilde
    )


def _finish(name: str, out_dir, summary: dict, assertions: list[tuple[str, bool, str]], do_assert: bool) -> ExperimentResult:
    summary["assertions"] = {label: bool(ok) for label, ok, _ in assertions}
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump({"experiment": name, **summary}, fh, indent=2, default=float)
        fh.write("\n")
    failures = [(label, detail) for label, ok, detail in assertions if not ok]
    for label, detail in failures:
        print(f"FAIL {name}:{label}: {detail}")
    if do_assert and failures:
        return ExperimentResult(exit_code=1, summary=summary)
    return ExperimentResult(exit_code=0, summary=summary)


def _announce(name: str, labels: list[str], do_assert: bool) -> None:
    mode = "enforced" if do_assert else "reported"
    print(f"{name}: assertions ({mode}): {', '.join(labels)}")


class _RecordingMonitor:
    """Wraps an EnergyMonitor, snapshotting the stepper flags per instant."""

    def __init__(self, energy_monitor: energy.EnergyMonitor):
        self.energy_monitor = energy_monitor
        self.norm_records: list[rec.NormRecord] = []

    def __call__(self, state: NspState, flags=None) -> energy.EnergyReport:
        report = self.energy_monitor(state)
        positivity = bool(flags.positivity_ok) if flags is not None else True
        guarded = bool(flags.guard_active) if flags is not None else False
        self.norm_records.append(rec.record_from_report(report, positivity=positivity, guarded=guarded))
        return report

    def write(self, out_dir, stem: str = "records") -> None:
        os.makedirs(out_dir, exist_ok=True)
        rec.write_records(self.norm_records, os.path.join(out_dir, stem + ".ndjson"))


# ---------------------------------------------------------------------------


def experiment_nonlinear(cfg: RunConfig, out_dir, do_assert: bool = False) -> ExperimentResult:
    labels = ["mass_conservation", "density_positive", "v_nondecreasing", "global_bound"]
    _announce("nonlinear", labels, do_assert)

    consts = _consts(cfg)
    state0 = make_initial_data(cfg)
    monitor = energy.EnergyMonitor(cfg.params, consts)
    recording = _RecordingMonitor(monitor)
    stepper = FriedrichsStepper(cfg.grid, cfg.params, cfg.stepper)
    traj = stepper.run(state0, monitor=recording, stride=cfg.monitor_stride)
    recording.write(out_dir)

    mass_defect = max(
        float(np.max(np.abs(state0.theta().zero_mode()))),
        float(np.max(np.abs(traj.final_state.theta().zero_mode()))),
    )
    v_series = [r.v_accum for r in traj.records]
    verdict = energy.global_bound_check(traj.records, monitor.e0, consts)

    summary = {
        "e0": monitor.e0,
        "max_e_ratio": verdict.max_ratio,
        "bound_ratio": verdict.threshold_ratio,
        "m_empirical": traj.records[-1].prim_ratio,
        "min_density": traj.min_density,
        "guard_ever_active": traj.guard_ever_active,
        "mass_defect": mass_defect,
    }
    assertions = [
        ("mass_conservation", mass_defect <= 1e-12, f"defect {mass_defect:.3e}"),
        ("density_positive", traj.min_density > 0, f"min density {traj.min_density:.3e}"),
        ("v_nondecreasing", all(b >= a for a, b in zip(v_series, v_series[1:])), "V decreased"),
        ("global_bound", verdict.passed, f"ratio {verdict.max_ratio:.3f} > {verdict.threshold_ratio:.3f}"),
    ]
    return _finish("nonlinear", out_dir, summary, assertions, do_assert)


def experiment_linear(cfg: RunConfig, out_dir, do_assert: bool = False) -> ExperimentResult:
    labels = ["c_fit_positive", "damping_margins", "envelopes"]
    _announce("linear", labels, do_assert)

    consts = _consts(cfg)
    state0 = make_initial_data(cfg)
    monitor = energy.EnergyMonitor(cfg.params, consts)
    recording = _RecordingMonitor(monitor)
    stepper = FriedrichsStepper(cfg.grid, cfg.params, cfg.stepper, linear_only=True)
    traj = stepper.run(state0, monitor=recording, stride=cfg.monitor_stride)
    recording.write(out_dir)

    c_fit = energy.fit_damping_constant(traj.records)
    margins = energy.damping_margins(traj.records, c_fit)
    max_margin = max(margins.values())
    envelopes_ok = energy.envelopes_nonincreasing(traj.records)
    rate_bound = energy.linear_decay_rate_bound(cfg.grid, consts, cfg.params)

    summary = {
        "c_fit": c_fit,
        "max_margin": max_margin,
        "per_mode_rate_bound": rate_bound,
        "margins": {str(k): v for k, v in margins.items()},
    }
    if cfg.k_weight != 0.0:
        weighted = energy.convection_weighted(traj.records, cfg.k_weight, "e_value")
        summary["k_weight"] = cfg.k_weight
        summary["max_weighted_e"] = float(np.max(weighted))
    assertions = [
        ("c_fit_positive", c_fit > 0, f"c_fit = {c_fit:.3e}"),
        ("damping_margins", max_margin <= 1e-8, f"max margin {max_margin:.3e}"),
        ("envelopes", envelopes_ok, "a shell envelope increased"),
    ]
    return _finish("linear", out_dir, summary, assertions, do_assert)


def _distance_indices(dim: int) -> tuple[tuple[float, float], tuple[float, float]]:
    n2 = 0.5 * dim
    return (n2 - 1.5, n2 + 1.0), (n2 - 1.5, n2 - 1.0)


def _lockstep(cfg_a: RunConfig, cfg_b: RunConfig, state_a: NspState, state_b: NspState, observe):
    """Advance two trajectories with a shared clock, calling observe at strides."""
    stepper_a = FriedrichsStepper(cfg_a.grid, cfg_a.params, cfg_a.stepper)
    stepper_b = FriedrichsStepper(cfg_b.grid, cfg_b.params, cfg_b.stepper)
    sa, sb = stepper_a.prepare(state_a), stepper_b.prepare(state_b)
    n_steps = int(round(cfg_a.stepper.t_end / cfg_a.stepper.dt))
    observe(sa, sb)
    for i in range(n_steps):
        sa = stepper_a.step(sa)
        sb = stepper_b.step(sb)
        if (i + 1) % cfg_a.monitor_stride == 0 or i + 1 == n_steps:
            observe(sa, sb)


def experiment_refine(cfg: RunConfig, out_dir, do_assert: bool = False) -> ExperimentResult:
    labels = ["distances_finite"]
    _announce("refine", labels, do_assert)

    cfg_fine = dataclasses.replace(
        cfg, stepper=dataclasses.replace(cfg.stepper, n=2.0 * cfg.stepper.n)
    )
    state_a = make_initial_data(cfg)
    state_b = make_initial_data(cfg_fine)

    idx_h, idx_u = _distance_indices(cfg.grid.dim)
    rows = []

    def observe(sa: NspState, sb: NspState):
        du = sb.velocity() - sa.velocity()
        dh = sb.h - sa.h
        rows.append(
            {
                "t": sa.t,
                "dist_h": lp.hybrid_norm(dh, idx_h),
                "dist_u": lp.hybrid_norm(du, idx_u),
            }
        )

    _lockstep(cfg, cfg_fine, state_a, state_b, observe)

    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "distance.ndjson"), "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")

    max_u = max(row["dist_u"] for row in rows)
    max_h = max(row["dist_h"] for row in rows)
    summary = {"n": cfg.stepper.n, "n_fine": cfg_fine.stepper.n, "max_dist_u": max_u, "max_dist_h": max_h}
    assertions = [("distances_finite", np.isfinite(max_u) and np.isfinite(max_h), "non-finite distance")]
    return _finish("refine", out_dir, summary, assertions, do_assert)


def experiment_perturb(cfg: RunConfig, out_dir, do_assert: bool = False) -> ExperimentResult:
    labels = ["zero_delta_identically_zero"] if cfg.perturb_delta == 0.0 else ["difference_finite"]
    _announce("perturb", labels, do_assert)

    delta = cfg.perturb_delta
    state_a = make_initial_data(cfg)
    if delta > 0.0:
        pert_cfg = dataclasses.replace(cfg, amplitude=delta, seed=cfg.seed + 1)
        pert = make_initial_data(pert_cfg)
        state_b = NspState(state_a.h + pert.h, state_a.c + pert.c, state_a.I + pert.I, t=0.0)
    else:
        state_b = state_a.copy()

    diff_monitor = energy.EnergyMonitor(cfg.params, _consts(cfg))
    rows = []

    def observe(sa: NspState, sb: NspState):
        diff = NspState(sb.h - sa.h, sb.c - sa.c, sb.I - sa.I, t=sa.t)
        report = diff_monitor(diff)
        rows.append(
            {
                "t": sa.t,
                "diff_e": report.e_value,
                "normalized": report.e_value / delta if delta > 0 else report.e_value,
            }
        )

    _lockstep(cfg, cfg, state_a, state_b, observe)

    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "difference.ndjson"), "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")

    max_diff = max(row["diff_e"] for row in rows)
    max_norm = max(row["normalized"] for row in rows)
    summary = {"delta": delta, "max_diff_e": max_diff, "max_normalized": max_norm}
    if delta == 0.0:
        assertions = [("zero_delta_identically_zero", max_diff == 0.0, f"max diff {max_diff:.3e}")]
    else:
        assertions = [("difference_finite", np.isfinite(max_diff), "non-finite difference")]
    return _finish("perturb", out_dir, summary, assertions, do_assert)


# ---------------------------------------------------------------------------


def experiment_check_lemmas(cfg: RunConfig, out_dir, do_assert: bool = False) -> ExperimentResult:
    labels = [
        "partition_of_unity",
        "reconstruction",
        "shell_overlap",
        "bernstein_bounds",
        "hybrid_equals_besov",
        "hybrid_embedding",
    ]
    _announce("check-lemmas", labels, do_assert)

    grid = cfg.grid
    rng = np.random.default_rng(cfg.seed)
    filters = lp.shell_filters(grid)
    nz = grid.lam > 0

    partition = float(np.max(np.abs(filters.masks.sum(axis=0)[nz] - 1.0)))

    recon_defect = 0.0
    bernstein_ok = True
    for _ in range(16):
        f = random_field(grid, 1, rng)
        total = sum(lp.dyadic_block(f, k).coef for k in filters.ks)
        recon_defect = max(recon_defect, float(np.max(np.abs(total - f.coef)) / np.max(np.abs(f.coef))))
        for k in filters.ks:
            try:
                ratio = lp.bernstein_ratio(f, k)
            except ValueError:
                continue
            if not (0.75 * 2.0**k <= ratio <= (8.0 / 3.0) * 2.0**k):
                bernstein_ok = False

    overlap = 0.0
    probe = random_field(grid, 1, np.random.default_rng(cfg.seed + 1))
    for k in filters.ks:
        for j in filters.ks:
            if abs(j - k) >= 2:
                twice = lp.dyadic_block(lp.dyadic_block(probe, k), j)
                overlap = max(overlap, l2_norm(twice))

    s_idx = 0.5 * grid.dim
    f = random_field(grid, 1, rng)
    same = abs(lp.hybrid_norm(f, (s_idx, s_idx)) - lp.besov_norm(f, s_idx))
    embed = lp.hybrid_norm(f, (s_idx, -1.0)) / lp.hybrid_norm(f, (s_idx - 1.0, 1.0))

    product_max = 0.0
    convolution_max = 0.0
    for _ in range(8):
        a = random_field(grid, 1, rng, xi_hi=grid.xi_max / 3.0)
        b = random_field(grid, 1, rng, xi_hi=grid.xi_max / 3.0)
        product_max = max(product_max, lp.product_estimate_ratio(a, b, (s_idx - 1.0, s_idx)))
        convolution_max = max(
            convolution_max,
            lp.product_convolution_ratio(a, b, (s_idx - 0.5, s_idx - 0.5), (s_idx - 0.5, s_idx - 0.5)),
        )

    composition_max = 0.0
    rho_bar = cfg.params.rho_bar
    for _ in range(8):
        f = random_field(grid, 1, rng, xi_hi=grid.xi_max / 3.0)
        cap = 0.4 * rho_bar / max(np.max(np.abs(f.to_physical())), 1e-300)
        composition_max = max(composition_max, lp.composition_check(f * cap, s_idx, rho_bar))

    summary = {
        "partition_defect": partition,
        "reconstruction_defect": recon_defect,
        "shell_overlap": overlap,
        "hybrid_vs_besov": same,
        "embedding_ratio": embed,
        "product_ratio_max": product_max,
        "product_convolution_ratio_max": convolution_max,
        "composition_ratio_max": composition_max,
    }
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "lemmas.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")

    assertions = [
        ("partition_of_unity", partition <= 1e-12, f"defect {partition:.3e}"),
        ("reconstruction", recon_defect <= 1e-10, f"defect {recon_defect:.3e}"),
        ("shell_overlap", overlap <= 1e-12, f"overlap {overlap:.3e}"),
        ("bernstein_bounds", bernstein_ok, "a shell ratio escaped its band"),
        ("hybrid_equals_besov", same == 0.0, f"difference {same:.3e}"),
        ("hybrid_embedding", embed <= 1.0 + 1e-12, f"ratio {embed:.6f}"),
    ]
    return _finish("check-lemmas", out_dir, summary, assertions, do_assert)
