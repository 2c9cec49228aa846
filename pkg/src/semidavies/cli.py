"""Command-line front end: JSON config in, deterministic CSV out.

Subcommands: simulate (full trajectory dump), restore-cp (minimal uniform
dephasing with certificate), fig1 (the bundled two-level determinant
curves), sample (Monte Carlo vs analytic comparison), validate (invariant
battery, exit code only). Numbers are emitted with 17 significant digits so
CSV round-trips reproduce doubles exactly; files are written atomically.
Exit codes: 2 for configuration problems, 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile

import numpy as np

from . import __version__
from .cp_restore import max_coherence_schedule, minimal_uniform_dephasing
from .hybrid_map import (
    DecoherenceModel,
    HybridGeneratorSpec,
    assemble_and_apply,
    build_trajectory,
    cp_witness,
)
from .numkit import TimeGrid
from .qubit_ref import fig1_dataset
from .sampler import average_dephasing_noise, sample_semi_markov
from .semi_markov import (
    JumpKernel,
    RateKernel,
    build_T_series,
    ensure_valid,
    survival_and_waiting,
    validate_jump_kernel,
)

_MATRIX = {"type": "array", "items": {"type": "array", "items": {"type": "number"}}}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["levels", "energies", "kernel", "grid"],
    "additionalProperties": False,
    "properties": {
        "levels": {"type": "integer", "minimum": 2},
        "energies": {"type": "array", "items": {"type": "number"}, "minItems": 2},
        "kernel": {
            "type": "object",
            "required": ["mode", "family", "parameters"],
            "additionalProperties": False,
            "properties": {
                "mode": {"enum": ["rates", "semi-markov"]},
                "family": {"enum": ["exponential", "tabulated"]},
                "parameters": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "kappa": _MATRIX,
                        "gamma": {
                            "anyOf": [{"type": "number", "exclusiveMinimum": 0}, _MATRIX]
                        },
                        "delta": _MATRIX,
                        "samples": {
                            "type": "array",
                            "items": _MATRIX,
                        },
                    },
                },
            },
        },
        "decoherence": {
            "type": "object",
            "required": ["model", "payload"],
            "additionalProperties": False,
            "properties": {
                "model": {"enum": ["gkls", "noise", "direct"]},
                "payload": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "matrix_real": _MATRIX,
                        "matrix_imag": _MATRIX,
                        "rates": {
                            "anyOf": [
                                {"type": "array", "items": {"type": "number"}},
                                _MATRIX,
                            ]
                        },
                    },
                },
            },
        },
        "grid": {
            "type": "object",
            "required": ["t_max", "steps"],
            "additionalProperties": False,
            "properties": {
                "t_max": {"type": "number", "exclusiveMinimum": 0},
                "steps": {"type": "integer", "minimum": 1},
            },
        },
        "initial_state": {
            "type": "array",
            "items": {
                "type": "array",
                "items": {"type": "number"},
                "minItems": 2,
                "maxItems": 2,
            },
        },
        "seed": {"type": "integer", "minimum": 0},
    },
}


class ConfigError(Exception):
    pass


def load_config(path: str) -> dict:
    """Parse and schema-validate a run configuration."""
    import jsonschema

    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        err = jsonschema.exceptions.best_match(errors)
        raise ConfigError(f"{err.json_path}: {err.message}")
    return cfg


def _build_kernel(cfg: dict):
    block = cfg["kernel"]
    params = block["parameters"]
    if block["family"] == "exponential":
        if "kappa" not in params or "gamma" not in params:
            raise ConfigError("$.kernel.parameters: exponential family needs kappa and gamma")
        kappa, gamma = params["kappa"], params["gamma"]
        if block["mode"] == "semi-markov":
            kern = JumpKernel.exponential(kappa, gamma)
            ensure_valid(kern)
            return kern
        delta = params.get("delta")
        if delta is not None:
            kern = RateKernel.exponential_pairs(kappa, gamma)
            return RateKernel(delta=np.asarray(delta, float), terms=kern.terms)
        return RateKernel.exponential_pairs(kappa, gamma)
    if "samples" not in params:
        raise ConfigError("$.kernel.parameters: tabulated family needs samples")
    grid = _build_grid(cfg)
    samples = np.asarray(params["samples"], dtype=float)
    if block["mode"] == "semi-markov":
        kern = JumpKernel.tabulated(samples, grid)
        ensure_valid(kern)
        return kern
    delta = params.get("delta", np.zeros(samples.shape[1:]))
    return RateKernel.tabulated(delta=np.asarray(delta, float), samples=samples, grid=grid)


def _build_decoherence(cfg: dict) -> DecoherenceModel | None:
    block = cfg.get("decoherence")
    if block is None:
        return None
    payload = block["payload"]
    model = block["model"]
    if model == "gkls":
        if "matrix_real" not in payload:
            raise ConfigError("$.decoherence.payload: gkls model needs matrix_real")
        mat = np.asarray(payload["matrix_real"], dtype=float).astype(complex)
        if "matrix_imag" in payload:
            mat = mat + 1j * np.asarray(payload["matrix_imag"], dtype=float)
        return DecoherenceModel.gkls(mat)
    if "rates" not in payload:
        raise ConfigError(f"$.decoherence.payload: {model} model needs rates")
    rates = np.asarray(payload["rates"], dtype=float)
    return DecoherenceModel.noise(rates) if model == "noise" else DecoherenceModel.direct(rates)


def _build_grid(cfg: dict) -> TimeGrid:
    return TimeGrid(cfg["grid"]["t_max"], cfg["grid"]["steps"])


def _build_state(cfg: dict, d: int) -> np.ndarray:
    pairs = cfg.get("initial_state")
    if pairs is None:
        return np.full((d, d), 1.0 / d, dtype=complex)  # maximally coherent
    flat = np.asarray(pairs, dtype=float)
    if flat.shape != (d * d, 2):
        raise ConfigError(
            f"$.initial_state: need {d * d} [re, im] pairs (row-major), got {flat.shape[0]}"
        )
    return (flat[:, 0] + 1j * flat[:, 1]).reshape(d, d)


def build_run(cfg: dict):
    """Config dict to (spec, grid, initial state, seed); raises ConfigError."""
    try:
        grid = _build_grid(cfg)
        kernel = _build_kernel(cfg)
        deco = _build_decoherence(cfg)
        energies = np.asarray(cfg["energies"], dtype=float)
        if energies.size != cfg["levels"]:
            raise ConfigError("$.energies: length must equal levels")
        spec = HybridGeneratorSpec(energies=energies, dissipation=kernel, decoherence=deco)
        rho0 = _build_state(cfg, spec.dimension)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    seed = int(os.environ.get("SEED", cfg.get("seed", 0)))
    return spec, grid, rho0, seed


def _write_csv(path: str, header: list[str], columns: list[np.ndarray]) -> None:
    """RFC-4180 CSV, LF endings, 17 significant digits, atomic replace."""
    n = len(columns[0])
    rows = np.column_stack(columns)
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(prefix=".tmp_csv_", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(",".join(header) + "\n")
            for i in range(n):
                fh.write(",".join(f"{v:.17g}" for v in rows[i]) + "\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _pairs(d: int) -> list[tuple[int, int]]:
    return [(k, l) for k in range(d) for l in range(k + 1, d)]


def _cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    spec, grid, rho0, _ = build_run(cfg)
    traj = build_trajectory(spec, grid, backend=args.backend)
    witness = cp_witness(traj)
    d = spec.dimension

    trace_err = np.empty(grid.n_nodes)
    for node in range(grid.n_nodes):
        out = assemble_and_apply(traj, rho0, node)
        trace_err[node] = abs(np.trace(out) - 1.0)

    header = ["t"]
    cols: list[np.ndarray] = [grid.t]
    for k in range(d):
        for l in range(d):
            header.append(f"T_{k}{l}")
            cols.append(traj.populations[:, k, l])
    for k, l in _pairs(d):
        header.append(f"lambda_{k}{l}_abs")
        cols.append(np.abs(traj.coherence[:, k, l]))
    for k, l in _pairs(d):
        header.append(f"mu_{k}{l}_abs")
        cols.append(np.abs(traj.dephasing[:, k, l]))
    header.append("mineig_C")
    cols.append(witness.min_eig)
    if d == 2:
        header.append("detC")
        cols.append(witness.det2())
    header.append("trace_error")
    cols.append(trace_err)
    _write_csv(args.out, header, cols)
    print(f"wrote {args.out}: {grid.n_nodes} nodes, witness minimum {witness.global_min:.6g}")
    return 0


def _cmd_restore_cp(args) -> int:
    cfg = load_config(args.config)
    spec, grid, _, _ = build_run(cfg)
    result = minimal_uniform_dephasing(
        spec, grid, tol=args.tol, gamma_z_max=args.gamma_z_max
    )
    print(f"gamma_z_star = {result.gamma_z_star:.17g}")
    print(
        f"certificate: min-eig {result.margin_above:.6g} at star+tol"
        + (
            f", {result.margin_below:.6g} at max(0, star-10 tol)"
            if result.margin_below is not None
            else " (already positive at 0)"
        )
    )
    labels = ["at_star", "above"]
    gammas = [result.gamma_z_star, result.gamma_z_star + args.tol]
    margins = [result.margin_at_star, result.margin_above]
    if result.margin_below is not None:
        labels.append("below")
        gammas.append(max(0.0, result.gamma_z_star - 10.0 * args.tol))
        margins.append(result.margin_below)
    labels += [f"probe_{i}" for i in range(len(result.history))]
    gammas += [g for g, _ in result.history]
    margins += [m for _, m in result.history]
    n = len(labels)
    directory = os.path.dirname(os.path.abspath(args.out)) or "."
    fd, tmp = tempfile.mkstemp(prefix=".tmp_csv_", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write("label,gamma_z,min_eig_C\n")
            for i in range(n):
                fh.write(f"{labels[i]},{gammas[i]:.17g},{margins[i]:.17g}\n")
        os.replace(tmp, args.out)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return 0


def _cmd_fig1(args) -> int:
    grid = TimeGrid(args.t_max, args.steps)
    data = fig1_dataset(grid)
    _write_csv(
        args.out,
        ["t", "detC_gz0", "detC_gz0p1", "detC_gz1"],
        list(data.columns()),
    )
    print(f"wrote {args.out}: {grid.n_nodes} rows")
    return 0


def _cmd_sample(args) -> int:
    cfg = load_config(args.config)
    spec, grid, _, seed = build_run(cfg)
    header = ["t"]
    cols: list[np.ndarray] = [grid.t]
    did_anything = False

    if spec.mode == "semi-markov":
        q = spec.dissipation
        batch = sample_semi_markov(q, args.initial_level, grid, args.trajectories, seed)
        ref = build_T_series(q, grid)[:, :, args.initial_level]
        emp = batch.empirical_T()
        err = batch.standard_error()
        d = spec.dimension
        for k in range(d):
            header += [f"emp_T_{k}{args.initial_level}", f"ref_T_{k}{args.initial_level}",
                       f"stderr_{k}"]
            cols += [emp[:, k], ref[:, k], err[:, k]]
        _, g = survival_and_waiting(q, grid)
        header += ["emp_survival", "ref_survival"]
        cols += [batch.empirical_survival(), g[:, args.initial_level]]
        did_anything = True

    if spec.decoherence is not None and spec.decoherence.kind == "noise":
        noise = average_dephasing_noise(
            spec.decoherence.rates, (0, 1), grid, args.trajectories, seed
        )
        gk = spec.decoherence.rates[0] + spec.decoherence.rates[1]
        header += ["emp_mu_abs", "ref_mu_abs", "mu_stderr"]
        cols += [
            np.abs(noise.mu_hat),
            np.exp(-0.5 * gk * grid.t),
            np.hypot(noise.stderr_real, noise.stderr_imag),
        ]
        print(f"fitted decay rate {noise.fitted_rate:.6g} (expected {0.5 * gk:.6g})")
        did_anything = True

    if not did_anything:
        raise ConfigError(
            "nothing to sample: need a semi-markov kernel or a noise decoherence model"
        )
    _write_csv(args.out, header, cols)
    return 0


def _cmd_validate(args) -> int:
    cfg = load_config(args.config)
    spec, grid, rho0, _ = build_run(cfg)
    failures = 0

    def check(name: str, ok: bool, detail: str) -> None:
        nonlocal failures
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        failures += 0 if ok else 1

    if spec.mode == "semi-markov":
        report = validate_jump_kernel(spec.dissipation)
        check("kernel", report.ok, str(report))

    traj = build_trajectory(spec, grid)
    d = spec.dimension
    eye_dev = float(np.max(np.abs(traj.populations[0] - np.eye(d))))
    check("initial_identity", eye_dev <= 1e-12, f"max deviation {eye_dev:.3e}")
    colsum = float(np.max(np.abs(traj.populations.sum(axis=1) - 1.0)))
    check("column_sums", colsum <= 1e-8, f"max deviation {colsum:.3e}")
    tmin = float(traj.populations.min())
    if spec.mode == "semi-markov":
        check("population_floor", tmin >= -1e-10, f"min entry {tmin:.3e}")
    else:
        check("population_floor", True, f"min entry {tmin:.3e} (reported only)")
    sym = float(np.max(np.abs(traj.coherence - traj.coherence.swapaxes(1, 2))))
    check("coherence_symmetry", sym <= 1e-12, f"max asymmetry {sym:.3e}")
    mod = np.abs(traj.dephasing)
    growth = float(np.max(np.diff(mod, axis=0)))
    check("dephasing_monotone", growth <= 1e-12, f"max |mu| increase {growth:.3e}")

    trace_dev = 0.0
    herm_dev = 0.0
    for node in range(0, grid.n_nodes, max(1, grid.n_nodes // 512)):
        out = assemble_and_apply(traj, rho0, node)
        trace_dev = max(trace_dev, abs(np.trace(out) - 1.0))
        herm_dev = max(herm_dev, float(np.max(np.abs(out - out.conj().T))))
    check("trace_preservation", trace_dev <= 1e-10, f"max deviation {trace_dev:.3e}")
    check("hermiticity", herm_dev <= 1e-12, f"max deviation {herm_dev:.3e}")

    try:
        witness = cp_witness(traj)
        check(
            "choi_consistency",
            True,
            f"witness minimum {witness.global_min:.6g}, "
            f"{witness.negative_population_nodes} nodes with negative populations",
        )
    except RuntimeError as exc:
        check("choi_consistency", False, str(exc))

    node = grid.n_nodes // 2
    a = traj.phases[node] * (traj.coherence[node] * traj.dephasing[node])
    b = (traj.phases[node] * traj.coherence[node]) * traj.dephasing[node]
    c = traj.coherence[node] * (traj.dephasing[node] * traj.phases[node])
    order_dev = float(max(np.max(np.abs(a - b)), np.max(np.abs(a - c))))
    check("commuting_factors", order_dev <= 1e-15, f"max reorder deviation {order_dev:.3e}")

    return 0 if failures == 0 else 1


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="semidavies",
        description="Hybrid memory-kernel dissipation with Markovian decoherence: "
        "dynamical maps, positivity witnesses, minimal dephasing repair.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="dump the full map trajectory to CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--backend", default="auto", choices=["auto", "expsum", "quadrature"])
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("restore-cp", help="minimal uniform dephasing with certificate")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--gamma-z-max", type=float, default=16.0)
    p.set_defaults(func=_cmd_restore_cp)

    p = sub.add_parser("fig1", help="two-level witness determinant reference curves")
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=5000)
    p.add_argument("--t-max", type=float, default=5.0)
    p.set_defaults(func=_cmd_fig1)

    p = sub.add_parser("sample", help="Monte Carlo vs analytic comparison CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--trajectories", type=int, default=10_000)
    p.add_argument("--initial-level", type=int, default=0)
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("validate", help="run the invariant battery, exit 0/1")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_validate)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (RuntimeError, ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
