"""Minimal dephasing that turns the hybrid map completely positive.

A uniform extra dephasing multiplies every coherence product by e^{-gz t};
the witness matrix C(t) then has off-diagonals |lambda mu| e^{-gz t} and
fixed diagonal T_kk(t). Raising gz shrinks the off-diagonals, so for
two-level systems feasibility (C(t) >= 0 on the whole grid) is monotone in
gz and the minimal restoring rate is found by bisection; for more levels
monotonicity is not a theorem and is verified a posteriori by sweeping.

The second half of the module computes the opposite extreme: the
time-dependent pairwise schedule D_kl(t) that keeps each coherence as large
as the dissipation allows, saturating |lambda_kl mu_kl| = sqrt(T_kk T_ll),
i.e. driving every 2x2 principal minor of C to zero. Negative schedule
values would amplify coherence and are clamped to 0; clamp events are
reported so the saturated and realizable schedules can be told apart.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hybrid_map import HybridGeneratorSpec, MapTrajectory, build_trajectory
from .numkit import TimeGrid

FEASIBILITY_FLOOR = -1e-10


@dataclass(frozen=True)
class RestorationResult:
    """Outcome of the minimal-dephasing search with its two-sided certificate.

    The margins are minimal witness eigenvalues from a full re-simulation on
    a refined grid: at the returned rate, just above it (must be CP), and
    just below it (must not be CP unless the rate is 0).
    """

    gamma_z_star: float
    margin_at_star: float
    margin_above: float
    margin_below: float | None
    iterations: int
    bracket: tuple[float, float]
    history: tuple[tuple[float, float], ...]  # (gamma_z, min witness eigenvalue)


def _witness_parts(traj: MapTrajectory) -> tuple[np.ndarray, np.ndarray]:
    d = traj.dimension
    idx = np.arange(d)
    offdiag = np.abs(traj.coherence_product())
    offdiag[:, idx, idx] = 0.0
    diag = np.zeros_like(offdiag)
    diag[:, idx, idx] = traj.populations[:, idx, idx]
    return diag, offdiag


def _min_eig_at(diag: np.ndarray, offdiag: np.ndarray, t: np.ndarray, gz: float) -> float:
    c = diag + offdiag * np.exp(-gz * t)[:, None, None]
    return float(np.linalg.eigvalsh(c)[:, 0].min())


def minimal_uniform_dephasing(
    spec: HybridGeneratorSpec,
    grid: TimeGrid,
    tol: float = 1e-3,
    gamma_z_max: float = 16.0,
) -> RestorationResult:
    """Smallest uniform dephasing rate gz with C(t) >= -1e-10 on the grid.

    Bisects gz in [0, gamma_z_max] against the witness minimum, then
    re-simulates on a 2x refined grid to certify: completely positive at
    gz* + tol, not completely positive at max(0, gz* - 10 tol). Raises if
    gamma_z_max itself is infeasible (enlarge the bracket) or if the
    populations have negative off-diagonal entries, which no amount of
    dephasing can repair.
    """
    if tol <= 0 or gamma_z_max <= 0:
        raise ValueError("tolerance and bracket size must be positive")
    traj = build_trajectory(spec, grid)
    d = traj.dimension
    idx = np.arange(d)
    pop_off = np.array(traj.populations)
    pop_off[:, idx, idx] = np.inf
    if float(pop_off.min()) < FEASIBILITY_FLOOR:
        raise ValueError(
            f"off-diagonal populations reach {pop_off.min():.3e}; "
            "dephasing only damps coherences and cannot restore positivity"
        )
    pop_diag = traj.populations[:, idx, idx]
    if float(pop_diag.min()) < FEASIBILITY_FLOOR:
        raise ValueError(
            f"diagonal populations reach {pop_diag.min():.3e}; "
            "dephasing leaves the diagonal untouched and cannot restore positivity"
        )
    diag, offdiag = _witness_parts(traj)
    t = grid.t
    history: list[tuple[float, float]] = []

    def feasible(gz: float) -> bool:
        low = _min_eig_at(diag, offdiag, t, gz)
        history.append((gz, low))
        return low >= FEASIBILITY_FLOOR

    if feasible(0.0):
        star, lo, hi, iterations = 0.0, 0.0, 0.0, 0
    else:
        if not feasible(gamma_z_max):
            low = history[-1][1]
            raise RuntimeError(
                f"still not completely positive at gamma_z = {gamma_z_max:g} "
                f"(witness minimum {low:.3e}); increase gamma_z_max"
            )
        lo, hi = 0.0, gamma_z_max
        iterations = 0
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if feasible(mid):
                hi = mid
            else:
                lo = mid
            iterations += 1
        star = hi

    if d > 2:
        _sweep_monotone(diag, offdiag, t, star, tol)

    # certificate from a full re-simulation on a refined grid
    fine = build_trajectory(spec, grid.refined(2))
    fdiag, foff = _witness_parts(fine)
    ft = fine.grid.t
    margin_at = _min_eig_at(fdiag, foff, ft, star)
    margin_above = _min_eig_at(fdiag, foff, ft, star + tol)
    if margin_above < FEASIBILITY_FLOOR:
        raise RuntimeError(
            f"certificate failed: witness minimum {margin_above:.3e} at "
            f"gamma_z = {star + tol:.6g} on the refined grid"
        )
    margin_below = None
    if star > 0.0:
        below = max(0.0, star - 10.0 * tol)
        margin_below = _min_eig_at(fdiag, foff, ft, below)
        if margin_below >= FEASIBILITY_FLOOR:
            raise RuntimeError(
                f"certificate failed: map already positive at gamma_z = {below:.6g}"
            )
    return RestorationResult(
        gamma_z_star=star,
        margin_at_star=margin_at,
        margin_above=margin_above,
        margin_below=margin_below,
        iterations=iterations,
        bracket=(lo, hi),
        history=tuple(history),
    )


def _sweep_monotone(diag, offdiag, t, star: float, tol: float) -> None:
    """Bisection assumes feasibility is monotone in gz; check around star."""
    for k in range(1, 17):
        above = star + k * tol
        if _min_eig_at(diag, offdiag, t, above) < FEASIBILITY_FLOOR:
            raise RuntimeError(
                f"feasibility is not monotone: infeasible at gamma_z = {above:.6g} "
                f"above the returned rate {star:.6g}"
            )
        below = star - (k + 1) * tol
        if below <= 0:
            continue
        if _min_eig_at(diag, offdiag, t, below) >= FEASIBILITY_FLOOR:
            raise RuntimeError(
                f"feasibility is not monotone: feasible at gamma_z = {below:.6g} "
                f"below the returned rate {star:.6g}"
            )


@dataclass(frozen=True, eq=False)
class DephasingSchedule:
    """Pairwise decoherence rates maximizing retained coherence.

    rates is the realizable (clamped at 0) schedule; rates_unclamped is the
    raw log-derivative, negative wherever exact saturation would require
    coherence gain. mu / mu_unclamped are the corresponding decoherence
    factors; mu_unclamped saturates every 2x2 principal minor of the witness
    exactly.
    """

    grid: TimeGrid
    rates: np.ndarray  # (n, d, d) >= 0
    rates_unclamped: np.ndarray  # (n, d, d)
    mu: np.ndarray  # (n, d, d)
    mu_unclamped: np.ndarray  # (n, d, d)
    clamp_mask: np.ndarray  # (n, d, d) bool, True where clamping acted

    @property
    def clamp_events(self) -> int:
        return int(np.count_nonzero(self.clamp_mask))


def max_coherence_schedule(
    T: np.ndarray, lam: np.ndarray, grid: TimeGrid
) -> DephasingSchedule:
    """Schedule D_kl(t) with |lambda_kl mu_kl| = sqrt(T_kk T_ll) when unclamped.

    The saturating factor is mu_kl = exp(-r_kl) with
    r_kl(t) = ln(|lambda_kl| / sqrt(T_kk T_ll)), so the rate schedule is the
    time derivative of r (central differences on the grid). Negative rates
    are clamped to zero; the realizable mu then accumulates only the positive
    variation of r. Populations or coherence factors reaching zero leave the
    logarithm undefined and raise.
    """
    T = np.asarray(T, dtype=float)
    lam = np.asarray(lam)
    n, d, _ = T.shape
    idx = np.arange(d)
    pops = T[:, idx, idx]
    if float(pops.min()) <= 0.0:
        node = int(np.argwhere(pops <= 0.0)[0][0])
        raise ValueError(
            f"population reaches {pops.min():.3e} at t = {grid.t[node]:.6g}; "
            "the log-derivative schedule is singular there"
        )
    mod = np.abs(lam)
    off_mod = mod + np.eye(d)  # keep the unused diagonal away from log(0)
    if float(off_mod.min()) <= 0.0:
        raise ValueError("a coherence factor reaches 0; schedule undefined")

    log_pop = np.log(pops)
    r = np.log(off_mod) - 0.5 * (log_pop[:, :, None] + log_pop[:, None, :])
    r[:, idx, idx] = 0.0

    rates_unclamped = np.gradient(r, grid.h, axis=0, edge_order=2)
    clamp_mask = rates_unclamped < -1e-12
    clamp_mask[:, idx, idx] = False
    rates = np.maximum(rates_unclamped, 0.0)

    increments = np.maximum(np.diff(r, axis=0), 0.0)
    positive_variation = np.concatenate(
        [np.zeros((1, d, d)), np.cumsum(increments, axis=0)], axis=0
    )
    mu = np.exp(-positive_variation)
    mu_unclamped = np.exp(-r)
    mu[:, idx, idx] = 1.0
    mu_unclamped[:, idx, idx] = 1.0
    return DephasingSchedule(
        grid=grid,
        rates=rates,
        rates_unclamped=rates_unclamped,
        mu=mu,
        mu_unclamped=mu_unclamped,
        clamp_mask=clamp_mask,
    )
