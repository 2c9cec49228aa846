"""Monte Carlo cross-checks: jump trajectories and dephasing-noise averages.

The jump sampler draws semi-Markov trajectories exactly: in state j it first
draws one uniform variate against the total column mass (a defective mass
below 1 is the probability of never jumping again), then inverts the
sojourn CDF 1 - g_j by bracketed bisection, then picks the destination i
with probability q_ij(tau*) / f_j(tau*) at the drawn sojourn tau*. Occupation
frequencies estimate the columns of T(t).

The noise sampler integrates white-noise level fluctuations: independent
Gaussian increments of variance gamma_k h accumulate into random phases
exp(-i (X_k - X_l)); the empirical mean over realizations estimates the
decoherence factor mu_kl and its fitted decay rate arbitrates the
(gamma_k + gamma_l)/2 exponent.

Randomness is counter-based (Philox) and keyed by (seed, trajectory block),
with every trajectory owning a fixed row of the drawn blocks, so results are
bitwise reproducible for a fixed (seed, N) and independent of scheduling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.random import Generator, Philox

from .numkit import TimeGrid
from .semi_markov import JumpKernel, ensure_valid, survival_and_waiting

_BLOCK = 4096
_BISECT_STEPS = 48
_MAX_ROUNDS = 100_000


class _RowKeyedUniforms:
    """Uniform variates in (N, k) blocks; row i always belongs to trajectory i."""

    def __init__(self, seed: int, n: int):
        self._gens = [
            Generator(Philox(key=[np.uint64(seed % 2**64), np.uint64(c)]))
            for c in range((n + _BLOCK - 1) // _BLOCK)
        ]
        self._sizes = [min(_BLOCK, n - c * _BLOCK) for c in range(len(self._gens))]

    def draw_pair(self) -> np.ndarray:
        cols = [g.random((s, 2)) for g, s in zip(self._gens, self._sizes)]
        return np.concatenate(cols, axis=0) if len(cols) > 1 else cols[0]


@dataclass(frozen=True, eq=False)
class TrajectoryBatch:
    """Jump records (CSR layout) and per-node occupation counts."""

    seed: int
    n_trajectories: int
    initial_state: int
    grid: TimeGrid
    jump_times: np.ndarray  # (events,) absolute times, grouped by trajectory
    jump_states: np.ndarray  # (events,) destination states
    offsets: np.ndarray  # (N + 1,) CSR pointers into the event arrays
    occupancy: np.ndarray  # (n_nodes, d) integer counts

    def trajectory(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.offsets[i], self.offsets[i + 1]
        return self.jump_times[lo:hi], self.jump_states[lo:hi]

    def empirical_T(self) -> np.ndarray:
        """Occupation frequencies, the sampled column T_{k j0}(t_n)."""
        return self.occupancy / self.n_trajectories

    def standard_error(self) -> np.ndarray:
        p = self.empirical_T()
        return np.sqrt(p * (1.0 - p) / self.n_trajectories)

    def empirical_survival(self) -> np.ndarray:
        """Fraction of trajectories still waiting for their first jump."""
        starts = self.offsets[:-1]
        first = np.sort(self.jump_times[starts[starts < self.offsets[1:]]])
        jumped = np.searchsorted(first, self.grid.t, side="right")
        return 1.0 - jumped / self.n_trajectories


def _column_cdf_exponential(q: JumpKernel):
    ratio = np.where(q.kappa > 0, q.kappa / np.where(q.gamma > 0, q.gamma, 1.0), 0.0)

    def cdf(states: np.ndarray, tau: np.ndarray) -> np.ndarray:
        r = ratio[:, states]
        g = q.gamma[:, states]
        return (r * (1.0 - np.exp(-g * tau[None, :]))).sum(axis=0)

    return cdf, ratio.sum(axis=0)


def _column_cdf_tabulated(q: JumpKernel):
    _, g = survival_and_waiting(q, q.grid)
    cdf_table = 1.0 - g  # (nodes, d), monotone per column
    tgrid = q.grid.t

    def cdf(states: np.ndarray, tau: np.ndarray) -> np.ndarray:
        out = np.empty(tau.shape)
        for j in np.unique(states):
            m = states == j
            out[m] = np.interp(tau[m], tgrid, cdf_table[:, j])
        return out

    return cdf, cdf_table[-1].copy()


def _destination_weights(q: JumpKernel, states: np.ndarray, tau: np.ndarray) -> np.ndarray:
    if q.family == "exponential":
        return q.kappa[:, states] * np.exp(-q.gamma[:, states] * tau[None, :])
    d = q.dimension
    out = np.empty((d, tau.size))
    for j in np.unique(states):
        m = states == j
        for i in range(d):
            out[i, m] = np.interp(tau[m], q.grid.t, q.samples[:, i, j])
    return out


def sample_semi_markov(
    q: JumpKernel, j0: int, grid: TimeGrid, n: int, seed: int
) -> TrajectoryBatch:
    """Draw n trajectories started in state j0 and histogram their occupation."""
    ensure_valid(q)
    d = q.dimension
    if not 0 <= j0 < d:
        raise ValueError(f"initial state {j0} outside [0, {d})")
    if n < 1:
        raise ValueError("need at least one trajectory")
    if q.family == "exponential":
        cdf, masses = _column_cdf_exponential(q)
    else:
        cdf, masses = _column_cdf_tabulated(q)
        if grid.t_max > q.grid.t_max * (1 + 1e-12):
            raise ValueError("sampling horizon exceeds the tabulated kernel range")

    uniforms = _RowKeyedUniforms(seed, n)
    state = np.full(n, j0, dtype=np.int64)
    clock = np.zeros(n)
    alive = np.arange(n)
    ev_traj: list[np.ndarray] = []
    ev_time: list[np.ndarray] = []
    ev_old: list[np.ndarray] = []
    ev_new: list[np.ndarray] = []

    rounds = 0
    tol = 1e-10 * grid.t_max
    while alive.size:
        rounds += 1
        if rounds > _MAX_ROUNDS:
            raise RuntimeError(f"trajectories still jumping after {_MAX_ROUNDS} rounds")
        u = uniforms.draw_pair()
        u_wait = u[alive, 0]
        u_dest = u[alive, 1]
        s = state[alive]
        remaining = grid.t_max - clock[alive]

        jumps = u_wait < masses[s]
        cap = cdf(s[jumps], remaining[jumps])
        inside = np.zeros_like(jumps)
        inside[jumps] = u_wait[jumps] <= cap  # jump lands within the window

        who = alive[inside]
        if who.size:
            s_in = state[who]
            target = u_wait[inside]
            lo = np.zeros(who.size)
            hi = remaining[inside]
            for _ in range(_BISECT_STEPS):
                mid = 0.5 * (lo + hi)
                below = cdf(s_in, mid) < target
                lo = np.where(below, mid, lo)
                hi = np.where(below, hi, mid)
                if float(np.max(hi - lo)) < tol:
                    break
            tau = 0.5 * (lo + hi)

            weights = _destination_weights(q, s_in, tau)
            weights[s_in, np.arange(who.size)] = 0.0
            total = weights.sum(axis=0)
            if float(total.min()) <= 0.0:
                raise RuntimeError("jump density vanishes at a drawn sojourn time")
            cum = np.cumsum(weights, axis=0)
            dest = (cum >= (u_dest[inside] * total)[None, :]).argmax(axis=0)

            when = clock[who] + tau
            ev_traj.append(who.copy())
            ev_time.append(when)
            ev_old.append(s_in.copy())
            ev_new.append(dest.astype(np.int64))
            clock[who] = when
            state[who] = dest
        alive = alive[inside]

    if ev_traj:
        traj_idx = np.concatenate(ev_traj)
        times = np.concatenate(ev_time)
        olds = np.concatenate(ev_old)
        news = np.concatenate(ev_new)
        order = np.lexsort((times, traj_idx))
        traj_idx, times, olds, news = (
            traj_idx[order],
            times[order],
            olds[order],
            news[order],
        )
    else:
        traj_idx = np.zeros(0, dtype=np.int64)
        times = np.zeros(0)
        olds = np.zeros(0, dtype=np.int64)
        news = np.zeros(0, dtype=np.int64)

    occupancy = np.zeros((grid.n_nodes, d), dtype=np.int64)
    occupancy[:, j0] = n
    if times.size:
        node = np.searchsorted(grid.t, times, side="left")
        keep = node < grid.n_nodes
        delta = np.zeros((grid.n_nodes, d), dtype=np.int64)
        np.add.at(delta, (node[keep], news[keep]), 1)
        np.add.at(delta, (node[keep], olds[keep]), -1)
        occupancy += np.cumsum(delta, axis=0)

    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(traj_idx, minlength=n), out=offsets[1:])
    return TrajectoryBatch(
        seed=seed,
        n_trajectories=n,
        initial_state=j0,
        grid=grid,
        jump_times=times,
        jump_states=news,
        offsets=offsets,
        occupancy=occupancy,
    )


@dataclass(frozen=True, eq=False)
class NoiseAverage:
    """Averaged random phases and the fitted decay of their modulus."""

    grid: TimeGrid
    pair: tuple[int, int]
    n_realizations: int
    seed: int
    mu_hat: np.ndarray  # (n_nodes,) complex empirical mean
    stderr_real: np.ndarray
    stderr_imag: np.ndarray
    fitted_rate: float


def average_dephasing_noise(
    rates: np.ndarray, pair: tuple[int, int], grid: TimeGrid, n: int, seed: int
) -> NoiseAverage:
    """Average exp(-i (X_k - X_l)) over n white-noise realizations.

    X_k accumulates independent Gaussian increments of variance gamma_k h
    per step. The Gaussian average gives |mu_kl| = exp(-(gamma_k+gamma_l)t/2)
    and the fitted rate of ln |mu_hat| estimates that exponent.
    """
    rates = np.asarray(rates, dtype=float)
    k, l = pair
    if rates.ndim != 1 or not (0 <= k < rates.size and 0 <= l < rates.size):
        raise ValueError("pair must index the vector of noise strengths")
    if rates.size and rates.min() < 0:
        raise ValueError("noise strengths must be nonnegative")
    if n < 2:
        raise ValueError("need at least two realizations")
    h = grid.h
    steps = grid.steps
    sig_k = np.sqrt(rates[k] * h)
    sig_l = np.sqrt(rates[l] * h)

    total = np.zeros(grid.n_nodes, dtype=complex)
    total_re2 = np.zeros(grid.n_nodes)
    total_im2 = np.zeros(grid.n_nodes)
    for chunk, start in enumerate(range(0, n, _BLOCK)):
        m = min(_BLOCK, n - start)
        gen = Generator(Philox(key=[np.uint64(seed % 2**64), np.uint64(chunk)]))
        dk = gen.normal(0.0, sig_k, (m, steps))
        dl = gen.normal(0.0, sig_l, (m, steps))
        walk = np.cumsum(dk - dl, axis=1)
        phase = np.empty((m, grid.n_nodes), dtype=complex)
        phase[:, 0] = 1.0
        np.exp(-1j * walk, out=phase[:, 1:])
        total += phase.sum(axis=0)
        total_re2 += (phase.real**2).sum(axis=0)
        total_im2 += (phase.imag**2).sum(axis=0)

    mu_hat = total / n
    var_re = np.maximum(total_re2 / n - mu_hat.real**2, 0.0)
    var_im = np.maximum(total_im2 / n - mu_hat.imag**2, 0.0)
    stderr_real = np.sqrt(var_re / n)
    stderr_imag = np.sqrt(var_im / n)

    mod = np.abs(mu_hat)
    usable = mod > 0
    slope = np.polyfit(grid.t[usable], np.log(mod[usable]), 1)[0]
    return NoiseAverage(
        grid=grid,
        pair=(k, l),
        n_realizations=n,
        seed=seed,
        mu_hat=mu_hat,
        stderr_real=stderr_real,
        stderr_imag=stderr_imag,
        fitted_rate=float(-slope),
    )
