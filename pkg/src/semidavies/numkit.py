"""Dense numerical substrate shared by all dynamics modules.

Uniform time grids, trapezoidal convolution with optional instantaneous
(delta) parts, matrix exponentials of classical generators, and Hermitian
minimal eigenvalues. Everything is small and dense; accuracy is managed by
grid refinement, never by switching schemes, so the O(h^2) trapezoid error
model stays uniform across the package.

Convolution convention: (f * g)(t) = int_0^t f(t - tau) g(tau) dtau, and a
delta part in the left factor contributes its full mass at the endpoint,
int_0^t f0 delta(t - tau) g(tau) dtau := f0 g(t). That choice is forced by
causal one-sided kernels: rate kernels derived from jump kernels carry
instantaneous parts, and the Markovian limit is a pure delta kernel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft
import scipy.linalg

HERMITIAN_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Uniform grid on [0, t_max] with `steps` intervals (steps + 1 nodes)."""

    t_max: float
    steps: int
    t: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if not (np.isfinite(self.t_max) and self.t_max > 0):
            raise ValueError(f"t_max must be a positive finite time, got {self.t_max}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError(f"steps must be a positive integer, got {self.steps}")
        object.__setattr__(self, "steps", int(self.steps))
        nodes = np.linspace(0.0, float(self.t_max), self.steps + 1)
        nodes.flags.writeable = False
        object.__setattr__(self, "t", nodes)

    @property
    def h(self) -> float:
        return self.t_max / self.steps

    @property
    def n_nodes(self) -> int:
        return self.steps + 1

    def refined(self, factor: int = 2) -> "TimeGrid":
        """Same interval with `factor` times more steps (shares all old nodes)."""
        return TimeGrid(self.t_max, self.steps * factor)


def _assert_same_grid(n_nodes: int, *arrays: np.ndarray) -> None:
    for a in arrays:
        if a.shape[0] != n_nodes:
            raise ValueError(
                f"gridded function has {a.shape[0]} samples, grid has {n_nodes} nodes"
            )


def hermitian_min_eig(m: np.ndarray, tol: float = HERMITIAN_TOL):
    """Smallest eigenvalue of a Hermitian matrix (or stack of matrices).

    Rejects inputs whose anti-Hermitian part exceeds `tol` in max norm; the
    symmetrized (M + M^dagger)/2 is then diagonalized, so the result is exact
    for exactly Hermitian input and stable against roundoff-level asymmetry.
    """
    m = np.asarray(m)
    if m.ndim < 2 or m.shape[-1] != m.shape[-2]:
        raise ValueError(f"expected square matrix (or stack), got shape {m.shape}")
    adj = np.conj(np.swapaxes(m, -1, -2))
    dev = float(np.max(np.abs(m - adj))) if m.size else 0.0
    if dev > tol:
        raise ValueError(
            f"matrix is not Hermitian: max |M - M^dagger| = {dev:.3e} exceeds {tol:.0e}"
        )
    w = np.linalg.eigvalsh((m + adj) / 2.0)
    out = w[..., 0]
    return float(out) if np.ndim(out) == 0 else out


def semigroup_exp(gen: np.ndarray, grid: TimeGrid, tol: float = 1e-12) -> np.ndarray:
    """exp(t_n L) for a classical generator L, stacked over grid nodes.

    L must have Kolmogorov structure: nonnegative off-diagonal entries and
    columns summing to zero (within `tol`), so every exp(t L) is
    column-stochastic. Each node is exponentiated independently; there is no
    step-to-step error accumulation.
    """
    gen = np.asarray(gen, dtype=float)
    if gen.ndim != 2 or gen.shape[0] != gen.shape[1]:
        raise ValueError(f"generator must be square, got shape {gen.shape}")
    colsum = float(np.max(np.abs(gen.sum(axis=0)))) if gen.size else 0.0
    if colsum > tol:
        raise ValueError(
            f"not a classical generator: column sums deviate from 0 by {colsum:.3e}"
        )
    off = gen - np.diag(np.diag(gen))
    if off.size and float(off.min()) < 0.0:
        raise ValueError("not a classical generator: negative off-diagonal rate")
    out = np.stack([scipy.linalg.expm(t * gen) for t in grid.t])
    dev = float(np.max(np.abs(out.sum(axis=1) - 1.0)))
    if dev > 1e-10:
        raise RuntimeError(
            f"matrix exponential lost column stochasticity: deviation {dev:.3e}"
        )
    return out


def grid_convolve(
    f: np.ndarray,
    g: np.ndarray,
    grid: TimeGrid,
    f_delta: np.ndarray | float | None = None,
) -> np.ndarray:
    """Trapezoidal convolution (f * g)(t_n) on a uniform grid.

    Scalar samples of shape (n,) are multiplied; stacked matrices of shape
    (n, p, q) and (n, q, r) are combined with the matrix product. `f_delta`
    adds an instantaneous part f0 delta(t) to the left factor, contributing
    f0 g(t) (matrix product in the stacked case). Global error O(h^2) for
    smooth integrands. The node-0 value is exactly zero plus the delta part.
    """
    f = np.asarray(f)
    g = np.asarray(g)
    n = grid.n_nodes
    _assert_same_grid(n, f, g)
    if f.ndim == 1 and g.ndim == 1:
        matrix = False
    elif f.ndim == 3 and g.ndim == 3 and f.shape[2] == g.shape[1]:
        matrix = True
    else:
        raise ValueError(f"incompatible sample shapes {f.shape} and {g.shape}")

    real = not (np.iscomplexobj(f) or np.iscomplexobj(g))
    nfft = scipy.fft.next_fast_len(2 * n - 1, real=real)
    if real:
        fw = scipy.fft.rfft(f, nfft, axis=0)
        gw = scipy.fft.rfft(g, nfft, axis=0)
        full = scipy.fft.irfft(fw @ gw if matrix else fw * gw, nfft, axis=0)[:n]
    else:
        fw = scipy.fft.fft(f, nfft, axis=0)
        gw = scipy.fft.fft(g, nfft, axis=0)
        full = scipy.fft.ifft(fw @ gw if matrix else fw * gw, nfft, axis=0)[:n]

    # trapezoid end-point correction of the rectangle sum
    if matrix:
        ends = 0.5 * (f @ g[0] + f[0] @ g)
    else:
        ends = 0.5 * (f * g[0] + f[0] * g)
    out = grid.h * (full - ends)
    out[0] = 0.0
    if f_delta is not None:
        f0 = np.asarray(f_delta)
        out = out + (f0 @ g if matrix else f0 * g)
    return out
