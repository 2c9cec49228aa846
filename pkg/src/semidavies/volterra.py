"""Solvers for convolution Volterra integro-differential systems.

The common engine behind the population and coherence equations:

    x'(t) = L0 x(t) + K0 x(t) + int_0^t K(t - tau) x(tau) dtau,   x(0) given,

where the kernel splits into an instantaneous part K0 delta(t) (folded into
the local term, per the delta convention in numkit) and a regular part K(t),
given either as a sum of exponentials sum_r A_r exp(-gamma_r t) or as samples
on the solve grid.

Two independent solvers are provided on purpose. `solve_quadrature` treats
the memory integral with the trapezoid rule and advances with an explicit
Euler predictor plus a single trapezoid corrector (global order 2, any
kernel). `solve_expsum_embedding` is an exact reformulation for exponential
kernels: each term gets an auxiliary history variable

    y_r(t) = int_0^t e^{-gamma_r (t - tau)} x(tau) dtau,
    y_r' = -gamma_r y_r + x,

turning the problem into a local linear system advanced with the classical
4-stage one-step rule (global order 4). Every production run elsewhere in
the package can therefore be cross-checked between two schemes that share no
discretization machinery.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numkit import TimeGrid

GROWTH_LIMIT = 1e12


@dataclass(frozen=True, eq=False)
class VolterraProblem:
    """One linear memory problem: local part, kernel split, initial value.

    x0 may be a vector (m,) or a matrix (m, k); matrix initial values solve
    all k columns in one pass (used for full propagators with x0 = identity).
    """

    x0: np.ndarray
    l0: np.ndarray | None = None
    delta: np.ndarray | None = None
    kernel_terms: tuple[tuple[np.ndarray, float], ...] | None = None
    kernel_samples: np.ndarray | None = None

    def __post_init__(self) -> None:
        x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        if x0.ndim > 2:
            raise ValueError(f"x0 must be a vector or matrix, got shape {x0.shape}")
        object.__setattr__(self, "x0", x0)
        m = x0.shape[0]
        for name in ("l0", "delta"):
            mat = getattr(self, name)
            if mat is not None:
                mat = np.asarray(mat, dtype=float)
                if mat.shape != (m, m):
                    raise ValueError(f"{name} must be {m}x{m}, got {mat.shape}")
                object.__setattr__(self, name, mat)
        if self.kernel_terms is not None:
            terms = []
            for coef, rate in self.kernel_terms:
                coef = np.asarray(coef, dtype=float)
                if coef.shape != (m, m):
                    raise ValueError(f"kernel term must be {m}x{m}, got {coef.shape}")
                if np.any(coef != 0.0):
                    if not rate > 0:
                        raise ValueError(f"kernel term rate must be positive, got {rate}")
                    terms.append((coef, float(rate)))
            object.__setattr__(self, "kernel_terms", tuple(terms))

    @property
    def dimension(self) -> int:
        return self.x0.shape[0]

    def local_part(self) -> np.ndarray:
        """L0 + K0, the delta part folded into the local term."""
        m = self.dimension
        out = np.zeros((m, m))
        if self.l0 is not None:
            out += self.l0
        if self.delta is not None:
            out += self.delta
        return out

    def kernel_on(self, grid: TimeGrid) -> np.ndarray:
        """Regular kernel samples K(t_n), shape (n_nodes, m, m)."""
        m = self.dimension
        if self.kernel_samples is not None:
            ks = np.asarray(self.kernel_samples, dtype=float)
            if ks.shape != (grid.n_nodes, m, m):
                raise ValueError(
                    f"kernel samples shape {ks.shape} does not fit grid/dimension"
                )
            return ks
        out = np.zeros((grid.n_nodes, m, m))
        for coef, rate in self.kernel_terms or ():
            out += coef * np.exp(-rate * grid.t)[:, None, None]
        return out


def _as_columns(x0: np.ndarray) -> tuple[np.ndarray, bool]:
    if x0.ndim == 1:
        return x0[:, None], True
    return x0, False


def solve_quadrature(problem: VolterraProblem, grid: TimeGrid) -> np.ndarray:
    """Trapezoid-in-the-integral predictor-corrector solution, order h^2.

    Per step the memory integral is evaluated with the trapezoid rule over
    the computed history; the new node is predicted with explicit Euler and
    corrected once with the trapezoid rule in the local derivative. Aborts
    when the solution norm grows beyond 1e12 times the initial norm.
    """
    a = problem.local_part()
    kern = problem.kernel_on(grid)
    x0, squeeze = _as_columns(problem.x0)
    n = grid.n_nodes
    h = grid.h
    xs = np.empty((n, *x0.shape))
    xs[0] = x0
    scale = max(1.0, float(np.max(np.abs(x0))))
    k0 = kern[0]
    for step in range(n - 1):
        # S_n = h ( sum_{m<=n} K[n-m] x[m] - K[n] x[0] / 2 - K[0] x[n] / 2 )
        hist = np.einsum("nij,njk->ik", kern[step::-1], xs[: step + 1])
        s_now = h * (hist - 0.5 * kern[step] @ xs[0] - 0.5 * k0 @ xs[step])
        f_now = a @ xs[step] + s_now
        pred = xs[step] + h * f_now
        # history part of S_{n+1} plus the trapezoid share of the new node
        hist_next = np.einsum("nij,njk->ik", kern[step + 1 : 0 : -1], xs[: step + 1])
        s_next = h * (hist_next - 0.5 * kern[step + 1] @ xs[0]) + 0.5 * h * k0 @ pred
        f_next = a @ pred + s_next
        xs[step + 1] = xs[step] + 0.5 * h * (f_now + f_next)
        if not np.all(np.isfinite(xs[step + 1])) or (
            float(np.max(np.abs(xs[step + 1]))) > GROWTH_LIMIT * scale
        ):
            raise RuntimeError(
                f"quadrature solver unstable at t = {grid.t[step + 1]:.6g}: "
                f"norm exceeded {GROWTH_LIMIT:.0e} x initial"
            )
    return xs[:, :, 0] if squeeze else xs


def solve_expsum_embedding(problem: VolterraProblem, grid: TimeGrid) -> np.ndarray:
    """Exact linear embedding for exponential-sum kernels, order h^4.

    Builds the enlarged generator

        M = [[L0 + K0, A_1, ..., A_R],
             [I, -gamma_1 I,        ],
             [I,          -gamma_R I]]

    and advances (x, y_1, ..., y_R) with the one-step matrix of the classical
    4-stage rule, I + hM (I + (h/2) M (I + (h/3) M (I + (h/4) M))).
    """
    if problem.kernel_samples is not None:
        raise ValueError("embedding needs an exponential-sum kernel, got samples")
    terms = problem.kernel_terms or ()
    m = problem.dimension
    r = len(terms)
    big = m * (1 + r)
    gen = np.zeros((big, big))
    gen[:m, :m] = problem.local_part()
    eye = np.eye(m)
    for idx, (coef, rate) in enumerate(terms):
        lo = m * (1 + idx)
        gen[:m, lo : lo + m] = coef
        gen[lo : lo + m, :m] = eye
        gen[lo : lo + m, lo : lo + m] = -rate * eye

    h = grid.h
    phi = np.eye(big) + h * gen @ (
        np.eye(big)
        + (h / 2.0) * gen @ (np.eye(big) + (h / 3.0) * gen @ (np.eye(big) + (h / 4.0) * gen))
    )
    x0, squeeze = _as_columns(problem.x0)
    state = np.zeros((big, x0.shape[1]))
    state[:m] = x0
    xs = np.empty((grid.n_nodes, *x0.shape))
    xs[0] = x0
    for step in range(1, grid.n_nodes):
        state = phi @ state
        xs[step] = state[:m]
    return xs[:, :, 0] if squeeze else xs
