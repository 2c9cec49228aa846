"""Semi-Markov jump kernels and the stochastic matrix they generate.

A kernel column j holds the densities q_ij(t) >= 0 for a jump from state j
to state i after a sojourn of length t (column convention: probability flows
j -> i; probability vectors are columns, stochastic matrices are
column-stochastic). Derived column quantities:

    f_j(t) = sum_i q_ij(t)            density of leaving j at sojourn age t
    g_j(t) = 1 - int_0^t f_j(tau)dtau probability of still sitting in j
    n_ij(t) = delta_ij g_j(t)         no-jump propagator

The occupation matrix is the renewal series

    T(t) = n(t) + (n * q)(t) + (n * q * q)(t) + ...

column-stochastic whenever every column mass int_0^inf f_j is <= 1 (a
defective mass < 1 means the process can park in j forever).

The same dynamics can be written with a rate kernel W carrying an
instantaneous part, defined in the Laplace domain by W~_ij = q~_ij / g~_j.
For an exponential column q_ij = kappa_ij e^{-gamma t} with total rate
kappa_j = sum_i kappa_ij the division inverts in closed form:

    W_ij(t) = kappa_ij delta(t) - kappa_ij (gamma - kappa_j) e^{-(gamma - kappa_j) t}

which is the dual route used to cross-check the series against the Volterra
solvers. For tabulated kernels the division is done by direct time-domain
deconvolution on the grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from .numkit import TimeGrid, grid_convolve

MASS_SLACK = 1e-12


def _grids_match(a: TimeGrid, b: TimeGrid) -> bool:
    return a.steps == b.steps and abs(a.t_max - b.t_max) <= 1e-12 * max(1.0, a.t_max)


@dataclass(frozen=True)
class KernelViolation:
    i: int | None
    j: int | None
    t: float | None
    message: str

    def __str__(self) -> str:
        where = "" if self.i is None else f" at (i={self.i}, j={self.j}"
        if where and self.t is not None:
            where += f", t={self.t:.6g}"
        if where:
            where += ")"
        return self.message + where


@dataclass(frozen=True)
class ValidityReport:
    ok: bool
    violations: tuple[KernelViolation, ...]

    def __str__(self) -> str:
        if self.ok:
            return "kernel valid"
        return "invalid jump kernel: " + "; ".join(str(v) for v in self.violations)


@dataclass(frozen=True, eq=False)
class JumpKernel:
    """Semi-Markov matrix q_ij(t), exponential family or tabulated samples."""

    family: str
    kappa: np.ndarray | None = None
    gamma: np.ndarray | None = None
    samples: np.ndarray | None = None
    grid: TimeGrid | None = None

    @classmethod
    def exponential(cls, kappa, gamma) -> "JumpKernel":
        """q_ij(t) = kappa_ij exp(-gamma_ij t); gamma may be a scalar."""
        kappa = np.array(kappa, dtype=float)
        if kappa.ndim != 2 or kappa.shape[0] != kappa.shape[1]:
            raise ValueError(f"kappa must be square, got shape {kappa.shape}")
        gamma = np.broadcast_to(np.array(gamma, dtype=float), kappa.shape).copy()
        kappa.flags.writeable = False
        gamma.flags.writeable = False
        return cls(family="exponential", kappa=kappa, gamma=gamma)

    @classmethod
    def tabulated(cls, samples, grid: TimeGrid) -> "JumpKernel":
        """q sampled on `grid`, time-major array of shape (n_nodes, d, d)."""
        samples = np.array(samples, dtype=float)
        if samples.ndim != 3 or samples.shape[1] != samples.shape[2]:
            raise ValueError(f"samples must have shape (n, d, d), got {samples.shape}")
        if samples.shape[0] != grid.n_nodes:
            raise ValueError(
                f"{samples.shape[0]} samples do not fit a grid with {grid.n_nodes} nodes"
            )
        samples.flags.writeable = False
        return cls(family="tabulated", samples=samples, grid=grid)

    @property
    def dimension(self) -> int:
        return self.kappa.shape[0] if self.family == "exponential" else self.samples.shape[1]

    def sample(self, grid: TimeGrid) -> np.ndarray:
        """q(t_n) as an (n_nodes, d, d) array on the given grid."""
        if self.family == "exponential":
            return self.kappa * np.exp(-self.gamma * grid.t[:, None, None])
        if not _grids_match(grid, self.grid):
            raise ValueError("tabulated kernel was sampled on a different grid")
        return self.samples

    def column_masses(self) -> np.ndarray:
        """Total jump probability per column, int_0^inf f_j (tail included
        only for the exponential family; tabulated masses stop at t_max)."""
        if self.family == "exponential":
            with np.errstate(invalid="ignore"):
                ratio = np.where(self.kappa > 0, self.kappa / self.gamma, 0.0)
            return ratio.sum(axis=0)
        return trapezoid(self.samples.sum(axis=1), self.grid.t, axis=0)


def validate_jump_kernel(q: JumpKernel) -> ValidityReport:
    """Structured validity check: nonnegativity, zero diagonal, column mass <= 1."""
    bad: list[KernelViolation] = []
    d = q.dimension
    if q.family == "exponential":
        for i, j in zip(*np.nonzero(q.kappa < 0)):
            bad.append(KernelViolation(int(i), int(j), None, "negative rate coefficient"))
        for i, j in zip(*np.nonzero(~(q.gamma > 0))):
            if q.kappa[i, j] != 0:
                bad.append(KernelViolation(int(i), int(j), None, "decay rate must be positive"))
        diag = np.abs(np.diag(q.kappa))
        for k in np.nonzero(diag > 0)[0]:
            bad.append(KernelViolation(int(k), int(k), None, "diagonal must vanish"))
    else:
        neg = np.nonzero(q.samples < 0)
        for n, i, j in zip(*neg):
            bad.append(
                KernelViolation(int(i), int(j), float(q.grid.t[n]), "negative sample")
            )
            if len(bad) > 32:  # keep the report readable
                break
        diag = np.abs(q.samples[:, range(d), range(d)])
        for k in np.nonzero(diag.max(axis=0) > 0)[0]:
            bad.append(KernelViolation(int(k), int(k), None, "diagonal must vanish"))
    masses = q.column_masses()
    for j in np.nonzero(masses > 1.0 + MASS_SLACK)[0]:
        bad.append(
            KernelViolation(
                None, int(j), None, f"column {j} mass {masses[j]:.12g} exceeds 1"
            )
        )
    return ValidityReport(ok=not bad, violations=tuple(bad))


def ensure_valid(q: JumpKernel) -> None:
    report = validate_jump_kernel(q)
    if not report.ok:
        raise ValueError(str(report))


def survival_and_waiting(q: JumpKernel, grid: TimeGrid) -> tuple[np.ndarray, np.ndarray]:
    """Waiting-time densities f_j(t_n) and survival probabilities g_j(t_n).

    Exponential columns integrate analytically; tabulated columns use the
    trapezoid rule (consistent with every other quadrature in the package).
    Returns arrays of shape (n_nodes, d).
    """
    if q.family == "exponential":
        decay = np.exp(-q.gamma * grid.t[:, None, None])
        f = (q.kappa * decay).sum(axis=1)
        with np.errstate(invalid="ignore"):
            ratio = np.where(q.kappa > 0, q.kappa / q.gamma, 0.0)
        g = 1.0 - (ratio * (1.0 - decay)).sum(axis=1)
    else:
        f = q.samples.sum(axis=1)
        g = 1.0 - cumulative_trapezoid(f, dx=grid.h, axis=0, initial=0.0)
    return f, g


def _series_on_grid(
    q: JumpKernel, grid: TimeGrid, tol: float, max_terms: int
) -> np.ndarray:
    qs = q.sample(grid)
    _, g = survival_and_waiting(q, grid)
    d = q.dimension
    term = np.zeros((grid.n_nodes, d, d))
    idx = np.arange(d)
    term[:, idx, idx] = g
    total = term.copy()
    for _ in range(max_terms):
        term = grid_convolve(term, qs, grid)
        total += term
        sup = float(np.max(np.abs(term)))
        if sup < tol:
            return total
    raise RuntimeError(
        f"renewal series did not converge within {max_terms} terms; "
        f"last term sup-norm {sup:.3e} (tolerance {tol:.1e})"
    )


def build_T_series(
    q: JumpKernel, grid: TimeGrid, tol: float = 1e-12, max_terms: int = 10_000
) -> np.ndarray:
    """Occupation matrix T(t_n) from the renewal series, shape (n_nodes, d, d).

    The series is summed on the requested grid and once more on a 2x refined
    grid; the two results are Richardson-combined, (4 T_fine - T_coarse)/3,
    which cancels the leading trapezoid error and keeps the column sums at
    roundoff level. T(0) is the identity exactly. Entries below -1e-10 or
    column sums off by more than 1e-8 indicate a broken kernel and raise.
    """
    ensure_valid(q)
    coarse = _series_on_grid(q, grid, tol, max_terms)
    fine = _series_on_grid(q, grid.refined(2), tol, max_terms)
    T = (4.0 * fine[::2] - coarse) / 3.0

    low = float(T.min())
    if low < -1e-10:
        raise RuntimeError(f"series produced entry {low:.3e} below -1e-10")
    colsum_dev = float(np.max(np.abs(T.sum(axis=1) - 1.0)))
    if colsum_dev > 1e-8:
        raise RuntimeError(
            f"series lost column stochasticity: deviation {colsum_dev:.3e}"
        )
    return T


@dataclass(frozen=True, eq=False)
class RateKernel:
    """Rate kernel W(t) = W0 delta(t) + regular part, exponential sums or samples.

    The instantaneous part W0 must be entrywise nonnegative. Diagonals are
    unused by the dynamics and are zeroed on construction. The regular part
    is either a sum of exponentials, terms = ((coef matrix, rate), ...) with
    rate > 0 meaning coef * exp(-rate t), or an (n, d, d) sample array tied
    to a grid.
    """

    delta: np.ndarray
    terms: tuple[tuple[np.ndarray, float], ...] | None = None
    samples: np.ndarray | None = None
    grid: TimeGrid | None = None

    def __post_init__(self) -> None:
        delta = np.array(self.delta, dtype=float)
        if delta.ndim != 2 or delta.shape[0] != delta.shape[1]:
            raise ValueError(f"delta part must be square, got shape {delta.shape}")
        np.fill_diagonal(delta, 0.0)
        if delta.size and float(delta.min()) < 0.0:
            raise ValueError("instantaneous rates must be nonnegative")
        delta.flags.writeable = False
        object.__setattr__(self, "delta", delta)
        if self.terms is not None and self.samples is not None:
            raise ValueError("give the regular part as terms or samples, not both")
        if self.terms is not None:
            clean = []
            for coef, rate in self.terms:
                coef = np.array(coef, dtype=float)
                if coef.shape != delta.shape:
                    raise ValueError("term coefficient shape does not match dimension")
                np.fill_diagonal(coef, 0.0)
                if np.any(coef != 0.0):
                    if not rate > 0:
                        raise ValueError(f"exponential term rate must be positive, got {rate}")
                    coef.flags.writeable = False
                    clean.append((coef, float(rate)))
            object.__setattr__(self, "terms", tuple(clean))
        if self.samples is not None:
            if self.grid is None:
                raise ValueError("sampled regular part needs its grid")
            samples = np.array(self.samples, dtype=float)
            if samples.shape != (self.grid.n_nodes, *delta.shape):
                raise ValueError(
                    f"samples shape {samples.shape} does not match grid/dimension"
                )
            d = delta.shape[0]
            samples[:, range(d), range(d)] = 0.0
            samples.flags.writeable = False
            object.__setattr__(self, "samples", samples)

    @classmethod
    def from_terms(cls, delta, terms) -> "RateKernel":
        return cls(delta=np.asarray(delta, dtype=float), terms=tuple(terms))

    @classmethod
    def delta_only(cls, delta) -> "RateKernel":
        """Memoryless (Markov) kernel W(t) = W0 delta(t)."""
        return cls(delta=np.asarray(delta, dtype=float), terms=())

    @classmethod
    def exponential_pairs(cls, kappa, gamma) -> "RateKernel":
        """Purely regular W_ij(t) = kappa_ij exp(-gamma_ij t); gamma may be scalar."""
        kappa = np.array(kappa, dtype=float)
        gamma = np.broadcast_to(np.array(gamma, dtype=float), kappa.shape)
        if np.any((kappa != 0) & ~(gamma > 0)):
            raise ValueError("decay rates must be positive wherever kappa is nonzero")
        terms = []
        for rate in np.unique(gamma[kappa != 0]):
            coef = np.where(gamma == rate, kappa, 0.0)
            terms.append((coef, float(rate)))
        return cls(delta=np.zeros_like(kappa), terms=tuple(terms))

    @classmethod
    def tabulated(cls, delta, samples, grid: TimeGrid) -> "RateKernel":
        return cls(delta=np.asarray(delta, dtype=float), samples=samples, grid=grid)

    @property
    def dimension(self) -> int:
        return self.delta.shape[0]

    @property
    def is_exponential(self) -> bool:
        return self.terms is not None

    def sample_regular(self, grid: TimeGrid) -> np.ndarray:
        """Regular part W(t_n), shape (n_nodes, d, d)."""
        if self.terms is not None:
            out = np.zeros((grid.n_nodes, self.dimension, self.dimension))
            for coef, rate in self.terms:
                out += coef * np.exp(-rate * grid.t)[:, None, None]
            return out
        if not _grids_match(grid, self.grid):
            raise ValueError("tabulated rate kernel was sampled on a different grid")
        return np.array(self.samples)

    def escape_delta(self) -> np.ndarray:
        """Instantaneous escape rates w0_k = sum_{i != k} W0_ik."""
        return self.delta.sum(axis=0)

    def escape_terms(self) -> tuple[tuple[np.ndarray, float], ...]:
        """Regular escape rates w_k(t) as exponential terms over columns."""
        if self.terms is None:
            raise ValueError("rate kernel has a sampled regular part, not terms")
        return tuple((coef.sum(axis=0), rate) for coef, rate in self.terms)

    def escape_regular(self, grid: TimeGrid) -> np.ndarray:
        """Regular escape rates w_k(t_n), shape (n_nodes, d)."""
        return self.sample_regular(grid).sum(axis=1)

    def master_delta(self) -> np.ndarray:
        """Gain-minus-loss instantaneous generator W0 - diag(w0)."""
        return self.delta - np.diag(self.escape_delta())

    def master_terms(self) -> tuple[tuple[np.ndarray, float], ...]:
        """Gain-minus-loss exponential terms A_r - diag(column sums of A_r)."""
        if self.terms is None:
            raise ValueError("rate kernel has a sampled regular part, not terms")
        return tuple(
            (coef - np.diag(coef.sum(axis=0)), rate) for coef, rate in self.terms
        )

    def master_samples(self, grid: TimeGrid) -> np.ndarray:
        """Sampled gain-minus-loss kernel for the population equation."""
        w = self.sample_regular(grid)
        out = np.array(w)
        d = self.dimension
        out[:, range(d), range(d)] -= w.sum(axis=1)
        return out


def rates_from_jump_kernel(q: JumpKernel) -> RateKernel:
    """Rate kernel W with W~_ij = q~_ij / g~_j, the unique kernel whose
    master equation reproduces the renewal series.

    Exponential family (common gamma per column): closed form
    W_ij = kappa_ij delta(t) - kappa_ij (gamma_j - kappa_j) e^{-(gamma_j - kappa_j) t}.
    Tabulated kernels: time-domain deconvolution of q_ij = (W_ij * g_j) on the
    kernel's own grid; refuses grids too coarse for the kernel's decay scale
    and survival probabilities too close to zero (ill-conditioned division).
    """
    ensure_valid(q)
    d = q.dimension
    if q.family == "exponential":
        gamma_col = np.zeros(d)
        for j in range(d):
            active = q.kappa[:, j] > 0
            if not active.any():
                continue
            rates = np.unique(q.gamma[active, j])
            if rates.size > 1:
                raise ValueError(
                    f"column {j} mixes decay rates {rates}; the closed form needs a "
                    "common rate per column (tabulate the kernel instead)"
                )
            gamma_col[j] = rates[0]
        kappa_col = q.kappa.sum(axis=0)
        terms = []
        for j in range(d):
            decay = gamma_col[j] - kappa_col[j]  # >= 0 because column mass <= 1
            coef = np.zeros((d, d))
            coef[:, j] = -q.kappa[:, j] * decay
            if np.any(coef != 0.0):
                terms.append((coef, float(decay)))
        return RateKernel(delta=q.kappa, terms=tuple(terms))

    grid = q.grid
    f, g = survival_and_waiting(q, grid)
    if float(g.min()) < 1e-6:
        raise ValueError(
            f"survival probability reaches {g.min():.3e}; deconvolution is "
            "ill-conditioned when a column empties out"
        )
    qs = q.samples
    scale = float(np.max(np.abs(qs)))
    if scale > 0:
        dq = np.gradient(qs, grid.h, axis=0)
        steepness = float(np.max(np.abs(dq))) / scale
        if grid.h > 1.0 / (20.0 * steepness):
            raise ValueError(
                f"grid step {grid.h:.3g} too coarse for kernel decay scale "
                f"{1.0 / steepness:.3g}; need h <= decay scale / 20"
            )
    delta = np.array(qs[0])
    # forward substitution of the trapezoid discretization of q = W * g,
    # one column at a time, all rows of the column at once
    w = np.zeros_like(qs)
    h = grid.h
    n = grid.n_nodes
    dq0 = (-3.0 * qs[0] + 4.0 * qs[1] - qs[2]) / (2.0 * h)  # one-sided O(h^2)
    np.fill_diagonal(delta, 0.0)
    w[0] = dq0 + delta * f[0][None, :]
    for j in range(d):
        rhs = qs[:, :, j] - np.outer(g[:, j], delta[:, j])
        col = w[:, :, j]
        gj = g[:, j]
        for step in range(1, n):
            hist = col[step - 1 :: -1].T @ gj[1 : step + 1]
            col[step] = (rhs[step] / h - hist + 0.5 * col[0] * gj[step]) / (0.5 * gj[0])
    return RateKernel.tabulated(delta=delta, samples=w, grid=grid)
