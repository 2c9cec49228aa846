"""Assembly of the hybrid dynamical map and its complete-positivity witness.

The map factorizes over matrix elements in the Hamiltonian eigenbasis: the
populations evolve through a memory master equation,

    rho(t)_kk = sum_l T_kl(t) rho(0)_ll,

while each coherence picks up three commuting scalar factors,

    rho(t)_kl = e^{-i omega_kl t} lambda_kl(t) mu_kl(t) rho(0)_kl,

with omega_kl = E_k - E_l the Bohr frequency, lambda the dissipative
coherence damping driven by the escape rates of the rate kernel,

    lambda_kl'(t) = -1/2 int_0^t (w_k + w_l)(t - tau) lambda_kl(tau) dtau,

and mu the pure-decoherence factor of the chosen model. Trace preservation
and Hermiticity are structural; complete positivity is not. The witness is
the Hermitian matrix C(t) with C_kk = T_kk and C_kl = lambda_kl mu_kl:
the map is completely positive at t iff C(t) >= 0 and the off-diagonal
populations T_kl are nonnegative. That equivalence is exact: reordering the
Choi matrix sum_ij |i><j| (x) Map(|i><j|) splits it into the coherence block
and a diagonal of off-diagonal T entries, and the unitary Bohr phases are a
diagonal congruence that cannot move eigenvalue signs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numkit import TimeGrid, hermitian_min_eig
from .semi_markov import JumpKernel, RateKernel, build_T_series, rates_from_jump_kernel
from .volterra import VolterraProblem, solve_expsum_embedding, solve_quadrature

PSD_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class DecoherenceModel:
    """Pure-decoherence input: one of three parametrizations.

    gkls    -- positive semidefinite matrix D; each coherence decays with
               rate 1/2 (D_kk + D_ll) - Re D_kl and rotates with Im D_kl
               (the element-wise action of the decoherence generator).
    noise   -- independent white-noise level fluctuations with strengths
               gamma_k; |mu_kl| = exp(-(gamma_k + gamma_l) t / 2).
    direct  -- explicit pairwise decay rates Gamma_kl = Gamma_lk >= 0.
    """

    kind: str
    matrix: np.ndarray | None = None
    rates: np.ndarray | None = None

    @classmethod
    def gkls(cls, matrix) -> "DecoherenceModel":
        matrix = np.array(matrix, dtype=complex)
        low = hermitian_min_eig(matrix)  # also rejects non-Hermitian input
        if low < -PSD_TOL:
            raise ValueError(
                f"decoherence matrix must be positive semidefinite, min eig {low:.3e}"
            )
        matrix.flags.writeable = False
        return cls(kind="gkls", matrix=matrix)

    @classmethod
    def noise(cls, rates) -> "DecoherenceModel":
        rates = np.array(rates, dtype=float)
        if rates.ndim != 1 or (rates.size and rates.min() < 0):
            raise ValueError("noise strengths must be a vector of nonnegative rates")
        rates.flags.writeable = False
        return cls(kind="noise", rates=rates)

    @classmethod
    def direct(cls, rates) -> "DecoherenceModel":
        rates = np.array(rates, dtype=float)
        if rates.ndim != 2 or rates.shape[0] != rates.shape[1]:
            raise ValueError("pairwise rates must form a square matrix")
        if float(np.max(np.abs(rates - rates.T))) > 1e-12:
            raise ValueError("pairwise decoherence rates must be symmetric")
        np.fill_diagonal(rates, 0.0)
        if rates.size and float(rates.min()) < 0:
            raise ValueError("pairwise decoherence rates must be nonnegative")
        rates.flags.writeable = False
        return cls(kind="direct", rates=rates)

    @property
    def dimension(self) -> int:
        src = self.matrix if self.matrix is not None else self.rates
        return src.shape[0]


@dataclass(frozen=True, eq=False)
class HybridGeneratorSpec:
    """Energies, dissipation kernel, and decoherence model for one system.

    The dissipation mode is carried by the kernel type: a RateKernel is used
    as the rates W(t) directly, a JumpKernel goes through the renewal series
    (populations) and the derived rate kernel (coherences). decoherence may
    be None for a dissipation-only map.
    """

    energies: np.ndarray
    dissipation: RateKernel | JumpKernel
    decoherence: DecoherenceModel | None = None

    def __post_init__(self) -> None:
        energies = np.array(self.energies, dtype=float)
        if energies.ndim != 1 or energies.size < 2:
            raise ValueError("need at least two finite energy levels")
        if not np.all(np.isfinite(energies)):
            raise ValueError("energies must be finite")
        energies.flags.writeable = False
        object.__setattr__(self, "energies", energies)
        d = energies.size
        if self.dissipation.dimension != d:
            raise ValueError(
                f"dissipation kernel dimension {self.dissipation.dimension} "
                f"does not match {d} energy levels"
            )
        if self.decoherence is not None and self.decoherence.kind == "noise":
            if self.decoherence.rates.size != d:
                raise ValueError("noise model needs one strength per level")
        elif self.decoherence is not None and self.decoherence.dimension != d:
            raise ValueError("decoherence model dimension mismatch")

    @property
    def dimension(self) -> int:
        return self.energies.size

    @property
    def mode(self) -> str:
        return "rates" if isinstance(self.dissipation, RateKernel) else "semi-markov"


@dataclass(frozen=True, eq=False)
class MapTrajectory:
    """Everything needed to apply the map at every grid node."""

    grid: TimeGrid
    energies: np.ndarray
    populations: np.ndarray  # (n, d, d) real
    coherence: np.ndarray  # (n, d, d) real, symmetric, ones on the diagonal
    dephasing: np.ndarray  # (n, d, d) complex, ones on the diagonal
    phases: np.ndarray  # (n, d, d) complex, unit modulus

    def __post_init__(self) -> None:
        d = self.energies.size
        eye = np.eye(d)
        if float(np.max(np.abs(self.populations[0] - eye))) > 1e-12:
            raise ValueError("population matrix must start at the identity")
        if float(np.max(np.abs(self.coherence[0] - 1.0))) > 1e-12:
            raise ValueError("coherence factors must start at 1")
        if float(np.max(np.abs(self.dephasing[0] - 1.0))) > 1e-12:
            raise ValueError("decoherence factors must start at 1")
        sym = float(np.max(np.abs(self.coherence - self.coherence.swapaxes(1, 2))))
        if sym > 1e-12:
            raise ValueError(f"coherence factors must be symmetric, deviation {sym:.3e}")
        mod = float(np.max(np.abs(np.abs(self.phases) - 1.0)))
        if mod > 1e-12:
            raise ValueError("phase factors must have unit modulus")

    @property
    def dimension(self) -> int:
        return self.energies.size

    def coherence_product(self) -> np.ndarray:
        """lambda_kl mu_kl per node (no Bohr phases), shape (n, d, d) complex."""
        return self.coherence * self.dephasing


def _rate_kernel_of(spec: HybridGeneratorSpec) -> RateKernel:
    if isinstance(spec.dissipation, RateKernel):
        return spec.dissipation
    return rates_from_jump_kernel(spec.dissipation)


def _solve(problem: VolterraProblem, grid: TimeGrid, backend: str) -> np.ndarray:
    if backend == "auto":
        backend = "expsum" if problem.kernel_samples is None else "quadrature"
    if backend == "expsum":
        return solve_expsum_embedding(problem, grid)
    if backend == "quadrature":
        return solve_quadrature(problem, grid)
    raise ValueError(f"unknown backend {backend!r}")


def population_trajectory(
    spec: HybridGeneratorSpec, grid: TimeGrid, backend: str = "auto"
) -> np.ndarray:
    """Population matrix T(t_n), columns summing to 1 within 1e-8.

    Semi-Markov mode sums the renewal series; rates mode integrates the
    memory master equation with the chosen Volterra backend. Entries may go
    negative in rates mode; that is the phenomenon the witness reports, so
    it is not rejected here.
    """
    d = spec.dimension
    if spec.mode == "semi-markov":
        T = build_T_series(spec.dissipation, grid)
    else:
        kernel = spec.dissipation
        problem = VolterraProblem(
            x0=np.eye(d),
            delta=kernel.master_delta(),
            kernel_terms=kernel.master_terms() if kernel.is_exponential else None,
            kernel_samples=None if kernel.is_exponential else kernel.master_samples(grid),
        )
        T = _solve(problem, grid, backend)
    dev = float(np.max(np.abs(T.sum(axis=1) - 1.0)))
    if dev > 1e-8:
        raise RuntimeError(f"population columns lost normalization by {dev:.3e}")
    return T


def coherence_trajectory(
    spec: HybridGeneratorSpec, grid: TimeGrid, backend: str = "auto"
) -> np.ndarray:
    """Dissipative coherence factors lambda_kl(t_n), symmetric, real.

    Both modes damp each pair with the escape rates of the rate kernel; in
    semi-Markov mode that kernel is first derived from the jump kernel, so
    the instantaneous parts enter as local decay terms.
    """
    kernel = _rate_kernel_of(spec)
    d = spec.dimension
    w0 = kernel.escape_delta()
    lam = np.ones((grid.n_nodes, d, d))
    if kernel.is_exponential:
        escape = kernel.escape_terms()
        samples = None
    else:
        escape = None
        samples = kernel.escape_regular(grid)
    one = np.ones(1)
    for k in range(d):
        for l in range(k + 1, d):
            if escape is not None:
                terms = tuple(
                    (np.array([[-0.5 * (coefs[k] + coefs[l])]]), rate)
                    for coefs, rate in escape
                )
                problem = VolterraProblem(
                    x0=one, delta=np.array([[-0.5 * (w0[k] + w0[l])]]), kernel_terms=terms
                )
            else:
                ker = (-0.5 * (samples[:, k] + samples[:, l]))[:, None, None]
                problem = VolterraProblem(
                    x0=one, delta=np.array([[-0.5 * (w0[k] + w0[l])]]), kernel_samples=ker
                )
            lam[:, k, l] = lam[:, l, k] = _solve(problem, grid, backend)[:, 0]
    return lam


def decoherence_factors(
    model: DecoherenceModel | None, grid: TimeGrid, d: int | None = None
) -> np.ndarray:
    """Pure-decoherence factors mu_kl(t_n), ones on the diagonal."""
    if model is None:
        if d is None:
            raise ValueError("dimension required when no decoherence model is given")
        return np.ones((grid.n_nodes, d, d), dtype=complex)
    d = model.dimension
    t = grid.t[:, None, None]
    if model.kind == "gkls":
        diag = np.real(np.diagonal(model.matrix))
        decay = 0.5 * (diag[:, None] + diag[None, :]) - model.matrix.real
        rotation = model.matrix.imag
        mu = np.exp((-decay + 1j * rotation) * t)
    elif model.kind == "noise":
        decay = 0.5 * (model.rates[:, None] + model.rates[None, :])
        np.fill_diagonal(decay, 0.0)
        mu = np.exp(-decay * t).astype(complex)
    else:
        mu = np.exp(-model.rates * t).astype(complex)
    mu[:, range(d), range(d)] = 1.0
    return mu


def build_trajectory(
    spec: HybridGeneratorSpec, grid: TimeGrid, backend: str = "auto"
) -> MapTrajectory:
    """Solve populations, coherence damping, decoherence, and Bohr phases."""
    d = spec.dimension
    omega = spec.energies[:, None] - spec.energies[None, :]
    phases = np.exp(-1j * omega * grid.t[:, None, None])
    return MapTrajectory(
        grid=grid,
        energies=spec.energies,
        populations=population_trajectory(spec, grid, backend),
        coherence=coherence_trajectory(spec, grid, backend),
        dephasing=decoherence_factors(spec.decoherence, grid, d),
        phases=phases,
    )


def assemble_and_apply(traj: MapTrajectory, rho0: np.ndarray, node: int) -> np.ndarray:
    """State at grid node `node` for initial state rho0.

    rho0 must be Hermitian, unit-trace and positive semidefinite within
    1e-10. Populations mix through T, each coherence is multiplied by its
    three commuting factors. Trace and Hermiticity of the output are
    asserted, not assumed.
    """
    rho0 = np.asarray(rho0, dtype=complex)
    d = traj.dimension
    if rho0.shape != (d, d):
        raise ValueError(f"state must be {d}x{d}, got {rho0.shape}")
    low = hermitian_min_eig(rho0, tol=PSD_TOL)
    if low < -PSD_TOL:
        raise ValueError(f"state is not positive semidefinite: min eig {low:.3e}")
    trace_dev = abs(np.trace(rho0).real - 1.0) + abs(np.trace(rho0).imag)
    if trace_dev > PSD_TOL:
        raise ValueError(f"state trace deviates from 1 by {trace_dev:.3e}")

    out = traj.phases[node] * traj.coherence[node] * traj.dephasing[node] * rho0
    pops = traj.populations[node] @ np.real(np.diagonal(rho0))
    out[range(d), range(d)] = pops

    herm = float(np.max(np.abs(out - out.conj().T)))
    if herm > 1e-12:
        raise RuntimeError(f"output state lost Hermiticity by {herm:.3e}")
    tr = abs(np.trace(out) - 1.0)
    if tr > 1e-10:
        raise RuntimeError(
            f"output state lost trace normalization by {tr:.3e}; "
            "refine the time grid"
        )
    return out


@dataclass(frozen=True, eq=False)
class CPWitness:
    """Per-node coherence-block witness and its Choi cross-check.

    matrices holds the phase-stripped C(t_n): populations on the diagonal,
    |lambda_kl mu_kl| off it. The map is completely positive at a node iff
    min_eig at that node and the smallest off-diagonal population entry are
    both nonnegative (within tolerance); choi_min_eig is computed from the
    full Choi matrix independently and cross-checked against that claim.
    """

    grid: TimeGrid
    matrices: np.ndarray  # (n, d, d) real symmetric
    min_eig: np.ndarray  # (n,)
    choi_min_eig: np.ndarray  # (n,)
    population_offdiag_min: np.ndarray  # (n,)
    global_min: float
    argmin_node: int
    negative_population_nodes: int

    def is_cp(self, tol: float = PSD_TOL) -> bool:
        return self.global_min >= -tol and float(self.population_offdiag_min.min()) >= -tol

    def det2(self) -> np.ndarray:
        """det C(t_n) for two-level systems."""
        if self.matrices.shape[1] != 2:
            raise ValueError("det curve is only defined for two-level witnesses")
        c = self.matrices
        return c[:, 0, 0] * c[:, 1, 1] - c[:, 0, 1] ** 2


def cp_witness(traj: MapTrajectory, consistency_tol: float = 1e-8) -> CPWitness:
    """Build C(t_n), its minimal eigenvalues, and the Choi cross-check.

    The Bohr phases are a diagonal unitary congruence of the coherence block
    and are stripped exactly. Decoherence rotations (complex decoherence
    matrices) are kept in the Choi comparison, which uses the phase-bearing
    block; for real decoherence or two-level systems the stripped and
    phase-bearing blocks must agree to roundoff and this is asserted.
    """
    T = traj.populations
    n, d, _ = T.shape
    prod = traj.coherence_product()
    idx = np.arange(d)

    bearing = prod.copy()
    bearing[:, idx, idx] = T[:, idx, idx]
    stripped = np.abs(prod)
    stripped[:, idx, idx] = T[:, idx, idx]

    min_eig = np.linalg.eigvalsh(stripped)[:, 0]
    sym_bearing = 0.5 * (bearing + np.conj(bearing.swapaxes(1, 2)))
    min_eig_bearing = np.linalg.eigvalsh(sym_bearing)[:, 0]

    real_rotations = float(np.max(np.abs(prod.imag))) <= 1e-14
    if d == 2 or real_rotations:
        gap = float(np.max(np.abs(min_eig - min_eig_bearing)))
        if gap > 1e-12:
            raise RuntimeError(
                f"phase stripping changed the witness spectrum by {gap:.3e}"
            )

    offdiag = T.copy()
    offdiag[:, idx, idx] = np.inf
    pop_off_min = offdiag.min(axis=(1, 2))

    # Choi matrix, assembled independently: diagonal carries every T entry,
    # the (ii, jj) minor carries the phase-bearing coherence block
    choi_min = np.empty(n)
    c_full = traj.phases * prod
    chunk = max(1, 2_000_000 // (d * d * d * d))
    diag_pairs = idx * d + idx
    for start in range(0, n, chunk):
        stop = min(n, start + chunk)
        block = np.zeros((stop - start, d * d, d * d), dtype=complex)
        for i in range(d):
            block[:, i * d + idx, i * d + idx] = T[start:stop, :, i]
        block[:, diag_pairs[:, None], diag_pairs[None, :]] = c_full[start:stop]
        block[:, diag_pairs, diag_pairs] = T[start:stop, idx, idx]
        choi_min[start:stop] = np.linalg.eigvalsh(block)[:, 0]

    predicted = np.minimum(min_eig_bearing, pop_off_min)
    gap = float(np.max(np.abs(choi_min - predicted)))
    if gap > consistency_tol:
        raise RuntimeError(
            "Choi spectrum disagrees with the coherence-block witness by "
            f"{gap:.3e} (tolerance {consistency_tol:.1e})"
        )

    arg = int(np.argmin(min_eig))
    negative = int(np.count_nonzero((offdiag < -PSD_TOL).any(axis=(1, 2))))
    return CPWitness(
        grid=traj.grid,
        matrices=stripped,
        min_eig=min_eig,
        choi_min_eig=choi_min,
        population_offdiag_min=pop_off_min,
        global_min=float(min_eig[arg]),
        argmin_node=arg,
        negative_population_nodes=negative,
    )
