"""Closed-form two-level reference curves; ground truth for the solvers.

For the exponential rate pair k_+-(t) = kappa_+- e^{-gamma t} (rates mode:
the kernel is used as W directly, with W_01 = k_+ feeding state 0 and
W_10 = k_- feeding state 1) the Laplace transforms invert by hand. With
kappa = kappa_+ + kappa_- and the damped mode

    B_c(t) = e^{-gamma t/2} [cosh(Dt/2) + (gamma / D) sinh(Dt/2)],
    D = sqrt(gamma^2 - 4c),

the populations and the coherence factor are

    T_00(t) = kappa_+/kappa + (kappa_-/kappa) B_kappa(t)
    T_11(t) = kappa_-/kappa + (kappa_+/kappa) B_kappa(t)
    lambda_01(t) = B_{kappa/2}(t)

(the coherence equation carries half the escape-rate kernel, hence the
half-size argument: its discriminant is gamma^2 - 2 kappa). Imaginary D is
handled by the trigonometric continuation cosh(ix) = cos x,
sinh(ix)/i = sin x; D -> 0 by the limit form 1 + gamma t / 2. The witness
determinant is det C = T_00 T_11 - lambda_01^2 e^{-2 gamma_z t}.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numkit import TimeGrid

FIG1_KAPPA_PLUS = 1.0
FIG1_KAPPA_MINUS = 3.0
FIG1_GAMMA = 5.0
FIG1_DEPHASINGS = (0.0, 0.1, 1.0)


@dataclass(frozen=True)
class QubitParams:
    """Exponential-pair rates and dephasing for the two-level reference."""

    kappa_plus: float
    kappa_minus: float
    gamma: float
    gamma_z: float = 0.0
    omega: float = 0.0

    def __post_init__(self) -> None:
        vals = (self.kappa_plus, self.kappa_minus, self.gamma, self.gamma_z)
        if not all(np.isfinite(v) and v >= 0 for v in vals):
            raise ValueError("rates must be finite and nonnegative")
        if not self.gamma > 0:
            raise ValueError("the kernel decay rate gamma must be positive")
        if not np.isfinite(self.omega):
            raise ValueError("omega must be finite")

    @property
    def kappa(self) -> float:
        return self.kappa_plus + self.kappa_minus

    def real_mode_condition(self) -> bool:
        """Whether both discriminants stay real (no oscillatory regime)."""
        return self.gamma**2 >= 4.0 * self.kappa


def damped_mode(gamma: float, c: float, t: np.ndarray) -> np.ndarray:
    """B_c(t) = e^{-gamma t/2}[cosh(Dt/2) + (gamma/D) sinh(Dt/2)], D^2 = gamma^2 - 4c.

    Evaluated in overflow-free split-exponential form for real D, by
    trigonometric continuation for imaginary D, and by a guarded series for
    |D t| small (covering the D = 0 limit 1 + gamma t / 2 smoothly).
    """
    t = np.asarray(t, dtype=float)
    disc = gamma * gamma - 4.0 * c
    root = np.sqrt(abs(disc))
    out = np.empty_like(t)
    small = root * t <= 1e-4
    if np.any(small):
        # cosh x = 1 + x^2/2 + ..., sinh x / x = 1 + x^2/6 + ...; x^2 = disc t^2 / 4
        ts = t[small]
        x2 = 0.25 * disc * ts * ts
        out[small] = np.exp(-0.5 * gamma * ts) * (
            1.0 + 0.5 * x2 + 0.5 * gamma * ts * (1.0 + x2 / 6.0)
        )
    big = ~small
    tb = t[big]
    if np.any(big):
        if disc > 0:
            plus = 0.5 * (1.0 + gamma / root)
            minus = 0.5 * (1.0 - gamma / root)
            out[big] = plus * np.exp(-0.5 * (gamma - root) * tb) + minus * np.exp(
                -0.5 * (gamma + root) * tb
            )
        else:
            arg = 0.5 * root * tb
            out[big] = np.exp(-0.5 * gamma * tb) * (
                np.cos(arg) + (gamma / root) * np.sin(arg)
            )
    return out


@dataclass(frozen=True, eq=False)
class QubitCurves:
    t: np.ndarray
    t00: np.ndarray
    t11: np.ndarray
    lam01: np.ndarray
    det_c: np.ndarray


def closed_forms(p: QubitParams, grid: TimeGrid) -> QubitCurves:
    """Analytic T_00, T_11, lambda_01 and det C on the grid (no solver)."""
    t = grid.t
    if p.kappa == 0.0:
        ones = np.ones_like(t)
        return QubitCurves(t=t, t00=ones, t11=ones.copy(), lam01=ones.copy(),
                           det_c=1.0 - np.exp(-2.0 * p.gamma_z * t))
    b_pop = damped_mode(p.gamma, p.kappa, t)
    t00 = p.kappa_plus / p.kappa + (p.kappa_minus / p.kappa) * b_pop
    t11 = p.kappa_minus / p.kappa + (p.kappa_plus / p.kappa) * b_pop
    lam01 = damped_mode(p.gamma, 0.5 * p.kappa, t)
    det_c = t00 * t11 - lam01 * lam01 * np.exp(-2.0 * p.gamma_z * t)
    return QubitCurves(t=t, t00=t00, t11=t11, lam01=lam01, det_c=det_c)


@dataclass(frozen=True, eq=False)
class Fig1Data:
    """det C curves for the bundled reference parameter point."""

    t: np.ndarray
    det_gz0: np.ndarray
    det_gz0p1: np.ndarray
    det_gz1: np.ndarray

    def columns(self) -> tuple[np.ndarray, ...]:
        return (self.t, self.det_gz0, self.det_gz0p1, self.det_gz1)


def fig1_dataset(grid: TimeGrid) -> Fig1Data:
    """det C(t) at gamma = 5, kappa_+ = 1, kappa_- = 3 for the three
    dephasing rates 0, 0.1 and 1 (closed forms, rates mode)."""
    curves = []
    for gz in FIG1_DEPHASINGS:
        p = QubitParams(FIG1_KAPPA_PLUS, FIG1_KAPPA_MINUS, FIG1_GAMMA, gamma_z=gz)
        curves.append(closed_forms(p, grid).det_c)
    return Fig1Data(t=grid.t, det_gz0=curves[0], det_gz0p1=curves[1], det_gz1=curves[2])
