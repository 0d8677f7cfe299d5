"""Analytic dwell times, gains, dispersion corrections and fidelity.

Symbols follow the physics: ``kappa`` is the cavity loss rate as it appears
in the master equation (coherence decays at kappa, population at 2 kappa),
``Omega`` the Rabi frequency, ``T`` the total resonant time per atom
(2 pi / Omega nominally), ``tau`` the dispersive time and ``lam`` the beam
linear density. Velocity dispersion enters through ``x = dv / v0`` and
``x**2`` is read as a variance ratio.

All functions are pure and evaluate in double precision; ``log1p`` keeps
the small ``kappa / Omega`` logarithms accurate, and the ``kappa -> 0``
limits are returned exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DivergentGain, NegativeDenominator

FModel = Callable[[float, float, float], float]

REDUCED_THRESHOLD_KICK = 1e-3
REDUCED_THRESHOLD_DISPERSIVE = 1e-1


def zero_f(kappa: float, Omega: float, tau: float) -> float:
    """Default correction f(kappa, Omega, tau) = 0."""
    return 0.0


def constant_f(value: float) -> FModel:
    def f(kappa, Omega, tau):
        return value
    f.value = value
    return f


@dataclass(frozen=True)
class KickParams:
    kappa: float
    Omega: float
    T: float
    lam: float = 1.0
    a: float = 0.01
    c: float | None = None
    w0: float = 0.006
    v0: float = 510.0
    dv: float = 0.0

    def __post_init__(self):
        _check_common(self)


@dataclass(frozen=True)
class DispersiveParams:
    kappa: float
    Omega: float
    T: float
    tau: float
    lam: float = 1.0
    a: float = 0.01
    d: float | None = None
    w0: float = 0.006
    v0: float = 127.5
    dv: float = 0.0
    f_model: FModel = field(default=zero_f, compare=False)

    def __post_init__(self):
        _check_common(self)
        if not self.tau > 0:
            raise ValueError("tau must be > 0")

    @property
    def f(self) -> float:
        return float(self.f_model(self.kappa, self.Omega, self.tau))


def _check_common(p):
    if not p.T > 0:
        raise ValueError("T must be > 0")
    if not 0 <= p.lam <= 1:
        raise ValueError("lam must lie in [0, 1]")
    if p.kappa < 0 or p.Omega <= 0:
        raise ValueError("need kappa >= 0 and Omega > 0")


@dataclass(frozen=True)
class DwellReport:
    Tr_p: float
    Tr_c: float
    gain: float
    inequality_lhs: float = float("nan")
    satisfied: bool = True


# -- per-atom factors -------------------------------------------------------

def eta(kappa: float, Omega: float, T: float, t: float = 0.0) -> float:
    """Per-atom coherence factor of the phase-kick protocol."""
    if T < 0 or t < 0:
        raise ValueError("T and t must be >= 0")
    return (1 + 2 * kappa**2 / Omega**2) * math.exp(-kappa * (T + 2 * t) / 2)


def gamma_factor(kappa: float, Omega: float, tau: float, T: float, t: float = 0.0,
                 f_model: FModel = zero_f) -> float:
    """Per-atom coherence factor of the resonant-dispersive-resonant protocol."""
    if T < 0 or t < 0:
        raise ValueError("T and t must be >= 0")
    f = f_model(kappa, Omega, tau)
    return (1 + kappa / Omega * f) * math.exp(-kappa * (T + 2 * t) / 2)


def _log_term_kick(kappa, Omega):
    # (2 / kappa) ln(1 + 2 kappa^2 / Omega^2), -> 0 as kappa -> 0
    if kappa == 0:
        return 0.0
    return 2.0 / kappa * math.log1p(2 * kappa**2 / Omega**2)


def _log_term_dispersive(kappa, Omega, f):
    # (2 / kappa) ln(1 + kappa f / Omega), -> 2 f / Omega as kappa -> 0
    if kappa == 0:
        return 2.0 * f / Omega
    arg = kappa / Omega * f
    if arg <= -1:
        raise NegativeDenominator(f"1 + (kappa/Omega) f = {1 + arg:g} is not positive")
    return 2.0 / kappa * math.log1p(arg)


def alpha(kappa: float, Omega: float, T: float) -> float:
    """Fraction of bare loss suppressed per occupied slot, kick protocol."""
    return (T + _log_term_kick(kappa, Omega)) / (2 * T)


def varsigma(kappa: float, Omega: float, tau: float, T: float, f_model: FModel = zero_f) -> float:
    f = f_model(kappa, Omega, tau)
    return (tau + T / 2 + _log_term_dispersive(kappa, Omega, f) / 2) / (T + tau)


def _gain(lam, frac):
    den = 1 - lam * frac
    if den <= 0:
        raise DivergentGain(f"lambda * fraction = {lam * frac:g} >= 1")
    return 1 / den - 1


def gain_kick(p: KickParams) -> float:
    return _gain(p.lam, alpha(p.kappa, p.Omega, p.T))


def gain_dispersive(p: DispersiveParams) -> float:
    return _gain(p.lam, varsigma(p.kappa, p.Omega, p.tau, p.T, p.f_model))


def _report(kappa, frac, lam):
    if not kappa > 0:
        raise ValueError("dwell times need kappa > 0")
    g = _gain(lam, frac)
    tr_c = (1 / kappa) * (1 + g)
    return DwellReport(Tr_p=tr_c / 2, Tr_c=tr_c, gain=g)


def dwell_kick(p: KickParams) -> DwellReport:
    """Dwell times without velocity dispersion."""
    return _report(p.kappa, alpha(p.kappa, p.Omega, p.T), p.lam)


def dwell_dispersive(p: DispersiveParams) -> DwellReport:
    return _report(p.kappa, varsigma(p.kappa, p.Omega, p.tau, p.T, p.f_model), p.lam)


# -- velocity dispersion ----------------------------------------------------

def interaction_length(w0: float) -> float:
    return math.sqrt(math.pi) * w0


def D_coefficient(kappa, Omega, a, w0, v0):
    s2 = (a + (a + interaction_length(w0)))**2 / v0**2
    return 0.75 * kappa * s2 + 0.25 * Omega**2 / kappa * s2


def W_coefficient(kappa, Omega, a, w0, v0):
    L = interaction_length(w0)
    return (-0.25 * kappa * (a**2 + (a + L)**2) / v0**2
            - 1.5 * kappa * a * (a + L) / v0**2)


def Lambda_coefficient(kappa, Omega, tau, a, w0, v0, f):
    L = interaction_length(w0)
    sq = (a**2 + (a + L)**2) / v0**2
    cross = a * (a + L) / v0**2
    bracket = sq / 2 - cross * math.exp(-kappa * tau)
    return (f / Omega * (Omega**2 / 4 * sq + Omega**4 / (2 * kappa**2) * cross)
            + Omega**2 / (4 * kappa) * (L / v0)**2
            + Omega / 2 * f * bracket
            - kappa / 4 * (L / v0)**2 * math.exp(-2 * kappa * tau))


def xi_coefficient(kappa, Omega, tau, a, w0, v0, f):
    L = interaction_length(w0)
    sq = (a**2 + (a + L)**2) / v0**2
    cross = a * (a + L) / v0**2
    bracket = sq / 2 - cross * math.exp(-kappa * tau)
    return -Omega / 2 * f * bracket + kappa / 4 * (L / v0)**2 * math.exp(-2 * kappa * tau)


def kick_denominators(p: KickParams) -> tuple[float, float]:
    """(population, coherence) denominators of the dispersion-aware dwell times."""
    if not p.kappa > 0 or not p.v0 > 0:
        raise ValueError("need kappa > 0 and v0 > 0")
    lt = _log_term_kick(p.kappa, p.Omega)
    x2 = (p.dv / p.v0)**2
    base = p.T - lt + (1 - p.lam) * (p.T + lt)
    d = D_coefficient(p.kappa, p.Omega, p.a, p.w0, p.v0)
    w = W_coefficient(p.kappa, p.Omega, p.a, p.w0, p.v0)
    return base + d * x2, base + (d + w) * x2


def dispersive_denominators(p: DispersiveParams) -> tuple[float, float]:
    if not p.kappa > 0 or not p.v0 > 0:
        raise ValueError("need kappa > 0 and v0 > 0")
    f = p.f
    lt = _log_term_dispersive(p.kappa, p.Omega, f)
    x2 = (p.dv / p.v0)**2
    base = p.T - lt + (1 - p.lam) * (p.T + 2 * p.tau + lt)
    lam_c = Lambda_coefficient(p.kappa, p.Omega, p.tau, p.a, p.w0, p.v0, f)
    xi = xi_coefficient(p.kappa, p.Omega, p.tau, p.a, p.w0, p.v0, f)
    return base + lam_c * x2, base + (lam_c + xi) * x2


def _dispersion_report(kappa, span, den_p, den_c, check):
    for name, den in (("population", den_p), ("coherence", den_c)):
        if den == 0:
            raise DivergentGain(f"{name} dwell-time denominator vanishes")
        if den < 0:
            raise NegativeDenominator(f"{name} dwell-time denominator is {den:g}")
    tr_p = 1 / (2 * kappa) * 2 * span / den_p
    tr_c = 1 / kappa * 2 * span / den_c
    return DwellReport(Tr_p=tr_p, Tr_c=tr_c, gain=kappa * tr_c - 1,
                       inequality_lhs=check.lhs, satisfied=check.satisfied)


def dwell_kick_dispersion(p: KickParams) -> DwellReport:
    den_p, den_c = kick_denominators(p)
    check = inequality_kick(p) if p.lam > 0 else InequalityCheck(math.inf, False, math.inf, REDUCED_THRESHOLD_KICK)
    return _dispersion_report(p.kappa, p.T, den_p, den_c, check)


def dwell_dispersive_dispersion(p: DispersiveParams) -> DwellReport:
    den_p, den_c = dispersive_denominators(p)
    check = (inequality_dispersive(p) if p.lam > 0
             else InequalityCheck(math.inf, False, math.inf, REDUCED_THRESHOLD_DISPERSIVE))
    return _dispersion_report(p.kappa, p.T + p.tau, den_p, den_c, check)


# -- inequalities -----------------------------------------------------------

@dataclass(frozen=True)
class InequalityCheck:
    lhs: float
    satisfied: bool
    reduced_lhs: float
    reduced_threshold: float

    @property
    def reduced_satisfied(self) -> bool:
        return self.reduced_lhs < self.reduced_threshold


def inequality_kick(p: KickParams) -> InequalityCheck:
    if not (p.lam > 0 and p.v0 > 0 and p.kappa > 0):
        raise ValueError("need lam > 0, v0 > 0 and kappa > 0")
    reduced = p.Omega / p.kappa * (p.dv / p.v0)**2
    lhs = math.pi / (2 * p.lam) * (1 + 2 * p.Omega / math.pi * p.a / p.v0) * reduced
    return InequalityCheck(lhs, lhs < 1, reduced, REDUCED_THRESHOLD_KICK)


def inequality_dispersive(p: DispersiveParams) -> InequalityCheck:
    if not (p.lam > 0 and p.v0 > 0 and p.kappa > 0):
        raise ValueError("need lam > 0, v0 > 0 and kappa > 0")
    reduced = p.Omega / p.kappa * (p.dv / p.v0)**2
    lhs = 8 * math.pi / (7 * p.lam) * (1 + 1.5 * p.kappa * p.a / p.v0) * reduced
    return InequalityCheck(lhs, lhs < 1, reduced, REDUCED_THRESHOLD_DISPERSIVE)


def length_for_reduced_threshold(kind: str, kappa: float, Omega: float, v0: float,
                                 lam: float = 1.0) -> float:
    """Geometry length ``a`` at which the full inequality collapses onto the
    reduced threshold (1e-3 kick, 1e-1 dispersive)."""
    if kind == "phase_kick":
        prefactor = 2 * lam / (math.pi * REDUCED_THRESHOLD_KICK)
        return (prefactor - 1) * math.pi * v0 / (2 * Omega)
    if kind == "dispersive":
        prefactor = 7 * lam / (8 * math.pi * REDUCED_THRESHOLD_DISPERSIVE)
        return (prefactor - 1) * v0 / (1.5 * kappa)
    raise ValueError(f"unknown protocol {kind!r}")


# -- effective channel rates and fidelity -----------------------------------

def effective_rates_kick(p: KickParams) -> tuple[float, float]:
    """(kappa_bar, F_bar): amplitude and phase damping rates seen by the field."""
    rep = dwell_kick_dispersion(p)
    w = W_coefficient(p.kappa, p.Omega, p.a, p.w0, p.v0)
    return 1 / (2 * rep.Tr_p), p.kappa * w * (p.dv / p.v0)**2 / (2 * p.T)


def effective_rates_dispersive(p: DispersiveParams) -> tuple[float, float]:
    rep = dwell_dispersive_dispersion(p)
    xi = xi_coefficient(p.kappa, p.Omega, p.tau, p.a, p.w0, p.v0, p.f)
    return 1 / (2 * rep.Tr_p), p.kappa * xi * (p.dv / p.v0)**2 / (2 * (p.T + p.tau))


def fidelity_formula(beta: float, epsilon: float, t) -> float:
    """Overlap of (|0> + e^{i phi}|1>)/sqrt 2 with its damped image."""
    if np.ndim(t) == 0 and math.isinf(t):
        return 0.5 if beta + epsilon > 0 else 1.0
    return 0.5 * (1 + np.exp(-beta * np.asarray(t, dtype=float)) * np.exp(-epsilon * np.asarray(t, dtype=float)))


def damped_field_state(rho11_0: float, rho10_0: complex, beta: float, epsilon: float, t: float):
    """Closed-form populations and coherence under amplitude + phase damping.

    Returns (rho11, rho10) after time t.
    """
    return rho11_0 * math.exp(-2 * beta * t), rho10_0 * math.exp(-beta * t) * math.exp(-epsilon * t)
