"""Markovian evolution of the cavity field, alone or with a passing atom.

Two dissipators are supported, both acting on the field factor only:

``cavity_loss``
    kappa (1 + nbar) {[a rho, a^dag] + [a, rho a^dag]}
    + kappa nbar {[a^dag rho, a] + [a^dag, rho a]}

``amplitude_plus_phase``
    beta {[a rho, a^dag] + [a, rho a^dag]}
    + epsilon {[n rho, n] + [n, rho n]}

Integration is fixed-step RK4. Because the generator is linear, one RK4
step is the matrix polynomial ``1 + hL + (hL)^2/2 + (hL)^3/6 + (hL)^4/24``
of the Liouvillian; it is built once per segment and applied repeatedly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NotUnitary, UnstableStep
from .hilbert import HilbertSpace, annihilation, number, on_field

CAVITY_LOSS = "cavity_loss"
AMPLITUDE_PLUS_PHASE = "amplitude_plus_phase"

STABILITY_LIMIT = 0.1


@dataclass(frozen=True, eq=False)
class LindbladModel:
    """Hamiltonian plus field dissipator.

    ``hamiltonian`` may be None for pure decay; its dimension (field only
    or atom (x) field) must match the states the model is applied to.
    """

    fock_cutoff: int
    hamiltonian: np.ndarray | None = None
    kappa: float = 0.0
    nbar: float = 0.0
    variant: str = CAVITY_LOSS
    beta: float = 0.0
    epsilon: float = 0.0

    def __post_init__(self):
        for name in ("kappa", "nbar", "beta", "epsilon"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.variant not in (CAVITY_LOSS, AMPLITUDE_PLUS_PHASE):
            raise ValueError(f"unknown dissipator variant {self.variant!r}")
        HilbertSpace(self.fock_cutoff)

    def rate_scale(self) -> float:
        """Norm bound used by the step-size guard."""
        h = 0.0 if self.hamiltonian is None else float(np.linalg.norm(self.hamiltonian, 2))
        if self.variant == CAVITY_LOSS:
            return h + 2 * self.kappa * (self.nbar + 1)
        return h + 2 * self.beta + 2 * self.epsilon

    def _field_ops(self, dim):
        space = HilbertSpace(self.fock_cutoff)
        a, n = annihilation(space), number(space)
        if dim == space.fock_cutoff:
            return a, n
        if dim == space.joint_dim:
            return on_field(a), on_field(n)
        raise DimensionMismatch(
            f"state dimension {dim} matches neither field ({space.fock_cutoff}) "
            f"nor atom+field ({space.joint_dim})")

    def _hamiltonian(self, dim):
        if self.hamiltonian is None:
            return None
        if self.hamiltonian.shape != (dim, dim):
            raise DimensionMismatch(
                f"Hamiltonian shape {self.hamiltonian.shape} vs state dimension {dim}")
        return self.hamiltonian


@dataclass(frozen=True)
class IntegratorConfig:
    """Step control.

    With ``dt_max`` unset the step is ``step_fraction / rate_scale`` for
    each segment. An explicit ``dt_max`` is used as given and must satisfy
    ``dt_max * rate_scale <= 0.1``.
    """

    dt_max: float | None = None
    step_fraction: float = 0.01
    renormalize_trace: bool = False

    def __post_init__(self):
        if self.dt_max is not None and not self.dt_max > 0:
            raise ValueError("dt_max must be > 0")
        if not 0 < self.step_fraction <= STABILITY_LIMIT:
            raise ValueError(f"step_fraction must lie in (0, {STABILITY_LIMIT}]")

    def steps(self, model: LindbladModel, duration: float) -> int:
        if duration <= 0:
            return 0
        rate = model.rate_scale()
        if self.dt_max is not None:
            if self.dt_max * rate > STABILITY_LIMIT * (1 + 1e-12):
                raise UnstableStep(
                    f"dt_max={self.dt_max:g} s with rate scale {rate:g} /s exceeds "
                    f"the stability guard {STABILITY_LIMIT}")
            return max(1, math.ceil(duration / self.dt_max))
        if rate == 0:
            return 1
        return max(1, math.ceil(duration * rate / self.step_fraction))


def _comm(x, y):
    return x @ y - y @ x


def lindblad_rhs(rho: np.ndarray, model: LindbladModel) -> np.ndarray:
    """d rho / dt written term by term from the commutator forms."""
    rho = np.asarray(rho, dtype=complex)
    dim = rho.shape[0]
    if rho.shape != (dim, dim):
        raise DimensionMismatch(f"rho must be square, got {rho.shape}")
    a, n = model._field_ops(dim)
    ad = a.conj().T
    h = model._hamiltonian(dim)
    out = np.zeros_like(rho) if h is None else -1j * _comm(h, rho)
    if model.variant == CAVITY_LOSS:
        if model.kappa:
            k = model.kappa
            out = out + k * (1 + model.nbar) * (_comm(a @ rho, ad) + _comm(a, rho @ ad))
            if model.nbar:
                out = out + k * model.nbar * (_comm(ad @ rho, a) + _comm(ad, rho @ a))
    else:
        if model.beta:
            out = out + model.beta * (_comm(a @ rho, ad) + _comm(a, rho @ ad))
        if model.epsilon:
            out = out + model.epsilon * (_comm(n @ rho, n) + _comm(n, rho @ n))
    return out


def _sandwich(x, y):
    # row-major vec: vec(X rho Y) = kron(X, Y^T) vec(rho)
    return np.kron(x, y.T)


def liouvillian(model: LindbladModel, dim: int) -> np.ndarray:
    """Superoperator L with vec(d rho/dt) = L vec(rho), row-major vec."""
    a, n = model._field_ops(dim)
    ad = a.conj().T
    eye = np.eye(dim)
    h = model._hamiltonian(dim)

    def dissipator(j):
        jd = j.conj().T
        jdj = jd @ j
        return 2 * _sandwich(j, jd) - _sandwich(jdj, eye) - _sandwich(eye, jdj)

    sup = np.zeros((dim * dim, dim * dim), dtype=complex)
    if h is not None:
        sup += -1j * (_sandwich(h, eye) - _sandwich(eye, h))
    if model.variant == CAVITY_LOSS:
        if model.kappa:
            sup += model.kappa * (1 + model.nbar) * dissipator(a)
            if model.nbar:
                sup += model.kappa * model.nbar * dissipator(ad)
    else:
        if model.beta:
            sup += model.beta * dissipator(a)
        if model.epsilon:
            sup += model.epsilon * dissipator(n)
    return sup


def rk4_step_matrix(sup: np.ndarray, h: float) -> np.ndarray:
    x = h * sup
    x2 = x @ x
    x3 = x2 @ x
    return np.eye(sup.shape[0]) + x + x2 / 2 + x3 / 6 + (x3 @ x) / 24


def evolve(rho0: np.ndarray, model: LindbladModel, duration: float,
           cfg: IntegratorConfig | None = None) -> np.ndarray:
    """Integrate the master equation for ``duration`` seconds."""
    if duration < 0:
        raise ValueError("duration must be >= 0")
    cfg = cfg or IntegratorConfig()
    rho = np.array(rho0, dtype=complex)
    n_steps = cfg.steps(model, duration)
    if n_steps == 0:
        return rho
    dim = rho.shape[0]
    step = rk4_step_matrix(liouvillian(model, dim), duration / n_steps)
    v = rho.reshape(-1)
    for _ in range(n_steps):
        v = step @ v
        m = v.reshape(dim, dim)
        m = (m + m.conj().T) / 2
        if cfg.renormalize_trace:
            m = m / np.trace(m).real
        v = m.reshape(-1)
    return v.reshape(dim, dim)


def trajectory(rho0: np.ndarray, model: LindbladModel, times, cfg: IntegratorConfig | None = None):
    """States at each of the increasing ``times`` (the first is usually 0)."""
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0) or times[0] < 0:
        raise ValueError("times must be non-negative and increasing")
    out = []
    rho, t = np.array(rho0, dtype=complex), 0.0
    for t_next in times:
        rho = evolve(rho, model, t_next - t, cfg)
        t = t_next
        out.append(rho)
    return np.array(out)


def segment_propagator(model: LindbladModel, duration: float, dim: int,
                       cfg: IntegratorConfig | None = None) -> np.ndarray:
    """The RK4 step matrix raised to the segment's step count."""
    cfg = cfg or IntegratorConfig()
    n_steps = cfg.steps(model, duration)
    if n_steps == 0:
        return np.eye(dim * dim, dtype=complex)
    step = rk4_step_matrix(liouvillian(model, dim), duration / n_steps)
    return np.linalg.matrix_power(step, n_steps)


def unitary_superoperator(u: np.ndarray) -> np.ndarray:
    return _sandwich(u, u.conj().T)


def evolve_unitary(rho0: np.ndarray, u: np.ndarray, atol: float = 1e-10) -> np.ndarray:
    u = np.asarray(u, dtype=complex)
    rho0 = np.asarray(rho0, dtype=complex)
    if u.shape != rho0.shape:
        raise DimensionMismatch(f"unitary {u.shape} vs state {rho0.shape}")
    dev = np.max(np.abs(u @ u.conj().T - np.eye(u.shape[0])))
    if dev > atol:
        raise NotUnitary(f"U U^dag deviates from identity by {dev:.3e}")
    return u @ rho0 @ u.conj().T

