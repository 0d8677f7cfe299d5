"""Atomic-beam protection protocols and the beam march through the cavity.

Each beam slot holds at most one atom (probability ``density``). A present
atom enters in ``|g>`` and runs one of two schedules:

``phase_kick``   resonant pi/Omega, instantaneous sigma_z kick, resonant pi/Omega
``dispersive``   resonant pi/Omega, dispersive tau = pi/omega, resonant pi/Omega

Velocity errors shift the first pulse by ``(a/v0)(dv_i/v0)`` and the last one
by ``-(c/v0)(dv_i/v0)`` (``d`` instead of ``c`` for the dispersive schedule);
the dispersive time itself is unaffected. An empty slot lets the field decay
freely for the same nominal wall-clock time.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import closed_form as cf
from .errors import ClampedTimingWarning, DimensionMismatch, FactorOutOfRange, FitDegenerate
from .hilbert import (
    HilbertSpace,
    PhysicalParams,
    dispersive_hamiltonian,
    embed_field_state,
    jc_interaction_hamiltonian,
    kick_unitary,
    partial_trace_atom,
    principal_state,
)
from .lindblad import (
    IntegratorConfig,
    LindbladModel,
    evolve,
    evolve_unitary,
    segment_propagator,
    unitary_superoperator,
)

PHASE_KICK = "phase_kick"
DISPERSIVE = "dispersive"
KINDS = (PHASE_KICK, DISPERSIVE)

RESONANT, KICK, DISPERSE, FREE = "resonant", "kick", "dispersive", "free"


@dataclass(frozen=True)
class Geometry:
    """Distances along the beam, in metres.

    ``a``: box exit to the start of the first resonant zone. ``b``: kick point
    (or start of the dispersive zone). ``c``/``d``: end of the second resonant
    zone for the kick/dispersive layout. Unset lengths are placed on the
    mode assuming the atom crosses the effective length sqrt(pi) w0 at
    constant speed.
    """

    a: float = 0.01
    b: float | None = None
    c: float | None = None
    d: float | None = None
    w0: float = 0.006

    def __post_init__(self):
        L = self.interaction_length
        if self.b is None:
            object.__setattr__(self, "b", self.a + L / 2)
        if self.c is None:
            object.__setattr__(self, "c", self.a + L)
        if self.d is None:
            object.__setattr__(self, "d", self.a + L)
        for name in ("a", "b", "c", "d", "w0"):
            if getattr(self, name) < 0:
                raise ValueError(f"geometry length {name} must be >= 0")

    @property
    def interaction_length(self) -> float:
        return math.sqrt(math.pi) * self.w0


@dataclass(frozen=True)
class BeamSpec:
    n_atoms: int = 0
    density: float = 1.0
    v0: float = 510.0
    dv: float = 0.0
    velocity_dist: str = "uniform"
    free_window: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n_atoms < 0:
            raise ValueError("n_atoms must be >= 0")
        if not 0 <= self.density <= 1:
            raise ValueError("density must lie in [0, 1]")
        if self.dv < 0 or self.free_window < 0 or not self.v0 > 0:
            raise ValueError("need dv >= 0, free_window >= 0, v0 > 0")
        if self.velocity_dist not in ("uniform", "gaussian", "fixed"):
            raise ValueError(f"unknown velocity distribution {self.velocity_dist!r}")
        if self.dv / self.v0 > 0.05:
            warnings.warn(f"dv/v0 = {self.dv / self.v0:.3f} is not small; "
                          "the timing rules assume |dv| << v0", stacklevel=2)

    @property
    def velocity_rms(self) -> float:
        """Root mean square of the velocity error, for comparing with formulas
        that treat dv as a standard deviation."""
        if self.velocity_dist == "uniform":
            return self.dv / math.sqrt(3.0)
        return self.dv


@dataclass(frozen=True)
class Segment:
    kind: str
    duration: float = 0.0


@dataclass(frozen=True)
class ProtocolSchedule:
    kind: str
    segments: tuple[Segment, ...]
    clamped: bool = False

    @property
    def duration(self) -> float:
        return sum(s.duration for s in self.segments)

    @property
    def present(self) -> bool:
        return any(s.kind != FREE for s in self.segments)


@dataclass(frozen=True)
class AtomInstance:
    present: bool
    velocity: float
    dt_pi1: float = 0.0
    dt_pi2: float = 0.0


def sample_atom(spec: BeamSpec, geom: Geometry, kind: str, rng: np.random.Generator) -> AtomInstance:
    """Draw presence and velocity error for one slot.

    Two uniforms are consumed per call whatever the outcome, so the stream
    stays aligned across parameter changes.
    """
    _check_kind(kind)
    u_presence = rng.random()
    if spec.velocity_dist == "uniform":
        err = rng.uniform(-spec.dv, spec.dv)
    elif spec.velocity_dist == "gaussian":
        err = rng.normal(0.0, spec.dv)
    else:
        rng.random()
        err = spec.dv
    present = bool(u_presence < spec.density)
    far = geom.c if kind == PHASE_KICK else geom.d
    ratio = err / spec.v0
    return AtomInstance(present=present, velocity=spec.v0 + err,
                        dt_pi1=geom.a / spec.v0 * ratio,
                        dt_pi2=far / spec.v0 * ratio)


def nominal_slot(params: PhysicalParams, kind: str, tau: float | None = None) -> float:
    """Wall-clock time of one unperturbed atom passage."""
    _check_kind(kind)
    t = 2 * params.pi_pulse
    if kind == DISPERSIVE:
        t += params.tau_dispersive if tau is None else tau
    return t


def build_schedule(atom: AtomInstance, params: PhysicalParams, kind: str,
                   tau: float | None = None, warn: bool = True) -> ProtocolSchedule:
    _check_kind(kind)
    if not atom.present:
        return ProtocolSchedule(kind, (Segment(FREE, nominal_slot(params, kind, tau)),))
    t_pi = params.pi_pulse
    t1 = t_pi + atom.dt_pi1
    t2 = t_pi - atom.dt_pi2
    clamped = t1 < 0 or t2 < 0
    if clamped and warn:
        warnings.warn(f"perturbed pulse durations ({t1:.3e}, {t2:.3e}) s clamped at 0",
                      ClampedTimingWarning, stacklevel=2)
    t1, t2 = max(t1, 0.0), max(t2, 0.0)
    if kind == PHASE_KICK:
        middle = Segment(KICK)
    else:
        middle = Segment(DISPERSE, params.tau_dispersive if tau is None else tau)
    return ProtocolSchedule(kind, (Segment(RESONANT, t1), middle, Segment(RESONANT, t2)), clamped)


def _check_kind(kind):
    if kind not in KINDS:
        raise ValueError(f"unknown protocol {kind!r}; expected one of {KINDS}")


# -- numeric engine ---------------------------------------------------------

def _segment_model(seg: Segment, params: PhysicalParams, space: HilbertSpace) -> LindbladModel:
    if seg.kind == RESONANT:
        h = jc_interaction_hamiltonian(params, space)
    elif seg.kind == DISPERSE:
        h = dispersive_hamiltonian(params, space)
    else:
        h = None
    return LindbladModel(space.fock_cutoff, h, kappa=params.kappa, nbar=params.nbar)


def apply_atom_numeric(field_state: np.ndarray, sched: ProtocolSchedule, params: PhysicalParams,
                       cfg: IntegratorConfig | None = None) -> np.ndarray:
    """Send one atom (in |g>) through the cavity and return the field it leaves."""
    space = params.space
    field_state = np.asarray(field_state, dtype=complex)
    if field_state.shape != (space.fock_cutoff,) * 2:
        raise DimensionMismatch(f"field of shape {field_state.shape} for cutoff {space.fock_cutoff}")
    if not sched.present:
        model = LindbladModel(space.fock_cutoff, None, kappa=params.kappa, nbar=params.nbar)
        return evolve(field_state, model, sched.duration, cfg)
    rho = embed_field_state(field_state, "ground", space)
    for seg in sched.segments:
        if seg.kind == KICK:
            rho = evolve_unitary(rho, kick_unitary(space))
        else:
            rho = evolve(rho, _segment_model(seg, params, space), seg.duration, cfg)
    return partial_trace_atom(rho, space)


@lru_cache(maxsize=2048)
def atom_transfer_map(sched: ProtocolSchedule, params: PhysicalParams,
                      cfg: IntegratorConfig = IntegratorConfig()) -> np.ndarray:
    """Superoperator on vec(field) (row-major) for one slot.

    Same integrator as :func:`apply_atom_numeric`, but the step matrices are
    composed once so identical slots cost a single matrix-vector product.
    """
    space = params.space
    c = space.fock_cutoff
    if not sched.present:
        model = LindbladModel(c, None, kappa=params.kappa, nbar=params.nbar)
        out = segment_propagator(model, sched.duration, c, cfg)
        out.setflags(write=False)
        return out
    dj = space.joint_dim
    total = np.eye(dj * dj, dtype=complex)
    for seg in sched.segments:
        if seg.kind == KICK:
            step = unitary_superoperator(kick_unitary(space))
        else:
            step = segment_propagator(_segment_model(seg, params, space), seg.duration, dj, cfg)
        total = step @ total
    # embed |g><g| (x) rho and trace the atom back out
    embed = np.zeros((dj * dj, c * c), dtype=complex)
    trace = np.zeros((c * c, dj * dj), dtype=complex)
    g = 1
    for i in range(c):
        for j in range(c):
            embed[(g * c + i) * dj + (g * c + j), i * c + j] = 1.0
            for atom in (0, 1):
                trace[i * c + j, (atom * c + i) * dj + (atom * c + j)] = 1.0
    out = trace @ total @ embed
    out.setflags(write=False)
    return out


# -- analytic engine --------------------------------------------------------

def apply_atom_analytic(field_state: np.ndarray, factor: float, dephasing: float = 1.0,
                        tol: float = 1e-6) -> np.ndarray:
    """Per-atom map: rho11 -> rho11 f^2, rho10 -> rho10 f * dephasing.

    The lost population goes to |0>.
    """
    if not 0 < factor <= 1 + tol:
        raise FactorOutOfRange(f"per-atom factor {factor!r} outside (0, 1]")
    if not 0 < dephasing <= 1 + tol:
        raise FactorOutOfRange(f"dephasing factor {dephasing!r} outside (0, 1]")
    rho = np.array(field_state, dtype=complex)
    lost = rho[1, 1].real * (1 - factor**2)
    rho[1, 1] = rho[1, 1] * factor**2
    rho[0, 0] = rho[0, 0] + lost
    rho[1, 0] = rho[1, 0] * factor * dephasing
    rho[0, 1] = np.conj(rho[1, 0])
    return rho


def analytic_slot_factors(atom: AtomInstance, params: PhysicalParams, geom: Geometry, kind: str,
                          v0: float, free_window: float = 0.0, tau: float | None = None,
                          f_model: cf.FModel = cf.zero_f) -> tuple[float, float]:
    """(factor, dephasing) for one slot of the analytic engine.

    Occupied slots use eta or Gamma with the nominal resonant time, times the
    velocity-error damping exp(-kappa D x^2 / 2) on populations and
    exp(-kappa (D + W) x^2 / 2) on the coherence (Lambda, xi for the
    dispersive schedule), with x the atom's own dv/v0. Empty slots decay
    freely.
    """
    k, om = params.kappa, params.Omega
    T = 2 * params.pi_pulse
    if not atom.present:
        return math.exp(-k * (nominal_slot(params, kind, tau) + free_window)), 1.0
    x2 = ((atom.velocity - v0) / v0) ** 2
    if kind == PHASE_KICK:
        base = cf.eta(k, om, T, free_window)
        if x2 == 0 or k == 0:
            return base, 1.0
        pop = cf.D_coefficient(k, om, geom.a, geom.w0, v0)
        coh = cf.W_coefficient(k, om, geom.a, geom.w0, v0)
    else:
        tau = params.tau_dispersive if tau is None else tau
        base = cf.gamma_factor(k, om, tau, T, free_window, f_model)
        if x2 == 0 or k == 0:
            return base, 1.0
        f = f_model(k, om, tau)
        pop = cf.Lambda_coefficient(k, om, tau, geom.a, geom.w0, v0, f)
        coh = cf.xi_coefficient(k, om, tau, geom.a, geom.w0, v0, f)
    return base * math.exp(-k * pop * x2 / 2), math.exp(-k * coh * x2 / 2)


# -- beam runs --------------------------------------------------------------

@dataclass
class RunResult:
    """Field observables after each slot; index 0 is the initial state."""

    times: np.ndarray
    rho11: np.ndarray
    rho10: np.ndarray
    fidelity: np.ndarray
    final: np.ndarray
    leakage_max: float = 0.0
    n_present: int = 0
    n_clamped: int = 0

    @property
    def coherence(self) -> np.ndarray:
        return np.abs(self.rho10)


def _reference(field0, reference):
    if reference is None:
        return principal_state(field0)
    psi = np.asarray(reference, dtype=complex)
    return psi / np.linalg.norm(psi)


def _march(field0, spec, geom, params, kind, engine, cfg, reference, tau, f_model, rng):
    c = params.fock_cutoff
    field0 = np.asarray(field0, dtype=complex)
    if field0.shape != (c, c):
        raise DimensionMismatch(f"field of shape {field0.shape} for cutoff {c}")
    if engine not in ("numeric", "analytic"):
        raise ValueError(f"unknown engine {engine!r}")
    cfg = cfg or IntegratorConfig()
    psi = _reference(field0, reference)
    overlap = np.kron(psi.conj(), psi)
    slot = nominal_slot(params, kind, tau) + spec.free_window
    window = (ProtocolSchedule(kind, (Segment(FREE, spec.free_window),))
              if spec.free_window > 0 else None)

    n = spec.n_atoms
    rho11 = np.empty(n + 1)
    rho10 = np.empty(n + 1, dtype=complex)
    fid = np.empty(n + 1)
    v = field0.reshape(-1).copy()
    rho = field0.copy()

    def record(i, vec):
        rho11[i] = vec[c + 1].real
        rho10[i] = vec[c]
        fid[i] = float(np.real(overlap @ vec))

    record(0, v)
    leak = float(np.real(np.diag(field0))[2:].sum())
    n_present = n_clamped = 0
    for i in range(1, n + 1):
        atom = sample_atom(spec, geom, kind, rng)
        n_present += atom.present
        if engine == "numeric":
            sched = build_schedule(atom, params, kind, tau, warn=False)
            n_clamped += sched.clamped
            v = atom_transfer_map(sched, params, cfg) @ v
            if window is not None:
                v = atom_transfer_map(window, params, cfg) @ v
            m = v.reshape(c, c)
            v = ((m + m.conj().T) / 2).reshape(-1)
            leak = max(leak, float(np.real(np.diag(v.reshape(c, c)))[2:].sum()))
        else:
            factor, deph = analytic_slot_factors(atom, params, geom, kind, spec.v0,
                                                 spec.free_window, tau, f_model)
            rho = apply_atom_analytic(rho, factor, deph)
            v = rho.reshape(-1)
        record(i, v)
    if n_clamped:
        warnings.warn(f"{n_clamped} atom(s) had pulse durations clamped at 0", ClampedTimingWarning,
                      stacklevel=3)
    return RunResult(times=np.arange(n + 1) * slot, rho11=rho11, rho10=rho10, fidelity=fid,
                     final=v.reshape(c, c).copy(), leakage_max=leak, n_present=n_present,
                     n_clamped=n_clamped)


def run_beam(field0: np.ndarray, spec: BeamSpec, geom: Geometry, params: PhysicalParams,
             kind: str, engine: str = "numeric", cfg: IntegratorConfig | None = None,
             reference=None, tau: float | None = None,
             f_model: cf.FModel = cf.zero_f) -> RunResult:
    """March ``spec.n_atoms`` beam slots through the cavity.

    Fidelity is measured against ``reference`` (a field state vector), or
    against the dominant eigenvector of ``field0`` when omitted. Times are
    the nominal slot boundaries; the beam is a train of equal slots.
    """
    _check_kind(kind)
    rng = np.random.default_rng(spec.seed)
    return _march(field0, spec, geom, params, kind, engine, cfg, reference, tau, f_model, rng)


# -- ensembles --------------------------------------------------------------

@dataclass
class DecayFit:
    rate: float
    intercept: float
    rate_stderr: float
    residual_rms: float
    n_points: int


def fit_decay(times, values) -> DecayFit:
    """Least-squares fit of log(values) = intercept - rate * t."""
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    ok = np.isfinite(y) & (y > 0)
    t, y = t[ok], y[ok]
    if t.size < 3 or np.ptp(t) == 0:
        raise FitDegenerate(f"need at least 3 distinct positive points, got {t.size}")
    logy = np.log(y)
    A = np.vstack([t, np.ones_like(t)]).T
    coef, *_ = np.linalg.lstsq(A, logy, rcond=None)
    resid = logy - A @ coef
    dof = max(t.size - 2, 1)
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.inv(A.T @ A)
    return DecayFit(rate=float(-coef[0]), intercept=float(coef[1]),
                    rate_stderr=float(math.sqrt(cov[0, 0])),
                    residual_rms=float(math.sqrt(np.mean(resid**2))), n_points=int(t.size))


@dataclass
class EnsembleResult:
    times: np.ndarray
    mean_rho11: np.ndarray
    mean_rho10: np.ndarray
    se_rho11: np.ndarray
    se_coherence: np.ndarray
    mean_fidelity: np.ndarray
    population_fit: DecayFit
    coherence_fit: DecayFit
    n_realizations: int

    @property
    def mean_coherence(self) -> np.ndarray:
        return np.abs(self.mean_rho10)


def _realization(args):
    field0, spec, geom, params, kind, engine, cfg, reference, tau, f_model, k = args
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed, spawn_key=(k,)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ClampedTimingWarning)
        return _march(field0, spec, geom, params, kind, engine, cfg, reference, tau, f_model, rng)


def monte_carlo_ensemble(field0: np.ndarray, spec: BeamSpec, geom: Geometry, params: PhysicalParams,
                         kind: str, n_realizations: int, cfg: IntegratorConfig | None = None,
                         engine: str = "numeric", reference=None, tau: float | None = None,
                         f_model: cf.FModel = cf.zero_f, workers: int = 1) -> EnsembleResult:
    """Average independent beam realizations and fit exponential decay rates.

    Realization ``k`` draws from ``SeedSequence(spec.seed, spawn_key=(k,))``,
    so results are identical whether run serially or across ``workers``
    processes, and the first ``n`` realizations of a larger ensemble are the
    same as those of a smaller one. Rates: the population fit estimates
    2 kappa_bar and the coherence fit kappa_bar + F_bar.
    """
    _check_kind(kind)
    if n_realizations < 1:
        raise ValueError("n_realizations must be >= 1")
    jobs = [(field0, spec, geom, params, kind, engine, cfg, reference, tau, f_model, k)
            for k in range(n_realizations)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(_realization, jobs))
    else:
        runs = [_realization(j) for j in jobs]

    r11 = np.array([r.rho11 for r in runs])
    r10 = np.array([r.rho10 for r in runs])
    fid = np.array([r.fidelity for r in runs])
    n = n_realizations
    mean10 = r10.mean(axis=0)
    if n > 1:
        se11 = r11.std(axis=0, ddof=1) / math.sqrt(n)
        se10 = np.sqrt(np.sum(np.abs(r10 - mean10) ** 2, axis=0) / (n - 1)) / math.sqrt(n)
    else:
        se11 = np.zeros(r11.shape[1])
        se10 = np.zeros(r10.shape[1])
    times = runs[0].times
    return EnsembleResult(times=times, mean_rho11=r11.mean(axis=0), mean_rho10=mean10,
                          se_rho11=se11, se_coherence=se10, mean_fidelity=fid.mean(axis=0),
                          population_fit=fit_decay(times, r11.mean(axis=0)),
                          coherence_fit=fit_decay(times, np.abs(mean10)),
                          n_realizations=n)
