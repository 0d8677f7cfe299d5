"""Operators and states for a two-level atom coupled to a truncated cavity mode.

Basis ordering is fixed: atom index ``{e: 0, g: 1}`` tensored with the Fock
index ``0 .. fock_cutoff - 1``, so the joint index of ``|atom, n>`` is
``atom * fock_cutoff + n``. Units are hbar = 1 and all frequencies are in
rad/s. Hamiltonians are written in the interaction picture, so the bare
atomic and cavity frequencies never appear.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, ZeroDetuning

EXCITED = 0
GROUND = 1
_ATOM_INDEX = {"excited": EXCITED, "e": EXCITED, "ground": GROUND, "g": GROUND}


@dataclass(frozen=True)
class HilbertSpace:
    fock_cutoff: int = 3

    def __post_init__(self):
        if int(self.fock_cutoff) != self.fock_cutoff or self.fock_cutoff < 2:
            raise ValueError(f"fock_cutoff must be an integer >= 2, got {self.fock_cutoff}")

    atom_dim = 2

    @property
    def joint_dim(self) -> int:
        return 2 * self.fock_cutoff

    def index(self, atom, n: int) -> int:
        """Joint basis index of ``|atom, n>``; ``atom`` is 'e'/'g' or 0/1."""
        a = _ATOM_INDEX[atom] if isinstance(atom, str) else int(atom)
        if not 0 <= n < self.fock_cutoff:
            raise DimensionMismatch(f"Fock level {n} outside cutoff {self.fock_cutoff}")
        return a * self.fock_cutoff + n

    def ket(self, atom, n: int) -> np.ndarray:
        v = np.zeros(self.joint_dim, dtype=complex)
        v[self.index(atom, n)] = 1.0
        return v

    def field_ket(self, n: int) -> np.ndarray:
        v = np.zeros(self.fock_cutoff, dtype=complex)
        v[n] = 1.0
        return v


@dataclass(frozen=True)
class PhysicalParams:
    """Cavity and coupling constants.

    ``kappa`` is the rate exactly as it multiplies the dissipator of the
    cavity master equation, so photon population decays at ``2 * kappa``
    and the 0/1 coherence at ``kappa``. ``Omega`` defaults to ``2 * G``.
    """

    kappa: float
    G: float
    delta: float | None = None
    Omega: float | None = None
    nbar: float = 0.0
    fock_cutoff: int = 3

    def __post_init__(self):
        if self.kappa < 0:
            raise ValueError("kappa must be >= 0")
        if self.G <= 0:
            raise ValueError("G must be > 0")
        if self.nbar < 0:
            raise ValueError("nbar must be >= 0")
        if self.Omega is None:
            object.__setattr__(self, "Omega", 2.0 * self.G)
        elif self.Omega <= 0:
            raise ValueError("Omega must be > 0")
        HilbertSpace(self.fock_cutoff)

    @property
    def space(self) -> HilbertSpace:
        return HilbertSpace(self.fock_cutoff)

    @property
    def omega_dispersive(self) -> float:
        if not self.delta:
            raise ZeroDetuning("dispersive coupling needs a nonzero detuning delta")
        return self.G**2 / self.delta

    @property
    def pi_pulse(self) -> float:
        """Resonant pi-pulse duration pi / Omega."""
        return math.pi / self.Omega

    @property
    def tau_dispersive(self) -> float:
        """Dispersive duration pi / omega that undoes the resonant phase."""
        return math.pi / self.omega_dispersive


# -- field and atom factors -------------------------------------------------

def annihilation(space: HilbertSpace) -> np.ndarray:
    n = np.arange(1, space.fock_cutoff)
    return np.diag(np.sqrt(n).astype(complex), k=1)


def creation(space: HilbertSpace) -> np.ndarray:
    return annihilation(space).conj().T


def number(space: HilbertSpace) -> np.ndarray:
    return np.diag(np.arange(space.fock_cutoff).astype(complex))


SIGMA_Z = np.diag([1.0, -1.0]).astype(complex)
SIGMA_PLUS = np.array([[0, 1], [0, 0]], dtype=complex)  # |e><g|
SIGMA_MINUS = SIGMA_PLUS.T.copy()
PROJ_E = np.diag([1.0, 0.0]).astype(complex)
PROJ_G = np.diag([0.0, 1.0]).astype(complex)


def on_field(op: np.ndarray) -> np.ndarray:
    """Lift a field operator to the joint space (identity on the atom)."""
    return np.kron(np.eye(2), op)


def jc_interaction_hamiltonian(p: PhysicalParams, space: HilbertSpace | None = None) -> np.ndarray:
    """Resonant Jaynes-Cummings coupling G (a sigma+ + a^dag sigma-)."""
    space = space or p.space
    a = annihilation(space)
    h = p.G * (np.kron(SIGMA_PLUS, a) + np.kron(SIGMA_MINUS, a.conj().T))
    return h


def dispersive_hamiltonian(p: PhysicalParams, space: HilbertSpace | None = None) -> np.ndarray:
    """Effective dispersive coupling with the free part removed.

    omega [(a^dag a + 1)|e><e| - a^dag a |g><g|], omega = G^2 / delta.
    """
    space = space or p.space
    w = p.omega_dispersive
    n = number(space)
    eye = np.eye(space.fock_cutoff)
    return w * (np.kron(PROJ_E, n + eye) - np.kron(PROJ_G, n))


def kick_unitary(space: HilbertSpace) -> np.ndarray:
    """Instantaneous phase kick |e><e| - |g><g| on the atom."""
    return np.kron(SIGMA_Z, np.eye(space.fock_cutoff, dtype=complex))


# -- states -----------------------------------------------------------------

def pure_density(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def field_qubit(rho11: float, rho10: complex, space: HilbertSpace) -> np.ndarray:
    """Field density matrix with population ``rho11`` in |1> and coherence ``rho10``."""
    rho = np.zeros((space.fock_cutoff, space.fock_cutoff), dtype=complex)
    rho[1, 1] = rho11
    rho[0, 0] = 1.0 - rho11
    rho[1, 0] = rho10
    rho[0, 1] = np.conj(rho10)
    return rho


def superposition_state(space: HilbertSpace, phi: float = 0.0) -> np.ndarray:
    """(|0> + e^{i phi}|1>)/sqrt(2) as a field state vector."""
    psi = np.zeros(space.fock_cutoff, dtype=complex)
    psi[0] = 1.0
    psi[1] = np.exp(1j * phi)
    return psi / math.sqrt(2.0)


def embed_field_state(field: np.ndarray, atom_state="ground", space: HilbertSpace | None = None) -> np.ndarray:
    """Return |atom><atom| (x) field."""
    field = np.asarray(field, dtype=complex)
    if space is None:
        space = HilbertSpace(field.shape[0])
    if field.shape != (space.fock_cutoff, space.fock_cutoff):
        raise DimensionMismatch(
            f"field state has shape {field.shape}, expected {(space.fock_cutoff,) * 2}")
    atom = np.zeros((2, 2), dtype=complex)
    k = _ATOM_INDEX[atom_state] if isinstance(atom_state, str) else int(atom_state)
    atom[k, k] = 1.0
    return np.kron(atom, field)


def partial_trace_atom(joint: np.ndarray, space: HilbertSpace | None = None) -> np.ndarray:
    joint = np.asarray(joint)
    if space is None:
        if joint.shape[0] % 2:
            raise DimensionMismatch(f"joint dimension {joint.shape[0]} is odd")
        space = HilbertSpace(joint.shape[0] // 2)
    c = space.fock_cutoff
    if joint.shape != (2 * c, 2 * c):
        raise DimensionMismatch(f"joint state has shape {joint.shape}, expected {(2 * c,) * 2}")
    return np.einsum("aiaj->ij", joint.reshape(2, c, 2, c))


def state_fidelity(pure, rho: np.ndarray, atol: float = 1e-12) -> float:
    """<psi|rho|psi> for a normalized state vector psi."""
    psi = np.asarray(pure, dtype=complex)
    rho = np.asarray(rho)
    if rho.shape != (psi.size, psi.size):
        raise DimensionMismatch(f"state of size {psi.size} against rho of shape {rho.shape}")
    norm = np.vdot(psi, psi).real
    if abs(norm - 1.0) > 1e-9:
        raise ValueError(f"reference state is not normalized (norm^2 = {norm})")
    f = float(np.real(psi.conj() @ rho @ psi))
    if f < -atol or f > 1.0 + atol:
        raise ValueError(f"fidelity {f} outside [0, 1]; rho is not a density matrix")
    return min(max(f, 0.0), 1.0)


def check_density_matrix(rho: np.ndarray, atol: float = 1e-10, eig_tol: float = 1e-9) -> None:
    """Raise ValueError unless rho is Hermitian, unit-trace and positive."""
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise DimensionMismatch(f"density matrix must be square, got {rho.shape}")
    herm = np.max(np.abs(rho - rho.conj().T))
    if herm > atol:
        raise ValueError(f"not Hermitian (max deviation {herm:.3e})")
    tr = np.trace(rho).real
    if abs(tr - 1.0) > atol:
        raise ValueError(f"trace is {tr!r}")
    lo = np.linalg.eigvalsh((rho + rho.conj().T) / 2).min()
    if lo < -eig_tol:
        raise ValueError(f"negative eigenvalue {lo:.3e}")


def leakage(field: np.ndarray) -> float:
    """Population above Fock level 1."""
    d = np.real(np.diag(field))
    return float(d[2:].sum())


def principal_state(rho: np.ndarray) -> np.ndarray:
    """Eigenvector of rho with the largest eigenvalue, phase fixed so its
    largest component is real and positive."""
    w, v = np.linalg.eigh((rho + rho.conj().T) / 2)
    psi = v[:, -1]
    k = np.argmax(np.abs(psi))
    return psi * (abs(psi[k]) / psi[k])
