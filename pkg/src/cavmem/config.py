"""Flat dotted-key configuration and its translation into model objects.

A config file holds ``key = value`` lines (``#`` starts a comment). An
optional ``[section]`` header prefixes the keys below it, so

    [beam]
    lambda = 0.8

is the same as ``beam.lambda = 0.8``. Command-line ``--set`` overrides use
the same dotted names. A ``manifest.json`` written by a previous run is also
accepted: its ``config`` block is reloaded verbatim.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from . import closed_form as cf
from .beam import DISPERSIVE, KINDS, PHASE_KICK, BeamSpec, Geometry
from .errors import ConfigError
from .hilbert import PhysicalParams, field_qubit, HilbertSpace
from .lindblad import IntegratorConfig

PHOTON_DAMPING_TIME = 0.130
REALISTIC_KAPPA = 1.0 / (2.0 * PHOTON_DAMPING_TIME)
INTERACTION_TIME = 1.96e-5
V0_KICK = 510.0
V0_DISPERSIVE = 127.5

SCENARIOS = ("fig3", "fig5", "fig6", "fig7", "fig8", "fig9", "validate", "custom")

DEFAULTS: dict[str, object] = {
    "seed": 0,
    "physics.kappa": REALISTIC_KAPPA,
    "physics.nbar": 0.0,
    "physics.T": INTERACTION_TIME,
    "physics.G": None,
    "physics.Omega": None,
    "physics.delta": None,
    "physics.fock_cutoff": 3,
    "protocol.kind": PHASE_KICK,
    "protocol.tau": None,
    "protocol.f": 0.0,
    "beam.n_atoms": 100,
    "beam.lambda": 1.0,
    "beam.v0": None,
    "beam.dv": 0.0,
    "beam.velocity_dist": "uniform",
    "beam.free_window": 0.0,
    "geometry.a": 0.01,
    "geometry.b": None,
    "geometry.c": None,
    "geometry.d": None,
    "geometry.w0": 0.006,
    "field.rho11": 0.5,
    "field.phase": 0.0,
    "integrator.dt_max": None,
    "integrator.step_fraction": 0.01,
    "run.engine": "numeric",
    "run.n_realizations": 1,
    "run.workers": 1,
    "grid.lambda": "0:1:101",
    "grid.dv": "0:2:21",
    "grid.n_atoms": "0:3000:31",
    "sweep.protocol": None,
    "sweep.x": "beam.lambda",
    "sweep.x_values": "0:1:11",
    "sweep.y": None,
    "sweep.y_values": "",
    "sweep.quantity": "gain",
}

NONNEGATIVE = ("physics.kappa", "physics.nbar", "beam.dv", "beam.free_window", "geometry.a",
               "geometry.b", "geometry.c", "geometry.d", "geometry.w0", "beam.n_atoms")
POSITIVE = ("physics.T", "physics.G", "physics.Omega", "beam.v0", "integrator.dt_max",
            "protocol.tau", "run.n_realizations", "run.workers")


def parse_value(text: str):
    s = text.strip()
    low = s.lower()
    if low in ("none", "null", "auto"):
        return None
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def parse_text(text: str) -> dict:
    out, section = {}, ""
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if section:
            key = f"{section}.{key}"
        out[key] = parse_value(value)
    return out


def load_file(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if path.suffix == ".json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
        data = data.get("config", data)
        return {str(k): v for k, v in data.items()}
    return parse_text(text)


def parse_overrides(items) -> dict:
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip()] = parse_value(value)
    return out


def resolve(*layers: dict, seed: int | None = None) -> dict:
    """Merge layers over the defaults and validate every field."""
    cfg = dict(DEFAULTS)
    for layer in layers:
        for key, value in layer.items():
            if key not in DEFAULTS:
                raise ConfigError(f"unknown config key {key!r}", field=key)
            cfg[key] = value
    if seed is not None:
        cfg["seed"] = seed
    validate_config(cfg)
    return cfg


def _num(cfg, key):
    value = cfg[key]
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key} must be a number, got {value!r}", field=key)
    if not math.isfinite(value):
        raise ConfigError(f"{key} must be finite", field=key)
    return value


def validate_config(cfg: dict) -> None:
    for key in NONNEGATIVE:
        v = _num(cfg, key)
        if v is not None and v < 0:
            raise ConfigError(f"{key} must be >= 0, got {v}", field=key)
    for key in POSITIVE:
        v = _num(cfg, key)
        if v is not None and v <= 0:
            raise ConfigError(f"{key} must be > 0, got {v}", field=key)
    lam = _num(cfg, "beam.lambda")
    if not 0 <= lam <= 1:
        raise ConfigError(f"beam.lambda must lie in [0, 1], got {lam}", field="beam.lambda")
    rho11 = _num(cfg, "field.rho11")
    if not 0 <= rho11 <= 1:
        raise ConfigError("field.rho11 must lie in [0, 1]", field="field.rho11")
    _num(cfg, "field.phase")
    _num(cfg, "protocol.f")
    _num(cfg, "physics.delta")
    sf = _num(cfg, "integrator.step_fraction")
    if not 0 < sf <= 0.1:
        raise ConfigError("integrator.step_fraction must lie in (0, 0.1]", field="integrator.step_fraction")
    cutoff = cfg["physics.fock_cutoff"]
    if not isinstance(cutoff, int) or isinstance(cutoff, bool) or not 2 <= cutoff <= 16:
        raise ConfigError("physics.fock_cutoff must be an integer in [2, 16]", field="physics.fock_cutoff")
    for key in ("beam.n_atoms", "run.n_realizations", "run.workers", "seed"):
        if not isinstance(cfg[key], int) or isinstance(cfg[key], bool):
            raise ConfigError(f"{key} must be an integer", field=key)
    if cfg["seed"] < 0:
        raise ConfigError("seed must be >= 0", field="seed")
    if cfg["protocol.kind"] not in KINDS:
        raise ConfigError(f"protocol.kind must be one of {KINDS}", field="protocol.kind")
    if cfg["sweep.protocol"] not in (None,) + KINDS:
        raise ConfigError(f"sweep.protocol must be one of {KINDS}", field="sweep.protocol")
    if cfg["beam.velocity_dist"] not in ("uniform", "gaussian", "fixed"):
        raise ConfigError("beam.velocity_dist must be uniform, gaussian or fixed",
                          field="beam.velocity_dist")
    if cfg["run.engine"] not in ("numeric", "analytic"):
        raise ConfigError("run.engine must be numeric or analytic", field="run.engine")
    for key in ("grid.lambda", "grid.dv", "grid.n_atoms", "sweep.x_values", "sweep.y_values"):
        parse_grid(cfg[key], key)
    for key in ("sweep.x", "sweep.y"):
        if cfg[key] is not None and cfg[key] not in DEFAULTS:
            raise ConfigError(f"{key} names unknown parameter {cfg[key]!r}", field=key)
    if cfg["sweep.quantity"] not in SWEEP_QUANTITIES:
        raise ConfigError(f"sweep.quantity must be one of {SWEEP_QUANTITIES}", field="sweep.quantity")
    try:
        physical_params(cfg)
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(str(exc), field="physics") from exc


SWEEP_QUANTITIES = ("gain", "gain_prime", "Tr_p", "Tr_c", "fidelity")


def parse_grid(spec, key="grid") -> np.ndarray:
    """``start:stop:num`` (inclusive linspace), a comma list, or empty."""
    if spec is None:
        return np.array([])
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        return np.array([float(spec)])
    if isinstance(spec, (list, tuple)):
        return np.asarray(spec, dtype=float)
    s = str(spec).strip()
    if not s:
        return np.array([])
    try:
        if ":" in s:
            start, stop, num = s.split(":")
            n = int(num)
            if n < 0:
                raise ValueError
            return np.linspace(float(start), float(stop), n)
        return np.array([float(x) for x in s.split(",") if x.strip()])
    except ValueError:
        raise ConfigError(f"{key}: cannot parse grid {spec!r}", field=key) from None


# -- object builders --------------------------------------------------------

def physical_params(cfg: dict) -> PhysicalParams:
    G = cfg["physics.G"]
    omega = cfg["physics.Omega"]
    if G is None:
        G = omega / 2 if omega is not None else math.pi / cfg["physics.T"]
    delta = cfg["physics.delta"]
    if delta is None:
        delta = 3.0 * G
    return PhysicalParams(kappa=float(cfg["physics.kappa"]), G=float(G), delta=float(delta),
                          Omega=None if omega is None else float(omega),
                          nbar=float(cfg["physics.nbar"]), fock_cutoff=int(cfg["physics.fock_cutoff"]))


def kind(cfg: dict) -> str:
    return cfg["protocol.kind"]


def tau(cfg: dict, params: PhysicalParams | None = None) -> float:
    if cfg["protocol.tau"] is not None:
        return float(cfg["protocol.tau"])
    return (params or physical_params(cfg)).tau_dispersive


def v0(cfg: dict, protocol: str | None = None) -> float:
    if cfg["beam.v0"] is not None:
        return float(cfg["beam.v0"])
    return V0_KICK if (protocol or kind(cfg)) == PHASE_KICK else V0_DISPERSIVE


def geometry(cfg: dict) -> Geometry:
    return Geometry(a=cfg["geometry.a"], b=cfg["geometry.b"], c=cfg["geometry.c"],
                    d=cfg["geometry.d"], w0=cfg["geometry.w0"])


def beam_spec(cfg: dict) -> BeamSpec:
    return BeamSpec(n_atoms=cfg["beam.n_atoms"], density=float(cfg["beam.lambda"]), v0=v0(cfg),
                    dv=float(cfg["beam.dv"]), velocity_dist=cfg["beam.velocity_dist"],
                    free_window=float(cfg["beam.free_window"]), seed=cfg["seed"])


def integrator(cfg: dict) -> IntegratorConfig:
    return IntegratorConfig(dt_max=cfg["integrator.dt_max"], step_fraction=cfg["integrator.step_fraction"])


def f_model(cfg: dict) -> cf.FModel:
    value = float(cfg["protocol.f"])
    return cf.zero_f if value == 0 else cf.constant_f(value)


def initial_field(cfg: dict):
    """Pure field state sqrt(1 - p)|0> + e^{i phase} sqrt(p)|1> and its vector."""
    space = HilbertSpace(cfg["physics.fock_cutoff"])
    p, phase = float(cfg["field.rho11"]), float(cfg["field.phase"])
    psi = np.zeros(space.fock_cutoff, dtype=complex)
    psi[0] = math.sqrt(1 - p)
    psi[1] = math.sqrt(p) * np.exp(1j * phase)
    rho = field_qubit(p, psi[1] * np.conj(psi[0]), space)
    return rho, psi


def closed_form_params(cfg: dict, protocol: str | None = None, lam: float | None = None,
                       dv: float | None = None):
    """KickParams or DispersiveParams for the configured physics."""
    protocol = protocol or kind(cfg)
    params = physical_params(cfg)
    T = 2 * params.pi_pulse
    geom = geometry(cfg)
    lam = float(cfg["beam.lambda"]) if lam is None else float(lam)
    dv = float(cfg["beam.dv"]) if dv is None else float(dv)
    if protocol == PHASE_KICK:
        return cf.KickParams(kappa=params.kappa, Omega=params.Omega, T=T, lam=lam, a=geom.a,
                             c=geom.c, w0=geom.w0, v0=v0(cfg, protocol), dv=dv)
    if protocol == DISPERSIVE:
        return cf.DispersiveParams(kappa=params.kappa, Omega=params.Omega, T=T, tau=tau(cfg, params),
                                   lam=lam, a=geom.a, d=geom.d, w0=geom.w0, v0=v0(cfg, protocol),
                                   dv=dv, f_model=f_model(cfg))
    raise ConfigError(f"unknown protocol {protocol!r}", field="protocol.kind")


def jsonable(cfg: dict) -> dict:
    return {k: cfg[k] for k in sorted(cfg)}
