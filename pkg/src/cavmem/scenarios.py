"""Scenario runners: figure grids, parameter sweeps and custom beam runs.

Every scenario writes ``<scenario>.csv`` plus ``manifest.json`` into the
output directory. CSV files start with a ``# manifest_hash=...`` comment,
then a header row; numbers use 17 significant digits.
"""

from __future__ import annotations

import hashlib
import io
import json
import math
from pathlib import Path

import numpy as np

from . import __version__
from . import closed_form as cf
from . import config as C
from .beam import DISPERSIVE, PHASE_KICK, monte_carlo_ensemble, nominal_slot, run_beam


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def config_hash(scenario: str, cfg: dict) -> str:
    blob = json.dumps({"scenario": scenario, "config": C.jsonable(cfg)}, sort_keys=True,
                      separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def render_csv(columns, rows, manifest_hash: str) -> str:
    buf = io.StringIO()
    buf.write(f"# manifest_hash={manifest_hash}\n")
    buf.write(",".join(columns) + "\n")
    for row in rows:
        buf.write(",".join(fmt(v) for v in row) + "\n")
    return buf.getvalue()


# -- figure grids -----------------------------------------------------------

def gain_vs_density(cfg: dict, protocol: str):
    """Rows (lambda, gain) without velocity dispersion."""
    rows = []
    for lam in C.parse_grid(cfg["grid.lambda"], "grid.lambda"):
        p = C.closed_form_params(cfg, protocol, lam=lam, dv=0.0)
        g = cf.gain_kick(p) if protocol == PHASE_KICK else cf.gain_dispersive(p)
        rows.append((lam, g))
    return ("lambda", "gain"), rows


def gain_vs_density_dispersion(cfg: dict, protocol: str):
    rows = []
    for lam in C.parse_grid(cfg["grid.lambda"], "grid.lambda"):
        for dv in C.parse_grid(cfg["grid.dv"], "grid.dv"):
            p = C.closed_form_params(cfg, protocol, lam=lam, dv=dv)
            rep = cf.dwell_kick_dispersion(p) if protocol == PHASE_KICK else cf.dwell_dispersive_dispersion(p)
            rows.append((lam, dv, rep.gain, rep.Tr_p, rep.Tr_c, rep.inequality_lhs, rep.satisfied))
    return ("lambda", "dv", "gain_prime", "Tr_p", "Tr_c", "inequality_lhs", "inequality_satisfied"), rows


def fidelity_surface(cfg: dict, protocol: str):
    """Rows (dv, n_atoms, time, kappa_bar, F_bar, fidelity) at lambda = 1."""
    params = C.physical_params(cfg)
    slot = nominal_slot(params, protocol, C.tau(cfg, params) if protocol == DISPERSIVE else None)
    rows = []
    for dv in C.parse_grid(cfg["grid.dv"], "grid.dv"):
        p = C.closed_form_params(cfg, protocol, lam=1.0, dv=dv)
        rates = cf.effective_rates_kick(p) if protocol == PHASE_KICK else cf.effective_rates_dispersive(p)
        for n in C.parse_grid(cfg["grid.n_atoms"], "grid.n_atoms"):
            n = int(round(n))
            t = n * slot
            rows.append((dv, n, t, rates[0], rates[1], float(cf.fidelity_formula(rates[0], rates[1], t))))
    return ("dv", "n_atoms", "time", "kappa_bar", "F_bar", "fidelity"), rows


FIGURES = {
    "fig3": (gain_vs_density, PHASE_KICK),
    "fig5": (gain_vs_density, DISPERSIVE),
    "fig6": (gain_vs_density_dispersion, PHASE_KICK),
    "fig7": (gain_vs_density_dispersion, DISPERSIVE),
    "fig8": (fidelity_surface, PHASE_KICK),
    "fig9": (fidelity_surface, DISPERSIVE),
}


def figure_table(name: str, cfg: dict):
    func, protocol = FIGURES[name]
    return func(cfg, protocol)


# -- sweeps -----------------------------------------------------------------

def sweep_point(cfg: dict) -> float:
    """One closed-form quantity at the configured point."""
    protocol = cfg["sweep.protocol"] or cfg["protocol.kind"]
    quantity = cfg["sweep.quantity"]
    p = C.closed_form_params(cfg, protocol)
    if quantity == "gain":
        return cf.gain_kick(p) if protocol == PHASE_KICK else cf.gain_dispersive(p)
    rep = cf.dwell_kick_dispersion(p) if protocol == PHASE_KICK else cf.dwell_dispersive_dispersion(p)
    if quantity == "gain_prime":
        return rep.gain
    if quantity in ("Tr_p", "Tr_c"):
        return getattr(rep, quantity)
    rates = cf.effective_rates_kick(p) if protocol == PHASE_KICK else cf.effective_rates_dispersive(p)
    params = C.physical_params(cfg)
    slot = nominal_slot(params, protocol, C.tau(cfg, params) if protocol == DISPERSIVE else None)
    return float(cf.fidelity_formula(rates[0], rates[1], cfg["beam.n_atoms"] * slot))


def _coerce(key, value):
    if isinstance(C.DEFAULTS[key], int) and not isinstance(C.DEFAULTS[key], bool):
        return int(round(value))
    return float(value)


def sweep_table(cfg: dict):
    xkey, ykey = cfg["sweep.x"], cfg["sweep.y"]
    xs = C.parse_grid(cfg["sweep.x_values"], "sweep.x_values")
    ys = C.parse_grid(cfg["sweep.y_values"], "sweep.y_values") if ykey else np.array([np.nan])
    columns = (xkey,) + ((ykey,) if ykey else ()) + (cfg["sweep.quantity"],)
    rows = []
    for x in xs:
        for y in ys:
            point = dict(cfg)
            point[xkey] = _coerce(xkey, x)
            if ykey:
                point[ykey] = _coerce(ykey, y)
            C.validate_config(point)
            value = sweep_point(point)
            rows.append((point[xkey],) + ((point[ykey],) if ykey else ()) + (value,))
    return columns, rows


# -- custom beam runs -------------------------------------------------------

def custom_table(cfg: dict):
    params = C.physical_params(cfg)
    protocol = C.kind(cfg)
    field0, psi = C.initial_field(cfg)
    tau = C.tau(cfg, params) if protocol == DISPERSIVE else None
    args = (field0, C.beam_spec(cfg), C.geometry(cfg), params, protocol)
    n_real = cfg["run.n_realizations"]
    extra = {}
    if n_real == 1:
        res = run_beam(*args, engine=cfg["run.engine"], cfg=C.integrator(cfg), reference=psi,
                       tau=tau, f_model=C.f_model(cfg))
        columns = ("time", "rho11", "coherence", "fidelity")
        rows = list(zip(res.times, res.rho11, res.coherence, res.fidelity))
        extra = {"leakage_max": res.leakage_max, "n_present": res.n_present,
                 "n_clamped": res.n_clamped}
    else:
        ens = monte_carlo_ensemble(*args, n_realizations=n_real, cfg=C.integrator(cfg),
                                   engine=cfg["run.engine"], reference=psi, tau=tau,
                                   f_model=C.f_model(cfg), workers=cfg["run.workers"])
        columns = ("time", "rho11", "rho11_se", "coherence", "coherence_se", "fidelity")
        rows = list(zip(ens.times, ens.mean_rho11, ens.se_rho11, ens.mean_coherence,
                        ens.se_coherence, ens.mean_fidelity))
        extra = {"population_rate": ens.population_fit.rate,
                 "population_rate_stderr": ens.population_fit.rate_stderr,
                 "coherence_rate": ens.coherence_fit.rate,
                 "coherence_rate_stderr": ens.coherence_fit.rate_stderr,
                 "coherence_fit_residual_rms": ens.coherence_fit.residual_rms}
    return columns, rows, extra


# -- output -----------------------------------------------------------------

def write_outputs(out_dir, scenario: str, cfg: dict, tables: dict, extra: dict | None = None,
                  extra_files: dict | None = None) -> dict:
    """Write CSV tables and the manifest; return the manifest dict."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    h = config_hash(scenario, cfg)
    files = {}
    for name, (columns, rows) in tables.items():
        text = render_csv(columns, rows, h)
        path = out / f"{name}.csv"
        path.write_bytes(text.encode())
        files[path.name] = hashlib.sha256(text.encode()).hexdigest()
    for name, text in (extra_files or {}).items():
        (out / name).write_bytes(text.encode())
        files[name] = hashlib.sha256(text.encode()).hexdigest()
    manifest = {
        "scenario": scenario,
        "seed": cfg["seed"],
        "package_version": __version__,
        "config_hash": h,
        "config": C.jsonable(cfg),
        "files": files,
        "results": {k: (v if not isinstance(v, float) or math.isfinite(v) else str(v))
                    for k, v in (extra or {}).items()},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def run_scenario(scenario: str, cfg: dict, out_dir) -> dict:
    if scenario in FIGURES:
        return write_outputs(out_dir, scenario, cfg, {scenario: figure_table(scenario, cfg)})
    if scenario == "custom":
        columns, rows, extra = custom_table(cfg)
        return write_outputs(out_dir, scenario, cfg, {scenario: (columns, rows)}, extra)
    raise ValueError(f"unknown scenario {scenario!r}")


def run_sweep(cfg: dict, out_dir) -> dict:
    return write_outputs(out_dir, "sweep", cfg, {"sweep": sweep_table(cfg)})
