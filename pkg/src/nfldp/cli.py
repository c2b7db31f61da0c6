"""
Batch front end: ``nfldp <command> --config run.json``.

Every run writes into its own directory: the expanded config, the command's
CSV/JSON outputs (each written atomically) and finally ``manifest.json`` with
checksums.  A directory without a manifest is an incomplete run.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import tempfile
import time
import traceback
import warnings
from importlib import metadata

import numpy as np

from .action import minimize_action
from .config import ExperimentConfig, load_config, validate
from .errors import ConfigError, HorizonWarning, NfldpError
from .model import (build_model, homogeneous_roots, mode_zero_coefficient, scalar_model,
                    scalar_reduction, stationary_solve)
from .noise import NoiseConfig
from .quasipotential import kramers_scalar, multiscale_truncate, quasipotential
from .simulate import (ExitExperiment, SimConfig, convergence_summary, exit_scaling_fit,
                       first_exit, galerkin_convergence, simulate)
from .spectral import build_basis, noise_spectrum_exponential

try:
    __version__ = metadata.version("artifact")
except metadata.PackageNotFoundError:
    __version__ = "0.0.0"


# -- output helpers -------------------------------------------------------------------------

def _atomic_write(path, data):
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"not JSON serialisable: {type(o)}")


def _json_bytes(obj):
    return (json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n").encode()


def _csv_bytes(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue().encode()


class RunWriter:
    def __init__(self, run_dir):
        self.run_dir = run_dir
        self.outputs = {}
        os.makedirs(run_dir, exist_ok=True)
        manifest = os.path.join(run_dir, "manifest.json")
        if os.path.exists(manifest):
            os.unlink(manifest)

    def write(self, name, data):
        _atomic_write(os.path.join(self.run_dir, name), data)
        self.outputs[name] = hashlib.sha256(data).hexdigest()

    def json(self, name, obj):
        self.write(name, _json_bytes(obj))

    def csv(self, name, header, rows):
        self.write(name, _csv_bytes(header, rows))

    def finish(self, cfg, wall):
        manifest = {"tool": "nfldp", "version": __version__, "command": cfg.command,
                    "config_sha256": cfg.digest(), "wall_time_s": wall,
                    "finished_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
                    "outputs": dict(sorted(self.outputs.items()))}
        _atomic_write(os.path.join(self.run_dir, "manifest.json"), _json_bytes(manifest))
        return manifest


# -- building blocks from the config ----------------------------------------------------------

def model_from_config(cfg):
    m, n = cfg.model, cfg.noise
    basis = build_basis(m["basis"]["d"], m["basis"]["cutoff"], m["basis"].get("index_set", "box"))
    basis = noise_spectrum_exponential(basis, n["xi"])
    return build_model(m["alpha"], m["gain"], m["kernel"], basis,
                       quadrature_order=m["quadrature_order"])


def noise_from_config(cfg, model):
    return NoiseConfig(model.basis, float(cfg.noise["epsilon"]), int(cfg.seed),
                       cfg.noise["rng_kind"])


def named_states(model):
    """Stationary states seeded from the constant-field roots, keyed lower/middle/upper."""
    kappa0 = float(model.kernel_matrix[0, 0])
    roots = homogeneous_roots(model.gain, kappa0, model.alpha) if model.gain.smooth else []
    states = []
    for U in roots:
        u0 = np.zeros(model.n_modes)
        u0[0] = mode_zero_coefficient(U, model.dim)
        states.append(stationary_solve(model, u0))
    names = ["lower", "middle", "upper"] if len(states) == 3 else \
        [f"state{k}" for k in range(len(states))]
    return dict(zip(names, states))


def _resolve_state(spec, model, states):
    if isinstance(spec, str):
        if spec not in states:
            raise ConfigError(f"no stationary state named {spec!r}; have {sorted(states)}")
        return states[spec].u_star.copy()
    u = np.asarray(spec, dtype=float)
    if u.shape != (model.n_modes,):
        raise ConfigError(f"state vectors must have length {model.n_modes}")
    return u


# -- commands ----------------------------------------------------------------------------------

def cmd_spectrum(cfg, out):
    model = model_from_config(cfg)
    b = model.basis
    rows = [{"index": list(i), "norm": float(nrm), "lambda_sq": float(ev), "lipschitz": float(L)}
            for i, nrm, ev, L in zip(b.indices, b.norms, b.eigenvalues, b.lipschitz)]
    out.json("spectrum.json", {"xi": cfg.noise["xi"], "partial_trace": b.partial_trace(),
                               "modes": rows})
    out.json("basis.json", b.to_dict())


def cmd_stationary(cfg, out):
    model = model_from_config(cfg)
    p = cfg.params
    if p["init"] == "homogeneous":
        states = list(named_states(model).items())
    else:
        inits = np.atleast_2d(np.asarray(p["init"], dtype=float))
        states = [(f"state{k}", stationary_solve(model, u, p["method"], p["tol"], p["max_iter"]))
                  for k, u in enumerate(inits)]
    out.json("stationary.json", {name: st.to_dict() for name, st in states})


def cmd_simulate(cfg, out):
    model = model_from_config(cfg)
    p = cfg.params
    states = named_states(model) if isinstance(p["initial"], str) else {}
    u0 = _resolve_state(p["initial"], model, states)
    sim = SimConfig(model, noise_from_config(cfg, model), p["dt"], p["t_end"], u0, p["scheme"])
    traj = simulate(sim, np.arange(p["n_paths"]), save_every=p["save_every"])
    rows = [[pid, t, *traj.states[k, j]] for j, pid in enumerate(traj.path_ids)
            for k, t in enumerate(traj.times)]
    out.csv("trajectory.csv", ["path_id", "t"] + [f"u{i}" for i in range(model.n_modes)], rows)
    out.json("trajectory_meta.json", {
        "seed": cfg.seed, "N": model.n_modes, "dt": p["dt"], "epsilon": cfg.noise["epsilon"],
        "sup_norm": traj.sup_norm(), "gronwall_envelope": traj.envelope,
        "within_envelope": bool(np.all(traj.sup_norm() <= traj.envelope))})


def cmd_convergence(cfg, out):
    model = model_from_config(cfg)
    p = cfg.params
    states = named_states(model) if isinstance(p["initial"], str) else {}
    u0 = _resolve_state(p["initial"], model, states)
    u0[1:] += p["perturbation"] * model.basis.lambdas[1:]
    rows = galerkin_convergence(model, noise_from_config(cfg, model), p["n_list"] + [model.n_modes],
                                p["t_end"], p["dt"], u0, seeds=[cfg.seed + s for s in p["seeds"]],
                                scheme=p["scheme"])
    keys = ["seed", "N", "N_ref", "l2", "sup", "envelope", "ratio"]
    out.csv("convergence.csv", keys, [[r[k] for k in keys] for r in rows])
    out.json("convergence_summary.json", convergence_summary(rows))


def _exit_setup(model, p, scalar):
    """Center, radius and the epsilon ladder with horizons."""
    states = named_states(model)
    if not {"lower", "middle"} <= set(states):
        raise ConfigError("exit experiments need a bistable model (three homogeneous states)")
    center, mid = states["lower"], states["middle"]
    radius = p["radius_fraction"] * float(np.linalg.norm(mid.u_star - center.u_star))
    eps_list = p.get("epsilons")
    ladder = []
    if eps_list is None or scalar:
        pot = scalar_reduction(model)
        lam0 = float(model.basis.lambdas[0])
        barrier = kramers_scalar(pot, lam0, 1.0)["barrier"]
        for ratio in p["ratios"]:
            eps = math.sqrt(2.0 * barrier / ratio) / lam0
            kr = kramers_scalar(pot, lam0, eps)
            ladder.append((eps, kr, p.get("t_max") or p["t_max_factor"] * kr["mean"]))
    else:
        ladder = [(float(e), None, p.get("t_max") or 1000.0) for e in eps_list]
    return center, radius, ladder


def cmd_exit_times(cfg, out):
    model = model_from_config(cfg)
    p = cfg.params
    center, radius, ladder = _exit_setup(model, p, scalar=False)
    noise = noise_from_config(cfg, model)
    rows, taus, cens = [], [], []
    for eps, _, t_max in ladder:
        exp = ExitExperiment(center, radius, (eps,), p["n_paths"], t_max, p["dt"])
        tau, c = first_exit(exp, model, noise, eps, p["scheme"], cfg.threads)
        taus.append(tau)
        cens.append(c)
        rows += [[eps, k, t, int(ck)] for k, (t, ck) in enumerate(zip(tau, c))]
    out.csv("exits.csv", ["epsilon", "path_id", "tau", "censored"], rows)
    fit = exit_scaling_fit([e for e, _, _ in ladder], taus, cens)
    out.json("exit_summary.json", {"radius": radius, "table": fit["table"],
                                   "extrapolated": fit["intercept"], "ci": fit["ci"]})


def cmd_action(cfg, out):
    model = model_from_config(cfg)
    p = cfg.params
    states = named_states(model)
    start = _resolve_state(p["start"], model, states)
    end = _resolve_state(p["end"], model, states)
    res = minimize_action(start, end, p["T"], p["M"], model, init=p["init"], method=p["method"],
                          tol=p["tol"], max_iter=p["max_iter"])
    out.csv("path.csv", ["t"] + [f"phi{i}" for i in range(model.n_modes)], res.path.to_rows())
    a1, a2, a3 = res.action.terms
    out.json("action.json", {"total": res.action.total, "a1": a1, "a2": a2, "a3": a3,
                             "converged": res.converged, "iterations": res.n_iter,
                             "grad_norm": res.grad_norm})


def cmd_quasipotential(cfg, out):
    model = model_from_config(cfg)
    p = cfg.params
    states = named_states(model)
    start = _resolve_state(p["start"], model, states)
    end = _resolve_state(p["end"], model, states)
    with warnings.catch_warnings():
        # reported as "bracketed" in the JSON instead
        warnings.simplefilter("ignore", HorizonWarning)
        res = quasipotential(start, end, model, T_grid=p["T_grid"], M=p["M"], init=p["init"])
    report = res.to_dict()
    report["N_eff"] = None
    if p["multiscale"]:
        ms = multiscale_truncate(res.path, model, tol=p["multiscale_tol"])
        report["N_eff"] = ms["N_eff"]
        report["multiscale"] = {k: ms[k] for k in ("full_action", "pinned_action",
                                                   "relative_change", "deviation", "scan")}
    out.csv("path.csv", ["t"] + [f"phi{i}" for i in range(model.n_modes)], res.path.to_rows())
    out.json("quasipotential.json", report)


def cmd_kramers_compare(cfg, out):
    model = scalar_model(model_from_config(cfg))
    p = cfg.params
    center, radius, ladder = _exit_setup(model, p, scalar=True)
    noise = noise_from_config(cfg, model)
    rows = []
    for eps, kr, t_max in ladder:
        exp = ExitExperiment(center, radius, (eps,), p["n_paths"], t_max, None)
        tau, c = first_exit(exp, model, noise, eps, p["scheme"], cfg.threads)
        fit_mean = float(np.sum(tau) / max(1, np.sum(~c)))
        rows.append({"epsilon": eps, "exponent": kr["exponent"], "kramers_mean": kr["mean"],
                     "mc_mean": fit_mean, "ratio": fit_mean / kr["mean"],
                     "n_censored": int(c.sum())})
    keys = list(rows[0])
    out.csv("kramers.csv", keys, [[r[k] for k in keys] for r in rows])
    out.json("kramers_summary.json", {"radius": radius, "rows": rows,
                                      "within_factor_3": all(1 / 3 <= r["ratio"] <= 3 for r in rows)})


COMMANDS = {
    "spectrum": cmd_spectrum,
    "stationary": cmd_stationary,
    "simulate": cmd_simulate,
    "convergence": cmd_convergence,
    "exit-times": cmd_exit_times,
    "action": cmd_action,
    "quasipotential": cmd_quasipotential,
    "kramers-compare": cmd_kramers_compare,
}


def run_dir_for(cfg: ExperimentConfig):
    return os.path.join(cfg.output_dir, f"{cfg.command}-{cfg.digest()[:12]}")


def run(cfg, run_dir=None):
    """Execute one config; returns (run_dir, manifest)."""
    run_dir = run_dir or run_dir_for(cfg)
    out = RunWriter(run_dir)
    t0 = time.perf_counter()
    out.write("config.json", cfg.serialize().encode() + b"\n")
    COMMANDS[cfg.command](cfg, out)
    return run_dir, out.finish(cfg, time.perf_counter() - t0)


def _origin(exc):
    tb = exc.__traceback__
    name = "nfldp"
    while tb is not None:
        mod = tb.tb_frame.f_globals.get("__name__", "")
        if mod.startswith("nfldp."):
            name = mod
        tb = tb.tb_next
    return name


def main(argv=None):
    parser = argparse.ArgumentParser(prog="nfldp", description=__doc__.strip().splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="JSON experiment config")
    parser.add_argument("--output-dir", help="parent directory for the run directory")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--threads", type=int, help="worker threads for Monte Carlo paths")
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, args.command)
        if args.output_dir is not None:
            cfg.output_dir = args.output_dir
        if args.seed is not None:
            cfg.seed = args.seed
        if args.threads is not None:
            cfg.threads = args.threads
        validate(cfg)
        run_dir, _ = run(cfg)
    except NfldpError as exc:
        print(f"nfldp: error in {_origin(exc)} ({type(exc).__name__}): {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"nfldp: I/O error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # any other failure inside a numerical module
        traceback.print_exc()
        print(f"nfldp: error in {_origin(exc)}: {exc}", file=sys.stderr)
        return 3
    print(run_dir)
    return 0


if __name__ == "__main__":
    sys.exit(main())
