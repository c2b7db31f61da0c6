"""Experiment configuration: parsing, defaults, validation and serialisation (JSON)."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field

from .errors import ConfigError
from .gains import GAIN_KINDS
from .kernels import KERNEL_KINDS

COMMANDS = ("spectrum", "stationary", "simulate", "convergence", "exit-times", "action",
            "quasipotential", "kramers-compare")

MODEL_DEFAULTS = {
    "alpha": 1.0,
    "gain": {"kind": "tanh-sigmoid", "params": {"beta": 4.0, "theta": 0.5}},
    "kernel": {"kind": "spectral-coupled", "params": {"sign": 1.0}},
    "basis": {"d": 1, "cutoff": 8, "index_set": "box"},
    "quadrature_order": None,
}

NOISE_DEFAULTS = {"xi": 1.0, "epsilon": 0.1, "rng_kind": "philox"}

# command-specific parameters and their defaults; None means "derived at run time"
COMMAND_DEFAULTS = {
    "spectrum": {},
    "stationary": {"init": "homogeneous", "method": "newton", "tol": 1e-10, "max_iter": 200},
    "simulate": {"dt": 0.001, "t_end": 10.0, "initial": "lower", "n_paths": 1,
                 "scheme": "em", "save_every": 10},
    "convergence": {"dt": 0.001, "t_end": 5.0, "n_list": [4, 8, 16], "seeds": [0, 1, 2, 3, 4],
                    "initial": "lower", "perturbation": 0.3, "scheme": "em"},
    "exit-times": {"ratios": [3.0, 4.0, 5.0], "epsilons": None, "n_paths": 1000,
                   "radius_fraction": 0.98, "t_max_factor": 20.0, "t_max": None, "dt": None,
                   "scheme": "em"},
    "action": {"start": "lower", "end": "middle", "T": 10.0, "M": 200, "init": "linear",
               "method": "lbfgs", "tol": 1e-8, "max_iter": 5000},
    "quasipotential": {"start": "lower", "end": "middle", "T_grid": [2.5, 5.0, 10.0], "M": 200,
                       "init": "linear", "multiscale_tol": 0.01, "multiscale": True},
    "kramers-compare": {"ratios": [3.0, 4.0, 5.0], "n_paths": 1000, "radius_fraction": 0.98,
                        "t_max_factor": 20.0, "t_max": None, "scheme": "em"},
}

TOP_KEYS = {"command", "model", "noise", "params", "output_dir", "seed", "threads"}


def _merge(defaults, given, where):
    unknown = set(given) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    out = copy.deepcopy(defaults)
    for k, v in given.items():
        if isinstance(out.get(k), dict) and isinstance(v, dict) and k != "params":
            out[k] = _merge(out[k], v, f"{where}.{k}")
        else:
            out[k] = copy.deepcopy(v)
    return out


def _positive(value, name):
    if value is not None and not (isinstance(value, (int, float)) and value > 0):
        raise ConfigError(f"{name} must be > 0")


@dataclass
class ExperimentConfig:
    command: str
    model: dict
    noise: dict
    params: dict
    output_dir: str = "runs"
    seed: int = 0
    threads: int = 1
    raw_keys: list = field(default_factory=list, repr=False, compare=False)

    def to_dict(self):
        return {"command": self.command, "model": self.model, "noise": self.noise,
                "params": self.params, "output_dir": self.output_dir, "seed": self.seed,
                "threads": self.threads}

    def serialize(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def digest(self):
        """Hash of the fields that determine the numerical output."""
        payload = self.to_dict()
        payload.pop("output_dir")
        payload.pop("threads")
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def validate(cfg):
    m, n, p = cfg.model, cfg.noise, cfg.params
    _positive(m["alpha"], "alpha")
    _positive(n["xi"], "xi")
    if not (isinstance(n["epsilon"], (int, float)) and n["epsilon"] >= 0):
        raise ConfigError("epsilon must be >= 0")
    if m["gain"]["kind"] not in GAIN_KINDS:
        raise ConfigError(f"gain.kind must be one of {GAIN_KINDS}")
    if m["kernel"]["kind"] not in KERNEL_KINDS:
        raise ConfigError(f"kernel.kind must be one of {KERNEL_KINDS}")
    if m["basis"]["d"] not in (1, 2):
        raise ConfigError("basis.d must be 1 or 2")
    if not (isinstance(m["basis"]["cutoff"], int) and m["basis"]["cutoff"] >= 0):
        raise ConfigError("basis.cutoff must be a non-negative integer")
    if m["quadrature_order"] is not None and not m["quadrature_order"] >= 2:
        raise ConfigError("quadrature_order must be >= 2")
    for key in ("dt", "t_end", "T", "tol", "t_max_factor", "t_max", "radius_fraction"):
        if key in p:
            _positive(p[key], key)
    for key in ("n_paths", "M", "max_iter"):
        if key in p and not (isinstance(p[key], int) and p[key] > 0):
            raise ConfigError(f"{key} must be a positive integer")
    if "T_grid" in p and (len(p["T_grid"]) < 3 or any(t <= 0 for t in p["T_grid"])):
        raise ConfigError("T_grid needs at least 3 positive values")
    if not (isinstance(cfg.seed, int) and 0 <= cfg.seed < 2 ** 64):
        raise ConfigError("seed must be a non-negative 64-bit integer")
    if not (isinstance(cfg.threads, int) and cfg.threads >= 1):
        raise ConfigError("threads must be >= 1")
    return cfg


def parse_config(text, command=None):
    """Parse JSON text into a validated config with every default filled in."""
    try:
        data = json.loads(text) if isinstance(text, str) else copy.deepcopy(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(data) - TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown keys in config: {sorted(unknown)}")
    cmd = command or data.get("command")
    if cmd not in COMMANDS:
        raise ConfigError(f"command must be one of {COMMANDS}, got {cmd!r}")
    if data.get("command") not in (None, cmd):
        raise ConfigError(f"config is for command {data['command']!r}, not {cmd!r}")
    cfg = ExperimentConfig(
        command=cmd,
        model=_merge(MODEL_DEFAULTS, data.get("model", {}), "model"),
        noise=_merge(NOISE_DEFAULTS, data.get("noise", {}), "noise"),
        params=_merge(COMMAND_DEFAULTS[cmd], data.get("params", {}), "params"),
        output_dir=str(data.get("output_dir", "runs")),
        seed=data.get("seed", 0),
        threads=data.get("threads", 1),
        raw_keys=sorted(data),
    )
    return validate(cfg)


def load_config(path, command=None):
    with open(path) as fh:
        return parse_config(fh.read(), command)
