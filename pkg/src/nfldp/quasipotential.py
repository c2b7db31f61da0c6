"""Quasipotentials, multi-scale mode pinning and the scalar Kramers estimate."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .action import (DiscretePath, action_eval, minimize_action, noise_diagonal,
                     pinned_profile, relaxation_deviation)
from .errors import ConfigError, HorizonWarning

PROFILE_RTOL = 1e-3
PROFILE_ATOL = 1e-14


@dataclass
class QuasipotentialResult:
    value: float
    path: DiscretePath
    T_used: float
    T_profile: list
    converged: bool
    bracketed: bool = True   # False when the action still fell at the largest horizon

    def to_dict(self):
        return {"value": self.value, "T_used": self.T_used,
                "T_profile": [list(p) for p in self.T_profile], "converged": self.converged,
                "bracketed": self.bracketed}


def quasipotential(u_star, v, model, spectrum=None, T_grid=(2.5, 5.0, 10.0), M=200,
                   init="linear", **kwargs):
    """min over T in ``T_grid`` of the minimal action from ``u_star`` to ``v``.

    Each horizon is warm-started from the previous minimiser resampled in
    normalised time; ``M`` intervals are used for every horizon.  Warns when the
    profile is still decreasing (relative 1e-3) at the largest horizon.
    """
    T_grid = [float(T) for T in T_grid]
    if len(T_grid) < 3 or any(b <= a for a, b in zip(T_grid, T_grid[1:])):
        raise ConfigError("T_grid must be ascending with at least 3 values")
    profile, best, prev = [], None, None
    converged = True
    for T in T_grid:
        res = minimize_action(u_star, v, T, M, model, spectrum, init=init,
                              init_path=prev, **kwargs)
        prev = res.path
        profile.append((T, res.action.total))
        converged &= res.converged
        if best is None or res.action.total < best.action.total:
            best = res
    (_, a_prev), (_, a_last) = profile[-2], profile[-1]
    bracketed = not a_prev - a_last > PROFILE_RTOL * abs(a_prev) + PROFILE_ATOL
    if not bracketed:
        warnings.warn("action still decreasing at the largest horizon; the infimum over T "
                      "is not bracketed", HorizonWarning, stacklevel=2)
    return QuasipotentialResult(best.action.total, best.path, best.path.T, profile, converged,
                                bracketed)


def boundary_quasipotential(u_star, radius, model, spectrum=None, directions=None, **kwargs):
    """Smallest quasipotential over sampled points u_star + radius * d of the exit sphere.

    Defaults to the 2N coordinate directions.  Returns (value, point, all results).
    """
    u_star = np.asarray(u_star, float)
    n = u_star.size
    dirs = np.vstack([np.eye(n), -np.eye(n)]) if directions is None else np.atleast_2d(directions)
    dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    results = [quasipotential(u_star, u_star + radius * d, model, spectrum, **kwargs) for d in dirs]
    k = int(np.argmin([r.value for r in results]))
    return results[k].value, u_star + radius * dirs[k], results


def multiscale_truncate(minimizer, model, spectrum=None, tol=0.01, **kwargs):
    """Smallest mode prefix N_eff whose complement can be pinned to phi_0 e^{-alpha t}.

    For N_eff = 0, 1, ... the modes at positions >= N_eff are fixed to the
    relaxation profile started from the minimiser's initial values, the rest is
    re-minimised (warm start from ``minimizer``), and the first N_eff whose
    action differs from the unpinned minimum by less than ``tol`` (relative)
    is returned together with the per-mode deviations sup |phi' + alpha phi|.
    """
    path = minimizer.path if hasattr(minimizer, "path") else minimizer
    D = noise_diagonal(model, spectrum)
    full = action_eval(path, model, D).total
    dev = relaxation_deviation(path, model.alpha)
    n = path.n_modes
    pinned_all = pinned_profile(path.nodes[0], model.alpha, path.times)
    scan = []
    for n_eff in range(n + 1):
        if n_eff == n:
            value = full
        else:
            nodes = path.nodes.copy()
            nodes[:, n_eff:] = pinned_all[:, n_eff:]
            mask = np.zeros(nodes.shape, dtype=bool)
            mask[:, n_eff:] = True
            init = DiscretePath(path.times, nodes)
            res = minimize_action(nodes[0], nodes[-1], path.T, path.M, model, D,
                                  init_path=init, fixed_mask=mask, **kwargs)
            value = res.action.total
        change = abs(value - full) / max(abs(full), 1e-300)
        scan.append({"N_eff": n_eff, "action": value, "relative_change": change})
        if change < tol:
            return {"N_eff": n_eff, "full_action": full, "pinned_action": value,
                    "relative_change": change, "deviation": dev, "scan": scan}
    raise AssertionError("unreachable: the unpinned prefix always matches")


def kramers_scalar(potential, lambda0, epsilon, well="left"):
    """E[tau] ~ 2 pi / sqrt(|V''(s)| V''(u)) exp(2 (V(s) - V(u)) / (eps^2 lambda0^2)).

    ``potential`` needs V, dV, d2V and critical_points(); it must have two
    minima separated by one maximum.  ``well`` picks the starting minimum.
    """
    if not (lambda0 > 0 and epsilon > 0):
        raise ConfigError("lambda0 and epsilon must be > 0")
    cp = potential.critical_points()
    curv = np.array([float(potential.d2V(c)) for c in cp])
    pattern = [c > 0 for c in curv]
    if len(cp) != 3 or pattern != [True, False, True]:
        raise ConfigError("potential is not a double well (need minimum, maximum, minimum)")
    u = cp[0] if well == "left" else cp[2]
    k_u = curv[0] if well == "left" else curv[2]
    s, k_s = cp[1], curv[1]
    barrier = float(potential.V(s) - potential.V(u))
    if not barrier > 0:
        raise ConfigError("potential is not a double well (zero barrier)")
    prefactor = 2.0 * math.pi / math.sqrt(abs(k_s) * k_u)
    exponent = 2.0 * barrier / (epsilon ** 2 * lambda0 ** 2)
    return {"mean": prefactor * math.exp(exponent), "prefactor": prefactor,
            "barrier": barrier, "exponent": exponent,
            "minimum": float(u), "saddle": float(s)}
