"""
Discrete Freidlin-Wentzell action of the Galerkin system

    I(phi) = 1/2 int_0^T <phi' - b(phi), phi' - b(phi)>_D dt,   <a, c>_D = a^T D^-1 c,

with b the Galerkin drift and D = diag(lambda_i^2).  A path is piecewise
linear on a uniform grid; on interval k

    r_k = (phi_{k+1} - phi_k) / h - (b(phi_k) + b(phi_{k+1})) / 2,
    I   = h/2 sum_k r_k^T D^-1 r_k.

Splitting b = -alpha phi + KF(phi) inside r_k gives the three-term form
a1 - 2 a2 + a3 exactly, interval by interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize

from .errors import ConfigError
from .model import drift, drift_vjp, nemytskii_coeffs


@dataclass(frozen=True)
class DiscretePath:
    times: np.ndarray
    nodes: np.ndarray
    fixed_start: bool = True
    fixed_end: bool = True

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        x = np.asarray(self.nodes, dtype=float)
        if x.ndim != 2 or x.shape[0] != t.size or t.size < 2:
            raise ConfigError("path needs nodes of shape (M + 1, N) matching times")
        h = np.diff(t)
        if np.any(h <= 0) or np.ptp(h) > 1e-9 * h.mean():
            raise ConfigError("path times must be uniform and increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "nodes", x)

    @property
    def h(self):
        return float(self.times[1] - self.times[0])

    @property
    def T(self):
        return float(self.times[-1] - self.times[0])

    @property
    def M(self):
        return self.times.size - 1

    @property
    def n_modes(self):
        return self.nodes.shape[1]

    @classmethod
    def linear(cls, start, end, T, M):
        s = np.linspace(0.0, 1.0, M + 1)[:, None]
        nodes = (1 - s) * np.asarray(start, float) + s * np.asarray(end, float)
        return cls(np.linspace(0.0, T, M + 1), nodes)

    @classmethod
    def from_function(cls, fn, T, M):
        t = np.linspace(0.0, T, M + 1)
        return cls(t, np.array([fn(s) for s in t]))

    def resample(self, T, M):
        """Same shape in normalised time s = t / T on a new grid."""
        s_old = (self.times - self.times[0]) / self.T
        s_new = np.linspace(0.0, 1.0, M + 1)
        nodes = np.column_stack([np.interp(s_new, s_old, self.nodes[:, i])
                                 for i in range(self.n_modes)])
        return DiscretePath(np.linspace(0.0, T, M + 1), nodes, self.fixed_start, self.fixed_end)

    def to_rows(self):
        return np.column_stack([self.times, self.nodes])


@dataclass
class ActionValue:
    total: float
    terms: tuple
    per_interval: np.ndarray = field(repr=False)


def noise_diagonal(model, spectrum=None):
    """D = diag(lambda_i^2) for the retained modes; zero entries are rejected."""
    lam_sq = model.basis.eigenvalues if spectrum is None else spectrum
    if lam_sq is None:
        raise ConfigError("action needs a noise spectrum")
    lam_sq = np.asarray(lam_sq, dtype=float)[:model.n_modes]
    if lam_sq.size != model.n_modes:
        raise ConfigError(f"spectrum must have {model.n_modes} entries")
    if np.any(lam_sq <= 0):
        bad = int(np.flatnonzero(lam_sq <= 0)[0])
        raise ConfigError(f"noise eigenvalue of mode {model.basis.indices[bad]} is zero; "
                          "the action is infinite along that direction")
    return lam_sq


def _residuals(nodes, h, model):
    b = drift(nodes, model)
    return np.diff(nodes, axis=0) / h - 0.5 * (b[:-1] + b[1:])


def action_eval(path, model, spectrum=None):
    """Total action, three-term split and per-interval contributions."""
    D = noise_diagonal(model, spectrum)
    h = path.h
    x = path.nodes
    r = _residuals(x, h, model)
    per = 0.5 * h * np.sum(r * r / D, axis=1)
    a1, a2, a3 = action_three_terms(path, model, spectrum)
    return ActionValue(float(per.sum()), (a1, a2, a3), per)


def action_three_terms(path, model, spectrum=None):
    """Time integrals of a1 = <phi'+alpha phi, phi'+alpha phi>_D, a2 = <phi'+alpha phi, KF>_D
    and a3 = |KF / lambda|^2, on the same interval rule as the action."""
    D = noise_diagonal(model, spectrum)
    h = path.h
    x = path.nodes
    p = np.diff(x, axis=0) / h + model.alpha * 0.5 * (x[:-1] + x[1:])
    kf = nemytskii_coeffs(x, model)
    q = 0.5 * (kf[:-1] + kf[1:])
    a1 = h * float(np.sum(p * p / D))
    a2 = h * float(np.sum(p * q / D))
    kt = q / np.sqrt(D)
    a3 = h * float(np.sum(kt * kt))
    return a1, a2, a3


def action_gradient(path, model, spectrum=None):
    """Exact gradient of the discrete action with respect to every node, (M + 1, N).

    grad_j = D^-1 (r_{j-1} - r_j) - h/2 J_j^T D^-1 (r_{j-1} + r_j), with r_{-1} = r_M = 0
    and J the drift Jacobian (applied as a vector-Jacobian product).
    Callers drop the rows of fixed nodes.
    """
    if not model.gain.smooth:
        raise ConfigError(f"action gradient needs a smooth gain; {model.gain.kind!r} is not")
    D = noise_diagonal(model, spectrum)
    h = path.h
    x = path.nodes
    r = _residuals(x, h, model) / D
    M = path.M
    left = np.zeros_like(x)    # D^-1 r_{j-1}
    right = np.zeros_like(x)   # D^-1 r_j
    left[1:] = r
    right[:M] = r
    return (left - right) - 0.5 * h * drift_vjp(x, left + right, model)


@dataclass
class MinimizeResult:
    path: DiscretePath
    action: ActionValue
    converged: bool
    n_iter: int
    grad_norm: float
    history: list


def heteroclinic_guess(start, end, T, M, model, push=1e-3):
    """Time-reversed relaxation from slightly past ``end`` towards ``start``, endpoint-corrected."""
    start = np.asarray(start, float)
    end = np.asarray(end, float)
    t = np.linspace(0.0, T, M + 1)
    h = T / M
    sub = 20
    x = end + push * (start - end)
    traj = [x]
    for _ in range(M):
        for _ in range(sub):
            x = x + (h / sub) * drift(x, model)
        traj.append(x)
    rev = np.array(traj[::-1])
    s = (t / T)[:, None]
    nodes = rev + (1 - s) * (start - rev[0]) + s * (end - rev[-1])
    return DiscretePath(t, nodes)


def minimize_action(start, end, T, M, model, spectrum=None, init="linear", method="lbfgs",
                    tol=1e-8, max_iter=5000, init_path=None, fixed_mask=None):
    """Local minimiser of the discrete action with fixed end points.

    ``method`` is 'lbfgs' (quasi-Newton) or 'gd' (steepest descent with Armijo
    backtracking).  Both only accept steps that lower the action.  Work is done
    in the scaled coordinates psi = phi / lambda.  ``fixed_mask`` (M + 1, N)
    pins additional node entries at their initial values.
    """
    if not (T > 0 and M > 0):
        raise ConfigError("T and M must be > 0")
    start = np.asarray(start, float)
    end = np.asarray(end, float)
    if not (np.all(np.isfinite(start)) and np.all(np.isfinite(end))):
        raise ConfigError("end points must be finite")
    D = noise_diagonal(model, spectrum)
    lam = np.sqrt(D)
    if init_path is not None:
        path0 = init_path if (init_path.M == M and abs(init_path.T - T) < 1e-12) \
            else init_path.resample(T, M)
        nodes = path0.nodes.copy()
        if fixed_mask is None:
            nodes[0], nodes[-1] = start, end
    elif init == "linear":
        nodes = DiscretePath.linear(start, end, T, M).nodes
    elif init == "heteroclinic-guess":
        nodes = heteroclinic_guess(start, end, T, M, model).nodes
    else:
        raise ConfigError(f"unknown init {init!r}")
    times = np.linspace(0.0, T, M + 1)
    free = np.ones(nodes.shape, dtype=bool)
    free[0] = free[-1] = False
    if fixed_mask is not None:
        free &= ~np.asarray(fixed_mask, dtype=bool)
    base = nodes.copy()
    scale = np.broadcast_to(lam, nodes.shape)[free]

    def unpack(z):
        x = base.copy()
        x[free] = z * scale
        return x

    def fun(z):
        path = DiscretePath(times, unpack(z))
        x = path.nodes
        r = _residuals(x, path.h, model)
        val = 0.5 * path.h * float(np.sum(r * r / D))
        g = action_gradient(path, model, D)[free] * scale
        return val, g

    z0 = nodes[free] / scale
    history = []
    if z0.size == 0:
        path = DiscretePath(times, base)
        return MinimizeResult(path, action_eval(path, model, D), True, 0, 0.0,
                              [action_eval(path, model, D).total])
    if method == "lbfgs":
        history.append(fun(z0)[0])
        res = minimize(fun, z0, jac=True, method="L-BFGS-B",
                       callback=lambda zk: history.append(fun(zk)[0]),
                       options={"maxiter": max_iter, "gtol": tol, "ftol": 1e-15,
                                "maxcor": 30, "maxls": 50})
        z, n_iter = res.x, res.nit
        gnorm = float(np.max(np.abs(fun(z)[1])))
        converged = gnorm < tol or bool(res.success)
    elif method == "gd":
        z, n_iter, gnorm, converged = _gradient_descent(fun, z0, tol, max_iter, history)
    else:
        raise ConfigError(f"unknown method {method!r}")
    path = DiscretePath(times, unpack(z))
    return MinimizeResult(path, action_eval(path, model, D), converged, int(n_iter), gnorm, history)


def _gradient_descent(fun, z, tol, max_iter, history, c1=1e-4):
    val, g = fun(z)
    history.append(val)
    step = 1.0
    for it in range(max_iter):
        gnorm = float(np.max(np.abs(g)))
        if gnorm < tol:
            return z, it, gnorm, True
        gg = float(g @ g)
        while step > 1e-16:
            trial = z - step * g
            v_trial, g_trial = fun(trial)
            if v_trial <= val - c1 * step * gg:
                break
            step *= 0.5
        else:
            return z, it, gnorm, False
        z, val, g = trial, v_trial, g_trial
        history.append(val)
        step *= 2.0
    gnorm = float(np.max(np.abs(g)))
    return z, max_iter, gnorm, gnorm < tol


def with_fixed_modes(path, modes, values):
    """Copy of ``path`` with the given mode columns replaced by ``values`` (M + 1, k)."""
    nodes = path.nodes.copy()
    nodes[:, list(modes)] = values
    return replace(path, nodes=nodes)


def pinned_profile(phi0, alpha, times):
    """phi_t = phi_0 e^{-alpha t} for each column of phi0."""
    return np.exp(-alpha * np.asarray(times))[:, None] * np.asarray(phi0)[None, :]


def relaxation_deviation(path, alpha):
    """dev_i = max over intervals of the discrete value of |phi_i' + alpha phi_i|.

    Uses alpha (phi_{k+1} - e^{-alpha h} phi_k) / (1 - e^{-alpha h}), which is exact
    whenever phi' + alpha phi is constant on the interval; in particular it
    vanishes for phi_t = phi_0 e^{-alpha t}.
    """
    x = path.nodes
    a = math.exp(-alpha * path.h)
    return np.max(np.abs(alpha * (x[1:] - a * x[:-1]) / (1.0 - a)), axis=0)


__all__ = [
    "DiscretePath", "ActionValue", "MinimizeResult", "noise_diagonal", "action_eval",
    "action_three_terms", "action_gradient", "minimize_action", "heteroclinic_guess",
    "pinned_profile", "relaxation_deviation", "with_fixed_modes",
]
