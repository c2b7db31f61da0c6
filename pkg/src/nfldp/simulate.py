"""
Time stepping of the Galerkin SDE

    du = [-alpha u + KF(u)] dt + eps lambda dbeta,

pathwise truncation experiments and first-exit statistics.  Paths are
vectorised: a state array has shape (n_paths, N) and path p always draws its
noise from its own stream, so results do not depend on how paths are
batched or distributed over threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import BlowUpError, CensoringError, ConfigError
from .model import drift, nemytskii_coeffs
from .noise import BLOCK, NoiseConfig, ou_decay, standard_normals, tail_amplitude

SCHEMES = ("em", "exponential")
# paths are stepped in batches of this fixed size; BLAS summation order can depend on the
# batch shape, so batches must not depend on the thread count
EXIT_BATCH = 1024


def kernel_norm(model):
    """Operator-norm bound of the kernel on the discrete L2 of the grid."""
    if model.aux is None:
        return float(np.max(np.abs(np.diag(model.kernel_matrix))))
    return float(np.linalg.norm(model.aux[1], 2))


@dataclass(frozen=True)
class SimConfig:
    model: object
    noise: NoiseConfig
    dt: float
    t_end: float
    initial: np.ndarray
    scheme: str = "em"

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError("dt must be > 0")
        if not self.dt < 1.0 / self.model.alpha:
            raise ConfigError("dt must be < 1/alpha")
        if not self.t_end >= self.dt:
            raise ConfigError("t_end must be >= dt")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.noise.n_modes != self.model.n_modes:
            raise ConfigError("noise and model must have the same number of modes")
        init = np.asarray(self.initial, dtype=float)
        if init.shape[-1] != self.model.n_modes:
            raise ConfigError(f"initial state must have length {self.model.n_modes}")
        object.__setattr__(self, "initial", init)

    @property
    def n_steps(self):
        return int(round(self.t_end / self.dt))


@dataclass
class Trajectory:
    """times (n_saved,), states (n_saved, n_paths, N); ``ou_sup`` is sup_t ||O_t|| per path."""

    times: np.ndarray
    states: np.ndarray
    path_ids: np.ndarray
    ou_sup: np.ndarray | None = None
    envelope: np.ndarray | None = None

    @property
    def final(self):
        return self.states[-1]

    def path(self, p=0):
        return self.states[:, p, :]

    def sup_norm(self):
        return np.sqrt(np.sum(self.states ** 2, axis=-1)).max(axis=0)


class _Stepper:
    """One scheme, with its deterministic and noise factors precomputed."""

    def __init__(self, model, noise, dt, scheme):
        self.model, self.dt, self.scheme = model, dt, scheme
        self.eps_lam = noise.epsilon * noise.lambdas
        if scheme == "em":
            self.decay, self.gain_factor, self.noise_scale = None, dt, math.sqrt(dt)
            self.ou_decay = 1.0 - model.alpha * dt
        else:
            a, s = ou_decay(model.alpha, dt)
            self.decay, self.gain_factor, self.noise_scale = a, -math.expm1(-model.alpha * dt) / model.alpha, s
            self.ou_decay = a

    def step(self, u, xi, k=None):
        if self.scheme == "em":
            out = em_step(u, self.model, self.dt, self.eps_lam * self.noise_scale * xi)
        else:
            out = (self.decay * u + self.gain_factor * nemytskii_coeffs(u, self.model)
                   + self.eps_lam * self.noise_scale * xi)
            if not np.all(np.isfinite(out)):
                raise BlowUpError(f"non-finite state at step {k}", step=k)
        return out


def em_step(u, model, dt, scaled_increment):
    """u + dt drift(u) + eps lambda dbeta (the increment is passed already scaled)."""
    with np.errstate(invalid="ignore", over="ignore"):
        out = np.asarray(u) + dt * drift(u, model) + scaled_increment
    if not np.all(np.isfinite(out)):
        raise BlowUpError("non-finite state (blow-up)")
    return out


def gronwall_envelope(model, u0_norm, eps, ou_sup, T):
    """Bound on sup_t ||u_t|| from the path's own noise:

        eps S + (||u0|| + T C (|f(0)| meas^(1/2) + L eps S)) exp(C L T),

    S = sup_t ||O_t||, C = kernel norm, L = Lipschitz constant of f.
    """
    C = kernel_norm(model)
    L = model.gain.lipschitz
    f0 = abs(float(model.gain(0.0)))
    meas = model.quadrature.measure
    with np.errstate(over="ignore", invalid="ignore"):
        growth = np.exp(C * L * T)
        return eps * ou_sup + (u0_norm + T * C * (f0 * math.sqrt(meas) + L * eps * ou_sup)) * growth


def simulate(cfg, path_ids=(0,), save_every=1):
    """Integrate all paths over [0, t_end], keeping every ``save_every``-th state."""
    model, noise = cfg.model, cfg.noise
    path_ids = np.atleast_1d(np.asarray(path_ids, dtype=np.int64))
    n_steps = cfg.n_steps
    stepper = _Stepper(model, noise, cfg.dt, cfg.scheme)
    u = np.broadcast_to(cfg.initial, (len(path_ids), model.n_modes)).astype(float)
    O = np.zeros_like(u)
    ou_sup = np.zeros(len(path_ids))
    saved, times = [u.copy()], [0.0]
    for start in range(0, n_steps, BLOCK):
        n = min(BLOCK, n_steps - start)
        if noise.epsilon > 0:
            xi = standard_normals(noise, n, path_ids, start)
        else:
            xi = np.zeros((n,) + u.shape)
        for j in range(n):
            k = start + j
            try:
                u = stepper.step(u, xi[j], k)
            except BlowUpError as exc:
                raise BlowUpError(f"non-finite state at step {k}", step=k) from exc
            O = stepper.ou_decay * O + noise.lambdas * stepper.noise_scale * xi[j]
            ou_sup = np.maximum(ou_sup, np.sqrt(np.sum(O * O, axis=-1)))
            if (k + 1) % save_every == 0 or k + 1 == n_steps:
                saved.append(u.copy())
                times.append((k + 1) * cfg.dt)
    u0_norm = np.sqrt(np.sum(np.broadcast_to(cfg.initial, u.shape) ** 2, axis=-1))
    env = gronwall_envelope(model, u0_norm, noise.epsilon, ou_sup, n_steps * cfg.dt)
    return Trajectory(np.array(times), np.stack(saved), path_ids, ou_sup, env)


# -- pathwise truncation ------------------------------------------------------------------

def galerkin_convergence(model, noise, n_list, T, dt, initial, seeds=(0,), scheme="em"):
    """sup_t errors of truncated runs against the full-size run, sharing noise streams.

    ``model``/``noise`` define the reference level N_ref = model.n_modes; each N in
    ``n_list`` reuses the same quadrature grid and the first N mode streams.  The
    truncated run starts from the first N coefficients of ``initial``.
    Returns one row per (seed, N) with the l2 (= L2) error, the grid sup error and
    the envelope eps b_N + ||(I - P^N) u0||.
    """
    n_ref = model.n_modes
    initial = np.asarray(initial, dtype=float)
    if sorted(n_list) != list(n_list) or max(n_list) > n_ref:
        raise ConfigError("N list must be ascending and not exceed the reference size")
    rows = []
    for seed in seeds:
        nz = NoiseConfig(noise.basis, noise.epsilon, int(seed), noise.rng_kind)
        ref = simulate(SimConfig(model, nz, dt, T, initial, scheme)).path(0)
        U_ref = model.field_values(ref)
        for n in n_list:
            sub = model.truncate(n)
            traj = simulate(SimConfig(sub, nz.truncate(n), dt, T, initial[:n], scheme)).path(0)
            diff = ref.copy()
            diff[:, :n] -= traj
            l2 = float(np.sqrt(np.sum(diff ** 2, axis=-1)).max())
            sup = float(np.abs(U_ref - sub.field_values(traj)).max())
            env = nz.epsilon * tail_amplitude(noise.basis, n, n_ref) + float(np.linalg.norm(initial[n:]))
            rows.append({"seed": int(seed), "N": n, "N_ref": n_ref, "l2": l2, "sup": sup,
                         "envelope": env, "ratio": l2 / env if env > 0 else 0.0})
    return rows


def convergence_summary(rows):
    """Per-seed strict decrease flags and the spread of error/envelope ratios per N."""
    seeds = sorted({r["seed"] for r in rows})
    out = {"decreasing_l2": {}, "decreasing_sup": {}, "ratio_spread": {}}
    for s in seeds:
        rs = [r for r in rows if r["seed"] == s and r["N"] < r["N_ref"]]
        rs.sort(key=lambda r: r["N"])
        out["decreasing_l2"][s] = all(a["l2"] > b["l2"] for a, b in zip(rs, rs[1:]))
        out["decreasing_sup"][s] = all(a["sup"] > b["sup"] for a, b in zip(rs, rs[1:]))
    for n in sorted({r["N"] for r in rows if r["N"] < r["N_ref"]}):
        ratios = np.array([r["ratio"] for r in rows if r["N"] == n])
        out["ratio_spread"][n] = float(ratios.max() / ratios.min()) if ratios.min() > 0 else math.inf
    return out


# -- first exits ----------------------------------------------------------------------------

@dataclass
class ExitExperiment:
    """Exit from the l2 ball of ``radius`` around a stable state."""

    center: object
    radius: float
    epsilons: tuple = ()
    n_paths: int = 100
    t_max: float = 1000.0
    dt: float | None = None
    samples: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.center.classification != "stable":
            raise ConfigError("exit experiments need a stable center")
        if not self.radius > 0:
            raise ConfigError("radius must be > 0")
        if not self.t_max > 0:
            raise ConfigError("t_max must be > 0")


def exit_dt(alpha, radius, eps, trace):
    """dt <= min(0.01 / alpha, radius^2 / (100 eps^2 sum lambda^2))."""
    cap = 0.01 / alpha
    if eps > 0 and trace > 0:
        cap = min(cap, radius ** 2 / (100.0 * eps ** 2 * trace))
    return cap


def validate_exit_ball(center, radius, model, T=None, n_dirs=16, tol=None, seed=0):
    """Deterministic runs from boundary points must return to the center.

    Uses the 2N coordinate directions plus ``n_dirs`` random ones.
    """
    n = model.n_modes
    rng = np.random.default_rng(seed)
    dirs = np.vstack([np.eye(n), -np.eye(n), rng.standard_normal((n_dirs, n))])
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    u = center.u_star + radius * dirs
    rate = max(-float(np.max(np.real(center.jacobian_eigs))), 1e-3)
    T = T if T is not None else 40.0 / rate
    dt = min(0.01 / model.alpha, 0.05 / rate)
    for _ in range(int(math.ceil(T / dt))):
        u = u + dt * drift(u, model)
    dist = np.linalg.norm(u - center.u_star, axis=1)
    tol = tol if tol is not None else 1e-3 * radius
    return bool(np.all(dist < tol)), float(dist.max())


def _exit_batch(center, radius, model, noise, dt, t_max, path_ids, scheme):
    n_steps = int(math.ceil(t_max / dt))
    stepper = _Stepper(model, noise, dt, scheme)
    P = len(path_ids)
    u = np.tile(center, (P, 1))
    tau = np.full(P, t_max)
    censored = np.ones(P, dtype=bool)
    alive = np.arange(P)
    r2 = radius * radius
    for start in range(0, n_steps, BLOCK):
        if alive.size == 0:
            break
        n = min(BLOCK, n_steps - start)
        xi = standard_normals(noise, n, path_ids[alive], start)
        ua = u[alive]
        pending = np.ones(alive.size, dtype=bool)
        # exited paths keep stepping until the block ends; compacting once per block
        # is cheaper than fancy indexing on every step
        for j in range(n):
            ua = stepper.step(ua, xi[j], start + j)
            hit = (np.sum((ua - center) ** 2, axis=-1) > r2) & pending
            if hit.any():
                tau[alive[hit]] = (start + j + 1) * dt
                censored[alive[hit]] = False
                pending &= ~hit
                if not pending.any():
                    break
        u[alive] = ua
        alive = alive[pending]
    return tau, censored


def first_exit(exp, model, noise, epsilon=None, scheme="em", threads=1, path_offset=0):
    """Exit times from the ball around ``exp.center`` for one noise level.

    Returns (tau, censored) ordered by path id; censored paths carry t_max.
    """
    eps = noise.epsilon if epsilon is None else float(epsilon)
    noise = noise.with_epsilon(eps)
    dt = exp.dt or exit_dt(model.alpha, exp.radius, eps, noise.basis.partial_trace())
    ids = np.arange(path_offset, path_offset + exp.n_paths, dtype=np.int64)
    center = np.asarray(exp.center.u_star, dtype=float)
    if eps == 0:
        return np.full(exp.n_paths, exp.t_max), np.ones(exp.n_paths, dtype=bool)
    chunks = [ids[i:i + EXIT_BATCH] for i in range(0, len(ids), EXIT_BATCH)]
    run = lambda c: _exit_batch(center, exp.radius, model, noise, dt, exp.t_max, c, scheme)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(c) for c in chunks]
    tau = np.concatenate([p[0] for p in parts])
    cens = np.concatenate([p[1] for p in parts])
    if np.all(cens):
        raise CensoringError(f"all paths censored at t_max={exp.t_max} for epsilon={eps}",
                             epsilon=eps)
    return tau, cens


def censored_mean(tau, censored):
    """Exponential-model mean with right censoring: total time / number of exits."""
    tau = np.asarray(tau, dtype=float)
    k = int(np.sum(~np.asarray(censored)))
    if k == 0:
        return math.inf, math.inf
    mean = float(np.sum(tau) / k)
    return mean, mean / math.sqrt(k)


def exit_scaling_fit(epsilons, taus, censored, max_censored=0.5, level=0.95):
    """Fit eps^2 ln E[tau] = Zbar + c eps^2 by weighted least squares.

    Returns the per-eps table and the intercept Zbar with its confidence band.
    """
    if len(epsilons) < 3:
        raise ConfigError("need at least 3 epsilon values")
    table = []
    for eps, tau, cens in zip(epsilons, taus, censored):
        cens = np.asarray(cens, dtype=bool)
        frac = float(np.mean(cens))
        if frac >= max_censored:
            raise CensoringError(f"censoring fraction {frac:.2f} at epsilon={eps}", epsilon=eps)
        mean, sem = censored_mean(tau, cens)
        e2 = eps * eps
        table.append({"epsilon": float(eps), "n": int(len(tau)), "n_censored": int(cens.sum()),
                      "mean": mean, "sem": sem, "eps2_log_mean": e2 * math.log(mean),
                      "eps2_log_mean_se": e2 * sem / mean})
    x = np.array([r["epsilon"] ** 2 for r in table])
    y = np.array([r["eps2_log_mean"] for r in table])
    s = np.array([max(r["eps2_log_mean_se"], 1e-300) for r in table])
    A = np.column_stack([np.ones_like(x), x]) / s[:, None]
    coef, *_ = np.linalg.lstsq(A, y / s, rcond=None)
    cov = np.linalg.inv(A.T @ A)
    z = stats.norm.ppf(0.5 + level / 2)
    se = math.sqrt(cov[0, 0])
    return {"table": table, "intercept": float(coef[0]), "slope": float(coef[1]),
            "intercept_se": se, "ci": (float(coef[0] - z * se), float(coef[0] + z * se))}


def exit_scaling(exp, model, noise, scheme="em", threads=1):
    """Run the epsilon ladder of ``exp`` and extrapolate eps^2 ln E[tau] to eps -> 0."""
    taus, cens = [], []
    for eps in exp.epsilons:
        tau, c = first_exit(exp, model, noise, eps, scheme, threads)
        exp.samples[float(eps)] = (tau, c)
        taus.append(tau)
        cens.append(c)
    return exit_scaling_fit(exp.epsilons, taus, cens)


def exponential_ks(tau, censored):
    """KS p-value of uncensored exit times against an exponential with the fitted mean."""
    t = np.asarray(tau)[~np.asarray(censored)]
    mean, _ = censored_mean(tau, censored)
    return float(stats.kstest(t, "expon", args=(0, mean)).pvalue)
