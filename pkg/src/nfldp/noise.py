"""
Truncated Q-Wiener noise W_t = sum_i lambda_i beta^i_t v_i and its
Ornstein-Uhlenbeck convolution O_t = sum_i lambda_i int_0^t e^{-alpha (t - s)} dbeta^i_s v_i.

Random numbers come from counter-style streams: the standard normals driving
mode i of path p in step block b are produced by a generator whose key is
derived from (seed, path id, multi-index of i, b) alone.  Any step of any
mode can therefore be regenerated without replaying the others, and a run at
truncation N shares its first N mode streams bit-for-bit with a run at N' > N.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .spectral import SpectralBasis

BLOCK = 4096
RNG_KINDS = ("philox", "pcg64")


@dataclass(frozen=True)
class NoiseConfig:
    basis: SpectralBasis
    epsilon: float = 1.0
    seed: int = 0
    rng_kind: str = "philox"

    def __post_init__(self):
        if self.basis.eigenvalues is None:
            raise ConfigError("noise basis needs a spectrum (lambda_i^2)")
        if not self.epsilon >= 0:
            raise ConfigError("epsilon must be >= 0")
        if self.rng_kind not in RNG_KINDS:
            raise ConfigError(f"unknown rng_kind {self.rng_kind!r}; expected one of {RNG_KINDS}")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ConfigError("seed must be a non-negative 64-bit integer")

    @property
    def lambdas(self):
        return self.basis.lambdas

    @property
    def n_modes(self):
        return self.basis.n_modes

    def truncate(self, n_modes):
        return NoiseConfig(self.basis.truncate(n_modes), self.epsilon, self.seed, self.rng_kind)

    def with_epsilon(self, epsilon):
        return NoiseConfig(self.basis, epsilon, self.seed, self.rng_kind)


def _generator(cfg, path_id, index, block):
    ss = np.random.SeedSequence([int(cfg.seed), int(path_id), len(index), *index, int(block)])
    if cfg.rng_kind == "philox":
        bitgen = np.random.Philox(key=ss.generate_state(2, np.uint64))
    else:
        bitgen = np.random.PCG64(ss)
    return np.random.Generator(bitgen)


def _block_normals(cfg, path_id, index, block, n=BLOCK):
    # draws are sequential, so the first n entries do not depend on how many are taken
    return _generator(cfg, path_id, index, block).standard_normal(n)


def standard_normals(cfg, n_steps, path_ids=(0,), start_step=0, modes=None):
    """Unit normals xi[step, path, mode] for steps start_step .. start_step + n_steps - 1.

    ``modes`` restricts to a subset of positions of ``cfg.basis`` (default: all).
    """
    path_ids = np.atleast_1d(np.asarray(path_ids, dtype=np.int64))
    positions = range(cfg.n_modes) if modes is None else modes
    indices = [cfg.basis.indices[m] for m in positions]
    out = np.empty((n_steps, len(path_ids), len(indices)))
    stop = start_step + n_steps
    for b in range(start_step // BLOCK, (stop - 1) // BLOCK + 1 if n_steps else 0):
        lo, hi = max(start_step, b * BLOCK), min(stop, (b + 1) * BLOCK)
        for p, pid in enumerate(path_ids):
            for m, idx in enumerate(indices):
                z = _block_normals(cfg, pid, idx, b, hi - b * BLOCK)
                out[lo - start_step:hi - start_step, p, m] = z[lo - b * BLOCK:hi - b * BLOCK]
    return out


def wiener_increments(cfg, dt, n_steps, path_id=0, start_step=0):
    """Unscaled Brownian increments dbeta^i ~ N(0, dt), shape (n_steps, N).

    The lambda_i and epsilon scaling is applied by the consumer.
    """
    if not dt > 0:
        raise ConfigError("dt must be > 0")
    return math.sqrt(dt) * standard_normals(cfg, n_steps, (path_id,), start_step)[:, 0, :]


@dataclass(frozen=True)
class OUState:
    values: np.ndarray
    t: float = 0.0


def ou_decay(alpha, dt):
    """(e^{-alpha dt}, sqrt((1 - e^{-2 alpha dt}) / (2 alpha)))."""
    a = math.exp(-alpha * dt)
    return a, math.sqrt(-math.expm1(-2.0 * alpha * dt) / (2.0 * alpha))


def ou_step(state, dt, increments, alpha, lambdas):
    """Exact Gaussian update of every mode; ``increments`` are unit normals."""
    if not dt > 0:
        raise ConfigError("dt must be > 0")
    a, s = ou_decay(alpha, dt)
    values = a * np.asarray(state.values) + np.asarray(lambdas) * s * np.asarray(increments)
    return OUState(values, state.t + dt)


def ou_paths(cfg, alpha, dt, n_steps, path_ids=(0,), modes=None):
    """O at steps 0..n_steps (O_0 = 0) for each path: shape (n_steps + 1, P, M)."""
    xi = standard_normals(cfg, n_steps, path_ids, modes=modes)
    lam = cfg.lambdas if modes is None else cfg.lambdas[list(modes)]
    a, s = ou_decay(alpha, dt)
    out = np.zeros((n_steps + 1,) + xi.shape[1:])
    for k in range(n_steps):
        out[k + 1] = a * out[k] + lam * s * xi[k]
    return out


def series_covariance(basis, x, y):
    """sum_i lambda_i^2 v_i(x) v_i(y) for paired point arrays."""
    Vx = basis.evaluate(x)
    Vy = basis.evaluate(y)
    return np.sum(Vx * Vy * basis.eigenvalues, axis=-1)


def gaussian_covariance(xi, d, x, y):
    """Interior approximation (2 xi)^-d exp(-pi |x - y|^2 / (4 xi^2))."""
    r2 = np.sum((np.atleast_2d(x) - np.atleast_2d(y)) ** 2, axis=-1)
    return (2.0 * xi) ** (-d) * np.exp(-math.pi * r2 / (4.0 * xi ** 2))


def covariance_diagnostic(cfg, xi, t, point_pairs, n_samples=100_000):
    """Monte Carlo E[W_t(x) W_t(y)] against the series and the Gaussian form.

    ``point_pairs`` is (x, y) with arrays of shape (P, d).  Independent samples
    of beta_t are successive entries of path 0's stream scaled by sqrt(t).
    Returns a dict with the estimates, standard errors and the deviations
    (hard check against the series, soft check against the Gaussian form).
    """
    x, y = (np.atleast_2d(np.asarray(p, dtype=float)) for p in point_pairs)
    d = cfg.basis.dim
    if d == 1:
        x, y = x.reshape(-1, 1), y.reshape(-1, 1)
    beta = math.sqrt(t) * standard_normals(cfg, n_samples)[:, 0, :] * cfg.lambdas
    Wx = beta @ cfg.basis.evaluate(x).T
    Wy = beta @ cfg.basis.evaluate(y).T
    prod = Wx * Wy
    mc = prod.mean(axis=0)
    se = prod.std(axis=0, ddof=1) / math.sqrt(n_samples)
    series = t * series_covariance(cfg.basis, x, y)
    gauss = t * gaussian_covariance(xi, d, x, y)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, np.abs(mc - series) / se, np.where(mc == series, 0.0, np.inf))
        soft = np.where(gauss > 0, np.abs(series - gauss) / gauss, 0.0)
    return {
        "mc": mc, "se": se, "series": series, "gaussian": gauss,
        "series_abs_dev": float(np.max(np.abs(mc - series))),
        "series_max_z": float(np.max(z)),
        "gaussian_rel_dev": float(np.max(soft)),
    }


def tail_amplitude(basis, n, n_ref):
    """b_N = (sum of lambda_i^2 over positions n .. n_ref - 1)^(1/2)."""
    return math.sqrt(float(np.sum(basis.eigenvalues[n:n_ref])))


def ou_truncation_error(cfg, n, n_ref, T, dt, n_paths, alpha=1.0):
    """E[sup_t ||O^{N_ref}_t - O^N_t||] from coupled streams, compared with b_N.

    Because the first N modes are shared, the difference is exactly the
    N .. N_ref - 1 block of O^{N_ref}.
    """
    if not n <= n_ref <= cfg.n_modes:
        raise ConfigError("need N <= N_ref <= number of modes in the noise basis")
    b_n = tail_amplitude(cfg.basis, n, n_ref)
    if n == n_ref:
        return {"N": n, "N_ref": n_ref, "mean": 0.0, "sem": 0.0, "b_N": b_n, "ratio": 0.0}
    n_steps = int(round(T / dt))
    tail = ou_paths(cfg, alpha, dt, n_steps, np.arange(n_paths), modes=range(n, n_ref))
    sup = np.sqrt(np.sum(tail ** 2, axis=-1)).max(axis=0)
    mean = float(sup.mean())
    sem = float(sup.std(ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else 0.0
    return {"N": n, "N_ref": n_ref, "mean": mean, "sem": sem, "b_N": b_n,
            "ratio": mean / b_n if b_n > 0 else 0.0}
