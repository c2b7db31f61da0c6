"""
Trigonometric (Neumann) basis on the cube [0, 2*pi]^d, noise spectra and
quadrature.

Basis functions are tensor products of

    e_0(x) = 1/sqrt(2*pi),    e_k(x) = cos(k*x/2)/sqrt(pi)   (k >= 1)

indexed by multi-indices i in N^d.  The modes are ordered by Euclidean norm
|i| with ties broken lexicographically, so the first N modes of a basis are
always the first N modes of any larger basis.  Noise streams are keyed by the
multi-index (not the position), which keeps paths coupled across truncation
levels.

Quadrature is the composite trapezoid rule on a uniform tensor grid including
the end points.  Substituting y = x/2 turns every basis product into a cosine
polynomial in y on [0, pi]; the trapezoid rule with n = order - 1 intervals
integrates cos(m*y) exactly for 0 < m < 2n, i.e. products v_i*v_j with
per-axis frequency sum i_k + j_k < 2*(order - 1).
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError

TWO_PI = 2.0 * math.pi
SUPPORTED_DIMS = (1, 2)
_DOMAIN_TOL = 1e-12


def _sort_key(idx):
    return (sum(k * k for k in idx), idx)


def multi_indices(d, cutoff, index_set="box"):
    """All multi-indices of the truncation in canonical order.

    ``index_set="box"`` keeps max_k i_k <= cutoff; ``"ball"`` keeps |i| <= cutoff.
    """
    if d not in SUPPORTED_DIMS:
        raise ConfigError(f"unsupported dimension d={d}; expected 1 or 2")
    if cutoff < 0:
        raise ConfigError("cutoff must be >= 0")
    box = itertools.product(range(cutoff + 1), repeat=d)
    if index_set == "box":
        idx = list(box)
    elif index_set == "ball":
        idx = [i for i in box if sum(k * k for k in i) <= cutoff * cutoff]
    else:
        raise ConfigError(f"unknown index_set {index_set!r}")
    return tuple(sorted(idx, key=_sort_key))


def axis_functions(k, x):
    """Evaluate e_k(x) for integer array ``k`` (K,) at points ``x`` (P,) -> (P, K)."""
    k = np.asarray(k)
    x = np.asarray(x, dtype=float)
    scale = np.where(k == 0, 1.0 / math.sqrt(TWO_PI), 1.0 / math.sqrt(math.pi))
    return scale * np.cos(0.5 * np.multiply.outer(x, k))


def _check_points(x, d):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if d == 1 and x.shape[0] == 1 and x.shape[1] != 1:
        x = x.T
    if x.shape[-1] != d:
        raise ConfigError(f"points must have {d} coordinates, got shape {x.shape}")
    if np.any(x < -_DOMAIN_TOL) or np.any(x > TWO_PI + _DOMAIN_TOL):
        raise ConfigError("point outside the domain [0, 2*pi]^d")
    return x


@dataclass(frozen=True)
class SpectralBasis:
    """Ordered truncated basis with its noise eigenvalues and Lipschitz constants.

    ``eigenvalues`` holds lambda_i**2 (the covariance eigenvalues) and is
    ``None`` until a spectrum has been attached.
    """

    dim: int
    cutoff: int
    indices: tuple
    eigenvalues: np.ndarray | None = None
    index_set: str = "box"
    lipschitz: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        norms = np.array([math.sqrt(sum(k * k for k in i)) for i in self.indices])
        object.__setattr__(self, "lipschitz", math.pi ** (-self.dim / 2) * norms)
        if self.eigenvalues is not None:
            ev = np.asarray(self.eigenvalues, dtype=float)
            if ev.shape != (len(self.indices),):
                raise ConfigError("eigenvalues must have one entry per mode")
            if np.any(ev < 0):
                raise ConfigError("noise eigenvalues must be non-negative")
            ev.setflags(write=False)
            object.__setattr__(self, "eigenvalues", ev)

    @property
    def n_modes(self):
        return len(self.indices)

    @property
    def norms(self):
        return np.array([math.sqrt(sum(k * k for k in i)) for i in self.indices])

    @property
    def max_axis_frequency(self):
        return max(max(i) for i in self.indices)

    @property
    def lambdas(self):
        """Noise amplitudes lambda_i = sqrt(lambda_i**2)."""
        if self.eigenvalues is None:
            raise ConfigError("basis has no noise spectrum attached")
        return np.sqrt(self.eigenvalues)

    def position(self, index):
        return self.indices.index(tuple(index))

    def with_eigenvalues(self, lambda_sq):
        return replace(self, eigenvalues=np.asarray(lambda_sq, dtype=float))

    def truncate(self, n_modes):
        """The first ``n_modes`` modes (same ordering, spectrum carried along)."""
        if not 1 <= n_modes <= self.n_modes:
            raise ConfigError(f"n_modes must be in [1, {self.n_modes}]")
        ev = None if self.eigenvalues is None else self.eigenvalues[:n_modes]
        cut = max(max(i) for i in self.indices[:n_modes])
        return SpectralBasis(self.dim, cut, self.indices[:n_modes], ev, self.index_set)

    def evaluate(self, points):
        """Matrix of v_i(x_p), shape (n_points, n_modes)."""
        x = _check_points(points, self.dim)
        idx = np.array(self.indices)
        out = np.ones((x.shape[0], self.n_modes))
        for a in range(self.dim):
            out *= axis_functions(idx[:, a], x[:, a])
        return out

    def partial_trace(self):
        if self.eigenvalues is None:
            raise ConfigError("basis has no noise spectrum attached")
        return float(np.sum(self.eigenvalues))

    def to_dict(self):
        return {
            "d": self.dim,
            "cutoff": self.cutoff,
            "index_set": self.index_set,
            "indices": [list(i) for i in self.indices],
            "lambda_sq": None if self.eigenvalues is None else self.eigenvalues.tolist(),
            "lipschitz": self.lipschitz.tolist(),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data):
        indices = tuple(tuple(int(k) for k in i) for i in data["indices"])
        basis = cls(int(data["d"]), int(data["cutoff"]), indices,
                    data.get("lambda_sq"), data.get("index_set", "box"))
        return basis


def build_basis(d, cutoff, index_set="box"):
    """Basis with all multi-indices of the truncation; spectrum left unset."""
    return SpectralBasis(d, int(cutoff), multi_indices(d, int(cutoff), index_set),
                         index_set=index_set)


def basis_eval(basis, i, x):
    """Value of the basis function with multi-index ``i`` at the point ``x``."""
    i = tuple(int(k) for k in np.atleast_1d(i))
    if len(i) != basis.dim:
        raise ConfigError("multi-index dimension does not match the basis")
    pt = _check_points(np.reshape(x, (1, basis.dim)), basis.dim)[0]
    val = 1.0
    for a in range(basis.dim):
        val *= axis_functions(np.array([i[a]]), np.array([pt[a]]))[0, 0]
    return float(val)


def exponential_spectrum(norms_sq, xi):
    return np.exp(-(xi ** 2) * np.asarray(norms_sq, dtype=float) / (4.0 * math.pi))


def noise_spectrum_exponential(basis, xi):
    """Attach lambda_i**2 = exp(-xi**2 |i|**2 / (4 pi)) (smooth correlated noise)."""
    if not xi > 0:
        raise ConfigError("xi must be > 0")
    return basis.with_eigenvalues(exponential_spectrum(basis.norms ** 2, xi))


def exponential_tail_trace(d, xi, cutoff, index_set="box", extra=200):
    """Sum of lambda_i**2 over modes outside the truncation, by direct summation."""
    big = multi_indices(d, cutoff + extra, index_set)
    inner = set(multi_indices(d, cutoff, index_set))
    tail = [sum(k * k for k in i) for i in big if i not in inner]
    return float(np.sum(exponential_spectrum(tail, xi)))


@dataclass(frozen=True)
class QuadratureGrid:
    """Tensor trapezoid grid on [0, 2*pi]^d."""

    dim: int
    order: int
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def measure(self):
        return TWO_PI ** self.dim

    def integrate(self, values):
        return np.tensordot(np.asarray(values), self.weights, axes=([-1], [0]))


def build_quadrature(d, order):
    """Composite trapezoid rule with ``order`` points per axis (end points included)."""
    if d not in SUPPORTED_DIMS:
        raise ConfigError(f"unsupported dimension d={d}; expected 1 or 2")
    if order < 2:
        raise ConfigError("quadrature order must be >= 2")
    x = np.linspace(0.0, TWO_PI, order)
    w = np.full(order, TWO_PI / (order - 1))
    w[0] *= 0.5
    w[-1] *= 0.5
    if d == 1:
        nodes = x[:, None]
        weights = w
    else:
        gx, gy = np.meshgrid(x, x, indexing="ij")
        nodes = np.column_stack([gx.ravel(), gy.ravel()])
        weights = np.outer(w, w).ravel()
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureGrid(d, order, nodes, weights)


def default_quadrature_order(basis):
    """Per-axis node count: 8x the largest frequency (at least 128) in d=1, 4x (at least 64) in d=2.

    Steep gains push f(U) to high frequencies; in d=1 nodes are cheap, in d=2 the
    auxiliary kernel box grows with the square of the order.
    """
    if basis.dim == 1:
        return max(128, 8 * basis.max_axis_frequency)
    return max(64, 4 * basis.max_axis_frequency)


def project(samples, basis, grid, basis_values=None):
    """Quadrature coefficients <field, v_i> from samples on the grid nodes.

    ``samples`` may carry leading batch axes; the last axis runs over nodes.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.shape[-1] != grid.n_nodes:
        raise ConfigError(
            f"expected {grid.n_nodes} samples per field, got {samples.shape[-1]}")
    V = basis.evaluate(grid.nodes) if basis_values is None else basis_values
    return (samples * grid.weights) @ V


def reconstruct(u, basis, x):
    """Field value sum_i u_i v_i(x) at one or more points."""
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != basis.n_modes:
        raise ConfigError(f"coefficient vector must have length {basis.n_modes}")
    single = np.ndim(x) == 0 or (np.ndim(x) == 1 and np.size(x) == basis.dim)
    pts = _check_points(np.reshape(x, (1, basis.dim)) if single else x, basis.dim)
    vals = u @ basis.evaluate(pts).T
    if single and u.ndim == 1:
        return float(vals[0])
    return vals


def gram_matrix(basis, grid):
    V = basis.evaluate(grid.nodes)
    return V.T @ (grid.weights[:, None] * V)


def continuity_sums(basis, points, rho=0.5):
    """Suprema over ``points`` of the two series controlling spatial continuity.

    Returns (sup_x sum lambda_i^2 v_i(x)^2,
             sup_x sum lambda_i^2 L_i^(2 rho) |v_i(x)|^(2 (1 - rho))).
    """
    if basis.eigenvalues is None:
        raise ConfigError("basis has no noise spectrum attached")
    V = basis.evaluate(points)
    ev = basis.eigenvalues
    first = (V ** 2) @ ev
    second = (np.abs(V) ** (2 * (1 - rho))) @ (ev * basis.lipschitz ** (2 * rho))
    return float(first.max()), float(second.max())
