"""
Connectivity kernels and their Galerkin matrices.

Translation-invariant kernels w(x, y) = w(|x - y|) have a kink on the diagonal
(mexican hat) which ruins the spectral accuracy of a plain tensor trapezoid
rule.  Their Galerkin matrices are therefore computed from the reduced form

    K_ki = int_{[-2pi, 2pi]^d} w(|s|) prod_a C_{k_a i_a}(s_a) ds,
    C_ki(s) = int e_k(y + s) e_i(y) dy   (overlap of [0, 2pi] and [-s, 2pi - s]),

where C is available in closed form and the outer integral uses composite
Gauss-Legendre panels graded towards s = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericalError
from .spectral import TWO_PI, multi_indices

KERNEL_KINDS = ("spectral-coupled", "mexican-hat", "gaussian")
SYMMETRY_TOL = 1e-6

_GL_POINTS = 16
_GRADING_LEVELS = 12
_CHUNK = 256


@dataclass(frozen=True)
class KernelSpec:
    """Kernel description.

    spectral-coupled: K v_i = kappa_i v_i.  Either ``kappa`` (explicit signed
        eigenvalues) or ``sign`` (+1/-1 or a list) with kappa_i = sign_i * lambda_i
        taken from the noise spectrum.
    mexican-hat: w(r) = A exp(-a r) - exp(-r).
    gaussian:    w(r) = amplitude * exp(-r**2 / (2 width**2)).
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ConfigError(f"unknown kernel kind {self.kind!r}; expected one of {KERNEL_KINDS}")
        allowed = {
            "spectral-coupled": {"kappa", "sign"},
            "mexican-hat": {"A", "a"},
            "gaussian": {"amplitude", "width"},
        }[self.kind]
        unknown = set(self.params) - allowed
        if unknown:
            raise ConfigError(f"unknown kernel params for {self.kind}: {sorted(unknown)}")
        if self.kind == "gaussian" and not self.params.get("width", 1.0) > 0:
            raise ConfigError("width must be > 0")
        if self.kind == "mexican-hat" and not self.params.get("a", 1.0) > 0:
            raise ConfigError("a must be > 0")

    @classmethod
    def from_dict(cls, data):
        return cls(data["kind"], dict(data.get("params", {})))

    def to_dict(self):
        params = {k: (list(v) if isinstance(v, (list, tuple, np.ndarray)) else v)
                  for k, v in self.params.items()}
        return {"kind": self.kind, "params": params}

    @property
    def spectral(self):
        return self.kind == "spectral-coupled"

    def profile(self, r):
        """w as a function of the distance r = |x - y|."""
        r = np.asarray(r, dtype=float)
        if self.kind == "mexican-hat":
            A = float(self.params.get("A", 2.0))
            a = float(self.params.get("a", 2.0))
            return A * np.exp(-a * r) - np.exp(-r)
        if self.kind == "gaussian":
            amp = float(self.params.get("amplitude", 1.0))
            width = float(self.params.get("width", 1.0))
            return amp * np.exp(-0.5 * (r / width) ** 2)
        raise ConfigError("spectral-coupled kernels have no distance profile")


def resolve_kappa(kernel, basis):
    """Signed eigenvalues kappa_i of a spectral-coupled kernel on ``basis``."""
    n = basis.n_modes
    if "kappa" in kernel.params:
        kappa = np.asarray(kernel.params["kappa"], dtype=float)
        if kappa.size < n:
            raise ConfigError(f"kernel needs {n} kappa values, got {kappa.size}")
        return kappa[:n].copy()
    sign = np.asarray(kernel.params.get("sign", 1.0), dtype=float)
    if sign.ndim:
        if sign.size < n:
            raise ConfigError(f"kernel needs {n} sign values, got {sign.size}")
        sign = sign[:n]
    return sign * basis.lambdas


def axis_correlation(kmax, s):
    """C[p, k, i] = int e_k(y + s_p) e_i(y) dy over the overlap, k, i <= kmax."""
    s = np.asarray(s, dtype=float)[:, None, None]
    k = np.arange(kmax + 1)[None, :, None]
    i = np.arange(kmax + 1)[None, None, :]
    lo = np.maximum(0.0, -s)
    hi = np.minimum(TWO_PI, TWO_PI - s)
    q = 0.5 * k * s

    def cos_integral(p):
        safe = np.where(p == 0, 1, p)
        osc = (2.0 / safe) * (np.sin(0.5 * p * hi + q) - np.sin(0.5 * p * lo + q))
        return np.where(p == 0, (hi - lo) * np.cos(q), osc)

    ck = np.where(k == 0, 1.0 / math.sqrt(TWO_PI), 1.0 / math.sqrt(math.pi))
    ci = np.where(i == 0, 1.0 / math.sqrt(TWO_PI), 1.0 / math.sqrt(math.pi))
    return 0.5 * ck * ci * (cos_integral(k + i) + cos_integral(k - i))


def lag_quadrature(kmax):
    """Gauss-Legendre nodes/weights on [-2pi, 2pi], graded towards 0."""
    width = min(0.5, 6.0 / max(kmax, 1))
    n_uniform = int(math.ceil(TWO_PI / width))
    edges = set(np.linspace(0.0, TWO_PI, n_uniform + 1).tolist())
    first = TWO_PI / n_uniform
    edges.update(first * 2.0 ** -np.arange(1, _GRADING_LEVELS + 1))
    edges = np.array(sorted(edges))
    x, w = np.polynomial.legendre.leggauss(_GL_POINTS)
    a, b = edges[:-1, None], edges[1:, None]
    nodes = (0.5 * (b - a) * x + 0.5 * (a + b)).ravel()
    weights = (0.5 * (b - a) * w).ravel()
    return np.concatenate([-nodes[::-1], nodes]), np.concatenate([weights[::-1], weights])


def aux_cutoff_for(grid, basis):
    """Largest per-axis frequency kept when expanding K v_i on the grid.

    order - 2 keeps every auxiliary mode strictly below the trapezoid Nyquist
    mode order - 1, whose discrete norm is doubled.
    """
    aux = grid.order - 2
    if aux < basis.max_axis_frequency:
        raise ConfigError(
            f"quadrature order {grid.order} too small for basis cutoff "
            f"{basis.max_axis_frequency}; need order >= {basis.max_axis_frequency + 2}")
    return aux


def translation_invariant_matrix(kernel, d, kmax):
    """Galerkin matrix on the full box {0..kmax}^d in canonical order.

    Returns (indices, K) with K[p, q] = <v_p, K v_q>.  Raises if the raw matrix
    is asymmetric beyond SYMMETRY_TOL; otherwise returns the symmetrized matrix.
    """
    s, ws = lag_quadrature(kmax)
    idx = multi_indices(d, kmax, "box")
    if d == 1:
        W = ws * kernel.profile(np.abs(s))
        full = np.zeros((kmax + 1, kmax + 1))
        for lo in range(0, len(s), _CHUNK):
            full += np.einsum("p,pki->ki", W[lo:lo + _CHUNK],
                              axis_correlation(kmax, s[lo:lo + _CHUNK]))
        K = full[np.ix_([i[0] for i in idx], [i[0] for i in idx])]
    else:
        C = axis_correlation(kmax, s)
        r = np.sqrt(s[:, None] ** 2 + s[None, :] ** 2)
        W2 = np.outer(ws, ws) * kernel.profile(r)
        m = kmax + 1
        T = (W2 @ C.reshape(len(s), m * m)).reshape(len(s), m, m)  # [a, k2, i2]
        K4 = (C.reshape(len(s), m * m).T @ T.reshape(len(s), m * m)).reshape(m, m, m, m)
        # K4[k1, i1, k2, i2]
        k1 = np.array([i[0] for i in idx])
        k2 = np.array([i[1] for i in idx])
        K = K4[k1[:, None], k1[None, :], k2[:, None], k2[None, :]]
    asym = np.max(np.abs(K - K.T))
    if asym > SYMMETRY_TOL:
        raise NumericalError(f"kernel Galerkin matrix asymmetric by {asym:.3e}")
    return idx, 0.5 * (K + K.T)


def kernel_galerkin_matrix(kernel, basis, quadrature):
    """N x N matrix K_ij = <v_i, K v_j> on ``basis``.

    Exact eigen-relation for spectral-coupled kernels; otherwise evaluated on
    the auxiliary box resolved by ``quadrature`` and restricted to the basis.
    """
    if kernel.spectral:
        return np.diag(resolve_kappa(kernel, basis))
    aux = aux_cutoff_for(quadrature, basis)
    idx, K = translation_invariant_matrix(kernel, basis.dim, aux)
    pos = [idx.index(i) for i in basis.indices]
    return K[np.ix_(pos, pos)]
