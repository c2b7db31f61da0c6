"""
Galerkin representation of the Amari field

    dU = [-alpha U + int_B w(x, y) f(U(y)) dy] dt + eps dW

on the truncated trigonometric basis: drift, Jacobian, stationary states and
the energy functional of the rate variable P = f(U).

All spatial integrals go through one matrix G (nodes x N) with
G[n, i] = (K v_i)(x_n), so that

    (KF)^i(u) = sum_n w_n f(U(x_n)) G[n, i],   U(x_n) = (V u)_n.

For spectral-coupled kernels G = V diag(kappa).  For distance kernels K v_i
is expanded on the auxiliary box resolved by the quadrature grid, which keeps
the nonlinearity fully resolved instead of truncating f(U) to N modes.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import ConfigError, ConvergenceError, KinkWarning, NumericalError
from .gains import GainFunction
from .kernels import KernelSpec, aux_cutoff_for, resolve_kappa, translation_invariant_matrix
from .spectral import (SpectralBasis, build_basis, build_quadrature, default_quadrature_order,
                       noise_spectrum_exponential)

STABILITY_MARGIN = 1e-8
KINK_TOL = 1e-8
_SYMMETRY_TOL = 1e-10


@dataclass(frozen=True)
class ModelSpec:
    alpha: float
    gain: GainFunction
    kernel: KernelSpec
    basis: SpectralBasis
    quadrature: object
    kernel_matrix: np.ndarray
    V: np.ndarray = field(repr=False)   # basis values on quadrature nodes
    G: np.ndarray = field(repr=False)   # kernel applied to basis, on nodes
    aux: tuple | None = field(default=None, repr=False)  # (V_aux, K_aux) for distance kernels

    @property
    def n_modes(self):
        return self.basis.n_modes

    @property
    def dim(self):
        return self.basis.dim

    def field_values(self, u):
        """U on the quadrature nodes; ``u`` may carry leading batch axes."""
        return np.asarray(u, dtype=float) @ self.V.T

    def truncate(self, n_modes):
        """Same model on the first ``n_modes`` modes and the same quadrature grid."""
        basis = self.basis.truncate(n_modes)
        return build_model(self.alpha, self.gain, self.kernel, basis,
                           quadrature=self.quadrature, _aux=self.aux)

    def to_dict(self):
        return {
            "alpha": self.alpha,
            "gain": self.gain.to_dict(),
            "kernel": self.kernel.to_dict(),
            "basis": {"d": self.basis.dim, "cutoff": self.basis.cutoff,
                      "index_set": self.basis.index_set},
            "quadrature_order": self.quadrature.order,
        }


def build_model(alpha, gain, kernel, basis, quadrature=None, quadrature_order=None, _aux=None):
    """Assemble the Galerkin model; the quadrature defaults to the basis-dependent order."""
    if not alpha > 0:
        raise ConfigError("alpha must be > 0")
    if isinstance(gain, dict):
        gain = GainFunction.from_dict(gain)
    if isinstance(kernel, dict):
        kernel = KernelSpec.from_dict(kernel)
    if quadrature is None:
        order = quadrature_order or default_quadrature_order(basis)
        quadrature = build_quadrature(basis.dim, order)
    V = basis.evaluate(quadrature.nodes)
    if kernel.spectral:
        kappa = resolve_kappa(kernel, basis)
        K = np.diag(kappa)
        G = V * kappa
        aux = None
    else:
        if _aux is None:
            cut = aux_cutoff_for(quadrature, basis)
            idx, K_aux = translation_invariant_matrix(kernel, basis.dim, cut)
            aux_basis = SpectralBasis(basis.dim, cut, idx)
            _aux = (aux_basis.evaluate(quadrature.nodes), K_aux, idx)
        V_aux, K_aux, idx = _aux
        pos = [idx.index(i) for i in basis.indices]
        G = V_aux @ K_aux[:, pos]
        K = K_aux[np.ix_(pos, pos)]
        aux = _aux
    if np.max(np.abs(K - K.T), initial=0.0) > _SYMMETRY_TOL:
        raise NumericalError("kernel matrix is not symmetric")
    for arr in (K, V, G):
        arr.setflags(write=False)
    return ModelSpec(float(alpha), gain, kernel, basis, quadrature, K, V, G, aux)


def homogeneous_bistable_model(d=1, cutoff=0, xi=1.0, beta=4.0, theta=0.5, alpha=1.0,
                               gain_kind="tanh-sigmoid", quadrature_order=None,
                               index_set="box"):
    """Spectral-coupled model whose constant mode solves alpha U = f(U).

    kappa_i = lambda_i with lambda_i^2 = exp(-xi^2 |i|^2 / (4 pi)), so kappa_0 = 1 and
    with alpha = 1 the homogeneous states are the roots of U = f(U).
    """
    basis = noise_spectrum_exponential(build_basis(d, cutoff, index_set), xi)
    gain = GainFunction(gain_kind, beta=beta, theta=theta)
    return build_model(alpha, gain, KernelSpec("spectral-coupled", {"sign": 1.0}), basis,
                       quadrature_order=quadrature_order)


def nemytskii_coeffs(u, model):
    """(KF)^i(u) = int f(U(x)) (K v_i)(x) dx; batched over leading axes of ``u``."""
    U = model.field_values(u)
    return (model.gain(U) * model.quadrature.weights) @ model.G


def drift(u, model):
    u = np.asarray(u, dtype=float)
    return -model.alpha * u + nemytskii_coeffs(u, model)


def _kink_check(model, U):
    if model.gain.kind != "guo-chow-ramp":
        return
    if np.any(np.abs(U - model.gain.u_b) < KINK_TOL):
        warnings.warn("field touches the ramp threshold on a quadrature node; "
                      "Jacobian uses the one-sided derivative and is unreliable there",
                      KinkWarning, stacklevel=3)


def drift_jacobian(u, model):
    """J = -alpha I + G^T diag(w f'(U)) V; batched over leading axes of ``u``."""
    u = np.asarray(u, dtype=float)
    U = model.field_values(u)
    _kink_check(model, U)
    fp = model.gain.deriv(U) * model.quadrature.weights
    J = np.einsum("ni,...n,nj->...ij", model.G, fp, model.V, optimize=True)
    return J - model.alpha * np.eye(model.n_modes)


def drift_vjp(u, y, model):
    """J(u)^T y without forming J; batched over matching leading axes."""
    U = model.field_values(u)
    _kink_check(model, U)
    fp = model.gain.deriv(U) * model.quadrature.weights
    return ((np.asarray(y) @ model.G.T) * fp) @ model.V - model.alpha * np.asarray(y)


def classify(eigs, margin=STABILITY_MARGIN):
    """'stable' if all Re < -margin, 'unstable' if any Re > margin, else 'marginal'."""
    re = np.real(np.asarray(eigs))
    if np.all(re < -margin):
        return "stable"
    if np.any(re > margin):
        return "unstable"
    return "marginal"


def classify_from_rates(eta, alpha, margin=STABILITY_MARGIN):
    """Same classification through mu = eta - alpha, eta the eigenvalues of K Df."""
    return classify(np.asarray(eta) - alpha, margin)


@dataclass
class StationaryState:
    u_star: np.ndarray
    residual: float
    jacobian_eigs: np.ndarray
    classification: str
    iterations: int = 0
    method: str = "newton"

    @property
    def morse_index(self):
        """Number of eigenvalues with Re > margin (unstable directions)."""
        return int(np.sum(np.real(self.jacobian_eigs) > STABILITY_MARGIN))

    @property
    def saddle_like(self):
        re = np.real(self.jacobian_eigs)
        return self.morse_index == 1 and np.all(np.abs(re) > STABILITY_MARGIN)

    def to_dict(self):
        return {
            "u_star": self.u_star.tolist(),
            "residual": self.residual,
            "jacobian_eigs_real": np.real(self.jacobian_eigs).tolist(),
            "jacobian_eigs_imag": np.imag(self.jacobian_eigs).tolist(),
            "classification": self.classification,
            "saddle_like": bool(self.saddle_like),
            "iterations": self.iterations,
            "method": self.method,
        }


def _finish(u, model, it, method):
    res = float(np.linalg.norm(drift(u, model)))
    eigs = np.linalg.eigvals(drift_jacobian(u, model))
    eigs = eigs[np.argsort(-eigs.real)]
    return StationaryState(u, res, eigs, classify(eigs), it, method)


def _fixed_point(u, model, tol, max_iter, omega, it0=0):
    best, best_res = u, np.linalg.norm(drift(u, model))
    for it in range(it0, max_iter):
        res = np.linalg.norm(drift(u, model))
        if res < best_res:
            best, best_res = u, res
        if res <= tol:
            return u, it
        u = (1 - omega) * u + (omega / model.alpha) * nemytskii_coeffs(u, model)
        if not np.all(np.isfinite(u)):
            break
    res = np.linalg.norm(drift(u, model))
    if res <= tol:
        return u, max_iter
    if res < best_res:
        best, best_res = u, res
    raise ConvergenceError(f"fixed-point iteration did not converge (residual {best_res:.3e})",
                           best=best, residual=float(best_res))


def stationary_solve(model, init=None, method="newton", tol=1e-10, max_iter=200, omega=0.5):
    """Zero of the drift, with eigenvalues and stability class attached.

    Newton with backtracking; when no step reduces the residual it falls back to the
    damped iteration u <- (1 - omega) u + (omega / alpha) KF(u).
    """
    if not tol > 0:
        raise ConfigError("tol must be > 0")
    if method not in ("newton", "fixed-point"):
        raise ConfigError(f"unknown method {method!r}")
    u = np.zeros(model.n_modes) if init is None else np.array(init, dtype=float)
    if u.shape != (model.n_modes,):
        raise ConfigError(f"init must have length {model.n_modes}")
    if method == "fixed-point":
        u, it = _fixed_point(u, model, tol, max_iter, omega)
        return _finish(u, model, it, "fixed-point")

    r = drift(u, model)
    res = np.linalg.norm(r)
    for it in range(max_iter):
        if res <= tol:
            return _finish(u, model, it, "newton")
        J = drift_jacobian(u, model)
        if np.linalg.cond(J) > 1e14:
            raise NumericalError(f"singular Jacobian in Newton iteration {it}")
        step = np.linalg.solve(J, -r)
        t = 1.0
        while t > 1e-8:
            trial = u + t * step
            r_trial = drift(trial, model)
            res_trial = np.linalg.norm(r_trial)
            if res_trial < (1 - 1e-4 * t) * res:
                break
            t *= 0.5
        else:
            u, it = _fixed_point(u, model, tol, max_iter, omega, it)
            return _finish(u, model, it, "newton+fixed-point")
        u, r, res = trial, r_trial, res_trial
    if res <= tol:
        return _finish(u, model, max_iter, "newton")
    raise ConvergenceError(f"Newton did not converge in {max_iter} iterations "
                           f"(residual {res:.3e})", best=u, residual=float(res))


# -- energy of the rate variable ---------------------------------------------------------

def _rate_samples(P, model):
    P = np.asarray(P, dtype=float)
    if P.shape[-1] == model.quadrature.n_nodes:
        return P
    if P.shape[-1] == model.n_modes:
        return model.field_values(P)
    raise ConfigError(f"P must have {model.quadrature.n_nodes} node samples "
                      f"or {model.n_modes} coefficients")


def _kernel_quadratic_form(p_nodes, model):
    """int int w(x, y) P(x) P(y) on the Galerkin kernel representation."""
    w = model.quadrature.weights
    if model.aux is None:
        c = (p_nodes * w) @ model.V
        kappa = np.diag(model.kernel_matrix)
        return np.sum(kappa * c * c, axis=-1)
    V_aux, K_aux, _ = model.aux
    c = (p_nodes * w) @ V_aux
    return np.einsum("...k,kl,...l->...", c, K_aux, c)


def energy_eval(P, model, clamp=False):
    """E[P] = int [alpha int_0^P g - 1/2 int w P P], g = f^-1.

    ``P`` is given either by its samples on the quadrature nodes or by
    coefficients (reconstructed on the nodes).  Values outside the open range
    of f raise unless ``clamp`` is set.
    """
    if not model.gain.invertible:
        raise ConfigError(f"energy needs an invertible gain; {model.gain.kind!r} is not")
    p = _rate_samples(P, model)
    local = model.alpha * model.gain.inverse_integral(p, clamp=clamp)
    return model.quadrature.integrate(local) - 0.5 * _kernel_quadratic_form(p, model)


def energy_of_coefficients(u, model):
    """E[f(U)] for the field with Galerkin coefficients ``u``."""
    return energy_eval(model.gain(model.field_values(u)), model, clamp=True)


# -- scalar reduction ---------------------------------------------------------------------

@dataclass(frozen=True)
class Potential1D:
    """Scalar gradient system du = -V'(u) dt with analytic derivatives."""

    V: callable
    dV: callable
    d2V: callable
    bracket: tuple = (-10.0, 10.0)

    def critical_points(self, n_grid=4001):
        x = np.linspace(*self.bracket, n_grid)
        g = self.dV(x)
        roots = []
        for a, b, ga, gb in zip(x[:-1], x[1:], g[:-1], g[1:]):
            if ga == 0.0:
                roots.append(float(a))
            elif ga * gb < 0:
                roots.append(brentq(self.dV, a, b, xtol=1e-14, rtol=1e-15))
        return np.array(sorted(set(roots)))


def scalar_reduction(model, bracket=None):
    """Mode-0 restriction of a spectral-coupled model as a 1-D potential.

    On constant fields U = u v_0 the drift is b(u) = -alpha u + kappa_0 (2 pi)^(d/2) f(u v_0),
    so V(u) = alpha u^2 / 2 - kappa_0 (2 pi)^d F(u v_0) with F' = f.
    """
    if not model.kernel.spectral:
        raise ConfigError("scalar reduction needs a spectral-coupled kernel")
    d = model.dim
    kappa0 = float(model.kernel_matrix[0, 0])
    v0 = (2 * math.pi) ** (-d / 2)
    meas = (2 * math.pi) ** d
    a, f = model.alpha, model.gain
    if bracket is None:
        bracket = (-2.0 / v0, 3.0 / v0)

    def V(u):
        return 0.5 * a * np.asarray(u) ** 2 - kappa0 * meas * f.antiderivative(np.asarray(u) * v0)

    def dV(u):
        return a * np.asarray(u) - kappa0 * meas * v0 * f(np.asarray(u) * v0)

    def d2V(u):
        return a - kappa0 * f.deriv(np.asarray(u) * v0)

    return Potential1D(V, dV, d2V, tuple(bracket))


def scalar_model(model):
    """The N = 1 model on the constant mode, with a two-point (exact for constants) grid."""
    basis = model.basis.truncate(1)
    quad = build_quadrature(model.dim, 2)
    return build_model(model.alpha, model.gain, model.kernel, basis, quadrature=quad)


def homogeneous_roots(gain, kappa0=1.0, alpha=1.0, n_grid=20001):
    """Constant-field stationary values: roots of alpha U = kappa0 f(U) (field units)."""
    x = np.linspace(-1.0, 2.0, n_grid)
    h = lambda U: -alpha * U + kappa0 * gain(U)
    g = h(x)
    roots = [brentq(h, a, b, xtol=1e-15) for a, b, ga, gb in zip(x[:-1], x[1:], g[:-1], g[1:])
             if ga * gb < 0]
    return np.array(roots)


def mode_zero_coefficient(U, d):
    """Coefficient of the constant field U on v_0."""
    return U * (2 * math.pi) ** (d / 2)


__all__ = [
    "ModelSpec", "build_model", "homogeneous_bistable_model", "nemytskii_coeffs", "drift",
    "drift_jacobian", "drift_vjp", "classify", "classify_from_rates", "StationaryState", "stationary_solve",
    "energy_eval", "energy_of_coefficients", "Potential1D", "scalar_reduction", "scalar_model",
    "homogeneous_roots", "mode_zero_coefficient",
]
