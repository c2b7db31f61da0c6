"""Gain functions f mapping potential to firing-rate input."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logit, xlogy

from .errors import ConfigError

GAIN_KINDS = ("logistic", "tanh-sigmoid", "guo-chow-ramp")

# distance from saturation used when an inverse is evaluated with clamp=True
SATURATION_EPS = 1e-12


@dataclass(frozen=True)
class GainFunction:
    """Sigmoidal or ramp gain.

    logistic:      f(u) = 1 / (1 + exp(-beta (u - theta)))
    tanh-sigmoid:  f(u) = (tanh(beta (u - theta)) + 1) / 2
    guo-chow-ramp: f(u) = [b (u - u_b) + 1] H(u - u_b),  H(0) = 1

    The ramp is right-continuous and its derivative at u_b is the one-sided
    value from above, f'(u_b) = b.
    """

    kind: str
    beta: float = 1.0
    theta: float = 0.0
    b: float = 1.0
    u_b: float = 0.0

    def __post_init__(self):
        if self.kind not in GAIN_KINDS:
            raise ConfigError(f"unknown gain kind {self.kind!r}; expected one of {GAIN_KINDS}")
        if self.kind != "guo-chow-ramp" and not self.beta > 0:
            raise ConfigError("beta must be > 0")

    @classmethod
    def from_dict(cls, data):
        kind = data["kind"]
        params = dict(data.get("params", {}))
        allowed = {"beta", "theta"} if kind != "guo-chow-ramp" else {"b", "u_b"}
        unknown = set(params) - allowed
        if unknown:
            raise ConfigError(f"unknown gain params for {kind}: {sorted(unknown)}")
        return cls(kind, **{k: float(v) for k, v in params.items()})

    def to_dict(self):
        if self.kind == "guo-chow-ramp":
            params = {"b": self.b, "u_b": self.u_b}
        else:
            params = {"beta": self.beta, "theta": self.theta}
        return {"kind": self.kind, "params": params}

    @property
    def _slope(self):
        # tanh-sigmoid is a logistic with doubled slope
        return self.beta if self.kind == "logistic" else 2.0 * self.beta

    @property
    def lipschitz(self):
        if self.kind == "guo-chow-ramp":
            return math.inf  # jump of height 1 at u_b
        return self._slope / 4.0

    @property
    def bound(self):
        """sup |f|, or None when f is unbounded."""
        if self.kind == "guo-chow-ramp":
            return None if self.b != 0 else 1.0
        return 1.0

    @property
    def smooth(self):
        return self.kind != "guo-chow-ramp"

    @property
    def invertible(self):
        return self.kind != "guo-chow-ramp"

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "guo-chow-ramp":
            z = u - self.u_b
            return np.where(z >= 0, self.b * z + 1.0, 0.0)
        return expit(self._slope * (u - self.theta))

    def deriv(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "guo-chow-ramp":
            return np.where(u >= self.u_b, self.b, 0.0)
        p = expit(self._slope * (u - self.theta))
        return self._slope * p * (1.0 - p)

    def antiderivative(self, u):
        """F with F' = f, normalised so that F(u) -> 0 as u -> -inf."""
        u = np.asarray(u, dtype=float)
        if self.kind == "guo-chow-ramp":
            z = np.maximum(u - self.u_b, 0.0)
            return z + 0.5 * self.b * z * z
        s = self._slope
        return np.logaddexp(0.0, s * (u - self.theta)) / s

    def _range_check(self, p, clamp):
        if not self.invertible:
            raise ConfigError(f"gain kind {self.kind!r} is not invertible")
        p = np.asarray(p, dtype=float)
        if clamp:
            return np.clip(p, SATURATION_EPS, 1.0 - SATURATION_EPS)
        if np.any(p <= 0.0) or np.any(p >= 1.0):
            raise ConfigError("rate values must lie in the open range (0, 1) of the gain; "
                              "pass clamp=True to clamp at 1e-12 from saturation")
        return p

    def inverse(self, p, clamp=False):
        """g = f^-1 on (0, 1)."""
        p = self._range_check(p, clamp)
        return self.theta + logit(p) / self._slope

    def inverse_integral(self, p, clamp=False):
        """int_0^p g(r) dr, closed form (integrable log singularities at 0 and 1)."""
        p = self._range_check(p, clamp)
        entropy = xlogy(p, p) + xlogy(1.0 - p, 1.0 - p)
        return self.theta * p + entropy / self._slope


def gain_eval(gain, u):
    return gain(u)


def gain_deriv(gain, u):
    return gain.deriv(u)
