import math
import warnings

import numpy as np
import pytest
from scipy import integrate

from nfldp.action import DiscretePath, minimize_action, pinned_profile, relaxation_deviation
from nfldp.cli import named_states
from nfldp.errors import ConfigError, HorizonWarning
from nfldp.kernels import KernelSpec
from nfldp.model import Potential1D, build_model, homogeneous_bistable_model
from nfldp.quasipotential import (boundary_quasipotential, kramers_scalar, multiscale_truncate,
                                  quasipotential)


def quartic():
    return Potential1D(lambda u: np.asarray(u) ** 4 / 4 - np.asarray(u) ** 2 / 2,
                       lambda u: np.asarray(u) ** 3 - np.asarray(u),
                       lambda u: 3 * np.asarray(u) ** 2 - 1, (-2.0, 2.0))


def test_kramers_quartic_closed_form():
    eps = math.sqrt(0.1)   # 2 dV / eps^2 = 5 with dV = 1/4
    out = kramers_scalar(quartic(), 1.0, eps)
    expect = 2 * math.pi / math.sqrt(2) * math.exp(5)
    assert abs(out["mean"] - expect) / expect < 1e-12
    assert out["barrier"] == pytest.approx(0.25, abs=1e-15)
    assert out["prefactor"] == pytest.approx(2 * math.pi / math.sqrt(2), rel=1e-14)


def test_kramers_right_well_and_noise_scale():
    a = kramers_scalar(quartic(), 2.0, math.sqrt(0.1), well="right")
    assert a["exponent"] == pytest.approx(5 / 4, rel=1e-14)
    assert a["minimum"] == pytest.approx(1.0, abs=1e-12)


def test_kramers_rejects_single_well_and_flat_barrier():
    single = Potential1D(lambda u: np.asarray(u) ** 2, lambda u: 2 * np.asarray(u),
                         lambda u: 2 + 0 * np.asarray(u), (-2.0, 2.0))
    with pytest.raises(ConfigError):
        kramers_scalar(single, 1.0, 0.3)
    # flat: V = 0 has no isolated critical points at all
    flat = Potential1D(lambda u: 0 * np.asarray(u), lambda u: 0 * np.asarray(u),
                       lambda u: 0 * np.asarray(u), (-1.0, 1.0))
    with pytest.raises(ConfigError):
        kramers_scalar(flat, 1.0, 0.3)
    with pytest.raises(ConfigError):
        kramers_scalar(quartic(), 0.0, 0.3)


def test_quasipotential_at_equilibrium_is_zero():
    m = homogeneous_bistable_model(d=1, cutoff=3)
    low = named_states(m)["lower"].u_star
    res = quasipotential(low, low, m, T_grid=(1.0, 2.0, 3.0), M=30)
    assert res.value < 1e-20


def test_scalar_quasipotential_matches_barrier(scalar_setup):
    s = scalar_setup
    f = s["model"].gain
    lo, mid, _ = s["potential"].critical_points()
    v0 = 1 / math.sqrt(2 * math.pi)
    # independent 1-D oracle: V(u) = -int b(u) du with b(u) = -u + sqrt(2 pi) f(u v0)
    b = lambda u: -u + math.sqrt(2 * math.pi) * float(f(u * v0))
    dV = -integrate.quad(b, lo, mid, epsabs=1e-13, epsrel=1e-13)[0]
    target = 2 * dV / s["lambda0"] ** 2
    with warnings.catch_warnings():
        # the uphill action approaches its infimum only as T grows without bound
        warnings.simplefilter("ignore", HorizonWarning)
        res = quasipotential([lo], [mid], s["model"], T_grid=(2.5, 5.0, 10.0), M=200)
    assert abs(res.value - target) < 0.02 * target
    assert [T for T, _ in res.T_profile] == [2.5, 5.0, 10.0]


def test_horizon_warning_when_not_bracketed(scalar_setup):
    s = scalar_setup
    lo, mid, _ = s["potential"].critical_points()
    with pytest.warns(HorizonWarning):
        quasipotential([lo], [mid], s["model"], T_grid=(0.2, 0.4, 0.6), M=40)


def test_t_grid_validation(scalar_setup):
    with pytest.raises(ConfigError):
        quasipotential([0.0], [1.0], scalar_setup["model"], T_grid=(1.0, 2.0))
    with pytest.raises(ConfigError):
        quasipotential([0.0], [1.0], scalar_setup["model"], T_grid=(1.0, 3.0, 2.0))


def test_few_modes_enough_for_fast_decaying_spectrum():
    vals = {}
    for cutoff in (2, 7):
        m = homogeneous_bistable_model(d=1, cutoff=cutoff, xi=3.0)
        s = named_states(m)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", HorizonWarning)
            vals[cutoff] = quasipotential(s["lower"].u_star, s["middle"].u_star, m,
                                          T_grid=(2.5, 5.0, 10.0), M=100).value
    assert abs(vals[2] - vals[7]) < 0.05 * vals[7]


def test_boundary_quasipotential_below_saddle(scalar_setup):
    s = scalar_setup
    lo, mid, _ = s["potential"].critical_points()
    r = 0.98 * (mid - lo)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", HorizonWarning)
        val, point, results = boundary_quasipotential(np.array([lo]), r, s["model"],
                                                      T_grid=(2.5, 5.0, 10.0), M=100)
        sad = quasipotential([lo], [mid], s["model"], T_grid=(2.5, 5.0, 10.0), M=100).value
    assert len(results) == 2
    assert point[0] == pytest.approx(lo + r)
    assert val < sad


def test_pinned_profile_has_zero_deviation():
    t = np.linspace(0, 3, 61)
    phi0 = np.array([0.7, -1.2, 0.05])
    path = DiscretePath(t, pinned_profile(phi0, 1.3, t))
    assert np.max(relaxation_deviation(path, 1.3)) < 1e-13


def test_zero_gain_pins_modes_beyond_endpoints():
    base = homogeneous_bistable_model(d=1, cutoff=4)
    # zero kernel: KF = 0 with a smooth gain
    m = build_model(1.0, base.gain, KernelSpec("spectral-coupled", {"kappa": [0.0] * 5}),
                    base.basis)
    start = np.array([1.0, 0.5, 0.0, 0.0, 0.0])
    end = np.array([0.6, -0.2, 0.0, 0.0, 0.0])
    res = minimize_action(start, end, 3.0, 60, m)
    out = multiscale_truncate(res, m, tol=0.01)
    assert out["N_eff"] == 2
    assert out["relative_change"] < 1e-10
    assert np.all(out["deviation"][2:] == 0.0)


def test_multiscale_small_model():
    m = homogeneous_bistable_model(d=1, cutoff=7)
    s = named_states(m)
    res = minimize_action(s["lower"].u_star, s["middle"].u_star, 10.0, 100, m)
    out = multiscale_truncate(res, m, tol=0.01)
    assert out["N_eff"] < m.n_modes
    assert out["relative_change"] < 0.01
    assert [r["N_eff"] for r in out["scan"]] == list(range(out["N_eff"] + 1))
