"""End-to-end acceptance checks; each test prints one PASS/FAIL line with its measurements."""
import math
import warnings

import numpy as np
import pytest
from scipy import integrate

from nfldp.action import (DiscretePath, action_eval, action_gradient, action_three_terms,
                          minimize_action)
from nfldp.cli import named_states, run
from nfldp.config import parse_config
from nfldp.errors import HorizonWarning
from nfldp.model import drift, homogeneous_bistable_model
from nfldp.noise import (NoiseConfig, covariance_diagnostic, ou_paths, ou_truncation_error,
                         wiener_increments)
from nfldp.quasipotential import kramers_scalar, multiscale_truncate, quasipotential
from nfldp.simulate import convergence_summary, exit_scaling_fit, galerkin_convergence
from nfldp.spectral import (build_basis, build_quadrature, default_quadrature_order, gram_matrix,
                            noise_spectrum_exponential, project)


@pytest.fixture
def report(capsys):
    def emit(num, name, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {num:2d}] {name}: {'PASS' if ok else 'FAIL'} ({detail})")
        return ok
    return emit


def noise_cfg(cutoff, xi=1.0, d=1, seed=0):
    return NoiseConfig(noise_spectrum_exponential(build_basis(d, cutoff), xi), seed=seed)


@pytest.fixture(scope="module")
def scalar_quasipotential(scalar_setup):
    s = scalar_setup
    f = s["model"].gain
    lo, mid, _ = s["potential"].critical_points()
    v0 = 1 / math.sqrt(2 * math.pi)
    # 1-D oracle: V(u) = -int b, b(u) = -u + sqrt(2 pi) f(u v0) for the constant mode
    b = lambda u: -u + math.sqrt(2 * math.pi) * float(f(u * v0))
    dV = -integrate.quad(b, lo, mid, epsabs=1e-13, epsrel=1e-13)[0]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", HorizonWarning)
        res = quasipotential([lo], [mid], s["model"], T_grid=(2.5, 5.0, 10.0), M=200)
    return {"target": 2 * dV / s["lambda0"] ** 2, "value": res.value, "dV": dV}


def test_criterion_01_spectral_fidelity(report):
    gram = []
    for d, cutoff in ((1, 63), (2, 4)):
        b = build_basis(d, cutoff)
        G = gram_matrix(b, build_quadrature(d, default_quadrature_order(b)))
        gram.append((b.n_modes, float(np.max(np.abs(G - np.eye(b.n_modes))))))
    x1 = np.linspace(0, 2 * math.pi, 10_000).reshape(-1, 1)
    g = np.linspace(0, 2 * math.pi, 100)
    x2 = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
    excess = []
    for d, cutoff, x in ((1, 63, x1), (2, 4, x2)):
        vals = np.abs(build_basis(d, cutoff).evaluate(x))
        excess.append(float(vals.max() - math.pi ** (-d / 2)))
    ok = all(dev < 1e-8 for _, dev in gram) and all(e <= 1e-14 for e in excess)
    detail = (f"gram dev d=1 N={gram[0][0]}: {gram[0][1]:.1e}, d=2 N={gram[1][0]}: "
              f"{gram[1][1]:.1e}; max|v|-pi^(-d/2): {excess[0]:.1e}, {excess[1]:.1e}")
    assert report(1, "spectral fidelity", ok, detail)


def test_criterion_02_noise_correctness(report):
    cfg = noise_cfg(3)
    dt = 0.01
    inc = wiener_increments(cfg, dt, 100_000)
    inc_dev = float(np.max(np.abs(inc.var(axis=0, ddof=1) / dt - 1)))
    O = ou_paths(cfg, 1.0, 0.5, 400_000)[100::4, 0, :]
    ou_dev = float(np.max(np.abs(O.var(axis=0) / (cfg.basis.eigenvalues / 2.0) - 1)))
    x = np.array([1.0, 2.0, 3.0])
    z = max(covariance_diagnostic(noise_cfg(12), 1.0, 1.0, (x, x + dx),
                                  n_samples=100_000)["series_max_z"] for dx in (0.0, 0.4))
    xg = np.array([2.0, 3.0, 4.0])
    soft = covariance_diagnostic(noise_cfg(60, xi=0.5), 0.5, 1.0, (xg, xg + 0.3),
                                 n_samples=2000)["gaussian_rel_dev"]
    ok = inc_dev < 0.05 and ou_dev < 0.05 and z < 3.0 and soft < 0.10
    detail = (f"increment var dev {inc_dev:.3f}, OU var dev {ou_dev:.3f}, "
              f"series max z {z:.2f}, gaussian rel dev {soft:.1e}")
    assert report(2, "noise correctness", ok, detail)


def test_criterion_03_galerkin_convergence(report):
    m = homogeneous_bistable_model(d=1, cutoff=31)
    u0 = named_states(m)["lower"].u_star.copy()
    u0[1:] += 0.3 * m.basis.lambdas[1:]
    rows = galerkin_convergence(m, NoiseConfig(m.basis, 0.5), [4, 8, 16], 2.0, 1e-3, u0,
                                seeds=range(5))
    summ = convergence_summary(rows)
    dec = all(summ["decreasing_l2"].values()) and all(summ["decreasing_sup"].values())
    spread = max(summ["ratio_spread"].values())
    ok = dec and spread <= 10.0 and m.n_modes == 32
    means = {n: np.mean([r["l2"] for r in rows if r["N"] == n]) for n in (4, 8, 16)}
    detail = (f"strictly decreasing on 5 seeds: {dec}; mean l2 error "
              + ", ".join(f"N={n}: {v:.2e}" for n, v in means.items())
              + f"; max error/envelope spread {spread:.2f}")
    assert report(3, "Galerkin convergence", ok, detail)


def test_criterion_04_ou_truncation_rate(report):
    cfg = noise_cfg(31)
    rows = [ou_truncation_error(cfg, n, 32, 5.0, 0.01, 200) for n in (4, 8, 16)]
    ratios = [r["ratio"] for r in rows]
    ok = all(0 < q <= 10 for q in ratios)
    detail = ", ".join(f"N={r['N']}: E sup {r['mean']:.2e} / b_N {r['b_N']:.2e} = {r['ratio']:.2f}"
                       for r in rows)
    assert report(4, "OU truncation rate", ok, detail)


def test_criterion_05_rate_function_identities(report):
    m5 = homogeneous_bistable_model(d=1, cutoff=4)
    m2 = homogeneous_bistable_model(d=1, cutoff=1)
    worst = 0.0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        path = DiscretePath(np.linspace(0, 3, 31), rng.normal(0, 0.5, (31, 5)))
        a1, a2, a3 = action_three_terms(path, m5)
        val = action_eval(path, m5).total
        worst = max(worst, abs(0.5 * (a1 - 2 * a2 + a3) - val) / val)
    rng = np.random.default_rng(7)
    path = DiscretePath(np.linspace(0, 2, 21), rng.normal(0, 0.5, (21, 2)))
    g = action_gradient(path, m2)
    h = 1e-6
    fd = np.zeros_like(g)
    for idx in np.ndindex(*g.shape):
        up, dn = path.nodes.copy(), path.nodes.copy()
        up[idx] += h
        dn[idx] -= h
        fd[idx] = (action_eval(DiscretePath(path.times, up), m2).total
                   - action_eval(DiscretePath(path.times, dn), m2).total) / (2 * h)
    grad_err = float(np.max(np.abs(fd - g)))
    s = np.linspace(0.1, 0.5, 5)
    fn = lambda t: s * np.sin(t) + 0.3 * np.cos(2 * t) * s[::-1]
    v = [action_eval(DiscretePath.from_function(fn, 3.0, M), m5).total for M in (40, 80, 160)]
    rich = (v[0] - v[1]) / (v[1] - v[2])
    u0 = named_states(m5)["middle"].u_star + 0.1
    sol = integrate.solve_ivp(lambda t, u: drift(u, m5), (0, 5), u0, rtol=1e-12, atol=1e-12,
                              dense_output=True)
    det = action_eval(DiscretePath.from_function(sol.sol, 5.0, 200), m5).total
    ok = worst < 1e-9 and grad_err < 1e-5 and 3 <= rich <= 5 and det < 1e-6
    detail = (f"identity rel residual {worst:.1e}, gradient-FD {grad_err:.1e}, "
              f"Richardson ratio {rich:.3f}, deterministic I {det:.1e}")
    assert report(5, "rate function identities", ok, detail)


def test_criterion_06_quasipotential_oracle(report, scalar_quasipotential):
    q = scalar_quasipotential
    rel = abs(q["value"] - q["target"]) / q["target"]
    detail = f"min action {q['value']:.5f} vs 2 dV/lambda0^2 {q['target']:.5f}, rel {rel:.2e}"
    assert report(6, "quasipotential oracle", rel < 0.02, detail)


def test_criterion_07_exit_time_scaling(report, scalar_exit_ladder, scalar_quasipotential):
    rows = scalar_exit_ladder["rows"]
    fit = exit_scaling_fit([r["epsilon"] for r in rows], [r["tau"] for r in rows],
                           [r["censored"] for r in rows])
    Z = scalar_quasipotential["value"]
    rel = abs(fit["intercept"] - Z) / Z
    detail = (f"extrapolated {fit['intercept']:.4f} (95% band {fit['ci'][0]:.3f}.."
              f"{fit['ci'][1]:.3f}) vs quasipotential {Z:.4f}, rel {rel:.3f}")
    assert report(7, "exit-time scaling", rel < 0.20, detail)


def test_criterion_08_kramers_cross_check(report, scalar_exit_ladder):
    factors = []
    for r in scalar_exit_ladder["rows"]:
        mc = float(np.mean(r["tau"]))
        factors.append(max(mc / r["kramers"]["mean"], r["kramers"]["mean"] / mc))
    quartic = type("Quartic", (), {})()
    quartic.V = lambda u: u ** 4 / 4 - u ** 2 / 2
    quartic.d2V = lambda u: 3 * u ** 2 - 1
    quartic.critical_points = lambda: (-1.0, 0.0, 1.0)
    got = kramers_scalar(quartic, 1.0, math.sqrt(0.1))["mean"]
    expect = 2 * math.pi / math.sqrt(2) * math.exp(5)
    rel = abs(got - expect) / expect
    ok = max(factors) < 3 and rel < 1e-12
    detail = (", ".join(f"ratio {r['ratio']:.0f}: factor {f:.2f}"
                        for r, f in zip(scalar_exit_ladder["rows"], factors))
              + f"; quartic closed form rel {rel:.1e}")
    assert report(8, "Kramers cross-check", ok, detail)


def test_criterion_09_multiscale_truncation(report):
    m = homogeneous_bistable_model(d=1, cutoff=15, xi=1.0)
    s = named_states(m)
    T, M = 10.0, 200
    delta = 0.2 * m.basis.lambdas
    delta[0] = 0.0
    start = s["lower"].u_star + delta
    end = s["middle"].u_star + math.exp(-m.alpha * T) * delta
    res = minimize_action(start, end, T, M, m)
    out = multiscale_truncate(res, m, tol=0.01)
    ok = out["N_eff"] < m.n_modes == 16 and out["relative_change"] < 0.01
    detail = (f"N_eff {out['N_eff']} of {m.n_modes}, action {out['full_action']:.5f} -> "
              f"{out['pinned_action']:.5f}, rel change {out['relative_change']:.2e}")
    assert report(9, "multi-scale truncation", ok, detail)


def test_criterion_10_nonlinearity_bound(report):
    m = homogeneous_bistable_model(d=1, cutoff=15, gain_kind="tanh-sigmoid")
    u = np.random.default_rng(10).normal(0, 3, (1000, m.n_modes))
    coeffs = project(m.gain(m.field_values(u)), m.basis, m.quadrature, m.V)
    bound = 1.0 * math.sqrt(2 * math.pi)
    worst = float(np.max(np.abs(coeffs)))
    ok = worst <= bound + 1e-9
    detail = f"max |<f(U), v_i>| {worst:.4f} vs K_f sqrt(2 pi) {bound:.4f} over 1000 states"
    assert report(10, "nonlinearity bound", ok, detail)


@pytest.mark.parametrize("command,params", [
    ("simulate", {"t_end": 2.0, "n_paths": 3}),
    ("exit-times", {"epsilons": [0.6, 0.5, 0.45], "n_paths": 50}),
])
def test_criterion_11_reproducibility(report, tmp_path, command, params):
    cfg = parse_config({"command": command, "seed": 5, "output_dir": str(tmp_path),
                        "model": {"basis": {"d": 1, "cutoff": 2}}, "params": params})
    _, a = run(cfg, run_dir=str(tmp_path / "a"))
    _, b = run(cfg, run_dir=str(tmp_path / "b"))
    ok = a["outputs"] == b["outputs"]
    detail = f"{command}: {len(a['outputs'])} files, checksums identical: {ok}"
    assert report(11, "reproducibility", ok, detail)
