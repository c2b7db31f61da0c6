import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nfldp.errors import ConfigError
from nfldp.spectral import (SpectralBasis, basis_eval, build_basis, build_quadrature,
                            continuity_sums, default_quadrature_order, exponential_tail_trace,
                            gram_matrix, multi_indices, noise_spectrum_exponential, project,
                            reconstruct)


def test_single_constant_mode():
    b = build_basis(1, 0)
    assert b.indices == ((0,),)
    assert basis_eval(b, (0,), 1.234) == pytest.approx(1 / math.sqrt(2 * math.pi), abs=1e-15)


def test_lipschitz_constants_d1():
    b = build_basis(1, 2)
    assert b.indices == ((0,), (1,), (2,))
    np.testing.assert_allclose(b.lipschitz, [0, math.pi ** -0.5, 2 * math.pi ** -0.5], atol=1e-15)


def test_ordering_d2():
    assert build_basis(2, 1).indices == ((0, 0), (0, 1), (1, 0), (1, 1))


def test_ordering_norm_then_lex():
    idx = multi_indices(2, 3)
    keys = [(sum(k * k for k in i), i) for i in idx]
    assert keys == sorted(keys)


def test_ball_index_set_is_prefix_compatible():
    ball = multi_indices(2, 3, "ball")
    assert all(sum(k * k for k in i) <= 9 for i in ball)
    assert (3, 3) not in ball and (3, 3) in multi_indices(2, 3)


def test_unsupported_dimension():
    with pytest.raises(ConfigError):
        build_basis(3, 1)


def test_basis_eval_values():
    assert basis_eval(build_basis(1, 2), (2,), 0.0) == pytest.approx(1 / math.sqrt(math.pi), abs=1e-15)
    assert basis_eval(build_basis(2, 1), (1, 1), (0.0, 0.0)) == pytest.approx(1 / math.pi, abs=1e-15)


def test_basis_eval_outside_domain():
    with pytest.raises(ConfigError):
        basis_eval(build_basis(1, 2), (1,), 7.0)
    with pytest.raises(ConfigError):
        reconstruct(np.ones(3), build_basis(1, 2), -0.1)


def test_exponential_spectrum_values():
    b = noise_spectrum_exponential(build_basis(2, 2), math.sqrt(4 * math.pi))
    assert b.eigenvalues[0] == 1.0
    k = b.position((1, 2))
    assert b.eigenvalues[k] == pytest.approx(math.exp(-5), rel=1e-14)


def test_xi_must_be_positive():
    with pytest.raises(ConfigError, match="xi must be > 0"):
        noise_spectrum_exponential(build_basis(1, 2), 0.0)


def test_partial_trace_converged():
    # summation oracle: tail beyond cutoff 50 is below double precision of the trace
    a = noise_spectrum_exponential(build_basis(1, 50), 1.0).partial_trace()
    b = noise_spectrum_exponential(build_basis(1, 100), 1.0).partial_trace()
    assert abs(a - b) < 1e-12


def test_tail_trace_monotone():
    tails = [exponential_tail_trace(1, 1.0, m) for m in range(0, 30, 3)]
    assert all(x > y for x, y in zip(tails, tails[1:]))
    assert tails[-1] < 1e-10


def test_quadrature_weights():
    g = build_quadrature(1, 4)
    assert g.weights.sum() == pytest.approx(2 * math.pi, rel=1e-15)
    g2 = build_quadrature(2, 7)
    assert g2.weights.sum() == pytest.approx(4 * math.pi ** 2, rel=1e-12)
    with pytest.raises(ConfigError):
        build_quadrature(1, 1)


def test_quadrature_norm_of_first_mode():
    b = build_basis(1, 1)
    g = build_quadrature(1, 64)
    assert gram_matrix(b, g)[1, 1] == pytest.approx(1.0, abs=1e-10)


def test_gram_d2_order32():
    b = build_basis(2, 3).truncate(6)
    G = gram_matrix(b, build_quadrature(2, 32))
    assert np.max(np.abs(G - np.eye(6))) < 1e-8


def test_quadrature_exactness_bound():
    # products are exact while the per-axis frequency sum stays below 2 (order - 1)
    order = 9
    g = build_quadrature(1, order)
    b = build_basis(1, 2 * (order - 1))
    G = gram_matrix(b, g)
    exact = G[: order - 1, : order - 1]
    assert np.max(np.abs(exact - np.eye(order - 1))) < 1e-13
    assert abs(G[order - 1, order - 1] - 1.0) > 0.5


def test_project_basis_function():
    b = build_basis(1, 4)
    g = build_quadrature(1, 64)
    c = project(b.evaluate(g.nodes)[:, 2], b, g)
    np.testing.assert_allclose(c, np.eye(5)[2], atol=1e-8)


@pytest.mark.parametrize("d", [1, 2])
def test_project_constant(d):
    b = build_basis(d, 2)
    g = build_quadrature(d, 16)
    c = project(np.full(g.n_nodes, 0.7), b, g)
    expect = np.zeros(b.n_modes)
    expect[0] = 0.7 * math.sqrt(2 * math.pi) ** d
    np.testing.assert_allclose(c, expect, atol=1e-8)


def test_project_length_mismatch():
    b = build_basis(1, 2)
    with pytest.raises(ConfigError):
        project(np.ones(10), b, build_quadrature(1, 11))


def test_reconstruct_constant_and_zero():
    b = build_basis(1, 3)
    u = np.zeros(4)
    u[0] = math.sqrt(2 * math.pi)
    assert reconstruct(u, b, 2.0) == pytest.approx(1.0, abs=1e-15)
    np.testing.assert_array_equal(reconstruct(np.zeros(4), b, np.linspace(0, 6, 5)), 0.0)


def test_round_trip_smooth_field():
    # smooth even field: its cosine coefficients decay geometrically
    g = build_quadrature(1, 128)
    x = g.nodes[:, 0]
    field = np.exp(np.cos(x / 2))
    for cutoff, tol in [(8, 1e-6), (16, 1e-13)]:
        b = build_basis(1, cutoff)
        back = reconstruct(project(field, b, g), b, x)
        assert np.max(np.abs(back - field)) < tol


def test_basis_json_round_trip():
    b = noise_spectrum_exponential(build_basis(2, 2), 1.0)
    data = json.loads(b.to_json())
    assert set(data) >= {"d", "cutoff", "indices", "lambda_sq", "lipschitz"}
    b2 = SpectralBasis.from_dict(data)
    assert b2.indices == b.indices
    np.testing.assert_array_equal(b2.eigenvalues, b.eigenvalues)
    np.testing.assert_array_equal(b2.lipschitz, b.lipschitz)


def test_continuity_sums_stabilise():
    g = build_quadrature(1, 256)
    vals = [continuity_sums(noise_spectrum_exponential(build_basis(1, c), 1.0), g.nodes)
            for c in (10, 20, 40)]
    assert all(np.isfinite(v).all() for v in map(np.array, vals))
    assert abs(vals[1][0] - vals[2][0]) < 1e-10
    assert abs(vals[1][1] - vals[2][1]) < 1e-6


def test_default_quadrature_order():
    assert default_quadrature_order(build_basis(1, 4)) == 128
    assert default_quadrature_order(build_basis(1, 31)) == 248
    assert default_quadrature_order(build_basis(2, 4)) == 64


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 2), st.integers(0, 6))
def test_orthonormality_property(d, cutoff):
    b = build_basis(d, cutoff)
    g = build_quadrature(d, default_quadrature_order(b))
    assert np.max(np.abs(gram_matrix(b, g) - np.eye(b.n_modes))) < 1e-8


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 2), st.integers(0, 8))
def test_uniform_bound_property(d, cutoff):
    b = build_basis(d, cutoff)
    g = build_quadrature(d, 33)
    assert np.max(np.abs(b.evaluate(g.nodes))) <= math.pi ** (-d / 2) + 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 10), st.integers(1, 10), st.floats(0.1, 3.0))
def test_truncation_prefix_property(n1, n2, xi):
    b = noise_spectrum_exponential(build_basis(2, 4), xi)
    small, big = sorted((n1, n2))
    assert b.truncate(big).indices[:small] == b.truncate(small).indices
    traces = [b.truncate(n).partial_trace() for n in range(1, b.n_modes + 1)]
    assert all(x <= y for x, y in zip(traces, traces[1:]))
