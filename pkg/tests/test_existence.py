"""Thresholds, weight optimization, the order bracket, and equilibrium solving."""

import numpy as np
import pytest

from dcgrid import (DomainError, bracket, build_admittance, certify,
                    f_matrix, f_pair, fixed_point_solve, load_matrix,
                    multistart_newton, necessary_threshold, optimize_weights,
                    reduce_network, single_cpl_check)
from dcgrid.existence import _perron_on_support, _residual, analytic_thresholds
from conftest import HEAVY, LIGHT, variant

# equilibrium and bracket floor for the reference grid, published to 2 decimals
U_STAR_LIGHT = np.array([43.57, 43.49, 47.24, 56.59, 44.33, 52.05])
BRACKET_LOW_LIGHT = np.array([43.25, 43.18, 46.96, 56.39, 44.03, 51.82])
U_STAR_HEAVY = np.array([70.16, 65.99, 71.77, 84.23, 65.43, 75.50])

# the optimizer's weights for the light profile, scaled to max 1
Q_STAR_LIGHT = np.array([0.9984, 1.0, 0.9195, 0.7658, 0.9809, 0.8334])


@pytest.fixture(scope="module")
def light(table1_spec, table1_reduced):
    A = load_matrix(table1_reduced.Y1, table1_spec.p_vector())
    return table1_spec, table1_reduced, A


def test_load_matrix_nonnegative_with_zero_columns(table1_reduced):
    P = np.array([1000.0, 0.0, 1000.0, 500.0, 0.0, 500.0])
    A = load_matrix(table1_reduced.Y1, P)
    assert np.all(A >= 0)
    np.testing.assert_allclose(A[:, 1], 0.0)
    np.testing.assert_allclose(A[:, 4], 0.0)
    assert np.all(A[:, P > 0] > 0)


def test_necessary_threshold_values(table1_reduced):
    assert necessary_threshold(table1_reduced.Y1, LIGHT) == pytest.approx(89.2769, abs=1e-3)
    assert necessary_threshold(table1_reduced.Y1, HEAVY) == pytest.approx(134.9282, abs=1e-3)
    assert necessary_threshold(table1_reduced.Y1, np.zeros(6)) == 0.0


def test_perron_extension_to_zero_power_loads(table1_reduced):
    P = np.array([1000.0, 0.0, 1000.0, 500.0, 0.0, 500.0])
    A = load_matrix(table1_reduced.Y1, P)
    pair = _perron_on_support(A, P)
    np.testing.assert_allclose(A @ pair.eta, pair.chi * pair.eta, atol=1e-9 * pair.chi)
    assert np.all(pair.eta > 0)


def test_f_pair_diagonal_and_symmetry(light):
    _, _, A = light
    rng = np.random.default_rng(5)
    for _ in range(20):
        q = rng.uniform(0.2, 3.0, 6)
        v = A @ q
        for i in range(6):
            assert f_pair(q, A, i, i) == pytest.approx(4.0 * v[i] / q[i])
            for j in range(6):
                assert f_pair(q, A, i, j) == pytest.approx(f_pair(q, A, j, i))


def test_f_matrix_agrees_with_f_pair(light):
    _, _, A = light
    rng = np.random.default_rng(6)
    q = rng.uniform(0.2, 3.0, 6)
    F = f_matrix(A, q)
    for i in range(6):
        for j in range(6):
            assert F[i, j] == pytest.approx(f_pair(q, A, i, j), rel=1e-12)


def test_f_pair_rejects_bad_weights(light):
    _, _, A = light
    with pytest.raises(DomainError):
        f_pair(np.array([1.0, -1, 1, 1, 1, 1]), A, 0, 1)
    with pytest.raises(DomainError):
        f_matrix(A, np.zeros(6))


def test_optimizer_light_profile(light):
    spec, _, A = light
    pair = _perron_on_support(A, LIGHT)
    q, tau2 = optimize_weights(A, pair.eta)
    assert q.max() == pytest.approx(1.0)
    assert 89.2769 <= tau2 <= 89.64
    # lands on the same weights the reference implementation reports
    np.testing.assert_allclose(q, Q_STAR_LIGHT, atol=5e-3)


def test_analytic_thresholds_light(light):
    _, _, A = light
    pair = _perron_on_support(A, LIGHT)
    tau3, tau4 = analytic_thresholds(A, pair)
    assert tau3 == pytest.approx(90.5966, abs=1e-3)
    assert tau4 == pytest.approx(92.1933, abs=1e-3)


def test_bracket_feasible_at_reference_point(light):
    _, _, A = light
    q, _ = optimize_weights(A, _perron_on_support(A, LIGHT).eta)
    brk = bracket(q, 89.64, A)
    assert brk is not None
    np.testing.assert_allclose(brk.high, 89.64)
    assert np.max(np.abs(brk.low - BRACKET_LOW_LIGHT)) <= 0.2
    # F maps the bracket into itself at both corners
    for u in (brk.low, brk.high):
        img = 89.64 - A @ (1.0 / u)
        assert np.all(img >= brk.low - 1e-7)
        assert np.all(img <= brk.high + 1e-12)


def test_bracket_infeasible_below_threshold(light):
    _, _, A = light
    q, tau2 = optimize_weights(A, _perron_on_support(A, LIGHT).eta)
    assert bracket(q, 89.6, A) is None
    assert bracket(q, 0.99 * tau2, A) is None
    with pytest.raises(DomainError):
        bracket(-q, 89.64, A)
    with pytest.raises(DomainError):
        bracket(q, -1.0, A)


def test_fixed_point_light_equilibrium(light):
    spec, reduced, A = light
    q, _ = optimize_weights(A, _perron_on_support(A, LIGHT).eta)
    brk = bracket(q, 89.64, A)
    u, res = fixed_point_solve(89.64, reduced.Y1, LIGHT, brk)
    assert np.max(np.abs(u - U_STAR_LIGHT)) <= 0.05
    assert res <= 1e-8 * 89.64**2
    assert np.all(u >= brk.low - 1e-7)
    assert np.all(u <= brk.high + 1e-12)


def test_multistart_agrees_with_fixed_point(light):
    spec, reduced, A = light
    root = multistart_newton(89.64, reduced.Y1, LIGHT, seed=0)
    assert root is not None
    assert np.max(np.abs(root - U_STAR_LIGHT)) <= 0.05


def test_multistart_is_deterministic(light):
    _, reduced, _ = light
    a = multistart_newton(89.63, reduced.Y1, LIGHT, seed=0)
    b = multistart_newton(89.63, reduced.Y1, LIGHT, seed=0)
    assert a is not None and np.array_equal(a, b)
    c = multistart_newton(89.63, reduced.Y1, LIGHT, seed=1)
    assert c is not None  # a different seed may land on the same root


def test_multistart_finds_nothing_below_solvability(light):
    _, reduced, _ = light
    assert multistart_newton(89.6, reduced.Y1, LIGHT, seed=0) is None


def test_single_cpl_advisory_boundaries(table1_spec, table1_partition):
    k = table1_spec.k_diag()
    # aggregate conductance 2.5 S -> scalar threshold sqrt(4 sum(P) / G)
    assert single_cpl_check(table1_partition, k, 84.9, LIGHT)
    assert not single_cpl_check(table1_partition, k, 84.8, LIGHT)
    assert single_cpl_check(table1_partition, k, 135.51, HEAVY)
    assert not single_cpl_check(table1_partition, k, 129.0, HEAVY)


def test_certify_reference_point(table1_spec):
    cert = certify(table1_spec)
    assert cert.verdict == "certified-exists"
    assert not cert.uncertified_root
    assert cert.bracket_low is not None
    assert np.max(np.abs(cert.u_load - U_STAR_LIGHT)) <= 0.05
    assert cert.residual <= 1e-8 * 89.64**2
    d = cert.to_dict()
    assert d["verdict"] == "certified-exists"
    assert d["u_load"] is not None


def test_certify_heavy_profile(table1_spec):
    cert = certify(variant(table1_spec, u_ref=135.51, P=HEAVY))
    assert cert.verdict == "certified-exists"
    assert np.max(np.abs(cert.u_load - U_STAR_HEAVY)) <= 0.05
    assert cert.tau_necessary == pytest.approx(134.9282, abs=1e-3)
    assert cert.tau_optimized <= 135.51
    assert cert.tau_perron_vector == pytest.approx(136.6748, abs=1e-3)
    assert cert.tau_contraction == pytest.approx(140.3918, abs=1e-3)


def test_certify_undetermined_band_with_root(table1_spec):
    cert = certify(variant(table1_spec, u_ref=89.63))
    assert cert.verdict == "undetermined"
    assert cert.uncertified_root
    assert cert.bracket_low is None
    assert cert.u_load is not None
    assert cert.residual <= 1e-8 * 89.63**2


def test_certify_undetermined_band_without_root(table1_spec):
    cert = certify(variant(table1_spec, u_ref=89.6))
    assert cert.verdict == "undetermined"
    assert not cert.uncertified_root
    assert cert.u_load is None


def test_certify_necessary_failure(table1_spec):
    cert = certify(variant(table1_spec, u_ref=80.0))
    assert cert.verdict == "necessary-failed"
    assert cert.u_load is None
    assert cert.bracket_low is None


def test_certify_open_circuit_grid(table1_spec):
    cert = certify(variant(table1_spec, P=np.zeros(6)))
    assert cert.verdict == "certified-exists"
    np.testing.assert_allclose(cert.u_load, 89.64)
    assert cert.tau_necessary == 0.0
    assert cert.residual == 0.0


def test_certify_mixed_zero_power_loads(table1_spec):
    cert = certify(variant(table1_spec, P=[1000.0, 0.0, 1000.0, 500.0, 0.0, 500.0]))
    assert cert.verdict == "certified-exists"
    assert np.all(cert.u_load > 0.5 * 89.64)
    reduced = reduce_network(build_admittance(table1_spec),
                             table1_spec.k_diag(), 89.64)
    res = _residual(cert.u_load, reduced.Y1, 89.64,
                    np.array([1000.0, 0.0, 1000.0, 500.0, 0.0, 500.0]))
    assert np.max(np.abs(res)) <= 1e-8 * 89.64**2
