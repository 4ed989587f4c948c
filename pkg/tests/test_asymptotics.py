import math

import numpy as np
import pytest

from slinverse import asymptotics, bc, direct, potential, spectrum
from slinverse.asymptotics import JetSpec
from slinverse.errors import DerivativeUnavailable, FitDegenerate, NotInScope

X = np.linspace(0, math.pi, 201)


def test_sigma_constant():
    c = 1.7 + 0.2j
    s = asymptotics.sigma_recursion([np.full(X.size, c), np.zeros(X.size), np.zeros(X.size)], 2)
    assert np.allclose(s[0], c) and np.allclose(s[1], 0) and np.allclose(s[2], -c * c)


def test_sigma_linear():
    s = asymptotics.sigma_recursion([X, np.ones_like(X), np.zeros_like(X)], 2)
    assert np.allclose(s[1], -1) and np.allclose(s[2], -X ** 2)


def test_sigma_sine_fourth_term():
    d = [np.sin(X), np.cos(X), -np.sin(X), -np.cos(X)]
    s = asymptotics.sigma_recursion(d, 3)
    assert np.allclose(s[1], -np.cos(X), atol=1e-14)
    assert np.allclose(s[2], -np.sin(X) - np.sin(X) ** 2, atol=1e-14)
    # -sigma_3' - 2 sigma_1 sigma_2 by hand
    assert np.max(np.abs(s[3] - (np.cos(X) + 2 * np.sin(2 * X)))) < 1e-10


def test_sigma_needs_enough_derivatives():
    with pytest.raises(DerivativeUnavailable):
        asymptotics.sigma_recursion([X, np.ones_like(X)], 3)


def test_sigma_leading_term_law():
    # q = 1 + x^2 - x^3/6 + x^4/24 + x^5: zeroing q^(k) changes sigma_{k+1} by (-1)^k q^(k) only
    c = np.array([1, 0, 1, -1 / 6, 1 / 24, 1.0])
    P = np.polynomial.Polynomial(c)
    d = [P.deriv(j)(X) if j else P(X) for j in range(5)]
    full = asymptotics.sigma_recursion(d, 4)
    for k in range(1, 5):
        cut = list(d)
        cut[k] = np.zeros_like(X)
        part = asymptotics.sigma_recursion(cut, 4)
        assert np.allclose(full[k] - part[k], (-1) ** k * d[k], atol=1e-9)


def test_derivatives_of_sine():
    d = asymptotics.derivatives_of(potential.parse_expression("sin(x)"), 3, 101)
    x = np.linspace(0, math.pi, 101)
    for j, want in enumerate([np.sin(x), np.cos(x), -np.sin(x), -np.cos(x)]):
        assert np.max(np.abs(d[j] - want)) < 1e-8


def test_jump_target_type_three_is_zero():
    cls = bc.classify(bc.matrix_from_parameters(2.0, 0.0, 0))
    assert asymptotics.boundary_jump_target(cls) == 0


def test_jump_target_arithmetic():
    assert abs(asymptotics.boundary_jump_target({"14": 1, "23": 3, "34": 2}) - 1) < 1e-15


def test_jump_target_rejects_non_regular_and_type_one():
    with pytest.raises(NotInScope):
        asymptotics.boundary_jump_target({"14": -1, "23": 1, "34": 1})
    with pytest.raises(NotInScope):
        asymptotics.boundary_jump_target(bc.classify(bc.PERIODIC))


def _pairs_spectrum(values, theta=0):
    return spectrum.Spectrum(theta, 0j if theta == 0 else None,
                             [(n, v, v) for n, v in values], [True] * len(values))


def test_fit_synthetic_exact():
    n = np.arange(1, 41)
    m = 2.0 * n
    sp = _pairs_spectrum(list(zip(n, m + 1 / m + 0.5 / m ** 2)))
    fit = asymptotics.fit_asymptotics(sp, 0, 1)
    assert abs(fit.V1 - 1) < 1e-8 and abs(fit.V2 - 0.5) < 1e-8
    assert np.max(np.abs(fit.residuals)) < 1e-8


def test_fit_recovers_higher_coefficients_to_rounding_level():
    n = np.arange(5, 60)
    m = 2.0 * n - 1
    V = np.array([0.3 - 0.1j, -0.2, 0.05j, 0.7])
    vals = m + sum(V[k] / m ** (k + 1) for k in range(4))
    fit = asymptotics.fit_asymptotics(_pairs_spectrum(list(zip(n, vals)), 1), 1, 3)
    # V_k multiplies m^-k, so double rounding limits it to about 1e-16 m^k
    bound = 1e-14 * m.max() ** np.arange(1, 5)
    assert np.all(np.abs(fit.V - V) < bound)


def test_fit_degenerate_range():
    sp = _pairs_spectrum([(n, 2.0 * n) for n in range(1, 4)])
    with pytest.raises(FitDegenerate):
        asymptotics.fit_asymptotics(sp, 0, 2)


def test_fit_free_type_three():
    sp = spectrum.compute_spectrum(direct.ProblemCollection(2.0, 0.0, 0, potential.zero()), 20)
    fit = asymptotics.fit_asymptotics(sp, 0, 1, (5, 20))
    assert abs(fit.V1) < 1e-8
    assert asymptotics.v1_identity(0.0, 0.0) == 0


def test_fit_sine_type_three_matches_identity():
    q = potential.parse_expression("sin(x)")
    sp = spectrum.compute_spectrum(direct.ProblemCollection(2.0, 0.0, 0, q), 60)
    fit = asymptotics.fit_asymptotics(sp, 0, 1, (10, 60))
    assert abs(fit.V1 - asymptotics.v1_identity(0.0, q.mean)) < 1e-3
    assert abs(asymptotics.v1_identity(0.0, q.mean) - 1 / math.pi) < 1e-12
    trend = fit.residual_trend()
    assert trend[-1] < trend[0]
    fit2 = asymptotics.fit_asymptotics(sp, 0, 2, (10, 60))
    assert abs(fit2.V1 - 1 / math.pi) < 1e-6
    t2 = fit2.residual_trend()
    assert t2[-1] < t2[0]


def test_smoothstep_is_a_flat_step():
    x = np.linspace(-0.5, 1.5, 201)
    s = asymptotics.smoothstep(x)
    assert np.all(s[x <= 0] == 0) and np.all(np.abs(s[x >= 1] - 1) < 1e-14)
    assert np.all(np.diff(s) >= -1e-15)
    # eighth-order flatness at 0: s(t) = O(t^9)
    assert asymptotics.smoothstep(1e-2) < 1e-12


def test_smoothing_zero_with_zero_jets():
    f = potential.zero()
    g, rep = asymptotics.smooth_approximant_with_jets(f, 0.1, JetSpec([0, 0], [0, 0]))
    assert g.norm() < 0.1
    h, gg = asymptotics.endpoint_jets(g, 2, h=1e-4)
    assert np.max(np.abs(h + gg)) < 1e-7


def test_smoothing_zero_with_end_values():
    g, rep = asymptotics.smooth_approximant_with_jets(potential.zero(), 0.5, JetSpec([1], [2]))
    v = g(np.array([0.0, math.pi]))
    assert abs(v[0] - 1) < 1e-14 and abs(v[1] - 2) < 1e-14
    assert g.norm() < 0.5


def test_smoothing_step_function_with_jump_target():
    x = np.linspace(0, math.pi, 4097)
    f = potential.Potential(np.where(x < math.pi / 2, 0.0, 1.0), interpolation="linear")
    jump = asymptotics.boundary_jump_target({"14": 1, "23": 3, "34": 2})
    g, rep = asymptotics.smooth_approximant_with_jets(f, 0.1, JetSpec([0.0], [0.0 + jump]))
    assert f.l2_distance(g) < 0.1
    v = g(np.array([0.0, math.pi]))
    assert abs(v[1] - v[0] - jump) < 1e-8


def test_endpoint_jets_exact_on_polynomials():
    P = np.polynomial.Polynomial([1.0, -2.0, 0.5, 0.25])
    left, right = asymptotics.endpoint_jets(lambda x: P(x) + 0j, 4, h=1e-2)
    assert np.allclose(left, [P.deriv(j)(0.0) if j else P(0.0) for j in range(4)], atol=1e-9)
    assert np.allclose(right, [P.deriv(j)(math.pi) if j else P(math.pi) for j in range(4)], atol=1e-9)


def test_smoothing_matches_higher_jets():
    h = [0.05, -0.1, 0.3, 0.2]
    gj = [0.1, 0.2, -0.1, 0.3]
    f = potential.parse_expression("sin(x)")
    g, rep = asymptotics.smooth_approximant_with_jets(f, 0.5, JetSpec(h, gj))
    assert f.l2_distance(g) < 0.5
    # the approximant is the jet polynomial on the inner half of each collar
    step = min(rep.collar, rep.collar_left, rep.collar_right) / 2 / 6
    left, right = asymptotics.endpoint_jets(g, 4, h=step)
    assert np.max(np.abs(np.array(left) - h)) < 1e-7
    assert np.max(np.abs(np.array(right) - gj)) < 1e-7


def test_smoothing_matches_steep_jets_to_second_order():
    h = [0.5, -1.0, 0.3]
    gj = [1.5, 0.25, -0.4]
    f = potential.parse_expression("sin(x) + 0.5")
    g, rep = asymptotics.smooth_approximant_with_jets(f, 0.2, JetSpec(h, gj))
    assert f.l2_distance(g) < 0.2
    step = min(rep.collar, rep.collar_left, rep.collar_right) / 2 / 4
    left, right = asymptotics.endpoint_jets(g, 3, h=step)
    assert np.max(np.abs(np.array(left) - h)) < 1e-7
    assert np.max(np.abs(np.array(right) - gj)) < 1e-7
