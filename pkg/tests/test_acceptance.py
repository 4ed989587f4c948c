"""Acceptance criteria 1-10; each test prints one PASS/FAIL line."""

import math
import time

import numpy as np
import pytest

from oracles import fd_dirichlet
from slinverse import asymptotics, bc, direct, entire, gl, pipeline, potential, spectrum
from slinverse.entire import HadamardModel

TYPE_III = (2.0, 0.0, 0)
SINE = "0.2*sin(x)"


@pytest.fixture
def verdict(capsys):
    def emit(k, ok, detail, elapsed=None):
        t = "" if elapsed is None else f" ({elapsed:.1f} s)"
        with capsys.disabled():
            print(f"\nACCEPTANCE {k:2d}: {'PASS' if ok else 'FAIL'} {detail}{t}")
        assert ok, detail

    return emit


@pytest.fixture(scope="module")
def sine_spectrum():
    q = potential.parse_expression(SINE)
    t0 = time.perf_counter()
    sp = spectrum.compute_spectrum(direct.ProblemCollection(*TYPE_III, q), 60)
    return q, sp, time.perf_counter() - t0


def test_criterion_01_closed_form_determinants(verdict):
    t0 = time.perf_counter()
    mu = np.arange(0, 2001) * 0.01 + 0j
    q = potential.zero()
    err = 0.0
    for alpha, gamma, theta in [(0.5, 0.0, 0), (0.5, 0.0, 1), (2.0, 0.0, 0), (2.0, 1.0, 0)]:
        got = direct.char_determinant(direct.ProblemCollection(alpha, gamma, theta, q), mu)
        want = ((-1.0) ** (theta + 1) + alpha * np.cos(np.pi * mu) + (1 - alpha) * np.cos(np.pi * mu)
                + gamma * direct.sinc_pi(mu))
        err = max(err, float(np.abs(got - want).max()))
    dt = time.perf_counter() - t0
    verdict(1, err <= 1e-9 and dt < 10, f"max error {err:.2e} (tol 1e-9)", dt)


def _random_potential(rng):
    k = np.arange(1, 7)
    a = (rng.normal(size=6) + 1j * rng.normal(size=6)) / k
    b = (rng.normal(size=6) + 1j * rng.normal(size=6)) / k
    c0 = rng.normal() + 1j * rng.normal()

    def f(x, a=a, b=b, c0=c0):
        t = np.multiply.outer(np.asarray(x, dtype=float), k)
        return c0 + np.cos(t) @ a + np.sin(t) @ b

    q = potential.from_function(f)
    scale = rng.uniform(0.1, 5.0) / q.norm()
    return potential.from_function(lambda x, f=f, s=scale: s * f(x))


def test_criterion_02_wronskian(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst, strip = 0.0, 0.0
    for _ in range(200):
        q = _random_potential(rng)
        assert q.norm() <= 5 + 1e-12
        mu_real = rng.uniform(-30, 30, 4) + 0j
        worst = max(worst, float(direct.fundamental_system(q, mu_real, 4096).wronskian_residual.max()))
        # also the strip |Im mu| <= 1 inside |mu| <= 30
        mu_c = rng.uniform(-29, 29, 2) + 1j * rng.uniform(-1, 1, 2)
        strip = max(strip, float(direct.fundamental_system(q, mu_c, 4096).wronskian_residual.max()))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-9 and strip <= 1e-9 and dt < 60
    verdict(2, ok, f"max residual real {worst:.2e}, strip {strip:.2e} (tol 1e-9)", dt)


def test_criterion_03_dirichlet_oracle(verdict):
    t0 = time.perf_counter()
    cases = {"0": lambda x: 0 * x, "1": lambda x: 1 + 0 * x, "x": lambda x: x, "sin(x)": np.sin}
    worst = 0.0
    for expr, qf in cases.items():
        got = spectrum.dirichlet_spectrum(potential.parse_expression(expr), 10).roots ** 2
        want = fd_dirichlet(qf) ** 2
        worst = max(worst, float(np.max(np.abs(got - want) / np.abs(want))))
    dt = time.perf_counter() - t0
    verdict(3, worst <= 1e-5 and dt < 60, f"max relative eigenvalue error {worst:.2e} (tol 1e-5)", dt)


def test_criterion_04_hadamard_identity(verdict):
    re = np.linspace(-20, 20, 801)
    im = np.linspace(-1, 1, 21)
    mu = (re[None, :] + 1j * im[:, None]).ravel()
    mu = mu[np.abs(mu) <= 20]
    err = 0.0
    for theta in (0, 1):
        pairs = [(2 * n - theta, 2 * n - theta) for n in range(1, 11)]
        hm = HadamardModel(theta, pairs)
        want = (-1.0) ** (theta + 1) + np.cos(np.pi * mu)
        err = max(err, float(np.abs(hm(mu) - want).max()))
    verdict(4, err <= 1e-10, f"max error {err:.2e} (tol 1e-10)")


def test_criterion_05_truncation_trend(verdict, sine_spectrum):
    q, sp, t_sp = sine_spectrum
    t0 = time.perf_counter()
    fit = asymptotics.fit_asymptotics(sp, 0, 1, (10, 60))
    hm = HadamardModel.from_spectrum(sp, fit.V1, fit.V2)
    p = direct.ProblemCollection(*TYPE_III, q)
    rep = entire.lemma5_diagnostic(hm, [10, 40], window=50,
                                   reference=lambda m: direct.char_determinant(p, m))
    dt = time.perf_counter() - t0 + t_sp
    n10, n40 = rep.norms
    verdict(5, n40 < 0.5 * n10 and dt < 300, f"norm N=10 {n10:.3e}, N=40 {n40:.3e} (need < 0.5x)", dt)


def test_criterion_06_round_trip(verdict):
    t0 = time.perf_counter()
    q = potential.parse_expression(SINE)
    dd = spectrum.dirichlet_spectrum(q, 40)
    q0 = gl.mean_from_dirichlet(dd.roots)
    data = gl.SpectralData.from_dirichlet(dd, shift=q0)
    errors = {}
    for grid in (129, 257, 513):
        k = gl.solve_all(gl.build_F_kernel(data, grid, tail="asymptotic"))
        qh = gl.potential_from_kernel(np.diag(k.K_values), k.x_grid, shift=q0)
        errors[grid] = q.l2_distance(qh)
    rep = gl.verify_reconstruction(qh, data)
    resid = max(rep["s_pi"], rep["c_pi"], rep["s_prime_pi"])
    dt = time.perf_counter() - t0
    e = [errors[g] for g in (129, 257, 513)]
    ok = e[2] <= 5e-3 and resid <= 1e-4 and e[0] > e[1] > e[2] and dt < 600
    detail = (f"L2 errors 129/257/513 = {e[0]:.2e}/{e[1]:.2e}/{e[2]:.2e} (tol 5e-3, monotone), "
              f"verify residual {resid:.2e} (tol 1e-4)")
    verdict(6, ok, detail, dt)


def test_criterion_07_norming_root_selection(verdict):
    rng = np.random.default_rng(7)
    n = np.arange(1, 41)
    worst, bad = 0.0, 0
    for _ in range(500):
        while True:
            alpha = rng.uniform(-3, 4)
            if min(abs(alpha), abs(alpha - 0.5), abs(alpha - 1)) > 0.05:
                break
        # admissible data: u+ = alpha c + (1 - alpha)/c with c_n near (-1)^n
        delta = (rng.normal(size=n.size) + 1j * rng.normal(size=n.size)) * 0.1 / n
        c_true = (-1.0) ** n * (1 + delta)
        u = alpha * c_true + (1 - alpha) / c_true
        sderiv = math.pi * (-1.0) ** n / n * (1 + 0.05j * rng.normal(size=n.size) / n)
        mus = n + 0.1 * rng.normal(size=n.size) / n + 0j
        data = gl.choose_norming_roots(u, alpha, sderiv, mus, 0)
        worst = max(worst, float(gl.quadratic_residual(data, u, alpha).max()))
        bad += not data.check_halfplane().ok
    verdict(7, worst <= 1e-10 and bad == 0,
            f"max quadratic residual {worst:.2e} (tol 1e-10), half-plane failures {bad}/500")


def test_criterion_08_asymptotics(verdict, sine_spectrum):
    q, sp, t_sp = sine_spectrum
    fit = asymptotics.fit_asymptotics(sp, 0, 1, (10, 60))
    want = asymptotics.v1_identity(0.0, q.mean)
    err = abs(fit.V1 - want)
    verdict(8, err <= 1e-3, f"V1 {fit.V1.real:.8f} vs {want.real:.8f}, error {err:.2e} (tol 1e-3)")


def test_criterion_09_theorem3(verdict):
    t0 = time.perf_counter()
    q = potential.parse_expression(SINE)
    cls = bc.classify(bc.matrix_from_parameters(*TYPE_III))
    r15 = pipeline.theorem3_pipeline(q, 0.1, cls, 15)
    r30 = pipeline.theorem3_pipeline(q, 0.1, cls, 30)
    dt = time.perf_counter() - t0
    gaps = {r["n"]: r["gap"] for r in r15.report["gap_table"]}
    window = [gaps[n] for n in range(16, 26)]
    d15, d30 = r15.report["norms"]["q_qN"], r30.report["norms"]["q_qN"]
    ok = max(window) <= 1e-6 and d30 <= 1.1 * d15 and dt < 1200
    verdict(9, ok, f"max gap 15<n<=25 {max(window):.2e} (tol 1e-6), "
                   f"|q-q15| {d15:.3e}, |q-q30| {d30:.3e}", dt)


def test_criterion_10_qualitative_facts(verdict):
    q = potential.zero()
    sp3 = spectrum.compute_spectrum(direct.ProblemCollection(2.0, 0.0, 0, q), 30)
    sp4 = spectrum.compute_spectrum(direct.ProblemCollection(2.0, 1.0, 0, q), 30)
    v3 = spectrum.classify_asymptotic(sp3, 1e-6, 30)
    v4 = spectrum.classify_asymptotic(sp4, 1e-6, 30)
    ok = v3 == "asymptotically_multiple" and v4 == "asymptotically_simple"
    verdict(10, ok, f"type III: {v3}, type IV: {v4}")
