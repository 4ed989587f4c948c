"""Forward problem: fundamental system c, s of -u'' + q u = mu^2 u, the
characteristic determinant and its Paley-Wiener remainder.

The integrator is a fixed-step fourth-order Magnus scheme on the first-order
system (u, u').  Each step propagator is the exponential of a traceless 2x2
matrix, so the Wronskian c s' - c' s is preserved up to rounding, and the
scheme is exact for piecewise-constant q regardless of mu.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from numba import njit

from .errors import InvalidPotential
from .potential import Potential, simpson_weights

MIN_STEPS = 4096
_SQRT3 = math.sqrt(3.0)


def default_steps(mu) -> int:
    m = float(np.max(np.abs(mu))) if np.size(mu) else 0.0
    n = max(MIN_STEPS, int(math.ceil(32.0 * m * math.pi)))
    return n + (n % 2)


def _gauss_samples(q: Potential, steps: int):
    cache = q.__dict__.setdefault("_gauss_cache", {})
    if steps not in cache:
        h = math.pi / steps
        left = np.arange(steps) * h
        q1 = q(left + h * (0.5 - _SQRT3 / 6))
        q2 = q(left + h * (0.5 + _SQRT3 / 6))
        if not (np.all(np.isfinite(q1)) and np.all(np.isfinite(q2))):
            raise InvalidPotential("potential evaluates to non-finite values")
        if len(cache) > 8:
            cache.clear()
        cache[steps] = ((q1 + q2) / 2, (_SQRT3 / 12) * h * h * (q1 - q2))
    return cache[steps]


@njit(cache=True)
def _step(qk, dk, lam, h):
    """Step matrix minus the identity: (e11 - 1, e12, e21, e22 - 1).

    Keeping cosh - 1 instead of cosh avoids a rounding bias that would
    otherwise repeat in every step and grow linearly with the step count.
    """
    b = h * (qk - lam)
    w2 = dk * dk + h * b
    if abs(w2) < 2e-3:
        chm1 = w2 * (1 / 2 + w2 * (1 / 24 + w2 * (1 / 720 + w2 * (1 / 40320 + w2 / 3628800))))
        sh = 1.0 + w2 * (1 / 6 + w2 * (1 / 120 + w2 * (1 / 5040 + w2 * (1 / 362880 + w2 / 39916800))))
    elif abs(w2) < 0.05:
        # Taylor series in w^2; 8 terms reach rounding level here
        chm1 = w2 * (1 / 2 + w2 * (1 / 24 + w2 * (1 / 720 + w2 * (1 / 40320 + w2 * (
            1 / 3628800 + w2 * (1 / 479001600 + w2 * (1 / 87178291200)))))))
        sh = 1.0 + w2 * (1 / 6 + w2 * (1 / 120 + w2 * (1 / 5040 + w2 * (1 / 362880 + w2 * (
            1 / 39916800 + w2 * (1 / 6227020800 + w2 * (1 / 1307674368000)))))))
    else:
        w = cmath.sqrt(w2)
        ew = cmath.exp(w)
        ewi = 1.0 / ew
        sh = (ew - ewi) / (2.0 * w)
        half = (cmath.exp(w / 2) - cmath.exp(-w / 2)) / 2.0
        chm1 = 2.0 * half * half
    return chm1 + sh * dk, sh * h, sh * b, chm1 - sh * dk


@njit(cache=True)
def _propagate(qbar, d, lam, h, out):
    for j in range(lam.size):
        c, cp, s, sp = 1.0 + 0j, 0j, 0j, 1.0 + 0j
        for k in range(qbar.size):
            m11, e12, e21, m22 = _step(qbar[k], d[k], lam[j], h)
            c, cp = c + (m11 * c + e12 * cp), cp + (e21 * c + m22 * cp)
            s, sp = s + (m11 * s + e12 * sp), sp + (e21 * s + m22 * sp)
        out[0, j] = c
        out[1, j] = s
        out[2, j] = cp
        out[3, j] = sp


@njit(cache=True)
def _propagate_path(qbar, d, lam, h, y):
    for j in range(lam.size):
        c, cp, s, sp = 1.0 + 0j, 0j, 0j, 1.0 + 0j
        y[0, j, 0] = c
        y[3, j, 0] = sp
        for k in range(qbar.size):
            m11, e12, e21, m22 = _step(qbar[k], d[k], lam[j], h)
            c, cp = c + (m11 * c + e12 * cp), cp + (e21 * c + m22 * cp)
            s, sp = s + (m11 * s + e12 * sp), sp + (e21 * s + m22 * sp)
            y[0, j, k + 1] = c
            y[1, j, k + 1] = cp
            y[2, j, k + 1] = s
            y[3, j, k + 1] = sp


@dataclass
class EndpointSolution:
    """c(pi), c'(pi), s(pi), s'(pi) at each mu (arrays broadcast like mu)."""

    mu: np.ndarray
    c_pi: np.ndarray
    c_prime_pi: np.ndarray
    s_pi: np.ndarray
    s_prime_pi: np.ndarray
    steps: int

    @property
    def wronskian_residual(self) -> np.ndarray:
        return np.abs(self.c_pi * self.s_prime_pi - self.c_prime_pi * self.s_pi - 1.0)

    def __iter__(self):
        return iter((self.c_pi, self.c_prime_pi, self.s_pi, self.s_prime_pi))


def fundamental_system(q: Potential, mu, steps: Optional[int] = None) -> EndpointSolution:
    """Integrate from x = 0 to pi with c(0)=s'(0)=1, c'(0)=s(0)=0."""
    mu_arr = np.asarray(mu, dtype=complex)
    flat = mu_arr.ravel()
    steps = default_steps(flat) if steps is None else int(steps)
    if steps < 64:
        raise ValueError("steps must be at least 64")
    h = math.pi / steps
    qbar, d = _gauss_samples(q, steps)
    lam = flat * flat
    out = np.empty((4, flat.size), dtype=complex)
    _propagate(qbar, d, lam, h, out)
    shape = mu_arr.shape
    c, s, cp, sp = (out[k].reshape(shape) for k in range(4))
    return EndpointSolution(mu_arr, c, cp, s, sp, steps)


def trajectory(q: Potential, mu, steps: Optional[int] = None):
    """Values of s, s', c, c' at the nodes x_k = k pi / steps for each mu.

    Returns ``(x, s, sp, c, cp)`` with arrays shaped (len(mu), steps + 1).
    """
    flat = np.atleast_1d(np.asarray(mu, dtype=complex))
    steps = default_steps(flat) if steps is None else int(steps)
    h = math.pi / steps
    qbar, d = _gauss_samples(q, steps)
    lam = flat * flat
    y = np.zeros((4, flat.size, steps + 1), dtype=complex)  # c, c', s, s'
    _propagate_path(qbar, d, lam, h, y)
    x = np.linspace(0.0, math.pi, steps + 1)
    return x, y[2], y[3], y[0], y[1]


def s_square_integral(q: Potential, mu, steps: Optional[int] = None):
    """int_0^pi s(x, mu)^2 dx (no conjugation) together with c(pi, mu)."""
    x, s, sp, c, cp = trajectory(q, mu, steps)
    w = simpson_weights(x.size, x[1] - x[0])
    return (s * s) @ w, c[:, -1]


@dataclass
class ProblemCollection:
    """The quadruple (alpha, gamma, theta, q) that fixes the spectrum."""

    alpha: complex
    gamma: complex
    theta: int
    q: Potential

    @classmethod
    def from_classification(cls, bc, q: Potential) -> "ProblemCollection":
        return cls(bc.alpha, bc.gamma, bc.theta, q)

    @property
    def beta(self) -> complex:
        """Coefficient of sin(pi mu)/mu in the canonical form."""
        return self.gamma + math.pi * self.q.mean / 2


def sign_term(theta: int) -> float:
    return -1.0 if theta == 0 else 1.0


def determinant_from_endpoints(alpha, gamma, theta, sol: EndpointSolution):
    return sign_term(theta) + alpha * sol.c_pi + (1 - alpha) * sol.s_prime_pi + gamma * sol.s_pi


def char_determinant(p: ProblemCollection, mu, steps: Optional[int] = None):
    sol = fundamental_system(p.q, mu, steps)
    val = determinant_from_endpoints(p.alpha, p.gamma, p.theta, sol)
    return val if np.ndim(mu) else complex(val)


def sinc_pi(mu):
    """sin(pi mu) / mu with the value pi at 0; valid for complex mu."""
    mu = np.asarray(mu, dtype=complex)
    small = np.abs(mu) < 1e-6
    safe = np.where(small, 1.0, mu)
    z2 = (math.pi * mu) ** 2
    return np.where(small, math.pi * (1 - z2 / 6 + z2 * z2 / 120), np.sin(math.pi * safe) / safe)


def constant_potential_determinant(alpha, gamma, theta, q0, mu):
    """Closed form for q = q0: c = s' = cos(pi nu), s = sin(pi nu)/nu, nu^2 = mu^2 - q0."""
    nu = np.sqrt(np.asarray(mu, dtype=complex) ** 2 - q0)
    cs = np.cos(math.pi * nu)
    return sign_term(theta) + alpha * cs + (1 - alpha) * cs + gamma * sinc_pi(nu)


@dataclass
class DeterminantModel:
    """Delta(mu) = (-1)^(theta+1) + cos(pi mu) + beta sin(pi mu)/mu + f(mu)/mu.

    ``remainder`` holds f on the real grid ``mu``.  ``source`` (optional)
    evaluates Delta exactly at complex points.
    """

    theta: int
    beta: complex
    mu: np.ndarray
    remainder: np.ndarray
    source: Optional[Callable] = None

    def __call__(self, mu):
        mu = np.asarray(mu, dtype=complex)
        if self.source is not None:
            return self.source(mu)
        if np.any(np.abs(mu.imag) > 0):
            raise ValueError("sampled determinant model only evaluates on the real axis")
        return self.leading(mu) + self.f_over_mu(mu.real)

    def leading(self, mu):
        mu = np.asarray(mu, dtype=complex)
        return sign_term(self.theta) + np.cos(math.pi * mu) + self.beta * sinc_pi(mu)

    def f_over_mu(self, t):
        from scipy.interpolate import CubicSpline

        grid, f = self.mu, self.remainder
        g = np.where(np.abs(grid) > 1e-12, f / np.where(grid == 0, 1, grid), np.nan)
        ok = np.isfinite(g)
        re = CubicSpline(grid[ok], g[ok].real)
        im = CubicSpline(grid[ok], g[ok].imag)
        t = np.asarray(t, dtype=float)
        inside = (t >= grid.min()) & (t <= grid.max())
        return np.where(inside, re(t) + 1j * im(t), 0.0)

    def odd_defect(self) -> float:
        order = np.argsort(self.mu)
        grid, f = self.mu[order], self.remainder[order]
        mirrored = np.interp(-grid, grid, f.real) + 1j * np.interp(-grid, grid, f.imag)
        return float(np.max(np.abs(f + mirrored)))


def remainder_from_values(theta, beta, mu, delta):
    """f(mu) = mu (Delta - (-1)^(theta+1) - cos(pi mu)) - beta sin(pi mu)."""
    mu = np.asarray(mu, dtype=complex)
    return mu * (delta - sign_term(theta) - np.cos(math.pi * mu)) - beta * np.sin(math.pi * mu)


def pw_remainder(p: ProblemCollection, grid, steps: Optional[int] = None) -> DeterminantModel:
    grid = np.asarray(grid, dtype=float)
    delta = char_determinant(p, grid, steps)
    f = remainder_from_values(p.theta, p.beta, grid, delta)
    return DeterminantModel(p.theta, p.beta, grid, f, source=lambda m: char_determinant(p, m, steps))
