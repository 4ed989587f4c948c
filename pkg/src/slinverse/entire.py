"""Entire functions built from zero sets.

``SineTypeProduct`` is sin(pi mu)/mu with finitely many zeros moved.
``HadamardModel`` is the characteristic determinant written as a product
over its two eigenvalue series.  Infinite products are evaluated as ratios
against a closed-form reference with exactly doubled zeros, so only finitely
many factors differ from one and the remaining tail is summed in logarithms.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import zeta

from .errors import MultipleRootDerivative
from .potential import simpson_weights

TAIL_MIN = 200
_CHUNK = 256


def csinc(t):
    """sin(pi t) / (pi t) for complex t, equal to 1 at t = 0."""
    t = np.asarray(t, dtype=complex)
    small = np.abs(t) < 1e-4
    z2 = (math.pi * t) ** 2
    series = 1 - z2 / 6 + z2 * z2 / 120 - z2 ** 3 / 5040
    safe = np.where(small, 1.0, t)
    return np.where(small, series, np.sin(math.pi * safe) / (math.pi * safe))


def _right(mu):
    mu = np.asarray(mu, dtype=complex)
    return np.where(mu.real < 0, -mu, mu)


# --- sine-type product -----------------------------------------------------------

@dataclass
class SineTypeProduct:
    """s(mu) = (sin pi mu / mu) prod_{n<=N} (mu_n^2 - mu^2) / (n^2 - mu^2); mu_n = n for n > N."""

    perturbed_roots: np.ndarray

    def __post_init__(self):
        self.perturbed_roots = np.asarray(self.perturbed_roots, dtype=complex).ravel()

    @property
    def N(self) -> int:
        return self.perturbed_roots.size

    def root(self, n: int) -> complex:
        return complex(self.perturbed_roots[n - 1]) if n <= self.N else complex(n)

    def __call__(self, mu):
        return sine_product_eval(self, mu)


def _sine_factor(mu, roots, omit: Optional[int] = None):
    """pi sinc(mu) prod_k (mu_k^2 - mu^2)/(k^2 - mu^2), numerator ``omit`` left out."""
    mu = _right(mu)
    N = roots.size
    z = mu * mu
    j = np.floor(mu.real + 0.5).astype(int)
    out = np.ones(mu.shape, dtype=complex)
    near = (j >= 1) & (j <= N)
    # sin(pi mu) / (mu (j^2 - mu^2)) with the zero at j cancelled
    jj = np.where(near, j, 1)
    sign = np.where(jj % 2 == 0, 1.0, -1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        paired = -sign * math.pi * csinc(mu - jj) / (mu * (jj + mu))
    out *= np.where(near, paired, math.pi * csinc(mu))
    for k in range(1, N + 1):
        num = 1.0 if omit == k else roots[k - 1] ** 2 - z
        den = np.where(near & (j == k), 1.0, k * k - z)
        out *= num / den
    return out


def sine_product_eval(sp: SineTypeProduct, mu):
    val = _sine_factor(np.asarray(mu, dtype=complex), sp.perturbed_roots)
    return val if np.ndim(mu) else complex(val)


def product_derivative_at_root(sp: SineTypeProduct, n: int) -> complex:
    """ds/dmu at mu_n, differentiating the finite formula by the product rule."""
    if n < 1:
        raise ValueError("n must be positive")
    roots = sp.perturbed_roots
    mu_n = sp.root(n)
    others = [sp.root(k) for k in range(1, max(sp.N, n) + 2) if k != n]
    if any(abs(mu_n ** 2 - r ** 2) <= 1e-14 * (1 + abs(mu_n) ** 2) for r in others):
        raise MultipleRootDerivative(f"mu_{n} = {mu_n} is a repeated root")
    if n > sp.N:
        ratio = np.prod((roots ** 2 - n * n) / (np.arange(1, sp.N + 1) ** 2 - n * n))
        return complex(math.pi * (-1) ** n / n * ratio)
    # s(mu) = (mu_n^2 - mu^2) P_n(mu)  =>  sdot(mu_n) = -2 mu_n P_n(mu_n)
    p = _sine_factor(np.array([mu_n]), roots, omit=n)[0]
    return complex(-2 * mu_n * p)


# --- Hadamard model ---------------------------------------------------------------

def tilde_root(n, theta: int, V1: complex, V2: complex):
    m = 2 * np.asarray(n) - theta
    return m + V1 / m + V2 / (m * m)


@dataclass
class HadamardModel:
    """Delta(mu) from mu_0 (theta = 0), the pairs mu_{n,j} for n <= N and a doubled tail.

    For n > N both roots equal 2n - theta + V1/(2n - theta) + V2/(2n - theta)^2.
    """

    theta: int
    pairs: np.ndarray
    mu0: Optional[complex] = None
    V1: complex = 0.0
    V2: complex = 0.0

    def __post_init__(self):
        self.pairs = np.asarray(self.pairs, dtype=complex).reshape(-1, 2)
        if self.theta == 0 and self.mu0 is None:
            self.mu0 = 0.0
        if self.theta == 1:
            self.mu0 = None

    @property
    def N(self) -> int:
        return self.pairs.shape[0]

    def __call__(self, mu):
        return hadamard_eval(self, mu)

    @classmethod
    def from_spectrum(cls, sp, V1=0.0, V2=0.0, N: Optional[int] = None) -> "HadamardModel":
        pairs = [(a, b) for _, a, b in sp.pairs]
        idx = [n for n, _, _ in sp.pairs]
        if idx != list(range(1, len(idx) + 1)):
            raise ValueError("spectrum pairs must be consecutive from n = 1")
        if N is not None:
            pairs = pairs[:N]
        return cls(sp.theta, np.array(pairs, dtype=complex).reshape(-1, 2), sp.mu0, V1, V2)

    def to_json(self, path=None) -> str:
        def c(z):
            return [float(np.real(z)), float(np.imag(z))]

        doc = {
            "theta": self.theta,
            "mu0": None if self.mu0 is None else c(self.mu0),
            "V1": c(self.V1),
            "V2": c(self.V2),
            "pairs": [c(a) + c(b) for a, b in self.pairs],
        }
        text = json.dumps(doc, indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_json(cls, text_or_path) -> "HadamardModel":
        text = str(text_or_path)
        if not text.lstrip().startswith("{"):
            with open(text) as fh:
                text = fh.read()
        doc = json.loads(text)

        def z(v):
            if v is None:
                return None
            if isinstance(v, (list, tuple)):
                return complex(v[0], v[1] if len(v) > 1 else 0.0)
            return complex(v)

        pairs = [(complex(p[0], p[1]), complex(p[2], p[3])) for p in doc.get("pairs", [])]
        return cls(int(doc["theta"]), np.array(pairs, dtype=complex).reshape(-1, 2),
                   z(doc.get("mu0")), z(doc.get("V1", 0.0)), z(doc.get("V2", 0.0)))


def _tail_log(theta, V1, V2, n_tail, z):
    """sum_{n > n_tail} log of the tail ratio, leading terms via Hurwitz zeta."""
    a = n_tail + 1 - theta / 2

    def S(s):
        return 2.0 ** (-s) * zeta(s, a)

    return 2 * (2 * V2 * S(3) + V1 * V1 * S(4)) + 4 * V2 * (z - 2 * V1) * S(5)


def _hadamard_chunk(hm: HadamardModel, mu: np.ndarray) -> np.ndarray:
    theta, V1, V2 = hm.theta, complex(hm.V1), complex(hm.V2)
    z = mu * mu
    w = np.sqrt(z - 2 * V1)
    w = np.where(w.real < 0, -w, w)
    n_tail = max(TAIL_MIN, int(math.ceil(4 * np.max(np.abs(mu)))) + 2, hm.N)
    n = np.arange(1, n_tail + 1)
    m = (2 * n - theta).astype(float)
    nu2 = m * m + 2 * V1
    roots = np.empty((n_tail, 2), dtype=complex)
    roots[:] = tilde_root(n, theta, V1, V2)[:, None]
    roots[: hm.N] = hm.pairs[:n_tail]
    r2 = roots ** 2
    num = (r2[None, :, 0] - z[:, None]) * (r2[None, :, 1] - z[:, None])
    den = (nu2[None, :] - z[:, None]) ** 2
    # nearest reference zero, combined with the closed form to cancel the singularity
    k = np.floor((w.real + theta) / 2 + 0.5).astype(int)
    if theta == 1:
        k = np.maximum(k, 1)
    k = np.minimum(k, n_tail)
    rows = np.arange(mu.size)
    ratio = num / np.where(den == 0, 1.0, den)
    has_k = k >= 1
    ratio[rows[has_k], k[has_k] - 1] = num[rows[has_k], k[has_k] - 1]
    prod = np.prod(ratio, axis=1)
    sgn = -1.0 if theta == 0 else 1.0
    mk = 2 * k - theta
    with np.errstate(divide="ignore", invalid="ignore"):
        special = 2 * sgn * (math.pi ** 2 / 4) * csinc((w - mk) / 2) ** 2 / (mk + w) ** 2
    if theta == 0:
        mu0sq = complex(hm.mu0) ** 2
        with np.errstate(divide="ignore", invalid="ignore"):
            origin = np.where(has_k, special * (mu0sq - z) / np.where(has_k, 2 * V1 - z, 1.0),
                          (mu0sq - z) * (math.pi ** 2 / 2) * csinc(w / 2) ** 2)
        lead = origin
    else:
        lead = special
    tail = _tail_log(theta, V1, V2, n_tail, z)
    return lead * prod * np.exp(tail)


def hadamard_eval(hm: HadamardModel, mu):
    arr = np.asarray(mu, dtype=complex)
    flat = arr.ravel()
    out = np.empty(flat.size, dtype=complex)
    order = np.argsort(np.abs(flat))
    for start in range(0, flat.size, _CHUNK):
        idx = order[start:start + _CHUNK]
        out[idx] = _hadamard_chunk(hm, flat[idx])
    out = out.reshape(arr.shape)
    return out if np.ndim(mu) else complex(out)


def truncated_model(hm: HadamardModel, N: int) -> HadamardModel:
    """Keep pairs n <= N; beyond N both roots take the tilde value."""
    if N < 0:
        raise ValueError("N must be non-negative")
    return HadamardModel(hm.theta, hm.pairs[:N].copy(), hm.mu0, hm.V1, hm.V2)


# --- diagnostics --------------------------------------------------------------------

def window_grid(window: float = 50.0, step: float = 0.01) -> np.ndarray:
    n = int(round(2 * window / step))
    n += n % 2
    return np.linspace(-window, window, n + 1)


def windowed_norm(values, grid) -> float:
    w = simpson_weights(grid.size, grid[1] - grid[0])
    return float(np.sqrt(np.abs(values) ** 2 @ w))


@dataclass
class TruncationReport:
    N_list: list
    norms: list
    window: float
    monotone: bool

    def as_dict(self) -> dict:
        return {"N": self.N_list, "norms": self.norms, "window": self.window,
                "monotone": self.monotone}


def lemma5_diagnostic(hm: HadamardModel, N_list: Sequence[int], window: float = 50.0,
                      step: float = 0.01, reference: Optional[Callable] = None,
                      reference_values: Optional[np.ndarray] = None) -> TruncationReport:
    """||mu (Delta - Delta_N)|| on [-W, W] for each N.

    ``Delta`` is ``reference`` (e.g. the exact determinant) when given,
    otherwise the full model ``hm``.
    """
    grid = window_grid(window, step)
    half = grid[grid >= 0]
    if reference_values is not None:
        base = np.asarray(reference_values, dtype=complex)
    elif reference is not None:
        base = np.asarray(reference(half.astype(complex)), dtype=complex)
    else:
        base = hadamard_eval(hm, half.astype(complex))
    norms = []
    for N in N_list:
        diff = half * (base - hadamard_eval(truncated_model(hm, N), half.astype(complex)))
        # both functions are even in mu
        full = np.concatenate([diff[:0:-1], diff])
        norms.append(windowed_norm(full, grid))
    mono = all(b <= a for a, b in zip(norms, norms[1:]))
    return TruncationReport(list(N_list), norms, window, mono)


def pw_membership_check(grid, f_values, integer_values=None) -> dict:
    """Oddness defect, partial sums of |f(n)|^2 and the windowed L2 norm."""
    grid = np.asarray(grid, dtype=float)
    f = np.asarray(f_values, dtype=complex)
    order = np.argsort(grid)
    grid, f = grid[order], f[order]
    mirrored = np.interp(-grid, grid, f.real) + 1j * np.interp(-grid, grid, f.imag)
    odd = float(np.max(np.abs(f + mirrored))) if f.size else 0.0
    partial = []
    if integer_values is not None:
        partial = np.cumsum(np.abs(np.asarray(integer_values, dtype=complex)) ** 2).tolist()
    uniform = f.size > 2 and np.allclose(np.diff(grid), grid[1] - grid[0])
    if uniform:
        l2 = windowed_norm(f, grid)
    else:
        l2 = float(np.sqrt(trapezoid(np.abs(f) ** 2, grid))) if f.size > 1 else 0.0
    return {"odd_defect": odd, "integer_sum": partial, "window_l2": l2}
