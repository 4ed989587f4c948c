"""Eigenvalue asymptotics: the sigma recursion, the endpoint jump condition,
least-squares fits of the expansion coefficients V_m and smooth potentials
with prescribed endpoint jets."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from math import comb
from typing import Optional, Sequence

import numpy as np

from .bc import BoundaryClassification
from .errors import DerivativeUnavailable, FitDegenerate, NotInScope
from .potential import Potential, l2_norm, simpson_weights

# --- sigma recursion -----------------------------------------------------------


def sigma_recursion(q_derivatives: Sequence[np.ndarray], p: int) -> list:
    """sigma_1 .. sigma_{p+1} on a grid.

    ``q_derivatives[j]`` holds q^(j) on the grid for j = 0..p.  sigma_1 = q,
    sigma_{k+1} = -sigma_k' - sum_{j=1}^{k-1} sigma_{k-j} sigma_j, with every
    derivative propagated exactly through the Leibniz rule.
    """
    if p < 0:
        raise ValueError("p must be non-negative")
    derivs = [np.asarray(d, dtype=complex) for d in q_derivatives]
    if len(derivs) < p + 1:
        raise DerivativeUnavailable(
            f"sigma_{p + 1} needs q up to order {p}; got {len(derivs) - 1}")
    # jets[k][j] = j-th derivative of sigma_{k+1}, available for j <= p - k
    jets = [derivs[: p + 1]]
    for k in range(1, p + 1):
        order = p - k
        new = []
        for j in range(order + 1):
            val = -jets[k - 1][j + 1]
            for i in range(1, k):
                a, b = jets[k - 1 - i], jets[i - 1]
                for r in range(j + 1):
                    val = val - comb(j, r) * a[r] * b[j - r]
            new.append(val)
        jets.append(new)
    return [jet[0] for jet in jets]


def derivatives_of(q: Potential, p: int, grid_size: Optional[int] = None, degree: int = 96):
    """q, q', ..., q^(p) on a uniform grid from a Chebyshev fit of q."""
    x = np.linspace(0.0, math.pi, grid_size or q.grid_size)
    Cheb = np.polynomial.chebyshev.Chebyshev
    xs = (1 - np.cos(np.pi * (np.arange(degree + 1) + 0.5) / (degree + 1))) * math.pi / 2
    vals = q(xs)

    def interp(v):
        c = Cheb.fit(xs, v, degree, domain=[0, math.pi])
        # drop the rounding-level tail, which derivatives would amplify
        scale = max(np.abs(c.coef).max(), 1e-300)
        keep = np.nonzero(np.abs(c.coef) > 1e-14 * scale)[0]
        return c.cutdeg(int(keep[-1]) if keep.size else 0)

    cheb, chi = interp(vals.real), interp(vals.imag)
    out = []
    for j in range(p + 1):
        out.append(cheb.deriv(j)(x) + 1j * chi.deriv(j)(x) if j else q(x))
    return out


# --- jump condition ---------------------------------------------------------------

def boundary_jump_target(cls) -> complex:
    """Required q(pi) - q(0) = 2 A34^2 / ((A14 + A23)(A23 - A14))."""
    minors = cls.minors if isinstance(cls, BoundaryClassification) else cls
    a14, a23, a34 = (complex(minors[k]) for k in ("14", "23", "34"))
    scale = max(abs(a14), abs(a23), 1e-300)
    if abs(a14 + a23) <= 1e-12 * scale:
        raise NotInScope("A14 + A23 = 0: conditions are not regular")
    if abs(a23 - a14) <= 1e-12 * scale:
        raise NotInScope("A14 = A23 (alpha = 1/2): jump condition applies to types III/IV only")
    return 2 * a34 ** 2 / ((a14 + a23) * (a23 - a14))


# --- asymptotic fit --------------------------------------------------------------------

@dataclass
class AsymptoticFit:
    V: np.ndarray
    l: int
    n: np.ndarray
    residuals: np.ndarray
    fixed_V1: Optional[complex] = None

    @property
    def V1(self) -> complex:
        return complex(self.V[0])

    @property
    def V2(self) -> complex:
        return complex(self.V[1]) if self.V.size > 1 else 0j

    def residual_trend(self, blocks: int = 4) -> list:
        """Max scaled residual over consecutive blocks of the fitted range."""
        parts = np.array_split(np.abs(self.residuals), min(blocks, self.residuals.size))
        return [float(p.max()) for p in parts if p.size]

    def as_dict(self) -> dict:
        return {
            "V": [[float(v.real), float(v.imag)] for v in self.V],
            "l": self.l,
            "n": [int(k) for k in self.n],
            "residual_trend": self.residual_trend(),
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2)


def fit_asymptotics(sp, theta: int, l: int, n_range=None, V1: Optional[complex] = None,
                    max_cond: float = 1e12) -> AsymptoticFit:
    """Least squares for (mu_{n,1} + mu_{n,2})/2 - (2n - theta) = sum_{m=1}^{l+1} V_m (2n - theta)^{-m}.

    Rows are weighted by n^{l+1}, matching the scaled residuals.

    With ``V1`` given, only V_2 .. V_{l+1} are fitted.
    """
    pairs = {n: (a, b) for n, a, b in sp.pairs}
    if n_range is None:
        ns = sorted(pairs)
    else:
        lo, hi = n_range
        ns = [n for n in sorted(pairs) if lo <= n <= hi]
    ns = np.array(ns, dtype=int)
    if ns.size < l + 3:
        raise FitDegenerate(f"need at least {l + 3} indices, have {ns.size}")
    m = (2 * ns - theta).astype(float)
    y = np.array([(pairs[n][0] + pairs[n][1]) / 2 for n in ns]) - m
    powers = np.arange(1, l + 2)
    A = m[:, None] ** (-powers[None, :].astype(float))
    if V1 is not None:
        y = y - V1 / m
        A = A[:, 1:]
    if A.shape[1]:
        # minimise the n^{l+1}-scaled residuals that the fit reports
        w = ns.astype(float) ** (l + 1)
        Aw = A * w[:, None]
        col = np.linalg.norm(Aw, axis=0)
        if np.linalg.cond(Aw / col) > max_cond:
            raise FitDegenerate("ill-conditioned asymptotic fit; widen the index range")
        coef, *_ = np.linalg.lstsq(Aw / col, y * w, rcond=None)
        coef = coef / col
    else:
        coef = np.zeros(0, dtype=complex)
    V = np.concatenate([[V1], coef]) if V1 is not None else coef
    V = np.asarray(V, dtype=complex)
    model = (m[:, None] ** (-powers[None, :].astype(float))) @ V
    resid = (y + (V1 / m if V1 is not None else 0) - model) * ns ** (l + 1)
    return AsymptoticFit(V, l, ns, resid, V1)


def v1_identity(gamma: complex, mean_q: complex) -> complex:
    """V1 = (gamma + pi <q> / 2) / pi."""
    return (gamma + math.pi * mean_q / 2) / math.pi


# --- smooth approximation with endpoint jets ---------------------------------------

def smoothstep(x, order: int = 8):
    """C^order step: 0 for x <= 0, 1 for x >= 1."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    N = order

    def half(t):
        return t ** (N + 1) * sum(comb(N + n, n) * comb(2 * N + 1, N - n) * (-t) ** n
                                  for n in range(N + 1))

    # S(x) = 1 - S(1 - x); evaluating near 0 only avoids cancellation
    return np.where(x <= 0.5, half(x), 1.0 - half(1.0 - x))


@dataclass
class JetSpec:
    """Derivative values at 0 (h) and at pi (g), orders 0..len-1."""

    h: list
    g: list

    def __post_init__(self):
        self.h = [complex(v) for v in self.h]
        self.g = [complex(v) for v in self.g]
        if len(self.h) != len(self.g):
            raise ValueError("jet lists must have equal length")

    @property
    def order(self) -> int:
        return len(self.h)


@dataclass
class SmoothingReport:
    degree: int
    collar: float
    collar_left: float
    collar_right: float
    distance: float
    bounds: dict = field(default_factory=dict)


def _cosine_fit(f: Potential, degree: int, fine: np.ndarray, fvals: np.ndarray):
    w = simpson_weights(fine.size, fine[1] - fine[0])
    k = np.arange(degree + 1)
    basis = np.cos(np.outer(k, fine))
    coef = (basis * fvals) @ w * (2 / math.pi)
    coef[0] /= 2
    return coef


def _cosine_eval(coef, x):
    k = np.arange(coef.size)
    return np.cos(np.outer(np.asarray(x, dtype=float), k)) @ coef


def smooth_approximant_with_jets(f: Potential, eps: float, jets: JetSpec,
                                 fine_size: int = 8193, max_degree: int = 4096,
                                 collar0: float = 0.5, order: int = 8):
    """f~ = T eta + P1 eta1 + P2 eta2 with ||f - f~|| < eps and f~^(i)(0) = h_i, f~^(i)(pi) = g_i.

    T is a cosine polynomial (degree doubled until ||f - T|| < eps/4), eta a
    C^order cutoff equal to 1 away from collars whose width is halved until
    ||T|| on them is below eps/4, and P1, P2 Taylor polynomials carrying the jets
    on collars shrunk until their norms are below eps/4.
    Returns ``(potential, report)``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if jets.order > order:
        raise ValueError(f"cutoffs are C^{order}; at most {order} jet orders supported")
    fine = np.linspace(0.0, math.pi, fine_size)
    fvals = f(fine)
    degree = 4
    while True:
        coef = _cosine_fit(f, degree, fine, fvals)
        err = l2_norm(fvals - _cosine_eval(coef, fine), fine)
        if err < eps / 4 or degree >= max_degree:
            break
        degree *= 2
    if err >= eps / 4:
        raise ValueError(f"cosine approximation did not reach eps/4 (error {err:.3g})")

    def collar_norm(func, lo, hi):
        x = np.linspace(lo, hi, 2049)
        return l2_norm(func(x), x)

    T = lambda x: _cosine_eval(coef, x)
    delta = collar0
    while (collar_norm(T, 0, delta) ** 2 + collar_norm(T, math.pi - delta, math.pi) ** 2) ** 0.5 >= eps / 4:
        delta /= 2
    fact = [math.factorial(i) for i in range(jets.order)]

    def P1(x):
        x = np.asarray(x, dtype=float)
        return sum(jets.h[i] / fact[i] * x ** i for i in range(jets.order)) + 0j * x

    def P2(x):
        x = np.asarray(x, dtype=float)
        return sum(jets.g[i] / fact[i] * (x - math.pi) ** i for i in range(jets.order)) + 0j * x

    d1 = collar0
    while collar_norm(P1, 0, d1) >= eps / 4:
        d1 /= 2
    d2 = collar0
    while collar_norm(P2, math.pi - d2, math.pi) >= eps / 4:
        d2 /= 2

    def approx(x):
        x = np.asarray(x, dtype=float)
        # each cutoff ramps over the outer half of its collar, so f~ equals P1 (P2)
        # exactly near 0 (pi) and the jets are checkable by finite differences
        ramp = lambda t, d: smoothstep(2 * t / d - 1, order)
        eta = ramp(x, delta) * ramp(math.pi - x, delta)
        eta1 = 1 - ramp(x, d1)
        eta2 = 1 - ramp(math.pi - x, d2)
        return T(x) * eta + P1(x) * eta1 + P2(x) * eta2

    pot = Potential(approx(f.x), "cubic", approx, label="smoothed")
    dist = l2_norm(fvals - approx(fine), fine)
    report = SmoothingReport(degree, delta, d1, d2, dist,
                             {"cosine": err, "eps": eps})
    return pot, report


def endpoint_jets(func, order: int, h: float = 2e-3, npts: Optional[int] = None) -> tuple:
    """Derivatives of orders 0..order-1 at 0 and pi by one-sided finite differences.

    The default stencil has order + 2 points, which is exact on the Taylor
    polynomial that smooth_approximant_with_jets leaves near each end.
    """
    npts = npts or order + 2
    left = np.arange(npts) * h
    right = math.pi - np.arange(npts) * h
    vl = func(left)
    vr = func(right)
    # one-sided weights from the Vandermonde system of offsets
    out_l, out_r = [], []
    # integer offsets keep the Vandermonde system well scaled
    V = np.vander(np.arange(npts, dtype=float), npts, increasing=True).T
    for j in range(order):
        rhs = np.zeros(npts)
        rhs[j] = math.factorial(j)
        w = np.linalg.solve(V, rhs) / h ** j
        out_l.append(complex(w @ vl))
        out_r.append(complex((-1) ** j * (w @ vr)))
    return out_l, out_r
