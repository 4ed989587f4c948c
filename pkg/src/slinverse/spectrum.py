"""Eigenvalue series of the characteristic determinant and Dirichlet spectra."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import direct
from .errors import RootIsolationFailure, SeriesAssignmentError
from .potential import Potential
from .roots import MERGE_RTOL, Box, Root, find_roots, roots_from_circles, winding_numbers

log = logging.getLogger(__name__)

# simplicity threshold for |mu_n sdot(pi, mu_n)|
DERIVATIVE_FLOOR = 1e-8


@dataclass
class Spectrum:
    """mu_0 (theta = 0 only) and the pairs (n, mu_{n,1}, mu_{n,2}), Re mu >= 0."""

    theta: int
    mu0: Optional[complex]
    pairs: list = field(default_factory=list)
    double: list = field(default_factory=list)

    @property
    def indices(self) -> list:
        return [n for n, _, _ in self.pairs]

    def gaps(self) -> np.ndarray:
        return np.array([abs(a - b) for _, a, b in self.pairs])

    def values(self) -> np.ndarray:
        out = [] if self.mu0 is None else [self.mu0]
        for _, a, b in self.pairs:
            out += [a, b]
        return np.array(out, dtype=complex)

    def rows(self):
        """(n, j, mu, multiplicity) rows, mu_0 reported as n = j = 0."""
        rows = []
        if self.mu0 is not None:
            rows.append((0, 0, self.mu0, 1))
        for (n, a, b), dbl in zip(self.pairs, self.double):
            m = 2 if dbl else 1
            rows.append((n, 1, a, m))
            rows.append((n, 2, b, m))
        return rows

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "j", "re_mu", "im_mu", "multiplicity"])
            for n, j, mu, m in self.rows():
                w.writerow([n, j, repr(float(mu.real)), repr(float(mu.imag)), m])

    def as_dict(self) -> dict:
        return {
            "theta": self.theta,
            "mu0": None if self.mu0 is None else [self.mu0.real, self.mu0.imag],
            "pairs": [[n, [a.real, a.imag], [b.real, b.imag], d]
                      for (n, a, b), d in zip(self.pairs, self.double)],
        }


def _right_half(z: complex, tol: float = 1e-12) -> bool:
    if abs(z) <= 1e-7:
        return True
    if abs(z.real) <= tol * (1 + abs(z)):
        return z.imag >= 0
    return z.real > 0


def _expand(roots):
    out = []
    for r in roots:
        if isinstance(r, Root):
            out.append((complex(r.value), int(r.multiplicity)))
        elif isinstance(r, tuple):
            out.append((complex(r[0]), int(r[1])))
        else:
            out.append((complex(r), 1))
    return out


def eigenvalue_series(roots, theta: int) -> Spectrum:
    """Bin zeros of Delta into index n = round((Re mu + theta) / 2).

    ``roots`` may be complex numbers, ``(value, multiplicity)`` tuples or
    :class:`Root` objects.  Zeros with Re mu < 0 are dropped (Delta is even).
    """
    bins: dict[int, list] = {}
    for z, m in _expand(roots):
        if not _right_half(z):
            continue
        n = int(math.floor((z.real + theta) / 2 + 0.5))
        if n < 0 or (theta == 1 and n == 0):
            raise SeriesAssignmentError(f"root {z} has no index")
        bins.setdefault(n, []).append((z, m))
    mu0 = None
    if theta == 0:
        zero_bin = bins.pop(0, [])
        # an even function: a zero at mu = 0 has even order; mu_0^2 counted once
        count = sum(m if abs(z) > 1e-7 else m // 2 for z, m in zero_bin)
        if count > 1:
            raise SeriesAssignmentError(f"{count} roots assigned to mu_0")
        if zero_bin:
            mu0 = zero_bin[0][0]
            if abs(mu0) <= 1e-7:
                mu0 = 0j
    sp = Spectrum(theta, mu0)
    for n in sorted(bins):
        vals = []
        for z, m in bins[n]:
            vals += [z] * m
        if len(vals) > 2:
            raise SeriesAssignmentError(f"{len(vals)} roots assigned to index {n}: {vals}")
        if len(vals) < 2:
            raise SeriesAssignmentError(f"index {n} has only {len(vals)} root(s)")
        vals.sort(key=lambda z: (z.real, z.imag))
        dbl = any(m >= 2 for _, m in bins[n])
        sp.pairs.append((n, vals[0], vals[1]))
        sp.double.append(dbl)
    return sp


def classify_asymptotic(sp: Spectrum, gap_tol: float, window: int) -> str:
    """Trailing-window verdict on the gaps |mu_{n,1} - mu_{n,2}|."""
    if window < 1 or len(sp.pairs) < window:
        return "undetermined"
    gaps = sp.gaps()[-window:]
    if np.all(gaps <= gap_tol):
        return "asymptotically_multiple"
    if np.all(gaps >= 10 * gap_tol):
        return "asymptotically_simple"
    return "undetermined"


# --- locating zeros ---------------------------------------------------------

def _strip_height(values) -> float:
    im = max((abs(z.imag) for z in values), default=0.0)
    return max(1.5, im + 1.0)


def _complete_count(func, radius: float, height: float):
    return winding_numbers(func, [Box(-radius, radius, -height, height)], density=12.0)[0]


def _search(func, centers, radii, expected, radius, height_hint, tol, merge_rtol):
    """Zeros near the given centres, with a global count on [-R, R] x [-H, H]."""
    roots = None
    # per-index counts first; then any counts, validated by the global count below
    for want in (expected, None):
        try:
            groups = roots_from_circles(func, list(zip(centers, radii)), tol=tol,
                                        merge_rtol=merge_rtol, expected=want)
            roots = [r for g in groups for r in g]
            break
        except RootIsolationFailure as exc:
            log.info("per-index circles failed (%s)", exc)
    if roots is not None:
        height = _strip_height([r.value for r in roots] + [height_hint * 1j])
        total = _complete_count(func, radius, height)
        found = sum(r.multiplicity * (2 if abs(r.value) > 1e-7 else 1)
                    for r in roots if _right_half(r.value) or abs(r.value) <= 1e-7)
        if total == found:
            return roots
        log.info("global count %s differs from %d circle roots; full box search", total, found)
    height = max(2.0, height_hint)
    return find_roots(func, (-radius, radius, -height, height), tol=tol, merge_rtol=merge_rtol)


def characteristic_roots(p: direct.ProblemCollection, n_max: int, steps: Optional[int] = None,
                         tol: float = 1e-13, merge_rtol: float = MERGE_RTOL):
    """Zeros of Delta in |Re mu| < 2 n_max + 1 - theta."""
    theta = p.theta
    func = lambda mu: direct.char_determinant(p, np.asarray(mu), steps)
    centers = ([0.0] if theta == 0 else []) + [float(2 * n - theta) for n in range(1, n_max + 1)]
    radii = [1.0] * len(centers)
    expected = [2] * len(centers)
    radius = 2 * n_max + 1 - theta
    return _search(func, centers, radii, expected, radius, 1.5 + abs(p.beta) / 4, tol, merge_rtol)


def series_by_count(roots, theta: int) -> Spectrum:
    """Assign a complete root list in order of (Re, Im): mu_0 first when theta = 0,
    then consecutive pairs.  Used when low-index roots stray from their bins."""
    vals = []
    dbl = []
    for z, m in _expand(roots):
        if _right_half(z):
            vals += [z] * m
            dbl += [m >= 2] * m
    order = sorted(range(len(vals)), key=lambda k: (vals[k].real, vals[k].imag))
    vals = [vals[k] for k in order]
    dbl = [dbl[k] for k in order]
    mu0 = None
    if theta == 0:
        if not vals:
            raise SeriesAssignmentError("no root for mu_0")
        if abs(vals[0]) <= 1e-7:
            # a zero at mu = 0 has even order and counts once
            vals, dbl = vals[2:], dbl[2:]
            mu0 = 0j
        else:
            mu0, vals, dbl = vals[0], vals[1:], dbl[1:]
    if len(vals) % 2:
        raise SeriesAssignmentError(f"odd number ({len(vals)}) of roots left for the pairs")
    sp = Spectrum(theta, mu0)
    for k in range(0, len(vals), 2):
        sp.pairs.append((k // 2 + 1, vals[k], vals[k + 1]))
        sp.double.append(dbl[k] and dbl[k + 1])
    return sp


def compute_spectrum(p: direct.ProblemCollection, n_max: int, steps: Optional[int] = None,
                     merge_rtol: float = MERGE_RTOL) -> Spectrum:
    roots = characteristic_roots(p, n_max, steps, merge_rtol=merge_rtol)
    try:
        return eigenvalue_series(roots, p.theta)
    except SeriesAssignmentError:
        # the disk count is verified, so ordering by size is well defined
        log.info("nearest-index binning failed; assigning by count")
        return series_by_count(roots, p.theta)


# --- Dirichlet problem --------------------------------------------------------

@dataclass
class DirichletData:
    """Zeros mu_n of s(pi, mu) with c(pi, mu_n), sdot(pi, mu_n) and int_0^pi s^2."""

    roots: np.ndarray
    c: np.ndarray
    s_dot: np.ndarray
    s_sq: np.ndarray
    simple: bool
    zero_excluded: bool

    @property
    def weights(self) -> np.ndarray:
        """u_n = 1 / (mu_n^2 int s^2): Gelfand-Levitan weights relative to q = 0."""
        return 1.0 / (self.roots ** 2 * self.s_sq)


def dirichlet_spectrum(q: Potential, n_max: int, steps: Optional[int] = None,
                       tol: float = 1e-13, merge_rtol: float = MERGE_RTOL) -> DirichletData:
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    q0 = q.mean
    est = np.sqrt(np.arange(1, n_max + 2) ** 2 + q0 + 0j)
    est = np.where(est.real < 0, -est, est)
    func = lambda mu: direct.fundamental_system(q, np.asarray(mu), steps).s_pi
    sep = np.abs(np.diff(est))
    radii = [0.5 * min(sep[k], sep[k - 1] if k else sep[0]) for k in range(n_max)]
    radius = float(np.real(est[n_max - 1] + est[n_max])) / 2
    roots = _search(func, list(est[:n_max]), radii, [1] * n_max, radius, 1.5, tol, merge_rtol)
    vals = []
    for r in roots:
        if _right_half(r.value):
            vals += [r.value] * r.multiplicity
    vals.sort(key=lambda z: (abs(z), z.real))
    if len(vals) < n_max:
        raise RootIsolationFailure(f"only {len(vals)} Dirichlet roots found", [])
    mu = np.array(vals[:n_max], dtype=complex)
    s_sq, c = direct.s_square_integral(q, mu, steps)
    s_dot = 2 * mu * c * s_sq
    multiple = any(r.multiplicity > 1 for r in roots)
    simple = (not multiple) and bool(np.all(np.abs(mu * s_dot) > DERIVATIVE_FLOOR))
    s0 = direct.fundamental_system(q, np.array([0j]), steps).s_pi[0]
    return DirichletData(mu, c, s_dot, s_sq, simple, bool(abs(s0) > 1e-10))


def spectrum_report(sp: Spectrum, verdict: str) -> str:
    return json.dumps({"spectrum": sp.as_dict(), "verdict": verdict}, indent=2)


def critical_gap(func: Callable, guess: complex, h: float = 1e-3, max_iter: int = 40):
    """(mu*, gap) for a near-double zero of an analytic ``func``.

    Newton on func' locates the critical point mu*; the two zeros are then
    mu* +- sqrt(-2 func(mu*) / func''(mu*)), so gap = 2 sqrt(-2 func / func'').
    Resolves gaps well below the root merge threshold.
    """
    mu = complex(guess)
    for _ in range(max_iter):
        v = np.asarray(func(np.array([mu - h, mu, mu + h])), dtype=complex)
        d1 = (v[2] - v[0]) / (2 * h)
        d2 = (v[2] - 2 * v[1] + v[0]) / (h * h)
        if d2 == 0:
            break
        step = d1 / d2
        mu -= step
        if abs(step) < 1e-15 * (1 + abs(mu)):
            break
    v = np.asarray(func(np.array([mu - h, mu, mu + h])), dtype=complex)
    d2 = (v[2] - 2 * v[1] + v[0]) / (h * h)
    return mu, 2 * abs(np.sqrt(-2 * v[1] / d2 + 0j))
