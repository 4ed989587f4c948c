"""Zeros of analytic functions by the argument principle.

Rectangles are subdivided by winding number until each cluster of zeros can
be captured by a circle; on circles the trapezoid rule is spectrally
accurate, so contour moments give the cluster's zeros directly.  Simple
zeros are then Newton-polished; nearly coincident zeros are re-resolved on a
smaller circle and merged when closer than ``merge_rtol * (1 + |z|)``.

Evaluators take and return complex arrays and are called with as many
points per call as possible, since one call costs one ODE sweep.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import RootIsolationFailure

log = logging.getLogger(__name__)

MERGE_RTOL = 1e-6


@dataclass
class Root:
    value: complex
    multiplicity: int = 1
    residual: float = 0.0
    verified: bool = True

    def __iter__(self):
        return iter((self.value, self.multiplicity))


# off-centre bisection keeps subdivision lines off symmetry axes such as Im mu = 0
SPLIT_FRAC = 0.5 + 0.0317


@dataclass
class Box:
    x0: float
    x1: float
    y0: float
    y1: float

    @property
    def center(self) -> complex:
        return complex((self.x0 + self.x1) / 2, (self.y0 + self.y1) / 2)

    @property
    def diameter(self) -> float:
        return math.hypot(self.x1 - self.x0, self.y1 - self.y0)

    def contains(self, z: complex, slack: float = 0.0) -> bool:
        return (self.x0 - slack <= z.real <= self.x1 + slack
                and self.y0 - slack <= z.imag <= self.y1 + slack)

    def split(self, frac: float = SPLIT_FRAC):
        if self.x1 - self.x0 >= self.y1 - self.y0:
            xm = self.x0 + frac * (self.x1 - self.x0)
            return Box(self.x0, xm, self.y0, self.y1), Box(xm, self.x1, self.y0, self.y1)
        ym = self.y0 + frac * (self.y1 - self.y0)
        return Box(self.x0, self.x1, self.y0, ym), Box(self.x0, self.x1, ym, self.y1)


def as_box(box) -> Box:
    if isinstance(box, Box):
        return box
    x0, x1, y0, y1 = box
    return Box(float(x0), float(x1), float(y0), float(y1))


# --- counting -------------------------------------------------------------

def _boundary(box: Box, density: float) -> np.ndarray:
    corners = [complex(box.x0, box.y0), complex(box.x1, box.y0),
               complex(box.x1, box.y1), complex(box.x0, box.y1)]
    pts = []
    for a, b in zip(corners, corners[1:] + corners[:1]):
        n = max(16, int(math.ceil(abs(b - a) * density)))
        pts.append(a + (b - a) * np.arange(n) / n)
    pts.append(np.array([corners[0]]))
    return np.concatenate(pts)


def winding_numbers(func, boxes, density: float = 24.0, max_density: float = 1e5,
                    max_points: int = 20000):
    """Argument-principle counts for several rectangles with one call per refinement.

    Returns a list of ints; ``None`` marks a box whose boundary passes (numerically)
    through a zero and needs nudging.
    """
    boxes = [as_box(b) for b in boxes]
    result = [None] * len(boxes)
    dens = list(np.broadcast_to(np.asarray(density, dtype=float), (len(boxes),)))
    todo = list(range(len(boxes)))
    while todo:
        paths = [_boundary(boxes[i], dens[i]) for i in todo]
        vals = np.asarray(func(np.concatenate(paths)), dtype=complex)
        pos = 0
        nxt = []
        for i, path in zip(todo, paths):
            v = vals[pos:pos + path.size]
            pos += path.size
            mag = np.abs(v)
            if not np.all(np.isfinite(v)) or mag.min() <= 1e-13 * mag.max():
                result[i] = None
                continue
            steps = np.angle(v[1:] / v[:-1])
            total = steps.sum() / (2 * math.pi)
            if np.max(np.abs(steps)) > 0.5 or abs(total - round(total)) > 0.05:
                if dens[i] * 2 > max_density or 2 * path.size > max_points:
                    result[i] = None
                    continue
                dens[i] *= 2
                nxt.append(i)
                continue
            result[i] = int(round(total))
        todo = nxt
    return result


# --- circles --------------------------------------------------------------

@dataclass
class CircleResult:
    center: complex
    radius: float
    count: int
    estimates: np.ndarray = field(default_factory=lambda: np.zeros(0, complex))
    ok: bool = True


def _newton_identities(p: np.ndarray) -> np.ndarray:
    """Monic polynomial coefficients from power sums p[1..m]."""
    m = p.size - 1
    e = np.zeros(m + 1, dtype=complex)
    e[0] = 1
    for k in range(1, m + 1):
        e[k] = sum((-1) ** (i - 1) * e[k - i] * p[i] for i in range(1, k + 1)) / k
    return np.array([(-1) ** k * e[k] for k in range(m + 1)])


def circle_moments(func, circles, npts: int = 128, max_pts: int = 4096, max_count: int = 6):
    """Count zeros inside each circle and estimate them from contour moments."""
    circles = [(complex(c), float(r)) for c, r in circles]
    n = [npts] * len(circles)
    prev = [np.inf] * len(circles)
    out: list = [None] * len(circles)
    todo = list(range(len(circles)))
    while todo:
        pts = []
        for i in todo:
            c, r = circles[i]
            pts.append(c + r * np.exp(2j * math.pi * np.arange(n[i]) / n[i]))
        vals = np.asarray(func(np.concatenate(pts)), dtype=complex)
        pos = 0
        nxt = []
        for i, z in zip(todo, pts):
            c, r = circles[i]
            f = vals[pos:pos + z.size]
            pos += z.size
            N = z.size
            mag = np.abs(f)
            if not np.all(np.isfinite(f)) or mag.min() <= 1e-13 * mag.max():
                out[i] = CircleResult(c, r, -1, ok=False)
                continue
            spec = np.fft.fft(f)
            ratio = np.abs(spec[N // 2 - N // 8:N // 2 + N // 8]).max() / np.abs(spec).max()
            # refine until the tail is negligible or stops shrinking (noise floor)
            if ratio > 1e-12 and N < max_pts and ratio < 0.1 * prev[i]:
                prev[i] = ratio
                n[i] = 2 * N
                nxt.append(i)
                continue
            k = np.fft.fftfreq(N, 1.0 / N)
            k[N // 2] = 0
            dtheta = np.fft.ifft(1j * k * spec)
            g = dtheta / f
            w = z - c
            p = np.array([np.sum(w ** j * g) / (1j * N) for j in range(max_count + 1)])
            count = p[0].real
            m = int(round(count))
            if abs(count - m) > 0.05 or abs(p[0].imag) > 0.05:
                out[i] = CircleResult(c, r, -1, ok=False)
                continue
            if m == 0:
                out[i] = CircleResult(c, r, 0)
                continue
            if m > max_count:
                out[i] = CircleResult(c, r, m, ok=False)
                continue
            poly = _newton_identities(p[: m + 1])
            est = c + np.roots(poly) if m > 1 else np.array([c + p[1]])
            out[i] = CircleResult(c, r, m, est)
        todo = nxt
    return out


# --- polishing ------------------------------------------------------------

def newton_polish(func, z0, tol: float = 1e-13, maxiter: int = 30):
    """Batched Newton iteration with central-difference derivatives."""
    z = np.array(z0, dtype=complex)
    active = np.ones(z.size, bool)
    for _ in range(maxiter):
        if not active.any():
            break
        za = z[active]
        h = 1e-6 * (1 + np.abs(za))
        vals = np.asarray(func(np.concatenate([za, za + h, za - h])), dtype=complex)
        f0, fp, fm = np.split(vals, 3)
        d = (fp - fm) / (2 * h)
        step = np.where(d != 0, f0 / np.where(d == 0, 1, d), 0)
        big = np.abs(step) > 0.1 * (1 + np.abs(za))
        step = np.where(big, 0.1 * (1 + np.abs(za)) * step / np.abs(np.where(step == 0, 1, step)), step)
        z[active] = za - step
        done = np.abs(step) <= tol * (1 + np.abs(za))
        idx = np.flatnonzero(active)
        active[idx[done]] = False
    return z


def _resolve_clusters(func, clusters, merge_rtol: float):
    """Re-run moments on tight circles around groups of close estimates."""
    out = [est for est, _ in clusters]
    circles, which = [], []
    for k, (est, radius) in enumerate(clusters):
        center = est.mean()
        spread = np.max(np.abs(est - center))
        r = max(8 * spread, 20 * merge_rtol * (1 + abs(center)))
        if r < radius:
            circles.append((center, r))
            which.append(k)
    if circles:
        for k, res in zip(which, circle_moments(func, circles, npts=32)):
            if res.ok and res.count == clusters[k][0].size:
                out[k] = res.estimates
    return out


def _merge(values: np.ndarray, mults: list, merge_rtol: float):
    vals = list(values)
    mult = list(mults)
    changed = True
    while changed:
        changed = False
        for i in range(len(vals)):
            for j in range(i + 1, len(vals)):
                if abs(vals[i] - vals[j]) <= merge_rtol * (1 + abs(vals[i])):
                    tot = mult[i] + mult[j]
                    vals[i] = (mult[i] * vals[i] + mult[j] * vals[j]) / tot
                    mult[i] = tot
                    del vals[j], mult[j]
                    changed = True
                    break
            if changed:
                break
    return vals, mult


def roots_from_circles(func, circles, tol=1e-12, merge_rtol=MERGE_RTOL, expected=None):
    """Zeros inside each of several (disjoint) circles.

    Returns a list (per circle) of lists of :class:`Root`.
    """
    results = circle_moments(func, circles)
    all_roots = []
    for k, res in enumerate(results):
        if not res.ok:
            raise RootIsolationFailure(f"circle {res.center}, r={res.radius}: count failed",
                                       [(res.center, res.radius)])
        if expected is not None and res.count != expected[k]:
            raise RootIsolationFailure(
                f"circle {res.center}, r={res.radius}: {res.count} zeros, expected {expected[k]}",
                [(res.center, res.radius)])
        all_roots.append(res)
    return _finish(func, all_roots, tol, merge_rtol)


def _deflate_collisions(func, groups, simple_idx, simple_z, tol, merge_rtol):
    """Re-polish simple estimates whose Newton iterate landed on a zero already found."""
    for g in sorted({g for g, _ in simple_idx}):
        accepted = []
        for (gg, e), z0 in zip(simple_idx, simple_z):
            if gg != g:
                continue
            z = groups[g][e][0]
            if any(abs(z - a) <= merge_rtol * (1 + abs(a)) for a in accepted):
                known = np.array(accepted)
                defl = lambda m, k=known: np.asarray(func(m)) / np.prod(
                    np.subtract.outer(np.asarray(m), k), axis=-1)
                z = newton_polish(defl, [z0], tol=tol)[0]
                groups[g][e] = [z]
            accepted.append(z)


def _finish(func, results, tol, merge_rtol):
    # split estimates into well-separated (Newton) and clustered (moments on a small circle)
    groups = []
    simple_idx, simple_z = [], []
    cluster_idx, clusters = [], []
    for res in results:
        est = np.asarray(res.estimates)
        parts = []
        used = np.zeros(est.size, bool)
        for i in range(est.size):
            if used[i]:
                continue
            near = np.abs(est - est[i]) < 1e-3 * res.radius
            near &= ~used
            used |= near
            parts.append(est[near])
        entry = []
        for part in parts:
            if part.size == 1:
                simple_idx.append((len(groups), len(entry)))
                simple_z.append(part[0])
            else:
                cluster_idx.append((len(groups), len(entry)))
                clusters.append((part, res.radius))
            entry.append(list(part))
        groups.append(entry)
    for (g, e), est in zip(cluster_idx, _resolve_clusters(func, clusters, merge_rtol)):
        groups[g][e] = list(est)
    if simple_z:
        polished = newton_polish(func, simple_z, tol=tol)
        for (g, e), z in zip(simple_idx, polished):
            groups[g][e] = [z]
        _deflate_collisions(func, groups, simple_idx, simple_z, tol, merge_rtol)
    out = []
    for entry in groups:
        vals = np.array([z for part in entry for z in part], dtype=complex)
        merged, mult = _merge(vals, [1] * vals.size, merge_rtol)
        out.append([Root(complex(v), m) for v, m in zip(merged, mult)])
    flat = [r for lst in out for r in lst]
    if flat:
        res = np.abs(np.asarray(func(np.array([r.value for r in flat]))))
        for r, v in zip(flat, res):
            r.residual = float(v)
        _verify_multiple(func, flat, merge_rtol)
    return out


def _verify_multiple(func, roots, merge_rtol):
    multi = [r for r in roots if r.multiplicity > 1]
    if not multi:
        return
    circles = []
    for r in multi:
        others = [abs(o.value - r.value) for o in roots if o is not r]
        rad = 100 * merge_rtol * (1 + abs(r.value))
        if others:
            rad = min(rad, 0.5 * min(others))
        circles.append((r.value, rad))
    counts = winding_numbers(func, [Box(c.real - rad, c.real + rad, c.imag - rad, c.imag + rad)
                                    for c, rad in circles],
                             density=[8.0 / rad for _, rad in circles])
    for r, cnt in zip(multi, counts):
        r.verified = cnt == r.multiplicity
        if not r.verified:
            log.warning("multiplicity %d at %s not confirmed by winding count %s",
                        r.multiplicity, r.value, cnt)


def find_roots(func, box, tol: float = 1e-12, merge_rtol: float = MERGE_RTOL,
               max_depth: int = 40, max_cluster: int = 4):
    """All zeros of ``func`` inside a rectangle ``(x0, x1, y0, y1)``.

    The total winding count of the box equals the multiplicity-weighted number of
    returned roots.
    """
    root_box = as_box(box)
    total = winding_numbers(func, [root_box])[0]
    if total is None:
        raise RootIsolationFailure("zero on the boundary of the search box", [root_box])
    leaves = []
    stack = [(root_box, total, 0)]
    while stack:
        pending = []
        for b, m, depth in stack:
            if m == 0:
                continue
            if depth > max_depth:
                raise RootIsolationFailure("maximum subdivision depth reached",
                                           [b for b, _, _ in stack])
            pending.append((b, m, depth))
        if not pending:
            break
        # try to capture each box by its circumscribed circle
        circles = [(b.center, 0.5 * b.diameter * 1.02) for b, _, _ in pending]
        trial = circle_moments(func, circles)
        stack = []
        to_split = []
        for (b, m, depth), res in zip(pending, trial):
            if res.ok and res.count == m and m <= max_cluster:
                leaves.append(res)
            else:
                to_split.append((b, m, depth))
        if not to_split:
            break
        halves = []
        for b, m, depth in to_split:
            halves.append((b.split(), m, depth))
        counts = winding_numbers(func, [h for pair, _, _ in halves for h in pair])
        for k, (pair, m, depth) in enumerate(halves):
            c0, c1 = counts[2 * k], counts[2 * k + 1]
            if c0 is None or c1 is None or c0 + c1 != m:
                # an edge passes through a zero: split off-centre instead
                alt = as_box(pair[0]), as_box(pair[1])
                parent = Box(alt[0].x0, alt[1].x1, alt[0].y0, alt[1].y1)
                pair = parent.split(0.5 - 0.0731)
                c = winding_numbers(func, list(pair))
                if c[0] is None or c[1] is None or c[0] + c[1] != m:
                    raise RootIsolationFailure("inconsistent counts after subdivision", [parent])
                c0, c1 = c
            stack.append((pair[0], c0, depth + 1))
            stack.append((pair[1], c1, depth + 1))
    roots = [r for lst in _finish(func, leaves, tol, merge_rtol) for r in lst]
    inside = [r for r in roots if root_box.contains(r.value, 1e-9 * (1 + abs(r.value)))]
    if sum(r.multiplicity for r in inside) != total:
        raise RootIsolationFailure(
            f"winding count {total} but {sum(r.multiplicity for r in inside)} roots found",
            [root_box])
    inside.sort(key=lambda r: (r.value.real, r.value.imag))
    return inside
