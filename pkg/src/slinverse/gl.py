"""Inverse problem via the Gelfand-Levitan equation.

Norming constants c_n are picked among the roots of
alpha z^2 - u_+(mu_n) z + (1 - alpha) = 0 so that z_n = c_n / (mu_n sdot(mu_n))
share an open half-plane; the kernel F is assembled from (mu_n, c_n) and the
equation K + F + int K F = 0 is solved on a grid (Nystrom) or exactly for
finite-rank F.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import lapack, lu_factor, lu_solve

from .errors import (KernelDivergence, OutOfTheoremScope, SelectionFailure,
                     UniqueSolvabilityFailure)
from .potential import Potential, simpson_weights

log = logging.getLogger(__name__)

COND_LIMIT = 1e12


# --- spectral data ------------------------------------------------------------------

@dataclass
class HalfPlane:
    """Direction phi with Re(exp(-i phi) z_n) > 0 for all n; margin is the min of that over |z_n|."""

    ok: bool
    phi: float
    margin: float
    offending: list = field(default_factory=list)


def halfplane_check(z) -> HalfPlane:
    z = np.asarray(z, dtype=complex)
    if np.any(z == 0):
        return HalfPlane(False, 0.0, 0.0, [int(i) + 1 for i in np.flatnonzero(z == 0)])
    ang = np.sort(np.angle(z))
    gaps = np.diff(np.concatenate([ang, [ang[0] + 2 * math.pi]]))
    k = int(np.argmax(gaps))
    # the points occupy the arc from ang[k+1] to ang[k] (counter-clockwise)
    start = ang[(k + 1) % ang.size]
    width = 2 * math.pi - gaps[k]
    phi = math.remainder(start + width / 2, 2 * math.pi)
    proj = (np.exp(-1j * phi) * z).real / np.abs(z)
    margin = float(proj.min())
    bad = [int(i) + 1 for i in np.flatnonzero(proj <= 0)]
    return HalfPlane(margin > 0, phi, margin, bad)


@dataclass
class SpectralData:
    """Dirichlet roots mu_n (n = 1, 2, ...), norming constants c_n = c(pi, mu_n) and sdot(mu_n).

    ``shift`` is a constant q0 subtracted from the potential before the
    kernel is assembled (mu_n -> sqrt(mu_n^2 - q0)).
    """

    mus: np.ndarray
    norming: np.ndarray
    sdot: np.ndarray
    shift: complex = 0j
    separating: Optional[HalfPlane] = None

    def __post_init__(self):
        self.mus = np.asarray(self.mus, dtype=complex)
        self.norming = np.asarray(self.norming, dtype=complex)
        self.sdot = np.asarray(self.sdot, dtype=complex)
        if not (self.mus.size == self.norming.size == self.sdot.size):
            raise ValueError("mus, norming and sdot must have equal length")
        if np.any(self.norming == 0):
            raise SelectionFailure("zero norming constant", list(np.flatnonzero(self.norming == 0) + 1))

    @property
    def n(self) -> np.ndarray:
        return np.arange(1, self.mus.size + 1)

    @property
    def halfplane(self) -> np.ndarray:
        return self.norming / (self.mus * self.sdot)

    @property
    def weights(self) -> np.ndarray:
        return 2 * self.halfplane

    def check_halfplane(self) -> HalfPlane:
        self.separating = halfplane_check(self.halfplane)
        return self.separating

    def shifted_frequencies(self):
        """(nu_n, u_n mu_n^2 / nu_n^2) with nu_n = sqrt(mu_n^2 - shift), Re nu >= 0."""
        nu = np.sqrt(self.mus ** 2 - self.shift)
        nu = np.where(nu.real < 0, -nu, nu)
        return nu, self.weights * self.mus ** 2 / nu ** 2

    @classmethod
    def from_dirichlet(cls, dd, shift: complex = 0j) -> "SpectralData":
        return cls(dd.roots, dd.c, dd.s_dot, shift)

    def truncated(self, n: int) -> "SpectralData":
        return SpectralData(self.mus[:n], self.norming[:n], self.sdot[:n], self.shift)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "re_mu", "im_mu", "re_c", "im_c"])
            for k, (m, c) in enumerate(zip(self.mus, self.norming), start=1):
                w.writerow([k, repr(float(m.real)), repr(float(m.imag)), repr(float(c.real)), repr(float(c.imag))])

    @classmethod
    def from_csv(cls, path, q=None, shift: complex = 0j) -> "SpectralData":
        """Read (n, mu, c); sdot is recomputed from the forward problem of ``q``
        when given, otherwise from the sine-type product of the roots shifted by ``shift``."""
        rows = []
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                rows.append((int(row["n"]), complex(float(row["re_mu"]), float(row["im_mu"])),
                             complex(float(row["re_c"]), float(row["im_c"]))))
        rows.sort()
        mus = np.array([r[1] for r in rows])
        c = np.array([r[2] for r in rows])
        if q is not None:
            from .direct import s_square_integral

            s_sq, _ = s_square_integral(q, mus)
            sdot = 2 * mus * c * s_sq
        else:
            from .entire import SineTypeProduct, product_derivative_at_root

            # s(pi, mu) is the sine-type product in nu = sqrt(mu^2 - shift)
            nu = np.sqrt(mus * mus - shift)
            nu = np.where(nu.real < 0, -nu, nu)
            sp = SineTypeProduct(nu)
            ds = np.array([product_derivative_at_root(sp, k) for k in range(1, mus.size + 1)])
            sdot = ds * mus / nu
        return cls(mus, c, sdot, shift)


# --- choosing roots of the quadratic ------------------------------------------------------

def _check_alpha(alpha) -> complex:
    alpha = complex(alpha)
    for bad in (0.0, 0.5, 1.0):
        if abs(alpha - bad) < 1e-12:
            raise OutOfTheoremScope(f"alpha = {bad:g} is outside the selection theorem")
    return alpha


def branch_sqrt(d, alpha):
    """sqrt(d) on the branch continuous with sqrt((1 - 2 alpha)^2) = 1 - 2 alpha."""
    r = np.sqrt(np.asarray(d, dtype=complex))
    ref = 1 - 2 * complex(alpha)
    return np.where((r * np.conj(ref)).real < 0, -r, r)


def quadratic_roots(u_plus, alpha):
    """c^+ and c^- of alpha z^2 - u z + (1 - alpha) = 0."""
    u = np.asarray(u_plus, dtype=complex)
    r = branch_sqrt(u * u - 4 * alpha * (1 - alpha), alpha)
    return (u + r) / (2 * alpha), (u - r) / (2 * alpha)


def _small_index_targets(alpha):
    """Centres c~ for n <= N and the rule that pairs them with parity."""
    ct = np.sqrt(complex(-4 * alpha * (1 - alpha))) / (2 * alpha)
    on_axis = abs(ct.real) <= 1e-12 * max(1.0, abs(ct))
    if on_axis:
        # case 2: even n near c~+, odd n near c~-, with c~+ chosen on the side of 1
        # relative to the line through 0 parallel to [1, c~+]
        d = ct - 1
        side = lambda z: (np.conj(d) * z).imag
        plus = ct if side(ct) * side(1.0) > 0 or side(1.0) == 0 else -ct
        return plus, -plus, "imaginary"
    right = ct if ct.real > 0 else -ct
    return right, -right, "off-axis"


def choose_norming_roots(u_plus_at_mu, alpha, sderiv, mus, N: int) -> SpectralData:
    """Select c_n among the roots of alpha z^2 - u_+(mu_n) z + (1 - alpha) = 0.

    n > N: c_n = c^- for even n, c^+ for odd n.  n <= N: even n take the root
    nearest the right (case 1) or the c~+ (case 2) centre, odd n the other.
    """
    alpha = _check_alpha(alpha)
    u = np.asarray(u_plus_at_mu, dtype=complex)
    cp, cm = quadratic_roots(u, alpha)
    n = np.arange(1, u.size + 1)
    even = n % 2 == 0
    c = np.where(even, cm, cp)
    if N > 0:
        even_target, odd_target, _ = _small_index_targets(alpha)
        target = np.where(even, even_target, odd_target)
        pick_plus = np.abs(cp - target) <= np.abs(cm - target)
        c = np.where(n <= N, np.where(pick_plus, cp, cm), c)
    data = SpectralData(mus, c, sderiv)
    hp = data.check_halfplane()
    if not hp.ok:
        raise SelectionFailure("z_n do not lie in one open half-plane", hp.offending)
    scale = np.maximum(1.0, np.abs(u) * np.abs(c))
    resid = np.abs(alpha * c * c - u * c + (1 - alpha)) / scale
    if resid.max() > 1e-10:
        raise SelectionFailure("quadratic residual too large", list(n[resid > 1e-10]))
    return data


def quadratic_residual(data: SpectralData, u_plus_at_mu, alpha) -> np.ndarray:
    c = data.norming
    u = np.asarray(u_plus_at_mu, dtype=complex)
    return np.abs(alpha * c * c - u * c + (1 - alpha)) / np.maximum(1.0, np.abs(u * c))


def target_norming_constants(delta_plus_at_mu, alpha, base, N0: int) -> np.ndarray:
    """Norming constants c~_n for a perturbed determinant at the base Dirichlet roots.

    ``base`` holds c(pi, mu_n) of the base potential.  For alpha not in {0, 1} the
    root is (D~ + (-1)^d sqrt(D~^2 - 4 alpha (1 - alpha))) / (2 alpha) with the sign
    d copied from the base constant for n > N0 and chosen nearest to it for n <= N0.
    """
    dt = np.asarray(delta_plus_at_mu, dtype=complex)
    c = np.asarray(base, dtype=complex)
    alpha = complex(alpha)
    if abs(alpha - 1) < 1e-14:
        return dt.copy()
    if abs(alpha) < 1e-14:
        if np.any(dt == 0):
            raise ZeroDivisionError("Delta~_+(mu_n) = 0 with alpha = 0")
        return 1 / dt
    base_plus = alpha * c + (1 - alpha) / c
    signed = 2 * alpha * c - base_plus  # (-1)^{delta_n} sqrt(D_+)
    r_base = np.sqrt(base_plus ** 2 - 4 * alpha * (1 - alpha))
    delta = np.abs(signed - r_base) > np.abs(signed + r_base)
    r_new = np.sqrt(dt ** 2 - 4 * alpha * (1 - alpha))
    same_branch = np.where(delta, -r_new, r_new)
    nearest = np.where(np.abs(signed - r_new) <= np.abs(signed + r_new), r_new, -r_new)
    n = np.arange(1, dt.size + 1)
    root = np.where(n > N0, same_branch, nearest)
    return (dt + root) / (2 * alpha)


# --- the kernel F and the Nystrom solve -----------------------------------------------

@dataclass
class GLKernel:
    x_grid: np.ndarray
    t_grid: np.ndarray
    F_values: np.ndarray
    K_values: Optional[np.ndarray] = None
    last_term: float = 0.0
    asymmetry: float = 0.0
    max_cond: float = 0.0
    residual: float = 0.0

    def to_csv(self, path, which: str = "F") -> None:
        vals = self.F_values if which == "F" else self.K_values
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "t", "re", "im"])
            for i, x in enumerate(self.x_grid):
                for j, t in enumerate(self.t_grid):
                    if which == "K" and j > i:
                        break
                    v = vals[i, j]
                    w.writerow([repr(float(x)), repr(float(t)), repr(float(v.real)), repr(float(v.imag))])


def mean_from_dirichlet(mus, terms: int = 3) -> complex:
    """<q> from mu_n^2 - n^2 = <q> + c_2/n^2 + c_4/n^4 + ..., fitted on the trailing half."""
    mus = np.asarray(mus, dtype=complex)
    n = np.arange(1, mus.size + 1, dtype=float)
    half = mus.size // 2
    if mus.size - half < terms + 2:
        raise ValueError(f"need at least {2 * (terms + 2)} Dirichlet roots")
    A = np.vstack([n[half:] ** (-2.0 * j) for j in range(terms)]).T
    return complex(np.linalg.lstsq(A, mus[half:] ** 2 - n[half:] ** 2, rcond=None)[0][0])


def kernel_terms(data: SpectralData):
    """Frequencies and weights of F = sum_k w_k sin(nu_k x) sin(nu_k t)."""
    nu, u = data.shifted_frequencies()
    n = data.n.astype(float)
    return np.concatenate([nu, n]), np.concatenate([u, np.full(n.size, -2 / math.pi)])


def _cos_tail(theta, M: int, p: int = 2):
    """sum_{n > M} cos(n theta) / n^p, p in {2, 4}, for theta in [-2 pi, 2 pi]."""
    a = np.abs(theta)
    pi = math.pi
    if p == 2:
        total = pi ** 2 / 6 - pi * a / 2 + a * a / 4
    else:
        total = pi ** 4 / 90 - pi ** 2 * a ** 2 / 12 + pi * a ** 3 / 12 - a ** 4 / 48
    n = np.arange(1, M + 1, dtype=float)
    return total - np.cos(np.multiply.outer(theta, n)) @ (1.0 / n ** p)


def _sin_tail(theta, M: int, p: int = 3):
    """sum_{n > M} sin(n theta) / n^p, p in {3, 5}, for theta in [-2 pi, 2 pi]."""
    a = np.abs(theta)
    pi = math.pi
    if p == 3:
        total = pi ** 2 * a / 6 - pi * a * a / 4 + a ** 3 / 12
    else:
        total = pi ** 4 * a / 90 - pi ** 2 * a ** 3 / 36 + pi * a ** 4 / 48 - a ** 5 / 240
    n = np.arange(1, M + 1, dtype=float)
    return np.sign(theta) * total - np.sin(np.multiply.outer(theta, n)) @ (1.0 / n ** p)


def tail_coefficients(data: SpectralData, points: int = 10):
    """(b2, b4, a3, a5) in u_n - 2/pi ~ b2/n^2 + b4/n^4 and nu_n - n ~ a3/n^3 + a5/n^5,
    fitted on the trailing data."""
    nu, u = data.shifted_frequencies()
    n = data.n[-points:].astype(float)
    A = np.vstack([np.ones_like(n), n ** -2.0, n ** -4.0]).T
    b = np.linalg.lstsq(A, n ** 2 * (u[-points:] - 2 / math.pi), rcond=None)[0]
    a = np.linalg.lstsq(A, n ** 3 * (nu[-points:] - n), rcond=None)[0]
    return complex(b[0]), complex(b[1]), complex(a[0]), complex(a[1])


def build_F_kernel(data: SpectralData, grid_size: int = 257, chunk: int = 64,
                   tail: str = "none") -> GLKernel:
    """F(x, t) = sum_n (u_n sin nu_n x sin nu_n t - (2/pi) sin n x sin n t) on a uniform grid.

    The sum stops at the data length (``tail="none"``) or is continued with the
    leading asymptotic terms of u_n and nu_n (fitted on the trailing data) and
    summed in closed form (``tail="asymptotic"``).
    """
    nu, u = data.shifted_frequencies()
    if not np.all(np.isfinite(u)):
        raise KernelDivergence("non-finite weights")
    x = np.linspace(0.0, math.pi, grid_size)
    n = data.n.astype(float)
    F = np.zeros((grid_size, grid_size), dtype=complex)
    for lo in range(0, nu.size, chunk):
        sl = slice(lo, lo + chunk)
        a = np.sin(np.outer(x, nu[sl]))
        b = np.sin(np.outer(x, n[sl]))
        F += (a * u[sl]) @ a.T - (2 / math.pi) * b @ b.T
    # magnitude of the last summand, a proxy for the dropped tail
    k = nu.size - 1
    last = np.abs(u[k] * np.outer(np.sin(nu[k] * x), np.sin(nu[k] * x))
                  - (2 / math.pi) * np.outer(np.sin(n[k] * x), np.sin(n[k] * x))).max()
    if k > 8:
        head = np.abs(u[: k // 2] - 2 / math.pi).max()
        if np.abs(u[k // 2:] - 2 / math.pi).max() > 10 * max(head, 1e-300):
            raise KernelDivergence("weights u_n do not approach 2/pi")
    if tail == "asymptotic":
        b2, b4, a3, a5 = tail_coefficients(data)
        d = np.subtract.outer(x, x).ravel()
        s = np.add.outer(x, x).ravel()
        M = nu.size
        tails = lambda f, p: (f(d, M, p), f(s, M, p))
        (cd2, cs2), (cd4, cs4) = tails(_cos_tail, 2), tails(_cos_tail, 4)
        (sd3, ss3), (sd5, ss5) = tails(_sin_tail, 3), tails(_sin_tail, 5)
        # (b/n^p) sin nx sin nt + (2/pi)(a/n^p) d/dnu [sin nu x sin nu t]; the
        # n^-4 and n^-5 terms matter because q = 2 dK(x,x)/dx weights the tail by n
        G = b2 * (cd2 - cs2) / 2 + b4 * (cd4 - cs4) / 2
        G += (2 / math.pi) * (a3 * (s * ss3 - d * sd3) + a5 * (s * ss5 - d * sd5)) / 2
        F += G.reshape(F.shape)
    elif tail != "none":
        raise ValueError(f"unknown tail mode {tail!r}")
    asym = float(np.abs(F - F.T).max())
    return GLKernel(x, x, F, last_term=float(last), asymmetry=asym)


def _cond1(lu_piv, anorm) -> float:
    lu, piv = lu_piv
    rcond, info = lapack.zgecon(lu, anorm, norm="1")
    return math.inf if rcond == 0 else 1.0 / rcond


def _weight_table(n: int, h: float) -> np.ndarray:
    """Row m holds the composite weights for m + 1 nodes."""
    T = np.zeros((n, n))
    for m in range(1, n):
        T[m, : m + 1] = simpson_weights(m + 1, h)
    return T


def _split_weights(i: int, table: np.ndarray) -> np.ndarray:
    """W[t, s]: quadrature over s in [0, x_i] with a breakpoint at s = t."""
    t = np.arange(i + 1)[:, None]
    s = np.arange(i + 1)[None, :]
    left = np.where(s <= t, table[t, np.minimum(s, t)], 0.0)
    # right piece reversed so the end-rule correction sits at the kink
    j = np.clip(i - s, 0, None)
    right = np.where(s >= t, table[i - t, np.minimum(j, i - t)], 0.0)
    return left + right


def solve_gelfand_levitan(kernel: GLKernel, index: int, table: Optional[np.ndarray] = None):
    """K(x_i, t_j), j <= i, from K + F + int_0^x K(x, s) F(s, t) ds = 0 (Simpson collocation).

    With a weight ``table`` the integral is split at s = t, which keeps full
    order when F has a derivative jump on the diagonal.
    Returns ``(row, condition_number, residual)``.
    """
    i = int(index)
    f = kernel.F_values[i, : i + 1]
    if i == 0:
        return -f.copy(), 1.0, 0.0
    h = kernel.t_grid[1] - kernel.t_grid[0]
    Fs = kernel.F_values[: i + 1, : i + 1]
    if table is None:
        w = simpson_weights(i + 1, h)
        A = np.eye(i + 1, dtype=complex) + Fs * w[None, :]
    else:
        A = np.eye(i + 1, dtype=complex) + Fs * _split_weights(i, table)
    # k_t + sum_s w_s k_s F(s, t) = -f_t, i.e. (I + F W) k = -f for symmetric F
    anorm = np.abs(A).sum(axis=0).max()
    lp = lu_factor(A)
    cond = _cond1(lp, anorm)
    if cond > COND_LIMIT:
        raise UniqueSolvabilityFailure(f"condition number {cond:.3g} at x = {kernel.x_grid[i]:.6g}")
    k = lu_solve(lp, -f)
    resid = float(np.abs(A @ k + f).max())
    return k, cond, resid


def solve_all(kernel: GLKernel, split: bool = True) -> GLKernel:
    n = kernel.x_grid.size
    table = _weight_table(n, kernel.t_grid[1] - kernel.t_grid[0]) if split else None
    K = np.zeros((n, n), dtype=complex)
    cmax, rmax = 0.0, 0.0
    for i in range(n):
        row, cond, resid = solve_gelfand_levitan(kernel, i, table)
        K[i, : i + 1] = row
        cmax, rmax = max(cmax, cond), max(rmax, resid)
    kernel.K_values = K
    kernel.max_cond = cmax
    kernel.residual = rmax
    return kernel


def diagonal_derivative(values, h: float) -> np.ndarray:
    """Fourth-order finite differences with one-sided closures at both ends."""
    f = np.asarray(values, dtype=complex)
    n = f.size
    if n < 5:
        raise ValueError("need at least 5 points")
    d = np.empty(n, dtype=complex)
    d[2:-2] = (f[:-4] - 8 * f[1:-3] + 8 * f[3:-1] - f[4:]) / (12 * h)
    d[0] = (-25 * f[0] + 48 * f[1] - 36 * f[2] + 16 * f[3] - 3 * f[4]) / (12 * h)
    d[1] = (-3 * f[0] - 10 * f[1] + 18 * f[2] - 6 * f[3] + f[4]) / (12 * h)
    d[-1] = (25 * f[-1] - 48 * f[-2] + 36 * f[-3] - 16 * f[-4] + 3 * f[-5]) / (12 * h)
    d[-2] = (3 * f[-1] + 10 * f[-2] - 18 * f[-3] + 6 * f[-4] - f[-5]) / (12 * h)
    return d


def potential_from_kernel(diag, x=None, shift: complex = 0j) -> Potential:
    """q = 2 d/dx K(x, x) + shift."""
    diag = np.asarray(diag, dtype=complex)
    x = np.linspace(0.0, math.pi, diag.size) if x is None else np.asarray(x)
    q = 2 * diagonal_derivative(diag, x[1] - x[0]) + shift
    return Potential(q, "cubic", label="gelfand-levitan")


# --- finite-rank kernels -------------------------------------------------------------

def _merge_terms(freqs, weights, tol: float = 1e-14):
    """Sum the weights of coinciding frequencies and drop vanishing terms."""
    order = np.lexsort((freqs.imag, freqs.real))
    f, w = freqs[order], weights[order]
    out_f, out_w = [], []
    for fi, wi in zip(f, w):
        if out_f and abs(fi - out_f[-1]) <= tol * (1 + abs(fi)):
            out_w[-1] += wi
        else:
            out_f.append(fi)
            out_w.append(wi)
    out_f, out_w = np.array(out_f, dtype=complex), np.array(out_w, dtype=complex)
    keep = np.abs(out_w) > 1e-15
    return out_f[keep], out_w[keep]


def _sin_over(a, x):
    """sin(a x) / a with the limit x at a = 0."""
    if not np.iscomplexobj(a):
        return x * np.sinc(a * x / math.pi)
    from .entire import csinc

    return x * csinc(a * x / math.pi)


class SineKernel:
    """F(x, t) = sum_k w_k sin(nu_k x) sin(nu_k t), solved exactly at any x.

    With K(x, t) = -sum_k z_k(x) sin(nu_k t), the coefficients solve
    (I + W G(x)) z = W phi(x), G_ij(x) = int_0^x sin(nu_i s) sin(nu_j s) ds.
    """

    def __init__(self, freqs, weights, chunk: int = 32):
        self.freqs, self.weights = _merge_terms(np.asarray(freqs, dtype=complex),
                                                np.asarray(weights, dtype=complex))
        self.chunk = chunk

    @classmethod
    def from_data(cls, data: SpectralData) -> "SineKernel":
        return cls(*kernel_terms(data))

    @property
    def rank(self) -> int:
        return self.freqs.size

    def _gram(self, x: np.ndarray) -> np.ndarray:
        a = self.freqs.real if np.all(self.freqs.imag == 0) else self.freqs
        dm = np.subtract.outer(a, a)
        sm = np.add.outer(a, a)
        xx = x[:, None, None]
        return 0.5 * (_sin_over(dm[None], xx) - _sin_over(sm[None], xx))

    def coefficients(self, x):
        """(phi, phi', z) at each x, arrays shaped (len(x), rank)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        nu, w = self.freqs, self.weights
        phi = np.sin(np.outer(x, nu))
        dphi = np.cos(np.outer(x, nu)) * nu
        z = np.empty_like(phi)
        eye = np.eye(self.rank)
        for lo in range(0, x.size, self.chunk):
            sl = slice(lo, lo + self.chunk)
            A = eye[None] + w[None, :, None] * self._gram(x[sl])
            z[sl] = np.linalg.solve(A, (w * phi[sl])[..., None])[..., 0]
        return phi, dphi, z

    def diagonal(self, x) -> np.ndarray:
        phi, _, z = self.coefficients(x)
        return -np.sum(phi * z, axis=1)

    def potential_values(self, x) -> np.ndarray:
        """2 d/dx K(x, x) = -4 phi'.z + 2 (phi.z)^2."""
        if self.rank == 0:
            return np.zeros(np.size(x), dtype=complex)
        phi, dphi, z = self.coefficients(x)
        pz = np.sum(phi * z, axis=1)
        return -4 * np.sum(dphi * z, axis=1) + 2 * pz * pz

    def potential(self, grid_size: int = 513, shift: complex = 0j) -> Potential:
        x = np.linspace(0.0, math.pi, grid_size)
        func = lambda t: self.potential_values(np.asarray(t, dtype=float).ravel()).reshape(np.shape(t)) + shift
        return Potential(func(x), "cubic", func, label="finite-rank")


@dataclass
class BasePerturbation:
    """Finite-rank Gelfand-Levitan step relative to a base potential.

    The Dirichlet roots mu_k of the base are kept and c(pi, mu_k) is moved from
    c_k to c~_k, i.e. int s^2 changes from a_k to a_k c_k / c~_k.  The new
    determinant is known in closed form from base quantities at x = pi:
    Delta^ = Delta_b + s_b(pi, mu) sum_k [(1 - alpha) r_k - alpha w_k] / (lambda_k - lambda),
    w_k = (c~_k/c_k - 1)/a_k, r_k = (1/c_k - 1/c~_k)/(a_k c_k).
    """

    base: Potential
    mus: np.ndarray
    c: np.ndarray
    s_sq: np.ndarray
    c_target: np.ndarray

    def __post_init__(self):
        self.mus = np.asarray(self.mus, dtype=complex)
        self.c = np.asarray(self.c, dtype=complex)
        self.s_sq = np.asarray(self.s_sq, dtype=complex)
        self.c_target = np.asarray(self.c_target, dtype=complex)

    @property
    def weights(self) -> np.ndarray:
        return (self.c_target / self.c - 1) / self.s_sq

    @property
    def slope_changes(self) -> np.ndarray:
        return (1 / self.c - 1 / self.c_target) / (self.s_sq * self.c)

    def determinant(self, alpha, gamma, theta, mu, steps: Optional[int] = None):
        from .direct import determinant_from_endpoints, fundamental_system

        mu = np.asarray(mu, dtype=complex)
        flat = mu.ravel()
        sol = fundamental_system(self.base, flat, steps)
        base_det = determinant_from_endpoints(alpha, gamma, theta, sol)
        coef = (1 - alpha) * self.slope_changes - alpha * self.weights
        lam_k = self.mus ** 2
        lam = flat ** 2
        diff = lam_k[None, :] - lam[:, None]
        close = np.abs(diff) <= 1e-12 * (1 + np.abs(lam_k))[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = sol.s_pi[:, None] / np.where(close, 1.0, diff)
        # s_b(pi, mu)/(lambda_k - lambda) -> -c_k a_k as mu -> mu_k
        ratio = np.where(close, -(self.c * self.s_sq)[None, :], ratio)
        out = base_det + ratio @ coef
        return out.reshape(mu.shape) if mu.ndim else complex(out[0])

    def potential_on_grid(self, grid_size: int = 2049, steps: Optional[int] = None):
        """(x, q_N) with q_N = q_b - 4 phi'.z + 2 (phi.z)^2, phi_k = s_b(x, mu_k)."""
        from scipy.integrate import cumulative_simpson

        from .direct import default_steps, trajectory

        steps = default_steps(self.mus) if steps is None else int(steps)
        stride = max(1, steps // (grid_size - 1))
        steps = stride * (grid_size - 1)
        xf, s, sp, _, _ = trajectory(self.base, self.mus, steps)
        sq = s * s
        diag = (cumulative_simpson(sq.real, x=xf, axis=1, initial=0.0)
                + 1j * cumulative_simpson(sq.imag, x=xf, axis=1, initial=0.0))[:, ::stride]
        x = xf[::stride]
        phi = s[:, ::stride].T
        dphi = sp[:, ::stride].T
        lam = self.mus ** 2
        w = self.weights
        M = lam.size
        q = self.base(x).astype(complex)
        eye = np.eye(M)
        dl = np.subtract.outer(lam, lam)
        np.fill_diagonal(dl, 1.0)
        for i in range(x.size):
            p, dp = phi[i], dphi[i]
            G = (np.outer(p, dp) - np.outer(dp, p)) / dl
            np.fill_diagonal(G, diag[:, i])
            z = np.linalg.solve(eye + w[:, None] * G, w * p)
            pz = p @ z
            q[i] += -4 * (dp @ z) + 2 * pz * pz
        return x, q

    def potential(self, grid_size: int = 2049, steps: Optional[int] = None) -> Potential:
        x, q = self.potential_on_grid(grid_size, steps)
        return Potential(q, "cubic", label="perturbed")


# --- reconstruction from a prescribed determinant ------------------------------------

@dataclass
class BranchRadii:
    eps: float
    delta: float
    sigma: float

    @property
    def bound(self) -> float:
        return min(self.delta, self.sigma / (1 + math.pi))


def _roots_near(z, alpha, targets):
    """Root of alpha c^2 - z c + 1 - alpha nearest each target (continuous branch)."""
    z = np.asarray(z, dtype=complex)
    r = np.sqrt(z * z - 4 * alpha * (1 - alpha))
    a, b = (z + r) / (2 * alpha), (z - r) / (2 * alpha)
    return np.where(np.abs(a - targets) <= np.abs(b - targets), a, b)


def branch_radii(alpha) -> BranchRadii:
    """epsilon, delta and sigma of the selection argument, found by sampling disks."""
    alpha = _check_alpha(alpha)
    plus, minus, case = _small_index_targets(alpha)
    if case == "off-axis":
        eps = 0.5 * min(1.0, abs(plus.real))
    else:
        d = plus - 1
        dist = lambda p: abs((np.conj(d) * p).imag) / abs(d)
        eps = 0.5 * min(1.0, dist(1.0), dist(plus))
    theta = np.exp(2j * math.pi * np.arange(48) / 48)
    rho = np.array([0.25, 0.5, 0.75, 1.0])
    disk = (rho[:, None] * theta[None, :]).ravel()

    def largest(ok):
        lo, hi = 0.0, 1.0
        if ok(hi):
            return hi
        for _ in range(40):
            mid = (lo + hi) / 2
            lo, hi = (mid, hi) if ok(mid) else (lo, mid)
        return lo

    def near_one(r):
        z = r * disk
        e = _roots_near(1 + z, alpha, 1.0)
        o = _roots_near(-1 + z, alpha, -1.0)
        return np.all(np.abs(e - 1) < eps) and np.all(np.abs(o + 1) < eps)

    def near_centres(r):
        z = r * disk
        return (np.all(np.abs(_roots_near(z, alpha, plus) - plus) < eps)
                and np.all(np.abs(_roots_near(z, alpha, minus) - minus) < eps))

    return BranchRadii(eps, largest(near_one), largest(near_centres))


def perturbed_roots(N: int, eps1: float) -> np.ndarray:
    """N points spaced uniformly inside (N + 1/2 - eps1, N + 1/2 + eps1)."""
    k = np.arange(1, N + 1)
    return N + 0.5 - eps1 + 2 * eps1 * k / (N + 1)


def _cos_rational(theta, a, N: int):
    """sum_{n > N} cos(n theta) / (n^2 - a^2) for theta in [-2 pi, 2 pi], a not an integer."""
    t = np.abs(theta)
    total = 1 / (2 * a * a) - math.pi * np.cos(a * (math.pi - t)) / (2 * a * np.sin(math.pi * a))
    n = np.arange(1, N + 1)
    return total - np.cos(np.multiply.outer(t, n)) @ (1.0 / (n * n - a * a))


def product_tail_kernel(head, x):
    """sum_{n > N} (2/pi)(1/r_n - 1) sin nx sin nt, r_n = prod_k (mu_k^2 - n^2)/(k^2 - n^2).

    1/r_n - 1 = sum_k A_k / (mu_k^2 - n^2) by partial fractions, and each
    term is summed in closed form.
    """
    head = np.asarray(head, dtype=complex)
    N = head.size
    k = np.arange(1, N + 1)
    d = np.subtract.outer(x, x)
    s = np.add.outer(x, x)
    out = np.zeros((x.size, x.size), dtype=complex)
    for j, m in enumerate(head):
        others = np.delete(head, j)
        A = np.prod(k ** 2 - m ** 2) / np.prod(others ** 2 - m ** 2)
        psi_d = _cos_rational(d.ravel(), m, N).reshape(d.shape)
        psi_s = _cos_rational(s.ravel(), m, N).reshape(s.shape)
        out += -(2 / math.pi) * A * (psi_d - psi_s) / 2
    return out


def determinant_kernel(data: SpectralData, N: int, grid_size: int) -> GLKernel:
    """F for data whose roots are mu_n = n beyond N: the sine-product part of the
    weights is summed exactly, the remainder up to the data length."""
    x = np.linspace(0.0, math.pi, grid_size)
    n = data.n
    mus = data.mus
    u = data.weights
    F = np.zeros((grid_size, grid_size), dtype=complex)
    for i in range(N):
        a = np.sin(mus[i] * x)
        b = np.sin(n[i] * x)
        F += u[i] * np.outer(a, a) - (2 / math.pi) * np.outer(b, b)
    head = mus[:N]
    kk = np.arange(1, N + 1)
    tail_n = n[N:].astype(float)
    ratio = np.prod((head[None, :] ** 2 - tail_n[:, None] ** 2)
                    / (kk[None, :] ** 2 - tail_n[:, None] ** 2), axis=1) if N else np.ones(tail_n.size)
    rest = u[N:] - (2 / math.pi) / ratio  # (2/pi)((-1)^n c_n - 1)/r_n
    if rest.size:
        B = np.sin(np.outer(x, tail_n))
        F += (B * rest) @ B.T
    if N:
        F += product_tail_kernel(head, x)
    last = float(np.abs(rest[-1])) if rest.size else 0.0
    return GLKernel(x, x, F, last_term=last, asymmetry=float(np.abs(F - F.T).max()))


@dataclass
class Reconstruction:
    potential: Potential
    data: SpectralData
    report: dict


def reconstruct_from_determinant(u, alpha, gamma, theta: int, q0: complex = 0j, N: int = 1,
                                 eps1: float = 1e-3, n_terms: int = 200, method: str = "nystrom",
                                 grid_size: int = 513, check_grid=None) -> Reconstruction:
    """A potential whose characteristic determinant (with alpha, gamma, theta) is ``u``.

    ``u`` is any callable of mu (a DeterminantModel, HadamardModel or closure).
    For q0 != 0 the model is read as u(sqrt(mu^2 + q0)) and q0 is added back.
    """
    from .entire import SineTypeProduct, product_derivative_at_root
    from .errors import IncreaseN

    alpha = _check_alpha(alpha)
    sign = -1.0 if theta == 0 else 1.0

    def u_plus(mu):
        mu = np.asarray(mu, dtype=complex)
        arg = np.sqrt(mu * mu + q0) if q0 != 0 else mu
        return np.asarray(u(arg), dtype=complex) - sign

    radii = branch_radii(alpha)
    if eps1 >= radii.bound:
        log.info("eps1 %.3g reduced to %.3g", eps1, 0.9 * radii.bound)
        eps1 = 0.9 * radii.bound
    n = np.arange(1, n_terms + 1)
    tail_dev = np.abs(u_plus(n[N:].astype(complex)) - (-1.0) ** n[N:])
    if tail_dev.size and tail_dev.max() >= eps1:
        k = int(n[N:][np.argmax(tail_dev)])
        raise IncreaseN(f"|u_+(n) - (-1)^n| = {tail_dev.max():.3g} >= eps1 = {eps1:.3g} at n = {k}")
    head = perturbed_roots(N, eps1)
    up_head = u_plus(head)
    if N and np.abs(up_head).max() >= radii.sigma:
        raise IncreaseN("u_+ at the perturbed roots leaves the sigma disk")
    sp = SineTypeProduct(head)
    mus = np.concatenate([head, n[N:].astype(float)]).astype(complex)
    sdot = np.array([product_derivative_at_root(sp, k) for k in n])
    up = np.concatenate([up_head, u_plus(n[N:].astype(complex))])
    data = choose_norming_roots(up, alpha, sdot, mus, N)
    report = {"N": N, "eps1": eps1, "n_terms": n_terms, "method": method,
              "branch": {"eps": radii.eps, "delta": radii.delta, "sigma": radii.sigma},
              "halfplane": {"phi": data.separating.phi, "margin": data.separating.margin},
              "quadratic_residual": float(quadratic_residual(data, up, alpha).max())}
    if method == "finite-rank":
        kern = SineKernel.from_data(data)
        pot = kern.potential(grid_size, shift=q0)
        report["rank"] = kern.rank
    elif method == "nystrom":
        K = solve_all(determinant_kernel(data, N, grid_size))
        pot = potential_from_kernel(np.diag(K.K_values), K.x_grid, shift=q0)
        report.update(max_cond=K.max_cond, gl_residual=K.residual, last_term=K.last_term)
    else:
        raise ValueError(f"unknown method {method!r}")
    report["mean"] = [pot.mean.real, pot.mean.imag]
    if check_grid is not None:
        from .direct import ProblemCollection, char_determinant

        grid = np.asarray(check_grid, dtype=complex)
        p = ProblemCollection(alpha, gamma, theta, pot)
        target = np.asarray(u(grid), dtype=complex)
        report["determinant_residual"] = float(np.abs(char_determinant(p, grid) - target).max())
    return Reconstruction(pot, data, report)


def verify_reconstruction(qhat: Potential, data: SpectralData, n_check: Optional[int] = None,
                          steps: Optional[int] = None) -> dict:
    """max |s(pi, mu_n)|, |c(pi, mu_n) - c_n|, |s'(pi, mu_n) - 1/c_n| over n <= n_check."""
    from .direct import fundamental_system

    m = data.mus.size if n_check is None else min(n_check, data.mus.size)
    mu = data.mus[:m]
    c = data.norming[:m]
    sol = fundamental_system(qhat, mu, steps)
    return {
        "n_check": int(m),
        "s_pi": float(np.abs(sol.s_pi).max()),
        "c_pi": float(np.abs(sol.c_pi - c).max()),
        "s_prime_pi": float(np.abs(sol.s_prime_pi - 1 / c).max()),
    }
