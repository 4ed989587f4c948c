"""Two-point boundary forms: minors, regularity test and the (alpha, gamma, theta) reduction.

The boundary forms are

    B_i(u) = a_i1 u'(0) + a_i2 u'(pi) + a_i3 u(0) + a_i4 u(pi),   i = 1, 2,

stored as a 2x4 complex matrix.  Only conditions that are regular but not
strongly regular are in scope; for those the characteristic equation reduces
to a function of three parameters.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import InvalidBoundaryForms, NotInScope

# relative tolerance for the sign relation between the minor sums
SIGN_RTOL = 1e-10
# gamma (and alpha - 1/2) counted as zero below this, scaled by 1 + |alpha|
ZERO_ATOL = 1e-12

PAIRS = list(combinations(range(1, 5), 2))

PERIODIC = np.array([[1, -1, 0, 0], [0, 0, 1, -1]], dtype=complex)
ANTIPERIODIC = np.array([[1, 1, 0, 0], [0, 0, 1, 1]], dtype=complex)


def as_bc_matrix(values) -> np.ndarray:
    """Coerce 8 complex numbers, 16 interleaved floats, or a 2x4 array into a 2x4 matrix."""
    arr = np.asarray(values)
    if arr.shape == (2, 4):
        return arr.astype(complex)
    flat = arr.ravel()
    if flat.size == 8:
        return flat.astype(complex).reshape(2, 4)
    if flat.size == 16 and not np.iscomplexobj(flat):
        flat = flat.astype(float)
        return (flat[0::2] + 1j * flat[1::2]).reshape(2, 4)
    raise InvalidBoundaryForms(f"expected 8 complex or 16 real coefficients, got {flat.size}")


def compute_minors(A) -> dict[str, complex]:
    """Return the six 2x2 minors ``A_ij`` keyed as ``'12'``, ``'13'``, ..."""
    A = as_bc_matrix(A)
    if not np.all(np.isfinite(A)):
        raise InvalidBoundaryForms("non-finite coefficient")
    minors = {}
    for i, j in PAIRS:
        minors[f"{i}{j}"] = complex(A[0, i - 1] * A[1, j - 1] - A[0, j - 1] * A[1, i - 1])
    scale = max(abs(v) for v in minors.values())
    norm = np.linalg.norm(A, axis=1).prod()
    if norm == 0 or scale <= 1e-14 * norm:
        raise InvalidBoundaryForms("boundary forms are linearly dependent (rank < 2)")
    return minors


@dataclass(frozen=True)
class BoundaryClassification:
    minors: dict
    regular_not_strongly: bool
    bc_type: str
    alpha: complex
    gamma: complex
    theta: int

    def as_dict(self) -> dict:
        def num(z):
            z = complex(z)
            return z.real + 0.0 if z.imag == 0 else [z.real + 0.0, z.imag + 0.0]

        return {
            "type": self.bc_type,
            "alpha": num(self.alpha),
            "gamma": num(self.gamma),
            "theta": self.theta,
            "regular_not_strongly": self.regular_not_strongly,
            "minors": {k: [v.real, v.imag] for k, v in self.minors.items()},
        }


def _close(a: complex, b: complex) -> bool:
    return abs(a - b) <= SIGN_RTOL * max(abs(a), abs(b))


def type_of(alpha: complex, gamma: complex) -> str:
    scale = ZERO_ATOL * (1 + abs(alpha))
    half = abs(alpha - 0.5) <= scale
    zero_gamma = abs(gamma) <= scale
    return {(True, True): "I", (True, False): "II", (False, True): "III", (False, False): "IV"}[
        (half, zero_gamma)
    ]


def classify(A) -> BoundaryClassification:
    m = compute_minors(A)
    scale = max(abs(v) for v in m.values())
    s = m["14"] + m["23"]
    t = m["13"] + m["24"]
    if abs(m["12"]) > SIGN_RTOL * scale:
        raise NotInScope(f"A_12 = {m['12']} is nonzero")
    if abs(s) <= SIGN_RTOL * scale:
        raise NotInScope("A_14 + A_23 = 0")
    minus = _close(s, -t)
    plus = _close(s, t)
    if minus and plus:
        raise NotInScope("both sign relations hold; conditions are not regular")
    if not (minus or plus):
        raise NotInScope("A_14 + A_23 is not equal to -(A_13 + A_24) or +(A_13 + A_24)")
    theta = 0 if minus else 1
    alpha = m["14"] / s
    gamma = -m["34"] / s
    return BoundaryClassification(
        minors=m,
        regular_not_strongly=True,
        bc_type=type_of(alpha, gamma),
        alpha=complex(alpha),
        gamma=complex(gamma),
        theta=theta,
    )


def matrix_from_parameters(alpha: complex, gamma: complex, theta: int) -> np.ndarray:
    """A boundary matrix whose reduction is the given (alpha, gamma, theta).

    Uses rows (1, k, 0, n) and (0, 0, p, r) (or (1, k, m, 0) when alpha = 1) with k = -1 for theta = 0 and
    k = +1 for theta = 1; then A_14 + A_23 = r + k p.
    """
    k = -1.0 if theta == 0 else 1.0
    # choose p, r with r / (r + k p) = alpha
    if alpha == 1:
        p, r = 0.0, 1.0
    else:
        p = 1.0
        r = alpha * k * p / (1 - alpha)
    s = r + k * p
    if p == 0:
        # alpha = 1: A_34 = m r
        return np.array([[1, k, -gamma * s / r, 0], [0, 0, p, r]], dtype=complex)
    # A_34 = -n p; stays bounded as alpha -> 0
    n = gamma * s / p
    return np.array([[1, k, 0, n], [0, 0, p, r]], dtype=complex)
