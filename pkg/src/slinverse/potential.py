"""Complex potentials on [0, pi]: samples, interpolation, builtin families and CSV I/O."""

from __future__ import annotations

import ast
import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import simpson
from scipy.interpolate import CubicSpline

from .errors import InvalidPotential

DEFAULT_GRID = 4097


def simpson_weights(n: int, h: float) -> np.ndarray:
    """Composite quadrature weights for ``n`` equispaced nodes.

    Simpson's rule when ``n - 1`` is even; otherwise Simpson on the first
    ``n - 4`` intervals and the 3/8 rule on the last three.
    """
    if n < 2:
        return np.zeros(n)
    if n == 2:
        return np.array([h / 2, h / 2])
    if n == 3:
        return np.array([1, 4, 1]) * h / 3
    w = np.zeros(n)
    m = n - 1
    if m % 2 == 0:
        w[0:m + 1:2] += 2
        w[1:m:2] += 4
        w[0] -= 1
        w[m] -= 1
        return w * h / 3
    # odd interval count
    w[: m - 2] = simpson_weights(m - 2, h)
    w[m - 3:] += np.array([1, 3, 3, 1]) * 3 * h / 8
    return w


def l2_norm(values: np.ndarray, x: np.ndarray) -> float:
    """L2 norm on [x0, x_end] by composite Simpson."""
    return float(np.sqrt(simpson(np.abs(values) ** 2, x=x)))


@dataclass
class Potential:
    """Samples of q on a uniform grid covering [0, pi] inclusive.

    ``exact`` optionally holds a vectorised callable; when present it is used
    instead of the interpolant (builtin families, smooth approximants).
    """

    samples: np.ndarray
    interpolation: str = "cubic"
    exact: Optional[Callable[[np.ndarray], np.ndarray]] = None
    label: str = ""
    _interp: Optional[Callable] = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=complex)
        if self.samples.ndim != 1 or self.samples.size < 3:
            raise InvalidPotential("need at least 3 samples on [0, pi]")
        if not np.all(np.isfinite(self.samples)):
            raise InvalidPotential("non-finite potential samples")
        if self.interpolation not in ("linear", "cubic"):
            raise InvalidPotential(f"unknown interpolation {self.interpolation!r}")

    @property
    def grid_size(self) -> int:
        return self.samples.size

    @property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, math.pi, self.grid_size)

    @property
    def mean(self) -> complex:
        """<q> = (1/pi) int_0^pi q, composite Simpson on the samples."""
        x = self.x
        w = simpson_weights(x.size, x[1] - x[0])
        return complex(w @ self.samples) / math.pi

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.exact is not None:
            return np.asarray(self.exact(x), dtype=complex) * np.ones_like(x)
        if self._interp is None:
            grid = self.x
            if self.interpolation == "cubic":
                re = CubicSpline(grid, self.samples.real)
                im = CubicSpline(grid, self.samples.imag)
                self._interp = lambda t: re(t) + 1j * im(t)
            else:
                s = self.samples
                self._interp = lambda t: np.interp(t, grid, s.real) + 1j * np.interp(t, grid, s.imag)
        return self._interp(x)

    def shifted(self, q0: complex) -> "Potential":
        ex = None if self.exact is None else (lambda t, f=self.exact: f(t) + q0)
        return Potential(self.samples + q0, self.interpolation, ex, self.label)

    def resampled(self, grid_size: int) -> "Potential":
        x = np.linspace(0.0, math.pi, grid_size)
        return Potential(self(x), self.interpolation, self.exact, self.label)

    def l2_distance(self, other: "Potential", grid_size: int = DEFAULT_GRID) -> float:
        x = np.linspace(0.0, math.pi, grid_size)
        return l2_norm(self(x) - other(x), x)

    def norm(self, grid_size: int = DEFAULT_GRID) -> float:
        x = np.linspace(0.0, math.pi, grid_size)
        return l2_norm(self(x), x)


def from_function(func: Callable, grid_size: int = DEFAULT_GRID, label: str = "") -> Potential:
    x = np.linspace(0.0, math.pi, grid_size)
    vals = np.asarray(func(x), dtype=complex) * np.ones_like(x)
    return Potential(vals, "cubic", func, label)


def zero(grid_size: int = DEFAULT_GRID) -> Potential:
    return from_function(lambda x: np.zeros_like(x, dtype=complex), grid_size, "0")


def constant(q0: complex, grid_size: int = DEFAULT_GRID) -> Potential:
    return from_function(lambda x: np.full_like(x, q0, dtype=complex), grid_size, repr(q0))


def polynomial(coeffs, grid_size: int = DEFAULT_GRID) -> Potential:
    """q(x) = sum_k coeffs[k] x**k."""
    c = np.asarray(coeffs, dtype=complex)
    return from_function(lambda x: np.polynomial.polynomial.polyval(x, c), grid_size)


def trig_series(a0=0.0, cos_coeffs=(), sin_coeffs=(), grid_size: int = DEFAULT_GRID) -> Potential:
    """q(x) = a0 + sum_k a_k cos kx + sum_k b_k sin kx, k starting at 1."""
    ca = np.asarray(cos_coeffs, dtype=complex)
    sb = np.asarray(sin_coeffs, dtype=complex)

    def f(x):
        out = np.full(np.shape(x), a0, dtype=complex)
        for k, a in enumerate(ca, 1):
            out = out + a * np.cos(k * x)
        for k, b in enumerate(sb, 1):
            out = out + b * np.sin(k * x)
        return out

    return from_function(f, grid_size)


# --- expression parser -------------------------------------------------------
# Polynomials and finite trigonometric sums with real coefficients only.

_FUNCS = {"sin": np.sin, "cos": np.cos}


def _compile(node):
    if isinstance(node, ast.Expression):
        return _compile(node.body)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        v = float(node.value)
        return lambda x: np.full_like(x, v)
    if isinstance(node, ast.Name):
        if node.id == "x":
            return lambda x: x
        if node.id == "pi":
            return lambda x: np.full_like(x, math.pi)
        raise InvalidPotential(f"unknown name {node.id!r}")
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        f = _compile(node.operand)
        return (lambda x: -f(x)) if isinstance(node.op, ast.USub) else f
    if isinstance(node, ast.BinOp):
        lhs, rhs = _compile(node.left), _compile(node.right)
        if isinstance(node.op, ast.Add):
            return lambda x: lhs(x) + rhs(x)
        if isinstance(node.op, ast.Sub):
            return lambda x: lhs(x) - rhs(x)
        if isinstance(node.op, ast.Mult):
            return lambda x: lhs(x) * rhs(x)
        if isinstance(node.op, ast.Div):
            if not _is_constant(node.right):
                raise InvalidPotential("division only by constants")
            return lambda x: lhs(x) / rhs(x)
        if isinstance(node.op, ast.Pow):
            if not (isinstance(node.right, ast.Constant) and isinstance(node.right.value, int)
                    and node.right.value >= 0):
                raise InvalidPotential("only non-negative integer powers")
            k = node.right.value
            return lambda x: lhs(x) ** k
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS:
        if len(node.args) != 1 or node.keywords:
            raise InvalidPotential(f"{node.func.id} takes one argument")
        if not _is_linear_in_x(node.args[0]):
            raise InvalidPotential("trigonometric arguments must be k*x")
        fn, arg = _FUNCS[node.func.id], _compile(node.args[0])
        return lambda x: fn(arg(x))
    raise InvalidPotential(f"unsupported expression element: {ast.dump(node)}")


def _is_constant(node) -> bool:
    return not any(isinstance(n, ast.Name) and n.id == "x" for n in ast.walk(node))


def _is_linear_in_x(node) -> bool:
    if isinstance(node, ast.Name) and node.id == "x":
        return True
    if isinstance(node, ast.BinOp) and isinstance(node.op, ast.Mult):
        return (_is_constant(node.left) and _is_linear_in_x(node.right)) or (
            _is_constant(node.right) and _is_linear_in_x(node.left))
    return False


def parse_expression(text: str, grid_size: int = DEFAULT_GRID) -> Potential:
    """Parse e.g. ``"0.2*sin(x)"``, ``"1 + x - 0.5*x**2"``, ``"cos(2*x)"``."""
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise InvalidPotential(f"cannot parse potential {text!r}") from exc
    f = _compile(tree)
    pot = from_function(lambda x: f(np.asarray(x, dtype=float)).astype(complex), grid_size, text)
    return pot


def builtin(spec: str, grid_size: int = DEFAULT_GRID) -> Potential:
    """Builtin families: ``zero``, ``constant:<c>``, ``poly:<c0>,<c1>,...``,
    ``trig:<a0>;<a1>,<a2>,...;<b1>,<b2>,...`` or a plain expression."""
    s = spec.strip()
    if s in ("zero", "0"):
        return zero(grid_size)
    head, _, rest = s.partition(":")
    if head == "constant":
        return constant(complex(rest.replace("i", "j")), grid_size)
    if head == "poly":
        return polynomial([float(c) for c in rest.split(",") if c], grid_size)
    if head == "trig":
        parts = (rest.split(";") + ["", ""])[:3]
        a0 = float(parts[0] or 0)
        ca = [float(c) for c in parts[1].split(",") if c]
        sb = [float(c) for c in parts[2].split(",") if c]
        return trig_series(a0, ca, sb, grid_size)
    return parse_expression(s, grid_size)


def read_csv(path) -> Potential:
    """CSV with columns x, re(q), im(q) on a uniform grid over [0, pi]."""
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                rows.append([float(v) for v in row[:3]])
            except ValueError:
                continue  # header
    data = np.array(rows)
    if data.ndim != 2 or data.shape[1] < 2:
        raise InvalidPotential(f"{path}: expected columns x,re,im")
    x = data[:, 0]
    if abs(x[0]) > 1e-9 or abs(x[-1] - math.pi) > 1e-9 or not np.allclose(np.diff(x), x[1] - x[0]):
        raise InvalidPotential(f"{path}: grid must be uniform on [0, pi]")
    im = data[:, 2] if data.shape[1] > 2 else 0.0
    return Potential(data[:, 1] + 1j * im, label=str(path))


def write_csv(path, q: Potential) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "re_q", "im_q"])
        for xi, v in zip(q.x, q.samples):
            w.writerow([repr(float(xi)), repr(float(v.real)), repr(float(v.imag))])
