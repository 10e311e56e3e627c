"""Affine zippers: construction, validation, evaluation of v and sampling."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import (
    BudgetError,
    NotContractingError,
    ParameterError,
    SchemaError,
    ShapeError,
    ValidationError,
)
from .products import DEFAULT_BUDGET, MatrixSystem, level_products, matrix_norm

INVERTIBILITY_THRESHOLD = 1e-12
CONTRACTION_DEPTH = 8
_MAX_RADIUS_WORDS = 1 << 20
_MAX_EVAL_DEPTH = 5000
_WEIGHT_DENOMINATOR = 1 << 32


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class AffineMap:
    """x -> matrix @ x + translation."""

    matrix: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        m = _readonly(self.matrix)
        t = _readonly(self.translation).reshape(-1)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ShapeError(f"matrix must be square, got shape {m.shape}")
        if t.shape[0] != m.shape[0]:
            raise ShapeError(f"translation has length {t.shape[0]}, matrix is {m.shape[0]}x{m.shape[0]}")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "translation", t)

    @property
    def dim(self):
        return self.matrix.shape[0]

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return x @ self.matrix.T + self.translation

    def invertibility_margin(self):
        """|det A| / ||A||^d; invertible when above INVERTIBILITY_THRESHOLD."""
        norm = float(matrix_norm(self.matrix[None])[0])
        if norm == 0:
            return 0.0
        return abs(float(np.linalg.det(self.matrix))) / norm**self.dim


def fixed_point(f: AffineMap):
    """The unique x with f(x) = x."""
    m = np.eye(f.dim) - f.matrix
    if abs(np.linalg.det(m)) <= INVERTIBILITY_THRESHOLD * max(1.0, np.abs(m).max()) ** f.dim:
        raise ParameterError("map has eigenvalue 1")
    return np.linalg.solve(m, f.translation)


@dataclass(frozen=True, eq=False)
class Zipper:
    maps: tuple
    vertices: np.ndarray
    signature: tuple
    weights: np.ndarray
    name: str = ""
    notes: tuple = ()

    def __post_init__(self):
        maps = tuple(m if isinstance(m, AffineMap) else AffineMap(*m) for m in self.maps)
        if not maps:
            raise ShapeError("a zipper needs at least one map")
        d = maps[0].dim
        if any(m.dim != d for m in maps):
            raise ShapeError("all maps must act on the same dimension")
        n = len(maps)
        verts = _readonly(self.vertices)
        if verts.shape != (n + 1, d):
            raise ShapeError(f"expected {n + 1} vertices of dimension {d}, got shape {verts.shape}")
        sig = tuple(int(s) for s in self.signature)
        if len(sig) != n or any(s not in (0, 1) for s in sig):
            raise ShapeError(f"signature must be {n} bits, got {self.signature!r}")
        w = _readonly(self.weights).reshape(-1)
        if w.shape[0] != n:
            raise ShapeError(f"expected {n} weights, got {w.shape[0]}")
        if np.any(~np.isfinite(w)) or np.any(w <= 0):
            raise ShapeError("weights must be finite and strictly positive")
        object.__setattr__(self, "maps", maps)
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "signature", sig)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "notes", tuple(self.notes))

    @property
    def N(self):
        return len(self.maps)

    @property
    def dim(self):
        return self.maps[0].dim

    @cached_property
    def matrices(self):
        return _readonly(np.stack([m.matrix for m in self.maps]))

    @cached_property
    def translations(self):
        return _readonly(np.stack([m.translation for m in self.maps]))

    @cached_property
    def system(self):
        return MatrixSystem(self.matrices, self.weights)

    @cached_property
    def exact_weights(self):
        """Weights as Fractions summing to exactly 1."""
        fr = [Fraction(float(w)).limit_denominator(_WEIGHT_DENOMINATOR) for w in self.weights]
        total = sum(fr)
        return tuple(f / total for f in fr)

    @cached_property
    def exact_breaks(self):
        """Cumulative weights c_0 = 0 < c_1 < ... < c_N = 1."""
        c = [Fraction(0)]
        for w in self.exact_weights:
            c.append(c[-1] + w)
        return tuple(c)

    @cached_property
    def contraction(self):
        """(depth q, max_{|w|=q} ||A_w||) using the largest affordable q <= CONTRACTION_DEPTH."""
        q = CONTRACTION_DEPTH
        while q > 1 and self.N**q > _MAX_RADIUS_WORDS:
            q -= 1
        return q, joint_contraction(self.matrices, q)

    @cached_property
    def radius(self):
        """Upper bound R on the distance from the vertex centroid to any point of the curve."""
        q, mq = self.contraction
        if not mq < 1:
            raise NotContractingError(
                f"max norm of products of length {q} is {mq:.6g} >= 1; the maps do not contract"
            )
        c = self.vertices.mean(axis=0)
        m = max(float(np.linalg.norm(f(c) - c)) for f in self.maps)
        partial = sum(joint_contraction(self.matrices, r) for r in range(q))
        return m * partial / (1.0 - mq)

    def with_vertices(self, vertices):
        return Zipper(self.maps, vertices, self.signature, self.weights, self.name, self.notes)


def joint_contraction(matrices, q):
    """max over words of length q of the 2-norm of the product (1 for q = 0)."""
    if q == 0:
        return 1.0
    mats, logscale = level_products(matrices, q)
    return float(np.exp((logscale + np.log(matrix_norm(mats))).max()))


def make_zipper(matrices, translations, vertices, signature=None, weights=None, name="", notes=()):
    matrices = np.asarray(matrices, dtype=float)
    n = matrices.shape[0]
    if signature is None:
        signature = (0,) * n
    if weights is None:
        weights = np.full(n, 1.0 / n)
    maps = tuple(AffineMap(a, t) for a, t in zip(matrices, np.asarray(translations, dtype=float)))
    if len(maps) != n:
        raise ShapeError(f"{n} matrices but {len(maps)} translations")
    return Zipper(maps, vertices, signature, weights, name, notes)


def straight_line(n_maps=2):
    """Uniform subdivision of the unit segment on the x-axis; v is the identity embedding."""
    a = np.eye(2) / n_maps
    mats = np.stack([a] * n_maps)
    trans = np.array([[k / n_maps, 0.0] for k in range(n_maps)])
    verts = np.array([[k / n_maps, 0.0] for k in range(n_maps + 1)])
    return make_zipper(mats, trans, verts, name="straight-line")


# ---------------------------------------------------------------- validation


@dataclass
class Check:
    name: str
    passed: bool
    value: float
    detail: str = ""


@dataclass
class ValidationReport:
    tol: float
    cross_residual: float
    cross_offending: list
    invertibility_margins: list
    weight_residual: float
    contraction_depth: int
    contraction_factor: float
    checks: list = field(default_factory=list)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def failed(self):
        return [c for c in self.checks if not c.passed]

    def summary(self):
        if self.passed:
            return f"zipper valid (cross residual {self.cross_residual:.3g})"
        parts = [f"{c.name}: {c.detail or c.value}" for c in self.failed()]
        return "zipper invalid; " + "; ".join(parts)

    def raise_if_failed(self):
        if not self.passed:
            raise ValidationError(self)
        return self

    def to_dict(self):
        return {
            "pass": self.passed,
            "tol": self.tol,
            "cross_residual": self.cross_residual,
            "cross_offending": self.cross_offending,
            "invertibility_margins": self.invertibility_margins,
            "weight_residual": self.weight_residual,
            "contraction_depth": self.contraction_depth,
            "contraction_factor": self.contraction_factor,
            "checks": [
                {"condition": c.name, "pass": c.passed, "value": c.value, "detail": c.detail}
                for c in self.checks
            ],
        }


def cross_residuals(zipper: Zipper):
    """Per-map residual max(|f_i(z_0) - z_{i+e}|, |f_i(z_N) - z_{i+1-e}|)."""
    z = zipper.vertices
    out = []
    for i, (f, e) in enumerate(zip(zipper.maps, zipper.signature)):
        r0 = np.linalg.norm(f(z[0]) - z[i + e])
        r1 = np.linalg.norm(f(z[-1]) - z[i + 1 - e])
        out.append(float(max(r0, r1)))
    return out


def validate_zipper(candidate, tol=1e-9, depth=CONTRACTION_DEPTH):
    """Check cross-condition, invertibility, weights and joint contraction."""
    if tol <= 0:
        raise ParameterError(f"tol must be positive, got {tol}")
    zipper = candidate if isinstance(candidate, Zipper) else zipper_from_dict(candidate)
    res = cross_residuals(zipper)
    worst = max(res)
    offending = [i for i, r in enumerate(res) if r > tol]
    margins = [m.invertibility_margin() for m in zipper.maps]
    wres = abs(float(zipper.weights.sum()) - 1.0)
    q = depth
    if zipper.N**q > DEFAULT_BUDGET:
        raise BudgetError(f"contraction check at depth {q} needs {zipper.N}**{q} products")
    factor = joint_contraction(zipper.matrices, q)
    checks = [
        Check(
            "cross_condition",
            worst <= tol,
            worst,
            "" if not offending else f"residual {res[offending[0]]:.6g} at map index {offending[0]}"
            + (f" (also {offending[1:]})" if len(offending) > 1 else ""),
        ),
        Check(
            "invertible",
            all(m > INVERTIBILITY_THRESHOLD for m in margins),
            min(margins),
            ", ".join(f"map {i} is singular" for i, m in enumerate(margins) if m <= INVERTIBILITY_THRESHOLD),
        ),
        Check("weights_sum", wres <= tol, wres, "" if wres <= tol else f"weights sum to {zipper.weights.sum()!r}"),
        Check(
            "joint_contraction",
            factor < 1.0,
            factor,
            "" if factor < 1 else f"max norm of length-{q} products is {factor:.6g}",
        ),
    ]
    return ValidationReport(tol, worst, offending, margins, wres, q, factor, checks)


# ---------------------------------------------------------------- evaluation


@dataclass(frozen=True)
class CurvePoint:
    parameter: float
    position: np.ndarray
    error_bound: float


def _coerce_parameter(x):
    fx = x if isinstance(x, Fraction) else Fraction(float(x))
    if fx < 0 or fx > 1:
        raise ParameterError(f"parameter must lie in [0, 1], got {float(x)!r}")
    return fx


def descend(zipper: Zipper, u: Fraction):
    """One coding step: (symbol, g_symbol^{-1}(u)); a breakpoint goes to the cylinder it starts."""
    c = zipper.exact_breaks
    n = zipper.N
    # largest i with c_i <= u, capped at N-1 so that u = 1 stays in the last cylinder
    lo, hi = 0, n - 1
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if c[mid] <= u:
            lo = mid
        else:
            hi = mid - 1
    i = lo
    lam = zipper.exact_weights[i]
    if zipper.signature[i]:
        return i, (c[i + 1] - u) / lam
    return i, (u - c[i]) / lam


def coding(zipper: Zipper, x, length):
    """First ``length`` symbols of the coding of x."""
    u = _coerce_parameter(x)
    out = []
    for _ in range(length):
        i, u = descend(zipper, u)
        out.append(i)
    return out


def evaluate_v(zipper: Zipper, x, tol=1e-12):
    """v(x) with a guaranteed error bound <= tol."""
    if not tol > 0:
        raise ParameterError(f"tol must be positive, got {tol}")
    u = _coerce_parameter(x)
    pos, bound = _evaluate(zipper, u, tol)
    return CurvePoint(float(x), pos, bound)


def _evaluate(zipper, u, tol, matrix=None, offset=None):
    """Apply (matrix, offset) o v to the exact parameter u."""
    R2 = 2.0 * zipper.radius
    d = zipper.dim
    M = np.eye(d) if matrix is None else np.array(matrix, dtype=float)
    b = np.zeros(d) if offset is None else np.array(offset, dtype=float)
    c = zipper.exact_breaks
    z = zipper.vertices
    mats, trans = zipper.matrices, zipper.translations
    for _ in range(_MAX_EVAL_DEPTH):
        if u in c:
            k = c.index(u)
            return M @ z[k] + b, 0.0
        norm = float(matrix_norm(M[None])[0])
        if norm * R2 <= tol:
            chord = z[0] + float(u) * (z[-1] - z[0])
            return M @ chord + b, norm * R2
        i, u = descend(zipper, u)
        b = b + M @ trans[i]
        M = M @ mats[i]
    raise NotContractingError(f"evaluation did not reach tolerance {tol} within {_MAX_EVAL_DEPTH} levels")


# ---------------------------------------------------------------- sampling


@dataclass(frozen=True)
class CurveSample:
    """Level-n vertex set of the curve in parameter order."""

    depth: int
    parameters: np.ndarray
    positions: np.ndarray
    adjacency_residual: float

    def __len__(self):
        return self.parameters.shape[0]

    def __getitem__(self, k):
        return CurvePoint(float(self.parameters[k]), self.positions[k], 0.0)

    def __iter__(self):
        return (self[k] for k in range(len(self)))


def sample_curve(zipper: Zipper, depth, budget=DEFAULT_BUDGET):
    """Points v(x) at every level-``depth`` breakpoint, i.e. f_w(z_0) for |w| = depth plus z_N."""
    if depth < 0:
        raise ParameterError(f"depth must be >= 0, got {depth}")
    count = zipper.N**depth + 1
    if count > budget:
        raise BudgetError(f"{count} sample points exceed the memory budget of {budget} points")
    pos = zipper.vertices[[0, -1]].copy()
    par = np.array([0.0, 1.0])
    gap = 0.0
    w = zipper.weights
    starts = np.concatenate([[0.0], np.cumsum(w)[:-1]])
    for _ in range(depth):
        blocks_p, blocks_x = [], []
        for i, f in enumerate(zipper.maps):
            if zipper.signature[i]:
                blocks_p.append(f(pos[::-1]))
                blocks_x.append(starts[i] + w[i] * (1.0 - par[::-1]))
            else:
                blocks_p.append(f(pos))
                blocks_x.append(starts[i] + w[i] * par)
        for i in range(len(blocks_p) - 1):
            gap = max(gap, float(np.abs(blocks_p[i][-1] - blocks_p[i + 1][0]).max()))
        pos = np.concatenate([blocks_p[0]] + [b[1:] for b in blocks_p[1:]])
        par = np.concatenate([blocks_x[0]] + [b[1:] for b in blocks_x[1:]])
    par[-1] = 1.0
    pos.setflags(write=False)
    par.setflags(write=False)
    return CurveSample(depth, par, pos, gap)


# ---------------------------------------------------------------- JSON


def _need(obj, key, path):
    if not isinstance(obj, Mapping):
        raise SchemaError(path, "expected an object")
    if key not in obj:
        raise SchemaError(f"{path}.{key}", "missing field")
    return obj[key]


def _numbers(value, path, length=None):
    if not isinstance(value, Sequence) or isinstance(value, (str, bytes)):
        raise SchemaError(path, "expected an array of numbers")
    out = []
    for k, v in enumerate(value):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise SchemaError(f"{path}[{k}]", f"expected a number, got {v!r}")
        out.append(float(v))
    if length is not None and len(out) != length:
        raise SchemaError(path, f"expected {length} entries, got {len(out)}")
    return out


def _matrix(value, d, path):
    if isinstance(value, Sequence) and value and all(isinstance(r, Sequence) and not isinstance(r, str) for r in value):
        if len(value) != d:
            raise SchemaError(path, f"expected {d} rows, got {len(value)}")
        return [_numbers(r, f"{path}[{k}]", d) for k, r in enumerate(value)]
    flat = _numbers(value, path, d * d)
    return [flat[k * d : (k + 1) * d] for k in range(d)]


def zipper_from_dict(data: Mapping[str, Any], name=""):
    """Parse the JSON schema; errors carry the JSON path of the bad node."""
    root = "$"
    d = _need(data, "dimension", root)
    if isinstance(d, bool) or not isinstance(d, int) or d < 1:
        raise SchemaError(f"{root}.dimension", f"expected a positive integer, got {d!r}")
    maps_raw = _need(data, "maps", root)
    if not isinstance(maps_raw, Sequence) or isinstance(maps_raw, str) or not maps_raw:
        raise SchemaError(f"{root}.maps", "expected a nonempty array")
    maps = []
    for k, m in enumerate(maps_raw):
        p = f"{root}.maps[{k}]"
        mat = _matrix(_need(m, "matrix", p), d, f"{p}.matrix")
        tr = _numbers(_need(m, "translation", p), f"{p}.translation", d)
        maps.append(AffineMap(mat, tr))
    n = len(maps)
    verts_raw = _need(data, "vertices", root)
    if not isinstance(verts_raw, Sequence) or isinstance(verts_raw, str) or len(verts_raw) != n + 1:
        raise SchemaError(f"{root}.vertices", f"expected {n + 1} vertices")
    verts = [_numbers(v, f"{root}.vertices[{k}]", d) for k, v in enumerate(verts_raw)]
    sig_raw = data.get("signature", [0] * n)
    sig = _numbers(sig_raw, f"{root}.signature", n)
    for k, s in enumerate(sig):
        if s not in (0.0, 1.0):
            raise SchemaError(f"{root}.signature[{k}]", f"expected 0 or 1, got {s!r}")
    weights = _numbers(data.get("weights", [1.0 / n] * n), f"{root}.weights", n)
    for k, w in enumerate(weights):
        if not w > 0:
            raise SchemaError(f"{root}.weights[{k}]", f"expected a positive weight, got {w!r}")
    return Zipper(tuple(maps), verts, tuple(int(s) for s in sig), weights, name=name or str(data.get("name", "")))


def zipper_to_dict(zipper: Zipper):
    return {
        "dimension": zipper.dim,
        "maps": [
            {"matrix": m.matrix.reshape(-1).tolist(), "translation": m.translation.tolist()} for m in zipper.maps
        ],
        "vertices": zipper.vertices.tolist(),
        "signature": list(zipper.signature),
        "weights": zipper.weights.tolist(),
    }


def load_zipper(path):
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError("$", f"invalid JSON: {exc}") from exc
    return zipper_from_dict(data)


def save_zipper(zipper: Zipper, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(zipper_to_dict(zipper), fh, indent=2)
        fh.write("\n")
