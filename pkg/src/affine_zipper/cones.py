"""Projective cones, positivity after conjugation and splitting diagnostics.

In the plane a projective cone is an arc of the projective line, stored as a
start angle in [0, pi) and a length in (0, pi). All arc arithmetic is done on
the circle R / pi Z.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import nnls

from .errors import ParameterError, ShapeError, UnreliableDirectionError
from .products import level_products, matrix_norm, random_word_products, singular_values
from .zipper import Zipper, sample_curve

PI = math.pi
_UNRELIABLE = 1e-9


def _wrap(theta):
    return np.mod(theta, PI)


def direction_angle(v):
    """Angle in [0, pi) of the line spanned by a planar vector."""
    v = np.asarray(v, dtype=float)
    return float(_wrap(math.atan2(v[1], v[0])))


def image_angles(matrix, theta):
    theta = np.asarray(theta, dtype=float)
    x = matrix[0, 0] * np.cos(theta) + matrix[0, 1] * np.sin(theta)
    y = matrix[1, 0] * np.cos(theta) + matrix[1, 1] * np.sin(theta)
    return _wrap(np.arctan2(y, x))


@dataclass(frozen=True)
class ProjectiveCone:
    """Arc [lo, lo + length] of the projective line (d = 2) or generator rays (d >= 3)."""

    lo: float = 0.0
    length: float = 0.0
    generators: np.ndarray | None = None
    convex: bool = True

    def __post_init__(self):
        if self.generators is None:
            if not 0 < self.length < PI:
                raise ShapeError(f"cone length must lie in (0, pi), got {self.length}")
            object.__setattr__(self, "lo", float(_wrap(self.lo)))
        else:
            g = np.array(self.generators, dtype=float)
            if g.ndim != 2 or g.shape[1] < g.shape[0]:
                raise ShapeError("generators must be a (d, k) array with k >= d")
            if np.linalg.matrix_rank(g) < g.shape[0]:
                raise ShapeError("generators do not span a cone with nonempty interior")
            g.setflags(write=False)
            object.__setattr__(self, "generators", g)

    @classmethod
    def from_angles(cls, lo, hi):
        return cls(lo, float(_wrap(hi - lo)) or PI)

    @classmethod
    def from_vectors(cls, u, v):
        """Smaller arc between the lines through u and v."""
        a, b = direction_angle(u), direction_angle(v)
        gap = float(_wrap(b - a))
        if gap <= PI / 2:
            return cls(a, gap)
        return cls(b, PI - gap)

    @classmethod
    def positive_quadrant(cls):
        return cls(0.0, PI / 2)

    @property
    def hi(self):
        return self.lo + self.length

    @property
    def dim(self):
        return 2 if self.generators is None else self.generators.shape[0]

    def offset(self, theta):
        """Position of theta measured from lo along the arc, in [0, pi)."""
        return _wrap(np.asarray(theta, dtype=float) - self.lo)

    def contains(self, theta, clearance=0.0):
        off = self.offset(theta)
        return (off >= clearance) & (off <= self.length - clearance)

    def clearance(self, theta):
        """Signed distance of theta to the arc boundary (negative outside)."""
        off = self.offset(theta)
        inside = np.minimum(off, self.length - off)
        outside = -np.minimum(off - self.length, PI - off)
        return np.where(off <= self.length, inside, outside)

    def inflate(self, eta):
        return ProjectiveCone(self.lo - eta, self.length + 2 * eta)

    def sample(self, step):
        k = max(2, int(math.ceil(self.length / step)) + 1)
        return self.lo + np.linspace(0.0, self.length, k)

    def to_dict(self):
        if self.generators is not None:
            return {"generators": self.generators.tolist(), "convex": self.convex}
        return {"lo": self.lo, "hi": self.hi, "length": self.length}


def image_arc(matrix, cone: ProjectiveCone):
    """Image of an arc under an invertible 2 x 2 matrix, as (start, length)."""
    a, b, m = image_angles(matrix, [cone.lo, cone.hi, cone.lo + 0.5 * cone.length])
    forward = float(_wrap(b - a))
    if _wrap(m - a) <= forward:
        return float(a), forward
    return float(b), float(_wrap(a - b))


def arc_hull(arcs):
    """Shortest arc containing all given (start, length) arcs; None if they cover the line."""
    arcs = sorted((float(_wrap(s)), float(l)) for s, l in arcs)
    # merge overlapping arcs around the circle
    merged = []
    for s, l in arcs:
        if merged and s <= merged[-1][0] + merged[-1][1] + 1e-15:
            ms, ml = merged[-1]
            merged[-1] = (ms, max(ml, s + l - ms))
        else:
            merged.append((s, l))
    if len(merged) > 1:
        fs, fl = merged[0]
        ls, ll = merged[-1]
        if ls + ll >= fs + PI - 1e-15:
            merged[0] = (ls, max(ll, fs + PI + fl - ls))
            merged.pop()
    if len(merged) == 1:
        s, l = merged[0]
        return None if l >= PI else (s, l)
    best_gap, best_k = -1.0, 0
    for k, (s, l) in enumerate(merged):
        ns = merged[(k + 1) % len(merged)][0] + (PI if k == len(merged) - 1 else 0.0)
        gap = ns - (s + l)
        if gap > best_gap:
            best_gap, best_k = gap, k
    start = merged[(best_k + 1) % len(merged)][0]
    return start, PI - best_gap


@dataclass
class ConeSearch:
    found: bool
    cone: ProjectiveCone | None
    clearance: float
    iterations: int
    message: str = ""


def _invariance_clearance(matrices, cone):
    worst = math.inf
    for a in matrices:
        s, l = image_arc(a, cone)
        ends = np.array([s, s + l])
        c = cone.clearance(ends)
        mid = cone.clearance(s + 0.5 * l)
        if mid < 0:
            return -math.inf
        worst = min(worst, float(c.min()))
    return worst


def _dominant_directions(matrices):
    out = []
    for a in matrices:
        vals, vecs = np.linalg.eig(a)
        if np.all(np.isreal(vals)):
            k = int(np.argmax(np.abs(vals)))
            out.append(direction_angle(np.real(vecs[:, k])))
    return out


def _seed_arcs(matrices):
    """Candidate starting arcs: every arc spanned by the dominant eigendirections."""
    dirs = sorted(set(round(d, 15) for d in _dominant_directions(matrices)))
    if not dirs:
        return [(0.0, 0.0)]
    seeds = []
    k = len(dirs)
    for j in range(k):
        start = dirs[(j + 1) % k]
        length = float(_wrap(dirs[j] - start)) if k > 1 else 0.0
        seeds.append((start, length))
    seeds.sort(key=lambda a: a[1])
    return seeds


def invariant_cone_2d(matrices, iterations=200, margin=1e-3, trial: ProjectiveCone | None = None):
    """Grow an arc until it is forward invariant, then inflate for strict clearance >= margin."""
    mats = np.asarray(matrices, dtype=float)
    if mats.ndim != 3 or mats.shape[1:] != (2, 2):
        raise ShapeError("invariant_cone_2d needs 2 x 2 matrices")
    seeds = [(trial.lo, trial.length)] if trial is not None else _seed_arcs(mats)
    total = 0
    for seed in seeds:
        res = _grow_cone(mats, seed, iterations, margin)
        total += res.iterations
        if res.found:
            return res
    return ConeSearch(False, None, -math.inf, total, "no invariant cone found at this margin")


def _grow_cone(mats, arc, iterations, margin):
    limit = PI - margin
    fail = ConeSearch(False, None, -math.inf, 0)
    it = 0
    for it in range(1, iterations + 1):
        cone = ProjectiveCone(arc[0], max(arc[1], 1e-12))
        images = [image_arc(a, cone) for a in mats]
        hull = arc_hull([arc] + images)
        if hull is None or hull[1] >= limit:
            fail.iterations = it
            return fail
        grown = hull[1] - arc[1]
        arc = hull
        if grown <= 1e-3 * margin:
            break
    eta = margin
    while arc[1] + 2 * eta < limit:
        cone = ProjectiveCone(arc[0], max(arc[1], 1e-12)).inflate(eta)
        clr = _invariance_clearance(mats, cone)
        if clr >= margin:
            return ConeSearch(True, cone, clr, it, "")
        eta *= 2.0
    fail.iterations = it
    return fail


@dataclass(frozen=True)
class PositivityReport:
    passed: bool
    min_entry: float

    def __bool__(self):
        return self.passed


def check_positivity(matrices):
    m = np.asarray(matrices, dtype=float)
    low = float(m.min())
    return PositivityReport(low > 0, low)


def conjugate(matrices, transform):
    d = np.asarray(transform, dtype=float)
    dinv = np.linalg.inv(d)
    return np.einsum("ij,sjk,kl->sil", dinv, np.asarray(matrices, dtype=float), d)


def conjugate_zipper(zipper: Zipper, transform):
    """The same curve in coordinates y with x = D y."""
    d = np.asarray(transform, dtype=float)
    dinv = np.linalg.inv(d)
    mats = conjugate(zipper.matrices, d)
    trans = zipper.translations @ dinv.T
    verts = zipper.vertices @ dinv.T
    from .zipper import make_zipper

    return make_zipper(mats, trans, verts, zipper.signature, zipper.weights, name=zipper.name, notes=zipper.notes)


def _family_transform(family, param):
    if family == "tilde":
        return np.array([[1.0, param], [param, 1.0]])
    if family == "hat":
        return np.array([[1.0, -param], [-param, 1.0]])
    if family == "rotation":
        c, s = math.cos(param), math.sin(param)
        return np.array([[c, -s], [s, c]])
    raise ParameterError(f"unknown family {family!r}")


_FAMILY_GRIDS = {
    "hat": np.arange(1, 1000) / 1000.0,
    "tilde": np.arange(1, 1000) / 1000.0,
    "rotation": np.arange(0, 360) * PI / 360.0,
}


@dataclass
class ConjugationResult:
    found: bool
    family: str | None
    param: float | None
    transform: np.ndarray | None
    matrices: np.ndarray | None
    min_entry: float
    l1_residual: float | None = None


def entrywise_l1(matrices):
    return np.abs(np.asarray(matrices, dtype=float)).sum(axis=(-2, -1))


def conjugation_search(matrices, families=("hat", "tilde", "rotation"), grids=None):
    """Search the families in order for D with every D^-1 A_i D strictly positive.

    Within the first family that succeeds, the member with the largest minimum
    entry is returned, which gives the widest invariance margin for the quadrant.
    """
    mats = np.asarray(matrices, dtype=float)
    if mats.shape[1:] != (2, 2):
        raise ShapeError("conjugation_search needs 2 x 2 matrices")
    grids = dict(_FAMILY_GRIDS, **(grids or {}))
    best = -math.inf
    for fam in families:
        params = np.asarray(grids[fam], dtype=float)
        lows = np.array([conjugate(mats, _family_transform(fam, float(p))).min() for p in params])
        k = int(np.argmax(lows))
        best = max(best, float(lows[k]))
        if lows[k] > 0:
            d = _family_transform(fam, float(params[k]))
            conj = conjugate(mats, d)
            res = None
            if fam != "rotation":
                res = float(np.abs(entrywise_l1(conj) - entrywise_l1(mats)).max())
            return ConjugationResult(True, fam, float(params[k]), d, conj, float(lows[k]), res)
    return ConjugationResult(False, None, None, None, None, best)


# ---------------------------------------------------------------- Assumption A


@dataclass
class ConditionResult:
    condition: str
    passed: bool
    margin: float
    witness: object = None

    def to_dict(self):
        w = self.witness
        if isinstance(w, np.ndarray):
            w = w.tolist()
        return {"condition": self.condition, "pass": self.passed, "margin": self.margin, "witness": w}


@dataclass
class AssumptionAReport:
    conditions: list = field(default_factory=list)

    @property
    def passed(self):
        return all(c.passed for c in self.conditions)

    def __getitem__(self, name):
        return next(c for c in self.conditions if c.condition == name)

    def to_dict(self):
        return {"pass": self.passed, "conditions": [c.to_dict() for c in self.conditions]}


def check_assumption_a(zipper: Zipper, cone: ProjectiveCone, samples=None, margin=1e-3):
    """Invariance with clearance, positivity of <A v, v> on the cone, chord direction inside."""
    if cone.generators is not None:
        return _check_assumption_a_poly(zipper, cone, samples or 2000, margin)
    if zipper.dim != 2:
        raise ShapeError("an arc cone needs a planar zipper")
    mats = zipper.matrices
    clr = _invariance_clearance(mats, cone)
    bad = None
    if clr < margin:
        for i, a in enumerate(mats):
            if _invariance_clearance(a[None], cone) < margin:
                bad = i
                break
    c1 = ConditionResult("invariance", clr >= margin, clr, None if bad is None else {"map": bad})

    step = margin / 8.0
    theta = cone.sample(step)
    if samples:
        theta = np.union1d(theta, cone.sample(cone.length / samples))
    h = float(np.max(np.diff(theta))) if theta.shape[0] > 1 else cone.length
    v = np.stack([np.cos(theta), np.sin(theta)])
    worst, witness = math.inf, None
    for i, a in enumerate(mats):
        g = np.einsum("in,ij,jn->n", v, a, v)
        k = int(np.argmin(g))
        # theta -> <A v, v> is Lipschitz with constant 2||A||; samples are h apart
        cert = float(g[k]) - float(matrix_norm(a[None])[0]) * h
        if cert < worst:
            worst, witness = cert, {"map": i, "theta": float(theta[k]), "value": float(g[k])}
    c2 = ConditionResult("inner_product", worst > 0, worst, witness if worst <= 0 else None)

    chord = zipper.vertices[-1] - zipper.vertices[0]
    ang = direction_angle(chord)
    cc = float(cone.clearance(ang))
    c3 = ConditionResult("chord_direction", cc >= margin, cc, None if cc >= margin else {"theta": ang})
    return AssumptionAReport([c1, c2, c3])


def _strict_combination(gens, v):
    coef, res = nnls(gens, v)
    scale = max(1.0, float(np.linalg.norm(v)))
    return coef, res / scale


def _check_assumption_a_poly(zipper, cone, samples, margin):
    gens = cone.generators
    worst, witness = math.inf, None
    for i, a in enumerate(zipper.matrices):
        for k in range(gens.shape[1]):
            coef, res = _strict_combination(gens, a @ gens[:, k])
            score = float(coef.min()) if res < 1e-10 else -math.inf
            if score < worst:
                worst, witness = score, {"map": i, "generator": k}
    c1 = ConditionResult("invariance", worst > margin, worst, None if worst > margin else witness)
    rng = np.random.default_rng(0)
    combos = np.concatenate([np.eye(gens.shape[1]), rng.random((samples, gens.shape[1]))])
    vs = combos @ gens.T
    vs /= np.linalg.norm(vs, axis=1, keepdims=True)
    g_min = math.inf
    for a in zipper.matrices:
        g_min = min(g_min, float(np.einsum("ni,ij,nj->n", vs, a, vs).min()))
    c2 = ConditionResult("inner_product", g_min > 0, g_min)
    coef, res = _strict_combination(gens, zipper.vertices[-1] - zipper.vertices[0])
    score = float(coef.min()) if res < 1e-10 else -math.inf
    c3 = ConditionResult("chord_direction", score > margin, score)
    return AssumptionAReport([c1, c2, c3])


# ---------------------------------------------------------------- splitting


@dataclass
class SplittingDiagnostic:
    depths: np.ndarray
    ratios: np.ndarray
    decay_rate: float
    constant: float
    residual: float
    exhaustive: np.ndarray
    no_splitting: bool


def _max_ratio_level(matrices, n, sample_count, rng):
    n_maps = matrices.shape[0]
    if n_maps**n <= sample_count:
        mats, _ = level_products(matrices, n)
        exhaustive = True
    else:
        _, mats, _ = random_word_products(matrices, n, sample_count, rng)
        exhaustive = False
    s1, s2 = singular_values(mats)
    return float(np.max(s2 / s1)), exhaustive


def splitting_diagnostic(matrices, max_depth=14, sample_count=1 << 14, seed=0, min_depth=1):
    """Max alpha_2 / alpha_1 of word products per depth and a fitted geometric decay rate."""
    mats = np.asarray(matrices, dtype=float)
    if mats.shape[1] < 2:
        raise ShapeError("splitting needs d >= 2")
    rng = np.random.default_rng(seed)
    depths = np.arange(min_depth, max_depth + 1)
    ratios, exh = [], []
    for n in depths:
        r, e = _max_ratio_level(mats, int(n), sample_count, rng)
        ratios.append(min(r, 1.0))
        exh.append(e)
    ratios = np.array(ratios)
    y = np.log(ratios)
    slope, intercept = np.polyfit(depths.astype(float), y, 1)
    fit = slope * depths + intercept
    resid = float(np.sqrt(np.mean((y - fit) ** 2)))
    tau = float(math.exp(slope))
    return SplittingDiagnostic(depths, ratios, tau, float(math.exp(intercept)), resid, np.array(exh), tau >= 0.999)


# ---------------------------------------------------------------- stable directions


@dataclass
class StableDirections:
    depth: int
    angles: np.ndarray
    reliable: np.ndarray

    @property
    def all_reliable(self):
        return bool(self.reliable.all())


def least_right_singular_angle(mats):
    """Angle of the right singular vector of the smallest singular value (closed form)."""
    mats = np.asarray(mats, dtype=float)
    a, b = mats[..., 0, 0], mats[..., 0, 1]
    c, d = mats[..., 1, 0], mats[..., 1, 1]
    p = a * a + c * c
    r = b * b + d * d
    q = a * b + c * d
    top = 0.5 * np.arctan2(2 * q, p - r)
    return _wrap(top + PI / 2)


def stable_directions(matrices, depth):
    mats = np.asarray(matrices, dtype=float)
    if mats.shape[1:] != (2, 2):
        raise ShapeError("stable directions are implemented for d = 2")
    prods, _ = level_products(mats, depth)
    s1, s2 = singular_values(prods)
    reliable = (s1 - s2) > _UNRELIABLE * s1
    return StableDirections(depth, least_right_singular_angle(prods), reliable)


def angular_gap(angles, cone: ProjectiveCone):
    """Minimum angular distance from a set of directions to the cone (0 if any is inside)."""
    c = cone.clearance(np.asarray(angles, dtype=float))
    return float(max(0.0, -float(np.max(c))))


# ---------------------------------------------------------------- well ordered


@dataclass
class WellOrderedReport:
    passed: bool
    level: int
    directions_checked: int
    witness: tuple | None
    witness_angle: float | None
    full_sweep: bool
    label: str = "evidence"


def _monotone_witness(p, tol):
    """None if p is monotone (up to tol); else the first violating index triple."""
    diff = np.diff(p)
    sign = 0
    start = None
    for m, dv in enumerate(diff):
        s = 1 if dv > tol else (-1 if dv < -tol else 0)
        if s == 0:
            continue
        if sign == 0:
            sign = s
        elif s != sign:
            return (start, m, m + 1)
        start = m
    return None


def well_ordered_check(zipper: Zipper, level=0, delta=0.05, direction_depth=10, tol=1e-12):
    """Finite-level evidence that projections of the vertex set are ordered near stable directions."""
    if zipper.dim != 2:
        raise ShapeError("well-ordered check is implemented for d = 2")
    dirs = stable_directions(zipper.matrices, direction_depth)
    step = delta / 4.0
    if not dirs.reliable.any():
        angles = np.arange(0.0, PI, step)
        sweep = True
    elif not dirs.all_reliable:
        bad = int((~dirs.reliable).sum())
        raise UnreliableDirectionError(
            f"{bad} of {dirs.reliable.size} products at depth {direction_depth} are near-conformal"
        )
    else:
        base = np.unique(np.round(dirs.angles, 12))
        offsets = np.arange(-4, 5) * step
        angles = np.unique(np.round(_wrap((base[:, None] + offsets[None, :]).ravel()), 12))
        sweep = False
    pts = sample_curve(zipper, level + 1).positions
    scale = max(1.0, float(np.abs(pts).max()))
    for phi in angles:
        normal = np.array([-math.sin(phi), math.cos(phi)])
        w = _monotone_witness(pts @ normal, tol * scale)
        if w is not None:
            return WellOrderedReport(False, level, len(angles), w, float(phi), sweep)
    return WellOrderedReport(True, level, len(angles), None, None, sweep)
