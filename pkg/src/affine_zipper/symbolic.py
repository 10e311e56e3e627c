"""Words, eventually periodic symbol streams and their projections."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import BudgetError, ParameterError, ShapeError
from .products import DEFAULT_BUDGET

STREAM_RESOLUTION = 64


def format_word(word, n_symbols=10):
    if n_symbols > 10:
        return ",".join(str(int(s)) for s in word)
    return "".join(str(int(s)) for s in word)


def parse_word(text, n_symbols=None):
    text = text.strip()
    if not text:
        return ()
    if "," in text:
        word = tuple(int(s) for s in text.split(","))
    else:
        word = tuple(int(s) for s in text)
    if n_symbols is not None and any(not 0 <= s < n_symbols for s in word):
        raise ShapeError(f"word {text!r} has symbols outside 0..{n_symbols - 1}")
    return word


@dataclass(frozen=True, eq=False)
class SymbolStream:
    """prefix followed by period repeated forever."""

    prefix: tuple
    period: tuple

    def __post_init__(self):
        prefix = tuple(int(s) for s in self.prefix)
        period = tuple(int(s) for s in self.period)
        if not period:
            raise ShapeError("stream period must be nonempty")
        if any(s < 0 for s in prefix + period):
            raise ShapeError("symbols must be nonnegative")
        object.__setattr__(self, "prefix", prefix)
        object.__setattr__(self, "period", period)

    @classmethod
    def from_word(cls, word, tail=0):
        return cls(tuple(word), (tail,))

    @classmethod
    def parse(cls, text):
        """Inverse of ``str``: "prefix(period)", e.g. "01(1)"."""
        text = text.strip()
        if not text.endswith(")") or "(" not in text:
            raise ShapeError(f"stream {text!r} must look like prefix(period)")
        head, _, tail = text[:-1].partition("(")
        return cls(parse_word(head), parse_word(tail))

    def __str__(self):
        n = max(self.prefix + self.period) + 1
        return f"{format_word(self.prefix, n)}({format_word(self.period, n)})"

    def __repr__(self):
        return f"SymbolStream({str(self)!r})"

    def symbol(self, k):
        """k-th symbol, 0-based."""
        if k < len(self.prefix):
            return self.prefix[k]
        return self.period[(k - len(self.prefix)) % len(self.period)]

    def head(self, n):
        return tuple(self.symbol(k) for k in range(n))

    def shift(self, k=1):
        if k <= len(self.prefix):
            return SymbolStream(self.prefix[k:], self.period)
        r = (k - len(self.prefix)) % len(self.period)
        return SymbolStream((), self.period[r:] + self.period[:r])

    def canonical(self):
        period = self.period
        p = len(period)
        for q in range(1, p + 1):
            if p % q == 0 and period == period[:q] * (p // q):
                period = period[:q]
                break
        prefix = self.prefix
        while prefix and prefix[-1] == period[-1]:
            prefix = prefix[:-1]
            period = period[-1:] + period[:-1]
        return SymbolStream(prefix, period)

    def __eq__(self, other):
        if not isinstance(other, SymbolStream):
            return NotImplemented
        a, b = self.canonical(), other.canonical()
        return a.prefix == b.prefix and a.period == b.period

    def __hash__(self):
        c = self.canonical()
        return hash((c.prefix, c.period))

    def max_symbol(self):
        return max(self.prefix + self.period)


def as_stream(obj):
    if isinstance(obj, SymbolStream):
        return obj
    if isinstance(obj, str):
        return SymbolStream.parse(obj)
    raise TypeError(f"expected a SymbolStream or 'prefix(period)' string, got {obj!r}")


def _agree(i: SymbolStream, j: SymbolStream):
    """Number of equal leading symbols, math.inf if the streams coincide."""
    bound = max(len(i.prefix), len(j.prefix)) + math.lcm(len(i.period), len(j.period))
    for k in range(bound):
        if i.symbol(k) != j.symbol(k):
            return k
    return math.inf


def wedge(i, j):
    """Length of the longest common prefix of two distinct streams."""
    i, j = as_stream(i), as_stream(j)
    w = _agree(i, j)
    if w == math.inf:
        raise ParameterError("wedge undefined: the streams are identical")
    return w


def _tail_agree(stream, symbol):
    return _agree(stream, SymbolStream((), (symbol,)))


def vee(i, j, signature, cap=STREAM_RESOLUTION):
    """Adjacency depth of two distinct streams; infinite values are capped at ``cap``."""
    return vee_detail(i, j, signature, cap)[0]


def vee_detail(i, j, signature, cap=STREAM_RESOLUTION):
    """(value, capped) for ``vee``."""
    i, j = as_stream(i), as_stream(j)
    signature = tuple(signature)
    last = len(signature) - 1
    w = wedge(i, j)
    a, b = i.symbol(w), j.symbol(w)
    if a + 1 == b:
        lo, hi = i, j
    elif b + 1 == a:
        lo, hi = j, i
        a, b = b, a
    else:
        return 0, False
    slo, shi = lo.shift(w + 1), hi.shift(w + 1)
    # lower stream approaches its cylinder's right end, upper stream its left end;
    # a reversed piece swaps which tail symbol marks that end
    lo_tail = 0 if signature[a] else last
    hi_tail = last if signature[b] else 0
    v = min(_tail_agree(slo, lo_tail), _tail_agree(shi, hi_tail))
    if v == math.inf or v > cap:
        return cap, True
    return int(v), False


# ---------------------------------------------------------------- projections


def _exact_weights(weights):
    if hasattr(weights, "exact_weights"):
        return weights.exact_weights, weights.signature
    fr = [Fraction(float(w)).limit_denominator(1 << 32) for w in weights]
    total = sum(fr)
    return tuple(f / total for f in fr), None


def _param_map(weights, signature, s):
    """g_s as (slope, intercept) with exact rationals."""
    c = sum(weights[:s], Fraction(0))
    if signature[s]:
        return -weights[s], c + weights[s]
    return weights[s], c


def pi_exact(zipper, stream):
    """pi(stream) as an exact Fraction."""
    stream = as_stream(stream)
    weights = zipper.exact_weights
    sig = zipper.signature
    if stream.max_symbol() >= zipper.N:
        raise ShapeError(f"stream {stream} uses symbols outside 0..{zipper.N - 1}")
    a, b = Fraction(1), Fraction(0)
    for s in stream.period:
        sa, sb = _param_map(weights, sig, s)
        a, b = a * sa, a * sb + b
    x = b / (1 - a)
    for s in reversed(stream.prefix):
        sa, sb = _param_map(weights, sig, s)
        x = sa * x + sb
    return x


def pi_project(zipper, stream):
    """Parameter pi(i) in [0, 1] of a stream."""
    return float(pi_exact(zipper, stream))


def Pi_project(zipper, stream, tol=1e-12):
    """Curve point Pi(i); computed exactly from the periodic tail's fixed point."""
    if not tol > 0:
        raise ParameterError(f"tol must be positive, got {tol}")
    stream = as_stream(stream)
    if stream.max_symbol() >= zipper.N:
        raise ShapeError(f"stream {stream} uses symbols outside 0..{zipper.N - 1}")
    d = zipper.dim
    M, b = np.eye(d), np.zeros(d)
    for s in stream.period:
        b = b + M @ zipper.translations[s]
        M = M @ zipper.matrices[s]
    x = np.linalg.solve(np.eye(d) - M, b)
    for s in reversed(stream.prefix):
        x = zipper.maps[s](x)
    return x


def stream_weight(weights, stream, n):
    """lambda_{i|n} as a float."""
    w = np.asarray(weights if not hasattr(weights, "weights") else weights.weights, dtype=float)
    stream = as_stream(stream)
    return float(np.prod([w[stream.symbol(k)] for k in range(n)]))


@dataclass(frozen=True)
class Bracket:
    s: float
    depth: int
    wedge: int
    vee: int
    capped: bool


def distance_bracket(zipper, i, j, cap=STREAM_RESOLUTION):
    """s = lambda_{i|w+v} + lambda_{j|w+v}, comparable to |pi(i) - pi(j)|."""
    i, j = as_stream(i), as_stream(j)
    w = wedge(i, j)
    v, capped = vee_detail(i, j, zipper.signature, cap)
    n = w + v
    s = stream_weight(zipper, i, n) + stream_weight(zipper, j, n)
    return Bracket(s, n, w, v, capped)


# ---------------------------------------------------------------- partition


@dataclass(frozen=True)
class CylinderPartition:
    r: float
    words: tuple

    def __len__(self):
        return len(self.words)

    def __iter__(self):
        return iter(self.words)

    def weights(self, weights):
        w = np.asarray(weights, dtype=float)
        return np.array([np.prod(w[list(word)]) for word in self.words])


def xi_partition(weights, r, budget=DEFAULT_BUDGET):
    """Words with lambda_w <= r < lambda_(w without its last symbol), lexicographic."""
    w = np.asarray(weights, dtype=float).reshape(-1)
    if not 0 < r < 1:
        raise ParameterError(f"r must lie in (0, 1), got {r}")
    if np.any(w <= 0) or np.any(w >= 1):
        raise ParameterError("weights must lie strictly between 0 and 1")
    if 1.0 / (r * w.min()) > budget:
        raise BudgetError(f"partition at r={r} may exceed the budget of {budget} cylinders")
    logw = np.log(w)
    log_r = math.log(r) + 1e-12
    out = []
    stack = [((), 0.0)]
    while stack:
        word, lw = stack.pop()
        for s in reversed(range(w.shape[0])):
            nw = lw + logw[s]
            if nw <= log_r:
                out.append((word + (s,), nw))
            else:
                stack.append((word + (s,), nw))
    # depth-first with reversed pushes does not interleave finished words in order
    out.sort(key=lambda t: t[0])
    return CylinderPartition(r, tuple(word for word, _ in out))
