"""Pointwise Hoelder exponents: symbolic ratios, direct metric sampling, Gibbs samplers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import ParameterError
from .products import _level_log_weights, as_system, level_products, matrix_norm
from .symbolic import SymbolStream, as_stream
from .zipper import Zipper, _coerce_parameter, _evaluate, descend

_LEAF_TOL = 1e-13


def symbolic_exponent(zipper, stream, depth):
    """log||A_{i|n}|| / log lambda_{i|n} for n = 1..depth."""
    if depth < 1:
        raise ParameterError(f"depth must be >= 1, got {depth}")
    system = as_system(zipper)
    stream = as_stream(stream)
    mats, logw = system.matrices, system.log_weights
    d = system.dim
    M = np.eye(d)
    log_scale = 0.0
    log_lam = 0.0
    out = np.empty(depth)
    for n in range(depth):
        s = stream.symbol(n)
        M = M @ mats[s]
        m = np.abs(M).max()
        M /= m
        log_scale += math.log(m)
        log_lam += logw[s]
        out[n] = (log_scale + math.log(float(matrix_norm(M[None])[0]))) / log_lam
    return out


# ---------------------------------------------------------------- exact differences


def _offset(zipper: Zipper, u: Fraction, k: int, tol):
    """v(u) - z_k for k in {0, N}, accurate even when u is close to the matching end."""
    n = zipper.N
    c = zipper.exact_breaks
    end_piece = 0 if k == 0 else n - 1
    M = np.eye(zipper.dim)
    z = zipper.vertices
    for _ in range(10_000):
        if u in c:
            return M @ (z[c.index(u)] - z[k])
        i, nu = descend(zipper, u)
        if i != end_piece:
            pos, _ = _evaluate(zipper, u, tol)
            return M @ (pos - z[k])
        # z_k = f_i(z_k') for the endpoint piece
        if k == 0:
            k = 0 if zipper.signature[0] == 0 else n
        else:
            k = n if zipper.signature[n - 1] == 0 else 0
        M = M @ zipper.matrices[i]
        u = nu
    raise ParameterError("offset recursion did not terminate")


def curve_difference(zipper: Zipper, x, y, tol=_LEAF_TOL):
    """v(x) - v(y) with accuracy relative to the size of the difference."""
    x = _coerce_parameter(x)
    y = _coerce_parameter(y)
    d = zipper.dim
    M = np.eye(d)
    if x == y:
        return np.zeros(d)
    c = zipper.exact_breaks
    z = zipper.vertices
    while True:
        if x in c and y in c:
            return M @ (z[c.index(x)] - z[c.index(y)])
        a, xn = descend(zipper, x)
        b, yn = descend(zipper, y)
        if a != b:
            break
        M = M @ zipper.matrices[a]
        x, y = xn, yn
    if abs(a - b) == 1:
        lo_sym, hi_sym = (a, b) if a < b else (b, a)
        lo_u, hi_u = (xn, yn) if a < b else (yn, xn)
        n = zipper.N
        k_lo = 0 if zipper.signature[lo_sym] else n
        k_hi = n if zipper.signature[hi_sym] else 0
        # both pieces meet at z_{lo_sym + 1}
        dlo = zipper.matrices[lo_sym] @ _offset(zipper, lo_u, k_lo, tol)
        dhi = zipper.matrices[hi_sym] @ _offset(zipper, hi_u, k_hi, tol)
        diff = dlo - dhi if a < b else dhi - dlo
        return M @ diff
    px, _ = _evaluate(zipper, x, tol)
    py, _ = _evaluate(zipper, y, tol)
    return M @ (px - py)


# ---------------------------------------------------------------- direct estimator


@dataclass
class HolderEstimate:
    parameter: float
    symbolic_sequence: np.ndarray | None
    direct_min: float
    direct_regression: float
    scales_used: list
    per_scale: np.ndarray = field(repr=False, default=None)
    one_sided: bool = False

    @property
    def symbolic_final(self):
        if self.symbolic_sequence is None or len(self.symbolic_sequence) == 0:
            return math.nan
        return float(self.symbolic_sequence[-1])


def direct_exponent(zipper: Zipper, x, scale_count=16, samples_per_scale=8, seed=0, first_scale=4):
    """Liminf proxy and regression slope of log|v(x) - v(y)| against log|x - y|."""
    xf = _coerce_parameter(x)
    if xf <= 0 or xf >= 1:
        one_sided = True
    else:
        one_sided = False
    rng = np.random.default_rng(seed)
    ks = list(range(first_scale, first_scale + scale_count))
    per_scale = np.full(len(ks), np.inf)
    log_h, log_d = [], []
    for j, k in enumerate(ks):
        rho = Fraction(1, 2**k)
        offsets = [rho, -rho]
        for _ in range(samples_per_scale):
            u = 0.5 + 0.5 * rng.random()
            sign = 1 if rng.random() < 0.5 else -1
            offsets.append(sign * rho * Fraction(u))
        for h in offsets:
            y = xf + h
            if y < 0 or y > 1:
                y = xf - h
                one_sided = True
                if y < 0 or y > 1:
                    continue
            dist = float(np.linalg.norm(curve_difference(zipper, xf, y)))
            if dist <= 0:
                continue
            lh = math.log(abs(float(h)))
            ld = math.log(dist)
            log_h.append(lh)
            log_d.append(ld)
            per_scale[j] = min(per_scale[j], ld / lh)
    if not log_h:
        raise ParameterError(f"no admissible samples around x={float(x)}")
    deep = per_scale[len(ks) // 2 :]
    deep = deep[np.isfinite(deep)]
    slope = float(np.polyfit(np.array(log_h), np.array(log_d), 1)[0]) if len(log_h) > 1 else math.nan
    return HolderEstimate(float(x), None, float(deep.min()), slope, ks, per_scale, one_sided)


def holder_estimate(zipper: Zipper, x, depth=20, **kwargs):
    """direct_exponent plus the symbolic ratio sequence of the coding of x."""
    from .zipper import coding

    est = direct_exponent(zipper, x, **kwargs)
    word = coding(zipper, x, depth)
    est.symbolic_sequence = symbolic_exponent(zipper, SymbolStream(tuple(word), (0,)), depth)
    return est


# ---------------------------------------------------------------- Gibbs sampling

_EXACT_LIMIT = 1 << 20
_LOOKAHEAD = 10


def gibbs_words(system, curve, t, depth, count, seed=0, lookahead=_LOOKAHEAD):
    """``count`` words of length ``depth`` drawn with probability ~ ||A_w||^t lambda_w^(-P(t)).

    Exact when N**depth <= 2**20; otherwise each symbol is drawn from its
    conditional law given the prefix, with the future truncated to ``lookahead`` symbols.
    """
    system = as_system(system)
    rng = np.random.default_rng(seed)
    n_maps = system.n_maps
    p_t = curve.P(t)
    if n_maps**depth <= _EXACT_LIMIT:
        mats, logscale = level_products(system.matrices, depth)
        lw = _level_log_weights(system.log_weights, depth)
        logp = t * (logscale + np.log(matrix_norm(mats))) - p_t * lw
        prob = np.exp(logp - logp.max())
        prob /= prob.sum()
        idx = rng.choice(prob.shape[0], size=count, p=prob)
        return _decode(idx, n_maps, depth)
    return _sequential(system, t, p_t, depth, count, rng, lookahead)


def _decode(idx, n_maps, depth):
    words = np.empty((idx.shape[0], depth), dtype=np.int64)
    rem = idx.copy()
    for k in range(depth - 1, -1, -1):
        words[:, k] = rem % n_maps
        rem //= n_maps
    return words


def _sequential(system, t, p_t, depth, count, rng, lookahead):
    n_maps, d = system.n_maps, system.dim
    tails = {}
    words = np.empty((count, depth), dtype=np.int64)
    P = np.broadcast_to(np.eye(d), (count, d, d)).copy()
    for k in range(depth):
        L = min(lookahead, depth - k)
        if L not in tails:
            q, qs = level_products(system.matrices, L)
            qlw = _level_log_weights(system.log_weights, L)
            tails[L] = (q, qs, qlw)
        q, qs, qlw = tails[L]
        prod = np.einsum("sij,ujk->suik", P, q)
        lognorm = np.log(matrix_norm(prod.reshape(-1, d, d))).reshape(count, -1) + qs[None, :]
        logp = t * lognorm - p_t * qlw[None, :]
        logp = logp.reshape(count, n_maps, -1)
        m = logp.max(axis=(1, 2), keepdims=True)
        mass = np.exp(logp - m).sum(axis=2)
        mass /= mass.sum(axis=1, keepdims=True)
        u = rng.random(count)
        sym = np.minimum((u[:, None] > np.cumsum(mass, axis=1)).sum(axis=1), n_maps - 1)
        words[:, k] = sym
        P = np.einsum("sij,sjk->sik", P, system.matrices[sym])
        P /= np.abs(P).max(axis=(1, 2), keepdims=True)
    return words


def gibbs_sampler(system, curve, t, depth, count, seed=0, lookahead=_LOOKAHEAD):
    """Gibbs-distributed words returned as streams with an all-zero tail."""
    words = gibbs_words(system, curve, t, depth, count, seed, lookahead)
    return [SymbolStream(tuple(int(s) for s in w), (0,)) for w in words]


def word_exponents(system, words):
    """log||A_w|| / log lambda_w for each row of an integer word array."""
    system = as_system(system)
    words = np.asarray(words)
    count, depth = words.shape
    d = system.dim
    P = np.broadcast_to(np.eye(d), (count, d, d)).copy()
    log_scale = np.zeros(count)
    for k in range(depth):
        P = np.einsum("sij,sjk->sik", P, system.matrices[words[:, k]])
        m = np.abs(P).max(axis=(1, 2))
        P /= m[:, None, None]
        log_scale += np.log(m)
    log_norm = log_scale + np.log(matrix_norm(P))
    log_lam = system.log_weights[words].sum(axis=1)
    return log_norm / log_lam
