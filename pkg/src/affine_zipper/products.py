"""Matrix systems and prefix-tree enumeration of word products.

Every word of length n over N symbols is visited in lexicographic order
(first symbol most significant). Products are built level by level so that
each tree node costs exactly one d x d multiply; for deep words the tree is
split into a prefix level and a suffix level and leaves are formed as
prefix @ suffix blocks. Products are renormalised after every level and the
scale is carried separately in log form, so nothing under- or overflows.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetError, ParameterError, ShapeError

DEFAULT_BUDGET = 1 << 24
_SUFFIX_DEPTH = 14


def thread_count():
    """Worker threads allowed by ``ZIPPER_THREADS`` (0 or unset means auto)."""
    raw = os.environ.get("ZIPPER_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise ParameterError(f"ZIPPER_THREADS must be an integer, got {raw!r}")
    if n <= 0:
        n = os.cpu_count() or 1
    return n


@dataclass(frozen=True, eq=False)
class MatrixSystem:
    """N invertible d x d matrices with a probability vector of weights."""

    matrices: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        mats = np.array(self.matrices, dtype=float)
        w = np.array(self.weights, dtype=float).reshape(-1)
        if mats.ndim != 3 or mats.shape[1] != mats.shape[2]:
            raise ShapeError(f"matrices must have shape (N, d, d), got {mats.shape}")
        if mats.shape[0] != w.shape[0]:
            raise ShapeError(f"{mats.shape[0]} matrices but {w.shape[0]} weights")
        if np.any(w <= 0):
            raise ShapeError("weights must be strictly positive")
        if abs(w.sum() - 1.0) > 1e-9:
            raise ShapeError(f"weights must sum to 1, got {w.sum()!r}")
        mats.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "matrices", mats)
        object.__setattr__(self, "weights", w)

    @property
    def n_maps(self):
        return self.matrices.shape[0]

    @property
    def dim(self):
        return self.matrices.shape[1]

    @property
    def log_weights(self):
        return np.log(self.weights)

    @property
    def equal_weights(self):
        return bool(np.all(self.weights == self.weights[0]))


def as_system(obj):
    """Accept a MatrixSystem or anything exposing ``.system`` (e.g. a Zipper)."""
    if isinstance(obj, MatrixSystem):
        return obj
    system = getattr(obj, "system", None)
    if isinstance(system, MatrixSystem):
        return system
    raise TypeError(f"expected a MatrixSystem or Zipper, got {type(obj).__name__}")


def singular_values(mats):
    """Largest and smallest singular values of a stack of square matrices.

    1 x 1 and 2 x 2 stacks use closed forms; larger ones fall back to batched SVD.
    """
    mats = np.asarray(mats, dtype=float)
    if mats.shape[-1] == 1:
        s = np.abs(mats[..., 0, 0])
        return s, s
    if mats.shape[-1] == 2:
        a, b = mats[..., 0, 0], mats[..., 0, 1]
        c, d = mats[..., 1, 0], mats[..., 1, 1]
        s = a * a + b * b + c * c + d * d
        det = np.abs(a * d - b * c)
        disc = np.sqrt(np.maximum((s - 2 * det) * (s + 2 * det), 0.0))
        s1 = np.sqrt(0.5 * (s + disc))
        with np.errstate(divide="ignore", invalid="ignore"):
            s2 = np.where(s1 > 0, det / s1, 0.0)
        return s1, s2
    sv = np.linalg.svd(mats, compute_uv=False)
    return sv[..., 0], sv[..., -1]


def matrix_norm(mats, norm="2"):
    """Operator norm of each matrix in a stack. ``norm`` is "2", "1" or "inf"."""
    mats = np.asarray(mats, dtype=float)
    if norm == "2":
        return singular_values(mats)[0]
    if norm == "1":
        return np.abs(mats).sum(axis=-2).max(axis=-1)
    if norm == "inf":
        return np.abs(mats).sum(axis=-1).max(axis=-1)
    raise ParameterError(f"unknown norm {norm!r}; use '2', '1' or 'inf'")


def _normalise(mats, logscale):
    scale = np.abs(mats).max(axis=(-2, -1))
    scale = np.where(scale > 0, scale, 1.0)
    return mats / scale[:, None, None], logscale + np.log(scale)


def level_products(matrices, n):
    """All N**n products in lexicographic order as (normalised, log_scale)."""
    matrices = np.asarray(matrices, dtype=float)
    n_maps, d = matrices.shape[0], matrices.shape[1]
    mats = np.eye(d)[None, :, :]
    logscale = np.zeros(1)
    for _ in range(n):
        mats = np.einsum("mij,kjl->mkil", mats, matrices).reshape(-1, d, d)
        logscale = np.repeat(logscale, n_maps)
        mats, logscale = _normalise(mats, logscale)
    return mats, logscale


def _level_counts(n_maps, n):
    """Symbol-count vectors for all words of length n, lexicographic order."""
    counts = np.zeros((1, n_maps), dtype=np.int64)
    eye = np.eye(n_maps, dtype=np.int64)
    for _ in range(n):
        counts = (counts[:, None, :] + eye[None, :, :]).reshape(-1, n_maps)
    return counts


@dataclass(frozen=True, eq=False)
class WordTable:
    """log-norms and log-weights of all words of one length.

    ``log_norm`` and ``log_weight`` are in lexicographic word order. For root
    finding the words are also compressed: words with equal weight product
    form a group, and equal log-norms inside a group are merged with their
    multiplicity, so a pressure solve touches each distinct value once.
    """

    depth: int
    log_norm: np.ndarray
    log_weight: np.ndarray
    values: np.ndarray = field(repr=False)
    log_mult: np.ndarray = field(repr=False)
    group_starts: np.ndarray = field(repr=False)
    group_log_weight: np.ndarray = field(repr=False)

    @property
    def n_words(self):
        return self.log_norm.shape[0]

    def ratios(self):
        """log||A_w|| / log lambda_w in lexicographic order."""
        return self.log_norm / self.log_weight

    def group_lse(self, t):
        """Per-group log-sum-exp of t * log||A_w||."""
        x = t * self.values + self.log_mult
        mx = np.maximum.reduceat(x, self.group_starts)
        sizes = np.diff(np.append(self.group_starts, x.shape[0]))
        s = np.add.reduceat(np.exp(x - np.repeat(mx, sizes)), self.group_starts)
        return mx + np.log(s)


def _leaf_log_norms(prefix, suffix, norm):
    pm, pl = prefix
    sm, sl = suffix
    d = pm.shape[-1]

    def block(k):
        prod = np.einsum("ij,sjl->sil", pm[k], sm)
        return pl[k] + sl + np.log(matrix_norm(prod.reshape(-1, d, d), norm))

    return block


def _level_log_weights(log_w, n):
    out = np.zeros(1)
    for _ in range(n):
        out = (out[:, None] + log_w[None, :]).reshape(-1)
    return out


def _group_ids(n_maps, n):
    """Integer id per word (lexicographic) shared exactly by words with equal symbol counts."""
    if (n + 1) ** n_maps < 2**62:
        key = np.zeros(1, dtype=np.int64)
        steps = (n + 1) ** np.arange(n_maps, dtype=np.int64)
        for _ in range(n):
            key = (key[:, None] + steps[None, :]).reshape(-1)
        return key
    counts = _level_counts(n_maps, n)
    return np.unique(counts, axis=0, return_inverse=True)[1].reshape(-1)


def _compress(log_norm, group_id, group_lw_of_word):
    order = np.lexsort((log_norm, group_id))
    v = log_norm[order]
    g = group_id[order]
    new = np.ones(v.shape[0], dtype=bool)
    new[1:] = (g[1:] != g[:-1]) | (v[1:] != v[:-1])
    starts = np.flatnonzero(new)
    mult = np.diff(np.append(starts, v.shape[0]))
    vals = v[starts]
    gs = g[starts]
    gnew = np.ones(gs.shape[0], dtype=bool)
    gnew[1:] = gs[1:] != gs[:-1]
    gstarts = np.flatnonzero(gnew)
    glw = group_lw_of_word[order][starts][gstarts]
    return vals, np.log(mult.astype(float)), gstarts, glw


def enumerate_words(system, n, norm="2", budget=DEFAULT_BUDGET, threads=None):
    """Build the WordTable for all words of length ``n``."""
    system = as_system(system)
    if n < 1:
        raise ParameterError(f"depth must be >= 1, got {n}")
    n_maps = system.n_maps
    total = n_maps**n
    if total > budget:
        raise BudgetError(f"{n_maps}**{n} = {total} words exceeds the enumeration budget {budget}")
    s_depth = min(n, _SUFFIX_DEPTH)
    p_depth = n - s_depth
    suffix = level_products(system.matrices, s_depth)
    if p_depth == 0:
        log_norm = suffix[1] + np.log(matrix_norm(suffix[0], norm))
    else:
        prefix = level_products(system.matrices, p_depth)
        block = _leaf_log_norms(prefix, suffix, norm)
        idx = range(prefix[0].shape[0])
        workers = threads if threads is not None else thread_count()
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                parts = list(pool.map(block, idx))
        else:
            parts = [block(k) for k in idx]
        log_norm = np.concatenate(parts)

    log_weight = _level_log_weights(system.log_weights, n)
    if system.equal_weights:
        gid = np.zeros(total, dtype=np.int64)
        lw_word = np.full(total, n * system.log_weights[0])
    else:
        gid = _group_ids(n_maps, n)
        # exact per-group value, independent of summation order
        lw_word = _level_counts_dot(n_maps, n, system.log_weights)
    vals, log_mult, gstarts, glw = _compress(log_norm, gid, lw_word)
    return WordTable(n, log_norm, log_weight, vals, log_mult, gstarts, glw)


def _level_counts_dot(n_maps, n, log_w):
    """counts(w) @ log_w per word, bit-identical across a group."""
    return _level_counts(n_maps, n) @ log_w


def xi_products(system, r, norm="2", budget=DEFAULT_BUDGET):
    """Stopping-time words with lambda_w <= r < lambda_(w minus last symbol).

    Returns (words, log_norm, log_weight); words are int arrays padded with -1,
    listed in lexicographic order.
    """
    system = as_system(system)
    if not 0 < r < 1:
        raise ParameterError(f"r must lie in (0, 1), got {r}")
    bound = 1.0 / (r * system.weights.min())
    if bound > budget:
        raise BudgetError(f"partition may hold up to {bound:.3g} cylinders, budget is {budget}")
    n_maps, d = system.n_maps, system.dim
    log_r = np.log(r)
    lw = system.log_weights
    mats = np.eye(d)[None]
    logscale = np.zeros(1)
    logw = np.zeros(1)
    words = np.zeros((1, 0), dtype=np.int64)
    out_words, out_norm, out_w = [], [], []
    tol = 1e-12
    while mats.shape[0]:
        mats = np.einsum("mij,kjl->mkil", mats, system.matrices).reshape(-1, d, d)
        logscale = np.repeat(logscale, n_maps)
        mats, logscale = _normalise(mats, logscale)
        logw = (logw[:, None] + lw[None, :]).reshape(-1)
        m = words.shape[0]
        words = np.concatenate(
            [np.repeat(words, n_maps, axis=0), np.tile(np.arange(n_maps), m)[:, None]], axis=1
        )
        stop = logw <= log_r + tol
        if np.any(stop):
            out_words.append(words[stop])
            out_norm.append(logscale[stop] + np.log(matrix_norm(mats[stop], norm)))
            out_w.append(logw[stop])
        keep = ~stop
        mats, logscale, logw, words = mats[keep], logscale[keep], logw[keep], words[keep]
    width = max(w.shape[1] for w in out_words)
    padded = [np.pad(w, ((0, 0), (0, width - w.shape[1])), constant_values=-1) for w in out_words]
    all_words = np.concatenate(padded)
    # lexicographic order with -1 padding sorting first is the tree order
    key = np.lexsort(all_words.T[::-1])
    return all_words[key], np.concatenate(out_norm)[key], np.concatenate(out_w)[key]


def random_word_products(matrices, n, count, rng):
    """Products along ``count`` uniformly random words of length n.

    Returns (words, normalised products, log scales).
    """
    matrices = np.asarray(matrices, dtype=float)
    n_maps, d = matrices.shape[0], matrices.shape[1]
    words = rng.integers(0, n_maps, size=(count, n))
    mats = np.broadcast_to(np.eye(d), (count, d, d)).copy()
    logscale = np.zeros(count)
    for k in range(n):
        mats = np.einsum("sij,sjl->sil", mats, matrices[words[:, k]])
        mats, logscale = _normalise(mats, logscale)
    return words, mats, logscale


def word_product(matrices, word):
    """Plain product A_{w1} ... A_{wn} (identity for the empty word)."""
    matrices = np.asarray(matrices, dtype=float)
    out = np.eye(matrices.shape[1])
    for s in word:
        out = out @ matrices[s]
    return out
