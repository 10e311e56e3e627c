import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from affine_zipper.errors import ParameterError, ShapeError
from affine_zipper.symbolic import (
    STREAM_RESOLUTION,
    SymbolStream,
    distance_bracket,
    format_word,
    parse_word,
    pi_exact,
    pi_project,
    Pi_project,
    vee,
    vee_detail,
    wedge,
    xi_partition,
)
from affine_zipper.zipper import evaluate_v, make_zipper

S = SymbolStream.parse


def _uniform(n, signature=None):
    """Straight-line zipper with n equal pieces (only the parameter side matters here)."""
    signature = signature or (0,) * n
    mats, trans = [], []
    for i, e in enumerate(signature):
        a = np.eye(2) / n * (-1 if e else 1)
        mats.append(a)
        trans.append([(i + e) / n, 0.0])
    verts = [[k / n, 0.0] for k in range(n + 1)]
    return make_zipper(np.array(mats), np.array(trans), verts, signature)


def test_stream_parse_roundtrip_and_canonical():
    s = S("01(1)")
    assert str(s) == "01(1)"
    assert s.head(5) == (0, 1, 1, 1, 1)
    assert S("0(0)") == S("(0)")
    assert S("(01)") == S("0(10)")
    assert hash(S("(0101)")) == hash(S("(01)"))
    assert S("(01)").shift(3) == S("(10)")
    with pytest.raises(ShapeError):
        S("01")


def test_word_format():
    assert format_word((0, 1, 1)) == "011"
    assert format_word((0, 11), n_symbols=12) == "0,11"
    assert parse_word("0,11") == (0, 11)
    with pytest.raises(ShapeError):
        parse_word("012", n_symbols=2)


def test_wedge_examples():
    assert wedge(S("01(0)"), S("011(0)")) == 2
    assert wedge(S("(0)"), S("1(0)")) == 0
    assert wedge(S("(012)"), S("012012100(0)")) == 6
    with pytest.raises(ParameterError, match="wedge undefined"):
        wedge(S("(01)"), S("0(10)"))


def test_vee_examples():
    assert vee(S("0111(0)"), S("1000(1)"), (0, 0)) == 3
    assert vee(S("01(0)"), S("01(1)"), (0, 0)) == 0
    assert vee(S("02(0)"), S("00(0)"), (0, 0, 0)) == 0


def test_vee_caps_double_codings():
    v, capped = vee_detail(S("0(1)"), S("1(0)"), (0, 0))
    assert capped and v == STREAM_RESOLUTION


# the adjacency table reads the ends of [0, 1] as constant tails, which holds when the end pieces are forward
@pytest.mark.parametrize("signature", [(0, 0), (0, 0, 0), (0, 1, 0), (0, 1, 1, 0)])
def test_vee_capped_exactly_when_projections_coincide(signature):
    z = _uniform(len(signature), signature)
    n = len(signature)
    rng = np.random.default_rng(1)
    for _ in range(200):
        a = int(rng.integers(0, n - 1))
        prefix = tuple(int(s) for s in rng.integers(0, n, int(rng.integers(0, 3))))
        i = SymbolStream(prefix + (a,), (int(rng.integers(0, n)),))
        j = SymbolStream(prefix + (a + 1,), (int(rng.integers(0, n)),))
        same = pi_exact(z, i) == pi_exact(z, j)
        _, capped = vee_detail(i, j, signature)
        assert same == capped


def test_pi_examples():
    z2 = _uniform(2)
    assert pi_project(z2, S("0(1)")) == 0.5
    assert pi_project(z2, S("(1)")) == 1.0
    assert pi_exact(_uniform(3), S("(1)")) == Fraction(1, 2)
    assert pi_exact(z2, S("(01)")) == Fraction(1, 3)


def test_Pi_examples(dr01, line):
    np.testing.assert_allclose(Pi_project(dr01, S("(0)")), [0, -1], atol=1e-15)
    np.testing.assert_allclose(Pi_project(dr01, S("1(0)")), [0.1, -0.1], atol=1e-15)
    np.testing.assert_allclose(Pi_project(line, S("(01)")), [1 / 3, 0], atol=1e-15)
    with pytest.raises(ParameterError):
        Pi_project(dr01, S("(0)"), tol=0)


streams = st.builds(
    lambda p, q: SymbolStream(tuple(p), tuple(q)),
    st.lists(st.integers(0, 1), max_size=10),
    st.lists(st.integers(0, 1), min_size=1, max_size=4),
)


@settings(max_examples=200, deadline=None)
@given(streams, streams)
def test_pi_monotone(i, j):
    z = _uniform(2)
    if i == j:
        return
    a, b = (i, j) if i.head(64) < j.head(64) else (j, i)
    assert pi_exact(z, a) <= pi_exact(z, b)


def test_pi_monotone_random_pairs():
    z = _uniform(3)
    rng = np.random.default_rng(2)
    for _ in range(10_000):
        pair = [SymbolStream(tuple(rng.integers(0, 3, rng.integers(0, 6))), tuple(rng.integers(0, 3, rng.integers(1, 3))))
                for _ in range(2)]
        if pair[0] == pair[1]:
            continue
        a, b = sorted(pair, key=lambda s: s.head(64))
        assert pi_exact(z, a) <= pi_exact(z, b)


def test_v_of_pi_is_Pi(dr01):
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(1000):
        s = SymbolStream(tuple(rng.integers(0, 2, rng.integers(0, 12))), tuple(rng.integers(0, 2, rng.integers(1, 4))))
        p = evaluate_v(dr01, pi_exact(dr01, s), 1e-12)
        worst = max(worst, float(np.linalg.norm(p.position - Pi_project(dr01, s))))
    assert worst < 1e-11


def test_xi_partition_examples():
    assert xi_partition((0.5, 0.5), 0.3).words == ((0, 0), (0, 1), (1, 0), (1, 1))
    assert xi_partition((0.5, 0.25, 0.25), 0.3).words == ((0, 0), (0, 1), (0, 2), (1,), (2,))
    assert xi_partition((0.5, 0.5), 0.5).words == ((0,), (1,))
    with pytest.raises(ParameterError):
        xi_partition((0.5, 0.5), 1.0)


def test_xi_partition_sums_to_one():
    rng = np.random.default_rng(4)
    w = (0.5, 0.3, 0.2)
    for r in rng.uniform(1e-3, 0.9, 20):
        part = xi_partition(w, r)
        weights = part.weights(w)
        assert weights.sum() == pytest.approx(1.0, abs=1e-12)
        assert len(part) <= 1 / (r * min(w)) + 1e-9
        lw = np.log(w)
        for word in part:
            assert sum(lw[list(word)]) <= math.log(r) + 1e-12 < sum(lw[list(word[:-1])])


def test_distance_bracket_examples(dr01):
    b = distance_bracket(dr01, S("(0)"), S("0(1)"))
    assert (b.wedge, b.vee, b.depth) == (1, 0, 1)
    assert b.s == 1.0
    assert abs(pi_project(dr01, S("(0)")) - pi_project(dr01, S("0(1)"))) == 0.5
    b = distance_bracket(dr01, S("(0)"), S("(1)"))
    assert (b.depth, b.s) == (0, 2.0)
    b = distance_bracket(dr01, S("0(1)"), S("1(0)"))
    assert b.capped and b.s == pytest.approx(2 * 2.0**-STREAM_RESOLUTION)
    assert pi_exact(dr01, S("0(1)")) == pi_exact(dr01, S("1(0)")) == Fraction(1, 2)


def test_distance_bracket_ratio_is_bounded(dr01):
    rng = np.random.default_rng(5)
    ratios = []
    for _ in range(10_000):
        i = SymbolStream(tuple(rng.integers(0, 2, rng.integers(0, 20))), tuple(rng.integers(0, 2, rng.integers(1, 4))))
        j = SymbolStream(tuple(rng.integers(0, 2, rng.integers(0, 20))), tuple(rng.integers(0, 2, rng.integers(1, 4))))
        if i == j:
            continue
        b = distance_bracket(dr01, i, j)
        if b.capped:
            continue
        ratios.append(float(abs(pi_exact(dr01, i) - pi_exact(dr01, j))) / b.s)
    ratios = np.array(ratios)
    assert ratios.min() > 0
    K = max(ratios.max(), 1 / ratios.min())
    assert K <= 1e3
