import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from affine_zipper import derham
from affine_zipper.errors import NotContractingError, ParameterError, SchemaError, ShapeError
from affine_zipper.zipper import (
    AffineMap,
    evaluate_v,
    fixed_point,
    load_zipper,
    make_zipper,
    sample_curve,
    save_zipper,
    validate_zipper,
    zipper_from_dict,
    zipper_to_dict,
)

from conftest import zipper_from_vertices


def test_derham_validates_with_zero_residual(dr01):
    rep = validate_zipper(dr01)
    assert rep.passed
    assert rep.cross_residual < 1e-15
    np.testing.assert_allclose(dr01.vertices, [[0, -1], [0.1, -0.1], [1, 0]], atol=1e-15)


def test_perturbed_vertex_fails_at_index_zero(dr01):
    z = dr01.with_vertices(np.array([[0, -1], [0.1, -0.2], [1, 0]]))
    rep = validate_zipper(z)
    assert not rep.passed
    assert rep.cross_offending[0] == 0
    assert rep.cross_residual == pytest.approx(0.1, abs=1e-12)
    assert "map index 0" in rep.summary()


def test_straight_line_validates(line):
    assert validate_zipper(line).passed
    np.testing.assert_allclose(line.translations, [[0, 0], [0.5, 0]])


def test_validate_accepts_json_record(dr01):
    assert validate_zipper(zipper_to_dict(dr01)).passed


def test_non_contracting_reported():
    z = make_zipper(np.stack([np.eye(2) * 1.1] * 2), [[0, 0], [0.55, 0]], [[0, 0], [0.55, 0], [1.1, 0]])
    rep = validate_zipper(z)
    assert not rep.passed
    with pytest.raises(NotContractingError):
        evaluate_v(z, 0.3)


def test_shape_errors():
    with pytest.raises(ShapeError):
        make_zipper(np.stack([np.eye(2) / 2] * 2), [[0, 0], [0.5, 0]], [[0, 0], [1, 0]])
    with pytest.raises(ShapeError):
        make_zipper(np.stack([np.eye(2) / 2] * 2), [[0, 0], [0.5, 0]], [[0, 0], [0.5, 0], [1, 0]], (0, 2))


def test_fixed_points():
    mats, trans = derham.derham_matrices(0.1), derham.derham_translations(0.1)
    np.testing.assert_allclose(fixed_point(AffineMap(mats[0], trans[0])), [0, -1], atol=1e-15)
    np.testing.assert_allclose(fixed_point(AffineMap(mats[1], trans[1])), [1, 0], atol=1e-15)
    np.testing.assert_allclose(fixed_point(AffineMap(np.eye(2) / 2, np.zeros(2))), [0, 0])
    with pytest.raises(ParameterError, match="eigenvalue 1"):
        fixed_point(AffineMap(np.diag([1.0, 0.5]), np.zeros(2)))


def test_evaluate_examples(line, dr01):
    p = evaluate_v(line, 0.3, tol=1e-12)
    assert np.linalg.norm(p.position - [0.3, 0]) <= max(p.error_bound, 1e-15)
    np.testing.assert_allclose(evaluate_v(dr01, 0).position, [0, -1], atol=1e-15)
    np.testing.assert_allclose(evaluate_v(dr01, 0.5).position, [0.1, -0.1], atol=1e-15)
    with pytest.raises(ParameterError):
        evaluate_v(dr01, 0.3, tol=0)
    with pytest.raises(ParameterError):
        evaluate_v(dr01, 1.5)


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 1), st.sampled_from([1e-4, 1e-8, 1e-12]))
def test_error_bound_holds(x, tol):
    z = derham.build(0.1)
    p = evaluate_v(z, x, tol)
    ref = evaluate_v(z, x, 1e-15)
    assert p.error_bound <= tol
    assert np.linalg.norm(p.position - ref.position) <= p.error_bound + 1e-14


def test_sample_curve_examples(line, dr01):
    s = sample_curve(line, 2)
    np.testing.assert_allclose(s.positions, [[0, 0], [0.25, 0], [0.5, 0], [0.75, 0], [1, 0]])
    np.testing.assert_allclose(sample_curve(dr01, 1).positions, [[0, -1], [0.1, -0.1], [1, 0]], atol=1e-15)
    s3 = sample_curve(dr01, 3)
    assert np.diff(s3.parameters).max() == pytest.approx(1 / 8)
    assert len(s3) == 9


def test_sample_curve_refines_and_matches_evaluation(dr01):
    coarse, fine = sample_curve(dr01, 5), sample_curve(dr01, 6)
    np.testing.assert_allclose(fine.positions[::2], coarse.positions, atol=1e-12)
    for k in range(0, len(coarse), 7):
        x = coarse.parameters[k]
        np.testing.assert_allclose(evaluate_v(dr01, x).position, coarse.positions[k], atol=1e-12)


def test_sample_curve_budget(dr01):
    with pytest.raises(Exception, match="budget"):
        sample_curve(dr01, 10, budget=100)


def _reversed_zipper():
    verts = [[0, 0], [0.3, 0.25], [0.7, -0.2], [1, 0]]
    return zipper_from_vertices(verts, (0, 1, 0), [[0.05, 0.3], [-0.05, -0.3], [0.05, 0.3]], (0.3, 0.3, 0.4))


def test_reversed_signature_zipper_is_valid():
    z = _reversed_zipper()
    assert validate_zipper(z).passed


def _brute_force(z, x, depth=40):
    # v(x) = f_i(v(g_i^{-1}(x))), unrolled to fixed depth and closed with the chord
    c = np.concatenate([[0.0], np.cumsum(z.weights)])
    chain = []
    for _ in range(depth):
        i = min(int(np.searchsorted(c, x, side="right")) - 1, z.N - 1)
        lam = z.weights[i]
        x = (c[i + 1] - x) / lam if z.signature[i] else (x - c[i]) / lam
        x = min(max(x, 0.0), 1.0)
        chain.append(i)
    p = z.vertices[0] + x * (z.vertices[-1] - z.vertices[0])
    for i in reversed(chain):
        p = z.maps[i](p)
    return p


def test_signature_reversal_matches_brute_force():
    z = _reversed_zipper()
    rng = np.random.default_rng(0)
    worst = 0.0
    for x in rng.random(1000):
        worst = max(worst, float(np.linalg.norm(evaluate_v(z, x, 1e-13).position - _brute_force(z, x))))
    assert worst < 1e-9


def test_reversed_signature_sample_curve_is_continuous():
    z = _reversed_zipper()
    s = sample_curve(z, 6)
    assert s.adjacency_residual < 1e-14
    for k in range(0, len(s), 37):
        np.testing.assert_allclose(evaluate_v(z, s.parameters[k]).position, s.positions[k], atol=1e-12)


def test_json_roundtrip(tmp_path, dr01):
    path = tmp_path / "z.json"
    save_zipper(dr01, path)
    z = load_zipper(path)
    np.testing.assert_array_equal(z.matrices, dr01.matrices)
    np.testing.assert_array_equal(z.vertices, dr01.vertices)
    assert z.signature == dr01.signature


def test_json_errors_cite_path(dr01):
    data = zipper_to_dict(dr01)
    data["maps"][1]["matrix"] = [1, 2, 3]
    with pytest.raises(SchemaError) as info:
        zipper_from_dict(data)
    assert info.value.path == "$.maps[1].matrix"
    data = zipper_to_dict(dr01)
    del data["vertices"]
    with pytest.raises(SchemaError, match=r"\$"):
        zipper_from_dict(data)
    data = zipper_to_dict(dr01)
    data["signature"] = [0, 3]
    with pytest.raises(SchemaError) as info:
        zipper_from_dict(data)
    assert info.value.path == "$.signature[1]"


def test_json_nested_matrix(dr01):
    data = json.loads(json.dumps(zipper_to_dict(dr01)))
    data["maps"][0]["matrix"] = dr01.matrices[0].tolist()
    assert validate_zipper(zipper_from_dict(data)).passed


def test_exact_breakpoints_give_vertices(dr01):
    for word_end, x in ((0, Fraction(1, 4)), (1, Fraction(3, 4))):
        p = evaluate_v(dr01, x)
        assert p.error_bound == 0.0
        np.testing.assert_allclose(p.position, dr01.maps[word_end](dr01.vertices[1]), atol=1e-15)
