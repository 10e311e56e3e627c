import numpy as np
import pytest

from affine_zipper import derham
from affine_zipper.pressure import pressure_curve
from affine_zipper.products import MatrixSystem
from affine_zipper.zipper import make_zipper, straight_line


def scalar_system(c0, c1, weights=(0.5, 0.5)):
    return MatrixSystem(np.array([[[c0]], [[c1]]]), weights)


def zipper_from_vertices(vertices, signature, normals, weights=None):
    """Zipper in the plane whose maps send the chord z_0 z_N onto the prescribed sub-chords.

    ``normals[i]`` is the image of the unit normal of the chord under A_i.
    """
    z = np.asarray(vertices, dtype=float)
    chord = z[-1] - z[0]
    basis = np.column_stack([chord, [-chord[1], chord[0]]])
    mats, trans = [], []
    for i, e in enumerate(signature):
        start, end = z[i + e], z[i + 1 - e]
        image = np.column_stack([end - start, normals[i]])
        a = image @ np.linalg.inv(basis)
        mats.append(a)
        trans.append(start - a @ z[0])
    return make_zipper(np.array(mats), np.array(trans), z, signature, weights)


@pytest.fixture(scope="session")
def line():
    return straight_line()


@pytest.fixture(scope="session")
def dr01():
    return derham.build(0.1)


@pytest.fixture(scope="session")
def asym():
    return scalar_system(0.25, 0.5)


@pytest.fixture(scope="session")
def asym_curve(asym):
    return pressure_curve(asym)


@pytest.fixture(scope="session")
def dr01_curve(dr01):
    return pressure_curve(dr01.system)


@pytest.fixture(scope="session")
def line_curve(line):
    return pressure_curve(line.system)


@pytest.fixture(scope="session")
def bad_zipper():
    """Middle vertex lifted off the chord with shears of opposite sign: not well ordered."""
    mats = np.array([[[0.5, 0.0], [0.3, 0.9]], [[0.5, 0.0], [-0.3, 0.9]]])
    trans = np.array([[0.0, 0.0], [0.5, 0.3]])
    verts = np.array([[0.0, 0.0], [0.5, 0.3], [1.0, 0.0]])
    return make_zipper(mats, trans, verts)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
