"""Affine zipper curves: evaluation, matrix pressure, multifractal spectra and cone certificates."""

from . import cones, derham, holder, pressure, symbolic
from .errors import (
    BudgetError,
    NoRootError,
    NotContractingError,
    ParameterError,
    SchemaError,
    ShapeError,
    SmoothCaseError,
    UnreliableDirectionError,
    ValidationError,
    ZipperError,
)
from .holder import HolderEstimate, direct_exponent, gibbs_sampler, symbolic_exponent
from .pressure import PressureCurve, d0, legendre, pressure_at, pressure_curve, spectrum_curve
from .products import MatrixSystem
from .symbolic import SymbolStream, distance_bracket, pi_project, Pi_project, vee, wedge, xi_partition
from .zipper import (
    AffineMap,
    Zipper,
    evaluate_v,
    load_zipper,
    make_zipper,
    sample_curve,
    save_zipper,
    straight_line,
    validate_zipper,
)

__version__ = "0.1.0"
