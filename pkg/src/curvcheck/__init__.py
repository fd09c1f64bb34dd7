"""curvcheck: second-order sufficiency checks for equality-constrained
problems.

Five interchangeable verifiers of constrained positive-definiteness --
three matrix-free (implicit Cholesky, oblique diagonalization, continued
projected conjugate gradients) that certify failures with feasible
directions of negative curvature, and two classical factorization tests
(bordered-determinant signs, saddle-point inertia) -- plus a random
test-problem generator with analytically known ground truth, sphere-energy
benchmark problems, and a CLI harness.
"""

from .linalg import (
    BorderedLu,
    DependentColumnError,
    DimensionMismatchError,
    HessianOperator,
    LdlFactorization,
    NullSpaceBasis,
    NullSpaceProjector,
    RankDeficientError,
    SingularMinorError,
    ZeroDirectionError,
    ldl_factor,
    null_space_basis,
)
from .problems import (
    GeneratorSpec,
    Problem,
    ThomsonInstance,
    ThomsonProblem,
    build_bordered,
    build_kkt,
    generate,
    load_problem,
    near_rank_deficient_kkt,
    random_orthogonal,
    random_symmetric_with_eigs,
    sample_truth_rate,
    save_problem,
    truth_probability,
)
from .sosc import (
    METHODS,
    SoscVerdict,
    Status,
    VerifyOptions,
    bordered_hessian_test,
    continued_pcg,
    diagonalization,
    implicit_cholesky,
    inertia_test,
    verify,
)
from .stationary import FoncPoint, fonc_residual, solve_thomson

__version__ = "0.1.0"

__all__ = [
    "BorderedLu",
    "DependentColumnError",
    "DimensionMismatchError",
    "HessianOperator",
    "LdlFactorization",
    "NullSpaceBasis",
    "NullSpaceProjector",
    "RankDeficientError",
    "SingularMinorError",
    "ZeroDirectionError",
    "ldl_factor",
    "null_space_basis",
    "GeneratorSpec",
    "Problem",
    "ThomsonInstance",
    "ThomsonProblem",
    "build_bordered",
    "build_kkt",
    "generate",
    "load_problem",
    "near_rank_deficient_kkt",
    "random_orthogonal",
    "random_symmetric_with_eigs",
    "sample_truth_rate",
    "save_problem",
    "truth_probability",
    "METHODS",
    "SoscVerdict",
    "Status",
    "VerifyOptions",
    "bordered_hessian_test",
    "continued_pcg",
    "diagonalization",
    "implicit_cholesky",
    "inertia_test",
    "verify",
    "FoncPoint",
    "fonc_residual",
    "solve_thomson",
]
