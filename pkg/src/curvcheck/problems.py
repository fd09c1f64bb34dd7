"""Test-problem construction with analytically known ground truth.

Provides the random dense generator whose constrained-definiteness truth is
known from its construction parameters, the KKT/bordered matrix builders,
a nearly-rank-deficient KKT construction whose smallest eigenvalue is
bounded by a chosen perturbation norm, the Thomson sphere problems in
plain and orthogonally-invariant (frame-fixed) form, and JSON round-trip
serialization of dense problems.
"""

from __future__ import annotations

import dataclasses
import json
from typing import Callable, Optional

import numpy as np
from scipy.spatial.distance import pdist

from .linalg import HessianOperator, _as_jacobian

__all__ = [
    "CannotNormalizeError",
    "CoincidentPointsError",
    "Problem",
    "GeneratorSpec",
    "generate",
    "random_orthogonal",
    "random_symmetric_with_eigs",
    "truth_probability",
    "sample_truth_rate",
    "build_kkt",
    "build_bordered",
    "near_rank_deficient_kkt",
    "ThomsonInstance",
    "ThomsonProblem",
    "cube_sqp_iterates",
    "problem_to_dict",
    "problem_from_dict",
    "save_problem",
    "load_problem",
]


class CannotNormalizeError(ValueError):
    """The dependent-row combination vanished; it cannot be normalized."""


class CoincidentPointsError(ValueError):
    """Two sphere points coincide; the pairwise energy is undefined."""


# ---------------------------------------------------------------------------
# Problem container
# ---------------------------------------------------------------------------


@dataclasses.dataclass
class Problem:
    """An equality-constrained curvature-test instance.

    Exactly one Hessian representation must be usable: an explicit dense
    matrix, a matrix-vector callback, or a Lagrangian-gradient callback
    (finite differencing) together with the evaluation point.
    """

    jacobian: np.ndarray
    hessian: Optional[np.ndarray] = None
    matvec: Optional[Callable] = None
    gradient: Optional[Callable] = None
    x: Optional[np.ndarray] = None
    lam: Optional[np.ndarray] = None
    truth: Optional[bool] = None
    exact_basis: Optional[np.ndarray] = None
    provenance: Optional[dict] = None
    fd_sigma: float = 1e-6

    def __post_init__(self):
        self.jacobian = _as_jacobian(self.jacobian)
        if self.hessian is not None:
            H = np.asarray(self.hessian, dtype=float)
            if H.shape != (self.n, self.n):
                raise ValueError(
                    f"Hessian shape {H.shape} inconsistent with N={self.n}"
                )
            self.hessian = 0.5 * (H + H.T)
        if self.x is not None:
            self.x = np.asarray(self.x, dtype=float)
        if self.lam is not None:
            self.lam = np.asarray(self.lam, dtype=float)

    @property
    def n(self) -> int:
        return self.jacobian.shape[1]

    @property
    def m(self) -> int:
        return self.jacobian.shape[0]

    @property
    def l(self) -> int:
        return self.n - self.m

    def operator(self, sigma: Optional[float] = None) -> HessianOperator:
        """A fresh Hessian operator (fresh product counter) for this problem."""
        if self.hessian is not None:
            return HessianOperator.from_matrix(self.hessian)
        if self.matvec is not None:
            return HessianOperator.from_callback(self.matvec, self.n)
        if self.gradient is not None:
            if self.x is None:
                raise ValueError("gradient-backed problem needs a base point x")
            return HessianOperator.from_gradient(
                self.gradient, self.x, self.lam, sigma or self.fd_sigma
            )
        raise ValueError("problem has no Hessian representation")

    def dense_hessian(self) -> np.ndarray:
        """Explicit symmetric Hessian, materialized from the operator if
        needed (N operator applications)."""
        if self.hessian is not None:
            return self.hessian
        return self.operator().materialize()


# ---------------------------------------------------------------------------
# Random generator with analytic truth
# ---------------------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class GeneratorSpec:
    """Parameters of the random dense generator.

    The emitted Hessian is an orthogonal conjugation of a block-diagonal
    matrix with ``p`` positive and ``n - p`` negative eigenvalues whose
    magnitudes are drawn uniformly from ``[eig_lo, eig_hi]``; the
    transposed Jacobian is the trailing ``m`` columns of the same orthogonal
    factor times an upper-triangular matrix.  With that structure the
    condition holds exactly when ``n - m <= p``.
    """

    n: int
    m: int
    p: int
    conditioning: str = "well"
    eig_lo: float = 0.1
    eig_hi: float = 100.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if not 1 <= self.m <= self.n - 1:
            raise ValueError("m must be in 1..n-1")
        if not 0 <= self.p <= self.n:
            raise ValueError("p must be in 0..n")
        if self.conditioning not in ("well", "ill"):
            raise ValueError("conditioning must be 'well' or 'ill'")
        if not 0 < self.eig_lo < self.eig_hi:
            raise ValueError("need 0 < eig_lo < eig_hi")

    @property
    def truth(self) -> bool:
        return self.n - self.m <= self.p


def random_orthogonal(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed orthogonal matrix (QR of a Gaussian, sign-fixed R)."""
    if n < 1:
        raise ValueError("n must be positive")
    G = rng.standard_normal((n, n))
    Q, R = np.linalg.qr(G)
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return Q * signs


def random_symmetric_with_eigs(eigs, rng: np.random.Generator) -> np.ndarray:
    """Random symmetric matrix with the prescribed eigenvalues."""
    eigs = np.asarray(eigs, dtype=float)
    if eigs.size == 0:
        return np.zeros((0, 0))
    Q = random_orthogonal(eigs.size, rng)
    S = (Q * eigs) @ Q.T
    return 0.5 * (S + S.T)


def _draw_triangular(m: int, conditioning: str, rng: np.random.Generator) -> np.ndarray:
    R = np.triu(rng.standard_normal((m, m)), k=1)
    if conditioning == "well":
        # descending scales m, m-1, ..., 1 keep R comfortably nonsingular
        scales = np.arange(m, 0, -1, dtype=float)
        diag = rng.standard_normal(m) * scales
        floor = 0.0
    else:
        diag = rng.standard_normal(m)
        floor = 1e-300  # underflow guard: square Gaussian R can degenerate
    for i in range(m):
        while abs(diag[i]) <= floor:
            diag[i] = rng.standard_normal() * (m - i if conditioning == "well" else 1.0)
    R[np.arange(m), np.arange(m)] = diag
    return R


def generate(spec: GeneratorSpec) -> Problem:
    """Draw a random dense test problem with known truth and exact basis."""
    rng = np.random.default_rng(spec.seed)
    n, m, p = spec.n, spec.m, spec.p
    l = n - m

    mags = rng.uniform(spec.eig_lo, spec.eig_hi, size=n)
    lam_plus = mags[:p]
    lam_minus = -mags[p:]

    block_pos = random_symmetric_with_eigs(lam_plus, rng)
    block_neg = random_symmetric_with_eigs(lam_minus, rng)
    core = np.zeros((n, n))
    core[:p, :p] = block_pos
    core[p:, p:] = block_neg

    Q = random_orthogonal(n, rng)
    H = Q @ core @ Q.T
    H = 0.5 * (H + H.T)

    R = _draw_triangular(m, spec.conditioning, rng)
    A = (Q[:, l:] @ R).T

    provenance = dataclasses.asdict(spec)
    provenance["eigenvalues"] = np.concatenate([lam_plus, lam_minus]).tolist()
    return Problem(
        jacobian=A,
        hessian=H,
        truth=spec.truth,
        exact_basis=Q[:, :l].copy(),
        provenance=provenance,
    )


def truth_probability(n: int) -> float:
    """Probability the condition holds under uniform (m, p) draws."""
    return (n + 2) / (2.0 * (n + 1))


def sample_truth_rate(n: int, trials: int, rng: np.random.Generator) -> float:
    """Empirical fraction of draws with ``n - m <= p`` for uniform m, p."""
    if trials < 1:
        raise ValueError("trials must be positive")
    m = rng.integers(1, n, size=trials)
    p = rng.integers(0, n + 1, size=trials)
    return float(np.mean(n - m <= p))


# ---------------------------------------------------------------------------
# KKT / bordered matrices
# ---------------------------------------------------------------------------


def build_kkt(H: np.ndarray, A: np.ndarray) -> np.ndarray:
    """Saddle-point matrix [[H, A^T], [A, 0]]."""
    H = np.asarray(H, dtype=float)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    m, n = A.shape
    if H.shape != (n, n):
        raise ValueError("H and A dimensions are inconsistent")
    return np.block([[H, A.T], [A, np.zeros((m, m))]])


def build_bordered(H: np.ndarray, A: np.ndarray) -> np.ndarray:
    """Bordered matrix [[0, A], [A^T, H]]."""
    H = np.asarray(H, dtype=float)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    m, n = A.shape
    if H.shape != (n, n):
        raise ValueError("H and A dimensions are inconsistent")
    return np.block([[np.zeros((m, m)), A], [A.T, H]])


def near_rank_deficient_kkt(H, A_prime, beta, eps):
    """KKT matrix whose last constraint row nearly depends on the others.

    The final row is ``sum(beta_m * a_m) + eps`` rescaled to unit norm
    (beta and eps are scaled jointly).  Returns the KKT matrix and the
    norm of the scaled perturbation; the matrix is guaranteed to have an
    eigenvalue of magnitude at most that norm.
    """
    H = np.asarray(H, dtype=float)
    A_prime = np.atleast_2d(np.asarray(A_prime, dtype=float))
    beta = np.asarray(beta, dtype=float)
    eps = np.asarray(eps, dtype=float)
    if beta.shape != (A_prime.shape[0],):
        raise ValueError("beta must have one coefficient per existing row")
    if eps.shape != (A_prime.shape[1],):
        raise ValueError("eps must be an N-vector")
    if not np.any(beta):
        raise ValueError("beta must not be all zero")
    combo = beta @ A_prime + eps
    nrm = float(np.linalg.norm(combo))
    if nrm == 0.0:
        raise CannotNormalizeError("beta @ A' + eps vanished")
    a_last = combo / nrm
    A = np.vstack([A_prime, a_last])
    return build_kkt(H, A), float(np.linalg.norm(eps)) / nrm


# ---------------------------------------------------------------------------
# Thomson sphere problems
# ---------------------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class ThomsonInstance:
    """K points on the unit sphere; the frame-fixed variant pins the first
    point to the first axis and the second point to the first-coordinate
    plane, removing the rotational solution family."""

    k: int
    variant: str = "frame_fixed"

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("need at least two points")
        if self.variant not in ("plain", "frame_fixed"):
            raise ValueError("variant must be 'plain' or 'frame_fixed'")

    @property
    def n(self) -> int:
        return 3 * self.k

    @property
    def m(self) -> int:
        return self.k + 3 if self.variant == "frame_fixed" else self.k


class ThomsonProblem:
    """Callbacks for the pairwise inverse-distance energy on K spheres.

    Constraint ordering: the K sphere constraints ``(|x_k|^2 - 1)/2`` come
    first, then (frame-fixed variant) the three pinned coordinates
    ``x_{1,2}``, ``x_{1,3}``, ``x_{2,3}``.
    """

    def __init__(self, instance: ThomsonInstance):
        self.instance = instance

    @property
    def n(self) -> int:
        return self.instance.n

    @property
    def m(self) -> int:
        return self.instance.m

    def _points(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise ValueError(f"expected vector of length {self.n}")
        pts = x.reshape(self.instance.k, 3)
        if self.instance.k > 1 and pdist(pts).min() < 1e-12:
            raise CoincidentPointsError("two points (nearly) coincide")
        return pts

    def objective(self, x: np.ndarray) -> float:
        pts = self._points(x)
        return float(np.sum(1.0 / pdist(pts)))

    def gradient(self, x: np.ndarray) -> np.ndarray:
        pts = self._points(x)
        k = self.instance.k
        diff = pts[:, None, :] - pts[None, :, :]
        dist = np.sqrt(np.sum(diff * diff, axis=2))
        np.fill_diagonal(dist, np.inf)
        # d/dx_k of 1/|x_k - x_m| is -(x_k - x_m)/|x_k - x_m|^3
        grad = -np.sum(diff / dist[:, :, None] ** 3, axis=1)
        return grad.reshape(3 * k)

    def constraints(self, x: np.ndarray) -> np.ndarray:
        pts = np.asarray(x, dtype=float).reshape(self.instance.k, 3)
        vals = 0.5 * (np.sum(pts * pts, axis=1) - 1.0)
        if self.instance.variant == "frame_fixed":
            vals = np.concatenate([vals, [pts[0, 1], pts[0, 2], pts[1, 2]]])
        return vals

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        pts = np.asarray(x, dtype=float).reshape(self.instance.k, 3)
        k, n = self.instance.k, self.n
        A = np.zeros((self.m, n))
        for i in range(k):
            A[i, 3 * i : 3 * i + 3] = pts[i]
        if self.instance.variant == "frame_fixed":
            A[k, 1] = 1.0
            A[k + 1, 2] = 1.0
            A[k + 2, 5] = 1.0
        return A

    def objective_hessian(self, x: np.ndarray) -> np.ndarray:
        pts = self._points(x)
        k = self.instance.k
        H = np.zeros((3 * k, 3 * k))
        for a in range(k - 1):
            for b in range(a + 1, k):
                u = pts[a] - pts[b]
                r = float(np.linalg.norm(u))
                # Hessian of 1/|u|: 3 u u^T / |u|^5 - I / |u|^3
                blk = 3.0 * np.outer(u, u) / r**5 - np.eye(3) / r**3
                ia, ib = slice(3 * a, 3 * a + 3), slice(3 * b, 3 * b + 3)
                H[ia, ia] += blk
                H[ib, ib] += blk
                H[ia, ib] -= blk
                H[ib, ia] -= blk
        return H

    def lagrangian_gradient(self, x: np.ndarray, lam: np.ndarray) -> np.ndarray:
        lam = np.asarray(lam, dtype=float)
        return self.gradient(x) - self.jacobian(x).T @ lam

    def lagrangian_hessian(self, x: np.ndarray, lam: np.ndarray) -> np.ndarray:
        lam = np.asarray(lam, dtype=float)
        H = self.objective_hessian(x)
        # sphere constraints contribute identity blocks; pinned coordinates
        # are linear and contribute nothing
        for i in range(self.instance.k):
            H[3 * i : 3 * i + 3, 3 * i : 3 * i + 3] -= lam[i] * np.eye(3)
        return H

    def as_problem(self, x: np.ndarray, lam: np.ndarray, fd_sigma: float = 1e-6) -> Problem:
        """Gradient-backed (finite-difference) problem at a stationary point."""
        x = np.asarray(x, dtype=float)
        lam = np.asarray(lam, dtype=float)
        return Problem(
            jacobian=self.jacobian(x),
            gradient=self.lagrangian_gradient,
            x=x,
            lam=lam,
            fd_sigma=fd_sigma,
            provenance={"kind": "thomson", "k": self.instance.k,
                        "variant": self.instance.variant},
        )


def cube_sqp_iterates(x0: float, n: int) -> np.ndarray:
    """Successive halvings x0, x0/2, ..., x0/2^n.

    This is the iterate sequence a quadratic-model step produces on the
    scalar cubic objective, which converges to a point where the curvature
    test must report the boundary case (zero second derivative), not a pass.
    """
    if x0 <= 0:
        raise ValueError("x0 must be positive")
    if n < 0:
        raise ValueError("n must be nonnegative")
    return x0 / (2.0 ** np.arange(n + 1))


# ---------------------------------------------------------------------------
# JSON serialization (dense-v1 schema)
# ---------------------------------------------------------------------------

_SCHEMA = "dense-v1"


def problem_to_dict(problem: Problem) -> dict:
    """Dense JSON document for a problem (row-major flat arrays)."""
    doc = {
        "schema": _SCHEMA,
        "N": problem.n,
        "M": problem.m,
        "A": [float(v) for v in problem.jacobian.reshape(-1)],
    }
    if problem.hessian is not None:
        doc["H"] = [float(v) for v in problem.hessian.reshape(-1)]
    if problem.x is not None:
        doc["x"] = [float(v) for v in problem.x]
    if problem.lam is not None:
        doc["lambda"] = [float(v) for v in problem.lam]
    if problem.truth is not None:
        doc["truth"] = bool(problem.truth)
    if problem.provenance is not None:
        doc["provenance"] = problem.provenance
    return doc


def problem_from_dict(doc: dict) -> Problem:
    if not isinstance(doc, dict):
        raise ValueError("problem document must be a JSON object")
    if doc.get("schema") != _SCHEMA:
        raise ValueError(f"unsupported schema {doc.get('schema')!r}")
    try:
        n = int(doc["N"])
        m = int(doc["M"])
        A = np.asarray(doc["A"], dtype=float).reshape(m, n)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed problem document: {exc}") from exc
    H = None
    if "H" in doc:
        H = np.asarray(doc["H"], dtype=float)
        if H.size != n * n:
            raise ValueError("H has the wrong number of entries")
        H = H.reshape(n, n)
    x = np.asarray(doc["x"], dtype=float) if "x" in doc else None
    lam = np.asarray(doc["lambda"], dtype=float) if "lambda" in doc else None
    truth = bool(doc["truth"]) if "truth" in doc else None
    return Problem(
        jacobian=A, hessian=H, x=x, lam=lam, truth=truth,
        provenance=doc.get("provenance"),
    )


def save_problem(problem: Problem, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(problem_to_dict(problem), fh)
        fh.write("\n")


def load_problem(path) -> Problem:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"invalid JSON: {exc}") from exc
    return problem_from_dict(doc)
