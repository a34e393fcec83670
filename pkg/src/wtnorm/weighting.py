"""Marginal weight vectors, smoothing, and the weighted matrix norms.

The weighted trace-norm of X under row weights w_r and column weights w_c is
the trace-norm (sum of singular values) of diag(sqrt(w_r)) X diag(sqrt(w_c)).
Weight vectors are probability vectors; they may come from a sampling
distribution's true marginals, from observed index frequencies, or from
either of those smoothed toward uniform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .distributions import JointDistribution, SampleSet, _readonly

WEIGHT_TOL = 1e-12

# Moderate smoothing works well in applied fits; the theory-facing operations
# (domination checks, smoothed empirical marginals) fix alpha at one half.
DEFAULT_ALPHA_APPLIED = 0.9
DEFAULT_ALPHA_THEORY = 0.5

KINDS = ("true", "smoothed", "empirical", "smoothed_empirical", "transductive_smoothed")
_SMOOTHED_KINDS = ("smoothed", "smoothed_empirical", "transductive_smoothed")

# Kind transitions under smoothing.
_SMOOTH_KIND = {
    "true": "smoothed",
    "empirical": "smoothed_empirical",
    "smoothed": "smoothed",
    "smoothed_empirical": "smoothed_empirical",
    "transductive_smoothed": "transductive_smoothed",
}

# Full dense SVD below this size; Lanczos above (exactness wins at desk scale).
DENSE_SVD_MAX = 512


@dataclass(frozen=True)
class SmoothingConfig:
    """Convex-combination weight alpha: 1 keeps the input, 0 gives uniform."""

    alpha: float = DEFAULT_ALPHA_THEORY

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")


@dataclass(frozen=True)
class NormBudget:
    """Trace-norm ball parameter: the ball is {X : weighted norm <= sqrt(r)}."""

    r: float

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError(f"r must be positive, got {self.r}")

    @property
    def radius(self) -> float:
        return math.sqrt(self.r)


@dataclass(frozen=True)
class MarginalWeights:
    """Row/column probability vectors defining a weighted trace-norm.

    kind records provenance; alpha is the smoothing level for smoothed kinds
    (None otherwise) and implies the entrywise floors (1-alpha)/n, (1-alpha)/m.
    """

    row: np.ndarray
    col: np.ndarray
    kind: str = "true"
    alpha: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}")
        for name, v in (("row", self.row), ("col", self.col)):
            if np.any(v < 0):
                raise ValueError(f"{name} weights must be nonnegative")
            if abs(float(v.sum()) - 1.0) > WEIGHT_TOL:
                raise ValueError(f"{name} weights must sum to 1 within {WEIGHT_TOL}")
        if self.kind in _SMOOTHED_KINDS:
            if self.alpha is None:
                raise ValueError(f"kind {self.kind!r} requires a recorded alpha")
            floor_r = (1.0 - self.alpha) / len(self.row)
            floor_c = (1.0 - self.alpha) / len(self.col)
            if self.row.min() < floor_r - WEIGHT_TOL or self.col.min() < floor_c - WEIGHT_TOL:
                raise ValueError("smoothed weights violate the (1-alpha)/dim floor")

    @property
    def n(self) -> int:
        return len(self.row)

    @property
    def m(self) -> int:
        return len(self.col)

    @property
    def strictly_positive(self) -> bool:
        return bool(self.row.min() > 0 and self.col.min() > 0)

    @classmethod
    def from_vectors(cls, row, col, kind="true", alpha=None) -> "MarginalWeights":
        return cls(row=_readonly(row), col=_readonly(col), kind=kind, alpha=alpha)

    def to_json_dict(self) -> dict:
        return {"kind": self.kind, "alpha": self.alpha,
                "row": self.row.tolist(), "col": self.col.tolist()}

    @classmethod
    def from_json_dict(cls, doc: dict) -> "MarginalWeights":
        return cls.from_vectors(doc["row"], doc["col"], kind=doc["kind"],
                                alpha=doc.get("alpha"))


def uniform_weights(n: int, m: int | None = None) -> MarginalWeights:
    m = n if m is None else m
    return MarginalWeights.from_vectors(np.full(n, 1.0 / n), np.full(m, 1.0 / m))


def from_distribution(dist: JointDistribution) -> MarginalWeights:
    """True marginal weights of a sampling distribution."""
    return MarginalWeights(row=dist.row_marginals, col=dist.col_marginals, kind="true")


def smooth(weights: MarginalWeights, cfg: SmoothingConfig) -> MarginalWeights:
    """Mix weights toward uniform: alpha * w + (1 - alpha) / dim, per entry.

    Smoothing an already-smoothed vector composes: the recorded alpha is the
    product, which keeps the floor invariant exact.
    """
    a = cfg.alpha
    row = a * weights.row + (1.0 - a) / weights.n
    col = a * weights.col + (1.0 - a) / weights.m
    eff_alpha = a if weights.alpha is None else a * weights.alpha
    return MarginalWeights.from_vectors(row, col, kind=_SMOOTH_KIND[weights.kind],
                                        alpha=eff_alpha)


def empirical_marginals(S: SampleSet, n: int, m: int) -> MarginalWeights:
    """Observed row/column frequencies of the index multiset (duplicates count).

    Counts stay integral until the single final division, so no drift.
    """
    if np.any(S.rows >= n) or np.any(S.cols >= m):
        raise ValueError("sample indexes exceed the stated grid")
    row = np.bincount(S.rows, minlength=n).astype(np.float64) / S.size
    col = np.bincount(S.cols, minlength=m).astype(np.float64) / S.size
    return MarginalWeights.from_vectors(row, col, kind="empirical")


def smooth_empirical(S: SampleSet, n: int, m: int) -> MarginalWeights:
    """Half-and-half mix of empirical marginals with uniform: (freq + 1/dim) / 2."""
    return smooth(empirical_marginals(S, n, m), SmoothingConfig(0.5))


def transductive_weights(S: SampleSet, n: int, m: int) -> MarginalWeights:
    """Smoothed empirical marginals of a transductive pool, tagged as such."""
    return replace(smooth_empirical(S, n, m), kind="transductive_smoothed")


def reweight(X: np.ndarray, w: MarginalWeights) -> np.ndarray:
    """Map X into weighted coordinates: diag(sqrt(row)) X diag(sqrt(col))."""
    return np.sqrt(w.row)[:, None] * X * np.sqrt(w.col)[None, :]


def unweight(Xw: np.ndarray, w: MarginalWeights) -> np.ndarray:
    """Inverse of reweight; requires strictly positive weights."""
    if not w.strictly_positive:
        raise ValueError("unweight requires strictly positive weights")
    return Xw / np.sqrt(w.row)[:, None] / np.sqrt(w.col)[None, :]


def singular_values(A: np.ndarray) -> np.ndarray:
    """All singular values of A, descending.

    Dense LAPACK up to DENSE_SVD_MAX; above that, Lanczos for the leading
    min(n, m) - 1 values with the last one recovered exactly from the
    Frobenius identity ||A||_F^2 = sum sigma_i^2.
    """
    if min(A.shape) == 0:
        return np.zeros(0)
    if max(A.shape) <= DENSE_SVD_MAX:
        return np.linalg.svd(A, compute_uv=False)
    from scipy.sparse.linalg import svds

    k = min(A.shape) - 1
    top = svds(A, k=k, tol=1e-10, return_singular_vectors=False)
    top = np.sort(top)[::-1]
    residual = float(A.ravel() @ A.ravel()) - float(top @ top)
    return np.concatenate([top, [math.sqrt(max(residual, 0.0))]])


def _check_shape(X: np.ndarray, w: MarginalWeights) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.shape != (w.n, w.m):
        raise ValueError(f"matrix shape {X.shape} != ({w.n}, {w.m})")
    return X


def weighted_trace_norm(X: np.ndarray, w: MarginalWeights) -> float:
    """Sum of singular values of the reweighted matrix.

    Zero-weighted rows/columns make the norm infinite unless the matching
    rows/columns of X vanish; this is the limit behavior of the norm and
    keeps degenerate marginals well-posed.
    """
    X = _check_shape(X, w)
    zr = w.row == 0
    zc = w.col == 0
    if (zr.any() and np.any(X[zr, :] != 0)) or (zc.any() and np.any(X[:, zc] != 0)):
        return math.inf
    return float(singular_values(reweight(X, w)).sum())


def weighted_frobenius_norm(X: np.ndarray, w: MarginalWeights) -> float:
    X = _check_shape(X, w)
    return float(np.linalg.norm(reweight(X, w)))


def truncate_low_probability(X: np.ndarray, dist: JointDistribution, s: int) -> np.ndarray:
    """Zero out entries whose sampling probability falls below log(n)/(s sqrt(nm))."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape != (dist.n, dist.m):
        raise ValueError(f"matrix shape {X.shape} != ({dist.n}, {dist.m})")
    threshold = math.log(dist.n) / (s * math.sqrt(dist.n * dist.m))
    return np.where(dist.mass >= threshold, X, 0.0)


def project_to_ball(X: np.ndarray, w: MarginalWeights, budget: NormBudget) -> np.ndarray:
    """Radial retraction onto {Z : weighted trace norm <= sqrt(r)}.

    Inside the ball X is returned unchanged; outside it is rescaled onto the
    boundary, preserving direction (not the metric projection).
    """
    norm = weighted_trace_norm(X, w)
    if math.isinf(norm):
        raise ValueError("cannot project a matrix of infinite weighted trace norm")
    if norm <= budget.radius or norm == 0.0:
        return X
    return X * (budget.radius / norm)


@dataclass(frozen=True)
class DominationReport:
    holds: bool
    worst_ratio: float


def check_marginal_domination(S: SampleSet, dist: JointDistribution,
                              cfg: SmoothingConfig = SmoothingConfig(0.5)) -> DominationReport:
    """Check smoothed-empirical >= half smoothed-true, entrywise on both marginals.

    worst_ratio is the minimum of (smoothed empirical) / (smoothed true) over
    all rows and columns; the inequality holds iff it is at least one half.
    """
    smoothed_true = smooth(from_distribution(dist), cfg)
    smoothed_emp = smooth(empirical_marginals(S, dist.n, dist.m), cfg)
    ratios = []
    for emp, true in ((smoothed_emp.row, smoothed_true.row),
                      (smoothed_emp.col, smoothed_true.col)):
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(true > 0, emp / np.where(true > 0, true, 1.0), math.inf)
        ratios.append(ratio)
    worst = float(min(r.min() for r in ratios))
    return DominationReport(holds=bool(worst >= 0.5 - 1e-12), worst_ratio=worst)
