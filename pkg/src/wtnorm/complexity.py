"""Rademacher-complexity estimation and the spectral bound diagnostics.

The empirical Rademacher complexity of a weighted trace-norm ball reduces,
by trace/spectral norm duality, to the expected spectral norm of a random
sign combination of weighted single-entry matrices on the sampled cells.
That expectation is estimated by Monte Carlo over sign vectors; the
companion diagnostics evaluate the almost-sure spectral ceiling R and the
variance proxy sigma^2 that drive the matrix tail bound, together with the
three theoretical rate regimes.  All rates are reported with universal
constants set to 1 and natural logs, so only shapes are comparable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .distributions import JointDistribution, SampleSet
from .solvers import LossSpec
from .weighting import MarginalWeights, NormBudget

# Exact SVD below this size; seeded power iteration above.
EXACT_SPECTRAL_MAX = 128
DEFAULT_NUM_DRAWS = 64


@dataclass(frozen=True)
class RademacherEstimate:
    mean: float
    std_error: float
    num_sign_draws: int

    def __post_init__(self):
        if self.mean < 0 or self.std_error < 0:
            raise ValueError("estimate and its error must be nonnegative")


@dataclass(frozen=True)
class BoundDiagnostics:
    R_value: float
    sigma_sq: float
    predicted_rate: float

    def __post_init__(self):
        if min(self.R_value, self.sigma_sq, self.predicted_rate) < 0:
            raise ValueError("diagnostics must be nonnegative")


def spectral_norm(A: np.ndarray, seed: int = 0, tol: float = 1e-8,
                  max_iters: int = 5000) -> float:
    """Largest singular value of A.

    Exact for small matrices; otherwise power iteration on the Gram matrix
    with a seeded random start and relative tolerance tol.
    """
    A = np.asarray(A, dtype=np.float64)
    if max(A.shape) <= EXACT_SPECTRAL_MAX:
        return float(np.linalg.svd(A, compute_uv=False)[0])
    if A.shape[0] < A.shape[1]:
        A = A.T
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(A.shape[1])
    v /= np.linalg.norm(v)
    prev = 0.0
    for _ in range(max_iters):
        u = A @ v
        v = A.T @ u
        norm = np.linalg.norm(v)
        if norm == 0.0:
            return 0.0
        v /= norm
        cur = math.sqrt(norm)
        if abs(cur - prev) <= tol * max(cur, 1e-30):
            return cur
        prev = cur
    return prev


def estimate_rademacher(S: SampleSet, w: MarginalWeights, budget: NormBudget,
                        num_draws: int = DEFAULT_NUM_DRAWS, seed: int = 0) -> RademacherEstimate:
    """Monte-Carlo estimate of the empirical Rademacher complexity of the ball.

    Each draw places random signs on the sampled cells scaled by
    1/sqrt(row_weight * col_weight), takes the spectral norm, and the mean is
    scaled by sqrt(r)/s.  The spectral norm is sign-flip invariant, so the
    estimate is unchanged under global negation of the draws.
    """
    if num_draws < 1:
        raise ValueError("num_draws must be at least 1")
    if np.any(S.rows >= w.n) or np.any(S.cols >= w.m):
        raise ValueError("sample indexes exceed the weights' grid")
    wr = w.row[S.rows]
    wc = w.col[S.cols]
    if np.any(wr == 0) or np.any(wc == 0):
        raise ValueError("zero marginal weight at a sampled index")
    coef = 1.0 / np.sqrt(wr * wc)
    rng = np.random.default_rng(seed)
    norms = np.empty(num_draws)
    M = np.zeros((w.n, w.m))
    for d in range(num_draws):
        signs = rng.integers(0, 2, size=S.size) * 2.0 - 1.0
        M[:] = 0.0
        np.add.at(M, (S.rows, S.cols), signs * coef)
        norms[d] = spectral_norm(M, seed=seed + d + 1)
    scale = budget.radius / S.size
    mean = scale * float(norms.mean())
    std_error = scale * float(norms.std(ddof=1) / math.sqrt(num_draws)) if num_draws > 1 else 0.0
    return RademacherEstimate(mean=mean, std_error=std_error, num_sign_draws=num_draws)


def bound_diagnostics(dist: JointDistribution, w: MarginalWeights, s: int,
                      budget: NormBudget) -> BoundDiagnostics:
    """Spectral ceiling R, variance proxy sigma^2, and the implied rate.

    R is the largest magnitude any single reweighted entry can take; sigma^2
    is s times the worse of the maximal row and column sums of
    p(i,j)/(row_weight * col_weight); the predicted rate combines them as
    (sqrt(r)/s) * (sqrt(sigma^2 log n) + R log n).
    """
    if dist.n != w.n or dist.m != w.m:
        raise ValueError("distribution and weights disagree on the grid")
    if not w.strictly_positive:
        raise ValueError("bound diagnostics require strictly positive weights")
    R_value = 1.0 / math.sqrt(float(w.row.min()) * float(w.col.min()))
    ratio = dist.mass / (w.row[:, None] * w.col[None, :])
    sigma_sq = s * float(max(ratio.sum(axis=1).max(), ratio.sum(axis=0).max()))
    logn = math.log(dist.n)
    predicted = (budget.radius / s) * (math.sqrt(sigma_sq * logn) + R_value * logn)
    return BoundDiagnostics(R_value=R_value, sigma_sq=sigma_sq, predicted_rate=predicted)


def rate_table(n: int, m: int, s: int, budget: NormBudget, loss: LossSpec) -> dict[str, float]:
    """The three theoretical excess-error rate regimes, constants set to 1.

    Product distributions and uniform-marginal distributions obey the
    square-root rate for any Lipschitz loss; arbitrary distributions obey the
    cube-root rate when the loss is bounded and only the trivial constant
    bound otherwise.
    """
    base = budget.r * max(n, m) * math.log(max(n, m)) / s
    sqrt_rate = math.sqrt(base)
    arbitrary = base ** (1.0 / 3.0) if loss.is_bounded else 1.0
    return {
        "product": sqrt_rate,
        "uniform_marginals": sqrt_rate,
        "arbitrary": arbitrary,
    }
