"""Completion-model fitting under weighted trace-norm regularization.

Four fitting routes:

* ``fit_proximal``: accelerated proximal gradient (impute-then-shrink) on the
  squared-loss objective penalized by the weighted trace-norm, run in the
  weighted coordinate system where the penalty prox is plain singular-value
  soft-thresholding.
* ``fit_factored_sgd``: rank-capped factorization U V^T with the weighted
  Frobenius surrogate penalty, minimized by shuffled minibatch passes.
* ``min_norm_fit``: smallest weighted trace-norm subject to a training-loss
  ceiling, by operator splitting between singular-value shrinkage and an
  exact projection onto the loss ellipsoid.
* ``erm_in_ball``: projected subgradient descent over the weighted
  trace-norm ball, for arbitrary Lipschitz losses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .distributions import SampleSet
from .weighting import (
    MarginalWeights,
    NormBudget,
    project_to_ball,
    reweight,
    singular_values,
    unweight,
)


class DivergenceError(RuntimeError):
    """Raised when an iterative solve blows past 10x its initial objective."""


@dataclass(frozen=True)
class LossSpec:
    """Pointwise loss with its Lipschitz constant and (optional) bound.

    kind is one of squared, absolute, clipped_absolute.  The clipped loss is
    min(1, |x - y|); its bound is 1 by definition.  The squared loss carries
    the unit-domain Lipschitz constant 2.
    """

    kind: str
    lipschitz: float = 1.0
    bound: float | None = None

    def __post_init__(self):
        if self.kind not in ("squared", "absolute", "clipped_absolute"):
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if not self.lipschitz > 0:
            raise ValueError("lipschitz constant must be positive")
        if self.kind == "clipped_absolute" and self.bound != 1.0:
            raise ValueError("clipped_absolute loss is bounded by 1")

    @classmethod
    def squared(cls) -> "LossSpec":
        return cls(kind="squared", lipschitz=2.0)

    @classmethod
    def absolute(cls) -> "LossSpec":
        return cls(kind="absolute", lipschitz=1.0)

    @classmethod
    def clipped_absolute(cls) -> "LossSpec":
        return cls(kind="clipped_absolute", lipschitz=1.0, bound=1.0)

    @property
    def is_bounded(self) -> bool:
        return self.bound is not None

    def value(self, pred, target):
        d = np.asarray(pred, dtype=np.float64) - target
        if self.kind == "squared":
            return d * d
        if self.kind == "absolute":
            return np.abs(d)
        return np.minimum(1.0, np.abs(d))

    def subgrad(self, pred, target):
        """A subgradient in the prediction argument; 0 is used at kinks."""
        d = np.asarray(pred, dtype=np.float64) - target
        if self.kind == "squared":
            return 2.0 * d
        if self.kind == "absolute":
            return np.sign(d)
        return np.where(np.abs(d) < 1.0, np.sign(d), 0.0)


@dataclass(frozen=True)
class CompletionModel:
    """Either a dense estimate or a rank-k factor pair (U, V) with X = U V^T."""

    dense: np.ndarray | None = None
    factors: tuple[np.ndarray, np.ndarray] | None = None

    def __post_init__(self):
        if (self.dense is None) == (self.factors is None):
            raise ValueError("exactly one of dense or factors must be set")
        if self.factors is not None:
            U, V = self.factors
            if U.ndim != 2 or V.ndim != 2 or U.shape[1] != V.shape[1]:
                raise ValueError("factors must be (n, k) and (m, k)")
            if U.shape[1] > min(U.shape[0], V.shape[0]):
                raise ValueError("factor rank exceeds min(n, m)")

    @classmethod
    def from_dense(cls, X) -> "CompletionModel":
        return cls(dense=np.asarray(X, dtype=np.float64))

    @classmethod
    def from_factors(cls, U, V) -> "CompletionModel":
        return cls(factors=(np.asarray(U, dtype=np.float64),
                            np.asarray(V, dtype=np.float64)))

    @property
    def shape(self) -> tuple[int, int]:
        if self.dense is not None:
            return self.dense.shape
        return (self.factors[0].shape[0], self.factors[1].shape[0])

    def to_matrix(self) -> np.ndarray:
        if self.dense is not None:
            return self.dense
        U, V = self.factors
        return U @ V.T

    def to_json_dict(self) -> dict:
        if self.dense is not None:
            n, m = self.dense.shape
            return {"n": n, "m": m, "dense": self.dense.ravel().tolist()}
        U, V = self.factors
        return {"U": U.tolist(), "V": V.tolist()}

    @classmethod
    def from_json_dict(cls, doc: dict) -> "CompletionModel":
        if "dense" in doc:
            n, m = int(doc["n"]), int(doc["m"])
            return cls.from_dense(np.asarray(doc["dense"]).reshape(n, m))
        return cls.from_factors(np.asarray(doc["U"]), np.asarray(doc["V"]))


@dataclass(frozen=True)
class SolverConfig:
    lam: float = 0.0
    rank_cap: int | None = None
    max_iters: int = 200
    tol: float = 1e-9
    step_size: float = 0.005
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.rank_cap is not None and self.rank_cap < 1:
            raise ValueError("rank_cap must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")


@dataclass(frozen=True)
class NoiseConfig:
    """Additive Gaussian observation noise level for the simulation protocols."""

    nu: float = 0.0

    def __post_init__(self):
        if self.nu < 0:
            raise ValueError("nu must be nonnegative")


def _check_sample_grid(S: SampleSet, n: int, m: int) -> None:
    if np.any(S.rows >= n) or np.any(S.cols >= m):
        raise ValueError("sample indexes exceed the weights' grid")


def _require_positive_weights(w: MarginalWeights) -> None:
    if not w.strictly_positive:
        raise ValueError("this solver requires strictly positive weights "
                         "(smooth the marginals first)")


def soft_threshold_singular_values(A: np.ndarray, tau: float) -> np.ndarray:
    """SVD of A with singular values shrunk by tau and clipped at zero."""
    U, sig, Vt = np.linalg.svd(A, full_matrices=False)
    shrunk = np.maximum(sig - tau, 0.0)
    return (U * shrunk) @ Vt


def prox_weighted_trace(X: np.ndarray, w: MarginalWeights, tau: float) -> np.ndarray:
    """Prox of tau * weighted trace norm in the weighted Frobenius metric.

    Computed by change of variables: soft-threshold the singular values of
    diag(sqrt(row)) X diag(sqrt(col)) at tau and map back.
    """
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    _require_positive_weights(w)
    X = np.asarray(X, dtype=np.float64)
    if X.shape != (w.n, w.m):
        raise ValueError(f"matrix shape {X.shape} != ({w.n}, {w.m})")
    if tau == 0.0:
        return X.copy()
    return unweight(soft_threshold_singular_values(reweight(X, w), tau), w)


class _ProxProblem:
    """Squared-loss completion objective in weighted coordinates.

    With W = diag(sqrt(row)) X diag(sqrt(col)), the empirical squared loss is
    a diagonal quadratic sum_ij C_ij (W_ij / sw_ij - ybar_ij)^2 + const, where
    C aggregates duplicate draws, so the gradient and its Lipschitz constant
    are exact and cheap; the penalty prox is plain singular-value shrinkage.
    """

    def __init__(self, S: SampleSet, w: MarginalWeights):
        _require_positive_weights(w)
        _check_sample_grid(S, w.n, w.m)
        n, m = w.n, w.m
        s = S.size
        flat = S.rows * m + S.cols
        counts = np.bincount(flat, minlength=n * m).reshape(n, m)
        sums = np.bincount(flat, weights=S.values, minlength=n * m).reshape(n, m)
        self.C = counts / s
        self.Ybar = np.where(counts > 0, sums / np.maximum(counts, 1), 0.0)
        # Within-cell spread of duplicate values; constant in X but part of the
        # loss.  Computed from residuals so it is exactly zero when duplicates
        # agree (values read off one fixed matrix always do).
        resid = S.values - self.Ybar[S.rows, S.cols]
        self.const = float(resid @ resid) / s
        self.sw = np.sqrt(w.row)[:, None] * np.sqrt(w.col)[None, :]
        self.H = 2.0 * self.C / self.sw**2
        self.G0 = 2.0 * self.C * self.Ybar / self.sw
        self.L = float(self.H.max())
        self.w = w

    def loss(self, W: np.ndarray) -> float:
        d = W / self.sw - self.Ybar
        return float((self.C * d * d).sum()) + self.const

    def grad(self, W: np.ndarray) -> np.ndarray:
        return self.H * W - self.G0

    def objective(self, W: np.ndarray, lam: float) -> float:
        pen = lam * float(singular_values(W).sum()) if lam > 0 else 0.0
        return self.loss(W) + pen

    def solve(self, lam: float, W0: np.ndarray | None, max_iters: int, tol: float):
        """Monotone accelerated proximal gradient from W0 (zeros if None).

        Stops on relative objective stagnation or at max_iters.  Returns
        (W, loss, objective, iterations).
        """
        n, m = self.C.shape
        x = np.zeros((n, m)) if W0 is None else W0.copy()
        fx = self.objective(x, lam)
        y = x
        x_prev = x
        t_prev = 1.0
        step = 1.0 / self.L
        iters = 0
        for iters in range(1, max_iters + 1):
            z = soft_threshold_singular_values(y - step * self.grad(y), lam * step)
            fz = self.objective(z, lam)
            # Monotone safeguard: fall back to a plain prox-gradient step from
            # the incumbent whenever the accelerated candidate does not improve.
            if fz <= fx:
                x_new, fx_new = z, fz
            else:
                x_new = soft_threshold_singular_values(x - step * self.grad(x), lam * step)
                fx_new = self.objective(x_new, lam)
            if fx_new > fx + 1e-10 * max(1.0, abs(fx)):
                raise AssertionError("proximal objective increased; step logic broken")
            t = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t_prev**2))
            y = x_new + (t_prev / t) * (z - x_new) + ((t_prev - 1.0) / t) * (x_new - x_prev)
            x_prev, x = x, x_new
            converged = abs(fx - fx_new) <= tol * max(1.0, abs(fx_new))
            fx = fx_new
            t_prev = t
            if converged:
                break
        return x, self.loss(x), fx, iters


def fit_proximal(S: SampleSet, w: MarginalWeights, loss: LossSpec,
                 cfg: SolverConfig) -> CompletionModel:
    """Impute-then-shrink solve of empirical squared loss + lam * weighted trace norm."""
    if loss.kind != "squared":
        raise ValueError("fit_proximal handles the squared loss only")
    prob = _ProxProblem(S, w)
    W, _, _, _ = prob.solve(cfg.lam, None, cfg.max_iters, cfg.tol)
    return CompletionModel.from_dense(unweight(W, w))


def empirical_squared_loss(X: np.ndarray, S: SampleSet) -> float:
    preds = X[S.rows, S.cols]
    d = preds - S.values
    return float(d @ d) / S.size


@dataclass(frozen=True)
class MinNormResult:
    model: CompletionModel
    weighted_norm: float
    train_loss: float
    feasible: bool
    iterations: int


def _project_loss_ellipsoid(P: np.ndarray, A: np.ndarray, B: np.ndarray,
                            budget: float) -> np.ndarray:
    """Euclidean projection of P onto {X : sum A * (X - B)^2 <= budget}.

    A is the nonnegative diagonal curvature (zero on unobserved cells, which
    the constraint leaves free).  budget = 0 pins the observed cells to B
    exactly.  For budget > 0 the multiplier equation
    sum A r^2 / (1 + mu A)^2 = budget is solved by safeguarded Newton.
    """
    obs = A > 0
    R = P - B
    val = float((A[obs] * R[obs] ** 2).sum())
    if val <= budget:
        return P
    if budget == 0.0:
        X = P.copy()
        X[obs] = B[obs]
        return X
    a = A[obs]
    r2 = R[obs] ** 2

    def phi(mu):
        return float((a * r2 / (1.0 + mu * a) ** 2).sum()) - budget

    lo, hi = 0.0, 1.0 / float(a.min())
    while phi(hi) > 0:
        hi *= 2.0
    mu = hi / 2.0
    for _ in range(100):
        f = phi(mu)
        if f > 0:
            lo = mu
        else:
            hi = mu
        df = float((-2.0 * a * a * r2 / (1.0 + mu * a) ** 3).sum())
        step = mu - f / df if df != 0 else mu
        mu = step if lo < step < hi else 0.5 * (lo + hi)
        if hi - lo <= 1e-14 * max(1.0, hi):
            break
    X = P.copy()
    X[obs] = (P[obs] + mu * a * B[obs]) / (1.0 + mu * a)
    return X


def min_norm_fit(S: SampleSet, w: MarginalWeights, epsilon: float,
                 max_iters: int = 500, tol: float = 1e-8,
                 solver_max_iters: int | None = None) -> MinNormResult:
    """Minimize the weighted trace norm subject to training loss <= epsilon.

    Alternating-direction splitting between singular-value shrinkage (the
    norm term) and exact projection onto the squared-loss ellipsoid
    {X : empirical loss <= epsilon * (1 + 1e-3)}, run in weighted
    coordinates.  epsilon = 0 pins the observed entries exactly (noiseless
    interpolation); the returned iterate is always the projected one, so a
    feasible result satisfies the ceiling by construction.  If the ceiling
    lies below the best loss any matrix can achieve (inconsistent duplicate
    observations), the loss-minimizing matrix is returned flagged infeasible.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    if solver_max_iters is not None:
        max_iters = solver_max_iters
    prob = _ProxProblem(S, w)
    n, m = w.n, w.m
    feas_tol = epsilon * (1.0 + 1e-3)

    loss_at_zero = prob.loss(np.zeros((n, m)))
    if loss_at_zero <= feas_tol:
        return MinNormResult(CompletionModel.from_dense(np.zeros((n, m))),
                             0.0, loss_at_zero, True, 0)

    # Constraint in weighted coordinates: sum A (W - B)^2 <= budget, with the
    # within-cell spread of duplicate values a fixed offset of the loss.
    A = prob.C / prob.sw**2
    B = prob.Ybar * prob.sw
    budget = feas_tol - prob.const
    if budget < 0:
        guard = 1e-12 * max(1.0, float(np.mean(S.values**2)))
        if budget < -guard:
            X = B.copy()
            model = CompletionModel.from_dense(unweight(X, w))
            return MinNormResult(model, float(singular_values(X).sum()),
                                 prob.loss(X), False, 0)
        budget = 0.0

    # Project onto a hair-smaller ellipsoid so rounding in the multiplier
    # solve cannot push the achieved loss past the stated ceiling.
    budget *= 1.0 - 1e-9
    scale = max(float(np.abs(B).max()), 1e-12)
    rho = 1.0 / scale
    Z = np.zeros((n, m))
    U = np.zeros((n, m))
    X = Z
    iters = 0
    for iters in range(1, max_iters + 1):
        X = _project_loss_ellipsoid(Z - U, A, B, budget)
        Z_new = soft_threshold_singular_values(X + U, 1.0 / rho)
        U = U + X - Z_new
        prim = float(np.linalg.norm(X - Z_new))
        dual = rho * float(np.linalg.norm(Z_new - Z))
        Z = Z_new
        ref = max(float(np.linalg.norm(X)), float(np.linalg.norm(Z)), 1e-12)
        if prim <= tol * ref and dual <= tol * ref:
            break
        if iters % 10 == 0:
            if prim > 10.0 * dual:
                rho *= 2.0
                U /= 2.0
            elif dual > 10.0 * prim:
                rho /= 2.0
                U *= 2.0
    model = CompletionModel.from_dense(unweight(X, w))
    return MinNormResult(model, float(singular_values(X).sum()),
                         prob.loss(X), True, iters)


def factored_penalty(U: np.ndarray, V: np.ndarray, w: MarginalWeights) -> float:
    """Half the weighted squared Frobenius mass of the factors.

    Upper-bounds the weighted trace norm of U V^T for every factorization.
    """
    return 0.5 * (float(w.row @ (U * U).sum(axis=1)) + float(w.col @ (V * V).sum(axis=1)))


def factored_objective(U, V, S: SampleSet, w: MarginalWeights, loss: LossSpec,
                       lam: float) -> float:
    preds = np.einsum("ij,ij->i", U[S.rows], V[S.cols])
    return float(np.mean(loss.value(preds, S.values))) + lam * factored_penalty(U, V, w)


def factored_gradient(U, V, S: SampleSet, w: MarginalWeights, loss: LossSpec,
                      lam: float):
    """Analytic gradient of factored_objective in (U, V)."""
    preds = np.einsum("ij,ij->i", U[S.rows], V[S.cols])
    g = loss.subgrad(preds, S.values) / S.size
    gU = np.zeros_like(U)
    gV = np.zeros_like(V)
    np.add.at(gU, S.rows, g[:, None] * V[S.cols])
    np.add.at(gV, S.cols, g[:, None] * U[S.rows])
    gU += lam * w.row[:, None] * U
    gV += lam * w.col[:, None] * V
    return gU, gV


def fit_factored_sgd(S: SampleSet, w: MarginalWeights, loss: LossSpec,
                     cfg: SolverConfig) -> CompletionModel:
    """Rank-capped factorization trained by shuffled minibatch passes over S.

    Minimizes mean loss + (lam/2) (||diag(sqrt(row)) U||_F^2 +
    ||diag(sqrt(col)) V||_F^2).  Deterministic given cfg.seed; raises
    DivergenceError if the objective exceeds 10x its initial value.
    """
    if cfg.rank_cap is None:
        raise ValueError("fit_factored_sgd requires cfg.rank_cap")
    _require_positive_weights(w)
    _check_sample_grid(S, w.n, w.m)
    k = cfg.rank_cap
    rng = np.random.default_rng(cfg.seed)
    U = rng.standard_normal((w.n, k)) / math.sqrt(k)
    V = rng.standard_normal((w.m, k)) / math.sqrt(k)
    obj0 = factored_objective(U, V, S, w, loss, cfg.lam)
    prev = obj0
    s = S.size
    for _ in range(cfg.max_iters):
        order = rng.permutation(s)
        for start in range(0, s, cfg.batch_size):
            b = order[start:start + cfg.batch_size]
            rb, cb = S.rows[b], S.cols[b]
            preds = np.einsum("ij,ij->i", U[rb], V[cb])
            g = loss.subgrad(preds, S.values[b]) / len(b)
            gU = cfg.lam * w.row[:, None] * U
            gV = cfg.lam * w.col[:, None] * V
            np.add.at(gU, rb, g[:, None] * V[cb])
            np.add.at(gV, cb, g[:, None] * U[rb])
            U = U - cfg.step_size * gU
            V = V - cfg.step_size * gV
        obj = factored_objective(U, V, S, w, loss, cfg.lam)
        if not np.isfinite(obj) or obj > 10.0 * max(obj0, 1e-12):
            raise DivergenceError(
                f"factored SGD diverged (objective {obj:.3g} vs initial {obj0:.3g}); "
                "reduce step_size")
        if abs(prev - obj) <= cfg.tol * max(1.0, abs(obj)):
            break
        prev = obj
    return CompletionModel.from_factors(U, V)


def erm_in_ball(S: SampleSet, w: MarginalWeights, budget: NormBudget,
                loss: LossSpec, cfg: SolverConfig | None = None) -> CompletionModel:
    """Projected subgradient descent of the empirical loss over the norm ball.

    Steps c / sqrt(t) with c calibrated to the ball radius over an initial
    subgradient-norm estimate; every iterate is retracted into the ball and
    the best iterate by training loss is returned.
    """
    cfg = cfg or SolverConfig(max_iters=500)
    _check_sample_grid(S, w.n, w.m)
    n, m, s = w.n, w.m, S.size
    X = np.zeros((n, m))

    def subgrad_matrix(X):
        G = np.zeros((n, m))
        np.add.at(G, (S.rows, S.cols), loss.subgrad(X[S.rows, S.cols], S.values))
        return G / s

    def train_loss(X):
        return float(np.mean(loss.value(X[S.rows, S.cols], S.values)))

    g = subgrad_matrix(X)
    gnorm = float(np.linalg.norm(g))
    c = budget.radius / max(gnorm, 1e-12)
    best_X, best_loss = X, train_loss(X)
    for t in range(1, cfg.max_iters + 1):
        X = project_to_ball(X - (c / math.sqrt(t)) * g, w, budget)
        cur = train_loss(X)
        if cur < best_loss:
            best_X, best_loss = X, cur
        g = subgrad_matrix(X)
    return CompletionModel.from_dense(best_X)
