"""Degenerate sampling instances where the plain weighted norm provably fails.

Two constructions on square grids, each pairing a target matrix with a
non-product sampling distribution and an explicit zero-training-loss
estimator inside the unit weighted-trace-norm ball whose expected loss stays
large.  The first uses a bounded (clipped absolute) loss and exhibits
cube-root excess error in n/s; the second uses the unbounded absolute loss
and exhibits constant excess error.  Closed-form expectations serve as
Monte-Carlo oracles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bench import exact_expected_loss
from .distributions import JointDistribution, SampleSet, sample
from .solvers import LossSpec
from .weighting import from_distribution, weighted_trace_norm

NORM_TOL = 1e-9


@dataclass(frozen=True)
class Example1Instance:
    """Sign block of height a = floor((2s/n)^(2/3)) sampled thinly.

    The sampling mass is 1/(2s) on each cell of the a x n/2 sign block and
    uniform on the complementary (n-a) x n/2 block, zero elsewhere, so the
    whole sign block is expected to be seen only about half the time.
    """

    n: int
    s: int
    a: int
    A: np.ndarray
    Y: np.ndarray
    dist: JointDistribution

    @property
    def block_mass(self) -> float:
        return self.a * self.n / (4.0 * self.s)


@dataclass(frozen=True)
class Example2Instance:
    """A single cell of probability exactly 1/s whose row and column are
    otherwise unsampled, so the weighted norm cannot see a spike there."""

    n: int
    s: int
    Y: np.ndarray
    A: np.ndarray
    dist: JointDistribution


def build_example1(n: int, s: int, seed: int) -> Example1Instance:
    if n % 2 != 0:
        raise ValueError("n must be even")
    a = int(math.floor((2.0 * s / n) ** (2.0 / 3.0)))
    if a < 1:
        raise ValueError(f"block height floor((2s/n)^(2/3)) = {a} < 1; increase s")
    if a >= n:
        raise ValueError("block height must stay below n; decrease s")
    block_mass = a * n / (4.0 * s)
    if block_mass >= 1.0:
        raise ValueError("sign-block mass a*n/(4s) must stay below 1")
    half = n // 2
    A = np.random.default_rng(seed).integers(0, 2, size=(a, half)) * 2.0 - 1.0
    Y = np.zeros((n, n))
    Y[:a, :half] = A
    mass = np.zeros((n, n))
    mass[:a, :half] = 1.0 / (2.0 * s)
    mass[a:, half:] = (1.0 - block_mass) / ((n - a) * half)
    dist = JointDistribution.from_mass(mass)
    norm = weighted_trace_norm(Y, from_distribution(dist))
    if norm > 1.0 + NORM_TOL:
        raise AssertionError(f"target norm {norm} exceeds 1")
    return Example1Instance(n=n, s=s, a=a, A=A, Y=Y, dist=dist)


def example1_erm(inst: Example1Instance, S: SampleSet) -> np.ndarray:
    """The observed-entries-only estimator: target values on S, zero elsewhere.

    It matches every observed entry, so its training loss is exactly zero,
    and it stays inside the unit ball, so it is an empirical risk minimizer.
    """
    Yhat = np.zeros_like(inst.Y)
    Yhat[S.rows, S.cols] = inst.Y[S.rows, S.cols]
    norm = weighted_trace_norm(Yhat, from_distribution(inst.dist))
    if norm > 1.0 + NORM_TOL:
        raise AssertionError(f"ERM norm {norm} exceeds 1")
    return Yhat


def example1_expected_loss(inst: Example1Instance) -> float:
    """Exact expectation of the ERM's expected loss over the sample draw.

    Each sign cell is missed by all s draws with probability (1 - 1/(2s))^s
    and each missed cell contributes mass 1/(2s) at loss 1.
    """
    miss = (1.0 - 1.0 / (2.0 * inst.s)) ** inst.s
    return (inst.a * inst.n / 2.0) * miss / (2.0 * inst.s)


def example1_lower_bound(n: int, s: int) -> float:
    """The cube-root floor (1/8) (n/s)^(1/3) on the expected loss."""
    return 0.125 * (n / s) ** (1.0 / 3.0)


def run_example1_trials(inst: Example1Instance, trials: int, seed: int) -> np.ndarray:
    """Expected loss of the constructed ERM across independent sample draws."""
    loss = LossSpec.clipped_absolute()
    out = np.empty(trials)
    for t in range(trials):
        S = sample(inst.dist, inst.s, inst.Y, seed + t)
        out[t] = exact_expected_loss(example1_erm(inst, S), inst.Y, inst.dist, loss)
    return out


def build_example2(n: int, s: int) -> Example2Instance:
    if s < 2:
        raise ValueError("s must be at least 2")
    if n < 2:
        raise ValueError("n must be at least 2")
    Y = np.zeros((n, n))
    A = np.zeros((n, n))
    A[0, 0] = float(s)
    mass = np.zeros((n, n))
    mass[0, 0] = 1.0 / s
    mass[1:, 1:] = (1.0 - 1.0 / s) / ((n - 1) * (n - 1))
    dist = JointDistribution.from_mass(mass)
    norm = weighted_trace_norm(A, from_distribution(dist))
    if abs(norm - 1.0) > NORM_TOL:
        raise AssertionError(f"adversary norm {norm} != 1")
    return Example2Instance(n=n, s=s, Y=Y, A=A, dist=dist)


def example2_erm(inst: Example2Instance, S: SampleSet) -> np.ndarray:
    """The spike matrix when its cell went unobserved, else the zero matrix.

    Both choices interpolate the observed entries (which are all zero), and
    the spike has unit weighted norm, so each is an empirical risk minimizer;
    the spike carries expected absolute loss exactly 1.
    """
    observed_corner = bool(np.any((S.rows == 0) & (S.cols == 0)))
    return inst.Y.copy() if observed_corner else inst.A.copy()


def example2_miss_probability(s: int) -> float:
    """Chance that s i.i.d. draws all avoid the probability-1/s cell."""
    return (1.0 - 1.0 / s) ** s


def run_example2_trials(inst: Example2Instance, trials: int, seed: int) -> np.ndarray:
    loss = LossSpec.absolute()
    out = np.empty(trials)
    for t in range(trials):
        S = sample(inst.dist, inst.s, inst.Y, seed + t)
        out[t] = exact_expected_loss(example2_erm(inst, S), inst.Y, inst.dist, loss)
    return out
