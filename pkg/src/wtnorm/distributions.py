"""Joint index distributions over an n x m grid, sampling, and transductive splits.

A :class:`JointDistribution` is a dense probability mass function over matrix
cells with cached row/column marginals.  Sampling is i.i.d. with replacement
via inverse-CDF lookup on the flattened cumulative mass, so every draw is
deterministic given a 64-bit seed.  All types are immutable after
construction and safe to share across threads.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

MASS_TOL = 1e-12


def _readonly(a: np.ndarray) -> np.ndarray:
    # Own copy so freezing never flips the writeable flag on a caller's array.
    a = np.array(a, dtype=np.float64, order="C", copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class JointDistribution:
    """Probability mass function p(i, j) over [0, n) x [0, m) with n >= m."""

    n: int
    m: int
    mass: np.ndarray
    row_marginals: np.ndarray
    col_marginals: np.ndarray

    def __post_init__(self):
        if self.n <= 0 or self.m <= 0:
            raise ValueError(f"grid must be positive, got {self.n}x{self.m}")
        if self.n < self.m:
            raise ValueError(f"convention requires n >= m, got n={self.n}, m={self.m}")
        if self.mass.shape != (self.n, self.m):
            raise ValueError(f"mass shape {self.mass.shape} != ({self.n}, {self.m})")
        if np.any(self.mass < 0):
            raise ValueError("mass entries must be nonnegative")
        total = float(self.mass.sum())
        if abs(total - 1.0) > MASS_TOL:
            raise ValueError(f"mass must sum to 1 within {MASS_TOL}, got {total!r}")
        if np.max(np.abs(self.mass.sum(axis=1) - self.row_marginals)) > MASS_TOL:
            raise ValueError("row marginals inconsistent with mass")
        if np.max(np.abs(self.mass.sum(axis=0) - self.col_marginals)) > MASS_TOL:
            raise ValueError("column marginals inconsistent with mass")

    @classmethod
    def from_mass(cls, mass) -> "JointDistribution":
        mass = _readonly(mass)
        n, m = mass.shape
        return cls(
            n=n,
            m=m,
            mass=mass,
            row_marginals=_readonly(mass.sum(axis=1)),
            col_marginals=_readonly(mass.sum(axis=0)),
        )

    def to_json_dict(self) -> dict:
        return {"n": self.n, "m": self.m, "mass": self.mass.ravel().tolist()}

    @classmethod
    def from_json_dict(cls, doc: dict) -> "JointDistribution":
        n, m = int(doc["n"]), int(doc["m"])
        mass = np.asarray(doc["mass"], dtype=np.float64).reshape(n, m)
        return cls.from_mass(mass)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh)

    @classmethod
    def load(cls, path) -> "JointDistribution":
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))


@dataclass(frozen=True)
class SampleSet:
    """An ordered multiset of observed entries: s index pairs plus values.

    Duplicates are allowed and meaningful (they are counted in empirical
    losses and marginals).
    """

    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if not (len(self.rows) == len(self.cols) == len(self.values)):
            raise ValueError("rows, cols and values must have equal length")
        if len(self.rows) == 0:
            raise ValueError("sample set must be nonempty")
        if np.any(self.rows < 0) or np.any(self.cols < 0):
            raise ValueError("indexes must be nonnegative")

    @property
    def size(self) -> int:
        return len(self.values)

    @property
    def indexes(self) -> list[tuple[int, int]]:
        return list(zip(self.rows.tolist(), self.cols.tolist()))

    @classmethod
    def from_arrays(cls, rows, cols, values) -> "SampleSet":
        rows = np.asarray(rows, dtype=np.int64).copy()
        cols = np.asarray(cols, dtype=np.int64).copy()
        rows.flags.writeable = False
        cols.flags.writeable = False
        return cls(rows=rows, cols=cols, values=_readonly(values))

    def save_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "i", "j", "value"])
            for t in range(self.size):
                writer.writerow([t, int(self.rows[t]), int(self.cols[t]),
                                 repr(float(self.values[t]))])

    @classmethod
    def load_csv(cls, path) -> "SampleSet":
        rows, cols, vals = [], [], []
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            for rec in reader:
                rows.append(int(rec["i"]))
                cols.append(int(rec["j"]))
                vals.append(float(rec["value"]))
        return cls.from_arrays(rows, cols, vals)


@dataclass(frozen=True)
class TransductivePool:
    """A fixed pool of 2s distinct observed entries split into equal halves."""

    pool_rows: np.ndarray
    pool_cols: np.ndarray
    pool_values: np.ndarray
    train: SampleSet = field(repr=False)
    test: SampleSet = field(repr=False)

    def __post_init__(self):
        two_s = len(self.pool_values)
        if self.train.size != self.test.size or self.train.size * 2 != two_s:
            raise ValueError("train and test must each hold half the pool")
        pool = set(zip(self.pool_rows.tolist(), self.pool_cols.tolist()))
        tr = set(zip(self.train.rows.tolist(), self.train.cols.tolist()))
        te = set(zip(self.test.rows.tolist(), self.test.cols.tolist()))
        if tr & te:
            raise ValueError("train and test overlap")
        if tr | te != pool:
            raise ValueError("train and test do not cover the pool")

    @property
    def size(self) -> int:
        """Half pool size s (= train size = test size)."""
        return self.train.size


def make_product(row_marginals, col_marginals) -> JointDistribution:
    """Product distribution p(i, j) = p_r(i) * p_c(j).

    The input vectors are stored as the marginals verbatim, so extracting
    them recovers the inputs bitwise.
    """
    pr = _readonly(row_marginals)
    pc = _readonly(col_marginals)
    for name, v in (("row", pr), ("col", pc)):
        if np.any(v < 0):
            raise ValueError(f"{name} marginals must be nonnegative")
        if abs(float(v.sum()) - 1.0) > MASS_TOL:
            raise ValueError(f"{name} marginals must sum to 1 within {MASS_TOL}")
    mass = _readonly(np.outer(pr, pc))
    return JointDistribution(n=len(pr), m=len(pc), mass=mass,
                             row_marginals=pr, col_marginals=pc)


def make_uniform(n: int, m: int | None = None) -> JointDistribution:
    """Uniform distribution over all n x m cells."""
    m = n if m is None else m
    return make_product(np.full(n, 1.0 / n), np.full(m, 1.0 / m))


def make_uniform_marginal_nonproduct(n: int, mixing: float, seed: int) -> JointDistribution:
    """Square distribution with exactly uniform marginals but dependent indexes.

    Convex combination of a seeded random permutation matrix (scaled by 1/n)
    with the uniform distribution: mixing=0 gives the uniform distribution,
    mixing=1 concentrates all mass on the n permutation cells.  Both mixture
    components have uniform marginals, so the result does for every mixing.
    The permutation-mixture family is one admissible choice of a non-product
    uniform-marginal distribution; nothing canonical forces it.
    """
    if not 0.0 <= mixing <= 1.0:
        raise ValueError(f"mixing must lie in [0, 1], got {mixing}")
    if n <= 0:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    mass = np.full((n, n), (1.0 - mixing) / (n * n))
    mass[np.arange(n), perm] += mixing / n
    return JointDistribution.from_mass(mass)


def sample(dist: JointDistribution, s: int, truth: np.ndarray, seed: int) -> SampleSet:
    """Draw s cells i.i.d. with replacement from dist and read values off truth.

    Inverse-CDF over the flattened cumulative mass; zero-mass cells are never
    selected and the draw sequence is a pure function of the seed.
    """
    truth = np.asarray(truth, dtype=np.float64)
    if truth.shape != (dist.n, dist.m):
        raise ValueError(f"truth shape {truth.shape} != ({dist.n}, {dist.m})")
    if s <= 0:
        raise ValueError("sample size must be positive")
    cum = np.cumsum(dist.mass.ravel())
    rng = np.random.default_rng(seed)
    u = rng.random(s) * cum[-1]
    flat = np.searchsorted(cum, u, side="right")
    flat = np.minimum(flat, dist.n * dist.m - 1)
    rows, cols = np.divmod(flat, dist.m)
    return SampleSet.from_arrays(rows, cols, truth[rows, cols])


def transductive_split(pool_indexes, truth: np.ndarray, seed: int) -> TransductivePool:
    """Split a pool of 2s distinct indexes uniformly at random into equal halves."""
    idx = np.asarray(pool_indexes, dtype=np.int64)
    if idx.ndim != 2 or idx.shape[1] != 2:
        raise ValueError("pool_indexes must be an array of (i, j) pairs")
    two_s = idx.shape[0]
    if two_s % 2 != 0 or two_s == 0:
        raise ValueError(f"pool size must be even and positive, got {two_s}")
    if len({(int(i), int(j)) for i, j in idx}) != two_s:
        raise ValueError("pool indexes must be distinct")
    truth = np.asarray(truth, dtype=np.float64)
    values = truth[idx[:, 0], idx[:, 1]]
    s = two_s // 2
    order = np.random.default_rng(seed).permutation(two_s)
    tr, te = order[:s], order[s:]
    return TransductivePool(
        pool_rows=idx[:, 0].copy(),
        pool_cols=idx[:, 1].copy(),
        pool_values=_readonly(values),
        train=SampleSet.from_arrays(idx[tr, 0], idx[tr, 1], values[tr]),
        test=SampleSet.from_arrays(idx[te, 0], idx[te, 1], values[te]),
    )
