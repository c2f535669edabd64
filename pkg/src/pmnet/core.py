"""Data model: partitioned datasets, pair indexing, permuted samples, features.

Variables are split into two fixed groups.  Model parameters live on
unordered variable pairs ``(u, v)`` with ``u < v`` (optionally ``u == v``),
each pair carrying a block of ``block_dim`` coefficients.  Flat parameter
vectors are laid out pair-major in the lexicographic order of ``pairs``.
"""

from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

from . import _kernels
from .errors import DimensionError, DomainError

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"


@dataclass(frozen=True)
class Partition:
    """Two disjoint ordered groups of column indices covering 0..m-1."""

    group1: tuple[int, ...]
    group2: tuple[int, ...]

    def __post_init__(self):
        g1 = tuple(int(i) for i in self.group1)
        g2 = tuple(int(i) for i in self.group2)
        object.__setattr__(self, "group1", g1)
        object.__setattr__(self, "group2", g2)
        if not g1 or not g2:
            raise DimensionError("both groups must be nonempty")
        seen = set(g1) | set(g2)
        if len(seen) != len(g1) + len(g2):
            raise DimensionError("groups must be disjoint without repeats")
        if seen != set(range(len(seen))):
            raise DimensionError("groups must cover exactly 0..m-1")

    @property
    def m(self) -> int:
        return len(self.group1) + len(self.group2)

    @cached_property
    def group2_mask(self) -> np.ndarray:
        mask = np.zeros(self.m, dtype=bool)
        mask[list(self.group2)] = True
        mask.setflags(write=False)
        return mask

    def is_cross(self, u: int, v: int) -> bool:
        """True when u and v fall in different groups."""
        return bool(self.group2_mask[u] != self.group2_mask[v])


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable (n, m) sample matrix with its variable partition.

    ``domain_tag`` is "continuous" or "categorical"; categorical data must be
    integer-coded in [0, categories).
    """

    samples: np.ndarray
    partition: Partition
    domain_tag: str = CONTINUOUS
    categories: int | None = None

    def __post_init__(self):
        x = np.array(self.samples, dtype=np.float64, order="C")
        if x.ndim != 2:
            raise DimensionError(f"samples must be 2-d, got ndim={x.ndim}")
        if x.shape[0] < 2:
            raise DimensionError("need at least two samples")
        if x.shape[1] != self.partition.m:
            raise DimensionError(
                f"samples have {x.shape[1]} columns, partition covers {self.partition.m}"
            )
        if self.domain_tag not in (CONTINUOUS, CATEGORICAL):
            raise DomainError(f"unknown domain_tag {self.domain_tag!r}")
        if self.domain_tag == CATEGORICAL:
            if self.categories is None or self.categories < 2:
                raise DomainError("categorical data needs categories >= 2")
            if not np.all(np.isfinite(x)) or np.any(x != np.floor(x)):
                raise DomainError("categorical data must be integer-coded")
            if x.min() < 0 or x.max() >= self.categories:
                raise DomainError(
                    f"categorical codes must lie in [0, {self.categories})"
                )
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def m(self) -> int:
        return self.samples.shape[1]

    def subset(self, rows) -> "Dataset":
        """New dataset over the given row indices (same partition/domain)."""
        return Dataset(self.samples[np.asarray(rows)], self.partition, self.domain_tag, self.categories)


@dataclass(frozen=True)
class PairIndex:
    """Lexicographic index of parameter pairs and their flat-vector layout."""

    pairs: tuple[tuple[int, int], ...]
    block_dim: int
    m: int
    include_diagonal: bool

    @property
    def n_pairs(self) -> int:
        return len(self.pairs)

    @property
    def dim(self) -> int:
        return len(self.pairs) * self.block_dim

    @cached_property
    def _position(self) -> dict:
        return {pair: t for t, pair in enumerate(self.pairs)}

    @cached_property
    def u_idx(self) -> np.ndarray:
        return np.array([u for u, _ in self.pairs], dtype=np.int64)

    @cached_property
    def v_idx(self) -> np.ndarray:
        return np.array([v for _, v in self.pairs], dtype=np.int64)

    def position(self, pair: tuple[int, int]) -> int:
        try:
            return self._position[pair]
        except KeyError:
            raise DimensionError(f"pair {pair} is not in the index") from None

    def slice_of(self, pair) -> slice:
        """Flat-vector slice of one block; accepts a pair tuple or position."""
        t = pair if isinstance(pair, (int, np.integer)) else self.position(tuple(pair))
        if not 0 <= t < len(self.pairs):
            raise DimensionError(f"block position {t} out of range")
        return slice(t * self.block_dim, (t + 1) * self.block_dim)

    def cross_mask(self, partition: Partition) -> np.ndarray:
        """Boolean per-pair mask: True where the pair straddles the groups."""
        if partition.m != self.m:
            raise DimensionError("partition and index disagree on m")
        mask2 = partition.group2_mask
        return mask2[self.u_idx] != mask2[self.v_idx]


def build_pair_index(m: int, include_diagonal: bool = False, block_dim: int = 1) -> PairIndex:
    """All variable pairs u < v (u <= v when include_diagonal) over m columns."""
    if m < 2:
        raise DimensionError(f"need at least two variables, got m={m}")
    if block_dim < 1:
        raise DimensionError(f"block_dim must be >= 1, got {block_dim}")
    pairs = []
    for u in range(m):
        start = u if include_diagonal else u + 1
        for v in range(start, m):
            pairs.append((u, v))
    return PairIndex(tuple(pairs), block_dim, m, include_diagonal)


@dataclass(frozen=True, eq=False)
class PermutedSample:
    """Hybrid sample: group-1 coordinates from row j, group-2 from row k."""

    source_j: int
    source_k: int
    value: np.ndarray


def permuted_pair(data: Dataset, j: int, k: int) -> PermutedSample:
    """Build the permuted sample x^[j,k] from two distinct dataset rows."""
    n = data.n
    if not (0 <= j < n and 0 <= k < n):
        raise IndexError(f"row indices ({j}, {k}) out of range for n={n}")
    if j == k:
        raise IndexError("permuted sample requires two distinct rows")
    mask2 = data.partition.group2_mask
    value = np.where(mask2, data.samples[k], data.samples[j])
    value.setflags(write=False)
    return PermutedSample(j, k, value)


def permuted_matrix(data: Dataset, j_idx: np.ndarray, k_idx: np.ndarray) -> np.ndarray:
    """Vectorized permuted samples: row r mixes rows j_idx[r] and k_idx[r]."""
    mask2 = data.partition.group2_mask
    return np.where(mask2[None, :], data.samples[k_idx], data.samples[j_idx])


PRODUCT = "product"
SQUARED_PRODUCT = "squared_product"
KRONECKER_DELTA = "kronecker_delta"
TABLE = "table"

_BUILTIN_KINDS = (PRODUCT, SQUARED_PRODUCT, KRONECKER_DELTA)


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """Pairwise feature psi(x_u, x_v) -> R^block_dim.

    Built-in kinds are scalar (block_dim 1): product x_u*x_v, squared product
    x_u^2*x_v^2, and the match indicator 1(x_u == x_v).  ``table`` carries an
    explicit (categories, categories, block_dim) lookup for coded data.
    Bounds are declared when known and can be measured from data otherwise.
    """

    kind: str
    block_dim: int = 1
    bound_inf: float | None = None
    bound_l2: float | None = None
    table: np.ndarray | None = None
    categories: int | None = None

    def __post_init__(self):
        if self.kind not in _BUILTIN_KINDS + (TABLE,):
            raise DomainError(f"unknown feature kind {self.kind!r}")
        if self.kind in _BUILTIN_KINDS and self.block_dim != 1:
            raise DimensionError(f"{self.kind} features are scalar (block_dim 1)")
        if self.kind == TABLE:
            if self.table is None:
                raise DomainError("table features need an explicit table")
            tab = np.array(self.table, dtype=np.float64)
            if tab.ndim != 3 or tab.shape[0] != tab.shape[1]:
                raise DimensionError("table must have shape (k, k, block_dim)")
            if tab.shape[2] != self.block_dim:
                raise DimensionError("table depth must equal block_dim")
            tab.setflags(write=False)
            object.__setattr__(self, "table", tab)
            object.__setattr__(self, "categories", tab.shape[0])

    @classmethod
    def product(cls) -> "FeatureMap":
        return cls(PRODUCT)

    @classmethod
    def squared_product(cls) -> "FeatureMap":
        return cls(SQUARED_PRODUCT)

    @classmethod
    def kronecker_delta(cls, categories: int | None = None) -> "FeatureMap":
        return cls(KRONECKER_DELTA, bound_inf=1.0, bound_l2=1.0, categories=categories)

    @classmethod
    def from_table(cls, table) -> "FeatureMap":
        tab = np.asarray(table, dtype=np.float64)
        bound_inf = float(np.abs(tab).max())
        bound_l2 = float(np.sqrt((tab**2).sum(axis=2)).max())
        return cls(TABLE, block_dim=tab.shape[2], bound_inf=bound_inf, bound_l2=bound_l2, table=tab)


def _check_codes(f: FeatureMap, values: np.ndarray):
    if not np.all(values == np.floor(values)):
        raise DomainError("categorical feature applied to non-integer values")
    if values.min() < 0 or values.max() >= f.categories:
        raise DomainError(f"categorical codes must lie in [0, {f.categories})")


def feature_eval(f: FeatureMap, x: np.ndarray, pair: tuple[int, int]) -> np.ndarray:
    """Evaluate one feature block on a single sample vector."""
    x = np.asarray(x, dtype=np.float64)
    u, v = pair
    if not (0 <= u < x.shape[0] and 0 <= v < x.shape[0]):
        raise DimensionError(f"pair {pair} out of range for m={x.shape[0]}")
    a, b = x[u], x[v]
    if f.kind == PRODUCT:
        return np.array([a * b])
    if f.kind == SQUARED_PRODUCT:
        return np.array([a * a * b * b])
    if f.kind == KRONECKER_DELTA:
        if f.categories is not None:
            _check_codes(f, np.array([a, b]))
        return np.array([1.0 if a == b else 0.0])
    _check_codes(f, np.array([a, b]))
    return np.array(f.table[int(a), int(b)])


def pair_feature_matrix(f: FeatureMap, x_rows: np.ndarray, index: PairIndex) -> np.ndarray:
    """Feature matrix over sample rows: shape (rows, n_pairs * block_dim)."""
    x_rows = np.ascontiguousarray(x_rows, dtype=np.float64)
    if x_rows.ndim != 2 or x_rows.shape[1] != index.m:
        raise DimensionError(
            f"rows have {x_rows.shape[-1] if x_rows.ndim else 0} columns, index expects {index.m}"
        )
    if f.block_dim != index.block_dim:
        raise DimensionError("feature block_dim and index block_dim differ")
    u, v = index.u_idx, index.v_idx
    if f.kind == PRODUCT:
        return _kernels.product_features(x_rows, u, v)
    if f.kind == SQUARED_PRODUCT:
        return _kernels.squared_product_features(x_rows, u, v)
    if f.kind == KRONECKER_DELTA:
        if f.categories is not None:
            _check_codes(f, x_rows)
        return _kernels.delta_features(x_rows, u, v)
    _check_codes(f, x_rows)
    codes = x_rows.astype(np.int64)
    out = f.table[codes[:, u], codes[:, v]]
    return out.reshape(x_rows.shape[0], index.dim)


def observed_feature_bounds(f: FeatureMap, x_rows: np.ndarray, index: PairIndex) -> tuple[float, float]:
    """Measured (sup-norm, 2-norm) feature bounds over the given rows."""
    mat = pair_feature_matrix(f, x_rows, index)
    blocks = np.abs(mat).reshape(mat.shape[0], index.n_pairs, index.block_dim)
    bound_inf = float(blocks.max())
    bound_l2 = float(np.sqrt((blocks**2).sum(axis=2)).max())
    return bound_inf, bound_l2


def with_measured_bounds(f: FeatureMap, data: Dataset, index: PairIndex) -> FeatureMap:
    """Copy of ``f`` with bounds filled in from a dataset scan when missing."""
    if f.bound_inf is not None and f.bound_l2 is not None:
        return f
    bound_inf, bound_l2 = observed_feature_bounds(f, data.samples, index)
    return replace(
        f,
        bound_inf=f.bound_inf if f.bound_inf is not None else bound_inf,
        bound_l2=f.bound_l2 if f.bound_l2 is not None else bound_l2,
    )
