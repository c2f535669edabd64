"""Pairwise log-linear model of the partitioned density ratio.

The unnormalized log-ratio of a sample x is score(x) = sum over pairs of
theta_t . psi(x_u, x_v).  The normalizer is estimated self-consistently as
the mean of exp(score) over permuted two-sample recombinations x^[j,k]
(group 1 from row j, group 2 from row k, j != k), so the fitted ratio
averages to one over those pairs by construction.

The fitted objective is

    nll(theta) = -(1/n) sum_i score(x_i) + log normalizer_hat(theta)

whose gradient is the permuted-pair softmax-weighted feature mean minus the
per-sample feature mean.  A raw variant with an unaveraged data term is
available for reporting; it rescales the penalty by n but changes nothing
else.  All pair sums run in the log domain.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import _kernels
from .core import (
    Dataset,
    FeatureMap,
    PairIndex,
    build_pair_index,
    observed_feature_bounds,
    pair_feature_matrix,
    permuted_matrix,
)
from .errors import DimensionError, NumericError, SizeError

HESSIAN_DIM_CAP = 4096


@dataclass(frozen=True)
class PairPolicy:
    """How permuted pairs are enumerated for the normalizer estimate.

    "all_ordered" uses every ordered pair j != k.  "subsample" draws up to
    ``cap`` distinct ordered pairs with a fixed seed.  "auto" (default)
    switches from all_ordered to subsample once n exceeds ``threshold``.
    """

    kind: str = "auto"
    seed: int = 0
    cap: int = 40_000
    threshold: int = 200

    def __post_init__(self):
        if self.kind not in ("auto", "all_ordered", "subsample"):
            raise DimensionError(f"unknown pair policy {self.kind!r}")
        if self.cap < 1 or self.threshold < 2:
            raise DimensionError("pair policy needs cap >= 1 and threshold >= 2")


def select_ordered_pairs(n: int, policy: PairPolicy | None = None):
    """Ordered index pairs (j, k), j != k, per the policy; deterministic."""
    policy = policy or PairPolicy()
    total = n * (n - 1)
    kind = policy.kind
    if kind == "auto":
        kind = "all_ordered" if n <= policy.threshold else "subsample"
    if kind == "subsample" and total > policy.cap:
        rng = np.random.default_rng(policy.seed)
        codes = np.empty(0, dtype=np.int64)
        while codes.size < policy.cap:
            draw = rng.integers(0, total, size=2 * policy.cap, dtype=np.int64)
            codes = np.unique(np.concatenate([codes, draw]))
        codes = codes[: policy.cap]
    else:
        codes = np.arange(total, dtype=np.int64)
    j_idx = codes // (n - 1)
    rem = codes % (n - 1)
    k_idx = rem + (rem >= j_idx)
    return j_idx, k_idx


@dataclass(frozen=True, eq=False)
class ParamBlocks:
    """Flat parameter vector with its pair-block layout."""

    flat: np.ndarray
    index: PairIndex

    def __post_init__(self):
        flat = np.array(self.flat, dtype=np.float64).ravel()
        if flat.shape[0] != self.index.dim:
            raise DimensionError(
                f"flat vector has {flat.shape[0]} entries, index dimension is {self.index.dim}"
            )
        flat.setflags(write=False)
        object.__setattr__(self, "flat", flat)

    @classmethod
    def zeros(cls, index: PairIndex) -> "ParamBlocks":
        return cls(np.zeros(index.dim), index)

    def block(self, pair) -> np.ndarray:
        return self.flat[self.index.slice_of(pair)]

    def block_norms(self) -> np.ndarray:
        return _kernels.block_norms(self.flat, self.index.block_dim)

    def nonzero_pairs(self) -> tuple[tuple[int, int], ...]:
        # exact-zero test; squaring inside a norm would underflow subnormals
        nz = (self.flat.reshape(self.index.n_pairs, -1) != 0.0).any(axis=1)
        return tuple(p for p, keep in zip(self.index.pairs, nz) if keep)


@dataclass(frozen=True)
class NormalizerEstimate:
    """Permuted-pair mean of exp(score), kept in the log domain."""

    log_value: float
    pair_count: int

    @property
    def value(self) -> float:
        return float(np.exp(self.log_value))


class ModelTerms:
    """Cached feature matrices for repeated evaluations on one dataset.

    Building the per-sample and permuted-pair feature matrices dominates the
    cost of a fit, so the solver constructs this once and reuses it across
    iterations, path points, and cross-validation scoring.
    """

    def __init__(
        self,
        data: Dataset,
        feature: FeatureMap,
        index: PairIndex | None = None,
        pair_policy: PairPolicy | None = None,
    ):
        self.data = data
        self.feature = feature
        self.index = index or build_pair_index(data.m, block_dim=feature.block_dim)
        if self.index.m != data.m:
            raise DimensionError("pair index and dataset disagree on m")
        self.policy = pair_policy or PairPolicy()
        self.f_data = pair_feature_matrix(feature, data.samples, self.index)
        self.mean_f = self.f_data.mean(axis=0)
        self.pair_j, self.pair_k = select_ordered_pairs(data.n, self.policy)
        x_perm = permuted_matrix(data, self.pair_j, self.pair_k)
        self.f_perm = pair_feature_matrix(feature, x_perm, self.index)

    @property
    def n(self) -> int:
        return self.data.n

    @property
    def n_pairs_used(self) -> int:
        return self.f_perm.shape[0]

    @cached_property
    def log_pair_count(self) -> float:
        return float(np.log(self.n_pairs_used))

    def _check_flat(self, flat: np.ndarray) -> np.ndarray:
        flat = np.asarray(flat, dtype=np.float64).ravel()
        if flat.shape[0] != self.index.dim:
            raise DimensionError(
                f"parameter has {flat.shape[0]} entries, expected {self.index.dim}"
            )
        return flat

    def _guard_finite(self, scores: np.ndarray, flat: np.ndarray):
        bad = ~np.isfinite(scores)
        if not bad.any():
            return
        row = int(np.argmax(bad))
        with np.errstate(over="ignore", invalid="ignore"):
            contrib = self.f_perm[row] * flat
        per_block = np.abs(contrib.reshape(self.index.n_pairs, -1)).sum(axis=1)
        per_block = np.where(np.isfinite(per_block), per_block, np.inf)
        pair = self.index.pairs[int(np.argmax(per_block))]
        raise NumericError(
            f"non-finite score on a permuted pair; dominant block is pair {pair}"
        )

    def perm_scores(self, flat: np.ndarray) -> np.ndarray:
        flat = self._check_flat(flat)
        # overflow is caught by the guard below; the numpy warning is noise
        with np.errstate(over="ignore", invalid="ignore"):
            scores = self.f_perm @ flat
        self._guard_finite(scores, flat)
        return scores

    def log_normalizer(self, flat: np.ndarray) -> float:
        scores = self.perm_scores(flat)
        return float(_kernels.logsumexp(scores)) - self.log_pair_count

    def value(self, flat: np.ndarray, normalized: bool = True) -> float:
        flat = self._check_flat(flat)
        data_term = float(self.mean_f @ flat)
        log_norm = self.log_normalizer(flat)
        if normalized:
            return -data_term + log_norm
        return -self.n * data_term + log_norm

    def value_grad(self, flat: np.ndarray) -> tuple[float, np.ndarray]:
        """Normalized objective and its gradient in one permuted-pair pass."""
        scores = self.perm_scores(flat)
        lse, weighted_mean = _kernels.softmax_mean(scores, self.f_perm)
        value = -float(self.mean_f @ flat) + float(lse) - self.log_pair_count
        return value, weighted_mean - self.mean_f

    def softmax_weights(self, flat: np.ndarray) -> np.ndarray:
        scores = self.perm_scores(flat)
        scores = scores - scores.max()
        w = np.exp(scores)
        return w / w.sum()


def _terms_for(theta: ParamBlocks, data: Dataset, f: FeatureMap, pair_policy) -> ModelTerms:
    return ModelTerms(data, f, index=theta.index, pair_policy=pair_policy)


def unnormalized_log_ratio(theta: ParamBlocks, x: np.ndarray, f: FeatureMap) -> float:
    """score(x) = sum over pairs of theta_t . psi(x_u, x_v)."""
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.shape[0] != theta.index.m:
        raise DimensionError(f"x has {x.shape[0]} entries, model expects {theta.index.m}")
    feats = pair_feature_matrix(f, x[None, :], theta.index)
    return float(feats[0] @ theta.flat)


def normalizer_hat(
    theta: ParamBlocks,
    data: Dataset,
    f: FeatureMap,
    pair_policy: PairPolicy | None = None,
) -> NormalizerEstimate:
    """Permuted-pair estimate of the ratio-model normalizer."""
    terms = _terms_for(theta, data, f, pair_policy)
    return NormalizerEstimate(terms.log_normalizer(theta.flat), terms.n_pairs_used)


def ratio_hat(theta: ParamBlocks, x: np.ndarray, norm: NormalizerEstimate, f: FeatureMap) -> float:
    """Normalized ratio-model value at x given a normalizer estimate."""
    return float(np.exp(unnormalized_log_ratio(theta, x, f) - norm.log_value))


def negative_log_likelihood(
    theta: ParamBlocks,
    data: Dataset,
    f: FeatureMap,
    normalized: bool = True,
    pair_policy: PairPolicy | None = None,
) -> float:
    """Fitting objective; ``normalized=False`` keeps the summed data term."""
    terms = _terms_for(theta, data, f, pair_policy)
    return terms.value(theta.flat, normalized=normalized)


def gradient(
    theta: ParamBlocks,
    data: Dataset,
    f: FeatureMap,
    pair_policy: PairPolicy | None = None,
) -> np.ndarray:
    """Gradient of the normalized objective at theta."""
    terms = _terms_for(theta, data, f, pair_policy)
    return terms.value_grad(theta.flat)[1]


def _hessian_from_terms(terms: ModelTerms, flat: np.ndarray, cols: np.ndarray) -> np.ndarray:
    w = terms.softmax_weights(flat)
    sub = terms.f_perm[:, cols]
    weighted = sub * w[:, None]
    mean = weighted.sum(axis=0)
    hess = weighted.T @ sub - np.outer(mean, mean)
    return (hess + hess.T) / 2.0


def _restrict_columns(index: PairIndex, restrict) -> np.ndarray:
    if restrict is None:
        return np.arange(index.dim)
    cols = []
    for pair in restrict:
        sl = index.slice_of(pair)
        cols.extend(range(sl.start, sl.stop))
    return np.asarray(cols, dtype=np.int64)


def hessian(
    theta: ParamBlocks,
    data: Dataset,
    f: FeatureMap,
    restrict=None,
    pair_policy: PairPolicy | None = None,
    dim_cap: int = HESSIAN_DIM_CAP,
) -> np.ndarray:
    """Dense Hessian of the normalized objective, optionally block-restricted.

    The data term is linear, so this is the softmax-weighted feature
    covariance over permuted pairs (positive semidefinite).  Refuses to
    materialize more than ``dim_cap`` rows.
    """
    terms = _terms_for(theta, data, f, pair_policy)
    cols = _restrict_columns(theta.index, restrict)
    if cols.size > dim_cap:
        raise SizeError(
            f"restricted Hessian dimension {cols.size} exceeds cap {dim_cap}"
        )
    return _hessian_from_terms(terms, theta.flat, cols)


@dataclass(frozen=True)
class RatioBounds:
    min: float
    max: float


@dataclass(frozen=True)
class FeatureBoundReport:
    """Observed feature magnitudes next to any declared bounds."""

    observed_inf: float
    observed_l2: float
    declared_inf: float | None
    declared_l2: float | None

    @property
    def within_declared(self) -> bool:
        ok = True
        if self.declared_inf is not None:
            ok = ok and self.observed_inf <= self.declared_inf + 1e-12
        if self.declared_l2 is not None:
            ok = ok and self.observed_l2 <= self.declared_l2 + 1e-12
        return ok


@dataclass(frozen=True)
class DiagnosticsReport:
    """Measured analogues of the recovery conditions at a reference point.

    ``lambda_min`` is the smallest eigenvalue of the support-restricted
    Hessian; ``incoherence_margin`` is one minus the largest entrywise-L1
    norm of the complement-to-support Hessian alignment.  ``degenerate``
    marks a singular restricted Hessian, in which case the margin is NaN.
    """

    lambda_min: float
    incoherence_margin: float
    degenerate: bool
    feature_bounds: FeatureBoundReport
    ratio_bounds: RatioBounds
    support_size: int


def diagnostics(
    theta_star: ParamBlocks,
    data: Dataset,
    f: FeatureMap,
    support,
    pair_policy: PairPolicy | None = None,
    dim_cap: int = HESSIAN_DIM_CAP,
) -> DiagnosticsReport:
    """Measure restricted curvature, incoherence, and boundedness at theta_star."""
    index = theta_star.index
    support_pairs = [tuple(p) for p in support]
    if not support_pairs:
        raise DimensionError("diagnostics needs a nonempty support")
    for p in support_pairs:
        index.position(p)
    support_set = set(support_pairs)
    comp_pairs = [p for p in index.pairs if p not in support_set]

    terms = _terms_for(theta_star, data, f, pair_policy)
    s_cols = _restrict_columns(index, support_pairs)
    if s_cols.size > dim_cap:
        raise SizeError(f"support dimension {s_cols.size} exceeds cap {dim_cap}")

    w = terms.softmax_weights(theta_star.flat)
    weighted_all = terms.f_perm * w[:, None]
    mean_all = weighted_all.sum(axis=0)
    # H[:, S] in one pass; rows for the complement come from the same product
    h_cols = weighted_all.T @ terms.f_perm[:, s_cols] - np.outer(mean_all, mean_all[s_cols])
    h_ss = (h_cols[s_cols] + h_cols[s_cols].T) / 2.0

    eigvals = np.linalg.eigvalsh(h_ss)
    lambda_min = float(eigvals[0])
    scale = max(float(eigvals[-1]), 1.0)
    degenerate = lambda_min <= 1e-12 * scale

    if degenerate:
        margin = float("nan")
    elif not comp_pairs:
        margin = 1.0
    else:
        worst = 0.0
        for p in comp_pairs:
            sl = index.slice_of(p)
            rows = h_cols[sl.start : sl.stop]
            y = np.linalg.solve(h_ss, rows.T).T
            worst = max(worst, float(np.abs(y).sum()))
        margin = 1.0 - worst

    all_rows = np.vstack([data.samples, permuted_matrix(data, terms.pair_j, terms.pair_k)])
    obs_inf, obs_l2 = observed_feature_bounds(f, all_rows, index)
    bounds = FeatureBoundReport(obs_inf, obs_l2, f.bound_inf, f.bound_l2)

    log_norm = terms.log_normalizer(theta_star.flat)
    scores_data = terms.f_data @ theta_star.flat
    scores_perm = terms.perm_scores(theta_star.flat)
    log_ratios = np.concatenate([scores_data, scores_perm]) - log_norm
    ratios = RatioBounds(float(np.exp(log_ratios.min())), float(np.exp(log_ratios.max())))

    return DiagnosticsReport(
        lambda_min=lambda_min,
        incoherence_margin=margin,
        degenerate=degenerate,
        feature_bounds=bounds,
        ratio_bounds=ratios,
        support_size=len(support_pairs),
    )
