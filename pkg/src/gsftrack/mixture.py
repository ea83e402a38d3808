"""Gaussian mixture bookkeeping for hypothesis-based tracking.

Weights live in log domain throughout; normalization uses log-sum-exp so that
prune thresholds around 1e-6 and clutter-density ratios stay representable.
Reduction follows Runnalls (2007): greedy pairwise merging by a KL upper bound.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .exceptions import EmptyPosteriorError, InvalidParameterError, NumericDegeneracyError
from .models import GaussianBelief


@dataclass(frozen=True)
class MixtureComponent:
    """One weighted Gaussian hypothesis.

    log_weight may be -inf while candidates are being assembled (for example a
    misdetection branch under p_d = 1); normalize() drops such components.
    """

    log_weight: float
    belief: GaussianBelief

    def __post_init__(self):
        object.__setattr__(self, "log_weight", float(self.log_weight))
        if np.isnan(self.log_weight):
            raise InvalidParameterError("component log_weight is NaN")


@dataclass(frozen=True)
class GaussianMixture:
    """Ordered, non-empty collection of weighted Gaussian components."""

    components: tuple[MixtureComponent, ...]

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise EmptyPosteriorError("mixture must contain at least one component")
        object.__setattr__(self, "components", comps)

    @property
    def size(self) -> int:
        return len(self.components)

    @property
    def log_weights(self) -> np.ndarray:
        return np.array([c.log_weight for c in self.components])


def normalize(mix: GaussianMixture) -> GaussianMixture:
    """Rescale weights to sum to one, dropping zero-weight components.

    Raises EmptyPosteriorError when every component has -inf log weight.
    """
    lws = mix.log_weights
    finite = np.isfinite(lws)
    if not finite.any():
        raise EmptyPosteriorError("all hypothesis weights vanished")
    shift = logsumexp(lws[finite])
    kept = tuple(
        MixtureComponent(c.log_weight - shift, c.belief)
        for c, ok in zip(mix.components, finite)
        if ok
    )
    return GaussianMixture(kept)


def prune(mix: GaussianMixture, gamma_prune: float) -> GaussianMixture:
    """Drop components with weight below gamma_prune, then renormalize.

    The max-weight component is always retained, so the result is never empty.
    Expects a normalized input.
    """
    if not 0.0 <= gamma_prune < 1.0:
        raise InvalidParameterError(f"gamma_prune must lie in [0, 1), got {gamma_prune}")
    lws = mix.log_weights
    keep = np.exp(lws) >= gamma_prune
    keep[int(np.argmax(lws))] = True
    if keep.all():
        return mix
    kept = tuple(c for c, ok in zip(mix.components, keep) if ok)
    return normalize(GaussianMixture(kept))


def merge_pair(a: MixtureComponent, b: MixtureComponent) -> MixtureComponent:
    """Moment-matched merge of two components into one.

    The merged weight is the sum; mean and covariance preserve the pair's
    first two moments exactly.
    """
    if a.belief.dim != b.belief.dim:
        raise InvalidParameterError(
            f"cannot merge components of dimension {a.belief.dim} and {b.belief.dim}"
        )
    lw = np.logaddexp(a.log_weight, b.log_weight)
    if not np.isfinite(lw):
        raise NumericDegeneracyError("cannot merge a zero-weight pair")
    # relative weights; merged moments are invariant to the common scale
    wa = float(np.exp(a.log_weight - lw))
    wb = float(np.exp(b.log_weight - lw))
    mu = wa * a.belief.mean + wb * b.belief.mean
    da = a.belief.mean - mu
    db = b.belief.mean - mu
    P = wa * (a.belief.cov + np.outer(da, da)) + wb * (b.belief.cov + np.outer(db, db))
    return MixtureComponent(float(lw), GaussianBelief(mean=mu, cov=P))


def _chol_logdet(P: np.ndarray, what: str) -> float:
    try:
        L = np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        raise NumericDegeneracyError(f"{what} covariance is not positive definite")
    return 2.0 * float(np.sum(np.log(np.diag(L))))


def merge_cost(a: MixtureComponent, b: MixtureComponent) -> float:
    """Runnalls' KL upper bound for merging a pair.

    B = 0.5 * [(w_a + w_b) ln det P_merged - w_a ln det P_a - w_b ln det P_b],
    with weights in linear domain. Zero iff the components coincide.
    """
    wa = float(np.exp(a.log_weight))
    wb = float(np.exp(b.log_weight))
    merged = merge_pair(a, b)
    ld_m = _chol_logdet(merged.belief.cov, "merged")
    ld_a = _chol_logdet(a.belief.cov, "component")
    ld_b = _chol_logdet(b.belief.cov, "component")
    return 0.5 * ((wa + wb) * ld_m - wa * ld_a - wb * ld_b)


def _batch_logdet(P: np.ndarray, what: str) -> np.ndarray:
    try:
        L = np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        raise NumericDegeneracyError(f"{what} covariance is not positive definite")
    return 2.0 * np.sum(np.log(np.diagonal(L, axis1=-2, axis2=-1)), axis=-1)


def _pair_costs(
    lw: np.ndarray,
    means: np.ndarray,
    covs: np.ndarray,
    lds: np.ndarray,
    ii: np.ndarray,
    jj: np.ndarray,
) -> np.ndarray:
    """merge_cost for index pairs (ii, jj), batched over the pair axis.

    Mirrors merge_pair/merge_cost operation for operation so the batched
    costs equal the scalar ones bit for bit (argmin tie-breaks depend on it).
    """
    lw_sum = np.logaddexp(lw[ii], lw[jj])
    fa = np.exp(lw[ii] - lw_sum)[:, None]
    fb = np.exp(lw[jj] - lw_sum)[:, None]
    mu = fa * means[ii] + fb * means[jj]
    da = means[ii] - mu
    db = means[jj] - mu
    Pm = fa[:, :, None] * (covs[ii] + da[:, :, None] * da[:, None, :]) + fb[
        :, :, None
    ] * (covs[jj] + db[:, :, None] * db[:, None, :])
    ld_m = _batch_logdet(Pm, "merged")
    wa = np.exp(lw[ii])
    wb = np.exp(lw[jj])
    return 0.5 * ((wa + wb) * ld_m - wa * lds[ii] - wb * lds[jj])


def reduce_runnalls(mix: GaussianMixture, n_max: int) -> GaussianMixture:
    """Greedily merge minimum-cost pairs until at most n_max components remain.

    Ties pick the lowest (i, j) index pair; the merged component takes the
    first member's slot. Total weight and the mixture mean are preserved.
    Pair costs are computed batched and maintained incrementally: after a
    merge only the new component's row changes.
    """
    if n_max < 1:
        raise InvalidParameterError(f"n_max must be >= 1, got {n_max}")
    if mix.size <= n_max:
        return mix
    comps = list(mix.components)
    n = len(comps)
    lw = np.array([c.log_weight for c in comps])
    means = np.stack([c.belief.mean for c in comps])
    covs = np.stack([c.belief.cov for c in comps])
    lds = _batch_logdet(covs, "component")

    cost = np.full((n, n), np.inf)
    iu, ju = np.triu_indices(n, k=1)
    cost[iu, ju] = _pair_costs(lw, means, covs, lds, iu, ju)

    while len(comps) > n_max:
        # argmin scans row-major, so equal costs resolve to the lowest (i, j)
        i, j = np.unravel_index(int(np.argmin(cost)), cost.shape)
        merged = merge_pair(comps[i], comps[j])
        comps[i] = merged
        del comps[j]
        keep = np.ones(len(lw), dtype=bool)
        keep[j] = False
        lw = lw[keep]
        means = means[keep]
        covs = covs[keep]
        lds = lds[keep]
        cost = cost[keep][:, keep]
        lw[i] = merged.log_weight
        means[i] = merged.belief.mean
        covs[i] = merged.belief.cov
        lds[i] = _chol_logdet(merged.belief.cov, "merged")
        others = np.array([k for k in range(len(comps)) if k != i], dtype=int)
        if others.size:
            ii = np.minimum(others, i)
            jj = np.maximum(others, i)
            cost[ii, jj] = _pair_costs(lw, means, covs, lds, ii, jj)
    return GaussianMixture(tuple(comps))


def mmse_estimate(mix: GaussianMixture) -> GaussianBelief:
    """Moment-matched single Gaussian of a normalized mixture.

    Its mean is the minimum-mean-square-error point estimate.
    """
    w = np.exp(mix.log_weights)
    means = np.stack([c.belief.mean for c in mix.components])
    mu = w @ means
    P = np.zeros((mu.shape[0], mu.shape[0]))
    for wi, c in zip(w, mix.components):
        d = c.belief.mean - mu
        P += wi * (c.belief.cov + np.outer(d, d))
    return GaussianBelief(mean=mu, cov=P)
