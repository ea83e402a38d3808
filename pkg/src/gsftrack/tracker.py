"""Single-object Gaussian sum tracking in clutter.

Each step expands every posterior component over the association variable
theta (0 = misdetection, j = detection j came from the object), weights the
hypotheses with the Gaussian evidence against a Poisson clutter background,
and reduces the resulting mixture. The conditional update is pluggable:
a plain Kalman step or the robust Student's-t variational step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .exceptions import EmptyPosteriorError, InvalidParameterError
from .kalman import kf_predict, kf_update, log_evidence
from .mixture import GaussianMixture, MixtureComponent, normalize, reduce_runnalls
from .models import GaussianBelief, LinearModel
from .rstkf import StudentTConfig, rstkf_update

KF_BACKEND = "kf"
RSTKF_BACKEND = "rstkf"


@dataclass(frozen=True)
class AssociationConfig:
    """Detection probability and clutter intensity (expected clutter per m^2)."""

    p_d: float
    clutter_intensity: float

    def __post_init__(self):
        if not 0.0 < self.p_d <= 1.0:
            raise InvalidParameterError(f"p_d must lie in (0, 1], got {self.p_d}")
        if not self.clutter_intensity > 0:
            raise InvalidParameterError(
                f"clutter_intensity must be positive, got {self.clutter_intensity}"
            )


@dataclass(frozen=True)
class TrackerConfig:
    """Backend choice, reduction thresholds and the shared association model.

    gamma_prune = 0 disables pruning and a very large n_max disables capping,
    which the exact-enumeration tests rely on.
    """

    model: LinearModel
    assoc: AssociationConfig
    backend: str = KF_BACKEND
    student: StudentTConfig | None = None
    gamma_prune: float = 6.25e-6
    n_max: int = 10

    def __post_init__(self):
        if self.backend not in (KF_BACKEND, RSTKF_BACKEND):
            raise InvalidParameterError(f"unknown backend {self.backend!r}")
        if self.backend == RSTKF_BACKEND and self.student is None:
            object.__setattr__(self, "student", StudentTConfig())
        if not 0.0 <= self.gamma_prune < 1.0:
            raise InvalidParameterError(
                f"gamma_prune must lie in [0, 1), got {self.gamma_prune}"
            )
        if self.n_max < 1:
            raise InvalidParameterError(f"n_max must be >= 1, got {self.n_max}")

    @property
    def label(self) -> str:
        return "gsf" if self.backend == KF_BACKEND else "rstkf-gsf"


@dataclass(frozen=True)
class TrackerState:
    posterior: GaussianMixture
    step: int = 0


def make_tracker_state(prior: GaussianBelief) -> TrackerState:
    return TrackerState(
        posterior=GaussianMixture((MixtureComponent(0.0, prior),)), step=0
    )


def predict_mixture(state: TrackerState, model: LinearModel) -> GaussianMixture:
    """Propagate every component one step; weights are untouched."""
    return GaussianMixture(
        tuple(
            MixtureComponent(c.log_weight, kf_predict(c.belief, model))
            for c in state.posterior.components
        )
    )


def hypothesis_log_weight(
    prior_lw: float,
    theta: int,
    z: np.ndarray | None,
    pred: GaussianBelief,
    cfg: TrackerConfig,
) -> float:
    """Unnormalized log weight of one association hypothesis.

    theta = 0 contributes ln(1 - p_d); theta = j contributes
    ln(p_d) + log evidence of detection j - ln(clutter intensity), the
    standard single-object likelihood ratio against Poisson clutter.
    """
    p_d = cfg.assoc.p_d
    if theta == 0:
        if z is not None:
            raise InvalidParameterError("misdetection hypothesis cannot carry a detection")
        if p_d >= 1.0:
            return float("-inf")
        return prior_lw + math.log1p(-p_d)
    if z is None:
        raise InvalidParameterError("detection hypothesis requires a detection")
    return (
        prior_lw
        + math.log(p_d)
        + log_evidence(pred, z, cfg.model)
        - math.log(cfg.assoc.clutter_intensity)
    )


def conditional_update(
    pred: GaussianBelief, z: np.ndarray, cfg: TrackerConfig
) -> GaussianBelief:
    """Measurement update under the configured backend.

    Hypothesis weights always use the Gaussian evidence regardless of backend;
    the exact robust evidence has no closed form.
    """
    if cfg.backend == KF_BACKEND:
        return kf_update(pred, z, cfg.model)
    return rstkf_update(pred, z, cfg.model, cfg.student)


def tracker_step(
    state: TrackerState, detections: list[np.ndarray], cfg: TrackerConfig
) -> TrackerState:
    """One full recursion: predict, expand associations, reduce.

    Produces N*(m+1) candidate hypotheses, normalizes, prunes below
    gamma_prune (keeping the best), and caps the count at n_max. Conditional
    updates are deferred until after pruning; weights do not depend on them,
    so the result is identical and the pruned branches cost nothing.
    """
    predicted = predict_mixture(state, cfg.model)
    dets = [np.asarray(z, dtype=float).reshape(-1) for z in detections]

    lws = []
    branches = []  # (predicted belief, detection or None)
    for comp in predicted.components:
        lws.append(hypothesis_log_weight(comp.log_weight, 0, None, comp.belief, cfg))
        branches.append((comp.belief, None))
        for j, z in enumerate(dets, start=1):
            lws.append(hypothesis_log_weight(comp.log_weight, j, z, comp.belief, cfg))
            branches.append((comp.belief, z))

    lws = np.asarray(lws)
    finite = np.isfinite(lws)
    if not finite.any():
        raise EmptyPosteriorError(f"all hypotheses impossible at step {state.step + 1}")
    norm_lw = lws - logsumexp(lws[finite])
    keep = finite & (np.exp(norm_lw) >= cfg.gamma_prune)
    keep[int(np.argmax(norm_lw))] = True

    survivors = []
    for ok, lw, (pred, z) in zip(keep, norm_lw, branches):
        if not ok:
            continue
        belief = pred if z is None else conditional_update(pred, z, cfg)
        survivors.append(MixtureComponent(float(lw), belief))

    mix = normalize(GaussianMixture(tuple(survivors)))
    mix = reduce_runnalls(mix, cfg.n_max)
    return TrackerState(posterior=mix, step=state.step + 1)
