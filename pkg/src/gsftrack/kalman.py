"""Kalman predict/update and the Gaussian evidence term for mixture weights."""

from __future__ import annotations

import numpy as np

from .exceptions import InvalidParameterError, NumericDegeneracyError
from .models import GaussianBelief, LinearModel

LOG_2PI = float(np.log(2.0 * np.pi))


def kf_predict(prior: GaussianBelief, model: LinearModel) -> GaussianBelief:
    """Propagate a Gaussian belief one step through the linear dynamics."""
    if prior.dim != model.state_dim:
        raise InvalidParameterError(
            f"belief dim {prior.dim} != model state dim {model.state_dim}"
        )
    mean = model.F @ prior.mean
    cov = model.F @ prior.cov @ model.F.T + model.Q
    return GaussianBelief(mean=mean, cov=cov)


def _innovation_chol(pred: GaussianBelief, z: np.ndarray, model: LinearModel):
    """Residual, innovation covariance and its Cholesky factor (lower)."""
    z = np.asarray(z, dtype=float).reshape(-1)
    if z.shape[0] != model.obs_dim:
        raise InvalidParameterError(
            f"detection dim {z.shape[0]} != model obs dim {model.obs_dim}"
        )
    H = model.H
    PHt = pred.cov @ H.T
    S = H @ PHt + model.R
    S = 0.5 * (S + S.T)
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        raise NumericDegeneracyError("innovation covariance is singular")
    resid = z - H @ pred.mean
    return resid, PHt, L


def kf_update(pred: GaussianBelief, z: np.ndarray, model: LinearModel) -> GaussianBelief:
    """Condition a predicted Gaussian belief on a single detection."""
    resid, PHt, L = _innovation_chol(pred, z, model)
    # K = P H^T S^-1 via two triangular solves against the Cholesky factor.
    K = np.linalg.solve(L.T, np.linalg.solve(L, PHt.T)).T
    mean = pred.mean + K @ resid
    cov = pred.cov - K @ PHt.T
    return GaussianBelief(mean=mean, cov=cov)


def log_evidence(pred: GaussianBelief, z: np.ndarray, model: LinearModel) -> float:
    """log N(z; H mu, H P H^T + R), the marginal likelihood of one detection."""
    resid, _, L = _innovation_chol(pred, z, model)
    white = np.linalg.solve(L, resid)
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    return float(-0.5 * (resid.shape[0] * LOG_2PI + logdet + white @ white))
