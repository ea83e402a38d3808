"""Shared helpers: random PSD matrices, random linear systems, fixture dofs."""

import numpy as np
import pytest

from gsftrack.models import GaussianBelief, LinearModel
from gsftrack.rstkf import StudentTConfig


def rand_psd(rng: np.random.Generator, n: int, scale: float = 1.0) -> np.ndarray:
    A = rng.normal(size=(n, n))
    return scale * (A @ A.T + n * 1e-3 * np.eye(n))


def rand_belief(rng: np.random.Generator, n: int) -> GaussianBelief:
    return GaussianBelief(mean=rng.normal(size=n), cov=rand_psd(rng, n))


def rand_model(rng: np.random.Generator, dx: int, do: int) -> LinearModel:
    """Random stable-ish linear system with PD noise covariances."""
    F = rng.normal(size=(dx, dx))
    # keep trajectories bounded over 100 steps
    F *= 0.95 / max(1.0, np.max(np.abs(np.linalg.eigvals(F))))
    H = rng.normal(size=(do, dx))
    return LinearModel(F=F, Q=rand_psd(rng, dx, 0.5), H=H, R=rand_psd(rng, do, 0.5))


def measurement_trust_config(iters: int = 10) -> StudentTConfig:
    """Dofs that pin the process-side factors and adapt only the measurement
    precision: the regime where a wild detection gets rejected outright."""
    return StudentTConfig(s=1e6, v=5.0, u=1e6, iters=iters)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
