"""Linear state-space model containers and covariance utilities.

The concrete scenario used throughout the benchmark is a 2-D constant-velocity
model with position-only measurements; the library itself is dimension-agnostic
so that scalar toy systems stay easy to test.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidParameterError, NumericDegeneracyError

# Relative eigenvalue floor below which a symmetrized matrix is rejected.
PSD_REL_TOL = 1e-8


def symmetrize_psd(M: np.ndarray) -> np.ndarray:
    """Average a square matrix with its transpose and verify it stays PSD.

    Raises
    ------
    InvalidParameterError
        if ``M`` is not square.
    NumericDegeneracyError
        if the smallest eigenvalue is below ``-PSD_REL_TOL`` times the largest
        eigenvalue magnitude (i.e. the matrix is indefinite beyond rounding).
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InvalidParameterError(f"expected a square matrix, got shape {M.shape}")
    S = 0.5 * (M + M.T)
    w = np.linalg.eigvalsh(S)
    scale = np.max(np.abs(w)) if w.size else 0.0
    if w.size and w[0] < -PSD_REL_TOL * scale:
        raise NumericDegeneracyError(
            f"matrix is not positive semi-definite: min eigenvalue {w[0]:.3e}"
        )
    return S


@dataclass(frozen=True)
class GaussianBelief:
    """Mean/covariance pair; the covariance is symmetrized on construction.

    Positive semi-definiteness is asserted where it matters (see
    :func:`symmetrize_psd`), not on every construction, because filter
    arithmetic builds these in hot loops.
    """

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        cov = np.asarray(self.cov, dtype=float)
        if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
            raise InvalidParameterError(f"covariance must be square, got {cov.shape}")
        if cov.shape[0] != mean.shape[0]:
            raise InvalidParameterError(
                f"mean dim {mean.shape[0]} != covariance dim {cov.shape[0]}"
            )
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", 0.5 * (cov + cov.T))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True)
class LinearModel:
    """Discrete-time linear system x' = F x + w, z = H x + v.

    ``Q`` and ``R`` are the process / measurement noise covariances; ``dt`` is
    the sampling interval in seconds.
    """

    F: np.ndarray
    Q: np.ndarray
    H: np.ndarray
    R: np.ndarray
    dt: float = 1.0

    def __post_init__(self):
        F = np.asarray(self.F, dtype=float)
        H = np.asarray(self.H, dtype=float)
        if F.ndim != 2 or F.shape[0] != F.shape[1]:
            raise InvalidParameterError(f"F must be square, got {F.shape}")
        dx = F.shape[0]
        if H.ndim != 2 or H.shape[1] != dx:
            raise InvalidParameterError(f"H shape {H.shape} inconsistent with F {F.shape}")
        do = H.shape[0]
        Q = symmetrize_psd(self.Q)
        R = symmetrize_psd(self.R)
        if Q.shape[0] != dx:
            raise InvalidParameterError(f"Q shape {Q.shape} inconsistent with F {F.shape}")
        if R.shape[0] != do:
            raise InvalidParameterError(f"R shape {R.shape} inconsistent with H {H.shape}")
        try:
            np.linalg.cholesky(R)
        except np.linalg.LinAlgError:
            raise NumericDegeneracyError("R must be strictly positive definite")
        if not self.dt > 0:
            raise InvalidParameterError(f"dt must be positive, got {self.dt}")
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "dt", float(self.dt))

    @property
    def state_dim(self) -> int:
        return self.F.shape[0]

    @property
    def obs_dim(self) -> int:
        return self.H.shape[0]


@dataclass(frozen=True)
class StateVector:
    """Planar constant-velocity state: position in meters, velocity in m/s."""

    px: float
    py: float
    vx: float
    vy: float

    @classmethod
    def from_array(cls, x: np.ndarray) -> "StateVector":
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.shape[0] != 4:
            raise InvalidParameterError(f"state vector must have length 4, got {x.shape[0]}")
        return cls(px=x[0], py=x[1], vx=x[2], vy=x[3])

    def as_array(self) -> np.ndarray:
        return np.array([self.px, self.py, self.vx, self.vy])

    @property
    def position(self) -> np.ndarray:
        return np.array([self.px, self.py])

    @property
    def velocity(self) -> np.ndarray:
        return np.array([self.vx, self.vy])


def build_cv_model(dt: float, r: float) -> LinearModel:
    """Constant-velocity model with white-noise acceleration and position measurements.

    Args:
        dt: sampling interval, seconds.
        r: measurement noise variance per axis, m^2.
    """
    if not dt > 0:
        raise InvalidParameterError(f"dt must be positive, got {dt}")
    if not r > 0:
        raise InvalidParameterError(f"r must be positive, got {r}")
    I2 = np.eye(2)
    Z2 = np.zeros((2, 2))
    F = np.block([[I2, dt * I2], [Z2, I2]])
    Q = np.block([
        [dt**3 / 3.0 * I2, dt**2 / 2.0 * I2],
        [dt**2 / 2.0 * I2, dt * I2],
    ])
    H = np.block([I2, Z2])
    R = r * I2
    return LinearModel(F=F, Q=Q, H=H, R=R, dt=dt)
