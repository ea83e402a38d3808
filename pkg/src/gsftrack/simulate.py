"""Scenario simulation: contaminated-Gaussian truth, misdetection and clutter.

Randomness is organized as counter-based streams keyed by (seed, run, step,
purpose), so every step of every run draws from its own generator. Runs can
then execute in any order or thread count with bit-identical output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidParameterError
from .models import GaussianBelief, LinearModel, StateVector, build_cv_model

PROCESS = 0
MEASUREMENT = 1

DEMO_OUTLIER_STEP = 20
DEMO_SEED = 2


def stream(seed: int, run: int, step: int, purpose: int) -> np.random.Generator:
    """Independent generator for one (run, step, purpose) cell."""
    return np.random.default_rng([seed, run, step, purpose])


@dataclass(frozen=True)
class Scenario:
    """Everything needed to simulate one tracking dataset.

    p_omega and p_v are the probabilities of drawing nominal process and
    measurement noise; with probability 1 - p the covariance is scaled by
    ``inflation``. Clutter counts are Poisson(clutter_rate) and clutter falls
    uniformly on a square of half-width clutter_half_range centered on the
    true position.
    """

    model: LinearModel
    x0: np.ndarray
    prior0: GaussianBelief
    steps: int = 100
    p_omega: float = 1.0
    p_v: float = 1.0
    inflation: float = 100.0
    p_d: float = 0.95
    clutter_rate: float = 3.0
    clutter_half_range: float = 150.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float).reshape(-1))
        if self.model.state_dim != 4 or self.model.obs_dim != 2:
            raise InvalidParameterError("scenario requires a 4-state, 2-observation model")
        if self.x0.shape[0] != 4 or self.prior0.dim != 4:
            raise InvalidParameterError("x0 and prior0 must be 4-dimensional")
        for name in ("p_omega", "p_v", "p_d"):
            val = getattr(self, name)
            if not 0.0 < val <= 1.0:
                raise InvalidParameterError(f"{name} must lie in (0, 1], got {val}")
        if self.clutter_rate < 0:
            raise InvalidParameterError(f"clutter_rate must be >= 0, got {self.clutter_rate}")
        if self.steps < 1:
            raise InvalidParameterError(f"steps must be >= 1, got {self.steps}")
        if not self.inflation > 0:
            raise InvalidParameterError(f"inflation must be positive, got {self.inflation}")

    @property
    def clutter_intensity(self) -> float:
        """Poisson intensity over the clutter window (count per m^2)."""
        area = (2.0 * self.clutter_half_range) ** 2
        return self.clutter_rate / area


@dataclass(frozen=True)
class StepObservation:
    """One step's truth plus the detection set handed to the tracker.

    object_detected and object_index are truth-side metadata: which detection
    (if any) came from the object after shuffling.
    """

    truth: StateVector
    detections: tuple[np.ndarray, ...]
    object_detected: bool
    object_index: int | None = None

    def __post_init__(self):
        if self.object_detected != (self.object_index is not None):
            raise InvalidParameterError("object_index must be present iff object_detected")


@dataclass(frozen=True)
class OutlierSchedule:
    """Single forced process outlier: at ``step`` the noise is drawn from
    N(0, inflation*Q), or set to ``draw`` exactly when one is given."""

    step: int
    draw: np.ndarray | None = None


def draw_process_noise(sc: Scenario, rng: np.random.Generator) -> np.ndarray:
    """One contaminated-Gaussian process noise sample."""
    Q = sc.model.Q
    cov = Q if rng.random() < sc.p_omega else sc.inflation * Q
    return rng.multivariate_normal(np.zeros(cov.shape[0]), cov)


def simulate_truth(
    sc: Scenario, run: int = 0, outlier: OutlierSchedule | None = None
) -> list[StateVector]:
    """Ground-truth trajectory of length sc.steps, starting one step after x0.

    Deterministic in (sc.seed, run). The optional outlier schedule overrides
    the noise draw at exactly one step; other steps are unaffected because
    each step owns its own stream.
    """
    x = sc.x0
    out = []
    for k in range(1, sc.steps + 1):
        rng = stream(sc.seed, run, k, PROCESS)
        if outlier is not None and k == outlier.step:
            if outlier.draw is not None:
                w = np.asarray(outlier.draw, dtype=float).reshape(-1)
            else:
                w = rng.multivariate_normal(np.zeros(4), sc.inflation * sc.model.Q)
        else:
            w = draw_process_noise(sc, rng)
        x = sc.model.F @ x + w
        out.append(StateVector.from_array(x))
    return out


def generate_detections(
    x: StateVector, sc: Scenario, rng: np.random.Generator
) -> StepObservation:
    """Detection set for one step: possible object detection plus clutter.

    The object is seen with probability p_d through contaminated measurement
    noise; clutter is Poisson over a square window re-centered on the truth.
    The combined list is shuffled.
    """
    model = sc.model
    points = []
    detected = rng.random() < sc.p_d
    if detected:
        cov = model.R if rng.random() < sc.p_v else sc.inflation * model.R
        noise = rng.multivariate_normal(np.zeros(model.obs_dim), cov)
        points.append(model.H @ x.as_array() + noise)
    n_clutter = int(rng.poisson(sc.clutter_rate))
    center = x.position
    for _ in range(n_clutter):
        offset = rng.uniform(-sc.clutter_half_range, sc.clutter_half_range, size=2)
        points.append(center + offset)

    order = rng.permutation(len(points))
    detections = tuple(points[i] for i in order)
    object_index = None
    if detected:
        object_index = int(np.nonzero(order == 0)[0][0])
    return StepObservation(
        truth=x,
        detections=detections,
        object_detected=detected,
        object_index=object_index,
    )


def simulate_run(
    sc: Scenario, run: int = 0, outlier: OutlierSchedule | None = None
) -> list[StepObservation]:
    """Truth plus detections for a full run, one StepObservation per step."""
    truth = simulate_truth(sc, run, outlier)
    return [
        generate_detections(x, sc, stream(sc.seed, run, k, MEASUREMENT))
        for k, x in enumerate(truth, start=1)
    ]


def _default_initials() -> tuple[np.ndarray, GaussianBelief]:
    x0 = np.array([0.0, 0.0, 10.0, 10.0])
    prior0 = GaussianBelief(mean=x0, cov=np.diag([100.0, 100.0, 25.0, 25.0]))
    return x0, prior0


EXPERIMENT_NOISE_PROBS = {
    1: (1.0, 1.0),
    2: (0.95, 1.0),
    3: (1.0, 0.9),
    4: (0.95, 0.9),
}


def make_experiment_scenario(exp_id: int, seed: int = 0) -> Scenario:
    """Benchmark scenario exp_id in {1..4}: the (p_omega, p_v) grid
    (1,1), (0.95,1), (1,0.9), (0.95,0.9) on the shared CV setup."""
    if exp_id not in EXPERIMENT_NOISE_PROBS:
        raise InvalidParameterError(f"exp_id must be 1..4, got {exp_id}")
    p_omega, p_v = EXPERIMENT_NOISE_PROBS[exp_id]
    x0, prior0 = _default_initials()
    return Scenario(
        model=build_cv_model(dt=1.0, r=10.0),
        x0=x0,
        prior0=prior0,
        steps=100,
        p_omega=p_omega,
        p_v=p_v,
        p_d=0.95,
        clutter_rate=3.0,
        clutter_half_range=150.0,
        seed=seed,
    )


# Fixed maneuver used by the demo run: a ten-sigma velocity kick. Big enough
# that a filter assuming nominal dynamics visibly drifts off after step 20,
# small enough that the association step can still hand the robust backend
# the detections it needs to re-acquire within a couple of steps.
DEMO_OUTLIER_DRAW = (0.0, 0.0, 10.0, 10.0)


def make_demo_scenario(seed: int = DEMO_SEED) -> tuple[Scenario, OutlierSchedule]:
    """Fixed single-run demo: Gaussian noise everywhere except one hard
    process outlier (a sudden velocity kick) at step 20."""
    x0, prior0 = _default_initials()
    sc = Scenario(
        model=build_cv_model(dt=1.0, r=10.0),
        x0=x0,
        prior0=prior0,
        steps=100,
        p_omega=1.0,
        p_v=1.0,
        p_d=0.95,
        clutter_rate=3.0,
        clutter_half_range=150.0,
        seed=seed,
    )
    return sc, OutlierSchedule(
        step=DEMO_OUTLIER_STEP, draw=np.asarray(DEMO_OUTLIER_DRAW)
    )


# --- plain-text config round-trip -------------------------------------------

_SCALAR_KEYS = (
    "dt",
    "r",
    "steps",
    "p_omega",
    "p_v",
    "inflation",
    "p_d",
    "clutter_rate",
    "clutter_half_range",
    "seed",
)


def scenario_to_mapping(sc: Scenario) -> dict:
    """Flatten a CV scenario into plain scalars and float lists.

    Only models produced by build_cv_model can be represented; the model is
    stored as its (dt, r) parameters.
    """
    expected = build_cv_model(dt=sc.model.dt, r=float(sc.model.R[0, 0]))
    for name in ("F", "Q", "H", "R"):
        if not np.array_equal(getattr(expected, name), getattr(sc.model, name)):
            raise InvalidParameterError(
                "only constant-velocity models built from (dt, r) are serializable"
            )
    return {
        "dt": sc.model.dt,
        "r": float(sc.model.R[0, 0]),
        "steps": sc.steps,
        "p_omega": sc.p_omega,
        "p_v": sc.p_v,
        "inflation": sc.inflation,
        "p_d": sc.p_d,
        "clutter_rate": sc.clutter_rate,
        "clutter_half_range": sc.clutter_half_range,
        "seed": sc.seed,
        "x0": [float(v) for v in sc.x0],
        "prior_mean": [float(v) for v in sc.prior0.mean],
        "prior_diag": [float(v) for v in np.diag(sc.prior0.cov)],
    }


def scenario_from_mapping(cfg: dict) -> Scenario:
    missing = [k for k in (*_SCALAR_KEYS, "x0", "prior_mean", "prior_diag") if k not in cfg]
    if missing:
        raise InvalidParameterError(f"config missing keys: {', '.join(missing)}")
    return Scenario(
        model=build_cv_model(dt=float(cfg["dt"]), r=float(cfg["r"])),
        x0=np.asarray(cfg["x0"], dtype=float),
        prior0=GaussianBelief(
            mean=np.asarray(cfg["prior_mean"], dtype=float),
            cov=np.diag(np.asarray(cfg["prior_diag"], dtype=float)),
        ),
        steps=int(cfg["steps"]),
        p_omega=float(cfg["p_omega"]),
        p_v=float(cfg["p_v"]),
        inflation=float(cfg["inflation"]),
        p_d=float(cfg["p_d"]),
        clutter_rate=float(cfg["clutter_rate"]),
        clutter_half_range=float(cfg["clutter_half_range"]),
        seed=int(cfg["seed"]),
    )


def write_scenario_config(sc: Scenario, path) -> None:
    """Write a `key = value` config file (SI units; lists space-separated)."""
    cfg = scenario_to_mapping(sc)
    lines = ["# tracking scenario (SI units: meters, seconds)"]
    for key, val in cfg.items():
        if isinstance(val, list):
            lines.append(f"{key} = {' '.join(repr(v) for v in val)}")
        else:
            lines.append(f"{key} = {val!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_scenario_config(path) -> Scenario:
    """Parse a config file written by write_scenario_config (or by hand)."""
    cfg: dict = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InvalidParameterError(f"bad config line in {path}: {raw.rstrip()}")
            key, val = (part.strip() for part in line.split("=", 1))
            parts = val.split()
            if key in ("steps", "seed"):
                cfg[key] = int(parts[0])
            elif len(parts) == 1:
                cfg[key] = float(parts[0])
            else:
                cfg[key] = [float(p) for p in parts]
    return scenario_from_mapping(cfg)
