"""Shipping gates: one test per release criterion, at desk scale.

Each test prints a single PASS line with the measured numbers; pytest -v
shows the per-criterion verdict. Monte Carlo studies are shared between
criteria through module-scoped fixtures, all strictly single-process.
"""

import itertools
import math
import time

import numpy as np
import pytest
from scipy.special import logsumexp

from conftest import rand_belief, rand_model, rand_psd
from gsftrack.bench import (
    benchmark_filters,
    emit_results,
    make_tracker_configs,
    rmse_csv_text,
    run_monte_carlo,
    timing_ratios,
    tuning_sweep,
)
from gsftrack.kalman import kf_predict, kf_update, log_evidence
from gsftrack.mixture import (
    GaussianMixture,
    MixtureComponent,
    normalize,
    prune,
    reduce_runnalls,
)
from gsftrack.models import GaussianBelief, build_cv_model
from gsftrack.rstkf import (
    StudentTConfig,
    estimate_free_energy,
    factor_rel_change,
    make_vb_priors,
    rstkf_sweeps,
    rstkf_update,
)
from gsftrack.simulate import make_experiment_scenario, simulate_run
from gsftrack.tracker import (
    AssociationConfig,
    TrackerConfig,
    make_tracker_state,
    tracker_step,
)

M_RUNS = 100
GSF = "gsf"
RSTKF = "rstkf-gsf"


@pytest.fixture(scope="module")
def exp1_curves():
    return run_monte_carlo(1, M_RUNS, seed=0, workers=1)


@pytest.fixture(scope="module")
def exp2_timed():
    t0 = time.monotonic()
    curves = run_monte_carlo(2, M_RUNS, seed=0, workers=1)
    return curves, time.monotonic() - t0


@pytest.fixture(scope="module")
def exp3_curves():
    return run_monte_carlo(3, M_RUNS, seed=0, workers=1)


@pytest.fixture(scope="module")
def exp4_curves():
    return run_monte_carlo(4, M_RUNS, seed=0, workers=1)


def mean_pos(curves, label: str) -> float:
    return float(np.mean(curves.pos_rmse[label]))


def test_criterion_01_gaussian_limit():
    """Huge dofs: the robust tracker filter equals the Kalman filter."""
    rng = np.random.default_rng(2024)
    t0 = time.monotonic()
    sq_sum = 0.0
    n_vals = 0
    for _ in range(100):
        dx = int(rng.integers(2, 5))
        do = int(rng.integers(1, 3))
        model = rand_model(rng, dx, do)
        cfg = StudentTConfig(s=1e9, v=1e9, u=dx + 1e9, iters=10)
        x = rng.normal(size=dx)
        kf_belief = GaussianBelief(mean=x + rng.normal(size=dx), cov=rand_psd(rng, dx, 4.0))
        st_belief = kf_belief
        for _ in range(100):
            x = model.F @ x + rng.multivariate_normal(np.zeros(dx), model.Q)
            z = model.H @ x + rng.multivariate_normal(np.zeros(do), model.R)
            kf_belief = kf_update(kf_predict(kf_belief, model), z, model)
            st_belief = rstkf_update(kf_predict(st_belief, model), z, model, cfg)
            sq_sum += float(np.sum((kf_belief.mean - st_belief.mean) ** 2))
            n_vals += kf_belief.dim
    elapsed = time.monotonic() - t0
    rms = math.sqrt(sq_sum / n_vals)
    assert rms < 1e-5, f"FAIL criterion 1: trajectory RMS divergence {rms:.3e}"
    assert elapsed < 10.0, f"FAIL criterion 1: runtime {elapsed:.1f}s exceeds 10s"
    print(f"PASS criterion 1: RMS divergence {rms:.2e} over 100 systems in {elapsed:.1f}s")


def test_criterion_02_heavy_process_noise_study(exp2_timed):
    """Heavy-tailed process noise: the robust variant wins, nearly every step."""
    curves, elapsed = exp2_timed
    robust, plain = mean_pos(curves, RSTKF), mean_pos(curves, GSF)
    late = slice(9, None)  # steps k >= 10
    wins = np.mean(curves.pos_rmse[RSTKF][late] < curves.pos_rmse[GSF][late])
    assert robust < plain, f"FAIL criterion 2: {robust:.2f} !< {plain:.2f}"
    assert wins >= 0.70, f"FAIL criterion 2: wins at {wins:.0%} of late steps"
    assert elapsed < 300.0, f"FAIL criterion 2: runtime {elapsed:.0f}s exceeds 5min"
    print(
        f"PASS criterion 2: robust {robust:.2f} m < plain {plain:.2f} m, "
        f"wins {wins:.0%} of steps k>=10, {elapsed:.0f}s single-threaded"
    )


def test_criterion_03_nominal_noise_parity(exp1_curves):
    """Nominal noise: both trackers perform alike."""
    ratio = mean_pos(exp1_curves, RSTKF) / mean_pos(exp1_curves, GSF)
    assert 0.9 <= ratio <= 1.1, f"FAIL criterion 3: RMSE ratio {ratio:.3f}"
    print(f"PASS criterion 3: mean position RMSE ratio {ratio:.3f} in [0.9, 1.1]")


def test_criterion_04_heavy_measurement_noise_bounded(exp1_curves, exp3_curves):
    """Heavy-tailed measurement noise degrades neither tracker much."""
    for label in (GSF, RSTKF):
        base = mean_pos(exp1_curves, label)
        heavy = mean_pos(exp3_curves, label)
        assert heavy < 2.0 * base, (
            f"FAIL criterion 4: {label} degrades {heavy / base:.2f}x"
        )
    factors = {
        label: mean_pos(exp3_curves, label) / mean_pos(exp1_curves, label)
        for label in (GSF, RSTKF)
    }
    print(
        "PASS criterion 4: degradation "
        + ", ".join(f"{lb} {f:.2f}x" for lb, f in factors.items())
        + " (both < 2x)"
    )


def test_criterion_05_doubly_heavy_noise(exp4_curves):
    """Both noises heavy-tailed: the robust variant still wins."""
    robust, plain = mean_pos(exp4_curves, RSTKF), mean_pos(exp4_curves, GSF)
    assert robust < plain, f"FAIL criterion 5: {robust:.2f} !< {plain:.2f}"
    print(f"PASS criterion 5: robust {robust:.2f} m < plain {plain:.2f} m")


def test_criterion_06_tuning_cannot_close_the_gap():
    """No process-noise scale lets the plain tracker match the robust one."""
    t0 = time.monotonic()
    result = tuning_sweep()
    elapsed = time.monotonic() - t0
    assert result.best_gsf_total > result.rstkf_total_rmse, (
        f"FAIL criterion 6: best plain total {result.best_gsf_total:.1f} m "
        f"(c={result.best_c:.2f}) !> robust {result.rstkf_total_rmse:.1f} m"
    )
    assert elapsed < 600.0, f"FAIL criterion 6: runtime {elapsed:.0f}s exceeds 10min"
    print(
        f"PASS criterion 6: best plain total {result.best_gsf_total:.1f} m at "
        f"c={result.best_c:.2f} > robust {result.rstkf_total_rmse:.1f} m, {elapsed:.0f}s"
    )


def test_criterion_07_update_cost():
    """The variational update stays well under 50x a Kalman update."""
    rows = benchmark_filters(reps=300)
    ratios = timing_ratios(rows)
    assert ratios["rstkf_10_over_kf"] < 50.0, (
        f"FAIL criterion 7: 10-sweep update costs {ratios['rstkf_10_over_kf']:.1f}x KF"
    )
    report = ", ".join(
        f"{i} it = {ratios[f'rstkf_{i}_over_kf']:.1f}x" for i in (1, 5, 10)
    )
    print(f"PASS criterion 7: update cost vs KF: {report} (limit 50x)")


def test_criterion_08_exact_enumeration_oracle():
    """With reduction off, three steps match brute-force association enumeration."""
    model = build_cv_model(dt=1.0, r=10.0)
    prior = GaussianBelief(
        mean=np.array([0.0, 0.0, 10.0, 10.0]),
        cov=np.diag([100.0, 100.0, 25.0, 25.0]),
    )
    cfg = TrackerConfig(
        model=model,
        assoc=AssociationConfig(p_d=0.95, clutter_intensity=3.0 / 300.0**2),
        gamma_prune=0.0,
        n_max=10**9,
    )
    rng = np.random.default_rng(5)
    x = prior.mean.copy()
    detections = []
    for n_dets in (2, 1, 2):
        x = model.F @ x
        center = model.H @ x
        detections.append(
            [center + rng.normal(size=2) * 6.0 for _ in range(n_dets)]
        )

    state = make_tracker_state(prior)
    for dets in detections:
        state = tracker_step(state, dets, cfg)

    # brute force: weight and belief of every association sequence
    p_d, lam = cfg.assoc.p_d, cfg.assoc.clutter_intensity
    seq_lws = []
    seq_means = []
    ranges = [range(len(d) + 1) for d in detections]
    for seq in itertools.product(*ranges):
        belief = prior
        lw = 0.0
        for theta, dets in zip(seq, detections):
            pred = kf_predict(belief, model)
            if theta == 0:
                lw += math.log1p(-p_d)
                belief = pred
            else:
                z = dets[theta - 1]
                lw += math.log(p_d) + log_evidence(pred, z, model) - math.log(lam)
                belief = kf_update(pred, z, model)
        seq_lws.append(lw)
        seq_means.append(belief.mean)
    seq_lws = np.array(seq_lws) - logsumexp(seq_lws)

    assert state.posterior.size == len(seq_lws)
    got = np.exp(state.posterior.log_weights)
    want = np.exp(seq_lws)
    worst = float(np.max(np.abs(got - want)))
    assert worst < 1e-10, f"FAIL criterion 8: weight error {worst:.2e}"
    for comp, mean in zip(state.posterior.components, seq_means):
        assert np.allclose(comp.belief.mean, mean, atol=1e-8)
    print(
        f"PASS criterion 8: {len(seq_lws)} association sequences, "
        f"max weight error {worst:.1e}"
    )


def test_criterion_09_mixture_properties():
    """Reduction keeps the mean; prune+normalize is idempotent; steps normalize."""
    rng = np.random.default_rng(99)
    worst_mean = 0.0
    for _ in range(1000):
        dim = int(rng.integers(1, 5))
        size = int(rng.integers(2, 13))
        lws = rng.normal(size=size)
        lws -= logsumexp(lws)
        mix = GaussianMixture(
            tuple(
                MixtureComponent(
                    float(lw),
                    GaussianBelief(mean=rng.normal(size=dim) * 3.0, cov=rand_psd(rng, dim)),
                )
                for lw in lws
            )
        )
        out = reduce_runnalls(mix, int(rng.integers(1, size + 1)))
        w_in = np.exp(mix.log_weights)
        w_out = np.exp(out.log_weights)
        mean_in = w_in @ np.stack([c.belief.mean for c in mix.components])
        mean_out = w_out @ np.stack([c.belief.mean for c in out.components])
        worst_mean = max(worst_mean, float(np.max(np.abs(mean_in - mean_out))))
    assert worst_mean < 1e-12, f"FAIL criterion 9: mean drift {worst_mean:.2e}"

    for _ in range(100):
        size = int(rng.integers(2, 10))
        lws = rng.normal(size=size) * 4.0
        mix = GaussianMixture(
            tuple(
                MixtureComponent(
                    float(lw), GaussianBelief(mean=rng.normal(size=2), cov=np.eye(2))
                )
                for lw in lws
            )
        )
        once = normalize(prune(normalize(mix), 6.25e-6))
        twice = normalize(prune(once, 6.25e-6))
        assert twice.size == once.size
        assert np.allclose(twice.log_weights, once.log_weights, atol=1e-13)

    sc = make_experiment_scenario(2, seed=1)
    obs = simulate_run(sc, 0)[:50]
    worst_norm = 0.0
    for cfg in make_tracker_configs(sc):
        state = make_tracker_state(sc.prior0)
        for ob in obs:
            state = tracker_step(state, list(ob.detections), cfg)
            worst_norm = max(
                worst_norm, abs(float(logsumexp(state.posterior.log_weights)))
            )
    assert worst_norm < 1e-10, f"FAIL criterion 9: weight norm off by {worst_norm:.2e}"
    print(
        f"PASS criterion 9: mean drift {worst_mean:.1e} over 1000 mixtures, "
        f"idempotent pruning, step normalization off by {worst_norm:.1e}"
    )


def test_criterion_10_variational_convergence():
    """Free energy non-increasing within MC noise AND residual < 1e-6 by sweep 10.

    Known red, both clauses, by measurement rather than by bug:

    * The update equations weight state discrepancies by the inverse of the
      scale-matrix mean. That convention is what makes the first sweep equal
      a Kalman update and gives the iteration a stable fixed point, but it is
      not the exact coordinate minimizer of the sampled free energy (that
      would weight by the mean of the inverse, which at the default dof
      shrinks the effective prior covariance several-fold and wrecks the
      tracking studies). Consequence: on mild innovations with anisotropic
      priors the objective drifts measurably up while the iterates converge.
      Measured here: ~11/50 random cases rise by up to ~1.5 nats, reproducible
      at 20k samples across seeds; strong outliers descend cleanly.
    * The same convention contracts at roughly 0.4 per sweep on tracking
      inputs, so ten sweeps land near 1e-5..1e-4 of relative change, not 1e-6.

    Point estimates are converged far beyond measurement noise; only these
    two diagnostic thresholds are missed. See the decision log.
    """
    failures = []

    # clause 1: free-energy monotonicity over 50 cases, 3 MC stderr tolerance
    rng = np.random.default_rng(31)
    model = build_cv_model(dt=1.0, r=10.0)
    pair_viol = 0
    net_viol = 0
    worst_rise = 0.0
    checks = 0
    for case in range(50):
        pred = GaussianBelief(
            mean=rng.normal(size=4) * 10.0,
            cov=np.diag(rng.uniform(5.0, 80.0, size=4)),
        )
        z = model.H @ pred.mean + rng.normal(size=2) * float(rng.uniform(2.0, 30.0))
        cfg = StudentTConfig(iters=10)
        priors = make_vb_priors(pred, cfg)
        history = rstkf_sweeps(pred, z, model, cfg)
        ests = [
            estimate_free_energy(f, priors, z, model, n_samples=2000, seed=case)
            for f in history
        ]
        for prev, cur in zip(ests, ests[1:]):
            checks += 1
            if cur.value > prev.value + 3.0 * math.hypot(prev.stderr, cur.stderr):
                pair_viol += 1
        net = ests[-1].value - ests[0].value
        if net > 3.0 * math.hypot(ests[0].stderr, ests[-1].stderr):
            net_viol += 1
            worst_rise = max(worst_rise, net)
    if pair_viol or net_viol:
        failures.append(
            f"free energy rises: {pair_viol}/{checks} sweep pairs and "
            f"{net_viol}/50 cases net (worst +{worst_rise:.2f} nats) exceed "
            f"3 MC standard errors"
        )

    # clause 2: fixed-point residual after 10 sweeps on tracking inputs
    rng = np.random.default_rng(8)
    belief = GaussianBelief(
        mean=np.array([0.0, 0.0, 10.0, 10.0]),
        cov=np.diag([100.0, 100.0, 25.0, 25.0]),
    )
    cfg = StudentTConfig(iters=10)
    x = belief.mean.copy()
    residuals = []
    for _ in range(25):
        x = model.F @ x + rng.multivariate_normal(np.zeros(4), model.Q)
        z = model.H @ x + rng.multivariate_normal(np.zeros(2), model.R)
        pred = kf_predict(belief, model)
        history = rstkf_sweeps(pred, z, model, cfg)
        residuals.append(factor_rel_change(history[-2], history[-1]))
        belief = kf_update(pred, z, model)
    worst = max(residuals)
    if worst >= 1e-6:
        failures.append(
            f"fixed-point residual at sweep 10 reaches {worst:.2e} "
            f"(median {float(np.median(residuals)):.2e}) on 25 tracking "
            f"updates; contraction ~0.4/sweep cannot reach 1e-6 in 10 sweeps"
        )

    assert not failures, "FAIL criterion 10: " + "; ".join(failures)
    print("PASS criterion 10: free energy non-increasing, residual < 1e-6")


def test_criterion_11_worker_count_determinism(tmp_path):
    """Same seed, any worker count: byte-identical CSV."""
    texts = {}
    for workers in (1, 2, 3):
        curves = run_monte_carlo(1, m_runs=6, seed=123, workers=workers)
        texts[workers] = rmse_csv_text(curves)
        paths = emit_results(
            curves, {"workers": workers}, "csv", tmp_path / str(workers), "exp1"
        )
        texts[f"file{workers}"] = paths[0].read_bytes()
    assert texts[1] == texts[2] == texts[3], "FAIL criterion 11: CSV differs by worker count"
    assert texts["file1"] == texts["file2"] == texts["file3"]
    print("PASS criterion 11: byte-identical CSV for 1, 2 and 3 workers")
