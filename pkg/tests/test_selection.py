"""Information criteria arithmetic and the search drivers."""

import numpy as np
import pytest

import mmar.selection as selection
from mmar.estimate import EmOptions
from mmar.model import MmarSpec, param_dim
from mmar.scenarios import frozen_scenario
from mmar.selection import Criteria, criteria, select_grid, select_stepwise
from mmar.simulate import make_rng, simulate


def test_criteria_basic_arithmetic():
    out = criteria(0.0, 1, 16, 1)  # T - p_max = 15
    assert out.bic == pytest.approx(np.log(15.0), abs=1e-12)
    assert out.aic == pytest.approx(2.0, abs=1e-12)
    assert out.hq == pytest.approx(2.0 * np.log(np.log(15.0)), abs=1e-12)
    # log(dim)=0 at dim=1, so this gic has no penalty
    assert out.gic == pytest.approx(0.0, abs=1e-12)


def test_criteria_aic_bic_gap(rng):
    for _ in range(20):
        loglik = float(rng.normal(scale=100))
        dim = int(rng.integers(1, 300))
        n_obs = int(rng.integers(10, 3000))
        p_max = int(rng.integers(1, 4))
        out = criteria(loglik, dim, n_obs, p_max)
        gap = (2.0 - np.log(n_obs - p_max)) * dim
        assert out.aic - out.bic == pytest.approx(gap, rel=1e-12)


def test_criteria_share_minus_two_loglik(rng):
    dim, n_obs, p_max = 12, 400, 1
    base = criteria(0.0, dim, n_obs, p_max)
    shifted = criteria(-123.456, dim, n_obs, p_max)
    for field in Criteria._fields:
        assert getattr(shifted, field) - getattr(base, field) == pytest.approx(
            2 * 123.456, rel=1e-12)


def test_criteria_indicator_table_row():
    # published three-regime row for the 4 x 5 indicator panel: loglik
    # -1504.04 at K=3, p=1; the effective sample size resolves to T - p = 131
    spec = MmarSpec(rows=4, cols=5, n_components=3, orders=(1, 1, 1))
    dim = param_dim(spec)
    assert dim == 254
    out = criteria(-1504.04, dim, 132, 1)
    assert out.aic == pytest.approx(3516.09, abs=0.5)
    assert out.bic == pytest.approx(4246.39, abs=0.5)
    assert out.hq == pytest.approx(3812.84, abs=0.5)
    assert out.gic == pytest.approx(5236.18, abs=0.5)


def test_criteria_validation():
    with pytest.raises(ValueError):
        criteria(0.0, 1, 3, 1)  # T - p_max = 2 < 3
    with pytest.raises(ValueError):
        criteria(0.0, 0, 100, 1)


def test_winner_invariant_under_loglik_shift():
    rows = []
    gen = np.random.default_rng(3)
    for k in (1, 2, 3):
        spec = MmarSpec(2, 2, k, (1,) * k)
        dim = param_dim(spec)
        ll = float(-500 + 40 * k + gen.normal())
        crit = criteria(ll, dim, 300, 1)
        rows.append(selection.SelectionRow(k, 1, dim, ll, crit.aic, crit.bic,
                                           crit.hq, crit.gic, "ok", True))
    winner = selection._pick_winner(rows, "bic")
    shifted = []
    for row in rows:
        crit = criteria(row.loglik + 77.7, row.dim, 300, 1)
        shifted.append(selection.SelectionRow(
            row.n_components, row.order, row.dim, row.loglik + 77.7,
            crit.aic, crit.bic, crit.hq, crit.gic, "ok", True))
    winner2 = selection._pick_winner(shifted, "bic")
    assert (winner.n_components, winner.order) == (winner2.n_components,
                                                   winner2.order)


def test_ties_break_toward_smaller_dimension():
    row_small = selection.SelectionRow(1, 1, 5, -10.0, 1.0, 1.0, 1.0, 1.0,
                                       "ok", True)
    row_big = selection.SelectionRow(2, 1, 9, -10.0, 1.0, 1.0, 1.0, 1.0,
                                     "ok", True)
    winner = selection._pick_winner([row_big, row_small], "bic")
    assert winner.dim == 5


def test_select_grid_single_cell(rng):
    truth = frozen_scenario("scenario1")
    sim = simulate(truth, 220, seed=5, rng=make_rng(5, 0))
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        table, winner, fit = select_grid(sim.series, [2], [1], "bic",
                                         EmOptions(seed=1))
    assert len(table.rows) == 1
    assert (winner.n_components, winner.order) == (2, 1)
    assert fit.model.spec.n_components == 2
    csv_text = table.to_csv()
    assert csv_text.startswith("K,p,dim,loglik")


def test_select_grid_validation(rng):
    truth = frozen_scenario("scenario1")
    sim = simulate(truth, 120, seed=5)
    with pytest.raises(ValueError):
        select_grid(sim.series, [], [1])
    with pytest.raises(ValueError):
        select_grid(sim.series, [1], [1], criterion="mdl")


def test_stepwise_trivial_ranges(rng):
    truth = frozen_scenario("scenario1")
    sim = simulate(truth, 260, seed=6, rng=make_rng(6, 0))
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        table, winner, fit = select_stepwise(sim.series, [2], [2], "bic",
                                             EmOptions(seed=1))
    assert (winner.n_components, winner.order) == (2, 2)


def test_stepwise_fit_count(rng, monkeypatch):
    truth = frozen_scenario("scenario1")
    sim = simulate(truth, 240, seed=8, rng=make_rng(8, 0))
    calls = []
    real = selection._fit_cell

    def counting(data, k, p, opts):
        calls.append((k, p))
        return real(data, k, p, opts)

    monkeypatch.setattr(selection, "_fit_cell", counting)
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        select_stepwise(sim.series, [1, 2], [1, 2], "bic", EmOptions(seed=1))
    # |K| + |p| - 1 fits: (1,1), (2,1) then (K*, 2)
    assert len(calls) == 3
    assert calls[0][1] == 1 and calls[1][1] == 1
    assert calls[2][1] == 2


def test_grid_and_stepwise_agree_on_easy_instance():
    truth = frozen_scenario("scenario1")
    sim = simulate(truth, 800, seed=9, rng=make_rng(9, 0))
    import warnings

    opts = EmOptions(seed=1, max_em_iters=300, em_rel_tol=1e-7)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        _, grid_winner, _ = select_grid(sim.series, [1, 2], [1, 2], "bic", opts)
        _, step_winner, _ = select_stepwise(sim.series, [1, 2], [1, 2], "bic",
                                            opts)
    assert (grid_winner.n_components, grid_winner.order) == \
        (step_winner.n_components, step_winner.order) == (2, 1)
