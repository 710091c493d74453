"""Information criteria and model-search drivers.

All four criteria share the -2 log-likelihood term and differ only in the
per-parameter penalty; the effective sample size entering the penalties is
T - p_max, the number of conditioning targets.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .estimate import EmOptions, FitReport, fit_multistart
from .exceptions import EstimationError, MmarError
from .model import MatrixSeries, MmarSpec, param_dim


class Criteria(NamedTuple):
    aic: float
    bic: float
    hq: float
    gic: float


CRITERION_NAMES = ("aic", "bic", "hq", "gic")


def criteria(loglik: float, dim: int, n_obs: int, p_max: int) -> Criteria:
    """AIC, BIC, Hannan-Quinn and the generalized criterion with
    penalty rate log(log(T - p_max)) * log(dim) per parameter.

    The generalized criterion would coincide with BIC only at dim = e, which
    is never an integer, so the two always rank models differently in
    principle.
    """
    t_eff = n_obs - p_max
    if t_eff < 3:
        raise ValueError(f"need T - p_max >= 3 for the log-log penalties, got {t_eff}")
    if dim < 1:
        raise ValueError("dim must be positive")
    base = -2.0 * loglik
    log_t = np.log(t_eff)
    loglog_t = np.log(log_t)
    return Criteria(
        aic=base + 2.0 * dim,
        bic=base + log_t * dim,
        hq=base + 2.0 * loglog_t * dim,
        gic=base + loglog_t * np.log(dim) * dim,
    )


@dataclass
class SelectionRow:
    n_components: int
    order: int
    dim: int
    loglik: float
    aic: float
    bic: float
    hq: float
    gic: float
    status: str  # "ok" or an error summary
    converged: bool = False


@dataclass
class SelectionTable:
    rows: list

    def to_csv(self) -> str:
        lines = ["K,p,dim,loglik,aic,bic,hq,gic,status,converged"]
        for row in self.rows:
            lines.append(
                f"{row.n_components},{row.order},{row.dim},{row.loglik:.6f},"
                f"{row.aic:.6f},{row.bic:.6f},{row.hq:.6f},{row.gic:.6f},"
                f"{row.status},{int(row.converged)}")
        return "\n".join(lines) + "\n"


def _fit_cell(data: MatrixSeries, n_components: int, order: int,
              opts: EmOptions, workers: int = 1) -> FitReport:
    spec = MmarSpec(rows=data.rows, cols=data.cols, n_components=n_components,
                    orders=(order,) * n_components)
    return fit_multistart(data, spec, opts, workers=workers)


def _criterion_value(row: SelectionRow, criterion: str) -> float:
    return getattr(row, criterion)


def _pick_winner(rows, criterion: str):
    usable = [r for r in rows if r.status == "ok"]
    if not usable:
        raise EstimationError("every candidate fit failed during model selection")
    # ties broken toward the smaller parameter count
    return min(usable, key=lambda r: (_criterion_value(r, criterion), r.dim))


def select_grid(data: MatrixSeries, k_range, p_range, criterion: str = "bic",
                opts: EmOptions | None = None, fits: dict | None = None,
                workers: int = 1):
    """Fit every (K, p) pair with equal per-component orders and tabulate.

    Returns (table, winner_row, winner_fit). ``fits``, when given, collects the
    underlying FitReport of each successful cell keyed by (K, p).
    """
    criterion = criterion.lower()
    if criterion not in CRITERION_NAMES:
        raise ValueError(f"criterion must be one of {CRITERION_NAMES}")
    k_range = sorted(set(int(k) for k in k_range))
    p_range = sorted(set(int(p) for p in p_range))
    if not k_range or not p_range:
        raise ValueError("ranges must be non-empty")
    opts = opts or EmOptions()

    rows = []
    reports = {}
    for k in k_range:
        for p in p_range:
            spec = MmarSpec(rows=data.rows, cols=data.cols, n_components=k,
                            orders=(p,) * k)
            dim = param_dim(spec)
            try:
                report = _fit_cell(data, k, p, opts, workers)
            except MmarError as exc:
                rows.append(SelectionRow(k, p, dim, np.nan, np.nan, np.nan,
                                         np.nan, np.nan, f"failed: {exc}"))
                continue
            crit = criteria(report.loglik, dim, data.n_obs, p)
            rows.append(SelectionRow(k, p, dim, report.loglik, crit.aic,
                                     crit.bic, crit.hq, crit.gic, "ok",
                                     report.converged))
            reports[(k, p)] = report
            if fits is not None:
                fits[(k, p)] = report
    table = SelectionTable(rows=rows)
    winner = _pick_winner(rows, criterion)
    return table, winner, reports[(winner.n_components, winner.order)]


def select_stepwise(data: MatrixSeries, k_range, p_range, criterion: str = "bic",
                    opts: EmOptions | None = None, workers: int = 1):
    """Two-stage search: pick K with order 1, then pick the order with K fixed.

    Runs |k_range| + |p_range| - 1 fits instead of the full grid. Returns
    (table, winner_row, winner_fit); the table stacks both stages.
    """
    criterion = criterion.lower()
    if criterion not in CRITERION_NAMES:
        raise ValueError(f"criterion must be one of {CRITERION_NAMES}")
    k_range = sorted(set(int(k) for k in k_range))
    p_range = sorted(set(int(p) for p in p_range))
    if not k_range or not p_range:
        raise ValueError("ranges must be non-empty")
    opts = opts or EmOptions()

    stage1_fits: dict = {}
    table1, winner1, _ = select_grid(data, k_range, [1], criterion, opts,
                                     fits=stage1_fits, workers=workers)
    chosen_k = winner1.n_components

    rows = list(table1.rows)
    stage2_rows = [r for r in table1.rows
                   if r.n_components == chosen_k and r.order == 1 and 1 in p_range]
    for p in p_range:
        if p == 1:
            continue  # reuse the stage-1 fit
        spec = MmarSpec(rows=data.rows, cols=data.cols, n_components=chosen_k,
                        orders=(p,) * chosen_k)
        dim = param_dim(spec)
        try:
            report = _fit_cell(data, chosen_k, p, opts, workers)
        except MmarError as exc:
            row = SelectionRow(chosen_k, p, dim, np.nan, np.nan, np.nan, np.nan,
                               np.nan, f"failed: {exc}")
            rows.append(row)
            continue
        crit = criteria(report.loglik, dim, data.n_obs, p)
        row = SelectionRow(chosen_k, p, dim, report.loglik, crit.aic, crit.bic,
                           crit.hq, crit.gic, "ok", report.converged)
        rows.append(row)
        stage2_rows.append(row)
        stage1_fits[(chosen_k, p)] = report

    if 1 not in p_range:
        stage2_rows = [r for r in stage2_rows if r.order in p_range]
    winner = _pick_winner(stage2_rows or rows, criterion)
    best_fit = stage1_fits[(winner.n_components, winner.order)]
    return SelectionTable(rows=rows), winner, best_fit
