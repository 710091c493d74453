"""Monte-Carlo experiment harness: coverage and selection-rate replications.

Replications fan out across processes (capped by the MMAR_THREADS environment
variable) with per-replicate sub-streams derived from the base seed, so results
are independent of the worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .estimate import EmOptions, fit_em, fit_multistart
from .exceptions import MmarError
from .inference import infer, joint_ellipse_test, wald_intervals, xi_indices
from .model import (MmarModel, MmarSpec, ThetaLayout, model_from_dict,
                    model_to_dict, pack_theta, param_dim)
from .selection import CRITERION_NAMES, criteria
from .simulate import make_rng, simulate


def worker_count(requested=None) -> int:
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get("MMAR_THREADS")
    if env:
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)


def _run_parallel(func, payloads, workers: int):
    if workers <= 1 or len(payloads) <= 1:
        return [func(p) for p in payloads]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, payloads))


@dataclass
class CoverageResult:
    """Element-wise and joint-region coverage rates across replications."""

    n_reps: int
    n_failed: int
    level: float
    element_coverage: np.ndarray  # per packed parameter
    block_coverage: dict  # e.g. {"A[1,1]": rate, ...}
    ellipse_coverage: dict  # {"xi1": rate, ..., "joint": rate}
    failures: tuple = ()

    def as_dict(self) -> dict:
        return {
            "n_reps": self.n_reps,
            "n_failed": self.n_failed,
            "level": self.level,
            "element_coverage": self.element_coverage.tolist(),
            "block_coverage": self.block_coverage,
            "ellipse_coverage": self.ellipse_coverage,
            "failures": list(self.failures),
        }


def _coverage_rep(payload):
    (model_dict, n_obs, burn_in, seed, rep, opts_kwargs, level, init_truth) = payload
    truth = model_from_dict(model_dict)
    opts = EmOptions(**opts_kwargs)
    try:
        sim = simulate(truth, n_obs, burn_in=burn_in, seed=seed,
                       rng=make_rng(seed, rep))
        if init_truth:
            report = fit_em(sim.series, truth.spec, truth, opts)
        else:
            report = fit_multistart(sim.series, truth.spec, opts)
        inference = infer(report.model, sim.series)
        lo, hi, _ = wald_intervals(inference, level)
        theta_true = pack_theta(truth).values
        covered = (theta_true >= lo) & (theta_true <= hi)
        spec = truth.spec
        ellipses = {}
        all_idx = []
        for k in range(spec.n_components):
            idx = xi_indices(spec, k)
            ellipses[f"xi{k + 1}"] = joint_ellipse_test(inference, idx, level,
                                                        theta_true[idx])
            all_idx.append(idx)
        joint = np.concatenate(all_idx)
        ellipses["joint"] = joint_ellipse_test(inference, joint, level,
                                               theta_true[joint])
        return ("ok", covered, ellipses)
    except (MmarError, np.linalg.LinAlgError, ValueError) as exc:
        return ("failed", f"rep {rep}: {type(exc).__name__}: {exc}", None)


def run_coverage_experiment(model: MmarModel, n_reps: int, n_obs: int,
                            seed: int = 0, level: float = 0.95,
                            burn_in: int = 500, opts: EmOptions | None = None,
                            workers=None, init_at_truth: bool = True) -> CoverageResult:
    """Simulate/fit/infer cycles from ``model`` and tabulate interval coverage."""
    truth = model_to_dict(model)
    opts = opts or EmOptions()
    opts_kwargs = {f: getattr(opts, f) for f in
                   ("max_em_iters", "em_rel_tol", "max_inner_iters",
                    "inner_rel_tol", "ridge_jitter", "n_starts", "seed")}
    payloads = [(truth, n_obs, burn_in, seed, rep, opts_kwargs, level, init_at_truth)
                for rep in range(n_reps)]
    results = _run_parallel(_coverage_rep, payloads, worker_count(workers))

    dim = pack_theta(model).values.size
    hits = np.zeros(dim)
    ellipse_hits: dict = {}
    failures = []
    n_ok = 0
    for status, a, b in results:
        if status != "ok":
            failures.append(a)
            continue
        n_ok += 1
        hits += a
        for key, inside in b.items():
            ellipse_hits[key] = ellipse_hits.get(key, 0) + int(inside)

    if n_ok == 0:
        raise MmarError("every coverage replication failed: " + "; ".join(failures[:3]))
    element = hits / n_ok
    layout = ThetaLayout(model.spec)
    blocks = {}
    for k in range(model.spec.n_components):
        sl = layout.component[k]
        for i, a_sl in enumerate(sl["A"]):
            blocks[f"A[{k + 1},{i + 1}]"] = float(np.mean(element[a_sl]))
        for i, b_sl in enumerate(sl["B"]):
            blocks[f"B[{k + 1},{i + 1}]"] = float(np.mean(element[b_sl]))
        blocks[f"C[{k + 1}]"] = float(np.mean(element[sl["C"]]))
    if model.spec.n_components > 1:
        blocks["alpha"] = float(np.mean(element[layout.alpha]))
    ellipse = {key: count / n_ok for key, count in ellipse_hits.items()}
    return CoverageResult(n_reps=n_reps, n_failed=len(failures), level=level,
                          element_coverage=element, block_coverage=blocks,
                          ellipse_coverage=ellipse, failures=tuple(failures))


@dataclass
class SelectionRates:
    """How often each criterion picked each (K, p) cell across replications."""

    n_reps: int
    n_failed: int
    rates: dict  # criterion -> {(K, p): fraction}
    failures: tuple = ()

    def rate_of(self, criterion: str, n_components: int, order: int) -> float:
        return self.rates[criterion].get((n_components, order), 0.0)

    def as_dict(self) -> dict:
        return {
            "n_reps": self.n_reps,
            "n_failed": self.n_failed,
            "rates": {crit: {f"K={k},p={p}": v for (k, p), v in table.items()}
                      for crit, table in self.rates.items()},
            "failures": list(self.failures),
        }


def _selection_rep(payload):
    (model_dict, n_obs, burn_in, seed, rep, opts_kwargs, k_range, p_range,
     criteria_list, stepwise) = payload
    truth = model_from_dict(model_dict)
    opts = EmOptions(**opts_kwargs)
    try:
        sim = simulate(truth, n_obs, burn_in=burn_in, seed=seed,
                       rng=make_rng(seed, rep))
        winners = {}
        if stepwise:
            from .selection import select_stepwise

            for crit in criteria_list:
                _, winner, _ = select_stepwise(sim.series, k_range, p_range,
                                               crit, opts)
                winners[crit] = (winner.n_components, winner.order)
        else:
            # One fit per grid cell serves every criterion.
            rows = []
            for k in k_range:
                for p in p_range:
                    spec = MmarSpec(rows=sim.series.rows, cols=sim.series.cols,
                                    n_components=k, orders=(p,) * k)
                    report = fit_multistart(sim.series, spec, opts)
                    crit = criteria(report.loglik, param_dim(spec), n_obs, p)
                    rows.append(((k, p), crit))
            for crit_name in criteria_list:
                idx = CRITERION_NAMES.index(crit_name)
                winners[crit_name] = min(rows, key=lambda cell: cell[1][idx])[0]
        return ("ok", winners, None)
    except (MmarError, np.linalg.LinAlgError, ValueError) as exc:
        return ("failed", f"rep {rep}: {type(exc).__name__}: {exc}", None)


def run_selection_experiment(model: MmarModel, n_reps: int, n_obs: int,
                             k_range, p_range, criteria_list=("bic", "gic"),
                             seed: int = 0, burn_in: int = 500,
                             opts: EmOptions | None = None, workers=None,
                             stepwise: bool = False) -> SelectionRates:
    """Simulate/select cycles; tabulates how often each criterion picks each cell."""
    criteria_list = [c.lower() for c in criteria_list]
    for crit in criteria_list:
        if crit not in CRITERION_NAMES:
            raise ValueError(f"unknown criterion {crit!r}")
    truth = model_to_dict(model)
    opts = opts or EmOptions()
    opts_kwargs = {f: getattr(opts, f) for f in
                   ("max_em_iters", "em_rel_tol", "max_inner_iters",
                    "inner_rel_tol", "ridge_jitter", "n_starts", "seed")}
    payloads = [(truth, n_obs, burn_in, seed, rep, opts_kwargs,
                 tuple(int(k) for k in k_range), tuple(int(p) for p in p_range),
                 tuple(criteria_list), stepwise)
                for rep in range(n_reps)]
    results = _run_parallel(_selection_rep, payloads, worker_count(workers))

    counts: dict = {crit: {} for crit in criteria_list}
    failures = []
    n_ok = 0
    for status, a, _ in results:
        if status != "ok":
            failures.append(a)
            continue
        n_ok += 1
        for crit, cell in a.items():
            counts[crit][cell] = counts[crit].get(cell, 0) + 1
    if n_ok == 0:
        raise MmarError("every selection replication failed: " + "; ".join(failures[:3]))
    rates = {crit: {cell: cnt / n_ok for cell, cnt in table.items()}
             for crit, table in counts.items()}
    return SelectionRates(n_reps=n_reps, n_failed=len(failures), rates=rates,
                          failures=tuple(failures))
