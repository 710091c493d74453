"""Benchmark scenario models for the Monte-Carlo experiment harness.

Each scenario draws its coefficient matrices from standard normal entries and
its covariance scales as Q diag(|z|) Q^T with Q a random orthogonal matrix,
then rescales the lag coefficients so the per-component companion spectral
radii hit the scenario's published targets. The parameters used throughout the
test harness were generated once from fixed seeds and are shipped as JSON under
``scenario_params/``; :func:`frozen_scenario` loads them and
:func:`generate_scenario` regenerates them deterministically.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .linalg import spectral_radius
from .model import (MmarComponent, MmarModel, MmarSpec, companion_matrix,
                    model_from_dict, model_to_dict, normalize)
from .simulate import make_rng


@dataclass(frozen=True)
class ScenarioDef:
    rows: int
    cols: int
    n_components: int
    orders: tuple
    alphas: tuple
    target_radii: tuple  # per-component companion spectral radius
    frozen_seed: int


SCENARIOS = {
    # two regimes, both contracting
    "scenario1": ScenarioDef(2, 3, 2, (1, 1), (0.4, 0.6), (0.7660, 0.9516), 25),
    # two regimes, the second mildly explosive; weighted 6th-power radii < 1
    "scenario2": ScenarioDef(4, 5, 2, (1, 1), (0.4, 0.6), (0.6682, 1.0136), 119),
    # two regimes with two lags each
    "scenario3": ScenarioDef(2, 3, 2, (2, 2), (0.4, 0.6), (0.8399, 0.6691), 26),
    # three regimes with a small leading weight, one explosive
    "scenario4": ScenarioDef(4, 5, 3, (1, 1, 1), (0.1, 0.2, 0.7),
                             (0.6682, 1.0136, 0.6537), 261),
}


def _random_orthogonal(rng: np.random.Generator, dim: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    return q * np.sign(np.diag(r))


def _random_spd(rng: np.random.Generator, dim: int) -> np.ndarray:
    q = _random_orthogonal(rng, dim)
    lam = np.abs(rng.standard_normal(dim))
    return (q * lam) @ q.T


def generate_scenario(name: str, seed: int | None = None) -> MmarModel:
    """Draw a scenario model from its recipe; deterministic given the seed."""
    if name not in SCENARIOS:
        raise ValueError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}")
    spec_def = SCENARIOS[name]
    if seed is None:
        seed = spec_def.frozen_seed
    rng = make_rng(seed, 0x5343)
    m, n = spec_def.rows, spec_def.cols
    spec = MmarSpec(rows=m, cols=n, n_components=spec_def.n_components,
                    orders=spec_def.orders)

    comps = []
    for k in range(spec_def.n_components):
        p_k = spec_def.orders[k]
        a_list = [rng.standard_normal((m, m)) for _ in range(p_k)]
        b_list = [rng.standard_normal((n, n)) for _ in range(p_k)]
        c_mat = rng.standard_normal((m, n))
        u_mat = _random_spd(rng, m)
        v_mat = _random_spd(rng, n)
        comps.append(MmarComponent(A=tuple(a_list), B=tuple(b_list), C=c_mat,
                                   U=u_mat, V=v_mat))
    model = MmarModel(spec=spec, components=tuple(comps),
                      alphas=np.array(spec_def.alphas))

    # Rescale lag i of each component by s^i so the companion radius hits its
    # target exactly; the raw radius is almost surely nonzero.
    scaled = []
    for k, comp in enumerate(model.components):
        rho_raw = spectral_radius(companion_matrix(model, k))
        if rho_raw <= 0.0:
            raise RuntimeError("degenerate draw: zero companion spectral radius")
        s = spec_def.target_radii[k] / rho_raw
        a_list = tuple(comp.A[i] * s ** (i + 1) for i in range(comp.order))
        scaled.append(MmarComponent(A=a_list, B=comp.B, C=comp.C,
                                    U=comp.U, V=comp.V))
    model = MmarModel(spec=spec, components=tuple(scaled),
                      alphas=np.array(spec_def.alphas))
    return normalize(model)


def frozen_scenario(name: str) -> MmarModel:
    """Load the repo-frozen parameters of a scenario."""
    if name not in SCENARIOS:
        raise ValueError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}")
    path = resources.files("mmar").joinpath(f"scenario_params/{name}.json")
    with path.open() as handle:
        return model_from_dict(json.load(handle))


def freeze_scenarios(directory) -> None:
    """Regenerate every scenario from its frozen seed and write the JSON files."""
    import os

    os.makedirs(directory, exist_ok=True)
    for name, spec_def in SCENARIOS.items():
        model = generate_scenario(name, spec_def.frozen_seed)
        payload = model_to_dict(model)
        with open(os.path.join(directory, f"{name}.json"), "w") as handle:
            json.dump(payload, handle, indent=1)
