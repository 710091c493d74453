"""Sampling from mixture matrix autoregressions.

The generator is Philox (counter-based), so runs are reproducible across
platforms and independent replications can derive disjoint sub-streams from a
single user seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DivergenceError
from .linalg import cholesky_spd
from .model import MatrixSeries, MmarModel

RNG_ALGORITHM = "philox4x64"
DEFAULT_BURN_IN = 500
_DIVERGENCE_CAP = 1e100


def make_rng(seed: int, *path: int) -> np.random.Generator:
    """Seeded Philox generator; extra integers select independent sub-streams."""
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(seq))


def draw_matrix_normal(mean, row_cov, col_cov, rng: np.random.Generator) -> np.ndarray:
    """One matrix normal draw: mean + L_U Z L_V^T with Z i.i.d. standard normal."""
    mean = np.asarray(mean, dtype=float)
    low_u = cholesky_spd(row_cov, name="row_cov")
    low_v = cholesky_spd(col_cov, name="col_cov")
    z = rng.standard_normal(mean.shape)
    return mean + low_u @ z @ low_v.T


@dataclass(frozen=True)
class SimulationResult:
    """A simulated path plus the latent component labels that generated it."""

    series: MatrixSeries
    labels: np.ndarray  # 1-based component index per observation
    seed: int
    burn_in: int
    rng_algorithm: str = RNG_ALGORITHM

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=int)
        if labels.shape != (self.series.n_obs,):
            raise ValueError("need exactly one label per observation")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)


def simulate(model: MmarModel, n_obs: int, burn_in: int = DEFAULT_BURN_IN,
             seed: int = 0, rng: np.random.Generator | None = None) -> SimulationResult:
    """Draw ``n_obs`` observations from the model.

    The recursion starts from zero matrices for the p_max initial lags,
    runs ``burn_in`` extra steps and discards them. At each step a component is
    drawn with its mixing probability, then the observation is the component's
    conditional mean plus matrix normal noise. Aborts with
    :class:`DivergenceError` if any entry magnitude exceeds 1e100.
    """
    if n_obs < 1:
        raise ValueError("n_obs must be >= 1")
    if burn_in < 0:
        raise ValueError("burn_in must be >= 0")
    if rng is None:
        rng = make_rng(seed)
    spec = model.spec
    m, n, p_max = spec.rows, spec.cols, spec.p_max

    chol_u = [cholesky_spd(c.U, name="U") for c in model.components]
    chol_v = [cholesky_spd(c.V, name="V") for c in model.components]
    cum_alpha = np.cumsum(model.alphas)

    lags = [np.zeros((m, n)) for _ in range(p_max)]  # lags[0] is Y_{t-1}
    total = burn_in + n_obs
    values = np.empty((n_obs, m, n))
    labels = np.empty(n_obs, dtype=int)
    for step in range(total):
        k = int(np.searchsorted(cum_alpha, rng.random(), side="right"))
        k = min(k, spec.n_components - 1)
        comp = model.components[k]
        mean = comp.C.copy()
        for i in range(comp.order):
            mean += comp.A[i] @ lags[i] @ comp.B[i].T
        z = rng.standard_normal((m, n))
        y = mean + chol_u[k] @ z @ chol_v[k].T
        if np.max(np.abs(y)) > _DIVERGENCE_CAP:
            raise DivergenceError(
                f"simulation diverged at step {step} (entry magnitude above {_DIVERGENCE_CAP:g}); "
                "the model is likely non-stationary", step=step)
        lags = [y] + lags[:-1]
        if step >= burn_in:
            values[step - burn_in] = y
            labels[step - burn_in] = k + 1
    return SimulationResult(series=MatrixSeries(values), labels=labels,
                            seed=int(seed), burn_in=int(burn_in))


def draw_one_step(model: MmarModel, window, rng: np.random.Generator,
                  size: int = 1) -> np.ndarray:
    """Sample next-step observations given the last p_max matrices (oldest first)."""
    window = np.asarray(window, dtype=float)
    if window.ndim != 3 or window.shape[0] != model.spec.p_max:
        raise ValueError(f"window must stack exactly {model.spec.p_max} lag matrices")
    means = []
    for comp in model.components:
        mean = comp.C.copy()
        for i in range(comp.order):
            mean += comp.A[i] @ window[-1 - i] @ comp.B[i].T
        means.append(mean)
    chol_u = [cholesky_spd(c.U, name="U") for c in model.components]
    chol_v = [cholesky_spd(c.V, name="V") for c in model.components]
    ks = rng.choice(model.spec.n_components, size=size, p=model.alphas)
    out = np.empty((size, model.spec.rows, model.spec.cols))
    for idx, k in enumerate(ks):
        z = rng.standard_normal((model.spec.rows, model.spec.cols))
        out[idx] = means[k] + chol_u[k] @ z @ chol_v[k].T
    return out
