"""Prediction and residual diagnostics.

One-step point forecasts use the mixture conditional mean. Per-cell predictive
distributions are univariate normal mixtures whose highest-density regions are
extracted from a fine grid by thresholding. Residuals follow the
argmax-responsibility component assignment.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .estimate import e_step
from .linalg import cholesky_spd
from .model import MatrixSeries, MmarModel

DEFAULT_GRID_SIZE = 2048
_ENVELOPE_SIGMAS = 6.0


def _window_means(model: MmarModel, window: np.ndarray) -> np.ndarray:
    """Per-component conditional means given the last p_max lags (oldest first)."""
    window = np.asarray(window, dtype=float)
    spec = model.spec
    if window.ndim != 3 or window.shape[0] != spec.p_max:
        raise ValueError(f"window must stack exactly {spec.p_max} lag matrices")
    if window.shape[1:] != (spec.rows, spec.cols):
        raise ValueError(f"window matrices are {window.shape[1:]}, model expects "
                         f"({spec.rows}, {spec.cols})")
    means = np.empty((spec.n_components, spec.rows, spec.cols))
    for k, comp in enumerate(model.components):
        mean = comp.C.copy()
        for i in range(comp.order):
            mean += comp.A[i] @ window[-1 - i] @ comp.B[i].T
        means[k] = mean
    return means


def conditional_mean(model: MmarModel, window) -> np.ndarray:
    """Mixture conditional expectation of the next observation."""
    means = _window_means(model, window)
    return np.einsum("k,kij->ij", model.alphas, means)


@dataclass(frozen=True)
class PredictiveMarginal:
    """Density of one matrix entry's one-step predictive distribution."""

    cell: tuple
    grid: np.ndarray
    density: np.ndarray
    hdr: tuple  # disjoint (low, high) intervals, left to right
    level: float
    threshold: float

    def hdr_probability(self) -> float:
        """Probability mass carried by the highest-density region (trapezoid rule)."""
        inside = self.density >= self.threshold
        masked = np.where(inside, self.density, 0.0)
        return float(np.trapezoid(masked, self.grid))


def _mixture_density(grid, means, sigmas, weights) -> np.ndarray:
    z = (grid[None, :] - means[:, None]) / sigmas[:, None]
    comp = np.exp(-0.5 * z * z) / (sigmas[:, None] * np.sqrt(2.0 * np.pi))
    return weights @ comp


def _intervals_from_mask(grid, mask):
    edges = np.flatnonzero(np.diff(np.concatenate([[0], mask.astype(np.int8), [0]])))
    starts, stops = edges[::2], edges[1::2] - 1
    return tuple((float(grid[a]), float(grid[b])) for a, b in zip(starts, stops))


def predictive_marginal(model: MmarModel, window, cell, level: float = 0.95,
                        grid_size: int = DEFAULT_GRID_SIZE) -> PredictiveMarginal:
    """Predictive density and highest-density region of one matrix entry.

    The entry (r, c) is a K-component normal mixture with component means equal
    to entry (r, c) of each conditional mean and variances U_k[r, r] * V_k[c, c].
    The region is the superlevel set {density >= c*}; the threshold c* is found
    by bisection so that the covered probability is at least ``level``.
    """
    if not 0.0 < level <= 1.0:
        raise ValueError("level must lie in (0, 1]")
    r, c = cell
    if not (0 <= r < model.spec.rows and 0 <= c < model.spec.cols):
        raise ValueError(f"cell {cell} outside a {model.spec.rows}x{model.spec.cols} matrix")
    means = _window_means(model, window)[:, r, c]
    sigmas = np.array([np.sqrt(comp.U[r, r] * comp.V[c, c])
                       for comp in model.components])
    weights = np.asarray(model.alphas)
    lo = float(np.min(means - _ENVELOPE_SIGMAS * sigmas))
    hi = float(np.max(means + _ENVELOPE_SIGMAS * sigmas))
    grid = np.linspace(lo, hi, grid_size)
    density = _mixture_density(grid, means, sigmas, weights)

    def covered(threshold):
        return float(np.trapezoid(np.where(density >= threshold, density, 0.0), grid))

    c_lo, c_hi = 0.0, float(density.max())
    for _ in range(60):
        mid = 0.5 * (c_lo + c_hi)
        if covered(mid) >= level:
            c_lo = mid
        else:
            c_hi = mid
    threshold = c_lo  # coverage at c_lo is >= level by construction
    hdr = _intervals_from_mask(grid, density >= threshold)
    return PredictiveMarginal(cell=(int(r), int(c)), grid=grid, density=density,
                              hdr=hdr, level=float(level), threshold=float(threshold))


def residuals(model: MmarModel, data: MatrixSeries):
    """Fitted-value residuals under the most-responsible component per time.

    Returns (residual_series, labels); labels are 1-based and ties go to the
    lowest component index. The residual at target t subtracts the conditional
    mean of the component with the largest posterior probability at t.
    """
    values = data.values
    tau = e_step(model, data)
    assign = np.argmax(tau, axis=1)
    spec = model.spec
    t_eff = values.shape[0] - spec.p_max
    out = np.empty((t_eff, spec.rows, spec.cols))
    for t in range(t_eff):
        comp = model.components[assign[t]]
        mean = comp.C.copy()
        for i in range(comp.order):
            mean += comp.A[i] @ values[spec.p_max + t - 1 - i] @ comp.B[i].T
        out[t] = values[spec.p_max + t] - mean
    return MatrixSeries(out), assign + 1


def standardized_residuals(model: MmarModel, data: MatrixSeries) -> MatrixSeries:
    """Residuals whitened by the assigned component's Cholesky factors."""
    resid, labels = residuals(model, data)
    chol_u = [cholesky_spd(c.U, name="U") for c in model.components]
    chol_v = [cholesky_spd(c.V, name="V") for c in model.components]
    out = np.empty_like(resid.values)
    for t in range(resid.n_obs):
        k = labels[t] - 1
        half = solve_triangular(chol_u[k], resid.values[t], lower=True)
        out[t] = solve_triangular(chol_v[k], half.T, lower=True).T
    return MatrixSeries(out)


def mspe(forecasts, actuals) -> float:
    """Mean squared one-step prediction error in the Frobenius norm."""
    forecasts = np.asarray(forecasts, dtype=float)
    actuals = np.asarray(actuals, dtype=float)
    if forecasts.shape != actuals.shape:
        raise ValueError(f"forecasts {forecasts.shape} and actuals {actuals.shape} "
                         "must have equal shapes")
    diff = forecasts - actuals
    return float(np.mean(np.sum(diff * diff, axis=tuple(range(1, diff.ndim)))))
