"""Asymptotic inference: analytic scores, observed information, intervals.

Per-observation gradients are computed analytically in the unconstrained
parameterization (full vec(B) and vech of both precision matrices), then mapped
to the constrained vector through the Jacobian of the reconstruction that
restores the dropped leading entries. The observed information comes either
from central finite differences of the analytic total score or from the outer
product of per-observation scores.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp
from scipy.stats import chi2, norm

from .exceptions import EstimationError, InvalidParameterError
from .linalg import expansion_matrix, inv_spd, vec, vech
from .model import (MatrixSeries, MmarModel, MmarSpec, ThetaLayout, ThetaVector,
                    component_conditional_means, component_log_densities,
                    lag_tensors, pack_theta, unpack_theta)

_EIG_FLOOR = 1e-10
_BOUNDARY_TOL = 1e-12

INFORMATION_METHODS = ("numeric-hessian", "outer-product-of-gradients")


class GammaLayout:
    """Index bookkeeping for the unconstrained parameter vector."""

    def __init__(self, spec: MmarSpec):
        self.spec = spec
        m, n = spec.rows, spec.cols
        self.component = []
        pos = 0
        for p in spec.orders:
            start = pos
            a_slices, b_slices = [], []
            for _ in range(p):
                a_slices.append(slice(pos, pos + m * m))
                pos += m * m
                b_slices.append(slice(pos, pos + n * n))
                pos += n * n
            c_slice = slice(pos, pos + m * n)
            pos += m * n
            u_slice = slice(pos, pos + m * (m + 1) // 2)
            pos += m * (m + 1) // 2
            v_slice = slice(pos, pos + n * (n + 1) // 2)
            pos += n * (n + 1) // 2
            self.component.append({"A": a_slices, "B": b_slices, "C": c_slice,
                                   "U": u_slice, "V": v_slice,
                                   "all": slice(start, pos)})
        self.alpha = slice(pos, pos + spec.n_components - 1)
        self.dim = pos + spec.n_components - 1


def gamma_pack(model: MmarModel) -> np.ndarray:
    """Flatten a model into the unconstrained parameterization."""
    parts = []
    for comp in model.components:
        for a, b in zip(comp.A, comp.B):
            parts.append(vec(a))
            parts.append(vec(b))
        parts.append(vec(comp.C))
        parts.append(vech(inv_spd(comp.U, name="U")))
        parts.append(vech(inv_spd(comp.V, name="V")))
    parts.append(np.asarray(model.alphas[:-1]))
    return np.concatenate(parts)


def gamma_unpack(values: np.ndarray, spec: MmarSpec) -> MmarModel:
    """Rebuild a model from the unconstrained parameterization."""
    from .linalg import mat, unvech
    from .model import MmarComponent

    layout = GammaLayout(spec)
    values = np.asarray(values, dtype=float)
    if values.size != layout.dim:
        raise ValueError(f"gamma vector has length {values.size}, expected {layout.dim}")
    m, n = spec.rows, spec.cols
    comps = []
    for k in range(spec.n_components):
        sl = layout.component[k]
        a_list = [mat(values[a_sl], m, m) for a_sl in sl["A"]]
        b_list = [mat(values[b_sl], n, n) for b_sl in sl["B"]]
        c_mat = mat(values[sl["C"]], m, n)
        u_mat = inv_spd(unvech(values[sl["U"]]), name="U^-1")
        v_mat = inv_spd(unvech(values[sl["V"]]), name="V^-1")
        comps.append(MmarComponent(A=tuple(a_list), B=tuple(b_list), C=c_mat,
                                   U=u_mat, V=v_mat))
    lead = values[layout.alpha]
    alphas = np.concatenate([lead, [1.0 - float(np.sum(lead))]])
    return MmarModel(spec=spec, components=tuple(comps), alphas=alphas)


def score_gamma_all(model: MmarModel, data: MatrixSeries) -> np.ndarray:
    """Per-observation gradients of the conditional log-likelihood in gamma.

    Returns a (T - p_max, dim_gamma) array; row t is the gradient of the
    mixture log-density of target t. Component blocks carry the posterior
    weight alpha_k f_k / sum_j alpha_j f_j.
    """
    spec = model.spec
    values = data.values
    layout = GammaLayout(spec)
    lags = lag_tensors(values, spec.p_max)
    targets = values[spec.p_max:]
    t_eff = targets.shape[0]

    logf = component_log_densities(model, values)
    logw = logf + np.log(model.alphas)
    log_mix = logsumexp(logw, axis=1)
    wts = np.exp(logw - log_mix[:, None])

    means = component_conditional_means(model, values)
    g_m = expansion_matrix(spec.rows)
    g_n = expansion_matrix(spec.cols)

    out = np.zeros((t_eff, layout.dim))
    for k, comp in enumerate(model.components):
        sl = layout.component[k]
        u_inv = inv_spd(comp.U, name="U")
        v_inv = inv_spd(comp.V, name="V")
        eps = targets - means[:, k]
        p_mat = u_inv @ eps @ v_inv
        w_k = wts[:, k][:, None]
        for i in range(comp.order):
            grad_a = (p_mat @ comp.B[i]) @ lags[i].transpose(0, 2, 1)
            out[:, sl["A"][i]] = w_k * grad_a.transpose(0, 2, 1).reshape(t_eff, -1)
            grad_b = (p_mat.transpose(0, 2, 1) @ comp.A[i]) @ lags[i]
            out[:, sl["B"][i]] = w_k * grad_b.transpose(0, 2, 1).reshape(t_eff, -1)
        out[:, sl["C"]] = w_k * p_mat.transpose(0, 2, 1).reshape(t_eff, -1)

        quad_u = (eps @ v_inv) @ eps.transpose(0, 2, 1)
        vec_qu = quad_u.transpose(0, 2, 1).reshape(t_eff, -1)
        const_u = 0.5 * spec.cols * (g_m.T @ vec(comp.U))
        out[:, sl["U"]] = w_k * (const_u[None, :] - 0.5 * (vec_qu @ g_m))

        quad_v = (eps.transpose(0, 2, 1) @ u_inv) @ eps
        vec_qv = quad_v.transpose(0, 2, 1).reshape(t_eff, -1)
        const_v = 0.5 * spec.rows * (g_n.T @ vec(comp.V))
        out[:, sl["V"]] = w_k * (const_v[None, :] - 0.5 * (vec_qv @ g_n))

    if spec.n_components > 1:
        rel = np.exp(logf - log_mix[:, None])
        out[:, layout.alpha] = rel[:, :-1] - rel[:, -1][:, None]
    return out


def score_gamma(model: MmarModel, data: MatrixSeries, t: int) -> np.ndarray:
    """Gradient of the log-density of the observation at 1-based time ``t``."""
    p_max = model.spec.p_max
    if not p_max < t <= data.n_obs:
        raise ValueError(f"t must lie in ({p_max}, {data.n_obs}]")
    return score_gamma_all(model, data)[t - p_max - 1]


def score_gamma_total(model: MmarModel, data: MatrixSeries) -> np.ndarray:
    """Sum over target times of the per-observation gamma gradients.

    Equivalent to ``score_gamma_all(...).sum(axis=0)`` but contracts over time
    first, which is what the finite-difference Hessian loop needs.
    """
    spec = model.spec
    values = data.values
    layout = GammaLayout(spec)
    lags = lag_tensors(values, spec.p_max)
    targets = values[spec.p_max:]
    t_eff = targets.shape[0]

    logf = component_log_densities(model, values)
    logw = logf + np.log(model.alphas)
    log_mix = logsumexp(logw, axis=1)
    wts = np.exp(logw - log_mix[:, None])

    means = component_conditional_means(model, values)
    g_m = expansion_matrix(spec.rows)
    g_n = expansion_matrix(spec.cols)

    out = np.zeros(layout.dim)
    for k, comp in enumerate(model.components):
        sl = layout.component[k]
        u_inv = inv_spd(comp.U, name="U")
        v_inv = inv_spd(comp.V, name="V")
        w_k = wts[:, k]
        sw = float(w_k.sum())
        eps = targets - means[:, k]
        p_mat = u_inv @ eps @ v_inv
        p_w = p_mat * w_k[:, None, None]
        for i in range(comp.order):
            tot_a = np.tensordot(p_w @ comp.B[i], lags[i], axes=([0, 2], [0, 2]))
            out[sl["A"][i]] = tot_a.T.ravel()
            tot_b = np.tensordot(p_w.transpose(0, 2, 1) @ comp.A[i], lags[i],
                                 axes=([0, 2], [0, 1]))
            out[sl["B"][i]] = tot_b.T.ravel()
        out[sl["C"]] = p_w.sum(axis=0).T.ravel()

        eps_w = eps * w_k[:, None, None]
        tot_qu = np.tensordot(eps_w @ v_inv, eps, axes=([0, 2], [0, 2]))
        out[sl["U"]] = g_m.T @ (0.5 * spec.cols * sw * vec(comp.U)
                                - 0.5 * tot_qu.T.ravel())
        tot_qv = np.tensordot(eps_w.transpose(0, 2, 1) @ u_inv, eps,
                              axes=([0, 2], [0, 1]))
        out[sl["V"]] = g_n.T @ (0.5 * spec.rows * sw * vec(comp.V)
                                - 0.5 * tot_qv.T.ravel())

    if spec.n_components > 1:
        rel = np.exp(logf - log_mix[:, None]).sum(axis=0)
        out[layout.alpha] = rel[:-1] - rel[-1]
    return out


def score_theta_total(model: MmarModel, data: MatrixSeries) -> np.ndarray:
    """Total gradient of the conditional log-likelihood in theta."""
    return theta_gamma_jacobian(model).T @ score_gamma_total(model, data)


def theta_gamma_jacobian(model: MmarModel) -> np.ndarray:
    """Jacobian d(gamma)/d(theta) of the constraint-reconstruction map.

    Rows index gamma coordinates, columns index theta coordinates. Coordinates
    shared by both parameterizations give identity rows; the rows of the
    reconstructed leading entries hold -x_j / x_1 with x_1 the reconstructed
    value. Requires a normalized model strictly inside the constraint region.
    """
    spec = model.spec
    t_layout = ThetaLayout(spec)
    g_layout = GammaLayout(spec)
    jac = np.zeros((g_layout.dim, t_layout.dim))

    for k, comp in enumerate(model.components):
        g_sl, t_sl = g_layout.component[k], t_layout.component[k]
        for i in range(comp.order):
            a_rows = np.arange(g_sl["A"][i].start, g_sl["A"][i].stop)
            jac[a_rows, np.arange(t_sl["A"][i].start, t_sl["A"][i].stop)] = 1.0
            b_vec = vec(comp.B[i])
            lead_sq = b_vec[0] ** 2
            if lead_sq <= _BOUNDARY_TOL:
                raise InvalidParameterError(
                    f"component {k} lag {i + 1}: leading B entry too close to "
                    "the constraint boundary for the chain rule")
            b_rows = np.arange(g_sl["B"][i].start + 1, g_sl["B"][i].stop)
            b_cols = np.arange(t_sl["B"][i].start, t_sl["B"][i].stop)
            jac[b_rows, b_cols] = 1.0
            jac[g_sl["B"][i].start, b_cols] = -b_vec[1:] / b_vec[0]
        c_rows = np.arange(g_sl["C"].start, g_sl["C"].stop)
        jac[c_rows, np.arange(t_sl["C"].start, t_sl["C"].stop)] = 1.0
        u_rows = np.arange(g_sl["U"].start, g_sl["U"].stop)
        jac[u_rows, np.arange(t_sl["U"].start, t_sl["U"].stop)] = 1.0
        v_vec = vech(inv_spd(comp.V, name="V"))
        if v_vec[0] ** 2 <= _BOUNDARY_TOL:
            raise InvalidParameterError(
                f"component {k}: leading vech(V^-1) entry too close to the "
                "constraint boundary for the chain rule")
        v_rows = np.arange(g_sl["V"].start + 1, g_sl["V"].stop)
        v_cols = np.arange(t_sl["V"].start, t_sl["V"].stop)
        jac[v_rows, v_cols] = 1.0
        jac[g_sl["V"].start, v_cols] = -v_vec[1:] / v_vec[0]

    if spec.n_components > 1:
        rows = np.arange(g_layout.alpha.start, g_layout.alpha.stop)
        jac[rows, np.arange(t_layout.alpha.start, t_layout.alpha.stop)] = 1.0
    return jac


def score_theta_all(model: MmarModel, data: MatrixSeries) -> np.ndarray:
    """Per-observation gradients in the constrained parameterization."""
    return score_gamma_all(model, data) @ theta_gamma_jacobian(model)


def score_theta(model: MmarModel, data: MatrixSeries, t: int) -> np.ndarray:
    return score_gamma(model, data, t) @ theta_gamma_jacobian(model)


def _information(model: MmarModel, data: MatrixSeries, method: str):
    if method not in INFORMATION_METHODS:
        raise ValueError(f"method must be one of {INFORMATION_METHODS}")
    t_eff = data.n_obs - model.spec.p_max
    flags = []
    if method == "outer-product-of-gradients":
        scores = score_theta_all(model, data)
        info = scores.T @ scores / t_eff
    else:
        theta = pack_theta(model)
        base = theta.values.copy()
        dim = base.size
        hess = np.empty((dim, dim))
        steps = 1e-5 * (1.0 + np.abs(base))
        for j in range(dim):
            plus = base.copy()
            plus[j] += steps[j]
            minus = base.copy()
            minus[j] -= steps[j]
            g_plus = score_theta_total(
                unpack_theta(ThetaVector(plus, model.spec)), data)
            g_minus = score_theta_total(
                unpack_theta(ThetaVector(minus, model.spec)), data)
            hess[:, j] = (g_plus - g_minus) / (2.0 * steps[j])
        info = -0.5 * (hess + hess.T) / t_eff

    evals, evecs = np.linalg.eigh(info)
    if evals[0] < _EIG_FLOOR:
        warnings.warn("information estimate is not positive definite; "
                      "eigenvalues clipped", UserWarning, stacklevel=3)
        flags.append("information-projected")
        evals = np.clip(evals, _EIG_FLOOR, None)
        info = (evecs * evals) @ evecs.T
    return info, evals, evecs, flags


def observed_information(model: MmarModel, data: MatrixSeries,
                         method: str = "numeric-hessian") -> np.ndarray:
    """Estimate of the per-observation information matrix (SPD-projected)."""
    info, _, _, _ = _information(model, data, method)
    return info


@dataclass
class InferenceReport:
    """Packed estimate, covariance of the estimator and per-parameter errors."""

    theta_hat: ThetaVector
    covariance: np.ndarray
    standard_errors: np.ndarray
    method: str
    n_eff: int
    flags: tuple = ()

    @property
    def spec(self) -> MmarSpec:
        return self.theta_hat.spec


def infer(model: MmarModel, data: MatrixSeries,
          method: str = "numeric-hessian") -> InferenceReport:
    """Build the covariance of the packed estimator from a fitted model."""
    theta = pack_theta(model)
    t_eff = data.n_obs - model.spec.p_max
    info, evals, evecs, flags = _information(model, data, method)
    cov = (evecs / evals) @ evecs.T / t_eff
    cov = 0.5 * (cov + cov.T)
    return InferenceReport(theta_hat=theta, covariance=cov,
                           standard_errors=np.sqrt(np.diag(cov)),
                           method=method, n_eff=t_eff, flags=tuple(flags))


def wald_intervals(report: InferenceReport, level: float = 0.95):
    """Element-wise normal intervals plus 5%-level significance marks.

    Returns (lower, upper, marks) where marks holds '+', '-' or '0' per
    parameter according to whether its 95% interval lies above, below or
    across zero.
    """
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    z_level = norm.ppf(0.5 * (1.0 + level))
    theta = report.theta_hat.values
    half = z_level * report.standard_errors
    z_mark = norm.ppf(0.975)
    lo_mark = theta - z_mark * report.standard_errors
    hi_mark = theta + z_mark * report.standard_errors
    marks = np.where(lo_mark > 0.0, "+", np.where(hi_mark < 0.0, "-", "0"))
    return theta - half, theta + half, marks


def joint_ellipse_test(report: InferenceReport, indices, level: float,
                       theta_true) -> bool:
    """True when theta_true lies inside the elliptical joint confidence region."""
    indices = np.asarray(indices, dtype=int)
    theta_true = np.asarray(theta_true, dtype=float)
    diff = report.theta_hat.values[indices] - theta_true
    sub = report.covariance[np.ix_(indices, indices)]
    try:
        stat = float(diff @ np.linalg.solve(sub, diff))
    except np.linalg.LinAlgError as exc:
        raise EstimationError("joint confidence region: sub-covariance is "
                              "singular") from exc
    if not np.isfinite(stat):
        raise EstimationError("joint confidence region: sub-covariance is "
                              "numerically singular")
    return stat <= float(chi2.ppf(level, indices.size))


def xi_indices(spec: MmarSpec, k: int) -> np.ndarray:
    """Packed-vector indices of component k's conditional-mean block."""
    return ThetaLayout(spec).xi_indices(k)


def derived_standard_errors(report: InferenceReport) -> dict:
    """Delta-method standard errors of the entries dropped from the packing.

    Covers the reconstructed leading B entries, the leading vech(V^-1) entry
    of each component, and the last mixing weight.
    """
    spec = report.spec
    layout = ThetaLayout(spec)
    theta = report.theta_hat.values
    cov = report.covariance
    out = {"B_lead": {}, "Vinv_lead": {}, "alpha_last": None}

    def delta_var(idx, grad):
        sub = cov[np.ix_(idx, idx)]
        return float(grad @ sub @ grad)

    for k in range(spec.n_components):
        sl = layout.component[k]
        for i, b_sl in enumerate(sl["B"]):
            kept = theta[b_sl]
            lead = np.sqrt(max(1.0 - float(np.sum(kept**2)), _BOUNDARY_TOL))
            grad = -kept / lead
            out["B_lead"][(k, i)] = np.sqrt(delta_var(
                np.arange(b_sl.start, b_sl.stop), grad))
        kept = theta[sl["V"]]
        lead = np.sqrt(max(1.0 - float(np.sum(kept**2)), _BOUNDARY_TOL))
        grad = -kept / lead
        out["Vinv_lead"][k] = np.sqrt(delta_var(
            np.arange(sl["V"].start, sl["V"].stop), grad))
    if spec.n_components > 1:
        idx = np.arange(layout.alpha.start, layout.alpha.stop)
        out["alpha_last"] = np.sqrt(delta_var(idx, -np.ones(idx.size)))
    else:
        out["alpha_last"] = 0.0
    return out
