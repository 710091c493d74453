"""Mixture matrix autoregression model objects.

A model with K components generates an m x n matrix observation from component
k (chosen with probability alpha_k) as

    Y_t = C_k + sum_i A_{k,i} Y_{t-i} B_{k,i}^T + E_{t,k},

with E_{t,k} matrix normal with row covariance U_k and column covariance V_k.
The scale/sign ambiguities between (A, B) and (U, V) are removed by the
normalization implemented in :func:`normalize`, and the free parameters are
packed into a flat vector by :func:`pack_theta` / :func:`unpack_theta`.
"""

from __future__ import annotations

import json
import os
import tempfile
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import linalg
from .exceptions import InvalidParameterError, NotPositiveDefiniteError

MODEL_FORMAT_VERSION = "mmar-model/1"

_NORM_TOL = 1e-8
_ALPHA_SUM_TOL = 1e-6


def _frozen_array(values, shape=None, name="array") -> np.ndarray:
    out = np.array(values, dtype=float)
    if shape is not None and out.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {out.shape}")
    if not np.all(np.isfinite(out)):
        raise ValueError(f"{name} contains non-finite entries")
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class MmarSpec:
    """Shape of a mixture matrix autoregression: dimensions, components, orders."""

    rows: int
    cols: int
    n_components: int
    orders: tuple

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("matrix dimensions must be positive")
        if self.n_components < 1:
            raise ValueError("need at least one component")
        orders = tuple(int(p) for p in self.orders)
        if len(orders) != self.n_components:
            raise ValueError("need one autoregressive order per component")
        if any(p < 1 for p in orders):
            raise ValueError("autoregressive orders must be >= 1")
        object.__setattr__(self, "orders", orders)

    @property
    def p_max(self) -> int:
        return max(self.orders)


@dataclass(frozen=True)
class MmarComponent:
    """One mixture component: lag coefficients, intercept and covariance scales."""

    A: tuple  # order-many m x m row-coefficient matrices
    B: tuple  # order-many n x n column-coefficient matrices
    C: np.ndarray  # m x n intercept
    U: np.ndarray  # m x m row covariance (SPD)
    V: np.ndarray  # n x n column covariance (SPD)

    def __post_init__(self):
        a = tuple(_frozen_array(x, name="A") for x in self.A)
        b = tuple(_frozen_array(x, name="B") for x in self.B)
        if len(a) != len(b) or not a:
            raise ValueError("A and B must hold the same positive number of lags")
        m = a[0].shape[0]
        n = b[0].shape[0]
        for x in a:
            if x.shape != (m, m):
                raise ValueError("all A lags must be square with equal size")
        for x in b:
            if x.shape != (n, n):
                raise ValueError("all B lags must be square with equal size")
        object.__setattr__(self, "A", a)
        object.__setattr__(self, "B", b)
        object.__setattr__(self, "C", _frozen_array(self.C, (m, n), "C"))
        object.__setattr__(self, "U", _frozen_array(self.U, (m, m), "U"))
        object.__setattr__(self, "V", _frozen_array(self.V, (n, n), "V"))
        linalg.cholesky_spd(self.U, name="U")
        linalg.cholesky_spd(self.V, name="V")

    @property
    def order(self) -> int:
        return len(self.A)


@dataclass(frozen=True)
class MmarModel:
    """A K-component mixture matrix autoregression."""

    spec: MmarSpec
    components: tuple
    alphas: np.ndarray

    def __post_init__(self):
        comps = tuple(self.components)
        if len(comps) != self.spec.n_components:
            raise ValueError("component count does not match spec")
        for k, comp in enumerate(comps):
            if comp.order != self.spec.orders[k]:
                raise ValueError(f"component {k} has order {comp.order}, spec says {self.spec.orders[k]}")
            if comp.C.shape != (self.spec.rows, self.spec.cols):
                raise ValueError(f"component {k} dimensions do not match spec")
        alphas = np.array(self.alphas, dtype=float).ravel()
        if alphas.size != self.spec.n_components:
            raise ValueError("need one mixing weight per component")
        if abs(alphas.sum() - 1.0) > _ALPHA_SUM_TOL:
            raise InvalidParameterError(f"mixing weights sum to {alphas.sum():.6g}, not 1")
        if alphas.size == 1:
            alphas = np.array([1.0])
        else:
            if np.any(alphas <= 0.0) or np.any(alphas >= 1.0):
                raise InvalidParameterError("mixing weights must lie strictly in (0, 1)")
            alphas = alphas / alphas.sum()
        alphas.setflags(write=False)
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "alphas", alphas)

    @property
    def n_components(self) -> int:
        return self.spec.n_components


@dataclass(frozen=True)
class MatrixSeries:
    """A time-ordered sequence of m x n matrices, stored as a (T, m, n) array."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim != 3:
            raise ValueError(f"expected a (T, m, n) array, got shape {vals.shape}")
        if vals.shape[0] < 1:
            raise ValueError("series must contain at least one observation")
        if not np.all(np.isfinite(vals)):
            raise ValueError("series contains non-finite entries")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def n_obs(self) -> int:
        return self.values.shape[0]

    @property
    def rows(self) -> int:
        return self.values.shape[1]

    @property
    def cols(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True)
class ThetaVector:
    """Flat constrained parameter vector together with its spec."""

    values: np.ndarray
    spec: MmarSpec

    def __post_init__(self):
        vals = _frozen_array(np.ravel(self.values), name="theta")
        expected = param_dim(self.spec)
        if vals.size != expected:
            raise InvalidParameterError(f"theta has length {vals.size}, spec requires {expected}")
        object.__setattr__(self, "values", vals)


def param_dim(spec: MmarSpec) -> int:
    """Number of free parameters under the identifiability constraints."""
    m, n = spec.rows, spec.cols
    total = spec.n_components - 1 + spec.n_components * m * n
    for p in spec.orders:
        total += p * (m * m + n * n - 1) + m * (m + 1) // 2 + n * (n + 1) // 2 - 1
    return total


class ThetaLayout:
    """Index bookkeeping for the packed parameter vector.

    Per component k the packed order is: vec(A_{k,1}), vec(B_{k,1}) minus its
    first entry, ..., vec(C_k), vech(U_k^{-1}), vech(V_k^{-1}) minus its first
    entry; the K-1 leading mixing weights close the vector.
    """

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
                b_slices.append(slice(pos, pos + n * n - 1))
                pos += n * n - 1
            c_slice = slice(pos, pos + m * n)
            pos += m * n
            u_slice = slice(pos, pos + m * (m + 1) // 2)
            pos += m * (m + 1) // 2
            v_slice = slice(pos, pos + n * (n + 1) // 2 - 1)
            pos += n * (n + 1) // 2 - 1
            self.component.append(
                {"A": a_slices, "B": b_slices, "C": c_slice, "U": u_slice,
                 "V": v_slice, "all": slice(start, pos)}
            )
        self.alpha = slice(pos, pos + spec.n_components - 1)
        self.dim = pos + spec.n_components - 1
        assert self.dim == param_dim(spec)

    def xi_indices(self, k: int) -> np.ndarray:
        """Indices of the conditional-mean block (all A, reduced B, C) of component k."""
        blocks = []
        comp = self.component[k]
        for a_sl, b_sl in zip(comp["A"], comp["B"]):
            blocks.append(np.arange(a_sl.start, a_sl.stop))
            blocks.append(np.arange(b_sl.start, b_sl.stop))
        blocks.append(np.arange(comp["C"].start, comp["C"].stop))
        return np.concatenate(blocks)


def _component_theta(comp: MmarComponent) -> np.ndarray:
    """Packed parameter block of one normalized component."""
    parts = []
    for a, b in zip(comp.A, comp.B):
        parts.append(linalg.vec(a))
        parts.append(linalg.vec(b)[1:])
    parts.append(linalg.vec(comp.C))
    parts.append(linalg.vech(linalg.inv_spd(comp.U, name="U")))
    parts.append(linalg.vech(linalg.inv_spd(comp.V, name="V"))[1:])
    return np.concatenate(parts)


def is_normalized(model: MmarModel, tol: float = _NORM_TOL) -> bool:
    """True when the identifiability constraints hold within ``tol``."""
    for comp in model.components:
        for b in comp.B:
            if abs(np.linalg.norm(b) - 1.0) > tol or b[0, 0] <= 0.0:
                return False
        v_inv = linalg.inv_spd(comp.V, name="V")
        if abs(np.linalg.norm(linalg.vech(v_inv)) - 1.0) > tol:
            return False
    alphas = model.alphas
    return bool(np.all(np.diff(alphas) >= -tol)) if alphas.size > 1 else True


def normalize(model: MmarModel) -> MmarModel:
    """Return the observationally equivalent model in canonical form.

    Every B lag is rescaled to unit Frobenius norm (the inverse factor moves
    into the paired A lag) and sign-flipped so its leading entry is positive;
    (U, V) are rescaled so vech(V^{-1}) has unit norm; components are sorted by
    ascending mixing weight. Conditional densities are unchanged.
    """
    new_comps = []
    for k, comp in enumerate(model.components):
        a_list, b_list = [], []
        for a, b in zip(comp.A, comp.B):
            fnorm = float(np.linalg.norm(b))
            if fnorm < 1e-300:
                raise InvalidParameterError(f"component {k} has a zero B lag matrix")
            b_new = b / fnorm
            a_new = a * fnorm
            if b_new[0, 0] < 0.0:
                b_new = -b_new
                a_new = -a_new
            a_list.append(a_new)
            b_list.append(b_new)
        v_inv = linalg.inv_spd(comp.V, name="V")
        scale = float(np.linalg.norm(linalg.vech(v_inv)))
        new_comps.append(
            MmarComponent(A=tuple(a_list), B=tuple(b_list), C=comp.C,
                          U=comp.U / scale, V=comp.V * scale)
        )

    thetas = [_component_theta(c) for c in new_comps]
    order = sorted(range(len(new_comps)),
                   key=lambda k: (model.alphas[k], tuple(thetas[k])))
    alphas = np.asarray(model.alphas)[order]
    comps = tuple(new_comps[k] for k in order)
    thetas = [thetas[k] for k in order]

    for i in range(len(comps)):
        for j in range(i + 1, len(comps)):
            if thetas[i].size == thetas[j].size and np.max(np.abs(thetas[i] - thetas[j])) < 1e-8:
                warnings.warn(
                    f"components {i} and {j} are numerically indistinguishable; "
                    "the model is near the identifiability boundary",
                    UserWarning, stacklevel=2)

    spec = MmarSpec(model.spec.rows, model.spec.cols, model.spec.n_components,
                    tuple(model.spec.orders[k] for k in order))
    return MmarModel(spec=spec, components=comps, alphas=alphas / alphas.sum())


def pack_theta(model: MmarModel) -> ThetaVector:
    """Pack a normalized model into its flat constrained parameter vector."""
    if not is_normalized(model):
        raise InvalidParameterError(
            "model must be normalized before packing; call normalize() first")
    for k, comp in enumerate(model.components):
        for i, b in enumerate(comp.B):
            if b[0, 0] == 0.0:
                raise InvalidParameterError(
                    f"component {k} lag {i + 1}: leading B entry is exactly zero, "
                    "so the sign constraint cannot pin it down")
    parts = [_component_theta(c) for c in model.components]
    parts.append(np.asarray(model.alphas[:-1]))
    return ThetaVector(values=np.concatenate(parts), spec=model.spec)


def _sqrt_radicand(total_other_sq: float, what: str) -> float:
    radicand = 1.0 - total_other_sq
    if radicand <= 0.0:
        raise InvalidParameterError(
            f"cannot reconstruct {what}: remaining entries already have squared "
            f"norm {total_other_sq:.6g} >= 1")
    return float(np.sqrt(radicand))


def unpack_theta(theta: ThetaVector) -> MmarModel:
    """Rebuild the model from a packed vector, restoring the dropped entries."""
    spec = theta.spec
    values = theta.values
    layout = ThetaLayout(spec)
    m, n = spec.rows, spec.cols

    comps = []
    for k in range(spec.n_components):
        sl = layout.component[k]
        a_list, b_list = [], []
        for a_sl, b_sl in zip(sl["A"], sl["B"]):
            a_list.append(linalg.mat(values[a_sl], m, m))
            b_kept = values[b_sl]
            b_vec = np.empty(n * n)
            b_vec[0] = _sqrt_radicand(float(np.sum(b_kept**2)), "the leading B entry")
            b_vec[1:] = b_kept
            b_list.append(linalg.mat(b_vec, n, n))
        c_mat = linalg.mat(values[sl["C"]], m, n)
        u_inv = linalg.unvech(values[sl["U"]])
        v_kept = values[sl["V"]]
        v_vec = np.empty(n * (n + 1) // 2)
        v_vec[0] = _sqrt_radicand(float(np.sum(v_kept**2)), "the leading vech(V^-1) entry")
        v_vec[1:] = v_kept
        v_inv = linalg.unvech(v_vec)
        try:
            u_mat = linalg.inv_spd(u_inv, name="U^-1")
            v_mat = linalg.inv_spd(v_inv, name="V^-1")
        except NotPositiveDefiniteError as exc:
            raise InvalidParameterError(f"component {k}: {exc}") from exc
        comps.append(MmarComponent(A=tuple(a_list), B=tuple(b_list), C=c_mat,
                                   U=u_mat, V=v_mat))

    lead = values[layout.alpha]
    alpha_last = 1.0 - float(np.sum(lead))
    if spec.n_components > 1 and (np.any(lead <= 0.0) or np.any(lead >= 1.0) or not 0.0 < alpha_last < 1.0):
        raise InvalidParameterError("mixing weights implied by theta leave (0, 1)")
    alphas = np.concatenate([lead, [alpha_last]])
    return MmarModel(spec=spec, components=tuple(comps), alphas=alphas)


def companion_matrix(model: MmarModel, k: int) -> np.ndarray:
    """Block companion matrix of component k on the stacked lag state.

    Lags beyond the component's own order are zero blocks; the sub-diagonal
    carries identity blocks. For p_max = 1 this is just kron(B, A).
    """
    spec = model.spec
    comp = model.components[k]
    d = spec.rows * spec.cols
    p = spec.p_max
    out = np.zeros((d * p, d * p))
    for i in range(comp.order):
        out[:d, i * d:(i + 1) * d] = np.kron(comp.B[i], comp.A[i])
    if p > 1:
        out[d:, :d * (p - 1)] = np.eye(d * (p - 1))
    return out


def to_constrained_var(model: MmarModel):
    """Map each component to its vector-autoregression form.

    Returns one (psi0, psi_lags, omega) triple per component, where psi0 is the
    vectorized intercept, psi_lags[i] = kron(B_{k,i+1}, A_{k,i+1}) and omega is
    the Kronecker-structured innovation covariance kron(V, U).
    """
    out = []
    for comp in model.components:
        psi0 = linalg.vec(comp.C)
        psis = [np.kron(b, a) for a, b in zip(comp.A, comp.B)]
        out.append((psi0, psis, np.kron(comp.V, comp.U)))
    return out


# ---------------------------------------------------------------------------
# Density evaluation. Everything below works on the raw (T, m, n) value array
# so the same code path serves single windows, full-sample likelihoods and the
# score computations.
# ---------------------------------------------------------------------------

def lag_tensors(values: np.ndarray, p_max: int):
    """List of i-step lagged views of ``values``, aligned with the targets.

    Element i-1 has shape (T - p_max, m, n) and holds Y_{t-i} for each target
    time t = p_max .. T-1 (0-based).
    """
    n_obs = values.shape[0]
    if n_obs <= p_max:
        raise ValueError(f"need more than p_max={p_max} observations, got {n_obs}")
    return [values[p_max - i: n_obs - i] for i in range(1, p_max + 1)]


def component_conditional_means(model: MmarModel, values: np.ndarray) -> np.ndarray:
    """Conditional means of every component at every target time, (Teff, K, m, n)."""
    spec = model.spec
    lags = lag_tensors(values, spec.p_max)
    t_eff = lags[0].shape[0]
    out = np.empty((t_eff, spec.n_components, spec.rows, spec.cols))
    for k, comp in enumerate(model.components):
        acc = np.broadcast_to(comp.C, (t_eff, spec.rows, spec.cols)).copy()
        for i in range(comp.order):
            acc += comp.A[i] @ lags[i] @ comp.B[i].T
        out[:, k] = acc
    return out


def component_log_densities(model: MmarModel, values: np.ndarray) -> np.ndarray:
    """Per-component matrix normal log-densities at every target time, (Teff, K)."""
    spec = model.spec
    m, n = spec.rows, spec.cols
    means = component_conditional_means(model, values)
    targets = values[spec.p_max:]
    t_eff = targets.shape[0]
    out = np.empty((t_eff, spec.n_components))
    const = m * n * np.log(2.0 * np.pi)
    for k, comp in enumerate(model.components):
        low_u = linalg.cholesky_spd(comp.U, name="U")
        low_v = linalg.cholesky_spd(comp.V, name="V")
        lu_inv = np.linalg.inv(low_u)
        lv_inv = np.linalg.inv(low_v)
        white = lu_inv @ (targets - means[:, k]) @ lv_inv.T
        quad = np.sum(white * white, axis=(1, 2))
        logdet_u = 2.0 * float(np.sum(np.log(np.diag(low_u))))
        logdet_v = 2.0 * float(np.sum(np.log(np.diag(low_v))))
        out[:, k] = -0.5 * (const + n * logdet_u + m * logdet_v + quad)
    return out


def conditional_log_density(model: MmarModel, window):
    """Mixture and per-component log-densities of the newest matrix in ``window``.

    ``window`` holds the p_max lagged matrices followed by the current
    observation, oldest first. Returns ``(mixture_value, per_component)`` where
    the mixture value is computed with log-sum-exp stabilization.
    """
    values = np.asarray(window, dtype=float)
    if values.ndim != 3 or values.shape[0] != model.spec.p_max + 1:
        raise ValueError(
            f"window must stack {model.spec.p_max + 1} matrices of shape "
            f"({model.spec.rows}, {model.spec.cols})")
    if values.shape[1:] != (model.spec.rows, model.spec.cols):
        raise ValueError(f"window matrices have shape {values.shape[1:]}, "
                         f"model expects ({model.spec.rows}, {model.spec.cols})")
    logf = component_log_densities(model, values)[0]
    mix = float(logsumexp(logf + np.log(model.alphas)))
    return mix, logf


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def model_to_dict(model: MmarModel) -> dict:
    return {
        "version": MODEL_FORMAT_VERSION,
        "spec": {
            "rows": model.spec.rows,
            "cols": model.spec.cols,
            "n_components": model.spec.n_components,
            "orders": list(model.spec.orders),
        },
        "alphas": np.asarray(model.alphas).tolist(),
        "components": [
            {
                "A": [a.tolist() for a in comp.A],
                "B": [b.tolist() for b in comp.B],
                "C": comp.C.tolist(),
                "U": comp.U.tolist(),
                "V": comp.V.tolist(),
            }
            for comp in model.components
        ],
    }


def model_from_dict(payload: dict) -> MmarModel:
    version = payload.get("version")
    if version != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format {version!r}, "
                         f"expected {MODEL_FORMAT_VERSION!r}")
    spec_d = payload["spec"]
    spec = MmarSpec(rows=int(spec_d["rows"]), cols=int(spec_d["cols"]),
                    n_components=int(spec_d["n_components"]),
                    orders=tuple(int(p) for p in spec_d["orders"]))
    comps = []
    for entry in payload["components"]:
        comps.append(MmarComponent(
            A=tuple(np.array(a, dtype=float) for a in entry["A"]),
            B=tuple(np.array(b, dtype=float) for b in entry["B"]),
            C=np.array(entry["C"], dtype=float),
            U=np.array(entry["U"], dtype=float),
            V=np.array(entry["V"], dtype=float),
        ))
    return MmarModel(spec=spec, components=tuple(comps),
                     alphas=np.array(payload["alphas"], dtype=float))


def save_model(path, model: MmarModel) -> None:
    """Write the model as JSON atomically (write to temp file, then rename)."""
    payload = json.dumps(model_to_dict(model), indent=1)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_model(path) -> MmarModel:
    with open(path) as handle:
        return model_from_dict(json.load(handle))
