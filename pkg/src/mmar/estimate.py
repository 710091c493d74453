"""Maximum likelihood estimation by EM with a blockwise coordinate-descent M-step.

The E-step computes posterior component probabilities in log space. The M-step
updates the mixing weights in closed form and then, for each component, cycles
the stationary-point updates of the lag coefficient blocks, intercept and the
two covariance scales until the weighted complete-data objective stalls. The
multi-start driver seeds EM from candidates built by fitting a scalar mixture
autoregression to individual cell series and refitting one matrix
autoregression per implied segment.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .exceptions import EstimationError, MmarError
from .model import (MatrixSeries, MmarComponent, MmarModel, MmarSpec,
                    component_log_densities, lag_tensors, normalize)
from .simulate import make_rng

_ASCENT_SLACK = 1e-8
_LOG_2PI = np.log(2.0 * np.pi)


@dataclass
class EmOptions:
    """Tuning knobs for the EM driver and the inner coordinate descent.

    ``alpha_floor`` keeps every mixing weight away from zero, mirroring the
    compact-parameter-space assumption behind the asymptotic theory; without
    it a component can collapse onto a handful of observations and inflate the
    likelihood without bound.
    """

    max_em_iters: int = 1000
    em_rel_tol: float = 1e-8
    max_inner_iters: int = 50
    inner_rel_tol: float = 1e-8
    ridge_jitter: float = 1e-8
    alpha_floor: float = 0.02
    n_starts: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.max_em_iters < 1 or self.max_inner_iters < 1:
            raise ValueError("iteration caps must be >= 1")
        if self.em_rel_tol <= 0 or self.inner_rel_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.ridge_jitter < 0:
            raise ValueError("ridge_jitter must be non-negative")
        if not 0.0 <= self.alpha_floor < 0.5:
            raise ValueError("alpha_floor must lie in [0, 0.5)")


@dataclass
class FitReport:
    """Outcome of one EM run: fitted model plus convergence diagnostics."""

    model: MmarModel
    loglik: float
    loglik_trace: np.ndarray
    responsibilities: np.ndarray
    converged: bool
    n_iters: int
    start_index: int = 0
    flags: tuple = ()
    start_logliks: tuple = ()


def _check_series(data: MatrixSeries, spec: MmarSpec) -> np.ndarray:
    if data.rows != spec.rows or data.cols != spec.cols:
        raise ValueError(f"series is {data.rows}x{data.cols}, spec expects "
                         f"{spec.rows}x{spec.cols}")
    if data.n_obs <= spec.p_max:
        raise ValueError(f"need more than p_max={spec.p_max} observations, "
                         f"got {data.n_obs}")
    return data.values


def log_likelihood(model: MmarModel, data: MatrixSeries) -> float:
    """Conditional log-likelihood, summing over targets after the first p_max lags."""
    values = _check_series(data, model.spec)
    logf = component_log_densities(model, values)
    return float(np.sum(logsumexp(logf + np.log(model.alphas), axis=1)))


def e_step(model: MmarModel, data: MatrixSeries) -> np.ndarray:
    """Posterior component probabilities, one row per target time (rows sum to 1)."""
    values = _check_series(data, model.spec)
    logw = component_log_densities(model, values) + np.log(model.alphas)
    norm = logsumexp(logw, axis=1)
    bad = ~np.isfinite(norm)
    if np.any(bad):
        t_bad = int(np.argmax(bad)) + model.spec.p_max + 1
        raise EstimationError(f"all component densities underflowed at time {t_bad}")
    return np.exp(logw - norm[:, None])


# ---------------------------------------------------------------------------
# M-step internals. The component state is carried as plain arrays: a_cat
# (m x p*m) and b_cat (n x p*n) hold the lag blocks side by side, and z is the
# (Teff, p*m, p*n) stack of block-diagonal lag matrices. All block updates run
# on weighted sufficient statistics, so the inner coordinate descent costs
# nothing per extra observation.
# ---------------------------------------------------------------------------

def _block_diag_lags(lags, order: int) -> np.ndarray:
    t_eff, m, n = lags[0].shape
    out = np.zeros((t_eff, order * m, order * n))
    for i in range(order):
        out[:, i * m:(i + 1) * m, i * n:(i + 1) * n] = lags[i]
    return out


class ComponentStats:
    """Weighted second-order statistics of (target, lag-stack) pairs.

    With y the target matrices and z the block-diagonal lag stacks, carries
    sum_t w_t of: 1, y, z, y (x) y, y (x) z and z (x) z, where (x) denotes the
    outer product over the flattened matrices. Every quantity in the block
    updates and the complete-data objective is a contraction of these, stored
    pre-permuted as 2-d matrices so each contraction is a single mat-vec.
    """

    def __init__(self, targets: np.ndarray, z: np.ndarray, w: np.ndarray):
        t_eff, m, n = targets.shape
        pm, pn = z.shape[1], z.shape[2]
        yf = targets.reshape(t_eff, m * n)
        zf = z.reshape(t_eff, pm * pn)
        wyf = yf * w[:, None]
        self.sw = float(np.sum(w))
        self.wy = wyf.sum(axis=0).reshape(m, n)
        self.wz = (zf * w[:, None]).sum(axis=0).reshape(pm, pn)
        yy = (wyf.T @ yf).reshape(m, n, m, n)
        yz = (wyf.T @ zf).reshape(m, n, pm, pn)
        zz = ((zf * w[:, None]).T @ zf).reshape(pm, pn, pm, pn)
        self.shape = (m, n, pm, pn)
        # row-form (left factor) and column-form (right factor) unfoldings
        self.yy_row = np.ascontiguousarray(yy.transpose(0, 2, 1, 3).reshape(m * m, n * n))
        self.yy_col = np.ascontiguousarray(yy.transpose(1, 3, 0, 2).reshape(n * n, m * m))
        self.yz_row = np.ascontiguousarray(yz.transpose(0, 2, 1, 3).reshape(m * pm, n * pn))
        self.yz_col = np.ascontiguousarray(yz.transpose(1, 3, 0, 2).reshape(n * pn, m * pm))
        self.zz_row = np.ascontiguousarray(zz.transpose(0, 2, 1, 3).reshape(pm * pm, pn * pn))
        self.zz_col = np.ascontiguousarray(zz.transpose(1, 3, 0, 2).reshape(pn * pn, pm * pm))


def _solve_gram(gram: np.ndarray, rhs: np.ndarray, jitter: float) -> np.ndarray:
    """Solve X @ gram = rhs for X, adding a scaled ridge once if needed."""
    try:
        out = np.linalg.solve(gram.T, rhs.T).T
        if np.all(np.isfinite(out)):
            return out
    except np.linalg.LinAlgError:
        pass
    scaled = jitter * (np.trace(gram) / gram.shape[0] + 1.0)
    try:
        out = np.linalg.solve(gram.T + scaled * np.eye(gram.shape[0]), rhs.T).T
    except np.linalg.LinAlgError as exc:
        raise EstimationError("coefficient update system is singular even after "
                              "ridge jitter") from exc
    if not np.all(np.isfinite(out)):
        raise EstimationError("coefficient update produced non-finite values")
    return out


def _repair_spd(matrix: np.ndarray, floor: float):
    """Symmetrize and floor the eigenvalues; returns (matrix, was_clipped)."""
    sym = 0.5 * (matrix + matrix.T)
    if not np.all(np.isfinite(sym)):
        raise EstimationError("covariance update produced non-finite values")
    evals, evecs = np.linalg.eigh(sym)
    if evals[0] >= floor:
        return sym, False
    evals = np.clip(evals, floor, None)
    return (evecs * evals) @ evecs.T, True


def _min_eig(matrix: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(matrix)[0])


def _pair_floor(other_cov: np.ndarray, floor: float) -> float:
    """Eigenvalue floor for one covariance factor given the other one.

    The scale split between the two factors is arbitrary (c, 1/c), so the
    degeneracy guard must bound the product of the smallest eigenvalues: it is
    an eigenvalue of the Kronecker covariance and invariant under the split.
    """
    return floor / max(_min_eig(other_cov), 1e-300)


def _chol_inverse_logdet(matrix: np.ndarray, name: str):
    """(inverse, logdet) of a small SPD matrix via its Cholesky factor."""
    try:
        low = np.linalg.cholesky(matrix)
    except np.linalg.LinAlgError as exc:
        raise EstimationError(f"{name} update lost positive definiteness") from exc
    low_inv = np.linalg.inv(low)
    return low_inv.T @ low_inv, 2.0 * float(np.sum(np.log(np.diag(low))))


def _quad_row(stats: ComponentStats, a_cat, b_cat, c, vi) -> np.ndarray:
    """sum_t w_t eps_t V^{-1} eps_t^T as a function of the sufficient stats."""
    m, pm = a_cat.shape
    r_mat = vi @ b_cat
    yy_vi = (stats.yy_row @ vi.ravel()).reshape(m, m)
    yf = (stats.yz_row @ r_mat.ravel()).reshape(m, pm) @ a_cat.T
    yh = stats.wy @ vi @ c.T
    gram = (stats.zz_row @ (b_cat.T @ r_mat).ravel()).reshape(pm, pm)
    ff = a_cat @ gram @ a_cat.T
    fh = a_cat @ stats.wz @ r_mat.T @ c.T
    hh = stats.sw * (c @ vi @ c.T)
    return yy_vi - yh - yh.T - yf - yf.T + fh + fh.T + ff + hh


def _quad_col(stats: ComponentStats, a_cat, b_cat, c, ui) -> np.ndarray:
    """sum_t w_t eps_t^T U^{-1} eps_t as a function of the sufficient stats."""
    n, pn = b_cat.shape
    t_mat = ui @ a_cat
    yy_ui = (stats.yy_col @ ui.ravel()).reshape(n, n)
    yf = (stats.yz_col @ t_mat.ravel()).reshape(n, pn) @ b_cat.T
    yh = stats.wy.T @ ui @ c
    gram = (stats.zz_col @ (a_cat.T @ t_mat).ravel()).reshape(pn, pn)
    ff = b_cat @ gram @ b_cat.T
    fh = b_cat @ stats.wz.T @ t_mat.T @ c
    hh = stats.sw * (c.T @ ui @ c)
    return yy_ui - yh - yh.T - yf - yf.T + fh + fh.T + ff + hh


def _objective_from_parts(stats, quad, logdet_u, logdet_v, m, n) -> float:
    return -0.5 * (stats.sw * (m * n * _LOG_2PI + n * logdet_u + m * logdet_v)
                   + quad)


def _component_objective(stats: ComponentStats, a_cat, b_cat, c, u, v) -> float:
    """Weighted complete-data log-likelihood contribution of one component."""
    m, n = c.shape
    ui, logdet_u = _chol_inverse_logdet(u, "U")
    vi, logdet_v = _chol_inverse_logdet(v, "V")
    quad = float(np.sum(vi * _quad_col(stats, a_cat, b_cat, c, ui)))
    return _objective_from_parts(stats, quad, logdet_u, logdet_v, m, n)


def _component_update_block(block, stats: ComponentStats, a_cat, b_cat, c, u, v,
                            jitter, floor):
    """Apply one named block update with all other blocks held fixed.

    Returns the updated (a_cat, b_cat, c, u, v, clipped) state; ``clipped`` is
    True when a covariance update had to be eigenvalue-floored.
    """
    m, pm = a_cat.shape
    n, pn = b_cat.shape
    clipped = False
    if block == "A":
        vi, _ = _chol_inverse_logdet(v, "V")
        r_mat = vi @ b_cat
        num = (stats.yz_row @ r_mat.ravel()).reshape(m, pm) - c @ r_mat @ stats.wz.T
        den = (stats.zz_row @ (b_cat.T @ r_mat).ravel()).reshape(pm, pm)
        a_cat = _solve_gram(den, num, jitter)
    elif block == "B":
        ui, _ = _chol_inverse_logdet(u, "U")
        t_mat = ui @ a_cat
        num = (stats.yz_col @ t_mat.ravel()).reshape(n, pn) - c.T @ t_mat @ stats.wz
        den = (stats.zz_col @ (a_cat.T @ t_mat).ravel()).reshape(pn, pn)
        b_cat = _solve_gram(den, num, jitter)
    elif block == "C":
        c = (stats.wy - a_cat @ stats.wz @ b_cat.T) / stats.sw
    elif block == "U":
        vi, _ = _chol_inverse_logdet(v, "V")
        raw = _quad_row(stats, a_cat, b_cat, c, vi)
        u, clipped = _repair_spd(raw / (n * stats.sw), _pair_floor(v, floor))
    elif block == "V":
        ui, _ = _chol_inverse_logdet(u, "U")
        raw = _quad_col(stats, a_cat, b_cat, c, ui)
        v, clipped = _repair_spd(raw / (m * stats.sw), _pair_floor(u, floor))
    else:
        raise ValueError(f"unknown block {block!r}")
    return a_cat, b_cat, c, u, v, clipped


def _descend_component(stats: ComponentStats, a_cat, b_cat, c, u, v,
                       opts: EmOptions, floor: float):
    """Cycle the block updates until the component objective stalls.

    Inverse factors and log-determinants are cached across blocks within a
    cycle; only the matrix a block changed is refactored.
    """
    m, pm = a_cat.shape
    n, pn = b_cat.shape
    jitter = opts.ridge_jitter
    clipped_any = False
    ui, logdet_u = _chol_inverse_logdet(u, "U")
    vi, logdet_v = _chol_inverse_logdet(v, "V")
    quad = float(np.sum(vi * _quad_col(stats, a_cat, b_cat, c, ui)))
    prev = _objective_from_parts(stats, quad, logdet_u, logdet_v, m, n)
    for _ in range(opts.max_inner_iters):
        r_mat = vi @ b_cat
        num = (stats.yz_row @ r_mat.ravel()).reshape(m, pm) - c @ r_mat @ stats.wz.T
        den = (stats.zz_row @ (b_cat.T @ r_mat).ravel()).reshape(pm, pm)
        a_cat = _solve_gram(den, num, jitter)

        t_mat = ui @ a_cat
        num = (stats.yz_col @ t_mat.ravel()).reshape(n, pn) - c.T @ t_mat @ stats.wz
        den = (stats.zz_col @ (a_cat.T @ t_mat).ravel()).reshape(pn, pn)
        b_cat = _solve_gram(den, num, jitter)

        c = (stats.wy - a_cat @ stats.wz @ b_cat.T) / stats.sw

        raw = _quad_row(stats, a_cat, b_cat, c, vi)
        u, clipped_u = _repair_spd(raw / (n * stats.sw), _pair_floor(v, floor))
        ui, logdet_u = _chol_inverse_logdet(u, "U")

        raw = _quad_col(stats, a_cat, b_cat, c, ui)
        v, clipped_v = _repair_spd(raw / (m * stats.sw), _pair_floor(u, floor))
        vi, logdet_v = _chol_inverse_logdet(v, "V")
        clipped_any = clipped_any or clipped_u or clipped_v

        quad = float(np.sum(vi * raw))
        value = _objective_from_parts(stats, quad, logdet_u, logdet_v, m, n)
        if abs(value - prev) <= opts.inner_rel_tol * (1.0 + abs(prev)):
            break
        prev = value
    return a_cat, b_cat, c, u, v, clipped_any


def _cat_blocks(mats) -> np.ndarray:
    return np.concatenate(mats, axis=1)


def _split_blocks(cat: np.ndarray, size: int):
    p = cat.shape[1] // size
    return tuple(cat[:, i * size:(i + 1) * size].copy() for i in range(p))


def _perturbed_component(comp: MmarComponent, rng: np.random.Generator,
                         scale: float = 0.1) -> MmarComponent:
    def jitter(x):
        return x * (1.0 + scale * rng.standard_normal(x.shape)) \
            + 0.01 * scale * rng.standard_normal(x.shape)

    return MmarComponent(
        A=tuple(jitter(a) for a in comp.A),
        B=tuple(jitter(b) for b in comp.B),
        C=jitter(comp.C),
        U=comp.U * (1.0 + 0.5 * scale), V=comp.V)


def _m_step_impl(model: MmarModel, values: np.ndarray, tau: np.ndarray,
                 opts: EmOptions, rng: np.random.Generator):
    spec = model.spec
    m, n = spec.rows, spec.cols
    lags = lag_tensors(values, spec.p_max)
    targets = values[spec.p_max:]
    t_eff = targets.shape[0]
    floor = 1e-8 * float(np.mean(targets * targets) + 1e-30)
    flags = set()

    alphas = tau.mean(axis=0)
    collapse_at = spec.n_components * np.finfo(float).eps * t_eff
    dominant = int(np.argmax(tau.sum(axis=0)))

    new_comps = []
    for k, comp in enumerate(model.components):
        w = tau[:, k]
        if float(w.sum()) < collapse_at:
            comp = _perturbed_component(model.components[dominant], rng)
            w = np.full(t_eff, 1.0 / t_eff)
            alphas[k] = max(alphas[k], 1.0 / (10.0 * spec.n_components))
            flags.add(f"component-restart:{k}")
        z = _block_diag_lags(lags, comp.order)
        stats = ComponentStats(targets, z, w)
        a_cat, b_cat, c, u, v, clipped = _descend_component(
            stats, _cat_blocks(comp.A), _cat_blocks(comp.B),
            comp.C.copy(), comp.U.copy(), comp.V.copy(), opts, floor)
        if clipped:
            flags.add("covariance-floor")
        new_comps.append(MmarComponent(A=_split_blocks(a_cat, m),
                                       B=_split_blocks(b_cat, n),
                                       C=c, U=u, V=v))
    floor_at = max(opts.alpha_floor, 1e-12) if spec.n_components > 1 else 0.0
    if np.any(alphas < floor_at):
        flags.add("alpha-floor")
    alphas = np.clip(alphas, max(floor_at, 1e-12), None)
    new_model = MmarModel(spec=spec, components=tuple(new_comps),
                          alphas=alphas / alphas.sum())
    return new_model, flags


def m_step(model: MmarModel, data: MatrixSeries, tau: np.ndarray,
           opts: EmOptions | None = None) -> MmarModel:
    """One EM M-step: closed-form mixing weights, then per-component descent.

    The returned model is intentionally not normalized; identifiability
    rescaling is applied once at EM exit.
    """
    opts = opts or EmOptions()
    values = _check_series(data, model.spec)
    tau = np.asarray(tau, dtype=float)
    if tau.shape != (values.shape[0] - model.spec.p_max, model.spec.n_components):
        raise ValueError("responsibility matrix shape does not match data/spec")
    new_model, _ = _m_step_impl(model, values, tau, opts, make_rng(opts.seed, 0x6D73))
    return new_model


def fit_em(data: MatrixSeries, spec: MmarSpec, init: MmarModel,
           opts: EmOptions | None = None, start_index: int = 0) -> FitReport:
    """Run EM from ``init`` until the log-likelihood change is below tolerance."""
    opts = opts or EmOptions()
    if init.spec != spec:
        raise ValueError("initial model spec does not match the requested spec")
    values = _check_series(data, spec)
    rng = make_rng(opts.seed, 0x656D)

    model = init
    if spec.n_components > 1 and opts.alpha_floor > 0 \
            and np.any(init.alphas < opts.alpha_floor):
        # project the start into the constrained weight region so every
        # iterate satisfies the same constraints (keeps EM ascent intact)
        clipped = np.clip(init.alphas, opts.alpha_floor, None)
        model = MmarModel(spec=spec, components=init.components,
                          alphas=clipped / clipped.sum())
    trace = []
    flags = set()
    converged = False
    prev = None
    for iteration in range(opts.max_em_iters + 1):
        logf = component_log_densities(model, values)
        logw = logf + np.log(model.alphas)
        per_t = logsumexp(logw, axis=1)
        loglik = float(np.sum(per_t))
        if not np.isfinite(loglik):
            raise EstimationError(f"log-likelihood became non-finite at EM "
                                  f"iteration {iteration}")
        trace.append(loglik)
        if prev is not None and abs(loglik - prev) <= opts.em_rel_tol * (1.0 + abs(loglik)):
            converged = True
            break
        if iteration == opts.max_em_iters:
            break
        prev = loglik
        tau = np.exp(logw - per_t[:, None])
        model, step_flags = _m_step_impl(model, values, tau, opts, rng)
        flags |= step_flags

    trace = np.asarray(trace)
    if np.any(np.diff(trace) < -_ASCENT_SLACK):
        flags.add("ascent-violation")
    final = normalize(model)
    return FitReport(model=final, loglik=float(trace[-1]), loglik_trace=trace,
                     responsibilities=e_step(final, data), converged=converged,
                     n_iters=len(trace) - 1, start_index=start_index,
                     flags=tuple(sorted(flags)))


# ---------------------------------------------------------------------------
# Initial values: scalar mixture fit -> segmentation -> per-segment MAR fits.
# ---------------------------------------------------------------------------

def _weighted_mar_component(values: np.ndarray, p_max: int, order: int,
                            w: np.ndarray, opts: EmOptions) -> MmarComponent:
    """Weighted single-component fit; weights select the target times."""
    lags = lag_tensors(values, p_max)
    targets = values[p_max:]
    m, n = targets.shape[1], targets.shape[2]
    sw = float(np.sum(w))
    floor = 1e-8 * float(np.mean(targets * targets) + 1e-30)

    c = np.einsum("t,tij->ij", w, targets) / sw
    resid = targets - c
    u = np.einsum("t,tij,tkj->ik", w, resid, resid) / (n * sw)
    v = np.einsum("t,tji,tjk->ik", w, resid, resid) / (m * sw)
    u, _ = _repair_spd(u, max(floor, 1e-10))
    v, _ = _repair_spd(v / max(np.trace(v) / n, 1e-12), max(floor, 1e-10))
    a_cat = np.zeros((m, order * m))
    b_cat = np.concatenate([np.eye(n)] * order, axis=1)

    inner = EmOptions(max_em_iters=1, em_rel_tol=opts.em_rel_tol,
                      max_inner_iters=max(opts.max_inner_iters, 100),
                      inner_rel_tol=min(opts.inner_rel_tol, 1e-9),
                      ridge_jitter=max(opts.ridge_jitter, 1e-10), seed=opts.seed)
    z = _block_diag_lags(lags, order)
    stats = ComponentStats(targets, z, w)
    a_cat, b_cat, c, u, v, _ = _descend_component(stats, a_cat, b_cat, c, u, v,
                                                  inner, floor)
    return MmarComponent(A=_split_blocks(a_cat, m), B=_split_blocks(b_cat, n),
                         C=c, U=u, V=v)


def _scalar_ar_baseline(y: np.ndarray, p_max: int):
    """Least-squares AR(p_max) fit of a scalar series: (coeffs, intercept, variance)."""
    t_len = y.shape[0]
    design = np.column_stack([y[p_max - i: t_len - i] for i in range(1, p_max + 1)]
                             + [np.ones(t_len - p_max)])
    target = y[p_max:]
    beta, *_ = np.linalg.lstsq(design, target, rcond=None)
    resid = target - design @ beta
    sigma2 = float(np.mean(resid**2))
    sigma2 = max(sigma2, 1e-12 * (1.0 + float(np.mean(y**2))))
    return beta[:-1], float(beta[-1]), sigma2


def _scalar_mixture_fit(y: np.ndarray, n_components: int, orders, seed: int,
                        opts: EmOptions) -> FitReport:
    """Fit a scalar K-component mixture autoregression to one cell series."""
    spec1 = MmarSpec(rows=1, cols=1, n_components=n_components, orders=orders)
    series1 = MatrixSeries(y.reshape(-1, 1, 1))
    phi, intercept, sigma2 = _scalar_ar_baseline(y, spec1.p_max)
    rng = make_rng(seed, 0x7363)

    def build(phis, inters, variances):
        comps = []
        for k in range(n_components):
            p_k = spec1.orders[k]
            comps.append(MmarComponent(
                A=tuple(np.array([[phis[k][i]]]) for i in range(p_k)),
                B=tuple(np.array([[1.0]]) for _ in range(p_k)),
                C=np.array([[inters[k]]]),
                U=np.array([[variances[k]]]), V=np.array([[1.0]])))
        return MmarModel(spec=spec1, components=tuple(comps),
                         alphas=np.full(n_components, 1.0 / n_components))

    spread = np.geomspace(0.4, 2.5, n_components)
    inits = [build([phi] * n_components, [intercept] * n_components,
                   sigma2 * spread)]
    for _ in range(2):
        phis = [phi + 0.3 * rng.standard_normal(phi.shape) for _ in range(n_components)]
        inters = intercept + 0.3 * np.sqrt(sigma2) * rng.standard_normal(n_components)
        variances = sigma2 * np.exp(rng.standard_normal(n_components))
        inits.append(build(phis, inters, variances))

    # The scalar fit only has to label the time points; a loose budget is enough.
    scalar_opts = EmOptions(max_em_iters=min(opts.max_em_iters, 60),
                            em_rel_tol=max(opts.em_rel_tol, 1e-6),
                            max_inner_iters=opts.max_inner_iters,
                            inner_rel_tol=opts.inner_rel_tol,
                            ridge_jitter=opts.ridge_jitter, seed=seed)
    best = None
    for init in inits:
        try:
            report = fit_em(series1, spec1, init, scalar_opts)
        except MmarError:
            continue
        if best is None or report.loglik > best.loglik:
            best = report
    if best is None:
        raise EstimationError("scalar mixture fit failed for every initial value")
    return best


def initial_values(data: MatrixSeries, spec: MmarSpec, seed: int = 0,
                   opts: EmOptions | None = None):
    """Build EM starting models from scalar-series segmentations.

    For each cell of the matrix a scalar mixture autoregression is fitted to
    that cell's series, each target time is assigned to its most probable
    component, and a one-component fit on every segment (lags taken from their
    original positions in the full series) supplies that component's starting
    values. Cells whose segmentation leaves any segment shorter than p_max + 2
    are skipped with a warning.
    """
    opts = opts or EmOptions()
    values = _check_series(data, spec)
    p_max = spec.p_max

    if spec.n_components == 1:
        w = np.ones(values.shape[0] - p_max)
        comp = _weighted_mar_component(values, p_max, spec.orders[0], w, opts)
        return [MmarModel(spec=spec, components=(comp,), alphas=np.array([1.0]))]

    # A usable segment must overdetermine its component fit; segments near the
    # interpolation threshold seed spurious spike components that EM keeps.
    m, n = spec.rows, spec.cols
    comp_scalars = max(p_k * (m * m + n * n - 1) + m * n + m * (m + 1) // 2
                       + n * (n + 1) // 2 - 1 for p_k in spec.orders)
    min_segment = max(p_max + 2, int(np.ceil(1.5 * comp_scalars / (m * n))))

    candidates = []
    for cell_idx in range(spec.rows * spec.cols):
        r, c = divmod(cell_idx, spec.cols)
        y = values[:, r, c]
        try:
            scalar_report = _scalar_mixture_fit(y, spec.n_components, spec.orders,
                                                seed + cell_idx, opts)
        except MmarError as exc:
            warnings.warn(f"initial-value cell ({r}, {c}): scalar fit failed ({exc})",
                          UserWarning, stacklevel=2)
            continue
        labels = np.argmax(scalar_report.responsibilities, axis=1)
        counts = np.bincount(labels, minlength=spec.n_components)
        if np.any(counts < min_segment):
            warnings.warn(
                f"initial-value cell ({r}, {c}): a segment has fewer than "
                f"{min_segment} observations; candidate skipped", UserWarning,
                stacklevel=2)
            continue
        try:
            comps = []
            for k in range(spec.n_components):
                w = (labels == k).astype(float)
                comps.append(_weighted_mar_component(values, p_max,
                                                     spec.orders[k], w, opts))
        except MmarError as exc:
            warnings.warn(f"initial-value cell ({r}, {c}): segment fit failed ({exc})",
                          UserWarning, stacklevel=2)
            continue
        freqs = np.clip(counts / counts.sum(), 1e-3, None)
        candidates.append(MmarModel(spec=spec, components=tuple(comps),
                                    alphas=freqs / freqs.sum()))
    return candidates


def _run_start(payload):
    data, spec, init, opts, idx = payload
    try:
        return fit_em(data, spec, init, opts, start_index=idx)
    except MmarError as exc:
        return f"start {idx}: {exc}"


def fit_multistart(data: MatrixSeries, spec: MmarSpec,
                   opts: EmOptions | None = None, inits=None,
                   workers: int = 1) -> FitReport:
    """Run EM from every initial-value candidate and keep the best likelihood.

    ``opts.n_starts`` trims or extends the candidate list; extra starts are
    perturbed copies of the base candidates. Explicit ``inits`` bypass the
    initial-value heuristic entirely. ``workers`` > 1 fans the starts out over
    processes; each start owns its model copy, so results do not depend on the
    worker count.
    """
    opts = opts or EmOptions()
    if inits is None:
        inits = initial_values(data, spec, opts.seed, opts)
    inits = list(inits)
    if not inits:
        raise EstimationError("no usable initial values; supply inits explicitly")
    n_starts = opts.n_starts if opts.n_starts is not None else len(inits)
    if n_starts < 1:
        raise ValueError("n_starts must be >= 1")
    inits = inits[:n_starts]
    rng = make_rng(opts.seed, 0x6D73_7461)
    base = len(inits)
    while len(inits) < n_starts:
        source = inits[len(inits) % base]
        comps = tuple(_perturbed_component(c, rng) for c in source.components)
        inits.append(MmarModel(spec=spec, components=comps, alphas=source.alphas))

    payloads = [(data, spec, init, opts, idx) for idx, init in enumerate(inits)]
    if workers > 1 and len(payloads) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_start, payloads))
    else:
        outcomes = [_run_start(p) for p in payloads]

    reports = [out for out in outcomes if isinstance(out, FitReport)]
    failures = [out for out in outcomes if not isinstance(out, FitReport)]
    if not reports:
        raise EstimationError("every EM start failed: " + "; ".join(failures))
    best = max(reports, key=lambda rep: rep.loglik)
    best.start_logliks = tuple(rep.loglik for rep in reports)
    if failures:
        best.flags = tuple(sorted(set(best.flags) | {"start-failures"}))
    return best
