"""Shared fixtures and model builders for the test suite."""

import numpy as np
import pytest

from mmar.model import MmarComponent, MmarModel, MmarSpec, normalize


def random_spd(rng, dim, scale=1.0, min_eig=0.2):
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    q = q * np.sign(np.diag(r))
    lam = min_eig + np.abs(rng.standard_normal(dim)) * scale
    return (q * lam) @ q.T


def _interior_b(rng, dim, min_lead=0.25):
    # keep the normalized leading entry away from the sign-constraint boundary,
    # where finite differences of the packed parameterization degenerate
    while True:
        b = rng.standard_normal((dim, dim))
        if abs(b[0, 0]) / np.linalg.norm(b) >= min_lead:
            return b


def random_model(rng, rows=2, cols=2, n_components=2, orders=None,
                 radius=0.7, normalized=True):
    """A random model whose per-component companion radii equal ``radius``.

    ``radius`` may be a scalar or one value per component; values below 1 give
    componentwise-stationary models that are safe to simulate from.
    """
    orders = tuple(orders) if orders is not None else (1,) * n_components
    spec = MmarSpec(rows=rows, cols=cols, n_components=n_components, orders=orders)
    radii = np.broadcast_to(np.asarray(radius, dtype=float), (n_components,))
    comps = []
    for k in range(n_components):
        p_k = orders[k]
        a_list = [rng.standard_normal((rows, rows)) for _ in range(p_k)]
        b_list = [_interior_b(rng, cols) for _ in range(p_k)]
        c_mat = rng.standard_normal((rows, cols))
        u_mat = random_spd(rng, rows)
        v_mat = random_spd(rng, cols)
        comps.append(MmarComponent(A=tuple(a_list), B=tuple(b_list), C=c_mat,
                                   U=u_mat, V=v_mat))
    alphas = 0.5 + rng.random(n_components)
    alphas = np.sort(alphas / alphas.sum())
    model = MmarModel(spec=spec, components=tuple(comps), alphas=alphas)

    from mmar.linalg import spectral_radius
    from mmar.model import companion_matrix

    scaled = []
    for k, comp in enumerate(model.components):
        rho = spectral_radius(companion_matrix(model, k))
        s = radii[k] / rho
        a_list = tuple(comp.A[i] * s ** (i + 1) for i in range(comp.order))
        scaled.append(MmarComponent(A=a_list, B=comp.B, C=comp.C, U=comp.U,
                                    V=comp.V))
    model = MmarModel(spec=spec, components=tuple(scaled), alphas=alphas)
    return normalize(model) if normalized else model


def two_regime_demo_model():
    """Small two-regime model mixing a contracting and an explosive regime.

    The kron(B, A) radii are roughly 0.847 and 1.099 while the
    mixing-weighted log radius stays negative, so the mixture is strictly
    stationary although one regime on its own is not.
    """
    a1 = np.array([[0.5, 0.7], [0.55, 0.4]])
    b1 = np.array([[0.3, 0.4], [0.6, 0.3]])
    a2 = np.array([[1.1, 0.2], [0.4, 1.2]])
    b2 = np.array([[0.6, 0.3], [0.2, 0.4]])
    spec = MmarSpec(rows=2, cols=2, n_components=2, orders=(1, 1))
    zeros = np.zeros((2, 2))
    eye = np.eye(2)
    comps = (
        MmarComponent(A=(a1,), B=(b1,), C=zeros, U=eye, V=eye),
        MmarComponent(A=(a2,), B=(b2,), C=zeros, U=eye, V=eye),
    )
    return MmarModel(spec=spec, components=comps, alphas=np.array([0.4, 0.6]))


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


@pytest.fixture
def demo_model():
    return two_regime_demo_model()
