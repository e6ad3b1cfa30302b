"""Canonical models, bases and initial data shared by experiments, tests and demos."""
from __future__ import annotations

import numpy as np

from .model import DampingSpec, ModelSpec, NonlinearitySpec
from .solver import State
from .spectral import DomainSpec, SpectralBasis, build_basis

STANDARD_AMPLITUDE = 0.4


def unit_basis(n: int = 32, length: float = 1.0, oversample: int = 2) -> SpectralBasis:
    return build_basis(DomainSpec(1, (length,), oversample * n), n)


def standard_model() -> ModelSpec:
    """``g = s^3``, ``f = s^3``, no forcing."""
    return ModelSpec(DampingSpec("power", 3.0), NonlinearitySpec("power", 3.0))


def gradient_model(gamma: float = 0.5, lin: float = 0.5) -> ModelSpec:
    """``g = s^3 + gamma s`` and ``f = s^3 - lin s``, no forcing."""
    return ModelSpec(
        DampingSpec("power_plus_linear", 3.0, gamma=gamma),
        NonlinearitySpec("power_minus_linear", 3.0, lin=lin),
    )


def standard_initial_state(basis: SpectralBasis, amplitude: float = STANDARD_AMPLITUDE) -> State:
    """Smooth two-mode displacement plus a first-mode velocity.

    Only the first two modes are touched, so the same physical data is used at
    every resolution.
    """
    a = np.zeros(basis.count)
    v = np.zeros(basis.count)
    a[0] = amplitude / np.sqrt(basis.eigenvalues[0])
    if basis.count > 1:
        a[1] = 0.5 * amplitude / np.sqrt(basis.eigenvalues[1])
    v[0] = 0.5 * amplitude
    return State.from_arrays(basis, a, v, 0.0)


def sample_state(basis: SpectralBasis, rng: np.random.Generator, radius: float, decay: float = 0.5) -> State:
    """Random state of H-norm exactly ``radius``.

    Coefficients are ``lambda_i^(-1/2-decay) xi_i`` for ``u`` and
    ``lambda_i^(-decay) eta_i`` for ``u_t``, drawn mode by mode, so a larger
    basis extends a smaller one's draw on its leading modes.
    """
    lam = basis.eigenvalues
    n = basis.count
    raw = rng.standard_normal((n, 2))
    a = lam ** (-0.5 - decay) * raw[:, 0]
    v = lam ** (-decay) * raw[:, 1]
    h = np.sqrt(np.sum(lam * a * a) + v @ v)
    if radius == 0 or h == 0:
        return State.from_arrays(basis, np.zeros(n), np.zeros(n), 0.0)
    return State.from_arrays(basis, a * (radius / h), v * (radius / h), 0.0)
