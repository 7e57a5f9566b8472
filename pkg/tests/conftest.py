"""Shared fixtures: the reference cantilever configuration used throughout."""

from __future__ import annotations

import numpy as np
import pytest

from mirrorforge.beam import BeamModel
from mirrorforge.random_field import FieldSpec

# Reference configuration: 5 m cantilever, 0.1 x 0.4 m section, 20 elements,
# modulus field mean 2e9 with std 0.4e9 and correlation length 3.
BEAM_LENGTH = 5.0
BEAM_WIDTH = 0.1
BEAM_HEIGHT = 0.4
N_ELEMENTS = 20
E_MEAN = 2.0e9
E_STD = 0.4e9
CORRELATION_LENGTH = 3.0


@pytest.fixture(scope="session")
def reference_beam() -> BeamModel:
    return BeamModel.uniform(BEAM_LENGTH, BEAM_WIDTH, BEAM_HEIGHT, N_ELEMENTS, E_MEAN)


@pytest.fixture(scope="session")
def reference_field_spec() -> FieldSpec:
    return FieldSpec(
        mean=E_MEAN,
        std_dev=E_STD,
        correlation_length=CORRELATION_LENGTH,
        domain_length=BEAM_LENGTH,
        truncation_order=2,
    )


def closed_form_tip(q: float, length: float, youngs: float, inertia: float) -> float:
    """Uniform-load cantilever tip deflection from beam theory."""
    return q * length**4 / (8.0 * youngs * inertia)


def flexibility_tip(q: float, length: float, inertia: float, moduli: np.ndarray) -> float:
    """Unit-load-theorem tip deflection for piecewise-constant modulus.

    tip = integral of M(x) * m(x) / (E(x) I) with M the distributed-load
    moment q (L - x)^2 / 2 and m the unit-tip-load moment (L - x); exact for
    the statically determinate cantilever.
    """
    moduli = np.asarray(moduli, dtype=float)
    n = moduli.size
    edges = np.linspace(0.0, length, n + 1)
    upper = (length - edges[:-1]) ** 4
    lower = (length - edges[1:]) ** 4
    return float(np.sum(q * (upper - lower) / (8.0 * moduli * inertia)))
