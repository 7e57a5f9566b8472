"""Karhunen-Loeve representation of a one-dimensional Young's modulus field.

The field is Gaussian with a squared-exponential covariance
``sigma^2 * exp(-((x - x')/l)^2)``. Its integral eigenproblem is discretized
by midpoint (Nystrom) quadrature on the element midpoints, so eigenfunctions
are tabulated exactly where the finite element assembly needs modulus values.
Truncation keeps the largest eigenvalues. Realizations are clamped below at
5% of the mean so a sampled modulus field always yields a solvable beam.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "FieldSpec",
    "GermSample",
    "KLField",
    "covariance",
    "decompose",
    "realize",
]

CLAMP_FRACTION = 0.05


@dataclass(frozen=True)
class FieldSpec:
    """Parameters of the stationary Gaussian modulus field.

    Attributes:
        mean: field mean.
        std_dev: field standard deviation (non-negative).
        correlation_length: length scale of the squared-exponential kernel.
        domain_length: length of the physical domain.
        truncation_order: number of retained eigenpairs.
    """

    mean: float
    std_dev: float
    correlation_length: float
    domain_length: float
    truncation_order: int = 2

    def __post_init__(self):
        if self.mean <= 0:
            raise ValueError("mean must be positive")
        if self.std_dev < 0:
            raise ValueError("std_dev must be non-negative")
        if self.correlation_length <= 0:
            raise ValueError("correlation_length must be positive")
        if self.domain_length <= 0:
            raise ValueError("domain_length must be positive")
        if self.truncation_order < 1:
            raise ValueError("truncation_order must be at least 1")


@dataclass(frozen=True)
class GermSample:
    """Standard-normal germ vector driving one field realization."""

    xi: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        xi = np.asarray(self.xi, dtype=float).reshape(-1)
        xi.flags.writeable = False
        object.__setattr__(self, "xi", xi)

    @classmethod
    def draw(cls, dimension: int, seed: int) -> "GermSample":
        rng = np.random.default_rng(seed)
        return cls(xi=rng.standard_normal(dimension), seed=int(seed))


def covariance(spec: FieldSpec, x: np.ndarray, x_prime: np.ndarray) -> np.ndarray:
    """Squared-exponential covariance evaluated elementwise."""
    dx = (np.asarray(x, dtype=float) - np.asarray(x_prime, dtype=float))
    return spec.std_dev**2 * np.exp(-((dx / spec.correlation_length) ** 2))


@dataclass(frozen=True, eq=False)
class KLField:
    """Truncated spectral decomposition tabulated on element midpoints.

    Attributes:
        spec: generating field parameters.
        eigenvalues: retained eigenvalues, descending, shape (m,).
        eigenfunctions: discretely orthonormal eigenfunctions, shape (m, n).
        midpoints: quadrature points, shape (n,).
    """

    spec: FieldSpec
    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray
    midpoints: np.ndarray

    def __post_init__(self):
        for name in ("eigenvalues", "eigenfunctions", "midpoints"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if np.any(self.eigenvalues < 0):
            raise ValueError("eigenvalues must be non-negative")
        if np.any(np.diff(self.eigenvalues) > 0):
            raise ValueError("eigenvalues must be sorted descending")
        m, n = self.eigenfunctions.shape
        if m != self.eigenvalues.shape[0] or n != self.midpoints.shape[0]:
            raise ValueError("inconsistent decomposition shapes")

    @property
    def n_points(self) -> int:
        return self.midpoints.shape[0]

    @property
    def quadrature_weight(self) -> float:
        return self.spec.domain_length / self.n_points

    def pointwise_variance(self) -> np.ndarray:
        """Variance of the truncated expansion at each midpoint."""
        return np.sum(
            self.eigenvalues[:, None] * self.eigenfunctions**2, axis=0
        )

    def to_dict(self) -> dict:
        return {
            "spec": {
                "mean": self.spec.mean,
                "std_dev": self.spec.std_dev,
                "correlation_length": self.spec.correlation_length,
                "domain_length": self.spec.domain_length,
                "truncation_order": self.spec.truncation_order,
            },
            "eigenvalues": self.eigenvalues.tolist(),
            "eigenfunctions": self.eigenfunctions.tolist(),
            "midpoints": self.midpoints.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "KLField":
        return cls(
            spec=FieldSpec(**data["spec"]),
            eigenvalues=np.asarray(data["eigenvalues"], dtype=float),
            eigenfunctions=np.asarray(data["eigenfunctions"], dtype=float),
            midpoints=np.asarray(data["midpoints"], dtype=float),
        )


def decompose(spec: FieldSpec, n_points: int) -> KLField:
    """Nystrom discretization of the covariance eigenproblem.

    Midpoint quadrature with uniform weight ``L / n`` keeps the discrete
    operator symmetric; eigenvalues are clamped at zero (the smallest ones of
    this kernel sit at the round-off floor) and sorted descending, and the
    eigenvectors are rescaled so the tabulated eigenfunctions are orthonormal
    under the same quadrature rule.
    """
    if n_points < spec.truncation_order:
        raise ValueError(
            f"n_points={n_points} cannot resolve truncation_order="
            f"{spec.truncation_order}"
        )
    weight = spec.domain_length / n_points
    x = weight * (np.arange(n_points) + 0.5)
    matrix = covariance(spec, x[:, None], x[None, :]) * weight
    eigenvalues, eigenvectors = np.linalg.eigh(matrix)
    order = np.argsort(eigenvalues)[::-1]
    eigenvalues = np.maximum(eigenvalues[order], 0.0)
    eigenvectors = eigenvectors[:, order]
    m = spec.truncation_order
    eigenfunctions = eigenvectors[:, :m].T / np.sqrt(weight)
    return KLField(
        spec=spec,
        eigenvalues=eigenvalues[:m],
        eigenfunctions=eigenfunctions,
        midpoints=x,
    )


def realize(field: KLField, germ: GermSample | np.ndarray) -> np.ndarray:
    """Modulus field realization(s) at the midpoints, clamped at 5% of mean.

    Accepts a single germ (shape (m,)) or a batch (shape (r, m)); the result
    has one field row per germ row.
    """
    xi = germ.xi if isinstance(germ, GermSample) else np.asarray(germ, dtype=float)
    if xi.shape[-1] != field.spec.truncation_order:
        raise ValueError(
            f"germ dimension {xi.shape[-1]} does not match truncation order "
            f"{field.spec.truncation_order}"
        )
    modes = np.sqrt(field.eigenvalues)[:, None] * field.eigenfunctions
    values = field.spec.mean + xi @ modes
    return np.maximum(values, CLAMP_FRACTION * field.spec.mean)
