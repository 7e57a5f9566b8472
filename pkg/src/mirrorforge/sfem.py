"""Spectral stochastic finite elements: polynomial chaos Galerkin solve.

The random modulus field enters the stiffness linearly through its spectral
modes, K(xi) = K_0 + sum_i xi_i K_i. The response is expanded in
probabilists' Hermite polynomials of the field germ; Galerkin projection
couples the expansion coefficients through the triple products
E[xi_i Psi_j Psi_k], which have a closed form for Hermite bases. The
calibration search fits the three field parameters (mean, std, correlation
length) to reference data by exhaustive grid search on average KL
divergence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations_with_replacement
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .beam import BeamModel, LoadCase, assemble_stiffness, consistent_load_vector
from .dataset import ScalingSpec
from .distributions import DEFAULT_BANDWIDTH, DEFAULT_DIRECTION, kde_fit, kl_divergence
from .errors import CalibrationError, GalerkinSingularError
from .random_field import FieldSpec, KLField, decompose

__all__ = [
    "PceBasis",
    "PCSolution",
    "CalibrationConfig",
    "SfemCalibration",
    "triple_products",
    "expand_stiffness",
    "solve_galerkin",
    "sample_tip",
    "calibrate",
    "default_parameter_grid",
]

DENSE_SYSTEM_LIMIT = 4000


def _graded_multi_indices(dimension: int, degree: int) -> tuple[tuple[int, ...], ...]:
    """All multi-indices up to total degree, graded then lexicographic."""
    terms: list[tuple[int, ...]] = []
    for total in range(degree + 1):
        block: list[tuple[int, ...]] = []
        for combo in combinations_with_replacement(range(dimension), total):
            index = [0] * dimension
            for dim in combo:
                index[dim] += 1
            block.append(tuple(index))
        block.sort(reverse=True)
        terms.extend(block)
    return tuple(terms)


def _hermite_table(x: np.ndarray, max_degree: int) -> np.ndarray:
    """Probabilists' Hermite values He_0..He_max at the points, shape (p+1, n)."""
    table = np.empty((max_degree + 1, x.size))
    table[0] = 1.0
    if max_degree >= 1:
        table[1] = x
    for k in range(1, max_degree):
        table[k + 1] = x * table[k] - k * table[k - 1]
    return table


@dataclass(frozen=True, eq=False)
class PceBasis:
    """Multi-dimensional probabilists' Hermite basis, constant term first."""

    germ_dim: int
    max_degree: int
    terms: tuple[tuple[int, ...], ...]

    @classmethod
    def build(cls, germ_dim: int, max_degree: int) -> "PceBasis":
        if germ_dim < 1 or max_degree < 0:
            raise ValueError("germ_dim must be >= 1 and max_degree >= 0")
        return cls(
            germ_dim=germ_dim,
            max_degree=max_degree,
            terms=_graded_multi_indices(germ_dim, max_degree),
        )

    @property
    def size(self) -> int:
        return len(self.terms)

    @property
    def norms_squared(self) -> np.ndarray:
        """E[Psi_j^2] = product of factorials of the multi-index."""
        return np.array(
            [math.prod(math.factorial(a) for a in term) for term in self.terms],
            dtype=float,
        )

    def evaluate(self, germs: np.ndarray) -> np.ndarray:
        """Design matrix of basis values, shape (n_samples, size)."""
        germs = np.atleast_2d(np.asarray(germs, dtype=float))
        if germs.shape[1] != self.germ_dim:
            raise ValueError(
                f"germ dimension {germs.shape[1]} does not match basis "
                f"dimension {self.germ_dim}"
            )
        tables = [
            _hermite_table(germs[:, d], self.max_degree) for d in range(self.germ_dim)
        ]
        design = np.ones((germs.shape[0], self.size))
        for j, term in enumerate(self.terms):
            for d, a in enumerate(term):
                if a:
                    design[:, j] *= tables[d][a]
        return design


def triple_products(basis: PceBasis) -> np.ndarray:
    """Closed-form E[xi_i Psi_j Psi_k] with xi_0 taken as the constant 1.

    Shape (germ_dim + 1, size, size). The one-dimensional ingredient is
    E[xi He_a He_b] = (a+1)! when b = a+1, a! when b = a-1, else 0; for the
    i = 0 slot orthogonality leaves the diagonal of squared norms.
    """
    m, size = basis.germ_dim, basis.size
    c = np.zeros((m + 1, size, size))
    np.fill_diagonal(c[0], basis.norms_squared)
    for i in range(1, m + 1):
        d = i - 1
        for j, a in enumerate(basis.terms):
            for k, b in enumerate(basis.terms):
                if any(a[x] != b[x] for x in range(m) if x != d):
                    continue
                pa, pb = a[d], b[d]
                if pb == pa + 1:
                    one_dim = math.factorial(pa + 1)
                elif pb == pa - 1:
                    one_dim = math.factorial(pa)
                else:
                    continue
                rest = math.prod(
                    math.factorial(a[x]) for x in range(m) if x != d
                )
                c[i, j, k] = one_dim * rest
    return c


def expand_stiffness(model: BeamModel, field: KLField) -> np.ndarray:
    """Stiffness modes K_0..K_m so that K(xi) = K_0 + sum xi_i K_i.

    K_0 is assembled with the field mean on every element; K_i with the
    signed pseudo-modulus sqrt(lambda_i) * phi_i at the element midpoints.
    Reproduces the assembly of an (unclamped) field realization exactly by
    linearity.
    """
    if field.n_points != model.n_elements:
        raise ValueError("field tabulation does not match the element count")
    if not np.allclose(field.midpoints, model.element_midpoints, rtol=1e-10):
        raise ValueError("field midpoints do not match the mesh midpoints")
    m = field.spec.truncation_order
    n = model.n_free_dofs
    modes = np.zeros((m + 1, n, n))
    modes[0] = assemble_stiffness(
        model, np.full(model.n_elements, field.spec.mean)
    )
    amplitudes = np.sqrt(field.eigenvalues)[:, None] * field.eigenfunctions
    for i in range(m):
        modes[i + 1] = assemble_stiffness(model, amplitudes[i])
    return modes


@dataclass(frozen=True, eq=False)
class PCSolution:
    """Polynomial chaos expansion of the displacement response.

    coefficients[j] is the nodal displacement vector (free DOFs) multiplying
    basis term j; the first row is the response mean.
    """

    basis: PceBasis
    field: KLField
    load: LoadCase
    coefficients: np.ndarray

    def __post_init__(self):
        coeffs = np.asarray(self.coefficients, dtype=float)
        if coeffs.shape[0] != self.basis.size:
            raise ValueError("coefficient rows must match basis size")
        coeffs = coeffs.copy()
        coeffs.flags.writeable = False
        object.__setattr__(self, "coefficients", coeffs)

    @property
    def tip_coefficients(self) -> np.ndarray:
        return self.coefficients[:, -2]

    @property
    def mean_tip(self) -> float:
        return float(self.tip_coefficients[0])

    @property
    def std_tip(self) -> float:
        tip = self.tip_coefficients
        return float(np.sqrt(np.sum(tip[1:] ** 2 * self.basis.norms_squared[1:])))


def solve_galerkin(
    model: BeamModel,
    field: KLField,
    basis: PceBasis,
    load: LoadCase,
    dense_limit: int = DENSE_SYSTEM_LIMIT,
) -> PCSolution:
    """Galerkin projection of the stochastic system onto the chaos basis.

    Assembles the coupled block system sum_j (sum_i c_ijk K_i) U_j = F_k
    with F_0 the deterministic load vector and zero elsewhere. Small
    systems (N * P up to ``dense_limit``) go through a dense solve; larger
    ones use a sparse Kronecker assembly. Both paths agree to round-off.
    """
    if basis.germ_dim != field.spec.truncation_order:
        raise ValueError("basis germ dimension must match field truncation order")
    modes = expand_stiffness(model, field)
    c = triple_products(basis)
    n = model.n_free_dofs
    p = basis.size
    f = consistent_load_vector(model, load.distributed_load)
    rhs = np.zeros(n * p)
    rhs[:n] = f
    if n * p <= dense_limit:
        system = np.zeros((n * p, n * p))
        for i in range(modes.shape[0]):
            system += np.kron(c[i], modes[i])
        try:
            flat = np.linalg.solve(system, rhs)
        except np.linalg.LinAlgError as exc:
            raise GalerkinSingularError("Galerkin system singular") from exc
    else:
        system = sum(
            sp.kron(sp.csr_matrix(c[i]), sp.csr_matrix(modes[i]), format="csr")
            for i in range(modes.shape[0])
        )
        with np.errstate(divide="ignore", invalid="ignore"):
            flat = spsolve(system.tocsr(), rhs)
    if not np.all(np.isfinite(flat)):
        raise GalerkinSingularError("Galerkin system singular")
    return PCSolution(
        basis=basis,
        field=field,
        load=load,
        coefficients=flat.reshape(p, n),
    )


def sample_tip(
    solution: PCSolution, n_samples: int, seed: int | np.random.Generator
) -> np.ndarray:
    """Tip displacement samples drawn through the chaos expansion."""
    rng = (
        seed
        if isinstance(seed, np.random.Generator)
        else np.random.default_rng(seed)
    )
    germs = rng.standard_normal((n_samples, solution.basis.germ_dim))
    return solution.basis.evaluate(germs) @ solution.tip_coefficients


def default_parameter_grid() -> tuple[tuple[float, float, float], ...]:
    """Exhaustive search grid: 9 means x 5 relative stds x 5 lengths."""
    means = np.linspace(1.6e9, 2.4e9, 9)
    fractions = np.linspace(0.1, 0.3, 5)
    lengths = np.linspace(1.0, 5.0, 5)
    return tuple(
        (float(mu), float(mu * frac), float(ell))
        for mu in means
        for frac in fractions
        for ell in lengths
    )


@dataclass(frozen=True)
class CalibrationConfig:
    """Settings of the field-parameter search.

    scaling maps physical tips into the units the KDE bandwidth refers to;
    it must come from the same training data the search is run on.
    """

    geometry: BeamModel
    scaling: ScalingSpec
    truncation_order: int = 2
    degree: int = 2
    n_samples: int = 20000
    seed: int = 0
    bandwidth: float = DEFAULT_BANDWIDTH
    direction: str = DEFAULT_DIRECTION
    n_workers: int = 1

    def __post_init__(self):
        if self.n_samples < 10:
            raise ValueError("n_samples must be at least 10")
        if self.n_workers < 1:
            raise ValueError("n_workers must be at least 1")


@dataclass(frozen=True, eq=False)
class SfemCalibration:
    """Result of the exhaustive parameter search.

    Holds the score table over the full grid, the winning parameters and the
    winning model's spectral pieces, including the unit-load tip
    coefficients from which tips at any load follow by linearity.
    """

    grid: tuple[tuple[float, float, float], ...]
    loads: tuple[float, ...]
    per_load_scores: np.ndarray
    scores: np.ndarray
    best_index: int
    field: KLField
    tip_coefficients_unit: np.ndarray
    basis: PceBasis
    config_summary: dict

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=float)
        finite = scores[np.isfinite(scores)]
        if finite.size == 0:
            raise CalibrationError("calibration infeasible")
        if self.scores[self.best_index] != finite.min():
            raise ValueError("best_index does not hold the minimal score")

    @property
    def best_params(self) -> tuple[float, float, float]:
        return self.grid[self.best_index]

    def sample_tips(
        self, load: float, n_samples: int, seed: int | np.random.Generator
    ) -> np.ndarray:
        rng = (
            seed
            if isinstance(seed, np.random.Generator)
            else np.random.default_rng(seed)
        )
        germs = rng.standard_normal((n_samples, self.basis.germ_dim))
        return (self.basis.evaluate(germs) @ self.tip_coefficients_unit) * load

    def to_dict(self) -> dict:
        return {
            "grid": [list(t) for t in self.grid],
            "loads": list(self.loads),
            "per_load_scores": self.per_load_scores.tolist(),
            "scores": self.scores.tolist(),
            "best_index": int(self.best_index),
            "best_params": list(self.best_params),
            "field": self.field.to_dict(),
            "tip_coefficients_unit": self.tip_coefficients_unit.tolist(),
            "basis": {
                "germ_dim": self.basis.germ_dim,
                "max_degree": self.basis.max_degree,
            },
            "config": self.config_summary,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SfemCalibration":
        basis = PceBasis.build(
            data["basis"]["germ_dim"], data["basis"]["max_degree"]
        )
        return cls(
            grid=tuple(tuple(t) for t in data["grid"]),
            loads=tuple(data["loads"]),
            per_load_scores=np.asarray(data["per_load_scores"], dtype=float),
            scores=np.asarray(data["scores"], dtype=float),
            best_index=int(data["best_index"]),
            field=KLField.from_dict(data["field"]),
            tip_coefficients_unit=np.asarray(
                data["tip_coefficients_unit"], dtype=float
            ),
            basis=basis,
            config_summary=data.get("config", {}),
        )


def _evaluate_grid_point(
    params: tuple[float, float, float],
    config: CalibrationConfig,
    basis: PceBasis,
    design: np.ndarray,
    data_kdes: dict,
) -> tuple[np.ndarray, np.ndarray | None]:
    """Per-load KL scores of one parameter triple (inf row on failure)."""
    mean, std, corr = params
    loads = sorted(data_kdes)
    try:
        spec = FieldSpec(
            mean=mean,
            std_dev=std,
            correlation_length=corr,
            domain_length=config.geometry.length,
            truncation_order=config.truncation_order,
        )
        field = decompose(spec, config.geometry.n_elements)
        solution = solve_galerkin(config.geometry, field, basis, LoadCase(1.0))
        tips_unit = design @ solution.tip_coefficients
        row = np.empty(len(loads))
        for idx, load in enumerate(loads):
            scaled = config.scaling.scale_tip(tips_unit * load)
            model_kde = kde_fit(scaled, bandwidth=config.bandwidth)
            data_kde = data_kdes[load]
            if config.direction == "data||model":
                row[idx] = kl_divergence(data_kde, model_kde)
            else:
                row[idx] = kl_divergence(model_kde, data_kde)
        return row, solution.tip_coefficients
    except (GalerkinSingularError, np.linalg.LinAlgError, ValueError):
        return np.full(len(loads), np.inf), None


def calibrate(
    training_samples: Mapping[float, np.ndarray],
    grid: Sequence[tuple[float, float, float]] | None,
    config: CalibrationConfig,
) -> SfemCalibration:
    """Exhaustive grid search over field parameters against reference data.

    For each triple the Galerkin system is solved once at unit load (tips
    scale linearly with load), a common germ sample is pushed through the
    expansion, and the per-load KL divergence against the reference
    densities is averaged. The argmin wins; ties keep the earliest grid
    point. Workers over grid points share the germ sample, and the
    reduction follows grid order regardless of worker count.

    Raises:
        CalibrationError: every grid point failed to produce a finite score.
    """
    grid = tuple(default_parameter_grid() if grid is None else
                 tuple((float(a), float(b), float(c)) for a, b, c in grid))
    if not grid:
        raise CalibrationError("calibration infeasible")
    if not training_samples:
        raise ValueError("training data must cover at least one load")
    for code, values in training_samples.items():
        if np.asarray(values).size < 100:
            raise ValueError(
                f"training load {code} has fewer than 100 samples"
            )
    loads = sorted(float(k) for k in training_samples)
    data_kdes = {
        load: kde_fit(
            config.scaling.scale_tip(np.asarray(training_samples[load], dtype=float)),
            bandwidth=config.bandwidth,
        )
        for load in loads
    }
    basis = PceBasis.build(config.truncation_order, config.degree)
    rng = np.random.default_rng(config.seed)
    design = basis.evaluate(
        rng.standard_normal((config.n_samples, config.truncation_order))
    )

    results: list[tuple[np.ndarray, np.ndarray | None]] = []
    if config.n_workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        from functools import partial

        worker = partial(
            _evaluate_grid_point,
            config=config,
            basis=basis,
            design=design,
            data_kdes=data_kdes,
        )
        with ProcessPoolExecutor(max_workers=config.n_workers) as pool:
            results = list(pool.map(worker, grid, chunksize=8))
    else:
        for params in grid:
            results.append(
                _evaluate_grid_point(params, config, basis, design, data_kdes)
            )

    per_load = np.vstack([row for row, _ in results])
    scores = per_load.mean(axis=1)
    if not np.any(np.isfinite(scores)):
        raise CalibrationError("calibration infeasible")
    best_index = int(np.nanargmin(np.where(np.isfinite(scores), scores, np.nan)))
    best_params = grid[best_index]
    best_coeffs = results[best_index][1]
    best_field = decompose(
        FieldSpec(
            mean=best_params[0],
            std_dev=best_params[1],
            correlation_length=best_params[2],
            domain_length=config.geometry.length,
            truncation_order=config.truncation_order,
        ),
        config.geometry.n_elements,
    )
    return SfemCalibration(
        grid=grid,
        loads=tuple(loads),
        per_load_scores=per_load,
        scores=scores,
        best_index=best_index,
        field=best_field,
        tip_coefficients_unit=np.asarray(best_coeffs, dtype=float),
        basis=basis,
        config_summary={
            "truncation_order": config.truncation_order,
            "degree": config.degree,
            "n_samples": config.n_samples,
            "seed": config.seed,
            "bandwidth": config.bandwidth,
            "direction": config.direction,
            "scaling": config.scaling.to_dict(),
            "geometry": {
                "length": config.geometry.length,
                "width": config.geometry.width,
                "height": config.geometry.height,
                "n_elements": config.geometry.n_elements,
            },
        },
    )
