"""Kernel density estimates and distribution-level mirror criteria.

Model quality is judged on distributions, not trajectories: per load code the
generated samples and the reference samples are turned into Gaussian kernel
densities on a shared grid and compared by discrete KL divergence. The
epsilon criterion is the worst KL over codes; the alpha criterion is the
fraction of reference observations inside mean +/- alpha * std intervals of
the model. Displacement samples are expected in scaled units, where the
default bandwidth of 0.1 is meaningful.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import InsufficientSamplesError

__all__ = [
    "Kde",
    "kde_fit",
    "kl_divergence",
    "kl_per_code",
    "epsilon_mirror",
    "alpha_curve",
    "MirrorReport",
    "Virtualisation",
    "build_mirror_report",
]

DEFAULT_BANDWIDTH = 0.1
DEFAULT_GRID_SIZE = 512
DEFAULT_GRID_PADDING = 3.0
DEFAULT_DIRECTION = "data||model"
MIN_SAMPLES = 10
DENSITY_FLOOR = 1e-12
DEFAULT_ALPHAS = np.round(np.arange(0.0, 5.0 + 1e-9, 0.1), 10)


def _mixture_density(samples: np.ndarray, bandwidth: float, grid: np.ndarray) -> np.ndarray:
    """Raw Gaussian-mixture density of the samples on the grid."""
    z = (grid[:, None] - samples[None, :]) / bandwidth
    kernel = np.exp(-0.5 * z**2)
    return kernel.sum(axis=1) / (samples.size * bandwidth * np.sqrt(2.0 * np.pi))


@dataclass(frozen=True, eq=False)
class Kde:
    """Gaussian kernel density, renormalized on its evaluation grid.

    Retains the samples so the density can be re-evaluated on another
    estimate's grid when two densities are compared.
    """

    samples: np.ndarray
    bandwidth: float
    grid: np.ndarray
    density: np.ndarray

    def __post_init__(self):
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")
        if np.any(self.density < 0):
            raise ValueError("density must be non-negative")
        if abs(np.trapezoid(self.density, self.grid) - 1.0) > 1e-3:
            raise ValueError("density does not integrate to 1 on its grid")
        for name in ("samples", "grid", "density"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)


def kde_fit(
    samples: np.ndarray,
    bandwidth: float = DEFAULT_BANDWIDTH,
    grid: np.ndarray | None = None,
    n_grid: int = DEFAULT_GRID_SIZE,
    padding: float = DEFAULT_GRID_PADDING,
) -> Kde:
    """Fit a Gaussian kernel density with a fixed (absolute) bandwidth.

    The default grid spans the sample range padded by ``padding`` bandwidths.
    The evaluated density is renormalized to unit trapezoidal mass on the
    grid, which keeps the normalization invariant exact even when a kernel
    tail leaks past the padding.

    Raises:
        InsufficientSamplesError: fewer than 10 samples.
    """
    samples = np.asarray(samples, dtype=float).reshape(-1)
    if samples.size < MIN_SAMPLES:
        raise InsufficientSamplesError(
            f"need at least {MIN_SAMPLES} samples for a density, got {samples.size}"
        )
    if not np.all(np.isfinite(samples)):
        raise ValueError("samples must be finite")
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    if grid is None:
        lo = samples.min() - padding * bandwidth
        hi = samples.max() + padding * bandwidth
        grid = np.linspace(lo, hi, n_grid)
    else:
        grid = np.asarray(grid, dtype=float)
    density = _mixture_density(samples, bandwidth, grid)
    density = density / np.trapezoid(density, grid)
    return Kde(samples=samples, bandwidth=bandwidth, grid=grid, density=density)


def kl_divergence(p: Kde, q: Kde, floor: float = DENSITY_FLOOR) -> float:
    """Discrete KL divergence D(p || q) on p's grid.

    q is re-evaluated from its samples on p's grid as a raw density and
    floored, so barely overlapping supports produce a finite but large value
    instead of an infinity or a silently renormalized small one.
    """
    spacings = np.diff(p.grid)
    dx = spacings.mean()
    if spacings.size and not np.allclose(spacings, dx, rtol=1e-8):
        raise ValueError("KL divergence requires a uniform grid")
    q_density = np.maximum(_mixture_density(q.samples, q.bandwidth, p.grid), floor)
    mask = p.density > 0
    value = float(
        np.sum(p.density[mask] * np.log(p.density[mask] / q_density[mask])) * dx
    )
    if value < -1e-9:
        raise ValueError(f"KL divergence came out negative ({value:.3e})")
    return max(value, 0.0)


def _paired_kl(
    data: np.ndarray,
    model: np.ndarray,
    bandwidth: float,
    direction: str,
) -> float:
    data_kde = kde_fit(data, bandwidth=bandwidth)
    model_kde = kde_fit(model, bandwidth=bandwidth)
    if direction == "data||model":
        return kl_divergence(data_kde, model_kde)
    if direction == "model||data":
        return kl_divergence(model_kde, data_kde)
    raise ValueError(f"unknown direction {direction!r}")


def kl_per_code(
    model_samples: Mapping[float, np.ndarray],
    data_samples: Mapping[float, np.ndarray],
    bandwidth: float = DEFAULT_BANDWIDTH,
    direction: str = DEFAULT_DIRECTION,
) -> dict[float, float]:
    """KL divergence between data and model samples at each load code."""
    if set(model_samples) != set(data_samples):
        raise ValueError("model and data load codes do not match")
    return {
        code: _paired_kl(
            np.asarray(data_samples[code]), np.asarray(model_samples[code]),
            bandwidth, direction,
        )
        for code in sorted(data_samples)
    }


def epsilon_mirror(
    model_samples: Mapping[float, np.ndarray],
    data_samples: Mapping[float, np.ndarray],
    tolerance: float,
    bandwidth: float = DEFAULT_BANDWIDTH,
    direction: str = DEFAULT_DIRECTION,
) -> tuple[float, bool]:
    """Worst-case KL over load codes and whether it meets the tolerance."""
    per_code = kl_per_code(model_samples, data_samples, bandwidth, direction)
    epsilon = max(per_code.values())
    return epsilon, epsilon <= tolerance


def alpha_curve(
    model_samples: Mapping[float, np.ndarray],
    observations: Mapping[float, np.ndarray],
    alphas: np.ndarray | None = None,
    per_code_average: bool = False,
) -> np.ndarray:
    """Coverage probability of model mean +/- alpha * std intervals.

    For each code the model samples define a mean and standard deviation; an
    observation at that code is covered when it falls inside the interval.
    By default coverage is pooled over all observations; with
    ``per_code_average`` the per-code coverage fractions are averaged
    instead. Returns an array of (alpha, coverage) rows, non-decreasing in
    alpha by construction. The result is invariant under any affine
    rescaling applied consistently to both sample sets.
    """
    if set(model_samples) != set(observations):
        raise ValueError("model and observation load codes do not match")
    if alphas is None:
        alphas = DEFAULT_ALPHAS
    alphas = np.asarray(alphas, dtype=float)
    codes = sorted(observations)
    fractions = np.zeros((len(codes), alphas.size))
    counts = np.zeros(len(codes))
    for i, code in enumerate(codes):
        obs = np.asarray(observations[code], dtype=float)
        gen = np.asarray(model_samples[code], dtype=float)
        center, spread = gen.mean(), gen.std()
        deviation = np.abs(obs - center)[:, None]
        inside = deviation <= alphas[None, :] * spread
        fractions[i] = inside.mean(axis=0)
        counts[i] = obs.size
    if per_code_average:
        coverage = fractions.mean(axis=0)
    else:
        coverage = (fractions * counts[:, None]).sum(axis=0) / counts.sum()
    return np.column_stack([alphas, coverage])


@dataclass(frozen=True)
class Virtualisation:
    """Names the two halves of a virtual replica: the object model and the
    model of the stochastic inputs feeding it."""

    object_model: str
    input_model: str

    def to_dict(self) -> dict:
        return {"object_model": self.object_model, "input_model": self.input_model}

    @classmethod
    def from_dict(cls, data: dict) -> "Virtualisation":
        return cls(**data)


@dataclass(frozen=True, eq=False)
class MirrorReport:
    """Mirror criteria of one model against one reference sample set.

    Attributes:
        model_id: identifier of the evaluated model.
        codes: load codes evaluated, ascending.
        kl_values: per-code KL divergence, aligned with codes.
        epsilon: max of kl_values.
        epsilon_tolerance: configured bound for the pass flag.
        pass_epsilon: whether epsilon meets the tolerance.
        alpha: (alpha, coverage) rows, coverage non-decreasing.
        virtualisation: optional description of the model pairing.
    """

    model_id: str
    codes: tuple
    kl_values: tuple
    epsilon: float
    epsilon_tolerance: float
    pass_epsilon: bool
    alpha: np.ndarray
    virtualisation: Virtualisation | None = None
    direction: str = DEFAULT_DIRECTION
    bandwidth: float = DEFAULT_BANDWIDTH

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=float)
        alpha.flags.writeable = False
        object.__setattr__(self, "alpha", alpha)
        if len(self.codes) != len(self.kl_values):
            raise ValueError("codes and kl_values must align")
        if abs(self.epsilon - max(self.kl_values)) > 1e-12:
            raise ValueError("epsilon must equal the max per-code KL")
        coverage = alpha[:, 1]
        if np.any(coverage < -1e-12) or np.any(coverage > 1.0 + 1e-12):
            raise ValueError("alpha coverage must lie in [0, 1]")
        if np.any(np.diff(coverage) < -1e-12):
            raise ValueError("alpha coverage must be non-decreasing")

    @property
    def kl_by_code(self) -> dict[float, float]:
        return dict(zip(self.codes, self.kl_values))

    @property
    def average_kl(self) -> float:
        return float(np.mean(self.kl_values))

    def coverage_at(self, alpha: float) -> float:
        """Coverage at the grid point closest to the requested alpha."""
        idx = int(np.argmin(np.abs(self.alpha[:, 0] - alpha)))
        return float(self.alpha[idx, 1])

    def to_dict(self) -> dict:
        data = {
            "model_id": self.model_id,
            "codes": list(self.codes),
            "kl_values": list(self.kl_values),
            "epsilon": self.epsilon,
            "epsilon_tolerance": self.epsilon_tolerance,
            "pass_epsilon": self.pass_epsilon,
            "alpha": self.alpha.tolist(),
            "direction": self.direction,
            "bandwidth": self.bandwidth,
        }
        if self.virtualisation is not None:
            data["virtualisation"] = self.virtualisation.to_dict()
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "MirrorReport":
        virt = data.get("virtualisation")
        return cls(
            model_id=data["model_id"],
            codes=tuple(data["codes"]),
            kl_values=tuple(data["kl_values"]),
            epsilon=data["epsilon"],
            epsilon_tolerance=data["epsilon_tolerance"],
            pass_epsilon=data["pass_epsilon"],
            alpha=np.asarray(data["alpha"], dtype=float),
            virtualisation=Virtualisation.from_dict(virt) if virt else None,
            direction=data.get("direction", DEFAULT_DIRECTION),
            bandwidth=data.get("bandwidth", DEFAULT_BANDWIDTH),
        )


def build_mirror_report(
    model_id: str,
    model_samples: Mapping[float, np.ndarray],
    data_samples: Mapping[float, np.ndarray],
    epsilon_tolerance: float,
    bandwidth: float = DEFAULT_BANDWIDTH,
    direction: str = DEFAULT_DIRECTION,
    alphas: np.ndarray | None = None,
    per_code_average: bool = False,
    virtualisation: Virtualisation | None = None,
) -> MirrorReport:
    """Assemble the full mirror report for one model from scaled samples."""
    per_code = kl_per_code(model_samples, data_samples, bandwidth, direction)
    codes = tuple(sorted(per_code))
    kl_values = tuple(per_code[c] for c in codes)
    epsilon = max(kl_values)
    alpha = alpha_curve(model_samples, data_samples, alphas, per_code_average)
    return MirrorReport(
        model_id=model_id,
        codes=codes,
        kl_values=kl_values,
        epsilon=epsilon,
        epsilon_tolerance=epsilon_tolerance,
        pass_epsilon=epsilon <= epsilon_tolerance,
        alpha=alpha,
        virtualisation=virtualisation,
        direction=direction,
        bandwidth=bandwidth,
    )
