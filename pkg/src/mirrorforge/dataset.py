"""Reference datasets: Monte Carlo generation, splits, scaling, persistence.

Records are (load, tip displacement, seed) triples. Seeds are derived from
(master seed, load, record index) rather than execution order, so any subset
of loads regenerates byte-identically and each CSV row is individually
reproducible. Scaling is affine per column, fitted on training data only,
and never clips: values outside the fitted range map outside the target
interval, which the extrapolation study relies on.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .beam import BeamModel, LoadCase, SofteningLaw, solve_linear_batch, solve_nonlinear
from .errors import ConvergenceError, DatasetError, DegenerateColumnError
from .random_field import FieldSpec, decompose, realize

__all__ = [
    "SampleSet",
    "ScalingSpec",
    "SplitSpec",
    "fit_scaling",
    "apply_scaling",
    "invert_scaling",
    "split",
    "generate_linear",
    "generate_nonlinear",
    "record_seed",
    "linear_reference_split",
    "nonlinear_reference_split",
    "extrapolation_fit_split",
    "extrapolation_held_out_codes",
]

PROVENANCES = ("linear-mc", "nonlinear-mc", "sfem", "cgan", "hybrid")

CSV_HEADER = ["load", "tip_displacement", "seed"]

MAX_DISCARD_FRACTION = 0.01


def record_seed(master_seed: int, load: float, index: int) -> int:
    """Stable per-record seed; independent of generation order."""
    load_key = int(round(float(load) * 1e6))
    seq = np.random.SeedSequence((int(master_seed), load_key, int(index)))
    return int(seq.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class ScalingSpec:
    """Affine per-column map onto a symmetric target interval.

    No clipping: inputs beyond the fitted source range land beyond the
    target interval.
    """

    load_min: float
    load_max: float
    tip_min: float
    tip_max: float
    target_lo: float = -1.0
    target_hi: float = 1.0

    def __post_init__(self):
        if self.load_max <= self.load_min:
            raise DegenerateColumnError("load column has zero range")
        if self.tip_max <= self.tip_min:
            raise DegenerateColumnError("tip column has zero range")
        if self.target_hi <= self.target_lo:
            raise ValueError("target interval is empty")

    def _fwd(self, x, lo, hi):
        span = self.target_hi - self.target_lo
        return self.target_lo + (np.asarray(x, dtype=float) - lo) * span / (hi - lo)

    def _inv(self, y, lo, hi):
        span = self.target_hi - self.target_lo
        return lo + (np.asarray(y, dtype=float) - self.target_lo) * (hi - lo) / span

    def scale_load(self, x):
        return self._fwd(x, self.load_min, self.load_max)

    def unscale_load(self, y):
        return self._inv(y, self.load_min, self.load_max)

    def scale_tip(self, x):
        return self._fwd(x, self.tip_min, self.tip_max)

    def unscale_tip(self, y):
        return self._inv(y, self.tip_min, self.tip_max)

    def to_dict(self) -> dict:
        return {
            "load_min": self.load_min,
            "load_max": self.load_max,
            "tip_min": self.tip_min,
            "tip_max": self.tip_max,
            "target_lo": self.target_lo,
            "target_hi": self.target_hi,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScalingSpec":
        return cls(**data)


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Aligned record columns plus provenance and optional scaling state."""

    loads: np.ndarray
    tips: np.ndarray
    seeds: np.ndarray
    provenance: str
    scaling: ScalingSpec | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        loads = np.asarray(self.loads, dtype=float)
        tips = np.asarray(self.tips, dtype=float)
        seeds = np.asarray(self.seeds, dtype=np.uint64)
        if not (loads.shape == tips.shape == seeds.shape) or loads.ndim != 1:
            raise DatasetError("record columns must be 1-d and aligned")
        if self.provenance not in PROVENANCES:
            raise DatasetError(f"unknown provenance {self.provenance!r}")
        for name, arr in (("loads", loads), ("tips", tips), ("seeds", seeds)):
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return self.loads.size

    @property
    def codes(self) -> np.ndarray:
        return np.unique(self.loads)

    def samples_for(self, code: float) -> np.ndarray:
        return self.tips[self.loads == code]

    def by_code(self) -> dict[float, np.ndarray]:
        return {float(c): self.samples_for(c) for c in self.codes}

    def subset(self, codes: Iterable[float]) -> "SampleSet":
        codes = [float(c) for c in codes]
        missing = [c for c in codes if not np.any(self.loads == c)]
        if missing:
            raise DatasetError(f"codes not present in sample set: {missing}")
        mask = np.isin(self.loads, codes)
        return replace(
            self,
            loads=self.loads[mask],
            tips=self.tips[mask],
            seeds=self.seeds[mask],
        )

    @classmethod
    def from_samples(
        cls,
        samples_by_code: Mapping[float, np.ndarray],
        provenance: str,
        scaling: ScalingSpec | None = None,
        metadata: dict | None = None,
    ) -> "SampleSet":
        loads, tips = [], []
        for code in sorted(samples_by_code):
            values = np.asarray(samples_by_code[code], dtype=float).reshape(-1)
            loads.append(np.full(values.size, float(code)))
            tips.append(values)
        loads = np.concatenate(loads) if loads else np.zeros(0)
        tips = np.concatenate(tips) if tips else np.zeros(0)
        return cls(
            loads=loads,
            tips=tips,
            seeds=np.zeros(loads.size, dtype=np.uint64),
            provenance=provenance,
            scaling=scaling,
            metadata=metadata or {},
        )

    def to_csv(self, path: str | Path) -> None:
        """Write records plus a JSON sidecar with provenance and scaling.

        Output is byte-stable for identical content: no timestamps, sorted
        JSON keys, shortest round-trip float formatting.
        """
        path = Path(path)
        with path.open("w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(CSV_HEADER)
            for load, tip, seed in zip(self.loads, self.tips, self.seeds):
                writer.writerow([repr(float(load)), repr(float(tip)), int(seed)])
        sidecar = {
            "provenance": self.provenance,
            "n_records": int(len(self)),
            "scaling": self.scaling.to_dict() if self.scaling else None,
            "metadata": self.metadata,
        }
        path.with_suffix(".json").write_text(
            json.dumps(sidecar, indent=2, sort_keys=True) + "\n"
        )

    @classmethod
    def from_csv(cls, path: str | Path) -> "SampleSet":
        path = Path(path)
        loads, tips, seeds = [], [], []
        with path.open(newline="") as handle:
            reader = csv.reader(handle)
            header = next(reader)
            if header != CSV_HEADER:
                raise DatasetError(f"unexpected CSV header {header!r}")
            for row in reader:
                loads.append(float(row[0]))
                tips.append(float(row[1]))
                seeds.append(int(row[2]))
        sidecar_path = path.with_suffix(".json")
        if not sidecar_path.exists():
            raise DatasetError(f"missing sidecar {sidecar_path}")
        sidecar = json.loads(sidecar_path.read_text())
        scaling = sidecar.get("scaling")
        return cls(
            loads=np.asarray(loads, dtype=float),
            tips=np.asarray(tips, dtype=float),
            seeds=np.asarray(seeds, dtype=np.uint64),
            provenance=sidecar["provenance"],
            scaling=ScalingSpec.from_dict(scaling) if scaling else None,
            metadata=sidecar.get("metadata", {}),
        )


def fit_scaling(
    sample_set: SampleSet, target: tuple[float, float] = (-1.0, 1.0)
) -> ScalingSpec:
    """Column min/max scaling fitted on the given (training) records."""
    if len(sample_set) == 0:
        raise DatasetError("cannot fit scaling on an empty sample set")
    return ScalingSpec(
        load_min=float(sample_set.loads.min()),
        load_max=float(sample_set.loads.max()),
        tip_min=float(sample_set.tips.min()),
        tip_max=float(sample_set.tips.max()),
        target_lo=float(target[0]),
        target_hi=float(target[1]),
    )


def apply_scaling(sample_set: SampleSet, scaling: ScalingSpec) -> SampleSet:
    if sample_set.scaling is not None:
        raise DatasetError("sample set is already scaled")
    return replace(
        sample_set,
        loads=scaling.scale_load(sample_set.loads),
        tips=scaling.scale_tip(sample_set.tips),
        scaling=scaling,
    )


def invert_scaling(sample_set: SampleSet) -> SampleSet:
    if sample_set.scaling is None:
        raise DatasetError("sample set carries no scaling to invert")
    scaling = sample_set.scaling
    return replace(
        sample_set,
        loads=scaling.unscale_load(sample_set.loads),
        tips=scaling.unscale_tip(sample_set.tips),
        scaling=None,
    )


@dataclass(frozen=True)
class SplitSpec:
    """Disjoint load-code assignment for train/validation/test."""

    train: tuple
    val: tuple
    test: tuple

    def __post_init__(self):
        groups = [tuple(float(c) for c in g) for g in (self.train, self.val, self.test)]
        for name, g in zip(("train", "val", "test"), groups):
            if len(set(g)) != len(g):
                raise ValueError(f"duplicate codes inside {name} split")
        union = groups[0] + groups[1] + groups[2]
        if len(set(union)) != len(union):
            raise ValueError("splits must be disjoint")
        object.__setattr__(self, "train", groups[0])
        object.__setattr__(self, "val", groups[1])
        object.__setattr__(self, "test", groups[2])


def split(sample_set: SampleSet, spec: SplitSpec) -> dict[str, SampleSet]:
    return {
        "train": sample_set.subset(spec.train),
        "val": sample_set.subset(spec.val),
        "test": sample_set.subset(spec.test),
    }


def linear_reference_split() -> SplitSpec:
    """Canonical split of the 20-load linear study (both range ends train)."""
    return SplitSpec(
        train=(10, 40, 70, 100, 130, 160, 200),
        val=(20, 50, 80, 110, 140, 170, 190),
        test=(30, 60, 90, 120, 150, 180),
    )


def nonlinear_reference_split() -> SplitSpec:
    """Canonical split of the 40-load softening study."""
    return SplitSpec(
        train=tuple(range(10, 401, 30)),
        val=tuple(range(20, 381, 30)),
        test=tuple(range(30, 391, 30)),
    )


def extrapolation_fit_split() -> SplitSpec:
    """Split of the restricted fit domain (loads up to 310)."""
    return SplitSpec(
        train=tuple(range(10, 311, 30)),
        val=tuple(range(20, 291, 30)),
        test=tuple(range(30, 301, 30)),
    )


def extrapolation_held_out_codes() -> tuple:
    return tuple(float(c) for c in range(320, 401, 10))


def generate_linear(
    field_spec: FieldSpec,
    loads: Iterable[float],
    n_per_load: int,
    seed: int,
    geometry: BeamModel,
) -> SampleSet:
    """Monte Carlo tips of the linear beam under a random modulus field.

    Per load and record index a germ is drawn from the derived record seed,
    the field realized (clamped), and the batch of systems solved at once.
    """
    loads = [float(q) for q in loads]
    field = decompose(field_spec, geometry.n_elements)
    m = field_spec.truncation_order
    all_loads, all_tips, all_seeds = [], [], []
    for q in sorted(loads):
        seeds = np.array(
            [record_seed(seed, q, i) for i in range(n_per_load)], dtype=np.uint64
        )
        germs = np.stack(
            [np.random.default_rng(s).standard_normal(m) for s in seeds]
        )
        moduli = realize(field, germs)
        tips = solve_linear_batch(geometry, moduli, LoadCase(q))
        all_loads.append(np.full(n_per_load, q))
        all_tips.append(tips)
        all_seeds.append(seeds)
    return SampleSet(
        loads=np.concatenate(all_loads),
        tips=np.concatenate(all_tips),
        seeds=np.concatenate(all_seeds),
        provenance="linear-mc",
        metadata={
            "master_seed": int(seed),
            "n_per_load": int(n_per_load),
            "field": {
                "mean": field_spec.mean,
                "std_dev": field_spec.std_dev,
                "correlation_length": field_spec.correlation_length,
                "domain_length": field_spec.domain_length,
                "truncation_order": field_spec.truncation_order,
            },
        },
    )


def generate_nonlinear(
    e_mean: float,
    e_std: float,
    law: SofteningLaw,
    total_load: float,
    n_steps: int,
    n_realizations: int,
    seed: int,
    geometry: BeamModel,
) -> SampleSet:
    """Monte Carlo load curves of the softening beam with scalar random modulus.

    Each realization draws one modulus, runs the incremental solve, and
    contributes one tip to every load level, so records at different loads
    are dependent across a realization. Non-converged realizations are
    discarded and redrawn (fresh derived seed); more than 1% discards is an
    error.
    """
    records = []
    n_discarded = 0
    max_discards = int(np.floor(MAX_DISCARD_FRACTION * n_realizations))
    for r in range(n_realizations):
        attempt = 0
        while True:
            seq = np.random.SeedSequence((int(seed), int(r), int(attempt)))
            realization_seed = int(seq.generate_state(1, np.uint64)[0])
            rng = np.random.default_rng(realization_seed)
            modulus = e_mean + e_std * rng.standard_normal()
            modulus = max(modulus, 0.05 * e_mean)
            model = geometry.with_moduli(np.full(geometry.n_elements, modulus))
            realization_law = SofteningLaw(
                e0=modulus, alpha=law.alpha, floor=law.floor
            )
            try:
                tips = solve_nonlinear(
                    model, realization_law, LoadCase(total_load, n_steps)
                )
                break
            except ConvergenceError:
                n_discarded += 1
                attempt += 1
                if n_discarded > max_discards:
                    raise DatasetError(
                        f"discarded {n_discarded} realizations, more than "
                        f"{MAX_DISCARD_FRACTION:.0%} of {n_realizations}"
                    )
        for k in range(n_steps):
            load = total_load * (k + 1) / n_steps
            records.append((load, tips[k], realization_seed, r))
    records.sort(key=lambda rec: (rec[0], rec[3]))
    return SampleSet(
        loads=np.array([rec[0] for rec in records]),
        tips=np.array([rec[1] for rec in records]),
        seeds=np.array([rec[2] for rec in records], dtype=np.uint64),
        provenance="nonlinear-mc",
        metadata={
            "master_seed": int(seed),
            "n_realizations": int(n_realizations),
            "n_discarded": int(n_discarded),
            "e_mean": e_mean,
            "e_std": e_std,
            "alpha": law.alpha,
            "floor": law.floor,
            "total_load": total_load,
            "n_steps": int(n_steps),
        },
    )
