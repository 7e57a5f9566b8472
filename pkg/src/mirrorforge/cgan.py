"""Conditional GAN over load-conditioned tip-displacement distributions.

Generator and discriminator are single-hidden-layer tanh networks trained
adversarially on (scaled tip, scaled load) pairs. Black-box mode draws the
generator latent from a standard normal; hybrid mode draws it from a
calibrated spectral beam model's tip distribution at the batch load, so the
physics model carries the load trend and the network learns the correction.
Model selection evaluates validation KL on a fixed schedule and keeps the
best checkpoint across a hidden-size search.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from .dataset import SampleSet, ScalingSpec, split
from .distributions import (
    DEFAULT_BANDWIDTH,
    DEFAULT_DIRECTION,
    MirrorReport,
    Virtualisation,
    build_mirror_report,
    kde_fit,
    kl_divergence,
)
from .errors import MirrorforgeError, NoViableModelError, TrainingDivergedError
from .mlp import Adam, Mlp, Sgd, _logistic
from .sfem import CalibrationConfig, PceBasis, SfemCalibration, calibrate

__all__ = [
    "DEFAULT_HIDDEN_SIZES",
    "TrainConfig",
    "CganModel",
    "TrainOutcome",
    "ExtrapolationResult",
    "train_step",
    "train",
    "sample_model",
    "extrapolation_protocol",
]

DEFAULT_HIDDEN_SIZES = (50, 110, 200, 500, 1000)

MODES = ("black-box", "hybrid")


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


@dataclass(frozen=True)
class TrainConfig:
    """Adversarial training and model-selection settings."""

    epochs: int = 20000
    batch_size: int = 128
    learning_rate: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    optimizer: str = "adam"
    noise_dim: int = 10
    hidden_sizes: tuple = DEFAULT_HIDDEN_SIZES
    selection_interval: int = 100
    n_eval: int = 2000
    non_saturating: bool = False
    bandwidth: float = DEFAULT_BANDWIDTH
    direction: str = DEFAULT_DIRECTION
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.selection_interval < 1 or self.epochs % self.selection_interval:
            raise ValueError(
                "selection_interval must divide the number of epochs"
            )
        if not self.hidden_sizes:
            raise ValueError("hidden size search list must be non-empty")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.noise_dim < 1:
            raise ValueError("noise_dim must be at least 1")


def train_step(
    generator: Mlp,
    discriminator: Mlp,
    g_optimizer,
    d_optimizer,
    real_tips: np.ndarray,
    codes: np.ndarray,
    latent_d: np.ndarray,
    latent_g: np.ndarray,
    non_saturating: bool = False,
) -> tuple[float, float]:
    """One paired adversarial update; returns (d_loss, g_loss).

    Phase 1 takes a discriminator step against the current generator's
    fakes; phase 2 takes a generator step through the frozen discriminator
    (its parameter gradients are discarded, so its weights stay untouched).
    Losses are evaluated and differentiated at the discriminator's output
    pre-activation, which keeps saturated batches finite.
    """
    real_tips = np.atleast_2d(real_tips)
    codes = np.atleast_2d(codes)
    n = real_tips.shape[0]

    fakes, _ = generator.forward(np.hstack([latent_d, codes]))
    real_logits = discriminator.forward(np.hstack([real_tips, codes]))[1]
    fake_logits = discriminator.forward(np.hstack([fakes, codes]))[1]
    a_real = real_logits.pre_outputs
    a_fake = fake_logits.pre_outputs
    d_loss = float(np.mean(_softplus(-a_real)) + np.mean(_softplus(a_fake)))
    grads_real, _ = discriminator.backward(
        real_logits, (_logistic(a_real) - 1.0) / n, at_preactivation=True
    )
    grads_fake, _ = discriminator.backward(
        fake_logits, _logistic(a_fake) / n, at_preactivation=True
    )
    d_grads = [gr + gf for gr, gf in zip(grads_real, grads_fake)]
    d_optimizer.step(discriminator.parameters(), d_grads)

    g_fakes, g_cache = generator.forward(np.hstack([latent_g, codes]))
    judged = discriminator.forward(np.hstack([g_fakes, codes]))[1]
    a = judged.pre_outputs
    if non_saturating:
        g_loss = float(np.mean(_softplus(-a)))
        grad_a = (_logistic(a) - 1.0) / n
    else:
        g_loss = float(-np.mean(_softplus(a)))
        grad_a = -_logistic(a) / n
    _, d_input_grad = discriminator.backward(judged, grad_a, at_preactivation=True)
    g_grads, _ = generator.backward(g_cache, d_input_grad[:, :1])
    g_optimizer.step(generator.parameters(), g_grads)
    return d_loss, g_loss


def _latent_sampler(
    mode: str,
    noise_dim: int,
    scaling: ScalingSpec,
    latent: dict | None,
) -> Callable[[np.random.Generator, np.ndarray], np.ndarray]:
    """Latent batch source keyed by the (scaled) codes of the batch."""
    if mode == "black-box":
        def sample(rng: np.random.Generator, scaled_codes: np.ndarray) -> np.ndarray:
            return rng.standard_normal((scaled_codes.size, noise_dim))

        return sample
    basis = PceBasis.build(latent["germ_dim"], latent["max_degree"])
    coefficients = np.asarray(latent["tip_coefficients_unit"], dtype=float)

    def sample(rng: np.random.Generator, scaled_codes: np.ndarray) -> np.ndarray:
        loads = scaling.unscale_load(scaled_codes.reshape(-1))
        germs = rng.standard_normal((loads.size, basis.germ_dim))
        tips = (basis.evaluate(germs) @ coefficients) * loads
        return scaling.scale_tip(tips)[:, None]

    return sample


@dataclass(eq=False)
class CganModel:
    """Trained generator/discriminator pair plus everything needed to sample.

    latent is None in black-box mode; in hybrid mode it embeds the spectral
    model's unit-load tip coefficients so the model file is self-contained.
    """

    mode: str
    generator: Mlp
    discriminator: Mlp
    noise_dim: int
    scaling: ScalingSpec
    hidden_size: int
    best_epoch: int
    validation_kl: float
    latent: dict | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "hybrid" and self.latent is None:
            raise MirrorforgeError("missing SFE model for hybrid mode")
        expected = self.noise_dim + 1
        if self.generator.n_inputs != expected:
            raise ValueError(
                f"generator expects {self.generator.n_inputs} inputs, "
                f"mode implies {expected}"
            )
        if self.discriminator.n_inputs != 2:
            raise ValueError("discriminator must take (sample, code) pairs")

    def generate(
        self, load: float, n_samples: int, seed: int | np.random.Generator
    ) -> np.ndarray:
        """Unscaled tip-displacement samples at one load."""
        rng = (
            seed
            if isinstance(seed, np.random.Generator)
            else np.random.default_rng(seed)
        )
        sampler = _latent_sampler(self.mode, self.noise_dim, self.scaling, self.latent)
        scaled_codes = np.full(n_samples, self.scaling.scale_load(float(load)))
        latent = sampler(rng, scaled_codes)
        outputs, _ = self.generator.forward(
            np.hstack([latent, scaled_codes[:, None]])
        )
        return self.scaling.unscale_tip(outputs[:, 0])

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "noise_dim": self.noise_dim,
            "scaling": self.scaling.to_dict(),
            "hidden_size": self.hidden_size,
            "best_epoch": self.best_epoch,
            "validation_kl": self.validation_kl,
            "generator": self.generator.to_dict(),
            "discriminator": self.discriminator.to_dict(),
            "latent": (
                None
                if self.latent is None
                else {
                    "germ_dim": self.latent["germ_dim"],
                    "max_degree": self.latent["max_degree"],
                    "tip_coefficients_unit": list(
                        np.asarray(self.latent["tip_coefficients_unit"], dtype=float)
                    ),
                    "source_id": self.latent["source_id"],
                }
            ),
            "metadata": self.metadata,
        }

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"
        )

    @classmethod
    def from_dict(cls, data: dict) -> "CganModel":
        return cls(
            mode=data["mode"],
            generator=Mlp.from_dict(data["generator"]),
            discriminator=Mlp.from_dict(data["discriminator"]),
            noise_dim=int(data["noise_dim"]),
            scaling=ScalingSpec.from_dict(data["scaling"]),
            hidden_size=int(data["hidden_size"]),
            best_epoch=int(data["best_epoch"]),
            validation_kl=float(data["validation_kl"]),
            latent=data.get("latent"),
            metadata=data.get("metadata", {}),
        )

    @classmethod
    def from_json(cls, path: str | Path) -> "CganModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True, eq=False)
class TrainOutcome:
    """Best model of a hidden-size search plus the full selection trace.

    trace rows are (epoch, hidden_size, val_kl) for every checkpoint of
    every size that finished training; diverged sizes contribute no rows and
    are listed separately. The chosen model's validation KL equals the trace
    minimum.
    """

    model: CganModel
    trace: tuple
    per_size: dict
    diverged: dict

    def write_trace(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["epoch", "hidden_size", "val_kl"])
            for epoch, size, kl in self.trace:
                writer.writerow([epoch, size, repr(float(kl))])


def _make_optimizer(config: TrainConfig, params: list[np.ndarray]):
    if config.optimizer == "adam":
        return Adam(
            params,
            learning_rate=config.learning_rate,
            beta1=config.beta1,
            beta2=config.beta2,
        )
    return Sgd(params, learning_rate=config.learning_rate)


def _validation_kl(
    generator: Mlp,
    sampler: Callable,
    val_kdes: dict,
    eval_rng: np.random.Generator,
    config: TrainConfig,
) -> float:
    """Average per-code KL of generated samples against validation data."""
    total = 0.0
    for code in sorted(val_kdes):
        scaled_codes = np.full(config.n_eval, code)
        latent = sampler(eval_rng, scaled_codes)
        samples = generator.forward(
            np.hstack([latent, scaled_codes[:, None]])
        )[0][:, 0]
        model_kde = kde_fit(samples, bandwidth=config.bandwidth)
        if config.direction == "data||model":
            total += kl_divergence(val_kdes[code], model_kde)
        else:
            total += kl_divergence(model_kde, val_kdes[code])
    return total / len(val_kdes)


def _train_single_size(
    hidden_size: int,
    tips: np.ndarray,
    codes: np.ndarray,
    val_kdes: dict,
    sampler: Callable,
    noise_dim: int,
    config: TrainConfig,
) -> tuple[Mlp, Mlp, int, float, list]:
    """Train one architecture; returns the best checkpoint and its trace."""
    rng = np.random.default_rng(np.random.SeedSequence((config.seed, hidden_size)))
    generator = Mlp.initialize(noise_dim + 1, hidden_size, 1, "tanh", rng)
    discriminator = Mlp.initialize(2, hidden_size, 1, "logistic", rng)
    g_opt = _make_optimizer(config, generator.parameters())
    d_opt = _make_optimizer(config, discriminator.parameters())
    n = tips.shape[0]
    best: tuple[Mlp, Mlp, int, float] | None = None
    trace: list[tuple[int, int, float]] = []
    for epoch in range(1, config.epochs + 1):
        idx = rng.integers(0, n, config.batch_size)
        batch_codes = codes[idx][:, None]
        latent_d = sampler(rng, codes[idx])
        latent_g = sampler(rng, codes[idx])
        d_loss, g_loss = train_step(
            generator,
            discriminator,
            g_opt,
            d_opt,
            tips[idx][:, None],
            batch_codes,
            latent_d,
            latent_g,
            non_saturating=config.non_saturating,
        )
        if not (np.isfinite(d_loss) and np.isfinite(g_loss)):
            raise TrainingDivergedError(
                f"non-finite loss (d={d_loss}, g={g_loss})",
                epoch=epoch,
                hidden_size=hidden_size,
            )
        if epoch % config.selection_interval == 0:
            eval_rng = np.random.default_rng(
                np.random.SeedSequence((config.seed, hidden_size, epoch))
            )
            val_kl = _validation_kl(generator, sampler, val_kdes, eval_rng, config)
            if not np.isfinite(val_kl):
                raise TrainingDivergedError(
                    f"non-finite validation KL {val_kl}",
                    epoch=epoch,
                    hidden_size=hidden_size,
                )
            trace.append((epoch, hidden_size, float(val_kl)))
            if best is None or val_kl < best[3]:
                best = (generator.copy(), discriminator.copy(), epoch, float(val_kl))
    assert best is not None
    return best[0], best[1], best[2], best[3], trace


def train(
    train_set: SampleSet,
    val_set: SampleSet,
    config: TrainConfig,
    mode: str = "black-box",
    sfe: SfemCalibration | None = None,
    trace_path: str | Path | None = None,
) -> TrainOutcome:
    """Hidden-size search returning the checkpoint with lowest validation KL.

    Both sample sets must already be scaled (tips and codes carry the
    dataset scaling the generator will be serialized with). Per-size runs
    are independently seeded from (config.seed, size); a size whose training
    produces non-finite losses is dropped from the search, and the run
    fails only if every size diverges.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if train_set.scaling is None or val_set.scaling is None:
        raise ValueError("train() expects scaled sample sets")
    if train_set.scaling != val_set.scaling:
        raise ValueError("train and validation sets carry different scalings")
    scaling = train_set.scaling
    latent_info = None
    noise_dim = config.noise_dim
    if mode == "hybrid":
        if sfe is None:
            raise MirrorforgeError("missing SFE model for hybrid mode")
        best = sfe.best_params
        latent_info = {
            "germ_dim": sfe.basis.germ_dim,
            "max_degree": sfe.basis.max_degree,
            "tip_coefficients_unit": np.asarray(
                sfe.tip_coefficients_unit, dtype=float
            ),
            "source_id": (
                f"sfem(mean={best[0]:g}, std={best[1]:g}, corr={best[2]:g})"
            ),
        }
        noise_dim = 1
    sampler = _latent_sampler(mode, noise_dim, scaling, latent_info)
    val_kdes = {
        float(code): kde_fit(val_set.samples_for(code), bandwidth=config.bandwidth)
        for code in val_set.codes
    }
    candidates: dict[int, tuple[Mlp, Mlp, int, float]] = {}
    per_size: dict[int, float] = {}
    diverged: dict[int, str] = {}
    trace: list[tuple[int, int, float]] = []
    for size in config.hidden_sizes:
        try:
            gen, disc, epoch, val_kl, rows = _train_single_size(
                int(size),
                train_set.tips,
                train_set.loads,
                val_kdes,
                sampler,
                noise_dim,
                config,
            )
        except TrainingDivergedError as exc:
            diverged[int(size)] = f"epoch {exc.epoch}: {exc}"
            per_size[int(size)] = float("inf")
            continue
        candidates[int(size)] = (gen, disc, epoch, val_kl)
        per_size[int(size)] = val_kl
        trace.extend(rows)
    if not candidates:
        raise NoViableModelError("no viable model")
    best_size = min(candidates, key=lambda s: (candidates[s][3], config.hidden_sizes.index(s)))
    gen, disc, best_epoch, best_kl = candidates[best_size]
    model = CganModel(
        mode=mode,
        generator=gen,
        discriminator=disc,
        noise_dim=noise_dim,
        scaling=scaling,
        hidden_size=best_size,
        best_epoch=best_epoch,
        validation_kl=best_kl,
        latent=latent_info,
        metadata={
            "seed": config.seed,
            "epochs": config.epochs,
            "optimizer": config.optimizer,
            "hidden_sizes": list(config.hidden_sizes),
            "non_saturating": config.non_saturating,
        },
    )
    outcome = TrainOutcome(
        model=model,
        trace=tuple(trace),
        per_size=per_size,
        diverged=diverged,
    )
    if trace_path is not None:
        outcome.write_trace(trace_path)
    return outcome


def sample_model(
    model: CganModel,
    loads: Mapping[float, int] | list[float],
    n_per_load: int | None = None,
    seed: int = 0,
) -> SampleSet:
    """Generated tips at the given loads, packaged with model provenance."""
    if not isinstance(loads, Mapping):
        loads = {float(q): int(n_per_load) for q in loads}
    samples = {}
    for q in sorted(loads):
        rng = np.random.default_rng(
            np.random.SeedSequence((int(seed), int(round(q * 1e6))))
        )
        samples[q] = model.generate(q, loads[q], rng)
    provenance = "cgan" if model.mode == "black-box" else "hybrid"
    return SampleSet.from_samples(
        samples,
        provenance=provenance,
        metadata={"seed": int(seed), "hidden_size": model.hidden_size},
    )


@dataclass(frozen=True, eq=False)
class ExtrapolationResult:
    """Paired in-domain and held-out evaluations of both generator modes."""

    black_box: CganModel
    hybrid: CganModel
    sfe: SfemCalibration
    scaling: ScalingSpec
    reports: dict

    def to_dict(self) -> dict:
        return {
            "scaling": self.scaling.to_dict(),
            "sfe_best_params": list(self.sfe.best_params),
            "reports": {
                mode: {kind: report.to_dict() for kind, report in kinds.items()}
                for mode, kinds in self.reports.items()
            },
        }


def extrapolation_protocol(
    fit_data: SampleSet,
    held_out_data: SampleSet,
    geometry,
    config: TrainConfig,
    calibration_grid=None,
    calibration_samples: int = 20000,
    epsilon_tolerance: float = 0.5,
) -> ExtrapolationResult:
    """Train both modes on the restricted load domain, evaluate beyond it.

    The fit domain is re-split internally; scaling targets [-0.8, 0.8] so
    held-out loads land inside the tanh range of the generator's code input.
    The hybrid latent comes from a spectral model calibrated on the fit
    domain's training split only.
    """
    from .dataset import extrapolation_fit_split, fit_scaling, apply_scaling

    if fit_data.scaling is not None or held_out_data.scaling is not None:
        raise ValueError("extrapolation protocol expects unscaled sample sets")
    overlap = set(fit_data.codes) & set(held_out_data.codes)
    if overlap:
        raise ValueError(f"held-out codes overlap the fit domain: {sorted(overlap)}")
    parts = split(fit_data, extrapolation_fit_split())
    scaling = fit_scaling(parts["train"], target=(-0.8, 0.8))
    scaled_train = apply_scaling(parts["train"], scaling)
    scaled_val = apply_scaling(parts["val"], scaling)
    calib_config = CalibrationConfig(
        geometry=geometry,
        scaling=scaling,
        n_samples=calibration_samples,
        bandwidth=config.bandwidth,
        direction=config.direction,
    )
    sfe = calibrate(parts["train"].by_code(), calibration_grid, calib_config)
    outcomes = {
        "black-box": train(scaled_train, scaled_val, config, mode="black-box"),
        "hybrid": train(scaled_train, scaled_val, config, mode="hybrid", sfe=sfe),
    }
    reports: dict[str, dict[str, MirrorReport]] = {}
    for mode, outcome in outcomes.items():
        model = outcome.model
        reports[mode] = {}
        for kind, reference in (("test", parts["test"]), ("held_out", held_out_data)):
            generated = sample_model(
                model, list(reference.codes), config.n_eval, seed=config.seed
            )
            model_scaled = {
                code: scaling.scale_tip(generated.samples_for(code))
                for code in generated.codes
            }
            data_scaled = {
                code: scaling.scale_tip(reference.samples_for(code))
                for code in reference.codes
            }
            reports[mode][kind] = build_mirror_report(
                model_id=f"{mode}-{kind}",
                model_samples=model_scaled,
                data_samples=data_scaled,
                epsilon_tolerance=epsilon_tolerance,
                bandwidth=config.bandwidth,
                direction=config.direction,
                virtualisation=Virtualisation(
                    object_model=mode,
                    input_model="load sweep beyond the fit domain"
                    if kind == "held_out"
                    else "load sweep inside the fit domain",
                ),
            )
    return ExtrapolationResult(
        black_box=outcomes["black-box"].model,
        hybrid=outcomes["hybrid"].model,
        sfe=sfe,
        scaling=scaling,
        reports=reports,
    )
