"""Command-line orchestration of the full mirror-model pipeline.

Subcommands: generate, calibrate, train, evaluate, extrapolate, report.
Every command is driven by one JSON experiment config (flags override
individual fields) and writes byte-identical artifacts when re-run with the
same config and seed; outputs carry no timestamps. Exit codes: 0 success,
1 domain error, 2 usage error. MIRRORFORGE_THREADS caps worker counts.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from .beam import BeamModel, SofteningLaw
from .cgan import CganModel, TrainConfig, extrapolation_protocol, sample_model, train
from .dataset import (
    SampleSet,
    apply_scaling,
    fit_scaling,
    generate_linear,
    generate_nonlinear,
    linear_reference_split,
    nonlinear_reference_split,
    split,
)
from .distributions import (
    MirrorReport,
    _mixture_density,
    build_mirror_report,
    kde_fit,
)
from .errors import DatasetError, MirrorforgeError
from .random_field import FieldSpec
from .sfem import CalibrationConfig, SfemCalibration, calibrate, default_parameter_grid

DEFAULT_CONFIG = {
    "seed": 2024,
    "beam": {
        "length": 5.0,
        "width": 0.1,
        "height": 0.4,
        "n_elements": 20,
        "youngs_modulus": 2.0e9,
    },
    "field": {
        "mean": 2.0e9,
        "std_dev": 0.4e9,
        "correlation_length": 3.0,
        "truncation_order": 2,
    },
    # tangent floor 0.40 keeps the post-softening branch stiff enough that the
    # lowest modulus draws stay on the same deflection scale as the rest of the
    # ensemble; alpha then anchors the full-load tip at 2.4x the linear value
    "law": {"alpha": 9400.0, "floor": 0.40},
    "generate": {
        "linear": {
            "loads": [float(q) for q in range(10, 201, 10)],
            "n_per_load": 1000,
        },
        "nonlinear": {
            "e_mean": 2.0e9,
            "e_std": 0.2e9,
            "total_load": 400.0,
            "n_steps": 40,
            "n_realizations": 500,
        },
    },
    "scaling": {"target_lo": -1.0, "target_hi": 1.0},
    "calibrate": {
        "truncation_order": 2,
        "degree": 2,
        "n_samples": 20000,
        "seed": 0,
        "bandwidth": 0.1,
        "direction": "data||model",
        "n_workers": 1,
        "grid": None,
        "n_eval": 2000,
    },
    "train": {
        "epochs": 20000,
        "batch_size": 128,
        "learning_rate": 2e-4,
        "beta1": 0.5,
        "beta2": 0.999,
        "optimizer": "adam",
        "noise_dim": 10,
        "hidden_sizes": [50, 110, 200, 500, 1000],
        "selection_interval": 100,
        "n_eval": 2000,
        "non_saturating": False,
        "bandwidth": 0.1,
        "direction": "data||model",
        "seed": 0,
    },
    "evaluate": {
        "epsilon_tolerance": 0.3,
        "bandwidth": 0.1,
        "direction": "data||model",
        "n_eval": 2000,
        "seed": 0,
    },
    "extrapolate": {
        "n_per_load": 1000,
        "epsilon_tolerance": 0.5,
        "calibration_samples": 20000,
    },
}


def _deep_merge(base: dict, override: dict) -> dict:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_config(path: str | None) -> dict:
    if path is None:
        return json.loads(json.dumps(DEFAULT_CONFIG))
    with open(path) as handle:
        return _deep_merge(DEFAULT_CONFIG, json.load(handle))


def worker_cap(requested: int) -> int:
    """Requested worker count capped by MIRRORFORGE_THREADS when set."""
    raw = os.environ.get("MIRRORFORGE_THREADS")
    if not raw:
        return requested
    return max(1, min(requested, int(raw)))


def _beam(config: dict) -> BeamModel:
    block = config["beam"]
    return BeamModel.uniform(
        block["length"],
        block["width"],
        block["height"],
        block["n_elements"],
        block["youngs_modulus"],
    )


def _field_spec(config: dict) -> FieldSpec:
    block = config["field"]
    return FieldSpec(
        mean=block["mean"],
        std_dev=block["std_dev"],
        correlation_length=block["correlation_length"],
        domain_length=config["beam"]["length"],
        truncation_order=block["truncation_order"],
    )


def _reference_split(sample_set: SampleSet):
    if sample_set.provenance == "linear-mc":
        return linear_reference_split()
    if sample_set.provenance == "nonlinear-mc":
        return nonlinear_reference_split()
    raise DatasetError(
        f"no canonical split for provenance {sample_set.provenance!r}"
    )


def _format_cell(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_csv(path: Path, header: list[str], rows) -> None:
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_format_cell(v) for v in row])


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _per_code_seed(seed: int, code: float) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence((int(seed), int(round(float(code) * 1e6))))
    )


def cmd_generate(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config["seed"] = args.seed
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    target = out_dir / f"{args.case}.csv"
    sidecar = target.with_suffix(".json")
    for path in (target, sidecar):
        if path.exists() and not args.force:
            raise MirrorforgeError(
                f"output {path} exists; pass --force to overwrite"
            )
    beam = _beam(config)
    if args.case == "linear":
        block = config["generate"]["linear"]
        data = generate_linear(
            _field_spec(config),
            block["loads"],
            block["n_per_load"],
            seed=config["seed"],
            geometry=beam,
        )
    else:
        block = config["generate"]["nonlinear"]
        law_block = config["law"]
        data = generate_nonlinear(
            e_mean=block["e_mean"],
            e_std=block["e_std"],
            law=SofteningLaw(
                e0=block["e_mean"],
                alpha=law_block["alpha"],
                floor=law_block["floor"],
            ),
            total_load=block["total_load"],
            n_steps=block["n_steps"],
            n_realizations=block["n_realizations"],
            seed=config["seed"],
            geometry=beam,
        )
    data.to_csv(target)
    print(f"wrote {len(data)} records to {target}")
    for code in data.codes:
        values = data.samples_for(code)
        print(
            f"  load {code:g}: n={values.size} "
            f"mean={values.mean():.6e} std={values.std(ddof=1):.6e}"
        )
    return 0


def _calibration_grid(block: dict):
    grid = block.get("grid")
    if grid is None:
        return None
    if isinstance(grid, dict):
        points = []
        for mean in grid["means"]:
            for fraction in grid["std_fractions"]:
                for corr in grid["correlation_lengths"]:
                    points.append((float(mean), float(fraction) * float(mean), float(corr)))
        return points
    return [tuple(float(v) for v in point) for point in grid]


def cmd_calibrate(args) -> int:
    config = load_config(args.config)
    block = dict(config["calibrate"])
    if args.workers is not None:
        block["n_workers"] = args.workers
    block["n_workers"] = worker_cap(int(block["n_workers"]))
    data = SampleSet.from_csv(args.data)
    parts = split(data, _reference_split(data))
    scaling = fit_scaling(
        parts["train"],
        target=(config["scaling"]["target_lo"], config["scaling"]["target_hi"]),
    )
    calib_config = CalibrationConfig(
        geometry=_beam(config),
        scaling=scaling,
        truncation_order=block["truncation_order"],
        degree=block["degree"],
        n_samples=block["n_samples"],
        seed=block["seed"],
        bandwidth=block["bandwidth"],
        direction=block["direction"],
        n_workers=block["n_workers"],
    )
    calibration = calibrate(
        parts["train"].by_code(), _calibration_grid(block), calib_config
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(out_dir / "sfe.json", calibration.to_dict())
    n_eval = int(block["n_eval"])
    model_samples = {
        float(code): calibration.sample_tips(
            float(code), n_eval, _per_code_seed(block["seed"], code)
        )
        for code in data.codes
    }
    report = build_mirror_report(
        model_id="sfe",
        model_samples={
            c: scaling.scale_tip(v) for c, v in model_samples.items()
        },
        data_samples={
            float(c): scaling.scale_tip(data.samples_for(c)) for c in data.codes
        },
        epsilon_tolerance=config["evaluate"]["epsilon_tolerance"],
        bandwidth=block["bandwidth"],
        direction=block["direction"],
    )
    _write_json(out_dir / "sfe_report.json", report.to_dict())
    mean, std, corr = calibration.best_params
    print(f"best parameters: mean={mean:g} std={std:g} correlation={corr:g}")
    print(f"grid points evaluated: {len(calibration.grid)}")
    print(
        f"report over {len(report.codes)} loads: "
        f"average KL {report.average_kl:.6f}, epsilon {report.epsilon:.6f}"
    )
    return 0


def cmd_train(args) -> int:
    config = load_config(args.config)
    block = dict(config["train"])
    if args.epochs is not None:
        block["epochs"] = args.epochs
    if args.hidden_sizes is not None:
        block["hidden_sizes"] = [int(s) for s in args.hidden_sizes.split(",")]
    if args.seed is not None:
        block["seed"] = args.seed
    data = SampleSet.from_csv(args.data)
    parts = split(data, _reference_split(data))
    scaling = fit_scaling(
        parts["train"],
        target=(config["scaling"]["target_lo"], config["scaling"]["target_hi"]),
    )
    scaled_train = apply_scaling(parts["train"], scaling)
    scaled_val = apply_scaling(parts["val"], scaling)
    train_config = TrainConfig(
        epochs=int(block["epochs"]),
        batch_size=int(block["batch_size"]),
        learning_rate=float(block["learning_rate"]),
        beta1=float(block["beta1"]),
        beta2=float(block["beta2"]),
        optimizer=block["optimizer"],
        noise_dim=int(block["noise_dim"]),
        hidden_sizes=tuple(int(s) for s in block["hidden_sizes"]),
        selection_interval=int(block["selection_interval"]),
        n_eval=int(block["n_eval"]),
        non_saturating=bool(block["non_saturating"]),
        bandwidth=float(block["bandwidth"]),
        direction=block["direction"],
        seed=int(block["seed"]),
    )
    sfe = None
    if args.mode == "hybrid":
        if args.sfe is None:
            raise MirrorforgeError("missing SFE model: pass --sfe for hybrid mode")
        sfe = SfemCalibration.from_dict(json.loads(Path(args.sfe).read_text()))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    name = "cgan" if args.mode == "black-box" else "hybrid"
    outcome = train(
        scaled_train,
        scaled_val,
        train_config,
        mode=args.mode,
        sfe=sfe,
        trace_path=out_dir / f"{name}_trace.csv",
    )
    outcome.model.to_json(out_dir / f"{name}.json")
    for size in train_config.hidden_sizes:
        note = outcome.diverged.get(size)
        score = outcome.per_size[size]
        line = f"  size {size}: val KL {score:.6f}"
        if note:
            line = f"  size {size}: diverged ({note})"
        print(line)
    print(
        f"best model: size {outcome.model.hidden_size}, "
        f"epoch {outcome.model.best_epoch}, "
        f"validation KL {outcome.model.validation_kl:.6f}"
    )
    return 0


def _load_model(path: str):
    """A generative model for evaluate: cGAN JSON, SFE JSON, or dataset CSV."""
    if path.endswith(".csv"):
        return SampleSet.from_csv(path)
    payload = json.loads(Path(path).read_text())
    if "generator" in payload:
        return CganModel.from_dict(payload)
    if "tip_coefficients_unit" in payload:
        return SfemCalibration.from_dict(payload)
    raise MirrorforgeError(f"unrecognized model file {path}")


def _model_samples(model, codes, n_eval: int, seed: int) -> dict[float, np.ndarray]:
    if isinstance(model, SampleSet):
        return {float(c): model.samples_for(c) for c in codes}
    if isinstance(model, CganModel):
        generated = sample_model(model, [float(c) for c in codes], n_eval, seed=seed)
        return generated.by_code()
    return {
        float(c): model.sample_tips(float(c), n_eval, _per_code_seed(seed, c))
        for c in codes
    }


def _model_scaling(model, reference: SampleSet, config: dict):
    if isinstance(model, CganModel):
        return model.scaling
    if isinstance(model, SfemCalibration):
        from .dataset import ScalingSpec

        return ScalingSpec.from_dict(model.config_summary["scaling"])
    return fit_scaling(
        reference,
        target=(config["scaling"]["target_lo"], config["scaling"]["target_hi"]),
    )


def cmd_evaluate(args) -> int:
    config = load_config(args.config)
    block = config["evaluate"]
    tolerance = args.tolerance if args.tolerance is not None else block["epsilon_tolerance"]
    model = _load_model(args.model)
    reference = SampleSet.from_csv(args.data)
    if reference.scaling is not None:
        raise MirrorforgeError("evaluation dataset must hold unscaled records")
    codes = [float(c) for c in reference.codes]
    scaling = _model_scaling(model, reference, config)
    model_samples = _model_samples(model, codes, block["n_eval"], block["seed"])
    missing = sorted(set(codes) - set(model_samples))
    if missing:
        raise MirrorforgeError(f"model provides no samples at loads {missing}")
    model_scaled = {c: scaling.scale_tip(model_samples[c]) for c in codes}
    data_scaled = {c: scaling.scale_tip(reference.samples_for(c)) for c in codes}
    report = build_mirror_report(
        model_id=Path(args.model).stem,
        model_samples=model_scaled,
        data_samples=data_scaled,
        epsilon_tolerance=tolerance,
        bandwidth=block["bandwidth"],
        direction=block["direction"],
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(out_dir / "report.json", report.to_dict())
    _write_report_tables(report, out_dir)
    for code in codes:
        data_kde = kde_fit(data_scaled[code], bandwidth=block["bandwidth"])
        p_model = _mixture_density(
            model_scaled[code], block["bandwidth"], data_kde.grid
        )
        _write_csv(
            out_dir / f"density_code_{code:g}.csv",
            ["x", "p_data", "p_model"],
            zip(data_kde.grid, data_kde.density, p_model),
        )
    for code, value in report.kl_by_code.items():
        print(f"  load {code:g}: KL {value:.6f}")
    verdict = "pass" if report.pass_epsilon else "fail"
    print(
        f"average KL {report.average_kl:.6f}, epsilon {report.epsilon:.6f} "
        f"(tolerance {tolerance:g}: {verdict})"
    )
    return 0


def _write_report_tables(report: MirrorReport, out_dir: Path) -> None:
    _write_csv(
        out_dir / "per_code_kl.csv",
        ["load", "kl"],
        zip(report.codes, report.kl_values),
    )
    _write_csv(
        out_dir / "alpha_curve.csv",
        ["alpha", "coverage"],
        ((row[0], row[1]) for row in report.alpha),
    )


def cmd_extrapolate(args) -> int:
    config = load_config(args.config)
    block = config["extrapolate"]
    beam = _beam(config)
    spec = _field_spec(config)
    if args.fit_data is not None:
        fit = SampleSet.from_csv(args.fit_data)
    else:
        fit = generate_linear(
            spec,
            [float(q) for q in range(10, 311, 10)],
            int(block["n_per_load"]),
            seed=config["seed"],
            geometry=beam,
        )
    if args.held_data is not None:
        held = SampleSet.from_csv(args.held_data)
    else:
        held = generate_linear(
            spec,
            [float(q) for q in range(320, 401, 10)],
            int(block["n_per_load"]),
            seed=config["seed"] + 1,
            geometry=beam,
        )
    train_block = dict(config["train"])
    if args.epochs is not None:
        train_block["epochs"] = args.epochs
    if args.hidden_sizes is not None:
        train_block["hidden_sizes"] = [
            int(s) for s in args.hidden_sizes.split(",")
        ]
    train_config = TrainConfig(
        epochs=int(train_block["epochs"]),
        batch_size=int(train_block["batch_size"]),
        learning_rate=float(train_block["learning_rate"]),
        beta1=float(train_block["beta1"]),
        beta2=float(train_block["beta2"]),
        optimizer=train_block["optimizer"],
        noise_dim=int(train_block["noise_dim"]),
        hidden_sizes=tuple(int(s) for s in train_block["hidden_sizes"]),
        selection_interval=int(train_block["selection_interval"]),
        n_eval=int(train_block["n_eval"]),
        non_saturating=bool(train_block["non_saturating"]),
        bandwidth=float(train_block["bandwidth"]),
        direction=train_block["direction"],
        seed=int(train_block["seed"]),
    )
    result = extrapolation_protocol(
        fit,
        held,
        geometry=beam,
        config=train_config,
        calibration_grid=_calibration_grid(config["calibrate"]),
        calibration_samples=int(block["calibration_samples"]),
        epsilon_tolerance=block["epsilon_tolerance"],
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(out_dir / "extrapolation.json", result.to_dict())
    _write_json(
        out_dir / "extrap_black_box.json",
        result.reports["black-box"]["held_out"].to_dict(),
    )
    _write_json(
        out_dir / "extrap_hybrid.json",
        result.reports["hybrid"]["held_out"].to_dict(),
    )
    for mode in ("black-box", "hybrid"):
        for kind in ("test", "held_out"):
            report = result.reports[mode][kind]
            print(
                f"  {mode} {kind}: average KL {report.average_kl:.6f}, "
                f"epsilon {report.epsilon:.6f}"
            )
    return 0


def cmd_report(args) -> int:
    payload = json.loads(Path(args.report).read_text())
    report = MirrorReport.from_dict(payload)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_report_tables(report, out_dir)
    print(f"model: {report.model_id}")
    print(
        f"average KL {report.average_kl:.6f}, epsilon {report.epsilon:.6f} "
        f"over {len(report.codes)} loads"
    )
    for alpha in (1.0, 2.0, 3.0):
        print(f"  coverage at alpha={alpha:g}: {report.coverage_at(alpha):.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mirrorforge",
        description="Generative mirror models of a stochastic cantilever",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="Monte Carlo reference datasets")
    p.add_argument("--config")
    p.add_argument("--case", choices=["linear", "nonlinear"], default="linear")
    p.add_argument("--out", default="data")
    p.add_argument("--seed", type=int)
    p.add_argument("--force", action="store_true")
    p.set_defaults(handler=cmd_generate)

    p = sub.add_parser("calibrate", help="spectral model parameter search")
    p.add_argument("--config")
    p.add_argument("--data", required=True)
    p.add_argument("--out", default="models")
    p.add_argument("--workers", type=int)
    p.set_defaults(handler=cmd_calibrate)

    p = sub.add_parser("train", help="adversarial model with size search")
    p.add_argument("--config")
    p.add_argument("--data", required=True)
    p.add_argument("--mode", choices=["black-box", "hybrid"], default="black-box")
    p.add_argument("--sfe", help="calibration JSON for hybrid latent")
    p.add_argument("--out", default="models")
    p.add_argument("--epochs", type=int)
    p.add_argument("--hidden-sizes", dest="hidden_sizes")
    p.add_argument("--seed", type=int)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("evaluate", help="mirror criteria of a model vs data")
    p.add_argument("--config")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default="reports")
    p.add_argument("--tolerance", type=float)
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("extrapolate", help="paired beyond-domain study")
    p.add_argument("--config")
    p.add_argument("--fit-data", dest="fit_data")
    p.add_argument("--held-data", dest="held_data")
    p.add_argument("--out", default="reports")
    p.add_argument("--epochs", type=int)
    p.add_argument("--hidden-sizes", dest="hidden_sizes")
    p.set_defaults(handler=cmd_extrapolate)

    p = sub.add_parser("report", help="tables from a stored mirror report")
    p.add_argument("--report", required=True)
    p.add_argument("--out", default="reports")
    p.set_defaults(handler=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except MirrorforgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
