"""Adversarial training loop, model selection, and hybrid latent checks.

The slow benchmark trains a small network on a conditional Gaussian whose
density is known, so validation KL against held-out draws has a meaningful
target; everything else runs on deliberately tiny configurations.
"""

import numpy as np
import pytest

import mirrorforge.cgan as cgan_module
from mirrorforge.cgan import (
    CganModel,
    TrainConfig,
    TrainOutcome,
    extrapolation_protocol,
    sample_model,
    train,
    train_step,
)
from mirrorforge.beam import BeamModel
from mirrorforge.dataset import SampleSet, ScalingSpec, generate_linear
from mirrorforge.errors import (
    MirrorforgeError,
    NoViableModelError,
    TrainingDivergedError,
)
from mirrorforge.mlp import Adam, Mlp, Sgd
from mirrorforge.random_field import FieldSpec
from mirrorforge.sfem import CalibrationConfig, calibrate

REFERENCE_BEAM = BeamModel.uniform(5.0, 0.1, 0.4, 20, 2.0e9)
REFERENCE_FIELD = FieldSpec(
    mean=2.0e9, std_dev=0.4e9, correlation_length=3.0, domain_length=5.0
)

IDENTITY_SCALING = ScalingSpec(
    load_min=-1.0, load_max=1.0, tip_min=-1.0, tip_max=1.0
)

TOY_CODES = (0.2, 0.5, 0.8)
TOY_NOISE = 0.05


def toy_samples(rng, n_per_code):
    return {
        c: 0.2 * c + TOY_NOISE * rng.standard_normal(n_per_code)
        for c in TOY_CODES
    }


def toy_sample_set(seed, n_per_code):
    rng = np.random.default_rng(seed)
    return SampleSet.from_samples(
        toy_samples(rng, n_per_code),
        provenance="linear-mc",
        scaling=IDENTITY_SCALING,
    )


@pytest.fixture(scope="module")
def toy_train():
    return toy_sample_set(seed=101, n_per_code=4000)


@pytest.fixture(scope="module")
def toy_val():
    return toy_sample_set(seed=202, n_per_code=4000)


def fresh_pair(seed=0, hidden=12, noise_dim=3):
    rng = np.random.default_rng(seed)
    generator = Mlp.initialize(noise_dim + 1, hidden, 1, "tanh", rng)
    discriminator = Mlp.initialize(2, hidden, 1, "logistic", rng)
    return generator, discriminator


def toy_batch(rng, batch_size=64, noise_dim=3):
    codes = rng.choice(TOY_CODES, size=(batch_size, 1))
    tips = 0.2 * codes + TOY_NOISE * rng.standard_normal((batch_size, 1))
    latent_d = rng.standard_normal((batch_size, noise_dim))
    latent_g = rng.standard_normal((batch_size, noise_dim))
    return tips, codes, latent_d, latent_g


class TestTrainStep:
    def test_loss_values_at_zero_discriminator(self):
        generator, _ = fresh_pair(seed=1)
        discriminator = Mlp(
            np.zeros((2, 4)), np.zeros(4), np.zeros((4, 1)), np.zeros(1), "logistic"
        )
        tips, codes, latent_d, latent_g = toy_batch(np.random.default_rng(2))
        d_loss, g_loss = train_step(
            generator,
            discriminator,
            Sgd(generator.parameters(), learning_rate=0.0),
            Sgd(discriminator.parameters(), learning_rate=0.0),
            tips,
            codes,
            latent_d,
            latent_g,
        )
        assert d_loss == pytest.approx(2.0 * np.log(2.0), rel=1e-12)
        assert g_loss == pytest.approx(-np.log(2.0), rel=1e-12)

    def test_non_saturating_loss_at_zero_discriminator(self):
        generator, _ = fresh_pair(seed=3)
        discriminator = Mlp(
            np.zeros((2, 4)), np.zeros(4), np.zeros((4, 1)), np.zeros(1), "logistic"
        )
        tips, codes, latent_d, latent_g = toy_batch(np.random.default_rng(4))
        _, g_loss = train_step(
            generator,
            discriminator,
            Sgd(generator.parameters(), learning_rate=0.0),
            Sgd(discriminator.parameters(), learning_rate=0.0),
            tips,
            codes,
            latent_d,
            latent_g,
            non_saturating=True,
        )
        assert g_loss == pytest.approx(np.log(2.0), rel=1e-12)

    def test_discriminator_loss_decreases_against_frozen_generator(self):
        generator, discriminator = fresh_pair(seed=5)
        g_opt = Sgd(generator.parameters(), learning_rate=0.0)
        d_opt = Adam(discriminator.parameters(), learning_rate=1e-3)
        rng = np.random.default_rng(6)
        first = last = None
        for step in range(200):
            tips, codes, latent_d, latent_g = toy_batch(rng)
            d_loss, _ = train_step(
                generator, discriminator, g_opt, d_opt, tips, codes, latent_d, latent_g
            )
            if step == 0:
                first = d_loss
            last = d_loss
        assert last < first

    def test_generator_phase_leaves_discriminator_untouched(self):
        generator, discriminator = fresh_pair(seed=7)
        before = [p.copy() for p in discriminator.parameters()]
        tips, codes, latent_d, latent_g = toy_batch(np.random.default_rng(8))
        train_step(
            generator,
            discriminator,
            Adam(generator.parameters()),
            Sgd(discriminator.parameters(), learning_rate=0.0),
            tips,
            codes,
            latent_d,
            latent_g,
        )
        after = discriminator.parameters()
        assert all(np.array_equal(a, b) for a, b in zip(before, after))

    def test_discriminator_phase_leaves_generator_untouched(self):
        generator, discriminator = fresh_pair(seed=9)
        before = [p.copy() for p in generator.parameters()]
        tips, codes, latent_d, latent_g = toy_batch(np.random.default_rng(10))
        train_step(
            generator,
            discriminator,
            Sgd(generator.parameters(), learning_rate=0.0),
            Adam(discriminator.parameters()),
            tips,
            codes,
            latent_d,
            latent_g,
        )
        after = generator.parameters()
        assert all(np.array_equal(a, b) for a, b in zip(before, after))

    def test_both_networks_move_with_live_optimizers(self):
        generator, discriminator = fresh_pair(seed=11)
        g_before = [p.copy() for p in generator.parameters()]
        d_before = [p.copy() for p in discriminator.parameters()]
        tips, codes, latent_d, latent_g = toy_batch(np.random.default_rng(12))
        train_step(
            generator,
            discriminator,
            Adam(generator.parameters()),
            Adam(discriminator.parameters()),
            tips,
            codes,
            latent_d,
            latent_g,
        )
        assert not all(
            np.array_equal(a, b) for a, b in zip(g_before, generator.parameters())
        )
        assert not all(
            np.array_equal(a, b) for a, b in zip(d_before, discriminator.parameters())
        )


def small_config(**overrides):
    settings = dict(
        epochs=600,
        batch_size=64,
        hidden_sizes=(12,),
        selection_interval=100,
        n_eval=500,
        noise_dim=3,
        seed=0,
    )
    settings.update(overrides)
    return TrainConfig(**settings)


class TestTrainConfig:
    def test_interval_must_divide_epochs(self):
        with pytest.raises(ValueError, match="divide"):
            small_config(epochs=250, selection_interval=100)

    def test_empty_search_list_rejected(self):
        with pytest.raises(ValueError, match="non-empty"):
            small_config(hidden_sizes=())

    def test_unknown_optimizer_rejected(self):
        with pytest.raises(ValueError, match="optimizer"):
            small_config(optimizer="rmsprop")


class TestTrain:
    def test_unscaled_sets_rejected(self, toy_train, toy_val):
        bare = SampleSet.from_samples(
            toy_train.by_code(), provenance="linear-mc"
        )
        with pytest.raises(ValueError, match="scaled"):
            train(bare, toy_val, small_config())

    def test_mismatched_scalings_rejected(self, toy_train):
        other = SampleSet.from_samples(
            toy_train.by_code(),
            provenance="linear-mc",
            scaling=ScalingSpec(0.0, 2.0, -1.0, 1.0),
        )
        with pytest.raises(ValueError, match="different scalings"):
            train(toy_train, other, small_config())

    def test_unknown_mode_rejected(self, toy_train, toy_val):
        with pytest.raises(ValueError, match="mode"):
            train(toy_train, toy_val, small_config(), mode="white-box")

    def test_hybrid_without_spectral_model_raises(self, toy_train, toy_val):
        with pytest.raises(MirrorforgeError, match="missing SFE model"):
            train(toy_train, toy_val, small_config(), mode="hybrid")

    def test_search_is_deterministic(self, toy_train, toy_val):
        config = small_config(epochs=300)
        first = train(toy_train, toy_val, config)
        second = train(toy_train, toy_val, config)
        assert first.trace == second.trace
        assert all(
            np.array_equal(a, b)
            for a, b in zip(
                first.model.generator.parameters(),
                second.model.generator.parameters(),
            )
        )

    def test_best_checkpoint_is_trace_minimum(self, toy_train, toy_val):
        outcome = train(toy_train, toy_val, small_config(epochs=400))
        kls = [row[2] for row in outcome.trace]
        assert outcome.model.validation_kl == min(kls)
        best_row = outcome.trace[int(np.argmin(kls))]
        assert outcome.model.best_epoch == best_row[0]
        assert outcome.model.hidden_size == best_row[1]

    def test_trace_covers_every_checkpoint_of_every_size(self, toy_train, toy_val):
        config = small_config(epochs=300, hidden_sizes=(6, 12))
        outcome = train(toy_train, toy_val, config)
        assert len(outcome.trace) == 2 * (300 // 100)
        assert {row[1] for row in outcome.trace} == {6, 12}
        assert set(outcome.per_size) == {6, 12}

    def test_trace_csv_round_trips(self, toy_train, toy_val, tmp_path):
        path = tmp_path / "trace.csv"
        outcome = train(toy_train, toy_val, small_config(epochs=200), trace_path=path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "epoch,hidden_size,val_kl"
        rows = [line.split(",") for line in lines[1:]]
        parsed = tuple(
            (int(epoch), int(size), float(kl)) for epoch, size, kl in rows
        )
        assert parsed == outcome.trace

    def test_diverged_size_is_excluded_from_search(
        self, toy_train, toy_val, monkeypatch
    ):
        original = cgan_module._train_single_size

        def flaky(hidden_size, *args, **kwargs):
            if hidden_size == 6:
                raise TrainingDivergedError("boom", epoch=1, hidden_size=6)
            return original(hidden_size, *args, **kwargs)

        monkeypatch.setattr(cgan_module, "_train_single_size", flaky)
        outcome = train(
            toy_train, toy_val, small_config(epochs=200, hidden_sizes=(6, 12))
        )
        assert outcome.model.hidden_size == 12
        assert outcome.per_size[6] == float("inf")
        assert 6 in outcome.diverged
        assert all(row[1] == 12 for row in outcome.trace)

    def test_all_sizes_diverging_raises_no_viable_model(
        self, toy_train, toy_val, monkeypatch
    ):
        def always_diverge(hidden_size, *args, **kwargs):
            raise TrainingDivergedError("boom", epoch=1, hidden_size=hidden_size)

        monkeypatch.setattr(cgan_module, "_train_single_size", always_diverge)
        with pytest.raises(NoViableModelError, match="no viable model"):
            train(toy_train, toy_val, small_config(hidden_sizes=(6, 12)))

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_non_finite_loss_surfaces_as_divergence(self, toy_train, toy_val):
        config = small_config(
            epochs=100,
            optimizer="sgd",
            learning_rate=float("inf"),
            hidden_sizes=(6,),
        )
        with pytest.raises(NoViableModelError):
            train(toy_train, toy_val, config)

    @pytest.mark.slow
    def test_toy_conditional_gaussian_benchmark(self, toy_train, toy_val):
        """Average validation KL over the three codes reaches 0.1 or better."""
        config = small_config(
            epochs=6000, hidden_sizes=(50,), n_eval=4000, seed=1
        )
        outcome = train(toy_train, toy_val, config)
        assert outcome.model.validation_kl <= 0.1


@pytest.fixture(scope="module")
def trained_toy(toy_train, toy_val):
    return train(toy_train, toy_val, small_config(epochs=400))


class TestCganModel:
    def test_generate_is_deterministic_per_seed(self, trained_toy):
        model = trained_toy.model
        a = model.generate(0.5, 300, seed=9)
        b = model.generate(0.5, 300, seed=9)
        c = model.generate(0.5, 300, seed=10)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_generated_tips_stay_inside_the_scaling_range(self, trained_toy):
        model = trained_toy.model
        tips = model.generate(0.8, 2000, seed=11)
        assert np.all(tips > model.scaling.tip_min)
        assert np.all(tips < model.scaling.tip_max)

    def test_json_round_trip_reproduces_samples(self, trained_toy, tmp_path):
        model = trained_toy.model
        path = tmp_path / "model.json"
        model.to_json(path)
        clone = CganModel.from_json(path)
        assert clone.mode == model.mode
        assert clone.hidden_size == model.hidden_size
        assert clone.best_epoch == model.best_epoch
        assert clone.validation_kl == model.validation_kl
        assert np.array_equal(
            model.generate(0.2, 500, seed=3), clone.generate(0.2, 500, seed=3)
        )

    def test_hybrid_mode_requires_latent_payload(self, trained_toy):
        model = trained_toy.model
        with pytest.raises(MirrorforgeError, match="missing SFE model"):
            CganModel(
                mode="hybrid",
                generator=model.generator,
                discriminator=model.discriminator,
                noise_dim=model.noise_dim,
                scaling=model.scaling,
                hidden_size=model.hidden_size,
                best_epoch=model.best_epoch,
                validation_kl=model.validation_kl,
            )

    def test_generator_width_must_match_mode(self, trained_toy):
        model = trained_toy.model
        with pytest.raises(ValueError, match="inputs"):
            CganModel(
                mode="black-box",
                generator=model.generator,
                discriminator=model.discriminator,
                noise_dim=model.noise_dim + 1,
                scaling=model.scaling,
                hidden_size=model.hidden_size,
                best_epoch=model.best_epoch,
                validation_kl=model.validation_kl,
            )

    def test_sample_model_packages_generated_tips(self, trained_toy):
        sample_set = sample_model(
            trained_toy.model, [0.2, 0.8], n_per_load=150, seed=4
        )
        assert sample_set.provenance == "cgan"
        assert list(sample_set.codes) == [0.2, 0.8]
        assert sample_set.samples_for(0.2).size == 150
        again = sample_model(trained_toy.model, {0.2: 150, 0.8: 150}, seed=4)
        assert np.array_equal(sample_set.tips, again.tips)


@pytest.fixture(scope="module")
def linear_calibration():
    data = generate_linear(
        REFERENCE_FIELD, [10.0, 100.0, 200.0], 200, seed=404, geometry=REFERENCE_BEAM
    )
    scaling = ScalingSpec(
        load_min=10.0, load_max=200.0, tip_min=0.0, tip_max=0.02
    )
    config = CalibrationConfig(
        geometry=REFERENCE_BEAM,
        scaling=scaling,
        n_samples=2000,
        seed=5,
    )
    return calibrate(data.by_code(), [(2.0e9, 0.4e9, 3.0)], config), scaling


class TestHybridLatent:
    def test_latent_sampler_tracks_the_load(self):
        scaling = ScalingSpec(0.0, 100.0, 0.0, 1.0)
        latent = {
            "germ_dim": 2,
            "max_degree": 1,
            "tip_coefficients_unit": np.array([0.004, 0.0, 0.0]),
            "source_id": "test",
        }
        sampler = cgan_module._latent_sampler("hybrid", 1, scaling, latent)
        rng = np.random.default_rng(0)
        scaled_codes = scaling.scale_load(np.array([25.0, 50.0, 100.0]))
        draws = sampler(rng, scaled_codes)
        expected = scaling.scale_tip(0.004 * np.array([25.0, 50.0, 100.0]))
        np.testing.assert_allclose(draws[:, 0], expected, rtol=1e-12)
        assert draws.shape == (3, 1)

    def test_hybrid_training_embeds_the_spectral_latent(self, linear_calibration):
        calibration, scaling = linear_calibration
        rng = np.random.default_rng(77)
        samples = {
            10.0: rng.normal(-0.5, 0.05, 400),
            100.0: rng.normal(0.0, 0.05, 400),
            200.0: rng.normal(0.5, 0.05, 400),
        }
        scaled_codes = {
            float(scaling.scale_load(q)): values for q, values in samples.items()
        }
        train_set = SampleSet.from_samples(
            scaled_codes, provenance="linear-mc", scaling=scaling
        )
        val_set = SampleSet.from_samples(
            {k: v + 0.0 for k, v in scaled_codes.items()},
            provenance="linear-mc",
            scaling=scaling,
        )
        config = small_config(epochs=200, hidden_sizes=(8,), n_eval=200)
        outcome = train(
            train_set, val_set, config, mode="hybrid", sfe=calibration
        )
        model = outcome.model
        assert model.mode == "hybrid"
        assert model.noise_dim == 1
        assert model.generator.n_inputs == 2
        assert model.latent["germ_dim"] == 2
        assert "sfem" in model.latent["source_id"]
        tips = model.generate(150.0, 100, seed=6)
        assert tips.shape == (100,)
        assert np.all(np.isfinite(tips))

    def test_hybrid_round_trip_keeps_the_latent(self, linear_calibration, tmp_path):
        calibration, scaling = linear_calibration
        generator = Mlp.initialize(
            2, 8, 1, "tanh", np.random.default_rng(1)
        )
        discriminator = Mlp.initialize(
            2, 8, 1, "logistic", np.random.default_rng(2)
        )
        model = CganModel(
            mode="hybrid",
            generator=generator,
            discriminator=discriminator,
            noise_dim=1,
            scaling=scaling,
            hidden_size=8,
            best_epoch=100,
            validation_kl=0.5,
            latent={
                "germ_dim": calibration.basis.germ_dim,
                "max_degree": calibration.basis.max_degree,
                "tip_coefficients_unit": calibration.tip_coefficients_unit,
                "source_id": "sfem(test)",
            },
        )
        path = tmp_path / "hybrid.json"
        model.to_json(path)
        clone = CganModel.from_json(path)
        assert clone.latent["germ_dim"] == model.latent["germ_dim"]
        assert np.array_equal(
            model.generate(42.0, 200, seed=8), clone.generate(42.0, 200, seed=8)
        )


@pytest.fixture(scope="module")
def protocol_result():
    fit_loads = [float(q) for q in range(10, 311, 10)]
    held_loads = [float(q) for q in range(320, 401, 10)]
    fit = generate_linear(
        REFERENCE_FIELD, fit_loads, 120, seed=500, geometry=REFERENCE_BEAM
    )
    held = generate_linear(
        REFERENCE_FIELD, held_loads, 120, seed=501, geometry=REFERENCE_BEAM
    )
    config = TrainConfig(
        epochs=400,
        batch_size=64,
        hidden_sizes=(16,),
        selection_interval=100,
        n_eval=400,
        noise_dim=3,
        seed=0,
    )
    return extrapolation_protocol(
        fit,
        held,
        geometry=REFERENCE_BEAM,
        config=config,
        calibration_grid=[(2.0e9, 0.4e9, 3.0)],
        calibration_samples=2000,
    )


@pytest.mark.slow
class TestExtrapolationProtocol:
    def test_reports_cover_both_modes_and_domains(self, protocol_result):
        assert set(protocol_result.reports) == {"black-box", "hybrid"}
        for kinds in protocol_result.reports.values():
            assert set(kinds) == {"test", "held_out"}
            for report in kinds.values():
                assert np.isfinite(report.average_kl)

    def test_held_out_codes_match_across_modes(self, protocol_result):
        black = protocol_result.reports["black-box"]["held_out"].codes
        grey = protocol_result.reports["hybrid"]["held_out"].codes
        assert np.array_equal(black, grey)
        assert min(black) == 320.0 and max(black) == 400.0

    def test_scaling_targets_a_reduced_interval(self, protocol_result):
        assert protocol_result.scaling.target_lo == -0.8
        assert protocol_result.scaling.target_hi == 0.8

    def test_models_carry_their_modes(self, protocol_result):
        assert protocol_result.black_box.mode == "black-box"
        assert protocol_result.hybrid.mode == "hybrid"
        assert protocol_result.hybrid.latent is not None

    def test_result_serializes(self, protocol_result):
        payload = protocol_result.to_dict()
        assert set(payload["reports"]) == {"black-box", "hybrid"}
        assert payload["sfe_best_params"] == [2.0e9, 0.4e9, 3.0]

    def test_overlapping_domains_rejected(self):
        loads = [float(q) for q in range(10, 311, 10)]
        fit = generate_linear(
            REFERENCE_FIELD, loads, 5, seed=1, geometry=REFERENCE_BEAM
        )
        with pytest.raises(ValueError, match="overlap"):
            extrapolation_protocol(
                fit,
                fit,
                geometry=REFERENCE_BEAM,
                config=small_config(),
            )
