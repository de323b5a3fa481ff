import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_array_equal

from src.dataset.synthetic import gen_rds, two_plane_pattern
from src.errors import ContractError
from src.network.pipeline import build_model
from src.training.loader import SampleLoader, random_crop
from src.training.trainer import CURVE_COLUMNS, Trainer, train_model, write_loss_curve


def tiny_sample(seed=0, name="rds"):
    return gen_rds(32, 64, two_plane_pattern(32, 64, near=8, far=4), max_disparity=16, seed=seed, name=name)


def blank_sample():
    return gen_rds(32, 64, np.zeros((32, 64), dtype=np.int64), max_disparity=16, name="blank")


class TestSampleLoader:
    def test_random_crop(self, rng):
        sample = gen_rds(64, 96, two_plane_pattern(64, 96, near=8, far=4), max_disparity=16)
        crop = random_crop(sample, 32, 48, rng)
        assert crop.pair.left.shape == (3, 32, 48)
        assert crop.gt_disparity.shape == (32, 48)
        assert crop.valid.shape == (32, 48)

    def test_crop_larger_than_image(self, rng):
        crop = random_crop(tiny_sample(), 256, 512, rng)
        assert crop.pair.left.shape == (3, 32, 64)

    def test_same_seed_same_stream(self):
        samples = [tiny_sample(i, f"s{i}") for i in range(4)]
        first = [c.name for c in SampleLoader(samples, 16, 32, seed=3).epoch(0)]
        second = [c.name for c in SampleLoader(samples, 16, 32, seed=3).epoch(0)]
        assert first == second
        assert sorted(first) == ["s0", "s1", "s2", "s3"]

    def test_crops_are_reproducible(self):
        samples = [tiny_sample()]
        a = next(iter(SampleLoader(samples, 16, 32, seed=1).epoch(2)))
        b = next(iter(SampleLoader(samples, 16, 32, seed=1).epoch(2)))
        assert_array_equal(a.pair.left, b.pair.left)

    def test_unshuffled_order(self):
        samples = [tiny_sample(i, f"s{i}") for i in range(3)]
        names = [c.name for c in SampleLoader(samples, 16, 32, shuffle=False, queue_size=1).epoch(0)]
        assert names == ["s0", "s1", "s2"]

    def test_producer_errors_reach_consumer(self):
        loader = SampleLoader([object()], 16, 16)
        with pytest.raises(AttributeError):
            list(loader.epoch(0))

    def test_early_exit_releases_producer(self):
        samples = [tiny_sample(i) for i in range(6)]
        stream = SampleLoader(samples, 16, 32, queue_size=1).epoch(0)
        next(stream)
        stream.close()


class TestTrainer:
    def test_curve_has_one_row_per_step(self, tiny_run_config):
        result = Trainer(build_model(tiny_run_config.model), tiny_run_config).train([tiny_sample()])
        assert result.steps == 3
        assert list(result.curve.columns) == CURVE_COLUMNS
        assert result.curve["step"].tolist() == [0, 1, 2]
        assert np.all(np.isfinite(result.curve["total"]))

    def test_fixed_seed_is_deterministic(self, tiny_run_config):
        samples = [tiny_sample(0), tiny_sample(1)]
        first = Trainer(build_model(tiny_run_config.model), tiny_run_config).train(samples)
        second = Trainer(build_model(tiny_run_config.model), tiny_run_config).train(samples)
        pd.testing.assert_frame_equal(first.curve, second.curve)

    def test_loss_falls_on_one_sample(self, tiny_run_config):
        cfg = tiny_run_config.model_copy(update={"train": tiny_run_config.train.model_copy(update={"steps": 15})})
        curve = Trainer(build_model(cfg.model), cfg).train([tiny_sample()]).curve
        assert curve["total"].iloc[-3:].mean() < curve["total"].iloc[0]

    def test_zero_weights_freeze_later_stages(self, tiny_run_config):
        train = tiny_run_config.train.model_copy(update={"steps": 1, "w1": 1.0, "w2": 0.0, "w3": 0.0})
        cfg = tiny_run_config.model_copy(update={"train": train})
        model = build_model(cfg.model)
        before = {name: p.data.copy() for name, p in model.named_parameters()}
        Trainer(model, cfg).train([tiny_sample()])
        after = dict(model.named_parameters())
        for name, value in before.items():
            if name.startswith(("aggregation.", "hfdo.")):
                assert_array_equal(after[name].data, value, err_msg=name)
        assert not np.array_equal(after["initial.conv.weight"].data, before["initial.conv.weight"])

    def test_empty_manifest(self, tiny_run_config):
        with pytest.raises(ContractError):
            Trainer(build_model(tiny_run_config.model), tiny_run_config).train([])

    def test_no_usable_ground_truth(self, tiny_run_config):
        with pytest.raises(ContractError):
            Trainer(build_model(tiny_run_config.model), tiny_run_config).train([blank_sample()])

    def test_empty_crops_are_skipped(self, tiny_run_config):
        train = tiny_run_config.train.model_copy(update={"steps": 2})
        cfg = tiny_run_config.model_copy(update={"train": train})
        result = Trainer(build_model(cfg.model), cfg).train([tiny_sample(), blank_sample()])
        assert result.steps == 2
        assert result.skipped >= 1

    def test_loss_curve_file(self, tiny_run_config, tmp_path):
        path = tmp_path / "curve.tsv"
        train_model(build_model(tiny_run_config.model), tiny_run_config, [tiny_sample()], curve_path=str(path))
        curve = pd.read_csv(path, sep="\t")
        assert list(curve.columns) == CURVE_COLUMNS
        assert len(curve) == 3

    def test_write_loss_curve_is_tab_separated(self, tmp_path):
        frame = pd.DataFrame([[0, 0, 1.0, 1.0, 1.0, 1.0]], columns=CURVE_COLUMNS)
        text = open(write_loss_curve(frame, tmp_path / "c.tsv")).read()
        assert text.splitlines()[0] == "\t".join(CURVE_COLUMNS)
