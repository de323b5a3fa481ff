import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from src.errors import ContractError, ShapeError
from src.network.cost_volume import build_gwc
from src.numerics import functional as F
from src.numerics.gradcheck import gradcheck
from src.numerics.module import Parameter


def gwc_loop(fl, fr, groups, disparities):
    channels, height, width = fl.shape
    per_group = channels // groups
    out = np.zeros((groups, disparities, height, width))
    for g in range(groups):
        for d in range(disparities):
            for y in range(height):
                for x in range(d, width):
                    total = 0.0
                    for c in range(g * per_group, (g + 1) * per_group):
                        total += fl[c, y, x] * fr[c, y, x - d]
                    out[g, d, y, x] = total / per_group
    return out


class TestGroupwiseCorrelation:
    def test_all_ones(self):
        ones = np.ones((32, 3, 8), dtype=np.float32)
        volume = build_gwc(ones, ones, groups=16, disparities=4).numpy()
        assert volume.shape == (16, 4, 3, 8)
        assert_array_equal(volume[:, 0], 1.0)
        for d in range(4):
            assert_array_equal(volume[:, d, :, d:], 1.0)

    def test_left_edge_is_zero(self, rng):
        fl, fr = rng.normal(size=(2, 8, 4, 9))
        volume = build_gwc(fl, fr, groups=4, disparities=5).numpy()
        for d in range(5):
            assert_array_equal(volume[:, d, :, :d], 0.0)

    def test_small_oracle(self, rng):
        fl, fr = rng.normal(size=(2, 4, 2, 5))
        assert_allclose(build_gwc(fl, fr, groups=2, disparities=3).numpy(), gwc_loop(fl, fr, 2, 3), atol=1e-12)

    @pytest.mark.parametrize("seed", range(20))
    def test_random_configurations(self, seed):
        rng = np.random.default_rng(seed)
        groups = int(rng.choice([1, 2, 4]))
        channels = groups * int(rng.integers(1, 4))
        height, width = int(rng.integers(1, 4)), int(rng.integers(2, 8))
        disparities = int(rng.integers(1, width + 1))
        fl, fr = rng.normal(size=(2, channels, height, width))
        expected = gwc_loop(fl, fr, groups, disparities)
        assert_allclose(build_gwc(fl, fr, groups, disparities).numpy(), expected, atol=1e-12)

    def test_linear_in_each_input(self, rng):
        fl, fr, other = rng.normal(size=(3, 8, 3, 6))
        base = build_gwc(fl, fr, 4, 3).numpy()
        assert_allclose(build_gwc(2.5 * fl, fr, 4, 3).numpy(), 2.5 * base, rtol=1e-10)
        summed = build_gwc(fl + other, fr, 4, 3).numpy()
        assert_allclose(summed, base + build_gwc(other, fr, 4, 3).numpy(), atol=1e-10)

    def test_true_shift_maximises_correlation(self, rng):
        channels, groups, shift, width = 8, 2, 3, 24
        base = rng.normal(size=(channels, 4, width + shift))
        per_group = base.reshape(groups, channels // groups, 4, width + shift)
        base = (per_group / np.linalg.norm(per_group, axis=1, keepdims=True)).reshape(base.shape)
        fl = base[:, :, :width]
        fr = base[:, :, shift : width + shift]
        volume = build_gwc(fl, fr, groups, disparities=8).numpy()
        assert np.all(np.argmax(volume[:, :, :, 8:], axis=1) == shift)

    def test_indivisible_channels(self, rng):
        fl = rng.normal(size=(6, 2, 8))
        with pytest.raises(ShapeError):
            build_gwc(fl, fl, groups=4, disparities=2)

    def test_too_many_disparities(self, rng):
        fl = rng.normal(size=(4, 2, 8))
        with pytest.raises(ContractError):
            build_gwc(fl, fl, groups=2, disparities=9)

    def test_gradients(self, rng):
        fl = Parameter(rng.normal(size=(4, 2, 5)), dtype=np.float64)
        fr = Parameter(rng.normal(size=(4, 2, 5)), dtype=np.float64)
        weights = rng.normal(size=(2, 3, 2, 5))
        results = gradcheck(lambda: F.sum(build_gwc(fl, fr, 2, 3) * weights), [fl, fr], names=("left", "right"))
        for result in results:
            assert result.passed(1e-6), f"{result.name}: {result.rel_error}"
