import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from src.errors import ConfigError, ContractError
from src.models.run_config import HFDOConfig
from src.models.stereo_models import WaveletBands
from src.network.hfdo import HFDO, ContextProjection, ResidualHead, attenuate, haar_dwt, haar_iwt, refine
from src.numerics import functional as F
from src.numerics.gradcheck import gradcheck
from src.numerics.tensor import as_tensor
from src.selftest import corrupted_haar_kernels


def haar_loop(x):
    c, h, w = x.shape
    out = np.zeros((4, c, h // 2, w // 2))
    for ch in range(c):
        for i in range(h // 2):
            for j in range(w // 2):
                a, b = x[ch, 2 * i, 2 * j], x[ch, 2 * i, 2 * j + 1]
                cc, d = x[ch, 2 * i + 1, 2 * j], x[ch, 2 * i + 1, 2 * j + 1]
                out[:, ch, i, j] = 0.5 * np.array([a + b + cc + d, a - b + cc - d, a + b - cc - d, a - b - cc + d])
    return out


def bands_of(values):
    return WaveletBands(*(as_tensor(np.full((1, 1, 1), float(v))) for v in values))


class TestHaar:
    def test_hand_case(self):
        bands = haar_dwt(np.array([[[1.0, 2.0], [3.0, 4.0]]]))
        assert [float(b.numpy().item()) for b in bands] == [5.0, -1.0, -2.0, 0.0]

    def test_constant_input(self):
        bands = haar_dwt(np.full((2, 4, 6), 1.5))
        assert_allclose(bands.ll.numpy(), 3.0)
        for band in bands[1:]:
            assert_allclose(band.numpy(), 0.0)

    def test_matches_window_oracle(self, rng):
        x = rng.normal(size=(1, 6, 6))
        bands = haar_dwt(x)
        expected = haar_loop(x)
        for i, band in enumerate(bands):
            assert_allclose(band.numpy(), expected[i], atol=1e-12)

    def test_odd_extent(self, rng):
        with pytest.raises(ContractError):
            haar_dwt(rng.normal(size=(1, 5, 6)))

    def test_inverse_of_hand_case(self):
        out = haar_iwt(bands_of([5.0, -1.0, -2.0, 0.0])).numpy()
        assert_allclose(out, [[[1.0, 2.0], [3.0, 4.0]]], atol=1e-12)

    def test_zero_bands(self):
        assert_array_equal(haar_iwt(bands_of([0.0, 0.0, 0.0, 0.0])).numpy(), 0.0)

    def test_round_trip_and_energy(self, rng):
        for _ in range(100):
            x = rng.normal(size=(3, 8, 8)).astype(np.float32)
            bands = haar_dwt(x)
            assert np.max(np.abs(haar_iwt(bands).numpy() - x)) < 1e-5
            energy = sum(float(np.sum(b.numpy().astype(np.float64) ** 2)) for b in bands)
            assert_allclose(energy, np.sum(x.astype(np.float64) ** 2), rtol=1e-5)

    def test_band_shape_mismatch(self, rng):
        bands = WaveletBands(np.zeros((1, 2, 2)), np.zeros((1, 2, 2)), np.zeros((1, 2, 3)), np.zeros((1, 2, 2)))
        with pytest.raises(ContractError):
            haar_iwt(bands)

    def test_corrupted_kernels_break_reconstruction(self, rng):
        x = rng.normal(size=(2, 4, 4))
        kernels = corrupted_haar_kernels()
        assert np.max(np.abs(haar_iwt(haar_dwt(x, kernels), kernels).numpy() - x)) > 1e-3


class TestAttenuate:
    def test_omega_one_is_identity(self):
        bands = bands_of([5.0, -1.0, -2.0, 0.0])
        out = attenuate(bands, 1.0)
        for a, b in zip(out, bands):
            assert_allclose(a.numpy(), b.numpy())

    def test_omega_zero_removes_low_band(self):
        out = attenuate(bands_of([5.0, -1.0, -2.0, 0.0]), 0.0)
        assert float(out.ll.numpy().item()) == 0.0
        assert [float(b.numpy().item()) for b in out[1:]] == [-1.0, -2.0, 0.0]

    def test_half(self):
        assert float(attenuate(bands_of([5.0, 0, 0, 0]), 0.5).ll.numpy().item()) == 2.5

    @pytest.mark.parametrize("omega", [-0.1, 1.5])
    def test_out_of_range(self, omega):
        with pytest.raises(ConfigError):
            attenuate(bands_of([1.0, 0, 0, 0]), omega)


class TestContextAndRefinement:
    def test_projection_shape_and_sign(self, rng):
        proj = ContextProjection(32, 16, rng=rng)
        out, pads = proj(rng.normal(size=(32, 64, 128)).astype(np.float32))
        assert out.shape == (16, 64, 128)
        assert pads == (0, 0)
        assert out.numpy().min() >= 0.0

    def test_zero_input_zero_output(self, rng):
        out, _ = ContextProjection(8, 4, mode="conv3", rng=rng)(np.zeros((8, 6, 6), dtype=np.float32))
        assert_array_equal(out.numpy(), 0.0)

    def test_odd_extent_is_padded(self, rng):
        out, pads = ContextProjection(4, 2, rng=rng)(rng.normal(size=(4, 5, 7)))
        assert pads == (1, 1)
        assert out.shape == (2, 6, 8)

    def test_unknown_projection(self):
        with pytest.raises(ConfigError):
            ContextProjection(4, 2, mode="deep")

    def test_fresh_head_keeps_disparity(self, rng):
        head = ResidualHead(4, rng=rng)
        disparity = rng.uniform(0, 10, size=(8, 12)).astype(np.float32)
        out = refine(disparity, as_tensor(rng.normal(size=(4, 2, 3)).astype(np.float32)), head)
        assert_allclose(out.numpy(), disparity)

    def test_negative_residual_is_clamped(self):
        out = refine(np.zeros((2, 2)), None, lambda _: as_tensor(np.array([[-3.0, 1.0], [0.0, 0.0]]))).numpy()
        assert_array_equal(out, [[0.0, 1.0], [0.0, 0.0]])

    def test_module_output(self, rng):
        module = HFDO(8, HFDOConfig(context_channels=4), rng=rng)
        out = module(rng.normal(size=(8, 5, 7)).astype(np.float32), np.full((20, 28), 3.0, dtype=np.float32))
        assert out.shape == (20, 28)
        assert out.numpy().min() >= 0.0

    def test_omega_one_keeps_projection(self, rng):
        module = HFDO(4, HFDOConfig(omega=1.0, context_channels=3), rng=rng)
        context = rng.normal(size=(4, 6, 8))
        projected, _ = module.context(context)
        assert_allclose(module.filtered_context(context).numpy(), projected.numpy(), atol=1e-5)

    def test_gradients(self, rng):
        module = HFDO(4, HFDOConfig(context_channels=2, context="conv3"), rng=rng)
        module.head.conv.weight.assign(rng.normal(0.0, 0.3, size=module.head.conv.weight.shape))
        context = rng.normal(size=(4, 4, 6))
        disparity = np.full((16, 24), 10.0)
        weights = rng.normal(size=(16, 24))
        names = [name for name, _ in module.named_parameters()]
        results = gradcheck(lambda: F.sum(module(context, disparity) * weights), module.parameters(), names=names, h=1e-5)
        for result in results:
            assert result.passed(1e-3), f"{result.name}: {result.rel_error}"


class TestRefinementProperty:
    def test_refined_disparity_is_never_negative(self):
        rng = np.random.default_rng(2025)
        for _ in range(1000):
            channels, context_channels = rng.integers(1, 5, size=2)
            height, width = rng.integers(1, 7, size=2)
            module = HFDO(int(channels), HFDOConfig(context_channels=int(context_channels), omega=rng.uniform()), rng=rng)
            module.head.conv.weight.assign(rng.normal(size=module.head.conv.weight.shape))
            context = rng.normal(size=(channels, height, width))
            scale = 10.0 ** rng.uniform(-3.0, 3.0)
            disparity = scale * rng.normal(size=(4 * height, 4 * width))
            out = module(context, disparity).numpy()
            assert out.shape == disparity.shape
            assert out.min() >= 0.0
