import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from PIL import Image

from src.dataset.calibration import disparity_to_depth, read_calibration, write_calibration
from src.dataset.images import read_image, write_image
from src.dataset.manifest import load_manifest, read_manifest, write_manifest
from src.dataset.pfm import read_pfm, write_pfm
from src.dataset.synthetic import DEFAULT_CALIBRATION, gen_rds, make_rds_dataset, occlusion_mask, two_plane_pattern
from src.errors import ContractError, FormatError, ShapeError
from src.models.stereo_models import Calibration


class TestPfm:
    def test_round_trip(self, tmp_path, rng):
        values = rng.normal(size=(4, 4)).astype(np.float32)
        assert_array_equal(read_pfm(write_pfm(tmp_path / "d.pfm", values)), values)

    def test_rows_are_stored_bottom_up(self, tmp_path):
        path = write_pfm(tmp_path / "d.pfm", np.array([[1.0], [2.0]]))
        payload = open(path, "rb").read().split(b"-1.0\n", 1)[1]
        assert_array_equal(np.frombuffer(payload, dtype="<f4"), [2.0, 1.0])

    def test_infinity_is_kept(self, tmp_path):
        values = np.array([[1.0, np.inf]], dtype=np.float32)
        assert_array_equal(read_pfm(write_pfm(tmp_path / "d.pfm", values)), values)

    def test_nan_is_rejected(self, tmp_path):
        with pytest.raises(FormatError):
            write_pfm(tmp_path / "d.pfm", np.array([[np.nan]]))
        (tmp_path / "n.pfm").write_bytes(b"Pf\n1 1\n-1.0\n" + np.array([np.nan], dtype="<f4").tobytes())
        with pytest.raises(FormatError, match="NaN"):
            read_pfm(tmp_path / "n.pfm")

    def test_color_is_rejected(self, tmp_path):
        (tmp_path / "c.pfm").write_bytes(b"PF\n1 1\n-1.0\n" + np.zeros(3, dtype="<f4").tobytes())
        with pytest.raises(FormatError, match="color"):
            read_pfm(tmp_path / "c.pfm")

    def test_big_endian_is_rejected(self, tmp_path):
        (tmp_path / "b.pfm").write_bytes(b"Pf\n1 1\n1.0\n" + np.zeros(1, dtype=">f4").tobytes())
        with pytest.raises(FormatError, match="big-endian"):
            read_pfm(tmp_path / "b.pfm")

    @pytest.mark.parametrize("scale", [b"--1", b"1e", b"-.", b"e"])
    def test_malformed_scale(self, tmp_path, scale):
        (tmp_path / "s.pfm").write_bytes(b"Pf\n1 1\n" + scale + b"\n" + np.zeros(1, dtype="<f4").tobytes())
        with pytest.raises(FormatError, match="scale"):
            read_pfm(tmp_path / "s.pfm")

    def test_truncated(self, tmp_path):
        (tmp_path / "t.pfm").write_bytes(b"Pf\n2 2\n-1.0\n" + np.zeros(3, dtype="<f4").tobytes())
        with pytest.raises(FormatError, match="truncated"):
            read_pfm(tmp_path / "t.pfm")

    def test_missing_file(self, tmp_path):
        with pytest.raises(FormatError):
            read_pfm(tmp_path / "absent.pfm")


class TestImages:
    def test_png_round_trip(self, tmp_path, rng):
        image = rng.integers(0, 256, size=(3, 8, 12)).astype(np.float32) / 255.0
        assert_allclose(read_image(write_image(tmp_path / "i.png", image)), image, atol=1e-6)

    def test_grayscale_is_replicated(self, tmp_path):
        Image.fromarray(np.full((4, 5), 51, dtype=np.uint8)).save(tmp_path / "g.pgm")
        image = read_image(tmp_path / "g.pgm")
        assert image.shape == (3, 4, 5)
        assert_allclose(image, 0.2, atol=1e-6)

    def test_sixteen_bit_is_rejected(self, tmp_path):
        Image.fromarray(np.zeros((4, 4), dtype=np.uint16)).save(tmp_path / "deep.png")
        with pytest.raises(FormatError):
            read_image(tmp_path / "deep.png")

    def test_not_an_image(self, tmp_path):
        (tmp_path / "x.png").write_text("hello")
        with pytest.raises(FormatError):
            read_image(tmp_path / "x.png")


class TestCalibration:
    def test_round_trip(self, tmp_path):
        calib = Calibration(focal_px=721.5, baseline_mm=537.2)
        assert read_calibration(write_calibration(tmp_path / "c.txt", calib)) == calib

    def test_comments_and_blank_lines(self, tmp_path):
        (tmp_path / "c.txt").write_text("# rig\n\nfocal_px = 100\nbaseline_mm=5 # mm\n")
        assert read_calibration(tmp_path / "c.txt") == Calibration(focal_px=100, baseline_mm=5)

    @pytest.mark.parametrize("text", ["focal_px=100\n", "focal_px=-1\nbaseline_mm=5\n", "focal 100\n"])
    def test_invalid(self, tmp_path, text):
        (tmp_path / "c.txt").write_text(text)
        with pytest.raises(FormatError):
            read_calibration(tmp_path / "c.txt")

    def test_depth_formula(self):
        depth = disparity_to_depth(np.array([[10.0]]), DEFAULT_CALIBRATION)
        assert_allclose(depth.values, [[50.0]])
        assert depth.valid.tolist() == [[True]]

    def test_zero_disparity_is_invalid(self):
        depth = disparity_to_depth(np.array([[0.0, 1e-9, np.inf]]), DEFAULT_CALIBRATION)
        assert depth.valid.tolist() == [[False, False, False]]
        assert np.all(np.isfinite(depth.values))


class TestRandomDots:
    def test_zero_pattern(self):
        sample = gen_rds(32, 48, np.zeros((32, 48), dtype=np.int64))
        assert_array_equal(sample.pair.left, sample.pair.right)
        assert_array_equal(sample.gt_disparity, 0.0)
        assert sample.valid.all()

    def test_constant_shift(self):
        sample = gen_rds(32, 48, np.full((32, 48), 8))
        assert_array_equal(sample.pair.left[:, :, 8:], sample.pair.right[:, :, :-8])
        assert not sample.valid[:, :8].any()
        assert sample.valid[:, 8:].all()

    def test_two_planes(self):
        pattern = two_plane_pattern(32, 64, near=16, far=8)
        sample = gen_rds(32, 64, pattern, seed=3)
        assert_array_equal(sample.gt_disparity, pattern)
        rows, cols = np.nonzero(sample.valid)
        left, right = sample.pair.left, sample.pair.right
        assert_array_equal(left[:, rows, cols], right[:, rows, cols - pattern[rows, cols]])

    def test_occlusion_seam(self):
        pattern = two_plane_pattern(16, 64, near=16, far=8)
        occluded = occlusion_mask(pattern)
        # far pixels whose right-view column is also claimed by a near pixel
        assert occluded[0, 24:32].all()
        assert not occluded[0, :24].any()
        assert not occluded[:, 32:].any()

    def test_seeded(self):
        pattern = two_plane_pattern(16, 32, near=8, far=4)
        assert_array_equal(gen_rds(16, 32, pattern, seed=1).pair.right, gen_rds(16, 32, pattern, seed=1).pair.right)
        assert not np.array_equal(gen_rds(16, 32, pattern, seed=1).pair.right, gen_rds(16, 32, pattern, seed=2).pair.right)

    def test_pattern_out_of_range(self):
        with pytest.raises(ContractError):
            gen_rds(16, 32, np.full((16, 32), 20), max_disparity=16)
        with pytest.raises(ContractError):
            gen_rds(16, 32, np.full((16, 32), -1))
        with pytest.raises(ContractError):
            gen_rds(16, 32, np.full((16, 32), 1.5))

    def test_bad_extent(self):
        with pytest.raises(ShapeError):
            gen_rds(20, 32, np.zeros((20, 32)))
        with pytest.raises(ShapeError):
            gen_rds(16, 32, np.zeros((16, 16)))

    def test_dataset(self):
        samples = make_rds_dataset(3, 16, 48, max_disparity=32)
        assert [s.name for s in samples] == ["rds_000", "rds_001", "rds_002"]
        assert samples[0].calib == DEFAULT_CALIBRATION


class TestManifest:
    def write_sample(self, tmp_path, name, with_gt=True):
        sample = gen_rds(16, 32, two_plane_pattern(16, 32, near=8, far=4), seed=len(name))
        write_image(tmp_path / f"{name}_l.png", sample.pair.left)
        write_image(tmp_path / f"{name}_r.png", sample.pair.right)
        row = [f"{name}_l.png", f"{name}_r.png"]
        if with_gt:
            write_pfm(tmp_path / f"{name}.pfm", np.where(sample.valid, sample.gt_disparity, np.inf))
            write_calibration(tmp_path / f"{name}.txt", DEFAULT_CALIBRATION)
            row += [f"{name}.pfm", f"{name}.txt"]
        return row

    def test_relative_paths_and_optional_columns(self, tmp_path):
        rows = [self.write_sample(tmp_path, "a"), self.write_sample(tmp_path, "b", with_gt=False)]
        path = write_manifest(tmp_path / "m.tsv", rows)
        entries = read_manifest(path)
        assert entries[0].left == tmp_path / "a_l.png"
        assert entries[0].gt == tmp_path / "a.pfm"
        assert entries[1].gt is None and entries[1].calib is None
        samples = load_manifest(path)
        assert samples[0].name == "a_l"
        assert samples[0].calib == DEFAULT_CALIBRATION
        assert samples[0].gt_disparity.shape == (16, 32)
        assert samples[1].gt_disparity is None

    def test_comments_are_skipped(self, tmp_path):
        row = self.write_sample(tmp_path, "a")
        (tmp_path / "m.tsv").write_text("# header\n" + "\t".join(row) + "\n\n")
        assert len(read_manifest(tmp_path / "m.tsv")) == 1

    def test_missing_right(self, tmp_path):
        (tmp_path / "m.tsv").write_text("left.png\n")
        with pytest.raises(FormatError):
            read_manifest(tmp_path / "m.tsv")

    def test_empty(self, tmp_path):
        (tmp_path / "m.tsv").write_text("")
        assert read_manifest(tmp_path / "m.tsv") == []

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(FormatError):
            read_manifest(tmp_path / "absent.tsv")

    def test_missing_image(self, tmp_path):
        (tmp_path / "m.tsv").write_text("nope_l.png\tnope_r.png\n")
        with pytest.raises(FormatError):
            load_manifest(tmp_path / "m.tsv")
