import numpy as np
import pytest

from share_hsi import (
    HsiCube,
    RandomSource,
    crop_and_select,
    drop_bands,
    normalize,
    synthesize_lowrank_cube,
)
from share_hsi.errors import (
    BoundsError,
    DataError,
    DegenerateRangeError,
    ParameterError,
)


def random_cube(seed=0, shape=(5, 12, 10), lo=0.0, hi=1.0):
    rng = np.random.default_rng(seed)
    data = rng.uniform(lo, hi, size=shape).astype(np.float32)
    return HsiCube(data, value_range=(lo, hi))


class TestRandomSource:
    def test_same_stream_reproduces(self):
        a = RandomSource(42, "noise").numpy_rng().standard_normal(100)
        b = RandomSource(42, "noise").numpy_rng().standard_normal(100)
        assert np.array_equal(a, b)

    def test_streams_decorrelate(self):
        a = RandomSource(42, "noise").numpy_rng().standard_normal(1000)
        b = RandomSource(42, "probe").numpy_rng().standard_normal(1000)
        assert abs(np.corrcoef(a, b)[0, 1]) < 0.1

    def test_torch_generator_reproduces(self):
        import torch
        g1 = RandomSource(7, "x").torch_generator()
        g2 = RandomSource(7, "x").torch_generator()
        assert torch.equal(torch.randn(50, generator=g1),
                           torch.randn(50, generator=g2))

    def test_child_naming(self):
        src = RandomSource(1).child("a").child("b")
        assert src.stream_id == "root/a/b"


class TestHsiCube:
    def test_rejects_non_finite(self):
        data = np.ones((2, 3, 3), dtype=np.float32)
        data[0, 0, 0] = np.nan
        with pytest.raises(DataError):
            HsiCube(data)

    def test_rejects_wrong_dims(self):
        with pytest.raises(ParameterError):
            HsiCube(np.ones((4, 4), dtype=np.float32))

    def test_wavelength_length_checked(self):
        with pytest.raises(ParameterError):
            HsiCube(np.ones((3, 2, 2)), wavelengths=np.array([400.0, 500.0]))


class TestNormalize:
    def test_global_minmax_binary_values(self):
        cube = HsiCube(np.array([[[0.0, 255.0]], [[255.0, 0.0]]]),
                       value_range=(0.0, 255.0))
        out = normalize(cube, "global-minmax")
        assert set(np.unique(out.data)) == {0.0, 1.0}

    def test_fixed_range_identity_on_unit_cube(self):
        cube = random_cube()
        out = normalize(cube, "fixed-range")
        assert np.array_equal(out.data, cube.data)

    def test_global_minmax_hits_bounds(self):
        cube = random_cube(seed=3, lo=-4.0, hi=9.0)
        out = normalize(cube, "global-minmax")
        assert out.data.min() == 0.0
        assert out.data.max() == 1.0

    def test_fixed_range_idempotent(self):
        cube = random_cube(seed=1, lo=2.0, hi=7.0)
        once = normalize(cube, "fixed-range")
        twice = normalize(once, "fixed-range")
        assert np.array_equal(once.data, twice.data)

    def test_constant_cube_degenerate(self):
        cube = HsiCube(np.full((2, 4, 4), 0.5), value_range=(0.5, 0.5))
        with pytest.raises(DegenerateRangeError):
            normalize(cube, "global-minmax")

    def test_denormalize_round_trip(self):
        cube = random_cube(seed=5, lo=10.0, hi=300.0)
        normalized = normalize(cube, "global-minmax")
        back = normalized.denormalize()
        assert np.allclose(back.data, cube.data, atol=1e-4)

    def test_per_band_round_trip(self):
        cube = random_cube(seed=6, lo=0.0, hi=50.0)
        normalized = normalize(cube, "per-band-minmax")
        assert normalized.data.min() == 0.0 and normalized.data.max() == 1.0
        back = normalized.denormalize()
        assert np.allclose(back.data, cube.data, atol=1e-3)


class TestCropAndSelect:
    def test_identity_crop(self):
        cube = random_cube()
        out = crop_and_select(cube, spatial=(0, 0, cube.height, cube.width),
                              bands=range(cube.bands))
        assert np.array_equal(out.data, cube.data)

    def test_paper_band_count(self):
        # 220-band cube minus 20 corrupted bands keeps 200
        cube = HsiCube(np.random.default_rng(0).uniform(size=(220, 4, 4)))
        out = drop_bands(cube, list(range(0, 20)))
        assert out.bands == 200

    def test_center_crop_constant(self):
        cube = HsiCube(np.full((3, 16, 16), 0.25))
        out = crop_and_select(cube, spatial=(4, 4, 8, 8))
        assert out.shape == (3, 8, 8)
        assert np.all(out.data == np.float32(0.25))

    def test_exact_subarray(self):
        cube = random_cube(seed=9, shape=(4, 10, 11))
        out = crop_and_select(cube, spatial=(2, 3, 5, 6), bands=[3, 1])
        assert np.array_equal(out.data, cube.data[[3, 1], 2:7, 3:9])

    def test_out_of_bounds(self):
        cube = random_cube()
        with pytest.raises(BoundsError):
            crop_and_select(cube, spatial=(0, 0, cube.height + 1, 2))
        with pytest.raises(BoundsError):
            crop_and_select(cube, bands=[cube.bands])

    def test_wavelengths_follow_selection(self):
        wl = np.linspace(400, 900, 6)
        cube = HsiCube(np.random.default_rng(1).uniform(size=(6, 4, 4)),
                       wavelengths=wl)
        out = crop_and_select(cube, bands=[5, 0])
        assert np.array_equal(out.wavelengths, wl[[5, 0]])

    def test_commutes_with_fixed_range_normalize(self):
        cube = random_cube(seed=11, lo=0.0, hi=4.0)
        cube = HsiCube(cube.data, value_range=(0.0, 4.0))
        a = normalize(crop_and_select(cube, spatial=(1, 1, 6, 6)), "fixed-range")
        b = crop_and_select(normalize(cube, "fixed-range"), spatial=(1, 1, 6, 6))
        assert np.array_equal(a.data, b.data)


class TestSynthesizeLowRank:
    def test_rank_one_spectra_proportional(self):
        cube = synthesize_lowrank_cube(8, 12, 12, 1, RandomSource(0))
        flat = cube.data.reshape(8, -1).astype(np.float64)
        # every pixel spectrum is a scalar multiple of one endmember
        reference = flat[:, np.argmax(np.linalg.norm(flat, axis=0))]
        reference = reference / np.linalg.norm(reference)
        cos = reference @ flat / np.linalg.norm(flat, axis=0)
        assert np.all(np.abs(cos - 1.0) < 1e-6)

    def test_svd_rank_bound(self):
        # independent oracle: singular values of the flattened spectra matrix
        cube = synthesize_lowrank_cube(31, 16, 16, 4, RandomSource(1))
        flat = cube.data.reshape(31, -1).astype(np.float64)
        s = np.linalg.svd(flat, compute_uv=False)
        assert np.all(s[4:] < 1e-6 * s[0])

    def test_deterministic(self):
        a = synthesize_lowrank_cube(5, 8, 8, 2, RandomSource(3))
        b = synthesize_lowrank_cube(5, 8, 8, 2, RandomSource(3))
        assert np.array_equal(a.data, b.data)

    def test_values_in_unit_interval(self):
        cube = synthesize_lowrank_cube(6, 10, 10, 3, RandomSource(4))
        assert cube.data.min() >= 0.0
        assert cube.data.max() <= 1.0

    def test_invalid_rank(self):
        with pytest.raises(ParameterError):
            synthesize_lowrank_cube(4, 8, 8, 0, RandomSource(0))
        with pytest.raises(ParameterError):
            synthesize_lowrank_cube(4, 8, 8, 5, RandomSource(0))

    @pytest.mark.parametrize("rank", [1, 2, 4])
    def test_rank_never_exceeded(self, rank):
        cube = synthesize_lowrank_cube(8, 12, 12, rank, RandomSource(rank))
        flat = cube.data.reshape(8, -1).astype(np.float64)
        s = np.linalg.svd(flat, compute_uv=False)
        assert np.all(s[rank:] < 1e-6 * s[0])
