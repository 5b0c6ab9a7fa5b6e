import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sonarcensus.raster import (
    CorruptImageError,
    PNG_SIGNATURE,
    Raster,
    SeedStream,
    UnsupportedFormatError,
    bilinear_sample,
    derive_seed,
    derive_stream,
    encode_png,
    ensure_rgb,
    load_raster,
    resize,
    save_raster,
)


def random_raster(rng, h, w, c):
    return Raster(rng.random((h, w, c)))


class TestRasterType:
    def test_shape_and_properties(self):
        r = Raster(np.zeros((4, 6, 3)))
        assert (r.height, r.width, r.channels) == (4, 6, 3)
        assert r.pixels.size == 4 * 6 * 3

    def test_grayscale_2d_promoted_to_hw1(self):
        r = Raster(np.zeros((4, 6)))
        assert r.channels == 1

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            Raster(np.full((2, 2, 1), 1.5))
        with pytest.raises(ValueError):
            Raster(np.full((2, 2, 1), -0.1))

    def test_rejects_bad_channels(self):
        with pytest.raises(ValueError):
            Raster(np.zeros((2, 2, 2)))

    def test_pixels_are_read_only(self):
        r = Raster(np.zeros((2, 2, 1)))
        with pytest.raises(ValueError):
            r.pixels[0, 0, 0] = 1.0

    def test_ensure_rgb(self):
        r = Raster(np.linspace(0, 1, 12).reshape(3, 4, 1))
        rgb = ensure_rgb(r)
        assert rgb.channels == 3
        for c in range(3):
            assert np.array_equal(rgb.pixels[:, :, c], r.pixels[:, :, 0])


class TestPngIO:
    def test_all_black_file_loads_as_zeros(self, tmp_path):
        p = tmp_path / "black.png"
        save_raster(Raster(np.zeros((2, 2, 1))), p)
        r = load_raster(p)
        assert np.array_equal(r.pixels, np.zeros((2, 2, 1)))

    def test_full_white_pixel_maps_to_one(self, tmp_path):
        p = tmp_path / "white.png"
        save_raster(Raster(np.ones((1, 1, 1))), p)
        assert load_raster(p).pixels[0, 0, 0] == 1.0

    def test_half_value_quantizes_to_128(self, tmp_path):
        # round(0.5 * 255) = 128, so the file stores 128 and loads as 128/255
        p = tmp_path / "half.png"
        save_raster(Raster(np.full((1, 1, 1), 0.5)), p)
        assert load_raster(p).pixels[0, 0, 0] == 128 / 255

    def test_lattice_values_round_trip_exactly(self, tmp_path):
        rng = np.random.default_rng(0)
        for i in range(100):
            vals = rng.integers(0, 256, size=(5, 7, 3)) / 255.0
            r = Raster(vals)
            p = tmp_path / f"r{i}.png"
            save_raster(r, p)
            assert np.array_equal(load_raster(p).pixels, r.pixels), f"raster {i}"

    def test_round_trip_error_below_quantization_bound(self, tmp_path):
        rng = np.random.default_rng(1)
        r = random_raster(rng, 16, 16, 3)
        p = tmp_path / "q.png"
        save_raster(r, p)
        err = np.abs(load_raster(p).pixels - r.pixels).max()
        assert err <= 1 / 510 + 1e-12

    def test_missing_file_raises_file_not_found(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_raster(tmp_path / "nope.png")

    def test_non_png_raises_unsupported(self, tmp_path):
        p = tmp_path / "fake.png"
        p.write_bytes(b"JFIF not a png at all")
        with pytest.raises(UnsupportedFormatError):
            load_raster(p)

    def test_truncated_png_raises_corrupt(self, tmp_path):
        p = tmp_path / "ok.png"
        save_raster(Raster(np.zeros((8, 8, 1))), p)
        data = p.read_bytes()
        bad = tmp_path / "trunc.png"
        bad.write_bytes(data[: len(PNG_SIGNATURE) + 10])
        with pytest.raises(CorruptImageError):
            load_raster(bad)

    def test_16bit_png_raises_unsupported(self, tmp_path):
        from PIL import Image

        p = tmp_path / "deep.png"
        Image.fromarray(np.full((2, 2), 1000, dtype=np.uint16)).save(p)
        with pytest.raises(UnsupportedFormatError):
            load_raster(p)

    def test_encode_png_matches_file_bytes(self, tmp_path):
        rng = np.random.default_rng(2)
        r = random_raster(rng, 9, 13, 3)
        p = tmp_path / "e.png"
        save_raster(r, p)
        assert encode_png(r) == p.read_bytes()


class TestResize:
    def test_same_size_is_identity(self):
        rng = np.random.default_rng(3)
        r = random_raster(rng, 5, 9, 3)
        out = resize(r, 9, 5)
        assert np.array_equal(out.pixels, r.pixels)

    def test_constant_preserved(self):
        r = Raster(np.full((2, 2, 1), 0.37))
        out = resize(r, 224, 224)
        assert out.width == 224 and out.height == 224
        assert np.allclose(out.pixels, 0.37, atol=1e-12)

    def test_2x_downscale_averages_blocks(self):
        # half-pixel centers: output (i, j) samples at (2j+0.5, 2i+0.5),
        # the exact center of its 2x2 source block, so bilinear weights
        # are 1/4 on each block pixel
        rng = np.random.default_rng(4)
        src = rng.random((4, 4, 1))
        out = resize(Raster(src), 2, 2)
        for i in range(2):
            for j in range(2):
                block = src[2 * i : 2 * i + 2, 2 * j : 2 * j + 2, 0]
                assert out.pixels[i, j, 0] == pytest.approx(block.mean(), abs=1e-12)

    def test_linear_gradient_resized_exactly(self):
        # bilinear interpolation reproduces affine-linear images exactly
        ys, xs = np.mgrid[0:8, 0:8]
        img = (0.1 + 0.05 * xs + 0.04 * ys)[:, :, None]
        out = resize(Raster(img), 15, 15)
        sx, sy = 8 / 15, 8 / 15
        gx = np.clip((np.arange(15) + 0.5) * sx - 0.5, 0, 7)
        gy = np.clip((np.arange(15) + 0.5) * sy - 0.5, 0, 7)
        expect = 0.1 + 0.05 * gx[None, :] + 0.04 * gy[:, None]
        assert np.allclose(out.pixels[:, :, 0], expect, atol=1e-12)

    def test_rejects_bad_dimensions(self):
        r = Raster(np.zeros((2, 2, 1)))
        for w, h in [(0, 2), (2, 0), (-1, 2)]:
            with pytest.raises(ValueError):
                resize(r, w, h)

    @given(st.integers(1, 12), st.integers(1, 12), st.integers(0, 2**32))
    @settings(max_examples=25, deadline=None)
    def test_range_preserved(self, w, h, seed):
        rng = np.random.default_rng(seed)
        out = resize(random_raster(rng, 6, 7, 1), w, h)
        assert out.pixels.min() >= 0.0 and out.pixels.max() <= 1.0


class TestBilinearSample:
    def test_integer_coordinates_exact(self):
        rng = np.random.default_rng(5)
        img = rng.random((4, 5, 2))
        xs, ys = np.meshgrid(np.arange(5.0), np.arange(4.0))
        out = bilinear_sample(img, xs, ys, fill=0.0)
        assert np.array_equal(out, img)

    def test_out_of_bounds_uses_fill(self):
        img = np.ones((2, 2, 1))
        out = bilinear_sample(img, np.array([-5.0]), np.array([0.0]), fill=0.0)
        assert out[0, 0] == 0.0


class TestSeedStream:
    def test_identical_path_identical_draws(self):
        a = derive_stream(42, [1, 2, 3]).uniforms(1000)
        b = derive_stream(42, [1, 2, 3]).uniforms(1000)
        assert np.array_equal(a, b)

    def test_sibling_paths_differ(self):
        a = derive_stream(42, [7]).uniforms(100)
        b = derive_stream(42, [8]).uniforms(100)
        assert not np.array_equal(a, b)

    def test_uniform_mean_sane(self):
        draws = derive_stream(0, [0]).uniforms(100_000)
        assert abs(draws.mean() - 0.5) < 0.01

    def test_child_equals_extended_path(self):
        a = derive_stream(9, [1]).child(2, 3).uniforms(10)
        b = derive_stream(9, [1, 2, 3]).uniforms(10)
        assert np.array_equal(a, b)

    def test_integer_half_open_range(self):
        s = derive_stream(5, [0])
        vals = {s.integer(0, 3) for _ in range(200)}
        assert vals == {0, 1, 2}

    def test_string_labels_are_stable(self):
        a = derive_stream(1, ["shuffle", 4]).uniform()
        b = derive_stream(1, ["shuffle", 4]).uniform()
        assert a == b
        assert derive_stream(1, ["init", 4]).uniform() != a

    def test_rejects_out_of_range_seed(self):
        with pytest.raises(ValueError):
            SeedStream(-1)
        with pytest.raises(ValueError):
            SeedStream(2**64)

    def test_derive_seed_stable_64bit(self):
        s1 = derive_seed(10, "budget", 3)
        s2 = derive_seed(10, "budget", 3)
        assert s1 == s2 and 0 <= s1 < 2**64
        assert derive_seed(10, "budget", 4) != s1

    @given(st.integers(0, 2**64 - 1), st.lists(st.integers(0, 2**64 - 1), max_size=4))
    @settings(max_examples=30, deadline=None)
    def test_replay_property(self, root, path):
        assert derive_stream(root, path).uniform() == derive_stream(root, path).uniform()
