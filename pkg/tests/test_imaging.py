import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from overlayx import imaging
from overlayx.imaging import ImageError, PreprocessMethod

from oracles import gaussian_tap, otsu_exhaustive


def px(*rgb):
    return np.array([[rgb]], dtype=np.uint8)


def gray_images(max_side=64):
    shape = st.tuples(st.integers(1, max_side), st.integers(1, max_side))
    return shape.flatmap(lambda s: arrays(np.uint8, s))


def rgb_images(max_side=64):
    shape = st.tuples(st.integers(1, max_side), st.integers(1, max_side), st.just(3))
    return shape.flatmap(lambda s: arrays(np.uint8, s))


class TestGrayscale:
    def test_white_and_black(self):
        assert imaging.to_grayscale(px(255, 255, 255))[0, 0] == 255
        assert imaging.to_grayscale(px(0, 0, 0))[0, 0] == 0

    def test_luma_hand_value(self):
        # 0.299*100 + 0.587*150 + 0.114*200 = 29.9 + 88.05 + 22.8 = 140.75
        assert imaging.to_grayscale(px(100, 150, 200))[0, 0] == 141

    def test_matches_float_formula(self):
        for rgb in [(1, 2, 3), (17, 99, 201), (250, 3, 128)]:
            want = int(np.floor(0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2] + 0.5))
            assert imaging.to_grayscale(px(*rgb))[0, 0] == want

    def test_rejects_gray(self):
        with pytest.raises(ImageError):
            imaging.to_grayscale(np.zeros((4, 4), np.uint8))


class TestMaxRgb:
    def test_values(self):
        assert imaging.max_rgb_filter(px(10, 200, 30))[0, 0] == 200
        assert imaging.max_rgb_filter(px(7, 7, 7))[0, 0] == 7

    def test_constant_red(self):
        img = np.zeros((5, 6, 3), np.uint8)
        img[..., 0] = 255
        out = imaging.max_rgb_filter(img)
        assert out.shape == (5, 6) and np.all(out == 255)

    @given(rgb_images(16))
    def test_dominates_grayscale(self, img):
        assert np.all(imaging.max_rgb_filter(img) >= imaging.to_grayscale(img))


class TestOtsu:
    def test_bimodal_tie_picks_smallest(self):
        img = np.array([[0, 0, 0, 255, 255, 255]], np.uint8)
        assert otsu_exhaustive(img) == 0
        assert imaging.otsu_threshold(img) == 0

    def test_constant(self):
        assert imaging.otsu_threshold(np.full((3, 3), 42, np.uint8)) == 42

    def test_two_clusters(self):
        img = np.array([[10, 12, 11, 200, 205, 198]], np.uint8)
        want = otsu_exhaustive(img)
        assert 12 <= want <= 197
        assert imaging.otsu_threshold(img) == want == 12

    @settings(max_examples=60)
    @given(arrays(np.uint8, (16, 16)))
    def test_matches_exhaustive(self, img):
        assert imaging.otsu_threshold(img) == otsu_exhaustive(img)

    @settings(max_examples=60)
    @given(arrays(np.uint8, (4, 4), elements=st.sampled_from([0, 1, 2, 254, 255])))
    def test_matches_exhaustive_few_levels(self, img):
        # few distinct levels -> many exact ties
        assert imaging.otsu_threshold(img) == otsu_exhaustive(img)

    def test_rejects_rgb(self):
        with pytest.raises(ImageError):
            imaging.otsu_threshold(np.zeros((2, 2, 3), np.uint8))


class TestBinarize:
    def test_definition(self):
        out = imaging.binarize(np.array([[0, 128, 255]], np.uint8), 128)
        assert out.tolist() == [[0, 0, 255]]

    @given(gray_images(16))
    def test_t255_all_black(self, img):
        assert not imaging.binarize(img, 255).any()

    def test_bimodal_with_otsu(self):
        img = np.array([[0, 0, 0, 255, 255, 255]], np.uint8)
        out = imaging.binarize(img, imaging.otsu_threshold(img))
        assert np.array_equal(out, img)

    @given(gray_images(24), st.integers(0, 255))
    def test_output_binary(self, img, t):
        assert set(np.unique(imaging.binarize(img, t))) <= {0, 255}


class TestBlur:
    def test_kernel_normalised(self):
        k = imaging.gaussian_kernel_5x5()
        assert k.shape == (5, 5)
        assert k.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.allclose(k, k.T)

    def test_constant(self):
        img = np.full((7, 9), 77, np.uint8)
        assert np.all(imaging.gaussian_blur_5x5(img) == 77)

    def test_impulse_equals_kernel(self):
        img = np.zeros((9, 9), np.uint8)
        img[4, 4] = 255
        out = imaging.gaussian_blur_5x5(img)
        for dy in range(-2, 3):
            for dx in range(-2, 3):
                want = int(np.floor(255 * gaussian_tap(dy, dx) + 0.5))
                assert out[4 + dy, 4 + dx] == want
        assert out[4, 4] < 255
        assert out[4, 5] > 0 and out[3, 4] > 0
        # outside the 5x5 support nothing moves
        assert out[4, 7] == 0 and out[1, 1] == 0

    @settings(max_examples=40)
    @given(arrays(np.uint8, (40, 40), elements=st.integers(60, 200)))
    def test_mean_preserved(self, img):
        out = imaging.gaussian_blur_5x5(img)
        assert abs(float(out.mean()) - float(img.mean())) <= 1.0

    @given(gray_images())
    def test_shape(self, img):
        assert imaging.gaussian_blur_5x5(img).shape == img.shape


class TestOpening:
    def test_full_foreground(self):
        img = np.full((6, 6), 255, np.uint8)
        assert np.all(imaging.morphological_open(img) == 255)

    def test_isolated_pixel_removed(self):
        img = np.zeros((7, 7), np.uint8)
        img[3, 3] = 255
        assert not imaging.morphological_open(img).any()

    def test_square_preserved(self):
        img = np.zeros((9, 9), np.uint8)
        img[2:7, 2:7] = 255
        assert np.array_equal(imaging.morphological_open(img), img)

    def test_rejects_non_binary(self):
        with pytest.raises(ImageError):
            imaging.morphological_open(np.full((3, 3), 7, np.uint8))

    @given(gray_images(32))
    def test_shape_and_binary(self, img):
        b = imaging.binarize(img, 127)
        out = imaging.morphological_open(b)
        assert out.shape == b.shape
        assert set(np.unique(out)) <= {0, 255}
        # opening is anti-extensive
        assert np.all(out <= b)


class TestPreprocess:
    img = np.random.default_rng(3).integers(0, 256, (20, 30, 3), dtype=np.uint8)

    def test_none(self):
        assert np.array_equal(imaging.preprocess(self.img, "none"), imaging.to_grayscale(self.img))

    def test_otsu(self):
        gray = imaging.to_grayscale(self.img)
        want = imaging.binarize(gray, imaging.otsu_threshold(gray))
        assert np.array_equal(imaging.preprocess(self.img, PreprocessMethod.OTSU), want)

    def test_blur_otsu(self):
        blur = imaging.gaussian_blur_5x5(imaging.to_grayscale(self.img))
        want = imaging.binarize(blur, imaging.otsu_threshold(blur))
        assert np.array_equal(imaging.preprocess(self.img, PreprocessMethod.BLUR_OTSU), want)

    def test_blur_otsu_open(self):
        blur = imaging.gaussian_blur_5x5(imaging.to_grayscale(self.img))
        want = imaging.morphological_open(imaging.binarize(blur, imaging.otsu_threshold(blur)))
        assert np.array_equal(imaging.preprocess(self.img, PreprocessMethod.BLUR_OTSU_OPEN), want)

    def test_max_rgb(self):
        assert np.array_equal(imaging.preprocess(self.img, "max_rgb"), imaging.max_rgb_filter(self.img))

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            imaging.preprocess(self.img, "sharpen")

    @given(rgb_images(32), st.sampled_from(list(PreprocessMethod)))
    def test_one_channel_same_size(self, img, method):
        out = imaging.preprocess(img, method)
        assert out.shape == img.shape[:2]

    @given(rgb_images(32))
    def test_none_idempotent(self, img):
        once = imaging.preprocess(img, PreprocessMethod.NONE)
        assert np.array_equal(imaging.preprocess(once, PreprocessMethod.NONE), once)


class TestResize:
    def test_paper_size(self):
        img = np.random.default_rng(0).integers(0, 256, (64, 200, 3), dtype=np.uint8)
        assert imaging.resize_antialias(img, 100, 32).shape == (32, 100, 3)

    def test_identity(self):
        img = np.full((13, 17), 91, np.uint8)
        assert np.array_equal(imaging.resize_antialias(img, 17, 13), img)

    def test_identity_random(self):
        img = np.random.default_rng(1).integers(0, 256, (9, 11, 3), dtype=np.uint8)
        assert np.array_equal(imaging.resize_antialias(img, 11, 9), img)

    def test_checkerboard_area_average(self):
        img = np.array([[0, 255], [255, 0]], np.uint8)
        out = imaging.resize_antialias(img, 1, 1)
        assert abs(int(out[0, 0]) - 128) <= 1

    def test_integer_factor_is_block_mean(self):
        img = np.random.default_rng(2).integers(0, 256, (8, 12), dtype=np.uint8)
        out = imaging.resize_antialias(img, 4, 2)
        blocks = img.reshape(2, 4, 4, 3).astype(float).mean(axis=(1, 3))
        assert np.array_equal(out, np.floor(blocks + 0.5).astype(np.uint8))

    def test_zero_target(self):
        with pytest.raises(ImageError):
            imaging.resize_antialias(np.zeros((4, 4), np.uint8), 0, 3)

    @given(gray_images(), st.integers(1, 64), st.integers(1, 64))
    def test_dims(self, img, w, h):
        assert imaging.resize_antialias(img, w, h).shape == (h, w)

    @given(st.integers(0, 255), st.integers(1, 40), st.integers(1, 40), st.integers(1, 40), st.integers(1, 40))
    def test_constant_stays_constant(self, v, w, h, nw, nh):
        img = np.full((h, w), v, np.uint8)
        assert np.all(imaging.resize_antialias(img, nw, nh) == v)


class TestCodec:
    def test_png_roundtrip(self, tmp_path):
        img = np.random.default_rng(4).integers(0, 256, (10, 12, 3), dtype=np.uint8)
        imaging.save_image(tmp_path / "a.png", img)
        assert np.array_equal(imaging.load_image(tmp_path / "a.png"), img)

    def test_jpeg_deterministic(self):
        img = np.random.default_rng(5).integers(0, 256, (32, 100, 3), dtype=np.uint8)
        a = imaging.encode_image(img, "JPEG")
        assert a == imaging.encode_image(img, "JPEG")
        assert a[:2] == b"\xff\xd8"

    def test_crop_bounds(self):
        img = np.zeros((10, 10), np.uint8)
        assert imaging.crop(img, 2, 3, 4, 5).shape == (5, 4)
        with pytest.raises(ImageError):
            imaging.crop(img, 8, 0, 4, 2)
