"""
pipeline 单元测试
取窗与边界策略、响应图、非极大值抑制、阈值化
"""

import numpy as np
import pytest

from src.collection import SchemeError, best_direction, build_default_schemes
from src.pipeline import (
    ConfigError,
    EdgeMap,
    PipelineConfig,
    ResponseMap,
    RgbImage,
    ThresholdMode,
    compute_response_map,
    detect_edges,
    extract_window,
    non_max_suppression,
    resolve_threshold,
    run_detection,
    threshold,
)
from src.vos_core import apply_operator, reduced_order

RED = (255, 0, 0)
BLUE = (0, 0, 255)


def vertical_step(width=16, height=12, split=None):
    split = width // 2 if split is None else split
    pixels = np.zeros((height, width, 3))
    pixels[:, :split] = RED
    pixels[:, split:] = BLUE
    return RgbImage(pixels)


def random_image(width, height, seed):
    rng = np.random.default_rng(seed)
    return RgbImage(rng.integers(0, 256, size=(height, width, 3)).astype(float))


def make_response(values, scheme="N"):
    values = np.asarray(values, dtype=float)
    return ResponseMap(values, np.zeros(values.shape, dtype=int), (scheme,))


class TestDataTypes:
    """数据类型校验"""

    def test_image_shape_validation(self):
        with pytest.raises(ValueError):
            RgbImage(np.zeros((4, 4)))
        with pytest.raises(ValueError):
            RgbImage(np.zeros((0, 4, 3)))
        with pytest.raises(ValueError):
            RgbImage(np.full((2, 2, 3), 256.0))

    def test_image_is_read_only(self):
        img = RgbImage.uniform(3, 2, RED)
        assert (img.width, img.height) == (3, 2)
        with pytest.raises(ValueError):
            img.pixels[0, 0, 0] = 1.0

    def test_threshold_mode_validation(self):
        assert ThresholdMode.fixed(100).value == 100.0
        with pytest.raises(ConfigError):
            ThresholdMode.fixed(500)
        with pytest.raises(ConfigError):
            ThresholdMode.percentile(100)
        with pytest.raises(ConfigError):
            ThresholdMode("median")
        assert ThresholdMode.otsu().describe() == "otsu"
        assert ThresholdMode.fixed(12.5).describe() == "fixed:12.5"

    def test_pipeline_config_defaults(self):
        cfg = PipelineConfig()
        assert cfg.operator == "mvr"
        assert cfg.k == 3
        assert cfg.threshold_mode == ThresholdMode.otsu()
        assert cfg.nms is True
        assert cfg.plateau == "thin"
        assert cfg.border == "replicate"

    @pytest.mark.parametrize("kwargs", [
        {"operator": "sobel"},
        {"k": 0},
        {"k": 9},
        {"border": "wrap"},
        {"plateau": "none"},
        {"band_rows": 0},
    ])
    def test_pipeline_config_rejects(self, kwargs):
        with pytest.raises(ConfigError):
            PipelineConfig(**kwargs)

    def test_response_map_rejects_unknown_scheme(self):
        with pytest.raises(SchemeError):
            ResponseMap(np.zeros((2, 2)), np.zeros((2, 2), dtype=int), ("SW",))

    def test_response_map_rejects_negative(self):
        with pytest.raises(ValueError):
            make_response([[0.0, -1.0]])


class TestExtractWindow:
    """取窗与边界策略"""

    @pytest.fixture
    def image(self):
        pixels = np.zeros((3, 4, 3))
        for y in range(3):
            for x in range(4):
                pixels[y, x] = (x * 10, y * 10, 5)
        return RgbImage(pixels)

    def test_interior(self, image):
        w = extract_window(image, 1, 1)
        assert w[0].as_tuple() == (0.0, 0.0, 5.0)
        assert w[4].as_tuple() == (10.0, 10.0, 5.0)
        assert w[8].as_tuple() == (20.0, 20.0, 5.0)

    def test_replicate_corner(self, image):
        w = extract_window(image, 0, 0, "replicate")
        assert w[0].as_tuple() == (0.0, 0.0, 5.0)
        assert w[2].as_tuple() == (10.0, 0.0, 5.0)

    def test_reflect_corner(self, image):
        w = extract_window(image, 0, 0, "reflect")
        assert w[0].as_tuple() == (10.0, 10.0, 5.0)
        assert w[1].as_tuple() == (0.0, 10.0, 5.0)

    def test_zero_corner(self, image):
        w = extract_window(image, 3, 2, "zero")
        assert w[8].as_tuple() == (0.0, 0.0, 0.0)
        assert w[4].as_tuple() == (30.0, 20.0, 5.0)

    def test_single_pixel_image(self):
        img = RgbImage.uniform(1, 1, RED)
        for border in ("replicate", "reflect"):
            w = extract_window(img, 0, 0, border)
            assert all(p.as_tuple() == (255.0, 0.0, 0.0) for p in w.pixels)

    def test_out_of_image(self, image):
        with pytest.raises(ValueError):
            extract_window(image, 4, 0)


class TestResponseMap:
    """响应图"""

    @pytest.mark.parametrize("operator", ["vr", "mvr", "vd", "mvd"])
    def test_uniform_image_zero(self, operator):
        rm = compute_response_map(RgbImage.uniform(9, 7, (12, 200, 40)), PipelineConfig(operator=operator))
        assert rm.response.shape == (7, 9)
        assert not rm.response.any()

    @pytest.mark.parametrize("border", ["replicate", "reflect", "zero"])
    @pytest.mark.parametrize("operator", ["vr", "mvd"])
    def test_matches_scalar_per_pixel(self, border, operator):
        img = random_image(7, 5, seed=21)
        cfg = PipelineConfig(operator=operator, k=2, border=border, band_rows=2)
        schemes = build_default_schemes()
        rm = compute_response_map(img, cfg, schemes)
        for y in range(img.height):
            for x in range(img.width):
                w = extract_window(img, x, y, border)
                assert rm.response[y, x] == apply_operator(operator, reduced_order(w), w, 2)
                assert rm.direction_id(x, y) == best_direction(w, schemes)[0]

    def test_band_size_does_not_change_result(self):
        img = random_image(10, 9, seed=4)
        a = compute_response_map(img, PipelineConfig(band_rows=1))
        b = compute_response_map(img, PipelineConfig(band_rows=64))
        assert np.array_equal(a.response, b.response)
        assert np.array_equal(a.direction, b.direction)

    def test_step_two_equal_columns(self):
        rm = compute_response_map(vertical_step(), PipelineConfig())
        nonzero_columns = np.nonzero(rm.response.any(axis=0))[0]
        assert nonzero_columns.tolist() == [7, 8]
        assert np.array_equal(rm.response[:, 7], rm.response[:, 8])
        assert rm.direction_id(8, 5) == "N"

    def test_empty_scheme_list(self):
        with pytest.raises(SchemeError):
            compute_response_map(vertical_step(), PipelineConfig(), [])


class TestNonMaxSuppression:
    """非极大值抑制"""

    def test_keep_policy_keeps_plateau(self):
        rm = make_response([[0, 5, 5, 0]])
        out = non_max_suppression(rm, "keep")
        assert out.response.tolist() == [[0, 5, 5, 0]]

    def test_thin_policy_keeps_last_of_plateau(self):
        rm = make_response([[0, 5, 5, 0]])
        out = non_max_suppression(rm, "thin")
        assert out.response.tolist() == [[0, 0, 5, 0]]

    def test_non_maxima_zeroed(self):
        rm = make_response([[1, 3, 2, 4, 0]])
        out = non_max_suppression(rm)
        assert out.response.tolist() == [[0, 3, 0, 4, 0]]

    def test_axis_follows_direction(self):
        # E 方向比较上下邻居，横向的大值不构成抑制
        rm = make_response([[0, 0, 0], [1, 2, 9], [0, 0, 0]], scheme="E")
        out = non_max_suppression(rm)
        assert out.response[1].tolist() == [1, 2, 9]

    def test_missing_neighbors_ignored(self):
        rm = make_response([[7]])
        assert non_max_suppression(rm).response.tolist() == [[7]]

    @pytest.mark.parametrize("plateau", ["keep", "thin"])
    def test_idempotent_and_never_increases(self, plateau):
        img = random_image(12, 10, seed=8)
        rm = compute_response_map(img, PipelineConfig())
        once = non_max_suppression(rm, plateau)
        twice = non_max_suppression(once, plateau)
        assert np.array_equal(once.response, twice.response)
        assert np.all(once.response <= rm.response)
        assert np.array_equal(once.direction, rm.direction)

    def test_unknown_policy(self):
        with pytest.raises(ConfigError):
            non_max_suppression(make_response([[1]]), "wide")


class TestThreshold:
    """阈值化"""

    def test_fixed_strict(self):
        rm = make_response([[0, 10, 20]])
        assert threshold(rm, ThresholdMode.fixed(10)).edge.tolist() == [[False, False, True]]

    def test_monotonic(self):
        rm = compute_response_map(random_image(12, 12, seed=30), PipelineConfig())
        low = threshold(rm, ThresholdMode.fixed(50)).edge
        high = threshold(rm, ThresholdMode.fixed(150)).edge
        assert not np.any(high & ~low)

    def test_otsu_separates_two_levels(self):
        values = np.zeros((8, 8))
        values[:, 3] = 300.0
        rm = make_response(values)
        t = resolve_threshold(rm, ThresholdMode.otsu())
        assert 0.0 < t < 300.0
        assert np.array_equal(threshold(rm, ThresholdMode.otsu()).edge, values > 0)

    def test_otsu_matches_exhaustive_search(self):
        """Otsu 阈值等于 511 个内部桶边界上穷举类间方差的第一个最大值"""
        rng = np.random.default_rng(77)
        for _ in range(50):
            low, high = rng.uniform(5, 150), rng.uniform(200, 430)
            values = np.where(
                rng.random((16, 16)) < rng.uniform(0.1, 0.5),
                rng.normal(high, 8.0, (16, 16)),
                rng.normal(low, 8.0, (16, 16)),
            ).clip(0.0, 441.0)
            hist, edges = np.histogram(values, bins=512, range=(0.0, 441.673))
            centers = (edges[:-1] + edges[1:]) / 2.0
            variances = []
            for t in range(1, 512):
                w0, w1 = hist[:t].sum(), hist[t:].sum()
                if w0 == 0 or w1 == 0:
                    variances.append(0.0)
                    continue
                mu0 = (hist[:t] * centers[:t]).sum() / w0
                mu1 = (hist[t:] * centers[t:]).sum() / w1
                variances.append(w0 * w1 * (mu0 - mu1) ** 2)
            best = max(variances)
            first = next(i for i, v in enumerate(variances) if v >= best * (1 - 1e-12))
            assert resolve_threshold(make_response(values), ThresholdMode.otsu()) == edges[first + 1]

    def test_otsu_all_zero(self):
        rm = make_response(np.zeros((4, 4)))
        assert threshold(rm, ThresholdMode.otsu()).count() == 0

    def test_percentile_of_nonzero(self):
        rm = make_response([[0, 0, 10, 20, 30, 40]])
        assert resolve_threshold(rm, ThresholdMode.percentile(50)) == pytest.approx(25.0)
        assert resolve_threshold(make_response([[0, 0]]), ThresholdMode.percentile(50)) == 0.0


class TestDetection:
    """端到端检测"""

    def test_step_single_column(self):
        cfg = PipelineConfig(threshold_mode=ThresholdMode.fixed(100))
        em = detect_edges(vertical_step(), cfg)
        assert isinstance(em, EdgeMap)
        assert np.nonzero(em.edge.any(axis=0))[0].tolist() == [8]
        assert em.count() == 12

    def test_keep_policy_two_columns(self):
        cfg = PipelineConfig(threshold_mode=ThresholdMode.fixed(100), plateau="keep")
        em = detect_edges(vertical_step(), cfg)
        assert np.nonzero(em.edge.any(axis=0))[0].tolist() == [7, 8]

    def test_no_nms_keeps_thick_response(self):
        cfg = PipelineConfig(threshold_mode=ThresholdMode.fixed(100), nms=False)
        det = run_detection(vertical_step(), cfg)
        assert det.edges.count() == 24
        assert det.suppressed is det.response_map
        assert det.threshold_value == 100.0

    def test_channel_permutation_invariance(self):
        img = random_image(16, 16, seed=77)
        cfg = PipelineConfig(threshold_mode=ThresholdMode.fixed(60))
        base = detect_edges(img, cfg).edge
        for perm in ([1, 2, 0], [2, 1, 0]):
            permuted = RgbImage(img.pixels[:, :, perm])
            assert np.array_equal(detect_edges(permuted, cfg).edge, base)

    def test_threshold_echo_matches_edges(self):
        det = run_detection(random_image(16, 16, seed=5))
        assert np.array_equal(det.edges.edge, det.suppressed.response > det.threshold_value)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
