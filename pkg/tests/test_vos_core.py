"""
vos_core 单元测试
颜色距离、约简排序、四种 VOS 算子，以及批量版本与标量版本的逐位一致性
"""

import math

import numpy as np
import pytest

from src.collection import best_direction, build_default_schemes
from src.vos_core import (
    MAX_DISTANCE,
    ColorPixel,
    OrderedWindow,
    WindowSample,
    aggregate_distance,
    apply_operator,
    distance,
    mean_vector_dispersion,
    min_vector_range,
    operator_array,
    reduced_order,
    reduced_order_array,
    vector_dispersion,
    vector_range,
)


def oracle_distance(a, b):
    return math.sqrt(sum((x - y) ** 2 for x, y in zip(a, b)))


def oracle_order(values):
    """暴力预言机: 聚合距离与排名。"""
    aggregates = [sum(oracle_distance(p, q) for q in values) for p in values]
    return aggregates


def random_windows(count, seed=2024):
    rng = np.random.default_rng(seed)
    return rng.integers(0, 256, size=(count, 9, 3)).astype(float)


def uniform_window(color=(10, 20, 30)):
    return WindowSample.from_values([color] * 9)


class TestColorPixel:
    """ColorPixel / WindowSample 校验"""

    def test_channels_converted_to_float(self):
        p = ColorPixel(1, 2, 3)
        assert p.as_tuple() == (1.0, 2.0, 3.0)

    @pytest.mark.parametrize("bad", [(-1, 0, 0), (0, 256, 0), (0, 0, float("nan"))])
    def test_out_of_range_rejected(self, bad):
        with pytest.raises(ValueError):
            ColorPixel(*bad)

    def test_window_needs_nine_pixels(self):
        with pytest.raises(ValueError):
            WindowSample.from_values([(0, 0, 0)] * 8)

    def test_window_array_roundtrip(self):
        values = random_windows(1)[0]
        w = WindowSample.from_array(values)
        assert np.array_equal(w.to_array(), values)


class TestDistance:
    """RGB 欧氏距离"""

    def test_black_white_is_max(self):
        assert distance(ColorPixel(0, 0, 0), ColorPixel(255, 255, 255)) == pytest.approx(MAX_DISTANCE)

    def test_red_blue(self):
        assert distance(ColorPixel(255, 0, 0), ColorPixel(0, 0, 255)) == pytest.approx(255 * math.sqrt(2))

    def test_symmetric_and_zero_on_self(self):
        a, b = ColorPixel(3, 4, 5), ColorPixel(200, 10, 77)
        assert distance(a, b) == distance(b, a)
        assert distance(a, a) == 0.0

    def test_channel_permutation_bit_identical(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            a, b = rng.uniform(0, 255, 3), rng.uniform(0, 255, 3)
            base = distance(ColorPixel(*a), ColorPixel(*b))
            for perm in ([1, 2, 0], [2, 0, 1], [0, 2, 1]):
                assert distance(ColorPixel(*a[perm]), ColorPixel(*b[perm])) == base


    def test_triangle_inequality(self):
        rng = np.random.default_rng(8)
        for a, b, c in rng.uniform(0, 255, size=(500, 3, 3)):
            pa, pb, pc = ColorPixel(*a), ColorPixel(*b), ColorPixel(*c)
            assert distance(pa, pc) <= distance(pa, pb) + distance(pb, pc) + 1e-9


class TestReducedOrder:
    """约简排序"""

    def test_uniform_window_identity_order(self):
        ow = reduced_order(uniform_window())
        assert ow.order == tuple(range(9))
        assert ow.aggregates == (0.0,) * 9

    def test_single_outlier_ranks_last(self):
        values = [(50, 50, 50)] * 9
        values[2] = (250, 0, 0)
        ow = reduced_order(WindowSample.from_values(values))
        assert ow.order[8] == 2
        assert ow.order[:8] == (0, 1, 3, 4, 5, 6, 7, 8)

    def test_matches_oracle(self):
        for values in random_windows(300):
            w = WindowSample.from_array(values)
            ow = reduced_order(w)
            expected = oracle_order([tuple(v) for v in values])
            # 聚合距离一致
            for rank, i in enumerate(ow.order):
                assert ow.aggregates[rank] == pytest.approx(expected[i], abs=1e-9)
                assert aggregate_distance(i, w) == ow.aggregates[rank]
            # 排名非递减，聚合距离相等时按索引升序
            for rank in range(8):
                i, j = ow.order[rank], ow.order[rank + 1]
                assert expected[i] <= expected[j] + 1e-9
                if ow.aggregates[rank] == ow.aggregates[rank + 1]:
                    assert i < j

    def test_ordered_window_validation(self):
        with pytest.raises(ValueError):
            OrderedWindow(order=(0,) * 9, aggregates=(0.0,) * 9)
        with pytest.raises(ValueError):
            OrderedWindow(order=tuple(range(9)), aggregates=(1.0, 0.0) + (2.0,) * 7)


class TestOperators:
    """VR / MVR / VD / MVD"""

    def test_uniform_window_all_zero(self):
        w = uniform_window()
        ow = reduced_order(w)
        for name in ("vr", "mvr", "vd", "mvd"):
            assert apply_operator(name, ow, w, 3) == 0.0

    def test_impulse_rejected_by_mvr(self):
        values = [(100, 100, 100)] * 9
        values[0] = (255, 255, 255)
        w = WindowSample.from_values(values)
        ow = reduced_order(w)
        assert min_vector_range(ow, w, 3) == 0.0
        assert min_vector_range(ow, w, 2) == 0.0
        assert min_vector_range(ow, w, 1) == pytest.approx(155 * math.sqrt(3))
        assert vector_range(ow, w) == pytest.approx(155 * math.sqrt(3))

    def test_mvr_k1_equals_vr(self):
        for values in random_windows(100, seed=5):
            w = WindowSample.from_array(values)
            ow = reduced_order(w)
            assert min_vector_range(ow, w, 1) == vector_range(ow, w)
            assert mean_vector_dispersion(ow, w, 1) == vector_dispersion(ow, w)

    def test_mvr_non_increasing_in_k(self):
        for values in random_windows(100, seed=6):
            w = WindowSample.from_array(values)
            ow = reduced_order(w)
            results = [min_vector_range(ow, w, k) for k in range(1, 9)]
            assert all(a >= b for a, b in zip(results, results[1:]))

    def test_matches_oracle(self):
        for values in random_windows(300, seed=11):
            w = WindowSample.from_array(values)
            ow = reduced_order(w)
            ranked = [tuple(values[i]) for i in ow.order]
            mean = tuple(values[:, c].sum() / 9 for c in range(3))
            assert vector_range(ow, w) == pytest.approx(oracle_distance(ranked[8], ranked[0]), abs=1e-9)
            assert vector_dispersion(ow, w) == pytest.approx(oracle_distance(ranked[8], mean), abs=1e-9)
            for k in (1, 2, 3):
                expected = min(oracle_distance(ranked[9 - j], ranked[0]) for j in range(1, k + 1))
                assert min_vector_range(ow, w, k) == pytest.approx(expected, abs=1e-9)
                expected = min(oracle_distance(ranked[9 - j], mean) for j in range(1, k + 1))
                assert mean_vector_dispersion(ow, w, k) == pytest.approx(expected, abs=1e-9)

    def test_constant_offset_invariance(self):
        """所有像素加同一常向量，四种算子与最佳方向不变"""
        schemes = build_default_schemes()
        rng = np.random.default_rng(13)
        for _ in range(200):
            values = rng.integers(0, 201, size=(9, 3)).astype(float)
            shifted_values = values + rng.integers(0, 56, size=3).astype(float)
            w, shifted = WindowSample.from_array(values), WindowSample.from_array(shifted_values)
            ow, ow_shifted = reduced_order(w), reduced_order(shifted)
            for name in ("vr", "mvr", "vd", "mvd"):
                assert apply_operator(name, ow_shifted, shifted, 3) == pytest.approx(
                    apply_operator(name, ow, w, 3), abs=1e-9
                )
            scheme_id, value = best_direction(w, schemes)
            shifted_id, shifted_value = best_direction(shifted, schemes)
            assert shifted_id == scheme_id
            assert shifted_value == pytest.approx(value, abs=1e-9)

    @pytest.mark.parametrize("k", [0, 9, -1])
    def test_k_out_of_range(self, k):
        w = uniform_window()
        ow = reduced_order(w)
        with pytest.raises(ValueError):
            min_vector_range(ow, w, k)
        with pytest.raises(ValueError):
            mean_vector_dispersion(ow, w, k)

    def test_unknown_operator(self):
        w = uniform_window()
        with pytest.raises(ValueError):
            apply_operator("median", reduced_order(w), w)


class TestArrayKernels:
    """批量版本与标量版本逐位一致"""

    def test_reduced_order_array_matches_scalar(self):
        values = random_windows(200, seed=3)
        stack = np.moveaxis(values, 1, 0)  # (9, N, 3)
        order, aggregates = reduced_order_array(stack)
        for n in range(values.shape[0]):
            ow = reduced_order(WindowSample.from_array(values[n]))
            assert tuple(order[:, n].tolist()) == ow.order
            assert tuple(aggregates[:, n].tolist()) == ow.aggregates

    @pytest.mark.parametrize("name", ["vr", "mvr", "vd", "mvd"])
    @pytest.mark.parametrize("k", [1, 3, 8])
    def test_operator_array_matches_scalar(self, name, k):
        values = random_windows(150, seed=k)
        stack = np.moveaxis(values, 1, 0)
        order, _ = reduced_order_array(stack)
        result = operator_array(name, stack, order, k)
        for n in range(values.shape[0]):
            w = WindowSample.from_array(values[n])
            assert result[n] == apply_operator(name, reduced_order(w), w, k)

    def test_operator_array_rejects_bad_k(self):
        stack = np.zeros((9, 4, 3))
        order, _ = reduced_order_array(stack)
        with pytest.raises(ValueError):
            operator_array("mvr", stack, order, 0)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
