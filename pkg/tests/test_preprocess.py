import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spectral_risk.errors import SchemaError
from spectral_risk.preprocess import (
    FeatureVector,
    MissingPolicy,
    NormClass,
    Polarity,
    RawFeatureTable,
    apply_missing_policy,
    build_feature_vectors,
    l2_normalize,
    min_max,
    orient,
)

values = st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=30)


@pytest.mark.parametrize("column, polarity, expected", [
    ([1, 2, 3], Polarity.HIGHER_IS_RISKIER, [1, 2, 3]),
    ([1, 2, 3], Polarity.LOWER_IS_RISKIER, [-1, -2, -3]),
    ([5], "higher", [5]),
    ([5], "lower", [-5]),
])
def test_orient(column, polarity, expected):
    np.testing.assert_array_equal(orient(column, polarity), expected)


def test_orient_then_scale_reverses_ranking():
    np.testing.assert_allclose(min_max(orient([1, 2, 3], "lower")), [1.0, 0.5, 0.0])


class TestMinMax:
    def test_affine(self):
        np.testing.assert_allclose(min_max([2, 4, 6]), [0, 0.5, 1])

    def test_already_scaled(self):
        np.testing.assert_array_equal(min_max([0, 1]), [0, 1])

    def test_constant_column_warns(self, caplog):
        with caplog.at_level(logging.WARNING):
            np.testing.assert_array_equal(min_max([7, 7, 7], name="pop"), [0, 0, 0])
        assert "pop is constant" in caplog.text

    def test_empty(self):
        with pytest.raises(ValueError):
            min_max([])

    @given(values)
    def test_range_and_order(self, col):
        out = min_max(col)
        assert np.all((out >= 0) & (out <= 1))
        arr = np.asarray(col)
        i, j = np.argsort(arr, kind="stable")[[0, -1]]
        assert out[i] <= out[j]
        assert np.all(np.diff(out[np.argsort(arr, kind="stable")]) >= 0)

    @given(st.lists(st.floats(0, 1, allow_nan=False), min_size=2, max_size=20, unique=True))
    def test_idempotent_on_unit_columns(self, col):
        col = np.array(col + [0.0, 1.0])
        col = np.unique(col)
        np.testing.assert_allclose(min_max(col), col, atol=1e-15)


class TestL2Normalize:
    def test_three_four_five(self):
        fv = l2_normalize([3, 4])
        np.testing.assert_allclose(fv.components, [0.6, 0.8])
        assert fv.norm_class is NormClass.UNIT

    def test_zero_vector(self):
        fv = l2_normalize([0, 0])
        np.testing.assert_array_equal(fv.components, [0, 0])
        assert fv.norm_class is NormClass.ZERO and fv.is_zero

    def test_axis(self):
        np.testing.assert_array_equal(l2_normalize([5, 0, 0]).components, [1, 0, 0])

    def test_negative_rejected(self):
        with pytest.raises(ValueError, match="negative"):
            l2_normalize([1, -0.1])

    def test_feature_vector_invariants(self):
        with pytest.raises(ValueError):
            FeatureVector("x", np.array([0.5, 0.5]), NormClass.UNIT)
        with pytest.raises(ValueError):
            FeatureVector("x", np.array([1.0, 0.0]), NormClass.ZERO)


class TestBuild:
    def test_hand_trace_single_column(self):
        table = RawFeatureTable(["a", "b"], {"x": [2.0, 6.0]})
        a, b = build_feature_vectors(table, ["x"])
        # min-max -> [0, 1]; normalize -> zero vector and [1]
        assert a.is_zero and a.components.tolist() == [0.0]
        assert b.norm_class is NormClass.UNIT and b.components.tolist() == [1.0]

    def test_all_columns_max_at_one_locality(self):
        table = RawFeatureTable(["a", "b", "c"], {"x": [1, 2, 9], "y": [5, 0, 7], "z": [0.1, 0.2, 0.3]})
        vecs = build_feature_vectors(table, ["x", "y", "z"])
        np.testing.assert_allclose(vecs[2].components, np.ones(3) / math.sqrt(3))

    def test_identical_localities(self):
        table = RawFeatureTable(["a", "b", "c"], {"x": [1, 1, 3], "y": [4, 4, 0]})
        a, b, _ = build_feature_vectors(table, ["x", "y"])
        np.testing.assert_array_equal(a.components, b.components)

    def test_column_order_and_ids(self):
        table = RawFeatureTable(["a", "b"], {"x": [0, 1], "y": [1, 0]})
        vecs = build_feature_vectors(table, ["y", "x"])
        assert [v.locality_id for v in vecs] == ["a", "b"]
        np.testing.assert_array_equal(vecs[0].components, [1, 0])

    def test_polarity_override(self):
        table = RawFeatureTable(["a", "b"], {"x": [0, 1]}, {"x": "lower"})
        a, b = build_feature_vectors(table, ["x"])
        assert a.components.tolist() == [1.0] and b.is_zero

    def test_unknown_column(self):
        table = RawFeatureTable(["a"], {"x": [1.0]})
        with pytest.raises(SchemaError, match="nope"):
            build_feature_vectors(table, ["x", "nope"])

    def test_table_rejects_nan_and_length_mismatch(self):
        with pytest.raises(SchemaError, match="missing"):
            RawFeatureTable(["a", "b"], {"x": [1.0, math.nan]})
        with pytest.raises(SchemaError):
            RawFeatureTable(["a", "b"], {"x": [1.0]})

    @settings(deadline=None)
    @given(st.integers(1, 30), st.integers(1, 4), st.integers(0, 2**32 - 1))
    def test_outputs_nonnegative_unit_or_zero(self, n, d, seed):
        rng = np.random.default_rng(seed)
        cols = {f"c{k}": rng.normal(size=n) * 100 for k in range(d)}
        pol = {"c0": "lower"}
        vecs = build_feature_vectors(RawFeatureTable([str(i) for i in range(n)], cols, pol), list(cols))
        for v in vecs:
            assert np.all(v.components >= 0)
            norm = np.linalg.norm(v.components)
            assert norm == 0.0 or abs(norm - 1) <= 1e-9

    @given(st.lists(st.floats(0, 100, allow_nan=False), min_size=2, max_size=15), st.data())
    def test_monotone_before_normalization(self, col, data):
        i = data.draw(st.integers(0, len(col) - 1))
        bump = data.draw(st.floats(0, 50, allow_nan=False))
        before = min_max(orient(col))[i]
        raised = list(col)
        raised[i] += bump
        # the raised value can only move up relative to the others
        assert min_max(orient(raised))[i] >= before - 1e-12


class TestMissing:
    def test_reject_drops_rows(self, caplog):
        with caplog.at_level(logging.WARNING):
            ids, cols = apply_missing_policy(["a", "b", "c"], {"x": [1, math.nan, 3], "y": [1, 2, 3]})
        assert ids == ["a", "c"]
        np.testing.assert_array_equal(cols["y"], [1, 3])
        assert "dropping locality b" in caplog.text

    def test_zero_imputes_column_minimum(self):
        ids, cols = apply_missing_policy(["a", "b", "c"], {"x": [4, math.nan, 3]}, MissingPolicy.ZERO)
        assert ids == ["a", "b", "c"]
        np.testing.assert_array_equal(cols["x"], [4, 3, 3])

    def test_nothing_missing(self):
        ids, cols = apply_missing_policy(["a"], {"x": [1.0]}, "zero")
        assert ids == ["a"]
