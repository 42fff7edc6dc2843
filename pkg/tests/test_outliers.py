# SPDX-License-Identifier: Apache-2.0

import numpy as np
import pytest

from bpdq.errors import NumericalError, ShapeError
from bpdq.outliers import (
    channel_magnitudes,
    lower_median,
    outlier_stats,
    outlier_stats_many,
    relative_change,
)
from bpdq.tensorio import synth_layer


def test_equal_channels():
    assert outlier_stats(np.ones((6, 4))) == (1.0, 0)


def test_single_outlier_channel():
    x = np.ones((21, 5))
    x[3] *= 100.0
    s = outlier_stats(x)
    assert s.diagr == pytest.approx(100.0)
    assert s.cnt10 == 1


def test_magnitudes_are_mean_absolute():
    x = np.array([[1.0, -3.0], [0.0, 2.0]])
    np.testing.assert_array_equal(channel_magnitudes(x), [2.0, 1.0])


def test_lower_median():
    assert lower_median([4.0, 1.0, 3.0, 2.0]) == 2.0
    assert lower_median([3.0, 1.0, 2.0]) == 2.0


def test_all_zero():
    with pytest.raises(NumericalError):
        outlier_stats(np.zeros((4, 3)))


def test_no_samples():
    with pytest.raises(ShapeError):
        outlier_stats(np.zeros((4, 0)))


def test_heavy_tail_raises_ratio():
    _, flat = synth_layer(0, 4, 128, 256, tail_index=0.0)
    _, heavy = synth_layer(0, 4, 128, 256, tail_index=1.0)
    assert outlier_stats(heavy).diagr > outlier_stats(flat).diagr


def test_many_aggregates():
    a = np.ones((21, 5))
    b = np.ones((21, 5))
    b[0] *= 50.0
    b[1] *= 20.0
    s = outlier_stats_many([a, b])
    assert s.cnt10 == 2
    assert s.diagr == pytest.approx(np.percentile([1.0, 50.0], 95))
    with pytest.raises(ShapeError):
        outlier_stats_many([])


def test_relative_change():
    assert relative_change(10.0, 5.0) == pytest.approx(-50.0)
    assert relative_change(0, 3) == 0.0
