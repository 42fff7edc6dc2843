# activation outlier statistics: max-to-median channel ratio and 10x-median channel count

# SPDX-License-Identifier: Apache-2.0

from collections import namedtuple

import numpy as np

from .errors import NumericalError, ShapeError
from .tensorio import as_tensor2d

OutlierStats = namedtuple("OutlierStats", ["diagr", "cnt10"])


def channel_magnitudes(x):
    x = as_tensor2d(x, "activations")
    if x.shape[1] < 1:
        raise ShapeError("activations need at least one sample column")
    return np.mean(np.abs(x), axis=1)


def lower_median(a):
    s = np.sort(np.asarray(a, dtype=np.float64))
    return float(s[(s.size - 1) // 2])


def outlier_stats(x):
    m = channel_magnitudes(x)
    med = lower_median(m)
    if med == 0:
        raise NumericalError("median channel magnitude is zero")
    return OutlierStats(float(m.max() / med), int(np.sum(m > 10 * med)))


def outlier_stats_many(xs):
    """DiagR at the 95th percentile across matrices, Cnt10 summed."""
    stats = [outlier_stats(x) for x in xs]
    if not stats:
        raise ShapeError("no activation matrices given")
    diagr = float(np.percentile([s.diagr for s in stats], 95))
    return OutlierStats(diagr, int(sum(s.cnt10 for s in stats)))


def relative_change(before, after):
    return 100.0 * (after - before) / before if before else 0.0
