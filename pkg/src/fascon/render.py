"""Filter mosaics and pooled filter-output histograms."""
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

MID_GRAY = 0.5


def model_filters(model):
    """Filters of any model type as an (m, n) array, one filter per row."""
    from .cd import MixtureExpertSet

    if isinstance(model, MixtureExpertSet):
        return model.lam.T
    return np.atleast_2d(model.weights)


def filter_tile(w, height, width):
    """Map one filter to gray levels: 0 is mid-gray, +-max|w| is white/black."""
    w = np.asarray(w, dtype=np.float64)
    if w.size != height * width:
        raise InvalidInputError(f"filter of length {w.size} does not fit a {height}x{width} patch")
    peak = np.max(np.abs(w))
    if peak == 0:
        return np.full((height, width), MID_GRAY)
    return (MID_GRAY + MID_GRAY * w / peak).reshape(height, width)


def render_filter_mosaic(filters, height, width, cols=None):
    """Tile filters row by row with a one-pixel mid-gray separator between tiles."""
    filters = np.atleast_2d(np.asarray(filters, dtype=np.float64))
    count = filters.shape[0]
    if filters.shape[1] != height * width:
        raise InvalidInputError(f"filters have length {filters.shape[1]}, patch is {height}x{width}")
    if cols is None:
        cols = max(1, math.ceil(math.sqrt(count)))
    rows = max(1, math.ceil(count / cols))
    out = np.full((rows * height + rows - 1, cols * width + cols - 1), MID_GRAY)
    for idx in range(count):
        r, c = divmod(idx, cols)
        top = r * (height + 1)
        left = c * (width + 1)
        out[top:top + height, left:left + width] = filter_tile(filters[idx], height, width)
    return out


@dataclass
class Histogram:
    edges: np.ndarray
    counts: np.ndarray

    def rows(self):
        return [(float(lo), float(hi), int(c)) for lo, hi, c in zip(self.edges[:-1], self.edges[1:], self.counts)]


def filter_outputs(model, batch):
    filters = model_filters(model)
    batch = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    if batch.shape[1] != filters.shape[1]:
        raise InvalidInputError(f"batch dimension {batch.shape[1]} does not match filter length {filters.shape[1]}")
    return batch @ filters.T


def violation_histogram(model, batch, bins=64):
    """Histogram of all filter outputs pooled over experts and cases.

    Bins are uniform on ``[-r, r]`` with ``r`` the largest absolute output
    (1 when every output is zero).
    """
    values = filter_outputs(model, batch).ravel()
    r = float(np.max(np.abs(values))) if values.size else 0.0
    if r == 0:
        r = 1.0
    edges = np.linspace(-r, r, bins + 1)
    counts, _ = np.histogram(values, bins=edges)
    return Histogram(edges, counts)
