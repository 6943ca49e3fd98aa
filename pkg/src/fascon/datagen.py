"""Synthetic edge images, anti-correlated pixel noise and patch extraction.

Images are 2-D arrays indexed ``[row, col]``; batches hold them flattened
row-major, one case per row.
"""
from dataclasses import dataclass, asdict

import numpy as np

from .errors import InvalidInputError


@dataclass(frozen=True)
class EdgeImageParams:
    width: int = 16
    height: int = 16
    low_range: tuple = (0.0, 0.3)
    high_range: tuple = (0.7, 1.0)
    blend_slope: float = 2.0
    noise_self: float = 0.4
    noise_neighbor: float = 0.1
    circular_mask: bool = False

    def __post_init__(self):
        lo0, lo1 = self.low_range
        hi0, hi1 = self.high_range
        if self.width < 2 or self.height < 2:
            raise InvalidInputError("image width and height must be at least 2")
        if not (0.0 <= lo0 <= lo1 <= hi0 <= hi1 <= 1.0):
            raise InvalidInputError(
                f"need 0 <= low range <= high range <= 1, got {self.low_range}, {self.high_range}"
            )
        if self.noise_self < 0 or self.noise_neighbor < 0:
            raise InvalidInputError("noise amplitudes must be non-negative")

    @property
    def n(self):
        return self.width * self.height

    def to_dict(self):
        d = asdict(self)
        d["low_range"] = list(self.low_range)
        d["high_range"] = list(self.high_range)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["low_range"] = tuple(d.get("low_range", cls.low_range))
        d["high_range"] = tuple(d.get("high_range", cls.high_range))
        return cls(**d)


@dataclass(frozen=True)
class EdgeMeta:
    angle: float
    offset: float
    low: float
    high: float


def _pixel_grid(width, height):
    # pixel-centre coordinates relative to the image centre
    x = np.arange(width) - (width - 1) / 2.0
    y = np.arange(height) - (height - 1) / 2.0
    return np.meshgrid(x, y)


def signed_distance(width, height, angle, offset):
    """Signed distance (pixels) of every pixel centre to the edge line.

    The line has unit normal ``(cos angle, sin angle)`` in (x=col, y=row)
    coordinates and sits ``offset`` from the image centre along it.
    Broadcasts over leading dimensions of ``angle``/``offset``.
    """
    xx, yy = _pixel_grid(width, height)
    angle = np.asarray(angle, dtype=np.float64)[..., None, None]
    offset = np.asarray(offset, dtype=np.float64)[..., None, None]
    return xx * np.cos(angle) + yy * np.sin(angle) - offset


def blend(dist, low, high, slope=2.0):
    low = np.asarray(low, dtype=np.float64)
    high = np.asarray(high, dtype=np.float64)
    if dist.ndim > low.ndim:
        low = low.reshape(low.shape + (1,) * (dist.ndim - low.ndim))
        high = high.reshape(high.shape + (1,) * (dist.ndim - high.ndim))
    # logistic written via tanh to stay finite for large |dist|
    sig = 0.5 * (1.0 + np.tanh(0.5 * slope * dist))
    return low + (high - low) * sig


def circle_mask(width, height):
    """Boolean mask of pixels whose centres lie inside the inscribed circle."""
    xx, yy = _pixel_grid(width, height)
    radius = min(width, height) / 2.0
    return xx**2 + yy**2 <= radius**2


def add_anticorrelated_noise(image, width, height, self_amp=0.4, neighbor_amp=0.1, rng=None):
    """Add ``self_amp*x`` at each pixel and ``-neighbor_amp*x`` at its 4 neighbours.

    ``x`` is one standard normal draw per pixel. Neighbours outside the image
    are skipped. ``image`` may be a flat vector of ``width*height`` values or
    a batch of them (one per row); the returned array has the same shape.
    """
    if self_amp < 0 or neighbor_amp < 0:
        raise InvalidInputError("noise amplitudes must be non-negative")
    img = np.asarray(image, dtype=np.float64)
    flat_shape = img.shape
    img = img.reshape(-1, height, width).copy()
    if self_amp == 0 and neighbor_amp == 0:
        return img.reshape(flat_shape)
    x = rng.standard_normal(img.shape)
    img += self_amp * x
    if neighbor_amp:
        img[:, 1:, :] -= neighbor_amp * x[:, :-1, :]
        img[:, :-1, :] -= neighbor_amp * x[:, 1:, :]
        img[:, :, 1:] -= neighbor_amp * x[:, :, :-1]
        img[:, :, :-1] -= neighbor_amp * x[:, :, 1:]
    return img.reshape(flat_shape)


def _edge_draws(params, rng, count):
    angle = rng.uniform(0.0, np.pi, size=count)
    # offset range over which the line crosses the image's pixel extent
    reach = 0.5 * params.width * np.abs(np.cos(angle)) + 0.5 * params.height * np.abs(np.sin(angle))
    offset = rng.uniform(-1.0, 1.0, size=count) * reach
    low = rng.uniform(*params.low_range, size=count)
    high = rng.uniform(*params.high_range, size=count)
    return angle, offset, low, high


def clean_edge_images(params, angle, offset, low, high):
    """Pre-noise edge images, shape ``(count, n)``."""
    dist = signed_distance(params.width, params.height, angle, offset)
    img = blend(dist, low, high, params.blend_slope)
    return img.reshape(-1, params.n)


def _finish(params, img, low, high, rng):
    img = add_anticorrelated_noise(
        img, params.width, params.height, params.noise_self, params.noise_neighbor, rng
    )
    if params.circular_mask:
        outside = ~circle_mask(params.width, params.height).ravel()
        img[:, outside] = (0.5 * (np.asarray(low) + np.asarray(high)))[:, None]
    return img


def generate_edge_image(params, rng):
    """One noisy edge image (flat vector of n values) and its metadata."""
    angle, offset, low, high = _edge_draws(params, rng, 1)
    img = clean_edge_images(params, angle, offset, low, high)
    img = _finish(params, img, low, high, rng)
    meta = EdgeMeta(float(angle[0]), float(offset[0]), float(low[0]), float(high[0]))
    return img[0], meta


def generate_edge_batch(params, count, rng):
    """``count`` independent noisy edge images as a ``(count, n)`` array."""
    angle, offset, low, high = _edge_draws(params, rng, count)
    img = clean_edge_images(params, angle, offset, low, high)
    return _finish(params, img, low, high, rng)


def extract_patches(images, patch_side, count, rng, noise=None):
    """Random square patches from random source images, flattened row-major.

    Parameters
    ----------
    images : sequence of 2-D arrays with values in [0, 1]
    patch_side : int
    count : int
    rng : numpy Generator
    noise : (self_amp, neighbor_amp) or None
        Anti-correlated noise applied to every patch when given.
    """
    if not images:
        raise InvalidInputError("no source images")
    images = [np.asarray(im, dtype=np.float64) for im in images]
    for i, im in enumerate(images):
        if im.ndim != 2 or im.shape[0] < patch_side or im.shape[1] < patch_side:
            raise InvalidInputError(f"image {i} with shape {im.shape} is smaller than patch side {patch_side}")
    out = np.empty((count, patch_side * patch_side))
    which = rng.integers(len(images), size=count)
    for c in range(count):
        im = images[which[c]]
        r = rng.integers(im.shape[0] - patch_side + 1)
        q = rng.integers(im.shape[1] - patch_side + 1)
        out[c] = im[r:r + patch_side, q:q + patch_side].ravel()
    if noise is not None and count:
        out = add_anticorrelated_noise(out, patch_side, patch_side, noise[0], noise[1], rng)
    return out


def batch_source(data):
    """Wrap a fixed data array as a minibatch source.

    The returned callable draws ``size`` distinct rows at random, or all rows
    when the data set is smaller than ``size``.
    """
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))

    def draw(rng, size):
        if size >= data.shape[0]:
            return data
        return data[rng.choice(data.shape[0], size=size, replace=False)]

    return draw
