"""Seedable random streams, pseudo-inverse and diagonal Gaussian sampling.

All arrays are float64. Random streams are derived from ``(seed, stream)``
pairs through :class:`numpy.random.SeedSequence`, so independent workers can
be given distinct stream ids under one root seed.
"""
import numpy as np

from .errors import InvalidInputError

DEFAULT_PINV_TOL = 1e-12


def make_rng(seed, stream=0):
    """Return a Generator reproducibly derived from ``(seed, stream)``."""
    seq = np.random.SeedSequence(int(seed), spawn_key=(int(stream),))
    return np.random.Generator(np.random.PCG64(seq))


def as_finite(a, name="input"):
    a = np.asarray(a, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return a


def pseudo_inverse(a, tol=DEFAULT_PINV_TOL):
    """Moore-Penrose pseudo-inverse via the thin SVD.

    Parameters
    ----------
    a : array_like, shape (r, c)
    tol : float
        Singular values below ``tol * sigma_max`` are treated as zero.

    Returns
    -------
    ndarray, shape (c, r)
    """
    a = as_finite(a, "matrix")
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2 or a.shape[0] == 0 or a.shape[1] == 0:
        raise InvalidInputError(f"pseudo_inverse needs a non-empty 2-D matrix, got shape {a.shape}")
    if not tol > 0:
        raise InvalidInputError("tol must be positive")
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((a.shape[1], a.shape[0]))
    keep = s > tol * s[0]
    inv_s = np.zeros_like(s)
    inv_s[keep] = 1.0 / s[keep]
    return (vt.T * inv_s) @ u.T


def moore_penrose_residuals(a, a_pinv):
    """Max-norm residuals of the four Moore-Penrose conditions."""
    a = np.asarray(a, dtype=np.float64)
    g = np.asarray(a_pinv, dtype=np.float64)
    ag = a @ g
    ga = g @ a
    return (
        np.max(np.abs(ag @ a - a)),
        np.max(np.abs(ga @ g - g)),
        np.max(np.abs(ag - ag.T)),
        np.max(np.abs(ga - ga.T)),
    )


def sample_gaussian_diag(variances, rng, size=None):
    """Independent zero-mean normal draws with per-component variances.

    ``size`` prepends leading sample dimensions. A zero variance yields
    exactly zero.
    """
    var = as_finite(variances, "variances")
    if np.any(var < 0):
        raise InvalidInputError("variances must be non-negative")
    shape = var.shape if size is None else tuple(np.atleast_1d(size)) + var.shape
    z = rng.standard_normal(shape)
    return z * np.sqrt(var)


def central_difference(f, x, h=1e-6):
    """Central finite-difference gradient of a scalar function of a flat vector."""
    x = np.array(x, dtype=np.float64, copy=True)
    g = np.empty_like(x)
    for i in range(x.size):
        old = x[i]
        x[i] = old + h
        up = f(x)
        x[i] = old - h
        down = f(x)
        x[i] = old
        g[i] = (up - down) / (2.0 * h)
    return g
