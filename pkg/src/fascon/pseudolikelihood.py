"""Pseudo-likelihood fitting, single-site Gibbs sampling and exact enumeration.

Visible variables take values on a finite lattice of levels. The energy of a
state is ``sum_j log(1 + k (w_j . d)^2)``. Changing one component ``d_i`` to
level ``l`` shifts each violation by ``w_ji (l - d_i)``, so every
one-dimensional conditional costs O(m a) once the base violations are known.
"""
import itertools
from dataclasses import dataclass, asdict

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp, softmax

from .errors import CapacityError, DivergenceError, InvalidInputError

LATTICE_TOL = 1e-12
MAX_STATES = 10**6


@dataclass(frozen=True)
class QuantizedSpace:
    levels: np.ndarray

    def __post_init__(self):
        lv = np.asarray(self.levels, dtype=np.float64).ravel()
        if lv.size < 2:
            raise InvalidInputError("need at least two levels")
        if np.any(np.diff(lv) <= 0):
            raise InvalidInputError("levels must be strictly increasing")
        object.__setattr__(self, "levels", lv)

    @classmethod
    def uniform(cls, a=16):
        return cls(np.linspace(0.0, 1.0, a))

    @property
    def a(self):
        return self.levels.size

    def snap(self, data):
        """Nearest-level projection of ``data`` and the largest snap distance."""
        data = np.asarray(data, dtype=np.float64)
        idx = self.index(data, strict=False)
        snapped = self.levels[idx]
        dist = float(np.max(np.abs(snapped - data))) if data.size else 0.0
        return snapped, dist

    def index(self, data, strict=True):
        """Level index of every entry; with ``strict`` off-lattice values raise."""
        data = np.asarray(data, dtype=np.float64)
        lv = self.levels
        pos = np.clip(np.searchsorted(lv, data), 1, lv.size - 1)
        left = lv[pos - 1]
        right = lv[pos]
        idx = np.where(np.abs(data - left) <= np.abs(right - data), pos - 1, pos)
        if strict:
            off = np.abs(lv[idx] - data) > LATTICE_TOL
            if np.any(off):
                where = np.argwhere(off)[0]
                raise InvalidInputError(
                    f"component {tuple(int(i) for i in where)} = {data[tuple(where)]!r} is not a lattice level"
                )
        return idx


@dataclass
class PlModel:
    weights: np.ndarray  # (m, n); m may be zero
    space: QuantizedSpace
    k: float = 100.0

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim == 1:
            w = w[None, :]
        self.weights = w
        if not self.k > 0:
            raise InvalidInputError("stiffness k must be positive")

    @property
    def m(self):
        return self.weights.shape[0]

    @property
    def n(self):
        return self.weights.shape[1]

    def copy(self):
        return PlModel(self.weights.copy(), self.space, self.k)


def empty_model(n, space, k=100.0):
    return PlModel(np.zeros((0, n)), space, k)


def _check_vector(model, d):
    d = np.asarray(d, dtype=np.float64)
    if d.shape[-1] != model.n:
        raise InvalidInputError(f"data dimension {d.shape[-1]} does not match model dimension {model.n}")
    model.space.index(d)
    return d


def case_energy(model, d):
    d = _check_vector(model, d)
    v = model.weights @ d
    return float(np.log1p(model.k * v * v).sum())


def _site_energies(model, d, v, i):
    # energies of the a states obtained by setting component i to each level
    lv = model.space.levels
    vt = v[:, None] + model.weights[:, i:i + 1] * (lv[None, :] - d[i])
    return np.log1p(model.k * vt * vt).sum(axis=0)


def conditional_distribution(model, d, i):
    """Probabilities of each level for component ``i`` given the others."""
    d = _check_vector(model, d)
    if not 0 <= i < model.n:
        raise InvalidInputError(f"site index {i} out of range for n={model.n}")
    v = model.weights @ d
    return softmax(-_site_energies(model, d, v, i))


def _all_site_terms(model, batch):
    """Shifted violations and log-conditionals for every case, site and level.

    Returns ``vt`` with shape (c, m, n, a) and ``logp`` with shape (c, n, a).
    """
    lv = model.space.levels
    v = batch @ model.weights.T  # (c, m)
    delta = lv[None, None, :] - batch[:, :, None]  # (c, n, a)
    vt = v[:, :, None, None] + model.weights[None, :, :, None] * delta[:, None, :, :]
    e = np.log1p(model.k * vt * vt).sum(axis=1)
    logp = -e - logsumexp(-e, axis=2, keepdims=True)
    return vt, logp, delta


def _chunks(count, per):
    for start in range(0, count, per):
        yield slice(start, min(count, start + per))


def _chunk_size(model):
    cells = max(1, model.m) * model.n * model.space.a
    return max(1, int(2_000_000 // cells))


def _check_batch(model, batch):
    batch = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    if batch.size == 0:
        return batch.reshape(0, model.n)
    if batch.shape[1] != model.n:
        raise InvalidInputError(f"batch dimension {batch.shape[1]} does not match model dimension {model.n}")
    model.space.index(batch)
    return batch


def log_pseudo_likelihood(model, batch):
    batch = _check_batch(model, batch)
    obs = model.space.index(batch)
    total = 0.0
    for sl in _chunks(batch.shape[0], _chunk_size(model)):
        _, logp, _ = _all_site_terms(model, batch[sl])
        total += np.take_along_axis(logp, obs[sl][:, :, None], axis=2).sum()
    return float(total)


def pl_gradient(model, batch):
    """Exact gradient of the log pseudo-likelihood w.r.t. the weights, shape (m, n).

    For expert j, case d and site i, with ``phi(v) = 2kv / (1 + kv^2)``::

        d log p(d_i | rest) / d w_j
            = -phi(v_j) d + sum_t p_t phi(v_jt) (d + (l_t - d_i) e_i)

    where ``v_jt`` is the violation with ``d_i`` set to level ``l_t``.
    """
    batch = _check_batch(model, batch)
    grad = np.zeros_like(model.weights)
    if model.m == 0:
        return grad
    k = model.k
    for sl in _chunks(batch.shape[0], _chunk_size(model)):
        d = batch[sl]
        vt, logp, delta = _all_site_terms(model, d)
        p = np.exp(logp)  # (c, n, a)
        phi = 2.0 * k * vt / (1.0 + k * vt * vt)  # (c, m, n, a)
        v = d @ model.weights.T
        phi0 = 2.0 * k * v / (1.0 + k * v * v)  # (c, m)
        expected = np.einsum("cjia,cia->cji", phi, p)
        coef = expected.sum(axis=2) - model.n * phi0  # (c, m)
        grad += coef.T @ d
        grad += np.einsum("cjia,cia->ji", phi, p * delta)
    return grad


def gibbs_sweep(model, d, rng, order=None):
    """Resample every site once from its conditional, in ``order`` (default 0..n-1)."""
    d = _check_vector(model, d).copy()
    lv = model.space.levels
    w = model.weights
    v = w @ d
    sites = range(model.n) if order is None else order
    for i in sites:
        p = softmax(-_site_energies(model, d, v, i))
        t = min(int(np.searchsorted(np.cumsum(p), rng.random(), side="right")), lv.size - 1)
        v += w[:, i] * (lv[t] - d[i])
        d[i] = lv[t]
    return d


def gibbs_chain(model, start, sweeps, rng, burn_in=0, random_scan=False, thin=1):
    """Run a single chain and return the visited states after burn-in, one per ``thin`` sweeps."""
    d = np.asarray(start, dtype=np.float64)
    out = []
    for s in range(burn_in + sweeps):
        order = rng.permutation(model.n) if random_scan else None
        d = gibbs_sweep(model, d, rng, order)
        if s >= burn_in and (s - burn_in) % thin == 0:
            out.append(d)
    return np.array(out).reshape(-1, model.n)


class JointTable:
    """Exact distribution over all ``a**n`` lattice states of a small model."""

    def __init__(self, model):
        states = model.space.a ** model.n
        if states > MAX_STATES:
            raise CapacityError(f"{states} states exceed the enumeration limit of {MAX_STATES}")
        self.model = model
        grid = itertools.product(model.space.levels, repeat=model.n)
        self.states = np.array(list(grid), dtype=np.float64).reshape(states, model.n)
        v = self.states @ model.weights.T
        self.energies = np.log1p(model.k * v * v).sum(axis=1)
        self.log_z = float(logsumexp(-self.energies))
        self.probs = np.exp(-self.energies - self.log_z)

    def state_index(self, batch):
        """Row index in :attr:`states` of each lattice vector in ``batch``."""
        idx = self.model.space.index(np.atleast_2d(batch))
        a = self.model.space.a
        weights = a ** np.arange(self.model.n - 1, -1, -1)
        return idx @ weights

    def log_prob(self, batch):
        return -self.energies[self.state_index(batch)] - self.log_z

    def conditional(self, d, i):
        """Conditional of site ``i`` read off the table by fixing the other sites."""
        idx = self.model.space.index(d)
        a = self.model.space.a
        stride = a ** (self.model.n - 1 - i)
        base = int(idx @ (a ** np.arange(self.model.n - 1, -1, -1))) - idx[i] * stride
        rows = base + stride * np.arange(a)
        p = self.probs[rows]
        return p / p.sum()

    def log_likelihood(self, batch):
        return float(self.log_prob(batch).sum())

    def log_likelihood_gradient(self, batch):
        """Exact gradient of the summed log-likelihood w.r.t. the weights.

        Data term minus ``count`` times the model expectation of
        ``d log f_j / d w_j = -phi(v_j) d``.
        """
        batch = np.atleast_2d(np.asarray(batch, dtype=np.float64))
        k = self.model.k
        w = self.model.weights

        def dlogf(x):
            v = x @ w.T
            return -(2.0 * k * v / (1.0 + k * v * v))

        data_term = dlogf(batch).T @ batch
        model_term = (dlogf(self.states) * self.probs[:, None]).T @ self.states
        return data_term - batch.shape[0] * model_term

    def pseudo_log_likelihood(self, batch):
        batch = np.atleast_2d(batch)
        total = 0.0
        for d in batch:
            idx = self.model.space.index(d)
            for i in range(self.model.n):
                total += np.log(self.conditional(d, i)[idx[i]])
        return float(total)


def brute_force_joint(model):
    return JointTable(model)


def total_variation(p, q):
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


@dataclass
class PlTrainConfig:
    learning_rate: float = 1e-3
    momentum: float = 0.9
    iterations: int = 200
    line_search: bool = True
    method: str = "momentum"  # or "cg"
    experts: int = 16
    levels: int = 16
    k: float = 100.0
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise InvalidInputError("learning_rate must be non-negative")
        if not 0 <= self.momentum < 1:
            raise InvalidInputError("momentum must lie in [0, 1)")
        if self.method not in ("momentum", "cg"):
            raise InvalidInputError(f"unknown optimizer {self.method!r}")
        if self.iterations < 0 or self.experts < 1 or self.levels < 2:
            raise InvalidInputError("iterations >= 0, experts >= 1 and levels >= 2 required")
        if not self.k > 0:
            raise InvalidInputError("k must be positive")

    def to_dict(self):
        return asdict(self)


def init_pl(n, m, space, k=100.0, rng=None, scale=None):
    scale = 1.0 / np.sqrt(n) if scale is None else scale
    return PlModel(rng.normal(0.0, scale, size=(m, n)), space, k)


def train_pl(model, batch, config, callback=None):
    """Maximise the log pseudo-likelihood of a lattice-valued batch.

    The default optimizer is gradient ascent with momentum. With
    ``line_search`` a step that lowers the objective is halved (up to 30
    times) and momentum is reset; if no halving helps, the iteration keeps
    the current weights, so the trace never decreases. ``method="cg"``
    hands the problem to scipy's nonlinear conjugate gradient instead.

    Returns the trained model and the objective after each iteration.
    """
    batch = _check_batch(model, batch)
    model = model.copy()
    shape = model.weights.shape

    def objective(w):
        return log_pseudo_likelihood(PlModel(w.reshape(shape), model.space, model.k), batch)

    def gradient(w):
        return pl_gradient(PlModel(w.reshape(shape), model.space, model.k), batch)

    if config.method == "cg":
        trace = []

        def record(wk):
            trace.append(objective(wk))
            if callback is not None:
                callback(len(trace) - 1, trace[-1])

        res = minimize(
            lambda w: -objective(w), model.weights.ravel(), jac=lambda w: -gradient(w).ravel(),
            method="CG", callback=record, options={"maxiter": config.iterations},
        )
        if not np.isfinite(res.fun):
            raise DivergenceError(len(trace), "objective")
        return PlModel(res.x.reshape(shape), model.space, model.k), np.array(trace)

    w = model.weights
    f = objective(w)
    lr = config.learning_rate
    step = np.zeros_like(w)
    trace = np.empty(config.iterations)
    for t in range(config.iterations):
        g = gradient(w)
        step = config.momentum * step + lr * g
        if config.line_search:
            scale = 1.0
            for attempt in range(31):
                cand = w + scale * step
                fc = objective(cand)
                if np.isfinite(fc) and fc >= f:
                    break
                if attempt == 0:
                    step = lr * g  # drop momentum before shrinking
                else:
                    scale *= 0.5
            else:
                cand, fc = w, f
                step = np.zeros_like(w)
            step = scale * step
        else:
            cand = w + step
            fc = objective(cand)
        if not np.isfinite(fc):
            raise DivergenceError(t, "objective")
        w, f = cand, fc
        trace[t] = f
        if callback is not None:
            callback(t, f)
    return PlModel(w, model.space, model.k), trace
