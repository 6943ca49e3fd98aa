"""Student-t linear constraints fitted by reweighted gradient descent.

Each expert is a weight vector ``w`` whose output ``v = w . d`` should be
close to zero for most data vectors. The cost of a violation is
``log(1 + k v^2)``. Training alternates a momentum gradient step on the summed
cost with rescaling every ``w`` to sum to one, which rules out the trivial
all-zero solution. The gradient is projected onto the sum-one plane before
the step: with positive-valued images the raw gradient mostly shrinks the
weight sum, and undoing that by division inflates the weights without bound.
"""
from dataclasses import dataclass, asdict

import numpy as np

from .errors import DegenerateConstraintError, DivergenceError, InvalidInputError
from .datagen import batch_source
from .numerics import make_rng

RESCALE_MIN_SUM = 1e-8


@dataclass
class StudentTExpertSet:
    weights: np.ndarray  # (m, n)
    k: float = 100.0

    def __post_init__(self):
        self.weights = np.atleast_2d(np.asarray(self.weights, dtype=np.float64))
        if not self.k > 0:
            raise InvalidInputError("stiffness k must be positive")

    @property
    def m(self):
        return self.weights.shape[0]

    @property
    def n(self):
        return self.weights.shape[1]

    def copy(self):
        return StudentTExpertSet(self.weights.copy(), self.k)


@dataclass
class SimpleTrainConfig:
    learning_rate: float = 1e-7
    momentum: float = 0.98
    batch_size: int = 1000
    updates: int = 4000
    reweight_by_energy: bool = True
    experts: int = 25
    k: float = 100.0
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise InvalidInputError("learning_rate must be non-negative")
        if not 0 <= self.momentum < 1:
            raise InvalidInputError("momentum must lie in [0, 1)")
        if self.batch_size < 1 or self.updates < 0 or self.experts < 1:
            raise InvalidInputError("batch_size and experts must be positive, updates non-negative")
        if not self.k > 0:
            raise InvalidInputError("k must be positive")

    def to_dict(self):
        return asdict(self)


def violation(w, d):
    w = np.asarray(w, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    if w.shape[-1] != d.shape[-1]:
        raise InvalidInputError(f"length mismatch: weights {w.shape[-1]}, data {d.shape[-1]}")
    return d @ w.T


def violation_energy(v, k):
    return np.log1p(k * np.square(v))


def _check_batch(model, batch):
    batch = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    if batch.size == 0:
        return batch.reshape(0, model.n)
    if batch.shape[1] != model.n:
        raise InvalidInputError(f"batch dimension {batch.shape[1]} does not match model dimension {model.n}")
    return batch


def total_energy(model, batch):
    """Per-case energies ``E_c`` (shape ``(count,)``) and their sum."""
    batch = _check_batch(model, batch)
    v = batch @ model.weights.T
    per_case = violation_energy(v, model.k).sum(axis=1)
    return per_case, float(per_case.sum())


def energy_case_weights(per_case):
    """Case weights proportional to each case's energy, mean one."""
    mean = per_case.mean()
    if mean <= 0:
        return np.ones_like(per_case)
    return per_case / mean


def energy_gradient(model, batch, case_weights=None):
    """Gradient of the (case-weighted) summed energy w.r.t. the weights, shape (m, n)."""
    batch = _check_batch(model, batch)
    if case_weights is None:
        case_weights = np.ones(batch.shape[0])
    case_weights = np.asarray(case_weights, dtype=np.float64)
    if case_weights.shape != (batch.shape[0],):
        raise InvalidInputError("case_weights must have one entry per case")
    if np.any(case_weights < 0):
        raise InvalidInputError("case_weights must be non-negative")
    v = batch @ model.weights.T
    k = model.k
    dv = case_weights[:, None] * 2.0 * k * v / (1.0 + k * v * v)
    return dv.T @ batch


def rescale_weights(model):
    """Return a copy of ``model`` with every weight vector divided by its sum."""
    sums = model.weights.sum(axis=1)
    for j, s in enumerate(sums):
        if not abs(s) > RESCALE_MIN_SUM:
            raise DegenerateConstraintError(j, float(s))
    return StudentTExpertSet(model.weights / sums[:, None], model.k)


def init_student_t(n, m, k=100.0, rng=None, scale=0.1):
    """Random N(0, scale^2) weights, rescaled to unit sum."""
    w = rng.normal(0.0, scale, size=(m, n))
    return rescale_weights(StudentTExpertSet(w, k))


def train_simple(model, source, config, rng=None, callback=None):
    """Fit the experts by momentum gradient descent with unit-sum rescaling.

    Parameters
    ----------
    model : StudentTExpertSet
        Starting weights; rescaled before the first step.
    source : callable ``(rng, size) -> (size, n) array`` or an array of cases
    config : SimpleTrainConfig
    rng : numpy Generator, optional
        Drives minibatch selection. Defaults to stream 1 of ``config.seed``.
    callback : callable ``(update, model, mean_energy)``, optional

    Returns
    -------
    model : StudentTExpertSet
    trace : ndarray, shape (updates,)
        Mean per-case energy of each update's batch, before its step.
    """
    if not callable(source):
        source = batch_source(source)
    if rng is None:
        rng = make_rng(config.seed, 1)
    model = rescale_weights(model)
    w = model.weights
    step = np.zeros_like(w)
    trace = np.empty(config.updates)
    for t in range(config.updates):
        batch = _check_batch(model, source(rng, config.batch_size))
        cur = StudentTExpertSet(w, model.k)
        per_case, _ = total_energy(cur, batch)
        mean_e = per_case.mean() if per_case.size else 0.0
        if not np.isfinite(mean_e):
            raise DivergenceError(t)
        trace[t] = mean_e
        g = energy_case_weights(per_case) if config.reweight_by_energy else None
        grad = energy_gradient(cur, batch, g)
        # keep the step inside the sum-one plane; the rescale then only removes rounding drift
        grad -= grad.mean(axis=1, keepdims=True)
        step = config.momentum * step - config.learning_rate * grad
        w = rescale_weights(StudentTExpertSet(w + step, model.k)).weights
        if not np.all(np.isfinite(w)):
            raise DivergenceError(t, "weights")
        if callback is not None:
            callback(t, StudentTExpertSet(w, model.k), mean_e)
    return StudentTExpertSet(w, model.k), trace
