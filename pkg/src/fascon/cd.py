"""Two-Gaussian linear-constraint experts trained by one-step contrastive divergence.

Expert ``j`` owns a constraint vector ``lam[:, j]``, a mixing logit
``mix[j]`` and two log-variances. Its violation ``v = lam_j . d`` is drawn
from the broad (``log_var1``) Gaussian with probability
``sigmoid(mix[j])`` and from the other one otherwise.

Reconstructions follow the latent-then-visible Gibbs step: sample which
Gaussian each expert uses, draw the violations ``u`` from the chosen
variances, then map them back to data space with the pseudo-inverse of
``lam.T`` so that ``lam.T @ d_hat == u``. When augmentation is on, ``m``
zero coordinates are appended to the data and an identity block to ``lam``;
the block keeps the columns independent and is never trained. The default
``"auto"`` setting augments only when the columns of ``lam`` are linearly
dependent, for example when there are more experts than dimensions.
"""
from dataclasses import dataclass, asdict
from typing import NamedTuple

import numpy as np
from scipy.special import expit

from .datagen import batch_source
from .errors import DivergenceError, FasError, InvalidInputError
from .numerics import make_rng, pseudo_inverse, sample_gaussian_diag

LOG_2PI = np.log(2.0 * np.pi)
RANK_TOL = 1e-10


@dataclass
class MixtureExpertSet:
    lam: np.ndarray  # (n, m), column j is expert j's constraint
    mix: np.ndarray  # (m,) logit of choosing the log_var1 Gaussian
    log_var1: np.ndarray  # (m,)
    log_var0: np.ndarray  # (m,)

    def __post_init__(self):
        self.lam = np.atleast_2d(np.asarray(self.lam, dtype=np.float64))
        m = self.lam.shape[1]
        for name in ("mix", "log_var1", "log_var0"):
            arr = np.asarray(getattr(self, name), dtype=np.float64).reshape(-1)
            if arr.shape != (m,):
                raise InvalidInputError(f"{name} must have one entry per expert ({m}), got {arr.shape}")
            setattr(self, name, arr)

    @property
    def n(self):
        return self.lam.shape[0]

    @property
    def m(self):
        return self.lam.shape[1]

    @property
    def prior(self):
        return expit(self.mix)

    @property
    def var1(self):
        return np.exp(self.log_var1)

    @property
    def var0(self):
        return np.exp(self.log_var0)

    def copy(self):
        return MixtureExpertSet(self.lam.copy(), self.mix.copy(), self.log_var1.copy(), self.log_var0.copy())

    def params(self):
        return {"lam": self.lam, "mix": self.mix, "log_var1": self.log_var1, "log_var0": self.log_var0}

    def is_finite(self):
        return all(np.all(np.isfinite(p)) for p in self.params().values())


class AugmentedModel:
    """View of a model with an identity block appended below ``lam``."""

    def __init__(self, base):
        self.base = base

    @property
    def lam(self):
        return np.vstack([self.base.lam, np.eye(self.base.m)])

    def augment_data(self, data):
        data = np.asarray(data, dtype=np.float64)
        pad = np.zeros(data.shape[:-1] + (self.base.m,))
        return np.concatenate([data, pad], axis=-1)


def init_mixture(n, m, rng, var1=1.0, var0=0.01, init="orthonormal"):
    """Initial model with equal mixing proportions.

    ``init="gaussian"`` draws every filter entry from N(0, 1/n). The default
    ``"orthonormal"`` orthogonalizes that draw: orthonormal filters when
    ``m <= n``, otherwise orthonormal rows scaled so filters have unit norm on
    average. Well-conditioned filters keep the sampling pseudo-inverse tame
    early in training.
    """
    if init not in ("orthonormal", "gaussian"):
        raise InvalidInputError(f"unknown init {init!r}")
    lam = rng.normal(0.0, 1.0 / np.sqrt(n), size=(n, m))
    if init == "orthonormal":
        if m <= n:
            q, r = np.linalg.qr(lam)
            lam = q * np.sign(np.diag(r))
        else:
            q, r = np.linalg.qr(lam.T)
            lam = (q * np.sign(np.diag(r))).T * np.sqrt(m / n)
    return MixtureExpertSet(lam, np.zeros(m), np.full(m, np.log(var1)), np.full(m, np.log(var0)))


def _log_normal(v, log_var):
    return -0.5 * (LOG_2PI + log_var + v * v / np.exp(log_var))


def _branch_logs(model, v):
    # log of the two weighted branch densities; v broadcasts against (m,)
    log_p1 = -np.logaddexp(0.0, -model.mix)
    log_p0 = -np.logaddexp(0.0, model.mix)
    return log_p1 + _log_normal(v, model.log_var1), log_p0 + _log_normal(v, model.log_var0)


def expert_log_density(model, v):
    """Log mixture density of each expert's violation; ``v`` has shape (..., m)."""
    a1, a0 = _branch_logs(model, np.asarray(v, dtype=np.float64))
    return np.logaddexp(a1, a0)


def responsibility(model, v):
    """Posterior probability that each expert's broad (``log_var1``) Gaussian is in use."""
    a1, a0 = _branch_logs(model, np.asarray(v, dtype=np.float64))
    return expit(a1 - a0)


def _both_responsibilities(model, v):
    # s0 straight from the log-odds keeps its tail accurate where 1 - s1 rounds to 0
    a1, a0 = _branch_logs(model, v)
    return expit(a1 - a0), expit(a0 - a1)


class ExpertGradients(NamedTuple):
    mix: np.ndarray
    log_var1: np.ndarray
    log_var0: np.ndarray
    lam: np.ndarray


def positive_gradients(model, d):
    """Derivatives of every ``log f_j(d)`` w.r.t. the expert's own parameters.

    The mixing-logit derivative is ``s1 - prior``; the constant ``prior``
    cancels between the data and reconstruction phases. The constraint
    derivative is ``-(s1/var1 + s0/var0) v d``. Returned ``lam`` has shape
    (len(d), m).
    """
    d = np.asarray(d, dtype=np.float64)
    if d.shape != (model.n,):
        raise InvalidInputError(f"expected a vector of length {model.n}, got shape {d.shape}")
    v = d @ model.lam
    s1, s0 = _both_responsibilities(model, v)
    precision = s1 / model.var1 + s0 / model.var0
    return ExpertGradients(
        mix=s1 - model.prior,
        log_var1=0.5 * s1 * (v * v / model.var1 - 1.0),
        log_var0=0.5 * s0 * (v * v / model.var0 - 1.0),
        lam=-np.outer(d, precision * v),
    )


def _gradient_sums(model, lam_eff, data):
    """Per-parameter sums over cases of the ``log f`` derivatives.

    ``lam_eff`` is ``lam`` or its augmented form and ``data`` has the matching
    width; only the first ``n`` rows of the constraint derivative are returned.
    """
    v = data @ lam_eff
    s1, s0 = _both_responsibilities(model, v)
    precision = s1 / model.var1 + s0 / model.var0
    return ExpertGradients(
        mix=(s1 - model.prior).sum(axis=0),
        log_var1=(0.5 * s1 * (v * v / model.var1 - 1.0)).sum(axis=0),
        log_var0=(0.5 * s0 * (v * v / model.var0 - 1.0)).sum(axis=0),
        lam=-(data[:, : model.n].T @ (precision * v)),
    ), s1


def has_full_column_rank(lam, tol=RANK_TOL):
    if lam.shape[1] > lam.shape[0]:
        return False
    s = np.linalg.svd(lam, compute_uv=False)
    return bool(s[-1] > tol * s[0])


def resolve_augment(model, augment):
    """Turn ``True``/``False``/``"auto"`` into a bool.

    ``"auto"`` augments only when ``lam`` has linearly dependent columns.
    """
    if augment == "auto":
        return not has_full_column_rank(model.lam)
    if isinstance(augment, (bool, np.bool_)):
        return bool(augment)
    raise InvalidInputError(f"augment must be True, False or 'auto', got {augment!r}")


def sampling_matrix(model, augment="auto"):
    """Map from sampled violations to data space: pseudo-inverse of ``lam.T``.

    Without augmentation ``lam`` must have full column rank.
    """
    augment = resolve_augment(model, augment)
    lam = AugmentedModel(model).lam if augment else model.lam
    if not has_full_column_rank(lam):
        if augment:
            raise FasError("internal invariant failure: augmented constraint matrix lost full column rank")
        raise InvalidInputError("constraint matrix lacks full column rank; enable augmentation")
    return pseudo_inverse(lam.T)


class Reconstruction(NamedTuple):
    s: np.ndarray  # sampled latent choices, 1 = broad Gaussian
    u: np.ndarray  # sampled violations
    d_hat: np.ndarray  # reconstruction, augmented width when augmentation is on


def latent_precisions(model, s):
    return np.where(s > 0, 1.0 / model.var1, 1.0 / model.var0)


def reconstruct(model, d, rng, augment="auto", s=None, sampler=None):
    """One latent-then-visible Gibbs step from ``d`` (a vector or a batch).

    ``s`` forces the latent choices; ``sampler`` reuses a precomputed
    :func:`sampling_matrix`.
    """
    d = np.asarray(d, dtype=np.float64)
    single = d.ndim == 1
    data = np.atleast_2d(d)
    if data.shape[1] != model.n:
        raise InvalidInputError(f"data dimension {data.shape[1]} does not match model dimension {model.n}")
    if sampler is None:
        sampler = sampling_matrix(model, augment)
    if s is None:
        s1 = responsibility(model, data @ model.lam)
        s = (rng.random(s1.shape) < s1).astype(np.float64)
    else:
        s = np.broadcast_to(np.asarray(s, dtype=np.float64), (data.shape[0], model.m)).copy()
    u = sample_gaussian_diag(1.0 / latent_precisions(model, s), rng)
    d_hat = u @ sampler.T
    if single:
        return Reconstruction(s[0], u[0], d_hat[0])
    return Reconstruction(s, u, d_hat)


@dataclass
class CdTrainConfig:
    learning_rate: float = 3e-4  # keep lr * E|d|^2 / var0 well below 2(1 + momentum)
    momentum: float = 0.9
    batch_size: int = 100
    updates: int = 1000
    experts: int = 256
    lam_scale: float = 1.0
    mix_scale: float = 0.1
    var_scale: float = 0.1
    augment: object = "auto"  # True, False or "auto"
    init: str = "orthonormal"
    checkpoint_every: int = 0
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise InvalidInputError("learning_rate must be non-negative")
        if not 0 <= self.momentum < 1:
            raise InvalidInputError("momentum must lie in [0, 1)")
        if self.batch_size < 1 or self.updates < 0 or self.experts < 1 or self.checkpoint_every < 0:
            raise InvalidInputError("batch_size and experts must be positive, updates non-negative")
        if self.init not in ("orthonormal", "gaussian"):
            raise InvalidInputError(f"init must be 'orthonormal' or 'gaussian', got {self.init!r}")
        if self.augment not in (True, False, "auto"):
            raise InvalidInputError(f"augment must be true, false or 'auto', got {self.augment!r}")

    def to_dict(self):
        return asdict(self)


def cd_gradient(model, batch, rng, augment="auto", reconstruct_fn=None):
    """Batch-averaged CD-1 gradient (data phase minus reconstruction phase).

    ``reconstruct_fn(model, batch, rng)`` overrides the sampler and must
    return reconstructions of the augmented width when ``augment`` is on.
    Returns the gradient, the reconstructions, the data responsibilities and
    whether augmentation was used.
    """
    batch = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    if batch.shape[1] != model.n:
        raise InvalidInputError(f"batch dimension {batch.shape[1]} does not match model dimension {model.n}")
    augment = resolve_augment(model, augment)
    aug = AugmentedModel(model)
    lam_eff = aug.lam if augment else model.lam
    data = aug.augment_data(batch) if augment else batch
    if reconstruct_fn is None:
        d_hat = reconstruct(model, batch, rng, augment).d_hat
    else:
        d_hat = np.atleast_2d(reconstruct_fn(model, batch, rng))
    pos, s1 = _gradient_sums(model, lam_eff, data)
    neg, _ = _gradient_sums(model, lam_eff, d_hat)
    c = batch.shape[0]
    grad = ExpertGradients(*[(p - q) / c for p, q in zip(pos, neg)])
    return grad, d_hat, s1, augment


def cd_update(model, batch, config, rng, velocity=None, reconstruct_fn=None):
    """One momentum step along the CD-1 gradient.

    Returns ``(model, velocity, diagnostics)``; pass the returned velocity back
    on the next call.
    """
    grad, d_hat, s1, augmented = cd_gradient(model, batch, rng, config.augment, reconstruct_fn)
    if velocity is None:
        velocity = ExpertGradients(*[np.zeros_like(g) for g in grad])
    scales = ExpertGradients(config.mix_scale, config.var_scale, config.var_scale, config.lam_scale)
    velocity = ExpertGradients(*[
        config.momentum * vel + config.learning_rate * sc * g
        for vel, sc, g in zip(velocity, scales, grad)
    ])
    new = MixtureExpertSet(
        model.lam + velocity.lam,
        model.mix + velocity.mix,
        model.log_var1 + velocity.log_var1,
        model.log_var0 + velocity.log_var0,
    )
    batch = np.atleast_2d(batch)
    err = np.linalg.norm(batch - d_hat[:, : model.n], axis=1)
    diagnostics = {
        "reconstruction_error": float(err.mean()),
        "responsibility": float(s1.mean()),
        "lam_norm": float(np.linalg.norm(new.lam)),
        "mix_norm": float(np.linalg.norm(new.mix)),
        "log_var1_mean": float(new.log_var1.mean()),
        "log_var0_mean": float(new.log_var0.mean()),
        "augmented": int(augmented),
    }
    return new, velocity, diagnostics


TRACE_FIELDS = (
    "update", "reconstruction_error", "responsibility", "lam_norm", "mix_norm", "log_var1_mean", "log_var0_mean",
    "augmented",
)


def train_cd(model, source, config, rng=None, callback=None, checkpoint=None):
    """Iterate :func:`cd_update` over minibatches.

    Parameters
    ----------
    model : MixtureExpertSet
    source : callable ``(rng, size) -> array`` or an array of cases
    config : CdTrainConfig
    rng : numpy Generator, optional
        Defaults to stream 1 of ``config.seed``.
    callback : callable ``(update, model, diagnostics)``, optional
    checkpoint : callable ``(update, model)``, optional
        Called every ``config.checkpoint_every`` updates.

    Returns
    -------
    model, trace : MixtureExpertSet, list of dict
    """
    if not callable(source):
        source = batch_source(source)
    if rng is None:
        rng = make_rng(config.seed, 1)
    velocity = None
    trace = []
    for t in range(config.updates):
        batch = source(rng, config.batch_size)
        model, velocity, diag = cd_update(model, batch, config, rng, velocity)
        if not model.is_finite() or not np.isfinite(diag["reconstruction_error"]):
            raise DivergenceError(t, "parameter")
        diag = {"update": t, **diag}
        trace.append(diag)
        if callback is not None:
            callback(t, model, diag)
        if checkpoint is not None and config.checkpoint_every and (t + 1) % config.checkpoint_every == 0:
            checkpoint(t + 1, model)
    return model, trace
