"""Self-checks of the pseudo-likelihood machinery against exact enumeration."""
import numpy as np

from .numerics import central_difference, make_rng
from .pseudolikelihood import (
    PlModel, QuantizedSpace, brute_force_joint, conditional_distribution,
    log_pseudo_likelihood, pl_gradient,
)

TOLERANCES = {
    "conditional": 1e-10,
    "pseudo_likelihood": 1e-10,
    "table_sum": 1e-12,
    "pl_gradient_rel": 1e-5,
    "ll_gradient_rel": 1e-6,
}


def reference_model(seed=1, n=3, a=4, m=2, k=100.0):
    """Tiny model used by the exactness checks: ``a`` uniform levels on [0, 1]."""
    rng = make_rng(seed, 0)
    return PlModel(rng.normal(0.0, 0.5, size=(m, n)), QuantizedSpace.uniform(a), k)


def reference_batch(model, count=20, seed=1):
    rng = make_rng(seed, 1)
    idx = rng.integers(model.space.a, size=(count, model.n))
    return model.space.levels[idx]


def relative_error(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-300)
    return float(np.max(np.abs(a - b)) / scale)


def run_oracle_checks(model=None, batch=None):
    """Return ``{check: (deviation, tolerance)}`` for the reference model."""
    model = reference_model() if model is None else model
    batch = reference_batch(model) if batch is None else batch
    table = brute_force_joint(model)
    shape = model.weights.shape

    cond_dev = 0.0
    for d in table.states:
        for i in range(model.n):
            diff = conditional_distribution(model, d, i) - table.conditional(d, i)
            cond_dev = max(cond_dev, float(np.max(np.abs(diff))))

    pl_dev = abs(log_pseudo_likelihood(model, batch) - table.pseudo_log_likelihood(batch))

    def pl_of(w):
        return log_pseudo_likelihood(PlModel(w.reshape(shape), model.space, model.k), batch)

    def ll_of(w):
        return brute_force_joint(PlModel(w.reshape(shape), model.space, model.k)).log_likelihood(batch)

    w0 = model.weights.ravel()
    pl_grad_dev = relative_error(pl_gradient(model, batch).ravel(), central_difference(pl_of, w0, 1e-5))
    ll_grad_dev = relative_error(table.log_likelihood_gradient(batch).ravel(), central_difference(ll_of, w0, 1e-6))

    return {
        "conditional": (cond_dev, TOLERANCES["conditional"]),
        "pseudo_likelihood": (float(pl_dev), TOLERANCES["pseudo_likelihood"]),
        "table_sum": (abs(float(table.probs.sum()) - 1.0), TOLERANCES["table_sum"]),
        "pl_gradient_rel": (pl_grad_dev, TOLERANCES["pl_gradient_rel"]),
        "ll_gradient_rel": (ll_grad_dev, TOLERANCES["ll_gradient_rel"]),
    }
