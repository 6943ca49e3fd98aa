import mpmath
import numpy as np
import pytest

from fascon.numerics import make_rng


@pytest.fixture
def rng():
    return make_rng(12345, 0)


def rel_err(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.max(np.abs(a - b)) / max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-300)


def _mp_log_density(lam_col, mix, lv1, lv0, d):
    v = mpmath.fsum(mpmath.mpf(a) * mpmath.mpf(b) for a, b in zip(lam_col, d))
    pi = 1 / (1 + mpmath.exp(-mix))

    def gauss(lv):
        s2 = mpmath.exp(lv)
        return mpmath.exp(-v * v / (2 * s2)) / mpmath.sqrt(2 * mpmath.pi * s2)

    return mpmath.log(pi * gauss(lv1) + (1 - pi) * gauss(lv0))


def mixture_gradients_mp(model, d, h=1e-12):
    """Central differences of each log f_j in 40-digit arithmetic.

    Working precision removes the roundoff that limits double-precision
    differences when a responsibility is tiny.
    """
    out = {name: np.zeros_like(getattr(model, name)) for name in ("mix", "log_var1", "log_var0", "lam")}
    with mpmath.workdps(40):
        h = mpmath.mpf(h)
        for j in range(model.m):
            args = [list(model.lam[:, j]), model.mix[j], model.log_var1[j], model.log_var0[j]]

            def diff(update):
                hi, lo = update(h), update(-h)
                return float((_mp_log_density(*hi, d) - _mp_log_density(*lo, d)) / (2 * h))

            for pos, name in ((1, "mix"), (2, "log_var1"), (3, "log_var0")):
                def shift(eps, pos=pos):
                    a = list(args)
                    a[pos] = mpmath.mpf(a[pos]) + eps
                    return a
                out[name][j] = diff(shift)
            for i in range(model.n):
                def shift_lam(eps, i=i):
                    a = list(args)
                    a[0] = list(a[0])
                    a[0][i] = mpmath.mpf(a[0][i]) + eps
                    return a
                out["lam"][i, j] = diff(shift_lam)
    return out


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
