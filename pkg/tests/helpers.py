import numpy as np

from oranslice.system import Allocation


def grant(cfg, entries):
    """Allocation from ``(u, b, m, watts)`` grants, slice taken from the UE."""
    a = Allocation.empty(cfg)
    sl = cfg.ue_slice
    for u, b, m, p in entries:
        a.alpha[u, :, sl[u]] = 0.0
        a.alpha[u, b, sl[u]] = 1.0
        a.beta[u, b, m, sl[u]] = 1.0
        a.power[u, b, m, sl[u]] = p
    return a


def associate_all(cfg, a, b=0):
    """Give every UE without an association the RU ``b``."""
    sl = cfg.ue_slice
    for u in range(cfg.num_ues):
        if not a.alpha[u, :, sl[u]].any():
            a.alpha[u, b, sl[u]] = 1.0
    return a


def numeric_grad(f, arr, h=1e-5):
    """Central differences of the scalar ``f()`` w.r.t. every entry of ``arr`` (in place)."""
    g = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = arr[i]
        arr[i] = old + h
        fp = f()
        arr[i] = old - h
        fm = f()
        arr[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def assert_grad_close(analytic, numeric, rtol=1e-4, atol=1e-7):
    # relative error where the gradient is non-negligible; absolute floor near zero
    err = np.abs(analytic - numeric)
    assert np.all(err <= rtol * (np.abs(analytic) + 1e-8) + atol), float(err.max())


# (number, title, passed, detail) per acceptance criterion, printed by conftest
VERDICTS = {}


def verdict(number, title, passed, detail):
    VERDICTS[number] = (title, bool(passed), detail)
    assert passed, f"{title}: {detail}"
