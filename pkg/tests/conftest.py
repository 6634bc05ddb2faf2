"""Shared test helpers: finite-difference gradient checking."""

import numpy as np
import pytest

from latentreplay.rng import SeededRng


def numeric_grad(loss_fn, arr, flat_index, h):
    """Central difference of loss_fn wrt one coordinate of arr (in place).

    Divides by the effective step after float32 rounding so the check is
    exact about the perturbation actually applied.
    """
    flat = arr.reshape(-1)
    orig = flat[flat_index].item()
    flat[flat_index] = orig + h
    xp = flat[flat_index].item()
    fp = loss_fn()
    flat[flat_index] = orig - h
    xm = flat[flat_index].item()
    fm = loss_fn()
    flat[flat_index] = orig
    return (fp - fm) / (xp - xm)


def grad_mismatch(analytic, numeric, rtol=1e-3, atol=1e-5):
    """Relative error guard: passes when |a-n| <= rtol*max(|a|,|n|) + atol.

    atol absorbs coordinates whose true gradient sits at the float32
    noise floor, where a relative criterion is meaningless.
    """
    return abs(analytic - numeric) > rtol * max(abs(analytic), abs(numeric)) + atol


def check_grad_tensor(loss_fn, arr, analytic, rng: SeededRng, n_coords=10,
                      h=1e-2, rtol=1e-3, label="", skip_kinks=False):
    """Compare analytic gradients with central differences at random coords.

    With ``skip_kinks`` the estimate is recomputed at h/2 and coordinates
    where the two disagree are discarded: there the perturbation crosses a
    relu kink, so no finite-difference estimate of the derivative exists.
    Enough extra candidates are drawn to still check ``n_coords`` smooth
    coordinates.
    """
    flat_g = np.asarray(analytic).reshape(-1)
    size = flat_g.size
    want = min(n_coords, size)
    idxs = rng.choice(size, min(4 * want if skip_kinks else want, size))
    checked = 0
    for i in idxs:
        if checked >= want:
            break
        num = numeric_grad(loss_fn, arr, int(i), h)
        if skip_kinks:
            num_half = numeric_grad(loss_fn, arr, int(i), h / 2)
            if abs(num - num_half) > 0.5 * rtol * max(abs(num), abs(num_half)) + 2e-5:
                continue
        ana = float(flat_g[int(i)])
        assert not grad_mismatch(ana, num, rtol=rtol), (
            f"{label}[{int(i)}]: analytic {ana:.6g} vs numeric {num:.6g}")
        checked += 1
    assert checked >= max(1, want // 2), f"{label}: too few smooth coordinates"


@pytest.fixture
def rng():
    return SeededRng(1234)
