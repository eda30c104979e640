"""Shared fixtures and numerical oracles."""

import numpy as np
import pytest

from groupmotion import autodiff as ad
from groupmotion.diffusion import DiffusionSchedule
from groupmotion.motion import NormalizationStats, default_skeleton
from groupmotion.priors import AnalyticPrior


def finite_difference(f, x, coords, h=1e-5):
    """Central differences of scalar f at the given flat coordinates."""
    x = np.array(x, dtype=np.float64)
    out = {}
    for c in coords:
        xp, xm = x.copy(), x.copy()
        xp.flat[c] += h
        xm.flat[c] -= h
        out[c] = (f(xp) - f(xm)) / (2.0 * h)
    return out


def check_gradient(build_loss, x, n_coords=10, seed=0, rtol=1e-4, atol=1e-7,
                   h=1e-5):
    """build_loss(Var) -> scalar Var; compares reverse-mode against central
    finite differences on random coordinates."""
    rng = np.random.default_rng(seed)
    var = ad.Var(np.array(x, dtype=np.float64))
    loss = build_loss(var)
    (g,) = ad.grad(loss, [var])
    coords = rng.choice(x.size, size=min(n_coords, x.size), replace=False)
    fd = finite_difference(lambda a: float(build_loss(ad.Var(a)).value),
                           x, coords, h=h)
    for c in coords:
        got, want = g.flat[c], fd[c]
        err = abs(got - want) / max(abs(want), atol / rtol)
        assert err < rtol, f"coord {c}: reverse {got} vs FD {want} (err {err})"


@pytest.fixture(scope="session")
def skeleton():
    return default_skeleton()


@pytest.fixture(scope="session")
def stats(skeleton):
    return NormalizationStats.reference(skeleton)


@pytest.fixture(scope="session")
def small_schedule():
    return DiffusionSchedule(t_train=50, ddim_steps=5)


@pytest.fixture(scope="session")
def analytic_prior(small_schedule, stats, skeleton):
    return AnalyticPrior(small_schedule, stats, skeleton)
