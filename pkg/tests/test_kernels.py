import math
import os
import subprocess
import sys

import numpy as np
import pytest

from cminverse import kernels
from cminverse.kernels import py_kernels


def _random_ddrm_inputs(seed, n=12):
    rng = np.random.default_rng(seed)
    s = np.concatenate([rng.uniform(0.3, 2.0, size=n - 3), np.zeros(3)])
    valid = s > 0.0
    y_bar = np.where(valid, rng.standard_normal(n), 0.0)
    return dict(
        x_bar_next=rng.standard_normal(n),
        x_bar_theta=rng.standard_normal(n),
        y_bar=y_bar,
        y_valid=valid,
        s_padded=s,
        sigma_t=0.4,
        sigma_next=1.1,
        sigma_y=0.3,
        eta=0.85,
        eta_b=1.0,
        noise=rng.standard_normal(n),
    )


class TestBackendParity:
    """The compiled and pure-python kernels must agree to rounding."""

    def test_ddrm_update(self):
        for seed in range(5):
            kw = _random_ddrm_inputs(seed)
            a = kernels.ddrm_update(**kw)
            b = py_kernels.ddrm_update(**kw)
            assert np.allclose(a, b, rtol=1e-12, atol=1e-12)

    def test_empirical_mean(self):
        rng = np.random.default_rng(1)
        atoms = rng.standard_normal((9, 6))
        logw = np.log(rng.dirichlet(np.ones(9)))
        x = rng.standard_normal((4, 6))
        a = kernels.empirical_mean(atoms, logw, x, 0.7)
        b = py_kernels.empirical_mean(atoms, logw, x, 0.7)
        assert np.allclose(a, b, rtol=1e-10, atol=1e-12)

    def test_ssim_mean(self):
        rng = np.random.default_rng(2)
        x = rng.random((12, 14))
        y = rng.random((12, 14))
        win = np.ones((5, 5)) / 25.0
        a = kernels.ssim_mean(x, y, win, 1e-4, 9e-4)
        b = py_kernels.ssim_mean(x, y, win, 1e-4, 9e-4)
        assert a == pytest.approx(b, rel=1e-12)


def test_ddrm_three_cases_hand_values():
    # Diagonal spectrum s = [2, 0.5, 0] with sigma_y = 0.2 splits the
    # noise-to-signal ratios into [0.1, 0.4, inf]; at sigma_t = 0.2 the
    # three indices land in the three distinct cases.
    x_next = np.array([0.3, -0.2, 0.5])
    x_theta = np.array([0.1, 0.4, -0.3])
    y_bar = np.array([1.0, -1.0, 0.0])
    valid = np.array([True, True, False])
    s = np.array([2.0, 0.5, 0.0])
    noise = np.array([1.0, -1.0, 2.0])
    out = kernels.ddrm_update(
        x_next, x_theta, y_bar, valid, s, 0.2, 1.0, 0.2, 0.85, 1.0, noise
    )
    pull = math.sqrt(1.0 - 0.85**2) * 0.2
    # index 0: sigma_t >= nsr -> mean y_bar, var sigma_t^2 - nsr^2
    assert out[0] == pytest.approx(1.0 + math.sqrt(0.04 - 0.01) * 1.0, rel=1e-12)
    # index 1: sigma_t < nsr -> pull toward y_bar scaled by sigma_t/nsr
    mean1 = 0.4 + pull * (-1.0 - 0.4) / 0.4
    assert out[1] == pytest.approx(mean1 + 0.85 * 0.2 * -1.0, rel=1e-12)
    # index 2: s = 0 -> pull along the previous iterate
    mean2 = -0.3 + pull * (0.5 - (-0.3)) / 1.0
    assert out[2] == pytest.approx(mean2 + 0.85 * 0.2 * 2.0, rel=1e-12)


def test_ddrm_rejects_invalid_measured_coordinate():
    kw = _random_ddrm_inputs(3)
    kw["y_valid"] = np.zeros_like(kw["y_valid"])  # all invalid but s > 0
    with pytest.raises(ValueError):
        kernels.ddrm_update(**kw)


def test_ddrm_case3_variance_edge():
    # At sigma_t = sigma_y / s with eta_b = 1 the case-3 variance is
    # exactly zero (allowed); eta_b > 1 drives it negative (rejected).
    kw = _random_ddrm_inputs(4, n=4)
    kw.update(
        s_padded=np.ones(4),
        y_valid=np.ones(4, dtype=bool),
        y_bar=np.ones(4),
        sigma_y=0.5,
        sigma_t=0.5,
        sigma_next=1.0,
        eta_b=1.0,
    )
    out = kernels.ddrm_update(**kw)
    assert np.array_equal(out, np.ones(4))  # deterministic at zero variance
    kw["eta_b"] = 1.2
    with pytest.raises(ValueError):
        kernels.ddrm_update(**kw)


def test_empirical_mean_limits():
    atoms = np.array([[0.0], [1.0]])
    logw = np.log(np.array([0.25, 0.75]))
    # tiny t snaps to the nearest atom
    near = kernels.empirical_mean(atoms, logw, np.array([0.9]), 1e-3)
    assert near[0] == pytest.approx(1.0, abs=1e-12)
    # huge t approaches the weighted atom mean
    far = kernels.empirical_mean(atoms, logw, np.array([0.4]), 1e6)
    assert far[0] == pytest.approx(0.75, abs=1e-6)


def test_empirical_mean_extreme_distances_stay_finite():
    atoms = np.array([[0.0], [1000.0]])
    logw = np.log(np.array([0.5, 0.5]))
    out = kernels.empirical_mean(atoms, logw, np.array([-500.0]), 0.01)
    assert np.isfinite(out).all()
    assert out[0] == pytest.approx(0.0, abs=1e-9)


def test_ssim_window_larger_than_image_raises():
    with pytest.raises(ValueError):
        kernels.ssim_mean(np.zeros((3, 3)), np.zeros((3, 3)), np.ones((5, 5)) / 25, 1e-4, 9e-4)


def test_env_var_selects_python_backend():
    code = (
        "import cminverse.kernels as k; print(k.BACKEND)"
    )
    env = dict(os.environ, CMINVERSE_KERNELS="python")
    out = subprocess.run(
        [sys.executable, "-c", code], env=env, capture_output=True, text=True
    )
    assert out.returncode == 0
    assert out.stdout.strip() == "python"
