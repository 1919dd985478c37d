"""Pure-numpy implementations of the hot kernels.

These mirror the compiled extension in ``_ckernels.pyx`` exactly; the
backend is chosen once at import time (see ``kernels.__init__``).
"""

import numpy as np

BACKEND = "python"


def ddrm_update(
    x_bar_next,
    x_bar_theta,
    y_bar,
    y_valid,
    s_padded,
    sigma_t,
    sigma_next,
    sigma_y,
    eta,
    eta_b,
    noise,
):
    """Per-coefficient spectral posterior update, one noise transition.

    Each index draws from one of three Gaussians keyed on the singular
    value s_i and the noise-to-signal ratio sigma_y / s_i:

      s_i = 0            : mean pulls along (x_next - x_theta) / sigma_next
      sigma_t <  sy/s_i  : mean pulls along (y_bar - x_theta) / (sy/s_i)
      sigma_t >= sy/s_i  : mean blends x_theta with y_bar via eta_b

    ``noise`` supplies the standard-normal draws so that both backends
    consume randomness identically.
    """
    x_bar_next = np.asarray(x_bar_next, dtype=np.float64)
    x_bar_theta = np.asarray(x_bar_theta, dtype=np.float64)
    y_bar = np.asarray(y_bar, dtype=np.float64)
    y_valid = np.asarray(y_valid, dtype=bool)
    s = np.asarray(s_padded, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)

    zero = s == 0.0
    nsr = np.divide(sigma_y, s, out=np.full_like(s, np.inf), where=~zero)
    case1 = zero
    case2 = ~zero & (sigma_t < nsr)
    case3 = ~zero & (sigma_t >= nsr)
    if np.any((case2 | case3) & ~y_valid):
        raise ValueError("spectral measurement required at an invalid index")

    pull = np.sqrt(max(1.0 - eta * eta, 0.0)) * sigma_t
    mean = np.empty_like(s)
    std = np.empty_like(s)

    mean[case1] = x_bar_theta[case1] + pull * (
        x_bar_next[case1] - x_bar_theta[case1]
    ) / sigma_next
    std[case1] = eta * sigma_t

    mean[case2] = x_bar_theta[case2] + pull * (
        y_bar[case2] - x_bar_theta[case2]
    ) / nsr[case2]
    std[case2] = eta * sigma_t

    var3 = sigma_t * sigma_t - (nsr[case3] * eta_b) ** 2
    if var3.size and np.min(var3) < 0.0:
        raise ValueError(
            "negative variance in the measurement-dominated branch; "
            "eta_b is too large for this noise level"
        )
    mean[case3] = (1.0 - eta_b) * x_bar_theta[case3] + eta_b * y_bar[case3]
    std[case3] = np.sqrt(var3)

    return mean + std * noise


def empirical_mean(atoms, log_weights, x, t):
    """Posterior mean under a discrete prior observed through x_t = x + t z.

    Weights are softmax(log_weights - ||x - a_j||^2 / (2 t^2)), computed
    with the max logit subtracted for stability.  ``x`` may be a single
    vector (n,) or a batch (B, n).
    """
    atoms = np.asarray(atoms, dtype=np.float64)
    log_weights = np.asarray(log_weights, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    xb = x[None, :] if single else x

    # ||x - a||^2 via the Gram expansion; stabilised softmax follows.
    sq_x = np.einsum("bi,bi->b", xb, xb)
    sq_a = np.einsum("ji,ji->j", atoms, atoms)
    d = sq_x[:, None] + sq_a[None, :] - 2.0 * (xb @ atoms.T)
    logits = log_weights[None, :] - d / (2.0 * t * t)
    logits -= logits.max(axis=1, keepdims=True)
    w = np.exp(logits)
    w /= w.sum(axis=1, keepdims=True)
    out = w @ atoms
    return out[0] if single else out


def ssim_mean(x, y, window, c1, c2):
    """Mean local SSIM between two 2-D arrays under a weighted window.

    Uses the standard weighted-moment form on every valid window position
    (no padding); ``window`` must be a unit-sum (K, K) weight array.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    window = np.asarray(window, dtype=np.float64)
    k = window.shape[0]
    if x.shape[0] < k or x.shape[1] < k:
        raise ValueError(f"image {x.shape} smaller than window {window.shape}")

    # The window is an outer product of its row/column marginals only when
    # built separably; convolve with the full 2-D window to stay general.
    win = np.lib.stride_tricks.sliding_window_view

    def wsum(a):
        return np.tensordot(win(a, (k, k)), window, axes=([2, 3], [0, 1]))

    mu_x = wsum(x)
    mu_y = wsum(y)
    var_x = wsum(x * x) - mu_x * mu_x
    var_y = wsum(y * y) - mu_y * mu_y
    cov = wsum(x * y) - mu_x * mu_y

    num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return float(np.mean(num / den))
