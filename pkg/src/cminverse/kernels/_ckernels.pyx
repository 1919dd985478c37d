# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the hot kernels (see py_kernels for docs)."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, sqrt, INFINITY

cnp.import_array()

BACKEND = "compiled"


def ddrm_update(
    x_bar_next,
    x_bar_theta,
    y_bar,
    y_valid,
    s_padded,
    double sigma_t,
    double sigma_next,
    double sigma_y,
    double eta,
    double eta_b,
    noise,
):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xn = np.ascontiguousarray(x_bar_next, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xt = np.ascontiguousarray(x_bar_theta, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] yb = np.ascontiguousarray(y_bar, dtype=np.float64)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] yv = np.ascontiguousarray(y_valid, dtype=np.uint8)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] s = np.ascontiguousarray(s_padded, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] z = np.ascontiguousarray(noise, dtype=np.float64)
    cdef Py_ssize_t n = s.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n, dtype=np.float64)

    cdef double pull = sqrt(max(1.0 - eta * eta, 0.0)) * sigma_t
    cdef double nsr, mean, var
    cdef Py_ssize_t i

    for i in range(n):
        if s[i] == 0.0:
            mean = xt[i] + pull * (xn[i] - xt[i]) / sigma_next
            out[i] = mean + eta * sigma_t * z[i]
            continue
        if not yv[i]:
            raise ValueError("spectral measurement required at an invalid index")
        nsr = sigma_y / s[i]
        if sigma_t < nsr:
            mean = xt[i] + pull * (yb[i] - xt[i]) / nsr
            out[i] = mean + eta * sigma_t * z[i]
        else:
            var = sigma_t * sigma_t - nsr * nsr * eta_b * eta_b
            if var < 0.0:
                raise ValueError(
                    "negative variance in the measurement-dominated branch; "
                    "eta_b is too large for this noise level"
                )
            mean = (1.0 - eta_b) * xt[i] + eta_b * yb[i]
            out[i] = mean + sqrt(var) * z[i]
    return out


def empirical_mean(atoms, log_weights, x, double t):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] a = np.ascontiguousarray(atoms, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] lw = np.ascontiguousarray(log_weights, dtype=np.float64)
    xarr = np.asarray(x, dtype=np.float64)
    single = xarr.ndim == 1
    cdef cnp.ndarray[cnp.float64_t, ndim=2] xb = np.ascontiguousarray(
        xarr[None, :] if single else xarr
    )
    cdef Py_ssize_t nb = xb.shape[0], nj = a.shape[0], nd = a.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.zeros((nb, nd), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] logits = np.empty(nj, dtype=np.float64)
    cdef double inv2t2 = 1.0 / (2.0 * t * t)
    cdef double d, diff, hi, wsum, w
    cdef Py_ssize_t b, j, k

    for b in range(nb):
        hi = -INFINITY
        for j in range(nj):
            d = 0.0
            for k in range(nd):
                diff = xb[b, k] - a[j, k]
                d += diff * diff
            logits[j] = lw[j] - d * inv2t2
            if logits[j] > hi:
                hi = logits[j]
        wsum = 0.0
        for j in range(nj):
            w = exp(logits[j] - hi)
            wsum += w
            for k in range(nd):
                out[b, k] += w * a[j, k]
        for k in range(nd):
            out[b, k] /= wsum
    return out[0] if single else out


def ssim_mean(x, y, window, double c1, double c2):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] xa = np.ascontiguousarray(x, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] ya = np.ascontiguousarray(y, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] w = np.ascontiguousarray(window, dtype=np.float64)
    cdef Py_ssize_t k = w.shape[0]
    cdef Py_ssize_t h = xa.shape[0], wd = xa.shape[1]
    if h < k or wd < k:
        raise ValueError(
            f"image ({h}, {wd}) smaller than window ({k}, {k})"
        )
    cdef Py_ssize_t oh = h - k + 1, ow = wd - k + 1
    cdef double mu_x, mu_y, m_xx, m_yy, m_xy, var_x, var_y, cov
    cdef double wij, xv, yv, num, den, acc = 0.0
    cdef Py_ssize_t i, j, p, q

    for i in range(oh):
        for j in range(ow):
            mu_x = mu_y = m_xx = m_yy = m_xy = 0.0
            for p in range(k):
                for q in range(k):
                    wij = w[p, q]
                    xv = xa[i + p, j + q]
                    yv = ya[i + p, j + q]
                    mu_x += wij * xv
                    mu_y += wij * yv
                    m_xx += wij * xv * xv
                    m_yy += wij * yv * yv
                    m_xy += wij * xv * yv
            var_x = m_xx - mu_x * mu_x
            var_y = m_yy - mu_y * mu_y
            cov = m_xy - mu_x * mu_y
            num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
            den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
            acc += num / den
    return acc / (oh * ow)
