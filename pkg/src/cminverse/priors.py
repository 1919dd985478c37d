"""Signal priors and the consistency functions they induce.

A consistency function maps a noisy latent straight to a clean estimate:
``f(x_t, y, t) -> x_hat``.  The measurement ``y`` may be ignored
(unconditional denoising) or folded in through exact Gaussian
conditioning.  For a Gaussian prior both variants are available in
closed form, which makes the prior usable as a ground-truth reference
for the samplers; the empirical prior gives the same interface over a
finite atom set.

Latents follow the variance-exploding convention x_t = x + t * z with
z ~ N(0, I), so as t -> 0 every denoiser here approaches the identity
on x_t (the fixed-point boundary of a consistency function).
"""

from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from . import kernels


class ConsistencyFn(Protocol):
    def __call__(self, x_t: np.ndarray, y: np.ndarray | None, t: float) -> np.ndarray:
        ...


def operator_matrix(operator) -> np.ndarray:
    """Materialise a linear operator as its dense (m, n) matrix."""
    return np.ascontiguousarray(operator.apply(np.eye(operator.n)).T)


def _check_t(t: float) -> float:
    t = float(t)
    if not t > 0.0 or not np.isfinite(t):
        raise ValueError(f"noise level t must be positive and finite, got {t}")
    return t


@dataclass(frozen=True)
class GaussianPrior:
    """x ~ N(mean, covariance); every conditional is available exactly."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mu = np.ascontiguousarray(self.mean, dtype=np.float64)
        cov = np.ascontiguousarray(self.covariance, dtype=np.float64)
        if mu.ndim != 1:
            raise ValueError("prior mean must be a vector")
        if cov.shape != (mu.size, mu.size):
            raise ValueError(
                f"covariance shape {cov.shape} does not match dimension {mu.size}"
            )
        if not np.allclose(cov, cov.T, atol=1e-10):
            raise ValueError("covariance must be symmetric")
        object.__setattr__(self, "mean", mu)
        object.__setattr__(self, "covariance", (cov + cov.T) / 2.0)

    @property
    def n(self) -> int:
        return self.mean.size

    def sample(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        return rng.multivariate_normal(
            self.mean, self.covariance, size=size, method="svd"
        )

    # --- conditioning on the latent alone -------------------------------
    def denoise(self, x_t: np.ndarray, t: float) -> np.ndarray:
        """E[x | x_t] = mean + Sigma (Sigma + t^2 I)^-1 (x_t - mean)."""
        t = _check_t(t)
        x_t = np.asarray(x_t, dtype=np.float64)
        resid = (x_t - self.mean).reshape(-1, self.n)
        gain = np.linalg.solve(
            self.covariance + t * t * np.eye(self.n), self.covariance
        ).T
        out = self.mean + resid @ gain.T
        return out.reshape(x_t.shape)

    def denoise_cov(self, t: float) -> np.ndarray:
        """Var[x | x_t] = t^2 Sigma (Sigma + t^2 I)^-1 (independent of x_t)."""
        t = _check_t(t)
        gain = np.linalg.solve(self.covariance + t * t * np.eye(self.n), self.covariance).T
        cov = t * t * gain
        return (cov + cov.T) / 2.0

    # --- conditioning on latent and measurement -------------------------
    def _joint_blocks(self, a: np.ndarray, sigma_y: float, t: float):
        n, m = self.n, a.shape[0]
        sig_at = self.covariance @ a.T
        c_xo = np.concatenate([self.covariance, sig_at], axis=1)
        c_oo = np.empty((n + m, n + m))
        c_oo[:n, :n] = self.covariance + t * t * np.eye(n)
        c_oo[:n, n:] = sig_at
        c_oo[n:, :n] = sig_at.T
        c_oo[n:, n:] = a @ sig_at + sigma_y * sigma_y * np.eye(m)
        return c_xo, c_oo

    def joint_denoise(
        self, x_t: np.ndarray, y: np.ndarray, t: float, operator, sigma_y: float
    ) -> np.ndarray:
        """E[x | x_t, y] for y = A x + sigma_y * noise, jointly Gaussian."""
        t = _check_t(t)
        a = operator if isinstance(operator, np.ndarray) else operator_matrix(operator)
        x_t = np.asarray(x_t, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        single = x_t.ndim == 1
        xt2 = x_t.reshape(-1, self.n)
        y2 = np.broadcast_to(y.reshape(-1, a.shape[0]), (xt2.shape[0], a.shape[0]))
        obs = np.concatenate([xt2 - self.mean, y2 - a @ self.mean], axis=1)
        c_xo, c_oo = self._joint_blocks(a, sigma_y, t)
        out = self.mean + (c_xo @ np.linalg.solve(c_oo, obs.T)).T
        return out[0] if single else out

    def joint_denoise_cov(self, t: float, operator, sigma_y: float) -> np.ndarray:
        """Var[x | x_t, y]; like denoise_cov, free of the conditioning point."""
        t = _check_t(t)
        a = operator if isinstance(operator, np.ndarray) else operator_matrix(operator)
        c_xo, c_oo = self._joint_blocks(a, sigma_y, t)
        cov = self.covariance - c_xo @ np.linalg.solve(c_oo, c_xo.T)
        return (cov + cov.T) / 2.0

    # --- conditioning on the measurement alone --------------------------
    def posterior(self, operator, y: np.ndarray, sigma_y: float):
        """Mean and covariance of x | y under y = A x + sigma_y * noise."""
        a = operator if isinstance(operator, np.ndarray) else operator_matrix(operator)
        y = np.asarray(y, dtype=np.float64)
        sig_at = self.covariance @ a.T
        gram = a @ sig_at + sigma_y * sigma_y * np.eye(a.shape[0])
        gain = np.linalg.solve(gram, sig_at.T).T
        mean = self.mean + gain @ (y - a @ self.mean)
        cov = self.covariance - gain @ sig_at.T
        return mean, (cov + cov.T) / 2.0

    # --- consistency-function views -------------------------------------
    def consistency(self) -> ConsistencyFn:
        """Unconditional denoiser in consistency-function form (ignores y).

        Gain matrices are cached per noise level, so repeated calls at the
        handful of levels a sampler visits cost one solve each.
        """
        gains: dict[float, np.ndarray] = {}

        def fn(x_t, y, t):
            t = _check_t(t)
            gain = gains.get(t)
            if gain is None:
                gain = gains.setdefault(
                    t,
                    np.linalg.solve(
                        self.covariance + t * t * np.eye(self.n), self.covariance
                    ).T,
                )
            x_t = np.asarray(x_t, dtype=np.float64)
            resid = (x_t - self.mean).reshape(-1, self.n)
            return (self.mean + resid @ gain.T).reshape(x_t.shape)

        return fn

    def measurement_consistency(self, operator, sigma_y: float) -> ConsistencyFn:
        """Denoiser that conditions on both the latent and the measurement.

        Per-level gains are cached exactly as in consistency().
        """
        a = operator if isinstance(operator, np.ndarray) else operator_matrix(operator)
        m = a.shape[0]
        a_mu = a @ self.mean
        gains: dict[float, np.ndarray] = {}

        def fn(x_t, y, t):
            if y is None:
                raise ValueError("measurement-conditioned denoiser needs y")
            t = _check_t(t)
            gain = gains.get(t)
            if gain is None:
                c_xo, c_oo = self._joint_blocks(a, sigma_y, t)
                gain = gains.setdefault(t, c_xo @ np.linalg.inv(c_oo))
            x_t = np.asarray(x_t, dtype=np.float64)
            y = np.asarray(y, dtype=np.float64)
            single = x_t.ndim == 1
            xt2 = x_t.reshape(-1, self.n)
            y2 = np.broadcast_to(y.reshape(-1, m), (xt2.shape[0], m))
            obs = np.concatenate([xt2 - self.mean, y2 - a_mu], axis=1)
            out = self.mean + obs @ gain.T
            return out[0] if single else out

        return fn


@dataclass(frozen=True)
class EmpiricalPrior:
    """Finite atom set with weights; denoising is a softmax-weighted mean.

    The posterior weight of atom a_j given x_t is proportional to
    w_j * exp(-||x_t - a_j||^2 / (2 t^2)), so the denoised point always
    lies in the convex hull of the atoms.  As t -> 0 it snaps to the
    nearest atom; as t -> inf it approaches the weighted atom mean.
    """

    atoms: np.ndarray
    weights: np.ndarray | None = None
    log_weights: np.ndarray = field(init=False)

    def __post_init__(self):
        atoms = np.ascontiguousarray(self.atoms, dtype=np.float64)
        if atoms.ndim != 2 or atoms.shape[0] < 1:
            raise ValueError("atoms must be a non-empty (count, n) array")
        if self.weights is None:
            w = np.full(atoms.shape[0], 1.0 / atoms.shape[0])
        else:
            w = np.ascontiguousarray(self.weights, dtype=np.float64)
            if w.shape != (atoms.shape[0],):
                raise ValueError("weights must align with the atom count")
            if np.any(w <= 0.0):
                raise ValueError("atom weights must be strictly positive")
            w = w / w.sum()
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "log_weights", np.log(w))

    @property
    def n(self) -> int:
        return self.atoms.shape[1]

    @classmethod
    def from_atoms(cls, atoms, weights=None) -> "EmpiricalPrior":
        return cls(np.asarray(atoms, dtype=np.float64), weights)

    def sample(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        idx = rng.choice(self.atoms.shape[0], size=size, p=self.weights)
        return self.atoms[idx]

    def denoise(self, x_t: np.ndarray, t: float) -> np.ndarray:
        t = _check_t(t)
        x_t = np.asarray(x_t, dtype=np.float64)
        return kernels.empirical_mean(self.atoms, self.log_weights, x_t, t)

    def consistency(self) -> ConsistencyFn:
        def fn(x_t, y, t):
            return self.denoise(x_t, t)

        return fn


def rbf_covariance(shape: tuple[int, int, int], length_scale: float, variance: float = 1.0) -> np.ndarray:
    """Squared-exponential covariance over an image grid, channels independent.

    Entry for pixels p, q (same channel) is
    variance * exp(-||coord_p - coord_q||^2 / (2 length_scale^2)); cross-channel
    blocks are zero.  A small diagonal jitter keeps Cholesky factorisations
    viable despite the fast eigenvalue decay.
    """
    if length_scale <= 0.0 or variance <= 0.0:
        raise ValueError("length_scale and variance must be positive")
    c, h, w = shape
    rr, cc = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    coords = np.stack([rr.ravel(), cc.ravel()], axis=1).astype(np.float64)
    d2 = ((coords[:, None, :] - coords[None, :, :]) ** 2).sum(axis=2)
    block = variance * np.exp(-d2 / (2.0 * length_scale * length_scale))
    n = c * h * w
    cov = np.zeros((n, n))
    for ch in range(c):
        sl = slice(ch * h * w, (ch + 1) * h * w)
        cov[sl, sl] = block
    cov[np.diag_indices_from(cov)] += 1e-10 * variance
    return cov
