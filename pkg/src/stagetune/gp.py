"""Gaussian-process regression surrogate.

Exact GP conditioning with an ARD squared-exponential kernel on inputs
normalized to the unit box.  Targets are mean-centered internally (zero
prior mean on the centered values) and the center is restored on
prediction.  Hyperparameters are fitted by maximizing the log marginal
likelihood with a multistart coordinate-descent line search in log-space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.stats import qmc

__all__ = [
    "GpNumericsError",
    "SquaredExponentialKernel",
    "GpModel",
    "condition",
    "posterior",
    "posterior_batch",
    "log_marginal_likelihood",
    "GpFitBounds",
    "fit_hyperparameters",
]

# On Cholesky failure the diagonal jitter escalates through this ladder.
JITTER_LADDER = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4)
NOISE_FLOOR = 1e-8


class GpNumericsError(RuntimeError):
    """Cholesky factorization failed even at the largest jitter."""


@dataclass(frozen=True)
class SquaredExponentialKernel:
    """ARD squared exponential: k(a, b) = s2 * exp(-0.5 * sum((a-b)^2 / l^2))."""

    lengthscales: np.ndarray
    signal_variance: float

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        if np.any(ls <= 0) or self.signal_variance <= 0:
            raise ValueError("kernel hyperparameters must be strictly positive")
        object.__setattr__(self, "lengthscales", ls)

    @property
    def dim(self) -> int:
        return self.lengthscales.shape[0]

    def matrix(self, a: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
        a = np.atleast_2d(np.asarray(a, dtype=float)) / self.lengthscales
        if b is None:
            b = a
        else:
            b = np.atleast_2d(np.asarray(b, dtype=float)) / self.lengthscales
        sq = np.sum(a * a, axis=1)[:, None] + np.sum(b * b, axis=1)[None, :] - 2.0 * (a @ b.T)
        np.maximum(sq, 0.0, out=sq)
        return self.signal_variance * np.exp(-0.5 * sq)


@dataclass(frozen=True)
class GpModel:
    """Conditioned GP: training set, Cholesky factor and precomputed solve."""

    kernel: SquaredExponentialKernel
    noise_variance: float
    X: np.ndarray
    y: np.ndarray
    center: float
    L: np.ndarray | None
    alpha: np.ndarray | None
    jitter: float = 0.0

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @classmethod
    def empty(cls, kernel: SquaredExponentialKernel, noise_variance: float) -> "GpModel":
        return cls(
            kernel=kernel,
            noise_variance=float(noise_variance),
            X=np.zeros((0, kernel.dim)),
            y=np.zeros(0),
            center=0.0,
            L=None,
            alpha=None,
        )


def condition(kernel: SquaredExponentialKernel, noise_variance: float, X, y) -> GpModel:
    """Factor (K + sigma^2 I) and precompute the target solve.

    Jitter escalates through ``JITTER_LADDER`` if the factorization fails;
    raises :class:`GpNumericsError` after the last rung.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.shape[0]:
        raise ValueError("inputs and targets disagree in length")
    if noise_variance <= 0:
        raise ValueError("noise variance must be positive")
    if X.shape[0] == 0:
        return GpModel.empty(kernel, noise_variance)

    center = float(np.mean(y))
    centered = y - center
    K = kernel.matrix(X)
    n = X.shape[0]
    for jitter in JITTER_LADDER:
        try:
            L = cholesky(K + (noise_variance + jitter) * np.eye(n), lower=True)
        except np.linalg.LinAlgError:
            continue
        alpha = cho_solve((L, True), centered)
        return GpModel(
            kernel=kernel,
            noise_variance=float(noise_variance),
            X=X,
            y=y,
            center=center,
            L=L,
            alpha=alpha,
            jitter=jitter,
        )
    raise GpNumericsError("Cholesky failed at every jitter level")


def posterior_batch(model: GpModel, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and variance at many points; variance clamped to [0, s2]."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    s2 = model.kernel.signal_variance
    if model.n == 0:
        m = points.shape[0]
        return np.full(m, model.center), np.full(m, s2)
    k_star = model.kernel.matrix(model.X, points)
    means = model.center + k_star.T @ model.alpha
    v = solve_triangular(model.L, k_star, lower=True)
    variances = s2 - np.einsum("ij,ij->j", v, v)
    np.clip(variances, 0.0, s2, out=variances)
    return means, variances


def posterior(model: GpModel, xi: np.ndarray) -> tuple[float, float]:
    """Posterior mean and variance at a single point."""
    means, variances = posterior_batch(model, np.asarray(xi, dtype=float)[None, :])
    return float(means[0]), float(variances[0])


def log_marginal_likelihood(model: GpModel) -> float:
    """-0.5 l^T alpha - sum(log L_ii) - (n/2) log(2 pi) on the centered targets."""
    if model.n == 0:
        raise ValueError("model has no data")
    centered = model.y - model.center
    return float(
        -0.5 * centered @ model.alpha
        - np.sum(np.log(np.diag(model.L)))
        - 0.5 * model.n * math.log(2.0 * math.pi)
    )


@dataclass(frozen=True)
class GpFitBounds:
    """Search box for (lengthscales, signal variance, noise variance)."""

    lengthscale: tuple[float, float] = (0.02, 10.0)
    signal_variance: tuple[float, float] = (1e-6, 1e6)
    noise_variance: tuple[float, float] = (NOISE_FLOOR, 1e2)

    def __post_init__(self):
        for lo, hi in (self.lengthscale, self.signal_variance, self.noise_variance):
            if not (0 < lo <= hi):
                raise ValueError("bounds must satisfy 0 < lo <= hi")
        if self.noise_variance[0] < NOISE_FLOOR:
            raise ValueError(f"noise variance is floored at {NOISE_FLOOR:g}")


def _golden_max(f, lo: float, hi: float, evals: int) -> tuple[float, float]:
    """Golden-section maximization of ``f`` on [lo, hi]; returns (x, f(x))."""
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = f(c), f(d)
    best_x, best_f = (c, fc) if fc >= fd else (d, fd)
    for _ in range(max(evals - 2, 0)):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = f(c)
            if fc > best_f:
                best_x, best_f = c, fc
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = f(d)
            if fd > best_f:
                best_x, best_f = d, fd
    return best_x, best_f


class _FitWorkspace:
    """Cached per-dimension squared differences for fast LML evaluations."""

    def __init__(self, X: np.ndarray, y: np.ndarray):
        self.n, self.d = X.shape
        diff = X[:, None, :] - X[None, :, :]
        self.sq = np.moveaxis(diff * diff, -1, 0)  # (d, n, n)
        self.centered = y - float(np.mean(y))
        self.eye = np.eye(self.n)

    def lml(self, theta: np.ndarray) -> float:
        """theta = [log l_1..d, log s2, log noise]; -inf if not factorizable."""
        inv_l2 = np.exp(-2.0 * theta[: self.d])
        s2 = math.exp(theta[self.d])
        noise = math.exp(theta[self.d + 1])
        K = s2 * np.exp(-0.5 * np.tensordot(inv_l2, self.sq, axes=1))
        K += noise * self.eye
        try:
            L = cholesky(K, lower=True)
        except np.linalg.LinAlgError:
            return -math.inf
        alpha = cho_solve((L, True), self.centered)
        return float(
            -0.5 * self.centered @ alpha
            - np.sum(np.log(np.diag(L)))
            - 0.5 * self.n * math.log(2.0 * math.pi)
        )


def fit_hyperparameters(
    X,
    y,
    bounds: GpFitBounds | None = None,
    seed: int = 0,
    n_starts: int = 8,
    passes: int = 2,
    line_evals: int = 12,
    warm_starts: tuple = (),
) -> GpModel:
    """Maximize the log marginal likelihood and return the conditioned model.

    Multistart coordinate descent: ``n_starts`` starting points from a
    scrambled low-discrepancy (Sobol) set over the log-space box, each
    refined by coordinate-wise golden-section line searches; extra
    ``warm_starts`` (kernel, noise) pairs may be supplied.  The noise
    variance is floored at ``NOISE_FLOOR``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] < 2:
        raise ValueError("hyperparameter fitting needs at least 2 observations")
    bounds = bounds or GpFitBounds()
    n, d = X.shape

    log_lo = np.array([math.log(bounds.lengthscale[0])] * d
                      + [math.log(bounds.signal_variance[0]), math.log(bounds.noise_variance[0])])
    log_hi = np.array([math.log(bounds.lengthscale[1])] * d
                      + [math.log(bounds.signal_variance[1]), math.log(bounds.noise_variance[1])])

    ws = _FitWorkspace(X, y)
    sobol = qmc.Sobol(d=d + 2, scramble=True, seed=seed)
    starts = [log_lo + s * (log_hi - log_lo) for s in sobol.random(n_starts)]
    for kernel, noise in warm_starts:
        theta = np.concatenate([
            np.log(kernel.lengthscales), [math.log(kernel.signal_variance)], [math.log(noise)],
        ])
        starts.append(np.clip(theta, log_lo, log_hi))

    best_theta = None
    best_val = -math.inf
    for theta0 in starts:
        theta = theta0.copy()
        val = ws.lml(theta)
        for _ in range(passes):
            for coord in range(d + 2):
                def along(v, _theta=theta, _coord=coord):
                    t = _theta.copy()
                    t[_coord] = v
                    return ws.lml(t)

                x_best, f_best = _golden_max(along, log_lo[coord], log_hi[coord], line_evals)
                if f_best > val:
                    theta[coord] = x_best
                    val = f_best
        if val > best_val:
            best_val = val
            best_theta = theta

    if best_theta is None or not math.isfinite(best_val):
        raise GpNumericsError("every hyperparameter start failed to factorize")

    kernel = SquaredExponentialKernel(
        lengthscales=np.exp(best_theta[:d]),
        signal_variance=math.exp(best_theta[d]),
    )
    noise = max(math.exp(best_theta[d + 1]), NOISE_FLOOR)
    return condition(kernel, noise, X, y)
