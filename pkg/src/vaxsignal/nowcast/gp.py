"""Zero-mean Gaussian process regression with a sum of Matern(3/2) kernels."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize

from ..errors import NotPositiveDefinite, TooShort

SQRT3 = math.sqrt(3.0)
_JITTERS = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4)


def matern32(r, l: float, sigma2: float):
    """``sigma2 * (1 + sqrt(3) r / l) * exp(-sqrt(3) r / l)``; works elementwise."""
    a = SQRT3 * np.asarray(r, dtype=float) / l
    return sigma2 * (1.0 + a) * np.exp(-a)


def _as_inputs(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ValueError("inputs must be a vector or an (n, d) matrix")
    return x


def distances(a, b) -> np.ndarray:
    a, b = _as_inputs(a), _as_inputs(b)
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


@dataclass(frozen=True)
class MaternComponent:
    length_scale: float
    variance: float

    def __post_init__(self):
        if not (self.length_scale > 0 and self.variance > 0):
            raise ValueError("length scale and variance must be positive")


def gram(r: np.ndarray, kernels) -> np.ndarray:
    K = np.zeros_like(r)
    for c in kernels:
        K += matern32(r, c.length_scale, c.variance)
    return K


def _cholesky(K):
    """Lower Cholesky factor, adding diagonal jitter relative to the mean diagonal if needed."""
    scale = float(np.mean(np.diag(K))) or 1.0
    for j in _JITTERS:
        try:
            A = K + (j * scale) * np.eye(len(K)) if j else K
            return cholesky(A, lower=True), j * scale
        except np.linalg.LinAlgError:
            continue
    raise NotPositiveDefinite("kernel matrix is not positive definite even with jitter")


def log_marginal_likelihood(x, y, kernels, noise_variance: float) -> float:
    """``log p(y | x)`` under the zero-mean GP prior."""
    y = np.asarray(y, dtype=float)
    K = gram(distances(x, x), kernels) + noise_variance * np.eye(len(y))
    L, _ = _cholesky(K)
    alpha = cho_solve((L, True), y)
    return float(-0.5 * y @ alpha - np.log(np.diag(L)).sum() - 0.5 * len(y) * math.log(2 * math.pi))


def _neg_lml_and_grad(theta, r, y, n_kernels, fixed_noise):
    """Negative log marginal likelihood and its gradient in log-parameter space.

    ``theta`` holds ``(log l_i, log sigma2_i)`` per kernel, then ``log sigma_n^2``
    unless the noise is fixed.
    """
    n = len(y)
    K = np.zeros_like(r)
    parts = []
    for i in range(n_kernels):
        l = math.exp(theta[2 * i])
        s2 = math.exp(theta[2 * i + 1])
        a = SQRT3 * r / l
        e = np.exp(-a)
        k = s2 * (1.0 + a) * e
        K += k
        parts.append((k, s2 * a * a * e))
    noise = fixed_noise if fixed_noise is not None else math.exp(theta[-1])
    K[np.diag_indices(n)] += noise
    try:
        L = cholesky(K, lower=True)
    except np.linalg.LinAlgError:
        return 1e25, np.zeros_like(theta)
    alpha = cho_solve((L, True), y)
    nll = 0.5 * y @ alpha + np.log(np.diag(L)).sum() + 0.5 * n * math.log(2 * math.pi)
    Kinv = cho_solve((L, True), np.eye(n))
    W = np.outer(alpha, alpha) - Kinv
    grad = np.empty_like(theta)
    for i, (k, dk_dlogl) in enumerate(parts):
        grad[2 * i] = -0.5 * np.sum(W * dk_dlogl)
        grad[2 * i + 1] = -0.5 * np.sum(W * k)
    if fixed_noise is None:
        grad[-1] = -0.5 * noise * np.trace(W)
    return float(nll), grad


@dataclass(frozen=True)
class GPModel:
    kernels: tuple
    noise_variance: float
    x_train: np.ndarray = field(repr=False)
    y_train: np.ndarray = field(repr=False)
    log_marginal_likelihood: float = math.nan
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.noise_variance < 0:
            raise ValueError("noise variance must be >= 0")

    @property
    def prior_variance(self) -> float:
        return float(sum(c.variance for c in self.kernels))

    def to_dict(self):
        return {
            "family": "gp",
            "kernels": [{"length_scale": c.length_scale, "variance": c.variance} for c in self.kernels],
            "noise_variance": self.noise_variance,
            "log_marginal_likelihood": self.log_marginal_likelihood,
            "x_train": self.x_train.tolist(),
            "y_train": self.y_train.tolist(),
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_dict(cls, d) -> "GPModel":
        return cls(tuple(MaternComponent(k["length_scale"], k["variance"]) for k in d["kernels"]),
                   float(d["noise_variance"]), _as_inputs(d["x_train"]), np.asarray(d["y_train"], dtype=float),
                   d.get("log_marginal_likelihood", math.nan), d.get("diagnostics", {}))


def _bounds(x, y, n_kernels, fixed_noise):
    r = distances(x, x)
    pos = r[r > 0]
    span = float(pos.max()) if pos.size else 1.0
    step = float(pos.min()) if pos.size else 1.0
    s = float(np.mean(y * y)) or 1.0
    kb = [(math.log(step * 1e-2), math.log(span * 1e3)), (math.log(s * 1e-8), math.log(s * 1e4))]
    bounds = kb * n_kernels
    if fixed_noise is None:
        bounds.append((math.log(s * 1e-10), math.log(s * 10.0)))
    return bounds


def gp_fit(x, y, n_kernels: int = 1, *, seed: int = 0, n_starts: int = 8,
           noise_variance: float | None = None) -> GPModel:
    """Fit kernel hyperparameters by maximizing the log marginal likelihood.

    Parameters
    ----------
    x : array_like
        Inputs, shape ``(n,)`` or ``(n, d)``.
    y : array_like
        Targets, shape ``(n,)``. No mean is removed.
    n_kernels : int
        Number of summed Matern(3/2) components.
    seed, n_starts
        Restarts of L-BFGS-B in log space, drawn uniformly inside the
        bounds from independent child seeds. Restart 0 starts from a
        data-driven default.
    noise_variance
        Fix the noise variance (0 allowed) instead of estimating it.
    """
    x = _as_inputs(x)
    y = np.asarray(y, dtype=float)
    n = len(y)
    if n < 3:
        raise TooShort(f"need at least 3 points, got {n}")
    if x.shape[0] != n:
        raise ValueError("x and y lengths differ")
    if n_kernels < 1:
        raise ValueError("n_kernels must be >= 1")
    r = distances(x, x)
    bounds = _bounds(x, y, n_kernels, noise_variance)
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    s = float(np.mean(y * y)) or 1.0
    span = float(r.max()) or 1.0
    default = []
    for i in range(n_kernels):
        default += [math.log(span / (4.0 * (i + 1))), math.log(s / n_kernels)]
    if noise_variance is None:
        default.append(math.log(s * 0.1))
    starts = [np.clip(np.array(default), lo, hi)]
    for child in np.random.SeedSequence(seed).spawn(max(n_starts - 1, 0)):
        starts.append(np.random.default_rng(child).uniform(lo, hi))
    best = None
    runs = []
    for i, th0 in enumerate(starts):
        res = minimize(_neg_lml_and_grad, th0, args=(r, y, n_kernels, noise_variance),
                       jac=True, method="L-BFGS-B", bounds=bounds)
        runs.append({"start": i, "nll": float(res.fun), "converged": bool(res.success)})
        if best is None or res.fun < best.fun:
            best = res
    if best is None or best.fun >= 1e24:
        raise NotPositiveDefinite("no restart produced a positive definite kernel matrix")
    th = best.x
    kernels = [MaternComponent(math.exp(th[2 * i]), math.exp(th[2 * i + 1])) for i in range(n_kernels)]
    # longer length scales first keeps reports stable across restarts
    kernels.sort(key=lambda c: -c.length_scale)
    noise = noise_variance if noise_variance is not None else math.exp(th[-1])
    return GPModel(tuple(kernels), float(noise), x, y, float(-best.fun),
                   {"restarts": runs, "seed": seed, "n_starts": n_starts})


def gp_predict(model: GPModel, x_star, *, include_noise: bool = False):
    """Posterior mean and variance of the latent function at ``x_star``."""
    xs = _as_inputs(x_star)
    K = gram(distances(model.x_train, model.x_train), model.kernels)
    K[np.diag_indices_from(K)] += model.noise_variance
    L, _ = _cholesky(K)
    Ks = gram(distances(model.x_train, xs), model.kernels)
    alpha = cho_solve((L, True), model.y_train)
    mean = Ks.T @ alpha
    v = solve_triangular(L, Ks, lower=True)
    var = model.prior_variance - np.einsum("ij,ij->j", v, v)
    var = np.clip(var, 0.0, model.prior_variance)
    if include_noise:
        var = var + model.noise_variance
    return mean, var
