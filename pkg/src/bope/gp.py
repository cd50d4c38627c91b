"""Multi-output Gaussian process surrogate for the expensive output function.

One independent GP per objective, each with a Matern-5/2 kernel with
automatic relevance determination. Inputs are min-max normalized to the
unit cube using the problem bounds; each output column is standardized.
Hyperparameters are maximum-likelihood estimates found by multi-restart
L-BFGS over unconstrained log parameters with analytic gradients.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize

from bope.errors import InputError, NumericalError

SQRT5 = np.sqrt(5.0)

# Bounds on positive-space hyperparameters (inputs normalized to [0,1]^d,
# outputs standardized). Kept wide enough for MLE yet ruling out the usual
# degeneracies on tiny data sets.
LENGTHSCALE_BOUNDS = (1e-3, 1e2)
SIGNAL_VAR_BOUNDS = (1e-3, 1e3)
NOISE_VAR_BOUNDS = (1e-8, 1.0)

_JITTER_LEVELS = (0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4)
_DUPLICATE_TOL = 1e-12


# ---------------------------------------------------------------------------
# Data containers
# ---------------------------------------------------------------------------


class ObservationSet:
    """Evaluated designs paired with their observed objective vectors."""

    def __init__(self, dim: int, num_objectives: int):
        self.dim = dim
        self.num_objectives = num_objectives
        self._X: list[np.ndarray] = []
        self._Y: list[np.ndarray] = []

    @classmethod
    def from_arrays(cls, X: np.ndarray, Y: np.ndarray) -> "ObservationSet":
        X, Y = np.atleast_2d(np.asarray(X, float)), np.atleast_2d(np.asarray(Y, float))
        if X.shape[0] != Y.shape[0]:
            raise InputError(f"X has {X.shape[0]} rows, Y has {Y.shape[0]}")
        obs = cls(X.shape[1], Y.shape[1])
        for x, y in zip(X, Y):
            obs.append(x, y)
        return obs

    def append(self, x: np.ndarray, y: np.ndarray) -> None:
        x = np.asarray(x, dtype=float).reshape(-1)
        y = np.asarray(y, dtype=float).reshape(-1)
        if x.shape != (self.dim,):
            raise InputError(f"design has shape {x.shape}, expected ({self.dim},)")
        if y.shape != (self.num_objectives,):
            raise InputError(
                f"output has shape {y.shape}, expected ({self.num_objectives},)"
            )
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise InputError("observation contains non-finite values")
        if self._X and np.min(
            np.max(np.abs(np.asarray(self._X) - x), axis=1)
        ) <= _DUPLICATE_TOL:
            raise InputError(f"duplicate design point {x.tolist()}")
        self._X.append(x)
        self._Y.append(y)

    @property
    def n(self) -> int:
        return len(self._X)

    def __len__(self) -> int:
        return len(self._X)

    @property
    def X(self) -> np.ndarray:
        return np.asarray(self._X, dtype=float).reshape(self.n, self.dim)

    @property
    def Y(self) -> np.ndarray:
        return np.asarray(self._Y, dtype=float).reshape(self.n, self.num_objectives)

    def copy(self) -> "ObservationSet":
        out = ObservationSet(self.dim, self.num_objectives)
        out._X = [x.copy() for x in self._X]
        out._Y = [y.copy() for y in self._Y]
        return out

    def to_dict(self) -> dict:
        return {"X": self.X.tolist(), "Y": self.Y.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "ObservationSet":
        return cls.from_arrays(np.asarray(d["X"]), np.asarray(d["Y"]))


@dataclass(frozen=True)
class GaussianBelief:
    mean: float
    variance: float

    def __post_init__(self):
        if self.variance < 0:
            raise InputError(f"variance must be >= 0, got {self.variance}")

    @property
    def sd(self) -> float:
        return float(np.sqrt(self.variance))


@dataclass
class GpHyperparams:
    """Positive-space hyperparameters of one objective's GP."""

    lengthscales: np.ndarray
    signal_variance: float
    noise_variance: float

    def to_theta(self) -> np.ndarray:
        """Unconstrained (log) parameter vector [log ls..., log sv, log nv]."""
        return np.concatenate(
            [
                np.log(self.lengthscales),
                [np.log(self.signal_variance), np.log(self.noise_variance)],
            ]
        )

    @classmethod
    def from_theta(cls, theta: np.ndarray) -> "GpHyperparams":
        theta = np.asarray(theta, dtype=float)
        return cls(
            lengthscales=np.exp(theta[:-2]),
            signal_variance=float(np.exp(theta[-2])),
            noise_variance=float(np.exp(theta[-1])),
        )

    def to_dict(self) -> dict:
        return {
            "lengthscales": self.lengthscales.tolist(),
            "signal_variance": self.signal_variance,
            "noise_variance": self.noise_variance,
        }


# ---------------------------------------------------------------------------
# Matern-5/2 ARD kernel
# ---------------------------------------------------------------------------


def _scaled_sqdist(A: np.ndarray, B: np.ndarray, lengthscales: np.ndarray) -> np.ndarray:
    As, Bs = A / lengthscales, B / lengthscales
    d2 = (
        np.sum(As**2, axis=1)[:, None]
        + np.sum(Bs**2, axis=1)[None, :]
        - 2 * As @ Bs.T
    )
    return np.maximum(d2, 0.0)


def matern52(A: np.ndarray, B: np.ndarray, params: GpHyperparams) -> np.ndarray:
    r = np.sqrt(_scaled_sqdist(A, B, params.lengthscales))
    return params.signal_variance * (1 + SQRT5 * r + 5 * r**2 / 3) * np.exp(-SQRT5 * r)


def _kernel_and_grads(X: np.ndarray, params: GpHyperparams):
    """Gram matrix of the noise-free kernel plus gradients wrt log params.

    Returns (Kf, grads) where grads[l] = dKf/dlog(lengthscale_l) for
    l < d and grads[d] = dKf/dlog(signal_variance).
    """
    d = X.shape[1]
    ls = params.lengthscales
    r2 = _scaled_sqdist(X, X, ls)
    r = np.sqrt(r2)
    e = np.exp(-SQRT5 * r)
    Kf = params.signal_variance * (1 + SQRT5 * r + 5 * r2 / 3) * e
    # dK/dr = -(5/3) sv * r (1 + sqrt5 r) e; dr/dlog ls_l = -d_l^2 / (ls_l^2 r);
    # the 1/r cancels, leaving the factor below times the per-dim sq distance.
    common = (5.0 / 3.0) * params.signal_variance * (1 + SQRT5 * r) * e
    grads = []
    for l in range(d):
        dl2 = ((X[:, l][:, None] - X[:, l][None, :]) / ls[l]) ** 2
        grads.append(common * dl2)
    grads.append(Kf.copy())  # dK/dlog sv = K
    return Kf, grads


def _chol_with_jitter(K: np.ndarray, context: str):
    scale = float(np.mean(np.diag(K)))
    scale = scale if scale > 0 else 1.0
    for level in _JITTER_LEVELS:
        try:
            L = cholesky(K + level * scale * np.eye(K.shape[0]), lower=True)
            return L, level
        except np.linalg.LinAlgError:
            continue
    raise NumericalError(
        f"{context}: Gram matrix not positive definite after jitter up to "
        f"{_JITTER_LEVELS[-1]} (n={K.shape[0]}, diag mean={scale:.3e})"
    )


# ---------------------------------------------------------------------------
# Marginal likelihood
# ---------------------------------------------------------------------------


def log_marginal_likelihood(theta: np.ndarray, X: np.ndarray, y: np.ndarray):
    """Exact LML of a single-output GP and its gradient wrt log params.

    ``theta`` is the unconstrained vector [log lengthscales..., log signal
    variance, log noise variance]; ``X`` is (n, d) normalized inputs and
    ``y`` a standardized output column.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    n = X.shape[0]
    params = GpHyperparams.from_theta(theta)
    Kf, grads = _kernel_and_grads(X, params)
    K = Kf + params.noise_variance * np.eye(n)
    L, _ = _chol_with_jitter(K, "log_marginal_likelihood")
    alpha = cho_solve((L, True), y)
    lml = (
        -0.5 * float(y @ alpha)
        - float(np.sum(np.log(np.diag(L))))
        - 0.5 * n * np.log(2 * np.pi)
    )
    # dLML/dtheta_i = 0.5 tr((alpha alpha^T - K^-1) dK/dtheta_i)
    Kinv = cho_solve((L, True), np.eye(n))
    W = np.outer(alpha, alpha) - Kinv
    grads.append(params.noise_variance * np.eye(n))  # dK/dlog nv
    grad = np.array([0.5 * float(np.sum(W * G)) for G in grads])
    return lml, grad


def _theta_bounds(d: int) -> list[tuple[float, float]]:
    lb = [np.log(LENGTHSCALE_BOUNDS[0])] * d + [
        np.log(SIGNAL_VAR_BOUNDS[0]),
        np.log(NOISE_VAR_BOUNDS[0]),
    ]
    ub = [np.log(LENGTHSCALE_BOUNDS[1])] * d + [
        np.log(SIGNAL_VAR_BOUNDS[1]),
        np.log(NOISE_VAR_BOUNDS[1]),
    ]
    return list(zip(lb, ub))


# ---------------------------------------------------------------------------
# Fitted model
# ---------------------------------------------------------------------------


@dataclass
class _SingleGp:
    params: GpHyperparams
    Xn: np.ndarray  # normalized training inputs
    ys: np.ndarray  # standardized training targets
    L: np.ndarray  # Cholesky of K = Kf + nv I (+ jitter)
    alpha: np.ndarray  # K^-1 ys
    y_mean: float
    y_scale: float
    jitter: float
    restarts: list = field(default_factory=list)
    final_lml: float = np.nan


class GpSurrogate:
    """Independent per-objective GPs over box-normalized inputs."""

    def __init__(self, bounds: np.ndarray, models: list[_SingleGp]):
        self.bounds = np.asarray(bounds, dtype=float)
        self.models = models

    @property
    def num_objectives(self) -> int:
        return len(self.models)

    @property
    def n(self) -> int:
        return self.models[0].Xn.shape[0]

    def normalize(self, X: np.ndarray) -> np.ndarray:
        low, high = self.bounds[:, 0], self.bounds[:, 1]
        return (np.atleast_2d(np.asarray(X, float)) - low) / (high - low)

    def predict(self, x: np.ndarray) -> list[GaussianBelief]:
        """Posterior beliefs for one design point, in original output units."""
        means, variances = self.predict_batch(np.atleast_2d(x))
        return [
            GaussianBelief(float(m), float(v))
            for m, v in zip(means[0], variances[0])
        ]

    def predict_batch(self, X: np.ndarray):
        """Posterior means and variances at (n, d) designs; shapes (n, k)."""
        Xq = self.normalize(X)
        means = np.empty((Xq.shape[0], self.num_objectives))
        variances = np.empty_like(means)
        for j, m in enumerate(self.models):
            ks = matern52(Xq, m.Xn, m.params)
            mu = ks @ m.alpha
            V = solve_triangular(m.L, ks.T, lower=True)
            var = m.params.signal_variance - np.sum(V**2, axis=0)
            means[:, j] = mu * m.y_scale + m.y_mean
            variances[:, j] = np.maximum(var, 0.0) * m.y_scale**2
        return means, variances

    def sample_posterior(
        self,
        X: np.ndarray,
        n_samples: int,
        seed: int | np.random.Generator,
        base_z: np.ndarray | None = None,
    ) -> np.ndarray:
        """Exact joint latent posterior samples over a candidate set.

        Returns an (n_samples, |X|, k) array in original output units.
        ``base_z``, when given, must have shape (k, n_samples, |X|) and
        replaces the internally drawn standard normals.
        """
        Xq = self.normalize(X)
        p = Xq.shape[0]
        if p < 1:
            raise InputError("candidate set must contain at least one point")
        if base_z is None:
            rng = (
                seed
                if isinstance(seed, np.random.Generator)
                else np.random.default_rng(seed)
            )
            base_z = rng.standard_normal((self.num_objectives, n_samples, p))
        out = np.empty((n_samples, p, self.num_objectives))
        for j, m in enumerate(self.models):
            ks = matern52(Xq, m.Xn, m.params)
            mu = ks @ m.alpha
            V = solve_triangular(m.L, ks.T, lower=True)
            cov = matern52(Xq, Xq, m.params) - V.T @ V
            Lp, _ = _chol_with_jitter(cov, "sample_posterior")
            draws = mu[None, :] + base_z[j] @ Lp.T
            out[:, :, j] = draws * m.y_scale + m.y_mean
        return out

    def hyperparams_dict(self) -> list[dict]:
        return [m.params.to_dict() for m in self.models]

    def fit_diagnostics(self) -> list[dict]:
        return [
            {"restarts": m.restarts, "final_lml": m.final_lml, "jitter": m.jitter}
            for m in self.models
        ]


def _fit_single(
    Xn: np.ndarray, y: np.ndarray, rng: np.random.Generator, n_restarts: int
):
    n, d = Xn.shape
    y_mean = float(np.mean(y))
    y_scale = float(np.std(y))
    if y_scale < 1e-12:
        y_scale = 1.0  # constant column: leave values centered at zero
    ys = (y - y_mean) / y_scale

    bounds = _theta_bounds(d)
    starts = [np.concatenate([np.full(d, np.log(0.5)), [0.0, np.log(1e-3)]])]
    for _ in range(n_restarts - 1):
        starts.append(
            np.concatenate(
                [
                    rng.uniform(np.log(0.1), np.log(1.0), size=d),
                    [rng.uniform(np.log(0.2), np.log(5.0))],
                    [rng.uniform(np.log(1e-6), np.log(1e-2))],
                ]
            )
        )

    def objective(theta):
        val, grad = log_marginal_likelihood(theta, Xn, ys)
        return -val, -grad

    best_theta, best_lml = None, -np.inf
    restarts = []
    for theta0 in starts:
        init_lml, _ = log_marginal_likelihood(theta0, Xn, ys)
        res = minimize(objective, theta0, jac=True, method="L-BFGS-B", bounds=bounds)
        final = -res.fun if np.isfinite(res.fun) else -np.inf
        restarts.append(
            {
                "init_theta": theta0.tolist(),
                "init_lml": init_lml,
                "final_lml": final,
            }
        )
        if final > best_lml:
            best_lml, best_theta = final, res.x
    if best_theta is None:
        raise NumericalError("GP fit failed: no restart converged")

    params = GpHyperparams.from_theta(best_theta)
    Kf, _ = _kernel_and_grads(Xn, params)
    K = Kf + params.noise_variance * np.eye(n)
    L, jitter = _chol_with_jitter(K, "fit")
    alpha = cho_solve((L, True), ys)
    return _SingleGp(
        params=params,
        Xn=Xn,
        ys=ys,
        L=L,
        alpha=alpha,
        y_mean=y_mean,
        y_scale=y_scale,
        jitter=jitter,
        restarts=restarts,
        final_lml=best_lml,
    )


def fit(
    data: ObservationSet,
    bounds: np.ndarray,
    seed: int | np.random.Generator,
    n_restarts: int = 5,
) -> GpSurrogate:
    """Fit one Matern-5/2 ARD GP per objective by multi-restart MLE."""
    if data.n < 2:
        raise InputError(f"need at least 2 observations to fit a GP, got {data.n}")
    bounds = np.asarray(bounds, dtype=float)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    low, high = bounds[:, 0], bounds[:, 1]
    Xn = (data.X - low) / (high - low)
    models = [
        _fit_single(Xn, data.Y[:, j], rng, n_restarts)
        for j in range(data.num_objectives)
    ]
    return GpSurrogate(bounds=bounds, models=models)
