"""Acquisition functions for both stages of the optimization loop.

Experimentation stage: a Monte Carlo estimate of expected improvement of
the utility of the best option under joint uncertainty in the output GP
and the utility ensemble, maximized by Sobol seeding plus multi-start
bounded quasi-Newton refinement.

Preference-exploration stage: the expected utility of the better option
of a candidate output pair, either averaging member-wise maxima (eubo)
or treating the two ensemble beliefs as independent Gaussians with a
closed-form expected maximum (ieubo, the default).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.optimize import minimize
from scipy.special import ndtr
from scipy.stats import qmc

from bope.errors import ConfigError, InputError, StateError
from bope.gp import GpSurrogate, ObservationSet, _chol_with_jitter, matern52
from bope.problems import UtilityFunction
from bope.utility_ensemble import ComparisonSet

IEUBO = "ieubo"
EUBO = "eubo"

_INV_SQRT_2PI = 1.0 / np.sqrt(2 * np.pi)


@dataclass(frozen=True)
class AcquisitionConfig:
    n_posterior_samples: int = 32  # GP posterior sample count N
    raw_samples: int = 256
    restarts: int = 12
    q: int = 1
    pair_criterion: str = IEUBO
    exclude_asked_pairs: bool = True

    def __post_init__(self):
        if self.n_posterior_samples < 1:
            raise ConfigError("acquisition.n_posterior_samples must be >= 1")
        if self.restarts > self.raw_samples:
            raise ConfigError(
                f"acquisition.restarts ({self.restarts}) must be <= "
                f"raw_samples ({self.raw_samples})"
            )
        if self.q != 1:
            raise ConfigError("acquisition.q: only q=1 is supported")
        if self.pair_criterion not in (IEUBO, EUBO):
            raise ConfigError(
                f"acquisition.pair_criterion must be '{IEUBO}' or '{EUBO}'"
            )

    def to_dict(self) -> dict:
        return {
            "n_posterior_samples": self.n_posterior_samples,
            "raw_samples": self.raw_samples,
            "restarts": self.restarts,
            "q": self.q,
            "pair_criterion": self.pair_criterion,
            "exclude_asked_pairs": self.exclude_asked_pairs,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AcquisitionConfig":
        return cls(**d)


# ---------------------------------------------------------------------------
# Closed-form expected maximum of two independent Gaussians
# ---------------------------------------------------------------------------


def expected_max_gaussian(m1, s1, m2, s2):
    """E[max(X, Y)] for independent X~N(m1, s1^2), Y~N(m2, s2^2).

    Equals m1*Phi(a) + m2*Phi(-a) + s3*phi(a) with s3 = sqrt(s1^2 + s2^2)
    and a = (m1 - m2)/s3; degenerates to max(m1, m2) when s3 = 0.
    Vectorizes over array inputs. Phi is evaluated through the
    complementary error function, which stays accurate for |a| > 8.
    """
    m1, s1 = np.asarray(m1, float), np.asarray(s1, float)
    m2, s2 = np.asarray(m2, float), np.asarray(s2, float)
    if np.any(s1 < 0) or np.any(s2 < 0):
        raise InputError("standard deviations must be non-negative")
    s3 = np.sqrt(s1**2 + s2**2)
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(s3 > 0, (m1 - m2) / np.where(s3 > 0, s3, 1.0), 0.0)
    phi = np.exp(-0.5 * a**2) * _INV_SQRT_2PI
    val = m1 * ndtr(a) + m2 * ndtr(-a) + s3 * phi
    val = np.where(s3 > 0, val, np.maximum(m1, m2))
    return val if val.ndim else float(val)


# ---------------------------------------------------------------------------
# Utility samplers (ensemble members or an exact utility)
# ---------------------------------------------------------------------------


class ExactUtility:
    """Adapter exposing a known true utility as a single-sample model."""

    def __init__(self, utility: UtilityFunction):
        self.utility = utility

    @property
    def size(self) -> int:
        return 1

    def member_scores(self, Y: np.ndarray) -> np.ndarray:
        return self.utility.value_batch(np.atleast_2d(Y))[None, :]

    def belief_batch(self, Y: np.ndarray):
        v = self.utility.value_batch(np.atleast_2d(Y))
        return v, np.zeros_like(v)


# ---------------------------------------------------------------------------
# Joint posterior sampling with common random numbers
# ---------------------------------------------------------------------------


class JointSampler:
    """Joint GP posterior samples over the observed designs plus one
    moving candidate, sharing base normal draws across candidates.

    Sampling order matches a Cholesky factorization of the joint posterior
    covariance with the observed block leading (base draws are aligned to
    design points in lexicographic order, so the estimate is invariant to
    the storage order of observations).
    """

    def __init__(self, gp: GpSurrogate, data: ObservationSet, n_samples: int, seed):
        self.gp = gp
        self.n_samples = n_samples
        order = np.lexsort(data.X.T[::-1])
        self.S_orig = data.X[order]
        Sn = gp.normalize(self.S_orig)
        k = gp.num_objectives
        n = Sn.shape[0]
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        self._z_obs = rng.standard_normal((k, n_samples, n))
        self._z_cand = rng.standard_normal((k, n_samples))

        self._per_obj = []
        obs_samples = np.empty((n_samples, n, k))
        for j, m in enumerate(gp.models):
            ks = matern52(Sn, m.Xn, m.params)  # here S spans the training set
            mu_S = ks @ m.alpha
            V = solve_triangular(m.L, ks.T, lower=True)
            cov_SS = matern52(Sn, Sn, m.params) - V.T @ V
            L_S, _ = _chol_with_jitter(cov_SS, "JointSampler")
            T_S = cho_solve((m.L, True), ks.T)  # K^-1 Kf(X, S)
            f_std = mu_S[None, :] + self._z_obs[j] @ L_S.T
            obs_samples[:, :, j] = f_std * m.y_scale + m.y_mean
            self._per_obj.append({"mu_S": mu_S, "L_S": L_S, "T_S": T_S, "model": m})
        self.Sn = Sn
        self.observed_samples = obs_samples  # (N, n, k), original units

    def candidate_samples(self, X_cand: np.ndarray) -> np.ndarray:
        """Samples of f at candidates, jointly consistent with the observed
        block. X_cand is (R, d); returns (N, R, k) in original units."""
        Xc = self.gp.normalize(X_cand)
        R = Xc.shape[0]
        out = np.empty((self.n_samples, R, self.gp.num_objectives))
        for j, ob in enumerate(self._per_obj):
            m = ob["model"]
            kx = matern52(Xc, m.Xn, m.params)  # (R, n)
            t = cho_solve((m.L, True), kx.T)  # (n, R)
            mu_x = kx @ m.alpha  # (R,)
            c = matern52(Xc, self.Sn, m.params) - kx @ ob["T_S"]  # (R, n)
            v = np.maximum(m.params.signal_variance - np.sum(kx.T * t, axis=0), 0.0)
            W = solve_triangular(ob["L_S"], c.T, lower=True)  # (n, R)
            cond_mean = mu_x[None, :] + self._z_obs[j] @ W  # (N, R)
            cond_sd = np.sqrt(np.maximum(v - np.sum(W**2, axis=0), 0.0))
            f_std = cond_mean + cond_sd[None, :] * self._z_cand[j][:, None]
            out[:, :, j] = f_std * m.y_scale + m.y_mean
        return out

    def union_base_z(self) -> np.ndarray:
        """Base draws arranged for sampling over [observed..., candidate]."""
        return np.concatenate([self._z_obs, self._z_cand[:, :, None]], axis=2)


class QneiuuEvaluator:
    """Reusable evaluator with fixed base samples for one optimization."""

    def __init__(
        self,
        gp: GpSurrogate,
        util,
        data: ObservationSet,
        cfg: AcquisitionConfig,
        seed,
    ):
        self.sampler = JointSampler(gp, data, cfg.n_posterior_samples, seed)
        self.util = util
        N, n, k = self.sampler.observed_samples.shape
        flat = self.sampler.observed_samples.reshape(N * n, k)
        scores = util.member_scores(flat)  # (M, N*n)
        self.incumbent_best = scores.reshape(-1, N, n).max(axis=2)  # (M, N)
        self.last_candidate_samples: np.ndarray | None = None

    def batch(self, X_cand: np.ndarray) -> np.ndarray:
        """Acquisition values for an (R, d) batch of single-point candidates."""
        X_cand = np.atleast_2d(np.asarray(X_cand, float))
        f = self.sampler.candidate_samples(X_cand)  # (N, R, k)
        self.last_candidate_samples = f
        N, R, k = f.shape
        scores = self.util.member_scores(f.reshape(N * R, k))  # (M, N*R)
        imp = scores.reshape(-1, N, R) - self.incumbent_best[:, :, None]
        return np.maximum(imp, 0.0).mean(axis=(0, 1))

    def __call__(self, x: np.ndarray) -> float:
        return float(self.batch(np.atleast_2d(x))[0])


def qneiuu(
    X_cand: np.ndarray,
    gp: GpSurrogate,
    util,
    data: ObservationSet,
    cfg: AcquisitionConfig,
    seed,
) -> float:
    """Monte Carlo expected improvement of best-option utility at X_cand.

    Averages {max_j_util over the candidate batch minus the incumbent
    maximum}+ over all (utility sample, GP posterior sample) combinations,
    deterministic given the seed.
    """
    X_cand = np.atleast_2d(np.asarray(X_cand, float))
    if X_cand.shape[0] != cfg.q:
        raise InputError(f"expected q={cfg.q} candidate(s), got {X_cand.shape[0]}")
    return QneiuuEvaluator(gp, util, data, cfg, seed)(X_cand)


@dataclass
class AcquisitionResult:
    x: np.ndarray
    value: float
    refinement_failed: bool = False
    duplicate_avoided: bool = False


def optimize_qneiuu(
    gp: GpSurrogate,
    util,
    data: ObservationSet,
    bounds: np.ndarray,
    cfg: AcquisitionConfig,
    seed: int,
) -> AcquisitionResult:
    """Sobol-seeded multi-start quasi-Newton maximization of the
    experimentation acquisition within the design box."""
    bounds = np.asarray(bounds, dtype=float)
    d = bounds.shape[0]
    low, high = bounds[:, 0], bounds[:, 1]
    ss = np.random.SeedSequence(seed)
    sobol_seed, sample_seed = ss.spawn(2)
    sampler = qmc.Sobol(d=d, scramble=True, seed=np.random.default_rng(sobol_seed))
    X_raw = low + sampler.random(cfg.raw_samples) * (high - low)

    evaluator = QneiuuEvaluator(gp, util, data, cfg, np.random.default_rng(sample_seed))
    raw_vals = evaluator.batch(X_raw)
    top = np.argsort(raw_vals)[::-1][: cfg.restarts]

    candidates = [(X_raw[i], float(raw_vals[i])) for i in top]
    refinement_failed = True
    for i in top:
        res = minimize(
            lambda x: -evaluator(x),
            X_raw[i],
            method="L-BFGS-B",
            bounds=bounds,
            options={"maxiter": 40},
        )
        if np.isfinite(res.fun):
            refinement_failed = False
            x_ref = np.clip(res.x, low, high)
            candidates.append((x_ref, float(-res.fun)))

    # Never accept a refined point worse than the best raw sample, and do
    # not re-propose an already-evaluated design.
    candidates.sort(key=lambda c: c[1], reverse=True)
    duplicate_avoided = False
    for x, value in candidates:
        if data.n and np.min(np.max(np.abs(data.X - x), axis=1)) <= 1e-12:
            duplicate_avoided = True
            continue
        return AcquisitionResult(
            x=x,
            value=value,
            refinement_failed=refinement_failed,
            duplicate_avoided=duplicate_avoided,
        )
    # Everything duplicates an incumbent (degenerate); return best raw point.
    return AcquisitionResult(
        x=candidates[0][0],
        value=candidates[0][1],
        refinement_failed=refinement_failed,
        duplicate_avoided=True,
    )


# ---------------------------------------------------------------------------
# Preference-exploration criteria over observed output pairs
# ---------------------------------------------------------------------------


def ieubo(y1: np.ndarray, y2: np.ndarray, util) -> float:
    """Expected best-option utility with the two beliefs independent."""
    means, variances = util.belief_batch(np.vstack([y1, y2]))
    sd = np.sqrt(variances)
    return float(expected_max_gaussian(means[0], sd[0], means[1], sd[1]))


def eubo_observed(y1: np.ndarray, y2: np.ndarray, util) -> float:
    """Average over utility samples of the member-wise better option."""
    scores = util.member_scores(np.vstack([y1, y2]))
    return float(np.maximum(scores[:, 0], scores[:, 1]).mean())


def pair_fingerprint(y1: np.ndarray, y2: np.ndarray) -> frozenset:
    return frozenset(
        (np.asarray(y1, float).tobytes(), np.asarray(y2, float).tobytes())
    )


@dataclass
class PairChoice:
    i: int
    j: int
    y1: np.ndarray
    y2: np.ndarray
    value: float
    fallback_used: bool = False


def select_pair(
    data: ObservationSet,
    util,
    history: ComparisonSet,
    cfg: AcquisitionConfig,
) -> PairChoice:
    """Exhaustive argmax of the configured criterion over all unordered
    pairs of distinct observed outputs; deterministic lexicographic
    tie-break. Already-asked pairs are skipped (when configured) unless
    every pair has been asked, in which case selection falls back to the
    unrestricted argmax."""
    if data.n < 2:
        raise StateError(f"pair selection needs >= 2 observations, got {data.n}")
    Y = data.Y
    n = data.n

    ii, jj = np.triu_indices(n, k=1)
    distinct = np.max(np.abs(Y[ii] - Y[jj]), axis=1) > 1e-12
    if not np.any(distinct):
        raise StateError("all observed outputs are identical; no pair to ask")
    ii, jj = ii[distinct], jj[distinct]

    if cfg.pair_criterion == IEUBO:
        means, variances = util.belief_batch(Y)
        sd = np.sqrt(variances)
        values = expected_max_gaussian(means[ii], sd[ii], means[jj], sd[jj])
    else:
        scores = util.member_scores(Y)  # (M, n)
        values = np.maximum(scores[:, ii], scores[:, jj]).mean(axis=0)

    asked = (
        {pair_fingerprint(y1, y2) for y1, y2 in zip(history.Y1, history.Y2)}
        if cfg.exclude_asked_pairs and history is not None
        else set()
    )

    def argmax(skip_asked: bool):
        best = None
        for idx in range(len(ii)):
            if skip_asked and pair_fingerprint(Y[ii[idx]], Y[jj[idx]]) in asked:
                continue
            if best is None or values[idx] > values[best]:
                best = idx
        return best

    fallback = False
    best = argmax(skip_asked=bool(asked))
    if best is None:
        fallback = True
        best = argmax(skip_asked=False)
    i, j = int(ii[best]), int(jj[best])
    return PairChoice(
        i=i,
        j=j,
        y1=Y[i].copy(),
        y2=Y[j].copy(),
        value=float(values[best]),
        fallback_used=fallback,
    )
