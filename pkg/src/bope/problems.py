"""Synthetic multi-objective output functions and monotone utility functions.

Output problems map a design vector ``x`` inside a box to ``k`` objective
values; utility functions map objective vectors to a scalar preference
strength and are monotone non-decreasing in every objective over the
problem's reachable output range.

All evaluators are deterministic and vectorized. True optima of the
composite ``utility(outputs(x))`` are estimated offline by a dense
quasi-random sweep refined with multi-start local search and cached in a
versioned sidecar file shipped with the package (see ``reference_optimum``).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from bope.errors import InputError

ORACLE_CACHE_VERSION = 1

_BOUNDS_TOL = 1e-9


def _params_key(params: dict) -> str:
    """Stable short hash of a parameter dict (order-insensitive)."""
    canon = json.dumps(params, sort_keys=True, default=float)
    return hashlib.sha256(canon.encode()).hexdigest()[:12]


# ---------------------------------------------------------------------------
# Output problems
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OutputProblem:
    """A deterministic map from a box in R^d to R^k objective values.

    ``bounds`` has shape (d, 2) with per-coordinate (low, high).
    ``batch_evaluator`` accepts an (n, d) array and returns (n, k).
    """

    name: str
    dim: int
    num_objectives: int
    bounds: np.ndarray
    batch_evaluator: Callable[[np.ndarray], np.ndarray]
    params: dict = field(default_factory=dict)
    objective_names: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "bounds", np.asarray(self.bounds, dtype=float))
        if self.bounds.shape != (self.dim, 2):
            raise InputError(
                f"{self.name}: bounds shape {self.bounds.shape}, expected ({self.dim}, 2)"
            )
        if not self.objective_names:
            object.__setattr__(
                self,
                "objective_names",
                tuple(f"f{i + 1}" for i in range(self.num_objectives)),
            )

    @property
    def cache_key(self) -> str:
        return f"{self.name}:{_params_key(self.params)}"

    def validate_design(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise InputError(
                f"{self.name}: design has shape {x.shape}, expected ({self.dim},)"
            )
        if not np.all(np.isfinite(x)):
            raise InputError(f"{self.name}: design contains non-finite values")
        low, high = self.bounds[:, 0], self.bounds[:, 1]
        if np.any(x < low - _BOUNDS_TOL) or np.any(x > high + _BOUNDS_TOL):
            raise InputError(f"{self.name}: design {x.tolist()} outside bounds")
        return np.clip(x, low, high)

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        """Evaluate the objective vector at a single design point."""
        x = self.validate_design(x)
        y = self.batch_evaluator(x[None, :])[0]
        return np.asarray(y, dtype=float)

    def evaluate_batch(self, X: np.ndarray) -> np.ndarray:
        """Evaluate an (n, d) batch of in-bounds designs; returns (n, k)."""
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise InputError(
                f"{self.name}: batch has shape {X.shape}, expected (n, {self.dim})"
            )
        return np.asarray(self.batch_evaluator(X), dtype=float)


def _dtlz2_batch(X: np.ndarray) -> np.ndarray:
    # Two objectives; all coordinates after the first are distance variables.
    h = np.sum((X[:, 1:] - 0.5) ** 2, axis=1)
    angle = X[:, 0] * np.pi / 2
    return np.stack([(1 + h) * np.cos(angle), (1 + h) * np.sin(angle)], axis=1)


def _vlmop3_batch(X: np.ndarray) -> np.ndarray:
    x1, x2 = X[:, 0], X[:, 1]
    s = x1**2 + x2**2
    f1 = 0.5 * s + np.sin(s)
    f2 = (3 * x1 - 2 * x2 + 4) ** 2 / 8 + (x1 - x2 + 1) ** 2 / 27 + 15
    f3 = 1 / (s + 1) - 1.1 * np.exp(-s)
    return np.stack([f1, f2, f3], axis=1)


def _zdt1_batch(X: np.ndarray) -> np.ndarray:
    d = X.shape[1]
    f1 = X[:, 0]
    g = 1 + 9 * np.sum(X[:, 1:], axis=1) / (d - 1)
    f2 = g * (1 - np.sqrt(f1 / g))
    return np.stack([f1, f2], axis=1)


# OSY is originally a constrained two-objective minimization problem. Here it
# is treated as purely multi-objective with 8 outputs: the two original
# objectives (negated, so larger is better) and the six constraint
# left-hand-sides (feasible means LHS >= 0, so more slack is better). Every
# output is additionally shifted by its box-wide minimum so the reachable
# range is non-negative; this keeps the sum-of-squares utility paired with
# this problem monotone non-decreasing over the whole reachable range.
_OSY_BOUNDS = np.array(
    [[0, 10], [0, 10], [1, 5], [0, 6], [1, 5], [0, 10]], dtype=float
)


def _osy_batch(X: np.ndarray) -> np.ndarray:
    x1, x2, x3, x4, x5, x6 = (X[:, i] for i in range(6))
    sq = x1**2 + x2**2 + x3**2 + x4**2 + x5**2 + x6**2
    y = np.stack(
        [
            # -f1: 25(x1-2)^2 + ... is maximized by the original problem
            25 * (x1 - 2) ** 2
            + (x2 - 2) ** 2
            + (x3 - 1) ** 2
            + (x4 - 4) ** 2
            + (x5 - 1) ** 2,
            # -f2 shifted by max box value of sum(x^2) = 386
            386.0 - sq,
            (x1 + x2 - 2) + 2,  # g1 = x1 + x2 - 2,  box min -2
            (6 - x1 - x2) + 14,  # g2 = 6 - x1 - x2,  box min -14
            (2 - x2 + x1) + 8,  # g3 = 2 - x2 + x1,  box min -8
            (2 - x1 + 3 * x2) + 8,  # g4 = 2 - x1 + 3x2, box min -8
            (4 - (x3 - 3) ** 2 - x4) + 6,  # g5, box min -6
            ((x5 - 3) ** 2 + x6 - 4) + 4,  # g6, box min -4
        ],
        axis=1,
    )
    return y


_PROBLEM_BUILDERS: dict[str, Callable[..., OutputProblem]] = {}


def register_problem(name: str, builder: Callable[..., OutputProblem]) -> None:
    """Register a problem builder under a name usable in run configurations."""
    _PROBLEM_BUILDERS[name.lower()] = builder


def get_problem(name: str, params: dict | None = None) -> OutputProblem:
    key = name.lower()
    if key not in _PROBLEM_BUILDERS:
        raise InputError(
            f"unknown problem {name!r}; available: {sorted(_PROBLEM_BUILDERS)}"
        )
    return _PROBLEM_BUILDERS[key](**(params or {}))


register_problem(
    "dtlz2",
    lambda d=3: OutputProblem(
        name="dtlz2",
        dim=d,
        num_objectives=2,
        bounds=np.tile([0.0, 1.0], (d, 1)),
        batch_evaluator=_dtlz2_batch,
        params={"d": d},
    ),
)
register_problem(
    "vlmop3",
    lambda: OutputProblem(
        name="vlmop3",
        dim=2,
        num_objectives=3,
        bounds=np.tile([-3.0, 3.0], (2, 1)),
        batch_evaluator=_vlmop3_batch,
    ),
)
register_problem(
    "zdt1",
    lambda d=10: OutputProblem(
        name="zdt1",
        dim=d,
        num_objectives=2,
        bounds=np.tile([0.0, 1.0], (d, 1)),
        batch_evaluator=_zdt1_batch,
        params={"d": d},
    ),
)
register_problem(
    "osy",
    lambda: OutputProblem(
        name="osy",
        dim=6,
        num_objectives=8,
        bounds=_OSY_BOUNDS,
        batch_evaluator=_osy_batch,
    ),
)


# ---------------------------------------------------------------------------
# Utility functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UtilityFunction:
    """A deterministic scalar utility over k objective values.

    Monotone non-decreasing in every coordinate over the valid range of the
    paired problem's outputs. ``batch_evaluator`` maps (n, k) -> (n,).
    """

    name: str
    num_objectives: int
    batch_evaluator: Callable[[np.ndarray], np.ndarray]
    params: dict = field(default_factory=dict)

    @property
    def cache_key(self) -> str:
        return f"{self.name}:{_params_key(self.params)}"

    def value(self, y: np.ndarray) -> float:
        y = np.asarray(y, dtype=float)
        if y.shape != (self.num_objectives,):
            raise InputError(
                f"{self.name}: output has shape {y.shape}, "
                f"expected ({self.num_objectives},)"
            )
        return float(self.batch_evaluator(y[None, :])[0])

    def value_batch(self, Y: np.ndarray) -> np.ndarray:
        Y = np.asarray(Y, dtype=float)
        if Y.ndim != 2 or Y.shape[1] != self.num_objectives:
            raise InputError(
                f"{self.name}: batch has shape {Y.shape}, "
                f"expected (n, {self.num_objectives})"
            )
        return np.asarray(self.batch_evaluator(Y), dtype=float)


def _linear(theta):
    theta = np.asarray(theta, dtype=float)
    return UtilityFunction(
        name="linear",
        num_objectives=len(theta),
        batch_evaluator=lambda Y: Y @ theta,
        params={"theta": theta.tolist()},
    )


def _exponential(k, theta):
    return UtilityFunction(
        name="exponential",
        num_objectives=k,
        batch_evaluator=lambda Y: np.sum((1 - np.exp(-theta * Y)) / theta, axis=1),
        params={"k": k, "theta": theta},
    )


def _linear_exponential():
    def ev(Y):
        a, b = Y[:, 0] + 2, Y[:, 1] + 2
        return 5 * a + 5 * b + 2 * np.exp(0.75 * a) * np.exp(1.25 * b)

    return UtilityFunction(name="linear-exponential", num_objectives=2, batch_evaluator=ev)


def _quadratic(k):
    # Monotone only for non-negative outputs; the paired problem (OSY) is
    # oriented so its reachable outputs are non-negative.
    return UtilityFunction(
        name="quadratic",
        num_objectives=k,
        batch_evaluator=lambda Y: np.sum(Y**2, axis=1),
        params={"k": k},
    )


def _kumaraswamy_cdf(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)

    def ev(Y):
        # CDF semantics outside the [0, 1] support: flat at 0 / 1.
        Yc = np.clip(Y, 0.0, 1.0)
        return np.prod(1 - (1 - Yc**a) ** b, axis=1)

    return UtilityFunction(
        name="kumaraswamy-cdf",
        num_objectives=len(a),
        batch_evaluator=ev,
        params={"a": a.tolist(), "b": b.tolist()},
    )


def _cobb_douglas(c, theta):
    theta = np.asarray(theta, dtype=float)
    return UtilityFunction(
        name="cobb-douglas",
        num_objectives=len(theta),
        batch_evaluator=lambda Y: c * np.prod(Y + theta, axis=1),
        params={"c": c, "theta": theta.tolist()},
    )


_UTILITY_BUILDERS: dict[str, Callable[..., UtilityFunction]] = {}


def register_utility(name: str, builder: Callable[..., UtilityFunction]) -> None:
    _UTILITY_BUILDERS[name.lower()] = builder


def get_utility(name: str, params: dict | None = None) -> UtilityFunction:
    key = name.lower()
    if key not in _UTILITY_BUILDERS:
        raise InputError(
            f"unknown utility {name!r}; available: {sorted(_UTILITY_BUILDERS)}"
        )
    return _UTILITY_BUILDERS[key](**(params or {}))


register_utility("linear", lambda theta=(3.5, 6.5): _linear(theta))
register_utility("exponential", lambda k=3, theta=0.35: _exponential(k, theta))
register_utility("linear-exponential", lambda: _linear_exponential())
register_utility("quadratic", lambda k=8: _quadratic(k))
register_utility(
    "kumaraswamy-cdf",
    lambda a=(0.5, 1.0, 1.5), b=(1.0, 2.0, 3.0): _kumaraswamy_cdf(a, b),
)
register_utility(
    "cobb-douglas",
    lambda c=50.0, theta=(0.75, 0.5, 0.5, 0.3, 0.7, 0.5, 0.65, 0.8, 0.55): _cobb_douglas(
        c, theta
    ),
)

# Default problem/utility pairings used by the benchmark suite.
DEFAULT_PAIRINGS: dict[str, str] = {
    "dtlz2": "linear",
    "vlmop3": "exponential",
    "zdt1": "linear-exponential",
    "osy": "quadratic",
}


# ---------------------------------------------------------------------------
# Offline oracle: reference optima and reachable output ranges
# ---------------------------------------------------------------------------

_ORACLE_SEED = 20260811
_ORACLE_POINTS = 1 << 20


@dataclass
class OptimumEstimate:
    value: float
    x_best: list
    sweep_best: float
    seed: int
    n_points: int

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "x_best": list(self.x_best),
            "sweep_best": self.sweep_best,
            "seed": self.seed,
            "n_points": self.n_points,
        }


def _sweep_points(problem: OutputProblem, n_points: int, seed: int):
    """Yield batches of quasi-random designs covering the box."""
    sampler = qmc.Sobol(d=problem.dim, scramble=True, seed=seed)
    low, high = problem.bounds[:, 0], problem.bounds[:, 1]
    remaining = n_points
    batch = 1 << 15
    while remaining > 0:
        m = min(batch, remaining)
        U = sampler.random(m)
        yield low + U * (high - low)
        remaining -= m


def estimate_optimum(
    problem: OutputProblem,
    utility: UtilityFunction,
    n_points: int = _ORACLE_POINTS,
    n_refine: int = 40,
    seed: int = _ORACLE_SEED,
) -> OptimumEstimate:
    """Estimate max_x utility(outputs(x)) by dense sweep plus local refinement."""
    if utility.num_objectives != problem.num_objectives:
        raise InputError(
            f"utility expects {utility.num_objectives} objectives, "
            f"problem has {problem.num_objectives}"
        )
    top_x = None
    top_v = None
    for X in _sweep_points(problem, n_points, seed):
        v = utility.value_batch(problem.evaluate_batch(X))
        if top_v is None:
            pool_x, pool_v = X, v
        else:
            pool_x = np.vstack([top_x, X])
            pool_v = np.concatenate([top_v, v])
        order = np.argsort(pool_v)[::-1][:n_refine]
        top_x, top_v = pool_x[order], pool_v[order]
    sweep_best = float(top_v[0])

    def neg(x):
        return -utility.value_batch(problem.evaluate_batch(x[None, :]))[0]

    best_v, best_x = sweep_best, top_x[0]
    for x0 in top_x:
        res = minimize(neg, x0, method="L-BFGS-B", bounds=problem.bounds)
        if np.isfinite(res.fun) and -res.fun > best_v:
            best_v, best_x = float(-res.fun), np.clip(
                res.x, problem.bounds[:, 0], problem.bounds[:, 1]
            )
    return OptimumEstimate(
        value=best_v,
        x_best=np.asarray(best_x, dtype=float).tolist(),
        sweep_best=sweep_best,
        seed=seed,
        n_points=n_points,
    )


def estimate_output_range(
    problem: OutputProblem, n_points: int = _ORACLE_POINTS, seed: int = _ORACLE_SEED
) -> dict:
    """Per-objective (low, high) reachable over the box, by quasi-random sweep."""
    low = np.full(problem.num_objectives, np.inf)
    high = np.full(problem.num_objectives, -np.inf)
    for X in _sweep_points(problem, n_points, seed):
        Y = problem.evaluate_batch(X)
        low = np.minimum(low, Y.min(axis=0))
        high = np.maximum(high, Y.max(axis=0))
    return {
        "low": low.tolist(),
        "high": high.tolist(),
        "seed": seed,
        "n_points": n_points,
    }


class OracleCache:
    """Versioned text sidecar holding reference optima and output ranges."""

    def __init__(self, path: Path | None = None):
        self.path = Path(path) if path is not None else None
        self._data = {"version": ORACLE_CACHE_VERSION, "optima": {}, "output_ranges": {}}
        if self.path is not None and self.path.exists():
            self._load(json.loads(self.path.read_text()))
        elif self.path is None:
            ref = resources.files("bope").joinpath("data/oracle_cache.json")
            if ref.is_file():
                self._load(json.loads(ref.read_text()))

    def _load(self, raw: dict) -> None:
        if raw.get("version") != ORACLE_CACHE_VERSION:
            raise InputError(
                f"oracle cache version {raw.get('version')} != {ORACLE_CACHE_VERSION}"
            )
        self._data = raw

    def _save(self) -> None:
        if self.path is not None:
            self.path.write_text(json.dumps(self._data, indent=1, sort_keys=True))

    def optimum(
        self,
        problem: OutputProblem,
        utility: UtilityFunction,
        n_points: int = _ORACLE_POINTS,
    ) -> float:
        key = f"{problem.cache_key}+{utility.cache_key}"
        entry = self._data["optima"].get(key)
        if entry is None:
            entry = estimate_optimum(problem, utility, n_points=n_points).to_dict()
            self._data["optima"][key] = entry
            self._save()
        return float(entry["value"])

    def output_range(
        self, problem: OutputProblem, n_points: int = _ORACLE_POINTS
    ) -> tuple[np.ndarray, np.ndarray]:
        entry = self._data["output_ranges"].get(problem.cache_key)
        if entry is None:
            entry = estimate_output_range(problem, n_points=n_points)
            self._data["output_ranges"][problem.cache_key] = entry
            self._save()
        return np.asarray(entry["low"]), np.asarray(entry["high"])


_default_cache: OracleCache | None = None


def default_oracle_cache() -> OracleCache:
    global _default_cache
    if _default_cache is None:
        _default_cache = OracleCache()
    return _default_cache


def reference_optimum(
    problem: OutputProblem,
    utility: UtilityFunction,
    cache: OracleCache | None = None,
    n_points: int = _ORACLE_POINTS,
) -> float:
    """Best achievable true utility for the problem/utility pair.

    Served from the packaged sidecar cache when available; computed (slow)
    and memoized otherwise.
    """
    if utility.num_objectives != problem.num_objectives:
        raise InputError(
            f"utility expects {utility.num_objectives} objectives, "
            f"problem has {problem.num_objectives}"
        )
    cache = cache or default_oracle_cache()
    return cache.optimum(problem, utility, n_points=n_points)


def output_range(
    problem: OutputProblem,
    cache: OracleCache | None = None,
    n_points: int = _ORACLE_POINTS,
) -> tuple[np.ndarray, np.ndarray]:
    """Reachable (low, high) per objective, for probes and UI axis scaling."""
    cache = cache or default_oracle_cache()
    return cache.output_range(problem, n_points=n_points)
