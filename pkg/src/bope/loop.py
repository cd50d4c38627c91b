"""The optimization loop: initialization, alternating experimentation and
preference exploration, regret tracking, and model-quality metrics.

Seeds fan out deterministically per component and iteration (design init,
pair init, decision maker, GP fit, ensemble training, acquisition), so a
run is bit-reproducible and individual components can be replayed.
"""

from __future__ import annotations

import json
import time
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.stats import qmc

from bope.acquisition import ExactUtility, optimize_qneiuu, select_pair
from bope.config import RunConfig
from bope.dm import DmConfig, respond
from bope.errors import BopeError, ConfigError, InputError
from bope.gp import ObservationSet, fit
from bope.problems import OutputProblem, UtilityFunction, reference_optimum
from bope.utility_ensemble import ComparisonSet, train_ensemble

RECORD_SCHEMA_VERSION = 1

# Seed-stream domains for per-component fan-out.
_DOM_INIT_DESIGN = 0
_DOM_INIT_PAIRS = 1
_DOM_DM = 2
_DOM_GP = 3
_DOM_ENSEMBLE = 4
_DOM_ACQ = 5
_DOM_RANDOM_ALG = 6


def component_seed(master: int, domain: int, t: int = 0) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=master, spawn_key=(domain, t))


# ---------------------------------------------------------------------------
# Run records
# ---------------------------------------------------------------------------


@dataclass
class IterationRecord:
    t: int
    x: list
    y: list
    regret: float
    acquisition_value: float | None = None
    pair_i: int | None = None
    pair_j: int | None = None
    label: int | None = None
    was_error: bool | None = None
    utility_gap_true: float | None = None
    times: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "x": self.x,
            "y": self.y,
            "regret": self.regret,
            "acquisition_value": self.acquisition_value,
            "pair_i": self.pair_i,
            "pair_j": self.pair_j,
            "label": self.label,
            "was_error": self.was_error,
            "utility_gap_true": self.utility_gap_true,
            "times": self.times,
            "flags": self.flags,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "IterationRecord":
        return cls(**d)


@dataclass
class RunRecord:
    config: dict
    reference_value: float
    init_regret: float
    init_observations: int
    init_comparisons: int
    init_errors: int = 0
    iterations: list = field(default_factory=list)
    termination: str = "budget"  # budget | regret-floor | error
    error: str | None = None
    cumulative_errors: int = 0
    gp_hyperparams: list | None = None
    ensemble_summary: dict | None = None
    schema_version: int = RECORD_SCHEMA_VERSION

    @property
    def regret_sequence(self) -> list:
        return [self.init_regret] + [it.regret for it in self.iterations]

    @property
    def final_regret(self) -> float:
        return self.regret_sequence[-1]

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "config": self.config,
            "reference_value": self.reference_value,
            "init_regret": self.init_regret,
            "init_observations": self.init_observations,
            "init_comparisons": self.init_comparisons,
            "init_errors": self.init_errors,
            "iterations": [it.to_dict() for it in self.iterations],
            "termination": self.termination,
            "error": self.error,
            "cumulative_errors": self.cumulative_errors,
            "gp_hyperparams": self.gp_hyperparams,
            "ensemble_summary": self.ensemble_summary,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        d = dict(d)
        d["iterations"] = [IterationRecord.from_dict(it) for it in d["iterations"]]
        version = d.pop("schema_version", None)
        if version != RECORD_SCHEMA_VERSION:
            raise InputError(f"record schema version {version} != {RECORD_SCHEMA_VERSION}")
        return cls(**d)

    # -- JSON-lines persistence ---------------------------------------------

    def write_jsonl(self, path: str | Path) -> None:
        path = Path(path)
        with path.open("w") as fh:
            header = {
                "type": "header",
                "schema_version": self.schema_version,
                "config": self.config,
                "reference_value": self.reference_value,
                "init_regret": self.init_regret,
                "init_observations": self.init_observations,
                "init_comparisons": self.init_comparisons,
                "init_errors": self.init_errors,
            }
            fh.write(json.dumps(header) + "\n")
            for it in self.iterations:
                fh.write(json.dumps({"type": "iteration", **it.to_dict()}) + "\n")
            footer = {
                "type": "final",
                "termination": self.termination,
                "error": self.error,
                "cumulative_errors": self.cumulative_errors,
                "gp_hyperparams": self.gp_hyperparams,
                "ensemble_summary": self.ensemble_summary,
            }
            fh.write(json.dumps(footer) + "\n")

    @classmethod
    def read_jsonl(cls, path: str | Path) -> "RunRecord":
        lines = [json.loads(line) for line in Path(path).read_text().splitlines() if line]
        if not lines or lines[0].get("type") != "header":
            raise InputError(f"{path}: not a run record file")
        header = lines[0]
        if header.get("schema_version") != RECORD_SCHEMA_VERSION:
            raise InputError(
                f"{path}: schema version {header.get('schema_version')} "
                f"!= {RECORD_SCHEMA_VERSION}"
            )
        record = cls(
            config=header["config"],
            reference_value=header["reference_value"],
            init_regret=header["init_regret"],
            init_observations=header["init_observations"],
            init_comparisons=header["init_comparisons"],
            init_errors=header.get("init_errors", 0),
        )
        for line in lines[1:]:
            kind = line.pop("type")
            if kind == "iteration":
                record.iterations.append(IterationRecord.from_dict(line))
            elif kind == "final":
                record.termination = line["termination"]
                record.error = line["error"]
                record.cumulative_errors = line["cumulative_errors"]
                record.gp_hyperparams = line.get("gp_hyperparams")
                record.ensemble_summary = line.get("ensemble_summary")
        return record


# ---------------------------------------------------------------------------
# Initialization and regret
# ---------------------------------------------------------------------------


def sobol_designs(problem: OutputProblem, n: int, seed) -> np.ndarray:
    sampler = qmc.Sobol(
        d=problem.dim, scramble=True, seed=np.random.default_rng(seed)
    )
    low, high = problem.bounds[:, 0], problem.bounds[:, 1]
    with warnings.catch_warnings():
        # arbitrary counts are fine here; balance is not relied upon
        warnings.filterwarnings("ignore", message="The balance properties of Sobol")
        U = sampler.random(n)
    return low + U * (high - low)


def distinct_pairs(Y: np.ndarray) -> list[tuple[int, int]]:
    n = Y.shape[0]
    ii, jj = np.triu_indices(n, k=1)
    keep = np.max(np.abs(Y[ii] - Y[jj]), axis=1) > 1e-12
    return list(zip(ii[keep].tolist(), jj[keep].tolist()))


def initialize(
    cfg: RunConfig,
    problem: OutputProblem | None = None,
    utility: UtilityFunction | None = None,
):
    """Quasi-random initial designs plus uniformly drawn labeled comparisons.

    Returns (observations, comparisons, pair_indices, responses).
    """
    problem = problem or cfg.build_problem()
    utility = utility or cfg.build_utility()
    n0, m0 = cfg.resolved_init_sizes(problem.dim)

    X = sobol_designs(problem, n0, component_seed(cfg.seed, _DOM_INIT_DESIGN))
    Y = problem.evaluate_batch(X)
    observations = ObservationSet.from_arrays(X, Y)

    comparisons = ComparisonSet(problem.num_objectives)
    pair_indices: list[tuple[int, int]] = []
    responses = []
    if cfg.algorithm == "bope":
        pool = distinct_pairs(Y)
        if m0 > len(pool):
            raise ConfigError(
                f"init_comparisons={m0} exceeds the {len(pool)} distinct "
                f"pairs available from {n0} observations"
            )
        rng_pairs = np.random.default_rng(component_seed(cfg.seed, _DOM_INIT_PAIRS))
        rng_dm = np.random.default_rng(component_seed(cfg.seed, _DOM_DM, 0))
        chosen = rng_pairs.choice(len(pool), size=m0, replace=False)
        for idx in chosen:
            i, j = pool[idx]
            resp = respond(
                utility.value(Y[i]), utility.value(Y[j]), cfg.dm, rng_dm
            )
            comparisons.append(Y[i], Y[j], resp.label)
            pair_indices.append((i, j))
            responses.append(resp)
    return observations, comparisons, pair_indices, responses


def simple_regret(
    reference_value: float,
    data: ObservationSet,
    utility: UtilityFunction,
    problem: OutputProblem | None = None,
) -> float:
    """Gap between the best achievable utility and the best evaluated one.

    Clamped at zero so reference-oracle estimation error cannot produce a
    negative regret.
    """
    if data.n == 0:
        raise InputError("simple_regret needs at least one observation")
    best = float(utility.value_batch(data.Y).max())
    return max(reference_value - best, 0.0)


# ---------------------------------------------------------------------------
# The loop
# ---------------------------------------------------------------------------


def run(cfg: RunConfig) -> RunRecord:
    """Execute one full optimization run per the configured algorithm."""
    problem = cfg.build_problem()
    utility = cfg.build_utility()
    if utility.num_objectives != problem.num_objectives:
        raise ConfigError(
            f"utility {utility.name!r} expects {utility.num_objectives} objectives "
            f"but problem {problem.name!r} produces {problem.num_objectives}"
        )
    ref_value = reference_optimum(problem, utility)

    observations, comparisons, _, init_responses = initialize(cfg, problem, utility)
    init_errors = sum(1 for r in init_responses if r.was_error)
    record = RunRecord(
        config=cfg.to_dict(),
        reference_value=ref_value,
        init_regret=simple_regret(ref_value, observations, utility),
        init_observations=observations.n,
        init_comparisons=comparisons.m,
        init_errors=init_errors,
        cumulative_errors=init_errors,
    )

    rng_dm = np.random.default_rng(component_seed(cfg.seed, _DOM_DM, 1))
    sobol_random = qmc.Sobol(
        d=problem.dim,
        scramble=True,
        seed=np.random.default_rng(component_seed(cfg.seed, _DOM_RANDOM_ALG)),
    )

    regret = record.init_regret
    gp = None
    ensemble = None
    try:
        for t in range(cfg.iterations):
            it = IterationRecord(t=t, x=[], y=[], regret=regret)

            if cfg.algorithm in ("bope", "known-utility"):
                t0 = time.perf_counter()
                gp = fit(
                    observations,
                    problem.bounds,
                    np.random.default_rng(component_seed(cfg.seed, _DOM_GP, t)),
                )
                it.times["gp_fit"] = time.perf_counter() - t0

            if cfg.algorithm == "bope":
                t0 = time.perf_counter()
                train_cfg = replace(
                    cfg.train,
                    seed=int(component_seed(cfg.seed, _DOM_ENSEMBLE, t).generate_state(1)[0]),
                )
                ensemble = train_ensemble(
                    comparisons,
                    ensemble_size=cfg.ensemble_size,
                    cfg=train_cfg,
                    activation=cfg.activation,
                    monotone=cfg.monotone,
                )
                it.times["utility_train"] = time.perf_counter() - t0

            # Experimentation stage
            t0 = time.perf_counter()
            if cfg.algorithm == "random":
                low, high = problem.bounds[:, 0], problem.bounds[:, 1]
                x_next = low + sobol_random.random(1)[0] * (high - low)
            else:
                util_model = ensemble if cfg.algorithm == "bope" else ExactUtility(utility)
                acq = optimize_qneiuu(
                    gp,
                    util_model,
                    observations,
                    problem.bounds,
                    cfg.acquisition,
                    seed=int(component_seed(cfg.seed, _DOM_ACQ, t).generate_state(1)[0]),
                )
                x_next = acq.x
                it.acquisition_value = acq.value
                if acq.refinement_failed:
                    it.flags.append("refinement_failed")
                if acq.duplicate_avoided:
                    it.flags.append("duplicate_avoided")
            y_next = problem.evaluate(x_next)
            observations.append(x_next, y_next)
            it.times["experiment"] = time.perf_counter() - t0
            it.x = np.asarray(x_next, float).tolist()
            it.y = np.asarray(y_next, float).tolist()

            regret = simple_regret(ref_value, observations, utility)
            floored = regret < cfg.regret_floor
            it.regret = cfg.regret_floor if floored else regret

            # Preference exploration stage
            if cfg.algorithm == "bope" and not floored:
                t0 = time.perf_counter()
                choice = select_pair(observations, ensemble, comparisons, cfg.acquisition)
                if choice.fallback_used:
                    it.flags.append("pair_fallback")
                resp = respond(
                    utility.value(choice.y1), utility.value(choice.y2), cfg.dm, rng_dm
                )
                comparisons.append(choice.y1, choice.y2, resp.label)
                it.pair_i, it.pair_j = choice.i, choice.j
                it.label = resp.label
                it.was_error = resp.was_error
                it.utility_gap_true = resp.utility_gap_true
                record.cumulative_errors += int(resp.was_error)
                it.times["pair_select"] = time.perf_counter() - t0

            record.iterations.append(it)
            if floored:
                record.termination = "regret-floor"
                break
        else:
            record.termination = "budget"
    except BopeError as exc:
        record.termination = "error"
        record.error = f"{type(exc).__name__}: {exc}"

    if gp is not None:
        record.gp_hyperparams = gp.hyperparams_dict()
    if ensemble is not None:
        record.ensemble_summary = {
            "size": ensemble.size,
            "activation": ensemble.members[0].activation,
            "monotone": ensemble.members[0].monotone,
            "final_losses": ensemble.train_losses,
            "degenerate_members": [s.degenerate for s in ensemble.norm_stats],
        }
    return record


def run_and_save(payload) -> str:
    """Worker entry for process pools: payload is (config_dict, out_path)."""
    import torch

    torch.set_num_threads(1)
    cfg_dict, out_path = payload
    record = run(RunConfig.from_dict(cfg_dict))
    record.write_jsonl(out_path)
    return out_path


# ---------------------------------------------------------------------------
# Model-quality metrics
# ---------------------------------------------------------------------------


def _model_preference_probability(util, y1: np.ndarray, y2: np.ndarray) -> float:
    """P(first preferred) implied by the model's independent beliefs."""
    means, variances = util.belief_batch(np.vstack([y1, y2]))
    s3 = float(np.sqrt(variances[0] + variances[1]))
    gap = float(means[0] - means[1])
    if s3 == 0.0:
        return 1.0 if gap > 0 else (0.5 if gap == 0 else 0.0)
    from scipy.special import ndtr

    return float(ndtr(gap / s3))


def uncertainty_quality(
    util,
    utility_true: UtilityFunction,
    output_sampler,
    trials: int = 50,
    dm_cfg: DmConfig | None = None,
    seed: int = 0,
) -> float:
    """Mean model probability assigned to the DM's realized preference."""
    dm_cfg = dm_cfg or DmConfig()
    rng = np.random.default_rng(seed)
    total = 0.0
    for _ in range(trials):
        y1, y2 = output_sampler(rng)
        resp = respond(utility_true.value(y1), utility_true.value(y2), dm_cfg, rng)
        p1 = _model_preference_probability(util, y1, y2)
        total += p1 if resp.label == 1 else 1.0 - p1
    return total / trials


def pairwise_accuracy(
    util,
    utility_true: UtilityFunction,
    output_sampler,
    trials: int = 50,
    seed: int = 0,
) -> float:
    """Fraction of random pairs whose model mean-gap sign matches the truth."""
    rng = np.random.default_rng(seed)
    hits = 0
    for _ in range(trials):
        y1, y2 = output_sampler(rng)
        means, _ = util.belief_batch(np.vstack([y1, y2]))
        model_sign = np.sign(means[0] - means[1])
        true_sign = np.sign(utility_true.value(y1) - utility_true.value(y2))
        hits += int(model_sign == true_sign)
    return hits / trials


def observed_pair_sampler(Y: np.ndarray):
    """Uniform sampler over ordered pairs of distinct rows of Y."""
    Y = np.asarray(Y, dtype=float)

    def sample(rng: np.random.Generator):
        while True:
            i, j = rng.integers(0, Y.shape[0], size=2)
            if i != j and np.max(np.abs(Y[i] - Y[j])) > 1e-12:
                return Y[i], Y[j]

    return sample


def model_quality_protocol(
    problem: OutputProblem,
    utility: UtilityFunction,
    n_observations: int,
    n_comparisons: int,
    dm_cfg: DmConfig,
    train_cfg,
    ensemble_size: int,
    trials: int,
    seed: int,
    monotone: bool = True,
    activation: str = "swish",
) -> dict:
    """Train a utility model on random observed-output comparisons, then
    score its uncertainty quality and pairwise accuracy on fresh pairs."""
    ss = np.random.SeedSequence(seed)
    s_design, s_pairs, s_dm, s_train, s_eval = ss.generate_state(5)
    X = sobol_designs(problem, n_observations, int(s_design))
    Y = problem.evaluate_batch(X)

    pool = distinct_pairs(Y)
    rng_pairs = np.random.default_rng(int(s_pairs))
    rng_dm = np.random.default_rng(int(s_dm))
    chosen = rng_pairs.choice(len(pool), size=n_comparisons, replace=False)
    comparisons = ComparisonSet(problem.num_objectives)
    for idx in chosen:
        i, j = pool[idx]
        resp = respond(utility.value(Y[i]), utility.value(Y[j]), dm_cfg, rng_dm)
        comparisons.append(Y[i], Y[j], resp.label)

    ensemble = train_ensemble(
        comparisons,
        ensemble_size=ensemble_size,
        cfg=replace(train_cfg, seed=int(s_train)),
        monotone=monotone,
        activation=activation,
    )
    sampler = observed_pair_sampler(Y)
    return {
        "uncertainty_quality": uncertainty_quality(
            ensemble, utility, sampler, trials=trials, dm_cfg=dm_cfg, seed=int(s_eval)
        ),
        "pairwise_accuracy": pairwise_accuracy(
            ensemble, utility, sampler, trials=trials, seed=int(s_eval) + 1
        ),
    }
