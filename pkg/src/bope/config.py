"""Run and benchmark configuration, loadable from YAML/JSON text files."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import yaml

from bope.acquisition import AcquisitionConfig
from bope.dm import DmConfig
from bope.errors import ConfigError, InputError
from bope.problems import DEFAULT_PAIRINGS, OutputProblem, UtilityFunction, get_problem, get_utility
from bope.utility_ensemble import DEFAULT_ENSEMBLE_SIZE, TrainConfig

ALGORITHMS = ("bope", "random", "known-utility")

REGRET_FLOOR = 1e-5


def default_init_observations(d: int) -> int:
    return 16 if d < 5 else 32


def default_init_comparisons(d: int) -> int:
    return 10 if d < 5 else 20


@dataclass(frozen=True)
class RunConfig:
    problem: str = "dtlz2"
    problem_params: dict = field(default_factory=dict)
    utility: str | None = None  # None selects the problem's default pairing
    utility_params: dict = field(default_factory=dict)
    iterations: int = 20
    init_observations: int | None = None  # None applies the dimension rule
    init_comparisons: int | None = None
    algorithm: str = "bope"
    monotone: bool = True
    ensemble_size: int = DEFAULT_ENSEMBLE_SIZE
    activation: str = "swish"
    dm: DmConfig = field(default_factory=DmConfig)
    acquisition: AcquisitionConfig = field(default_factory=AcquisitionConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0
    regret_floor: float = REGRET_FLOOR

    def __post_init__(self):
        if self.iterations < 0:
            raise ConfigError(f"iterations must be >= 0, got {self.iterations}")
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(
                f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}"
            )
        if self.ensemble_size < 1:
            raise ConfigError(f"ensemble_size must be >= 1, got {self.ensemble_size}")

    # -- resolution ----------------------------------------------------------

    def build_problem(self) -> OutputProblem:
        try:
            return get_problem(self.problem, self.problem_params)
        except (InputError, TypeError) as exc:
            raise ConfigError(f"problem: {exc}") from exc

    def build_utility(self) -> UtilityFunction:
        name = self.utility or DEFAULT_PAIRINGS.get(self.problem.lower())
        if name is None:
            raise ConfigError(
                f"utility: no default pairing for problem {self.problem!r}; set one"
            )
        try:
            return get_utility(name, self.utility_params)
        except (InputError, TypeError) as exc:
            raise ConfigError(f"utility: {exc}") from exc

    def resolved_init_sizes(self, d: int) -> tuple[int, int]:
        n0 = (
            self.init_observations
            if self.init_observations is not None
            else default_init_observations(d)
        )
        m0 = (
            self.init_comparisons
            if self.init_comparisons is not None
            else default_init_comparisons(d)
        )
        if n0 < 2:
            raise ConfigError(f"init_observations must be >= 2, got {n0}")
        if m0 < 1:
            raise ConfigError(f"init_comparisons must be >= 1, got {m0}")
        return n0, m0

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, seed=seed)

    # -- serialization ---------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "problem": self.problem,
            "problem_params": dict(self.problem_params),
            "utility": self.utility,
            "utility_params": dict(self.utility_params),
            "iterations": self.iterations,
            "init_observations": self.init_observations,
            "init_comparisons": self.init_comparisons,
            "algorithm": self.algorithm,
            "monotone": self.monotone,
            "ensemble_size": self.ensemble_size,
            "activation": self.activation,
            "dm": self.dm.to_dict(),
            "acquisition": self.acquisition.to_dict(),
            "train": self.train.to_dict(),
            "seed": self.seed,
            "regret_floor": self.regret_floor,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        if not isinstance(raw, dict):
            raise ConfigError(f"run config must be a mapping, got {type(raw).__name__}")
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config field(s): {sorted(unknown)}")
        kwargs = dict(raw)
        try:
            if "dm" in kwargs and isinstance(kwargs["dm"], dict):
                kwargs["dm"] = DmConfig.from_dict(kwargs["dm"])
            if "acquisition" in kwargs and isinstance(kwargs["acquisition"], dict):
                kwargs["acquisition"] = AcquisitionConfig.from_dict(kwargs["acquisition"])
            if "train" in kwargs and isinstance(kwargs["train"], dict):
                kwargs["train"] = TrainConfig.from_dict(kwargs["train"])
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(f"invalid config: {exc}") from exc


def load_run_config(path: str | Path, overrides: dict | None = None) -> RunConfig:
    """Parse a YAML/JSON run configuration file; overrides are applied on top."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if raw is None:
        raw = {}
    if overrides:
        raw = _deep_merge(raw, overrides)
    try:
        return RunConfig.from_dict(raw)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _deep_merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out


@dataclass(frozen=True)
class BenchConfig:
    """Cross product of problem/utility cells, algorithms and seeds."""

    cells: tuple  # tuple of dicts with problem/utility entries
    algorithms: tuple
    seeds: tuple
    base: RunConfig = field(default_factory=RunConfig)

    def __post_init__(self):
        if not self.cells or not self.algorithms or not self.seeds:
            raise ConfigError("bench matrix must list problems, algorithms and seeds")
        for alg in self.algorithms:
            if alg not in ALGORITHMS:
                raise ConfigError(f"algorithms: unknown algorithm {alg!r}")

    def runs(self) -> list[RunConfig]:
        out = []
        for cell in self.cells:
            for alg in self.algorithms:
                for seed in self.seeds:
                    out.append(
                        replace(
                            self.base,
                            problem=cell["problem"],
                            problem_params=cell.get("problem_params", {}),
                            utility=cell.get("utility"),
                            utility_params=cell.get("utility_params", {}),
                            algorithm=alg,
                            seed=int(seed),
                        )
                    )
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "BenchConfig":
        if not isinstance(raw, dict):
            raise ConfigError("bench config must be a mapping")
        for key in ("problems", "algorithms", "seeds"):
            if key not in raw or not raw[key]:
                raise ConfigError(f"bench config missing non-empty field {key!r}")
        cells = []
        for entry in raw["problems"]:
            if isinstance(entry, str):
                cells.append({"problem": entry})
            else:
                if "problem" not in entry:
                    raise ConfigError("each problems[] entry needs a 'problem' name")
                cells.append(dict(entry))
        base = RunConfig.from_dict(raw.get("base", {}))
        return cls(
            cells=tuple(cells),
            algorithms=tuple(raw["algorithms"]),
            seeds=tuple(int(s) for s in raw["seeds"]),
            base=base,
        )


def load_bench_config(path: str | Path) -> BenchConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    try:
        return BenchConfig.from_dict(raw or {})
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
