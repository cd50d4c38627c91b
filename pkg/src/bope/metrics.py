"""Post-hoc analysis of run records: regret-curve aggregation, preference
error counts, and paired condition comparisons, emitted as CSV."""

from __future__ import annotations

import csv
import hashlib
from pathlib import Path

import numpy as np
from scipy.stats import binomtest

from bope.errors import InputError
from bope.loop import RunRecord

CURVES_CSV_SCHEMA = "bope-curves-v1"
COMPARE_CSV_SCHEMA = "bope-compare-v1"


def _padded_regrets(records: list[RunRecord]) -> np.ndarray:
    """Regret sequences aligned to the longest run.

    Runs that stopped early because they hit the regret floor are padded at
    the floor; any other length mismatch is an input error.
    """
    if not records:
        raise InputError("no records to aggregate")
    length = max(len(r.regret_sequence) for r in records)
    rows = []
    for r in records:
        seq = list(r.regret_sequence)
        if len(seq) < length:
            if r.termination != "regret-floor":
                raise InputError(
                    "records have mismatched iteration counts and the shorter "
                    f"run terminated with {r.termination!r}, not at the regret floor"
                )
            floor = float(r.config.get("regret_floor", 1e-5))
            seq = seq + [floor] * (length - len(seq))
        rows.append(seq)
    return np.asarray(rows, dtype=float)


def aggregate_curves(records: list[RunRecord]) -> dict:
    """Per-iteration mean, standard error and median over replications."""
    regrets = _padded_regrets(records)
    n = regrets.shape[0]
    mean = regrets.mean(axis=0)
    se = (
        regrets.std(axis=0, ddof=1) / np.sqrt(n)
        if n > 1
        else np.zeros(regrets.shape[1])
    )
    return {
        "iteration": np.arange(regrets.shape[1]),
        "regret_mean": mean,
        "regret_se": se,
        "regret_median": np.median(regrets, axis=0),
        "n_records": n,
    }


def error_curve(records: list[RunRecord]) -> np.ndarray:
    """Mean cumulative preference-error count per iteration.

    Only defined for simulated decision makers; early-stopped runs carry
    their final count forward.
    """
    if not records:
        raise InputError("no records to aggregate")
    length = max(len(r.regret_sequence) for r in records)
    curves = []
    for r in records:
        if r.config.get("dm", {}).get("model") == "human":
            raise InputError("error counts are undefined for human-session records")
        count = r.init_errors
        seq = [count]
        for it in r.iterations:
            count += int(bool(it.was_error))
            seq.append(count)
        seq += [count] * (length - len(seq))
        curves.append(seq)
    return np.asarray(curves, dtype=float).mean(axis=0)


def compare_conditions(results: dict[str, list[RunRecord]]) -> dict:
    """Paired-by-seed comparison of final regrets across conditions.

    All conditions must cover identical seed sets. Returns per-condition
    medians with rank ordering plus pairwise sign tests (ties excluded;
    an all-tie comparison has p-value 1).
    """
    if len(results) < 2:
        raise InputError("need at least two conditions to compare")
    finals: dict[str, dict[int, float]] = {}
    seed_sets = []
    for name, records in results.items():
        by_seed = {}
        for r in records:
            seed = int(r.config["seed"])
            if seed in by_seed:
                raise InputError(f"condition {name!r} has duplicate seed {seed}")
            by_seed[seed] = r.final_regret
        finals[name] = by_seed
        seed_sets.append(set(by_seed))
    if any(s != seed_sets[0] for s in seed_sets[1:]):
        raise InputError("conditions cover different seed sets")
    seeds = sorted(seed_sets[0])

    medians = {name: float(np.median([finals[name][s] for s in seeds])) for name in finals}
    ranked = sorted(medians, key=medians.get)
    table = [
        {"condition": name, "median_final_regret": medians[name], "rank": rank + 1}
        for rank, name in enumerate(ranked)
    ]

    comparisons = []
    names = list(results)
    for a_idx in range(len(names)):
        for b_idx in range(a_idx + 1, len(names)):
            a, b = names[a_idx], names[b_idx]
            diffs = [finals[a][s] - finals[b][s] for s in seeds]
            wins_a = sum(1 for d in diffs if d < 0)  # lower regret wins
            wins_b = sum(1 for d in diffs if d > 0)
            ties = len(diffs) - wins_a - wins_b
            n = wins_a + wins_b
            p = binomtest(wins_a, n, 0.5).pvalue if n > 0 else 1.0
            comparisons.append(
                {
                    "a": a,
                    "b": b,
                    "wins_a": wins_a,
                    "wins_b": wins_b,
                    "ties": ties,
                    "p_value": float(p),
                    "median_paired_diff": float(np.median(diffs)),
                }
            )
    return {"table": table, "comparisons": comparisons, "seeds": seeds}


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------


def write_curves_csv(path: str | Path, records: list[RunRecord]) -> None:
    agg = aggregate_curves(records)
    try:
        errors = error_curve(records)
    except InputError:
        errors = None
    with Path(path).open("w", newline="") as fh:
        fh.write(f"# {CURVES_CSV_SCHEMA}\n")
        writer = csv.writer(fh)
        header = ["iteration", "regret_mean", "regret_se", "regret_median", "errors"]
        writer.writerow(header)
        for i in range(len(agg["iteration"])):
            row = [
                int(agg["iteration"][i]),
                repr(float(agg["regret_mean"][i])),
                repr(float(agg["regret_se"][i])),
                repr(float(agg["regret_median"][i])),
                repr(float(errors[i])) if errors is not None else "",
            ]
            writer.writerow(row)


def read_curves_csv(path: str | Path) -> dict:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith(f"# {CURVES_CSV_SCHEMA}"):
        raise InputError(f"{path}: unknown curves CSV schema")
    reader = csv.DictReader(lines[1:])
    cols: dict[str, list] = {name: [] for name in reader.fieldnames}
    for row in reader:
        for key, value in row.items():
            cols[key].append(float(value) if value != "" else np.nan)
    return {k: np.asarray(v) for k, v in cols.items()}


def condition_hash(name: str) -> str:
    return hashlib.sha256(name.encode()).hexdigest()[:10]


def write_comparison_csv(path_dir: str | Path, results: dict[str, list[RunRecord]]) -> Path:
    out = compare_conditions(results)
    name = "-vs-".join(sorted(results))
    path = Path(path_dir) / f"compare_{condition_hash(name)}.csv"
    with path.open("w", newline="") as fh:
        fh.write(f"# {COMPARE_CSV_SCHEMA} conditions={name}\n")
        writer = csv.writer(fh)
        writer.writerow(["condition", "median_final_regret", "rank"])
        for row in out["table"]:
            writer.writerow([row["condition"], repr(row["median_final_regret"]), row["rank"]])
        writer.writerow([])
        writer.writerow(["a", "b", "wins_a", "wins_b", "ties", "p_value", "median_paired_diff"])
        for cmp_row in out["comparisons"]:
            writer.writerow(
                [
                    cmp_row["a"],
                    cmp_row["b"],
                    cmp_row["wins_a"],
                    cmp_row["wins_b"],
                    cmp_row["ties"],
                    repr(cmp_row["p_value"]),
                    repr(cmp_row["median_paired_diff"]),
                ]
            )
    return path
