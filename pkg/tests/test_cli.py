import json
from pathlib import Path

import pytest
import yaml

from bope.cli import main
from bope.metrics import read_curves_csv

FAST_RUN = {
    "problem": "dtlz2",
    "iterations": 1,
    "init_observations": 5,
    "init_comparisons": 2,
    "ensemble_size": 2,
    "train": {"epochs": 40},
    "acquisition": {"n_posterior_samples": 4, "raw_samples": 8, "restarts": 2},
    "seed": 1,
}


def write_yaml(path: Path, payload: dict) -> Path:
    path.write_text(yaml.safe_dump(payload))
    return path


class TestRunCommand:
    def test_valid_config_produces_outputs(self, tmp_path, capsys):
        cfg = write_yaml(tmp_path / "run.yaml", FAST_RUN)
        code = main(["run", "--config", str(cfg), "--out", str(tmp_path / "out")])
        assert code == 0
        out = capsys.readouterr().out
        assert "final regret" in out
        assert list((tmp_path / "out").glob("*.jsonl"))
        assert list((tmp_path / "out").glob("*.csv"))

    def test_unknown_problem_exits_2_and_names_field(self, tmp_path, capsys):
        cfg = write_yaml(tmp_path / "run.yaml", {**FAST_RUN, "problem": "nope"})
        code = main(["run", "--config", str(cfg), "--out", str(tmp_path / "out")])
        assert code == 2
        assert "problem" in capsys.readouterr().err

    def test_unknown_field_exits_2(self, tmp_path, capsys):
        cfg = write_yaml(tmp_path / "run.yaml", {**FAST_RUN, "bogus_field": 1})
        code = main(["run", "--config", str(cfg), "--out", str(tmp_path / "out")])
        assert code == 2
        assert "bogus_field" in capsys.readouterr().err

    def test_seed_override_changes_outputs_deterministically(self, tmp_path):
        cfg = write_yaml(tmp_path / "run.yaml", FAST_RUN)
        for sub, seed in (("a", 5), ("b", 5), ("c", 6)):
            main(["run", "--config", str(cfg), "--seed", str(seed), "--out", str(tmp_path / sub)])

        def load(sub):
            path = next((tmp_path / sub).glob("*.jsonl"))
            lines = [json.loads(l) for l in path.read_text().splitlines()]
            for line in lines:  # wall times differ across runs
                line.pop("times", None)
            return lines

        assert load("a") == load("b")
        assert load("a") != load("c")


class TestBenchCommand:
    def test_matrix_counts_and_rerun_identical(self, tmp_path):
        bench = {
            "problems": ["dtlz2"],
            "algorithms": ["random", "bope"],
            "seeds": [0, 1],
            "base": FAST_RUN,
        }
        cfg = write_yaml(tmp_path / "bench.yaml", bench)
        out1, out2 = tmp_path / "b1", tmp_path / "b2"
        assert main(["bench", "--config", str(cfg), "--out", str(out1), "--parallel", "2"]) == 0
        assert len(list(out1.glob("*.jsonl"))) == 4
        curves = sorted(out1.glob("curve_*.csv"))
        assert len(curves) == 2

        assert main(["bench", "--config", str(cfg), "--out", str(out2)]) == 0
        for c1 in curves:
            c2 = out2 / c1.name
            a, b = read_curves_csv(c1), read_curves_csv(c2)
            assert a.keys() == b.keys()
            for key in a:
                assert (a[key] == b[key]).all() or (a[key] != a[key]).all()  # NaN column

    def test_empty_matrix_exits_2(self, tmp_path, capsys):
        cfg = write_yaml(
            tmp_path / "bench.yaml", {"problems": [], "algorithms": ["bope"], "seeds": [0]}
        )
        assert main(["bench", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2

    def test_aggregates_match_bruteforce_recomputation(self, tmp_path):
        from bope.loop import RunRecord
        from bope.metrics import aggregate_curves

        bench = {
            "problems": ["dtlz2"],
            "algorithms": ["random"],
            "seeds": [0, 1, 2],
            "base": FAST_RUN,
        }
        cfg = write_yaml(tmp_path / "bench.yaml", bench)
        out = tmp_path / "bench_out"
        assert main(["bench", "--config", str(cfg), "--out", str(out)]) == 0
        records = [RunRecord.read_jsonl(p) for p in sorted(out.glob("*.jsonl"))]
        agg = aggregate_curves(records)
        csv_cols = read_curves_csv(next(out.glob("curve_*.csv")))
        assert csv_cols["regret_mean"] == pytest.approx(agg["regret_mean"])
        assert csv_cols["regret_se"] == pytest.approx(agg["regret_se"])


class TestMetricsCommand:
    def test_aggregates_and_comparison(self, tmp_path):
        bench = {
            "problems": ["dtlz2"],
            "algorithms": ["random"],
            "seeds": [0, 1],
            "base": FAST_RUN,
        }
        for name, seeds in (("condA", [0, 1]), ("condB", [0, 1])):
            cfg = write_yaml(tmp_path / f"{name}.yaml", {**bench, "seeds": seeds})
            assert main(["bench", "--config", str(cfg), "--out", str(tmp_path / name)]) == 0
        out = tmp_path / "metrics_out"
        code = main(
            ["metrics", "--records", str(tmp_path / "condA"), str(tmp_path / "condB"),
             "--out", str(out)]
        )
        assert code == 0
        assert (out / "curve_condA.csv").exists()
        assert list(out.glob("compare_*.csv"))

    def test_missing_records_dir_exits_2(self, tmp_path):
        code = main(["metrics", "--records", str(tmp_path / "empty"), "--out", str(tmp_path)])
        assert code == 2
