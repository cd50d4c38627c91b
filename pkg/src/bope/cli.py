"""Command-line entry points: single runs, benchmark matrices, model-quality
metrics, and the live session service."""

from __future__ import annotations

import argparse
import json
import multiprocessing as mp
import sys
from pathlib import Path

from bope.config import RunConfig, load_bench_config, load_run_config
from bope.errors import BopeError, ConfigError

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2


def _run_name(cfg: RunConfig) -> str:
    utility = cfg.utility or "default"
    return f"{cfg.problem}+{utility}_{cfg.algorithm}_seed{cfg.seed}"


def cmd_run(args) -> int:
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    cfg = load_run_config(args.config, overrides)
    from bope.loop import run
    from bope.metrics import write_curves_csv

    record = run(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    jsonl = out / f"{_run_name(cfg)}.jsonl"
    record.write_jsonl(jsonl)
    write_curves_csv(out / f"{_run_name(cfg)}.csv", [record])
    print(f"record: {jsonl}")
    print(f"termination: {record.termination}")
    print(f"final regret: {record.final_regret:.6g}")
    return EXIT_OK if record.termination != "error" else EXIT_FAILURE


def _bench_cell(payload) -> dict:
    cfg_dict, out_dir = payload
    import torch

    torch.set_num_threads(1)
    from bope.loop import run

    cfg = RunConfig.from_dict(cfg_dict)
    try:
        record = run(cfg)
        path = Path(out_dir) / f"{_run_name(cfg)}.jsonl"
        record.write_jsonl(path)
        return {
            "name": _run_name(cfg),
            "ok": record.termination != "error",
            "error": record.error,
            "path": str(path),
        }
    except BopeError as exc:
        return {"name": _run_name(cfg), "ok": False, "error": str(exc), "path": None}


def cmd_bench(args) -> int:
    bench = load_bench_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    runs = bench.runs()
    payloads = [(cfg.to_dict(), str(out)) for cfg in runs]

    if args.parallel > 1:
        ctx = mp.get_context("spawn")
        with ctx.Pool(args.parallel) as pool:
            outcomes = pool.map(_bench_cell, payloads)
    else:
        outcomes = [_bench_cell(p) for p in payloads]

    from bope.loop import RunRecord
    from bope.metrics import write_curves_csv

    by_curve: dict[str, list] = {}
    for cfg, outcome in zip(runs, outcomes):
        if outcome["ok"] and outcome["path"]:
            key = f"{cfg.problem}+{cfg.utility or 'default'}_{cfg.algorithm}"
            by_curve.setdefault(key, []).append(RunRecord.read_jsonl(outcome["path"]))
    for key, records in by_curve.items():
        write_curves_csv(out / f"curve_{key}.csv", records)

    failures = [o for o in outcomes if not o["ok"]]
    (out / "bench_summary.json").write_text(
        json.dumps({"runs": outcomes, "failures": len(failures)}, indent=1)
    )
    print(f"{len(outcomes) - len(failures)}/{len(outcomes)} runs succeeded; "
          f"{len(by_curve)} aggregate curves written to {out}")
    for f in failures:
        print(f"FAILED {f['name']}: {f['error']}", file=sys.stderr)
    return EXIT_FAILURE if failures else EXIT_OK


def cmd_metrics(args) -> int:
    from bope.loop import RunRecord
    from bope.metrics import write_comparison_csv, write_curves_csv

    groups: dict[str, list] = {}
    for directory in args.records:
        paths = sorted(Path(directory).glob("*.jsonl"))
        if not paths:
            raise ConfigError(f"records: no .jsonl files under {directory}")
        groups[Path(directory).name] = [RunRecord.read_jsonl(p) for p in paths]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, records in groups.items():
        write_curves_csv(out / f"curve_{name}.csv", records)
    if len(groups) >= 2:
        path = write_comparison_csv(out, groups)
        print(f"comparison table: {path}")
    print(f"curves written to {out}")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from bope.service import create_app

    host, _, port = args.bind.rpartition(":")
    app = create_app(Path(args.out))
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port), log_level="warning")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bope",
        description="Preference-guided multi-objective Bayesian optimization",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a single optimization run")
    p_run.add_argument("--config", required=True, help="YAML run configuration")
    p_run.add_argument("--seed", type=int, default=None, help="override master seed")
    p_run.add_argument("--out", default="results", help="output directory")
    p_run.set_defaults(func=cmd_run)

    p_bench = sub.add_parser("bench", help="run a problems x algorithms x seeds matrix")
    p_bench.add_argument("--config", required=True, help="YAML bench matrix")
    p_bench.add_argument("--out", default="bench", help="output directory")
    p_bench.add_argument("--parallel", type=int, default=1, help="worker processes")
    p_bench.set_defaults(func=cmd_bench)

    p_metrics = sub.add_parser("metrics", help="aggregate and compare recorded runs")
    p_metrics.add_argument(
        "--records", nargs="+", required=True, help="directories of .jsonl records"
    )
    p_metrics.add_argument("--out", default="metrics", help="output directory")
    p_metrics.set_defaults(func=cmd_metrics)

    p_serve = sub.add_parser("serve", help="serve the live decision-maker session API")
    p_serve.add_argument("--bind", default="127.0.0.1:8137", help="host:port")
    p_serve.add_argument("--out", default="sessions", help="session persistence directory")
    p_serve.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BopeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
