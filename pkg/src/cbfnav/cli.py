"""Command line entry point.

Exit codes: 0 success, 1 scenario fault (run did not land within the margin),
2 configuration error, 3 verification failure.  The output directory is
``--out``, else ``$CBFNAV_OUT``, else ``./out``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .config import ConfigError, ScenarioConfig, load_config, preset, set_field
from .export import to_jsonable, write_run
from .harness import run_scenario

EXIT_OK, EXIT_FAULT, EXIT_CONFIG, EXIT_VERIFY = 0, 1, 2, 3


def _out_dir(arg: str | None) -> Path:
    return Path(arg or os.environ.get("CBFNAV_OUT") or "out")


def _summary(cfg: ScenarioConfig, result) -> str:
    m = result.metrics
    share = 100.0 * m.breach_duration / m.flight_time if m.flight_time > 0 else 0.0
    return (
        f"{cfg.name} seed={cfg.seed}: {m.termination}, landing error {m.landing_error:.4f} m, "
        f"breach {m.breach_duration:.2f} s ({share:.1f}% of {m.flight_time:.1f} s), success={m.success}"
    )


def _run_one(cfg: ScenarioConfig, out: Path) -> int:
    result = run_scenario(cfg)
    write_run(result, out)
    print(_summary(cfg, result))
    print(f"telemetry sha256 {result.telemetry_hash()}")
    print(f"artifacts in {out}")
    return EXIT_OK if result.metrics.success else EXIT_FAULT


def cmd_run(args) -> int:
    cfg = load_config(args.config).with_seed(args.seed)
    return _run_one(cfg, _out_dir(args.out))


def cmd_preset(args) -> int:
    cfg = preset(args.name).with_seed(args.seed)
    return _run_one(cfg, _out_dir(args.out))


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _sweep_job(job):
    cfg, out = job
    result = run_scenario(cfg)
    write_run(result, out)
    return result.metrics.to_dict()


def cmd_sweep(args) -> int:
    base = load_config(args.config) if args.config else preset(args.preset)
    base = base.with_seed(args.seed)
    out = _out_dir(args.out) / "sweep"
    values = [_parse_value(v) for v in args.values]
    # validate every point before spending time on any run
    cfgs = [set_field(base, args.param, v) for v in values]
    jobs = [(cfg, out / f"run{i:03d}") for i, cfg in enumerate(cfgs)]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as ex:
            metrics = list(ex.map(_sweep_job, jobs))
    else:
        metrics = [_sweep_job(j) for j in jobs]

    rows = [{"index": i, "param": args.param, "value": v, **m} for i, (v, m) in enumerate(zip(values, metrics))]
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.json").write_text(json.dumps(to_jsonable(rows), indent=2) + "\n")
    flat_keys = ["index", "value", "success", "termination", "landing_error", "breach_duration", "flight_time", "min_h_v"]
    with (out / "sweep.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(flat_keys)
        for r in rows:
            w.writerow([json.dumps(r["value"]) if k == "value" else r[k] for k in flat_keys])

    print(f"{'#':>3}  {args.param:<24} {'success':<8} {'termination':<26} {'error':>8} {'breach':>7}")
    for r in rows:
        print(
            f"{r['index']:>3}  {json.dumps(r['value']):<24} {str(r['success']):<8} {r['termination']:<26} "
            f"{r['landing_error']:>8.4f} {r['breach_duration']:>7.2f}"
        )
    print(f"sweep results in {out}")
    return EXIT_OK if all(r["success"] for r in rows) else EXIT_FAULT


def cmd_verify(args) -> int:
    from .verify import run_all

    results = run_all()
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_VERIFY if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cbfnav", description="Barrier-filtered vision-based landing simulator")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario from a JSON config file")
    r.add_argument("--config", required=True)
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--out", default=None)
    r.set_defaults(func=cmd_run)

    pr = sub.add_parser("preset", help="run a built-in scenario")
    pr.add_argument("name", help="run1 or run2")
    pr.add_argument("--seed", type=int, default=None)
    pr.add_argument("--out", default=None)
    pr.set_defaults(func=cmd_preset)

    sw = sub.add_parser("sweep", help="batch runs over values of one config field")
    sw.add_argument("--param", required=True, help="dotted field path, e.g. wind.mean")
    sw.add_argument("--values", nargs="+", required=True, help="JSON values, e.g. 0.2 '[4, 3, 0]'")
    src = sw.add_mutually_exclusive_group()
    src.add_argument("--config", default=None)
    src.add_argument("--preset", default="run1")
    sw.add_argument("--seed", type=int, default=None)
    sw.add_argument("--jobs", type=int, default=1)
    sw.add_argument("--out", default=None)
    sw.set_defaults(func=cmd_sweep)

    v = sub.add_parser("verify", help="run the invariant and oracle checks")
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
