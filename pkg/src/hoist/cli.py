"""Command-line front end: ``hoist run``, ``hoist compare`` and ``hoist report``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import statistics
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any

from .config_space import ConfigSpace, SpaceError
from .objectives import BUILTINS, builtin, external_objective
from .optimizer import MODES, RunAborted, RunOptions, run, write_convergence_csv
from .scheduler import plan_brackets, sweep_resource
from .store import HistoryWriter, StoreError, read_history, replay
from .surrogate import ForestParams

log = logging.getLogger("hoist")

EXIT_USAGE = 2
EXIT_ABORTED = 3
OBJECTIVES = sorted(BUILTINS) + ["external"]


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_USAGE):
        super().__init__(message)
        self.code = code


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--space", help="JSON space file (defaults to the builtin objective's space)")
    p.add_argument("--objective", default="curve-bench", choices=OBJECTIVES)
    p.add_argument("--external-cmd", help="command for --objective external")
    p.add_argument("--max-resource", type=float, default=27.0)
    p.add_argument("--eta", type=float, default=3.0)
    p.add_argument("--loops", type=int, default=4, help="number of full bracket sweeps")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rho", type=float, default=0.5)
    p.add_argument("--trees", type=int, default=10)
    p.add_argument("--pool-size", type=int, default=500)
    p.add_argument("--random-fraction", type=float, default=0.0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--timeout-secs", type=float, default=60.0)
    p.add_argument("--out", required=True, type=Path)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hoist", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one optimization")
    _add_run_flags(p_run)
    p_run.add_argument("--mode", default="hoist", choices=MODES)

    p_cmp = sub.add_parser("compare", help="run several modes over several seeds")
    _add_run_flags(p_cmp)
    p_cmp.add_argument("--modes", default="hoist,hyperband_random,random")
    p_cmp.add_argument("--seeds", default="0-9", help="comma list and/or a-b ranges")

    p_rep = sub.add_parser("report", help="summarize a run directory")
    p_rep.add_argument("run_dir", type=Path)
    return parser


def parse_seeds(text: str) -> list[int]:
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo, hi = part.split("-", 1)
            seeds.extend(range(int(lo), int(hi) + 1))
        else:
            seeds.append(int(part))
    return seeds


def _objective_and_space(args: argparse.Namespace):
    space = None
    if args.space is not None:
        try:
            space = ConfigSpace.load(args.space)
        except OSError as exc:
            raise CliError(f"cannot read space file: {exc}") from exc
        except SpaceError as exc:
            raise CliError(f"invalid space file {args.space}: {exc}") from exc
    if args.objective == "external":
        if not args.external_cmd:
            raise CliError("--objective external requires --external-cmd")
        if space is None:
            raise CliError("--objective external requires --space")
        if args.timeout_secs <= 0:
            raise CliError("--timeout-secs must be > 0")
        return external_objective(args.external_cmd, space, args.timeout_secs), space
    obj = builtin(args.objective)
    if space is not None:
        missing = set(obj.space.names) - set(space.names)
        if missing:
            raise CliError(
                f"space lacks parameter {sorted(missing)[0]!r} required by {args.objective}"
            )
    return obj, space or obj.space


def _options(args: argparse.Namespace, mode: str, seed: int) -> RunOptions:
    try:
        return RunOptions(
            max_resource=args.max_resource,
            eta=args.eta,
            total_bracket_loops=args.loops,
            rho=args.rho,
            forest=ForestParams(tree_count=args.trees),
            pool_size=args.pool_size,
            random_fraction=args.random_fraction,
            mode=mode,
            seed=seed,
            workers=args.workers,
        )
    except ValueError as exc:
        raise CliError(str(exc)) from exc


def _settings(args: argparse.Namespace) -> dict[str, Any]:
    return {
        k: (str(v) if isinstance(v, Path) else v)
        for k, v in sorted(vars(args).items())
        if k != "command"
    }


def _header(args, options: RunOptions, space: ConfigSpace) -> dict[str, Any]:
    return {
        "event": "run",
        "objective": args.objective,
        "external_cmd": args.external_cmd,
        "options": options.to_dict(),
        "space": space.to_dict(),
    }


def _compatible(old: dict[str, Any], new: dict[str, Any]) -> bool:
    def strip(h):
        h = json.loads(json.dumps(h))
        h["options"].pop("total_bracket_loops", None)
        h["options"].pop("workers", None)
        return h

    return strip(old) == strip(new)


def _write_json_atomic(path: Path, doc: Any) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")
    os.replace(tmp, path)


def cmd_run(args: argparse.Namespace) -> int:
    objective, space = _objective_and_space(args)
    options = _options(args, args.mode, args.seed)
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    hist_path = out / "history.jsonl"
    header = _header(args, options, space)

    resume = None
    prev = hist_path.with_suffix(".jsonl.prev")
    if hist_path.exists() or prev.exists():
        try:
            candidates = [read_history(p) for p in (hist_path, prev) if p.exists()]
        except StoreError as exc:
            raise CliError(f"cannot resume: {exc}") from exc
        # a crash mid-resume leaves the fuller log in .prev
        events = max(candidates, key=len)
        old = next((e for e in events if e.get("event") == "run"), None)
        if old is None or not _compatible(old, header):
            raise CliError(f"{hist_path} was written with incompatible options; refusing to resume")
        resume = events
        if hist_path.exists() and len(events) == len(read_history(hist_path)):
            os.replace(hist_path, prev)
        log.info("resuming from %d logged events", len(events))

    history = HistoryWriter.open(hist_path, "w")
    try:
        history.write(header)
        result = run(space, objective, options, history=history, resume_events=resume)
    except RunAborted as exc:
        print(f"run aborted: {exc}", file=sys.stderr)
        return EXIT_ABORTED
    finally:
        history.close()
    prev.unlink(missing_ok=True)

    write_convergence_csv(result.trace, out / "convergence.csv")
    inc = result.incumbent
    _write_json_atomic(
        out / "result.json",
        {
            "incumbent": None if inc is None else dict(inc.config.values),
            "loss": None if inc is None else inc.loss,
            "total_resource": result.total_resource,
            "evaluations": len(result.trace),
            "final_weights": list(result.weights[-1].weights.weights) if result.weights else None,
            "options": options.to_dict(),
            "settings": _settings(args),
        },
    )
    print(f"incumbent loss: {inc.loss if inc else 'n/a'}")
    return 0


def _best_at(trace, checkpoint: float) -> float:
    best = math.inf
    for cum, loss in trace:
        if cum > checkpoint + 1e-9:
            break
        best = loss
    return best


def cmd_compare(args: argparse.Namespace) -> int:
    objective, space = _objective_and_space(args)
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    bad = [m for m in modes if m not in MODES]
    if bad:
        raise CliError(f"unknown mode {bad[0]!r}")
    try:
        seeds = parse_seeds(args.seeds)
    except ValueError as exc:
        raise CliError(f"bad --seeds value: {exc}") from exc
    if len(modes) < 2 or len(seeds) < 2:
        raise CliError("compare needs at least 2 modes and 2 seeds")
    args.out.mkdir(parents=True, exist_ok=True)

    base = _options(args, modes[0], seeds[0])
    per_sweep = sweep_resource(plan_brackets(base.max_resource, base.eta))
    checkpoints = [per_sweep * (k + 1) for k in range(base.total_bracket_loops)]

    rows = []
    traces: dict[str, list] = {m: [] for m in modes}
    for mode in modes:
        for seed in seeds:
            opts = replace(base, mode=mode, seed=seed)
            try:
                result = run(space, objective, opts)
            except Exception as exc:  # noqa: BLE001 - one sub-run must not sink the sweep
                log.error("sub-run mode=%s seed=%s failed: %s", mode, seed, exc)
                rows.append([mode, seed, "", "failed"])
                continue
            traces[mode].append(result.trace)
            rows.extend([mode, seed, repr(c), repr(b)] for c, b in result.trace)

    _write_csv(args.out / "compare.csv", ["mode", "seed", "cum_resource", "best_loss"], rows)
    summary = []
    for mode in modes:
        for cp in checkpoints:
            vals = [_best_at(t, cp) for t in traces[mode]]
            med = statistics.median(vals) if vals else math.nan
            summary.append([mode, repr(cp), repr(float(med))])
    _write_csv(args.out / "summary.csv", ["mode", "cum_resource", "median_best_loss"], summary)
    return 0


def _write_csv(path: Path, header: list[str], rows: list) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    os.replace(tmp, path)


def cmd_report(args: argparse.Namespace) -> int:
    hist_path = args.run_dir / "history.jsonl"
    if not hist_path.is_file():
        raise CliError(f"no history file in {args.run_dir}")
    try:
        events = read_history(hist_path)
        header = next((e for e in events if e.get("event") == "run"), None)
        if header is None:
            raise StoreError("history has no run header")
        space = ConfigSpace.from_dict(header["space"])
        opts = header["options"]
        store = replay(events, space, opts["max_resource"], opts["eta"])
    except (StoreError, SpaceError, KeyError, TypeError) as exc:
        raise CliError(f"corrupt history {hist_path}: {exc}") from exc

    weights = [e for e in events if e.get("event") == "weights"]
    inc = store.incumbent()
    total = sum(r.resource for r in store.all_records())
    lines = [
        ("mode", opts.get("mode")),
        ("incumbent_loss", repr(inc.loss) if inc else "n/a"),
        ("incumbent_config", json.dumps(dict(inc.config.values), sort_keys=True) if inc else "n/a"),
        ("total_resource", repr(total)),
        ("evaluations", len(store) + len(store.failures)),
        ("failed_evaluations", len(store.failures)),
        ("weights", ",".join(repr(c) for c in weights[-1]["c"]) if weights else "n/a"),
        ("stage_resources", ",".join(repr(s.resource_level) for s in store.stages)),
        ("stage_sizes", ",".join(str(n) for n in store.sizes())),
    ]
    for key, value in lines:
        print(f"{key}: {value}")
    return 0


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("HOIST_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    args = build_parser().parse_args(argv)
    handlers = {"run": cmd_run, "compare": cmd_compare, "report": cmd_report}
    try:
        return handlers[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
