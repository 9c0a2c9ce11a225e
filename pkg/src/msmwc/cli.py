"""Command-line entry point: ``run``, ``sweep`` and ``verify``.

Exit codes: 0 success, 1 verification failure, 2 bad config, 3 learner
failure during a run.
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import itertools
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

import jsonschema

from .core import regret
from .harness import EnvironmentSpec, LearnerRuntimeError, build_environment, build_learner, run
from .predictors import PredictorKind

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


def load_schema(name):
    return json.loads(resources.files("msmwc").joinpath("schemas", f"{name}.schema.json").read_text())


# ---------------------------------------------------------------------------
# config handling


def read_config(path):
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return cfg


def parse_seeds(text):
    """``"3"`` -> [3]; ``"1..8"`` -> [1, ..., 8]."""
    try:
        if ".." in text:
            a, b = text.split("..", 1)
            a, b = int(a), int(b)
            if b < a:
                raise ValueError
            return list(range(a, b + 1))
        return [int(text)]
    except ValueError:
        raise ConfigError(f"bad seed specification {text!r}; use n or a..b") from None


def _seeds_of(cfg):
    s = cfg.get("seed", 0)
    return list(s) if isinstance(s, list) else [s]


def _env_spec(cfg, seed):
    env = dict(cfg["environment"])
    kind = env.pop("kind")
    return EnvironmentSpec.make(kind, cfg["d"], cfg["T"], seed, **env)


def validate_config(cfg, *, allow_grid=False):
    """Schema check plus a dry construction of every environment and learner."""
    try:
        jsonschema.validate(cfg, load_schema("config"))
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"config schema violation at {list(exc.absolute_path)}: {exc.message}") from None
    if "grid" in cfg and not allow_grid:
        raise ConfigError("'grid' is only valid for sweep")
    try:
        PredictorKind.parse(cfg.get("predictor", "zero"))
        for seed in _seeds_of(cfg):
            spec = _env_spec(cfg, seed)
        build_learner(cfg["learner"], cfg["d"], cfg["T"], cfg.get("predictor", "zero"), build_environment(spec))
    except (ValueError, TypeError, KeyError, AssertionError) as exc:
        raise ConfigError(f"invalid config: {exc}") from None
    for c in cfg.get("checkpoints", []):
        if c > cfg["T"]:
            raise ConfigError(f"checkpoint {c} beyond T={cfg['T']}")


# ---------------------------------------------------------------------------
# output formats


def _num(x):
    return repr(float(x))


def trace_csv(result):
    tr = result.trace
    labels = list(result.comparators)
    learner = tr.learner_losses()
    comp = {k: tr.comparator_losses(u) for k, u in result.comparators.items()}
    cum = {k: tr.cumulative_regret(u) for k, u in result.comparators.items()}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "learner_loss"] + [f"comparator_{k}_loss" for k in labels] + [f"regret_{k}" for k in labels] + ["event"])
    for t in range(tr.T):
        w.writerow(
            [t + 1, _num(learner[t])]
            + [_num(comp[k][t]) for k in labels]
            + [_num(cum[k][t]) for k in labels]
            + [";".join(tr.events.get(t + 1, []))]
        )
    return buf.getvalue()


def _finite_or_none(x):
    return None if x is None or not math.isfinite(x) else x


def _clean_report(rep):
    rep = dict(rep)
    for key in ("realized", "ratio"):
        rep[key] = _finite_or_none(rep[key])
    rep["terms"] = {k: v for k, v in rep["terms"].items() if math.isfinite(v)}
    return rep


def _diagnostics(learner):
    out = {}
    for name in ("condition_violations", "unconverged_solves", "hint_clamps", "doublings"):
        if hasattr(learner, name):
            out[name] = int(getattr(learner, name))
    tracker = getattr(learner, "tracker", None)
    if tracker is not None:
        out.update(restarts=int(tracker.restarts), truncation_damage=float(tracker.damage), range_B=float(tracker.B))
    return out


def summary_dict(cfg, seed, result):
    out = {
        "config": cfg,
        "seed": int(seed),
        "family": result.info["family"],
        "final_regrets": {k: float(regret(result.trace, u)) for k, u in result.comparators.items()},
        "reports": [_clean_report(r) for r in result.reports],
        "events": result.events,
        "diagnostics": _diagnostics(result.learner),
        "timing_file": "timing.json",
    }
    jsonschema.validate(out, load_schema("summary"))
    return out


def _dump(obj):
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


# ---------------------------------------------------------------------------
# commands


def _execute(cfg, seed):
    t0 = time.perf_counter()
    res = run(
        _env_spec(cfg, seed),
        cfg["learner"],
        cfg.get("predictor", "zero"),
        checkpoints=cfg.get("checkpoints"),
        audit=cfg.get("audit"),
    )
    return res, time.perf_counter() - t0


def run_config(cfg, out_dir, seeds=None):
    """Validate, run every seed, then write outputs. Raises ConfigError / LearnerRuntimeError."""
    cfg = copy.deepcopy(cfg)
    if seeds is not None:
        cfg["seed"] = seeds if len(seeds) > 1 else seeds[0]
    validate_config(cfg)
    seeds = _seeds_of(cfg)
    files, timing = {}, {}
    for seed in seeds:
        res, secs = _execute(cfg, seed)
        suffix = f"_seed{seed}" if len(seeds) > 1 else ""
        files[f"trace{suffix}.csv"] = trace_csv(res)
        files[f"summary{suffix}.json"] = _dump(summary_dict(cfg, seed, res))
        timing[str(seed)] = secs
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (out / name).write_text(text)
    (out / "timing.json").write_text(_dump({"wall_clock_seconds": timing}))
    return sorted(files)


def _set_dotted(cfg, path, value):
    keys = path.split(".")
    node = cfg
    for k in keys[:-1]:
        node = node.setdefault(k, {})
    node[keys[-1]] = value


def expand_grid(cfg):
    grid = cfg.get("grid") or {}
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise ConfigError("sweep needs a nonempty 'grid' with nonempty value lists")
    base = {k: v for k, v in cfg.items() if k not in ("grid", "out")}
    keys = sorted(grid)
    points = []
    for values in itertools.product(*(grid[k] for k in keys)):
        point = dict(zip(keys, values))
        c = copy.deepcopy(base)
        for k, v in point.items():
            _set_dotted(c, k, v)
        points.append((point, c))
    return points


def _sweep_worker(args):
    c, out = args
    run_config(c, out)
    return str(out)


def sweep_config(cfg, out_dir, resume=False, threads=None):
    validate_config(cfg, allow_grid=True)
    points = expand_grid(cfg)
    for _, c in points:
        validate_config(c)
    out = Path(out_dir)
    jobs, index = [], []
    for i, (point, c) in enumerate(points):
        sub = out / f"point_{i:04d}"
        index.append({"point": point, "out": sub.name})
        done = (sub / "summary.json").exists() or any(sub.glob("summary_seed*.json"))
        if not (resume and done):
            jobs.append((c, sub))
    threads = threads or int(os.environ.get("MSMWC_THREADS", "1") or 1)
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            list(ex.map(_sweep_worker, jobs))
    else:
        for job in jobs:
            _sweep_worker(job)
    out.mkdir(parents=True, exist_ok=True)
    (out / "index.json").write_text(_dump({"points": index}))
    return len(jobs), len(points)


def _default_out(cfg, config_path):
    return cfg.get("out") or str(Path("runs") / Path(config_path).stem)


def cmd_run(args):
    try:
        cfg = read_config(args.config)
        seeds = parse_seeds(args.seed) if args.seed else None
        out = args.out or _default_out(cfg, args.config)
        written = run_config(cfg, out, seeds)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LearnerRuntimeError as exc:
        print(f"learner error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(json.dumps({"out": str(out), "files": written}))
    return EXIT_OK


def cmd_sweep(args):
    try:
        cfg = read_config(args.config)
        out = args.out or _default_out(cfg, args.config)
        ran, total = sweep_config(cfg, out, resume=args.resume)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LearnerRuntimeError as exc:
        print(f"learner error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(json.dumps({"out": str(out), "points": total, "ran": ran}))
    return EXIT_OK


def cmd_verify(args):
    from . import checks

    try:
        report = checks.verify(only=args.only, echo=lambda s: print(s, file=sys.stderr))
    except KeyError as exc:
        print(f"error: {exc.args[0]}", file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps(report, indent=2))
    return EXIT_OK if report["status"] == "pass" else EXIT_VERIFY


def build_parser():
    p = argparse.ArgumentParser(prog="msmwc", description="Run and audit online-learning experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment config")
    r.add_argument("--config", required=True)
    r.add_argument("--out")
    r.add_argument("--seed", help="n or a..b; overrides the config seed")
    r.set_defaults(fn=cmd_run)
    s = sub.add_parser("sweep", help="run the cartesian grid of a config")
    s.add_argument("--config", required=True)
    s.add_argument("--out")
    s.add_argument("--resume", action="store_true", help="skip points whose outputs exist")
    s.set_defaults(fn=cmd_sweep)
    v = sub.add_parser("verify", help="run property checks and acceptance criteria")
    v.add_argument("--only", help="module name, e.g. entropy_omd or acceptance")
    v.set_defaults(fn=cmd_verify)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
