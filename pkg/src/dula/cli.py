"""Command-line entry point.

Every subcommand writes its artifacts plus ``manifest.json`` into an output
directory (``--out-dir``, default ``$DULA_OUTPUT_DIR`` or ``./dula-out``).
The manifest records the full argument set, so ``dula replay MANIFEST``
regenerates the same bytes. Wall-clock measurements never enter artifacts;
they go to ``timing.json``.

Exit codes: 0 success, 1 a check ran and failed, 2 usage error,
3 invalid input, 4 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import platform
import sys
import tempfile
import time
from importlib import metadata
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .dataset import DatasetSpec, QuotaError, dataset_to_bytes, dataset_to_csv, generate_balanced, load_dataset, split
from .kinematics import HandPose, InvalidInputError, JointLimits, forward_kinematics, load_body_config
from .optimizer import (
    CEMOptions,
    GradientOptions,
    InfeasibleError,
    ModelFailureError,
    PoseConstraint,
    compare,
    make_tasks,
    optimize_cem,
    optimize_gradient,
)
from .rula import ScoringError, TaskContext, rula, tables_as_dict
from .surrogate import (
    SurrogateModel,
    TrainConfig,
    TrainingError,
    confusion_matrix,
    cross_validate,
    grad_check,
    load_default_model,
    train,
)
from .teleop import (
    CORRECTIONS,
    DEMO_CONTEXT,
    HumanModelConfig,
    SimulationTrace,
    StepRecord,
    TeleopTask,
    demo_suite,
    episode_metrics,
    report_rows,
    run_episode,
)

log = logging.getLogger("dula")

SCHEMA_VERSION = 1
OUTPUT_DIR_ENV = "DULA_OUTPUT_DIR"

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_INVALID = 3
EXIT_RUNTIME = 4


class UsageError(Exception):
    pass


# --- file helpers --------------------------------------------------------------------


def atomic_write(path: Path, data: bytes | str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def write_json(path: Path, obj: dict) -> None:
    atomic_write(path, dump_json({"schema_version": SCHEMA_VERSION, **obj}))


def read_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise InvalidInputError(f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"{path}: malformed JSON ({exc})") from None


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def versions() -> dict:
    try:
        dist = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        dist = __version__
    return {"dula": dist, "numpy": np.__version__, "scipy": scipy.__version__, "python": platform.python_version()}


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()


def write_manifest(out_dir: Path, command: str, config: dict, outputs: list[str]) -> None:
    seed = config.get("seed")
    write_json(out_dir / "manifest.json", {
        "command": command,
        "config": config,
        "config_hash": config_hash(config),
        "seed": seed,
        "versions": versions(),
        "outputs": {name: sha256_file(out_dir / name) for name in sorted(outputs)},
    })


def parse_range(text: str) -> list[int]:
    """'0-19' or '1,4,7' or '3'."""
    out = []
    try:
        for part in text.split(","):
            if "-" in part.strip()[1:]:
                a, b = part.split("-", 1)
                out.extend(range(int(a), int(b) + 1))
            else:
                out.append(int(part))
    except ValueError:
        raise InvalidInputError(f"bad seed list {text!r}") from None
    return out


def parse_vector(text: str, n: int = 10) -> np.ndarray:
    """Comma-separated numbers or a JSON file holding a list."""
    if os.path.exists(text):
        values = read_json(text)
    else:
        try:
            values = [float(v) for v in text.split(",")]
        except ValueError:
            raise InvalidInputError(f"expected {n} comma-separated numbers, got {text!r}") from None
    arr = np.asarray(values, dtype=float)
    if arr.shape != (n,):
        raise InvalidInputError(f"expected {n} values, got shape {arr.shape}")
    return arr


def load_model(path: str | None) -> SurrogateModel:
    if path is None:
        return load_default_model()
    if not os.path.exists(path):
        raise InvalidInputError(f"checkpoint not found: {path}")
    return SurrogateModel.load(path)


def load_context(path: str | None) -> TaskContext:
    if path is None:
        return TaskContext()
    return TaskContext.from_dict(read_json(path))


def load_limits(path: str | None) -> JointLimits:
    if path is None:
        return JointLimits.default()
    return load_body_config(path)[1]


# --- subcommands ---------------------------------------------------------------------


def cmd_gen_data(args, out: Path, timing: dict) -> list[str]:
    limits = load_limits(args.body_config)
    spec = DatasetSpec(total_count=args.count, per_label_min_fraction=args.min_fraction, rng_seed=args.seed,
                       split_fraction=args.split, focus_fraction=args.focus_fraction)
    t0 = time.perf_counter()
    data = generate_balanced(spec, limits, shards=args.shards, workers=args.workers)
    timing["generate_seconds"] = time.perf_counter() - t0
    train_set, test_set = split(data, spec.split_fraction, spec.rng_seed)
    extra = {"rng_seed": spec.rng_seed, "total_count": spec.total_count, "shards": args.shards}
    atomic_write(out / "train.dula", dataset_to_bytes(train_set, {**extra, "part": "train"}))
    atomic_write(out / "test.dula", dataset_to_bytes(test_set, {**extra, "part": "test"}))
    outputs = ["train.dula", "test.dula", "summary.json"]
    if args.csv:
        atomic_write(out / "train.csv", dataset_to_csv(train_set))
        atomic_write(out / "test.csv", dataset_to_csv(test_set))
        outputs += ["train.csv", "test.csv"]
    write_json(out / "summary.json", {
        "count": len(data), "train_count": len(train_set), "test_count": len(test_set),
        "histogram": data.histogram().tolist(), "quota": spec.quota,
    })
    print(f"generated {len(data)} samples; label histogram (1..7): {data.histogram().tolist()}")
    return outputs


def train_config_from_args(args) -> TrainConfig:
    return TrainConfig(epochs=args.epochs, learning_rate=args.lr, batch_size=args.batch_size, k_folds=args.k_folds,
                       rng_seed=args.seed, optimizer=args.optimizer, lr_schedule=args.schedule)


def cmd_train(args, out: Path, timing: dict) -> list[str]:
    data, _ = load_dataset(args.data)
    cfg = train_config_from_args(args)
    progress = (lambda epoch, loss: log.info("epoch %d loss %.6f", epoch, loss)) if args.verbose else None
    model, metrics = train(data, cfg, progress=progress)
    timing["train_seconds"] = metrics.pop("seconds")
    atomic_write(out / "checkpoint.json", model.to_json())
    outputs = ["checkpoint.json", "metrics.json"]
    result = {"final_loss": metrics["final_loss"], "loss_history": metrics["loss_history"]}
    if args.cross_validate:
        t0 = time.perf_counter()
        result["cross_validation"] = cross_validate(data, cfg)
        timing["cross_validation_seconds"] = time.perf_counter() - t0
    write_json(out / "metrics.json", result)
    print(f"trained {cfg.epochs} epochs, final loss {metrics['final_loss']:.6f}")
    return outputs


def cmd_eval(args, out: Path, timing: dict) -> list[str]:
    model = load_model(args.model)
    test_set, _ = load_dataset(args.data)
    cm = confusion_matrix(model, test_set)
    write_json(out / "eval.json", {"confusion_matrix": cm.to_dict(), "accuracy": cm.accuracy,
                                   "min_diagonal": cm.min_diagonal, "test_count": len(test_set)})
    print(cm.format())
    return ["eval.json"]


def cmd_grad_check(args, out: Path, timing: dict) -> list[str]:
    model = load_model(args.model)
    report = grad_check(model, n=args.n, h=args.step, seed=args.seed)
    passed = report["max_rel_error"] <= args.tolerance
    write_json(out / "grad_check.json", {**report, "tolerance": args.tolerance, "passed": passed})
    print(f"checked {report['checked']} points ({report['skipped_near_kink']} excluded near a kink); "
          f"max relative error {report['max_rel_error']:.3e} -> {'PASS' if passed else 'FAIL'}")
    args._check_failed = not passed
    return ["grad_check.json"]


def cmd_optimize(args, out: Path, timing: dict) -> list[str]:
    model = load_model(args.model)
    ctx = load_context(args.context)
    limits = load_limits(args.body_config)
    q0 = parse_vector(args.q0)
    if args.target_pose:
        target = HandPose.from_dict(read_json(args.target_pose))
    else:
        target = forward_kinematics(q0)
    c = PoseConstraint(target, w_pos=args.w_pos, w_ori=args.w_ori, tolerance=args.tolerance)
    try:
        if args.method == "grad":
            res = optimize_gradient(model, ctx, q0, c, GradientOptions(starts=args.starts, seed=args.seed, limits=limits))
        else:
            opts = CEMOptions(population=args.population, max_iters=args.max_iters, seed=args.seed, limits=limits)
            res = optimize_cem(rula, ctx, q0, c, opts, model)
        feasible = True
    except InfeasibleError as exc:
        res, feasible = exc.result, False
    timing["wall_time"] = res.wall_time
    doc = {"result": res.to_dict(timing=False), "feasible": feasible, "initial_rula": rula(q0, ctx).grand,
           "initial_dula": model.score(q0, ctx), "constraint": c.to_dict(), "context": ctx.to_dict()}
    write_json(out / "result.json", doc)
    print(f"{args.method}: RULA {doc['initial_rula']} -> {res.rula_grand}, DULA {doc['initial_dula']:.3f} -> "
          f"{res.dula_score:.3f}, constraint {res.constraint_value:.2e} ({'feasible' if feasible else 'INFEASIBLE'})")
    if not feasible:
        raise InfeasibleError(res)
    return ["result.json"]


def _tasks_for(args) -> list[TeleopTask]:
    seeds = parse_range(args.seeds)
    if args.task == "demo":
        suite = demo_suite(max(seeds) + 1, seed=args.suite_seed)
        return [(s, suite[s]) for s in seeds]
    doc = read_json(args.task)
    task = TeleopTask.from_dict(doc)
    return [(s, task) for s in seeds]


def cmd_simulate(args, out: Path, timing: dict) -> list[str]:
    model = load_model(args.model)
    ctx = load_context(args.context) if args.context else DEMO_CONTEXT
    corrections = [c.strip() for c in args.correction.split(",")]
    for c in corrections:
        if c not in CORRECTIONS:
            raise InvalidInputError(f"unknown correction {c!r}; choose from {CORRECTIONS}")
    cfg = HumanModelConfig(alpha=args.alpha, horizon=args.horizon, velocity_limit=args.velocity_limit,
                           replan_period=args.replan_period, suggestion_period=args.suggestion_period,
                           suggestion_radius=args.suggestion_radius)
    cem = CEMOptions(population=args.cem_population, max_iters=args.cem_iters)
    outputs, episodes = [], []
    for seed, task in _tasks_for(args):
        for corr in corrections:
            t0 = time.perf_counter()
            trace = run_episode(task, cfg, model, ctx, corr, seed=seed, cem_opts=cem)
            timing[f"episode_{seed:03d}_{corr}"] = time.perf_counter() - t0
            name = f"episode_{seed:03d}_{corr}"
            atomic_write(out / f"{name}.jsonl", trace.to_jsonl(schema_version=SCHEMA_VERSION))
            metrics = episode_metrics(trace)
            write_json(out / f"{name}.summary.json", {**trace.summary(), "metrics": metrics, "task": task.to_dict(),
                                                       "human_model": cfg.to_dict()})
            outputs += [f"{name}.jsonl", f"{name}.summary.json"]
            episodes.append({**trace.summary(), "median_rula_executed": metrics["median_rula_executed"]})
            print(f"seed {seed:3d} {corr:5s}: {'done' if trace.completed else 'timeout'} after {len(trace.steps)} steps, "
                  f"median RULA {metrics['median_rula_executed']}")
    write_json(out / "summary.json", {"episodes": episodes})
    return outputs + ["summary.json"]


def cmd_compare(args, out: Path, timing: dict) -> list[str]:
    model = load_model(args.model)
    tasks = make_tasks(args.tasks, args.seed)
    report = compare(model, rula, tasks, GradientOptions(starts=args.starts, seed=args.seed),
                     CEMOptions(population=args.population, max_iters=args.max_iters, seed=args.seed))
    rows = report["rows"]
    timing["rows"] = [{"task": r["task"], "method": r["method"], "wall_time": r["wall_time"]} for r in rows]
    timing["summary"] = report["summary"]
    stable = [{k: v for k, v in r.items() if k != "wall_time"} for r in rows]
    medians = {m: {k: v for k, v in s.items() if k != "median_wall_time"}
               for m, s in report["summary"].items() if isinstance(s, dict)}
    write_json(out / "compare.json", {"rows": stable, "summary": medians})
    s = report["summary"]
    for m in ("grad", "cem"):
        print(f"{m:4s}: feasible {s[m]['feasible']}/{s[m]['tasks']}, median RULA {s[m]['median_initial_rula']} -> "
              f"{s[m]['median_optimal_rula']}, median wall time {s[m]['median_wall_time']:.3f} s")
    print(f"wall-time ratio cem/grad: {s.get('time_ratio_cem_over_grad', float('nan')):.1f}")
    return ["compare.json"]


def _load_trace(path: Path):
    summary = read_json(path.with_name(path.name[: -len(".jsonl")] + ".summary.json"))
    steps = []
    for line in path.read_text().splitlines():
        rec = json.loads(line)
        steps.append(StepRecord(
            rec["t"], np.array(rec["q"]), None if rec["suggested"] is None else np.array(rec["suggested"]),
            rec["rula"], rec["dula"], rec["suggested_rula"],
            HandPose(np.array(rec["follower_position"]), np.array(rec["follower_orientation"])), rec["goal_error"],
        ))
    return SimulationTrace(steps, summary["completed"], summary["completion_step"], summary["correction"],
                           summary["alpha"], summary["dt"], summary["seed"])


def cmd_report(args, out: Path, timing: dict) -> list[str]:
    traces = Path(args.traces)
    if not traces.is_dir():
        raise InvalidInputError(f"not a directory: {traces}")
    found = {}
    for p in sorted(traces.glob("episode_*_*.jsonl")):
        _, seed, corr = p.name[: -len(".jsonl")].split("_")
        found.setdefault(int(seed), {})[corr] = p
    outputs = []
    for seed, by_corr in sorted(found.items()):
        if "none" not in by_corr:
            log.warning("seed %d has no uncorrected trace; skipped", seed)
            continue
        base = _load_trace(by_corr["none"])
        for corr in ("grad", "cem"):
            if corr not in by_corr:
                continue
            rows = report_rows(base, _load_trace(by_corr[corr]))
            buf = io.StringIO()
            writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
            writer.writeheader()
            writer.writerows(rows)
            name = f"report_{seed:03d}_{corr}.csv"
            atomic_write(out / name, buf.getvalue())
            outputs.append(name)
    if not outputs:
        raise InvalidInputError(f"no paired (none + grad/cem) traces in {traces}")
    print(f"wrote {len(outputs)} report files")
    return outputs


def cmd_export_tables(args, out: Path, timing: dict) -> list[str]:
    write_json(out / "rula_tables.json", tables_as_dict())
    print(f"wrote {out / 'rula_tables.json'}")
    return ["rula_tables.json"]


# --- parser --------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dula", description="Differentiable RULA surrogate: data, training, optimization, simulation.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, fn, help_text):
        sp = sub.add_parser(name, help=help_text, description=help_text)
        sp.add_argument("--out-dir", default=None, help=f"output directory (default ${OUTPUT_DIR_ENV} or ./dula-out)")
        sp.add_argument("--seed", type=int, default=0)
        sp.set_defaults(func=fn)
        return sp

    sp = add("gen-data", cmd_gen_data, "generate a label-balanced dataset and its stratified split")
    sp.add_argument("--count", type=int, default=200_000)
    sp.add_argument("--min-fraction", type=float, default=1 / 7, help="per-label minimum share")
    sp.add_argument("--focus-fraction", type=float, default=0.5, help="share of near-neutral proposals")
    sp.add_argument("--split", type=float, default=0.8, help="training fraction")
    sp.add_argument("--shards", type=int, default=1)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--body-config", default=None, help="JSON with segment lengths and joint limits")
    sp.add_argument("--csv", action="store_true", help="also write CSV copies")

    sp = add("train", cmd_train, "train the surrogate network")
    sp.add_argument("--data", required=True, help="training set (.dula)")
    defaults = TrainConfig()
    sp.add_argument("--epochs", type=int, default=defaults.epochs)
    sp.add_argument("--lr", type=float, default=defaults.learning_rate)
    sp.add_argument("--batch-size", type=int, default=defaults.batch_size)
    sp.add_argument("--optimizer", choices=("sgd", "momentum", "adam"), default=defaults.optimizer)
    sp.add_argument("--schedule", choices=("constant", "cosine"), default=defaults.lr_schedule)
    sp.add_argument("--k-folds", type=int, default=defaults.k_folds)
    sp.add_argument("--cross-validate", action="store_true")

    sp = add("eval", cmd_eval, "confusion matrix and rounded accuracy on a held-out set")
    sp.add_argument("--model", default=None, help="checkpoint (default: shipped desk-scale model)")
    sp.add_argument("--data", required=True, help="test set (.dula)")

    sp = add("grad-check", cmd_grad_check, "compare input gradients with central differences")
    sp.add_argument("--model", default=None)
    sp.add_argument("--n", type=int, default=500)
    sp.add_argument("--step", type=float, default=1e-5)
    sp.add_argument("--tolerance", type=float, default=1e-4)

    sp = add("optimize", cmd_optimize, "lower the risk score while keeping the hand pose")
    sp.add_argument("--model", default=None)
    sp.add_argument("--context", default=None, help="task context JSON")
    sp.add_argument("--q0", required=True, help="start posture: 10 comma-separated radians or a JSON list file")
    sp.add_argument("--target-pose", default=None, help="hand pose JSON (default: pose of q0)")
    sp.add_argument("--method", choices=("grad", "cem"), default="grad")
    sp.add_argument("--w-pos", type=float, default=1.0)
    sp.add_argument("--w-ori", type=float, default=0.1)
    sp.add_argument("--tolerance", type=float, default=1e-4)
    sp.add_argument("--starts", type=int, default=GradientOptions().starts)
    sp.add_argument("--population", type=int, default=10_000)
    sp.add_argument("--max-iters", type=int, default=30)
    sp.add_argument("--body-config", default=None)

    sp = add("simulate", cmd_simulate, "run teleoperation episodes with a simulated operator")
    sp.add_argument("--model", default=None)
    sp.add_argument("--task", default="demo", help="'demo' or a task JSON file")
    sp.add_argument("--suite-seed", type=int, default=0)
    sp.add_argument("--seeds", default="0-19", help="episode indices, e.g. 0-19 or 1,3")
    sp.add_argument("--context", default=None)
    sp.add_argument("--alpha", type=float, default=1.0)
    sp.add_argument("--correction", default="none,grad", help="comma list of none, grad, cem")
    sp.add_argument("--horizon", type=int, default=HumanModelConfig().horizon)
    sp.add_argument("--velocity-limit", type=float, default=HumanModelConfig().velocity_limit)
    sp.add_argument("--replan-period", type=int, default=HumanModelConfig().replan_period)
    sp.add_argument("--suggestion-period", type=int, default=HumanModelConfig().suggestion_period)
    sp.add_argument("--suggestion-radius", type=float, default=HumanModelConfig().suggestion_radius,
                    help="suggestions stay within this many rad of the current posture")
    sp.add_argument("--cem-population", type=int, default=CEMOptions().population)
    sp.add_argument("--cem-iters", type=int, default=CEMOptions().max_iters)

    sp = add("compare", cmd_compare, "gradient solver versus CEM on a seeded task batch")
    sp.add_argument("--model", default=None)
    sp.add_argument("--tasks", type=int, default=50)
    sp.add_argument("--starts", type=int, default=GradientOptions().starts)
    sp.add_argument("--population", type=int, default=10_000)
    sp.add_argument("--max-iters", type=int, default=30)

    sp = add("report", cmd_report, "turn simulation traces into per-episode CSV series")
    sp.add_argument("--traces", required=True, help="directory written by 'simulate'")

    add("export-tables", cmd_export_tables, "write the RULA lookup tables as JSON")

    sp = sub.add_parser("replay", help="re-run a command from its manifest")
    sp.add_argument("manifest")
    sp.add_argument("--out-dir", default=None)
    sp.set_defaults(func=None)
    return p


def _args_config(args) -> dict:
    skip = {"func", "out_dir", "verbose", "command", "_check_failed"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _argv_from_manifest(doc: dict, out_dir: str | None) -> list[str]:
    parser = build_parser()
    command = doc.get("command")
    config = doc.get("config")
    if not isinstance(config, dict) or command not in parser._subparsers._group_actions[0].choices:
        raise InvalidInputError("manifest lacks a valid command/config")
    sub = parser._subparsers._group_actions[0].choices[command]
    argv = [command]
    for action in sub._actions:
        if not action.option_strings or action.dest in ("help", "out_dir"):
            continue
        if action.dest not in config:
            continue
        value = config[action.dest]
        flag = action.option_strings[-1]
        if isinstance(action, argparse._StoreTrueAction):
            if value:
                argv.append(flag)
        elif value is not None:
            argv += [flag, repr(value) if isinstance(value, float) else str(value)]
    if out_dir:
        argv += ["--out-dir", out_dir]
    return argv


def run(argv: list[str]) -> int:
    parser = build_parser()
    if not argv:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    if args.command == "replay":
        try:
            doc = read_json(args.manifest)
            replay_argv = _argv_from_manifest(doc, args.out_dir)
        except InvalidInputError as exc:
            print(f"dula: {exc}", file=sys.stderr)
            return EXIT_INVALID
        return run(replay_argv)

    out = Path(args.out_dir or os.environ.get(OUTPUT_DIR_ENV) or "dula-out")
    timing: dict = {}
    try:
        outputs = args.func(args, out, timing)
        write_manifest(out, args.command, _args_config(args), outputs)
        if timing:
            write_json(out / "timing.json", timing)
    except (InvalidInputError, ValueError, ScoringError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"dula: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (InfeasibleError, ModelFailureError, TrainingError, QuotaError, OSError, RuntimeError) as exc:
        print(f"dula: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_CHECK_FAILED if getattr(args, "_check_failed", False) else EXIT_OK


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
