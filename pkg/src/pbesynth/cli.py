"""Command line front end.

Every run option can come from a key=value config file (`--config`), from a
flag (flags win), or stay at its default.  The output directory can also be
set with the PBESYNTH_OUTPUT_DIR environment variable.

Exit codes: 0 success, 2 configuration error, 3 task-format error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

from .lang import EvalLimits, LangError, format_term
from .dsl import default_list_dsl, load_library, save_library
from .task import TaskFormatError, load_tasks
from .synthesis import SearchConfig, UniformScorer, search
from .guidance import (
    TraceGenConfig, generate_traces, load_scorer, load_traces, save_scorer,
    save_traces, train_scorer,
)
from .librarian import MineConfig, mine
from .harness import (
    EvalReport, RunConfig, emit_plot_data, evaluate, load_solutions,
    run_sleep, run_wake, save_eval_report, save_solutions, wake_sleep_loop,
)

OUTPUT_DIR_ENV = "PBESYNTH_OUTPUT_DIR"


class ConfigError(Exception):
    pass


# Config keys: name -> (parser, destination section)
_BOOL = {"true": True, "false": False, "1": True, "0": False,
         "yes": True, "no": False}


def _parse_bool(text):
    try:
        return _BOOL[text.strip().lower()]
    except KeyError:
        raise ConfigError(f"not a boolean: {text!r}") from None


_CONFIG_KEYS = {
    "iterations": int,
    "trials": int,
    "folds": int,
    "workers": int,
    "random_seed": int,
    "train_steps": int,
    "output_dir": str,
    "per_task_timeout": float,
    "restart_interval": float,
    "beam_size": int,
    "max_weight": int,
    "stop_on_solve": _parse_bool,
    "virtual_clock": _parse_bool,
    "virtual_seconds_per_candidate": float,
    "restarts_enabled": _parse_bool,
    "max_eval_steps": int,
    "episode_timeout": float,
    "per_abstraction_bonus": float,
    "tracegen_max_weight": int,
    "parallel_searches": int,
    "episodes": int,
    "targets_per_episode": int,
    "max_negatives": int,
    "examples_per_episode": int,
    "max_arity": int,
    "max_rounds": int,
    "min_tasks": int,
    "min_nonvariable": int,
    "prune": _parse_bool,
    "max_visited": int,
}


def read_config_file(path) -> dict:
    """key=value lines; blank lines and # comments ignored."""
    out = {}
    try:
        with open(path) as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(
                        f"{path}:{lineno}: expected key=value, got {raw!r}")
                key, value = [p.strip() for p in line.split("=", 1)]
                if key not in _CONFIG_KEYS:
                    raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
                try:
                    out[key] = _CONFIG_KEYS[key](value)
                except ValueError:
                    raise ConfigError(
                        f"{path}:{lineno}: bad value for {key}: {value!r}"
                    ) from None
    except OSError as e:
        raise ConfigError(f"cannot read config file: {e}") from None
    return out


def build_run_config(opts: dict) -> RunConfig:
    def pick(key, default):
        return opts[key] if opts.get(key) is not None else default

    limits = EvalLimits()
    if opts.get("max_eval_steps") is not None:
        limits = replace(limits, max_steps=opts["max_eval_steps"])
    search_cfg = SearchConfig(
        per_task_timeout=pick("per_task_timeout", 100.0),
        restart_interval=pick("restart_interval", 10.0),
        beam_size=pick("beam_size", 10),
        max_weight=pick("max_weight", 15),
        eval_limits=limits,
        random_seed=pick("random_seed", 0),
        stop_on_solve=pick("stop_on_solve", True),
        virtual_clock=pick("virtual_clock", False),
        virtual_seconds_per_candidate=pick("virtual_seconds_per_candidate",
                                           0.001),
        restarts_enabled=pick("restarts_enabled", True),
    )
    trace_cfg = TraceGenConfig(
        episode_timeout=pick("episode_timeout", 1000.0),
        per_abstraction_bonus=pick("per_abstraction_bonus", 100.0),
        max_weight=pick("tracegen_max_weight", 15),
        parallel_searches=pick("parallel_searches", 300),
        episodes=pick("episodes", 20),
        targets_per_episode=pick("targets_per_episode", 12),
        max_negatives=pick("max_negatives", 32),
        examples_per_episode=pick("examples_per_episode", 3),
        random_seed=pick("random_seed", 0),
        eval_limits=limits,
    )
    mine_cfg = MineConfig(
        max_arity=pick("max_arity", 3),
        max_rounds=pick("max_rounds", 3),
        min_tasks=pick("min_tasks", 2),
        min_nonvariable=pick("min_nonvariable", 2),
        prune=pick("prune", True),
        max_visited=pick("max_visited", 50000),
    )
    return RunConfig(
        iterations=pick("iterations", 10),
        search=search_cfg,
        tracegen=trace_cfg,
        mining=mine_cfg,
        trials=pick("trials", 5),
        folds=pick("folds", 2),
        workers=pick("workers", 1),
        random_seed=pick("random_seed", 0),
        train_steps=pick("train_steps", 10000),
        output_dir=pick("output_dir", "runs"),
    )


def _gather_options(args) -> dict:
    opts = dict(read_config_file(args.config)) if args.config else {}
    for key in _CONFIG_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            opts[key] = v
    env_out = os.environ.get(OUTPUT_DIR_ENV)
    if env_out:
        opts["output_dir"] = env_out
    return opts


def _load_library(args):
    if getattr(args, "library", None):
        return load_library(args.library)
    return default_list_dsl()


def _load_scorer(args):
    if getattr(args, "scorer", None):
        return load_scorer(args.scorer)
    return UniformScorer()


def _out_path(cfg: RunConfig, name: str) -> str:
    os.makedirs(cfg.output_dir, exist_ok=True)
    return os.path.join(cfg.output_dir, name)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_solve(args, cfg: RunConfig):
    tasks = load_tasks(args.tasks)
    if args.task:
        tasks = [t for t in tasks if t.name == args.task]
        if not tasks:
            raise ConfigError(f"no task named {args.task!r}")
    lib = _load_library(args)
    scorer = _load_scorer(args)
    for task in tasks:
        r = search(task, lib, scorer, cfg.search)
        if r.solved:
            print(f"{task.name}: {format_term(r.program)}")
        else:
            print(f"{task.name}: no solution")
        print(f"  elapsed {r.elapsed:.3f}s, candidates "
              f"{r.candidates_evaluated}, restarts {r.restarts}")
    return 0


def cmd_wake(args, cfg: RunConfig):
    tasks = load_tasks(args.tasks)
    lib = _load_library(args)
    scorer = _load_scorer(args)
    wake = run_wake(tasks, lib, scorer, cfg.search, cfg.workers)
    save_solutions(wake.results, _out_path(cfg, "solutions.txt"))
    report = {
        "solved": wake.solved,
        "total": wake.total,
        "tasks": {t.name: {"solved": r.solved,
                           "candidates": r.candidates_evaluated}
                  for t, r in wake.results},
    }
    with open(_out_path(cfg, "wake_report.json"), "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"solved {wake.solved}/{wake.total}; wrote "
          f"{_out_path(cfg, 'solutions.txt')}")
    return 0


def cmd_sleep(args, cfg: RunConfig):
    tasks = load_tasks(args.tasks)
    by_name = {t.name: t for t in tasks}
    lib = _load_library(args)
    scorer = _load_scorer(args)
    corpus = load_solutions(args.solutions, lib, by_name)
    rep = run_sleep(corpus, lib, scorer, by_name, cfg.mining, cfg.tracegen,
                    cfg.random_seed, cfg.train_steps)
    save_library(rep.library, _out_path(cfg, "library.txt"))
    save_scorer(rep.scorer, _out_path(cfg, "scorer.txt"))
    save_traces(rep.traces, _out_path(cfg, "traces.txt"))
    print(rep.mine_report or "no abstractions mined")
    print(f"library version {rep.library.version}, "
          f"{len(rep.abstractions)} new abstraction(s)")
    return 0


def cmd_loop(args, cfg: RunConfig):
    tasks = load_tasks(args.tasks)
    lib = _load_library(args)
    res = wake_sleep_loop(tasks, lib, cfg.output_dir, cfg)
    print(f"ran {res.iterations_run} iteration(s); solve counts "
          f"{res.solve_counts}; best iteration {res.best_iteration}")
    return 0


def cmd_trace_gen(args, cfg: RunConfig):
    lib = _load_library(args)
    data = generate_traces(lib, cfg.tracegen)
    save_traces(data, _out_path(cfg, "traces.txt"))
    print(f"{len(data.episodes)} episodes, {len(data.steps)} steps -> "
          f"{_out_path(cfg, 'traces.txt')}")
    return 0


def cmd_train(args, cfg: RunConfig):
    data = load_traces(args.traces)
    init = _load_scorer(args)
    if isinstance(init, UniformScorer):
        init = None
    scorer = train_scorer(data, init=init, seed=cfg.random_seed,
                          max_steps=cfg.train_steps)
    save_scorer(scorer, _out_path(cfg, "scorer.txt"))
    for op, note in sorted(scorer.training_report.items()):
        print(f"{op}: {note}")
    return 0


def cmd_eval(args, cfg: RunConfig):
    tasks = load_tasks(args.tasks)
    lib = _load_library(args)
    scorer = _load_scorer(args)
    rep = evaluate(tasks, lib, scorer, cfg.search, cfg.trials,
                   label=args.label)
    path = _out_path(cfg, f"eval_{args.label}.json")
    save_eval_report(rep, path)
    print(f"solve rate {rep.solve_rate_mean:.3f} "
          f"[{rep.solve_rate_low:.3f}, {rep.solve_rate_high:.3f}] -> {path}")
    return 0


def cmd_mine(args, cfg: RunConfig):
    tasks = load_tasks(args.tasks)
    by_name = {t.name: t for t in tasks}
    lib = _load_library(args)
    corpus = load_solutions(args.solutions, lib, by_name)
    res = mine(corpus, lib, by_name, cfg.mining)
    save_library(res.library, _out_path(cfg, "library.txt"))
    print(res.report or "nothing mined")
    return 0


def cmd_report(args, cfg: RunConfig):
    with open(args.eval_a) as fh:
        a = EvalReport.from_json(json.load(fh))
    with open(args.eval_b) as fh:
        b = EvalReport.from_json(json.load(fh))
    written = emit_plot_data(a, b, cfg.output_dir)
    for p in written:
        print(p)
    return 0


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pbesynth",
        description="Programming-by-example synthesis with library learning")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, tasks=False, solutions=False):
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--library", help="library file (default: bundled DSL)")
        p.add_argument("--scorer", help="scorer file (default: uniform)")
        if tasks:
            p.add_argument("--tasks", required=True, help="task file")
        if solutions:
            p.add_argument("--solutions", required=True,
                           help="solutions file from a wake run")
        for key, typ in _CONFIG_KEYS.items():
            flag = "--" + key.replace("_", "-")
            if typ is _parse_bool:
                p.add_argument(flag, type=_parse_bool, metavar="BOOL")
            else:
                p.add_argument(flag, type=typ)

    p = sub.add_parser("solve", help="solve tasks and print programs")
    common(p, tasks=True)
    p.add_argument("--task", help="solve only the named task")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("wake", help="solve a task set, save solutions")
    common(p, tasks=True)
    p.set_defaults(func=cmd_wake)

    p = sub.add_parser("sleep", help="mine abstractions and retrain")
    common(p, tasks=True, solutions=True)
    p.set_defaults(func=cmd_sleep)

    p = sub.add_parser("loop", help="full wake-sleep loop")
    common(p, tasks=True)
    p.set_defaults(func=cmd_loop)

    p = sub.add_parser("trace-gen", help="generate training traces")
    common(p)
    p.set_defaults(func=cmd_trace_gen)

    p = sub.add_parser("train", help="train a scorer on traces")
    common(p)
    p.add_argument("--traces", required=True, help="trace file")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a library and scorer")
    common(p, tasks=True)
    p.add_argument("--label", default="run", help="label in the report")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("mine", help="mine abstractions from solutions")
    common(p, tasks=True, solutions=True)
    p.set_defaults(func=cmd_mine)

    p = sub.add_parser("report", help="emit plot CSVs from two eval reports")
    common(p)
    p.add_argument("--eval-a", required=True)
    p.add_argument("--eval-b", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = build_run_config(_gather_options(args))
        return args.func(args, cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except TaskFormatError as e:
        print(f"task format error: {e}", file=sys.stderr)
        return 3
    except (LangError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
