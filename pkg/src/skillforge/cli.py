"""Command-line entry point.

stdout carries JSON (or CSV) only; progress notes and errors go to stderr.
Every library error exits with the fixed code of its class (see errors.py).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .config import GlobalConfig, ci_mode, package_data, resolve_config
from .errors import ConfigError, InconsistentStageCount, SkillforgeError
from .evaluation import (
    BatchSpec,
    build_table,
    compare_strategies,
    method_slug,
    run_batch,
    standard_conditions,
    table_csv,
    table_markdown,
)
from .execution import ExecutorProfile, TaskSpec, load_profiles, load_task_spec, parse_condition
from .library import (
    DEFAULT_DEMO_POLICY,
    SkillStatus,
    gap_report,
    load,
    new_library,
    record_training,
    save,
    update_cycle,
)
from .pipeline import make_backends, plan_task, step_advisor

log = logging.getLogger("skillforge")

DEFAULT_SEED = 0


def _emit(obj: Any) -> None:
    sys.stdout.write(json.dumps(obj, indent=2, ensure_ascii=False) + "\n")


def _note(msg: str) -> None:
    print(msg, file=sys.stderr)


def _read_json(path: str | Path, what: str) -> Any:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read {what} {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{what} {path} is not valid JSON: {exc}") from exc


def _resolve_data_file(name: str, subdir: str) -> Path:
    """A path as given, else a bundled ``data/<subdir>/<name>.json``."""
    path = Path(name)
    if path.is_file():
        return path
    bundled = package_data() / subdir / f"{name}.json"
    if bundled.is_file():
        return bundled
    raise ConfigError(f"no such file {name!r} (and no bundled {subdir}/{name}.json)")


def _seed(config: GlobalConfig, fallback: int | None = None) -> int:
    if config.seed is not None:
        return config.seed
    if ci_mode():
        raise ConfigError("--seed is required when CI is set")
    seed = DEFAULT_SEED if fallback is None else fallback
    _note(f"note: no --seed given, using {seed}")
    return seed


# -- commands ----------------------------------------------------------------


def cmd_plan(args: argparse.Namespace, config: GlobalConfig) -> int:
    config.check_paths(need_library=False)
    backends = make_backends(config)
    plan, _ = plan_task(backends, args.task, args.scene, args.task_id)
    _emit(plan.to_dict())
    return 0


def cmd_library(args: argparse.Namespace, config: GlobalConfig) -> int:
    path = config.library_path
    if args.library_cmd == "init":
        if path.exists() and not args.force:
            raise ConfigError(f"{path} already exists (use --force to overwrite)")
        lib = new_library(config.granularity)
        save(lib, path)
        _emit(lib.to_dict())
        _note(f"initialised {path} at granularity {lib.granularity.value}")
        return 0
    config.check_paths(need_library=True)
    lib = load(path)
    if args.library_cmd == "inspect":
        _emit(lib.to_dict())
        return 0
    # update
    backends = make_backends(config)
    plan, _ = plan_task(backends, args.task, args.scene, args.task_id)
    new_lib, manifest = update_cycle(lib, plan, config.granularity, DEFAULT_DEMO_POLICY)
    save(new_lib, path)
    _emit(
        {
            "task_id": plan.task.task_id,
            "library_version": new_lib.library_version,
            "new_skills": len(manifest.entries),
            "manifest": manifest.to_dict(),
        }
    )
    _note(f"{len(manifest.entries)} new skills")
    return 0


def _profiles(config: GlobalConfig, extra: Sequence[dict] = ()) -> dict[str, ExecutorProfile]:
    profiles = load_profiles(config.profiles_dir)
    profiles.update(load_profiles(extra))
    return profiles


def cmd_run(args: argparse.Namespace, config: GlobalConfig) -> int:
    config.check_paths(need_library=True)
    seed = _seed(config)
    profiles = _profiles(config)
    if args.profile and args.profile not in profiles:
        raise ConfigError(f"unknown executor profile {args.profile!r}")
    backends = make_backends(config)
    plan, scene = plan_task(backends, args.task, args.scene, args.task_id)
    lib = load(config.library_path)
    if args.record_training:
        if not args.profile:
            raise ConfigError("--record-training needs --profile to bind the trained skills")
        lib, manifest = update_cycle(lib, plan, config.granularity)
        needed = {e.skill_id: e.demos_required for e in manifest.entries}
        for _, skill_id in gap_report(lib, plan).matched:
            if lib.get(skill_id).status is not SkillStatus.TRAINED:
                needed.setdefault(skill_id, DEFAULT_DEMO_POLICY.entry_for(skill_id).demos_required)
        for skill_id, demos in needed.items():
            lib = record_training(lib, skill_id, demos, args.profile)
        save(lib, config.library_path)
        _note(f"trained {len(needed)} skills bound to {args.profile}")
    bindings = {}
    if args.profile and not args.record_training:
        bindings = {sid: args.profile for _, sid in gap_report(lib, plan).matched}
    advisor = step_advisor(backends, plan, scene) if config.replan_each_step else None
    spec = BatchSpec(
        plan.task.task_id,
        args.profile or "library",
        parse_condition(args.condition or []),
        args.trials,
        seed,
        config.retry_limit,
        bindings,
    )
    result = run_batch(spec, plan, lib, profiles, keep_outcomes=args.trace, advisor=advisor)
    out = result.to_dict()
    out.update(
        {
            "seed": seed,
            "retry_limit": config.retry_limit,
            "skills": [sid for _, sid in gap_report(lib, plan).matched],
        }
    )
    if args.trace:
        out["outcomes"] = [o.to_dict() for o in result.outcomes]
    _emit(out)
    return 0


def _method_bindings(skill_ids: Sequence[str], stage_profiles: Sequence[str], label: str) -> dict[str, str]:
    if len(stage_profiles) != len(skill_ids):
        raise InconsistentStageCount(
            f"method {label} has {len(stage_profiles)} stage profiles for a {len(skill_ids)}-stage plan"
        )
    bindings: dict[str, str] = {}
    for sid, pid in zip(skill_ids, stage_profiles):
        if bindings.setdefault(sid, pid) != pid:
            raise ConfigError(f"method {label} binds {sid} to two different profiles")
    return bindings


def cmd_eval(args: argparse.Namespace, config: GlobalConfig) -> int:
    config.check_paths(need_library=False)
    suite = _read_json(_resolve_data_file(args.suite, "suites"), "suite")
    seed = _seed(config, suite.get("seed"))
    trials = args.trials or int(suite.get("trials", 10))
    retry_limit = int(suite.get("retry_limit", config.retry_limit))
    profiles = _profiles(config, suite.get("profiles", []))
    backends = make_backends(config)
    out_dir = Path(args.out or config.out_dir)
    written: list[str] = []
    report = [f"# Success rates ({suite.get('suite_id', 'suite')}, {trials} trials, seed {seed})", ""]

    for task in suite["tasks"]:
        plan, _ = plan_task(backends, task["instruction"], task["scene_id"], task["task_id"])
        labels = task.get("stage_labels")
        if labels is not None and len(labels) != len(plan.subtasks):
            raise InconsistentStageCount(
                f"{task['task_id']}: {len(labels)} stage labels for a {len(plan.subtasks)}-stage plan"
            )
        # a throwaway library in which every skill of the plan is trained
        lib, manifest = update_cycle(new_library(config.granularity), plan)
        first = task["methods"][0]["stage_profiles"]
        skill_ids = [sid for _, sid in gap_report(lib, plan).matched]
        default_bind = _method_bindings(skill_ids, first, task["methods"][0]["label"])
        for e in manifest.entries:
            lib = record_training(lib, e.skill_id, e.demos_required, default_bind[e.skill_id])
        slots = task.get("slots") or sorted({s for c in task.get("conditions", []) for s in c})
        conditions = [parse_condition(c) for c in task["conditions"]] if "conditions" in task else standard_conditions(slots)
        results = []
        for method in task["methods"]:
            bindings = _method_bindings(skill_ids, method["stage_profiles"], method["label"])
            for cond in conditions:
                spec = BatchSpec(task["task_id"], method["label"], cond, trials, seed, retry_limit, bindings)
                results.append(run_batch(spec, plan, lib, profiles))
        table = build_table(results, labels, slots, task.get("title"))
        task_dir = out_dir / task["task_id"]
        task_dir.mkdir(parents=True, exist_ok=True)
        for method in table.methods:
            path = task_dir / f"{method_slug(method)}.csv"
            path.write_text(table_csv(table, [method]), encoding="utf-8")
            written.append(str(path))
        combined = task_dir / "table.csv"
        combined.write_text(table_csv(table), encoding="utf-8")
        written.append(str(combined))
        report.append(table_markdown(table))
        if not args.no_figures:
            from .plotting import plot_success_table

            written.append(str(plot_success_table(table, task_dir / "success_rates.png")))

    report_path = out_dir / "report.md"
    report_path.write_text("\n".join(report), encoding="utf-8")
    written.append(str(report_path))
    _emit({"suite_id": suite.get("suite_id"), "seed": seed, "trials": trials, "files": written})
    return 0


def cmd_cost(args: argparse.Namespace, config: GlobalConfig) -> int:
    specs = [load_task_spec(_resolve_data_file(s, "tasks")) for s in args.specs]
    new_specs: list[TaskSpec] = [load_task_spec(_resolve_data_file(s, "tasks")) for s in args.new_spec or []]
    new_texts = args.new_task or []
    if new_specs and len(new_specs) != len(new_texts):
        raise ConfigError("--new-spec must be given once per --new-task")
    plans = []
    lib = None
    if new_texts:
        if not args.scene:
            raise ConfigError("--new-task needs --scene")
        config.check_paths(need_library=True)
        lib = load(config.library_path)
        backends = make_backends(config)
        for i, text in enumerate(new_texts):
            task_id = new_specs[i].task_id if new_specs else None
            plans.append(plan_task(backends, text, args.scene, task_id)[0])
    report = compare_strategies(
        specs, plans, lib, {s.task_id: s for s in new_specs}, DEFAULT_DEMO_POLICY
    )
    _emit(report)
    return 0


# -- parser ------------------------------------------------------------------


def _common() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="TOML config file (default: ./skillforge.toml or $SKILLFORGE_CONFIG)")
    common.add_argument("--fixtures-dir")
    common.add_argument("--library", dest="library_path", help="library file (default: library.json)")
    common.add_argument("--templates-dir")
    common.add_argument("--profiles-dir")
    common.add_argument("--out-dir")
    common.add_argument("--granularity", choices=["coarse", "medium", "fine"])
    common.add_argument("--seed", type=int)
    common.add_argument("--retry-limit", type=int)
    common.add_argument("--planner-backend", choices=["mock-rules", "http"])
    common.add_argument("--abstraction-backend", choices=["lexicon", "llm"])
    common.add_argument("--replan-each-step", action="store_true")
    common.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    return common


CONFIG_FLAGS = (
    "fixtures_dir",
    "library_path",
    "templates_dir",
    "profiles_dir",
    "out_dir",
    "granularity",
    "seed",
    "retry_limit",
    "planner_backend",
    "abstraction_backend",
    "replan_each_step",
)


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    p = argparse.ArgumentParser(prog="skillforge", description=__doc__.splitlines()[0], parents=[common])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("plan", parents=[common], help="decompose a task into subtasks (JSON)")
    sp.add_argument("task", help="task instruction")
    sp.add_argument("--scene", required=True, help="scene fixture id")
    sp.add_argument("--task-id")
    sp.set_defaults(func=cmd_plan)

    lp = sub.add_parser("library", parents=[common], help="create, inspect or grow the skill library")
    lsub = lp.add_subparsers(dest="library_cmd", required=True)
    init = lsub.add_parser("init", parents=[common])
    init.add_argument("--force", action="store_true")
    lsub.add_parser("inspect", parents=[common])
    up = lsub.add_parser("update", parents=[common])
    up.add_argument("task")
    up.add_argument("--scene", required=True)
    up.add_argument("--task-id")
    lp.set_defaults(func=cmd_library)

    rp = sub.add_parser("run", parents=[common], help="simulate trials of a task")
    rp.add_argument("task")
    rp.add_argument("--scene", required=True)
    rp.add_argument("--task-id")
    rp.add_argument("--trials", type=int, default=10)
    rp.add_argument("--profile", help="executor profile used for every skill of the task")
    rp.add_argument("--condition", action="append", metavar="SLOT=ID|OOD")
    rp.add_argument("--record-training", action="store_true", help="train missing skills in the library first")
    rp.add_argument("--trace", action="store_true", help="include per-trial outcomes")
    rp.set_defaults(func=cmd_run)

    ep = sub.add_parser("eval", parents=[common], help="success-rate tables for a suite")
    ep.add_argument("suite", help="suite file or bundled suite name (e.g. table1)")
    ep.add_argument("--out", help="output directory (default: out_dir)")
    ep.add_argument("--trials", type=int)
    ep.add_argument("--no-figures", action="store_true")
    ep.set_defaults(func=cmd_eval)

    cp = sub.add_parser("cost", parents=[common], help="demo cost per strategy")
    cp.add_argument("specs", nargs="*", help="task spec files or bundled names (e.g. pour_water)")
    cp.add_argument("--new-task", action="append", help="instruction of a task to check against the library")
    cp.add_argument("--new-spec", action="append", help="task spec paired with each --new-task")
    cp.add_argument("--scene")
    cp.set_defaults(func=cmd_cost)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(args, "log_level", "WARNING"), stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        flags = {k: getattr(args, k, None) for k in CONFIG_FLAGS}
        config = resolve_config(flags, getattr(args, "config", None))
        if getattr(args, "trials", None) is not None and args.trials < 1:
            raise ConfigError("--trials must be >= 1")
        return args.func(args, config)
    except SkillforgeError as exc:
        _note(f"error: {exc}")
        return exc.exit_code
    except ValueError as exc:
        _note(f"error: {exc}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
