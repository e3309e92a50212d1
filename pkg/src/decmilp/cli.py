"""Command-line front end.

    decmilp solve INSTANCE --horizon K [--variant milp|ilp|milp-pr] ...
    decmilp evaluate INSTANCE --horizon K --policy FILE
    decmilp brute INSTANCE --horizon K

INSTANCE is a path or the name of a bundled instance (``mabc``,
``matiger``).  Exit codes: 0 success, 2 limit reached, 3 input error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from importlib import resources
from pathlib import Path

from . import __version__
from .formulation import Variant, write_lp
from .milp_solver import NumericalError
from .model import DecPomdp, ModelError, load_model, parse_model
from .oracle import brute_force_optimal, count_joint_policies
from .pipeline import SolveResult, solve
from .sequences import (CapacityError, PolicyStructureError, all_spaces, check_policy_vector,
                        policy_from_json, policy_to_json, vector_to_tree)
from .valuation import build_table, sequence_form_value, tree_value

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_LIMIT = 2
EXIT_INPUT = 3

SCHEMA_VERSION = 1


class InputError(Exception):
    pass


def bundled_instances() -> list[str]:
    return sorted(p.name[:-len(".dpomdp")] for p in resources.files("decmilp.instances").iterdir()
                  if p.name.endswith(".dpomdp"))


def resolve_instance(spec: str) -> tuple[DecPomdp, str]:
    path = Path(spec)
    if path.is_file():
        return load_model(path), str(path)
    if spec in bundled_instances():
        res = resources.files("decmilp.instances") / f"{spec}.dpomdp"
        return parse_model(res.read_text(encoding="utf-8"), name=spec), f"bundled:{spec}"
    raise InputError(f"no such instance file or bundled instance: {spec!r} (bundled: {', '.join(bundled_instances())})")


def _labels(m: DecPomdp, i: int):
    return (lambda a: m.action_label(i, a)), (lambda o: m.observation_label(i, o))


def run_report(result: SolveResult, instance: str) -> dict:
    sol = result.solution
    m = result.model
    report = {
        "schema": SCHEMA_VERSION,
        "instance": instance,
        "horizon": result.horizon,
        "variant": result.variant.value,
        "status": sol.status,
        "value": sol.objective if sol.x is not None else None,
        "bounds": result.bounds.to_json(),
        "solver": {
            "nodes": sol.nodes,
            "lp_iterations": sol.lp_iterations,
            "wall_time": sol.wall_time,
            "best_bound": sol.bound,
            "root_lp_bound": sol.root_bound,
            "variables": result.problem.n_vars,
            "binary_variables": result.problem.n_binary,
            "rows": result.problem.n_rows,
        },
        "timings": result.timings,
        "policy": None,
        "dominance": result.dominance.report(result.spaces) if result.dominance else None,
    }
    if result.policy is not None:
        agents = []
        for i, (x, space, tree) in enumerate(zip(result.policy.vectors, result.spaces, result.policy.trees)):
            entry = policy_to_json(x, space)
            entry["tree"] = tree.render(*_labels(m, i)).splitlines()
            agents.append(entry)
        report["policy"] = agents
    return _finite(report)


def _finite(obj):
    """Replace non-finite floats by None so the report is strict JSON."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def _write_json(obj, target: str | None):
    text = json.dumps(obj, indent=2)
    if target in (None, "-"):
        print(text)
    else:
        Path(target).write_text(text + "\n", encoding="utf-8")


def _number_or_flag(text: str | None):
    """--lower-bound / --upper-bound take an optional number; bare flag means compute it."""
    if text is None:
        return False
    if text == "auto":
        return True
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number or 'auto', got {text!r}") from None


def cmd_solve(args) -> int:
    m, instance = resolve_instance(args.instance)
    result = solve(m, args.horizon, args.variant, lower=_number_or_flag(args.lower_bound),
                   upper=_number_or_flag(args.upper_bound), node_limit=args.node_limit,
                   time_limit=args.time_limit, single_pass=args.single_pass)
    if args.emit_lp:
        with open(args.emit_lp, "w", encoding="utf-8") as fh:
            write_lp(result.problem, fh)
    report = run_report(result, instance)
    if args.json:
        _write_json(report, args.json)
    sol = result.solution
    if args.json != "-":
        print(f"instance {instance}  horizon {args.horizon}  variant {result.variant.value}")
        print(f"status {sol.status}  value {report['value']}  nodes {sol.nodes}  "
              f"lp iterations {sol.lp_iterations}  time {sol.wall_time:.2f}s")
        if result.policy is not None:
            for i, tree in enumerate(result.policy.trees):
                print(f"agent {i}:")
                print(tree.render(*_labels(m, i)))
    return EXIT_OK if sol.optimal else EXIT_LIMIT


def load_policy_file(path: str) -> list[dict]:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read policy file {path}: {exc}") from None
    agents = obj.get("policy") if isinstance(obj, dict) else obj
    if not isinstance(agents, list) or not all(isinstance(a, dict) for a in agents):
        raise InputError("policy file must be a list of per-agent objects or a solve report")
    return agents


def cmd_evaluate(args) -> int:
    m, _ = resolve_instance(args.instance)
    agents = load_policy_file(args.policy)
    if len(agents) != m.n_agents:
        raise InputError(f"policy has {len(agents)} agents, model has {m.n_agents}")
    spaces = all_spaces(m, args.horizon)
    by_agent = {a.get("agent"): a for a in agents}
    xs = []
    for space in spaces:
        if space.agent not in by_agent:
            raise InputError(f"policy file has no entry for agent {space.agent}")
        x = policy_from_json(by_agent[space.agent], space)
        try:
            check_policy_vector(x, space)
        except PolicyStructureError as exc:
            raise PolicyStructureError(f"agent {space.agent}: {exc}") from None
        xs.append(x)
    trees = [vector_to_tree(x, s) for x, s in zip(xs, spaces)]
    tv = tree_value(m, trees)
    sv = sequence_form_value(build_table(m, spaces), xs, spaces)
    print(f"tree_value {tv!r}")
    print(f"sequence_form_value {sv!r}")
    if abs(tv - sv) > 1e-9:
        print("error: the two evaluations disagree", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


def cmd_brute(args) -> int:
    m, _ = resolve_instance(args.instance)
    spaces = all_spaces(m, args.horizon)
    count = count_joint_policies(spaces)
    if count > args.limit:
        raise CapacityError(f"refusing to enumerate {count} joint policies (limit {args.limit})")
    res = brute_force_optimal(m, spaces, build_table(m, spaces), limit=args.limit)
    print(f"joint policies {res.n_evaluated}")
    print(f"value {res.value!r}")
    for i, tree in enumerate(res.trees):
        print(f"agent {i}:")
        print(tree.render(*_labels(m, i)))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="decmilp", description="Exact finite-horizon Dec-POMDP planning by MILP")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="log progress (repeat for debug)")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("instance", help="instance file or bundled instance name")
        p.add_argument("--horizon", "-k", type=int, required=True)

    p = sub.add_parser("solve", help="solve for an optimal joint policy")
    common(p)
    p.add_argument("--variant", choices=[v.value for v in Variant], default=Variant.MILP_DEC.value)
    p.add_argument("--lower-bound", nargs="?", const="auto", default=None, metavar="VALUE",
                   help="add f >= VALUE; without VALUE, solve horizon-1 first")
    p.add_argument("--upper-bound", nargs="?", const="auto", default=None, metavar="VALUE",
                   help="add f <= VALUE; without VALUE, use the centralized POMDP LP")
    p.add_argument("--emit-lp", metavar="PATH", help="write the program in LP format")
    p.add_argument("--json", metavar="PATH", help="write the run report ('-' for stdout)")
    p.add_argument("--node-limit", type=int, default=10**7)
    p.add_argument("--time-limit", type=float, default=1800.0, help="seconds")
    p.add_argument("--single-pass", action="store_true", help="one elimination round only (milp-pr)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("evaluate", help="evaluate a joint policy file")
    common(p)
    p.add_argument("--policy", required=True, help="JSON policy (a solve report works)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("brute", help="exhaustive search over joint policies")
    common(p)
    p.add_argument("--limit", type=int, default=10**8, help="maximum joint policies to enumerate")
    p.set_defaults(func=cmd_brute)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "horizon", 1) < 1:
        print("error: --horizon must be at least 1", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except (InputError, ModelError, PolicyStructureError, argparse.ArgumentTypeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except CapacityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_LIMIT
    except NumericalError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
