"""End-to-end solve: build, optionally prune and bound, solve, extract."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import bounds as bounds_mod
from .dominance import DominanceResult, eliminate
from .formulation import Layout, Variant, add_bounds, build, round_to_policy
from .milp_solver import MilpProblem, MilpSolution, solve_milp
from .model import DecPomdp
from .sequences import PolicyTree, SequenceSpace, all_spaces, check_policy_vector, vector_to_tree
from .valuation import JointSequenceTable, build_table, sequence_form_value, tree_value

log = logging.getLogger(__name__)

VALUE_TOL = 1e-6


class ExtractionError(RuntimeError):
    """A solver solution does not decode into a deterministic joint policy."""


@dataclass
class JointPolicy:
    vectors: list[np.ndarray]
    trees: list[PolicyTree]
    value: float


def _complete(x: np.ndarray, space: SequenceSpace) -> np.ndarray:
    """Give every selected sequence a continuation after every observation.

    Groups without a selected continuation (histories whose sequences were
    all pruned as unreachable) get action 0, recursively.
    """
    A, O = space.n_actions, space.n_observations
    for t in range(1, space.horizon):
        for p in space.slice(t):
            if x[p] < 0.5:
                continue
            for o in range(O):
                first = space.child(p, o, 0)
                if not x[first:first + A].any():
                    x[first] = 1.0
    return x


def extract_joint_policy(sol: MilpSolution, problem: MilpProblem, table: JointSequenceTable) -> JointPolicy:
    """Decode a solution into deterministic policy vectors and trees.

    Binaries are rounded.  Shorter-sequence values are rebuilt from the
    length-horizon choices (each must equal the sum over any one observation
    group of its continuations) and compared with the solver's values.
    """
    if sol.x is None:
        raise ExtractionError(f"solution with status {sol.status} carries no assignment")
    layout: Layout = problem.metadata["layout"]
    k = layout.horizon
    vectors = []
    for i, space in enumerate(layout.spaces):
        solved = layout.full_vector(i, sol.x)
        x = np.zeros(len(space))
        term = slice(space.offsets[k - 1], space.offsets[k])
        frac = np.abs(solved[term] - np.round(solved[term]))
        if frac.max(initial=0.0) > VALUE_TOL:
            raise ExtractionError(f"agent {i}: length-{k} values are not integral (max deviation {frac.max():.3g})")
        x[term] = np.round(solved[term])
        A, O = space.n_actions, space.n_observations
        for t in range(k - 1, 0, -1):
            sizes = space.size(t)
            kids = x[space.offsets[t]:space.offsets[t + 1]].reshape(sizes, O, A).sum(axis=2)
            implied = kids.max(axis=1)
            if np.any(implied > 1.0):
                raise ExtractionError(f"agent {i}: a length-{t} sequence has several continuations after one observation")
            x[space.offsets[t - 1]:space.offsets[t]] = implied
        # Solver values of kept shorter sequences must match the implied ones.
        kept = layout.kept[i]
        diff = np.abs(solved[kept] - x[kept])
        if diff.max(initial=0.0) > VALUE_TOL:
            g = int(kept[int(np.argmax(diff))])
            raise ExtractionError(f"agent {i}: sequence {space.sequence(g)} solved as {solved[g]:.6g}, implied {x[g]:.0f}")
        x = _complete(x, space)
        check_policy_vector(x, space)
        vectors.append(x)
    value = sequence_form_value(table, vectors, layout.spaces)
    if abs(value - sol.objective) > VALUE_TOL:
        raise ExtractionError(f"extracted policy is worth {value!r}, solver reported {sol.objective!r}")
    trees = [vector_to_tree(x, s) for x, s in zip(vectors, layout.spaces)]
    return JointPolicy(vectors, trees, value)


@dataclass
class SolveResult:
    model: DecPomdp
    horizon: int
    variant: Variant
    problem: MilpProblem
    solution: MilpSolution
    policy: JointPolicy | None
    spaces: list[SequenceSpace]
    table: JointSequenceTable
    bounds: bounds_mod.BoundPair
    dominance: DominanceResult | None = None
    timings: dict = field(default_factory=dict)

    @property
    def value(self) -> float:
        return self.solution.objective


def solve(m: DecPomdp, horizon: int, variant: Variant | str = Variant.MILP_DEC, lower: bool | float = False,
          upper: bool | float = False, node_limit: int = 10**7, time_limit: float = 1800.0,
          gap: float = 1e-6, single_pass: bool = False) -> SolveResult:
    """Solve a Dec-POMDP for ``horizon`` steps.

    ``lower``/``upper`` may be numbers (used as given) or ``True``: the lower
    bound then comes from solving ``horizon - 1`` with the same variant and
    the upper bound from the centralized POMDP LP.
    """
    variant = Variant(variant)
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    timings = {}
    start = time.perf_counter()
    spaces = all_spaces(m, horizon)
    table = build_table(m, spaces)
    timings["table"] = time.perf_counter() - start

    notes = {}
    lo = hi = None
    if lower is True:
        if horizon == 1:
            raise ValueError("a lower bound from a shorter horizon needs horizon >= 2")
        t0 = time.perf_counter()
        shorter = solve(m, horizon - 1, variant, node_limit=node_limit, time_limit=time_limit, gap=gap)
        if not shorter.solution.optimal:
            raise RuntimeError(f"horizon {horizon - 1} solve for the lower bound ended with {shorter.solution.status}")
        lo = bounds_mod.lower_bound(shorter.value, m)
        notes["lower"] = f"optimal horizon-{horizon - 1} value {shorter.value!r} plus max-min step reward"
        timings["lower_bound"] = time.perf_counter() - t0
    elif lower is not False and lower is not None:
        lo = float(lower)
        notes["lower"] = "given"
    if upper is True:
        t0 = time.perf_counter()
        hi = bounds_mod.pomdp_upper_bound(m, horizon)
        notes["upper"] = f"centralized POMDP LP, horizon {horizon}"
        timings["upper_bound"] = time.perf_counter() - t0
    elif upper is not False and upper is not None:
        hi = float(upper)
        notes["upper"] = "given"
    pair = bounds_mod.BoundPair(lo, hi, notes)

    dominance = None
    dominated = None
    if variant is Variant.MILP_PR_DEC:
        t0 = time.perf_counter()
        dominance = eliminate(spaces, table, iterated=not single_pass)
        dominated = dominance.dominated
        timings["dominance"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    problem = add_bounds(build(m, spaces, variant, table, dominated), lo, hi)
    timings["build"] = time.perf_counter() - t0
    log.info("horizon %d %s: %d variables (%d binary), %d rows", horizon, variant.value,
             problem.n_vars, problem.n_binary, problem.n_rows)
    sol = solve_milp(problem, node_limit=node_limit, time_limit=time_limit, gap=gap,
                     heuristic=lambda x: round_to_policy(problem, x))
    timings["solve"] = sol.wall_time
    policy = extract_joint_policy(sol, problem, table) if sol.x is not None else None
    if policy is not None:
        tv = tree_value(m, policy.trees)
        if abs(tv - policy.value) > VALUE_TOL:
            raise ExtractionError(f"tree evaluation {tv!r} disagrees with sequence-form value {policy.value!r}")
    timings["total"] = time.perf_counter() - start
    return SolveResult(m, horizon, variant, problem, sol, policy, spaces, table, pair, dominance, timings)
