"""Branch-and-bound over binary variables on top of the simplex engine."""

from __future__ import annotations

import heapq
import itertools
import logging
import time
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from .problem import MilpProblem
from .simplex import INFEASIBLE, OPTIMAL, UNBOUNDED, Basis, SimplexEngine

log = logging.getLogger(__name__)

INT_TOL = 1e-6

NODE_LIMIT = "node_limit"
TIME_LIMIT = "time_limit"


@dataclass
class MilpSolution:
    status: str
    objective: float
    x: np.ndarray | None
    nodes: int
    wall_time: float
    bound: float
    lp_iterations: int = 0
    root_bound: float = np.nan

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL

    @property
    def gap(self) -> float:
        if self.x is None:
            return np.inf
        return max(self.bound - self.objective, 0.0)


@dataclass
class _Node:
    fixings: tuple[tuple[int, int], ...]
    basis: Basis
    bound: float
    depth: int


def most_fractional(x: np.ndarray, binary_idx: np.ndarray) -> int | None:
    """Binary with value closest to 1/2; ties go to the lowest index."""
    vals = x[binary_idx]
    frac = np.abs(vals - np.round(vals))
    if frac.max(initial=0.0) <= INT_TOL:
        return None
    # argmax returns the first maximum, which is the lowest index
    return int(binary_idx[int(np.argmax(frac))])


def solve_milp(problem: MilpProblem, node_limit: int = 10**7, time_limit: float = 1800.0,
               gap: float = 1e-6, incumbent: np.ndarray | None = None, log_every: int = 1000,
               heuristic: Callable[[np.ndarray], np.ndarray | None] | None = None,
               **engine_options) -> MilpSolution:
    """Maximize ``problem`` exactly.

    Nodes are picked best-bound first.  From every picked node the search
    dives depth-first, always following the child that rounds the branching
    variable, and queues the sibling.  A node is pruned when its LP bound
    cannot beat the incumbent by more than ``gap``.

    ``heuristic`` maps a fractional LP solution to a feasible assignment (or
    None); whatever it returns is checked and, if better, becomes the
    incumbent.
    """
    start = time.perf_counter()
    engine = SimplexEngine(problem, **engine_options)
    binary_idx = np.flatnonzero(problem.binary)
    base_lb = problem.lb.copy()
    base_ub = problem.ub.copy()

    best_x = None
    best_val = -np.inf
    if incumbent is not None:
        if not problem.is_feasible(incumbent):
            raise ValueError("supplied incumbent is infeasible")
        best_x = np.asarray(incumbent, dtype=float).copy()
        best_val = problem.objective(best_x)

    nodes = 0
    applied: tuple[tuple[int, int], ...] = ()
    counter = itertools.count()
    heap: list[tuple[float, int, _Node]] = []

    def apply(fixings):
        nonlocal applied
        for j, _ in applied:
            engine.set_bounds(j, base_lb[j], base_ub[j])
        for j, v in fixings:
            engine.set_bounds(j, float(v), float(v))
        applied = fixings

    def finish(status, bound):
        return MilpSolution(status, best_val if best_x is not None else np.nan, best_x, nodes,
                            time.perf_counter() - start, bound, engine.iterations, root_bound)

    root = engine.solve()
    nodes = 1
    if root.status == UNBOUNDED:
        raise ValueError("LP relaxation is unbounded")
    if root.status == INFEASIBLE:
        root_bound = -np.inf
        return finish(INFEASIBLE, -np.inf)
    root_bound = root.objective
    pending: _Node | None = None
    lp = root
    node = _Node((), engine.snapshot(), root.objective, 0)

    while True:
        # `lp` holds the LP result of `node`; process it.
        if lp.status == OPTIMAL and lp.objective > best_val + gap:
            j = most_fractional(lp.x, binary_idx)
            if j is None:
                best_val = lp.objective
                best_x = lp.x.copy()
                best_x[binary_idx] = np.round(best_x[binary_idx])
            else:
                if heuristic is not None:
                    cand = heuristic(lp.x)
                    if cand is not None and problem.is_feasible(cand):
                        val = problem.objective(cand)
                        if val > best_val:
                            best_val, best_x = val, np.asarray(cand, dtype=float).copy()
            if j is not None and lp.objective > best_val + gap:
                basis = engine.snapshot()
                up_first = lp.x[j] >= 0.5
                near, far = (1, 0) if up_first else (0, 1)
                sibling = _Node(node.fixings + ((j, far),), basis, lp.objective, node.depth + 1)
                heapq.heappush(heap, (-lp.objective, next(counter), sibling))
                pending = _Node(node.fixings + ((j, near),), basis, lp.objective, node.depth + 1)

        if pending is None:
            while heap and -heap[0][0] <= best_val + gap:
                heapq.heappop(heap)
            if not heap:
                return finish(INFEASIBLE if best_x is None else OPTIMAL,
                              best_val if best_x is not None else -np.inf)
            _, _, pending = heapq.heappop(heap)

        global_bound = max(-heap[0][0] if heap else -np.inf, pending.bound)
        if best_x is not None:
            global_bound = max(global_bound, best_val)
        if nodes >= node_limit:
            return finish(NODE_LIMIT, global_bound)
        if time.perf_counter() - start > time_limit:
            return finish(TIME_LIMIT, global_bound)
        if log_every and nodes % log_every == 0:
            log.info("nodes %d  bound %.9g  incumbent %.9g  gap %.3g  open %d", nodes, global_bound,
                     best_val, global_bound - best_val, len(heap))

        node, pending = pending, None
        apply(node.fixings)
        lp = engine.solve(warm=node.basis)
        nodes += 1
