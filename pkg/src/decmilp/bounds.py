"""Objective bounds: a lower bound from a shorter horizon and an upper bound
from the centralized POMDP over joint actions and joint observations."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .milp_solver.problem import MilpProblem
from .milp_solver.simplex import OPTIMAL, SimplexEngine
from .model import DecPomdp
from .sequences import SequenceSpace, policy_constraints
from .valuation import joint_history_values


@dataclass(frozen=True)
class BoundPair:
    lower: float | None = None
    upper: float | None = None
    notes: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.lower is not None and self.upper is not None and self.lower > self.upper + 1e-9:
            raise ValueError(f"lower bound {self.lower} exceeds upper bound {self.upper}")

    def to_json(self) -> dict:
        return {"lower": self.lower, "upper": self.upper, "notes": dict(self.notes)}


def worst_case_step(m: DecPomdp) -> float:
    """max over joint actions of the smallest reward over states."""
    return float(m.R.min(axis=1).max())


def lower_bound(value_shorter: float, m: DecPomdp) -> float:
    """Lower bound for horizon t+1 from the optimal value at horizon t.

    Appending a step that plays the max-min joint action everywhere gives a
    feasible (t+1)-step policy worth at least this much.
    """
    return value_shorter + worst_case_step(m)


def centralized_space(m: DecPomdp, horizon: int) -> SequenceSpace:
    """Sequence space of one agent that controls the joint actions and sees
    the joint observations."""
    return SequenceSpace(-1, m.n_joint_actions, m.n_joint_observations, horizon)


def pomdp_lp(m: DecPomdp, horizon: int) -> MilpProblem:
    """Sequence-form LP of the centralized POMDP.

    One variable per joint sequence of length 1..horizon; the rows are the
    policy constraints of the centralized agent and the objective weights
    length-horizon joint sequences by ``nu``.
    """
    space = centralized_space(m, horizon)
    rho, acc = joint_history_values(m, horizon)
    system = policy_constraints(space)
    n = len(space)
    c = np.zeros(n)
    c[space.offsets[horizon - 1]:] = rho * acc
    return MilpProblem(c, system.C, np.full(system.n_rows, "="), system.b, np.zeros(n), np.full(n, np.inf),
                       np.zeros(n, dtype=bool))


def pomdp_upper_bound(m: DecPomdp, horizon: int, method: str = "lp") -> float:
    """Value of an optimal horizon-step policy of the centralized POMDP.

    ``method="lp"`` solves the sequence-form LP with the simplex engine;
    ``method="dp"`` evaluates the same program by backward induction over
    the joint-history tree (its constraint rows form a tree, so the two
    agree).
    """
    if method == "lp":
        sol = SimplexEngine(pomdp_lp(m, horizon)).solve()
        if sol.status != OPTIMAL:
            raise RuntimeError(f"POMDP LP is {sol.status}; the constraint system should always be feasible")
        return sol.objective
    if method == "dp":
        rho, acc = joint_history_values(m, horizon)
        nA, nO = m.n_joint_actions, m.n_joint_observations
        v = rho * acc
        for _ in range(horizon - 1):
            # best last action for every (prefix, observation), summed over observations
            v = v.reshape(-1, nO, nA).max(axis=2).sum(axis=1)
        return float(v.max())
    raise ValueError(f"unknown method {method!r}")
