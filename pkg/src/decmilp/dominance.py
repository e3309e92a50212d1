"""Iterated elimination of dominated sequences.

A length-horizon sequence ``p`` of agent ``i`` is dominated when some
mixture of its co-sequences (same history, different last action) does at
least as well as ``p`` against every surviving combination of the other
agents' sequences.  Shorter sequences are dominated when all of their
length-horizon descendants are.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .milp_solver.problem import MilpProblem
from .milp_solver.simplex import OPTIMAL, SimplexEngine
from .sequences import SequenceSpace
from .valuation import JointSequenceTable

log = logging.getLogger(__name__)

MARGIN = 1e-9


@dataclass
class DominanceResult:
    """Per agent: the dominated global sequence indices, and per elimination
    round the (agent, global indices) removed in that round."""

    dominated: list[set[int]]
    rounds: list[list[tuple[int, list[int]]]] = field(default_factory=list)
    lp_solves: int = 0

    def counts(self, spaces: list[SequenceSpace]) -> list[dict[int, int]]:
        """Per agent, dominated count for every length."""
        out = []
        for s, dom in zip(spaces, self.dominated):
            per = {t: 0 for t in range(1, s.horizon + 1)}
            for g in dom:
                per[s.length_of(g)] += 1
            out.append(per)
        return out

    def fraction(self, spaces: list[SequenceSpace], terminal_only: bool = False) -> list[float]:
        out = []
        for s, dom in zip(spaces, self.dominated):
            if terminal_only:
                lo = s.offsets[s.horizon - 1]
                out.append(sum(1 for g in dom if g >= lo) / s.size(s.horizon))
            else:
                out.append(len(dom) / len(s))
        return out

    def report(self, spaces: list[SequenceSpace]) -> dict:
        return {
            "dominated_per_length": [{str(t): c for t, c in per.items()} for per in self.counts(spaces)],
            "dominated_fraction": self.fraction(spaces),
            "rounds": [[{"agent": i, "removed": len(g)} for i, g in rnd] for rnd in self.rounds],
        }


def _reachable(table: JointSequenceTable, agent: int, locals_: np.ndarray, others: list[np.ndarray]) -> bool:
    """Whether some surviving joint sequence through these sequences has positive probability."""
    index = list(others)
    index.insert(agent, np.asarray(locals_))
    return bool(np.any(table.rho[np.ix_(*index)] > 0.0))


def co_sequences(space: SequenceSpace, p: int) -> set[int]:
    """Length-horizon sequences equal to ``p`` except for the last action."""
    if space.length_of(p) != space.horizon:
        raise ValueError(f"sequence {p} is not of length {space.horizon}")
    return set(space.co_sequences(p))


def _payoffs(table: JointSequenceTable, agent: int, local: int, others: list[np.ndarray]) -> np.ndarray:
    """nu over the other agents' surviving sequences, with agent's sequence fixed."""
    index = list(others)
    index.insert(agent, np.array([local]))
    return table.nu[np.ix_(*index)].reshape(-1)


def domination_margin(target: np.ndarray, rivals: np.ndarray) -> float:
    """max over mixtures theta of min_q (theta @ rivals[:, q] - target[q]).

    ``rivals`` has one row per co-sequence.  Solved as an LP: maximize e
    subject to ``sum_p' theta(p') nu(q') - e >= nu(q)`` and ``sum theta = 1``.
    """
    k, n_q = rivals.shape
    if k == 0:
        return -np.inf
    # columns: theta_1..theta_k, e (free)
    A = sp.vstack([
        sp.hstack([sp.csr_matrix(rivals.T), sp.csr_matrix(-np.ones((n_q, 1)))]),
        sp.csr_matrix(np.concatenate([np.ones(k), [0.0]])[None, :]),
    ], format="csr")
    c = np.zeros(k + 1)
    c[-1] = 1.0
    lb = np.concatenate([np.zeros(k), [-np.inf]])
    ub = np.concatenate([np.full(k, np.inf), [np.inf]])
    sense = np.array([">"] * n_q + ["="])
    rhs = np.concatenate([target, [1.0]])
    problem = MilpProblem(c, A, sense, rhs, lb, ub, np.zeros(k + 1, dtype=bool))
    sol = SimplexEngine(problem).solve()
    if sol.status != OPTIMAL:
        raise RuntimeError(f"domination LP ended with status {sol.status}")
    return sol.objective


def is_dominated(target: np.ndarray, rivals: np.ndarray, use_lp: bool = False) -> bool:
    """Whether a mixture of ``rivals`` rows weakly beats ``target`` everywhere.

    With a single rival the mixture is a point mass and the test reduces to
    an elementwise comparison; ``use_lp`` forces the LP route.
    """
    rivals = np.atleast_2d(rivals)
    if rivals.shape[0] == 0:
        return False
    if target.size == 0:
        return True
    if rivals.shape[0] == 1 and not use_lp:
        return bool(np.all(rivals[0] - target >= -MARGIN))
    return domination_margin(target, rivals) >= -MARGIN


def eliminate(spaces: list[SequenceSpace], table: JointSequenceTable, iterated: bool = True,
              use_lp: bool = False, max_rounds: int | None = None,
              against_all: bool = False) -> DominanceResult:
    """Iterated elimination over the length-horizon sequences of all agents.

    A round visits agents in index order.  Within an agent's pass every
    candidate is tested against the survivors as they stood when the pass
    began, and the removals are applied together at the end of the pass, so
    the outcome does not depend on the order of the tests.  Two co-sequences
    that tie everywhere therefore remove each other.  That is only allowed
    when the history is unreachable (every surviving joint sequence through
    it has probability zero); at a reachable history a group that would be
    emptied keeps its first member.  Rounds repeat until no agent loses a
    sequence (or after one round when ``iterated`` is false).

    With ``against_all`` the other agents' sequences are never pruned from
    the comparison, so each test ranges over every joint sequence instead of
    the current survivors.
    """
    n = len(spaces)
    k = table.horizon
    alive = [np.ones(s.size(k), dtype=bool) for s in spaces]
    result = DominanceResult([set() for _ in range(n)])
    while True:
        removed_round = []
        for i, s in enumerate(spaces):
            others = [np.arange(alive[j].size) if against_all else np.flatnonzero(alive[j])
                      for j in range(n) if j != i]
            A = s.n_actions
            flagged = np.zeros_like(alive[i])
            for local in np.flatnonzero(alive[i]):
                base = (local // A) * A
                rivals_local = [base + a for a in range(A) if base + a != local and alive[i][base + a]]
                if not rivals_local:
                    continue
                target = _payoffs(table, i, int(local), others)
                rivals = np.array([_payoffs(table, i, r, others) for r in rivals_local])
                if len(rivals_local) > 1 or use_lp:
                    result.lp_solves += 1
                flagged[local] = is_dominated(target, rivals, use_lp=use_lp)
            for base in range(0, len(flagged), A):
                group = slice(base, base + A)
                members = np.flatnonzero(alive[i][group])
                if members.size and flagged[group][members].all():
                    if _reachable(table, i, base + members, others):
                        flagged[base + members[0]] = False
            removed = [s.offsets[k - 1] + int(j) for j in np.flatnonzero(flagged)]
            alive[i] &= ~flagged
            if removed:
                removed_round.append((i, removed))
                log.info("round %d agent %d: %d dominated", len(result.rounds) + 1, i, len(removed))
        if not removed_round:
            break
        result.rounds.append(removed_round)
        if not iterated or (max_rounds is not None and len(result.rounds) >= max_rounds):
            break

    # Descendant rule, from length horizon-1 down to 1.
    for i, s in enumerate(spaces):
        dead = set(s.offsets[k - 1] + int(j) for j in np.flatnonzero(~alive[i]))
        for t in range(k - 1, 0, -1):
            for g in s.slice(t):
                if all(d in dead for d in s.descendants(g, k)):
                    dead.add(g)
        result.dominated[i] = dead
    return result
