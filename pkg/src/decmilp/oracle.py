"""Exhaustive search over deterministic joint policies (test oracle)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import DecPomdp
from .sequences import CapacityError, PolicyTree, SequenceSpace, tree_node_count
from .valuation import JointSequenceTable

DEFAULT_POLICY_LIMIT = 10**8


@dataclass
class OracleResult:
    value: float
    trees: list[PolicyTree]
    policy_indices: tuple[int, ...]
    n_evaluated: int


def enumerate_terminal_sets(space: SequenceSpace) -> np.ndarray:
    """Row j: local indices of the length-horizon sequences of the j-th tree
    in canonical tree order."""
    A, O, k = space.n_actions, space.n_observations, space.horizon
    nodes = tree_node_count(O, k)
    P = A**nodes
    idx = np.arange(P, dtype=np.int64)
    powers = A ** np.arange(nodes - 1, -1, -1, dtype=np.int64)
    digits = (idx[:, None] // powers[None, :]) % A  # root first, breadth first
    cur = digits[:, :1]
    pos = 1
    for d in range(1, k):
        w = O**d
        parent = np.repeat(cur, O, axis=1)
        obs = np.tile(np.arange(O), w // O)
        cur = (parent * O + obs) * A + digits[:, pos:pos + w]
        pos += w
    return cur


def count_joint_policies(spaces: list[SequenceSpace]) -> int:
    return math.prod(s.n_policies for s in spaces)


def brute_force_optimal(m: DecPomdp, spaces: list[SequenceSpace], table: JointSequenceTable,
                        limit: int = DEFAULT_POLICY_LIMIT, tie_tol: float = 1e-9) -> OracleResult:
    """Score every deterministic joint policy through the nu table.

    Returns the maximum and the lexicographically first policy tuple whose
    value is within ``tie_tol`` of it.
    """
    count = count_joint_policies(spaces)
    if count > limit:
        raise CapacityError(f"refusing to enumerate {count} joint policies (limit {limit})")
    sets = [enumerate_terminal_sets(s) for s in spaces]
    counts = [len(s) for s in sets]

    # Contract nu with each agent's 0/1 selection matrix in turn.  Chunk the
    # first agent so intermediate arrays stay bounded.
    def indicator(sel, width):
        X = np.zeros((sel.shape[0], width))
        np.put_along_axis(X, sel, 1.0, axis=1)
        return X

    inds = [indicator(sel, sp_.size(sp_.horizon)) for sel, sp_ in zip(sets, spaces)]
    nu = table.nu
    rest = math.prod(counts[1:])
    chunk = max(1, int(2e7 // max(rest, 1)))
    best_val, best_idx = -np.inf, None
    for start in range(0, counts[0], chunk):
        # First agent: gather-and-sum its tau rows of nu.
        vals = nu[sets[0][start:start + chunk]].sum(axis=1)  # (c, s1, ..., s_{n-1})
        for X in inds[1:]:
            # Contract axis 1 (the next agent's sequences) and move result last.
            vals = np.tensordot(vals, X, axes=([1], [1]))
        flat = vals.reshape(-1)
        top = flat.max()
        if top > best_val + tie_tol:
            first = int(np.flatnonzero(flat >= top - tie_tol)[0])
            best_val = top
            pos = np.unravel_index(first, vals.shape)
            best_idx = (start + int(pos[0]),) + tuple(int(v) for v in pos[1:])
    trees = [PolicyTree.from_index(i, sp_.n_actions, sp_.n_observations, sp_.horizon, j)
             for i, (sp_, j) in enumerate(zip(spaces, best_idx))]
    return OracleResult(float(best_val), trees, best_idx, count)
