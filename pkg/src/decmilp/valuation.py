"""Joint-sequence values and joint-policy evaluation.

For a joint sequence q of length t, ``rho(q)`` is the probability of its
joint observations given its joint actions, ``R(q)`` the summed expected
reward along the chain of beliefs it induces and ``nu(q) = rho(q) * R(q)``.
A joint policy is worth the sum of ``nu`` over its length-horizon joint
sequences, which must agree with the usual tree recursion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import DecPomdp, belief_update
from .sequences import (CapacityError, PolicyTree, Sequence, SequenceSpace,
                        check_policy_vector)

DEFAULT_TABLE_LIMIT = 10**8


@dataclass(frozen=True)
class JointSequence:
    """n per-agent sequences of equal length."""

    parts: tuple[Sequence, ...]

    def __post_init__(self):
        if len({s.length for s in self.parts}) != 1:
            raise ValueError("component sequences must have equal length")

    @property
    def length(self) -> int:
        return self.parts[0].length

    def joint_actions(self, m: DecPomdp) -> list[int]:
        return [m.joint_action(acts) for acts in zip(*(s.actions for s in self.parts))]

    def joint_observations(self, m: DecPomdp) -> list[int]:
        return [m.joint_observation(obs) for obs in zip(*(s.observations for s in self.parts))]


def joint_sequence_value(m: DecPomdp, q: JointSequence) -> tuple[float, float, float]:
    """(rho, R, nu) of one joint sequence, computed directly along its beliefs.

    When some observation has probability zero, rho, R and nu are all 0.
    """
    acts = q.joint_actions(m)
    obs = q.joint_observations(m)
    b = m.b0
    rho, total = 1.0, float(b @ m.R[acts[0]])
    for a_prev, o, a in zip(acts, obs, acts[1:]):
        prob, b = belief_update(m, b, a_prev, o)
        if b is None:
            return 0.0, 0.0, 0.0
        rho *= prob
        total += float(b @ m.R[a])
    return rho, total, rho * total


@dataclass(frozen=True)
class JointSequenceTable:
    """rho, R and nu for every joint sequence of length ``horizon``.

    Arrays have shape ``(|S_1^k|, ..., |S_n^k|)`` and are indexed by the
    per-agent local indices of the length-horizon sequences.
    """

    horizon: int
    rho: np.ndarray
    R: np.ndarray
    nu: np.ndarray

    @property
    def shape(self) -> tuple[int, ...]:
        return self.nu.shape

    @property
    def size(self) -> int:
        return self.nu.size

    def dump(self, fh) -> None:
        """Write "q_1 ... q_n rho R nu" lines in canonical order."""
        for idx in np.ndindex(*self.shape):
            fh.write(" ".join(map(str, idx)) + f" {float(self.rho[idx])!r} {float(self.R[idx])!r} {float(self.nu[idx])!r}\n")


def _transition_observation(m: DecPomdp) -> np.ndarray:
    """W[a] as an (S, S*|O|) matrix: W[a][s, s2*|O| + o] = T[a,s,s2] Z[a,s2,o]."""
    W = m.T[:, :, :, None] * m.Z[:, None, :, :]
    return W.reshape(m.n_joint_actions, m.n_states, -1)


def joint_history_values(m: DecPomdp, horizon: int, limit: int = DEFAULT_TABLE_LIMIT) -> tuple[np.ndarray, np.ndarray]:
    """rho and R of every joint history ``a1 o1 ... a_k`` as flat arrays.

    Entries follow mixed-radix order over the digits (ja1, jo1, ..., ja_k),
    which is the canonical sequence order of a single agent whose actions and
    observations are the joint ones.  Beliefs are computed once per prefix,
    breadth first.
    """
    k = horizon
    nA, nO, S = m.n_joint_actions, m.n_joint_observations, m.n_states
    total = nA**k * nO ** (k - 1)
    if total > limit:
        raise CapacityError(f"{total} joint sequences for horizon {k} exceeds limit {limit}")
    W = _transition_observation(m)

    # Level 1: one history per joint action, all share b0.
    beliefs = np.broadcast_to(m.b0, (1, S))
    rho = np.ones(1)
    acc = np.zeros(1)
    last_action = None
    for t in range(1, k + 1):
        if t > 1:
            # Observe: history h (last action a_h) -> (h, o).
            H = beliefs.shape[0]
            nxt = np.empty((H, S * nO))
            for a in range(nA):
                rows = np.flatnonzero(last_action == a)
                if rows.size:
                    nxt[rows] = beliefs[rows] @ W[a]
            nxt = nxt.reshape(H, S, nO).transpose(0, 2, 1).reshape(H * nO, S)
            prob = nxt.sum(axis=1)
            alive = prob > 0.0
            beliefs = np.zeros_like(nxt)
            beliefs[alive] = nxt[alive] / prob[alive, None]
            rho = np.repeat(rho, nO) * prob
            acc = np.where(alive, np.repeat(acc, nO), 0.0)
        # Act: every current history branches on the next joint action.
        step = beliefs @ m.R.T  # (H, nA)
        acc = (acc[:, None] + step).reshape(-1)
        rho = np.repeat(rho, nA)
        if t < k:
            beliefs = np.repeat(beliefs, nA, axis=0)
            last_action = np.tile(np.arange(nA), beliefs.shape[0] // nA)
    acc = np.where(rho > 0.0, acc, 0.0)
    return rho, acc


def build_table(m: DecPomdp, spaces: list[SequenceSpace], horizon: int | None = None,
                limit: int = DEFAULT_TABLE_LIMIT) -> JointSequenceTable:
    """Values of every length-horizon joint sequence, indexed per agent."""
    k = horizon if horizon is not None else spaces[0].horizon
    if any(s.horizon < k for s in spaces):
        raise ValueError("sequence spaces are shorter than the requested horizon")
    rho, acc = joint_history_values(m, k, limit)
    nu = rho * acc

    # Reorder from joint-history digits (ja1, jo1, ..., ja_k) to per-agent
    # sequence digits (agent 0's a1 o1 ... a_k, agent 1's ..., ...).
    n = m.n_agents
    dims, axes_of = [], [[] for _ in range(n)]
    for t in range(k):
        if t > 0:
            for i in range(n):
                axes_of[i].append(len(dims))
                dims.append(m.n_observations[i])
        for i in range(n):
            axes_of[i].append(len(dims))
            dims.append(m.n_actions[i])
    # Per-agent digit order is a1 o1 a2 ...; the joint layout interleaves
    # (o^t for all agents) then (a^t for all agents), so sort each agent's
    # axes by position, which already alternates a/o correctly.
    perm = [ax for i in range(n) for ax in sorted(axes_of[i])]
    shape = tuple(s.size(k) for s in spaces)

    def reorder(arr):
        return np.ascontiguousarray(arr.reshape(dims).transpose(perm)).reshape(shape)

    return JointSequenceTable(k, reorder(rho), reorder(acc), reorder(nu))


def tree_value(m: DecPomdp, trees: list[PolicyTree]) -> float:
    """Expected total reward of a joint policy given as policy trees."""
    if len(trees) != m.n_agents:
        raise ValueError("need one tree per agent")
    k = trees[0].horizon
    if any(t.horizon != k for t in trees):
        raise ValueError("all trees must have the same depth")
    W = _transition_observation(m).reshape(m.n_joint_actions, m.n_states, m.n_states, m.n_joint_observations)
    obs_digits = [m.split_observation(o) for o in range(m.n_joint_observations)]

    def V(depth, nodes):
        # nodes[i]: observation-history index of agent i's current node
        a = m.joint_action([tr.levels[depth][h] for tr, h in zip(trees, nodes)])
        v = m.R[a].copy()
        if depth + 1 < k:
            for o, parts in enumerate(obs_digits):
                child = [h * tr.n_observations + oi for tr, h, oi in zip(trees, nodes, parts)]
                v += W[a, :, :, o] @ V(depth + 1, child)
        return v

    return float(m.b0 @ V(0, [0] * m.n_agents))


def terminal_selection(x: np.ndarray, space: SequenceSpace) -> np.ndarray:
    """Local indices of the selected length-horizon sequences."""
    sl = space.slice(space.horizon)
    return np.flatnonzero(np.asarray(x)[sl.start:sl.stop] > 0.5)


def sequence_form_value(table: JointSequenceTable, xs: list[np.ndarray],
                        spaces: list[SequenceSpace] | None = None, check: bool = True) -> float:
    """Sum of nu over the joint sequences selected by deterministic policy vectors."""
    if spaces is not None:
        if check:
            for x, sp_ in zip(xs, spaces):
                check_policy_vector(x, sp_)
        picks = [terminal_selection(x, sp_) for x, sp_ in zip(xs, spaces)]
    else:
        # xs given as vectors over the length-horizon slice only
        picks = [np.flatnonzero(np.asarray(x) > 0.5) for x in xs]
    return float(table.nu[np.ix_(*picks)].sum())


def joint_policy_count(spaces: list[SequenceSpace]) -> int:
    return math.prod(s.n_policies for s in spaces)
