"""Per-agent sequence spaces, policy constraints and tree/vector conversion.

A sequence of length t is the alternating list ``a1 o1 a2 ... o(t-1) at``.
Within one length, sequences are ordered by the mixed-radix value of that
digit list (first action most significant), so that the local index of
``p o a`` is ``(local(p) * |O| + o) * |A| + a``.  Global indices are
length-major.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .model import DecPomdp

DEFAULT_SEQUENCE_LIMIT = 10**7


class CapacityError(RuntimeError):
    """A requested enumeration exceeds its configured size limit."""


class PolicyStructureError(ValueError):
    """A policy vector or tree does not describe a valid deterministic policy."""


@dataclass(frozen=True)
class Sequence:
    agent: int
    actions: tuple[int, ...]
    observations: tuple[int, ...]

    def __post_init__(self):
        if len(self.actions) < 1 or len(self.observations) != len(self.actions) - 1:
            raise ValueError("a sequence of length t has t actions and t-1 observations")

    @property
    def length(self) -> int:
        return len(self.actions)

    def digits(self) -> tuple[int, ...]:
        out = [self.actions[0]]
        for o, a in zip(self.observations, self.actions[1:]):
            out += [o, a]
        return tuple(out)

    def __str__(self):
        return " ".join(f"o{d}" if k % 2 else f"a{d}" for k, d in enumerate(self.digits()))

    @classmethod
    def parse(cls, agent: int, text: str) -> "Sequence":
        """Parse the interface rendering ``"a2 o0 a1"``."""
        toks = text.split()
        if not toks or len(toks) % 2 == 0:
            raise ValueError(f"malformed sequence {text!r}")
        acts, obs = [], []
        for k, tok in enumerate(toks):
            want = "o" if k % 2 else "a"
            if not tok.startswith(want) or not tok[1:].isdigit():
                raise ValueError(f"malformed sequence {text!r}: token {tok!r}")
            (obs if k % 2 else acts).append(int(tok[1:]))
        return cls(agent, tuple(acts), tuple(obs))


class SequenceSpace:
    """All sequences of one agent with lengths 1..horizon."""

    def __init__(self, agent: int, n_actions: int, n_observations: int, horizon: int,
                 limit: int = DEFAULT_SEQUENCE_LIMIT):
        if horizon < 1:
            raise ValueError("horizon must be >= 1")
        self.agent = agent
        self.n_actions = n_actions
        self.n_observations = n_observations
        self.horizon = horizon
        self.sizes = tuple(n_actions**t * n_observations ** (t - 1) for t in range(1, horizon + 1))
        total = sum(self.sizes)
        if total > limit:
            raise CapacityError(f"agent {agent}: {total} sequences for horizon {horizon} exceeds limit {limit}")
        self.offsets = tuple(int(x) for x in np.concatenate([[0], np.cumsum(self.sizes)]))

    def __len__(self):
        return self.offsets[-1]

    def size(self, t: int) -> int:
        return self.sizes[t - 1]

    def slice(self, t: int) -> range:
        """Global indices of the length-t sequences."""
        return range(self.offsets[t - 1], self.offsets[t])

    def length_of(self, index: int) -> int:
        if not 0 <= index < len(self):
            raise IndexError(index)
        return int(np.searchsorted(self.offsets, index, side="right"))

    def local(self, index: int) -> tuple[int, int]:
        """(length, index within that length) of a global index."""
        t = self.length_of(index)
        return t, index - self.offsets[t - 1]

    def index_of(self, seq: Sequence) -> int:
        t = seq.length
        if t > self.horizon:
            raise IndexError(f"sequence of length {t} exceeds horizon {self.horizon}")
        k = 0
        for d, r in zip(seq.digits(), self._radices(t)):
            if not 0 <= d < r:
                raise IndexError(f"label {d} out of range in {seq}")
            k = k * r + d
        return self.offsets[t - 1] + k

    def sequence(self, index: int) -> Sequence:
        t, k = self.local(index)
        digits = []
        for r in reversed(self._radices(t)):
            k, d = divmod(k, r)
            digits.append(d)
        digits.reverse()
        return Sequence(self.agent, tuple(digits[0::2]), tuple(digits[1::2]))

    def __iter__(self):
        return (self.sequence(i) for i in range(len(self)))

    def _radices(self, t: int):
        return [self.n_actions] + [self.n_observations, self.n_actions] * (t - 1)

    def child(self, index: int, o: int, a: int) -> int:
        t, k = self.local(index)
        if t >= self.horizon:
            raise IndexError("length-horizon sequences have no extensions")
        return self.offsets[t] + (k * self.n_observations + o) * self.n_actions + a

    def parent(self, index: int) -> int | None:
        t, k = self.local(index)
        if t == 1:
            return None
        return self.offsets[t - 2] + k // (self.n_observations * self.n_actions)

    def co_sequences(self, index: int) -> list[int]:
        """Sequences that differ from ``index`` only in the last action."""
        t, k = self.local(index)
        base = self.offsets[t - 1] + (k // self.n_actions) * self.n_actions
        return [base + a for a in range(self.n_actions) if base + a != index]

    def descendants(self, index: int, t: int) -> range:
        """Global indices of the length-t descendants of ``index`` (including itself if t matches)."""
        tp, k = self.local(index)
        if t < tp:
            raise ValueError("descendant length must not be shorter")
        width = (self.n_observations * self.n_actions) ** (t - tp)
        start = self.offsets[t - 1] + k * width
        return range(start, start + width)

    @property
    def n_policies(self) -> int:
        return self.n_actions ** tree_node_count(self.n_observations, self.horizon)

    @property
    def tau(self) -> int:
        """Length-horizon sequences in any deterministic policy."""
        return self.n_observations ** (self.horizon - 1)

    @cached_property
    def constraints(self) -> "PolicyConstraintSystem":
        return policy_constraints(self)


def enumerate_sequences(m: DecPomdp, agent: int, horizon: int, limit: int = DEFAULT_SEQUENCE_LIMIT) -> SequenceSpace:
    return SequenceSpace(agent, m.n_actions[agent], m.n_observations[agent], horizon, limit)


def all_spaces(m: DecPomdp, horizon: int, limit: int = DEFAULT_SEQUENCE_LIMIT) -> list[SequenceSpace]:
    return [enumerate_sequences(m, i, horizon, limit) for i in range(m.n_agents)]


@dataclass(frozen=True)
class PolicyConstraintSystem:
    C: sp.csr_matrix
    b: np.ndarray

    @property
    def n_rows(self) -> int:
        return self.C.shape[0]

    def violated_rows(self, x: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        return np.flatnonzero(np.abs(self.C @ x - self.b) > tol)


def policy_constraint_rows(space: SequenceSpace):
    """Yield (row_label, [(col, coef), ...], rhs) in canonical row order.

    Row 0 is the root constraint; then one row per (p, o) for every p of
    length < horizon, ordered by p then o.
    """
    A, O = space.n_actions, space.n_observations
    yield ("root",), [(a, 1.0) for a in range(A)], 1.0
    for t in range(1, space.horizon):
        for p in space.slice(t):
            for o in range(O):
                first = space.child(p, o, 0)
                yield ("flow", p, o), [(p, 1.0)] + [(first + a, -1.0) for a in range(A)], 0.0


def policy_constraints(space: SequenceSpace) -> PolicyConstraintSystem:
    A, O = space.n_actions, space.n_observations
    n_flow = sum(space.size(t) for t in range(1, space.horizon)) * O
    n_rows = 1 + n_flow
    rows = [np.zeros(A, dtype=np.int64)]
    cols = [np.arange(A)]
    vals = [np.ones(A)]
    if n_flow:
        # Vectorized form of policy_constraint_rows.
        parents = np.concatenate([np.arange(space.offsets[t - 1], space.offsets[t]) for t in range(1, space.horizon)])
        parents = np.repeat(parents, O)
        obs = np.tile(np.arange(O), n_flow // O)
        row_ids = 1 + np.arange(n_flow)
        t_of = np.searchsorted(np.asarray(space.offsets), parents, side="right")
        local = parents - np.asarray(space.offsets)[t_of - 1]
        first_child = np.asarray(space.offsets)[t_of] + (local * O + obs) * A
        rows.append(row_ids)
        cols.append(parents)
        vals.append(np.ones(n_flow))
        for a in range(A):
            rows.append(row_ids)
            cols.append(first_child + a)
            vals.append(-np.ones(n_flow))
    C = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n_rows, len(space))).tocsr()
    C.sort_indices()
    b = np.zeros(n_rows)
    b[0] = 1.0
    return PolicyConstraintSystem(C, b)


def tree_node_count(n_observations: int, horizon: int) -> int:
    if n_observations == 1:
        return horizon
    return (n_observations**horizon - 1) // (n_observations - 1)


@dataclass(frozen=True)
class PolicyTree:
    """Deterministic policy tree of one agent.

    ``levels[d][h]`` is the action taken at depth ``d`` after the own
    observation history with mixed-radix index ``h`` (first observation most
    significant); level ``d`` therefore has ``n_observations**d`` nodes.
    """

    agent: int
    n_actions: int
    n_observations: int
    levels: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        for d, level in enumerate(self.levels):
            if len(level) != self.n_observations**d:
                raise PolicyStructureError(f"level {d} has {len(level)} nodes, expected {self.n_observations**d}")
            for h, a in enumerate(level):
                if not 0 <= a < self.n_actions:
                    raise PolicyStructureError(f"action label {a} out of range at depth {d}, node {h}")

    @property
    def horizon(self) -> int:
        return len(self.levels)

    @property
    def root_action(self) -> int:
        return self.levels[0][0]

    def subtree(self, o: int) -> "PolicyTree":
        """The (horizon-1)-tree entered through observation ``o``."""
        O = self.n_observations
        new = []
        for d in range(1, self.horizon):
            width = O ** (d - 1)
            new.append(self.levels[d][o * width:(o + 1) * width])
        return PolicyTree(self.agent, self.n_actions, O, tuple(new))

    def node_count(self) -> int:
        return sum(len(level) for level in self.levels)

    def render(self, action_label=None, observation_label=None) -> str:
        al = action_label or (lambda a: f"a{a}")
        ol = observation_label or (lambda o: f"o{o}")
        lines = []

        def walk(d, h, prefix):
            lines.append("  " * d + prefix + al(self.levels[d][h]))
            if d + 1 < self.horizon:
                for o in range(self.n_observations):
                    walk(d + 1, h * self.n_observations + o, f"{ol(o)} -> ")

        walk(0, 0, "")
        return "\n".join(lines)

    @classmethod
    def from_index(cls, agent: int, n_actions: int, n_observations: int, horizon: int, index: int) -> "PolicyTree":
        """The ``index``-th tree in canonical order (mixed radix over node
        actions, root most significant, then breadth-first)."""
        n_nodes = tree_node_count(n_observations, horizon)
        digits = []
        for _ in range(n_nodes):
            index, d = divmod(index, n_actions)
            digits.append(d)
        if index:
            raise ValueError("tree index out of range")
        digits.reverse()
        levels, pos = [], 0
        for d in range(horizon):
            w = n_observations**d
            levels.append(tuple(digits[pos:pos + w]))
            pos += w
        return cls(agent, n_actions, n_observations, tuple(levels))


def tree_local_indices(tree: PolicyTree) -> list[np.ndarray]:
    """Local (per-length) sequence indices traced by every node, level by level."""
    A, O = tree.n_actions, tree.n_observations
    out = [np.array([tree.root_action])]
    for d in range(1, tree.horizon):
        parent = np.repeat(out[-1], O)
        obs = np.tile(np.arange(O), O ** (d - 1))
        out.append((parent * O + obs) * A + np.asarray(tree.levels[d]))
    return out


def tree_to_vector(tree: PolicyTree, space: SequenceSpace) -> np.ndarray:
    """Sequence-form 0/1 vector of a policy tree."""
    if tree.horizon != space.horizon:
        raise PolicyStructureError(f"tree depth {tree.horizon} != space horizon {space.horizon}")
    if tree.n_actions != space.n_actions or tree.n_observations != space.n_observations:
        raise PolicyStructureError("tree labels do not match the sequence space")
    x = np.zeros(len(space))
    for t, local in enumerate(tree_local_indices(tree), start=1):
        x[space.offsets[t - 1] + local] = 1.0
    return x


def selected_terminal(tree: PolicyTree) -> np.ndarray:
    """Local indices of the length-horizon sequences of a tree, ordered by observation history."""
    return tree_local_indices(tree)[-1]


def vector_to_tree(x: np.ndarray, space: SequenceSpace, tol: float = 1e-9) -> PolicyTree:
    """Inverse of :func:`tree_to_vector` for deterministic feasible vectors."""
    x = np.asarray(x, dtype=float)
    if x.shape != (len(space),):
        raise PolicyStructureError(f"vector has length {x.shape}, expected {len(space)}")
    if np.any(np.minimum(np.abs(x), np.abs(x - 1.0)) > tol):
        raise PolicyStructureError("vector is not 0/1")
    on = x > 0.5
    A, O = space.n_actions, space.n_observations

    def unique_choice(first: int, where) -> int:
        chosen = np.flatnonzero(on[first:first + A])
        if len(chosen) != 1:
            raise PolicyStructureError(f"no unique continuation at {where}: {len(chosen)} actions selected")
        return int(chosen[0])

    levels = [(unique_choice(0, "root"),)]
    current = [levels[0][0]]  # local indices of selected sequences at this level
    for t in range(1, space.horizon):
        acts, nxt = [], []
        for k in current:
            for o in range(O):
                first_local = (k * O + o) * A
                a = unique_choice(space.offsets[t] + first_local,
                                  f"(p={space.sequence(space.offsets[t - 1] + k)}, o={o})")
                acts.append(a)
                nxt.append(first_local + a)
        levels.append(tuple(acts))
        current = nxt
    tree = PolicyTree(space.agent, A, O, tuple(levels))
    if np.count_nonzero(on) != tree.node_count():
        extra = np.flatnonzero(on & (tree_to_vector(tree, space) < 0.5))
        raise PolicyStructureError(f"vector selects sequences outside the policy tree, e.g. {space.sequence(int(extra[0]))}")
    return tree


def check_policy_vector(x: np.ndarray, space: SequenceSpace, tol: float = 1e-9) -> None:
    """Raise :class:`PolicyStructureError` naming the first violated row."""
    x = np.asarray(x, dtype=float)
    if x.shape != (len(space),):
        raise PolicyStructureError(f"vector has length {x.shape}, expected {len(space)}")
    if np.any(np.minimum(np.abs(x), np.abs(x - 1.0)) > tol):
        raise PolicyStructureError("vector is not 0/1")
    bad = space.constraints.violated_rows(x, tol)
    if len(bad):
        r = int(bad[0])
        if r == 0:
            raise PolicyStructureError("row 0 (root): exactly one length-1 sequence must be selected")
        p, o = divmod(r - 1, space.n_observations)
        raise PolicyStructureError(f"row {r}: sequence {space.sequence(p)} with observation o{o} "
                                   f"does not have exactly one selected continuation")


def random_tree(rng: np.random.Generator, agent: int, n_actions: int, n_observations: int, horizon: int) -> PolicyTree:
    levels = tuple(tuple(int(a) for a in rng.integers(0, n_actions, n_observations**d)) for d in range(horizon))
    return PolicyTree(agent, n_actions, n_observations, levels)


def policy_to_json(x: np.ndarray, space: SequenceSpace) -> dict:
    return {"agent": space.agent, "sequences": [str(space.sequence(int(i))) for i in np.flatnonzero(x > 0.5)]}


def policy_from_json(obj: dict, space: SequenceSpace) -> np.ndarray:
    if obj.get("agent") != space.agent:
        raise PolicyStructureError(f"policy is for agent {obj.get('agent')}, expected {space.agent}")
    x = np.zeros(len(space))
    for text in obj["sequences"]:
        try:
            idx = space.index_of(Sequence.parse(space.agent, text))
        except (ValueError, IndexError) as exc:
            raise PolicyStructureError(str(exc)) from None
        x[idx] = 1.0
    return x
