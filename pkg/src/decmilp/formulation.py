"""Assemble the sequence-form integer programs for a Dec-POMDP.

Variables are ordered as: one ``y`` per surviving length-horizon joint
sequence (C order over the per-agent local indices), then ``x_i`` for each
agent's surviving sequences in canonical order.  Rows are: each agent's
policy constraints, then each agent's joint-policy constraints, then (for
the pruned variant) the probability-mass row, then any bound rows.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from .milp_solver.problem import MilpProblem
from .model import DecPomdp
from .sequences import SequenceSpace
from .valuation import JointSequenceTable


class Variant(str, enum.Enum):
    ILP_DEC = "ilp"
    MILP_DEC = "milp"
    MILP_PR_DEC = "milp-pr"


@dataclass(frozen=True)
class Layout:
    """Maps MILP columns back to sequences and joint sequences."""

    horizon: int
    spaces: list[SequenceSpace]
    # surviving global sequence indices per agent (sorted)
    kept: list[np.ndarray]
    # surviving local length-horizon indices per agent (sorted)
    kept_terminal: list[np.ndarray]
    y_start: int
    y_count: int
    x_start: list[int]

    @property
    def y_shape(self) -> tuple[int, ...]:
        return tuple(len(k) for k in self.kept_terminal)

    def x_slice(self, agent: int) -> slice:
        return slice(self.x_start[agent], self.x_start[agent] + len(self.kept[agent]))

    def x_column(self, agent: int, seq_index: int) -> int:
        pos = np.searchsorted(self.kept[agent], seq_index)
        if pos >= len(self.kept[agent]) or self.kept[agent][pos] != seq_index:
            raise KeyError(f"sequence {seq_index} of agent {agent} has no variable")
        return self.x_start[agent] + int(pos)

    def full_vector(self, agent: int, values: np.ndarray) -> np.ndarray:
        """Scatter an agent's x block into a vector over its whole sequence space."""
        out = np.zeros(len(self.spaces[agent]))
        out[self.kept[agent]] = values[self.x_slice(agent)]
        return out

    def y_joint_index(self, column: int) -> tuple[int, ...]:
        """Per-agent local indices of the joint sequence behind a y column."""
        pos = np.unravel_index(column - self.y_start, self.y_shape)
        return tuple(int(k[p]) for k, p in zip(self.kept_terminal, pos))


def tau(spaces: list[SequenceSpace]) -> list[int]:
    return [s.tau for s in spaces]


def tau_others(spaces: list[SequenceSpace], agent: int) -> int:
    return math.prod(s.tau for j, s in enumerate(spaces) if j != agent)


def build(m: DecPomdp, spaces: list[SequenceSpace], variant: Variant | str, table: JointSequenceTable,
          dominated: list[set[int]] | None = None, names: bool = True) -> MilpProblem:
    """Build ILP-Dec, MILP-Dec or MILP-Pr-Dec.

    ``dominated`` (required for the pruned variant only) holds, per agent,
    the global indices of sequences that get no variable.
    """
    variant = Variant(variant)
    k = table.horizon
    if any(s.horizon != k for s in spaces):
        raise ValueError(f"sequence spaces do not match table horizon {k}")
    if len(spaces) != m.n_agents:
        raise ValueError("need one sequence space per agent")
    if variant is Variant.MILP_PR_DEC:
        if dominated is None:
            raise ValueError("the pruned variant needs dominance data")
    elif dominated is not None:
        raise ValueError("dominance data is only used by the pruned variant")
    n = m.n_agents

    kept, kept_terminal = [], []
    for i, s in enumerate(spaces):
        mask = np.ones(len(s), dtype=bool)
        if dominated is not None and dominated[i]:
            mask[np.fromiter(dominated[i], dtype=np.int64)] = False
        idx = np.flatnonzero(mask)
        kept.append(idx)
        term = idx[idx >= s.offsets[k - 1]] - s.offsets[k - 1]
        if len(term) == 0:
            raise ValueError(f"agent {i} has no surviving sequence of length {k}")
        kept_terminal.append(term)

    y_shape = tuple(len(t) for t in kept_terminal)
    n_y = math.prod(y_shape)
    x_start, pos = [], n_y
    for idx in kept:
        x_start.append(pos)
        pos += len(idx)
    n_vars = pos
    layout = Layout(k, spaces, kept, kept_terminal, 0, n_y, x_start)

    nu = table.nu[np.ix_(*kept_terminal)]
    c = np.zeros(n_vars)
    c[:n_y] = nu.reshape(-1)
    lb = np.zeros(n_vars)
    ub = np.ones(n_vars)
    binary = np.zeros(n_vars, dtype=bool)
    if variant is Variant.ILP_DEC:
        binary[:] = True
    else:
        for i, s in enumerate(spaces):
            sl = layout.x_slice(i)
            binary[sl] = kept[i] >= s.offsets[k - 1]

    rows, cols, vals, sense, rhs, row_names = [], [], [], [], [], []
    r = 0

    def add_row(entries, sn, b, name):
        nonlocal r
        for col, v in entries:
            rows.append(r)
            cols.append(col)
            vals.append(v)
        sense.append(sn)
        rhs.append(b)
        row_names.append(name)
        r += 1

    # Policy constraints over surviving sequences.  A (p, o) row is dropped
    # when none of p's continuations after o survives.
    for i, s in enumerate(spaces):
        alive = np.zeros(len(s), dtype=bool)
        alive[kept[i]] = True
        A_i, O_i = s.n_actions, s.n_observations
        add_row([(layout.x_column(i, a), 1.0) for a in range(A_i) if alive[a]], "=", 1.0, f"pol{i}_root")
        for t in range(1, k):
            for p in s.slice(t):
                if not alive[p]:
                    continue
                for o in range(O_i):
                    first = s.child(p, o, 0)
                    kids = [first + a for a in range(A_i) if alive[first + a]]
                    if not kids:
                        continue
                    add_row([(layout.x_column(i, p), 1.0)] + [(layout.x_column(i, q), -1.0) for q in kids],
                            "=", 0.0, f"pol{i}_{p}_o{o}")

    # Joint-policy constraints: sum_{q: q_i = p} y[q] (=|<=) tau_{-i} x_i[p].
    joint_sense = "<" if variant is Variant.MILP_PR_DEC else "="
    y_ids = np.arange(n_y).reshape(y_shape)
    for i, s in enumerate(spaces):
        t_others = tau_others(spaces, i)
        for pos_p, p_local in enumerate(kept_terminal[i]):
            ys = np.take(y_ids, pos_p, axis=i).reshape(-1)
            p = s.offsets[k - 1] + int(p_local)
            add_row([(int(q), 1.0) for q in ys] + [(layout.x_column(i, p), -float(t_others))],
                    joint_sense, 0.0, f"joint{i}_{p}")

    if variant is Variant.MILP_PR_DEC:
        # With '<=' joint rows, y inside a chosen block may drop below 1; the
        # observation probabilities of a deterministic joint policy sum to 1,
        # which pins every reachable y of the block back to 1.
        rho = table.rho[np.ix_(*kept_terminal)].reshape(-1)
        nz = np.flatnonzero(rho)
        add_row([(int(q), float(rho[q])) for q in nz], "=", 1.0, "mass")

    A = sp.csr_matrix((vals, (rows, cols)), shape=(r, n_vars))
    A.sum_duplicates()
    var_names = None
    if names:
        var_names = [f"y{'_'.join(map(str, layout.y_joint_index(j)))}" for j in range(n_y)]
        for i in range(n):
            var_names += [f"x{i}_{int(g)}" for g in kept[i]]
    return MilpProblem(c, A, np.array(sense), np.array(rhs, dtype=float), lb, ub, binary,
                       var_names=var_names, row_names=row_names,
                       metadata={"variant": variant, "layout": layout, "model": m})


def add_bounds(problem: MilpProblem, lower: float | None = None, upper: float | None = None) -> MilpProblem:
    """Append objective bound rows ``f(y) >= lower`` and/or ``f(y) <= upper``."""
    if lower is not None and upper is not None and lower > upper:
        raise ValueError(f"lower bound {lower} exceeds upper bound {upper}")
    if lower is None and upper is None:
        return problem
    layout: Layout = problem.metadata["layout"]
    cols = np.arange(layout.y_start, layout.y_start + layout.y_count)
    coef = problem.c[cols]
    nz = coef != 0
    row = sp.csr_matrix((coef[nz], (np.zeros(nz.sum(), dtype=int), cols[nz])), shape=(1, problem.n_vars))
    out = problem
    if lower is not None:
        out = out.with_rows(row, [">"], [lower - problem.offset], ["lower_bound"])
    if upper is not None:
        out = out.with_rows(row, ["<"], [upper - problem.offset], ["upper_bound"])
    return replace(out, metadata={**problem.metadata, "bounds": (lower, upper)})


def policy_assignment(problem: MilpProblem, xs: list[np.ndarray]) -> np.ndarray:
    """Variable vector (x and y) induced by deterministic policy vectors."""
    layout: Layout = problem.metadata["layout"]
    v = np.zeros(problem.n_vars)
    k = layout.horizon
    picks = []
    for i, (x, s) in enumerate(zip(xs, layout.spaces)):
        v[layout.x_slice(i)] = x[layout.kept[i]]
        term = np.asarray(x[s.offsets[k - 1]:s.offsets[k]])
        picks.append(term[layout.kept_terminal[i]])
    block = picks[0]
    for pk in picks[1:]:
        block = np.multiply.outer(block, pk)
    v[layout.y_start:layout.y_start + layout.y_count] = block.reshape(-1)
    return v


def round_to_policy(problem: MilpProblem, values: np.ndarray, sweeps: int = 10) -> np.ndarray | None:
    """Feasible assignment obtained by rounding an LP solution, or None.

    Each agent's policy is first grown from the root, taking at every
    history the kept action with the largest LP value.  The agents then take
    turns replacing their policy by a best response to the others until no
    one improves.  Used as a primal heuristic.
    """
    layout: Layout = problem.metadata["layout"]
    spaces = layout.spaces
    scores = []
    for i, space in enumerate(spaces):
        score = np.full(len(space), -np.inf)
        score[layout.kept[i]] = layout.full_vector(i, values)[layout.kept[i]]
        scores.append(score)
    xs = [_grow(space, score, layout.horizon) for space, score in zip(spaces, scores)]
    if any(x is None for x in xs):
        return None
    nu = problem.c[layout.y_start:layout.y_start + layout.y_count].reshape(layout.y_shape)
    best = _joint_value(nu, xs, layout)
    for _ in range(sweeps):
        improved = False
        for i in range(len(spaces)):
            w = nu
            for j in reversed(range(len(spaces))):
                if j != i:
                    w = np.tensordot(w, _terminal(xs[j], layout, j), axes=([j], [0]))
            x = _best_response(spaces[i], layout, i, w)
            if x is None:
                continue
            trial = xs[:i] + [x] + xs[i + 1:]
            value = _joint_value(nu, trial, layout)
            if value > best + 1e-12:
                xs, best, improved = trial, value, True
        if not improved:
            break
    v = policy_assignment(problem, xs)
    return v if problem.is_feasible(v) else None


def _terminal(x: np.ndarray, layout: Layout, agent: int) -> np.ndarray:
    s = layout.spaces[agent]
    k = layout.horizon
    return x[s.offsets[k - 1]:s.offsets[k]][layout.kept_terminal[agent]]


def _joint_value(nu: np.ndarray, xs: list[np.ndarray], layout: Layout) -> float:
    w = nu
    for j in reversed(range(len(xs))):
        w = np.tensordot(w, _terminal(xs[j], layout, j), axes=([j], [0]))
    return float(w)


def _grow(space: SequenceSpace, score: np.ndarray, k: int) -> np.ndarray | None:
    """Deterministic policy choosing the highest-scoring action at every history."""
    A, O = space.n_actions, space.n_observations
    x = np.zeros(len(space))
    first = score[:A]
    if not np.isfinite(first).any():
        return None
    frontier = [int(np.argmax(first))]
    for t in range(1, k):
        nxt = []
        for g in frontier:
            local = g - space.offsets[t - 1]
            for o in range(O):
                base = space.offsets[t] + (local * O + o) * A
                block = score[base:base + A]
                if np.isfinite(block).any():
                    # a group with nothing kept is unreachable; leave it empty
                    nxt.append(base + int(np.argmax(block)))
        x[frontier] = 1.0
        frontier = nxt
    x[frontier] = 1.0
    return x


def _best_response(space: SequenceSpace, layout: Layout, agent: int, w: np.ndarray) -> np.ndarray | None:
    """Policy maximizing the sum of ``w`` over its kept length-horizon sequences."""
    k = layout.horizon
    A, O = space.n_actions, space.n_observations
    kept = np.zeros(len(space), dtype=bool)
    kept[layout.kept[agent]] = True
    value = np.full(len(space), -np.inf)
    term = np.full(space.size(k), -np.inf)
    term[layout.kept_terminal[agent]] = w
    value[space.offsets[k - 1]:] = term
    for t in range(k - 1, 0, -1):
        kids = value[space.offsets[t]:space.offsets[t + 1]].reshape(space.size(t), O, A).max(axis=2)
        kids[np.isneginf(kids)] = 0.0
        level = slice(space.offsets[t - 1], space.offsets[t])
        value[level] = np.where(kept[level], kids.sum(axis=1), -np.inf)
    return _grow(space, value, k)


def _num(v) -> str:
    return repr(float(v))


def write_lp(problem: MilpProblem, fh) -> None:
    """Emit the problem in CPLEX LP text format."""
    names = problem.var_names or [f"v{j}" for j in range(problem.n_vars)]
    rnames = problem.row_names or [f"r{i}" for i in range(problem.n_rows)]

    def terms(cols, coefs):
        parts = []
        for j, v in zip(cols, coefs):
            if v == 0:
                continue
            sign = "-" if v < 0 else "+"
            parts.append(f"{sign} {_num(abs(v))} {names[j]}")
        return wrap(parts) if parts else "0 " + names[0]

    def wrap(parts):
        lines, cur = [], ""
        for p in parts:
            if len(cur) + len(p) > 240:
                lines.append(cur)
                cur = " "
            cur += " " + p
        lines.append(cur)
        return "\n".join(lines).lstrip()

    fh.write("\\ sequence-form Dec-POMDP program\n")
    fh.write("Maximize\n")
    obj = terms(np.flatnonzero(problem.c), problem.c[problem.c != 0])
    if problem.offset:
        obj += f" + {_num(problem.offset)} constant"
    fh.write(f" obj: {obj}\n")
    fh.write("Subject To\n")
    A = problem.A.tocsr()
    op = {"=": "=", "<": "<=", ">": ">="}
    for i in range(problem.n_rows):
        sl = slice(A.indptr[i], A.indptr[i + 1])
        fh.write(f" {rnames[i]}: {terms(A.indices[sl], A.data[sl])} {op[problem.sense[i]]} {_num(problem.rhs[i])}\n")
    fh.write("Bounds\n")
    for j in range(problem.n_vars):
        if problem.binary[j]:
            continue
        hi = "+inf" if not np.isfinite(problem.ub[j]) else _num(problem.ub[j])
        fh.write(f" {_num(problem.lb[j])} <= {names[j]} <= {hi}\n")
    if problem.offset:
        fh.write(" constant = 1\n")
    if problem.binary.any():
        fh.write("Binaries\n")
        for j in np.flatnonzero(problem.binary):
            fh.write(f" {names[j]}\n")
    fh.write("End\n")
