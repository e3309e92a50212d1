"""Dec-POMDP data model, instance-file parser and belief update.

All indices are zero-based.  Joint actions and joint observations are flat
mixed-radix indices with agent 0 as the most significant digit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PROB_TOL = 1e-9


class ModelError(ValueError):
    """Raised for malformed instance files or inconsistent models."""


class ModelSyntaxError(ModelError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


def encode_index(digits, radices) -> int:
    """Mixed-radix encoding, first digit most significant."""
    flat = 0
    for d, r in zip(digits, radices):
        if not 0 <= d < r:
            raise ValueError(f"digit {d} out of range for radix {r}")
        flat = flat * r + d
    return flat


def decode_index(flat: int, radices) -> tuple[int, ...]:
    if not 0 <= flat < math.prod(radices):
        raise ValueError(f"index {flat} out of range for radices {tuple(radices)}")
    digits = []
    for r in reversed(radices):
        flat, d = divmod(flat, r)
        digits.append(d)
    return tuple(reversed(digits))


@dataclass(frozen=True, eq=False)
class DecPomdp:
    """A finite-horizon Dec-POMDP.

    ``T[a, s, s2]`` is P(s2 | s, a), ``Z[a, s2, o]`` is P(o | a, s2) and
    ``R[a, s]`` the reward of joint action ``a`` in state ``s``.
    """

    n_agents: int
    n_states: int
    n_actions: tuple[int, ...]
    n_observations: tuple[int, ...]
    T: np.ndarray
    Z: np.ndarray
    R: np.ndarray
    b0: np.ndarray
    name: str = ""
    action_names: tuple[tuple[str, ...], ...] | None = field(default=None, repr=False)
    observation_names: tuple[tuple[str, ...], ...] | None = field(default=None, repr=False)

    def __post_init__(self):
        for arr in (self.T, self.Z, self.R, self.b0):
            arr.setflags(write=False)

    @property
    def n_joint_actions(self) -> int:
        return math.prod(self.n_actions)

    @property
    def n_joint_observations(self) -> int:
        return math.prod(self.n_observations)

    def joint_action(self, actions) -> int:
        return encode_index(actions, self.n_actions)

    def split_action(self, ja: int) -> tuple[int, ...]:
        return decode_index(ja, self.n_actions)

    def joint_observation(self, observations) -> int:
        return encode_index(observations, self.n_observations)

    def split_observation(self, jo: int) -> tuple[int, ...]:
        return decode_index(jo, self.n_observations)

    def action_label(self, agent: int, a: int) -> str:
        if self.action_names:
            return self.action_names[agent][a]
        return f"a{a}"

    def observation_label(self, agent: int, o: int) -> str:
        if self.observation_names:
            return self.observation_names[agent][o]
        return f"o{o}"


@dataclass(frozen=True)
class Violation:
    kind: str
    location: tuple
    message: str

    def __str__(self):
        return f"{self.kind} at {self.location}: {self.message}"


def validate_model(m: DecPomdp) -> list[Violation]:
    """Return every violated model invariant (empty list means valid)."""
    out: list[Violation] = []
    nA, nO, S = m.n_joint_actions, m.n_joint_observations, m.n_states
    expected = {"T": (nA, S, S), "Z": (nA, S, nO), "R": (nA, S), "b0": (S,)}
    for key, shape in expected.items():
        arr = getattr(m, key)
        if arr.shape != shape:
            out.append(Violation("shape", (key,), f"expected {shape}, got {arr.shape}"))
    if out:
        return out

    for a in range(nA):
        for s in range(S):
            row = m.T[a, s]
            for s2 in np.flatnonzero((row < 0) | (row > 1)):
                out.append(Violation("T range", (a, s, int(s2)), f"probability {row[s2]} outside [0,1]"))
            total = row.sum()
            if abs(total - 1.0) > PROB_TOL:
                out.append(Violation("T row sum", (a, s), f"row sum {total:.12g} != 1"))
    for a in range(nA):
        for s2 in range(S):
            row = m.Z[a, s2]
            for o in np.flatnonzero((row < 0) | (row > 1)):
                out.append(Violation("Z range", (a, s2, int(o)), f"probability {row[o]} outside [0,1]"))
            total = row.sum()
            if abs(total - 1.0) > PROB_TOL:
                out.append(Violation("Z row sum", (a, s2), f"row sum {total:.12g} != 1"))
    for s in np.flatnonzero((m.b0 < 0) | (m.b0 > 1)):
        out.append(Violation("belief range", (int(s),), f"probability {m.b0[s]} outside [0,1]"))
    total = m.b0.sum()
    if abs(total - 1.0) > PROB_TOL:
        out.append(Violation("belief sum", (), f"belief sum {total:.12g} != 1"))
    if not np.all(np.isfinite(m.R)):
        out.append(Violation("R finite", (), "reward table contains non-finite values"))
    return out


_HEADER_KEYS = ("agents", "states", "actions", "observations", "start")


def _tokens(text: str):
    """Yield (line_no, [(col, token), ...]) for non-empty lines."""
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        toks = []
        col = 0
        for part in line.split():
            col = line.index(part, col)
            toks.append((col + 1, part))
            col += len(part)
        if toks:
            yield line_no, toks


def parse_model(text: str, name: str = "", validate: bool = True) -> DecPomdp:
    """Parse an instance file into a :class:`DecPomdp`.

    Raises :class:`ModelSyntaxError` for grammar problems and
    :class:`ModelError` for duplicates, range errors and (when ``validate``)
    probability-table violations.
    """
    header: dict[str, list[float]] = {}
    entries: dict[str, dict[tuple[int, ...], tuple[float, int]]] = {"T": {}, "O": {}, "R": {}}
    action_names = observation_names = None

    def number(tok, line, kind=float):
        col, s = tok
        try:
            return kind(s)
        except ValueError:
            raise ModelSyntaxError(f"expected {'integer' if kind is int else 'number'}, got {s!r}", line, col) from None

    for line_no, toks in _tokens(text):
        col, head = toks[0]
        if not head.endswith(":"):
            raise ModelSyntaxError(f"expected a keyword followed by ':', got {head!r}", line_no, col)
        key = head[:-1]
        args = toks[1:]
        if key in _HEADER_KEYS:
            if key in header:
                raise ModelSyntaxError(f"duplicate '{key}' declaration", line_no, col)
            if not args:
                raise ModelSyntaxError(f"'{key}' needs at least one value", line_no, col)
            kind = float if key == "start" else int
            header[key] = [number(t, line_no, kind) for t in args]
        elif key in ("action-names", "observation-names"):
            # Optional labels: one '|'-separated group per agent.
            groups = " ".join(t for _, t in args).split("|")
            names = tuple(tuple(g.split()) for g in groups)
            if key == "action-names":
                action_names = names
            else:
                observation_names = names
        elif key in entries:
            want = 4 if key in ("T", "O") else 3
            if len(args) != want:
                raise ModelSyntaxError(f"'{key}:' takes {want} values, got {len(args)}", line_no, col)
            idx = tuple(number(t, line_no, int) for t in args[:-1])
            val = number(args[-1], line_no)
            if idx in entries[key]:
                prev_line = entries[key][idx][1]
                raise ModelError(f"line {line_no}: duplicate {key} entry for {idx} (first given on line {prev_line})")
            entries[key][idx] = (val, line_no)
        else:
            raise ModelSyntaxError(f"unknown keyword {key!r}", line_no, col)

    for key in _HEADER_KEYS:
        if key not in header:
            raise ModelError(f"missing '{key}:' declaration")
    if len(header["agents"]) != 1 or len(header["states"]) != 1:
        raise ModelError("'agents:' and 'states:' take exactly one integer")
    n = header["agents"][0]
    S = header["states"][0]
    A = tuple(header["actions"])
    O = tuple(header["observations"])
    if n < 1 or S < 1:
        raise ModelError("agent and state counts must be positive")
    if len(A) != n or len(O) != n:
        raise ModelError(f"dimension mismatch: {n} agents but {len(A)} action counts and {len(O)} observation counts")
    if min(A) < 1 or min(O) < 1:
        raise ModelError("every agent needs at least one action and one observation")
    if len(header["start"]) != S:
        raise ModelError(f"dimension mismatch: start belief has {len(header['start'])} entries, expected {S}")
    nA, nO = math.prod(A), math.prod(O)

    T = np.zeros((nA, S, S))
    Z = np.zeros((nA, S, nO))
    R = np.zeros((nA, S))
    limits = {"T": (nA, S, S), "O": (nA, S, nO), "R": (nA, S)}
    for key, table in entries.items():
        target = {"T": T, "O": Z, "R": R}[key]
        for idx, (val, line_no) in table.items():
            for pos, (i, lim) in enumerate(zip(idx, limits[key])):
                if not 0 <= i < lim:
                    raise ModelError(f"line {line_no}: {key} index {i} at position {pos} out of range [0, {lim})")
            target[idx] = val

    for names, counts, what in ((action_names, A, "action"), (observation_names, O, "observation")):
        if names is not None and tuple(len(g) for g in names) != counts:
            raise ModelError(f"{what}-names do not match the declared {what} counts")

    m = DecPomdp(n, S, A, O, T, Z, R, np.array(header["start"], dtype=float), name=name,
                 action_names=action_names, observation_names=observation_names)
    if validate:
        problems = validate_model(m)
        if problems:
            raise ModelError("invalid model: " + "; ".join(str(v) for v in problems))
    return m


def load_model(path, validate: bool = True) -> DecPomdp:
    path = Path(path)
    return parse_model(path.read_text(encoding="utf-8"), name=path.stem, validate=validate)


def _num(x) -> str:
    return format(float(x), ".15g")


def format_model(m: DecPomdp) -> str:
    """Render a model in the instance-file grammar (nonzero entries only)."""
    lines = [
        f"agents: {m.n_agents}",
        f"states: {m.n_states}",
        "actions: " + " ".join(map(str, m.n_actions)),
        "observations: " + " ".join(map(str, m.n_observations)),
        "start: " + " ".join(_num(p) for p in m.b0),
    ]
    if m.action_names:
        lines.append("action-names: " + " | ".join(" ".join(g) for g in m.action_names))
    if m.observation_names:
        lines.append("observation-names: " + " | ".join(" ".join(g) for g in m.observation_names))
    for a, s, s2 in zip(*np.nonzero(m.T)):
        lines.append(f"T: {a} {s} {s2} {_num(m.T[a, s, s2])}")
    for a, s2, o in zip(*np.nonzero(m.Z)):
        lines.append(f"O: {a} {s2} {o} {_num(m.Z[a, s2, o])}")
    for a, s in zip(*np.nonzero(m.R)):
        lines.append(f"R: {a} {s} {_num(m.R[a, s])}")
    return "\n".join(lines) + "\n"


def belief_update(m: DecPomdp, b: np.ndarray, a: int, o: int) -> tuple[float, np.ndarray | None]:
    """Probability of joint observation ``o`` after joint action ``a`` from
    belief ``b``, and the posterior belief.

    The posterior is ``None`` when the observation has probability zero; the
    branch is then unreachable.
    """
    unnormalized = (b @ m.T[a]) * m.Z[a, :, o]
    prob = float(unnormalized.sum())
    if prob <= 0.0:
        return 0.0, None
    return prob, unnormalized / prob
