"""Regenerate the bundled benchmark instance files.

    python tools/make_instances.py [outdir]
"""

import sys
from itertools import product
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))
from decmilp.model import DecPomdp, format_model  # noqa: E402


def matiger() -> DecPomdp:
    # states: 0 tiger-left, 1 tiger-right
    # actions: 0 listen, 1 open-left, 2 open-right
    # observations: 0 hear-left, 1 hear-right
    LISTEN, OPEN_LEFT, OPEN_RIGHT = range(3)
    acc = 0.85
    nA, nO, S = 9, 4, 2
    T = np.zeros((nA, S, S))
    Z = np.zeros((nA, S, nO))
    R = np.zeros((nA, S))
    # Reward for (a1, a2) with the tiger behind the left door; the
    # tiger-right table is the mirror image.
    left = {
        (LISTEN, LISTEN): -2, (LISTEN, OPEN_LEFT): -101, (LISTEN, OPEN_RIGHT): 9,
        (OPEN_LEFT, LISTEN): -101, (OPEN_LEFT, OPEN_LEFT): -50, (OPEN_LEFT, OPEN_RIGHT): -100,
        (OPEN_RIGHT, LISTEN): 9, (OPEN_RIGHT, OPEN_LEFT): -100, (OPEN_RIGHT, OPEN_RIGHT): 20,
    }
    mirror = {LISTEN: LISTEN, OPEN_LEFT: OPEN_RIGHT, OPEN_RIGHT: OPEN_LEFT}
    for a1, a2 in product(range(3), repeat=2):
        ja = a1 * 3 + a2
        R[ja, 0] = left[a1, a2]
        R[ja, 1] = left[mirror[a1], mirror[a2]]
        if (a1, a2) == (LISTEN, LISTEN):
            T[ja] = np.eye(S)
            for s2 in range(S):
                for o1, o2 in product(range(2), repeat=2):
                    p1 = acc if o1 == s2 else 1 - acc
                    p2 = acc if o2 == s2 else 1 - acc
                    Z[ja, s2, o1 * 2 + o2] = p1 * p2
        else:
            T[ja] = 0.5
            Z[ja] = 0.25
    return DecPomdp(2, S, (3, 3), (2, 2), T, Z, R, np.array([0.5, 0.5]), name="matiger",
                    action_names=(("listen", "open-left", "open-right"),) * 2,
                    observation_names=(("hear-left", "hear-right"),) * 2)


def mabc() -> DecPomdp:
    # state = buffer1 * 2 + buffer2, buffer 0 empty / 1 full; both start full
    # actions: 0 send, 1 wait; observations: 0 collision, 1 no-collision
    SEND = 0
    fill = (0.9, 0.1)
    nA, nO, S = 4, 4, 4
    T = np.zeros((nA, S, S))
    Z = np.zeros((nA, S, nO))
    R = np.zeros((nA, S))
    for a1, a2 in product(range(2), repeat=2):
        ja = a1 * 2 + a2
        senders = [i for i, a in enumerate((a1, a2)) if a == SEND]
        collision = len(senders) > 1
        for s in range(S):
            buf = [s // 2, s % 2]
            if len(senders) == 1 and buf[senders[0]] == 1:
                R[ja, s] = 1.0
                buf[senders[0]] = 0
            # empty buffers refill independently
            for nb in product(range(2), repeat=2):
                p = 1.0
                for i in range(2):
                    if buf[i] == 1:
                        p *= 1.0 if nb[i] == 1 else 0.0
                    else:
                        p *= fill[i] if nb[i] == 1 else 1 - fill[i]
                T[ja, s, nb[0] * 2 + nb[1]] += p
        # both agents observe the collision flag exactly
        truth = 0 if collision else 1
        Z[ja, :, truth * 2 + truth] = 1.0
    b0 = np.zeros(S)
    b0[3] = 1.0
    return DecPomdp(2, S, (2, 2), (2, 2), T, Z, R, b0, name="mabc",
                    action_names=(("send", "wait"),) * 2,
                    observation_names=(("collision", "no-collision"),) * 2)


HEADERS = {
    "matiger": """\
# Multi-agent tiger (Dec-Tiger), Nair et al. 2003 as used throughout the
# Dec-POMDP literature.
# states: 0 tiger-left, 1 tiger-right
# actions (each agent): 0 listen, 1 open-left, 2 open-right
# observations (each agent): 0 hear-left, 1 hear-right
# Listening keeps the state and each agent independently hears the correct
# side with probability 0.85; any door opening resets the tiger uniformly and
# yields uniform observations.
""",
    "mabc": """\
# Multi-access broadcast channel, Hansen, Bernstein & Zilberstein 2004.
# state = 2*buffer1 + buffer2 (0 empty, 1 full); both buffers start full.
# actions (each agent): 0 send, 1 wait
# observations (each agent): 0 collision, 1 no-collision
# Reward 1 when exactly one agent sends from a full buffer (its buffer is
# emptied); empty buffers refill with probability 0.9 (agent 1) and 0.1
# (agent 2) in the same step.  Each agent observes, without noise, whether
# both agents sent (a collision).
""",
}


def main(outdir):
    outdir = Path(outdir)
    for make in (matiger, mabc):
        m = make()
        (outdir / f"{m.name}.dpomdp").write_text(HEADERS[m.name] + format_model(m), encoding="utf-8")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else Path(__file__).resolve().parents[1] / "src/decmilp/instances")
