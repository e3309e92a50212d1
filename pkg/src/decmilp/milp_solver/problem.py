"""Generic mixed 0/1 linear program container."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

CONTINUOUS = "continuous"
BINARY = "binary"


@dataclass(frozen=True, eq=False)
class MilpProblem:
    """maximize ``c @ x + offset`` s.t. ``A x (sense) rhs``, ``lb <= x <= ub``.

    ``sense`` holds one of ``"="``, ``"<"`` (at most) or ``">"`` (at least)
    per row.  Binary variables must have bounds within [0, 1].
    """

    c: np.ndarray
    A: sp.csr_matrix
    sense: np.ndarray
    rhs: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    binary: np.ndarray
    var_names: list[str] | None = None
    row_names: list[str] | None = None
    offset: float = 0.0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.c)
        if self.A.shape[1] != n:
            raise ValueError(f"constraint matrix has {self.A.shape[1]} columns for {n} variables")
        m = self.A.shape[0]
        if len(self.sense) != m or len(self.rhs) != m:
            raise ValueError("sense/rhs length does not match the row count")
        if not set(np.unique(self.sense)) <= {"=", "<", ">"}:
            raise ValueError("row sense must be one of '=', '<', '>'")
        for name, arr in (("lb", self.lb), ("ub", self.ub), ("binary", self.binary)):
            if len(arr) != n:
                raise ValueError(f"{name} has wrong length")
        if np.any(self.lb > self.ub):
            raise ValueError("lower bound above upper bound")
        b = self.binary
        if np.any(self.lb[b] < 0) or np.any(self.ub[b] > 1):
            raise ValueError("binary variables must have bounds within [0, 1]")

    @property
    def n_vars(self) -> int:
        return len(self.c)

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    @property
    def n_binary(self) -> int:
        return int(np.count_nonzero(self.binary))

    def objective(self, x: np.ndarray) -> float:
        return float(self.c @ x) + self.offset

    def residuals(self, x: np.ndarray) -> np.ndarray:
        """Per-row constraint violation (0 when satisfied)."""
        ax = self.A @ x
        v = np.zeros(self.n_rows)
        eq = self.sense == "="
        le = self.sense == "<"
        ge = self.sense == ">"
        v[eq] = np.abs(ax[eq] - self.rhs[eq])
        v[le] = np.maximum(ax[le] - self.rhs[le], 0.0)
        v[ge] = np.maximum(self.rhs[ge] - ax[ge], 0.0)
        return v

    def is_feasible(self, x: np.ndarray, tol: float = 1e-6, integral: bool = True) -> bool:
        if np.any(x < self.lb - tol) or np.any(x > self.ub + tol):
            return False
        if self.n_rows and self.residuals(x).max() > tol:
            return False
        if integral and np.any(np.abs(x[self.binary] - np.round(x[self.binary])) > tol):
            return False
        return True

    def with_rows(self, rows: sp.spmatrix, sense, rhs, names=None) -> "MilpProblem":
        """Copy with extra constraint rows appended."""
        rows = sp.csr_matrix(rows)
        row_names = None
        if self.row_names is not None:
            row_names = list(self.row_names) + list(names or [f"r{self.n_rows + k}" for k in range(rows.shape[0])])
        return replace(
            self,
            A=sp.vstack([self.A, rows], format="csr"),
            sense=np.concatenate([self.sense, np.asarray(sense)]),
            rhs=np.concatenate([self.rhs, np.asarray(rhs, dtype=float)]),
            row_names=row_names,
        )

    def relaxed(self) -> "MilpProblem":
        return replace(self, binary=np.zeros(self.n_vars, dtype=bool))
