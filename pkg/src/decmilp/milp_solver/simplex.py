"""Bounded-variable revised simplex.

The engine works on ``min c x  s.t.  A x = b,  lb <= x <= ub`` where the
columns are the structural variables, one slack per inequality row and one
artificial per row.  The basis is refactorized periodically and updated
by eta transformations in between: as an explicit dense inverse for small
bases, or as a sparse LU factorization followed by a list of eta vectors
for large ones.

Cold solves run the two-phase primal simplex with Dantzig pricing.  A run
of degenerate pivots first triggers a small random outward shift of the
basic variables' bounds, which is undone at the end of the solve (the dual simplex
then removes the leftover infeasibility); if the stall persists the
pricing falls back to Bland's rule.  Re-solves after bound changes run the
dual simplex from the previous basis and finish with a primal clean-up
pass.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .problem import MilpProblem

log = logging.getLogger(__name__)

FEAS_TOL = 1e-6
PIVOT_TOL = 1e-9
DUAL_TOL = 1e-9
PERTURB = 1e-6

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

AT_LOWER, AT_UPPER, AT_ZERO, BASIC = 0, 1, 2, 3


class NumericalError(RuntimeError):
    """The simplex engine could not make progress (cycling or breakdown)."""


@dataclass
class LpSolution:
    status: str
    objective: float
    x: np.ndarray | None
    iterations: int = 0
    duals: np.ndarray | None = None


@dataclass(frozen=True)
class Basis:
    """Snapshot of a simplex basis for warm starts."""

    basic: np.ndarray
    status: np.ndarray


class DenseInverse:
    """Explicit basis inverse updated in place; cheap for small bases."""

    def __init__(self, B: sp.csc_matrix):
        try:
            self.inv = np.linalg.inv(B.toarray())
        except np.linalg.LinAlgError:
            raise NumericalError("singular basis matrix") from None

    def ftran_column(self, rows, vals):
        return self.inv[:, rows] @ vals

    def ftran(self, v):
        return self.inv @ v

    def btran(self, c):
        return c @ self.inv

    def row(self, r):
        return self.inv[r]

    def update(self, r, alpha):
        row = self.inv[r] / alpha[r]
        self.inv -= np.outer(alpha, row)
        self.inv[r] = row


class LuEta:
    """Sparse LU of the last refactorized basis plus one eta vector per pivot."""

    def __init__(self, B: sp.csc_matrix):
        try:
            self.lu = spla.splu(B, permc_spec="COLAMD")
        except RuntimeError:
            raise NumericalError("singular basis matrix") from None
        self.m = B.shape[0]
        self.etas: list[tuple[int, np.ndarray]] = []

    def ftran(self, v):
        v = self.lu.solve(np.asarray(v, dtype=float))
        for r, alpha in self.etas:
            vr = v[r] / alpha[r]
            if vr != 0.0:
                v -= vr * alpha
            v[r] = vr
        return v

    def ftran_column(self, rows, vals):
        v = np.zeros(self.m)
        v[rows] = vals
        return self.ftran(v)

    def btran(self, c):
        c = np.array(c, dtype=float)
        for r, alpha in reversed(self.etas):
            c[r] = (c[r] - (c @ alpha - c[r] * alpha[r])) / alpha[r]
        return self.lu.solve(c, trans="T")

    def row(self, r):
        e = np.zeros(self.m)
        e[r] = 1.0
        return self.btran(e)

    def update(self, r, alpha):
        self.etas.append((r, alpha.copy()))


DENSE_LIMIT = 800


class SimplexEngine:
    """Simplex state for one constraint matrix; bounds may be changed between solves."""

    def __init__(self, problem: MilpProblem, refactor_every: int = 100, bland_after: int = 50,
                 max_iter: int | None = None, factorization: str = "auto"):
        A = sp.csr_matrix(problem.A, dtype=float)
        m, n = A.shape
        ineq = np.flatnonzero(problem.sense != "=")
        sign = np.where(problem.sense[ineq] == "<", 1.0, -1.0)
        slack = sp.csc_matrix((sign, (ineq, np.arange(len(ineq)))), shape=(m, len(ineq)))
        art = sp.identity(m, format="csc")
        self.A = sp.hstack([A.tocsc(), slack, art], format="csc")
        self.A.sort_indices()
        self.AT = self.A.T.tocsr()
        self.m = m
        self.n_struct = n
        self.n_slack = len(ineq)
        self.first_art = n + len(ineq)
        self.n_total = self.first_art + m
        self.b = np.asarray(problem.rhs, dtype=float).copy()
        self.cost = np.zeros(self.n_total)
        self.cost[:n] = -np.asarray(problem.c, dtype=float)  # maximize -> minimize
        self.offset = problem.offset
        self.lb = np.concatenate([problem.lb, np.zeros(len(ineq)), np.zeros(m)]).astype(float)
        self.ub = np.concatenate([problem.ub, np.full(len(ineq), np.inf), np.zeros(m)]).astype(float)
        self.refactor_every = refactor_every
        self.bland_after = bland_after
        self.max_iter = max_iter or 50 * (m + self.n_total) + 1000
        self.iterations = 0
        self._iter_cap = self.max_iter
        self.basic: np.ndarray | None = None
        self.status = np.full(self.n_total, AT_LOWER, dtype=np.int8)
        self.x = np.zeros(self.n_total)
        self.factor: DenseInverse | LuEta | None = None
        if factorization == "auto":
            factorization = "dense" if m <= DENSE_LIMIT else "lu"
        try:
            self._factor_class = {"dense": DenseInverse, "lu": LuEta}[factorization]
        except KeyError:
            raise ValueError(f"unknown factorization {factorization!r}") from None
        self._since_refactor = 0
        self._rng = np.random.default_rng(0)
        self._shifted: tuple[np.ndarray, np.ndarray] | None = None
        self._may_shift = True

    # -- basis bookkeeping -------------------------------------------------

    def _column(self, j):
        start, stop = self.A.indptr[j], self.A.indptr[j + 1]
        return self.A.indices[start:stop], self.A.data[start:stop]

    def _ftran(self, j):
        return self.factor.ftran_column(*self._column(j))

    def _refactor(self):
        self.factor = self._factor_class(self.A[:, self.basic].tocsc())
        self._since_refactor = 0
        self._recompute_x()

    def _recompute_x(self):
        xn = self.x.copy()
        xn[self.basic] = 0.0
        self.x[self.basic] = self.factor.ftran(self.b - self.A @ xn)

    def _nonbasic_value(self, j):
        lo, hi = self.lb[j], self.ub[j]
        if np.isfinite(lo):
            return AT_LOWER, lo
        if np.isfinite(hi):
            return AT_UPPER, hi
        return AT_ZERO, 0.0

    def _pivot(self, r, q, alpha):
        """Replace basic variable in row r by column q (alpha = B^-1 a_q)."""
        self.factor.update(r, alpha)
        self.basic[r] = q
        self.status[q] = BASIC
        self._since_refactor += 1
        if self._since_refactor >= self.refactor_every:
            self._refactor()

    def snapshot(self) -> Basis:
        return Basis(self.basic.copy(), self.status.copy())

    def load(self, basis: Basis):
        same = (self.basic is not None and self.factor is not None
                and np.array_equal(self.basic, basis.basic))
        self.basic = basis.basic.copy()
        self.status = basis.status.copy()
        self._reset_nonbasic()
        if same:
            # the current inverse already belongs to this basis
            self._recompute_x()
        else:
            self._refactor()

    def _reset_nonbasic(self):
        """Put every nonbasic variable at the bound its status names."""
        st = self.status
        lo_ok = np.isfinite(self.lb)
        hi_ok = np.isfinite(self.ub)
        # a status pointing at an infinite bound falls back to the other bound or zero
        bad = ((st == AT_LOWER) & ~lo_ok) | ((st == AT_UPPER) & ~hi_ok)
        st[bad & lo_ok] = AT_LOWER
        st[bad & ~lo_ok & hi_ok] = AT_UPPER
        st[bad & ~lo_ok & ~hi_ok] = AT_ZERO
        x = self.x
        x[st == AT_LOWER] = self.lb[st == AT_LOWER]
        x[st == AT_UPPER] = self.ub[st == AT_UPPER]
        x[st == AT_ZERO] = 0.0

    def _bound_value(self, j):
        s = self.status[j]
        if s == AT_LOWER and np.isfinite(self.lb[j]):
            return self.lb[j]
        if s == AT_UPPER and np.isfinite(self.ub[j]):
            return self.ub[j]
        self.status[j], v = self._nonbasic_value(j)
        return v

    def set_bounds(self, j: int, lb: float, ub: float):
        """Change bounds of a structural variable; nonbasic values follow."""
        self.lb[j], self.ub[j] = lb, ub
        if self.basic is not None and self.status[j] != BASIC:
            if self.status[j] == AT_UPPER and not np.isfinite(ub):
                self.status[j] = AT_LOWER
            self.x[j] = self._bound_value(j)

    # -- solves ------------------------------------------------------------

    def solve(self, warm: Basis | None = None) -> LpSolution:
        start = self.iterations
        self._iter_cap = start + self.max_iter
        self._may_shift = True
        if warm is None:
            status = self._cold()
        else:
            self.load(warm)
            status = self._dual()
            if status == "fallback":
                status = self._cold()
        if self._shifted is not None:
            status = self._unshift(status)
        return self._result(status, self.iterations - start)

    def _shift_bounds(self) -> bool:
        """Move the bounds of basic columns outward; False if none is left to shift.

        Only basic, non-fixed, non-artificial columns with finite bounds that
        have not been shifted yet are touched.  Nonbasic variables keep their
        values, so the current point stays put and the degenerate basic
        variables end up strictly inside their bounds.  The original bounds
        are kept for the final restore.
        """
        n = self.first_art
        lb, ub = self.lb[:n], self.ub[:n]
        if self._shifted is None:
            self._shifted = (lb.copy(), ub.copy())
            self._moved = np.zeros(n, dtype=bool)
        basic = self.basic[self.basic < n]
        basic = basic[(ub[basic] > lb[basic]) & ~self._moved[basic]]
        if basic.size == 0:
            return False
        self._moved[basic] = True
        for bound, sign in ((lb, -1.0), (ub, 1.0)):
            j = basic[np.isfinite(bound[basic])]
            bound[j] += sign * PERTURB * (1.0 + np.abs(bound[j])) * self._rng.uniform(0.5, 1.0, j.size)
        log.debug("shifted %d bounds after a degenerate stall (iteration %d)", basic.size, self.iterations)
        return True

    def _restore_bounds(self):
        n = self.first_art
        self.lb[:n], self.ub[:n] = self._shifted
        self._shifted = None
        self._reset_nonbasic()
        self._recompute_x()

    def _unshift(self, status: str) -> str:
        self._restore_bounds()
        self._may_shift = False
        if status != OPTIMAL:
            return status
        status = self._dual()
        if status == "fallback":
            status = self._cold()
        return status

    def _result(self, status, iters):
        if status != OPTIMAL:
            return LpSolution(status, np.nan, None, iters)
        x = self.x[:self.n_struct].copy()
        y = self.factor.btran(self.cost[self.basic])
        return LpSolution(OPTIMAL, -float(self.cost[:self.n_struct] @ x) + self.offset, x, iters, -y)

    def _cold(self) -> str:
        n_art_start = self.first_art
        for j in range(n_art_start):
            self.status[j], self.x[j] = self._nonbasic_value(j)
        resid = self.b - self.A[:, :n_art_start] @ self.x[:n_art_start]
        # Artificial i carries |resid_i| with column sign(resid_i) e_i.
        signs = np.where(resid < 0, -1.0, 1.0)
        art_ptr = self.A.indptr[n_art_start:]
        self.A.data[art_ptr[:-1]] = signs
        self.AT = self.A.T.tocsr()
        self.basic = np.arange(n_art_start, self.n_total)
        self.status[self.basic] = BASIC
        self.x[self.basic] = np.abs(resid)
        self.factor = self._factor_class(sp.diags(signs, format="csc"))
        self._since_refactor = 0

        saved_cost = self.cost
        phase1 = np.zeros(self.n_total)
        phase1[n_art_start:] = 1.0
        self.ub[n_art_start:] = np.inf
        self.cost = phase1
        allow_shift = self._may_shift
        try:
            st = self._primal()
            if st == OPTIMAL and self._shifted is not None:
                # judge feasibility on the true bounds, resuming if needed
                self._restore_bounds()
                if self.x[n_art_start:].sum() > FEAS_TOL:
                    self._may_shift = False
                    st = self._primal()
                self._may_shift = allow_shift
        finally:
            self.cost = saved_cost
            self.ub[n_art_start:] = 0.0
        if st != OPTIMAL:
            raise NumericalError(f"phase 1 ended with status {st}")
        infeas = self.x[n_art_start:].sum()
        if infeas > FEAS_TOL:
            return INFEASIBLE
        # Artificials are now fixed at zero; nonbasic ones stay at their bound.
        for j in range(n_art_start, self.n_total):
            if self.status[j] != BASIC:
                self.status[j] = AT_LOWER
                self.x[j] = 0.0
        return self._primal()

    def _reduced_costs(self):
        y = self.factor.btran(self.cost[self.basic])
        d = self.cost - self.AT @ y
        d[self.basic] = 0.0
        return d

    def _primal(self) -> str:
        degenerate = 0
        while True:
            if self.iterations >= self._iter_cap:
                raise NumericalError(f"primal simplex exceeded {self.max_iter} iterations")
            d = self._reduced_costs()
            st = self.status
            movable = self.ub > self.lb
            inc = ((st == AT_LOWER) | (st == AT_ZERO)) & (d < -DUAL_TOL) & movable
            dec = ((st == AT_UPPER) | (st == AT_ZERO)) & (d > DUAL_TOL) & movable
            cand = inc | dec
            if not cand.any():
                return OPTIMAL
            if degenerate >= self.bland_after and self._may_shift:
                self._may_shift = self._shift_bounds()
                if self._may_shift:
                    degenerate = 0
                    continue
            bland = degenerate >= self.bland_after
            if bland:
                q = int(np.flatnonzero(cand)[0])
            else:
                score = np.where(cand, np.abs(d), -1.0)
                q = int(np.argmax(score))
            direction = 1.0 if d[q] < 0 else -1.0
            alpha = self._ftran(q)
            g = direction * alpha
            theta, r, to_upper = self._primal_ratio(g, bland)
            flip = self.ub[q] - self.lb[q]
            if r is None and not np.isfinite(flip):
                return UNBOUNDED
            self.iterations += 1
            if r is None or flip <= theta:
                # bound flip, basis unchanged
                self.x[self.basic] -= flip * g
                self.status[q] = AT_UPPER if direction > 0 else AT_LOWER
                self.x[q] = self.ub[q] if direction > 0 else self.lb[q]
                degenerate = 0
                continue
            degenerate = degenerate + 1 if theta <= 1e-12 else 0
            self.x[self.basic] -= theta * g
            self.x[q] += direction * theta
            leave = self.basic[r]
            self.status[leave] = AT_UPPER if to_upper else AT_LOWER
            self.x[leave] = self.ub[leave] if to_upper else self.lb[leave]
            self._pivot(r, q, alpha)

    def _primal_ratio(self, g, bland):
        """Harris two-pass ratio test; x_B moves by -theta * g."""
        xb = self.x[self.basic]
        lo = self.lb[self.basic]
        hi = self.ub[self.basic]
        down = g > PIVOT_TOL
        up = g < -PIVOT_TOL
        with np.errstate(divide="ignore", invalid="ignore"):
            t_down = np.where(down, (xb - lo) / g, np.inf)
            t_up = np.where(up, (hi - xb) / -g, np.inf)
        ratios = np.minimum(t_down, t_up)
        if not np.isfinite(ratios).any():
            return np.inf, None, False
        if bland:
            theta = max(ratios.min(), 0.0)
            ties = np.flatnonzero(ratios <= theta + 1e-12)
            r = int(ties[np.argmin(self.basic[ties])])
        else:
            with np.errstate(divide="ignore", invalid="ignore"):
                relaxed = np.minimum(np.where(down, (xb - lo + FEAS_TOL) / g, np.inf),
                                     np.where(up, (hi - xb + FEAS_TOL) / -g, np.inf))
            cap = relaxed.min()
            ok = np.flatnonzero(ratios <= cap)
            r = int(ok[np.argmax(np.abs(g[ok]))])
            theta = max(ratios[r], 0.0)
        to_upper = bool(up[r])
        return theta, r, to_upper

    def _dual(self) -> str:
        """Dual simplex from a loaded basis, then primal clean-up."""
        d = self._reduced_costs()
        st = self.status
        movable = self.ub > self.lb
        bad_lower = (st == AT_LOWER) & (d < -DUAL_TOL) & movable
        bad_upper = (st == AT_UPPER) & (d > DUAL_TOL) & movable
        bad_zero = (st == AT_ZERO) & (np.abs(d) > DUAL_TOL)
        for j in np.flatnonzero(bad_lower):
            if not np.isfinite(self.ub[j]):
                return "fallback"
            st[j], self.x[j] = AT_UPPER, self.ub[j]
        for j in np.flatnonzero(bad_upper):
            if not np.isfinite(self.lb[j]):
                return "fallback"
            st[j], self.x[j] = AT_LOWER, self.lb[j]
        if bad_zero.any():
            return "fallback"
        if bad_lower.any() or bad_upper.any():
            self._recompute_x()

        while True:
            if self.iterations >= self._iter_cap:
                raise NumericalError(f"dual simplex exceeded {self.max_iter} iterations")
            xb = self.x[self.basic]
            lo = self.lb[self.basic]
            hi = self.ub[self.basic]
            below = lo - xb
            above = xb - hi
            infeas = np.maximum(below, above)
            r = int(np.argmax(infeas))
            if infeas[r] <= FEAS_TOL:
                break
            leaving_low = below[r] > above[r]
            rho = self.factor.row(r)
            arow = self.AT @ rho  # row r of B^-1 A
            d = self._reduced_costs()
            st = self.status
            movable = (self.ub > self.lb) & (st != BASIC)
            if leaving_low:
                cand = movable & (((st == AT_LOWER) & (arow < -PIVOT_TOL)) | ((st == AT_UPPER) & (arow > PIVOT_TOL)))
            else:
                cand = movable & (((st == AT_LOWER) & (arow > PIVOT_TOL)) | ((st == AT_UPPER) & (arow < -PIVOT_TOL)))
            cand |= movable & (st == AT_ZERO) & (np.abs(arow) > PIVOT_TOL)
            idx = np.flatnonzero(cand)
            if idx.size == 0:
                return INFEASIBLE
            ratios = np.abs(d[idx]) / np.abs(arow[idx])
            best = ratios.min()
            ties = idx[ratios <= best + 1e-12]
            q = int(ties[np.argmax(np.abs(arow[ties]))])
            alpha = self._ftran(q)
            target = lo[r] if leaving_low else hi[r]
            theta = (xb[r] - target) / alpha[r]
            self.iterations += 1
            self.x[self.basic] -= theta * alpha
            self.x[q] += theta
            leave = self.basic[r]
            self.status[leave] = AT_LOWER if leaving_low else AT_UPPER
            self.x[leave] = target
            self._pivot(r, q, alpha)
        return self._primal()


def solve_lp(problem: MilpProblem, **options) -> LpSolution:
    """Optimal solution of the LP relaxation (integrality dropped)."""
    if problem.n_vars < 1:
        raise ValueError("problem has no variables")
    return SimplexEngine(problem, **options).solve()
