"""Balanced transportation problems solved with the transportation simplex.

The problem: move supplies s_i to demands d_j (equal totals) at unit costs
c_ij, minimizing total cost.  The solver keeps a spanning tree basis over
the bipartite supply / demand graph, prices nonbasic cells with the dual
variables (u_i + v_j vs c_ij), enters the cell with the most negative
reduced cost and leaves along the unique basis cycle.  The initial basis
comes from the northwest corner rule.

Degeneracy is handled by spreading a total perturbation of 1e-12 * sum(s)
over the supplies before solving; the reported flows are recomputed on the
final basis from the unperturbed marginals, so the perturbation never shows
up in the answer.  Optimality is certified by reduced costs all above
-1e-9 * max cost.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class TransportProblem:
    """Supplies, demands and a dense cost matrix with matching totals."""

    supplies: np.ndarray
    demands: np.ndarray
    costs: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.supplies, dtype=float)
        d = np.asarray(self.demands, dtype=float)
        c = np.asarray(self.costs, dtype=float)
        if s.ndim != 1 or d.ndim != 1:
            raise ValueError("supplies and demands must be 1d arrays")
        if c.shape != (s.size, d.size):
            raise ValueError(f"cost matrix shape {c.shape} does not match {s.size} supplies x {d.size} demands")
        if np.any(s < 0.0) or np.any(d < 0.0):
            raise ValueError("supplies and demands must be nonnegative")
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(d)) and np.all(np.isfinite(c))):
            raise ValueError("supplies, demands and costs must be finite")
        total_s, total_d = s.sum(), d.sum()
        if abs(total_s - total_d) > 1e-9 * max(total_s, total_d, 1e-300):
            raise ValueError(f"unbalanced problem: total supply {total_s} != total demand {total_d}")
        object.__setattr__(self, "supplies", s)
        object.__setattr__(self, "demands", d)
        object.__setattr__(self, "costs", c)

    @property
    def total(self) -> float:
        return float(self.supplies.sum())


@dataclass(frozen=True, eq=False)
class TransportPlan:
    """Sparse optimal flows: flows[t] units from rows[t] to cols[t]."""

    rows: np.ndarray
    cols: np.ndarray
    flows: np.ndarray
    objective: float
    pivots: int = 0


def _northwest_corner(s: np.ndarray, d: np.ndarray) -> list:
    """Initial basic cells by the northwest corner rule, m + k - 1 of them."""
    m, k = s.size, d.size
    left_s = s.copy()
    left_d = d.copy()
    cells = []
    i = j = 0
    while True:
        x = min(left_s[i], left_d[j])
        cells.append([i, j, x])
        left_s[i] -= x
        left_d[j] -= x
        if i == m - 1 and j == k - 1:
            break
        if left_s[i] <= left_d[j] and i < m - 1:
            i += 1
        else:
            j += 1
    return cells


def _tree_duals(m: int, k: int, adj: list, costs: np.ndarray) -> tuple:
    """Potentials with u[0] = 0, solved edge by edge over the basis tree.

    Traversal order does not matter: on a tree each node's potential is
    fixed by its unique path to the root, so any order gives the same
    values."""
    u = np.full(m, np.nan)
    v = np.full(k, np.nan)
    u[0] = 0.0
    stack = [0]
    while stack:
        node = stack.pop()
        if node < m:
            for other in adj[node]:
                j = other - m
                if np.isnan(v[j]):
                    v[j] = costs[node, j] - u[node]
                    stack.append(other)
        else:
            j = node - m
            for other in adj[node]:
                if np.isnan(u[other]):
                    u[other] = costs[other, j] - v[j]
                    stack.append(other)
    return u, v


def _tree_path(adj: list, start: int, goal: int) -> list:
    """Unique node path between two nodes of the basis tree.  The path is
    unique, so traversal order cannot change the result."""
    parent = {start: None}
    stack = [start]
    while stack:
        node = stack.pop()
        if node == goal:
            break
        for other in adj[node]:
            if other not in parent:
                parent[other] = node
                stack.append(other)
    path = [goal]
    while path[-1] != start:
        path.append(parent[path[-1]])
    path.reverse()
    return path


def _flows_from_marginals(m: int, k: int, adj: list, s: np.ndarray, d: np.ndarray) -> dict:
    """Unique tree flows matching the marginals, by leaf elimination."""
    deg = [len(a) for a in adj]
    residual = np.concatenate((s, -d))
    local = [set(a) for a in adj]
    flows: dict = {}
    queue = [n for n in range(m + k) if deg[n] == 1]
    while queue:
        node = queue.pop()
        if deg[node] != 1:
            continue
        other = next(iter(local[node]))
        if node < m:
            cell = (node, other - m)
            f = residual[node]
        else:
            cell = (other, node - m)
            f = -residual[node]
        flows[cell] = f
        residual[other] += residual[node]
        residual[node] = 0.0
        local[node].discard(other)
        local[other].discard(node)
        deg[node] -= 1
        deg[other] -= 1
        if deg[other] == 1:
            queue.append(other)
    return flows


def solve_transport(problem: TransportProblem, max_iter: int = 0) -> TransportPlan:
    """Minimize the transport cost of a balanced problem.

    Returns a plan whose support has at most m + k - 1 cells and whose
    marginals reproduce the supplies and demands up to 1e-9 of the total.
    Raises RuntimeError when the pivot limit is exhausted, which signals a
    numerically broken instance rather than a modelling error.
    """
    s_all = problem.supplies
    d_all = problem.demands
    rows_keep = np.nonzero(s_all > 0.0)[0]
    cols_keep = np.nonzero(d_all > 0.0)[0]
    if rows_keep.size == 0 or cols_keep.size == 0:
        empty = np.empty(0)
        return TransportPlan(empty.astype(np.intp), empty.astype(np.intp), empty, 0.0)
    s = s_all[rows_keep]
    d = d_all[cols_keep].copy()
    costs = np.ascontiguousarray(problem.costs[np.ix_(rows_keep, cols_keep)])
    m, k = s.size, d.size
    d[-1] += s.sum() - d.sum()

    # Distinct per-row perturbations keep basic flows pairwise different,
    # which removes ratio-test ties on instances with many equal masses.
    eps = 2e-12 * s.sum() / (m * (m + 1))
    pert = eps * np.arange(1.0, m + 1.0)
    s_pert = s + pert
    d_pert = d.copy()
    d_pert[-1] += pert.sum()

    flows: dict = {}
    adj: list = [set() for _ in range(m + k)]
    for i, j, x in _northwest_corner(s_pert, d_pert):
        flows[(i, j)] = x
        adj[i].add(m + j)
        adj[m + j].add(i)

    cmax = float(np.max(np.abs(costs))) if costs.size else 0.0
    tol = 1e-9 * cmax
    if max_iter <= 0:
        max_iter = 100 * (m + k) + 1000
    pivots = 0
    u, v = _tree_duals(m, k, adj, costs)
    reduced = costs - u[:, None]
    reduced -= v[None, :]
    for _ in range(max_iter):
        if pivots % 2048 == 2047:
            # Bound the drift the incremental updates accumulate.
            u, v = _tree_duals(m, k, adj, costs)
            np.subtract(costs, u[:, None], out=reduced)
            reduced -= v[None, :]
        flat = int(np.argmin(reduced))
        ei, ej = divmod(flat, k)
        enter_red = float(reduced[ei, ej])
        if enter_red >= -tol:
            break
        pivots += 1
        path = _tree_path(adj, ei, m + ej)
        cycle = []
        for t in range(len(path) - 1):
            a, b = path[t], path[t + 1]
            cell = (a, b - m) if a < m else (b, a - m)
            cycle.append((cell, -1.0 if t % 2 == 0 else 1.0))
        minus = [cell for cell, sign in cycle if sign < 0]
        theta = min(flows[cell] for cell in minus)
        leaving = min(cell for cell in minus if flows[cell] <= theta)
        for cell, sign in cycle:
            flows[cell] += sign * theta
        flows[(ei, ej)] = theta
        del flows[leaving]
        adj[leaving[0]].discard(m + leaving[1])
        adj[m + leaving[1]].discard(leaving[0])
        # Dropping the leaving edge splits the tree.  Reduced costs computed
        # from tree tight duals stay valid on the side holding ei; on the
        # side holding the entering column every row dual drops and every
        # column dual rises by the entering reduced cost, which keeps the
        # surviving tree cells tight and makes the entering cell tight.
        stack = [m + ej]
        seen = {m + ej}
        while stack:
            node = stack.pop()
            for nxt in adj[node]:
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        rows_shift = [node for node in seen if node < m]
        cols_shift = [node - m for node in seen if node >= m]
        if rows_shift:
            reduced[rows_shift, :] += enter_red
        if cols_shift:
            reduced[:, cols_shift] -= enter_red
        adj[ei].add(m + ej)
        adj[m + ej].add(ei)
    else:
        raise RuntimeError(f"transport solver did not converge within {max_iter} pivots")

    clean = _flows_from_marginals(m, k, adj, s, d)
    out_rows = []
    out_cols = []
    out_flows = []
    objective = 0.0
    for (i, j) in sorted(clean):
        f = clean[(i, j)]
        if f < -1e-6 * s.sum():
            raise RuntimeError("transport solver produced an infeasible basis")
        if f > 0.0:
            out_rows.append(rows_keep[i])
            out_cols.append(cols_keep[j])
            out_flows.append(f)
            objective += f * costs[i, j]
    return TransportPlan(
        np.array(out_rows, dtype=np.intp),
        np.array(out_cols, dtype=np.intp),
        np.array(out_flows),
        float(objective),
        pivots,
    )
