"""Similarity pose graph over camera-to-world Sim3 nodes.

Edge (i, j) carries a measurement Z of the relative transform N_i^-1 N_j and
contributes the 7-vector residual log(Z^-1 N_i^-1 N_j). Nodes are updated on
the right, N <- N exp(delta).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from ..geometry.transforms import Sim3Transform, sim3_right_jacobian_inv
from .common import OptimizationError, SolverConfig, levenberg_marquardt

POSEGRAPH_CONFIG = SolverConfig(max_iterations=20, huber_delta=1e12)


class DisconnectedGraphError(OptimizationError):
    def __init__(self, unreachable):
        self.unreachable = sorted(unreachable)
        super().__init__(f"pose graph nodes unreachable from the fixed set: {self.unreachable}")


@dataclass(frozen=True)
class Sim3Edge:
    i: int
    j: int
    measurement: Sim3Transform
    weight: float = 1.0


@dataclass
class PoseGraphResult:
    nodes: dict
    costs: list
    iterations: int


def edge_residual(Ni: Sim3Transform, Nj: Sim3Transform, Z: Sim3Transform):
    return (Z.inverse() @ Ni.inverse() @ Nj).log()


def check_connected(node_ids, edges, fixed):
    adj = {n: [] for n in node_ids}
    for e in edges:
        adj[e.i].append(e.j)
        adj[e.j].append(e.i)
    seen = set(fixed)
    queue = deque(fixed)
    while queue:
        n = queue.popleft()
        for m in adj[n]:
            if m not in seen:
                seen.add(m)
                queue.append(m)
    missing = set(node_ids) - seen
    if missing:
        raise DisconnectedGraphError(missing)


def solve_pose_graph_sim3(
    nodes: dict, edges: list, fixed, cfg: SolverConfig | None = None
) -> PoseGraphResult:
    """Optimize the non-fixed nodes. ``nodes`` maps id -> camera-to-world Sim3.

    Raises :class:`DisconnectedGraphError` naming every node with no edge path
    to a fixed node, before doing any work.
    """
    cfg = cfg or POSEGRAPH_CONFIG
    fixed = set(fixed)
    if not fixed:
        raise OptimizationError("pose graph needs at least one fixed node")
    for e in edges:
        if e.i not in nodes or e.j not in nodes:
            raise KeyError(f"edge ({e.i}, {e.j}) references an unknown node")
    ids = sorted(nodes)
    check_connected(ids, edges, fixed)
    var = [n for n in ids if n not in fixed]
    slot = {n: k for k, n in enumerate(var)}
    dim = 7 * len(var)
    if not var or not edges:
        return PoseGraphResult(dict(nodes), [0.0], 0)

    def evaluate(state):
        total = 0.0
        for e in edges:
            r = edge_residual(state[e.i], state[e.j], e.measurement)
            total += e.weight * float(r @ r)
        return total

    def linearize(state):
        H = np.zeros((dim, dim))
        g = np.zeros(dim)
        cost = 0.0
        for e in edges:
            Ni, Nj = state[e.i], state[e.j]
            r = edge_residual(Ni, Nj, e.measurement)
            cost += e.weight * float(r @ r)
            Jinv = sim3_right_jacobian_inv(r)
            blocks = []
            if e.i in slot:
                blocks.append((slot[e.i], -Jinv @ (Nj.inverse() @ Ni).adjoint()))
            if e.j in slot:
                blocks.append((slot[e.j], Jinv))
            for a, Ja in blocks:
                sa = slice(7 * a, 7 * a + 7)
                g[sa] += e.weight * Ja.T @ r
                for b, Jb in blocks:
                    H[sa, 7 * b : 7 * b + 7] += e.weight * Ja.T @ Jb
        return H, g, cost

    def retract(state, dx):
        out = dict(state)
        for n, k in slot.items():
            out[n] = state[n] @ Sim3Transform.exp(dx[7 * k : 7 * k + 7])
        return out

    state, hist = levenberg_marquardt(dict(nodes), linearize, evaluate, retract, cfg)
    return PoseGraphResult(state, hist.costs, hist.accepted)


def loop_composition_error(nodes: dict, cycle_edges) -> float:
    """Norm of log of the product of edge residual transforms around a cycle.

    Each factor is Z^-1 N_i^-1 N_j for one edge; when every edge is satisfied
    by the node estimates the product is exactly identity.
    """
    T = Sim3Transform.identity()
    for e in cycle_edges:
        T = T @ e.measurement.inverse() @ nodes[e.i].inverse() @ nodes[e.j]
    return float(np.linalg.norm(T.log()))
