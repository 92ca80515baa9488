"""Directed road networks, path enumeration and point-to-point distances.

A network is a finite set of directed arcs on named vertices.  Arcs carry a
positive length, the graph must be acyclic, origins are the vertices without
incoming arcs and destinations the ones without outgoing arcs.  Points on the
network are addressed as (arc, offset); a point may also sit on the virtual
extension of a destination arc, i.e. beyond the head vertex of an arc whose
head has no outgoing arcs.  Extensions let traffic leave the physical arcs
without losing mass.

The distance between two points is the length of the shortest route that
ignores arc direction (walking against the flow of traffic is allowed).  For
two points on the same arc the direct along-arc separation competes with
routes through the endpoints and the minimum wins, which also handles arcs in
parallel.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Optional, Sequence, Union

import numpy as np


@dataclass(frozen=True)
class Arc:
    """One directed road segment."""

    id: str
    tail: str
    head: str
    length: float

    def __post_init__(self):
        if not self.id:
            raise ValueError("arc id must be a nonempty string")
        if not (np.isfinite(self.length) and self.length > 0.0):
            raise ValueError(f"arc {self.id!r}: length must be positive, got {self.length}")
        if self.tail == self.head:
            raise ValueError(f"arc {self.id!r}: self loops are not allowed")


@dataclass(frozen=True)
class NetworkPoint:
    """A location on the network.

    ``offset`` is measured from the tail of ``arc`` and lies in [0, length].
    ``extension`` > 0 places the point ``extension`` length units beyond the
    head of ``arc``, which is only meaningful when that head is a destination;
    in that case ``offset`` equals the arc length.
    """

    arc: str
    offset: float
    extension: float = 0.0


@dataclass(frozen=True)
class RoadNetwork:
    """An acyclic directed metric graph.  Build instances via build_network."""

    arcs: tuple[Arc, ...]

    @cached_property
    def arc_index(self) -> dict:
        return {a.id: a for a in self.arcs}

    @cached_property
    def vertices(self) -> tuple[str, ...]:
        seen = []
        for a in self.arcs:
            for v in (a.tail, a.head):
                if v not in seen:
                    seen.append(v)
        return tuple(sorted(seen))

    @cached_property
    def origins(self) -> tuple[str, ...]:
        with_in = {a.head for a in self.arcs}
        return tuple(v for v in self.vertices if v not in with_in)

    @cached_property
    def destinations(self) -> tuple[str, ...]:
        with_out = {a.tail for a in self.arcs}
        return tuple(v for v in self.vertices if v not in with_out)

    def arc(self, arc_id: str) -> Arc:
        try:
            return self.arc_index[arc_id]
        except KeyError:
            raise KeyError(f"unknown arc id {arc_id!r}") from None

    @cached_property
    def _vertex_pos(self) -> dict:
        return {v: i for i, v in enumerate(self.vertices)}

    @cached_property
    def _vertex_distances(self) -> np.ndarray:
        """All-pairs shortest vertex distances, direction ignored.

        Computed with Dijkstra from every vertex; the matrix is symmetrized
        entrywise so that d(u, v) and d(v, u) agree bitwise.
        """
        nv = len(self.vertices)
        adj: dict = {v: [] for v in self.vertices}
        for a in self.arcs:
            adj[a.tail].append((a.head, a.length))
            adj[a.head].append((a.tail, a.length))
        dist = np.full((nv, nv), np.inf)
        for si, source in enumerate(self.vertices):
            dist[si, si] = 0.0
            heap = [(0.0, source)]
            done = set()
            while heap:
                d, u = heapq.heappop(heap)
                if u in done:
                    continue
                done.add(u)
                for w, length in adj[u]:
                    nd = d + length
                    wi = self._vertex_pos[w]
                    if nd < dist[si, wi]:
                        dist[si, wi] = nd
                        heapq.heappush(heap, (nd, w))
        return np.minimum(dist, dist.T)

    @cached_property
    def downstream_depth(self) -> dict:
        """Longest arc-path distance from any origin, per vertex.

        Adding a point's arc offset to the depth of the arc's tail gives a
        scalar that grows in the driving direction everywhere, a canonical
        1-d embedding used to order atoms for near-monotone transport."""
        order = []
        indeg = {v: 0 for v in self.vertices}
        out: dict = {v: [] for v in self.vertices}
        for a in self.arcs:
            indeg[a.head] += 1
            out[a.tail].append(a)
        queue = sorted(v for v in self.vertices if indeg[v] == 0)
        depth = {v: 0.0 for v in self.vertices}
        while queue:
            v = queue.pop()
            order.append(v)
            for a in out[v]:
                depth[a.head] = max(depth[a.head], depth[v] + a.length)
                indeg[a.head] -= 1
                if indeg[a.head] == 0:
                    queue.append(a.head)
        return depth


def build_network(arcs: Iterable) -> RoadNetwork:
    """Validate arc data and assemble a RoadNetwork.

    Accepts Arc instances, (id, tail, head, length) tuples or dicts with those
    keys.  Raises ValueError on duplicate arc ids, nonpositive lengths or
    directed cycles.
    """
    norm = []
    for item in arcs:
        if isinstance(item, Arc):
            norm.append(item)
        elif isinstance(item, dict):
            norm.append(Arc(str(item["id"]), str(item["tail"]), str(item["head"]), float(item["length"])))
        else:
            i, t, h, l = item
            norm.append(Arc(str(i), str(t), str(h), float(l)))
    if not norm:
        raise ValueError("a network needs at least one arc")
    ids = [a.id for a in norm]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise ValueError(f"duplicate arc ids: {dupes}")
    net = RoadNetwork(arcs=tuple(norm))
    _check_acyclic(net)
    return net


def _check_acyclic(net: RoadNetwork) -> None:
    indeg = {v: 0 for v in net.vertices}
    for a in net.arcs:
        indeg[a.head] += 1
    queue = [v for v in net.vertices if indeg[v] == 0]
    seen = 0
    out = {v: [] for v in net.vertices}
    for a in net.arcs:
        out[a.tail].append(a.head)
    while queue:
        v = queue.pop()
        seen += 1
        for w in out[v]:
            indeg[w] -= 1
            if indeg[w] == 0:
                queue.append(w)
    if seen != len(net.vertices):
        raise ValueError("the arc set contains a directed cycle")


@dataclass(frozen=True)
class Path:
    """An origin-to-destination arc sequence with cumulative start offsets."""

    index: int
    arcs: tuple[Arc, ...]

    @cached_property
    def starts(self) -> np.ndarray:
        lengths = np.array([a.length for a in self.arcs])
        return np.concatenate(([0.0], np.cumsum(lengths)[:-1]))

    @cached_property
    def length(self) -> float:
        return float(sum(a.length for a in self.arcs))

    @cached_property
    def arc_ids(self) -> tuple[str, ...]:
        return tuple(a.id for a in self.arcs)

    @cached_property
    def _start_by_id(self) -> dict:
        return {a.id: float(s) for a, s in zip(self.arcs, self.starts)}

    def start_of(self, arc_id: str) -> Optional[float]:
        """Path coordinate at which the given arc begins, or None."""
        return self._start_by_id.get(arc_id)

    @property
    def final_arc(self) -> Arc:
        return self.arcs[-1]


def enumerate_paths(net: RoadNetwork) -> tuple[Path, ...]:
    """All origin-to-destination paths, ordered by their arc id sequences.

    The graph is acyclic so the enumeration terminates; the lexicographic
    ordering makes path indices reproducible across runs.
    """
    out: dict = {v: [] for v in net.vertices}
    for a in net.arcs:
        out[a.tail].append(a)
    for v in out:
        out[v].sort(key=lambda a: a.id)
    found: list[tuple[Arc, ...]] = []

    def walk(vertex: str, trail: list):
        if not out[vertex]:
            found.append(tuple(trail))
            return
        for a in out[vertex]:
            trail.append(a)
            walk(a.head, trail)
            trail.pop()

    for origin in net.origins:
        walk(origin, [])
    found.sort(key=lambda arcs: tuple(a.id for a in arcs))
    return tuple(Path(index=i, arcs=arcs) for i, arcs in enumerate(found))


def point_at(path: Path, s: float) -> NetworkPoint:
    """Point at path coordinate ``s`` (distance from the path origin).

    Coordinates beyond the path length land on the virtual extension of the
    final arc.  Negative coordinates are rejected.
    """
    if not np.isfinite(s) or s < 0.0:
        raise ValueError(f"path coordinate must be finite and nonnegative, got {s}")
    L = path.length
    if s > L:
        last = path.final_arc
        return NetworkPoint(arc=last.id, offset=last.length, extension=s - L)
    starts = path.starts
    k = int(np.searchsorted(starts, s, side="right")) - 1
    arc = path.arcs[k]
    return NetworkPoint(arc=arc.id, offset=min(s - float(starts[k]), arc.length))


def path_coordinate(path: Path, p: NetworkPoint) -> Optional[float]:
    """Inverse of point_at: coordinate of ``p`` along ``path``, or None.

    A point on the extension of the path's final arc maps to length plus the
    extension offset; points on arcs the path does not traverse map to None.
    """
    if p.extension > 0.0:
        if p.arc == path.final_arc.id:
            return path.length + p.extension
        return None
    start = path.start_of(p.arc)
    if start is None:
        return None
    return start + p.offset


def _validate_point(net: RoadNetwork, p: NetworkPoint) -> Arc:
    arc = net.arc(p.arc)
    tol = 1e-9 * max(1.0, arc.length)
    if not (-tol <= p.offset <= arc.length + tol):
        raise ValueError(f"offset {p.offset} outside [0, {arc.length}] on arc {p.arc!r}")
    if p.extension < 0.0:
        raise ValueError(f"extension offset must be nonnegative, got {p.extension}")
    if p.extension > 0.0:
        if arc.head not in net.destinations:
            raise ValueError(f"arc {p.arc!r} does not end at a destination, no extension exists")
        if abs(p.offset - arc.length) > tol:
            raise ValueError("a point on an extension must carry offset equal to the arc length")
    return arc


def _point_legs(net: RoadNetwork, points: Sequence[NetworkPoint]):
    """Per-point routing data: endpoint vertex indices, leg lengths and the
    (arc or extension) group used for the direct same-segment distance."""
    vpos = net._vertex_pos
    n = len(points)
    u = np.empty(n, dtype=np.intp)
    v = np.empty(n, dtype=np.intp)
    du = np.empty(n)
    dv = np.empty(n)
    group = np.empty(n, dtype=np.intp)
    coord = np.empty(n)
    arc_ids = sorted(net.arc_index)
    gid = {("a", aid): 2 * i for i, aid in enumerate(arc_ids)}
    gid.update({("e", aid): 2 * i + 1 for i, aid in enumerate(arc_ids)})
    for i, p in enumerate(points):
        arc = _validate_point(net, p)
        if p.extension > 0.0:
            hi = vpos[arc.head]
            u[i] = hi
            v[i] = hi
            du[i] = p.extension
            dv[i] = p.extension
            group[i] = gid[("e", arc.id)]
            coord[i] = p.extension
        else:
            off = min(max(p.offset, 0.0), arc.length)
            u[i] = vpos[arc.tail]
            v[i] = vpos[arc.head]
            du[i] = off
            dv[i] = arc.length - off
            group[i] = gid[("a", arc.id)]
            coord[i] = off
    return u, v, du, dv, group, coord


def network_distance_matrix(
    net: RoadNetwork,
    points_a: Sequence[NetworkPoint],
    points_b: Sequence[NetworkPoint],
) -> np.ndarray:
    """Pairwise direction-blind distances between two point collections."""
    ua, va, dua, dva, ga, sa = _point_legs(net, points_a)
    ub, vb, dub, dvb, gb, sb = _point_legs(net, points_b)
    VD = net._vertex_distances
    best = (dua[:, None] + dub[None, :]) + VD[ua[:, None], ub[None, :]]
    np.minimum(best, (dua[:, None] + dvb[None, :]) + VD[ua[:, None], vb[None, :]], out=best)
    np.minimum(best, (dva[:, None] + dub[None, :]) + VD[va[:, None], ub[None, :]], out=best)
    np.minimum(best, (dva[:, None] + dvb[None, :]) + VD[va[:, None], vb[None, :]], out=best)
    same = ga[:, None] == gb[None, :]
    if same.any():
        direct = np.abs(sa[:, None] - sb[None, :])
        best = np.where(same, np.minimum(best, direct), best)
    if not np.all(np.isfinite(best)):
        raise ValueError("points lie in disconnected components of the network")
    return best


def network_distances_paired(
    net: RoadNetwork,
    points_a: Sequence[NetworkPoint],
    points_b: Sequence[NetworkPoint],
) -> np.ndarray:
    """Elementwise distances between two equally long point sequences."""
    if len(points_a) != len(points_b):
        raise ValueError("paired distance needs sequences of equal length")
    ua, va, dua, dva, ga, sa = _point_legs(net, points_a)
    ub, vb, dub, dvb, gb, sb = _point_legs(net, points_b)
    VD = net._vertex_distances
    best = (dua + dub) + VD[ua, ub]
    np.minimum(best, (dua + dvb) + VD[ua, vb], out=best)
    np.minimum(best, (dva + dub) + VD[va, ub], out=best)
    np.minimum(best, (dva + dvb) + VD[va, vb], out=best)
    same = ga == gb
    if same.any():
        best = np.where(same, np.minimum(best, np.abs(sa - sb)), best)
    if not np.all(np.isfinite(best)):
        raise ValueError("points lie in disconnected components of the network")
    return best


def network_distance(net: RoadNetwork, a: NetworkPoint, b: NetworkPoint) -> float:
    """Shortest direction-blind distance between two network points."""
    return float(network_distances_paired(net, [a], [b])[0])
