"""Topological map: regular nodes with panoramas, degree-1 ghost nodes marking
predicted unexplored directions, and edges carrying odometry-derived relative
poses.

All node estimated poses live in one shared dead-reckoning frame (origin at the
episode start position, world-aligned axes), so an edge's relative pose is the
difference of its endpoints' stored estimates and path composition telescopes.
Ground truth never enters: estimates come only from composed odometry.

Ghost bookkeeping (the paper's rules, made geometric):
  - a ghost is added at a new node for every explorable direction bin, unless a
    regular edge-neighbor already lies in that bin (within 1.5x the node radius);
  - adding an edge removes ghosts of either endpoint that point at the other
    (same sector, within 1.5x radius);
  - creating a node removes ghosts anywhere in the graph that point at it
    (same sector, within the node radius).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .errors import DomainError
from .oracles import NODE_RADIUS, bin_center, bin_of_angle
from .sim import N_BINS, PanoramicObservation
from .world import Pose, wrap_to_pi

GHOST_PRUNE_RANGE = NODE_RADIUS            # new node removes ghosts pointing at it
NEIGHBOR_BIN_RANGE = 1.5 * NODE_RADIUS     # a neighbor "occupies" a bin within this


@dataclass
class TopoNode:
    id: int
    observation: PanoramicObservation
    estimated_pose: Pose


@dataclass
class GhostNode:
    id: int
    parent: int
    direction_bin: int
    patch: np.ndarray  # parent panorama slice for this bin

    @property
    def rel_pose(self) -> tuple[float, float]:
        """(range, bearing) of the ghost relative to its parent."""
        return (NODE_RADIUS, bin_center(self.direction_bin))


@dataclass
class TopoEdge:
    a: int
    b: int
    dp: np.ndarray  # (dx, dy, dheading), frame of the shared estimate


@dataclass
class GraphEvent:
    """What one graph update did; lets agents track ghost consumption."""

    kind: str  # created | moved | stayed
    node_id: int
    pruned_ghosts: list[int] = dc_field(default_factory=list)
    added_ghosts: list[int] = dc_field(default_factory=list)


class TopoGraph:
    def __init__(self):
        self.nodes: dict[int, TopoNode] = {}
        self.ghosts: dict[int, GhostNode] = {}
        self.edges: dict[tuple[int, int], TopoEdge] = {}
        self.adj: dict[int, set[int]] = {}
        self.current_node: int | None = None
        self.last_node: int | None = None
        self.version = 0
        self._next_id = 0

    # -- structure ------------------------------------------------------------

    def _new_id(self) -> int:
        i = self._next_id
        self._next_id += 1
        return i

    def add_node(self, obs: PanoramicObservation, est: Pose) -> int:
        nid = self._new_id()
        self.nodes[nid] = TopoNode(nid, obs, est)
        self.adj[nid] = set()
        self.version += 1
        return nid

    def has_edge(self, a: int, b: int) -> bool:
        return (min(a, b), max(a, b)) in self.edges

    def add_edge(self, a: int, b: int) -> list[int]:
        """Connect two regular nodes; dp from stored estimates. Returns pruned ghosts."""
        if a == b:
            raise DomainError("self-edges are not allowed")
        key = (min(a, b), max(a, b))
        if key in self.edges:
            return []
        pa, pb = self.nodes[key[0]].estimated_pose, self.nodes[key[1]].estimated_pose
        dp = np.array([pb.x - pa.x, pb.y - pa.y, wrap_to_pi(pb.heading - pa.heading)])
        self.edges[key] = TopoEdge(key[0], key[1], dp)
        self.adj[a].add(b)
        self.adj[b].add(a)
        pruned = []
        for u, v in ((a, b), (b, a)):
            tgt = self.nodes[v].estimated_pose
            pruned += self._prune_ghosts_toward(u, (tgt.x, tgt.y), NEIGHBOR_BIN_RANGE)
        self.version += 1
        return pruned

    def edge_dp(self, a: int, b: int) -> np.ndarray:
        """Relative pose along edge a->b (oriented)."""
        key = (min(a, b), max(a, b))
        edge = self.edges.get(key)
        if edge is None:
            raise DomainError(f"no edge between {a} and {b}")
        return edge.dp if a == key[0] else -edge.dp

    def add_ghost(self, parent: int, direction_bin: int) -> int:
        gid = self._new_id()
        obs = self.nodes[parent].observation
        per_bin = obs.n_rays // N_BINS
        start = direction_bin * per_bin - per_bin // 2
        idx = np.arange(start, start + per_bin) % obs.n_rays
        self.ghosts[gid] = GhostNode(gid, parent, direction_bin, obs.depths[idx].copy())
        self.version += 1
        return gid

    def remove_ghost(self, gid: int) -> None:
        del self.ghosts[gid]
        self.version += 1

    def ghost_position(self, gid: int) -> tuple[float, float]:
        """Ghost location in the estimate frame: parent pose + radius along its bin."""
        g = self.ghosts[gid]
        p = self.nodes[g.parent].estimated_pose
        r, th = g.rel_pose
        return (p.x + r * math.cos(th), p.y + r * math.sin(th))

    def ghosts_of(self, parent: int) -> list[GhostNode]:
        return [g for g in self.ghosts.values() if g.parent == parent]

    def _prune_ghosts_toward(self, parent: int, target_xy: tuple[float, float],
                             max_range: float) -> list[int]:
        """Remove parent's ghosts whose sector contains the target within range."""
        p = self.nodes[parent].estimated_pose
        dx, dy = target_xy[0] - p.x, target_xy[1] - p.y
        dist = math.hypot(dx, dy)
        if dist == 0.0 or dist > max_range:
            return []
        b = bin_of_angle(math.atan2(dy, dx))
        doomed = [g.id for g in self.ghosts.values()
                  if g.parent == parent and g.direction_bin == b]
        for gid in doomed:
            self.remove_ghost(gid)
        return doomed


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def localize_in_graph(graph: TopoGraph, obs: PanoramicObservation, predictors) -> int | None:
    """First node whose stored panorama localizes obs, probing the current node,
    then its neighbors by id, then all remaining nodes by id."""
    if not graph.nodes:
        return None
    order: list[int] = []
    if graph.current_node is not None:
        order.append(graph.current_node)
        order += sorted(graph.adj[graph.current_node])
    seen = set(order)
    order += [n for n in sorted(graph.nodes) if n not in seen]
    for nid in order:
        if predictors.localize_pair(graph.nodes[nid].observation, obs):
            return nid
    return None


def prune_and_add_ghosts(graph: TopoGraph, node_id: int, explorable: np.ndarray) -> GraphEvent:
    """Apply the ghost rules for a just-created node."""
    ev = GraphEvent("created", node_id)
    node = graph.nodes[node_id]
    # Remove ghosts anywhere that point at the new node.
    for other in list(graph.nodes):
        if other != node_id:
            ev.pruned_ghosts += graph._prune_ghosts_toward(
                other, node.estimated_pose.xy, GHOST_PRUNE_RANGE)
    # Add ghosts for explorable bins not already covered by a regular neighbor.
    occupied_bins = set()
    p = node.estimated_pose
    for nb in graph.adj[node_id]:
        q = graph.nodes[nb].estimated_pose
        if math.hypot(q.x - p.x, q.y - p.y) <= NEIGHBOR_BIN_RANGE:
            occupied_bins.add(bin_of_angle(math.atan2(q.y - p.y, q.x - p.x)))
    for b in range(N_BINS):
        if explorable[b] and b not in occupied_bins:
            ev.added_ghosts.append(graph.add_ghost(node_id, b))
    return ev


def graph_update(graph: TopoGraph, obs: PanoramicObservation, est_pose: Pose,
                 predictors) -> GraphEvent:
    """One step of topological map maintenance (localize / relocate / grow)."""
    if not graph.nodes:
        nid = graph.add_node(obs, est_pose)
        graph.current_node = graph.last_node = nid
        ev = prune_and_add_ghosts(graph, nid, predictors.explorable_directions(obs))
        return ev

    loc = localize_in_graph(graph, obs, predictors)
    if loc is not None:
        if loc == graph.current_node:
            return GraphEvent("stayed", loc)
        prev = graph.current_node
        pruned = [] if graph.has_edge(prev, loc) else graph.add_edge(prev, loc)
        graph.last_node = prev
        graph.current_node = loc
        ev = GraphEvent("moved", loc)
        ev.pruned_ghosts = pruned
        return ev

    prev = graph.current_node
    nid = graph.add_node(obs, est_pose)
    pruned_by_edge = graph.add_edge(prev, nid)
    graph.last_node = prev
    graph.current_node = nid
    ev = prune_and_add_ghosts(graph, nid, predictors.explorable_directions(obs))
    ev.pruned_ghosts += pruned_by_edge
    return ev


def compose_along_path(graph: TopoGraph, path: list[int]) -> np.ndarray:
    """Compose edge relative poses along a node path (shared estimate frame)."""
    if not path:
        raise DomainError("empty path")
    total = np.zeros(3)
    for a, b in zip(path, path[1:]):
        total += graph.edge_dp(a, b)
    total[2] = wrap_to_pi(total[2])
    return total


def check_invariants(graph: TopoGraph) -> list[str]:
    """Structural invariant violations (empty list when healthy)."""
    problems = []
    if graph.nodes:
        root = min(graph.nodes)
        seen = {root}
        stack = [root]
        while stack:
            n = stack.pop()
            for m in graph.adj[n]:
                if m not in seen:
                    seen.add(m)
                    stack.append(m)
        if seen != set(graph.nodes):
            problems.append(f"disconnected: {sorted(set(graph.nodes) - seen)} unreachable")
    for g in graph.ghosts.values():
        if g.parent not in graph.nodes:
            problems.append(f"ghost {g.id} orphaned (parent {g.parent})")
            continue
        p = graph.nodes[g.parent].estimated_pose
        for nb in graph.adj[g.parent]:
            q = graph.nodes[nb].estimated_pose
            d = math.hypot(q.x - p.x, q.y - p.y)
            if d <= NEIGHBOR_BIN_RANGE and d > 0.0:
                if bin_of_angle(math.atan2(q.y - p.y, q.x - p.x)) == g.direction_bin:
                    problems.append(
                        f"ghost {g.id} shares bin {g.direction_bin} with neighbor {nb} "
                        f"of node {g.parent}")
    for (a, b), e in graph.edges.items():
        if a == b:
            problems.append(f"self-edge at {a}")
        if not np.isfinite(e.dp).all():
            problems.append(f"non-finite dp on edge {(a, b)}")
    return problems


# ---------------------------------------------------------------------------
# serialization (debug/rendering dump)
# ---------------------------------------------------------------------------

def dump_graph(graph: TopoGraph, path: str | Path) -> None:
    lines = ["# toponav graph v1"]
    for nid in sorted(graph.nodes):
        p = graph.nodes[nid].estimated_pose
        lines.append(f"node {nid} {p.x:.10g} {p.y:.10g} {p.heading:.10g}")
    for gid in sorted(graph.ghosts):
        g = graph.ghosts[gid]
        lines.append(f"ghost {gid} {g.parent} {g.direction_bin}")
    for a, b in sorted(graph.edges):
        e = graph.edges[(a, b)]
        lines.append(f"edge {a} {b} {e.dp[0]:.10g} {e.dp[1]:.10g} {e.dp[2]:.10g}")
    if graph.current_node is not None:
        lines.append(f"current {graph.current_node}")
    if graph.last_node is not None:
        lines.append(f"last {graph.last_node}")
    Path(path).write_text("\n".join(lines) + "\n")


def parse_graph_dump(path: str | Path) -> dict:
    """Parse a graph dump into plain dicts (for rendering; no observations)."""
    out = {"nodes": {}, "ghosts": {}, "edges": [], "current": None, "last": None}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        toks = line.split()
        if toks[0] == "node":
            out["nodes"][int(toks[1])] = (float(toks[2]), float(toks[3]), float(toks[4]))
        elif toks[0] == "ghost":
            out["ghosts"][int(toks[1])] = (int(toks[2]), int(toks[3]))
        elif toks[0] == "edge":
            out["edges"].append((int(toks[1]), int(toks[2]),
                                 (float(toks[3]), float(toks[4]), float(toks[5]))))
        elif toks[0] == "current":
            out["current"] = int(toks[1])
        elif toks[0] == "last":
            out["last"] = int(toks[1])
        else:
            raise DomainError(f"bad graph dump line: {line!r}")
    return out
