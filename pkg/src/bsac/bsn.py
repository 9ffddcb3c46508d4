"""Bayesian strategy networks: declaration, validation and traversal.

A strategy network is a DAG over groups of action coordinates.  Each node owns
a disjoint slice of the joint action vector and is conditioned on the actions
of its parents, so the joint policy factorizes as a product of per-node
conditionals evaluated in topological order.

Declaration format, one node per line::

    # comment
    node hip   dims 0
    node knee  dims 1 parents hip
    node ankle dims 2 parents knee
"""

from __future__ import annotations

import heapq
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import BsnError, BsnReferenceError, CycleError, PartitionError, ShapeError

_ID = re.compile(r"^[A-Za-z_][A-Za-z0-9_.-]*$")


@dataclass(frozen=True)
class BsnNode:
    id: str
    action_dims: tuple[int, ...]
    parents: tuple[str, ...] = ()


@dataclass(frozen=True)
class BsnGraph:
    nodes: tuple[BsnNode, ...]
    total_action_dim: int
    name: str = ""

    def __post_init__(self):
        _validate(self.nodes, self.total_action_dim)

    @property
    def m(self) -> int:
        return len(self.nodes)

    def node(self, node_id: str) -> BsnNode:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise BsnReferenceError(f"unknown node id {node_id!r}")

    def parents(self) -> dict[str, list[str]]:
        return {n.id: list(n.parents) for n in self.nodes}

    def ancestors(self, node_id: str) -> set[str]:
        seen: set[str] = set()
        stack = list(self.node(node_id).parents)
        while stack:
            p = stack.pop()
            if p not in seen:
                seen.add(p)
                stack.extend(self.node(p).parents)
        return seen

    def parent_dims(self, node_id: str) -> list[int]:
        """Joint-action coordinates of the parents, in declared parent order."""
        dims: list[int] = []
        for p in self.node(node_id).parents:
            dims.extend(self.node(p).action_dims)
        return dims

    def to_text(self) -> str:
        lines = []
        for n in self.nodes:
            line = f"node {n.id} dims {','.join(map(str, n.action_dims))}"
            if n.parents:
                line += f" parents {','.join(n.parents)}"
            lines.append(line)
        return "\n".join(lines) + "\n"


def _find_cycle(parents: dict[str, tuple[str, ...]]) -> list[str] | None:
    color = dict.fromkeys(parents, 0)
    path: list[str] = []

    def visit(u):
        color[u] = 1
        path.append(u)
        for p in parents[u]:
            if color[p] == 1:
                return path[path.index(p):] + [p]
            if color[p] == 0:
                found = visit(p)
                if found:
                    return found
        color[u] = 2
        path.pop()
        return None

    for u in sorted(parents):
        if color[u] == 0:
            found = visit(u)
            if found:
                # report in parent -> child direction
                return found[::-1]
    return None


def _validate(nodes, total_action_dim):
    ids = [n.id for n in nodes]
    if not nodes:
        raise BsnError("strategy network has no nodes")
    dup = {i for i in ids if ids.count(i) > 1}
    if dup:
        raise BsnError(f"duplicate node ids: {sorted(dup)}")
    known = set(ids)
    for n in nodes:
        if not n.action_dims:
            raise PartitionError(f"node {n.id!r} owns no action dims")
        if len(set(n.action_dims)) != len(n.action_dims):
            raise PartitionError(f"node {n.id!r} repeats an action dim")
        for p in n.parents:
            if p not in known:
                raise BsnReferenceError(f"node {n.id!r} names unknown parent {p!r}")
        if len(set(n.parents)) != len(n.parents):
            raise BsnError(f"node {n.id!r} lists a parent twice")
    cycle = _find_cycle({n.id: n.parents for n in nodes})
    if cycle:
        raise CycleError(cycle)
    owned = sorted(d for n in nodes for d in n.action_dims)
    if owned != list(range(total_action_dim)):
        seen, overlap = set(), set()
        for d in owned:
            (overlap if d in seen else seen).add(d)
        missing = sorted(set(range(total_action_dim)) - seen)
        raise PartitionError(
            f"action dims must partition 0..{total_action_dim - 1}: "
            f"overlapping {sorted(overlap)}, missing {missing}, "
            f"out of range {sorted(d for d in seen if d >= total_action_dim or d < 0)}"
        )


def parse_bsn(text: str, name: str = "") -> BsnGraph:
    nodes = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        if tok[0] != "node" or len(tok) not in (4, 6) or tok[2] != "dims" or (
            len(tok) == 6 and tok[4] != "parents"
        ):
            raise BsnError(
                f"line {lineno}: expected 'node <id> dims <d,...> [parents <id,...>]', got {raw!r}"
            )
        node_id = tok[1]
        if not _ID.match(node_id):
            raise BsnError(f"line {lineno}: bad node id {node_id!r}")
        try:
            dims = tuple(int(d) for d in tok[3].split(","))
        except ValueError:
            raise BsnError(f"line {lineno}: dims must be comma-separated integers") from None
        if any(d < 0 for d in dims):
            raise PartitionError(f"line {lineno}: negative action dim")
        parents = tuple(tok[5].split(",")) if len(tok) == 6 else ()
        nodes.append(BsnNode(node_id, dims, parents))
    if not nodes:
        raise BsnError("strategy network declaration has no nodes")
    total = max(d for n in nodes for d in n.action_dims) + 1
    return BsnGraph(tuple(nodes), total, name)


def load_bsn(path: str | Path) -> BsnGraph:
    """Load a declaration from disk, or a shipped one by bare file name."""
    p = Path(path)
    if not p.exists():
        shipped = resources.files("bsac") / "data" / p.name
        if p.parent == Path(".") and shipped.is_file():
            return parse_bsn(shipped.read_text(encoding="utf-8"), p.stem)
        raise FileNotFoundError(path)
    return parse_bsn(p.read_text(encoding="utf-8"), p.stem)


def single_node_graph(action_dim: int, node_id: str = "a") -> BsnGraph:
    return BsnGraph((BsnNode(node_id, tuple(range(action_dim))),), action_dim, "flat")


def chain_graph(action_dim: int) -> BsnGraph:
    """One node per coordinate, each parented on the previous one."""
    nodes = [
        BsnNode(f"t{i + 1}", (i,), (f"t{i}",) if i else ()) for i in range(action_dim)
    ]
    return BsnGraph(tuple(nodes), action_dim, f"chain{action_dim}")


def topo_order(graph: BsnGraph) -> list[str]:
    """Kahn's algorithm with a min-heap, so ties go to the smallest id."""
    children: dict[str, list[str]] = {n.id: [] for n in graph.nodes}
    indeg = {n.id: len(n.parents) for n in graph.nodes}
    for n in graph.nodes:
        for p in n.parents:
            children[p].append(n.id)
    ready = [i for i, d in indeg.items() if d == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        u = heapq.heappop(ready)
        order.append(u)
        for c in children[u]:
            indeg[c] -= 1
            if indeg[c] == 0:
                heapq.heappush(ready, c)
    return order


def gather_parent_actions(graph: BsnGraph, node_id: str, joint_action) -> np.ndarray:
    joint_action = np.asarray(joint_action, dtype=np.float64)
    if joint_action.shape[-1] != graph.total_action_dim:
        raise ShapeError(
            f"joint action width {joint_action.shape[-1]} != {graph.total_action_dim}"
        )
    return joint_action[..., graph.parent_dims(node_id)]
