"""Multi-level grouped time series: node tree, summing matrix, panels.

A hierarchy is a strict tree with all leaves at the same depth.  Nodes are
ordered level-major (top level first), lexicographic by id within a level,
which makes the summing matrix and every downstream report reproducible.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

COHERENCE_RTOL = 1e-9


class HierarchyError(ValueError):
    """Raised for structurally invalid hierarchies or incoherent panels."""


@dataclass(frozen=True)
class Node:
    id: str
    level: int
    parent: str | None


@dataclass(frozen=True)
class HierarchySpec:
    """Validated node tree with deterministic node ordering.

    ``nodes`` is ordered level-major then lexicographic by id; the same
    ordering is used for summing-matrix rows and panel rows everywhere.
    """

    nodes: tuple[Node, ...]
    level_count: int
    _index: dict[str, int] = field(repr=False, compare=False, default_factory=dict)

    def __post_init__(self):
        object.__setattr__(
            self, "_index", {n.id: i for i, n in enumerate(self.nodes)}
        )

    @property
    def node_ids(self) -> list[str]:
        return [n.id for n in self.nodes]

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def bottom_level(self) -> int:
        return self.level_count - 1

    def index_of(self, node_id: str) -> int:
        return self._index[node_id]

    def level_of(self, node_id: str) -> int:
        return self.nodes[self._index[node_id]].level

    def nodes_at_level(self, level: int) -> list[str]:
        return [n.id for n in self.nodes if n.level == level]

    @property
    def bottom_ids(self) -> list[str]:
        return self.nodes_at_level(self.bottom_level)

    @property
    def top_id(self) -> str:
        return self.nodes[0].id

    def children_of(self, node_id: str) -> list[str]:
        return [n.id for n in self.nodes if n.parent == node_id]

    def parent_of(self, node_id: str) -> str | None:
        return self.nodes[self._index[node_id]].parent

    def ancestry(self, node_id: str) -> list[str]:
        """Path from the node itself up to the top node, inclusive."""
        path = [node_id]
        while (p := self.parent_of(path[-1])) is not None:
            path.append(p)
        return path

    def level_index(self) -> np.ndarray:
        """Level of each node, aligned with the node ordering."""
        return np.array([n.level for n in self.nodes], dtype=int)


def build_hierarchy(edges: list[tuple[str, str]]) -> HierarchySpec:
    """Build and validate a HierarchySpec from (parent, child) edges.

    Rejects duplicate edges, multiple parents, multiple roots, cycles, and
    ragged hierarchies (leaves at different depths).
    """
    if not edges:
        raise HierarchyError("edge list is empty")
    parent_of: dict[str, str] = {}
    children: dict[str, list[str]] = {}
    ids: set[str] = set()
    seen_edges: set[tuple[str, str]] = set()
    for parent, child in edges:
        if not isinstance(parent, str) or not isinstance(child, str):
            raise HierarchyError(f"node ids must be strings: ({parent!r}, {child!r})")
        if (parent, child) in seen_edges:
            raise HierarchyError(f"duplicate edge ({parent}, {child})")
        seen_edges.add((parent, child))
        if child in parent_of:
            raise HierarchyError(
                f"node {child!r} has multiple parents "
                f"({parent_of[child]!r} and {parent!r})"
            )
        parent_of[child] = parent
        children.setdefault(parent, []).append(child)
        ids.update((parent, child))

    roots = sorted(ids - parent_of.keys())
    if len(roots) == 0:
        raise HierarchyError("cycle detected: no root node")
    if len(roots) > 1:
        raise HierarchyError(f"multiple roots: {roots}")
    root = roots[0]

    # BFS from the root assigns levels and catches cycles (unreachable nodes).
    level = {root: 0}
    frontier = [root]
    while frontier:
        nxt = []
        for node in frontier:
            for child in children.get(node, ()):
                if child in level:
                    raise HierarchyError(f"cycle detected at node {child!r}")
                level[child] = level[node] + 1
                nxt.append(child)
        frontier = nxt
    unreachable = ids - level.keys()
    if unreachable:
        raise HierarchyError(f"cycle detected: unreachable nodes {sorted(unreachable)}")

    leaves = [n for n in ids if n not in children]
    depths = {level[n] for n in leaves}
    if len(depths) != 1:
        raise HierarchyError(
            f"ragged hierarchy: leaves at levels {sorted(depths)}, expected one depth"
        )
    k = depths.pop()
    ordered = sorted(ids, key=lambda n: (level[n], n))
    nodes = tuple(Node(id=n, level=level[n], parent=parent_of.get(n)) for n in ordered)
    return HierarchySpec(nodes=nodes, level_count=k + 1)


def summing_matrix(hier: HierarchySpec) -> np.ndarray:
    """0/1 matrix mapping bottom-level series to every node's aggregate.

    Row order matches ``hier.nodes``; columns follow the bottom nodes in the
    same ordering.  Entry (i, j) is 1 iff bottom node j is the node i itself
    or one of its descendants.
    """
    bottom = hier.bottom_ids
    S = np.zeros((hier.n_nodes, len(bottom)))
    for j, b in enumerate(bottom):
        for anc in hier.ancestry(b):
            S[hier.index_of(anc), j] = 1.0
    return S


def aggregate_panel(bottom_sales: np.ndarray, S: np.ndarray) -> np.ndarray:
    """Aggregate a bottom-level sales block upward: returns S @ bottom_sales."""
    bottom_sales = np.asarray(bottom_sales, dtype=float)
    if bottom_sales.ndim != 2:
        raise ValueError("bottom_sales must be 2-D (bottom nodes x weeks)")
    if S.shape[1] != bottom_sales.shape[0]:
        raise ValueError(
            f"dimension mismatch: S has {S.shape[1]} columns, "
            f"bottom_sales has {bottom_sales.shape[0]} rows"
        )
    return S @ bottom_sales


def aggregate_price(
    bottom_sales: np.ndarray, bottom_price: np.ndarray, hier: HierarchySpec
) -> np.ndarray:
    """Price at every node: sales-weighted average of children prices.

    Weeks where a node's subtree sold nothing fall back to the unweighted
    mean of the children's prices for that week.
    """
    S = summing_matrix(hier)
    m_k, n = bottom_price.shape
    if bottom_sales.shape != (m_k, n):
        raise ValueError("bottom_sales and bottom_price shapes differ")
    weighted = S @ (bottom_sales * bottom_price)  # m x n
    totals = S @ bottom_sales
    counts = S.sum(axis=1, keepdims=True)
    unweighted = (S @ bottom_price) / counts
    price = np.where(totals > 0, weighted / np.where(totals > 0, totals, 1.0), unweighted)
    return price


@dataclass(frozen=True)
class SeriesPanel:
    """Aligned weekly sales/price observations for every node.

    Rows follow the hierarchy node ordering; ``times`` are integer week
    indices 1..n.  Construction validates coherence (each aggregate equals
    the sum of its children) and rejects missing values.
    """

    node_ids: tuple[str, ...]
    times: np.ndarray
    sales: np.ndarray
    price: np.ndarray

    @property
    def n_weeks(self) -> int:
        return len(self.times)

    def row(self, node_id: str) -> int:
        return self.node_ids.index(node_id)

    def validate(self, hier: HierarchySpec) -> None:
        if list(self.node_ids) != hier.node_ids:
            raise HierarchyError("panel node order does not match the hierarchy")
        m, n = self.sales.shape
        if self.price.shape != (m, n) or len(self.times) != n:
            raise HierarchyError("panel sales/price/times shapes disagree")
        if not (np.isfinite(self.sales).all() and np.isfinite(self.price).all()):
            raise HierarchyError("panel contains missing or non-finite values")
        if (self.sales < 0).any():
            raise HierarchyError("negative sales in panel")
        if (self.price <= 0).any():
            raise HierarchyError("non-positive prices in panel")
        for node in hier.node_ids:
            kids = hier.children_of(node)
            if not kids:
                continue
            parent_row = self.sales[hier.index_of(node)]
            child_sum = sum(self.sales[hier.index_of(c)] for c in kids)
            scale = np.maximum(np.abs(parent_row), 1.0)
            if np.max(np.abs(parent_row - child_sum) / scale) > COHERENCE_RTOL:
                raise HierarchyError(f"panel incoherent at node {node!r}")


def panel_from_bottom(
    hier: HierarchySpec,
    bottom_sales: np.ndarray,
    bottom_price: np.ndarray,
    times: np.ndarray | None = None,
) -> SeriesPanel:
    """Assemble a coherent full panel from bottom-level sales and prices."""
    S = summing_matrix(hier)
    sales = aggregate_panel(bottom_sales, S)
    price = aggregate_price(np.asarray(bottom_sales, float), np.asarray(bottom_price, float), hier)
    n = sales.shape[1]
    if times is None:
        times = np.arange(1, n + 1)
    panel = SeriesPanel(
        node_ids=tuple(hier.node_ids),
        times=np.asarray(times, dtype=int),
        sales=sales,
        price=price,
    )
    panel.validate(hier)
    return panel


# -- file formats -----------------------------------------------------------

def save_hierarchy_csv(hier: HierarchySpec, path) -> None:
    """Write the edge list as CSV with header ``parent,child``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["parent", "child"])
        for node in hier.nodes:
            if node.parent is not None:
                writer.writerow([node.parent, node.id])


def load_hierarchy_csv(path) -> HierarchySpec:
    """Read a ``parent,child`` edge CSV and build the hierarchy."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["parent", "child"]:
            raise HierarchyError(f"{path}: expected header 'parent,child'")
        edges = [(row[0], row[1]) for row in reader if row]
    return build_hierarchy(edges)


def save_panel_csv(panel: SeriesPanel, path) -> None:
    """Write the panel in long form: ``week,node_id,sales,price``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["week", "node_id", "sales", "price"])
        for t, week in enumerate(panel.times):
            for i, node in enumerate(panel.node_ids):
                writer.writerow(
                    [int(week), node, repr(float(panel.sales[i, t])), repr(float(panel.price[i, t]))]
                )


def load_panel_csv(path, hier: HierarchySpec) -> SeriesPanel:
    """Read a ``week,node_id,sales,price`` CSV into a validated panel.

    Rows may appear in any order; the loader requires a complete
    week x node grid with no duplicates or gaps.
    """
    cells: dict[tuple[int, str], tuple[float, float]] = {}
    weeks: set[int] = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        expect = ["week", "node_id", "sales", "price"]
        if header is None or [h.strip() for h in header[:4]] != expect:
            raise HierarchyError(f"{path}: expected header 'week,node_id,sales,price'")
        for row in reader:
            if not row:
                continue
            week = int(row[0])
            node = row[1]
            if week <= 0:
                raise HierarchyError(f"{path}: week must be a positive integer, got {week}")
            if node not in hier.node_ids:
                raise HierarchyError(f"{path}: unknown node id {node!r}")
            key = (week, node)
            if key in cells:
                raise HierarchyError(f"{path}: duplicate cell for week {week}, node {node!r}")
            if row[2] == "" or row[3] == "":
                raise HierarchyError(f"{path}: missing value at week {week}, node {node!r}")
            cells[key] = (float(row[2]), float(row[3]))
            weeks.add(week)

    ordered_weeks = sorted(weeks)
    if ordered_weeks != list(range(ordered_weeks[0], ordered_weeks[0] + len(ordered_weeks))):
        raise HierarchyError(f"{path}: week indices are not contiguous")
    m, n = hier.n_nodes, len(ordered_weeks)
    if len(cells) != m * n:
        raise HierarchyError(
            f"{path}: incomplete week x node grid ({len(cells)} cells, expected {m * n})"
        )
    sales = np.empty((m, n))
    price = np.empty((m, n))
    for t, week in enumerate(ordered_weeks):
        for i, node in enumerate(hier.node_ids):
            sales[i, t], price[i, t] = cells[(week, node)]
    panel = SeriesPanel(
        node_ids=tuple(hier.node_ids),
        times=np.asarray(ordered_weeks, dtype=int),
        sales=sales,
        price=price,
    )
    panel.validate(hier)
    return panel
