"""Grouped sociomatrices: construction, validation, random generation, CSV input.

A sample is a collection of disjoint groups.  Interactions only happen within
a group, so the full-sample interaction matrices W (outcome spillovers) and M
(disturbance spillovers) are block diagonal with one block per group.  All
routines here preserve and, where cheap, verify that block structure.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np
import scipy.linalg

__all__ = [
    "GroupedNetwork",
    "PanelData",
    "build_block_diagonal",
    "row_normalize",
    "generate_mc_network",
    "lee_group_network",
    "load_edge_csv",
    "load_node_csv",
    "load_network",
]

# Entries smaller than this (absolute) count as structural zeros when
# validating block structure.
_ZERO_TOL = 0.0


def _group_slices(group_sizes: Sequence[int]) -> tuple[slice, ...]:
    out = []
    start = 0
    for m in group_sizes:
        out.append(slice(start, start + m))
        start += m
    return tuple(out)


@dataclass(frozen=True)
class GroupedNetwork:
    """Block-diagonal pair of sociomatrices over a fixed group partition.

    Parameters
    ----------
    group_sizes : tuple of int
        Number of individuals per group; the matrix order is their sum.
    W : ndarray
        Interaction matrix for outcomes, block diagonal, zero diagonal.
    M : ndarray
        Interaction matrix for disturbances, same block structure.  May be
        identical to ``W`` or a row-normalization of it.
    m_row_normalized : bool
        Declares that every nonzero row of ``M`` sums to one (checked).
    """

    group_sizes: tuple[int, ...]
    W: np.ndarray
    M: np.ndarray
    m_row_normalized: bool = False

    def __post_init__(self) -> None:
        sizes = tuple(int(m) for m in self.group_sizes)
        if not sizes or any(m < 1 for m in sizes):
            raise ValueError("group_sizes must be positive integers")
        object.__setattr__(self, "group_sizes", sizes)
        n = sum(sizes)
        W = np.asarray(self.W, dtype=float)
        M = np.asarray(self.M, dtype=float)
        for name, A in (("W", W), ("M", M)):
            if A.shape != (n, n):
                raise ValueError(f"{name} must be {n}x{n}, got {A.shape}")
            if np.any(np.abs(np.diag(A)) > _ZERO_TOL):
                raise ValueError(f"{name} has nonzero diagonal entries (self-links)")
        _check_block_structure(W, sizes, "W")
        _check_block_structure(M, sizes, "M")
        if self.m_row_normalized:
            rowsums = M.sum(axis=1)
            bad = np.abs(rowsums - 1.0) > 1e-10
            bad &= np.abs(M).sum(axis=1) > 0
            if np.any(bad):
                raise ValueError("M declared row-normalized but some nonzero row does not sum to 1")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "M", M)

    # -- basic geometry -----------------------------------------------------

    @property
    def n(self) -> int:
        return int(sum(self.group_sizes))

    @property
    def group_count(self) -> int:
        return len(self.group_sizes)

    @property
    def slices(self) -> tuple[slice, ...]:
        return _group_slices(self.group_sizes)

    def blocks_W(self) -> Iterator[np.ndarray]:
        for sl in self.slices:
            yield self.W[sl, sl]

    def blocks_M(self) -> Iterator[np.ndarray]:
        for sl in self.slices:
            yield self.M[sl, sl]

    # -- block-wise products ------------------------------------------------

    def lag_W(self, V: np.ndarray) -> np.ndarray:
        """W @ V computed block by block."""
        return _block_matmul(self.W, self.slices, V)

    def lag_M(self, V: np.ndarray) -> np.ndarray:
        """M @ V computed block by block."""
        return _block_matmul(self.M, self.slices, V)

    def group_ones(self) -> np.ndarray:
        """The n x r indicator matrix whose columns are the group ι vectors."""
        out = np.zeros((self.n, self.group_count))
        for r, sl in enumerate(self.slices):
            out[sl, r] = 1.0
        return out

    def expand_group_values(self, per_group: np.ndarray) -> np.ndarray:
        """Stack one scalar per group into a length-n vector (ι γ)."""
        per_group = np.asarray(per_group, dtype=float)
        if per_group.shape != (self.group_count,):
            raise ValueError("need one value per group")
        return np.repeat(per_group, self.group_sizes)


def _check_block_structure(A: np.ndarray, sizes: Sequence[int], name: str) -> None:
    mask = np.zeros(A.shape, dtype=bool)
    for sl in _group_slices(sizes):
        mask[sl, sl] = True
    if np.any(np.abs(A[~mask]) > _ZERO_TOL):
        raise ValueError(f"{name} has nonzero entries outside the diagonal blocks")


def _block_matmul(A: np.ndarray, slices: Sequence[slice], V: np.ndarray) -> np.ndarray:
    V = np.asarray(V, dtype=float)
    out = np.empty_like(V)
    for sl in slices:
        out[sl] = A[sl, sl] @ V[sl]
    return out


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------

def build_block_diagonal(blocks: Iterable[np.ndarray]) -> np.ndarray:
    """Assemble square blocks into one block-diagonal matrix.

    Every off-block entry of the result is exactly zero.  Non-square blocks
    are rejected with the offending index.
    """
    blocks = [np.asarray(b, dtype=float) for b in blocks]
    if not blocks:
        raise ValueError("need at least one block")
    for i, b in enumerate(blocks):
        if b.ndim != 2 or b.shape[0] != b.shape[1]:
            raise ValueError(f"block {i} is not square (shape {b.shape})")
    return scipy.linalg.block_diag(*blocks)


def row_normalize(W: np.ndarray) -> np.ndarray:
    """Scale each row with positive sum to sum one; zero rows stay zero.

    Entries must be nonnegative (weights), otherwise a row sum of zero would
    not mean an isolated node.
    """
    W = np.asarray(W, dtype=float)
    if np.any(W < 0):
        raise ValueError("row_normalize requires nonnegative entries")
    sums = W.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(sums > 0, W / np.where(sums > 0, sums, 1.0), 0.0)
    return out


def lee_group_network(group_sizes: Sequence[int]) -> GroupedNetwork:
    """Equal-weight within-group averaging matrices, w_ij = 1/(m_r - 1).

    The classic group-interaction design where every peer in the group gets
    the same weight; M is taken equal to W (already row-normalized whenever
    m_r >= 2).
    """
    blocks = []
    for m in group_sizes:
        m = int(m)
        if m < 1:
            raise ValueError("group sizes must be >= 1")
        if m == 1:
            blocks.append(np.zeros((1, 1)))
        else:
            blocks.append((np.ones((m, m)) - np.eye(m)) / (m - 1))
    W = build_block_diagonal(blocks)
    return GroupedNetwork(tuple(int(m) for m in group_sizes), W, W.copy(),
                          m_row_normalized=True)


def _ring_row(i: int, k: int, m: int) -> np.ndarray:
    """Row i of a size-m group: ones at positions i+1 .. i+k, wrapping mod m."""
    row = np.zeros(m)
    if k > 0:
        cols = (i + 1 + np.arange(k)) % m
        row[cols] = 1.0
    return row


def generate_mc_network(group_count: int, group_size: int, max_links: int,
                        seed: int | np.random.SeedSequence | np.random.Generator = 0,
                        ) -> GroupedNetwork:
    """Draw a random grouped network of the wrap-around out-link design.

    For each row i of each group, an out-degree k is drawn uniformly from
    {0, ..., max_links} and the k entries following i (wrapping around inside
    the group, never across groups) are set to 1.  k = 0 leaves the row all
    zeros (an individual with no successors).  M is the row-normalized W.

    Draw order is fixed for reproducibility: groups in index order, one
    uniform-integer vector per group covering its rows top to bottom.  The
    generator is numpy's default (PCG64) when an integer or SeedSequence is
    given, so identical seeds give bit-identical networks.
    """
    if group_size < 1:
        raise ValueError("group_size must be >= 1")
    if not 0 <= max_links < group_size:
        raise ValueError(
            f"max_links must lie in [0, group_size), got {max_links} with group_size {group_size}"
        )
    rng = np.random.default_rng(seed) if not isinstance(seed, np.random.Generator) else seed
    blocks = []
    for _ in range(group_count):
        degrees = rng.integers(0, max_links + 1, size=group_size)
        B = np.zeros((group_size, group_size))
        for i, k in enumerate(degrees):
            B[i] = _ring_row(i, int(k), group_size)
        blocks.append(B)
    W = build_block_diagonal(blocks)
    M = row_normalize(W)
    return GroupedNetwork(tuple([group_size] * group_count), W, M,
                          m_row_normalized=True)


# ---------------------------------------------------------------------------
# Panel data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PanelData:
    """Stacked outcomes and covariates aligned with a GroupedNetwork.

    ``x1`` holds own characteristics (enter directly), ``x2`` the
    characteristics whose network lags enter as contextual regressors.
    """

    y: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    group_sizes: tuple[int, ...]
    node_ids: tuple = field(default=(), compare=False)

    def __post_init__(self) -> None:
        y = np.asarray(self.y, dtype=float).ravel()
        x1 = np.atleast_2d(np.asarray(self.x1, dtype=float))
        x2 = np.atleast_2d(np.asarray(self.x2, dtype=float))
        if x1.shape[0] != y.size:
            x1 = x1.T
        if x2.shape[0] != y.size:
            x2 = x2.T
        n = sum(self.group_sizes)
        if y.size != n or x1.shape[0] != n or x2.shape[0] != n:
            raise ValueError("y, x1, x2 must all have one row per individual")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x1", x1)
        object.__setattr__(self, "x2", x2)
        object.__setattr__(self, "group_sizes", tuple(int(m) for m in self.group_sizes))

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def k1(self) -> int:
        return self.x1.shape[1]

    @property
    def k2(self) -> int:
        return self.x2.shape[1]

    def regressors(self, network: GroupedNetwork) -> np.ndarray:
        """Exogenous regressor block [X1, W X2] (own plus contextual)."""
        return np.column_stack([self.x1, network.lag_W(self.x2)])

    def covariate_base(self) -> np.ndarray:
        """Distinct raw covariate columns of (x1, x2), duplicates dropped.

        Used to seed instrument rosters; when x1 and x2 are the same draw
        (as in the simulation design) the base is that single column.
        """
        cols = [self.x1[:, j] for j in range(self.k1)]
        for j in range(self.k2):
            c = self.x2[:, j]
            if not any(np.array_equal(c, kept) for kept in cols):
                cols.append(c)
        return np.column_stack(cols)


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------
#
# Edge lists: columns (group_id, src, dst, weight).  Node files: columns
# (group_id, node_id, x1..., x2..., y).  Node ordering is always sorted by
# (group_id, node_id) so repeated loads give identical stacking.

def _read_csv_rows(path: str | Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty CSV") from None
        rows = [row for row in reader if row and any(cell.strip() for cell in row)]
    return [h.strip() for h in header], rows


def load_node_csv(path: str | Path) -> tuple[list[tuple], PanelData]:
    """Read a node file and return (ordered node keys, PanelData).

    Column names starting with ``x1`` form the own-characteristics block,
    those starting with ``x2`` the contextual block, and ``y`` the outcome.
    """
    header, rows = _read_csv_rows(path)
    lower = [h.lower() for h in header]
    try:
        gi = lower.index("group_id")
        ni = lower.index("node_id")
        yi = lower.index("y")
    except ValueError as exc:
        raise ValueError(f"{path}: node CSV needs group_id, node_id and y columns") from exc
    x1_idx = [j for j, h in enumerate(lower) if h.startswith("x1")]
    x2_idx = [j for j, h in enumerate(lower) if h.startswith("x2")]
    if not x1_idx or not x2_idx:
        raise ValueError(f"{path}: node CSV needs at least one x1* and one x2* column")

    def key(row: list[str]) -> tuple:
        return (_as_id(row[gi]), _as_id(row[ni]))

    rows.sort(key=key)
    keys = [key(r) for r in rows]
    if len(set(keys)) != len(keys):
        raise ValueError(f"{path}: duplicate (group_id, node_id) pairs")
    groups: list = []
    sizes: list[int] = []
    for g, _ in keys:
        if not groups or groups[-1] != g:
            groups.append(g)
            sizes.append(0)
        sizes[-1] += 1
    y = np.array([float(r[yi]) for r in rows])
    x1 = np.array([[float(r[j]) for j in x1_idx] for r in rows])
    x2 = np.array([[float(r[j]) for j in x2_idx] for r in rows])
    data = PanelData(y=y, x1=x1, x2=x2, group_sizes=tuple(sizes), node_ids=tuple(keys))
    return keys, data


def _as_id(cell: str):
    cell = cell.strip()
    try:
        return int(cell)
    except ValueError:
        return cell


def load_edge_csv(path: str | Path,
                  node_keys: Sequence[tuple] | None = None,
                  ) -> GroupedNetwork:
    """Read an edge list into a GroupedNetwork (M = row-normalized W).

    When ``node_keys`` is given (from a node file) it fixes the node set and
    ordering, so isolated nodes survive; otherwise the nodes are those that
    appear in the edge list, ordered by (group_id, node_id).
    """
    header, rows = _read_csv_rows(path)
    lower = [h.lower() for h in header]
    try:
        gi = lower.index("group_id")
        si = lower.index("src")
        di = lower.index("dst")
    except ValueError as exc:
        raise ValueError(f"{path}: edge CSV needs group_id, src, dst columns") from exc
    wi = lower.index("weight") if "weight" in lower else None

    edges = []
    for r in rows:
        g = _as_id(r[gi])
        s, d = _as_id(r[si]), _as_id(r[di])
        w = float(r[wi]) if wi is not None else 1.0
        edges.append((g, s, d, w))

    if node_keys is None:
        seen = {(g, s) for g, s, _, _ in edges} | {(g, d) for g, _, d, _ in edges}
        node_keys = sorted(seen)
    index = {key: i for i, key in enumerate(node_keys)}
    sizes: list[int] = []
    groups: list = []
    for g, _ in node_keys:
        if not groups or groups[-1] != g:
            groups.append(g)
            sizes.append(0)
        sizes[-1] += 1

    n = len(node_keys)
    W = np.zeros((n, n))
    for g, s, d, w in edges:
        try:
            i, j = index[(g, s)], index[(g, d)]
        except KeyError as exc:
            raise ValueError(f"{path}: edge refers to unknown node {exc} in group {g}") from None
        if i == j:
            warnings.warn(f"{path}: dropping self-link on node {(g, s)}")
            continue
        W[i, j] = w
    return GroupedNetwork(tuple(sizes), W, row_normalize(W), m_row_normalized=True)


def load_network(edges_path: str | Path,
                 nodes_path: str | Path | None = None,
                 m_edges_path: str | Path | None = None,
                 ) -> tuple[GroupedNetwork, PanelData | None]:
    """Load a network plus optional node data, with optional separate M edges."""
    data = None
    node_keys = None
    if nodes_path is not None:
        node_keys, data = load_node_csv(nodes_path)
    net = load_edge_csv(edges_path, node_keys)
    if m_edges_path is not None:
        m_net = load_edge_csv(m_edges_path, node_keys if node_keys is not None else None)
        if m_net.n != net.n or m_net.group_sizes != net.group_sizes:
            raise ValueError("M edge list does not match the W edge list's node set")
        net = GroupedNetwork(net.group_sizes, net.W, m_net.W, m_row_normalized=False)
    return net, data
