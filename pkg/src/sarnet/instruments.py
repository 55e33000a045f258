"""Instrument matrices for the network 2SLS estimators.

The exogenous variation lives in network lags of the covariates (peers' and
peers-of-peers' characteristics), the Bonacich-type centrality columns
W^j iota, and, when disturbances are spatially correlated, the M-lagged copy
of all of the above.  The infinite family is truncated at a chosen lag order;
the fixed-effect annihilator J is always applied last so the instruments are
orthogonal to the swept-out group effects by construction (J Q = Q).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .graphs import GroupedNetwork
from .identification import AsymmetricMatrixError, distinct_eigenvalues
from .transforms import JProjector, j_projector

__all__ = ["InstrumentSet", "build_instruments", "normalize_columns",
           "q1_roster", "q2_roster"]

#: columns whose largest absolute entry falls below this times the largest
#: entry of any column are dropped as numerically zero (underflowed high
#: powers, covariates constant within groups after the J projection)
ZERO_COLUMN_RTOL = 1e-13

_NORMALIZATIONS = ("none", "unit-variance", "standardized")


@dataclass(frozen=True)
class InstrumentSet:
    """Instrument matrix with per-column provenance labels."""

    Q: np.ndarray
    labels: tuple[str, ...]
    normalization: str = "none"

    def __post_init__(self) -> None:
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        if Q.shape[1] != len(self.labels):
            raise ValueError("one label per column required")
        if self.normalization not in _NORMALIZATIONS:
            raise ValueError(f"unknown normalization {self.normalization!r}")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    @property
    def n_columns(self) -> int:
        return self.Q.shape[1]

    def with_extra_column(self, col: np.ndarray, label: str) -> "InstrumentSet":
        return InstrumentSet(np.column_stack([self.Q, col]),
                             self.labels + (label,), self.normalization)


def _drop_zero_columns(cols: list[np.ndarray], labels: list[str]
                       ) -> tuple[list[np.ndarray], list[str]]:
    peaks = [float(np.max(np.abs(c))) for c in cols]
    scale = max(peaks) if peaks else 0.0
    if scale <= 0.0:
        raise ValueError("all instrument columns are numerically zero")
    kept_cols, kept_labels = [], []
    for c, lab, peak in zip(cols, labels, peaks):
        if peak <= ZERO_COLUMN_RTOL * scale:
            warnings.warn(f"dropping numerically zero instrument column {lab!r}")
            continue
        kept_cols.append(c)
        kept_labels.append(lab)
    return kept_cols, kept_labels


def build_instruments(network: GroupedNetwork, X: np.ndarray,
                      order: int | None = None,
                      include_bonacich: bool = True,
                      include_M_lags: bool = True,
                      J: JProjector | None = None) -> InstrumentSet:
    """Truncated instrument family J [lags of X, centrality columns, X, M copy].

    Columns, before J: W X, ..., W^order X, then (optionally) W iota, ...,
    W^order iota, then X itself, then (optionally) the M-premultiplied copy
    of everything so far.  ``order=None`` picks d-1 where d is the number of
    distinct eigenvalues of a symmetric W (powers beyond that add no span, by
    Cayley-Hamilton) and falls back to 10 for asymmetric W.  Numerically zero
    columns (underflowed high powers, covariates constant within groups) are
    dropped with a warning carrying their label.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] != network.n:
        X = X.T
    if X.shape[0] != network.n:
        raise ValueError("X rows must match the network order")
    if order is None:
        try:
            count, _ = distinct_eigenvalues(network.W)
            order = max(count - 1, 1)
        except AsymmetricMatrixError:
            order = 10
    if order < 1:
        raise ValueError("order must be >= 1")

    cols: list[np.ndarray] = []
    labels: list[str] = []
    powX = X
    for j in range(1, order + 1):
        powX = network.lag_W(powX)
        for c in range(X.shape[1]):
            cols.append(powX[:, c])
            labels.append(f"W^{j}.X[{c}]")
    if include_bonacich:
        # iota is the block-diagonal matrix of per-group ones vectors, so
        # every power contributes one centrality column per group
        V = network.group_ones()
        for j in range(1, order + 1):
            V = network.lag_W(V)
            for r in range(V.shape[1]):
                cols.append(V[:, r])
                labels.append(f"W^{j}.iota[{r}]")
    for c in range(X.shape[1]):
        cols.append(X[:, c])
        labels.append(f"X[{c}]")
    if include_M_lags:
        base = list(cols)
        base_labels = list(labels)
        for c, lab in zip(base, base_labels):
            cols.append(network.lag_M(c))
            labels.append(f"M.{lab}")

    J = J if J is not None else j_projector(network.group_sizes, network.M)
    cols = [J.apply(c) for c in cols]
    labels = [f"J.{lab}" for lab in labels]
    cols, labels = _drop_zero_columns(cols, labels)
    return InstrumentSet(np.column_stack(cols), tuple(labels))


def normalize_columns(inst: InstrumentSet, mode: str) -> InstrumentSet:
    """Rescale columns to unit sample variance; ``standardized`` also demeans.

    Tikhonov-style damping is not scale invariant, so columns with very
    different variances (a squared network lag versus a centrality count)
    would be regularized unevenly without this.  Zero-variance columns are
    dropped with their label.
    """
    if mode == "none":
        return inst
    if mode not in _NORMALIZATIONS:
        raise ValueError(f"unknown normalization {mode!r}")
    if inst.n_columns == 0:
        raise ValueError("empty instrument set")
    cols, labels = [], []
    for j, lab in enumerate(inst.labels):
        c = inst.Q[:, j]
        sd = float(np.std(c, ddof=1))
        if sd <= 0.0 or not np.isfinite(sd):
            warnings.warn(f"dropping zero-variance instrument column {lab!r}")
            continue
        if mode == "standardized":
            c = c - c.mean()
        cols.append(c / sd)
        labels.append(lab)
    if not cols:
        raise ValueError("all instrument columns had zero variance")
    return InstrumentSet(np.column_stack(cols), tuple(labels), mode)


def q1_roster(network: GroupedNetwork, base: np.ndarray,
              J: JProjector | None = None) -> InstrumentSet:
    """Small roster J [base, W base, M base, M W base], duplicates dropped.

    ``base`` is normally the regressor block (X1, W X2); when own and
    contextual characteristics share columns the blocks overlap, so exact
    duplicate columns are removed (keeping the first occurrence) to keep the
    Gram matrix invertible.
    """
    base = np.atleast_2d(np.asarray(base, dtype=float))
    if base.shape[0] != network.n:
        base = base.T
    J = J if J is not None else j_projector(network.group_sizes, network.M)
    Wb = network.lag_W(base)
    blocks = [base, Wb, network.lag_M(base), network.lag_M(Wb)]
    tags = ["X", "W.X", "M.X", "M.W.X"]
    cols, labels = [], []

    def is_duplicate(col: np.ndarray) -> bool:
        scale = float(np.linalg.norm(col))
        for kept in cols:
            if np.linalg.norm(col - kept) <= 1e-12 * max(scale, np.linalg.norm(kept)):
                return True
        return False

    for blk, tag in zip(blocks, tags):
        for c in range(blk.shape[1]):
            col = blk[:, c]
            if is_duplicate(col):
                continue
            cols.append(col)
            labels.append(f"J.{tag}[{c}]")
    cols = [J.apply(c) for c in cols]
    cols, labels = _drop_zero_columns(cols, labels)
    return InstrumentSet(np.column_stack(cols), tuple(labels))


def q2_roster(network: GroupedNetwork, base: np.ndarray,
              J: JProjector | None = None) -> InstrumentSet:
    """The q1 roster augmented with the centrality block J W iota.

    iota is the block-diagonal matrix of per-group ones vectors, so this adds
    one out-degree column per group; the instrument count grows with the
    number of groups (the many-instruments regime).
    """
    J = J if J is not None else j_projector(network.group_sizes, network.M)
    q1 = q1_roster(network, base, J)
    V = J.apply(network.lag_W(network.group_ones()))
    cols = list(q1.Q.T)
    labels = list(q1.labels)
    for r in range(V.shape[1]):
        cols.append(V[:, r])
        labels.append(f"J.W.iota[{r}]")
    cols, labels = _drop_zero_columns(cols, labels)
    return InstrumentSet(np.column_stack(cols), tuple(labels))
