"""Regularized first-stage projection built on the instrument spectrum.

Let nu_1 >= nu_2 >= ... be the eigenvalues of Q Q'/n with orthonormal
eigenvectors psi_j.  The damped projector replaces the ordinary projection
onto col(Q) by

    P^alpha e = sum_j q(alpha, nu_j^2) <e, psi_j> psi_j,

with scheme-specific weights in [0, 1]:

    Tikhonov (ridge)      q = nu^2 / (nu^2 + alpha)
    Landweber-Fridman     q = 1 - (1 - c nu^2)^(1/alpha),  1/alpha iterations
    Principal components  q = 1{j <= 1/alpha}

Small alpha means light damping; the PC scheme with all components (and the
LF scheme in its many-iteration limit) recovers the ordinary projection, so
classical 2SLS is the undamped special case.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .instruments import InstrumentSet

__all__ = ["Spectrum", "Scheme", "q_weight", "q_weights", "apply_projector",
           "projector_traces", "projector_matrix", "projector_diagonal",
           "projector_trace_with"]

#: eigenvalues below this times the largest are treated as zero and excluded
EIGENVALUE_CUTOFF = 1e-12

_KINDS = ("T", "LF", "PC")


@dataclass(frozen=True)
class Spectrum:
    """Nonzero eigenpairs of Q Q'/n.

    ``eigenvalues`` are descending and strictly positive after the relative
    cutoff; ``vectors`` holds the matching orthonormal psi_j as columns.
    """

    eigenvalues: np.ndarray
    vectors: np.ndarray
    n: int

    def __post_init__(self) -> None:
        vals = np.asarray(self.eigenvalues, dtype=float)
        vecs = np.asarray(self.vectors, dtype=float)
        if vecs.shape != (self.n, vals.size):
            raise ValueError("vectors must be n x (number of eigenvalues)")
        if np.any(np.diff(vals) > 0):
            raise ValueError("eigenvalues must be sorted descending")
        object.__setattr__(self, "eigenvalues", vals)
        object.__setattr__(self, "vectors", vecs)

    @property
    def rank(self) -> int:
        return self.eigenvalues.size

    @property
    def nu_max(self) -> float:
        return float(self.eigenvalues[0]) if self.rank else 0.0

    @property
    def condition_number(self) -> float:
        """nu_1 / nu_min over the retained (nonzero) spectrum."""
        if self.rank == 0:
            return math.inf
        return float(self.eigenvalues[0] / self.eigenvalues[-1])

    @classmethod
    def from_instruments(cls, inst: InstrumentSet | np.ndarray,
                         cutoff: float = EIGENVALUE_CUTOFF) -> "Spectrum":
        """Eigendecompose Q Q'/n, working in whichever dimension is smaller.

        For m < n/4 instruments the m x m Gram K = Q'Q/n is decomposed and
        the n-dimensional eigenvectors recovered through psi = Q phi /
        sqrt(n nu); otherwise Q Q'/n is decomposed directly.  Both routes
        share their nonzero spectrum.
        """
        Q = inst.Q if isinstance(inst, InstrumentSet) else np.asarray(inst, dtype=float)
        Q = np.atleast_2d(Q)
        n, m = Q.shape
        if m < n / 4:
            K = Q.T @ Q / n
            vals, phi = np.linalg.eigh(K)
            vals, phi = vals[::-1], phi[:, ::-1]
            keep = vals > max(cutoff * max(vals[0], 0.0), 0.0)
            vals, phi = vals[keep], phi[:, keep]
            psi = (Q @ phi) / np.sqrt(n * vals)
        else:
            G = Q @ Q.T / n
            vals, psi = np.linalg.eigh(G)
            vals, psi = vals[::-1], psi[:, ::-1]
            keep = vals > max(cutoff * max(vals[0], 0.0), 0.0)
            vals, psi = vals[keep], psi[:, keep]
        if vals.size == 0:
            raise ValueError("instrument matrix has no nonzero spectrum")
        return cls(eigenvalues=vals, vectors=psi, n=n)


@dataclass(frozen=True)
class Scheme:
    """Damping scheme: kind in {T, LF, PC} plus its tuning parameter.

    ``alpha`` is the Tikhonov penalty for T and the reciprocal of the
    iteration / component count for LF / PC.  ``c`` is the LF step size,
    required to satisfy 0 < c nu_1^2 < 1; when left unset it defaults to
    0.9 / nu_1^2 at the point of use.
    """

    kind: str
    alpha: float
    c: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise ValueError(f"kind must be one of {_KINDS}, got {self.kind!r}")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.kind in ("LF", "PC"):
            inv = 1.0 / self.alpha
            if abs(inv - round(inv)) > 1e-9 or round(inv) < 1:
                raise ValueError(f"1/alpha must be a positive integer for {self.kind}")
        if self.kind == "LF" and self.c is not None and not self.c > 0:
            raise ValueError("LF step size c must be positive")

    @property
    def steps(self) -> int:
        """Iteration count (LF) or component count (PC)."""
        if self.kind == "T":
            raise ValueError("Tikhonov has no integer step count")
        return int(round(1.0 / self.alpha))

    @classmethod
    def tikhonov(cls, alpha: float) -> "Scheme":
        return cls("T", float(alpha))

    @classmethod
    def landweber(cls, iterations: int, c: float | None = None) -> "Scheme":
        return cls("LF", 1.0 / int(iterations), c)

    @classmethod
    def principal_components(cls, count: int) -> "Scheme":
        return cls("PC", 1.0 / int(count))

    def resolved(self, spectrum: Spectrum) -> "Scheme":
        """Fill in the default LF step size c = 0.9 / nu_1^2 for this fixture."""
        if self.kind == "LF" and self.c is None:
            return replace(self, c=0.9 / spectrum.nu_max ** 2)
        return self


def q_weight(scheme: Scheme, nu: float, position: int | None = None) -> float:
    """Scalar damping weight q(alpha, nu^2) in [0, 1].

    PC weights depend on the rank ``position`` (1-based, descending
    eigenvalue order) rather than on nu itself.
    """
    nu2 = float(nu) ** 2
    if scheme.kind == "T":
        return nu2 / (nu2 + scheme.alpha)
    if scheme.kind == "LF":
        if scheme.c is None:
            raise ValueError("LF weight needs the step size c (use Scheme.resolved)")
        if scheme.c * nu2 >= 1.0:
            raise ValueError(f"LF requires c nu^2 < 1, got {scheme.c * nu2:.6g}")
        return 1.0 - (1.0 - scheme.c * nu2) ** scheme.steps
    if position is None:
        raise ValueError("PC weight needs the eigenvalue's rank position")
    return 1.0 if position <= scheme.steps else 0.0


def q_weights(scheme: Scheme, spectrum: Spectrum) -> np.ndarray:
    """Vector of damping weights over the retained spectrum."""
    scheme = scheme.resolved(spectrum)
    nu2 = spectrum.eigenvalues ** 2
    if scheme.kind == "T":
        return nu2 / (nu2 + scheme.alpha)
    if scheme.kind == "LF":
        cn = scheme.c * nu2
        if np.any(cn >= 1.0):
            raise ValueError(f"LF requires c nu^2 < 1, got max {cn.max():.6g}")
        return 1.0 - (1.0 - cn) ** scheme.steps
    j = np.arange(1, spectrum.rank + 1)
    return (j <= scheme.steps).astype(float)


def apply_projector(spectrum: Spectrum, scheme: Scheme, e: np.ndarray) -> np.ndarray:
    """P^alpha e = sum_j q_j <e, psi_j> psi_j for a vector or matrix e."""
    e = np.asarray(e, dtype=float)
    if e.shape[0] != spectrum.n:
        raise ValueError(f"e must have length {spectrum.n}")
    q = q_weights(scheme, spectrum)
    coef = spectrum.vectors.T @ e
    if coef.ndim == 1:
        return spectrum.vectors @ (q * coef)
    return spectrum.vectors @ (q[:, None] * coef)


def projector_traces(spectrum: Spectrum, scheme: Scheme) -> tuple[float, float]:
    """(tr P^alpha, tr (P^alpha)^2) = (sum q_j, sum q_j^2)."""
    q = q_weights(scheme, spectrum)
    return float(q.sum()), float((q ** 2).sum())


def projector_diagonal(spectrum: Spectrum, scheme: Scheme) -> np.ndarray:
    """Diagonal entries P^alpha_ii = sum_j q_j psi_ji^2 (smoother leverages)."""
    q = q_weights(scheme, spectrum)
    return (spectrum.vectors ** 2) @ q


def projector_matrix(spectrum: Spectrum, scheme: Scheme) -> np.ndarray:
    """Dense n x n P^alpha; for small fixtures and tests only."""
    q = q_weights(scheme, spectrum)
    return (spectrum.vectors * q) @ spectrum.vectors.T


def projector_trace_with(spectrum: Spectrum, scheme: Scheme,
                         apply_A: Callable[[np.ndarray], np.ndarray]) -> float:
    """tr(P^alpha A) = sum_j q_j psi_j' A psi_j without materializing either.

    ``apply_A`` maps an n x r matrix to A times it, column by column.
    """
    q = q_weights(scheme, spectrum)
    Apsi = apply_A(spectrum.vectors)
    return float(np.einsum("ij,ij,j->", spectrum.vectors, Apsi, q))
