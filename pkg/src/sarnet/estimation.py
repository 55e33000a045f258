"""2SLS estimators for the network model: preliminary, regularized, bias-corrected.

All estimators work on the transformed structural equation (fixed effects
swept by J, disturbances whitened by R(rho) at a preliminary rho) with
Z = (W Y, X) as the regressor block, X = (X1, W X2).  The regularized
estimator solves

    delta_hat = (Z' R' P^alpha R Z)^{-1} Z' R' P^alpha R Y,

where P^alpha is the damped projection on the instrument space; with the
undamped projection this is classical 2SLS.  The bias-corrected variant is
the many-instrument estimator minus a plug-in estimate of its leading
instrument-count bias, in the spirit of Liu and Lee (2010).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .graphs import GroupedNetwork, PanelData
from .instruments import InstrumentSet
from .regularization import (Scheme, Spectrum, projector_trace_with, q_weights)
from .transforms import JProjector, j_projector, solve_blockwise

__all__ = [
    "EstimationResult",
    "SingularSystemError",
    "assemble_z",
    "preliminary_delta",
    "preliminary_rho",
    "regularized_2sls",
    "classical_2sls",
    "bias_corrected_2sls",
]

#: condition number beyond which a normal-equations solve is refused
CONDITION_LIMIT = 1e12


class SingularSystemError(np.linalg.LinAlgError):
    """A (near-)singular linear system, carrying its condition number."""

    def __init__(self, what: str, condition_number: float):
        self.condition_number = float(condition_number)
        super().__init__(
            f"{what} is numerically singular (condition number {condition_number:.3e})"
        )


@dataclass(frozen=True)
class EstimationResult:
    """Point estimates plus the diagnostics that produced them.

    ``std_errors`` come from the asymptotic form sigma2 * (Z'R'P R Z)^{-1}
    and do not account for the data-driven choice of the regularization
    parameter; treat them as indicative when alpha was selected.
    """

    delta: np.ndarray
    std_errors: np.ndarray
    rho_tilde: float
    sigma2_hat: float
    scheme: Scheme | None
    alpha_star: float | None
    tr_P: float
    condition_number: float
    k1: int
    k2: int
    n: int
    distinct_eigenvalue_count: int | None = None

    @property
    def lambda_hat(self) -> float:
        return float(self.delta[0])

    @property
    def beta1_hat(self) -> np.ndarray:
        return self.delta[1:1 + self.k1]

    @property
    def beta2_hat(self) -> np.ndarray:
        return self.delta[1 + self.k1:]


def assemble_z(data: PanelData, network: GroupedNetwork) -> np.ndarray:
    """Structural regressor block Z = (W Y, X1, W X2)."""
    return np.column_stack([network.lag_W(data.y), data.regressors(network)])


def _checked_solve(A: np.ndarray, b: np.ndarray, what: str) -> np.ndarray:
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise SingularSystemError(what, cond)
    return np.linalg.solve(A, b)


# ---------------------------------------------------------------------------
# Preliminary estimators
# ---------------------------------------------------------------------------

def preliminary_delta(data: PanelData, network: GroupedNetwork,
                      q1: InstrumentSet) -> np.ndarray:
    """Classical IV with a small fixed instrument set (no rho transform).

    delta_tilde = [Z'Q(Q'Q)^- Q'Z]^{-1} Z'Q(Q'Q)^- Q'Y, used to seed the
    method-of-moments rho estimate and the regularization plug-ins.  The
    instrument Gram is inverted in the generalized sense (regular graphs
    make M proportional to W and hence some roster columns exactly
    collinear, which is harmless for the projection); the second-stage
    sandwich must still be invertible.
    """
    Z = assemble_z(data, network)
    Q = q1.Q
    coeffs, *_ = np.linalg.lstsq(Q, np.column_stack([Z, data.y]), rcond=None)
    proj = Q @ coeffs
    A = Z.T @ proj[:, :-1]
    b = Z.T @ proj[:, -1]
    return _checked_solve(A, b, "2SLS sandwich")


def _build_moment_ops(network: GroupedNetwork, J: JProjector):
    """Operators for M1 = JWJ - cI, M2 = JMJ - cI, M3 = JMWJ - cI.

    Each c is tr(J A J)/tr(J); the recentering makes eps' M_i eps a valid
    moment at the true rho.  Returned as closures acting block by block.
    """
    trJ = J.trace
    ops = []
    specs = [
        (lambda V: network.lag_W(V),
         lambda sl: network.W[sl, sl]),
        (lambda V: network.lag_M(V),
         lambda sl: network.M[sl, sl]),
        (lambda V: network.lag_M(network.lag_W(V)),
         lambda sl: network.M[sl, sl] @ network.W[sl, sl]),
    ]
    for lag, block_of in specs:
        # tr(J A J) = sum_r tr(A_r J_r) over the small dense blocks
        total = sum(float(np.trace(block_of(sl) @ J.block(r)))
                    for r, sl in enumerate(J.slices))
        c = total / trJ

        def apply_op(v, lag=lag, c=c):
            return J.apply(lag(J.apply(v))) - c * v

        ops.append(apply_op)
    return ops


def _golden_section(f, lo: float, hi: float, tol: float = 1e-6) -> float:
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def preliminary_rho(data: PanelData, network: GroupedNetwork,
                    delta_tilde: np.ndarray,
                    bounds: tuple[float, float] = (-0.99, 0.99),
                    grid_step: float = 0.01,
                    J: JProjector | None = None) -> float:
    """Method-of-moments rho: minimize ||g(rho)||^2 over the bounded interval.

    g(rho) stacks eps(rho)' M_i eps(rho) for the three recentered quadratic
    moment matrices built from W, M and MW, with eps(rho) = J R(rho)(Y - Z
    delta_tilde).  A dense grid (step 0.01) locates the basin and a
    golden-section pass refines the minimizer to 1e-6.  A numerically zero
    residual makes the objective flat; by convention that returns 0 with a
    warning.
    """
    J = J if J is not None else j_projector(network.group_sizes, network.M)
    Z = assemble_z(data, network)
    e = data.y - Z @ np.asarray(delta_tilde, dtype=float)
    a = J.apply(e)
    b = J.apply(network.lag_M(e))
    if float(a @ a + b @ b) < 1e-24 * network.n:
        warnings.warn("rho objective is degenerate (residual ~ 0); returning 0")
        return 0.0
    ops = _build_moment_ops(network, J)
    # each moment is quadratic in rho: eps(rho) = a - rho b
    coefs = []
    for op in ops:
        Ma, Mb = op(a), op(b)
        coefs.append((float(a @ Ma), float(a @ Mb + b @ Ma), float(b @ Mb)))

    def objective(rho: float) -> float:
        total = 0.0
        for c0, c1, c2 in coefs:
            g = c0 - rho * c1 + rho * rho * c2
            total += g * g
        return total

    grid = np.arange(bounds[0], bounds[1] + grid_step / 2, grid_step)
    values = np.array([objective(r) for r in grid])
    best = int(np.argmin(values))
    lo = max(bounds[0], grid[best] - grid_step)
    hi = min(bounds[1], grid[best] + grid_step)
    return float(_golden_section(objective, lo, hi))


# ---------------------------------------------------------------------------
# Regularized and classical 2SLS
# ---------------------------------------------------------------------------

def _cochrane_orcutt(network: GroupedNetwork, rho: float, V: np.ndarray) -> np.ndarray:
    return V - rho * network.lag_M(V)


def _fit_r2sls(data: PanelData, network: GroupedNetwork, spectrum: Spectrum,
               scheme: Scheme, rho_tilde: float,
               J: JProjector | None = None):
    """Shared solve for the (regularized) 2SLS normal equations."""
    Z = assemble_z(data, network)
    rz = _cochrane_orcutt(network, rho_tilde, Z)
    ry = _cochrane_orcutt(network, rho_tilde, data.y)
    scheme = scheme.resolved(spectrum)
    q = q_weights(scheme, spectrum)
    U = spectrum.vectors.T @ rz
    uy = spectrum.vectors.T @ ry
    A = U.T @ (q[:, None] * U)
    rhs = U.T @ (q * uy)
    delta = _checked_solve(A, rhs, "regularized 2SLS normal equations")
    J = J if J is not None else j_projector(network.group_sizes, network.M)
    resid = data.y - Z @ delta
    eps_hat = J.apply(_cochrane_orcutt(network, rho_tilde, resid))
    sigma2 = float(eps_hat @ eps_hat) / network.n
    cov = sigma2 * np.linalg.inv(A)
    se = np.sqrt(np.maximum(np.diag(cov), 0.0))
    return delta, se, sigma2, A, scheme


def regularized_2sls(data: PanelData, network: GroupedNetwork,
                     instruments: InstrumentSet, scheme: Scheme,
                     rho_tilde: float,
                     spectrum: Spectrum | None = None,
                     J: JProjector | None = None) -> EstimationResult:
    """Damped-projection 2SLS of the transformed structural equation.

    The instrument projection is applied through the spectrum of Q Q'/n, so
    P^alpha is never materialized; the normal equations reduce to a
    (1 + k1 + k2) square solve.  sigma2 comes from the structural residuals
    at (delta_hat, rho_tilde) divided by n.
    """
    spectrum = spectrum if spectrum is not None else Spectrum.from_instruments(instruments)
    delta, se, sigma2, _, scheme = _fit_r2sls(
        data, network, spectrum, scheme, rho_tilde, J)
    tr_P = float(q_weights(scheme, spectrum).sum())
    return EstimationResult(
        delta=delta, std_errors=se, rho_tilde=float(rho_tilde),
        sigma2_hat=sigma2, scheme=scheme, alpha_star=scheme.alpha,
        tr_P=tr_P, condition_number=spectrum.condition_number,
        k1=data.k1, k2=data.k2, n=network.n,
    )


def classical_2sls(data: PanelData, network: GroupedNetwork,
                   instruments: InstrumentSet, rho_tilde: float,
                   spectrum: Spectrum | None = None,
                   J: JProjector | None = None) -> EstimationResult:
    """Ordinary-projection 2SLS: the principal-components scheme kept in full."""
    spectrum = spectrum if spectrum is not None else Spectrum.from_instruments(instruments)
    scheme = Scheme.principal_components(spectrum.rank)
    return regularized_2sls(data, network, instruments, scheme, rho_tilde,
                            spectrum=spectrum, J=J)


def bias_corrected_2sls(data: PanelData, network: GroupedNetwork,
                        instruments: InstrumentSet, rho_tilde: float,
                        lambda_tilde: float,
                        spectrum: Spectrum | None = None,
                        scheme: Scheme | None = None,
                        J: JProjector | None = None) -> EstimationResult:
    """Many-instrument 2SLS minus the plug-in estimate of its leading bias.

    The correction targets the endogenous-effect coordinate:

        b_hat = sigma2_hat * tr(P R W S^{-1} R^{-1}) * (Z'R'P R Z)^{-1} e_1,

    evaluated at the preliminary (rho_tilde, lambda_tilde) and the fitted
    sigma2 of the uncorrected estimator.
    """
    spectrum = spectrum if spectrum is not None else Spectrum.from_instruments(instruments)
    scheme = scheme if scheme is not None else Scheme.principal_components(spectrum.rank)
    scheme = scheme.resolved(spectrum)
    tr_P, _ = float(q_weights(scheme, spectrum).sum()), None
    if tr_P < 1e-8:
        raise ValueError("projector trace is ~0: bias correction undefined")
    delta, se, sigma2, A, scheme = _fit_r2sls(
        data, network, spectrum, scheme, rho_tilde, J)

    def apply_D(V: np.ndarray) -> np.ndarray:
        # R W S^{-1} R^{-1} V through per-group solves
        t = solve_blockwise(rho_tilde, network.M, network.group_sizes, V, "R(rho)")
        t = solve_blockwise(lambda_tilde, network.W, network.group_sizes, t, "S(lambda)")
        t = network.lag_W(t)
        return _cochrane_orcutt(network, rho_tilde, t)

    tr_PD = projector_trace_with(spectrum, scheme, apply_D)
    e1 = np.zeros(delta.size)
    e1[0] = 1.0
    correction = sigma2 * tr_PD * _checked_solve(A, e1, "bias-correction sandwich")
    return EstimationResult(
        delta=delta - correction, std_errors=se, rho_tilde=float(rho_tilde),
        sigma2_hat=sigma2, scheme=scheme, alpha_star=scheme.alpha,
        tr_P=tr_P, condition_number=spectrum.condition_number,
        k1=data.k1, k2=data.k2, n=network.n,
    )
