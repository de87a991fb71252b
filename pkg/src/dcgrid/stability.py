"""Small-signal stability around a load-flow equilibrium.

Each constant power load linearizes to a negative incremental resistance
r_i = -(u_i*)^2 / P_i. Folding the load block through those resistances gives
the effective source-side admittance

    Y_eq = Y_SS - Y_SL (Y_LL + R_L^-1)^-1 Y_LS,

and the closed-loop Jacobian of the droop-controlled converters (virtual
inductance X = b*K) is

    J2 = [[-I/b, -K^-1/b], [C^-1, -C^-1 Y_eq]].

The Hurwitz verdict comes from the spectral abscissa of J2. A separate
conservative certificate checks the two positive-definiteness conditions
C + b*Y_eq > 0 and K^-1 + b*Y_eq > 0, and b_max computes the largest damping
coefficient those conditions admit via eigenvalue bounds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NumericalError
from .linalg import min_symmetric_eigenvalue
from .network import AdmittancePartition, NetworkSpec, build_admittance

__all__ = [
    "StabilityReport",
    "cpl_linearize",
    "effective_admittance",
    "jacobian",
    "sufficient_stability",
    "b_max",
    "analyze_stability",
]

_ABSCISSA_MARGIN = 1e-9


@dataclass(frozen=True)
class StabilityReport:
    r_load: np.ndarray          # incremental CPL resistances, ohms (+inf where P=0)
    g_load: np.ndarray          # 1/r_load with exact zeros where P=0, siemens
    Y_eq: np.ndarray            # effective source-side admittance, n x n
    lambda1: float              # smallest eigenvalue of Y_eq
    spectrum: np.ndarray        # 2n eigenvalues of J2
    abscissa: float             # max real part of the spectrum
    sufficient_holds: bool      # conservative positive-definiteness certificate
    b0: float                   # largest b the certificate admits (inf if lambda1 >= 0)
    b: float                    # damping coefficient the report was evaluated at
    verdict: str                # stable | unstable

    def __post_init__(self):
        for arr in (self.r_load, self.g_load, self.Y_eq, self.spectrum):
            arr.setflags(write=False)

    def to_dict(self) -> dict:
        return {
            "r_load": [None if np.isinf(r) else r for r in self.r_load.tolist()],
            "g_load": self.g_load.tolist(),
            "Y_eq": self.Y_eq.tolist(),
            "lambda1": self.lambda1,
            "spectrum": [[z.real, z.imag] for z in self.spectrum.tolist()],
            "abscissa": self.abscissa,
            "sufficient_holds": bool(self.sufficient_holds),
            "b0": None if np.isinf(self.b0) else self.b0,
            "b": self.b,
            "verdict": self.verdict,
        }


def cpl_linearize(u_star: np.ndarray, P: np.ndarray) -> np.ndarray:
    """Incremental load resistances r_i = -(u_i*)^2 / P_i (+inf for P_i = 0)."""
    u_star = np.asarray(u_star, dtype=float)
    P = np.asarray(P, dtype=float)
    if np.any((u_star == 0) & (P > 0)):
        raise DomainError("zero load voltage with nonzero power")
    if np.any(u_star <= 0):
        raise DomainError("load voltages must be positive")
    r = np.full(u_star.shape, np.inf)
    on = P > 0
    r[on] = -(u_star[on] ** 2) / P[on]
    return r


def effective_admittance(partition: AdmittancePartition, r_load: np.ndarray) -> np.ndarray:
    """Fold the linearized loads into the source nodes.

    Y_eq = Y_SS - Y_SL (Y_LL + R_L^-1)^-1 Y_LS with R_L^-1 carrying exact
    zeros for open-circuit (P=0) loads. Symmetric by construction; an exactly
    singular inner matrix means the linearization is invalid at this point.
    """
    r_load = np.asarray(r_load, dtype=float)
    g = np.where(np.isinf(r_load), 0.0, 1.0 / r_load)
    inner = partition.Y_LL + np.diag(g)
    try:
        Y_eq = partition.Y_SS - partition.Y_SL @ np.linalg.solve(inner, partition.Y_LS)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("linearization invalid at this point") from exc
    return 0.5 * (Y_eq + Y_eq.T)


def jacobian(Y_eq: np.ndarray, k: np.ndarray, C: np.ndarray, b: float) -> np.ndarray:
    """Closed-loop Jacobian J2 = [[-I/b, -K^-1/b], [C^-1, -C^-1 Y_eq]]."""
    k = np.asarray(k, dtype=float)
    C = np.asarray(C, dtype=float)
    if b <= 0 or np.any(k <= 0) or np.any(C <= 0):
        raise DomainError("b, virtual resistances, and capacitances must be positive")
    n = k.shape[0]
    Cinv = np.diag(1.0 / C)
    return np.block([
        [-np.eye(n) / b, -np.diag(1.0 / k) / b],
        [Cinv, -Cinv @ Y_eq],
    ])


def _posdef(A: np.ndarray) -> bool:
    # margin-based test per the analyzer contract, not a bare factorization
    return min_symmetric_eigenvalue(A) > 1e-12 * np.max(np.abs(A))


def sufficient_stability(Y_eq: np.ndarray, C: np.ndarray, k: np.ndarray, b: float) -> bool:
    """Conservative certificate: C + b*Y_eq > 0 and K^-1 + b*Y_eq > 0.

    Sufficient for the Hurwitz property, never necessary; the gap between
    this flag and the spectral abscissa is expected and reported separately.
    """
    C = np.asarray(C, dtype=float)
    k = np.asarray(k, dtype=float)
    return _posdef(np.diag(C) + b * Y_eq) and _posdef(np.diag(1.0 / k) + b * Y_eq)


def b_max(Y_eq: np.ndarray, C: np.ndarray, k: np.ndarray) -> float:
    """Largest damping coefficient the sufficient conditions certify.

    b0 = min(-C_min/lambda1, -1/(lambda1*k_max)) when lambda1(Y_eq) < 0;
    +inf when Y_eq is positive semidefinite (no CPL destabilization at any b).
    """
    C = np.asarray(C, dtype=float)
    k = np.asarray(k, dtype=float)
    lam1 = min_symmetric_eigenvalue(Y_eq)
    if lam1 >= -1e-12 * np.max(np.abs(Y_eq)):  # PSD up to roundoff
        return np.inf
    return float(min(-C.min() / lam1, -1.0 / (lam1 * k.max())))


def analyze_stability(spec: NetworkSpec, u_load: np.ndarray,
                      b: float | None = None) -> StabilityReport:
    """Linearize the grid at an equilibrium and assemble the full report.

    The Hurwitz verdict uses the spectral abscissa of J2 with a 1e-9 margin;
    the positive-definiteness certificate and its b ceiling are reported
    alongside so the conservatism of the certificate stays visible.
    """
    if b is None:
        b = spec.control.b
    partition = build_admittance(spec)
    P = spec.p_vector()
    k = spec.k_diag()
    C = spec.c_diag()
    r = cpl_linearize(u_load, P)
    Y_eq = effective_admittance(partition, r)
    lam1 = min_symmetric_eigenvalue(Y_eq)
    J2 = jacobian(Y_eq, k, C, b)
    spectrum = np.linalg.eigvals(J2)
    abscissa = float(spectrum.real.max())
    return StabilityReport(
        r_load=r,
        g_load=np.where(np.isinf(r), 0.0, 1.0 / r),
        Y_eq=Y_eq,
        lambda1=float(lam1),
        spectrum=spectrum,
        abscissa=abscissa,
        sufficient_holds=sufficient_stability(Y_eq, C, k, b),
        b0=b_max(Y_eq, C, k),
        b=float(b),
        verdict="stable" if abscissa < -_ABSCISSA_MARGIN else "unstable",
    )
