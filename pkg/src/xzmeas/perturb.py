"""Tree-level diagrammatic covariances for non-ideal XZ measurement.

The stochastic action splits into a free part (exponential propagators for x
and z) and an interaction part whose vertices carry one factor of the noise.
Keeping diagrams with no noise loops gives connected covariances that are
exact to first order in the quantum efficiencies, plus the decoherence-matrix
eigenvalues that organize the arbitrary-angle generalization.

The published z-z expression carries a first term with an extra 1/tau_z
relative to the z-x analogue; re-deriving the two-propagator diagrams (and
matching the small-time Ito variance rate (1 - z^2)^2/tau_z) fixes the
coefficient to -4*Gamma_z*eta_z*z_in^2*t_min.  The corrected form is the
default; the as-printed one stays available for the empirical comparison.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DomainError


@dataclass(frozen=True)
class TreeParams:
    """Rates, efficiencies and the (pure, xz-plane) initial coordinates."""

    gamma_x: float
    gamma_z: float
    eta_x: float
    eta_z: float
    x_in: float
    z_in: float

    def __post_init__(self):
        if self.gamma_x <= 0 or self.gamma_z <= 0:
            raise DomainError("rates must be positive")
        if not (0 <= self.eta_x <= 1 and 0 <= self.eta_z <= 1):
            raise DomainError("efficiencies must lie in [0, 1]")
        if self.x_in**2 + self.z_in**2 > 1 + 1e-12:
            raise DomainError("initial coordinates must lie inside the circle")


@dataclass(frozen=True)
class EigenDecomposition:
    """Eigenvalues of the 2x2 decoherence matrix and its discriminant."""

    lambda_plus: float
    lambda_minus: float
    xi: float


def eig_decoherence(gamma_z: float, gamma_phi: float, phi: float) -> EigenDecomposition:
    """Eigen-decomposition of the xz dephasing matrix for axis angle phi."""
    if gamma_z <= 0 or gamma_phi <= 0:
        raise DomainError("rates must be positive")
    xi = gamma_phi**2 + gamma_z**2 + 2 * gamma_phi * gamma_z * math.cos(2 * phi)
    root = math.sqrt(max(xi, 0.0))
    half = -(gamma_z + gamma_phi) / 2
    return EigenDecomposition(
        lambda_plus=half + root / 2, lambda_minus=half - root / 2, xi=xi
    )


def mean_tree(coord: str, t, p: TreeParams):
    """Free propagation of the initial vertex: the tree-level mean."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("t must be >= 0")
    if coord == "x":
        out = p.x_in * np.exp(-p.gamma_z * t)
    elif coord == "z":
        out = p.z_in * np.exp(-p.gamma_x * t)
    else:
        raise DomainError(f"unknown coordinate {coord!r}")
    return out if out.ndim else float(out)


def cov_tree(
    kind: str,
    t1,
    t2,
    p: TreeParams,
    zz_first_term: str = "corrected",
) -> float | np.ndarray:
    """Tree-level connected covariance; kind in {zx, zz, xx}.

    ``zz_first_term`` selects "corrected" (default) or "as_printed" for the
    leading z-z term (see module notes).
    """
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    if np.any(t1 < 0) or np.any(t2 < 0):
        raise DomainError("times must be >= 0")
    tmin = np.minimum(t1, t2)
    gx, gz = p.gamma_x, p.gamma_z
    ex, ez = p.eta_x, p.eta_z
    xi, zi = p.x_in, p.z_in
    if kind == "zx":
        out = np.exp(-gx * t1 - gz * t2) * (
            -2 * xi * zi * (gz * ez + gx * ex) * tmin
            + (xi * zi**3 * gz * ez / gx) * (1 - np.exp(-2 * gx * tmin))
            + (zi * xi**3 * gx * ex / gz) * (1 - np.exp(-2 * gz * tmin))
        )
    elif kind in ("zz", "xx"):
        if kind == "xx":
            gx, gz, ex, ez, xi, zi = gz, gx, ez, ex, zi, xi
        if zz_first_term == "corrected":
            first = -4 * gz * ez * zi**2 * tmin
        elif zz_first_term == "as_printed":
            first = -4 * gz * ez * zi**2 * tmin / (1.0 / (2 * gz * ez))
        else:
            raise DomainError(f"unknown zz_first_term {zz_first_term!r}")
        out = np.exp(-gx * (t1 + t2)) * (
            first
            + (gz * ez / gx) * (np.exp(2 * gx * tmin) - 1)
            + (xi**2 * zi**2 * gx * ex / gz) * (1 - np.exp(-2 * gz * tmin))
            + (zi**4 * gz * ez / gx) * (1 - np.exp(-2 * gx * tmin))
        )
    else:
        raise DomainError(f"unknown covariance kind {kind!r}")
    return out if out.ndim else float(out)


def var_tree(coord: str, t, p: TreeParams, zz_first_term: str = "corrected"):
    """Tree-level variance: the equal-time, equal-coordinate covariance."""
    if coord not in ("x", "z"):
        raise DomainError(f"unknown coordinate {coord!r}")
    return cov_tree(coord * 2, t, t, p, zz_first_term=zz_first_term)
