"""Shared domain types, parameter derivations and Bloch-sphere geometry.

All types here are immutable value objects; every function is pure, so the
whole module is safe for unrestricted concurrent use.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

#: Tolerance on the Bloch-vector norm.  Euler-Maruyama steps can push |q|
#: slightly above 1; norms in (1, 1 + NORM_TOL] are rescaled onto the sphere,
#: anything larger is treated as an integrator bug and raised.
NORM_TOL = 1e-9


class DomainError(ValueError):
    """Raised when an argument lies outside its physical domain."""


@dataclass(frozen=True)
class BlochState:
    """Qubit state as Bloch coordinates (x, y, z)."""

    x: float
    y: float = 0.0
    z: float = 0.0

    def __post_init__(self):
        n = math.sqrt(self.x**2 + self.y**2 + self.z**2)
        if n > 1.0 + NORM_TOL:
            raise DomainError(f"Bloch vector norm {n} exceeds 1 + {NORM_TOL}")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    @classmethod
    def from_array(cls, q) -> "BlochState":
        return cls(float(q[0]), float(q[1]), float(q[2]))


@dataclass(frozen=True)
class PolarState:
    """Pure state on the xz great circle, parametrized by an unwrapped angle.

    The angle lives on the real line; reduction mod 2*pi happens only at
    selection/comparison boundaries.
    """

    theta: float

    def to_bloch(self) -> BlochState:
        return polar_to_bloch(self.theta)


def measurement_time(gamma: float, eta: float) -> float:
    """Characteristic measurement time tau = 1/(2*gamma*eta).

    ``gamma`` is the ensemble-averaged dephasing rate of the channel and
    ``eta`` its quantum efficiency in (0, 1].
    """
    if gamma <= 0:
        raise DomainError(f"dephasing rate must be positive, got {gamma}")
    if not 0 < eta <= 1:
        raise DomainError(f"efficiency must lie in (0, 1], got {eta}")
    return 1.0 / (2.0 * gamma * eta)


def polar_to_bloch(theta: float) -> BlochState:
    """Map a polar angle to the pure state (sin(theta), 0, cos(theta))."""
    return BlochState(math.sin(theta), 0.0, math.cos(theta))


def bloch_norm(q: BlochState) -> float:
    """Euclidean norm of the Bloch vector (1 for pure, 0 for fully mixed)."""
    return math.sqrt(q.x**2 + q.y**2 + q.z**2)


@dataclass(frozen=True)
class ChannelConfig:
    """One continuous measurement channel.

    Parameters
    ----------
    axis_angle : float
        Angle of the measured axis in the xz plane (0 for the z channel).
    gamma : float
        Total measurement-induced dephasing rate of the channel.
    eta : float
        Quantum efficiency in (0, 1].
    """

    axis_angle: float
    gamma: float
    eta: float = 1.0

    def __post_init__(self):
        # delegates range checks
        measurement_time(self.gamma, self.eta)

    @property
    def tau(self) -> float:
        """Derived characteristic measurement time; never stored separately."""
        return measurement_time(self.gamma, self.eta)


@dataclass(frozen=True)
class QubitEnvironment:
    """Residual unitary detuning plus depolarization in the xz plane."""

    rabi_detuning: float = 0.0
    depolarization_rate: float = 0.0

    def __post_init__(self):
        if self.depolarization_rate < 0:
            raise DomainError("depolarization rate must be >= 0")


#: stability guard on the Euler-Maruyama step
MAX_DT_OVER_TAU = 0.05


@dataclass(frozen=True)
class SimConfig:
    """Full configuration of one stochastic simulation.

    ``channels`` is the (z-channel, phi-channel) pair.  ``t_final`` must be an
    integer number of steps ``dt``.
    """

    channels: tuple[ChannelConfig, ChannelConfig]
    dt: float
    t_final: float
    initial_state: BlochState = field(default_factory=lambda: BlochState(0, 0, 1))
    environment: QubitEnvironment = field(default_factory=QubitEnvironment)
    rng_seed: int = 0

    def __post_init__(self):
        if self.dt <= 0:
            raise DomainError("dt must be positive")
        n = self.t_final / self.dt
        if self.t_final <= 0 or abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise DomainError("t_final must be a positive integer multiple of dt")
        worst = max(1.0 / c.tau for c in self.channels)
        if self.dt * worst > MAX_DT_OVER_TAU + 1e-12:
            raise DomainError(
                f"dt*max(1/tau) = {self.dt * worst:.3g} exceeds the "
                f"stability guard {MAX_DT_OVER_TAU}"
            )

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps + 1)
