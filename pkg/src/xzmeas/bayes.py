"""Discrete-time quantum Bayesian state update from readout records.

Replicates the experimental reconstruction pipeline: per step, a Gaussian
Bayesian update for the z channel, the same update for the x channel
conjugated by a +-pi/2 rotation about y, then the exact environmental map
(residual Rabi rotation composed with uniform depolarization in the xz
plane).  Off-diagonal elements pick up an extra damping exp[-(Gamma -
1/(2 tau)) dt], which vanishes for ideal measurements.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import BlochState, ChannelConfig, QubitEnvironment, SimConfig
from .sde import ReadoutRecord, Trajectory

#: positivity slack before a reconstruction error is raised
POSITIVITY_TOL = 1e-10


class ReconstructionError(RuntimeError):
    """Positivity violated beyond tolerance during a Bayesian update."""


@dataclass(frozen=True)
class DensityMatrix2:
    """Single-qubit density matrix in the sigma_z eigenbasis.

    ``coherence`` is the 01 element; populations p0 (z = +1) and p1 sum to 1.
    """

    p0: float
    p1: float
    coherence: complex

    def __post_init__(self):
        if abs(self.p0 + self.p1 - 1.0) > 1e-12:
            raise ReconstructionError("trace differs from 1 beyond 1e-12")
        if abs(self.coherence) ** 2 > self.p0 * self.p1 + 1e-12:
            raise ReconstructionError("coherence violates positivity")

    def to_bloch(self) -> BlochState:
        return BlochState(
            2 * self.coherence.real, -2 * self.coherence.imag, self.p0 - self.p1
        )

    @classmethod
    def from_bloch(cls, q: BlochState) -> "DensityMatrix2":
        return cls((1 + q.z) / 2, (1 - q.z) / 2, complex(q.x, -q.y) / 2)


def _measure_z_arr(x, y, z, r, dt: float, channel: ChannelConfig):
    """Vectorized z-axis Bayesian update in Bloch coordinates.

    Population reweighting by exp[-(r -+ 1)^2 dt / 2 tau] reduces to the tanh
    form below; the (4 pi tau / dt)^(-1/2) operator prefactor cancels in the
    ratio and is omitted.
    """
    tau = channel.tau
    a = np.asarray(r) * dt / tau
    ca, sa = np.cosh(a), np.sinh(a)
    denom = ca + z * sa
    extra = math.exp(-(channel.gamma - 1.0 / (2 * tau)) * dt)
    damp = extra / denom
    return x * damp, y * damp, (z * ca + sa) / denom


def _measure_x_arr(x, y, z, r, dt: float, channel: ChannelConfig):
    """x-axis update: conjugate the z-axis update by the -pi/2 rotation about y."""
    # (x, y, z) -> (-z, y, x), z-type update, rotate back
    xr, yr, zr = _measure_z_arr(-z, y, x, r, dt, channel)
    return zr, yr, -xr


def _project_positivity(x, y, z, where: str):
    """Rescale (x, y) onto the sphere for rounding-level violations."""
    n2 = x * x + y * y + z * z
    excess = n2 - 1.0
    bad = excess > POSITIVITY_TOL
    if np.any(bad):
        raise ReconstructionError(
            f"positivity violated by {float(np.max(excess)):.3g} at {where}"
        )
    over = n2 > 1.0
    if np.any(over):
        trans = x * x + y * y
        scale = np.where(
            over & (trans > 0), np.sqrt(np.maximum(1.0 - z * z, 0.0) / np.where(trans > 0, trans, 1.0)), 1.0
        )
        x, y = x * scale, y * scale
    return x, y, z


def bayes_update(
    rho: DensityMatrix2, readout: float, dt: float, channel: ChannelConfig
) -> DensityMatrix2:
    """Quantum Bayesian update of ``rho`` for one readout of one channel.

    The channel's axis_angle selects the z-type (0) or x-type (pi/2) update.
    """
    q = rho.to_bloch()
    if abs(math.sin(channel.axis_angle)) < 1e-12:
        x, y, z = _measure_z_arr(q.x, q.y, q.z, readout, dt, channel)
    elif abs(math.cos(channel.axis_angle)) < 1e-12:
        x, y, z = _measure_x_arr(q.x, q.y, q.z, readout, dt, channel)
    else:
        raise ValueError("bayes_update supports z- and x-axis channels only")
    x, y, z = _project_positivity(
        np.asarray(x), np.asarray(y), np.asarray(z), "bayes_update"
    )
    return DensityMatrix2.from_bloch(BlochState(float(x), float(y), float(z)))


def _env_step_arr(x, y, z, dt: float, env: QubitEnvironment):
    damp = math.exp(-env.depolarization_rate * dt)
    ang = env.rabi_detuning * dt
    c, s = math.cos(ang), math.sin(ang)
    # exact integral of xdot = -gamma x + Omega z, zdot = -gamma z - Omega x;
    # y is damped at the same rate (see module notes)
    return damp * (x * c + z * s), damp * y, damp * (z * c - x * s)


def env_step(q: BlochState, dt: float, env: QubitEnvironment) -> BlochState:
    """Exact evolution under residual Rabi rotation and xz depolarization."""
    x, y, z = _env_step_arr(q.x, q.y, q.z, dt, env)
    return BlochState(x, y, z)


def reconstruct(
    readouts: ReadoutRecord, q_in: BlochState, cfg: SimConfig
) -> Trajectory:
    """Bloch trajectory implied by a readout record.

    Applies the z measurement, then the x measurement, then the environment
    map for each step; the ordering ambiguity is O(dt^2).
    """
    states = reconstruct_batch(
        np.asarray(readouts.r_z)[:, None],
        np.asarray(readouts.r_phi)[:, None],
        q_in.as_array(),
        cfg,
    )
    times = cfg.dt * np.arange(states.shape[0])
    return Trajectory(times=times, states=states[:, 0, :])


def reconstruct_batch(
    r_z: np.ndarray, r_x: np.ndarray, q_in: np.ndarray, cfg: SimConfig
) -> np.ndarray:
    """Vectorized reconstruction.  r_z, r_x: (n_steps, m).  Returns
    states of shape (n_steps + 1, m, 3)."""
    cz, cp = cfg.channels
    n, m = r_z.shape
    states = np.empty((n + 1, m, 3))
    x = np.full(m, q_in[0], dtype=float)
    y = np.full(m, q_in[1], dtype=float)
    z = np.full(m, q_in[2], dtype=float)
    states[0] = np.stack([x, y, z], axis=-1)
    for k in range(n):
        x, y, z = _measure_z_arr(x, y, z, r_z[k], cfg.dt, cz)
        x, y, z = _measure_x_arr(x, y, z, r_x[k], cfg.dt, cp)
        try:
            x, y, z = _project_positivity(x, y, z, f"step {k}")
        except ReconstructionError as exc:
            raise ReconstructionError(str(exc)) from None
        x, y, z = _env_step_arr(x, y, z, cfg.dt, cfg.environment)
        states[k + 1] = np.stack([x, y, z], axis=-1)
    return states


# ---------------------------------------------------------------------------
# readout-record ingestion
# ---------------------------------------------------------------------------

def write_readout_records(path, record: ReadoutRecord, cfg: SimConfig) -> None:
    """Write a delimited text record with a parameter-carrying header."""
    cz, cp = cfg.channels
    with open(path, "w") as fh:
        fh.write(
            "# dt={!r} gamma_z={!r} eta_z={!r} gamma_x={!r} eta_x={!r}\n".format(
                cfg.dt, cz.gamma, cz.eta, cp.gamma, cp.eta
            )
        )
        fh.write("t,r_z,r_x\n")
        for t, rz, rx in zip(record.times, record.r_z, record.r_phi):
            fh.write(f"{float(t)!r},{float(rz)!r},{float(rx)!r}\n")


def read_readout_records(path) -> tuple[ReadoutRecord, dict]:
    """Parse a readout file; malformed rows are hard errors with line numbers."""
    params = {}
    times, r_z, r_x = [], [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for tok in line[1:].split():
                    key, _, val = tok.partition("=")
                    params[key] = float(val)
                continue
            if line == "t,r_z,r_x":
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 columns, got {len(parts)}")
            try:
                times.append(float(parts[0]))
                r_z.append(float(parts[1]))
                r_x.append(float(parts[2]))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric field") from None
    record = ReadoutRecord(
        times=np.array(times), r_z=np.array(r_z), r_phi=np.array(r_x)
    )
    return record, params
