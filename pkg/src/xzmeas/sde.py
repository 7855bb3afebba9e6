"""Ito integration of the stochastic master equation and ensemble generation.

The Cartesian integrator handles an arbitrary angle between the two measured
axes plus residual Rabi rotation and depolarization.  The polar integrator is
an opt-in fast path for the ideal equal-strength XZ case, where the dynamics
is exact free diffusion of the polar angle and therefore can be sampled with
no discretization error.

Random numbers: every trajectory owns a counter-based Philox stream keyed by
(seed, stream_id), so ensembles are reproducible regardless of execution
order or chunking.
"""
from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass

import numpy as np

from .core import (
    NORM_TOL,
    BlochState,
    ChannelConfig,
    PolarState,
    QubitEnvironment,
    SimConfig,
)


class IntegratorError(RuntimeError):
    """Bloch norm exceeded 1 + NORM_TOL; names the offending step."""


@dataclass(frozen=True)
class Trajectory:
    """Time-gridded Bloch path.  ``states`` has shape (n_steps + 1, 3)."""

    times: np.ndarray
    states: np.ndarray

    def __len__(self):
        return len(self.times)


@dataclass(frozen=True)
class ReadoutRecord:
    """Raw detector outputs, one value per step for each channel."""

    times: np.ndarray
    r_z: np.ndarray
    r_phi: np.ndarray


@dataclass(frozen=True)
class Ensemble:
    """Stacked trajectories sharing one SimConfig.

    ``states`` has shape (count, n_steps + 1, 3); optional readouts have shape
    (count, n_steps).
    """

    times: np.ndarray
    states: np.ndarray
    config: SimConfig
    stream_ids: np.ndarray
    r_z: np.ndarray | None = None
    r_phi: np.ndarray | None = None

    @property
    def count(self) -> int:
        return self.states.shape[0]


# ---------------------------------------------------------------------------
# drift and diffusion coefficients
# ---------------------------------------------------------------------------

def _drift_arr(q: np.ndarray, channels, environment: QubitEnvironment) -> np.ndarray:
    """Deterministic velocity for states q of shape (..., 3)."""
    cz, cp = channels
    gz, gp, phi = cz.gamma, cp.gamma, cp.axis_angle
    gamma = environment.depolarization_rate
    omega = environment.rabi_detuning
    x, y, z = q[..., 0], q[..., 1], q[..., 2]
    s2 = 0.5 * gp * math.sin(2 * phi)
    out = np.empty_like(q)
    out[..., 0] = -(gz + gp * math.cos(phi) ** 2) * x + s2 * z - gamma * x + omega * z
    out[..., 1] = -(gz + gp) * y
    out[..., 2] = -gp * math.sin(phi) ** 2 * z + s2 * x - gamma * z - omega * x
    return out


def _noise_vec_arr(q: np.ndarray, channel: ChannelConfig) -> np.ndarray:
    """Diffusion coefficient vector g(q) for one channel, shape (..., 3).

    The z channel is the axis_angle = 0 special case of the same expression.
    """
    phi = channel.axis_angle
    s, c = math.sin(phi), math.cos(phi)
    rt = 1.0 / math.sqrt(channel.tau)
    x, y, z = q[..., 0], q[..., 1], q[..., 2]
    out = np.empty_like(q)
    out[..., 0] = ((1 - x**2) * s - x * z * c) * rt
    out[..., 1] = (-x * y * s - y * z * c) * rt
    out[..., 2] = ((1 - z**2) * c - x * z * s) * rt
    return out


def drift(q: BlochState, channels, environment: QubitEnvironment) -> BlochState:
    """Deterministic part of dq/dt (measurement dephasing + environment)."""
    v = _drift_arr(q.as_array(), channels, environment)
    # tangent vector, not a state: bypass the norm check
    out = BlochState.__new__(BlochState)
    object.__setattr__(out, "x", float(v[0]))
    object.__setattr__(out, "y", float(v[1]))
    object.__setattr__(out, "z", float(v[2]))
    return out


#: overshoot scale allowed before a step is declared unstable, in units of
#: dt/tau.  Euler-Maruyama fluctuates the squared norm by ~(n^2 - 1)*dt/tau
#: around the sphere, so overshoots of that size are expected and projected
#: back (standard projected Euler-Maruyama); anything larger is a bug.
_OVERSHOOT_FACTOR = 30.0


def _renormalize(q: np.ndarray, step: int, window: float = NORM_TOL) -> np.ndarray:
    """Project norms in (1, 1 + window] onto the sphere; raise beyond that."""
    n2 = np.einsum("...i,...i->...", q, q)
    bad = n2 > (1.0 + window) ** 2
    if np.any(bad):
        worst = float(np.sqrt(n2.max()))
        raise IntegratorError(
            f"Bloch norm {worst:.12g} exceeds 1 + {window:.3g} at step {step}"
        )
    over = n2 > 1.0
    if np.any(over):
        q = np.where(over[..., None], q / np.sqrt(n2)[..., None], q)
    return q


def _ito_step_arr(q, noise_z, noise_phi, cfg: SimConfig, step: int = 0):
    cz, cp = cfg.channels
    dt = cfg.dt
    sq = math.sqrt(dt)
    qn = (
        q
        + _drift_arr(q, cfg.channels, cfg.environment) * dt
        + _noise_vec_arr(q, cz) * (sq * noise_z)[..., None]
        + _noise_vec_arr(q, cp) * (sq * noise_phi)[..., None]
    )
    window = _OVERSHOOT_FACTOR * dt * max(1.0 / cz.tau, 1.0 / cp.tau)
    return _renormalize(qn, step, max(NORM_TOL, window))


def ito_step(
    q: BlochState, noise_z: float, noise_phi: float, cfg: SimConfig
) -> BlochState:
    """One Euler-Maruyama update with standard-normal draws for each channel."""
    qn = _ito_step_arr(q.as_array(), np.asarray(noise_z), np.asarray(noise_phi), cfg)
    return BlochState.from_array(qn)


def synthesize_readout(
    q: BlochState, noise: float, channel: ChannelConfig, dt: float
) -> float:
    """Time-averaged readout over one step (responses rescaled to 2).

    The same standard-normal draw must be the one fed to ito_step for this
    channel and step: the readout and the trajectory share their noise.
    """
    return _readout_arr(q.as_array(), np.asarray(noise), channel, dt).item()


def _readout_arr(q, noise, channel: ChannelConfig, dt: float):
    phi = channel.axis_angle
    m = q[..., 2] * math.cos(phi) + q[..., 0] * math.sin(phi)
    return m + math.sqrt(channel.tau / dt) * noise


def polar_step(theta: PolarState, noise: float, dt: float, tau_m: float) -> PolarState:
    """Free-diffusion update of the polar angle (ideal equal-strength XZ)."""
    return PolarState(theta.theta + math.sqrt(dt / tau_m) * float(noise))


# ---------------------------------------------------------------------------
# trajectory and ensemble generation
# ---------------------------------------------------------------------------

def noise_stream(seed: int, stream_id: int, n_steps: int) -> np.ndarray:
    """Standard-normal draws for one trajectory, shape (n_steps, 2).

    Column 0 feeds the z channel, column 1 the phi channel.
    """
    gen = np.random.Generator(np.random.Philox(key=[seed, stream_id]))
    return gen.standard_normal((n_steps, 2))


def _propagate(q0: np.ndarray, noises: np.ndarray, cfg: SimConfig):
    """Propagate a batch.  q0: (m, 3); noises: (n_steps, m, 2).

    Returns states (n_steps + 1, m, 3) and readouts (n_steps, m, 2).
    """
    n = noises.shape[0]
    m = q0.shape[0]
    cz, cp = cfg.channels
    states = np.empty((n + 1, m, 3))
    readouts = np.empty((n, m, 2))
    states[0] = q0
    q = q0
    for k in range(n):
        nz, nphi = noises[k, :, 0], noises[k, :, 1]
        readouts[k, :, 0] = _readout_arr(q, nz, cz, cfg.dt)
        readouts[k, :, 1] = _readout_arr(q, nphi, cp, cfg.dt)
        q = _ito_step_arr(q, nz, nphi, cfg, step=k)
        states[k + 1] = q
    return states, readouts


def simulate_trajectory(cfg: SimConfig, stream_id: int = 0):
    """One trajectory plus its readout record, deterministic in (seed, stream)."""
    noises = noise_stream(cfg.rng_seed, stream_id, cfg.n_steps)
    q0 = cfg.initial_state.as_array()[None, :]
    states, readouts = _propagate(q0, noises[:, None, :], cfg)
    times = cfg.times
    return (
        Trajectory(times=times, states=states[:, 0, :]),
        ReadoutRecord(times=times[:-1], r_z=readouts[:, 0, 0], r_phi=readouts[:, 0, 1]),
    )


def _ensemble_chunk(cfg: SimConfig, lo: int, hi: int):
    n = cfg.n_steps
    noises = np.stack(
        [noise_stream(cfg.rng_seed, sid, n) for sid in range(lo, hi)], axis=1
    )
    q0 = np.tile(cfg.initial_state.as_array(), (hi - lo, 1))
    try:
        return _propagate(q0, noises, cfg)
    except IntegratorError as exc:
        raise IntegratorError(f"{exc} (streams {lo}..{hi - 1})") from exc


def run_ensemble(
    cfg: SimConfig,
    count: int,
    keep_readouts: bool = True,
    chunk: int = 20000,
    workers: int = 1,
    stream_offset: int = 0,
) -> Ensemble:
    """Trajectories for stream ids offset..offset+count-1, in stream-id order.

    Chunks are independent, so ``workers`` threads may run them concurrently;
    the merge is by stream id and bit-identical for any worker count.
    ``stream_offset`` lets callers build one large logical ensemble in slabs
    without reusing noise streams.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    n = cfg.n_steps
    states = np.empty((count, n + 1, 3))
    r_z = np.empty((count, n)) if keep_readouts else None
    r_phi = np.empty((count, n)) if keep_readouts else None
    base = stream_offset
    spans = [
        (base + lo, base + min(lo + chunk, count)) for lo in range(0, count, chunk)
    ]
    if workers > 1 and len(spans) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda s: _ensemble_chunk(cfg, *s), spans))
    else:
        results = [_ensemble_chunk(cfg, *s) for s in spans]
    for (lo, hi), (st, ro) in zip(spans, results):
        states[lo - base:hi - base] = st.transpose(1, 0, 2)
        if keep_readouts:
            r_z[lo - base:hi - base] = ro[:, :, 0].T
            r_phi[lo - base:hi - base] = ro[:, :, 1].T
    return Ensemble(
        times=cfg.times,
        states=states,
        config=cfg,
        stream_ids=np.arange(base, base + count),
        r_z=r_z,
        r_phi=r_phi,
    )


def polar_ensemble(
    theta_in: float,
    tau_m: float,
    sample_times: np.ndarray,
    count: int,
    seed: int = 0,
) -> np.ndarray:
    """Exact polar-angle diffusion sampled on ``sample_times``.

    The ideal equal-strength XZ dynamics is pure Brownian motion of theta with
    variance t/tau_m, so increments between sample times are drawn exactly;
    no fine stepping is needed.  Returns angles of shape (count, n_times).
    """
    t = np.asarray(sample_times, dtype=float)
    if t.ndim != 1 or np.any(np.diff(t) <= 0) or t[0] < 0:
        raise ValueError("sample_times must be strictly increasing and >= 0")
    gen = np.random.Generator(np.random.Philox(key=[seed, 0]))
    thetas = np.empty((count, len(t)))
    prev = np.full(count, float(theta_in))
    t_prev = 0.0
    for j, tj in enumerate(t):
        if tj > t_prev:
            prev = prev + math.sqrt((tj - t_prev) / tau_m) * gen.standard_normal(count)
        thetas[:, j] = prev
        t_prev = tj
    return thetas


def polar_states(thetas: np.ndarray) -> np.ndarray:
    """Bloch states (..., 3) for an array of polar angles."""
    out = np.empty(thetas.shape + (3,))
    out[..., 0] = np.sin(thetas)
    out[..., 1] = 0.0
    out[..., 2] = np.cos(thetas)
    return out


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def _config_to_dict(cfg: SimConfig) -> dict:
    return {
        "channels": [
            {"axis_angle": c.axis_angle, "gamma": c.gamma, "eta": c.eta}
            for c in cfg.channels
        ],
        "dt": cfg.dt,
        "t_final": cfg.t_final,
        "initial_state": [cfg.initial_state.x, cfg.initial_state.y, cfg.initial_state.z],
        "environment": {
            "rabi_detuning": cfg.environment.rabi_detuning,
            "depolarization_rate": cfg.environment.depolarization_rate,
        },
        "rng_seed": cfg.rng_seed,
    }


def _config_from_dict(d: dict) -> SimConfig:
    return SimConfig(
        channels=tuple(ChannelConfig(**c) for c in d["channels"]),
        dt=d["dt"],
        t_final=d["t_final"],
        initial_state=BlochState(*d["initial_state"]),
        environment=QubitEnvironment(**d["environment"]),
        rng_seed=d["rng_seed"],
    )


def save_ensemble(path, ens: Ensemble) -> None:
    """Write an ensemble to an .npz container; round-trips bit-exactly."""
    payload = {
        "times": ens.times,
        "states": ens.states,
        "stream_ids": ens.stream_ids,
        "config_json": np.frombuffer(
            json.dumps(_config_to_dict(ens.config), sort_keys=True).encode(), np.uint8
        ),
    }
    if ens.r_z is not None:
        payload["r_z"] = ens.r_z
        payload["r_phi"] = ens.r_phi
    buf = io.BytesIO()
    np.savez_compressed(buf, **payload)
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_ensemble(path) -> Ensemble:
    with np.load(path) as data:
        cfg = _config_from_dict(json.loads(bytes(data["config_json"]).decode()))
        return Ensemble(
            times=data["times"],
            states=data["states"],
            config=cfg,
            stream_ids=data["stream_ids"],
            r_z=data["r_z"] if "r_z" in data else None,
            r_phi=data["r_phi"] if "r_phi" in data else None,
        )
