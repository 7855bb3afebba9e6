import math

import numpy as np
import pytest

from xzmeas.core import ChannelConfig, QubitEnvironment, SimConfig, polar_to_bloch


def ideal_xz_config(gamma=0.5, dt=0.01, t_final=2.0, theta_in=math.pi / 4, seed=0):
    """Equal-strength, unit-efficiency XZ measurement (tau_m = 1/(2*gamma))."""
    return SimConfig(
        channels=(
            ChannelConfig(0.0, gamma, 1.0),
            ChannelConfig(math.pi / 2, gamma, 1.0),
        ),
        dt=dt,
        t_final=t_final,
        initial_state=polar_to_bloch(theta_in),
        environment=QubitEnvironment(),
        rng_seed=seed,
    )


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(1234)
