import math
from pathlib import Path

import numpy as np
import pytest

from flockdetect.core import TrajectoryPoint
from flockdetect.ingest import SyntheticConfig, generate_synthetic

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def tracks_fixture_path():
    return DATA_DIR / "atc_sample_tracks.csv"


@pytest.fixture(scope="session")
def groups_fixture_path():
    return DATA_DIR / "atc_sample_groups.dat"


@pytest.fixture(scope="session")
def small_dataset():
    """12 size-2 flocks + 24 singletons, 61 points per agent."""
    cfg = SyntheticConfig(
        n_flocks=12,
        flock_size_distribution=((2, 1.0),),
        n_singletons=24,
        duration_ms=30_000,
        sample_period_ms=500,
        rng_seed=11,
    )
    return generate_synthetic(cfg)


def make_block(agent_id, n, *, t0=1_000_000, dt=500, x0=0.0, y0=0.0,
               step=(600.0, 0.0), velocity=1200.0, motion=0.0, face=0.0):
    """Straight-line block of n points for hand-built test cases."""
    return tuple(
        TrajectoryPoint(
            timestamp_ms=t0 + k * dt,
            agent_id=agent_id,
            x_mm=x0 + k * step[0],
            y_mm=y0 + k * step[1],
            velocity_mm_s=velocity,
            motion_angle_rad=motion,
            face_angle_rad=face,
        )
        for k in range(n)
    )


def dtw_alignment_oracle(a, b):
    """Minimum cost over every monotone boundary-matched alignment.

    Plain recursion without memoization: the call tree literally walks every
    alignment path, independent of the DP implementation under test.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)

    def dist(i, j):
        return math.hypot(a[i, 0] - b[j, 0], a[i, 1] - b[j, 1])

    def best(i, j):
        d = dist(i, j)
        if i == 0 and j == 0:
            return d
        options = []
        if i > 0:
            options.append(best(i - 1, j))
        if j > 0:
            options.append(best(i, j - 1))
        if i > 0 and j > 0:
            options.append(best(i - 1, j - 1))
        return d + min(options)

    return best(len(a) - 1, len(b) - 1)
