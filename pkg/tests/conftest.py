import numpy as np
import pytest

from converge_twin.scenario import builtin_scenario_path, load_scenario


@pytest.fixture(scope="session")
def flagship_path():
    return builtin_scenario_path("flagship")


@pytest.fixture(scope="session")
def flagship(flagship_path):
    return load_scenario(flagship_path)


def scene_doc(devices=None, obstacles=None, chamber=(10.0, 6.0, 4.0)):
    """Minimal scene document with sane defaults, for hand-built tests."""
    return {
        "chamber_dims": list(chamber),
        "devices": devices if devices is not None else [
            {"id": "gnb", "kind": "GNB", "position": [1.0, 3.0, 2.0]},
            {"id": "ue", "kind": "UE", "position": [9.0, 3.0, 1.5]},
        ],
        "obstacles": obstacles or [],
    }


def sampled_occlusion(a, b, box_min, box_max, n=1000):
    """Brute-force oracle: is any strictly interior sample of the open
    segment (a, b) inside the closed box?"""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ts = (np.arange(1, n + 1)) / (n + 1)
    points = a[None, :] + ts[:, None] * (b - a)[None, :]
    inside = np.all((points >= np.asarray(box_min)) &
                    (points <= np.asarray(box_max)), axis=1)
    return bool(inside.any())
