import numpy as np
import pytest

from floorcascade.core import Component, ComponentType, Floorplan
from floorcascade.weights import ModelConfig, init_weights

T = ComponentType


def rect(x0, y0, x1, y1):
    return ((x0, y0), (x1, y0), (x1, y1), (x0, y1))


def room(kind, box, visible=True):
    return Component(kind, visible, polygon=rect(*box))


def door(kind, xy, visible=True):
    return Component(kind, visible, center=xy)


def plan(*components, canvas=(64, 64), pid="t"):
    return Floorplan(pid, canvas, tuple(components))


def random_blob(rng, h, w, steps=40):
    """4-connected random-walk blob, thickened by one pixel."""
    m = np.zeros((h, w), dtype=bool)
    y, x = h // 2, w // 2
    for _ in range(steps):
        m[max(y - 1, 0):y + 2, max(x - 1, 0):x + 2] = True
        dy, dx = [(0, 1), (0, -1), (1, 0), (-1, 0)][rng.integers(4)]
        y = int(np.clip(y + dy * rng.integers(1, 4), 1, h - 2))
        x = int(np.clip(x + dx * rng.integers(1, 4), 1, w - 2))
    return m


@pytest.fixture(scope="session")
def small_weights():
    """A narrow model for fast forward-pass tests."""
    cfg = ModelConfig(backbone_widths=(4, 4, 8, 8, 16), ffn_dim=64, encoder_layers=2, decoder_layers=1)
    return init_weights(cfg, seed=7)


@pytest.fixture(scope="session")
def full_weights():
    return init_weights(ModelConfig(), seed=0)


ACCEPTANCE_RESULTS: dict[int, tuple[str, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        status, line = ACCEPTANCE_RESULTS[n]
        terminalreporter.write_line(f"[{status}] criterion {n}: {line}")
