import numpy as np
import pytest
from hypothesis import settings

from ditnano.arch_plan import DitConfig
from ditnano.tiny_dit.model import init_model

settings.register_profile("ci", deadline=None, max_examples=60)
settings.load_profile("ci")


def randomize(m, seed=0, scale=0.3):
    """Give every weight (gates and head included) a random value."""
    rng = np.random.default_rng(seed)
    for p in m.params.values():
        p.data[...] = (rng.standard_normal(p.shape) * scale).astype(p.dtype)
    return m


@pytest.fixture
def tiny_cfg():
    # 2 blocks, width 8, 8x8 images with patch 4 -> 4 tokens, under 10k params
    return DitConfig(depth=2, width=8, heads=2, patch_size=4, image_size=8, in_channels=3, num_classes=3)


@pytest.fixture
def tiny_model(tiny_cfg):
    return randomize(init_model(tiny_cfg, seed=0, dtype=np.float64))


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
