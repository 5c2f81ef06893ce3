import numpy as np
import pytest

from modscc.backbone import BackboneConfig
from modscc.data import default_synthetic_spec, generate_synthetic
from modscc.heads import HeadConfig


def naive_conv3x3(x, k, b=None):
    """Direct-loop zero-padded 3x3 cross-correlation, the reference for conv2d."""
    N, C, H, W = x.shape
    F = k.shape[0]
    out = np.zeros((N, F, H, W))
    for n in range(N):
        for f in range(F):
            for i in range(H):
                for j in range(W):
                    s = 0.0
                    for c in range(C):
                        for di in range(3):
                            for dj in range(3):
                                ii, jj = i + di - 1, j + dj - 1
                                if 0 <= ii < H and 0 <= jj < W:
                                    s += x[n, c, ii, jj] * k[f, c, di, dj]
                    out[n, f, i, j] = s + (0.0 if b is None else b[f])
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_backbone():
    return BackboneConfig.desk(conv_blocks=((1, 4), (1, 6)), input_size=(8, 8), dense_width=8)


@pytest.fixture
def tiny_heads():
    return HeadConfig(n_plant_classes=3, n_disease_classes=4, task_dense_width=8)


@pytest.fixture(scope="session")
def small_split():
    spec = default_synthetic_spec(samples_per_pair=8, image_size=(16, 16), noise_level=0.1, seed=3)
    return generate_synthetic(spec)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
