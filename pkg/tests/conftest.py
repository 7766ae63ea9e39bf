import numpy as np
import pytest

from wsvad.data import SynthConfig, generate_synthetic
from wsvad.losses import HyperParams
from wsvad.numcore import make_rng
from wsvad.training import TrainConfig

SMALL_WIDTHS = (24, 12, 6, 1)


@pytest.fixture
def rng():
    return make_rng(1234)


@pytest.fixture(scope="session")
def small_synth():
    cfg = SynthConfig(dim=8, train_per_class=8, test_per_class=4, min_frames=160, max_frames=480, seed=3)
    return generate_synthetic(cfg)


def small_config(**kw) -> TrainConfig:
    hp_kw = {k: kw.pop(k) for k in list(kw) if k in HyperParams.__dataclass_fields__}
    hp = HyperParams(**{"batch_size": 4, "lr": 1e-3, **hp_kw})
    return TrainConfig(**{"hp": hp, "epochs": 2, "segments": 12, "widths": SMALL_WIDTHS, **kw})


def random_matrix(rng, *shape):
    return rng.normal(size=shape)


@pytest.fixture
def tiny_instance(rng):
    from wsvad.graph import build_adjacency
    from wsvad.model import init_params

    feats = rng.normal(size=(4, 5))
    params = init_params(5, rng, (8, 6, 4, 1))
    params = params.map(lambda b: b + (rng.normal(scale=0.1, size=b.shape) if b.ndim == 1 else 0.0))
    return params, feats, build_adjacency(feats)




_VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    """Record a one-line pass/fail verdict; all verdicts are echoed in the terminal summary."""

    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        _VERDICTS.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


__all__ = ["small_config", "random_matrix", "SMALL_WIDTHS", "np"]
