"""Memory of per-batch cluster centers and the strategies that reuse it.

Strategies:

``way1``  cluster last epoch's centers once per epoch; use the result as the
          initial centers for every batch of the current epoch.
``way2``  start from the centers of the most recent batch of the same class.
``way3``  cluster every center pushed so far (whole run), recomputed per batch.
``way4``  random start, with last epoch's centers joining as extra samples.
``none``  random start, no memory.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from wsvad.clustering import GivenCenters, InitStrategy, RandomPair, kmeans2_best_of
from wsvad.errors import ShapeError

STRATEGIES = ("none", "way1", "way2", "way3", "way4")
CLASSES = ("normal", "abnormal")
MEMORY_RESTARTS = 5

Pair = tuple[np.ndarray, np.ndarray]


def _class_store() -> dict[str, list[Pair]]:
    return {c: [] for c in CLASSES}


@dataclass
class CenterMemory:
    strategy: str = "way1"
    current: dict[str, list[Pair]] = field(default_factory=_class_store)
    previous: dict[str, list[Pair]] = field(default_factory=_class_store)
    history: dict[str, list[Pair]] = field(default_factory=_class_store)
    _way1_cache: dict[str, GivenCenters] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")

    @property
    def dim(self) -> int | None:
        for store in (self.history, self.previous, self.current):
            for pairs in store.values():
                if pairs:
                    return pairs[0][0].shape[0]
        return None

    def push_centers(self, cls: str, c1: np.ndarray, c2: np.ndarray) -> None:
        _check_class(cls)
        c1 = np.array(c1, dtype=np.float64)
        c2 = np.array(c2, dtype=np.float64)
        dim = self.dim
        if c1.ndim != 1 or c1.shape != c2.shape or (dim is not None and c1.shape[0] != dim):
            raise ShapeError(f"center shapes {c1.shape}, {c2.shape} do not match memory dim {dim}")
        self.current[cls].append((c1, c2))
        self.history[cls].append((c1, c2))

    def rollover_epoch(self) -> None:
        self.previous = self.current
        self.current = _class_store()
        self._way1_cache.clear()

    def derive_init(
        self, cls: str, rng: np.random.Generator
    ) -> tuple[InitStrategy, np.ndarray | None]:
        """Initialization and optional extra samples for this class's next clustering."""
        _check_class(cls)
        s = self.strategy
        if s == "way1" and self.previous[cls]:
            if cls not in self._way1_cache:
                self._way1_cache[cls] = _cluster_pairs(self.previous[cls], rng)
            return self._way1_cache[cls], None
        if s == "way2" and self.history[cls]:
            c1, c2 = self.history[cls][-1]
            return GivenCenters(c1, c2), None
        if s == "way3" and self.history[cls]:
            return _cluster_pairs(self.history[cls], rng), None
        if s == "way4" and self.previous[cls]:
            return RandomPair(), _stack(self.previous[cls])
        return RandomPair(), None


def _check_class(cls: str) -> None:
    if cls not in CLASSES:
        raise ValueError(f"class must be one of {CLASSES}, got {cls!r}")


def _stack(pairs: list[Pair]) -> np.ndarray:
    return np.vstack([c for pair in pairs for c in pair])


def _cluster_pairs(pairs: list[Pair], rng: np.random.Generator) -> GivenCenters:
    res = kmeans2_best_of(_stack(pairs), MEMORY_RESTARTS, rng)
    return GivenCenters(res.c1.copy(), res.c2.copy())
