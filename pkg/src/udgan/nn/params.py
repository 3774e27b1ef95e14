from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Iterator

import numpy as np

from .autograd import DTYPE, ConfigError, Tensor

LAYER_KINDS = ("linear", "embedding", "gru-cell", "lstm-cell", "lstm-stack", "bilstm")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    input_dim: int
    output_dim: int
    layers: int = 1

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ConfigError(f"unknown layer kind {self.kind!r}")
        if self.input_dim <= 0 or self.output_dim <= 0:
            raise ConfigError(f"{self.kind}: dimensions must be positive")
        if self.layers < 1:
            raise ConfigError(f"{self.kind}: layer count must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


class ParamStore:
    """Named parameters, each carrying a same-shaped gradient slot."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._params:
            raise ConfigError(f"duplicate parameter name {name!r}")
        p = Tensor(np.array(value, dtype=DTYPE), requires_grad=True)
        self._params[name] = p
        return p

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    def names(self) -> list[str]:
        return list(self._params)

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.grad.fill(0.0)

    def num_params(self) -> int:
        return int(sum(p.data.size for p in self._params.values()))

    def state(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self._params.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        if set(state) != set(self._params):
            missing = set(self._params) ^ set(state)
            raise ConfigError(f"parameter names differ: {sorted(missing)}")
        for k, p in self._params.items():
            v = np.asarray(state[k], dtype=DTYPE)
            if v.shape != p.data.shape:
                raise ConfigError(f"{k}: shape {v.shape} != {p.data.shape}")
            p.data[...] = v


def uniform_init(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)
