"""Parameter layout: named blocks of an unconstrained vector and their transforms."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

TRANSFORMS = ("real", "positive", "unit", "ordered")


@dataclass(frozen=True)
class Block:
    name: str
    shape: tuple
    transform: str
    offset: int
    role: str = ""
    lower: float = 0.0

    @property
    def size(self) -> int:
        return int(np.prod(self.shape)) if self.shape else 1

    @property
    def slice(self) -> slice:
        return slice(self.offset, self.offset + self.size)


def _softplus(u):
    return np.logaddexp(0.0, u)


def _forward(block: Block, u):
    """Constrained value and log|J| for a batch of block coordinates.

    ``u`` has shape ``(..., *block.shape)``; the log-Jacobian is summed over
    the block and has shape ``(...)``.
    """
    axes = tuple(range(u.ndim - len(block.shape), u.ndim))
    t = block.transform
    if t == "real":
        return u, np.zeros(u.shape[: u.ndim - len(block.shape)])
    if t == "positive":
        return block.lower + np.exp(u), np.sum(u, axis=axes)
    if t == "unit":
        x = 1.0 / (1.0 + np.exp(-u))
        return x, np.sum(-_softplus(-u) - _softplus(u), axis=axes)
    if t == "ordered":
        return block.lower + np.cumsum(np.exp(u), axis=-1), np.sum(u, axis=axes)
    raise ValueError(t)


def _inverse(block: Block, x):
    t = block.transform
    if t == "real":
        return x
    if t == "positive":
        return np.log(x - block.lower)
    if t == "unit":
        return np.log(x) - np.log1p(-x)
    if t == "ordered":
        shifted = x - block.lower
        inc = np.diff(shifted, axis=-1, prepend=0.0)
        if np.any(inc <= 0):
            raise ValueError(f"{block.name}: values must be strictly increasing")
        return np.log(inc)
    raise ValueError(t)


def _pullback(block: Block, u, x, g_x):
    """Gradient w.r.t. ``u`` of ``f(x(u)) + log|J|(u)`` given ``df/dx``."""
    t = block.transform
    if t == "real":
        return g_x
    if t == "positive":
        return g_x * (x - block.lower) + 1.0
    if t == "unit":
        return g_x * x * (1.0 - x) + 1.0 - 2.0 * x
    if t == "ordered":
        rev = np.flip(np.cumsum(np.flip(g_x, axis=-1), axis=-1), axis=-1)
        return np.exp(u) * rev + 1.0
    raise ValueError(t)


class ParameterLayout:
    """Ordered collection of parameter blocks.

    Coordinates are named ``block[i,j]`` with 1-based indices (``block`` alone
    for scalars), which is also how they appear in trace files.
    """

    def __init__(self):
        self.blocks: list[Block] = []
        self._by_name: dict[str, Block] = {}

    def add(self, name, shape, transform, role="", lower=0.0) -> Block:
        if transform not in TRANSFORMS:
            raise ValueError(f"unknown transform {transform!r}")
        if name in self._by_name:
            raise ValueError(f"duplicate block {name!r}")
        shape = tuple(int(s) for s in np.atleast_1d(shape)) if shape != () else ()
        block = Block(name, shape, transform, self.dim, role, lower)
        self.blocks.append(block)
        self._by_name[name] = block
        return block

    def __contains__(self, name):
        return name in self._by_name

    def __getitem__(self, name) -> Block:
        return self._by_name[name]

    @property
    def dim(self) -> int:
        return sum(b.size for b in self.blocks)

    @property
    def block_names(self) -> list[str]:
        return [b.name for b in self.blocks]

    def coordinate_names(self) -> list[str]:
        names = []
        for b in self.blocks:
            if not b.shape:
                names.append(b.name)
                continue
            for idx in itertools.product(*(range(1, s + 1) for s in b.shape)):
                names.append(f"{b.name}[{','.join(map(str, idx))}]")
        return names

    def _split(self, u, block):
        lead = u.shape[:-1]
        return u[..., block.slice].reshape(lead + block.shape)

    def constrain(self, u) -> dict:
        """Constrained values keyed by block name; ``u`` may carry batch dims."""
        u = np.asarray(u, dtype=float)
        return {b.name: _forward(b, self._split(u, b))[0] for b in self.blocks}

    def constrain_with_log_jacobian(self, u):
        values, log_j = {}, 0.0
        for b in self.blocks:
            x, lj = _forward(b, self._split(u, b))
            values[b.name] = x
            log_j = log_j + lj
        return values, log_j

    def unconstrain(self, values: dict) -> np.ndarray:
        out = np.empty(self.dim)
        for b in self.blocks:
            x = np.asarray(values[b.name], dtype=float).reshape(b.shape)
            out[b.slice] = np.ravel(_inverse(b, x))
        return out

    def pullback(self, u, values: dict, grads: dict) -> np.ndarray:
        """Chain constrained-space gradients back to ``u``, adding d log|J|."""
        out = np.empty(self.dim)
        for b in self.blocks:
            g = grads.get(b.name)
            if g is None:
                g = np.zeros(b.shape)
            ub = u[b.slice].reshape(b.shape)
            out[b.slice] = np.ravel(_pullback(b, ub, values[b.name], g))
        return out
