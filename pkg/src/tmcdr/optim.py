"""Flat parameter vectors, first-order optimizers, and numerical probes.

Everything here operates on FlatParams, an immutable flattened view of one
or more named parameter blocks. The finite-difference gradient and the
Hessian-vector product are the independent oracles the rest of the package
is checked against; they never share code with the analytic gradients they
verify.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from math import prod
from typing import Callable, Sequence

import numpy as np

from .errors import OracleError


@dataclass(frozen=True)
class FlatParams:
    """A flat float64 vector with a named-segment layout.

    ``layout`` is a tuple of (name, offset, shape); segments must tile
    [0, len) in order without gaps. The underlying array is frozen, so a
    FlatParams can be shared freely.
    """

    values: np.ndarray
    layout: tuple[tuple[str, int, tuple[int, ...]], ...]

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 1:
            raise ValueError(f"values must be 1-d, got shape {values.shape}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        names = [name for name, _, _ in self.layout]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate segment names in {names}")
        expected = 0
        for name, offset, shape in self.layout:
            if offset != expected:
                raise ValueError(f"segment {name!r} at offset {offset}, expected {expected}")
            expected += prod(shape)
        if expected != values.size:
            raise ValueError(f"layout covers {expected} entries, values has {values.size}")

    @classmethod
    def from_segments(cls, segments: Sequence[tuple[str, np.ndarray]]) -> "FlatParams":
        layout = []
        parts = []
        offset = 0
        for name, arr in segments:
            arr = np.asarray(arr, dtype=np.float64)
            layout.append((name, offset, arr.shape))
            parts.append(arr.ravel())
            offset += arr.size
        return cls(np.concatenate(parts) if parts else np.empty(0), tuple(layout))

    @classmethod
    def from_vector(cls, values, name: str = "p") -> "FlatParams":
        values = np.asarray(values, dtype=np.float64)
        return cls(values, ((name, 0, values.shape),))

    def segment(self, name: str) -> np.ndarray:
        for seg_name, offset, shape in self.layout:
            if seg_name == name:
                return self.values[offset : offset + prod(shape)].reshape(shape)
        raise KeyError(f"no segment named {name!r}")

    def with_values(self, values) -> "FlatParams":
        """Same layout, new values."""
        values = np.asarray(values, dtype=np.float64)
        if values.shape != self.values.shape:
            raise ValueError(f"expected shape {self.values.shape}, got {values.shape}")
        return replace(self, values=values)

    @property
    def size(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class AdamState:
    """Adam moments plus hyperparameters; advance with adam_step."""

    step: int
    m: np.ndarray
    v: np.ndarray
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lr: float = 0.001

    @classmethod
    def initial(cls, size: int, lr: float = 0.001, beta1: float = 0.9,
                beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        return cls(step=0, m=np.zeros(size), v=np.zeros(size),
                   beta1=beta1, beta2=beta2, eps=eps, lr=lr)


def sgd_step(params: FlatParams, grad, lr: float) -> FlatParams:
    """One plain gradient-descent step: params - lr * grad."""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != params.values.shape:
        raise ValueError(f"gradient shape {grad.shape} != params shape {params.values.shape}")
    if lr < 0:
        raise ValueError(f"lr must be >= 0, got {lr}")
    return params.with_values(params.values - lr * grad)


def adam_step(state: AdamState, params: FlatParams, grad) -> tuple[AdamState, FlatParams]:
    """One Adam step with bias correction; returns the advanced state and params."""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != params.values.shape or grad.shape != state.m.shape:
        raise ValueError("gradient, params, and state lengths differ")
    t = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new_values = params.values - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return replace(state, step=t, m=m, v=v), params.with_values(new_values)


def finite_diff_grad(f: Callable[[FlatParams], float], params: FlatParams,
                     eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function, one coordinate at a time."""
    if eps <= 0:
        raise ValueError(f"eps must be > 0, got {eps}")
    base = params.values
    grad = np.empty(base.size)
    for i in range(base.size):
        up = base.copy()
        up[i] += eps
        down = base.copy()
        down[i] -= eps
        f_up = float(f(params.with_values(up)))
        f_down = float(f(params.with_values(down)))
        if not (np.isfinite(f_up) and np.isfinite(f_down)):
            raise OracleError(f"non-finite function value at coordinate {i}")
        grad[i] = (f_up - f_down) / (2.0 * eps)
    return grad


def hessian_vector_product(g: Callable[[FlatParams], np.ndarray], params: FlatParams,
                           vec, eps: float = 1e-4) -> np.ndarray:
    """Approximate H @ vec by central differences of the gradient map g."""
    if eps <= 0:
        raise ValueError(f"eps must be > 0, got {eps}")
    vec = np.asarray(vec, dtype=np.float64)
    if vec.shape != params.values.shape:
        raise ValueError(f"vector shape {vec.shape} != params shape {params.values.shape}")
    g_up = np.asarray(g(params.with_values(params.values + eps * vec)), dtype=np.float64)
    g_down = np.asarray(g(params.with_values(params.values - eps * vec)), dtype=np.float64)
    if not (np.all(np.isfinite(g_up)) and np.all(np.isfinite(g_down))):
        raise OracleError("non-finite gradient during Hessian-vector product")
    return (g_up - g_down) / (2.0 * eps)
