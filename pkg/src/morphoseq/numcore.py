"""Small dense kernels shared by the model: matmul, softmax, Adadelta and a
finite-difference gradient oracle.

Everything is float64 numpy. The functions are pure: they never mutate their
inputs and hold no module-level state.
"""

from dataclasses import dataclass
from typing import Callable, Dict, Mapping

import numpy as np

DTYPE = np.float64


class DimensionError(ValueError):
    """Operand shapes do not agree."""


class NumericError(ArithmeticError):
    """A computation produced NaN or infinity."""


def as_matrix(values) -> np.ndarray:
    m = np.asarray(values, dtype=DTYPE)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise DimensionError(f"expected a 2-d matrix, got shape {m.shape}")
    return m


def matmul(a, b) -> np.ndarray:
    """Matrix product of ``a`` (n x k) and ``b`` (k x m)."""
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def softmax(v, axis: int = -1) -> np.ndarray:
    """Numerically stable softmax along ``axis`` (max-subtracted).

    Entries equal to ``-inf`` are allowed and receive probability zero, as
    long as every slice keeps at least one finite entry.
    """
    v = np.asarray(v, dtype=DTYPE)
    if v.size == 0 or v.shape[axis] == 0:
        raise ValueError("softmax of an empty vector")
    if np.isnan(v).any() or np.isposinf(v).any():
        raise NumericError("softmax input contains NaN or +inf")
    shifted = v - v.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(v, axis: int = -1) -> np.ndarray:
    """Stable log-softmax; non-finite inputs give NaN rows for the caller to report."""
    v = np.asarray(v, dtype=DTYPE)
    with np.errstate(invalid="ignore"):
        shifted = v - v.max(axis=axis, keepdims=True)
        return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


@dataclass(frozen=True)
class AdadeltaState:
    acc_grad: np.ndarray
    acc_update: np.ndarray
    rho: float = 0.95
    eps: float = 1e-6

    @classmethod
    def zeros_like(cls, param, rho: float = 0.95, eps: float = 1e-6) -> "AdadeltaState":
        if not 0.0 < rho < 1.0:
            raise ValueError(f"rho must lie in (0, 1), got {rho}")
        if eps <= 0.0:
            raise ValueError(f"eps must be positive, got {eps}")
        shape = np.shape(param)
        return cls(np.zeros(shape, DTYPE), np.zeros(shape, DTYPE), rho, eps)


def adadelta_step(param, grad, state: AdadeltaState):
    """One Adadelta update. Returns ``(new_param, new_state)``."""
    param = np.asarray(param, dtype=DTYPE)
    grad = np.asarray(grad, dtype=DTYPE)
    if not (param.shape == grad.shape == state.acc_grad.shape == state.acc_update.shape):
        raise DimensionError(
            f"param {param.shape}, grad {grad.shape} and state "
            f"{state.acc_grad.shape} must share a shape"
        )
    rho, eps = state.rho, state.eps
    acc_grad = rho * state.acc_grad + (1.0 - rho) * grad * grad
    delta = -(np.sqrt(state.acc_update + eps) / np.sqrt(acc_grad + eps)) * grad
    acc_update = rho * state.acc_update + (1.0 - rho) * delta * delta
    return param + delta, AdadeltaState(acc_grad, acc_update, rho, eps)


def finite_diff_grad(
    loss_fn: Callable[[Mapping[str, np.ndarray]], float],
    params: Mapping[str, np.ndarray],
    h: float = 1e-5,
) -> Dict[str, np.ndarray]:
    """Central-difference gradient of ``loss_fn`` for every scalar in ``params``.

    ``params`` maps names to float arrays. The caller's arrays are left
    untouched; perturbations happen on private copies.
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    work = {k: np.array(v, dtype=DTYPE, copy=True) for k, v in params.items()}
    grads = {}
    for name, arr in work.items():
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = float(loss_fn(work))
            flat[i] = orig - h
            down = float(loss_fn(work))
            flat[i] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise NumericError(f"non-finite loss while perturbing {name}[{i}]")
            gflat[i] = (up - down) / (2.0 * h)
        grads[name] = g
    return grads
