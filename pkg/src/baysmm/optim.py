"""ADAM in ascent form plus orthant-wise handling of the L1 penalty on T."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class NumericalError(FloatingPointError):
    """Non-finite value encountered during optimisation."""

    def __init__(self, message, iteration=None):
        if iteration is not None:
            message = f"iteration {iteration}: {message}"
        super().__init__(message)
        self.iteration = iteration


@dataclass
class AdamState:
    f: np.ndarray
    s: np.ndarray
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8
    eta: float = 0.05

    @classmethod
    def zeros(cls, shape, **kw) -> "AdamState":
        return cls(np.zeros(shape), np.zeros(shape), **kw)


def adam_direction(state: AdamState, grad) -> np.ndarray:
    """Advance the moment estimates with ``grad`` and return the ascent step.

    d = eta * f_hat / (sqrt(s_hat) + eps_hat), with bias-corrected moments.
    """
    grad = np.asarray(grad, dtype=np.float64)
    state.step_count += 1
    state.f *= state.beta1
    state.f += (1.0 - state.beta1) * grad
    state.s *= state.beta2
    state.s += (1.0 - state.beta2) * (grad * grad)
    f_hat = state.f / (1.0 - state.beta1 ** state.step_count)
    s_hat = state.s / (1.0 - state.beta2 ** state.step_count)
    return state.eta * f_hat / (np.sqrt(s_hat) + state.eps_hat)


def l1_subgradient(t, grad, omega: float) -> np.ndarray:
    """Orthant-wise sub-gradient of the L1-penalised objective.

    ``grad`` is the penalised gradient ``smooth - omega * sign(t)`` (equal to
    the smooth gradient where ``t == 0``).  Non-zero coordinates pass through;
    at zero, the gradient is shrunk toward 0 by ``omega`` and vanishes inside
    the dead zone ``|grad| <= omega``.
    """
    t = np.asarray(t, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    at_zero = t == 0
    out = np.where(at_zero, 0.0, grad)
    out = np.where(at_zero & (grad < -omega), grad + omega, out)
    out = np.where(at_zero & (grad > omega), grad - omega, out)
    return out


def orthant_project(t, d) -> np.ndarray:
    """t + d, with coordinates that would change sign set to exactly 0."""
    t = np.asarray(t, dtype=np.float64)
    new = t + np.asarray(d, dtype=np.float64)
    # adding +0.0 turns any -0.0 into +0.0
    return np.where(t * new < 0, 0.0, new) + 0.0


def update_T_rows(T, smooth_grads, state: AdamState, omega: float) -> np.ndarray:
    """One orthant-wise ADAM ascent step on T; returns the new matrix.

    With ``omega == 0`` there is no kink to protect, so the step is plain ADAM
    ascent without orthant projection.
    """
    if not np.all(np.isfinite(smooth_grads)):
        bad = np.argwhere(~np.isfinite(smooth_grads))[0]
        raise NumericalError(f"non-finite gradient for T at row {bad[0]}, column {bad[1]}")
    sub = l1_subgradient(T, smooth_grads - omega * np.sign(T), omega)
    d = adam_direction(state, sub)
    if omega == 0:
        return T + d
    return orthant_project(T, d)
