"""Decoupled-weight-decay Adam and the cosine learning-rate schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, ParameterError


@dataclass
class OptimState:
    """Per-parameter moment estimates plus group bookkeeping.

    ``group_of`` maps parameter names to a learning-rate group ("backbone" or
    "heads"); parameters absent from the map fall into the "default" group.
    ``param_steps`` tracks how many updates each parameter has received so
    bias correction stays correct for parameters that spend early epochs
    frozen. ``step`` counts calls to :func:`adamw_step` and strictly increases.
    """

    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    param_steps: dict = field(default_factory=dict)
    step: int = 0
    group_of: dict = field(default_factory=dict)
    weight_decay: float = 0.01


def init_optim_state(params: dict, group_of: dict | None = None,
                     weight_decay: float = 0.01) -> OptimState:
    state = OptimState(group_of=dict(group_of or {}), weight_decay=weight_decay)
    for name, value in params.items():
        state.m[name] = np.zeros_like(value)
        state.v[name] = np.zeros_like(value)
        state.param_steps[name] = 0
    return state


def adamw_step(params: dict, grads: dict, state: OptimState, lr,
               betas=(0.9, 0.999), eps: float = 1e-8,
               weight_decay: float | None = None) -> dict:
    """One AdamW update over the parameters named in ``grads``.

    ``lr`` is a float applied to everything or a ``{group: float}`` dict
    resolved through ``state.group_of``. Returns a new parameter dict;
    parameters without a gradient this step pass through untouched.
    """
    beta1, beta2 = betas
    wd = state.weight_decay if weight_decay is None else weight_decay
    if isinstance(lr, dict):
        def lr_for(name):
            return lr[state.group_of.get(name, "default")]
    else:
        lr_val = float(lr)
        if lr_val < 0.0:
            raise ParameterError(f"learning rate must be >= 0, got {lr_val}")

        def lr_for(name):
            return lr_val

    out = dict(params)
    for name, g in grads.items():
        theta = params[name]
        if g.shape != theta.shape:
            raise DimensionError(
                f"gradient shape {g.shape} does not match parameter "
                f"'{name}' of shape {theta.shape}")
        if name not in state.m:
            state.m[name] = np.zeros_like(theta)
            state.v[name] = np.zeros_like(theta)
            state.param_steps[name] = 0
        state.param_steps[name] += 1
        t = state.param_steps[name]
        state.m[name] = beta1 * state.m[name] + (1.0 - beta1) * g
        state.v[name] = beta2 * state.v[name] + (1.0 - beta2) * g * g
        m_hat = state.m[name] / (1.0 - beta1 ** t)
        v_hat = state.v[name] / (1.0 - beta2 ** t)
        step_lr = lr_for(name)
        out[name] = theta - step_lr * wd * theta - step_lr * m_hat / (np.sqrt(v_hat) + eps)
    state.step += 1
    return out


def cosine_lr(epoch: float, total_epochs: int, lr_max: float,
              floor_fraction: float = 0.01) -> float:
    """Cosine annealing from ``lr_max`` down to ``floor_fraction * lr_max``.

    Epochs past ``total_epochs`` clamp to the floor rather than erroring.
    """
    if epoch < 0:
        raise ParameterError(f"epoch must be >= 0, got {epoch}")
    if total_epochs <= 0:
        raise ParameterError(f"total_epochs must be positive, got {total_epochs}")
    lr_min = floor_fraction * lr_max
    if epoch >= total_epochs:
        return lr_min
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + math.cos(math.pi * epoch / total_epochs))
