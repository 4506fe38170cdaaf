"""Ideal sparse target generation.

Each row of an output batch gets exactly one active unit: the unit with
the largest response once an inhibition term is subtracted.  Every time a
unit wins, its inhibition grows by ``n_outputs / n_samples + epsilon``, so
over an epoch the wins spread across all units.

The inhibitor is the only state and it is carried across the batches of
an epoch; rows must therefore be processed strictly in order.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import _backend
from .errors import ConfigError, ShapeError
from .model import LOGISTIC, Activation


class InhibitorMode(str, enum.Enum):
    SOFT = "soft"
    """The accumulator alone decides; a unit may exceed its share on adversarial input."""
    STRICT = "strict"
    """Units that reached ``cap`` wins are excluded from the argmax."""


DEFAULT_EPSILON = 1e-6


@dataclass
class InhibitorState:
    n_samples: int
    n_outputs: int
    epsilon: float
    mode: InhibitorMode
    a: np.ndarray
    counts: np.ndarray

    @property
    def increment(self) -> float:
        return self.n_outputs / self.n_samples + self.epsilon

    @property
    def cap(self) -> int:
        return math.ceil(self.n_samples / self.n_outputs)

    def copy(self) -> "InhibitorState":
        return InhibitorState(
            self.n_samples, self.n_outputs, self.epsilon, self.mode,
            self.a.copy(), self.counts.copy(),
        )


def new_inhibitor(
    n_samples: int,
    n_outputs: int,
    epsilon: float = DEFAULT_EPSILON,
    mode: InhibitorMode | str = InhibitorMode.SOFT,
) -> InhibitorState:
    """Flat (all-zero) inhibitor for an epoch over ``n_samples`` samples."""
    if n_outputs < 1:
        raise ConfigError("n_outputs must be at least 1")
    if n_samples < n_outputs:
        raise ConfigError(
            f"need at least as many samples as outputs (N={n_samples} < N_h={n_outputs})"
        )
    if not epsilon > 0:
        raise ConfigError("epsilon must be positive")
    return InhibitorState(
        n_samples=int(n_samples),
        n_outputs=int(n_outputs),
        epsilon=float(epsilon),
        mode=InhibitorMode(mode),
        a=np.zeros(n_outputs),
        counts=np.zeros(n_outputs, dtype=np.int64),
    )


def generate_target(H, state: InhibitorState, kernels=None):
    """Pick one winning unit per row of ``H``.

    Ties go to the lowest index.  ``state`` is updated in place and also
    returned, so the call reads ``winners, state = generate_target(H, state)``.

    Parameters
    ----------
    H : (n_rows, n_outputs) array
        Finite system outputs for one mini-batch.
    state : InhibitorState
        Inhibitor carried from the previous batches of this epoch.
    kernels : module, optional
        Kernel backend; defaults to the one selected at import.

    Returns
    -------
    winners : (n_rows,) int64 array
    state : InhibitorState
    """
    H = np.ascontiguousarray(H, dtype=np.float64)
    if H.ndim != 2:
        raise ShapeError(f"H must be 2-D, got shape {H.shape}")
    winners = np.empty(H.shape[0], dtype=np.int64)
    if H.shape[0] == 0:
        return winners, state
    if H.shape[1] != state.n_outputs:
        raise ShapeError(
            f"H has {H.shape[1]} columns but the inhibitor tracks {state.n_outputs}"
        )
    kernels = kernels or _backend.kernels
    kernels.epls_assign(
        H, state.a, state.counts, state.increment, state.cap,
        state.mode is InhibitorMode.STRICT, winners,
    )
    return winners, state


def remap_target(winners, n_outputs: int, activation: Activation = LOGISTIC) -> np.ndarray:
    """Dense target with the activation's active value at each winner."""
    winners = np.asarray(winners, dtype=np.int64)
    if winners.size and (winners.min() < 0 or winners.max() >= n_outputs):
        raise IndexError("winner index out of range")
    T = np.full((winners.shape[0], n_outputs), activation.inactive_value)
    T[np.arange(winners.shape[0]), winners] = activation.active_value
    return T
