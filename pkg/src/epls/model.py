"""Single-layer logistic system, its squared error and closed-form gradient.

Matrices are plain 2-D ``float64`` numpy arrays: data ``D`` is
``(n_samples, n_inputs)``, the dictionary ``W`` is ``(n_inputs, n_outputs)``
with one basis per column, outputs ``H`` and targets ``T`` are
``(n_samples, n_outputs)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import NumericalError, ShapeError


@dataclass(frozen=True)
class Activation:
    """Output non-linearity plus the values a one-hot target is remapped to."""

    name: str
    tag: int
    active_value: float
    inactive_value: float


NORM_SLACK = 1e-12

LOGISTIC = Activation("logistic", tag=0, active_value=1.0, inactive_value=0.0)
ACTIVATIONS = {LOGISTIC.tag: LOGISTIC, LOGISTIC.name: LOGISTIC}


@dataclass
class ModelParams:
    W: np.ndarray
    b: np.ndarray
    activation: Activation = field(default=LOGISTIC)

    def __post_init__(self):
        self.W = np.ascontiguousarray(self.W, dtype=np.float64)
        self.b = np.ascontiguousarray(self.b, dtype=np.float64).reshape(-1)
        if self.W.ndim != 2 or self.W.shape[1] != self.b.shape[0]:
            raise ShapeError(
                f"W {self.W.shape} and b {self.b.shape} disagree on the output count"
            )

    @property
    def n_inputs(self) -> int:
        return self.W.shape[0]

    @property
    def n_outputs(self) -> int:
        return self.W.shape[1]

    def copy(self) -> "ModelParams":
        return ModelParams(self.W.copy(), self.b.copy(), self.activation)


class GradientPair(NamedTuple):
    dW: np.ndarray
    db: np.ndarray


def logistic(x, out=None):
    """Numerically safe logistic function, optionally in place."""
    if out is None:
        out = np.array(x, dtype=np.float64, copy=True)
    elif out is not x:
        np.copyto(out, x)
    with np.errstate(over="ignore"):
        np.negative(out, out=out)
        np.exp(out, out=out)
    out += 1.0
    np.reciprocal(out, out=out)
    return out


def _check_2d(name, m):
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {m.shape}")
    return m


def forward(D, params: ModelParams) -> np.ndarray:
    """Return ``H = logistic(D @ W + b)``."""
    D = _check_2d("D", D)
    if D.shape[1] != params.W.shape[0]:
        raise ShapeError(
            f"data has {D.shape[1]} columns but W expects {params.W.shape[0]} inputs"
        )
    Z = D @ params.W
    Z += params.b
    return logistic(Z, out=Z)


def l2_loss(H, T) -> float:
    """Sum of squared differences between output and target."""
    H = np.asarray(H, dtype=np.float64)
    T = np.asarray(T, dtype=np.float64)
    if H.shape != T.shape:
        raise ShapeError(f"H {H.shape} and T {T.shape} differ")
    R = H - T
    return float(np.vdot(R, R))


def onehot_loss(H, winners) -> float:
    """``l2_loss(H, T)`` for a 0/1 one-hot ``T`` given only its winning columns.

    Uses ``||h - e_k||^2 = ||h||^2 + 1 - 2 h_k`` so no dense target is built.
    """
    rows = np.arange(H.shape[0])
    return float(np.vdot(H, H) - 2.0 * H[rows, winners].sum() + H.shape[0])


def gradient(D, H, T) -> GradientPair:
    """Gradient of ``l2_loss(forward(D, params), T)`` w.r.t. ``(W, b)`` with T held fixed."""
    D = _check_2d("D", D)
    H = _check_2d("H", H)
    T = _check_2d("T", T)
    if H.shape != T.shape or D.shape[0] != H.shape[0]:
        raise ShapeError(f"inconsistent shapes D {D.shape}, H {H.shape}, T {T.shape}")
    S = 2.0 * (H - T) * H * (1.0 - H)
    return GradientPair(D.T @ S, S.sum(axis=0))


def onehot_gradient(D, H, winners, overwrite_h: bool = False) -> GradientPair:
    """Same as :func:`gradient` for a 0/1 one-hot target given by ``winners``.

    With ``overwrite_h`` the output buffer is reused for the error signal,
    which keeps the training step within two output-sized buffers.
    """
    S = H if overwrite_h else H.copy()
    slope = 1.0 - H
    slope *= H
    S[np.arange(S.shape[0]), winners] -= 1.0
    S *= slope
    S *= 2.0
    del slope
    return GradientPair(D.T @ S, S.sum(axis=0))


def limit_unit_norm(params: ModelParams, always: bool = False) -> ModelParams:
    """Rescale every basis whose Euclidean norm exceeds one back to unit norm.

    With ``always=True`` every non-zero basis is normalised to exactly one.
    The bias is left alone.
    """
    out = params.copy()
    limit_unit_norm_(out, always=always)
    return out


def limit_unit_norm_(params: ModelParams, always: bool = False) -> None:
    """In-place variant of :func:`limit_unit_norm`."""
    norms = np.sqrt(np.einsum("ij,ij->j", params.W, params.W))
    # the slack keeps a rescaled column (norm 1 up to rounding) from being touched again
    mask = np.abs(norms - 1.0) > NORM_SLACK if always else norms > 1.0 + NORM_SLACK
    mask &= norms > 0.0
    if mask.any():
        params.W[:, mask] /= norms[mask]


def project_norm_gradient_(params: ModelParams, grads: GradientPair, tol: float = 1e-9) -> None:
    """Drop the outward radial part of ``dW`` for bases already at unit norm.

    A descent step along that component would only be undone by
    :func:`limit_unit_norm`; what remains is the gradient on the constraint
    surface.  ``grads`` is modified in place.
    """
    W, dW = params.W, grads.dW
    sq = np.einsum("ij,ij->j", W, W)
    radial = np.einsum("ij,ij->j", dW, W)
    # descent direction is -dW, so it points outward when radial < 0
    mask = (sq >= 1.0 - tol) & (radial < 0.0)
    if mask.any():
        dW[:, mask] -= W[:, mask] * (radial[mask] / sq[mask])


def init_params(n_inputs: int, n_outputs: int, seed=0) -> ModelParams:
    """Small uniform random bases in ``[-1/sqrt(n_inputs), 1/sqrt(n_inputs)]``, zero bias."""
    if n_inputs < 1 or n_outputs < 1:
        raise ShapeError("need at least one input and one output")
    rng = np.random.default_rng(seed)
    bound = 1.0 / np.sqrt(n_inputs)
    W = rng.uniform(-bound, bound, size=(n_inputs, n_outputs))
    return ModelParams(W, np.zeros(n_outputs))


def check_finite(params: ModelParams, where: str = "") -> None:
    if not (np.isfinite(params.W).all() and np.isfinite(params.b).all()):
        raise NumericalError(f"non-finite parameters {where}".strip())
