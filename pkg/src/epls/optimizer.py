"""Adaptive learning rates for mini-batch SGD.

The adaptive rule keeps exponential moving averages of the gradient
``g_avg``, of its square ``v_avg`` and of a curvature estimate ``h_avg``,
and steps with

    rate = g_avg**2 / (h_avg * v_avg)

which is ``1/h`` when the gradient is noise-free and shrinks towards zero
as noise dominates.  The memory ``tau`` of the averages adapts as
``tau <- tau * (1 - g_avg**2 / v_avg) + 1``.

Details beyond that formula:

* ``variant`` picks where numerator and denominator are pooled before the
  division: per element (the default), per output unit (a basis column
  together with its bias) or over all parameters.
* The first ``bootstrap_batches`` gradients only seed the averages; no step
  is taken while bootstrapping.  Afterwards ``h_avg`` is multiplied by
  ``initial_damping`` so the first steps are small; the factor is forgotten
  at the pace of the memory.
* ``tau`` never drops below ``min_memory``.  The trainer sets it to one
  epoch of mini-batches, since targets depend on the position inside the
  epoch and shorter averages chase that pattern.

``FixedRate`` is plain SGD.  Parameters are handled as a list of arrays
(for the model: ``[W, b]``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import NumericalError
from .model import GradientPair, ModelParams, forward, onehot_gradient

CURVATURE_FLOOR = 1e-12


@dataclass(frozen=True)
class FixedRate:
    rate: float


@dataclass(frozen=True)
class Adaptive:
    """Safety constants of the adaptive rule; the defaults are not meant to be tuned."""

    bootstrap_batches: int = 10
    rate_ceiling: float = 10.0
    curvature_floor: float = CURVATURE_FLOOR
    variant: str = "elementwise"  # or "unit", or "global"
    min_memory: float | None = None  # None: supplied by the caller, else 1
    initial_damping: float = 1000.0

    def __post_init__(self):
        if self.bootstrap_batches < 2:
            raise ValueError("bootstrap_batches must be at least 2")
        if self.initial_damping < 1:
            raise ValueError("initial_damping must be at least 1")
        if self.variant not in ("elementwise", "unit", "global"):
            raise ValueError(f"unknown variant {self.variant!r}")


def parse_optimizer(text: str):
    """``"adaptive"`` or ``"fixed:<rate>"``."""
    if text == "adaptive":
        return Adaptive()
    if text.startswith("fixed:"):
        return FixedRate(float(text.split(":", 1)[1]))
    raise ValueError(f"optimizer must be 'adaptive' or 'fixed:<rate>', got {text!r}")


@dataclass
class OptimizerState:
    kind: object
    g_avg: list = field(default_factory=list)
    v_avg: list = field(default_factory=list)
    h_avg: list = field(default_factory=list)
    tau: list = field(default_factory=list)
    bootstrap_remaining: int = 0
    min_memory: float = 1.0
    last_rates: list = field(default_factory=list)

    @property
    def n_elements(self) -> int:
        """Number of scalars held (for memory accounting)."""
        return sum(a.size for group in (self.g_avg, self.v_avg, self.h_avg, self.tau) for a in group)


def optimizer_init(shapes: Sequence[tuple], kind, min_memory: float | None = None) -> OptimizerState:
    """Fresh state for parameters of the given shapes.

    ``min_memory`` is the floor on the averaging memory used when the
    adaptive kind leaves it unset; the trainer passes the number of
    mini-batches per epoch.
    """
    if isinstance(kind, FixedRate):
        return OptimizerState(kind)
    zeros = lambda: [np.zeros(s) for s in shapes]  # noqa: E731
    return OptimizerState(
        kind,
        g_avg=zeros(),
        v_avg=zeros(),
        h_avg=zeros(),
        tau=[np.full(s, float(kind.bootstrap_batches)) for s in shapes],
        bootstrap_remaining=kind.bootstrap_batches,
        min_memory=float(max(1.0, kind.min_memory or min_memory or 1.0)),
    )


def step_(state: OptimizerState, thetas, grads, curvature) -> None:
    """Update ``thetas`` (a list of arrays) in place from ``grads``.

    ``curvature`` holds one nonnegative array per parameter and is ignored
    for :class:`FixedRate`.
    """
    for g in grads:
        if not np.isfinite(g).all():
            raise NumericalError("non-finite gradient entries")
    kind = state.kind
    if isinstance(kind, FixedRate):
        for theta, g in zip(thetas, grads):
            theta -= kind.rate * g
        return

    curv = [np.maximum(c, kind.curvature_floor) for c in curvature]
    if state.bootstrap_remaining > 0:
        # accumulate plain sums, turn them into means on the last bootstrap batch
        for i, g in enumerate(grads):
            state.g_avg[i] += g
            state.v_avg[i] += g * g
            state.h_avg[i] += curv[i]
        state.bootstrap_remaining -= 1
        if state.bootstrap_remaining == 0:
            for group in (state.g_avg, state.v_avg, state.h_avg):
                for a in group:
                    a /= kind.bootstrap_batches
            for a in state.h_avg:
                a *= kind.initial_damping
        state.last_rates = [np.zeros_like(g) for g in grads]
        return

    # moving averages, then the per-element rate numerator and denominator
    nums, dens = [], []
    for i, g in enumerate(grads):
        g_avg, v_avg, h_avg, tau = state.g_avg[i], state.v_avg[i], state.h_avg[i], state.tau[i]
        w = 1.0 / tau
        g_avg *= 1.0 - w
        g_avg += w * g
        v_avg *= 1.0 - w
        v_avg += w * (g * g)
        h_avg *= 1.0 - w
        h_avg += w * curv[i]
        nums.append(g_avg * g_avg)
        dens.append(h_avg * v_avg)

    if kind.variant == "elementwise":
        rates = [np.divide(n, d, out=np.zeros_like(n), where=d > 0) for n, d in zip(nums, dens)]
    elif kind.variant == "unit":
        num = sum(_per_unit(n) for n in nums)
        den = sum(_per_unit(d) for d in dens)
        unit_rate = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
        rates = [np.broadcast_to(unit_rate, g.shape).copy() for g in grads]
    else:
        num = sum(float(n.sum()) for n in nums)
        den = sum(float(d.sum()) for d in dens)
        rates = [np.full_like(g, num / den if den > 0 else 0.0) for g in grads]

    for i, (theta, g) in enumerate(zip(thetas, grads)):
        rate = rates[i]
        np.clip(rate, 0.0, kind.rate_ceiling, out=rate)
        ratio = np.divide(nums[i], state.v_avg[i], out=np.zeros_like(g), where=state.v_avg[i] > 0)
        np.clip(ratio, 0.0, 1.0, out=ratio)
        tau = state.tau[i]
        tau *= 1.0 - ratio
        tau += 1.0
        np.maximum(tau, state.min_memory, out=tau)
        theta -= rate * g
    state.last_rates = rates


def _per_unit(a):
    """Sum over every axis but the last (the output-unit axis)."""
    return a.sum(axis=tuple(range(a.ndim - 1))) if a.ndim > 1 else a


def estimate_rates_and_step(
    state: OptimizerState,
    params: ModelParams,
    grads: GradientPair,
    curvature=None,
    inplace: bool = False,
):
    """One optimizer step on model parameters.

    Returns ``(params, state)``; ``params`` is a new object unless
    ``inplace`` is set.  ``curvature`` is ``[curv_W, curv_b]`` and is
    ignored for :class:`FixedRate`.
    """
    out = params if inplace else params.copy()
    step_(state, [out.W, out.b], list(grads), curvature)
    return out, state


def finite_difference_curvature(
    grad_fn: Callable[[list], list],
    thetas: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    rng: np.random.Generator,
    floor: float = CURVATURE_FLOOR,
) -> list:
    """Diagonal curvature magnitude from one extra gradient evaluation.

    Every parameter is moved by ``1e-4 * (1 + |theta|)`` times a random
    factor in ``[0.5, 1.5]``, in the direction of its gradient's sign, so
    the probe follows the descent direction and picks up the coupling
    between parameters along it.  Returns ``|delta_grad / delta_theta|``,
    floored.
    """
    deltas = []
    for theta, g in zip(thetas, grads):
        d = rng.uniform(0.5, 1.5, size=theta.shape)
        d *= 1e-4 * (1.0 + np.abs(theta))
        d[g < 0] *= -1.0
        deltas.append(d)
    moved = grad_fn([theta + d for theta, d in zip(thetas, deltas)])
    curv = []
    for g_new, g, d in zip(moved, grads, deltas):
        g_new -= g
        g_new /= d
        np.abs(g_new, out=g_new)
        np.maximum(g_new, floor, out=g_new)
        curv.append(g_new)
    return curv


def estimate_curvature(params: ModelParams, D_batch, winners, grads: GradientPair, rng) -> list:
    """Curvature of the batch loss around ``params`` with the target held fixed."""
    def grad_fn(thetas):
        H = forward(D_batch, ModelParams(thetas[0], thetas[1], params.activation))
        thetas.clear()  # release the perturbed copy before the gradient buffers exist
        return list(onehot_gradient(D_batch, H, winners, overwrite_h=True))

    return finite_difference_curvature(grad_fn, [params.W, params.b], list(grads), rng)
