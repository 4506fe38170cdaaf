"""Mini-batch training loop.

Each epoch shuffles the data, resets the inhibitor, and for every full
mini-batch computes the outputs, the sparse one-hot target, the gradient
(target treated as a constant) and an optimizer step.  Bases are limited
to unit norm after every batch and at the end of the epoch; for bases
sitting on that limit the outward radial part of the gradient is dropped
before the optimizer sees it.  Training stops when the epoch loss
decreases by less than ``stop_rel_tol`` relative to the previous epoch,
or after ``max_epochs``.
"""

from __future__ import annotations

import enum
import sys
import tracemalloc
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericalError
from .model import (
    ModelParams,
    check_finite,
    forward,
    init_params,
    limit_unit_norm_,
    onehot_gradient,
    onehot_loss,
    project_norm_gradient_,
)
from .optimizer import Adaptive, FixedRate, OptimizerState, estimate_curvature, optimizer_init, step_
from .target import DEFAULT_EPSILON, InhibitorMode, InhibitorState, generate_target, new_inhibitor


class StopReason(str, enum.Enum):
    CONVERGED = "Converged"
    MAX_EPOCHS = "MaxEpochs"


@dataclass
class TrainConfig:
    n_outputs: int
    batch_size: int | None = None  # None -> n_outputs
    seed: int = 42
    stop_rel_tol: float = 1e-6
    max_epochs: int = 500
    inhibitor_mode: InhibitorMode = InhibitorMode.SOFT
    optimizer: Adaptive | FixedRate = field(default_factory=Adaptive)
    epsilon: float = DEFAULT_EPSILON
    always_normalize: bool = False
    limit_every_batch: bool = True
    verbose: bool = False

    @property
    def n_batch(self) -> int:
        return self.batch_size or self.n_outputs


@dataclass
class TrainReport:
    losses: list = field(default_factory=list)
    histograms: list = field(default_factory=list)
    epochs_run: int = 0
    stop_reason: StopReason = StopReason.MAX_EPOCHS

    def rel_decrements(self) -> list:
        out = [float("nan")]
        for prev, cur in zip(self.losses, self.losses[1:]):
            out.append(abs(prev - cur) / prev if prev > 0 else 0.0)
        return out


def stop_check(prev_loss: float, cur_loss: float, tol: float) -> bool:
    """True when the relative decrement between two epoch losses is below ``tol``."""
    if prev_loss == 0:
        return True
    return abs(prev_loss - cur_loss) / prev_loss < tol


def streams(seed: int):
    """Independent generators for shuffling and curvature probes."""
    seq = np.random.SeedSequence(seed)
    shuffle_seq, curv_seq = seq.spawn(2)
    return np.random.default_rng(shuffle_seq), np.random.default_rng(curv_seq)


def train_step(
    D_batch: np.ndarray,
    params: ModelParams,
    opt_state: OptimizerState,
    inhibitor: InhibitorState,
    rng: np.random.Generator,
    project: bool = True,
) -> tuple[float, np.ndarray]:
    """Process one mini-batch, updating ``params``, ``opt_state`` and ``inhibitor`` in place.

    Returns the batch loss measured before the update, and the winners.
    """
    H = forward(D_batch, params)
    winners, _ = generate_target(H, inhibitor)
    loss = onehot_loss(H, winners)
    if not np.isfinite(loss):
        raise NumericalError(f"non-finite batch loss {loss}")
    grads = onehot_gradient(D_batch, H, winners, overwrite_h=True)
    del H  # now holds the error signal; free it before the curvature probe
    if project:
        project_norm_gradient_(params, grads)
    curvature = None
    if isinstance(opt_state.kind, Adaptive):
        curvature = estimate_curvature(params, D_batch, winners, grads, rng)
    step_(opt_state, [params.W, params.b], list(grads), curvature)
    return loss, winners


def train(D, config: TrainConfig, params: ModelParams | None = None):
    """Learn a dictionary from the rows of ``D``.

    Returns ``(params, report)``.  Deterministic for a given ``(D, config)``.
    """
    D = np.ascontiguousarray(D, dtype=np.float64)
    n, n_inputs = D.shape
    n_out, n_b = config.n_outputs, config.n_batch
    if n < n_out:
        raise ConfigError(f"need at least N_h={n_out} samples, got {n}")
    if not 1 <= n_b <= n:
        raise ConfigError(f"batch size {n_b} must be in [1, {n}]")
    if (n // n_b) * n_b < n_out:
        raise ConfigError(f"an epoch of full batches holds fewer than N_h={n_out} samples")
    if not config.stop_rel_tol > 0:
        raise ConfigError("stop_rel_tol must be positive")
    if not np.isfinite(D).all():
        raise NumericalError("training data contains non-finite values")

    if params is None:
        params = init_params(n_inputs, n_out, seed=config.seed)
    else:
        params = params.copy()
    n_batches = n // n_b
    opt_state = optimizer_init(
        [params.W.shape, params.b.shape], config.optimizer, min_memory=n_batches
    )
    shuffle_rng, curv_rng = streams(config.seed)
    report = TrainReport()

    for epoch in range(1, config.max_epochs + 1):
        order = shuffle_rng.permutation(n)
        # sized by the samples this epoch will actually see, so leftovers do not skew the shares
        inhibitor = new_inhibitor(n_batches * n_b, n_out, config.epsilon, config.inhibitor_mode)
        epoch_loss = 0.0
        for b in range(n_batches):
            batch = D[order[b * n_b:(b + 1) * n_b]]
            loss, _ = train_step(batch, params, opt_state, inhibitor, curv_rng)
            epoch_loss += loss
            if config.limit_every_batch:
                limit_unit_norm_(params, always=config.always_normalize)
        limit_unit_norm_(params, always=config.always_normalize)
        check_finite(params, f"after epoch {epoch}")

        report.losses.append(epoch_loss)
        report.histograms.append(inhibitor.counts.copy())
        report.epochs_run = epoch
        converged = epoch > 1 and stop_check(report.losses[-2], epoch_loss, config.stop_rel_tol)
        if config.verbose:
            rel = report.rel_decrements()[-1]
            print(
                f"epoch {epoch} loss {epoch_loss:.6g} rel {rel:.3g} "
                f"hist_min {inhibitor.counts.min()} hist_max {inhibitor.counts.max()}",
                file=sys.stderr,
            )
        if converged:
            report.stop_reason = StopReason.CONVERGED
            break
    return params, report


def memory_formula(n_outputs: int, n_inputs: int, n_batch: int) -> int:
    """Elements needed for batch data, outputs, targets and parameters."""
    return n_outputs * (n_inputs + 1) + n_batch * (n_inputs + 2 * n_outputs)


def step_memory_high_water(
    D_batch: np.ndarray,
    params: ModelParams,
    opt_state: OptimizerState,
    inhibitor: InhibitorState,
    rng: np.random.Generator,
) -> int:
    """Peak number of float64-equivalent elements held while running one training step.

    Counts the persistent parameters and optimizer state plus the traced
    peak of everything allocated during the step (the batch copy is
    included by the caller passing a fresh ``D_batch``).
    """
    persistent = params.W.size + params.b.size + opt_state.n_elements + D_batch.size
    tracemalloc.start()
    try:
        tracemalloc.reset_peak()
        train_step(D_batch, params, opt_state, inhibitor, rng)
        _, peak = tracemalloc.get_traced_memory()
    finally:
        tracemalloc.stop()
    return persistent + -(-peak // 8)
