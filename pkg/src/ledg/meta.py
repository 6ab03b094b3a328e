"""Episodic meta-training over snapshot windows.

Every training episode targets one snapshot time t. The inner loop walks the
w-snapshot window before (and, in the default mode, including) t, taking one
SGD step per window snapshot on the self-supervised time-regression loss;
only the encoder and adapter groups move. The outer loop then differentiates
the summed target-snapshot objective (task loss plus a weighted time loss,
evaluated at every intermediate adapted state) with respect to the original
parameters and updates all groups. On an exact tape the outer gradient flows
through the recorded inner updates; on a first_order tape the inner gradients
are constants, which yields the cheaper first-order approximation. With
eta_in = 0 both modes collapse, bit for bit, to joint training.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from . import numerics as nx
from .errors import ConfigError, ContractError, ValidationError
from .graphdata import (
    DynamicGraphSequence,
    SnapshotGraph,
    TaskBatch,
    classification_batch,
    sample_link_prediction_batch,
    seed_from,
)
from .model import ModelSpec, embed, init_parameters, task_loss, task_predict, time_loss
from .numerics import INNER_LOOP_GROUPS, ParameterSet, Tape, Tensor, l2_norm

__all__ = [
    "TrainingConfig",
    "EpisodeWindow",
    "EpisodeRecord",
    "TrainResult",
    "build_window",
    "earliest_target_time",
    "inner_adapt",
    "outer_step",
    "run_episode",
    "train",
    "adapt_and_predict",
]

GRADIENT_MODES = ("first_order", "exact")
STRUCTURE_MODES = ("same_snapshot", "previous_snapshot")
OUTER_OPTIMIZERS = ("sgd", "adam")


@dataclass(frozen=True)
class TrainingConfig:
    """Hyperparameters of the episodic training loop.

    ``eta_in`` left unset defaults to ten times ``eta_out``. Setting
    ``eta_in`` to zero disables adaptation entirely (the joint-training
    ablation). ``target_structure_mode`` picks whether the window ends at
    the target snapshot itself (``same_snapshot``) or one step earlier
    (``previous_snapshot``, which also encodes the target batch with the
    previous snapshot's structure and never touches the target's edges).
    """

    window_size: int = 3
    eta_out: float = 0.005
    eta_in: float | None = None
    lambda_time: float = 0.1
    gradient_mode: str = "first_order"
    target_structure_mode: str = "same_snapshot"
    epochs: int = 20
    seed: int = 0
    outer_optimizer: str = "sgd"
    train_negative_ratio: int = 1
    early_stop_patience: int | None = None

    def __post_init__(self):
        if self.window_size < 1:
            raise ValidationError("window_size must be at least 1")
        if self.eta_out <= 0:
            raise ValidationError("eta_out must be positive")
        if self.eta_in is None:
            object.__setattr__(self, "eta_in", 10.0 * self.eta_out)
        if self.eta_in < 0:
            raise ValidationError("eta_in must be nonnegative")
        if self.lambda_time < 0:
            raise ValidationError("lambda_time must be nonnegative")
        if self.gradient_mode not in GRADIENT_MODES:
            raise ValidationError(f"gradient_mode must be one of {GRADIENT_MODES}")
        if self.target_structure_mode not in STRUCTURE_MODES:
            raise ValidationError(f"target_structure_mode must be one of {STRUCTURE_MODES}")
        if self.epochs < 0:
            raise ValidationError("epochs must be nonnegative")
        if self.outer_optimizer not in OUTER_OPTIMIZERS:
            raise ValidationError(f"outer_optimizer must be one of {OUTER_OPTIMIZERS}")
        if self.train_negative_ratio < 1:
            raise ValidationError("train_negative_ratio must be at least 1")
        if self.early_stop_patience is not None and self.early_stop_patience < 1:
            raise ValidationError("early_stop_patience must be at least 1 when set")


@dataclass(frozen=True)
class EpisodeWindow:
    """The w snapshots adapted over for one target time.

    ``snapshots[i-1]`` carries relative index i (i = 1..w).
    ``target_regression_index`` is the target snapshot's relative index
    under the same re-indexing: w when the window ends at the target, w+1
    when it ends one step earlier. ``structure_snapshot`` provides the
    adjacency and features used to encode the target batch.
    """

    target_time: int
    snapshots: tuple[SnapshotGraph, ...]
    structure_snapshot: SnapshotGraph
    target_regression_index: int

    @property
    def size(self) -> int:
        return len(self.snapshots)


def earliest_target_time(config: TrainingConfig) -> int:
    """Smallest t whose whole window lies within the sequence (times >= 1)."""
    w = config.window_size
    return w if config.target_structure_mode == "same_snapshot" else w + 1


def build_window(sequence: DynamicGraphSequence, t: int, config: TrainingConfig) -> EpisodeWindow:
    """Assemble the episode window for target time t.

    In same_snapshot mode the window covers times t-w+1 .. t and the target
    is encoded on its own snapshot. In previous_snapshot mode it covers
    t-w .. t-1 and the target is encoded on snapshot t-1.
    """
    w = config.window_size
    first = earliest_target_time(config)
    if t < first:
        raise ValidationError(
            f"target time {t} needs window snapshots before time 1 "
            f"(earliest valid target is {first})"
        )
    if t > len(sequence):
        raise ValidationError(f"target time {t} beyond last snapshot {len(sequence)}")
    if config.target_structure_mode == "same_snapshot":
        times = range(t - w + 1, t + 1)
        structure = sequence.snapshot_at(t)
        regression_index = w
    else:
        times = range(t - w, t)
        structure = sequence.snapshot_at(t - 1)
        regression_index = w + 1
    return EpisodeWindow(
        target_time=t,
        snapshots=tuple(sequence.snapshot_at(i) for i in times),
        structure_snapshot=structure,
        target_regression_index=regression_index,
    )


def inner_adapt(
    window: EpisodeWindow,
    params: ParameterSet,
    spec: ModelSpec,
    config: TrainingConfig,
    tape: Tape,
) -> tuple[list[ParameterSet], list[float]]:
    """Sequential SGD on time regression over the window snapshots.

    Step i embeds window snapshot i with the current state, regresses its
    relative index i, and moves only the encoder and adapter groups by
    eta_in times the gradient. Returns all w intermediate states (each a
    full parameter set sharing the untouched heads) and the w loss values.
    The update arithmetic runs on the given tape, so an exact tape makes
    later outer gradients flow through every step.
    """
    if window.size != config.window_size:
        raise ContractError(
            f"window has {window.size} snapshots, config expects {config.window_size}"
        )
    states: list[ParameterSet] = []
    losses: list[float] = []
    current = params
    with tape:
        for i, snap in enumerate(window.snapshots, start=1):
            bundle = embed(snap, current, spec)
            loss = time_loss(bundle.time_part, current, spec, target_time=float(i))
            pairs = current.items_in(*INNER_LOOP_GROUPS)
            grads = tape.gradient(loss, [tensor for _, tensor in pairs])
            updates = {
                name: nx.sub(tensor, nx.mul_scalar(g, config.eta_in))
                for (name, tensor), g in zip(pairs, grads)
            }
            current = current.with_updates(updates)
            states.append(current)
            losses.append(loss.item())
    return states, losses


@dataclass(frozen=True)
class EpisodeRecord:
    """One structured log line per (epoch, target time)."""

    epoch: int
    target_time: int
    inner_losses: tuple[float, ...]
    task_loss_sum: float
    time_loss_sum: float
    objective: float
    grad_norm: float

    def to_json(self) -> str:
        payload = {
            "epoch": self.epoch,
            "target_time": self.target_time,
            "inner_losses": list(self.inner_losses),
            "task_loss_sum": self.task_loss_sum,
            "time_loss_sum": self.time_loss_sum,
            "objective": self.objective,
            "grad_norm": self.grad_norm,
        }
        return json.dumps(payload, sort_keys=True)


class _SgdState:
    def __init__(self, eta: float):
        self.eta = eta

    def apply(self, params: ParameterSet, grads: dict[str, Tensor]) -> ParameterSet:
        updates = {
            name: Tensor(params[name].data - self.eta * g.data, requires_grad=True)
            for name, g in grads.items()
        }
        return params.with_updates(updates)


class _AdamState:
    """Plain adaptive-moment estimation with bias correction."""

    def __init__(self, eta: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.eta = eta
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def apply(self, params: ParameterSet, grads: dict[str, Tensor]) -> ParameterSet:
        self.step += 1
        updates = {}
        for name, g in grads.items():
            gd = g.data
            m = self.beta1 * self.m.get(name, 0.0) + (1 - self.beta1) * gd
            v = self.beta2 * self.v.get(name, 0.0) + (1 - self.beta2) * gd * gd
            self.m[name] = m
            self.v[name] = v
            m_hat = m / (1 - self.beta1**self.step)
            v_hat = v / (1 - self.beta2**self.step)
            new = params[name].data - self.eta * m_hat / (np.sqrt(v_hat) + self.eps)
            updates[name] = Tensor(new, requires_grad=True)
        return params.with_updates(updates)


def _make_optimizer(config: TrainingConfig):
    if config.outer_optimizer == "adam":
        return _AdamState(config.eta_out)
    return _SgdState(config.eta_out)


def outer_step(
    window: EpisodeWindow,
    adapted_states: list[ParameterSet],
    target_batch: TaskBatch,
    params: ParameterSet,
    spec: ModelSpec,
    config: TrainingConfig,
    tape: Tape,
    optimizer=None,
) -> tuple[ParameterSet, EpisodeRecord]:
    """One meta-update from the summed target losses over all adapted states.

    The objective is sum over i of task_loss_i + lambda * time_loss_i, with
    every term computed on the target batch using adapted state i and the
    window's structure snapshot; the time term regresses the target's
    relative index. The gradient is taken with respect to the original
    (pre-adaptation) parameters on the same tape that recorded the inner
    updates and every group is moved by one optimizer step.
    """
    if len(adapted_states) != window.size:
        raise ContractError(
            f"got {len(adapted_states)} adapted states for a window of {window.size}"
        )
    if target_batch is None:
        raise ContractError("outer_step needs the target snapshot's task batch")
    if optimizer is None:
        optimizer = _SgdState(config.eta_out)
    task_total = None
    time_total = None
    with tape:
        for state in adapted_states:
            bundle = embed(window.structure_snapshot, state, spec)
            predictions = task_predict(bundle, state, spec, target_batch)
            l_task = task_loss(predictions, target_batch.labels)
            l_time = time_loss(
                bundle.time_part, state, spec, float(window.target_regression_index)
            )
            task_total = l_task if task_total is None else nx.add(task_total, l_task)
            time_total = l_time if time_total is None else nx.add(time_total, l_time)
        objective = nx.add(task_total, nx.mul_scalar(time_total, config.lambda_time))
        pairs = params.items_in()
        grads = tape.gradient(objective, [tensor for _, tensor in pairs])
    grad_map = {name: g for (name, _), g in zip(pairs, grads)}
    new_params = optimizer.apply(params, grad_map)
    record = EpisodeRecord(
        epoch=0,
        target_time=window.target_time,
        inner_losses=(),
        task_loss_sum=task_total.item(),
        time_loss_sum=time_total.item(),
        objective=objective.item(),
        grad_norm=l2_norm(grads),
    )
    return new_params, record


def _target_batch(sequence: DynamicGraphSequence, t: int, config: TrainingConfig, epoch: int):
    snapshot = sequence.snapshot_at(t)
    if sequence.task == "link_prediction":
        if snapshot.num_edges == 0:
            return None
        batch_seed = int(seed_from(config.seed, "episode", epoch).generate_state(1)[0])
        return sample_link_prediction_batch(
            snapshot, config.train_negative_ratio, mode="train", seed=batch_seed
        )
    try:
        return classification_batch(snapshot, sequence.task)
    except ValidationError:
        return None


def run_episode(
    sequence: DynamicGraphSequence,
    t: int,
    params: ParameterSet,
    spec: ModelSpec,
    config: TrainingConfig,
    epoch: int = 0,
    optimizer=None,
    target_batch: TaskBatch | None = None,
) -> tuple[ParameterSet, EpisodeRecord | None]:
    """Inner adaptation plus outer update for one target time.

    Returns the parameters unchanged (and no record) when the target
    snapshot offers no supervised items.
    """
    if target_batch is None:
        target_batch = _target_batch(sequence, t, config, epoch)
    if target_batch is None:
        return params, None
    window = build_window(sequence, t, config)
    tape = Tape(config.gradient_mode)
    states, inner_losses = inner_adapt(window, params, spec, config, tape)
    new_params, record = outer_step(
        window, states, target_batch, params, spec, config, tape, optimizer
    )
    record = replace(record, epoch=epoch, inner_losses=tuple(inner_losses))
    return new_params, record


@dataclass
class TrainResult:
    params: ParameterSet
    records: list[EpisodeRecord] = field(default_factory=list)
    epoch_objectives: list[float] = field(default_factory=list)
    val_scores: list[float] = field(default_factory=list)
    stopped_early: bool = False


def train(
    sequence: DynamicGraphSequence,
    spec: ModelSpec,
    config: TrainingConfig,
    initial_params: ParameterSet | None = None,
    val_hook=None,
    log_hook=None,
) -> TrainResult:
    """Run episodic training over the training split.

    Each epoch sweeps target times in strict temporal order from the
    earliest complete window to the end of the training split, updating the
    parameters after every episode. ``val_hook(params, epoch) -> float``
    (higher is better) selects the best-scoring epoch's parameters and, when
    ``early_stop_patience`` is set, stops after that many non-improving
    epochs; ``log_hook(record)`` sees every episode record as it is made.
    Deterministic given (sequence, spec, config).
    """
    train_end = sequence.split[0]
    first = earliest_target_time(config)
    if first > train_end:
        raise ConfigError(
            f"window_size {config.window_size} needs more than "
            f"{train_end} training snapshots in {config.target_structure_mode} mode"
        )
    if config.window_size >= train_end:
        raise ConfigError(
            f"window_size must be smaller than the {train_end} training snapshots"
        )
    params = initial_params if initial_params is not None else init_parameters(spec, config.seed)
    result = TrainResult(params=params)
    optimizer = _make_optimizer(config)
    best_score = -np.inf
    best_params = params
    stale = 0
    for epoch in range(1, config.epochs + 1):
        epoch_total = 0.0
        count = 0
        for t in range(first, train_end + 1):
            params, record = run_episode(
                sequence, t, params, spec, config, epoch=epoch, optimizer=optimizer
            )
            if record is None:
                continue
            result.records.append(record)
            if log_hook is not None:
                log_hook(record)
            epoch_total += record.objective
            count += 1
        result.epoch_objectives.append(epoch_total / max(count, 1))
        if val_hook is not None:
            score = float(val_hook(params, epoch))
            result.val_scores.append(score)
            if score > best_score:
                best_score = score
                best_params = params
                stale = 0
            else:
                stale += 1
            if config.early_stop_patience is not None and stale >= config.early_stop_patience:
                result.stopped_early = True
                break
    result.params = params if val_hook is None else best_params
    return result


def adapt_and_predict(
    sequence: DynamicGraphSequence,
    params: ParameterSet,
    t: int,
    spec: ModelSpec,
    config: TrainingConfig,
    batch: TaskBatch | None = None,
    negative_ratio: int | None = None,
    batch_seed: int | None = None,
):
    """Adapt to the window ending at evaluation time t, then predict.

    Only the self-supervised time-regression loss drives the adaptation, so
    the target's task labels are never consulted before prediction (and in
    previous_snapshot mode the target snapshot is not looked at at all).
    The caller's parameters are cloned first and stay untouched. Returns
    (bundle, predictions, batch, adapted_params) where predictions are class
    probabilities for the batch (sampled here if not supplied).

    Adapted values do not depend on the tape mode, so a first_order tape is
    always used.
    """
    if batch is None:
        snapshot = sequence.snapshot_at(t)
        if sequence.task == "link_prediction":
            seed = batch_seed if batch_seed is not None else int(
                seed_from(config.seed, "evalbatch").generate_state(1)[0]
            )
            batch = sample_link_prediction_batch(snapshot, negative_ratio, mode="eval", seed=seed)
        else:
            batch = classification_batch(snapshot, sequence.task)
    window = build_window(sequence, t, config)
    working = params.clone()
    tape = Tape("first_order")
    states, _ = inner_adapt(window, working, spec, config, tape)
    final_state = states[-1]
    with tape:
        bundle = embed(window.structure_snapshot, final_state, spec)
        predictions = task_predict(bundle, final_state, spec, batch)
    return bundle, predictions, batch, final_state
