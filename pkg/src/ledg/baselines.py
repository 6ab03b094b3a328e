"""Static GCN baseline: one encoder plus one classifier head, trained by
accumulating task gradients over every training snapshot and stepping once
per epoch. No adaptation, no time loss.

A static model has no notion of time, so once training ends its node
representations are frozen: evaluation embeds the last training snapshot
and reuses those embeddings for every later time. Training is kept
protocol-compatible with the episodic trainer (same target times, same
structure mode, same batch sampling seeds) so comparisons isolate the
method rather than the data pipeline.
"""

from __future__ import annotations

import numpy as np

from . import numerics as nx
from .errors import ConfigError
from .graphdata import DynamicGraphSequence, SnapshotGraph, TaskBatch
from .meta import TrainingConfig, _target_batch, earliest_target_time
from .model import ModelSpec, apply_head, encode, init_parameters, task_loss
from .numerics import ParameterSet, Tape, Tensor

__all__ = [
    "init_static_parameters",
    "static_predict",
    "static_edge_scores",
    "static_scorer",
    "train_static_gcn",
]


def init_static_parameters(spec: ModelSpec, seed: int) -> ParameterSet:
    """Encoder plus single classifier head, sharing the full model's init values."""
    full = init_parameters(spec, seed)
    tensors = {}
    groups = {}
    for group in ("gnn", "classifier_graph"):
        names = full.group_names(group)
        groups[group] = names
        tensors.update({name: full[name] for name in names})
    return ParameterSet(tensors, groups)


def static_predict(
    snapshot: SnapshotGraph, params: ParameterSet, spec: ModelSpec, batch: TaskBatch
) -> Tensor:
    """Class probabilities from the plain encoder and the single head."""
    h = encode(snapshot, params, spec.encoder)
    if batch.kind == "edge":
        x = nx.concat_cols(
            nx.gather_rows(h, batch.items[:, 0]), nx.gather_rows(h, batch.items[:, 1])
        )
    else:
        x = nx.gather_rows(h, batch.items)
    return nx.softmax_rows(apply_head(params, spec, "classifier_graph", x))


def static_edge_scores(
    snapshot: SnapshotGraph, params: ParameterSet, spec: ModelSpec, batch: TaskBatch
) -> np.ndarray:
    """Positive-class probability averaged over both endpoint orders."""
    forward = static_predict(snapshot, params, spec, batch)
    swapped = TaskBatch(batch.time_index, "edge", batch.items[:, ::-1], batch.labels)
    backward = static_predict(snapshot, params, spec, swapped)
    return 0.5 * (forward.data[:, 1] + backward.data[:, 1])


def structure_snapshot_for(sequence: DynamicGraphSequence, t: int, config: TrainingConfig):
    """The snapshot whose adjacency encodes time t's batch under the config mode."""
    if config.target_structure_mode == "same_snapshot":
        return sequence.snapshot_at(t)
    return sequence.snapshot_at(t - 1)


def static_scorer(sequence: DynamicGraphSequence, params: ParameterSet, spec: ModelSpec):
    """Edge scorer that embeds the last training snapshot, whatever time is asked.

    Static models never observe post-training structure; their embeddings
    are computed once and go stale as the graph drifts.
    """
    frozen = sequence.snapshot_at(sequence.split[0])

    def scorer(batch: TaskBatch) -> np.ndarray:
        return static_edge_scores(frozen, params, spec, batch)

    return scorer


def train_static_gcn(
    sequence: DynamicGraphSequence,
    spec: ModelSpec,
    config: TrainingConfig,
    initial_params: ParameterSet | None = None,
) -> tuple[ParameterSet, list[float]]:
    """Accumulated-gradient training: sum the task loss over every training
    target, then take one gradient step per epoch.

    Ignores ``eta_in`` and ``lambda_time``; uses ``eta_out`` as the step
    size and the shared batch-sampling seeds. Returns the trained
    parameters and the per-epoch summed losses.
    """
    train_end = sequence.split[0]
    first = earliest_target_time(config)
    if first > train_end:
        raise ConfigError(f"no training targets exist for window_size {config.window_size}")
    params = (
        initial_params if initial_params is not None else init_static_parameters(spec, config.seed)
    )
    losses = []
    for epoch in range(1, config.epochs + 1):
        tape = Tape("first_order")
        total = None
        with tape:
            for t in range(first, train_end + 1):
                batch = _target_batch(sequence, t, config, epoch)
                if batch is None:
                    continue
                structure = structure_snapshot_for(sequence, t, config)
                predictions = static_predict(structure, params, spec, batch)
                loss = task_loss(predictions, batch.labels)
                total = loss if total is None else nx.add(total, loss)
            if total is None:
                raise ConfigError("no training target produced a batch")
            pairs = params.items_in()
            grads = tape.gradient(total, [tensor for _, tensor in pairs])
        updates = {
            name: Tensor(tensor.data - config.eta_out * g.data, requires_grad=True)
            for (name, tensor), g in zip(pairs, grads)
        }
        params = params.with_updates(updates)
        losses.append(total.item())
    return params, losses
