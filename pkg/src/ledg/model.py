"""The network: message-passing encoder, gated embedding split into a
time-varying and a graph-intrinsic part, a time-regression head, and dual
classification heads whose logits are summed before one softmax.

Parameters live in a :class:`~ledg.numerics.ParameterSet` under five groups:
``gnn`` (encoder), ``adapter`` (the gate MLP), ``time_predictor``, and the
two classifier heads. All forward functions are pure in (parameters, input)
and record onto whatever tape is active.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .errors import ContractError, DatasetError, ShapeError, ValidationError
from .graphdata import SnapshotGraph, TaskBatch, seed_from
from .numerics import ParameterSet, Tensor

__all__ = [
    "EncoderConfig",
    "ModelSpec",
    "EmbeddingBundle",
    "MlpHead",
    "HEAD_ROLES",
    "init_parameters",
    "encode",
    "disentangle",
    "embed",
    "apply_head",
    "time_loss",
    "task_predict",
    "task_loss",
    "save_checkpoint",
    "load_checkpoint",
]

BASE_MODELS = ("gcn", "attention")
ACTIVATIONS = ("relu", "linear")
HEAD_ROLES = ("adapter", "time_predictor", "classifier_time", "classifier_graph")

#: attention scores pass through a leaky ReLU with this negative slope
ATTENTION_SLOPE = 0.2
#: additive mask value that zeroes non-neighbors after the row softmax
MASK_VALUE = -1e9
#: probabilities are clamped here before the log in cross-entropy
PROB_FLOOR = 1e-12

CHECKPOINT_FORMAT = "LEDGCKPT1"


@dataclass(frozen=True)
class EncoderConfig:
    """Shape and flavor of the message-passing encoder."""

    base_model: str = "gcn"
    num_layers: int = 2
    input_dim: int = 1
    hidden_dim: int = 64
    activation: str = "relu"

    def __post_init__(self):
        if self.base_model not in BASE_MODELS:
            raise ValidationError(f"base_model must be one of {BASE_MODELS}")
        if self.num_layers < 1:
            raise ValidationError("num_layers must be at least 1")
        if self.input_dim < 1 or self.hidden_dim < 1:
            raise ValidationError("dimensions must be positive")
        if self.activation not in ACTIVATIONS:
            raise ValidationError(f"activation must be one of {ACTIVATIONS}")


@dataclass(frozen=True)
class ModelSpec:
    """Encoder config plus the task the heads are shaped for."""

    encoder: EncoderConfig
    task: str = "link_prediction"
    num_classes: int = 2

    def __post_init__(self):
        if self.task not in ("link_prediction", "edge_classification", "node_classification"):
            raise ValidationError(f"unknown task {self.task!r}")
        if self.num_classes < 2:
            raise ValidationError("num_classes must be at least 2")

    @property
    def batch_kind(self) -> str:
        return "node" if self.task == "node_classification" else "edge"

    @property
    def classifier_input_dim(self) -> int:
        # edge tasks concatenate source and destination embeddings
        d = self.encoder.hidden_dim
        return d if self.batch_kind == "node" else 2 * d


@dataclass(frozen=True)
class EmbeddingBundle:
    """Encoder output split by the learned gate.

    ``graph_part + time_part == combined`` holds exactly by construction and
    every gate entry lies strictly inside (0, 1).
    """

    combined: Tensor
    gate: Tensor
    time_part: Tensor
    graph_part: Tensor


@dataclass(frozen=True)
class MlpHead:
    """Two linear layers with a ReLU between, addressed by parameter names."""

    role: str
    in_dim: int
    hidden_dim: int
    out_dim: int

    def __post_init__(self):
        if self.role not in HEAD_ROLES:
            raise ValidationError(f"unknown head role {self.role!r}")

    @property
    def parameter_names(self) -> tuple[str, ...]:
        r = self.role
        return (f"{r}_w1", f"{r}_b1", f"{r}_w2", f"{r}_b2")

    def apply(self, params: ParameterSet, x: Tensor) -> Tensor:
        w1, b1, w2, b2 = (params[n] for n in self.parameter_names)
        if x.shape[1] != w1.shape[0]:
            raise ShapeError(
                f"{self.role}: input width {x.shape[1]} != expected {w1.shape[0]}"
            )
        n = x.shape[0]
        h = nx.relu(nx.add(nx.matmul(x, w1), nx.broadcast_rows(b1, n)))
        return nx.add(nx.matmul(h, w2), nx.broadcast_rows(b2, n))


def _heads(spec: ModelSpec) -> dict[str, MlpHead]:
    d = spec.encoder.hidden_dim
    return {
        "adapter": MlpHead("adapter", d, d, d),
        "time_predictor": MlpHead("time_predictor", d, d, 1),
        "classifier_time": MlpHead("classifier_time", spec.classifier_input_dim, d, spec.num_classes),
        "classifier_graph": MlpHead("classifier_graph", spec.classifier_input_dim, d, spec.num_classes),
    }


def _glorot(rng, fan_in: int, fan_out: int, shape) -> Tensor:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-limit, limit, size=shape), requires_grad=True)


def init_parameters(spec: ModelSpec, seed: int) -> ParameterSet:
    """Fresh Glorot-uniform weights and zero biases, deterministic in seed."""
    rng = np.random.default_rng(seed_from(seed, "init"))
    cfg = spec.encoder
    tensors: dict[str, Tensor] = {}
    gnn_names = []
    d_in = cfg.input_dim
    for layer in range(1, cfg.num_layers + 1):
        name = f"gnn_w{layer}"
        tensors[name] = _glorot(rng, d_in, cfg.hidden_dim, (d_in, cfg.hidden_dim))
        gnn_names.append(name)
        if cfg.base_model == "attention":
            for side in ("al", "ar"):
                vname = f"gnn_{side}{layer}"
                tensors[vname] = _glorot(rng, cfg.hidden_dim, 1, (cfg.hidden_dim, 1))
                gnn_names.append(vname)
        d_in = cfg.hidden_dim
    groups = {"gnn": tuple(gnn_names)}
    for role, head in _heads(spec).items():
        w1, b1, w2, b2 = head.parameter_names
        tensors[w1] = _glorot(rng, head.in_dim, head.hidden_dim, (head.in_dim, head.hidden_dim))
        tensors[b1] = Tensor(np.zeros((1, head.hidden_dim)), requires_grad=True)
        tensors[w2] = _glorot(rng, head.hidden_dim, head.out_dim, (head.hidden_dim, head.out_dim))
        tensors[b2] = Tensor(np.zeros((1, head.out_dim)), requires_grad=True)
        groups[role] = head.parameter_names
    return ParameterSet(tensors, groups)


def _activate(x: Tensor, activation: str) -> Tensor:
    return nx.relu(x) if activation == "relu" else x


def encode(snapshot: SnapshotGraph, params: ParameterSet, config: EncoderConfig) -> Tensor:
    """Run the message-passing encoder over one snapshot.

    The gcn base stacks ``h <- act(A_hat h W)`` layers on the symmetric
    normalized adjacency. The attention base scores each (target, source)
    neighbor pair additively, leaky-ReLUs the score, softmax-normalizes over
    the target's neighborhood including its self-loop, aggregates, then
    applies the activation. Single attention head.
    """
    if snapshot.feature_width != config.input_dim:
        raise ShapeError(
            f"snapshot feature width {snapshot.feature_width} != config input_dim {config.input_dim}"
        )
    h = snapshot.features
    if config.base_model == "gcn":
        a_hat = snapshot.normalized_adjacency
        for layer in range(1, config.num_layers + 1):
            h = _activate(nx.matmul(nx.matmul(a_hat, h), params[f"gnn_w{layer}"]), config.activation)
        return h

    n = snapshot.num_nodes
    # 0/1 neighborhood mask with self-loops; a constant wrt the parameters
    mask = nx.greater_than(snapshot.normalized_adjacency, 0.0)
    anti_mask = nx.mul_scalar(nx.one_minus(mask), MASK_VALUE)
    for layer in range(1, config.num_layers + 1):
        wh = nx.matmul(h, params[f"gnn_w{layer}"])
        left = nx.matmul(wh, params[f"gnn_al{layer}"])
        right = nx.matmul(wh, params[f"gnn_ar{layer}"])
        scores = nx.add(nx.broadcast_cols(left, n), nx.broadcast_rows(nx.transpose(right), n))
        scores = nx.leaky_relu(scores, ATTENTION_SLOPE)
        scores = nx.add(nx.hadamard(scores, mask), anti_mask)
        weights = nx.softmax_rows(scores)
        h = _activate(nx.matmul(weights, wh), config.activation)
    return h


def disentangle(h: Tensor, params: ParameterSet, spec: ModelSpec) -> EmbeddingBundle:
    """Split embeddings by the sigmoid gate of the adapter head.

    gate = sigmoid(adapter(h)); the graph-intrinsic part is gate * h, the
    time-varying part is (1 - gate) * h, so the two parts sum back to h
    exactly.
    """
    gate = nx.sigmoid(_heads(spec)["adapter"].apply(params, h))
    graph_part = nx.hadamard(gate, h)
    time_part = nx.hadamard(nx.one_minus(gate), h)
    return EmbeddingBundle(combined=h, gate=gate, time_part=time_part, graph_part=graph_part)


def embed(snapshot: SnapshotGraph, params: ParameterSet, spec: ModelSpec) -> EmbeddingBundle:
    """encode then disentangle."""
    return disentangle(encode(snapshot, params, spec.encoder), params, spec)


def apply_head(params: ParameterSet, spec: ModelSpec, role: str, x: Tensor) -> Tensor:
    return _heads(spec)[role].apply(params, x)


def time_loss(time_part: Tensor, params: ParameterSet, spec: ModelSpec, target_time: float) -> Tensor:
    """Robust regression loss of the predicted window position.

    Mean-pools the time-varying embedding rows, regresses a single real
    with the time-predictor head, and applies the smooth L1 penalty
    0.5 x^2 for |x| < 1 and |x| - 0.5 beyond to the residual. Returns a 1x1
    tensor.
    """
    pooled = nx.mean_pool(time_part)
    predicted = _heads(spec)["time_predictor"].apply(params, pooled)
    residual = nx.add_scalar(predicted, -float(target_time))
    return nx.smooth_l1(residual)


def _pair_rows(h: Tensor, batch: TaskBatch) -> Tensor:
    src = nx.gather_rows(h, batch.items[:, 0])
    dst = nx.gather_rows(h, batch.items[:, 1])
    return nx.concat_cols(src, dst)


def task_predict(bundle: EmbeddingBundle, params: ParameterSet, spec: ModelSpec, batch: TaskBatch) -> Tensor:
    """Class probabilities for a batch: softmax of the two heads' summed logits.

    One head reads the time-varying embedding part, the other the
    graph-intrinsic part. Edge tasks feed each head the concatenation
    [h_src, h_dst] from its part; node tasks feed the node rows directly.
    """
    if batch.kind != spec.batch_kind:
        raise ContractError(
            f"task {spec.task!r} needs {spec.batch_kind!r} batches, got {batch.kind!r}"
        )
    if batch.kind == "edge":
        x_time = _pair_rows(bundle.time_part, batch)
        x_graph = _pair_rows(bundle.graph_part, batch)
    else:
        x_time = nx.gather_rows(bundle.time_part, batch.items)
        x_graph = nx.gather_rows(bundle.graph_part, batch.items)
    logits_time = _heads(spec)["classifier_time"].apply(params, x_time)
    logits_graph = _heads(spec)["classifier_graph"].apply(params, x_graph)
    return nx.softmax_rows(nx.add(logits_time, logits_graph))


def task_loss(predictions: Tensor, labels) -> Tensor:
    """Mean cross-entropy of predicted class probabilities, as a 1x1 tensor.

    Probabilities are clamped at 1e-12 before the log so saturated rows stay
    finite.
    """
    labels = np.asarray(labels, dtype=np.int64)
    b, c = predictions.shape
    if labels.shape != (b,):
        raise ValidationError(f"need {b} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise ValidationError(f"labels outside class range [0, {c})")
    onehot = np.zeros((b, c))
    onehot[np.arange(b), labels] = 1.0
    picked = nx.row_sums(nx.hadamard(predictions, Tensor(onehot)))
    logs = nx.log(nx.clamp_min(picked, PROB_FLOOR))
    return nx.mul_scalar(nx.sum_all(logs), -1.0 / b)


# ---------------------------------------------------------------------------
# checkpoints

def save_checkpoint(params: ParameterSet, spec: ModelSpec, path, extra_meta: dict | None = None) -> None:
    """Write parameters plus their shapes and model spec to an npz file."""
    meta = {
        "format": CHECKPOINT_FORMAT,
        "groups": {g: list(params.group_names(g)) for g in params.groups},
        "encoder": {
            "base_model": spec.encoder.base_model,
            "num_layers": spec.encoder.num_layers,
            "input_dim": spec.encoder.input_dim,
            "hidden_dim": spec.encoder.hidden_dim,
            "activation": spec.encoder.activation,
        },
        "task": spec.task,
        "num_classes": spec.num_classes,
        "extra": extra_meta or {},
    }
    arrays = {name: params[name].data for name in params.names}
    arrays["__meta__"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    np.savez(path, **arrays)


def load_checkpoint(path) -> tuple[ParameterSet, ModelSpec, dict]:
    """Load a checkpoint; rejects unknown formats and malformed shape maps."""
    with np.load(path) as bundle:
        if "__meta__" not in bundle:
            raise DatasetError(f"{path} is not a parameter checkpoint")
        meta = json.loads(bundle["__meta__"].tobytes().decode())
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise DatasetError(
                f"unknown checkpoint format {meta.get('format')!r}, expected {CHECKPOINT_FORMAT}"
            )
        enc = meta["encoder"]
        spec = ModelSpec(
            EncoderConfig(
                base_model=enc["base_model"],
                num_layers=int(enc["num_layers"]),
                input_dim=int(enc["input_dim"]),
                hidden_dim=int(enc["hidden_dim"]),
                activation=enc["activation"],
            ),
            task=meta["task"],
            num_classes=int(meta["num_classes"]),
        )
        tensors = {}
        for group, names in meta["groups"].items():
            for name in names:
                if name not in bundle:
                    raise DatasetError(f"checkpoint is missing tensor {name!r}")
                tensors[name] = Tensor(bundle[name], requires_grad=True)
        groups = {g: tuple(names) for g, names in meta["groups"].items()}
        params = ParameterSet(tensors, groups)
        expected = init_parameters(spec, seed=0)
        for name in expected.names:
            if name not in params or params[name].shape != expected[name].shape:
                raise DatasetError(
                    f"checkpoint tensor {name!r} missing or mis-shaped for its model spec"
                )
        return params, spec, meta.get("extra", {})
