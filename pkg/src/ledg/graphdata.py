"""Snapshot sequences, adjacency normalization, ingestion, and a drifting
stochastic block model generator.

A dynamic graph is a time-ordered list of snapshots over one fixed node
universe (the union of every node ever seen). Nodes absent from a snapshot
simply have no incident edges there. All randomness flows through numpy
``SeedSequence`` so identical inputs give bit-identical outputs.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .errors import DatasetError, ParseError, ValidationError
from .numerics import Tensor

__all__ = [
    "SnapshotGraph",
    "DynamicGraphSequence",
    "TaskBatch",
    "FixedIntervalBucketing",
    "EqualEdgeCountBucketing",
    "TASKS",
    "normalize_adjacency",
    "degree_bucket_features",
    "identity_features",
    "ingest_edge_stream",
    "generate_drifting_sbm",
    "sample_link_prediction_batch",
    "classification_batch",
    "split_by_fraction",
    "seed_from",
    "save_dataset",
    "load_dataset",
]

TASKS = ("link_prediction", "edge_classification", "node_classification")

DATASET_FORMAT = "TGDS1"


def seed_from(base: int, *labels) -> np.random.SeedSequence:
    """Derive a child seed from a base seed plus arbitrary tag labels.

    Integer labels are used directly; anything else is hashed to 32 bits.
    Same (base, labels) always gives the same stream.
    """
    parts = [int(base)]
    for lab in labels:
        if isinstance(lab, (int, np.integer)):
            parts.append(int(lab) & 0xFFFFFFFF)
        else:
            digest = hashlib.blake2s(str(lab).encode(), digest_size=4).digest()
            parts.append(int.from_bytes(digest, "big"))
    return np.random.SeedSequence(parts)


def _canonical_edges(edges, num_nodes: int):
    """Validate and canonicalize undirected edges to (min, max, weight, label)."""
    out = []
    for e in edges:
        if len(e) == 2:
            u, v, w, lab = e[0], e[1], 1.0, None
        elif len(e) == 3:
            u, v, w, lab = e[0], e[1], e[2], None
        elif len(e) == 4:
            u, v, w, lab = e
        else:
            raise ValidationError(f"edge tuple of length {len(e)} not understood: {e!r}")
        u, v = int(u), int(v)
        if not (0 <= u < num_nodes and 0 <= v < num_nodes):
            raise ValidationError(f"edge ({u}, {v}) out of range for {num_nodes} nodes")
        if u == v:
            raise ValidationError(f"self-loop ({u}, {u}) is not storable")
        if u > v:
            u, v = v, u
        out.append((u, v, float(w), None if lab is None else int(lab)))
    out.sort(key=lambda e: (e[0], e[1]))
    return tuple(out)


class SnapshotGraph:
    """One undirected graph snapshot over the global node universe.

    Edges are stored canonically as (min, max, weight, label) with no
    self-loops and no duplicates; the symmetric normalized adjacency is
    computed on first use and cached.
    """

    __slots__ = (
        "time_index",
        "num_nodes",
        "edges",
        "features",
        "node_labels",
        "_adjacency",
        "_edge_keys",
    )

    def __init__(self, time_index, num_nodes, edges, features, node_labels=None):
        self.time_index = int(time_index)
        self.num_nodes = int(num_nodes)
        if self.num_nodes < 1:
            raise ValidationError("a snapshot needs at least one node")
        self.edges = _canonical_edges(edges, self.num_nodes)
        keys = {(u, v) for u, v, _, _ in self.edges}
        if len(keys) != len(self.edges):
            raise ValidationError("duplicate undirected edges in snapshot")
        self._edge_keys = frozenset(keys)
        if not isinstance(features, Tensor):
            features = Tensor(features)
        if features.shape[0] != self.num_nodes:
            raise ValidationError(
                f"feature rows {features.shape[0]} != num_nodes {self.num_nodes}"
            )
        self.features = features
        if node_labels is not None:
            node_labels = np.asarray(node_labels, dtype=np.int64)
            if node_labels.shape != (self.num_nodes,):
                raise ValidationError("node_labels must have one entry per node")
            node_labels = node_labels.copy()
            node_labels.flags.writeable = False
        self.node_labels = node_labels
        self._adjacency = None

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def feature_width(self) -> int:
        return self.features.shape[1]

    def has_edge(self, u: int, v: int) -> bool:
        if u > v:
            u, v = v, u
        return (u, v) in self._edge_keys

    def edge_array(self) -> np.ndarray:
        """Edges as an (E, 2) int array (canonical orientation)."""
        if not self.edges:
            return np.zeros((0, 2), dtype=np.int64)
        return np.array([(u, v) for u, v, _, _ in self.edges], dtype=np.int64)

    def degrees(self) -> np.ndarray:
        d = np.zeros(self.num_nodes, dtype=np.int64)
        for u, v, _, _ in self.edges:
            d[u] += 1
            d[v] += 1
        return d

    @property
    def normalized_adjacency(self) -> Tensor:
        if self._adjacency is None:
            self._adjacency = normalize_adjacency(self.edges, self.num_nodes)
        return self._adjacency


def normalize_adjacency(edges, num_nodes: int) -> Tensor:
    """Symmetric degree normalization of the self-looped binary adjacency.

    Builds A from the undirected edges (weights ignored, so multi-weight
    edges still count once), adds the identity, and returns
    D^(-1/2) (A + I) D^(-1/2) where D holds the row sums of A + I. The
    result is symmetric with nonnegative entries and an isolated node
    contributes a bare 1 on the diagonal.
    """
    canon = _canonical_edges(edges, num_nodes)
    a = np.zeros((num_nodes, num_nodes))
    for u, v, _, _ in canon:
        a[u, v] = 1.0
        a[v, u] = 1.0
    a += np.eye(num_nodes)
    inv_sqrt = 1.0 / np.sqrt(a.sum(axis=1))
    return Tensor(a * inv_sqrt[:, None] * inv_sqrt[None, :])


class DynamicGraphSequence:
    """Time-ordered snapshots with a train/val/test split and a task tag.

    ``split`` is (train_end, val_end, test_end) in 1-based snapshot times:
    training covers 1..train_end, validation train_end+1..val_end, test
    val_end+1..test_end.
    """

    def __init__(self, snapshots, split, task, num_classes, node_names=None):
        snapshots = list(snapshots)
        if not snapshots:
            raise ValidationError("a sequence needs at least one snapshot")
        times = [s.time_index for s in snapshots]
        if times != list(range(1, len(snapshots) + 1)):
            raise ValidationError(f"snapshot times must be 1..T, got {times}")
        n = snapshots[0].num_nodes
        f = snapshots[0].feature_width
        for s in snapshots:
            if s.num_nodes != n:
                raise ValidationError("snapshots disagree on node-universe size")
            if s.feature_width != f:
                raise ValidationError("snapshots disagree on feature width")
        train_end, val_end, test_end = (int(x) for x in split)
        if not (1 <= train_end <= val_end <= test_end <= len(snapshots)):
            raise ValidationError(
                f"split {split} must be ordered within [1, {len(snapshots)}]"
            )
        if task not in TASKS:
            raise ValidationError(f"unknown task {task!r}, expected one of {TASKS}")
        self.snapshots = snapshots
        self.split = (train_end, val_end, test_end)
        self.task = task
        self.num_classes = int(num_classes)
        if self.num_classes < 2:
            raise ValidationError("num_classes must be at least 2")
        if node_names is None:
            node_names = tuple(str(i) for i in range(n))
        node_names = tuple(str(x) for x in node_names)
        if len(node_names) != n:
            raise ValidationError("node_names must have one entry per node")
        self.node_names = node_names

    def __len__(self) -> int:
        return len(self.snapshots)

    def __iter__(self):
        return iter(self.snapshots)

    @property
    def num_nodes(self) -> int:
        return self.snapshots[0].num_nodes

    @property
    def feature_width(self) -> int:
        return self.snapshots[0].feature_width

    def snapshot_at(self, t: int) -> SnapshotGraph:
        """Snapshot with 1-based time index t."""
        if not (1 <= t <= len(self.snapshots)):
            raise ValidationError(f"time {t} outside [1, {len(self.snapshots)}]")
        return self.snapshots[t - 1]

    def times_in(self, part: str) -> range:
        """1-based time range of a split part ('train', 'val' or 'test')."""
        train_end, val_end, test_end = self.split
        if part == "train":
            return range(1, train_end + 1)
        if part == "val":
            return range(train_end + 1, val_end + 1)
        if part == "test":
            return range(val_end + 1, test_end + 1)
        raise ValidationError(f"unknown split part {part!r}")


def split_by_fraction(num_snapshots: int, train_frac=0.75, val_frac=0.10):
    """Split time indices by fractions, flooring, at least one train snapshot."""
    if not (0 < train_frac < 1 and 0 <= val_frac < 1 and train_frac + val_frac <= 1):
        raise ValidationError("split fractions must lie in (0, 1) and sum to at most 1")
    # floor with a small epsilon so 20 * 0.8 (= 15.999...8 in binary) still floors to 16
    train_end = max(1, int(num_snapshots * train_frac + 1e-9))
    val_end = min(num_snapshots, max(train_end, int(num_snapshots * (train_frac + val_frac) + 1e-9)))
    return (train_end, val_end, num_snapshots)


@dataclass(frozen=True)
class TaskBatch:
    """Supervised items for one target snapshot.

    Edge tasks use ``items`` of shape (M, 2) holding (src, dst) pairs; node
    tasks use shape (M,) node indices. ``labels`` holds one integer per
    item (for link prediction 1 marks a real edge, 0 a sampled non-edge).
    """

    time_index: int
    kind: str
    items: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if self.kind not in ("edge", "node"):
            raise ValidationError(f"batch kind must be 'edge' or 'node', not {self.kind!r}")
        items = np.asarray(self.items, dtype=np.int64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if self.kind == "edge" and (items.ndim != 2 or items.shape[1] != 2):
            raise ValidationError("edge batches need (M, 2) items")
        if self.kind == "node" and items.ndim != 1:
            raise ValidationError("node batches need 1-D items")
        if labels.shape != (items.shape[0],):
            raise ValidationError("labels must align with items")
        if items.shape[0] == 0:
            raise ValidationError("empty task batch")
        items = items.copy()
        labels = labels.copy()
        items.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, "items", items)
        object.__setattr__(self, "labels", labels)

    def check_against(self, snapshot: SnapshotGraph) -> None:
        n = snapshot.num_nodes
        if self.items.min() < 0 or self.items.max() >= n:
            raise ValidationError(f"batch references nodes outside [0, {n})")

    @property
    def size(self) -> int:
        return self.items.shape[0]


@dataclass(frozen=True)
class FixedIntervalBucketing:
    """Snapshots cover consecutive half-open timestamp windows of fixed width."""

    interval: float

    def __post_init__(self):
        if self.interval <= 0:
            raise ValidationError("bucketing interval must be positive")

    def assign(self, timestamps: np.ndarray) -> np.ndarray:
        start = timestamps.min()
        return np.floor((timestamps - start) / self.interval).astype(np.int64)


@dataclass(frozen=True)
class EqualEdgeCountBucketing:
    """Consecutive snapshots of a fixed edge count; the remainder forms the last."""

    edges_per_snapshot: int

    def __post_init__(self):
        if self.edges_per_snapshot < 1:
            raise ValidationError("edges_per_snapshot must be at least 1")

    def assign(self, timestamps: np.ndarray) -> np.ndarray:
        order = np.argsort(timestamps, kind="stable")
        buckets = np.empty(len(timestamps), dtype=np.int64)
        buckets[order] = np.arange(len(timestamps)) // self.edges_per_snapshot
        return buckets


def identity_features(num_nodes: int) -> Tensor:
    """One-hot node identity features (N x N)."""
    return Tensor(np.eye(num_nodes))


def degree_bucket_features(edge_lists, num_nodes: int):
    """Per-snapshot one-hot features of log2-bucketed degree.

    Bucket 0 is degree 0, bucket b >= 1 covers degrees [2^(b-1), 2^b).
    Nodes with no incident edge in a snapshot are treated as absent and get
    an all-zero row. The width is shared across the sequence (largest
    occupied bucket anywhere, plus one).
    """
    all_degrees = []
    for edges in edge_lists:
        d = np.zeros(num_nodes, dtype=np.int64)
        for e in edges:
            d[int(e[0])] += 1
            d[int(e[1])] += 1
        all_degrees.append(d)
    max_degree = max((int(d.max()) for d in all_degrees), default=0)
    width = 1 if max_degree == 0 else int(np.floor(np.log2(max_degree))) + 2
    feats = []
    for d in all_degrees:
        x = np.zeros((num_nodes, width))
        present = d > 0
        cols = np.zeros(num_nodes, dtype=np.int64)
        cols[present] = np.floor(np.log2(d[present])).astype(np.int64) + 1
        x[present, cols[present]] = 1.0
        feats.append(Tensor(x))
    return feats


def ingest_edge_stream(
    source,
    bucketing,
    task: str = "link_prediction",
    split=None,
    train_frac: float = 0.75,
    val_frac: float = 0.10,
) -> DynamicGraphSequence:
    """Parse a timestamped edge stream into a snapshot sequence.

    ``source`` is an iterable of lines (or an open file). Each data line is
    whitespace-separated ``src dst timestamp [value]``; ``#`` starts a
    comment line. Node ids may be arbitrary tokens and are compacted to a
    dense 0-based universe in order of first appearance (the original ids
    survive as ``node_names``). The optional value column is a float weight
    for link prediction and an integer class label for edge classification.
    Duplicate undirected edges inside one bucket merge with summed weight
    (last label wins); self-loops are dropped.
    """
    if task not in ("link_prediction", "edge_classification"):
        raise ValidationError(f"edge streams support edge tasks, not {task!r}")
    src_tokens, dst_tokens, times, values = [], [], [], []
    for lineno, raw in enumerate(source, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) not in (3, 4):
            raise ParseError(f"line {lineno}: expected 'src dst timestamp [value]', got {line!r}")
        try:
            ts = float(parts[2])
            val = float(parts[3]) if len(parts) == 4 else None
        except ValueError as exc:
            raise ParseError(f"line {lineno}: {exc}") from None
        src_tokens.append(parts[0])
        dst_tokens.append(parts[1])
        times.append(ts)
        values.append(val)
    if not times:
        raise ParseError("no data lines in edge stream")

    ids: dict[str, int] = {}
    for tok in [t for pair in zip(src_tokens, dst_tokens) for t in pair]:
        if tok not in ids:
            ids[tok] = len(ids)
    num_nodes = len(ids)
    timestamps = np.array(times)
    buckets = bucketing.assign(timestamps)
    num_snapshots = int(buckets.max()) + 1

    # stable order inside each bucket: by timestamp, then input order
    order = np.argsort(timestamps, kind="stable")
    merged: list[dict] = [dict() for _ in range(num_snapshots)]
    for idx in order:
        u, v = ids[src_tokens[idx]], ids[dst_tokens[idx]]
        if u == v:
            continue
        if u > v:
            u, v = v, u
        val = values[idx]
        if task == "edge_classification":
            w, lab = 1.0, (0 if val is None else int(val))
        else:
            w, lab = (1.0 if val is None else float(val)), None
        bucket = merged[int(buckets[idx])]
        if (u, v) in bucket:
            old_w, _ = bucket[(u, v)]
            bucket[(u, v)] = (old_w + w, lab)
        else:
            bucket[(u, v)] = (w, lab)

    edge_lists = [
        [(u, v, w, lab) for (u, v), (w, lab) in sorted(b.items())] for b in merged
    ]
    feats = degree_bucket_features(edge_lists, num_nodes)
    snapshots = [
        SnapshotGraph(t + 1, num_nodes, edge_lists[t], feats[t])
        for t in range(num_snapshots)
    ]
    if split is None:
        split = split_by_fraction(num_snapshots, train_frac, val_frac)
    num_classes = 2
    if task == "edge_classification":
        labels = [e[3] for s in snapshots for e in s.edges if e[3] is not None]
        num_classes = max(2, (max(labels) + 1) if labels else 2)
    names = [None] * num_nodes
    for tok, i in ids.items():
        names[i] = tok
    return DynamicGraphSequence(snapshots, split, task, num_classes, node_names=names)


def generate_drifting_sbm(
    num_nodes: int,
    num_communities: int,
    intra_p: float,
    inter_p: float,
    drift_rate: float,
    num_snapshots: int,
    seed: int,
    feature_mode: str = "identity",
    task: str = "link_prediction",
    train_frac: float = 0.75,
    val_frac: float = 0.10,
) -> DynamicGraphSequence:
    """Stochastic block model whose community assignment drifts over time.

    Nodes start in contiguous equal-size communities. Every step, a
    floor(drift_rate * N) subset of nodes is chosen uniformly and each
    moves to a uniformly random other community; then edges are redrawn
    from scratch (intra_p within a community, inter_p across). Node labels
    record the current community. ``feature_mode`` is ``identity`` (one-hot
    node id, the default, so embeddings can track individual nodes) or
    ``degree_buckets``.
    """
    if not (0 <= inter_p < intra_p <= 1):
        raise ValidationError("need 0 <= inter_p < intra_p <= 1")
    if not (0 <= drift_rate <= 1):
        raise ValidationError("drift_rate must lie in [0, 1]")
    if num_communities < 2 or num_nodes < num_communities:
        raise ValidationError("need at least 2 communities and num_nodes >= num_communities")
    if num_snapshots < 1:
        raise ValidationError("need at least one snapshot")
    if feature_mode not in ("identity", "degree_buckets"):
        raise ValidationError(f"unknown feature_mode {feature_mode!r}")
    if task not in ("link_prediction", "node_classification"):
        raise ValidationError(f"sbm generator does not support task {task!r}")

    rng = np.random.default_rng(seed_from(seed, "sbm"))
    members = (np.arange(num_nodes) * num_communities) // num_nodes
    num_drift = int(np.floor(drift_rate * num_nodes))

    edge_lists = []
    label_rows = []
    for t in range(num_snapshots):
        if t > 0 and num_drift > 0:
            moved = rng.choice(num_nodes, size=num_drift, replace=False)
            # uniform over the OTHER communities: draw in [0, k-1) and skip own
            hops = rng.integers(0, num_communities - 1, size=num_drift)
            members = members.copy()
            members[moved] = (members[moved] + 1 + hops) % num_communities
        same = members[:, None] == members[None, :]
        prob = np.where(same, intra_p, inter_p)
        draw = rng.random((num_nodes, num_nodes))
        upper = np.triu(draw < prob, k=1)
        pairs = np.argwhere(upper)
        edge_lists.append([(int(u), int(v)) for u, v in pairs])
        label_rows.append(members.copy())

    if feature_mode == "identity":
        feats = [identity_features(num_nodes) for _ in range(num_snapshots)]
    else:
        feats = degree_bucket_features(edge_lists, num_nodes)
    snapshots = [
        SnapshotGraph(t + 1, num_nodes, edge_lists[t], feats[t], node_labels=label_rows[t])
        for t in range(num_snapshots)
    ]
    split = split_by_fraction(num_snapshots, train_frac, val_frac)
    num_classes = num_communities if task == "node_classification" else 2
    return DynamicGraphSequence(snapshots, split, task, num_classes)


def sample_link_prediction_batch(
    snapshot: SnapshotGraph,
    negative_ratio: int | None = None,
    mode: str = "train",
    seed: int = 0,
) -> TaskBatch:
    """Positives are the snapshot's edges; negatives are source-matched non-edges.

    For each positive (u, v), ``negative_ratio`` negatives (u, v') are drawn
    uniformly with replacement over v' such that (u, v') is not an edge and
    v' != u. The default ratio is 1 in train mode and 100 in eval mode.
    Raises when a source node's non-neighbors run out (complete rows).
    """
    if mode not in ("train", "eval"):
        raise ValidationError(f"mode must be 'train' or 'eval', not {mode!r}")
    if negative_ratio is None:
        negative_ratio = 1 if mode == "train" else 100
    if negative_ratio < 1:
        raise ValidationError("negative_ratio must be at least 1")
    if snapshot.num_edges == 0:
        raise ValidationError(f"snapshot {snapshot.time_index} has no edges to sample from")

    n = snapshot.num_nodes
    degree = snapshot.degrees()
    rng = np.random.default_rng(seed_from(seed, "negatives", snapshot.time_index, mode))
    items = []
    labels = []
    for u, v, _, _ in snapshot.edges:
        items.append((u, v))
        labels.append(1)
        # non-neighbor count of u: n - 1 - degree(u); zero means a full row
        if n - 1 - degree[u] < 1:
            raise ValidationError(
                f"node {u} is connected to every other node; "
                "cannot sample negatives, lower the negative ratio or resplit"
            )
        got = 0
        attempts = 0
        limit = 200 * negative_ratio + 1000
        while got < negative_ratio:
            cand = int(rng.integers(0, n))
            attempts += 1
            if cand != u and not snapshot.has_edge(u, cand):
                items.append((u, cand))
                labels.append(0)
                got += 1
            elif attempts > limit:
                raise ValidationError(
                    f"negative sampling for source {u} exceeded {limit} attempts; "
                    "the graph is too dense, lower the negative ratio"
                )
    return TaskBatch(snapshot.time_index, "edge", np.array(items), np.array(labels))


def classification_batch(snapshot: SnapshotGraph, task: str) -> TaskBatch:
    """All labeled edges (or all nodes) of a snapshot as a supervised batch."""
    if task == "edge_classification":
        rows = [(u, v) for u, v, _, lab in snapshot.edges if lab is not None]
        labels = [lab for _, _, _, lab in snapshot.edges if lab is not None]
        if not rows:
            raise ValidationError(f"snapshot {snapshot.time_index} has no labeled edges")
        return TaskBatch(snapshot.time_index, "edge", np.array(rows), np.array(labels))
    if task == "node_classification":
        if snapshot.node_labels is None:
            raise ValidationError(f"snapshot {snapshot.time_index} has no node labels")
        items = np.arange(snapshot.num_nodes)
        return TaskBatch(snapshot.time_index, "node", items, snapshot.node_labels)
    raise ValidationError(f"no classification batch for task {task!r}")


# ---------------------------------------------------------------------------
# dataset directory serialization

def save_dataset(sequence: DynamicGraphSequence, directory) -> None:
    """Write a sequence as a dataset directory (format tag TGDS1).

    Layout: a ``meta`` key=value file, ``nodes.map`` with one original node
    id per line, and per snapshot ``snapshot_NNN.edges`` (text) plus
    ``snapshot_NNN.npy`` features and optional ``labels_NNN.npy``.
    """
    from pathlib import Path

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    t0, t1, t2 = sequence.split
    meta = [
        f"format={DATASET_FORMAT}",
        f"num_nodes={sequence.num_nodes}",
        f"feature_width={sequence.feature_width}",
        f"num_snapshots={len(sequence)}",
        f"task={sequence.task}",
        f"num_classes={sequence.num_classes}",
        f"train_end={t0}",
        f"val_end={t1}",
        f"test_end={t2}",
    ]
    (directory / "meta").write_text("\n".join(meta) + "\n")
    (directory / "nodes.map").write_text("\n".join(sequence.node_names) + "\n")
    for snap in sequence:
        stem = f"snapshot_{snap.time_index:03d}"
        lines = []
        for u, v, w, lab in snap.edges:
            entry = f"{u} {v} {w:.12g}"
            if lab is not None:
                entry += f" {lab}"
            lines.append(entry)
        (directory / f"{stem}.edges").write_text("\n".join(lines) + ("\n" if lines else ""))
        np.save(directory / f"{stem}.npy", snap.features.data)
        if snap.node_labels is not None:
            np.save(directory / f"labels_{snap.time_index:03d}.npy", snap.node_labels)


def load_dataset(directory) -> DynamicGraphSequence:
    """Load a dataset directory written by :func:`save_dataset`."""
    from pathlib import Path

    directory = Path(directory)
    meta_path = directory / "meta"
    if not meta_path.exists():
        raise DatasetError(f"{directory} has no meta file")
    meta = {}
    for line in meta_path.read_text().splitlines():
        if "=" not in line:
            raise DatasetError(f"malformed meta line {line!r}")
        key, _, value = line.partition("=")
        meta[key.strip()] = value.strip()
    if meta.get("format") != DATASET_FORMAT:
        raise DatasetError(
            f"unknown dataset format {meta.get('format')!r}, expected {DATASET_FORMAT}"
        )
    try:
        num_nodes = int(meta["num_nodes"])
        num_snapshots = int(meta["num_snapshots"])
        task = meta["task"]
        num_classes = int(meta["num_classes"])
        split = (int(meta["train_end"]), int(meta["val_end"]), int(meta["test_end"]))
    except KeyError as exc:
        raise DatasetError(f"meta file is missing key {exc}") from None

    names = (directory / "nodes.map").read_text().splitlines()
    snapshots = []
    for t in range(1, num_snapshots + 1):
        stem = f"snapshot_{t:03d}"
        edges = []
        for lineno, line in enumerate((directory / f"{stem}.edges").read_text().splitlines(), 1):
            parts = line.split()
            if len(parts) == 3:
                edges.append((int(parts[0]), int(parts[1]), float(parts[2]), None))
            elif len(parts) == 4:
                edges.append((int(parts[0]), int(parts[1]), float(parts[2]), int(parts[3])))
            else:
                raise DatasetError(f"{stem}.edges line {lineno}: malformed edge {line!r}")
        features = np.load(directory / f"{stem}.npy")
        labels_path = directory / f"labels_{t:03d}.npy"
        labels = np.load(labels_path) if labels_path.exists() else None
        snapshots.append(SnapshotGraph(t, num_nodes, edges, features, node_labels=labels))
    return DynamicGraphSequence(snapshots, split, task, num_classes, node_names=names)


def sequence_summary(sequence: DynamicGraphSequence) -> str:
    """One-line JSON summary used by the CLI for logging."""
    payload = {
        "num_nodes": sequence.num_nodes,
        "feature_width": sequence.feature_width,
        "num_snapshots": len(sequence),
        "task": sequence.task,
        "num_classes": sequence.num_classes,
        "split": list(sequence.split),
        "edges_per_snapshot": [s.num_edges for s in sequence],
    }
    return json.dumps(payload, sort_keys=True)
