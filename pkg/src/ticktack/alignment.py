"""Temporal alignment objective and the post-training loop.

Pooled sequence embeddings are partitioned into the sixty sexagenary
classes realized within each optimization batch.  The alignment loss
pulls same-class embeddings together (one minus the mean pairwise cosine)
and pushes different-class embeddings apart (mean cross-class cosine),
mixed by ``delta``.  A diagonal-Fisher quadratic penalty anchors the
trained weights near the frozen base weights so prior ability survives,
and the final objective is the next-token loss plus ``sigma`` times the
temporal part.  With sigma = 0 the loop is exactly plain next-token
post-training.
"""

from __future__ import annotations

import csv
import random
from dataclasses import dataclass, field

import torch

from .annotate import AnnotatedSequence
from .errors import (
    EmptyPartitionError,
    InsufficientDataError,
    ShapeMismatchError,
    ZeroVectorError,
)
from .geometry import EncodingConfig
from .model import (
    ModelConfig,
    ParameterSet,
    forward,
    gradients,
    ntp_loss,
    sentence_embedding,
    sequence_ntp_loss,
    trainable_names,
)

METRIC_FIELDS = ("epoch", "l_ntp", "l_intra", "l_inter", "ewc_penalty", "l_final")


@dataclass(frozen=True)
class TrainingConfig:
    """Objective weights and optimization hyperparameters.

    ``delta`` mixes the intra/inter cosine terms, ``sigma`` weights the
    whole temporal part in the final loss, ``ewc_lambda`` scales the
    Fisher penalty.  Optimization is plain SGD so every update is a pure
    function of the gradient.
    """

    delta: float = 0.5
    sigma: float = 1.0
    ewc_lambda: float = 100.0
    learning_rate: float = 1e-4
    batch_size: int = 8
    grad_accum_steps: int = 2
    epochs: int = 10
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError("delta must lie in [0, 1]")
        if self.sigma < 0 or self.ewc_lambda < 0:
            raise ValueError("sigma and ewc_lambda must be nonnegative")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1 or self.grad_accum_steps < 1 or self.epochs < 0:
            raise ValueError("batch_size/grad_accum_steps must be >= 1 and epochs >= 0")


@dataclass
class ClassPartition:
    """Embeddings grouped by sexagenary class; ``universe`` counts the batch."""

    classes: dict[int, list[torch.Tensor]]
    universe: int

    @property
    def n_vectors(self) -> int:
        return sum(len(v) for v in self.classes.values())


@dataclass
class FisherDiagonal:
    """Per-parameter importance: mean squared next-token gradient."""

    values: ParameterSet
    sample_count: int


def cosine_similarity(u, v) -> torch.Tensor:
    u = torch.as_tensor(u, dtype=torch.float64)
    v = torch.as_tensor(v, dtype=torch.float64)
    nu, nv = torch.linalg.vector_norm(u), torch.linalg.vector_norm(v)
    if float(nu.detach()) == 0.0 or float(nv.detach()) == 0.0:
        raise ZeroVectorError("cosine similarity undefined for a zero vector")
    return (u @ v) / (nu * nv)


def partition(batch: list[tuple[AnnotatedSequence, torch.Tensor]]) -> ClassPartition:
    """Group embeddings by their sequence's class label; unlabeled ones drop out."""
    classes: dict[int, list[torch.Tensor]] = {}
    for seq, emb in batch:
        if seq.class_label is None:
            continue
        classes.setdefault(seq.class_label.value, []).append(emb)
    return ClassPartition(classes=classes, universe=len(batch))


def intra_inter_loss(
    p: ClassPartition, delta: float
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """(intra, inter, mixed) cosine losses over the partition.

    Intra is one minus the mean cosine over ordered same-class pairs
    (classes with fewer than two members contribute none; no pairs at all
    means intra = 0).  Inter is the mean cosine over ordered cross-class
    pairs, 0 when only one class is populated.
    """
    if p.n_vectors == 0:
        raise EmptyPartitionError("partition holds no embeddings")
    vectors, labels = [], []
    for label, members in p.classes.items():
        for emb in members:
            vectors.append(emb)
            labels.append(label)
    stacked = torch.stack(vectors)
    norms = torch.linalg.vector_norm(stacked, dim=1, keepdim=True)
    if float(norms.detach().min()) == 0.0:
        raise ZeroVectorError("partition contains a zero embedding")
    unit = stacked / norms
    sims = unit @ unit.T
    label_t = torch.tensor(labels)
    same = label_t.unsqueeze(0) == label_t.unsqueeze(1)
    off_diag = ~torch.eye(len(labels), dtype=torch.bool)
    intra_mask = same & off_diag
    inter_mask = ~same
    zero = torch.zeros((), dtype=torch.float64)
    l_intra = 1.0 - sims[intra_mask].mean() if bool(intra_mask.any()) else zero
    l_inter = sims[inter_mask].mean() if bool(inter_mask.any()) else zero
    return l_intra, l_inter, delta * l_intra + (1.0 - delta) * l_inter


def estimate_fisher(
    params: ParameterSet,
    sequences: list[AnnotatedSequence],
    model_cfg: ModelConfig,
    enc_cfg: EncodingConfig,
    samples: int,
    injection_enabled: bool = False,
) -> FisherDiagonal:
    """Empirical diagonal Fisher: mean elementwise-squared next-token gradient.

    Estimated on the general task, so injection defaults to off.  One
    sample is one sequence's loss gradient.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    usable = [s for s in sequences if len(s.tokens) >= 2]
    if len(usable) < samples:
        raise InsufficientDataError(
            f"need {samples} sequences with >= 2 tokens, have {len(usable)}"
        )
    accum = {name: torch.zeros_like(t) for name, t in params.items()}
    for seq in usable[:samples]:
        g = gradients(
            lambda p: sequence_ntp_loss(
                p, seq, model_cfg, enc_cfg, injection_enabled=injection_enabled
            ),
            params,
        )
        for name, tensor in g.items():
            accum[name] += tensor * tensor
    return FisherDiagonal(
        values=ParameterSet({name: t / samples for name, t in accum.items()}),
        sample_count=samples,
    )


def ewc_penalty(
    theta_t: ParameterSet, theta_g: ParameterSet, fisher: FisherDiagonal, lam: float
) -> torch.Tensor:
    """Quadratic anchor (lam/2) * sum_i F_i (theta_t_i - theta_g_i)^2."""
    names = theta_t.names()
    if names != theta_g.names() or names != fisher.values.names():
        raise ShapeMismatchError("parameter sets and Fisher diagonal must share names")
    total = torch.zeros((), dtype=torch.float64)
    for name in names:
        if theta_t[name].shape != theta_g[name].shape:
            raise ShapeMismatchError(f"shape mismatch at {name}")
        diff = theta_t[name] - theta_g[name]
        total = total + (fisher.values[name] * diff * diff).sum()
    return 0.5 * lam * total


def temporal_loss(
    p: ClassPartition,
    delta: float,
    theta_t: ParameterSet,
    theta_g: ParameterSet,
    fisher: FisherDiagonal,
    lam: float,
) -> torch.Tensor:
    _, _, l_t = intra_inter_loss(p, delta)
    return l_t + ewc_penalty(theta_t, theta_g, fisher, lam)


def final_loss(l_ntp, l_temporal, sigma: float):
    """Combined objective; sigma = 0 returns the next-token loss untouched."""
    if sigma == 0:
        return l_ntp
    return l_ntp + sigma * l_temporal


@dataclass
class TrainResult:
    params: ParameterSet
    metrics: list[dict] = field(default_factory=list)
    aborted: bool = False
    steps: int = 0


def train(
    base: ParameterSet,
    corpus: list[AnnotatedSequence],
    cfg: TrainingConfig,
    model_cfg: ModelConfig,
    enc_cfg: EncodingConfig,
    fisher: FisherDiagonal | None = None,
    injection_enabled: bool = True,
    injection_mode: str = "all_positions",
) -> TrainResult:
    """SGD post-training of the base weights under the combined objective.

    The base parameters stay frozen as the penalty anchor.  Visit order is
    ``random.Random(cfg.seed)``-shuffled indices, reshuffled each epoch;
    micro-batches of ``batch_size`` sequences are grouped into optimizer
    steps of ``grad_accum_steps``, each micro loss is scaled by one over
    the group size and backpropagated in visit order, so runs with the
    same seed and data are bit-reproducible single-threaded.  A non-finite
    loss aborts and returns the last completed epoch's parameters.  With
    adapters (adapter_rank > 0) only the adapter factors are updated.
    """
    temporal_active = cfg.sigma > 0
    if temporal_active and cfg.ewc_lambda > 0 and fisher is None:
        raise ValueError("ewc_lambda > 0 requires a precomputed Fisher diagonal")
    usable = [s for s in corpus if len(s.tokens) >= 2]
    if not usable:
        raise InsufficientDataError("no trainable sequences (need >= 2 tokens)")

    anchor = base.clone()
    params = base.clone()
    snapshot = params.clone()
    trainable = set(trainable_names(params, model_cfg))
    rng = random.Random(cfg.seed)
    metrics: list[dict] = []
    steps_done = 0

    for epoch in range(cfg.epochs):
        order = list(range(len(usable)))
        rng.shuffle(order)
        micros = [
            order[i : i + cfg.batch_size] for i in range(0, len(order), cfg.batch_size)
        ]
        groups = [
            micros[i : i + cfg.grad_accum_steps]
            for i in range(0, len(micros), cfg.grad_accum_steps)
        ]
        sums = {k: 0.0 for k in METRIC_FIELDS[1:]}
        n_micro = 0
        for group in groups:
            leaves = params.clone(requires_grad=True)
            for name, t in leaves.items():
                t.grad = None
            for micro in group:
                seqs = [usable[i] for i in micro]
                ntp_terms = []
                labeled: list[tuple[AnnotatedSequence, torch.Tensor]] = []
                for seq in seqs:
                    logits, hidden = forward(
                        leaves, seq, model_cfg, enc_cfg,
                        injection_enabled=injection_enabled, injection_mode=injection_mode,
                    )
                    ntp_terms.append(ntp_loss(logits[:-1], seq.tokens[1:]))
                    if temporal_active and seq.class_label is not None:
                        labeled.append((seq, sentence_embedding(hidden)))
                l_ntp = sum(ntp_terms) / len(ntp_terms)
                zero = torch.zeros((), dtype=torch.float64)
                l_intra = l_inter = penalty = zero
                if temporal_active:
                    part = partition(labeled)
                    if part.n_vectors > 0:
                        l_intra, l_inter, l_t = intra_inter_loss(part, cfg.delta)
                    else:
                        l_t = zero
                    if cfg.ewc_lambda > 0:
                        penalty = ewc_penalty(leaves, anchor, fisher, cfg.ewc_lambda)
                    loss = final_loss(l_ntp, l_t + penalty, cfg.sigma)
                else:
                    loss = l_ntp
                if not bool(torch.isfinite(loss)):
                    return TrainResult(
                        params=snapshot, metrics=metrics, aborted=True, steps=steps_done
                    )
                (loss / len(group)).backward()
                sums["l_ntp"] += float(l_ntp.detach())
                sums["l_intra"] += float(l_intra.detach())
                sums["l_inter"] += float(l_inter.detach())
                sums["ewc_penalty"] += float(penalty.detach())
                sums["l_final"] += float(loss.detach())
                n_micro += 1
            with torch.no_grad():
                updated = {}
                for name, t in leaves.items():
                    if name in trainable and t.grad is not None:
                        updated[name] = (t - cfg.learning_rate * t.grad).detach()
                    else:
                        updated[name] = t.detach()
                params = ParameterSet(updated)
            steps_done += 1
        row = {"epoch": epoch}
        row.update({k: v / n_micro for k, v in sums.items()})
        metrics.append(row)
        snapshot = params.clone()
    return TrainResult(params=params, metrics=metrics, aborted=False, steps=steps_done)


def write_metrics_csv(metrics: list[dict], path) -> None:
    """Per-epoch loss-term CSV; floats use repr so reruns match bytewise."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRIC_FIELDS)
        for row in metrics:
            writer.writerow(
                [row["epoch"]] + [repr(float(row[k])) for k in METRIC_FIELDS[1:]]
            )
